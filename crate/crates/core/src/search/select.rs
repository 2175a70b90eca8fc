use rand::Rng;

use super::SearchState;
use crate::grammar::Symbol;

/// Exploration constant inside the square root of the UCB weight.
pub const DEFAULT_EXPLORATION: f64 = 2.0;

/// Total weight at or below this is treated as zero and sampling falls back
/// to uniform.
pub const ZERO_WEIGHT_EPSILON: f64 = 1e-12;

/// Upper-confidence weight of an OR edge:
/// `q_mean + sqrt(2 ln(n_node) / n_edge)`.
///
/// Unvisited edges never get here; selection picks them first.
pub fn ucb_weight(q_mean: f64, n_node: u64, n_edge: u64) -> f64 {
    ucb_weight_with(DEFAULT_EXPLORATION, q_mean, n_node, n_edge)
}

/// [`ucb_weight`] with an explicit exploration constant in place of 2.
pub fn ucb_weight_with(exploration: f64, q_mean: f64, n_node: u64, n_edge: u64) -> f64 {
    assert!(n_node >= 1, "ucb_weight needs a visited parent (n_node = {n_node})");
    assert!(n_edge >= 1, "ucb_weight needs a visited edge (n_edge = {n_edge})");
    q_mean + (exploration * (n_node as f64).ln() / n_edge as f64).sqrt()
}

/// Draws index `i` with probability `weights[i] / sum(weights)`.
///
/// Falls back to a uniform draw when the total is at most
/// [`ZERO_WEIGHT_EPSILON`]. Panics on an empty slice.
pub fn weighted_index<R: Rng + ?Sized>(weights: &[f64], rng: &mut R) -> usize {
    assert!(!weights.is_empty(), "weighted_index over no weights");
    let total: f64 = weights.iter().sum();
    if !(total > ZERO_WEIGHT_EPSILON) {
        return rng.random_range(0..weights.len());
    }
    let target = rng.random::<f64>() * total;
    let mut acc = 0.0;
    let mut last_positive = 0;
    for (i, &w) in weights.iter().enumerate() {
        if w > 0.0 {
            acc += w;
            last_positive = i;
            if target < acc {
                return i;
            }
        }
    }
    // rounding left target at the very top of the range
    last_positive
}

/// UCT-Rand child selection for an OR rule.
///
/// An alternative whose edge has never been credited is chosen first
/// (uniformly among such alternatives). Once every alternative has been
/// visited, one is drawn with probability proportional to its UCB weight;
/// the draw is random, not an argmax.
pub fn select_child<'a, R: Rng + ?Sized>(
    rule: &str,
    alternatives: &'a [Symbol],
    state: &SearchState,
    rng: &mut R,
    exploration: f64,
) -> &'a Symbol {
    assert!(!alternatives.is_empty(), "OR rule `{rule}` has no alternatives");
    let unvisited: Vec<&Symbol> = alternatives
        .iter()
        .filter(|alt| state.edge(rule, alt).n_edge == 0)
        .collect();
    if !unvisited.is_empty() {
        return unvisited[rng.random_range(0..unvisited.len())];
    }
    let n_node = state.node(rule).n_node;
    let weights: Vec<f64> = alternatives
        .iter()
        .map(|alt| {
            let e = state.edge(rule, alt);
            ucb_weight_with(exploration, e.q_mean, n_node, e.n_edge)
        })
        .collect();
    &alternatives[weighted_index(&weights, rng)]
}

/// Uniform repetition count in `min..=max`.
pub fn rand_count<R: Rng + ?Sized>(min: u32, max: u32, rng: &mut R) -> u32 {
    assert!(min <= max, "rand_count with min {min} > max {max}");
    rng.random_range(min..=max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn ucb_trivial_cases() {
        assert_eq!(ucb_weight(0.0, 1, 1), 0.0);
        assert_eq!(ucb_weight(2.0, 1, 1), 2.0);
    }

    #[test]
    fn ucb_known_value() {
        // 1 + sqrt(2 ln 8 / 2) = 1 + sqrt(ln 8), ln 8 = 2.0794415416798357
        approx::assert_abs_diff_eq!(ucb_weight(1.0, 8, 2), 2.442026886600883, epsilon = 1e-9);
    }

    #[test]
    fn exploration_override() {
        assert_eq!(ucb_weight_with(0.0, 0.7, 50, 3), 0.7);
        let w = ucb_weight_with(8.0, 0.0, 8, 2);
        approx::assert_abs_diff_eq!(w, (4.0 * 8f64.ln()).sqrt(), epsilon = 1e-12);
    }

    #[test]
    #[should_panic(expected = "visited edge")]
    fn ucb_rejects_unvisited_edge() {
        ucb_weight(0.0, 3, 0);
    }

    #[test]
    fn unvisited_first() {
        let mut state = SearchState::default();
        let alts = [Symbol::terminal("a"), Symbol::terminal("b")];
        state.credit_edge("R", &alts[0], 1.5, 1);
        state.credit_node("R", 1);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..200 {
            assert_eq!(select_child("R", &alts, &state, &mut rng, DEFAULT_EXPLORATION), &alts[1]);
        }
    }

    #[test]
    fn zero_weights_fall_back_to_uniform() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut counts = [0usize; 4];
        for _ in 0..40_000 {
            counts[weighted_index(&[0.0; 4], &mut rng)] += 1;
        }
        for c in counts {
            // 3 sigma of binomial(40000, 1/4) is ~260
            assert!((c as i64 - 10_000).abs() < 260, "{counts:?}");
        }
    }

    #[test]
    fn zero_weight_entries_are_never_drawn() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..10_000 {
            assert_ne!(weighted_index(&[1.0, 0.0, 3.0], &mut rng), 1);
        }
    }

    #[test]
    fn degenerate_rand_range() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!((0..100).all(|_| rand_count(2, 2, &mut rng) == 2));
        assert!((0..1000).any(|_| rand_count(0, 1, &mut rng) == 0));
    }
}
