use std::fmt::Write;

use serde::Serialize;

use super::IterationRecord;

/// Detection threshold of the competition rule: a bypass is a score
/// strictly below 0.5.
pub const DEFAULT_THRESHOLD: f64 = 0.5;
pub const DEFAULT_BUCKET_SIZE: u64 = 50;
pub const DEFAULT_TOP_K: usize = 5;

pub const CSV_HEADER: &str = "bucket_start,bucket_end,bypass_count";

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Bucket {
    pub start: u64,
    /// Inclusive.
    pub end: u64,
    pub bypass_count: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Totals {
    pub iterations: u64,
    pub bypasses: u64,
    pub skipped: u64,
    pub bypass_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BestPrompt {
    pub i: u64,
    pub score: f64,
    pub prompt: String,
}

/// Bypass counts per round bucket, recomputed from log records.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CampaignReport {
    pub bucket_size: u64,
    pub threshold: f64,
    pub buckets: Vec<Bucket>,
    pub totals: Totals,
    pub best: Vec<BestPrompt>,
}

/// Scored records sorted by score, ties by iteration; at most `n`.
pub fn lowest_scores(records: &[IterationRecord], n: usize) -> Vec<BestPrompt> {
    let mut scored: Vec<BestPrompt> = records
        .iter()
        .filter_map(|r| {
            r.score.map(|score| BestPrompt {
                i: r.i,
                score,
                prompt: r.prompt.clone(),
            })
        })
        .collect();
    scored.sort_by(|a, b| a.score.total_cmp(&b.score).then(a.i.cmp(&b.i)));
    scored.truncate(n);
    scored
}

impl CampaignReport {
    /// Buckets tile `[0, iterations)` where `iterations` is one past the
    /// largest logged index; the last bucket may be short. Bypass is
    /// `score < threshold`; skipped rounds count as rounds, never as
    /// bypasses.
    pub fn from_records(records: &[IterationRecord], bucket_size: u64, threshold: f64, top_k: usize) -> Self {
        assert!(bucket_size >= 1, "bucket size must be at least 1");
        let iterations = records.iter().map(|r| r.i + 1).max().unwrap_or(0);
        let mut buckets: Vec<Bucket> = (0..iterations)
            .step_by(bucket_size as usize)
            .map(|start| Bucket {
                start,
                end: (start + bucket_size).min(iterations) - 1,
                bypass_count: 0,
            })
            .collect();
        let mut bypasses = 0;
        let mut skipped = 0;
        for r in records {
            match r.score {
                Some(s) if s < threshold => {
                    buckets[(r.i / bucket_size) as usize].bypass_count += 1;
                    bypasses += 1;
                }
                Some(_) => {}
                None => skipped += 1,
            }
        }
        let bypass_rate = if iterations == 0 {
            0.0
        } else {
            bypasses as f64 / iterations as f64
        };
        CampaignReport {
            bucket_size,
            threshold,
            buckets,
            totals: Totals {
                iterations,
                bypasses,
                skipped,
                bypass_rate,
            },
            best: lowest_scores(records, top_k),
        }
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(CSV_HEADER);
        out.push('\n');
        for b in &self.buckets {
            let _ = writeln!(out, "{},{},{}", b.start, b.end, b.bypass_count);
        }
        out
    }

    /// Round / Count table followed by totals and the lowest-scoring
    /// prompts.
    pub fn to_text(&self) -> String {
        let rounds: Vec<String> = self.buckets.iter().map(|b| format!("{}-{}", b.start, b.end)).collect();
        let width = rounds.iter().map(String::len).max().unwrap_or(0).max("Round".len());
        let mut out = String::new();
        let _ = writeln!(
            out,
            "Bypass counts (score < {}, {} rounds per bucket)",
            self.threshold, self.bucket_size
        );
        let _ = writeln!(out, "{:<width$}  {:>5}", "Round", "Count");
        let _ = writeln!(out, "{}  {}", "-".repeat(width), "-----");
        for (round, b) in rounds.iter().zip(&self.buckets) {
            let _ = writeln!(out, "{round:<width$}  {:>5}", b.bypass_count);
        }
        let t = &self.totals;
        let _ = writeln!(
            out,
            "\nTotal: {} bypasses in {} rounds ({:.2}%), {} skipped",
            t.bypasses,
            t.iterations,
            t.bypass_rate * 100.0,
            t.skipped
        );
        if !self.best.is_empty() {
            let _ = writeln!(out, "\nLowest scores:");
            for b in &self.best {
                let _ = writeln!(out, "  #{:<6} {:.4}  {}", b.i, b.score, b.prompt);
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(i: u64, score: f64) -> IterationRecord {
        IterationRecord::scored(i, format!("p{i}"), score, 2.0 * (1.0 - score), score < 0.5, "t".into(), "s".into())
    }

    #[test]
    fn table_one_shape() {
        let records: Vec<_> = (0..200).map(|i| rec(i, 0.9)).collect();
        let r = CampaignReport::from_records(&records, 50, 0.5, 0);
        let spans: Vec<(u64, u64)> = r.buckets.iter().map(|b| (b.start, b.end)).collect();
        assert_eq!(spans, vec![(0, 49), (50, 99), (100, 149), (150, 199)]);
    }

    #[test]
    fn table_two_shape() {
        let records: Vec<_> = (0..400).map(|i| rec(i, 0.9)).collect();
        let r = CampaignReport::from_records(&records, 100, 0.5, 0);
        let spans: Vec<(u64, u64)> = r.buckets.iter().map(|b| (b.start, b.end)).collect();
        assert_eq!(spans, vec![(0, 99), (100, 199), (200, 299), (300, 399)]);
    }

    #[test]
    fn alternating_scores() {
        let records: Vec<_> = (0..200).map(|i| rec(i, if i % 2 == 0 { 0.4 } else { 0.6 })).collect();
        let r = CampaignReport::from_records(&records, 50, 0.5, 0);
        assert!(r.buckets.iter().all(|b| b.bypass_count == 25));
        assert_eq!(r.totals.bypasses, 100);
    }

    #[test]
    fn threshold_is_strict() {
        let r = CampaignReport::from_records(&[rec(0, 0.5)], 50, 0.5, 0);
        assert_eq!(r.totals.bypasses, 0);
    }

    #[test]
    fn short_last_bucket_and_skips() {
        let mut records: Vec<_> = (0..7).map(|i| rec(i, 0.1)).collect();
        records[2] = IterationRecord::skipped(2, "p2".into(), "err".into(), "t".into(), "s".into());
        let r = CampaignReport::from_records(&records, 5, 0.5, 0);
        assert_eq!(r.to_csv(), "bucket_start,bucket_end,bypass_count\n0,4,4\n5,6,2\n");
        assert_eq!(r.totals.skipped, 1);
        assert_eq!(r.totals.iterations, 7);
    }

    #[test]
    fn empty_log() {
        let r = CampaignReport::from_records(&[], 50, 0.5, 5);
        assert!(r.buckets.is_empty());
        assert_eq!(r.to_csv(), format!("{CSV_HEADER}\n"));
        assert_eq!(r.totals.bypass_rate, 0.0);
    }

    #[test]
    fn lowest_scores_tie_break() {
        let records = vec![rec(0, 0.9), rec(7, 0.2), rec(3, 0.2), rec(5, 0.5)];
        let best = lowest_scores(&records, 3);
        assert_eq!(best.iter().map(|b| b.i).collect::<Vec<_>>(), vec![3, 7, 5]);
        assert!(lowest_scores(&records, 0).is_empty());
        assert_eq!(lowest_scores(&records, 99).len(), 4);
    }

    #[test]
    fn text_layout() {
        let records: Vec<_> = (0..100).map(|i| rec(i, if i == 60 { 0.3 } else { 0.9 })).collect();
        let text = CampaignReport::from_records(&records, 50, 0.5, 1).to_text();
        assert!(text.contains("Round  Count\n"));
        assert!(text.contains("0-49       0\n"));
        assert!(text.contains("50-99      1\n"));
        assert!(text.contains("#60     0.3000  p60"));
    }
}
