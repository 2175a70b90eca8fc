use serde_json::Value;

/// Resolves a dot-separated path such as `output.results.0.url`. Numeric
/// segments index into arrays. An empty path selects the whole value.
pub fn select_json<'a>(value: &'a Value, path: &str) -> Option<&'a Value> {
    if path.is_empty() {
        return Some(value);
    }
    path.split('.').try_fold(value, |v, segment| match v {
        Value::Object(map) => map.get(segment),
        Value::Array(items) => segment.parse::<usize>().ok().and_then(|i| items.get(i)),
        _ => None,
    })
}
