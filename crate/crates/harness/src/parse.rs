use probe_core::Task;

/// The last `[integer]` in `text`, if it lies in the task's answer range.
/// A later out-of-range bracket wins over an earlier valid one.
pub fn parse_bracketed_answer(text: &str, task: Task) -> Option<i64> {
    let value = last_bracketed_integer(text)?;
    let (lo, hi) = task.answer_range();
    (lo..=hi).contains(&value).then_some(value)
}

fn last_bracketed_integer(text: &str) -> Option<i64> {
    let mut found = None;
    let mut rest = text;
    while let Some(open) = rest.find('[') {
        let after = &rest[open + 1..];
        if let Some(close) = after.find(']') {
            let inner = after[..close].trim();
            if let Some(v) = parse_int(inner) {
                found = Some(v);
            }
        }
        rest = after;
    }
    found
}

fn parse_int(s: &str) -> Option<i64> {
    let digits = s.strip_prefix(['-', '+']).unwrap_or(s);
    if digits.is_empty() || !digits.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    // saturate huge values so they read as out of range rather than absent
    Some(s.parse::<i64>().unwrap_or(if s.starts_with('-') { i64::MIN } else { i64::MAX }))
}
