//! Pulling structured output out of free-form completions.

use serde_json::Value;

/// The first balanced `{...}` block in `text`. Braces inside JSON string
/// literals do not count toward the balance.
pub fn first_brace_block(text: &str) -> Option<&str> {
    let start = text.find('{')?;
    let mut depth = 0usize;
    let mut in_string = false;
    let mut escaped = false;
    for (i, c) in text[start..].char_indices() {
        if in_string {
            match c {
                _ if escaped => escaped = false,
                '\\' => escaped = true,
                '"' => in_string = false,
                _ => {}
            }
            continue;
        }
        match c {
            '"' => in_string = true,
            '{' => depth += 1,
            '}' => {
                depth -= 1;
                if depth == 0 {
                    return Some(&text[start..start + i + 1]);
                }
            }
            _ => {}
        }
    }
    None
}

/// First balanced block parsed as a JSON object.
pub fn first_json_object(text: &str) -> Result<serde_json::Map<String, Value>, String> {
    let block = first_brace_block(text).ok_or_else(|| "no brace-delimited block found".to_string())?;
    match serde_json::from_str::<Value>(block) {
        Ok(Value::Object(map)) => Ok(map),
        Ok(_) => Err("block is not a JSON object".into()),
        Err(e) => Err(format!("block is not valid JSON: {e}")),
    }
}

/// Case-insensitive key lookup; model output is inconsistent about `Scenario` vs `scenario`.
pub fn get_ci<'a>(map: &'a serde_json::Map<String, Value>, key: &str) -> Option<&'a Value> {
    map.get(key)
        .or_else(|| map.iter().find(|(k, _)| k.eq_ignore_ascii_case(key)).map(|(_, v)| v))
}
