use serde::Serialize;
use sha2::{Digest, Sha256};

/// Hex SHA-256 of a value's canonical JSON form (object keys sorted).
pub(crate) fn canonical_digest<T: Serialize + ?Sized>(value: &T) -> String {
    // serde_json::Value keeps objects in a BTreeMap, so a round trip
    // through Value sorts keys regardless of struct field order.
    let value = serde_json::to_value(value).expect("serializable value");
    sha256_hex(value.to_string().as_bytes())
}

pub(crate) fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Lowercase ASCII slug: alphanumerics kept, every other run collapsed to `-`.
pub(crate) fn slugify(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    let mut dash = false;
    for ch in text.chars() {
        if ch.is_ascii_alphanumeric() {
            out.push(ch.to_ascii_lowercase());
            dash = false;
        } else if !dash && !out.is_empty() {
            out.push('-');
            dash = true;
        }
    }
    while out.ends_with('-') {
        out.pop();
    }
    if out.is_empty() {
        out.push('x');
    }
    out
}

/// Mean and sample standard deviation (n - 1 denominator; 0 for n < 2).
pub(crate) fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}


/// Text between a `BEGIN_JSON` line and the next `END_JSON` line. Falls
/// back to a ```json fenced block, then to the whole reply.
pub(crate) fn json_block(reply: &str) -> &str {
    if let Some(start) = reply.find("BEGIN_JSON") {
        let body = &reply[start + "BEGIN_JSON".len()..];
        let end = body.find("END_JSON").unwrap_or(body.len());
        return body[..end].trim();
    }
    if let Some(start) = reply.find("```json") {
        let body = &reply[start + "```json".len()..];
        let end = body.find("```").unwrap_or(body.len());
        return body[..end].trim();
    }
    reply.trim()
}
