//! Canonical text form of JSON reports.

use std::io;
use std::path::Path;

/// Pretty-printed JSON with a trailing newline. Object keys come out in a
/// fixed order and floats in shortest round-trip form, so equal reports
/// render to identical bytes.
pub fn render(value: &serde_json::Value) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("JSON values always serialize");
    s.push('\n');
    s
}

/// Writes the rendered report to `path`, or to stdout when absent.
pub fn emit(value: &serde_json::Value, path: Option<&Path>) -> io::Result<()> {
    let text = render(value);
    match path {
        Some(p) => std::fs::write(p, text),
        None => {
            use io::Write;
            let mut out = io::stdout().lock();
            out.write_all(text.as_bytes())?;
            out.flush()
        }
    }
}
