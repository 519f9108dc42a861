//! JSON Lines helpers. Artifacts may open with a `{"__header__":{...}}` line
//! carrying run metadata; readers skip it.

use std::io::{self, BufRead, Write};

use serde::de::DeserializeOwned;
use serde::Serialize;

const HEADER_KEY: &str = "__header__";

pub fn is_header(line: &str) -> bool {
    line.trim_start().starts_with(&format!("{{\"{HEADER_KEY}\""))
}

pub fn write_header<W: Write>(out: &mut W, seed: u64, artifact: &str) -> io::Result<()> {
    let header = serde_json::json!({ HEADER_KEY: { "seed": seed, "artifact": artifact } });
    writeln!(out, "{header}")
}

pub fn write_record<W: Write, T: Serialize>(out: &mut W, record: &T) -> io::Result<()> {
    serde_json::to_writer(&mut *out, record)?;
    out.write_all(b"\n")
}

/// Reads every non-header, non-blank line as `T`.
pub fn read_all<R: BufRead, T: DeserializeOwned>(input: R) -> io::Result<Vec<T>> {
    let mut out = Vec::new();
    for (n, line) in input.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() || is_header(&line) {
            continue;
        }
        let value = serde_json::from_str(&line).map_err(|e| {
            io::Error::new(io::ErrorKind::InvalidData, format!("line {}: {e}", n + 1))
        })?;
        out.push(value);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_is_skipped() {
        let mut buf = Vec::new();
        write_header(&mut buf, 7, "test").unwrap();
        write_record(&mut buf, &serde_json::json!({"x": 1})).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(is_header(text.lines().next().unwrap()));
        let values: Vec<serde_json::Value> = read_all(text.as_bytes()).unwrap();
        assert_eq!(values, vec![serde_json::json!({"x": 1})]);
    }
}
