//! CSV and manifest output helpers.
//!
//! All artifacts use `.` as decimal separator, LF line endings, UTF-8, and
//! 17 significant digits for floating-point fields.

use sha2::{Digest, Sha256};
use std::io::Write;
use std::path::Path;

/// Format a float with 17 significant digits, locale-independent.
pub fn fmt_float(x: f64) -> String {
    format!("{x:.16e}")
}

/// SHA-256 of a byte slice as lowercase hex.
pub fn sha256_hex(bytes: &[u8]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(bytes);
    let digest = hasher.finalize();
    let mut out = String::with_capacity(64);
    for b in digest {
        out.push_str(&format!("{b:02x}"));
    }
    out
}

/// Write `content` to `path` and return its SHA-256.
pub fn write_artifact(path: &Path, content: &[u8]) -> std::io::Result<String> {
    let mut f = std::fs::File::create(path)?;
    f.write_all(content)?;
    Ok(sha256_hex(content))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn float_formatting_round_trips() {
        let x = 0.1234567890123456789;
        let s = fmt_float(x);
        let y: f64 = s.parse().unwrap();
        assert_eq!(x, y);
    }

    #[test]
    fn sha256_known_value() {
        // SHA-256("abc")
        assert_eq!(
            sha256_hex(b"abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }
}
