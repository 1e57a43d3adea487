//! JSON persistence helpers. Floats are always written with 17 significant
//! digits (`{:.16e}`), which round-trips every finite f64 exactly and keeps
//! artifact files byte-stable across runs.

use std::fs;
use std::io::{self, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::ser::Formatter;

use crate::error::{Error, Result};

/// Formats a float with 17 significant digits, e.g. `1.2500000000000000e-1`.
pub fn fmt_f64(value: f64) -> String {
    format!("{value:.16e}")
}

struct SigDigitFormatter;

impl Formatter for SigDigitFormatter {
    fn write_f64<W>(&mut self, writer: &mut W, value: f64) -> io::Result<()>
    where
        W: ?Sized + Write,
    {
        if !value.is_finite() {
            return Err(io::Error::new(
                io::ErrorKind::InvalidData,
                "non-finite float in serialized value",
            ));
        }
        write!(writer, "{value:.16e}")
    }

    fn write_f32<W>(&mut self, writer: &mut W, value: f32) -> io::Result<()>
    where
        W: ?Sized + Write,
    {
        self.write_f64(writer, value as f64)
    }
}

/// Serializes to a JSON string with 17-significant-digit floats.
pub fn to_string<T: Serialize>(value: &T) -> Result<String> {
    let mut out = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut out, SigDigitFormatter);
    value
        .serialize(&mut ser)
        .map_err(|e| Error::malformed(format!("serialize failed: {e}")))?;
    String::from_utf8(out).map_err(|e| Error::malformed(format!("non-utf8 json: {e}")))
}

pub fn from_str<T: DeserializeOwned>(text: &str) -> Result<T> {
    serde_json::from_str(text).map_err(|e| Error::malformed(e.to_string()))
}

pub fn write_file<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = to_string(value)?;
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent)?;
        }
    }
    fs::write(path, text.as_bytes())?;
    Ok(())
}

pub fn read_file<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path)?;
    check_version_field(&text, None)?;
    from_str(&text).map_err(|e| match e {
        Error::MalformedFile(msg) => Error::malformed(format!("{}: {msg}", path.display())),
        other => other,
    })
}

/// Reads a JSON document that must carry `format_version == expected`.
/// An unknown version is reported as [`Error::FormatVersion`]; any other
/// parse problem as [`Error::MalformedFile`].
pub fn read_versioned<T: DeserializeOwned>(path: &Path, expected: u32) -> Result<T> {
    let text = fs::read_to_string(path)?;
    check_version_field(&text, Some(expected))?;
    from_str(&text).map_err(|e| match e {
        Error::MalformedFile(msg) => Error::malformed(format!("{}: {msg}", path.display())),
        other => other,
    })
}

/// Version check against a raw JSON string (used for JSONL headers too).
pub fn check_version_str(text: &str, expected: u32) -> Result<()> {
    check_version_field(text, Some(expected))
}

fn check_version_field(text: &str, expected: Option<u32>) -> Result<()> {
    let Some(expected) = expected else {
        return Ok(());
    };
    let value: serde_json::Value =
        serde_json::from_str(text).map_err(|e| Error::malformed(e.to_string()))?;
    match value.get("format_version").and_then(|v| v.as_u64()) {
        Some(found) if found as u32 == expected => Ok(()),
        Some(found) => Err(Error::FormatVersion {
            found: found as u32,
            expected,
        }),
        None => Err(Error::malformed("missing format_version field")),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde::Deserialize;

    #[derive(Serialize, Deserialize, PartialEq, Debug)]
    struct Blob {
        format_version: u32,
        xs: Vec<f64>,
    }

    #[test]
    fn floats_round_trip_exactly() {
        let blob = Blob {
            format_version: 1,
            xs: vec![
                0.1,
                -1.0 / 3.0,
                std::f64::consts::PI,
                1e-300,
                -2.2250738585072014e-308,
                123456789.123456789,
                0.0,
                -0.0,
            ],
        };
        let text = to_string(&blob).unwrap();
        let back: Blob = from_str(&text).unwrap();
        for (a, b) in blob.xs.iter().zip(&back.xs) {
            assert_eq!(a.to_bits(), b.to_bits(), "{a} did not round-trip");
        }
    }

    #[test]
    fn seventeen_digits_written() {
        let text = to_string(&vec![0.25f64]).unwrap();
        assert_eq!(text, "[2.5000000000000000e-1]");
    }

    #[test]
    fn version_mismatch_is_distinct_from_malformed() {
        let dir = std::env::temp_dir().join("facemimic_jsonio_test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("blob.json");
        std::fs::write(&path, "{\"format_version\": 99, \"xs\": []}").unwrap();
        match read_versioned::<Blob>(&path, 1) {
            Err(Error::FormatVersion { found: 99, expected: 1 }) => {}
            other => panic!("expected version error, got {other:?}"),
        }
        std::fs::write(&path, "{\"format_version\": 1, \"xs\": [").unwrap();
        match read_versioned::<Blob>(&path, 1) {
            Err(Error::MalformedFile(_)) => {}
            other => panic!("expected malformed error, got {other:?}"),
        }
    }
}
