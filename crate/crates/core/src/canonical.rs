//! Canonical JSON encoding.
//!
//! Every JSON document this crate writes (COCO files, log lines, HTTP bodies)
//! goes through [`to_vec`]. Objects are emitted compactly with keys in the
//! declaration order of the Rust type; free-form maps are `BTreeMap`s and so
//! come out sorted. Numbers follow one rule: a finite `f64` with no fractional
//! part (and magnitude below 2^53) is written as an integer, anything else uses
//! the shortest representation that round-trips.

use std::io;

use serde::Serialize;
use serde_json::ser::Formatter;

/// Largest magnitude at which every integer is exactly representable in f64.
const EXACT_INT_LIMIT: f64 = 9_007_199_254_740_992.0;

#[derive(Debug, Clone, Copy, Default)]
pub struct CanonicalFormatter;

impl Formatter for CanonicalFormatter {
    fn write_f64<W>(&mut self, writer: &mut W, value: f64) -> io::Result<()>
    where
        W: ?Sized + io::Write,
    {
        write_number(writer, value)
    }

    fn write_f32<W>(&mut self, writer: &mut W, value: f32) -> io::Result<()>
    where
        W: ?Sized + io::Write,
    {
        write_number(writer, f64::from(value))
    }
}

fn write_number<W: ?Sized + io::Write>(writer: &mut W, value: f64) -> io::Result<()> {
    if value.fract() == 0.0 && value.abs() < EXACT_INT_LIMIT {
        // also folds -0.0 into 0
        write!(writer, "{}", value as i64)
    } else {
        writer.write_all(shortest_repr(value).as_bytes())
    }
}

// serde_json's own float printing is shortest-round-trip; reuse it through Value.
fn shortest_repr(value: f64) -> String {
    serde_json::Value::from(value).to_string()
}

/// Serializes `value` as canonical JSON bytes.
pub fn to_vec<T: Serialize + ?Sized>(value: &T) -> serde_json::Result<Vec<u8>> {
    let mut out = Vec::with_capacity(256);
    let mut ser = serde_json::Serializer::with_formatter(&mut out, CanonicalFormatter);
    value.serialize(&mut ser)?;
    Ok(out)
}

/// Serializes `value` as a canonical JSON string.
pub fn to_string<T: Serialize + ?Sized>(value: &T) -> serde_json::Result<String> {
    // the formatter only ever emits UTF-8
    to_vec(value).map(|v| String::from_utf8(v).expect("canonical JSON is UTF-8"))
}

/// Re-encodes arbitrary JSON text in canonical form.
pub fn canonicalize(text: &[u8]) -> serde_json::Result<Vec<u8>> {
    let value: serde_json::Value = serde_json::from_slice(text)?;
    to_vec(&value)
}

/// Converts a serde_json error position (1-based line and column) into a byte
/// offset within `text`.
pub fn byte_offset(text: &[u8], line: usize, column: usize) -> usize {
    if line == 0 {
        return 0;
    }
    let mut offset = 0usize;
    let mut current = 1usize;
    for (i, b) in text.iter().enumerate() {
        if current == line {
            offset = i;
            break;
        }
        if *b == b'\n' {
            current += 1;
            offset = i + 1;
        }
    }
    (offset + column.saturating_sub(1)).min(text.len())
}
