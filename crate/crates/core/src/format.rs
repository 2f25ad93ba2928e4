//! Output formatting shared by every file writer: floats carry 17 significant digits.

use std::io;

use serde::Serialize;
use serde_json::ser::Formatter;

/// `{:.16e}` rendering, which round-trips every finite `f64`.
pub fn fmt_f64(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.16e}")
    } else if v.is_nan() {
        "NaN".to_string()
    } else if v > 0.0 {
        "inf".to_string()
    } else {
        "-inf".to_string()
    }
}

/// Compact JSON formatter writing floats with 17 significant digits.
#[derive(Clone, Copy, Debug, Default)]
pub struct Sig17;

impl Formatter for Sig17 {
    fn write_f64<W: ?Sized + io::Write>(&mut self, writer: &mut W, value: f64) -> io::Result<()> {
        write!(writer, "{value:.16e}")
    }

    fn write_f32<W: ?Sized + io::Write>(&mut self, writer: &mut W, value: f32) -> io::Result<()> {
        write!(writer, "{:.16e}", value as f64)
    }
}

/// Serializes `value` to compact JSON with [`Sig17`] float formatting.
pub fn to_json<T: Serialize + ?Sized>(value: &T) -> serde_json::Result<String> {
    let mut buf = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut buf, Sig17);
    value.serialize(&mut ser)?;
    Ok(String::from_utf8(buf).expect("serde_json emits utf-8"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seventeen_digits_roundtrip() {
        let xs = [0.1, 1.0 / 3.0, -2.5e-300, 6.02214076e23, 0.0];
        let s = to_json(&xs).unwrap();
        assert!(s.contains("1.0000000000000001e-1"));
        let back: Vec<f64> = serde_json::from_str(&s).unwrap();
        assert_eq!(back, xs);
    }

    #[test]
    fn parser_reads_every_written_value_exactly() {
        // the fast default parser is off by one ulp here
        let x = 1e-6;
        assert_eq!(fmt_f64(x), "9.9999999999999995e-7");
        let back: f64 = serde_json::from_str(&to_json(&x).unwrap()).unwrap();
        assert_eq!(back.to_bits(), x.to_bits());
    }

    #[test]
    fn non_finite() {
        assert_eq!(to_json(&[f64::NAN]).unwrap(), "[null]");
        assert_eq!(fmt_f64(f64::INFINITY), "inf");
    }
}
