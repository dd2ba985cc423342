//! Number rendering shared by JSON, CSV and pretty output.

use serde::Serializer;

/// Shortest round-trip decimal, with `inf`, `-inf` and `nan` spelled out.
pub fn real(x: f64) -> String {
    if x.is_nan() {
        "nan".into()
    } else if x == f64::INFINITY {
        "inf".into()
    } else if x == f64::NEG_INFINITY {
        "-inf".into()
    } else if x == 0.0 || (1e-4..1e15).contains(&x.abs()) {
        format!("{x}")
    } else {
        format!("{x:e}")
    }
}

/// Serde adapter: finite values as numbers, non-finite ones as strings.
pub fn serialize_real<S: Serializer>(x: &f64, s: S) -> Result<S::Ok, S::Error> {
    if x.is_finite() {
        s.serialize_f64(*x)
    } else {
        s.serialize_str(&real(*x))
    }
}
