//! CSV formatting shared by every exporter.

use crate::scalar::Scalar;

/// Shortest-free decimal rendering with 17 significant digits.
pub fn fmt_float<S: Scalar>(x: S) -> String {
    format!("{:.16e}", x.as_f64())
}
