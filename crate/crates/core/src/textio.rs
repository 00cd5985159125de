//! Text serialization helpers.

/// Format a float with 17 significant digits, enough for a bit-exact
/// round-trip through text.
pub fn fmt_f64(x: f64) -> String {
    format!("{:.16e}", x)
}

pub fn parse_f64(s: &str) -> Option<f64> {
    s.trim().parse::<f64>().ok()
}
