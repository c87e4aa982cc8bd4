//! Number formatting for CSV and terminal output.

/// 17 significant digits; parses back to the identical `f64`.
pub fn full(x: f64) -> String {
    format!("{x:.16e}")
}

/// 6 significant digits for the human-readable summary.
pub fn short(x: f64) -> String {
    if x == 0.0 || !x.is_finite() {
        return format!("{x}");
    }
    let magnitude = x.abs().log10().floor() as i32;
    if (-4..6).contains(&magnitude) {
        let decimals = (5 - magnitude).max(0) as usize;
        format!("{x:.decimals$}")
    } else {
        format!("{x:.5e}")
    }
}
