//! Number and time formatting shared by the file writers and reports.

/// Formats a real with at least six decimals, using more only when six would
/// not round-trip exactly.
pub fn fmt_real(x: f64) -> String {
    let fixed = format!("{x:.6}");
    if fixed.parse::<f64>().ok() == Some(x) {
        return fixed;
    }
    let shortest = x.to_string();
    match shortest.split_once('.') {
        Some((_, frac)) if frac.len() >= 6 => shortest,
        // Only reachable for values whose shortest form has fewer than six
        // decimals, which the fixed form would already have represented.
        _ => fixed,
    }
}

/// Renders seconds as `HH:MM:SS.mmm`.
pub fn fmt_hms(seconds: f64) -> String {
    let total_ms = (seconds.max(0.0) * 1000.0).round() as u64;
    let ms = total_ms % 1000;
    let s = (total_ms / 1000) % 60;
    let m = (total_ms / 60_000) % 60;
    let h = total_ms / 3_600_000;
    format!("{h:02}:{m:02}:{s:02}.{ms:03}")
}
