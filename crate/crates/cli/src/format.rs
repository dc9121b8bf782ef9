//! Number formatting and duration parsing.

/// `x` with 12 significant digits, trailing zeros removed, `.` as decimal
/// separator. Very small or large magnitudes switch to exponent notation.
pub fn sig12(x: f64) -> String {
    if x == 0.0 {
        return "0".into();
    }
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    let exponent = x.abs().log10().floor() as i32;
    if !(-5..15).contains(&exponent) {
        return format!("{x:.11e}");
    }
    let decimals = (11 - exponent).max(0) as usize;
    let mut s = format!("{x:.decimals$}");
    if s.contains('.') {
        let trimmed = s.trim_end_matches('0').trim_end_matches('.').len();
        s.truncate(trimmed);
    }
    s
}

pub fn opt(x: Option<f64>) -> String {
    x.map(sig12).unwrap_or_default()
}

/// Seconds in `"30d"`, `"12h"`, `"90m"`, `"3600s"` or a bare number of seconds.
pub fn parse_duration(text: &str) -> Result<f64, String> {
    let text = text.trim();
    let (number, unit) = match text.char_indices().last() {
        Some((i, c)) if c.is_ascii_alphabetic() => (&text[..i], c),
        _ => (text, 's'),
    };
    let scale = match unit {
        's' => 1.0,
        'm' => 60.0,
        'h' => 3_600.0,
        'd' => 86_400.0,
        _ => return Err(format!("unknown duration unit {unit:?} in {text:?}")),
    };
    let value: f64 = number.parse().map_err(|_| format!("invalid duration {text:?}"))?;
    if !(value.is_finite() && value > 0.0) {
        return Err(format!("duration must be positive, got {text:?}"));
    }
    Ok(value * scale)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn significant_digits() {
        assert_eq!(sig12(0.35), "0.35");
        assert_eq!(sig12(52.9), "52.9");
        assert_eq!(sig12(1.0 / 3.0), "0.333333333333");
        assert_eq!(sig12(13403.045495128343), "13403.0454951");
        assert_eq!(sig12(18.0), "18");
        assert_eq!(sig12(1e-9), "1.00000000000e-9");
        assert_eq!(sig12(-2.5), "-2.5");
        assert_eq!(sig12(f64::INFINITY), "inf");
    }

    #[test]
    fn durations() {
        assert_eq!(parse_duration("30d"), Ok(2_592_000.0));
        assert_eq!(parse_duration("1h"), Ok(3_600.0));
        assert_eq!(parse_duration("3600s"), Ok(3_600.0));
        assert_eq!(parse_duration("90m"), Ok(5_400.0));
        assert_eq!(parse_duration("12.5"), Ok(12.5));
        assert!(parse_duration("3w").is_err());
        assert!(parse_duration("-1d").is_err());
        assert!(parse_duration("d").is_err());
    }
}
