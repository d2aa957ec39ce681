//! Locale-independent decimal formatting.

/// Rounds `x` to `digits` significant digits and prints the shortest decimal
/// that parses back to the rounded value. No exponent, no trailing zeros,
/// `-0` prints as `0`.
pub fn sig_digits(x: f64, digits: usize) -> String {
    assert!(digits >= 1, "need at least one significant digit");
    if !x.is_finite() {
        return if x.is_nan() {
            "nan".to_string()
        } else if x > 0.0 {
            "inf".to_string()
        } else {
            "-inf".to_string()
        };
    }
    let rounded: f64 = format!("{:.*e}", digits - 1, x)
        .parse()
        .expect("scientific formatting always parses");
    if rounded == 0.0 {
        return "0".to_string();
    }
    format!("{rounded}")
}
