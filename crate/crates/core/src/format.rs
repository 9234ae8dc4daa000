//! Locale-independent number formatting for CSV output.

/// Formats `x` with 6 significant digits, `%g` style: fixed notation for
/// decimal exponents in `[-5, 6)`, scientific otherwise, trailing zeros
/// removed. Always uses `.` as the decimal separator.
pub fn sig6(x: f64) -> String {
    sig(x, 6)
}

pub fn sig(x: f64, digits: usize) -> String {
    if x == 0.0 {
        return "0".into();
    }
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    let digits = digits.max(1);
    let sci = format!("{:.*e}", digits - 1, x);
    let (mantissa, exp) = sci.split_once('e').expect("scientific format");
    let exp: i32 = exp.parse().expect("exponent");
    if (-5..digits as i32).contains(&exp) {
        let decimals = (digits as i32 - 1 - exp).max(0) as usize;
        trim(format!("{:.*}", decimals, x))
    } else {
        format!("{}e{}", trim(mantissa.to_string()), exp)
    }
}

fn trim(s: String) -> String {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn six_significant_digits() {
        assert_eq!(sig6(0.0), "0");
        assert_eq!(sig6(1.0), "1");
        assert_eq!(sig6(-2.5), "-2.5");
        assert_eq!(sig6(0.132_049_87), "0.13205");
        assert_eq!(sig6(3_126.123_456), "3126.12");
        assert_eq!(sig6(123_456_789.0), "1.23457e8");
        assert_eq!(sig6(1.5e-7), "1.5e-7");
        assert_eq!(sig6(0.000_123_456_7), "0.000123457");
        assert_eq!(sig6(999_999.7), "1e6");
        assert_eq!(sig6(f64::NEG_INFINITY), "-inf");
    }
}
