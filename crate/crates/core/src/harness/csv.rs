//! CSV output of sweep results.

use std::fmt::Write as _;

use super::ResultRow;

pub const HEADER: &str = "snr_db,mean_rate,stderr,mean_time_s,evals";

/// Formats `x` with 9 significant digits in the style of C's `%.9g`:
/// fixed notation for decimal exponents in `-4..9`, scientific otherwise,
/// trailing zeros removed.
pub fn format_g9(x: f64) -> String {
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if x == 0.0 {
        return if x.is_sign_negative() { "-0".into() } else { "0".into() };
    }
    let sci = format!("{x:.8e}");
    let (mantissa, exp) = sci.split_once('e').expect("scientific format");
    let exp: i32 = exp.parse().expect("exponent");
    if (-4..9).contains(&exp) {
        let fixed = format!("{:.*}", (8 - exp) as usize, x);
        trim_fraction(&fixed).to_string()
    } else {
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{}e{}{:02}", trim_fraction(mantissa), sign, exp.abs())
    }
}

fn trim_fraction(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

pub fn to_csv(rows: &[ResultRow]) -> String {
    let mut out = String::with_capacity(64 * (rows.len() + 1));
    out.push_str(HEADER);
    out.push('\n');
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            format_g9(r.snr_db),
            format_g9(r.mean_rate),
            format_g9(r.stderr),
            format_g9(r.mean_time_s),
            format_g9(r.evals)
        );
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matches_printf_g9() {
        let cases = [
            (1.0, "1"),
            (0.5, "0.5"),
            (10.0, "10"),
            (-2.25, "-2.25"),
            (1.0 / 3.0, "0.333333333"),
            (2.0 / 3.0, "0.666666667"),
            (123456789.0, "123456789"),
            (1234567890.0, "1.23456789e+09"),
            (9.999999999e8, "1e+09"),
            (0.0001, "0.0001"),
            (0.00001234, "1.234e-05"),
            (6.02214076e23, "6.02214076e+23"),
            (1e-300, "1e-300"),
            (std::f64::consts::PI, "3.14159265"),
            (99.9999999996, "100"),
        ];
        for (x, want) in cases {
            assert_eq!(format_g9(x), want, "{x:e}");
        }
    }

    #[test]
    fn special_values() {
        assert_eq!(format_g9(0.0), "0");
        assert_eq!(format_g9(f64::NAN), "nan");
        assert_eq!(format_g9(f64::NEG_INFINITY), "-inf");
    }
}
