//! Deterministic number formatting for tables and JSON output.

/// Significant digits used by every exported table.
pub const SIG_DIGITS: usize = 12;

/// `x` with 12 significant digits, `%g` style: plain decimal for moderate
/// exponents, scientific otherwise, trailing zeros removed.
pub fn fmt_sig(x: f64) -> String {
    if x.is_nan() {
        return "NaN".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if x == 0.0 {
        return "0".into();
    }
    let sci = format!("{:.*e}", SIG_DIGITS - 1, x);
    let (mantissa, exp) = sci.split_once('e').expect("scientific format has an exponent");
    let exp: i32 = exp.parse().expect("integer exponent");
    if (-5..SIG_DIGITS as i32).contains(&exp) {
        let decimals = (SIG_DIGITS as i32 - 1 - exp).max(0) as usize;
        trim_zeros(format!("{:.*}", decimals, x))
    } else {
        format!("{}e{}", trim_zeros(mantissa.to_string()), exp)
    }
}

fn trim_zeros(s: String) -> String {
    if !s.contains('.') {
        return s;
    }
    let t = s.trim_end_matches('0').trim_end_matches('.');
    if t == "-0" {
        "0".into()
    } else {
        t.to_string()
    }
}

/// `x` rounded to 12 significant digits, for JSON number fields.
pub fn round_sig(x: f64) -> f64 {
    if !x.is_finite() || x == 0.0 {
        return x;
    }
    fmt_sig(x).parse().unwrap_or(x)
}

/// Serde helpers writing `f64` fields rounded to 12 significant digits.
pub mod serde_sig {
    use serde::Serializer;

    pub fn serialize<S: Serializer>(x: &f64, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_f64(super::round_sig(*x))
    }

    pub mod vec {
        use serde::ser::SerializeSeq;
        use serde::Serializer;

        pub fn serialize<S: Serializer>(v: &[f64], s: S) -> Result<S::Ok, S::Error> {
            let mut seq = s.serialize_seq(Some(v.len()))?;
            for x in v {
                seq.serialize_element(&super::super::round_sig(*x))?;
            }
            seq.end()
        }
    }
}
