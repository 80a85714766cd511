//! Number formatting shared by report writers.

use serde_json::Value;

pub const SIGNIFICANT_DIGITS: usize = 15;

/// Rounds `x` to `digits` significant decimal digits.
pub fn round_sig(x: f64, digits: usize) -> f64 {
    if x == 0.0 || !x.is_finite() {
        return x;
    }
    format!("{:.*e}", digits.saturating_sub(1), x).parse().unwrap_or(x)
}

/// Rounds every number in a JSON tree to [`SIGNIFICANT_DIGITS`].
pub fn round_json(v: &mut Value) {
    match v {
        Value::Number(n) => {
            if let Some(f) = n.as_f64().filter(|_| n.is_f64()) {
                if let Some(r) = serde_json::Number::from_f64(round_sig(f, SIGNIFICANT_DIGITS)) {
                    *n = r;
                }
            }
        }
        Value::Array(a) => a.iter_mut().for_each(round_json),
        Value::Object(o) => o.values_mut().for_each(round_json),
        _ => {}
    }
}

/// Decimal text of `x` rounded to [`SIGNIFICANT_DIGITS`].
pub fn format_number(x: f64) -> String {
    let r = round_sig(x, SIGNIFICANT_DIGITS);
    if r.fract() == 0.0 && r.abs() < 1e15 {
        format!("{}", r as i64)
    } else {
        format!("{r}")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rounding() {
        assert_eq!(round_sig(0.1 + 0.2, 15), 0.3);
        assert_eq!(round_sig(1.0 / 3.0, 3), 0.333);
        assert_eq!(format_number(3.0), "3");
        assert_eq!(format_number(-0.125), "-0.125");
        let mut v = serde_json::json!({"a": [0.30000000000000004, 2], "b": "x"});
        round_json(&mut v);
        assert_eq!(v, serde_json::json!({"a": [0.3, 2], "b": "x"}));
    }
}
