//! Number formatting shared by every CSV artifact.

use crate::error::{Error, Result};

/// 17 significant digits, enough to round-trip any `f64`.
pub fn fmt_f64(v: f64) -> String {
    if v == 0.0 {
        // normalize -0.0 so identical runs print identical bytes
        return "0.0000000000000000e0".to_string();
    }
    format!("{v:.16e}")
}

pub fn parse_f64(s: &str, at: &str) -> Result<f64> {
    s.trim().parse::<f64>().map_err(|e| Error::Config {
        path: at.to_string(),
        message: format!("not a number `{s}`: {e}"),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seventeen_significant_digits() {
        let s = fmt_f64(std::f64::consts::PI);
        assert_eq!(s, "3.1415926535897931e0");
        assert_eq!(parse_f64(&s, "x").unwrap(), std::f64::consts::PI);
        assert_eq!(fmt_f64(-0.0), fmt_f64(0.0));
        for v in [1e-300, -7.25e12, 0.1 + 0.2, f64::MAX] {
            assert_eq!(parse_f64(&fmt_f64(v), "x").unwrap(), v);
        }
    }
}
