use std::f64::consts::PI;

use crate::error::{GplmError, Result};

/// Parses a bandwidth in radians: a plain decimal (`0.0314`) or a multiple of
/// pi such as `pi`, `pi/100`, `2pi/25` or `3*pi/50`.
pub fn parse_bandwidth(text: &str) -> Result<f64> {
    let s: String = text.chars().filter(|c| !c.is_whitespace()).collect::<String>().to_lowercase();
    let bad = || GplmError::invalid(format!("cannot parse bandwidth '{text}'"));
    let value = match s.find("pi") {
        None => s.parse::<f64>().map_err(|_| bad())?,
        Some(at) => {
            let coef = s[..at].trim_end_matches('*');
            let coef = if coef.is_empty() { 1.0 } else { coef.parse::<f64>().map_err(|_| bad())? };
            let rest = &s[at + 2..];
            let den = match rest {
                "" => 1.0,
                r if r.starts_with('/') => r[1..].parse::<f64>().map_err(|_| bad())?,
                _ => return Err(bad()),
            };
            coef * PI / den
        }
    };
    if !(value.is_finite() && value > 0.0) {
        return Err(GplmError::invalid(format!(
            "bandwidth '{text}' must be a positive finite number of radians"
        )));
    }
    Ok(value)
}

/// Parses a comma-separated list of bandwidths.
pub fn parse_grid(text: &str) -> Result<Vec<f64>> {
    let grid = text
        .split(',')
        .filter(|s| !s.trim().is_empty())
        .map(parse_bandwidth)
        .collect::<Result<Vec<_>>>()?;
    if grid.is_empty() {
        return Err(GplmError::invalid("bandwidth grid is empty"));
    }
    Ok(grid)
}

/// Renders a bandwidth as `pi/N` when it is one, else as a decimal.
pub fn format_bandwidth(h: f64) -> String {
    let den = PI / h;
    if (den - den.round()).abs() < 1e-9 * den && den.round() >= 1.0 {
        format!("pi/{}", den.round() as u64)
    } else {
        format!("{h}")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn accepted_forms() {
        assert_eq!(parse_bandwidth("pi/100").unwrap(), PI / 100.0);
        assert_eq!(parse_bandwidth(" PI / 50 ").unwrap(), PI / 50.0);
        assert_eq!(parse_bandwidth("pi").unwrap(), PI);
        assert_eq!(parse_bandwidth("2pi/25").unwrap(), 2.0 * PI / 25.0);
        assert_eq!(parse_bandwidth("3*pi/50").unwrap(), 3.0 * PI / 50.0);
        assert_eq!(parse_bandwidth("0.0314").unwrap(), 0.0314);
        assert_eq!(parse_grid("pi/50,pi/100,pi/120").unwrap().len(), 3);
    }

    #[test]
    fn rejected_forms() {
        for s in ["", "pie/3", "pi/0", "-0.1", "pi*2", "abc", "pi/x", "0"] {
            assert!(parse_bandwidth(s).is_err(), "{s}");
        }
        assert!(parse_grid(",").is_err());
    }

    #[test]
    fn formatting() {
        assert_eq!(format_bandwidth(PI / 100.0), "pi/100");
        assert_eq!(format_bandwidth(0.25), "0.25");
    }
}
