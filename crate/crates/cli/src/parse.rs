//! Number, angle, range and list arguments.

use std::f64::consts::PI;

use nrdicke_core::GridRange;

fn plain(s: &str) -> Result<f64, String> {
    s.trim().parse::<f64>().map_err(|_| format!("not a number: `{s}`"))
}

/// Parses a real number that may contain a `pi` factor: `pi`, `-pi/2`,
/// `2pi/3`, `2*pi/3`, `0.5pi`, `1e-3`, `3/4`.
///
/// `kpi/d` evaluates as `(k * PI) / d`, so `2pi/3` is bit-identical to
/// `2.0 * PI / 3.0`.
pub fn real(s: &str) -> Result<f64, String> {
    let t = s.trim().to_ascii_lowercase().replace('π', "pi");
    if t.is_empty() {
        return Err("empty number".into());
    }
    let (neg, body) = match t.as_bytes()[0] {
        b'-' => (true, &t[1..]),
        b'+' => (false, &t[1..]),
        _ => (false, &t[..]),
    };
    if body.starts_with(['+', '-']) {
        return Err(format!("doubled sign in `{s}`"));
    }
    let (num, den) = match body.split_once('/') {
        Some((n, d)) => (n, Some(plain(d)?)),
        None => (body, None),
    };
    let mut v = match num.strip_suffix("pi") {
        Some(coef) => {
            let coef = coef.trim().trim_end_matches('*').trim();
            let c = if coef.is_empty() { 1.0 } else { plain(coef)? };
            c * PI
        }
        None => plain(num)?,
    };
    if let Some(d) = den {
        if d == 0.0 {
            return Err(format!("division by zero in `{s}`"));
        }
        v /= d;
    }
    if !v.is_finite() {
        return Err(format!("not finite: `{s}`"));
    }
    Ok(if neg { -v } else { v })
}

/// `lo:hi:n` with both endpoints included, or a single value.
pub fn range(s: &str) -> Result<GridRange, String> {
    let parts: Vec<&str> = s.split(':').collect();
    match parts.as_slice() {
        [v] => {
            let x = real(v)?;
            Ok(GridRange::new(x, x, 1))
        }
        [lo, hi, n] => {
            let n: usize = n.trim().parse().map_err(|_| format!("bad point count in `{s}`"))?;
            if n == 0 {
                return Err(format!("range `{s}` has no points"));
            }
            Ok(GridRange::new(real(lo)?, real(hi)?, n))
        }
        _ => Err(format!("expected lo:hi:n or a single value, got `{s}`")),
    }
}

/// Comma-separated values, or a range.
pub fn list(s: &str) -> Result<Vec<f64>, String> {
    if s.contains(':') {
        return Ok(range(s)?.values());
    }
    s.split(',').filter(|x| !x.trim().is_empty()).map(real).collect()
}

/// Exactly three comma-separated values, one per species.
pub fn triple(s: &str) -> Result<[f64; 3], String> {
    let v = list(s)?;
    <[f64; 3]>::try_from(v.as_slice()).map_err(|_| format!("expected three values, got `{s}`"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pi_literals_are_exact() {
        assert_eq!(real("2pi/3").unwrap(), 2.0 * PI / 3.0);
        assert_eq!(real("2*pi/3").unwrap(), 2.0 * PI / 3.0);
        assert_eq!(real("pi").unwrap(), PI);
        assert_eq!(real("-pi/2").unwrap(), -PI / 2.0);
        assert_eq!(real("0.5pi").unwrap(), 0.5 * PI);
        assert_eq!(real("PI/3").unwrap(), PI / 3.0);
        assert_eq!(real("π/3").unwrap(), PI / 3.0);
    }

    #[test]
    fn plain_numbers() {
        assert_eq!(real("1e-3").unwrap(), 1e-3);
        assert_eq!(real(" 49 ").unwrap(), 49.0);
        assert_eq!(real("3/4").unwrap(), 0.75);
        assert_eq!(real("+2.5").unwrap(), 2.5);
    }

    #[test]
    fn bad_numbers() {
        for s in ["", "abc", "2pi/0", "pi/x", "1/2/3", "--1"] {
            assert!(real(s).is_err(), "{s}");
        }
    }

    #[test]
    fn ranges() {
        let r = range("0:pi:128").unwrap();
        assert_eq!((r.lo, r.hi, r.n), (0.0, PI, 128));
        assert_eq!(r.values()[127], PI);
        assert_eq!(range("12").unwrap().n, 1);
        assert!(range("0:1").is_err());
        assert!(range("0:1:0").is_err());
        assert!(range("0:1:x").is_err());
    }

    #[test]
    fn lists() {
        assert_eq!(list("1,2,3.5").unwrap(), vec![1.0, 2.0, 3.5]);
        assert_eq!(list("0:1:3").unwrap(), vec![0.0, 0.5, 1.0]);
        assert_eq!(triple("1, 2 ,1").unwrap(), [1.0, 2.0, 1.0]);
        assert!(triple("1,2").is_err());
    }
}
