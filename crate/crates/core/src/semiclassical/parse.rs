//! Text format for torus symbols:
//!
//! ```text
//! # a(x, ξ) = ψ(ξ) + 0.5 e^{2πi x₁} ψ(ξ)
//! dim 2
//! mode 0 0 profile=gaussian(0,1)
//! mode 1 0 coef=0.5,0 profile=hermite(2,0.7)
//! ```
//!
//! Profiles: `gaussian(mu,sigma)`, `bump(r)`, `hermite(k,scale)`,
//! `constant(c)`; each is the same factor in every coordinate.

use std::sync::Arc;

use num_complex::Complex64;

use super::profile::Separable;
use super::TorusSymbol;
use crate::error::{Error, Result};

fn err(line: usize, message: impl Into<String>) -> Error {
    Error::Parse { line, message: message.into() }
}

fn number(line: usize, s: &str) -> Result<f64> {
    let v: f64 = s.trim().parse().map_err(|_| err(line, format!("expected a number, got '{s}'")))?;
    if !v.is_finite() {
        return Err(err(line, format!("non-finite number '{s}'")));
    }
    Ok(v)
}

fn profile(line: usize, dim: usize, s: &str) -> Result<Separable> {
    let (name, rest) = s.split_once('(').ok_or_else(|| err(line, format!("expected name(args), got '{s}'")))?;
    let args = rest.strip_suffix(')').ok_or_else(|| err(line, format!("missing ')' in '{s}'")))?;
    let args: Vec<&str> = if args.trim().is_empty() { Vec::new() } else { args.split(',').collect() };
    let want = |n: usize| {
        if args.len() == n {
            Ok(())
        } else {
            Err(err(line, format!("{name} takes {n} argument(s), got {}", args.len())))
        }
    };
    let positive = |v: f64, what: &str| {
        if v > 0.0 {
            Ok(v)
        } else {
            Err(err(line, format!("{what} must be positive, got {v}")))
        }
    };
    match name.trim() {
        "gaussian" => {
            want(2)?;
            Ok(Separable::gaussian(dim, number(line, args[0])?, positive(number(line, args[1])?, "sigma")?))
        }
        "bump" => {
            want(1)?;
            Ok(Separable::bump(dim, positive(number(line, args[0])?, "radius")?))
        }
        "hermite" => {
            want(2)?;
            let k = args[0].trim().parse::<usize>().map_err(|_| err(line, format!("bad Hermite degree '{}'", args[0])))?;
            if k > 40 {
                return Err(err(line, "Hermite degree above 40 is not supported"));
            }
            Ok(Separable::hermite(dim, k, positive(number(line, args[1])?, "scale")?))
        }
        "constant" => {
            want(1)?;
            Ok(Separable::constant(dim, number(line, args[0])?))
        }
        other => Err(err(line, format!("unknown profile '{other}'"))),
    }
}

pub fn parse_symbol(text: &str) -> Result<TorusSymbol> {
    let mut dim: Option<usize> = None;
    let mut symbol: Option<TorusSymbol> = None;
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let mut words = content.split_whitespace();
        match words.next() {
            Some("dim") => {
                if dim.is_some() {
                    return Err(err(line, "dimension given twice"));
                }
                let d: usize = words
                    .next()
                    .and_then(|w| w.parse().ok())
                    .filter(|&d| d > 0)
                    .ok_or_else(|| err(line, "expected 'dim <positive integer>'"))?;
                if words.next().is_some() {
                    return Err(err(line, "trailing text after dim"));
                }
                dim = Some(d);
            }
            Some("mode") => {
                let mut p = Vec::new();
                let mut coef = Complex64::new(1.0, 0.0);
                let mut prof = None;
                for w in words {
                    if let Some(v) = w.strip_prefix("coef=") {
                        let (re, im) = v.split_once(',').unwrap_or((v, "0"));
                        coef = Complex64::new(number(line, re)?, number(line, im)?);
                    } else if let Some(v) = w.strip_prefix("profile=") {
                        prof = Some(v.to_string());
                    } else if prof.is_none() {
                        p.push(w.parse::<i64>().map_err(|_| err(line, format!("bad mode index '{w}'")))?);
                    } else {
                        return Err(err(line, format!("unexpected '{w}' after the profile")));
                    }
                }
                if p.is_empty() {
                    return Err(err(line, "mode needs at least one index"));
                }
                let d = *dim.get_or_insert(p.len());
                if p.len() != d {
                    return Err(err(line, format!("mode has {} indices, dimension is {d}", p.len())));
                }
                let prof = prof.ok_or_else(|| err(line, "missing profile=..."))?;
                let s = profile(line, d, &prof)?;
                let s = if coef == Complex64::new(1.0, 0.0) { s } else { s.scaled(coef) };
                let sym = match symbol.as_mut() {
                    Some(sym) => sym,
                    None => symbol.insert(TorusSymbol::new(d)?),
                };
                sym.add_mode(&p, Arc::new(s)).map_err(|e| err(line, e.to_string()))?;
            }
            Some(other) => return Err(err(line, format!("unknown directive '{other}'"))),
            None => {}
        }
    }
    match (symbol, dim) {
        (Some(s), _) => Ok(s),
        (None, Some(d)) => TorusSymbol::new(d),
        (None, None) => Err(err(0, "no modes and no dimension given")),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_modes_and_coefficients() {
        let a = parse_symbol("# test\ndim 2\nmode 0 0 profile=gaussian(0,1)\nmode 1 -1 coef=0,2 profile=bump(1.5)\n").unwrap();
        assert_eq!(a.modes().count(), 2);
        let v = a.profile(&[1, -1]).unwrap().value(&[0.0, 0.0]);
        assert!((v - Complex64::new(0.0, 2.0 * (-1.0f64).exp().powi(2))).norm() < 1e-15);
        // repeated modes add up
        let b = parse_symbol("mode 1 profile=gaussian(0,1)\nmode 1 profile=gaussian(0,1)").unwrap();
        assert!((b.profile(&[1]).unwrap().value(&[0.0]).re - 2.0).abs() < 1e-15);
    }

    #[test]
    fn reports_line_numbers() {
        for (text, line) in [
            ("dim 2\nmode 0 profile=gaussian(0,1)", 2),
            ("dim 1\n\nmode 0 profile=gauss(0,1)", 3),
            ("mode 0 profile=gaussian(0,-1)", 1),
            ("mode 0 profile=hermite(x,1)", 1),
            ("dim 0", 1),
            ("shape 3", 1),
            ("mode 0", 1),
        ] {
            match parse_symbol(text) {
                Err(Error::Parse { line: l, .. }) => assert_eq!(l, line, "{text}"),
                other => panic!("{text}: {other:?}"),
            }
        }
    }
}
