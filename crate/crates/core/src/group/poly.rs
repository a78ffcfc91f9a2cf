//! Sparse multivariate polynomials with exact rational coefficients.

use std::collections::btree_map::Entry;
use std::collections::BTreeMap;
use std::fmt;

use num_rational::Ratio;
use num_traits::{One, Signed, ToPrimitive, Zero};

/// Exact rational scalar used throughout the algebra code.
pub type Rational = Ratio<i128>;

pub fn rational(num: i128, den: i128) -> Rational {
    Ratio::new(num, den)
}

pub fn rational_to_f64(q: &Rational) -> f64 {
    q.numer().to_f64().unwrap_or(f64::NAN) / q.denom().to_f64().unwrap_or(f64::NAN)
}

/// Polynomial in `nvars` variables, stored as exponent vector → coefficient.
#[derive(Clone, PartialEq, Eq)]
pub struct Poly {
    nvars: usize,
    terms: BTreeMap<Vec<u8>, Rational>,
}

impl fmt::Debug for Poly {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return write!(f, "0");
        }
        let parts: Vec<String> = self
            .terms
            .iter()
            .map(|(e, c)| {
                let mono: Vec<String> = e
                    .iter()
                    .enumerate()
                    .filter(|(_, &k)| k > 0)
                    .map(|(i, &k)| if k == 1 { format!("v{i}") } else { format!("v{i}^{k}") })
                    .collect();
                if mono.is_empty() {
                    format!("{c}")
                } else {
                    format!("{c}*{}", mono.join("*"))
                }
            })
            .collect();
        write!(f, "{}", parts.join(" + "))
    }
}

impl Poly {
    pub fn zero(nvars: usize) -> Self {
        Poly { nvars, terms: BTreeMap::new() }
    }

    pub fn constant(nvars: usize, c: Rational) -> Self {
        let mut p = Poly::zero(nvars);
        if !c.is_zero() {
            p.terms.insert(vec![0; nvars], c);
        }
        p
    }

    /// The polynomial `c·v_i`.
    pub fn var(nvars: usize, i: usize, c: Rational) -> Self {
        let mut p = Poly::zero(nvars);
        if !c.is_zero() {
            let mut e = vec![0u8; nvars];
            e[i] = 1;
            p.terms.insert(e, c);
        }
        p
    }

    pub fn nvars(&self) -> usize {
        self.nvars
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn terms(&self) -> impl Iterator<Item = (&[u8], &Rational)> {
        self.terms.iter().map(|(e, c)| (e.as_slice(), c))
    }

    fn add_term(&mut self, e: Vec<u8>, c: Rational) {
        if c.is_zero() {
            return;
        }
        match self.terms.entry(e) {
            Entry::Vacant(v) => {
                v.insert(c);
            }
            Entry::Occupied(mut o) => {
                *o.get_mut() += c;
                if o.get().is_zero() {
                    o.remove();
                }
            }
        }
    }

    pub fn add(&self, other: &Poly) -> Poly {
        let mut out = self.clone();
        for (e, c) in &other.terms {
            out.add_term(e.clone(), *c);
        }
        out
    }

    pub fn add_assign_scaled(&mut self, other: &Poly, s: Rational) {
        if s.is_zero() {
            return;
        }
        for (e, c) in &other.terms {
            self.add_term(e.clone(), *c * s);
        }
    }

    pub fn scale(&self, s: Rational) -> Poly {
        let mut out = Poly::zero(self.nvars);
        if s.is_zero() {
            return out;
        }
        for (e, c) in &self.terms {
            out.terms.insert(e.clone(), *c * s);
        }
        out
    }

    pub fn mul(&self, other: &Poly) -> Poly {
        let mut out = Poly::zero(self.nvars);
        for (e1, c1) in &self.terms {
            for (e2, c2) in &other.terms {
                let e: Vec<u8> = e1.iter().zip(e2).map(|(a, b)| a + b).collect();
                out.add_term(e, *c1 * *c2);
            }
        }
        out
    }

    pub fn pow(&self, k: u8) -> Poly {
        let mut out = Poly::constant(self.nvars, Rational::one());
        for _ in 0..k {
            out = out.mul(self);
        }
        out
    }

    /// Substitute `v_i ← subs[i]`; the result lives in the variables of `subs`.
    pub fn compose(&self, subs: &[Poly]) -> Poly {
        assert_eq!(subs.len(), self.nvars, "substitution arity");
        let target = subs.first().map_or(0, |p| p.nvars);
        let mut out = Poly::zero(target);
        for (e, c) in &self.terms {
            let mut term = Poly::constant(target, *c);
            for (i, &k) in e.iter().enumerate() {
                if k > 0 {
                    term = term.mul(&subs[i].pow(k));
                }
            }
            out = out.add(&term);
        }
        out
    }

    pub fn eval(&self, v: &[f64]) -> f64 {
        let mut acc = 0.0;
        for (e, c) in &self.terms {
            let mut m = rational_to_f64(c);
            for (i, &k) in e.iter().enumerate() {
                if k > 0 {
                    m *= v[i].powi(k as i32);
                }
            }
            acc += m;
        }
        acc
    }

    /// `Σ |c| Π r_i^{e_i}`, an upper bound for `|p(v)|` when `|v_i| ≤ r_i`.
    pub fn abs_bound(&self, r: &[f64]) -> f64 {
        let mut acc = 0.0;
        for (e, c) in &self.terms {
            let mut m = rational_to_f64(&c.abs());
            for (i, &k) in e.iter().enumerate() {
                if k > 0 {
                    m *= r[i].powi(k as i32);
                }
            }
            acc += m;
        }
        acc
    }

    pub fn derivative(&self, i: usize) -> Poly {
        let mut out = Poly::zero(self.nvars);
        for (e, c) in &self.terms {
            if e[i] > 0 {
                let mut e2 = e.clone();
                e2[i] -= 1;
                out.add_term(e2, *c * Rational::from_integer(e[i] as i128));
            }
        }
        out
    }

    /// Drop every monomial that involves variable `i`; returns the remainder.
    pub fn without_var(&self, i: usize) -> Poly {
        let mut out = Poly::zero(self.nvars);
        for (e, c) in &self.terms {
            if e[i] == 0 {
                out.terms.insert(e.clone(), *c);
            }
        }
        out
    }

    /// Variables that actually occur.
    pub fn support(&self) -> Vec<usize> {
        let mut seen = vec![false; self.nvars];
        for e in self.terms.keys() {
            for (i, &k) in e.iter().enumerate() {
                if k > 0 {
                    seen[i] = true;
                }
            }
        }
        (0..self.nvars).filter(|&i| seen[i]).collect()
    }

    /// Weighted degree of every monomial, if they all agree.
    pub fn weighted_degree(&self, weights: &[u32]) -> Option<u32> {
        let mut deg = None;
        for e in self.terms.keys() {
            let d: u32 = e.iter().zip(weights).map(|(&k, &w)| k as u32 * w).sum();
            match deg {
                None => deg = Some(d),
                Some(d0) if d0 != d => return None,
                _ => {}
            }
        }
        deg
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn arithmetic_and_evaluation() {
        let x = Poly::var(2, 0, Rational::one());
        let y = Poly::var(2, 1, Rational::one());
        let p = x.add(&y).pow(2);
        assert!((p.eval(&[1.5, -0.5]) - 1.0).abs() < 1e-15);
        assert_eq!(p.derivative(0), x.add(&y).scale(rational(2, 1)));
        let q = p.compose(&[y.clone(), x.clone()]);
        assert_eq!(q, p);
        assert!(x.add(&x.scale(rational(-1, 1))).is_zero());
    }

    #[test]
    fn abs_bound_dominates_value() {
        let x = Poly::var(2, 0, rational(1, 2));
        let y = Poly::var(2, 1, rational(-3, 1));
        let p = x.mul(&y).add(&y);
        for &(a, b) in &[(0.3, -0.9), (-1.0, 1.0), (0.0, 0.5)] {
            assert!(p.eval(&[a, b]).abs() <= p.abs_bound(&[1.0, 1.0]) + 1e-15);
        }
    }
}
