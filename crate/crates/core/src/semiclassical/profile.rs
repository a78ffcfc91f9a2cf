//! ξ-profiles: the Fourier-side factors `ψ_p(ξ)` of a torus symbol
//! `a(x, ξ) = Σ_p e^{2πi p·x} ψ_p(ξ)`.
//!
//! Most profiles are finite sums of products of one-dimensional factors
//! `P(u)·w(u)`, `u = (s − c)/σ`, with `w` a Gaussian, a smooth bump or 1.
//! That form is closed under dilation, under multiplication by a coordinate
//! and under scaling, and it gives exact derivatives and sharp decay
//! envelopes. Profiles that do not factor (flowed and time-averaged ones)
//! wrap another profile.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::numeric::integrate;

/// How fast a profile decays in `|ξ|_∞`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Decay {
    /// Vanishes for `|ξ|_∞ > radius`.
    Compact(f64),
    /// Faster than any polynomial (Gaussian type).
    Rapid,
    None,
}

impl Decay {
    fn worst(self, other: Decay) -> Decay {
        match (self, other) {
            (Decay::None, _) | (_, Decay::None) => Decay::None,
            (Decay::Rapid, _) | (_, Decay::Rapid) => Decay::Rapid,
            (Decay::Compact(a), Decay::Compact(b)) => Decay::Compact(a.max(b)),
        }
    }
}

pub trait Profile: Send + Sync + fmt::Debug {
    fn dim(&self) -> usize;
    fn value(&self, xi: &[f64]) -> Complex64;
    /// Upper bound for `|ψ(ξ)|` over `|ξ|_∞ ≥ r`.
    fn envelope(&self, r: f64) -> f64;
    fn decay(&self) -> Decay;
    /// Sum-of-products form, when the profile has one.
    fn separable(&self) -> Option<&Separable> {
        None
    }
    fn describe(&self) -> String;
    /// Upper bound for the oscillation frequency of `ψ` along any axis
    /// (cycles per unit `ξ`); sets the quadrature subdivision.
    fn oscillation(&self) -> f64 {
        0.0
    }
}

pub type ProfileRef = Arc<dyn Profile>;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Weight {
    Gaussian,
    Bump,
    One,
}

/// `P(u)·w(u)` with `u = (s − center)/scale`; `poly[k]` multiplies `u^k`.
#[derive(Debug, Clone, PartialEq)]
pub struct Factor {
    pub weight: Weight,
    pub poly: Vec<f64>,
    pub center: f64,
    pub scale: f64,
}

fn poly_eval(p: &[f64], u: f64) -> f64 {
    p.iter().rev().fold(0.0, |acc, c| acc * u + c)
}

fn poly_derivative(p: &[f64]) -> Vec<f64> {
    p.iter().enumerate().skip(1).map(|(k, c)| k as f64 * c).collect()
}

fn poly_add(a: &[f64], b: &[f64]) -> Vec<f64> {
    (0..a.len().max(b.len())).map(|i| a.get(i).unwrap_or(&0.0) + b.get(i).unwrap_or(&0.0)).collect()
}

/// `p · (c0 + c1 u + c2 u² ...)` for a short multiplier.
fn poly_mul(a: &[f64], b: &[f64]) -> Vec<f64> {
    if a.is_empty() || b.is_empty() {
        return Vec::new();
    }
    let mut out = vec![0.0; a.len() + b.len() - 1];
    for (i, x) in a.iter().enumerate() {
        for (j, y) in b.iter().enumerate() {
            out[i + j] += x * y;
        }
    }
    out
}

fn bump(u: f64) -> f64 {
    if u.abs() < 1.0 {
        (-1.0 / (1.0 - u * u)).exp()
    } else {
        0.0
    }
}

/// Physicists' Hermite polynomial coefficients.
pub fn hermite_poly(k: usize) -> Vec<f64> {
    let mut prev = vec![1.0];
    if k == 0 {
        return prev;
    }
    let mut cur = vec![0.0, 2.0];
    for j in 1..k {
        // H_{j+1} = 2u H_j − 2j H_{j−1}
        let next = poly_add(&poly_mul(&cur, &[0.0, 2.0]), &prev.iter().map(|c| -2.0 * j as f64 * c).collect::<Vec<_>>());
        prev = cur;
        cur = next;
    }
    cur
}

impl Factor {
    pub fn gaussian(center: f64, scale: f64) -> Self {
        Factor { weight: Weight::Gaussian, poly: vec![1.0], center, scale }
    }

    pub fn bump(radius: f64) -> Self {
        Factor { weight: Weight::Bump, poly: vec![1.0], center: 0.0, scale: radius }
    }

    pub fn hermite(k: usize, scale: f64) -> Self {
        Factor { weight: Weight::Gaussian, poly: hermite_poly(k), center: 0.0, scale }
    }

    pub fn one() -> Self {
        Factor { weight: Weight::One, poly: vec![1.0], center: 0.0, scale: 1.0 }
    }

    fn u(&self, s: f64) -> f64 {
        (s - self.center) / self.scale
    }

    fn weight_at(&self, u: f64) -> f64 {
        match self.weight {
            Weight::Gaussian => (-0.5 * u * u).exp(),
            Weight::Bump => bump(u),
            Weight::One => 1.0,
        }
    }

    pub fn value(&self, s: f64) -> f64 {
        let u = self.u(s);
        poly_eval(&self.poly, u) * self.weight_at(u)
    }

    /// `s ↦ f(r·s)`.
    pub fn dilated(&self, r: f64) -> Factor {
        Factor { center: self.center / r, scale: self.scale / r, ..self.clone() }
    }

    /// `s ↦ s·f(s)`.
    pub fn times_coordinate(&self) -> Factor {
        Factor { poly: poly_mul(&self.poly, &[self.center, self.scale]), ..self.clone() }
    }

    /// Bound for `|f(s)|` over `|s| ≥ r`.
    pub fn envelope(&self, r: f64) -> f64 {
        let rho = ((r - self.center.abs()) / self.scale).max(0.0);
        match self.weight {
            Weight::Gaussian => self
                .poly
                .iter()
                .enumerate()
                .map(|(k, c)| {
                    // sup_{|u| ≥ ρ} |u|^k e^{−u²/2}
                    let v = rho.max((k as f64).sqrt());
                    c.abs() * v.powi(k as i32) * (-0.5 * v * v).exp()
                })
                .sum(),
            Weight::Bump => {
                if rho >= 1.0 {
                    0.0
                } else {
                    self.poly.iter().map(|c| c.abs()).sum::<f64>() * bump(rho)
                }
            }
            Weight::One => {
                if self.poly.iter().skip(1).any(|&c| c != 0.0) {
                    f64::INFINITY
                } else {
                    self.poly.first().map_or(0.0, |c| c.abs())
                }
            }
        }
    }

    pub fn decay(&self) -> Decay {
        match self.weight {
            Weight::Gaussian => Decay::Rapid,
            Weight::Bump => Decay::Compact(self.center.abs() + self.scale),
            Weight::One => {
                if self.poly.iter().all(|&c| c == 0.0) {
                    Decay::Compact(0.0)
                } else {
                    Decay::None
                }
            }
        }
    }

    /// Interval in `s` outside which `|f| ≤ tiny·sup|f|`.
    fn window(&self) -> Result<(f64, f64)> {
        let half = match self.weight {
            Weight::Bump => 1.0,
            Weight::Gaussian => {
                let mut u = 1.0;
                let top = self.envelope(0.0).max(f64::MIN_POSITIVE);
                while self.envelope(self.center.abs() + u * self.scale) > 1e-20 * top {
                    u += 0.5;
                }
                u
            }
            Weight::One => return Err(Error::capability("a constant factor is not integrable")),
        };
        Ok((self.center - half * self.scale, self.center + half * self.scale))
    }

    /// `∫ f g ds` by adaptive quadrature over the common window.
    pub fn inner(&self, other: &Factor) -> Result<f64> {
        let (a0, b0) = self.window()?;
        let (a1, b1) = other.window()?;
        let (a, b) = (a0.max(a1), b0.min(b1));
        if a >= b {
            return Ok(0.0);
        }
        Ok(integrate(|s| self.value(s) * other.value(s), a, b, 1e-15, 1e-13, 20_000)?.value)
    }

    pub fn integral(&self) -> Result<f64> {
        let (a, b) = self.window()?;
        Ok(integrate(|s| self.value(s), a, b, 1e-15, 1e-13, 20_000)?.value)
    }

    /// `d^k f / ds^k` as a function of `s`.
    fn derivative_fn(&self, k: usize) -> Box<dyn Fn(f64) -> f64 + Send + Sync> {
        let sk = self.scale.powi(k as i32);
        let (center, scale) = (self.center, self.scale);
        match self.weight {
            Weight::Gaussian => {
                // (P e^{−u²/2})' = (P' − uP) e^{−u²/2}
                let mut p = self.poly.clone();
                for _ in 0..k {
                    p = poly_add(&poly_derivative(&p), &poly_mul(&p, &[0.0, -1.0]));
                }
                Box::new(move |s| {
                    let u = (s - center) / scale;
                    poly_eval(&p, u) * (-0.5 * u * u).exp() / sk
                })
            }
            Weight::Bump => {
                // d^j (P b) = N_j / (1 − u²)^{2j} · b, with
                // N_{j+1} = N_j'(1 − u²)² + 4j u N_j (1 − u²) − 2u N_j
                let mut nj = self.poly.clone();
                let one_minus = [1.0, 0.0, -1.0];
                let sq = poly_mul(&one_minus, &one_minus);
                for j in 0..k {
                    let a = poly_mul(&poly_derivative(&nj), &sq);
                    let b = poly_mul(&poly_mul(&nj, &one_minus), &[0.0, 4.0 * j as f64]);
                    let c = poly_mul(&nj, &[0.0, -2.0]);
                    nj = poly_add(&poly_add(&a, &b), &c);
                }
                Box::new(move |s| {
                    let u = (s - center) / scale;
                    if u.abs() >= 1.0 {
                        return 0.0;
                    }
                    let w = 1.0 - u * u;
                    let b = (-1.0 / w).exp();
                    if b == 0.0 {
                        return 0.0;
                    }
                    poly_eval(&nj, u) * b / w.powi(2 * k as i32) / sk
                })
            }
            Weight::One => {
                let mut p = self.poly.clone();
                for _ in 0..k {
                    p = poly_derivative(&p);
                }
                Box::new(move |s| poly_eval(&p, (s - center) / scale) / sk)
            }
        }
    }

    /// `‖f^{(k)}‖_{L¹}`.
    pub fn derivative_l1(&self, k: usize) -> Result<f64> {
        let (a, b) = self.window()?;
        let d = self.derivative_fn(k);
        Ok(integrate(|s| d(s).abs(), a, b, 1e-14, 1e-10, 50_000)?.value)
    }

    /// `f̌(z) = ∫ f(s) e^{2πi z s} ds`.
    pub fn inverse_fourier(&self, z: f64) -> Result<Complex64> {
        let (a, b) = self.window()?;
        // split into pieces of about one oscillation each
        let pieces = ((b - a) * z.abs()).ceil().max(1.0) as usize;
        let h = (b - a) / pieces as f64;
        let mut total = Complex64::default();
        for i in 0..pieces {
            let (lo, hi) = (a + i as f64 * h, a + (i + 1) as f64 * h);
            total += integrate(
                |s| Complex64::from_polar(self.value(s), 2.0 * PI * z * s),
                lo,
                hi,
                1e-17,
                1e-12,
                2_000,
            )?
            .value;
        }
        Ok(total)
    }

    /// `‖f̌‖_{L¹}` with an error bound: adaptive quadrature on `[−Z, Z]` and
    /// the integration-by-parts tail `|f̌(z)| ≤ ‖f^{(K)}‖₁ / (2π|z|)^K`.
    pub fn kernel_l1(&self, tol: f64) -> Result<(f64, f64)> {
        if self.weight == Weight::One {
            return Err(Error::capability("the kernel of a constant factor is a point mass"));
        }
        // choose K and Z = cutoff with 2‖f^{(K)}‖₁ / ((2π)^K (K−1) Z^{K−1}) ≤ tol/2
        let mut best: Option<(f64, f64)> = None;
        for k in 2..=14usize {
            let dk = self.derivative_l1(k)?;
            if !dk.is_finite() {
                break;
            }
            let c = 2.0 * dk / ((2.0 * PI).powi(k as i32) * (k as f64 - 1.0));
            let z = (c / (0.5 * tol)).powf(1.0 / (k as f64 - 1.0));
            if best.is_none_or(|(bz, _)| z < bz) {
                best = Some((z, 0.5 * tol));
            }
        }
        let (z, tail) = best.ok_or_else(|| Error::capability("no usable derivative bound for the kernel tail"))?;
        if z * (self.window()?.1 - self.window()?.0) > 4e4 {
            return Err(Error::capability(format!(
                "kernel tail certificate needs |z| up to {z:.3e}; too oscillatory to integrate"
            )));
        }
        let f = |t: f64| self.inverse_fourier(t).map(|c| c.norm()).unwrap_or(f64::NAN);
        let q = integrate(f, -z, z, 0.25 * tol, 1e-12, 20_000)?;
        if !q.value.is_finite() {
            return Err(Error::capability("kernel quadrature failed"));
        }
        Ok((q.value, q.error + tail))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Term {
    pub coef: Complex64,
    pub factors: Vec<Factor>,
}

/// `Σ_t c_t Π_j f_{t,j}(ξ_j)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Separable {
    dim: usize,
    terms: Vec<Term>,
    label: Option<String>,
}

impl Separable {
    pub fn new(dim: usize, terms: Vec<Term>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::input("profiles need dimension at least 1"));
        }
        if terms.iter().any(|t| t.factors.len() != dim) {
            return Err(Error::input(format!("every term of a {dim}-dimensional profile needs {dim} factors")));
        }
        Ok(Separable { dim, terms, label: None })
    }

    /// The same factor in every coordinate.
    pub fn product(dim: usize, factor: Factor, coef: Complex64) -> Self {
        Separable { dim, terms: vec![Term { coef, factors: vec![factor; dim] }], label: None }
    }

    pub fn gaussian(dim: usize, center: f64, scale: f64) -> Self {
        Self::product(dim, Factor::gaussian(center, scale), Complex64::new(1.0, 0.0))
            .labelled(format!("gaussian({center},{scale})"))
    }

    pub fn bump(dim: usize, radius: f64) -> Self {
        Self::product(dim, Factor::bump(radius), Complex64::new(1.0, 0.0)).labelled(format!("bump({radius})"))
    }

    pub fn hermite(dim: usize, k: usize, scale: f64) -> Self {
        Self::product(dim, Factor::hermite(k, scale), Complex64::new(1.0, 0.0))
            .labelled(format!("hermite({k},{scale})"))
    }

    pub fn constant(dim: usize, c: f64) -> Self {
        Self::product(dim, Factor::one(), Complex64::new(c, 0.0)).labelled(format!("constant({c})"))
    }

    pub fn labelled(mut self, label: String) -> Self {
        self.label = Some(label);
        self
    }

    pub fn terms(&self) -> &[Term] {
        &self.terms
    }

    pub fn scaled(&self, c: Complex64) -> Separable {
        Separable {
            dim: self.dim,
            terms: self.terms.iter().map(|t| Term { coef: t.coef * c, factors: t.factors.clone() }).collect(),
            label: None,
        }
    }

    pub fn dilated(&self, r: f64) -> Separable {
        Separable {
            dim: self.dim,
            terms: self
                .terms
                .iter()
                .map(|t| Term { coef: t.coef, factors: t.factors.iter().map(|f| f.dilated(r)).collect() })
                .collect(),
            label: None,
        }
    }

    /// `ξ ↦ (w·ξ) ψ(ξ)`.
    pub fn times_linear(&self, w: &[f64]) -> Separable {
        let mut terms = Vec::new();
        for t in &self.terms {
            for (j, &wj) in w.iter().enumerate() {
                if wj == 0.0 {
                    continue;
                }
                let mut factors = t.factors.clone();
                factors[j] = factors[j].times_coordinate();
                terms.push(Term { coef: t.coef * wj, factors });
            }
        }
        Separable { dim: self.dim, terms, label: None }
    }

    pub fn plus(&self, other: &Separable) -> Separable {
        Separable {
            dim: self.dim,
            terms: self.terms.iter().chain(&other.terms).cloned().collect(),
            label: None,
        }
    }

    /// `∫ |ψ|² dξ`, expanded over pairs of terms.
    pub fn l2_norm_sq(&self) -> Result<f64> {
        let mut total = Complex64::default();
        for s in &self.terms {
            for t in &self.terms {
                let mut prod = s.coef * t.coef.conj();
                for (f, g) in s.factors.iter().zip(&t.factors) {
                    prod *= f.inner(g)?;
                }
                total += prod;
            }
        }
        Ok(total.re.max(0.0))
    }

    pub fn integral(&self) -> Result<Complex64> {
        let mut total = Complex64::default();
        for t in &self.terms {
            let mut prod = t.coef;
            for f in &t.factors {
                prod *= f.integral()?;
            }
            total += prod;
        }
        Ok(total)
    }

    /// Upper bound for `∫ |ψ̌|` (exact for a single product term) with the
    /// accumulated quadrature error.
    pub fn kernel_l1(&self, tol: f64) -> Result<(f64, f64)> {
        let (mut value, mut error) = (0.0, 0.0);
        for t in &self.terms {
            let (mut v, mut e) = (t.coef.norm(), 0.0);
            for f in &t.factors {
                let (fv, fe) = f.kernel_l1(tol)?;
                // (v ± e)(fv ± fe)
                e = v * fe + e * fv + e * fe;
                v *= fv;
            }
            value += v;
            error += e;
        }
        Ok((value, error))
    }
}

impl Profile for Separable {
    fn dim(&self) -> usize {
        self.dim
    }

    fn value(&self, xi: &[f64]) -> Complex64 {
        self.terms.iter().map(|t| t.coef * t.factors.iter().zip(xi).map(|(f, &s)| f.value(s)).product::<f64>()).sum()
    }

    fn envelope(&self, r: f64) -> f64 {
        self.terms
            .iter()
            .map(|t| {
                let sups: Vec<f64> = t.factors.iter().map(|f| f.envelope(0.0)).collect();
                let c = t.coef.norm();
                if c == 0.0 {
                    return 0.0;
                }
                (0..self.dim)
                    .map(|j| {
                        let rest: f64 = (0..self.dim).filter(|&i| i != j).map(|i| sups[i]).product();
                        t.factors[j].envelope(r) * rest
                    })
                    .fold(0.0, f64::max)
                    * c
            })
            .sum()
    }

    fn decay(&self) -> Decay {
        self.terms
            .iter()
            .filter(|t| t.coef.norm() > 0.0)
            .map(|t| t.factors.iter().map(Factor::decay).fold(Decay::Compact(0.0), Decay::worst))
            .fold(Decay::Compact(0.0), Decay::worst)
    }

    fn separable(&self) -> Option<&Separable> {
        Some(self)
    }

    fn describe(&self) -> String {
        self.label.clone().unwrap_or_else(|| format!("separable({} terms)", self.terms.len()))
    }
}

/// `(e^{2πis} − 1)/(2πis)`, the time average of `e^{2πiσt}` over `[0, T]`
/// at `s = σT`.
pub fn flow_factor(s: f64) -> Complex64 {
    let w = 2.0 * PI * s;
    if w.abs() < 1e-4 {
        // series: 1 + iw/2 − w²/6 − iw³/24
        Complex64::new(1.0 - w * w / 6.0, w / 2.0 - w * w * w / 24.0)
    } else {
        (Complex64::from_polar(1.0, w) - 1.0) / Complex64::new(0.0, w)
    }
}

/// `ψ(ξ)·e^{2πi t p·ξ}`: mode `p` transported by the flow `x ↦ x + tξ`.
#[derive(Debug, Clone)]
pub struct Flowed {
    pub inner: ProfileRef,
    pub p: Vec<f64>,
    pub t: f64,
}

impl Profile for Flowed {
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn oscillation(&self) -> f64 {
        self.inner.oscillation() + self.t.abs() * self.p.iter().map(|v| v.abs()).fold(0.0, f64::max)
    }

    fn value(&self, xi: &[f64]) -> Complex64 {
        let s: f64 = self.p.iter().zip(xi).map(|(a, b)| a * b).sum();
        self.inner.value(xi) * Complex64::from_polar(1.0, 2.0 * PI * self.t * s)
    }

    fn envelope(&self, r: f64) -> f64 {
        self.inner.envelope(r)
    }

    fn decay(&self) -> Decay {
        self.inner.decay()
    }

    fn describe(&self) -> String {
        format!("flowed(t={}, {})", self.t, self.inner.describe())
    }
}

/// `ψ(ξ)·(1/T)∫₀^T e^{2πi t p·ξ} dt`; `time` is the effective flow time.
#[derive(Debug, Clone)]
pub struct FlowAveraged {
    pub inner: ProfileRef,
    pub p: Vec<f64>,
    pub time: f64,
}

impl Profile for FlowAveraged {
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn oscillation(&self) -> f64 {
        self.inner.oscillation() + self.time.abs() * self.p.iter().map(|v| v.abs()).fold(0.0, f64::max)
    }

    fn value(&self, xi: &[f64]) -> Complex64 {
        let s: f64 = self.p.iter().zip(xi).map(|(a, b)| a * b).sum();
        self.inner.value(xi) * flow_factor(self.time * s)
    }

    fn envelope(&self, r: f64) -> f64 {
        self.inner.envelope(r)
    }

    fn decay(&self) -> Decay {
        self.inner.decay()
    }

    fn describe(&self) -> String {
        format!("averaged(T={}, {})", self.time, self.inner.describe())
    }
}

/// `c·ψ(r·ξ)` for profiles without a product form.
#[derive(Debug, Clone)]
pub struct Transformed {
    pub inner: ProfileRef,
    pub dilation: f64,
    pub coef: Complex64,
    /// Optional linear weight `w·ξ` (applied after dilation).
    pub linear: Option<Vec<f64>>,
}

impl Profile for Transformed {
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn oscillation(&self) -> f64 {
        self.inner.oscillation() * self.dilation
    }

    fn value(&self, xi: &[f64]) -> Complex64 {
        let scaled: Vec<f64> = xi.iter().map(|v| v * self.dilation).collect();
        let lin = self.linear.as_ref().map_or(1.0, |w| w.iter().zip(xi).map(|(a, b)| a * b).sum());
        self.coef * lin * self.inner.value(&scaled)
    }

    fn envelope(&self, r: f64) -> f64 {
        let base = self.coef.norm() * self.inner.envelope(r * self.dilation);
        match &self.linear {
            None => base,
            // |w·ξ| is unbounded; only a compact profile keeps a finite bound
            Some(w) => match self.decay() {
                Decay::Compact(rad) => {
                    if r > rad {
                        0.0
                    } else {
                        base * w.iter().map(|v| v.abs()).sum::<f64>() * rad
                    }
                }
                _ => f64::INFINITY,
            },
        }
    }

    fn decay(&self) -> Decay {
        match self.inner.decay() {
            Decay::Compact(r) => Decay::Compact(r / self.dilation),
            other => other,
        }
    }

    fn describe(&self) -> String {
        format!("transformed({})", self.inner.describe())
    }
}

pub fn scaled(p: &ProfileRef, c: Complex64) -> ProfileRef {
    match p.separable() {
        Some(s) => Arc::new(s.scaled(c)),
        None => Arc::new(Transformed { inner: p.clone(), dilation: 1.0, coef: c, linear: None }),
    }
}

pub fn dilated(p: &ProfileRef, r: f64) -> ProfileRef {
    match p.separable() {
        Some(s) => Arc::new(s.dilated(r)),
        None => Arc::new(Transformed { inner: p.clone(), dilation: r, coef: Complex64::new(1.0, 0.0), linear: None }),
    }
}

/// `ξ ↦ c·(w·ξ)·ψ(ξ)`.
pub fn times_linear(p: &ProfileRef, w: &[f64], c: Complex64) -> ProfileRef {
    match p.separable() {
        Some(s) => Arc::new(s.times_linear(w).scaled(c)),
        None => Arc::new(Transformed { inner: p.clone(), dilation: 1.0, coef: c, linear: Some(w.to_vec()) }),
    }
}

/// `∫ |ψ|² dξ`: exact expansion for product forms, nested quadrature over
/// the envelope window otherwise (dimension at most 2).
pub fn l2_norm_sq(p: &dyn Profile) -> Result<f64> {
    if let Some(s) = p.separable() {
        return s.l2_norm_sq();
    }
    let r = window_radius(p)?;
    // one chunk per oscillation keeps every adaptive piece smooth
    let chunks = (2.0 * r * p.oscillation()).ceil().max(1.0) as usize;
    match p.dim() {
        1 => integrate_chunked(&|x| p.value(&[x]).norm_sqr(), -r, r, chunks, 1e-12),
        2 => {
            if (chunks * chunks) as f64 * 225.0 > 5e7 {
                return Err(Error::capability(format!(
                    "two-dimensional quadrature with {chunks} oscillations per axis is too expensive"
                )));
            }
            let inner = |x: f64| integrate_chunked(&|y| p.value(&[x, y]).norm_sqr(), -r, r, chunks, 1e-13).unwrap_or(f64::NAN);
            let v = integrate_chunked(&inner, -r, r, chunks, 1e-12)?;
            if v.is_finite() {
                Ok(v)
            } else {
                Err(Error::capability("nested quadrature did not converge"))
            }
        }
        n => Err(Error::capability(format!("L² norms of non-product profiles are limited to n ≤ 2, got {n}"))),
    }
}

/// `∫_a^b f` over `chunks` equal pieces; the absolute tolerance comes from
/// a coarse first pass so tiny tails do not stall the adaptive refinement.
pub fn integrate_chunked(f: &(dyn Fn(f64) -> f64 + Sync), a: f64, b: f64, chunks: usize, rel_tol: f64) -> Result<f64> {
    let h = (b - a) / chunks as f64;
    let piece = |i: usize| (a + i as f64 * h, if i + 1 == chunks { b } else { a + (i + 1) as f64 * h });
    let coarse: f64 = (0..chunks)
        .into_par_iter()
        .map(|i| {
            let (lo, hi) = piece(i);
            integrate(f, lo, hi, f64::INFINITY, 1.0, 1).map(|q| q.value.abs()).unwrap_or(f64::NAN)
        })
        .sum();
    if !coarse.is_finite() {
        return Err(Error::capability("integrand is not finite"));
    }
    let abs_tol = (rel_tol * coarse / chunks as f64).max(f64::MIN_POSITIVE);
    let parts: Result<Vec<f64>> = (0..chunks)
        .into_par_iter()
        .map(|i| {
            let (lo, hi) = piece(i);
            integrate(f, lo, hi, abs_tol, rel_tol, 2_000).map(|q| q.value)
        })
        .collect();
    Ok(crate::numeric::pairwise_sum(&parts?))
}

/// Radius outside which the envelope is negligible.
pub fn window_radius(p: &dyn Profile) -> Result<f64> {
    match p.decay() {
        Decay::Compact(r) => Ok(r),
        Decay::Rapid => {
            let top = p.envelope(0.0).max(f64::MIN_POSITIVE);
            let mut r = 1.0;
            while p.envelope(r) > 1e-20 * top {
                r *= 1.25;
                if r > 1e8 {
                    return Err(Error::capability("envelope does not decay"));
                }
            }
            Ok(r)
        }
        Decay::None => Err(Error::capability(format!("profile {} has no decay certificate", p.describe()))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn numeric_derivative(f: &Factor, k: usize, s: f64) -> f64 {
        // central differences of the (k−1)-th exact derivative
        let d = f.derivative_fn(k - 1);
        let h = 1e-5;
        (d(s + h) - d(s - h)) / (2.0 * h)
    }

    #[test]
    fn derivative_recursions() {
        for f in [Factor::gaussian(0.3, 0.7), Factor::hermite(3, 1.3), Factor::bump(1.5)] {
            for k in 1..5 {
                for s in [-0.9, -0.2, 0.1, 0.6] {
                    let exact = f.derivative_fn(k)(s);
                    let approx = numeric_derivative(&f, k, s);
                    assert!((exact - approx).abs() < 1e-5 * exact.abs().max(1.0), "{f:?} k={k} s={s}");
                }
            }
        }
    }

    #[test]
    fn hermite_coefficients() {
        assert_eq!(hermite_poly(0), vec![1.0]);
        assert_eq!(hermite_poly(3), vec![0.0, -12.0, 0.0, 8.0]);
        assert_eq!(hermite_poly(4), vec![12.0, 0.0, -48.0, 0.0, 16.0]);
    }

    #[test]
    fn gaussian_kernel_norm_is_one() {
        // ψ̌ of e^{−(s−μ)²/2σ²} is σ√(2π) e^{−2π²σ²z²} up to a phase
        for (mu, sigma) in [(0.0, 1.0), (0.4, 0.5), (-1.0, 2.0)] {
            let (v, e) = Factor::gaussian(mu, sigma).kernel_l1(1e-10).unwrap();
            assert!((v - 1.0).abs() < 1e-8, "{v}");
            assert!(e < 1e-8);
        }
        let z = 0.3;
        let g = Factor::gaussian(0.0, 0.8);
        let exact = 0.8 * (2.0 * PI).sqrt() * (-2.0 * PI * PI * 0.64 * z * z).exp();
        assert!((g.inverse_fourier(z).unwrap().re - exact).abs() < 1e-12);
    }

    #[test]
    fn envelopes_bound_values() {
        let p = Separable::hermite(2, 2, 0.9).plus(&Separable::bump(2, 1.2).scaled(Complex64::new(0.0, 3.0)));
        for r in [0.0, 0.5, 1.0, 2.0, 4.0] {
            let env = p.envelope(r);
            for a in [-1.0, 1.0] {
                for t in [-1.0, -0.3, 0.0, 0.7, 1.0] {
                    for xi in [[a * r, t * r], [t * r, a * r], [a * (r + 0.4), t]] {
                        assert!(p.value(&xi).norm() <= env * (1.0 + 1e-12) + 1e-300, "r={r} {xi:?}");
                    }
                }
            }
        }
        assert_eq!(Separable::bump(1, 1.5).decay(), Decay::Compact(1.5));
        assert_eq!(Separable::constant(2, 1.0).decay(), Decay::None);
    }

    #[test]
    fn norms_of_products() {
        // ∫ e^{−s²/σ²} ds = σ√π and ∫ e^{−s²/2σ²} ds = σ√(2π) per coordinate
        let g = Separable::gaussian(2, 0.0, 0.5);
        assert!((g.l2_norm_sq().unwrap() - (0.5 * PI.sqrt()).powi(2)).abs() < 1e-12);
        assert!((g.integral().unwrap().re - 0.25 * 2.0 * PI).abs() < 1e-12);
        let flowed = Flowed { inner: Arc::new(g.clone()), p: vec![1.0, 0.0], t: 3.0 };
        assert!((l2_norm_sq(&flowed).unwrap() - g.l2_norm_sq().unwrap()).abs() < 1e-10);
    }

    #[test]
    fn flow_factor_small_and_large() {
        for s in [0.0, 1e-7, 1e-5, 1e-3, 0.25, 3.7] {
            let q = integrate(|t| Complex64::from_polar(1.0, 2.0 * PI * s * t), 0.0, 1.0, 1e-15, 1e-13, 1000).unwrap();
            assert!((flow_factor(s) - q.value).norm() < 1e-12, "{s}");
        }
    }
}
