//! Kohn–Nirenberg calculus on the flat torus `Tⁿ = ℝⁿ/ℤⁿ`.
//!
//! A symbol `a(x, ξ) = Σ_p e^{2πi p·x} ψ_p(ξ)` acts on trigonometric
//! polynomials by
//!
//! ```text
//! Op^(ε)(a) e^{2πi m·x} = Σ_p ψ_p(εm) e^{2πi (m+p)·x}
//! ```
//!
//! Everything here is exact up to certified lattice-sum tails: Hilbert–Schmidt
//! norms and traces, the commutator with the Laplacian, the `A₀` operator
//! norm bound and the averages of the free flow `a(x + tξ, ξ)`.

mod parse;
pub mod profile;

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::sync::Arc;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::numeric::integrate;
pub use profile::{
    flow_factor, Decay, Factor, FlowAveraged, Flowed, Profile, ProfileRef, Separable, Term, Weight,
};

/// Propagators written as `e^{2itÊ}` move symbols at twice the free speed;
/// a time average over `[0, T]` then uses flow time `FLOW_SPEED·T`.
pub const FLOW_SPEED: f64 = 2.0;

/// Lattice sums touching more points than this are refused.
const MAX_LATTICE_POINTS: usize = 50_000_000;

/// `f(x) = Σ_m f̂(m) e^{2πi m·x}` with finitely many nonzero coefficients.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrigFunction {
    dim: usize,
    coeffs: BTreeMap<Vec<i64>, Complex64>,
}

impl TrigFunction {
    pub fn new(dim: usize) -> Self {
        TrigFunction { dim, coeffs: BTreeMap::new() }
    }

    pub fn mode(dim: usize, m: &[i64], c: Complex64) -> Self {
        let mut f = Self::new(dim);
        f.add(m, c);
        f
    }

    /// Gaussian random coefficients on `|m|_∞ ≤ radius`.
    pub fn random(dim: usize, radius: i64, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut f = Self::new(dim);
        for_each_box_point(dim, radius, &mut |m| {
            let c = Complex64::new(rng.sample(StandardNormal), rng.sample(StandardNormal));
            f.add(m, c);
        });
        f
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn add(&mut self, m: &[i64], c: Complex64) {
        assert_eq!(m.len(), self.dim, "mode has the wrong dimension");
        *self.coeffs.entry(m.to_vec()).or_default() += c;
    }

    pub fn coefficient(&self, m: &[i64]) -> Complex64 {
        self.coeffs.get(m).copied().unwrap_or_default()
    }

    pub fn coefficients(&self) -> impl Iterator<Item = (&Vec<i64>, &Complex64)> {
        self.coeffs.iter()
    }

    /// `‖f‖²_{L²(Tⁿ)}` by Parseval.
    pub fn norm_sq(&self) -> f64 {
        self.coeffs.values().map(|c| c.norm_sqr()).sum()
    }

    /// `−Δf`.
    pub fn laplacian(&self) -> Self {
        let mut out = self.clone();
        for (m, c) in out.coeffs.iter_mut() {
            *c *= 4.0 * PI * PI * m.iter().map(|&v| (v * v) as f64).sum::<f64>();
        }
        out
    }

    pub fn eval(&self, x: &[f64]) -> Complex64 {
        self.coeffs
            .iter()
            .map(|(m, c)| c * Complex64::from_polar(1.0, 2.0 * PI * m.iter().zip(x).map(|(&a, b)| a as f64 * b).sum::<f64>()))
            .sum()
    }

    pub fn scaled(&self, s: Complex64) -> Self {
        let mut out = self.clone();
        out.coeffs.values_mut().for_each(|c| *c *= s);
        out
    }

    pub fn sub(&self, other: &Self) -> Self {
        let mut out = self.clone();
        for (m, c) in &other.coeffs {
            out.add(m, -c);
        }
        out
    }

    /// Largest coefficient modulus.
    pub fn max_abs(&self) -> f64 {
        self.coeffs.values().fold(0.0, |a, c| a.max(c.norm()))
    }
}

/// `a(x, ξ) = Σ_p e^{2πi p·x} ψ_p(ξ)`.
#[derive(Debug, Clone)]
pub struct TorusSymbol {
    dim: usize,
    modes: BTreeMap<Vec<i64>, ProfileRef>,
}

impl TorusSymbol {
    pub fn new(dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::input("symbols need dimension at least 1"));
        }
        Ok(TorusSymbol { dim, modes: BTreeMap::new() })
    }

    /// A single mode `e^{2πi p·x} ψ(ξ)`.
    pub fn single(p: &[i64], profile: ProfileRef) -> Result<Self> {
        let mut a = Self::new(p.len())?;
        a.add_mode(p, profile)?;
        Ok(a)
    }

    /// Adds `e^{2πi p·x} ψ(ξ)`; repeated modes are summed when both
    /// profiles have product form.
    pub fn add_mode(&mut self, p: &[i64], profile: ProfileRef) -> Result<()> {
        if p.len() != self.dim || profile.dim() != self.dim {
            return Err(Error::input(format!("mode {p:?} does not match the symbol dimension {}", self.dim)));
        }
        let merged: ProfileRef = match self.modes.get(p) {
            None => profile,
            Some(old) => match (old.separable(), profile.separable()) {
                (Some(a), Some(b)) => Arc::new(a.plus(b)),
                _ => return Err(Error::input(format!("mode {p:?} given twice with non-product profiles"))),
            },
        };
        self.modes.insert(p.to_vec(), merged);
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn modes(&self) -> impl Iterator<Item = (&Vec<i64>, &ProfileRef)> {
        self.modes.iter()
    }

    pub fn profile(&self, p: &[i64]) -> Option<&ProfileRef> {
        self.modes.get(p)
    }

    pub fn eval(&self, x: &[f64], xi: &[f64]) -> Complex64 {
        self.modes
            .iter()
            .map(|(p, psi)| {
                let phase = 2.0 * PI * p.iter().zip(x).map(|(&a, b)| a as f64 * b).sum::<f64>();
                Complex64::from_polar(1.0, phase) * psi.value(xi)
            })
            .sum()
    }

    fn map_modes(&self, f: impl Fn(&[i64], &ProfileRef) -> Option<ProfileRef>) -> TorusSymbol {
        TorusSymbol {
            dim: self.dim,
            modes: self.modes.iter().filter_map(|(p, psi)| f(p, psi).map(|q| (p.clone(), q))).collect(),
        }
    }

    /// `a(x, εξ)`.
    pub fn dilated(&self, eps: f64) -> TorusSymbol {
        self.map_modes(|_, psi| Some(profile::dilated(psi, eps)))
    }

    /// `−Δ_x a`.
    pub fn laplacian_x(&self) -> TorusSymbol {
        self.map_modes(|p, psi| {
            let w = 4.0 * PI * PI * p.iter().map(|&v| (v * v) as f64).sum::<f64>();
            (w != 0.0).then(|| profile::scaled(psi, Complex64::new(w, 0.0)))
        })
    }

    /// `Êa = Σ_j ∂_{x_j} a · 2πiξ_j`, so mode `p` becomes `−4π²(p·ξ)ψ_p`.
    pub fn generator(&self) -> TorusSymbol {
        self.map_modes(|p, psi| {
            if p.iter().all(|&v| v == 0) {
                return None;
            }
            let w: Vec<f64> = p.iter().map(|&v| v as f64).collect();
            Some(profile::times_linear(psi, &w, Complex64::new(-4.0 * PI * PI, 0.0)))
        })
    }

    /// The free flow `a(x + tξ, ξ)`.
    pub fn flow(&self, t: f64) -> TorusSymbol {
        self.map_modes(|p, psi| {
            if p.iter().all(|&v| v == 0) {
                return Some(psi.clone());
            }
            Some(Arc::new(Flowed { inner: psi.clone(), p: p.iter().map(|&v| v as f64).collect(), t }))
        })
    }

    /// `(1/T) ∫₀^T a(x + tξ, ξ) dt`; pass `FLOW_SPEED·T` for averages of
    /// `e^{2itÊ}`.
    pub fn ergodic_average(&self, time: f64) -> Result<TorusSymbol> {
        if !(time > 0.0) || !time.is_finite() {
            return Err(Error::input(format!("averaging time must be positive, got {time}")));
        }
        Ok(self.map_modes(|p, psi| {
            if p.iter().all(|&v| v == 0) {
                return Some(psi.clone());
            }
            Some(Arc::new(FlowAveraged { inner: psi.clone(), p: p.iter().map(|&v| v as f64).collect(), time }))
        }))
    }

    /// Projection onto flow-invariant symbols: the `x`-average.
    pub fn ergodic_projection(&self) -> TorusSymbol {
        self.map_modes(|p, psi| p.iter().all(|&v| v == 0).then(|| psi.clone()))
    }

    /// Removes the `p = 0` mode.
    pub fn without_mean(&self) -> TorusSymbol {
        self.map_modes(|p, psi| p.iter().any(|&v| v != 0).then(|| psi.clone()))
    }

    /// `‖a‖²_{L²(Tⁿ×ℝⁿ)} = Σ_p ‖ψ_p‖²`.
    pub fn l2_norm_sq(&self) -> Result<f64> {
        self.modes.values().map(|psi| profile::l2_norm_sq(psi.as_ref())).sum()
    }

    /// `∫∫ a dx dξ = ∫ ψ_0`.
    pub fn integral(&self) -> Result<Complex64> {
        match self.modes.get(&vec![0; self.dim]) {
            None => Ok(Complex64::default()),
            Some(psi) => match psi.separable() {
                Some(s) => s.integral(),
                None => Err(Error::capability("integrals of non-product profiles are not implemented")),
            },
        }
    }

    /// Largest `|p|_∞` among the modes.
    pub fn mode_radius(&self) -> i64 {
        self.modes.keys().flat_map(|p| p.iter().map(|v| v.abs())).max().unwrap_or(0)
    }
}

/// `Op^(ε)(a) f`, exact.
pub fn op_apply(a: &TorusSymbol, eps: f64, f: &TrigFunction) -> TrigFunction {
    assert_eq!(a.dim, f.dim, "symbol and function dimensions differ");
    let mut out = TrigFunction::new(a.dim);
    let mut xi = vec![0.0; a.dim];
    let mut target = vec![0i64; a.dim];
    for (m, c) in &f.coeffs {
        for (x, &v) in xi.iter_mut().zip(m) {
            *x = eps * v as f64;
        }
        for (p, psi) in &a.modes {
            for ((t, &mv), &pv) in target.iter_mut().zip(m).zip(p) {
                *t = mv + pv;
            }
            out.add(&target, c * psi.value(&xi));
        }
    }
    out
}

/// Calls `f` on every point of `{|m|_∞ ≤ radius}`.
pub fn for_each_box_point(dim: usize, radius: i64, f: &mut dyn FnMut(&[i64])) {
    let mut m = vec![-radius; dim];
    if radius < 0 {
        return;
    }
    loop {
        f(&m);
        let mut j = 0;
        loop {
            if j == dim {
                return;
            }
            if m[j] < radius {
                m[j] += 1;
                break;
            }
            m[j] = -radius;
            j += 1;
        }
    }
}

/// Calls `f` on every point with `|m|_∞ = k`.
pub fn for_each_shell_point(dim: usize, k: i64, f: &mut dyn FnMut(&[i64])) {
    fn rec(prefix: &mut Vec<i64>, dim: usize, k: i64, reached: bool, f: &mut dyn FnMut(&[i64])) {
        if prefix.len() == dim {
            if reached {
                f(prefix);
            }
            return;
        }
        let left = dim - prefix.len() - 1;
        for v in -k..=k {
            let hit = reached || v.abs() == k;
            // without the boundary yet, the last coordinate must reach it
            if !hit && left == 0 {
                continue;
            }
            prefix.push(v);
            rec(prefix, dim, k, hit, f);
            prefix.pop();
        }
    }
    if k == 0 {
        f(&vec![0; dim]);
    } else {
        rec(&mut Vec::with_capacity(dim), dim, k, false, f);
    }
}

fn shell_count(dim: usize, k: u64) -> f64 {
    if k == 0 {
        1.0
    } else {
        (2.0 * k as f64 + 1.0).powi(dim as i32) - (2.0 * k as f64 - 1.0).powi(dim as i32)
    }
}

/// A lattice sum `Σ_m g(εm)` with the certified bound on the omitted shells.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct LatticeSum {
    pub value: Complex64,
    pub tail_bound: f64,
    pub shells: u64,
    pub points: u64,
}

/// Bound for `Σ_{k > from} count(k)·env(εk)`.
fn shell_tail(dim: usize, eps: f64, from: u64, decay: Decay, env: &dyn Fn(f64) -> f64) -> Result<f64> {
    let mut total = 0.0;
    let mut k = from + 1;
    let mut prev = f64::INFINITY;
    loop {
        if let Decay::Compact(r) = decay {
            if eps * k as f64 > r {
                return Ok(total);
            }
        }
        let term = shell_count(dim, k) * env(eps * k as f64);
        if !term.is_finite() {
            return Err(Error::capability("profile envelope is unbounded"));
        }
        total += term;
        // once terms fall geometrically with ratio below 1/2 the remainder
        // is at most the current term
        if term <= 0.5 * prev && term <= 1e-30 * total.max(f64::MIN_POSITIVE) {
            return Ok(total + term);
        }
        if term == 0.0 && prev == 0.0 {
            return Ok(total);
        }
        prev = term;
        k += 1;
        if k > from + 100_000_000 {
            return Err(Error::capability("envelope tail does not converge"));
        }
    }
}

/// `Σ_{m∈ℤⁿ} g(εm)` where `|g(ξ)| ≤ env(r)` for `|ξ|_∞ ≥ r`; shells are
/// added until the certified tail falls below `rel_tol` of the sum.
pub fn lattice_sum(
    dim: usize,
    eps: f64,
    decay: Decay,
    env: &dyn Fn(f64) -> f64,
    g: &(dyn Fn(&[f64]) -> Complex64 + Sync),
    rel_tol: f64,
) -> Result<LatticeSum> {
    if !(eps > 0.0) || !eps.is_finite() {
        return Err(Error::input(format!("ε must be positive, got {eps}")));
    }
    if decay == Decay::None {
        return Err(Error::capability("lattice sums need a decaying profile"));
    }
    let mut total = Complex64::default();
    let mut points = 0u64;
    let mut k = 0u64;
    loop {
        let mut shell = Vec::new();
        for_each_shell_point(dim, k as i64, &mut |m| shell.push(m.iter().map(|&v| v as f64 * eps).collect::<Vec<_>>()));
        points += shell.len() as u64;
        let values: Vec<Complex64> = shell.par_iter().map(|xi| g(xi)).collect();
        total += values.iter().sum::<Complex64>();
        let next_bound = shell_count(dim, k + 1) * env(eps * (k + 1) as f64);
        let scale = total.norm().max(f64::MIN_POSITIVE);
        let beyond = match decay {
            Decay::Compact(r) => eps * (k + 1) as f64 > r,
            _ => false,
        };
        if beyond || next_bound <= rel_tol * scale {
            let tail = shell_tail(dim, eps, k, decay, env)?;
            if tail <= rel_tol * scale || (tail == 0.0) {
                return Ok(LatticeSum { value: total, tail_bound: tail, shells: k + 1, points });
            }
        }
        if points as usize > MAX_LATTICE_POINTS {
            return Err(Error::capability(format!(
                "lattice sum needs more than {MAX_LATTICE_POINTS} points at ε = {eps}"
            )));
        }
        k += 1;
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct HsReport {
    pub epsilon: f64,
    /// `‖Op^(ε)(a)‖²_HS`.
    pub hs_norm_sq: f64,
    pub tail_bound: f64,
    pub points: u64,
    /// `ε^{−n}‖a‖²_{L²}`.
    pub continuum: f64,
    /// `ε^n‖Op^(ε)(a)‖²_HS / ‖a‖²`.
    pub ratio: f64,
}

/// `‖Op^(ε)(a)‖²_HS = Σ_m Σ_p |ψ_p(εm)|²`.
pub fn hs_norm(a: &TorusSymbol, eps: f64) -> Result<HsReport> {
    let profiles: Vec<&ProfileRef> = a.modes.values().collect();
    let decay = profiles.iter().map(|p| p.decay()).fold(Decay::Compact(0.0), |acc, d| match (acc, d) {
        (Decay::None, _) | (_, Decay::None) => Decay::None,
        (Decay::Rapid, _) | (_, Decay::Rapid) => Decay::Rapid,
        (Decay::Compact(x), Decay::Compact(y)) => Decay::Compact(x.max(y)),
    });
    if decay == Decay::None {
        return Err(Error::capability("Hilbert–Schmidt norm needs decaying profiles"));
    }
    let env = |r: f64| profiles.iter().map(|p| p.envelope(r).powi(2)).sum::<f64>();
    let g = |xi: &[f64]| Complex64::new(profiles.iter().map(|p| p.value(xi).norm_sqr()).sum(), 0.0);
    let s = lattice_sum(a.dim, eps, decay, &env, &g, 1e-16)?;
    let l2 = a.l2_norm_sq()?;
    let n = a.dim as i32;
    let hs = s.value.re;
    Ok(HsReport {
        epsilon: eps,
        hs_norm_sq: hs,
        tail_bound: s.tail_bound,
        points: s.points,
        continuum: l2 / eps.powi(n),
        ratio: if l2 > 0.0 { hs * eps.powi(n) / l2 } else { f64::NAN },
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct TraceReport {
    pub epsilon: f64,
    pub trace: Complex64,
    pub tail_bound: f64,
    /// `ε^{−n}∫∫ a`.
    pub continuum: Complex64,
}

/// `tr Op^(ε)(a) = Σ_m ψ_0(εm)`; other modes shift frequencies and do not
/// contribute.
pub fn trace(a: &TorusSymbol, eps: f64) -> Result<TraceReport> {
    let zero = vec![0; a.dim];
    let Some(psi) = a.modes.get(&zero) else {
        return Ok(TraceReport {
            epsilon: eps,
            trace: Complex64::default(),
            tail_bound: 0.0,
            continuum: Complex64::default(),
        });
    };
    let env = |r: f64| psi.envelope(r);
    let g = |xi: &[f64]| psi.value(xi);
    let s = lattice_sum(a.dim, eps, psi.decay(), &env, &g, 1e-16)?;
    let integral = a.integral()?;
    Ok(TraceReport {
        epsilon: eps,
        trace: s.value,
        tail_bound: s.tail_bound,
        continuum: integral / eps.powi(a.dim as i32),
    })
}

/// The matrix of `Op^(ε)(a)` from modes `|m|_∞ ≤ radius` to modes
/// `|m|_∞ ≤ radius + mode_radius(a)`; returns the row and column labels.
pub fn dense_matrix(a: &TorusSymbol, eps: f64, radius: i64) -> (Vec<Vec<i64>>, Vec<Vec<i64>>, DMatrix<Complex64>) {
    let mut cols = Vec::new();
    for_each_box_point(a.dim, radius, &mut |m| cols.push(m.to_vec()));
    let mut rows = Vec::new();
    for_each_box_point(a.dim, radius + a.mode_radius(), &mut |m| rows.push(m.to_vec()));
    let row_index: BTreeMap<&Vec<i64>, usize> = rows.iter().enumerate().map(|(i, m)| (m, i)).collect();
    let mut mat = DMatrix::zeros(rows.len(), cols.len());
    for (j, m) in cols.iter().enumerate() {
        let f = TrigFunction::mode(a.dim, m, Complex64::new(1.0, 0.0));
        for (k, c) in op_apply(a, eps, &f).coefficients() {
            mat[(row_index[k], j)] += *c;
        }
    }
    (rows, cols, mat)
}

/// Upper bound for `‖a‖_{A₀} = ∫ sup_x |κ_x(z)| dz`, from
/// `Σ_p ∫|ψ̌_p|`, with the quadrature error already added.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct A0Norm {
    pub value: f64,
    pub error: f64,
}

impl A0Norm {
    pub fn upper(&self) -> f64 {
        self.value + self.error
    }
}

pub fn a0_norm(a: &TorusSymbol) -> Result<A0Norm> {
    let mut out = A0Norm { value: 0.0, error: 0.0 };
    for (p, psi) in &a.modes {
        let s = psi
            .separable()
            .ok_or_else(|| Error::capability(format!("A₀ norm of mode {p:?} needs a product-form profile")))?;
        let (v, e) = s.kernel_l1(1e-11)?;
        out.value += v;
        out.error += e;
    }
    Ok(out)
}

#[derive(Debug, Clone, Serialize)]
pub struct NormCheck {
    pub epsilon: f64,
    pub a0_norm: A0Norm,
    pub max_quotient: f64,
    pub trials: usize,
    pub passed: bool,
}

/// Samples `‖Op f‖/‖f‖` over random trigonometric `f` (plus the single
/// modes where `|ψ_p(εm)|` peaks) against the `A₀` bound.
pub fn op_norm_bound_check(a: &TorusSymbol, eps: f64, trials: usize, seed: u64) -> Result<NormCheck> {
    let bound = a0_norm(a)?;
    let radius = 6i64;
    let mut fs: Vec<TrigFunction> = (0..trials as u64).map(|t| TrigFunction::random(a.dim, radius, seed.wrapping_add(t))).collect();
    // modes near the peaks of the profiles
    for psi in a.modes.values() {
        let mut best = (0.0, vec![0i64; a.dim]);
        for_each_box_point(a.dim, radius, &mut |m| {
            let xi: Vec<f64> = m.iter().map(|&v| eps * v as f64).collect();
            let v = psi.value(&xi).norm();
            if v > best.0 {
                best = (v, m.to_vec());
            }
        });
        fs.push(TrigFunction::mode(a.dim, &best.1, Complex64::new(1.0, 0.0)));
    }
    let max_quotient = fs
        .par_iter()
        .map(|f| {
            let n = f.norm_sq();
            if n == 0.0 {
                0.0
            } else {
                (op_apply(a, eps, f).norm_sq() / n).sqrt()
            }
        })
        .reduce(|| 0.0, f64::max);
    Ok(NormCheck {
        epsilon: eps,
        a0_norm: bound,
        max_quotient,
        trials: fs.len(),
        passed: max_quotient <= bound.upper() * (1.0 + 1e-10),
    })
}

/// Checks `[−Δ, Op(a)] f = Op(−Δ_x a) f − 2ε⁻¹ Op(Êa) f` on each `f`;
/// returns the largest coefficient deviation relative to the largest
/// coefficient of the four terms (and at least 1).
pub fn commutator_decomposition_check(a: &TorusSymbol, eps: f64, fs: &[TrigFunction]) -> f64 {
    let la = a.laplacian_x();
    let ea = a.generator();
    fs.par_iter()
        .map(|f| {
            let (l_op, op_l) = (op_apply(a, eps, f).laplacian(), op_apply(a, eps, &f.laplacian()));
            let (op_la, op_ea) = (op_apply(&la, eps, f), op_apply(&ea, eps, f).scaled(Complex64::new(2.0 / eps, 0.0)));
            let lhs = l_op.sub(&op_l);
            let rhs = op_la.sub(&op_ea);
            // rounding is relative to the terms that cancel, not to their
            // (possibly vanishing) difference
            let scale = [&l_op, &op_l, &op_la, &op_ea].iter().map(|g| g.max_abs()).fold(1.0, f64::max);
            lhs.sub(&rhs).max_abs() / scale
        })
        .reduce(|| 0.0, f64::max)
}

/// A random product-form symbol with at most `max_modes` modes in
/// `|p|_∞ ≤ 2`, each a Hermite–Gaussian or a bump.
pub fn random_symbol(dim: usize, max_modes: usize, seed: u64) -> Result<TorusSymbol> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut a = TorusSymbol::new(dim)?;
    let count = rng.gen_range(1..=max_modes.max(1));
    for _ in 0..count {
        let p: Vec<i64> = (0..dim).map(|_| rng.gen_range(-2..=2)).collect();
        let coef = Complex64::new(rng.sample(StandardNormal), rng.sample(StandardNormal));
        let s = if rng.gen_bool(0.7) {
            let factors = (0..dim)
                .map(|_| {
                    let mut f = Factor::hermite(rng.gen_range(0..3), rng.gen_range(0.5..2.0));
                    f.center = rng.gen_range(-1.0..1.0);
                    f
                })
                .collect();
            Separable::new(dim, vec![Term { coef, factors }])?
        } else {
            Separable::bump(dim, rng.gen_range(0.5..3.0)).scaled(coef)
        };
        a.add_mode(&p, Arc::new(s))?;
    }
    Ok(a)
}

/// Random `f` for the commutator suite.
pub fn random_functions(dim: usize, count: usize, radius: i64, seed: u64) -> Vec<TrigFunction> {
    (0..count as u64).map(|t| TrigFunction::random(dim, radius, seed.wrapping_add(1000 + t))).collect()
}

/// `(1/T)∫₀^T ψ_p(ξ) e^{2πi t p·ξ} dt` by quadrature: the oracle for the
/// closed-form averaged profiles.
pub fn time_average_quadrature(psi: &dyn Profile, p: &[i64], time: f64, xi: &[f64]) -> Result<Complex64> {
    let s: f64 = p.iter().zip(xi).map(|(&a, b)| a as f64 * b).sum();
    let v = psi.value(xi);
    let cycles = (s.abs() * time).ceil().max(1.0) as usize;
    let h = time / cycles as f64;
    let mut total = Complex64::default();
    for i in 0..cycles {
        // local variable on each piece keeps the phase accurate at large t
        let t0 = i as f64 * h;
        let q = integrate(
            |u| Complex64::from_polar(1.0, 2.0 * PI * u * s),
            0.0,
            h,
            // full cycles integrate to zero: tolerance relative to |integrand|·h
            1e-14 * h,
            1e-14,
            1_000,
        )?;
        total += Complex64::from_polar(1.0, 2.0 * PI * (t0 * s).fract()) * q.value;
    }
    Ok(v * total / time)
}

#[derive(Debug, Clone, Serialize)]
pub struct ErgodicReport {
    pub times: Vec<f64>,
    /// `‖avg_T(a) − Pa‖_{L²}` per time.
    pub distances: Vec<f64>,
    /// Largest gap between the closed-form and quadrature averages at the
    /// sample points.
    pub quadrature_deviation: f64,
    pub strictly_decreasing: bool,
}

/// Distances `‖avg_T(a) − Pa‖` and the closed-form check at sample points;
/// `times` are effective flow times.
pub fn ergodic_report(a: &TorusSymbol, times: &[f64], samples: &[Vec<f64>]) -> Result<ErgodicReport> {
    let mut distances = Vec::new();
    let mut deviation: f64 = 0.0;
    for &t in times {
        let avg = a.ergodic_average(t)?;
        distances.push(avg.without_mean().l2_norm_sq()?.sqrt());
        for (p, psi) in a.modes() {
            let averaged = avg.profile(p).expect("modes are preserved");
            for xi in samples {
                let exact = averaged.value(xi);
                let quad = time_average_quadrature(psi.as_ref(), p, t, xi)?;
                deviation = deviation.max((exact - quad).norm());
            }
        }
    }
    let strictly_decreasing = distances.windows(2).all(|w| w[1] < w[0]);
    Ok(ErgodicReport { times: times.to_vec(), distances, quadrature_deviation: deviation, strictly_decreasing })
}

pub use parse::parse_symbol;

#[cfg(test)]
mod tests {
    use super::*;

    fn gauss(dim: usize) -> ProfileRef {
        Arc::new(Separable::gaussian(dim, 0.0, 1.0))
    }

    #[test]
    fn multiplier_and_single_mode() {
        let a = TorusSymbol::single(&[0, 0], gauss(2)).unwrap();
        let f = TrigFunction::mode(2, &[3, -1], Complex64::new(2.0, 0.0));
        let g = op_apply(&a, 0.5, &f);
        let want = 2.0 * (-0.5 * (1.5f64 * 1.5 + 0.25)).exp();
        assert!((g.coefficient(&[3, -1]).re - want).abs() < 1e-15);

        let b = TorusSymbol::single(&[1, 0], gauss(2)).unwrap();
        let g = op_apply(&b, 0.5, &f);
        assert!((g.coefficient(&[4, -1]).re - want).abs() < 1e-15);
        assert_eq!(g.coefficient(&[3, -1]), Complex64::default());

        // dilation consistency
        let h = op_apply(&b.dilated(0.5), 1.0, &f);
        assert!(h.sub(&g).max_abs() < 1e-15);
    }

    #[test]
    fn shells_partition_the_box() {
        for dim in 1..=3 {
            let mut n = 0;
            for k in 0..=4 {
                let mut c = 0;
                for_each_shell_point(dim, k, &mut |m| {
                    assert_eq!(m.iter().map(|v| v.abs()).max().unwrap(), k);
                    c += 1;
                });
                assert_eq!(c as f64, shell_count(dim, k as u64));
                n += c;
            }
            assert_eq!(n, 9usize.pow(dim as u32));
        }
    }

    #[test]
    fn hs_and_trace_against_dense() {
        let mut a = TorusSymbol::new(2).unwrap();
        a.add_mode(&[0, 0], Arc::new(Separable::bump(2, 1.5))).unwrap();
        a.add_mode(&[1, -1], Arc::new(Separable::hermite(2, 1, 0.6).scaled(Complex64::new(0.3, 0.4)))).unwrap();
        let eps = 0.5;
        let hs = hs_norm(&a, eps).unwrap();
        let tr = trace(&a, eps).unwrap();
        let (rows, cols, m) = dense_matrix(&a, eps, 20);
        let dense_hs: f64 = m.iter().map(|c| c.norm_sqr()).sum();
        let mut dense_tr = Complex64::default();
        for (j, c) in cols.iter().enumerate() {
            let i = rows.iter().position(|r| r == c).unwrap();
            dense_tr += m[(i, j)];
        }
        assert!((hs.hs_norm_sq - dense_hs).abs() <= 1e-10 * dense_hs, "{} {dense_hs}", hs.hs_norm_sq);
        assert!((tr.trace - dense_tr).norm() <= 1e-10 * dense_tr.norm());
    }

    #[test]
    fn commutator_identity_on_single_modes() {
        let a = TorusSymbol::single(&[1, 0], gauss(2)).unwrap();
        let eps = 0.1;
        let f = TrigFunction::mode(2, &[2, 5], Complex64::new(1.0, 0.0));
        let lhs = op_apply(&a, eps, &f).laplacian().sub(&op_apply(&a, eps, &f.laplacian()));
        let psi = (-0.5 * (0.04 + 0.25f64)).exp();
        let want = 4.0 * PI * PI * (1.0 + 2.0 * 2.0) * psi;
        assert!((lhs.coefficient(&[3, 5]).re - want).abs() < 1e-12 * want);
        assert!(commutator_decomposition_check(&a, eps, &[f]) <= 1e-13);

        let x_free = TorusSymbol::single(&[0, 0], gauss(2)).unwrap();
        let fs = random_functions(2, 3, 4, 1);
        assert!(commutator_decomposition_check(&x_free, eps, &fs) <= 1e-15);
    }

    #[test]
    fn gaussian_a0_bound() {
        let a = TorusSymbol::single(&[0, 1], Arc::new(Separable::gaussian(2, 0.3, 0.8))).unwrap();
        let n = a0_norm(&a).unwrap();
        assert!((n.value - 1.0).abs() < 1e-8);
        let check = op_norm_bound_check(&a, 0.2, 5, 3).unwrap();
        assert!(check.passed && check.max_quotient <= 1.0 + 1e-12);
        let zero = TorusSymbol::new(2).unwrap();
        assert_eq!(op_norm_bound_check(&zero, 0.2, 3, 0).unwrap().max_quotient, 0.0);
    }

    #[test]
    fn flow_is_unitary_and_projection_idempotent() {
        let mut a = TorusSymbol::new(1).unwrap();
        a.add_mode(&[0], gauss(1)).unwrap();
        a.add_mode(&[2], Arc::new(Separable::hermite(1, 2, 0.7))).unwrap();
        let before = a.l2_norm_sq().unwrap();
        let after = a.flow(3.7).l2_norm_sq().unwrap();
        assert!((before - after).abs() < 1e-10 * before);
        let p = a.ergodic_projection();
        assert_eq!(p.modes().count(), 1);
        assert_eq!(p.ergodic_projection().modes().count(), 1);
        // p = 0 symbols are invariant
        let avg = p.ergodic_average(5.0).unwrap();
        assert_eq!(avg.eval(&[0.3], &[0.4]), p.eval(&[0.3], &[0.4]));
    }

    #[test]
    fn decay_requirements() {
        let a = TorusSymbol::single(&[0], Arc::new(Separable::constant(1, 1.0))).unwrap();
        assert!(matches!(hs_norm(&a, 0.5), Err(Error::Capability(_))));
        assert!(matches!(a0_norm(&a), Err(Error::Capability(_))));
    }
}
