//! Quantum variance of eigenbases: how far the diagonal matrix elements
//! `⟨a φ_j, φ_j⟩` of an observable stay from its space average.
//!
//! Torus bases are exact (plane waves, or plane waves rotated inside each
//! eigenspace); Heisenberg bases come from the grid eigensolver.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::io::Write;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::{eigensolve, LanczosOptions, Target, TwistedGrid, TwistedGridOperator};
use crate::numeric::integrate;
use crate::semiclassical::{for_each_box_point, TorusSymbol, TrigFunction};

const FOUR_PI_SQ: f64 = 4.0 * PI * PI;

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum BasisKind {
    Exponential,
    Mixed { seed: u64 },
    Grid,
}

#[derive(Debug, Clone)]
pub enum Eigenfunction {
    Trig(TrigFunction),
    /// Unit-norm grid values, index `(i·ny + j)·nt + l`.
    Grid(Vec<f64>),
}

#[derive(Debug, Clone)]
pub struct BasisEntry {
    pub lambda: f64,
    pub function: Eigenfunction,
}

#[derive(Debug, Clone)]
pub struct EigenBasis {
    pub kind: BasisKind,
    pub entries: Vec<BasisEntry>,
    /// Every eigenvalue up to this bound is present.
    pub lambda_max: f64,
    pub grid: Option<TwistedGrid>,
    pub orthonormality_defect: f64,
}

/// Lattice points with `4π²|m|² ≤ lambda_max`, grouped by `|m|²`.
fn torus_shells(dim: usize, lambda_max: f64) -> Result<BTreeMap<i64, Vec<Vec<i64>>>> {
    if dim == 0 || !(lambda_max >= 0.0) || !lambda_max.is_finite() {
        return Err(Error::input("torus bases need n ≥ 1 and a finite Λ ≥ 0"));
    }
    let r = (lambda_max / FOUR_PI_SQ).sqrt().floor() as i64;
    let mut shells: BTreeMap<i64, Vec<Vec<i64>>> = BTreeMap::new();
    for_each_box_point(dim, r, &mut |m| {
        let s: i64 = m.iter().map(|v| v * v).sum();
        if FOUR_PI_SQ * s as f64 <= lambda_max {
            shells.entry(s).or_default().push(m.to_vec());
        }
    });
    Ok(shells)
}

/// Haar-distributed orthogonal matrix (QR of a Gaussian matrix with the
/// sign fix on the diagonal of R).
fn random_orthogonal(n: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    let g = DMatrix::from_fn(n, n, |_, _| StandardNormal.sample(rng));
    let qr = g.qr();
    let (mut q, r) = (qr.q(), qr.r());
    for j in 0..n {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    q
}

fn trig_defect(entries: &[BasisEntry]) -> f64 {
    // only functions in the same eigenspace can overlap
    let mut worst: f64 = 0.0;
    let mut start = 0;
    while start < entries.len() {
        let mut end = start + 1;
        while end < entries.len() && entries[end].lambda == entries[start].lambda {
            end += 1;
        }
        for i in start..end {
            for j in i..end {
                let (Eigenfunction::Trig(a), Eigenfunction::Trig(b)) = (&entries[i].function, &entries[j].function) else {
                    continue;
                };
                let ip: Complex64 = a.coefficients().map(|(m, c)| c * b.coefficient(m).conj()).sum();
                let want = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((ip - want).norm());
            }
        }
        start = end;
    }
    worst
}

impl EigenBasis {
    /// Plane waves `e^{2πi m·x}` with `4π²|m|² ≤ Λ`.
    pub fn torus_exponential(dim: usize, lambda_max: f64) -> Result<Self> {
        let mut entries = Vec::new();
        for (s, ms) in torus_shells(dim, lambda_max)? {
            for m in ms {
                entries.push(BasisEntry {
                    lambda: FOUR_PI_SQ * s as f64,
                    function: Eigenfunction::Trig(TrigFunction::mode(dim, &m, Complex64::new(1.0, 0.0))),
                });
            }
        }
        let defect = trig_defect(&entries);
        Ok(EigenBasis { kind: BasisKind::Exponential, entries, lambda_max, grid: None, orthonormality_defect: defect })
    }

    /// Plane waves rotated by a seeded random orthogonal matrix inside each
    /// eigenspace; still an orthonormal eigenbasis.
    pub fn torus_mixed(dim: usize, lambda_max: f64, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut entries = Vec::new();
        for (s, ms) in torus_shells(dim, lambda_max)? {
            let q = random_orthogonal(ms.len(), &mut rng);
            for j in 0..ms.len() {
                let mut f = TrigFunction::new(dim);
                for (i, m) in ms.iter().enumerate() {
                    f.add(m, Complex64::new(q[(i, j)], 0.0));
                }
                entries.push(BasisEntry { lambda: FOUR_PI_SQ * s as f64, function: Eigenfunction::Trig(f) });
            }
        }
        let defect = trig_defect(&entries);
        Ok(EigenBasis { kind: BasisKind::Mixed { seed }, entries, lambda_max, grid: None, orthonormality_defect: defect })
    }

    /// Grid eigenfunctions of the Heisenberg nil-manifold with `λ ≤ Λ`.
    pub fn heisenberg_grid(grid: TwistedGrid, lambda_max: f64, opts: &LanczosOptions) -> Result<Self> {
        let op = TwistedGridOperator::assemble(grid, true)?;
        let result = eigensolve(&op, Target::Below(lambda_max), opts)?;
        let defect = result.orthonormality_defect();
        let entries = result
            .pairs
            .into_iter()
            .map(|p| BasisEntry { lambda: p.lambda, function: Eigenfunction::Grid(p.vector) })
            .collect();
        Ok(EigenBasis { kind: BasisKind::Grid, entries, lambda_max, grid: Some(grid), orthonormality_defect: defect })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn describe(&self) -> String {
        match (&self.kind, &self.grid) {
            (BasisKind::Exponential, _) => format!("torus plane waves, {} functions", self.len()),
            (BasisKind::Mixed { seed }, _) => format!("torus mixed (seed {seed}), {} functions", self.len()),
            (BasisKind::Grid, Some(g)) => format!("Heisenberg grid {g}, {} functions", self.len()),
            (BasisKind::Grid, None) => "grid".into(),
        }
    }

    /// Entries with `λ ≤ Λ`; a range error when the basis stops short.
    pub fn up_to(&self, lambda: f64) -> Result<&[BasisEntry]> {
        if lambda > self.lambda_max * (1.0 + 1e-12) {
            return Err(Error::range(format!(
                "basis covers λ ≤ {} but λ ≤ {lambda} was requested",
                self.lambda_max
            )));
        }
        let n = self.entries.partition_point(|e| e.lambda <= lambda * (1.0 + 1e-12));
        Ok(&self.entries[..n])
    }
}

/// A trigonometric polynomial in the horizontal coordinates,
/// `a(x) = Σ_p â(p) e^{2πi p·x}`.
#[derive(Debug, Clone)]
pub struct PositionObservable {
    coeffs: TrigFunction,
    label: String,
}

impl PositionObservable {
    /// From real frequency vectors; non-integer frequencies are not periodic
    /// under the lattice and are rejected.
    pub fn new(dim: usize, modes: &[(Vec<f64>, Complex64)], label: impl Into<String>) -> Result<Self> {
        let mut coeffs = TrigFunction::new(dim);
        for (p, c) in modes {
            if p.len() != dim {
                return Err(Error::input(format!("frequency {p:?} is not {dim}-dimensional")));
            }
            if p.iter().any(|v| (v - v.round()).abs() > 1e-12) {
                return Err(Error::input(format!("frequency {p:?} is not periodic under the lattice")));
            }
            let m: Vec<i64> = p.iter().map(|v| v.round() as i64).collect();
            coeffs.add(&m, *c);
        }
        Ok(PositionObservable { coeffs, label: label.into() })
    }

    /// `cos 2π(p·x)`.
    pub fn cosine(p: &[i64]) -> Self {
        let dim = p.len();
        let neg: Vec<i64> = p.iter().map(|v| -v).collect();
        let mut coeffs = TrigFunction::mode(dim, p, Complex64::new(0.5, 0.0));
        coeffs.add(&neg, Complex64::new(0.5, 0.0));
        PositionObservable { coeffs, label: format!("cos 2π{p:?}·x") }
    }

    pub fn constant(dim: usize, c: f64) -> Self {
        PositionObservable { coeffs: TrigFunction::mode(dim, &vec![0; dim], Complex64::new(c, 0.0)), label: format!("{c}") }
    }

    /// `a + c`.
    pub fn shifted(&self, c: f64) -> Self {
        let mut coeffs = self.coeffs.clone();
        coeffs.add(&vec![0; coeffs.dim()], Complex64::new(c, 0.0));
        PositionObservable { coeffs, label: format!("{} + {c}", self.label) }
    }

    pub fn dim(&self) -> usize {
        self.coeffs.dim()
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn eval(&self, x: &[f64]) -> Complex64 {
        self.coeffs.eval(x)
    }

    /// `(1/Vol)∫ a`: the zero mode.
    pub fn average(&self) -> Complex64 {
        self.coeffs.coefficient(&vec![0; self.dim()])
    }
}

/// `⟨a φ, φ⟩` for a position observable; exact for trigonometric `φ`,
/// midpoint rule on the grid.
pub fn matrix_element(a: &PositionObservable, phi: &BasisEntry, grid: Option<&TwistedGrid>) -> Result<Complex64> {
    match &phi.function {
        Eigenfunction::Trig(f) => {
            if f.dim() != a.dim() {
                return Err(Error::input("observable and eigenfunction dimensions differ"));
            }
            // ⟨aφ, φ⟩ = Σ_p â(p) Σ_m c_m conj(c_{m+p})
            let mut total = Complex64::default();
            let mut shifted = vec![0i64; a.dim()];
            for (p, ap) in a.coeffs.coefficients() {
                for (m, c) in f.coefficients() {
                    for ((s, &mv), &pv) in shifted.iter_mut().zip(m).zip(p) {
                        *s = mv + pv;
                    }
                    total += ap * c * f.coefficient(&shifted).conj();
                }
            }
            Ok(total)
        }
        Eigenfunction::Grid(v) => {
            let g = grid.ok_or_else(|| Error::input("grid eigenfunctions need their grid"))?;
            if a.dim() != 2 {
                return Err(Error::input("observables on the Heisenberg nil-manifold depend on (x, y) only"));
            }
            if v.len() != g.len() {
                return Err(Error::input("eigenvector length does not match the grid"));
            }
            let mut total = Complex64::default();
            for i in 0..g.nx {
                for j in 0..g.ny {
                    let p = g.point(i, j, 0);
                    let w = a.eval(&[p[0], p[1]]);
                    let base = g.index(i, j, 0);
                    let mass: f64 = v[base..base + g.nt].iter().map(|x| x * x).sum();
                    total += w * mass;
                }
            }
            Ok(total)
        }
    }
}

/// Diagonal matrix elements for every basis entry with `λ ≤ Λ`.
pub fn matrix_elements(basis: &EigenBasis, a: &PositionObservable, lambda: f64) -> Result<Vec<(f64, Complex64)>> {
    basis
        .up_to(lambda)?
        .par_iter()
        .map(|e| Ok((e.lambda, matrix_element(a, e, basis.grid.as_ref())?)))
        .collect()
}

/// `V(ε) = N(ε⁻²)⁻¹ Σ_{λ_j ≤ ε⁻²} |⟨aφ_j, φ_j⟩ − (1/Vol)∫a|²`, with the count.
pub fn variance(basis: &EigenBasis, a: &PositionObservable, eps: f64) -> Result<(f64, usize)> {
    if !(eps > 0.0) {
        return Err(Error::input(format!("ε must be positive, got {eps}")));
    }
    let elems = matrix_elements(basis, a, eps.powi(-2))?;
    if elems.is_empty() {
        return Err(Error::range(format!("no eigenvalues below ε⁻² = {}", eps.powi(-2))));
    }
    let offset = a.average();
    let v = elems.iter().map(|(_, e)| (e - offset).norm_sqr()).sum::<f64>() / elems.len() as f64;
    Ok((v, elems.len()))
}

#[derive(Debug, Clone, Serialize)]
pub struct VarianceReport {
    pub observable: String,
    pub basis: String,
    pub offset: f64,
    pub epsilons: Vec<f64>,
    pub counts: Vec<usize>,
    pub variances: Vec<f64>,
}

impl VarianceReport {
    pub fn compute(basis: &EigenBasis, a: &PositionObservable, epsilons: &[f64]) -> Result<Self> {
        let mut counts = Vec::new();
        let mut variances = Vec::new();
        for &e in epsilons {
            let (v, n) = variance(basis, a, e)?;
            counts.push(n);
            variances.push(v);
        }
        Ok(VarianceReport {
            observable: a.label().to_string(),
            basis: basis.describe(),
            offset: a.average().re,
            epsilons: epsilons.to_vec(),
            counts,
            variances,
        })
    }

    /// True when each variance is below the previous one (ε decreasing).
    pub fn strictly_decreasing(&self) -> bool {
        self.variances.windows(2).all(|w| w[1] < w[0])
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        let io = |e: csv::Error| Error::Io(std::io::Error::other(e));
        out.write_record(["epsilon", "N", "variance", "offset"]).map_err(io)?;
        for ((e, n), v) in self.epsilons.iter().zip(&self.counts).zip(&self.variances) {
            out.write_record([
                crate::report::fmt_f64(*e),
                n.to_string(),
                crate::report::fmt_f64(*v),
                crate::report::fmt_f64(self.offset),
            ])
            .map_err(io)?;
        }
        out.flush()?;
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct DensityReport {
    pub delta: f64,
    pub lambdas: Vec<f64>,
    pub counts: Vec<usize>,
    /// Indices `j ≤ N(Λ)` with `|⟨aφ_j, φ_j⟩ − offset| > δ`.
    pub outliers: Vec<usize>,
    /// Fraction of the remaining (good) indices.
    pub density: Vec<f64>,
}

/// Fraction of well-behaved matrix elements below each threshold.
/// `elements` must be sorted by eigenvalue.
pub fn density_one_report(elements: &[(f64, Complex64)], offset: Complex64, lambdas: &[f64], delta: f64) -> DensityReport {
    let mut counts = Vec::new();
    let mut outliers = Vec::new();
    let mut density = Vec::new();
    for &l in lambdas {
        let upto: Vec<&(f64, Complex64)> = elements.iter().take_while(|(lj, _)| *lj <= l * (1.0 + 1e-12)).collect();
        let bad = upto.iter().filter(|(_, e)| (e - offset).norm() > delta).count();
        counts.push(upto.len());
        outliers.push(bad);
        density.push(if upto.is_empty() { 1.0 } else { 1.0 - bad as f64 / upto.len() as f64 });
    }
    DensityReport { delta, lambdas: lambdas.to_vec(), counts, outliers, density }
}

#[derive(Debug, Clone, Serialize)]
pub struct WeylAverage {
    pub epsilon: f64,
    pub window: (f64, f64),
    pub count: usize,
    pub average: Complex64,
    /// `∫∫ a 1_{[α,β]}(4π²|ξ|²) / ∫∫ 1_{[α,β]}(4π²|ξ|²)`.
    pub limit: Complex64,
}

/// `N_{[α,β]}(ε⁻²)⁻¹ Σ_{λ_j ∈ ε⁻²[α,β]} ⟨Op^(ε)(a) φ_j, φ_j⟩` on a torus basis.
pub fn generalized_weyl_average(basis: &EigenBasis, a: &TorusSymbol, window: (f64, f64), eps: f64) -> Result<WeylAverage> {
    let (alpha, beta) = window;
    if !(alpha >= 0.0 && beta > alpha) {
        return Err(Error::input(format!("window [{alpha}, {beta}] is empty")));
    }
    if basis.kind == BasisKind::Grid {
        return Err(Error::input("generalized Weyl averages need a torus basis"));
    }
    let lo = alpha / (eps * eps);
    let hi = beta / (eps * eps);
    let entries: Vec<&BasisEntry> =
        basis.up_to(hi)?.iter().filter(|e| e.lambda >= lo * (1.0 - 1e-12)).collect();
    if entries.is_empty() {
        return Err(Error::range(format!("no eigenvalues in [{lo}, {hi}]")));
    }
    let sum: Complex64 = entries
        .par_iter()
        .map(|e| {
            let Eigenfunction::Trig(f) = &e.function else { unreachable!("torus bases hold trigonometric functions") };
            let g = crate::semiclassical::op_apply(a, eps, f);
            f.coefficients().map(|(m, c)| g.coefficient(m) * c.conj()).sum::<Complex64>()
        })
        .sum();
    Ok(WeylAverage {
        epsilon: eps,
        window,
        count: entries.len(),
        average: sum / entries.len() as f64,
        limit: window_average(a, alpha, beta)?,
    })
}

/// Mean of `ψ_0` over the shell `α ≤ 4π²|ξ|² ≤ β` (only the zero mode
/// survives the `x`-integral).
fn window_average(a: &TorusSymbol, alpha: f64, beta: f64) -> Result<Complex64> {
    let dim = a.dim();
    let Some(psi) = a.profile(&vec![0; dim]) else { return Ok(Complex64::default()) };
    let (r0, r1) = ((alpha / FOUR_PI_SQ).sqrt(), (beta / FOUR_PI_SQ).sqrt());
    match dim {
        1 => {
            let f = |r: f64| psi.value(&[r]) + psi.value(&[-r]);
            Ok(integrate(f, r0, r1, 1e-14, 1e-12, 10_000)?.value / (2.0 * (r1 - r0)))
        }
        2 => {
            let f = |r: f64| {
                integrate(|th: f64| psi.value(&[r * th.cos(), r * th.sin()]), 0.0, 2.0 * PI, 1e-14, 1e-12, 10_000)
                    .map(|q| q.value * r)
                    .unwrap_or(Complex64::new(f64::NAN, 0.0))
            };
            let v = integrate(f, r0, r1, 1e-13, 1e-11, 10_000)?.value / (PI * (r1 * r1 - r0 * r0));
            if v.re.is_finite() {
                Ok(v)
            } else {
                Err(Error::capability("shell quadrature failed"))
            }
        }
        n => Err(Error::capability(format!("shell averages are implemented for n ≤ 2, got {n}"))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::semiclassical::Separable;
    use std::sync::Arc;

    #[test]
    fn exponential_basis_has_zero_variance() {
        let b = EigenBasis::torus_exponential(2, FOUR_PI_SQ * 40.0).unwrap();
        assert!(b.orthonormality_defect < 1e-14);
        let a = PositionObservable::cosine(&[1, 1]);
        for eps in [0.2, 0.1, 0.05] {
            assert_eq!(variance(&b, &a, eps).unwrap().0, 0.0);
        }
        let one = PositionObservable::constant(2, 1.0);
        for e in b.up_to(100.0).unwrap() {
            assert!((matrix_element(&one, e, None).unwrap() - 1.0).norm() < 1e-15);
        }
    }

    #[test]
    fn mixing_keeps_shell_traces() {
        let lambda = FOUR_PI_SQ * 30.0;
        let e = EigenBasis::torus_exponential(2, lambda).unwrap();
        let m = EigenBasis::torus_mixed(2, lambda, 5).unwrap();
        assert!(m.orthonormality_defect < 1e-12);
        assert_eq!(e.len(), m.len());
        let a = PositionObservable::cosine(&[1, 1]).shifted(0.3);
        let te: Complex64 = matrix_elements(&e, &a, lambda).unwrap().iter().map(|x| x.1).sum();
        let tm: Complex64 = matrix_elements(&m, &a, lambda).unwrap().iter().map(|x| x.1).sum();
        assert!((te - tm).norm() < 1e-10);
        // the offset tracks constants
        let v0 = variance(&m, &PositionObservable::cosine(&[1, 1]), 0.05).unwrap().0;
        let v1 = variance(&m, &a, 0.05).unwrap().0;
        assert!((v0 - v1).abs() < 1e-14);
        assert!(v0 > 0.0);
    }

    #[test]
    fn coverage_and_periodicity_errors() {
        let b = EigenBasis::torus_exponential(1, 100.0).unwrap();
        assert!(matches!(variance(&b, &PositionObservable::cosine(&[1]), 0.05), Err(Error::Range(_))));
        assert!(matches!(
            PositionObservable::new(2, &[(vec![0.5, 0.0], Complex64::new(1.0, 0.0))], "half"),
            Err(Error::Input(_))
        ));
    }

    #[test]
    fn density_counts() {
        let elems: Vec<(f64, Complex64)> = (0..10).map(|j| (j as f64, Complex64::new(0.0, 0.0))).collect();
        let r = density_one_report(&elems, Complex64::default(), &[4.0, 9.0], 0.1);
        assert_eq!(r.density, vec![1.0, 1.0]);
        let mut with_outlier = elems.clone();
        with_outlier[3].1 = Complex64::new(1.0, 0.0);
        let r = density_one_report(&with_outlier, Complex64::default(), &[9.0], 0.1);
        assert_eq!(r.outliers, vec![1]);
        assert!((r.density[0] - 0.9).abs() < 1e-15);
    }

    #[test]
    fn grid_elements_of_constants() {
        let g = TwistedGrid::new(8, 8, 16).unwrap();
        let v = vec![1.0 / (g.len() as f64).sqrt(); g.len()];
        let e = BasisEntry { lambda: 0.0, function: Eigenfunction::Grid(v) };
        let one = matrix_element(&PositionObservable::constant(2, 1.0), &e, Some(&g)).unwrap();
        assert!((one - 1.0).norm() < 1e-14);
        let c = matrix_element(&PositionObservable::cosine(&[1, 0]), &e, Some(&g)).unwrap();
        assert!(c.norm() < 1e-14);
    }

    #[test]
    fn weyl_average_of_constant_profile() {
        let b = EigenBasis::torus_exponential(2, 4000.0).unwrap();
        let a = TorusSymbol::single(&[0, 0], Arc::new(Separable::constant(2, 1.0))).unwrap();
        let w = generalized_weyl_average(&b, &a, (0.0, 1.0), 0.02).unwrap();
        assert!((w.average - 1.0).norm() < 1e-14);
        assert!((w.limit - 1.0).norm() < 1e-10);
        assert!(matches!(generalized_weyl_average(&b, &a, (1.0, 1.0), 0.02), Err(Error::Input(_))));
    }
}
