//! Finite-difference model of the sub-Laplacian on `Γ\H₁` with
//! `Γ = ℤ × ℤ × ½ℤ`, and the eigensolvers built on it.
//!
//! Grid functions live on `[0,1) × [0,1) × [0,½)` and satisfy `f(γg) = f(g)`.
//! Each horizontal difference quotient uses the exact right translation
//! `g ↦ g·Exp(hX)`: the step moves one cell in `x` (or `y`) and shifts `t` by
//! an amount read off the BCH product, and a step leaving the domain is
//! folded back by a lattice element, which shifts `t` once more. The `t`
//! shifts are applied exactly in the discrete Fourier basis along `t`, so the
//! operator splits into one 2D block per `t`-frequency.

mod lanczos;
mod study;

use std::sync::Arc;

use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::group::poly::Poly;
use crate::group::{multiply_unchecked, GradedLieAlgebra};

pub use lanczos::{lanczos, lanczos_smallest, DenseOperator, EigenPair, EigenResult, LanczosOptions, Target};
pub use study::{
    adjudicate, clusters, convergence_study, eigensolve, solve_sectors, write_eigenvectors, write_spectrum_csv,
    Adjudication, Branch, ConvergenceReport, Hypothesis, SectorResult, StudyOptions,
};

/// A real symmetric operator applied matrix-free.
pub trait SymmetricOperator: Sync {
    fn dim(&self) -> usize;
    fn apply(&self, x: &[f64], y: &mut [f64]);
}

/// Uniform grid on the fundamental domain `[0,1) × [0,1) × [0,½)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TwistedGrid {
    pub nx: usize,
    pub ny: usize,
    pub nt: usize,
}

impl TwistedGrid {
    /// `nt` must be a multiple of both `2·nx` and `2·ny`, so that every wrap
    /// shift `j·nt/ny` (resp. `i·nt/nx`) is a whole number of cells and the
    /// half-period shifts stay on the grid as well.
    pub fn new(nx: usize, ny: usize, nt: usize) -> Result<Self> {
        if nx < 2 || ny < 2 || nt < 2 {
            return Err(Error::input(format!("grid {nx}x{ny}x{nt}: every size must be at least 2")));
        }
        if nt % (2 * nx) != 0 || nt % (2 * ny) != 0 {
            return Err(Error::input(format!(
                "grid {nx}x{ny}x{nt}: N_t must be a multiple of 2·N_x and 2·N_y"
            )));
        }
        Ok(TwistedGrid { nx, ny, nt })
    }

    /// `n × n × 2n`.
    pub fn uniform(n: usize) -> Result<Self> {
        Self::new(n, n, 2 * n)
    }

    /// Parses `NXxNYxNT`.
    pub fn parse(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.trim().split(['x', 'X']).collect();
        let bad = || Error::input(format!("grid must look like 24x24x48, got {s:?}"));
        if parts.len() != 3 {
            return Err(bad());
        }
        let mut v = [0usize; 3];
        for (slot, p) in v.iter_mut().zip(&parts) {
            *slot = p.trim().parse().map_err(|_| bad())?;
        }
        Self::new(v[0], v[1], v[2])
    }

    pub fn hx(&self) -> f64 {
        1.0 / self.nx as f64
    }

    pub fn hy(&self) -> f64 {
        1.0 / self.ny as f64
    }

    pub fn ht(&self) -> f64 {
        0.5 / self.nt as f64
    }

    pub fn len(&self) -> usize {
        self.nx * self.ny * self.nt
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Number of points in one `t`-slice.
    pub fn plane(&self) -> usize {
        self.nx * self.ny
    }

    /// Flat index, `t` fastest.
    pub fn index(&self, i: usize, j: usize, l: usize) -> usize {
        (i * self.ny + j) * self.nt + l
    }

    pub fn point(&self, i: usize, j: usize, l: usize) -> [f64; 3] {
        [i as f64 * self.hx(), j as f64 * self.hy(), l as f64 * self.ht()]
    }

    pub fn cell_volume(&self) -> f64 {
        self.hx() * self.hy() * self.ht()
    }

    /// Signed frequency of Fourier bin `q` along `t`.
    pub fn signed_frequency(&self, q: usize) -> i64 {
        if 2 * q <= self.nt {
            q as i64
        } else {
            q as i64 - self.nt as i64
        }
    }
}

impl std::fmt::Display for TwistedGrid {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}x{}x{}", self.nx, self.ny, self.nt)
    }
}

/// Coefficients of the left-invariant fields of the first-layer generators,
/// `d/ds|₀ (g · Exp(s X_j))`, as polynomials in the coordinates of `g`.
pub fn derive_invariant_fields(g: &GradedLieAlgebra) -> Result<Vec<Vec<Poly>>> {
    if g.step() > 2 {
        return Err(Error::capability(format!(
            "invariant fields are only provided for step ≤ 2 algebras, {} has step {}",
            g.name(),
            g.step()
        )));
    }
    Ok((0..g.dim()).filter(|&j| g.weights()[j] == 1).map(|j| g.left_invariant_field(j)).collect())
}

/// One horizontal difference direction: neighbour of each plane point and
/// the `t`-shift accumulated by the step (translation plus wrap).
#[derive(Debug, Clone)]
struct Step {
    h: f64,
    neighbour: Vec<usize>,
    shift: Vec<f64>,
    wrap: Vec<f64>,
}

impl Step {
    fn new(h: f64, n: usize) -> Self {
        Step { h, neighbour: vec![0; n], shift: vec![0.0; n], wrap: vec![0.0; n] }
    }
}

/// Neighbour tables derived from the group law. `twist = false` drops the
/// `t`-coupling entirely (flat torus in `x, y`).
#[derive(Debug, Clone)]
pub struct Stencil {
    grid: TwistedGrid,
    twist: bool,
    steps: [Step; 2],
}

impl Stencil {
    pub fn new(grid: TwistedGrid, algebra: &GradedLieAlgebra, twist: bool) -> Result<Self> {
        check_algebra(algebra)?;
        let (nx, ny) = (grid.nx, grid.ny);
        let mut steps = [
            Step::new(grid.hx(), grid.plane()),
            Step::new(grid.hy(), grid.plane()),
        ];
        for (dir, step) in steps.iter_mut().enumerate() {
            let mut e = [0.0; 3];
            e[dir] = step.h;
            let mut gamma_inv = [0.0; 3];
            gamma_inv[dir] = -1.0;
            for i in 0..nx {
                for j in 0..ny {
                    let [x, y, _] = grid.point(i, j, 0);
                    let mut p = multiply_unchecked(algebra, &[x, y, 0.0], &e).coords;
                    let mut wrap = 0.0;
                    if p[dir] > 1.0 - 0.5 * step.h {
                        let q = multiply_unchecked(algebra, &gamma_inv, &p).coords;
                        wrap = q[2] - p[2];
                        p = q;
                    }
                    let (fi, fj) = (p[0] * nx as f64, p[1] * ny as f64);
                    if (fi - fi.round()).abs() > 1e-9 || (fj - fj.round()).abs() > 1e-9 {
                        return Err(Error::input("difference step does not land on the grid"));
                    }
                    let (ii, jj) = (fi.round() as usize % nx, fj.round() as usize % ny);
                    step.neighbour[i * ny + j] = ii * ny + jj;
                    if twist {
                        step.shift[i * ny + j] = p[2];
                        step.wrap[i * ny + j] = wrap;
                    }
                }
            }
        }
        Ok(Stencil { grid, twist, steps })
    }

    pub fn grid(&self) -> TwistedGrid {
        self.grid
    }

    pub fn twist(&self) -> bool {
        self.twist
    }

    /// Image of 3D index `(i, j, l)` under one step in direction `dir`
    /// (0 = x, 1 = y) keeping only the wrap part of the `t`-shift, which is a
    /// whole number of cells. Used to check the cocycle of the boundary
    /// identification.
    pub fn wrap_index(&self, dir: usize, i: usize, j: usize, l: usize, forward: bool) -> (usize, usize, usize) {
        let g = self.grid;
        let ht = g.ht();
        let nt = g.nt as i64;
        let wrap_shift = |r: usize| -> i64 { (self.steps[dir].wrap[r] / ht).round() as i64 };
        let r = i * g.ny + j;
        let (target, dl) = if forward {
            let s = self.steps[dir].neighbour[r];
            (s, wrap_shift(r))
        } else {
            let s = self.steps[dir].neighbour.iter().position(|&q| q == r).expect("neighbour map is a bijection");
            (s, -wrap_shift(s))
        };
        let l2 = (l as i64 + dl).rem_euclid(nt) as usize;
        (target / g.ny, target % g.ny, l2)
    }
}

fn check_algebra(g: &GradedLieAlgebra) -> Result<()> {
    let ok = g.dim() == 3 && g.weights() == [1, 1, 2] && {
        let c = crate::group::poly::rational_to_f64(&g.constant(0, 1, 2));
        c == c.round() && c.abs() <= 1.0
    };
    if ok {
        Ok(())
    } else {
        Err(Error::capability(format!(
            "the grid model needs a three-dimensional Heisenberg-type algebra, got {}",
            g.name()
        )))
    }
}

/// Block of the operator acting on functions `e^{iτt} u(x, y)`, `τ = 4πk`.
/// Complex blocks are exposed as real symmetric operators of twice the size
/// (`[Re u; Im u]`); the zero and Nyquist blocks are real.
#[derive(Debug, Clone)]
pub struct SectorOperator {
    frequency: i64,
    n: usize,
    complex: bool,
    dirs: Vec<(f64, Vec<usize>, Vec<Complex64>)>,
}

impl SectorOperator {
    pub fn new(stencil: &Stencil, frequency: i64) -> Self {
        let g = stencil.grid;
        let tau = 4.0 * std::f64::consts::PI * frequency as f64;
        let nyquist = 2 * frequency.unsigned_abs() as usize == g.nt;
        let dirs: Vec<(f64, Vec<usize>, Vec<Complex64>)> = stencil
            .steps
            .iter()
            .map(|s| {
                let phases = s
                    .shift
                    .iter()
                    .map(|&dt| {
                        if nyquist {
                            // a real grid function cannot carry the sine part
                            // of the highest mode
                            Complex64::new((tau * dt).cos(), 0.0)
                        } else {
                            Complex64::from_polar(1.0, tau * dt)
                        }
                    })
                    .collect();
                (s.h, s.neighbour.clone(), phases)
            })
            .collect();
        let complex = dirs.iter().any(|(_, _, p)| p.iter().any(|z| z.im.abs() > 1e-15));
        SectorOperator { frequency, n: g.plane(), complex, dirs }
    }

    pub fn frequency(&self) -> i64 {
        self.frequency
    }

    /// `true` when the block is genuinely complex and realified.
    pub fn is_complex(&self) -> bool {
        self.complex
    }

    pub fn plane_len(&self) -> usize {
        self.n
    }

    /// `out = Σ D*D u` with `D u(r) = (φ(r) u(σ(r)) − u(r)) / h`.
    pub fn apply_complex(&self, u: &[Complex64], out: &mut [Complex64]) {
        out.iter_mut().for_each(|o| *o = Complex64::default());
        for (h, nb, ph) in &self.dirs {
            let inv = 1.0 / h;
            for r in 0..self.n {
                let d = (ph[r] * u[nb[r]] - u[r]) * inv;
                out[nb[r]] += ph[r].conj() * d * inv;
                out[r] -= d * inv;
            }
        }
    }

    /// Realified vector `[Re u; Im u]` (or just `u` for a real block) to complex.
    pub fn to_complex(&self, x: &[f64]) -> Vec<Complex64> {
        if self.complex {
            (0..self.n).map(|r| Complex64::new(x[r], x[self.n + r])).collect()
        } else {
            x.iter().map(|&v| Complex64::new(v, 0.0)).collect()
        }
    }
}

impl SymmetricOperator for SectorOperator {
    fn dim(&self) -> usize {
        if self.complex {
            2 * self.n
        } else {
            self.n
        }
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        let u = self.to_complex(x);
        let mut out = vec![Complex64::default(); self.n];
        self.apply_complex(&u, &mut out);
        if self.complex {
            for r in 0..self.n {
                y[r] = out[r].re;
                y[self.n + r] = out[r].im;
            }
        } else {
            y.iter_mut().zip(&out).for_each(|(o, z)| *o = z.re);
        }
    }
}

/// The full operator on real grid functions (`t` fastest), applied by FFT
/// along `t` and the per-frequency blocks.
pub struct TwistedGridOperator {
    stencil: Stencil,
    sectors: Vec<SectorOperator>,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for TwistedGridOperator {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("TwistedGridOperator")
            .field("grid", &self.stencil.grid)
            .field("twist", &self.stencil.twist)
            .finish()
    }
}

impl TwistedGridOperator {
    pub fn new(grid: TwistedGrid, algebra: &GradedLieAlgebra, twist: bool) -> Result<Self> {
        let stencil = Stencil::new(grid, algebra, twist)?;
        let sectors = (0..grid.nt).map(|q| SectorOperator::new(&stencil, grid.signed_frequency(q))).collect();
        let mut planner = FftPlanner::new();
        Ok(TwistedGridOperator {
            stencil,
            sectors,
            forward: planner.plan_fft_forward(grid.nt),
            inverse: planner.plan_fft_inverse(grid.nt),
        })
    }

    /// Operator on the canonical Heisenberg nil-manifold.
    pub fn assemble(grid: TwistedGrid, twist: bool) -> Result<Self> {
        Self::new(grid, &GradedLieAlgebra::heisenberg(1)?, twist)
    }

    pub fn grid(&self) -> TwistedGrid {
        self.stencil.grid
    }

    pub fn twist(&self) -> bool {
        self.stencil.twist
    }

    pub fn stencil(&self) -> &Stencil {
        &self.stencil
    }

    /// Block for frequency `k ≥ 0`.
    pub fn sector(&self, k: usize) -> &SectorOperator {
        &self.sectors[k]
    }

    /// Real grid function from a block eigenvector: `Re(u(x,y) e^{iτt})`,
    /// normalized to unit Euclidean norm.
    pub fn lift(&self, k: usize, x: &[f64]) -> Vec<f64> {
        let g = self.grid();
        let s = &self.sectors[k];
        let u = s.to_complex(x);
        let mut f = vec![0.0; g.len()];
        let phase: Vec<Complex64> = (0..g.nt)
            .map(|l| Complex64::from_polar(1.0, 2.0 * std::f64::consts::PI * (k * l) as f64 / g.nt as f64))
            .collect();
        for (r, col) in f.chunks_mut(g.nt).enumerate() {
            for (l, v) in col.iter_mut().enumerate() {
                *v = (u[r] * phase[l]).re;
            }
        }
        let norm = f.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > 0.0 {
            f.iter_mut().for_each(|v| *v /= norm);
        }
        f
    }
}

impl SymmetricOperator for TwistedGridOperator {
    fn dim(&self) -> usize {
        self.grid().len()
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        let g = self.grid();
        let (nt, np) = (g.nt, g.plane());
        let mut buf: Vec<Complex64> = x.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        self.forward.process(&mut buf);
        let planes: Vec<Vec<Complex64>> = (0..nt)
            .into_par_iter()
            .map(|q| {
                let u: Vec<Complex64> = (0..np).map(|r| buf[r * nt + q]).collect();
                let mut out = vec![Complex64::default(); np];
                self.sectors[q].apply_complex(&u, &mut out);
                out
            })
            .collect();
        for (q, plane) in planes.iter().enumerate() {
            for (r, z) in plane.iter().enumerate() {
                buf[r * nt + q] = *z;
            }
        }
        self.inverse.process(&mut buf);
        let scale = 1.0 / nt as f64;
        y.iter_mut().zip(&buf).for_each(|(o, z)| *o = z.re * scale);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn dot(a: &[f64], b: &[f64]) -> f64 {
        a.iter().zip(b).map(|(x, y)| x * y).sum()
    }

    fn random_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
        (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
    }

    #[test]
    fn grid_validation() {
        assert!(TwistedGrid::parse("8x8x8").is_err());
        assert!(TwistedGrid::parse("8x8x16").is_ok());
        assert!(TwistedGrid::parse("8x4x24").is_err());
        assert!(TwistedGrid::parse("nope").is_err());
        let g = TwistedGrid::uniform(12).unwrap();
        assert_eq!(g.len() as f64 * g.cell_volume(), 0.5);
        assert_eq!(g.to_string(), "12x12x24");
    }

    #[test]
    fn fields_from_the_group_law() {
        let h = GradedLieAlgebra::heisenberg(1).unwrap();
        let f = derive_invariant_fields(&h).unwrap();
        assert_eq!(f.len(), 2);
        let p = [0.3, -0.7, 0.2];
        // X = ∂x − (y/2)∂t, Y = ∂y + (x/2)∂t
        assert_eq!(f[0][0].eval(&p), 1.0);
        assert!((f[0][2].eval(&p) - 0.35).abs() < 1e-15);
        assert!((f[1][2].eval(&p) - 0.15).abs() < 1e-15);
        assert_eq!(f[0][2].eval(&[0.0; 3]), 0.0);
        let a = GradedLieAlgebra::abelian(3).unwrap();
        for (j, field) in derive_invariant_fields(&a).unwrap().iter().enumerate() {
            for (i, c) in field.iter().enumerate() {
                assert_eq!(c.eval(&p), if i == j { 1.0 } else { 0.0 });
            }
        }
        assert!(matches!(
            derive_invariant_fields(&GradedLieAlgebra::engel().unwrap()),
            Err(Error::Capability(_))
        ));
    }

    #[test]
    fn operator_is_symmetric_semidefinite_with_constant_kernel() {
        let op = TwistedGridOperator::assemble(TwistedGrid::new(6, 4, 24).unwrap(), true).unwrap();
        let n = op.dim();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let (mut lu, mut lv) = (vec![0.0; n], vec![0.0; n]);
        for _ in 0..100 {
            let u = random_vec(&mut rng, n);
            let v = random_vec(&mut rng, n);
            op.apply(&u, &mut lu);
            op.apply(&v, &mut lv);
            let (a, b) = (dot(&lu, &v), dot(&u, &lv));
            assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0), "{a} {b}");
            assert!(dot(&lu, &u) >= -1e-10);
        }
        let one = vec![1.0; n];
        op.apply(&one, &mut lu);
        assert!(lu.iter().all(|v| v.abs() <= 1e-10));
    }

    #[test]
    fn wrap_rules_close_up() {
        let grid = TwistedGrid::new(4, 6, 24).unwrap();
        let st = Stencil::new(grid, &GradedLieAlgebra::heisenberg(1).unwrap(), true).unwrap();
        for i in 0..grid.nx {
            for j in 0..grid.ny {
                for l in [0, 5, 23] {
                    // a full loop in x, then in y, then back
                    let mut p = (i, j, l);
                    for _ in 0..grid.nx {
                        p = st.wrap_index(0, p.0, p.1, p.2, true);
                    }
                    for _ in 0..grid.ny {
                        p = st.wrap_index(1, p.0, p.1, p.2, true);
                    }
                    for _ in 0..grid.nx {
                        p = st.wrap_index(0, p.0, p.1, p.2, false);
                    }
                    for _ in 0..grid.ny {
                        p = st.wrap_index(1, p.0, p.1, p.2, false);
                    }
                    assert_eq!(p, (i, j, l));
                }
            }
        }
        // the x wrap at height y shifts t by −y/2
        let (_, _, l) = st.wrap_index(0, grid.nx - 1, 3, 0, true);
        assert_eq!(l, (grid.nt as i64 - (3 * grid.nt / grid.ny) as i64) as usize % grid.nt);
    }

    #[test]
    fn commutes_with_t_translation() {
        let grid = TwistedGrid::uniform(6).unwrap();
        let op = TwistedGridOperator::assemble(grid, true).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let u = random_vec(&mut rng, grid.len());
        let roll = |v: &[f64]| -> Vec<f64> {
            let mut w = vec![0.0; v.len()];
            for (c, col) in v.chunks(grid.nt).enumerate() {
                for l in 0..grid.nt {
                    w[c * grid.nt + (l + 1) % grid.nt] = col[l];
                }
            }
            w
        };
        let (mut a, mut b) = (vec![0.0; grid.len()], vec![0.0; grid.len()]);
        op.apply(&roll(&u), &mut a);
        op.apply(&u, &mut b);
        let b = roll(&b);
        assert!(a.iter().zip(&b).all(|(x, y)| (x - y).abs() < 1e-10));
    }

    #[test]
    fn sign_conventions_are_isospectral() {
        let grid = TwistedGrid::uniform(6).unwrap();
        let plus = Stencil::new(grid, &GradedLieAlgebra::heisenberg(1).unwrap(), true).unwrap();
        let minus = Stencil::new(grid, &GradedLieAlgebra::heisenberg_with_sign(1, -1).unwrap(), true).unwrap();
        for k in 1..4 {
            let a = DenseOperator::from_operator(&SectorOperator::new(&plus, k)).eigenvalues();
            let b = DenseOperator::from_operator(&SectorOperator::new(&minus, k)).eigenvalues();
            assert!(a.iter().zip(&b).all(|(x, y)| (x - y).abs() < 1e-9));
        }
    }

    #[test]
    fn unsupported_algebra() {
        let grid = TwistedGrid::uniform(4).unwrap();
        assert!(matches!(
            TwistedGridOperator::new(grid, &GradedLieAlgebra::heisenberg(2).unwrap(), true),
            Err(Error::Capability(_))
        ));
    }
}
