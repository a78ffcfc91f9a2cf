//! Restarted block Lanczos with full reorthogonalization and locking.
//!
//! Each cycle builds an orthonormal block Krylov basis (every new vector is
//! Gram–Schmidt'ed twice against the locked vectors and the whole basis),
//! takes Ritz pairs from the projected matrix, and locks those whose true
//! residual is below the tolerance. The next cycle starts from the lowest
//! unconverged Ritz vectors topped up with random vectors. The run stops once
//! a cycle's smallest Ritz value on the deflated space lies above the target,
//! which also catches missed copies of degenerate eigenvalues.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{SymmetricOperator, TwistedGrid};
use crate::error::{Error, Result};

/// What to compute.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Target {
    /// The `k` smallest eigenpairs.
    Count(usize),
    /// Every eigenpair with eigenvalue `≤ λ`.
    Below(f64),
}

#[derive(Debug, Clone, Copy)]
pub struct LanczosOptions {
    /// Bound on `‖Av − λv‖₂` for unit `v`.
    pub tol: f64,
    /// Bound on the number of operator applications.
    pub max_iter: usize,
    pub seed: u64,
    pub block: usize,
    /// Basis size per cycle.
    pub krylov_dim: usize,
}

impl Default for LanczosOptions {
    fn default() -> Self {
        LanczosOptions { tol: 1e-9, max_iter: 100_000, seed: 0, block: 4, krylov_dim: 240 }
    }
}

#[derive(Clone, Serialize, Deserialize)]
pub struct EigenPair {
    pub lambda: f64,
    pub residual: f64,
    /// `t`-frequency block the pair came from, when solved blockwise.
    pub sector: Option<usize>,
    #[serde(skip)]
    pub vector: Vec<f64>,
}

impl std::fmt::Debug for EigenPair {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("EigenPair")
            .field("lambda", &self.lambda)
            .field("residual", &self.residual)
            .field("sector", &self.sector)
            .field("vector_len", &self.vector.len())
            .finish()
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EigenResult {
    /// Sorted by eigenvalue.
    pub pairs: Vec<EigenPair>,
    pub grid: Option<TwistedGrid>,
    pub iterations: usize,
    pub tolerance: f64,
}

impl EigenResult {
    pub fn eigenvalues(&self) -> Vec<f64> {
        self.pairs.iter().map(|p| p.lambda).collect()
    }

    pub fn max_residual(&self) -> f64 {
        self.pairs.iter().map(|p| p.residual).fold(0.0, f64::max)
    }

    /// Largest `|⟨v_i, v_j⟩ − δ_ij|`.
    pub fn orthonormality_defect(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for (i, a) in self.pairs.iter().enumerate() {
            for b in &self.pairs[i..] {
                let d = dot(&a.vector, &b.vector);
                let e = if std::ptr::eq(a, b) { (d - 1.0).abs() } else { d.abs() };
                worst = worst.max(e);
            }
        }
        worst
    }
}

/// Dense symmetric matrix, for small problems and tests.
#[derive(Debug, Clone)]
pub struct DenseOperator {
    pub matrix: DMatrix<f64>,
}

impl DenseOperator {
    pub fn from_operator(op: &dyn SymmetricOperator) -> Self {
        let n = op.dim();
        let mut m = DMatrix::zeros(n, n);
        let mut e = vec![0.0; n];
        let mut col = vec![0.0; n];
        for j in 0..n {
            e[j] = 1.0;
            op.apply(&e, &mut col);
            e[j] = 0.0;
            for i in 0..n {
                m[(i, j)] = col[i];
            }
        }
        DenseOperator { matrix: m }
    }

    /// All eigenvalues, ascending.
    pub fn eigenvalues(&self) -> Vec<f64> {
        let mut v: Vec<f64> = self.matrix.clone().symmetric_eigenvalues().iter().copied().collect();
        v.sort_by(f64::total_cmp);
        v
    }
}

impl SymmetricOperator for DenseOperator {
    fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        let n = self.matrix.nrows();
        for (i, out) in y.iter_mut().enumerate().take(n) {
            *out = (0..n).map(|j| self.matrix[(i, j)] * x[j]).sum();
        }
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    // fixed-order blocked sum so results do not depend on thread count
    a.chunks(256).zip(b.chunks(256)).map(|(x, y)| x.iter().zip(y).map(|(p, q)| p * q).sum::<f64>()).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    y.iter_mut().zip(x).for_each(|(b, a)| *b += alpha * a);
}

/// The `k` smallest eigenpairs.
pub fn lanczos_smallest(
    op: &dyn SymmetricOperator,
    k: usize,
    tol: f64,
    max_iter: usize,
    seed: u64,
) -> Result<EigenResult> {
    lanczos(op, Target::Count(k), &LanczosOptions { tol, max_iter, seed, ..Default::default() })
}

/// Orthonormalizes `cands` against `fixed` and `basis` (and each other),
/// dropping vectors that are numerically dependent.
fn orthonormalize(cands: Vec<Vec<f64>>, fixed: &[EigenPair], basis: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let mut out: Vec<Vec<f64>> = Vec::new();
    for mut c in cands {
        let before = norm(&c);
        if before == 0.0 || !before.is_finite() {
            continue;
        }
        // classical Gram-Schmidt, repeated while a pass removes most of the
        // vector; small remainders still carry the residual directions
        // that converged Ritz vectors need, so the drop test sits near
        // the rounding floor
        let mut current = before;
        let mut after = before;
        for _ in 0..4 {
            for p in fixed {
                let a = dot(&p.vector, &c);
                axpy(-a, &p.vector, &mut c);
            }
            let coeffs: Vec<f64> = basis.par_iter().chain(out.par_iter()).map(|b| dot(b, &c)).collect();
            for (b, a) in basis.iter().chain(out.iter()).zip(coeffs) {
                axpy(-a, b, &mut c);
            }
            after = norm(&c);
            if after > 0.7 * current {
                break;
            }
            current = after;
        }
        if after > 1e-14 * before {
            c.iter_mut().for_each(|v| *v /= after);
            out.push(c);
        }
    }
    out
}

/// Orthonormal basis of the top `count` left singular directions of the
/// columns `vs`.
fn dominant_directions(vs: &[Vec<f64>], count: usize) -> Vec<Vec<f64>> {
    let k = vs.len();
    if k == 0 {
        return Vec::new();
    }
    let g = DMatrix::from_fn(k, k, |i, j| dot(&vs[i], &vs[j]));
    let eig = SymmetricEigen::new(g);
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let top = eig.eigenvalues[order[0]].max(0.0);
    let n = vs[0].len();
    order
        .into_iter()
        .take(count)
        .filter(|&c| eig.eigenvalues[c] > 1e-24 * top && eig.eigenvalues[c] > 0.0)
        .map(|c| {
            let mut y = vec![0.0; n];
            for (j, v) in vs.iter().enumerate() {
                axpy(eig.eigenvectors[(j, c)], v, &mut y);
            }
            let yn = norm(&y);
            y.iter_mut().for_each(|v| *v /= yn);
            y
        })
        .collect()
}

fn random_vector(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| StandardNormal.sample(rng)).collect()
}

pub fn lanczos(op: &dyn SymmetricOperator, target: Target, opts: &LanczosOptions) -> Result<EigenResult> {
    let n = op.dim();
    if !(opts.tol > 0.0) {
        return Err(Error::input(format!("tolerance must be positive, got {}", opts.tol)));
    }
    match target {
        Target::Count(k) if k == 0 || k > n => {
            return Err(Error::input(format!("cannot compute {k} eigenpairs of a {n}-dimensional operator")));
        }
        Target::Below(l) if !l.is_finite() => return Err(Error::input("eigenvalue bound must be finite")),
        _ => {}
    }
    let block = opts.block.max(1);
    let m_cap = opts.krylov_dim.max(4 * block).min(n);
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut locked: Vec<EigenPair> = Vec::new();
    // thick restart: kept Ritz vectors and the block that continues the
    // Krylov sequence; empty means a fresh start from random vectors
    let mut kept: Vec<Vec<f64>> = Vec::new();
    let mut continuation: Vec<Vec<f64>> = Vec::new();
    let mut iterations = 0usize;
    let mut work = vec![0.0; n];
    // running lower bound for ‖A‖, used to keep the locking test above
    // the rounding floor of the Rayleigh-Ritz step
    let mut anorm = 0.0f64;

    let threshold = |locked: &[EigenPair]| -> f64 {
        match target {
            Target::Below(l) => l,
            Target::Count(k) => {
                if locked.len() < k {
                    f64::INFINITY
                } else {
                    let mut v: Vec<f64> = locked.iter().map(|p| p.lambda).collect();
                    v.sort_by(f64::total_cmp);
                    v[k - 1]
                }
            }
        }
    };

    while locked.len() < n {
        let thr = threshold(&locked);
        let fresh = kept.is_empty();
        let mut basis: Vec<Vec<f64>> = Vec::with_capacity(m_cap);
        let mut images: Vec<Vec<f64>> = Vec::with_capacity(m_cap);
        let mut pending = if fresh {
            let start = (0..block).map(|_| random_vector(&mut rng, n)).collect();
            orthonormalize(start, &locked, &basis)
        } else {
            // kept vectors are orthonormal Ritz vectors; refresh their images
            // so rounding does not accumulate across restarts
            for v in orthonormalize(std::mem::take(&mut kept), &locked, &basis) {
                let mut y = vec![0.0; n];
                op.apply(&v, &mut y);
                iterations += 1;
                basis.push(v);
                images.push(y);
            }
            // fresh random directions pick up copies of (nearly) degenerate
            // eigenvalues that the Krylov sequence alone resolves slowly
            let mut next = std::mem::take(&mut continuation);
            next.extend((0..block).map(|_| random_vector(&mut rng, n)));
            orthonormalize(next, &locked, &basis)
        };
        let mut last_block = 0..0;
        // vectors that did not fit into the full basis; together with the
        // next block they keep the Krylov relation needed after a restart
        let mut leftover = Vec::new();
        while !pending.is_empty() && basis.len() < m_cap {
            let take = pending.len().min(m_cap - basis.len());
            leftover = pending.split_off(take);
            let first = basis.len();
            for v in pending.drain(..) {
                let mut y = vec![0.0; n];
                op.apply(&v, &mut y);
                iterations += 1;
                basis.push(v);
                images.push(y);
            }
            last_block = first..basis.len();
            pending = orthonormalize(images[last_block.clone()].to_vec(), &locked, &basis);
        }
        leftover.append(&mut pending);
        let pending = leftover;
        if basis.is_empty() {
            break;
        }
        let m = basis.len();
        let entries: Vec<f64> =
            (0..m * m).into_par_iter().map(|ij| dot(&basis[ij / m], &images[ij % m])).collect();
        let h = DMatrix::from_fn(m, m, |i, j| 0.5 * (entries[i * m + j] + entries[j * m + i]));
        let eig = SymmetricEigen::new(h);
        let mut order: Vec<usize> = (0..m).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
        let theta_min = eig.eigenvalues[order[0]];
        anorm = anorm.max(eig.eigenvalues.iter().fold(0.0, |a: f64, v| a.max(v.abs())));
        let lock_tol = (0.05 * opts.tol).max(64.0 * f64::EPSILON * anorm).min(opts.tol);
        let exhaustive = m + locked.len() >= n;
        if fresh && theta_min > thr && !exhaustive {
            // nothing left below the target on the deflated space
            break;
        }
        let wanted = match target {
            Target::Count(k) => {
                // once k pairs are locked only missing copies at or below the
                // k-th value matter
                let mut w = if locked.len() < k {
                    (k - locked.len() + block).min(m)
                } else {
                    let cut = thr + 1e-8 * thr.abs().max(1.0);
                    order.iter().take_while(|&&c| eig.eigenvalues[c] <= cut).count()
                };
                // never cut through a cluster: a partial cluster in the kept
                // space keeps rotating and its residuals stall
                while w > 0 && w < m {
                    let (last, next) = (eig.eigenvalues[order[w - 1]], eig.eigenvalues[order[w]]);
                    if next - last > 1e-3 * last.abs().max(1.0) {
                        break;
                    }
                    w += 1;
                }
                w
            }
            Target::Below(_) => order.iter().take_while(|&&c| eig.eigenvalues[c] <= thr).count(),
        };
        let mut unconverged = Vec::new();
        let mut residuals = Vec::new();
        let mut new_locks = 0;
        for &c in order.iter().take(wanted) {
            let theta = eig.eigenvalues[c];
            let s = eig.eigenvectors.column(c);
            let mut y = vec![0.0; n];
            let mut ay = vec![0.0; n];
            for j in 0..m {
                axpy(s[j], &basis[j], &mut y);
                axpy(s[j], &images[j], &mut ay);
            }
            axpy(-theta, &y, &mut ay);
            // lock well inside the tolerance: a locked vector's residual leaks
            // into everything orthogonalized against it
            if norm(&ay) <= lock_tol {
                let yn = norm(&y);
                y.iter_mut().for_each(|v| *v /= yn);
                op.apply(&y, &mut work);
                iterations += 1;
                let lambda = dot(&y, &work);
                axpy(-lambda, &y, &mut work);
                let residual = norm(&work);
                if residual <= lock_tol {
                    locked.push(EigenPair { lambda, residual, sector: None, vector: y });
                    new_locks += 1;
                    continue;
                }
            }
            unconverged.push(y);
            residuals.push(ay);
        }
        if exhaustive && unconverged.is_empty() && new_locks == 0 {
            break;
        }
        if !unconverged.is_empty() {
            // a few Ritz vectors just above the wanted ones speed up the
            // convergence of the top wanted values
            let extra = order.iter().skip(wanted).take(block).map(|&c| {
                let s = eig.eigenvectors.column(c);
                let mut y = vec![0.0; n];
                for j in 0..m {
                    axpy(s[j], &basis[j], &mut y);
                }
                y
            });
            kept = unconverged.into_iter().chain(extra).take(m_cap.saturating_sub(2 * block).max(1)).collect();
            // continue from the dominant directions of the wanted residuals;
            // a fixed width keeps the Krylov depth per cycle from shrinking
            continuation = dominant_directions(&residuals, block);
            if continuation.is_empty() {
                continuation = if pending.is_empty() { basis[last_block].to_vec() } else { pending };
                continuation.truncate(block);
            }
        }
        if iterations > opts.max_iter {
            let best = finish(locked, target, iterations, opts.tol);
            return Err(Error::Convergence {
                iterations,
                message: format!("budget of {} applications exhausted with {} eigenpairs locked at {:e}", opts.max_iter, best.pairs.len(), opts.tol),
                best: Some(Box::new(best)),
            });
        }
    }
    let result = finish(locked, target, iterations, opts.tol);
    if let Target::Count(k) = target {
        if result.pairs.len() < k {
            return Err(Error::Convergence {
                iterations,
                message: format!("only {} of {k} eigenpairs converged", result.pairs.len()),
                best: Some(Box::new(result)),
            });
        }
    }
    Ok(result)
}

fn finish(mut locked: Vec<EigenPair>, target: Target, iterations: usize, tol: f64) -> EigenResult {
    locked.sort_by(|a, b| a.lambda.total_cmp(&b.lambda));
    match target {
        Target::Count(k) => locked.truncate(k),
        Target::Below(l) => locked.retain(|p| p.lambda <= l),
    }
    EigenResult { pairs: locked, grid: None, iterations, tolerance: tol }
}
