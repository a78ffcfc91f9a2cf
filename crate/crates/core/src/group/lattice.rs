//! Lattices `Γ = {Exp(s₁u₁Y₁)···Exp(sₙuₙYₙ) : u ∈ ℤⁿ}` generated by a strong
//! Malcev basis, with enumeration, reduction to the fundamental domain and
//! certified periodization.

use std::fmt;

use num_traits::{One, Zero};
use rayon::prelude::*;

use super::poly::{rational, rational_to_f64, Poly, Rational};
use super::{multiply_unchecked, quasi_norm_coords, quasi_triangle_constant, GradedLieAlgebra, GroupElement};
use crate::error::{Error, Result};
use crate::numeric::pairwise_sum;

/// Hard cap on the number of lattice points a single periodization may visit.
const MAX_PERIODIZATION_POINTS: f64 = 5e7;

/// Discrete co-compact subgroup built from a strong Malcev basis.
#[derive(Clone)]
pub struct LatticeSubgroup {
    algebra: GradedLieAlgebra,
    scale: Rational,
    /// Malcev position → basis index.
    order: Vec<usize>,
    /// Generator step per Malcev position (already multiplied by `scale`).
    steps: Vec<Rational>,
    /// Θ as polynomials in the Malcev coordinates, one per basis coordinate.
    theta: Vec<Poly>,
    /// Θ⁻¹ as polynomials in exponential coordinates, one per Malcev position.
    theta_inv: Vec<Poly>,
    /// Malcev positions sorted by increasing weight.
    levels: Vec<usize>,
}

impl fmt::Debug for LatticeSubgroup {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("LatticeSubgroup")
            .field("algebra", &self.algebra.name())
            .field("scale", &self.scale)
            .field("generator_order", &self.order)
            .field("steps", &self.steps)
            .finish()
    }
}

/// A scalar function on the group together with a decay certificate
/// `|φ(z)| ≤ constant·(1 + ‖z‖)^{-order}`.
pub struct CertifiedFunction<'a> {
    pub f: Box<dyn Fn(&GroupElement) -> f64 + Send + Sync + 'a>,
    pub constant: f64,
    pub order: f64,
}

/// Result of [`LatticeSubgroup::periodize`].
#[derive(Debug, Clone, Copy)]
pub struct Periodization {
    pub value: f64,
    /// Quasi-norm radius of the summed lattice ball.
    pub radius: f64,
    /// Certified bound on the omitted terms.
    pub tail_bound: f64,
    pub terms: usize,
}

impl LatticeSubgroup {
    /// Lattice with generators `step_j·scale·Y_j` in the given order.
    ///
    /// `generator_order[j]` is the basis index of the `j`-th Malcev generator;
    /// weights must be nonincreasing along it so that the leading spans are
    /// ideals. Closure under products is checked on a finite sample.
    pub fn new(
        algebra: GradedLieAlgebra,
        scale: Rational,
        generator_order: Option<Vec<usize>>,
        base_steps: Option<Vec<Rational>>,
    ) -> Result<Self> {
        let n = algebra.dim();
        if scale <= Rational::zero() {
            return Err(Error::input("lattice scale must be positive"));
        }
        let order = generator_order.unwrap_or_else(|| default_order(&algebra));
        let mut seen = vec![false; n];
        if order.len() != n || order.iter().any(|&k| k >= n || std::mem::replace(&mut seen[k], true)) {
            return Err(Error::input("generator order must be a permutation of the basis"));
        }
        let w = algebra.weights();
        if order.windows(2).any(|p| w[p[0]] < w[p[1]]) {
            return Err(Error::input("generator order must have nonincreasing weights (strong Malcev basis)"));
        }
        let base = base_steps.unwrap_or_else(|| vec![Rational::one(); n]);
        if base.len() != n || base.iter().any(|s| *s <= Rational::zero()) {
            return Err(Error::input("generator steps must be positive, one per generator"));
        }
        let steps: Vec<Rational> = base.iter().map(|s| *s * scale).collect();

        // Θ(u) = Exp(s₁u₁Y₁)·…·Exp(sₙuₙYₙ) as polynomials in u.
        let bch = algebra.bch_polynomials();
        let gen = |j: usize| -> Vec<Poly> {
            (0..n).map(|k| if k == order[j] { Poly::var(n, j, steps[j]) } else { Poly::zero(n) }).collect()
        };
        let mut theta = gen(0);
        for j in 1..n {
            let mut subs = theta.clone();
            subs.extend(gen(j));
            theta = bch.iter().map(|p| p.compose(&subs)).collect();
        }

        let mut levels: Vec<usize> = (0..n).collect();
        levels.sort_by_key(|&j| (w[order[j]], j));

        // Θ⁻¹ by forward substitution, lowest weight first.
        let mut theta_inv = vec![Poly::zero(n); n];
        for &j in &levels {
            let k = order[j];
            let rest = theta[k].add(&Poly::var(n, j, -steps[j]));
            if rest.support().iter().any(|&v| w[order[v]] >= w[k]) {
                return Err(Error::input("Malcev map is not triangular for this generator order"));
            }
            let subs: Vec<Poly> = theta_inv.clone();
            let lower = rest.compose(&subs);
            theta_inv[j] = Poly::var(n, k, Rational::one()).add(&lower.scale(-Rational::one())).scale(Rational::one() / steps[j]);
        }

        let lattice = LatticeSubgroup { algebra, scale, order, steps, theta, theta_inv, levels };
        lattice.check_closure()?;
        Ok(lattice)
    }

    /// Canonical lattice: `ℤ²ⁿ × ½ℤ` for the Heisenberg presets, `ℤⁿ` in
    /// Malcev coordinates otherwise.
    pub fn canonical(algebra: GradedLieAlgebra) -> Result<Self> {
        let n = algebra.dim();
        let heis_n = (n - 1) / 2;
        let is_heisenberg = n % 2 == 1 && heis_n >= 1 && {
            let h = GradedLieAlgebra::heisenberg(heis_n)?;
            algebra == h
        };
        if is_heisenberg {
            let order = default_order(&algebra);
            let steps = order.iter().map(|&k| if k == n - 1 { rational(1, 2) } else { Rational::one() }).collect();
            Self::new(algebra, Rational::one(), Some(order), Some(steps))
        } else {
            Self::new(algebra, Rational::one(), None, None)
        }
    }

    pub fn algebra(&self) -> &GradedLieAlgebra {
        &self.algebra
    }

    pub fn scale(&self) -> Rational {
        self.scale
    }

    pub fn generator_order(&self) -> &[usize] {
        &self.order
    }

    /// Step of each Malcev generator, indexed by basis coordinate.
    pub fn basis_steps(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.order.len()];
        for (j, &k) in self.order.iter().enumerate() {
            out[k] = rational_to_f64(&self.steps[j]);
        }
        out
    }

    /// Covolume of the lattice (product of the generator steps).
    pub fn covolume(&self) -> f64 {
        self.steps.iter().map(rational_to_f64).product()
    }

    /// Θ(u) for Malcev coordinates `u` indexed by generator position.
    pub fn theta(&self, u: &[f64]) -> GroupElement {
        GroupElement { coords: self.theta.iter().map(|p| p.eval(u)).collect() }
    }

    /// Θ for Malcev coordinates indexed by basis coordinate.
    pub fn theta_basis(&self, t: &[f64]) -> GroupElement {
        let u: Vec<f64> = self.order.iter().map(|&k| t[k]).collect();
        self.theta(&u)
    }

    /// Θ⁻¹(x), indexed by generator position.
    pub fn malcev_coordinates(&self, x: &GroupElement) -> Vec<f64> {
        self.theta_inv.iter().map(|p| p.eval(&x.coords)).collect()
    }

    pub fn contains(&self, x: &GroupElement) -> bool {
        self.malcev_coordinates(x).iter().all(|u| (u - u.round()).abs() <= 1e-9 * u.abs().max(1.0))
    }

    fn check_closure(&self) -> Result<()> {
        let n = self.order.len();
        let mut samples = vec![vec![0.0; n]];
        for j in 0..n {
            for s in [-1.0, 1.0, 2.0] {
                let mut u = vec![0.0; n];
                u[j] = s;
                samples.push(u);
            }
        }
        samples.push(vec![1.0; n]);
        samples.push((0..n).map(|j| if j % 2 == 0 { -1.0 } else { 2.0 }).collect());
        let pts: Vec<GroupElement> = samples.iter().map(|u| self.theta(u)).collect();
        for a in &pts {
            if !self.contains(&a.inverse()) {
                return Err(Error::input("lattice sample is not closed under inverses"));
            }
            for b in &pts {
                if !self.contains(&multiply_unchecked(&self.algebra, &a.coords, &b.coords)) {
                    return Err(Error::input(
                        "generated set is not closed under products; increase the scale or adjust steps",
                    ));
                }
            }
        }
        Ok(())
    }

    /// All `γ ∈ Γ` with `‖γ‖ ≤ r`, each once, in a deterministic order.
    pub fn enumerate(&self, r: f64) -> Vec<GroupElement> {
        self.enumerate_malcev(r).iter().map(|u| self.theta(u)).collect()
    }

    /// Malcev coordinates of the lattice ball of radius `r`.
    pub fn enumerate_malcev(&self, r: f64) -> Vec<Vec<f64>> {
        let n = self.order.len();
        let mut out = Vec::new();
        if r < 0.0 {
            return out;
        }
        let mut u = vec![0.0; n];
        self.dfs(r, 0, &mut u, &mut out);
        out
    }

    fn dfs(&self, r: f64, depth: usize, u: &mut Vec<f64>, out: &mut Vec<Vec<f64>>) {
        if depth == self.levels.len() {
            out.push(u.clone());
            return;
        }
        let j = self.levels[depth];
        let k = self.order[j];
        let w = self.algebra.weights()[k];
        let s = rational_to_f64(&self.steps[j]);
        u[j] = 0.0;
        let rest = self.theta[k].eval(u);
        let bound = r.powi(w as i32) * (1.0 + 1e-12);
        let lo = ((-bound - rest) / s).ceil() as i64;
        let hi = ((bound - rest) / s).floor() as i64;
        for g in lo..=hi {
            u[j] = g as f64;
            self.dfs(r, depth + 1, u, out);
        }
        u[j] = 0.0;
    }

    /// Upper bound for the number of lattice points with `‖γ‖ ≤ r`.
    pub fn count_bound(&self, r: f64) -> f64 {
        self.order
            .iter()
            .enumerate()
            .map(|(j, &k)| 2.0 * r.powi(self.algebra.weights()[k] as i32) / rational_to_f64(&self.steps[j]) + 1.0)
            .product()
    }

    /// Writes `x = γ·Θ(t)` with `γ ∈ Γ` and `t ∈ [-½, ½)ⁿ`, reducing one
    /// weight layer at a time from the lowest. `t` is indexed by basis
    /// coordinate and measured in units of the generator steps.
    pub fn reduce_to_domain(&self, x: &GroupElement) -> Result<(GroupElement, Vec<f64>)> {
        let n = self.order.len();
        if x.dim() != n || !x.is_finite() {
            return Err(Error::input("element does not belong to the lattice's group"));
        }
        let w = self.algebra.weights();
        let mut cur = x.clone();
        let mut gamma = GroupElement::identity(n);
        let mut pos = 0;
        while pos < self.levels.len() {
            let level_w = w[self.order[self.levels[pos]]];
            let u = self.malcev_coordinates(&cur);
            let mut g = vec![0.0; n];
            while pos < self.levels.len() && w[self.order[self.levels[pos]]] == level_w {
                let j = self.levels[pos];
                g[j] = (u[j] + 0.5).floor();
                pos += 1;
            }
            let step = self.theta(&g);
            cur = multiply_unchecked(&self.algebra, &step.inverse().coords, &cur.coords);
            gamma = multiply_unchecked(&self.algebra, &gamma.coords, &step.coords);
        }
        let u = self.malcev_coordinates(&cur);
        let mut t = vec![0.0; n];
        for (j, &k) in self.order.iter().enumerate() {
            t[k] = u[j];
        }
        Ok((gamma, t))
    }

    /// Certified bound for `Σ_{‖γ‖ > r} |φ(γx)|`.
    fn tail_bound(&self, phi: &CertifiedFunction, xn: f64, cq: f64, r: f64) -> f64 {
        let q = self.algebra.homogeneous_dimension() as f64;
        let nn = phi.order;
        let a: f64 = self.count_bound(1.0);
        let count = |s: f64| a * s.max(1.0).powf(q);
        let start_integral = (2.0 * cq * xn).max(2.0);
        let shells = (start_integral - r).ceil().max(0.0) as usize;
        let mut total = 0.0;
        for j in 0..shells {
            let s = r + j as f64;
            total += count(s + 1.0) * phi.constant * (1.0 + (s / cq - xn).max(0.0)).powf(-nn);
        }
        let r_j = r + shells as f64;
        total += a * 2f64.powf(q) * phi.constant * (2.0 * cq).powf(nn) * (r_j - 1.0).powf(q - nn + 1.0) / (nn - q - 1.0);
        total
    }

    /// `Σ_γ φ(γ·x)` with the lattice ball radius chosen from the decay
    /// certificate so that the omitted tail is below `tol`.
    pub fn periodize(&self, phi: &CertifiedFunction, x: &GroupElement, tol: f64) -> Result<Periodization> {
        let n = self.order.len();
        if x.dim() != n || !x.is_finite() {
            return Err(Error::input("evaluation point does not belong to the group"));
        }
        if !(tol > 0.0) {
            return Err(Error::input("tolerance must be positive"));
        }
        let q = self.algebra.homogeneous_dimension() as f64;
        let w_max = *self.algebra.weights().iter().max().expect("nonempty") as f64;
        let threshold = w_max * n as f64 + q;
        if !(phi.order > threshold) || !(phi.constant >= 0.0) {
            return Err(Error::capability(format!(
                "decay order {} is too weak for periodization (needs > {threshold})",
                phi.order
            )));
        }
        let cq = quasi_triangle_constant(&self.algebra);
        let xn = quasi_norm_coords(self.algebra.weights(), &x.coords);
        let mut hi = 1.0;
        while self.tail_bound(phi, xn, cq, hi) >= tol {
            hi *= 2.0;
            if hi > 1e7 {
                return Err(Error::capability("decay certificate too weak to reach the tolerance"));
            }
        }
        let mut lo = if hi > 1.0 { hi / 2.0 } else { 0.0 };
        for _ in 0..40 {
            let mid = 0.5 * (lo + hi);
            if self.tail_bound(phi, xn, cq, mid) < tol {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        let radius = hi;
        if self.count_bound(radius) > MAX_PERIODIZATION_POINTS {
            return Err(Error::capability(format!(
                "periodization would need about {:.2e} lattice points",
                self.count_bound(radius)
            )));
        }
        let points = self.enumerate_malcev(radius);
        let terms: Vec<f64> = points
            .par_iter()
            .map(|u| {
                let g = self.theta(u);
                (phi.f)(&multiply_unchecked(&self.algebra, &g.coords, &x.coords))
            })
            .collect();
        Ok(Periodization {
            value: pairwise_sum(&terms),
            radius,
            tail_bound: self.tail_bound(phi, xn, cq, radius),
            terms: terms.len(),
        })
    }
}

/// Nonincreasing weight, ties broken by descending basis index.
fn default_order(algebra: &GradedLieAlgebra) -> Vec<usize> {
    let w = algebra.weights();
    let mut order: Vec<usize> = (0..algebra.dim()).collect();
    order.sort_by(|&a, &b| w[b].cmp(&w[a]).then(b.cmp(&a)));
    order
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::group::bch_multiply;

    fn h1() -> LatticeSubgroup {
        LatticeSubgroup::canonical(GradedLieAlgebra::heisenberg(1).unwrap()).unwrap()
    }

    #[test]
    fn heisenberg_lattice_is_z_z_half_z() {
        let l = h1();
        assert_eq!(l.generator_order(), &[2, 1, 0]);
        assert!(l.contains(&vec![1.0, -2.0, 0.5].into()));
        assert!(l.contains(&vec![0.0, 0.0, -1.5].into()));
        assert!(!l.contains(&vec![0.0, 0.0, 0.25].into()));
        assert!(!l.contains(&vec![0.5, 0.0, 0.0].into()));
        assert!((l.covolume() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn enumeration_examples() {
        let z2 = LatticeSubgroup::canonical(GradedLieAlgebra::abelian(2).unwrap()).unwrap();
        assert_eq!(z2.enumerate(1.0).len(), 9);
        assert_eq!(z2.enumerate(0.0), vec![GroupElement::identity(2)]);
        assert_eq!(h1().enumerate(0.0).len(), 1);
    }

    #[test]
    fn reduction_example() {
        let l = h1();
        let (g, t) = l.reduce_to_domain(&vec![1.25, 0.0, 0.0].into()).unwrap();
        assert_eq!(g.coords, vec![1.0, 0.0, 0.0]);
        assert!((t[0] - 0.25).abs() < 1e-15 && t[1].abs() < 1e-15 && t[2].abs() < 1e-15);
        let x = GroupElement::new(vec![3.7, -2.2, 5.9]);
        let (g, t) = l.reduce_to_domain(&x).unwrap();
        assert!(l.contains(&g));
        assert!(t.iter().all(|v| (-0.5..0.5).contains(v)));
        let back = bch_multiply(l.algebra(), &g, &l.theta_basis(&t)).unwrap();
        for (a, b) in back.coords.iter().zip(&x.coords) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn weak_certificate_is_capability_error() {
        let l = h1();
        let phi = CertifiedFunction { f: Box::new(|_| 0.0), constant: 1.0, order: 5.0 };
        assert!(matches!(l.periodize(&phi, &GroupElement::identity(3), 1e-6), Err(Error::Capability(_))));
    }

    #[test]
    fn engel_lattice_is_closed() {
        let e = GradedLieAlgebra::engel().unwrap();
        let l = LatticeSubgroup::new(e, rational(6, 1), None, None).unwrap();
        assert!(l.contains(&l.theta(&[1.0, 2.0, -1.0, 3.0])));
    }
}
