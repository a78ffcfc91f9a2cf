//! Graded nilpotent Lie groups in exponential coordinates, their dilations and
//! quasi-norms, and lattices built from strong Malcev bases.

mod algebra;
mod lattice;
pub mod poly;

pub use algebra::GradedLieAlgebra;
pub use lattice::{CertifiedFunction, LatticeSubgroup, Periodization};

use crate::error::{Error, Result};

/// A point of the group in exponential coordinates of the first kind.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupElement {
    pub coords: Vec<f64>,
}

impl GroupElement {
    pub fn new(coords: Vec<f64>) -> Self {
        GroupElement { coords }
    }

    pub fn identity(n: usize) -> Self {
        GroupElement { coords: vec![0.0; n] }
    }

    pub fn dim(&self) -> usize {
        self.coords.len()
    }

    /// In exponential coordinates the inverse is the negation.
    pub fn inverse(&self) -> Self {
        GroupElement { coords: self.coords.iter().map(|x| -x).collect() }
    }

    pub fn is_finite(&self) -> bool {
        self.coords.iter().all(|x| x.is_finite())
    }
}

impl From<Vec<f64>> for GroupElement {
    fn from(coords: Vec<f64>) -> Self {
        GroupElement { coords }
    }
}

fn check_dim(g: &GradedLieAlgebra, x: &GroupElement) -> Result<()> {
    if x.dim() != g.dim() {
        return Err(Error::input(format!(
            "element has {} coordinates but the algebra has dimension {}",
            x.dim(),
            g.dim()
        )));
    }
    if !x.is_finite() {
        return Err(Error::input("element coordinates must be finite"));
    }
    Ok(())
}

/// Group product `x·y`, exact up to the final rounding of the BCH polynomials.
pub fn bch_multiply(g: &GradedLieAlgebra, x: &GroupElement, y: &GroupElement) -> Result<GroupElement> {
    check_dim(g, x)?;
    check_dim(g, y)?;
    Ok(multiply_unchecked(g, &x.coords, &y.coords))
}

pub(crate) fn multiply_unchecked(g: &GradedLieAlgebra, x: &[f64], y: &[f64]) -> GroupElement {
    let mut v = Vec::with_capacity(2 * x.len());
    v.extend_from_slice(x);
    v.extend_from_slice(y);
    GroupElement { coords: g.bch_polynomials().iter().map(|p| p.eval(&v)).collect() }
}

/// `D_r x`: coordinate `j` scaled by `r^{υ_j}`.
pub fn dilate(g: &GradedLieAlgebra, r: f64, x: &GroupElement) -> Result<GroupElement> {
    check_dim(g, x)?;
    if !(r > 0.0 && r.is_finite()) {
        return Err(Error::input(format!("dilation factor must be positive, got {r}")));
    }
    Ok(GroupElement {
        coords: x.coords.iter().zip(g.weights()).map(|(c, &w)| c * r.powi(w as i32)).collect(),
    })
}

pub fn homogeneous_dimension(g: &GradedLieAlgebra) -> u32 {
    g.homogeneous_dimension()
}

/// Max-form homogeneous quasi-norm `max_j |x_j|^{1/υ_j}`.
pub fn quasi_norm(g: &GradedLieAlgebra, x: &GroupElement) -> f64 {
    quasi_norm_coords(g.weights(), &x.coords)
}

pub(crate) fn quasi_norm_coords(weights: &[u32], x: &[f64]) -> f64 {
    x.iter()
        .zip(weights)
        .map(|(c, &w)| if w == 1 { c.abs() } else { c.abs().powf(1.0 / w as f64) })
        .fold(0.0, f64::max)
}

/// Smallest `C` with `‖xy‖ ≤ C(‖x‖ + ‖y‖)` that follows from the absolute
/// coefficient sums of the BCH polynomials.
pub fn quasi_triangle_constant(g: &GradedLieAlgebra) -> f64 {
    let ones = vec![1.0; 2 * g.dim()];
    g.bch_polynomials()
        .iter()
        .zip(g.weights())
        .map(|(p, &w)| p.abs_bound(&ones).powf(1.0 / w as f64))
        .fold(1.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn heisenberg_product_matches_group_law() {
        let h = GradedLieAlgebra::heisenberg(1).unwrap();
        let p = bch_multiply(&h, &vec![1.0, 0.0, 0.0].into(), &vec![0.0, 1.0, 0.0].into()).unwrap();
        assert_eq!(p.coords, vec![1.0, 1.0, 0.5]);
        let a = GroupElement::new(vec![0.3, -1.2, 0.7]);
        let b = GroupElement::new(vec![-0.4, 0.9, 2.0]);
        let p = bch_multiply(&h, &a, &b).unwrap();
        let t = 0.7 + 2.0 + 0.5 * (0.3 * 0.9 - (-1.2) * (-0.4));
        assert!((p.coords[2] - t).abs() < 1e-15);
    }

    #[test]
    fn abelian_product_is_sum() {
        let a = GradedLieAlgebra::abelian(3).unwrap();
        let p = bch_multiply(&a, &vec![1.0, 2.0, 3.0].into(), &vec![0.5, -2.0, 1.0].into()).unwrap();
        assert_eq!(p.coords, vec![1.5, 0.0, 4.0]);
    }

    #[test]
    fn dimension_mismatch_is_input_error() {
        let h = GradedLieAlgebra::heisenberg(1).unwrap();
        assert!(matches!(
            bch_multiply(&h, &vec![1.0, 0.0].into(), &vec![0.0, 1.0, 0.0].into()),
            Err(Error::Input(_))
        ));
        assert!(matches!(dilate(&h, 0.0, &GroupElement::identity(3)), Err(Error::Input(_))));
    }

    #[test]
    fn dilation_and_norm_examples() {
        let h = GradedLieAlgebra::heisenberg(1).unwrap();
        let d = dilate(&h, 2.0, &vec![1.0, -1.0, 3.0].into()).unwrap();
        assert_eq!(d.coords, vec![2.0, -2.0, 12.0]);
        assert_eq!(quasi_norm(&h, &vec![0.0, 0.0, 4.0].into()), 2.0);
        assert_eq!(quasi_norm(&h, &GroupElement::identity(3)), 0.0);
        assert_eq!(homogeneous_dimension(&h), 4);
    }
}
