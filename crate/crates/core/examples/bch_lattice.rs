//! Group law, dilations and lattices on graded groups: BCH products on the
//! Heisenberg and Engel groups, the canonical lattice `ℤ×ℤ×½ℤ` and the
//! periodization of a Gaussian, compared with its theta-series value on `ℤ²`.

use std::f64::consts::PI;

use nilspec::group::*;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let h = GradedLieAlgebra::heisenberg(1)?;
    let x = GroupElement::new(vec![1.0, 2.0, 0.5]);
    let y = GroupElement::new(vec![-0.5, 1.0, 3.0]);
    let xy = bch_multiply(&h, &x, &y)?;
    let yx = bch_multiply(&h, &y, &x)?;
    println!("Heisenberg: x*y = {:?}, y*x = {:?}", xy.coords, yx.coords);
    let d = dilate(&h, 2.0, &xy)?;
    println!("D_2(x*y) = {:?}, |x*y| = {:.6}, |D_2(x*y)| = {:.6}", d.coords, quasi_norm(&h, &xy), quasi_norm(&h, &d));
    println!("quasi-triangle constant {:.6}, Q = {}", quasi_triangle_constant(&h), homogeneous_dimension(&h));

    let e = GradedLieAlgebra::engel()?;
    let a = GroupElement::new(vec![1.0, -1.0, 0.5, 0.25]);
    let b = GroupElement::new(vec![0.3, 2.0, -1.0, 1.0]);
    let c = GroupElement::new(vec![-2.0, 0.5, 0.0, 3.0]);
    let left = bch_multiply(&e, &bch_multiply(&e, &a, &b)?, &c)?;
    let right = bch_multiply(&e, &a, &bch_multiply(&e, &b, &c)?)?;
    let gap = left.coords.iter().zip(&right.coords).map(|(u, v)| (u - v).abs()).fold(0.0, f64::max);
    println!("Engel: (ab)c - a(bc) = {gap:.2e}");

    let l = LatticeSubgroup::canonical(h.clone())?;
    println!("canonical Heisenberg lattice: covolume {}, {} points of quasi-norm <= 2", l.covolume(), l.enumerate(2.0).len());
    let (gamma, t) = l.reduce_to_domain(&GroupElement::new(vec![3.7, -2.2, 5.9]))?;
    println!("reduction of (3.7, -2.2, 5.9): lattice part {:?}, domain coordinates {t:?}", gamma.coords);

    // Σ_{n∈ℤ²} e^{-π|x+n|²} = Π_j Σ_k e^{-πk²} cos(2πk x_j)
    let z2 = LatticeSubgroup::canonical(GradedLieAlgebra::abelian(2)?)?;
    let order = 40.0;
    let constant = 1.01 * (0..20000).map(|i| i as f64 * 1e-3).map(|r| (1.0 + r).powf(order) * (-PI * r * r).exp()).fold(0.0, f64::max);
    let phi = CertifiedFunction { f: Box::new(|z: &GroupElement| (-PI * z.coords.iter().map(|v| v * v).sum::<f64>()).exp()), constant, order };
    let p = GroupElement::new(vec![0.3, -0.45]);
    let per = z2.periodize(&phi, &p, 1e-14)?;
    let theta = |x: f64| (-30..=30).map(|k| (-PI * (k * k) as f64).exp() * (2.0 * PI * k as f64 * x).cos()).sum::<f64>();
    let oracle = theta(0.3) * theta(-0.45);
    println!(
        "periodized Gaussian on Z^2 at (0.3, -0.45): {:.15} ({} terms, tail <= {:.1e}); theta series {:.15}",
        per.value, per.terms, per.tail_bound, oracle
    );
    Ok(())
}
