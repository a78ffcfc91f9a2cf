//! Quantum variance of `a = cos 2π(x + y)` in three eigenbases: torus plane
//! waves (no variance at all), torus plane waves mixed inside each
//! eigenspace, and grid eigenfunctions of the Heisenberg nil-manifold.

use std::f64::consts::PI;
use std::sync::Arc;

use nilspec::grid::{LanczosOptions, TwistedGrid};
use nilspec::semiclassical::{Separable, TorusSymbol};
use nilspec::variance::*;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let a = PositionObservable::cosine(&[1, 1]);
    let eps = [0.2, 0.1, 0.05, 0.025];
    let lambda_max = 4.0 * PI * PI * 400.0;

    let plane = EigenBasis::torus_exponential(2, lambda_max)?;
    let mixed = EigenBasis::torus_mixed(2, lambda_max, 1)?;
    for basis in [&plane, &mixed] {
        let r = VarianceReport::compute(basis, &a, &eps)?;
        println!("{}", r.basis);
        for ((e, n), v) in r.epsilons.iter().zip(&r.counts).zip(&r.variances) {
            println!("  eps={e:<6} N={n:<5} V={v:.6e}");
        }
    }

    let elems = matrix_elements(&mixed, &a, lambda_max)?;
    let grid: Vec<f64> = [25.0, 50.0, 100.0, 200.0, 400.0].iter().map(|s| 4.0 * PI * PI * s).collect();
    let d = density_one_report(&elems, a.average(), &grid, 0.1);
    println!("density of |<a phi, phi> - offset| <= 0.1 in the mixed basis");
    for ((l, n), f) in d.lambdas.iter().zip(&d.counts).zip(&d.density) {
        println!("  Lambda={l:>10.2} N={n:<6} density={f:.4}");
    }

    let g = TwistedGrid::uniform(24)?;
    let heis = EigenBasis::heisenberg_grid(g, 55.0, &LanczosOptions::default())?;
    println!("{} (orthonormality defect {:.1e})", heis.describe(), heis.orthonormality_defect);
    let r = VarianceReport::compute(&heis, &a, &[1.0 / 30f64.sqrt(), 1.0 / 55f64.sqrt()])?;
    for ((e, n), v) in r.epsilons.iter().zip(&r.counts).zip(&r.variances) {
        println!("  eps={e:.4} N={n:<5} V={v:.6e}");
    }

    let weight = TorusSymbol::single(&[0, 0], Arc::new(Separable::gaussian(2, 0.0, 0.15)))?;
    println!("generalized Weyl averages of a Gaussian in xi over the window [0, 1]");
    for e in [0.1, 0.05, 0.025] {
        let w = generalized_weyl_average(&plane, &weight, (0.0, 1.0), e)?;
        println!("  eps={e:<6} N={:<5} average={:.8} limit={:.8}", w.count, w.average.re, w.limit.re);
    }
    Ok(())
}
