//! Exact identities of the torus quantization: Hilbert–Schmidt norm and
//! trace against a dense matrix, the commutator with the Laplacian, the
//! `A₀` norm bound and the mean-ergodic averages of the free flow.

use std::sync::Arc;
use std::time::Instant;

use nilspec::semiclassical::*;
use num_complex::Complex64;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let a = parse_symbol(
        "dim 2
         mode 0 0 profile=gaussian(0,1)
         mode 1 0 coef=0.5,0 profile=hermite(2,0.7)
         mode -1 2 coef=0,0.25 profile=bump(1.5)",
    )?;

    println!("Hilbert-Schmidt norm and trace");
    for eps in [0.5, 0.25, 0.125] {
        let hs = hs_norm(&a, eps)?;
        let tr = trace(&a, eps)?;
        println!(
            "  eps={eps:<6} |Op|_HS^2={:.12e} eps^n*HS^2/|a|^2={:.15} trace={:.10e} eps^-n*int(a)={:.10e}",
            hs.hs_norm_sq, hs.ratio, tr.trace.re, tr.continuum.re
        );
    }
    let (rows, cols, m) = dense_matrix(&a, 0.5, 20);
    let dense: f64 = m.iter().map(|c| c.norm_sqr()).sum();
    let diag: Complex64 = cols.iter().enumerate().map(|(j, c)| m[(rows.iter().position(|r| r == c).unwrap(), j)]).sum();
    println!("  dense box of radius 20 at eps=0.5: HS^2={dense:.12e} trace={:.10e}", diag.re);

    println!("commutator with the Laplacian");
    let mut worst: f64 = 0.0;
    for seed in 0..20 {
        let b = random_symbol(2, 5, seed)?;
        worst = worst.max(commutator_decomposition_check(&b, 0.1, &random_functions(2, 5, 6, seed)));
    }
    println!("  max relative deviation over 20 random symbols x 5 functions: {worst:.3e}");

    println!("A0 norm bound");
    let g = TorusSymbol::single(&[1, 0], Arc::new(Separable::gaussian(2, 0.3, 0.8)))?;
    let check = op_norm_bound_check(&g, 0.2, 20, 7)?;
    println!(
        "  A0 <= {:.12} (+{:.1e}), largest Rayleigh quotient {:.12}, passed={}",
        check.a0_norm.value, check.a0_norm.error, check.max_quotient, check.passed
    );

    println!("mean ergodic averages of e^(2iTE), a = e^(2 pi i x) psi(xi)");
    let e = TorusSymbol::single(&[1], Arc::new(Separable::gaussian(1, 0.0, 1.0)))?;
    let t0 = Instant::now();
    let times: Vec<f64> = [10.0, 100.0, 1000.0].iter().map(|t| FLOW_SPEED * t).collect();
    let samples = vec![vec![0.0], vec![0.013], vec![0.4], vec![-1.7]];
    let report = ergodic_report(&e, &times, &samples)?;
    for (t, d) in report.times.iter().zip(&report.distances) {
        println!("  flow time {t:>6}: |avg - P a| = {d:.6e}  (x sqrt(T) = {:.4})", d * t.sqrt());
    }
    println!(
        "  closed form vs time quadrature: {:.2e}; strictly decreasing: {} ({:.1?})",
        report.quadrature_deviation,
        report.strictly_decreasing,
        t0.elapsed()
    );
    Ok(())
}
