//! Weyl constants by closed form, heat trace and counting, for the 2-torus,
//! its squared Laplacian and the Heisenberg quotient (where the series
//! route and direct counting disagree; both are printed).

use nilspec::spectra::*;
use nilspec::weyl::*;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let lambda = FOUR_PI_SQ * 2500.0;
    let t2 = torus_spectrum(2, lambda)?;
    let fit = weyl_fit(&t2, &log_grid(lambda / 10.0, lambda, 40))?;
    let kar = karamata_constant(&t2, &default_time_grid(&t2))?;
    let exact = weyl_constant(1.0, &c0_torus(2)?)?;
    println!("T^2: fit {:.6} (exponent {:.4}), heat trace {:.8}, closed form {:.8}", fit.fitted_constant, fit.fitted_exponent, kar.value, exact);
    println!("     N(L) 4 pi / L at the cutoff = {:.5}", t2.counting(lambda)? as f64 * 4.0 * std::f64::consts::PI / lambda);

    let sq = power_spectrum(&t2, 2)?;
    let fit = weyl_fit(&sq, &log_grid(sq.lambda_max / 100.0, sq.lambda_max, 40))?;
    let c = c0_power(&c0_torus(2)?, 2)?;
    println!(
        "T^2 squared: exponent {:.4}, constant {:.6}, from c0/2 = {:.6}",
        fit.fitted_exponent,
        fit.fitted_constant,
        weyl_constant(1.0, &c)?
    );

    let d = heisenberg_discrepancy(1, 2000.0)?;
    println!(
        "Heisenberg: counting {:.6e}, heat trace {:.6e}, series {:.6e} (+-{:.1e}), ratio {:.4}, top half-decade fluctuation {:.3}",
        d.fitted_constant, d.karamata_constant, d.series_c1, d.series_error_bound, d.ratio, d.top_half_decade_fluctuation
    );
    for n in &d.notes {
        println!("  {n}");
    }
    Ok(())
}
