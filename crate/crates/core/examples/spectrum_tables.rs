//! Closed-form spectra: the 2-torus, the Heisenberg nil-manifold and the
//! square of the torus Laplacian, with a CSV round trip.

use nilspec::spectra::*;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let t2 = torus_spectrum(2, 4.0 * FOUR_PI_SQ)?;
    println!("T^2 up to 16 pi^2:");
    for (v, m) in t2.merged() {
        println!("  {v:>10.4}  x{m}");
    }

    let h = heisenberg_spectrum(1, 60.0)?;
    println!("Heisenberg quotient up to 60:");
    for line in &h.lines {
        println!("  {:>10.4}  x{:<3} {:?}", line.value, line.multiplicity, line.sector);
    }
    for l in [20.0, 40.0, 60.0] {
        println!("  N({l}) = {}", h.counting(l)?);
    }

    let sq = power_spectrum(&t2, 2)?;
    println!("squared torus Laplacian: nu = {}, first values {:?}", sq.nu, &sq.merged()[..4]);

    let csv = h.to_csv_string();
    let back = SpectralTable::read_csv(csv.as_bytes())?;
    println!("CSV round trip equal: {}", back == h);
    Ok(())
}
