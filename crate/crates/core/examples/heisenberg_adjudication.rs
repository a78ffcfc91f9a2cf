//! Refine the grid model of Γ\H₁ on 16³, 24³ and 32³-type grids, extrapolate
//! every eigenvalue branch below ~105 and compare the lowest ten distinct
//! values with the closed-form list under both readings of the quantum
//! number `a`.

use nilspec::grid::{adjudicate, convergence_study, StudyOptions, TwistedGrid};
use nilspec::group::GradedLieAlgebra;

fn main() -> nilspec::error::Result<()> {
    let algebra = GradedLieAlgebra::heisenberg(1)?;
    let grids = [TwistedGrid::uniform(16)?, TwistedGrid::uniform(24)?, TwistedGrid::uniform(32)?];
    let started = std::time::Instant::now();
    let report = convergence_study(&algebra, &grids, &StudyOptions::default())?;
    println!("study took {:.1?}, median order {:?}", started.elapsed(), report.median_order);
    println!("{:>4} {:>3} {:>14} {:>14} {:>14} {:>16} {:>9} {:>6}", "k", "c", "N=16", "N=24", "N=32", "extrapolated", "order", "mult");
    for b in &report.branches {
        println!(
            "{:>4} {:>3} {:>14.8} {:>14.8} {:>14.8} {:>16.10} {:>9} {:>6}",
            b.frequency,
            b.cluster,
            b.values[0],
            b.values[1],
            b.values[2],
            b.extrapolated,
            b.order.map_or("-".into(), |p| format!("{p:.3}")),
            b.multiplicity[2]
        );
    }
    for n in &report.notes {
        println!("note: {n}");
    }
    let adj = adjudicate(&report, 10)?;
    for h in &adj.hypotheses {
        println!("\na >= {}: max deviation {:.3e}, multiplicities matching {}/{}", h.a_min, h.max_deviation, h.multiplicity_matches, h.closed.len());
        for ((v, c), d) in adj.values.iter().zip(&h.closed).zip(&h.relative_deviation) {
            println!("  {:>14.8} (x{:>2})  closed {:>14.8} (x{:>2})  {:+.2e}", v.0, v.1, c.0, c.1, d);
        }
    }
    for n in &adj.notes {
        println!("note: {n}");
    }
    Ok(())
}
