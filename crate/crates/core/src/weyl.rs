//! Weyl-law constants by independent routes: closed forms, the Heisenberg
//! series, log-log fits of the counting function and the heat trace with a
//! Karamata conversion.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use statrs::function::gamma::{gamma, gamma_ur};

use crate::error::{Error, Result};
use crate::numeric::{extrapolate_to_zero, fit_line, geometric_mean, pairwise_sum};
use crate::spectra::SpectralTable;

/// How a constant was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Route {
    TorusClosedForm,
    /// `p₁(0)/Γ(Q/ν)` with the Gaussian heat kernel of `ℝⁿ`.
    HeatKernel,
    HeisenbergSeries,
    HeatTrace,
    CountingFit,
}

/// The constant `c₀` of a positive Rockland operator on a graded group.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeylConstant {
    pub c0: f64,
    pub route: Route,
    pub group: String,
    pub nu: u32,
    pub q: u32,
    pub series_truncation: Option<u64>,
    pub error_bound: Option<f64>,
}

/// `c₀(Δ_ℝⁿ) = 1/(Γ(n/2)·2ⁿ·π^{n/2})`.
pub fn c0_torus(n: usize) -> Result<WeylConstant> {
    if n == 0 {
        return Err(Error::input("dimension must be positive"));
    }
    let nf = n as f64;
    Ok(WeylConstant {
        c0: 1.0 / (gamma(nf / 2.0) * 2f64.powi(n as i32) * PI.powf(nf / 2.0)),
        route: Route::TorusClosedForm,
        group: format!("abelian:{n}"),
        nu: 2,
        q: n as u32,
        series_truncation: None,
        error_bound: None,
    })
}

/// `c₀ = p₁(0)/Γ(Q/ν)` with `p₁(0) = (4π)^{-n/2}` for the Euclidean Laplacian.
pub fn c0_heat_kernel_euclidean(n: usize) -> Result<WeylConstant> {
    if n == 0 {
        return Err(Error::input("dimension must be positive"));
    }
    let nf = n as f64;
    let p1 = (4.0 * PI).powf(-nf / 2.0);
    Ok(WeylConstant {
        c0: p1 / gamma(nf / 2.0),
        route: Route::HeatKernel,
        group: format!("abelian:{n}"),
        nu: 2,
        q: n as u32,
        series_truncation: None,
        error_bound: None,
    })
}

fn heisenberg_prefactor(n: usize) -> f64 {
    2.0 * (2.0 * PI).powi(-(3 * n as i32 + 1))
}

/// `C(n+a−1, a)·(2a+n)^{−n−1}` in floating point (ratios of small integers).
fn series_term(n: usize, a: u64) -> f64 {
    let mut binom = 1.0;
    for i in 1..n as u64 {
        binom *= (a + i) as f64 / i as f64;
    }
    binom * ((2 * a + n as u64) as f64).powi(-(n as i32) - 1)
}

/// Partial sum of the Heisenberg series with `terms` terms (prefactor included).
pub fn heisenberg_series_partial(n: usize, terms: u64) -> f64 {
    let t: Vec<f64> = (0..terms).map(|a| series_term(n, a)).collect();
    heisenberg_prefactor(n) * pairwise_sum(&t)
}

/// Bound on the series remainder after `terms` terms (prefactor included).
pub fn heisenberg_series_remainder(n: usize, terms: u64) -> f64 {
    let nf = n as f64;
    let a = terms as f64;
    if a < 1.0 {
        return f64::INFINITY;
    }
    let rho = ((a + nf - 1.0) / (a + nf / 2.0)).powf(nf - 1.0);
    let fact: f64 = (1..n).map(|i| i as f64).product();
    heisenberg_prefactor(n) * rho / (fact * 2f64.powi(n as i32 + 1) * (a - 1.0 + nf / 2.0))
}

/// `c₀(L_Hₙ) = (2π)^{−(3n+1)}·2·Σ_{a≥0} C(n+a−1, a)(2a+n)^{−n−1}`, truncated
/// where the remainder bound drops below `tol`.
pub fn c0_heisenberg_series(n: usize, tol: f64) -> Result<WeylConstant> {
    const MAX_TERMS: u64 = 500_000_000;
    if n == 0 {
        return Err(Error::input("Heisenberg index must be positive"));
    }
    if !(tol > 0.0) {
        return Err(Error::input("tolerance must be positive"));
    }
    let mut terms: u64 = 1;
    while heisenberg_series_remainder(n, terms) > tol {
        terms *= 2;
        if terms > MAX_TERMS {
            return Err(Error::capability(format!("tolerance {tol:e} needs more than {MAX_TERMS} series terms")));
        }
    }
    let (mut lo, mut hi) = (terms / 2, terms);
    while hi - lo > 1 {
        let mid = (lo + hi) / 2;
        if heisenberg_series_remainder(n, mid) > tol {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(WeylConstant {
        c0: heisenberg_series_partial(n, hi),
        route: Route::HeisenbergSeries,
        group: format!("heisenberg:{n}"),
        nu: 2,
        q: 2 * n as u32 + 2,
        series_truncation: Some(hi),
        error_bound: Some(heisenberg_series_remainder(n, hi)),
    })
}

/// Constant of the ℓ-th power: `c₀/ℓ`, `ν → νℓ`.
pub fn c0_power(c: &WeylConstant, l: u32) -> Result<WeylConstant> {
    if l == 0 {
        return Err(Error::input("power must be at least 1"));
    }
    let mut out = c.clone();
    out.c0 = c.c0 / l as f64;
    out.nu = c.nu * l;
    out.error_bound = c.error_bound.map(|e| e / l as f64);
    Ok(out)
}

/// `c₁ = Vol·c₀·ν/Q`, the limit of `Λ^{−Q/ν}N(Λ)`.
pub fn weyl_constant(vol: f64, c: &WeylConstant) -> Result<f64> {
    if !(vol > 0.0) {
        return Err(Error::input("volume must be positive"));
    }
    Ok(vol * c.c0 * c.nu as f64 / c.q as f64)
}

/// `Vol·c₀·(ν/Q)·(b^{Q/ν} − a^{Q/ν})`, the limit of `Λ^{−Q/ν}N_{[a,b]}(Λ)`.
pub fn window_constant(vol: f64, c: &WeylConstant, a: f64, b: f64) -> Result<f64> {
    if !(a >= 0.0 && a < b) {
        return Err(Error::input(format!("window [{a}, {b}] must satisfy 0 ≤ a < b")));
    }
    let p = c.q as f64 / c.nu as f64;
    Ok(weyl_constant(vol, c)? * (b.powf(p) - a.powf(p)))
}

/// Result of a log-log fit of the counting function.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeylFit {
    pub samples: Vec<(f64, u64)>,
    pub fitted_exponent: f64,
    /// Geometric mean of `N(Λ)Λ^{−Q/ν}` over the top half of the grid.
    pub fitted_constant: f64,
    /// Max relative deviation of `N(Λ)Λ^{−Q/ν}` from the constant over the top decade.
    pub residual: f64,
}

/// `count` log-spaced points on `[lo, hi]`.
pub fn log_grid(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    if count == 1 {
        return vec![hi];
    }
    let (a, b) = (lo.ln(), hi.ln());
    (0..count)
        .map(|i| if i + 1 == count { hi } else { (a + (b - a) * i as f64 / (count - 1) as f64).exp() })
        .collect()
}

fn check_grid(t: &SpectralTable, grid: &[f64], min_span: f64) -> Result<()> {
    if grid.len() < 8 {
        return Err(Error::input(format!("fit grid needs at least 8 points, got {}", grid.len())));
    }
    if grid.windows(2).any(|w| !(w[1] > w[0])) || !(grid[0] > 0.0) {
        return Err(Error::input("fit grid must be positive and strictly increasing"));
    }
    if grid[grid.len() - 1] / grid[0] < min_span * (1.0 - 1e-12) {
        return Err(Error::input("fit grid must span at least one decade"));
    }
    if t.merged().len() < 2 {
        return Err(Error::input("table has a single eigenvalue; nothing to fit"));
    }
    if grid[grid.len() - 1] > t.lambda_max * (1.0 + 1e-12) {
        return Err(Error::range(format!("fit grid exceeds the table cutoff {}", t.lambda_max)));
    }
    Ok(())
}

/// Fits `N(Λ) ≈ c·Λ^p` on `grid`.
pub fn weyl_fit(t: &SpectralTable, grid: &[f64]) -> Result<WeylFit> {
    check_grid(t, grid, 10.0)?;
    let samples: Vec<(f64, u64)> = grid.iter().map(|&l| Ok((l, t.counting(l)?))).collect::<Result<_>>()?;
    let xs: Vec<f64> = samples.iter().map(|s| s.0.ln()).collect();
    let ys: Vec<f64> = samples.iter().map(|s| (s.1 as f64).ln()).collect();
    let (slope, _) = fit_line(&xs, &ys);
    let p = t.weyl_exponent();
    let normalized: Vec<f64> = samples.iter().map(|&(l, n)| n as f64 * l.powf(-p)).collect();
    let half = samples.len() / 2;
    let constant = geometric_mean(&normalized[half..]);
    let top = grid[grid.len() - 1];
    let residual = samples
        .iter()
        .zip(&normalized)
        .filter(|(s, _)| s.0 >= top / 10.0 * (1.0 - 1e-12))
        .map(|(_, v)| (v / constant - 1.0).abs())
        .fold(0.0, f64::max);
    Ok(WeylFit { samples, fitted_exponent: slope, fitted_constant: constant, residual })
}

/// Max relative deviation of `N(Λ)Λ^{−Q/ν}` from its geometric mean over `grid`.
pub fn normalized_counting_fluctuation(t: &SpectralTable, grid: &[f64]) -> Result<f64> {
    let p = t.weyl_exponent();
    let v: Vec<f64> = grid.iter().map(|&l| Ok(t.counting(l)? as f64 * l.powf(-p))).collect::<Result<_>>()?;
    let g = geometric_mean(&v);
    Ok(v.iter().map(|x| (x / g - 1.0).abs()).fold(0.0, f64::max))
}

/// Heat trace `Σ mult·e^{−λτ}` of the table entries (no truncation control).
pub fn heat_trace_raw(t: &SpectralTable, time: f64) -> f64 {
    let terms: Vec<f64> = t.lines.iter().map(|l| l.multiplicity as f64 * (-l.value * time).exp()).collect();
    pairwise_sum(&terms)
}

/// Growth constant `c` with `N(λ) ≤ c·λ^{Q/ν}` beyond the cutoff, estimated
/// from the top decade of the table with a factor-2 safety margin.
fn growth_constant(t: &SpectralTable) -> f64 {
    let p = t.weyl_exponent();
    let lo = (t.lambda_max / 10.0).max(t.merged().get(1).map_or(1.0, |l| l.0));
    let grid = log_grid(lo, t.lambda_max, 64);
    let max = grid
        .iter()
        .filter_map(|&l| t.counting(l).ok().map(|n| n as f64 * l.powf(-p)))
        .fold(0.0, f64::max);
    2.0 * max
}

/// Bound on `Σ_{λ > Λ} mult·e^{−λτ}` from `N(λ) ≤ c·λ^p`:
/// `c·τ^{−p}·Γ(p+1, Λτ)`.
fn truncation_bound(c: f64, p: f64, cutoff: f64, time: f64) -> f64 {
    c * time.powf(-p) * gamma_ur(p + 1.0, cutoff * time) * gamma(p + 1.0)
}

/// Heat trace with a truncation check: errors when the omitted tail could
/// exceed `1e-6` of the value.
pub fn heat_trace(t: &SpectralTable, time: f64) -> Result<f64> {
    if !(time > 0.0) {
        return Err(Error::input("time must be positive"));
    }
    let z = heat_trace_raw(t, time);
    let c = growth_constant(t);
    let p = t.weyl_exponent();
    let bound = truncation_bound(c, p, t.lambda_max, time);
    if bound > 1e-6 * z {
        let mut need = t.lambda_max.max(1.0);
        while truncation_bound(c, p, need, time) > 1e-6 * z && need < 1e300 {
            need *= 1.5;
        }
        return Err(Error::range(format!(
            "heat trace at time {time:e} is truncation dominated (tail bound {bound:.3e}); \
             a cutoff of about {need:.4e} is required"
        )));
    }
    Ok(z)
}

/// Default small-time grid: `τ_min·{1, 2, 4, 8}` with `τ_min = 25/Λ`.
pub fn default_time_grid(t: &SpectralTable) -> Vec<f64> {
    let tmin = 25.0 / t.lambda_max;
    vec![tmin, 2.0 * tmin, 4.0 * tmin, 8.0 * tmin]
}

/// Karamata estimate of `lim Λ^{−Q/ν}N(Λ)`:
/// `K(τ) = Z(τ)·τ^{Q/ν}/Γ(Q/ν + 1)` Richardson-extrapolated to `τ → 0`.
pub fn karamata_constant(t: &SpectralTable, time_grid: &[f64]) -> Result<KaramataEstimate> {
    if time_grid.is_empty() {
        return Err(Error::input("time grid is empty"));
    }
    let p = t.weyl_exponent();
    let g = gamma(p + 1.0);
    let mut samples = Vec::with_capacity(time_grid.len());
    for &tau in time_grid {
        samples.push((tau, heat_trace(t, tau)? * tau.powf(p) / g));
    }
    let xs: Vec<f64> = samples.iter().map(|s| s.0).collect();
    let ys: Vec<f64> = samples.iter().map(|s| s.1).collect();
    let (value, change) = extrapolate_to_zero(&xs, &ys);
    Ok(KaramataEstimate { value, extrapolation_change: change, samples })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KaramataEstimate {
    pub value: f64,
    /// Size of the last Neville correction.
    pub extrapolation_change: f64,
    /// `(τ, K(τ))` before extrapolation.
    pub samples: Vec<(f64, f64)>,
}

/// Machine-readable summary of one route.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeylReport {
    pub route: Route,
    pub c0: Option<f64>,
    pub c1: f64,
    pub exponent: Option<f64>,
    pub residual: Option<f64>,
    pub truncation: Option<u64>,
    pub notes: Vec<String>,
}

impl WeylReport {
    pub fn from_constant(vol: f64, c: &WeylConstant) -> Result<Self> {
        let mut notes = Vec::new();
        if let Some(e) = c.error_bound {
            notes.push(format!("series remainder bound {e:.3e}"));
        }
        Ok(WeylReport {
            route: c.route,
            c0: Some(c.c0),
            c1: weyl_constant(vol, c)?,
            exponent: Some(c.q as f64 / c.nu as f64),
            residual: None,
            truncation: c.series_truncation,
            notes,
        })
    }

    pub fn from_fit(t: &SpectralTable, fit: &WeylFit) -> Self {
        WeylReport {
            route: Route::CountingFit,
            c0: Some(fit.fitted_constant * t.q as f64 / (t.volume * t.nu as f64)),
            c1: fit.fitted_constant,
            exponent: Some(fit.fitted_exponent),
            residual: Some(fit.residual),
            truncation: None,
            notes: vec!["constant = geometric mean of N(Λ)Λ^(-Q/ν) over the top half of the grid".into()],
        }
    }

    pub fn from_karamata(t: &SpectralTable, k: &KaramataEstimate) -> Self {
        WeylReport {
            route: Route::HeatTrace,
            c0: Some(k.value * t.q as f64 / (t.volume * t.nu as f64)),
            c1: k.value,
            exponent: None,
            residual: Some(k.extrapolation_change),
            truncation: None,
            notes: vec![format!("Richardson extrapolation over {} small times", k.samples.len())],
        }
    }
}

/// Side-by-side comparison of the series constant and direct counting on
/// `Γ\Hₙ`. Reports both; asserts neither.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeisenbergDiscrepancy {
    pub n: usize,
    pub lambda_max: f64,
    pub fitted_constant: f64,
    pub fitted_exponent: f64,
    pub karamata_constant: f64,
    pub series_c1: f64,
    pub series_error_bound: f64,
    /// `fitted_constant / series_c1`.
    pub ratio: f64,
    /// Max relative deviation of `N(Λ)Λ^{−Q/ν}` over the top half-decade.
    pub top_half_decade_fluctuation: f64,
    pub notes: Vec<String>,
}

pub fn heisenberg_discrepancy(n: usize, lambda_max: f64) -> Result<HeisenbergDiscrepancy> {
    let t = crate::spectra::heisenberg_spectrum(n, lambda_max)?;
    let fit = weyl_fit(&t, &log_grid(lambda_max / 10.0, lambda_max, 40))?;
    let kar = karamata_constant(&t, &default_time_grid(&t))?;
    let series = c0_heisenberg_series(n, 1e-10)?;
    let series_c1 = weyl_constant(t.volume, &series)?;
    let fluct = normalized_counting_fluctuation(&t, &log_grid(lambda_max / 10f64.sqrt(), lambda_max, 50))?;
    let ratio = fit.fitted_constant / series_c1;
    let notes = vec![
        format!(
            "counting the closed-form spectrum gives c1 ≈ {:.6e}; the series route gives {:.6e}; ratio {:.4}",
            fit.fitted_constant, series_c1, ratio
        ),
        format!("ratio / (4π²) = {:.4}; ratio / 32 = {:.4}", ratio / (4.0 * PI * PI), ratio / 32.0),
        "the two routes use different normalizations somewhere; neither value is taken as ground truth".into(),
    ];
    Ok(HeisenbergDiscrepancy {
        n,
        lambda_max,
        fitted_constant: fit.fitted_constant,
        fitted_exponent: fit.fitted_exponent,
        karamata_constant: kar.value,
        series_c1,
        series_error_bound: series.error_bound.unwrap_or(0.0),
        ratio,
        top_half_decade_fluctuation: fluct,
        notes,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectra::{torus_spectrum, FOUR_PI_SQ};

    #[test]
    fn closed_form_values() {
        assert!((c0_torus(2).unwrap().c0 - 1.0 / (4.0 * PI)).abs() < 1e-15);
        assert!((c0_torus(1).unwrap().c0 - 1.0 / (2.0 * PI)).abs() < 1e-15);
        for n in 1..8 {
            let a = c0_torus(n).unwrap().c0;
            let b = c0_heat_kernel_euclidean(n).unwrap().c0;
            assert!((a - b).abs() <= 1e-14 * a);
        }
    }

    #[test]
    fn heisenberg_series_n1() {
        let c = c0_heisenberg_series(1, 1e-10).unwrap();
        assert!((c.c0 - 1.0 / (64.0 * PI * PI)).abs() < 1e-10);
        assert!(c.error_bound.unwrap() <= 1e-10);
        let c1 = weyl_constant(0.5, &c).unwrap();
        assert!((c1 - 1.0 / (256.0 * PI * PI)).abs() < 1e-10);
    }

    #[test]
    fn powers_and_windows() {
        let c = c0_torus(2).unwrap();
        let p = c0_power(&c, 2).unwrap();
        assert!((p.c0 - 1.0 / (8.0 * PI)).abs() < 1e-15 && p.nu == 4);
        let w = window_constant(1.0, &c, 1.0, 4.0).unwrap();
        assert!((w - 3.0 / (4.0 * PI)).abs() < 1e-15);
        assert!(matches!(window_constant(1.0, &c, 2.0, 1.0), Err(Error::Input(_))));
    }

    #[test]
    fn fit_rejects_bad_grids() {
        let t = torus_spectrum(2, 1e4).unwrap();
        assert!(matches!(weyl_fit(&t, &log_grid(100.0, 500.0, 10)), Err(Error::Input(_))));
        assert!(matches!(weyl_fit(&t, &log_grid(100.0, 5000.0, 5)), Err(Error::Input(_))));
        let single = torus_spectrum(2, 30.0).unwrap();
        assert!(matches!(weyl_fit(&single, &log_grid(1.0, 30.0, 10)), Err(Error::Input(_))));
    }

    #[test]
    fn heat_trace_limits() {
        let t = torus_spectrum(1, FOUR_PI_SQ * 400.0).unwrap();
        assert!((heat_trace(&t, 10.0).unwrap() - 1.0).abs() < 1e-15);
        let short = torus_spectrum(1, 100.0).unwrap();
        assert!(matches!(heat_trace(&short, 1e-4), Err(Error::Range(_))));
    }
}
