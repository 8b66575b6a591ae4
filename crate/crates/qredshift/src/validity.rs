//! Validity scans: where does the single-environment mixing model hold?
//!
//! The scanner sweeps χ (or mode parameters), measures the rank-1 residual r
//! of the Gram deficit at every point, and bisects for the boundary χ* where
//! r first crosses a caller-chosen threshold. Both the residual and the
//! deficit of a forced completion are reported; which one defines "validity"
//! is left to the consumer.

use std::time::{Duration, Instant};

use rayon::prelude::*;
use thiserror::Error;

use crate::mixer::{self, BasisSet, MixerError};
use crate::quad::QuadratureSettings;
use crate::spectra::{ModeError, RedshiftFactor, SpectralMode};

#[derive(Debug, Error)]
pub enum ScanError {
    #[error(transparent)]
    Mode(#[from] ModeError),
    #[error(transparent)]
    Mixer(#[from] MixerError),
    #[error("bracket invalid: r(lo) = {r_lo:.6e}, r(hi) = {r_hi:.6e}, threshold = {threshold:.6e}; need r(lo) < threshold <= r(hi)")]
    BracketInvalid {
        r_lo: f64,
        r_hi: f64,
        threshold: f64,
    },
    #[error("invalid argument: {0}")]
    Parameter(String),
}

/// One χ sample. Numerical failure at a point zeroes the measures and clears
/// `converged` instead of aborting the scan, so every requested χ has a row.
#[derive(Clone, Debug)]
pub struct ScanRecord {
    pub chi: f64,
    /// Rank-1 residual r of G = I − AA†.
    pub residual: f64,
    /// ‖UU†−I‖_F of the forced completion at this χ.
    pub deficit: f64,
    pub min_eigenvalue: f64,
    /// |A_nm| row-major over all basis pairs.
    pub pair_magnitudes: Vec<f64>,
    /// Measured per point; excluded from serialized output.
    pub wall_time: Duration,
    pub converged: bool,
}

fn scan_point(
    basis: &BasisSet,
    chi_value: f64,
    tolerance: f64,
    settings: &QuadratureSettings,
) -> Result<ScanRecord, ScanError> {
    let start = Instant::now();
    let n = basis.dimension();
    let chi = RedshiftFactor::new(chi_value)?;
    let failed = |start: Instant| ScanRecord {
        chi: chi_value,
        residual: 0.0,
        deficit: 0.0,
        min_eigenvalue: 0.0,
        pair_magnitudes: vec![0.0; n * n],
        wall_time: start.elapsed(),
        converged: false,
    };
    let a = match basis.overlap_block(chi, settings) {
        Ok(a) => a,
        Err(MixerError::QuadratureFailure { .. }) | Err(MixerError::NonFiniteIntegrand { .. }) => {
            return Ok(failed(start))
        }
        Err(e) => return Err(e.into()),
    };
    let (report, matrix) = mixer::analyze_block(&a, chi, tolerance)?;
    let mut pair_magnitudes = Vec::with_capacity(n * n);
    for i in 0..n {
        for j in 0..n {
            pair_magnitudes.push(a[(i, j)].norm());
        }
    }
    Ok(ScanRecord {
        chi: chi_value,
        residual: report.rank1_residual,
        deficit: matrix.deficit,
        min_eigenvalue: report.min_eigenvalue,
        pair_magnitudes,
        wall_time: start.elapsed(),
        converged: true,
    })
}

/// Residual, deficit, and pair magnitudes over a sorted positive χ grid.
/// `workers > 1` runs grid points on a dedicated thread pool; results are
/// collected in grid order, so the output is identical for any worker count.
pub fn scan_chi(
    basis: &BasisSet,
    chi_grid: &[f64],
    tolerance: f64,
    workers: usize,
    settings: &QuadratureSettings,
) -> Result<Vec<ScanRecord>, ScanError> {
    if chi_grid.is_empty() {
        return Err(ScanError::Parameter("chi grid is empty".into()));
    }
    if chi_grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(ScanError::Parameter(
            "chi grid must be strictly increasing".into(),
        ));
    }
    if !(chi_grid[0] > 0.0) {
        return Err(ScanError::Parameter("chi grid must be positive".into()));
    }
    if workers <= 1 || chi_grid.len() == 1 {
        chi_grid
            .iter()
            .map(|&c| scan_point(basis, c, tolerance, settings))
            .collect()
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build()
            .map_err(|e| ScanError::Parameter(format!("thread pool construction failed: {e}")))?;
        pool.install(|| {
            chi_grid
                .par_iter()
                .map(|&c| scan_point(basis, c, tolerance, settings))
                .collect()
        })
    }
}

/// Located validity boundary: r(χ) crosses `threshold` inside `bracket`.
#[derive(Clone, Copy, Debug)]
pub struct BoundaryResult {
    pub chi_star: f64,
    pub bracket: (f64, f64),
    /// Bisection steps taken.
    pub iterations: usize,
    pub threshold: f64,
    /// False when r sampled at 10 points across the input bracket is not
    /// nondecreasing (comb bases); χ* is then the first crossing from below.
    pub monotone_in_bracket: bool,
}

/// Bisect for the smallest χ in the bracket with r(χ) ≥ threshold. The
/// bracket is refined to a relative width of 1e−9 so that nearby boundaries
/// of different bases resolve; per-point quadrature failures are fatal here
/// because a boundary from unconverged residuals would be meaningless.
pub fn find_boundary(
    basis: &BasisSet,
    threshold: f64,
    bracket: (f64, f64),
    settings: &QuadratureSettings,
) -> Result<BoundaryResult, ScanError> {
    let (mut lo, mut hi) = bracket;
    if !(lo > 0.0 && hi > lo) || !lo.is_finite() || !hi.is_finite() {
        return Err(ScanError::Parameter(format!(
            "bracket ({lo}, {hi}) must be finite, positive, and increasing"
        )));
    }
    if !(threshold > 0.0) || !threshold.is_finite() {
        return Err(ScanError::Parameter(format!(
            "threshold {threshold} must be finite and positive"
        )));
    }

    let residual_at = |c: f64| -> Result<f64, ScanError> {
        let chi = RedshiftFactor::new(c)?;
        let a = basis.overlap_block(chi, settings)?;
        let (report, _) = mixer::analyze_block(&a, chi, threshold)?;
        Ok(report.rank1_residual)
    };

    const SAMPLES: usize = 10;
    let mut rs = [0.0_f64; SAMPLES];
    for (k, r) in rs.iter_mut().enumerate() {
        let c = lo + (hi - lo) * k as f64 / (SAMPLES - 1) as f64;
        *r = residual_at(c)?;
    }
    if !(rs[0] < threshold && rs[SAMPLES - 1] >= threshold) {
        return Err(ScanError::BracketInvalid {
            r_lo: rs[0],
            r_hi: rs[SAMPLES - 1],
            threshold,
        });
    }
    let monotone_in_bracket = rs.windows(2).all(|w| w[1] >= w[0] - 1e-9);

    // First subinterval crossing from below, so non-monotone residuals yield
    // the earliest boundary.
    let mut k0 = 0;
    for k in 0..SAMPLES - 1 {
        if rs[k] < threshold && rs[k + 1] >= threshold {
            k0 = k;
            break;
        }
    }
    let step = (hi - lo) / (SAMPLES - 1) as f64;
    hi = lo + step * (k0 + 1) as f64;
    lo += step * k0 as f64;

    let mut iterations = 0;
    while hi - lo > 1e-9 * 0.5 * (hi + lo) && iterations < 100 {
        let mid = 0.5 * (lo + hi);
        if residual_at(mid)? >= threshold {
            hi = mid;
        } else {
            lo = mid;
        }
        iterations += 1;
    }

    Ok(BoundaryResult {
        chi_star: 0.5 * (lo + hi),
        bracket: (lo, hi),
        iterations,
        threshold,
        monotone_in_bracket,
    })
}

/// Mean-frequency bookkeeping across the transform.
#[derive(Clone, Copy, Debug)]
pub struct FrequencyReport {
    pub mean_in: f64,
    pub mean_out: f64,
    /// mean_out/mean_in; equals χ² up to quadrature error.
    pub ratio: f64,
    /// χ² − 1.
    pub z: f64,
    /// (mean_out − mean_in)/mean_in: the relative mean energy change, which
    /// equals z.
    pub delta_energy_ratio: f64,
}

pub fn frequency_energy_report(
    f: &SpectralMode,
    chi: RedshiftFactor,
    settings: &QuadratureSettings,
) -> Result<FrequencyReport, ScanError> {
    let mean_in = f.mean_frequency(settings)?;
    let mean_out = f.redshift(chi).mean_frequency(settings)?;
    Ok(FrequencyReport {
        mean_in,
        mean_out,
        ratio: mean_out / mean_in,
        z: chi.z(),
        delta_energy_ratio: (mean_out - mean_in) / mean_in,
    })
}

/// Two equal-width Gaussians with a common linear phase, parametrized
/// dimensionlessly: centers at ω₀ and ω₀ + separation (in units of σ), with
/// σφ the dimensionless chirp strength.
#[derive(Clone, Copy, Debug)]
pub struct TwoModeTemplate {
    pub omega0_over_sigma: f64,
    pub sigma_phi: f64,
    pub separation_over_sigma: f64,
    pub sigma: f64,
}

impl TwoModeTemplate {
    pub fn build(&self) -> Result<Vec<SpectralMode>, ModeError> {
        let s = self.sigma;
        let phi = self.sigma_phi / s;
        let c1 = self.omega0_over_sigma * s;
        let c2 = (self.omega0_over_sigma + self.separation_over_sigma) * s;
        Ok(vec![
            SpectralMode::gaussian_chirp(c1, s, phi, 0.0)?,
            SpectralMode::gaussian_chirp(c2, s, phi, 0.0)?,
        ])
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ParamAxis {
    Omega0OverSigma,
    SigmaPhi,
    SeparationOverSigma,
}

impl ParamAxis {
    fn apply(&self, t: &mut TwoModeTemplate, v: f64) {
        match self {
            ParamAxis::Omega0OverSigma => t.omega0_over_sigma = v,
            ParamAxis::SigmaPhi => t.sigma_phi = v,
            ParamAxis::SeparationOverSigma => t.separation_over_sigma = v,
        }
    }
}

/// Cartesian grid over two of the template's dimensionless axes.
#[derive(Clone, Debug)]
pub struct ParameterGrid {
    pub axis1: ParamAxis,
    pub values1: Vec<f64>,
    pub axis2: ParamAxis,
    pub values2: Vec<f64>,
}

/// One parameter-map sample at fixed χ.
#[derive(Clone, Copy, Debug)]
pub struct ParamRecord {
    pub p1: f64,
    pub p2: f64,
    pub chi: f64,
    pub residual: f64,
    /// residual < threshold; always false when the point did not converge.
    pub pass: bool,
    /// |A₁₁| = |⟨F₁'|F₁⟩| at this point.
    pub delta11_magnitude: f64,
    pub converged: bool,
}

fn param_point(
    template: TwoModeTemplate,
    p1: f64,
    p2: f64,
    grid: &ParameterGrid,
    chi: RedshiftFactor,
    threshold: f64,
    settings: &QuadratureSettings,
) -> Result<ParamRecord, ScanError> {
    let mut t = template;
    grid.axis1.apply(&mut t, p1);
    grid.axis2.apply(&mut t, p2);
    let failed = ParamRecord {
        p1,
        p2,
        chi: chi.chi(),
        residual: 0.0,
        pass: false,
        delta11_magnitude: 0.0,
        converged: false,
    };
    let modes = t.build()?;
    let basis = match mixer::gram_schmidt(modes, settings) {
        Ok(b) => b,
        Err(MixerError::LinearDependence { .. }) | Err(MixerError::IllConditioned { .. }) => {
            return Ok(failed)
        }
        Err(e) => return Err(e.into()),
    };
    let a = match basis.overlap_block(chi, settings) {
        Ok(a) => a,
        Err(MixerError::QuadratureFailure { .. }) | Err(MixerError::NonFiniteIntegrand { .. }) => {
            return Ok(failed)
        }
        Err(e) => return Err(e.into()),
    };
    let (report, _) = mixer::analyze_block(&a, chi, threshold)?;
    Ok(ParamRecord {
        p1,
        p2,
        chi: chi.chi(),
        residual: report.rank1_residual,
        pass: report.rank1_residual < threshold,
        delta11_magnitude: a[(0, 0)].norm(),
        converged: true,
    })
}

/// Residual map over a two-axis parameter grid at fixed χ. Guard violations
/// (ω₀/σ < 5 anywhere on the grid) are rejected up front; numerical failures
/// at individual points are recorded in the output.
pub fn scan_parameters(
    template: TwoModeTemplate,
    grid: &ParameterGrid,
    chi: RedshiftFactor,
    threshold: f64,
    workers: usize,
    settings: &QuadratureSettings,
) -> Result<Vec<ParamRecord>, ScanError> {
    if grid.values1.is_empty() || grid.values2.is_empty() {
        return Err(ScanError::Parameter(
            "parameter grid axes must be nonempty".into(),
        ));
    }
    if grid.axis1 == grid.axis2 {
        return Err(ScanError::Parameter(
            "parameter grid axes must differ".into(),
        ));
    }
    for &v1 in &grid.values1 {
        for &v2 in &grid.values2 {
            if !v1.is_finite() || !v2.is_finite() {
                return Err(ScanError::Parameter(
                    "parameter grid values must be finite".into(),
                ));
            }
            let mut t = template;
            grid.axis1.apply(&mut t, v1);
            grid.axis2.apply(&mut t, v2);
            if t.omega0_over_sigma < 5.0 {
                return Err(ScanError::Parameter(format!(
                    "grid point ({v1}, {v2}) puts omega0/sigma = {} below the support guard 5",
                    t.omega0_over_sigma
                )));
            }
            if t.omega0_over_sigma + t.separation_over_sigma < 5.0 {
                return Err(ScanError::Parameter(format!(
                    "grid point ({v1}, {v2}) puts the second center below the support guard 5"
                )));
            }
        }
    }

    let points: Vec<(f64, f64)> = grid
        .values1
        .iter()
        .flat_map(|&v1| grid.values2.iter().map(move |&v2| (v1, v2)))
        .collect();
    if workers <= 1 || points.len() == 1 {
        points
            .iter()
            .map(|&(p1, p2)| param_point(template, p1, p2, grid, chi, threshold, settings))
            .collect()
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build()
            .map_err(|e| ScanError::Parameter(format!("thread pool construction failed: {e}")))?;
        pool.install(|| {
            points
                .par_iter()
                .map(|&(p1, p2)| param_point(template, p1, p2, grid, chi, threshold, settings))
                .collect()
        })
    }
}

/// CSV for χ scans: header `chi,residual,deficit,min_eig,converged`, floats
/// as shortest round-trip decimals, LF endings.
pub fn scan_csv(records: &[ScanRecord]) -> String {
    let mut out = String::from("chi,residual,deficit,min_eig,converged\n");
    for r in records {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            r.chi, r.residual, r.deficit, r.min_eigenvalue, r.converged
        ));
    }
    out
}

/// CSV for parameter maps: header `p1,p2,chi,residual,pass`.
pub fn params_csv(records: &[ParamRecord]) -> String {
    let mut out = String::from("p1,p2,chi,residual,pass\n");
    for r in records {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            r.p1, r.p2, r.chi, r.residual, r.pass
        ));
    }
    out
}
