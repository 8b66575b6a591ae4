//! Output envelope and payload serialization.
//!
//! Every float crosses the boundary as a decimal string with 17 significant
//! digits, which round-trips f64 exactly; a generic JSON reader gets the
//! same numbers this process computed. Struct fields serialize in
//! declaration order, so output bytes are deterministic for fixed inputs
//! (only the timestamp varies between runs).

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Serialize, Serializer};

use crate::mixer::{GramDeficit, MixerMatrix};
use crate::overlap::{OverlapResult, PhaseOptimization, SpectralFunctionals};
use crate::spectra::RedshiftFactor;
use crate::validity::{BoundaryResult, FrequencyReport, ParamRecord, ScanRecord};

/// An f64 serialized as a 17-significant-digit decimal string.
#[derive(Clone, Copy, Debug)]
pub struct F17(pub f64);

impl Serialize for F17 {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&format!("{:.16e}", self.0))
    }
}

/// A complex number as {re, im} string fields.
#[derive(Clone, Copy, Debug)]
pub struct C17(pub Complex64);

impl Serialize for C17 {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        #[derive(Serialize)]
        struct Parts {
            re: F17,
            im: F17,
        }
        Parts {
            re: F17(self.0.re),
            im: F17(self.0.im),
        }
        .serialize(s)
    }
}

fn matrix_rows(m: &DMatrix<Complex64>) -> Vec<Vec<C17>> {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| C17(m[(i, j)])).collect())
        .collect()
}

#[derive(Serialize)]
pub struct OutputDocument<P: Serialize> {
    pub tool_version: &'static str,
    pub config_digest: String,
    pub command: &'static str,
    pub timestamp: String,
    pub payload: P,
}

pub fn document<P: Serialize>(
    command: &'static str,
    config_digest: &str,
    payload: P,
) -> OutputDocument<P> {
    OutputDocument {
        tool_version: env!("CARGO_PKG_VERSION"),
        config_digest: config_digest.to_string(),
        command,
        timestamp: chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Micros, true),
        payload,
    }
}

pub fn to_json<P: Serialize>(doc: &OutputDocument<P>) -> String {
    let mut s = serde_json::to_string_pretty(doc).expect("payloads contain no fallible types");
    s.push('\n');
    s
}

#[derive(Serialize)]
pub struct OverlapPayload {
    pub chi: F17,
    pub chi_squared: F17,
    pub delta: C17,
    pub magnitude: F17,
    pub phase: F17,
    pub error_estimate: F17,
}

impl OverlapPayload {
    pub fn new(r: &OverlapResult) -> Self {
        OverlapPayload {
            chi: F17(r.chi.chi()),
            chi_squared: F17(r.chi.chi_squared()),
            delta: C17(r.delta),
            magnitude: F17(r.magnitude),
            phase: F17(r.phase),
            error_estimate: F17(r.error_estimate),
        }
    }
}

#[derive(Serialize)]
pub struct FunctionalsPayload {
    pub k: C17,
    pub kappa: F17,
    pub mu_squared: F17,
    pub kappa_opt: F17,
    pub omega_bar: F17,
    pub variance_term: F17,
    pub gradient_term: F17,
    /// null when the mode has an interior null making the phase undefined.
    pub kappa_polar: Option<F17>,
    pub mu_squared_polar: Option<F17>,
}

impl FunctionalsPayload {
    pub fn new(f: &SpectralFunctionals) -> Self {
        FunctionalsPayload {
            k: C17(f.k),
            kappa: F17(f.kappa),
            mu_squared: F17(f.mu_squared),
            kappa_opt: F17(f.kappa_opt),
            omega_bar: F17(f.omega_bar),
            variance_term: F17(f.variance_term),
            gradient_term: F17(f.gradient_term),
            kappa_polar: f.kappa_polar.map(F17),
            mu_squared_polar: f.mu_squared_polar.map(F17),
        }
    }
}

#[derive(Serialize)]
pub struct MatrixPayload {
    pub chi: F17,
    pub chi_squared: F17,
    pub dimension: usize,
    pub tolerance: F17,
    /// Whether one environment mode suffices at this tolerance.
    pub completed: bool,
    /// ‖UU†−I‖_F of the entries below (honest even when completed is false).
    pub deficit: F17,
    pub rank1_residual: F17,
    pub eigenvalues: Vec<F17>,
    pub min_eigenvalue: F17,
    pub rank_ambiguous: bool,
    pub entries: Vec<Vec<C17>>,
}

impl MatrixPayload {
    pub fn new(
        chi: RedshiftFactor,
        tolerance: f64,
        report: &GramDeficit,
        matrix: &MixerMatrix,
        completed: bool,
    ) -> Self {
        MatrixPayload {
            chi: F17(chi.chi()),
            chi_squared: F17(chi.chi_squared()),
            dimension: matrix.dimension,
            tolerance: F17(tolerance),
            completed,
            deficit: F17(matrix.deficit),
            rank1_residual: F17(report.rank1_residual),
            eigenvalues: report.eigenvalues.iter().map(|&l| F17(l)).collect(),
            min_eigenvalue: F17(report.min_eigenvalue),
            rank_ambiguous: report.rank_ambiguous,
            entries: matrix_rows(&matrix.entries),
        }
    }
}

#[derive(Serialize)]
pub struct ScanRecordPayload {
    pub chi: F17,
    pub residual: F17,
    pub deficit: F17,
    pub min_eigenvalue: F17,
    pub pair_magnitudes: Vec<F17>,
    pub converged: bool,
}

#[derive(Serialize)]
pub struct ScanPayload {
    pub tolerance: F17,
    pub records: Vec<ScanRecordPayload>,
}

impl ScanPayload {
    pub fn new(tolerance: f64, records: &[ScanRecord]) -> Self {
        ScanPayload {
            tolerance: F17(tolerance),
            records: records
                .iter()
                .map(|r| ScanRecordPayload {
                    chi: F17(r.chi),
                    residual: F17(r.residual),
                    deficit: F17(r.deficit),
                    min_eigenvalue: F17(r.min_eigenvalue),
                    pair_magnitudes: r.pair_magnitudes.iter().map(|&m| F17(m)).collect(),
                    converged: r.converged,
                })
                .collect(),
        }
    }
}

#[derive(Serialize)]
pub struct BoundaryPayload {
    pub chi_star: F17,
    pub bracket_lo: F17,
    pub bracket_hi: F17,
    pub iterations: usize,
    pub threshold: F17,
    pub monotone_in_bracket: bool,
}

impl BoundaryPayload {
    pub fn new(b: &BoundaryResult) -> Self {
        BoundaryPayload {
            chi_star: F17(b.chi_star),
            bracket_lo: F17(b.bracket.0),
            bracket_hi: F17(b.bracket.1),
            iterations: b.iterations,
            threshold: F17(b.threshold),
            monotone_in_bracket: b.monotone_in_bracket,
        }
    }
}

#[derive(Serialize)]
pub struct FreqPayload {
    pub chi: F17,
    pub chi_squared: F17,
    pub mean_in: F17,
    pub mean_out: F17,
    pub ratio: F17,
    pub z: F17,
    pub delta_energy_ratio: F17,
}

impl FreqPayload {
    pub fn new(chi: RedshiftFactor, r: &FrequencyReport) -> Self {
        FreqPayload {
            chi: F17(chi.chi()),
            chi_squared: F17(chi.chi_squared()),
            mean_in: F17(r.mean_in),
            mean_out: F17(r.mean_out),
            ratio: F17(r.ratio),
            z: F17(r.z),
            delta_energy_ratio: F17(r.delta_energy_ratio),
        }
    }
}

#[derive(Serialize)]
pub struct ParamRecordPayload {
    pub p1: F17,
    pub p2: F17,
    pub chi: F17,
    pub residual: F17,
    pub pass: bool,
    pub delta11_magnitude: F17,
    pub converged: bool,
}

#[derive(Serialize)]
pub struct ParamsPayload {
    pub chi: F17,
    pub threshold: F17,
    pub records: Vec<ParamRecordPayload>,
}

impl ParamsPayload {
    pub fn new(chi: RedshiftFactor, threshold: f64, records: &[ParamRecord]) -> Self {
        ParamsPayload {
            chi: F17(chi.chi()),
            threshold: F17(threshold),
            records: records
                .iter()
                .map(|r| ParamRecordPayload {
                    p1: F17(r.p1),
                    p2: F17(r.p2),
                    chi: F17(r.chi),
                    residual: F17(r.residual),
                    pass: r.pass,
                    delta11_magnitude: F17(r.delta11_magnitude),
                    converged: r.converged,
                })
                .collect(),
        }
    }
}

#[derive(Serialize)]
pub struct OptimizePayload {
    pub chi: F17,
    pub chi_squared: F17,
    pub c_star: F17,
    pub analytic_candidate: F17,
    pub achieved: OverlapPayload,
    pub baseline: OverlapPayload,
}

impl OptimizePayload {
    pub fn new(chi: RedshiftFactor, p: &PhaseOptimization) -> Self {
        OptimizePayload {
            chi: F17(chi.chi()),
            chi_squared: F17(chi.chi_squared()),
            c_star: F17(p.c_star),
            analytic_candidate: F17(p.analytic_candidate),
            achieved: OverlapPayload::new(&p.achieved),
            baseline: OverlapPayload::new(&p.baseline),
        }
    }
}
