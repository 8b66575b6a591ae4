//! Mixing matrices for N modes of interest plus one environment mode.
//!
//! The redshift transform scatters each mode of an orthonormal basis partly
//! outside the basis span. The N×N block A of mutual overlaps is therefore
//! not unitary; G = I − AA† measures what leaked out. When G is rank one
//! (within tolerance) a single environment mode restores unitarity and the
//! completed (N+1)×(N+1) matrix is built here; when it is not, the failure
//! is returned as data, because the breakdown itself is the object of study.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use thiserror::Error;

use crate::overlap::{self, OverlapError};
use crate::quad::{self, QuadratureError, QuadratureSettings};
use crate::spectra::{ModeError, RedshiftFactor, SpectralMode};

type CMatrix = DMatrix<Complex64>;
type CVector = DVector<Complex64>;

/// Eigenvalues of G below this floor are quadrature and eigensolver noise,
/// not leaked amplitude; the rank-1 residual only counts eigenvalues above
/// it. Matches the tolerance to which G is only known to be positive
/// semidefinite in the first place.
pub const GRAM_EIGENVALUE_FLOOR: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum MixerError {
    #[error(transparent)]
    Mode(#[from] ModeError),
    #[error(transparent)]
    Overlap(#[from] OverlapError),
    #[error("integrand evaluated non-finite at omega = {omega}")]
    NonFiniteIntegrand { omega: f64 },
    #[error(
        "quadrature failed for overlap entry ({row},{col}) (error estimate {error_estimate:.3e})"
    )]
    QuadratureFailure {
        row: usize,
        col: usize,
        error_estimate: f64,
    },
    #[error("modes are numerically linearly dependent: orthogonalization residual {residual:.3e} at mode {index}")]
    LinearDependence { index: usize, residual: f64 },
    #[error("raw overlap matrix condition number {cond:.3e} exceeds the 1e12 limit")]
    IllConditioned { cond: f64 },
    #[error("environment completion failed at chi = {chi}: rank-1 residual {residual:.3e} exceeds tolerance")]
    CompletionFailed { chi: f64, residual: f64 },
    #[error("invalid argument: {0}")]
    Parameter(String),
}

impl From<QuadratureError> for MixerError {
    fn from(e: QuadratureError) -> Self {
        match e {
            QuadratureError::NonFiniteIntegrand { omega } => {
                MixerError::NonFiniteIntegrand { omega }
            }
        }
    }
}

/// An orthonormal basis of N modes, stored as coefficient rows over the raw
/// input modes. Orthonormal mode i is Σ_j C_ij·raw_j; keeping the raw modes
/// means the redshift transform stays exact (it is linear and closed on each
/// mode family), and overlap blocks reduce to sandwiches of raw-pair
/// integrals.
#[derive(Clone, Debug)]
pub struct BasisSet {
    raw: Vec<SpectralMode>,
    coeff: CMatrix,
    raw_gram: CMatrix,
}

/// Modified Gram-Schmidt in coefficient space with the raw overlap matrix as
/// metric, one reorthogonalization pass, first mode preserved up to
/// normalization.
pub fn gram_schmidt(
    raw: Vec<SpectralMode>,
    settings: &QuadratureSettings,
) -> Result<BasisSet, MixerError> {
    let n = raw.len();
    if n == 0 {
        return Err(MixerError::Parameter(
            "basis needs at least one mode".into(),
        ));
    }
    let mut t = CMatrix::zeros(n, n);
    for j in 0..n {
        for k in j..n {
            let r = quad::inner_product(&raw[j], &raw[k], settings)?;
            if !r.converged {
                return Err(MixerError::QuadratureFailure {
                    row: j,
                    col: k,
                    error_estimate: r.error_estimate,
                });
            }
            t[(j, k)] = if j == k {
                Complex64::new(r.value.re, 0.0)
            } else {
                r.value
            };
            t[(k, j)] = t[(j, k)].conj();
        }
    }

    let eig = t.clone().symmetric_eigen();
    let lambda_max = eig
        .eigenvalues
        .iter()
        .copied()
        .fold(f64::NEG_INFINITY, f64::max);
    let lambda_min = eig
        .eigenvalues
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min);
    let cond = if lambda_min > 0.0 {
        lambda_max / lambda_min
    } else {
        f64::INFINITY
    };
    if !(cond < 1e12) {
        return Err(MixerError::IllConditioned { cond });
    }

    let mut rows: Vec<CVector> = Vec::with_capacity(n);
    for i in 0..n {
        let mut w = CVector::zeros(n);
        w[i] = Complex64::new(1.0, 0.0);
        let orig = t[(i, i)].re.max(0.0).sqrt();
        for _pass in 0..2 {
            for q in &rows {
                let proj = metric_dot(q, &t, &w);
                w -= q * proj;
            }
        }
        let norm_sq = metric_dot(&w, &t, &w).re.max(0.0);
        let norm = norm_sq.sqrt();
        if norm < 1e-10 * orig {
            return Err(MixerError::LinearDependence {
                index: i,
                residual: norm,
            });
        }
        w /= Complex64::new(norm, 0.0);
        rows.push(w);
    }
    let coeff = CMatrix::from_fn(n, n, |i, j| rows[i][j]);
    Ok(BasisSet {
        raw,
        coeff,
        raw_gram: t,
    })
}

/// ⟨u, v⟩ under the metric T: u†Tv.
fn metric_dot(u: &CVector, t: &CMatrix, v: &CVector) -> Complex64 {
    let tv = t * v;
    u.dotc(&tv)
}

impl BasisSet {
    pub fn dimension(&self) -> usize {
        self.raw.len()
    }

    pub fn raw_modes(&self) -> &[SpectralMode] {
        &self.raw
    }

    pub fn coefficients(&self) -> &CMatrix {
        &self.coeff
    }

    pub fn raw_gram(&self) -> &CMatrix {
        &self.raw_gram
    }

    /// Orthonormal mode i evaluated at ω.
    pub fn value(&self, i: usize, omega: f64) -> Complex64 {
        let mut acc = Complex64::default();
        for (j, m) in self.raw.iter().enumerate() {
            acc += self.coeff[(i, j)] * m.value(omega);
        }
        acc
    }

    /// Pairwise overlaps of the orthonormal modes by direct quadrature of the
    /// combination functions; identity within 1e−8 by construction.
    pub fn orthonormal_gram(&self, settings: &QuadratureSettings) -> Result<CMatrix, MixerError> {
        let n = self.dimension();
        let mode_refs: Vec<&SpectralMode> = self.raw.iter().collect();
        let mut g = CMatrix::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                let r = quad::integrate_over_modes(
                    |w| self.value(i, w).conj() * self.value(j, w),
                    &mode_refs,
                    settings,
                )?;
                if !r.converged {
                    return Err(MixerError::QuadratureFailure {
                        row: i,
                        col: j,
                        error_estimate: r.error_estimate,
                    });
                }
                g[(i, j)] = r.value;
            }
        }
        Ok(g)
    }

    /// A_nm = ⟨F_n'|F_m⟩ over the orthonormal basis, with F' the redshifted
    /// mode. Computed as conj(C)·T'·Cᵀ from the raw-pair integrals
    /// T'_jk = ⟨raw_j'|raw_k⟩.
    pub fn overlap_block(
        &self,
        chi: RedshiftFactor,
        settings: &QuadratureSettings,
    ) -> Result<CMatrix, MixerError> {
        let n = self.dimension();
        let mut tp = CMatrix::zeros(n, n);
        for j in 0..n {
            let shifted = self.raw[j].redshift(chi);
            for k in 0..n {
                let r = quad::inner_product(&shifted, &self.raw[k], settings)?;
                if !r.converged {
                    return Err(MixerError::QuadratureFailure {
                        row: j,
                        col: k,
                        error_estimate: r.error_estimate,
                    });
                }
                tp[(j, k)] = r.value;
            }
        }
        let conj_c = self.coeff.map(|z| z.conj());
        Ok(conj_c * tp * self.coeff.transpose())
    }
}

/// G = I − AA† and its spectral summary. The raw eigenvalues are reported
/// untouched; the rank-1 residual applies the noise floor first.
#[derive(Clone, Debug)]
pub struct GramDeficit {
    pub matrix: CMatrix,
    /// Descending, as produced by the eigensolver, noise included.
    pub eigenvalues: Vec<f64>,
    /// Σ_{i≥2}λ_i / Σ_i λ_i over eigenvalues above the noise floor; 0 when at
    /// most one eigenvalue survives. In [0,1]: the fraction of leaked
    /// amplitude a single environment mode cannot absorb.
    pub rank1_residual: f64,
    pub min_eigenvalue: f64,
    /// Set when the residual is within 1e−12 of the decision tolerance, where
    /// accept/reject is numerically arbitrary.
    pub rank_ambiguous: bool,
}

fn rank1_residual(eigenvalues_desc: &[f64]) -> f64 {
    let survivors: Vec<f64> = eigenvalues_desc
        .iter()
        .copied()
        .filter(|l| *l >= GRAM_EIGENVALUE_FLOOR)
        .collect();
    if survivors.len() <= 1 {
        return 0.0;
    }
    let total: f64 = survivors.iter().sum();
    let tail: f64 = survivors[1..].iter().sum();
    tail / total.max(1e-300)
}

/// The full (N+1)×(N+1) mixing matrix including the environment row and
/// column. `completed` certifies unitarity to 1e−8; a matrix produced past
/// the rank-1 tolerance keeps its honest deficit.
#[derive(Clone, Debug)]
pub struct MixerMatrix {
    pub chi: RedshiftFactor,
    pub dimension: usize,
    pub entries: CMatrix,
    /// ‖UU†−I‖_F of the entries.
    pub deficit: f64,
    /// rank-1 residual of the Gram deficit the completion started from.
    pub completion_residual: f64,
    pub completed: bool,
}

/// Outcome of the single-environment completion: the unitary extension, or
/// the structured description of why one environment mode is not enough.
#[derive(Clone, Debug)]
pub enum Completion {
    Completed(MixerMatrix),
    Failed(GramDeficit),
}

/// Diagnose G = I − AA† and build the forced completion regardless of the
/// verdict, so scans past the validity boundary still have a matrix (and its
/// honest deficit) to report.
pub fn analyze_block(
    a: &CMatrix,
    chi: RedshiftFactor,
    tolerance: f64,
) -> Result<(GramDeficit, MixerMatrix), MixerError> {
    let n = a.nrows();
    if n == 0 || a.ncols() != n {
        return Err(MixerError::Parameter(format!(
            "overlap block must be square and nonempty, got {}x{}",
            a.nrows(),
            a.ncols()
        )));
    }
    if a.iter().any(|z| !(z.re.is_finite() && z.im.is_finite())) {
        return Err(MixerError::Parameter(
            "overlap block has non-finite entries".into(),
        ));
    }
    for i in 0..n {
        let row_norm_sq: f64 = (0..n).map(|j| a[(i, j)].norm_sqr()).sum();
        if row_norm_sq > 1.0 + 1e-9 {
            return Err(MixerError::Parameter(format!(
                "row {i} of the overlap block has norm {} > 1; modes were not orthonormal",
                row_norm_sq.sqrt()
            )));
        }
    }

    let mut g = CMatrix::identity(n, n) - a * a.adjoint();
    // Analytically Hermitian; symmetrizing removes last-bit asymmetry before
    // the eigensolver.
    g = (g.clone() + g.adjoint()) * Complex64::new(0.5, 0.0);
    let eig = g.clone().symmetric_eigen();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&x, &y| eig.eigenvalues[y].partial_cmp(&eig.eigenvalues[x]).unwrap());
    let eigenvalues: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let r = rank1_residual(&eigenvalues);
    let deficit_report = GramDeficit {
        matrix: g,
        min_eigenvalue: eigenvalues[n - 1],
        rank_ambiguous: (r - tolerance).abs() <= 1e-12,
        rank1_residual: r,
        eigenvalues,
    };

    // Environment column from the leading eigenpair: G ≈ bb† with
    // b = √λ₁·v₁, the largest component of v₁ rotated real positive.
    let lambda1 = deficit_report.eigenvalues[0].max(0.0);
    let mut b: CVector = eig.eigenvectors.column(order[0]).into_owned();
    let mut lead = 0;
    for i in 0..n {
        if b[i].norm() > b[lead].norm() {
            lead = i;
        }
    }
    if b[lead].norm() > 0.0 {
        let phase = b[lead] / Complex64::new(b[lead].norm(), 0.0);
        b /= phase;
    }
    b *= Complex64::new(lambda1.sqrt(), 0.0);

    let mut u = CMatrix::zeros(n + 1, n + 1);
    for i in 0..n {
        for j in 0..n {
            u[(i, j)] = a[(i, j)];
        }
        u[(i, n)] = b[i];
    }
    let bottom = orthogonal_completion(&u, n)?;
    for j in 0..=n {
        u[(n, j)] = bottom[j];
    }

    let deficit = unitarity_deficit(&u);
    let matrix = MixerMatrix {
        chi,
        dimension: n + 1,
        entries: u,
        deficit,
        completion_residual: r,
        completed: deficit <= 1e-8,
    };
    Ok((deficit_report, matrix))
}

/// Unit vector orthogonal (in the row inner product) to the first n rows of
/// u, with its last component rotated real nonnegative. Seeds are tried from
/// the environment axis downward so the generic case lands on the canonical
/// e_N completion.
fn orthogonal_completion(u: &CMatrix, n: usize) -> Result<CVector, MixerError> {
    let dim = n + 1;
    let mut q: Vec<CVector> = Vec::with_capacity(n);
    for i in 0..n {
        let mut w: CVector = u.row(i).transpose().map(|z| z.conj());
        for _ in 0..2 {
            for e in &q {
                let p = e.dotc(&w);
                w -= e * p;
            }
        }
        let nn = w.norm();
        if nn >= 1e-8 {
            w /= Complex64::new(nn, 0.0);
            q.push(w);
        }
    }
    let mut best: Option<(f64, CVector)> = None;
    for seed in (0..dim).rev() {
        let mut w = CVector::zeros(dim);
        w[seed] = Complex64::new(1.0, 0.0);
        for _ in 0..2 {
            for e in &q {
                let p = e.dotc(&w);
                w -= e * p;
            }
        }
        let nn = w.norm();
        if nn >= 0.5 {
            best = Some((nn, w));
            break;
        }
        if best.as_ref().map_or(true, |(b, _)| nn > *b) {
            best = Some((nn, w));
        }
    }
    let (nn, mut w) = best.expect("at least one seed is examined");
    if nn < 1e-6 {
        return Err(MixerError::Parameter(
            "orthogonal completion degenerated; rows already span the full space".into(),
        ));
    }
    w /= Complex64::new(w.norm(), 0.0);
    // Row orthogonality is Σ_k u_ik·conj(w_k) = 0; the projections above used
    // conjugated rows to express exactly that.
    let w: CVector = w.map(|z| z.conj());
    let last = w[dim - 1];
    if last.norm() > 1e-12 {
        let phase = last / Complex64::new(last.norm(), 0.0);
        Ok(w / phase)
    } else {
        Ok(w)
    }
}

/// The single-environment completion: unitary extension when the Gram
/// deficit is rank one within `tolerance`, otherwise the deficit itself as a
/// structured failure.
pub fn complete_with_environment(
    a: &CMatrix,
    chi: RedshiftFactor,
    tolerance: f64,
) -> Result<Completion, MixerError> {
    let (deficit, matrix) = analyze_block(a, chi, tolerance)?;
    if deficit.rank1_residual > tolerance {
        Ok(Completion::Failed(deficit))
    } else {
        Ok(Completion::Completed(matrix))
    }
}

/// Closed-form 2×2 mixer for a single mode: with Δ = Δ(χ), s = √(1−|Δ|²),
/// ψ = arg Δ,
///
///   U = [ Δ        s   ]
///       [ −s·e^{iψ} |Δ| ]
///
/// which is exactly unitary for every |Δ| ≤ 1. This is what the generic
/// completion produces for N = 1; it is built directly here.
pub fn single_mode_matrix(
    f: &SpectralMode,
    chi: RedshiftFactor,
    settings: &QuadratureSettings,
) -> Result<MixerMatrix, MixerError> {
    let ov = overlap::overlap_exact(f, chi, settings)?;
    let delta = ov.delta;
    let mag = ov.magnitude.min(1.0);
    let s = (1.0 - mag * mag).max(0.0).sqrt();
    let psi = ov.phase;
    let mut u = CMatrix::zeros(2, 2);
    u[(0, 0)] = delta;
    u[(0, 1)] = Complex64::new(s, 0.0);
    u[(1, 0)] = -Complex64::from_polar(s, psi);
    u[(1, 1)] = Complex64::new(mag, 0.0);
    let deficit = unitarity_deficit(&u);
    Ok(MixerMatrix {
        chi,
        dimension: 2,
        entries: u,
        deficit,
        completion_residual: 0.0,
        completed: deficit <= 1e-8,
    })
}

/// First-order generator M of the mixing family, U(1+ε) ≈ I + εM.
#[derive(Clone, Debug)]
pub struct GeneratorFit {
    pub matrix: CMatrix,
    /// ‖M+M†‖_F/‖M‖_F; a unitary family has an anti-Hermitian generator.
    pub anti_hermiticity_defect: f64,
    pub epsilons: Vec<f64>,
}

/// Extracts M by fitting (U(1+ε)−I)/ε = M + O(ε) per entry over the ε grid
/// and keeping the intercept, which cancels the O(ε) curvature that a plain
/// slope or average would absorb. Needs at least two distinct nonzero ε and a
/// successful completion at each.
pub fn perturbative_generator(
    basis: &BasisSet,
    epsilons: &[f64],
    completion_tolerance: f64,
    settings: &QuadratureSettings,
) -> Result<GeneratorFit, MixerError> {
    if epsilons.len() < 2 {
        return Err(MixerError::Parameter(
            "generator fit needs at least two epsilon values".into(),
        ));
    }
    if epsilons.iter().any(|e| !e.is_finite() || *e == 0.0) {
        return Err(MixerError::Parameter(
            "epsilon values must be finite and nonzero".into(),
        ));
    }
    let spread = epsilons
        .iter()
        .any(|e| (e - epsilons[0]).abs() > f64::EPSILON * epsilons[0].abs());
    if !spread {
        return Err(MixerError::Parameter(
            "epsilon values must not all coincide".into(),
        ));
    }

    let dim = basis.dimension() + 1;
    let mut samples: Vec<(f64, CMatrix)> = Vec::with_capacity(epsilons.len());
    for &e in epsilons {
        let chi = RedshiftFactor::new(1.0 + e)?;
        let a = basis.overlap_block(chi, settings)?;
        match complete_with_environment(&a, chi, completion_tolerance)? {
            Completion::Completed(m) => samples.push((e, m.entries)),
            Completion::Failed(d) => {
                return Err(MixerError::CompletionFailed {
                    chi: 1.0 + e,
                    residual: d.rank1_residual,
                })
            }
        }
    }

    let k = samples.len() as f64;
    let eps_mean: f64 = samples.iter().map(|(e, _)| e).sum::<f64>() / k;
    let sxx: f64 = samples
        .iter()
        .map(|(e, _)| (e - eps_mean) * (e - eps_mean))
        .sum();
    let mut m = CMatrix::zeros(dim, dim);
    for i in 0..dim {
        for j in 0..dim {
            let delta_ij = if i == j {
                Complex64::new(1.0, 0.0)
            } else {
                Complex64::default()
            };
            let ys: Vec<Complex64> = samples
                .iter()
                .map(|(e, u)| (u[(i, j)] - delta_ij) / Complex64::new(*e, 0.0))
                .collect();
            let y_mean = ys.iter().sum::<Complex64>() / Complex64::new(k, 0.0);
            let sxy: Complex64 = samples
                .iter()
                .zip(ys.iter())
                .map(|((e, _), y)| (y - y_mean) * (e - eps_mean))
                .sum();
            let slope = sxy / Complex64::new(sxx, 0.0);
            m[(i, j)] = y_mean - slope * eps_mean;
        }
    }

    let norm = m.norm();
    let defect = if norm > 1e-300 {
        (m.clone() + m.adjoint()).norm() / norm
    } else {
        0.0
    };
    Ok(GeneratorFit {
        matrix: m,
        anti_hermiticity_defect: defect,
        epsilons: epsilons.to_vec(),
    })
}

/// ‖UU†−I‖_Frobenius of a square matrix.
pub fn unitarity_deficit(u: &CMatrix) -> f64 {
    assert_eq!(
        u.nrows(),
        u.ncols(),
        "unitarity deficit needs a square matrix"
    );
    let n = u.nrows();
    (u * u.adjoint() - CMatrix::identity(n, n)).norm()
}
