//! Spectral mode functions F(ω): construction, normalization, the redshift
//! transform F'(ω) = χ⁻¹F(χ⁻²ω), and the polar decomposition F = ρ·e^{iθ}
//! used by the phase-sensitive functionals.
//!
//! Modes whose parameters satisfy the positive-support guard (center ≥ 5
//! widths per Gaussian component) are treated as their full analytic
//! extension; the mass below ω = 0 is bounded by 3e−7 and keeping it makes
//! closed-form identities exact. Constructing a mode with the override flag
//! instead truncates it hard at ω = 0 and switches every integral involving
//! it to explicit half-line handling.

use num_complex::Complex64;
use std::f64::consts::TAU;
use thiserror::Error;

use crate::quad::{self, QuadratureSettings};

/// Padding, in units of the local width, applied around every Gaussian
/// component when building effective supports.
pub const SUPPORT_WIDTHS: f64 = 12.0;

/// Minimum center-to-width ratio accepted without the override flag.
pub const SUPPORT_GUARD_RATIO: f64 = 5.0;

#[derive(Debug, Error)]
pub enum ModeError {
    #[error("mode has numerically zero norm")]
    ZeroNorm,
    #[error("non-finite value encountered in {0}")]
    NonFinite(&'static str),
    #[error("negative frequency {omega} outside the mode domain")]
    NegativeFrequency { omega: f64 },
    #[error(
        "center {center} is below {SUPPORT_GUARD_RATIO} widths (width {width}); \
         pass the positive-support override to accept hard truncation at omega = 0"
    )]
    SupportGuard { center: f64, width: f64 },
    #[error("invalid mode parameter: {0}")]
    BadParameter(String),
    #[error("invalid sample grid: {0}")]
    Grid(String),
    #[error("phase undefined near x = {x}: |F| below 1e-12 of peak inside the window")]
    PhaseUndefined { x: f64 },
    #[error("quadrature failed in {context} (error estimate {error_estimate:.3e})")]
    QuadratureFailure {
        context: &'static str,
        error_estimate: f64,
    },
}

/// Redshift factor χ between two stationary observers; the measured frequency
/// ratio is χ² = 1 + z, with χ > 1 blueshift in the sender-to-receiver
/// convention used throughout.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RedshiftFactor {
    chi: f64,
}

impl RedshiftFactor {
    pub fn new(chi: f64) -> Result<Self, ModeError> {
        if chi.is_finite() && chi > 0.0 {
            Ok(RedshiftFactor { chi })
        } else {
            Err(ModeError::BadParameter(format!(
                "redshift factor chi must be finite and positive, got {chi}"
            )))
        }
    }

    pub fn from_chi_squared(chi_squared: f64) -> Result<Self, ModeError> {
        if chi_squared.is_finite() && chi_squared > 0.0 {
            Ok(RedshiftFactor {
                chi: chi_squared.sqrt(),
            })
        } else {
            Err(ModeError::BadParameter(format!(
                "chi squared must be finite and positive, got {chi_squared}"
            )))
        }
    }

    pub fn chi(&self) -> f64 {
        self.chi
    }

    pub fn chi_squared(&self) -> f64 {
        self.chi * self.chi
    }

    /// z = χ² − 1, always > −1.
    pub fn z(&self) -> f64 {
        self.chi * self.chi - 1.0
    }

    pub fn inverse(&self) -> RedshiftFactor {
        RedshiftFactor {
            chi: 1.0 / self.chi,
        }
    }
}

#[derive(Clone, Copy, Debug)]
pub struct Tooth {
    pub center: f64,
    pub width: f64,
    pub weight: Complex64,
}

#[derive(Clone, Debug)]
pub struct GaussianChirp {
    center: f64,
    width: f64,
    phi: f64,
    beta: f64,
    scale: f64,
    truncate: bool,
    mean: f64,
    sigma_eff: f64,
}

impl GaussianChirp {
    pub fn center(&self) -> f64 {
        self.center
    }
    pub fn width(&self) -> f64 {
        self.width
    }
    pub fn phi(&self) -> f64 {
        self.phi
    }
    pub fn beta(&self) -> f64 {
        self.beta
    }

    fn raw_value(&self, omega: f64) -> Complex64 {
        if self.truncate && omega < 0.0 {
            return Complex64::default();
        }
        let d = omega - self.center;
        let mag = self.scale
            * (TAU * self.width * self.width).powf(-0.25)
            * (-d * d / (4.0 * self.width * self.width)).exp();
        Complex64::from_polar(mag, -(self.phi * omega + self.beta * omega * omega))
    }

    fn raw_derivative(&self, omega: f64) -> Complex64 {
        if self.truncate && omega < 0.0 {
            return Complex64::default();
        }
        let d = omega - self.center;
        let log_deriv = Complex64::new(
            -d / (2.0 * self.width * self.width),
            -(self.phi + 2.0 * self.beta * omega),
        );
        self.raw_value(omega) * log_deriv
    }
}

#[derive(Clone, Debug)]
pub struct CombMode {
    teeth: Vec<Tooth>,
    scale: f64,
    truncate: bool,
    mean: f64,
    sigma_eff: f64,
}

impl CombMode {
    pub fn teeth(&self) -> &[Tooth] {
        &self.teeth
    }

    fn raw_value(&self, omega: f64) -> Complex64 {
        if self.truncate && omega < 0.0 {
            return Complex64::default();
        }
        let mut acc = Complex64::default();
        for t in &self.teeth {
            let d = omega - t.center;
            let g =
                (TAU * t.width * t.width).powf(-0.25) * (-d * d / (4.0 * t.width * t.width)).exp();
            acc += t.weight * g;
        }
        acc * self.scale
    }

    fn raw_derivative(&self, omega: f64) -> Complex64 {
        if self.truncate && omega < 0.0 {
            return Complex64::default();
        }
        let mut acc = Complex64::default();
        for t in &self.teeth {
            let d = omega - t.center;
            let g =
                (TAU * t.width * t.width).powf(-0.25) * (-d * d / (4.0 * t.width * t.width)).exp();
            acc += t.weight * g * (-d / (2.0 * t.width * t.width));
        }
        acc * self.scale
    }
}

#[derive(Clone, Debug)]
pub struct SampledMode {
    grid_lo: f64,
    grid_hi: f64,
    magnitude: CubicSpline,
    phase: CubicSpline,
    scale: f64,
    mean: f64,
    sigma_eff: f64,
    peak: f64,
}

impl SampledMode {
    pub fn grid(&self) -> &[f64] {
        self.magnitude.knots()
    }

    fn raw_value(&self, omega: f64) -> Complex64 {
        if omega < self.grid_lo || omega > self.grid_hi {
            return Complex64::default();
        }
        let mag = self.magnitude.eval(omega).max(0.0) * self.scale;
        Complex64::from_polar(mag, self.phase.eval(omega))
    }
}

/// A normalized complex spectral amplitude from one of three families:
/// a Gaussian with linear and quadratic phase, a comb of weighted Gaussian
/// teeth, or tabulated samples interpolated cubically in magnitude and
/// unwrapped phase.
#[derive(Clone, Debug)]
pub enum SpectralMode {
    GaussianChirp(GaussianChirp),
    Comb(CombMode),
    Sampled(SampledMode),
}

fn construct_settings() -> QuadratureSettings {
    QuadratureSettings::default()
}

impl SpectralMode {
    pub fn gaussian(center: f64, width: f64) -> Result<Self, ModeError> {
        Self::gaussian_chirp(center, width, 0.0, 0.0)
    }

    pub fn gaussian_chirp(center: f64, width: f64, phi: f64, beta: f64) -> Result<Self, ModeError> {
        Self::check_gaussian_params(center, width, phi, beta)?;
        if center < SUPPORT_GUARD_RATIO * width {
            return Err(ModeError::SupportGuard { center, width });
        }
        // The analytic prefactor normalizes the full line exactly; the guard
        // bounds the mass below omega = 0 by 3e-7.
        Ok(SpectralMode::GaussianChirp(GaussianChirp {
            center,
            width,
            phi,
            beta,
            scale: 1.0,
            truncate: false,
            mean: center,
            sigma_eff: width,
        }))
    }

    /// Accepts any center, truncates the mode hard at ω = 0, and normalizes
    /// over the half-line by quadrature.
    pub fn gaussian_chirp_with_override(
        center: f64,
        width: f64,
        phi: f64,
        beta: f64,
    ) -> Result<Self, ModeError> {
        Self::check_gaussian_params(center, width, phi, beta)?;
        let mut mode = SpectralMode::GaussianChirp(GaussianChirp {
            center,
            width,
            phi,
            beta,
            scale: 1.0,
            truncate: true,
            mean: center.max(width),
            sigma_eff: width,
        });
        mode.renormalize_and_cache_stats()?;
        Ok(mode)
    }

    fn check_gaussian_params(
        center: f64,
        width: f64,
        phi: f64,
        beta: f64,
    ) -> Result<(), ModeError> {
        if !(center.is_finite() && width.is_finite() && phi.is_finite() && beta.is_finite()) {
            return Err(ModeError::NonFinite("gaussian parameters"));
        }
        if width <= 0.0 {
            return Err(ModeError::BadParameter(format!(
                "width must be positive, got {width}"
            )));
        }
        Ok(())
    }

    pub fn comb(teeth: Vec<Tooth>) -> Result<Self, ModeError> {
        Self::check_teeth(&teeth)?;
        for t in &teeth {
            if t.center < SUPPORT_GUARD_RATIO * t.width {
                return Err(ModeError::SupportGuard {
                    center: t.center,
                    width: t.width,
                });
            }
        }
        Self::finish_comb(teeth, false)
    }

    pub fn comb_with_override(teeth: Vec<Tooth>) -> Result<Self, ModeError> {
        Self::check_teeth(&teeth)?;
        Self::finish_comb(teeth, true)
    }

    fn check_teeth(teeth: &[Tooth]) -> Result<(), ModeError> {
        if teeth.is_empty() {
            return Err(ModeError::BadParameter(
                "comb needs at least one tooth".into(),
            ));
        }
        for t in teeth {
            if !(t.center.is_finite()
                && t.width.is_finite()
                && t.weight.re.is_finite()
                && t.weight.im.is_finite())
            {
                return Err(ModeError::NonFinite("comb tooth"));
            }
            if t.width <= 0.0 {
                return Err(ModeError::BadParameter(format!(
                    "tooth width must be positive, got {}",
                    t.width
                )));
            }
        }
        if teeth.iter().all(|t| t.weight.norm() == 0.0) {
            return Err(ModeError::ZeroNorm);
        }
        Ok(())
    }

    fn finish_comb(teeth: Vec<Tooth>, truncate: bool) -> Result<Self, ModeError> {
        let mean_seed = teeth
            .iter()
            .map(|t| t.center.max(t.width))
            .fold(0.0, f64::max);
        let mut mode = SpectralMode::Comb(CombMode {
            teeth,
            scale: 1.0,
            truncate,
            mean: mean_seed,
            sigma_eff: 1.0,
        });
        mode.renormalize_and_cache_stats()?;
        Ok(mode)
    }

    pub fn sampled(grid: Vec<f64>, amplitudes: Vec<Complex64>) -> Result<Self, ModeError> {
        if grid.len() != amplitudes.len() {
            return Err(ModeError::Grid(format!(
                "grid has {} points but {} amplitudes were given",
                grid.len(),
                amplitudes.len()
            )));
        }
        if grid.len() < 8 {
            return Err(ModeError::Grid(format!(
                "need at least 8 sample points, got {}",
                grid.len()
            )));
        }
        if grid.iter().any(|x| !x.is_finite())
            || amplitudes
                .iter()
                .any(|a| !(a.re.is_finite() && a.im.is_finite()))
        {
            return Err(ModeError::NonFinite("sample data"));
        }
        if grid[0] < 0.0 {
            return Err(ModeError::NegativeFrequency { omega: grid[0] });
        }
        if grid.windows(2).any(|w| w[1] <= w[0]) {
            return Err(ModeError::Grid("grid must be strictly increasing".into()));
        }

        let mags: Vec<f64> = amplitudes.iter().map(|a| a.norm()).collect();
        let peak = mags.iter().copied().fold(0.0, f64::max);
        if peak <= 0.0 {
            return Err(ModeError::ZeroNorm);
        }
        let n = grid.len();
        if mags[0] > 1e-10 * peak || mags[n - 1] > 1e-10 * peak {
            return Err(ModeError::Grid(
                "edge amplitudes exceed 1e-10 of the peak; the grid must cover the \
                 whole effective support"
                    .into(),
            ));
        }

        // Phase at numerically dead points is carried from the nearest live
        // neighbour so the unwrap never chases noise.
        let live = 1e-14 * peak;
        let mut args = vec![0.0_f64; n];
        let mut carry = None;
        for i in 0..n {
            if mags[i] > live {
                carry = Some(amplitudes[i].arg());
            }
            if let Some(a) = carry {
                args[i] = a;
            }
        }
        let first_live = mags.iter().position(|&m| m > live).unwrap_or(0);
        let lead = args[first_live];
        for a in args.iter_mut().take(first_live) {
            *a = lead;
        }
        let theta = unwrap_phases(&args);

        let magnitude = CubicSpline::natural(grid.clone(), mags)?;
        let phase = CubicSpline::natural(grid, theta)?;
        let (grid_lo, grid_hi) = (
            magnitude.knots()[0],
            *magnitude.knots().last().expect("nonempty grid"),
        );
        let mut mode = SpectralMode::Sampled(SampledMode {
            grid_lo,
            grid_hi,
            magnitude,
            phase,
            scale: 1.0,
            mean: 0.5 * (grid_lo + grid_hi),
            sigma_eff: 0.25 * (grid_hi - grid_lo),
            peak,
        });
        mode.renormalize_and_cache_stats()?;
        Ok(mode)
    }

    /// Raw complex amplitude at any ω. For guard-compliant modes this is the
    /// full analytic extension (including the negligible tail below zero);
    /// override-constructed modes return 0 below ω = 0, and sampled modes
    /// return 0 outside their grid.
    pub fn value(&self, omega: f64) -> Complex64 {
        match self {
            SpectralMode::GaussianChirp(g) => g.raw_value(omega),
            SpectralMode::Comb(c) => c.raw_value(omega),
            SpectralMode::Sampled(s) => s.raw_value(omega),
        }
    }

    /// Amplitude on the physical domain ω ≥ 0.
    pub fn evaluate(&self, omega: f64) -> Result<Complex64, ModeError> {
        if omega < 0.0 {
            return Err(ModeError::NegativeFrequency { omega });
        }
        Ok(self.value(omega))
    }

    /// dF/dω: analytic for the Gaussian families; Richardson-extrapolated
    /// central differences with step h = σ·1e−5 (then h/2) for sampled modes.
    pub fn derivative(&self, omega: f64) -> Complex64 {
        match self {
            SpectralMode::GaussianChirp(g) => g.raw_derivative(omega),
            SpectralMode::Comb(c) => c.raw_derivative(omega),
            SpectralMode::Sampled(s) => {
                let h = s.sigma_eff * 1e-5;
                let d = |h: f64| (self.value(omega + h) - self.value(omega - h)) / (2.0 * h);
                let full = d(h);
                let half = d(0.5 * h);
                (4.0 * half - full) / 3.0
            }
        }
    }

    /// Rescales so that the norm over the mode's own domain is 1. Constructors
    /// already normalize; applying this again is an identity up to quadrature
    /// precision.
    pub fn normalize(mut self) -> Result<Self, ModeError> {
        self.renormalize_and_cache_stats()?;
        Ok(self)
    }

    fn renormalize_and_cache_stats(&mut self) -> Result<(), ModeError> {
        let settings = construct_settings();
        let norm_sq = self.self_integral(|_| 1.0, &settings, "normalization")?;
        if !norm_sq.is_finite() {
            return Err(ModeError::NonFinite("norm"));
        }
        if norm_sq < 1e-300 {
            return Err(ModeError::ZeroNorm);
        }
        let factor = 1.0 / norm_sq.sqrt();
        match self {
            SpectralMode::GaussianChirp(g) => g.scale *= factor,
            SpectralMode::Comb(c) => c.scale *= factor,
            SpectralMode::Sampled(s) => {
                s.scale *= factor;
                s.peak *= factor;
            }
        }

        let mean = self.self_integral(|w| w, &settings, "mean frequency")?;
        let var = self
            .self_integral(|w| (w - mean) * (w - mean), &settings, "variance")?
            .max(0.0);
        let sigma_eff = var.sqrt().max(f64::MIN_POSITIVE);
        match self {
            SpectralMode::GaussianChirp(g) => {
                g.mean = mean;
                g.sigma_eff = sigma_eff;
            }
            SpectralMode::Comb(c) => {
                c.mean = mean;
                c.sigma_eff = sigma_eff;
            }
            SpectralMode::Sampled(s) => {
                s.mean = mean;
                s.sigma_eff = sigma_eff;
            }
        }
        Ok(())
    }

    /// ∫ weight(ω)·|F(ω)|² dω over the mode's own window.
    fn self_integral(
        &self,
        weight: impl Fn(f64) -> f64,
        settings: &QuadratureSettings,
        context: &'static str,
    ) -> Result<f64, ModeError> {
        let r = quad::integrate_over_modes(
            |w| Complex64::new(weight(w) * self.value(w).norm_sqr(), 0.0),
            &[self],
            settings,
        )
        .map_err(|_| ModeError::NonFinite(context))?;
        if !r.converged {
            return Err(ModeError::QuadratureFailure {
                context,
                error_estimate: r.error_estimate,
            });
        }
        Ok(r.value.re)
    }

    /// F'(ω) = χ⁻¹ F(χ⁻²ω). Closed-form per family: a Gaussian maps to a
    /// Gaussian with center and width scaled by χ², φ by χ⁻², β by χ⁻⁴; combs
    /// transform per tooth with weights untouched; sampled grids rescale by χ²
    /// with amplitudes by χ⁻¹. The half-line norm is preserved exactly, and
    /// the center-to-width guard ratio is invariant, so the result needs no
    /// renormalization and cannot newly violate the support guard.
    pub fn redshift(&self, chi: RedshiftFactor) -> SpectralMode {
        let c2 = chi.chi_squared();
        let inv_chi = 1.0 / chi.chi();
        match self {
            SpectralMode::GaussianChirp(g) => SpectralMode::GaussianChirp(GaussianChirp {
                center: g.center * c2,
                width: g.width * c2,
                phi: g.phi / c2,
                beta: g.beta / (c2 * c2),
                scale: g.scale,
                truncate: g.truncate,
                mean: g.mean * c2,
                sigma_eff: g.sigma_eff * c2,
            }),
            SpectralMode::Comb(c) => SpectralMode::Comb(CombMode {
                teeth: c
                    .teeth
                    .iter()
                    .map(|t| Tooth {
                        center: t.center * c2,
                        width: t.width * c2,
                        weight: t.weight,
                    })
                    .collect(),
                scale: c.scale,
                truncate: c.truncate,
                mean: c.mean * c2,
                sigma_eff: c.sigma_eff * c2,
            }),
            SpectralMode::Sampled(s) => {
                let knots: Vec<f64> = s.magnitude.knots().iter().map(|x| x * c2).collect();
                let mags: Vec<f64> = s.magnitude.values().iter().map(|y| y * inv_chi).collect();
                let thetas = s.phase.values().to_vec();
                // Natural cubic splines are equivariant under affine grid maps,
                // so rebuilding on the scaled knots reproduces χ⁻¹F(χ⁻²ω)
                // exactly.
                SpectralMode::Sampled(SampledMode {
                    grid_lo: s.grid_lo * c2,
                    grid_hi: s.grid_hi * c2,
                    magnitude: CubicSpline::natural(knots.clone(), mags)
                        .expect("valid grid stays valid under scaling"),
                    phase: CubicSpline::natural(knots, thetas)
                        .expect("valid grid stays valid under scaling"),
                    scale: s.scale,
                    mean: s.mean * c2,
                    sigma_eff: s.sigma_eff * c2,
                    peak: s.peak * inv_chi,
                })
            }
        }
    }

    /// Mean frequency ∫ω|F|²dω with a relative error target of 1e−8.
    pub fn mean_frequency(&self, settings: &QuadratureSettings) -> Result<f64, ModeError> {
        let r = quad::integrate_over_modes(
            |w| Complex64::new(w * self.value(w).norm_sqr(), 0.0),
            &[self],
            settings,
        )
        .map_err(|_| ModeError::NonFinite("mean frequency"))?;
        let mean = r.value.re;
        if !r.converged || r.error_estimate > 1e-8 * mean.abs().max(f64::MIN_POSITIVE) {
            return Err(ModeError::QuadratureFailure {
                context: "mean frequency",
                error_estimate: r.error_estimate,
            });
        }
        Ok(mean)
    }

    /// Square root of the frequency variance, recomputed with the given
    /// settings (the cached value from construction is `sigma_eff`).
    pub fn root_variance(&self, settings: &QuadratureSettings) -> Result<f64, ModeError> {
        let mean = self.mean_frequency(settings)?;
        let r = quad::integrate_over_modes(
            |w| Complex64::new((w - mean) * (w - mean) * self.value(w).norm_sqr(), 0.0),
            &[self],
            settings,
        )
        .map_err(|_| ModeError::NonFinite("variance"))?;
        if !r.converged {
            return Err(ModeError::QuadratureFailure {
                context: "variance",
                error_estimate: r.error_estimate,
            });
        }
        Ok(r.value.re.max(0.0).sqrt())
    }

    /// Effective support interval, padded by [`SUPPORT_WIDTHS`] local widths.
    pub fn support(&self) -> (f64, f64) {
        let (lo, hi) = match self {
            SpectralMode::GaussianChirp(g) => (
                g.center - SUPPORT_WIDTHS * g.width,
                g.center + SUPPORT_WIDTHS * g.width,
            ),
            SpectralMode::Comb(c) => {
                let lo = c
                    .teeth
                    .iter()
                    .map(|t| t.center - SUPPORT_WIDTHS * t.width)
                    .fold(f64::INFINITY, f64::min);
                let hi = c
                    .teeth
                    .iter()
                    .map(|t| t.center + SUPPORT_WIDTHS * t.width)
                    .fold(f64::NEG_INFINITY, f64::max);
                (lo, hi)
            }
            SpectralMode::Sampled(s) => (s.grid_lo, s.grid_hi),
        };
        if self.truncated() {
            (lo.max(0.0), hi.max(0.0))
        } else {
            (lo, hi)
        }
    }

    /// Frequencies where integration panels must have a boundary so that the
    /// adaptive rule cannot overlook a narrow feature: support edges, centers,
    /// and the ±3-width shoulders of every component.
    pub fn landmarks(&self) -> Vec<f64> {
        let mut marks = Vec::new();
        match self {
            SpectralMode::GaussianChirp(g) => {
                marks.extend([
                    g.center - SUPPORT_WIDTHS * g.width,
                    g.center - 3.0 * g.width,
                    g.center,
                    g.center + 3.0 * g.width,
                    g.center + SUPPORT_WIDTHS * g.width,
                ]);
            }
            SpectralMode::Comb(c) => {
                for t in &c.teeth {
                    marks.extend([
                        t.center - SUPPORT_WIDTHS * t.width,
                        t.center - 3.0 * t.width,
                        t.center,
                        t.center + 3.0 * t.width,
                        t.center + SUPPORT_WIDTHS * t.width,
                    ]);
                }
            }
            SpectralMode::Sampled(s) => {
                marks.extend([s.grid_lo, s.mean, s.grid_hi]);
                let knots = s.magnitude.knots();
                let values = s.magnitude.values();
                let mut best = 0;
                for (i, v) in values.iter().enumerate() {
                    if *v > values[best] {
                        best = i;
                    }
                }
                marks.push(knots[best]);
            }
        }
        marks
    }

    pub fn truncated(&self) -> bool {
        match self {
            SpectralMode::GaussianChirp(g) => g.truncate,
            SpectralMode::Comb(c) => c.truncate,
            SpectralMode::Sampled(_) => false,
        }
    }

    pub fn is_sampled(&self) -> bool {
        matches!(self, SpectralMode::Sampled(_))
    }

    /// Cached root-variance width from construction.
    pub fn sigma_eff(&self) -> f64 {
        match self {
            SpectralMode::GaussianChirp(g) => g.sigma_eff,
            SpectralMode::Comb(c) => c.sigma_eff,
            SpectralMode::Sampled(s) => s.sigma_eff,
        }
    }

    /// Cached mean frequency from construction.
    pub fn mean_hint(&self) -> f64 {
        match self {
            SpectralMode::GaussianChirp(g) => g.mean,
            SpectralMode::Comb(c) => c.mean,
            SpectralMode::Sampled(s) => s.mean,
        }
    }

    /// Scale for the half-line map; an ω of the order of the spectral mass.
    pub fn scale_hint(&self) -> f64 {
        self.mean_hint().abs().max(self.sigma_eff())
    }

    /// Width of the narrowest spectral feature; sets polar grid resolution.
    pub fn finest_width(&self) -> f64 {
        match self {
            SpectralMode::GaussianChirp(g) => g.width,
            SpectralMode::Comb(c) => c
                .teeth
                .iter()
                .map(|t| t.width)
                .fold(f64::INFINITY, f64::min),
            SpectralMode::Sampled(s) => s.sigma_eff,
        }
    }

    pub fn as_gaussian(&self) -> Option<&GaussianChirp> {
        match self {
            SpectralMode::GaussianChirp(g) => Some(g),
            _ => None,
        }
    }

    /// Magnitude/phase split F(σx) = ρ(x)e^{iθ(x)}·σ^{−1/2} on the
    /// dimensionless axis x = ω/σ_eff, with θ unwrapped on a dense grid. The
    /// window is the hull where |F| ≥ 1e−10 of its peak; anything below
    /// 1e−12 of the peak inside that hull (a genuine interior null, as in
    /// widely separated comb teeth with opposing phases) makes the phase
    /// undefined.
    pub fn polar_decompose(&self) -> Result<PolarDecomposition, ModeError> {
        self.polar_impl(None)
    }

    /// Same decomposition restricted to an explicit window [x_lo, x_hi] in
    /// dimensionless units, for callers that need per-component windows of a
    /// mode with interior nulls. The ∫ρ² = 1 invariant only holds for the
    /// automatic full window.
    pub fn polar_decompose_window(
        &self,
        x_lo: f64,
        x_hi: f64,
    ) -> Result<PolarDecomposition, ModeError> {
        if !(x_hi > x_lo) || !x_lo.is_finite() || !x_hi.is_finite() {
            return Err(ModeError::BadParameter(format!(
                "polar window [{x_lo}, {x_hi}] is empty or not finite"
            )));
        }
        self.polar_impl(Some((x_lo, x_hi)))
    }

    fn polar_impl(&self, window: Option<(f64, f64)>) -> Result<PolarDecomposition, ModeError> {
        let sigma = self.sigma_eff();
        let (support_lo, support_hi) = self.support();

        // Coarse scan for the peak and the 1e-10 hull.
        let coarse = self.finest_width() / 8.0;
        let coarse_n = (((support_hi - support_lo) / coarse).ceil() as usize).clamp(16, 400_000);
        let coarse_dx = (support_hi - support_lo) / coarse_n as f64;
        let mut peak = 0.0_f64;
        let mags: Vec<f64> = (0..=coarse_n)
            .map(|i| {
                let m = self.value(support_lo + i as f64 * coarse_dx).norm();
                peak = peak.max(m);
                m
            })
            .collect();
        if peak <= 0.0 {
            return Err(ModeError::ZeroNorm);
        }

        let (omega_lo, omega_hi) = match window {
            Some((xl, xh)) => (xl * sigma, xh * sigma),
            None => {
                let first = mags.iter().position(|&m| m >= 1e-10 * peak).unwrap_or(0);
                let last = mags
                    .iter()
                    .rposition(|&m| m >= 1e-10 * peak)
                    .unwrap_or(mags.len() - 1);
                (
                    (support_lo + (first as f64 - 1.0) * coarse_dx).max(support_lo),
                    (support_lo + (last as f64 + 1.0) * coarse_dx).min(support_hi),
                )
            }
        };
        if !(omega_hi > omega_lo) {
            return Err(ModeError::BadParameter(
                "polar window does not intersect the mode support".into(),
            ));
        }

        // Dense grid: fine enough for 1e-10 cubic reconstruction of the
        // narrowest feature and far below the σ/100 phase-continuity scale.
        let dx_omega = self.finest_width() / 256.0;
        let mut n = ((omega_hi - omega_lo) / dx_omega).ceil() as usize + 1;
        n = n.clamp(9, 2_000_000);
        if n % 2 == 0 {
            n += 1;
        }
        let dx = (omega_hi - omega_lo) / (n - 1) as f64 / sigma;
        let x_lo = omega_lo / sigma;

        let sqrt_sigma = sigma.sqrt();
        let mut rho = Vec::with_capacity(n);
        let mut raw_phase = Vec::with_capacity(n);
        for i in 0..n {
            let x = x_lo + i as f64 * dx;
            let v = self.value(x * sigma);
            let m = v.norm();
            if m < 1e-12 * peak {
                return Err(ModeError::PhaseUndefined { x });
            }
            rho.push(m * sqrt_sigma);
            raw_phase.push(v.arg());
        }
        let theta = unwrap_phases(&raw_phase);
        let xs: Vec<f64> = (0..n).map(|i| x_lo + i as f64 * dx).collect();
        let rho_spline = CubicSpline::natural(xs.clone(), rho.clone())?;
        let theta_spline = CubicSpline::natural(xs.clone(), theta.clone())?;
        Ok(PolarDecomposition {
            sigma,
            xs,
            dx,
            rho,
            theta,
            rho_spline,
            theta_spline,
        })
    }
}

fn unwrap_phases(raw: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(raw.len());
    let mut prev = 0.0;
    for (i, &a) in raw.iter().enumerate() {
        let v = if i == 0 {
            a
        } else {
            a - TAU * ((a - prev) / TAU).round()
        };
        out.push(v);
        prev = v;
    }
    out
}

/// ρ, θ with F(σx) = σ^{−1/2}·ρ(x)e^{iθ(x)} on a uniform dimensionless grid.
#[derive(Clone, Debug)]
pub struct PolarDecomposition {
    sigma: f64,
    xs: Vec<f64>,
    dx: f64,
    rho: Vec<f64>,
    theta: Vec<f64>,
    rho_spline: CubicSpline,
    theta_spline: CubicSpline,
}

impl PolarDecomposition {
    pub fn sigma(&self) -> f64 {
        self.sigma
    }
    pub fn grid(&self) -> &[f64] {
        &self.xs
    }
    pub fn rho_values(&self) -> &[f64] {
        &self.rho
    }
    pub fn theta_values(&self) -> &[f64] {
        &self.theta
    }

    pub fn rho_at(&self, x: f64) -> f64 {
        self.rho_spline.eval(x).max(0.0)
    }

    pub fn theta_at(&self, x: f64) -> f64 {
        self.theta_spline.eval(x)
    }

    /// ρ(x)e^{iθ(x)}; multiply by σ^{−1/2} to recover F(σx).
    pub fn reconstruct(&self, x: f64) -> Complex64 {
        Complex64::from_polar(self.rho_at(x), self.theta_at(x))
    }

    pub fn theta_dot(&self) -> Vec<f64> {
        five_point_derivative(&self.theta, self.dx)
    }

    pub fn rho_dot(&self) -> Vec<f64> {
        five_point_derivative(&self.rho, self.dx)
    }

    /// ∫ρ²dx over the window (1 within 1e−9 for full decompositions).
    pub fn norm_sq(&self) -> f64 {
        simpson(&self.rho.iter().map(|r| r * r).collect::<Vec<_>>(), self.dx)
    }

    /// κ = ∫x·θ̇·ρ² dx by finite differences and Simpson weights on the grid;
    /// an estimate of Im K that shares nothing with the quadrature route.
    pub fn kappa(&self) -> f64 {
        let td = self.theta_dot();
        let vals: Vec<f64> = self
            .xs
            .iter()
            .zip(td.iter().zip(self.rho.iter()))
            .map(|(x, (t, r))| x * t * r * r)
            .collect();
        simpson(&vals, self.dx)
    }

    /// μ² = ∫x²(θ̇²ρ² + ρ̇²) dx on the same grid.
    pub fn mu_squared(&self) -> f64 {
        let td = self.theta_dot();
        let rd = self.rho_dot();
        let vals: Vec<f64> = self
            .xs
            .iter()
            .enumerate()
            .map(|(i, x)| x * x * (td[i] * td[i] * self.rho[i] * self.rho[i] + rd[i] * rd[i]))
            .collect();
        simpson(&vals, self.dx)
    }
}

fn five_point_derivative(f: &[f64], h: f64) -> Vec<f64> {
    let n = f.len();
    assert!(n >= 5, "five-point stencil needs at least five points");
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let d = if i < 2 || i + 2 >= n {
            let s = if i < 2 { 0 } else { n - 5 };
            let g = [f[s], f[s + 1], f[s + 2], f[s + 3], f[s + 4]];
            // One-sided / offset five-point first-derivative weights.
            let w: [f64; 5] = match i - s {
                0 => [-25.0, 48.0, -36.0, 16.0, -3.0],
                1 => [-3.0, -10.0, 18.0, -6.0, 1.0],
                2 => [1.0, -8.0, 0.0, 8.0, -1.0],
                3 => [-1.0, 6.0, -18.0, 10.0, 3.0],
                _ => [3.0, -16.0, 36.0, -48.0, 25.0],
            };
            (w[0] * g[0] + w[1] * g[1] + w[2] * g[2] + w[3] * g[3] + w[4] * g[4]) / (12.0 * h)
        } else {
            (-f[i + 2] + 8.0 * f[i + 1] - 8.0 * f[i - 1] + f[i - 2]) / (12.0 * h)
        };
        out.push(d);
    }
    out
}

pub(crate) fn simpson(vals: &[f64], dx: f64) -> f64 {
    let n = vals.len();
    assert!(
        n >= 3 && n % 2 == 1,
        "simpson needs an odd number of points"
    );
    let mut acc = vals[0] + vals[n - 1];
    for (i, v) in vals.iter().enumerate().take(n - 1).skip(1) {
        acc += if i % 2 == 1 { 4.0 * v } else { 2.0 * v };
    }
    acc * dx / 3.0
}

/// Natural cubic spline with analytic evaluation; knots strictly increasing.
#[derive(Clone, Debug)]
pub struct CubicSpline {
    x: Vec<f64>,
    y: Vec<f64>,
    m: Vec<f64>,
}

impl CubicSpline {
    pub fn natural(x: Vec<f64>, y: Vec<f64>) -> Result<Self, ModeError> {
        let n = x.len();
        if n != y.len() || n < 3 {
            return Err(ModeError::Grid(
                "spline needs at least three matching knots and values".into(),
            ));
        }
        // Thomas solve for interior second derivatives, natural ends m = 0.
        let mut sub = vec![0.0; n];
        let mut diag = vec![0.0; n];
        let mut sup = vec![0.0; n];
        let mut rhs = vec![0.0; n];
        for i in 1..n - 1 {
            let h0 = x[i] - x[i - 1];
            let h1 = x[i + 1] - x[i];
            sub[i] = h0;
            diag[i] = 2.0 * (h0 + h1);
            sup[i] = h1;
            rhs[i] = 6.0 * ((y[i + 1] - y[i]) / h1 - (y[i] - y[i - 1]) / h0);
        }
        let mut m = vec![0.0; n];
        for i in 2..n - 1 {
            let w = sub[i] / diag[i - 1];
            diag[i] -= w * sup[i - 1];
            rhs[i] -= w * rhs[i - 1];
        }
        for i in (1..n - 1).rev() {
            let upper = if i + 1 < n - 1 {
                sup[i] * m[i + 1]
            } else {
                0.0
            };
            m[i] = (rhs[i] - upper) / diag[i];
        }
        Ok(CubicSpline { x, y, m })
    }

    pub fn knots(&self) -> &[f64] {
        &self.x
    }

    pub fn values(&self) -> &[f64] {
        &self.y
    }

    pub fn eval(&self, t: f64) -> f64 {
        let n = self.x.len();
        let i = self.x.partition_point(|&k| k <= t).clamp(1, n - 1) - 1;
        let h = self.x[i + 1] - self.x[i];
        let a = (self.x[i + 1] - t) / h;
        let b = (t - self.x[i]) / h;
        a * self.y[i]
            + b * self.y[i + 1]
            + ((a * a * a - a) * self.m[i] + (b * b * b - b) * self.m[i + 1]) * h * h / 6.0
    }
}
