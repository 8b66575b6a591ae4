//! TOML configuration: mode definitions, quadrature settings, scan grids.
//!
//! Parsing is strict. Unknown keys are rejected with the parser's line/column
//! rendering; semantic violations (support guard, grid shape) cite the mode's
//! table by line number. Frequency-like quantities in the file are expressed
//! in units of `unit_scale`: centers, widths, and sample grids are multiplied
//! by it, linear phase divided by it, quadratic phase by its square.

use std::fmt;
use std::path::{Path, PathBuf};

use num_complex::Complex64;
use serde::Deserialize;
use sha2::{Digest, Sha256};

use crate::quad::{QuadratureSettings, WindowPolicy};
use crate::spectra::{SpectralMode, Tooth};
use crate::validity::{ParamAxis, ParameterGrid, TwoModeTemplate};

#[derive(Debug)]
pub struct ConfigError(pub String);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl std::error::Error for ConfigError {}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    unit_scale: Option<f64>,
    threshold: Option<f64>,
    quadrature: Option<RawQuadrature>,
    #[serde(default)]
    modes: Vec<RawMode>,
    scan: Option<RawScan>,
    boundary: Option<RawBoundary>,
    params: Option<RawParams>,
    output: Option<RawOutput>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawQuadrature {
    rel_tol: Option<f64>,
    abs_tol: Option<f64>,
    max_subdivisions: Option<usize>,
    window: Option<String>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawMode {
    kind: String,
    center: Option<f64>,
    width: Option<f64>,
    phi: Option<f64>,
    beta: Option<f64>,
    truncate_at_zero: Option<bool>,
    teeth: Option<Vec<RawTooth>>,
    grid: Option<Vec<f64>>,
    amplitudes_re: Option<Vec<f64>>,
    amplitudes_im: Option<Vec<f64>>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTooth {
    center: f64,
    width: f64,
    weight: [f64; 2],
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawScan {
    chi_values: Option<Vec<f64>>,
    start: Option<f64>,
    stop: Option<f64>,
    points: Option<usize>,
    spacing: Option<String>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawBoundary {
    bracket: [f64; 2],
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawParams {
    axis1: String,
    axis1_values: Vec<f64>,
    axis2: String,
    axis2_values: Vec<f64>,
    chi: Option<f64>,
    omega0_over_sigma: Option<f64>,
    sigma_phi: Option<f64>,
    separation_over_sigma: Option<f64>,
    sigma: Option<f64>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawOutput {
    path: Option<String>,
    format: Option<String>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OutputFormat {
    Json,
    Csv,
}

#[derive(Clone, Debug)]
pub struct ParamsConfig {
    pub grid: ParameterGrid,
    pub chi: Option<f64>,
    pub template: TwoModeTemplate,
}

#[derive(Debug)]
pub struct Config {
    pub unit_scale: f64,
    pub threshold: f64,
    pub settings: QuadratureSettings,
    pub modes: Vec<SpectralMode>,
    pub scan_grid: Option<Vec<f64>>,
    pub boundary_bracket: Option<(f64, f64)>,
    pub params: Option<ParamsConfig>,
    pub output_path: Option<PathBuf>,
    pub output_format: Option<OutputFormat>,
    /// sha256 of the raw file bytes, stable across runs.
    pub digest: String,
}

/// Line of the (index+1)-th `[[modes]]` table header, for diagnostics.
fn mode_location(source: &str, index: usize) -> String {
    let mut seen = 0;
    for (lineno, line) in source.lines().enumerate() {
        if line.trim_start().starts_with("[[modes]]") {
            if seen == index {
                return format!("line {}", lineno + 1);
            }
            seen += 1;
        }
    }
    format!("mode {}", index + 1)
}

fn positive(name: &str, v: f64) -> Result<f64, ConfigError> {
    if v.is_finite() && v > 0.0 {
        Ok(v)
    } else {
        Err(ConfigError(format!(
            "`{name}` must be finite and positive, got {v}"
        )))
    }
}

fn build_mode(raw: &RawMode, u: f64, location: &str) -> Result<SpectralMode, ConfigError> {
    let fail = |msg: String| ConfigError(format!("mode at {location}: {msg}"));
    let forbid = |cond: bool, field: &str, kind: &str| {
        if cond {
            Err(fail(format!(
                "field `{field}` does not apply to kind \"{kind}\""
            )))
        } else {
            Ok(())
        }
    };
    let truncate = raw.truncate_at_zero.unwrap_or(false);
    match raw.kind.as_str() {
        "gaussian" => {
            forbid(raw.teeth.is_some(), "teeth", "gaussian")?;
            forbid(raw.grid.is_some(), "grid", "gaussian")?;
            forbid(raw.amplitudes_re.is_some(), "amplitudes_re", "gaussian")?;
            forbid(raw.amplitudes_im.is_some(), "amplitudes_im", "gaussian")?;
            let center = raw
                .center
                .ok_or_else(|| fail("`center` is required".into()))?
                * u;
            let width = raw
                .width
                .ok_or_else(|| fail("`width` is required".into()))?
                * u;
            let phi = raw.phi.unwrap_or(0.0) / u;
            let beta = raw.beta.unwrap_or(0.0) / (u * u);
            let mode = if truncate {
                SpectralMode::gaussian_chirp_with_override(center, width, phi, beta)
            } else {
                SpectralMode::gaussian_chirp(center, width, phi, beta)
            };
            mode.map_err(|e| fail(e.to_string()))
        }
        "comb" => {
            forbid(raw.center.is_some(), "center", "comb")?;
            forbid(raw.width.is_some(), "width", "comb")?;
            forbid(raw.phi.is_some(), "phi", "comb")?;
            forbid(raw.beta.is_some(), "beta", "comb")?;
            forbid(raw.grid.is_some(), "grid", "comb")?;
            forbid(raw.amplitudes_re.is_some(), "amplitudes_re", "comb")?;
            forbid(raw.amplitudes_im.is_some(), "amplitudes_im", "comb")?;
            let teeth_raw = raw
                .teeth
                .as_ref()
                .ok_or_else(|| fail("`teeth` is required".into()))?;
            let teeth: Vec<Tooth> = teeth_raw
                .iter()
                .map(|t| Tooth {
                    center: t.center * u,
                    width: t.width * u,
                    weight: Complex64::new(t.weight[0], t.weight[1]),
                })
                .collect();
            let mode = if truncate {
                SpectralMode::comb_with_override(teeth)
            } else {
                SpectralMode::comb(teeth)
            };
            mode.map_err(|e| fail(e.to_string()))
        }
        "sampled" => {
            forbid(raw.center.is_some(), "center", "sampled")?;
            forbid(raw.width.is_some(), "width", "sampled")?;
            forbid(raw.phi.is_some(), "phi", "sampled")?;
            forbid(raw.beta.is_some(), "beta", "sampled")?;
            forbid(raw.teeth.is_some(), "teeth", "sampled")?;
            forbid(
                raw.truncate_at_zero.is_some(),
                "truncate_at_zero",
                "sampled",
            )?;
            let grid: Vec<f64> = raw
                .grid
                .as_ref()
                .ok_or_else(|| fail("`grid` is required".into()))?
                .iter()
                .map(|x| x * u)
                .collect();
            let re = raw
                .amplitudes_re
                .as_ref()
                .ok_or_else(|| fail("`amplitudes_re` is required".into()))?;
            let im = raw
                .amplitudes_im
                .as_ref()
                .ok_or_else(|| fail("`amplitudes_im` is required".into()))?;
            if re.len() != im.len() || re.len() != grid.len() {
                return Err(fail(format!(
                    "grid ({}), amplitudes_re ({}), amplitudes_im ({}) must have equal lengths",
                    grid.len(),
                    re.len(),
                    im.len()
                )));
            }
            let amps: Vec<Complex64> = re
                .iter()
                .zip(im.iter())
                .map(|(&r, &i)| Complex64::new(r, i))
                .collect();
            SpectralMode::sampled(grid, amps).map_err(|e| fail(e.to_string()))
        }
        other => Err(fail(format!(
            "unknown kind \"{other}\"; expected \"gaussian\", \"comb\", or \"sampled\""
        ))),
    }
}

fn build_scan_grid(raw: &RawScan) -> Result<Vec<f64>, ConfigError> {
    let explicit = raw.chi_values.is_some();
    let generated =
        raw.start.is_some() || raw.stop.is_some() || raw.points.is_some() || raw.spacing.is_some();
    if explicit && generated {
        return Err(ConfigError(
            "[scan] must use either `chi_values` or `start`/`stop`/`points`, not both".into(),
        ));
    }
    if let Some(values) = &raw.chi_values {
        if values.is_empty() {
            return Err(ConfigError("[scan] `chi_values` is empty".into()));
        }
        if values.windows(2).any(|w| w[1] <= w[0]) || !(values[0] > 0.0) {
            return Err(ConfigError(
                "[scan] `chi_values` must be positive and strictly increasing".into(),
            ));
        }
        return Ok(values.clone());
    }
    let start = raw.start.ok_or_else(|| {
        ConfigError("[scan] needs `chi_values` or `start`/`stop`/`points`".into())
    })?;
    let stop = raw
        .stop
        .ok_or_else(|| ConfigError("[scan] `stop` is required with `start`".into()))?;
    let points = raw
        .points
        .ok_or_else(|| ConfigError("[scan] `points` is required with `start`".into()))?;
    positive("scan.start", start)?;
    if !(stop > start) {
        return Err(ConfigError(format!(
            "[scan] `stop` ({stop}) must exceed `start` ({start})"
        )));
    }
    if points < 2 {
        return Err(ConfigError("[scan] `points` must be at least 2".into()));
    }
    let spacing = raw.spacing.as_deref().unwrap_or("linear");
    let grid: Vec<f64> = match spacing {
        "linear" => (0..points)
            .map(|k| start + (stop - start) * k as f64 / (points - 1) as f64)
            .collect(),
        "log" => {
            let (a, b) = (start.ln(), stop.ln());
            (0..points)
                .map(|k| (a + (b - a) * k as f64 / (points - 1) as f64).exp())
                .collect()
        }
        other => {
            return Err(ConfigError(format!(
                "[scan] `spacing` must be \"linear\" or \"log\", got \"{other}\""
            )))
        }
    };
    Ok(grid)
}

fn parse_axis(name: &str, value: &str) -> Result<ParamAxis, ConfigError> {
    match value {
        "omega0-over-sigma" => Ok(ParamAxis::Omega0OverSigma),
        "sigma-phi" => Ok(ParamAxis::SigmaPhi),
        "separation-over-sigma" => Ok(ParamAxis::SeparationOverSigma),
        other => Err(ConfigError(format!(
            "[params] `{name}` must be one of \"omega0-over-sigma\", \"sigma-phi\", \
             \"separation-over-sigma\"; got \"{other}\""
        ))),
    }
}

pub fn parse_config(path: &Path) -> Result<Config, ConfigError> {
    let bytes = std::fs::read(path)
        .map_err(|e| ConfigError(format!("cannot read config {}: {e}", path.display())))?;
    let source = String::from_utf8(bytes.clone())
        .map_err(|e| ConfigError(format!("config {} is not UTF-8: {e}", path.display())))?;
    let digest = format!("sha256:{}", hex::encode(Sha256::digest(&bytes)));

    let raw: RawConfig = toml::from_str(&source)
        .map_err(|e| ConfigError(format!("config {}: {e}", path.display())))?;

    let unit_scale = match raw.unit_scale {
        Some(u) => positive("unit_scale", u)?,
        None => 1.0,
    };
    let threshold = match raw.threshold {
        Some(t) => positive("threshold", t)?,
        None => 1e-3,
    };

    let mut settings = QuadratureSettings::default();
    if let Some(q) = &raw.quadrature {
        if let Some(v) = q.rel_tol {
            settings.rel_tol = positive("quadrature.rel_tol", v)?;
        }
        if let Some(v) = q.abs_tol {
            settings.abs_tol = positive("quadrature.abs_tol", v)?;
        }
        if let Some(v) = q.max_subdivisions {
            if v == 0 {
                return Err(ConfigError(
                    "`quadrature.max_subdivisions` must be at least 1".into(),
                ));
            }
            settings.max_subdivisions = v;
        }
        if let Some(w) = &q.window {
            settings.window_policy = match w.as_str() {
                "truncate" => WindowPolicy::Truncate,
                "half-line" => WindowPolicy::HalfLine,
                other => {
                    return Err(ConfigError(format!(
                        "`quadrature.window` must be \"truncate\" or \"half-line\", got \"{other}\""
                    )))
                }
            };
        }
    }

    let mut modes = Vec::with_capacity(raw.modes.len());
    for (i, m) in raw.modes.iter().enumerate() {
        let location = mode_location(&source, i);
        modes.push(build_mode(m, unit_scale, &location)?);
    }

    let scan_grid = raw.scan.as_ref().map(build_scan_grid).transpose()?;

    let boundary_bracket = match &raw.boundary {
        Some(b) => {
            let (lo, hi) = (b.bracket[0], b.bracket[1]);
            positive("boundary.bracket", lo)?;
            if !(hi > lo) {
                return Err(ConfigError(format!(
                    "[boundary] bracket ({lo}, {hi}) must be increasing"
                )));
            }
            Some((lo, hi))
        }
        None => None,
    };

    let params = match &raw.params {
        Some(p) => {
            let axis1 = parse_axis("axis1", &p.axis1)?;
            let axis2 = parse_axis("axis2", &p.axis2)?;
            if axis1 == axis2 {
                return Err(ConfigError(
                    "[params] `axis1` and `axis2` must differ".into(),
                ));
            }
            if p.axis1_values.is_empty() || p.axis2_values.is_empty() {
                return Err(ConfigError(
                    "[params] axis value lists must be nonempty".into(),
                ));
            }
            if let Some(c) = p.chi {
                positive("params.chi", c)?;
            }
            let sigma = match p.sigma {
                Some(s) => positive("params.sigma", s)?,
                None => 1.0,
            } * unit_scale;
            Some(ParamsConfig {
                grid: ParameterGrid {
                    axis1,
                    values1: p.axis1_values.clone(),
                    axis2,
                    values2: p.axis2_values.clone(),
                },
                chi: p.chi,
                template: TwoModeTemplate {
                    omega0_over_sigma: p.omega0_over_sigma.unwrap_or(10.0),
                    sigma_phi: p.sigma_phi.unwrap_or(0.0),
                    separation_over_sigma: p.separation_over_sigma.unwrap_or(20.0),
                    sigma,
                },
            })
        }
        None => None,
    };

    let (output_path, output_format) = match &raw.output {
        Some(o) => {
            let format = match o.format.as_deref() {
                None => None,
                Some("json") => Some(OutputFormat::Json),
                Some("csv") => Some(OutputFormat::Csv),
                Some(other) => {
                    return Err(ConfigError(format!(
                        "[output] `format` must be \"json\" or \"csv\", got \"{other}\""
                    )))
                }
            };
            (o.path.as_ref().map(PathBuf::from), format)
        }
        None => (None, None),
    };

    Ok(Config {
        unit_scale,
        threshold,
        settings,
        modes,
        scan_grid,
        boundary_bracket,
        params,
        output_path,
        output_format,
        digest,
    })
}
