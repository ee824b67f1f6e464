//! Scenario configuration: TOML files and the built-in presets.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use cdfilter::{
    ContinuousDiscreteModel, CoordinatedTurn64, Cstr64, FilterVariant64, MeasurementCase, Representation, VanDerPol64,
};
use serde::Deserialize;

use crate::error::{HarnessError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Example {
    Tracking,
    Cstr,
    VanDerPol,
}

impl Example {
    pub fn label(self) -> &'static str {
        match self {
            Example::Tracking => "tracking",
            Example::Cstr => "cstr",
            Example::VanDerPol => "van_der_pol",
        }
    }
}

impl FromStr for Example {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "tracking" => Ok(Example::Tracking),
            "cstr" => Ok(Example::Cstr),
            "van_der_pol" | "vdp" => Ok(Example::VanDerPol),
            other => Err(HarnessError::config("example", format!("unknown example `{other}`"))),
        }
    }
}

/// A filter as written in a config: `hybrid-dense`, `hybrid-svd`,
/// `baseline64-dense`, `baseline128-svd`, optionally with `@<eps_g>` on a
/// hybrid to override the scenario tolerance.
#[derive(Debug, Clone, PartialEq)]
pub struct VariantSpec {
    pub variant: FilterVariant64,
    label: String,
}

impl VariantSpec {
    pub fn parse(text: &str, default_eps_g: f64) -> Result<Self> {
        let bad = || HarnessError::config("variants", format!("cannot parse filter `{text}`"));
        let (body, eps) = match text.split_once('@') {
            Some((b, e)) => (b, Some(e.parse::<f64>().map_err(|_| bad())?)),
            None => (text, None),
        };
        let (kind, rep) = body.rsplit_once('-').ok_or_else(bad)?;
        let representation = match rep {
            "dense" => Representation::Dense,
            "svd" => Representation::Spectral,
            _ => return Err(bad()),
        };
        let variant = if kind == "hybrid" {
            FilterVariant64::hybrid(representation, eps.unwrap_or(default_eps_g))
        } else if let Some(m) = kind.strip_prefix("baseline") {
            if eps.is_some() {
                return Err(bad());
            }
            FilterVariant64::baseline(representation, m.parse().map_err(|_| bad())?)
        } else {
            return Err(bad());
        };
        variant
            .validate()
            .map_err(|e| HarnessError::config("variants", format!("`{text}`: {e}")))?;
        Ok(Self {
            variant,
            label: text.to_string(),
        })
    }

    pub fn label(&self) -> &str {
        &self.label
    }
}

impl fmt::Display for VariantSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label)
    }
}

fn default_runs() -> usize {
    100
}

fn default_eps_g() -> f64 {
    1e-4
}

fn default_noise_scale() -> f64 {
    Cstr64::DEFAULT_NOISE_SCALE
}

/// One experiment: sweeps over sampling period, ill-conditioning parameter
/// and stiffness, each point run with every variant on shared truths.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub name: String,
    pub example: Example,
    /// Sampling periods.
    pub periods: Vec<f64>,
    /// Ill-conditioning parameters; empty runs the original measurement
    /// scheme.
    #[serde(default)]
    pub ill_conditioning: Vec<f64>,
    /// Stiffness values, Van der Pol only.
    #[serde(default)]
    pub lambdas: Vec<f64>,
    pub horizon: f64,
    #[serde(default = "default_runs")]
    pub monte_carlo: usize,
    #[serde(default)]
    pub seed: u64,
    /// Euler–Maruyama step of the truth simulation.
    pub truth_step: f64,
    pub variants: Vec<String>,
    #[serde(default = "default_eps_g")]
    pub eps_g: f64,
    /// Diagonal of the CSTR process noise covariance.
    #[serde(default = "default_noise_scale")]
    pub cstr_noise_scale: f64,
}

/// One point of the sweep grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepPoint {
    pub period: f64,
    pub ill_conditioning: Option<f64>,
    pub lambda: Option<f64>,
}

impl ScenarioConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: ScenarioConfig = toml::from_str(text).map_err(|e| {
            let field = e.message().split('`').nth(1).unwrap_or("config").to_string();
            HarnessError::Config {
                field,
                message: e.message().to_string(),
            }
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| HarnessError::ConfigFile {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        Self::from_toml_str(&text)
    }

    pub fn validate(&self) -> Result<()> {
        if self.name.is_empty() || self.name.contains([',', '"', '\n']) {
            return Err(HarnessError::config("name", "must be non-empty without commas, quotes or newlines"));
        }
        if self.periods.is_empty() {
            return Err(HarnessError::config("periods", "sweep must be non-empty"));
        }
        if !(self.horizon.is_finite() && self.horizon > 0.0) {
            return Err(HarnessError::config("horizon", "must be positive"));
        }
        if !(self.truth_step.is_finite() && self.truth_step > 0.0) {
            return Err(HarnessError::config("truth_step", "must be positive"));
        }
        for &p in &self.periods {
            if !(p.is_finite() && p > 0.0 && p <= self.horizon) {
                return Err(HarnessError::config("periods", format!("period {p} must lie in (0, horizon]")));
            }
            let steps = p / self.truth_step;
            if (steps.round() - steps).abs() > 1e-9 * steps.max(1.0) {
                return Err(HarnessError::config(
                    "truth_step",
                    format!("{} does not divide period {p}", self.truth_step),
                ));
            }
        }
        if self.ill_conditioning.iter().any(|&d| !(d > 0.0 && d <= 1.0)) {
            return Err(HarnessError::config("ill_conditioning", "values must lie in (0, 1]"));
        }
        match self.example {
            Example::VanDerPol => {
                if self.lambdas.is_empty() {
                    return Err(HarnessError::config("lambdas", "Van der Pol needs a non-empty sweep"));
                }
                if !self.ill_conditioning.is_empty() {
                    return Err(HarnessError::config("ill_conditioning", "not available for Van der Pol"));
                }
            }
            _ if !self.lambdas.is_empty() => {
                return Err(HarnessError::config("lambdas", "only Van der Pol takes a stiffness sweep"));
            }
            _ => {}
        }
        if self.lambdas.iter().any(|&l| !(l.is_finite() && l > 0.0)) {
            return Err(HarnessError::config("lambdas", "values must be positive"));
        }
        if self.monte_carlo == 0 {
            return Err(HarnessError::config("monte_carlo", "must be at least 1"));
        }
        if !(self.eps_g.is_finite() && self.eps_g > 0.0) {
            return Err(HarnessError::config("eps_g", "must be positive"));
        }
        if !(self.cstr_noise_scale.is_finite() && self.cstr_noise_scale >= 0.0) {
            return Err(HarnessError::config("cstr_noise_scale", "must be non-negative"));
        }
        if self.variants.is_empty() {
            return Err(HarnessError::config("variants", "list must be non-empty"));
        }
        self.variant_specs()?;
        Ok(())
    }

    pub fn variant_specs(&self) -> Result<Vec<VariantSpec>> {
        self.variants.iter().map(|v| VariantSpec::parse(v, self.eps_g)).collect()
    }

    /// Grid in the order period, ill-conditioning, stiffness.
    pub fn sweep_points(&self) -> Vec<SweepPoint> {
        let ill: Vec<Option<f64>> = if self.ill_conditioning.is_empty() {
            vec![None]
        } else {
            self.ill_conditioning.iter().copied().map(Some).collect()
        };
        let lambdas: Vec<Option<f64>> = if self.lambdas.is_empty() {
            vec![None]
        } else {
            self.lambdas.iter().copied().map(Some).collect()
        };
        let mut points = Vec::new();
        for &period in &self.periods {
            for &d in &ill {
                for &l in &lambdas {
                    points.push(SweepPoint {
                        period,
                        ill_conditioning: d,
                        lambda: l,
                    });
                }
            }
        }
        points
    }

    pub fn build_model(&self, point: &SweepPoint) -> Result<Box<dyn ContinuousDiscreteModel<f64>>> {
        let case = match point.ill_conditioning {
            Some(d) => MeasurementCase::IllConditioned(d),
            None => MeasurementCase::Original,
        };
        Ok(match self.example {
            Example::Tracking => Box::new(CoordinatedTurn64::new(case)?),
            Example::Cstr => Box::new(Cstr64::new(case, self.cstr_noise_scale)?),
            Example::VanDerPol => {
                let lambda = point
                    .lambda
                    .ok_or_else(|| HarnessError::config("lambdas", "missing stiffness value"))?;
                Box::new(VanDerPol64::new(lambda)?)
            }
        })
    }
}

const ALL_VARIANTS: [&str; 4] = ["hybrid-dense", "hybrid-svd", "baseline64-dense", "baseline64-svd"];

fn all_variants() -> Vec<String> {
    ALL_VARIANTS.iter().map(|s| s.to_string()).collect()
}

/// Tracking with the original radar, sampling periods 2 to 12 s.
pub fn table2_preset(runs: usize, seed: u64) -> ScenarioConfig {
    ScenarioConfig {
        name: "table2".into(),
        example: Example::Tracking,
        periods: vec![2.0, 4.0, 6.0, 8.0, 10.0, 12.0],
        ill_conditioning: Vec::new(),
        lambdas: Vec::new(),
        horizon: 150.0,
        monte_carlo: runs,
        seed,
        truth_step: 1e-3,
        variants: all_variants(),
        eps_g: 1e-4,
        cstr_noise_scale: default_noise_scale(),
    }
}

/// Decades `1e-1, 1e-2, ...` down to `delta_min`.
pub fn decades_down_to(delta_min: f64) -> Vec<f64> {
    (1..=300)
        .map(|e| 10f64.powi(-e))
        .take_while(|d| *d >= delta_min * (1.0 - 1e-9))
        .collect()
}

/// Ill-conditioned measurement sweep. Tracking samples every 7 s over
/// 150 s; the reactor every 1 s over 30 s.
pub fn illcond_preset(example: Example, delta_min: f64, runs: usize, seed: u64) -> Result<ScenarioConfig> {
    let (period, horizon) = match example {
        Example::Tracking => (7.0, 150.0),
        Example::Cstr => (1.0, 30.0),
        Example::VanDerPol => {
            return Err(HarnessError::config("example", "ill-conditioned sweep needs tracking or cstr"))
        }
    };
    let cfg = ScenarioConfig {
        name: format!("illcond-{}", example.label()),
        example,
        periods: vec![period],
        ill_conditioning: decades_down_to(delta_min),
        lambdas: Vec::new(),
        horizon,
        monte_carlo: runs,
        seed,
        truth_step: 1e-3,
        variants: all_variants(),
        eps_g: 1e-4,
        cstr_noise_scale: default_noise_scale(),
    };
    cfg.validate()?;
    Ok(cfg)
}

/// Van der Pol at `lambda = 1, 10, ..., 1e4`, sampled every 0.2 s over 2 s.
pub fn stiff_preset(runs: usize, seed: u64) -> ScenarioConfig {
    ScenarioConfig {
        name: "stiff".into(),
        example: Example::VanDerPol,
        periods: vec![0.2],
        ill_conditioning: Vec::new(),
        lambdas: vec![1.0, 10.0, 100.0, 1000.0, 10000.0],
        horizon: 2.0,
        monte_carlo: runs,
        seed,
        truth_step: 1e-5,
        variants: all_variants(),
        eps_g: 1e-4,
        cstr_noise_scale: default_noise_scale(),
    }
}

/// Reactor with the original measurement, sampled every 1 s over 30 s.
pub fn cstr_preset(runs: usize, seed: u64) -> ScenarioConfig {
    ScenarioConfig {
        name: "cstr".into(),
        example: Example::Cstr,
        periods: vec![1.0],
        ill_conditioning: Vec::new(),
        lambdas: Vec::new(),
        horizon: 30.0,
        monte_carlo: runs,
        seed,
        truth_step: 1e-3,
        variants: all_variants(),
        eps_g: 1e-4,
        cstr_noise_scale: default_noise_scale(),
    }
}
