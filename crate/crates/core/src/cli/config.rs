//! Experiment configuration: TOML file, flag overrides, validation.
//!
//! `validate` fills every default and records the filled field paths in
//! `ExperimentConfig::defaults`, so provenance shows what the user did not set.

use std::fmt;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::densities::{Su2GaussianVariant, Su2SphericalVariant};
use crate::ensemble::EnsembleKind;
use crate::fubini::DegreeSpec;

/// Environment variable naming the default output directory.
pub const OUT_DIR_ENV: &str = "CRITVAL_OUT_DIR";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Command {
    Critvals,
    Values,
    Density,
    Bridge,
    Converge,
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Critvals => "critvals",
            Command::Values => "values",
            Command::Density => "density",
            Command::Bridge => "bridge",
            Command::Converge => "converge",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Formula {
    /// Universal limit density: closed form for `m = 1`, matrix integral otherwise.
    DInf,
    SuGaussian,
    SuGaussianDisplayed,
    Su2Spherical,
    Su2SphericalCutoff,
    Su2SphericalDisplayed,
    ValueSpherical,
    ValueGaussian,
    ValueLimit,
}

impl Formula {
    pub const ALL: [Formula; 9] = [
        Formula::DInf,
        Formula::SuGaussian,
        Formula::SuGaussianDisplayed,
        Formula::Su2Spherical,
        Formula::Su2SphericalCutoff,
        Formula::Su2SphericalDisplayed,
        Formula::ValueSpherical,
        Formula::ValueGaussian,
        Formula::ValueLimit,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Formula::DInf => "d-inf",
            Formula::SuGaussian => "su-gaussian",
            Formula::SuGaussianDisplayed => "su-gaussian-displayed",
            Formula::Su2Spherical => "su2-spherical",
            Formula::Su2SphericalCutoff => "su2-spherical-cutoff",
            Formula::Su2SphericalDisplayed => "su2-spherical-displayed",
            Formula::ValueSpherical => "value-spherical",
            Formula::ValueGaussian => "value-gaussian",
            Formula::ValueLimit => "value-limit",
        }
    }

    pub fn parse(s: &str) -> Option<Formula> {
        Formula::ALL.into_iter().find(|f| f.name() == s)
    }

    pub fn needs_degree(&self) -> bool {
        !matches!(self, Formula::DInf | Formula::ValueLimit)
    }

    pub fn su_gaussian_variant(&self) -> Option<Su2GaussianVariant> {
        match self {
            Formula::SuGaussian => Some(Su2GaussianVariant::Exact),
            Formula::SuGaussianDisplayed => Some(Su2GaussianVariant::Displayed),
            _ => None,
        }
    }

    pub fn su2_spherical_variant(&self) -> Option<Su2SphericalVariant> {
        match self {
            Formula::Su2Spherical => Some(Su2SphericalVariant::Exact),
            Formula::Su2SphericalCutoff => Some(Su2SphericalVariant::Cutoff),
            Formula::Su2SphericalDisplayed => Some(Su2SphericalVariant::Displayed),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub lo: f64,
    pub hi: f64,
    pub points: usize,
}

impl GridSpec {
    /// `lo:hi:points`.
    pub fn parse(s: &str) -> std::result::Result<GridSpec, String> {
        let parts: Vec<&str> = s.split(':').collect();
        if parts.len() != 3 {
            return Err(format!("expected lo:hi:points, got {s:?}"));
        }
        let lo: f64 = parts[0]
            .trim()
            .parse()
            .map_err(|_| format!("bad lower bound {:?}", parts[0]))?;
        let hi: f64 = parts[1]
            .trim()
            .parse()
            .map_err(|_| format!("bad upper bound {:?}", parts[1]))?;
        let points: usize = parts[2]
            .trim()
            .parse()
            .map_err(|_| format!("bad point count {:?}", parts[2]))?;
        if !(lo.is_finite() && hi.is_finite() && hi > lo && lo >= 0.0) {
            return Err(format!("need 0 <= lo < hi, got [{lo}, {hi}]"));
        }
        if points < 2 {
            return Err(format!("need at least 2 points, got {points}"));
        }
        Ok(GridSpec { lo, hi, points })
    }

    pub fn points(&self) -> Vec<f64> {
        crate::densities::uniform_grid(self.lo, self.hi, self.points)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputFormat {
    Csv,
    Json,
}

/// File form of the configuration; every field optional.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RawConfig {
    pub degree: RawDegree,
    pub ensemble: RawEnsemble,
    pub sampling: RawSampling,
    pub curve: RawCurve,
    pub mc: RawMc,
    pub compare: RawCompare,
    pub output: RawOutput,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RawDegree {
    pub n: Option<u32>,
    pub m: Option<u32>,
    pub ns: Option<Vec<u32>>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RawEnsemble {
    /// `gaussian`, `normalized` or `spherical`.
    pub kind: Option<String>,
    pub alpha: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RawSampling {
    pub samples: Option<usize>,
    pub points_per_section: Option<usize>,
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RawCurve {
    pub formula: Option<String>,
    /// `lo:hi:points`.
    pub grid: Option<String>,
    pub volume: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RawMc {
    pub samples: Option<usize>,
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RawCompare {
    pub enabled: Option<bool>,
    pub l1_threshold: Option<f64>,
    pub ks_level: Option<f64>,
    pub bootstrap: Option<usize>,
    pub k_sigma: Option<f64>,
    pub rel_tolerance: Option<f64>,
    pub slope_target: Option<f64>,
    pub slope_tolerance: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RawOutput {
    pub dir: Option<PathBuf>,
    pub format: Option<String>,
}

impl RawConfig {
    pub fn from_toml(text: &str) -> std::result::Result<RawConfig, ConfigErrors> {
        toml::from_str(text)
            .map_err(|e| ConfigErrors(vec![FieldError::new("<file>", e.message().to_string())]))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FieldError {
    pub path: String,
    pub message: String,
}

impl FieldError {
    pub fn new(path: &str, message: impl Into<String>) -> Self {
        Self {
            path: path.into(),
            message: message.into(),
        }
    }
}

/// Every problem found in one configuration.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfigErrors(pub Vec<FieldError>);

impl fmt::Display for ConfigErrors {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, e) in self.0.iter().enumerate() {
            if i > 0 {
                writeln!(f)?;
            }
            write!(f, "{}: {}", e.path, e.message)?;
        }
        Ok(())
    }
}

impl std::error::Error for ConfigErrors {}

impl ConfigErrors {
    pub fn has(&self, path: &str) -> bool {
        self.0.iter().any(|e| e.path == path)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McSpec {
    pub samples: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareSpec {
    pub enabled: bool,
    /// L1 gate; `None` reports L1 without gating on it.
    pub l1_threshold: Option<f64>,
    pub ks_level: f64,
    pub bootstrap: usize,
    /// Per-bin band for curves with Monte Carlo error.
    pub k_sigma: f64,
    /// Relative tolerance of the bridge check on `x ∈ [0.2, 3]`.
    pub rel_tolerance: f64,
    pub slope_target: f64,
    pub slope_tolerance: f64,
}

/// Normalized configuration; every precondition of the invoked modules holds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub command: Command,
    pub n: Option<u32>,
    pub m: u32,
    pub ns: Vec<u32>,
    pub ensemble: EnsembleKind,
    pub samples: usize,
    pub points_per_section: usize,
    pub seed: u64,
    pub formula: Formula,
    /// `None` for `critvals` and `values` means a grid fitted to the data.
    pub grid: Option<GridSpec>,
    pub volume: Option<f64>,
    pub mc: McSpec,
    pub compare: CompareSpec,
    pub format: OutputFormat,
    /// Field paths filled from defaults.
    pub defaults: Vec<String>,
    /// Not part of provenance: artifacts do not depend on where they are written.
    #[serde(skip)]
    pub out_dir: PathBuf,
}

impl ExperimentConfig {
    pub fn degree(&self) -> Option<DegreeSpec> {
        self.n.and_then(|n| DegreeSpec::new(n, self.m).ok())
    }
}

struct Filler<'a> {
    defaults: &'a mut Vec<String>,
}

impl Filler<'_> {
    fn or<T>(&mut self, v: Option<T>, path: &str, default: T) -> T {
        v.unwrap_or_else(|| {
            self.defaults.push(path.into());
            default
        })
    }
}

/// Normalize `raw` for `command`, or every field error found.
pub fn validate(
    command: Command,
    raw: &RawConfig,
) -> std::result::Result<ExperimentConfig, ConfigErrors> {
    let mut errs: Vec<FieldError> = Vec::new();
    let mut defaults = Vec::new();
    let mut fill = Filler {
        defaults: &mut defaults,
    };

    let m = fill.or(raw.degree.m, "degree.m", 1);
    if m == 0 {
        errs.push(FieldError::new("degree.m", "dimension must be at least 1"));
    }
    let n = raw.degree.n;
    if let Some(n) = n {
        if let Err(e) = DegreeSpec::new(n, m.max(1)) {
            errs.push(FieldError::new("degree.n", e.to_string()));
        }
    }

    let kind_name = fill.or(
        raw.ensemble.kind.clone(),
        "ensemble.kind",
        "normalized".into(),
    );
    let ensemble = match (kind_name.as_str(), raw.ensemble.alpha) {
        ("spherical", Some(_)) => {
            errs.push(FieldError::new(
                "ensemble.alpha",
                "the spherical ensemble takes no alpha",
            ));
            EnsembleKind::Spherical
        }
        ("spherical", None) => EnsembleKind::Spherical,
        ("normalized", Some(_)) => {
            errs.push(FieldError::new(
                "ensemble.alpha",
                "the normalized ensemble fixes alpha = d_n",
            ));
            EnsembleKind::NormalizedGaussian
        }
        ("normalized", None) => EnsembleKind::NormalizedGaussian,
        ("gaussian", a) => {
            let alpha = fill.or(a, "ensemble.alpha", 1.0);
            if !(alpha > 0.0 && alpha.is_finite()) {
                errs.push(FieldError::new(
                    "ensemble.alpha",
                    format!("must be positive and finite, got {alpha}"),
                ));
            }
            EnsembleKind::Gaussian { alpha }
        }
        (other, _) => {
            errs.push(FieldError::new(
                "ensemble.kind",
                format!("unknown kind {other:?}; use gaussian, normalized or spherical"),
            ));
            EnsembleKind::NormalizedGaussian
        }
    };
    let spherical = ensemble == EnsembleKind::Spherical;

    let default_samples = match command {
        Command::Values => 10_000,
        _ => 500,
    };
    let samples = fill.or(raw.sampling.samples, "sampling.samples", default_samples);
    let points_per_section = fill.or(
        raw.sampling.points_per_section,
        "sampling.points_per_section",
        10,
    );
    let seed = fill.or(raw.sampling.seed, "sampling.seed", 0);
    if matches!(command, Command::Critvals | Command::Values) {
        if samples == 0 {
            errs.push(FieldError::new("sampling.samples", "must be positive"));
        }
        if points_per_section == 0 {
            errs.push(FieldError::new(
                "sampling.points_per_section",
                "must be positive",
            ));
        }
    }

    let default_formula = match command {
        Command::Critvals if spherical => Formula::Su2Spherical,
        Command::Critvals => Formula::SuGaussian,
        Command::Values if spherical => Formula::ValueSpherical,
        Command::Values => Formula::ValueGaussian,
        Command::Density => Formula::DInf,
        Command::Bridge => Formula::Su2Spherical,
        Command::Converge => Formula::SuGaussian,
    };
    let formula = match raw.curve.formula.as_deref() {
        None => {
            fill.defaults.push("curve.formula".into());
            default_formula
        }
        Some(s) => Formula::parse(s).unwrap_or_else(|| {
            let names: Vec<&str> = Formula::ALL.iter().map(|f| f.name()).collect();
            errs.push(FieldError::new(
                "curve.formula",
                format!("unknown formula {s:?}; one of {}", names.join(", ")),
            ));
            default_formula
        }),
    };

    let grid = match raw.curve.grid.as_deref() {
        Some(s) => match GridSpec::parse(s) {
            Ok(g) => Some(g),
            Err(e) => {
                errs.push(FieldError::new("curve.grid", e));
                None
            }
        },
        None => {
            let d = match command {
                Command::Critvals | Command::Values => None,
                Command::Bridge => Some(GridSpec {
                    lo: 0.2,
                    hi: 3.0,
                    points: 57,
                }),
                _ => Some(GridSpec {
                    lo: 0.0,
                    hi: 4.0,
                    points: 400,
                }),
            };
            if d.is_some() {
                fill.defaults.push("curve.grid".into());
            }
            d
        }
    };
    let volume = raw.curve.volume;
    if let Some(v) = volume {
        if !(v > 0.0 && v.is_finite()) {
            errs.push(FieldError::new(
                "curve.volume",
                format!("must be positive, got {v}"),
            ));
        }
    }

    let ns = match (command, raw.degree.ns.clone()) {
        (Command::Converge, None) => {
            fill.defaults.push("degree.ns".into());
            vec![16, 32, 64, 128]
        }
        (_, v) => v.unwrap_or_default(),
    };

    let mc = McSpec {
        samples: fill.or(raw.mc.samples, "mc.samples", 200_000),
        seed: fill.or(raw.mc.seed, "mc.seed", 0),
    };
    if mc.samples == 0 {
        errs.push(FieldError::new("mc.samples", "must be positive"));
    }

    let compare = CompareSpec {
        enabled: fill.or(
            raw.compare.enabled,
            "compare.enabled",
            command != Command::Density,
        ),
        l1_threshold: match (raw.compare.l1_threshold, command) {
            (Some(t), _) => Some(t),
            (None, Command::Critvals) => {
                fill.defaults.push("compare.l1_threshold".into());
                Some(0.05)
            }
            (None, _) => None,
        },
        ks_level: fill.or(raw.compare.ks_level, "compare.ks_level", 0.95),
        bootstrap: fill.or(raw.compare.bootstrap, "compare.bootstrap", 200),
        k_sigma: fill.or(raw.compare.k_sigma, "compare.k_sigma", 3.0),
        rel_tolerance: fill.or(raw.compare.rel_tolerance, "compare.rel_tolerance", 1e-3),
        slope_target: fill.or(raw.compare.slope_target, "compare.slope_target", -1.0),
        slope_tolerance: fill.or(raw.compare.slope_tolerance, "compare.slope_tolerance", 0.15),
    };
    if !(compare.ks_level > 0.0 && compare.ks_level < 1.0) {
        errs.push(FieldError::new("compare.ks_level", "must lie in (0, 1)"));
    }
    if compare.bootstrap < 2 {
        errs.push(FieldError::new(
            "compare.bootstrap",
            "need at least 2 resamples",
        ));
    }

    let format = match fill
        .or(raw.output.format.clone(), "output.format", "csv".into())
        .as_str()
    {
        "csv" => OutputFormat::Csv,
        "json" => OutputFormat::Json,
        other => {
            errs.push(FieldError::new(
                "output.format",
                format!("unknown format {other:?}; use csv or json"),
            ));
            OutputFormat::Csv
        }
    };
    let out_dir = raw
        .output
        .dir
        .clone()
        .or_else(|| std::env::var_os(OUT_DIR_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("out"));

    // Cross-field preconditions of the invoked formulas and pipelines.
    let needs_n = match command {
        Command::Critvals | Command::Values | Command::Bridge => true,
        Command::Density => formula.needs_degree(),
        Command::Converge => false,
    };
    if needs_n && n.is_none() {
        errs.push(FieldError::new(
            "degree.n",
            format!(
                "required by {} with formula {}",
                command.name(),
                formula.name()
            ),
        ));
    }
    let uses_formula = !matches!(command, Command::Critvals | Command::Values) || compare.enabled;
    if uses_formula {
        let su = formula.su_gaussian_variant().is_some();
        let sph = formula.su2_spherical_variant().is_some();
        if (su || sph) && n == Some(1) {
            errs.push(FieldError::new(
                "degree.n",
                format!(
                    "formula {} needs n >= 2 (n - 1 appears in a denominator)",
                    formula.name()
                ),
            ));
        }
        if sph && m != 1 {
            errs.push(FieldError::new(
                "degree.m",
                format!("formula {} is defined for m = 1 only", formula.name()),
            ));
        }
        if formula == Formula::ValueSpherical && n.is_some_and(|n| n < 2 && m == 1) {
            errs.push(FieldError::new(
                "degree.n",
                "spherical values need d_n >= 2",
            ));
        }
    }
    match command {
        Command::Critvals if compare.enabled => {
            let ok = match formula {
                Formula::SuGaussian | Formula::SuGaussianDisplayed | Formula::DInf => !spherical,
                Formula::Su2Spherical
                | Formula::Su2SphericalCutoff
                | Formula::Su2SphericalDisplayed => spherical,
                _ => false,
            };
            if !ok {
                errs.push(FieldError::new(
                    "curve.formula",
                    format!(
                        "{} is not a critical-value curve for this ensemble",
                        formula.name()
                    ),
                ));
            }
            if formula == Formula::DInf && !matches!(ensemble, EnsembleKind::NormalizedGaussian) {
                errs.push(FieldError::new(
                    "curve.formula",
                    "d-inf describes the normalized ensemble",
                ));
            }
        }
        Command::Values if compare.enabled => {
            let ok = match formula {
                Formula::ValueSpherical => spherical,
                Formula::ValueGaussian => !spherical,
                Formula::ValueLimit => true,
                _ => false,
            };
            if !ok {
                errs.push(FieldError::new(
                    "curve.formula",
                    format!("{} is not a value curve for this ensemble", formula.name()),
                ));
            }
        }
        Command::Density => {
            let gaussian = matches!(
                formula,
                Formula::SuGaussian | Formula::SuGaussianDisplayed | Formula::ValueGaussian
            );
            if gaussian && spherical {
                errs.push(FieldError::new(
                    "ensemble.kind",
                    format!("{} describes a Gaussian ensemble", formula.name()),
                ));
            }
        }
        Command::Bridge => {
            if formula.su2_spherical_variant().is_none() {
                errs.push(FieldError::new(
                    "curve.formula",
                    "bridge input must be an su2-spherical formula",
                ));
            }
            if spherical {
                errs.push(FieldError::new(
                    "ensemble.kind",
                    "the bridge target is a Gaussian ensemble",
                ));
            }
        }
        Command::Converge => {
            if m != 1 {
                errs.push(FieldError::new(
                    "degree.m",
                    "rate tables use the closed m = 1 curves",
                ));
            }
            if !matches!(
                formula,
                Formula::SuGaussian | Formula::SuGaussianDisplayed | Formula::Su2Spherical
            ) {
                errs.push(FieldError::new(
                    "curve.formula",
                    "converge takes su-gaussian, su-gaussian-displayed or su2-spherical",
                ));
            }
            if ns.len() < 2
                || ns.windows(2).any(|w| w[1] <= w[0])
                || ns.first().is_some_and(|&n| n < 2)
            {
                errs.push(FieldError::new(
                    "degree.ns",
                    format!("need at least two increasing degrees >= 2, got {ns:?}"),
                ));
            }
        }
        _ => {}
    }

    if errs.is_empty() {
        Ok(ExperimentConfig {
            command,
            n,
            m,
            ns,
            ensemble,
            samples,
            points_per_section,
            seed,
            formula,
            grid,
            volume,
            mc,
            compare,
            format,
            defaults,
            out_dir,
        })
    } else {
        Err(ConfigErrors(errs))
    }
}
