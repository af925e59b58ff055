//! Subcommand pipelines and artifact emission.
//!
//! Every artifact `name` is accompanied by `name.prov.json` holding the
//! normalized configuration, the seed, the producing formula or pipeline and
//! the content hash of the artifact bytes. Nothing time- or host-dependent is
//! written, so equal configurations give byte-identical directories.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::json;
use sha2::{Digest, Sha256};

use super::config::{Command, ExperimentConfig, Formula, OutputFormat};
use crate::bridge::{convergence_report, laplace_bridge_fn, BridgeSpec, RateTable};
use crate::critfind::EmpiricalMeasure;
use crate::critfind::{critical_sets_csv, CritFindConfig};
use crate::densities::{
    d_inf_curve_m1, d_inf_mc, d_su2_spherical, d_su_gaussian, default_volume, su2_spherical_fn,
    uniform_grid, value_density, DensityCurve, GaussianDensitySpec, MatrixIntegralSpec,
    Su2SphericalVariant, ValueKind,
};
use crate::ensemble::{EnsembleKind, EnsembleSpec};
use crate::error::{Error, Result};
use crate::fubini::DegreeSpec;
use crate::pipeline::{critical_measures, critical_pool, value_pool, PoolCounts};
use crate::stats::{
    binwise_agreement, compare, morse_report, pool_histogram, Binning, BinwiseAgreement,
    BootstrapOptions, ComparisonReport, Histogram,
};

/// Points of a grid fitted to pooled data.
const AUTO_GRID_POINTS: usize = 400;

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutcome {
    pub artifacts: Vec<PathBuf>,
    /// `(name, passed)` for every gated comparison.
    pub checks: Vec<(String, bool)>,
}

impl RunOutcome {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.1)
    }
}

/// `sha256` of `blob <len>\0<bytes>`, the object hash git uses for file contents.
pub fn content_hash(bytes: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(format!("blob {}\0", bytes.len()).as_bytes());
    h.update(bytes);
    format!("sha256:{}", hex::encode(h.finalize()))
}

struct Writer<'a> {
    cfg: &'a ExperimentConfig,
    dir: &'a Path,
    artifacts: Vec<PathBuf>,
}

impl Writer<'_> {
    fn write(&mut self, name: &str, bytes: &[u8], producer: serde_json::Value) -> Result<()> {
        let path = self.dir.join(name);
        fs::write(&path, bytes)?;
        let prov = json!({
            "artifact": name,
            "content_hash": content_hash(bytes),
            "bytes": bytes.len(),
            "producer": producer,
            "seed": self.cfg.seed,
            "config": self.cfg,
            "tool": { "name": env!("CARGO_PKG_NAME"), "version": env!("CARGO_PKG_VERSION") },
        });
        let prov_path = self.dir.join(format!("{name}.prov.json"));
        fs::write(&prov_path, serde_json::to_string_pretty(&prov)? + "\n")?;
        self.artifacts.push(path);
        self.artifacts.push(prov_path);
        Ok(())
    }

    fn json<T: Serialize>(
        &mut self,
        name: &str,
        value: &T,
        producer: serde_json::Value,
    ) -> Result<()> {
        let text = serde_json::to_string_pretty(value)? + "\n";
        self.write(name, text.as_bytes(), producer)
    }

    fn curve(&mut self, stem: &str, c: &DensityCurve) -> Result<()> {
        let producer = json!({ "curve": c.provenance });
        match self.cfg.format {
            OutputFormat::Csv => {
                self.write(&format!("{stem}.csv"), c.to_csv().as_bytes(), producer)
            }
            OutputFormat::Json => self.json(&format!("{stem}.json"), c, producer),
        }
    }

    fn histogram(&mut self, stem: &str, h: &Histogram, pipeline: &str) -> Result<()> {
        let producer =
            json!({ "pipeline": pipeline, "binning": "freedman-diaconis, 30..200 bins" });
        match self.cfg.format {
            OutputFormat::Csv => {
                self.write(&format!("{stem}.csv"), h.to_csv().as_bytes(), producer)
            }
            OutputFormat::Json => self.json(&format!("{stem}.json"), h, producer),
        }
    }
}

fn degree(cfg: &ExperimentConfig) -> Result<DegreeSpec> {
    let n = cfg
        .n
        .ok_or_else(|| Error::InvalidArgument("degree n is required".into()))?;
    DegreeSpec::new(n, cfg.m)
}

fn gaussian_alpha(cfg: &ExperimentConfig, d: DegreeSpec) -> f64 {
    match cfg.ensemble {
        EnsembleKind::Gaussian { alpha } => alpha,
        _ => d.d_n() as f64,
    }
}

/// The analytic curve named by `formula` on `xs`.
pub fn analytic_curve(
    cfg: &ExperimentConfig,
    formula: Formula,
    n: Option<u32>,
    xs: &[f64],
) -> Result<DensityCurve> {
    let need_n = || {
        n.ok_or_else(|| {
            Error::InvalidArgument(format!("formula {} needs a degree", formula.name()))
        })
    };
    match formula {
        Formula::DInf if cfg.m == 1 => {
            d_inf_curve_m1(xs, cfg.volume.unwrap_or_else(|| default_volume(1)))
        }
        Formula::DInf => {
            let mut spec = MatrixIntegralSpec::new(cfg.m, cfg.mc.samples, cfg.mc.seed)?;
            if let Some(v) = cfg.volume {
                spec = spec.with_volume(v);
            }
            d_inf_mc(xs, &spec)
        }
        Formula::SuGaussian | Formula::SuGaussianDisplayed => {
            let n = need_n()?;
            let d = DegreeSpec::new(n, cfg.m)?;
            let spec = GaussianDensitySpec {
                alpha: Some(gaussian_alpha(cfg, d)),
                volume: cfg.volume,
                variant: formula.su_gaussian_variant().expect("gaussian formula"),
                mc_samples: cfg.mc.samples,
                mc_seed: cfg.mc.seed,
            };
            d_su_gaussian(n, cfg.m, xs, &spec)
        }
        Formula::Su2Spherical | Formula::Su2SphericalCutoff | Formula::Su2SphericalDisplayed => {
            d_su2_spherical(
                need_n()?,
                xs,
                formula.su2_spherical_variant().expect("spherical formula"),
                cfg.volume,
            )
        }
        Formula::ValueSpherical => value_density(
            ValueKind::Ensemble(EnsembleKind::Spherical),
            need_n()?,
            cfg.m,
            xs,
        ),
        Formula::ValueGaussian => {
            let kind = match cfg.ensemble {
                EnsembleKind::Spherical => EnsembleKind::NormalizedGaussian,
                k => k,
            };
            value_density(ValueKind::Ensemble(kind), need_n()?, cfg.m, xs)
        }
        Formula::ValueLimit => value_density(ValueKind::Limit, n.unwrap_or(1), cfg.m, xs),
    }
}

/// The configured grid, or `[0, 1.25 max]` of the pooled atoms.
fn data_grid(cfg: &ExperimentConfig, measures: &[EmpiricalMeasure]) -> Vec<f64> {
    match cfg.grid {
        Some(g) => g.points(),
        None => {
            let top = measures
                .iter()
                .flat_map(|m| m.values.iter().copied())
                .fold(0.0, f64::max);
            uniform_grid(0.0, 1.25 * top.max(f64::MIN_POSITIVE), AUTO_GRID_POINTS)
        }
    }
}

fn bootstrap(cfg: &ExperimentConfig) -> BootstrapOptions {
    BootstrapOptions {
        resamples: cfg.compare.bootstrap,
        level: cfg.compare.ks_level,
        seed: cfg.seed,
    }
}

#[derive(Debug, Clone, Serialize)]
struct PoolReport {
    command: &'static str,
    n: u32,
    m: u32,
    ensemble: EnsembleKind,
    samples: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pool: Option<PoolCounts>,
    #[serde(skip_serializing_if = "Option::is_none")]
    comparison: Option<ComparisonReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    binwise: Option<BinwiseAgreement>,
    passed: bool,
}

fn compare_pool(
    cfg: &ExperimentConfig,
    w: &mut Writer,
    stem: &str,
    measures: &[EmpiricalMeasure],
    checks: &mut Vec<(String, bool)>,
) -> Result<(Option<ComparisonReport>, Option<BinwiseAgreement>)> {
    let xs = data_grid(cfg, measures);
    let curve = analytic_curve(cfg, cfg.formula, cfg.n, &xs)?;
    w.curve(&format!("{stem}_curve"), &curve)?;
    let (h, report) = compare(
        measures,
        &curve,
        &Binning::FreedmanDiaconis,
        cfg.compare.l1_threshold,
        &bootstrap(cfg),
    )?;
    if cfg.compare.l1_threshold.is_some() {
        checks.push(("l1".into(), report.l1_pass));
    }
    checks.push(("ks".into(), report.ks_pass));
    let binwise = if curve.max_relative_stderr() > 0.0 {
        let b = binwise_agreement(&h, &curve, cfg.compare.k_sigma)?;
        checks.push(("binwise".into(), b.passes()));
        Some(b)
    } else {
        None
    };
    Ok((Some(report), binwise))
}

fn run_critvals(cfg: &ExperimentConfig, w: &mut Writer) -> Result<Vec<(String, bool)>> {
    let d = degree(cfg)?;
    let spec = EnsembleSpec::new(cfg.ensemble, d, cfg.seed)?;
    let crit = CritFindConfig {
        seed: cfg.seed,
        ..Default::default()
    };
    let sets = critical_pool(&spec, cfg.samples, &crit)?;
    let (measures, counts) = critical_measures(&sets);
    let pipeline = json!({ "pipeline": "sample -> multistart newton -> pool", "critfind": crit });
    w.write(
        "critvals_points.csv",
        critical_sets_csv(&sets).as_bytes(),
        pipeline.clone(),
    )?;
    let h = pool_histogram(&measures, &Binning::FreedmanDiaconis)?;
    w.histogram(
        "critvals_histogram",
        &h,
        "critical values of complete searches",
    )?;
    let mut checks = Vec::new();
    let (mut comparison, binwise) = if cfg.compare.enabled {
        compare_pool(cfg, w, "critvals", &measures, &mut checks)?
    } else {
        (None, None)
    };
    if let Some(c) = comparison.as_mut() {
        c.morse = morse_report(&sets).ok();
    }
    let report = PoolReport {
        command: "critvals",
        n: d.n(),
        m: d.m(),
        ensemble: cfg.ensemble,
        samples: cfg.samples,
        pool: Some(counts),
        comparison,
        binwise,
        passed: checks.iter().all(|c| c.1),
    };
    w.json("critvals_report.json", &report, pipeline)?;
    if counts.incomplete + counts.degenerate > 0 {
        eprintln!(
            "critvals: {} incomplete and {} degenerate searches excluded from the pool",
            counts.incomplete, counts.degenerate
        );
    }
    Ok(checks)
}

fn run_values(cfg: &ExperimentConfig, w: &mut Writer) -> Result<Vec<(String, bool)>> {
    let d = degree(cfg)?;
    let spec = EnsembleSpec::new(cfg.ensemble, d, cfg.seed)?;
    let measures = value_pool(&spec, cfg.samples, cfg.points_per_section)?;
    let h = pool_histogram(&measures, &Binning::FreedmanDiaconis)?;
    w.histogram("values_histogram", &h, "hnorm at FS-uniform points")?;
    let mut checks = Vec::new();
    let (comparison, binwise) = if cfg.compare.enabled {
        compare_pool(cfg, w, "values", &measures, &mut checks)?
    } else {
        (None, None)
    };
    let report = PoolReport {
        command: "values",
        n: d.n(),
        m: d.m(),
        ensemble: cfg.ensemble,
        samples: cfg.samples,
        pool: None,
        comparison,
        binwise,
        passed: checks.iter().all(|c| c.1),
    };
    w.json(
        "values_report.json",
        &report,
        json!({ "pipeline": "sample -> evaluate at FS-uniform points" }),
    )?;
    Ok(checks)
}

fn run_density(cfg: &ExperimentConfig, w: &mut Writer) -> Result<Vec<(String, bool)>> {
    let xs = cfg.grid.expect("density grid").points();
    let curve = analytic_curve(cfg, cfg.formula, cfg.n, &xs)?;
    w.curve("density", &curve)?;
    Ok(Vec::new())
}

#[derive(Debug, Clone, Serialize)]
struct BridgeReport {
    n: u32,
    alpha: f64,
    input: &'static str,
    max_relative_error: f64,
    window: [f64; 2],
    rel_tolerance: f64,
    passed: bool,
}

fn run_bridge(cfg: &ExperimentConfig, w: &mut Writer) -> Result<Vec<(String, bool)>> {
    let d = degree(cfg)?;
    let alpha = gaussian_alpha(cfg, d);
    let variant = cfg
        .formula
        .su2_spherical_variant()
        .unwrap_or(Su2SphericalVariant::Exact);
    let (spherical, support) = su2_spherical_fn(d.n(), variant, cfg.volume)?;
    let xs = cfg.grid.expect("bridge grid").points();
    let mut bridged = laplace_bridge_fn(spherical, support, &BridgeSpec::new(d, alpha)?, &xs)?;
    bridged.provenance.variant = Some(cfg.formula.name().into());
    w.curve("bridge", &bridged)?;
    let mut checks = Vec::new();
    if cfg.compare.enabled {
        let spec = GaussianDensitySpec {
            alpha: Some(alpha),
            volume: cfg.volume,
            ..Default::default()
        };
        let exact = d_su_gaussian(d.n(), 1, &xs, &spec)?;
        let window = [0.2, 3.0];
        let err = xs
            .iter()
            .zip(bridged.values.iter().zip(&exact.values))
            .filter(|(x, (_, b))| **x >= window[0] && **x <= window[1] && **b > 0.0)
            .map(|(_, (a, b))| (a - b).abs() / b)
            .fold(0.0, f64::max);
        let passed = err <= cfg.compare.rel_tolerance;
        checks.push(("bridge".into(), passed));
        let report = BridgeReport {
            n: d.n(),
            alpha,
            input: cfg.formula.name(),
            max_relative_error: err,
            window,
            rel_tolerance: cfg.compare.rel_tolerance,
            passed,
        };
        w.json(
            "bridge_report.json",
            &report,
            json!({ "target": exact.provenance }),
        )?;
    }
    Ok(checks)
}

#[derive(Debug, Clone, Serialize)]
struct ConvergeReport {
    formula: &'static str,
    table: RateTable,
    slope_target: f64,
    slope_tolerance: f64,
    passed: bool,
}

fn run_converge(cfg: &ExperimentConfig, w: &mut Writer) -> Result<Vec<(String, bool)>> {
    let xs = cfg.grid.expect("converge grid").points();
    let target = d_inf_curve_m1(&xs, cfg.volume.unwrap_or_else(|| default_volume(1)))?;
    let normalized = ExperimentConfig {
        ensemble: EnsembleKind::NormalizedGaussian,
        ..cfg.clone()
    };
    let table = convergence_report(
        &cfg.ns,
        |n| analytic_curve(&normalized, cfg.formula, Some(n), &xs),
        &target,
    )?;
    w.write(
        "converge.csv",
        table.to_csv().as_bytes(),
        json!({ "formula": cfg.formula.name(), "target": target.provenance }),
    )?;
    let mut checks = Vec::new();
    if cfg.compare.enabled {
        let passed = (table.slope - cfg.compare.slope_target).abs() <= cfg.compare.slope_tolerance;
        checks.push(("slope".into(), passed));
        let report = ConvergeReport {
            formula: cfg.formula.name(),
            table,
            slope_target: cfg.compare.slope_target,
            slope_tolerance: cfg.compare.slope_tolerance,
            passed,
        };
        w.json(
            "converge_report.json",
            &report,
            json!({ "formula": cfg.formula.name() }),
        )?;
    }
    Ok(checks)
}

/// Run `cfg.command`, writing artifacts to `cfg.out_dir`.
pub fn run(cfg: &ExperimentConfig) -> Result<RunOutcome> {
    fs::create_dir_all(&cfg.out_dir)?;
    let mut w = Writer {
        cfg,
        dir: &cfg.out_dir,
        artifacts: Vec::new(),
    };
    let checks = match cfg.command {
        Command::Critvals => run_critvals(cfg, &mut w)?,
        Command::Values => run_values(cfg, &mut w)?,
        Command::Density => run_density(cfg, &mut w)?,
        Command::Bridge => run_bridge(cfg, &mut w)?,
        Command::Converge => run_converge(cfg, &mut w)?,
    };
    Ok(RunOutcome {
        artifacts: w.artifacts,
        checks,
    })
}
