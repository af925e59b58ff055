//! Pooled histograms of empirical measures and their agreement with curves.
//!
//! Atoms of one section are correlated, so every resampling scheme here
//! (bootstrap and permutation) draws whole sections.

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::critfind::{CriticalSet, EmpiricalMeasure, MorseClass};
use crate::densities::DensityCurve;
use crate::error::{Error, Result};
use crate::numerics::{cumulative_trapezoid, CompensatedSum};
use crate::rng::{substream, StreamDomain};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Binning {
    /// Freedman-Diaconis width on the pooled atoms, clipped to `[30, 200]` bins.
    FreedmanDiaconis,
    /// `bins` equal bins on `[lo, hi]`.
    Uniform {
        lo: f64,
        hi: f64,
        bins: usize,
    },
    Edges(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub edges: Vec<f64>,
    /// Pooled weight per unit length per section.
    pub density: Vec<f64>,
    /// Section-level standard error of each density.
    pub stderr: Vec<f64>,
    pub counts: Vec<usize>,
    pub sections: usize,
    /// Mean atom weight.
    pub weight: f64,
    /// Atoms outside `[edges[0], edges[last]]`; they carry no density.
    pub outside: usize,
}

impl Histogram {
    pub fn bins(&self) -> usize {
        self.density.len()
    }

    pub fn width(&self, b: usize) -> f64 {
        self.edges[b + 1] - self.edges[b]
    }

    pub fn midpoint(&self, b: usize) -> f64 {
        0.5 * (self.edges[b] + self.edges[b + 1])
    }

    pub fn mass(&self) -> f64 {
        (0..self.bins())
            .map(|b| self.density[b] * self.width(b))
            .collect::<CompensatedSum>()
            .value()
    }

    /// Midpoint of the densest bin.
    pub fn mode(&self) -> f64 {
        let b = (0..self.bins())
            .max_by(|&a, &b| self.density[a].total_cmp(&self.density[b]))
            .expect("bins");
        self.midpoint(b)
    }

    /// CSV with columns `lo, hi, density, stderr, count`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("lo,hi,density,stderr,count\n");
        for b in 0..self.bins() {
            out.push_str(&format!(
                "{:.16e},{:.16e},{:.16e},{:.16e},{}\n",
                self.edges[b],
                self.edges[b + 1],
                self.density[b],
                self.stderr[b],
                self.counts[b]
            ));
        }
        out
    }
}

fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let (i, frac) = (pos.floor() as usize, pos.fract());
    if i + 1 < sorted.len() {
        sorted[i] * (1.0 - frac) + sorted[i + 1] * frac
    } else {
        sorted[i]
    }
}

fn freedman_diaconis_edges(values: &[f64]) -> Vec<f64> {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let (lo, hi) = (v[0], v[v.len() - 1]);
    let iqr = quantile(&v, 0.75) - quantile(&v, 0.25);
    let width = 2.0 * iqr * (v.len() as f64).powf(-1.0 / 3.0);
    let bins = if width > 0.0 && hi > lo {
        ((hi - lo) / width).ceil() as usize
    } else {
        30
    };
    let bins = bins.clamp(30, 200);
    let top = if hi > lo {
        hi + (hi - lo) * 1e-12
    } else {
        lo + 1.0
    };
    (0..=bins)
        .map(|i| lo + (top - lo) * i as f64 / bins as f64)
        .collect()
}

/// Histogram estimate of the expected density of the pooled measures.
pub fn pool_histogram(measures: &[EmpiricalMeasure], binning: &Binning) -> Result<Histogram> {
    let atoms: Vec<f64> = measures
        .iter()
        .flat_map(|m| m.values.iter().copied())
        .collect();
    if atoms.is_empty() {
        return Err(Error::EmptyPool(format!(
            "{} sections without atoms",
            measures.len()
        )));
    }
    let edges = match binning {
        Binning::FreedmanDiaconis => freedman_diaconis_edges(&atoms),
        Binning::Uniform { lo, hi, bins } => {
            if !(hi > lo) || *bins == 0 {
                return Err(Error::InvalidArgument(format!(
                    "bad uniform binning [{lo}, {hi}] x {bins}"
                )));
            }
            (0..=*bins)
                .map(|i| lo + (hi - lo) * i as f64 / *bins as f64)
                .collect()
        }
        Binning::Edges(e) => {
            if e.len() < 2 || e.windows(2).any(|w| w[1] <= w[0]) {
                return Err(Error::InvalidArgument(
                    "edges must be strictly increasing".into(),
                ));
            }
            e.clone()
        }
    };
    let k = edges.len() - 1;
    let s = measures.len() as f64;
    let mut counts = vec![0usize; k];
    let mut sum = vec![CompensatedSum::new(); k];
    let mut sumsq = vec![CompensatedSum::new(); k];
    let mut outside = 0;
    let mut per = vec![0usize; k];
    for m in measures {
        per.iter_mut().for_each(|c| *c = 0);
        for &v in &m.values {
            match bin_of(&edges, v) {
                Some(b) => per[b] += 1,
                None => outside += 1,
            }
        }
        for b in 0..k {
            counts[b] += per[b];
            let y = per[b] as f64 * m.weight / (edges[b + 1] - edges[b]);
            sum[b].add(y);
            sumsq[b].add(y * y);
        }
    }
    let density: Vec<f64> = sum.iter().map(|c| c.value() / s).collect();
    let stderr = (0..k)
        .map(|b| {
            if measures.len() < 2 {
                return 0.0;
            }
            let var = (sumsq[b].value() - s * density[b] * density[b]) / (s - 1.0);
            (var.max(0.0) / s).sqrt()
        })
        .collect();
    let weight = measures.iter().map(|m| m.mass()).sum::<f64>() / atoms.len() as f64;
    Ok(Histogram {
        edges,
        density,
        stderr,
        counts,
        sections: measures.len(),
        weight,
        outside,
    })
}

fn bin_of(edges: &[f64], v: f64) -> Option<usize> {
    let k = edges.len() - 1;
    if !(v >= edges[0] && v < edges[k]) {
        return None;
    }
    let i = edges.partition_point(|e| *e <= v);
    Some(i - 1)
}

fn check_coverage(h: &Histogram, c: &DensityCurve) -> Result<()> {
    let (lo, hi) = (h.edges[0], h.edges[h.edges.len() - 1]);
    let (g0, g1) = (c.grid[0], c.grid[c.grid.len() - 1]);
    // A curve that reaches zero at its right end is zero beyond it.
    let compact = c.values[c.values.len() - 1] == 0.0;
    if g0 > lo || (g1 < hi && !compact) {
        return Err(Error::CoverageGap { lo, hi });
    }
    Ok(())
}

/// `Σ_b |h_b - c(mid_b)| width_b`.
pub fn l1_distance(h: &Histogram, c: &DensityCurve) -> Result<f64> {
    check_coverage(h, c)?;
    let p = c.interpolant();
    Ok((0..h.bins())
        .map(|b| (h.density[b] - p.eval(h.midpoint(b)).unwrap_or(0.0)).abs() * h.width(b))
        .collect::<CompensatedSum>()
        .value())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BootstrapOptions {
    pub resamples: usize,
    /// Quantile of the bootstrap distribution used as threshold.
    pub level: f64,
    pub seed: u64,
}

impl Default for BootstrapOptions {
    fn default() -> Self {
        Self {
            resamples: 200,
            level: 0.95,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KsResult {
    pub ks: f64,
    pub threshold: f64,
    pub atoms: usize,
    pub sections: usize,
}

impl KsResult {
    pub fn passes(&self) -> bool {
        self.ks <= self.threshold
    }
}

/// Normalized CDF of a curve on its own grid.
struct CurveCdf {
    grid: Vec<f64>,
    cdf: Vec<f64>,
}

impl CurveCdf {
    fn new(c: &DensityCurve) -> Result<Self> {
        let cum = cumulative_trapezoid(&c.grid, &c.values);
        let total = cum[cum.len() - 1];
        if !(total > 0.0) {
            return Err(Error::InvalidArgument(
                "curve has no mass on its grid".into(),
            ));
        }
        Ok(Self {
            grid: c.grid.clone(),
            cdf: cum.iter().map(|v| v / total).collect(),
        })
    }

    /// Linear interpolation of the cumulative trapezoid.
    fn eval(&self, x: f64) -> f64 {
        if x <= self.grid[0] {
            return 0.0;
        }
        let k = self.grid.len();
        if x >= self.grid[k - 1] {
            return 1.0;
        }
        let i = self.grid.partition_point(|g| *g <= x) - 1;
        let t = (x - self.grid[i]) / (self.grid[i + 1] - self.grid[i]);
        self.cdf[i] + t * (self.cdf[i + 1] - self.cdf[i])
    }

    fn inverse(&self, u: f64) -> f64 {
        let i = self
            .cdf
            .partition_point(|c| *c < u)
            .clamp(1, self.grid.len() - 1);
        let (c0, c1) = (self.cdf[i - 1], self.cdf[i]);
        let t = if c1 > c0 { (u - c0) / (c1 - c0) } else { 0.0 };
        self.grid[i - 1] + t * (self.grid[i] - self.grid[i - 1])
    }
}

/// Atoms sorted by value with their section index.
fn sorted_atoms(measures: &[EmpiricalMeasure]) -> Vec<(f64, usize)> {
    let mut atoms: Vec<(f64, usize)> = measures
        .iter()
        .enumerate()
        .flat_map(|(s, m)| m.values.iter().map(move |&v| (v, s)))
        .collect();
    atoms.sort_by(|a, b| a.0.total_cmp(&b.0));
    atoms
}

/// Weighted empirical CDF after each sorted atom, with per-section weights.
fn weighted_cdf(atoms: &[(f64, usize)], section_weight: &[f64]) -> Vec<f64> {
    let total: f64 = atoms.iter().map(|a| section_weight[a.1]).sum();
    let mut acc = 0.0;
    atoms
        .iter()
        .map(|a| {
            acc += section_weight[a.1];
            acc / total
        })
        .collect()
}

/// Sup distance between two step CDFs with common jump points; ties are
/// evaluated after the last atom of equal value.
fn sup_step_distance(atoms: &[(f64, usize)], a: &[f64], b: &[f64]) -> f64 {
    let mut best = 0.0f64;
    for i in 0..atoms.len() {
        if i + 1 < atoms.len() && atoms[i + 1].0 == atoms[i].0 {
            continue;
        }
        best = best.max((a[i] - b[i]).abs());
    }
    best
}

fn multinomial_section_weights<R: Rng + ?Sized>(sections: usize, rng: &mut R) -> Vec<f64> {
    let mut w = vec![0.0; sections];
    for _ in 0..sections {
        w[rng.random_range(0..sections)] += 1.0;
    }
    w
}

/// `sup |F_emp - F_c|` with `F_c` the curve's normalized CDF, and the
/// `level` quantile of the section bootstrap of `sup |F*_emp - F_emp|`.
pub fn ks_statistic(
    measures: &[EmpiricalMeasure],
    c: &DensityCurve,
    opts: &BootstrapOptions,
) -> Result<KsResult> {
    let atoms = sorted_atoms(measures);
    if atoms.is_empty() {
        return Err(Error::EmptyPool("no atoms for KS".into()));
    }
    let cdf = CurveCdf::new(c)?;
    let ones = vec![1.0; measures.len()];
    let emp = weighted_cdf(&atoms, &ones);
    let mut ks = 0.0f64;
    let mut prev = 0.0;
    for (i, a) in atoms.iter().enumerate() {
        let f = cdf.eval(a.0);
        ks = ks.max((f - prev).abs());
        if i + 1 == atoms.len() || atoms[i + 1].0 != a.0 {
            ks = ks.max((emp[i] - f).abs());
            prev = emp[i];
        }
    }
    let mut stats: Vec<f64> = (0..opts.resamples)
        .into_par_iter()
        .map(|b| {
            let mut rng = substream(opts.seed, StreamDomain::Bootstrap, b as u64);
            let w = multinomial_section_weights(measures.len(), &mut rng);
            if w.iter()
                .zip(measures)
                .all(|(w, m)| *w == 0.0 || m.values.is_empty())
            {
                return 1.0;
            }
            sup_step_distance(&atoms, &weighted_cdf(&atoms, &w), &emp)
        })
        .collect();
    stats.sort_by(f64::total_cmp);
    Ok(KsResult {
        ks,
        threshold: quantile(&stats, opts.level),
        atoms: atoms.len(),
        sections: measures.len(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TwoSampleKs {
    pub ks: f64,
    /// `level` quantile of the statistic under random relabelling of sections.
    pub threshold: f64,
}

impl TwoSampleKs {
    pub fn passes(&self) -> bool {
        self.ks <= self.threshold
    }
}

/// Two-sample KS between pools `a` and `b` with a section-permutation threshold.
pub fn two_sample_ks(
    a: &[EmpiricalMeasure],
    b: &[EmpiricalMeasure],
    opts: &BootstrapOptions,
) -> Result<TwoSampleKs> {
    let pooled: Vec<EmpiricalMeasure> = a.iter().chain(b).cloned().collect();
    let atoms = sorted_atoms(&pooled);
    if atoms.is_empty() {
        return Err(Error::EmptyPool("no atoms for two-sample KS".into()));
    }
    let stat = |in_a: &[bool]| -> f64 {
        let wa: Vec<f64> = in_a.iter().map(|&x| if x { 1.0 } else { 0.0 }).collect();
        let wb: Vec<f64> = in_a.iter().map(|&x| if x { 0.0 } else { 1.0 }).collect();
        sup_step_distance(
            &atoms,
            &weighted_cdf(&atoms, &wa),
            &weighted_cdf(&atoms, &wb),
        )
    };
    let labels: Vec<bool> = (0..pooled.len()).map(|i| i < a.len()).collect();
    let ks = stat(&labels);
    let mut stats: Vec<f64> = (0..opts.resamples)
        .into_par_iter()
        .map(|r| {
            let mut rng = substream(opts.seed, StreamDomain::Bootstrap, r as u64);
            let mut l = labels.clone();
            l.shuffle(&mut rng);
            stat(&l)
        })
        .collect();
    stats.sort_by(f64::total_cmp);
    Ok(TwoSampleKs {
        ks,
        threshold: quantile(&stats, opts.level),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MassEstimate {
    pub mean: f64,
    pub stderr: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
}

impl MassEstimate {
    pub fn ci_width(&self) -> f64 {
        self.ci_hi - self.ci_lo
    }
}

/// Pooled mass `Σ atoms·weight / sections` with a section-bootstrap
/// percentile interval at `opts.level`.
pub fn mass_estimate(
    measures: &[EmpiricalMeasure],
    opts: &BootstrapOptions,
) -> Result<MassEstimate> {
    if measures.is_empty() {
        return Err(Error::EmptyPool("no sections".into()));
    }
    let per: Vec<f64> = measures.iter().map(|m| m.mass()).collect();
    let s = per.len() as f64;
    let mean = per.iter().sum::<f64>() / s;
    let var = if per.len() > 1 {
        per.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (s - 1.0)
    } else {
        0.0
    };
    let mut boots: Vec<f64> = (0..opts.resamples)
        .into_par_iter()
        .map(|b| {
            let mut rng = substream(opts.seed, StreamDomain::Bootstrap, b as u64);
            (0..per.len())
                .map(|_| per[rng.random_range(0..per.len())])
                .sum::<f64>()
                / s
        })
        .collect();
    boots.sort_by(f64::total_cmp);
    let tail = 0.5 * (1.0 - opts.level);
    Ok(MassEstimate {
        mean,
        stderr: (var / s).sqrt(),
        ci_lo: quantile(&boots, tail),
        ci_hi: quantile(&boots, 1.0 - tail),
    })
}

/// Curve average over one bin, by Gauss-Legendre on the interpolant.
fn bin_average(p: &crate::numerics::Pchip, lo: f64, hi: f64) -> f64 {
    let (xs, ws) = crate::numerics::composite_gauss_legendre(lo, hi, 1, 8);
    xs.iter()
        .zip(&ws)
        .map(|(x, w)| w * p.eval(*x).unwrap_or(0.0))
        .sum::<f64>()
        / (hi - lo)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinwiseAgreement {
    /// Largest `|h_b - c_b| / sqrt(se_h^2 + se_c^2)` over bins.
    pub worst_z: f64,
    pub failing_bins: Vec<usize>,
    pub bins: usize,
    pub k_sigma: f64,
}

impl BinwiseAgreement {
    pub fn passes(&self) -> bool {
        self.failing_bins.is_empty()
    }
}

/// Compare each bin to the bin-averaged curve within `k_sigma` combined
/// standard errors (histogram SE and the curve's own stderr).
///
/// The histogram SE of a bin is at least the counting error implied by the
/// curve, `sqrt(c_b w / (width S))`; the section estimate alone is zero for
/// empty tail bins.
pub fn binwise_agreement(
    h: &Histogram,
    c: &DensityCurve,
    k_sigma: f64,
) -> Result<BinwiseAgreement> {
    check_coverage(h, c)?;
    let p = c.interpolant();
    let pe = crate::numerics::Pchip::new(&c.grid, &c.stderr);
    let mut worst = 0.0f64;
    let mut failing = Vec::new();
    for b in 0..h.bins() {
        let (lo, hi) = (h.edges[b], h.edges[b + 1]);
        let cv = bin_average(&p, lo, hi);
        let ce = bin_average(&pe, lo, hi).max(0.0);
        let counting = (cv.max(0.0) * h.weight / ((hi - lo) * h.sections as f64)).sqrt();
        let se = (h.stderr[b].max(counting).powi(2) + ce * ce).sqrt();
        let diff = (h.density[b] - cv).abs();
        let z = if se > 0.0 {
            diff / se
        } else if diff == 0.0 {
            0.0
        } else {
            f64::INFINITY
        };
        worst = worst.max(z);
        if z > k_sigma {
            failing.push(b);
        }
    }
    Ok(BinwiseAgreement {
        worst_z: worst,
        failing_bins: failing,
        bins: h.bins(),
        k_sigma,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassMean {
    pub mean: f64,
    pub stderr: f64,
}

impl ClassMean {
    fn of(xs: &[f64]) -> Self {
        let k = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / k;
        let var = if xs.len() > 1 {
            xs.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (k - 1.0)
        } else {
            0.0
        };
        Self {
            mean,
            stderr: (var / k).sqrt(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MorseReport {
    pub n: u32,
    pub m: u32,
    pub sections: usize,
    pub excluded: usize,
    /// Per-section counts divided by `n^m`.
    pub total: ClassMean,
    pub saddle: ClassMean,
    pub max: ClassMean,
    pub saddle_fraction: f64,
    pub max_fraction: f64,
    /// Points of index below `m` with nonzero value (local minima for `m = 1`).
    pub low_index: usize,
    pub degenerate: usize,
    /// Asymptotic references `4/3` and `1/3` (meaningful for `m = 1`).
    pub saddle_reference: f64,
    pub max_reference: f64,
}

/// Per-class counts over complete critical sets.
pub fn morse_report(sets: &[CriticalSet]) -> Result<MorseReport> {
    let complete: Vec<&CriticalSet> = sets.iter().filter(|s| s.is_complete()).collect();
    if complete.is_empty() {
        return Err(Error::EmptyPool("no complete critical sets".into()));
    }
    let degree = complete[0].degree;
    let norm = (degree.n() as f64).powi(degree.m() as i32);
    let per = |f: &dyn Fn(&CriticalSet) -> usize| -> Vec<f64> {
        complete.iter().map(|s| f(s) as f64 / norm).collect()
    };
    let total = per(&|s| s.points.len());
    let saddle = per(&|s| s.saddle_count());
    let max = per(&|s| s.max_count());
    let all: f64 = total.iter().sum();
    let count = |pred: &dyn Fn(&MorseClass) -> bool| -> usize {
        complete
            .iter()
            .flat_map(|s| &s.points)
            .filter(|p| pred(&p.morse_class))
            .count()
    };
    Ok(MorseReport {
        n: degree.n(),
        m: degree.m(),
        sections: complete.len(),
        excluded: sets.len() - complete.len(),
        total: ClassMean::of(&total),
        saddle: ClassMean::of(&saddle),
        max: ClassMean::of(&max),
        saddle_fraction: saddle.iter().sum::<f64>() / all,
        max_fraction: max.iter().sum::<f64>() / all,
        low_index: count(&|c| matches!(c, MorseClass::LowIndex(_))),
        degenerate: count(&|c| *c == MorseClass::Degenerate),
        saddle_reference: 4.0 / 3.0,
        max_reference: 1.0 / 3.0,
    })
}

/// Thresholds used by a comparison, recorded next to the statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdProvenance {
    /// `None` when L1 is reported but not gated.
    pub l1_threshold: Option<f64>,
    pub bins: String,
    pub ks_level: f64,
    pub bootstrap_resamples: usize,
    pub bootstrap_seed: u64,
    pub resampling_unit: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub curve: String,
    pub l1: f64,
    pub ks: f64,
    pub ks_threshold: f64,
    pub mass_emp: f64,
    pub mass_emp_stderr: f64,
    pub mass_analytic: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub morse: Option<MorseReport>,
    pub thresholds: ThresholdProvenance,
    pub l1_pass: bool,
    pub ks_pass: bool,
}

impl ComparisonReport {
    pub fn passes(&self) -> bool {
        self.l1_pass && self.ks_pass
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Histogram, L1, KS and mass comparison of pooled measures against a curve.
pub fn compare(
    measures: &[EmpiricalMeasure],
    curve: &DensityCurve,
    binning: &Binning,
    l1_threshold: Option<f64>,
    opts: &BootstrapOptions,
) -> Result<(Histogram, ComparisonReport)> {
    let h = pool_histogram(measures, binning)?;
    let l1 = l1_distance(&h, curve)?;
    let ks = ks_statistic(measures, curve, opts)?;
    let mass = mass_estimate(measures, opts)?;
    let report = ComparisonReport {
        curve: curve.provenance.formula.clone(),
        l1,
        ks: ks.ks,
        ks_threshold: ks.threshold,
        mass_emp: mass.mean,
        mass_emp_stderr: mass.stderr,
        mass_analytic: curve.mass,
        morse: None,
        thresholds: ThresholdProvenance {
            l1_threshold,
            bins: format!("{binning:?}"),
            ks_level: opts.level,
            bootstrap_resamples: opts.resamples,
            bootstrap_seed: opts.seed,
            resampling_unit: "section".into(),
        },
        l1_pass: l1_threshold.is_none_or(|t| l1 <= t),
        ks_pass: ks.passes(),
    };
    Ok((h, report))
}

/// `sections` synthetic measures of `atoms` inverse-CDF draws from `c`.
pub fn synthetic_measures(
    c: &DensityCurve,
    sections: usize,
    atoms: usize,
    weight: f64,
    seed: u64,
) -> Result<Vec<EmpiricalMeasure>> {
    let cdf = CurveCdf::new(c)?;
    Ok((0..sections)
        .map(|s| {
            let mut rng = substream(seed, StreamDomain::Synthetic, s as u64);
            let values = (0..atoms)
                .map(|_| cdf.inverse(rng.random::<f64>()))
                .collect();
            EmpiricalMeasure {
                values,
                weight,
                sample_id: s as u64,
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::densities::{uniform_grid, Provenance};

    fn measure(values: Vec<f64>, weight: f64, id: u64) -> EmpiricalMeasure {
        EmpiricalMeasure {
            values,
            weight,
            sample_id: id,
        }
    }

    fn rayleigh() -> DensityCurve {
        let g = uniform_grid(0.0, 6.0, 3001);
        let v = g.iter().map(|x| 2.0 * x * (-x * x).exp()).collect();
        DensityCurve::from_samples(
            g,
            v,
            Provenance {
                formula: "rayleigh".into(),
                ..Default::default()
            },
        )
        .unwrap()
    }

    #[test]
    fn single_atom_density() {
        let h = pool_histogram(
            &[measure(vec![0.5], 0.25, 0)],
            &Binning::Edges(vec![0.0, 2.0]),
        )
        .unwrap();
        assert_eq!(h.density[0], 0.25 / 2.0);
    }

    #[test]
    fn histogram_mass_is_conserved() {
        let ms = synthetic_measures(&rayleigh(), 50, 7, 1.0 / 30.0, 1).unwrap();
        let h = pool_histogram(&ms, &Binning::FreedmanDiaconis).unwrap();
        assert!(h.bins() >= 30 && h.bins() <= 200);
        assert_eq!(h.outside, 0);
        let pooled: f64 = ms.iter().map(|m| m.mass()).sum::<f64>() / ms.len() as f64;
        assert!((h.mass() - pooled).abs() < 1e-12);
    }

    #[test]
    fn empty_pool_is_rejected() {
        assert!(pool_histogram(&[measure(vec![], 1.0, 0)], &Binning::FreedmanDiaconis).is_err());
    }

    #[test]
    fn l1_examples() {
        let c = rayleigh();
        let ms = synthetic_measures(&c, 20, 10, 1.0, 4).unwrap();
        let h = pool_histogram(
            &ms,
            &Binning::Uniform {
                lo: 0.0,
                hi: 3.0,
                bins: 30,
            },
        )
        .unwrap();
        let zero = DensityCurve::from_samples(
            c.grid.clone(),
            vec![0.0; c.grid.len()],
            Provenance::default(),
        )
        .unwrap();
        assert!((l1_distance(&h, &zero).unwrap() - h.mass()).abs() < 1e-12);
        let narrow = DensityCurve::from_samples(
            uniform_grid(0.5, 3.0, 10),
            vec![1.0; 10],
            Provenance::default(),
        )
        .unwrap();
        assert!(matches!(
            l1_distance(&h, &narrow),
            Err(Error::CoverageGap { .. })
        ));
    }

    #[test]
    fn l1_of_identical_step_is_zero() {
        let edges = vec![0.0, 1.0, 2.0];
        let ms = vec![measure(vec![0.5, 1.5], 1.0, 0)];
        let h = pool_histogram(&ms, &Binning::Edges(edges)).unwrap();
        let c = DensityCurve::from_samples(
            vec![0.0, 0.5, 1.5, 2.0],
            vec![1.0; 4],
            Provenance::default(),
        )
        .unwrap();
        assert_eq!(l1_distance(&h, &c).unwrap(), 0.0);
    }

    #[test]
    fn point_mass_gives_large_ks() {
        let c = rayleigh();
        let ms: Vec<_> = (0..10).map(|i| measure(vec![3.0; 5], 1.0, i)).collect();
        let r = ks_statistic(&ms, &c, &BootstrapOptions::default()).unwrap();
        assert!(r.ks > 0.99 && !r.passes());
    }

    #[test]
    fn ks_bootstrap_is_calibrated() {
        let c = rayleigh();
        let trials = 200;
        let rejections = (0..trials)
            .filter(|&t| {
                let ms = synthetic_measures(&c, 60, 8, 1.0, 1000 + t).unwrap();
                let opts = BootstrapOptions {
                    seed: t,
                    ..Default::default()
                };
                !ks_statistic(&ms, &c, &opts).unwrap().passes()
            })
            .count();
        assert!(
            rejections as f64 / trials as f64 <= 0.07,
            "rejection rate {rejections}/{trials}"
        );
    }

    #[test]
    fn mass_interval_narrows_as_root_n() {
        let c = rayleigh();
        let opts = BootstrapOptions {
            resamples: 400,
            ..Default::default()
        };
        // Variable atom counts so that the per-section mass varies.
        let make = |k: usize| -> Vec<EmpiricalMeasure> {
            synthetic_measures(&c, k, 1, 1.0, 3)
                .unwrap()
                .into_iter()
                .map(|m| {
                    let reps = 1 + (m.values[0] * 4.0) as usize;
                    measure(vec![m.values[0]; reps], 0.1, m.sample_id)
                })
                .collect()
        };
        let w1 = mass_estimate(&make(500), &opts).unwrap().ci_width();
        let w4 = mass_estimate(&make(2000), &opts).unwrap().ci_width();
        let r = w4 / w1;
        assert!((0.4..=0.6).contains(&r), "ratio {r}");
    }

    #[test]
    fn two_sample_ks_accepts_same_law_and_rejects_shift() {
        let c = rayleigh();
        let a = synthetic_measures(&c, 100, 5, 1.0, 1).unwrap();
        let b = synthetic_measures(&c, 100, 5, 1.0, 2).unwrap();
        let opts = BootstrapOptions {
            level: 0.99,
            ..Default::default()
        };
        assert!(two_sample_ks(&a, &b, &opts).unwrap().passes());
        let shifted: Vec<_> = b
            .iter()
            .map(|m| {
                measure(
                    m.values.iter().map(|v| v * 1.3).collect(),
                    m.weight,
                    m.sample_id,
                )
            })
            .collect();
        assert!(!two_sample_ks(&a, &shifted, &opts).unwrap().passes());
    }

    #[test]
    fn binwise_agreement_on_synthetic_data() {
        let c = rayleigh();
        let ms = synthetic_measures(&c, 400, 10, 0.1, 8).unwrap();
        let h = pool_histogram(
            &ms,
            &Binning::Uniform {
                lo: 0.0,
                hi: 3.0,
                bins: 20,
            },
        )
        .unwrap();
        let r = binwise_agreement(&h, &c, 4.0).unwrap();
        assert!(r.passes(), "worst z {}", r.worst_z);
    }
}
