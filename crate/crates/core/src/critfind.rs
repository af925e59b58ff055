//! Critical points of `|s|_{h^n}` on CP^m.
//!
//! A critical point solves `g = ∂f - n f ∂φ = 0` in some chart. Points are
//! located by damped Newton on the real `2m`-dimensional system from
//! Fubini-Study-uniform seeds, deduplicated in FS distance, and classified by
//! the inertia of the real Hessian of `log |s|^2_{h^n}`.
//!
//! Residuals are measured in the FS-invariant norm of `q = g e^{-nφ/2}` and
//! divided by `sqrt(n) ‖s‖`, making them independent of chart and of scale.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ensemble::{LocalJet, Section, SectionEvaluator};
use crate::error::{Error, Result};
use crate::fubini::{fs_distance, fs_uniform_point, ChartPoint, DegreeSpec};
use crate::rng::{digest64, substream, StreamDomain};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MorseClass {
    /// Index `q` in `m..2m`.
    Saddle(u32),
    LocalMax,
    /// Some Hessian eigenvalue is below the degeneracy threshold.
    Degenerate,
    /// Index below `m`; never occurs at a nonzero critical value of a
    /// positive bundle and is kept only so that a violation is visible.
    LowIndex(u32),
}

impl MorseClass {
    pub fn label(&self) -> String {
        match self {
            MorseClass::Saddle(q) => format!("saddle({q})"),
            MorseClass::LocalMax => "local_max".into(),
            MorseClass::Degenerate => "degenerate".into(),
            MorseClass::LowIndex(q) => format!("low_index({q})"),
        }
    }

    /// Morse index, `None` when degenerate.
    pub fn index(&self, m: u32) -> Option<u32> {
        match *self {
            MorseClass::Saddle(q) | MorseClass::LowIndex(q) => Some(q),
            MorseClass::LocalMax => Some(2 * m),
            MorseClass::Degenerate => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriticalPoint {
    pub location: ChartPoint,
    /// `|s|_{h^n}` at the point.
    pub value: f64,
    pub morse_class: MorseClass,
    /// Scaled residual, recomputed with double-double accumulation.
    pub residual: f64,
    pub iterations: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NewtonOptions {
    pub tol: f64,
    pub max_iter: usize,
    /// Relative `σ_min / σ_max` of the real Jacobian below which a point is
    /// treated as degenerate.
    pub degeneracy_threshold: f64,
}

impl Default for NewtonOptions {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            max_iter: 60,
            degeneracy_threshold: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum RefineError {
    NoConvergence {
        iterations: usize,
        residual: f64,
    },
    /// Stalled at a small residual with a numerically singular Jacobian.
    Singular {
        point: ChartPoint,
        residual: f64,
    },
    NonFinite,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CritFindConfig {
    /// FS-uniform seeds per chart and round: `ceil(seed_factor * n^m)`.
    pub seed_factor: f64,
    /// Add a deterministic chart grid to the first round (`m >= 2` only).
    pub grid: bool,
    pub newton: NewtonOptions,
    pub dedup_radius: f64,
    /// Converged points with value below this multiple of the largest seed
    /// `hnorm` are zeros of `s` and are discarded.
    pub zero_threshold: f64,
    /// Consecutive rounds without a new point required to stop.
    pub stable_rounds: usize,
    pub max_rounds: usize,
    /// Require the Morse-Euler identity before stopping.
    pub euler_check: bool,
    pub seed: u64,
}

impl Default for CritFindConfig {
    fn default() -> Self {
        Self {
            seed_factor: 10.0,
            grid: true,
            newton: NewtonOptions::default(),
            dedup_radius: 1e-6,
            zero_threshold: 1e-8,
            stable_rounds: 2,
            max_rounds: 12,
            euler_check: true,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SearchStatus {
    Complete,
    /// Round budget exhausted before the count stabilized.
    Incomplete,
    /// Non-isolated or degenerate critical points detected.
    Degenerate,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SearchDiagnostics {
    pub rounds: usize,
    pub seeds: usize,
    pub converged: usize,
    pub duplicates_merged: usize,
    pub zero_discards: usize,
    pub failures: usize,
    pub singular_failures: usize,
    /// `Σ_q (-1)^q N_q` over the located points.
    pub euler_sum: i64,
    /// `(1 - (1-n)^{m+1}) / n`.
    pub euler_expected: i64,
    /// Good-Turing estimate of the fraction of critical points not yet hit:
    /// points hit by exactly one seed over all converged hits.
    pub unseen_estimate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriticalSet {
    pub degree: DegreeSpec,
    pub sample_id: u64,
    pub points: Vec<CriticalPoint>,
    pub status: SearchStatus,
    pub diagnostics: SearchDiagnostics,
}

impl CriticalSet {
    pub fn is_complete(&self) -> bool {
        self.status == SearchStatus::Complete
    }

    pub fn count(&self, class: MorseClass) -> usize {
        self.points
            .iter()
            .filter(|p| p.morse_class == class)
            .count()
    }

    pub fn saddle_count(&self) -> usize {
        self.points
            .iter()
            .filter(|p| matches!(p.morse_class, MorseClass::Saddle(_)))
            .count()
    }

    pub fn max_count(&self) -> usize {
        self.count(MorseClass::LocalMax)
    }

    /// Sorted critical values.
    pub fn sorted_values(&self) -> Vec<f64> {
        let mut v: Vec<f64> = self.points.iter().map(|p| p.value).collect();
        v.sort_by(f64::total_cmp);
        v
    }
}

/// Nonzero critical values of one section, each carrying weight `1/n^m`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalMeasure {
    pub values: Vec<f64>,
    pub weight: f64,
    pub sample_id: u64,
}

impl EmpiricalMeasure {
    pub fn mass(&self) -> f64 {
        self.values.len() as f64 * self.weight
    }
}

/// `(1 - (1-n)^{m+1}) / n`, the alternating count of nonzero critical points
/// of a Morse section with simple zeros.
pub fn euler_expected(n: u32, m: u32) -> i64 {
    let a = 1i128 - n as i128;
    ((1 - a.pow(m + 1)) / n as i128) as i64
}

/// FS norm of a covector `q` at `z`: `w (‖q‖^2 + |Σ z_i q_i|^2)`, square-rooted.
fn fs_covector_norm(z: &[Complex64], q: &[Complex64]) -> f64 {
    let w = 1.0 + z.iter().map(|c| c.norm_sqr()).sum::<f64>();
    let q2: f64 = q.iter().map(|c| c.norm_sqr()).sum();
    let dot: Complex64 = z.iter().zip(q).map(|(a, b)| a * b).sum();
    (w * (q2 + dot.norm_sqr())).sqrt()
}

fn residual_scale(ev: &SectionEvaluator) -> f64 {
    (ev.degree().n() as f64).sqrt() * ev.l2()
}

/// Scaled covariant gradient `q = (∂f - n f ∂φ) e^{-nφ/2}` at `p`, unscaled.
pub fn residual(s: &Section, p: &ChartPoint) -> Result<Vec<Complex64>> {
    let ev = SectionEvaluator::new(s);
    if p.dim() != s.degree().m() as usize {
        return Err(Error::InvalidChart {
            chart: p.chart,
            m: p.dim(),
        });
    }
    let jet = ev.local_jet(p, false);
    let sc = jet.log_scale.exp();
    let q: Vec<Complex64> = jet
        .connection_gradient(ev.degree().n())
        .iter()
        .map(|g| g * sc)
        .collect();
    if q.iter().any(|c| !c.re.is_finite() || !c.im.is_finite()) {
        return Err(Error::NonFinite(format!("residual at {p:?}")));
    }
    Ok(q)
}

/// Scale- and chart-invariant residual `‖q‖_FS / (sqrt(n) ‖s‖)`.
pub fn scaled_residual(ev: &SectionEvaluator, jet: &LocalJet) -> f64 {
    let g = jet.connection_gradient(ev.degree().n());
    fs_covector_norm(&jet.point.coords, &g) * jet.log_scale.exp() / residual_scale(ev)
}

/// Scaled residual with `f` and `∂f` accumulated in double-double.
pub fn certified_residual(ev: &SectionEvaluator, p: &ChartPoint) -> f64 {
    let n = ev.degree().n() as f64;
    let (f, df) = ev.accurate_value_and_gradient(p);
    let w = 1.0 + p.norm_sq();
    let g: Vec<Complex64> = df
        .iter()
        .zip(&p.coords)
        .map(|(d, z)| d - z.conj() * f * (n / w))
        .collect();
    let log_scale = ev.log_offset() - 0.5 * n * w.ln();
    fs_covector_norm(&p.coords, &g) * log_scale.exp() / residual_scale(ev)
}

/// Real `2m x 2m` Jacobian of `(Re g, Im g)` with respect to `(Re z, Im z)`.
fn real_jacobian(n: u32, jet: &LocalJet) -> DMatrix<f64> {
    jacobian_with_weight(n, jet, false)
}

/// With `weighted`, the Jacobian of `g w^{-n/2}` (up to the positive factor
/// `w^{-n/2}`); it coincides with that of `g` on the solution set.
fn jacobian_with_weight(n: u32, jet: &LocalJet, weighted: bool) -> DMatrix<f64> {
    let z = &jet.point.coords;
    let m = z.len();
    let nf = n as f64;
    let w = jet.w;
    let d2 = jet.d2f.as_ref().expect("second derivatives requested");
    let g = jet.connection_gradient(n);
    let half = if weighted { 0.5 * nf / w } else { 0.0 };
    let a = DMatrix::from_fn(m, m, |i, k| {
        d2[(i, k)] - z[i].conj() * jet.df[k] * (nf / w)
            + z[i].conj() * z[k].conj() * jet.f * (nf / (w * w))
            - g[i] * z[k].conj() * half
    });
    let b = DMatrix::from_fn(m, m, |i, k| {
        let delta = if i == k { 1.0 / w } else { 0.0 };
        -jet.f * nf * (Complex64::new(delta, 0.0) - z[i].conj() * z[k] / (w * w))
            - g[i] * z[k] * half
    });
    let mut j = DMatrix::zeros(2 * m, 2 * m);
    for i in 0..m {
        for k in 0..m {
            let s = a[(i, k)] + b[(i, k)];
            let d = a[(i, k)] - b[(i, k)];
            j[(i, k)] = s.re;
            j[(i, k + m)] = -d.im;
            j[(i + m, k)] = s.im;
            j[(i + m, k + m)] = d.re;
        }
    }
    j
}

fn condition_ratio(j: &DMatrix<f64>) -> f64 {
    let sv = j.clone().svd(false, false).singular_values;
    let max = sv.max();
    if max == 0.0 {
        0.0
    } else {
        sv.min() / max
    }
}

struct NewtonState {
    jet: LocalJet,
    res: f64,
}

fn state_at(ev: &SectionEvaluator, p: &ChartPoint) -> Option<NewtonState> {
    let jet = ev.local_jet(p, true);
    let res = scaled_residual(ev, &jet);
    res.is_finite().then_some(NewtonState { jet, res })
}

fn newton_step(n: u32, st: &NewtonState) -> Option<Vec<Complex64>> {
    let m = st.jet.point.dim();
    let g = st.jet.connection_gradient(n);
    let j = jacobian_with_weight(n, &st.jet, true);
    let rhs = DVector::from_fn(2 * m, |i, _| if i < m { -g[i].re } else { -g[i - m].im });
    let x = match j.clone().lu().solve(&rhs) {
        Some(x) if x.iter().all(|v| v.is_finite()) => x,
        _ => {
            let svd = j.svd(true, true);
            let eps = 1e-14 * svd.singular_values.max();
            svd.solve(&rhs, eps).ok()?
        }
    };
    let step: Vec<Complex64> = (0..m).map(|i| Complex64::new(x[i], x[i + m])).collect();
    step.iter()
        .all(|c| c.re.is_finite() && c.im.is_finite())
        .then_some(step)
}

fn shifted(p: &ChartPoint, step: &[Complex64], t: f64) -> ChartPoint {
    let coords = p.coords.iter().zip(step).map(|(z, d)| z + d * t).collect();
    ChartPoint {
        chart: p.chart,
        coords,
    }
}

/// Damped Newton from `seed`; on success the returned point is polished by
/// one extra step, classified and certified.
pub fn newton_refine(
    s: &Section,
    seed: &ChartPoint,
    opts: &NewtonOptions,
) -> std::result::Result<CriticalPoint, RefineError> {
    newton_refine_with(&SectionEvaluator::new(s), seed, opts)
}

pub fn newton_refine_with(
    ev: &SectionEvaluator,
    seed: &ChartPoint,
    opts: &NewtonOptions,
) -> std::result::Result<CriticalPoint, RefineError> {
    let (point, iterations) = refine_location(ev, seed, opts)?;
    Ok(finish_point(ev, point, iterations, opts))
}

/// Classify and certify a converged location.
fn finish_point(
    ev: &SectionEvaluator,
    point: ChartPoint,
    iterations: usize,
    opts: &NewtonOptions,
) -> CriticalPoint {
    let n = ev.degree().n();
    let jet = ev.local_jet(&point, true);
    let cond = condition_ratio(&real_jacobian(n, &jet));
    let morse_class = if cond < opts.degeneracy_threshold {
        MorseClass::Degenerate
    } else {
        classify_jet(n, &jet, opts.degeneracy_threshold)
    };
    let residual = certified_residual(ev, &point);
    CriticalPoint {
        location: point,
        value: jet.hnorm(),
        morse_class,
        residual,
        iterations,
    }
}

/// Newton iteration proper: converged location in its best chart and the
/// iteration count.
fn refine_location(
    ev: &SectionEvaluator,
    seed: &ChartPoint,
    opts: &NewtonOptions,
) -> std::result::Result<(ChartPoint, usize), RefineError> {
    let n = ev.degree().n();
    let mut st = state_at(ev, &seed.to_best_chart()).ok_or(RefineError::NonFinite)?;
    let mut iterations = 0;
    let mut slow = 0;
    while st.res > opts.tol {
        if iterations == opts.max_iter || slow >= 8 {
            return Err(RefineError::NoConvergence {
                iterations,
                residual: st.res,
            });
        }
        iterations += 1;
        let step = newton_step(n, &st).ok_or(RefineError::NonFinite)?;
        let len = step.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
        let mut t = if len > 0.5 { 0.5 / len } else { 1.0 };
        let mut accepted = None;
        for _ in 0..40 {
            if let Some(trial) = state_at(ev, &shifted(&st.jet.point, &step, t)) {
                if trial.res < st.res {
                    accepted = Some(trial);
                    break;
                }
            }
            t *= 0.5;
        }
        match accepted {
            Some(next) => {
                // Damped steps that barely reduce the residual signal a seed
                // wandering between basins.
                slow = if next.res > 0.9 * st.res { slow + 1 } else { 0 };
                st = if next.jet.point.coords.iter().any(|c| c.norm() > 1.0) {
                    state_at(ev, &next.jet.point.to_best_chart()).ok_or(RefineError::NonFinite)?
                } else {
                    next
                };
            }
            None => {
                let j = real_jacobian(n, &st.jet);
                if st.res < 1e-6 && condition_ratio(&j) < 1e-6 {
                    return Err(RefineError::Singular {
                        point: st.jet.point.clone(),
                        residual: st.res,
                    });
                }
                return Err(RefineError::NoConvergence {
                    iterations,
                    residual: st.res,
                });
            }
        }
    }
    if iterations == 0 {
        iterations = 1;
    }
    // Polish: one more full step, kept only if it does not increase the residual.
    if let Some(step) = newton_step(n, &st) {
        if let Some(trial) = state_at(ev, &shifted(&st.jet.point, &step, 1.0)) {
            if trial.res <= st.res && trial.jet.point.coords.iter().all(|c| c.norm() <= 1.5) {
                st = trial;
            }
        }
    }
    Ok((st.jet.point.to_best_chart(), iterations))
}

/// Real Hessian of `log|s|^2_{h^n}` in `(Re z, Im z)` coordinates, halved.
fn log_hessian(n: u32, jet: &LocalJet) -> DMatrix<f64> {
    let z = &jet.point.coords;
    let m = z.len();
    let nf = n as f64;
    let w = jet.w;
    let d2 = jet.d2f.as_ref().expect("second derivatives requested");
    let f = jet.f;
    let h = DMatrix::from_fn(m, m, |i, k| {
        d2[(i, k)] / f - jet.df[i] * jet.df[k] / (f * f)
            + z[i].conj() * z[k].conj() * (nf / (w * w))
    });
    let kk = DMatrix::from_fn(m, m, |i, k| {
        let delta = if i == k { 1.0 / w } else { 0.0 };
        -(Complex64::new(delta, 0.0) - z[i].conj() * z[k] / (w * w)) * nf
    });
    let mut out = DMatrix::zeros(2 * m, 2 * m);
    for i in 0..m {
        for k in 0..m {
            let (hv, kv) = (h[(i, k)], kk[(i, k)]);
            out[(i, k)] = hv.re + kv.re;
            out[(i, k + m)] = kv.im - hv.im;
            out[(k + m, i)] = kv.im - hv.im;
            out[(i + m, k + m)] = kv.re - hv.re;
        }
    }
    out
}

fn classify_jet(n: u32, jet: &LocalJet, threshold: f64) -> MorseClass {
    let m = jet.point.dim() as u32;
    let eig = SymmetricEigen::new(log_hessian(n, jet)).eigenvalues;
    let scale = eig.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    if eig.iter().any(|v| v.abs() <= threshold * scale) {
        return MorseClass::Degenerate;
    }
    let q = eig.iter().filter(|v| **v < 0.0).count() as u32;
    if q == 2 * m {
        MorseClass::LocalMax
    } else if q >= m {
        MorseClass::Saddle(q)
    } else {
        MorseClass::LowIndex(q)
    }
}

/// Morse class from the inertia of the real Hessian of `log|s|^2_{h^n}`.
pub fn morse_classify(s: &Section, p: &CriticalPoint) -> MorseClass {
    morse_classify_with(
        &SectionEvaluator::new(s),
        &p.location,
        NewtonOptions::default().degeneracy_threshold,
    )
}

pub fn morse_classify_with(ev: &SectionEvaluator, p: &ChartPoint, threshold: f64) -> MorseClass {
    classify_jet(
        ev.degree().n(),
        &ev.local_jet(&p.to_best_chart(), true),
        threshold,
    )
}

fn seeds_for_round(
    degree: DegreeSpec,
    cfg: &CritFindConfig,
    key: u64,
    round: usize,
) -> Vec<ChartPoint> {
    let m = degree.m() as usize;
    let per_chart = (cfg.seed_factor * (degree.n() as f64).powi(m as i32))
        .ceil()
        .max(1.0) as usize;
    let mut rng = substream(key, StreamDomain::CriticalSeeds, round as u64);
    let mut seeds: Vec<ChartPoint> = (0..per_chart * (m + 1))
        .map(|_| fs_uniform_point(m, &mut rng))
        .collect();
    if round == 0 && cfg.grid && m >= 2 {
        // Lattice on the polydisc |z_i| <= 1 of each chart.
        let k = ((per_chart as f64 / 2.0).powf(1.0 / (2 * m) as f64).ceil() as usize).max(2);
        let ticks: Vec<f64> = (0..k)
            .map(|i| -1.0 + (2 * i + 1) as f64 / k as f64)
            .collect();
        let total = k.pow(2 * m as u32);
        for chart in 0..=m {
            for idx in 0..total {
                let mut rem = idx;
                let mut parts = Vec::with_capacity(2 * m);
                for _ in 0..2 * m {
                    parts.push(ticks[rem % k]);
                    rem /= k;
                }
                let coords: Vec<Complex64> = (0..m)
                    .map(|i| Complex64::new(parts[2 * i], parts[2 * i + 1]))
                    .collect();
                if coords.iter().all(|c| c.norm() <= 1.0) {
                    seeds.push(ChartPoint { chart, coords });
                }
            }
        }
    }
    seeds
}

fn canonical_cmp(a: &ChartPoint, b: &ChartPoint) -> std::cmp::Ordering {
    a.chart.cmp(&b.chart).then_with(|| {
        for (x, y) in a.coords.iter().zip(&b.coords) {
            let o = x.re.total_cmp(&y.re).then(x.im.total_cmp(&y.im));
            if o.is_ne() {
                return o;
            }
        }
        std::cmp::Ordering::Equal
    })
}

/// Multistart Newton search for every nonzero critical point of `s`.
pub fn find_critical_set(s: &Section, cfg: &CritFindConfig) -> Result<CriticalSet> {
    let degree = s.degree();
    if s.l2_norm() == 0.0 {
        return Err(Error::InvalidArgument(
            "zero section has no critical values".into(),
        ));
    }
    let (n, m) = (degree.n(), degree.m());
    let ev = SectionEvaluator::new(s);
    let key = digest64(&s.coefficient_bytes()) ^ cfg.seed;
    let mut diag = SearchDiagnostics {
        euler_expected: euler_expected(n, m),
        ..Default::default()
    };
    let mut points: Vec<CriticalPoint> = Vec::new();
    let mut hits: Vec<usize> = Vec::new();
    let mut fresh_hits: Vec<usize> = Vec::new();
    let mut max_seed_hnorm = 0.0f64;
    let mut quiet = 0;
    let mut degenerate_seen = false;
    let mut stable = false;

    for round in 0..cfg.max_rounds {
        diag.rounds = round + 1;
        let seeds = seeds_for_round(degree, cfg, key, round);
        diag.seeds += seeds.len();
        let results: Vec<(f64, std::result::Result<(ChartPoint, usize), RefineError>)> = seeds
            .par_iter()
            .map(|p| {
                (
                    ev.local_jet(p, false).hnorm(),
                    refine_location(&ev, p, &cfg.newton),
                )
            })
            .collect();
        max_seed_hnorm = results.iter().map(|r| r.0).fold(max_seed_hnorm, f64::max);
        let zero_cut = cfg.zero_threshold * max_seed_hnorm;
        let mut candidates = Vec::new();
        for (_, r) in results {
            match r {
                Ok((p, it)) => candidates.push((p, it)),
                Err(RefineError::Singular { .. }) => {
                    diag.singular_failures += 1;
                    degenerate_seen = true;
                }
                Err(_) => diag.failures += 1,
            }
        }
        candidates.sort_by(|a, b| canonical_cmp(&a.0, &b.0));
        let mut fresh: Vec<(ChartPoint, usize)> = Vec::new();
        for (p, it) in candidates {
            let near = |q: &ChartPoint| fs_distance(q, &p) < cfg.dedup_radius;
            if let Some(i) = points.iter().position(|q| near(&q.location)) {
                hits[i] += 1;
                diag.duplicates_merged += 1;
                diag.converged += 1;
            } else if let Some(i) = fresh.iter().position(|q| near(&q.0)) {
                fresh_hits[i] += 1;
                diag.duplicates_merged += 1;
                diag.converged += 1;
            } else if ev.local_jet(&p, false).hnorm() < zero_cut {
                diag.zero_discards += 1;
            } else {
                fresh.push((p, it));
                fresh_hits.push(1);
            }
        }
        let finished: Vec<CriticalPoint> = fresh
            .into_par_iter()
            .map(|(p, it)| finish_point(&ev, p, it, &cfg.newton))
            .collect();
        let mut new_points = 0;
        for (cp, h) in finished.into_iter().zip(fresh_hits.drain(..)) {
            if cp.residual > cfg.newton.tol {
                diag.failures += h;
                continue;
            }
            if cp.morse_class == MorseClass::Degenerate {
                degenerate_seen = true;
            }
            diag.converged += h;
            points.push(cp);
            hits.push(h);
            new_points += 1;
        }
        quiet = if new_points == 0 { quiet + 1 } else { 0 };
        diag.euler_sum = points
            .iter()
            .filter_map(|p| p.morse_class.index(m))
            .map(|q| if q % 2 == 0 { 1 } else { -1 })
            .sum();
        let euler_ok = !cfg.euler_check || diag.euler_sum == diag.euler_expected;
        if quiet >= cfg.stable_rounds && euler_ok {
            stable = true;
            break;
        }
    }

    let total_hits: usize = hits.iter().sum();
    let singletons = hits.iter().filter(|&&h| h == 1).count();
    diag.unseen_estimate = if total_hits > 0 {
        singletons as f64 / total_hits as f64
    } else {
        0.0
    };
    points.sort_by(|a, b| canonical_cmp(&a.location, &b.location));
    let status = if degenerate_seen {
        SearchStatus::Degenerate
    } else if stable {
        SearchStatus::Complete
    } else {
        SearchStatus::Incomplete
    };
    Ok(CriticalSet {
        degree,
        sample_id: 0,
        points,
        status,
        diagnostics: diag,
    })
}

/// Normalized empirical measure of the nonzero critical values.
pub fn empirical_cv(cs: &CriticalSet) -> Result<EmpiricalMeasure> {
    if !cs.is_complete() {
        return Err(Error::InvalidArgument(format!(
            "critical set of sample {} is {:?}",
            cs.sample_id, cs.status
        )));
    }
    Ok(EmpiricalMeasure {
        values: cs.points.iter().map(|p| p.value).collect(),
        weight: cs.degree.atom_weight(),
        sample_id: cs.sample_id,
    })
}

/// CSV with columns `sample_id, chart, re_z1.., im_z1.., value, morse_class, residual`.
pub fn critical_sets_csv(sets: &[CriticalSet]) -> String {
    let m = sets.first().map_or(1, |s| s.degree.m() as usize);
    let mut out = String::from("sample_id,chart");
    for i in 1..=m {
        out.push_str(&format!(",re_z{i}"));
    }
    for i in 1..=m {
        out.push_str(&format!(",im_z{i}"));
    }
    out.push_str(",value,morse_class,residual\n");
    for set in sets {
        for p in &set.points {
            out.push_str(&format!("{},{}", set.sample_id, p.location.chart));
            for c in &p.location.coords {
                out.push_str(&format!(",{:.16e}", c.re));
            }
            for c in &p.location.coords {
                out.push_str(&format!(",{:.16e}", c.im));
            }
            out.push_str(&format!(
                ",{:.16e},{},{:.16e}\n",
                p.value,
                p.morse_class.label(),
                p.residual
            ));
        }
    }
    out
}
