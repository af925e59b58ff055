//! Analytic critical-value and value densities.
//!
//! Every critical-value density carries the volume parameter `V`; the default
//! `V = π^m / m!` makes the prefactor `2V/π^m` equal `2/m!`, and for `m = 1`
//! gives `mass(D_∞) = 5/3`. Closed forms are exact; the matrix integral for
//! general `m` is estimated by Monte Carlo with per-point standard errors.

use nalgebra::{Complex, DMatrix};
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ensemble::EnsembleKind;
use crate::error::{Error, Result};
use crate::fubini::DegreeSpec;
use crate::numerics::{composite_gauss_legendre, trapezoid, CompensatedSum, Pchip};
use crate::rng::{substream, StreamDomain};

/// Formula identifier and parameters of a curve.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub formula: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub variant: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n: Option<u32>,
    pub m: u32,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub volume: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mc_samples: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    pub flags: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityCurve {
    pub grid: Vec<f64>,
    pub values: Vec<f64>,
    /// Per-point standard error; zero for closed forms.
    pub stderr: Vec<f64>,
    /// Trapezoid integral over the grid plus `outside_mass`.
    pub mass: f64,
    /// Exact integral of the formula outside `[grid[0], grid[last]]`; zero
    /// when the formula supplies none.
    pub outside_mass: f64,
    pub provenance: Provenance,
}

impl DensityCurve {
    /// Curve from sampled values with no stderr and no outside mass.
    pub fn from_samples(grid: Vec<f64>, values: Vec<f64>, provenance: Provenance) -> Result<Self> {
        let k = grid.len();
        Self::assemble(grid, values, vec![0.0; k], 0.0, provenance)
    }

    fn assemble(
        grid: Vec<f64>,
        values: Vec<f64>,
        stderr: Vec<f64>,
        outside_mass: f64,
        provenance: Provenance,
    ) -> Result<Self> {
        validate_grid(&grid)?;
        if values.len() != grid.len() || stderr.len() != grid.len() {
            return Err(Error::InvalidArgument(
                "grid and values differ in length".into(),
            ));
        }
        if values.iter().chain(&stderr).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!(
                "density values of {}",
                provenance.formula
            )));
        }
        let mass = trapezoid(&grid, &values) + outside_mass;
        Ok(Self {
            grid,
            values,
            stderr,
            mass,
            outside_mass,
            provenance,
        })
    }

    /// Closed-form curve: values of `f` on `grid` and the Gauss-Legendre
    /// integral of `f` over `[0, grid[0]]` and `[grid[last], upper]`, where
    /// `f` is negligible beyond `upper`.
    fn closed<F: Fn(f64) -> f64 + Sync>(
        grid: &[f64],
        f: F,
        upper: f64,
        provenance: Provenance,
    ) -> Result<Self> {
        validate_grid(grid)?;
        let values: Vec<f64> = grid.par_iter().map(|&x| f(x)).collect();
        let (lo, hi) = (grid[0], grid[grid.len() - 1]);
        let mut outside = CompensatedSum::new();
        if lo > 0.0 {
            outside.add(integrate(&f, 0.0, lo));
        }
        if upper > hi {
            outside.add(integrate(&f, hi, upper));
        }
        Self::assemble(
            grid.to_vec(),
            values,
            vec![0.0; grid.len()],
            outside.value(),
            provenance,
        )
    }

    pub fn argmax(&self) -> f64 {
        let i = (0..self.values.len())
            .max_by(|&a, &b| self.values[a].total_cmp(&self.values[b]))
            .expect("nonempty grid");
        self.grid[i]
    }

    /// Monotone cubic interpolant; `None` outside the grid.
    pub fn interpolant(&self) -> Pchip {
        Pchip::new(&self.grid, &self.values)
    }

    /// Largest pointwise standard error relative to the curve's peak.
    pub fn max_relative_stderr(&self) -> f64 {
        let peak = self.values.iter().cloned().fold(0.0, f64::max);
        if peak == 0.0 {
            return 0.0;
        }
        self.stderr.iter().cloned().fold(0.0, f64::max) / peak
    }

    /// CSV with columns `x, density, stderr` at 17 significant digits.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("x,density,stderr\n");
        for ((x, v), e) in self.grid.iter().zip(&self.values).zip(&self.stderr) {
            out.push_str(&format!("{x:.16e},{v:.16e},{e:.16e}\n"));
        }
        out
    }

    /// Provenance sidecar: formula, parameters, mass.
    pub fn sidecar_json(&self) -> Result<String> {
        #[derive(Serialize)]
        struct Sidecar<'a> {
            provenance: &'a Provenance,
            mass: f64,
            outside_mass: f64,
            points: usize,
        }
        Ok(serde_json::to_string_pretty(&Sidecar {
            provenance: &self.provenance,
            mass: self.mass,
            outside_mass: self.outside_mass,
            points: self.grid.len(),
        })?)
    }
}

fn validate_grid(grid: &[f64]) -> Result<()> {
    if grid.len() < 2 {
        return Err(Error::InvalidArgument(
            "grid needs at least two points".into(),
        ));
    }
    if grid.iter().any(|x| !x.is_finite() || *x < 0.0) || grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidArgument(
            "grid must be finite, nonnegative and strictly increasing".into(),
        ));
    }
    Ok(())
}

fn integrate<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> f64 {
    let panels = ((b - a) * 8.0).ceil().clamp(4.0, 4000.0) as usize;
    let (xs, ws) = composite_gauss_legendre(a, b, panels, 16);
    xs.iter()
        .zip(&ws)
        .map(|(x, w)| w * f(*x))
        .collect::<CompensatedSum>()
        .value()
}

/// Uniform grid `lo, .., hi` with `points` entries.
pub fn uniform_grid(lo: f64, hi: f64, points: usize) -> Vec<f64> {
    let k = points.max(2);
    (0..k)
        .map(|i| lo + (hi - lo) * i as f64 / (k - 1) as f64)
        .collect()
}

/// Calibration volume `π^m / m!`.
pub fn default_volume(m: u32) -> f64 {
    let mut v = 1.0;
    for k in 1..=m {
        v *= std::f64::consts::PI / k as f64;
    }
    v
}

/// `2V/π^m`.
fn prefactor(m: u32, volume: f64) -> f64 {
    2.0 * volume / std::f64::consts::PI.powi(m as i32)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MatrixIntegralSpec {
    pub m: u32,
    pub samples: usize,
    pub seed: u64,
    pub volume: f64,
}

impl MatrixIntegralSpec {
    pub fn new(m: u32, samples: usize, seed: u64) -> Result<Self> {
        if m < 1 || samples < 1 {
            return Err(Error::InvalidArgument(format!(
                "matrix integral needs m >= 1 and samples >= 1, got m={m}, samples={samples}"
            )));
        }
        Ok(Self {
            m,
            samples,
            seed,
            volume: default_volume(m),
        })
    }

    pub fn with_volume(mut self, volume: f64) -> Self {
        self.volume = volume;
        self
    }
}

/// `(V/π) x (2x^2 - 4 + 8 e^{-x^2/2}) e^{-x^2}`.
pub fn d_inf_closed_m1(x: f64, volume: f64) -> f64 {
    su2_kernel(x, 2.0) * volume / std::f64::consts::PI
}

/// `2x e^{-x^2} (x^2 - a + 2a e^{-x^2/a})`, i.e. `2x e^{-x^2} E|a r - x^2|`
/// for `r ~ Exp(1)`.
fn su2_kernel(x: f64, a: f64) -> f64 {
    let y = x * x;
    2.0 * x * (-y).exp() * (y - a + 2.0 * a * (-y / a).exp())
}

/// Closed-form `D_∞` for `m = 1` on a grid.
pub fn d_inf_curve_m1(xs: &[f64], volume: f64) -> Result<DensityCurve> {
    DensityCurve::closed(
        xs,
        |x| d_inf_closed_m1(x, volume),
        xs[xs.len() - 1] + 12.0,
        Provenance {
            formula: "d_inf_closed_m1".into(),
            m: 1,
            volume: Some(volume),
            ..Default::default()
        },
    )
}

const MC_BATCH: usize = 1 << 13;

/// Eigenvalues of `ξ̃ ξ̃*` for a complex symmetric `ξ` with independent
/// standard complex Gaussian entries on and above the diagonal and the
/// diagonal scaled by `sqrt 2`.
fn sample_gram_eigenvalues<R: Rng + ?Sized>(m: usize, rng: &mut R, out: &mut Vec<f64>) {
    out.clear();
    let mut gauss = || {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        Complex64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
    };
    if m == 1 {
        out.push(2.0 * gauss().norm_sqr());
        return;
    }
    let mut xi = DMatrix::<Complex<f64>>::zeros(m, m);
    for j in 0..m {
        for q in j..m {
            let v = gauss();
            if q == j {
                xi[(j, j)] = v * std::f64::consts::SQRT_2;
            } else {
                xi[(j, q)] = v;
                xi[(q, j)] = v;
            }
        }
    }
    let gram = &xi * xi.adjoint();
    if m == 2 {
        let (a, d) = (gram[(0, 0)].re, gram[(1, 1)].re);
        let b2 = gram[(0, 1)].norm_sqr();
        let half = 0.5 * (a + d);
        let disc = (0.25 * (a - d) * (a - d) + b2).sqrt();
        out.extend([half - disc, half + disc]);
    } else {
        out.extend(gram.symmetric_eigenvalues().iter().copied());
    }
}

/// `E|det(t ξ̃ξ̃* - x^2 I)|` on the grid with common random numbers:
/// returns per-point means and standard errors.
fn matrix_expectation(xs: &[f64], t: f64, spec: &MatrixIntegralSpec) -> (Vec<f64>, Vec<f64>) {
    let batches = spec.samples.div_ceil(MC_BATCH);
    let m = spec.m as usize;
    let partial: Vec<(Vec<CompensatedSum>, Vec<CompensatedSum>)> = (0..batches)
        .into_par_iter()
        .map(|b| {
            let mut rng = substream(spec.seed, StreamDomain::MatrixIntegral, b as u64);
            let count = MC_BATCH.min(spec.samples - b * MC_BATCH);
            let mut s1 = vec![CompensatedSum::new(); xs.len()];
            let mut s2 = vec![CompensatedSum::new(); xs.len()];
            let mut eig = Vec::with_capacity(m);
            for _ in 0..count {
                sample_gram_eigenvalues(m, &mut rng, &mut eig);
                for (i, x) in xs.iter().enumerate() {
                    let y = x * x;
                    let v = eig.iter().map(|l| t * l - y).product::<f64>().abs();
                    s1[i].add(v);
                    s2[i].add(v * v);
                }
            }
            (s1, s2)
        })
        .collect();
    let n = spec.samples as f64;
    (0..xs.len())
        .map(|i| {
            let sum: CompensatedSum = partial.iter().map(|p| p.0[i].value()).collect();
            let sumsq: CompensatedSum = partial.iter().map(|p| p.1[i].value()).collect();
            let mean = sum.value() / n;
            let var = if spec.samples > 1 {
                ((sumsq.value() - n * mean * mean) / (n - 1.0)).max(0.0)
            } else {
                0.0
            };
            (mean, (var / n).sqrt())
        })
        .unzip()
}

fn matrix_curve(
    xs: &[f64],
    t: f64,
    spec: &MatrixIntegralSpec,
    mut provenance: Provenance,
) -> Result<DensityCurve> {
    validate_grid(xs)?;
    let (mean, se) = matrix_expectation(xs, t, spec);
    let c = prefactor(spec.m, spec.volume);
    let weight: Vec<f64> = xs.iter().map(|x| c * x * (-x * x).exp()).collect();
    let values = mean.iter().zip(&weight).map(|(v, w)| v * w).collect();
    let stderr = se.iter().zip(&weight).map(|(v, w)| v * w).collect();
    provenance.mc_samples = Some(spec.samples);
    provenance.seed = Some(spec.seed);
    provenance.volume = Some(spec.volume);
    if spec.samples < 10_000 {
        provenance.flags.push("low_sample_count".into());
    }
    let curve = DensityCurve::assemble(xs.to_vec(), values, stderr, 0.0, provenance)?;
    if curve.max_relative_stderr() > 0.05 {
        let mut curve = curve;
        curve
            .provenance
            .flags
            .push("stderr_above_5pct_of_peak".into());
        return Ok(curve);
    }
    Ok(curve)
}

/// Monte-Carlo `D_∞` in dimension `m`.
pub fn d_inf_mc(xs: &[f64], spec: &MatrixIntegralSpec) -> Result<DensityCurve> {
    matrix_curve(
        xs,
        1.0,
        spec,
        Provenance {
            formula: "d_inf_mc".into(),
            m: spec.m,
            ..Default::default()
        },
    )
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Su2GaussianVariant {
    /// `2x e^{-x^2}(x^2 - a + 2a e^{-x^2/a})`, `a = 2(n-1)/n`: the exact value
    /// of the `m = 1` matrix integral.
    #[default]
    Exact,
    /// `x(2x^2 - 4n/(n-1) + 8 e^{-(n-1)x^2/(2n)}) e^{-x^2}`, kept for comparison.
    Displayed,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussianDensitySpec {
    /// Ensemble variance parameter; `None` means `α = d_n`.
    pub alpha: Option<f64>,
    pub volume: Option<f64>,
    pub variant: Su2GaussianVariant,
    /// Matrix-integral settings for `m >= 2`.
    pub mc_samples: usize,
    pub mc_seed: u64,
}

impl Default for GaussianDensitySpec {
    fn default() -> Self {
        Self {
            alpha: None,
            volume: None,
            variant: Su2GaussianVariant::Exact,
            mc_samples: 200_000,
            mc_seed: 0,
        }
    }
}

/// Exact critical-value density of the Gaussian SU(m+1) ensemble of degree `n`.
pub fn d_su_gaussian(
    n: u32,
    m: u32,
    xs: &[f64],
    spec: &GaussianDensitySpec,
) -> Result<DensityCurve> {
    if n < 2 {
        return Err(Error::UnsupportedDegree {
            n,
            formula: "d_su_gaussian",
            reason: "the (n-1)/n deformation vanishes at n = 1",
        });
    }
    let degree = DegreeSpec::new(n, m)?;
    let d = degree.d_n() as f64;
    let alpha = spec.alpha.unwrap_or(d);
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(Error::InvalidEnsemble(format!(
            "alpha must be positive, got {alpha}"
        )));
    }
    let volume = spec.volume.unwrap_or_else(|| default_volume(m));
    // D^α(x) = sqrt(α/d) D^{d}(sqrt(α/d) x)
    let k = (alpha / d).sqrt();
    let nf = n as f64;
    let mut provenance = Provenance {
        formula: "d_su_gaussian".into(),
        n: Some(n),
        m,
        alpha: Some(alpha),
        volume: Some(volume),
        ..Default::default()
    };
    if m == 1 {
        let c = volume / std::f64::consts::PI;
        provenance.variant = Some(format!("{:?}", spec.variant).to_lowercase());
        let f = move |x: f64| {
            let y = k * x;
            k * c
                * match spec.variant {
                    Su2GaussianVariant::Exact => su2_kernel(y, 2.0 * (nf - 1.0) / nf),
                    Su2GaussianVariant::Displayed => {
                        y * (2.0 * y * y - 4.0 * nf / (nf - 1.0)
                            + 8.0 * (-(nf - 1.0) * y * y / (2.0 * nf)).exp())
                            * (-y * y).exp()
                    }
                }
        };
        let upper = xs[xs.len() - 1] + 12.0 / k;
        return DensityCurve::closed(xs, f, upper, provenance);
    }
    let mc = MatrixIntegralSpec {
        m,
        samples: spec.mc_samples.max(1),
        seed: spec.mc_seed,
        volume,
    };
    let scaled: Vec<f64> = xs.iter().map(|x| k * x).collect();
    let mut curve = matrix_curve(&scaled, (nf - 1.0) / nf, &mc, provenance)?;
    curve.grid = xs.to_vec();
    curve.values.iter_mut().for_each(|v| *v *= k);
    curve.stderr.iter_mut().for_each(|v| *v *= k);
    curve.mass = trapezoid(&curve.grid, &curve.values);
    Ok(curve)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Su2SphericalVariant {
    /// Exact Laplace inversion of the exact Gaussian density.
    #[default]
    Exact,
    /// Third term `8 (1 - u^2/b_n)_+^{n-1}`, `b_n = 2n(n+1)/(3n-1)`, first
    /// two terms on `[0, sqrt n]`.
    Cutoff,
    /// Third term `8 (1 - (3n-1)/(2n) u^2/n)_+^{n-1}` restricted to `u <= b_n`.
    Displayed,
}

fn pos_pow(base: f64, e: i32) -> f64 {
    if base <= 0.0 {
        0.0
    } else {
        base.powi(e)
    }
}

/// Pointwise spherical SU(2) density of degree `n` and the end of its support.
pub fn su2_spherical_fn(
    n: u32,
    variant: Su2SphericalVariant,
    volume: Option<f64>,
) -> Result<(impl Fn(f64) -> f64 + Send + Sync + Copy, f64)> {
    if n < 2 {
        return Err(Error::UnsupportedDegree {
            n,
            formula: "d_su2_spherical",
            reason: "requires n >= 2",
        });
    }
    let c = volume.unwrap_or(std::f64::consts::PI) / std::f64::consts::PI;
    let nf = n as f64;
    let ni = n as i32;
    let d = nf + 1.0;
    let f = move |u: f64| {
        let y = u * u;
        c * match variant {
            Su2SphericalVariant::Exact => {
                let big_b = 2.0 * (nf + 1.0) * (nf - 1.0) / (3.0 * nf - 2.0);
                let base = 1.0 - y / d;
                2.0 * nf * (nf - 1.0) / (d * d) * u * y * pos_pow(base, ni - 2)
                    - 4.0 * (nf - 1.0) / d * u * pos_pow(base, ni - 1)
                    + 8.0 * (nf - 1.0) / d * u * pos_pow(1.0 - y / big_b, ni - 1)
            }
            Su2SphericalVariant::Cutoff => {
                let b = 2.0 * nf * (nf + 1.0) / (3.0 * nf - 1.0);
                let base = 1.0 - y / nf;
                u * (2.0 * y * pos_pow(base, ni - 2)
                    - 4.0 * nf / (nf - 1.0) * pos_pow(base, ni - 1)
                    + 8.0 * pos_pow(1.0 - y / b, ni - 1))
            }
            Su2SphericalVariant::Displayed => {
                let b = 2.0 * nf * (nf + 1.0) / (3.0 * nf - 1.0);
                let base = 1.0 - y / nf;
                let third = if u <= b {
                    pos_pow(1.0 - (3.0 * nf - 1.0) / (2.0 * nf) * y / nf, ni - 1)
                } else {
                    0.0
                };
                u * (2.0 * y * pos_pow(base, ni - 2)
                    - 4.0 * nf / (nf - 1.0) * pos_pow(base, ni - 1)
                    + 8.0 * third)
            }
        }
    };
    let b = 2.0 * nf * (nf + 1.0) / (3.0 * nf - 1.0);
    let support = match variant {
        Su2SphericalVariant::Exact => d.sqrt(),
        Su2SphericalVariant::Cutoff => nf.sqrt().max(b.sqrt()),
        Su2SphericalVariant::Displayed => nf
            .sqrt()
            .max(b.min((2.0 * nf * nf / (3.0 * nf - 1.0)).sqrt())),
    };
    Ok((f, support))
}

/// Exact critical-value density of the spherical SU(2) ensemble of degree `n`.
pub fn d_su2_spherical(
    n: u32,
    us: &[f64],
    variant: Su2SphericalVariant,
    volume: Option<f64>,
) -> Result<DensityCurve> {
    let (f, support) = su2_spherical_fn(n, variant, volume)?;
    let c = volume.unwrap_or(std::f64::consts::PI) / std::f64::consts::PI;
    let provenance = Provenance {
        formula: "d_su2_spherical".into(),
        variant: Some(format!("{variant:?}").to_lowercase()),
        n: Some(n),
        m: 1,
        volume: Some(c * std::f64::consts::PI),
        ..Default::default()
    };
    DensityCurve::closed(us, f, support.max(us[us.len() - 1]), provenance)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ValueKind {
    Ensemble(EnsembleKind),
    /// `2u e^{-u^2}`.
    Limit,
}

/// Density of `|s(z)|_{h^n}` at a fixed point (uniform on CP^m by symmetry).
///
/// The spherical curve is `2u(1 - u^2/d_n)^{d_n-2}` on `[0, sqrt d_n]`, whose
/// mass is `d_n/(d_n-1)`; all other curves are probability densities.
pub fn value_density(kind: ValueKind, n: u32, m: u32, grid: &[f64]) -> Result<DensityCurve> {
    let degree = DegreeSpec::new(n, m)?;
    let d = degree.d_n() as f64;
    let last = grid[grid.len() - 1];
    let mut provenance = Provenance {
        formula: "value_density".into(),
        n: Some(n),
        m,
        ..Default::default()
    };
    match kind {
        ValueKind::Ensemble(EnsembleKind::Spherical) => {
            provenance.variant = Some("spherical".into());
            let e = degree.d_n() as i32 - 2;
            DensityCurve::closed(
                grid,
                move |u| 2.0 * u * pos_pow(1.0 - u * u / d, e),
                d.sqrt().max(last),
                provenance,
            )
        }
        ValueKind::Ensemble(k) => {
            let alpha = match k {
                EnsembleKind::Gaussian { alpha } if alpha > 0.0 && alpha.is_finite() => alpha,
                EnsembleKind::Gaussian { alpha } => {
                    return Err(Error::InvalidEnsemble(format!(
                        "alpha must be positive, got {alpha}"
                    )))
                }
                _ => d,
            };
            provenance.variant = Some("gaussian".into());
            provenance.alpha = Some(alpha);
            let r = alpha / d;
            DensityCurve::closed(
                grid,
                move |x| 2.0 * r * x * (-r * x * x).exp(),
                last + 12.0 / r.sqrt(),
                provenance,
            )
        }
        ValueKind::Limit => {
            provenance.variant = Some("limit".into());
            provenance.n = None;
            DensityCurve::closed(grid, |u| 2.0 * u * (-u * u).exp(), last + 12.0, provenance)
        }
    }
}

/// Numeric mass: trapezoid on the grid plus the formula's outside mass.
pub fn curve_mass(c: &DensityCurve) -> f64 {
    trapezoid(&c.grid, &c.values) + c.outside_mass
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    /// `∫_0^∞ e^{-r}|2r - y| dr` by direct quadrature, split at the kink.
    fn abs_moment(y: f64) -> f64 {
        let f = |r: f64| (-r).exp() * (2.0 * r - y).abs();
        integrate(&f, 0.0, y / 2.0) + integrate(&f, y / 2.0, y / 2.0 + 60.0)
    }

    #[test]
    fn d_inf_closed_values() {
        assert_eq!(d_inf_closed_m1(0.0, PI), 0.0);
        let expect = (-1.0f64).exp() * (-2.0 + 8.0 * (-0.5f64).exp());
        assert!((d_inf_closed_m1(1.0, PI) - expect).abs() < 1e-15);
        assert!((expect - 1.0494).abs() < 5e-4);
        for x in [0.3f64, 1.0, 1.7, 2.5] {
            let oracle = 2.0 * x * (-x * x).exp() * abs_moment(x * x);
            assert!((d_inf_closed_m1(x, PI) - oracle).abs() < 1e-12);
        }
    }

    #[test]
    fn d_inf_mass_is_five_thirds() {
        let c = d_inf_curve_m1(&uniform_grid(0.0, 4.0, 400), PI).unwrap();
        assert!((curve_mass(&c) - 5.0 / 3.0).abs() < 1e-3);
        assert!((c.mass - 5.0 / 3.0).abs() < 1e-3);
        // single interior maximum
        let a = c.argmax();
        assert!(a > 0.4 && a < 1.2, "argmax {a}");
        let rises = c.values.windows(2).map(|w| w[1] > w[0]).collect::<Vec<_>>();
        assert_eq!(rises.windows(2).filter(|r| r[0] != r[1]).count(), 1);
    }

    #[test]
    fn one_dimensional_matrix_moment() {
        // E|2|ξ|^2 - 2| = 4/e
        assert!((abs_moment(2.0) - 4.0 / std::f64::consts::E).abs() < 1e-12);
        let spec = MatrixIntegralSpec::new(1, 400_000, 3).unwrap();
        let (mean, se) = matrix_expectation(&[2f64.sqrt()], 1.0, &spec);
        assert!((mean[0] - 4.0 / std::f64::consts::E).abs() < 4.0 * se[0]);
    }

    #[test]
    fn mc_matches_closed_form_in_dimension_one() {
        let xs = uniform_grid(0.05, 3.5, 40);
        let spec = MatrixIntegralSpec::new(1, 200_000, 1).unwrap();
        let mc = d_inf_mc(&xs, &spec).unwrap();
        for ((x, v), e) in xs.iter().zip(&mc.values).zip(&mc.stderr) {
            assert!(
                (v - d_inf_closed_m1(*x, PI)).abs() <= 4.0 * e + 1e-15,
                "x={x}"
            );
        }
        assert_eq!(d_inf_mc(&[0.0, 1.0], &spec).unwrap().values[0], 0.0);
    }

    #[test]
    fn su_gaussian_examples() {
        let xs = uniform_grid(0.0, 4.0, 81);
        let spec = GaussianDensitySpec {
            variant: Su2GaussianVariant::Displayed,
            ..Default::default()
        };
        let c = d_su_gaussian(2, 1, &xs, &spec).unwrap();
        for (x, v) in xs.iter().zip(&c.values) {
            let expect = x * (2.0 * x * x - 8.0 + 8.0 * (-x * x / 4.0).exp()) * (-x * x).exp();
            assert!((v - expect).abs() < 1e-14);
        }
        assert!(d_su_gaussian(1, 1, &xs, &GaussianDensitySpec::default()).is_err());
        assert_eq!(
            d_su_gaussian(5, 1, &xs, &GaussianDensitySpec::default())
                .unwrap()
                .values[0],
            0.0
        );
    }

    #[test]
    fn exact_su2_density_matches_matrix_integral_and_count() {
        let xs = uniform_grid(0.0, 4.5, 451);
        for n in [2u32, 3, 10, 30] {
            let c = d_su_gaussian(n, 1, &xs, &GaussianDensitySpec::default()).unwrap();
            let nf = n as f64;
            // mass = expected count / n = (5n^2 - 8n + 4) / (n (3n - 2))
            let count = (5.0 * nf * nf - 8.0 * nf + 4.0) / (3.0 * nf - 2.0);
            assert!((c.mass - count / nf).abs() < 1e-4, "n={n}: {}", c.mass);
            let t = (nf - 1.0) / nf;
            for (x, v) in xs.iter().zip(&c.values).step_by(37) {
                let y = x * x / t;
                let oracle = 2.0 * x * (-x * x).exp() * t * abs_moment(y);
                assert!((v - oracle).abs() < 1e-11, "n={n} x={x}");
            }
        }
    }

    #[test]
    fn su_gaussian_tends_to_limit() {
        let xs = uniform_grid(0.0, 4.0, 201);
        let lim = d_inf_curve_m1(&xs, PI).unwrap();
        let err = |n| {
            let c = d_su_gaussian(n, 1, &xs, &GaussianDensitySpec::default()).unwrap();
            c.values
                .iter()
                .zip(&lim.values)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max)
        };
        let e: Vec<f64> = [16, 32, 64, 128].iter().map(|&n| err(n)).collect();
        for w in e.windows(2) {
            let r = w[1] / w[0];
            assert!((0.4..=0.6).contains(&r), "ratio {r}");
        }
    }

    #[test]
    fn mass_is_alpha_independent() {
        let xs = uniform_grid(0.0, 8.0, 801);
        let masses: Vec<f64> = [1.0, 10.0, 31.0]
            .iter()
            .map(|&a| {
                let grid: Vec<f64> = xs.iter().map(|x| x * (31.0f64 / a).sqrt()).collect();
                d_su_gaussian(
                    30,
                    1,
                    &grid,
                    &GaussianDensitySpec {
                        alpha: Some(a),
                        ..Default::default()
                    },
                )
                .unwrap()
                .mass
            })
            .collect();
        assert!((masses[0] - masses[1]).abs() < 1e-6 && (masses[0] - masses[2]).abs() < 1e-6);
    }

    #[test]
    fn spherical_examples() {
        let us = uniform_grid(0.0, 7.0, 701);
        let c = d_su2_spherical(30, &us, Su2SphericalVariant::Exact, None).unwrap();
        for (u, v) in us.iter().zip(&c.values) {
            if *u > 31f64.sqrt() {
                assert_eq!(*v, 0.0);
            }
            assert!(*v >= -1e-15);
        }
        let g = d_su_gaussian(30, 1, &us, &GaussianDensitySpec::default()).unwrap();
        assert!((c.mass - g.mass).abs() < 1e-5, "{} vs {}", c.mass, g.mass);
        let lim = d_inf_curve_m1(&us, PI).unwrap();
        let err = |n: u32| {
            let s = d_su2_spherical(n, &us, Su2SphericalVariant::Exact, None).unwrap();
            s.values
                .iter()
                .zip(&lim.values)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max)
        };
        assert!(err(400) < 0.01 && err(400) < err(100));
    }

    #[test]
    fn spherical_variants_differ_only_in_the_third_term() {
        let us = uniform_grid(0.0, 6.0, 61);
        let a = d_su2_spherical(20, &us, Su2SphericalVariant::Cutoff, None).unwrap();
        let b = d_su2_spherical(20, &us, Su2SphericalVariant::Displayed, None).unwrap();
        assert_eq!(a.values[0], 0.0);
        assert!(a
            .values
            .iter()
            .zip(&b.values)
            .any(|(x, y)| (x - y).abs() > 1e-6));
    }

    #[test]
    fn value_density_examples() {
        let n = 30;
        let d = 31.0f64;
        let grid = uniform_grid(0.0, d.sqrt(), 4001);
        let s = value_density(ValueKind::Ensemble(EnsembleKind::Spherical), n, 1, &grid).unwrap();
        assert!((curve_mass(&s) - d / (d - 1.0)).abs() < 1e-6);
        let g = value_density(
            ValueKind::Ensemble(EnsembleKind::NormalizedGaussian),
            n,
            1,
            &uniform_grid(0.0, 4.0, 4001),
        )
        .unwrap();
        assert_eq!(g.values[0], 0.0);
        assert!((g.argmax() - 0.5f64.sqrt()).abs() < 1e-3);
        assert!((g.mass - 1.0).abs() < 1e-6);
        let a = value_density(
            ValueKind::Ensemble(EnsembleKind::Gaussian { alpha: 1.0 }),
            n,
            1,
            &uniform_grid(0.0, 30.0, 3001),
        )
        .unwrap();
        assert!((a.mass - 1.0).abs() < 1e-6);
        let lim = value_density(ValueKind::Limit, n, 1, &uniform_grid(0.0, 3.0, 301)).unwrap();
        let big = value_density(
            ValueKind::Ensemble(EnsembleKind::Spherical),
            3000,
            1,
            &uniform_grid(0.0, 3.0, 301),
        )
        .unwrap();
        let gap = lim
            .values
            .iter()
            .zip(&big.values)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        assert!(gap < 2e-3, "gap {gap}");
    }

    #[test]
    fn zero_curve_has_zero_mass() {
        let c =
            DensityCurve::from_samples(vec![0.0, 1.0, 2.0], vec![0.0; 3], Provenance::default())
                .unwrap();
        assert_eq!(curve_mass(&c), 0.0);
    }

    #[test]
    fn csv_and_sidecar() {
        let c = d_inf_curve_m1(&uniform_grid(0.0, 1.0, 3), PI).unwrap();
        let csv = c.to_csv();
        assert!(csv.starts_with("x,density,stderr\n"));
        let row: Vec<f64> = csv
            .lines()
            .nth(2)
            .unwrap()
            .split(',')
            .map(|v| v.parse().unwrap())
            .collect();
        assert_eq!(row[1].to_bits(), c.values[1].to_bits());
        assert!(c.sidecar_json().unwrap().contains("d_inf_closed_m1"));
    }
}
