//! Fubini-Study geometry of CP^m in the standard affine atlas.
//!
//! Chart `k` uses the affine coordinates `Z_i / Z_k` for `i != k`, listed in
//! increasing `i`. The Kähler potential in every chart is `log(1 + |z|^2)` and
//! the volume form is normalized to total mass one.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Degree `n`, complex dimension `m` and the dimension `d_n = C(n+m, m)` of
/// the space of degree-`n` sections.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct DegreeSpec {
    n: u32,
    m: u32,
    d_n: usize,
}

impl DegreeSpec {
    pub fn new(n: u32, m: u32) -> Result<Self> {
        let d_n = dim_space(n, m)?;
        Ok(Self { n, m, d_n })
    }

    pub fn n(&self) -> u32 {
        self.n
    }

    pub fn m(&self) -> u32 {
        self.m
    }

    pub fn d_n(&self) -> usize {
        self.d_n
    }

    /// Atom weight `1/n^m` of the normalized empirical measures.
    pub fn atom_weight(&self) -> f64 {
        (self.n as f64).powi(self.m as i32).recip()
    }
}

/// `C(n+m, m)`, the number of monomials of total degree at most `n` in `m`
/// variables.
pub fn dim_space(n: u32, m: u32) -> Result<usize> {
    if n < 1 || m < 1 {
        return Err(Error::InvalidDegree(format!(
            "need n >= 1 and m >= 1, got n={n}, m={m}"
        )));
    }
    // C(n+m, k) built incrementally; each partial product is itself a binomial.
    let mut acc: u128 = 1;
    for k in 1..=u128::from(m) {
        acc = acc
            .checked_mul(u128::from(n) + k)
            .ok_or(Error::DimensionOverflow { n, m })?
            / k;
    }
    usize::try_from(acc).map_err(|_| Error::DimensionOverflow { n, m })
}

/// All multi-indices `j` with `|j| <= n` in graded lexicographic order:
/// increasing total degree, and within a degree lexicographically decreasing
/// (`(k,0,..)` first). This is the coefficient ordering of [`crate::Section`].
pub fn multi_indices(n: u32, m: u32) -> Vec<Vec<u32>> {
    let mut out = Vec::new();
    let mut buf = vec![0u32; m as usize];
    for k in 0..=n {
        compositions(k, 0, &mut buf, &mut out);
    }
    out
}

fn compositions(rest: u32, pos: usize, buf: &mut Vec<u32>, out: &mut Vec<Vec<u32>>) {
    if pos + 1 == buf.len() {
        buf[pos] = rest;
        out.push(buf.clone());
        return;
    }
    for first in (0..=rest).rev() {
        buf[pos] = first;
        compositions(rest - first, pos + 1, buf, out);
    }
}

/// `ln(n! / (j_1! ... j_m! (n-|j|)!))`.
pub fn log_multinomial(n: u32, j: &[u32]) -> f64 {
    let total: u32 = j.iter().sum();
    let mut acc = ln_factorial(n) - ln_factorial(n - total);
    for &ji in j {
        acc -= ln_factorial(ji);
    }
    acc
}

fn ln_factorial(k: u32) -> f64 {
    statrs::function::factorial::ln_factorial(u64::from(k))
}

/// Squared L² norm of the monomial `z^j` against `e^{-n φ} dV`.
///
/// Equals `j! (n-|j|)! / (n! d_n)`; for `m = 1` this is `j!(n-j)!/(n+1)!`.
pub fn monomial_norm_sq(n: u32, m: u32, j: &[u32]) -> Result<f64> {
    let total: u64 = j.iter().map(|&x| u64::from(x)).sum();
    if j.len() != m as usize || total > u64::from(n) {
        return Err(Error::InvalidMultiIndex {
            index: j.to_vec(),
            n,
            m,
        });
    }
    let d = dim_space(n, m)? as f64;
    Ok((-log_multinomial(n, j) - d.ln()).exp())
}

/// A point of CP^m in one of the `m + 1` standard affine charts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChartPoint {
    pub chart: usize,
    pub coords: Vec<Complex64>,
}

impl ChartPoint {
    pub fn new(chart: usize, coords: Vec<Complex64>) -> Result<Self> {
        let m = coords.len();
        if m == 0 || chart > m {
            return Err(Error::InvalidChart { chart, m });
        }
        if coords
            .iter()
            .any(|c| !c.re.is_finite() || !c.im.is_finite())
        {
            return Err(Error::NonFinite(format!(
                "chart point coordinates {coords:?}"
            )));
        }
        Ok(Self { chart, coords })
    }

    pub fn dim(&self) -> usize {
        self.coords.len()
    }

    /// Homogeneous representative with `Z_chart = 1`.
    pub fn homogeneous(&self) -> Vec<Complex64> {
        let m = self.dim();
        let mut z = Vec::with_capacity(m + 1);
        let mut it = self.coords.iter();
        for i in 0..=m {
            if i == self.chart {
                z.push(Complex64::new(1.0, 0.0));
            } else {
                z.push(*it.next().expect("m coordinates"));
            }
        }
        z
    }

    /// Express the homogeneous point `z` in chart `target`.
    pub fn from_homogeneous(z: &[Complex64], target: usize) -> Result<Self> {
        if z.len() < 2 || target >= z.len() {
            return Err(Error::InvalidChart {
                chart: target,
                m: z.len().saturating_sub(1),
            });
        }
        let pivot = z[target];
        if pivot.norm() == 0.0 {
            return Err(Error::SingularChart { target });
        }
        let coords = z
            .iter()
            .enumerate()
            .filter(|(i, _)| *i != target)
            .map(|(_, &zi)| zi / pivot)
            .collect();
        ChartPoint::new(target, coords)
    }

    /// Same point in the chart of its largest homogeneous coordinate.
    pub fn to_best_chart(&self) -> ChartPoint {
        let z = self.homogeneous();
        let best = best_chart(&z);
        if best == self.chart {
            return self.clone();
        }
        ChartPoint::from_homogeneous(&z, best).expect("largest coordinate is nonzero")
    }

    pub fn norm_sq(&self) -> f64 {
        self.coords.iter().map(|c| c.norm_sqr()).sum()
    }
}

/// Index of the largest homogeneous coordinate (first one on ties).
pub fn best_chart(z: &[Complex64]) -> usize {
    let mut best = 0;
    let mut best_abs = z[0].norm_sqr();
    for (i, zi) in z.iter().enumerate().skip(1) {
        let a = zi.norm_sqr();
        if a > best_abs {
            best = i;
            best_abs = a;
        }
    }
    best
}

pub fn chart_transition(p: &ChartPoint, target: usize) -> Result<ChartPoint> {
    if target > p.dim() {
        return Err(Error::InvalidChart {
            chart: target,
            m: p.dim(),
        });
    }
    ChartPoint::from_homogeneous(&p.homogeneous(), target)
}

/// Potential jet of `φ = log(1 + |z|^2)`: value, `∂φ`, `∂∂φ` and `∂∂̄φ`.
#[derive(Debug, Clone)]
pub struct FsJet {
    pub phi: f64,
    pub dphi: Vec<Complex64>,
    pub d2phi: DMatrix<Complex64>,
    pub ddbar: DMatrix<Complex64>,
}

pub fn fs_jet(p: &ChartPoint) -> FsJet {
    let m = p.dim();
    let w = 1.0 + p.norm_sq();
    let zbar: Vec<Complex64> = p.coords.iter().map(|c| c.conj()).collect();
    let dphi = zbar.iter().map(|c| c / w).collect();
    let w2 = w * w;
    let d2phi = DMatrix::from_fn(m, m, |i, k| -zbar[i] * zbar[k] / w2);
    let ddbar = DMatrix::from_fn(m, m, |i, k| {
        let delta = if i == k { 1.0 / w } else { 0.0 };
        Complex64::new(delta, 0.0) - zbar[i] * p.coords[k] / w2
    });
    FsJet {
        phi: w.ln(),
        dphi,
        d2phi,
        ddbar,
    }
}

/// Fubini-Study distance (angle between lines, in `[0, π/2]`).
pub fn fs_distance(p: &ChartPoint, q: &ChartPoint) -> f64 {
    let z = p.homogeneous();
    let w = q.homogeneous();
    let inner: Complex64 = z.iter().zip(&w).map(|(a, b)| a.conj() * b).sum();
    // |z ∧ w| from the 2x2 minors; avoids cancellation at small angles.
    let mut wedge = 0.0;
    for i in 0..z.len() {
        for k in (i + 1)..z.len() {
            wedge += (z[i] * w[k] - z[k] * w[i]).norm_sqr();
        }
    }
    wedge.sqrt().atan2(inner.norm())
}

/// A point distributed by the normalized Fubini-Study volume, returned in its
/// best-conditioned chart.
pub fn fs_uniform_point<R: Rng + ?Sized>(m: usize, rng: &mut R) -> ChartPoint {
    let z: Vec<Complex64> = (0..=m)
        .map(|_| Complex64::new(rng.sample(StandardNormal), rng.sample(StandardNormal)))
        .collect();
    ChartPoint::from_homogeneous(&z, best_chart(&z)).expect("gaussian vector is nonzero")
}
