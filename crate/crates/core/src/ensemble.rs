//! Random sections of O(n) over CP^m and their pointwise jets.
//!
//! A section is stored by its coefficients `a_j` against the orthonormal
//! basis `f_j = z^j / ‖z^j‖` (chart 0, grlex order). Evaluation goes through
//! [`SectionEvaluator`], which rewrites the section once per chart with the
//! common factor `exp(log_offset)` pulled out of every coefficient, so the
//! local polynomials stay O(1) for any degree the crate supports.

use std::collections::HashMap;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fubini::{log_multinomial, multi_indices, ChartPoint, DegreeSpec};
use crate::numerics::CDd;
use crate::rng::{substream, StreamDomain};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EnsembleKind {
    /// i.i.d. complex Gaussian coefficients with `E|a_j|^2 = 1/alpha`.
    Gaussian { alpha: f64 },
    /// `Gaussian { alpha: d_n }`, so that `E‖s‖^2 = 1`.
    NormalizedGaussian,
    /// Haar measure on the unit sphere of the coefficient space.
    Spherical,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnsembleSpec {
    pub kind: EnsembleKind,
    pub degree: DegreeSpec,
    pub seed: u64,
}

impl EnsembleSpec {
    pub fn new(kind: EnsembleKind, degree: DegreeSpec, seed: u64) -> Result<Self> {
        if let EnsembleKind::Gaussian { alpha } = kind {
            if !(alpha > 0.0 && alpha.is_finite()) {
                return Err(Error::InvalidEnsemble(format!(
                    "alpha must be positive, got {alpha}"
                )));
            }
        }
        Ok(Self { kind, degree, seed })
    }

    /// Variance parameter of a Gaussian kind, `None` for the spherical one.
    pub fn alpha(&self) -> Option<f64> {
        match self.kind {
            EnsembleKind::Gaussian { alpha } => Some(alpha),
            EnsembleKind::NormalizedGaussian => Some(self.degree.d_n() as f64),
            EnsembleKind::Spherical => None,
        }
    }

    /// Section number `index` of this ensemble, drawn from its own substream.
    pub fn sample_indexed(&self, index: u64) -> Result<Section> {
        let mut rng = substream(self.seed, StreamDomain::Section, index);
        sample(self, &mut rng)
    }
}

pub fn sample<R: Rng + ?Sized>(spec: &EnsembleSpec, rng: &mut R) -> Result<Section> {
    let d = spec.degree.d_n();
    let mut coeffs: Vec<Complex64> = (0..d)
        .map(|_| {
            let re: f64 = rng.sample(StandardNormal);
            let im: f64 = rng.sample(StandardNormal);
            Complex64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
        })
        .collect();
    match spec.kind {
        EnsembleKind::Spherical => {
            let norm = coeffs.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
            coeffs.iter_mut().for_each(|c| *c /= norm);
        }
        _ => {
            let sd = spec.alpha().expect("gaussian kind").sqrt().recip();
            coeffs.iter_mut().for_each(|c| *c *= sd);
        }
    }
    Section::new(spec.degree, coeffs)
}

/// A holomorphic section given by orthonormal-basis coefficients.
#[derive(Debug, Clone, PartialEq)]
pub struct Section {
    degree: DegreeSpec,
    coeffs: Vec<Complex64>,
}

#[derive(Serialize, Deserialize)]
struct SectionJson {
    n: u32,
    m: u32,
    ordering: String,
    coeffs: Vec<[f64; 2]>,
}

impl Section {
    pub fn new(degree: DegreeSpec, coeffs: Vec<Complex64>) -> Result<Self> {
        if coeffs.len() != degree.d_n() {
            return Err(Error::CoefficientCount {
                expected: degree.d_n(),
                got: coeffs.len(),
            });
        }
        if coeffs
            .iter()
            .any(|c| !c.re.is_finite() || !c.im.is_finite())
        {
            return Err(Error::NonFinite("section coefficient".into()));
        }
        Ok(Self { degree, coeffs })
    }

    /// Section with a single nonzero coefficient at multi-index `j`.
    pub fn basis(degree: DegreeSpec, j: &[u32], coeff: Complex64) -> Result<Self> {
        let pos = multi_indices(degree.n(), degree.m())
            .iter()
            .position(|v| v.as_slice() == j)
            .ok_or(Error::InvalidMultiIndex {
                index: j.to_vec(),
                n: degree.n(),
                m: degree.m(),
            })?;
        let mut coeffs = vec![Complex64::new(0.0, 0.0); degree.d_n()];
        coeffs[pos] = coeff;
        Self::new(degree, coeffs)
    }

    /// Section whose local polynomial in chart 0 is `Σ raw_j z^j`.
    pub fn from_raw_chart0(degree: DegreeSpec, raw: &[(Vec<u32>, Complex64)]) -> Result<Self> {
        let index = index_map(degree);
        let mut coeffs = vec![Complex64::new(0.0, 0.0); degree.d_n()];
        for (j, c) in raw {
            let pos = *index.get(j).ok_or(Error::InvalidMultiIndex {
                index: j.clone(),
                n: degree.n(),
                m: degree.m(),
            })?;
            let norm = crate::fubini::monomial_norm_sq(degree.n(), degree.m(), j)?.sqrt();
            coeffs[pos] += c * norm;
        }
        Self::new(degree, coeffs)
    }

    pub fn degree(&self) -> DegreeSpec {
        self.degree
    }

    pub fn coeffs(&self) -> &[Complex64] {
        &self.coeffs
    }

    pub fn scaled(&self, r: f64) -> Section {
        Section {
            degree: self.degree,
            coeffs: self.coeffs.iter().map(|c| c * r).collect(),
        }
    }

    pub fn l2_norm(&self) -> f64 {
        l2_norm(self)
    }

    /// Relabel homogeneous coordinates: the result is `Z ↦ s(Z_{σ(0)}, .., Z_{σ(m)})`.
    pub fn permute_coordinates(&self, sigma: &[usize]) -> Result<Section> {
        let (n, m) = (self.degree.n(), self.degree.m() as usize);
        if sigma.len() != m + 1 || (0..=m).any(|k| !sigma.contains(&k)) {
            return Err(Error::InvalidArgument(format!(
                "not a permutation of 0..={m}: {sigma:?}"
            )));
        }
        let mut inverse = vec![0; m + 1];
        for (i, &s) in sigma.iter().enumerate() {
            inverse[s] = i;
        }
        let index = index_map(self.degree);
        let mut coeffs = vec![Complex64::new(0.0, 0.0); self.degree.d_n()];
        for (pos, j) in multi_indices(n, m as u32).iter().enumerate() {
            let e = homogeneous_exponent(n, j);
            let e_new: Vec<u32> = (0..=m).map(|k| e[inverse[k]]).collect();
            coeffs[index[&e_new[1..]]] = self.coeffs[pos];
        }
        Section::new(self.degree, coeffs)
    }

    pub fn to_json(&self) -> Result<String> {
        let js = SectionJson {
            n: self.degree.n(),
            m: self.degree.m(),
            ordering: "grlex".into(),
            coeffs: self.coeffs.iter().map(|c| [c.re, c.im]).collect(),
        };
        Ok(serde_json::to_string(&js)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let js: SectionJson = serde_json::from_str(text)?;
        if js.ordering != "grlex" {
            return Err(Error::Serialization(format!(
                "unsupported ordering {:?}",
                js.ordering
            )));
        }
        let degree = DegreeSpec::new(js.n, js.m)?;
        Section::new(
            degree,
            js.coeffs
                .iter()
                .map(|c| Complex64::new(c[0], c[1]))
                .collect(),
        )
    }

    /// Little-endian bytes of all coefficients, for content hashing.
    pub fn coefficient_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(16 * self.coeffs.len() + 8);
        out.extend_from_slice(&self.degree.n().to_le_bytes());
        out.extend_from_slice(&self.degree.m().to_le_bytes());
        for c in &self.coeffs {
            out.extend_from_slice(&c.re.to_bits().to_le_bytes());
            out.extend_from_slice(&c.im.to_bits().to_le_bytes());
        }
        out
    }
}

/// Euclidean norm of the coefficients, which is the L² norm by orthonormality.
pub fn l2_norm(s: &Section) -> f64 {
    s.coeffs.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt()
}

fn index_map(degree: DegreeSpec) -> HashMap<Vec<u32>, usize> {
    multi_indices(degree.n(), degree.m())
        .into_iter()
        .enumerate()
        .map(|(i, j)| (j, i))
        .collect()
}

fn homogeneous_exponent(n: u32, j: &[u32]) -> Vec<u32> {
    let mut e = Vec::with_capacity(j.len() + 1);
    e.push(n - j.iter().sum::<u32>());
    e.extend_from_slice(j);
    e
}

/// Value, covariant gradient and Hermitian norm of a section at a point.
///
/// `value * exp(log_scale) = f e^{-nφ/2}` and likewise for `grad`; `hnorm`
/// is the unscaled `|s|_{h^n}`.
#[derive(Debug, Clone, PartialEq)]
pub struct SectionJet {
    pub log_scale: f64,
    pub value: Complex64,
    pub grad: Vec<Complex64>,
    pub hnorm: f64,
}

/// Local holomorphic data of a section in one chart: `f`, `∂f`, `∂²f`,
/// all carrying the common factor `exp(-log_offset)`.
#[derive(Debug, Clone)]
pub struct LocalJet {
    pub point: ChartPoint,
    /// `1 + |z|^2`
    pub w: f64,
    pub f: Complex64,
    pub df: Vec<Complex64>,
    pub d2f: Option<DMatrix<Complex64>>,
    /// `log_offset - (n/2) ln w`: multiply scaled quantities by `exp` of this
    /// to get `· e^{-nφ/2}` values.
    pub log_scale: f64,
}

impl LocalJet {
    /// `g = ∂f - n ∂φ f` (scaled like `f`, without the `e^{-nφ/2}` factor).
    pub fn connection_gradient(&self, n: u32) -> Vec<Complex64> {
        let nf = n as f64;
        self.df
            .iter()
            .zip(&self.point.coords)
            .map(|(d, z)| d - z.conj() * self.f * (nf / self.w))
            .collect()
    }

    pub fn hnorm(&self) -> f64 {
        self.f.norm() * self.log_scale.exp()
    }
}

#[derive(Debug, Clone)]
struct ChartForm {
    /// Affine exponents in this chart.
    exps: Vec<Vec<u32>>,
    coeffs: Vec<Complex64>,
    /// For m = 1: coefficients indexed by degree, for Horner.
    by_degree: Option<Vec<Complex64>>,
    /// For m = 2: `table[a][b]` multiplies `z_1^a z_2^b`, for nested Horner.
    table: Option<Vec<Vec<Complex64>>>,
}

/// Per-chart local polynomials of a section.
#[derive(Debug, Clone)]
pub struct SectionEvaluator {
    degree: DegreeSpec,
    log_offset: f64,
    l2: f64,
    charts: Vec<ChartForm>,
}

impl SectionEvaluator {
    pub fn new(s: &Section) -> Self {
        let degree = s.degree;
        let (n, m) = (degree.n(), degree.m() as usize);
        let d = degree.d_n() as f64;
        let indices = multi_indices(n, m as u32);
        let half_logs: Vec<f64> = indices
            .iter()
            .map(|j| 0.5 * (d.ln() + log_multinomial(n, j)))
            .collect();
        let log_offset = half_logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let scaled: Vec<Complex64> = s
            .coeffs
            .iter()
            .zip(&half_logs)
            .map(|(a, h)| a * (h - log_offset).exp())
            .collect();
        let homog: Vec<Vec<u32>> = indices.iter().map(|j| homogeneous_exponent(n, j)).collect();
        let charts = (0..=m)
            .map(|k| {
                let exps: Vec<Vec<u32>> = homog
                    .iter()
                    .map(|e| {
                        e.iter()
                            .enumerate()
                            .filter(|(i, _)| *i != k)
                            .map(|(_, &v)| v)
                            .collect()
                    })
                    .collect();
                let by_degree = (m == 1).then(|| {
                    let mut v = vec![Complex64::new(0.0, 0.0); n as usize + 1];
                    for (e, c) in exps.iter().zip(&scaled) {
                        v[e[0] as usize] = *c;
                    }
                    v
                });
                let table = (m == 2).then(|| {
                    let mut t: Vec<Vec<Complex64>> = (0..=n as usize)
                        .map(|a| vec![Complex64::new(0.0, 0.0); n as usize + 1 - a])
                        .collect();
                    for (e, c) in exps.iter().zip(&scaled) {
                        t[e[0] as usize][e[1] as usize] = *c;
                    }
                    t
                });
                ChartForm {
                    exps,
                    coeffs: scaled.clone(),
                    by_degree,
                    table,
                }
            })
            .collect();
        Self {
            degree,
            log_offset,
            l2: l2_norm(s),
            charts,
        }
    }

    pub fn degree(&self) -> DegreeSpec {
        self.degree
    }

    pub fn l2(&self) -> f64 {
        self.l2
    }

    pub fn log_offset(&self) -> f64 {
        self.log_offset
    }

    /// Local jet at `p` in `p`'s own chart; `second` also computes `∂²f`.
    pub fn local_jet(&self, p: &ChartPoint, second: bool) -> LocalJet {
        let n = self.degree.n() as usize;
        let form = &self.charts[p.chart];
        let z = &p.coords;
        let m = z.len();
        let w = 1.0 + p.norm_sq();
        let zero = Complex64::new(0.0, 0.0);
        let (f, df, d2f) = if let Some(cs) = &form.by_degree {
            // Horner for f, f', f''.
            let x = z[0];
            let (mut p0, mut p1, mut p2) = (cs[n], zero, zero);
            for k in (0..n).rev() {
                p2 = p2 * x + p1 * 2.0;
                p1 = p1 * x + p0;
                p0 = p0 * x + cs[k];
            }
            (
                p0,
                vec![p1],
                second.then(|| DMatrix::from_element(1, 1, p2)),
            )
        } else if let Some(t) = &form.table {
            let (x, y) = (z[0], z[1]);
            // Horner in z_1 over jets in z_2; `v*` are f-parts, `u*` are ∂_1f-parts.
            let (mut v, mut v2, mut v22) = (zero, zero, zero);
            let (mut u, mut u2, mut u11) = (zero, zero, zero);
            for row in t.iter().rev() {
                let (mut g0, mut g1, mut g2) = (zero, zero, zero);
                for &cb in row.iter().rev() {
                    g2 = g2 * y + g1 * 2.0;
                    g1 = g1 * y + g0;
                    g0 = g0 * y + cb;
                }
                u11 = u11 * x + u * 2.0;
                u = u * x + v;
                u2 = u2 * x + v2;
                v = v * x + g0;
                v2 = v2 * x + g1;
                v22 = v22 * x + g2;
            }
            let d2 = second.then(|| DMatrix::from_row_slice(2, 2, &[u11, u2, u2, v22]));
            (v, vec![u, v2], d2)
        } else {
            let pw: Vec<Vec<Complex64>> = z
                .iter()
                .map(|&zi| {
                    let mut v = Vec::with_capacity(n + 1);
                    let mut acc = Complex64::new(1.0, 0.0);
                    for _ in 0..=n {
                        v.push(acc);
                        acc *= zi;
                    }
                    v
                })
                .collect();
            let mut f = zero;
            let mut df = vec![zero; m];
            let mut d2 = DMatrix::from_element(m, m, zero);
            for (e, c) in form.exps.iter().zip(&form.coeffs) {
                if *c == zero {
                    continue;
                }
                let mono_except = |skip: &[usize]| -> Complex64 {
                    let mut acc = *c;
                    for i in 0..m {
                        if !skip.contains(&i) {
                            acc *= pw[i][e[i] as usize];
                        }
                    }
                    acc
                };
                f += mono_except(&[]);
                for i in 0..m {
                    if e[i] == 0 {
                        continue;
                    }
                    let base = mono_except(&[i]);
                    df[i] += base * pw[i][e[i] as usize - 1] * e[i] as f64;
                    if second {
                        if e[i] >= 2 {
                            d2[(i, i)] += base
                                * pw[i][e[i] as usize - 2]
                                * (e[i] as f64 * (e[i] as f64 - 1.0));
                        }
                        for k in (i + 1)..m {
                            if e[k] == 0 {
                                continue;
                            }
                            let v = mono_except(&[i, k])
                                * pw[i][e[i] as usize - 1]
                                * pw[k][e[k] as usize - 1]
                                * (e[i] as f64 * e[k] as f64);
                            d2[(i, k)] += v;
                            d2[(k, i)] += v;
                        }
                    }
                }
            }
            (f, df, second.then_some(d2))
        };
        LocalJet {
            point: p.clone(),
            w,
            f,
            df,
            d2f,
            log_scale: self.log_offset - 0.5 * self.degree.n() as f64 * w.ln(),
        }
    }

    /// `f` and `∂f` at `p` with double-double accumulation (scaled like
    /// [`LocalJet::f`]).
    pub fn accurate_value_and_gradient(&self, p: &ChartPoint) -> (Complex64, Vec<Complex64>) {
        let form = &self.charts[p.chart];
        let m = p.dim();
        let zs: Vec<CDd> = p.coords.iter().map(|&c| CDd::from_c64(c)).collect();
        let one = CDd::from_c64(Complex64::new(1.0, 0.0));
        let mut f = CDd::default();
        let mut df = vec![CDd::default(); m];
        for (e, c) in form.exps.iter().zip(&form.coeffs) {
            let cd = CDd::from_c64(*c);
            let mut pw = vec![one; m];
            let mut pw_low = vec![one; m];
            for i in 0..m {
                for k in 0..e[i] {
                    if k + 1 == e[i] {
                        pw_low[i] = pw[i];
                    }
                    pw[i] = pw[i].mul(zs[i]);
                }
            }
            let mut mono = cd;
            for v in &pw {
                mono = mono.mul(*v);
            }
            f = f.add(mono);
            for i in 0..m {
                if e[i] == 0 {
                    continue;
                }
                let mut t = cd.scale(e[i] as f64).mul(pw_low[i]);
                for (l, v) in pw.iter().enumerate() {
                    if l != i {
                        t = t.mul(*v);
                    }
                }
                df[i] = df[i].add(t);
            }
        }
        (f.to_c64(), df.into_iter().map(CDd::to_c64).collect())
    }
}

/// Value, covariant gradient and Hermitian norm of `s` at `p`.
pub fn eval_jet(s: &Section, p: &ChartPoint) -> Result<SectionJet> {
    eval_jet_with(&SectionEvaluator::new(s), p)
}

pub fn eval_jet_with(ev: &SectionEvaluator, p: &ChartPoint) -> Result<SectionJet> {
    if p.dim() != ev.degree.m() as usize {
        return Err(Error::InvalidChart {
            chart: p.chart,
            m: p.dim(),
        });
    }
    let jet = ev.local_jet(p, false);
    let grad = jet.connection_gradient(ev.degree.n());
    let hnorm = jet.hnorm();
    let finite = |c: &Complex64| c.re.is_finite() && c.im.is_finite();
    if !finite(&jet.f) || !grad.iter().all(finite) || !hnorm.is_finite() {
        return Err(Error::NonFinite(format!("section jet at {p:?}")));
    }
    Ok(SectionJet {
        log_scale: jet.log_scale,
        value: jet.f,
        grad,
        hnorm,
    })
}
