//! Relations between ensembles: the α-scaling law and the Laplace transform
//! taking a spherical density to the Gaussian density at any α.
//!
//! `D^α(x) = α^d / Γ(d) ∫_0^∞ D^S(x ρ^{-1/2}) ρ^{d - 3/2} e^{-αρ} dρ` with
//! `d = d_n`. The Gamma-type weight is evaluated in log space around its mode
//! `ρ* = (d - 3/2)/α` and exponentiated only after subtracting the maximum.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::densities::{DensityCurve, Provenance};
use crate::error::{Error, Result};
use crate::fubini::DegreeSpec;
use crate::numerics::{composite_gauss_legendre, CompensatedSum};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BridgeSpec {
    pub n: u32,
    pub d_n: usize,
    pub alpha: f64,
    pub panels: usize,
    pub order: usize,
    /// Half-width of the ρ window in units of `ρ*/sqrt(d)`.
    pub window: f64,
}

impl BridgeSpec {
    pub fn new(degree: DegreeSpec, alpha: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha.is_finite()) {
            return Err(Error::InvalidEnsemble(format!(
                "alpha must be positive, got {alpha}"
            )));
        }
        Ok(Self {
            n: degree.n(),
            d_n: degree.d_n(),
            alpha,
            panels: 100,
            order: 20,
            window: 12.0,
        })
    }

    /// `[lo, hi]` of ρ outside which the weight is negligible.
    fn rho_window(&self) -> (f64, f64) {
        let d = self.d_n as f64;
        let k = d - 0.5;
        let mode = (d - 1.5).max(0.0) / self.alpha;
        let (mean, sd) = (k / self.alpha, k.sqrt() / self.alpha);
        let half = self.window * mode / d.sqrt();
        (
            (mode - half).max(0.0),
            (mode + half).max(mean + (self.window + 2.0) * sd),
        )
    }
}

/// `D^α` from `D^1` by `D^α(x) = sqrt(α) D^1(sqrt(α) x)`; mass preserving.
pub fn scale_density(c: &DensityCurve, alpha: f64) -> Result<DensityCurve> {
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(Error::InvalidEnsemble(format!(
            "alpha must be positive, got {alpha}"
        )));
    }
    let r = alpha.sqrt();
    let mut out = c.clone();
    out.grid.iter_mut().for_each(|x| *x /= r);
    out.values.iter_mut().for_each(|v| *v *= r);
    out.stderr.iter_mut().for_each(|v| *v *= r);
    out.provenance.alpha = Some(c.provenance.alpha.unwrap_or(1.0) * alpha);
    out.provenance
        .flags
        .push(format!("scaled_by_alpha={alpha}"));
    Ok(out)
}

/// Gaussian density at `spec.alpha` from a tabulated spherical density,
/// interpolated monotonically and taken as zero outside its grid.
pub fn laplace_bridge(
    spherical: &DensityCurve,
    spec: &BridgeSpec,
    xs: &[f64],
) -> Result<DensityCurve> {
    let interp = spherical.interpolant();
    let (u0, u1) = (spherical.grid[0], spherical.grid[spherical.grid.len() - 1]);
    // A curve that has reached zero at its right end has its support resolved.
    let resolved = spherical.values[spherical.values.len() - 1] == 0.0;
    let support_end = if resolved {
        let last = spherical
            .values
            .iter()
            .rposition(|v| *v != 0.0)
            .map_or(0, |i| i + 1);
        spherical.grid[last.min(spherical.grid.len() - 1)]
    } else {
        f64::INFINITY
    };
    let f = |u: f64| interp.eval(u).unwrap_or(0.0);
    let check = |x: f64, lo_u: f64, hi_u: f64| -> Result<()> {
        if x > 0.0 && ((lo_u < u0 && u0 > 0.0) || (!resolved && hi_u > u1)) {
            return Err(Error::BridgeSupport {
                x,
                lo: lo_u,
                hi: hi_u,
            });
        }
        Ok(())
    };
    let mut curve = bridge_impl(&f, support_end, spec, xs, check)?;
    curve.provenance.variant = spherical.provenance.variant.clone();
    Ok(curve)
}

/// As [`laplace_bridge`], for a spherical density given as a function that
/// vanishes beyond `support_end`.
pub fn laplace_bridge_fn<F: Fn(f64) -> f64 + Sync>(
    spherical: F,
    support_end: f64,
    spec: &BridgeSpec,
    xs: &[f64],
) -> Result<DensityCurve> {
    bridge_impl(&spherical, support_end, spec, xs, |_, _, _| Ok(()))
}

fn bridge_impl<F, C>(
    f: &F,
    support_end: f64,
    spec: &BridgeSpec,
    xs: &[f64],
    check: C,
) -> Result<DensityCurve>
where
    F: Fn(f64) -> f64 + Sync,
    C: Fn(f64, f64, f64) -> Result<()> + Sync,
{
    let d = spec.d_n as f64;
    let alpha = spec.alpha;
    let log_weight = |rho: f64| d * alpha.ln() - ln_gamma(d) + (d - 1.5) * rho.ln() - alpha * rho;
    let (w_lo, w_hi) = spec.rho_window();
    let values: Vec<f64> = xs
        .par_iter()
        .map(|&x| -> Result<f64> {
            if x <= 0.0 {
                return Ok(0.0);
            }
            // D^S(x/sqrt ρ) = 0 once x/sqrt ρ exceeds the support.
            let lo = w_lo.max((x / support_end).powi(2));
            let hi = w_hi;
            check(x, x / hi.sqrt(), x / lo.sqrt())?;
            if lo >= hi {
                return Ok(0.0);
            }
            let (nodes, weights) = composite_gauss_legendre(lo, hi, spec.panels, spec.order);
            let logs: Vec<f64> = nodes.iter().map(|&r| log_weight(r)).collect();
            let top = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let sum: CompensatedSum = nodes
                .iter()
                .zip(&weights)
                .zip(&logs)
                .map(|((&r, &w), &l)| w * (l - top).exp() * f(x / r.sqrt()))
                .collect();
            let s = sum.value();
            Ok(if s <= 0.0 {
                s.max(0.0)
            } else {
                (top + s.ln()).exp()
            })
        })
        .collect::<Result<_>>()?;
    let provenance = Provenance {
        formula: "laplace_bridge".into(),
        n: Some(spec.n),
        m: 0,
        alpha: Some(alpha),
        ..Default::default()
    };
    DensityCurve::from_samples(xs.to_vec(), values, provenance)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateRow {
    pub n: u32,
    pub sup_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateTable {
    pub rows: Vec<RateRow>,
    /// Least-squares slope of `ln(sup_error)` against `ln n`.
    pub slope: f64,
    pub monotone_decreasing: bool,
}

impl RateTable {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("n,sup_error\n");
        for r in &self.rows {
            out.push_str(&format!("{},{:.16e}\n", r.n, r.sup_error));
        }
        out
    }
}

/// Sup-norm distance of `producer(n)` to `target` over `target`'s grid, and
/// the log-log slope of those errors.
pub fn convergence_report<P>(ns: &[u32], producer: P, target: &DensityCurve) -> Result<RateTable>
where
    P: Fn(u32) -> Result<DensityCurve>,
{
    if ns.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidArgument(format!(
            "degrees must be increasing: {ns:?}"
        )));
    }
    let rows = ns
        .iter()
        .map(|&n| {
            let c = producer(n)?;
            let sup_error = if c.grid == target.grid {
                c.values
                    .iter()
                    .zip(&target.values)
                    .map(|(a, b)| (a - b).abs())
                    .fold(0.0, f64::max)
            } else {
                let p = c.interpolant();
                target
                    .grid
                    .iter()
                    .zip(&target.values)
                    .map(|(x, b)| (p.eval(*x).unwrap_or(0.0) - b).abs())
                    .fold(0.0, f64::max)
            };
            Ok(RateRow { n, sup_error })
        })
        .collect::<Result<Vec<_>>>()?;
    let slope = log_log_slope(&rows);
    let monotone_decreasing = rows.windows(2).all(|w| w[1].sup_error < w[0].sup_error);
    Ok(RateTable {
        rows,
        slope,
        monotone_decreasing,
    })
}

fn log_log_slope(rows: &[RateRow]) -> f64 {
    let pts: Vec<(f64, f64)> = rows
        .iter()
        .filter(|r| r.sup_error > 0.0)
        .map(|r| ((r.n as f64).ln(), r.sup_error.ln()))
        .collect();
    if pts.len() < 2 {
        return 0.0;
    }
    let k = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / k;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / k;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    sxy / sxx
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::densities::{
        d_inf_curve_m1, d_su2_spherical, d_su_gaussian, su2_spherical_fn, uniform_grid,
        value_density, GaussianDensitySpec, Su2SphericalVariant, ValueKind,
    };
    use crate::ensemble::EnsembleKind;
    use std::f64::consts::PI;

    #[test]
    fn unit_scaling_is_identity_and_mass_preserving() {
        let c = d_su_gaussian(
            20,
            1,
            &uniform_grid(0.0, 5.0, 501),
            &GaussianDensitySpec::default(),
        )
        .unwrap();
        let same = scale_density(&c, 1.0).unwrap();
        assert_eq!(same.grid, c.grid);
        assert_eq!(same.values, c.values);
        for a in [0.3, 10.0, 21.0] {
            let s = scale_density(&c, a).unwrap();
            assert!(
                (crate::densities::curve_mass(&s) - crate::densities::curve_mass(&c)).abs() < 1e-12
            );
        }
    }

    #[test]
    fn scaling_reaches_normalized_ensemble() {
        let n = 20;
        let d = 21.0;
        let xs = uniform_grid(0.0, 20.0, 401);
        let one = d_su_gaussian(
            n,
            1,
            &xs,
            &GaussianDensitySpec {
                alpha: Some(1.0),
                ..Default::default()
            },
        )
        .unwrap();
        let scaled = scale_density(&one, d).unwrap();
        let direct = d_su_gaussian(n, 1, &scaled.grid, &GaussianDensitySpec::default()).unwrap();
        for (a, b) in scaled.values.iter().zip(&direct.values) {
            assert!((a - b).abs() < 1e-12);
        }
        assert!((scaled.argmax() - one.argmax() / d.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn bridge_of_zero_is_zero() {
        let us = uniform_grid(0.0, 6.0, 100);
        let zero =
            DensityCurve::from_samples(us.clone(), vec![0.0; 100], Provenance::default()).unwrap();
        let spec = BridgeSpec::new(DegreeSpec::new(10, 1).unwrap(), 11.0).unwrap();
        let out = laplace_bridge(&zero, &spec, &uniform_grid(0.1, 3.0, 20)).unwrap();
        assert!(out.values.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn spherical_value_curve_bridges_to_gaussian_value_curve() {
        // K u (1 - u^2/d)^{d-2}  ->  (K α/(d-1)) x e^{-α x^2/d}
        for (n, m) in [(30u32, 1u32), (10, 2)] {
            let degree = DegreeSpec::new(n, m).unwrap();
            let d = degree.d_n() as f64;
            let us = uniform_grid(0.0, d.sqrt(), 6001);
            let s = value_density(ValueKind::Ensemble(EnsembleKind::Spherical), n, m, &us).unwrap();
            for alpha in [1.0, d] {
                let spec = BridgeSpec::new(degree, alpha).unwrap();
                let xs = uniform_grid(0.05, 3.0 * (d / alpha).sqrt(), 40);
                let out = laplace_bridge(&s, &spec, &xs).unwrap();
                for (x, v) in xs.iter().zip(&out.values) {
                    let expect = 2.0 * alpha / (d - 1.0) * x * (-alpha * x * x / d).exp();
                    assert!(
                        (v - expect).abs() < 1e-5 * expect.max(1e-3),
                        "n={n} α={alpha} x={x}: {v} vs {expect}"
                    );
                }
            }
        }
    }

    #[test]
    fn bridge_is_finite_at_large_dimension() {
        let degree = DegreeSpec::new(9999, 1).unwrap();
        let d = degree.d_n() as f64;
        let spec = BridgeSpec::new(degree, d).unwrap();
        let e = degree.d_n() as i32 - 2;
        let f = move |u: f64| {
            if u * u < d {
                2.0 * u * (1.0 - u * u / d).powi(e)
            } else {
                0.0
            }
        };
        let xs = uniform_grid(0.1, 3.0, 30);
        let out = laplace_bridge_fn(f, d.sqrt(), &spec, &xs).unwrap();
        for (x, v) in xs.iter().zip(&out.values) {
            let expect = 2.0 * d / (d - 1.0) * x * (-x * x).exp();
            assert!(v.is_finite() && (v - expect).abs() < 1e-6 * expect, "x={x}");
        }
    }

    #[test]
    fn exact_spherical_bridges_to_exact_gaussian() {
        for n in [5u32, 30, 60] {
            let degree = DegreeSpec::new(n, 1).unwrap();
            let d = degree.d_n() as f64;
            let us = uniform_grid(0.0, d.sqrt() + 0.5, 8001);
            let s = d_su2_spherical(n, &us, Su2SphericalVariant::Exact, None).unwrap();
            let xs = uniform_grid(0.2, 3.0, 57);
            let out = laplace_bridge(&s, &BridgeSpec::new(degree, d).unwrap(), &xs).unwrap();
            let g = d_su_gaussian(n, 1, &xs, &GaussianDensitySpec::default()).unwrap();
            for ((x, a), b) in xs.iter().zip(&out.values).zip(&g.values) {
                assert!((a - b).abs() <= 1e-3 * b, "n={n} x={x}: {a} vs {b}");
            }
        }
    }

    /// The n = 2 spherical density jumps at its support edge; the pointwise
    /// bridge keeps the error at quadrature level.
    #[test]
    fn pointwise_spherical_bridge_handles_the_jump() {
        for n in [2u32, 3] {
            let degree = DegreeSpec::new(n, 1).unwrap();
            let d = degree.d_n() as f64;
            let (f, support) = su2_spherical_fn(n, Su2SphericalVariant::Exact, None).unwrap();
            let xs = uniform_grid(0.2, 3.0, 57);
            let out =
                laplace_bridge_fn(f, support, &BridgeSpec::new(degree, d).unwrap(), &xs).unwrap();
            let g = d_su_gaussian(n, 1, &xs, &GaussianDensitySpec::default()).unwrap();
            for ((x, a), b) in xs.iter().zip(&out.values).zip(&g.values) {
                assert!((a - b).abs() <= 1e-4 * b, "n={n} x={x}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn bridging_commutes_with_scaling() {
        let degree = DegreeSpec::new(20, 1).unwrap();
        let us = uniform_grid(0.0, 5.0, 4001);
        let s = d_su2_spherical(20, &us, Su2SphericalVariant::Exact, None).unwrap();
        let xs = uniform_grid(0.3, 2.5, 12);
        let at_one = laplace_bridge(
            &s,
            &BridgeSpec::new(degree, 1.0).unwrap(),
            &xs.iter().map(|x| x * 21f64.sqrt()).collect::<Vec<_>>(),
        )
        .unwrap();
        let rescaled = scale_density(&at_one, 21.0).unwrap();
        let direct =
            laplace_bridge(&s, &BridgeSpec::new(degree, 21.0).unwrap(), &rescaled.grid).unwrap();
        for (a, b) in rescaled.values.iter().zip(&direct.values) {
            assert!((a - b).abs() < 1e-6 * b.abs().max(1e-12));
        }
    }

    #[test]
    fn insufficient_support_is_reported() {
        let degree = DegreeSpec::new(30, 1).unwrap();
        let us = uniform_grid(0.0, 2.0, 200);
        let s = d_su2_spherical(30, &us, Su2SphericalVariant::Exact, None).unwrap();
        let err =
            laplace_bridge(&s, &BridgeSpec::new(degree, 31.0).unwrap(), &[1.5, 2.5]).unwrap_err();
        assert!(matches!(err, Error::BridgeSupport { .. }));
    }

    #[test]
    fn gaussian_convergence_rate_is_first_order() {
        let xs = uniform_grid(0.0, 4.0, 401);
        let lim = d_inf_curve_m1(&xs, PI).unwrap();
        let table = convergence_report(
            &[16, 32, 64, 128],
            |n| d_su_gaussian(n, 1, &xs, &GaussianDensitySpec::default()),
            &lim,
        )
        .unwrap();
        assert!((table.slope + 1.0).abs() < 0.15, "slope {}", table.slope);
        assert!(table.monotone_decreasing);
    }

    #[test]
    fn spherical_errors_decrease() {
        let us = uniform_grid(0.0, 6.0, 601);
        let lim = d_inf_curve_m1(&us, PI).unwrap();
        let table = convergence_report(
            &[8, 16, 32, 64],
            |n| d_su2_spherical(n, &us, Su2SphericalVariant::Exact, None),
            &lim,
        )
        .unwrap();
        assert!(table.monotone_decreasing, "{:?}", table.rows);
    }

    #[test]
    fn constant_producer_has_zero_slope() {
        let xs = uniform_grid(0.0, 4.0, 41);
        let lim = d_inf_curve_m1(&xs, PI).unwrap();
        let other = d_su_gaussian(10, 1, &xs, &GaussianDensitySpec::default()).unwrap();
        let table = convergence_report(&[2, 4, 8], |_| Ok(other.clone()), &lim).unwrap();
        assert!(table.slope.abs() < 1e-12);
        assert!(!table.monotone_decreasing);
    }
}
