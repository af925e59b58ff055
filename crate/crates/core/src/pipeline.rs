//! Seeded section pools: critical sets and point values of sampled sections.
//!
//! Section `i` of a pool is `EnsembleSpec::sample_indexed(i)`, so a pool of
//! `k` sections is a prefix of every larger pool with the same seed.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::critfind::{
    empirical_cv, find_critical_set, CritFindConfig, CriticalSet, EmpiricalMeasure,
};
use crate::ensemble::{EnsembleSpec, SectionEvaluator};
use crate::error::Result;
use crate::fubini::fs_uniform_point;
use crate::rng::{substream, StreamDomain};

/// Critical sets of sections `0..samples`, in index order.
pub fn critical_pool(
    spec: &EnsembleSpec,
    samples: usize,
    cfg: &CritFindConfig,
) -> Result<Vec<CriticalSet>> {
    (0..samples as u64)
        .into_par_iter()
        .map(|i| {
            let s = spec.sample_indexed(i)?;
            let mut set = find_critical_set(&s, cfg)?;
            set.sample_id = i;
            Ok(set)
        })
        .collect()
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PoolCounts {
    pub complete: usize,
    pub incomplete: usize,
    pub degenerate: usize,
}

/// Empirical measures of the complete sets, and the status tally of all.
pub fn critical_measures(sets: &[CriticalSet]) -> (Vec<EmpiricalMeasure>, PoolCounts) {
    let mut counts = PoolCounts::default();
    let mut out = Vec::with_capacity(sets.len());
    for s in sets {
        match s.status {
            crate::critfind::SearchStatus::Complete => counts.complete += 1,
            crate::critfind::SearchStatus::Incomplete => counts.incomplete += 1,
            crate::critfind::SearchStatus::Degenerate => counts.degenerate += 1,
        }
        if let Ok(m) = empirical_cv(s) {
            out.push(m);
        }
    }
    (out, counts)
}

/// `|s(z)|_{h^n}` at `points` FS-uniform points per section; each section is
/// one measure of weight `1/points`.
pub fn value_pool(
    spec: &EnsembleSpec,
    samples: usize,
    points: usize,
) -> Result<Vec<EmpiricalMeasure>> {
    let m = spec.degree.m() as usize;
    (0..samples as u64)
        .into_par_iter()
        .map(|i| {
            let s = spec.sample_indexed(i)?;
            let ev = SectionEvaluator::new(&s);
            let mut rng = substream(spec.seed, StreamDomain::ValuePoints, i);
            let values = (0..points)
                .map(|_| ev.local_jet(&fs_uniform_point(m, &mut rng), false).hnorm())
                .collect();
            Ok(EmpiricalMeasure {
                values,
                weight: 1.0 / points as f64,
                sample_id: i,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ensemble::EnsembleKind;
    use crate::fubini::DegreeSpec;

    #[test]
    fn pools_are_prefix_stable() {
        let spec =
            EnsembleSpec::new(EnsembleKind::Spherical, DegreeSpec::new(4, 1).unwrap(), 3).unwrap();
        let a = value_pool(&spec, 3, 4).unwrap();
        let b = value_pool(&spec, 5, 4).unwrap();
        assert_eq!(a[..], b[..3]);
        let cfg = CritFindConfig::default();
        let c = critical_pool(&spec, 2, &cfg).unwrap();
        let d = critical_pool(&spec, 3, &cfg).unwrap();
        assert_eq!(c[..], d[..2]);
        assert_eq!(d[2].sample_id, 2);
    }
}
