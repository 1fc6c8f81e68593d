//! Throughput-optimal access probability and the d_max sweep built on it.
//!
//! The optimum is first located on a coarse q-grid and then refined by
//! golden-section search in log q over the two grid cells around the grid
//! argmax. S(q) is unimodal but drops off a cliff above the optimum, so the
//! grid argmax is kept whenever the refinement does not beat it.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analysis::{analyze_with, Analysis};
use crate::config::SystemConfig;
use crate::error::{Error, Result};
use crate::markov::analyze_stationary;
use crate::tables::{ConditionalTables, TableFamily};

/// `points` values from `from` to `to`, equally spaced in log scale.
pub fn log_grid(from: f64, to: f64, points: usize) -> Result<Vec<f64>> {
    check_range(from, to, points)?;
    if from <= 0.0 {
        return Err(Error::param("from", "log grids need a positive start"));
    }
    if points == 1 {
        return Ok(vec![from]);
    }
    let (a, b) = (from.ln(), to.ln());
    Ok((0..points)
        .map(|i| {
            if i == 0 {
                from
            } else if i + 1 == points {
                to
            } else {
                (a + (b - a) * i as f64 / (points - 1) as f64).exp()
            }
        })
        .collect())
}

/// `points` values from `from` to `to`, equally spaced.
pub fn lin_grid(from: f64, to: f64, points: usize) -> Result<Vec<f64>> {
    check_range(from, to, points)?;
    if points == 1 {
        return Ok(vec![from]);
    }
    Ok((0..points)
        .map(|i| {
            if i + 1 == points {
                to
            } else {
                from + (to - from) * i as f64 / (points - 1) as f64
            }
        })
        .collect())
}

fn check_range(from: f64, to: f64, points: usize) -> Result<()> {
    if points == 0 {
        return Err(Error::param("points", "grid needs at least one point"));
    }
    if !(from.is_finite() && to.is_finite() && from <= to) {
        return Err(Error::param("from", format!("bad range {from}..{to}")));
    }
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum QMethod {
    /// Refined by golden-section search.
    Golden,
    /// Best coarse-grid point.
    Grid,
}

impl QMethod {
    pub fn as_str(self) -> &'static str {
        match self {
            QMethod::Golden => "golden",
            QMethod::Grid => "grid",
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct QOptimum {
    pub q: f64,
    pub method: QMethod,
    pub analysis: Analysis,
    /// Table builds spent on refinement.
    pub evaluations: usize,
}

/// Settings for the golden-section refinement.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Refinement {
    pub enabled: bool,
    /// Stop when the bracket is narrower than this in log q.
    pub log_tol: f64,
    pub max_evaluations: usize,
}

impl Default for Refinement {
    fn default() -> Self {
        Refinement {
            enabled: true,
            log_tol: 0.01,
            max_evaluations: 20,
        }
    }
}

fn throughput_at(base: &SystemConfig, q: f64) -> Result<f64> {
    let cfg = base.with_tx_prob(q)?;
    let tables = ConditionalTables::build(&cfg)?;
    Ok(analyze_stationary(&cfg, &tables)?.throughput)
}

/// Refines the coarse optimum `coarse` (pairs of q and its analysis, q
/// ascending, all sharing `base` apart from q).
pub fn refine_q(base: &SystemConfig, coarse: &[(f64, Analysis)], refine: Refinement) -> Result<QOptimum> {
    let best = coarse
        .iter()
        .enumerate()
        .max_by(|a, b| a.1 .1.throughput().total_cmp(&b.1 .1.throughput()))
        .map(|(i, _)| i)
        .ok_or_else(|| Error::param("q", "empty q-grid"))?;
    let grid_opt = QOptimum {
        q: coarse[best].0,
        method: QMethod::Grid,
        analysis: coarse[best].1.clone(),
        evaluations: 0,
    };
    if !refine.enabled || coarse.len() < 3 {
        return Ok(grid_opt);
    }
    let lo = coarse[best.saturating_sub(1)].0.ln();
    let hi = coarse[(best + 1).min(coarse.len() - 1)].0.ln();

    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = (lo, hi);
    let mut x1 = b - inv_phi * (b - a);
    let mut x2 = a + inv_phi * (b - a);
    let mut f1 = throughput_at(base, x1.exp())?;
    let mut f2 = throughput_at(base, x2.exp())?;
    let mut evaluations = 2;
    while b - a > refine.log_tol && evaluations < refine.max_evaluations {
        if f1 >= f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - inv_phi * (b - a);
            f1 = throughput_at(base, x1.exp())?;
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + inv_phi * (b - a);
            f2 = throughput_at(base, x2.exp())?;
        }
        evaluations += 1;
    }
    let (x, f) = if f1 >= f2 { (x1, f1) } else { (x2, f2) };
    if f <= grid_opt.analysis.throughput() {
        return Ok(QOptimum {
            evaluations,
            ..grid_opt
        });
    }
    let cfg = base.with_tx_prob(x.exp())?;
    let analysis = analyze_with(&cfg, &ConditionalTables::build(&cfg)?)?;
    Ok(QOptimum {
        q: cfg.tx_prob(),
        method: QMethod::Golden,
        analysis,
        evaluations: evaluations + 1,
    })
}

/// Analyses for every `q` in `qs` (one table build each).
pub fn analyze_q_grid(base: &SystemConfig, qs: &[f64]) -> Result<Vec<(f64, Analysis)>> {
    qs.par_iter()
        .map(|&q| {
            let cfg = base.with_tx_prob(q)?;
            Ok((q, analyze_with(&cfg, &ConditionalTables::build(&cfg)?)?))
        })
        .collect()
}

/// Throughput-optimal q for `base` (its own q is ignored).
pub fn optimize_q(base: &SystemConfig, coarse_q: &[f64], refine: Refinement) -> Result<QOptimum> {
    refine_q(base, &analyze_q_grid(base, coarse_q)?, refine)
}

#[derive(Clone, Debug, Serialize)]
pub struct DmaxPoint {
    pub load: f64,
    pub dmax: usize,
    pub optimum: QOptimum,
}

/// For every load and d_max, the throughput-optimal q with its analysis.
/// The coarse stage builds one table family per grid q, covering every d_max
/// and load at once, since tables do not depend on the load.
pub fn sweep_dmax(
    num_users: usize,
    loads: &[f64],
    dmaxs: &[usize],
    coarse_q: &[f64],
    refine: Refinement,
) -> Result<Vec<DmaxPoint>> {
    let horizon = *dmaxs
        .iter()
        .max()
        .ok_or_else(|| Error::param("dmax", "empty d_max grid"))?;
    let mut qs = coarse_q.to_vec();
    qs.sort_by(f64::total_cmp);
    // coarse[q][load][dmax]
    let coarse: Vec<Vec<Vec<Analysis>>> = qs
        .par_iter()
        .map(|&q| {
            let family = TableFamily::build(num_users, q, horizon)?;
            loads
                .iter()
                .map(|&load| {
                    dmaxs
                        .iter()
                        .map(|&dmax| {
                            let cfg = SystemConfig::with_load(num_users, q, load, dmax)?;
                            analyze_with(&cfg, &family.tables(dmax)?)
                        })
                        .collect()
                })
                .collect()
        })
        .collect::<Result<_>>()?;

    let jobs: Vec<(usize, usize)> = (0..loads.len())
        .flat_map(|l| (0..dmaxs.len()).map(move |k| (l, k)))
        .collect();
    jobs.par_iter()
        .map(|&(l, k)| {
            let base = SystemConfig::with_load(num_users, qs[0], loads[l], dmaxs[k])?;
            let column: Vec<(f64, Analysis)> = qs
                .iter()
                .zip(&coarse)
                .map(|(&q, per_q)| (q, per_q[l][k].clone()))
                .collect();
            Ok(DmaxPoint {
                load: loads[l],
                dmax: dmaxs[k],
                optimum: refine_q(&base, &column, refine)?,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grids() {
        let g = log_grid(0.002, 0.5, 40).unwrap();
        assert_eq!(g.len(), 40);
        assert_eq!((g[0], g[39]), (0.002, 0.5));
        let ratio = g[1] / g[0];
        for w in g.windows(2) {
            assert!((w[1] / w[0] - ratio).abs() < 1e-12);
        }
        assert_eq!(lin_grid(1.0, 2.0, 3).unwrap(), vec![1.0, 1.5, 2.0]);
        assert_eq!(log_grid(0.1, 0.1, 1).unwrap(), vec![0.1]);
        assert!(log_grid(0.0, 1.0, 4).is_err());
        assert!(lin_grid(2.0, 1.0, 4).is_err());
        assert!(lin_grid(0.0, 1.0, 0).is_err());
    }

    #[test]
    fn refinement_never_loses_to_the_grid() {
        let base = SystemConfig::with_load(12, 0.1, 0.6, 15).unwrap();
        let qs = log_grid(0.02, 0.6, 8).unwrap();
        let coarse = analyze_q_grid(&base, &qs).unwrap();
        let grid_best = coarse.iter().map(|c| c.1.throughput()).fold(0.0, f64::max);
        let opt = refine_q(&base, &coarse, Refinement::default()).unwrap();
        assert!(opt.analysis.throughput() >= grid_best);
        assert_eq!(opt.analysis.config.tx_prob(), opt.q);
        // A fine grid cannot do noticeably better than the refined optimum.
        let fine = analyze_q_grid(&base, &log_grid(0.02, 0.6, 60).unwrap()).unwrap();
        let fine_best = fine.iter().map(|c| c.1.throughput()).fold(0.0, f64::max);
        assert!(opt.analysis.throughput() >= fine_best - 1e-4);
        let off = refine_q(&base, &coarse, Refinement { enabled: false, ..Default::default() }).unwrap();
        assert_eq!(off.method, QMethod::Grid);
    }

    #[test]
    fn dmax_sweep_matches_direct_optimization() {
        let qs = log_grid(0.05, 0.6, 6).unwrap();
        let refine = Refinement { enabled: false, ..Default::default() };
        let pts = sweep_dmax(8, &[0.4, 0.8], &[4, 9], &qs, refine).unwrap();
        assert_eq!(pts.len(), 4);
        for p in &pts {
            let base = SystemConfig::with_load(8, 0.1, p.load, p.dmax).unwrap();
            let direct = optimize_q(&base, &qs, refine).unwrap();
            assert_eq!(direct.q, p.optimum.q);
            assert!((direct.analysis.throughput() - p.optimum.analysis.throughput()).abs() < 1e-12);
        }
    }
}
