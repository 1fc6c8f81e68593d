//! Experiment orchestration behind the command-line tool: grid expansion,
//! mode dispatch, CSV emission and the reproducibility manifest.

pub mod args;
pub mod records;

use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::analysis::{analyze_with, Analysis};
use crate::config::SystemConfig;
use crate::error::{Error, Result};
use crate::optimize::{sweep_dmax, Refinement};
use crate::sim::oracle::oracle_enumerate;
use crate::sim::{simulate_replicated, SimMetrics};
use crate::tables::ConditionalTables;
use records::{write_distribution, write_rows, AnalysisRow, CompareRow, OracleRow, SimRow};

pub use args::{parse_args, ArgsError};

/// Entrywise tolerance of the oracle check.
pub const ORACLE_TOL: f64 = 1e-9;
/// Largest instance accepted in oracle mode.
pub const ORACLE_MAX_USERS: usize = 3;
pub const ORACLE_MAX_DMAX: usize = 4;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Analyze,
    Simulate,
    Compare,
    Oracle,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Sweep {
    None,
    Q(Vec<f64>),
    Load(Vec<f64>),
    /// Throughput-optimized q per `(load, d_max)`.
    Dmax {
        dmaxs: Vec<usize>,
        loads: Vec<f64>,
        coarse_q: Vec<f64>,
        refine: Refinement,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimControls {
    pub seed: u64,
    pub num_cps: u64,
    pub warmup_cps: u64,
    pub replications: u64,
}

impl Default for SimControls {
    fn default() -> Self {
        SimControls {
            seed: 1,
            num_cps: 100_000,
            warmup_cps: 1_000,
            replications: 1,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSpec {
    pub base: SystemConfig,
    pub mode: Mode,
    pub sweep: Sweep,
    pub sim: SimControls,
    pub out_dir: PathBuf,
    /// Also write the conditional tables (single-point analysis only).
    pub dump_tables: bool,
}

impl ExperimentSpec {
    pub fn new(base: SystemConfig, mode: Mode, out_dir: impl Into<PathBuf>) -> Self {
        ExperimentSpec {
            base,
            mode,
            sweep: Sweep::None,
            sim: SimControls::default(),
            out_dir: out_dir.into(),
            dump_tables: false,
        }
    }

    /// Checks that every grid point is a valid configuration and that the
    /// mode fits the sweep.
    pub fn validate(&self) -> Result<()> {
        self.points()?;
        match (&self.sweep, self.mode) {
            (Sweep::Dmax { dmaxs, loads, coarse_q, .. }, mode) => {
                if mode != Mode::Analyze {
                    return Err(Error::Usage("d_max sweeps are analysis-only".into()));
                }
                if dmaxs.is_empty() || loads.is_empty() || coarse_q.is_empty() {
                    return Err(Error::Usage("d_max sweep needs d_max, load and q grids".into()));
                }
                for &d in dmaxs {
                    for &l in loads {
                        for &q in coarse_q {
                            SystemConfig::with_load(self.base.num_users(), q, l, d)?;
                        }
                    }
                }
            }
            (sweep, Mode::Oracle) => {
                if *sweep != Sweep::None {
                    return Err(Error::Usage("oracle mode takes a single point".into()));
                }
                if self.base.num_users() > ORACLE_MAX_USERS || self.base.max_cp_len() > ORACLE_MAX_DMAX {
                    return Err(Error::Usage(format!(
                        "oracle mode needs U <= {ORACLE_MAX_USERS} and dmax <= {ORACLE_MAX_DMAX}"
                    )));
                }
            }
            _ => {}
        }
        if matches!(self.mode, Mode::Simulate | Mode::Compare) && (self.sim.num_cps == 0 || self.sim.replications == 0) {
            return Err(Error::Usage("need at least one CP and one replication".into()));
        }
        if self.dump_tables && !(self.mode == Mode::Analyze && self.sweep == Sweep::None) {
            return Err(Error::Usage("table dumps are for single-point analysis".into()));
        }
        Ok(())
    }

    /// Configurations of a q- or load-grid (the base alone otherwise).
    pub fn points(&self) -> Result<Vec<SystemConfig>> {
        match &self.sweep {
            Sweep::None | Sweep::Dmax { .. } => Ok(vec![self.base]),
            Sweep::Q(qs) => qs.iter().map(|&q| self.base.with_tx_prob(q)).collect(),
            Sweep::Load(loads) => loads
                .iter()
                .map(|&l| {
                    SystemConfig::with_load(self.base.num_users(), self.base.tx_prob(), l, self.base.max_cp_len())
                })
                .collect(),
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct FileEntry {
    pub name: String,
    pub sha256: String,
    pub bytes: usize,
}

#[derive(Clone, Debug, Serialize)]
pub struct QStarEntry {
    pub load: f64,
    pub dmax: usize,
    pub q: f64,
    pub method: &'static str,
    pub evaluations: usize,
}

#[derive(Clone, Debug, Serialize)]
pub struct Manifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub spec: ExperimentSpec,
    pub files: Vec<FileEntry>,
    pub complete: bool,
    pub error: Option<String>,
    pub qstar: Vec<QStarEntry>,
}

pub const MANIFEST_NAME: &str = "manifest.json";

/// What a run produced.
#[derive(Clone, Debug)]
pub struct RunReport {
    pub files: Vec<PathBuf>,
    /// Human-readable summary lines.
    pub summary: Vec<String>,
    /// Oracle verdict (oracle mode only).
    pub passed: Option<bool>,
}

struct Outputs<'a> {
    dir: &'a Path,
    files: Vec<FileEntry>,
    paths: Vec<PathBuf>,
}

impl Outputs<'_> {
    fn emit(&mut self, name: &str, bytes: Vec<u8>) -> Result<()> {
        let path = self.dir.join(name);
        fs::write(&path, &bytes)?;
        self.files.push(FileEntry {
            name: name.to_string(),
            sha256: hex::encode(Sha256::digest(&bytes)),
            bytes: bytes.len(),
        });
        self.paths.push(path);
        Ok(())
    }

    fn rows<T: Serialize>(&mut self, name: &str, rows: &[T]) -> Result<()> {
        let mut buf = Vec::new();
        write_rows(&mut buf, rows)?;
        self.emit(name, buf)
    }

    fn distribution(&mut self, name: &str, cols: (&str, &str), offset: usize, probs: &[f64]) -> Result<()> {
        let mut buf = Vec::new();
        write_distribution(&mut buf, cols.0, cols.1, offset, probs)?;
        self.emit(name, buf)
    }
}

/// Runs the experiment, writing CSVs and the manifest into `spec.out_dir`.
/// On failure the rows computed before the first failing grid point are
/// still written and the manifest is marked incomplete.
pub fn run(spec: &ExperimentSpec) -> Result<RunReport> {
    spec.validate()?;
    fs::create_dir_all(&spec.out_dir)?;
    let mut out = Outputs {
        dir: &spec.out_dir,
        files: Vec::new(),
        paths: Vec::new(),
    };
    let mut qstar = Vec::new();
    let mut summary = Vec::new();
    let mut passed = None;
    let result = dispatch(spec, &mut out, &mut qstar, &mut summary, &mut passed);
    let manifest = Manifest {
        tool: env!("CARGO_PKG_NAME"),
        version: env!("CARGO_PKG_VERSION"),
        spec: spec.clone(),
        files: out.files.clone(),
        complete: result.is_ok(),
        error: result.as_ref().err().map(|e| e.to_string()),
        qstar,
    };
    let text = serde_json::to_vec_pretty(&manifest)?;
    fs::write(spec.out_dir.join(MANIFEST_NAME), text)?;
    result?;
    let mut files = out.paths;
    files.push(spec.out_dir.join(MANIFEST_NAME));
    Ok(RunReport {
        files,
        summary,
        passed,
    })
}

/// Splits per-point results into the successful prefix and the first error.
fn prefix<T>(results: Vec<Result<T>>) -> (Vec<T>, Option<Error>) {
    let mut ok = Vec::new();
    for r in results {
        match r {
            Ok(v) => ok.push(v),
            Err(e) => return (ok, Some(e)),
        }
    }
    (ok, None)
}

fn analyze_points(points: &[SystemConfig]) -> Vec<Result<Analysis>> {
    points
        .par_iter()
        .map(|cfg| analyze_with(cfg, &ConditionalTables::build(cfg)?))
        .collect()
}

fn simulate_points(points: &[SystemConfig], sim: &SimControls) -> Vec<Result<SimMetrics>> {
    points
        .iter()
        .map(|cfg| simulate_replicated(cfg, sim.seed, sim.replications, sim.num_cps, sim.warmup_cps))
        .collect()
}

fn dispatch(
    spec: &ExperimentSpec,
    out: &mut Outputs,
    qstar: &mut Vec<QStarEntry>,
    summary: &mut Vec<String>,
    passed: &mut Option<bool>,
) -> Result<()> {
    let points = spec.points()?;
    match (spec.mode, &spec.sweep) {
        (Mode::Analyze, Sweep::Dmax { dmaxs, loads, coarse_q, refine }) => {
            let pts = sweep_dmax(spec.base.num_users(), loads, dmaxs, coarse_q, *refine)?;
            let rows: Vec<AnalysisRow> = pts
                .iter()
                .map(|p| AnalysisRow::new(&p.optimum.analysis, p.optimum.method.as_str()))
                .collect();
            for p in &pts {
                qstar.push(QStarEntry {
                    load: p.load,
                    dmax: p.dmax,
                    q: p.optimum.q,
                    method: p.optimum.method.as_str(),
                    evaluations: p.optimum.evaluations,
                });
                summary.push(format!(
                    "gammaU={} dmax={} q*={:.6} S={:.6} peak_aoi={:.4}",
                    p.load,
                    p.dmax,
                    p.optimum.q,
                    p.optimum.analysis.throughput(),
                    p.optimum.analysis.peak_aoi()
                ));
            }
            out.rows("sweep_dmax.csv", &rows)
        }
        (Mode::Analyze, sweep) => {
            let (done, err) = prefix(analyze_points(&points));
            let best = match sweep {
                Sweep::Q(_) if err.is_none() => done
                    .iter()
                    .enumerate()
                    .max_by(|a, b| a.1.throughput().total_cmp(&b.1.throughput()))
                    .map(|(i, _)| i),
                _ => None,
            };
            let rows: Vec<AnalysisRow> = done
                .iter()
                .enumerate()
                .map(|(i, a)| AnalysisRow::new(a, if Some(i) == best { "argmax" } else { "none" }))
                .collect();
            for a in &done {
                summary.push(format!(
                    "{}: S={:.6} peak_aoi={:.4} mean_active={:.4}",
                    a.config,
                    a.throughput(),
                    a.peak_aoi(),
                    a.mean_active()
                ));
            }
            let name = match sweep {
                Sweep::Q(_) => "sweep_q.csv",
                Sweep::Load(_) => "sweep_load.csv",
                _ => "analysis.csv",
            };
            out.rows(name, &rows)?;
            if let (Sweep::None, Some(a)) = (sweep, done.first()) {
                write_stationary(out, a)?;
                if spec.dump_tables {
                    write_tables(out, &spec.base)?;
                }
            }
            err.map_or(Ok(()), Err)
        }
        (Mode::Simulate, sweep) => {
            let (done, err) = prefix(simulate_points(&points, &spec.sim));
            let rows: Vec<SimRow> = points.iter().zip(&done).map(|(c, m)| SimRow::new(c, m)).collect();
            for (c, m) in points.iter().zip(&done) {
                summary.push(format!(
                    "{c}: S={:.6}±{:.6} peak_aoi={:.4}±{:.4} mean_active={:.4} ({} CPs)",
                    m.throughput, m.throughput_ci, m.peak_aoi, m.peak_aoi_ci, m.mean_active, m.cp_count
                ));
            }
            out.rows("simulation.csv", &rows)?;
            if let (Sweep::None, Some(m)) = (sweep, done.first()) {
                out.distribution("sim_pi_d.csv", ("d", "pi_d"), 1, m.pi_d.as_slice())?;
                out.distribution("sim_pi_n.csv", ("n", "pi_n"), 0, m.pi_n.as_slice())?;
                out.distribution("sim_pi_m.csv", ("m", "pi_m"), 0, m.pi_m.as_slice())?;
            }
            err.map_or(Ok(()), Err)
        }
        (Mode::Compare, _) => {
            let (analyses, err_a) = prefix(analyze_points(&points));
            let (sims, err_s) = prefix(simulate_points(&points[..analyses.len()], &spec.sim));
            let rows: Vec<CompareRow> = analyses.iter().zip(&sims).map(|(a, m)| CompareRow::new(a, m)).collect();
            for r in &rows {
                summary.push(format!(
                    "q={} gammaU={} dmax={}: S {:.6} vs {:.6}±{:.6} (z={:.2}); peak_aoi {:.4} vs {:.4}±{:.4} (z={:.2}) {}",
                    r.q,
                    r.load,
                    r.dmax,
                    r.tput_analysis,
                    r.tput_sim,
                    r.tput_ci,
                    r.tput_z,
                    r.aoi_analysis,
                    r.aoi_sim,
                    r.aoi_ci,
                    r.aoi_z,
                    if r.agree { "agree" } else { "DISAGREE" }
                ));
            }
            out.rows("compare.csv", &rows)?;
            err_a.or(err_s).map_or(Ok(()), Err)
        }
        (Mode::Oracle, _) => {
            let rows = oracle_rows(&spec.base)?;
            let ok = rows.iter().all(|r| r.pass);
            for r in &rows {
                summary.push(format!(
                    "n={} q={} dmax={}: max deviation D {:.3e}, M {:.3e}, beta {:.3e} {}",
                    r.n,
                    r.q,
                    r.dmax,
                    r.dev_cp_len,
                    r.dev_decoded,
                    r.dev_beta,
                    if r.pass { "PASS" } else { "FAIL" }
                ));
            }
            *passed = Some(ok);
            out.rows("oracle.csv", &rows)
        }
    }
}

fn write_stationary(out: &mut Outputs, a: &Analysis) -> Result<()> {
    let st = &a.stationary;
    out.distribution("pi_d.csv", ("d", "pi_d"), 1, st.pi_d.as_slice())?;
    out.distribution("pi_n.csv", ("n", "pi_n"), 0, st.pi_n.as_slice())?;
    out.distribution("pi_m.csv", ("m", "pi_m"), 0, st.pi_m.as_slice())?;
    if let Some(aoi) = &a.aoi {
        out.distribution("delta0.csv", ("delta0", "p"), 1, aoi.delta0_pmf.as_slice())?;
    }
    Ok(())
}

#[derive(Serialize)]
struct CpLenEntry {
    n: usize,
    d: usize,
    p_d_given_n: f64,
}

#[derive(Serialize)]
struct DecodedEntry {
    n: usize,
    m: usize,
    p_m_given_n: f64,
    beta: f64,
}

fn write_tables(out: &mut Outputs, cfg: &SystemConfig) -> Result<()> {
    let t = ConditionalTables::build(cfg)?;
    let mut d_rows = Vec::new();
    let mut m_rows = Vec::new();
    for n in 0..=cfg.num_users() {
        for d in 1..=cfg.max_cp_len() {
            d_rows.push(CpLenEntry {
                n,
                d,
                p_d_given_n: t.p_cp_len(d, n),
            });
        }
        for m in 0..=n {
            m_rows.push(DecodedEntry {
                n,
                m,
                p_m_given_n: t.p_decoded(m, n),
                beta: t.beta(m, n),
            });
        }
    }
    out.rows("tables_cp_len.csv", &d_rows)?;
    out.rows("tables_decoded.csv", &m_rows)
}

/// Largest entrywise gaps between the analytic tables and exhaustive
/// enumeration, for every `n` in `0..=U`.
pub fn oracle_rows(cfg: &SystemConfig) -> Result<Vec<OracleRow>> {
    let tables = ConditionalTables::build(cfg)?;
    let dev = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
    (0..=cfg.num_users())
        .map(|n| {
            let o = oracle_enumerate(n, cfg.tx_prob(), cfg.max_cp_len())?;
            let dev_cp_len = dev(tables.cp_len_column(n).as_slice(), &o.cp_len);
            let dev_decoded = dev(tables.decoded_column(n).as_slice(), &o.decoded);
            let dev_beta = dev(tables.beta_column(n), &o.beta);
            Ok(OracleRow {
                n,
                q: cfg.tx_prob(),
                dmax: cfg.max_cp_len(),
                pass: dev_cp_len.max(dev_decoded).max(dev_beta) < ORACLE_TOL,
                dev_cp_len,
                dev_decoded,
                dev_beta,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn base() -> SystemConfig {
        SystemConfig::with_load(4, 0.3, 0.6, 5).unwrap()
    }

    #[test]
    fn oracle_mode_limits() {
        let spec = ExperimentSpec::new(base(), Mode::Oracle, "unused");
        assert!(matches!(spec.validate(), Err(Error::Usage(_))));
        let small = SystemConfig::new(2, 0.5, 0.3, 2).unwrap();
        assert!(ExperimentSpec::new(small, Mode::Oracle, "unused").validate().is_ok());
    }

    #[test]
    fn grid_points_validate() {
        let mut spec = ExperimentSpec::new(base(), Mode::Analyze, "unused");
        spec.sweep = Sweep::Q(vec![0.1, 1.5]);
        assert!(matches!(
            spec.validate(),
            Err(Error::InvalidParameter { field: "q", .. })
        ));
        spec.sweep = Sweep::Load(vec![0.5, 1.0]);
        assert_eq!(spec.points().unwrap().len(), 2);
    }

    #[test]
    fn dmax_sweep_is_analysis_only() {
        let mut spec = ExperimentSpec::new(base(), Mode::Simulate, "unused");
        spec.sweep = Sweep::Dmax {
            dmaxs: vec![3],
            loads: vec![0.6],
            coarse_q: vec![0.2, 0.4],
            refine: Refinement::default(),
        };
        assert!(spec.validate().is_err());
    }

    #[test]
    fn oracle_rows_pass() {
        let rows = oracle_rows(&SystemConfig::new(2, 0.5, 0.3, 2).unwrap()).unwrap();
        assert_eq!(rows.len(), 3);
        assert!(rows.iter().all(|r| r.pass));
    }
}
