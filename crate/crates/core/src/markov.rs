//! Coupled chains for the CP duration `D` and the number of contending users
//! `N`, their stationary laws, and the stationary throughput.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::config::SystemConfig;
use crate::error::{Error, Result};
use crate::prob::{binomial_pmf, ProbVector, StochasticMatrix};
use crate::tables::ConditionalTables;

/// Residual tolerance for stationary solutions.
pub const STATIONARY_TOL: f64 = 1e-10;

/// Probability that a user generated at least one packet during a CP of `d`
/// slots, `1 - (1 - gamma)^d`.
pub fn activity_prob(gamma: f64, d: usize) -> f64 {
    1.0 - (1.0 - gamma).powi(d as i32)
}

/// Binomial law of the number of users active after a CP of `d` slots.
pub fn active_users_pmf(num_users: usize, gamma: f64, d: usize) -> ProbVector {
    binomial_pmf(num_users, activity_prob(gamma, d))
}

/// Per-CP-length activation probabilities and the matching
/// `P(N = n | previous D = d)` columns.
#[derive(Clone, Debug)]
pub struct ActivationModel {
    gamma: f64,
    table: Vec<f64>,
    pmfs: Vec<ProbVector>,
}

impl ActivationModel {
    pub fn new(cfg: &SystemConfig) -> Self {
        let gamma = cfg.gen_prob();
        let table: Vec<f64> = (1..=cfg.max_cp_len()).map(|d| activity_prob(gamma, d)).collect();
        let pmfs = table.iter().map(|&p| binomial_pmf(cfg.num_users(), p)).collect();
        ActivationModel { gamma, table, pmfs }
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    /// `gamma_d` for `d` in `1..=d_max`.
    pub fn activity(&self, d: usize) -> f64 {
        self.table[d - 1]
    }

    /// `P(N = n | D = d)` as a vector over `n`.
    pub fn users_given_len(&self, d: usize) -> &ProbVector {
        &self.pmfs[d - 1]
    }
}

pub(crate) fn check_tables(cfg: &SystemConfig, tables: &ConditionalTables) -> Result<()> {
    if tables.matches(cfg) {
        Ok(())
    } else {
        Err(Error::Usage(format!(
            "tables built for U={} q={} dmax={} do not match {cfg}",
            tables.num_users(),
            tables.tx_prob(),
            tables.max_cp_len()
        )))
    }
}

/// `p_D(i, j) = sum_n P(D = j | N = n) P(N = n | D = i)` over `{1..=d_max}`.
pub fn cp_chain(cfg: &SystemConfig, tables: &ConditionalTables) -> Result<StochasticMatrix> {
    check_tables(cfg, tables)?;
    let act = ActivationModel::new(cfg);
    cp_chain_with(cfg, tables, &act)
}

pub(crate) fn cp_chain_with(cfg: &SystemConfig, tables: &ConditionalTables, act: &ActivationModel) -> Result<StochasticMatrix> {
    let dmax = cfg.max_cp_len();
    let rows = (1..=dmax)
        .map(|i| {
            let pn = act.users_given_len(i);
            let mut row = vec![0.0; dmax];
            for (n, &w) in pn.iter().enumerate() {
                if w == 0.0 {
                    continue;
                }
                for (r, p) in row.iter_mut().zip(tables.cp_len_column(n).iter()) {
                    *r += w * p;
                }
            }
            row
        })
        .collect();
    stochastic_rows("D", rows)
}

/// `p_N(i, j) = sum_d P(N = j | D = d) P(D = d | N = i)` over `{0..=U}`.
pub fn users_chain(cfg: &SystemConfig, tables: &ConditionalTables) -> Result<StochasticMatrix> {
    check_tables(cfg, tables)?;
    let act = ActivationModel::new(cfg);
    users_chain_with(cfg, tables, &act)
}

fn users_chain_with(cfg: &SystemConfig, tables: &ConditionalTables, act: &ActivationModel) -> Result<StochasticMatrix> {
    let users = cfg.num_users();
    let rows = (0..=users)
        .map(|i| {
            let mut row = vec![0.0; users + 1];
            for (d0, &w) in tables.cp_len_column(i).iter().enumerate() {
                if w == 0.0 {
                    continue;
                }
                for (r, p) in row.iter_mut().zip(act.users_given_len(d0 + 1).iter()) {
                    *r += w * p;
                }
            }
            row
        })
        .collect();
    stochastic_rows("N", rows)
}

/// Validates rows that are stochastic up to accumulated rounding (table
/// columns carry a 1e-10 tolerance).
pub(crate) fn stochastic_rows(name: &str, rows: Vec<Vec<f64>>) -> Result<StochasticMatrix> {
    let rows = rows
        .into_iter()
        .enumerate()
        .map(|(i, r)| {
            ProbVector::with_tolerance(r, 1e-10)
                .map_err(|e| Error::NotStochastic(format!("{name}: row {i}: {e}")))
        })
        .collect::<Result<Vec<_>>>()?;
    StochasticMatrix::new(name, rows)
}

/// Stationary law of `p`: solves `pi (P - I) = 0` with the last balance
/// equation replaced by `sum(pi) = 1`.
pub fn stationary(p: &StochasticMatrix) -> Result<ProbVector> {
    let (pi, residual) = stationary_with_residual(p)?;
    if residual >= STATIONARY_TOL {
        return Err(Error::Residual {
            what: "stationary balance equations",
            residual,
            tolerance: STATIONARY_TOL,
        });
    }
    Ok(pi)
}

/// Like [`stationary`], also returning `max |pi P - pi|`.
pub fn stationary_with_residual(p: &StochasticMatrix) -> Result<(ProbVector, f64)> {
    let dim = p.dim();
    let singular = || Error::SingularChain {
        chain: p.name().to_string(),
    };
    // Row k of the system is the balance equation of state k.
    let mut a = DMatrix::<f64>::zeros(dim, dim);
    for (i, row) in p.rows().iter().enumerate() {
        for (k, &pik) in row.iter().enumerate() {
            a[(k, i)] = pik;
        }
        a[(i, i)] -= 1.0;
    }
    for i in 0..dim {
        a[(dim - 1, i)] = 1.0;
    }
    let mut b = DVector::<f64>::zeros(dim);
    b[dim - 1] = 1.0;
    let x = a.lu().solve(&b).ok_or_else(singular)?;
    if x.iter().any(|v| !v.is_finite() || *v < -1e-9) {
        return Err(singular());
    }
    let mut pi: Vec<f64> = x.iter().map(|v| v.max(0.0)).collect();
    let total: f64 = pi.iter().sum();
    pi.iter_mut().for_each(|v| *v /= total);
    let moved = p.left_mul(&pi);
    let residual = moved
        .iter()
        .zip(&pi)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    Ok((ProbVector::new(pi).map_err(|_| singular())?, residual))
}

/// Stationary law by repeated multiplication; a cross-check for
/// [`stationary`] on aperiodic chains.
pub fn stationary_power(p: &StochasticMatrix, tol: f64, max_iter: usize) -> Option<ProbVector> {
    let dim = p.dim();
    let mut pi = vec![1.0 / dim as f64; dim];
    for _ in 0..max_iter {
        let next = p.left_mul(&pi);
        let delta = next.iter().zip(&pi).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        pi = next;
        if delta < tol {
            let total: f64 = pi.iter().sum();
            return ProbVector::with_tolerance(pi.iter().map(|v| v / total).collect(), 1e-9).ok();
        }
    }
    None
}

/// Stationary distributions and throughput of one configuration.
#[derive(Clone, Debug, Serialize)]
pub struct StationaryResult {
    /// `pi_D` over `{1..=d_max}` (index `d - 1`).
    pub pi_d: ProbVector,
    /// `pi_N` over `{0..=U}`.
    pub pi_n: ProbVector,
    /// `pi_M` over `{0..=U}`, decoded users per CP.
    pub pi_m: ProbVector,
    pub throughput: f64,
    /// `E[N]` under `pi_N`.
    pub mean_active: f64,
    /// `E[D]` under `pi_D`.
    pub mean_cp_len: f64,
    /// Largest of the two balance-equation residuals.
    pub residual: f64,
}

/// Throughput `S = E[M] / E[D]` and `pi_M(m) = sum_n P(M = m | N = n) pi_N(n)`.
pub fn throughput(
    cfg: &SystemConfig,
    tables: &ConditionalTables,
    pi_n: &ProbVector,
    pi_d: &ProbVector,
) -> Result<(f64, ProbVector)> {
    check_tables(cfg, tables)?;
    let users = cfg.num_users();
    let mut pi_m = vec![0.0; users + 1];
    for (n, &w) in pi_n.iter().enumerate() {
        for (m, p) in tables.decoded_column(n).iter().enumerate() {
            pi_m[m] += w * p;
        }
    }
    let decoded: f64 = pi_m.iter().enumerate().map(|(m, p)| m as f64 * p).sum();
    let s = decoded / pi_d.mean(1.0);
    let pi_m = ProbVector::with_tolerance(pi_m, 1e-10)?;
    Ok((s, pi_m))
}

/// Builds both chains, solves them and evaluates the throughput.
pub fn analyze_stationary(cfg: &SystemConfig, tables: &ConditionalTables) -> Result<StationaryResult> {
    check_tables(cfg, tables)?;
    let act = ActivationModel::new(cfg);
    let pd = cp_chain_with(cfg, tables, &act)?;
    let pn = users_chain_with(cfg, tables, &act)?;
    let (pi_d, res_d) = stationary_with_residual(&pd)?;
    let (pi_n, res_n) = stationary_with_residual(&pn)?;
    let residual = res_d.max(res_n);
    if residual >= STATIONARY_TOL {
        return Err(Error::Residual {
            what: "stationary balance equations",
            residual,
            tolerance: STATIONARY_TOL,
        });
    }
    let (s, pi_m) = throughput(cfg, tables, &pi_n, &pi_d)?;
    Ok(StationaryResult {
        mean_active: pi_n.mean(0.0),
        mean_cp_len: pi_d.mean(1.0),
        pi_d,
        pi_n,
        pi_m,
        throughput: s,
        residual,
    })
}
