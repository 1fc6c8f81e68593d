//! Average peak Age of Information.
//!
//! The pair Z = (D, S) of CP length and "the tagged user was delivered in
//! that CP" is a Markov chain. The peak age is the length of the CP that
//! delivered the previous update (Δ0) plus the time until the next delivery
//! (Y), found by first-step analysis with successful CPs absorbing.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::config::SystemConfig;
use crate::error::{Error, Result};
use crate::markov::{check_tables, stationary_with_residual, stochastic_rows, ActivationModel, STATIONARY_TOL};
use crate::prob::{ProbVector, StochasticMatrix};
use crate::tables::ConditionalTables;

/// Tolerance on the normwise backward error of the first-step system.
pub const FIRST_STEP_TOL: f64 = 1e-9;

/// Probability that a tagged user is delivered in a CP of length `d` with
/// `n` contenders: `n/U` below `d_max`, and the β-weighted fraction of
/// decoded users for CPs cut at `d_max`.
pub fn update_prob(n: usize, d: usize, cfg: &SystemConfig, tables: &ConditionalTables) -> f64 {
    let users = cfg.num_users() as f64;
    if d < cfg.max_cp_len() {
        n as f64 / users
    } else {
        tables
            .beta_column(n)
            .iter()
            .enumerate()
            .map(|(m, b)| m as f64 / users * b)
            .sum()
    }
}

/// Transitions of Z over states `(d, s)`, `d` in `1..=d_max`, `s` in `{0, 1}`,
/// stored at index `2 (d - 1) + s`.
#[derive(Clone, Debug)]
pub struct ZChain {
    max_cp_len: usize,
    /// `success[j][d]` = P(next CP has length d + 1 and delivers | D = j + 1).
    success: Vec<Vec<f64>>,
    failure: Vec<Vec<f64>>,
    matrix: StochasticMatrix,
    stationary: ProbVector,
    residual: f64,
}

impl ZChain {
    pub fn index(d: usize, s: usize) -> usize {
        2 * (d - 1) + s
    }

    pub fn max_cp_len(&self) -> usize {
        self.max_cp_len
    }

    pub fn matrix(&self) -> &StochasticMatrix {
        &self.matrix
    }

    /// Stationary law π_Z over the `2 d_max` states.
    pub fn stationary(&self) -> &ProbVector {
        &self.stationary
    }

    pub fn residual(&self) -> f64 {
        self.residual
    }

    /// P(next state = (d, 1) | previous length j).
    pub fn p_success(&self, j: usize, d: usize) -> f64 {
        self.success[j - 1][d - 1]
    }

    /// P(next state = (d, 0) | previous length j).
    pub fn p_failure(&self, j: usize, d: usize) -> f64 {
        self.failure[j - 1][d - 1]
    }

    /// Marginal of π_Z over the success bit.
    pub fn cp_len_marginal(&self) -> Vec<f64> {
        (1..=self.max_cp_len)
            .map(|d| self.stationary[Self::index(d, 0)] + self.stationary[Self::index(d, 1)])
            .collect()
    }
}

pub fn build_z_chain(cfg: &SystemConfig, tables: &ConditionalTables) -> Result<ZChain> {
    check_tables(cfg, tables)?;
    if cfg.gen_prob() == 0.0 {
        return Err(Error::NoSuccess("no packets are ever generated (gamma = 0)"));
    }
    let dmax = cfg.max_cp_len();
    let users = cfg.num_users();
    let act = ActivationModel::new(cfg);
    let nu: Vec<Vec<f64>> = (0..=users)
        .map(|n| (1..=dmax).map(|d| update_prob(n, d, cfg, tables)).collect())
        .collect();

    let mut success = vec![vec![0.0; dmax]; dmax];
    let mut failure = vec![vec![0.0; dmax]; dmax];
    for j in 0..dmax {
        for (n, &w) in act.users_given_len(j + 1).iter().enumerate() {
            if w == 0.0 {
                continue;
            }
            for (d, &p) in tables.cp_len_column(n).iter().enumerate() {
                let mass = w * p;
                success[j][d] += nu[n][d] * mass;
                failure[j][d] += (1.0 - nu[n][d]) * mass;
            }
        }
    }

    let rows: Vec<Vec<f64>> = (0..2 * dmax)
        .map(|from| {
            let j = from / 2;
            let mut row = vec![0.0; 2 * dmax];
            for d in 0..dmax {
                row[2 * d] = failure[j][d];
                row[2 * d + 1] = success[j][d];
            }
            row
        })
        .collect();
    let matrix = stochastic_rows("Z", rows)?;
    let (stationary, residual) = stationary_with_residual(&matrix)?;
    if residual >= STATIONARY_TOL {
        return Err(Error::Residual {
            what: "Z-chain balance equations",
            residual,
            tolerance: STATIONARY_TOL,
        });
    }
    Ok(ZChain {
        max_cp_len: dmax,
        success,
        failure,
        matrix,
        stationary,
        residual,
    })
}

/// Law of the length of the CP that delivered an update.
pub fn delta0_pmf(z: &ZChain) -> Result<ProbVector> {
    let pi = z.stationary();
    let mass: Vec<f64> = (1..=z.max_cp_len()).map(|d| pi[ZChain::index(d, 1)]).collect();
    let total: f64 = mass.iter().sum();
    if total <= 0.0 {
        return Err(Error::NoSuccess("the stationary Z-chain never delivers"));
    }
    ProbVector::with_tolerance(mass.iter().map(|m| m / total).collect(), 1e-12)
}

/// Expected inter-update times from first-step analysis.
#[derive(Clone, Debug, Serialize)]
pub struct InterUpdate {
    /// `E[Y | Z = (d, 0)]`, index `d - 1`; cost includes the current CP.
    pub from_failure: Vec<f64>,
    /// `E[Y | Δ0 = δ0]`, index `δ0 - 1`.
    pub given_delta0: Vec<f64>,
    pub mean: f64,
    /// Scaled residual of the solve, see [`FIRST_STEP_TOL`].
    pub residual: f64,
}

/// Solves `x_d = d + Σ_d' d' p1(d, d') + Σ_d' x_d' p0(d, d')` for the failure
/// states (delivering states are absorbing with cost `d`), then averages the
/// one-step continuation over Δ0. Rows out of `(d, 0)` and `(d, 1)` coincide,
/// so `d_max` unknowns suffice.
pub fn expected_inter_update(z: &ZChain, delta0: &ProbVector) -> Result<InterUpdate> {
    let dmax = z.max_cp_len();
    let mut a = DMatrix::<f64>::identity(dmax, dmax);
    let mut b = DVector::<f64>::zeros(dmax);
    for j in 1..=dmax {
        let mut rhs = j as f64;
        for d in 1..=dmax {
            rhs += d as f64 * z.p_success(j, d);
            a[(j - 1, d - 1)] -= z.p_failure(j, d);
        }
        b[j - 1] = rhs;
    }
    let singular = || Error::SingularChain {
        chain: "first-step system".into(),
    };
    let lu = a.clone().lu();
    let mut x = lu.solve(&b).ok_or_else(singular)?;
    // One round of iterative refinement.
    if let Some(dx) = lu.solve(&(&b - &a * &x)) {
        x += dx;
    }
    if !x.iter().all(|v| v.is_finite()) {
        return Err(singular());
    }
    let residual = scaled_residual(&a, &x, &b);
    if residual >= FIRST_STEP_TOL {
        return Err(Error::Residual {
            what: "first-step linear system",
            residual,
            tolerance: FIRST_STEP_TOL,
        });
    }
    let from_failure: Vec<f64> = x.iter().copied().collect();
    let given_delta0: Vec<f64> = (1..=dmax)
        .map(|j| {
            (1..=dmax)
                .map(|d| d as f64 * z.p_success(j, d) + from_failure[d - 1] * z.p_failure(j, d))
                .sum()
        })
        .collect();
    let mean = given_delta0.iter().zip(delta0.iter()).map(|(y, p)| y * p).sum();
    Ok(InterUpdate {
        from_failure,
        given_delta0,
        mean,
        residual,
    })
}

/// Normwise backward error `|Ax - b| / (|A| |x| + |b|)` in the max norm.
/// Expected inter-update times grow without bound as deliveries become
/// rare, so an absolute residual is not scale-free.
fn scaled_residual(a: &DMatrix<f64>, x: &DVector<f64>, b: &DVector<f64>) -> f64 {
    let a_norm = a
        .row_iter()
        .map(|row| row.iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max);
    (a * x - b).amax() / (a_norm * x.amax() + b.amax())
}

#[derive(Clone, Debug, Serialize)]
pub struct AoiResult {
    pub delta0_pmf: ProbVector,
    pub e_delta0: f64,
    pub e_y: f64,
    pub peak_aoi: f64,
    /// Largest of the Z-chain balance and first-step residuals.
    pub residual: f64,
}

/// Average peak age `E[Δ0] + E[Y]`.
pub fn avg_peak_aoi(cfg: &SystemConfig, tables: &ConditionalTables) -> Result<AoiResult> {
    let z = build_z_chain(cfg, tables)?;
    let delta0 = delta0_pmf(&z)?;
    let y = expected_inter_update(&z, &delta0)?;
    let e_delta0 = delta0.mean(1.0);
    if e_delta0 < 1.0 - 1e-12 || y.mean < 1.0 - 1e-12 {
        return Err(Error::Internal(format!(
            "peak-age components out of range: E[Δ0] = {e_delta0}, E[Y] = {}",
            y.mean
        )));
    }
    Ok(AoiResult {
        e_delta0,
        e_y: y.mean,
        peak_aoi: e_delta0 + y.mean,
        residual: z.residual().max(y.residual),
        delta0_pmf: delta0,
    })
}
