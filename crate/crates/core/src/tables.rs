//! Conditional CP statistics given the number of active users:
//! `P(D = d | N = n)`, `P(M = m | N = n)` and `beta(m, n)`, the decoded-count
//! distribution of CPs that ran to the maximum length.
//!
//! The tables depend on `(U, q, d_max)` only, not on the generation
//! probability. They are produced by a dense slot-by-slot evolution of the
//! SIC state machine (see [`crate::sic`] for the per-state rules); one
//! evolution up to a horizon `H` yields the tables for every `d_max <= H`.

use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use rayon::prelude::*;

use crate::config::SystemConfig;
use crate::error::{Error, Result};
use crate::prob::{binomial_pmf, Binomials, ProbVector};
use crate::sic::{self, DecoderState, StateDistribution};

/// State masses below this are dropped during the evolution. The dropped
/// total is tracked in [`ConditionalTables::pruned_mass`].
pub const PRUNE_MASS: f64 = 1e-18;

/// Column-sum tolerance of the tables.
pub const TABLE_TOL: f64 = 1e-10;

/// Slot-by-slot outcome of a CP with `n` active users, up to a horizon.
#[derive(Clone, Debug)]
pub struct CpProfile {
    n: usize,
    /// `done[d - 1]`: probability that every user is resolved exactly after slot `d`.
    done: Vec<f64>,
    /// `live[d - 1][s]`: probability that `s >= 1` users are still unresolved
    /// after slot `d`.
    live: Vec<Vec<f64>>,
    pruned: f64,
}

impl CpProfile {
    pub fn horizon(&self) -> usize {
        self.done.len()
    }

    pub fn active(&self) -> usize {
        self.n
    }

    pub fn pruned(&self) -> f64 {
        self.pruned
    }

    /// Probability that all users are resolved exactly after slot `d`.
    pub fn done_at(&self, d: usize) -> f64 {
        self.done[d - 1]
    }

    /// Unresolved-count masses after slot `d`.
    pub fn live_at(&self, d: usize) -> &[f64] {
        &self.live[d - 1]
    }
}

/// Dense `[c][r]` buffer with a tracked nonzero extent.
struct Grid {
    stride: usize,
    data: Vec<f64>,
    cmax: usize,
    rmax: usize,
    used: bool,
}

impl Grid {
    fn new(rows: usize, stride: usize) -> Self {
        Grid {
            stride,
            data: vec![0.0; rows * stride],
            cmax: 0,
            rmax: 0,
            used: false,
        }
    }

    #[inline]
    fn add(&mut self, c: usize, r: usize, v: f64) {
        self.data[c * self.stride + r] += v;
        self.mark(c, r);
    }

    /// Widens the tracked extent to include `(c, r)`.
    #[inline]
    fn mark(&mut self, c: usize, r: usize) {
        if self.used {
            self.cmax = self.cmax.max(c);
            self.rmax = self.rmax.max(r);
        } else {
            self.cmax = c;
            self.rmax = r;
            self.used = true;
        }
    }

    fn clear(&mut self) {
        if self.used {
            for c in 0..=self.cmax {
                let row = c * self.stride;
                self.data[row..=row + self.rmax].fill(0.0);
            }
        }
        self.used = false;
    }
}

/// Binomial entries below this are skipped; their mass is counted as pruned.
pub const ROW_TRIM: f64 = 1e-18;

/// A binomial row restricted to `lo..lo + probs.len()`.
struct TrimmedRow {
    lo: usize,
    probs: Vec<f64>,
    lost: f64,
}

/// Lazily filled, tail-trimmed binomial rows `Binomial(k, p)` for `k = 0..`.
struct BinomialRows {
    p_pow: Vec<f64>,
    q_pow: Vec<f64>,
    rows: Vec<Option<TrimmedRow>>,
}

impl BinomialRows {
    fn new(p: f64, max_k: usize) -> Self {
        let mut p_pow = vec![1.0; max_k + 1];
        let mut q_pow = vec![1.0; max_k + 1];
        for k in 1..=max_k {
            p_pow[k] = p_pow[k - 1] * p;
            q_pow[k] = q_pow[k - 1] * (1.0 - p);
        }
        BinomialRows {
            p_pow,
            q_pow,
            rows: (0..=max_k).map(|_| None).collect(),
        }
    }

    fn row(&mut self, k: usize, binom: &Binomials) -> &TrimmedRow {
        let (p_pow, q_pow) = (&self.p_pow, &self.q_pow);
        self.rows[k].get_or_insert_with(|| {
            let full: Vec<f64> = (0..=k)
                .map(|j| binom.get(k, j) * p_pow[j] * q_pow[k - j])
                .collect();
            let lo = full.iter().position(|&p| p >= ROW_TRIM).unwrap_or(0);
            let hi = full.iter().rposition(|&p| p >= ROW_TRIM).unwrap_or(0);
            let lost = full[..lo].iter().chain(&full[hi + 1..]).sum();
            TrimmedRow {
                lo,
                probs: full[lo..=hi].to_vec(),
                lost,
            }
        })
    }
}

/// Evolves the SIC state distribution of a CP with `n` active users for
/// `horizon` slots, without termination at intermediate `d_max` values.
pub fn evolve_cp(n: usize, q: f64, horizon: usize) -> Result<CpProfile> {
    assert!(horizon >= 1);
    let mut done = vec![0.0; horizon];
    let mut live = vec![vec![0.0; n + 1]; horizon];
    if n <= 1 {
        done[0] = 1.0;
        return Ok(CpProfile {
            n,
            done,
            live,
            pruned: 0.0,
        });
    }

    let binom = Binomials::new(n.max(horizon + 1));
    let lambda = binomial_pmf(n, q);
    let mut h = vec![0.0; n + 1];
    for (s, hs) in h.iter_mut().enumerate().skip(1) {
        *hs = sic::h_unresolved_with(s, n, q, &binom, lambda.as_slice())?;
    }
    let mut collided_rows: Vec<BinomialRows> =
        h.iter().map(|&hs| BinomialRows::new(hs, horizon)).collect();
    let mut kept_rows: Vec<BinomialRows> = (0..=n)
        .map(|s| {
            let keep = if s == 0 { 0.0 } else { 1.0 - 1.0 / s as f64 };
            BinomialRows::new(keep, horizon + 1)
        })
        .collect();
    let splits: Vec<(f64, f64, f64)> = (0..=n).map(|s| sic::slot_split(s, q)).collect();

    // post[s * horizon + c]: post-decoding mass of (s, c, 0).
    let width = horizon;
    let mut post = vec![0.0; (n + 1) * width];
    let mut next_post = vec![0.0; (n + 1) * width];
    let mut inject = vec![0.0; (n + 1) * width];
    let mut level = Grid::new(horizon, horizon + 2);
    let mut staged = Grid::new(horizon, horizon + 2);
    let mut below = Grid::new(horizon, horizon + 2);
    let mut pruned = 0.0;

    post[n * width] = 1.0;
    live[0][n] = 1.0;

    for d in 2..=horizon {
        let c_lim = d - 1; // collided counts after slot d - 1 are <= d - 2
        next_post[..(n + 1) * width].fill(0.0);
        inject.fill(0.0);
        for s in 2..=n {
            let (idle, single, coll) = splits[s];
            let row = s * width;
            for c in 0..c_lim {
                let m = post[row + c];
                if m == 0.0 {
                    continue;
                }
                if m < PRUNE_MASS {
                    pruned += m;
                    continue;
                }
                next_post[row + c] += m * idle;
                next_post[row + c + 1] += m * coll;
                inject[row + c] += m * single;
            }
        }

        let mut finished = 0.0;
        level.clear();
        for s in (1..=n).rev() {
            let row = s * width;
            for c in 0..c_lim {
                let m = inject[row + c];
                if m != 0.0 {
                    level.add(c, 1, m);
                }
            }
            if !level.used {
                continue;
            }
            if s == 1 {
                // The last user is always resolved and clears every singleton.
                for c in 0..=level.cmax {
                    let base = c * level.stride;
                    finished += level.data[base..=base + level.rmax].iter().sum::<f64>();
                }
                level.clear();
                continue;
            }
            let a = sic::initial_slot_term(s);

            // Other singletons that do not contain the resolved user.
            staged.clear();
            let kept = &mut kept_rows[s];
            for c in 0..=level.cmax {
                for r in 1..=level.rmax {
                    let m = level.data[c * level.stride + r];
                    if m == 0.0 {
                        continue;
                    }
                    if m < PRUNE_MASS {
                        pruned += m;
                        continue;
                    }
                    let row = kept.row(r - 1, &binom);
                    pruned += m * row.lost;
                    let start = c * staged.stride + row.lo;
                    for (out, p) in staged.data[start..start + row.probs.len()].iter_mut().zip(&row.probs) {
                        *out += m * p;
                    }
                    staged.mark(c, row.lo + row.probs.len() - 1);
                }
            }
            level.clear();

            // Collided slots that drop to a singleton.
            below.clear();
            let coll_rows = &mut collided_rows[s];
            if staged.used {
                for c in 0..=staged.cmax {
                    for k in 0..=staged.rmax {
                        let m = staged.data[c * staged.stride + k];
                        if m == 0.0 {
                            continue;
                        }
                        if m < PRUNE_MASS {
                            pruned += m;
                            continue;
                        }
                        let row = coll_rows.row(c, &binom);
                        pruned += m * row.lost;
                        // j collided slots become singletons: (c, k) -> (c - j, k + j + a).
                        let mut probs = row.probs.as_slice();
                        let mut j = row.lo;
                        if k + j + a == 0 {
                            next_post[(s - 1) * width + c] += m * probs[0];
                            probs = &probs[1..];
                            j += 1;
                        }
                        if probs.is_empty() {
                            continue;
                        }
                        let step = below.stride - 1;
                        let mut idx = (c - j) * below.stride + k + j + a;
                        for p in probs {
                            below.data[idx] += m * p;
                            idx = idx.wrapping_sub(step);
                        }
                        below.mark(c - j, k + j + a + probs.len() - 1);
                    }
                }
            }
            std::mem::swap(&mut level, &mut below);
        }
        if level.used {
            return Err(Error::Internal("mass left in the SIC cascade".into()));
        }

        done[d - 1] = finished;
        for s in 1..=n {
            let row = s * width;
            live[d - 1][s] = next_post[row..row + d].iter().sum();
        }
        std::mem::swap(&mut post, &mut next_post);
    }

    Ok(CpProfile {
        n,
        done,
        live,
        pruned,
    })
}

/// `P(D | N)`, `P(M | N)` and `beta` for one `(U, q, d_max)`.
#[derive(Clone, Debug)]
pub struct ConditionalTables {
    num_users: usize,
    max_cp_len: usize,
    tx_prob: f64,
    /// `cp_len[n][d - 1] = P(D = d | N = n)`.
    cp_len: Vec<ProbVector>,
    /// `decoded[n][m] = P(M = m | N = n)`, `m = 0..=n`.
    decoded: Vec<ProbVector>,
    /// `beta[n][m]`; all zero when a CP with `n` users never reaches `d_max`.
    beta: Vec<Vec<f64>>,
    pruned_mass: f64,
}

impl ConditionalTables {
    /// Builds the tables for `cfg` (the generation probability is ignored).
    pub fn build(cfg: &SystemConfig) -> Result<Self> {
        TableFamily::build(cfg.num_users(), cfg.tx_prob(), cfg.max_cp_len())?.tables(cfg.max_cp_len())
    }

    /// Slow construction through the sparse [`sic`] operations, alternating
    /// `decode_until_stall` and `add_slot` state by state.
    pub fn build_reference(cfg: &SystemConfig) -> Result<Self> {
        let (users, q, dmax) = (cfg.num_users(), cfg.tx_prob(), cfg.max_cp_len());
        let profiles = (0..=users)
            .map(|n| reference_profile(n, users, q, dmax))
            .collect::<Result<Vec<_>>>()?;
        Self::from_profiles(users, q, dmax, &profiles)
    }

    fn from_profiles(users: usize, q: f64, dmax: usize, profiles: &[CpProfile]) -> Result<Self> {
        let mut cp_len = Vec::with_capacity(users + 1);
        let mut decoded = Vec::with_capacity(users + 1);
        let mut beta = Vec::with_capacity(users + 1);
        let mut pruned_mass: f64 = 0.0;
        for (n, prof) in profiles.iter().enumerate() {
            debug_assert_eq!(prof.n, n);
            let live = prof.live_at(dmax);
            let live_total: f64 = live.iter().sum();
            let done_last = prof.done_at(dmax);

            let mut d_col: Vec<f64> = (1..dmax).map(|d| prof.done_at(d)).collect();
            d_col.push(done_last + live_total);

            let mut m_col = vec![0.0; n + 1];
            for s in 1..=n {
                m_col[n - s] = live[s];
            }
            m_col[n] = (1..=dmax).map(|d| prof.done_at(d)).sum();

            let at_max = done_last + live_total;
            let mut b_col = vec![0.0; n + 1];
            if at_max > 0.0 {
                for s in 1..=n {
                    b_col[n - s] = live[s] / at_max;
                }
                b_col[n] = done_last / at_max;
            }

            let column = |v: Vec<f64>, what: &str| {
                ProbVector::with_tolerance(v, TABLE_TOL)
                    .map_err(|e| Error::Internal(format!("{what} column n = {n}: {e}")))
            };
            cp_len.push(column(d_col, "P(D|N)")?);
            decoded.push(column(m_col, "P(M|N)")?);
            beta.push(b_col);
            pruned_mass = pruned_mass.max(prof.pruned);
        }
        Ok(ConditionalTables {
            num_users: users,
            max_cp_len: dmax,
            tx_prob: q,
            cp_len,
            decoded,
            beta,
            pruned_mass,
        })
    }

    pub fn num_users(&self) -> usize {
        self.num_users
    }

    pub fn max_cp_len(&self) -> usize {
        self.max_cp_len
    }

    pub fn tx_prob(&self) -> f64 {
        self.tx_prob
    }

    /// True when the tables were built for the same `(U, q, d_max)` as `cfg`.
    pub fn matches(&self, cfg: &SystemConfig) -> bool {
        self.num_users == cfg.num_users()
            && self.max_cp_len == cfg.max_cp_len()
            && self.tx_prob == cfg.tx_prob()
    }

    /// `P(D = d | N = n)` for `d` in `1..=d_max`.
    pub fn p_cp_len(&self, d: usize, n: usize) -> f64 {
        self.cp_len[n][d - 1]
    }

    /// `P(M = m | N = n)`.
    pub fn p_decoded(&self, m: usize, n: usize) -> f64 {
        self.decoded[n].as_slice().get(m).copied().unwrap_or(0.0)
    }

    pub fn beta(&self, m: usize, n: usize) -> f64 {
        self.beta[n].get(m).copied().unwrap_or(0.0)
    }

    pub fn cp_len_column(&self, n: usize) -> &ProbVector {
        &self.cp_len[n]
    }

    pub fn decoded_column(&self, n: usize) -> &ProbVector {
        &self.decoded[n]
    }

    pub fn beta_column(&self, n: usize) -> &[f64] {
        &self.beta[n]
    }

    /// `E[M | N = n]`.
    pub fn mean_decoded(&self, n: usize) -> f64 {
        self.decoded[n].mean(0.0)
    }

    /// Largest per-column mass dropped by pruning.
    pub fn pruned_mass(&self) -> f64 {
        self.pruned_mass
    }
}

/// Profiles for every `n` in `0..=U` up to a common horizon; yields
/// [`ConditionalTables`] for any `d_max` up to that horizon.
#[derive(Clone, Debug)]
pub struct TableFamily {
    num_users: usize,
    tx_prob: f64,
    profiles: Vec<CpProfile>,
}

impl TableFamily {
    pub fn build(num_users: usize, tx_prob: f64, horizon: usize) -> Result<Self> {
        if horizon < 1 {
            return Err(Error::param("dmax", "must be at least 1 slot"));
        }
        if !(tx_prob > 0.0 && tx_prob <= 1.0) {
            return Err(Error::param("q", format!("{tx_prob} is outside (0, 1]")));
        }
        // Largest n first: they dominate the runtime.
        let mut profiles = (0..=num_users)
            .rev()
            .collect::<Vec<_>>()
            .into_par_iter()
            .map(|n| evolve_cp(n, tx_prob, horizon))
            .collect::<Result<Vec<_>>>()?;
        profiles.reverse();
        Ok(TableFamily {
            num_users,
            tx_prob,
            profiles,
        })
    }

    pub fn horizon(&self) -> usize {
        self.profiles[0].horizon()
    }

    pub fn profile(&self, n: usize) -> &CpProfile {
        &self.profiles[n]
    }

    pub fn tables(&self, dmax: usize) -> Result<ConditionalTables> {
        if dmax < 1 || dmax > self.horizon() {
            return Err(Error::param(
                "dmax",
                format!("{dmax} is outside 1..={}", self.horizon()),
            ));
        }
        ConditionalTables::from_profiles(self.num_users, self.tx_prob, dmax, &self.profiles)
    }
}

fn reference_profile(n: usize, users: usize, q: f64, horizon: usize) -> Result<CpProfile> {
    let mut done = vec![0.0; horizon];
    let mut live = vec![vec![0.0; n + 1]; horizon];
    let start = StateDistribution::point(sic::init_state(n, users)?);
    let mut post = sic::decode_until_stall(&start, n.max(1), q)?;
    for d in 1..=horizon {
        if d > 1 {
            let mut pre = StateDistribution::default();
            for (state, p) in post.iter() {
                pre.add_scaled(&sic::add_slot(*state, q)?, *p);
            }
            post = sic::decode_until_stall(&pre, n, q)?;
        }
        // Resolved CPs end here and leave the evolution.
        done[d - 1] = post.remove(&DecoderState::EMPTY);
        for (state, p) in post.iter() {
            live[d - 1][state.unresolved] += p;
        }
    }
    Ok(CpProfile {
        n,
        done,
        live,
        pruned: 0.0,
    })
}

/// Memoizes [`ConditionalTables`] by `(U, q, d_max)`.
#[derive(Default)]
pub struct TableCache {
    inner: Mutex<HashMap<(usize, u64, usize), Arc<ConditionalTables>>>,
}

impl TableCache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get(&self, cfg: &SystemConfig) -> Result<Arc<ConditionalTables>> {
        let key = (cfg.num_users(), cfg.tx_prob().to_bits(), cfg.max_cp_len());
        if let Some(t) = self.inner.lock().unwrap().get(&key) {
            return Ok(Arc::clone(t));
        }
        let tables = Arc::new(ConditionalTables::build(cfg)?);
        self.inner
            .lock()
            .unwrap()
            .entry(key)
            .or_insert_with(|| Arc::clone(&tables));
        Ok(tables)
    }

    pub fn len(&self) -> usize {
        self.inner.lock().unwrap().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(users: usize, q: f64, dmax: usize) -> SystemConfig {
        SystemConfig::new(users, q, 0.1, dmax).unwrap()
    }

    #[test]
    fn no_users_or_one_user_end_in_one_slot() {
        let t = ConditionalTables::build(&cfg(4, 0.3, 5)).unwrap();
        for n in 0..=1 {
            assert_eq!(t.p_cp_len(1, n), 1.0);
            assert_eq!(t.p_decoded(n, n), 1.0);
        }
    }

    #[test]
    fn certain_collisions_never_decode() {
        let t = ConditionalTables::build(&cfg(2, 1.0, 3)).unwrap();
        assert_eq!(t.p_cp_len(3, 2), 1.0);
        assert_eq!(t.p_decoded(0, 2), 1.0);
    }

    #[test]
    fn two_users_two_slots() {
        let t = ConditionalTables::build(&cfg(2, 0.5, 2)).unwrap();
        assert!((t.p_cp_len(2, 2) - 1.0).abs() < 1e-15);
        assert!((t.p_decoded(2, 2) - 0.5).abs() < 1e-15);
        assert!((t.p_decoded(0, 2) - 0.5).abs() < 1e-15);
        assert_eq!(t.p_decoded(1, 2), 0.0);
        assert!((t.beta(2, 2) - 0.5).abs() < 1e-15);
        assert!((t.beta(0, 2) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn single_slot_cp() {
        let t = ConditionalTables::build(&cfg(3, 0.5, 1)).unwrap();
        for n in 0..=3 {
            assert_eq!(t.p_cp_len(1, n), 1.0);
        }
        assert_eq!(t.p_decoded(0, 3), 1.0);
        assert_eq!(t.beta(0, 2), 1.0);
        assert_eq!(t.beta(1, 1), 1.0);
    }

    #[test]
    fn dense_engine_matches_sparse_reference() {
        for (users, q, dmax) in [(3, 0.3, 4), (6, 0.5, 6), (8, 0.2, 9), (5, 1.0, 4), (7, 0.05, 12)] {
            let c = cfg(users, q, dmax);
            let fast = ConditionalTables::build(&c).unwrap();
            let slow = ConditionalTables::build_reference(&c).unwrap();
            for n in 0..=users {
                for d in 1..=dmax {
                    let (a, b) = (fast.p_cp_len(d, n), slow.p_cp_len(d, n));
                    assert!((a - b).abs() < 1e-13, "P(D={d}|N={n}) {a} vs {b}");
                }
                for m in 0..=n {
                    assert!((fast.p_decoded(m, n) - slow.p_decoded(m, n)).abs() < 1e-13);
                    assert!((fast.beta(m, n) - slow.beta(m, n)).abs() < 1e-13);
                }
            }
        }
    }

    #[test]
    fn family_slices_agree_with_direct_builds() {
        let fam = TableFamily::build(6, 0.3, 8).unwrap();
        for dmax in [1, 2, 5, 8] {
            let direct = ConditionalTables::build(&cfg(6, 0.3, dmax)).unwrap();
            let sliced = fam.tables(dmax).unwrap();
            for n in 0..=6 {
                assert_eq!(direct.cp_len_column(n), sliced.cp_len_column(n));
                assert_eq!(direct.decoded_column(n), sliced.decoded_column(n));
            }
        }
        assert!(fam.tables(9).is_err());
    }

    #[test]
    fn column_invariants_at_reference_scale() {
        let t = ConditionalTables::build(&cfg(100, 0.1, 100)).unwrap();
        for n in 0..=100 {
            assert!((t.cp_len_column(n).sum() - 1.0).abs() < TABLE_TOL);
            assert!((t.decoded_column(n).sum() - 1.0).abs() < TABLE_TOL);
            assert!(t.mean_decoded(n) <= n as f64 + 1e-9);
            if n >= 2 {
                assert_eq!(t.p_cp_len(1, n), 0.0);
            }
            let b: f64 = t.beta_column(n).iter().sum();
            assert!(b == 0.0 || (b - 1.0).abs() < TABLE_TOL);
        }
        assert!(t.pruned_mass() < 1e-12, "pruned {}", t.pruned_mass());
    }

    #[test]
    fn cache_reuses_tables() {
        let cache = TableCache::new();
        let a = cache.get(&cfg(5, 0.3, 6)).unwrap();
        let b = cache.get(&SystemConfig::new(5, 0.3, 0.9, 6).unwrap()).unwrap();
        assert!(Arc::ptr_eq(&a, &b));
        assert_eq!(cache.len(), 1);
    }
}
