//! Finite-state description of successive interference cancellation within
//! one contention period (CP).
//!
//! A decoder state `(s, c, r)` counts the unresolved users, the collided slots
//! (the forced first slot excluded) and the singleton slots currently usable
//! for cancellation. The first slot carries every active user; it is counted
//! in `r` only once a single unresolved user remains.
//!
//! These operations work on sparse maps and are the readable reference for
//! the dense table engine in [`crate::tables`].

use std::collections::BTreeMap;
use std::fmt;

use crate::error::{Error, Result};
use crate::prob::{binomial_pmf, Binomials};

/// Mass tolerance of a [`StateDistribution`].
pub const STATE_MASS_TOL: f64 = 1e-10;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct DecoderState {
    pub unresolved: usize,
    pub collided: usize,
    pub singletons: usize,
}

impl DecoderState {
    pub const EMPTY: DecoderState = DecoderState::new(0, 0, 0);

    pub const fn new(unresolved: usize, collided: usize, singletons: usize) -> Self {
        DecoderState {
            unresolved,
            collided,
            singletons,
        }
    }

    /// True when SIC can resolve another user.
    pub fn can_resolve(&self) -> bool {
        self.unresolved >= 1 && self.singletons >= 1
    }
}

impl fmt::Display for DecoderState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {}, {})", self.unresolved, self.collided, self.singletons)
    }
}

/// Probability mass over decoder states.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct StateDistribution {
    mass: BTreeMap<DecoderState, f64>,
}

impl StateDistribution {
    pub fn point(state: DecoderState) -> Self {
        let mut d = StateDistribution::default();
        d.add(state, 1.0);
        d
    }

    pub fn from_pairs(pairs: impl IntoIterator<Item = (DecoderState, f64)>) -> Self {
        let mut d = StateDistribution::default();
        for (s, p) in pairs {
            d.add(s, p);
        }
        d
    }

    /// Adds `p` to the mass of `state`. Zero masses are not stored.
    pub fn add(&mut self, state: DecoderState, p: f64) {
        if p != 0.0 {
            *self.mass.entry(state).or_insert(0.0) += p;
        }
    }

    pub fn get(&self, state: &DecoderState) -> f64 {
        self.mass.get(state).copied().unwrap_or(0.0)
    }

    pub fn remove(&mut self, state: &DecoderState) -> f64 {
        self.mass.remove(state).unwrap_or(0.0)
    }

    pub fn total(&self) -> f64 {
        self.mass.values().sum()
    }

    pub fn len(&self) -> usize {
        self.mass.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mass.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&DecoderState, &f64)> {
        self.mass.iter()
    }

    /// Mixture `self + weight * other`.
    pub fn add_scaled(&mut self, other: &StateDistribution, weight: f64) {
        for (s, p) in other.iter() {
            self.add(*s, weight * p);
        }
    }

    /// Checks nonnegativity and that the mass sums to `expected`.
    pub fn check_mass(&self, expected: f64) -> Result<()> {
        if let Some((s, p)) = self.mass.iter().find(|(_, p)| **p < 0.0) {
            return Err(Error::Internal(format!("negative mass {p:e} at {s}")));
        }
        let total = self.total();
        if (total - expected).abs() > STATE_MASS_TOL {
            return Err(Error::Internal(format!(
                "state mass {total} differs from {expected}"
            )));
        }
        Ok(())
    }
}

/// Initial state of a CP with `n` active users (all transmit in slot 1).
pub fn init_state(n: usize, num_users: usize) -> Result<DecoderState> {
    if n > num_users {
        return Err(Error::UserCountOutOfRange { n, users: num_users });
    }
    Ok(match n {
        0 => DecoderState::EMPTY,
        1 => DecoderState::new(1, 0, 1),
        _ => DecoderState::new(n, 0, 0),
    })
}

/// Probability that a collided slot has exactly two unresolved users, one of
/// them the user being resolved, when `s` of the `n` active users are
/// unresolved and slots hold each user independently with probability `q`.
///
/// Numerator and denominator follow the degree-distribution form with
/// `Lambda_k = C(n, k) q^k (1-q)^(n-k)`. The denominator (probability that a
/// slot has residual degree at least two) is accumulated as a sum of positive
/// hypergeometric terms rather than as one minus the degree-0 and degree-1
/// terms, which is the same quantity without cancellation at small `q`.
pub fn h_unresolved(s: usize, n: usize, q: f64) -> Result<f64> {
    let binom = Binomials::new(n);
    h_unresolved_with(s, n, q, &binom, binomial_pmf(n, q).as_slice())
}

pub(crate) fn h_unresolved_with(
    s: usize,
    n: usize,
    q: f64,
    binom: &Binomials,
    lambda: &[f64],
) -> Result<f64> {
    if s < 1 || s > n {
        return Err(Error::Unreachable(format!(
            "h requires 1 <= s <= n, got s = {s}, n = {n}"
        )));
    }
    if s == 1 {
        // No slot can hold two unresolved users.
        return Ok(0.0);
    }
    let nf = n as f64;
    let mut num = 0.0;
    for k in 2..=(n - s + 2) {
        num += lambda[k] * (k * (k - 1)) as f64 / nf * (s - 1) as f64 / (nf - 1.0)
            * binom.get(n - s, k - 2)
            / binom.get(n - 2, k - 2);
    }
    let mut den = 0.0;
    for (k, lam) in lambda.iter().enumerate().skip(2) {
        if *lam == 0.0 {
            continue;
        }
        let mut p_ge2 = 0.0;
        for t in 2..=k.min(s) {
            p_ge2 += binom.get(s, t) * binom.get(n - s, k - t);
        }
        den += lam * p_ge2 / binom.get(n, k);
    }
    if den <= 1e-300 {
        return Err(Error::Unreachable(format!(
            "no collided slot possible with s = {s}, n = {n}, q = {q}"
        )));
    }
    let h = num / den;
    if h > 1.0 {
        if h - 1.0 < 1e-12 {
            return Ok(1.0);
        }
        return Err(Error::Internal(format!("h = {h} exceeds 1")));
    }
    Ok(h)
}

/// `I_s(a)`: resolving one of the last two users turns the first slot into a
/// singleton (`a = 1`); otherwise nothing is added (`a = 0`).
pub fn initial_slot_term(s: usize) -> usize {
    usize::from(s == 2)
}

/// Resolves exactly one user from `state`.
///
/// The chosen singleton and `i - 1` of the other `r - 1` singletons (each
/// holding the resolved user with probability `1/s`) empty out; `j` of the `c`
/// collided slots (each with probability `h_s`) drop to a singleton; the
/// first slot adds `a = I_s` singletons. Successor: `(s-1, c-j, r-i+j+a)`.
pub fn resolve_one_user(state: DecoderState, n: usize, q: f64) -> Result<StateDistribution> {
    if !state.can_resolve() {
        return Err(Error::InvalidState(
            state.to_string(),
            "resolving needs s >= 1 and r >= 1",
        ));
    }
    if state.unresolved > n {
        return Err(Error::InvalidState(state.to_string(), "more unresolved users than active"));
    }
    let h = h_unresolved(state.unresolved, n, q)?;
    Ok(resolve_with(state, h))
}

fn resolve_with(state: DecoderState, h: f64) -> StateDistribution {
    let DecoderState {
        unresolved: s,
        collided: c,
        singletons: r,
    } = state;
    let a = initial_slot_term(s);
    let collided = binomial_pmf(c, h);
    // i - 1 other singletons hold the resolved user: Binomial(r - 1, 1/s).
    let shared = binomial_pmf(r - 1, 1.0 / s as f64);
    let mut out = StateDistribution::default();
    for (j, pj) in collided.iter().enumerate() {
        for (i_minus_1, pi) in shared.iter().enumerate() {
            let i = i_minus_1 + 1;
            debug_assert!(i <= r + j + a);
            let p = pj * pi;
            if p == 0.0 {
                continue;
            }
            let next = if s == 1 {
                DecoderState::EMPTY
            } else {
                DecoderState::new(s - 1, c - j, r - i + j + a)
            };
            out.add(next, p);
        }
    }
    out
}

/// Runs SIC to a stall: every state with a usable singleton is resolved
/// until all mass sits on states with `r = 0` (or on the empty state).
pub fn decode_until_stall(dist: &StateDistribution, n: usize, q: f64) -> Result<StateDistribution> {
    let mut h_cache: BTreeMap<usize, f64> = BTreeMap::new();
    let mut pending = StateDistribution::default();
    let mut out = StateDistribution::default();
    let mut budget = 16usize;
    for (state, p) in dist.iter() {
        if state.can_resolve() {
            pending.add(*state, *p);
            let span = state.collided + state.singletons + 2;
            budget += (state.unresolved + 1) * span * span;
        } else {
            out.add(collapse(*state), *p);
        }
    }
    let mut steps = 0usize;
    // Every resolution lowers `s`, so popping the largest state first drains
    // each state exactly once.
    while let Some((state, p)) = pending.mass.pop_last() {
        steps += 1;
        if steps > budget {
            return Err(Error::Internal(format!(
                "SIC worklist exceeded {budget} iterations"
            )));
        }
        let s = state.unresolved;
        let h = match h_cache.get(&s) {
            Some(h) => *h,
            None => {
                let h = h_unresolved(s, n, q)?;
                h_cache.insert(s, h);
                h
            }
        };
        for (next, pn) in resolve_with(state, h).iter() {
            if next.can_resolve() {
                pending.add(*next, p * pn);
            } else {
                out.add(collapse(*next), p * pn);
            }
        }
    }
    Ok(out)
}

fn collapse(state: DecoderState) -> DecoderState {
    if state.unresolved == 0 {
        DecoderState::EMPTY
    } else {
        state
    }
}

/// Pre-decoding state after one more slot is observed from post-decoding
/// state `(s, c, 0)`: idle, a new singleton, or a new collision.
pub fn add_slot(state: DecoderState, q: f64) -> Result<StateDistribution> {
    if state.singletons != 0 {
        return Err(Error::InvalidState(state.to_string(), "adding a slot needs r = 0"));
    }
    if state.unresolved == 0 {
        return Err(Error::InvalidState(state.to_string(), "the CP is already resolved"));
    }
    let (idle, single, coll) = slot_split(state.unresolved, q);
    let DecoderState {
        unresolved: s,
        collided: c,
        ..
    } = state;
    Ok(StateDistribution::from_pairs([
        (DecoderState::new(s, c, 0), idle),
        (DecoderState::new(s, c, 1), single),
        (DecoderState::new(s, c + 1, 0), coll),
    ]))
}

/// `((1-q)^s, s q (1-q)^(s-1), remainder)` for a slot seen by `s` unresolved users.
pub(crate) fn slot_split(s: usize, q: f64) -> (f64, f64, f64) {
    let idle = (1.0 - q).powi(s as i32);
    let single = s as f64 * q * (1.0 - q).powi(s as i32 - 1);
    let coll = (1.0 - idle - single).max(0.0);
    (idle, single, coll)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn st(s: usize, c: usize, r: usize) -> DecoderState {
        DecoderState::new(s, c, r)
    }

    /// Independent closed form: residual slot content is Binomial(s, q).
    fn h_closed(s: usize, q: f64) -> f64 {
        if s == 1 {
            return 0.0;
        }
        let sf = s as f64;
        let num = q * (sf - 1.0) * q * (1.0 - q).powi(s as i32 - 2);
        let den = 1.0 - (1.0 - q).powi(s as i32) - sf * q * (1.0 - q).powi(s as i32 - 1);
        num / den
    }

    #[test]
    fn initialization_cases() {
        assert_eq!(init_state(0, 5).unwrap(), st(0, 0, 0));
        assert_eq!(init_state(1, 5).unwrap(), st(1, 0, 1));
        assert_eq!(init_state(5, 5).unwrap(), st(5, 0, 0));
        assert!(matches!(init_state(6, 5), Err(Error::UserCountOutOfRange { .. })));
    }

    #[test]
    fn h_hand_values() {
        assert!((h_unresolved(2, 2, 0.5).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(h_unresolved(1, 1, 0.7).unwrap(), 0.0);
        let h = h_unresolved(3, 5, 0.2).unwrap();
        assert!((0.0..=1.0).contains(&h));
        assert!((h - h_closed(3, 0.2)).abs() < 1e-14, "{h} vs {}", h_closed(3, 0.2));
    }

    #[test]
    fn h_matches_closed_form_on_a_grid() {
        for n in 2..=40 {
            for s in 1..=n {
                for q in [0.002, 0.01, 0.1, 0.37, 0.9, 1.0] {
                    let h = h_unresolved(s, n, q).unwrap();
                    let want = h_closed(s, q);
                    assert!(
                        (h - want).abs() < 1e-10 * want.max(1e-3),
                        "s={s} n={n} q={q}: {h} vs {want}"
                    );
                }
            }
        }
    }

    #[test]
    fn h_rejects_bad_ranges() {
        assert!(h_unresolved(0, 3, 0.5).is_err());
        assert!(h_unresolved(4, 3, 0.5).is_err());
    }

    #[test]
    fn resolve_last_user() {
        for q in [0.1, 0.9] {
            let d = resolve_one_user(st(1, 0, 1), 3, q).unwrap();
            assert_eq!(d, StateDistribution::point(st(0, 0, 0)));
        }
    }

    #[test]
    fn resolve_exposes_first_slot() {
        let d = resolve_one_user(st(2, 0, 1), 2, 0.5).unwrap();
        assert_eq!(d, StateDistribution::point(st(1, 0, 1)));
    }

    #[test]
    fn resolve_three_users_one_collision() {
        let q = 0.3;
        let h = h_unresolved(3, 3, q).unwrap();
        let d = resolve_one_user(st(3, 1, 1), 3, q).unwrap();
        assert_eq!(d.len(), 2);
        // i = 1, a = 0: r' = 1 - 1 + j.
        assert!((d.get(&st(2, 1, 0)) - (1.0 - h)).abs() < 1e-15);
        assert!((d.get(&st(2, 0, 1)) - h).abs() < 1e-15);
        d.check_mass(1.0).unwrap();
    }

    #[test]
    fn resolve_requires_a_singleton() {
        assert!(resolve_one_user(st(3, 2, 0), 3, 0.5).is_err());
        assert!(resolve_one_user(st(0, 0, 1), 3, 0.5).is_err());
    }

    #[test]
    fn resolve_lowers_unresolved_by_one() {
        for s in 2..6 {
            for c in 0..4 {
                for r in 1..4 {
                    let d = resolve_one_user(st(s, c, r), 6, 0.4).unwrap();
                    d.check_mass(1.0).unwrap();
                    assert!(d.iter().all(|(x, _)| x.unresolved == s - 1));
                }
            }
        }
    }

    #[test]
    fn stall_is_identity_without_singletons() {
        let d = StateDistribution::point(st(4, 2, 0));
        assert_eq!(decode_until_stall(&d, 4, 0.3).unwrap(), d);
    }

    #[test]
    fn stall_cascade_two_users() {
        let d = StateDistribution::point(st(2, 0, 1));
        let out = decode_until_stall(&d, 2, 0.5).unwrap();
        assert_eq!(out, StateDistribution::point(st(0, 0, 0)));
    }

    #[test]
    fn stall_is_linear() {
        let mix = StateDistribution::from_pairs([(st(1, 0, 1), 0.5), (st(3, 1, 0), 0.5)]);
        let out = decode_until_stall(&mix, 3, 0.4).unwrap();
        assert_eq!(out, StateDistribution::from_pairs([(st(0, 0, 0), 0.5), (st(3, 1, 0), 0.5)]));
    }

    #[test]
    fn stall_output_has_no_singletons() {
        let d = StateDistribution::from_pairs([(st(6, 4, 1), 0.3), (st(5, 2, 3), 0.7)]);
        let out = decode_until_stall(&d, 6, 0.35).unwrap();
        out.check_mass(1.0).unwrap();
        assert!(out
            .iter()
            .all(|(x, _)| x.singletons == 0 && (x.unresolved > 0 || *x == DecoderState::EMPTY)));
    }

    #[test]
    fn add_slot_splits() {
        let d = add_slot(st(1, 0, 0), 0.5).unwrap();
        assert_eq!(d, StateDistribution::from_pairs([(st(1, 0, 0), 0.5), (st(1, 0, 1), 0.5)]));
        assert_eq!(d.get(&st(1, 1, 0)), 0.0);

        let d = add_slot(st(2, 0, 0), 0.5).unwrap();
        assert_eq!(
            d,
            StateDistribution::from_pairs([(st(2, 0, 0), 0.25), (st(2, 0, 1), 0.5), (st(2, 1, 0), 0.25)])
        );

        let d = add_slot(st(3, 2, 0), 1.0).unwrap();
        assert_eq!(d, StateDistribution::point(st(3, 3, 0)));
    }

    #[test]
    fn add_slot_rejects_pre_decoding_state() {
        assert!(add_slot(st(3, 2, 1), 0.5).is_err());
        assert!(add_slot(st(0, 0, 0), 0.5).is_err());
    }
}
