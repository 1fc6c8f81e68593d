//! One contention period at slot level: transmission patterns and the
//! receiver's SIC with replica cancellation.

use std::collections::BTreeSet;

use rand::Rng;
use rand_distr::{Distribution, Geometric};
use serde::Serialize;

/// Who transmits in which slot of a CP. `slots[t]` lists the local indices
/// (`0..active`) of the users transmitting in slot `t + 1`. Slot 1 always
/// holds every active user.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TxPattern {
    active: usize,
    slots: Vec<Vec<u32>>,
}

impl TxPattern {
    /// Pattern with the forced first slot; later slots are given explicitly
    /// (`later[0]` is slot 2).
    pub fn new(active: usize, later: Vec<Vec<u32>>) -> Self {
        let mut slots = Vec::with_capacity(later.len() + 1);
        slots.push((0..active as u32).collect());
        for mut s in later {
            s.sort_unstable();
            s.dedup();
            assert!(s.iter().all(|&u| (u as usize) < active), "user index out of range");
            slots.push(s);
        }
        TxPattern { active, slots }
    }

    /// Draws slots `2..=max_cp_len` with per-slot access probability `q`.
    pub fn random<R: Rng + ?Sized>(active: usize, q: f64, max_cp_len: usize, rng: &mut R) -> Self {
        let mut later = vec![Vec::new(); max_cp_len.saturating_sub(1)];
        if max_cp_len > 1 && active > 0 {
            // Gaps between a user's replicas are geometric; this is the same
            // law as one Bernoulli(q) draw per slot.
            let gap = Geometric::new(q).expect("q in (0, 1]");
            for u in 0..active as u32 {
                let mut slot = 1u64; // 1-based, slot 1 is the forced one
                loop {
                    slot += 1 + gap.sample(rng);
                    if slot > max_cp_len as u64 {
                        break;
                    }
                    later[slot as usize - 2].push(u);
                }
            }
        }
        TxPattern::new(active, later)
    }

    pub fn active(&self) -> usize {
        self.active
    }

    /// Number of slots described, including slot 1.
    pub fn len(&self) -> usize {
        self.slots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slots.is_empty()
    }

    /// Users in slot `t` (1-based).
    pub fn slot(&self, t: usize) -> &[u32] {
        self.slots.get(t - 1).map(Vec::as_slice).unwrap_or(&[])
    }
}

/// Receiver-side result of one CP.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct CpOutcome {
    /// CP length in slots.
    pub length: usize,
    /// Local indices of the decoded users, in decoding order.
    pub decoded: Vec<u32>,
    /// Slot (1-based) at which each decoded user was recovered.
    pub decoded_at: Vec<usize>,
    /// True when the CP stopped at `d_max` with users still undecoded.
    pub truncated: bool,
}

/// Runs the receiver over `pattern` until slot 1 is empty (everyone decoded)
/// or `max_cp_len` slots have been observed. After every slot it peels all
/// singletons, cancelling each decoded user's replicas in every observed
/// slot, slot 1 included; replicas of already decoded users in new slots are
/// cancelled on arrival.
pub fn run_receiver(pattern: &TxPattern, max_cp_len: usize) -> CpOutcome {
    let n = pattern.active();
    let mut decoded_flag = vec![false; n];
    let mut decoded = Vec::new();
    let mut decoded_at = Vec::new();
    // Per observed slot: residual count and xor of residual member ids.
    let mut count: Vec<u32> = Vec::with_capacity(max_cp_len);
    let mut xor: Vec<u32> = Vec::with_capacity(max_cp_len);
    let mut user_slots: Vec<Vec<u32>> = vec![Vec::new(); n];
    let mut queue: Vec<usize> = Vec::new();

    for t in 1..=max_cp_len {
        let idx = t - 1;
        let (mut c, mut x) = (0u32, 0u32);
        for &u in pattern.slot(t) {
            if !decoded_flag[u as usize] {
                c += 1;
                x ^= u;
                user_slots[u as usize].push(idx as u32);
            }
        }
        count.push(c);
        xor.push(x);
        if c == 1 {
            queue.push(idx);
        }
        while let Some(slot) = queue.pop() {
            if count[slot] != 1 {
                continue;
            }
            let u = xor[slot];
            decoded_flag[u as usize] = true;
            decoded.push(u);
            decoded_at.push(t);
            for &s in &user_slots[u as usize] {
                let s = s as usize;
                count[s] -= 1;
                xor[s] ^= u;
                if count[s] == 1 {
                    queue.push(s);
                }
            }
        }
        if count[0] == 0 {
            return CpOutcome {
                length: t,
                decoded,
                decoded_at,
                truncated: false,
            };
        }
    }
    CpOutcome {
        length: max_cp_len,
        truncated: decoded.len() < n,
        decoded,
        decoded_at,
    }
}

/// Per-CP record kept by the simulator.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct CpRecord {
    pub start_slot: u64,
    pub length: usize,
    pub active: usize,
    pub decoded: usize,
    /// Global ids of the decoded users, ascending.
    pub decoded_user_ids: BTreeSet<usize>,
    pub truncated: bool,
}

impl CpRecord {
    /// Checks `m <= n`, that only truncated CPs leave users undecoded, and
    /// that CPs with at most one user last a single slot.
    pub fn check(&self, max_cp_len: usize) -> Result<(), String> {
        if self.decoded > self.active || self.decoded != self.decoded_user_ids.len() {
            return Err(format!("decoded {} of {} active", self.decoded, self.active));
        }
        if !self.truncated && self.decoded != self.active {
            return Err("untruncated CP left users undecoded".into());
        }
        if self.truncated && self.length != max_cp_len {
            return Err("truncated CP shorter than d_max".into());
        }
        if self.length == 0 || self.length > max_cp_len {
            return Err(format!("length {} outside 1..={max_cp_len}", self.length));
        }
        if self.active <= 1 && self.length != 1 {
            return Err("CP with at most one user lasted more than one slot".into());
        }
        Ok(())
    }
}

/// Simulates one CP for the users in `active` (global ids) starting at
/// `start_slot`.
pub fn simulate_cp<R: Rng + ?Sized>(
    active: &[usize],
    start_slot: u64,
    tx_prob: f64,
    max_cp_len: usize,
    rng: &mut R,
) -> CpRecord {
    let pattern = TxPattern::random(active.len(), tx_prob, max_cp_len, rng);
    record_from(active, start_slot, &run_receiver(&pattern, max_cp_len))
}

pub(crate) fn record_from(active: &[usize], start_slot: u64, out: &CpOutcome) -> CpRecord {
    CpRecord {
        start_slot,
        length: out.length,
        active: active.len(),
        decoded: out.decoded.len(),
        decoded_user_ids: out.decoded.iter().map(|&u| active[u as usize]).collect(),
        truncated: out.truncated,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    // Users u1..u4 are local ids 0..3.

    #[test]
    fn first_example_cp_decodes_everyone_in_five_slots() {
        // Three active users; u1 alone in slot 5 starts the cascade
        // u1 -> u3 (slot 2) -> u2 (slot 3).
        let p = TxPattern::new(3, vec![vec![0, 2], vec![1, 2], vec![], vec![0], vec![1]]);
        let out = run_receiver(&p, 6);
        assert_eq!(out.length, 5);
        assert_eq!(out.decoded, vec![0, 2, 1]);
        assert_eq!(out.decoded_at, vec![5, 5, 5]);
        assert!(!out.truncated);
    }

    #[test]
    fn second_example_cp_stops_at_dmax() {
        // Four active users; u3 decoded in slot 3, slot 2 stays collided,
        // slot 4 collides without u3, slot 5 idle, slot 6 only holds u3.
        let p = TxPattern::new(
            4,
            vec![vec![0, 1, 2], vec![2], vec![0, 3], vec![], vec![2]],
        );
        let out = run_receiver(&p, 6);
        assert_eq!(out.length, 6);
        assert_eq!(out.decoded, vec![2]);
        assert!(out.truncated);
    }

    #[test]
    fn empty_cp_lasts_one_slot() {
        let out = run_receiver(&TxPattern::new(0, vec![vec![]; 3]), 4);
        assert_eq!(out.length, 1);
        assert!(out.decoded.is_empty());
        let rec = record_from(&[], 0, &out);
        rec.check(4).unwrap();
    }

    #[test]
    fn single_user_decodes_in_slot_one() {
        let out = run_receiver(&TxPattern::new(1, vec![vec![0]; 3]), 4);
        assert_eq!((out.length, out.decoded.len()), (1, 1));
    }

    #[test]
    fn first_slot_is_cancelled_last() {
        // Two users, u1 alone in slot 2: cancelling u1 from slot 1 exposes u2.
        let out = run_receiver(&TxPattern::new(2, vec![vec![0]]), 3);
        assert_eq!(out.decoded, vec![0, 1]);
        assert_eq!(out.length, 2);
    }

    #[test]
    fn never_past_dmax_and_never_early() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..2000 {
            let n = rng.random_range(0..8);
            let active: Vec<usize> = (10..10 + n).collect();
            let rec = simulate_cp(&active, 0, 0.3, 7, &mut rng);
            rec.check(7).unwrap();
            assert!(rec.decoded_user_ids.iter().all(|u| active.contains(u)));
        }
    }

    #[test]
    fn random_pattern_density() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut hits = 0usize;
        let trials = 4000;
        for _ in 0..trials {
            let p = TxPattern::random(5, 0.2, 11, &mut rng);
            assert_eq!(p.slot(1).len(), 5);
            hits += (2..=11).map(|t| p.slot(t).len()).sum::<usize>();
        }
        let rate = hits as f64 / (trials * 5 * 10) as f64;
        assert!((rate - 0.2).abs() < 0.005, "{rate}");
    }
}
