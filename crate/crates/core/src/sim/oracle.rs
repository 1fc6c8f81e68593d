//! Exhaustive enumeration of every transmission pattern of a small CP.

use serde::Serialize;

use super::cp::{run_receiver, TxPattern};
use crate::error::{Error, Result};

/// Largest number of free pattern bits (`n * (d_max - 1)`) enumerated.
pub const ORACLE_MAX_BITS: usize = 20;

/// Exact conditional laws of one CP with `n` active users.
#[derive(Clone, Debug, Serialize)]
pub struct OracleColumn {
    pub n: usize,
    /// `P(D = d | N = n)`, index `d - 1`.
    pub cp_len: Vec<f64>,
    /// `P(M = m | N = n)`, `m = 0..=n`.
    pub decoded: Vec<f64>,
    /// Decoded-count law of the CPs that reached `d_max`; zeros when none do.
    pub beta: Vec<f64>,
}

/// Enumerates all `2^(n (d_max - 1))` patterns of slots `2..=d_max` (slot 1
/// is forced), runs the receiver on each, and accumulates the pattern
/// probabilities `q^tx (1-q)^silent`.
pub fn oracle_enumerate(n: usize, q: f64, max_cp_len: usize) -> Result<OracleColumn> {
    if max_cp_len < 1 {
        return Err(Error::param("dmax", "must be at least 1 slot"));
    }
    let bits = n * (max_cp_len - 1);
    if bits > ORACLE_MAX_BITS {
        return Err(Error::OracleTooLarge { n, max_cp_len });
    }
    let mut cp_len = vec![0.0; max_cp_len];
    let mut decoded = vec![0.0; n + 1];
    let mut at_max = vec![0.0; n + 1];
    for mask in 0u64..(1u64 << bits) {
        let tx = mask.count_ones() as i32;
        let p = q.powi(tx) * (1.0 - q).powi(bits as i32 - tx);
        if p == 0.0 {
            continue;
        }
        let later = (0..max_cp_len - 1)
            .map(|slot| {
                (0..n)
                    .filter(|u| mask >> (slot * n + u) & 1 == 1)
                    .map(|u| u as u32)
                    .collect()
            })
            .collect();
        let out = run_receiver(&TxPattern::new(n, later), max_cp_len);
        let m = out.decoded.len();
        cp_len[out.length - 1] += p;
        decoded[m] += p;
        if out.length == max_cp_len {
            at_max[m] += p;
        }
    }
    let total: f64 = at_max.iter().sum();
    let beta = if total > 0.0 {
        at_max.iter().map(|x| x / total).collect()
    } else {
        at_max
    };
    Ok(OracleColumn {
        n,
        cp_len,
        decoded,
        beta,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_users_two_slots() {
        let o = oracle_enumerate(2, 0.5, 2).unwrap();
        assert_eq!(o.cp_len, vec![0.0, 1.0]);
        assert_eq!(o.decoded, vec![0.5, 0.0, 0.5]);
        assert_eq!(o.beta, vec![0.5, 0.0, 0.5]);
    }

    #[test]
    fn one_user_is_immediate() {
        for (q, dmax) in [(0.3, 1), (0.9, 4), (1.0, 3)] {
            let o = oracle_enumerate(1, q, dmax).unwrap();
            assert_eq!(o.cp_len[0], 1.0);
            assert_eq!(o.decoded[1], 1.0);
        }
    }

    #[test]
    fn certain_collisions() {
        let o = oracle_enumerate(2, 1.0, 3).unwrap();
        assert_eq!(o.decoded[0], 1.0);
        assert_eq!(o.cp_len[2], 1.0);
    }

    #[test]
    fn rejects_large_instances() {
        assert!(matches!(
            oracle_enumerate(6, 0.5, 6),
            Err(Error::OracleTooLarge { .. })
        ));
    }
}
