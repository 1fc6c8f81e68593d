//! Slot-level Monte Carlo simulation of back-to-back contention periods.
//!
//! Packet generation is Bernoulli(γ) per user and slot. Instead of drawing
//! every (user, slot) pair, each user carries the slot of its next arrival
//! and gaps are sampled geometrically, which has the same law.

pub mod cp;
pub mod oracle;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Geometric};
use rayon::prelude::*;
use serde::Serialize;
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::config::SystemConfig;
use crate::error::{Error, Result};
use crate::prob::{normalize, ProbVector};
use cp::simulate_cp;

/// Number of batches used for batch-means confidence intervals.
pub const NUM_BATCHES: usize = 30;

/// Per-user buffer and age bookkeeping.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct UserState {
    /// A packet is waiting for the next CP.
    pub buffered: bool,
    /// Timestamp of the packet being sent in the current CP.
    pub pending_timestamp: Option<u64>,
    /// Timestamp σ of the last delivered packet.
    pub last_delivered: Option<u64>,
    /// Length of the CP that delivered it.
    pub last_delivery_len: u64,
    /// Slot of the next packet generation (`u64::MAX` if never).
    next_arrival: u64,
}

/// Sums over a contiguous run of CPs.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
pub struct BatchStats {
    pub cps: u64,
    pub slots: u64,
    pub decoded: u64,
    pub peak_sum: f64,
    /// Sum over the peak samples of the length of the CP that delivered the
    /// previous update.
    pub delta0_sum: f64,
    pub peaks: u64,
}

impl BatchStats {
    fn absorb(&mut self, other: &BatchStats) {
        self.cps += other.cps;
        self.slots += other.slots;
        self.decoded += other.decoded;
        self.peak_sum += other.peak_sum;
        self.delta0_sum += other.delta0_sum;
        self.peaks += other.peaks;
    }

    fn throughput(&self) -> f64 {
        self.decoded as f64 / self.slots as f64
    }

    fn peak_aoi(&self) -> f64 {
        self.peak_sum / self.peaks as f64
    }
}

/// Raw counters of one or more replications; merging is concatenation plus
/// elementwise addition, so it does not depend on completion order once the
/// parts are sorted by replication index.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SimCounts {
    pub batches: Vec<BatchStats>,
    /// Counts of CP lengths, index `d - 1`.
    pub cp_len: Vec<u64>,
    /// Counts of active users per CP, index `n`.
    pub active: Vec<u64>,
    /// Counts of decoded users per CP, index `m`.
    pub decoded: Vec<u64>,
}

impl SimCounts {
    fn new(cfg: &SystemConfig) -> Self {
        SimCounts {
            batches: Vec::new(),
            cp_len: vec![0; cfg.max_cp_len()],
            active: vec![0; cfg.num_users() + 1],
            decoded: vec![0; cfg.num_users() + 1],
        }
    }

    pub fn merge(mut self, other: &SimCounts) -> SimCounts {
        self.batches.extend_from_slice(&other.batches);
        for (a, b) in self.cp_len.iter_mut().zip(&other.cp_len) {
            *a += b;
        }
        for (a, b) in self.active.iter_mut().zip(&other.active) {
            *a += b;
        }
        for (a, b) in self.decoded.iter_mut().zip(&other.decoded) {
            *a += b;
        }
        self
    }

    fn total(&self) -> BatchStats {
        let mut t = BatchStats::default();
        for b in &self.batches {
            t.absorb(b);
        }
        t
    }
}

/// Estimates from a simulation run.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SimMetrics {
    pub seed: u64,
    pub cp_count: u64,
    pub slots: u64,
    pub throughput: f64,
    /// 95% batch-means half-width.
    pub throughput_ci: f64,
    pub throughput_se: f64,
    /// Mean of all sampled peak ages (NaN when none were sampled).
    pub peak_aoi: f64,
    pub peak_aoi_ci: f64,
    pub peak_aoi_se: f64,
    /// Mean length of the CP that delivered the update preceding each peak.
    pub e_delta0: f64,
    pub peak_samples: u64,
    pub batches: usize,
    pub mean_active: f64,
    pub mean_cp_len: f64,
    pub pi_d: ProbVector,
    pub pi_n: ProbVector,
    pub pi_m: ProbVector,
}

impl SimMetrics {
    fn from_counts(seed: u64, counts: &SimCounts) -> Result<Self> {
        let total = counts.total();
        let mean_of = |h: &[u64], offset: f64| {
            let n: u64 = h.iter().sum();
            h.iter()
                .enumerate()
                .map(|(i, &c)| (i as f64 + offset) * c as f64)
                .sum::<f64>()
                / n as f64
        };
        let hist = |h: &[u64]| normalize(&h.iter().map(|&c| c as f64).collect::<Vec<_>>());
        let tput: Vec<f64> = counts.batches.iter().map(BatchStats::throughput).collect();
        let aoi: Vec<f64> = counts
            .batches
            .iter()
            .filter(|b| b.peaks > 0)
            .map(BatchStats::peak_aoi)
            .collect();
        let (throughput_se, throughput_ci) = interval(&tput);
        let (peak_aoi_se, peak_aoi_ci) = if aoi.len() == counts.batches.len() {
            interval(&aoi)
        } else {
            (f64::NAN, f64::NAN)
        };
        Ok(SimMetrics {
            seed,
            cp_count: total.cps,
            slots: total.slots,
            throughput: total.throughput(),
            throughput_ci,
            throughput_se,
            peak_aoi: total.peak_aoi(),
            peak_aoi_ci,
            peak_aoi_se,
            e_delta0: total.delta0_sum / total.peaks as f64,
            peak_samples: total.peaks,
            batches: counts.batches.len(),
            mean_active: mean_of(&counts.active, 0.0),
            mean_cp_len: mean_of(&counts.cp_len, 1.0),
            pi_d: hist(&counts.cp_len)?,
            pi_n: hist(&counts.active)?,
            pi_m: hist(&counts.decoded)?,
        })
    }
}

/// Standard error of the mean of `samples` and the 95% Student-t
/// half-width (both NaN with fewer than 2 samples).
pub fn interval(samples: &[f64]) -> (f64, f64) {
    let b = samples.len();
    if b < 2 {
        return (f64::NAN, f64::NAN);
    }
    let mean = samples.iter().sum::<f64>() / b as f64;
    let var = samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (b - 1) as f64;
    let t = StudentsT::new(0.0, 1.0, (b - 1) as f64)
        .expect("positive degrees of freedom")
        .inverse_cdf(0.975);
    let se = (var / b as f64).sqrt();
    (se, t * se)
}

pub fn half_width(samples: &[f64]) -> f64 {
    interval(samples).1
}

/// Sampler for the slot of a user's next packet generation.
struct Arrivals(Option<Geometric>);

impl Arrivals {
    fn new(gamma: f64) -> Self {
        Arrivals((gamma > 0.0).then(|| Geometric::new(gamma).expect("gamma in (0, 1]")))
    }

    /// First arrival at or after `from`.
    fn next_from(&self, from: u64, rng: &mut ChaCha8Rng) -> u64 {
        match &self.0 {
            Some(g) => from.saturating_add(g.sample(rng)),
            None => u64::MAX,
        }
    }
}

/// Runs `warmup_cps + num_cps` CPs on RNG stream `stream` of `seed` and
/// returns the raw counters of the measured CPs.
pub fn simulate_counts(
    cfg: &SystemConfig,
    seed: u64,
    stream: u64,
    num_cps: u64,
    warmup_cps: u64,
) -> Result<SimCounts> {
    if num_cps == 0 {
        return Err(Error::param("cps", "must simulate at least one CP"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    let users = cfg.num_users();
    let dmax = cfg.max_cp_len();
    let arrivals = Arrivals::new(cfg.gen_prob());

    // Slot 0 starts the first CP; nobody has a packet before it.
    let mut state: Vec<UserState> = (0..users)
        .map(|_| UserState {
            buffered: false,
            pending_timestamp: None,
            last_delivered: None,
            last_delivery_len: 0,
            next_arrival: arrivals.next_from(0, &mut rng),
        })
        .collect();

    let mut counts = SimCounts::new(cfg);
    let batch_len = num_cps.div_ceil(NUM_BATCHES as u64).max(1);
    let mut batch = BatchStats::default();
    let mut start = 0u64;
    let mut active = Vec::with_capacity(users);

    for cp_index in 0..warmup_cps + num_cps {
        active.clear();
        for (u, st) in state.iter_mut().enumerate() {
            st.pending_timestamp = if st.buffered {
                st.buffered = false;
                active.push(u);
                Some(start)
            } else {
                None
            };
        }

        let rec = simulate_cp(&active, start, cfg.tx_prob(), dmax, &mut rng);
        rec.check(dmax).map_err(Error::Internal)?;
        let end = start + rec.length as u64;
        let measured = cp_index >= warmup_cps;

        for &u in &rec.decoded_user_ids {
            let st = &mut state[u];
            let stamp = st
                .pending_timestamp
                .ok_or_else(|| Error::Internal(format!("user {u} decoded without a packet")))?;
            if let Some(sigma) = st.last_delivered {
                if measured {
                    batch.peak_sum += (end - sigma) as f64;
                    batch.delta0_sum += st.last_delivery_len as f64;
                    batch.peaks += 1;
                }
            }
            st.last_delivered = Some(stamp);
            st.last_delivery_len = rec.length as u64;
        }

        // Generations in slots start..end feed the next CP; older undelivered
        // packets are gone, newer ones replace buffered ones.
        for st in state.iter_mut() {
            if st.next_arrival < end {
                st.buffered = true;
                st.next_arrival = arrivals.next_from(end, &mut rng);
            }
        }

        if measured {
            counts.cp_len[rec.length - 1] += 1;
            counts.active[rec.active] += 1;
            counts.decoded[rec.decoded] += 1;
            batch.cps += 1;
            batch.slots += rec.length as u64;
            batch.decoded += rec.decoded as u64;
            if batch.cps == batch_len {
                counts.batches.push(std::mem::take(&mut batch));
            }
        }
        start = end;
    }
    if batch.cps > 0 {
        counts.batches.push(batch);
    }
    Ok(counts)
}

/// Simulates `num_cps` measured CPs after `warmup_cps` discarded ones.
/// Deterministic in `(cfg, seed, num_cps, warmup_cps)`.
pub fn simulate(cfg: &SystemConfig, seed: u64, num_cps: u64, warmup_cps: u64) -> Result<SimMetrics> {
    let counts = simulate_counts(cfg, seed, 0, num_cps, warmup_cps)?;
    SimMetrics::from_counts(seed, &counts)
}

/// Runs `replications` independent runs on streams `0..replications` of
/// `seed` in parallel and pools them; each contributes its own batches.
pub fn simulate_replicated(
    cfg: &SystemConfig,
    seed: u64,
    replications: u64,
    num_cps: u64,
    warmup_cps: u64,
) -> Result<SimMetrics> {
    if replications == 0 {
        return Err(Error::param("replications", "must be at least 1"));
    }
    let parts = (0..replications)
        .into_par_iter()
        .map(|r| simulate_counts(cfg, seed, r, num_cps, warmup_cps))
        .collect::<Result<Vec<_>>>()?;
    let mut iter = parts.into_iter();
    let first = iter.next().expect("at least one replication");
    let merged = iter.fold(first, |acc, p| acc.merge(&p));
    SimMetrics::from_counts(seed, &merged)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_per_seed() {
        let cfg = SystemConfig::with_load(20, 0.1, 0.6, 30).unwrap();
        let a = simulate(&cfg, 7, 2000, 100).unwrap();
        let b = simulate(&cfg, 7, 2000, 100).unwrap();
        assert_eq!(a, b);
        let c = simulate(&cfg, 8, 2000, 100).unwrap();
        assert_ne!(a.throughput, c.throughput);
    }

    #[test]
    fn histograms_and_batches() {
        let cfg = SystemConfig::with_load(10, 0.2, 0.8, 12).unwrap();
        let counts = simulate_counts(&cfg, 1, 0, 1000, 10).unwrap();
        assert_eq!(counts.batches.len(), NUM_BATCHES.min(1000));
        assert_eq!(counts.total().cps, 1000);
        assert_eq!(counts.cp_len.iter().sum::<u64>(), 1000);
        let m = SimMetrics::from_counts(1, &counts).unwrap();
        for h in [&m.pi_d, &m.pi_n, &m.pi_m] {
            assert!((h.sum() - 1.0).abs() < 1e-12);
        }
        assert!(m.throughput_ci > 0.0);
    }

    #[test]
    fn uneven_batches_keep_every_cp() {
        let cfg = SystemConfig::new(3, 0.5, 0.3, 4).unwrap();
        let counts = simulate_counts(&cfg, 2, 0, 100, 0).unwrap();
        assert_eq!(counts.total().cps, 100);
        assert!(counts.batches.len() <= NUM_BATCHES);
    }

    #[test]
    fn saturated_single_user() {
        // γ = 1: the user is active in every CP and decoded in one slot, so
        // every peak is exactly 2 after the first delivery.
        let cfg = SystemConfig::new(1, 0.3, 1.0, 5).unwrap();
        let m = simulate(&cfg, 3, 500, 5).unwrap();
        assert_eq!(m.throughput, 1.0);
        assert_eq!(m.peak_aoi, 2.0);
        assert_eq!(m.e_delta0, 1.0);
        assert_eq!(m.peak_samples, 500);
    }

    #[test]
    fn final_slot_generation_activates_next_cp() {
        // With one user every CP lasts one slot, so the only slot in which a
        // packet for the next CP can appear is the final one.
        let cfg = SystemConfig::new(1, 0.3, 0.5, 10).unwrap();
        let m = simulate(&cfg, 9, 40_000, 10).unwrap();
        assert!((m.mean_active - 0.5).abs() < 0.015, "{}", m.mean_active);
    }

    #[test]
    fn silent_population() {
        let cfg = SystemConfig::new(5, 0.3, 0.0, 5).unwrap();
        let m = simulate(&cfg, 3, 100, 0).unwrap();
        assert_eq!((m.throughput, m.peak_samples, m.mean_cp_len), (0.0, 0, 1.0));
        assert!(m.peak_aoi.is_nan());
    }

    #[test]
    fn replications_merge_independent_of_scheduling() {
        let cfg = SystemConfig::with_load(8, 0.2, 0.5, 10).unwrap();
        let a = simulate_replicated(&cfg, 5, 4, 500, 10).unwrap();
        let b = simulate_replicated(&cfg, 5, 4, 500, 10).unwrap();
        // Debug formatting so that NaN fields compare equal.
        assert_eq!(format!("{a:?}"), format!("{b:?}"));
        assert_eq!(a.cp_count, 2000);
        let first = simulate(&cfg, 5, 500, 10).unwrap();
        assert_ne!(a.throughput, first.throughput);
    }

    #[test]
    fn half_width_matches_t_table() {
        // t_{29, 0.975} = 2.04523
        let xs: Vec<f64> = (0..30).map(|i| if i % 2 == 0 { 1.0 } else { -1.0 }).collect();
        let sd = (30.0f64 / 29.0).sqrt();
        assert!((half_width(&xs) - 2.045_23 * sd / 30f64.sqrt()).abs() < 1e-4);
        assert!(half_width(&[1.0]).is_nan());
    }

    #[test]
    fn rejects_empty_run() {
        let cfg = SystemConfig::new(2, 0.3, 0.3, 4).unwrap();
        assert!(simulate(&cfg, 1, 0, 10).is_err());
    }
}
