//! Slot-level simulation against the analysis, with 95% batch-means
//! confidence intervals.
//!
//!     cargo run --release --example simulate -- [users] [dmax] [cps] [seed]

use frameless_aoi::sim::simulate;
use frameless_aoi::{analyze, SystemConfig};

fn main() -> frameless_aoi::Result<()> {
    let mut args = std::env::args().skip(1);
    let users: usize = args.next().map_or(Ok(30), |a| a.parse()).expect("users");
    let dmax: usize = args.next().map_or(Ok(30), |a| a.parse()).expect("dmax");
    let cps: u64 = args.next().map_or(Ok(100_000), |a| a.parse()).expect("cps");
    let seed: u64 = args.next().map_or(Ok(1), |a| a.parse()).expect("seed");

    for q in [0.05, 0.1, 0.2] {
        let cfg = SystemConfig::with_load(users, q, 0.6, dmax)?;
        let a = analyze(&cfg)?;
        let m = simulate(&cfg, seed, cps, 1_000)?;
        println!("{cfg}");
        println!(
            "  S        analysis {:.5}   sim {:.5} ± {:.5}",
            a.throughput(),
            m.throughput,
            m.throughput_ci
        );
        println!(
            "  peak AoI analysis {:.3}   sim {:.3} ± {:.3}  ({} peaks)",
            a.peak_aoi(),
            m.peak_aoi,
            m.peak_aoi_ci,
            m.peak_samples
        );
        println!(
            "  E[N]     analysis {:.3}   sim {:.3}",
            a.mean_active(),
            m.mean_active
        );
        println!("  TV(pi_D) = {:.4}\n", m.pi_d.total_variation(&a.stationary.pi_d));
    }
    Ok(())
}
