//! Average peak age of information, split into the age at delivery and the
//! inter-update time. With one user the result reduces to `1 + 1/γ`.
//!
//!     cargo run --release --example peak_aoi -- [users] [q] [dmax] [load]

use frameless_aoi::aoi::{build_z_chain, delta0_pmf, expected_inter_update};
use frameless_aoi::tables::ConditionalTables;
use frameless_aoi::{analyze, SystemConfig};

fn main() -> frameless_aoi::Result<()> {
    let mut args = std::env::args().skip(1);
    let users: usize = args.next().map_or(Ok(30), |a| a.parse()).expect("users");
    let q: f64 = args.next().map_or(Ok(0.15), |a| a.parse()).expect("q");
    let dmax: usize = args.next().map_or(Ok(30), |a| a.parse()).expect("dmax");
    let load: f64 = args.next().map_or(Ok(0.6), |a| a.parse()).expect("load");

    let cfg = SystemConfig::with_load(users, q, load, dmax)?;
    let tables = ConditionalTables::build(&cfg)?;
    let z = build_z_chain(&cfg, &tables)?;
    let delta0 = delta0_pmf(&z)?;
    let y = expected_inter_update(&z, &delta0)?;
    println!("{cfg}");
    println!("  E[Δ0] = {:.4}   E[Y] = {:.4}   peak AoI = {:.4}", delta0.mean(1.0), y.mean, delta0.mean(1.0) + y.mean);
    println!("  first-step residual {:.1e}", y.residual);
    println!("  {:>4} {:>10} {:>12}", "d", "P(Δ0=d)", "E[Y|Δ0=d]");
    for d in (1..=dmax).step_by((dmax / 10).max(1)) {
        println!("  {d:>4} {:>10.5} {:>12.3}", delta0.as_slice()[d - 1], y.given_delta0[d - 1]);
    }

    println!("\nsingle user, always decoded:");
    for gamma in [0.1, 0.25, 0.5, 1.0] {
        let a = analyze(&SystemConfig::new(1, 0.5, gamma, 5)?)?;
        println!("  γ = {gamma:<5} S = {:.12}  peak AoI = {:.12}  (1 + 1/γ = {})", a.throughput(), a.peak_aoi(), 1.0 + 1.0 / gamma);
    }
    Ok(())
}
