//! Throughput and average peak AoI as functions of the access probability,
//! with the grid argmax refined by golden-section search.
//!
//!     cargo run --release --example sweep_q -- [users] [dmax] [load] [points]

use frameless_aoi::optimize::{analyze_q_grid, log_grid, refine_q, Refinement};
use frameless_aoi::SystemConfig;

fn main() -> frameless_aoi::Result<()> {
    let mut args = std::env::args().skip(1);
    let users: usize = args.next().map_or(Ok(30), |a| a.parse()).expect("users");
    let dmax: usize = args.next().map_or(Ok(30), |a| a.parse()).expect("dmax");
    let load: f64 = args.next().map_or(Ok(0.6), |a| a.parse()).expect("load");
    let points: usize = args.next().map_or(Ok(20), |a| a.parse()).expect("points");

    let base = SystemConfig::with_load(users, 0.1, load, dmax)?;
    let grid = log_grid(0.005, 0.5, points)?;
    let coarse = analyze_q_grid(&base, &grid)?;
    println!("{:>10} {:>10} {:>12} {:>10}", "q", "S", "peak AoI", "E[N]");
    for (q, a) in &coarse {
        println!("{q:>10.5} {:>10.5} {:>12.3} {:>10.3}", a.throughput(), a.peak_aoi(), a.mean_active());
    }
    let best = refine_q(&base, &coarse, Refinement::default())?;
    println!(
        "\nq* = {:.5} ({}, {} extra evaluations): S = {:.5}, peak AoI = {:.3}",
        best.q,
        best.method.as_str(),
        best.evaluations,
        best.analysis.throughput(),
        best.analysis.peak_aoi()
    );
    Ok(())
}
