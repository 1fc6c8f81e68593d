//! Maximum CP length trade-off: for each d_max the throughput-optimal q is
//! found and the resulting throughput and peak AoI are reported. Short CPs
//! favour freshness, longer ones throughput.
//!
//!     cargo run --release --example dmax_tradeoff -- [users] [load]

use frameless_aoi::optimize::{log_grid, sweep_dmax, Refinement};

fn main() -> frameless_aoi::Result<()> {
    let mut args = std::env::args().skip(1);
    let users: usize = args.next().map_or(Ok(30), |a| a.parse()).expect("users");
    let load: f64 = args.next().map_or(Ok(0.6), |a| a.parse()).expect("load");

    let dmaxs = [4, 6, 8, 10, 15, 20, 30, 40];
    let points = sweep_dmax(users, &[load], &dmaxs, &log_grid(0.01, 0.5, 16)?, Refinement::default())?;
    println!("U = {users}, γU = {load}");
    println!("{:>5} {:>9} {:>7} {:>9} {:>10}", "dmax", "q*", "how", "S", "peak AoI");
    for p in &points {
        let o = &p.optimum;
        println!(
            "{:>5} {:>9.5} {:>7} {:>9.5} {:>10.3}",
            p.dmax,
            o.q,
            o.method.as_str(),
            o.analysis.throughput(),
            o.analysis.peak_aoi()
        );
    }
    let best_s = points.iter().max_by(|a, b| a.optimum.analysis.throughput().total_cmp(&b.optimum.analysis.throughput()));
    let best_aoi = points.iter().min_by(|a, b| a.optimum.analysis.peak_aoi().total_cmp(&b.optimum.analysis.peak_aoi()));
    if let (Some(s), Some(a)) = (best_s, best_aoi) {
        println!("\nthroughput peaks at d_max = {}, peak AoI is lowest at d_max = {}", s.dmax, a.dmax);
    }
    Ok(())
}
