//! Conditional CP statistics for a handful of active users: how long a CP
//! lasts and how many users it resolves, computed from the SIC state machine.
//!
//!     cargo run --release --example sic_tables -- [users] [q] [dmax]

use frameless_aoi::sic::{self, DecoderState, StateDistribution};
use frameless_aoi::tables::ConditionalTables;
use frameless_aoi::SystemConfig;

fn main() -> frameless_aoi::Result<()> {
    let mut args = std::env::args().skip(1);
    let users: usize = args.next().map_or(Ok(4), |a| a.parse()).expect("users");
    let q: f64 = args.next().map_or(Ok(0.3), |a| a.parse()).expect("q");
    let dmax: usize = args.next().map_or(Ok(6), |a| a.parse()).expect("dmax");
    let cfg = SystemConfig::new(users, q, 0.1, dmax)?;

    // One decoding step by hand: three users, one collided slot, one singleton.
    let state = DecoderState {
        unresolved: 3,
        collided: 1,
        singletons: 1,
    };
    println!("h_3 for n = 3, q = {q}: {:.6}", sic::h_unresolved(3, 3, q)?);
    println!("successors of {state}:");
    for (s, p) in sic::resolve_one_user(state, 3, q)?.iter() {
        println!("  {s}  {p:.6}");
    }
    let stalled = sic::decode_until_stall(&StateDistribution::point(state), 3, q)?;
    println!("after decoding stalls: {} states, mass {:.15}\n", stalled.len(), stalled.total());

    let t = ConditionalTables::build(&cfg)?;
    println!("P(D = d | N = n) for {cfg}");
    print!("{:>4}", "n\\d");
    for d in 1..=dmax {
        print!("{d:>10}");
    }
    println!();
    for n in 0..=users {
        print!("{n:>4}");
        for d in 1..=dmax {
            print!("{:>10.6}", t.p_cp_len(d, n));
        }
        println!();
    }

    println!("\nP(M = m | N = n) and beta(m, n) (decoded count of CPs cut at d_max)");
    for n in 0..=users {
        let pm: Vec<String> = (0..=n).map(|m| format!("{:.4}", t.p_decoded(m, n))).collect();
        let beta: Vec<String> = (0..=n).map(|m| format!("{:.4}", t.beta(m, n))).collect();
        println!("n = {n}: P(M) = [{}]  beta = [{}]", pm.join(", "), beta.join(", "));
    }
    println!("\nmass dropped by pruning: {:e}", t.pruned_mass());
    Ok(())
}
