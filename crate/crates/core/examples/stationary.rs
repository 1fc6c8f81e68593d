//! Stationary laws of the CP length, active users and decoded users for a
//! few access probabilities, with the mean number of active users per CP.
//!
//!     cargo run --release --example stationary -- [users] [dmax] [load]

use frameless_aoi::{analyze, SystemConfig};

fn main() -> frameless_aoi::Result<()> {
    let mut args = std::env::args().skip(1);
    let users: usize = args.next().map_or(Ok(100), |a| a.parse()).expect("users");
    let dmax: usize = args.next().map_or(Ok(100), |a| a.parse()).expect("dmax");
    let load: f64 = args.next().map_or(Ok(0.6), |a| a.parse()).expect("load");

    for q in [0.01, 0.05, 0.1, 0.15] {
        let cfg = SystemConfig::with_load(users, q, load, dmax)?;
        let a = analyze(&cfg)?;
        let st = &a.stationary;
        let tail = |v: &[f64], from: usize| v[from..].iter().sum::<f64>();
        let pd = st.pi_d.as_slice();
        println!("{cfg}");
        println!(
            "  S = {:.5}  E[N] = {:.4}  E[D] = {:.3}  residual {:.1e}",
            st.throughput, st.mean_active, st.mean_cp_len, st.residual
        );
        println!(
            "  pi_D(d_max) = {:.4}  P(D <= d_max/2) = {:.4}",
            pd[dmax - 1],
            1.0 - tail(pd, dmax / 2)
        );
        println!(
            "  most likely N = {}  most likely M = {}  pi_M(0) = {:.4}\n",
            st.pi_n.argmax(),
            st.pi_m.argmax(),
            st.pi_m.as_slice()[0]
        );
    }
    Ok(())
}
