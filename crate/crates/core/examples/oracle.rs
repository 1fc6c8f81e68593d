//! Cross-checks the CP tables against exhaustive enumeration of every
//! transmission pattern for small systems.
//!
//!     cargo run --release --example oracle

use frameless_aoi::experiment::oracle_rows;
use frameless_aoi::SystemConfig;

fn main() -> frameless_aoi::Result<()> {
    let mut worst: f64 = 0.0;
    for q in [0.1, 0.3, 0.5, 0.9, 1.0] {
        for dmax in 1..=4 {
            let cfg = SystemConfig::new(3, q, 0.1, dmax)?;
            for row in oracle_rows(&cfg)? {
                let dev = row.dev_cp_len.max(row.dev_decoded).max(row.dev_beta);
                worst = worst.max(dev);
                println!(
                    "q = {q:<4} dmax = {dmax}  n = {}  max deviation {dev:.2e}  {}",
                    row.n,
                    if row.pass { "ok" } else { "MISMATCH" }
                );
            }
        }
    }
    println!("\nworst deviation {worst:.2e}");
    Ok(())
}
