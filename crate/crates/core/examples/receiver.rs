//! Slot-by-slot walk through a contention period with hand-picked
//! transmission patterns, showing when the receiver decodes each user and
//! where the CP ends.
//!
//!     cargo run --example receiver

use frameless_aoi::sim::cp::{run_receiver, TxPattern};

fn show(title: &str, pattern: &TxPattern, dmax: usize) {
    println!("{title}");
    for t in 1..=pattern.len() {
        let users: Vec<String> = pattern.slot(t).iter().map(|u| format!("u{u}")).collect();
        println!("  slot {t}: {{{}}}", users.join(", "));
    }
    let out = run_receiver(pattern, dmax);
    for (u, t) in out.decoded.iter().zip(&out.decoded_at) {
        println!("  u{u} decoded after slot {t}");
    }
    println!(
        "  CP length {} (d_max = {dmax}){}\n",
        out.length,
        if out.truncated { ", cut off with users left" } else { "" }
    );
}

fn main() {
    // Two users collide in slot 1; a singleton in slot 2 unlocks the other
    // user from slot 1 by cancellation.
    show("two users, early singleton", &TxPattern::new(2, vec![vec![1], vec![0, 1]]), 4);

    // Three users: a chain of singletons and collisions resolved in cascade.
    show(
        "three users, cascade",
        &TxPattern::new(3, vec![vec![0, 1], vec![], vec![1], vec![2]]),
        6,
    );

    // Nobody transmits alone before d_max: the CP is truncated and the
    // active users carry their packets into the next CP.
    show("truncated CP", &TxPattern::new(3, vec![vec![0, 1], vec![1, 2]]), 3);

    // A single active user is decoded from slot 1 immediately.
    show("single user", &TxPattern::new(1, vec![]), 5);
}
