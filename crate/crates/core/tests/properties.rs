use frameless_aoi::markov::analyze_stationary;
use frameless_aoi::tables::ConditionalTables;
use frameless_aoi::{analyze, SystemConfig};
use proptest::prelude::*;

fn unit_sum(v: &[f64]) -> bool {
    (v.iter().sum::<f64>() - 1.0).abs() < 1e-10
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn table_columns_are_distributions(users in 1usize..=12, q in 0.01f64..=1.0, dmax in 1usize..=15) {
        let cfg = SystemConfig::new(users, q, 0.05, dmax).unwrap();
        let t = ConditionalTables::build(&cfg).unwrap();
        for n in 0..=users {
            prop_assert!(unit_sum(t.cp_len_column(n).as_slice()));
            prop_assert!(unit_sum(t.decoded_column(n).as_slice()));
            // Slot 1 alone resolves at most one user.
            if n <= 1 {
                prop_assert!((t.p_cp_len(1, n) - 1.0).abs() < 1e-15);
            } else if dmax > 1 {
                prop_assert!(t.p_cp_len(1, n) == 0.0);
            }
            let beta = t.beta_column(n);
            let s: f64 = beta.iter().sum();
            prop_assert!(s.abs() < 1e-12 || (s - 1.0).abs() < 1e-10, "beta sum {s}");
            if n >= 2 {
                // n - 1 decoded is impossible: the last user would be alone in slot 1.
                prop_assert!(t.p_decoded(n - 1, n) < 1e-15);
            }
        }
    }

    #[test]
    fn throughput_respects_load_and_slot_limits(users in 1usize..=12, q in 0.02f64..=1.0, load in 0.05f64..=1.5, dmax in 1usize..=12) {
        let cfg = SystemConfig::with_load(users, q, load.min(users as f64), dmax).unwrap();
        let a = analyze(&cfg).unwrap();
        let st = &a.stationary;
        prop_assert!(st.residual < 1e-10);
        prop_assert!(unit_sum(st.pi_d.as_slice()) && unit_sum(st.pi_n.as_slice()) && unit_sum(st.pi_m.as_slice()));
        prop_assert!(st.throughput >= 0.0);
        prop_assert!(st.throughput <= cfg.load() + 1e-12, "S {} > load {}", st.throughput, cfg.load());
        prop_assert!(st.throughput <= 1.0 + 1e-12);
        prop_assert!(st.mean_active <= users as f64 + 1e-12);
        let aoi = a.aoi.as_ref().unwrap();
        prop_assert!(aoi.residual < 1e-9);
        prop_assert!(unit_sum(aoi.delta0_pmf.as_slice()));
        prop_assert_eq!(aoi.peak_aoi, aoi.e_delta0 + aoi.e_y);
        prop_assert!(aoi.peak_aoi >= 2.0);
    }

    #[test]
    fn single_user_closed_form(gamma in 0.01f64..=1.0, q in 0.01f64..=1.0, dmax in 1usize..=6) {
        let a = analyze(&SystemConfig::new(1, q, gamma, dmax).unwrap()).unwrap();
        prop_assert!((a.throughput() - gamma).abs() < 1e-9);
        prop_assert!((a.peak_aoi() - (1.0 + 1.0 / gamma)).abs() < 1e-9 * (1.0 + 1.0 / gamma));
    }
}

#[test]
fn tables_do_not_depend_on_gamma() {
    let a = ConditionalTables::build(&SystemConfig::new(8, 0.2, 0.01, 10).unwrap()).unwrap();
    let b = ConditionalTables::build(&SystemConfig::new(8, 0.2, 0.9, 10).unwrap()).unwrap();
    for n in 0..=8 {
        assert_eq!(a.cp_len_column(n), b.cp_len_column(n));
        assert_eq!(a.beta_column(n), b.beta_column(n));
    }
}

#[test]
fn silent_system_stays_in_unit_cps() {
    let cfg = SystemConfig::new(5, 0.3, 0.0, 6).unwrap();
    let t = ConditionalTables::build(&cfg).unwrap();
    let st = analyze_stationary(&cfg, &t).unwrap();
    assert!((st.pi_d.as_slice()[0] - 1.0).abs() < 1e-12);
    assert_eq!(st.throughput, 0.0);
    assert!(analyze(&cfg).unwrap().aoi.is_none());
}
