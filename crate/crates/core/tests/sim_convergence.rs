use frameless_aoi::sim::{simulate, simulate_replicated};
use frameless_aoi::{analyze, SystemConfig};

#[test]
fn empirical_laws_converge_at_reference_scale() {
    for q in [0.05, 0.1] {
        let cfg = SystemConfig::with_load(100, q, 0.6, 100).unwrap();
        let a = analyze(&cfg).unwrap();
        let m = simulate(&cfg, 7, 1_000_000, 1_000).unwrap();
        let st = &a.stationary;
        for (name, emp, exact) in [("pi_D", &m.pi_d, &st.pi_d), ("pi_N", &m.pi_n, &st.pi_n), ("pi_M", &m.pi_m, &st.pi_m)] {
            let tv = emp.total_variation(exact);
            assert!(tv < 0.01, "q={q}: TV({name}) = {tv}");
        }
    }
}

#[test]
fn small_system_matches_analysis_within_four_se() {
    for (users, q, gamma, dmax) in [(3, 0.3, 0.2, 4), (2, 0.5, 0.4, 3), (3, 0.7, 0.1, 4)] {
        let cfg = SystemConfig::new(users, q, gamma, dmax).unwrap();
        let a = analyze(&cfg).unwrap();
        let m = simulate(&cfg, 3, 1_000_000, 100).unwrap();
        let z_s = (m.throughput - a.throughput()) / m.throughput_se;
        let z_a = (m.peak_aoi - a.peak_aoi()) / m.peak_aoi_se;
        assert!(z_s.abs() < 4.0, "{cfg}: throughput z = {z_s}");
        assert!(z_a.abs() < 4.0, "{cfg}: peak AoI z = {z_a}");
        assert!(m.pi_d.total_variation(&a.stationary.pi_d) < 0.005);
    }
}

#[test]
fn replications_are_reproducible_and_pooled() {
    let cfg = SystemConfig::with_load(10, 0.2, 0.5, 8).unwrap();
    let a = simulate_replicated(&cfg, 11, 4, 20_000, 100).unwrap();
    let b = simulate_replicated(&cfg, 11, 4, 20_000, 100).unwrap();
    assert_eq!(format!("{a:?}"), format!("{b:?}"));
    assert_eq!(a.cp_count, 80_000);
    let exact = analyze(&cfg).unwrap();
    assert!((a.throughput - exact.throughput()).abs() < 4.0 * a.throughput_se);
}
