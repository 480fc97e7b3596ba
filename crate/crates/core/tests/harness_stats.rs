use std::f64::consts::PI;

use cachecast::harness::{run_experiment, summarize, Diagnostics, ExperimentConfig, ResultRecord, Scheme, SweepParam};
use cachecast::scenario::{generate_layout, LayoutParams};

#[test]
fn ppp_counts_match_density_times_area() {
    let params = LayoutParams::default();
    let n = 200;
    let (mut helpers, mut users) = (0usize, 0usize);
    for seed in 0..n {
        let l = generate_layout(&params, seed);
        helpers += l.helpers.len();
        users += l.users.len();
    }
    let area = PI * (params.region_radius_m / 1000.0).powi(2);
    let mean_h = helpers as f64 / n as f64;
    let mean_u = users as f64 / n as f64;
    assert!((mean_h / (params.lambda_helpers * area) - 1.0).abs() < 0.05, "{mean_h}");
    assert!((mean_u / (params.lambda_users * area) - 1.0).abs() < 0.05, "{mean_u}");
}

#[test]
fn summary_matches_hand_computation() {
    // Ten values with a hand-computed mean 5.5 and sample variance 55/6.
    let records: Vec<ResultRecord> = (1..=10)
        .map(|i| ResultRecord {
            scheme: Scheme::Avalanche,
            sweep_param: SweepParam::Groups,
            sweep_value: 4.0,
            seed: i,
            t_seconds: Some(i as f64),
            t_normalized: Some(i as f64),
            flag: String::new(),
            diagnostics: Diagnostics::default(),
        })
        .collect();
    let s = &summarize(&records)[0];
    assert_eq!(s.count, 10);
    assert!((s.mean - 5.5).abs() < 1e-12);
    assert!((s.stderr - (55.0 / 6.0 / 10.0f64).sqrt()).abs() < 1e-12);
}

#[test]
fn schemes_share_layouts_and_assignments() {
    let cfg = ExperimentConfig::from_toml(
        r#"
model = "collision"
schemes = ["reuse-exact", "reuse-dsatur+greedy", "reuse-random"]
instances = 12
base_seed = 40
mu = 0.5
groups = 2

[layout]
region_radius_m = 300.0
lambda_users_per_km2 = 40.0
"#,
    )
    .unwrap();
    let rows = run_experiment(&cfg).unwrap();
    assert_eq!(rows.len(), 36);
    for i in 0..12 {
        let (exact, greedy, random) = (&rows[i], &rows[12 + i], &rows[24 + i]);
        assert_eq!((exact.seed, greedy.seed, random.seed), (40 + i as u64, 40 + i as u64, 40 + i as u64));
        assert_eq!(exact.diagnostics.users, greedy.diagnostics.users);
        assert_eq!(greedy.diagnostics.users, random.diagnostics.users);
        if exact.flag.is_empty() {
            assert!(exact.t_seconds.unwrap() <= greedy.t_seconds.unwrap() + 1e-12);
        }
    }
}
