//! Exit-gate checks. Prints one PASS/FAIL line per criterion, then fails if
//! any criterion failed. Run with `--nocapture` to see the lines.

mod common;

use std::time::{Duration, Instant};

use cachecast::collision::{
    associate_exact, associate_greedy, associate_random, avalanche_run, color_dsatur, color_exact, replay_trace,
    reuse_outcome, EventKind, ScheduleTrace,
};
use cachecast::combin::{binomial, subsets, Subset};
use cachecast::harness::{run_experiment, ExperimentConfig, ResultRecord, Scheme};
use cachecast::model::{assign_caches, man_load, CacheAssignment, CacheScheme};
use cachecast::multiround::{build_delivery_array, column_slots, multiround_load};
use cachecast::scenario::fixtures::{collision_example, COLLISION_EXAMPLE_GROUPS};
use cachecast::scenario::{build_collision_graph, build_helper_conflict_graph, CollisionGraph, TopologicalGraph};
use cachecast::topo::{solve_centralized_routing, RoutingOptions};
use common::{ambiguous_users, covered_collision_instance, deliver_and_decode, layout_params, random_codec_case, random_plan};

/// Relative tolerance of the single-helper routing check.
const MAN_REL_TOL: f64 = 1e-5;
/// Bisection relative tolerance used by the routing solvers.
const LP_REL_TOL: f64 = 1e-6;
/// Dominance slack: twice the LP tolerance.
const DOMINANCE_REL_TOL: f64 = 2.0 * LP_REL_TOL;

struct Outcome {
    pass: bool,
    detail: String,
    /// Avalanche runs to replay for the safety criterion.
    traces: Vec<Replayable>,
}

struct Replayable {
    trace: ScheduleTrace,
    cg: CollisionGraph,
    assignment: CacheAssignment,
    scheme: CacheScheme,
}

impl Outcome {
    fn new(pass: bool, detail: String) -> Self {
        Self {
            pass,
            detail,
            traces: Vec::new(),
        }
    }
}

fn example_inputs() -> (CollisionGraph, CacheAssignment, CacheScheme) {
    let cg = build_collision_graph(&collision_example()).unwrap();
    let a = CacheAssignment::from_groups(COLLISION_EXAMPLE_GROUPS.to_vec(), 3).unwrap();
    (cg, a, CacheScheme::new(3, 1).unwrap())
}

fn example_reuse() -> Outcome {
    let (cg, a, scheme) = example_inputs();
    let conflicts = build_helper_conflict_graph(&cg);
    let coloring = color_exact(&conflicts).unwrap();
    let r = coloring.colors;
    let greedy = associate_greedy(&cg, &a, &scheme).unwrap();
    // The worked example numbers users 1..6 and helpers 1..4; ids here are 0-based.
    let user6 = greedy.helper_of[5];
    let out = reuse_outcome(&cg, &a, &scheme, coloring, greedy.clone(), 1.0);
    let want = 3.0 / cg.c_access;
    let pass = r == 3 && user6 == 3 && greedy.helper_of == [0, 1, 1, 3, 2, 3] && out.t_seconds == want;
    Outcome::new(
        pass,
        format!("r={r}, greedy helper_of={:?}, T={} (want {want})", greedy.helper_of, out.t_seconds),
    )
}

fn column_done(trace: &ScheduleTrace, helper: usize) -> Vec<(u64, Vec<usize>)> {
    trace
        .events
        .iter()
        .filter(|e| e.helper == helper && e.event == EventKind::ColumnDone)
        .map(|e| (e.t_slots, e.users.clone()))
        .collect()
}

fn example_avalanche() -> Outcome {
    let (cg, a, scheme) = example_inputs();
    let out = avalanche_run(&cg, &a, &scheme, 1.0).unwrap();
    let trace = &out.trace;
    let h1 = column_done(trace, 0);
    let h2 = column_done(trace, 1);
    let h3 = column_done(trace, 2);
    let h4 = column_done(trace, 3);
    let joint_start = trace
        .events
        .iter()
        .find(|e| e.helper == 3 && e.event == EventKind::Serve)
        .map(|e| (e.t_slots, e.users.clone()));
    let want = 3.0 / cg.c_access;
    let pass = out.slots == 9
        && out.t_seconds == want
        && h1.first().map(|c| c.0) == Some(2)
        && h2.first().map(|c| c.0) == Some(4)
        && h3.first().map(|c| c.0) == Some(4)
        && h4 == [(7, vec![3, 5])]
        && joint_start == Some((4, vec![3, 5]));
    let mut o = Outcome::new(
        pass,
        format!(
            "D={} T={} (want 9, {want}); done h1={h1:?} h2={h2:?} h3={h3:?} h4={h4:?}",
            out.slots, out.t_seconds
        ),
    );
    o.traces.push(Replayable {
        trace: out.trace,
        cg,
        assignment: a,
        scheme,
    });
    o
}

fn man_reduction() -> Outcome {
    let mut worst: f64 = 0.0;
    let mut cases = 0;
    for k in 1..=8 {
        for t in 0..=k {
            let g = TopologicalGraph::single_helper(k, 1.0, k as f64);
            let sol = solve_centralized_routing(&g, t, 1.0, &RoutingOptions::default()).unwrap();
            let want = man_load(k, t);
            let err = if want == 0.0 { sol.t_total.abs() } else { (sol.t_total - want).abs() / want };
            worst = worst.max(err);
            cases += 1;
        }
    }
    Outcome::new(worst <= MAN_REL_TOL, format!("{cases} (K, t) pairs, worst relative error {worst:.2e} (tol {MAN_REL_TOL:.0e})"))
}

fn codec_round_trip() -> Outcome {
    let mut failures = Vec::new();
    let mut messages = 0;
    for seed in 0..200 {
        let case = random_codec_case(seed, 8, 4, 4, 4096);
        match deliver_and_decode(&case, &random_plan(&case, seed ^ 0xabcdef)) {
            Ok(m) => messages += m,
            Err(e) => failures.push(format!("seed {seed}: {e}")),
        }
    }
    Outcome::new(
        failures.is_empty(),
        format!("200 instances, {messages} XOR messages, failures {:?}", failures.iter().take(3).collect::<Vec<_>>()),
    )
}

/// Counts, column by column, the (t'+1)-subsets of groups that meet the
/// groups present in the column.
fn brute_column_slots(occupancy: &[usize], t: usize) -> u64 {
    let l = occupancy.len();
    let cols = occupancy.iter().copied().max().unwrap_or(0);
    let candidates = subsets(l, t + 1);
    (0..cols)
        .map(|j| {
            let present = Subset::from_elems((0..l).filter(|&g| occupancy[g] > j));
            candidates.iter().filter(|s| s.intersects(present)).count() as u64
        })
        .sum()
}

fn multiround_oracle() -> Outcome {
    let mut checked = 0u64;
    let mut mismatches = Vec::new();
    for l in 1..=5usize {
        let total = 7usize.pow(l as u32);
        for code in 0..total {
            let occ: Vec<usize> = (0..l).map(|i| code / 7usize.pow(i as u32) % 7).collect();
            let groups: Vec<Vec<usize>> = {
                let mut next = 0;
                occ.iter()
                    .map(|&n| {
                        let row = (next..next + n).collect();
                        next += n;
                        row
                    })
                    .collect()
            };
            let array = build_delivery_array(&groups);
            for t in 0..=l {
                let formula = multiround_load(&occ, t) * binomial(l, t) as f64;
                let simulated = brute_column_slots(&occ, t);
                let array_slots: u64 = column_slots(&array, t).iter().sum();
                if formula != simulated as f64 || array_slots != simulated {
                    mismatches.push((occ.clone(), t, formula, simulated, array_slots));
                }
                checked += 1;
            }
        }
    }
    Outcome::new(
        mismatches.is_empty(),
        format!("{checked} (occupancy, t') cases, mismatches {:?}", mismatches.iter().take(3).collect::<Vec<_>>()),
    )
}

fn paired(records: &[ResultRecord], a: Scheme, b: Scheme) -> Vec<(&ResultRecord, &ResultRecord)> {
    let xs: Vec<&ResultRecord> = records.iter().filter(|r| r.scheme == a).collect();
    let ys: Vec<&ResultRecord> = records.iter().filter(|r| r.scheme == b).collect();
    xs.into_iter()
        .zip(ys)
        .inspect(|(x, y)| assert_eq!((x.seed, x.sweep_value), (y.seed, y.sweep_value)))
        .collect()
}

fn dominance() -> Outcome {
    let cfg = ExperimentConfig::from_toml(
        r#"
model = "topological"
schemes = ["multiround", "new-lp"]
instances = 50
base_seed = 1000
mu = 0.2
groups = 5

[sweep]
param = "L"
values = [5, 10]

[layout]
lambda_helpers_per_km2 = 7.0
lambda_users_per_km2 = 140.0
region_radius_m = 1000.0
a_sig_m = 220.0
"#,
    )
    .unwrap();
    let records = run_experiment(&cfg).unwrap();
    let flagged = records.iter().filter(|r| !r.flag.is_empty()).count();
    let pairs = paired(&records, Scheme::NewLp, Scheme::Multiround);
    let violations: Vec<_> = pairs
        .iter()
        .filter(|(n, m)| n.t_seconds.unwrap_or(f64::INFINITY) > m.t_seconds.unwrap_or(0.0) * (1.0 + DOMINANCE_REL_TOL))
        .map(|(n, m)| (n.sweep_value, n.seed, n.t_seconds, m.t_seconds))
        .collect();
    let ratio: f64 =
        pairs.iter().map(|(n, m)| n.t_seconds.unwrap_or(0.0) / m.t_seconds.unwrap_or(1.0)).sum::<f64>() / pairs.len() as f64;
    Outcome::new(
        flagged == 0 && violations.is_empty() && pairs.len() == 100,
        format!(
            "{} paired instances (L=5,10), flagged {flagged}, violations {violations:?}, mean new/multiround {ratio:.3}",
            pairs.len()
        ),
    )
}

fn association_ordering() -> Outcome {
    let params = layout_params(400.0, 7.0, 60.0);
    let mut instances = 0;
    let mut violations = Vec::new();
    let (mut sum_greedy, mut sum_random, mut sum_exact) = (0.0, 0.0, 0.0);
    for (groups, t) in [(2usize, 1usize), (4, 2)] {
        let scheme = CacheScheme::new(groups, t).unwrap();
        let mut taken = 0;
        let mut seed = 0u64;
        while taken < 60 {
            seed += 1;
            let (_, cg) = covered_collision_instance(&params, seed);
            if cg.users == 0 || ambiguous_users(&cg) > 12 {
                continue;
            }
            let a = assign_caches(cg.users, groups, seed ^ 0x5eed);
            let coloring = color_dsatur(&build_helper_conflict_graph(&cg));
            let time = |assoc| reuse_outcome(&cg, &a, &scheme, coloring.clone(), assoc, 1.0).t_seconds;
            let exact = time(associate_exact(&cg, &a, &scheme).unwrap());
            let greedy = time(associate_greedy(&cg, &a, &scheme).unwrap());
            let random = time(associate_random(&cg, seed ^ 0xa550c).unwrap());
            if exact > greedy {
                violations.push((groups, seed, exact, greedy));
            }
            sum_exact += exact;
            sum_greedy += greedy;
            sum_random += random;
            taken += 1;
            instances += 1;
        }
    }
    let n = instances as f64;
    let (me, mg, mr) = (sum_exact / n, sum_greedy / n, sum_random / n);
    Outcome::new(
        instances >= 100 && violations.is_empty() && mg <= mr,
        format!("{instances} instances (L=2,4), mean exact {me:.3} <= greedy {mg:.3} <= random {mr:.3}, per-instance violations {violations:?}"),
    )
}

fn avalanche_vs_reuse() -> Outcome {
    let params = layout_params(500.0, 7.0, 140.0);
    let mut traces = Vec::new();
    let mut lines = Vec::new();
    let mut pass = true;
    for groups in [5usize, 10] {
        let scheme = CacheScheme::new(groups, groups / 5).unwrap();
        let (mut sum_av, mut sum_reuse) = (0.0, 0.0);
        let n = 100;
        for seed in 0..n {
            let (_, cg) = covered_collision_instance(&params, 5000 + seed);
            let a = assign_caches(cg.users, groups, seed);
            let av = avalanche_run(&cg, &a, &scheme, 1.0).unwrap();
            let coloring = color_dsatur(&build_helper_conflict_graph(&cg));
            let assoc = associate_greedy(&cg, &a, &scheme).unwrap();
            sum_reuse += reuse_outcome(&cg, &a, &scheme, coloring, assoc, 1.0).t_seconds;
            sum_av += av.t_seconds;
            traces.push(Replayable {
                trace: av.trace,
                cg,
                assignment: a,
                scheme: scheme.clone(),
            });
        }
        let (ma, mr) = (sum_av / n as f64, sum_reuse / n as f64);
        pass &= ma <= mr;
        lines.push(format!("L={groups}: mean avalanche {ma:.3} vs reuse {mr:.3}"));
    }
    let mut o = Outcome::new(pass, format!("100 instances per L, R=0.5 km; {}", lines.join("; ")));
    o.traces = traces;
    o
}

fn safety_replay(runs: &[Replayable]) -> Outcome {
    let mut bad = Vec::new();
    for (i, r) in runs.iter().enumerate() {
        let report = replay_trace(&r.trace, &r.cg, &r.assignment, &r.scheme);
        if !report.is_clean() {
            bad.push((i, report.collisions.len(), report.completeness.len()));
        }
    }
    Outcome::new(
        bad.is_empty() && !runs.is_empty(),
        format!("{} traces replayed, violating traces {bad:?}", runs.len()),
    )
}

fn timed(f: impl FnOnce() -> Outcome) -> (Outcome, Duration) {
    let start = Instant::now();
    let o = f();
    (o, start.elapsed())
}

#[test]
fn acceptance() {
    let mut lines = Vec::new();
    let mut all = true;
    let mut record = |id: usize, name: &str, (o, took): (Outcome, Duration), limit: Duration| {
        let pass = o.pass && took <= limit;
        all &= pass;
        let line = format!(
            "criterion {id} {} {name}: {} [{:.2?} of {:?}]",
            if pass { "PASS" } else { "FAIL" },
            o.detail,
            took,
            limit
        );
        println!("{line}");
        lines.push(line);
        o.traces
    };
    let secs = Duration::from_secs;
    let mut replay = Vec::new();
    record(1, "example reuse", timed(example_reuse), secs(1));
    replay.extend(record(2, "example avalanche", timed(example_avalanche), secs(1)));
    record(3, "single-helper routing", timed(man_reduction), secs(30));
    record(4, "codec round trip", timed(codec_round_trip), secs(60));
    record(5, "multiround oracle", timed(multiround_oracle), secs(10));
    record(6, "new-lp dominance", timed(dominance), secs(600));
    record(7, "association ordering", timed(association_ordering), secs(600));
    replay.extend(record(8, "avalanche vs reuse", timed(avalanche_vs_reuse), secs(900)));
    record(9, "safety replay", timed(|| safety_replay(&replay)), secs(60));
    assert!(all, "failed criteria:\n{}", lines.iter().filter(|l| l.contains(" FAIL ")).cloned().collect::<Vec<_>>().join("\n"));
}
