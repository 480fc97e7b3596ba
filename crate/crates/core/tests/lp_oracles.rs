use cachecast::lp::{
    bisect_min_alpha, check_feasible, solve_binary_min, BinaryProgram, BisectionConfig, BranchOptions, Cmp,
    Feasibility, LinearProgram,
};
use proptest::prelude::*;

#[derive(Debug, Clone)]
struct Instance {
    n: usize,
    rows: Vec<(Vec<i32>, i32, u8)>,
    objective: Vec<i32>,
}

fn instance() -> impl Strategy<Value = Instance> {
    (2usize..=12).prop_flat_map(|n| {
        let row = (prop::collection::vec(-3i32..=3, n), -4i32..=6, 0u8..3);
        (
            Just(n),
            prop::collection::vec(row, 1..=5),
            prop::collection::vec(-5i32..=5, n),
        )
            .prop_map(|(n, rows, objective)| Instance { n, rows, objective })
    })
}

fn cmp_of(tag: u8) -> Cmp {
    match tag {
        0 => Cmp::Le,
        1 => Cmp::Ge,
        _ => Cmp::Eq,
    }
}

fn brute_force(inst: &Instance) -> Option<i64> {
    (0u32..1 << inst.n)
        .filter(|mask| {
            inst.rows.iter().all(|(coef, rhs, tag)| {
                let lhs: i32 = (0..inst.n).filter(|i| mask >> i & 1 == 1).map(|i| coef[i]).sum();
                match cmp_of(*tag) {
                    Cmp::Le => lhs <= *rhs,
                    Cmp::Ge => lhs >= *rhs,
                    Cmp::Eq => lhs == *rhs,
                }
            })
        })
        .map(|mask| (0..inst.n).filter(|i| mask >> i & 1 == 1).map(|i| inst.objective[i] as i64).sum())
        .min()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn branch_and_bound_matches_enumeration(inst in instance()) {
        let mut p = BinaryProgram::new();
        let vars: Vec<_> = (0..inst.n).map(|i| p.add_binary(format!("b{i}"))).collect();
        for (coef, rhs, tag) in &inst.rows {
            let terms = vars.iter().zip(coef).filter(|(_, &c)| c != 0).map(|(&v, &c)| (v, c as f64)).collect();
            p.lp.add_constraint(terms, cmp_of(*tag), *rhs as f64);
        }
        p.lp.set_objective(vars.iter().zip(&inst.objective).map(|(&v, &c)| (v, c as f64)).collect());
        let opts = BranchOptions { integral_objective: true, ..BranchOptions::default() };
        let got = solve_binary_min(&p, &opts).unwrap();
        let want = brute_force(&inst);
        match (got, want) {
            (None, None) => {}
            (Some(s), Some(w)) => {
                prop_assert_eq!(s.objective.round() as i64, w);
                prop_assert!(p.lp.max_violation(&s.point) <= 1e-6);
            }
            (g, w) => prop_assert!(false, "solver {:?} vs enumeration {:?}", g.map(|s| s.objective), w),
        }
    }

    #[test]
    fn feasible_points_respect_slack(
        n in 1usize..6,
        seed_rows in prop::collection::vec((prop::collection::vec(0.0f64..3.0, 6), 0.5f64..10.0), 1..6),
    ) {
        // Packing rows with a lower bound on the total keep the program feasible or not at random.
        let mut lp = LinearProgram::new();
        let vars: Vec<_> = (0..n).map(|i| lp.add_nonneg(format!("x{i}"))).collect();
        for (coef, rhs) in &seed_rows {
            lp.add_constraint(vars.iter().map(|&v| (v, coef[v])).collect(), Cmp::Le, *rhs);
        }
        lp.add_constraint(vars.iter().map(|&v| (v, 1.0)).collect(), Cmp::Ge, 1.0);
        if let Feasibility::Feasible(x) = check_feasible(&lp).unwrap() {
            prop_assert!(lp.max_violation(&x) <= 1e-9);
        }
    }

    #[test]
    fn bisection_brackets_the_threshold(threshold in 0.01f64..100.0) {
        let cfg = BisectionConfig::new(200.0);
        let fam = |a: f64| Ok(if a >= threshold { Feasibility::Feasible(vec![]) } else { Feasibility::Infeasible });
        let r = bisect_min_alpha(fam, &cfg).unwrap();
        prop_assert!(r.alpha >= threshold);
        prop_assert!(r.alpha * (1.0 - cfg.rel_tolerance) <= r.lower);
        prop_assert!(r.lower < threshold);
    }
}
