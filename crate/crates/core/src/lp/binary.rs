use microlp::Solution;

use super::{extract, outcome_solution, solver_error, LinearProgram};
use crate::error::{Error, Result};

const INTEGRALITY_TOL: f64 = 1e-6;

/// A linear program in which the listed variables must take values 0 or 1.
#[derive(Clone, Debug, Default)]
pub struct BinaryProgram {
    pub lp: LinearProgram,
    pub binaries: Vec<usize>,
}

impl BinaryProgram {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_binary(&mut self, name: impl Into<String>) -> usize {
        let v = self.lp.add_var(name, 0.0, 1.0);
        self.binaries.push(v);
        v
    }
}

#[derive(Clone, Debug)]
pub struct BranchOptions {
    pub node_budget: usize,
    /// The objective takes integer values at every integral point, so a
    /// node can be pruned once the ceiling of its bound reaches the incumbent.
    pub integral_objective: bool,
    /// Known feasible objective value, e.g. from a heuristic.
    pub incumbent: Option<f64>,
}

impl Default for BranchOptions {
    fn default() -> Self {
        Self {
            node_budget: 100_000,
            integral_objective: false,
            incumbent: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BinarySolution {
    pub point: Vec<f64>,
    pub objective: f64,
    pub nodes: usize,
}

/// Exact minimization by depth-first branch and bound over LP relaxations.
/// Returns `Ok(None)` when no integral point exists (or none beats the
/// supplied incumbent) and `ExactSolveAbandoned` when the node budget runs
/// out.
pub fn solve_binary_min(prog: &BinaryProgram, opts: &BranchOptions) -> Result<Option<BinarySolution>> {
    prog.lp.validate()?;
    for &b in &prog.binaries {
        if b >= prog.lp.vars() || prog.lp.lower[b] < 0.0 || prog.lp.upper[b] > 1.0 {
            return Err(Error::MalformedProgram(format!("binary variable {b} must have bounds within [0, 1]")));
        }
    }
    let (problem, vars) = prog.lp.to_problem();
    let mut nodes = 1;
    let root = match problem.solve() {
        Ok(o) => outcome_solution(o)?,
        Err(microlp::Error::Infeasible) => return Ok(None),
        Err(e) => return Err(solver_error(e)),
    };

    let mut best_value = opts.incumbent.unwrap_or(f64::INFINITY);
    let mut best: Option<Vec<f64>> = None;
    let prunable = |bound: f64, incumbent: f64| {
        if opts.integral_objective {
            (bound - INTEGRALITY_TOL).ceil() >= incumbent - INTEGRALITY_TOL
        } else {
            bound >= incumbent - 1e-9
        }
    };

    let mut stack: Vec<Solution> = vec![root];
    while let Some(sol) = stack.pop() {
        if prunable(sol.objective(), best_value) {
            continue;
        }
        let x = extract(&sol, &vars);
        let branch = prog
            .binaries
            .iter()
            .copied()
            .filter(|&b| (x[b] - x[b].round()).abs() > INTEGRALITY_TOL)
            .min_by(|&a, &b| (x[a] - 0.5).abs().total_cmp(&(x[b] - 0.5).abs()));
        let Some(b) = branch else {
            let mut point = x;
            for &b in &prog.binaries {
                point[b] = point[b].round();
            }
            let value = prog.lp.objective_value(&point);
            if value < best_value && prog.lp.max_violation(&point) <= INTEGRALITY_TOL {
                best_value = value;
                best = Some(point);
            }
            continue;
        };
        // Explore the side nearer the relaxation value first (pushed last).
        let order = if x[b] >= 0.5 { [0.0, 1.0] } else { [1.0, 0.0] };
        for val in order {
            if nodes >= opts.node_budget {
                return Err(Error::ExactSolveAbandoned { nodes });
            }
            nodes += 1;
            match sol.clone().fix_var(vars[b], val) {
                Ok(o) => stack.push(outcome_solution(o)?),
                Err(microlp::Error::Infeasible) => {}
                Err(e) => return Err(solver_error(e)),
            }
        }
    }
    Ok(best.map(|point| BinarySolution {
        objective: best_value,
        point,
        nodes,
    }))
}

#[cfg(test)]
mod tests {
    use super::super::Cmp;
    use super::*;

    fn coloring(vertices: usize, edges: &[(usize, usize)], palette: usize) -> BinaryProgram {
        let mut p = BinaryProgram::new();
        let y: Vec<_> = (0..palette).map(|c| p.add_binary(format!("y{c}"))).collect();
        let x: Vec<Vec<_>> = (0..vertices)
            .map(|i| (0..palette).map(|c| p.add_binary(format!("x{i}_{c}"))).collect())
            .collect();
        for row in &x {
            p.lp.add_constraint(row.iter().map(|&v| (v, 1.0)).collect(), Cmp::Eq, 1.0);
        }
        for &(i, j) in edges {
            for c in 0..palette {
                p.lp.add_constraint(vec![(x[i][c], 1.0), (x[j][c], 1.0), (y[c], -1.0)], Cmp::Le, 0.0);
            }
        }
        p.lp.set_objective(y.iter().map(|&v| (v, 1.0)).collect());
        p
    }

    fn opts() -> BranchOptions {
        BranchOptions {
            integral_objective: true,
            ..BranchOptions::default()
        }
    }

    #[test]
    fn triangle_needs_three() {
        let s = solve_binary_min(&coloring(3, &[(0, 1), (1, 2), (0, 2)], 3), &opts()).unwrap().unwrap();
        assert_eq!(s.objective, 3.0);
    }

    #[test]
    fn path_needs_two() {
        let s = solve_binary_min(&coloring(3, &[(0, 1), (1, 2)], 3), &opts()).unwrap().unwrap();
        assert_eq!(s.objective, 2.0);
    }

    #[test]
    fn infeasible_and_budget() {
        let p = coloring(3, &[(0, 1), (1, 2), (0, 2)], 2);
        assert_eq!(solve_binary_min(&p, &opts()).unwrap(), None);
        // The triangle relaxation is fractional at the root, so one node is not enough.
        let p = coloring(3, &[(0, 1), (1, 2), (0, 2)], 3);
        let tight = BranchOptions {
            node_budget: 1,
            ..opts()
        };
        assert!(matches!(solve_binary_min(&p, &tight), Err(Error::ExactSolveAbandoned { .. })));
    }
}
