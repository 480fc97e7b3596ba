//! Linear programs: a small modelling layer over the `microlp` simplex
//! solver, a bisection driver for min-max families, and a branch-and-bound
//! search for programs with binary variables.

mod binary;
mod bisect;

pub use binary::{solve_binary_min, BinaryProgram, BinarySolution, BranchOptions};
pub use bisect::{bisect_min_alpha, BisectionConfig, BisectionResult, ParametricLp};

use std::fmt::Write as _;

use microlp::{ComparisonOp, OptimizationDirection, Problem, SolveOutcome};

use crate::error::{Error, Result};

/// Absolute slack allowed on any constraint of a reported feasible point.
pub const FEASIBILITY_SLACK: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Cmp {
    Le,
    Ge,
    Eq,
}

impl Cmp {
    fn to_microlp(self) -> ComparisonOp {
        match self {
            Cmp::Le => ComparisonOp::Le,
            Cmp::Ge => ComparisonOp::Ge,
            Cmp::Eq => ComparisonOp::Eq,
        }
    }

    fn symbol(self) -> &'static str {
        match self {
            Cmp::Le => "<=",
            Cmp::Ge => ">=",
            Cmp::Eq => "=",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Constraint {
    pub terms: Vec<(usize, f64)>,
    pub cmp: Cmp,
    pub rhs: f64,
}

impl Constraint {
    pub fn lhs(&self, x: &[f64]) -> f64 {
        self.terms.iter().map(|&(v, c)| c * x[v]).sum()
    }

    pub fn violation(&self, x: &[f64]) -> f64 {
        let lhs = self.lhs(x);
        match self.cmp {
            Cmp::Le => (lhs - self.rhs).max(0.0),
            Cmp::Ge => (self.rhs - lhs).max(0.0),
            Cmp::Eq => (lhs - self.rhs).abs(),
        }
    }
}

/// Named real variables with bounds, linear constraints and an optional
/// objective (always minimized).
#[derive(Clone, Debug, Default, PartialEq)]
pub struct LinearProgram {
    pub names: Vec<String>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub constraints: Vec<Constraint>,
    pub objective: Option<Vec<(usize, f64)>>,
}

impl LinearProgram {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_var(&mut self, name: impl Into<String>, lower: f64, upper: f64) -> usize {
        self.names.push(name.into());
        self.lower.push(lower);
        self.upper.push(upper);
        self.names.len() - 1
    }

    pub fn add_nonneg(&mut self, name: impl Into<String>) -> usize {
        self.add_var(name, 0.0, f64::INFINITY)
    }

    pub fn add_constraint(&mut self, terms: Vec<(usize, f64)>, cmp: Cmp, rhs: f64) {
        self.constraints.push(Constraint { terms, cmp, rhs });
    }

    pub fn set_objective(&mut self, terms: Vec<(usize, f64)>) {
        self.objective = Some(terms);
    }

    pub fn vars(&self) -> usize {
        self.names.len()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.vars();
        for v in 0..n {
            if self.lower[v].is_nan() || self.upper[v].is_nan() || self.lower[v] > self.upper[v] {
                return Err(Error::MalformedProgram(format!(
                    "variable {} has bounds [{}, {}]",
                    self.names[v], self.lower[v], self.upper[v]
                )));
            }
            if self.lower[v] == f64::INFINITY || self.upper[v] == f64::NEG_INFINITY {
                return Err(Error::MalformedProgram(format!("variable {} has an empty domain", self.names[v])));
            }
        }
        let rows = self.constraints.iter().map(|c| (&c.terms, Some(c.rhs)));
        let obj = self.objective.iter().map(|t| (t, None));
        for (i, (terms, rhs)) in rows.chain(obj).enumerate() {
            if rhs.is_some_and(|r| !r.is_finite()) {
                return Err(Error::MalformedProgram(format!("row {i} has a non-finite right-hand side")));
            }
            let mut seen = std::collections::HashSet::new();
            for &(v, c) in terms.iter() {
                if v >= n {
                    return Err(Error::MalformedProgram(format!("row {i} references undeclared variable {v}")));
                }
                if !c.is_finite() {
                    return Err(Error::MalformedProgram(format!("row {i} has a non-finite coefficient")));
                }
                if !seen.insert(v) {
                    return Err(Error::MalformedProgram(format!("row {i} repeats variable {}", self.names[v])));
                }
            }
        }
        Ok(())
    }

    /// Largest bound or constraint violation of `x`.
    pub fn max_violation(&self, x: &[f64]) -> f64 {
        let bounds = (0..self.vars()).map(|v| (self.lower[v] - x[v]).max(x[v] - self.upper[v]).max(0.0));
        let rows = self.constraints.iter().map(|c| c.violation(x));
        bounds.chain(rows).fold(0.0, f64::max)
    }

    pub fn objective_value(&self, x: &[f64]) -> f64 {
        self.objective
            .as_ref()
            .map_or(0.0, |t| t.iter().map(|&(v, c)| c * x[v]).sum())
    }

    fn to_problem(&self) -> (Problem, Vec<microlp::Variable>) {
        let mut obj = vec![0.0; self.vars()];
        if let Some(terms) = &self.objective {
            for &(v, c) in terms {
                obj[v] += c;
            }
        }
        let mut p = Problem::new(OptimizationDirection::Minimize);
        let vars: Vec<_> = (0..self.vars())
            .map(|v| p.add_var(obj[v], (self.lower[v], self.upper[v])))
            .collect();
        for c in &self.constraints {
            let expr: Vec<_> = c.terms.iter().map(|&(v, coef)| (vars[v], coef)).collect();
            p.add_constraint(expr.as_slice(), c.cmp.to_microlp(), c.rhs);
        }
        (p, vars)
    }

    /// Renders the program in the CPLEX LP text format.
    pub fn to_lp_format(&self) -> String {
        let names: Vec<String> = self.names.iter().enumerate().map(|(i, n)| lp_name(n, i)).collect();
        let expr = |terms: &[(usize, f64)]| {
            if terms.is_empty() {
                return format!("0 {}", names.first().map_or("x0", String::as_str));
            }
            let mut s = String::new();
            for (i, &(v, c)) in terms.iter().enumerate() {
                let sign = if c < 0.0 { "-" } else if i > 0 { "+" } else { "" };
                let _ = write!(s, "{}{sign} {} {}", if i > 0 { " " } else { "" }, c.abs(), names[v]);
            }
            s.trim_start().to_string()
        };
        let mut out = String::from("Minimize\n obj: ");
        out += &expr(self.objective.as_deref().unwrap_or(&[]));
        out += "\nSubject To\n";
        for (i, c) in self.constraints.iter().enumerate() {
            // `+ 0.0` turns -0 into 0.
            let _ = writeln!(out, " c{i}: {} {} {}", expr(&c.terms), c.cmp.symbol(), c.rhs + 0.0);
        }
        out += "Bounds\n";
        for (v, name) in names.iter().enumerate() {
            let (lo, hi) = (self.lower[v], self.upper[v]);
            match (lo.is_finite(), hi.is_finite()) {
                (true, true) => { let _ = writeln!(out, " {lo} <= {name} <= {hi}"); }
                (true, false) => { let _ = writeln!(out, " {name} >= {lo}"); }
                (false, true) => { let _ = writeln!(out, " -inf <= {name} <= {hi}"); }
                (false, false) => { let _ = writeln!(out, " {name} free"); }
            }
        }
        out += "End\n";
        out
    }
}

fn lp_name(name: &str, index: usize) -> String {
    let clean: String = name
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '_' || c == '.' { c } else { '_' })
        .collect();
    match clean.chars().next() {
        Some(c) if c.is_ascii_alphabetic() || c == '_' => format!("{clean}_{index}"),
        _ => format!("x{index}_{clean}"),
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Feasibility {
    Feasible(Vec<f64>),
    Infeasible,
}

impl Feasibility {
    pub fn is_feasible(&self) -> bool {
        matches!(self, Feasibility::Feasible(_))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Optimum {
    pub value: f64,
    pub point: Vec<f64>,
}

fn extract(sol: &microlp::Solution, vars: &[microlp::Variable]) -> Vec<f64> {
    vars.iter().map(|&v| sol.var_value(v)).collect()
}

fn solver_error(e: microlp::Error) -> Error {
    match e {
        microlp::Error::Unbounded => Error::Unbounded,
        other => Error::Solver(other.to_string()),
    }
}

fn outcome_solution(outcome: SolveOutcome) -> Result<microlp::Solution> {
    match outcome {
        SolveOutcome::Solution(s) => Ok(s),
        SolveOutcome::Interrupted(_) => Err(Error::Solver("solve interrupted".into())),
    }
}

/// Checks a reported point against the program, rejecting numerically
/// inaccurate answers instead of passing them on.
fn verified(lp: &LinearProgram, x: Vec<f64>) -> Result<Vec<f64>> {
    let v = lp.max_violation(&x);
    if v > FEASIBILITY_SLACK {
        return Err(Error::Solver(format!("solution violates a constraint by {v:e}")));
    }
    Ok(x)
}

/// Solves the program as a pure feasibility problem (objective ignored).
pub fn check_feasible(lp: &LinearProgram) -> Result<Feasibility> {
    lp.validate()?;
    let mut feas = lp.clone();
    feas.objective = None;
    let (p, vars) = feas.to_problem();
    match p.solve() {
        Ok(outcome) => {
            let sol = outcome_solution(outcome)?;
            Ok(Feasibility::Feasible(verified(lp, extract(&sol, &vars))?))
        }
        Err(microlp::Error::Infeasible) => Ok(Feasibility::Infeasible),
        Err(e) => Err(solver_error(e)),
    }
}

/// Minimizes the objective; `None` when infeasible.
pub fn minimize(lp: &LinearProgram) -> Result<Option<Optimum>> {
    lp.validate()?;
    let (p, vars) = lp.to_problem();
    match p.solve() {
        Ok(outcome) => {
            let sol = outcome_solution(outcome)?;
            let point = verified(lp, extract(&sol, &vars))?;
            Ok(Some(Optimum {
                value: lp.objective_value(&point),
                point,
            }))
        }
        Err(microlp::Error::Infeasible) => Ok(None),
        Err(e) => Err(solver_error(e)),
    }
}
