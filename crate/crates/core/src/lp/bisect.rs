use microlp::{Solution, Variable};

use super::{extract, outcome_solution, solver_error, verified, Feasibility, LinearProgram};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BisectionConfig {
    pub alpha_low: f64,
    pub alpha_high: f64,
    pub rel_tolerance: f64,
    pub max_iters: usize,
}

impl BisectionConfig {
    pub fn new(alpha_high: f64) -> Self {
        Self {
            alpha_low: 0.0,
            alpha_high,
            rel_tolerance: 1e-6,
            max_iters: 60,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha_low.is_finite() && self.alpha_high.is_finite()) {
            return Err(Error::InvalidBisection("bracket must be finite".into()));
        }
        if self.alpha_low >= self.alpha_high {
            return Err(Error::InvalidBisection(format!(
                "alpha_low = {} is not below alpha_high = {}",
                self.alpha_low, self.alpha_high
            )));
        }
        if self.rel_tolerance.is_nan() || self.rel_tolerance <= 0.0 {
            return Err(Error::InvalidBisection("relative tolerance must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BisectionResult {
    /// Smallest feasible value found (upper end of the final bracket).
    pub alpha: f64,
    /// Largest value proven infeasible, or `alpha` when the low end is feasible.
    pub lower: f64,
    /// Feasible point of the program at `alpha`.
    pub point: Vec<f64>,
    pub iterations: usize,
}

/// Minimal feasible α of a monotone family by bisection on a bracket.
pub fn bisect_min_alpha<F>(mut family: F, cfg: &BisectionConfig) -> Result<BisectionResult>
where
    F: FnMut(f64) -> Result<Feasibility>,
{
    cfg.validate()?;
    let mut hi = cfg.alpha_high;
    let mut point = match family(hi)? {
        Feasibility::Feasible(p) => p,
        Feasibility::Infeasible => return Err(Error::UpperBoundInfeasible { alpha_high: hi }),
    };
    let mut lo = cfg.alpha_low;
    if let Feasibility::Feasible(p) = family(lo)? {
        return Ok(BisectionResult {
            alpha: lo,
            lower: lo,
            point: p,
            iterations: 0,
        });
    }
    let mut iterations = 0;
    while (hi - lo) > cfg.rel_tolerance * hi && iterations < cfg.max_iters {
        let mid = 0.5 * (lo + hi);
        match family(mid)? {
            Feasibility::Feasible(p) => {
                hi = mid;
                point = p;
            }
            Feasibility::Infeasible => lo = mid,
        }
        iterations += 1;
    }
    if (hi - lo) > cfg.rel_tolerance * hi {
        log::warn!("bisection stopped after {iterations} iterations with bracket [{lo}, {hi}]");
    }
    Ok(BisectionResult {
        alpha: hi,
        lower: lo,
        point,
        iterations,
    })
}

/// A program in which one variable plays the role of α. The program is
/// solved once with α free; every query then fixes α on a copy of the last
/// feasible basis, so each bisection step is a short dual-simplex warm start.
pub struct ParametricLp {
    lp: LinearProgram,
    alpha_var: usize,
    vars: Vec<Variable>,
    base: Option<Solution>,
}

impl ParametricLp {
    pub fn new(lp: LinearProgram, alpha_var: usize) -> Result<Self> {
        lp.validate()?;
        if alpha_var >= lp.vars() {
            return Err(Error::MalformedProgram(format!("alpha variable {alpha_var} is undeclared")));
        }
        let mut feas = lp.clone();
        feas.objective = None;
        let (p, vars) = feas.to_problem();
        let base = match p.solve() {
            Ok(outcome) => Some(outcome_solution(outcome)?),
            Err(microlp::Error::Infeasible) => None,
            Err(e) => return Err(solver_error(e)),
        };
        Ok(Self { lp, alpha_var, vars, base })
    }

    pub fn program(&self) -> &LinearProgram {
        &self.lp
    }

    pub fn feasible_at(&mut self, alpha: f64) -> Result<Feasibility> {
        let Some(base) = &self.base else {
            return Ok(Feasibility::Infeasible);
        };
        let (lo, hi) = (self.lp.lower[self.alpha_var], self.lp.upper[self.alpha_var]);
        if alpha < lo || alpha > hi {
            return Ok(Feasibility::Infeasible);
        }
        match base.clone().fix_var(self.vars[self.alpha_var], alpha) {
            Ok(outcome) => {
                let sol = outcome_solution(outcome)?;
                let x = extract(&sol, &self.vars);
                let mut checked = self.lp.clone();
                checked.lower[self.alpha_var] = alpha;
                checked.upper[self.alpha_var] = alpha;
                let x = verified(&checked, x)?;
                self.base = Some(sol);
                Ok(Feasibility::Feasible(x))
            }
            Err(microlp::Error::Infeasible) => Ok(Feasibility::Infeasible),
            Err(e) => Err(solver_error(e)),
        }
    }
}
