//! Routing and access-rate allocation for the topological helper network.
//!
//! Each scheme is reduced to a flow structure: segment-length variables with
//! their coverage constraints, plus, per helper, a fronthaul expression and
//! per-link access expressions. The min-max delivery time is then found by
//! bisection on the normalized time α, where
//! `T = α · F / (C_front · order)` and `order` is the subpacketization.
//!
//! Two routes realize the α-family:
//! - `Explicit` rebuilds the program at every α with one access-rate variable
//!   per link, exactly as the rate-split formulation is stated;
//! - `Aggregated` eliminates the rates (a helper can support its links iff
//!   the summed link loads fit its access budget) and keeps α as a variable
//!   fixed by warm-started re-solves.

use serde::Serialize;

use crate::combin::{binomial, subsets, Subset};
use crate::error::{Error, Result};
use crate::lp::{
    bisect_min_alpha, check_feasible, BisectionConfig, Cmp, LinearProgram, ParametricLp,
};
use crate::model::{CacheAssignment, CacheScheme};
use crate::multiround::{build_delivery_array, DeliveryArray};
use crate::scenario::TopologicalGraph;

/// Largest user count accepted by the centralized (per-user MAN) solver.
pub const CENTRAL_MAX_USERS: usize = 12;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LpRoute {
    Aggregated,
    Explicit,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RoutingOptions {
    pub route: LpRoute,
    pub rel_tolerance: f64,
    pub max_iters: usize,
    /// Overrides the default upper bracket `2 · users · order · max(1, C_front / C_access)`.
    /// The bound without the factor 2 can be tight, which leaves the check at
    /// the bracket end to floating-point luck.
    pub alpha_high: Option<f64>,
}

impl Default for RoutingOptions {
    fn default() -> Self {
        Self {
            route: LpRoute::Aggregated,
            rel_tolerance: 1e-6,
            max_iters: 60,
            alpha_high: None,
        }
    }
}

/// Normalized length of the part of a message (or of a user's subfile,
/// when `user` is set) routed through `helper`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Share {
    pub user: Option<usize>,
    pub subset: Subset,
    pub helper: usize,
    pub value: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct LinkRate {
    pub helper: usize,
    pub user: usize,
    pub bps: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RoutingSolution {
    pub scheme: String,
    /// Normalized time: `t_total` bound as `alpha · F / (C_front · order)`.
    pub alpha: f64,
    pub order: u64,
    pub t_front: f64,
    pub t_access: f64,
    pub t_total: f64,
    pub shares: Vec<Share>,
    pub c_split: Vec<LinkRate>,
    pub rounds: Vec<RoutingSolution>,
    pub lp_solves: usize,
}

#[derive(Serialize)]
struct RoundView {
    alpha: f64,
    t_front: f64,
    t_access: f64,
    t_total: f64,
}

#[derive(Serialize)]
struct SolutionView<'a> {
    scheme: &'a str,
    alpha: f64,
    t_front: f64,
    t_access: f64,
    t_total: f64,
    rounds: Vec<RoundView>,
}

impl RoutingSolution {
    pub fn to_json(&self) -> Result<String> {
        let view = SolutionView {
            scheme: &self.scheme,
            alpha: self.alpha,
            t_front: self.t_front,
            t_access: self.t_access,
            t_total: self.t_total,
            rounds: self
                .rounds
                .iter()
                .map(|r| RoundView {
                    alpha: r.alpha,
                    t_front: r.t_front,
                    t_access: r.t_access,
                    t_total: r.t_total,
                })
                .collect(),
        };
        Ok(serde_json::to_string(&view)?)
    }

    fn zero(scheme: &str, order: u64) -> Self {
        Self {
            scheme: scheme.into(),
            alpha: 0.0,
            order,
            t_front: 0.0,
            t_access: 0.0,
            t_total: 0.0,
            shares: Vec::new(),
            c_split: Vec::new(),
            rounds: Vec::new(),
            lp_solves: 0,
        }
    }
}

#[derive(Clone, Debug, Default)]
struct Expr {
    terms: Vec<(usize, f64)>,
    constant: f64,
}

impl Expr {
    fn eval(&self, x: &[f64]) -> f64 {
        self.constant + self.terms.iter().map(|&(v, c)| c * x[v]).sum::<f64>()
    }

    fn is_zero(&self) -> bool {
        self.terms.is_empty() && self.constant == 0.0
    }
}

#[derive(Clone, Copy, Debug)]
enum ShareValue {
    Var(usize),
    Const(f64),
}

/// α-free part of a routing problem.
#[derive(Clone, Debug)]
struct Flow {
    lp: LinearProgram,
    front: Vec<Expr>,
    loads: Vec<(usize, usize, Expr)>,
    shares: Vec<(Option<usize>, Subset, usize, ShareValue)>,
    order: u64,
    users: usize,
}

impl Flow {
    fn new(helpers: usize, order: u64, users: usize) -> Self {
        Self {
            lp: LinearProgram::new(),
            front: vec![Expr::default(); helpers],
            loads: Vec::new(),
            shares: Vec::new(),
            order,
            users,
        }
    }

    fn helper_loads(&self) -> Vec<Expr> {
        let mut out = vec![Expr::default(); self.front.len()];
        for (h, _, e) in &self.loads {
            out[*h].terms.extend_from_slice(&e.terms);
            out[*h].constant += e.constant;
        }
        for e in &mut out {
            e.terms = merge_terms(std::mem::take(&mut e.terms));
        }
        out
    }

    /// Program with α as a variable, objective `min α`; also returns α's index.
    fn aggregated(&self, ratio: f64) -> (LinearProgram, usize) {
        let mut lp = self.lp.clone();
        let alpha = lp.add_nonneg("alpha");
        for e in &self.front {
            if e.is_zero() {
                continue;
            }
            let mut terms = e.terms.clone();
            terms.push((alpha, -1.0));
            lp.add_constraint(terms, Cmp::Le, -e.constant);
        }
        for e in self.helper_loads() {
            if e.is_zero() {
                continue;
            }
            let mut terms = e.terms;
            terms.push((alpha, -ratio));
            lp.add_constraint(terms, Cmp::Le, -e.constant);
        }
        lp.set_objective(vec![(alpha, 1.0)]);
        (lp, alpha)
    }

    /// Program at fixed α with one rate variable per link (in units of C_front).
    fn explicit(&self, alpha: f64, ratio: f64) -> LinearProgram {
        let mut lp = self.lp.clone();
        for e in &self.front {
            if !e.is_zero() {
                lp.add_constraint(e.terms.clone(), Cmp::Le, alpha - e.constant);
            }
        }
        let mut per_helper: Vec<Vec<(usize, f64)>> = vec![Vec::new(); self.front.len()];
        for (h, k, e) in &self.loads {
            if e.is_zero() {
                continue;
            }
            let c = lp.add_nonneg(format!("c_{h}_{k}"));
            per_helper[*h].push((c, 1.0));
            let mut terms = e.terms.clone();
            terms.push((c, -alpha));
            lp.add_constraint(terms, Cmp::Le, -e.constant);
        }
        for terms in per_helper.into_iter().filter(|t| !t.is_empty()) {
            lp.add_constraint(terms, Cmp::Le, ratio);
        }
        lp
    }
}

fn merge_terms(mut terms: Vec<(usize, f64)>) -> Vec<(usize, f64)> {
    terms.sort_by_key(|t| t.0);
    let mut out: Vec<(usize, f64)> = Vec::with_capacity(terms.len());
    for (v, c) in terms {
        match out.last_mut() {
            Some(last) if last.0 == v => last.1 += c,
            _ => out.push((v, c)),
        }
    }
    out
}

fn solve_flow(
    scheme: &str,
    flow: &Flow,
    graph: &TopologicalGraph,
    file_bits: f64,
    opts: &RoutingOptions,
) -> Result<RoutingSolution> {
    let (cf, ca) = (graph.c_front, graph.c_access);
    if !(cf > 0.0 && ca > 0.0 && file_bits > 0.0) {
        return Err(Error::InvalidParams("capacities and file size must be positive".into()));
    }
    let ratio = ca / cf;
    let alpha_high = opts
        .alpha_high
        .unwrap_or(2.0 * flow.users as f64 * flow.order as f64 * (cf / ca).max(1.0));
    if alpha_high <= 0.0 {
        return Ok(RoutingSolution::zero(scheme, flow.order));
    }
    let cfg = BisectionConfig {
        alpha_low: 0.0,
        alpha_high,
        rel_tolerance: opts.rel_tolerance,
        max_iters: opts.max_iters,
    };
    let mut solves = 0;
    let result = match opts.route {
        LpRoute::Aggregated => {
            let (lp, alpha_var) = flow.aggregated(ratio);
            let mut family = ParametricLp::new(lp, alpha_var)?;
            bisect_min_alpha(
                |a| {
                    solves += 1;
                    family.feasible_at(a)
                },
                &cfg,
            )?
        }
        LpRoute::Explicit => bisect_min_alpha(
            |a| {
                solves += 1;
                check_feasible(&flow.explicit(a, ratio))
            },
            &cfg,
        )?,
    };
    let x = &result.point;

    let front: Vec<f64> = flow.front.iter().map(|e| e.eval(x).max(0.0)).collect();
    let link_loads: Vec<f64> = flow.loads.iter().map(|(_, _, e)| e.eval(x).max(0.0)).collect();
    let mut helper_load = vec![0.0; flow.front.len()];
    for ((h, _, _), l) in flow.loads.iter().zip(&link_loads) {
        helper_load[*h] += l;
    }
    let c_split = flow
        .loads
        .iter()
        .zip(&link_loads)
        .map(|(&(h, k, _), &l)| LinkRate {
            helper: h,
            user: k,
            bps: if helper_load[h] > 0.0 { ca * l / helper_load[h] } else { 0.0 },
        })
        .collect();
    let unit = file_bits / flow.order as f64;
    let t_front = unit * front.iter().copied().fold(0.0, f64::max) / cf;
    let t_access = unit * helper_load.iter().copied().fold(0.0, f64::max) / ca;
    let shares = flow
        .shares
        .iter()
        .map(|&(user, subset, helper, v)| Share {
            user,
            subset,
            helper,
            value: match v {
                ShareValue::Var(i) => x[i].max(0.0),
                ShareValue::Const(c) => c,
            },
        })
        .collect();
    Ok(RoutingSolution {
        scheme: scheme.into(),
        alpha: result.alpha,
        order: flow.order,
        t_front,
        t_access,
        t_total: t_front.max(t_access),
        shares,
        c_split,
        rounds: Vec::new(),
        lp_solves: solves,
    })
}

fn users_mask(list: &[usize]) -> Subset {
    Subset::from_elems(list.iter().copied())
}

fn centralized_flow(graph: &TopologicalGraph, replication: usize) -> Result<Flow> {
    let k = graph.users();
    if k > CENTRAL_MAX_USERS {
        return Err(Error::SizeGate(format!(
            "centralized routing supports at most {CENTRAL_MAX_USERS} users, got {k}"
        )));
    }
    if replication > k {
        return Err(Error::InvalidParams(format!("replication t = {replication} exceeds K = {k}")));
    }
    graph.ensure_connected()?;
    let h_count = graph.helpers();
    let masks: Vec<Subset> = graph.users_of.iter().map(|u| users_mask(u)).collect();
    let mut flow = Flow::new(h_count, binomial(k, replication), k);
    let mut link: Vec<Vec<Option<usize>>> = vec![vec![None; k]; h_count];
    for (h, users) in graph.users_of.iter().enumerate() {
        for &u in users {
            link[h][u] = Some(flow.loads.len());
            flow.loads.push((h, u, Expr::default()));
        }
    }
    for s in subsets(k, replication + 1) {
        let mut var_of = vec![None; h_count];
        for h in 0..h_count {
            if s.intersects(masks[h]) {
                let v = flow.lp.add_nonneg(format!("y_{s}_{h}"));
                var_of[h] = Some(v);
                flow.front[h].terms.push((v, 1.0));
                flow.shares.push((None, s, h, ShareValue::Var(v)));
                for u in s.iter().filter(|&u| masks[h].contains(u)) {
                    let idx = link[h][u].expect("link exists");
                    flow.loads[idx].2.terms.push((v, 1.0));
                }
            }
        }
        for u in s.iter() {
            let terms = graph.helpers_of[u].iter().map(|&h| (var_of[h].expect("connected"), 1.0)).collect();
            flow.lp.add_constraint(terms, Cmp::Ge, 1.0);
        }
    }
    Ok(flow)
}

/// One delivery round of the multiround scheme: the present groups act as
/// virtual users and only messages touching a present group are sent.
fn round_flow(graph: &TopologicalGraph, scheme: &CacheScheme, array: &DeliveryArray, col: usize) -> Flow {
    let l = scheme.groups;
    let h_count = graph.helpers();
    let present = array.presence(col);
    let user_of: Vec<Option<usize>> = (0..l).map(|g| array.cell(g, col)).collect();
    let mut flow = Flow::new(h_count, scheme.order(), present.len());
    let mut link = vec![vec![None; l]; h_count];
    let mut groups_at = vec![Subset::EMPTY; h_count];
    for g in present.iter() {
        let u = user_of[g].expect("present");
        for &h in &graph.helpers_of[u] {
            groups_at[h] = groups_at[h].with(g);
            link[h][g] = Some(flow.loads.len());
            flow.loads.push((h, u, Expr::default()));
        }
    }
    for s in scheme.multicast_subsets().into_iter().filter(|s| s.intersects(present)) {
        let mut var_of = vec![None; h_count];
        for h in 0..h_count {
            if s.intersects(groups_at[h]) {
                let v = flow.lp.add_nonneg(format!("y_{s}_{h}"));
                var_of[h] = Some(v);
                flow.front[h].terms.push((v, 1.0));
                for g in s.iter().filter(|&g| groups_at[h].contains(g)) {
                    let idx = link[h][g].expect("link exists");
                    flow.loads[idx].2.terms.push((v, 1.0));
                    flow.shares.push((user_of[g], s, h, ShareValue::Var(v)));
                }
            }
        }
        for g in s.iter().filter(|&g| present.contains(g)) {
            let u = user_of[g].expect("present");
            let terms = graph.helpers_of[u].iter().map(|&h| (var_of[h].expect("connected"), 1.0)).collect();
            flow.lp.add_constraint(terms, Cmp::Ge, 1.0);
        }
    }
    flow
}

fn new_flow(graph: &TopologicalGraph, assignment: &CacheAssignment, scheme: &CacheScheme) -> Flow {
    let l = scheme.groups;
    let h_count = graph.helpers();
    let msgs = scheme.multicast_subsets();
    let mut flow = Flow::new(h_count, scheme.order(), graph.users());
    // group_sum[h][s][g]: Σ over users of group g at helper h of their share of S.
    let mut group_sum: Vec<Vec<Vec<Expr>>> = vec![vec![vec![Expr::default(); l]; msgs.len()]; h_count];
    for k in 0..graph.users() {
        let g = assignment.group_of[k];
        let hs = &graph.helpers_of[k];
        let link_base = flow.loads.len();
        for &h in hs {
            flow.loads.push((h, k, Expr::default()));
        }
        for (si, &s) in msgs.iter().enumerate().filter(|(_, s)| s.contains(g)) {
            if hs.len() == 1 {
                let h = hs[0];
                group_sum[h][si][g].constant += 1.0;
                flow.loads[link_base].2.constant += 1.0;
                flow.shares.push((Some(k), s, h, ShareValue::Const(1.0)));
                continue;
            }
            let mut cover = Vec::with_capacity(hs.len());
            for (i, &h) in hs.iter().enumerate() {
                let v = flow.lp.add_nonneg(format!("y_{k}_{s}_{h}"));
                cover.push((v, 1.0));
                group_sum[h][si][g].terms.push((v, 1.0));
                flow.loads[link_base + i].2.terms.push((v, 1.0));
                flow.shares.push((Some(k), s, h, ShareValue::Var(v)));
            }
            flow.lp.add_constraint(cover, Cmp::Eq, 1.0);
        }
    }
    for (h, per_msg) in group_sum.into_iter().enumerate() {
        for (si, sums) in per_msg.into_iter().enumerate() {
            let parts: Vec<Expr> = sums.into_iter().filter(|e| !e.is_zero()).collect();
            match parts.len() {
                0 => {}
                1 if parts[0].terms.is_empty() => flow.front[h].constant += parts[0].constant,
                1 => {
                    let e = &parts[0];
                    flow.front[h].terms.extend_from_slice(&e.terms);
                    flow.front[h].constant += e.constant;
                }
                _ => {
                    // Epigraph of the max over groups of the per-group sums.
                    let floor = parts.iter().map(|e| e.constant).fold(0.0, f64::max);
                    let m = flow.lp.add_var(format!("m_{h}_{}", msgs[si]), floor, f64::INFINITY);
                    flow.front[h].terms.push((m, 1.0));
                    for e in parts.into_iter().filter(|e| !e.terms.is_empty()) {
                        let mut terms = e.terms;
                        terms.push((m, -1.0));
                        flow.lp.add_constraint(terms, Cmp::Le, -e.constant);
                    }
                }
            }
        }
    }
    flow
}

fn check_assignment(graph: &TopologicalGraph, assignment: &CacheAssignment, scheme: &CacheScheme) -> Result<()> {
    graph.ensure_connected()?;
    if assignment.users() != graph.users() {
        return Err(Error::InvalidParams(format!(
            "cache assignment covers {} users, graph has {}",
            assignment.users(),
            graph.users()
        )));
    }
    if assignment.groups != scheme.groups {
        return Err(Error::InvalidParams("assignment and scheme disagree on L".into()));
    }
    Ok(())
}

/// MAN messages over all users with per-message routing (users ≤ 12).
pub fn solve_centralized_routing(
    graph: &TopologicalGraph,
    replication: usize,
    file_bits: f64,
    opts: &RoutingOptions,
) -> Result<RoutingSolution> {
    let flow = centralized_flow(graph, replication)?;
    solve_flow("central", &flow, graph, file_bits, opts)
}

/// Rounds of the global delivery array solved one after another; times add up.
pub fn solve_multiround_routing(
    graph: &TopologicalGraph,
    assignment: &CacheAssignment,
    scheme: &CacheScheme,
    file_bits: f64,
    opts: &RoutingOptions,
) -> Result<RoutingSolution> {
    check_assignment(graph, assignment, scheme)?;
    let array = build_delivery_array(&assignment.partition);
    let mut total = RoutingSolution::zero("multiround", scheme.order());
    for col in 0..array.cols() {
        let flow = round_flow(graph, scheme, &array, col);
        let round = solve_flow("multiround-round", &flow, graph, file_bits, opts)?;
        total.alpha += round.alpha;
        total.t_front += round.t_front;
        total.t_access += round.t_access;
        total.t_total += round.t_total;
        total.lp_solves += round.lp_solves;
        total.rounds.push(round);
    }
    Ok(total)
}

/// Topology-aware group XORs with per-user segment routing.
pub fn solve_new_decentralized_routing(
    graph: &TopologicalGraph,
    assignment: &CacheAssignment,
    scheme: &CacheScheme,
    file_bits: f64,
    opts: &RoutingOptions,
) -> Result<RoutingSolution> {
    check_assignment(graph, assignment, scheme)?;
    let flow = new_flow(graph, assignment, scheme);
    solve_flow("new-lp", &flow, graph, file_bits, opts)
}

/// The aggregated programs (objective `min α`) behind a scheme, for export.
pub fn routing_programs(
    scheme_name: &str,
    graph: &TopologicalGraph,
    assignment: &CacheAssignment,
    scheme: &CacheScheme,
) -> Result<Vec<(String, LinearProgram)>> {
    let ratio = graph.c_access / graph.c_front;
    match scheme_name {
        "central" => {
            let flow = centralized_flow(graph, scheme.replication)?;
            Ok(vec![("central".into(), flow.aggregated(ratio).0)])
        }
        "multiround" => {
            check_assignment(graph, assignment, scheme)?;
            let array = build_delivery_array(&assignment.partition);
            Ok((0..array.cols())
                .map(|j| {
                    let flow = round_flow(graph, scheme, &array, j);
                    (format!("multiround_round{j}"), flow.aggregated(ratio).0)
                })
                .collect())
        }
        "new-lp" => {
            check_assignment(graph, assignment, scheme)?;
            Ok(vec![("new-lp".into(), new_flow(graph, assignment, scheme).aggregated(ratio).0)])
        }
        other => Err(Error::Config(format!("no routing program for scheme {other}"))),
    }
}

/// Largest violation of the coverage constraints by the shares of a
/// solution: every user must collect a full subfile of each message it
/// needs from its own helpers (exactly one for the new scheme).
pub fn coverage_violation(sol: &RoutingSolution, graph: &TopologicalGraph) -> f64 {
    use std::collections::BTreeMap;
    let mut per_user: BTreeMap<(usize, Subset), f64> = BTreeMap::new();
    let mut per_message: BTreeMap<(Subset, usize), f64> = BTreeMap::new();
    for s in &sol.shares {
        match s.user {
            Some(k) if graph.helpers_of[k].contains(&s.helper) => {
                *per_user.entry((k, s.subset)).or_default() += s.value
            }
            Some(k) => {
                per_user.entry((k, s.subset)).or_default();
            }
            None => *per_message.entry((s.subset, s.helper)).or_default() += s.value,
        }
    }
    let exact = sol.scheme == "new-lp";
    let mut worst: f64 = 0.0;
    for total in per_user.values() {
        worst = worst.max(if exact { (total - 1.0).abs() } else { 1.0 - total });
    }
    let subsets: std::collections::BTreeSet<Subset> = per_message.keys().map(|k| k.0).collect();
    for s in subsets {
        for k in s.iter() {
            let got: f64 = graph.helpers_of[k].iter().filter_map(|&h| per_message.get(&(s, h))).sum();
            worst = worst.max(1.0 - got);
        }
    }
    worst
}

/// Sum constraint on access rates: returns the largest excess over C_access.
pub fn access_budget_excess(sol: &RoutingSolution, graph: &TopologicalGraph) -> f64 {
    let mut used = vec![0.0; graph.helpers()];
    for r in &sol.c_split {
        used[r.helper] += r.bps;
    }
    used.iter().map(|u| u - graph.c_access).fold(0.0, f64::max)
}
