//! Collision-model schemes: spatial reuse (helper coloring, user
//! association, per-cell multiround delivery) and the avalanche scheduler.

mod avalanche;

pub use avalanche::{
    avalanche_run, replay_trace, AvalancheOutcome, EventKind, ReplayReport, ScheduleTrace, TraceEvent,
};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::combin::{binomial, permutations};
use crate::error::{Error, Result};
use crate::lp::{solve_binary_min, BinaryProgram, BranchOptions, Cmp};
use crate::model::{CacheAssignment, CacheScheme};
use crate::multiround::multiround_slots;
use crate::scenario::{CollisionGraph, HelperConflictGraph};

pub const EXACT_COLORING_MAX_VERTICES: usize = 30;
pub const EXACT_ASSOCIATION_MAX_GROUPS: usize = 6;
pub const EXACT_ASSOCIATION_MAX_AMBIGUOUS: usize = 15;
const NODE_BUDGET: usize = 200_000;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Coloring {
    pub color_of: Vec<usize>,
    pub colors: usize,
}

impl Coloring {
    pub fn is_valid(&self, g: &HelperConflictGraph) -> bool {
        let used: std::collections::BTreeSet<usize> = self.color_of.iter().copied().collect();
        g.edges().iter().all(|&(a, b)| self.color_of[a] != self.color_of[b])
            && used.len() == self.colors
            && used.iter().all(|&c| c < self.colors)
    }

    /// Relabels colors to `0..r` in order of first use.
    fn compact(color_of: Vec<usize>) -> Self {
        let mut map = std::collections::HashMap::new();
        let color_of: Vec<usize> = color_of
            .into_iter()
            .map(|c| {
                let next = map.len();
                *map.entry(c).or_insert(next)
            })
            .collect();
        Coloring {
            colors: map.len(),
            color_of,
        }
    }
}

/// DSatur: repeatedly colors the vertex with the most distinct neighbor
/// colors (ties: larger degree, then lower id) with the smallest free color.
pub fn color_dsatur(g: &HelperConflictGraph) -> Coloring {
    let n = g.vertices();
    let mut color: Vec<Option<usize>> = vec![None; n];
    for _ in 0..n {
        let sat = |v: usize| {
            let mut cs: Vec<usize> = g.adj[v].iter().filter_map(|&u| color[u]).collect();
            cs.sort_unstable();
            cs.dedup();
            cs.len()
        };
        let v = (0..n)
            .filter(|&v| color[v].is_none())
            .max_by(|&a, &b| {
                sat(a)
                    .cmp(&sat(b))
                    .then(g.degree(a).cmp(&g.degree(b)))
                    .then(b.cmp(&a))
            })
            .expect("uncolored vertex remains");
        let c = (0..).find(|c| g.adj[v].iter().all(|&u| color[u] != Some(*c))).expect("free color");
        color[v] = Some(c);
    }
    Coloring::compact(color.into_iter().map(|c| c.expect("colored")).collect())
}

/// Greedy clique, largest-degree first; its vertices need distinct colors.
fn greedy_clique(g: &HelperConflictGraph) -> Vec<usize> {
    let mut order: Vec<usize> = (0..g.vertices()).collect();
    order.sort_by(|&a, &b| g.degree(b).cmp(&g.degree(a)).then(a.cmp(&b)));
    let mut best = Vec::new();
    for &seed in &order {
        let mut clique = vec![seed];
        for &v in &order {
            if v != seed && clique.iter().all(|&u| g.has_edge(u, v)) {
                clique.push(v);
            }
        }
        if clique.len() > best.len() {
            best = clique;
        }
    }
    best
}

/// Minimum coloring through the binary program `min Σ y_c` with
/// `Σ_c x_{i,c} = 1` and `x_{i,c} + x_{j,c} ≤ y_c` on conflict edges.
/// The palette is capped at the DSatur count and a clique is pre-colored.
pub fn color_exact(g: &HelperConflictGraph) -> Result<Coloring> {
    let n = g.vertices();
    if n > EXACT_COLORING_MAX_VERTICES {
        return Err(Error::SizeGate(format!(
            "exact coloring supports at most {EXACT_COLORING_MAX_VERTICES} helpers, got {n}; use DSatur"
        )));
    }
    let heuristic = color_dsatur(g);
    let clique = greedy_clique(g);
    if clique.len() >= heuristic.colors {
        return Ok(heuristic);
    }
    let palette = heuristic.colors;
    let mut p = BinaryProgram::new();
    let y: Vec<usize> = (0..palette).map(|c| p.add_binary(format!("y{c}"))).collect();
    let x: Vec<Vec<usize>> = (0..n)
        .map(|i| (0..palette).map(|c| p.add_binary(format!("x{i}_{c}"))).collect())
        .collect();
    for row in &x {
        p.lp.add_constraint(row.iter().map(|&v| (v, 1.0)).collect(), Cmp::Eq, 1.0);
        for c in 0..palette {
            p.lp.add_constraint(vec![(row[c], 1.0), (y[c], -1.0)], Cmp::Le, 0.0);
        }
    }
    for (a, b) in g.edges() {
        for c in 0..palette {
            p.lp.add_constraint(vec![(x[a][c], 1.0), (x[b][c], 1.0), (y[c], -1.0)], Cmp::Le, 0.0);
        }
    }
    for c in 1..palette {
        p.lp.add_constraint(vec![(y[c - 1], 1.0), (y[c], -1.0)], Cmp::Ge, 0.0);
    }
    for (c, &v) in clique.iter().enumerate() {
        p.lp.lower[x[v][c]] = 1.0;
    }
    p.lp.set_objective(y.iter().map(|&v| (v, 1.0)).collect());
    let opts = BranchOptions {
        node_budget: NODE_BUDGET,
        integral_objective: true,
        incumbent: Some(palette as f64),
    };
    match solve_binary_min(&p, &opts)? {
        Some(sol) => {
            let color_of = x
                .iter()
                .map(|row| row.iter().position(|&v| sol.point[v] > 0.5).expect("one color per vertex"))
                .collect();
            Ok(Coloring::compact(color_of))
        }
        None => Ok(heuristic),
    }
}

/// Serving helper of every user.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Association {
    pub helper_of: Vec<usize>,
}

impl Association {
    /// `A^h_ℓ`: users of group ℓ associated to helper h.
    pub fn occupancies(&self, helpers: usize, assignment: &CacheAssignment) -> Vec<Vec<usize>> {
        let mut occ = vec![vec![0; assignment.groups]; helpers];
        for (k, &h) in self.helper_of.iter().enumerate() {
            occ[h][assignment.group_of[k]] += 1;
        }
        occ
    }

    /// Multiround slots of every helper.
    pub fn helper_slots(&self, helpers: usize, assignment: &CacheAssignment, scheme: &CacheScheme) -> Vec<u64> {
        self.occupancies(helpers, assignment)
            .iter()
            .map(|a| multiround_slots(a, scheme.replication))
            .collect()
    }

    pub fn max_slots(&self, helpers: usize, assignment: &CacheAssignment, scheme: &CacheScheme) -> u64 {
        self.helper_slots(helpers, assignment, scheme).into_iter().max().unwrap_or(0)
    }

    pub fn is_admissible(&self, cg: &CollisionGraph) -> bool {
        self.helper_of.len() == cg.users && self.helper_of.iter().enumerate().all(|(k, h)| cg.solid_of[k].contains(h))
    }
}

fn check_inputs(cg: &CollisionGraph, assignment: &CacheAssignment, scheme: &CacheScheme) -> Result<()> {
    if assignment.users() != cg.users || assignment.groups != scheme.groups {
        return Err(Error::InvalidParams(
            "cache assignment does not match the collision graph or scheme".into(),
        ));
    }
    if let Some(k) = (0..cg.users).find(|&k| cg.solid_of[k].is_empty()) {
        return Err(Error::UncoveredUsers { users: vec![k] });
    }
    Ok(())
}

/// Single-homed users first, then multi-homed users in id order, each to the
/// helper that minimizes (resulting worst helper slots, resulting slots of
/// that helper, helper id).
pub fn associate_greedy(cg: &CollisionGraph, assignment: &CacheAssignment, scheme: &CacheScheme) -> Result<Association> {
    check_inputs(cg, assignment, scheme)?;
    let t = scheme.replication;
    let mut occ = vec![vec![0; scheme.groups]; cg.helpers];
    let mut helper_of = vec![usize::MAX; cg.users];
    for k in (0..cg.users).filter(|&k| cg.solid_of[k].len() == 1) {
        let h = cg.solid_of[k][0];
        helper_of[k] = h;
        occ[h][assignment.group_of[k]] += 1;
    }
    let mut slots: Vec<u64> = occ.iter().map(|a| multiround_slots(a, t)).collect();
    for k in (0..cg.users).filter(|&k| cg.solid_of[k].len() > 1) {
        let g = assignment.group_of[k];
        let (h, new_slots) = cg.solid_of[k]
            .iter()
            .map(|&h| {
                occ[h][g] += 1;
                let s = multiround_slots(&occ[h], t);
                occ[h][g] -= 1;
                let worst = slots.iter().enumerate().map(|(i, &v)| if i == h { s } else { v }).max().unwrap_or(0);
                ((worst, s, h), s)
            })
            .min_by_key(|&(key, _)| key)
            .map(|((_, _, h), s)| (h, s))
            .expect("multi-homed user has helpers");
        helper_of[k] = h;
        occ[h][g] += 1;
        slots[h] = new_slots;
    }
    Ok(Association { helper_of })
}

/// Uniform choice among each user's solid-edge helpers.
pub fn associate_random(cg: &CollisionGraph, seed: u64) -> Result<Association> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let helper_of = (0..cg.users)
        .map(|k| match cg.solid_of[k].as_slice() {
            [] => Err(Error::UncoveredUsers { users: vec![k] }),
            [h] => Ok(*h),
            hs => Ok(hs[rng.random_range(0..hs.len())]),
        })
        .collect::<Result<_>>()?;
    Ok(Association { helper_of })
}

/// Ordered selections of `len` distinct items from `items`.
fn arrangements(items: &[usize], len: usize) -> Vec<Vec<usize>> {
    let mut out = std::collections::BTreeSet::new();
    for p in permutations(items.len()) {
        out.insert(p[..len].iter().map(|&i| items[i]).collect::<Vec<_>>());
    }
    out.into_iter().collect()
}

/// Minimizes the worst helper's multiround slots exactly. The sorted-order
/// objective is linearized with one constraint per ordering of the groups
/// present at a helper; duplicate orderings are dropped.
pub fn associate_exact(cg: &CollisionGraph, assignment: &CacheAssignment, scheme: &CacheScheme) -> Result<Association> {
    check_inputs(cg, assignment, scheme)?;
    let l = scheme.groups;
    let t = scheme.replication;
    if l > EXACT_ASSOCIATION_MAX_GROUPS {
        return Err(Error::SizeGate(format!(
            "exact association supports L ≤ {EXACT_ASSOCIATION_MAX_GROUPS}, got {l}; use greedy"
        )));
    }
    let ambiguous: Vec<usize> = (0..cg.users).filter(|&k| cg.solid_of[k].len() > 1).collect();
    if ambiguous.len() > EXACT_ASSOCIATION_MAX_AMBIGUOUS {
        return Err(Error::SizeGate(format!(
            "exact association supports at most {EXACT_ASSOCIATION_MAX_AMBIGUOUS} multi-homed users, got {}; use greedy",
            ambiguous.len()
        )));
    }
    let greedy = associate_greedy(cg, assignment, scheme)?;
    let greedy_slots = greedy.max_slots(cg.helpers, assignment, scheme);
    if ambiguous.is_empty() {
        return Ok(greedy);
    }

    let mut p = BinaryProgram::new();
    let alpha = p.lp.add_nonneg("alpha");
    // occupancy[h][g] = constant + Σ binaries
    let mut constant = vec![vec![0.0; l]; cg.helpers];
    let mut vars = vec![vec![Vec::new(); l]; cg.helpers];
    let mut choice: Vec<Vec<(usize, usize)>> = Vec::new();
    for k in 0..cg.users {
        let g = assignment.group_of[k];
        if cg.solid_of[k].len() == 1 {
            constant[cg.solid_of[k][0]][g] += 1.0;
            continue;
        }
        let mut row = Vec::new();
        for &h in &cg.solid_of[k] {
            let v = p.add_binary(format!("x_{h}_{k}"));
            vars[h][g].push(v);
            row.push((h, v));
        }
        p.lp.add_constraint(row.iter().map(|&(_, v)| (v, 1.0)).collect(), Cmp::Eq, 1.0);
        choice.push(row);
    }
    let weight: Vec<f64> = (1..=l).map(|r| if r <= l - t { binomial(l - r, t) as f64 } else { 0.0 }).collect();
    for h in 0..cg.helpers {
        let live: Vec<usize> = (0..l).filter(|&g| constant[h][g] > 0.0 || !vars[h][g].is_empty()).collect();
        if live.is_empty() {
            continue;
        }
        if live.iter().all(|&g| vars[h][g].is_empty()) {
            let fixed: Vec<usize> = (0..l).map(|g| constant[h][g] as usize).collect();
            let s = multiround_slots(&fixed, t) as f64;
            p.lp.lower[alpha] = p.lp.lower[alpha].max(s);
            continue;
        }
        let len = live.len().min(l - t);
        for order in arrangements(&live, len) {
            let mut terms = vec![(alpha, -1.0)];
            let mut rhs = 0.0;
            for (pos, &g) in order.iter().enumerate() {
                rhs -= weight[pos] * constant[h][g];
                terms.extend(vars[h][g].iter().map(|&v| (v, weight[pos])));
            }
            if terms.len() > 1 {
                p.lp.add_constraint(terms, Cmp::Le, rhs);
            } else {
                p.lp.lower[alpha] = p.lp.lower[alpha].max(-rhs);
            }
        }
    }
    p.lp.set_objective(vec![(alpha, 1.0)]);
    let opts = BranchOptions {
        node_budget: NODE_BUDGET,
        integral_objective: true,
        incumbent: Some(greedy_slots as f64),
    };
    let Some(sol) = solve_binary_min(&p, &opts)? else {
        return Ok(greedy);
    };
    let mut helper_of = greedy.helper_of;
    for (i, &k) in ambiguous.iter().enumerate() {
        helper_of[k] = choice[i].iter().find(|&&(_, v)| sol.point[v] > 0.5).expect("one helper per user").0;
    }
    Ok(Association { helper_of })
}

/// Reuse delivery time: `max{F/C_front, r·F/C_access} · max_h R_h`.
pub fn reuse_delivery_time(
    colors: usize,
    max_slots: u64,
    scheme: &CacheScheme,
    c_front: f64,
    c_access: f64,
    file_bits: f64,
) -> f64 {
    let load = max_slots as f64 / scheme.order() as f64;
    (file_bits / c_front).max(colors as f64 * file_bits / c_access) * load
}

#[derive(Clone, Debug, PartialEq)]
pub struct ReuseOutcome {
    pub coloring: Coloring,
    pub association: Association,
    pub max_slots: u64,
    pub t_seconds: f64,
}

pub fn reuse_outcome(
    cg: &CollisionGraph,
    assignment: &CacheAssignment,
    scheme: &CacheScheme,
    coloring: Coloring,
    association: Association,
    file_bits: f64,
) -> ReuseOutcome {
    let max_slots = association.max_slots(cg.helpers, assignment, scheme);
    let t_seconds = reuse_delivery_time(coloring.colors, max_slots, scheme, cg.c_front, cg.c_access, file_bits);
    ReuseOutcome {
        coloring,
        association,
        max_slots,
        t_seconds,
    }
}
