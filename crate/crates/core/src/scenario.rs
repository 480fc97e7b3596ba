//! Spatial layouts, Poisson point process sampling, and the network graphs
//! derived from them under the topological and collision models.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};
use serde_json::value::RawValue;

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub fn new(x: f64, y: f64) -> Self {
        Point { x, y }
    }

    pub fn dist2(self, other: Point) -> f64 {
        let dx = self.x - other.x;
        let dy = self.y - other.y;
        dx * dx + dy * dy
    }

    /// Rounds both coordinates to the 6-decimal grid used on disk.
    pub fn quantized(self) -> Point {
        Point::new(quantize(self.x), quantize(self.y))
    }
}

fn quantize(v: f64) -> f64 {
    format!("{v:.6}").parse().expect("formatted float parses")
}

/// Helper and user positions plus the radii and capacities of both models.
#[derive(Clone, Debug, PartialEq)]
pub struct Layout {
    pub region_radius_m: f64,
    pub a_sig_m: f64,
    pub a_cell_m: f64,
    pub a_interf_m: f64,
    pub helpers: Vec<Point>,
    pub users: Vec<Point>,
    pub c_front_bps: f64,
    pub c_access_bps: f64,
}

#[derive(Serialize)]
struct LayoutOut<'a> {
    region_radius_m: f64,
    a_sig_m: f64,
    a_cell_m: f64,
    a_interf_m: f64,
    helpers: Vec<[Box<RawValue>; 2]>,
    users: Vec<[Box<RawValue>; 2]>,
    c_front_bps: f64,
    c_access_bps: f64,
    #[serde(skip)]
    _marker: std::marker::PhantomData<&'a ()>,
}

#[derive(Deserialize)]
struct LayoutIn {
    region_radius_m: f64,
    a_sig_m: f64,
    a_cell_m: f64,
    a_interf_m: f64,
    helpers: Vec<[f64; 2]>,
    users: Vec<[f64; 2]>,
    c_front_bps: f64,
    c_access_bps: f64,
}

fn fixed6(points: &[Point]) -> Vec<[Box<RawValue>; 2]> {
    let raw = |v: f64| RawValue::from_string(format!("{v:.6}")).expect("decimal literal is valid JSON");
    points.iter().map(|p| [raw(p.x), raw(p.y)]).collect()
}

impl Layout {
    pub fn validate(&self) -> Result<()> {
        let radii = [self.region_radius_m, self.a_sig_m, self.a_cell_m, self.a_interf_m];
        if radii.iter().any(|r| !r.is_finite() || *r < 0.0) {
            return Err(Error::Config("radii must be finite and non-negative".into()));
        }
        if !(self.a_cell_m <= self.a_sig_m && self.a_sig_m <= self.a_interf_m) {
            return Err(Error::Config(format!(
                "expected a_cell <= a_sig <= a_interf, got {} / {} / {}",
                self.a_cell_m, self.a_sig_m, self.a_interf_m
            )));
        }
        if !(self.c_front_bps > 0.0 && self.c_access_bps > 0.0) {
            return Err(Error::Config("capacities must be positive".into()));
        }
        let r2 = self.region_radius_m * self.region_radius_m * (1.0 + 1e-9);
        let origin = Point::new(0.0, 0.0);
        if self
            .helpers
            .iter()
            .chain(&self.users)
            .any(|p| p.dist2(origin) > r2 + 1e-6)
        {
            return Err(Error::Config("a point lies outside the region disk".into()));
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        let out = LayoutOut {
            region_radius_m: self.region_radius_m,
            a_sig_m: self.a_sig_m,
            a_cell_m: self.a_cell_m,
            a_interf_m: self.a_interf_m,
            helpers: fixed6(&self.helpers),
            users: fixed6(&self.users),
            c_front_bps: self.c_front_bps,
            c_access_bps: self.c_access_bps,
            _marker: std::marker::PhantomData,
        };
        Ok(serde_json::to_string_pretty(&out)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let raw: LayoutIn = serde_json::from_str(text)?;
        let pts = |v: Vec<[f64; 2]>| v.into_iter().map(|[x, y]| Point::new(x, y)).collect();
        let layout = Layout {
            region_radius_m: raw.region_radius_m,
            a_sig_m: raw.a_sig_m,
            a_cell_m: raw.a_cell_m,
            a_interf_m: raw.a_interf_m,
            helpers: pts(raw.helpers),
            users: pts(raw.users),
            c_front_bps: raw.c_front_bps,
            c_access_bps: raw.c_access_bps,
        };
        layout.validate()?;
        Ok(layout)
    }

    /// Keeps only users within `a_cell` of some helper; returns the original
    /// indices of the kept users.
    pub fn retain_cell_covered(&self) -> (Layout, Vec<usize>) {
        let r2 = self.a_cell_m * self.a_cell_m;
        let kept: Vec<usize> = (0..self.users.len())
            .filter(|&k| self.helpers.iter().any(|h| h.dist2(self.users[k]) <= r2))
            .collect();
        let mut out = self.clone();
        out.users = kept.iter().map(|&k| self.users[k]).collect();
        (out, kept)
    }
}

/// Homogeneous PPP on a disk: Poisson count, then uniform positions.
pub fn sample_ppp<R: Rng + ?Sized>(lambda_per_km2: f64, radius_m: f64, rng: &mut R) -> Vec<Point> {
    let area_km2 = PI * (radius_m / 1000.0).powi(2);
    let mean = lambda_per_km2 * area_km2;
    if mean <= 0.0 {
        return Vec::new();
    }
    let count = Poisson::new(mean).expect("positive finite mean").sample(rng) as usize;
    (0..count)
        .map(|_| {
            let r = radius_m * rng.random::<f64>().sqrt();
            let theta = 2.0 * PI * rng.random::<f64>();
            Point::new(r * theta.cos(), r * theta.sin())
        })
        .collect()
}

/// Seeded convenience wrapper around [`sample_ppp`].
pub fn sample_ppp_seeded(lambda_per_km2: f64, radius_m: f64, seed: u64) -> Vec<Point> {
    sample_ppp(lambda_per_km2, radius_m, &mut ChaCha8Rng::seed_from_u64(seed))
}

/// Densities, radii and capacities for random layouts.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LayoutParams {
    pub lambda_helpers: f64,
    pub lambda_users: f64,
    pub region_radius_m: f64,
    pub a_sig_m: f64,
    pub a_cell_m: f64,
    pub a_interf_m: f64,
    pub c_front_bps: f64,
    pub c_access_bps: f64,
}

impl Default for LayoutParams {
    fn default() -> Self {
        LayoutParams {
            lambda_helpers: 7.0,
            lambda_users: 140.0,
            region_radius_m: 1000.0,
            a_sig_m: 220.0,
            a_cell_m: 200.0,
            a_interf_m: 240.0,
            c_front_bps: 1.0,
            c_access_bps: 1.0,
        }
    }
}

/// Draws helpers then users from one seeded stream; positions are quantized
/// so that a JSON round trip is exact.
pub fn generate_layout(params: &LayoutParams, seed: u64) -> Layout {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let helpers = sample_ppp(params.lambda_helpers, params.region_radius_m, &mut rng);
    let users = sample_ppp(params.lambda_users, params.region_radius_m, &mut rng);
    Layout {
        region_radius_m: params.region_radius_m,
        a_sig_m: params.a_sig_m,
        a_cell_m: params.a_cell_m,
        a_interf_m: params.a_interf_m,
        helpers: helpers.into_iter().map(Point::quantized).collect(),
        users: users.into_iter().map(Point::quantized).collect(),
        c_front_bps: params.c_front_bps,
        c_access_bps: params.c_access_bps,
    }
}

/// Access graph of the topological model (`U_h`, `H_k`).
#[derive(Clone, Debug, PartialEq)]
pub struct TopologicalGraph {
    pub users_of: Vec<Vec<usize>>,
    pub helpers_of: Vec<Vec<usize>>,
    pub c_front: f64,
    pub c_access: f64,
    /// Layout index of each retained user.
    pub user_ids: Vec<usize>,
}

impl TopologicalGraph {
    /// Builds the graph from `U_h` lists over users `0..users`.
    pub fn from_users_of(
        users_of: Vec<Vec<usize>>,
        users: usize,
        c_front: f64,
        c_access: f64,
    ) -> Result<Self> {
        let mut helpers_of = vec![Vec::new(); users];
        for (h, list) in users_of.iter().enumerate() {
            for &k in list {
                if k >= users {
                    return Err(Error::InvalidParams(format!("user {k} out of range")));
                }
                helpers_of[k].push(h);
            }
        }
        let mut users_of = users_of;
        users_of.iter_mut().for_each(|l| {
            l.sort_unstable();
            l.dedup();
        });
        helpers_of.iter_mut().for_each(|l| l.dedup());
        Ok(TopologicalGraph {
            users_of,
            helpers_of,
            c_front,
            c_access,
            user_ids: (0..users).collect(),
        })
    }

    pub fn helpers(&self) -> usize {
        self.users_of.len()
    }

    pub fn users(&self) -> usize {
        self.helpers_of.len()
    }

    pub fn ensure_connected(&self) -> Result<()> {
        match self.helpers_of.iter().position(Vec::is_empty) {
            Some(user) => Err(Error::DisconnectedUser { user }),
            None => Ok(()),
        }
    }

    /// Single helper serving all `users`.
    pub fn single_helper(users: usize, c_front: f64, c_access: f64) -> Self {
        TopologicalGraph::from_users_of(vec![(0..users).collect()], users, c_front, c_access)
            .expect("indices in range")
    }
}

/// Connects users within `a_sig` of a helper; users with no helper are
/// dropped and their layout indices returned.
pub fn build_topological_graph(layout: &Layout) -> (TopologicalGraph, Vec<usize>) {
    let r2 = layout.a_sig_m * layout.a_sig_m;
    let mut kept = Vec::new();
    let mut dropped = Vec::new();
    let mut helpers_of = Vec::new();
    for (k, u) in layout.users.iter().enumerate() {
        let hs: Vec<usize> = (0..layout.helpers.len())
            .filter(|&h| layout.helpers[h].dist2(*u) <= r2)
            .collect();
        if hs.is_empty() {
            dropped.push(k);
        } else {
            kept.push(k);
            helpers_of.push(hs);
        }
    }
    if !dropped.is_empty() {
        log::warn!("{} users outside a_sig of every helper were dropped", dropped.len());
    }
    let mut users_of = vec![Vec::new(); layout.helpers.len()];
    for (k, hs) in helpers_of.iter().enumerate() {
        for &h in hs {
            users_of[h].push(k);
        }
    }
    let graph = TopologicalGraph {
        users_of,
        helpers_of,
        c_front: layout.c_front_bps,
        c_access: layout.c_access_bps,
        user_ids: kept,
    };
    (graph, dropped)
}

/// Bipartite signal/interference graph of the collision model.
#[derive(Clone, Debug, PartialEq)]
pub struct CollisionGraph {
    pub helpers: usize,
    pub users: usize,
    /// Helpers within `a_cell` of each user.
    pub solid_of: Vec<Vec<usize>>,
    /// Helpers within `(a_cell, a_interf]` of each user.
    pub dashed_of: Vec<Vec<usize>>,
    pub c_front: f64,
    pub c_access: f64,
}

impl CollisionGraph {
    pub fn from_edges(
        helpers: usize,
        users: usize,
        solid: &[(usize, usize)],
        dashed: &[(usize, usize)],
        c_front: f64,
        c_access: f64,
    ) -> Result<Self> {
        let mut solid_of = vec![Vec::new(); users];
        let mut dashed_of = vec![Vec::new(); users];
        for (list, edges) in [(&mut solid_of, solid), (&mut dashed_of, dashed)] {
            for &(h, k) in edges {
                if h >= helpers || k >= users {
                    return Err(Error::InvalidParams(format!("edge ({h}, {k}) out of range")));
                }
                list[k].push(h);
            }
            list.iter_mut().for_each(|l| {
                l.sort_unstable();
                l.dedup();
            });
        }
        if (0..users).any(|k| solid_of[k].iter().any(|h| dashed_of[k].contains(h))) {
            return Err(Error::InvalidParams("an edge is both solid and dashed".into()));
        }
        let uncovered: Vec<usize> = (0..users).filter(|&k| solid_of[k].is_empty()).collect();
        if !uncovered.is_empty() {
            return Err(Error::UncoveredUsers { users: uncovered });
        }
        Ok(CollisionGraph {
            helpers,
            users,
            solid_of,
            dashed_of,
            c_front,
            c_access,
        })
    }

    pub fn solid_edges(&self) -> Vec<(usize, usize)> {
        edge_list(&self.solid_of)
    }

    pub fn dashed_edges(&self) -> Vec<(usize, usize)> {
        edge_list(&self.dashed_of)
    }

    /// All helpers within `a_interf` of user `k`.
    pub fn neighbors_of(&self, k: usize) -> impl Iterator<Item = usize> + '_ {
        self.solid_of[k].iter().chain(&self.dashed_of[k]).copied()
    }

    pub fn has_edge(&self, h: usize, k: usize) -> bool {
        self.solid_of[k].contains(&h) || self.dashed_of[k].contains(&h)
    }

    pub fn edge_count(&self) -> usize {
        self.solid_of.iter().chain(&self.dashed_of).map(Vec::len).sum()
    }

    /// Users with a solid edge to each helper.
    pub fn cell_users(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.helpers];
        for (k, hs) in self.solid_of.iter().enumerate() {
            for &h in hs {
                out[h].push(k);
            }
        }
        out
    }

    /// Users with any edge to each helper.
    pub fn interfered_users(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.helpers];
        for k in 0..self.users {
            for h in self.neighbors_of(k) {
                out[h].push(k);
            }
        }
        out.iter_mut().for_each(|l| l.sort_unstable());
        out
    }
}

fn edge_list(of_user: &[Vec<usize>]) -> Vec<(usize, usize)> {
    let mut out: Vec<_> = of_user
        .iter()
        .enumerate()
        .flat_map(|(k, hs)| hs.iter().map(move |&h| (h, k)))
        .collect();
    out.sort_unstable();
    out
}

/// Classifies every helper-user pair as solid, dashed, or absent. Every user
/// must be within `a_cell` of some helper.
pub fn build_collision_graph(layout: &Layout) -> Result<CollisionGraph> {
    let c2 = layout.a_cell_m * layout.a_cell_m;
    let i2 = layout.a_interf_m * layout.a_interf_m;
    let mut solid = Vec::new();
    let mut dashed = Vec::new();
    for (k, u) in layout.users.iter().enumerate() {
        for (h, p) in layout.helpers.iter().enumerate() {
            let d2 = p.dist2(*u);
            if d2 <= c2 {
                solid.push((h, k));
            } else if d2 <= i2 {
                dashed.push((h, k));
            }
        }
    }
    CollisionGraph::from_edges(
        layout.helpers.len(),
        layout.users.len(),
        &solid,
        &dashed,
        layout.c_front_bps,
        layout.c_access_bps,
    )
}

/// Helpers conflict when some user hears both.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct HelperConflictGraph {
    pub adj: Vec<Vec<usize>>,
}

impl HelperConflictGraph {
    pub fn from_edges(vertices: usize, edges: &[(usize, usize)]) -> Self {
        let mut adj = vec![Vec::new(); vertices];
        for &(a, b) in edges {
            if a != b {
                adj[a].push(b);
                adj[b].push(a);
            }
        }
        adj.iter_mut().for_each(|l| {
            l.sort_unstable();
            l.dedup();
        });
        HelperConflictGraph { adj }
    }

    pub fn vertices(&self) -> usize {
        self.adj.len()
    }

    pub fn edges(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for (a, list) in self.adj.iter().enumerate() {
            out.extend(list.iter().filter(|&&b| b > a).map(|&b| (a, b)));
        }
        out
    }

    pub fn has_edge(&self, a: usize, b: usize) -> bool {
        self.adj[a].binary_search(&b).is_ok()
    }

    pub fn degree(&self, v: usize) -> usize {
        self.adj[v].len()
    }
}

pub fn build_helper_conflict_graph(cg: &CollisionGraph) -> HelperConflictGraph {
    let mut edges = Vec::new();
    for k in 0..cg.users {
        let hs: Vec<usize> = cg.neighbors_of(k).collect();
        for (i, &a) in hs.iter().enumerate() {
            for &b in &hs[i + 1..] {
                edges.push((a, b));
            }
        }
    }
    HelperConflictGraph::from_edges(cg.helpers, &edges)
}

/// Small hand-built layouts used by tests, examples and the CLI.
pub mod fixtures {
    use super::{Layout, Point};

    /// Four helpers, six users, collision radii 200/240 m. Solid edges
    /// (helper, user), 0-based: (0,0) (1,1) (1,2) (2,2) (2,3) (3,3) (2,4) (1,5)
    /// (3,5); dashed: (0,1) (0,4) (3,2). Caching groups for the worked example
    /// are `[0, 0, 1, 2, 0, 1]`.
    pub fn collision_example() -> Layout {
        Layout {
            region_radius_m: 1000.0,
            a_sig_m: 220.0,
            a_cell_m: 200.0,
            a_interf_m: 240.0,
            helpers: vec![
                Point::new(50.0, 261.0),
                Point::new(370.0, 104.0),
                Point::new(426.0, 285.0),
                Point::new(640.0, 60.0),
            ],
            users: vec![
                Point::new(115.0, 93.0),
                Point::new(216.0, 105.0),
                Point::new(418.0, 107.0),
                Point::new(599.0, 235.0),
                Point::new(259.0, 352.0),
                Point::new(542.0, 56.0),
            ],
            c_front_bps: 1.0,
            c_access_bps: 1.0,
        }
    }

    pub const COLLISION_EXAMPLE_GROUPS: [usize; 6] = [0, 0, 1, 2, 0, 1];

    /// Four helpers on a line, six users; `U_h` = {0,1}, {1,2}, {2,3,4}, {4,5}.
    pub fn topological_example() -> Layout {
        Layout {
            region_radius_m: 1000.0,
            a_sig_m: 220.0,
            a_cell_m: 200.0,
            a_interf_m: 240.0,
            helpers: vec![
                Point::new(-450.0, 0.0),
                Point::new(-150.0, 0.0),
                Point::new(150.0, 0.0),
                Point::new(450.0, 0.0),
            ],
            users: vec![
                Point::new(-550.0, 0.0),
                Point::new(-300.0, 50.0),
                Point::new(0.0, 0.0),
                Point::new(150.0, 150.0),
                Point::new(300.0, 0.0),
                Point::new(600.0, 0.0),
            ],
            c_front_bps: 1.0,
            c_access_bps: 1.0,
        }
    }
}
