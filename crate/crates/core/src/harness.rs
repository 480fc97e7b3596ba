//! Seeded Monte-Carlo experiments over random layouts.
//!
//! Instance `i` of every sweep value uses layout seed `base_seed + i`, so all
//! sweep values and all schemes see the same placements; schemes at one
//! sweep value also share the cache assignment.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::collision::{
    associate_exact, associate_greedy, associate_random, avalanche_run, color_dsatur, color_exact, reuse_outcome,
};
use crate::error::{Error, Result};
use crate::model::{assign_caches, CacheScheme};
use crate::scenario::{
    build_collision_graph, build_helper_conflict_graph, build_topological_graph, generate_layout, Layout,
    LayoutParams,
};
use crate::topo::{
    routing_programs, solve_centralized_routing, solve_multiround_routing, solve_new_decentralized_routing,
    RoutingOptions,
};

const ASSIGNMENT_SALT: u64 = 0x9e37_79b9_7f4a_7c15;
const ASSOCIATION_SALT: u64 = 0xc2b2_ae3d_27d4_eb4f;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Model {
    Topological,
    Collision,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Scheme {
    #[serde(rename = "central")]
    Central,
    #[serde(rename = "multiround")]
    Multiround,
    #[serde(rename = "new-lp")]
    NewLp,
    #[serde(rename = "reuse-exact")]
    ReuseExact,
    #[serde(rename = "reuse-dsatur+greedy")]
    ReuseDsaturGreedy,
    #[serde(rename = "reuse-random")]
    ReuseRandom,
    #[serde(rename = "avalanche")]
    Avalanche,
}

impl Scheme {
    pub const ALL: [Scheme; 7] = [
        Scheme::Central,
        Scheme::Multiround,
        Scheme::NewLp,
        Scheme::ReuseExact,
        Scheme::ReuseDsaturGreedy,
        Scheme::ReuseRandom,
        Scheme::Avalanche,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Scheme::Central => "central",
            Scheme::Multiround => "multiround",
            Scheme::NewLp => "new-lp",
            Scheme::ReuseExact => "reuse-exact",
            Scheme::ReuseDsaturGreedy => "reuse-dsatur+greedy",
            Scheme::ReuseRandom => "reuse-random",
            Scheme::Avalanche => "avalanche",
        }
    }

    pub fn model(self) -> Model {
        match self {
            Scheme::Central | Scheme::Multiround | Scheme::NewLp => Model::Topological,
            _ => Model::Collision,
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Scheme {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Scheme::ALL
            .into_iter()
            .find(|x| x.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown scheme {s:?}")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum SweepParam {
    #[serde(rename = "mu")]
    Mu,
    #[serde(rename = "L")]
    Groups,
    #[serde(rename = "c_ratio")]
    CRatio,
}

impl SweepParam {
    pub fn name(self) -> &'static str {
        match self {
            SweepParam::Mu => "mu",
            SweepParam::Groups => "L",
            SweepParam::CRatio => "c_ratio",
        }
    }
}

impl FromStr for SweepParam {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mu" => Ok(SweepParam::Mu),
            "L" => Ok(SweepParam::Groups),
            "c_ratio" => Ok(SweepParam::CRatio),
            other => Err(Error::Config(format!("unknown sweep parameter {other:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sweep {
    pub param: SweepParam,
    pub values: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LayoutSection {
    pub lambda_helpers_per_km2: f64,
    pub lambda_users_per_km2: f64,
    pub region_radius_m: f64,
    pub a_sig_m: f64,
    pub a_cell_m: f64,
    pub a_interf_m: f64,
}

impl Default for LayoutSection {
    fn default() -> Self {
        let p = LayoutParams::default();
        Self {
            lambda_helpers_per_km2: p.lambda_helpers,
            lambda_users_per_km2: p.lambda_users,
            region_radius_m: p.region_radius_m,
            a_sig_m: p.a_sig_m,
            a_cell_m: p.a_cell_m,
            a_interf_m: p.a_interf_m,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub model: Model,
    pub schemes: Vec<Scheme>,
    #[serde(default = "default_instances")]
    pub instances: usize,
    #[serde(default)]
    pub base_seed: u64,
    /// Fractional cache size M/N.
    pub mu: f64,
    /// Number of cache configurations L.
    pub groups: usize,
    #[serde(default = "one")]
    pub file_bits: f64,
    #[serde(default = "one")]
    pub c_front_bps: f64,
    #[serde(default = "one")]
    pub c_access_bps: f64,
    #[serde(default)]
    pub sweep: Option<Sweep>,
    #[serde(default)]
    pub layout: LayoutSection,
}

fn default_instances() -> usize {
    10
}

fn one() -> f64 {
    1.0
}

/// Parameters of one sweep point after applying the sweep value.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Point {
    pub mu: f64,
    pub groups: usize,
    pub c_front: f64,
    pub c_access: f64,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn sweep_param(&self) -> SweepParam {
        self.sweep.as_ref().map_or(SweepParam::Groups, |s| s.param)
    }

    pub fn sweep_values(&self) -> Vec<f64> {
        match &self.sweep {
            Some(s) => s.values.clone(),
            None => vec![self.groups as f64],
        }
    }

    pub fn point(&self, value: f64) -> Point {
        let mut p = Point {
            mu: self.mu,
            groups: self.groups,
            c_front: self.c_front_bps,
            c_access: self.c_access_bps,
        };
        match self.sweep_param() {
            SweepParam::Mu => p.mu = value,
            SweepParam::Groups => p.groups = value.round() as usize,
            SweepParam::CRatio => p.c_access = value * self.c_front_bps,
        }
        p
    }

    pub fn scheme_at(&self, value: f64) -> Result<CacheScheme> {
        let p = self.point(value);
        let t = p.mu * p.groups as f64;
        if (t - t.round()).abs() > 1e-9 || t < -1e-9 || t.round() as usize > p.groups {
            return Err(Error::Config(format!(
                "t' = L·mu = {}·{} = {t} must be an integer in [0, L]",
                p.groups, p.mu
            )));
        }
        CacheScheme::new(p.groups, t.round() as usize)
    }

    pub fn layout_params(&self, point: &Point) -> LayoutParams {
        LayoutParams {
            lambda_helpers: self.layout.lambda_helpers_per_km2,
            lambda_users: self.layout.lambda_users_per_km2,
            region_radius_m: self.layout.region_radius_m,
            a_sig_m: self.layout.a_sig_m,
            a_cell_m: self.layout.a_cell_m,
            a_interf_m: self.layout.a_interf_m,
            c_front_bps: point.c_front,
            c_access_bps: point.c_access,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.schemes.is_empty() {
            return Err(Error::Config("no schemes selected".into()));
        }
        if let Some(s) = self.schemes.iter().find(|s| s.model() != self.model) {
            return Err(Error::Config(format!("scheme {s} does not belong to the {:?} model", self.model)));
        }
        if self.instances == 0 {
            return Err(Error::Config("instances must be positive".into()));
        }
        let positive = [
            self.file_bits,
            self.c_front_bps,
            self.c_access_bps,
            self.layout.region_radius_m,
            self.layout.a_cell_m,
        ];
        if positive.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(Error::Config("sizes, capacities and radii must be positive".into()));
        }
        let l = &self.layout;
        if !(l.a_cell_m <= l.a_sig_m && l.a_sig_m <= l.a_interf_m) {
            return Err(Error::Config("expected a_cell_m <= a_sig_m <= a_interf_m".into()));
        }
        if !(l.lambda_helpers_per_km2 >= 0.0 && l.lambda_users_per_km2 >= 0.0) {
            return Err(Error::Config("densities must be non-negative".into()));
        }
        if let Some(s) = &self.sweep {
            if s.values.is_empty() {
                return Err(Error::Config("sweep has no values".into()));
            }
            if s.values.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
                return Err(Error::Config("sweep values must be positive".into()));
            }
        }
        for v in self.sweep_values() {
            self.scheme_at(v)?;
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct Diagnostics {
    pub helpers: usize,
    pub users: usize,
    pub colors: Option<usize>,
    pub max_slots: Option<u64>,
    pub lp_solves: Option<usize>,
    /// Routing solution JSON for topological schemes.
    #[serde(skip)]
    pub routing_json: Option<String>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ResultRecord {
    pub scheme: Scheme,
    pub sweep_param: SweepParam,
    pub sweep_value: f64,
    pub seed: u64,
    /// `None` for flagged failures.
    pub t_seconds: Option<f64>,
    pub t_normalized: Option<f64>,
    /// Empty when the row is a clean measurement.
    pub flag: String,
    pub diagnostics: Diagnostics,
}

#[derive(Serialize)]
struct CsvRow<'a> {
    scheme: &'a str,
    sweep_param: &'a str,
    sweep_value: f64,
    seed: u64,
    t_seconds: Option<f64>,
    t_normalized: Option<f64>,
    flag: &'a str,
}

pub fn write_csv<W: std::io::Write>(records: &[ResultRecord], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in records {
        w.serialize(CsvRow {
            scheme: r.scheme.name(),
            sweep_param: r.sweep_param.name(),
            sweep_value: r.sweep_value,
            seed: r.seed,
            t_seconds: r.t_seconds,
            t_normalized: r.t_normalized,
            flag: &r.flag,
        })?;
    }
    w.flush()?;
    Ok(())
}

pub fn records_to_csv(records: &[ResultRecord]) -> Result<String> {
    let mut buf = Vec::new();
    write_csv(records, &mut buf)?;
    Ok(String::from_utf8(buf).expect("csv output is UTF-8"))
}

struct Outcome {
    t: f64,
    flag: String,
    diag: Diagnostics,
}

fn run_topological(
    scheme: Scheme,
    layout: &Layout,
    cache: &CacheScheme,
    seed: u64,
    file_bits: f64,
) -> Result<Outcome> {
    let (graph, _) = build_topological_graph(layout);
    let assignment = assign_caches(graph.users(), cache.groups, seed ^ ASSIGNMENT_SALT);
    let opts = RoutingOptions::default();
    let sol = match scheme {
        Scheme::Central => solve_centralized_routing(&graph, cache.replication, file_bits, &opts)?,
        Scheme::Multiround => solve_multiround_routing(&graph, &assignment, cache, file_bits, &opts)?,
        Scheme::NewLp => solve_new_decentralized_routing(&graph, &assignment, cache, file_bits, &opts)?,
        _ => unreachable!("collision scheme in topological run"),
    };
    Ok(Outcome {
        t: sol.t_total,
        flag: String::new(),
        diag: Diagnostics {
            helpers: graph.helpers(),
            users: graph.users(),
            lp_solves: Some(sol.lp_solves),
            routing_json: Some(sol.to_json()?),
            ..Diagnostics::default()
        },
    })
}

fn run_collision(scheme: Scheme, layout: &Layout, cache: &CacheScheme, seed: u64, file_bits: f64) -> Result<Outcome> {
    let (covered, _) = layout.retain_cell_covered();
    let cg = build_collision_graph(&covered)?;
    let assignment = assign_caches(cg.users, cache.groups, seed ^ ASSIGNMENT_SALT);
    let mut diag = Diagnostics {
        helpers: cg.helpers,
        users: cg.users,
        ..Diagnostics::default()
    };
    let mut flag = String::new();
    let t = if scheme == Scheme::Avalanche {
        let out = avalanche_run(&cg, &assignment, cache, file_bits)?;
        diag.max_slots = Some(out.slots);
        out.t_seconds
    } else {
        let conflicts = build_helper_conflict_graph(&cg);
        let (coloring, association) = match scheme {
            Scheme::ReuseExact => {
                let coloring = color_exact(&conflicts).unwrap_or_else(|e| {
                    flag = format!("fallback: {e}");
                    color_dsatur(&conflicts)
                });
                let association = match associate_exact(&cg, &assignment, cache) {
                    Ok(a) => a,
                    Err(e @ (Error::SizeGate(_) | Error::ExactSolveAbandoned { .. })) => {
                        flag = format!("fallback: {e}");
                        associate_greedy(&cg, &assignment, cache)?
                    }
                    Err(e) => return Err(e),
                };
                (coloring, association)
            }
            Scheme::ReuseDsaturGreedy => (color_dsatur(&conflicts), associate_greedy(&cg, &assignment, cache)?),
            Scheme::ReuseRandom => (color_dsatur(&conflicts), associate_random(&cg, seed ^ ASSOCIATION_SALT)?),
            _ => unreachable!("topological scheme in collision run"),
        };
        let out = reuse_outcome(&cg, &assignment, cache, coloring, association, file_bits);
        diag.colors = Some(out.coloring.colors);
        diag.max_slots = Some(out.max_slots);
        out.t_seconds
    };
    Ok(Outcome { t, flag, diag })
}

/// Runs one scheme on one instance; failures become flagged records.
pub fn run_instance(cfg: &ExperimentConfig, scheme: Scheme, value: f64, instance: usize) -> ResultRecord {
    let seed = cfg.base_seed.wrapping_add(instance as u64);
    let point = cfg.point(value);
    let outcome = cfg.scheme_at(value).and_then(|cache| {
        let layout = generate_layout(&cfg.layout_params(&point), seed);
        match cfg.model {
            Model::Topological => run_topological(scheme, &layout, &cache, seed, cfg.file_bits),
            Model::Collision => run_collision(scheme, &layout, &cache, seed, cfg.file_bits),
        }
    });
    let (t, flag, diagnostics) = match outcome {
        Ok(o) if o.t.is_finite() && o.t >= 0.0 => (Some(o.t), o.flag, o.diag),
        Ok(o) => (None, format!("error: non-finite time {}", o.t), o.diag),
        Err(e) => (None, format!("error: {e}"), Diagnostics::default()),
    };
    ResultRecord {
        scheme,
        sweep_param: cfg.sweep_param(),
        sweep_value: value,
        seed,
        t_seconds: t,
        t_normalized: t.map(|t| t * point.c_front / cfg.file_bits),
        flag,
        diagnostics,
    }
}

/// Every (scheme, sweep value, instance) combination, computed in parallel
/// and returned sorted by (scheme order in the config, sweep value order, seed).
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Vec<ResultRecord>> {
    cfg.validate()?;
    let values = cfg.sweep_values();
    let jobs: Vec<(usize, usize, usize)> = (0..cfg.schemes.len())
        .flat_map(|s| (0..values.len()).flat_map(move |v| (0..cfg.instances).map(move |i| (s, v, i))))
        .collect();
    let mut records: Vec<((usize, usize, usize), ResultRecord)> = jobs
        .par_iter()
        .map(|&(s, v, i)| ((s, v, i), run_instance(cfg, cfg.schemes[s], values[v], i)))
        .collect();
    records.sort_by_key(|r| r.0);
    Ok(records.into_iter().map(|r| r.1).collect())
}

/// Writes the aggregated routing programs of the first instance of every
/// sweep value, for cross-checking with an external LP solver.
pub fn dump_programs(cfg: &ExperimentConfig, dir: &Path) -> Result<Vec<std::path::PathBuf>> {
    if cfg.model != Model::Topological {
        return Err(Error::Config("LP export applies to the topological model".into()));
    }
    std::fs::create_dir_all(dir)?;
    let seed = cfg.base_seed;
    let mut written = Vec::new();
    for value in cfg.sweep_values() {
        let cache = cfg.scheme_at(value)?;
        let layout = generate_layout(&cfg.layout_params(&cfg.point(value)), seed);
        let (graph, _) = build_topological_graph(&layout);
        let assignment = assign_caches(graph.users(), cache.groups, seed ^ ASSIGNMENT_SALT);
        for scheme in &cfg.schemes {
            let programs = match routing_programs(scheme.name(), &graph, &assignment, &cache) {
                Ok(p) => p,
                Err(e @ Error::SizeGate(_)) => {
                    log::warn!("skipping LP export for {scheme}: {e}");
                    continue;
                }
                Err(e) => return Err(e),
            };
            for (name, lp) in programs {
                let path = dir.join(format!("{name}_{}{value}_seed{seed}.lp", cfg.sweep_param().name()));
                std::fs::write(&path, lp.to_lp_format())?;
                written.push(path);
            }
        }
    }
    Ok(written)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Summary {
    pub scheme: String,
    pub sweep_param: String,
    pub sweep_value: f64,
    pub mean: f64,
    pub stderr: f64,
    pub count: usize,
    pub excluded: usize,
}

/// Mean and standard error per (scheme, sweep value) over unflagged rows.
pub fn summarize(records: &[ResultRecord]) -> Vec<Summary> {
    let mut keys: Vec<(Scheme, u64, SweepParam)> = Vec::new();
    for r in records {
        let key = (r.scheme, r.sweep_value.to_bits(), r.sweep_param);
        if !keys.contains(&key) {
            keys.push(key);
        }
    }
    keys.into_iter()
        .map(|(scheme, bits, param)| {
            let rows: Vec<&ResultRecord> = records
                .iter()
                .filter(|r| r.scheme == scheme && r.sweep_value.to_bits() == bits && r.sweep_param == param)
                .collect();
            let values: Vec<f64> = rows.iter().filter(|r| r.flag.is_empty()).filter_map(|r| r.t_seconds).collect();
            let n = values.len();
            let mean = if n > 0 { values.iter().sum::<f64>() / n as f64 } else { f64::NAN };
            let stderr = if n > 1 {
                let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
                (var / n as f64).sqrt()
            } else {
                0.0
            };
            Summary {
                scheme: scheme.name().into(),
                sweep_param: param.name().into(),
                sweep_value: f64::from_bits(bits),
                mean,
                stderr,
                count: n,
                excluded: rows.len() - n,
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    const CONFIG: &str = r#"
model = "collision"
schemes = ["reuse-dsatur+greedy", "avalanche"]
instances = 2
base_seed = 5
mu = 0.25
groups = 4

[sweep]
param = "L"
values = [4, 8]

[layout]
region_radius_m = 400.0
"#;

    #[test]
    fn parses_and_validates() {
        let cfg = ExperimentConfig::from_toml(CONFIG).unwrap();
        assert_eq!(cfg.schemes, vec![Scheme::ReuseDsaturGreedy, Scheme::Avalanche]);
        assert_eq!(cfg.layout.a_cell_m, 200.0);
        assert_eq!(cfg.scheme_at(8.0).unwrap().replication, 2);
        let back = ExperimentConfig::from_toml(&cfg.to_toml().unwrap()).unwrap();
        assert_eq!(back, cfg);

        let bad = CONFIG.replace("mu = 0.25", "mu = 0.3");
        assert!(matches!(ExperimentConfig::from_toml(&bad), Err(Error::Config(_))));
        let wrong_model = CONFIG.replace("\"avalanche\"", "\"new-lp\"");
        assert!(ExperimentConfig::from_toml(&wrong_model).is_err());
        let typo = CONFIG.replace("instances", "instancs");
        assert!(ExperimentConfig::from_toml(&typo).is_err());
    }

    #[test]
    fn rows_per_sweep_value_and_determinism() {
        let cfg = ExperimentConfig::from_toml(CONFIG).unwrap();
        let a = run_experiment(&cfg).unwrap();
        assert_eq!(a.len(), 2 * 2 * 2);
        assert!(a.iter().all(|r| r.flag.is_empty()), "{a:?}");
        let b = run_experiment(&cfg).unwrap();
        assert_eq!(records_to_csv(&a).unwrap(), records_to_csv(&b).unwrap());
        let csv = records_to_csv(&a).unwrap();
        assert!(csv.starts_with("scheme,sweep_param,sweep_value,seed,t_seconds,t_normalized,flag\n"));
    }

    fn record(t: Option<f64>, flag: &str) -> ResultRecord {
        ResultRecord {
            scheme: Scheme::Avalanche,
            sweep_param: SweepParam::Groups,
            sweep_value: 4.0,
            seed: 0,
            t_seconds: t,
            t_normalized: t,
            flag: flag.into(),
            diagnostics: Diagnostics::default(),
        }
    }

    #[test]
    fn summary_statistics() {
        let same = summarize(&[record(Some(2.0), ""), record(Some(2.0), "")]);
        assert_eq!((same[0].mean, same[0].stderr, same[0].count), (2.0, 0.0, 2));
        let single = summarize(&[record(Some(3.0), "")]);
        assert_eq!(single[0].count, 1);
        let flagged = summarize(&[record(Some(1.0), ""), record(None, "error: x"), record(Some(9.0), "fallback: y")]);
        assert_eq!((flagged[0].count, flagged[0].excluded, flagged[0].mean), (1, 2, 1.0));
    }
}
