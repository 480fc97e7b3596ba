//! Python module `cachecast`.

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;

use cachecast::collision::{
    associate_exact, associate_greedy, associate_random, avalanche_run, color_dsatur, color_exact, replay_trace,
    reuse_outcome,
};
use cachecast::harness::{records_to_csv, run_experiment, ExperimentConfig};
use cachecast::model::{assign_caches, man_load, CacheAssignment, CacheScheme};
use cachecast::multiround::multiround_slots;
use cachecast::scenario::{
    build_collision_graph, build_helper_conflict_graph, build_topological_graph, fixtures, generate_layout,
    CollisionGraph, LayoutParams,
};
use cachecast::topo::{
    solve_centralized_routing, solve_multiround_routing, solve_new_decentralized_routing, RoutingOptions,
};

fn py_err(e: cachecast::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

/// Helper and user positions in meters plus radii and capacities.
#[pyclass(name = "Layout", module = "cachecast")]
#[derive(Clone)]
struct PyLayout {
    inner: cachecast::scenario::Layout,
}

#[pymethods]
impl PyLayout {
    #[staticmethod]
    #[pyo3(signature = (seed, lambda_helpers=7.0, lambda_users=140.0, region_radius_m=1000.0, c_front_bps=1.0, c_access_bps=1.0))]
    fn generate(
        seed: u64,
        lambda_helpers: f64,
        lambda_users: f64,
        region_radius_m: f64,
        c_front_bps: f64,
        c_access_bps: f64,
    ) -> Self {
        let params = LayoutParams {
            lambda_helpers,
            lambda_users,
            region_radius_m,
            c_front_bps,
            c_access_bps,
            ..LayoutParams::default()
        };
        Self {
            inner: generate_layout(&params, seed),
        }
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        let inner = cachecast::scenario::Layout::from_json(text).map_err(py_err)?;
        Ok(Self { inner })
    }

    /// The six-user, four-helper instance used in the examples.
    #[staticmethod]
    fn collision_example() -> Self {
        Self {
            inner: fixtures::collision_example(),
        }
    }

    fn to_json(&self) -> PyResult<String> {
        self.inner.to_json().map_err(py_err)
    }

    /// Copy without users outside every cell, and the kept user indices.
    fn retain_cell_covered(&self) -> (Self, Vec<usize>) {
        let (inner, kept) = self.inner.retain_cell_covered();
        (Self { inner }, kept)
    }

    #[getter]
    fn helpers(&self) -> Vec<(f64, f64)> {
        self.inner.helpers.iter().map(|p| (p.x, p.y)).collect()
    }

    #[getter]
    fn users(&self) -> Vec<(f64, f64)> {
        self.inner.users.iter().map(|p| (p.x, p.y)).collect()
    }

    fn __repr__(&self) -> String {
        format!(
            "Layout(helpers={}, users={}, region_radius_m={})",
            self.inner.helpers.len(),
            self.inner.users.len(),
            self.inner.region_radius_m
        )
    }
}

#[pyclass(name = "RoutingSolution", module = "cachecast", get_all)]
struct PyRoutingSolution {
    scheme: String,
    alpha: f64,
    t_front: f64,
    t_access: f64,
    t_total: f64,
    lp_solves: usize,
    json: String,
}

#[pyclass(name = "ReuseResult", module = "cachecast", get_all)]
struct PyReuseResult {
    colors: usize,
    color_of: Vec<usize>,
    helper_of: Vec<usize>,
    max_slots: u64,
    t_seconds: f64,
}

#[pyclass(name = "AvalancheResult", module = "cachecast", get_all)]
struct PyAvalancheResult {
    slots: u64,
    t_slot: f64,
    t_seconds: f64,
    trace_jsonl: String,
    replay_clean: bool,
}

fn cache(groups: usize, replication: usize) -> PyResult<CacheScheme> {
    CacheScheme::new(groups, replication).map_err(py_err)
}

fn assignment_for(users: usize, groups: usize, group_of: Option<Vec<usize>>, seed: u64) -> PyResult<CacheAssignment> {
    match group_of {
        Some(g) if g.len() != users => Err(PyValueError::new_err(format!(
            "{} group labels for {users} users",
            g.len()
        ))),
        Some(g) => CacheAssignment::from_groups(g, groups).map_err(py_err),
        None => Ok(assign_caches(users, groups, seed)),
    }
}

fn collision_setup(
    layout: &PyLayout,
    groups: usize,
    replication: usize,
    group_of: Option<Vec<usize>>,
    seed: u64,
) -> PyResult<(CollisionGraph, CacheAssignment, CacheScheme)> {
    let cg = build_collision_graph(&layout.inner).map_err(py_err)?;
    let scheme = cache(groups, replication)?;
    let assignment = assignment_for(cg.users, groups, group_of, seed)?;
    Ok((cg, assignment, scheme))
}

/// Min-max routing on the topological graph of `layout`.
///
/// `scheme` is one of "central", "multiround", "new-lp". Uncovered users are
/// dropped; `group_of` is indexed by layout user.
#[pyfunction]
#[pyo3(signature = (layout, scheme, groups, replication, group_of=None, seed=0, file_bits=1.0))]
fn route(
    layout: &PyLayout,
    scheme: &str,
    groups: usize,
    replication: usize,
    group_of: Option<Vec<usize>>,
    seed: u64,
    file_bits: f64,
) -> PyResult<PyRoutingSolution> {
    let (graph, _) = build_topological_graph(&layout.inner);
    let cache_scheme = cache(groups, replication)?;
    let group_of = match group_of {
        Some(g) if g.len() != layout.inner.users.len() => {
            return Err(PyValueError::new_err("group_of must have one label per layout user"))
        }
        Some(g) => Some(graph.user_ids.iter().map(|&k| g[k]).collect()),
        None => None,
    };
    let assignment = assignment_for(graph.users(), groups, group_of, seed)?;
    let opts = RoutingOptions::default();
    let sol = match scheme {
        "central" => solve_centralized_routing(&graph, replication, file_bits, &opts),
        "multiround" => solve_multiround_routing(&graph, &assignment, &cache_scheme, file_bits, &opts),
        "new-lp" => solve_new_decentralized_routing(&graph, &assignment, &cache_scheme, file_bits, &opts),
        other => return Err(PyValueError::new_err(format!("unknown routing scheme {other:?}"))),
    }
    .map_err(py_err)?;
    Ok(PyRoutingSolution {
        json: sol.to_json().map_err(py_err)?,
        scheme: sol.scheme,
        alpha: sol.alpha,
        t_front: sol.t_front,
        t_access: sol.t_access,
        t_total: sol.t_total,
        lp_solves: sol.lp_solves,
    })
}

/// Reuse scheme: coloring plus association; `method` is "exact", "greedy" or "random".
#[pyfunction]
#[pyo3(signature = (layout, groups, replication, group_of=None, method="greedy", seed=0, file_bits=1.0))]
fn reuse(
    layout: &PyLayout,
    groups: usize,
    replication: usize,
    group_of: Option<Vec<usize>>,
    method: &str,
    seed: u64,
    file_bits: f64,
) -> PyResult<PyReuseResult> {
    let (cg, assignment, scheme) = collision_setup(layout, groups, replication, group_of, seed)?;
    let conflicts = build_helper_conflict_graph(&cg);
    let (coloring, association) = match method {
        "exact" => (
            color_exact(&conflicts).map_err(py_err)?,
            associate_exact(&cg, &assignment, &scheme).map_err(py_err)?,
        ),
        "greedy" => (
            color_dsatur(&conflicts),
            associate_greedy(&cg, &assignment, &scheme).map_err(py_err)?,
        ),
        "random" => (color_dsatur(&conflicts), associate_random(&cg, seed).map_err(py_err)?),
        other => return Err(PyValueError::new_err(format!("unknown method {other:?}"))),
    };
    let out = reuse_outcome(&cg, &assignment, &scheme, coloring, association, file_bits);
    Ok(PyReuseResult {
        colors: out.coloring.colors,
        color_of: out.coloring.color_of,
        helper_of: out.association.helper_of,
        max_slots: out.max_slots,
        t_seconds: out.t_seconds,
    })
}

/// Avalanche scheduler; the trace is replayed before returning.
#[pyfunction]
#[pyo3(signature = (layout, groups, replication, group_of=None, seed=0, file_bits=1.0))]
fn avalanche(
    layout: &PyLayout,
    groups: usize,
    replication: usize,
    group_of: Option<Vec<usize>>,
    seed: u64,
    file_bits: f64,
) -> PyResult<PyAvalancheResult> {
    let (cg, assignment, scheme) = collision_setup(layout, groups, replication, group_of, seed)?;
    let out = avalanche_run(&cg, &assignment, &scheme, file_bits).map_err(py_err)?;
    let report = replay_trace(&out.trace, &cg, &assignment, &scheme);
    Ok(PyAvalancheResult {
        slots: out.slots,
        t_slot: out.t_slot,
        t_seconds: out.t_seconds,
        trace_jsonl: out.trace.to_jsonl().map_err(py_err)?,
        replay_clean: report.is_clean(),
    })
}

/// Slots of multiround delivery for the given per-group user counts.
#[pyfunction(name = "multiround_slots")]
fn py_multiround_slots(occupancies: Vec<usize>, replication: usize) -> u64 {
    multiround_slots(&occupancies, replication)
}

/// Normalized delivery load of the single-server scheme.
#[pyfunction(name = "man_load")]
fn py_man_load(users: usize, replication: usize) -> PyResult<f64> {
    if replication > users {
        return Err(PyValueError::new_err("replication exceeds user count"));
    }
    Ok(man_load(users, replication))
}

/// Runs a TOML experiment config and returns the results CSV.
#[pyfunction]
fn run_config(py: Python<'_>, config_toml: &str) -> PyResult<String> {
    let cfg = ExperimentConfig::from_toml(config_toml).map_err(py_err)?;
    let records = py.detach(|| run_experiment(&cfg)).map_err(py_err)?;
    records_to_csv(&records).map_err(py_err)
}

#[pymodule(name = "cachecast")]
fn cachecast_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyLayout>()?;
    m.add_class::<PyRoutingSolution>()?;
    m.add_class::<PyReuseResult>()?;
    m.add_class::<PyAvalancheResult>()?;
    m.add_function(wrap_pyfunction!(route, m)?)?;
    m.add_function(wrap_pyfunction!(reuse, m)?)?;
    m.add_function(wrap_pyfunction!(avalanche, m)?)?;
    m.add_function(wrap_pyfunction!(py_multiround_slots, m)?)?;
    m.add_function(wrap_pyfunction!(py_man_load, m)?)?;
    m.add_function(wrap_pyfunction!(run_config, m)?)?;
    m.add("COLLISION_EXAMPLE_GROUPS", fixtures::COLLISION_EXAMPLE_GROUPS.to_vec())?;
    Ok(())
}
