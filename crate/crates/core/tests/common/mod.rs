#![allow(dead_code)]

use std::collections::HashMap;

use cachecast::combin::Subset;
use cachecast::model::{
    decode_at_user, deliver_over_helpers, plan_segments, prefetch, CacheAssignment, DemandVector, Library,
    LibraryParams, subpacketize,
};
use cachecast::scenario::{build_collision_graph, generate_layout, CollisionGraph, Layout, LayoutParams};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Segment plan keyed by (user, message subset): (helper, start, len) pieces.
pub type SegmentPlan = HashMap<(usize, Subset), Vec<(usize, usize, usize)>>;

pub struct CodecCase {
    pub library: Library,
    pub assignment: CacheAssignment,
    pub demand: DemandVector,
    pub users_of: Vec<Vec<usize>>,
}

/// Random library, cache assignment, demand and helper coverage within the
/// given size limits.
pub fn random_codec_case(seed: u64, max_users: usize, max_groups: usize, max_files: usize, max_bits: usize) -> CodecCase {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let users = rng.random_range(1..=max_users);
    let groups = rng.random_range(1..=max_groups);
    let files = rng.random_range(1..=max_files);
    let t = rng.random_range(0..=groups);
    let params_probe = LibraryParams::new(files, 1, t as f64 * files as f64 / groups as f64).unwrap();
    let order = subpacketize(&params_probe, groups).unwrap().order() as usize;
    let file_bits = order * rng.random_range(1..=max_bits / order);
    let params = LibraryParams::new(files, file_bits, params_probe.cache_files).unwrap();
    let scheme = subpacketize(&params, groups).unwrap();
    let library = Library::random(params, scheme, &mut rng).unwrap();
    let assignment =
        CacheAssignment::from_groups((0..users).map(|_| rng.random_range(0..groups)).collect(), groups).unwrap();
    let demand = DemandVector((0..users).map(|_| rng.random_range(0..files)).collect());
    let helpers = rng.random_range(1..=3);
    let mut users_of = vec![Vec::new(); helpers];
    for k in 0..users {
        let mask = rng.random_range(1u32..(1 << helpers));
        for (h, list) in users_of.iter_mut().enumerate() {
            if mask >> h & 1 == 1 {
                list.push(k);
            }
        }
    }
    CodecCase {
        library,
        assignment,
        demand,
        users_of,
    }
}

/// Runs placement, delivery along `plan` and decoding for every user.
/// Returns the first user whose decoded file differs, as an error string.
pub fn deliver_and_decode(case: &CodecCase, plan: &SegmentPlan) -> Result<usize, String> {
    let lib = &case.library;
    let rec = deliver_over_helpers(lib, &case.assignment, &case.demand, &case.users_of, |k, s, h| {
        plan.get(&(k, s))
            .and_then(|pieces| pieces.iter().find(|p| p.0 == h))
            .map(|&(_, start, len)| (start, len))
    })
    .map_err(|e| e.to_string())?;
    for k in 0..case.assignment.users() {
        let cache = prefetch(lib, case.assignment.group_of[k]).map_err(|e| e.to_string())?;
        let file = decode_at_user(k, &case.demand, &cache, &rec.portions[k], &lib.scheme, lib.subfile_bits())
            .map_err(|e| format!("user {k}: {e}"))?;
        if file != lib.files[case.demand.file_of(k)] {
            return Err(format!("user {k} decoded a wrong file"));
        }
    }
    Ok(rec.messages.len())
}

/// Random split of every needed subfile over the helpers reaching its user.
pub fn random_plan(case: &CodecCase, seed: u64) -> SegmentPlan {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut plan = SegmentPlan::new();
    let sub = case.library.subfile_bits();
    for s in case.library.scheme.multicast_subsets() {
        for k in 0..case.assignment.users() {
            if !s.contains(case.assignment.group_of[k]) {
                continue;
            }
            let shares: Vec<(usize, f64)> = (0..case.users_of.len())
                .filter(|&h| case.users_of[h].contains(&k))
                .map(|h| (h, rng.random_range(0.0..1.0)))
                .collect();
            plan.insert((k, s), plan_segments(sub, &shares));
        }
    }
    plan
}

pub fn layout_params(radius_m: f64, lambda_helpers: f64, lambda_users: f64) -> LayoutParams {
    LayoutParams {
        region_radius_m: radius_m,
        lambda_helpers,
        lambda_users,
        ..LayoutParams::default()
    }
}

/// Users reached by more than one solid edge.
pub fn ambiguous_users(cg: &CollisionGraph) -> usize {
    let cells = cg.cell_users();
    (0..cg.users)
        .filter(|&k| cells.iter().filter(|c| c.contains(&k)).count() > 1)
        .count()
}

/// Collision instance with every user inside a cell, from the layout drawn
/// with `seed`.
pub fn covered_collision_instance(params: &LayoutParams, seed: u64) -> (Layout, CollisionGraph) {
    let (layout, _) = generate_layout(params, seed).retain_cell_covered();
    let cg = build_collision_graph(&layout).expect("covered users only");
    (layout, cg)
}
