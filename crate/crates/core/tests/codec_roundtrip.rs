mod common;

use cachecast::model::{assign_caches, CacheScheme, DemandVector, Library, LibraryParams};
use cachecast::scenario::TopologicalGraph;
use cachecast::topo::{solve_new_decentralized_routing, RoutingOptions};
use common::{deliver_and_decode, random_codec_case, random_plan, CodecCase, SegmentPlan};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn random_split_round_trips(seed in any::<u64>(), split in any::<u64>()) {
        let case = random_codec_case(seed, 8, 4, 4, 1024);
        let plan = random_plan(&case, split);
        prop_assert!(deliver_and_decode(&case, &plan).is_ok(), "{:?}", deliver_and_decode(&case, &plan));
    }
}

#[test]
fn dropped_segment_is_detected() {
    for seed in 0..20 {
        let case = random_codec_case(seed, 6, 3, 3, 512);
        let mut plan = random_plan(&case, seed);
        let Some(key) = plan.iter().filter(|(_, p)| !p.is_empty()).map(|(k, _)| *k).min() else {
            continue;
        };
        plan.get_mut(&key).unwrap().pop();
        assert!(deliver_and_decode(&case, &plan).is_err(), "seed {seed}");
    }
}

/// Splits computed by the new-scheme LP drive a bit-exact delivery.
#[test]
fn routed_shares_round_trip() {
    let users_of = vec![vec![0, 1, 2], vec![2, 3, 4], vec![4, 5, 0]];
    let graph = TopologicalGraph::from_users_of(users_of.clone(), 6, 1.0, 2.0).unwrap();
    let scheme = CacheScheme::new(3, 1).unwrap();
    let assignment = assign_caches(6, 3, 21);
    let sol = solve_new_decentralized_routing(&graph, &assignment, &scheme, 1.0, &RoutingOptions::default()).unwrap();

    let params = LibraryParams::new(3, scheme.order() as usize * 240, 1.0).unwrap();
    let library = Library::random(params, scheme.clone(), &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
    let sub = library.subfile_bits();
    let mut shares: std::collections::BTreeMap<_, Vec<(usize, f64)>> = Default::default();
    for s in &sol.shares {
        shares.entry((s.user.unwrap(), s.subset)).or_default().push((s.helper, s.value));
    }
    let plan: SegmentPlan = shares
        .into_iter()
        .map(|(key, parts)| (key, cachecast::model::plan_segments(sub, &parts)))
        .collect();
    let case = CodecCase {
        library,
        assignment,
        demand: DemandVector::worst_case(6, 3),
        users_of,
    };
    deliver_and_decode(&case, &plan).unwrap();
}
