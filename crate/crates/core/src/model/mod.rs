//! File library, cache-replication placement and the MAN delivery load.
//!
//! Users, files and cache configurations are 0-based throughout. In pure-MAN
//! mode every user holds its own configuration, so a [`CacheScheme`] built
//! with `groups == K` doubles as the classic MAN placement.

mod codec;

pub use codec::{
    decode_at_user, deliver_over_helpers, encode_group_xor, man_xor_messages, plan_segments,
    prefetch, Bits, DeliveryRecord, ForwardedPortion, GroupComponent, Interference, Library,
    MessagePart, SegmentDescriptor, SegmentRequest, UserCache, XorMessage,
};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::combin::{binomial, subsets, Subset};
use crate::error::{Error, Result};

const INTEGRALITY_TOL: f64 = 1e-9;

/// `N` files of `F` bits each; every user caches `M` files worth of bits.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LibraryParams {
    pub files: usize,
    pub file_bits: usize,
    pub cache_files: f64,
}

impl LibraryParams {
    pub fn new(files: usize, file_bits: usize, cache_files: f64) -> Result<Self> {
        let p = LibraryParams {
            files,
            file_bits,
            cache_files,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if self.files == 0 {
            return Err(Error::InvalidParams("library needs at least one file".into()));
        }
        if self.file_bits == 0 {
            return Err(Error::InvalidParams("file size must be positive".into()));
        }
        if !(0.0..=self.files as f64).contains(&self.cache_files) {
            return Err(Error::InvalidParams(format!(
                "cache size M = {} outside [0, {}]",
                self.cache_files, self.files
            )));
        }
        Ok(())
    }

    /// Fractional cache size `M/N`.
    pub fn mu(&self) -> f64 {
        self.cache_files / self.files as f64
    }
}

/// MAN placement over `groups` virtual users with replication `t' = L*M/N`.
#[derive(Clone, Debug, PartialEq)]
pub struct CacheScheme {
    pub groups: usize,
    pub replication: usize,
    /// All `t'`-subsets of the groups, lexicographic.
    pub subsets: Vec<Subset>,
}

impl CacheScheme {
    /// Builds the scheme directly from `(L, t')`.
    pub fn new(groups: usize, replication: usize) -> Result<Self> {
        if groups == 0 || groups > 64 {
            return Err(Error::InvalidParams(format!(
                "number of cache configurations {groups} outside [1, 64]"
            )));
        }
        if replication > groups {
            return Err(Error::InvalidParams(format!(
                "replication {replication} exceeds {groups} configurations"
            )));
        }
        Ok(CacheScheme {
            groups,
            replication,
            subsets: subsets(groups, replication),
        })
    }

    /// Subpacketization order `C(L, t')`.
    pub fn order(&self) -> u64 {
        binomial(self.groups, self.replication)
    }

    /// Number of multicast subsets `C(L, t'+1)`.
    pub fn multicast_count(&self) -> u64 {
        binomial(self.groups, self.replication + 1)
    }

    pub fn multicast_subsets(&self) -> Vec<Subset> {
        subsets(self.groups, self.replication + 1)
    }

    /// Position of a `t'`-subset in the canonical order.
    pub fn index_of(&self, subset: Subset) -> Option<usize> {
        self.subsets.binary_search(&subset).ok()
    }

    /// Bits per subfile; `F` must be a multiple of `C(L, t')`.
    pub fn subfile_bits(&self, file_bits: usize) -> Result<usize> {
        let order = self.order();
        if !(file_bits as u64).is_multiple_of(order) {
            return Err(Error::IndivisibleFileSize {
                bits: file_bits,
                order,
            });
        }
        Ok((file_bits as u64 / order) as usize)
    }

    /// Smallest multiple of `C(L, t')` that is at least `file_bits`.
    pub fn round_up_file_bits(&self, file_bits: usize) -> usize {
        let order = self.order() as usize;
        file_bits.div_ceil(order) * order
    }
}

/// Computes `t' = L*M/N` and enumerates the subfile index subsets.
pub fn subpacketize(params: &LibraryParams, groups: usize) -> Result<CacheScheme> {
    params.validate()?;
    let value = groups as f64 * params.cache_files / params.files as f64;
    let rounded = value.round();
    if (value - rounded).abs() > INTEGRALITY_TOL || rounded < 0.0 || rounded > groups as f64 {
        return Err(Error::NonIntegerReplication {
            groups,
            cache_files: params.cache_files,
            files: params.files,
            value,
        });
    }
    CacheScheme::new(groups, rounded as usize)
}

/// Subfile `W_{file, subset}`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct SubfileId {
    pub file: usize,
    pub subset: Subset,
}

/// Subfiles held by cache configuration `group`: every `W_{i,T}` with `group ∈ T`.
pub fn build_cache_configuration(
    scheme: &CacheScheme,
    group: usize,
    params: &LibraryParams,
) -> Result<Vec<SubfileId>> {
    if group >= scheme.groups {
        return Err(Error::GroupOutOfRange {
            index: group,
            groups: scheme.groups,
        });
    }
    let mut out = Vec::new();
    for file in 0..params.files {
        for &subset in scheme.subsets.iter().filter(|s| s.contains(group)) {
            out.push(SubfileId { file, subset });
        }
    }
    Ok(out)
}

/// Which cache configuration each user loaded.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CacheAssignment {
    pub groups: usize,
    pub group_of: Vec<usize>,
    pub partition: Vec<Vec<usize>>,
}

impl CacheAssignment {
    pub fn from_groups(group_of: Vec<usize>, groups: usize) -> Result<Self> {
        let mut partition = vec![Vec::new(); groups];
        for (user, &g) in group_of.iter().enumerate() {
            if g >= groups {
                return Err(Error::GroupOutOfRange { index: g, groups });
            }
            partition[g].push(user);
        }
        Ok(CacheAssignment {
            groups,
            group_of,
            partition,
        })
    }

    pub fn users(&self) -> usize {
        self.group_of.len()
    }

    /// Keeps only `users` (original ids), renumbering them `0..users.len()`.
    pub fn restrict(&self, users: &[usize]) -> CacheAssignment {
        let group_of = users.iter().map(|&u| self.group_of[u]).collect();
        CacheAssignment::from_groups(group_of, self.groups).expect("groups already validated")
    }
}

/// Decentralized prefetching: each user independently picks a configuration
/// uniformly at random.
pub fn assign_caches(users: usize, groups: usize, seed: u64) -> CacheAssignment {
    assert!(groups >= 1, "need at least one cache configuration");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let group_of = (0..users).map(|_| rng.random_range(0..groups)).collect();
    CacheAssignment::from_groups(group_of, groups).expect("sampled groups are in range")
}

/// File requested by each user.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DemandVector(pub Vec<usize>);

impl DemandVector {
    /// Distinct demands `d_k = k mod N`.
    pub fn worst_case(users: usize, files: usize) -> Self {
        DemandVector((0..users).map(|k| k % files).collect())
    }

    pub fn validate(&self, files: usize) -> Result<()> {
        match self.0.iter().find(|&&d| d >= files) {
            Some(d) => Err(Error::InvalidParams(format!(
                "demand for file {d} outside library of {files} files"
            ))),
            None => Ok(()),
        }
    }

    pub fn file_of(&self, user: usize) -> usize {
        self.0[user]
    }
}

/// Normalized MAN delivery load `(K - t)/(1 + t)`.
pub fn man_load(users: usize, replication: usize) -> f64 {
    assert!(replication <= users, "replication exceeds user count");
    (users - replication) as f64 / (1 + replication) as f64
}
