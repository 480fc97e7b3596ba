//! Bit-level library, group-XOR encoding with zero padding, and cache-out decoding.

use std::collections::BTreeMap;

use bitvec::prelude::*;
use rand::Rng;

use super::{CacheAssignment, CacheScheme, DemandVector, LibraryParams, SubfileId};
use crate::combin::Subset;
use crate::error::{Error, Result};

pub type Bits = BitVec<u64, Lsb0>;

/// Concrete file contents, split into subfiles according to a [`CacheScheme`].
#[derive(Clone, Debug)]
pub struct Library {
    pub params: LibraryParams,
    pub scheme: CacheScheme,
    pub files: Vec<Bits>,
    subfile_bits: usize,
}

impl Library {
    pub fn new(params: LibraryParams, scheme: CacheScheme, files: Vec<Bits>) -> Result<Self> {
        params.validate()?;
        let subfile_bits = scheme.subfile_bits(params.file_bits)?;
        if files.len() != params.files || files.iter().any(|f| f.len() != params.file_bits) {
            return Err(Error::InvalidParams(format!(
                "expected {} files of {} bits",
                params.files, params.file_bits
            )));
        }
        Ok(Library {
            params,
            scheme,
            files,
            subfile_bits,
        })
    }

    pub fn random<R: Rng + ?Sized>(
        params: LibraryParams,
        scheme: CacheScheme,
        rng: &mut R,
    ) -> Result<Self> {
        let files = (0..params.files)
            .map(|_| (0..params.file_bits).map(|_| rng.random::<bool>()).collect())
            .collect();
        Library::new(params, scheme, files)
    }

    pub fn subfile_bits(&self) -> usize {
        self.subfile_bits
    }

    pub fn subfile(&self, id: SubfileId) -> Result<&BitSlice<u64, Lsb0>> {
        let idx = self.scheme.index_of(id.subset).ok_or_else(|| {
            Error::InvalidParams(format!("{} is not a subfile index subset", id.subset))
        })?;
        let file = self
            .files
            .get(id.file)
            .ok_or_else(|| Error::InvalidParams(format!("file {} out of range", id.file)))?;
        Ok(&file[idx * self.subfile_bits..(idx + 1) * self.subfile_bits])
    }
}

/// Contents of one user's cache after prefetching configuration `group`.
#[derive(Clone, Debug)]
pub struct UserCache {
    pub group: usize,
    pub subfiles: BTreeMap<SubfileId, Bits>,
}

impl UserCache {
    pub fn get(&self, id: SubfileId) -> Option<&Bits> {
        self.subfiles.get(&id)
    }

    pub fn total_bits(&self) -> usize {
        self.subfiles.values().map(|b| b.len()).sum()
    }
}

/// Placement phase: copy every subfile of configuration `group` into the cache.
pub fn prefetch(library: &Library, group: usize) -> Result<UserCache> {
    let ids = super::build_cache_configuration(&library.scheme, group, &library.params)?;
    let mut subfiles = BTreeMap::new();
    for id in ids {
        subfiles.insert(id, library.subfile(id)?.to_bitvec());
    }
    Ok(UserCache { group, subfiles })
}

/// A contiguous bit range `[start, start + len)` of one subfile.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub struct SegmentDescriptor {
    pub subfile: SubfileId,
    pub start: usize,
    pub len: usize,
}

impl SegmentDescriptor {
    pub fn end(&self) -> usize {
        self.start + self.len
    }
}

/// The segment of `W_{d_user, S \ {group}}` that one user needs from one message.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SegmentRequest {
    pub user: usize,
    pub group: usize,
    pub descriptor: SegmentDescriptor,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MessagePart {
    pub user: usize,
    pub descriptor: SegmentDescriptor,
    /// Position of the segment inside the group's concatenation.
    pub offset: usize,
}

/// Concatenated segments of the users of one caching group.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GroupComponent {
    pub group: usize,
    pub parts: Vec<MessagePart>,
    pub len: usize,
}

/// `X_S`: XOR across groups of per-group concatenations, zero-padded to the longest.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct XorMessage {
    pub subset: Subset,
    pub payload: Bits,
    pub components: Vec<GroupComponent>,
}

impl XorMessage {
    pub fn len(&self) -> usize {
        self.payload.len()
    }

    pub fn is_empty(&self) -> bool {
        self.payload.is_empty()
    }

    /// Bits of the payload addressed to each recipient.
    pub fn recipient_lengths(&self) -> Vec<(usize, usize)> {
        let mut out: Vec<_> = self
            .components
            .iter()
            .flat_map(|c| c.parts.iter().map(|p| (p.user, p.descriptor.len)))
            .collect();
        out.sort_unstable();
        out
    }

    /// The payload portions a helper forwards to `user`, each tagged with the
    /// interfering segments the user must regenerate from its cache.
    pub fn forward(&self, user: usize) -> Vec<ForwardedPortion> {
        let mut out = Vec::new();
        for comp in &self.components {
            for part in comp.parts.iter().filter(|p| p.user == user) {
                let lo = part.offset;
                let hi = part.offset + part.descriptor.len;
                let mut interference = Vec::new();
                for other in self.components.iter().filter(|c| c.group != comp.group) {
                    for q in &other.parts {
                        let qlo = q.offset.max(lo);
                        let qhi = (q.offset + q.descriptor.len).min(hi);
                        if qlo < qhi {
                            interference.push(Interference {
                                descriptor: SegmentDescriptor {
                                    subfile: q.descriptor.subfile,
                                    start: q.descriptor.start + (qlo - q.offset),
                                    len: qhi - qlo,
                                },
                                at: qlo - lo,
                            });
                        }
                    }
                }
                out.push(ForwardedPortion {
                    subset: self.subset,
                    descriptor: part.descriptor,
                    bits: self.payload[lo..hi].to_bitvec(),
                    interference,
                });
            }
        }
        out
    }
}

/// A segment of another user's subfile XORed onto a forwarded portion.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Interference {
    pub descriptor: SegmentDescriptor,
    /// Offset inside the forwarded portion.
    pub at: usize,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ForwardedPortion {
    pub subset: Subset,
    pub descriptor: SegmentDescriptor,
    pub bits: Bits,
    pub interference: Vec<Interference>,
}

/// Builds `X_S` from per-user segment requests.
///
/// Within a group, segments are concatenated in ascending user order; groups
/// are then XORed bit-aligned at offset zero, so shorter concatenations are
/// implicitly zero padded.
pub fn encode_group_xor(
    library: &Library,
    requests: &[SegmentRequest],
    subset: Subset,
) -> Result<XorMessage> {
    let sub = library.subfile_bits();
    for r in requests {
        if !subset.contains(r.group) {
            return Err(Error::GroupNotInSubset {
                user: r.user,
                group: r.group,
                subset,
            });
        }
        if r.descriptor.subfile.subset != subset.without(r.group) {
            return Err(Error::WrongSubfile {
                user: r.user,
                subset,
            });
        }
        if r.descriptor.end() > sub {
            return Err(Error::InvalidParams(format!(
                "segment [{}, {}) exceeds subfile length {sub}",
                r.descriptor.start,
                r.descriptor.end()
            )));
        }
    }

    let mut sorted: Vec<&SegmentRequest> = requests.iter().collect();
    sorted.sort_by_key(|r| (r.group, r.user, r.descriptor.start));

    let mut components: Vec<GroupComponent> = Vec::new();
    for r in sorted {
        if components.last().is_none_or(|c| c.group != r.group) {
            components.push(GroupComponent {
                group: r.group,
                parts: Vec::new(),
                len: 0,
            });
        }
        let comp = components.last_mut().expect("just pushed");
        comp.parts.push(MessagePart {
            user: r.user,
            descriptor: r.descriptor,
            offset: comp.len,
        });
        comp.len += r.descriptor.len;
    }

    let width = components.iter().map(|c| c.len).max().unwrap_or(0);
    let mut payload = Bits::repeat(false, width);
    for comp in &components {
        for part in &comp.parts {
            let d = part.descriptor;
            let src = &library.subfile(d.subfile)?[d.start..d.end()];
            let dst = &mut payload[part.offset..part.offset + d.len];
            *dst ^= src;
        }
    }
    Ok(XorMessage {
        subset,
        payload,
        components,
    })
}

/// Classic MAN delivery: one message per `(t+1)`-subset of users, each user in
/// its own configuration (`library.scheme.groups == K`).
pub fn man_xor_messages(library: &Library, demand: &DemandVector) -> Result<Vec<XorMessage>> {
    let scheme = &library.scheme;
    if demand.0.len() != scheme.groups {
        return Err(Error::InvalidParams(format!(
            "pure-MAN delivery needs one user per configuration ({} demands, {} configurations)",
            demand.0.len(),
            scheme.groups
        )));
    }
    demand.validate(library.params.files)?;
    let sub = library.subfile_bits();
    scheme
        .multicast_subsets()
        .into_iter()
        .map(|s| {
            let requests: Vec<_> = s
                .iter()
                .map(|k| SegmentRequest {
                    user: k,
                    group: k,
                    descriptor: SegmentDescriptor {
                        subfile: SubfileId {
                            file: demand.file_of(k),
                            subset: s.without(k),
                        },
                        start: 0,
                        len: sub,
                    },
                })
                .collect();
            encode_group_xor(library, &requests, s)
        })
        .collect()
}

/// Reassembles `W_{d_user}` from cached subfiles and forwarded portions.
pub fn decode_at_user(
    user: usize,
    demand: &DemandVector,
    cache: &UserCache,
    received: &[ForwardedPortion],
    scheme: &CacheScheme,
    subfile_bits: usize,
) -> Result<Bits> {
    let file = demand.file_of(user);
    let group = cache.group;
    let mut out = Bits::with_capacity(subfile_bits * scheme.subsets.len());
    for &t in &scheme.subsets {
        let id = SubfileId { file, subset: t };
        if t.contains(group) {
            let bits = cache.get(id).ok_or(Error::MissingCache { user })?;
            out.extend_from_bitslice(bits);
            continue;
        }
        let mut buf = Bits::repeat(false, subfile_bits);
        let mut covered = vec![false; subfile_bits];
        for p in received.iter().filter(|p| p.descriptor.subfile == id) {
            let mut bits = p.bits.clone();
            for intf in &p.interference {
                let d = intf.descriptor;
                let cached = cache.get(d.subfile).ok_or(Error::MissingCache { user })?;
                bits[intf.at..intf.at + d.len] ^= &cached[d.start..d.end()];
            }
            let d = p.descriptor;
            buf[d.start..d.end()].copy_from_bitslice(&bits);
            covered[d.start..d.end()].fill(true);
        }
        if let Some(start) = covered.iter().position(|c| !c) {
            let end = covered[start..]
                .iter()
                .position(|c| *c)
                .map_or(subfile_bits, |n| start + n);
            return Err(Error::MissingSegment {
                user,
                subset: t.with(group),
                start,
                end,
            });
        }
        out.extend_from_bitslice(&buf);
    }
    Ok(out)
}

/// Splits `[0, len)` into contiguous per-helper segments proportional to
/// `shares`, rounding cumulative boundaries so the pieces tile exactly.
pub fn plan_segments(len: usize, shares: &[(usize, f64)]) -> Vec<(usize, usize, usize)> {
    let total: f64 = shares.iter().map(|(_, s)| s.max(0.0)).sum();
    if shares.is_empty() || len == 0 {
        return Vec::new();
    }
    let mut out = Vec::new();
    let mut cum = 0.0;
    let mut prev = 0usize;
    for (i, &(helper, share)) in shares.iter().enumerate() {
        cum += share.max(0.0);
        let bound = if i + 1 == shares.len() || total <= 0.0 {
            if total <= 0.0 && i + 1 < shares.len() {
                0
            } else {
                len
            }
        } else {
            ((cum / total) * len as f64).round().min(len as f64) as usize
        };
        let bound = bound.max(prev);
        if bound > prev {
            out.push((helper, prev, bound - prev));
        }
        prev = bound;
    }
    out
}

/// Outcome of an end-to-end delivery over a helper network.
#[derive(Clone, Debug)]
pub struct DeliveryRecord {
    /// Portions received by each user.
    pub portions: Vec<Vec<ForwardedPortion>>,
    /// Every message sent, tagged with its helper.
    pub messages: Vec<(usize, XorMessage)>,
}

impl DeliveryRecord {
    /// Fronthaul bits carried to each helper.
    pub fn front_bits(&self, helpers: usize) -> Vec<usize> {
        let mut out = vec![0; helpers];
        for (h, m) in &self.messages {
            out[*h] += m.len();
        }
        out
    }
}

/// Runs the decentralized delivery: for every `S` and helper `h`, the users of
/// `U_h` whose group is in `S` get the segment `segment(user, S, h)` (start,
/// length) of their subfile `W_{d_k, S \ {l_k}}`, and `h` broadcasts the group XOR.
pub fn deliver_over_helpers<F>(
    library: &Library,
    assignment: &CacheAssignment,
    demand: &DemandVector,
    users_of: &[Vec<usize>],
    mut segment: F,
) -> Result<DeliveryRecord>
where
    F: FnMut(usize, Subset, usize) -> Option<(usize, usize)>,
{
    let mut portions = vec![Vec::new(); assignment.users()];
    let mut messages = Vec::new();
    for s in library.scheme.multicast_subsets() {
        for (h, users) in users_of.iter().enumerate() {
            let mut requests = Vec::new();
            for &k in users {
                let g = assignment.group_of[k];
                if !s.contains(g) {
                    continue;
                }
                if let Some((start, len)) = segment(k, s, h) {
                    if len == 0 {
                        continue;
                    }
                    requests.push(SegmentRequest {
                        user: k,
                        group: g,
                        descriptor: SegmentDescriptor {
                            subfile: SubfileId {
                                file: demand.file_of(k),
                                subset: s.without(g),
                            },
                            start,
                            len,
                        },
                    });
                }
            }
            if requests.is_empty() {
                continue;
            }
            let msg = encode_group_xor(library, &requests, s)?;
            for r in &requests {
                portions[r.user].extend(msg.forward(r.user));
            }
            messages.push((h, msg));
        }
    }
    Ok(DeliveryRecord { portions, messages })
}
