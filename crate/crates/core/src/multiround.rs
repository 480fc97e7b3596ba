//! Delivery arrays and multiround slot accounting.
//!
//! Row ℓ of a delivery array holds the users of caching group ℓ; column j is
//! one delivery round serving at most one user per group. All counts are
//! exact integers in XOR slots; division by the subpacketization order only
//! happens in the `*_load` reporting helpers.

use crate::combin::{binomial, Subset};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DeliveryArray {
    groups: usize,
    /// `columns[j][ℓ]` is the user of group ℓ served in round j.
    columns: Vec<Vec<Option<usize>>>,
    /// Columns `0..started` have begun transmitting and are frozen.
    started: usize,
}

impl DeliveryArray {
    pub fn empty(groups: usize) -> Self {
        Self {
            groups,
            columns: Vec::new(),
            started: 0,
        }
    }

    pub fn groups(&self) -> usize {
        self.groups
    }

    pub fn cols(&self) -> usize {
        self.columns.len()
    }

    pub fn cell(&self, group: usize, col: usize) -> Option<usize> {
        self.columns[col][group]
    }

    pub fn column_users(&self, col: usize) -> Vec<usize> {
        self.columns[col].iter().flatten().copied().collect()
    }

    /// R_j: the groups present in column `col`.
    pub fn presence(&self, col: usize) -> Subset {
        Subset::from_elems((0..self.groups).filter(|&g| self.columns[col][g].is_some()))
    }

    pub fn row(&self, group: usize) -> Vec<usize> {
        self.columns.iter().filter_map(|c| c[group]).collect()
    }

    pub fn occupancies(&self) -> Vec<usize> {
        (0..self.groups).map(|g| self.row(g).len()).collect()
    }

    /// Groups ordered by non-increasing occupancy, ties by group index.
    pub fn row_order(&self) -> Vec<usize> {
        let occ = self.occupancies();
        let mut order: Vec<usize> = (0..self.groups).collect();
        order.sort_by(|&a, &b| occ[b].cmp(&occ[a]).then(a.cmp(&b)));
        order
    }

    pub fn contains(&self, user: usize) -> bool {
        self.columns.iter().flatten().any(|&c| c == Some(user))
    }

    pub fn started(&self) -> usize {
        self.started
    }

    /// Freezes every column before `col`.
    pub fn start_through(&mut self, col: usize) {
        self.started = self.started.max(col.min(self.cols()));
    }

    /// Places `user` of `group` in the leftmost column that has not started
    /// and has an empty cell in that row, extending the array if needed.
    /// Returns the column index.
    pub fn append_user(&mut self, user: usize, group: usize) -> usize {
        assert!(group < self.groups, "group {group} out of range");
        debug_assert!(!self.contains(user), "user {user} already present");
        let col = (self.started..self.cols())
            .find(|&j| self.columns[j][group].is_none())
            .unwrap_or_else(|| {
                self.columns.push(vec![None; self.groups]);
                self.cols() - 1
            });
        self.columns[col][group] = Some(user);
        col
    }
}

/// Array with each group's users (ascending id) left-justified in its row.
pub fn build_delivery_array(groups: &[Vec<usize>]) -> DeliveryArray {
    let mut array = DeliveryArray::empty(groups.len());
    for (g, users) in groups.iter().enumerate() {
        let mut users = users.clone();
        users.sort_unstable();
        for u in users {
            array.append_user(u, g);
        }
    }
    array
}

/// XOR transmissions needed for a round in which `present` of `groups`
/// groups have a user.
pub fn round_xor_count(present: usize, groups: usize, replication: usize) -> u64 {
    binomial(groups, replication + 1) - binomial(groups - present, replication + 1)
}

pub fn column_slots(array: &DeliveryArray, replication: usize) -> Vec<u64> {
    (0..array.cols())
        .map(|j| round_xor_count(array.presence(j).len(), array.groups(), replication))
        .collect()
}

/// Closed-form multiround slot count: Σ_r A_[r]·C(L−r, t′) with the
/// occupancies sorted non-increasingly.
pub fn multiround_slots(occupancies: &[usize], replication: usize) -> u64 {
    let l = occupancies.len();
    let mut sorted = occupancies.to_vec();
    sorted.sort_unstable_by(|a, b| b.cmp(a));
    (1..=l.saturating_sub(replication))
        .map(|r| sorted[r - 1] as u64 * binomial(l - r, replication))
        .sum()
}

pub fn multiround_load(occupancies: &[usize], replication: usize) -> f64 {
    multiround_slots(occupancies, replication) as f64 / binomial(occupancies.len(), replication) as f64
}

/// Δ_j: cumulative slots at which each column completes.
pub fn delivery_epochs(array: &DeliveryArray, replication: usize) -> Vec<u64> {
    column_slots(array, replication)
        .into_iter()
        .scan(0, |acc, s| {
            *acc += s;
            Some(*acc)
        })
        .collect()
}
