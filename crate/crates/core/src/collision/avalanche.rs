//! Avalanche scheduling.
//!
//! Helpers are in one of three states. Active helpers transmit their
//! delivery arrays. Waiting helpers do not transmit but are still treated as
//! potential interferers: at the start every helper with a cell user waits,
//! so only users hearing a single helper overall are scheduled first, and a
//! waiting helper becomes active as soon as one of its users becomes
//! interference-free. Idle helpers neither transmit nor interfere.
//!
//! A user is handed to helper h when its only edge into the active and
//! waiting helpers is a solid edge to h. When a column ends, helpers with
//! nothing left stop, which can free interfered users; idle helpers are
//! re-activated in id order when they have such users and do not interfere
//! with anyone already scheduled. Waiting helpers that can no longer be
//! freed by any transmitting helper are demoted to idle so the schedule
//! cannot stall.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{CacheAssignment, CacheScheme};
use crate::multiround::{round_xor_count, DeliveryArray};
use crate::scenario::CollisionGraph;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum EventKind {
    Activate,
    Serve,
    ColumnDone,
    Stop,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceEvent {
    pub t_slots: u64,
    pub event: EventKind,
    pub helper: usize,
    pub users: Vec<usize>,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ScheduleTrace {
    pub events: Vec<TraceEvent>,
}

impl ScheduleTrace {
    pub fn to_jsonl(&self) -> Result<String> {
        let mut out = String::new();
        for e in &self.events {
            out += &serde_json::to_string(e)?;
            out.push('\n');
        }
        Ok(out)
    }

    pub fn from_jsonl(text: &str) -> Result<Self> {
        let events = text
            .lines()
            .filter(|l| !l.trim().is_empty())
            .map(serde_json::from_str)
            .collect::<std::result::Result<_, _>>()?;
        Ok(ScheduleTrace { events })
    }

    /// Completion time of the last column.
    pub fn final_slots(&self) -> u64 {
        self.events
            .iter()
            .filter(|e| e.event == EventKind::ColumnDone)
            .map(|e| e.t_slots)
            .max()
            .unwrap_or(0)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AvalancheOutcome {
    pub slots: u64,
    pub t_slot: f64,
    pub t_seconds: f64,
    pub trace: ScheduleTrace,
    /// Event-loop iterations (one per distinct column-completion time).
    pub iterations: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Status {
    Active,
    Waiting,
    Idle,
}

impl fmt::Display for Status {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Status::Active => "active",
            Status::Waiting => "waiting",
            Status::Idle => "idle",
        })
    }
}

struct HelperState {
    status: Status,
    array: DeliveryArray,
    next_col: usize,
    in_flight: Option<(usize, u64)>,
}

struct Scheduler<'a> {
    cg: &'a CollisionGraph,
    assignment: &'a CacheAssignment,
    scheme: &'a CacheScheme,
    cells: Vec<Vec<usize>>,
    heard_by: Vec<Vec<usize>>,
    helpers: Vec<HelperState>,
    assigned: Vec<Option<usize>>,
    served: Vec<bool>,
    unserved: usize,
    d: u64,
    events: Vec<TraceEvent>,
}

impl<'a> Scheduler<'a> {
    fn new(cg: &'a CollisionGraph, assignment: &'a CacheAssignment, scheme: &'a CacheScheme) -> Self {
        let cells = cg.cell_users();
        let helpers = cells
            .iter()
            .map(|users| HelperState {
                status: if users.is_empty() { Status::Idle } else { Status::Waiting },
                array: DeliveryArray::empty(scheme.groups),
                next_col: 0,
                in_flight: None,
            })
            .collect();
        Scheduler {
            cg,
            assignment,
            scheme,
            heard_by: cg.interfered_users(),
            cells,
            helpers,
            assigned: vec![None; cg.users],
            served: vec![false; cg.users],
            unserved: cg.users,
            d: 0,
            events: Vec::new(),
        }
    }

    fn blocking(&self, h: usize) -> bool {
        self.helpers[h].status != Status::Idle
    }

    fn pending(&self, k: usize) -> bool {
        !self.served[k] && self.assigned[k].is_none()
    }

    fn emit(&mut self, event: EventKind, helper: usize, users: Vec<usize>) {
        self.events.push(TraceEvent {
            t_slots: self.d,
            event,
            helper,
            users,
        });
    }

    fn assign(&mut self, k: usize, h: usize) {
        self.assigned[k] = Some(h);
        self.helpers[h].array.append_user(k, self.assignment.group_of[k]);
    }

    /// Hands every pending user whose only edge into the active and waiting
    /// helpers is solid to that helper; waiting helpers that receive users
    /// become active.
    fn hand_over(&mut self) {
        let mut woken: Vec<(usize, Vec<usize>)> = Vec::new();
        for k in 0..self.cg.users {
            if !self.pending(k) {
                continue;
            }
            let mut blockers = self.cg.neighbors_of(k).filter(|&h| self.blocking(h));
            let (Some(h), None) = (blockers.next(), blockers.next()) else {
                continue;
            };
            if !self.cg.solid_of[k].contains(&h) {
                continue;
            }
            self.assign(k, h);
            if self.helpers[h].status == Status::Waiting {
                match woken.iter_mut().find(|(w, _)| *w == h) {
                    Some((_, users)) => users.push(k),
                    None => woken.push((h, vec![k])),
                }
            }
        }
        woken.sort_by_key(|w| w.0);
        for (h, users) in woken {
            self.helpers[h].status = Status::Active;
            self.emit(EventKind::Activate, h, users);
        }
    }

    /// Activates idle helpers, in id order, that have interference-free cell
    /// users and no edge to any user already scheduled elsewhere.
    fn reactivate(&mut self) {
        for h in 0..self.cg.helpers {
            if self.helpers[h].status != Status::Idle {
                continue;
            }
            if self.heard_by[h].iter().any(|&k| self.assigned[k].is_some()) {
                continue;
            }
            let users: Vec<usize> = self.cells[h]
                .iter()
                .copied()
                .filter(|&k| self.pending(k) && self.cg.neighbors_of(k).all(|b| !self.blocking(b)))
                .collect();
            if users.is_empty() {
                continue;
            }
            self.helpers[h].status = Status::Active;
            for &k in &users {
                self.assign(k, h);
            }
            self.emit(EventKind::Activate, h, users);
        }
    }

    /// Demotes waiting helpers none of whose pending users can be freed by a
    /// transmitting helper, directly or through other waiting helpers.
    fn demote_stuck(&mut self) -> bool {
        let n = self.cg.helpers;
        let mut live = vec![false; n];
        loop {
            let mut changed = false;
            for h in 0..n {
                if live[h] || self.helpers[h].status != Status::Waiting {
                    continue;
                }
                let freeable = self.cells[h].iter().any(|&k| {
                    self.pending(k)
                        && self.cg.neighbors_of(k).any(|b| {
                            b != h && (self.helpers[b].status == Status::Active || live[b])
                        })
                });
                if freeable {
                    live[h] = true;
                    changed = true;
                }
            }
            if !changed {
                break;
            }
        }
        let mut demoted = false;
        for (helper, &alive) in self.helpers.iter_mut().zip(&live) {
            if helper.status == Status::Waiting && !alive {
                helper.status = Status::Idle;
                demoted = true;
            }
        }
        demoted
    }

    fn update(&mut self) {
        loop {
            self.hand_over();
            self.reactivate();
            if !self.demote_stuck() {
                break;
            }
        }
    }

    fn start_columns(&mut self) {
        for h in 0..self.cg.helpers {
            let st = &self.helpers[h];
            if st.status != Status::Active || st.in_flight.is_some() || st.next_col >= st.array.cols() {
                continue;
            }
            let col = st.next_col;
            let mut users = st.array.column_users(col);
            users.sort_unstable();
            let slots = round_xor_count(st.array.presence(col).len(), self.scheme.groups, self.scheme.replication);
            let end = self.d + slots;
            let st = &mut self.helpers[h];
            st.array.start_through(col + 1);
            st.next_col = col + 1;
            st.in_flight = Some((col, end));
            self.emit(EventKind::Serve, h, users);
        }
    }

    fn dump(&self) -> String {
        let states: Vec<String> = self
            .helpers
            .iter()
            .enumerate()
            .map(|(h, s)| format!("h{h}:{}(cols {}/{})", s.status, s.next_col, s.array.cols()))
            .collect();
        let waiting: Vec<usize> = (0..self.cg.users).filter(|&k| !self.served[k]).collect();
        format!("D = {}, unserved users {:?}, helpers [{}]", self.d, waiting, states.join(", "))
    }

    fn run(mut self) -> Result<(u64, ScheduleTrace, usize)> {
        self.update();
        self.start_columns();
        let mut iterations = 0;
        while self.unserved > 0 {
            iterations += 1;
            let Some(next) = self.helpers.iter().filter_map(|s| s.in_flight.map(|f| f.1)).min() else {
                return Err(Error::Livelock(self.dump()));
            };
            self.d = next;
            let finishers: Vec<usize> = (0..self.cg.helpers)
                .filter(|&h| self.helpers[h].in_flight.is_some_and(|f| f.1 == next))
                .collect();
            for &h in &finishers {
                let (col, _) = self.helpers[h].in_flight.take().expect("in flight");
                let mut users = self.helpers[h].array.column_users(col);
                users.sort_unstable();
                for &k in &users {
                    self.served[k] = true;
                    self.assigned[k] = None;
                }
                self.unserved -= users.len();
                self.emit(EventKind::ColumnDone, h, users);
            }
            for &h in &finishers {
                let st = &self.helpers[h];
                if st.next_col >= st.array.cols() {
                    self.helpers[h].status = Status::Idle;
                    self.emit(EventKind::Stop, h, Vec::new());
                }
            }
            if self.unserved == 0 {
                break;
            }
            self.update();
            self.start_columns();
        }
        let d = self.d;
        Ok((d, ScheduleTrace { events: self.events }, iterations))
    }
}

/// Runs the avalanche scheduler; `T = D · F / (C(L,t′) · min{C_access, C_front})`.
pub fn avalanche_run(
    cg: &CollisionGraph,
    assignment: &CacheAssignment,
    scheme: &CacheScheme,
    file_bits: f64,
) -> Result<AvalancheOutcome> {
    if assignment.users() != cg.users || assignment.groups != scheme.groups {
        return Err(Error::InvalidParams(
            "cache assignment does not match the collision graph or scheme".into(),
        ));
    }
    let uncovered: Vec<usize> = (0..cg.users).filter(|&k| cg.solid_of[k].is_empty()).collect();
    if !uncovered.is_empty() {
        return Err(Error::UncoveredUsers { users: uncovered });
    }
    let (slots, trace, iterations) = Scheduler::new(cg, assignment, scheme).run()?;
    let t_slot = file_bits / (scheme.order() as f64 * cg.c_access.min(cg.c_front));
    Ok(AvalancheOutcome {
        slots,
        t_slot,
        t_seconds: slots as f64 * t_slot,
        trace,
        iterations,
    })
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ReplayReport {
    pub collisions: Vec<String>,
    pub completeness: Vec<String>,
}

impl ReplayReport {
    pub fn is_clean(&self) -> bool {
        self.collisions.is_empty() && self.completeness.is_empty()
    }
}

/// Re-checks a trace against the geometry: no served user hears a second
/// transmitting helper during its column, every user is served exactly
/// once by a helper it can decode, and every column lasts exactly its XOR
/// count.
pub fn replay_trace(
    trace: &ScheduleTrace,
    cg: &CollisionGraph,
    assignment: &CacheAssignment,
    scheme: &CacheScheme,
) -> ReplayReport {
    let mut report = ReplayReport::default();
    let mut open: Vec<Option<(u64, Vec<usize>)>> = vec![None; cg.helpers];
    // (helper, start, end, users)
    let mut columns: Vec<(usize, u64, u64, Vec<usize>)> = Vec::new();
    let mut serve_count = vec![0usize; cg.users];
    let mut last_t = 0;
    for e in &trace.events {
        if e.t_slots < last_t {
            report.completeness.push(format!("event at {} precedes earlier time {last_t}", e.t_slots));
        }
        last_t = last_t.max(e.t_slots);
        if e.helper >= cg.helpers {
            report.completeness.push(format!("unknown helper {}", e.helper));
            continue;
        }
        match e.event {
            EventKind::Serve => {
                if open[e.helper].is_some() {
                    report.completeness.push(format!("helper {} starts a column while another is open", e.helper));
                }
                for &k in &e.users {
                    if k >= cg.users {
                        report.completeness.push(format!("unknown user {k}"));
                        continue;
                    }
                    serve_count[k] += 1;
                    if !cg.solid_of[k].contains(&e.helper) {
                        report.completeness.push(format!("user {k} served by helper {} without a solid edge", e.helper));
                    }
                }
                open[e.helper] = Some((e.t_slots, e.users.clone()));
            }
            EventKind::ColumnDone => match open[e.helper].take() {
                Some((start, users)) if users == e.users => columns.push((e.helper, start, e.t_slots, users)),
                _ => report
                    .completeness
                    .push(format!("helper {} completes a column it did not start", e.helper)),
            },
            EventKind::Activate | EventKind::Stop => {}
        }
    }
    for (h, o) in open.iter().enumerate() {
        if o.is_some() {
            report.completeness.push(format!("helper {h} never completes its last column"));
        }
    }
    for (k, &n) in serve_count.iter().enumerate() {
        if n != 1 {
            report.completeness.push(format!("user {k} served {n} times"));
        }
    }
    for (h, start, end, users) in &columns {
        let mut groups: Vec<usize> = users.iter().filter(|&&k| k < cg.users).map(|&k| assignment.group_of[k]).collect();
        groups.sort_unstable();
        groups.dedup();
        if groups.len() != users.len() {
            report.completeness.push(format!("helper {h} column at {start} repeats a caching group"));
        }
        let want = round_xor_count(groups.len(), scheme.groups, scheme.replication);
        if end - start != want {
            report
                .completeness
                .push(format!("helper {h} column at {start} lasts {} slots, expected {want}", end - start));
        }
    }
    for (h, start, end, users) in &columns {
        for &k in users.iter().filter(|&&k| k < cg.users) {
            for other in cg.neighbors_of(k).filter(|o| o != h) {
                let clash = columns
                    .iter()
                    .any(|(h2, s2, e2, _)| *h2 == other && s2 < end && start < e2 && s2 < e2);
                if clash {
                    report.collisions.push(format!(
                        "user {k} served by helper {h} during [{start}, {end}) while helper {other} transmits"
                    ));
                }
            }
        }
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::build_collision_graph;
    use crate::scenario::fixtures::{collision_example, COLLISION_EXAMPLE_GROUPS};

    fn example() -> (CollisionGraph, CacheAssignment, CacheScheme) {
        let cg = build_collision_graph(&collision_example()).unwrap();
        let a = CacheAssignment::from_groups(COLLISION_EXAMPLE_GROUPS.to_vec(), 3).unwrap();
        (cg, a, CacheScheme::new(3, 1).unwrap())
    }

    fn done_at(trace: &ScheduleTrace, helper: usize) -> Vec<(u64, Vec<usize>)> {
        trace
            .events
            .iter()
            .filter(|e| e.event == EventKind::ColumnDone && e.helper == helper)
            .map(|e| (e.t_slots, e.users.clone()))
            .collect()
    }

    #[test]
    fn example_schedule() {
        let (cg, a, s) = example();
        let out = avalanche_run(&cg, &a, &s, 1.0).unwrap();
        assert_eq!(out.slots, 9);
        assert_eq!(out.t_seconds, 3.0 / cg.c_access.min(cg.c_front));
        assert_eq!(done_at(&out.trace, 0), vec![(2, vec![0])]);
        assert_eq!(done_at(&out.trace, 1), vec![(4, vec![1]), (9, vec![2])]);
        assert_eq!(done_at(&out.trace, 2), vec![(4, vec![4])]);
        assert_eq!(done_at(&out.trace, 3), vec![(7, vec![3, 5])]);
        let report = replay_trace(&out.trace, &cg, &a, &s);
        assert!(report.is_clean(), "{report:?}");
    }

    #[test]
    fn jsonl_round_trip() {
        let (cg, a, s) = example();
        let out = avalanche_run(&cg, &a, &s, 1.0).unwrap();
        let text = out.trace.to_jsonl().unwrap();
        let first: serde_json::Value = serde_json::from_str(text.lines().next().unwrap()).unwrap();
        assert_eq!(first["event"], "activate");
        assert!(text.contains("\"event\":\"columnDone\""));
        assert_eq!(ScheduleTrace::from_jsonl(&text).unwrap(), out.trace);
    }

    #[test]
    fn replay_catches_tampering() {
        let (cg, a, s) = example();
        let mut trace = avalanche_run(&cg, &a, &s, 1.0).unwrap().trace;
        // Shift helper 1's last column to overlap helper 3's transmission.
        for e in trace.events.iter_mut().filter(|e| e.helper == 1 && e.users == vec![2]) {
            e.t_slots -= 4;
        }
        let report = replay_trace(&trace, &cg, &a, &s);
        assert!(!report.collisions.is_empty());
    }
}
