//! Replay ring fused with the visitation side table.
//!
//! The table holds one entry per state that appears in a buffered
//! transition, with per-action counts and familiarity. The frontier is not
//! stored; [`get_frontier`] derives it from the table on demand.

use std::collections::BTreeMap;
use std::io::{self, Write};

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::env::{Action, AgentState};

#[derive(Debug, Error, PartialEq)]
pub enum ReplayError {
    #[error("cannot sample from an empty replay buffer")]
    Empty,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub state: AgentState,
    pub action: Action,
    pub reward: f64,
    pub next_state: AgentState,
    pub goal: AgentState,
    pub done: bool,
}

/// Fixed-capacity FIFO ring.
#[derive(Debug, Clone)]
pub struct ReplayBuffer<T> {
    capacity: usize,
    items: Vec<T>,
    cursor: usize,
}

impl<T: Clone> ReplayBuffer<T> {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "replay capacity must be positive");
        ReplayBuffer { capacity, items: Vec::new(), cursor: 0 }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    /// Inserts `item`, returning the evicted oldest item once full.
    pub fn push(&mut self, item: T) -> Option<T> {
        if self.items.len() < self.capacity {
            self.items.push(item);
            None
        } else {
            let old = std::mem::replace(&mut self.items[self.cursor], item);
            self.cursor = (self.cursor + 1) % self.capacity;
            Some(old)
        }
    }

    /// Items from oldest to newest.
    pub fn iter(&self) -> impl Iterator<Item = &T> {
        let (newer, older) = self.items.split_at(self.cursor);
        older.iter().chain(newer.iter())
    }

    pub fn get(&self, i: usize) -> &T {
        &self.items[i]
    }

    /// Uniform sampling with replacement into `out`.
    pub fn sample_into<R: Rng + ?Sized>(
        &self,
        batch_size: usize,
        rng: &mut R,
        out: &mut Vec<T>,
    ) -> Result<(), ReplayError> {
        if self.items.is_empty() {
            return Err(ReplayError::Empty);
        }
        out.clear();
        out.extend((0..batch_size).map(|_| self.items[rng.gen_range(0..self.items.len())].clone()));
        Ok(())
    }

    pub fn sample_batch<R: Rng + ?Sized>(&self, batch_size: usize, rng: &mut R) -> Result<Vec<T>, ReplayError> {
        let mut out = Vec::with_capacity(batch_size);
        self.sample_into(batch_size, rng, &mut out)?;
        Ok(out)
    }
}

/// `n / (n + 1)`, the limit `0` at `n = 0`.
pub fn state_familiarity(n: u64) -> f64 {
    n as f64 / (n as f64 + 1.0)
}

pub fn update_trajectory_familiarity(running: f64, n_next: u64) -> f64 {
    running * state_familiarity(n_next)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ActionEntry {
    pub count: u64,
    pub familiarity: f64,
}

impl ActionEntry {
    /// Never executed since insertion.
    pub fn is_open(&self) -> bool {
        self.count == 0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StateEntry {
    pub count: u64,
    /// Buffered transitions mentioning this state (as source or successor).
    refs: u64,
    pub actions: [Option<ActionEntry>; 4],
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrontierEntry {
    pub state: AgentState,
    pub action: Action,
    pub count: u64,
    pub familiarity: f64,
}

#[derive(Debug, Clone, Default)]
pub struct VisitationTable {
    states: BTreeMap<AgentState, StateEntry>,
}

impl VisitationTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn contains(&self, s: &AgentState) -> bool {
        self.states.contains_key(s)
    }

    pub fn state_count(&self, s: &AgentState) -> u64 {
        self.states.get(s).map_or(0, |e| e.count)
    }

    pub fn entry(&self, s: &AgentState) -> Option<&StateEntry> {
        self.states.get(s)
    }

    pub fn pair(&self, s: &AgentState, a: Action) -> Option<ActionEntry> {
        self.states.get(s).and_then(|e| e.actions[a.index()])
    }

    pub fn n_states(&self) -> usize {
        self.states.len()
    }

    /// All state-action entries in raster-then-action order.
    pub fn pairs(&self) -> impl Iterator<Item = FrontierEntry> + '_ {
        self.states.iter().flat_map(|(s, e)| {
            e.actions.iter().enumerate().filter_map(move |(i, a)| {
                a.map(|a| FrontierEntry {
                    state: *s,
                    action: Action::from_index(i),
                    count: a.count,
                    familiarity: a.familiarity,
                })
            })
        })
    }

    pub fn total_pair_count(&self) -> u64 {
        self.pairs().map(|p| p.count).sum()
    }

    /// Inserts or overwrites a raw entry. Used to build synthetic tables.
    pub fn insert_pair(&mut self, s: AgentState, a: Action, count: u64, familiarity: f64) {
        let e = self.states.entry(s).or_insert_with(|| StateEntry { count: 0, refs: 0, actions: [None; 4] });
        if let Some(old) = e.actions[a.index()] {
            e.count -= old.count;
        }
        e.count += count;
        e.actions[a.index()] = Some(ActionEntry { count, familiarity: familiarity.clamp(0.0, 1.0) });
    }

    fn add(&mut self, t: &Transition, running: f64) {
        let e = self.states.entry(t.state).or_insert_with(|| StateEntry { count: 0, refs: 0, actions: [None; 4] });
        e.count += 1;
        e.refs += 1;
        let pair = e.actions[t.action.index()].get_or_insert(ActionEntry { count: 0, familiarity: 0.0 });
        pair.count += 1;
        pair.familiarity = pair.familiarity.max(running);

        let next = self.states.entry(t.next_state).or_insert_with(|| StateEntry {
            count: 0,
            refs: 0,
            actions: [Some(ActionEntry { count: 0, familiarity: 0.0 }); 4],
        });
        next.refs += 1;
    }

    fn remove(&mut self, t: &Transition) {
        if let Some(e) = self.states.get_mut(&t.state) {
            e.count -= 1;
            e.refs -= 1;
            let slot = &mut e.actions[t.action.index()];
            if let Some(pair) = slot {
                pair.count -= 1;
                if pair.count == 0 {
                    *slot = None;
                }
            }
            if e.refs == 0 {
                self.states.remove(&t.state);
            }
        }
        if let Some(e) = self.states.get_mut(&t.next_state) {
            e.refs -= 1;
            if e.refs == 0 {
                self.states.remove(&t.next_state);
            }
        }
    }

    /// Writes `x,y,has_key,action,N,F,open` rows in canonical order.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "x,y,has_key,action,N,F,open")?;
        for p in self.pairs() {
            writeln!(
                w,
                "{},{},{},{},{},{:.6},{}",
                p.state.x,
                p.state.y,
                p.state.has_key as u8,
                p.action.name(),
                p.count,
                p.familiarity,
                (p.count == 0) as u8
            )?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy)]
struct Stored {
    transition: Transition,
    counted: bool,
}

/// Replay ring plus visitation table, kept consistent under eviction.
#[derive(Debug, Clone)]
pub struct Experience {
    buffer: ReplayBuffer<Stored>,
    table: VisitationTable,
}

impl Experience {
    pub fn new(capacity: usize) -> Self {
        Experience { buffer: ReplayBuffer::new(capacity), table: VisitationTable::new() }
    }

    pub fn table(&self) -> &VisitationTable {
        &self.table
    }

    pub fn len(&self) -> usize {
        self.buffer.len()
    }

    pub fn is_empty(&self) -> bool {
        self.buffer.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.buffer.capacity()
    }

    fn push(&mut self, stored: Stored) {
        if let Some(old) = self.buffer.push(stored) {
            if old.counted {
                self.table.remove(&old.transition);
            }
        }
    }

    /// Stores a real transition and updates counts and familiarity.
    /// Returns the running trajectory familiarity after moving to
    /// `t.next_state`.
    pub fn record_step(&mut self, t: Transition, running: f64) -> f64 {
        self.push(Stored { transition: t, counted: true });
        self.table.add(&t, running);
        update_trajectory_familiarity(running, self.table.state_count(&t.next_state))
    }

    /// Stores a synthetic (e.g. relabelled) transition that does not touch
    /// the visitation statistics.
    pub fn push_synthetic(&mut self, t: Transition) {
        self.push(Stored { transition: t, counted: false });
    }

    pub fn transitions(&self) -> impl Iterator<Item = &Transition> {
        self.buffer.iter().map(|s| &s.transition)
    }

    pub fn sample_into<R: Rng + ?Sized>(
        &self,
        batch_size: usize,
        rng: &mut R,
        out: &mut Vec<Transition>,
    ) -> Result<(), ReplayError> {
        if self.buffer.is_empty() {
            return Err(ReplayError::Empty);
        }
        out.clear();
        let n = self.buffer.len();
        out.extend((0..batch_size).map(|_| self.buffer.get(rng.gen_range(0..n)).transition));
        Ok(())
    }

    pub fn sample_batch<R: Rng + ?Sized>(
        &self,
        batch_size: usize,
        rng: &mut R,
    ) -> Result<Vec<Transition>, ReplayError> {
        let mut out = Vec::with_capacity(batch_size);
        self.sample_into(batch_size, rng, &mut out)?;
        Ok(out)
    }
}

/// Nearest-rank percentile of `values` (sorted in place).
pub fn nearest_rank_percentile(values: &mut [u64], percentile: f64) -> Option<u64> {
    if values.is_empty() {
        return None;
    }
    values.sort_unstable();
    let rank = ((percentile / 100.0) * values.len() as f64).ceil() as usize;
    Some(values[rank.clamp(1, values.len()) - 1])
}

/// Two-stage filter over the table: drop pairs more familiar than `f_thr`
/// (unless `skip_familiarity`), then drop survivors whose count is below the
/// `percentile`-th percentile of survivor counts.
pub fn get_frontier(
    table: &VisitationTable,
    f_thr: f64,
    percentile: f64,
    skip_familiarity: bool,
) -> Vec<FrontierEntry> {
    let survivors: Vec<FrontierEntry> = table.pairs().filter(|p| skip_familiarity || p.familiarity <= f_thr).collect();
    let mut counts: Vec<u64> = survivors.iter().map(|p| p.count).collect();
    let Some(cutoff) = nearest_rank_percentile(&mut counts, percentile) else {
        return Vec::new();
    };
    survivors.into_iter().filter(|p| p.count >= cutoff).collect()
}
