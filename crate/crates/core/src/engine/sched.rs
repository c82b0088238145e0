//! Discrete-event list scheduler over units that each occupy one resource.

use std::cmp::Reverse;
use std::collections::BinaryHeap;

use crate::error::{Error, Result};

/// Dependency structure of the schedulable units in compressed row form.
#[derive(Debug, Clone, Default)]
pub(crate) struct UnitGraph {
    pub resource: Vec<u8>,
    dep_off: Vec<u32>,
    deps: Vec<u32>,
}

impl UnitGraph {
    pub fn with_capacity(n: usize) -> Self {
        let mut g = UnitGraph {
            resource: Vec::with_capacity(n),
            dep_off: Vec::with_capacity(n + 1),
            deps: Vec::with_capacity(n * 2),
        };
        g.dep_off.push(0);
        g
    }

    /// Adds a unit and returns its id.
    pub fn push(&mut self, resource: u8, deps: &[u32]) -> u32 {
        let id = self.resource.len() as u32;
        self.resource.push(resource);
        self.deps.extend_from_slice(deps);
        self.dep_off.push(self.deps.len() as u32);
        id
    }

    pub fn len(&self) -> usize {
        self.resource.len()
    }

    pub fn deps(&self, u: u32) -> &[u32] {
        &self.deps[self.dep_off[u as usize] as usize..self.dep_off[u as usize + 1] as usize]
    }
}

/// Start and end time (ps) of every unit.
#[derive(Debug, Clone)]
pub(crate) struct Timeline {
    pub start: Vec<u64>,
    pub end: Vec<u64>,
}

/// Runs every unit as soon as its dependencies are done and its resource is
/// free. Ready units wait in FIFO order of readiness, ties broken by id.
/// `dispatch` returns the duration of a unit in picoseconds and is called in
/// simulated-time order.
pub(crate) fn schedule<F>(g: &UnitGraph, resources: usize, mut dispatch: F) -> Result<Timeline>
where
    F: FnMut(u32, u64) -> Result<u64>,
{
    let n = g.len();
    let mut indeg = vec![0u32; n];
    let mut user_count = vec![0u32; n + 1];
    for u in 0..n as u32 {
        for &d in g.deps(u) {
            if d as usize >= n || d == u {
                return Err(Error::Deadlock {
                    waiting: u,
                    blocked_on: d,
                });
            }
            indeg[u as usize] += 1;
            user_count[d as usize + 1] += 1;
        }
    }
    for i in 0..n {
        user_count[i + 1] += user_count[i];
    }
    let user_off = user_count;
    let mut fill = user_off.clone();
    let mut users = vec![0u32; g.deps.len()];
    for u in 0..n as u32 {
        for &d in g.deps(u) {
            users[fill[d as usize] as usize] = u;
            fill[d as usize] += 1;
        }
    }

    let mut ready: Vec<BinaryHeap<Reverse<(u64, u32)>>> = vec![BinaryHeap::new(); resources];
    let mut busy = vec![false; resources];
    let mut events: BinaryHeap<Reverse<(u64, u32)>> = BinaryHeap::new();
    let mut start = vec![u64::MAX; n];
    let mut end = vec![u64::MAX; n];
    for u in 0..n as u32 {
        if indeg[u as usize] == 0 {
            ready[g.resource[u as usize] as usize].push(Reverse((0, u)));
        }
    }

    let mut now = 0u64;
    let mut done = 0usize;
    loop {
        for r in 0..resources {
            if busy[r] {
                continue;
            }
            if let Some(Reverse((_, u))) = ready[r].pop() {
                let dur = dispatch(u, now)?;
                start[u as usize] = now;
                busy[r] = true;
                events.push(Reverse((now + dur, u)));
            }
        }
        let Some(Reverse((t, _))) = events.peek().copied() else {
            break;
        };
        now = t;
        while let Some(&Reverse((t2, u))) = events.peek() {
            if t2 != now {
                break;
            }
            events.pop();
            end[u as usize] = now;
            busy[g.resource[u as usize] as usize] = false;
            done += 1;
            for &v in &users[user_off[u as usize] as usize..user_off[u as usize + 1] as usize] {
                indeg[v as usize] -= 1;
                if indeg[v as usize] == 0 {
                    ready[g.resource[v as usize] as usize].push(Reverse((now, v)));
                }
            }
        }
    }

    if done != n {
        let waiting = (0..n).find(|&u| end[u] == u64::MAX).unwrap() as u32;
        let blocked_on = g
            .deps(waiting)
            .iter()
            .copied()
            .find(|&d| end[d as usize] == u64::MAX)
            .unwrap_or(waiting);
        return Err(Error::Deadlock {
            waiting,
            blocked_on,
        });
    }
    Ok(Timeline { start, end })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn chain_on_two_resources() {
        let mut g = UnitGraph::with_capacity(3);
        let a = g.push(0, &[]);
        let b = g.push(1, &[a]);
        g.push(0, &[b]);
        let t = schedule(&g, 2, |u, _| Ok(10 * (u as u64 + 1))).unwrap();
        assert_eq!(t.end, vec![10, 30, 60]);
    }

    #[test]
    fn independent_units_share_a_resource_in_id_order() {
        let mut g = UnitGraph::with_capacity(2);
        g.push(0, &[]);
        g.push(0, &[]);
        let t = schedule(&g, 1, |_, _| Ok(5)).unwrap();
        assert_eq!(t.start, vec![0, 5]);
    }

    #[test]
    fn parallel_resources_overlap() {
        let mut g = UnitGraph::with_capacity(2);
        g.push(0, &[]);
        g.push(1, &[]);
        let t = schedule(&g, 2, |_, _| Ok(7)).unwrap();
        assert_eq!(t.end, vec![7, 7]);
    }

    #[test]
    fn cycle_names_edge() {
        // Forward reference: unit 0 waits on unit 1 which waits on unit 0.
        let g = UnitGraph {
            resource: vec![0, 0],
            dep_off: vec![0, 1, 2],
            deps: vec![1, 0],
        };
        match schedule(&g, 1, |_, _| Ok(1)) {
            Err(Error::Deadlock {
                waiting,
                blocked_on,
            }) => {
                assert_eq!((waiting, blocked_on), (0, 1));
            }
            other => panic!("{other:?}"),
        }
    }
}
