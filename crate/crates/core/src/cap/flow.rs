//! Successive-shortest-path min-cost flow over a lexicographic cost.
//!
//! The primary component carries the optimisation objective; the secondary
//! component (total latency) only decides between primary ties. Graphs here
//! are tiny (two layers of regions plus three terminals), so Bellman-Ford
//! per augmentation is plenty.

use std::cmp::Ordering;
use std::collections::VecDeque;
use std::ops::{Add, Neg, Sub};

const EPS: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub(crate) struct LexCost {
    pub primary: f64,
    pub secondary: f64,
}

impl LexCost {
    pub const ZERO: LexCost = LexCost {
        primary: 0.0,
        secondary: 0.0,
    };

    pub fn new(primary: f64, secondary: f64) -> Self {
        LexCost { primary, secondary }
    }

    pub fn scale(self, k: i64) -> Self {
        LexCost::new(self.primary * k as f64, self.secondary * k as f64)
    }

    /// Tolerant lexicographic comparison.
    pub fn cmp_tol(&self, other: &LexCost) -> Ordering {
        let tol = EPS * self.primary.abs().max(other.primary.abs()).max(1.0);
        if self.primary < other.primary - tol {
            return Ordering::Less;
        }
        if self.primary > other.primary + tol {
            return Ordering::Greater;
        }
        let tol = EPS * self.secondary.abs().max(other.secondary.abs()).max(1.0);
        if self.secondary < other.secondary - tol {
            Ordering::Less
        } else if self.secondary > other.secondary + tol {
            Ordering::Greater
        } else {
            Ordering::Equal
        }
    }

    pub fn lt(&self, other: &LexCost) -> bool {
        self.cmp_tol(other) == Ordering::Less
    }
}

impl Add for LexCost {
    type Output = LexCost;
    fn add(self, o: LexCost) -> LexCost {
        LexCost::new(self.primary + o.primary, self.secondary + o.secondary)
    }
}

impl Sub for LexCost {
    type Output = LexCost;
    fn sub(self, o: LexCost) -> LexCost {
        LexCost::new(self.primary - o.primary, self.secondary - o.secondary)
    }
}

impl Neg for LexCost {
    type Output = LexCost;
    fn neg(self) -> LexCost {
        LexCost::new(-self.primary, -self.secondary)
    }
}

#[derive(Debug, Clone)]
struct Arc {
    to: usize,
    cap: i64,
    cost: LexCost,
}

#[derive(Debug, Clone)]
pub(crate) struct FlowNetwork {
    arcs: Vec<Arc>,
    adj: Vec<Vec<usize>>,
}

impl FlowNetwork {
    pub fn new(nodes: usize) -> Self {
        FlowNetwork {
            arcs: Vec::new(),
            adj: vec![Vec::new(); nodes],
        }
    }

    /// Adds `from -> to` and its residual twin; returns the forward arc id.
    pub fn add_arc(&mut self, from: usize, to: usize, cap: i64, cost: LexCost) -> usize {
        let id = self.arcs.len();
        self.arcs.push(Arc { to, cap, cost });
        self.arcs.push(Arc {
            to: from,
            cap: 0,
            cost: -cost,
        });
        self.adj[from].push(id);
        self.adj[to].push(id + 1);
        id
    }

    /// Flow currently on forward arc `id`.
    pub fn flow(&self, id: usize) -> i64 {
        self.arcs[id + 1].cap
    }

    /// Pushes up to `limit` units from `source` to `sink` along successive
    /// shortest paths. Returns (units sent, total cost).
    pub fn min_cost_flow(&mut self, source: usize, sink: usize, limit: i64) -> (i64, LexCost) {
        let nodes = self.adj.len();
        let mut sent = 0i64;
        let mut total = LexCost::ZERO;
        while sent < limit {
            let mut dist: Vec<Option<LexCost>> = vec![None; nodes];
            let mut prev_arc = vec![usize::MAX; nodes];
            let mut in_queue = vec![false; nodes];
            let mut visits = vec![0usize; nodes];
            let mut queue = VecDeque::new();
            dist[source] = Some(LexCost::ZERO);
            queue.push_back(source);
            in_queue[source] = true;
            while let Some(u) = queue.pop_front() {
                in_queue[u] = false;
                let du = dist[u].expect("queued nodes have a distance");
                for &a in &self.adj[u] {
                    let arc = &self.arcs[a];
                    if arc.cap <= 0 {
                        continue;
                    }
                    let cand = du + arc.cost;
                    let better = match dist[arc.to] {
                        None => true,
                        Some(d) => cand.lt(&d),
                    };
                    if better {
                        dist[arc.to] = Some(cand);
                        prev_arc[arc.to] = a;
                        // rounding can fake a tiny negative cycle; cap revisits
                        if !in_queue[arc.to] && visits[arc.to] <= nodes {
                            visits[arc.to] += 1;
                            in_queue[arc.to] = true;
                            queue.push_back(arc.to);
                        }
                    }
                }
            }
            let Some(path_cost) = dist[sink] else {
                break;
            };
            let mut push = limit - sent;
            let mut v = sink;
            while v != source {
                let a = prev_arc[v];
                push = push.min(self.arcs[a].cap);
                v = self.arcs[a ^ 1].to;
            }
            let mut v = sink;
            while v != source {
                let a = prev_arc[v];
                self.arcs[a].cap -= push;
                self.arcs[a ^ 1].cap += push;
                v = self.arcs[a ^ 1].to;
            }
            sent += push;
            total = total + path_cost.scale(push);
        }
        (sent, total)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn picks_cheaper_parallel_route() {
        // s -> a -> t (cost 1, cap 3), s -> b -> t (cost 2, cap 10)
        let mut g = FlowNetwork::new(4);
        g.add_arc(0, 1, 3, LexCost::ZERO);
        g.add_arc(0, 2, 10, LexCost::ZERO);
        let a = g.add_arc(1, 3, 10, LexCost::new(1.0, 0.0));
        let b = g.add_arc(2, 3, 10, LexCost::new(2.0, 0.0));
        let (sent, cost) = g.min_cost_flow(0, 3, 5);
        assert_eq!(sent, 5);
        assert_eq!(g.flow(a), 3);
        assert_eq!(g.flow(b), 2);
        assert!((cost.primary - 7.0).abs() < 1e-12);
    }

    #[test]
    fn secondary_breaks_primary_ties() {
        let mut g = FlowNetwork::new(3);
        let slow = g.add_arc(0, 1, 5, LexCost::new(1.0, 50.0));
        let fast = g.add_arc(0, 1, 5, LexCost::new(1.0, 10.0));
        g.add_arc(1, 2, 5, LexCost::ZERO);
        g.min_cost_flow(0, 2, 5);
        assert_eq!(g.flow(fast), 5);
        assert_eq!(g.flow(slow), 0);
    }

    #[test]
    fn reroutes_through_residual_arcs() {
        // Classic case where the second path must cancel flow on the first.
        let mut g = FlowNetwork::new(4);
        g.add_arc(0, 1, 1, LexCost::new(1.0, 0.0));
        g.add_arc(0, 2, 1, LexCost::new(5.0, 0.0));
        g.add_arc(1, 2, 1, LexCost::new(1.0, 0.0));
        g.add_arc(1, 3, 1, LexCost::new(5.0, 0.0));
        g.add_arc(2, 3, 1, LexCost::new(1.0, 0.0));
        let (sent, cost) = g.min_cost_flow(0, 3, 2);
        assert_eq!(sent, 2);
        assert!((cost.primary - 12.0).abs() < 1e-12);
    }
}
