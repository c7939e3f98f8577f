//! Exact branch-and-bound over per-region server counts.
//!
//! Relaxing `s_j` to be continuous turns the server term into a per-request
//! surcharge `b / c_j` on top of the destination's carbon weight, so every
//! node's relaxation is a min-cost flow: origins feed destinations over
//! SLO-feasible arcs, destinations drain into the sink through a "base"
//! segment (the `lo_j * c_j` requests already paid for by the node's lower
//! bound) and a surcharged segment that shares the remaining server budget
//! through a hub. Branching splits a destination whose relaxed load needs a
//! fractional number of servers.

use super::flow::{FlowNetwork, LexCost};
use super::{CapInstance, ProvisioningPlan};

#[derive(Debug, Clone)]
struct Node {
    lo: Vec<u64>,
    hi: Vec<u64>,
}

struct Relaxed {
    bound: LexCost,
    x: Vec<Vec<u64>>,
    loads: Vec<u64>,
}

struct Incumbent {
    value: LexCost,
    x: Vec<Vec<u64>>,
    s: Vec<u64>,
}

/// Solves the hourly provisioning problem to proven optimality.
///
/// Among optima the plan with the lowest total routed latency is returned.
pub fn solve_cap(inst: &CapInstance) -> ProvisioningPlan {
    let n = inst.n();
    let budget = inst.max_servers();
    let caps = inst.capacity();

    let hi0 = (0..n)
        .map(|j| {
            let reach: u64 = (0..n)
                .filter(|&i| inst.arc_allowed(i, j))
                .map(|i| inst.demand()[i])
                .sum();
            reach.div_ceil(caps[j]).min(budget)
        })
        .collect();

    let mut best: Option<Incumbent> = None;
    let mut stack = vec![Node {
        lo: vec![0; n],
        hi: hi0,
    }];

    while let Some(mut node) = stack.pop() {
        let Some(relaxed) = relax(inst, &mut node) else {
            continue;
        };
        if let Some(b) = &best {
            if !relaxed.bound.lt(&b.value) {
                continue;
            }
        }

        let rounded: Vec<u64> = (0..n).map(|j| relaxed.loads[j].div_ceil(caps[j])).collect();
        let servers: u64 = rounded.iter().sum();
        if servers <= budget {
            let candidate = Incumbent {
                value: value_of(inst, &relaxed.x, &relaxed.loads, &rounded),
                x: relaxed.x.clone(),
                s: rounded.clone(),
            };
            if best.as_ref().is_none_or(|b| candidate.value.lt(&b.value)) {
                best = Some(candidate);
            }
        }

        // A destination whose load is not covered by the node's paid-for
        // servers and needs a fractional count in the relaxation.
        let fractional = (0..n)
            .filter(|&j| {
                let t = relaxed.loads[j];
                t > node.lo[j] * caps[j] && t % caps[j] != 0
            })
            .max_by(|&a, &b| {
                let fa = frac_distance(relaxed.loads[a], caps[a]);
                let fb = frac_distance(relaxed.loads[b], caps[b]);
                fa.total_cmp(&fb).then(b.cmp(&a))
            });

        if let Some(j) = fractional {
            let t = relaxed.loads[j];
            let mut down = node.clone();
            down.hi[j] = t / caps[j];
            let mut up = node;
            up.lo[j] = t.div_ceil(caps[j]);
            stack.push(down);
            stack.push(up);
        } else if servers > budget {
            // Only reachable with unequal capacities, where the hub budget
            // is a relaxation of the weighted server constraint.
            let j = (0..n)
                .filter(|&j| rounded[j] > node.lo[j])
                .max_by_key(|&j| (rounded[j], std::cmp::Reverse(j)))
                .expect("over-budget relaxation has a server count above its lower bound");
            let mut down = node.clone();
            down.hi[j] = rounded[j] - 1;
            let mut up = node;
            up.lo[j] = rounded[j];
            stack.push(down);
            stack.push(up);
        }
    }

    let best = best.expect("the root relaxation always yields a budget-feasible rounding or a branch");
    let unserved = (0..n)
        .map(|i| inst.demand()[i] - best.x[i].iter().sum::<u64>())
        .collect();
    ProvisioningPlan::from_parts(inst, best.x, best.s, unserved)
}

fn frac_distance(load: u64, cap: u64) -> f64 {
    let f = (load % cap) as f64 / cap as f64;
    0.5 - (f - 0.5).abs()
}

fn value_of(inst: &CapInstance, x: &[Vec<u64>], loads: &[u64], s: &[u64]) -> LexCost {
    let served: u64 = loads.iter().sum();
    let unserved = inst.total_demand() - served;
    let mut latency = 0.0;
    for (i, row) in x.iter().enumerate() {
        for (j, &v) in row.iter().enumerate() {
            latency += v as f64 * inst.latency().get(i, j);
        }
    }
    LexCost::new(inst.objective(loads, s, unserved), latency)
}

/// Tightens the node's bounds and solves its relaxation. `None` when the
/// node admits no solution.
fn relax(inst: &CapInstance, node: &mut Node) -> Option<Relaxed> {
    let n = inst.n();
    let budget = inst.max_servers();
    let caps = inst.capacity();

    let committed: u64 = node.lo.iter().sum();
    if committed > budget {
        return None;
    }
    for j in 0..n {
        node.hi[j] = node.hi[j].min(budget - (committed - node.lo[j]));
        if node.lo[j] > node.hi[j] {
            return None;
        }
    }

    let source = 0;
    let origin = |i: usize| 1 + i;
    let dest = |j: usize| 1 + n + j;
    let hub = 1 + 2 * n;
    let sink = 2 + 2 * n;
    let mut g = FlowNetwork::new(3 + 2 * n);

    let server_cost = inst.unit_server();
    let penalty = inst.penalty();
    let mut route_arcs = vec![vec![None; n]; n];
    for i in 0..n {
        let demand = inst.demand()[i] as i64;
        g.add_arc(source, origin(i), demand, LexCost::ZERO);
        for j in 0..n {
            if inst.arc_allowed(i, j) {
                route_arcs[i][j] =
                    Some(g.add_arc(origin(i), dest(j), demand, LexCost::new(0.0, inst.latency().get(i, j))));
            }
        }
        g.add_arc(origin(i), sink, demand, LexCost::new(penalty, 0.0));
    }
    let max_cap = caps.iter().copied().max().unwrap_or(1);
    for j in 0..n {
        let carbon = inst.unit_carbon(j);
        let base = node.lo[j] * caps[j];
        if base > 0 {
            g.add_arc(dest(j), sink, clamp_i64(base), LexCost::new(carbon, 0.0));
        }
        let extra = (node.hi[j] - node.lo[j]) * caps[j];
        if extra > 0 {
            g.add_arc(
                dest(j),
                hub,
                clamp_i64(extra),
                LexCost::new(carbon + server_cost / caps[j] as f64, 0.0),
            );
        }
    }
    g.add_arc(
        hub,
        sink,
        clamp_i64((budget - committed).saturating_mul(max_cap)),
        LexCost::ZERO,
    );

    let total = inst.total_demand() as i64;
    let (sent, cost) = g.min_cost_flow(source, sink, total);
    debug_assert_eq!(sent, total, "unserved arcs make every node flow-feasible");

    let mut x = vec![vec![0u64; n]; n];
    let mut loads = vec![0u64; n];
    for i in 0..n {
        for j in 0..n {
            if let Some(a) = route_arcs[i][j] {
                let f = g.flow(a) as u64;
                x[i][j] = f;
                loads[j] += f;
            }
        }
    }
    let bound = cost + LexCost::new(server_cost * committed as f64, 0.0);
    Some(Relaxed { bound, x, loads })
}

fn clamp_i64(v: u64) -> i64 {
    v.min(i64::MAX as u64) as i64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cap::{brute_force_cap, brute_force_cap_with_limits, verify_plan, BruteForceLimits};
    use crate::trace::LatencyMatrix;

    fn two_region(cross: f64) -> CapInstance {
        let lat = LatencyMatrix::from_rows(vec![vec![1.0, cross], vec![cross, 1.0]]).unwrap();
        CapInstance::new(vec![100.0, 10.0], vec![100, 0], lat, 20.0, vec![100, 100], 5, 1.0).unwrap()
    }

    #[test]
    fn single_region_is_forced() {
        let inst = CapInstance::new(
            vec![100.0],
            vec![100],
            LatencyMatrix::uniform(1, 1.0),
            50.0,
            vec![100],
            10,
            0.5,
        )
        .unwrap();
        let plan = solve_cap(&inst);
        assert_eq!(plan.x, vec![vec![100]]);
        assert_eq!(plan.s, vec![1]);
        assert_eq!(plan.unserved, vec![0]);
        assert!(verify_plan(&inst, &plan).is_empty());
    }

    #[test]
    fn demand_moves_to_greener_reachable_region() {
        let inst = two_region(20.0);
        let plan = solve_cap(&inst);
        assert_eq!(plan.x, vec![vec![0, 100], vec![0, 0]]);
        assert_eq!(plan.s, vec![0, 1]);
        assert_eq!(plan.unserved, vec![0, 0]);

        // oracle: exhaustive search with the guard widened to this instance
        let limits = BruteForceLimits {
            max_regions: 2,
            max_servers: 5,
            max_demand: 100,
            max_capacity: 100,
        };
        let oracle = brute_force_cap_with_limits(&inst, limits).unwrap();
        assert!((oracle.objective - plan.objective).abs() < 1e-9);
        assert_eq!(oracle.x, plan.x);
    }

    #[test]
    fn unreachable_green_region_is_ignored() {
        let inst = two_region(30.0);
        let plan = solve_cap(&inst);
        assert_eq!(plan.x[0][0], 100);
        assert_eq!(plan.s, vec![1, 0]);
        let limits = BruteForceLimits {
            max_regions: 2,
            max_servers: 5,
            max_demand: 100,
            max_capacity: 100,
        };
        let oracle = brute_force_cap_with_limits(&inst, limits).unwrap();
        assert!((oracle.objective - plan.objective).abs() < 1e-9);
    }

    #[test]
    fn zero_demand_gives_empty_plan() {
        let inst = CapInstance::new(
            vec![5.0, 9.0],
            vec![0, 0],
            LatencyMatrix::uniform(2, 1.0),
            10.0,
            vec![3, 3],
            4,
            0.5,
        )
        .unwrap();
        let plan = solve_cap(&inst);
        assert_eq!(plan.s, vec![0, 0]);
        assert_eq!(plan.x, vec![vec![0, 0], vec![0, 0]]);
        assert_eq!(plan.objective, 0.0);
    }

    #[test]
    fn budget_shortfall_leaves_unserved_demand() {
        let inst = CapInstance::new(
            vec![10.0],
            vec![5],
            LatencyMatrix::uniform(1, 1.0),
            50.0,
            vec![1],
            2,
            0.5,
        )
        .unwrap();
        let plan = solve_cap(&inst);
        assert_eq!(plan.unserved, vec![3]);
        assert_eq!(plan.s, vec![2]);
    }

    #[test]
    fn consolidation_beats_carbon_when_servers_dominate() {
        // With alpha = 0 only servers matter: 3 + 3 requests fit on two
        // servers of capacity 3, wherever they go.
        let inst = CapInstance::new(
            vec![1.0, 2.0],
            vec![3, 3],
            LatencyMatrix::uniform(2, 1.0),
            10.0,
            vec![3, 3],
            4,
            0.0,
        )
        .unwrap();
        let plan = solve_cap(&inst);
        assert_eq!(plan.server_term, 2);
        let oracle = brute_force_cap(&inst).unwrap();
        assert!((oracle.objective - plan.objective).abs() < 1e-9);
    }

    #[test]
    fn unequal_capacities_respect_budget() {
        let inst = CapInstance::new(
            vec![10.0, 20.0, 30.0],
            vec![6, 6, 6],
            LatencyMatrix::uniform(3, 1.0),
            10.0,
            vec![3, 2, 1],
            4,
            0.5,
        )
        .unwrap();
        let plan = solve_cap(&inst);
        assert!(verify_plan(&inst, &plan).is_empty());
        let oracle = brute_force_cap(&inst).unwrap();
        assert!((oracle.objective - plan.objective).abs() < 1e-9);
    }
}
