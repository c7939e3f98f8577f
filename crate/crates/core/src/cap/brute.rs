//! Exhaustive reference solver for tiny instances. Used as a test oracle;
//! it shares no code with the branch-and-bound path beyond the instance
//! type.

use std::collections::BTreeMap;

use super::{CapError, CapInstance, ProvisioningPlan};

/// Objective, total latency, routing, servers.
type Candidate = (f64, f64, Vec<Vec<u64>>, Vec<u64>);

/// Size guard for [`brute_force_cap`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BruteForceLimits {
    pub max_regions: usize,
    pub max_servers: u64,
    pub max_demand: u64,
    pub max_capacity: u64,
}

impl Default for BruteForceLimits {
    fn default() -> Self {
        BruteForceLimits {
            max_regions: 3,
            max_servers: 4,
            max_demand: 6,
            max_capacity: 3,
        }
    }
}

pub fn brute_force_cap(inst: &CapInstance) -> Result<ProvisioningPlan, CapError> {
    brute_force_cap_with_limits(inst, BruteForceLimits::default())
}

pub fn brute_force_cap_with_limits(inst: &CapInstance, limits: BruteForceLimits) -> Result<ProvisioningPlan, CapError> {
    let n = inst.n();
    if n > limits.max_regions {
        return Err(CapError::InstanceTooLarge(format!(
            "{n} regions > {}",
            limits.max_regions
        )));
    }
    if inst.max_servers() > limits.max_servers {
        return Err(CapError::InstanceTooLarge(format!(
            "K = {} > {}",
            inst.max_servers(),
            limits.max_servers
        )));
    }
    if let Some(d) = inst.demand().iter().find(|&&d| d > limits.max_demand) {
        return Err(CapError::InstanceTooLarge(format!(
            "demand {d} > {}",
            limits.max_demand
        )));
    }
    if let Some(c) = inst.capacity().iter().find(|&&c| c > limits.max_capacity) {
        return Err(CapError::InstanceTooLarge(format!(
            "capacity {c} > {}",
            limits.max_capacity
        )));
    }

    // Every routing matrix, grouped by the destination loads it produces.
    // For each load vector keep the lowest-latency matrix.
    let mut by_loads: BTreeMap<Vec<u64>, (f64, Vec<Vec<u64>>)> = BTreeMap::new();
    let mut x = vec![vec![0u64; n]; n];
    enumerate_rows(inst, 0, &mut x, &mut |x| {
        let mut loads = vec![0u64; n];
        let mut latency = 0.0;
        for (i, row) in x.iter().enumerate() {
            for (j, &v) in row.iter().enumerate() {
                loads[j] += v;
                latency += v as f64 * inst.latency().get(i, j);
            }
        }
        let keep = match by_loads.get(&loads) {
            Some((best, _)) => latency < *best,
            None => true,
        };
        if keep {
            by_loads.insert(loads, (latency, x.to_vec()));
        }
    });

    let demand_total: u64 = inst.demand().iter().sum();
    let peak = inst.intensity().iter().copied().fold(0.0f64, f64::max);
    let penalty = 10.0 * n as f64;
    let alpha = inst.alpha();
    let budget = inst.max_servers();

    let mut best: Option<Candidate> = None;
    let mut s = vec![0u64; n];
    for (loads, (latency, x)) in &by_loads {
        let served: u64 = loads.iter().sum();
        let unserved = demand_total - served;
        let carbon: f64 = loads.iter().zip(inst.intensity()).map(|(&t, &i)| t as f64 * i).sum();
        let carbon_norm = if demand_total == 0 || peak <= 0.0 {
            0.0
        } else {
            carbon / (peak * demand_total as f64)
        };
        // every server vector with sum <= K
        enumerate_servers(n, budget, 0, &mut s, &mut |s| {
            for j in 0..n {
                if loads[j] > s[j] * inst.capacity()[j] {
                    return;
                }
                if loads[j] == 0 && s[j] > 0 {
                    return;
                }
            }
            let servers: u64 = s.iter().sum();
            let objective =
                alpha * carbon_norm + (1.0 - alpha) * servers as f64 / budget as f64 + penalty * unserved as f64;
            let better = match &best {
                None => true,
                Some((bo, bl, _, _)) => {
                    objective < bo - 1e-12 || ((objective - bo).abs() <= 1e-12 && *latency < bl - 1e-9)
                }
            };
            if better {
                best = Some((objective, *latency, x.clone(), s.to_vec()));
            }
        });
    }

    let (_, _, x, s) = best.expect("the all-unserved plan is always feasible");
    let unserved = (0..n).map(|i| inst.demand()[i] - x[i].iter().sum::<u64>()).collect();
    Ok(ProvisioningPlan::from_parts(inst, x, s, unserved))
}

fn enumerate_rows(inst: &CapInstance, origin: usize, x: &mut Vec<Vec<u64>>, visit: &mut dyn FnMut(&[Vec<u64>])) {
    let n = inst.n();
    if origin == n {
        visit(x);
        return;
    }
    let allowed: Vec<usize> = (0..n).filter(|&j| inst.arc_allowed(origin, j)).collect();
    fill_row(inst, origin, &allowed, 0, inst.demand()[origin], x, visit);
}

fn fill_row(
    inst: &CapInstance,
    origin: usize,
    allowed: &[usize],
    k: usize,
    remaining: u64,
    x: &mut Vec<Vec<u64>>,
    visit: &mut dyn FnMut(&[Vec<u64>]),
) {
    if k == allowed.len() {
        enumerate_rows(inst, origin + 1, x, visit);
        return;
    }
    let j = allowed[k];
    for v in 0..=remaining {
        x[origin][j] = v;
        fill_row(inst, origin, allowed, k + 1, remaining - v, x, visit);
    }
    x[origin][j] = 0;
}

fn enumerate_servers(n: usize, remaining: u64, j: usize, s: &mut Vec<u64>, visit: &mut dyn FnMut(&[u64])) {
    if j == n {
        visit(s);
        return;
    }
    for v in 0..=remaining {
        s[j] = v;
        enumerate_servers(n, remaining - v, j + 1, s, visit);
    }
    s[j] = 0;
}
