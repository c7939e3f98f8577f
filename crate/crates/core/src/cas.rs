//! Runtime scheduler: per-origin routing weights derived from an hourly
//! plan, and request-by-request dispatch with capacity tracking.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::cap::{CapInstance, ProvisioningPlan};
use crate::trace::LatencyMatrix;

/// Row-stochastic routing weights for one hour.
///
/// `w[i][j]` is the probability a request arriving at `i` is forwarded to
/// `j`. An all-zero row means the origin had no planned demand; dispatch
/// then serves locally. `f` and `t` are the aggregate destination shares
/// and loads of the plan, kept for reporting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoutingWeights {
    pub hour: u32,
    pub w: Vec<Vec<f64>>,
    pub f: Vec<f64>,
    pub t: Vec<u64>,
}

impl RoutingWeights {
    pub fn n(&self) -> usize {
        self.w.len()
    }

    pub fn is_fallback(&self, origin: usize) -> bool {
        self.w[origin].iter().all(|&v| v == 0.0)
    }
}

pub fn derive_weights(plan: &ProvisioningPlan) -> RoutingWeights {
    let n = plan.x.len();
    let t = plan.loads();
    let total: u64 = t.iter().sum();
    let f = t
        .iter()
        .map(|&v| if total == 0 { 0.0 } else { v as f64 / total as f64 })
        .collect();
    let w = plan
        .x
        .iter()
        .map(|row| {
            let sum: u64 = row.iter().sum();
            if sum == 0 {
                vec![0.0; n]
            } else {
                row.iter().map(|&v| v as f64 / sum as f64).collect()
            }
        })
        .collect();
    RoutingWeights {
        hour: plan.hour,
        w,
        f,
        t,
    }
}

/// Per-hour capacity accounting at each destination.
#[derive(Debug, Clone, PartialEq)]
pub struct RegionLoadState {
    pub served: Vec<u64>,
    pub capacity: Vec<u64>,
    pub overloads: Vec<u64>,
}

impl RegionLoadState {
    pub fn new(capacity: Vec<u64>) -> Self {
        let n = capacity.len();
        RegionLoadState {
            served: vec![0; n],
            capacity,
            overloads: vec![0; n],
        }
    }

    /// Capacity `s_j * c_j` from a plan.
    pub fn from_plan(plan: &ProvisioningPlan, per_server: &[u64]) -> Self {
        RegionLoadState::new(
            plan.s
                .iter()
                .zip(per_server)
                .map(|(&s, &c)| s.saturating_mul(c))
                .collect(),
        )
    }

    /// Effectively unbounded capacity everywhere.
    pub fn unbounded(n: usize) -> Self {
        RegionLoadState::new(vec![u64::MAX; n])
    }

    pub fn has_spare(&self, j: usize) -> bool {
        self.served[j] < self.capacity[j]
    }
}

/// What dispatch needs to know about the hour besides the weights.
#[derive(Debug, Clone, PartialEq)]
pub struct DispatchContext {
    /// Carbon intensity used to rank spillover targets.
    pub intensity: Vec<f64>,
    pub latency: LatencyMatrix,
    /// Latency ceiling for spillover. `None` disables spillover: a full
    /// destination overloads the origin instead.
    pub slo_ms: Option<f64>,
}

impl DispatchContext {
    pub fn from_instance(inst: &CapInstance) -> Self {
        DispatchContext {
            intensity: inst.intensity().to_vec(),
            latency: inst.latency().clone(),
            slo_ms: Some(inst.slo_ms()),
        }
    }

    pub fn local_only(intensity: Vec<f64>, latency: LatencyMatrix) -> Self {
        DispatchContext {
            intensity,
            latency,
            slo_ms: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Planned,
    Spillover,
    LocalOverload,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Dispatch {
    pub dest: usize,
    pub outcome: Outcome,
}

/// Samples a destination for one request arriving at `origin`.
///
/// Full destinations spill over to the lowest-carbon region within the
/// latency ceiling that still has room (ties: lower latency, then lower
/// index). If there is none the request is served at the origin anyway and
/// counted as an overload there.
pub fn dispatch<R: Rng + ?Sized>(
    origin: usize,
    weights: &RoutingWeights,
    state: &mut RegionLoadState,
    ctx: &DispatchContext,
    rng: &mut R,
) -> Dispatch {
    let sampled = sample_row(&weights.w[origin], rng).unwrap_or(origin);
    if state.has_spare(sampled) {
        state.served[sampled] += 1;
        return Dispatch {
            dest: sampled,
            outcome: Outcome::Planned,
        };
    }

    if let Some(slo) = ctx.slo_ms {
        let n = state.served.len();
        let spill = (0..n)
            .filter(|&j| ctx.latency.get(origin, j) <= slo && state.has_spare(j))
            .min_by(|&a, &b| {
                ctx.intensity[a]
                    .total_cmp(&ctx.intensity[b])
                    .then(ctx.latency.get(origin, a).total_cmp(&ctx.latency.get(origin, b)))
                    .then(a.cmp(&b))
            });
        if let Some(j) = spill {
            state.served[j] += 1;
            return Dispatch {
                dest: j,
                outcome: Outcome::Spillover,
            };
        }
    }

    state.served[origin] += 1;
    state.overloads[origin] += 1;
    Dispatch {
        dest: origin,
        outcome: Outcome::LocalOverload,
    }
}

fn sample_row<R: Rng + ?Sized>(row: &[f64], rng: &mut R) -> Option<usize> {
    let last = row.iter().rposition(|&v| v > 0.0)?;
    if row.iter().filter(|&&v| v > 0.0).count() == 1 {
        return Some(last);
    }
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (j, &v) in row.iter().enumerate() {
        acc += v;
        if v > 0.0 && u < acc {
            return Some(j);
        }
    }
    Some(last)
}
