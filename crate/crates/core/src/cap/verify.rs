use std::fmt;

use serde::{Deserialize, Serialize};

use super::{column_sums, CapInstance, ProvisioningPlan};

/// A constraint a plan fails to satisfy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum Violation {
    /// Plan vectors do not match the instance size.
    Shape { detail: String },
    /// Routed plus unserved demand differs from the origin's expected arrivals.
    DemandNotConserved {
        origin: usize,
        routed: u64,
        unserved: u64,
        demand: u64,
    },
    /// Load routed to a destination exceeds its provisioned capacity.
    CapacityExceeded { dest: usize, load: u64, capacity: u64 },
    /// Total servers exceed the global budget.
    ServerBudgetExceeded { servers: u64, budget: u64 },
    /// Requests routed over an arc slower than the latency ceiling.
    SloArcUsed {
        origin: usize,
        dest: usize,
        requests: u64,
        latency_ms: f64,
    },
    /// Servers provisioned in a region that receives no requests.
    IdleServers { dest: usize, servers: u64 },
    /// Reported objective terms disagree with the plan contents.
    TermMismatch {
        term: String,
        reported: f64,
        recomputed: f64,
    },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::Shape { detail } => write!(f, "shape: {detail}"),
            Violation::DemandNotConserved {
                origin,
                routed,
                unserved,
                demand,
            } => write!(
                f,
                "origin {origin}: routed {routed} + unserved {unserved} != demand {demand}"
            ),
            Violation::CapacityExceeded { dest, load, capacity } => {
                write!(f, "destination {dest}: load {load} > capacity {capacity}")
            }
            Violation::ServerBudgetExceeded { servers, budget } => {
                write!(f, "{servers} servers exceed budget {budget}")
            }
            Violation::SloArcUsed {
                origin,
                dest,
                requests,
                latency_ms,
            } => write!(f, "{requests} requests on {origin}->{dest} at {latency_ms} ms"),
            Violation::IdleServers { dest, servers } => {
                write!(f, "destination {dest}: {servers} servers with no load")
            }
            Violation::TermMismatch {
                term,
                reported,
                recomputed,
            } => write!(f, "{term}: reported {reported}, recomputed {recomputed}"),
        }
    }
}

/// Checks every plan constraint directly, without reference to how the plan
/// was produced. An empty result means the plan is valid for `inst`.
pub fn verify_plan(inst: &CapInstance, plan: &ProvisioningPlan) -> Vec<Violation> {
    let n = inst.n();
    let mut out = Vec::new();
    if plan.s.len() != n || plan.unserved.len() != n || plan.x.len() != n || plan.x.iter().any(|r| r.len() != n) {
        out.push(Violation::Shape {
            detail: format!(
                "instance has {n} regions; plan s={}, unserved={}, x rows={}",
                plan.s.len(),
                plan.unserved.len(),
                plan.x.len()
            ),
        });
        return out;
    }

    for i in 0..n {
        let routed: u64 = plan.x[i].iter().sum();
        if routed + plan.unserved[i] != inst.demand()[i] {
            out.push(Violation::DemandNotConserved {
                origin: i,
                routed,
                unserved: plan.unserved[i],
                demand: inst.demand()[i],
            });
        }
    }

    let loads = column_sums(&plan.x);
    for j in 0..n {
        let capacity = plan.s[j].saturating_mul(inst.capacity()[j]);
        if loads[j] > capacity {
            out.push(Violation::CapacityExceeded {
                dest: j,
                load: loads[j],
                capacity,
            });
        }
        if loads[j] == 0 && plan.s[j] > 0 {
            out.push(Violation::IdleServers {
                dest: j,
                servers: plan.s[j],
            });
        }
    }

    let servers: u64 = plan.s.iter().sum();
    if servers > inst.max_servers() {
        out.push(Violation::ServerBudgetExceeded {
            servers,
            budget: inst.max_servers(),
        });
    }

    for i in 0..n {
        for j in 0..n {
            if plan.x[i][j] > 0 && !inst.arc_allowed(i, j) {
                out.push(Violation::SloArcUsed {
                    origin: i,
                    dest: j,
                    requests: plan.x[i][j],
                    latency_ms: inst.latency().get(i, j),
                });
            }
        }
    }

    if plan.server_term != servers {
        out.push(Violation::TermMismatch {
            term: "server_term".into(),
            reported: plan.server_term as f64,
            recomputed: servers as f64,
        });
    }
    let carbon = inst.carbon_term(&loads);
    if (plan.carbon_term - carbon).abs() > 1e-9 * carbon.abs().max(1.0) {
        out.push(Violation::TermMismatch {
            term: "carbon_term".into(),
            reported: plan.carbon_term,
            recomputed: carbon,
        });
    }
    let objective = inst.objective(&loads, &plan.s, plan.unserved.iter().sum());
    if (plan.objective - objective).abs() > 1e-9 * objective.abs().max(1.0) {
        out.push(Violation::TermMismatch {
            term: "objective".into(),
            reported: plan.objective,
            recomputed: objective,
        });
    }
    out
}
