//! Hourly provisioning problem: choose integer server counts per region and
//! integer request counts per (origin, destination) arc.
//!
//! The objective weighs normalised carbon against normalised server count:
//!
//! ```text
//! alpha * sum_j I_j t_j / (I_max * Lambda) + (1 - alpha) * sum_j s_j / K + P * sum_i u_i
//! ```
//!
//! where `t_j` is the load routed to `j`, `Lambda` the total expected demand
//! and `u_i` demand that no feasible placement could absorb (penalised by
//! `P = 10 n`, which dominates every routing choice).

mod brute;
mod flow;
mod solve;
mod verify;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::trace::{LatencyMatrix, RegionSet};

pub use brute::{brute_force_cap, brute_force_cap_with_limits, BruteForceLimits};
pub use solve::solve_cap;
pub use verify::{verify_plan, Violation};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CapError {
    #[error("DimensionMismatch: {0}")]
    DimensionMismatch(String),
    #[error("InvalidParam: {0}")]
    InvalidParam(String),
    #[error("InstanceTooLarge: {0}")]
    InstanceTooLarge(String),
}

impl CapError {
    pub fn name(&self) -> &'static str {
        match self {
            CapError::DimensionMismatch(_) => "DimensionMismatch",
            CapError::InvalidParam(_) => "InvalidParam",
            CapError::InstanceTooLarge(_) => "InstanceTooLarge",
        }
    }
}

/// Policy knobs shared by every hour of a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CapParams {
    pub alpha: f64,
    /// Latency ceiling in ms.
    pub slo_ms: f64,
    /// Requests per server per hour; one entry per region, or a single
    /// entry applied to all regions.
    pub capacity: Vec<u64>,
    pub max_servers: u64,
}

impl CapParams {
    pub fn capacity_for(&self, n: usize) -> Result<Vec<u64>, CapError> {
        match self.capacity.len() {
            1 => Ok(vec![self.capacity[0]; n]),
            len if len == n => Ok(self.capacity.clone()),
            len => Err(CapError::DimensionMismatch(format!(
                "capacity has {len} entries for {n} regions"
            ))),
        }
    }
}

/// One validated hourly problem instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CapInstance {
    intensity: Vec<f64>,
    demand: Vec<u64>,
    latency: LatencyMatrix,
    slo_ms: f64,
    capacity: Vec<u64>,
    max_servers: u64,
    alpha: f64,
}

impl CapInstance {
    pub fn new(
        intensity: Vec<f64>,
        demand: Vec<u64>,
        latency: LatencyMatrix,
        slo_ms: f64,
        capacity: Vec<u64>,
        max_servers: u64,
        alpha: f64,
    ) -> Result<Self, CapError> {
        let n = intensity.len();
        if n == 0 {
            return Err(CapError::DimensionMismatch("instance has no regions".into()));
        }
        if demand.len() != n || capacity.len() != n || latency.len() != n {
            return Err(CapError::DimensionMismatch(format!(
                "intensity {n}, demand {}, capacity {}, latency {}",
                demand.len(),
                capacity.len(),
                latency.len()
            )));
        }
        if let Some(v) = intensity.iter().find(|v| !v.is_finite() || **v < 0.0) {
            return Err(CapError::InvalidParam(format!("carbon intensity {v}")));
        }
        if !(0.0..=1.0).contains(&alpha) {
            return Err(CapError::InvalidParam(format!("alpha {alpha} outside [0, 1]")));
        }
        if slo_ms.is_nan() || slo_ms <= 0.0 {
            return Err(CapError::InvalidParam(format!("latency SLO {slo_ms} must be > 0")));
        }
        if capacity.contains(&0) {
            return Err(CapError::InvalidParam("per-server capacity must be >= 1".into()));
        }
        if max_servers == 0 {
            return Err(CapError::InvalidParam("server budget K must be >= 1".into()));
        }
        Ok(CapInstance {
            intensity,
            demand,
            latency,
            slo_ms,
            capacity,
            max_servers,
            alpha,
        })
    }

    pub fn n(&self) -> usize {
        self.intensity.len()
    }

    pub fn intensity(&self) -> &[f64] {
        &self.intensity
    }

    pub fn demand(&self) -> &[u64] {
        &self.demand
    }

    pub fn latency(&self) -> &LatencyMatrix {
        &self.latency
    }

    pub fn slo_ms(&self) -> f64 {
        self.slo_ms
    }

    pub fn capacity(&self) -> &[u64] {
        &self.capacity
    }

    pub fn max_servers(&self) -> u64 {
        self.max_servers
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn total_demand(&self) -> u64 {
        self.demand.iter().sum()
    }

    pub fn max_intensity(&self) -> f64 {
        self.intensity.iter().copied().fold(0.0, f64::max)
    }

    /// Per-request penalty for unserved demand.
    pub fn penalty(&self) -> f64 {
        10.0 * self.n() as f64
    }

    /// Whether origin `i` may send requests to `j` under the SLO.
    pub fn arc_allowed(&self, i: usize, j: usize) -> bool {
        self.latency.get(i, j) <= self.slo_ms
    }

    /// Every (origin, destination) pair within the latency ceiling.
    pub fn feasible_arcs(&self) -> Vec<(usize, usize)> {
        let n = self.n();
        (0..n)
            .flat_map(|i| (0..n).map(move |j| (i, j)))
            .filter(|&(i, j)| self.arc_allowed(i, j))
            .collect()
    }

    /// Per-request normalised carbon weight of destination `j`.
    pub(crate) fn unit_carbon(&self, j: usize) -> f64 {
        let total = self.total_demand();
        let peak = self.max_intensity();
        if total == 0 || peak <= 0.0 {
            return 0.0;
        }
        self.alpha * (self.intensity[j] / peak) / total as f64
    }

    /// Normalised cost of a single server.
    pub(crate) fn unit_server(&self) -> f64 {
        (1.0 - self.alpha) / self.max_servers as f64
    }

    /// Raw carbon term `sum_j I_j t_j`.
    pub fn carbon_term(&self, loads: &[u64]) -> f64 {
        loads.iter().zip(&self.intensity).map(|(&t, &i)| i * t as f64).sum()
    }

    /// Objective value of a candidate given destination loads, server counts
    /// and total unserved demand.
    pub fn objective(&self, loads: &[u64], servers: &[u64], unserved: u64) -> f64 {
        let total = self.total_demand();
        let peak = self.max_intensity();
        let carbon = if total == 0 || peak <= 0.0 {
            0.0
        } else {
            self.carbon_term(loads) / (peak * total as f64)
        };
        let servers: u64 = servers.iter().sum();
        self.alpha * carbon
            + (1.0 - self.alpha) * servers as f64 / self.max_servers as f64
            + self.penalty() * unserved as f64
    }

    /// Copy with every carbon intensity multiplied by `factor`.
    pub fn scaled_intensity(&self, factor: f64) -> CapInstance {
        CapInstance {
            intensity: self.intensity.iter().map(|v| v * factor).collect(),
            ..self.clone()
        }
    }

    /// Copy with a different latency ceiling.
    pub fn with_slo(&self, slo_ms: f64) -> Result<CapInstance, CapError> {
        CapInstance::new(
            self.intensity.clone(),
            self.demand.clone(),
            self.latency.clone(),
            slo_ms,
            self.capacity.clone(),
            self.max_servers,
            self.alpha,
        )
    }
}

/// Rounds expected arrivals half-up to whole requests.
pub fn round_demand(expected: f64) -> u64 {
    (expected + 0.5).floor() as u64
}

/// Builds an instance from hourly forecasts. `expected_arrivals` is in
/// requests per hour.
pub fn build_instance(
    regions: &RegionSet,
    carbon: &[f64],
    expected_arrivals: &[f64],
    latency: &LatencyMatrix,
    params: &CapParams,
) -> Result<CapInstance, CapError> {
    let n = regions.len();
    if carbon.len() != n || expected_arrivals.len() != n || latency.len() != n {
        return Err(CapError::DimensionMismatch(format!(
            "{n} regions but carbon {}, workload {}, latency {}",
            carbon.len(),
            expected_arrivals.len(),
            latency.len()
        )));
    }
    if let Some(v) = expected_arrivals.iter().find(|v| !v.is_finite() || **v < 0.0) {
        return Err(CapError::InvalidParam(format!("expected arrivals {v}")));
    }
    let demand = expected_arrivals.iter().map(|&v| round_demand(v)).collect();
    CapInstance::new(
        carbon.to_vec(),
        demand,
        latency.clone(),
        params.slo_ms,
        params.capacity_for(n)?,
        params.max_servers,
        params.alpha,
    )
}

/// Server counts and routing counts for one hour.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProvisioningPlan {
    pub hour: u32,
    pub s: Vec<u64>,
    pub x: Vec<Vec<u64>>,
    pub unserved: Vec<u64>,
    pub objective: f64,
    pub carbon_term: f64,
    pub server_term: u64,
}

impl ProvisioningPlan {
    /// Assembles a plan and fills in its objective terms from `inst`.
    pub fn from_parts(inst: &CapInstance, x: Vec<Vec<u64>>, s: Vec<u64>, unserved: Vec<u64>) -> Self {
        let loads = column_sums(&x);
        let total_unserved = unserved.iter().sum();
        ProvisioningPlan {
            hour: 0,
            objective: inst.objective(&loads, &s, total_unserved),
            carbon_term: inst.carbon_term(&loads),
            server_term: s.iter().sum(),
            s,
            x,
            unserved,
        }
    }

    pub fn with_hour(mut self, hour: u32) -> Self {
        self.hour = hour;
        self
    }

    pub fn n(&self) -> usize {
        self.s.len()
    }

    /// Requests planned into each destination (`t_j`).
    pub fn loads(&self) -> Vec<u64> {
        column_sums(&self.x)
    }

    /// Total latency of the planned routing, `sum x_ij * l_ij`.
    pub fn total_latency(&self, latency: &LatencyMatrix) -> f64 {
        let mut total = 0.0;
        for (i, row) in self.x.iter().enumerate() {
            for (j, &v) in row.iter().enumerate() {
                total += v as f64 * latency.get(i, j);
            }
        }
        total
    }

    pub fn total_unserved(&self) -> u64 {
        self.unserved.iter().sum()
    }
}

pub(crate) fn column_sums(x: &[Vec<u64>]) -> Vec<u64> {
    let n = x.first().map_or(0, Vec::len);
    let mut loads = vec![0u64; n];
    for row in x {
        for (j, &v) in row.iter().enumerate() {
            loads[j] += v;
        }
    }
    loads
}
