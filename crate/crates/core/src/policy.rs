//! The policy family compared in experiments: a latency-only baseline that
//! serves everything locally, and carbon-optimising policies parameterised
//! by a latency ceiling.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cap::{build_instance, round_demand, solve_cap, CapError, CapInstance, CapParams, ProvisioningPlan};
use crate::cas::DispatchContext;
use crate::sim::{run_simulation, SimConfig, SimError, SimulationRun};
use crate::trace::{LatencyMatrix, RegionSet, Traces};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PolicyError {
    #[error("InvalidSpec: {0}")]
    InvalidSpec(String),
    #[error(transparent)]
    Cap(#[from] CapError),
}

impl PolicyError {
    pub fn name(&self) -> &'static str {
        match self {
            PolicyError::InvalidSpec(_) => "InvalidSpec",
            PolicyError::Cap(e) => e.name(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PolicyKind {
    /// Every request served in its origin region.
    LatencyBaseline,
    /// Carbon optimisation under a latency ceiling in ms.
    CarbonL { slo_ms: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicySpec {
    pub kind: PolicyKind,
    pub alpha: f64,
    /// Requests per server per hour (one entry, or one per region).
    pub capacity: Vec<u64>,
    pub max_servers: u64,
}

impl PolicySpec {
    /// Baseline with the default evaluation parameters.
    pub fn latency() -> Self {
        PolicySpec {
            kind: PolicyKind::LatencyBaseline,
            alpha: 0.5,
            capacity: vec![100],
            max_servers: 500,
        }
    }

    /// Carbon policy with the default evaluation parameters.
    pub fn carbon(slo_ms: f64) -> Self {
        PolicySpec {
            kind: PolicyKind::CarbonL { slo_ms },
            ..PolicySpec::latency()
        }
    }

    pub fn with_params(mut self, alpha: f64, capacity: Vec<u64>, max_servers: u64) -> Self {
        self.alpha = alpha;
        self.capacity = capacity;
        self.max_servers = max_servers;
        self
    }

    pub fn is_baseline(&self) -> bool {
        matches!(self.kind, PolicyKind::LatencyBaseline)
    }

    /// Display name, e.g. `Latency` or `Carbon-100`.
    pub fn name(&self) -> String {
        match self.kind {
            PolicyKind::LatencyBaseline => "Latency".to_string(),
            PolicyKind::CarbonL { slo_ms } => format!("Carbon-{slo_ms}"),
        }
    }

    pub fn validate(&self) -> Result<(), PolicyError> {
        if let PolicyKind::CarbonL { slo_ms } = self.kind {
            if !slo_ms.is_finite() || slo_ms <= 0.0 {
                return Err(PolicyError::InvalidSpec(format!(
                    "latency ceiling {slo_ms} must be > 0"
                )));
            }
        }
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(PolicyError::InvalidSpec(format!("alpha {} outside [0, 1]", self.alpha)));
        }
        if self.capacity.is_empty() || self.capacity.contains(&0) {
            return Err(PolicyError::InvalidSpec("per-server capacity must be >= 1".into()));
        }
        if self.max_servers == 0 {
            return Err(PolicyError::InvalidSpec("server budget must be >= 1".into()));
        }
        Ok(())
    }

    pub fn cap_params(&self, slo_ms: f64) -> CapParams {
        CapParams {
            alpha: self.alpha,
            slo_ms,
            capacity: self.capacity.clone(),
            max_servers: self.max_servers,
        }
    }
}

impl fmt::Display for PolicyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PolicyKind::LatencyBaseline => write!(f, "latency"),
            PolicyKind::CarbonL { slo_ms } => write!(f, "carbon-{slo_ms}"),
        }
    }
}

/// Parses `latency` or `carbon-<ms>` (case-insensitive).
impl FromStr for PolicyKind {
    type Err = PolicyError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let lower = s.trim().to_ascii_lowercase();
        if lower == "latency" || lower == "baseline" {
            return Ok(PolicyKind::LatencyBaseline);
        }
        let ms = lower
            .strip_prefix("carbon-")
            .ok_or_else(|| PolicyError::InvalidSpec(format!("unknown policy '{s}'")))?;
        let slo_ms: f64 = ms
            .parse()
            .map_err(|_| PolicyError::InvalidSpec(format!("bad latency ceiling in '{s}'")))?;
        if !slo_ms.is_finite() || slo_ms <= 0.0 {
            return Err(PolicyError::InvalidSpec(format!(
                "latency ceiling {slo_ms} must be > 0"
            )));
        }
        Ok(PolicyKind::CarbonL { slo_ms })
    }
}

/// Forecast inputs for one hour.
#[derive(Debug, Clone, Copy)]
pub struct HourInputs<'a> {
    pub regions: &'a RegionSet,
    pub carbon: &'a [f64],
    /// Expected arrivals per region, requests/hour.
    pub expected_arrivals: &'a [f64],
    pub latency: &'a LatencyMatrix,
}

#[derive(Debug, Clone, PartialEq)]
pub enum PolicyDecision {
    /// Hand the instance to the optimizer.
    Solve(CapInstance),
    /// A plan fixed by the policy itself. The instance is kept for cost
    /// accounting only.
    Fixed {
        plan: ProvisioningPlan,
        instance: CapInstance,
    },
}

pub fn apply_policy(spec: &PolicySpec, inputs: &HourInputs<'_>) -> Result<PolicyDecision, PolicyError> {
    spec.validate()?;
    match spec.kind {
        PolicyKind::CarbonL { slo_ms } => Ok(PolicyDecision::Solve(build_instance(
            inputs.regions,
            inputs.carbon,
            inputs.expected_arrivals,
            inputs.latency,
            &spec.cap_params(slo_ms),
        )?)),
        PolicyKind::LatencyBaseline => {
            let instance = build_instance(
                inputs.regions,
                inputs.carbon,
                inputs.expected_arrivals,
                inputs.latency,
                &spec.cap_params(f64::MAX),
            )?;
            let n = instance.n();
            let demand: Vec<u64> = inputs.expected_arrivals.iter().map(|&v| round_demand(v)).collect();
            let mut x = vec![vec![0u64; n]; n];
            for (i, &d) in demand.iter().enumerate() {
                x[i][i] = d;
            }
            let s = demand
                .iter()
                .zip(instance.capacity())
                .map(|(&d, &c)| d.div_ceil(c))
                .collect();
            let plan = ProvisioningPlan::from_parts(&instance, x, s, vec![0; n]);
            Ok(PolicyDecision::Fixed { plan, instance })
        }
    }
}

/// Resolves a policy decision into the hour's plan and dispatch rules.
pub fn plan_hour(
    spec: &PolicySpec,
    inputs: &HourInputs<'_>,
) -> Result<(ProvisioningPlan, DispatchContext), PolicyError> {
    Ok(match apply_policy(spec, inputs)? {
        PolicyDecision::Solve(inst) => {
            let plan = solve_cap(&inst);
            (plan, DispatchContext::from_instance(&inst))
        }
        PolicyDecision::Fixed { plan, instance } => (
            plan,
            DispatchContext::local_only(instance.intensity().to_vec(), instance.latency().clone()),
        ),
    })
}

/// Headline numbers for one policy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyComparison {
    pub name: String,
    pub total_emissions_g: f64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub reduction_vs_baseline: Option<f64>,
    pub mean_latency_ms: f64,
    pub p95_latency_ms: f64,
    pub total_overloads: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub policies: Vec<PolicyComparison>,
}

impl ComparisonReport {
    /// Builds the comparison; reductions are relative to the first baseline
    /// run in the list, if any.
    pub fn from_runs(specs: &[PolicySpec], runs: &[SimulationRun]) -> Self {
        let baseline = specs
            .iter()
            .position(PolicySpec::is_baseline)
            .map(|k| runs[k].summary.total_emissions_g);
        let policies = specs
            .iter()
            .zip(runs)
            .map(|(spec, run)| {
                let e = run.summary.total_emissions_g;
                PolicyComparison {
                    name: spec.name(),
                    total_emissions_g: e,
                    reduction_vs_baseline: baseline.map(|b| if b > 0.0 { 1.0 - e / b } else { 0.0 }),
                    mean_latency_ms: run.summary.mean_latency_ms,
                    p95_latency_ms: run.summary.p95_latency_ms,
                    total_overloads: run.summary.total_overloads,
                }
            })
            .collect();
        ComparisonReport { policies }
    }

    pub fn get(&self, name: &str) -> Option<&PolicyComparison> {
        self.policies.iter().find(|p| p.name == name)
    }
}

#[derive(Debug, Clone)]
pub struct SweepResult {
    pub specs: Vec<PolicySpec>,
    pub runs: Vec<SimulationRun>,
    pub comparison: ComparisonReport,
}

/// Runs every policy over the same traces with the same seed. Runs execute
/// in parallel; results keep the input order.
pub fn sweep(policies: &[PolicySpec], config: &SimConfig, traces: &Traces) -> Result<SweepResult, SimError> {
    if policies.is_empty() {
        return Err(SimError::InvalidConfig("sweep needs at least one policy".into()));
    }
    let runs = policies
        .par_iter()
        .map(|spec| {
            let cfg = SimConfig {
                policy: spec.clone(),
                ..config.clone()
            };
            run_simulation(&cfg, traces)
        })
        .collect::<Result<Vec<_>, _>>()?;
    let comparison = ComparisonReport::from_runs(policies, &runs);
    Ok(SweepResult {
        specs: policies.to_vec(),
        runs,
        comparison,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn inputs<'a>(rs: &'a RegionSet, lat: &'a LatencyMatrix, carbon: &'a [f64], load: &'a [f64]) -> HourInputs<'a> {
        HourInputs {
            regions: rs,
            carbon,
            expected_arrivals: load,
            latency: lat,
        }
    }

    #[test]
    fn baseline_is_diagonal_with_ceil_servers() {
        let rs = RegionSet::new(["a", "b"]).unwrap();
        let lat = LatencyMatrix::uniform(2, 5.0);
        let d = apply_policy(&PolicySpec::latency(), &inputs(&rs, &lat, &[1.0, 2.0], &[100.0, 200.0])).unwrap();
        let PolicyDecision::Fixed { plan, .. } = d else {
            panic!("baseline must bypass the solver")
        };
        assert_eq!(plan.x, vec![vec![100, 0], vec![0, 200]]);
        assert_eq!(plan.s, vec![1, 2]);

        let d = apply_policy(&PolicySpec::latency(), &inputs(&rs, &lat, &[1.0, 2.0], &[150.0, 0.0])).unwrap();
        let PolicyDecision::Fixed { plan, .. } = d else {
            panic!()
        };
        assert_eq!(plan.s, vec![2, 0]);
    }

    #[test]
    fn carbon_policy_forwards_ceiling() {
        let rs = RegionSet::new(["a", "b"]).unwrap();
        let lat = LatencyMatrix::from_rows(vec![vec![1.0, 25.0], vec![25.0, 1.0]]).unwrap();
        let d = apply_policy(&PolicySpec::carbon(20.0), &inputs(&rs, &lat, &[1.0, 2.0], &[1.0, 1.0])).unwrap();
        let PolicyDecision::Solve(inst) = d else { panic!() };
        assert_eq!(inst.slo_ms(), 20.0);
        assert_eq!(inst.feasible_arcs(), vec![(0, 0), (1, 1)]);
    }

    #[test]
    fn zero_ceiling_is_invalid() {
        let rs = RegionSet::new(["a"]).unwrap();
        let lat = LatencyMatrix::uniform(1, 1.0);
        let err = apply_policy(&PolicySpec::carbon(0.0), &inputs(&rs, &lat, &[1.0], &[1.0])).unwrap_err();
        assert_eq!(err.name(), "InvalidSpec");
        assert_eq!("carbon-0".parse::<PolicyKind>().unwrap_err().name(), "InvalidSpec");
    }

    #[test]
    fn policy_names_round_trip() {
        for s in ["latency", "carbon-20", "carbon-500", "carbon-12.5"] {
            let k: PolicyKind = s.parse().unwrap();
            assert_eq!(k.to_string(), s);
        }
        assert_eq!(PolicySpec::carbon(100.0).name(), "Carbon-100");
        assert!("carbon".parse::<PolicyKind>().is_err());
    }
}
