//! Trace-driven, discrete-time simulation.
//!
//! Every hour: forecast carbon and demand, plan with the configured policy,
//! derive routing weights, then generate per-timestep arrivals for each
//! origin and dispatch them one request at a time. Latency is the network
//! term `l[origin][dest]` only; there is no queueing or service-time model.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cap::{CapError, ProvisioningPlan};
use crate::cas::{derive_weights, dispatch, Outcome, RegionLoadState};
use crate::policy::{plan_hour, HourInputs, PolicyError, PolicySpec};
use crate::trace::{Forecaster, LatencyMatrix, TraceError, Traces};

/// Workload traces are in requests/second; plans and arrivals use
/// requests/hour.
pub const SECONDS_PER_HOUR: f64 = 3600.0;

/// Upper truncation point of per-timestep arrivals, as a multiple of the
/// timestep mean.
pub const ARRIVAL_CAP_FACTOR: f64 = 1.5;

/// Note written into every report about the arrival generator's bias.
pub const ARRIVAL_NOTE: &str = "per-timestep arrivals are exponential draws truncated to [0, 1.5 x mean] by \
     rejection; realised volume averages about 0.57 x the trace rate; latency is network latency only";

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("TraceExhausted: hour {hour} is outside the trace hours {start}..{end}")]
    TraceExhausted { hour: u32, start: u32, end: u32 },
    #[error("InvalidConfig: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Trace(#[from] TraceError),
    #[error(transparent)]
    Policy(#[from] PolicyError),
}

impl From<CapError> for SimError {
    fn from(e: CapError) -> Self {
        SimError::Policy(PolicyError::Cap(e))
    }
}

impl SimError {
    pub fn name(&self) -> &'static str {
        match self {
            SimError::TraceExhausted { .. } => "TraceExhausted",
            SimError::InvalidConfig(_) => "InvalidConfig",
            SimError::Trace(e) => e.name(),
            SimError::Policy(e) => e.name(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub hours: u32,
    pub timesteps_per_hour: u32,
    pub seed: u64,
    /// kWh consumed per request.
    pub energy_per_request_kwh: f64,
    pub policy: PolicySpec,
    pub carbon_forecaster: Forecaster,
    pub workload_forecaster: Forecaster,
    /// When set, hourly reports also carry counts per bucket of this many
    /// minutes.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bucket_minutes: Option<u32>,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            hours: 24,
            timesteps_per_hour: 60,
            seed: 42,
            energy_per_request_kwh: 1e-4,
            policy: PolicySpec::latency(),
            carbon_forecaster: Forecaster::oracle(),
            workload_forecaster: Forecaster::oracle(),
            bucket_minutes: None,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        if self.timesteps_per_hour == 0 {
            return Err(SimError::InvalidConfig("timesteps_per_hour must be >= 1".into()));
        }
        if !self.energy_per_request_kwh.is_finite() || self.energy_per_request_kwh <= 0.0 {
            return Err(SimError::InvalidConfig("energy_per_request must be > 0".into()));
        }
        if self.bucket_minutes == Some(0) {
            return Err(SimError::InvalidConfig("bucket_minutes must be >= 1".into()));
        }
        self.policy.validate()?;
        Ok(())
    }
}

/// Draws per-timestep request counts for one origin-hour.
///
/// Each timestep's count is an exponential draw with mean
/// `per_hour / timesteps`, redrawn while it exceeds 1.5 times that mean,
/// then rounded to the nearest integer.
pub fn generate_arrivals<R: rand::Rng + ?Sized>(per_hour: f64, timesteps: u32, rng: &mut R) -> Vec<u64> {
    let steps = timesteps as usize;
    if per_hour.is_nan() || per_hour <= 0.0 || per_hour.is_infinite() || steps == 0 {
        return vec![0; steps];
    }
    let mean = per_hour / timesteps as f64;
    let cap = ARRIVAL_CAP_FACTOR * mean;
    let exp = Exp::new(1.0 / mean).expect("positive finite rate");
    (0..steps)
        .map(|_| loop {
            let v: f64 = exp.sample(rng);
            if v <= cap {
                break v.round() as u64;
            }
        })
        .collect()
}

/// State carried from one hour to the next: only the generators.
/// Arrivals and routing draw from separate streams so the workload
/// realisation does not depend on the policy.
#[derive(Debug, Clone)]
pub struct SimState {
    arrivals: ChaCha8Rng,
    routing: ChaCha8Rng,
}

impl SimState {
    pub fn new(seed: u64) -> Self {
        let arrivals = ChaCha8Rng::seed_from_u64(seed);
        let mut routing = ChaCha8Rng::seed_from_u64(seed);
        routing.set_stream(1);
        SimState { arrivals, routing }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionHour {
    pub region: String,
    pub originated: u64,
    pub served: u64,
    pub emissions_g: f64,
    /// served / (servers * capacity); 0 with no servers.
    pub utilization: f64,
    pub overloads: u64,
    pub spillovers_in: u64,
    pub servers: u64,
    pub capacity: u64,
    pub unserved_planned: u64,
    /// Mean latency of requests originating here.
    pub mean_latency_ms: f64,
    /// True carbon intensity this hour.
    pub intensity: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bucket {
    pub start_minute: u32,
    pub originated: Vec<u64>,
    pub served: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HourlyReport {
    pub hour: u32,
    pub regions: Vec<RegionHour>,
    /// `routed[i][j]`: requests from origin `i` served at `j`.
    pub routed: Vec<Vec<u64>>,
    pub mean_latency_ms: f64,
    pub p95_latency_ms: f64,
    /// Requests served past the latency ceiling (local overloads at an
    /// origin whose own latency exceeds it).
    pub slo_violations: u64,
    pub spillovers: u64,
    pub overloads: u64,
    pub plan: ProvisioningPlan,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub buckets: Vec<Bucket>,
}

impl HourlyReport {
    pub fn total_originated(&self) -> u64 {
        self.regions.iter().map(|r| r.originated).sum()
    }

    pub fn total_served(&self) -> u64 {
        self.regions.iter().map(|r| r.served).sum()
    }

    pub fn total_emissions_g(&self) -> f64 {
        self.regions.iter().map(|r| r.emissions_g).sum()
    }
}

/// Mean and nearest-rank 95th percentile latency of a routed-count matrix.
pub fn latency_stats(routed: &[Vec<u64>], latency: &LatencyMatrix) -> (f64, f64) {
    let mut total = 0u64;
    let mut sum = 0.0;
    let mut samples = Vec::new();
    for (i, row) in routed.iter().enumerate() {
        for (j, &count) in row.iter().enumerate() {
            if count > 0 {
                let ms = latency.get(i, j);
                total += count;
                sum += count as f64 * ms;
                samples.push((ms, count));
            }
        }
    }
    if total == 0 {
        return (0.0, 0.0);
    }
    samples.sort_by(|a, b| a.0.total_cmp(&b.0));
    let rank = (0.95 * total as f64).ceil() as u64;
    let mut seen = 0;
    let mut p95 = samples.last().map_or(0.0, |s| s.0);
    for (ms, count) in samples {
        seen += count;
        if seen >= rank {
            p95 = ms;
            break;
        }
    }
    (sum / total as f64, p95)
}

/// Forecast carbon intensity and expected arrivals (requests/hour) for
/// `hour`, as the planner sees them.
pub fn forecast_hour(hour: u32, traces: &Traces, config: &SimConfig) -> Result<(Vec<f64>, Vec<f64>), SimError> {
    let carbon = config.carbon_forecaster.forecast_all(&traces.carbon, hour)?;
    let expected = config
        .workload_forecaster
        .forecast_all(&traces.workload, hour)?
        .into_iter()
        .map(|r| r * SECONDS_PER_HOUR)
        .collect();
    Ok((carbon, expected))
}

/// Simulates one hour.
pub fn run_hour(
    hour: u32,
    traces: &Traces,
    config: &SimConfig,
    state: &mut SimState,
) -> Result<HourlyReport, SimError> {
    if !traces.carbon.contains(hour) || !traces.workload.contains(hour) {
        return Err(SimError::TraceExhausted {
            hour,
            start: traces.start_hour(),
            end: traces.end_hour(),
        });
    }
    let n = traces.n();
    let steps = config.timesteps_per_hour.max(1);

    let (carbon_forecast, expected) = forecast_hour(hour, traces, config)?;
    let inputs = HourInputs {
        regions: &traces.regions,
        carbon: &carbon_forecast,
        expected_arrivals: &expected,
        latency: &traces.latency,
    };
    let (plan, ctx) = plan_hour(&config.policy, &inputs)?;
    let plan = plan.with_hour(hour);
    let weights = derive_weights(&plan);
    let per_server = config
        .policy
        .capacity
        .iter()
        .copied()
        .cycle()
        .take(n)
        .collect::<Vec<_>>();
    let mut load = RegionLoadState::from_plan(&plan, &per_server);

    let arrivals: Vec<Vec<u64>> = (0..n)
        .map(|i| {
            let rate = traces.workload.get(i, hour).expect("hour checked above");
            generate_arrivals(rate * SECONDS_PER_HOUR, steps, &mut state.arrivals)
        })
        .collect();

    let bucket_of = |t: u32| -> Option<usize> {
        config
            .bucket_minutes
            .map(|b| ((t as u64 * 60 / steps as u64) / b as u64) as usize)
    };
    let bucket_count = config.bucket_minutes.map_or(0, |b| 60u32.div_ceil(b) as usize);
    let mut buckets: Vec<Bucket> = (0..bucket_count)
        .map(|k| Bucket {
            start_minute: k as u32 * config.bucket_minutes.unwrap_or(60),
            originated: vec![0; n],
            served: vec![0; n],
        })
        .collect();

    let mut routed = vec![vec![0u64; n]; n];
    let mut spill_in = vec![0u64; n];
    let mut spillovers = 0u64;
    let mut slo_violations = 0u64;
    for t in 0..steps {
        let bucket = bucket_of(t);
        for origin in 0..n {
            let count = arrivals[origin][t as usize];
            for _ in 0..count {
                let d = dispatch(origin, &weights, &mut load, &ctx, &mut state.routing);
                routed[origin][d.dest] += 1;
                match d.outcome {
                    Outcome::Planned => {}
                    Outcome::Spillover => {
                        spillovers += 1;
                        spill_in[d.dest] += 1;
                    }
                    Outcome::LocalOverload => {
                        if ctx.slo_ms.is_some_and(|slo| traces.latency.get(origin, origin) > slo) {
                            slo_violations += 1;
                        }
                    }
                }
                if let Some(b) = bucket {
                    buckets[b].served[d.dest] += 1;
                }
            }
            if let Some(b) = bucket {
                buckets[b].originated[origin] += count;
            }
        }
    }

    let (mean_latency_ms, p95_latency_ms) = latency_stats(&routed, &traces.latency);
    let regions = (0..n)
        .map(|j| {
            let originated: u64 = routed[j].iter().sum();
            let served: u64 = routed.iter().map(|row| row[j]).sum();
            let intensity = traces.carbon.get(j, hour).expect("hour checked above");
            let capacity = load.capacity[j];
            let origin_latency: f64 = routed[j]
                .iter()
                .enumerate()
                .map(|(k, &c)| c as f64 * traces.latency.get(j, k))
                .sum();
            RegionHour {
                region: traces.regions.name(j).to_string(),
                originated,
                served,
                emissions_g: served as f64 * intensity * config.energy_per_request_kwh,
                utilization: if capacity == 0 {
                    0.0
                } else {
                    served as f64 / capacity as f64
                },
                overloads: load.overloads[j],
                spillovers_in: spill_in[j],
                servers: plan.s[j],
                capacity,
                unserved_planned: plan.unserved[j],
                mean_latency_ms: if originated == 0 {
                    0.0
                } else {
                    origin_latency / originated as f64
                },
                intensity,
            }
        })
        .collect();

    Ok(HourlyReport {
        hour,
        regions,
        routed,
        mean_latency_ms,
        p95_latency_ms,
        slo_violations,
        spillovers,
        overloads: load.overloads.iter().sum(),
        plan,
        buckets,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionSummary {
    pub region: String,
    pub originated: u64,
    pub served: u64,
    pub emissions_g: f64,
    pub overloads: u64,
    pub server_hours: u64,
    pub mean_servers: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryReport {
    pub policy: String,
    pub hours: u32,
    pub total_originated: u64,
    pub total_served: u64,
    pub total_emissions_g: f64,
    pub mean_latency_ms: f64,
    pub p95_latency_ms: f64,
    pub total_overloads: u64,
    pub total_spillovers: u64,
    pub total_slo_violations: u64,
    pub total_unserved_planned: u64,
    pub per_region: Vec<RegionSummary>,
    pub routed: Vec<Vec<u64>>,
    pub note: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationRun {
    pub hourly: Vec<HourlyReport>,
    pub summary: SummaryReport,
}

/// Runs `config.hours` hours starting at the first trace hour.
pub fn run_simulation(config: &SimConfig, traces: &Traces) -> Result<SimulationRun, SimError> {
    config.validate()?;
    let mut state = SimState::new(config.seed);
    let start = traces.start_hour();
    let hourly = (start..start + config.hours)
        .map(|h| run_hour(h, traces, config, &mut state))
        .collect::<Result<Vec<_>, _>>()?;
    let summary = summarize(&config.policy.name(), &hourly, traces);
    Ok(SimulationRun { hourly, summary })
}

pub fn summarize(policy: &str, hourly: &[HourlyReport], traces: &Traces) -> SummaryReport {
    let n = traces.n();
    let mut routed = vec![vec![0u64; n]; n];
    let mut per_region: Vec<RegionSummary> = traces
        .regions
        .names()
        .iter()
        .map(|name| RegionSummary {
            region: name.clone(),
            originated: 0,
            served: 0,
            emissions_g: 0.0,
            overloads: 0,
            server_hours: 0,
            mean_servers: 0.0,
        })
        .collect();
    let mut summary = SummaryReport {
        policy: policy.to_string(),
        hours: hourly.len() as u32,
        total_originated: 0,
        total_served: 0,
        total_emissions_g: 0.0,
        mean_latency_ms: 0.0,
        p95_latency_ms: 0.0,
        total_overloads: 0,
        total_spillovers: 0,
        total_slo_violations: 0,
        total_unserved_planned: 0,
        per_region: Vec::new(),
        routed: Vec::new(),
        note: ARRIVAL_NOTE.to_string(),
    };
    for report in hourly {
        for (acc, r) in per_region.iter_mut().zip(&report.regions) {
            acc.originated += r.originated;
            acc.served += r.served;
            acc.emissions_g += r.emissions_g;
            acc.overloads += r.overloads;
            acc.server_hours += r.servers;
            summary.total_emissions_g += r.emissions_g;
            summary.total_unserved_planned += r.unserved_planned;
        }
        for (acc, row) in routed.iter_mut().zip(&report.routed) {
            for (a, v) in acc.iter_mut().zip(row) {
                *a += v;
            }
        }
        summary.total_overloads += report.overloads;
        summary.total_spillovers += report.spillovers;
        summary.total_slo_violations += report.slo_violations;
    }
    for r in &mut per_region {
        r.mean_servers = if hourly.is_empty() {
            0.0
        } else {
            r.server_hours as f64 / hourly.len() as f64
        };
    }
    summary.total_originated = per_region.iter().map(|r| r.originated).sum();
    summary.total_served = per_region.iter().map(|r| r.served).sum();
    let (mean, p95) = latency_stats(&routed, &traces.latency);
    summary.mean_latency_ms = mean;
    summary.p95_latency_ms = p95;
    summary.per_region = per_region;
    summary.routed = routed;
    summary
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trace::{HourlyTrace, RegionSet};

    #[test]
    fn zero_rate_gives_zero_arrivals() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert_eq!(generate_arrivals(0.0, 60, &mut rng), vec![0; 60]);
    }

    #[test]
    fn arrivals_respect_truncation_bound() {
        for seed in 0..10_000u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let v = generate_arrivals(6000.0, 60, &mut rng);
            assert_eq!(v.len(), 60);
            assert!(v.iter().all(|&c| c <= 150), "seed {seed}: {v:?}");
        }
    }

    #[test]
    fn arrivals_golden_seed_42() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let v = generate_arrivals(6000.0, 60, &mut rng);
        assert_eq!(v, GOLDEN_SEED_42);
    }

    // Recorded from the first run; guards generator reproducibility.
    const GOLDEN_SEED_42: [u64; 60] = [
        88, 149, 65, 147, 32, 20, 129, 130, 33, 114, 144, 86, 22, 140, 10, 16, 29, 21, 24, 37, 75, 80, 83, 29, 82, 10,
        131, 2, 95, 112, 91, 10, 67, 15, 131, 17, 115, 109, 22, 15, 126, 15, 90, 29, 2, 106, 43, 8, 103, 44, 7, 22,
        109, 32, 63, 32, 47, 118, 12, 26,
    ];

    #[test]
    fn latency_stats_nearest_rank() {
        let lat = LatencyMatrix::from_rows(vec![vec![1.0, 100.0], vec![100.0, 2.0]]).unwrap();
        // 96 requests at 1 ms, 4 at 100 ms: p95 rank 95 falls in the 1 ms group
        let (mean, p95) = latency_stats(&[vec![96, 4], vec![0, 0]], &lat);
        assert!((mean - 4.96).abs() < 1e-12);
        assert_eq!(p95, 1.0);
        let (_, p95) = latency_stats(&[vec![90, 10], vec![0, 0]], &lat);
        assert_eq!(p95, 100.0);
        assert_eq!(latency_stats(&[vec![0, 0], vec![0, 0]], &lat), (0.0, 0.0));
    }

    fn one_region(hours: usize) -> Traces {
        Traces::new(
            RegionSet::new(["solo"]).unwrap(),
            LatencyMatrix::uniform(1, 3.0),
            HourlyTrace::new(0, vec![vec![200.0; hours]]).unwrap(),
            HourlyTrace::new(0, vec![vec![1.0; hours]]).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn single_region_serves_locally() {
        let traces = one_region(3);
        let cfg = SimConfig {
            hours: 3,
            policy: PolicySpec::latency(),
            ..SimConfig::default()
        };
        let run = run_simulation(&cfg, &traces).unwrap();
        for h in &run.hourly {
            assert_eq!(h.total_originated(), h.total_served());
            if h.total_served() > 0 {
                assert_eq!(h.mean_latency_ms, 3.0);
            }
        }
    }

    #[test]
    fn hour_past_trace_end() {
        let traces = one_region(2);
        let mut state = SimState::new(1);
        let err = run_hour(2, &traces, &SimConfig::default(), &mut state).unwrap_err();
        assert_eq!(err.name(), "TraceExhausted");
    }

    #[test]
    fn zero_hours_is_empty() {
        let traces = one_region(2);
        let cfg = SimConfig {
            hours: 0,
            ..SimConfig::default()
        };
        let run = run_simulation(&cfg, &traces).unwrap();
        assert!(run.hourly.is_empty());
        assert_eq!(run.summary.total_emissions_g, 0.0);
        assert_eq!(run.summary.total_served, 0);
    }

    #[test]
    fn ten_minute_buckets_partition_the_hour() {
        let traces = one_region(1);
        let cfg = SimConfig {
            hours: 1,
            bucket_minutes: Some(10),
            ..SimConfig::default()
        };
        let run = run_simulation(&cfg, &traces).unwrap();
        let h = &run.hourly[0];
        assert_eq!(h.buckets.len(), 6);
        let total: u64 = h.buckets.iter().map(|b| b.originated[0]).sum();
        assert_eq!(total, h.total_originated());
        let served: u64 = h.buckets.iter().map(|b| b.served[0]).sum();
        assert_eq!(served, h.total_served());
    }
}
