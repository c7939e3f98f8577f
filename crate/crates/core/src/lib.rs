//! Carbon-aware provisioning and request scheduling for geo-distributed web
//! services.
//!
//! Each simulated hour the provisioner solves an integer program that places
//! servers and routes expected demand across regions, trading grid carbon
//! intensity against server count under a latency ceiling. The scheduler
//! turns the resulting plan into per-origin routing weights and dispatches
//! individual requests, spilling over to the greenest reachable region when
//! the planned destination is full.

#![allow(clippy::needless_range_loop)]

pub mod cap;
pub mod cas;
pub mod policy;
pub mod report;
pub mod sim;
pub mod synthetic;
pub mod trace;

pub use cap::{brute_force_cap, solve_cap, verify_plan, CapInstance, CapParams, ProvisioningPlan, Violation};
pub use cas::{derive_weights, dispatch, DispatchContext, Outcome, RegionLoadState, RoutingWeights};
pub use policy::{apply_policy, sweep, ComparisonReport, PolicyKind, PolicySpec};
pub use sim::{generate_arrivals, run_hour, run_simulation, HourlyReport, SimConfig, SimState, SummaryReport};
pub use trace::{
    load_carbon_trace, load_latency_matrix, load_region_set, load_workload_trace, CarbonTrace, Forecaster, HourlyTrace,
    LatencyMatrix, RegionSet, TraceError, Traces, WorkloadTrace,
};
