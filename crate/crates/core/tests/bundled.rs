use std::path::PathBuf;

use carbon_sched::policy::sweep;
use carbon_sched::{run_simulation, synthetic, PolicySpec, SimConfig, Traces};

fn data_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data")
}

fn bundled() -> Traces {
    let dir = data_dir();
    Traces::load(
        dir.join("regions.csv"),
        dir.join("latency.csv"),
        dir.join("carbon.csv"),
        dir.join("workload.csv"),
    )
    .unwrap()
}

#[test]
fn bundled_files_match_generator() {
    assert_eq!(bundled(), synthetic::generate(7));
}

#[test]
fn day_run_reports_every_region_hour() {
    let traces = bundled();
    let config = SimConfig {
        hours: 24,
        policy: PolicySpec::carbon(20.0),
        ..SimConfig::default()
    };
    let run = run_simulation(&config, &traces).unwrap();
    assert_eq!(run.hourly.len(), 24);
    assert!(run.hourly.iter().all(|h| h.regions.len() == 6));
    assert!(run.hourly.iter().all(|h| h.plan.s.iter().sum::<u64>() <= 500));
    assert_eq!(run.summary.total_served, run.summary.total_originated);
}

#[test]
fn five_policy_comparison() {
    let traces = bundled();
    let specs: Vec<PolicySpec> = std::iter::once(PolicySpec::latency())
        .chain([20.0, 100.0, 400.0, 500.0].map(PolicySpec::carbon))
        .collect();
    let config = SimConfig {
        hours: 24,
        ..SimConfig::default()
    };
    let result = sweep(&specs, &config, &traces).unwrap();
    let names: Vec<&str> = result.comparison.policies.iter().map(|p| p.name.as_str()).collect();
    assert_eq!(
        names,
        ["Latency", "Carbon-20", "Carbon-100", "Carbon-400", "Carbon-500"]
    );
    assert_eq!(result.comparison.policies[0].reduction_vs_baseline, Some(0.0));
    let baseline = &result.runs[0].summary;
    assert_eq!(baseline.total_spillovers, 0);
    for (i, row) in baseline.routed.iter().enumerate() {
        assert_eq!(row.iter().sum::<u64>(), row[i], "baseline routed away from origin {i}");
    }
}

#[test]
fn workloads_share_realisation_across_policies() {
    let traces = bundled();
    let config = SimConfig {
        hours: 6,
        ..SimConfig::default()
    };
    let specs = [PolicySpec::latency(), PolicySpec::carbon(100.0)];
    let result = sweep(&specs, &config, &traces).unwrap();
    let originated =
        |k: usize| -> Vec<u64> { result.runs[k].summary.per_region.iter().map(|r| r.originated).collect() };
    assert_eq!(originated(0), originated(1));
}
