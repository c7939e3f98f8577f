//! Output artifacts. Each one embeds the [`RunManifest`] that produced it:
//! JSON files carry it under a `manifest` key, CSV files as a leading
//! `# manifest:` comment line.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::cas::derive_weights;
use crate::policy::{ComparisonReport, PolicySpec};
use crate::sim::{HourlyReport, SimulationRun, ARRIVAL_NOTE};

/// Everything needed to reproduce a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool_version: String,
    pub config_path: Option<String>,
    pub regions: String,
    pub latency: String,
    pub carbon: String,
    pub workload: String,
    pub policies: Vec<String>,
    pub seed: u64,
    pub hours: u32,
    pub timesteps_per_hour: u32,
    pub energy_per_request_kwh: f64,
    pub alpha: f64,
    pub capacity: Vec<u64>,
    pub max_servers: u64,
    pub carbon_forecaster: String,
    pub workload_forecaster: String,
    pub out_dir: String,
}

fn manifest_line(manifest: &RunManifest) -> String {
    format!(
        "# manifest: {}\n# note: {}\n",
        serde_json::to_string(manifest).expect("manifest serialises"),
        ARRIVAL_NOTE
    )
}

fn pretty(value: serde_json::Value) -> String {
    let mut s = serde_json::to_string_pretty(&value).expect("report serialises");
    s.push('\n');
    s
}

/// Per-hour, per-region CSV.
pub fn hourly_csv(manifest: &RunManifest, hourly: &[HourlyReport]) -> String {
    let mut out = manifest_line(manifest);
    out.push_str("hour,region,originated,served,emissions_g,utilization,overloads,mean_latency_ms\n");
    for h in hourly {
        for r in &h.regions {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{}",
                h.hour, r.region, r.originated, r.served, r.emissions_g, r.utilization, r.overloads, r.mean_latency_ms
            );
        }
    }
    out
}

pub fn summary_json(manifest: &RunManifest, run: &SimulationRun) -> String {
    pretty(json!({
        "manifest": manifest,
        "summary": run.summary,
    }))
}

pub fn plans_json(manifest: &RunManifest, hourly: &[HourlyReport]) -> String {
    let plans: Vec<_> = hourly.iter().map(|h| &h.plan).collect();
    pretty(json!({
        "manifest": manifest,
        "plans": plans,
    }))
}

pub fn weights_json(manifest: &RunManifest, hourly: &[HourlyReport]) -> String {
    let weights: Vec<_> = hourly.iter().map(|h| derive_weights(&h.plan)).collect();
    pretty(json!({
        "manifest": manifest,
        "weights": weights,
    }))
}

pub fn comparison_json(manifest: &RunManifest, report: &ComparisonReport) -> String {
    pretty(json!({
        "manifest": manifest,
        "policies": report.policies,
    }))
}

/// Tidy plot data: one row per policy, hour and region.
pub fn plot_csv(manifest: &RunManifest, specs: &[PolicySpec], runs: &[SimulationRun]) -> String {
    let mut out = manifest_line(manifest);
    out.push_str("policy,hour,region,originated,served,emissions_g,servers,intensity,mean_latency_ms\n");
    for (spec, run) in specs.iter().zip(runs) {
        let name = spec.name();
        for h in &run.hourly {
            for r in &h.regions {
                let _ = writeln!(
                    out,
                    "{},{},{},{},{},{},{},{},{}",
                    name,
                    h.hour,
                    r.region,
                    r.originated,
                    r.served,
                    r.emissions_g,
                    r.servers,
                    r.intensity,
                    r.mean_latency_ms
                );
            }
        }
    }
    out
}

/// Ten-minute (or configured) bucket counts as tidy CSV; empty body when the
/// run recorded no buckets.
pub fn buckets_csv(manifest: &RunManifest, regions: &[String], hourly: &[HourlyReport]) -> String {
    let mut out = manifest_line(manifest);
    out.push_str("hour,start_minute,region,originated,served\n");
    for h in hourly {
        for b in &h.buckets {
            for (j, name) in regions.iter().enumerate() {
                let _ = writeln!(
                    out,
                    "{},{},{},{},{}",
                    h.hour, b.start_minute, name, b.originated[j], b.served[j]
                );
            }
        }
    }
    out
}
