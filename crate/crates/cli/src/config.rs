//! JSON run configuration. Trace paths are resolved relative to the directory
//! holding the config file.

use std::path::{Path, PathBuf};

use carbon_sched::trace::{ForecastKind, Forecaster};
use carbon_sched::PolicySpec;
use serde::{Deserialize, Serialize};

/// Per-server capacity: one value for every region, or one per region.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Capacity {
    Uniform(u64),
    PerRegion(Vec<u64>),
}

impl Capacity {
    pub fn to_vec(&self) -> Vec<u64> {
        match self {
            Capacity::Uniform(c) => vec![*c],
            Capacity::PerRegion(v) => v.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub regions: PathBuf,
    pub latency: PathBuf,
    pub carbon: PathBuf,
    pub workload: PathBuf,
    #[serde(default = "default_policies")]
    pub policies: Vec<String>,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default = "default_hours")]
    pub hours: u32,
    #[serde(default = "default_timesteps")]
    pub timesteps_per_hour: u32,
    /// kWh per request.
    #[serde(default = "default_energy")]
    pub energy_per_request: f64,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default = "default_capacity")]
    pub c: Capacity,
    #[serde(rename = "K", default = "default_max_servers")]
    pub max_servers: u64,
    #[serde(default = "default_forecaster")]
    pub carbon_forecaster: ForecastKind,
    #[serde(default = "default_forecaster")]
    pub workload_forecaster: ForecastKind,
    #[serde(default = "default_out")]
    pub out: PathBuf,
    #[serde(default)]
    pub bucket_minutes: Option<u32>,
}

fn default_policies() -> Vec<String> {
    ["latency", "carbon-20", "carbon-100", "carbon-400", "carbon-500"]
        .iter()
        .map(|s| s.to_string())
        .collect()
}

fn default_seed() -> u64 {
    42
}

fn default_hours() -> u32 {
    24
}

fn default_timesteps() -> u32 {
    60
}

fn default_energy() -> f64 {
    1e-4
}

fn default_alpha() -> f64 {
    0.5
}

fn default_capacity() -> Capacity {
    Capacity::Uniform(100)
}

fn default_max_servers() -> u64 {
    500
}

fn default_forecaster() -> ForecastKind {
    ForecastKind::Oracle
}

fn default_out() -> PathBuf {
    PathBuf::from("out")
}

impl Config {
    /// Reads a config file and resolves its relative paths against the
    /// file's directory.
    pub fn load(path: &Path) -> Result<Config, String> {
        let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
        let mut config: Config = serde_json::from_str(&text).map_err(|e| format!("{}: {e}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new("."));
        for p in [
            &mut config.regions,
            &mut config.latency,
            &mut config.carbon,
            &mut config.workload,
            &mut config.out,
        ] {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(config)
    }

    pub fn policy_specs(&self) -> Result<Vec<PolicySpec>, String> {
        self.policies.iter().map(|p| self.policy_spec(p)).collect()
    }

    pub fn policy_spec(&self, name: &str) -> Result<PolicySpec, String> {
        let kind = name.parse().map_err(|e| format!("{e}"))?;
        let spec = PolicySpec {
            kind,
            alpha: self.alpha,
            capacity: self.c.to_vec(),
            max_servers: self.max_servers,
        };
        spec.validate().map_err(|e| format!("{e}"))?;
        Ok(spec)
    }

    pub fn forecaster(kind: ForecastKind) -> Forecaster {
        match kind {
            ForecastKind::Oracle => Forecaster::oracle(),
            ForecastKind::Persistence => Forecaster::persistence(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_fill_missing_keys() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("config.json");
        std::fs::write(
            &path,
            r#"{"regions":"r.csv","latency":"l.csv","carbon":"c.csv","workload":"w.csv","c":[100,200],"K":10}"#,
        )
        .unwrap();
        let config = Config::load(&path).unwrap();
        assert_eq!(config.regions, dir.path().join("r.csv"));
        assert_eq!(config.out, dir.path().join("out"));
        assert_eq!(config.c, Capacity::PerRegion(vec![100, 200]));
        assert_eq!(config.max_servers, 10);
        assert_eq!(config.policy_specs().unwrap().len(), 5);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("config.json");
        std::fs::write(
            &path,
            r#"{"regions":"r.csv","latency":"l.csv","carbon":"c.csv","workload":"w.csv","typo":1}"#,
        )
        .unwrap();
        assert!(Config::load(&path).is_err());
    }
}
