//! Regions, latency matrices and hourly traces, plus the CSV loaders that
//! validate them.
//!
//! Every vector and matrix in the crate is indexed by the position of a
//! region in its [`RegionSet`]; the loaders reorder file contents to match.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TraceError {
    #[error("ParseError: {path}:{line}: {msg}")]
    Parse { path: String, line: usize, msg: String },
    #[error("DuplicateRegion: '{0}' listed more than once")]
    DuplicateRegion(String),
    #[error("ParseError: region set is empty")]
    EmptyRegionSet,
    #[error("ShapeMismatch: {0}")]
    ShapeMismatch(String),
    #[error("UnknownRegion: '{0}' is not in the region set")]
    UnknownRegion(String),
    #[error("NegativeLatency: {origin} -> {dest} = {value}")]
    NegativeLatency { origin: String, dest: String, value: f64 },
    #[error("NegativeValue: {region} hour {hour} = {value}")]
    NegativeValue { region: String, hour: u32, value: f64 },
    #[error("MissingHour: region '{region}' has no value for hour {hour}")]
    MissingHour { region: String, hour: u32 },
    #[error("DuplicateEntry: region '{region}' hour {hour} appears more than once")]
    DuplicateEntry { region: String, hour: u32 },
    #[error("OutOfRange: hour {hour} outside trace hours {start}..{end}")]
    OutOfRange { hour: u32, start: u32, end: u32 },
    #[error("Io: {path}: {msg}")]
    Io { path: String, msg: String },
}

impl TraceError {
    /// Stable, machine-parsable name of the error kind.
    pub fn name(&self) -> &'static str {
        match self {
            TraceError::Parse { .. } | TraceError::EmptyRegionSet => "ParseError",
            TraceError::DuplicateRegion(_) => "DuplicateRegion",
            TraceError::ShapeMismatch(_) => "ShapeMismatch",
            TraceError::UnknownRegion(_) => "UnknownRegion",
            TraceError::NegativeLatency { .. } => "NegativeLatency",
            TraceError::NegativeValue { .. } => "NegativeValue",
            TraceError::MissingHour { .. } => "MissingHour",
            TraceError::DuplicateEntry { .. } => "DuplicateEntry",
            TraceError::OutOfRange { .. } => "OutOfRange",
            TraceError::Io { .. } => "Io",
        }
    }
}

fn read_file(path: &Path) -> Result<String, TraceError> {
    fs::read_to_string(path).map_err(|e| TraceError::Io {
        path: path.display().to_string(),
        msg: e.to_string(),
    })
}

fn parse_err(path: &str, line: usize, msg: impl Into<String>) -> TraceError {
    TraceError::Parse {
        path: path.to_string(),
        line,
        msg: msg.into(),
    }
}

/// Ordered, duplicate-free list of region identifiers.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<String>", into = "Vec<String>")]
pub struct RegionSet {
    names: Vec<String>,
}

impl RegionSet {
    pub fn new<I, S>(names: I) -> Result<Self, TraceError>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let names: Vec<String> = names.into_iter().map(Into::into).collect();
        if names.is_empty() {
            return Err(TraceError::EmptyRegionSet);
        }
        let mut seen = HashSet::new();
        for name in &names {
            if name.is_empty() {
                return Err(parse_err("<memory>", 0, "empty region identifier"));
            }
            if !seen.insert(name.as_str()) {
                return Err(TraceError::DuplicateRegion(name.clone()));
            }
        }
        Ok(RegionSet { names })
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn name(&self, index: usize) -> &str {
        &self.names[index]
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    fn index_map(&self) -> HashMap<&str, usize> {
        self.names.iter().enumerate().map(|(i, n)| (n.as_str(), i)).collect()
    }

    /// Parses a region list: one identifier per line, commas also separate.
    /// Blank lines and `#` comments are skipped.
    pub fn parse(text: &str, source: &str) -> Result<Self, TraceError> {
        let mut names = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            for token in line.split(',') {
                let token = token.trim();
                if token.is_empty() || token.chars().any(char::is_whitespace) {
                    return Err(parse_err(
                        source,
                        lineno + 1,
                        format!("malformed region identifier in '{line}'"),
                    ));
                }
                names.push(token.to_string());
            }
        }
        RegionSet::new(names)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for name in &self.names {
            out.push_str(name);
            out.push('\n');
        }
        out
    }
}

impl TryFrom<Vec<String>> for RegionSet {
    type Error = TraceError;
    fn try_from(v: Vec<String>) -> Result<Self, Self::Error> {
        RegionSet::new(v)
    }
}

impl From<RegionSet> for Vec<String> {
    fn from(r: RegionSet) -> Self {
        r.names
    }
}

pub fn load_region_set(path: impl AsRef<Path>) -> Result<RegionSet, TraceError> {
    let path = path.as_ref();
    RegionSet::parse(&read_file(path)?, &path.display().to_string())
}

/// Square matrix of expected per-request latency in milliseconds.
/// No symmetry or triangle inequality is assumed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Vec<f64>>", into = "Vec<Vec<f64>>")]
pub struct LatencyMatrix {
    n: usize,
    ms: Vec<f64>,
}

impl LatencyMatrix {
    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self, TraceError> {
        let n = rows.len();
        if n == 0 {
            return Err(TraceError::ShapeMismatch("latency matrix has no rows".into()));
        }
        let mut ms = Vec::with_capacity(n * n);
        for (i, row) in rows.into_iter().enumerate() {
            if row.len() != n {
                return Err(TraceError::ShapeMismatch(format!(
                    "row {i} has {} entries, expected {n}",
                    row.len()
                )));
            }
            for (j, v) in row.into_iter().enumerate() {
                if !v.is_finite() {
                    return Err(parse_err(
                        "<memory>",
                        i + 1,
                        format!("non-finite latency at column {j}"),
                    ));
                }
                if v < 0.0 {
                    return Err(TraceError::NegativeLatency {
                        origin: i.to_string(),
                        dest: j.to_string(),
                        value: v,
                    });
                }
                ms.push(v);
            }
        }
        Ok(LatencyMatrix { n, ms })
    }

    /// Matrix with every entry equal to `value`.
    pub fn uniform(n: usize, value: f64) -> Self {
        LatencyMatrix {
            n,
            ms: vec![value; n * n],
        }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    #[inline]
    pub fn get(&self, origin: usize, dest: usize) -> f64 {
        self.ms[origin * self.n + dest]
    }

    pub fn row(&self, origin: usize) -> &[f64] {
        &self.ms[origin * self.n..(origin + 1) * self.n]
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        (0..self.n).map(|i| self.row(i).to_vec()).collect()
    }

    pub fn parse(text: &str, regions: &RegionSet, source: &str) -> Result<Self, TraceError> {
        let n = regions.len();
        let index = regions.index_map();
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(false)
            .flexible(true)
            .trim(csv::Trim::All)
            .from_reader(text.as_bytes());
        let mut records = reader.records();

        let header = match records.next() {
            Some(r) => r.map_err(|e| parse_err(source, 1, e.to_string()))?,
            None => return Err(TraceError::ShapeMismatch(format!("{source}: empty latency file"))),
        };
        if header.len() != n + 1 {
            return Err(TraceError::ShapeMismatch(format!(
                "{source}: header has {} destination columns, region set has {n}",
                header.len().saturating_sub(1)
            )));
        }
        let mut columns = Vec::with_capacity(n);
        let mut seen_cols = HashSet::new();
        for name in header.iter().skip(1) {
            let j = *index
                .get(name)
                .ok_or_else(|| TraceError::UnknownRegion(name.to_string()))?;
            if !seen_cols.insert(j) {
                return Err(TraceError::ShapeMismatch(format!("{source}: column '{name}' repeated")));
            }
            columns.push(j);
        }

        let mut ms = vec![f64::NAN; n * n];
        let mut seen_rows = vec![false; n];
        let mut rows = 0usize;
        for (k, record) in records.enumerate() {
            let lineno = k + 2;
            let record = record.map_err(|e| parse_err(source, lineno, e.to_string()))?;
            if record.iter().all(str::is_empty) {
                continue;
            }
            rows += 1;
            if record.len() != n + 1 {
                return Err(TraceError::ShapeMismatch(format!(
                    "{source}:{lineno}: row has {} values, expected {n}",
                    record.len().saturating_sub(1)
                )));
            }
            let origin = &record[0];
            let i = *index
                .get(origin)
                .ok_or_else(|| TraceError::UnknownRegion(origin.to_string()))?;
            if std::mem::replace(&mut seen_rows[i], true) {
                return Err(TraceError::ShapeMismatch(format!(
                    "{source}: origin '{origin}' repeated"
                )));
            }
            for (field, &j) in record.iter().skip(1).zip(&columns) {
                let v: f64 = field
                    .parse()
                    .map_err(|_| parse_err(source, lineno, format!("bad latency '{field}'")))?;
                if !v.is_finite() {
                    return Err(parse_err(source, lineno, format!("non-finite latency '{field}'")));
                }
                if v < 0.0 {
                    return Err(TraceError::NegativeLatency {
                        origin: origin.to_string(),
                        dest: regions.name(j).to_string(),
                        value: v,
                    });
                }
                ms[i * n + j] = v;
            }
        }
        if rows != n {
            return Err(TraceError::ShapeMismatch(format!(
                "{source}: {rows} origin rows, region set has {n}"
            )));
        }
        Ok(LatencyMatrix { n, ms })
    }

    pub fn to_csv(&self, regions: &RegionSet) -> String {
        let mut out = String::from("origin");
        for name in regions.names() {
            out.push(',');
            out.push_str(name);
        }
        out.push('\n');
        for i in 0..self.n {
            out.push_str(regions.name(i));
            for v in self.row(i) {
                let _ = write!(out, ",{v}");
            }
            out.push('\n');
        }
        out
    }
}

impl TryFrom<Vec<Vec<f64>>> for LatencyMatrix {
    type Error = TraceError;
    fn try_from(rows: Vec<Vec<f64>>) -> Result<Self, Self::Error> {
        LatencyMatrix::from_rows(rows)
    }
}

impl From<LatencyMatrix> for Vec<Vec<f64>> {
    fn from(m: LatencyMatrix) -> Self {
        m.to_rows()
    }
}

pub fn load_latency_matrix(path: impl AsRef<Path>, regions: &RegionSet) -> Result<LatencyMatrix, TraceError> {
    let path = path.as_ref();
    LatencyMatrix::parse(&read_file(path)?, regions, &path.display().to_string())
}

/// Per-region hourly series over a contiguous hour range shared by all
/// regions. Used for both carbon intensity (g·CO2eq/kWh) and request rate
/// (requests/second).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HourlyTrace {
    start: u32,
    values: Vec<Vec<f64>>,
}

pub type CarbonTrace = HourlyTrace;
pub type WorkloadTrace = HourlyTrace;

impl HourlyTrace {
    /// `values[region][k]` is the value at hour `start + k`.
    pub fn new(start: u32, values: Vec<Vec<f64>>) -> Result<Self, TraceError> {
        let hours = values.first().map_or(0, Vec::len);
        for (r, series) in values.iter().enumerate() {
            if series.len() != hours {
                return Err(TraceError::MissingHour {
                    region: r.to_string(),
                    hour: start + series.len().min(hours) as u32,
                });
            }
            for (k, &v) in series.iter().enumerate() {
                if !v.is_finite() || v < 0.0 {
                    return Err(TraceError::NegativeValue {
                        region: r.to_string(),
                        hour: start + k as u32,
                        value: v,
                    });
                }
            }
        }
        Ok(HourlyTrace { start, values })
    }

    pub fn start(&self) -> u32 {
        self.start
    }

    /// Exclusive end hour.
    pub fn end(&self) -> u32 {
        self.start + self.hours() as u32
    }

    pub fn hours(&self) -> usize {
        self.values.first().map_or(0, Vec::len)
    }

    pub fn regions(&self) -> usize {
        self.values.len()
    }

    pub fn contains(&self, hour: u32) -> bool {
        hour >= self.start && hour < self.end()
    }

    pub fn series(&self, region: usize) -> &[f64] {
        &self.values[region]
    }

    pub fn get(&self, region: usize, hour: u32) -> Result<f64, TraceError> {
        if !self.contains(hour) {
            return Err(TraceError::OutOfRange {
                hour,
                start: self.start,
                end: self.end(),
            });
        }
        Ok(self.values[region][(hour - self.start) as usize])
    }

    /// All regions' values at `hour`.
    pub fn at(&self, hour: u32) -> Result<Vec<f64>, TraceError> {
        (0..self.regions()).map(|r| self.get(r, hour)).collect()
    }

    pub fn parse(text: &str, regions: &RegionSet, source: &str) -> Result<Self, TraceError> {
        let index = regions.index_map();
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(true)
            .trim(csv::Trim::All)
            .from_reader(text.as_bytes());
        let mut per_region: Vec<BTreeMap<u32, f64>> = vec![BTreeMap::new(); regions.len()];
        for (k, record) in reader.records().enumerate() {
            let lineno = k + 2;
            let record = record.map_err(|e| parse_err(source, lineno, e.to_string()))?;
            if record.len() != 3 {
                return Err(parse_err(
                    source,
                    lineno,
                    format!("expected 3 fields (region,hour,value), got {}", record.len()),
                ));
            }
            let name = &record[0];
            let r = *index
                .get(name)
                .ok_or_else(|| TraceError::UnknownRegion(name.to_string()))?;
            let hour: u32 = record[1]
                .parse()
                .map_err(|_| parse_err(source, lineno, format!("bad hour '{}'", &record[1])))?;
            let value: f64 = record[2]
                .parse()
                .map_err(|_| parse_err(source, lineno, format!("bad value '{}'", &record[2])))?;
            if !value.is_finite() {
                return Err(parse_err(source, lineno, format!("non-finite value '{}'", &record[2])));
            }
            if value < 0.0 {
                return Err(TraceError::NegativeValue {
                    region: name.to_string(),
                    hour,
                    value,
                });
            }
            if per_region[r].insert(hour, value).is_some() {
                return Err(TraceError::DuplicateEntry {
                    region: name.to_string(),
                    hour,
                });
            }
        }

        let bounds = per_region
            .iter()
            .filter_map(|m| Some((*m.keys().next()?, *m.keys().next_back()?)))
            .reduce(|(lo, hi), (a, b)| (lo.min(a), hi.max(b)));
        let Some((start, last)) = bounds else {
            return Err(TraceError::MissingHour {
                region: regions.name(0).to_string(),
                hour: 0,
            });
        };

        let mut values = Vec::with_capacity(regions.len());
        for (r, series) in per_region.into_iter().enumerate() {
            let mut row = Vec::with_capacity((last - start + 1) as usize);
            for hour in start..=last {
                match series.get(&hour) {
                    Some(&v) => row.push(v),
                    None => {
                        return Err(TraceError::MissingHour {
                            region: regions.name(r).to_string(),
                            hour,
                        })
                    }
                }
            }
            values.push(row);
        }
        Ok(HourlyTrace { start, values })
    }

    pub fn to_csv(&self, regions: &RegionSet) -> String {
        let mut out = String::from("region,hour,value\n");
        for (r, series) in self.values.iter().enumerate() {
            for (k, v) in series.iter().enumerate() {
                let _ = writeln!(out, "{},{},{}", regions.name(r), self.start + k as u32, v);
            }
        }
        out
    }
}

pub fn load_carbon_trace(path: impl AsRef<Path>, regions: &RegionSet) -> Result<CarbonTrace, TraceError> {
    let path = path.as_ref();
    HourlyTrace::parse(&read_file(path)?, regions, &path.display().to_string())
}

pub fn load_workload_trace(path: impl AsRef<Path>, regions: &RegionSet) -> Result<WorkloadTrace, TraceError> {
    let path = path.as_ref();
    HourlyTrace::parse(&read_file(path)?, regions, &path.display().to_string())
}

/// Everything a simulation reads from disk, validated for mutual
/// consistency.
#[derive(Debug, Clone, PartialEq)]
pub struct Traces {
    pub regions: RegionSet,
    pub latency: LatencyMatrix,
    pub carbon: CarbonTrace,
    pub workload: WorkloadTrace,
}

impl Traces {
    pub fn new(
        regions: RegionSet,
        latency: LatencyMatrix,
        carbon: CarbonTrace,
        workload: WorkloadTrace,
    ) -> Result<Self, TraceError> {
        let n = regions.len();
        if latency.len() != n || carbon.regions() != n || workload.regions() != n {
            return Err(TraceError::ShapeMismatch(format!(
                "{n} regions but latency {}x{}, carbon {} series, workload {} series",
                latency.len(),
                latency.len(),
                carbon.regions(),
                workload.regions()
            )));
        }
        if carbon.start() != workload.start() || carbon.end() != workload.end() {
            return Err(TraceError::ShapeMismatch(format!(
                "carbon hours {}..{} differ from workload hours {}..{}",
                carbon.start(),
                carbon.end(),
                workload.start(),
                workload.end()
            )));
        }
        Ok(Traces {
            regions,
            latency,
            carbon,
            workload,
        })
    }

    pub fn load(
        regions: impl AsRef<Path>,
        latency: impl AsRef<Path>,
        carbon: impl AsRef<Path>,
        workload: impl AsRef<Path>,
    ) -> Result<Self, TraceError> {
        let rs = load_region_set(regions)?;
        let lat = load_latency_matrix(latency, &rs)?;
        let ci = load_carbon_trace(carbon, &rs)?;
        let wl = load_workload_trace(workload, &rs)?;
        Traces::new(rs, lat, ci, wl)
    }

    pub fn n(&self) -> usize {
        self.regions.len()
    }

    pub fn start_hour(&self) -> u32 {
        self.carbon.start()
    }

    pub fn end_hour(&self) -> u32 {
        self.carbon.end()
    }

    /// Writes the four files under `dir` using the standard names.
    pub fn write_to(&self, dir: impl AsRef<Path>) -> std::io::Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir)?;
        fs::write(dir.join("regions.csv"), self.regions.to_text())?;
        fs::write(dir.join("latency.csv"), self.latency.to_csv(&self.regions))?;
        fs::write(dir.join("carbon.csv"), self.carbon.to_csv(&self.regions))?;
        fs::write(dir.join("workload.csv"), self.workload.to_csv(&self.regions))?;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ForecastKind {
    Oracle,
    Persistence,
}

/// Hour-ahead predictor for a trace value.
///
/// `Oracle` reads the true value. `Persistence` repeats the value observed
/// `horizon_hours` earlier (24 by default); before the trace has a full
/// lag of history it falls back to the same hour-of-period on the earliest
/// period, and past the trace end it steps back whole periods.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Forecaster {
    pub kind: ForecastKind,
    #[serde(default = "default_horizon")]
    pub horizon_hours: u32,
}

fn default_horizon() -> u32 {
    24
}

impl Default for Forecaster {
    fn default() -> Self {
        Forecaster::oracle()
    }
}

impl Forecaster {
    pub fn oracle() -> Self {
        Forecaster {
            kind: ForecastKind::Oracle,
            horizon_hours: 24,
        }
    }

    pub fn persistence() -> Self {
        Forecaster {
            kind: ForecastKind::Persistence,
            horizon_hours: 24,
        }
    }

    pub fn forecast(&self, trace: &HourlyTrace, region: usize, hour: u32) -> Result<f64, TraceError> {
        match self.kind {
            ForecastKind::Oracle => trace.get(region, hour),
            ForecastKind::Persistence => {
                let source = persistence_source(trace.start(), trace.end(), self.horizon_hours.max(1), hour);
                trace.get(region, source)
            }
        }
    }

    pub fn forecast_all(&self, trace: &HourlyTrace, hour: u32) -> Result<Vec<f64>, TraceError> {
        (0..trace.regions()).map(|r| self.forecast(trace, r, hour)).collect()
    }
}

fn persistence_source(start: u32, end: u32, lag: u32, hour: u32) -> u32 {
    let last = end.saturating_sub(1).max(start);
    let target = if hour >= start + lag {
        hour - lag
    } else {
        // Earliest period: same offset within the period.
        start + hour.saturating_sub(start) % lag
    };
    if target <= last {
        return target;
    }
    let back = (target - last).div_ceil(lag) * lag;
    match target.checked_sub(back) {
        Some(stepped) if stepped >= start => stepped,
        _ => last,
    }
}
