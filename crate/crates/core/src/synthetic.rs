//! Deterministic synthetic traces for six cloud regions.
//!
//! The shapes are qualitative: one nuclear-heavy grid near 50 g/kWh, two US
//! grids in the 300-450 range with a solar dip, a Midwest-like grid and a
//! central-European grid near 400-500, and a flat fossil grid near 500.
//! Request rates follow a diurnal curve in each region's local time.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::trace::{HourlyTrace, LatencyMatrix, RegionSet, Traces};

pub const REGIONS: [&str; 6] = [
    "us-west-1",
    "us-east-1",
    "us-east-2",
    "eu-central-1",
    "eu-west-3",
    "ap-southeast-2",
];

/// Index of the central-European region in [`REGIONS`].
pub const GERMANY: usize = 3;
/// Index of the low-carbon European region in [`REGIONS`].
pub const FRANCE: usize = 4;

const UTC_OFFSET: [i32; 6] = [-8, -5, -5, 1, 1, 8];

#[rustfmt::skip]
const LATENCY_MS: [[f64; 6]; 6] = [
    //  CA     VA     OH     DE     FR     SG
    [  5.0,  62.0,  50.0, 147.0, 140.0, 170.0],
    [ 62.0,   4.0,  24.0,  90.0,  80.0, 215.0],
    [ 50.0,  24.0,   6.0, 100.0,  90.0, 195.0],
    [147.0,  90.0, 100.0,   5.0,  10.0, 160.0],
    [140.0,  80.0,  90.0,  10.0,   4.0, 250.0],
    [170.0, 215.0, 195.0, 160.0, 250.0,   7.0],
];

/// Mean request rate per region, requests/second.
const BASE_RATE: [f64; 6] = [1.6, 2.0, 1.2, 2.2, 1.4, 1.0];

const SEED: u64 = 0x5eed_ca7b;

fn local_hour(hour: u32, region: usize) -> f64 {
    (hour as i64 + UTC_OFFSET[region] as i64).rem_euclid(24) as f64
}

/// 0 at night, peaks at 1 around local noon.
fn solar(local: f64) -> f64 {
    (PI * (local - 6.0) / 12.0).sin().max(0.0)
}

/// Peaks at 1 at `peak` local time, -1 twelve hours later.
fn wave(local: f64, peak: f64) -> f64 {
    (2.0 * PI * (local - peak) / 24.0).cos()
}

fn intensity_shape(region: usize, local: f64) -> f64 {
    match region {
        0 => 430.0 - 120.0 * solar(local),
        1 => 410.0 - 50.0 * solar(local) + 10.0 * wave(local, 19.0),
        2 => 440.0 + 25.0 * wave(local, 18.0),
        3 => 480.0 - 70.0 * solar(local) + 20.0 * wave(local, 19.0),
        4 => 50.0 + 6.0 * wave(local, 19.0),
        _ => 500.0 + 4.0 * wave(local, 14.0),
    }
}

/// Latency matrix used by the bundled traces.
pub fn latency() -> LatencyMatrix {
    LatencyMatrix::from_rows(LATENCY_MS.iter().map(|r| r.to_vec()).collect()).expect("static matrix is valid")
}

pub fn regions() -> RegionSet {
    RegionSet::new(REGIONS).expect("static region list is valid")
}

/// Builds `days` days of hourly traces starting at hour 0.
pub fn generate(days: u32) -> Traces {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let mut carbon = vec![Vec::new(); 6];
    let mut workload = vec![Vec::new(); 6];
    for day in 0..days {
        let day_carbon: [f64; 6] = std::array::from_fn(|_| 1.0 + rng.random_range(-0.03..0.03));
        let day_load: [f64; 6] = std::array::from_fn(|_| 1.0 + rng.random_range(-0.05..0.05));
        for h in 0..24 {
            let hour = day * 24 + h;
            for r in 0..6 {
                let local = local_hour(hour, r);
                let ci = intensity_shape(r, local) * day_carbon[r] * (1.0 + rng.random_range(-0.01..0.01));
                carbon[r].push(round_to(ci, 1));
                let rate = BASE_RATE[r] * (1.0 + 0.4 * wave(local, 15.0)) * day_load[r];
                workload[r].push(round_to(rate, 4));
            }
        }
    }
    Traces::new(
        regions(),
        latency(),
        HourlyTrace::new(0, carbon).expect("generated carbon trace is valid"),
        HourlyTrace::new(0, workload).expect("generated workload trace is valid"),
    )
    .expect("generated traces are consistent")
}

fn round_to(v: f64, decimals: i32) -> f64 {
    let k = 10f64.powi(decimals);
    (v * k).round() / k
}
