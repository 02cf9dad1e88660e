//! Seeded scenarios and parameter sweeps.
//!
//! Random streams: a scenario seed `s` drives `ChaCha8Rng::seed_from_u64(s)`
//! with stream 0 for the geometry, stream 1 for the hybrid solve's analog
//! initialization and streams 2 and 3 for the reflective and transmissive
//! baseline slots. Every job derives its generators from its own seed, so
//! parallel and serial sweeps produce the same numbers.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baselines::{run_scheme, BaselineResult, Scheme};
use crate::channel::{synthesize_channels, Geometry};
use crate::config::SystemConfig;
use crate::solver::SolveOptions;
use crate::{Error, Result};

pub const GEOMETRY_STREAM: u64 = 0;

/// Random geometry for one scenario.
pub fn sample_scenario(cfg: &SystemConfig, seed: u64) -> Geometry {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(GEOMETRY_STREAM);
    let n = cfg.users;
    let (a_lo, a_hi) = (cfg.angle_min_rad, cfg.angle_max_rad);
    let (d_lo, d_hi) = (cfg.user_distance_min_m, cfg.user_distance_max_m);
    let angle = |rng: &mut ChaCha8Rng| rng.random_range(a_lo..=a_hi);
    let phi_tx = angle(&mut rng);
    let phi_rx = angle(&mut rng);
    let mut d2 = Vec::with_capacity(n);
    let mut phi_users = Vec::with_capacity(n);
    for _ in 0..n {
        d2.push(rng.random_range(d_lo..=d_hi));
        phi_users.push(angle(&mut rng));
    }
    Geometry {
        d1: cfg.bs_irs_distance_m,
        d2,
        phi_tx,
        phi_rx,
        phi_users,
        groups: cfg.groups(),
    }
}

/// Solve one scheme on the scenario drawn from `seed`.
pub fn run_point(cfg: &SystemConfig, seed: u64, scheme: Scheme) -> Result<BaselineResult> {
    cfg.validate()?;
    let geo = sample_scenario(cfg, seed);
    let channels = synthesize_channels(cfg, &geo, &cfg.absorption()?)?;
    let opts = SolveOptions {
        seed,
        ..cfg.solve_options()
    };
    run_scheme(scheme, &channels, cfg, &opts)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SweepAxis {
    /// IRS elements.
    K,
    /// BS antennas.
    M,
    /// Power budget in dBm.
    #[serde(rename = "P_max")]
    PMax,
    /// Carrier in Hz.
    #[serde(rename = "f_c")]
    Fc,
    /// Outer-iteration cap.
    #[serde(rename = "iterations")]
    Iterations,
    /// Single solve outside a sweep.
    #[serde(rename = "none")]
    None,
}

impl SweepAxis {
    pub fn as_str(&self) -> &'static str {
        match self {
            SweepAxis::K => "K",
            SweepAxis::M => "M",
            SweepAxis::PMax => "P_max",
            SweepAxis::Fc => "f_c",
            SweepAxis::Iterations => "iterations",
            SweepAxis::None => "none",
        }
    }

    fn is_count(&self) -> bool {
        matches!(self, SweepAxis::K | SweepAxis::M | SweepAxis::Iterations)
    }

    /// Configuration with this axis set to `value`.
    pub fn apply(&self, cfg: &SystemConfig, value: f64) -> Result<SystemConfig> {
        if self.is_count() && !(value >= 1.0 && value.fract() == 0.0 && value <= u32::MAX as f64) {
            return Err(Error::Config(format!(
                "{} value {value} must be a positive integer",
                self.as_str()
            )));
        }
        let mut out = cfg.clone();
        match self {
            SweepAxis::K => out.irs_elements = value as usize,
            SweepAxis::M => out.bs_antennas = value as usize,
            SweepAxis::PMax => out.p_max_dbm = value,
            SweepAxis::Fc => out.carrier_hz = value,
            SweepAxis::Iterations => out.max_outer = value as usize,
            SweepAxis::None => {}
        }
        out.validate()?;
        Ok(out)
    }
}

impl fmt::Display for SweepAxis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

fn all_schemes() -> Vec<Scheme> {
    Scheme::ALL.to_vec()
}

/// Sweep description, read from TOML:
///
/// ```toml
/// axis = "K"              # K | M | P_max | f_c | iterations
/// values = [25, 49, 64]
/// schemes = ["hybrid", "tdma", "fdma"]   # optional, default all three
/// seeds = [1, 2, 3]
/// ```
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub axis: SweepAxis,
    pub values: Vec<f64>,
    #[serde(default = "all_schemes")]
    pub schemes: Vec<Scheme>,
    pub seeds: Vec<u64>,
}

impl FromStr for SweepSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let spec: SweepSpec = toml::from_str(s).map_err(|e| Error::Config(e.to_string()))?;
        spec.validate()?;
        Ok(spec)
    }
}

impl SweepSpec {
    pub fn load(path: impl AsRef<std::path::Path>) -> Result<Self> {
        let path = path.as_ref();
        std::fs::read_to_string(path)
            .map_err(|e| Error::io(path, e))?
            .parse()
    }

    pub fn validate(&self) -> Result<()> {
        if self.axis == SweepAxis::None {
            return Err(Error::Config("sweep axis must be K, M, P_max, f_c or iterations".into()));
        }
        if self.values.is_empty() || self.seeds.is_empty() || self.schemes.is_empty() {
            return Err(Error::Config("values, seeds and schemes must be nonempty".into()));
        }
        if let Some(v) = self.values.iter().find(|v| !v.is_finite()) {
            return Err(Error::Config(format!("sweep value {v} is not finite")));
        }
        Ok(())
    }

    /// Jobs in output order: value, then seed, then scheme.
    fn jobs(&self) -> Vec<(f64, u64, Scheme)> {
        let mut values = self.values.clone();
        values.sort_by(f64::total_cmp);
        values.dedup();
        let mut seeds = self.seeds.clone();
        seeds.sort_unstable();
        seeds.dedup();
        let mut schemes = self.schemes.clone();
        schemes.sort();
        schemes.dedup();
        let mut jobs = Vec::new();
        for &v in &values {
            for &s in &seeds {
                for &sc in &schemes {
                    jobs.push((v, s, sc));
                }
            }
        }
        jobs
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub axis: SweepAxis,
    pub value: f64,
    pub seed: u64,
    pub scheme: Scheme,
    /// `None` when the solve failed.
    pub rate_bps_hz: Option<f64>,
    pub outer_iters: usize,
    pub wall_ms: f64,
    /// `;`-separated markers: `not_converged`, `error: …`.
    pub flags: String,
}

impl SweepRow {
    pub fn from_result(
        axis: SweepAxis,
        value: f64,
        seed: u64,
        scheme: Scheme,
        result: Result<BaselineResult>,
        wall_ms: f64,
    ) -> Self {
        let (rate, iters, flags) = match result {
            Ok(r) => {
                let flags = if r.converged() { String::new() } else { "not_converged".into() };
                (Some(r.rate), r.outer_iterations(), flags)
            }
            Err(e) => (None, 0, format!("error: {e}")),
        };
        Self {
            axis,
            value,
            seed,
            scheme,
            rate_bps_hz: rate,
            outer_iters: iters,
            wall_ms,
            flags,
        }
    }
}

/// Run every (value, seed, scheme) job, in parallel, and return rows in
/// job order. A failing job is flagged and the sweep continues; an invalid
/// spec or configuration fails the whole call.
pub fn run_sweep(spec: &SweepSpec, cfg: &SystemConfig) -> Result<Vec<SweepRow>> {
    spec.validate()?;
    cfg.validate()?;
    for &v in &spec.values {
        spec.axis.apply(cfg, v)?;
    }
    let jobs = spec.jobs();
    Ok(jobs
        .par_iter()
        .map(|&(value, seed, scheme)| {
            let start = Instant::now();
            let result = spec
                .axis
                .apply(cfg, value)
                .and_then(|c| run_point(&c, seed, scheme));
            let wall_ms = start.elapsed().as_secs_f64() * 1e3;
            SweepRow::from_result(spec.axis, value, seed, scheme, result, wall_ms)
        })
        .collect())
}
