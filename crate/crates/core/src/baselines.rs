//! Reference schemes: the hybrid surface against time- and
//! frequency-division between the reflective and transmissive groups.
//!
//! In both baselines each group is served by a separate single-mode solve
//! and the effective rate is `½R_r + ½R_t`. TDMA gives each slot the full
//! power and bandwidth; FDMA gives each half-band `P_max/2` and `σ²/2`.
//! The FDMA slots reuse the TDMA slots' random streams, so the two
//! baselines start from the same analog precoders.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::channel::{ChannelSet, Group};
use crate::config::SystemConfig;
use crate::solver::{solve_with, SolveOptions, SolveSetup, SolveTrace, SurfaceMode};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scheme {
    Hybrid,
    Tdma,
    Fdma,
}

impl Scheme {
    pub const ALL: [Scheme; 3] = [Scheme::Hybrid, Scheme::Tdma, Scheme::Fdma];

    pub fn as_str(&self) -> &'static str {
        match self {
            Scheme::Hybrid => "hybrid",
            Scheme::Tdma => "tdma",
            Scheme::Fdma => "fdma",
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "hybrid" => Ok(Scheme::Hybrid),
            "tdma" => Ok(Scheme::Tdma),
            "fdma" => Ok(Scheme::Fdma),
            other => Err(Error::Config(format!(
                "unknown scheme {other:?} (expected hybrid, tdma or fdma)"
            ))),
        }
    }
}

/// One sub-solve of a scheme.
#[derive(Debug, Clone, PartialEq)]
pub struct SubResult {
    /// `None` for the joint hybrid solve.
    pub group: Option<Group>,
    /// Resource share (time or bandwidth fraction).
    pub weight: f64,
    pub rate: f64,
    pub trace: SolveTrace,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BaselineResult {
    pub scheme: Scheme,
    /// Resource-weighted sum rate in bits/s/Hz of the total band.
    pub rate: f64,
    pub parts: Vec<SubResult>,
}

impl BaselineResult {
    pub fn group_rate(&self, group: Group) -> Option<f64> {
        self.parts.iter().find(|p| p.group == Some(group)).map(|p| p.rate)
    }

    /// Total outer iterations over all sub-solves.
    pub fn outer_iterations(&self) -> usize {
        self.parts.iter().map(|p| p.trace.outer_iterations()).sum()
    }

    /// Whether every sub-solve met the outer tolerance.
    pub fn converged(&self) -> bool {
        self.parts.iter().all(|p| p.trace.converged)
    }
}

/// Random stream of a single-mode slot.
pub fn slot_stream(group: Group) -> u64 {
    match group {
        Group::Reflective => 2,
        Group::Transmissive => 3,
    }
}

pub fn hybrid_rate(channels: &ChannelSet, cfg: &SystemConfig, opts: &SolveOptions) -> Result<BaselineResult> {
    let setup = SolveSetup::from_config(cfg)?;
    let sol = solve_with(channels, &setup, opts)?;
    Ok(BaselineResult {
        scheme: Scheme::Hybrid,
        rate: sol.sum_rate,
        parts: vec![SubResult {
            group: None,
            weight: 1.0,
            rate: sol.sum_rate,
            trace: sol.trace,
        }],
    })
}

fn split_rate(
    scheme: Scheme,
    channels: &ChannelSet,
    cfg: &SystemConfig,
    opts: &SolveOptions,
    share: f64,
) -> Result<BaselineResult> {
    let base = SolveSetup::from_config(cfg)?;
    if channels.num_users() != base.groups.len() {
        return Err(Error::Config(format!(
            "{} channels for {} configured users",
            channels.num_users(),
            base.groups.len()
        )));
    }
    let (p_max, noise) = match scheme {
        Scheme::Fdma => (base.p_max * share, base.noise.scaled(share)?),
        _ => (base.p_max, base.noise),
    };
    let mut parts = Vec::new();
    let mut rate = 0.0;
    for group in [Group::Reflective, Group::Transmissive] {
        let users: Vec<usize> = (0..base.groups.len()).filter(|&n| base.groups[n] == group).collect();
        if users.is_empty() {
            continue;
        }
        let setup = SolveSetup {
            groups: vec![group; users.len()],
            rf_chains: base.rf_chains,
            p_max,
            noise,
            mode: SurfaceMode::Single(group),
            init_stream: slot_stream(group),
        };
        let sol = solve_with(&channels.subset(&users), &setup, opts)?;
        rate += share * sol.sum_rate;
        parts.push(SubResult {
            group: Some(group),
            weight: share,
            rate: sol.sum_rate,
            trace: sol.trace,
        });
    }
    Ok(BaselineResult { scheme, rate, parts })
}

/// Alternate equal time slots between the groups.
pub fn tdma_rate(channels: &ChannelSet, cfg: &SystemConfig, opts: &SolveOptions) -> Result<BaselineResult> {
    split_rate(Scheme::Tdma, channels, cfg, opts, 0.5)
}

/// Serve the groups in two equal sub-bands with half the power each.
pub fn fdma_rate(channels: &ChannelSet, cfg: &SystemConfig, opts: &SolveOptions) -> Result<BaselineResult> {
    split_rate(Scheme::Fdma, channels, cfg, opts, 0.5)
}

pub fn run_scheme(
    scheme: Scheme,
    channels: &ChannelSet,
    cfg: &SystemConfig,
    opts: &SolveOptions,
) -> Result<BaselineResult> {
    match scheme {
        Scheme::Hybrid => hybrid_rate(channels, cfg, opts),
        Scheme::Tdma => tdma_rate(channels, cfg, opts),
        Scheme::Fdma => fdma_rate(channels, cfg, opts),
    }
}
