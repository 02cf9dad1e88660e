//! Outer block-coordinate loop.
//!
//! Each outer iteration updates, in order, the analog precoder (followed by
//! a power rescale of the digital precoder), the digital precoder, the
//! scattering matrix and finally the auxiliaries `β`, `α`. The surrogate is
//! recorded after the auxiliary update, where it equals the sum rate, and
//! the loop stops once two consecutive values differ by less than
//! `eps_outer`.
//!
//! The analog and digital blocks are guarded: a block result that would
//! lower the surrogate (only possible through rounding, or through the power
//! rescale after an analog sweep) is discarded.

use std::time::{Duration, Instant};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::beamforming::{
    enforce_power, random_analog, solve_analog, solve_digital, AnalogOptions, HybridPrecoder,
};
use crate::channel::{ChannelSet, Group};
use crate::config::SystemConfig;
use crate::fp::{fp_objective, sinrs, AuxState, EffectiveChannels, NoiseModel};
use crate::manifold::{
    assemble_trace_problem, block_rows, optimize_orthonormal, optimize_theta, ManifoldOptions,
    ManifoldStatus, ScatteringMatrix,
};
use crate::linalg::unitary_map;
use crate::{CMat, Complex64, Error, Result};

/// Random-stream index used for the hybrid scheme's analog initialization.
pub const HYBRID_INIT_STREAM: u64 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolveOptions {
    pub eps_outer: f64,
    pub max_outer: usize,
    pub analog: AnalogOptions,
    pub manifold: ManifoldOptions,
    pub theta_init: ThetaInit,
    pub seed: u64,
}

/// Starting scattering matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ThetaInit {
    /// `Θ_t = Θ_r = I/√2` (single mode: the active block is `I`).
    Identity,
    /// Same energy split, but each block is a unitary that maps the surface's
    /// arrival direction onto its group's strongest user.
    #[default]
    Aligned,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            eps_outer: 1e-4,
            max_outer: 100,
            analog: AnalogOptions::default(),
            manifold: ManifoldOptions::default(),
            theta_init: ThetaInit::default(),
            seed: 0,
        }
    }
}

impl SolveOptions {
    fn validate(&self) -> Result<()> {
        if !(self.eps_outer > 0.0 && self.eps_outer.is_finite()) {
            return Err(Error::Config(format!("eps_outer = {} must be positive", self.eps_outer)));
        }
        if self.max_outer == 0 || self.analog.max_sweeps == 0 || self.manifold.max_iters == 0 {
            return Err(Error::Config("iteration caps must be at least 1".into()));
        }
        Ok(())
    }
}

/// How the surface serves the users of one solve.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SurfaceMode {
    /// Both blocks active, `Θ_tᴴΘ_t + Θ_rᴴΘ_r = I`.
    Hybrid,
    /// Only one block active; it is a `K×K` unitary and the other is zero.
    Single(Group),
}

/// Everything a solve needs besides the channels.
#[derive(Debug, Clone, PartialEq)]
pub struct SolveSetup {
    pub groups: Vec<Group>,
    pub rf_chains: usize,
    /// Watts.
    pub p_max: f64,
    pub noise: NoiseModel,
    pub mode: SurfaceMode,
    /// Random stream for the analog initialization.
    pub init_stream: u64,
}

impl SolveSetup {
    pub fn from_config(cfg: &SystemConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Self {
            groups: cfg.groups(),
            rf_chains: cfg.rf_chains,
            p_max: cfg.p_max_watts(),
            noise: cfg.noise()?,
            mode: SurfaceMode::Hybrid,
            init_stream: HYBRID_INIT_STREAM,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    /// Surrogate after the precoder and `Θ` blocks, before the auxiliary update.
    pub surrogate_blocks: f64,
    /// Surrogate after the auxiliary update; equals `sum_rate`.
    pub surrogate: f64,
    pub sum_rate: f64,
    pub power: f64,
    pub c1_residual: f64,
    pub analog_sweeps: usize,
    pub analog_accepted: bool,
    pub digital_lambda: f64,
    pub manifold_iters: usize,
    pub manifold_status: ManifoldStatus,
    /// Last accepted manifold step size, if any.
    pub manifold_step: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveTrace {
    /// Surrogate (equal to the sum rate) at the initial point.
    pub initial: f64,
    pub iterations: Vec<IterationRecord>,
    pub converged: bool,
}

impl SolveTrace {
    /// `[initial, F_1, F_2, …]`.
    pub fn surrogate_sequence(&self) -> Vec<f64> {
        std::iter::once(self.initial)
            .chain(self.iterations.iter().map(|r| r.surrogate))
            .collect()
    }

    pub fn outer_iterations(&self) -> usize {
        self.iterations.len()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Solution {
    pub precoder: HybridPrecoder,
    pub theta: ScatteringMatrix,
    pub aux: AuxState,
    pub groups: Vec<Group>,
    pub sum_rate: f64,
    pub trace: SolveTrace,
    /// Not part of the deterministic output.
    pub wall_time: Duration,
}

/// Solve the hybrid-mode problem for a configuration.
pub fn bcd_solve(channels: &ChannelSet, cfg: &SystemConfig, opts: &SolveOptions) -> Result<Solution> {
    solve_with(channels, &SolveSetup::from_config(cfg)?, opts)
}

fn check_setup(channels: &ChannelSet, setup: &SolveSetup) -> Result<()> {
    let n = channels.num_users();
    let m = channels.bs_antennas();
    if n == 0 {
        return Err(Error::Config("no users to serve".into()));
    }
    if setup.groups.len() != n {
        return Err(Error::Config(format!(
            "{} group labels for {} users",
            setup.groups.len(),
            n
        )));
    }
    if n > setup.rf_chains {
        return Err(Error::Config(format!(
            "{n} users exceed {} RF chains",
            setup.rf_chains
        )));
    }
    if setup.rf_chains > m {
        return Err(Error::Config(format!(
            "{} RF chains exceed {m} antennas",
            setup.rf_chains
        )));
    }
    if let SurfaceMode::Single(g) = setup.mode {
        if setup.groups.iter().any(|&x| x != g) {
            return Err(Error::Config(format!("single-mode {g} solve has users of the other group")));
        }
    }
    if !(setup.p_max > 0.0 && setup.p_max.is_finite()) {
        return Err(Error::Config(format!("power budget {} must be positive", setup.p_max)));
    }
    Ok(())
}

/// Initial digital precoder: matched filter through the analog precoder,
/// scaled to the full budget.
fn initial_digital(v_rf: &CMat, hbar: &EffectiveChannels, p_max: f64) -> CMat {
    let n = hbar.len();
    let mut v_bb = CMat::zeros(v_rf.ncols(), n);
    for (i, h) in hbar.hbar.iter().enumerate() {
        v_bb.set_column(i, &(v_rf.adjoint() * h));
    }
    let power = (v_rf * &v_bb).norm_squared();
    if power > 0.0 && power.is_finite() {
        v_bb *= Complex64::new((p_max / power).sqrt(), 0.0);
    }
    v_bb
}

/// Unitary block for `group`: identity, or aligned with the group's
/// strongest user.
fn initial_block(channels: &ChannelSet, groups: &[Group], group: Group, init: ThetaInit) -> CMat {
    let k = channels.irs_elements();
    let identity = CMat::identity(k, k);
    if init == ThetaInit::Identity {
        return identity;
    }
    let strongest = (0..groups.len())
        .filter(|&n| groups[n] == group)
        .max_by(|&a, &b| channels.h[a].norm().total_cmp(&channels.h[b].norm()).then(b.cmp(&a)));
    channels
        .dominant_arrival()
        .zip(strongest)
        .and_then(|(u, n)| unitary_map(&u, &channels.h[n]))
        .unwrap_or(identity)
}

pub fn initial_theta(
    channels: &ChannelSet,
    groups: &[Group],
    mode: SurfaceMode,
    init: ThetaInit,
) -> Result<ScatteringMatrix> {
    let k = channels.irs_elements();
    match mode {
        SurfaceMode::Single(g) => ScatteringMatrix::single_mode(g, &initial_block(channels, groups, g, init)),
        SurfaceMode::Hybrid => {
            let mut theta = CMat::zeros(2 * k, k);
            let s = Complex64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
            for g in [Group::Transmissive, Group::Reflective] {
                theta
                    .view_mut((block_rows(g, k).start, 0), (k, k))
                    .copy_from(&(initial_block(channels, groups, g, init) * s));
            }
            ScatteringMatrix::new(theta)
        }
    }
}

/// Block-coordinate ascent for an arbitrary setup.
pub fn solve_with(channels: &ChannelSet, setup: &SolveSetup, opts: &SolveOptions) -> Result<Solution> {
    let start = Instant::now();
    opts.validate()?;
    check_setup(channels, setup)?;
    let k = channels.irs_elements();
    let m = channels.bs_antennas();
    let groups = &setup.groups;
    let noise = &setup.noise;
    let p_max = setup.p_max;

    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    rng.set_stream(setup.init_stream);
    let mut v_rf = random_analog(m, setup.rf_chains, &mut rng);
    let mut theta = initial_theta(channels, groups, setup.mode, opts.theta_init)?;
    let mut hbar = EffectiveChannels::compute(channels, &theta, groups)?;
    let mut v_bb = initial_digital(&v_rf, &hbar, p_max);
    let mut aux = AuxState::optimal(&hbar, &(&v_rf * &v_bb), noise)?;
    let initial = fp_objective(&hbar, &(&v_rf * &v_bb), &aux, noise)?;
    let mut trace = SolveTrace {
        initial,
        iterations: Vec::new(),
        converged: false,
    };
    let mut previous = initial;

    for _ in 0..opts.max_outer {
        let mut current = fp_objective(&hbar, &(&v_rf * &v_bb), &aux, noise)?;

        let analog = solve_analog(&v_rf, &v_bb, &hbar, &aux, &opts.analog)?;
        let scaled_bb = enforce_power(&analog.v_rf, &v_bb, p_max);
        let analog_value = fp_objective(&hbar, &(&analog.v_rf * &scaled_bb), &aux, noise)?;
        let analog_accepted = analog_value >= current;
        if analog_accepted {
            v_rf = analog.v_rf;
            v_bb = scaled_bb;
            current = analog_value;
        }

        let digital = solve_digital(&v_rf, &hbar, &aux, p_max)?;
        let digital_value = fp_objective(&hbar, &(&v_rf * &digital.v_bb), &aux, noise)?;
        if digital_value >= current {
            v_bb = digital.v_bb;
        }

        let w = &v_rf * &v_bb;
        // unit scale, so the absolute gradient tolerance acts as a relative one
        let prob = assemble_trace_problem(channels, &w, &aux, groups)?.normalized();
        let (new_theta, mtrace) = match setup.mode {
            SurfaceMode::Hybrid => optimize_theta(&prob, &theta, &opts.manifold)?,
            SurfaceMode::Single(g) => {
                let sub = prob.restrict_rows(block_rows(g, k));
                let (block, t) = optimize_orthonormal(&sub, &theta.block(g), &opts.manifold)?;
                (ScatteringMatrix::single_mode(g, &block)?, t)
            }
        };
        theta = new_theta;
        hbar = EffectiveChannels::compute(channels, &theta, groups)?;
        let surrogate_blocks = fp_objective(&hbar, &w, &aux, noise)?;

        aux = AuxState::optimal(&hbar, &w, noise)?;
        let surrogate = fp_objective(&hbar, &w, &aux, noise)?;
        let rate = crate::fp::sum_rate(&hbar, &w, noise)?;
        trace.iterations.push(IterationRecord {
            surrogate_blocks,
            surrogate,
            sum_rate: rate,
            power: w.norm_squared(),
            c1_residual: theta.residual(),
            analog_sweeps: analog.sweeps,
            analog_accepted,
            digital_lambda: digital.lambda,
            manifold_iters: mtrace.iterations(),
            manifold_status: mtrace.status,
            manifold_step: mtrace.steps.last().copied(),
        });
        let done = (surrogate - previous).abs() < opts.eps_outer;
        previous = surrogate;
        if done {
            trace.converged = true;
            break;
        }
    }

    let w = &v_rf * &v_bb;
    let sum_rate = crate::fp::sum_rate(&hbar, &w, noise)?;
    Ok(Solution {
        precoder: HybridPrecoder::new(v_rf, v_bb)?,
        theta,
        aux,
        groups: groups.clone(),
        sum_rate,
        trace,
        wall_time: start.elapsed(),
    })
}

/// Rates recomputed from scratch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveReport {
    pub sinr: Vec<f64>,
    pub rates: Vec<f64>,
    pub sum_rate: f64,
    pub power: f64,
    pub c1_residual: f64,
    pub unit_modulus_deviation: f64,
}

pub fn objective_report(
    sol: &Solution,
    channels: &ChannelSet,
    noise: &NoiseModel,
) -> Result<ObjectiveReport> {
    let hbar = EffectiveChannels::compute(channels, &sol.theta, &sol.groups)?;
    let w = sol.precoder.composite();
    let sinr = sinrs(&hbar, &w, noise)?;
    let rates: Vec<f64> = sinr.iter().map(|g| (1.0 + g).log2()).collect();
    Ok(ObjectiveReport {
        sum_rate: rates.iter().sum(),
        sinr,
        rates,
        power: sol.precoder.power(),
        c1_residual: sol.theta.residual(),
        unit_modulus_deviation: sol.precoder.unit_modulus_deviation(),
    })
}
