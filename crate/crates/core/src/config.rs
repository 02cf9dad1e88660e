//! Scenario configuration.
//!
//! The file format is flat TOML (`key = value`, `#` comments). Every key is
//! optional and defaults to the reference midpoint scenario; unknown keys are
//! rejected so typos surface as errors.
//!
//! | key | unit | default |
//! |---|---|---|
//! | `users` | | 4 |
//! | `reflective_users` | | 2 |
//! | `bs_antennas` | | 100 |
//! | `rf_chains` | | 4 |
//! | `irs_elements` | | 64 |
//! | `carrier_hz` | Hz | 0.3e12 |
//! | `bandwidth_hz` | Hz | 1e6 |
//! | `noise_dbm_per_hz` | dBm/Hz | -174 |
//! | `p_max_dbm` | dBm | 20 |
//! | `bs_irs_distance_m` | m | 30 |
//! | `user_distance_min_m`, `user_distance_max_m` | m | 5, 20 |
//! | `angle_min_rad`, `angle_max_rad` | rad | -π/2, π/2 |
//! | `absorption_table` | path | built-in table |
//! | `eps_outer` | bits/s/Hz | 1e-4 |
//! | `max_outer` | | 100 |
//! | `analog_max_sweeps`, `analog_tol` | | 20, 1e-9 |
//! | `manifold_max_iters`, `manifold_max_halvings` | | 500, 30 |
//! | `manifold_grad_tol` | | 1e-6·K |
//! | `theta_init` | `aligned` or `identity` | aligned |
//! | `seed` | | 0 |

use std::f64::consts::FRAC_PI_2;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::beamforming::AnalogOptions;
use crate::channel::{AbsorptionTable, Group};
use crate::fp::NoiseModel;
use crate::linalg::dbm_to_watts;
use crate::manifold::ManifoldOptions;
use crate::solver::{SolveOptions, ThetaInit};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SystemConfig {
    pub users: usize,
    pub reflective_users: usize,
    pub bs_antennas: usize,
    pub rf_chains: usize,
    pub irs_elements: usize,
    pub carrier_hz: f64,
    pub bandwidth_hz: f64,
    pub noise_dbm_per_hz: f64,
    pub p_max_dbm: f64,
    pub bs_irs_distance_m: f64,
    pub user_distance_min_m: f64,
    pub user_distance_max_m: f64,
    pub angle_min_rad: f64,
    pub angle_max_rad: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub absorption_table: Option<PathBuf>,
    pub eps_outer: f64,
    pub max_outer: usize,
    pub analog_max_sweeps: usize,
    pub analog_tol: f64,
    pub manifold_max_iters: usize,
    pub manifold_max_halvings: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub manifold_grad_tol: Option<f64>,
    pub theta_init: ThetaInit,
    pub seed: u64,
}

impl Default for SystemConfig {
    fn default() -> Self {
        let analog = AnalogOptions::default();
        let manifold = ManifoldOptions::default();
        Self {
            users: 4,
            reflective_users: 2,
            bs_antennas: 100,
            rf_chains: 4,
            irs_elements: 64,
            carrier_hz: 0.3e12,
            bandwidth_hz: 1e6,
            noise_dbm_per_hz: -174.0,
            p_max_dbm: 20.0,
            bs_irs_distance_m: 30.0,
            user_distance_min_m: 5.0,
            user_distance_max_m: 20.0,
            angle_min_rad: -FRAC_PI_2,
            angle_max_rad: FRAC_PI_2,
            absorption_table: None,
            eps_outer: 1e-4,
            max_outer: 100,
            analog_max_sweeps: analog.max_sweeps,
            analog_tol: analog.tol,
            manifold_max_iters: manifold.max_iters,
            manifold_max_halvings: manifold.max_halvings,
            manifold_grad_tol: None,
            theta_init: ThetaInit::default(),
            seed: 0,
        }
    }
}

impl FromStr for SystemConfig {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let cfg: SystemConfig = toml::from_str(s).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }
}

impl SystemConfig {
    /// Read and validate a config file. A relative `absorption_table` path is
    /// resolved against the config file's directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg: SystemConfig = text.parse()?;
        if let (Some(table), Some(dir)) = (&cfg.absorption_table, path.parent()) {
            if table.is_relative() {
                cfg.absorption_table = Some(dir.join(table));
            }
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Config(msg));
        if self.users == 0 {
            return fail("users must be at least 1".into());
        }
        if self.reflective_users > self.users {
            return fail(format!(
                "reflective_users = {} exceeds users = {}",
                self.reflective_users, self.users
            ));
        }
        if self.users > self.rf_chains {
            return fail(format!(
                "users = {} exceeds rf_chains = {}; each user needs an RF chain",
                self.users, self.rf_chains
            ));
        }
        if self.rf_chains > self.bs_antennas {
            return fail(format!(
                "rf_chains = {} exceeds bs_antennas = {}",
                self.rf_chains, self.bs_antennas
            ));
        }
        if self.irs_elements == 0 {
            return fail("irs_elements must be at least 1".into());
        }
        for (name, v) in [
            ("carrier_hz", self.carrier_hz),
            ("bandwidth_hz", self.bandwidth_hz),
            ("bs_irs_distance_m", self.bs_irs_distance_m),
            ("user_distance_min_m", self.user_distance_min_m),
            ("user_distance_max_m", self.user_distance_max_m),
            ("eps_outer", self.eps_outer),
            ("analog_tol", self.analog_tol),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return fail(format!("{name} = {v} must be positive"));
            }
        }
        for (name, v) in [
            ("noise_dbm_per_hz", self.noise_dbm_per_hz),
            ("p_max_dbm", self.p_max_dbm),
        ] {
            if !v.is_finite() {
                return fail(format!("{name} = {v} must be finite"));
            }
        }
        if let Some(t) = self.manifold_grad_tol {
            if !(t > 0.0 && t.is_finite()) {
                return fail(format!("manifold_grad_tol = {t} must be positive"));
            }
        }
        if self.user_distance_min_m > self.user_distance_max_m {
            return fail("user_distance_min_m exceeds user_distance_max_m".into());
        }
        if !(self.angle_min_rad >= -FRAC_PI_2
            && self.angle_max_rad <= FRAC_PI_2
            && self.angle_min_rad <= self.angle_max_rad)
        {
            return fail(format!(
                "angle range [{}, {}] must lie within [-pi/2, pi/2]",
                self.angle_min_rad, self.angle_max_rad
            ));
        }
        for (name, v) in [
            ("max_outer", self.max_outer),
            ("analog_max_sweeps", self.analog_max_sweeps),
            ("manifold_max_iters", self.manifold_max_iters),
        ] {
            if v == 0 {
                return fail(format!("{name} must be at least 1"));
            }
        }
        Ok(())
    }

    pub fn p_max_watts(&self) -> f64 {
        dbm_to_watts(self.p_max_dbm)
    }

    pub fn noise(&self) -> Result<NoiseModel> {
        NoiseModel::from_density(self.noise_dbm_per_hz, self.bandwidth_hz)
    }

    /// First `reflective_users` users are reflective, the rest transmissive.
    pub fn groups(&self) -> Vec<Group> {
        (0..self.users)
            .map(|n| {
                if n < self.reflective_users {
                    Group::Reflective
                } else {
                    Group::Transmissive
                }
            })
            .collect()
    }

    pub fn absorption(&self) -> Result<AbsorptionTable> {
        match &self.absorption_table {
            Some(p) => AbsorptionTable::load(p),
            None => Ok(AbsorptionTable::builtin()),
        }
    }

    pub fn solve_options(&self) -> SolveOptions {
        SolveOptions {
            eps_outer: self.eps_outer,
            max_outer: self.max_outer,
            analog: AnalogOptions {
                max_sweeps: self.analog_max_sweeps,
                tol: self.analog_tol,
            },
            manifold: ManifoldOptions {
                grad_tol: self.manifold_grad_tol,
                max_iters: self.manifold_max_iters,
                max_halvings: self.manifold_max_halvings,
                ..ManifoldOptions::default()
            },
            theta_init: self.theta_init,
            seed: self.seed,
        }
    }
}
