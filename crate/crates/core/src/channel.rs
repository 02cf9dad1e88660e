//! Line-of-sight THz channel synthesis.
//!
//! The BS→IRS channel is `G = q(f_c, d₁)·a_rx(ϑ_rx)·a_tx(ϑ_tx)ᴴ` and each
//! IRS→user channel is `h_n = q(f_c, d₂ₙ)·a(ϑ_n)`, where
//! `q(f, d) = c/(4π f d)·exp(−τ(f) d / 2)` combines spreading loss with
//! molecular absorption. Arrays are half-wavelength ULAs, so the spatial
//! frequency of a path at angle `φ` is `ϑ = sin φ`.

use std::f64::consts::{FRAC_PI_2, PI};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::config::SystemConfig;
use crate::{CMat, CVec, Complex64, Error, Result};

pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Lowest and highest frequency a table must cover.
pub const REQUIRED_SPAN_HZ: (f64, f64) = (0.1e12, 1.0e12);

/// Piecewise-linear molecular absorption coefficient `τ(f)` in 1/m.
#[derive(Debug, Clone, PartialEq)]
pub struct AbsorptionTable {
    knots: Vec<(f64, f64)>,
}

impl AbsorptionTable {
    pub fn new(knots: Vec<(f64, f64)>) -> Result<Self> {
        if knots.len() < 2 {
            return Err(Error::Domain {
                what: "absorption table",
                reason: format!("needs at least 2 knots, got {}", knots.len()),
            });
        }
        for (i, &(f, tau)) in knots.iter().enumerate() {
            if !f.is_finite() || !tau.is_finite() || tau < 0.0 {
                return Err(Error::Domain {
                    what: "absorption table",
                    reason: format!("knot {i} ({f}, {tau}) must be finite with tau >= 0"),
                });
            }
            if i > 0 && f <= knots[i - 1].0 {
                return Err(Error::Domain {
                    what: "absorption table",
                    reason: format!("frequencies must be strictly increasing at knot {i}"),
                });
            }
        }
        let (lo, hi) = (knots[0].0, knots[knots.len() - 1].0);
        if lo > REQUIRED_SPAN_HZ.0 || hi < REQUIRED_SPAN_HZ.1 {
            return Err(Error::Domain {
                what: "absorption table",
                reason: format!(
                    "span [{lo:e}, {hi:e}] Hz does not cover [{:e}, {:e}] Hz",
                    REQUIRED_SPAN_HZ.0, REQUIRED_SPAN_HZ.1
                ),
            });
        }
        Ok(Self { knots })
    }

    /// Built-in table with knots at 0.1, 0.3, 0.55, 0.85 and 1.0 THz.
    pub fn builtin() -> Self {
        Self {
            knots: vec![
                (0.1e12, 0.005),
                (0.3e12, 0.0116),
                (0.55e12, 0.0535),
                (0.85e12, 0.1),
                (1.0e12, 0.2),
            ],
        }
    }

    pub fn knots(&self) -> &[(f64, f64)] {
        &self.knots
    }

    pub fn span(&self) -> (f64, f64) {
        (self.knots[0].0, self.knots[self.knots.len() - 1].0)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        text.parse()
    }

    /// Linear interpolation of `τ` at `f_c`; no extrapolation.
    pub fn coefficient(&self, f_c: f64) -> Result<f64> {
        let (lo, hi) = self.span();
        if !(f_c >= lo && f_c <= hi) {
            return Err(Error::OutOfRange {
                what: "carrier frequency",
                value: f_c,
                lo,
                hi,
            });
        }
        // first knot with frequency >= f_c
        let idx = self.knots.partition_point(|&(f, _)| f < f_c);
        let (f1, t1) = self.knots[idx];
        if f1 == f_c || idx == 0 {
            return Ok(t1);
        }
        let (f0, t0) = self.knots[idx - 1];
        let w = (f_c - f0) / (f1 - f0);
        Ok(t0 + w * (t1 - t0))
    }
}

impl FromStr for AbsorptionTable {
    type Err = Error;

    /// Two whitespace- or comma-separated columns `frequency_Hz tau_per_m`;
    /// `#` starts a comment.
    fn from_str(text: &str) -> Result<Self> {
        let mut knots = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let fields: Vec<&str> = line
                .split(|c: char| c == ',' || c.is_whitespace())
                .filter(|s| !s.is_empty())
                .collect();
            if fields.len() != 2 {
                return Err(Error::Parse {
                    line: i + 1,
                    reason: format!("expected 2 columns, found {}", fields.len()),
                });
            }
            let parse = |s: &str| {
                s.parse::<f64>().map_err(|e| Error::Parse {
                    line: i + 1,
                    reason: format!("{s:?}: {e}"),
                })
            };
            knots.push((parse(fields[0])?, parse(fields[1])?));
        }
        Self::new(knots)
    }
}

pub fn absorption_coefficient(table: &AbsorptionTable, f_c: f64) -> Result<f64> {
    table.coefficient(f_c)
}

/// Amplitude gain `c/(4π f_c d)·exp(−τ d / 2)`.
pub fn path_gain(f_c: f64, d: f64, tau: f64) -> Result<f64> {
    if !(f_c > 0.0 && f_c.is_finite()) {
        return Err(Error::Domain {
            what: "carrier frequency",
            reason: format!("{f_c} must be positive"),
        });
    }
    if !(d > 0.0 && d.is_finite()) {
        return Err(Error::Domain {
            what: "distance",
            reason: format!("{d} must be positive"),
        });
    }
    if !(tau >= 0.0 && tau.is_finite()) {
        return Err(Error::Domain {
            what: "absorption coefficient",
            reason: format!("{tau} must be non-negative"),
        });
    }
    Ok(SPEED_OF_LIGHT / (4.0 * PI * f_c * d) * (-0.5 * tau * d).exp())
}

/// ULA response `[1, e^{jπθ}, …, e^{jπ(L−1)θ}]ᵀ`.
pub fn array_response(theta: f64, len: usize) -> Result<CVec> {
    if len == 0 {
        return Err(Error::Domain {
            what: "array length",
            reason: "must be at least 1".into(),
        });
    }
    Ok(CVec::from_fn(len, |k, _| {
        Complex64::from_polar(1.0, PI * k as f64 * theta)
    }))
}

/// Spatial frequency `2 d₀ f_c sin φ / c` for element spacing `d₀`.
pub fn spatial_frequency(spacing: f64, f_c: f64, angle: f64) -> f64 {
    2.0 * spacing * f_c * angle.sin() / SPEED_OF_LIGHT
}

/// Which side of the IRS a user is on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Group {
    /// Outdoor user served by `Θ_r`.
    Reflective,
    /// Indoor user served by `Θ_t`.
    Transmissive,
}

impl fmt::Display for Group {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Group::Reflective => "reflective",
            Group::Transmissive => "transmissive",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Geometry {
    /// BS→IRS distance in meters.
    pub d1: f64,
    /// IRS→user distances in meters.
    pub d2: Vec<f64>,
    /// Departure angle at the BS.
    pub phi_tx: f64,
    /// Arrival angle at the IRS.
    pub phi_rx: f64,
    /// Departure angle from the IRS toward each user.
    pub phi_users: Vec<f64>,
    pub groups: Vec<Group>,
}

impl Geometry {
    pub fn validate(&self) -> Result<()> {
        let n = self.d2.len();
        if self.phi_users.len() != n || self.groups.len() != n {
            return Err(Error::Config(format!(
                "geometry has {} distances, {} angles and {} group labels",
                n,
                self.phi_users.len(),
                self.groups.len()
            )));
        }
        if n == 0 {
            return Err(Error::Config("geometry has no users".into()));
        }
        for &d in std::iter::once(&self.d1).chain(&self.d2) {
            if !(d > 0.0 && d.is_finite()) {
                return Err(Error::Config(format!("distance {d} must be positive")));
            }
        }
        for &a in [self.phi_tx, self.phi_rx].iter().chain(&self.phi_users) {
            if !(a.abs() <= FRAC_PI_2) {
                return Err(Error::Config(format!("angle {a} outside [-pi/2, pi/2]")));
            }
        }
        Ok(())
    }

    pub fn num_users(&self) -> usize {
        self.d2.len()
    }
}

/// Channels of one scenario: `G` is `K×M`, each `h_n` has length `K`.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelSet {
    pub g: CMat,
    pub h: Vec<CVec>,
}

impl ChannelSet {
    pub fn irs_elements(&self) -> usize {
        self.g.nrows()
    }

    pub fn bs_antennas(&self) -> usize {
        self.g.ncols()
    }

    pub fn num_users(&self) -> usize {
        self.h.len()
    }

    /// Unit vector along which `G` delivers the most energy to the surface
    /// (its leading left singular vector; `a_rx` up to phase for LoS).
    pub fn dominant_arrival(&self) -> Option<CVec> {
        if self.g.is_empty() {
            return None;
        }
        let svd = self.g.clone().svd(true, false);
        let (idx, &sv) = svd
            .singular_values
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))?;
        if !(sv > 0.0) {
            return None;
        }
        svd.u.map(|u| u.column(idx).into_owned())
    }

    /// Keep only the listed users, in the given order.
    pub fn subset(&self, users: &[usize]) -> ChannelSet {
        ChannelSet {
            g: self.g.clone(),
            h: users.iter().map(|&n| self.h[n].clone()).collect(),
        }
    }

    /// Multiply every channel by `factor` (amplitude).
    pub fn scaled(&self, factor: f64) -> ChannelSet {
        let f = Complex64::new(factor, 0.0);
        ChannelSet {
            g: self.g.map(|x| x * f),
            h: self.h.iter().map(|v| v.map(|x| x * f)).collect(),
        }
    }
}

pub fn synthesize_channels(
    cfg: &SystemConfig,
    geo: &Geometry,
    table: &AbsorptionTable,
) -> Result<ChannelSet> {
    geo.validate()?;
    if geo.num_users() != cfg.users {
        return Err(Error::Config(format!(
            "geometry has {} users but the configuration has {}",
            geo.num_users(),
            cfg.users
        )));
    }
    let f_c = cfg.carrier_hz;
    let tau = table.coefficient(f_c)?;
    let spacing = SPEED_OF_LIGHT / (2.0 * f_c);
    let k = cfg.irs_elements;
    let m = cfg.bs_antennas;

    let a_rx = array_response(spatial_frequency(spacing, f_c, geo.phi_rx), k)?;
    let a_tx = array_response(spatial_frequency(spacing, f_c, geo.phi_tx), m)?;
    let q1 = Complex64::new(path_gain(f_c, geo.d1, tau)?, 0.0);
    let g = (a_rx * a_tx.adjoint()).map(|x| x * q1);

    let h = geo
        .d2
        .iter()
        .zip(&geo.phi_users)
        .map(|(&d2, &phi)| {
            let q = Complex64::new(path_gain(f_c, d2, tau)?, 0.0);
            Ok(array_response(spatial_frequency(spacing, f_c, phi), k)?.map(|x| x * q))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ChannelSet { g, h })
}
