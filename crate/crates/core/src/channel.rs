//! Wireless channels between single-antenna devices, the reflecting surface
//! and the multi-antenna aggregation server.
//!
//! All links are i.i.d. Rayleigh fading scaled by a log-distance path loss
//! `PL0 * d^(-alpha)` with reference distance 1 m. The effective uplink of
//! device `k` under phase shifts `theta` is
//!
//! ```text
//! h_k(theta) = h_d[k] + G * diag(exp(j*theta)) * h_r[k]
//! ```

use std::f64::consts::TAU;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::seed::{self, purpose};
use crate::C64;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ChannelError {
    #[error("invalid system configuration: {0}")]
    InvalidConfig(String),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
}

/// Planar position in meters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn distance(&self, other: &Point) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

impl From<[f64; 2]> for Point {
    fn from(p: [f64; 2]) -> Self {
        Self::new(p[0], p[1])
    }
}

/// Physical parameters of one network instance.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemConfig {
    pub num_devices: usize,
    pub num_antennas: usize,
    pub num_ris_elements: usize,
    /// Per-device transmit power budget (W).
    pub tx_power: f64,
    /// Receiver noise power per antenna (W).
    pub noise_power: f64,
    pub server_position: Point,
    pub ris_position: Point,
    pub device_positions: Vec<Point>,
    pub pathloss_exponent_direct: f64,
    pub pathloss_exponent_ris: f64,
    /// Linear gain at the 1 m reference distance.
    pub reference_gain: f64,
}

pub const DEFAULT_REFERENCE_GAIN: f64 = 1e-3;
pub const DEFAULT_EXPONENT_DIRECT: f64 = 3.5;
pub const DEFAULT_EXPONENT_RIS: f64 = 2.2;
pub const DEFAULT_SERVER_POSITION: Point = Point::new(0.0, 0.0);
pub const DEFAULT_RIS_POSITION: Point = Point::new(50.0, 10.0);
pub const DEFAULT_DEVICE_CENTER: Point = Point::new(100.0, 0.0);
pub const DEFAULT_DEVICE_RADIUS: f64 = 20.0;

impl SystemConfig {
    /// Default geometry with `num_devices` devices dropped uniformly in the
    /// default disc, positions drawn from `geometry_seed`.
    pub fn with_default_geometry(
        num_devices: usize,
        num_antennas: usize,
        num_ris_elements: usize,
        tx_power: f64,
        noise_power: f64,
        geometry_seed: u64,
    ) -> Self {
        Self {
            num_devices,
            num_antennas,
            num_ris_elements,
            tx_power,
            noise_power,
            server_position: DEFAULT_SERVER_POSITION,
            ris_position: DEFAULT_RIS_POSITION,
            device_positions: sample_disc_positions(
                num_devices,
                DEFAULT_DEVICE_CENTER,
                DEFAULT_DEVICE_RADIUS,
                geometry_seed,
            ),
            pathloss_exponent_direct: DEFAULT_EXPONENT_DIRECT,
            pathloss_exponent_ris: DEFAULT_EXPONENT_RIS,
            reference_gain: DEFAULT_REFERENCE_GAIN,
        }
    }

    pub fn validate(&self) -> Result<(), ChannelError> {
        let bad = |msg: String| Err(ChannelError::InvalidConfig(msg));
        if self.num_devices == 0 {
            return bad("num_devices must be at least 1".into());
        }
        if self.num_antennas == 0 {
            return bad("num_antennas must be at least 1".into());
        }
        if !(self.tx_power.is_finite() && self.tx_power > 0.0) {
            return bad(format!("tx_power must be finite and positive, got {}", self.tx_power));
        }
        if !(self.noise_power.is_finite() && self.noise_power >= 0.0) {
            return bad(format!(
                "noise_power must be finite and nonnegative, got {}",
                self.noise_power
            ));
        }
        for (name, v) in [
            ("pathloss_exponent_direct", self.pathloss_exponent_direct),
            ("pathloss_exponent_ris", self.pathloss_exponent_ris),
            ("reference_gain", self.reference_gain),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return bad(format!("{name} must be finite and positive, got {v}"));
            }
        }
        if self.device_positions.len() != self.num_devices {
            return bad(format!(
                "{} device positions for {} devices",
                self.device_positions.len(),
                self.num_devices
            ));
        }
        let finite = |p: &Point| p.x.is_finite() && p.y.is_finite();
        if !finite(&self.server_position)
            || !finite(&self.ris_position)
            || !self.device_positions.iter().all(finite)
        {
            return bad("positions must be finite".into());
        }
        for (k, p) in self.device_positions.iter().enumerate() {
            if p.distance(&self.server_position) == 0.0 {
                return bad(format!("device {k} coincides with the server"));
            }
            if self.num_ris_elements > 0 && p.distance(&self.ris_position) == 0.0 {
                return bad(format!("device {k} coincides with the RIS"));
            }
        }
        if self.num_ris_elements > 0 && self.ris_position.distance(&self.server_position) == 0.0 {
            return bad("RIS coincides with the server".into());
        }
        Ok(())
    }

    pub fn direct_gain(&self, device: usize) -> f64 {
        path_gain(
            self.reference_gain,
            self.device_positions[device].distance(&self.server_position),
            self.pathloss_exponent_direct,
        )
    }

    pub fn device_ris_gain(&self, device: usize) -> f64 {
        path_gain(
            self.reference_gain,
            self.device_positions[device].distance(&self.ris_position),
            self.pathloss_exponent_ris,
        )
    }

    pub fn ris_server_gain(&self) -> f64 {
        path_gain(
            self.reference_gain,
            self.ris_position.distance(&self.server_position),
            self.pathloss_exponent_ris,
        )
    }
}

/// Log-distance path loss with 1 m reference distance.
pub fn path_gain(reference_gain: f64, distance: f64, exponent: f64) -> f64 {
    reference_gain * distance.powf(-exponent)
}

/// Uniform positions inside a disc (area-uniform, not radius-uniform).
pub fn sample_disc_positions(count: usize, center: Point, radius: f64, seed: u64) -> Vec<Point> {
    let mut rng = seed::rng_for(seed, &[purpose::GEOMETRY]);
    (0..count)
        .map(|_| {
            let r = radius * rng.random::<f64>().sqrt();
            let phi = TAU * rng.random::<f64>();
            Point::new(center.x + r * phi.cos(), center.y + r * phi.sin())
        })
        .collect()
}

/// One realization of every link in the network.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelSet {
    /// Device -> server, one length-N vector per device.
    pub direct: Vec<DVector<C64>>,
    /// Device -> RIS, one length-M vector per device.
    pub device_to_ris: Vec<DVector<C64>>,
    /// RIS -> server, N x M.
    pub ris_to_server: DMatrix<C64>,
}

impl ChannelSet {
    pub fn num_devices(&self) -> usize {
        self.direct.len()
    }

    pub fn num_antennas(&self) -> usize {
        self.ris_to_server.nrows()
    }

    pub fn num_ris_elements(&self) -> usize {
        self.ris_to_server.ncols()
    }

    /// Same direct links with the reflecting surface removed.
    pub fn without_ris(&self) -> ChannelSet {
        ChannelSet {
            direct: self.direct.clone(),
            device_to_ris: vec![DVector::zeros(0); self.direct.len()],
            ris_to_server: DMatrix::zeros(self.num_antennas(), 0),
        }
    }

    pub fn check_dimensions(&self) -> Result<(), ChannelError> {
        let n = self.num_antennas();
        let m = self.num_ris_elements();
        if self.device_to_ris.len() != self.direct.len() {
            return Err(ChannelError::DimensionMismatch(format!(
                "{} direct links but {} device-to-RIS links",
                self.direct.len(),
                self.device_to_ris.len()
            )));
        }
        for (k, (hd, hr)) in self.direct.iter().zip(&self.device_to_ris).enumerate() {
            if hd.len() != n {
                return Err(ChannelError::DimensionMismatch(format!(
                    "direct link of device {k} has length {}, expected {n}",
                    hd.len()
                )));
            }
            if hr.len() != m {
                return Err(ChannelError::DimensionMismatch(format!(
                    "device-to-RIS link of device {k} has length {}, expected {m}",
                    hr.len()
                )));
            }
        }
        Ok(())
    }

    /// Reflected-path matrix of device `k`: column `i` is `G[:, i] * h_r[k][i]`.
    pub fn cascade(&self, device: usize) -> DMatrix<C64> {
        let mut out = self.ris_to_server.clone();
        for (i, mut col) in out.column_iter_mut().enumerate() {
            col *= self.device_to_ris[device][i];
        }
        out
    }
}

/// RIS phase configuration in radians, each entry wrapped into `[0, 2*pi)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseShiftVector(Vec<f64>);

impl PhaseShiftVector {
    pub fn new(phases: Vec<f64>) -> Self {
        Self(phases.into_iter().map(wrap_phase).collect())
    }

    pub fn zeros(len: usize) -> Self {
        Self(vec![0.0; len])
    }

    /// Phases of the given unit-modulus (or arbitrary nonzero) coefficients.
    pub fn from_coefficients(coeffs: &[C64]) -> Self {
        Self::new(coeffs.iter().map(|c| c.arg()).collect())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    /// Unit-modulus reflection coefficients `exp(j*theta_i)`.
    pub fn reflection(&self) -> Vec<C64> {
        self.0.iter().map(|&t| C64::from_polar(1.0, t)).collect()
    }
}

fn wrap_phase(t: f64) -> f64 {
    let w = t.rem_euclid(TAU);
    // rem_euclid can round up to exactly TAU for tiny negative inputs
    if w >= TAU {
        0.0
    } else {
        w
    }
}

fn complex_gaussian<R: Rng>(rng: &mut R, variance: f64) -> C64 {
    let s = (variance / 2.0).sqrt();
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    C64::new(s * re, s * im)
}

/// Draw one channel realization. Each link class has its own random stream
/// so the direct links do not change when the RIS size changes.
pub fn sample_channels(cfg: &SystemConfig, seed: u64) -> Result<ChannelSet, ChannelError> {
    cfg.validate()?;
    let n = cfg.num_antennas;
    let m = cfg.num_ris_elements;

    let mut rng = seed::rng_for(seed, &[purpose::CHANNEL_DIRECT]);
    let direct = (0..cfg.num_devices)
        .map(|k| {
            let v = cfg.direct_gain(k);
            DVector::from_fn(n, |_, _| complex_gaussian(&mut rng, v))
        })
        .collect();

    let mut rng = seed::rng_for(seed, &[purpose::CHANNEL_DEVICE_RIS]);
    let device_to_ris = (0..cfg.num_devices)
        .map(|k| {
            if m == 0 {
                return DVector::zeros(0);
            }
            let v = cfg.device_ris_gain(k);
            DVector::from_fn(m, |_, _| complex_gaussian(&mut rng, v))
        })
        .collect();

    let mut rng = seed::rng_for(seed, &[purpose::CHANNEL_RIS_SERVER]);
    let ris_to_server = if m == 0 {
        DMatrix::zeros(n, 0)
    } else {
        let v = cfg.ris_server_gain();
        // column-major fill: one column per RIS element
        DMatrix::from_fn(n, m, |_, _| complex_gaussian(&mut rng, v))
    };

    Ok(ChannelSet {
        direct,
        device_to_ris,
        ris_to_server,
    })
}

/// Composite channel `h_d[k] + G diag(e^{j theta}) h_r[k]` for every device.
pub fn effective_channel(
    ch: &ChannelSet,
    theta: &PhaseShiftVector,
) -> Result<Vec<DVector<C64>>, ChannelError> {
    ch.check_dimensions()?;
    let m = ch.num_ris_elements();
    if theta.len() != m {
        return Err(ChannelError::DimensionMismatch(format!(
            "{} phase shifts for {m} RIS elements",
            theta.len()
        )));
    }
    let refl = theta.reflection();
    Ok(ch
        .direct
        .iter()
        .zip(&ch.device_to_ris)
        .map(|(hd, hr)| {
            if m == 0 {
                return hd.clone();
            }
            let v = DVector::from_iterator(m, hr.iter().zip(&refl).map(|(a, b)| a * b));
            hd + &ch.ris_to_server * v
        })
        .collect())
}

/// Effective channels of a subset of devices, in the order given.
pub fn effective_channel_subset(
    ch: &ChannelSet,
    theta: &PhaseShiftVector,
    devices: &[usize],
) -> Result<Vec<DVector<C64>>, ChannelError> {
    let all = effective_channel(ch, theta)?;
    devices
        .iter()
        .map(|&k| {
            all.get(k).cloned().ok_or_else(|| {
                ChannelError::DimensionMismatch(format!(
                    "device index {k} out of range for {} devices",
                    all.len()
                ))
            })
        })
        .collect()
}
