//! Deterministic discrete-time environments and scene descriptions.

pub mod catalog;
mod dynamics;
mod scene;

use std::f64::consts::PI;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use dynamics::{step_linear, step_quadrotor, step_unicycle, QuadrotorParams};
pub use scene::{RegionDef, SceneFile, SceneSpec};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EnvError {
    #[error("invalid environment: {0}")]
    Invalid(String),
    #[error("invalid scene: {0}")]
    Scene(String),
    #[error("scene file: {0}")]
    Parse(String),
    #[error("unknown catalog scene `{0}`")]
    UnknownScene(String),
    #[error("io: {0}")]
    Io(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Dynamics {
    Linear,
    Unicycle,
    Quadrotor,
}

impl Dynamics {
    pub fn state_dim(self) -> usize {
        match self {
            Dynamics::Linear => 2,
            Dynamics::Unicycle => 4,
            Dynamics::Quadrotor => 12,
        }
    }

    pub fn control_dim(self) -> usize {
        match self {
            Dynamics::Linear | Dynamics::Unicycle => 2,
            Dynamics::Quadrotor => 4,
        }
    }

    /// State components that are angles (wrapped before normalization).
    pub fn angle_indices(self) -> &'static [usize] {
        match self {
            Dynamics::Linear => &[],
            Dynamics::Unicycle => &[2],
            Dynamics::Quadrotor => &[6, 7, 8],
        }
    }

    pub fn default_position(self) -> Vec<usize> {
        match self {
            Dynamics::Linear | Dynamics::Unicycle => vec![0, 1],
            Dynamics::Quadrotor => vec![0, 1, 2],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnvSpec {
    pub dynamics: Dynamics,
    pub dt: f64,
    pub horizon: usize,
    pub control_lower: Vec<f64>,
    pub control_upper: Vec<f64>,
    pub init_lower: Vec<f64>,
    pub init_upper: Vec<f64>,
    /// State components read as position by regions.
    pub position: Vec<usize>,
    /// Extents used to scale raw states into observations.
    pub state_lower: Vec<f64>,
    pub state_upper: Vec<f64>,
    #[serde(default)]
    pub quadrotor: QuadrotorParams,
}

fn check_box(name: &str, lo: &[f64], hi: &[f64], dim: usize) -> Result<(), EnvError> {
    if lo.len() != dim || hi.len() != dim {
        return Err(EnvError::Invalid(format!(
            "{name} bounds must have dimension {dim}"
        )));
    }
    if lo
        .iter()
        .zip(hi)
        .any(|(l, h)| !(l <= h) || !l.is_finite() || !h.is_finite())
    {
        return Err(EnvError::Invalid(format!(
            "{name} lower bound exceeds upper bound"
        )));
    }
    Ok(())
}

impl EnvSpec {
    pub fn validate(&self) -> Result<(), EnvError> {
        if !(self.dt > 0.0) {
            return Err(EnvError::Invalid("dt must be positive".into()));
        }
        if self.horizon < 1 {
            return Err(EnvError::Invalid("horizon must be at least 1".into()));
        }
        let (n, m) = (self.state_dim(), self.control_dim());
        check_box("control", &self.control_lower, &self.control_upper, m)?;
        check_box("initial-state", &self.init_lower, &self.init_upper, n)?;
        check_box("state extent", &self.state_lower, &self.state_upper, n)?;
        if self
            .state_lower
            .iter()
            .zip(&self.state_upper)
            .any(|(l, h)| l == h)
        {
            return Err(EnvError::Invalid(
                "state extents must be non-degenerate".into(),
            ));
        }
        if self.position.is_empty() || self.position.iter().any(|&i| i >= n) {
            return Err(EnvError::Invalid("position indices out of range".into()));
        }
        Ok(())
    }

    pub fn state_dim(&self) -> usize {
        self.dynamics.state_dim()
    }

    pub fn control_dim(&self) -> usize {
        self.dynamics.control_dim()
    }

    pub fn clamp_control(&self, u: &[f64]) -> Vec<f64> {
        u.iter()
            .zip(self.control_lower.iter().zip(&self.control_upper))
            .map(|(&v, (&lo, &hi))| {
                if v.is_nan() {
                    lo.max(0.0).min(hi)
                } else {
                    v.clamp(lo, hi)
                }
            })
            .collect()
    }

    /// Maps a normalized action in `[-1, 1]^m` (clipped) onto the control box.
    pub fn control_from_action(&self, a: &[f64]) -> Vec<f64> {
        a.iter()
            .zip(self.control_lower.iter().zip(&self.control_upper))
            .map(|(&v, (&lo, &hi))| {
                let v = if v.is_nan() { 0.0 } else { v.clamp(-1.0, 1.0) };
                lo + (v + 1.0) * 0.5 * (hi - lo)
            })
            .collect()
    }

    /// One step with the control clamped to its bounds.
    pub fn step(&self, x: &[f64], u: &[f64]) -> Vec<f64> {
        let u = self.clamp_control(u);
        match self.dynamics {
            Dynamics::Linear => step_linear(x, &u, self.dt),
            Dynamics::Unicycle => step_unicycle(x, &u, self.dt),
            Dynamics::Quadrotor => step_quadrotor(x, &u, self.dt, &self.quadrotor),
        }
    }

    /// Uniform draw from the initial-state box; degenerate components are exact.
    pub fn sample_initial<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        self.init_lower
            .iter()
            .zip(&self.init_upper)
            .map(|(&lo, &hi)| {
                if lo == hi {
                    lo
                } else {
                    rng.random_range(lo..hi)
                }
            })
            .collect()
    }

    /// Raw state scaled into `[-1, 1]` by the state extents, angles wrapped first.
    pub fn normalize_state(&self, x: &[f64], out: &mut Vec<f64>) {
        let angles = self.dynamics.angle_indices();
        for (i, &v) in x.iter().enumerate() {
            let v = if angles.contains(&i) {
                wrap_angle(v)
            } else {
                v
            };
            let (lo, hi) = (self.state_lower[i], self.state_upper[i]);
            out.push((2.0 * (v - lo) / (hi - lo) - 1.0).clamp(-1.0, 1.0));
        }
    }

    /// Default settings for each dynamics model.
    pub fn preset(dynamics: Dynamics) -> Self {
        match dynamics {
            Dynamics::Linear => Self {
                dynamics,
                dt: 0.2,
                horizon: 100,
                control_lower: vec![-1.0, -1.0],
                control_upper: vec![1.0, 1.0],
                init_lower: vec![-4.5, -4.5],
                init_upper: vec![-3.5, -3.5],
                position: vec![0, 1],
                state_lower: vec![-5.0, -5.0],
                state_upper: vec![5.0, 5.0],
                quadrotor: QuadrotorParams::default(),
            },
            Dynamics::Unicycle => Self {
                dynamics,
                dt: 0.2,
                horizon: 100,
                control_lower: vec![-1.0, -4.0],
                control_upper: vec![1.0, 4.0],
                init_lower: vec![-4.5, -4.5, 0.0, 0.0],
                init_upper: vec![-3.5, -3.5, 0.0, 0.0],
                position: vec![0, 1],
                state_lower: vec![-5.0, -5.0, -PI, -3.0],
                state_upper: vec![5.0, 5.0, PI, 3.0],
                quadrotor: QuadrotorParams::default(),
            },
            Dynamics::Quadrotor => Self {
                dynamics,
                dt: 0.1,
                horizon: 100,
                control_lower: vec![0.0; 4],
                control_upper: vec![1.0; 4],
                init_lower: vec![
                    -4.5, -4.5, -1.5, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0,
                ],
                init_upper: vec![
                    -3.5, -3.5, -0.5, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0,
                ],
                position: vec![0, 1, 2],
                state_lower: vec![
                    -5.0, -5.0, -5.0, -3.0, -3.0, -3.0, -PI, -PI, -PI, -5.0, -5.0, -5.0,
                ],
                state_upper: vec![5.0, 5.0, 0.0, 3.0, 3.0, 3.0, PI, PI, PI, 5.0, 5.0, 5.0],
                quadrotor: QuadrotorParams::default(),
            },
        }
    }
}

/// Wraps an angle into `[-pi, pi)`.
pub fn wrap_angle(a: f64) -> f64 {
    (a + PI).rem_euclid(2.0 * PI) - PI
}
