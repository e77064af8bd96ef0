//! Planar single-integrator robot: pose `(x, y, theta)`, velocity input
//! `(v_x, v_y, omega)` in the world frame.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::wrap_angle;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RobotState {
    pub x: f64,
    pub y: f64,
    /// Radians, wrapped to `[0, 2 pi)`.
    pub theta: f64,
}

impl RobotState {
    pub fn new(x: f64, y: f64, theta: f64) -> Self {
        RobotState {
            x,
            y,
            theta: wrap_angle(theta),
        }
    }

    pub fn position(&self) -> [f64; 2] {
        [self.x, self.y]
    }

    pub fn as_array(&self) -> [f64; 3] {
        [self.x, self.y, self.theta]
    }

    /// One Euler step of the integrator.
    pub fn step(&self, u: &ControlInput, dt: f64) -> RobotState {
        RobotState::new(self.x + u.v_x * dt, self.y + u.v_y * dt, self.theta + u.omega * dt)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ControlInput {
    /// m/s.
    pub v_x: f64,
    /// m/s.
    pub v_y: f64,
    /// rad/s.
    pub omega: f64,
}

impl ControlInput {
    pub const ZERO: ControlInput = ControlInput {
        v_x: 0.0,
        v_y: 0.0,
        omega: 0.0,
    };

    pub fn new(v_x: f64, v_y: f64, omega: f64) -> Self {
        ControlInput { v_x, v_y, omega }
    }

    pub fn as_array(&self) -> [f64; 3] {
        [self.v_x, self.v_y, self.omega]
    }

    pub fn from_array(a: [f64; 3]) -> Self {
        ControlInput::new(a[0], a[1], a[2])
    }

    pub fn scaled(&self, s: f64) -> Self {
        ControlInput::new(self.v_x * s, self.v_y * s, self.omega * s)
    }
}

/// Per-component box on `(v_x, v_y, omega)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InputLimits {
    pub lower: [f64; 3],
    pub upper: [f64; 3],
}

impl InputLimits {
    /// `|v_x|, |v_y| <= v_max`, `|omega| <= omega_max`.
    pub fn symmetric(v_max: f64, omega_max: f64) -> Self {
        InputLimits {
            lower: [-v_max, -v_max, -omega_max],
            upper: [v_max, v_max, omega_max],
        }
    }

    pub fn validate(&self) -> Result<()> {
        for i in 0..3 {
            if !(self.lower[i] <= self.upper[i]) || !self.lower[i].is_finite() || !self.upper[i].is_finite() {
                return Err(Error::InvalidParams(format!(
                    "input limits on axis {i} are not an ordered finite interval"
                )));
            }
        }
        Ok(())
    }

    pub fn clamp(&self, u: &ControlInput) -> ControlInput {
        let a = u.as_array();
        ControlInput::from_array([0, 1, 2].map(|i| a[i].clamp(self.lower[i], self.upper[i])))
    }

    pub fn contains(&self, u: &ControlInput, tol: f64) -> bool {
        let a = u.as_array();
        (0..3).all(|i| a[i] >= self.lower[i] - tol && a[i] <= self.upper[i] + tol)
    }
}
