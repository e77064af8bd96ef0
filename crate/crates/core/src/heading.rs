//! Splits a commanded yaw rate between the body yaw `omega_alpha` (boxed) and
//! an offset `omega_beta` of a secondary heading `beta`:
//!
//! ```text
//! minimize  (omega_alpha + omega_beta - omega)^2 + lambda * beta^2
//! with      beta = beta_0 + omega_beta * dt,  lo <= omega_alpha <= hi
//! ```
//!
//! For fixed `omega_alpha` the optimal `omega_beta` is linear in it and the
//! reduced objective is a convex parabola in `omega_alpha`, minimized at
//! `omega + beta_0 / dt`; clamping that to the box is therefore exact.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HeadingSplit {
    pub omega_alpha: f64,
    pub omega_beta: f64,
}

impl HeadingSplit {
    pub fn cost(&self, omega: f64, beta0: f64, lambda: f64, dt: f64) -> f64 {
        let track = self.omega_alpha + self.omega_beta - omega;
        let beta = beta0 + self.omega_beta * dt;
        track * track + lambda * beta * beta
    }
}

pub fn allocate_heading(omega: f64, beta0: f64, lambda: f64, dt: f64, limits: [f64; 2]) -> Result<HeadingSplit> {
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(Error::InvalidParams(format!(
            "lambda must be non-negative, got {lambda}"
        )));
    }
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::InvalidParams(format!("dt must be positive, got {dt}")));
    }
    if !(limits[0] <= limits[1]) {
        return Err(Error::InvalidParams("limits must be ordered".into()));
    }
    let omega_alpha = (omega + beta0 / dt).clamp(limits[0], limits[1]);
    let omega_beta = ((omega - omega_alpha) - lambda * dt * beta0) / (1.0 + lambda * dt * dt);
    Ok(HeadingSplit {
        omega_alpha,
        omega_beta,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn aligned_and_feasible_is_free() {
        let s = allocate_heading(0.4, 0.0, 2.0, 0.1, [-1.0, 1.0]).unwrap();
        assert_eq!((s.omega_alpha, s.omega_beta), (0.4, 0.0));
        assert_eq!(s.cost(0.4, 0.0, 2.0, 0.1), 0.0);
    }

    #[test]
    fn misalignment_corrected_in_one_step() {
        let s = allocate_heading(0.0, 0.05, 3.0, 0.1, [-2.0, 2.0]).unwrap();
        assert!((s.omega_beta + 0.5).abs() < 1e-12);
        assert!((s.omega_alpha - 0.5).abs() < 1e-12);
    }

    #[test]
    fn saturated_body_rate() {
        let (lambda, dt) = (2.0, 0.1);
        let s = allocate_heading(1.5, 0.0, lambda, dt, [-1.0, 1.0]).unwrap();
        assert_eq!(s.omega_alpha, 1.0);
        assert!((s.omega_beta - 0.5 / (1.0 + lambda * dt * dt)).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(allocate_heading(0.0, 0.0, -1.0, 0.1, [-1.0, 1.0]).is_err());
        assert!(allocate_heading(0.0, 0.0, 1.0, 0.0, [-1.0, 1.0]).is_err());
        assert!(allocate_heading(0.0, 0.0, 1.0, 0.1, [1.0, -1.0]).is_err());
    }
}
