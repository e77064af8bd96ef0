//! Pointwise discrete-time safety filter: the closest input to a nominal one
//! such that `h(next pose, t + dt) >= rho * h(pose, t)`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::LiftedSafetyField;
use crate::qp::{solve_qp, QpSettings};
use crate::robot::{ControlInput, InputLimits, RobotState};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FilterStatus {
    /// The (box-clamped) nominal input already satisfied the constraint.
    Unmodified,
    Filtered,
    /// No input inside the box satisfies the constraint; the returned input
    /// is the least-violating one found.
    InfeasibleWithinLimits,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FilterOutput {
    pub input: ControlInput,
    pub status: FilterStatus,
    /// `h(pose, t)`.
    pub h_now: f64,
    /// `h(pose + input * dt, t + dt)`.
    pub h_next: f64,
}

// slack on the exact sampled constraint, absorbs rounding in h
const EXACT_TOL: f64 = 1e-12;

/// Field value at a pose, with positions clamped onto the grid. Off-grid
/// poses see the (occupied) border value.
pub(crate) fn sample_clamped(field: &LiftedSafetyField, p: [f64; 3], t: f64) -> Result<crate::field::FieldSample> {
    let (lo, hi) = field.spec.grid.extent();
    let q = [p[0].clamp(lo[0], hi[0]), p[1].clamp(lo[1], hi[1])];
    field.sample_full(q, p[2], t)
}

/// Filters `u_nom` through the sampled decay condition.
pub fn dcbf_filter(
    state: &RobotState,
    u_nom: &ControlInput,
    field: &LiftedSafetyField,
    t: f64,
    rho: f64,
    dt: f64,
    limits: &InputLimits,
) -> Result<FilterOutput> {
    if !(rho > 0.0 && rho < 1.0) {
        return Err(Error::InvalidParams(format!("rho must lie in (0, 1), got {rho}")));
    }
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::InvalidParams(format!("dt must be positive, got {dt}")));
    }
    limits.validate()?;
    let h_now = field.sample(state.position(), state.theta, t)?;
    // fails early with OutOfDomain when t + dt leaves the slice range
    field.sample(state.position(), state.theta, t + dt)?;
    let target = rho * h_now;
    let next = |u: &ControlInput| -> Result<f64> {
        let p = state.as_array();
        let a = u.as_array();
        Ok(sample_clamped(field, [p[0] + a[0] * dt, p[1] + a[1] * dt, p[2] + a[2] * dt], t + dt)?.value)
    };
    let holds = |h: f64| h >= target - EXACT_TOL * (1.0 + target.abs());

    let u_box = limits.clamp(u_nom);
    let h_box = next(&u_box)?;
    if holds(h_box) {
        return Ok(FilterOutput {
            input: u_box,
            status: FilterStatus::Unmodified,
            h_now,
            h_next: h_box,
        });
    }

    // linearize at the predicted pose, solve, relinearize once at the result
    let mut u_lin = u_box;
    let mut candidate = None;
    for _ in 0..2 {
        match project(state, &u_lin, u_nom, field, t, dt, target, limits)? {
            Some(u) => {
                candidate = Some(u);
                u_lin = u;
            }
            None => break,
        }
    }
    let candidate = match candidate {
        Some(u) => u,
        None => steepest_within_box(state, &u_lin, field, t, dt, limits)?,
    };

    let h_cand = next(&candidate)?;
    if holds(h_cand) {
        return Ok(FilterOutput {
            input: candidate,
            status: FilterStatus::Filtered,
            h_now,
            h_next: h_cand,
        });
    }
    // linearization gap: shrink towards rest while the exact condition holds
    let h_rest = next(&ControlInput::ZERO)?;
    if holds(h_rest) {
        let (mut lo, mut hi) = (0.0, 1.0);
        for _ in 0..60 {
            let mid = 0.5 * (lo + hi);
            if holds(next(&candidate.scaled(mid))?) {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let u = candidate.scaled(lo);
        return Ok(FilterOutput {
            input: u,
            status: FilterStatus::Filtered,
            h_now,
            h_next: next(&u)?,
        });
    }
    // nothing in reach satisfies the condition: least violation among the
    // candidates examined
    let options = [(candidate, h_cand), (ControlInput::ZERO, h_rest), (u_box, h_box)];
    let steep = steepest_within_box(state, &candidate, field, t, dt, limits)?;
    let best = options
        .into_iter()
        .chain(std::iter::once((steep, next(&steep)?)))
        .max_by(|a, b| a.1.total_cmp(&b.1))
        .expect("non-empty");
    Ok(FilterOutput {
        input: best.0,
        status: FilterStatus::InfeasibleWithinLimits,
        h_now,
        h_next: best.1,
    })
}

/// Minimizes `|u - u_nom|^2` under the constraint linearized at `u_lin`.
/// `None` when the linearized problem has no solution inside the box.
#[allow(clippy::too_many_arguments)]
fn project(
    state: &RobotState,
    u_lin: &ControlInput,
    u_nom: &ControlInput,
    field: &LiftedSafetyField,
    t: f64,
    dt: f64,
    target: f64,
    limits: &InputLimits,
) -> Result<Option<ControlInput>> {
    let p = state.as_array();
    let ul = u_lin.as_array();
    let s = sample_clamped(field, [p[0] + ul[0] * dt, p[1] + ul[1] * dt, p[2] + ul[2] * dt], t + dt)?;
    let grad = [s.dx * dt, s.dy * dt, s.dtheta * dt];
    // h(u_lin) + grad . (u - u_lin) >= target
    let bound = target - s.value + grad.iter().zip(ul).map(|(g, u)| g * u).sum::<f64>();
    let h = DMatrix::identity(3, 3) * 2.0;
    let g = DVector::from_iterator(3, u_nom.as_array().iter().map(|v| -2.0 * v));
    let mut a = DMatrix::zeros(4, 3);
    let mut lower = DVector::zeros(4);
    let mut upper = DVector::zeros(4);
    for i in 0..3 {
        a[(0, i)] = grad[i];
        a[(i + 1, i)] = 1.0;
        lower[i + 1] = limits.lower[i];
        upper[i + 1] = limits.upper[i];
    }
    lower[0] = bound;
    upper[0] = f64::INFINITY;
    match solve_qp(&h, &g, &a, &lower, &upper, &QpSettings::default()) {
        Ok(sol) => Ok(Some(limits.clamp(&ControlInput::new(sol.x[0], sol.x[1], sol.x[2])))),
        Err(Error::InfeasibleProblem(_)) => Ok(None),
        Err(e) => Err(e),
    }
}

/// Corner of the box that maximizes the linearized next value.
fn steepest_within_box(
    state: &RobotState,
    u_lin: &ControlInput,
    field: &LiftedSafetyField,
    t: f64,
    dt: f64,
    limits: &InputLimits,
) -> Result<ControlInput> {
    let p = state.as_array();
    let ul = u_lin.as_array();
    let s = sample_clamped(field, [p[0] + ul[0] * dt, p[1] + ul[1] * dt, p[2] + ul[2] * dt], t + dt)?;
    let g = [s.dx, s.dy, s.dtheta];
    Ok(ControlInput::from_array([0, 1, 2].map(|i| {
        if g[i] > 0.0 {
            limits.upper[i]
        } else if g[i] < 0.0 {
            limits.lower[i]
        } else {
            0.0f64.clamp(limits.lower[i], limits.upper[i])
        }
    })))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{GridSpec, LiftedSpec};

    fn wall_field() -> LiftedSafetyField {
        let g = GridSpec::new(41, 41, 0.05, [-1.0, -1.0]).unwrap();
        let s = LiftedSpec::new(g, 4, 2, 0.5).unwrap();
        LiftedSafetyField::from_fn(s, 0.0, |p, _, _| p[0]).unwrap()
    }

    fn bowl_field() -> LiftedSafetyField {
        let g = GridSpec::new(41, 41, 0.05, [-1.0, -1.0]).unwrap();
        let s = LiftedSpec::new(g, 8, 1, 0.5).unwrap();
        LiftedSafetyField::from_fn(s, 0.0, |p, th, _| {
            1.0 - p[0] * p[0] - 2.0 * p[1] * p[1] + 0.05 * th.cos()
        })
        .unwrap()
    }

    #[test]
    fn inactive_constraint_returns_nominal() {
        let f = bowl_field();
        let u = ControlInput::new(0.1, -0.05, 0.2);
        let out = dcbf_filter(
            &RobotState::new(0.0, 0.0, 0.3),
            &u,
            &f,
            0.0,
            0.8,
            0.1,
            &InputLimits::symmetric(1.0, 1.0),
        )
        .unwrap();
        assert_eq!(out.input, u);
        assert_eq!(out.status, FilterStatus::Unmodified);
    }

    #[test]
    fn planar_wall_closed_form() {
        let f = wall_field();
        let out = dcbf_filter(
            &RobotState::new(0.1, 0.0, 0.0),
            &ControlInput::new(-1.0, 0.0, 0.0),
            &f,
            0.0,
            0.5,
            0.1,
            &InputLimits::symmetric(2.0, 1.0),
        )
        .unwrap();
        assert!((out.input.v_x + 0.5).abs() < 1e-9, "{:?}", out.input);
        assert!(out.input.v_y.abs() < 1e-9 && out.input.omega.abs() < 1e-9);
        assert_eq!(out.status, FilterStatus::Filtered);
    }

    #[test]
    fn rest_is_safe_in_static_fields() {
        let f = bowl_field();
        let out = dcbf_filter(
            &RobotState::new(0.5, 0.4, 1.0),
            &ControlInput::ZERO,
            &f,
            0.0,
            0.8,
            0.1,
            &InputLimits::symmetric(1.0, 1.0),
        )
        .unwrap();
        assert_eq!(out.input, ControlInput::ZERO);
    }

    #[test]
    fn exact_constraint_holds_after_filtering() {
        let f = bowl_field();
        let limits = InputLimits::symmetric(1.0, 1.0);
        for k in 0..50 {
            let a = k as f64 * 0.37;
            let state = RobotState::new(0.6 * a.cos(), 0.45 * a.sin(), a);
            let u = ControlInput::new(a.cos(), a.sin(), -0.5);
            let out = dcbf_filter(&state, &u, &f, 0.0, 0.8, 0.1, &limits).unwrap();
            assert_ne!(out.status, FilterStatus::InfeasibleWithinLimits);
            assert!(out.h_next >= 0.8 * out.h_now - 1e-9);
            assert!(limits.contains(&out.input, 1e-12));
        }
    }

    #[test]
    fn infeasible_within_limits_is_flagged() {
        // the wall recedes faster than the robot can follow
        let g = GridSpec::new(41, 41, 0.05, [-1.0, -1.0]).unwrap();
        let s = LiftedSpec::new(g, 1, 2, 0.5).unwrap();
        let f = LiftedSafetyField::from_fn(s, 0.0, |p, _, t| p[0] - 5.0 * t + 0.5).unwrap();
        let out = dcbf_filter(
            &RobotState::new(0.0, 0.0, 0.0),
            &ControlInput::ZERO,
            &f,
            0.0,
            0.5,
            0.1,
            &InputLimits::symmetric(0.5, 1.0),
        )
        .unwrap();
        assert_eq!(out.status, FilterStatus::InfeasibleWithinLimits);
        assert!((out.input.v_x - 0.5).abs() < 1e-9);
    }

    #[test]
    fn out_of_domain() {
        let f = wall_field();
        let limits = InputLimits::symmetric(1.0, 1.0);
        assert!(matches!(
            dcbf_filter(
                &RobotState::new(5.0, 0.0, 0.0),
                &ControlInput::ZERO,
                &f,
                0.0,
                0.5,
                0.1,
                &limits
            ),
            Err(Error::OutOfDomain(_))
        ));
        assert!(matches!(
            dcbf_filter(
                &RobotState::new(0.0, 0.0, 0.0),
                &ControlInput::ZERO,
                &f,
                0.45,
                0.5,
                0.1,
                &limits
            ),
            Err(Error::OutOfDomain(_))
        ));
    }
}
