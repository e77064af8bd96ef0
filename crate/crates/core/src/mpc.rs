//! Predictive safety filter: finite-horizon tracking MPC over the single
//! integrator with a soft decay constraint `h(xi_{i+1}) >= rho h(xi_i)` at
//! every knot, solved by sequential quadratic programming.
//!
//! States are eliminated (`xi_i = chi_k + dt * sum_{j<i} nu_j`), so each SQP
//! iterate is a dense QP in `3N` inputs plus `N` slacks. The slack penalty is
//! linear plus quadratic; the linear part makes the softening exact, so slack
//! stays at zero whenever the linearized constraints are satisfiable.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::LiftedSafetyField;
use crate::filter::sample_clamped;
use crate::grid::angle_diff;
use crate::qp::{solve_qp, QpSettings, QpStatus};
use crate::robot::{ControlInput, InputLimits, RobotState};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MpcParams {
    pub horizon: usize,
    /// Seconds per knot.
    pub dt: f64,
    pub rho: f64,
    /// State-error weight, row-major 3x3, PSD.
    pub q: [[f64; 3]; 3],
    /// Input weight, row-major 3x3, PD.
    pub r: [[f64; 3]; 3],
    pub limits: InputLimits,
    pub sqp_iters: usize,
    pub slack_weight: f64,
    /// Largest change of any input component per SQP iteration.
    pub trust_step: f64,
}

impl Default for MpcParams {
    fn default() -> Self {
        MpcParams {
            horizon: 10,
            dt: 0.05,
            rho: 0.8,
            q: diag([10.0, 10.0, 1.0]),
            r: diag([1.0, 1.0, 0.5]),
            limits: InputLimits::symmetric(1.0, 1.5),
            sqp_iters: 3,
            slack_weight: 1e4,
            trust_step: 0.5,
        }
    }
}

pub fn diag(d: [f64; 3]) -> [[f64; 3]; 3] {
    [[d[0], 0.0, 0.0], [0.0, d[1], 0.0], [0.0, 0.0, d[2]]]
}

fn mat3(m: &[[f64; 3]; 3]) -> DMatrix<f64> {
    DMatrix::from_fn(3, 3, |i, j| m[i][j])
}

impl MpcParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParams(m));
        if self.horizon == 0 {
            return bad("horizon must be at least 1".into());
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return bad(format!("dt must be positive, got {}", self.dt));
        }
        if !(self.rho > 0.0 && self.rho < 1.0) {
            return bad(format!("rho must lie in (0, 1), got {}", self.rho));
        }
        if !(self.slack_weight > 0.0) || !(self.trust_step > 0.0) {
            return bad("slack_weight and trust_step must be positive".into());
        }
        if self.sqp_iters == 0 {
            return bad("sqp_iters must be at least 1".into());
        }
        self.limits.validate()?;
        let q = mat3(&self.q);
        let r = mat3(&self.r);
        if (&q - q.transpose()).amax() > 1e-12 || (&r - r.transpose()).amax() > 1e-12 {
            return bad("Q and R must be symmetric".into());
        }
        if q.symmetric_eigenvalues().min() < -1e-12 {
            return bad("Q must be positive semidefinite".into());
        }
        if r.symmetric_eigenvalues().min() <= 0.0 {
            return bad("R must be positive definite".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MpcStatus {
    OptimalTolerance,
    MaxIters,
    InfeasibleSlacked,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MpcSolution {
    /// `xi_0 .. xi_N`; `xi_0` is the query state.
    pub states: Vec<RobotState>,
    /// `nu_0 .. nu_{N-1}`.
    pub inputs: Vec<ControlInput>,
    /// Tracking cost of the plan (slack penalty excluded).
    pub cost: f64,
    pub slack_total: f64,
    /// Field value at each knot, `h(xi_i, t + i dt)`.
    pub h_knots: Vec<f64>,
    pub sqp_iterations: usize,
    pub status: MpcStatus,
}

impl MpcSolution {
    /// The plan advanced by one knot, last input repeated: a warm start for
    /// the next control step.
    pub fn shifted_inputs(&self) -> Vec<ControlInput> {
        let mut v: Vec<_> = self.inputs.iter().skip(1).copied().collect();
        v.push(*self.inputs.last().expect("horizon >= 1"));
        v
    }
}

const CONVERGED_STEP: f64 = 1e-5;
const SLACK_ZERO: f64 = 1e-9;

/// Rolls a plan out from `start`. Headings are left unwrapped so that the
/// dynamics hold exactly; wrap with [`RobotState::new`] for reporting.
pub fn rollout(start: &RobotState, inputs: &[ControlInput], dt: f64) -> Vec<[f64; 3]> {
    let mut xi = start.as_array();
    let mut out = Vec::with_capacity(inputs.len() + 1);
    out.push(xi);
    for u in inputs {
        let a = u.as_array();
        for d in 0..3 {
            xi[d] += a[d] * dt;
        }
        out.push(xi);
    }
    out
}

/// Tracking cost with wrapped heading error; knots `1..=N` and all inputs.
pub fn plan_cost(goal: &RobotState, states: &[[f64; 3]], inputs: &[ControlInput], params: &MpcParams) -> f64 {
    let mut cost = 0.0;
    for xi in &states[1..] {
        let e = [goal.x - xi[0], goal.y - xi[1], angle_diff(goal.theta, xi[2])];
        cost += quad(&params.q, e);
    }
    for u in inputs {
        cost += quad(&params.r, u.as_array());
    }
    cost
}

fn quad(m: &[[f64; 3]; 3], v: [f64; 3]) -> f64 {
    let mut s = 0.0;
    for i in 0..3 {
        for j in 0..3 {
            s += v[i] * m[i][j] * v[j];
        }
    }
    s
}

/// Plans `N` inputs from `state` towards `goal`, keeping the decay condition
/// along the horizon. `initial` seeds the SQP (e.g. a shifted previous plan);
/// zeros otherwise.
pub fn solve_mpc(
    state: &RobotState,
    goal: &RobotState,
    field: &LiftedSafetyField,
    t: f64,
    params: &MpcParams,
    initial: Option<&[ControlInput]>,
) -> Result<MpcSolution> {
    params.validate()?;
    let n_k = params.horizon;
    let dt = params.dt;
    if !field.spec.grid.contains(state.position()) {
        return Err(Error::OutOfDomain(format!(
            "state ({:.4}, {:.4}) outside field grid",
            state.x, state.y
        )));
    }
    if field.spec.n_t > 1 {
        let eps = 1e-9 * field.spec.dt_field;
        if t < field.t0 - eps || t + n_k as f64 * dt > field.t_end() + eps {
            return Err(Error::OutOfDomain(format!(
                "horizon [{t:.4}, {:.4}] exceeds field time range [{:.4}, {:.4}]",
                t + n_k as f64 * dt,
                field.t0,
                field.t_end()
            )));
        }
    }

    let mut plan: Vec<ControlInput> = match initial {
        Some(p) if p.len() == n_k => p.iter().map(|u| params.limits.clamp(u)).collect(),
        _ => vec![ControlInput::ZERO; n_k],
    };
    let nv = 3 * n_k;
    let nz = nv + n_k;
    let q = mat3(&params.q);
    let r = mat3(&params.r);

    // constant part of the Hessian: dt^2 sum_i S_i' Q S_i + blockdiag(R), doubled
    let mut h_const = DMatrix::zeros(nz, nz);
    for a in 0..n_k {
        for b in 0..n_k {
            // knots i >= max(a, b) + 1 see both inputs
            let count = n_k - a.max(b);
            let blk = &q * (2.0 * dt * dt * count as f64);
            let mut v = h_const.view_mut((3 * a, 3 * b), (3, 3));
            v += &blk;
        }
        let mut v = h_const.view_mut((3 * a, 3 * a), (3, 3));
        v += &r * 2.0;
    }
    for i in 0..n_k {
        h_const[(nv + i, nv + i)] = 2.0 * params.slack_weight;
    }

    let mut qp_warm: Option<(DVector<f64>, DVector<f64>)> = None;
    let mut slack = vec![0.0; n_k];
    let mut iterations = 0;
    let mut converged = false;
    let mut solver_trouble = false;
    for _ in 0..params.sqp_iters {
        iterations += 1;
        let nominal = rollout(state, &plan, dt);
        let samples = nominal
            .iter()
            .enumerate()
            .map(|(i, xi)| sample_clamped(field, *xi, t + i as f64 * dt))
            .collect::<Result<Vec<_>>>()?;

        // linear cost term: -2 dt sum_i S_i' Q c_i, c_i = goal_i - chi_k
        let mut g = DVector::zeros(nz);
        for i in 1..=n_k {
            let xi = nominal[i];
            let goal_i = [goal.x, goal.y, xi[2] + angle_diff(goal.theta, xi[2])];
            let c = DVector::from_iterator(3, (0..3).map(|d| goal_i[d] - nominal[0][d]));
            let qc = &q * c * (-2.0 * dt);
            for a in 0..i {
                for d in 0..3 {
                    g[3 * a + d] += qc[d];
                }
            }
        }
        for i in 0..n_k {
            g[nv + i] = params.slack_weight;
        }

        // rows: N decay rows, 3N input boxes, N slack bounds
        let m = n_k + nv + n_k;
        let mut a = DMatrix::zeros(m, nz);
        let mut lower = DVector::zeros(m);
        let mut upper = DVector::from_element(m, f64::INFINITY);
        let nu_bar: Vec<f64> = plan.iter().flat_map(|u| u.as_array()).collect();
        for i in 0..n_k {
            // coefficient of nu_a in h(xi_{i+1}) - rho h(xi_i)
            let g_next = [samples[i + 1].dx, samples[i + 1].dy, samples[i + 1].dtheta];
            let g_cur = [samples[i].dx, samples[i].dy, samples[i].dtheta];
            let mut lin = 0.0;
            for blk in 0..=i {
                for d in 0..3 {
                    let mut coef = dt * g_next[d];
                    if blk < i {
                        coef -= params.rho * dt * g_cur[d];
                    }
                    a[(i, 3 * blk + d)] = coef;
                    lin += coef * nu_bar[3 * blk + d];
                }
            }
            a[(i, nv + i)] = 1.0;
            lower[i] = params.rho * samples[i].value - samples[i + 1].value + lin;
        }
        for j in 0..nv {
            let row = n_k + j;
            let d = j % 3;
            a[(row, j)] = 1.0;
            lower[row] = params.limits.lower[d].max(nu_bar[j] - params.trust_step);
            upper[row] = params.limits.upper[d].min(nu_bar[j] + params.trust_step);
        }
        for i in 0..n_k {
            let row = n_k + nv + i;
            a[(row, nv + i)] = 1.0;
            lower[row] = 0.0;
        }

        let settings = QpSettings {
            warm_start: qp_warm.take(),
            ..QpSettings::default()
        };
        let sol = match solve_qp(&h_const, &g, &a, &lower, &upper, &settings) {
            Ok(s) => s,
            Err(_) => {
                solver_trouble = true;
                break;
            }
        };
        if sol.status != QpStatus::Solved {
            solver_trouble = true;
        }
        let new_plan: Vec<ControlInput> = (0..n_k)
            .map(|k| {
                params
                    .limits
                    .clamp(&ControlInput::new(sol.x[3 * k], sol.x[3 * k + 1], sol.x[3 * k + 2]))
            })
            .collect();
        let step = new_plan
            .iter()
            .zip(&plan)
            .flat_map(|(u, v)| {
                let (a, b) = (u.as_array(), v.as_array());
                [0, 1, 2].map(|d| (a[d] - b[d]).abs())
            })
            .fold(0.0, f64::max);
        // slack below solver precision is reported as zero
        slack = (0..n_k)
            .map(|i| if sol.x[nv + i] > SLACK_ZERO { sol.x[nv + i] } else { 0.0 })
            .collect();
        plan = new_plan;
        qp_warm = Some((sol.x, sol.y));
        if step < CONVERGED_STEP {
            converged = true;
            break;
        }
    }

    let states_raw = rollout(state, &plan, dt);
    let h_knots = states_raw
        .iter()
        .enumerate()
        .map(|(i, xi)| sample_clamped(field, *xi, t + i as f64 * dt).map(|s| s.value))
        .collect::<Result<Vec<_>>>()?;
    let slack_total: f64 = slack.iter().sum();
    let status = if slack_total > SLACK_ZERO {
        MpcStatus::InfeasibleSlacked
    } else if converged && !solver_trouble {
        MpcStatus::OptimalTolerance
    } else {
        MpcStatus::MaxIters
    };
    Ok(MpcSolution {
        cost: plan_cost(goal, &states_raw, &plan, params),
        states: states_raw.iter().map(|s| RobotState::new(s[0], s[1], s[2])).collect(),
        inputs: plan,
        slack_total,
        h_knots,
        sqp_iterations: iterations,
        status,
    })
}
