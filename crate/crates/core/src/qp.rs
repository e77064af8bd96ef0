//! Small dense convex QP solver:
//!
//! ```text
//! minimize    1/2 u'Hu + g'u
//! subject to  lower <= A u <= upper
//! ```
//!
//! Operator splitting (ADMM) on a Ruiz-equilibrated copy of the problem,
//! followed by a polish step that guesses the active set and solves the
//! reduced KKT system directly. Infinite bounds are allowed.
//!
//! Dual sign convention: at a solution `H u + g = A' y`, with `y_i >= 0` when
//! row `i` sits on its lower bound and `y_i <= 0` on its upper bound.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QpStatus {
    Solved,
    /// Iteration budget exhausted; the best iterate is returned.
    MaxIters,
}

#[derive(Debug, Clone)]
pub struct QpSolution {
    pub x: DVector<f64>,
    pub y: DVector<f64>,
    pub status: QpStatus,
    pub objective: f64,
    pub kkt_residual: f64,
    pub iterations: usize,
}

#[derive(Debug, Clone)]
pub struct QpSettings {
    pub max_iters: usize,
    /// Target KKT residual (max norm) for `Solved`.
    pub kkt_tol: f64,
    pub rho: f64,
    pub sigma: f64,
    pub alpha: f64,
    /// Primal and dual starting points (dual in the sign convention above).
    pub warm_start: Option<(DVector<f64>, DVector<f64>)>,
}

impl Default for QpSettings {
    fn default() -> Self {
        QpSettings {
            max_iters: 4000,
            kkt_tol: 1e-6,
            rho: 0.1,
            sigma: 1e-6,
            alpha: 1.6,
            warm_start: None,
        }
    }
}

const CHECK_EVERY: usize = 10;
const ADAPT_EVERY: usize = 50;
const RHO_MIN: f64 = 1e-6;
const RHO_MAX: f64 = 1e6;
const RHO_EQ_SCALE: f64 = 1e3;
const INFEAS_EPS: f64 = 1e-6;
const POLISH_DELTA: f64 = 1e-7;
/// Scaled residual below which active-set guesses are worth polishing.
const POLISH_GATE: f64 = 1e-3;

/// KKT residual of `(x, y)` in the max norm: stationarity, distance of `Ax`
/// from the bounds, and complementarity with correct dual signs.
pub fn kkt_residual(
    h: &DMatrix<f64>,
    g: &DVector<f64>,
    a: &DMatrix<f64>,
    lower: &DVector<f64>,
    upper: &DVector<f64>,
    x: &DVector<f64>,
    y: &DVector<f64>,
) -> f64 {
    let stat = (h * x + g - a.transpose() * y).amax();
    let ax = a * x;
    let mut worst = stat;
    for i in 0..ax.len() {
        let v = ax[i];
        let primal = (lower[i] - v).max(v - upper[i]).max(0.0);
        let comp = if y[i] > 0.0 {
            if lower[i].is_finite() {
                y[i] * (v - lower[i]).abs()
            } else {
                y[i]
            }
        } else if y[i] < 0.0 {
            if upper[i].is_finite() {
                -y[i] * (upper[i] - v).abs()
            } else {
                -y[i]
            }
        } else {
            0.0
        };
        worst = worst.max(primal).max(comp);
    }
    worst
}

fn objective(h: &DMatrix<f64>, g: &DVector<f64>, x: &DVector<f64>) -> f64 {
    0.5 * x.dot(&(h * x)) + g.dot(x)
}

fn validate(
    h: &DMatrix<f64>,
    g: &DVector<f64>,
    a: &DMatrix<f64>,
    lower: &DVector<f64>,
    upper: &DVector<f64>,
) -> Result<()> {
    let n = g.len();
    let m = lower.len();
    if h.nrows() != n || h.ncols() != n {
        return Err(Error::InvalidProblem(format!(
            "H is {}x{}, expected {n}x{n}",
            h.nrows(),
            h.ncols()
        )));
    }
    if a.nrows() != m || a.ncols() != n || upper.len() != m {
        return Err(Error::InvalidProblem(format!(
            "A is {}x{} with {} lower and {} upper bounds, expected {m}x{n}",
            a.nrows(),
            a.ncols(),
            m,
            upper.len()
        )));
    }
    if h.iter().chain(g.iter()).chain(a.iter()).any(|v| !v.is_finite()) {
        return Err(Error::InvalidProblem("non-finite entries in H, g or A".into()));
    }
    if lower.iter().chain(upper.iter()).any(|v| v.is_nan()) {
        return Err(Error::InvalidProblem("NaN bound".into()));
    }
    let scale = h.amax().max(1.0);
    for i in 0..n {
        for j in 0..i {
            if (h[(i, j)] - h[(j, i)]).abs() > 1e-10 * scale {
                return Err(Error::InvalidProblem(format!("H is not symmetric at ({i}, {j})")));
            }
        }
    }
    if n > 0 {
        let sym = (h + h.transpose()) * 0.5;
        let min_eig = sym.symmetric_eigenvalues().min();
        if min_eig < -1e-9 * scale {
            return Err(Error::InvalidProblem(format!(
                "H is not positive semidefinite (eigenvalue {min_eig:e})"
            )));
        }
    }
    for i in 0..m {
        if lower[i] > upper[i] {
            return Err(Error::InfeasibleProblem(format!(
                "row {i}: lower bound {} exceeds upper bound {}",
                lower[i], upper[i]
            )));
        }
    }
    Ok(())
}

struct Scaled {
    h: DMatrix<f64>,
    g: DVector<f64>,
    a: DMatrix<f64>,
    l: DVector<f64>,
    u: DVector<f64>,
    d: DVector<f64>,
    e: DVector<f64>,
    c: f64,
}

/// Modified Ruiz equilibration of the KKT matrix `[H A'; A 0]` plus cost scaling.
fn equilibrate(
    h: &DMatrix<f64>,
    g: &DVector<f64>,
    a: &DMatrix<f64>,
    lower: &DVector<f64>,
    upper: &DVector<f64>,
) -> Scaled {
    let n = g.len();
    let m = lower.len();
    let mut hs = h.clone();
    let mut gs = g.clone();
    let mut as_ = a.clone();
    let mut d = DVector::from_element(n, 1.0);
    let mut e = DVector::from_element(m, 1.0);
    let mut c = 1.0;
    let clamp = |v: f64| if v < 1e-4 { 1.0 } else { v.min(1e4) };
    for _ in 0..10 {
        let mut dd = DVector::zeros(n);
        for j in 0..n {
            let col = hs.column(j).amax().max(if m > 0 { as_.column(j).amax() } else { 0.0 });
            dd[j] = 1.0 / clamp(col).sqrt();
        }
        let mut de = DVector::zeros(m);
        for i in 0..m {
            de[i] = 1.0 / clamp(as_.row(i).amax()).sqrt();
        }
        for j in 0..n {
            for i in 0..n {
                hs[(i, j)] *= dd[i] * dd[j];
            }
            for i in 0..m {
                as_[(i, j)] *= de[i] * dd[j];
            }
            gs[j] *= dd[j];
        }
        d.component_mul_assign(&dd);
        e.component_mul_assign(&de);
        // cost scaling
        let mean_col = if n > 0 {
            (0..n).map(|j| hs.column(j).amax()).sum::<f64>() / n as f64
        } else {
            0.0
        };
        let gamma = 1.0 / clamp(mean_col.max(gs.amax()));
        hs *= gamma;
        gs *= gamma;
        c *= gamma;
    }
    let l = lower.component_mul(&e);
    let u = upper.component_mul(&e);
    Scaled {
        h: hs,
        g: gs,
        a: as_,
        l,
        u,
        d,
        e,
        c,
    }
}

/// Solves the QP. See the module documentation for conventions.
pub fn solve_qp(
    h: &DMatrix<f64>,
    g: &DVector<f64>,
    a: &DMatrix<f64>,
    lower: &DVector<f64>,
    upper: &DVector<f64>,
    settings: &QpSettings,
) -> Result<QpSolution> {
    validate(h, g, a, lower, upper)?;
    let n = g.len();
    let m = lower.len();
    let s = equilibrate(h, g, a, lower, upper);
    let sigma = settings.sigma;
    let alpha = settings.alpha;

    // iterates in scaled space; y uses the operator-splitting sign (H x + g + A'y = 0)
    let (mut x, mut y) = match &settings.warm_start {
        Some((wx, wy)) if wx.len() == n && wy.len() == m => (wx.component_div(&s.d), -wy.component_div(&s.e) * s.c),
        _ => (DVector::zeros(n), DVector::zeros(m)),
    };
    let mut z = (&s.a * &x).zip_zip_map(&s.l, &s.u, |v, lo, hi| v.clamp(lo, hi));

    let row_kind: Vec<f64> = (0..m)
        .map(|i| {
            if lower[i] == f64::NEG_INFINITY && upper[i] == f64::INFINITY {
                0.0
            } else if lower[i].is_finite() && upper[i] - lower[i] <= 1e-12 * (1.0 + lower[i].abs()) {
                RHO_EQ_SCALE
            } else {
                1.0
            }
        })
        .collect();
    let mut rho = settings.rho;
    let rho_vec = |rho: f64| -> DVector<f64> {
        DVector::from_iterator(
            m,
            row_kind.iter().map(|k| {
                if *k == 0.0 {
                    RHO_MIN
                } else {
                    (rho * k).clamp(RHO_MIN, RHO_MAX)
                }
            }),
        )
    };
    let factor = |rv: &DVector<f64>| {
        let mut k = s.h.clone();
        for i in 0..n {
            k[(i, i)] += sigma;
        }
        let at = s.a.transpose();
        k += &at * DMatrix::from_diagonal(rv) * &s.a;
        k.cholesky()
    };
    let mut rv = rho_vec(rho);
    let mut chol =
        factor(&rv).ok_or_else(|| Error::InvalidProblem("splitting system is not positive definite".into()))?;

    let unscale_x = |x: &DVector<f64>| x.component_mul(&s.d);
    let unscale_y = |y: &DVector<f64>| -y.component_mul(&s.e) / s.c;

    let mut best: Option<(DVector<f64>, DVector<f64>, f64)> = None;
    let consider = |xu: DVector<f64>, yu: DVector<f64>, best: &mut Option<(DVector<f64>, DVector<f64>, f64)>| {
        let r = kkt_residual(h, g, a, lower, upper, &xu, &yu);
        if best.as_ref().is_none_or(|b| r < b.2) {
            *best = Some((xu, yu, r));
        }
        r
    };
    let mut eps = 1e-7;
    let mut tried: Option<Vec<(usize, f64)>> = None;
    let mut iterations = 0;
    let mut x_prev = x.clone();
    let mut y_prev = y.clone();
    while iterations < settings.max_iters {
        iterations += 1;
        x_prev.copy_from(&x);
        y_prev.copy_from(&y);
        let rhs = &x * sigma - &s.g + s.a.transpose() * (rv.component_mul(&z) - &y);
        let xt = chol.solve(&rhs);
        let zt = &s.a * &xt;
        x = &xt * alpha + &x * (1.0 - alpha);
        let zh = &zt * alpha + &z * (1.0 - alpha);
        let z_new = (&zh + y.component_div(&rv)).zip_zip_map(&s.l, &s.u, |v, lo, hi| v.clamp(lo, hi));
        y += rv.component_mul(&(&zh - &z_new));
        z = z_new;

        if iterations % CHECK_EVERY != 0 && iterations != settings.max_iters {
            continue;
        }
        check_infeasibility(&s, &x, &x_prev, &y, &y_prev)?;
        let ax = &s.a * &x;
        let prim = (&ax - &z).component_div(&s.e).amax();
        let hx = &s.h * &x;
        let aty = s.a.transpose() * &y;
        let dual = (&hx + &s.g + &aty).component_div(&s.d).amax() / s.c;
        // ADMM can circle a degenerate optimum for a long time; an exact solve
        // on the guessed active set finishes it once the guess is right.
        if prim.max(dual) <= POLISH_GATE {
            let guess = active_set(lower, upper, &unscale_y(&y), &z.component_div(&s.e));
            if tried.as_ref() != Some(&guess) {
                if let Some((px, py)) = polish(h, g, a, &guess) {
                    if consider(px, py, &mut best) <= settings.kkt_tol {
                        break;
                    }
                }
                tried = Some(guess);
            }
        }
        if prim.max(dual) <= eps {
            let xu = unscale_x(&x);
            let yu = unscale_y(&y);
            let r_admm = consider(xu.clone(), yu.clone(), &mut best);
            if r_admm <= settings.kkt_tol * 1e-3 {
                break;
            }
            let guess = active_set(lower, upper, &yu, &z.component_div(&s.e));
            if let Some((px, py)) = polish(h, g, a, &guess) {
                let r = consider(px, py, &mut best);
                if r <= settings.kkt_tol {
                    break;
                }
            }
            if r_admm <= settings.kkt_tol && eps <= 1e-10 {
                break;
            }
            eps = (eps * 0.01).max(1e-13);
        }
        if iterations % ADAPT_EVERY == 0 && m > 0 {
            // in the equilibrated space, where rho acts
            let prim_n = (&ax - &z).amax() / ax.amax().max(z.amax()).max(1e-30);
            let dual_n = (&hx + &s.g + &aty).amax() / hx.amax().max(aty.amax()).max(s.g.amax()).max(1e-30);
            let ratio = (prim_n / dual_n.max(1e-30)).sqrt();
            let new_rho = (rho * ratio).clamp(RHO_MIN, RHO_MAX);
            if new_rho > 5.0 * rho || new_rho < 0.2 * rho {
                rho = new_rho;
                let new_rv = rho_vec(rho);
                if let Some(c) = factor(&new_rv) {
                    // keep the scaled dual consistent: y is independent of rho
                    rv = new_rv;
                    chol = c;
                }
            }
        }
    }
    let final_x = unscale_x(&x);
    let final_y = unscale_y(&y);
    consider(final_x, final_y, &mut best);
    let (bx, by, r) = best.expect("at least one candidate");
    Ok(QpSolution {
        objective: objective(h, g, &bx),
        status: if r <= settings.kkt_tol {
            QpStatus::Solved
        } else {
            QpStatus::MaxIters
        },
        x: bx,
        y: by,
        kkt_residual: r,
        iterations,
    })
}

fn check_infeasibility(
    s: &Scaled,
    x: &DVector<f64>,
    x_prev: &DVector<f64>,
    y: &DVector<f64>,
    y_prev: &DVector<f64>,
) -> Result<()> {
    let m = y.len();
    if m > 0 {
        let dy = y - y_prev;
        let dy_u = dy.component_mul(&s.e);
        let norm = dy_u.amax();
        if norm > 1e-12 {
            let atdy = (s.a.transpose() * &dy).component_div(&s.d).amax();
            let mut support = 0.0;
            let mut bounded = true;
            for i in 0..m {
                let v = dy[i];
                if v > INFEAS_EPS * norm {
                    if s.u[i].is_finite() {
                        support += s.u[i] * v;
                    } else {
                        bounded = false;
                    }
                } else if v < -INFEAS_EPS * norm {
                    if s.l[i].is_finite() {
                        support += s.l[i] * v;
                    } else {
                        bounded = false;
                    }
                }
            }
            if bounded && atdy <= INFEAS_EPS * norm && support < -INFEAS_EPS * norm {
                return Err(Error::InfeasibleProblem("constraints admit no feasible point".into()));
            }
        }
    }
    let dx = x - x_prev;
    let norm = dx.component_mul(&s.d).amax();
    if norm > 1e-12 {
        let hdx = (&s.h * &dx).component_div(&s.d).amax() / s.c;
        let gdx = s.g.dot(&dx) / s.c;
        let adx = (&s.a * &dx).component_div(&s.e);
        let recession = (0..adx.len()).all(|i| {
            (s.u[i].is_infinite() || adx[i] <= INFEAS_EPS * norm)
                && (s.l[i].is_infinite() || adx[i] >= -INFEAS_EPS * norm)
        });
        if recession && hdx <= INFEAS_EPS * norm && gdx < -INFEAS_EPS * norm {
            return Err(Error::InvalidProblem("objective is unbounded below".into()));
        }
    }
    Ok(())
}

/// Rows pinned to a bound, judged from approximate primal `z = Ax` and
/// dual values: `y > 0` pins a lower bound, `y < 0` an upper one.
fn active_set(lower: &DVector<f64>, upper: &DVector<f64>, y: &DVector<f64>, z: &DVector<f64>) -> Vec<(usize, f64)> {
    let mut active = Vec::new();
    for i in 0..lower.len() {
        if lower[i].is_finite() && z[i] - lower[i] < y[i] {
            active.push((i, lower[i]));
        } else if upper[i].is_finite() && upper[i] - z[i] < -y[i] {
            active.push((i, upper[i]));
        }
    }
    active
}

/// Solves the equality-constrained KKT system for a guessed active set, with
/// iterative refinement.
fn polish(
    h: &DMatrix<f64>,
    g: &DVector<f64>,
    a: &DMatrix<f64>,
    active: &[(usize, f64)],
) -> Option<(DVector<f64>, DVector<f64>)> {
    let n = g.len();
    let m = a.nrows();
    let k = active.len();
    let dim = n + k;
    let mut kkt = DMatrix::zeros(dim, dim);
    kkt.view_mut((0, 0), (n, n)).copy_from(h);
    for (r, &(i, _)) in active.iter().enumerate() {
        for j in 0..n {
            kkt[(n + r, j)] = a[(i, j)];
            kkt[(j, n + r)] = a[(i, j)];
        }
    }
    let mut reg = kkt.clone();
    for i in 0..n {
        reg[(i, i)] += POLISH_DELTA;
    }
    for r in 0..k {
        reg[(n + r, n + r)] -= POLISH_DELTA;
    }
    let lu = reg.lu();
    let mut rhs = DVector::zeros(dim);
    for j in 0..n {
        rhs[j] = -g[j];
    }
    for (r, &(_, b)) in active.iter().enumerate() {
        rhs[n + r] = b;
    }
    let mut sol = lu.solve(&rhs)?;
    for _ in 0..5 {
        let res = &rhs - &kkt * &sol;
        if res.amax() < 1e-14 {
            break;
        }
        sol += lu.solve(&res)?;
    }
    if sol.iter().any(|v| !v.is_finite()) {
        return None;
    }
    let x = sol.rows(0, n).into_owned();
    let mut yp = DVector::zeros(m);
    for (r, &(i, _)) in active.iter().enumerate() {
        // H x + g + A_k' nu = 0  =>  y = -nu
        yp[i] = -sol[n + r];
    }
    Some((x, yp))
}
