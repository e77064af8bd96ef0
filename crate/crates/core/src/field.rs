//! Scalar safety fields and the lifted (position x heading x time) field.
//!
//! The lifted field is interpolated quadrilinearly: bilinear in position,
//! linear in heading with wrap-around between the last and first heading
//! samples, and linear in time. Gradients are the exact partial derivatives
//! of that interpolant; on cell faces the cell `[lo, hi)` containing the query
//! decides which one-sided derivative is returned.

use std::io::{Read, Write};

use crate::error::{Error, Result};
use crate::grid::{wrap_angle, GridSpec, LiftedSpec};

/// Safety values over the spatial grid, row major with `ix` fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    pub spec: GridSpec,
    pub values: Vec<f64>,
}

impl ScalarField {
    pub fn zeros(spec: GridSpec) -> Self {
        ScalarField {
            spec,
            values: vec![0.0; spec.len()],
        }
    }

    pub fn new(spec: GridSpec, values: Vec<f64>) -> Result<Self> {
        if values.len() != spec.len() {
            return Err(Error::InvalidParams(format!(
                "expected {} values, got {}",
                spec.len(),
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParams("field values must be finite".into()));
        }
        Ok(ScalarField { spec, values })
    }

    pub fn from_fn(spec: GridSpec, mut f: impl FnMut([f64; 2]) -> f64) -> Self {
        let mut values = Vec::with_capacity(spec.len());
        for iy in 0..spec.ny {
            for ix in 0..spec.nx {
                values.push(f(spec.cell_center(ix, iy)));
            }
        }
        ScalarField { spec, values }
    }

    #[inline]
    pub fn get(&self, ix: usize, iy: usize) -> f64 {
        self.values[self.spec.index(ix, iy)]
    }
}

/// Value and partial derivatives of the interpolant at one query point.
///
/// Derivative units: per meter for `dx`/`dy`, per radian for `dtheta`,
/// per second for `dt`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FieldSample {
    pub value: f64,
    pub dx: f64,
    pub dy: f64,
    pub dtheta: f64,
    pub dt: f64,
}

/// `h[ix, iy, j, k]` over the lifted domain; slice `(j, k)` is heading `theta_j`
/// at time `t0 + k * dt_field`.
#[derive(Debug, Clone, PartialEq)]
pub struct LiftedSafetyField {
    pub spec: LiftedSpec,
    /// Wall-clock time of slice 0.
    pub t0: f64,
    values: Vec<f64>,
}

// (lower index, upper index, weight of upper)
type AxisCell = (usize, usize, f64);

impl LiftedSafetyField {
    pub fn new(spec: LiftedSpec, t0: f64, values: Vec<f64>) -> Result<Self> {
        spec.validate()?;
        if values.len() != spec.total_len() {
            return Err(Error::InvalidParams(format!(
                "expected {} values, got {}",
                spec.total_len(),
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParams("field values must be finite".into()));
        }
        Ok(LiftedSafetyField { spec, t0, values })
    }

    /// Evaluates `f(position, theta_j, t_k)` at every node.
    pub fn from_fn(spec: LiftedSpec, t0: f64, mut f: impl FnMut([f64; 2], f64, f64) -> f64) -> Result<Self> {
        let mut values = Vec::with_capacity(spec.total_len());
        for k in 0..spec.n_t {
            let t = t0 + k as f64 * spec.dt_field;
            for j in 0..spec.n_theta {
                let theta = spec.heading(j);
                for iy in 0..spec.grid.ny {
                    for ix in 0..spec.grid.nx {
                        values.push(f(spec.grid.cell_center(ix, iy), theta, t));
                    }
                }
            }
        }
        Self::new(spec, t0, values)
    }

    /// Assembles a field from per-slice scalar fields ordered `(k, j)` with `j` fastest.
    pub fn from_slices(spec: LiftedSpec, t0: f64, slices: Vec<ScalarField>) -> Result<Self> {
        if slices.len() != spec.n_theta * spec.n_t {
            return Err(Error::InvalidParams(format!(
                "expected {} slices, got {}",
                spec.n_theta * spec.n_t,
                slices.len()
            )));
        }
        let mut values = Vec::with_capacity(spec.total_len());
        for s in &slices {
            if s.spec != spec.grid {
                return Err(Error::InvalidParams("slice grid mismatch".into()));
            }
            values.extend_from_slice(&s.values);
        }
        Self::new(spec, t0, values)
    }

    #[inline]
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn slice(&self, j: usize, k: usize) -> &[f64] {
        let off = self.spec.slice_offset(j, k);
        &self.values[off..off + self.spec.slice_len()]
    }

    pub fn scalar_slice(&self, j: usize, k: usize) -> ScalarField {
        ScalarField {
            spec: self.spec.grid,
            values: self.slice(j, k).to_vec(),
        }
    }

    #[inline]
    pub fn node(&self, ix: usize, iy: usize, j: usize, k: usize) -> f64 {
        self.values[self.spec.slice_offset(j, k) + self.spec.grid.index(ix, iy)]
    }

    /// Last time covered by the slices. Equal to `t0` for a single slice.
    pub fn t_end(&self) -> f64 {
        self.t0 + self.spec.horizon()
    }

    /// Same values, re-stamped to a new slice-0 time.
    pub fn with_t0(mut self, t0: f64) -> Self {
        self.t0 = t0;
        self
    }

    /// Interpolated safety value.
    pub fn sample(&self, y: [f64; 2], theta: f64, t: f64) -> Result<f64> {
        Ok(self.sample_full(y, theta, t)?.value)
    }

    /// `(dh/dx, dh/dy, dh/dtheta)` of the interpolant.
    pub fn gradient(&self, y: [f64; 2], theta: f64, t: f64) -> Result<[f64; 3]> {
        let s = self.sample_full(y, theta, t)?;
        Ok([s.dx, s.dy, s.dtheta])
    }

    /// Value and all partial derivatives, including the time derivative.
    ///
    /// With a single time slice the field is treated as time invariant and
    /// any `t` is accepted.
    pub fn sample_full(&self, y: [f64; 2], theta: f64, t: f64) -> Result<FieldSample> {
        let grid = &self.spec.grid;
        if !(y[0].is_finite() && y[1].is_finite() && theta.is_finite() && t.is_finite()) {
            return Err(Error::OutOfDomain("non-finite query".into()));
        }
        if !grid.contains(y) {
            return Err(Error::OutOfDomain(format!(
                "position ({:.4}, {:.4}) outside grid",
                y[0], y[1]
            )));
        }
        let g = grid.world_to_grid(y);
        let cx = linear_cell(g[0], grid.nx);
        let cy = linear_cell(g[1], grid.ny);
        let cth = self.heading_cell(theta);
        let ctm = self.time_cell(t)?;

        // bilinear value and index-space partials per (heading, time) corner
        let mut corner = [[(0.0f64, 0.0f64, 0.0f64); 2]; 2];
        for (a, ja) in [cth.0, cth.1].into_iter().enumerate() {
            for (b, kb) in [ctm.0, ctm.1].into_iter().enumerate() {
                corner[a][b] = self.bilinear(ja, kb, cx, cy);
            }
        }
        let (wth, wtm) = (cth.2, ctm.2);
        let wa = [1.0 - wth, wth];
        let wb = [1.0 - wtm, wtm];
        let mut value = 0.0;
        let mut dfx = 0.0;
        let mut dfy = 0.0;
        for a in 0..2 {
            for b in 0..2 {
                let w = wa[a] * wb[b];
                value += w * corner[a][b].0;
                dfx += w * corner[a][b].1;
                dfy += w * corner[a][b].2;
            }
        }
        let mut dfth = 0.0;
        let mut dftm = 0.0;
        for b in 0..2 {
            dfth += wb[b] * (corner[1][b].0 - corner[0][b].0);
        }
        for a in 0..2 {
            dftm += wa[a] * (corner[a][1].0 - corner[a][0].0);
        }
        let dtheta = if self.spec.n_theta > 1 {
            dfth / self.spec.heading_step()
        } else {
            0.0
        };
        let dt = if self.spec.n_t > 1 {
            dftm / self.spec.dt_field
        } else {
            0.0
        };
        Ok(FieldSample {
            value,
            dx: dfx / grid.resolution,
            dy: dfy / grid.resolution,
            dtheta,
            dt,
        })
    }

    fn bilinear(&self, j: usize, k: usize, cx: AxisCell, cy: AxisCell) -> (f64, f64, f64) {
        let nx = self.spec.grid.nx;
        let base = self.spec.slice_offset(j, k);
        let v00 = self.values[base + cy.0 * nx + cx.0];
        let v10 = self.values[base + cy.0 * nx + cx.1];
        let v01 = self.values[base + cy.1 * nx + cx.0];
        let v11 = self.values[base + cy.1 * nx + cx.1];
        let (wx, wy) = (cx.2, cy.2);
        let value = (1.0 - wx) * (1.0 - wy) * v00 + wx * (1.0 - wy) * v10 + (1.0 - wx) * wy * v01 + wx * wy * v11;
        let dwx = (1.0 - wy) * (v10 - v00) + wy * (v11 - v01);
        let dwy = (1.0 - wx) * (v01 - v00) + wx * (v11 - v10);
        (value, dwx, dwy)
    }

    fn heading_cell(&self, theta: f64) -> AxisCell {
        let n = self.spec.n_theta;
        if n == 1 {
            return (0, 0, 0.0);
        }
        let f = wrap_angle(theta) / self.spec.heading_step();
        let j0 = (f.floor() as usize).min(n - 1);
        (j0, (j0 + 1) % n, f - j0 as f64)
    }

    fn time_cell(&self, t: f64) -> Result<AxisCell> {
        let n = self.spec.n_t;
        if n == 1 {
            return Ok((0, 0, 0.0));
        }
        let f = (t - self.t0) / self.spec.dt_field;
        let eps = 1e-9;
        if f < -eps || f > (n - 1) as f64 + eps {
            return Err(Error::OutOfDomain(format!(
                "time {t:.4} outside slice range [{:.4}, {:.4}]",
                self.t0,
                self.t_end()
            )));
        }
        Ok(linear_cell(f.clamp(0.0, (n - 1) as f64), n))
    }

    /// Writes the field in PSF1 layout.
    pub fn write_psf1<W: Write>(&self, mut w: W) -> Result<()> {
        let s = &self.spec;
        w.write_all(b"PSF1")?;
        for v in [s.grid.nx, s.grid.ny, s.n_theta, s.n_t] {
            let v = u32::try_from(v).map_err(|_| Error::InvalidParams("dimension exceeds u32".into()))?;
            w.write_all(&v.to_le_bytes())?;
        }
        for v in [
            s.grid.resolution,
            s.grid.origin[0],
            s.grid.origin[1],
            s.dt_field,
            self.t0,
        ] {
            w.write_all(&v.to_le_bytes())?;
        }
        let mut buf = Vec::with_capacity(self.values.len() * 4);
        for v in &self.values {
            buf.extend_from_slice(&(*v as f32).to_le_bytes());
        }
        w.write_all(&buf)?;
        Ok(())
    }

    pub fn to_psf1_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(60 + self.values.len() * 4);
        self.write_psf1(&mut out).expect("writing to a Vec cannot fail");
        out
    }

    /// Reads a PSF1 dump; values come back widened from f32.
    pub fn read_psf1<R: Read>(mut r: R) -> Result<Self> {
        let bad = |m: &str| Error::Format {
            format: "PSF1",
            message: m.to_string(),
        };
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != b"PSF1" {
            return Err(bad("bad magic"));
        }
        let mut dims = [0usize; 4];
        for d in dims.iter_mut() {
            let mut b = [0u8; 4];
            r.read_exact(&mut b)?;
            *d = u32::from_le_bytes(b) as usize;
        }
        let mut reals = [0f64; 5];
        for v in reals.iter_mut() {
            let mut b = [0u8; 8];
            r.read_exact(&mut b)?;
            *v = f64::from_le_bytes(b);
        }
        let grid = GridSpec::new(dims[0], dims[1], reals[0], [reals[1], reals[2]]).map_err(|e| bad(&e.to_string()))?;
        let spec = LiftedSpec::new(grid, dims[2], dims[3], reals[3]).map_err(|e| bad(&e.to_string()))?;
        let n = spec.total_len();
        let mut raw = vec![0u8; n * 4];
        r.read_exact(&mut raw)?;
        let values = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
            .collect();
        LiftedSafetyField::new(spec, reals[4], values).map_err(|e| bad(&e.to_string()))
    }
}

// Half-open cell containing fractional index `f` on an axis with `n` nodes;
// the last node belongs to the last cell.
#[inline]
fn linear_cell(f: f64, n: usize) -> AxisCell {
    if n == 1 {
        return (0, 0, 0.0);
    }
    let i0 = (f.floor().max(0.0) as usize).min(n - 2);
    (i0, i0 + 1, f - i0 as f64)
}
