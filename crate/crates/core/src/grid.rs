//! Metric grid descriptions.
//!
//! Nodes are cell centred: node `(ix, iy)` sits at `origin + (ix, iy) * resolution`.
//! The lifted description adds a periodic heading axis sampled at
//! `theta_j = 2 pi j / n_theta` and a time axis with `n_t` slices `dt_field` apart.

use serde::{Deserialize, Serialize};
use std::f64::consts::TAU;

use crate::error::{Error, Result};

/// Spatial part of a grid: cell counts, cell size and the world position of node (0, 0).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub nx: usize,
    pub ny: usize,
    /// Meters per cell.
    pub resolution: f64,
    /// World coordinates of the centre of cell (0, 0).
    pub origin: [f64; 2],
}

impl GridSpec {
    pub fn new(nx: usize, ny: usize, resolution: f64, origin: [f64; 2]) -> Result<Self> {
        let spec = GridSpec {
            nx,
            ny,
            resolution,
            origin,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.nx < 3 || self.ny < 3 {
            return Err(Error::InvalidGrid(format!(
                "need at least 3x3 cells, got {}x{}",
                self.nx, self.ny
            )));
        }
        if !(self.resolution > 0.0 && self.resolution.is_finite()) {
            return Err(Error::InvalidGrid(format!(
                "resolution must be positive, got {}",
                self.resolution
            )));
        }
        if !self.origin.iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidGrid("origin must be finite".into()));
        }
        Ok(())
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.nx * self.ny
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn index(&self, ix: usize, iy: usize) -> usize {
        iy * self.nx + ix
    }

    #[inline]
    pub fn coords(&self, idx: usize) -> (usize, usize) {
        (idx % self.nx, idx / self.nx)
    }

    #[inline]
    pub fn is_border(&self, ix: usize, iy: usize) -> bool {
        ix == 0 || iy == 0 || ix + 1 == self.nx || iy + 1 == self.ny
    }

    /// Fractional index of a world point. No clamping.
    #[inline]
    pub fn world_to_grid(&self, p: [f64; 2]) -> [f64; 2] {
        [
            (p[0] - self.origin[0]) / self.resolution,
            (p[1] - self.origin[1]) / self.resolution,
        ]
    }

    #[inline]
    pub fn grid_to_world(&self, g: [f64; 2]) -> [f64; 2] {
        [
            self.origin[0] + g[0] * self.resolution,
            self.origin[1] + g[1] * self.resolution,
        ]
    }

    /// World position of a cell centre.
    #[inline]
    pub fn cell_center(&self, ix: usize, iy: usize) -> [f64; 2] {
        self.grid_to_world([ix as f64, iy as f64])
    }

    /// Cell whose centre is nearest to `p`, if it lies on the grid.
    pub fn cell_of(&self, p: [f64; 2]) -> Option<(usize, usize)> {
        let g = self.world_to_grid(p);
        let ix = g[0].round();
        let iy = g[1].round();
        if ix < 0.0 || iy < 0.0 || ix >= self.nx as f64 || iy >= self.ny as f64 {
            return None;
        }
        Some((ix as usize, iy as usize))
    }

    /// True when `p` lies within the node hull `[0, nx-1] x [0, ny-1]` (interpolation extent).
    pub fn contains(&self, p: [f64; 2]) -> bool {
        let g = self.world_to_grid(p);
        let eps = 1e-9;
        g[0] >= -eps && g[1] >= -eps && g[0] <= (self.nx - 1) as f64 + eps && g[1] <= (self.ny - 1) as f64 + eps
    }

    /// Lower and upper world corners of the node hull.
    pub fn extent(&self) -> ([f64; 2], [f64; 2]) {
        (
            self.origin,
            self.grid_to_world([(self.nx - 1) as f64, (self.ny - 1) as f64]),
        )
    }
}

/// Full discretisation of the position x heading x time domain.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LiftedSpec {
    pub grid: GridSpec,
    pub n_theta: usize,
    pub n_t: usize,
    /// Seconds between consecutive time slices.
    pub dt_field: f64,
}

impl LiftedSpec {
    pub fn new(grid: GridSpec, n_theta: usize, n_t: usize, dt_field: f64) -> Result<Self> {
        let spec = LiftedSpec {
            grid,
            n_theta,
            n_t,
            dt_field,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        self.grid.validate()?;
        if self.n_theta == 0 || self.n_t == 0 {
            return Err(Error::InvalidGrid("n_theta and n_t must be at least 1".into()));
        }
        if !(self.dt_field > 0.0 && self.dt_field.is_finite()) {
            return Err(Error::InvalidGrid(format!(
                "dt_field must be positive, got {}",
                self.dt_field
            )));
        }
        Ok(())
    }

    #[inline]
    pub fn heading(&self, j: usize) -> f64 {
        TAU * j as f64 / self.n_theta as f64
    }

    #[inline]
    pub fn heading_step(&self) -> f64 {
        TAU / self.n_theta as f64
    }

    /// Index of the heading sample nearest to `theta`.
    pub fn nearest_heading(&self, theta: f64) -> usize {
        let f = wrap_angle(theta) / self.heading_step();
        (f.round() as usize) % self.n_theta
    }

    /// Span covered by the time slices. Zero for a single (time-invariant) slice.
    #[inline]
    pub fn horizon(&self) -> f64 {
        (self.n_t - 1) as f64 * self.dt_field
    }

    #[inline]
    pub fn slice_len(&self) -> usize {
        self.grid.len()
    }

    #[inline]
    pub fn total_len(&self) -> usize {
        self.grid.len() * self.n_theta * self.n_t
    }

    /// Offset of slice `(j, k)` in the flat (it-major, heading, iy, ix-minor) layout.
    #[inline]
    pub fn slice_offset(&self, j: usize, k: usize) -> usize {
        (k * self.n_theta + j) * self.grid.len()
    }
}

/// Wraps an angle to `[0, 2 pi)`.
#[inline]
pub fn wrap_angle(theta: f64) -> f64 {
    let w = theta.rem_euclid(TAU);
    // rem_euclid can round up to exactly TAU for tiny negative inputs
    if w >= TAU {
        0.0
    } else {
        w
    }
}

/// Shortest signed angular difference `a - b`, in `(-pi, pi]`.
#[inline]
pub fn angle_diff(a: f64, b: f64) -> f64 {
    use std::f64::consts::PI;
    let d = (a - b).rem_euclid(TAU);
    if d > PI {
        d - TAU
    } else {
        d
    }
}
