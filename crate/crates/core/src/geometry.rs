//! Robot footprints, their rasterization, and footprint-aware buffering of
//! free space.
//!
//! A kernel cell is set when the closed cell square touches the rotated
//! footprint. That pads the shape by half a cell in the max-norm, which is
//! exactly what makes buffering sound against any test that looks up the cell
//! containing a footprint point.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::occupancy::OccupancyGrid;

/// Body-frame footprint, relative to the robot centroid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum FootprintShape {
    Ellipse { a: f64, b: f64 },
    Polygon { vertices: Vec<[f64; 2]> },
}

// slack on cell squares so touching counts as intersecting
const TOUCH_EPS: f64 = 1e-9;

impl FootprintShape {
    /// Axis-aligned rectangle, `length` along the body x axis.
    pub fn rectangle(length: f64, width: f64) -> Self {
        let (hl, hw) = (length / 2.0, width / 2.0);
        FootprintShape::Polygon {
            vertices: vec![[-hl, -hw], [hl, -hw], [hl, hw], [-hl, hw]],
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            FootprintShape::Ellipse { a, b } => {
                if !(*a > 0.0 && *b > 0.0 && a.is_finite() && b.is_finite()) {
                    return Err(Error::DegenerateShape(format!(
                        "ellipse semi-axes must be positive, got a={a}, b={b}"
                    )));
                }
            }
            FootprintShape::Polygon { vertices: v } => {
                if v.len() < 3 {
                    return Err(Error::DegenerateShape(format!(
                        "polygon needs at least 3 vertices, got {}",
                        v.len()
                    )));
                }
                if v.iter().flatten().any(|c| !c.is_finite()) {
                    return Err(Error::DegenerateShape("non-finite vertex".into()));
                }
                let n = v.len();
                for i in 0..n {
                    for j in i + 1..n {
                        let adjacent = j == i + 1 || (i == 0 && j == n - 1);
                        if !adjacent && segments_intersect(v[i], v[(i + 1) % n], v[j], v[(j + 1) % n]) {
                            return Err(Error::DegenerateShape(format!("edges {i} and {j} intersect")));
                        }
                    }
                }
                if signed_area(v).abs() < 1e-12 {
                    return Err(Error::DegenerateShape("polygon has zero area".into()));
                }
                if !point_in_polygon([0.0, 0.0], v) {
                    return Err(Error::DegenerateShape(
                        "polygon must contain the centroid origin".into(),
                    ));
                }
            }
        }
        Ok(())
    }

    /// Largest distance from the origin to the shape.
    pub fn bounding_radius(&self) -> f64 {
        match self {
            FootprintShape::Ellipse { a, b } => a.max(*b),
            FootprintShape::Polygon { vertices } => vertices.iter().map(|v| v[0].hypot(v[1])).fold(0.0, f64::max),
        }
    }

    /// Body-frame membership (closed set).
    pub fn contains(&self, p: [f64; 2]) -> bool {
        match self {
            FootprintShape::Ellipse { a, b } => (p[0] / a).powi(2) + (p[1] / b).powi(2) <= 1.0,
            FootprintShape::Polygon { vertices } => point_in_polygon(p, vertices),
        }
    }

    /// Membership of a world point for the robot at `pose = (x, y, theta)`.
    pub fn contains_posed(&self, p: [f64; 2], pose: [f64; 3]) -> bool {
        self.contains(to_body(p, pose))
    }

    /// Does the closed axis-aligned square of half-width `half` centred at the
    /// world point `center` touch the shape posed at `pose`?
    pub fn touches_square(&self, pose: [f64; 3], center: [f64; 2], half: f64) -> bool {
        let quad = [[-half, -half], [half, -half], [half, half], [-half, half]]
            .map(|o| to_body([center[0] + o[0], center[1] + o[1]], pose));
        self.touches_convex_quad(&quad)
    }

    /// Does the closed convex quadrilateral `quad` (body frame, any winding)
    /// intersect the shape?
    fn touches_convex_quad(&self, quad: &[[f64; 2]; 4]) -> bool {
        match self {
            FootprintShape::Ellipse { a, b } => {
                let q = quad.map(|p| [p[0] / a, p[1] / b]);
                point_in_convex(&q, [0.0, 0.0])
                    || (0..4).any(|i| seg_point_dist(q[i], q[(i + 1) % 4], [0.0, 0.0]) <= 1.0)
            }
            FootprintShape::Polygon { vertices: v } => {
                if quad.iter().any(|p| point_in_polygon(*p, v)) {
                    return true;
                }
                if v.iter().any(|p| point_in_convex(quad, *p)) {
                    return true;
                }
                let n = v.len();
                (0..n).any(|i| (0..4).any(|k| segments_intersect(v[i], v[(i + 1) % n], quad[k], quad[(k + 1) % 4])))
            }
        }
    }
}

#[inline]
fn to_body(p: [f64; 2], pose: [f64; 3]) -> [f64; 2] {
    let (s, c) = pose[2].sin_cos();
    let d = [p[0] - pose[0], p[1] - pose[1]];
    [c * d[0] + s * d[1], -s * d[0] + c * d[1]]
}

fn signed_area(v: &[[f64; 2]]) -> f64 {
    let n = v.len();
    (0..n)
        .map(|i| {
            let (p, q) = (v[i], v[(i + 1) % n]);
            p[0] * q[1] - q[0] * p[1]
        })
        .sum::<f64>()
        / 2.0
}

#[inline]
fn cross(o: [f64; 2], a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])
}

fn on_segment(p: [f64; 2], a: [f64; 2], b: [f64; 2]) -> bool {
    cross(a, b, p).abs() <= 1e-12 * (1.0 + (b[0] - a[0]).abs() + (b[1] - a[1]).abs())
        && p[0] >= a[0].min(b[0]) - 1e-12
        && p[0] <= a[0].max(b[0]) + 1e-12
        && p[1] >= a[1].min(b[1]) - 1e-12
        && p[1] <= a[1].max(b[1]) + 1e-12
}

/// Closed segments intersect (touching included).
fn segments_intersect(a: [f64; 2], b: [f64; 2], c: [f64; 2], d: [f64; 2]) -> bool {
    let d1 = cross(c, d, a);
    let d2 = cross(c, d, b);
    let d3 = cross(a, b, c);
    let d4 = cross(a, b, d);
    if ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0)) && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0)) {
        return true;
    }
    on_segment(a, c, d) || on_segment(b, c, d) || on_segment(c, a, b) || on_segment(d, a, b)
}

/// Closed polygon membership: boundary points count as inside.
fn point_in_polygon(p: [f64; 2], v: &[[f64; 2]]) -> bool {
    let n = v.len();
    let mut inside = false;
    for i in 0..n {
        let (a, b) = (v[i], v[(i + 1) % n]);
        if on_segment(p, a, b) {
            return true;
        }
        if (a[1] > p[1]) != (b[1] > p[1]) {
            let x = a[0] + (p[1] - a[1]) / (b[1] - a[1]) * (b[0] - a[0]);
            if p[0] < x {
                inside = !inside;
            }
        }
    }
    inside
}

fn point_in_convex(q: &[[f64; 2]; 4], p: [f64; 2]) -> bool {
    let mut sign = 0.0f64;
    for i in 0..4 {
        let c = cross(q[i], q[(i + 1) % 4], p);
        if c.abs() <= 1e-15 {
            continue;
        }
        if sign == 0.0 {
            sign = c.signum();
        } else if c.signum() != sign {
            return false;
        }
    }
    true
}

fn seg_point_dist(a: [f64; 2], b: [f64; 2], p: [f64; 2]) -> f64 {
    let ab = [b[0] - a[0], b[1] - a[1]];
    let ap = [p[0] - a[0], p[1] - a[1]];
    let len2 = ab[0] * ab[0] + ab[1] * ab[1];
    let t = if len2 > 0.0 {
        ((ap[0] * ab[0] + ap[1] * ab[1]) / len2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    (ap[0] - t * ab[0]).hypot(ap[1] - t * ab[1])
}

/// Footprint raster at one heading. `cells` is row-major, `x` fastest; the
/// robot centroid sits in cell `anchor`.
#[derive(Debug, Clone, PartialEq)]
pub struct Kernel {
    pub nx: usize,
    pub ny: usize,
    pub resolution: f64,
    pub anchor: (usize, usize),
    pub cells: Vec<bool>,
}

impl Kernel {
    /// A point robot.
    pub fn point(resolution: f64) -> Self {
        Kernel {
            nx: 1,
            ny: 1,
            resolution,
            anchor: (0, 0),
            cells: vec![true],
        }
    }

    /// Cells whose centre lies within `radius + resolution / 2` of the anchor.
    pub fn disk(radius: f64, resolution: f64) -> Self {
        let reach = radius + resolution / 2.0;
        let m = (reach / resolution).floor() as isize;
        Self::from_offsets(
            resolution,
            (-m..=m).flat_map(|dy| {
                (-m..=m).filter_map(move |dx| {
                    ((dx as f64 * resolution).hypot(dy as f64 * resolution) <= reach + TOUCH_EPS).then_some((dx, dy))
                })
            }),
        )
    }

    fn from_offsets(resolution: f64, offsets: impl IntoIterator<Item = (isize, isize)>) -> Self {
        let offsets: Vec<_> = offsets.into_iter().collect();
        let x0 = offsets.iter().map(|o| o.0).min().unwrap_or(0).min(0);
        let x1 = offsets.iter().map(|o| o.0).max().unwrap_or(0).max(0);
        let y0 = offsets.iter().map(|o| o.1).min().unwrap_or(0).min(0);
        let y1 = offsets.iter().map(|o| o.1).max().unwrap_or(0).max(0);
        let nx = (x1 - x0 + 1) as usize;
        let ny = (y1 - y0 + 1) as usize;
        let mut cells = vec![false; nx * ny];
        for (dx, dy) in offsets {
            cells[(dy - y0) as usize * nx + (dx - x0) as usize] = true;
        }
        Kernel {
            nx,
            ny,
            resolution,
            anchor: ((-x0) as usize, (-y0) as usize),
            cells,
        }
    }

    pub fn get(&self, ix: usize, iy: usize) -> bool {
        self.cells[iy * self.nx + ix]
    }

    /// Set cells as offsets from the anchor.
    pub fn offsets(&self) -> Vec<(isize, isize)> {
        let mut out = Vec::new();
        for iy in 0..self.ny {
            for ix in 0..self.nx {
                if self.get(ix, iy) {
                    out.push((
                        ix as isize - self.anchor.0 as isize,
                        iy as isize - self.anchor.1 as isize,
                    ));
                }
            }
        }
        out
    }

    pub fn count(&self) -> usize {
        self.cells.iter().filter(|c| **c).count()
    }

    /// Runs of set cells per kernel row: `(dy, dx_lo, dx_hi)`, inclusive.
    fn row_runs(&self) -> Vec<(isize, isize, isize)> {
        let mut runs = Vec::new();
        for iy in 0..self.ny {
            let dy = iy as isize - self.anchor.1 as isize;
            let mut ix = 0;
            while ix < self.nx {
                if self.get(ix, iy) {
                    let start = ix;
                    while ix + 1 < self.nx && self.get(ix + 1, iy) {
                        ix += 1;
                    }
                    let a = self.anchor.0 as isize;
                    runs.push((dy, start as isize - a, ix as isize - a));
                }
                ix += 1;
            }
        }
        runs
    }
}

/// Rasterizes `shape` rotated by `theta` (radians, counter-clockwise).
pub fn rasterize_footprint(shape: &FootprintShape, theta: f64, resolution: f64) -> Result<Kernel> {
    rasterize_footprint_with_margin(shape, theta, resolution, 0.0)
}

/// As [`rasterize_footprint`], with the shape further dilated by `margin`
/// meters in the max-norm.
pub fn rasterize_footprint_with_margin(
    shape: &FootprintShape,
    theta: f64,
    resolution: f64,
    margin: f64,
) -> Result<Kernel> {
    shape.validate()?;
    if !(resolution > 0.0 && resolution.is_finite()) {
        return Err(Error::InvalidParams(format!(
            "resolution must be positive, got {resolution}"
        )));
    }
    if !(margin >= 0.0 && margin.is_finite()) {
        return Err(Error::InvalidParams(format!(
            "margin must be non-negative, got {margin}"
        )));
    }
    let half = resolution / 2.0 + margin + TOUCH_EPS;
    let m = ((shape.bounding_radius() + half) / resolution).ceil() as isize;
    let pose = [0.0, 0.0, theta];
    let mut offsets = Vec::new();
    for dy in -m..=m {
        for dx in -m..=m {
            let c = [dx as f64 * resolution, dy as f64 * resolution];
            if shape.touches_square(pose, c, half) {
                offsets.push((dx, dy));
            }
        }
    }
    Ok(Kernel::from_offsets(resolution, offsets))
}

/// Cells where the footprint, centred on the cell, overlaps an occupied cell
/// or leaves the grid. Border cells stay occupied.
pub fn buffer_safe_set(occ: &OccupancyGrid, kernel: &Kernel) -> Result<OccupancyGrid> {
    let spec = occ.spec;
    if (kernel.resolution - spec.resolution).abs() > 1e-12 * spec.resolution {
        return Err(Error::InvalidParams(format!(
            "kernel resolution {} differs from grid resolution {}",
            kernel.resolution, spec.resolution
        )));
    }
    let runs = kernel.row_runs();
    let (nx, ny) = (spec.nx as isize, spec.ny as isize);
    let cells = occ.cells();
    // prefix[iy][k] = occupied count in row iy, columns < k
    let mut prefix = vec![0u32; spec.ny * (spec.nx + 1)];
    for iy in 0..spec.ny {
        let row = &mut prefix[iy * (spec.nx + 1)..(iy + 1) * (spec.nx + 1)];
        for ix in 0..spec.nx {
            row[ix + 1] = row[ix] + cells[iy * spec.nx + ix] as u32;
        }
    }
    let mut out = vec![false; spec.len()];
    for iy in 0..ny {
        for ix in 0..nx {
            let hit = runs.iter().any(|&(dy, lo, hi)| {
                let y = iy + dy;
                let (x0, x1) = (ix + lo, ix + hi);
                if y < 0 || y >= ny || x0 < 0 || x1 >= nx {
                    return true;
                }
                let row = &prefix[y as usize * (spec.nx + 1)..];
                row[x1 as usize + 1] > row[x0 as usize]
            });
            out[(iy * nx + ix) as usize] = hit;
        }
    }
    OccupancyGrid::from_cells(spec, out)
}

/// Brute-force overlap test of the posed footprint with occupied cells.
///
/// Reports a collision when an occupied cell centre lies inside the footprint,
/// or when a footprint point on a lattice ten times finer than the grid falls
/// in an occupied (or off-grid) cell.
pub fn collision_check(occ: &OccupancyGrid, shape: &FootprintShape, pose: [f64; 3]) -> Result<bool> {
    let spec = occ.spec;
    if !spec.contains([pose[0], pose[1]]) {
        return Err(Error::OutOfDomain(format!(
            "pose ({:.4}, {:.4}) outside grid extent",
            pose[0], pose[1]
        )));
    }
    let res = spec.resolution;
    let r = shape.bounding_radius();
    let g0 = spec.world_to_grid([pose[0] - r, pose[1] - r]);
    let g1 = spec.world_to_grid([pose[0] + r, pose[1] + r]);
    let clamp_x = |v: f64| v.clamp(0.0, (spec.nx - 1) as f64) as usize;
    let clamp_y = |v: f64| v.clamp(0.0, (spec.ny - 1) as f64) as usize;
    for iy in clamp_y(g0[1].floor())..=clamp_y(g1[1].ceil()) {
        for ix in clamp_x(g0[0].floor())..=clamp_x(g1[0].ceil()) {
            if occ.is_occupied(ix, iy) && shape.contains_posed(spec.cell_center(ix, iy), pose) {
                return Ok(true);
            }
        }
    }
    let step = res / 10.0;
    let s0 = [
        ((g0[0] * 10.0).floor() - 1.0) as i64,
        ((g0[1] * 10.0).floor() - 1.0) as i64,
    ];
    let s1 = [
        ((g1[0] * 10.0).ceil() + 1.0) as i64,
        ((g1[1] * 10.0).ceil() + 1.0) as i64,
    ];
    for sy in s0[1]..=s1[1] {
        for sx in s0[0]..=s1[0] {
            let p = [spec.origin[0] + sx as f64 * step, spec.origin[1] + sy as f64 * step];
            if shape.contains_posed(p, pose) && occ.occupied_at(p) {
                return Ok(true);
            }
        }
    }
    Ok(false)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::GridSpec;
    use proptest::prelude::*;
    use std::f64::consts::{FRAC_PI_2, PI};

    fn bbox(k: &Kernel) -> (usize, usize) {
        let offs = k.offsets();
        let w = offs.iter().map(|o| o.0).max().unwrap() - offs.iter().map(|o| o.0).min().unwrap();
        let h = offs.iter().map(|o| o.1).max().unwrap() - offs.iter().map(|o| o.1).min().unwrap();
        (w as usize + 1, h as usize + 1)
    }

    #[test]
    fn rejects_degenerate_shapes() {
        let bad = [
            FootprintShape::Ellipse { a: 0.0, b: 1.0 },
            FootprintShape::Polygon {
                vertices: vec![[0.0, 0.0], [1.0, 0.0]],
            },
            // bow tie
            FootprintShape::Polygon {
                vertices: vec![[-1.0, -1.0], [1.0, 1.0], [1.0, -1.0], [-1.0, 1.0]],
            },
            // origin outside
            FootprintShape::Polygon {
                vertices: vec![[1.0, 1.0], [2.0, 1.0], [2.0, 2.0]],
            },
        ];
        for s in bad {
            assert!(matches!(
                rasterize_footprint(&s, 0.0, 0.1),
                Err(Error::DegenerateShape(_))
            ));
        }
    }

    #[test]
    fn rectangle_kernel_swaps_axes() {
        let rect = FootprintShape::rectangle(0.6, 0.2);
        let k0 = rasterize_footprint(&rect, 0.0, 0.1).unwrap();
        let k90 = rasterize_footprint(&rect, FRAC_PI_2, 0.1).unwrap();
        assert_eq!(bbox(&k0), (7, 3));
        assert_eq!(bbox(&k90), (3, 7));
        let kpi = rasterize_footprint(&rect, PI, 0.1).unwrap();
        assert_eq!(k0.offsets(), kpi.offsets());
    }

    #[test]
    fn disk_ellipse_is_rotation_invariant() {
        let disk = FootprintShape::Ellipse { a: 0.23, b: 0.23 };
        let k0 = rasterize_footprint(&disk, 0.0, 0.05).unwrap();
        for j in 1..16 {
            let k = rasterize_footprint(&disk, j as f64 * PI / 8.0, 0.05).unwrap();
            assert_eq!(k.offsets(), k0.offsets());
        }
    }

    // fine-lattice rasterization oracle: a cell is set iff some point of the
    // shape lands in its closed square
    fn fine_oracle(shape: &FootprintShape, theta: f64, res: f64) -> Vec<(isize, isize)> {
        let n = 10;
        let m = ((shape.bounding_radius() + res) / res).ceil() as isize;
        let mut out = Vec::new();
        for dy in -m..=m {
            for dx in -m..=m {
                let mut hit = false;
                'cell: for sy in 0..=n {
                    for sx in 0..=n {
                        let p = [
                            (dx as f64 - 0.5 + sx as f64 / n as f64) * res,
                            (dy as f64 - 0.5 + sy as f64 / n as f64) * res,
                        ];
                        if shape.contains_posed(p, [0.0, 0.0, theta]) {
                            hit = true;
                            break 'cell;
                        }
                    }
                }
                if hit {
                    out.push((dx, dy));
                }
            }
        }
        out.sort_by_key(|o| (o.1, o.0));
        out
    }

    #[test]
    fn kernel_contains_fine_raster() {
        let shapes = [
            FootprintShape::rectangle(0.6, 0.2),
            FootprintShape::Ellipse { a: 0.35, b: 0.12 },
            FootprintShape::Polygon {
                vertices: vec![[-0.2, -0.2], [0.3, -0.1], [0.0, 0.0], [0.3, 0.1], [-0.2, 0.2]],
            },
        ];
        for shape in &shapes {
            for j in 0..16 {
                let th = j as f64 * PI / 8.0 + 0.01;
                let k = rasterize_footprint(shape, th, 0.1).unwrap();
                let got = k.offsets();
                for o in fine_oracle(shape, th, 0.1) {
                    assert!(got.contains(&o), "missing {o:?} at heading {th}");
                }
            }
        }
        // axis-aligned rectangle: the fine raster is exact
        let rect = &shapes[0];
        let got = rasterize_footprint(rect, 0.0, 0.1).unwrap().offsets();
        assert_eq!(got, fine_oracle(rect, 0.0, 0.1));
    }

    #[test]
    fn point_kernel_is_identity() {
        let spec = GridSpec::new(12, 10, 0.1, [0.0, 0.0]).unwrap();
        let occ = OccupancyGrid::from_fn(spec, |p| (p[0] - 0.5).abs() < 0.12 && p[1] > 0.4);
        let out = buffer_safe_set(&occ, &Kernel::point(0.1)).unwrap();
        assert_eq!(out.cells(), occ.cells());
    }

    #[test]
    fn narrow_free_space_is_erased() {
        let spec = GridSpec::new(10, 10, 0.1, [0.0, 0.0]).unwrap();
        let occ = OccupancyGrid::from_fn(spec, |p| (p[0] - 0.45).abs() > 0.12);
        let out = buffer_safe_set(&occ, &Kernel::disk(0.2, 0.1)).unwrap();
        assert!(out.cells().iter().all(|c| *c));
    }

    #[test]
    fn single_obstacle_gives_disk() {
        let spec = GridSpec::new(21, 21, 0.1, [0.0, 0.0]).unwrap();
        let mut occ = OccupancyGrid::empty(spec);
        occ.set(10, 10, true);
        let r = 0.3;
        let out = buffer_safe_set(&occ, &Kernel::disk(r, 0.1)).unwrap();
        for iy in 5..16 {
            for ix in 5..16 {
                let d = ((ix as f64 - 10.0).hypot(iy as f64 - 10.0)) * 0.1;
                assert_eq!(out.is_occupied(ix, iy), d <= r + 0.05 + 1e-9, "({ix}, {iy})");
            }
        }
    }

    #[test]
    fn collision_examples() {
        let spec = GridSpec::new(40, 40, 0.05, [0.0, 0.0]).unwrap();
        let empty = OccupancyGrid::empty(spec);
        let rect = FootprintShape::rectangle(0.6, 0.2);
        assert!(!collision_check(&empty, &rect, [1.0, 1.0, 0.3]).unwrap());
        let mut occ = empty.clone();
        occ.set(20, 20, true);
        assert!(collision_check(&occ, &FootprintShape::Ellipse { a: 0.01, b: 0.01 }, [1.0, 1.0, 0.0]).unwrap());
        assert!(collision_check(&empty, &rect, [5.0, 1.0, 0.0]).is_err());
    }

    #[test]
    fn collision_near_wall_clearance() {
        // wall: column ix = 30 (centre x = 1.5), cell square starts at 1.475
        let res = 0.05;
        let spec = GridSpec::new(40, 40, res, [0.0, 0.0]).unwrap();
        let occ = OccupancyGrid::from_fn(spec, |p| p[0] >= 1.5 - 1e-9);
        let rect = FootprintShape::rectangle(0.6, 0.2);
        let face = 1.5 - res / 2.0;
        // front edge x + 0.3, analytically just clear of / just inside the wall cell
        let clear = face - 0.2 * res - 0.3;
        let hit = face + 0.2 * res - 0.3;
        assert!(!collision_check(&occ, &rect, [clear, 1.0, 0.0]).unwrap());
        assert!(collision_check(&occ, &rect, [hit, 1.0, 0.0]).unwrap());
    }

    fn brute_buffer(occ: &OccupancyGrid, k: &Kernel) -> Vec<bool> {
        let s = occ.spec;
        let offs = k.offsets();
        let mut out = Vec::new();
        for iy in 0..s.ny as isize {
            for ix in 0..s.nx as isize {
                out.push(offs.iter().any(|&(dx, dy)| {
                    let (x, y) = (ix + dx, iy + dy);
                    x < 0
                        || y < 0
                        || x >= s.nx as isize
                        || y >= s.ny as isize
                        || occ.is_occupied(x as usize, y as usize)
                }));
            }
        }
        out
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(40))]
        #[test]
        fn buffer_matches_brute_force(seed in 0u64..10_000, theta in 0.0f64..6.3) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let spec = GridSpec::new(24, 20, 0.05, [0.0, 0.0]).unwrap();
            let cells = (0..spec.len()).map(|_| rng.gen_bool(0.05)).collect();
            let occ = OccupancyGrid::from_cells(spec, cells).unwrap();
            let shape = FootprintShape::Polygon {
                vertices: vec![[-0.2, -0.2], [0.3, -0.1], [0.0, 0.0], [0.3, 0.1], [-0.2, 0.2]],
            };
            let k = rasterize_footprint(&shape, theta, 0.05).unwrap();
            let out = buffer_safe_set(&occ, &k).unwrap();
            prop_assert_eq!(out.cells(), &brute_buffer(&occ, &k)[..]);
        }

        #[test]
        fn buffering_is_monotone(seed in 0u64..10_000) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let spec = GridSpec::new(20, 20, 0.05, [0.0, 0.0]).unwrap();
            let a: Vec<bool> = (0..spec.len()).map(|_| rng.gen_bool(0.05)).collect();
            let b: Vec<bool> = a.iter().map(|v| *v || rng.gen_bool(0.05)).collect();
            let k = Kernel::disk(0.1, 0.05);
            let oa = buffer_safe_set(&OccupancyGrid::from_cells(spec, a).unwrap(), &k).unwrap();
            let ob = buffer_safe_set(&OccupancyGrid::from_cells(spec, b).unwrap(), &k).unwrap();
            prop_assert!(oa.cells().iter().zip(ob.cells()).all(|(x, y)| !*x || *y));
        }
    }
}
