//! Obstacle motion from consecutive occupancy frames, constant-velocity
//! prediction, and assembly of the lifted safety field.

use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{LiftedSafetyField, ScalarField};
use crate::geometry::{buffer_safe_set, rasterize_footprint_with_margin, FootprintShape, Kernel};
use crate::grid::{GridSpec, LiftedSpec};
use crate::occupancy::OccupancyGrid;
use crate::poisson::{solve_poisson, SolverParams};

/// One connected obstacle component of the current frame.
#[derive(Debug, Clone, PartialEq)]
pub struct ObstacleTrack {
    pub component_id: usize,
    /// World coordinates, meters.
    pub centroid: [f64; 2],
    /// m/s.
    pub velocity: [f64; 2],
    pub cell_count: usize,
    /// Grid indices of the component's cells in the current frame.
    pub cells: Vec<usize>,
}

impl ObstacleTrack {
    pub fn is_static(&self) -> bool {
        self.velocity == [0.0, 0.0]
    }
}

struct Component {
    cells: Vec<usize>,
    centroid: [f64; 2],
}

/// 4-connected components of the occupied cells, border frame excluded.
/// Labelled in raster order of their first cell.
fn components(occ: &OccupancyGrid) -> Vec<Component> {
    let spec = occ.spec;
    let nx = spec.nx;
    let mut seen = vec![false; spec.len()];
    let mut out = Vec::new();
    let mut stack = Vec::new();
    for iy in 1..spec.ny - 1 {
        for ix in 1..nx - 1 {
            let start = iy * nx + ix;
            if seen[start] || !occ.cells()[start] {
                continue;
            }
            seen[start] = true;
            stack.push(start);
            let mut cells = Vec::new();
            while let Some(i) = stack.pop() {
                cells.push(i);
                for n in [i - 1, i + 1, i - nx, i + nx] {
                    let (x, y) = spec.coords(n);
                    if !seen[n] && occ.cells()[n] && !spec.is_border(x, y) {
                        seen[n] = true;
                        stack.push(n);
                    }
                }
            }
            cells.sort_unstable();
            let mut c = [0.0, 0.0];
            for &i in &cells {
                let (x, y) = spec.coords(i);
                let p = spec.cell_center(x, y);
                c[0] += p[0];
                c[1] += p[1];
            }
            let n = cells.len() as f64;
            out.push(Component {
                cells,
                centroid: [c[0] / n, c[1] / n],
            });
        }
    }
    out
}

/// Tracks for the components of `cur`, with velocities from nearest-centroid
/// matching against `prev`.
pub fn estimate_velocities(prev: &OccupancyGrid, cur: &OccupancyGrid, dt: f64) -> Result<Vec<ObstacleTrack>> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::InvalidParams(format!("dt must be positive, got {dt}")));
    }
    if prev.spec != cur.spec {
        return Err(Error::InvalidParams("frames have different grids".into()));
    }
    let before = components(prev);
    let now = components(cur);
    let mut pairs = Vec::with_capacity(before.len() * now.len());
    for (a, pa) in before.iter().enumerate() {
        for (b, cb) in now.iter().enumerate() {
            let d = (cb.centroid[0] - pa.centroid[0]).hypot(cb.centroid[1] - pa.centroid[1]);
            pairs.push((d, a, b));
        }
    }
    pairs.sort_by(|x, y| x.0.total_cmp(&y.0).then(x.1.cmp(&y.1)).then(x.2.cmp(&y.2)));
    let mut used_prev = vec![false; before.len()];
    let mut matched = vec![None; now.len()];
    for (_, a, b) in pairs {
        if !used_prev[a] && matched[b].is_none() {
            used_prev[a] = true;
            matched[b] = Some(a);
        }
    }
    let half_cell = cur.spec.resolution / 2.0;
    Ok(now
        .into_iter()
        .enumerate()
        .map(|(b, comp)| {
            let velocity = match matched[b] {
                Some(a) => {
                    let d = [
                        comp.centroid[0] - before[a].centroid[0],
                        comp.centroid[1] - before[a].centroid[1],
                    ];
                    if d[0].hypot(d[1]) < half_cell {
                        [0.0, 0.0]
                    } else {
                        [d[0] / dt, d[1] / dt]
                    }
                }
                None => [0.0, 0.0],
            };
            ObstacleTrack {
                component_id: b,
                centroid: comp.centroid,
                velocity,
                cell_count: comp.cells.len(),
                cells: comp.cells,
            }
        })
        .collect())
}

/// Occupancy at `tau` seconds ahead with every track translated by a whole
/// number of cells, `round(v * tau / resolution)`.
pub fn predict_occupancy(cur: &OccupancyGrid, tracks: &[ObstacleTrack], tau: f64) -> Result<OccupancyGrid> {
    if !(tau >= 0.0) {
        return Err(Error::InvalidParams(format!("tau must be non-negative, got {tau}")));
    }
    if tau == 0.0 || tracks.iter().all(ObstacleTrack::is_static) {
        return Ok(cur.clone());
    }
    let spec = cur.spec;
    let mut cells = cur.cells().to_vec();
    for t in tracks.iter().filter(|t| !t.is_static()) {
        for &i in &t.cells {
            cells[i] = false;
        }
    }
    for t in tracks.iter().filter(|t| !t.is_static()) {
        let sx = (t.velocity[0] * tau / spec.resolution).round() as isize;
        let sy = (t.velocity[1] * tau / spec.resolution).round() as isize;
        for &i in &t.cells {
            let (x, y) = spec.coords(i);
            let (x, y) = (x as isize + sx, y as isize + sy);
            if x >= 0 && y >= 0 && (x as usize) < spec.nx && (y as usize) < spec.ny {
                cells[spec.index(x as usize, y as usize)] = true;
            }
        }
    }
    OccupancyGrid::from_cells(spec, cells)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LiftedBuildParams {
    pub n_theta: usize,
    pub n_t: usize,
    /// Seconds between time slices.
    pub dt_field: f64,
    pub footprint: FootprintShape,
    #[serde(default)]
    pub solver: SolverParams,
    /// Extra max-norm dilation of the footprint, in cells. With one cell a
    /// positive interpolated value between nodes of a heading slice implies
    /// the pose is collision-free, not just the nodes.
    #[serde(default)]
    pub margin_cells: usize,
}

impl LiftedBuildParams {
    pub fn lifted_spec(&self, grid: GridSpec) -> Result<LiftedSpec> {
        LiftedSpec::new(grid, self.n_theta, self.n_t, self.dt_field)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct BuildReport {
    /// Largest final residual over all slices.
    pub worst_residual: f64,
    pub total_iterations: usize,
    pub max_iterations: usize,
    /// `(j, k)` of slices that hit the iteration cap.
    pub not_converged: Vec<(usize, usize)>,
    /// Seconds.
    pub wall_time: f64,
    /// True when the previous field was reused unchanged.
    pub cached: bool,
}

impl BuildReport {
    pub fn converged(&self) -> bool {
        self.not_converged.is_empty()
    }
}

/// Builds every `(heading, time)` slice: predict, buffer by the footprint at
/// that heading, solve. Slices are solved in parallel and assembled in a fixed
/// order, so the result does not depend on scheduling.
pub fn build_lifted_field(
    cur: &OccupancyGrid,
    tracks: &[ObstacleTrack],
    params: &LiftedBuildParams,
    t0: f64,
    warm: Option<&LiftedSafetyField>,
) -> Result<(LiftedSafetyField, BuildReport)> {
    let kernels = heading_kernels(params, cur.spec.resolution)?;
    build_with_kernels(cur, tracks, params, &kernels, t0, warm)
}

fn heading_kernels(params: &LiftedBuildParams, resolution: f64) -> Result<Vec<Kernel>> {
    if params.n_theta == 0 {
        return Err(Error::InvalidParams("n_theta must be at least 1".into()));
    }
    let step = std::f64::consts::TAU / params.n_theta as f64;
    (0..params.n_theta)
        .map(|j| {
            let margin = params.margin_cells as f64 * resolution;
            rasterize_footprint_with_margin(&params.footprint, j as f64 * step, resolution, margin)
        })
        .collect()
}

fn build_with_kernels(
    cur: &OccupancyGrid,
    tracks: &[ObstacleTrack],
    params: &LiftedBuildParams,
    kernels: &[Kernel],
    t0: f64,
    warm: Option<&LiftedSafetyField>,
) -> Result<(LiftedSafetyField, BuildReport)> {
    let start = Instant::now();
    let spec = params.lifted_spec(cur.spec)?;
    params.solver.validate()?;
    let warm = warm.filter(|w| w.spec == spec);
    let predicted: Vec<OccupancyGrid> = (0..spec.n_t)
        .map(|k| predict_occupancy(cur, tracks, k as f64 * spec.dt_field))
        .collect::<Result<_>>()?;
    let jobs: Vec<(usize, usize)> = (0..spec.n_t)
        .flat_map(|k| (0..spec.n_theta).map(move |j| (j, k)))
        .collect();
    let solved: Vec<(ScalarField, crate::poisson::SolveReport)> = jobs
        .par_iter()
        .map(|&(j, k)| {
            let occ = buffer_safe_set(&predicted[k], &kernels[j])?;
            let warm_slice = warm.map(|w| w.scalar_slice(j, k));
            solve_poisson(&occ, &params.solver, warm_slice.as_ref())
        })
        .collect::<Result<_>>()?;
    let mut report = BuildReport::default();
    let mut slices = Vec::with_capacity(solved.len());
    for (&(j, k), (field, r)) in jobs.iter().zip(solved) {
        report.worst_residual = report.worst_residual.max(r.final_residual);
        report.total_iterations += r.iterations;
        report.max_iterations = report.max_iterations.max(r.iterations);
        if !r.converged {
            report.not_converged.push((j, k));
        }
        slices.push(field);
    }
    let field = LiftedSafetyField::from_slices(spec, t0, slices)?;
    report.wall_time = start.elapsed().as_secs_f64();
    Ok((field, report))
}

/// Stateful field builder for a stream of frames: keeps the per-heading
/// kernels, warm-starts each slice from the previous frame, and reuses the
/// previous field outright when nothing moves and the occupancy is unchanged.
#[derive(Debug, Clone)]
pub struct FieldBuilder {
    params: LiftedBuildParams,
    resolution: f64,
    kernels: Vec<Kernel>,
    last: Option<Previous>,
}

#[derive(Debug, Clone)]
struct Previous {
    occ: OccupancyGrid,
    field: LiftedSafetyField,
    // built from a scene with no moving obstacles
    static_scene: bool,
}

impl FieldBuilder {
    pub fn new(params: LiftedBuildParams, resolution: f64) -> Result<Self> {
        params.solver.validate()?;
        let kernels = heading_kernels(&params, resolution)?;
        Ok(FieldBuilder {
            params,
            resolution,
            kernels,
            last: None,
        })
    }

    pub fn params(&self) -> &LiftedBuildParams {
        &self.params
    }

    pub fn kernels(&self) -> &[Kernel] {
        &self.kernels
    }

    /// Drops the warm start and cache.
    pub fn reset(&mut self) {
        self.last = None;
    }

    pub fn build(
        &mut self,
        cur: &OccupancyGrid,
        tracks: &[ObstacleTrack],
        t0: f64,
    ) -> Result<(LiftedSafetyField, BuildReport)> {
        if (cur.spec.resolution - self.resolution).abs() > 1e-12 * self.resolution {
            return Err(Error::InvalidParams("grid resolution changed".into()));
        }
        let static_scene = tracks.iter().all(ObstacleTrack::is_static);
        if let Some(prev) = &self.last {
            if prev.static_scene && static_scene && prev.occ.spec == cur.spec && prev.occ.cells() == cur.cells() {
                let field = prev.field.clone().with_t0(t0);
                let report = BuildReport {
                    cached: true,
                    ..BuildReport::default()
                };
                return Ok((field, report));
            }
        }
        let warm = self.last.as_ref().map(|l| &l.field);
        let (field, report) = build_with_kernels(cur, tracks, &self.params, &self.kernels, t0, warm)?;
        self.last = Some(Previous {
            occ: cur.clone(),
            field: field.clone(),
            static_scene,
        });
        Ok((field, report))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::rasterize_footprint;
    use crate::poisson::ExteriorMode;

    fn spec() -> GridSpec {
        GridSpec::new(30, 20, 0.1, [0.0, 0.0]).unwrap()
    }

    fn blob(spec: GridSpec, cx: f64, cy: f64) -> OccupancyGrid {
        OccupancyGrid::from_fn(spec, |p| (p[0] - cx).abs() < 0.16 && (p[1] - cy).abs() < 0.16)
    }

    #[test]
    fn static_scene_has_zero_velocity() {
        let occ = blob(spec(), 1.0, 1.0).union(&blob(spec(), 2.2, 0.6));
        let tracks = estimate_velocities(&occ, &occ, 0.1).unwrap();
        assert_eq!(tracks.len(), 2);
        assert!(tracks.iter().all(ObstacleTrack::is_static));
    }

    #[test]
    fn translated_blob_velocity() {
        let prev = blob(spec(), 1.0, 1.0);
        let cur = blob(spec(), 1.3, 1.0);
        let tracks = estimate_velocities(&prev, &cur, 0.1).unwrap();
        assert_eq!(tracks.len(), 1);
        assert!((tracks[0].velocity[0] - 3.0).abs() < 1e-9);
        assert!(tracks[0].velocity[1].abs() < 1e-9);
        assert_eq!(tracks[0].cell_count, 9);
    }

    #[test]
    fn new_blob_is_static() {
        let prev = blob(spec(), 1.0, 1.0);
        let cur = prev.union(&blob(spec(), 2.2, 1.0));
        let tracks = estimate_velocities(&prev, &cur, 0.1).unwrap();
        assert_eq!(tracks.len(), 2);
        assert!(tracks.iter().all(ObstacleTrack::is_static));
        let empty = OccupancyGrid::empty(spec());
        assert!(estimate_velocities(&empty, &empty, 0.1).unwrap().is_empty());
    }

    #[test]
    fn prediction_shifts_whole_cells() {
        let cur = blob(spec(), 1.0, 1.0);
        let mut tracks = estimate_velocities(&cur, &cur, 0.1).unwrap();
        assert_eq!(predict_occupancy(&cur, &tracks, 0.7).unwrap(), cur);
        tracks[0].velocity = [1.0, 0.0];
        assert_eq!(predict_occupancy(&cur, &tracks, 0.0).unwrap(), cur);
        let moved = predict_occupancy(&cur, &tracks, 0.5).unwrap();
        assert_eq!(moved.cells(), blob(spec(), 1.5, 1.0).cells());
        // far enough to leave the grid entirely
        let gone = predict_occupancy(&cur, &tracks, 10.0).unwrap();
        assert_eq!(gone.cells(), OccupancyGrid::empty(spec()).cells());
    }

    fn params(footprint: FootprintShape, n_theta: usize, n_t: usize) -> LiftedBuildParams {
        LiftedBuildParams {
            n_theta,
            n_t,
            dt_field: 0.2,
            footprint,
            solver: SolverParams {
                tol: 1e-7,
                ..SolverParams::default()
            },
            margin_cells: 0,
        }
    }

    #[test]
    fn margin_makes_positive_values_sound_between_nodes() {
        use crate::geometry::collision_check;
        use rand::{Rng, SeedableRng};
        let occ = blob(spec(), 1.0, 1.0).union(&blob(spec(), 2.0, 1.3));
        let mut p = params(FootprintShape::rectangle(0.5, 0.16), 4, 1);
        p.solver.tol = 1e-5;
        let (plain, _) = build_lifted_field(&occ, &[], &p, 0.0, None).unwrap();
        p.margin_cells = 1;
        let (padded, _) = build_lifted_field(&occ, &[], &p, 0.0, None).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let (mut unsound_plain, mut positive) = (0, 0);
        for _ in 0..20000 {
            let q = [rng.gen_range(0.0..2.9), rng.gen_range(0.0..1.9)];
            let theta = padded.spec.heading(rng.gen_range(0..4));
            let hit = collision_check(&occ, &p.footprint, [q[0], q[1], theta]).unwrap();
            if padded.sample(q, theta, 0.0).unwrap() > 0.0 {
                positive += 1;
                assert!(!hit, "collision at positive padded value, pose {q:?} {theta}");
            }
            if plain.sample(q, theta, 0.0).unwrap() > 0.0 && hit {
                unsound_plain += 1;
            }
        }
        assert!(positive > 1000);
        // without the margin, poses between the last free node and the
        // boundary ring do collide
        assert!(unsound_plain > 0);
    }

    #[test]
    fn static_scene_slices_identical_in_time() {
        let occ = blob(spec(), 1.0, 1.0);
        let tracks = estimate_velocities(&occ, &occ, 0.1).unwrap();
        let p = params(FootprintShape::rectangle(0.3, 0.1), 4, 3);
        let (f, report) = build_lifted_field(&occ, &tracks, &p, 0.0, None).unwrap();
        assert!(report.converged());
        for j in 0..4 {
            assert_eq!(f.slice(j, 0), f.slice(j, 1));
            assert_eq!(f.slice(j, 0), f.slice(j, 2));
        }
        assert_ne!(f.slice(0, 0), f.slice(1, 0));
    }

    #[test]
    fn disk_footprint_slices_identical_in_heading() {
        let occ = blob(spec(), 1.0, 1.0);
        let p = params(FootprintShape::Ellipse { a: 0.2, b: 0.2 }, 8, 1);
        let (f, _) = build_lifted_field(&occ, &[], &p, 0.0, None).unwrap();
        for j in 1..8 {
            assert_eq!(f.slice(j, 0), f.slice(0, 0));
        }
    }

    #[test]
    fn moving_blob_slice_matches_preshifted_solve() {
        let prev = blob(spec(), 0.8, 1.0);
        let cur = blob(spec(), 1.0, 1.0);
        let tracks = estimate_velocities(&prev, &cur, 0.2).unwrap();
        assert!((tracks[0].velocity[0] - 1.0).abs() < 1e-9);
        let point = FootprintShape::Ellipse { a: 0.01, b: 0.01 };
        let p = params(point, 1, 2);
        let (f, _) = build_lifted_field(&cur, &tracks, &p, 0.0, None).unwrap();
        // v * dt_field = 0.2 m = 2 cells
        let shifted = blob(spec(), 1.2, 1.0);
        let (direct, _) = solve_poisson(&shifted, &p.solver, None).unwrap();
        let diff = f
            .slice(0, 1)
            .iter()
            .zip(&direct.values)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        assert!(diff <= p.solver.tol * 0.01, "{diff}");
    }

    #[test]
    fn static_world_reduces_to_single_solve() {
        let occ = blob(spec(), 1.0, 1.0);
        let shape = FootprintShape::rectangle(0.3, 0.1);
        let p = params(shape.clone(), 1, 1);
        let (f, _) = build_lifted_field(&occ, &[], &p, 0.0, None).unwrap();
        let k = rasterize_footprint(&shape, 0.0, 0.1).unwrap();
        let (direct, _) = solve_poisson(&buffer_safe_set(&occ, &k).unwrap(), &p.solver, None).unwrap();
        assert_eq!(f.slice(0, 0), &direct.values[..]);
    }

    #[test]
    fn boundary_condition_on_buffered_cells() {
        let occ = blob(spec(), 1.0, 1.0).union(&blob(spec(), 2.0, 1.3));
        let mut p = params(FootprintShape::rectangle(0.3, 0.1), 4, 1);
        p.solver.exterior_mode = ExteriorMode::Zero;
        let (f, _) = build_lifted_field(&occ, &[], &p, 0.0, None).unwrap();
        for j in 0..4 {
            let k = rasterize_footprint(&p.footprint, f.spec.heading(j), 0.1).unwrap();
            let buffered = buffer_safe_set(&occ, &k).unwrap();
            for (i, o) in buffered.cells().iter().enumerate() {
                if *o {
                    assert!(f.slice(j, 0)[i].abs() <= p.solver.tol);
                }
            }
        }
    }

    #[test]
    fn builder_caches_static_frames_and_warm_starts() {
        let big = GridSpec::new(64, 64, 0.05, [0.0, 0.0]).unwrap();
        let occ = blob(big, 1.0, 1.0);
        let p = params(FootprintShape::rectangle(0.3, 0.1), 4, 2);
        let mut b = FieldBuilder::new(p, 0.05).unwrap();
        let (f0, r0) = b.build(&occ, &[], 0.0).unwrap();
        assert!(!r0.cached && r0.total_iterations > 0);
        let (f1, r1) = b.build(&occ, &[], 0.1).unwrap();
        assert!(r1.cached);
        assert_eq!(f1.values(), f0.values());
        assert_eq!(f1.t0, 0.1);
        // a small change re-solves from the warm start, in fewer iterations
        let moved = blob(big, 1.05, 1.0);
        let (_, r2) = b.build(&moved, &[], 0.2).unwrap();
        assert!(!r2.cached);
        assert!(
            r2.total_iterations < r0.total_iterations,
            "{} vs {}",
            r2.total_iterations,
            r0.total_iterations
        );
    }
}
