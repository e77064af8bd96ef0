//! Cross-module invariants checked against brute-force references.

use std::f64::consts::TAU;

use proptest::prelude::*;
use psf_core::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_occupancy(spec: GridSpec, density: f64, seed: u64) -> OccupancyGrid {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cells = (0..spec.len()).map(|_| rng.gen_bool(density)).collect();
    OccupancyGrid::from_cells(spec, cells).unwrap()
}

// Euclidean distance between a convex polygon and a closed axis-aligned square.
fn polygon_square_distance(poly: &[[f64; 2]], c: [f64; 2], half: f64) -> f64 {
    let seg = |p: [f64; 2], a: [f64; 2], b: [f64; 2]| {
        let (dx, dy) = (b[0] - a[0], b[1] - a[1]);
        let t = (((p[0] - a[0]) * dx + (p[1] - a[1]) * dy) / (dx * dx + dy * dy)).clamp(0.0, 1.0);
        (p[0] - a[0] - t * dx).hypot(p[1] - a[1] - t * dy)
    };
    let square = [
        [c[0] - half, c[1] - half],
        [c[0] + half, c[1] - half],
        [c[0] + half, c[1] + half],
        [c[0] - half, c[1] + half],
    ];
    let to_square = |p: [f64; 2]| {
        let dx = ((p[0] - c[0]).abs() - half).max(0.0);
        let dy = ((p[1] - c[1]).abs() - half).max(0.0);
        dx.hypot(dy)
    };
    let mut d = poly.iter().map(|p| to_square(*p)).fold(f64::INFINITY, f64::min);
    for i in 0..poly.len() {
        let (a, b) = (poly[i], poly[(i + 1) % poly.len()]);
        for q in square {
            d = d.min(seg(q, a, b));
        }
    }
    // overlap: a square corner inside the polygon, or the polygon inside the square
    let inside_poly = |q: [f64; 2]| {
        let s: Vec<f64> = (0..poly.len())
            .map(|i| {
                let (a, b) = (poly[i], poly[(i + 1) % poly.len()]);
                (b[0] - a[0]) * (q[1] - a[1]) - (b[1] - a[1]) * (q[0] - a[0])
            })
            .collect();
        s.iter().all(|v| *v >= 0.0) || s.iter().all(|v| *v <= 0.0)
    };
    if square.iter().any(|q| inside_poly(*q)) || poly.iter().any(|p| to_square(*p) == 0.0) {
        return 0.0;
    }
    d
}

fn posed_rectangle(length: f64, width: f64, pose: [f64; 3]) -> Vec<[f64; 2]> {
    let (s, c) = pose[2].sin_cos();
    [[0.5, 0.5], [-0.5, 0.5], [-0.5, -0.5], [0.5, -0.5]]
        .iter()
        .map(|[u, v]| {
            let (x, y) = (u * length, v * width);
            [pose[0] + c * x - s * y, pose[1] + s * x + c * y]
        })
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    // Every buffered-occupied pose is within 1.5 cells of a pose that truly
    // collides: the footprint there comes that close to an occupied cell or
    // to the grid edge.
    #[test]
    fn buffering_is_at_most_one_and_a_half_cells_conservative(
        seed in 0u64..1000,
        theta in 0.0f64..TAU,
        length in 0.15f64..0.6,
        width in 0.08f64..0.3,
    ) {
        let spec = GridSpec::new(40, 40, 0.05, [0.0, 0.0]).unwrap();
        let occ = random_occupancy(spec, 0.03, seed);
        let shape = FootprintShape::rectangle(length, width);
        let buffered = buffer_safe_set(&occ, &rasterize_footprint(&shape, theta, spec.resolution).unwrap()).unwrap();
        let (lo, hi) = spec.extent();
        let half = spec.resolution / 2.0;
        let bound = 1.5 * spec.resolution + 1e-12;
        for iy in 0..spec.ny {
            for ix in 0..spec.nx {
                if !buffered.is_occupied(ix, iy) {
                    continue;
                }
                let c = spec.cell_center(ix, iy);
                let poly = posed_rectangle(length, width, [c[0], c[1], theta]);
                let edge = poly
                    .iter()
                    .map(|p| (p[0] - lo[0]).min(hi[0] - p[0]).min(p[1] - lo[1]).min(hi[1] - p[1]).max(0.0))
                    .fold(f64::INFINITY, f64::min);
                let obstacle = (0..spec.len())
                    .filter(|&i| occ.cells()[i])
                    .map(|i| {
                        let (ox, oy) = spec.coords(i);
                        polygon_square_distance(&poly, spec.cell_center(ox, oy), half)
                    })
                    .fold(f64::INFINITY, f64::min);
                prop_assert!(edge.min(obstacle) <= bound, "cell ({ix}, {iy}) is {:.4} m from any collision", edge.min(obstacle));
            }
        }
    }

    // A disk kernel buffers exactly the cells whose centre lies within
    // r + resolution/2 of an occupied centre (cells beyond the edge count as occupied).
    #[test]
    fn disk_buffer_thresholds_the_distance_transform(seed in 0u64..1000, radius in 0.0f64..0.3) {
        let spec = GridSpec::new(32, 28, 0.05, [0.0, 0.0]).unwrap();
        let occ = random_occupancy(spec, 0.04, seed);
        let buffered = buffer_safe_set(&occ, &Kernel::disk(radius, spec.resolution)).unwrap();
        let (nx, ny) = (spec.nx as isize, spec.ny as isize);
        let reach = radius + spec.resolution / 2.0;
        for iy in 0..ny {
            for ix in 0..nx {
                let mut d2 = f64::INFINITY;
                for oy in -1..=ny {
                    for ox in -1..=nx {
                        let outside = ox < 0 || oy < 0 || ox >= nx || oy >= ny;
                        if outside || occ.is_occupied(ox as usize, oy as usize) {
                            d2 = d2.min(((ox - ix).pow(2) + (oy - iy).pow(2)) as f64);
                        }
                    }
                }
                let near = d2.sqrt() * spec.resolution <= reach + 1e-9;
                prop_assert_eq!(buffered.is_occupied(ix as usize, iy as usize), near, "cell ({}, {})", ix, iy);
            }
        }
    }

    // Shifting an enclosed scene by whole cells shifts its solution.
    #[test]
    fn solve_commutes_with_whole_cell_shifts(seed in 0u64..1000, sx in -4isize..=4, sy in -4isize..=4) {
        let spec = GridSpec::new(48, 48, 0.05, [0.0, 0.0]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        // walled room occupying cells 8..40, with random pillars
        let inner: Vec<bool> = (0..32 * 32).map(|_| rng.gen_bool(0.05)).collect();
        let scene = |dx: isize, dy: isize| {
            let mut cells = vec![false; spec.len()];
            for iy in 0..48isize {
                for ix in 0..48isize {
                    let (u, v) = (ix - 8 - dx, iy - 8 - dy);
                    let wall = !(0..32).contains(&u) || !(0..32).contains(&v) || u == 0 || v == 0 || u == 31 || v == 31;
                    cells[(iy * 48 + ix) as usize] = wall || inner[(v * 32 + u) as usize];
                }
            }
            OccupancyGrid::from_cells(spec, cells).unwrap()
        };
        let params = SolverParams { tol: 1e-11, max_iters: 200_000, ..SolverParams::default() };
        let (a, ra) = solve_poisson(&scene(0, 0), &params, None).unwrap();
        let (b, rb) = solve_poisson(&scene(sx, sy), &params, None).unwrap();
        prop_assert!(ra.converged && rb.converged);
        let bound = 1e-6 * spec.resolution * spec.resolution;
        for v in 1..31isize {
            for u in 1..31isize {
                let (x, y) = ((u + 8) as usize, (v + 8) as usize);
                let (xs, ys) = ((u + 8 + sx) as usize, (v + 8 + sy) as usize);
                prop_assert!((a.get(x, y) - b.get(xs, ys)).abs() <= bound, "({u}, {v})");
            }
        }
    }
}

#[test]
fn slices_do_not_depend_on_solve_order() {
    let spec = GridSpec::new(40, 36, 0.05, [0.0, 0.0]).unwrap();
    let occ = random_occupancy(spec, 0.03, 11);
    let cells = vec![10 * 40 + 10, 11 * 40 + 10];
    let track = ObstacleTrack {
        component_id: 0,
        centroid: spec.cell_center(10, 10),
        velocity: [0.3, -0.2],
        cell_count: 2,
        cells,
    };
    let tracks = [track];
    let params = LiftedBuildParams {
        n_theta: 8,
        n_t: 3,
        dt_field: 0.1,
        footprint: FootprintShape::rectangle(0.3, 0.12),
        solver: SolverParams {
            max_iters: 150,
            tol: 1e-12,
            ..SolverParams::default()
        },
        margin_cells: 1,
    };
    let pool = |threads| rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
    let serial = pool(1).install(|| build_lifted_field(&occ, &tracks, &params, 0.0, None).unwrap().0);
    let parallel = pool(4).install(|| build_lifted_field(&occ, &tracks, &params, 0.0, None).unwrap().0);
    let step = TAU / params.n_theta as f64;
    // each slice solved on its own, last slice first
    for k in (0..params.n_t).rev() {
        let predicted = predict_occupancy(&occ, &tracks, k as f64 * params.dt_field).unwrap();
        for j in (0..params.n_theta).rev() {
            let kernel =
                rasterize_footprint_with_margin(&params.footprint, j as f64 * step, spec.resolution, spec.resolution)
                    .unwrap();
            let (alone, _) =
                solve_poisson(&buffer_safe_set(&predicted, &kernel).unwrap(), &params.solver, None).unwrap();
            assert_eq!(serial.slice(j, k), &alone.values[..], "slice ({j}, {k})");
            assert_eq!(parallel.slice(j, k), &alone.values[..], "slice ({j}, {k})");
        }
    }
}

#[test]
fn over_relaxation_beats_gauss_seidel_on_the_disk() {
    let spec = GridSpec::new(129, 129, 0.02, [-1.28, -1.28]).unwrap();
    let occ = OccupancyGrid::from_level_set(spec, |p| 1.0 - p[0].hypot(p[1]));
    let iterations = |relax| {
        let params = SolverParams {
            relax,
            max_iters: 1_000_000,
            ..SolverParams::default()
        };
        let (_, rep) = solve_poisson(&occ, &params, None).unwrap();
        assert!(rep.converged);
        rep.iterations
    };
    let (sor, gs) = (iterations(1.9), iterations(1.0));
    assert!(sor < gs, "SOR {sor} vs Gauss-Seidel {gs}");
}

fn static_scene(seed: u64) -> (LiftedSafetyField, ChaCha8Rng) {
    let spec = GridSpec::new(60, 60, 0.05, [0.0, 0.0]).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut occ = OccupancyGrid::empty(spec);
    for _ in 0..4 {
        let (cx, cy, r) = (rng.gen_range(5..55), rng.gen_range(5..55), rng.gen_range(1..4) as isize);
        for dy in -r..=r {
            for dx in -r..=r {
                let (x, y) = (cx as isize + dx, cy as isize + dy);
                if (0..60).contains(&x) && (0..60).contains(&y) {
                    occ.set(x as usize, y as usize, true);
                }
            }
        }
    }
    let params = LiftedBuildParams {
        n_theta: 16,
        n_t: 1,
        dt_field: 0.1,
        footprint: FootprintShape::rectangle(0.4, 0.16),
        solver: SolverParams {
            tol: 1e-5,
            ..SolverParams::default()
        },
        margin_cells: 1,
    };
    (build_lifted_field(&occ, &[], &params, 0.0, None).unwrap().0, rng)
}

fn safe_pose(field: &LiftedSafetyField, rng: &mut ChaCha8Rng) -> RobotState {
    loop {
        let s = RobotState::new(
            rng.gen_range(0.3..2.7),
            rng.gen_range(0.3..2.7),
            rng.gen_range(0.0..TAU),
        );
        if field.sample(s.position(), s.theta, 0.0).unwrap() > 0.05 {
            return s;
        }
    }
}

#[test]
fn converged_plans_keep_the_decay_condition_at_every_knot() {
    let params = MpcParams {
        sqp_iters: 10,
        ..MpcParams::default()
    };
    let mut checked = 0;
    for seed in 0..30 {
        let (field, mut rng) = static_scene(seed);
        let start = safe_pose(&field, &mut rng);
        let goal = safe_pose(&field, &mut rng);
        let sol = solve_mpc(&start, &goal, &field, 0.0, &params, None).unwrap();
        if sol.status != MpcStatus::OptimalTolerance || sol.slack_total != 0.0 {
            continue;
        }
        checked += 1;
        let h: Vec<f64> = sol
            .states
            .iter()
            .map(|s| field.sample(s.position(), s.theta, 0.0).unwrap())
            .collect();
        for i in 0..params.horizon {
            let gap = params.rho * h[i] - h[i + 1];
            assert!(
                gap <= 1e-3 * h[i].abs().max(h[i + 1].abs()),
                "seed {seed} knot {i}: gap {gap:e}"
            );
        }
    }
    assert!(checked >= 10, "only {checked} converged plans");
}

#[test]
fn shifted_warm_start_is_never_made_worse() {
    // open room: the decay constraints stay inactive
    let spec = GridSpec::new(80, 80, 0.05, [0.0, 0.0]).unwrap();
    let params = LiftedBuildParams {
        n_theta: 16,
        n_t: 1,
        dt_field: 0.1,
        footprint: FootprintShape::rectangle(0.4, 0.16),
        solver: SolverParams {
            tol: 1e-5,
            ..SolverParams::default()
        },
        margin_cells: 1,
    };
    let field = build_lifted_field(&OccupancyGrid::empty(spec), &[], &params, 0.0, None)
        .unwrap()
        .0;
    let mpc = MpcParams::default();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..20 {
        let start = RobotState::new(
            rng.gen_range(1.6..2.4),
            rng.gen_range(1.6..2.4),
            rng.gen_range(-3.0..3.0),
        );
        let goal = RobotState::new(
            rng.gen_range(1.6..2.4),
            rng.gen_range(1.6..2.4),
            rng.gen_range(-3.0..3.0),
        );
        let first = solve_mpc(&start, &goal, &field, 0.0, &mpc, None).unwrap();
        let next_state = first.states[1];
        let warm = first.shifted_inputs();
        let warm_cost = plan_cost(&goal, &rollout(&next_state, &warm, mpc.dt), &warm, &mpc);
        let second = solve_mpc(&next_state, &goal, &field, mpc.dt, &mpc, Some(&warm)).unwrap();
        assert!(second.slack_total == 0.0);
        assert!(second.cost <= warm_cost + 1e-9, "{} > {}", second.cost, warm_cost);
    }
}
