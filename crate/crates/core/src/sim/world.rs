//! Ground-truth world: the robot, scripted obstacles, and their rendering to
//! an occupancy grid.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::geometry::FootprintShape;
use crate::grid::GridSpec;
use crate::occupancy::OccupancyGrid;
use crate::robot::{ControlInput, RobotState};

use super::config::ObstacleSpec;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Obstacle {
    pub shape: FootprintShape,
    pub pose: [f64; 3],
    pub velocity: [f64; 2],
    pub spawn_time: f64,
}

impl Obstacle {
    pub fn is_active(&self, t: f64) -> bool {
        t >= self.spawn_time
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct World {
    pub t: f64,
    pub robot: RobotState,
    pub obstacles: Vec<Obstacle>,
    pub grid: GridSpec,
}

impl World {
    pub fn new(grid: GridSpec, robot: RobotState) -> Self {
        World {
            t: 0.0,
            robot,
            obstacles: Vec::new(),
            grid,
        }
    }

    /// Adds configured obstacles, drawing spawn jitter from `rng`.
    pub fn with_obstacles(mut self, specs: &[ObstacleSpec], rng: &mut impl Rng) -> Self {
        for s in specs {
            let mut pose = s.pose;
            if s.spawn_jitter > 0.0 {
                pose[0] += rng.gen_range(-s.spawn_jitter..=s.spawn_jitter);
                pose[1] += rng.gen_range(-s.spawn_jitter..=s.spawn_jitter);
            }
            self.obstacles.push(Obstacle {
                shape: s.shape.clone(),
                pose,
                velocity: s.velocity,
                spawn_time: s.spawn_time,
            });
        }
        self
    }

    /// Advances time by `dt`: Euler step of the robot, constant-velocity
    /// motion of every obstacle for the part of the step it is active.
    pub fn step(&mut self, u: &ControlInput, dt: f64) {
        assert!(dt > 0.0, "step needs dt > 0, got {dt}");
        let t1 = self.t + dt;
        self.robot = self.robot.step(u, dt);
        for o in &mut self.obstacles {
            let moving = t1 - self.t.max(o.spawn_time);
            if moving > 0.0 {
                o.pose[0] += o.velocity[0] * moving;
                o.pose[1] += o.velocity[1] * moving;
            }
        }
        self.t = t1;
    }

    /// Occupancy of the active obstacles: a cell is occupied when its closed
    /// square touches an obstacle.
    pub fn render(&self) -> OccupancyGrid {
        let mut occ = OccupancyGrid::empty(self.grid);
        let g = &self.grid;
        let half = g.resolution / 2.0;
        for o in self.obstacles.iter().filter(|o| o.is_active(self.t)) {
            let r = o.shape.bounding_radius() + g.resolution;
            let lo = g.world_to_grid([o.pose[0] - r, o.pose[1] - r]);
            let hi = g.world_to_grid([o.pose[0] + r, o.pose[1] + r]);
            let span = |a: f64, b: f64, n: usize| {
                let a = (a.floor() as i64).max(0);
                let b = (b.ceil() as i64).min(n as i64 - 1);
                a..=b
            };
            for iy in span(lo[1], hi[1], g.ny) {
                for ix in span(lo[0], hi[0], g.nx) {
                    let (ix, iy) = (ix as usize, iy as usize);
                    if !occ.is_occupied(ix, iy) && o.shape.touches_square(o.pose, g.cell_center(ix, iy), half) {
                        occ.set(ix, iy, true);
                    }
                }
            }
        }
        occ
    }
}

/// Functional form of [`World::step`].
pub fn step_world(world: &World, u: &ControlInput, dt: f64) -> World {
    let mut w = world.clone();
    w.step(u, dt);
    w
}
