//! Per-tick trajectory rows, CSV I/O and run summaries.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogRow {
    pub t: f64,
    pub x: f64,
    pub y: f64,
    pub theta: f64,
    pub v_x: f64,
    pub v_y: f64,
    pub omega: f64,
    /// Safety value at the pose, at the start of the tick.
    pub h_value: f64,
    /// Total DCBF slack of the plan (0 for the one-step filter).
    pub slack: f64,
    pub solve_ms: f64,
    /// 0 on ticks that reuse the previous field.
    pub field_ms: f64,
}

impl LogRow {
    /// The row without its wall-clock columns.
    pub fn without_timing(&self) -> LogRow {
        LogRow {
            solve_ms: 0.0,
            field_ms: 0.0,
            ..*self
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Percentiles {
    pub p50: f64,
    pub p95: f64,
}

impl Percentiles {
    /// Nearest-rank percentiles; zeros for an empty sample.
    pub fn of(samples: impl IntoIterator<Item = f64>) -> Self {
        let mut v: Vec<f64> = samples.into_iter().collect();
        if v.is_empty() {
            return Percentiles::default();
        }
        v.sort_by(f64::total_cmp);
        let rank = |p: f64| v[((p * v.len() as f64).ceil() as usize).clamp(1, v.len()) - 1];
        Percentiles {
            p50: rank(0.5),
            p95: rank(0.95),
        }
    }
}

/// Statistics recoverable from the rows alone.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RowStats {
    pub ticks: usize,
    pub duration: f64,
    pub min_h: f64,
    pub max_slack: f64,
    pub solve_ms: Percentiles,
    /// Over ticks that rebuilt the field.
    pub field_ms: Percentiles,
}

impl RowStats {
    pub fn of(rows: &[LogRow]) -> Self {
        RowStats {
            ticks: rows.len(),
            duration: match (rows.first(), rows.last()) {
                (Some(a), Some(b)) => b.t - a.t,
                _ => 0.0,
            },
            min_h: rows.iter().map(|r| r.h_value).fold(f64::INFINITY, f64::min),
            max_slack: rows.iter().map(|r| r.slack).fold(0.0, f64::max),
            solve_ms: Percentiles::of(rows.iter().map(|r| r.solve_ms)),
            field_ms: Percentiles::of(rows.iter().map(|r| r.field_ms).filter(|&m| m > 0.0)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub stats: RowStats,
    /// First time the final goal was within tolerance.
    pub goal_reached_at: Option<f64>,
    /// The robot stalled for a whole deadlock window before reaching the goal.
    pub deadlock: bool,
    pub deadlock_at: Option<f64>,
    /// Largest heading excursion from the start heading, radians.
    pub max_heading_deviation: f64,
    /// Ticks whose controller or field build failed (the run carried on).
    pub failures: usize,
    /// Ticks with positive logged `h_value` whose true pose collides with the
    /// rendered obstacles.
    pub audit_violations: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryLog {
    pub rows: Vec<LogRow>,
    pub summary: RunSummary,
}

pub fn write_csv<W: Write>(rows: &[LogRow], w: W) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    for r in rows {
        wr.serialize(r)?;
    }
    wr.flush()?;
    Ok(())
}

/// Reads rows and checks that time strictly increases.
pub fn read_csv<R: Read>(r: R) -> Result<Vec<LogRow>> {
    let mut rd = csv::Reader::from_reader(r);
    let rows = rd.deserialize().collect::<Result<Vec<LogRow>, _>>()?;
    if let Some(i) = rows.windows(2).position(|w| !(w[1].t > w[0].t)) {
        return Err(Error::Format {
            format: "trajectory log",
            message: format!("time does not increase at row {}", i + 2),
        });
    }
    Ok(rows)
}

impl TrajectoryLog {
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        write_csv(&self.rows, w)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(t: f64) -> LogRow {
        LogRow {
            t,
            x: 1.0 / 3.0,
            y: -2.5e-17,
            theta: 6.0,
            v_x: 0.1,
            v_y: 0.0,
            omega: -1.5,
            h_value: 0.25,
            slack: 0.0,
            solve_ms: 1.25,
            field_ms: 0.0,
        }
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let rows: Vec<_> = (0..5).map(|k| row(k as f64 * 0.05)).collect();
        let mut buf = Vec::new();
        write_csv(&rows, &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("t,x,y,theta,v_x,v_y,omega,h_value,slack,solve_ms,field_ms\n"));
        assert_eq!(read_csv(&buf[..]).unwrap(), rows);
    }

    #[test]
    fn non_increasing_time_rejected() {
        let rows = vec![row(0.0), row(0.1), row(0.1)];
        let mut buf = Vec::new();
        write_csv(&rows, &mut buf).unwrap();
        assert!(matches!(read_csv(&buf[..]), Err(Error::Format { .. })));
    }

    #[test]
    fn percentiles_nearest_rank() {
        let p = Percentiles::of((1..=20).map(f64::from));
        assert_eq!((p.p50, p.p95), (10.0, 19.0));
        assert_eq!(Percentiles::of([3.0]), Percentiles { p50: 3.0, p95: 3.0 });
        assert_eq!(Percentiles::of([]), Percentiles::default());
    }

    #[test]
    fn stats_skip_reused_fields() {
        let mut rows: Vec<_> = (0..4).map(|k| row(k as f64)).collect();
        rows[0].field_ms = 8.0;
        rows[2].field_ms = 4.0;
        rows[3].h_value = -0.5;
        let s = RowStats::of(&rows);
        assert_eq!(s.field_ms, Percentiles { p50: 4.0, p95: 8.0 });
        assert_eq!((s.min_h, s.duration, s.ticks), (-0.5, 3.0, 4));
    }
}
