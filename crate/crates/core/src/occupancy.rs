//! Binary occupancy rasters.

use std::io::Read;

use crate::error::{Error, Result};
use crate::grid::GridSpec;

/// Free/occupied raster, `true` = occupied. The outer frame is always occupied.
///
/// A grid may optionally carry a level set sampled at cell centres
/// (positive in free space). When present, the Poisson solver places the
/// obstacle boundary at the sub-cell zero crossing between a free cell and
/// its occupied neighbour instead of at the occupied cell centre.
#[derive(Debug, Clone, PartialEq)]
pub struct OccupancyGrid {
    pub spec: GridSpec,
    cells: Vec<bool>,
    level_set: Option<Vec<f64>>,
}

impl OccupancyGrid {
    /// All interior cells free, border occupied.
    pub fn empty(spec: GridSpec) -> Self {
        let mut g = OccupancyGrid {
            spec,
            cells: vec![false; spec.len()],
            level_set: None,
        };
        g.impose_border();
        g
    }

    /// Builds from raw cells; the border frame is forced to occupied.
    pub fn from_cells(spec: GridSpec, cells: Vec<bool>) -> Result<Self> {
        if cells.len() != spec.len() {
            return Err(Error::InvalidParams(format!(
                "expected {} cells, got {}",
                spec.len(),
                cells.len()
            )));
        }
        let mut g = OccupancyGrid {
            spec,
            cells,
            level_set: None,
        };
        g.impose_border();
        Ok(g)
    }

    /// Occupied where `f(cell centre)` is true.
    pub fn from_fn(spec: GridSpec, mut f: impl FnMut([f64; 2]) -> bool) -> Self {
        let mut cells = Vec::with_capacity(spec.len());
        for iy in 0..spec.ny {
            for ix in 0..spec.nx {
                cells.push(f(spec.cell_center(ix, iy)));
            }
        }
        let mut g = OccupancyGrid {
            spec,
            cells,
            level_set: None,
        };
        g.impose_border();
        g
    }

    /// Occupancy from an implicit boundary: free iff `phi > 0`. Keeps the
    /// sampled `phi` for sub-cell boundary placement.
    pub fn from_level_set(spec: GridSpec, mut phi: impl FnMut([f64; 2]) -> f64) -> Self {
        let mut ls = Vec::with_capacity(spec.len());
        for iy in 0..spec.ny {
            for ix in 0..spec.nx {
                ls.push(phi(spec.cell_center(ix, iy)));
            }
        }
        let cells = ls.iter().map(|v| !(*v > 0.0)).collect();
        let mut g = OccupancyGrid {
            spec,
            cells,
            level_set: Some(ls),
        };
        g.impose_border();
        g
    }

    fn impose_border(&mut self) {
        let (nx, ny) = (self.spec.nx, self.spec.ny);
        for ix in 0..nx {
            self.cells[ix] = true;
            self.cells[(ny - 1) * nx + ix] = true;
        }
        for iy in 0..ny {
            self.cells[iy * nx] = true;
            self.cells[iy * nx + nx - 1] = true;
        }
    }

    #[inline]
    pub fn is_occupied(&self, ix: usize, iy: usize) -> bool {
        self.cells[self.spec.index(ix, iy)]
    }

    #[inline]
    pub fn cells(&self) -> &[bool] {
        &self.cells
    }

    pub fn level_set(&self) -> Option<&[f64]> {
        self.level_set.as_deref()
    }

    /// Sets an interior cell. Border cells stay occupied; any level set is dropped.
    pub fn set(&mut self, ix: usize, iy: usize, occupied: bool) {
        if self.spec.is_border(ix, iy) {
            return;
        }
        let i = self.spec.index(ix, iy);
        self.cells[i] = occupied;
        self.level_set = None;
    }

    pub fn free_count(&self) -> usize {
        self.cells.iter().filter(|c| !**c).count()
    }

    /// Occupancy of the cell nearest to a world point; off-grid counts as occupied.
    pub fn occupied_at(&self, p: [f64; 2]) -> bool {
        match self.spec.cell_of(p) {
            Some((ix, iy)) => self.is_occupied(ix, iy),
            None => true,
        }
    }

    /// Cellwise union with another grid of the same spec; drops any level set.
    pub fn union(&self, other: &OccupancyGrid) -> OccupancyGrid {
        let cells = self.cells.iter().zip(&other.cells).map(|(a, b)| *a || *b).collect();
        OccupancyGrid {
            spec: self.spec,
            cells,
            level_set: None,
        }
    }

    /// Parses a binary PGM (P5, maxval 255): 0 = occupied, 255 = free.
    ///
    /// Image row 0 is the top of the map (largest y).
    pub fn read_pgm<R: Read>(mut r: R, resolution: f64, origin: [f64; 2]) -> Result<Self> {
        let mut data = Vec::new();
        r.read_to_end(&mut data)?;
        let bad = |m: String| Error::Format {
            format: "PGM",
            message: m,
        };
        let mut pos = 0usize;
        let mut header = Vec::new();
        while header.len() < 4 {
            // skip whitespace and comments
            while pos < data.len() && (data[pos].is_ascii_whitespace() || data[pos] == b'#') {
                if data[pos] == b'#' {
                    while pos < data.len() && data[pos] != b'\n' {
                        pos += 1;
                    }
                } else {
                    pos += 1;
                }
            }
            let start = pos;
            while pos < data.len() && !data[pos].is_ascii_whitespace() {
                pos += 1;
            }
            if start == pos {
                return Err(bad("truncated header".into()));
            }
            header.push(String::from_utf8_lossy(&data[start..pos]).into_owned());
        }
        if header[0] != "P5" {
            return Err(bad(format!("expected P5 magic, got {}", header[0])));
        }
        let parse = |s: &str, what: &str| s.parse::<usize>().map_err(|_| bad(format!("bad {what}: {s}")));
        let w = parse(&header[1], "width")?;
        let h = parse(&header[2], "height")?;
        let maxval = parse(&header[3], "maxval")?;
        if maxval != 255 {
            return Err(bad(format!("maxval must be 255, got {maxval}")));
        }
        // exactly one whitespace byte separates the header from the raster
        pos += 1;
        let raster = data
            .get(pos..pos + w * h)
            .ok_or_else(|| bad(format!("expected {} raster bytes", w * h)))?;
        let spec = GridSpec::new(w, h, resolution, origin)?;
        let mut cells = vec![false; w * h];
        for (row, chunk) in raster.chunks_exact(w).enumerate() {
            let iy = h - 1 - row;
            for (ix, v) in chunk.iter().enumerate() {
                cells[iy * w + ix] = match v {
                    0 => true,
                    255 => false,
                    other => {
                        return Err(bad(format!(
                            "pixel ({ix}, {row}) has value {other}; only 0 and 255 allowed"
                        )))
                    }
                };
            }
        }
        OccupancyGrid::from_cells(spec, cells)
    }

    pub fn to_pgm(&self) -> Vec<u8> {
        let (w, h) = (self.spec.nx, self.spec.ny);
        let mut out = format!("P5\n{w} {h}\n255\n").into_bytes();
        for row in 0..h {
            let iy = h - 1 - row;
            for ix in 0..w {
                out.push(if self.is_occupied(ix, iy) { 0 } else { 255 });
            }
        }
        out
    }
}
