//! Grid geometry and the common CSV grid layout.
//!
//! All maps in the system (richness, pheromone, visited, blocked, counts,
//! coverage mask, local belief windows) share one layout: row-major with the
//! row index `j` running over y and the column index `i` over x, exported as
//! CSV with the `j = 0` row first and six decimal places per cell.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum GridError {
    #[error("grid must be at least 3x3 with positive extent, got {0}x{1}")]
    BadSpec(usize, usize),
    #[error("grid CSV is empty")]
    EmptyCsv,
    #[error("grid CSV row {row} has {got} cells, expected {expected}")]
    RaggedCsv { row: usize, got: usize, expected: usize },
    #[error("grid CSV cell ({row},{col}) is not a number: {value:?}")]
    BadCell { row: usize, col: usize, value: String },
}

/// Geometry of a world-aligned grid: cell counts and world extent in meters.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub nx: usize,
    pub ny: usize,
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
}

impl GridSpec {
    /// The 50x50 grid over the [-5, 5] x [-5, 5] arena (0.2 m cells).
    pub fn standard() -> Self {
        GridSpec { nx: 50, ny: 50, x_min: -5.0, x_max: 5.0, y_min: -5.0, y_max: 5.0 }
    }

    pub fn validate(&self) -> Result<(), GridError> {
        if self.nx < 3 || self.ny < 3 || self.x_max <= self.x_min || self.y_max <= self.y_min {
            return Err(GridError::BadSpec(self.nx, self.ny));
        }
        Ok(())
    }

    /// Meters per cell along x.
    pub fn dx(&self) -> f64 {
        (self.x_max - self.x_min) / self.nx as f64
    }

    /// Meters per cell along y.
    pub fn dy(&self) -> f64 {
        (self.y_max - self.y_min) / self.ny as f64
    }

    /// Map a world point to cell indices `(i, j)`, clamping out-of-range
    /// points onto the border cells. Total over all inputs.
    pub fn world_to_grid(&self, x: f64, y: f64) -> (usize, usize) {
        let i = ((x - self.x_min) / self.dx()).floor();
        let j = ((y - self.y_min) / self.dy()).floor();
        let clamp = |v: f64, n: usize| -> usize {
            if v.is_nan() || v < 0.0 {
                0
            } else if v >= n as f64 {
                n - 1
            } else {
                v as usize
            }
        };
        (clamp(i, self.nx), clamp(j, self.ny))
    }

    /// World coordinates of the center of cell `(i, j)`.
    pub fn cell_center(&self, i: usize, j: usize) -> (f64, f64) {
        (
            self.x_min + (i as f64 + 0.5) * self.dx(),
            self.y_min + (j as f64 + 0.5) * self.dy(),
        )
    }
}

/// Dense row-major grid of cells; `j` indexes rows (y), `i` columns (x).
#[derive(Clone, Debug, PartialEq)]
pub struct Grid<T> {
    nx: usize,
    ny: usize,
    data: Vec<T>,
}

impl<T: Clone> Grid<T> {
    pub fn filled(nx: usize, ny: usize, value: T) -> Self {
        Grid { nx, ny, data: vec![value; nx * ny] }
    }
}

impl<T> Grid<T> {
    pub fn nx(&self) -> usize {
        self.nx
    }

    pub fn ny(&self) -> usize {
        self.ny
    }

    #[inline]
    pub fn at(&self, i: usize, j: usize) -> &T {
        debug_assert!(i < self.nx && j < self.ny);
        &self.data[j * self.nx + i]
    }

    #[inline]
    pub fn at_mut(&mut self, i: usize, j: usize) -> &mut T {
        debug_assert!(i < self.nx && j < self.ny);
        &mut self.data[j * self.nx + i]
    }

    /// All cells in row-major order (rows of increasing `j`).
    pub fn cells(&self) -> impl Iterator<Item = &T> {
        self.data.iter()
    }

    pub fn cells_mut(&mut self) -> impl Iterator<Item = &mut T> {
        self.data.iter_mut()
    }
}

/// Cell types that know how to render themselves in the common CSV layout.
pub trait CsvCell {
    fn fmt_cell(&self) -> String;
}

impl CsvCell for f64 {
    fn fmt_cell(&self) -> String {
        format!("{self:.6}")
    }
}

impl CsvCell for bool {
    fn fmt_cell(&self) -> String {
        if *self { "1.000000".into() } else { "0.000000".into() }
    }
}

impl CsvCell for u32 {
    fn fmt_cell(&self) -> String {
        format!("{:.6}", f64::from(*self))
    }
}

impl CsvCell for i32 {
    fn fmt_cell(&self) -> String {
        format!("{:.6}", f64::from(*self))
    }
}

impl<T: CsvCell> Grid<T> {
    /// Render in the standard layout: `ny` lines, `j = 0` first, `nx`
    /// comma-separated cells of six decimal places each.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        for j in 0..self.ny {
            for i in 0..self.nx {
                if i > 0 {
                    out.push(',');
                }
                out.push_str(&self.at(i, j).fmt_cell());
            }
            out.push('\n');
        }
        out
    }
}

/// Parse a grid back from the standard CSV layout. Accepts any rectangular
/// shape so local belief windows load with the same routine.
pub fn parse_grid_csv(text: &str) -> Result<Grid<f64>, GridError> {
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (row, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let mut cells = Vec::new();
        for (col, tok) in line.split(',').enumerate() {
            let v: f64 = tok
                .trim()
                .parse()
                .map_err(|_| GridError::BadCell { row, col, value: tok.trim().to_string() })?;
            cells.push(v);
        }
        if let Some(first) = rows.first() {
            if cells.len() != first.len() {
                return Err(GridError::RaggedCsv { row, got: cells.len(), expected: first.len() });
            }
        }
        rows.push(cells);
    }
    if rows.is_empty() {
        return Err(GridError::EmptyCsv);
    }
    let nx = rows[0].len();
    let ny = rows.len();
    Ok(Grid { nx, ny, data: rows.into_iter().flatten().collect() })
}
