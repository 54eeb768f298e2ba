//! Grayscale PGM rendering of grid CSVs (visit heatmaps and friends).

use thiserror::Error;

use crate::grid::{parse_grid_csv, Grid, GridError};

#[derive(Debug, Error)]
pub enum HeatmapError {
    #[error(transparent)]
    Grid(#[from] GridError),
}

/// Render a grid as a plain-text PGM (P2, maxval 255): each pixel is
/// `round(255 * cell / max)`. An all-zero grid renders all-zero.
pub fn grid_to_pgm(grid: &Grid<f64>) -> String {
    let max = grid.cells().cloned().fold(0.0f64, f64::max);
    let mut out = format!("P2\n{} {}\n255\n", grid.nx(), grid.ny());
    for j in 0..grid.ny() {
        let row: Vec<String> = (0..grid.nx())
            .map(|i| {
                let v = *grid.at(i, j);
                let px = if max > 0.0 { (255.0 * v / max).round().clamp(0.0, 255.0) } else { 0.0 };
                format!("{}", px as u32)
            })
            .collect();
        out.push_str(&row.join(" "));
        out.push('\n');
    }
    out
}

/// Parse a grid CSV and render it as a PGM image.
pub fn csv_to_pgm(csv_text: &str) -> Result<String, HeatmapError> {
    Ok(grid_to_pgm(&parse_grid_csv(csv_text)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn all_zero_grid_renders_all_zero() {
        let g = Grid::filled(4, 3, 0.0);
        let pgm = grid_to_pgm(&g);
        assert!(pgm.starts_with("P2\n4 3\n255\n"));
        let body: Vec<&str> = pgm.lines().skip(3).collect();
        assert_eq!(body.join(" "), "0 0 0 0 0 0 0 0 0 0 0 0");
    }

    #[test]
    fn single_max_cell_is_single_255() {
        let mut g = Grid::filled(3, 3, 0.0);
        *g.at_mut(1, 1) = 2.5;
        let pgm = grid_to_pgm(&g);
        let pixels: Vec<u32> = pgm
            .lines()
            .skip(3)
            .flat_map(|l| l.split_whitespace().map(|t| t.parse().unwrap()))
            .collect();
        assert_eq!(pixels.iter().filter(|&&p| p == 255).count(), 1);
        assert_eq!(pixels.iter().filter(|&&p| p == 0).count(), 8);
    }

    #[test]
    fn linear_ramp_maps_linearly() {
        let mut g = Grid::filled(6, 1, 0.0);
        for i in 0..6 {
            *g.at_mut(i, 0) = i as f64;
        }
        let pgm = grid_to_pgm(&g);
        let pixels: Vec<u32> = pgm
            .lines()
            .nth(3)
            .unwrap()
            .split_whitespace()
            .map(|t| t.parse().unwrap())
            .collect();
        assert_eq!(pixels, vec![0, 51, 102, 153, 204, 255]);
    }

    #[test]
    fn empty_csv_is_an_error() {
        assert!(csv_to_pgm("").is_err());
    }
}
