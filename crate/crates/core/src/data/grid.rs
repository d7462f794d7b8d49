//! Projection of a 32-sensor mat onto its 8×8 grid.
//!
//! Each mat's sensors sit on a checkerboard: a cell `(row, col)` (1-based,
//! row 1 at the top) is occupied iff `row + col` is even. The same layout is
//! used for seat and back mats.

use super::{DataError, Mat, PressureFrame, SENSORS_PER_MAT};

pub const GRID_SIZE: usize = 8;

/// An 8×8 grid indexed `[row - 1][col - 1]`.
pub type Grid = [[f64; GRID_SIZE]; GRID_SIZE];

const EMPTY: i8 = -1;

#[rustfmt::skip]
const LAYOUT: [[i8; GRID_SIZE]; GRID_SIZE] = [
    [16, EMPTY, 31, EMPTY,  9, EMPTY, 14, EMPTY],
    [EMPTY, 24, EMPTY, 23, EMPTY,  1, EMPTY, 12],
    [18, EMPTY, 29, EMPTY, 11, EMPTY, 10, EMPTY],
    [EMPTY, 26, EMPTY, 21, EMPTY,  3, EMPTY,  8],
    [20, EMPTY, 27, EMPTY, 15, EMPTY,  6, EMPTY],
    [EMPTY, 28, EMPTY, 17, EMPTY,  5, EMPTY,  4],
    [22, EMPTY, 25, EMPTY, 13, EMPTY,  2, EMPTY],
    [EMPTY, 30, EMPTY, 19, EMPTY,  7, EMPTY,  0],
];

const fn invert_layout() -> [(u8, u8); SENSORS_PER_MAT] {
    let mut out = [(0u8, 0u8); SENSORS_PER_MAT];
    let mut r = 0;
    while r < GRID_SIZE {
        let mut c = 0;
        while c < GRID_SIZE {
            let s = LAYOUT[r][c];
            if s >= 0 {
                out[s as usize] = (r as u8 + 1, c as u8 + 1);
            }
            c += 1;
        }
        r += 1;
    }
    out
}

/// `PLACEMENTS[sensor] = (row, col)`, both 1-based.
pub const PLACEMENTS: [(u8, u8); SENSORS_PER_MAT] = invert_layout();

/// Fixed sensor ↔ cell bijection shared by both mats.
#[derive(Debug, Clone, Copy, Default)]
pub struct GridMapping;

impl GridMapping {
    /// 1-based `(row, col)` of a sensor. Panics if `sensor >= 32`.
    pub fn position(sensor: usize) -> (u8, u8) {
        PLACEMENTS[sensor]
    }

    /// Sensor at a 1-based cell, `None` for unoccupied or out-of-range cells.
    pub fn sensor_at(row: u8, col: u8) -> Option<usize> {
        if !(1..=8).contains(&row) || !(1..=8).contains(&col) {
            return None;
        }
        let s = LAYOUT[row as usize - 1][col as usize - 1];
        (s >= 0).then_some(s as usize)
    }

    pub fn is_occupied(row: u8, col: u8) -> bool {
        (row + col).is_multiple_of(2)
    }
}

pub fn map_to_grid(frame: &PressureFrame) -> Grid {
    let mut grid = [[0.0; GRID_SIZE]; GRID_SIZE];
    for (sensor, &(r, c)) in PLACEMENTS.iter().enumerate() {
        grid[r as usize - 1][c as usize - 1] = frame.values()[sensor];
    }
    grid
}

/// Inverse of [`map_to_grid`]; every unoccupied cell must be exactly zero.
pub fn grid_to_frame(grid: &Grid, mat: Mat) -> Result<PressureFrame, DataError> {
    let mut values = [0.0; SENSORS_PER_MAT];
    for (ri, row) in grid.iter().enumerate() {
        for (ci, &v) in row.iter().enumerate() {
            let (r, c) = (ri as u8 + 1, ci as u8 + 1);
            match GridMapping::sensor_at(r, c) {
                Some(s) => values[s] = v,
                None if v != 0.0 => {
                    return Err(DataError::NonZeroUnoccupiedCell {
                        row: r,
                        col: c,
                        value: v,
                    })
                }
                None => {}
            }
        }
    }
    PressureFrame::new(mat, values)
}
