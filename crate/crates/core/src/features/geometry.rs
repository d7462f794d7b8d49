//! Spatial summaries of one mat over its grid placements.

use crate::data::{PressureFrame, PLACEMENTS};

/// Total clamped mass below which a frame is treated as empty.
pub const ZERO_MASS_EPS: f64 = 1e-9;

/// Centroid of the 8×8 grid, returned for massless frames.
pub const GRID_CENTROID: (f64, f64) = (4.5, 4.5);

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CenterOfMass {
    pub row: f64,
    pub col: f64,
    /// Set when the clamped mass is below [`ZERO_MASS_EPS`].
    pub zero_mass: bool,
}

/// Pressure-weighted mean cell coordinate, 1-based. Negative readings (from
/// normalized frames) carry no mass.
pub fn center_of_mass(frame: &PressureFrame) -> CenterOfMass {
    let (mut m, mut mr, mut mc) = (0.0, 0.0, 0.0);
    for (&v, &(r, c)) in frame.values().iter().zip(PLACEMENTS.iter()) {
        let w = v.max(0.0);
        m += w;
        mr += w * f64::from(r);
        mc += w * f64::from(c);
    }
    if m < ZERO_MASS_EPS {
        return CenterOfMass {
            row: GRID_CENTROID.0,
            col: GRID_CENTROID.1,
            zero_mass: true,
        };
    }
    CenterOfMass {
        row: mr / m,
        col: mc / m,
        zero_mass: false,
    }
}

/// `[top-left, top-right, bottom-left, bottom-right]`, each over a 4×4 block.
pub fn quadrant_sums(frame: &PressureFrame) -> [f64; 4] {
    let mut q = [0.0; 4];
    for (&v, &(r, c)) in frame.values().iter().zip(PLACEMENTS.iter()) {
        let idx = usize::from(r > 4) * 2 + usize::from(c > 4);
        q[idx] += v;
    }
    q
}

/// `[top, bottom, left, right]` over the outer two-deep bands. Corner
/// sensors count toward two edges.
pub fn edge_sums(frame: &PressureFrame) -> [f64; 4] {
    let mut e = [0.0; 4];
    for (&v, &(r, c)) in frame.values().iter().zip(PLACEMENTS.iter()) {
        if r <= 2 {
            e[0] += v;
        }
        if r >= 7 {
            e[1] += v;
        }
        if c <= 2 {
            e[2] += v;
        }
        if c >= 7 {
            e[3] += v;
        }
    }
    e
}
