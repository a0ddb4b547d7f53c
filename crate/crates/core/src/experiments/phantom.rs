//! Shepp-Logan head phantom.

use crate::par::{self, Execution};
use crate::Vector;

/// `(intensity, semi-axis a, semi-axis b, center x, center y, rotation in degrees)`,
/// with the higher-contrast intensities commonly used for display.
const ELLIPSES: [(f64, f64, f64, f64, f64, f64); 10] = [
    (1.0, 0.69, 0.92, 0.0, 0.0, 0.0),
    (-0.8, 0.6624, 0.874, 0.0, -0.0184, 0.0),
    (-0.2, 0.11, 0.31, 0.22, 0.0, -18.0),
    (-0.2, 0.16, 0.41, -0.22, 0.0, 18.0),
    (0.1, 0.21, 0.25, 0.0, 0.35, 0.0),
    (0.1, 0.046, 0.046, 0.0, 0.1, 0.0),
    (0.1, 0.046, 0.046, 0.0, -0.1, 0.0),
    (0.1, 0.046, 0.023, -0.08, -0.605, 0.0),
    (0.1, 0.023, 0.023, 0.0, -0.606, 0.0),
    (0.1, 0.023, 0.046, 0.06, -0.605, 0.0),
];

/// Center of pixel `(row, col)` in `[-1, 1]^2`; row 0 is the top edge.
pub fn pixel_center(size: usize, row: usize, col: usize) -> (f64, f64) {
    let h = 2.0 / size as f64;
    (-1.0 + (col as f64 + 0.5) * h, 1.0 - (row as f64 + 0.5) * h)
}

/// Phantom sampled at pixel centers, row-major (`row * size + col`).
pub fn shepp_logan(size: usize) -> Vector {
    let rows = par::map_range(Execution::default(), size, |r| {
        (0..size)
            .map(|c| {
                let (x, y) = pixel_center(size, r, c);
                ELLIPSES
                    .iter()
                    .filter(|&&(_, a, b, x0, y0, phi)| {
                        let (s, co) = phi.to_radians().sin_cos();
                        let (dx, dy) = (x - x0, y - y0);
                        let u = dx * co + dy * s;
                        let v = -dx * s + dy * co;
                        (u / a).powi(2) + (v / b).powi(2) <= 1.0
                    })
                    .map(|e| e.0)
                    .sum::<f64>()
            })
            .collect::<Vec<_>>()
    });
    Vector::from_iterator(size * size, rows.into_iter().flatten())
}
