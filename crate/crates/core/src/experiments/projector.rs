//! Parallel-beam projector pair on `[-1, 1]^2`: a ray-driven forward operator
//! (exact intersection lengths) and a pixel-driven surrogate (each pixel
//! center splatted onto the two nearest detector bins). Both are stacked with
//! the same forward-difference gradient.

use std::f64::consts::PI;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::operators::{
    estimate_operator_norm_with, DifferenceMap, LinearMap, MismatchPair, PowerIterationOptions, SparseMap, SparseMatrix,
};
use crate::par::{self, Execution};

use super::phantom::pixel_center;

/// `image_size x image_size` pixels, `num_angles` equispaced angles in
/// `[0, pi)` and `num_bins` detector bins of the pixel width, centered.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Geometry {
    pub image_size: usize,
    pub num_angles: usize,
    pub num_bins: usize,
}

impl Geometry {
    /// Enough bins to cover the image diagonal.
    pub fn default_bins(image_size: usize) -> usize {
        ((image_size as f64) * std::f64::consts::SQRT_2).ceil() as usize
    }

    pub fn validate(&self) -> Result<()> {
        if self.image_size == 0 || self.num_angles == 0 || self.num_bins == 0 {
            return Err(Error::InvalidConfig(format!(
                "degenerate geometry: {} pixels, {} angles, {} bins",
                self.image_size, self.num_angles, self.num_bins
            )));
        }
        Ok(())
    }

    pub fn pixel_width(&self) -> f64 {
        2.0 / self.image_size as f64
    }

    pub fn angle(&self, k: usize) -> f64 {
        PI * k as f64 / self.num_angles as f64
    }

    pub fn bin_center(&self, b: usize) -> f64 {
        (b as f64 - 0.5 * (self.num_bins as f64 - 1.0)) * self.pixel_width()
    }

    pub fn num_pixels(&self) -> usize {
        self.image_size * self.image_size
    }

    pub fn num_rays(&self) -> usize {
        self.num_angles * self.num_bins
    }
}

/// Forward and surrogate operators `[R; grad]` and `[R_pix; grad]`.
#[derive(Clone)]
pub struct ProjectorPair {
    pub geometry: Geometry,
    pub ray_driven: SparseMatrix,
    pub pixel_driven: SparseMatrix,
    pub gradient: SparseMatrix,
    pub forward: Arc<dyn LinearMap>,
    pub surrogate: Arc<dyn LinearMap>,
}

impl ProjectorPair {
    /// Operator pair whose mismatch is measured on the Radon blocks only, the
    /// gradient blocks being identical.
    pub fn mismatch_pair(&self, opts: PowerIterationOptions) -> Result<MismatchPair> {
        let diff = DifferenceMap::new(
            Arc::new(SparseMap::new(self.ray_driven.clone())),
            Arc::new(SparseMap::new(self.pixel_driven.clone())),
        )?;
        let d = estimate_operator_norm_with(&diff, opts)?;
        MismatchPair::with_mismatch_norm(self.forward.clone(), self.surrogate.clone(), d)
    }

    /// Matched pair using the ray-driven operator in both directions.
    pub fn matched_pair(&self) -> MismatchPair {
        MismatchPair::matched(self.forward.clone())
    }
}

/// Intersection lengths of the line `x cos(phi) + y sin(phi) = s` with the
/// pixel grid, as `(pixel index, length)`.
pub fn ray_weights(geometry: &Geometry, phi: f64, s: f64) -> Vec<(usize, f64)> {
    let n = geometry.image_size;
    let h = geometry.pixel_width();
    let (sin, cos) = phi.sin_cos();
    // Points s (cos, sin) + t (-sin, cos).
    let (px, py, dx, dy) = (s * cos, s * sin, -sin, cos);
    let eps = 1e-14;
    let (mut t_lo, mut t_hi) = (f64::NEG_INFINITY, f64::INFINITY);
    for (p, d) in [(px, dx), (py, dy)] {
        if d.abs() < eps {
            if p <= -1.0 || p >= 1.0 {
                return Vec::new();
            }
        } else {
            let (a, b) = ((-1.0 - p) / d, (1.0 - p) / d);
            t_lo = t_lo.max(a.min(b));
            t_hi = t_hi.min(a.max(b));
        }
    }
    if t_hi <= t_lo {
        return Vec::new();
    }
    let mut ts = vec![t_lo, t_hi];
    for (p, d) in [(px, dx), (py, dy)] {
        if d.abs() < eps {
            continue;
        }
        for k in 0..=n {
            let t = (-1.0 + k as f64 * h - p) / d;
            if t > t_lo && t < t_hi {
                ts.push(t);
            }
        }
    }
    ts.sort_by(f64::total_cmp);
    let mut out: Vec<(usize, f64)> = Vec::new();
    for pair in ts.windows(2) {
        let len = pair[1] - pair[0];
        if len <= eps {
            continue;
        }
        let tm = 0.5 * (pair[0] + pair[1]);
        let (x, y) = (px + tm * dx, py + tm * dy);
        let col = (((x + 1.0) / h).floor() as usize).min(n - 1);
        let row = (((1.0 - y) / h).floor() as usize).min(n - 1);
        let idx = row * n + col;
        match out.last_mut() {
            Some(last) if last.0 == idx => last.1 += len,
            _ => out.push((idx, len)),
        }
    }
    out
}

/// Ray-driven Radon matrix, one row per `(angle, bin)`, angle-major.
pub fn ray_driven_matrix(geometry: &Geometry, exec: Execution) -> SparseMatrix {
    let bins = geometry.num_bins;
    let rows = par::map_range(exec, geometry.num_rays(), |r| {
        let (k, b) = (r / bins, r % bins);
        ray_weights(geometry, geometry.angle(k), geometry.bin_center(b))
    });
    let triplets = rows
        .into_iter()
        .enumerate()
        .flat_map(|(r, w)| w.into_iter().map(move |(c, v)| (r, c, v)))
        .collect();
    SparseMatrix::from_triplets(geometry.num_rays(), geometry.num_pixels(), triplets)
}

/// Pixel-driven Radon matrix: pixel area over bin width, split linearly
/// between the two bins around the projected pixel center.
pub fn pixel_driven_matrix(geometry: &Geometry, exec: Execution) -> SparseMatrix {
    let n = geometry.image_size;
    let bins = geometry.num_bins;
    let h = geometry.pixel_width();
    let mass = h;
    let first = geometry.bin_center(0);
    let per_angle = par::map_range(exec, geometry.num_angles, |k| {
        let (sin, cos) = geometry.angle(k).sin_cos();
        let mut out = Vec::with_capacity(2 * n * n);
        for row in 0..n {
            for col in 0..n {
                let (x, y) = pixel_center(n, row, col);
                let u = (x * cos + y * sin - first) / h;
                let b0 = u.floor();
                let f = u - b0;
                let pix = row * n + col;
                for (b, w) in [(b0, 1.0 - f), (b0 + 1.0, f)] {
                    if b >= 0.0 && (b as usize) < bins && w > 0.0 {
                        out.push((k * bins + b as usize, pix, mass * w));
                    }
                }
            }
        }
        out
    });
    SparseMatrix::from_triplets(
        geometry.num_rays(),
        geometry.num_pixels(),
        per_angle.into_iter().flatten().collect(),
    )
}

/// Forward differences with zero difference across the last row and column;
/// all horizontal differences first, then all vertical ones.
pub fn gradient_matrix(size: usize) -> SparseMatrix {
    let np = size * size;
    let mut t = Vec::with_capacity(4 * np);
    for row in 0..size {
        for col in 0..size {
            let i = row * size + col;
            if col + 1 < size {
                t.push((i, i, -1.0));
                t.push((i, i + 1, 1.0));
            }
            if row + 1 < size {
                t.push((np + i, i, -1.0));
                t.push((np + i, i + size, 1.0));
            }
        }
    }
    SparseMatrix::from_triplets(2 * np, np, t)
}

pub fn build_projector_pair(geometry: &Geometry) -> Result<ProjectorPair> {
    build_projector_pair_with(geometry, Execution::default())
}

pub fn build_projector_pair_with(geometry: &Geometry, exec: Execution) -> Result<ProjectorPair> {
    geometry.validate()?;
    let (ray, pix) = par::join(
        exec,
        || ray_driven_matrix(geometry, exec),
        || pixel_driven_matrix(geometry, exec),
    );
    let gradient = gradient_matrix(geometry.image_size);
    let forward: Arc<dyn LinearMap> = Arc::new(SparseMap::with_execution(
        SparseMatrix::vstack(&[&ray, &gradient]),
        exec,
    ));
    let surrogate: Arc<dyn LinearMap> = Arc::new(SparseMap::with_execution(
        SparseMatrix::vstack(&[&pix, &gradient]),
        exec,
    ));
    Ok(ProjectorPair {
        geometry: *geometry,
        ray_driven: ray,
        pixel_driven: pix,
        gradient,
        forward,
        surrogate,
    })
}
