//! Fixed, asymmetric test images.

use crate::grid::Image;

/// Centered `(2n+1) x (2n+1)` raster of a few blobs and a bar, with no
/// rotational or mirror symmetry. Coordinates are scaled to `[-1, 1]`.
pub fn raster(n: usize) -> Vec<f64> {
    let w = 2 * n + 1;
    let mut out = Vec::with_capacity(w * w);
    for i in 0..w {
        for j in 0..w {
            let u = (i as f64 - n as f64) / n as f64;
            let v = (j as f64 - n as f64) / n as f64;
            let blob = |cu: f64, cv: f64, su: f64, sv: f64| {
                (-((u - cu).powi(2) / su + (v - cv).powi(2) / sv)).exp()
            };
            let bar = {
                let t = 0.8 * u - 0.6 * v;
                let s = 0.6 * u + 0.8 * v;
                if t.abs() < 0.12 && (s - 0.1).abs() < 0.55 {
                    0.6
                } else {
                    0.0
                }
            };
            out.push(
                1.0 * blob(0.3, -0.1, 0.08, 0.08) + 0.7 * blob(-0.35, 0.35, 0.02, 0.1)
                    - 0.5 * blob(-0.1, -0.45, 0.03, 0.03)
                    + bar
                    + 0.2,
            );
        }
    }
    out
}

pub fn image(n: usize) -> Image {
    Image::from_raster(n, &raster(n))
}

/// Diagonal stripes under a face-shaped envelope with one eye, on the same
/// `[-1, 1]` raster as [`raster`].
pub fn striped_raster(n: usize) -> Vec<f64> {
    let w = 2 * n + 1;
    let mut out = Vec::with_capacity(w * w);
    for i in 0..w {
        for j in 0..w {
            let u = (i as f64 - n as f64) / n as f64;
            let v = (j as f64 - n as f64) / n as f64;
            let stripes = (7.0 * (0.9 * u + 0.45 * v) + 2.0 * (3.0 * v).sin()).sin();
            let face = (-((u + 0.2).powi(2) / 0.15 + (v - 0.1).powi(2) / 0.3)).exp();
            let eye = (-((u - 0.35).powi(2) + (v + 0.3).powi(2)) / 0.01).exp();
            out.push(0.6 * stripes * face + face + 0.8 * eye + 0.1 * u);
        }
    }
    out
}

pub fn striped(n: usize) -> Image {
    Image::from_raster(n, &striped_raster(n))
}
