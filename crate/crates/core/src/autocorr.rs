//! Third-order autocorrelation of a micrograph and its debiasing.
//!
//! `A3(x1, x2) = m^-2 sum_x M(x) M(x + x1) M(x + x2)` over offsets in the
//! `4n x 4n` grid, with `M` extended by zero outside the frame.

use std::f64::consts::PI;

use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

pub use crate::invariant::{dft_s3, idft_s3};

use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::invariant::{InvariantTensor, Scale, Space};
use crate::simulate::Micrograph;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum A3Method {
    /// Streaming sums over the frame.
    #[default]
    Direct,
    /// Zero-padded FFT correlation per first offset.
    Fft,
}

fn check(mg: &Micrograph, n: usize) -> Result<()> {
    if mg.m <= 4 * n {
        return Err(Error::SizeMismatch(format!(
            "micrograph side {} must exceed 4n = {}",
            mg.m,
            4 * n
        )));
    }
    if mg.pixels.len() != mg.m * mg.m {
        return Err(Error::SizeMismatch("pixel count is not m^2".into()));
    }
    Ok(())
}

pub fn compute_a3(mg: &Micrograph, n: usize) -> Result<InvariantTensor> {
    compute_a3_with(mg, n, A3Method::Direct)
}

pub fn compute_a3_with(mg: &Micrograph, n: usize, method: A3Method) -> Result<InvariantTensor> {
    check(mg, n)?;
    let rows = match method {
        A3Method::Direct => direct_rows(mg, n),
        A3Method::Fft => fft_rows(mg, n),
    };
    let plane = Grid::new(n).len();
    let mut data = vec![0.0; plane * plane];
    // rows[p1] holds entries p2 >= p1; mirror to keep A3(x1,x2) = A3(x2,x1) exact
    for (p1, row) in rows.iter().enumerate() {
        for (j, &v) in row.iter().enumerate() {
            let p2 = p1 + j;
            data[p1 * plane + p2] = v;
            data[p2 * plane + p1] = v;
        }
    }
    InvariantTensor::from_real(n, Scale::A3Raw, data)
}

/// Frame rows and columns `r` with both `r` and `r + d` inside `0..m`.
fn overlap(m: i64, d: i64) -> std::ops::Range<i64> {
    (-d).max(0)..m.min(m - d)
}

/// `P(x) = M(x) M(x + s)` with zeros where `x + s` leaves the frame.
fn shifted_product(mg: &Micrograph, s: [i64; 2]) -> Vec<f64> {
    let m = mg.m as i64;
    let mut out = vec![0.0; mg.m * mg.m];
    for r in overlap(m, s[0]) {
        let src = ((r + s[0]) * m) as usize;
        let dst = (r * m) as usize;
        for c in overlap(m, s[1]) {
            out[dst + c as usize] =
                mg.pixels[dst + c as usize] * mg.pixels[src + (c + s[1]) as usize];
        }
    }
    out
}

fn direct_rows(mg: &Micrograph, n: usize) -> Vec<Vec<f64>> {
    let grid = Grid::new(n);
    let plane = grid.len();
    let m = mg.m as i64;
    let norm = 1.0 / (mg.m * mg.m) as f64;
    (0..plane)
        .into_par_iter()
        .map(|p1| {
            let prod = shifted_product(mg, grid.point(p1));
            (p1..plane)
                .map(|p2| {
                    let s = grid.point(p2);
                    let cols = overlap(m, s[1]);
                    let mut total = 0.0;
                    for r in overlap(m, s[0]) {
                        let a = &prod[(r * m) as usize..][..mg.m];
                        let b = &mg.pixels[((r + s[0]) * m) as usize..][..mg.m];
                        let mut acc = 0.0;
                        for c in cols.clone() {
                            acc += a[c as usize] * b[(c + s[1]) as usize];
                        }
                        total += acc;
                    }
                    total * norm
                })
                .collect()
        })
        .collect()
}

/// In-place 2-D FFT of a `side x side` row-major array.
fn fft2(data: &mut [Complex64], side: usize, inverse: bool) {
    let mut planner = FftPlanner::new();
    let fft = if inverse {
        planner.plan_fft_inverse(side)
    } else {
        planner.plan_fft_forward(side)
    };
    for row in data.chunks_mut(side) {
        fft.process(row);
    }
    let mut col = vec![Complex64::new(0.0, 0.0); side];
    for c in 0..side {
        for r in 0..side {
            col[r] = data[r * side + c];
        }
        fft.process(&mut col);
        for r in 0..side {
            data[r * side + c] = col[r];
        }
    }
}

fn fft_rows(mg: &Micrograph, n: usize) -> Vec<Vec<f64>> {
    let grid = Grid::new(n);
    let plane = grid.len();
    let m = mg.m;
    // wide enough that shifts up to 2n never wrap onto the frame
    let side = (m + 2 * n + 1).next_power_of_two();
    let pad = |values: &[f64]| {
        let mut out = vec![Complex64::new(0.0, 0.0); side * side];
        for r in 0..m {
            for c in 0..m {
                out[r * side + c] = Complex64::new(values[r * m + c], 0.0);
            }
        }
        out
    };
    let mut spectrum = pad(&mg.pixels);
    fft2(&mut spectrum, side, false);
    let norm = 1.0 / ((m * m) as f64 * (side * side) as f64);
    let s = side as i64;
    (0..plane)
        .into_par_iter()
        .map(|p1| {
            let mut corr = pad(&shifted_product(mg, grid.point(p1)));
            fft2(&mut corr, side, false);
            // sum_x P(x) M(x + d) has transform conj(P_hat) M_hat
            for (c, mh) in corr.iter_mut().zip(&spectrum) {
                *c = c.conj() * mh;
            }
            fft2(&mut corr, side, true);
            (p1..plane)
                .map(|p2| {
                    let d = grid.point(p2);
                    let r = d[0].rem_euclid(s) as usize;
                    let c = d[1].rem_euclid(s) as usize;
                    corr[r * side + c].re * norm
                })
                .collect()
        })
        .collect()
}

/// Unbiased pixel variance and pixel mean.
pub fn estimate_noise_and_mean(mg: &Micrograph) -> Result<(f64, f64)> {
    if mg.m < 2 {
        return Err(Error::InvalidArgument(
            "micrograph side must be at least 2".into(),
        ));
    }
    let count = mg.pixels.len() as f64;
    let mean = mg.pixels.iter().sum::<f64>() / count;
    let var = mg.pixels.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (count - 1.0);
    Ok((var, mean))
}

/// `S3* = (2 pi / gamma) (A3 - sigma2 mean (delta(x1) + delta(x2) + delta(x1 - x2)))`.
pub fn debias(a3: &InvariantTensor, sigma2: f64, mean: f64, gamma: f64) -> Result<InvariantTensor> {
    if !(gamma > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "gamma must be positive, got {gamma}"
        )));
    }
    if a3.space != Space::RealOffsets || a3.scale != Scale::A3Raw {
        return Err(Error::InvalidArgument(
            "debias expects a raw offsets-domain A3".into(),
        ));
    }
    let grid = a3.grid();
    let plane = grid.len();
    let origin = grid.index([0, 0]);
    let bias = sigma2 * mean;
    let mut data = a3.real().expect("offsets tensor is real").to_vec();
    for p in 0..plane {
        data[origin * plane + p] -= bias;
        data[p * plane + origin] -= bias;
        data[p * plane + p] -= bias;
    }
    let factor = 2.0 * PI / gamma;
    data.iter_mut().for_each(|v| *v *= factor);
    InvariantTensor::from_real(a3.n, Scale::S3Normalized, data)
}
