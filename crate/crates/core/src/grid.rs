//! The centered pixel grid `{-2n, ..., 2n-1}^2` and DFTs over it.
//!
//! A point `[a, b]` of the grid lives at flat index `(a + 2n) * side + (b + 2n)`
//! with `side = 4n`. Its polar angle is `atan2(b, a)`. The DFT convention is
//! `X(k) = sum_x x(x) exp(-2 pi i k.x / 4n)` with both `x` and `k` stored in
//! the same centered layout.

use num_complex::Complex64;
use rustfft::{FftDirection, FftPlanner};
use serde::{Deserialize, Serialize};

pub type Point = [i64; 2];

/// Geometry of the centered grid for half-support `n`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Grid {
    pub n: usize,
}

impl Grid {
    pub fn new(n: usize) -> Self {
        Grid { n }
    }

    /// Side length `4n`.
    pub fn side(&self) -> usize {
        4 * self.n
    }

    pub fn len(&self) -> usize {
        self.side() * self.side()
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn half(&self) -> i64 {
        2 * self.n as i64
    }

    pub fn index(&self, p: Point) -> usize {
        let h = self.half();
        debug_assert!(self.contains(p));
        ((p[0] + h) as usize) * self.side() + (p[1] + h) as usize
    }

    pub fn point(&self, index: usize) -> Point {
        let h = self.half();
        let side = self.side();
        [(index / side) as i64 - h, (index % side) as i64 - h]
    }

    pub fn contains(&self, p: Point) -> bool {
        let h = self.half();
        p.iter().all(|&c| c >= -h && c < h)
    }

    /// Reduce a coordinate into `{-2n, ..., 2n-1}` modulo `4n`.
    pub fn wrap(&self, c: i64) -> i64 {
        let side = self.side() as i64;
        let h = self.half();
        (c + h).rem_euclid(side) - h
    }

    pub fn wrap_point(&self, p: Point) -> Point {
        [self.wrap(p[0]), self.wrap(p[1])]
    }

    /// Flat index of `-k` reduced modulo `4n`.
    pub fn negate_index(&self, index: usize) -> usize {
        let p = self.point(index);
        self.index(self.wrap_point([-p[0], -p[1]]))
    }

    /// Flat index of `-(k1 + k2)` reduced modulo `4n`.
    pub fn neg_sum_index(&self, a: usize, b: usize) -> usize {
        let pa = self.point(a);
        let pb = self.point(b);
        self.index(self.wrap_point([-pa[0] - pb[0], -pa[1] - pb[1]]))
    }

    /// Flat indices of the pixels strictly inside the disc `|x| < n`.
    pub fn disc_support(&self) -> Vec<usize> {
        let r2 = (self.n * self.n) as i64;
        (0..self.len())
            .filter(|&i| {
                let p = self.point(i);
                p[0] * p[0] + p[1] * p[1] < r2
            })
            .collect()
    }
}

/// Forward or inverse transform.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Direction {
    Forward,
    Inverse,
}

/// In-place DFT over `dims` axes of length `side` each (centered layout).
/// The inverse includes the `side^-dims` normalization.
pub fn centered_dft(data: &mut [Complex64], side: usize, dims: usize, direction: Direction) {
    assert_eq!(data.len(), side.pow(dims as u32), "tensor shape mismatch");
    assert!(side % 2 == 0, "side must be even");
    let mut planner = FftPlanner::new();
    let fft = planner.plan_fft(
        side,
        match direction {
            Direction::Forward => FftDirection::Forward,
            Direction::Inverse => FftDirection::Inverse,
        },
    );
    let half = side / 2;
    let mut line = vec![Complex64::new(0.0, 0.0); side];
    let mut scratch = vec![Complex64::new(0.0, 0.0); fft.get_inplace_scratch_len()];
    for axis in 0..dims {
        let stride = side.pow((dims - 1 - axis) as u32);
        let block = stride * side;
        for outer in 0..data.len() / block {
            for inner in 0..stride {
                let base = outer * block + inner;
                // centered -> natural order is a swap of halves since 4n = 2 * 2n
                for j in 0..side {
                    line[(j + half) % side] = data[base + j * stride];
                }
                fft.process_with_scratch(&mut line, &mut scratch);
                for j in 0..side {
                    data[base + j * stride] = line[(j + half) % side];
                }
            }
        }
    }
    if direction == Direction::Inverse {
        let scale = 1.0 / data.len() as f64;
        for v in data.iter_mut() {
            *v *= scale;
        }
    }
}

/// Real image on the centered grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Image {
    pub grid: Grid,
    pub data: Vec<f64>,
}

impl Image {
    pub fn zeros(grid: Grid) -> Self {
        Image {
            grid,
            data: vec![0.0; grid.len()],
        }
    }

    pub fn at(&self, p: Point) -> f64 {
        self.data[self.grid.index(p)]
    }

    pub fn norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    /// Embed a centered `(2n+1) x (2n+1)` raster (row-major, first index is the
    /// first coordinate) into the grid, dropping pixels outside the open disc.
    pub fn from_raster(n: usize, raster: &[f64]) -> Self {
        let grid = Grid::new(n);
        let w = 2 * n + 1;
        assert_eq!(raster.len(), w * w, "raster must be (2n+1)^2 pixels");
        let mut img = Image::zeros(grid);
        let r2 = (n * n) as i64;
        for i in 0..w {
            for j in 0..w {
                let p = [i as i64 - n as i64, j as i64 - n as i64];
                if p[0] * p[0] + p[1] * p[1] < r2 {
                    let idx = grid.index(p);
                    img.data[idx] = raster[i * w + j];
                }
            }
        }
        img
    }

    /// The centered `(2n+1) x (2n+1)` crop of the image.
    pub fn to_raster(&self) -> Vec<f64> {
        let n = self.grid.n as i64;
        let mut out = Vec::with_capacity(((2 * n + 1) * (2 * n + 1)) as usize);
        for i in -n..=n {
            for j in -n..=n {
                out.push(self.at([i, j]));
            }
        }
        out
    }
}
