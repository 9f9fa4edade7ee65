//! Synthetic measurements: rotated, well-separated copies of a target plus
//! Gaussian noise.
//!
//! Pixels are addressed by 1-based `[row, column]` in `1..=m`; the pixel array
//! is row-major. A target at `x_j` covers `x_j + x` for the offsets `|x| < n`.

use std::collections::HashMap;
use std::f64::consts::PI;

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::basis::{CoefficientVector, SteerableBasis};
use crate::error::{Error, Result};
use crate::rng;

pub type Position = [i64; 2];

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Placement {
    pub position: Position,
    pub angle: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Micrograph {
    pub m: usize,
    pub pixels: Vec<f64>,
    pub sigma: f64,
    pub placements: Option<Vec<Placement>>,
    pub gamma: Option<f64>,
}

impl Micrograph {
    pub fn from_pixels(m: usize, pixels: Vec<f64>) -> Result<Self> {
        if pixels.len() != m * m {
            return Err(Error::SizeMismatch(format!(
                "micrograph of side {m} needs {} pixels, got {}",
                m * m,
                pixels.len()
            )));
        }
        if pixels.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(
                "micrograph has non-finite pixels".into(),
            ));
        }
        Ok(Micrograph {
            m,
            pixels,
            sigma: 0.0,
            placements: None,
            gamma: None,
        })
    }

    /// Pixel at 1-based `[row, column]`.
    pub fn at(&self, p: Position) -> f64 {
        self.pixels[(p[0] - 1) as usize * self.m + (p[1] - 1) as usize]
    }
}

fn separated(a: Position, b: Position, n: usize) -> bool {
    let d0 = a[0] - b[0];
    let d1 = a[1] - b[1];
    let limit = 4 * n as i64;
    d0 * d0 + d1 * d1 > limit * limit
}

/// Rough number of targets that fit in the margin band (hexagonal packing of
/// discs of diameter `4n`).
fn packing_estimate(m: usize, n: usize) -> usize {
    let side = (m - 2 * n + 2) as f64 + 4.0 * n as f64;
    let r = 2.0 * n as f64;
    (0.9069 * side * side / (PI * r * r)) as usize
}

/// Check the margin band and the pairwise separation `|x_i - x_j| > 4n`.
pub fn validate_positions(positions: &[Position], m: usize, n: usize) -> Result<()> {
    let lo = n as i64;
    let hi = (m - n + 1) as i64;
    for p in positions {
        if p[0] < lo || p[0] > hi || p[1] < lo || p[1] > hi {
            return Err(Error::InvalidPlacement(format!(
                "position {p:?} outside the band {lo}..={hi}"
            )));
        }
    }
    for (i, a) in positions.iter().enumerate() {
        for b in &positions[i + 1..] {
            if !separated(*a, *b, n) {
                return Err(Error::InvalidPlacement(format!(
                    "positions {a:?} and {b:?} are not more than {} apart",
                    4 * n
                )));
            }
        }
    }
    Ok(())
}

/// Draw `p` positions uniformly from the band `{n..=m-n+1}^2`, rejecting any
/// candidate within `4n` of an accepted one. At most `1000 p` candidates
/// are drawn.
pub fn place_targets<R: Rng>(m: usize, n: usize, p: usize, rng: &mut R) -> Result<Vec<Position>> {
    if m <= 4 * n {
        return Err(Error::InvalidArgument(format!(
            "need m > 4n, got m={m}, n={n}"
        )));
    }
    let lo = n as i64;
    let hi = (m - n + 1) as i64;
    let cell = 4 * n as i64;
    let budget = 1000 * p;
    let mut placed: Vec<Position> = Vec::with_capacity(p);
    let mut cells: HashMap<(i64, i64), Vec<usize>> = HashMap::new();
    let mut attempts = 0;
    while placed.len() < p {
        if attempts == budget {
            return Err(Error::PlacementFailure {
                attempts,
                placed: placed.len(),
                requested: p,
                capacity: packing_estimate(m, n),
            });
        }
        attempts += 1;
        let c = [rng.gen_range(lo..=hi), rng.gen_range(lo..=hi)];
        let key = (c[0].div_euclid(cell), c[1].div_euclid(cell));
        let clash = (-1..=1).any(|di| {
            (-1..=1).any(|dj| {
                cells
                    .get(&(key.0 + di, key.1 + dj))
                    .is_some_and(|ids| ids.iter().any(|&i| !separated(placed[i], c, n)))
            })
        });
        if !clash {
            cells.entry(key).or_default().push(placed.len());
            placed.push(c);
        }
    }
    Ok(placed)
}

/// `M = sum_j F_{phi_j}(x - x_j) + noise`, where each rotated copy comes from
/// steering the coefficients. Row `i` of the noise uses its own substream of
/// `seed`, so the result does not depend on the thread count.
pub fn render_micrograph(
    z: &CoefficientVector,
    basis: &SteerableBasis,
    placements: &[Placement],
    sigma: f64,
    m: usize,
    seed: u64,
) -> Result<Micrograph> {
    let n = basis.n();
    if !(sigma >= 0.0) || !sigma.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "sigma must be >= 0, got {sigma}"
        )));
    }
    if m <= 4 * n {
        return Err(Error::InvalidArgument(format!(
            "need m > 4n, got m={m}, n={n}"
        )));
    }
    let positions: Vec<Position> = placements.iter().map(|p| p.position).collect();
    validate_positions(&positions, m, n)?;

    let copies: Vec<Vec<f64>> = placements
        .par_iter()
        .map(|pl| {
            basis
                .synthesize(&basis.steer(z, pl.angle))
                .map(|img| img.data)
        })
        .collect::<Result<_>>()?;
    let grid = basis.grid;
    let offsets: Vec<(usize, [i64; 2])> = basis
        .support()
        .iter()
        .map(|&pix| (pix, grid.point(pix)))
        .collect();
    let mut pixels = vec![0.0; m * m];
    for (pl, copy) in placements.iter().zip(&copies) {
        for &(pix, off) in &offsets {
            let r = (pl.position[0] + off[0] - 1) as usize;
            let c = (pl.position[1] + off[1] - 1) as usize;
            pixels[r * m + c] += copy[pix];
        }
    }
    if sigma > 0.0 {
        pixels
            .par_chunks_mut(m)
            .enumerate()
            .for_each(|(row, values)| {
                let mut rng = rng::stream(seed, "noise", row as u64);
                for v in values {
                    *v += sigma * rng.sample::<f64, _>(StandardNormal);
                }
            });
    }
    Ok(Micrograph {
        m,
        pixels,
        sigma,
        placements: Some(placements.to_vec()),
        gamma: Some(placements.len() as f64 / (m * m) as f64),
    })
}

/// Place `p` copies at uniform angles and render them; positions, angles and
/// noise each draw from their own substream of `seed`.
pub fn simulate(
    z: &CoefficientVector,
    basis: &SteerableBasis,
    m: usize,
    p: usize,
    sigma: f64,
    seed: u64,
) -> Result<Micrograph> {
    let positions = place_targets(m, basis.n(), p, &mut rng::stream(seed, "placement", 0))?;
    let mut angles = rng::stream(seed, "angles", 0);
    let placements: Vec<Placement> = positions
        .into_iter()
        .map(|position| Placement {
            position,
            angle: angles.gen_range(0.0..2.0 * PI),
        })
        .collect();
    render_micrograph(z, basis, &placements, sigma, m, seed)
}

/// Signal power over the support pixels divided by the noise variance:
/// `sum_{|x|<n} F(x)^2 / (N_support sigma^2)`.
pub fn measure_snr(z: &CoefficientVector, basis: &SteerableBasis, sigma: f64) -> Result<f64> {
    if sigma == 0.0 {
        return Err(Error::DivisionByZero("sigma is zero"));
    }
    Ok(support_power(z, basis)? / (sigma * sigma))
}

/// The noise level at which [`measure_snr`] returns `snr`.
pub fn sigma_for_snr(z: &CoefficientVector, basis: &SteerableBasis, snr: f64) -> Result<f64> {
    if !(snr > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "snr must be positive, got {snr}"
        )));
    }
    Ok((support_power(z, basis)? / snr).sqrt())
}

fn support_power(z: &CoefficientVector, basis: &SteerableBasis) -> Result<f64> {
    let image = basis.synthesize(z)?;
    let support = basis.support();
    let power: f64 = support.iter().map(|&p| image.data[p].powi(2)).sum();
    Ok(power / support.len() as f64)
}
