//! Steerable basis of Dirichlet Laplacian eigenfunctions on the unit disc.
//!
//! `psi_{nu,q}(r, theta) = J_nu(lambda_{nu,q} r) exp(i nu theta)` for `r < 1`
//! and zero otherwise, sampled at `x / n` on the centered grid. Rotation by
//! `phi` multiplies the coefficient of every `(nu, q)` term by
//! `exp(i nu phi)`.
//!
//! Real images are represented by the `nu >= 0` coefficients only; the
//! negative-order coefficients follow from
//! `alpha_{-nu,q} = (-1)^nu conj(alpha_{nu,q})`.

use std::cmp::Ordering;
use std::collections::BTreeMap;

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::bessel::{bessel_j, bessel_roots};
use crate::error::{Error, Result};
use crate::grid::{centered_dft, Direction, Grid, Image};

/// Largest order and radial index the basis builder will enumerate.
pub const MAX_ORDER: u32 = 1000;
pub const MAX_RADIAL: u32 = 1000;

const REALITY_TOL: f64 = 1e-10;
const MAX_CONDITION: f64 = 1e12;

/// One eigenfunction label `(nu, q)` with its frequency `lambda_{nu,q}`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BasisIndex {
    pub nu: i32,
    pub q: u32,
    pub lambda: f64,
}

impl BasisIndex {
    /// Canonical order: lambda, then |nu|, then nu >= 0 before nu < 0, then q.
    pub fn canonical_cmp(&self, other: &Self) -> Ordering {
        self.lambda
            .partial_cmp(&other.lambda)
            .unwrap_or(Ordering::Equal)
            .then(self.nu.unsigned_abs().cmp(&other.nu.unsigned_abs()))
            .then((self.nu < 0).cmp(&(other.nu < 0)))
            .then(self.q.cmp(&other.q))
    }
}

/// How many eigenfunctions to keep.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum Selection {
    /// The first `K` eigenfunctions in canonical order.
    Count(usize),
    /// Every eigenfunction with `lambda_{nu,q} <= lambda`.
    Bandlimit(f64),
}

/// Expansion coefficients, one complex value per basis index.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoefficientVector {
    pub values: Vec<Complex64>,
}

impl CoefficientVector {
    pub fn zeros(len: usize) -> Self {
        CoefficientVector {
            values: vec![Complex64::new(0.0, 0.0); len],
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn scaled(&self, c: f64) -> Self {
        CoefficientVector {
            values: self.values.iter().map(|v| v * c).collect(),
        }
    }

    pub fn norm(&self) -> f64 {
        self.values.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt()
    }
}

/// Sampled eigenfunctions and their DFTs on the `4n x 4n` grid.
#[derive(Clone, Debug)]
pub struct SteerableBasis {
    pub grid: Grid,
    pub lambda_max: f64,
    pub nu_max: u32,
    pub indices: Vec<BasisIndex>,
    /// `psi[j][pixel]`, zero outside the open disc of radius `n`.
    pub psi: Vec<Vec<Complex64>>,
    /// `psi_hat[j][frequency]`.
    pub psi_hat: Vec<Vec<Complex64>>,
    /// Position of `(-nu, q)` for each index.
    partner: Vec<usize>,
    support: Vec<usize>,
}

impl SteerableBasis {
    pub fn build(n: usize, selection: Selection) -> Result<Self> {
        if n < 2 {
            return Err(Error::InvalidSelection(format!("n must be >= 2, got {n}")));
        }
        let indices = select_indices(selection)?;
        let lambda_max = match selection {
            Selection::Bandlimit(l) => l,
            Selection::Count(_) => indices.iter().map(|i| i.lambda).fold(0.0, f64::max),
        };
        let nu_max = indices
            .iter()
            .map(|i| i.nu.unsigned_abs())
            .max()
            .unwrap_or(0);
        let grid = Grid::new(n);
        let support = grid.disc_support();

        let mut psi = Vec::with_capacity(indices.len());
        let mut psi_hat = Vec::with_capacity(indices.len());
        for idx in &indices {
            let mut samples = vec![Complex64::new(0.0, 0.0); grid.len()];
            for &pix in &support {
                let p = grid.point(pix);
                let r = ((p[0] * p[0] + p[1] * p[1]) as f64).sqrt() / n as f64;
                let theta = (p[1] as f64).atan2(p[0] as f64);
                let radial = bessel_j(idx.nu, idx.lambda * r);
                samples[pix] = Complex64::from_polar(1.0, idx.nu as f64 * theta) * radial;
            }
            let mut hat = samples.clone();
            centered_dft(&mut hat, grid.side(), 2, Direction::Forward);
            psi.push(samples);
            psi_hat.push(hat);
        }

        let position: BTreeMap<(i32, u32), usize> = indices
            .iter()
            .enumerate()
            .map(|(j, i)| ((i.nu, i.q), j))
            .collect();
        let partner = indices.iter().map(|i| position[&(-i.nu, i.q)]).collect();

        Ok(SteerableBasis {
            grid,
            lambda_max,
            nu_max,
            indices,
            psi,
            psi_hat,
            partner,
            support,
        })
    }

    pub fn n(&self) -> usize {
        self.grid.n
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn partner(&self, j: usize) -> usize {
        self.partner[j]
    }

    /// Flat grid indices of the pixels with `|x| < n`.
    pub fn support(&self) -> &[usize] {
        &self.support
    }

    /// Number of real parameters of a real image (equals `len()`).
    pub fn real_dim(&self) -> usize {
        self.indices.len()
    }

    /// `(coefficient position, is_imaginary_part)` for each real parameter.
    pub fn real_layout(&self) -> Vec<(usize, bool)> {
        let mut out = Vec::with_capacity(self.len());
        for (j, idx) in self.indices.iter().enumerate() {
            match idx.nu.cmp(&0) {
                Ordering::Equal => out.push((j, false)),
                Ordering::Greater => {
                    out.push((j, false));
                    out.push((j, true));
                }
                Ordering::Less => {}
            }
        }
        out
    }

    pub fn from_real_params(&self, params: &[f64]) -> CoefficientVector {
        assert_eq!(params.len(), self.real_dim(), "parameter length mismatch");
        let mut z = CoefficientVector::zeros(self.len());
        for (&(j, imag), &v) in self.real_layout().iter().zip(params) {
            if imag {
                z.values[j].im = v;
            } else {
                z.values[j].re = v;
            }
        }
        for (j, idx) in self.indices.iter().enumerate() {
            if idx.nu > 0 {
                let sign = if idx.nu % 2 == 0 { 1.0 } else { -1.0 };
                z.values[self.partner[j]] = z.values[j].conj() * sign;
            }
        }
        z
    }

    /// Project onto the real-image parametrization (ignores negative orders).
    pub fn to_real_params(&self, z: &CoefficientVector) -> Vec<f64> {
        self.real_layout()
            .iter()
            .map(|&(j, imag)| if imag { z.values[j].im } else { z.values[j].re })
            .collect()
    }

    /// Map a complex gradient `G_j = sum_p conj(c_p) dS_p/dz_j` of a real
    /// function to its gradient with respect to the real parameters.
    pub fn real_gradient(&self, complex_grad: &[Complex64]) -> Vec<f64> {
        self.real_layout()
            .iter()
            .map(|&(j, imag)| {
                let idx = self.indices[j];
                if idx.nu == 0 {
                    complex_grad[j].re
                } else {
                    let sign = if idx.nu % 2 == 0 { 1.0 } else { -1.0 };
                    let g = complex_grad[j];
                    let gp = complex_grad[self.partner[j]];
                    if imag {
                        -g.im + sign * gp.im
                    } else {
                        g.re + sign * gp.re
                    }
                }
            })
            .collect()
    }

    /// Largest violation of `alpha_{-nu,q} = (-1)^nu conj(alpha_{nu,q})` and
    /// `Im alpha_{0,q} = 0`, relative to the largest coefficient.
    pub fn reality_defect(&self, z: &CoefficientVector) -> f64 {
        let scale = z.values.iter().map(|v| v.norm()).fold(0.0, f64::max);
        if scale == 0.0 {
            return 0.0;
        }
        let mut defect = 0.0_f64;
        for (j, idx) in self.indices.iter().enumerate() {
            let sign = if idx.nu % 2 == 0 { 1.0 } else { -1.0 };
            let want = z.values[j].conj() * sign;
            defect = defect.max((z.values[self.partner[j]] - want).norm());
        }
        defect / scale
    }

    fn check_len(&self, z: &CoefficientVector) -> Result<()> {
        if z.len() != self.len() {
            return Err(Error::BasisMismatch(format!(
                "coefficient vector has {} entries, basis has {}",
                z.len(),
                self.len()
            )));
        }
        Ok(())
    }

    /// Rotate the represented image by `phi` radians.
    pub fn steer(&self, z: &CoefficientVector, phi: f64) -> CoefficientVector {
        assert_eq!(
            z.len(),
            self.len(),
            "coefficient vector does not match basis"
        );
        CoefficientVector {
            values: z
                .values
                .iter()
                .zip(&self.indices)
                .map(|(v, idx)| v * Complex64::from_polar(1.0, idx.nu as f64 * phi))
                .collect(),
        }
    }

    /// `sum_j z_j Psi_j` as complex samples (no reality check).
    pub fn synthesize_complex(&self, z: &CoefficientVector) -> Vec<Complex64> {
        let mut out = vec![Complex64::new(0.0, 0.0); self.grid.len()];
        for (zj, psi) in z.values.iter().zip(&self.psi) {
            if *zj == Complex64::new(0.0, 0.0) {
                continue;
            }
            for &pix in &self.support {
                out[pix] += zj * psi[pix];
            }
        }
        out
    }

    /// Real image `F(x) = sum_j z_j Psi_j(x)` on the grid.
    pub fn synthesize(&self, z: &CoefficientVector) -> Result<Image> {
        self.check_len(z)?;
        let defect = self.reality_defect(z);
        if defect > REALITY_TOL {
            return Err(Error::RealityViolation { defect });
        }
        let values = self.synthesize_complex(z);
        Ok(Image {
            grid: self.grid,
            data: values.iter().map(|v| v.re).collect(),
        })
    }

    /// Real design matrix over the support pixels, one column per real parameter.
    fn design_matrix(&self) -> DMatrix<f64> {
        let layout = self.real_layout();
        DMatrix::from_fn(self.support.len(), layout.len(), |row, col| {
            let pix = self.support[row];
            let (j, imag) = layout[col];
            let v = self.psi[j][pix];
            if self.indices[j].nu == 0 {
                v.re
            } else if imag {
                -2.0 * v.im
            } else {
                2.0 * v.re
            }
        })
    }

    /// Least-squares coefficients of a real image supported in the disc.
    /// Pixels outside the disc are ignored.
    pub fn expand(&self, image: &Image) -> Result<CoefficientVector> {
        if image.grid != self.grid {
            return Err(Error::SizeMismatch(format!(
                "image grid n={} but basis n={}",
                image.grid.n, self.grid.n
            )));
        }
        let a = self.design_matrix();
        if a.nrows() < a.ncols() {
            return Err(Error::RankDeficient {
                condition: f64::INFINITY,
            });
        }
        let b = nalgebra::DVector::from_iterator(
            self.support.len(),
            self.support.iter().map(|&pix| image.data[pix]),
        );
        let svd = a.svd(true, true);
        let smax = svd.singular_values.max();
        let smin = svd.singular_values.min();
        let condition = if smin > 0.0 {
            smax / smin
        } else {
            f64::INFINITY
        };
        if condition > MAX_CONDITION {
            return Err(Error::RankDeficient { condition });
        }
        let x = svd
            .solve(&b, 0.0)
            .map_err(|e| Error::InvalidArgument(e.to_string()))?;
        Ok(self.from_real_params(x.as_slice()))
    }
}

/// Indices selected by `selection`, in canonical order and closed under `nu -> -nu`.
pub fn select_indices(selection: Selection) -> Result<Vec<BasisIndex>> {
    match selection {
        Selection::Bandlimit(lambda) => {
            let first = crate::bessel::bessel_root(0, 1)?;
            if !(lambda >= first) || !lambda.is_finite() {
                return Err(Error::InvalidSelection(format!(
                    "bandlimit {lambda} is below the smallest eigenfrequency {first}"
                )));
            }
            enumerate_up_to(lambda)
        }
        Selection::Count(count) => {
            if count == 0 {
                return Err(Error::InvalidSelection("count must be >= 1".into()));
            }
            // Weyl: about lambda^2 / 4 eigenvalues below lambda on the unit disc
            let mut bound = 2.0 * (count as f64).sqrt() + 6.0;
            loop {
                let all = enumerate_up_to(bound)?;
                if all.len() > count {
                    let mut chosen: Vec<BasisIndex> = all[..count].to_vec();
                    let last = chosen[count - 1];
                    if last.nu > 0 {
                        // keep the basis closed under conjugation
                        chosen.push(all[count]);
                        debug_assert_eq!(all[count].nu, -last.nu);
                    }
                    return Ok(chosen);
                }
                bound *= 1.5;
            }
        }
    }
}

fn enumerate_up_to(lambda: f64) -> Result<Vec<BasisIndex>> {
    let mut out = Vec::new();
    for nu in 0..=MAX_ORDER {
        if (nu as f64) >= lambda {
            break; // lambda_{nu,1} > nu
        }
        let mut q = 0u32;
        let mut batch = 8u32;
        let mut found = Vec::new();
        loop {
            let roots = bessel_roots(nu, q + batch)?;
            found.clear();
            found.extend(roots.into_iter().take_while(|&r| r <= lambda));
            if (found.len() as u32) < q + batch {
                break;
            }
            q += batch;
            batch *= 2;
            if q > MAX_RADIAL {
                return Err(Error::InvalidSelection(format!(
                    "selection needs more than {MAX_RADIAL} radial indices"
                )));
            }
        }
        if found.is_empty() {
            break;
        }
        if nu == MAX_ORDER {
            return Err(Error::InvalidSelection(format!(
                "selection needs angular orders above {MAX_ORDER}"
            )));
        }
        for (qi, &r) in found.iter().enumerate() {
            out.push(BasisIndex {
                nu: nu as i32,
                q: qi as u32 + 1,
                lambda: r,
            });
            if nu > 0 {
                out.push(BasisIndex {
                    nu: -(nu as i32),
                    q: qi as u32 + 1,
                    lambda: r,
                });
            }
        }
    }
    out.sort_by(|a, b| a.canonical_cmp(b));
    Ok(out)
}
