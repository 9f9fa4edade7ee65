//! Invariants of a model image computed from its coefficients.
//!
//! Rotational averages are evaluated with the trapezoidal rule on the angles
//! `phi_v = 2 pi v / N`. Every integrand is a trigonometric polynomial of
//! degree at most `3 nu_max` in `phi`, so the rule is exact once
//! `N > 3 nu_max`; the default is `N = 6 nu_max`. The quadrature weight
//! `2 pi / N` is always applied, so the forward invariants carry the same
//! normalization as the debiased estimate from a micrograph.

use std::f64::consts::PI;

use num_complex::Complex64;
use rayon::prelude::*;

use crate::basis::{CoefficientVector, SteerableBasis};
use crate::error::{Error, Result};
use crate::invariant::{InvariantTensor, Scale, Space};

/// Rows of the frequency plane handled per parallel task. Fixed so that
/// reductions do not depend on the number of threads.
const ROW_TILE: usize = 16;

/// Default quadrature order `6 nu_max` (at least 1).
pub fn default_quadrature(nu_max: u32) -> usize {
    (6 * nu_max as usize).max(1)
}

/// Smallest order that integrates degree `3 nu_max` exactly.
pub fn minimal_quadrature(nu_max: u32) -> usize {
    3 * nu_max as usize + 1
}

/// Angular quadrature and phase tables tied to one basis.
///
/// The vectors `w_{k,phi}` with entries `Psi_hat_j(k) exp(i nu_j phi)` are
/// never stored whole; [`PrecomputedWeights::field_hat`] contracts them with
/// `z` frequency by frequency and [`PrecomputedWeights::w`] materializes a
/// single one on demand.
#[derive(Clone, Debug)]
pub struct PrecomputedWeights {
    pub quadrature: usize,
    pub angles: Vec<f64>,
    nu_max: u32,
    basis_len: usize,
    n: usize,
    /// `phases[(nu + nu_max) * N + v] = exp(i nu phi_v)`.
    phases: Vec<Complex64>,
}

impl PrecomputedWeights {
    pub fn new(basis: &SteerableBasis) -> Self {
        Self::with_quadrature(basis, default_quadrature(basis.nu_max))
    }

    pub fn with_quadrature(basis: &SteerableBasis, quadrature: usize) -> Self {
        assert!(quadrature >= 1, "quadrature order must be positive");
        let nu_max = basis.nu_max;
        let angles: Vec<f64> = (0..quadrature)
            .map(|v| 2.0 * PI * v as f64 / quadrature as f64)
            .collect();
        let mut phases = Vec::with_capacity((2 * nu_max as usize + 1) * quadrature);
        for nu in -(nu_max as i64)..=nu_max as i64 {
            for &phi in &angles {
                phases.push(Complex64::from_polar(1.0, nu as f64 * phi));
            }
        }
        PrecomputedWeights {
            quadrature,
            angles,
            nu_max,
            basis_len: basis.len(),
            n: basis.n(),
            phases,
        }
    }

    pub fn weight(&self) -> f64 {
        2.0 * PI / self.quadrature as f64
    }

    pub fn nu_max(&self) -> u32 {
        self.nu_max
    }

    pub fn phase(&self, nu: i32, v: usize) -> Complex64 {
        self.phases[(nu + self.nu_max as i32) as usize * self.quadrature + v]
    }

    pub fn check(&self, basis: &SteerableBasis) -> Result<()> {
        if basis.len() != self.basis_len || basis.nu_max != self.nu_max || basis.n() != self.n {
            return Err(Error::BasisMismatch(
                "weights were built for a different basis".into(),
            ));
        }
        Ok(())
    }

    /// The vector `w_{k,phi_v}` for frequency index `k`.
    pub fn w(&self, basis: &SteerableBasis, k: usize, v: usize) -> Vec<Complex64> {
        basis
            .indices
            .iter()
            .zip(&basis.psi_hat)
            .map(|(idx, hat)| hat[k] * self.phase(idx.nu, v))
            .collect()
    }

    /// `F_hat_{phi_v}(k) = z^T w_{k,phi_v}` for every angle and frequency,
    /// laid out as `[v * plane + k]`.
    pub fn field_hat(&self, basis: &SteerableBasis, z: &CoefficientVector) -> Vec<Complex64> {
        self.field_hat_angles(basis, z, self.quadrature)
    }

    /// [`PrecomputedWeights::field_hat`] for the first `count` angles only.
    pub fn field_hat_angles(
        &self,
        basis: &SteerableBasis,
        z: &CoefficientVector,
        count: usize,
    ) -> Vec<Complex64> {
        let plane = basis.grid.len();
        let orders = 2 * self.nu_max as usize + 1;
        // per-order radial sums G_nu(k) = sum_q z_{nu,q} Psi_hat_{nu,q}(k)
        let mut by_order = vec![Complex64::new(0.0, 0.0); orders * plane];
        for ((idx, hat), zj) in basis.indices.iter().zip(&basis.psi_hat).zip(&z.values) {
            let row = &mut by_order[(idx.nu + self.nu_max as i32) as usize * plane..][..plane];
            for (acc, h) in row.iter_mut().zip(hat) {
                *acc += zj * h;
            }
        }
        let mut out = vec![Complex64::new(0.0, 0.0); count.min(self.quadrature) * plane];
        out.par_chunks_mut(plane).enumerate().for_each(|(v, row)| {
            for o in 0..orders {
                let ph = self.phases[o * self.quadrature + v];
                let src = &by_order[o * plane..][..plane];
                for (acc, g) in row.iter_mut().zip(src) {
                    *acc += ph * g;
                }
            }
        });
        out
    }

    /// Pull back per-angle frequency cotangents `H[v * plane + k]` to the
    /// complex coefficient gradient `G_j = sum_v sum_k e^{i nu_j phi_v}
    /// Psi_hat_j(k) H_v(k)`. A shorter `h` covers the first angles only.
    pub fn pull_back(&self, basis: &SteerableBasis, h: &[Complex64]) -> Vec<Complex64> {
        let plane = basis.grid.len();
        let count = (h.len() / plane).min(self.quadrature);
        let orders = 2 * self.nu_max as usize + 1;
        let mut by_order = vec![Complex64::new(0.0, 0.0); orders * plane];
        by_order
            .par_chunks_mut(plane)
            .enumerate()
            .for_each(|(o, row)| {
                for v in 0..count {
                    let ph = self.phases[o * self.quadrature + v];
                    for (acc, x) in row.iter_mut().zip(&h[v * plane..][..plane]) {
                        *acc += ph * x;
                    }
                }
            });
        basis
            .indices
            .iter()
            .zip(&basis.psi_hat)
            .map(|(idx, hat)| {
                let row = &by_order[(idx.nu + self.nu_max as i32) as usize * plane..][..plane];
                hat.iter().zip(row).map(|(a, b)| a * b).sum()
            })
            .collect()
    }
}

/// `S1 = int_0^{2 pi} sum_x F_phi(x) dphi`; only the `nu = 0` terms survive.
pub fn s1(z: &CoefficientVector, basis: &SteerableBasis) -> f64 {
    let origin = basis.grid.index([0, 0]);
    let total: Complex64 = basis
        .indices
        .iter()
        .zip(&basis.psi_hat)
        .zip(&z.values)
        .filter(|((idx, _), _)| idx.nu == 0)
        .map(|((_, hat), zj)| zj * hat[origin])
        .sum();
    2.0 * PI * total.re
}

/// Real-space `S3(x1, x2)` by angular quadrature over rotated syntheses.
pub fn s3_direct(z: &CoefficientVector, basis: &SteerableBasis) -> Result<InvariantTensor> {
    s3_direct_with(z, basis, default_quadrature(basis.nu_max))
}

pub fn s3_direct_with(
    z: &CoefficientVector,
    basis: &SteerableBasis,
    quadrature: usize,
) -> Result<InvariantTensor> {
    let grid = basis.grid;
    let plane = grid.len();
    let support = basis.support();
    let weight = 2.0 * PI / quadrature as f64;
    // offset index of y - x for support pixels x, y
    let diff: Vec<usize> = support
        .iter()
        .flat_map(|&x| {
            let px = grid.point(x);
            support.iter().map(move |&y| {
                let py = grid.point(y);
                grid.index([py[0] - px[0], py[1] - px[1]])
            })
        })
        .collect();
    let s = support.len();
    let mut out = vec![0.0; plane * plane];
    for v in 0..quadrature {
        let phi = 2.0 * PI * v as f64 / quadrature as f64;
        let image = basis.synthesize(&basis.steer(z, phi))?;
        let vals: Vec<f64> = support.iter().map(|&p| image.data[p]).collect();
        for a in 0..s {
            let fa = vals[a] * weight;
            if fa == 0.0 {
                continue;
            }
            let row = &diff[a * s..][..s];
            for b in 0..s {
                let fab = fa * vals[b];
                let base = row[b] * plane;
                for c in 0..s {
                    out[base + row[c]] += fab * vals[c];
                }
            }
        }
    }
    InvariantTensor::from_real(basis.n(), Scale::S3Normalized, out)
}

/// Flat index of `-(k1 + k2)` for every `k2`, given `k1`.
fn neg_sum_row(grid: crate::grid::Grid, k1: usize) -> Vec<usize> {
    (0..grid.len())
        .map(|k2| grid.neg_sum_index(k1, k2))
        .collect()
}

/// `S3_hat^z(k1, k2) = (2 pi / N) sum_v F_hat_v(k1) F_hat_v(k2) F_hat_v(-k1-k2)`.
pub fn s3hat_from_coeffs(
    z: &CoefficientVector,
    basis: &SteerableBasis,
    weights: &PrecomputedWeights,
) -> Result<InvariantTensor> {
    weights.check(basis)?;
    if z.len() != basis.len() {
        return Err(Error::BasisMismatch("coefficient length".into()));
    }
    let grid = basis.grid;
    let plane = grid.len();
    let nq = weights.quadrature;
    let fh = weights.field_hat(basis, z);
    let w = weights.weight();
    let mut out = vec![Complex64::new(0.0, 0.0); plane * plane];
    out.par_chunks_mut(plane).enumerate().for_each(|(k1, row)| {
        let k3 = neg_sum_row(grid, k1);
        for v in 0..nq {
            let a = &fh[v * plane..][..plane];
            let a1 = a[k1] * w;
            for k2 in 0..plane {
                row[k2] += a1 * a[k2] * a[k3[k2]];
            }
        }
    });
    InvariantTensor::from_frequency(basis.n(), Scale::S3Normalized, out)
}

/// Gradient of `Re <cotangent, S3_hat^z> = Re sum conj(c) S3_hat^z` with
/// respect to the real parameters of `z`.
pub fn s3hat_gradient(
    z: &CoefficientVector,
    basis: &SteerableBasis,
    weights: &PrecomputedWeights,
    cotangent: &[Complex64],
) -> Result<Vec<f64>> {
    weights.check(basis)?;
    let grid = basis.grid;
    let plane = grid.len();
    if cotangent.len() != plane * plane {
        return Err(Error::SizeMismatch(format!(
            "cotangent has {} entries, expected {}",
            cotangent.len(),
            plane * plane
        )));
    }
    let nq = weights.quadrature;
    let fh = weights.field_hat(basis, z);
    let w = weights.weight();
    let tiles: Vec<Vec<Complex64>> = (0..plane.div_ceil(ROW_TILE))
        .into_par_iter()
        .map(|t| {
            let mut h = vec![Complex64::new(0.0, 0.0); nq * plane];
            for k1 in t * ROW_TILE..((t + 1) * ROW_TILE).min(plane) {
                let k3 = neg_sum_row(grid, k1);
                let crow = &cotangent[k1 * plane..][..plane];
                for v in 0..nq {
                    let a = &fh[v * plane..][..plane];
                    let hv = &mut h[v * plane..][..plane];
                    let a1 = a[k1];
                    let mut d1 = Complex64::new(0.0, 0.0);
                    for k2 in 0..plane {
                        let c = crow[k2].conj() * w;
                        let a2 = a[k2];
                        let a3 = a[k3[k2]];
                        d1 += c * a2 * a3;
                        hv[k2] += c * a1 * a3;
                        hv[k3[k2]] += c * a1 * a2;
                    }
                    hv[k1] += d1;
                }
            }
            h
        })
        .collect();
    let mut h = vec![Complex64::new(0.0, 0.0); nq * plane];
    for tile in &tiles {
        for (acc, x) in h.iter_mut().zip(tile) {
            *acc += x;
        }
    }
    let g = weights.pull_back(basis, &h);
    Ok(basis.real_gradient(&g))
}

/// `Re <cotangent, S3_hat^z>`, the scalar whose gradient [`s3hat_gradient`] returns.
pub fn s3hat_pairing(tensor: &InvariantTensor, cotangent: &[Complex64]) -> f64 {
    match tensor.space {
        Space::Frequency => tensor
            .complex()
            .expect("frequency tensor is complex")
            .iter()
            .zip(cotangent)
            .map(|(s, c)| (c.conj() * s).re)
            .sum(),
        Space::RealOffsets => tensor
            .real()
            .expect("offsets tensor is real")
            .iter()
            .zip(cotangent)
            .map(|(s, c)| c.re * s)
            .sum(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basis::Selection;
    use crate::invariant::dft_s3;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_real(basis: &SteerableBasis, seed: u64) -> CoefficientVector {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let params: Vec<f64> = (0..basis.real_dim())
            .map(|_| rng.gen_range(-1.0..1.0))
            .collect();
        basis.from_real_params(&params)
    }

    fn rel(a: &[Complex64], b: &[Complex64]) -> f64 {
        let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y).norm_sqr()).sum();
        let den: f64 = b.iter().map(|y| y.norm_sqr()).sum();
        (num / den).sqrt()
    }

    #[test]
    fn s1_cases() {
        let b = SteerableBasis::build(6, Selection::Count(12)).unwrap();
        assert_eq!(s1(&CoefficientVector::zeros(b.len()), &b), 0.0);

        let mut only_angular = random_real(&b, 2);
        for (v, idx) in only_angular.values.iter_mut().zip(&b.indices) {
            if idx.nu == 0 {
                *v = Complex64::new(0.0, 0.0);
            }
        }
        assert!(s1(&only_angular, &b).abs() < 1e-12);

        // quadrature oracle with N = 2 nu_max + 2 angles
        let z = random_real(&b, 3);
        let nq = 2 * b.nu_max as usize + 2;
        let oracle: f64 = (0..nq)
            .map(|v| {
                let phi = 2.0 * PI * v as f64 / nq as f64;
                b.synthesize(&b.steer(&z, phi)).unwrap().sum()
            })
            .sum::<f64>()
            * 2.0
            * PI
            / nq as f64;
        assert!((s1(&z, &b) - oracle).abs() < 1e-12 * oracle.abs().max(1.0));
    }

    #[test]
    fn radial_image_needs_no_rotation_average() {
        let b = SteerableBasis::build(4, Selection::Count(6)).unwrap();
        let mut z = CoefficientVector::zeros(b.len());
        z.values[0] = Complex64::new(1.0, 0.0);
        let s3 = s3_direct(&z, &b).unwrap();
        let f = b.synthesize(&z).unwrap();
        let g = b.grid;
        let plane = g.len();
        // plain triple correlation of Psi_{0,1}
        let mut want = vec![0.0; plane * plane];
        for x in 0..plane {
            let px = g.point(x);
            for y1 in 0..plane {
                for y2 in 0..plane {
                    let p1 = g.point(y1);
                    let p2 = g.point(y2);
                    let o1 = [p1[0] - px[0], p1[1] - px[1]];
                    let o2 = [p2[0] - px[0], p2[1] - px[1]];
                    if g.contains(o1) && g.contains(o2) {
                        want[g.index(o1) * plane + g.index(o2)] +=
                            f.data[x] * f.data[y1] * f.data[y2];
                    }
                }
            }
        }
        for (a, w) in s3.real().unwrap().iter().zip(&want) {
            assert!((a - 2.0 * PI * w).abs() < 1e-12);
        }
    }

    #[test]
    fn bispectrum_identity_small() {
        let b = SteerableBasis::build(3, Selection::Count(8)).unwrap();
        let w = PrecomputedWeights::new(&b);
        let z = random_real(&b, 1);
        let direct = dft_s3(&s3_direct(&z, &b).unwrap()).unwrap();
        let fast = s3hat_from_coeffs(&z, &b, &w).unwrap();
        assert!(rel(fast.complex().unwrap(), direct.complex().unwrap()) < 1e-10);
    }

    #[test]
    fn homogeneity_and_zero() {
        let b = SteerableBasis::build(3, Selection::Count(8)).unwrap();
        let w = PrecomputedWeights::new(&b);
        let z = random_real(&b, 5);
        let base = s3hat_from_coeffs(&z, &b, &w).unwrap();
        let zero = s3hat_from_coeffs(&CoefficientVector::zeros(b.len()), &b, &w).unwrap();
        assert!(zero.complex().unwrap().iter().all(|v| v.norm() == 0.0));
        for c in [-1.0, 2.0, 0.5] {
            let scaled = s3hat_from_coeffs(&z.scaled(c), &b, &w).unwrap();
            let want = base.scaled(c * c * c);
            assert!(rel(scaled.complex().unwrap(), want.complex().unwrap()) < 1e-14);
        }
    }

    #[test]
    fn w_vector_pairs_to_field_hat() {
        let b = SteerableBasis::build(3, Selection::Count(8)).unwrap();
        let w = PrecomputedWeights::new(&b);
        let z = random_real(&b, 6);
        let fh = w.field_hat(&b, &z);
        let plane = b.grid.len();
        for (k, v) in [(0, 0), (5, 3), (17, w.quadrature - 1)] {
            let pair: Complex64 = w
                .w(&b, k, v)
                .iter()
                .zip(&z.values)
                .map(|(a, c)| a * c)
                .sum();
            assert!((pair - fh[v * plane + k]).norm() < 1e-13);
        }
    }

    #[test]
    fn gradient_matches_central_differences() {
        let b = SteerableBasis::build(4, Selection::Count(6)).unwrap();
        assert_eq!(b.nu_max, 2);
        let w = PrecomputedWeights::new(&b);
        let plane = b.grid.len();
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let cot: Vec<Complex64> = (0..plane * plane)
            .map(|_| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
            .collect();
        let z = random_real(&b, 8);
        let params = b.to_real_params(&z);
        let grad = s3hat_gradient(&z, &b, &w, &cot).unwrap();
        let f = |p: &[f64]| {
            let t = s3hat_from_coeffs(&b.from_real_params(p), &b, &w).unwrap();
            s3hat_pairing(&t, &cot)
        };
        let h = 1e-6;
        let fd: Vec<f64> = (0..params.len())
            .map(|i| {
                let mut up = params.clone();
                let mut dn = params.clone();
                up[i] += h;
                dn[i] -= h;
                (f(&up) - f(&dn)) / (2.0 * h)
            })
            .collect();
        let num: f64 = grad.iter().zip(&fd).map(|(a, c)| (a - c).powi(2)).sum();
        let den: f64 = fd.iter().map(|c| c * c).sum();
        assert!(
            (num / den).sqrt() < 1e-5,
            "relative error {}",
            (num / den).sqrt()
        );
    }

    #[test]
    fn gradient_trivial_cases() {
        let b = SteerableBasis::build(3, Selection::Count(8)).unwrap();
        let w = PrecomputedWeights::new(&b);
        let plane = b.grid.len();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let cot: Vec<Complex64> = (0..plane * plane)
            .map(|_| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
            .collect();
        let g0 = s3hat_gradient(&CoefficientVector::zeros(b.len()), &b, &w, &cot).unwrap();
        assert!(g0.iter().all(|v| *v == 0.0));
        let z = random_real(&b, 1);
        let zero_cot = vec![Complex64::new(0.0, 0.0); plane * plane];
        assert!(s3hat_gradient(&z, &b, &w, &zero_cot)
            .unwrap()
            .iter()
            .all(|v| *v == 0.0));
        assert!(s3hat_gradient(&z, &b, &w, &cot[..10]).is_err());
    }
}
