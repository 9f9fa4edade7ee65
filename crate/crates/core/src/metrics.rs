//! Reconstruction and invariant-estimation errors.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::basis::{CoefficientVector, SteerableBasis};
use crate::error::{Error, Result};
use crate::invariant::{InvariantTensor, TensorData};

/// Coarse grid used to locate the best rotation before refinement.
pub const PHI_GRID: usize = 4096;
/// Width at which golden-section refinement stops. The search minimizes the
/// residual norm itself, which is V-shaped at an exact match, so it keeps
/// improving well below `1e-10`.
pub const PHI_TOLERANCE: f64 = 1e-13;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ErrorReport {
    pub error_recon: f64,
    pub best_phi: f64,
    pub error_s3: Option<f64>,
}

/// `||F_ref - F_est^phi||^2` as a trigonometric polynomial in `phi`.
///
/// With `P_nu` the order-`nu` part of the estimate, the residual norm is
/// `const + Re sum_d c_d e^{i d phi}` for `d` in `0..=2 nu_max`.
struct TrigObjective {
    constant: f64,
    coeffs: Vec<Complex64>,
}

impl TrigObjective {
    fn new(reference: &[f64], est: &CoefficientVector, basis: &SteerableBasis) -> Self {
        let nu_max = basis.nu_max as i32;
        let orders = (2 * nu_max + 1) as usize;
        let support = basis.support();
        let mut parts = vec![vec![Complex64::new(0.0, 0.0); support.len()]; orders];
        for ((idx, psi), zj) in basis.indices.iter().zip(&basis.psi).zip(&est.values) {
            let row = &mut parts[(idx.nu + nu_max) as usize];
            for (acc, &pix) in row.iter_mut().zip(support) {
                *acc += zj * psi[pix];
            }
        }
        let f0: Vec<f64> = support.iter().map(|&p| reference[p]).collect();
        let mut constant: f64 = f0.iter().map(|v| v * v).sum();
        // e^{i d phi} with d >= 0; negative d folds in as the conjugate
        let mut coeffs = vec![Complex64::new(0.0, 0.0); 2 * nu_max as usize + 1];
        for (a, pa) in parts.iter().enumerate() {
            let cross: Complex64 = f0.iter().zip(pa).map(|(f, p)| p * f).sum();
            let nu = a as i32 - nu_max;
            if nu == 0 {
                constant -= 2.0 * cross.re;
            } else if nu > 0 {
                coeffs[nu as usize] -= cross * 2.0;
            }
            // nu < 0 is the conjugate partner of -nu for a real reference,
            // handled through the real part below
            if nu < 0 {
                coeffs[(-nu) as usize] -= cross.conj() * 2.0;
            }
            for (b, pb) in parts.iter().enumerate() {
                let d = b as i32 - a as i32;
                if d < 0 {
                    continue;
                }
                let g: Complex64 = pa.iter().zip(pb).map(|(x, y)| x.conj() * y).sum();
                if d == 0 {
                    constant += g.re;
                } else {
                    coeffs[d as usize] += g * 2.0;
                }
            }
        }
        TrigObjective { constant, coeffs }
    }

    fn eval(&self, phi: f64) -> f64 {
        let mut s = self.constant;
        for (d, c) in self.coeffs.iter().enumerate().skip(1) {
            s += (c * Complex64::from_polar(1.0, d as f64 * phi)).re;
        }
        s
    }
}

/// Direct `||F_ref - F_est^phi||_2`.
fn residual_norm(
    reference: &[f64],
    est: &CoefficientVector,
    basis: &SteerableBasis,
    phi: f64,
) -> f64 {
    let f = basis.synthesize_complex(&basis.steer(est, phi));
    basis
        .support()
        .iter()
        .map(|&p| (reference[p] - f[p].re).powi(2))
        .sum::<f64>()
        .sqrt()
}

/// `inf_phi ||F_ref - F_est^phi|| / ||F_ref||` and the minimizing angle.
pub fn error_recon(
    z_ref: &CoefficientVector,
    z_est: &CoefficientVector,
    basis: &SteerableBasis,
) -> Result<(f64, f64)> {
    if z_ref.len() != basis.len() || z_est.len() != basis.len() {
        return Err(Error::BasisMismatch(
            "coefficient length does not match basis".into(),
        ));
    }
    let reference: Vec<f64> = basis
        .synthesize_complex(z_ref)
        .iter()
        .map(|v| v.re)
        .collect();
    let ref_norm = reference.iter().map(|v| v * v).sum::<f64>().sqrt();
    if ref_norm == 0.0 {
        return Err(Error::ZeroReference("reference image is zero"));
    }
    let trig = TrigObjective::new(&reference, z_est, basis);
    let step = 2.0 * PI / PHI_GRID as f64;
    let best = (0..PHI_GRID)
        .map(|i| (i, trig.eval(i as f64 * step)))
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .map(|(i, _)| i)
        .expect("grid is non-empty");

    let f = |phi: f64| residual_norm(&reference, z_est, basis, phi);
    let (phi, value) = golden_section(f, (best as f64 - 1.0) * step, (best as f64 + 1.0) * step);
    let grid_value = f(best as f64 * step);
    let (phi, value) = if grid_value < value {
        (best as f64 * step, grid_value)
    } else {
        (phi, value)
    };
    Ok((value / ref_norm, phi.rem_euclid(2.0 * PI)))
}

fn golden_section<F: Fn(f64) -> f64>(f: F, mut a: f64, mut b: f64) -> (f64, f64) {
    let ratio = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - ratio * (b - a);
    let mut d = a + ratio * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    while b - a > PHI_TOLERANCE {
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - ratio * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + ratio * (b - a);
            fd = f(d);
        }
        if c >= d {
            break;
        }
    }
    if fc <= fd {
        (c, fc)
    } else {
        (d, fd)
    }
}

/// Both errors for a reconstruction, with `error_s3` when tensors are given.
pub fn evaluate(
    z_ref: &CoefficientVector,
    z_est: &CoefficientVector,
    basis: &SteerableBasis,
    tensors: Option<(&InvariantTensor, &InvariantTensor)>,
) -> Result<ErrorReport> {
    let (error_recon, best_phi) = error_recon(z_ref, z_est, basis)?;
    let error_s3 = tensors.map(|(a, b)| error_s3(a, b)).transpose()?;
    Ok(ErrorReport {
        error_recon,
        best_phi,
        error_s3,
    })
}

/// `||S_ref - S_est||_F / ||S_ref||_F`.
pub fn error_s3(reference: &InvariantTensor, estimate: &InvariantTensor) -> Result<f64> {
    if reference.n != estimate.n || reference.space != estimate.space {
        return Err(Error::SizeMismatch(
            "tensors differ in size or domain".into(),
        ));
    }
    let diff: f64 = match (&reference.data, &estimate.data) {
        (TensorData::Real(a), TensorData::Real(b)) => {
            a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum()
        }
        (TensorData::Complex(a), TensorData::Complex(b)) => {
            a.iter().zip(b).map(|(x, y)| (x - y).norm_sqr()).sum()
        }
        _ => return Err(Error::SizeMismatch("tensors differ in element type".into())),
    };
    let norm = reference.norm();
    if norm == 0.0 {
        return Err(Error::ZeroReference("reference tensor is zero"));
    }
    Ok(diff.sqrt() / norm)
}
