//! Four-index invariant tensors over offset pairs or frequency pairs.
//!
//! Entry `(p1, p2)` with flat grid indices `p1`, `p2` is stored at
//! `p1 * side^2 + p2`, i.e. the axes are `(x1[0], x1[1], x2[0], x2[1])` in
//! row-major order.

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{centered_dft, Direction, Grid};
use crate::rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Space {
    RealOffsets,
    Frequency,
}

/// Whether the `gamma / 2 pi` factor of the raw autocorrelation has been removed.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scale {
    S3Normalized,
    A3Raw,
}

#[derive(Clone, Debug, PartialEq)]
pub enum TensorData {
    Real(Vec<f64>),
    Complex(Vec<Complex64>),
}

#[derive(Clone, Debug, PartialEq)]
pub struct InvariantTensor {
    pub n: usize,
    pub space: Space,
    pub scale: Scale,
    pub data: TensorData,
}

impl InvariantTensor {
    pub fn zeros_real(n: usize, scale: Scale) -> Self {
        let len = Grid::new(n).len().pow(2);
        InvariantTensor {
            n,
            space: Space::RealOffsets,
            scale,
            data: TensorData::Real(vec![0.0; len]),
        }
    }

    pub fn from_real(n: usize, scale: Scale, data: Vec<f64>) -> Result<Self> {
        check_len(n, data.len())?;
        Ok(InvariantTensor {
            n,
            space: Space::RealOffsets,
            scale,
            data: TensorData::Real(data),
        })
    }

    pub fn from_frequency(n: usize, scale: Scale, data: Vec<Complex64>) -> Result<Self> {
        check_len(n, data.len())?;
        Ok(InvariantTensor {
            n,
            space: Space::Frequency,
            scale,
            data: TensorData::Complex(data),
        })
    }

    pub fn grid(&self) -> Grid {
        Grid::new(self.n)
    }

    /// Number of grid points per offset (`(4n)^2`).
    pub fn plane(&self) -> usize {
        self.grid().len()
    }

    pub fn len(&self) -> usize {
        self.plane() * self.plane()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn shape(&self) -> [usize; 4] {
        let s = self.grid().side();
        [s; 4]
    }

    pub fn index(&self, p1: usize, p2: usize) -> usize {
        p1 * self.plane() + p2
    }

    pub fn real(&self) -> Option<&[f64]> {
        match &self.data {
            TensorData::Real(v) => Some(v),
            TensorData::Complex(_) => None,
        }
    }

    pub fn real_mut(&mut self) -> Option<&mut [f64]> {
        match &mut self.data {
            TensorData::Real(v) => Some(v),
            TensorData::Complex(_) => None,
        }
    }

    pub fn complex(&self) -> Option<&[Complex64]> {
        match &self.data {
            TensorData::Complex(v) => Some(v),
            TensorData::Real(_) => None,
        }
    }

    pub fn to_complex(&self) -> Vec<Complex64> {
        match &self.data {
            TensorData::Real(v) => v.iter().map(|&x| Complex64::new(x, 0.0)).collect(),
            TensorData::Complex(v) => v.clone(),
        }
    }

    pub fn norm(&self) -> f64 {
        match &self.data {
            TensorData::Real(v) => v.iter().map(|x| x * x).sum::<f64>().sqrt(),
            TensorData::Complex(v) => v.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt(),
        }
    }

    pub fn scaled(&self, c: f64) -> Self {
        let data = match &self.data {
            TensorData::Real(v) => TensorData::Real(v.iter().map(|x| x * c).collect()),
            TensorData::Complex(v) => TensorData::Complex(v.iter().map(|x| x * c).collect()),
        };
        InvariantTensor { data, ..*self }
    }

    /// Add i.i.d. Gaussian noise to a real tensor with per-entry standard
    /// deviation `level * ||T|| / sqrt(len)`, so the relative error is close
    /// to `level`.
    pub fn with_noise(&self, level: f64, seed: u64) -> Result<Self> {
        let values = self
            .real()
            .ok_or_else(|| Error::InvalidArgument("noise is added in the offset domain".into()))?;
        if !(level.is_finite() && level >= 0.0) {
            return Err(Error::InvalidArgument(format!(
                "noise level must be >= 0, got {level}"
            )));
        }
        let std = level * self.norm() / (values.len() as f64).sqrt();
        let mut rng = rng::stream(seed, "invariant-noise", 0);
        let noisy = values
            .iter()
            .map(|v| v + std * rng.sample::<f64, _>(StandardNormal))
            .collect();
        InvariantTensor::from_real(self.n, self.scale, noisy)
    }

    /// Largest violation of `T(-k1,-k2) = conj T(k1,k2)` (frequency domain).
    pub fn hermitian_defect(&self) -> f64 {
        let g = self.grid();
        let plane = self.plane();
        match &self.data {
            TensorData::Complex(v) => {
                let mut worst = 0.0_f64;
                for p1 in 0..plane {
                    let m1 = g.negate_index(p1);
                    for p2 in 0..plane {
                        let m2 = g.negate_index(p2);
                        let d = v[m1 * plane + m2] - v[p1 * plane + p2].conj();
                        worst = worst.max(d.norm());
                    }
                }
                worst
            }
            TensorData::Real(_) => 0.0,
        }
    }
}

fn check_len(n: usize, len: usize) -> Result<()> {
    let want = Grid::new(n).len().pow(2);
    if len != want {
        return Err(Error::SizeMismatch(format!(
            "tensor for n={n} needs {want} entries, got {len}"
        )));
    }
    Ok(())
}

/// DFT over both offsets with the `exp(-2 pi i (k1.x1 + k2.x2) / 4n)` kernel.
pub fn dft_s3(tensor: &InvariantTensor) -> Result<InvariantTensor> {
    if tensor.space != Space::RealOffsets {
        return Err(Error::InvalidArgument(
            "dft_s3 expects an offsets-domain tensor".into(),
        ));
    }
    let mut data = tensor.to_complex();
    centered_dft(&mut data, tensor.grid().side(), 4, Direction::Forward);
    InvariantTensor::from_frequency(tensor.n, tensor.scale, data)
}

/// Inverse of [`dft_s3`]; the imaginary residue is dropped.
pub fn idft_s3(tensor: &InvariantTensor) -> Result<InvariantTensor> {
    if tensor.space != Space::Frequency {
        return Err(Error::InvalidArgument(
            "idft_s3 expects a frequency-domain tensor".into(),
        ));
    }
    let mut data = tensor.to_complex();
    centered_dft(&mut data, tensor.grid().side(), 4, Direction::Inverse);
    InvariantTensor::from_real(tensor.n, tensor.scale, data.iter().map(|v| v.re).collect())
}
