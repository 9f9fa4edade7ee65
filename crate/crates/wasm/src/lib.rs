//! Browser bindings: synthesize and rotate a target, preview a micrograph,
//! and check that the third-order invariant ignores rotation.

use irt_core::forward::s3_direct;
use irt_core::metrics::error_s3;
use irt_core::simulate::simulate;
use irt_core::{phantom, rng, CoefficientVector, Result, Selection, SteerableBasis};
use rand::Rng;
use rand_distr::StandardNormal;
use wasm_bindgen::prelude::*;

/// A basis together with the current coefficients.
pub struct Target {
    pub basis: SteerableBasis,
    pub z: CoefficientVector,
}

impl Target {
    pub fn new(n: usize, count: usize) -> Result<Self> {
        let basis = SteerableBasis::build(n, Selection::Count(count))?;
        let z = basis.expand(&phantom::image(n))?;
        Ok(Target { basis, z })
    }

    pub fn randomize(&mut self, seed: u64) {
        let mut r = rng::stream(seed, "demo", 0);
        let x: Vec<f64> = (0..self.basis.real_dim())
            .map(|_| r.sample::<f64, _>(StandardNormal))
            .collect();
        self.z = self.basis.from_real_params(&x);
    }

    /// `(2n+1) x (2n+1)` raster of the target rotated by `angle`.
    pub fn image(&self, angle: f64) -> Result<Vec<f64>> {
        let img = self.basis.synthesize(&self.basis.steer(&self.z, angle))?;
        Ok(img.to_raster())
    }

    pub fn micrograph(&self, m: usize, p: usize, sigma: f64, seed: u64) -> Result<Vec<f64>> {
        Ok(simulate(&self.z, &self.basis, m, p, sigma, seed)?.pixels)
    }

    /// Relative difference between the invariants of the target and of its
    /// rotation by `angle`.
    pub fn invariance_gap(&self, angle: f64) -> Result<f64> {
        let a = s3_direct(&self.z, &self.basis)?;
        let b = s3_direct(&self.basis.steer(&self.z, angle), &self.basis)?;
        error_s3(&a, &b)
    }
}

fn js(e: irt_core::Error) -> JsError {
    JsError::new(&e.to_string())
}

#[wasm_bindgen]
pub struct Demo(Target);

#[wasm_bindgen]
impl Demo {
    #[wasm_bindgen(constructor)]
    pub fn new(n: usize, count: usize) -> std::result::Result<Demo, JsError> {
        Target::new(n, count).map(Demo).map_err(js)
    }

    pub fn n(&self) -> usize {
        self.0.basis.n()
    }

    pub fn count(&self) -> usize {
        self.0.basis.len()
    }

    pub fn nu_max(&self) -> u32 {
        self.0.basis.nu_max
    }

    pub fn randomize(&mut self, seed: u32) {
        self.0.randomize(seed as u64);
    }

    pub fn image(&self, angle: f64) -> std::result::Result<Vec<f64>, JsError> {
        self.0.image(angle).map_err(js)
    }

    pub fn micrograph(
        &self,
        m: usize,
        p: usize,
        sigma: f64,
        seed: u32,
    ) -> std::result::Result<Vec<f64>, JsError> {
        self.0.micrograph(m, p, sigma, seed as u64).map_err(js)
    }

    pub fn invariance_gap(&self, angle: f64) -> std::result::Result<f64, JsError> {
        self.0.invariance_gap(angle).map_err(js)
    }
}
