//! Least-squares recovery of coefficients from a binned `S3_hat` target.
//!
//! The cost is `f(z) = sum_j |D_j|^2`, where `D_j` is the sum over the pairs
//! of bin `j` of `S3_hat^z - S3_hat*`.
//!
//! [`cost_and_grad`] evaluates it literally over the full tensor.
//! [`BinnedObjective`] gives the same numbers at a fraction of the cost. For a
//! real image, `S3_hat^z(k1, k2)` is real. It is also unchanged when the triple
//! `(k1, k2, -k1-k2)` is permuted, or when all three frequencies are turned by
//! a quarter turn modulo `4n`. So the model only has to be evaluated once per
//! orbit of that 24-element group. Each bin then collects
//! `multiplicity * value` from the orbits it touches. For even `N`, the
//! angle `phi + pi` contributes the conjugate of the triple product at `phi`,
//! so only the first half of the angles is visited.

use num_complex::Complex64;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::basis::{CoefficientVector, SteerableBasis};
use crate::binning::BinningScheme;
use crate::error::{Error, Result};
use crate::forward::{s3hat_from_coeffs, s3hat_gradient, PrecomputedWeights};
use crate::grid::{Grid, Point};
use crate::invariant::{InvariantTensor, Scale, Space};
use crate::optim::{self, QuasiNewton, Settings, Termination};
use crate::rng;

/// Orbits handled per parallel task; fixed so sums do not depend on threads.
const ORBIT_TILE: usize = 4096;

/// Bin a frequency-domain target with `scheme`.
pub fn bin_target(target: &InvariantTensor, scheme: &BinningScheme) -> Result<Vec<Complex64>> {
    scheme.bin_tensor(target)
}

/// Reference evaluation of the binned cost and its gradient with respect to
/// the real parameters of `z`, through the full `S3_hat^z` tensor.
pub fn cost_and_grad(
    z: &CoefficientVector,
    target: &[Complex64],
    scheme: &BinningScheme,
    basis: &SteerableBasis,
    weights: &PrecomputedWeights,
) -> Result<(f64, Vec<f64>)> {
    check_scheme(scheme, basis, target)?;
    let model = s3hat_from_coeffs(z, basis, weights)?;
    let binned = scheme.bin_tensor(&model)?;
    let diff: Vec<Complex64> = binned.iter().zip(target).map(|(m, t)| m - t).collect();
    let cost = diff.iter().map(|d| d.norm_sqr()).sum();
    let plane = basis.grid.len();
    let mut cotangent = vec![Complex64::new(0.0, 0.0); plane * plane];
    for (pair, bin) in scheme.contributions() {
        cotangent[pair] = diff[bin] * 2.0;
    }
    let grad = s3hat_gradient(z, basis, weights, &cotangent)?;
    Ok((cost, grad))
}

fn check_scheme(
    scheme: &BinningScheme,
    basis: &SteerableBasis,
    target: &[Complex64],
) -> Result<()> {
    if scheme.n != basis.n() {
        return Err(Error::SchemeMismatch(format!(
            "scheme n={} but basis n={}",
            scheme.n,
            basis.n()
        )));
    }
    if target.len() != scheme.len() {
        return Err(Error::SchemeMismatch(format!(
            "target has {} bins, scheme has {}",
            target.len(),
            scheme.len()
        )));
    }
    Ok(())
}

fn quarter_turn(grid: Grid, p: Point) -> Point {
    grid.wrap_point([-p[1], p[0]])
}

/// Smallest flat pair index among the 24 images of `(k1, k2)`.
fn orbit_key(grid: Grid, k1: usize, k2: usize) -> u32 {
    let plane = grid.len();
    let a = grid.point(k1);
    let b = grid.point(k2);
    let mut t = [a, b, grid.wrap_point([-a[0] - b[0], -a[1] - b[1]])];
    let mut best = u32::MAX;
    for _ in 0..4 {
        let idx = [grid.index(t[0]), grid.index(t[1]), grid.index(t[2])];
        for (i, j) in [(0, 1), (1, 0), (0, 2), (2, 0), (1, 2), (2, 1)] {
            best = best.min((idx[i] * plane + idx[j]) as u32);
        }
        for p in t.iter_mut() {
            *p = quarter_turn(grid, *p);
        }
    }
    best
}

/// Orbit-reduced evaluator of the binned cost for a fixed scheme and target.
#[derive(Clone, Debug)]
pub struct BinnedObjective {
    n: usize,
    /// `(k1, k2, k3)` frequency indices of each orbit representative.
    triples: Vec<[u32; 3]>,
    /// CSR over orbits of `(bin, multiplicity)`.
    offsets: Vec<usize>,
    entries: Vec<(u32, u32)>,
    target: Vec<Complex64>,
}

impl BinnedObjective {
    pub fn new(scheme: &BinningScheme, target: Vec<Complex64>) -> Result<Self> {
        if target.len() != scheme.len() {
            return Err(Error::SchemeMismatch(format!(
                "target has {} bins, scheme has {}",
                target.len(),
                scheme.len()
            )));
        }
        let grid = scheme.grid();
        let plane = grid.len();
        let mut keyed: Vec<(u32, u32)> = scheme
            .contributions()
            .into_par_iter()
            .map(|(pair, bin)| (orbit_key(grid, pair / plane, pair % plane), bin as u32))
            .collect();
        keyed.sort_unstable();

        let mut triples = Vec::new();
        let mut offsets = vec![0];
        let mut entries: Vec<(u32, u32)> = Vec::new();
        let mut i = 0;
        while i < keyed.len() {
            let key = keyed[i].0;
            let k1 = key as usize / plane;
            let k2 = key as usize % plane;
            triples.push([k1 as u32, k2 as u32, grid.neg_sum_index(k1, k2) as u32]);
            while i < keyed.len() && keyed[i].0 == key {
                let bin = keyed[i].1;
                let mut count = 0;
                while i < keyed.len() && keyed[i] == (key, bin) {
                    count += 1;
                    i += 1;
                }
                entries.push((bin, count));
            }
            offsets.push(entries.len());
        }
        Ok(BinnedObjective {
            n: scheme.n,
            triples,
            offsets,
            entries,
            target,
        })
    }

    /// Number of distinct model values evaluated per call.
    pub fn orbits(&self) -> usize {
        self.triples.len()
    }

    pub fn target(&self) -> &[Complex64] {
        &self.target
    }

    fn check(&self, basis: &SteerableBasis, weights: &PrecomputedWeights) -> Result<()> {
        weights.check(basis)?;
        if basis.n() != self.n {
            return Err(Error::SchemeMismatch(format!(
                "objective n={} but basis n={}",
                self.n,
                basis.n()
            )));
        }
        Ok(())
    }

    /// Orbit-tile ranges; fixed so every sum runs in the same order.
    fn tiles(&self) -> Vec<std::ops::Range<usize>> {
        let total = self.triples.len();
        (0..total.div_ceil(ORBIT_TILE))
            .map(|t| t * ORBIT_TILE..((t + 1) * ORBIT_TILE).min(total))
            .collect()
    }

    /// Model value of every orbit. `field` is laid out as `[v * plane + k]`
    /// over the visited angles, and the angle loop is outermost so each
    /// angle's plane stays in cache.
    fn orbit_values(&self, field: &[Complex64], plane: usize, w: f64) -> Vec<f64> {
        let nq = field.len() / plane;
        let parts: Vec<Vec<f64>> = self
            .tiles()
            .into_par_iter()
            .map(|range| {
                let triples = &self.triples[range];
                let mut acc = vec![0.0; triples.len()];
                for v in 0..nq {
                    let a = &field[v * plane..][..plane];
                    for (s, t) in acc.iter_mut().zip(triples) {
                        *s += (a[t[0] as usize] * a[t[1] as usize] * a[t[2] as usize]).re;
                    }
                }
                acc.iter_mut().for_each(|s| *s *= w);
                acc
            })
            .collect();
        parts.concat()
    }

    fn scatter(&self, values: &[f64]) -> Vec<f64> {
        let mut bins = vec![0.0; self.target.len()];
        for (o, &val) in values.iter().enumerate() {
            for &(bin, mult) in &self.entries[self.offsets[o]..self.offsets[o + 1]] {
                bins[bin as usize] += mult as f64 * val;
            }
        }
        bins
    }

    /// Binned model sums of `S3_hat^z` (real for a real image).
    pub fn model_bins(
        &self,
        z: &CoefficientVector,
        basis: &SteerableBasis,
        weights: &PrecomputedWeights,
    ) -> Result<Vec<f64>> {
        self.check(basis, weights)?;
        let (count, w) = half_angles(weights);
        let field = weights.field_hat_angles(basis, z, count);
        let values = self.orbit_values(&field, basis.grid.len(), w);
        Ok(self.scatter(&values))
    }

    fn residual_cost(&self, model: &[f64]) -> f64 {
        model
            .iter()
            .zip(&self.target)
            .map(|(m, t)| (m - t.re).powi(2) + t.im * t.im)
            .sum()
    }

    pub fn cost(
        &self,
        z: &CoefficientVector,
        basis: &SteerableBasis,
        weights: &PrecomputedWeights,
    ) -> Result<f64> {
        Ok(self.residual_cost(&self.model_bins(z, basis, weights)?))
    }

    /// Cost and gradient with respect to the real parameters of `z`.
    pub fn cost_and_grad(
        &self,
        z: &CoefficientVector,
        basis: &SteerableBasis,
        weights: &PrecomputedWeights,
    ) -> Result<(f64, Vec<f64>)> {
        self.check(basis, weights)?;
        let plane = basis.grid.len();
        let (nq, w) = half_angles(weights);
        let field = weights.field_hat_angles(basis, z, nq);
        let values = self.orbit_values(&field, plane, w);
        let model = self.scatter(&values);
        let cost = self.residual_cost(&model);
        let residual: Vec<f64> = model
            .iter()
            .zip(&self.target)
            .map(|(m, t)| m - t.re)
            .collect();
        // d cost / d value_o, with the quadrature weight folded in
        let cotangent: Vec<f64> = (0..self.triples.len())
            .map(|o| {
                self.entries[self.offsets[o]..self.offsets[o + 1]]
                    .iter()
                    .map(|&(bin, mult)| 2.0 * mult as f64 * residual[bin as usize])
                    .sum::<f64>()
                    * w
            })
            .collect();

        let tiles: Vec<Vec<Complex64>> = self
            .tiles()
            .into_par_iter()
            .map(|range| {
                let mut h = vec![Complex64::new(0.0, 0.0); nq * plane];
                let triples = &self.triples[range.clone()];
                let cot = &cotangent[range];
                for v in 0..nq {
                    let a = &field[v * plane..][..plane];
                    let hv = &mut h[v * plane..][..plane];
                    for (t, &c) in triples.iter().zip(cot) {
                        let (k1, k2, k3) = (t[0] as usize, t[1] as usize, t[2] as usize);
                        let (a1, a2, a3) = (a[k1], a[k2], a[k3]);
                        hv[k1] += a2 * a3 * c;
                        hv[k2] += a1 * a3 * c;
                        hv[k3] += a1 * a2 * c;
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
        Ok((cost, basis.real_gradient(&g)))
    }
}

/// Angles to visit and the weight that accounts for the skipped ones.
fn half_angles(weights: &PrecomputedWeights) -> (usize, f64) {
    let nq = weights.quadrature;
    if nq % 2 == 0 {
        (nq / 2, 2.0 * weights.weight())
    } else {
        (nq, weights.weight())
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Optimizer {
    /// Full quasi-Newton up to 200 real parameters, limited-memory above.
    #[default]
    Auto,
    QuasiNewtonFull,
    QuasiNewtonLimited,
}

/// Curvature pairs kept by the limited-memory optimizer.
pub const LIMITED_HISTORY: usize = 20;

impl Optimizer {
    pub fn resolve(&self, dim: usize) -> QuasiNewton {
        match self {
            Optimizer::QuasiNewtonFull => QuasiNewton::Full,
            Optimizer::QuasiNewtonLimited => QuasiNewton::Limited {
                history: LIMITED_HISTORY,
            },
            Optimizer::Auto if dim <= 200 => QuasiNewton::Full,
            Optimizer::Auto => QuasiNewton::Limited {
                history: LIMITED_HISTORY,
            },
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RecoveryConfig {
    pub restarts: usize,
    pub max_iterations: usize,
    pub gradient_tolerance: f64,
    /// Multiplier on the scale-matched initial draw.
    pub init_scale: f64,
    pub seed: u64,
    pub optimizer: Optimizer,
}

impl Default for RecoveryConfig {
    fn default() -> Self {
        RecoveryConfig {
            restarts: 5,
            max_iterations: 10_000,
            gradient_tolerance: 1e-14,
            init_scale: 1.0,
            seed: 0,
            optimizer: Optimizer::Auto,
        }
    }
}

impl RecoveryConfig {
    pub fn validate(&self) -> Result<()> {
        if self.restarts == 0 {
            return Err(Error::InvalidArgument("restarts must be at least 1".into()));
        }
        if !(self.gradient_tolerance > 0.0) {
            return Err(Error::InvalidArgument(
                "gradient_tolerance must be positive".into(),
            ));
        }
        if !(self.init_scale > 0.0) {
            return Err(Error::InvalidArgument("init_scale must be positive".into()));
        }
        if self.max_iterations == 0 {
            return Err(Error::InvalidArgument(
                "max_iterations must be positive".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RestartReport {
    pub restart: usize,
    pub initial_cost: f64,
    pub final_cost: f64,
    pub iterations: usize,
    pub evaluations: usize,
    pub converged: bool,
    pub hit_max_iterations: bool,
    pub termination: Termination,
    pub trace: Vec<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RecoveryReport {
    pub per_restart: Vec<RestartReport>,
    pub chosen: usize,
    pub seed: u64,
    pub config: RecoveryConfig,
    pub orbits: usize,
    pub bins: usize,
    /// `c` minimizing `|c^3 M - T|` for the binned model `M` of the result;
    /// close to 1 when the target's overall scale is consistent with the fit.
    pub fitted_scale: f64,
}

/// Random initial real parameters for restart `r`, scaled so that the binned
/// model has the same norm as the target.
pub fn initial_params(
    objective: &BinnedObjective,
    basis: &SteerableBasis,
    weights: &PrecomputedWeights,
    config: &RecoveryConfig,
    restart: usize,
) -> Result<Vec<f64>> {
    let mut rng = rng::stream(config.seed, "recover-init", restart as u64);
    let x: Vec<f64> = (0..basis.real_dim())
        .map(|_| StandardNormal.sample(&mut rng))
        .collect();
    let model = objective.model_bins(&basis.from_real_params(&x), basis, weights)?;
    let model_norm = model.iter().map(|m| m * m).sum::<f64>().sqrt();
    let target_norm = objective
        .target
        .iter()
        .map(|t| t.norm_sqr())
        .sum::<f64>()
        .sqrt();
    let scale = if model_norm > 0.0 && target_norm > 0.0 {
        (target_norm / model_norm).cbrt()
    } else {
        1.0
    };
    Ok(x.iter().map(|v| v * scale * config.init_scale).collect())
}

/// Run `config.restarts` independent minimizations and keep the lowest cost.
pub fn recover(
    target: &InvariantTensor,
    basis: &SteerableBasis,
    scheme: &BinningScheme,
    weights: &PrecomputedWeights,
    config: &RecoveryConfig,
) -> Result<(CoefficientVector, RecoveryReport)> {
    config.validate()?;
    if target.space != Space::Frequency {
        return Err(Error::InvalidArgument(
            "recovery target must be in the frequency domain".into(),
        ));
    }
    if target.scale != Scale::S3Normalized {
        return Err(Error::InvalidArgument(
            "recovery target must be S3-normalized (debias it first)".into(),
        ));
    }
    if target.n != basis.n() {
        return Err(Error::BasisMismatch(format!(
            "target n={} but basis n={}",
            target.n,
            basis.n()
        )));
    }
    weights.check(basis)?;
    let objective = BinnedObjective::new(scheme, scheme.bin_tensor(target)?)?;
    recover_binned(&objective, basis, weights, config)
}

/// [`recover`] for an already prepared objective.
pub fn recover_binned(
    objective: &BinnedObjective,
    basis: &SteerableBasis,
    weights: &PrecomputedWeights,
    config: &RecoveryConfig,
) -> Result<(CoefficientVector, RecoveryReport)> {
    config.validate()?;
    objective.check(basis, weights)?;
    let settings = Settings {
        method: config.optimizer.resolve(basis.real_dim()),
        max_iterations: config.max_iterations,
        gradient_tolerance: config.gradient_tolerance,
    };
    let runs: Vec<(Vec<f64>, RestartReport)> = (0..config.restarts)
        .into_par_iter()
        .map(|r| {
            let x0 = initial_params(objective, basis, weights, config, r)?;
            let out = optim::minimize(
                |x, g| {
                    let z = basis.from_real_params(x);
                    let (c, grad) = objective
                        .cost_and_grad(&z, basis, weights)
                        .expect("objective was checked against the basis");
                    g.copy_from_slice(&grad);
                    c
                },
                x0,
                &settings,
            );
            let report = RestartReport {
                restart: r,
                initial_cost: out.trace[0],
                final_cost: out.cost,
                iterations: out.iterations,
                evaluations: out.evaluations,
                converged: out.converged(),
                hit_max_iterations: out.termination == Termination::MaxIterations,
                termination: out.termination,
                trace: out.trace,
            };
            Ok((out.x, report))
        })
        .collect::<Result<_>>()?;

    let chosen = runs
        .iter()
        .enumerate()
        .min_by(|a, b| {
            a.1 .1
                .final_cost
                .total_cmp(&b.1 .1.final_cost)
                .then(a.0.cmp(&b.0))
        })
        .map(|(i, _)| i)
        .expect("at least one restart");
    let z_best = basis.from_real_params(&runs[chosen].0);
    let model = objective.model_bins(&z_best, basis, weights)?;
    let mm: f64 = model.iter().map(|m| m * m).sum();
    let mt: f64 = model
        .iter()
        .zip(&objective.target)
        .map(|(m, t)| m * t.re)
        .sum();
    let fitted_scale = if mm > 0.0 { (mt / mm).cbrt() } else { 0.0 };
    let report = RecoveryReport {
        per_restart: runs.into_iter().map(|(_, r)| r).collect(),
        chosen,
        seed: config.seed,
        config: *config,
        orbits: objective.orbits(),
        bins: objective.target.len(),
        fitted_scale,
    };
    Ok((z_best, report))
}
