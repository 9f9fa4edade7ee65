use irt_core::autocorr::{compute_a3, debias};
use irt_core::forward::s3hat_from_coeffs;
use irt_core::metrics::error_recon;
use irt_core::recover::recover;
use irt_core::simulate::{place_targets, render_micrograph};
use irt_core::{
    rng, BinningParams, BinningScheme, CoefficientVector, Placement, PrecomputedWeights,
    RecoveryConfig, Selection, SteerableBasis,
};
use proptest::prelude::*;
use rand::Rng;
use rand_distr::StandardNormal;

fn random_z(basis: &SteerableBasis, seed: u64) -> CoefficientVector {
    let mut r = rng::stream(seed, "properties", 0);
    let x: Vec<f64> = (0..basis.real_dim())
        .map(|_| r.sample::<f64, _>(StandardNormal))
        .collect();
    basis.from_real_params(&x)
}

/// Coefficients whose synthesized image has unit norm.
fn unit(basis: &SteerableBasis, z: CoefficientVector) -> CoefficientVector {
    let norm = basis.synthesize(&z).unwrap().norm();
    z.scaled(1.0 / norm)
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 16, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn error_recon_ignores_steering_of_the_estimate(seed in any::<u64>(), psi in 0.0..std::f64::consts::TAU) {
        let basis = SteerableBasis::build(6, Selection::Count(30)).unwrap();
        let a = random_z(&basis, seed);
        let b = random_z(&basis, seed ^ 1);
        let (e, _) = error_recon(&a, &b, &basis).unwrap();
        let (e_steered, _) = error_recon(&a, &basis.steer(&b, psi), &basis).unwrap();
        prop_assert!((e - e_steered).abs() <= 1e-10, "{} vs {}", e, e_steered);
    }

    /// Rotating the optimal residual of `(a, b)` back gives a candidate for
    /// `(b, a)`, so `e(b, a) <= e(a, b) * rho`, where `rho` is how much that
    /// rotation changes the sampled norm of the residual (1 for an exact
    /// isometry).
    #[test]
    fn error_recon_is_symmetric_up_to_sampled_rotation(seed in any::<u64>()) {
        let basis = SteerableBasis::build(6, Selection::Count(30)).unwrap();
        let a = unit(&basis, random_z(&basis, seed));
        let b = unit(&basis, random_z(&basis, seed ^ 2));
        let bound = |x: &CoefficientVector, y: &CoefficientVector| {
            let (e, phi) = error_recon(x, y, &basis).unwrap();
            let steered = basis.steer(y, phi);
            let residual = CoefficientVector {
                values: x.values.iter().zip(&steered.values).map(|(p, q)| p - q).collect(),
            };
            let before = basis.synthesize(&residual).unwrap().norm();
            let after = basis.synthesize(&basis.steer(&residual, -phi)).unwrap().norm();
            (e, e * after / before)
        };
        let (ab, ab_bound) = bound(&a, &b);
        let (ba, ba_bound) = bound(&b, &a);
        prop_assert!(ba <= ab_bound + 1e-9, "{} > {}", ba, ab_bound);
        prop_assert!(ab <= ba_bound + 1e-9, "{} > {}", ab, ba_bound);
    }
}

#[test]
fn one_per_bin_and_full_bins_recover_the_same_image() {
    let n = 4;
    let basis = SteerableBasis::build(n, Selection::Count(20)).unwrap();
    let weights = PrecomputedWeights::new(&basis);
    let z = random_z(&basis, 8);
    let target = s3hat_from_coeffs(&z, &basis, &weights).unwrap();
    // enough restarts that both modes reach the global minimum
    let config = RecoveryConfig {
        restarts: 10,
        seed: 3,
        ..Default::default()
    };
    let errors: Vec<f64> = [false, true]
        .iter()
        .map(|&one_per_bin| {
            let params = BinningParams {
                one_per_bin,
                ..Default::default()
            };
            let scheme = BinningScheme::build(n, params).unwrap();
            let (zhat, _) = recover(&target, &basis, &scheme, &weights, &config).unwrap();
            error_recon(&z, &zhat, &basis).unwrap().0
        })
        .collect();
    assert!(errors[0] <= 1e-6 && errors[1] <= 1e-6, "{errors:?}");
    assert!((errors[0] - errors[1]).abs() <= 1e-6);
}

/// Averaging the debiased estimate over many noise draws of one clean
/// micrograph recovers the clean autocorrelation on the delta slices.
#[test]
fn debiasing_is_unbiased_on_delta_slices() {
    let n = 2;
    let m = 512;
    let sigma: f64 = 1.0;
    let draws = 200;
    let basis = SteerableBasis::build(n, Selection::Count(6)).unwrap();
    let z = basis.expand(&irt_core::phantom::image(n)).unwrap();
    let positions = place_targets(m, n, 40, &mut rng::stream(1, "placement", 0)).unwrap();
    let mut angles = rng::stream(1, "angles", 0);
    let placements: Vec<Placement> = positions
        .into_iter()
        .map(|position| Placement {
            position,
            angle: angles.gen_range(0.0..std::f64::consts::TAU),
        })
        .collect();
    let clean = render_micrograph(&z, &basis, &placements, 0.0, m, 0).unwrap();
    let gamma = clean.gamma.unwrap();
    let clean_mean = clean.pixels.iter().sum::<f64>() / (m * m) as f64;
    let target = compute_a3(&clean, n).unwrap();
    let target = target.real().unwrap();

    let grid = basis.grid;
    let plane = grid.len();
    let origin = grid.index([0, 0]);
    let slice: Vec<usize> = (0..plane)
        .flat_map(|p| [origin * plane + p, p * plane + origin, p * plane + p])
        .collect();
    let mut sum = vec![0.0; slice.len()];
    let mut sum_sq = vec![0.0; slice.len()];
    for draw in 0..draws {
        let noisy = render_micrograph(&z, &basis, &placements, sigma, m, 100 + draw).unwrap();
        let a3 = compute_a3(&noisy, n).unwrap();
        // the noise level is known here; the pixel variance would also pick
        // up the signal variance
        let s3 = debias(&a3, sigma * sigma, clean_mean, gamma).unwrap();
        let values = s3.real().unwrap();
        for (i, &e) in slice.iter().enumerate() {
            sum[i] += values[e];
            sum_sq[i] += values[e] * values[e];
        }
    }
    let d = draws as f64;
    let factor = 2.0 * std::f64::consts::PI / gamma;
    let mut worst: f64 = 0.0;
    for (i, &e) in slice.iter().enumerate() {
        let mean = sum[i] / d;
        let var = (sum_sq[i] / d - mean * mean) * d / (d - 1.0);
        let se = (var / d).sqrt();
        worst = worst.max((mean - factor * target[e]).abs() / se);
    }
    assert!(worst <= 4.0, "largest deviation {worst:.2} standard errors");
}
