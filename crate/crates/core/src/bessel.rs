//! Integer-order Bessel functions of the first kind and their positive zeros.
//!
//! Values come from Miller's backward recurrence normalized with
//! `J_0(x) + 2 * sum_k J_2k(x) = 1`, which is stable for every order below
//! the starting index. Zeros are bracketed by a coarse scan (the spacing of
//! consecutive zeros of `J_nu` never drops below 2.9) and polished with a
//! safeguarded Newton iteration started from McMahon's expansion.

use std::f64::consts::PI;

use crate::error::{Error, Result};

const RESCALE_ABOVE: f64 = 1e250;
const RESCALE_BY: f64 = 1e-250;

/// `J_nu(x)` for any integer order.
pub fn bessel_j(nu: i32, x: f64) -> f64 {
    let order = nu.unsigned_abs();
    let mut value = bessel_j_nonneg(order, x.abs());
    // J_{-nu} = (-1)^nu J_nu and J_nu(-x) = (-1)^nu J_nu(x)
    if nu < 0 && order % 2 == 1 {
        value = -value;
    }
    if x < 0.0 && order % 2 == 1 {
        value = -value;
    }
    value
}

/// `J_0(x), ..., J_{max_order}(x)` for `x >= 0` in one backward sweep.
pub fn bessel_j_orders(max_order: u32, x: f64) -> Vec<f64> {
    let mut out = vec![0.0; max_order as usize + 1];
    if x == 0.0 {
        out[0] = 1.0;
        return out;
    }
    let start = miller_start(max_order, x);
    let two_over_x = 2.0 / x;
    let mut above = 0.0_f64; // J_{k+1}
    let mut current = 1e-300_f64; // J_k
    let mut norm = 0.0_f64;
    for k in (1..=start).rev() {
        let below = k as f64 * two_over_x * current - above;
        above = current;
        current = below;
        // `current` now holds the unnormalized J_{k-1}
        let idx = k - 1;
        if idx <= max_order {
            out[idx as usize] = current;
        }
        if idx % 2 == 0 && idx > 0 {
            norm += 2.0 * current;
        }
        if current.abs() > RESCALE_ABOVE {
            current *= RESCALE_BY;
            above *= RESCALE_BY;
            norm *= RESCALE_BY;
            for v in out.iter_mut() {
                *v *= RESCALE_BY;
            }
        }
    }
    norm += current;
    for v in out.iter_mut() {
        *v /= norm;
    }
    out
}

fn bessel_j_nonneg(order: u32, x: f64) -> f64 {
    if x == 0.0 {
        return if order == 0 { 1.0 } else { 0.0 };
    }
    bessel_j_orders(order, x)[order as usize]
}

fn miller_start(order: u32, x: f64) -> u32 {
    let scale = (order as f64).max(x.ceil());
    let m = scale as u32 + 16 + (160.0 * scale).sqrt().ceil() as u32;
    m + (m % 2)
}

/// Derivative `J_nu'(x) = (J_{nu-1}(x) - J_{nu+1}(x)) / 2`.
pub fn bessel_j_prime(nu: i32, x: f64) -> f64 {
    0.5 * (bessel_j(nu - 1, x) - bessel_j(nu + 1, x))
}

/// McMahon's large-zero expansion for the `q`-th positive zero of `J_nu`.
pub fn mcmahon_guess(nu: u32, q: u32) -> f64 {
    let mu = 4.0 * (nu as f64).powi(2);
    let beta = (q as f64 + 0.5 * nu as f64 - 0.25) * PI;
    let e = 8.0 * beta;
    beta - (mu - 1.0) / e
        - 4.0 * (mu - 1.0) * (7.0 * mu - 31.0) / (3.0 * e.powi(3))
        - 32.0 * (mu - 1.0) * (83.0 * mu * mu - 982.0 * mu + 3779.0) / (15.0 * e.powi(5))
}

/// The `q`-th positive zero `lambda_{nu,q}` of `J_nu`.
pub fn bessel_root(nu: u32, q: u32) -> Result<f64> {
    if q == 0 {
        return Err(Error::InvalidArgument("root index q must be >= 1".into()));
    }
    let (lo, hi) = bracket_root(nu, q)?;
    polish_root(nu, q, lo, hi)
}

/// The first `count` positive zeros of `J_nu`, in increasing order.
pub fn bessel_roots(nu: u32, count: u32) -> Result<Vec<f64>> {
    let mut roots = Vec::with_capacity(count as usize);
    let step = 1.0;
    let mut x = start_of_scan(nu);
    let mut fx = bessel_j(nu as i32, x);
    let mut guard = 0usize;
    while roots.len() < count as usize {
        let next = x + step;
        let fnext = bessel_j(nu as i32, next);
        if fnext == 0.0 {
            roots.push(next);
            x = next + 1e-9;
            fx = bessel_j(nu as i32, x);
            continue;
        }
        if fx.signum() != fnext.signum() {
            let q = roots.len() as u32 + 1;
            roots.push(polish_root(nu, q, x, next)?);
        }
        x = next;
        fx = fnext;
        guard += 1;
        if guard > 10_000_000 {
            return Err(Error::RootIteration {
                nu,
                q: roots.len() as u32 + 1,
                reason: "scan did not terminate".into(),
            });
        }
    }
    Ok(roots)
}

fn start_of_scan(nu: u32) -> f64 {
    // J_nu has no zeros in (0, nu]
    if nu == 0 {
        0.0
    } else {
        nu as f64
    }
}

fn bracket_root(nu: u32, q: u32) -> Result<(f64, f64)> {
    let step = 1.0;
    let mut x = start_of_scan(nu);
    let mut fx = bessel_j(nu as i32, x);
    let mut seen = 0u32;
    let limit = x + 4.0 * (q as f64 + nu as f64 + 10.0) * PI;
    while x < limit {
        let next = x + step;
        let fnext = bessel_j(nu as i32, next);
        if fx.signum() != fnext.signum() || fnext == 0.0 {
            seen += 1;
            if seen == q {
                return Ok((x, next));
            }
        }
        x = next;
        fx = fnext;
    }
    Err(Error::RootIteration {
        nu,
        q,
        reason: "could not bracket root".into(),
    })
}

fn polish_root(nu: u32, q: u32, mut lo: f64, mut hi: f64) -> Result<f64> {
    let order = nu as i32;
    let mut f_lo = bessel_j(order, lo);
    if f_lo == 0.0 {
        return Ok(lo);
    }
    let guess = mcmahon_guess(nu, q);
    let mut x = if guess > lo && guess < hi {
        guess
    } else {
        0.5 * (lo + hi)
    };
    for _ in 0..200 {
        let fx = bessel_j(order, x);
        if fx == 0.0 {
            return Ok(x);
        }
        if fx.signum() == f_lo.signum() {
            lo = x;
            f_lo = fx;
        } else {
            hi = x;
        }
        let d = bessel_j_prime(order, x);
        let newton = x - fx / d;
        let next = if d != 0.0 && newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
        if (next - x).abs() <= 1e-15 * x.abs().max(1.0) || hi - lo <= 4.0 * f64::EPSILON * hi {
            return Ok(next);
        }
        x = next;
    }
    let fx = bessel_j(order, x);
    if fx.abs() < 1e-12 {
        Ok(x)
    } else {
        Err(Error::RootIteration {
            nu,
            q,
            reason: format!("no convergence, residual {fx:.3e}"),
        })
    }
}
