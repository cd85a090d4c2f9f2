//! Generalized Inverse Gaussian sampling and density evaluation.
//!
//! The GIG(p, a, b) distribution has density proportional to
//! `x^(p-1) * exp(-(a*x + b/x)/2)` on the positive half-line. The sampler
//! follows the ratio-of-uniforms constructions of Hörmann and Leydold, with
//! a mode shift for concentrated cases and a three-piece rejection hat for
//! the small-order/small-omega corner. Exact Gamma and Inverse-Gamma
//! samplers take over on the parameter boundaries.

use rand::distr::Open01;
use rand::Rng;
use rand_distr::{Distribution, Gamma};

use crate::error::FsvError;
use crate::math::{ln_bessel_k, ln_gamma};
use crate::Result;

/// Parameter values below this are treated as the exact boundary case.
pub const BOUNDARY_EPS: f64 = 1e-14;

/// Hard cap on rejection iterations; a liveness guard, not a tuning knob.
pub const MAX_REJECTION_ITERS: u64 = 1_000_000;

/// Order and rate parameters of a GIG distribution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GigParams {
    pub p: f64,
    pub a: f64,
    pub b: f64,
}

impl GigParams {
    /// Validates the parameter region: `a > 0, b > 0` for any `p`;
    /// `b = 0` requires `p > 0`; `a = 0` requires `p < 0`. Values below
    /// [`BOUNDARY_EPS`] count as zero.
    pub fn new(p: f64, a: f64, b: f64) -> Result<Self> {
        if !(p.is_finite() && a.is_finite() && b.is_finite()) || a < 0.0 || b < 0.0 {
            return Err(FsvError::GigDomain {
                p,
                a,
                b,
                context: ": parameters must be finite with a, b >= 0".into(),
            });
        }
        let a_zero = a < BOUNDARY_EPS;
        let b_zero = b < BOUNDARY_EPS;
        let valid = match (a_zero, b_zero) {
            (false, false) => true,
            (false, true) => p > 0.0,
            (true, false) => p < 0.0,
            (true, true) => false,
        };
        if valid {
            Ok(Self { p, a, b })
        } else {
            Err(FsvError::GigDomain {
                p,
                a,
                b,
                context: String::new(),
            })
        }
    }
}

/// Draws one GIG(p, a, b) variate.
pub fn sample_gig<R: Rng + ?Sized>(params: GigParams, rng: &mut R) -> Result<f64> {
    sample_gig_counted(params, rng).map(|(x, _)| x)
}

/// Draws one variate and reports how many rejection iterations were used
/// (1 means the first proposal was accepted; boundary cases report 1).
pub fn sample_gig_counted<R: Rng + ?Sized>(params: GigParams, rng: &mut R) -> Result<(f64, u64)> {
    let GigParams { p, a, b } = params;
    if b < BOUNDARY_EPS {
        // GIG(p, a, 0) = Gamma(shape p, rate a/2).
        let g = Gamma::new(p, 2.0 / a).map_err(|e| FsvError::GigDomain {
            p,
            a,
            b,
            context: format!(": {e}"),
        })?;
        return Ok((g.sample(rng).max(f64::MIN_POSITIVE), 1));
    }
    if a < BOUNDARY_EPS {
        // GIG(p, 0, b) = Inverse-Gamma(-p, b/2); draw via a Gamma reciprocal.
        let g = Gamma::new(-p, 2.0 / b).map_err(|e| FsvError::GigDomain {
            p,
            a,
            b,
            context: format!(": {e}"),
        })?;
        return Ok((1.0 / g.sample(rng).max(f64::MIN_POSITIVE), 1));
    }

    // Standardize: y ~ gig(lambda, omega) with two-parameter kernel
    // y^(lambda-1) exp(-omega/2 (y + 1/y)); x = alpha*y, inverted for p < 0.
    let lambda = p.abs();
    let omega = (a * b).sqrt();
    let alpha = (b / a).sqrt();
    if !omega.is_finite() || !alpha.is_finite() || alpha == 0.0 {
        return Err(FsvError::GigDomain {
            p,
            a,
            b,
            context: ": standardized parameters overflow".into(),
        });
    }

    let (y, iters) = if lambda > 2.0 || omega > 3.0 {
        rou_shifted(lambda, omega, rng)?
    } else if lambda >= 1.0 - 2.25 * omega * omega || omega > 0.2 {
        rou_noshift(lambda, omega, rng)?
    } else {
        three_piece_hat(lambda, omega, rng)?
    };

    let x = if p < 0.0 { alpha / y } else { alpha * y };
    Ok((x, iters))
}

/// Mode of the standardized two-parameter density, stable for lambda < 1.
fn gig_mode(lambda: f64, omega: f64) -> f64 {
    if lambda >= 1.0 {
        ((lambda - 1.0) + ((lambda - 1.0).powi(2) + omega * omega).sqrt()) / omega
    } else {
        omega / (((1.0 - lambda).powi(2) + omega * omega).sqrt() + (1.0 - lambda))
    }
}

/// Ratio-of-uniforms without mode shift (moderate parameters).
fn rou_noshift<R: Rng + ?Sized>(lambda: f64, omega: f64, rng: &mut R) -> Result<(f64, u64)> {
    let t = 0.5 * (lambda - 1.0);
    let s = 0.25 * omega;
    let m = gig_mode(lambda, omega);
    let log_sqrt_g = |y: f64| t * y.ln() - s * (y + 1.0 / y);
    let nc = log_sqrt_g(m);
    // Maximizer of y*sqrt(g(y)).
    let ym = ((lambda + 1.0) + ((lambda + 1.0).powi(2) + omega * omega).sqrt()) / omega;
    let um = ym * (log_sqrt_g(ym) - nc).exp();

    for iter in 1..=MAX_REJECTION_ITERS {
        let u: f64 = rng.sample::<f64, _>(Open01) * um;
        let v: f64 = rng.sample(Open01);
        let y = u / v;
        if v.ln() <= log_sqrt_g(y) - nc {
            return Ok((y, iter));
        }
    }
    Err(FsvError::GigLiveness {
        p: lambda,
        a: omega,
        b: omega,
        cap: MAX_REJECTION_ITERS,
    })
}

/// Ratio-of-uniforms with the proposal region recentered on the mode;
/// required when the density is concentrated (large order or omega).
fn rou_shifted<R: Rng + ?Sized>(lambda: f64, omega: f64, rng: &mut R) -> Result<(f64, u64)> {
    let t = 0.5 * (lambda - 1.0);
    let s = 0.25 * omega;
    let m = gig_mode(lambda, omega);
    let log_sqrt_g = |y: f64| t * y.ln() - s * (y + 1.0 / y);
    let nc = log_sqrt_g(m);

    // The u-extent of the region is bounded by the extrema of
    // (y - m) * sqrt(g(y)), which are roots of a cubic in y.
    let ca = -(2.0 * (lambda + 1.0) / omega + m);
    let cb = 2.0 * (lambda - 1.0) * m / omega - 1.0;
    let cc = m;
    let pc = cb - ca * ca / 3.0;
    let qc = 2.0 * ca.powi(3) / 27.0 - ca * cb / 3.0 + cc;
    let disc = -(pc.powi(3)) / 27.0;
    debug_assert!(disc > 0.0, "cubic must have three real roots here");
    let fi = (-qc / (2.0 * disc.sqrt())).clamp(-1.0, 1.0).acos();
    let fak = 2.0 * (-pc / 3.0).sqrt();
    let y_hi = fak * (fi / 3.0).cos() - ca / 3.0;
    let y_lo = fak * (fi / 3.0 + 4.0 * std::f64::consts::FRAC_PI_3).cos() - ca / 3.0;

    let u_plus = (y_hi - m) * (log_sqrt_g(y_hi) - nc).exp();
    let u_minus = (y_lo - m) * (log_sqrt_g(y_lo) - nc).exp();

    for iter in 1..=MAX_REJECTION_ITERS {
        let u = u_minus + rng.sample::<f64, _>(Open01) * (u_plus - u_minus);
        let v: f64 = rng.sample(Open01);
        let y = u / v + m;
        if y > 0.0 && v.ln() <= log_sqrt_g(y) - nc {
            return Ok((y, iter));
        }
    }
    Err(FsvError::GigLiveness {
        p: lambda,
        a: omega,
        b: omega,
        cap: MAX_REJECTION_ITERS,
    })
}

/// Rejection from a three-piece hat (constant / power / exponential) for
/// lambda in [0, 1) and small omega, where the ratio-of-uniforms rectangle
/// degenerates.
fn three_piece_hat<R: Rng + ?Sized>(lambda: f64, omega: f64, rng: &mut R) -> Result<(f64, u64)> {
    debug_assert!((0.0..1.0).contains(&lambda) && omega > 0.0 && omega <= 1.0);
    let m = gig_mode(lambda, omega);
    let x0 = omega / (1.0 - lambda);
    let log_g = |x: f64| (lambda - 1.0) * x.ln() - 0.5 * omega * (x + 1.0 / x);

    // Piece 1 on (0, x0]: constant hat at the density maximum.
    let k0 = log_g(m).exp();
    let a0 = k0 * x0;

    // Piece 2 on (x0, 2/omega]: power hat k1 * x^(lambda-1), using
    // exp(-omega/2 (x + 1/x)) <= exp(-omega).
    // Piece 3 on (max(x0, 2/omega), inf): exponential hat k2 * exp(-omega x / 2).
    let (k1, a1, k2, a2) = if x0 >= 2.0 / omega {
        let k2 = x0.powf(lambda - 1.0);
        (0.0, 0.0, k2, k2 * 2.0 * (-omega * x0 / 2.0).exp() / omega)
    } else {
        let k1 = (-omega).exp();
        let a1 = if lambda == 0.0 {
            k1 * (2.0 / (omega * omega)).ln()
        } else {
            k1 / lambda * ((2.0 / omega).powf(lambda) - x0.powf(lambda))
        };
        let k2 = (2.0 / omega).powf(lambda - 1.0);
        (k1, a1, k2, k2 * 2.0 * (-1.0_f64).exp() / omega)
    };
    let a_tot = a0 + a1 + a2;

    for iter in 1..=MAX_REJECTION_ITERS {
        let mut v: f64 = rng.sample::<f64, _>(Open01) * a_tot;
        let (x, hx) = if v <= a0 {
            (x0 * v / a0, k0)
        } else if {
            v -= a0;
            v <= a1
        } {
            if lambda == 0.0 {
                let x = x0 * (v / k1).exp();
                (x, k1 / x)
            } else {
                let x = (x0.powf(lambda) + lambda / k1 * v).powf(1.0 / lambda);
                (x, k1 * x.powf(lambda - 1.0))
            }
        } else {
            v -= a1;
            let start = x0.max(2.0 / omega);
            let x = -2.0 / omega * ((-omega / 2.0 * start).exp() - omega / (2.0 * k2) * v).ln();
            (x, k2 * (-omega / 2.0 * x).exp())
        };
        let u: f64 = rng.sample::<f64, _>(Open01) * hx;
        if u.ln() <= log_g(x) {
            return Ok((x, iter));
        }
    }
    Err(FsvError::GigLiveness {
        p: lambda,
        a: omega,
        b: omega,
        cap: MAX_REJECTION_ITERS,
    })
}

/// Normalized log-density of GIG(p, a, b) at `x > 0`. Boundary parameter
/// sets evaluate the exact Gamma / Inverse-Gamma limits.
pub fn gig_log_density(x: f64, params: GigParams) -> Result<f64> {
    if !(x > 0.0) || !x.is_finite() {
        return Err(FsvError::invalid(format!(
            "gig_log_density requires x > 0, got {x}"
        )));
    }
    let GigParams { p, a, b } = params;
    if b < BOUNDARY_EPS {
        // Gamma(shape p, rate a/2).
        return Ok(p * (a / 2.0).ln() - ln_gamma(p) + (p - 1.0) * x.ln() - a * x / 2.0);
    }
    if a < BOUNDARY_EPS {
        // Inverse-Gamma(-p, b/2).
        let shape = -p;
        let scale = b / 2.0;
        return Ok(shape * scale.ln() - ln_gamma(shape) - (shape + 1.0) * x.ln() - scale / x);
    }
    let omega = (a * b).sqrt();
    let log_norm = 0.5 * p * (a.ln() - b.ln()) - std::f64::consts::LN_2 - ln_bessel_k(p, omega);
    Ok(log_norm + (p - 1.0) * x.ln() - 0.5 * (a * x + b / x))
}

/// Mean of GIG(p, a, b) via Bessel ratios; used for reporting and tests.
pub fn gig_mean(params: GigParams) -> Result<f64> {
    let GigParams { p, a, b } = params;
    if b < BOUNDARY_EPS {
        return Ok(2.0 * p / a);
    }
    if a < BOUNDARY_EPS {
        if -p <= 1.0 {
            return Err(FsvError::invalid(
                "inverse-gamma boundary mean requires p < -1",
            ));
        }
        return Ok(b / 2.0 / (-p - 1.0));
    }
    let omega = (a * b).sqrt();
    Ok((b / a).sqrt() * (ln_bessel_k(p + 1.0, omega) - ln_bessel_k(p, omega)).exp())
}
