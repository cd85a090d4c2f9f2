//! Univariate stochastic volatility update.
//!
//! One sweep jointly refreshes a series' log-variance path (including the
//! initial state) and its AR(1) parameters given that series' augmented
//! observations. The observation equation is linearized through
//! `log(obs^2)` whose error distribution is replaced by a ten-component
//! Gaussian mixture; conditional on the mixture indicators the path is a
//! linear Gaussian state-space model sampled exactly through its tridiagonal
//! precision. Parameters are moved twice per sweep, once in the centered and
//! once in the noncentered parameterization, which breaks the strong
//! posterior coupling between the level and the path.

use std::sync::LazyLock;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::FsvError;
use crate::gig::{sample_gig, GigParams};
use crate::model::{PriorConfig, SvParams};
use crate::Result;

/// Guard applied inside `log(obs^2 + OFFSET)` so exact zeros (pegged
/// currencies, zero returns) never produce `-inf`.
pub const OBS_OFFSET: f64 = 1e-300;

/// One Gassian mixture component approximating the log chi-squared(1) error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MixtureComponent {
    pub prob: f64,
    pub mean: f64,
    pub var: f64,
}

/// Finite Gaussian mixture approximation of the log chi-squared(1)
/// distribution.
#[derive(Debug, Clone, PartialEq)]
pub struct MixtureApprox {
    components: Vec<MixtureComponent>,
    /// log(prob_k) - 0.5 log(2 pi var_k), precomputed for indicator draws.
    log_coef: Vec<f64>,
    /// -1/(2 var_k), precomputed for indicator draws.
    neg_half_inv_var: Vec<f64>,
    /// 1/var_k, precomputed for the observation precisions.
    inv_var: Vec<f64>,
}

/// Ten-component table of Omori, Chib, Shephard, and Nakajima.
const LOG_CHI2_TABLE: [(f64, f64, f64); 10] = [
    (0.00609, 1.92677, 0.11265),
    (0.04775, 1.34744, 0.17788),
    (0.13057, 0.73504, 0.26768),
    (0.20674, 0.02266, 0.40611),
    (0.22715, -0.85173, 0.62699),
    (0.18842, -1.97278, 0.98583),
    (0.12047, -3.46788, 1.57469),
    (0.05591, -5.55246, 2.54498),
    (0.01575, -8.68384, 4.16591),
    (0.00115, -14.65000, 7.33342),
];

static LOG_CHI2_MIXTURE: LazyLock<MixtureApprox> = LazyLock::new(|| {
    MixtureApprox::new(
        LOG_CHI2_TABLE
            .iter()
            .map(|&(prob, mean, var)| MixtureComponent { prob, mean, var })
            .collect(),
    )
    .expect("built-in mixture table is valid")
});

impl MixtureApprox {
    pub fn new(components: Vec<MixtureComponent>) -> Result<Self> {
        if components.len() < 10 {
            return Err(FsvError::invalid(format!(
                "mixture needs at least 10 components, got {}",
                components.len()
            )));
        }
        let total: f64 = components.iter().map(|c| c.prob).sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(FsvError::invalid(format!(
                "mixture probabilities sum to {total}, expected 1"
            )));
        }
        if components.iter().any(|c| c.prob < 0.0 || c.var <= 0.0) {
            return Err(FsvError::invalid(
                "mixture components need prob >= 0 and var > 0",
            ));
        }
        let log_coef = components
            .iter()
            .map(|c| c.prob.ln() - 0.5 * (2.0 * std::f64::consts::PI * c.var).ln())
            .collect();
        let neg_half_inv_var = components.iter().map(|c| -0.5 / c.var).collect();
        let inv_var = components.iter().map(|c| 1.0 / c.var).collect();
        Ok(Self {
            components,
            log_coef,
            neg_half_inv_var,
            inv_var,
        })
    }

    /// The built-in approximation to the log chi-squared(1) law.
    pub fn log_chi_squared_one() -> &'static MixtureApprox {
        &LOG_CHI2_MIXTURE
    }

    pub fn k(&self) -> usize {
        self.components.len()
    }

    pub fn components(&self) -> &[MixtureComponent] {
        &self.components
    }
}

/// Everything the update needs to know about one series.
#[derive(Debug, Clone)]
pub struct SvSeriesView<'a> {
    /// Augmented observations: residuals `y_it - Lambda_i f_t` for
    /// idiosyncratic series, factor values for factor series. Length `T`.
    pub obs: &'a [f64],
    /// Current log-variance path including the initial state; length `T + 1`.
    pub h: &'a [f64],
    pub params: SvParams,
    /// Structurally pins the level at zero (factor series).
    pub mu_fixed_to_zero: bool,
}

impl<'a> SvSeriesView<'a> {
    pub fn validate(&self) -> Result<()> {
        if self.obs.len() + 1 != self.h.len() {
            return Err(FsvError::invalid(format!(
                "obs length {} does not match h length {}",
                self.obs.len(),
                self.h.len()
            )));
        }
        if self.obs.is_empty() {
            return Err(FsvError::invalid("series must have at least one observation"));
        }
        if self.mu_fixed_to_zero && self.params.mu != 0.0 {
            return Err(FsvError::invalid(
                "mu_fixed_to_zero requires params.mu == 0",
            ));
        }
        Ok(())
    }

    /// `log(obs^2 + OFFSET)` for every observation.
    fn linearized(&self) -> Vec<f64> {
        self.obs
            .iter()
            .map(|&y| (y * y + OBS_OFFSET).ln())
            .collect()
    }
}

/// Draws mixture indicators given the linearized observations and the path.
fn sample_indicators<R: Rng + ?Sized>(
    z: &[f64],
    h: &[f64],
    mixture: &MixtureApprox,
    rng: &mut R,
) -> Vec<usize> {
    let k = mixture.k();
    debug_assert!(k <= 32);
    let mut weights = [0.0f64; 32];
    let mut out = Vec::with_capacity(z.len());
    let means: Vec<f64> = mixture.components.iter().map(|c| c.mean).collect();
    for (t, &zt) in z.iter().enumerate() {
        let resid = zt - h[t + 1];
        let mut max_lw = f64::NEG_INFINITY;
        for (((w, &mean), &lc), &niv) in weights[..k]
            .iter_mut()
            .zip(means.iter())
            .zip(mixture.log_coef.iter())
            .zip(mixture.neg_half_inv_var.iter())
        {
            let d = resid - mean;
            let lw = lc + d * d * niv;
            *w = lw;
            if lw > max_lw {
                max_lw = lw;
            }
        }
        let mut total = 0.0;
        for w in weights[..k].iter_mut() {
            *w = crate::math::fast_exp(*w - max_lw);
            total += *w;
        }
        let target = rng.random::<f64>() * total;
        let mut acc = 0.0;
        let mut pick = k - 1;
        for (i, &w) in weights[..k].iter().enumerate() {
            acc += w;
            if target < acc {
                pick = i;
                break;
            }
        }
        out.push(pick);
    }
    out
}

/// Draws mixture indicators for a series given its current path.
pub fn sample_mixture_indicators<R: Rng + ?Sized>(
    view: &SvSeriesView,
    rng: &mut R,
) -> Result<Vec<usize>> {
    view.validate()?;
    let z = view.linearized();
    Ok(sample_indicators(
        &z,
        view.h,
        MixtureApprox::log_chi_squared_one(),
        rng,
    ))
}

/// Exact draw of the path `h_0..h_T` from its Gaussian full conditional
/// under the mixture linearization, via the tridiagonal precision Cholesky.
pub fn sample_h_given_params<R: Rng + ?Sized>(
    view: &SvSeriesView,
    mixture_indicators: &[usize],
    rng: &mut R,
) -> Result<Vec<f64>> {
    view.validate()?;
    let mixture = MixtureApprox::log_chi_squared_one();
    if mixture_indicators.len() != view.obs.len() {
        return Err(FsvError::invalid(
            "indicator count must match observation count",
        ));
    }
    if mixture_indicators.iter().any(|&s| s >= mixture.k()) {
        return Err(FsvError::invalid("mixture indicator out of range"));
    }
    let z = view.linearized();
    sample_path(&z, mixture_indicators, view.params, mixture, rng)
}

fn sample_path<R: Rng + ?Sized>(
    z: &[f64],
    indicators: &[usize],
    params: SvParams,
    mixture: &MixtureApprox,
    rng: &mut R,
) -> Result<Vec<f64>> {
    let t_len = z.len();
    let n = t_len + 1;
    let SvParams { mu, phi, sigma } = params;
    let inv_s2 = 1.0 / (sigma * sigma);

    // Tridiagonal precision and linear term of the full conditional.
    let mut diag = vec![0.0f64; n];
    let mut c = vec![0.0f64; n];
    let off = -phi * inv_s2;
    diag[0] = inv_s2;
    c[0] = mu * (1.0 - phi) * inv_s2;
    let interior_drift = (1.0 - phi) * (1.0 - phi) * mu * inv_s2;
    let interior_coupling = (1.0 + phi * phi) * inv_s2;
    for t in 1..n {
        let s = indicators[t - 1];
        let w = mixture.inv_var[s];
        let d = z[t - 1] - mixture.components[s].mean;
        if t < n - 1 {
            diag[t] = interior_coupling + w;
            c[t] = interior_drift + w * d;
        } else {
            diag[t] = inv_s2 + w;
            c[t] = (1.0 - phi) * mu * inv_s2 + w * d;
        }
    }

    // Bidiagonal Cholesky of the precision, keeping reciprocal pivots.
    let mut inv_l_diag = vec![0.0f64; n];
    let mut l_sub = vec![0.0f64; n - 1];
    inv_l_diag[0] = 1.0 / diag[0].sqrt();
    for t in 1..n {
        l_sub[t - 1] = off * inv_l_diag[t - 1];
        let v = diag[t] - l_sub[t - 1] * l_sub[t - 1];
        if !(v > 0.0) {
            return Err(FsvError::PrecisionNotPd {
                index: t,
                details: format!("pivot {v} with phi={phi}, sigma={sigma}"),
            });
        }
        inv_l_diag[t] = 1.0 / v.sqrt();
    }

    // Mean: solve L u = c, then L' mean = u, fused with the draw
    // mean + L'^{-1} eps for standard normal eps.
    let mut u = vec![0.0f64; n];
    u[0] = c[0] * inv_l_diag[0];
    for t in 1..n {
        u[t] = (c[t] - l_sub[t - 1] * u[t - 1]) * inv_l_diag[t];
    }
    let mut h = vec![0.0f64; n];
    for (x, u) in h.iter_mut().zip(u.iter()) {
        *x = u + rng.sample::<f64, _>(StandardNormal);
    }
    h[n - 1] *= inv_l_diag[n - 1];
    for t in (0..n - 1).rev() {
        h[t] = (h[t] - l_sub[t] * h[t + 1]) * inv_l_diag[t];
    }
    Ok(h)
}

/// Sum of squared state-equation residuals, including the stationary term
/// for the initial state.
fn state_residual_ss(h: &[f64], mu: f64, phi: f64) -> f64 {
    let mut s = (1.0 - phi * phi) * (h[0] - mu) * (h[0] - mu);
    for t in 1..h.len() {
        let r = h[t] - mu - phi * (h[t - 1] - mu);
        s += r * r;
    }
    s
}

fn ln_phi_prior(phi: f64, a0: f64, b0: f64) -> f64 {
    (a0 - 1.0) * ((1.0 + phi) / 2.0).ln() + (b0 - 1.0) * ((1.0 - phi) / 2.0).ln()
}

/// Centered-parameterization moves: sigma^2 from its exact GIG conditional,
/// mu from its exact Gaussian conditional, phi by Metropolis-Hastings with
/// the transition-conjugate Gaussian proposal.
fn update_params_centered<R: Rng + ?Sized>(
    h: &[f64],
    params: SvParams,
    priors: &PriorConfig,
    mu_fixed: bool,
    rng: &mut R,
) -> Result<SvParams> {
    let t_len = h.len() - 1;
    let mut mu = params.mu;
    let mut phi = params.phi;

    // sigma^2 | h, mu, phi.
    let ss = state_residual_ss(h, mu, phi);
    let gig = GigParams::new(-(t_len as f64) / 2.0, 1.0 / priors.sigma_scale, ss)?;
    let sig2 = sample_gig(gig, rng)?;
    let mut sigma = sig2.sqrt().max(f64::MIN_POSITIVE);

    // mu | h, phi, sigma^2 (skipped entirely when the level is pinned).
    if !mu_fixed {
        let inv_s2 = 1.0 / sig2;
        let sum_trans: f64 = (1..=t_len).map(|t| h[t] - phi * h[t - 1]).sum();
        let prec = ((1.0 - phi * phi) + t_len as f64 * (1.0 - phi) * (1.0 - phi)) * inv_s2
            + 1.0 / priors.mu_var;
        let lin = ((1.0 - phi * phi) * h[0] + (1.0 - phi) * sum_trans) * inv_s2
            + priors.mu_mean / priors.mu_var;
        mu = lin / prec + rng.sample::<f64, _>(StandardNormal) / prec.sqrt();
    }

    // phi | h, mu, sigma^2 via MH; the proposal's transition part cancels,
    // leaving the Beta prior and the stationary initial-state term.
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    for t in 1..=t_len {
        let prev = h[t - 1] - mu;
        sxx += prev * prev;
        sxy += (h[t] - mu) * prev;
    }
    if sxx > 0.0 {
        let phi_hat = sxy / sxx;
        let sd = (sig2 / sxx).sqrt();
        let prop: f64 = phi_hat + sd * rng.sample::<f64, _>(StandardNormal);
        // Consume the acceptance uniform unconditionally to keep the stream
        // layout independent of the proposal's support check.
        let accept_u: f64 = rng.random();
        if prop.abs() < 1.0 {
            let h0c = h[0] - mu;
            let log_ratio = ln_phi_prior(prop, priors.phi_a, priors.phi_b)
                + 0.5 * (1.0 - prop * prop).ln()
                - (1.0 - prop * prop) * h0c * h0c / (2.0 * sig2)
                - (ln_phi_prior(phi, priors.phi_a, priors.phi_b)
                    + 0.5 * (1.0 - phi * phi).ln()
                    - (1.0 - phi * phi) * h0c * h0c / (2.0 * sig2));
            if accept_u.ln() < log_ratio {
                phi = prop;
            }
        }
    }

    // Repair the boundary case |phi| ~ 1 from pathological inputs.
    if phi.abs() >= 1.0 {
        phi = phi.signum() * (1.0 - 1e-12);
    }
    if sigma == 0.0 {
        sigma = f64::MIN_POSITIVE;
    }
    SvParams::new(mu, phi, sigma)
}

/// Noncentered move: with `h_tilde = (h - mu)/sigma` held fixed, (mu, sigma)
/// is a Gaussian regression coefficient pair in the linearized observation
/// equation; the chi-squared(1) scale prior on sigma^2 is exactly a
/// zero-mean normal prior on signed sigma. Returns the updated parameters
/// and rebuilds the path.
fn update_params_noncentered<R: Rng + ?Sized>(
    z: &[f64],
    indicators: &[usize],
    h: &mut [f64],
    params: SvParams,
    priors: &PriorConfig,
    mu_fixed: bool,
    mixture: &MixtureApprox,
    rng: &mut R,
) -> Result<SvParams> {
    let t_len = z.len();
    let SvParams { mu, phi, sigma } = params;
    let h_tilde: Vec<f64> = h.iter().map(|&x| (x - mu) / sigma).collect();

    let (mu_new, sigma_signed) = if mu_fixed {
        let mut prec = 1.0 / priors.sigma_scale;
        let mut lin = 0.0;
        for t in 0..t_len {
            let s = indicators[t];
            let w = mixture.inv_var[s];
            let x = h_tilde[t + 1];
            prec += w * x * x;
            lin += w * x * (z[t] - mixture.components[s].mean);
        }
        let s = lin / prec + rng.sample::<f64, _>(StandardNormal) / prec.sqrt();
        (0.0, s)
    } else {
        // 2x2 normal equations for (mu, sigma).
        let mut p11 = 1.0 / priors.mu_var;
        let mut p12 = 0.0;
        let mut p22 = 1.0 / priors.sigma_scale;
        let mut b1 = priors.mu_mean / priors.mu_var;
        let mut b2 = 0.0;
        for t in 0..t_len {
            let s = indicators[t];
            let w = mixture.inv_var[s];
            let x = h_tilde[t + 1];
            let d = z[t] - mixture.components[s].mean;
            p11 += w;
            p12 += w * x;
            p22 += w * x * x;
            b1 += w * d;
            b2 += w * d * x;
        }
        // Cholesky of [[p11, p12], [p12, p22]].
        let l11 = p11.sqrt();
        let l21 = p12 / l11;
        let d22 = p22 - l21 * l21;
        if !(d22 > 0.0) {
            return Err(FsvError::SingularPrecision {
                step: "noncentered (mu, sigma) regression".into(),
                details: format!("pivot {d22}"),
            });
        }
        let l22 = d22.sqrt();
        // Mean: solve L y = b, L' m = y.
        let y1 = b1 / l11;
        let y2 = (b2 - l21 * y1) / l22;
        let m2 = y2 / l22;
        let m1 = (y1 - l21 * m2) / l11;
        // Draw: mean + L'^{-1} eps.
        let e1: f64 = rng.sample(StandardNormal);
        let e2: f64 = rng.sample(StandardNormal);
        let d2 = e2 / l22;
        let d1 = (e1 - l21 * d2) / l11;
        (m1 + d1, m2 + d2)
    };

    // Map back to the centered path; a negative sigma draw flips the latent
    // path sign, leaving h itself continuous.
    for (dst, &ht) in h.iter_mut().zip(h_tilde.iter()) {
        *dst = mu_new + sigma_signed * ht;
    }
    let sigma_new = sigma_signed.abs().max(f64::MIN_POSITIVE);
    SvParams::new(mu_new, phi, sigma_new)
}

/// One full univariate SV sweep: mixture indicators, exact path draw, then
/// centered and noncentered parameter moves. Returns the new path (length
/// `T + 1`) and parameters.
pub fn sv_update<R: Rng + ?Sized>(
    view: &SvSeriesView,
    priors: &PriorConfig,
    rng: &mut R,
) -> Result<(Vec<f64>, SvParams)> {
    view.validate()?;
    priors.validate()?;
    let mixture = MixtureApprox::log_chi_squared_one();
    let z = view.linearized();

    let indicators = sample_indicators(&z, view.h, mixture, rng);
    let mut h = sample_path(&z, &indicators, view.params, mixture, rng)?;
    let params = update_params_centered(&h, view.params, priors, view.mu_fixed_to_zero, rng)?;
    let params = update_params_noncentered(
        &z,
        &indicators,
        &mut h,
        params,
        priors,
        view.mu_fixed_to_zero,
        mixture,
        rng,
    )?;
    Ok((h, params))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    fn rng(seed: u64) -> ChaCha12Rng {
        ChaCha12Rng::seed_from_u64(seed)
    }

    #[test]
    fn mixture_table_is_valid() {
        let mix = MixtureApprox::log_chi_squared_one();
        assert_eq!(mix.k(), 10);
        let total: f64 = mix.components().iter().map(|c| c.prob).sum();
        assert!((total - 1.0).abs() <= 1e-12);
        // Mixture mean should be near E[log chi2_1] = -1.2704.
        let mean: f64 = mix.components().iter().map(|c| c.prob * c.mean).sum();
        assert_relative_eq!(mean, -1.2704, epsilon = 2e-3);
    }

    #[test]
    fn degenerate_state_noise_gives_constant_path() {
        let obs = vec![0.5, -0.3, 0.8, 0.1, -0.6];
        let h = vec![0.0; 6];
        let view = SvSeriesView {
            obs: &obs,
            h: &h,
            params: SvParams::new(-1.0, 0.0, 1e-8).unwrap(),
            mu_fixed_to_zero: false,
        };
        let indicators = vec![3usize; 5];
        let draw = sample_h_given_params(&view, &indicators, &mut rng(4)).unwrap();
        for t in 1..draw.len() {
            assert!(
                (draw[t] - draw[0]).abs() < 1e-6,
                "path not constant: {draw:?}"
            );
        }
    }

    /// Dense oracle: builds the full precision and solves with hand-coded
    /// Gaussian elimination, independent of the tridiagonal code path.
    fn dense_posterior(
        z: &[f64],
        indicators: &[usize],
        params: SvParams,
    ) -> (Vec<f64>, Vec<Vec<f64>>) {
        let mix = MixtureApprox::log_chi_squared_one();
        let n = z.len() + 1;
        let SvParams { mu, phi, sigma } = params;
        let inv_s2 = 1.0 / (sigma * sigma);
        let mut omega = vec![vec![0.0; n]; n];
        let mut c = vec![0.0; n];
        omega[0][0] = inv_s2;
        c[0] = mu * (1.0 - phi) * inv_s2;
        for t in 1..n {
            let comp = mix.components()[indicators[t - 1]];
            let w = 1.0 / comp.var;
            omega[t][t] = (if t < n - 1 { 1.0 + phi * phi } else { 1.0 }) * inv_s2 + w;
            omega[t - 1][t] = -phi * inv_s2;
            omega[t][t - 1] = -phi * inv_s2;
            c[t] = if t < n - 1 {
                (1.0 - phi) * (1.0 - phi) * mu * inv_s2
            } else {
                (1.0 - phi) * mu * inv_s2
            } + w * (z[t - 1] - comp.mean);
        }
        // Invert by Gauss-Jordan.
        let mut a = omega.clone();
        let mut inv = vec![vec![0.0; n]; n];
        for (i, row) in inv.iter_mut().enumerate() {
            row[i] = 1.0;
        }
        for col in 0..n {
            let piv = a[col][col];
            for j in 0..n {
                a[col][j] /= piv;
                inv[col][j] /= piv;
            }
            for row in 0..n {
                if row != col {
                    let f = a[row][col];
                    for j in 0..n {
                        a[row][j] -= f * a[col][j];
                        inv[row][j] -= f * inv[col][j];
                    }
                }
            }
        }
        let mean: Vec<f64> = (0..n)
            .map(|i| (0..n).map(|j| inv[i][j] * c[j]).sum())
            .collect();
        (mean, inv)
    }

    #[test]
    fn path_mean_matches_dense_oracle_t2() {
        let obs = vec![0.7, -1.2];
        let h = vec![0.0; 3];
        let params = SvParams::new(-0.5, 0.6, 0.4).unwrap();
        let view = SvSeriesView {
            obs: &obs,
            h: &h,
            params,
            mu_fixed_to_zero: false,
        };
        let indicators = vec![2usize, 5usize];
        let z = view.linearized();
        let (oracle_mean, _) = dense_posterior(&z, &indicators, params);

        // Monte Carlo mean over many exact draws converges to the oracle;
        // but the linear solve itself can be checked exactly by stripping
        // the noise: with z = 0 the draw equals the conditional mean, which
        // we reproduce by averaging antithetic-free draws is noisy. Instead
        // solve for the mean directly through a zero-noise draw.
        let n_draws = 200_000;
        let mut acc = vec![0.0; 3];
        let mut r = rng(11);
        for _ in 0..n_draws {
            let d = sample_h_given_params(&view, &indicators, &mut r).unwrap();
            for (a, v) in acc.iter_mut().zip(d.iter()) {
                *a += v;
            }
        }
        for (t, a) in acc.iter().enumerate() {
            let mc = a / n_draws as f64;
            // MC error ~ sd/sqrt(n); variances here are O(1).
            assert!(
                (mc - oracle_mean[t]).abs() < 0.02,
                "t={t}: {mc} vs {}",
                oracle_mean[t]
            );
        }
    }

    #[test]
    fn path_marginal_variance_matches_dense_inverse() {
        let obs = vec![0.4, -0.9, 1.3, 0.2, -0.5, 0.8];
        let h = vec![0.0; 7];
        let params = SvParams::new(-1.0, 0.8, 0.5).unwrap();
        let view = SvSeriesView {
            obs: &obs,
            h: &h,
            params,
            mu_fixed_to_zero: false,
        };
        let indicators = vec![1usize, 4, 3, 6, 2, 5];
        let z = view.linearized();
        let (_, inv) = dense_posterior(&z, &indicators, params);

        let n_draws = 100_000;
        let n = 7;
        let mut sum = vec![0.0; n];
        let mut sumsq = vec![0.0; n];
        let mut r = rng(21);
        for _ in 0..n_draws {
            let d = sample_h_given_params(&view, &indicators, &mut r).unwrap();
            for t in 0..n {
                sum[t] += d[t];
                sumsq[t] += d[t] * d[t];
            }
        }
        for t in 0..n {
            let mean = sum[t] / n_draws as f64;
            let var = sumsq[t] / n_draws as f64 - mean * mean;
            let se = inv[t][t] * (2.0 / n_draws as f64).sqrt();
            assert!(
                (var - inv[t][t]).abs() < 3.0 * se,
                "t={t}: var {var} vs {} (se {se})",
                inv[t][t]
            );
        }
    }

    #[test]
    fn fixed_level_stays_exactly_zero() {
        let obs = vec![0.5, -0.2, 0.9, -1.1];
        let h = vec![0.1; 5];
        let view = SvSeriesView {
            obs: &obs,
            h: &h,
            params: SvParams::new(0.0, 0.9, 0.3).unwrap(),
            mu_fixed_to_zero: true,
        };
        let priors = PriorConfig::default();
        let mut r = rng(5);
        let mut h_cur = h.clone();
        let mut params = view.params;
        for _ in 0..200 {
            let v = SvSeriesView {
                obs: &obs,
                h: &h_cur,
                params,
                mu_fixed_to_zero: true,
            };
            let (h_new, p_new) = sv_update(&v, &priors, &mut r).unwrap();
            assert_eq!(p_new.mu, 0.0);
            h_cur = h_new;
            params = p_new;
        }
    }

    #[test]
    fn fixed_level_never_reads_mu_prior() {
        // Behavioral instrumentation: wildly different mu priors must give
        // bit-identical output when the level is pinned.
        let obs = vec![0.5, -0.2, 0.9, -1.1, 0.3];
        let h = vec![0.1, -0.2, 0.0, 0.4, -0.1, 0.2];
        let params = SvParams::new(0.0, 0.9, 0.3).unwrap();
        let view = SvSeriesView {
            obs: &obs,
            h: &h,
            params,
            mu_fixed_to_zero: true,
        };
        let mut pri_a = PriorConfig::default();
        let mut pri_b = PriorConfig::default();
        pri_a.mu_mean = 0.0;
        pri_a.mu_var = 100.0;
        pri_b.mu_mean = 99.0;
        pri_b.mu_var = 1e-6;
        let (ha, pa) = sv_update(&view, &pri_a, &mut rng(77)).unwrap();
        let (hb, pb) = sv_update(&view, &pri_b, &mut rng(77)).unwrap();
        assert_eq!(pa.mu.to_bits(), pb.mu.to_bits());
        assert_eq!(pa.phi.to_bits(), pb.phi.to_bits());
        assert_eq!(pa.sigma.to_bits(), pb.sigma.to_bits());
        for (a, b) in ha.iter().zip(hb.iter()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn update_handles_exact_zero_observations() {
        let obs = vec![0.0, 0.0, 0.5, 0.0];
        let h = vec![-1.0; 5];
        let view = SvSeriesView {
            obs: &obs,
            h: &h,
            params: SvParams::new(-1.0, 0.8, 0.4).unwrap(),
            mu_fixed_to_zero: false,
        };
        let (h_new, p_new) = sv_update(&view, &PriorConfig::default(), &mut rng(8)).unwrap();
        assert!(h_new.iter().all(|v| v.is_finite()));
        assert!(p_new.phi.abs() < 1.0 && p_new.sigma > 0.0);
    }

    #[test]
    fn parameters_stay_in_support() {
        let obs: Vec<f64> = (0..16).map(|i| ((i * 37 % 11) as f64 - 5.0) / 7.0).collect();
        let mut h = vec![-0.5; 17];
        let mut params = SvParams::new(-0.5, 0.9, 0.3).unwrap();
        let priors = PriorConfig::default();
        let mut r = rng(13);
        for _ in 0..20_000 {
            let view = SvSeriesView {
                obs: &obs,
                h: &h,
                params,
                mu_fixed_to_zero: false,
            };
            let (h_new, p_new) = sv_update(&view, &priors, &mut r).unwrap();
            assert!(p_new.phi.abs() < 1.0, "phi out of support: {}", p_new.phi);
            assert!(p_new.sigma > 0.0, "sigma out of support: {}", p_new.sigma);
            h = h_new;
            params = p_new;
        }
    }
}
