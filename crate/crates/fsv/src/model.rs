//! Model types, synthetic-data generation, and covariance reconstruction.
//!
//! Observations follow `y_t = Lambda f_t + eps_t` where the latent factors
//! `f_t` and the idiosyncratic errors `eps_t` are Gaussian with time-varying
//! variances `exp(h_it)`. Each log-variance path is an AR(1) process; the
//! factor-series levels are structurally fixed at zero so that the loadings
//! carry the scale.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::FsvError;
use crate::rng::{Phase, RngFactory};
use crate::Result;

/// Problem dimensions: `m` observed series, `r` latent factors, `T` time points.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ModelDims {
    pub m: usize,
    pub r: usize,
    pub t: usize,
}

impl ModelDims {
    pub fn new(m: usize, r: usize, t: usize) -> Result<Self> {
        if m < 1 {
            return Err(FsvError::invalid("need at least one observed series"));
        }
        if r > m {
            return Err(FsvError::invalid(format!(
                "factor count r={r} exceeds series count m={m}"
            )));
        }
        if t < 1 {
            return Err(FsvError::invalid("need at least one time point"));
        }
        Ok(Self { m, r, t })
    }

    /// Total number of log-variance series (idiosyncratic + factor).
    pub fn n_series(&self) -> usize {
        self.m + self.r
    }
}

/// Cell states of the loadings matrix: free or fixed to zero.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RestrictionPattern {
    /// true = free cell, false = fixed to zero. Row-major `m x r`.
    free: Vec<bool>,
    m: usize,
    r: usize,
    kind: PatternKind,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PatternKind {
    LowerTriangular,
    Unrestricted,
    Custom,
}

impl RestrictionPattern {
    /// Fixes exactly the strict upper triangle (column index > row index).
    pub fn lower_triangular(m: usize, r: usize) -> Self {
        let mut free = vec![true; m * r];
        for i in 0..m {
            for j in 0..r {
                if j > i {
                    free[i * r + j] = false;
                }
            }
        }
        Self {
            free,
            m,
            r,
            kind: PatternKind::LowerTriangular,
        }
    }

    /// Fixes nothing.
    pub fn unrestricted(m: usize, r: usize) -> Self {
        Self {
            free: vec![true; m * r],
            m,
            r,
            kind: PatternKind::Unrestricted,
        }
    }

    /// Arbitrary mask; `free[i][j] = false` fixes cell (i, j) to zero.
    pub fn custom(free: Vec<bool>, m: usize, r: usize) -> Result<Self> {
        if free.len() != m * r {
            return Err(FsvError::invalid(format!(
                "mask length {} does not match {m} x {r}",
                free.len()
            )));
        }
        Ok(Self {
            free,
            m,
            r,
            kind: PatternKind::Custom,
        })
    }

    pub fn kind(&self) -> PatternKind {
        self.kind
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.m, self.r)
    }

    pub fn is_free(&self, i: usize, j: usize) -> bool {
        self.free[i * self.r + j]
    }

    /// Row indices of free cells in column `j`.
    pub fn free_rows(&self, j: usize) -> Vec<usize> {
        (0..self.m).filter(|&i| self.is_free(i, j)).collect()
    }

    /// Column indices of free cells in row `i`.
    pub fn free_cols(&self, i: usize) -> Vec<usize> {
        (0..self.r).filter(|&j| self.is_free(i, j)).collect()
    }

    pub fn n_free(&self) -> usize {
        self.free.iter().filter(|&&x| x).count()
    }
}

/// AR(1) parameters of one log-variance series.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SvParams {
    pub mu: f64,
    pub phi: f64,
    pub sigma: f64,
}

impl SvParams {
    pub fn new(mu: f64, phi: f64, sigma: f64) -> Result<Self> {
        if !mu.is_finite() || !phi.is_finite() || !sigma.is_finite() {
            return Err(FsvError::invalid("SV parameters must be finite"));
        }
        if phi.abs() >= 1.0 {
            return Err(FsvError::invalid(format!(
                "persistence must satisfy |phi| < 1, got {phi}"
            )));
        }
        if sigma <= 0.0 {
            return Err(FsvError::invalid(format!(
                "volatility of log-variance must be positive, got {sigma}"
            )));
        }
        Ok(Self { mu, phi, sigma })
    }

    /// Variance of the stationary AR(1) law, `sigma^2 / (1 - phi^2)`.
    pub fn stationary_var(&self) -> f64 {
        self.sigma * self.sigma / (1.0 - self.phi * self.phi)
    }
}

/// Loadings matrix with its restriction pattern plus all SV parameter triples
/// (first `m` idiosyncratic, last `r` factor series with `mu = 0`).
#[derive(Debug, Clone, PartialEq)]
pub struct FsvParams {
    loadings: DMatrix<f64>,
    pattern: RestrictionPattern,
    sv: Vec<SvParams>,
}

impl FsvParams {
    pub fn new(
        loadings: DMatrix<f64>,
        pattern: RestrictionPattern,
        sv: Vec<SvParams>,
    ) -> Result<Self> {
        let (m, r) = (loadings.nrows(), loadings.ncols());
        if pattern.dims() != (m, r) {
            return Err(FsvError::invalid(format!(
                "pattern dims {:?} do not match loadings {m} x {r}",
                pattern.dims()
            )));
        }
        if sv.len() != m + r {
            return Err(FsvError::invalid(format!(
                "need {} SV parameter triples, got {}",
                m + r,
                sv.len()
            )));
        }
        for (idx, s) in sv.iter().enumerate().skip(m) {
            if s.mu != 0.0 {
                return Err(FsvError::invalid(format!(
                    "factor series {idx} must have mu = 0, got {}",
                    s.mu
                )));
            }
        }
        for i in 0..m {
            for j in 0..r {
                let v = loadings[(i, j)];
                if !v.is_finite() {
                    return Err(FsvError::invalid(format!("non-finite loading at ({i}, {j})")));
                }
                if !pattern.is_free(i, j) && v != 0.0 {
                    return Err(FsvError::invalid(format!(
                        "restricted loading cell ({i}, {j}) must be exactly zero, got {v}"
                    )));
                }
            }
        }
        Ok(Self {
            loadings,
            pattern,
            sv,
        })
    }

    pub fn m(&self) -> usize {
        self.loadings.nrows()
    }

    pub fn r(&self) -> usize {
        self.loadings.ncols()
    }

    pub fn loadings(&self) -> &DMatrix<f64> {
        &self.loadings
    }

    pub fn pattern(&self) -> &RestrictionPattern {
        &self.pattern
    }

    pub fn sv(&self) -> &[SvParams] {
        &self.sv
    }

    /// Writes a free cell; restricted cells cannot be touched.
    pub fn set_loading(&mut self, i: usize, j: usize, value: f64) {
        assert!(
            self.pattern.is_free(i, j),
            "attempt to write restricted loadings cell ({i}, {j})"
        );
        self.loadings[(i, j)] = value;
    }

    /// Multiplies every free cell of column `j` by `factor`; restricted
    /// cells stay exactly zero.
    pub fn scale_column(&mut self, j: usize, factor: f64) {
        for i in 0..self.m() {
            if self.pattern.is_free(i, j) {
                self.loadings[(i, j)] *= factor;
            }
        }
    }

    /// Replaces the SV parameters of series `idx`, keeping factor levels at zero.
    pub fn set_sv(&mut self, idx: usize, params: SvParams) {
        if idx >= self.m() {
            assert!(params.mu == 0.0, "factor series {idx} must keep mu = 0");
        }
        self.sv[idx] = params;
    }
}

/// Latent log-variance paths (column 0 holds the initial states) and the
/// factor matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentState {
    /// `(m + r) x (T + 1)`, one column per time point, column 0 = h_0.
    pub h: DMatrix<f64>,
    /// `r x T`.
    pub f: DMatrix<f64>,
}

impl LatentState {
    pub fn new(h: DMatrix<f64>, f: DMatrix<f64>) -> Result<Self> {
        if h.iter().any(|v| !v.is_finite()) || f.iter().any(|v| !v.is_finite()) {
            return Err(FsvError::invalid("latent state entries must be finite"));
        }
        if h.ncols() < 2 {
            return Err(FsvError::invalid(
                "h must have at least the initial state and one time point",
            ));
        }
        Ok(Self { h, f })
    }

    pub fn t(&self) -> usize {
        self.h.ncols() - 1
    }
}

/// Prior hyperparameters for loadings and SV parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PriorConfig {
    /// Mean of the normal prior on each level mu_i.
    pub mu_mean: f64,
    /// Variance of the normal prior on each level mu_i.
    pub mu_var: f64,
    /// First Beta parameter of the prior on (phi + 1)/2.
    pub phi_a: f64,
    /// Second Beta parameter of the prior on (phi + 1)/2.
    pub phi_b: f64,
    /// Scale of the chi-squared(1) prior on sigma^2.
    pub sigma_scale: f64,
    /// Variance of the zero-mean normal prior on each free loading.
    pub loading_var: f64,
    /// Auxiliary prior variance driving the deep-interweaving proposal.
    pub aux_level_var: f64,
}

impl Default for PriorConfig {
    fn default() -> Self {
        Self {
            mu_mean: 0.0,
            mu_var: 100.0,
            phi_a: 20.0,
            phi_b: 1.5,
            sigma_scale: 1.0,
            loading_var: 1.0,
            aux_level_var: 1e8,
        }
    }
}

impl PriorConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("mu_var", self.mu_var),
            ("phi_a", self.phi_a),
            ("phi_b", self.phi_b),
            ("sigma_scale", self.sigma_scale),
            ("loading_var", self.loading_var),
            ("aux_level_var", self.aux_level_var),
        ];
        for (name, v) in positive {
            if !(v > 0.0) || !v.is_finite() {
                return Err(FsvError::invalid(format!("{name} must be positive, got {v}")));
            }
        }
        if !self.mu_mean.is_finite() {
            return Err(FsvError::invalid("mu_mean must be finite"));
        }
        Ok(())
    }
}

/// Conditional covariance of the observation vector at one time point:
/// `Lambda diag(exp(h_factor)) Lambda' + diag(exp(h_idio))`.
pub fn covariance_at_t(params: &FsvParams, h_t: &[f64]) -> Result<DMatrix<f64>> {
    let (m, r) = (params.m(), params.r());
    if h_t.len() != m + r {
        return Err(FsvError::invalid(format!(
            "h_t must have {} entries, got {}",
            m + r,
            h_t.len()
        )));
    }
    if h_t.iter().any(|v| !v.is_finite()) {
        return Err(FsvError::invalid("h_t entries must be finite"));
    }
    let lam = params.loadings();
    let mut cov = DMatrix::zeros(m, m);
    for j in 0..r {
        let vf = h_t[m + j].exp();
        for c in 0..m {
            let ljc = lam[(c, j)];
            if ljc == 0.0 {
                continue;
            }
            for rw in 0..m {
                cov[(rw, c)] += lam[(rw, j)] * vf * ljc;
            }
        }
    }
    for i in 0..m {
        cov[(i, i)] += h_t[i].exp();
    }
    // Exact symmetry regardless of accumulation order.
    for i in 0..m {
        for j in (i + 1)..m {
            let s = cov[(i, j)];
            cov[(j, i)] = s;
        }
    }
    Ok(cov)
}

/// Correlation matrix implied by [`covariance_at_t`]; unit diagonal by
/// construction.
pub fn correlation_at_t(params: &FsvParams, h_t: &[f64]) -> Result<DMatrix<f64>> {
    let cov = covariance_at_t(params, h_t)?;
    let m = cov.nrows();
    let inv_sd: Vec<f64> = (0..m).map(|i| 1.0 / cov[(i, i)].sqrt()).collect();
    let mut corr = cov;
    for i in 0..m {
        for j in 0..m {
            corr[(i, j)] *= inv_sd[i] * inv_sd[j];
        }
        corr[(i, i)] = 1.0;
    }
    Ok(corr)
}

/// Simulates returns and the latent truth from the data-generating process.
/// Initial log-variances are drawn from the stationary AR(1) law; identical
/// seeds give bit-identical output.
pub fn simulate_fsv(
    dims: ModelDims,
    params: &FsvParams,
    rng_seed: u64,
) -> Result<(DMatrix<f64>, LatentState)> {
    if params.m() != dims.m || params.r() != dims.r {
        return Err(FsvError::invalid(format!(
            "parameter dims ({}, {}) do not match requested ({}, {})",
            params.m(),
            params.r(),
            dims.m,
            dims.r
        )));
    }
    let (m, r, t_len) = (dims.m, dims.r, dims.t);
    let factory = RngFactory::new(rng_seed);

    let mut h = DMatrix::zeros(m + r, t_len + 1);
    for i in 0..(m + r) {
        let sv = params.sv()[i];
        let mut rng = factory.stream(Phase::SimulatePath, 0, i);
        let mut prev = sv.mu + sv.stationary_var().sqrt() * rng.sample::<f64, _>(StandardNormal);
        h[(i, 0)] = prev;
        for t in 1..=t_len {
            let next =
                sv.mu + sv.phi * (prev - sv.mu) + sv.sigma * rng.sample::<f64, _>(StandardNormal);
            h[(i, t)] = next;
            prev = next;
        }
    }

    let mut f = DMatrix::zeros(r, t_len);
    for j in 0..r {
        let mut rng = factory.stream(Phase::SimulateFactor, 0, j);
        for t in 0..t_len {
            f[(j, t)] = (0.5 * h[(m + j, t + 1)]).exp() * rng.sample::<f64, _>(StandardNormal);
        }
    }

    let lam = params.loadings();
    let mut returns = DMatrix::zeros(m, t_len);
    for i in 0..m {
        let mut rng = factory.stream(Phase::SimulateObs, 0, i);
        for t in 0..t_len {
            let mut mean = 0.0;
            for j in 0..r {
                mean += lam[(i, j)] * f[(j, t)];
            }
            returns[(i, t)] =
                mean + (0.5 * h[(i, t + 1)]).exp() * rng.sample::<f64, _>(StandardNormal);
        }
    }

    Ok((returns, LatentState::new(h, f)?))
}

/// The `m = 10`, `r = 2` data-generating configuration used by the
/// sampling-efficiency experiment.
pub fn table_ai_params() -> FsvParams {
    let (m, r) = (10, 2);
    let pattern = RestrictionPattern::lower_triangular(m, r);
    let mut loadings = DMatrix::zeros(m, r);
    for i in 0..m {
        loadings[(i, 0)] = 1.0 - 0.1 * i as f64;
    }
    loadings[(1, 1)] = 1.0;
    for i in 2..m {
        loadings[(i, 1)] = 0.1 * (i as f64 - 1.0);
    }
    let mut sv = Vec::with_capacity(m + r);
    for i in 0..m {
        sv.push(
            SvParams::new(
                -2.0 + 0.1 * i as f64,
                0.80 + 0.02 * i as f64,
                0.60 - 0.05 * i as f64,
            )
            .expect("table values are valid"),
        );
    }
    sv.push(SvParams::new(0.0, 0.99, 0.10).expect("valid"));
    sv.push(SvParams::new(0.0, 0.95, 0.30).expect("valid"));
    FsvParams::new(loadings, pattern, sv).expect("table configuration is consistent")
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn two_series_params(l1: f64, l2: f64) -> FsvParams {
        let pattern = RestrictionPattern::unrestricted(2, 1);
        let loadings = DMatrix::from_column_slice(2, 1, &[l1, l2]);
        let sv = vec![
            SvParams::new(-1.0, 0.9, 0.2).unwrap(),
            SvParams::new(-1.0, 0.9, 0.2).unwrap(),
            SvParams::new(0.0, 0.9, 0.2).unwrap(),
        ];
        FsvParams::new(loadings, pattern, sv).unwrap()
    }

    #[test]
    fn covariance_no_factors_is_identity() {
        let params = two_series_params(0.0, 0.0);
        let cov = covariance_at_t(&params, &[0.0, 0.0, 3.7]).unwrap();
        assert_eq!(cov, DMatrix::identity(2, 2));
    }

    #[test]
    fn covariance_hand_computed() {
        let params = two_series_params(1.0, 2.0);
        let cov = covariance_at_t(&params, &[0.0, 0.0, 0.0]).unwrap();
        let expect = DMatrix::from_row_slice(2, 2, &[2.0, 2.0, 2.0, 5.0]);
        assert_eq!(cov, expect);
    }

    #[test]
    fn covariance_symmetric_positive_definite() {
        let params = two_series_params(0.7, -1.3);
        let cov = covariance_at_t(&params, &[-0.5, 1.2, 0.3]).unwrap();
        assert_eq!(cov[(0, 1)], cov[(1, 0)]);
        assert!(cov.clone().cholesky().is_some());
    }

    #[test]
    fn covariance_rejects_nonfinite() {
        let params = two_series_params(1.0, 2.0);
        assert!(covariance_at_t(&params, &[f64::NAN, 0.0, 0.0]).is_err());
        assert!(covariance_at_t(&params, &[0.0, 0.0]).is_err());
    }

    #[test]
    fn correlation_identity_and_hand_value() {
        let params = two_series_params(0.0, 0.0);
        let corr = correlation_at_t(&params, &[0.1, -0.4, 2.0]).unwrap();
        assert_eq!(corr, DMatrix::identity(2, 2));

        let params = two_series_params(1.0, 2.0);
        let corr = correlation_at_t(&params, &[0.0, 0.0, 0.0]).unwrap();
        assert_eq!(corr[(0, 0)], 1.0);
        assert_eq!(corr[(1, 1)], 1.0);
        assert_relative_eq!(corr[(0, 1)], 2.0 / 10.0_f64.sqrt(), epsilon = 1e-15);
        assert_relative_eq!(corr[(1, 0)], 2.0 / 10.0_f64.sqrt(), epsilon = 1e-15);
    }

    #[test]
    fn correlation_unit_diagonal_random_input() {
        let params = two_series_params(0.3, 1.7);
        let corr = correlation_at_t(&params, &[0.9, -2.0, 0.5]).unwrap();
        for i in 0..2 {
            assert_eq!(corr[(i, i)], 1.0);
            for j in 0..2 {
                assert!(corr[(i, j)].abs() <= 1.0 + 1e-12);
            }
        }
    }

    #[test]
    fn restriction_patterns() {
        let p = RestrictionPattern::lower_triangular(4, 3);
        assert!(p.is_free(0, 0));
        assert!(!p.is_free(0, 1));
        assert!(!p.is_free(1, 2));
        assert!(p.is_free(2, 2));
        assert_eq!(p.free_rows(1), vec![1, 2, 3]);
        assert_eq!(p.free_cols(1), vec![0, 1]);
        assert_eq!(RestrictionPattern::unrestricted(4, 3).n_free(), 12);
    }

    #[test]
    fn params_enforce_restrictions_and_factor_levels() {
        let pattern = RestrictionPattern::lower_triangular(2, 2);
        let bad = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.2, 1.0]);
        let sv = vec![
            SvParams::new(-1.0, 0.5, 0.3).unwrap(),
            SvParams::new(-1.0, 0.5, 0.3).unwrap(),
            SvParams::new(0.0, 0.5, 0.3).unwrap(),
            SvParams::new(0.0, 0.5, 0.3).unwrap(),
        ];
        assert!(FsvParams::new(bad, pattern.clone(), sv.clone()).is_err());

        let mut sv_bad_mu = sv.clone();
        sv_bad_mu[3] = SvParams {
            mu: 0.5,
            phi: 0.5,
            sigma: 0.3,
        };
        let good = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.2, 1.0]);
        assert!(FsvParams::new(good.clone(), pattern.clone(), sv_bad_mu).is_err());
        assert!(FsvParams::new(good, pattern, sv).is_ok());
    }

    #[test]
    fn sv_params_validation() {
        assert!(SvParams::new(0.0, 1.0, 0.5).is_err());
        assert!(SvParams::new(0.0, -1.0, 0.5).is_err());
        assert!(SvParams::new(0.0, 0.5, 0.0).is_err());
        assert!(SvParams::new(0.0, 0.5, 0.5).is_ok());
    }

    #[test]
    fn simulate_rejects_explosive_persistence() {
        // SvParams can't be built with |phi| >= 1, so dims mismatch is the
        // reachable precondition failure.
        let params = two_series_params(1.0, 1.0);
        let dims = ModelDims::new(3, 1, 10).unwrap();
        assert!(simulate_fsv(dims, &params, 1).is_err());
    }

    #[test]
    fn simulate_degenerate_ar1_pins_path_to_level() {
        let pattern = RestrictionPattern::unrestricted(1, 0);
        let loadings = DMatrix::zeros(1, 0);
        let sv = vec![SvParams::new(-1.5, 0.0, 1e-12).unwrap()];
        let params = FsvParams::new(loadings, pattern, sv).unwrap();
        let dims = ModelDims::new(1, 0, 50).unwrap();
        let (_, truth) = simulate_fsv(dims, &params, 9).unwrap();
        for t in 0..=50 {
            assert_relative_eq!(truth.h[(0, t)], -1.5, epsilon = 1e-6);
        }
    }

    #[test]
    fn simulate_is_deterministic() {
        let params = table_ai_params();
        let dims = ModelDims::new(10, 2, 64).unwrap();
        let (y1, s1) = simulate_fsv(dims, &params, 123).unwrap();
        let (y2, s2) = simulate_fsv(dims, &params, 123).unwrap();
        assert_eq!(y1, y2);
        assert_eq!(s1.h, s2.h);
        assert_eq!(s1.f, s2.f);
    }

    proptest::proptest! {
        #[test]
        fn covariance_always_symmetric_positive_definite(
            l in proptest::collection::vec(-3.0f64..3.0, 6),
            h in proptest::collection::vec(-4.0f64..4.0, 5),
        ) {
            let pattern = RestrictionPattern::unrestricted(3, 2);
            let loadings = DMatrix::from_column_slice(3, 2, &l);
            let sv = vec![
                SvParams::new(-1.0, 0.9, 0.2).unwrap(),
                SvParams::new(-1.0, 0.9, 0.2).unwrap(),
                SvParams::new(-1.0, 0.9, 0.2).unwrap(),
                SvParams::new(0.0, 0.9, 0.2).unwrap(),
                SvParams::new(0.0, 0.9, 0.2).unwrap(),
            ];
            let params = FsvParams::new(loadings, pattern, sv).unwrap();
            let cov = covariance_at_t(&params, &h).unwrap();
            for i in 0..3 {
                for j in 0..3 {
                    proptest::prop_assert!((cov[(i, j)] - cov[(j, i)]).abs() <= 1e-12);
                }
            }
            proptest::prop_assert!(cov.cholesky().is_some());
        }
    }

    #[test]
    fn table_ai_values() {
        let p = table_ai_params();
        // Row 2, column 1 (1-based) = 0.9.
        assert_eq!(p.loadings()[(1, 0)], 0.9);
        // Restricted corner cell.
        assert_eq!(p.loadings()[(0, 1)], 0.0);
        assert!(!p.pattern().is_free(0, 1));
        // Tenth idiosyncratic series.
        let s10 = p.sv()[9];
        assert_relative_eq!(s10.mu, -1.1, epsilon = 1e-12);
        assert_relative_eq!(s10.phi, 0.98, epsilon = 1e-12);
        assert_relative_eq!(s10.sigma, 0.15, epsilon = 1e-12);
        // Second factor series (index 12, 1-based).
        let s12 = p.sv()[11];
        assert_eq!(s12.mu, 0.0);
        assert_relative_eq!(s12.phi, 0.95, epsilon = 1e-12);
        assert_relative_eq!(s12.sigma, 0.30, epsilon = 1e-12);
    }
}
