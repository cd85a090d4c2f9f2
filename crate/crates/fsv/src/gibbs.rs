//! Full conditional Gibbs sampler for the factor SV model.
//!
//! One iteration performs, in order: (a) a univariate SV update for every
//! log-variance series, (b) a conjugate regression draw for every loadings
//! row, (b*) the configured interweaving boost, and (c) a conjugate
//! regression draw of the factors at every time point. Every unit of work
//! draws from its own addressable RNG stream, so parallel and serial
//! schedules produce bit-identical chains.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::error::FsvError;
use crate::interweave::{self, BoostContext, BoostStats, BoostStrategy};
use crate::math::fast_exp;
use crate::model::{
    FsvParams, LatentState, ModelDims, PriorConfig, RestrictionPattern, SvParams,
};
use crate::rng::{Phase, RngFactory};
use crate::sv::{sv_update, SvSeriesView};
use crate::Result;

/// Run-length and strategy settings for one chain.
#[derive(Debug, Clone)]
pub struct SamplerConfig {
    /// Post burn-in iterations.
    pub draws: usize,
    /// Discarded initial iterations.
    pub burn_in: usize,
    /// Keep every `thin`-th post burn-in draw.
    pub thin: usize,
    /// Registered interweaving strategy name: none, shallow, deep, or both.
    pub interweaving: String,
    pub restriction: RestrictionPattern,
    pub rng_seed: u64,
    /// Store full latent paths per kept draw (memory-heavy).
    pub store_latents: bool,
    /// Track the exact-transformation invariants of Step (b*).
    pub track_invariants: bool,
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.thin < 1 {
            return Err(FsvError::invalid("thin must be at least 1"));
        }
        interweave::strategy(&self.interweaving)?;
        Ok(())
    }
}

/// Stored thinned draws plus provenance metadata.
#[derive(Debug, Clone)]
pub struct ChainOutput {
    pub dims: ModelDims,
    /// Loadings per kept draw, dense `m x r` with restricted cells zero.
    pub loadings: Vec<DMatrix<f64>>,
    /// SV parameter triples per kept draw, one per series.
    pub sv_params: Vec<Vec<SvParams>>,
    /// Final-time factors `f_{., T}` per kept draw.
    pub final_factors: Vec<Vec<f64>>,
    /// Final-time log-variances `h_{., T}` per kept draw.
    pub final_h: Vec<Vec<f64>>,
    /// Full log-variance paths, present when `store_latents` is set.
    pub h_draws: Option<Vec<DMatrix<f64>>>,
    /// Full factor paths, present when `store_latents` is set.
    pub f_draws: Option<Vec<DMatrix<f64>>>,
    pub meta: RunMeta,
}

/// Everything needed to reproduce the run plus interweaving counters.
#[derive(Debug, Clone)]
pub struct RunMeta {
    pub config: SamplerConfig,
    pub priors: PriorConfig,
    pub boost: BoostStats,
}

impl ChainOutput {
    pub fn stored(&self) -> usize {
        self.loadings.len()
    }

    /// Trace of one loadings cell across kept draws.
    pub fn loadings_trace(&self, i: usize, j: usize) -> Vec<f64> {
        self.loadings.iter().map(|l| l[(i, j)]).collect()
    }

    pub fn mu_trace(&self, series: usize) -> Vec<f64> {
        self.sv_params.iter().map(|s| s[series].mu).collect()
    }

    pub fn phi_trace(&self, series: usize) -> Vec<f64> {
        self.sv_params.iter().map(|s| s[series].phi).collect()
    }

    pub fn sigma_trace(&self, series: usize) -> Vec<f64> {
        self.sv_params.iter().map(|s| s[series].sigma).collect()
    }

    pub fn final_factor_trace(&self, j: usize) -> Vec<f64> {
        self.final_factors.iter().map(|f| f[j]).collect()
    }

    pub fn final_h_trace(&self, series: usize) -> Vec<f64> {
        self.final_h.iter().map(|h| h[series]).collect()
    }
}

/// Normal equations of one loadings-row regression over its free cells:
/// precision `X'X + I/B` and right-hand side `X'y~`, where the design
/// stacks `f_{jt} exp(-h_it/2)` and `y~` is the normalized observation
/// vector.
fn loadings_row_normal_equations(
    y_i: &[f64],
    f: &DMatrix<f64>,
    h_i: &[f64],
    free_cols: &[usize],
    loading_var: f64,
) -> Result<(DMatrix<f64>, DVector<f64>)> {
    let t_len = y_i.len();
    if f.ncols() != t_len || h_i.len() != t_len {
        return Err(FsvError::invalid(format!(
            "loadings row inputs disagree: T={t_len}, f has {} columns, h has {}",
            f.ncols(),
            h_i.len()
        )));
    }
    let k = free_cols.len();
    let mut prec = DMatrix::zeros(k, k);
    let mut rhs = DVector::zeros(k);
    for t in 0..t_len {
        let w = fast_exp(-h_i[t]);
        if !w.is_finite() || !y_i[t].is_finite() {
            return Err(FsvError::invalid(format!(
                "non-finite design entry at t={t} in loadings regression"
            )));
        }
        for (a, &ja) in free_cols.iter().enumerate() {
            let fa = f[(ja, t)];
            if !fa.is_finite() {
                return Err(FsvError::invalid(format!(
                    "non-finite factor value at ({ja}, {t})"
                )));
            }
            rhs[a] += w * fa * y_i[t];
            for (b, &jb) in free_cols.iter().enumerate().take(a + 1) {
                prec[(a, b)] += w * fa * f[(jb, t)];
            }
        }
    }
    for a in 0..k {
        prec[(a, a)] += 1.0 / loading_var;
        for b in (a + 1)..k {
            prec[(a, b)] = prec[(b, a)];
        }
    }
    Ok((prec, rhs))
}

/// Posterior mean and covariance of one loadings row over its free cells;
/// `None` for fully restricted rows.
pub fn loadings_row_moments(
    y_i: &[f64],
    f: &DMatrix<f64>,
    h_i: &[f64],
    free_cols: &[usize],
    loading_var: f64,
) -> Result<Option<(DVector<f64>, DMatrix<f64>)>> {
    if free_cols.is_empty() {
        return Ok(None);
    }
    let (prec, rhs) = loadings_row_normal_equations(y_i, f, h_i, free_cols, loading_var)?;
    let chol = prec.cholesky().ok_or_else(|| FsvError::SingularPrecision {
        step: "loadings row regression".into(),
        details: "posterior precision not positive definite".into(),
    })?;
    let mean = chol.solve(&rhs);
    let cov = chol.inverse();
    Ok(Some((mean, cov)))
}

/// Exact conjugate draw of one loadings row. Returns the dense `r`-vector
/// with restricted cells as literal zeros; a fully restricted row is a no-op
/// returning all zeros.
pub fn sample_loadings_row<R: Rng + ?Sized>(
    row: usize,
    y_i: &[f64],
    f: &DMatrix<f64>,
    h_i: &[f64],
    pattern: &RestrictionPattern,
    loading_var: f64,
    rng: &mut R,
) -> Result<DVector<f64>> {
    let (_, r) = pattern.dims();
    let free = pattern.free_cols(row);
    let mut out = DVector::zeros(r);
    if free.is_empty() {
        return Ok(out);
    }
    let (prec, rhs) = loadings_row_normal_equations(y_i, f, h_i, &free, loading_var)?;
    let chol = prec.cholesky().ok_or_else(|| FsvError::SingularPrecision {
        step: "loadings row regression".into(),
        details: "posterior precision not positive definite".into(),
    })?;
    let mean = chol.solve(&rhs);
    let z = DVector::from_fn(free.len(), |_, _| rng.sample::<f64, _>(StandardNormal));
    let dev = chol
        .l()
        .transpose()
        .solve_upper_triangular(&z)
        .ok_or_else(|| FsvError::SingularPrecision {
            step: "loadings row regression".into(),
            details: "triangular solve failed".into(),
        })?;
    for (a, &ja) in free.iter().enumerate() {
        out[ja] = mean[a] + dev[a];
    }
    Ok(out)
}

/// Posterior moments of the factor vector at one time point:
/// covariance `(X'X + V_t^-1)^-1`, mean `cov * X' y~`.
pub fn factors_posterior_at_t(
    y_t: &[f64],
    loadings: &DMatrix<f64>,
    h_t: &[f64],
) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let (m, r) = (loadings.nrows(), loadings.ncols());
    if y_t.len() != m || h_t.len() != m + r {
        return Err(FsvError::invalid(format!(
            "factor draw inputs disagree: m={m}, r={r}, y has {}, h has {}",
            y_t.len(),
            h_t.len()
        )));
    }
    let mut prec = DMatrix::zeros(r, r);
    let mut rhs = DVector::zeros(r);
    for i in 0..m {
        let w = (-h_t[i]).exp();
        for j in 0..r {
            let lij = loadings[(i, j)];
            if lij == 0.0 {
                continue;
            }
            rhs[j] += w * lij * y_t[i];
            for k in 0..=j {
                prec[(j, k)] += w * lij * loadings[(i, k)];
            }
        }
    }
    for j in 0..r {
        prec[(j, j)] += (-h_t[m + j]).exp();
        for k in (j + 1)..r {
            prec[(j, k)] = prec[(k, j)];
        }
    }
    let chol = prec.clone().cholesky().ok_or_else(|| FsvError::SingularPrecision {
        step: "factor regression".into(),
        details: "posterior precision not positive definite (non-finite h?)".into(),
    })?;
    let mean = chol.solve(&rhs);
    Ok((mean, chol.inverse()))
}

/// Largest factor count handled by the allocation-free draw path.
const SMALL_R: usize = 8;

/// Exact conjugate draw of the factors at one time point. Small factor
/// counts run on stack buffers; this is the sampler's innermost hot loop.
pub fn sample_factors_at_t<R: Rng + ?Sized>(
    y_t: &[f64],
    loadings: &DMatrix<f64>,
    h_t: &[f64],
    rng: &mut R,
) -> Result<DVector<f64>> {
    let (m, r) = (loadings.nrows(), loadings.ncols());
    if r > SMALL_R {
        let (mean, cov_chol) = factors_posterior_at_t(y_t, loadings, h_t)?;
        let z = DVector::from_fn(r, |_, _| rng.sample::<f64, _>(StandardNormal));
        let chol = cov_chol.cholesky().ok_or_else(|| FsvError::SingularPrecision {
            step: "factor regression".into(),
            details: "covariance factorization failed".into(),
        })?;
        return Ok(&mean + chol.l() * z);
    }

    let mut prec = [0.0f64; SMALL_R * SMALL_R];
    let mut rhs = [0.0f64; SMALL_R];
    let lam = loadings.as_slice(); // column-major
    for i in 0..m {
        let w = fast_exp(-h_t[i]);
        let wy = w * y_t[i];
        for j in 0..r {
            let lij = lam[j * m + i];
            if lij == 0.0 {
                continue;
            }
            rhs[j] += wy * lij;
            let wl = w * lij;
            for k in 0..=j {
                prec[j * r + k] += wl * lam[k * m + i];
            }
        }
    }
    for j in 0..r {
        prec[j * r + j] += fast_exp(-h_t[m + j]);
    }

    // In-place lower Cholesky of the packed precision.
    for j in 0..r {
        let mut d = prec[j * r + j];
        for p in 0..j {
            d -= prec[j * r + p] * prec[j * r + p];
        }
        if !(d > 0.0) {
            return Err(FsvError::SingularPrecision {
                step: "factor regression".into(),
                details: "posterior precision not positive definite (non-finite h?)".into(),
            });
        }
        let dj = d.sqrt();
        prec[j * r + j] = dj;
        for i in (j + 1)..r {
            let mut s = prec[i * r + j];
            for p in 0..j {
                s -= prec[i * r + p] * prec[j * r + p];
            }
            prec[i * r + j] = s / dj;
        }
    }
    // Mean: L u = rhs forward, then fold in the noise and back-substitute
    // L' x = u + eps.
    let mut x = [0.0f64; SMALL_R];
    for i in 0..r {
        let mut s = rhs[i];
        for p in 0..i {
            s -= prec[i * r + p] * x[p];
        }
        x[i] = s / prec[i * r + i];
    }
    for v in x.iter_mut().take(r) {
        *v += rng.sample::<f64, _>(StandardNormal);
    }
    for i in (0..r).rev() {
        let mut s = x[i];
        for p in (i + 1)..r {
            s -= prec[p * r + i] * x[p];
        }
        x[i] = s / prec[i * r + i];
    }
    Ok(DVector::from_row_slice(&x[..r]))
}

/// The sampler bound to one data set.
pub struct GibbsSampler<'a> {
    data: &'a DMatrix<f64>,
    priors: PriorConfig,
    strategy: Arc<dyn BoostStrategy>,
    factory: RngFactory,
    track_invariants: bool,
}

impl<'a> GibbsSampler<'a> {
    pub fn new(data: &'a DMatrix<f64>, config: &SamplerConfig, priors: PriorConfig) -> Result<Self> {
        config.validate()?;
        priors.validate()?;
        if data.iter().any(|v| !v.is_finite()) {
            return Err(FsvError::invalid("returns matrix contains non-finite values"));
        }
        Ok(Self {
            data,
            priors,
            strategy: interweave::strategy(&config.interweaving)?,
            factory: RngFactory::new(config.rng_seed),
            track_invariants: config.track_invariants,
        })
    }

    pub fn factory(&self) -> &RngFactory {
        &self.factory
    }

    /// Step (a): univariate SV update for every series, parallel over
    /// series with per-series streams.
    pub fn step_sv_updates(
        &self,
        state: &mut LatentState,
        params: &mut FsvParams,
        iteration: u64,
    ) -> Result<()> {
        let (m, r) = (params.m(), params.r());
        let t_len = self.data.ncols();
        let priors = &self.priors;
        let results: Vec<Result<(Vec<f64>, SvParams)>> = (0..m + r)
            .into_par_iter()
            .map(|i| {
                let mut obs = Vec::with_capacity(t_len);
                if i < m {
                    for t in 0..t_len {
                        let mut resid = self.data[(i, t)];
                        for j in 0..r {
                            resid -= params.loadings()[(i, j)] * state.f[(j, t)];
                        }
                        obs.push(resid);
                    }
                } else {
                    for t in 0..t_len {
                        obs.push(state.f[(i - m, t)]);
                    }
                }
                let h_row: Vec<f64> = (0..=t_len).map(|t| state.h[(i, t)]).collect();
                let view = SvSeriesView {
                    obs: &obs,
                    h: &h_row,
                    params: params.sv()[i],
                    mu_fixed_to_zero: i >= m,
                };
                let mut rng = self.factory.stream(Phase::SvSeries, iteration, i);
                sv_update(&view, priors, &mut rng)
                    .map_err(|e| e.in_step("sv-update", i, iteration))
            })
            .collect();
        for (i, res) in results.into_iter().enumerate() {
            let (h_new, p_new) = res?;
            for (t, &v) in h_new.iter().enumerate() {
                state.h[(i, t)] = v;
            }
            params.set_sv(i, p_new);
        }
        Ok(())
    }

    /// Step (b): conjugate draw of every loadings row, parallel over rows.
    pub fn step_loadings(
        &self,
        state: &LatentState,
        params: &mut FsvParams,
        iteration: u64,
    ) -> Result<()> {
        let m = params.m();
        let t_len = self.data.ncols();
        let rows: Vec<Result<DVector<f64>>> = (0..m)
            .into_par_iter()
            .map(|i| {
                let y_i: Vec<f64> = (0..t_len).map(|t| self.data[(i, t)]).collect();
                let h_i: Vec<f64> = (1..=t_len).map(|t| state.h[(i, t)]).collect();
                let mut rng = self.factory.stream(Phase::LoadingsRow, iteration, i);
                sample_loadings_row(
                    i,
                    &y_i,
                    &state.f,
                    &h_i,
                    params.pattern(),
                    self.priors.loading_var,
                    &mut rng,
                )
                .map_err(|e| e.in_step("loadings-row", i, iteration))
            })
            .collect();
        for (i, res) in rows.into_iter().enumerate() {
            let row = res?;
            for j in params.pattern().free_cols(i) {
                params.set_loading(i, j, row[j]);
            }
        }
        Ok(())
    }

    /// Step (b*): the configured interweaving boost.
    pub fn step_boost(
        &self,
        state: &mut LatentState,
        params: &mut FsvParams,
        iteration: u64,
        stats: &mut BoostStats,
    ) -> Result<()> {
        let mut ctx = BoostContext {
            state,
            params,
            priors: &self.priors,
            rng_factory: &self.factory,
            iteration,
            track_invariants: self.track_invariants,
            stats,
        };
        self.strategy.apply(&mut ctx)
    }

    /// Step (c): conjugate draw of the factors at every time point,
    /// parallel over chunks of time points.
    pub fn step_factors(
        &self,
        state: &mut LatentState,
        params: &FsvParams,
        iteration: u64,
    ) -> Result<()> {
        let (m, r) = (params.m(), params.r());
        if r == 0 {
            return Ok(());
        }
        let t_len = self.data.ncols();
        let draws: Vec<Result<DVector<f64>>> = (0..t_len)
            .into_par_iter()
            .with_min_len(64)
            .map(|t| {
                let y_t: Vec<f64> = (0..m).map(|i| self.data[(i, t)]).collect();
                let h_t: Vec<f64> = (0..m + r).map(|i| state.h[(i, t + 1)]).collect();
                let mut rng = self.factory.stream(Phase::FactorTime, iteration, t);
                sample_factors_at_t(&y_t, params.loadings(), &h_t, &mut rng)
                    .map_err(|e| e.in_step("factor-time", t, iteration))
            })
            .collect();
        for (t, res) in draws.into_iter().enumerate() {
            let col = res?;
            for j in 0..r {
                state.f[(j, t)] = col[j];
            }
        }
        Ok(())
    }

    /// One full Gibbs iteration in the order (a), (b), (b*), (c).
    pub fn iterate(
        &self,
        state: &mut LatentState,
        params: &mut FsvParams,
        iteration: u64,
        stats: &mut BoostStats,
    ) -> Result<()> {
        self.step_sv_updates(state, params, iteration)?;
        self.step_loadings(state, params, iteration)?;
        self.step_boost(state, params, iteration, stats)?;
        self.step_factors(state, params, iteration)?;
        Ok(())
    }
}

/// Scale-aware default initialization: zero loadings, per-series sample
/// log-variance levels, moderately persistent volatility parameters, and
/// factors drawn from their prior at the initial log-variances (an all-zero
/// factor matrix would make the first interweaving step ill-posed).
pub fn default_init(
    data: &DMatrix<f64>,
    pattern: &RestrictionPattern,
    seed: u64,
) -> Result<(FsvParams, LatentState)> {
    let (m, t_len) = (data.nrows(), data.ncols());
    let (pm, r) = pattern.dims();
    if pm != m {
        return Err(FsvError::invalid(format!(
            "restriction pattern is for m={pm}, data has m={m}"
        )));
    }
    let factory = RngFactory::new(seed);
    let loadings = DMatrix::zeros(m, r);
    let mut sv = Vec::with_capacity(m + r);
    let mut h = DMatrix::zeros(m + r, t_len + 1);
    for i in 0..m {
        let mean = data.row(i).sum() / t_len as f64;
        let var = data
            .row(i)
            .iter()
            .map(|&y| (y - mean) * (y - mean))
            .sum::<f64>()
            / t_len as f64;
        let level = var.max(1e-12).ln();
        sv.push(SvParams::new(level, 0.9, 0.2)?);
        for t in 0..=t_len {
            h[(i, t)] = level;
        }
    }
    for _ in 0..r {
        sv.push(SvParams::new(0.0, 0.9, 0.2)?);
    }
    let mut f = DMatrix::zeros(r, t_len);
    for j in 0..r {
        let mut rng = factory.stream(Phase::Init, 0, j);
        for t in 0..t_len {
            f[(j, t)] = (0.5 * h[(m + j, t + 1)]).exp() * rng.sample::<f64, _>(StandardNormal);
        }
    }
    let params = FsvParams::new(loadings, pattern.clone(), sv)?;
    let state = LatentState::new(h, f)?;
    Ok((params, state))
}

/// Runs `burn_in + draws` iterations and stores every `thin`-th post
/// burn-in draw. Deterministic given the seed in `config`.
pub fn run_sampler(
    data: &DMatrix<f64>,
    config: &SamplerConfig,
    priors: &PriorConfig,
    init: Option<(FsvParams, LatentState)>,
) -> Result<ChainOutput> {
    let sampler = GibbsSampler::new(data, config, *priors)?;
    let (m, t_len) = (data.nrows(), data.ncols());
    let (_, r) = config.restriction.dims();
    let dims = ModelDims::new(m, r, t_len)?;

    let (mut params, mut state) = match init {
        Some((p, s)) => {
            if p.m() != m || p.r() != r || s.f.ncols() != t_len {
                return Err(FsvError::invalid(
                    "initial parameters/state do not match data dimensions",
                ));
            }
            (p, s)
        }
        None => default_init(data, &config.restriction, config.rng_seed)?,
    };

    let kept = config.draws / config.thin;
    let mut out = ChainOutput {
        dims,
        loadings: Vec::with_capacity(kept),
        sv_params: Vec::with_capacity(kept),
        final_factors: Vec::with_capacity(kept),
        final_h: Vec::with_capacity(kept),
        h_draws: config.store_latents.then(|| Vec::with_capacity(kept)),
        f_draws: config.store_latents.then(|| Vec::with_capacity(kept)),
        meta: RunMeta {
            config: config.clone(),
            priors: *priors,
            boost: BoostStats::default(),
        },
    };

    let total = config.burn_in + config.draws;
    let mut stats = BoostStats::default();
    for iter in 0..total {
        sampler.iterate(&mut state, &mut params, iter as u64, &mut stats)?;
        if iter >= config.burn_in {
            let post = iter - config.burn_in;
            if (post + 1) % config.thin == 0 {
                out.loadings.push(params.loadings().clone());
                out.sv_params.push(params.sv().to_vec());
                out.final_factors
                    .push((0..r).map(|j| state.f[(j, t_len - 1)]).collect());
                out.final_h
                    .push((0..m + r).map(|i| state.h[(i, t_len)]).collect());
                if let Some(hd) = out.h_draws.as_mut() {
                    hd.push(state.h.clone());
                }
                if let Some(fd) = out.f_draws.as_mut() {
                    fd.push(state.f.clone());
                }
            }
        }
    }
    out.meta.boost = stats;
    debug_assert_eq!(out.loadings.len(), kept);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{simulate_fsv, table_ai_params};
    use approx::assert_relative_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    fn rng(seed: u64) -> ChaCha12Rng {
        ChaCha12Rng::seed_from_u64(seed)
    }

    #[test]
    fn loadings_row_zero_data_gives_zero_mean_and_prior_style_cov() {
        let t_len = 6;
        let f = DMatrix::from_fn(2, t_len, |j, t| 0.3 * (j as f64 + 1.0) * ((t + 1) as f64).sin());
        let y = vec![0.0; t_len];
        let h = vec![0.4; t_len];
        let (mean, cov) =
            loadings_row_moments(&y, &f, &h, &[0, 1], 2.0).unwrap().unwrap();
        assert_eq!(mean, DVector::zeros(2));
        // Covariance equals (X'X + I/B)^-1: check via the defining identity.
        let mut xtx: DMatrix<f64> = DMatrix::zeros(2, 2);
        for t in 0..t_len {
            let w = (-0.4f64).exp();
            for a in 0..2 {
                for b in 0..2 {
                    xtx[(a, b)] += w * f[(a, t)] * f[(b, t)];
                }
            }
        }
        xtx[(0, 0)] += 0.5;
        xtx[(1, 1)] += 0.5;
        let id: DMatrix<f64> = xtx * cov;
        assert!((id - DMatrix::<f64>::identity(2, 2)).abs().max() < 1e-12);
    }

    #[test]
    fn loadings_row_flat_prior_intercept_limit() {
        // r = 1, f = 1, h = 0, B huge: posterior mean -> sample mean of y,
        // variance -> 1/T.
        let t_len = 40;
        let f = DMatrix::from_element(1, t_len, 1.0);
        let y: Vec<f64> = (0..t_len).map(|t| (t as f64 * 0.7).sin() + 0.3).collect();
        let h = vec![0.0; t_len];
        let (mean, cov) = loadings_row_moments(&y, &f, &h, &[0], 1e12)
            .unwrap()
            .unwrap();
        let ybar = y.iter().sum::<f64>() / t_len as f64;
        assert_relative_eq!(mean[0], ybar, epsilon = 1e-6);
        assert_relative_eq!(cov[(0, 0)], 1.0 / t_len as f64, max_relative = 1e-6);
    }

    #[test]
    fn loadings_row_rejects_nonfinite() {
        let f = DMatrix::from_element(1, 3, 1.0);
        let y = vec![1.0, f64::NAN, 0.0];
        let h = vec![0.0; 3];
        assert!(loadings_row_moments(&y, &f, &h, &[0], 1.0).is_err());
    }

    #[test]
    fn fully_restricted_row_is_noop() {
        let pattern = RestrictionPattern::custom(vec![false, false], 1, 2).unwrap();
        let f = DMatrix::from_element(2, 3, 1.0);
        let y = vec![1.0, 2.0, 3.0];
        let h = vec![0.0; 3];
        let row = sample_loadings_row(0, &y, &f, &h, &pattern, 1.0, &mut rng(0)).unwrap();
        assert_eq!(row, DVector::zeros(2));
    }

    #[test]
    fn factors_prior_draw_when_loadings_zero() {
        // Lambda = 0: the draw comes from the prior N(0, exp(h_factor)).
        let loadings = DMatrix::zeros(3, 1);
        let y = vec![5.0, -2.0, 1.0];
        let h = vec![0.0, 0.0, 0.0, 0.7];
        let n = 100_000;
        let mut r = rng(3);
        let mut sum = 0.0;
        let mut sumsq = 0.0;
        for _ in 0..n {
            let d = sample_factors_at_t(&y, &loadings, &h, &mut r).unwrap();
            sum += d[0];
            sumsq += d[0] * d[0];
        }
        let mean = sum / n as f64;
        let var = sumsq / n as f64 - mean * mean;
        let expect = 0.7f64.exp();
        let se = expect * (2.0 / n as f64).sqrt();
        assert!(mean.abs() < 3.0 * (expect / n as f64).sqrt());
        assert!((var - expect).abs() < 3.0 * se, "var {var} vs {expect}");
    }

    #[test]
    fn factors_scalar_shrinkage() {
        // m = 1, r = 1, lambda = 1, h = 0: posterior N(y/2, 1/2).
        let loadings = DMatrix::from_element(1, 1, 1.0);
        let y = vec![1.8];
        let h = vec![0.0, 0.0];
        let (mean, cov) = factors_posterior_at_t(&y, &loadings, &h).unwrap();
        assert_relative_eq!(mean[0], 0.9, epsilon = 1e-12);
        assert_relative_eq!(cov[(0, 0)], 0.5, epsilon = 1e-12);
    }

    #[test]
    fn factors_posterior_mean_solves_normal_equations() {
        let loadings = DMatrix::from_row_slice(4, 2, &[1.0, 0.0, 0.7, 1.1, -0.3, 0.6, 0.2, -0.9]);
        let y = vec![0.8, -0.4, 1.2, 0.1];
        let h = vec![0.2, -0.5, 0.3, 0.0, -0.1, 0.4];
        let (mean, _) = factors_posterior_at_t(&y, &loadings, &h).unwrap();
        // Residual of (X'X + V^-1) mean = X'y~.
        let mut prec = DMatrix::zeros(2, 2);
        let mut rhs = DVector::zeros(2);
        for i in 0..4 {
            let w = (-h[i]).exp();
            for j in 0..2 {
                rhs[j] += w * loadings[(i, j)] * y[i];
                for k in 0..2 {
                    prec[(j, k)] += w * loadings[(i, j)] * loadings[(i, k)];
                }
            }
        }
        prec[(0, 0)] += (-h[4]).exp();
        prec[(1, 1)] += (-h[5]).exp();
        let resid = &prec * &mean - rhs;
        assert!(resid.norm() < 1e-10, "residual {resid}");
    }

    fn small_run_config(interweaving: &str, seed: u64) -> (DMatrix<f64>, SamplerConfig) {
        let params = table_ai_params();
        let dims = ModelDims::new(10, 2, 40).unwrap();
        let (y, _) = simulate_fsv(dims, &params, seed).unwrap();
        let config = SamplerConfig {
            draws: 30,
            burn_in: 5,
            thin: 1,
            interweaving: interweaving.to_string(),
            restriction: RestrictionPattern::lower_triangular(10, 2),
            rng_seed: seed,
            store_latents: false,
            track_invariants: false,
        };
        (y, config)
    }

    #[test]
    fn none_strategy_is_pure_abc_wiring() {
        let (y, config) = small_run_config("none", 7);
        let priors = PriorConfig::default();
        let chain = run_sampler(&y, &config, &priors, None).unwrap();

        // Manual (a), (b), (c) with the same streams.
        let sampler = GibbsSampler::new(&y, &config, priors).unwrap();
        let (mut params, mut state) = default_init(&y, &config.restriction, config.rng_seed).unwrap();
        let mut manual_last = None;
        for iter in 0..35u64 {
            sampler.step_sv_updates(&mut state, &mut params, iter).unwrap();
            sampler.step_loadings(&state, &mut params, iter).unwrap();
            sampler.step_factors(&mut state, &params, iter).unwrap();
            manual_last = Some(params.loadings().clone());
        }
        let last_stored = chain.loadings.last().unwrap();
        let manual = manual_last.unwrap();
        for i in 0..10 {
            for j in 0..2 {
                assert_eq!(last_stored[(i, j)].to_bits(), manual[(i, j)].to_bits());
            }
        }
    }

    #[test]
    fn zero_factors_reduce_to_standalone_sv_updates() {
        let params = table_ai_params();
        let dims = ModelDims::new(10, 2, 30).unwrap();
        let (y, _) = simulate_fsv(dims, &params, 3).unwrap();
        let y = y.rows(0, 4).into_owned(); // 4 series, no factors
        let config = SamplerConfig {
            draws: 10,
            burn_in: 0,
            thin: 1,
            interweaving: "none".to_string(),
            restriction: RestrictionPattern::unrestricted(4, 0),
            rng_seed: 11,
            store_latents: false,
            track_invariants: false,
        };
        let priors = PriorConfig::default();
        let chain = run_sampler(&y, &config, &priors, None).unwrap();

        // Standalone per-series updates with the same stream protocol.
        let factory = RngFactory::new(config.rng_seed);
        for i in 0..4 {
            let obs: Vec<f64> = (0..30).map(|t| y[(i, t)]).collect();
            let mean = obs.iter().sum::<f64>() / 30.0;
            let var = obs.iter().map(|&v| (v - mean) * (v - mean)).sum::<f64>() / 30.0;
            let level = var.max(1e-12).ln();
            let mut h = vec![level; 31];
            let mut p = SvParams::new(level, 0.9, 0.2).unwrap();
            for iter in 0..10u64 {
                let view = SvSeriesView {
                    obs: &obs,
                    h: &h,
                    params: p,
                    mu_fixed_to_zero: false,
                };
                let mut r = factory.stream(Phase::SvSeries, iter, i);
                let (h_new, p_new) = sv_update(&view, &priors, &mut r).unwrap();
                h = h_new;
                p = p_new;
            }
            let stored = &chain.sv_params[9][i];
            assert_eq!(stored.mu.to_bits(), p.mu.to_bits());
            assert_eq!(stored.phi.to_bits(), p.phi.to_bits());
            assert_eq!(stored.sigma.to_bits(), p.sigma.to_bits());
        }
    }

    #[test]
    fn empty_run_and_thinning_arithmetic() {
        let (y, mut config) = small_run_config("deep", 5);
        config.draws = 0;
        config.burn_in = 2;
        let chain = run_sampler(&y, &config, &PriorConfig::default(), None).unwrap();
        assert_eq!(chain.stored(), 0);
        assert_eq!(chain.meta.config.rng_seed, 5);

        config.draws = 100;
        config.thin = 5;
        config.burn_in = 0;
        let chain = run_sampler(&y, &config, &PriorConfig::default(), None).unwrap();
        assert_eq!(chain.stored(), 20);
    }

    #[test]
    fn restricted_cells_zero_in_every_stored_draw() {
        let (y, config) = small_run_config("both", 2);
        let chain = run_sampler(&y, &config, &PriorConfig::default(), None).unwrap();
        assert!(chain.stored() > 0);
        for draw in &chain.loadings {
            assert_eq!(draw[(0, 1)], 0.0);
        }
    }

    #[test]
    fn rerun_from_meta_is_bitwise_identical() {
        let (y, config) = small_run_config("deep", 13);
        let priors = PriorConfig::default();
        let a = run_sampler(&y, &config, &priors, None).unwrap();
        let b = run_sampler(&y, &a.meta.config, &a.meta.priors, None).unwrap();
        assert_eq!(a.stored(), b.stored());
        for (la, lb) in a.loadings.iter().zip(b.loadings.iter()) {
            for (x, y) in la.iter().zip(lb.iter()) {
                assert_eq!(x.to_bits(), y.to_bits());
            }
        }
        for (sa, sb) in a.sv_params.iter().zip(b.sv_params.iter()) {
            for (x, y) in sa.iter().zip(sb.iter()) {
                assert_eq!(x.phi.to_bits(), y.phi.to_bits());
            }
        }
    }

    #[test]
    fn unit_order_exchangeability() {
        // Per-unit streams: permuting execution order leaves each unit's
        // draw bitwise unchanged.
        let (y, config) = small_run_config("none", 21);
        let sampler = GibbsSampler::new(&y, &config, PriorConfig::default()).unwrap();
        let (params, state) = default_init(&y, &config.restriction, config.rng_seed).unwrap();
        let t_len = y.ncols();
        let draw_row = |i: usize| {
            let y_i: Vec<f64> = (0..t_len).map(|t| y[(i, t)]).collect();
            let h_i: Vec<f64> = (1..=t_len).map(|t| state.h[(i, t)]).collect();
            let mut r = sampler.factory().stream(Phase::LoadingsRow, 0, i);
            sample_loadings_row(i, &y_i, &state.f, &h_i, params.pattern(), 1.0, &mut r).unwrap()
        };
        let forward: Vec<_> = (0..10).map(draw_row).collect();
        let mut backward: Vec<_> = (0..10).rev().map(draw_row).collect();
        backward.reverse();
        for (a, b) in forward.iter().zip(backward.iter()) {
            for (x, y) in a.iter().zip(b.iter()) {
                assert_eq!(x.to_bits(), y.to_bits());
            }
        }

        // Same property for the per-time-point factor draws.
        let loadings = DMatrix::from_column_slice(10, 2, &vec![0.5; 20]);
        let t_len = y.ncols();
        let draw_t = |t: usize| {
            let y_t: Vec<f64> = (0..10).map(|i| y[(i, t)]).collect();
            let h_t: Vec<f64> = (0..12).map(|i| state.h[(i, t + 1)]).collect();
            let mut r = sampler.factory().stream(Phase::FactorTime, 0, t);
            sample_factors_at_t(&y_t, &loadings, &h_t, &mut r).unwrap()
        };
        let fwd: Vec<_> = (0..t_len).map(draw_t).collect();
        let mut bwd: Vec<_> = (0..t_len).rev().map(draw_t).collect();
        bwd.reverse();
        for (a, b) in fwd.iter().zip(bwd.iter()) {
            for (x, y) in a.iter().zip(b.iter()) {
                assert_eq!(x.to_bits(), y.to_bits());
            }
        }
    }
}
