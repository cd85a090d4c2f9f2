//! Mixing diagnostics, sign identification, and posterior summaries.

use nalgebra::DMatrix;

use crate::error::FsvError;
use crate::gibbs::ChainOutput;
use crate::Result;

/// Sample autocorrelation function with the standard biased normalization;
/// `acf[0] = 1`.
pub fn acf(trace: &[f64], max_lag: usize) -> Result<Vec<f64>> {
    let k = trace.len();
    if k < 2 {
        return Err(FsvError::invalid("trace needs at least two draws"));
    }
    if max_lag >= k {
        return Err(FsvError::invalid(format!(
            "max_lag {max_lag} must be below the trace length {k}"
        )));
    }
    if trace.iter().any(|v| !v.is_finite()) {
        return Err(FsvError::invalid("trace contains non-finite draws"));
    }
    let mean = trace.iter().sum::<f64>() / k as f64;
    let c0: f64 = trace.iter().map(|&x| (x - mean) * (x - mean)).sum();
    if c0 == 0.0 {
        return Err(FsvError::ConstantTrace);
    }
    let mut out = Vec::with_capacity(max_lag + 1);
    out.push(1.0);
    for lag in 1..=max_lag {
        let c: f64 = (0..k - lag)
            .map(|t| (trace[t] - mean) * (trace[t + lag] - mean))
            .sum();
        out.push(c / c0);
    }
    Ok(out)
}

/// How the inefficiency factor (integrated autocorrelation time) is
/// estimated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum IfEstimator {
    /// Spectral density at zero from an AR fit with AIC order selection.
    #[default]
    ArSpectral,
    /// Initial-positive-sequence truncation of the autocorrelation sum.
    InitialPositiveSequence,
}

/// Inefficiency factor with the default AR-spectral estimator.
pub fn inefficiency_factor(trace: &[f64]) -> Result<f64> {
    inefficiency_factor_with(trace, IfEstimator::ArSpectral)
}

/// Inefficiency factor: MCMC draws needed per effectively independent draw.
pub fn inefficiency_factor_with(trace: &[f64], estimator: IfEstimator) -> Result<f64> {
    let k = trace.len();
    if k < 100 {
        return Err(FsvError::invalid(format!(
            "inefficiency factor needs at least 100 draws, got {k}"
        )));
    }
    if trace.iter().any(|v| !v.is_finite()) {
        return Err(FsvError::invalid("trace contains non-finite draws"));
    }
    let mean = trace.iter().sum::<f64>() / k as f64;
    let c0 = trace.iter().map(|&x| (x - mean) * (x - mean)).sum::<f64>() / k as f64;
    if c0 == 0.0 {
        return Err(FsvError::ConstantTrace);
    }
    match estimator {
        IfEstimator::ArSpectral => ar_spectral_if(trace, mean, c0),
        IfEstimator::InitialPositiveSequence => ips_if(trace, mean, c0),
    }
}

/// Fits AR(p) by Levinson-Durbin for p up to ~10 log10(K), picks the AIC
/// minimizer, and returns spec0 / variance with
/// spec0 = innovation_var / (1 - sum(coefficients))^2.
fn ar_spectral_if(trace: &[f64], mean: f64, c0: f64) -> Result<f64> {
    let k = trace.len();
    let order_max = ((10.0 * (k as f64).log10()) as usize).min(k - 1);
    // Biased autocovariances up to order_max.
    let mut cov = Vec::with_capacity(order_max + 1);
    cov.push(c0);
    for lag in 1..=order_max {
        let c: f64 = (0..k - lag)
            .map(|t| (trace[t] - mean) * (trace[t + lag] - mean))
            .sum();
        cov.push(c / k as f64);
    }

    // Levinson-Durbin recursion tracking the AIC-best order.
    let mut coefs: Vec<f64> = Vec::new();
    let mut v = c0;
    let mut best = (k as f64 * v.ln(), 0.0, v); // (aic, sum of coefs, v)
    for p in 1..=order_max {
        let mut acc = cov[p];
        for (i, &a) in coefs.iter().enumerate() {
            acc -= a * cov[p - 1 - i];
        }
        let refl = acc / v;
        let mut next = Vec::with_capacity(p);
        for i in 0..p - 1 {
            next.push(coefs[i] - refl * coefs[p - 2 - i]);
        }
        next.push(refl);
        coefs = next;
        v *= 1.0 - refl * refl;
        if !(v > 0.0) {
            break;
        }
        let aic = k as f64 * v.ln() + 2.0 * (p as f64 + 1.0);
        if aic < best.0 {
            best = (aic, coefs.iter().sum::<f64>(), v);
        }
    }
    let (_, coef_sum, v_best) = best;
    let denom = (1.0 - coef_sum) * (1.0 - coef_sum);
    if denom == 0.0 {
        return Err(FsvError::invalid(
            "AR fit is at the unit root; inefficiency factor diverges",
        ));
    }
    Ok((v_best / denom / c0).max(0.0))
}

/// Sums autocorrelations in adjacent pairs until a pair sum turns negative.
fn ips_if(trace: &[f64], mean: f64, c0: f64) -> Result<f64> {
    let k = trace.len();
    let rho = |lag: usize| -> f64 {
        if lag >= k {
            return 0.0;
        }
        (0..k - lag)
            .map(|t| (trace[t] - mean) * (trace[t + lag] - mean))
            .sum::<f64>()
            / (k as f64 * c0)
    };
    // Gamma_m = rho(2m) + rho(2m+1); IF = -1 + 2 sum over the initial
    // positive sequence (the m = 0 term contributes 1 + rho(1)).
    let mut total = 0.0;
    let mut m = 0usize;
    loop {
        let g = rho(2 * m) + rho(2 * m + 1);
        if g <= 0.0 || 2 * m >= k - 1 {
            break;
        }
        total += g;
        m += 1;
    }
    Ok((2.0 * total - 1.0).max(0.0))
}

/// Per-column anchors chosen by the maximin rule: the row whose smallest
/// absolute draw is largest. Every draw's column is multiplied by the sign
/// of its anchor entry, making the anchor's aligned draws nonnegative.
pub fn sign_identify_maximin(
    draws: &[DMatrix<f64>],
) -> Result<(Vec<DMatrix<f64>>, Vec<usize>)> {
    let (m, r) = chain_shape(draws)?;
    let mut anchors = Vec::with_capacity(r);
    for j in 0..r {
        let mut best_row = 0;
        let mut best_val = f64::NEG_INFINITY;
        let mut any_nonzero = false;
        for i in 0..m {
            let min_abs = draws
                .iter()
                .map(|d| d[(i, j)].abs())
                .fold(f64::INFINITY, f64::min);
            if min_abs > 0.0 {
                any_nonzero = true;
            }
            if min_abs > best_val {
                best_val = min_abs;
                best_row = i;
            }
        }
        if !any_nonzero && draws.iter().all(|d| (0..m).all(|i| d[(i, j)] == 0.0)) {
            return Err(FsvError::SignIdentification {
                column: j,
                details: "all draws are zero".into(),
            });
        }
        anchors.push(best_row);
    }
    Ok((align_columns(draws, &anchors), anchors))
}

/// Sign identification anchored at the diagonal cells (leading series).
pub fn sign_identify_diagonal(draws: &[DMatrix<f64>]) -> Result<Vec<DMatrix<f64>>> {
    let (m, r) = chain_shape(draws)?;
    if r > m {
        return Err(FsvError::invalid("diagonal anchoring needs r <= m"));
    }
    for j in 0..r {
        if let Some(k) = draws.iter().position(|d| d[(j, j)] == 0.0) {
            return Err(FsvError::SignIdentification {
                column: j,
                details: format!("diagonal draw {k} is exactly zero"),
            });
        }
    }
    let anchors: Vec<usize> = (0..r).collect();
    Ok(align_columns(draws, &anchors))
}

fn chain_shape(draws: &[DMatrix<f64>]) -> Result<(usize, usize)> {
    let first = draws
        .first()
        .ok_or_else(|| FsvError::EmptyChain("no loadings draws".into()))?;
    Ok((first.nrows(), first.ncols()))
}

fn align_columns(draws: &[DMatrix<f64>], anchors: &[usize]) -> Vec<DMatrix<f64>> {
    draws
        .iter()
        .map(|d| {
            let mut out = d.clone();
            for (j, &anchor) in anchors.iter().enumerate() {
                if d[(anchor, j)] < 0.0 {
                    for i in 0..d.nrows() {
                        out[(i, j)] = -out[(i, j)];
                    }
                }
            }
            out
        })
        .collect()
}

/// Sorts columns by the maximum of their elementwise posterior medians,
/// descending. Returns the permutation (output column `c` takes input
/// column `perm[c]`) and the permuted loadings draws; apply the same
/// permutation to factor and factor-volatility blocks with
/// [`permute_rows`].
pub fn reorder_columns_by_median(
    draws: &[DMatrix<f64>],
) -> Result<(Vec<usize>, Vec<DMatrix<f64>>)> {
    let (m, r) = chain_shape(draws)?;
    let mut keys = Vec::with_capacity(r);
    for j in 0..r {
        let mut best = f64::NEG_INFINITY;
        for i in 0..m {
            let mut cell: Vec<f64> = draws.iter().map(|d| d[(i, j)]).collect();
            cell.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let med = quantile_sorted(&cell, 0.5);
            if med > best {
                best = med;
            }
        }
        keys.push(best);
    }
    let mut perm: Vec<usize> = (0..r).collect();
    perm.sort_by(|&a, &b| keys[b].partial_cmp(&keys[a]).unwrap().then(a.cmp(&b)));
    let permuted = draws
        .iter()
        .map(|d| {
            let mut out = d.clone();
            for (c, &src) in perm.iter().enumerate() {
                for i in 0..m {
                    out[(i, c)] = d[(i, src)];
                }
            }
            out
        })
        .collect();
    Ok((perm, permuted))
}

/// Applies a column permutation to row-indexed blocks (factor paths, factor
/// log-variances): output row `c` takes input row `perm[c]`.
pub fn permute_rows(mats: &[DMatrix<f64>], perm: &[usize]) -> Vec<DMatrix<f64>> {
    mats.iter()
        .map(|mat| {
            let mut out = mat.clone();
            for (c, &src) in perm.iter().enumerate() {
                for t in 0..mat.ncols() {
                    out[(c, t)] = mat[(src, t)];
                }
            }
            out
        })
        .collect()
}

/// Type-7 quantile (linear interpolation of order statistics) of a sorted
/// slice.
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let h = (n as f64 - 1.0) * p;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Posterior summary of one scalar parameter.
#[derive(Debug, Clone)]
pub struct ParamSummary {
    pub name: String,
    pub mean: f64,
    pub sd: f64,
    pub q05: f64,
    pub q50: f64,
    pub q95: f64,
    /// `None` when the trace is constant or too short for the estimator.
    pub inefficiency: Option<f64>,
}

/// Summarizes one trace; inefficiency is reported as unavailable for
/// constant or too-short traces.
pub fn summarize_trace(name: &str, values: &[f64], estimator: IfEstimator) -> Result<ParamSummary> {
    if values.is_empty() {
        return Err(FsvError::EmptyChain(format!("no draws for {name}")));
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|&x| (x - mean) * (x - mean)).sum::<f64>() / n;
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    Ok(ParamSummary {
        name: name.to_string(),
        mean,
        sd: var.sqrt(),
        q05: quantile_sorted(&sorted, 0.05),
        q50: quantile_sorted(&sorted, 0.50),
        q95: quantile_sorted(&sorted, 0.95),
        inefficiency: inefficiency_factor_with(values, estimator).ok(),
    })
}

/// Per-parameter posterior summaries of a chain: every loadings cell
/// (dense layout, restricted cells included) followed by the SV parameter
/// triples. Names use 1-based indices.
pub fn posterior_summary(chain: &ChainOutput, estimator: IfEstimator) -> Result<Vec<ParamSummary>> {
    if chain.stored() == 0 {
        return Err(FsvError::EmptyChain("chain holds no draws".into()));
    }
    let (m, r) = (chain.dims.m, chain.dims.r);
    let mut out = Vec::new();
    for i in 0..m {
        for j in 0..r {
            let trace = chain.loadings_trace(i, j);
            out.push(summarize_trace(
                &format!("lambda_{}_{}", i + 1, j + 1),
                &trace,
                estimator,
            )?);
        }
    }
    for s in 0..m + r {
        out.push(summarize_trace(
            &format!("mu_{}", s + 1),
            &chain.mu_trace(s),
            estimator,
        )?);
        out.push(summarize_trace(
            &format!("phi_{}", s + 1),
            &chain.phi_trace(s),
            estimator,
        )?);
        out.push(summarize_trace(
            &format!("sigma_{}", s + 1),
            &chain.sigma_trace(s),
            estimator,
        )?);
    }
    Ok(out)
}
