//! Interweaving boosts for the loadings-column scales (Step (b*)).
//!
//! The factor model is invariant under rescaling a loadings column by `c`
//! while dividing the matching factor path by `c`; the column scale is
//! therefore only weakly identified and mixes badly under plain full
//! conditional sampling. Each strategy here re-draws the scale anchor of
//! every column in an alternative parameterization and then maps the state
//! back, leaving the likelihood untouched:
//!
//! * `shallow` — the anchor squared is conjugate Generalized Inverse
//!   Gaussian given the rescaled factors; touches loadings and factors only.
//! * `deep` — the anchor is moved through the level of the factor
//!   log-variance path via an independence Metropolis-Hastings step; also
//!   shifts the path, which is what gives the largest mixing gains.
//! * `both` — daisy-chains shallow then deep.
//! * `none` — no-op, the plain full conditional sampler.
//!
//! Strategies are trait objects registered by name; the sampler looks them
//! up at runtime from its configuration.

use std::collections::BTreeMap;
use std::sync::{Arc, LazyLock};

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::FsvError;
use crate::gig::{sample_gig, GigParams};
use crate::model::{FsvParams, LatentState, PatternKind, PriorConfig};
use crate::rng::{Phase, RngFactory};
use crate::Result;

/// Snapshot of one loadings column in the transformed parameterization.
#[derive(Debug, Clone)]
pub struct ColumnView {
    /// Column index.
    pub j: usize,
    /// Row of the scale anchor (diagonal, or max-absolute free cell under
    /// an unrestricted pattern / when the diagonal is restricted).
    pub anchor_row: usize,
    /// Current anchor value; never zero.
    pub lambda_jj_old: f64,
    /// Free loadings divided by the anchor, anchor excluded (length `k_j`).
    pub lambda_star: Vec<f64>,
    /// Current factor path (length `T`).
    pub f_old: Vec<f64>,
    /// Current factor log-variance path including the initial state
    /// (length `T + 1`).
    pub h_old: Vec<f64>,
    /// AR(1) parameters of the factor log-variance series.
    pub phi: f64,
    pub sigma: f64,
}

impl ColumnView {
    /// Gathers a column view from the current state. Returns an error when
    /// no usable (nonzero) anchor exists.
    pub fn gather(state: &LatentState, params: &FsvParams, j: usize) -> Result<Self> {
        let m = params.m();
        let pattern = params.pattern();
        let free_rows = pattern.free_rows(j);
        if free_rows.is_empty() {
            return Err(FsvError::SignIdentification {
                column: j,
                details: "column has no free cells to rescale".into(),
            });
        }
        let lam = params.loadings();
        let diagonal_usable = pattern.kind() != PatternKind::Unrestricted
            && j < m
            && pattern.is_free(j, j)
            && lam[(j, j)] != 0.0;
        let anchor_row = if diagonal_usable {
            j
        } else {
            // Max-absolute free cell, ties broken by lowest row index.
            let mut best = free_rows[0];
            for &i in &free_rows {
                if lam[(i, j)].abs() > lam[(best, j)].abs() {
                    best = i;
                }
            }
            best
        };
        let anchor = lam[(anchor_row, j)];
        if anchor == 0.0 {
            return Err(FsvError::SignIdentification {
                column: j,
                details: "all free cells are zero; no scale anchor available".into(),
            });
        }
        let lambda_star: Vec<f64> = free_rows
            .iter()
            .filter(|&&i| i != anchor_row)
            .map(|&i| lam[(i, j)] / anchor)
            .collect();
        let t_len = state.f.ncols();
        let f_old: Vec<f64> = (0..t_len).map(|t| state.f[(j, t)]).collect();
        let h_old: Vec<f64> = (0..=t_len).map(|t| state.h[(m + j, t)]).collect();
        let sv = params.sv()[m + j];
        Ok(Self {
            j,
            anchor_row,
            lambda_jj_old: anchor,
            lambda_star,
            f_old,
            h_old,
            phi: sv.phi,
            sigma: sv.sigma,
        })
    }

    /// Number of transformed free loadings.
    pub fn k(&self) -> usize {
        self.lambda_star.len()
    }
}

/// GIG parameters of the conditional posterior of the squared anchor in the
/// shallow parameterization.
pub fn shallow_gig_params(view: &ColumnView, loading_var: f64) -> Result<GigParams> {
    let t_len = view.f_old.len();
    let k = view.k() as f64;
    let p = (1.0 + k - t_len as f64) / 2.0;
    let ssq: f64 = view.lambda_star.iter().map(|l| l * l).sum();
    let a = (1.0 + ssq) / loading_var;
    let scale2 = view.lambda_jj_old * view.lambda_jj_old;
    // Sum over t = 1..T; the initial state does not enter.
    let b: f64 = (0..t_len)
        .map(|t| scale2 * view.f_old[t] * view.f_old[t] / view.h_old[t + 1].exp())
        .sum();
    GigParams::new(p, a, b).map_err(|e| match e {
        FsvError::GigDomain { p, a, b, .. } => FsvError::GigDomain {
            p,
            a,
            b,
            context: format!(" while rescaling loadings column {}", view.j),
        },
        other => other,
    })
}

/// Shallow redraw: samples the squared anchor from its GIG conditional and
/// returns the new anchor carrying the old sign.
pub fn shallow_redraw<R: Rng + ?Sized>(
    view: &ColumnView,
    loading_var: f64,
    rng: &mut R,
) -> Result<f64> {
    let gig = shallow_gig_params(view, loading_var)?;
    let lambda_sq = sample_gig(gig, rng)?;
    Ok(view.lambda_jj_old.signum() * lambda_sq.sqrt())
}

/// Moments of the Gaussian independence proposal for the transformed level:
/// mean `[sum_{t=1}^{T-1} h*_t + (h*_T - phi h*_0)/(1 - phi)] / (T + 1/B0)`
/// and variance `[sigma^2/(1-phi)^2] / (T + 1/B0)`.
pub fn deep_proposal_moments(h_star: &[f64], phi: f64, sigma: f64, aux_var: f64) -> (f64, f64) {
    let t_len = h_star.len() - 1;
    let denom = t_len as f64 + 1.0 / aux_var;
    let interior: f64 = h_star[1..t_len].iter().sum();
    let mean = (interior + (h_star[t_len] - phi * h_star[0]) / (1.0 - phi)) / denom;
    let var = sigma * sigma / ((1.0 - phi) * (1.0 - phi)) / denom;
    (mean, var)
}

/// Log acceptance ratio of the deep-interweaving level move: target terms
/// for the transformed loadings, the initial state, and the level prior,
/// corrected by the auxiliary proposal prior.
pub fn deep_acceptance_log_ratio(
    mu_prop: f64,
    mu_old: f64,
    view: &ColumnView,
    loading_var: f64,
    aux_var: f64,
) -> f64 {
    let k = view.k() as f64;
    let ssq: f64 = view.lambda_star.iter().map(|l| l * l).sum();
    let h0_star = view.h_old[0] + (view.lambda_jj_old * view.lambda_jj_old).ln();
    let stat_var = view.sigma * view.sigma / (1.0 - view.phi * view.phi);
    let aux_sd2 = aux_var * view.sigma * view.sigma / ((1.0 - view.phi) * (1.0 - view.phi));

    // p(lambda*_j | mu) = N(0, B e^{-mu} I_k)
    let lp_star = |mu: f64| 0.5 * k * mu - mu.exp() * ssq / (2.0 * loading_var);
    // p(h*_0 | mu, phi, sigma) = N(mu, sigma^2/(1-phi^2))
    let lp_h0 = |mu: f64| -(h0_star - mu) * (h0_star - mu) / (2.0 * stat_var);
    // p(mu) propto exp(mu/2 - e^mu / (2 B))
    let lp_mu = |mu: f64| 0.5 * mu - mu.exp() / (2.0 * loading_var);
    // p_aux(mu | sigma, phi) = N(0, B0 sigma^2/(1-phi)^2)
    let lp_aux = |mu: f64| -mu * mu / (2.0 * aux_sd2);

    lp_star(mu_prop) - lp_star(mu_old) + lp_h0(mu_prop) - lp_h0(mu_old) + lp_mu(mu_prop)
        - lp_mu(mu_old)
        + lp_aux(mu_old)
        - lp_aux(mu_prop)
}

/// Deep redraw: transforms the path level, proposes a new level from the
/// auxiliary conjugate posterior, and accepts with the exact ratio. Returns
/// the new anchor (old one when rejected) and the acceptance flag.
pub fn deep_redraw<R: Rng + ?Sized>(
    view: &ColumnView,
    loading_var: f64,
    aux_var: f64,
    rng: &mut R,
) -> Result<(f64, bool)> {
    let mu_old = (view.lambda_jj_old * view.lambda_jj_old).ln();
    if !mu_old.is_finite() {
        return Err(FsvError::SignIdentification {
            column: view.j,
            details: format!("anchor {} has no finite log square", view.lambda_jj_old),
        });
    }
    let h_star: Vec<f64> = view.h_old.iter().map(|&h| h + mu_old).collect();
    let (mean, var) = deep_proposal_moments(&h_star, view.phi, view.sigma, aux_var);
    let mu_prop = mean + var.sqrt() * rng.sample::<f64, _>(StandardNormal);
    let log_ratio = deep_acceptance_log_ratio(mu_prop, mu_old, view, loading_var, aux_var);
    let u: f64 = rng.random();
    if u.ln() < log_ratio {
        Ok((view.lambda_jj_old.signum() * (0.5 * mu_prop).exp(), true))
    } else {
        Ok((view.lambda_jj_old, false))
    }
}

/// Rescales column `j` after an anchor redraw: free loadings scale by
/// `new/old`, the factor path by `old/new`, and (deep only) the factor
/// log-variance path shifts by `2 log|old/new|`. Restricted cells stay
/// exactly zero because only free cells are touched.
pub fn apply_rescale(
    state: &mut LatentState,
    params: &mut FsvParams,
    j: usize,
    lambda_old: f64,
    lambda_new: f64,
    deep: bool,
) -> Result<()> {
    if lambda_new == 0.0 {
        return Err(FsvError::invalid(format!(
            "rescale of column {j} received a zero anchor"
        )));
    }
    let up = lambda_new / lambda_old;
    let down = lambda_old / lambda_new;
    params.scale_column(j, up);
    let m = params.m();
    let t_len = state.f.ncols();
    for t in 0..t_len {
        state.f[(j, t)] *= down;
    }
    if deep {
        let shift = 2.0 * down.abs().ln();
        for t in 0..=t_len {
            state.h[(m + j, t)] += shift;
        }
    }
    Ok(())
}

/// Per-run interweaving statistics carried in the chain metadata.
#[derive(Debug, Clone, Default)]
pub struct BoostStats {
    pub deep_proposals: u64,
    pub deep_accepts: u64,
    /// Max entrywise change of the conditional mean Lambda f across all
    /// rescales (only tracked when invariant tracking is on).
    pub max_mean_drift: f64,
    /// Max change of f^2/exp(h) across deep rescales (tracked likewise).
    pub max_ratio_drift: f64,
}

/// Mutable sampler state handed to a strategy for one Step (b*) pass.
pub struct BoostContext<'a> {
    pub state: &'a mut LatentState,
    pub params: &'a mut FsvParams,
    pub priors: &'a PriorConfig,
    pub rng_factory: &'a RngFactory,
    pub iteration: u64,
    pub track_invariants: bool,
    pub stats: &'a mut BoostStats,
}

/// An interchangeable Step (b*) algorithm.
pub trait BoostStrategy: Send + Sync {
    /// Registry key, also what configs and the CLI use to select it.
    fn name(&self) -> &'static str;

    /// Applies the boost to every loadings column in order.
    fn apply(&self, ctx: &mut BoostContext<'_>) -> Result<()>;
}

fn conditional_mean(params: &FsvParams, state: &LatentState) -> nalgebra::DMatrix<f64> {
    params.loadings() * &state.f
}

fn track_mean_drift(ctx: &mut BoostContext<'_>, before: &nalgebra::DMatrix<f64>) {
    let after = conditional_mean(ctx.params, ctx.state);
    let drift = (&after - before).abs().max();
    if drift > ctx.stats.max_mean_drift {
        ctx.stats.max_mean_drift = drift;
    }
}

struct NoBoost;

impl BoostStrategy for NoBoost {
    fn name(&self) -> &'static str {
        "none"
    }

    fn apply(&self, _ctx: &mut BoostContext<'_>) -> Result<()> {
        Ok(())
    }
}

struct ShallowBoost;

impl BoostStrategy for ShallowBoost {
    fn name(&self) -> &'static str {
        "shallow"
    }

    fn apply(&self, ctx: &mut BoostContext<'_>) -> Result<()> {
        for j in 0..ctx.params.r() {
            if ctx.params.pattern().free_rows(j).is_empty() {
                continue;
            }
            let before = ctx
                .track_invariants
                .then(|| conditional_mean(ctx.params, ctx.state));
            let view = ColumnView::gather(ctx.state, ctx.params, j)?;
            let mut rng = ctx
                .rng_factory
                .stream(Phase::InterweaveShallow, ctx.iteration, j);
            let lambda_new = shallow_redraw(&view, ctx.priors.loading_var, &mut rng)?;
            apply_rescale(
                ctx.state,
                ctx.params,
                j,
                view.lambda_jj_old,
                lambda_new,
                false,
            )?;
            if let Some(b) = before {
                track_mean_drift(ctx, &b);
            }
        }
        Ok(())
    }
}

struct DeepBoost;

impl BoostStrategy for DeepBoost {
    fn name(&self) -> &'static str {
        "deep"
    }

    fn apply(&self, ctx: &mut BoostContext<'_>) -> Result<()> {
        let m = ctx.params.m();
        for j in 0..ctx.params.r() {
            if ctx.params.pattern().free_rows(j).is_empty() {
                continue;
            }
            let before = ctx
                .track_invariants
                .then(|| conditional_mean(ctx.params, ctx.state));
            let ratio_before: Option<Vec<f64>> = ctx.track_invariants.then(|| {
                (0..ctx.state.f.ncols())
                    .map(|t| {
                        let f = ctx.state.f[(j, t)];
                        f * f / ctx.state.h[(m + j, t + 1)].exp()
                    })
                    .collect()
            });
            let view = ColumnView::gather(ctx.state, ctx.params, j)?;
            let mut rng = ctx
                .rng_factory
                .stream(Phase::InterweaveDeep, ctx.iteration, j);
            let (lambda_new, accepted) =
                deep_redraw(&view, ctx.priors.loading_var, ctx.priors.aux_level_var, &mut rng)?;
            ctx.stats.deep_proposals += 1;
            if accepted {
                ctx.stats.deep_accepts += 1;
            }
            apply_rescale(
                ctx.state,
                ctx.params,
                j,
                view.lambda_jj_old,
                lambda_new,
                true,
            )?;
            if let Some(b) = before {
                track_mean_drift(ctx, &b);
            }
            if let Some(rb) = ratio_before {
                for (t, &r0) in rb.iter().enumerate() {
                    let f = ctx.state.f[(j, t)];
                    let r1 = f * f / ctx.state.h[(m + j, t + 1)].exp();
                    let d = (r1 - r0).abs();
                    if d > ctx.stats.max_ratio_drift {
                        ctx.stats.max_ratio_drift = d;
                    }
                }
            }
        }
        Ok(())
    }
}

struct BothBoost;

impl BoostStrategy for BothBoost {
    fn name(&self) -> &'static str {
        "both"
    }

    fn apply(&self, ctx: &mut BoostContext<'_>) -> Result<()> {
        ShallowBoost.apply(ctx)?;
        DeepBoost.apply(ctx)
    }
}

static REGISTRY: LazyLock<BTreeMap<&'static str, Arc<dyn BoostStrategy>>> = LazyLock::new(|| {
    let strategies: [Arc<dyn BoostStrategy>; 4] = [
        Arc::new(NoBoost),
        Arc::new(ShallowBoost),
        Arc::new(DeepBoost),
        Arc::new(BothBoost),
    ];
    strategies.into_iter().map(|s| (s.name(), s)).collect()
});

/// Looks up a registered strategy by name.
pub fn strategy(name: &str) -> Result<Arc<dyn BoostStrategy>> {
    REGISTRY.get(name).cloned().ok_or_else(|| FsvError::UnknownStrategy {
        name: name.to_string(),
        available: strategy_names().join(", "),
    })
}

/// All registered strategy names, sorted.
pub fn strategy_names() -> Vec<&'static str> {
    REGISTRY.keys().copied().collect()
}
