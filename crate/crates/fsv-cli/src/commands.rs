//! Subcommand implementations.

use std::path::{Path, PathBuf};

use nalgebra::DMatrix;

use fsv::diag::{
    inefficiency_factor_with, reorder_columns_by_median, sign_identify_diagonal,
    sign_identify_maximin, summarize_trace, IfEstimator, ParamSummary,
};
use fsv::gibbs::run_sampler;
use fsv::model::{simulate_fsv, table_ai_params, FsvParams, ModelDims};

use crate::config::{fmt_f64, RunConfig};
use crate::error::CliError;
use crate::io::{
    load_returns_csv, read_params_file, write_draws, write_matrix_csv, write_params_file,
    DrawStore,
};

pub fn cmd_simulate(
    table_ai: bool,
    params_file: Option<&Path>,
    t_len: usize,
    seed: u64,
    out: &Path,
) -> Result<(), CliError> {
    let params: FsvParams = match (table_ai, params_file) {
        (true, None) => table_ai_params(),
        (false, Some(path)) => read_params_file(path)?,
        (true, Some(_)) => {
            return Err(CliError::Config(
                "pass either --table-ai or --params, not both".into(),
            ))
        }
        (false, None) => {
            return Err(CliError::Config(
                "simulate needs --table-ai or --params FILE".into(),
            ))
        }
    };
    let dims = ModelDims::new(params.m(), params.r(), t_len).map_err(CliError::Run)?;
    let (returns, truth) = simulate_fsv(dims, &params, seed)?;
    std::fs::create_dir_all(out)
        .map_err(|e| CliError::Io(format!("cannot create {}: {e}", out.display())))?;

    let series_headers: Vec<String> = (1..=dims.m).map(|i| format!("series_{i}")).collect();
    write_matrix_csv(&out.join("returns.csv"), &series_headers, &returns)?;
    let h_headers: Vec<String> = (1..=dims.n_series()).map(|i| format!("h_{i}")).collect();
    write_matrix_csv(&out.join("truth_h.csv"), &h_headers, &truth.h)?;
    let f_headers: Vec<String> = (1..=dims.r).map(|j| format!("f_{j}")).collect();
    write_matrix_csv(&out.join("truth_f.csv"), &f_headers, &truth.f)?;
    write_params_file(&out.join("params.txt"), &params)?;
    println!(
        "simulated {} series x {} time points (seed {seed}) into {}",
        dims.m,
        t_len,
        out.display()
    );
    Ok(())
}

pub fn cmd_fit(config: &RunConfig) -> Result<(), CliError> {
    if !config.input.exists() {
        return Err(CliError::Config(format!(
            "input {} does not exist",
            config.input.display()
        )));
    }
    let (data, _labels) = load_returns_csv(&config.input, config.demean)?;
    let sampler_config = config.sampler_config(data.nrows())?;
    let start = std::time::Instant::now();
    let chain = run_sampler(&data, &sampler_config, &config.priors, None)?;
    let elapsed = start.elapsed();
    let manifest = write_draws(&chain, config, &config.out_dir)?;
    println!(
        "kept {} draws ({} iterations, interweaving = {}) in {:.1?}",
        chain.stored(),
        config.burn_in + config.draws,
        config.interweaving,
        elapsed
    );
    if chain.meta.boost.deep_proposals > 0 {
        println!(
            "deep interweaving acceptance rate: {:.3}",
            chain.meta.boost.deep_accepts as f64 / chain.meta.boost.deep_proposals as f64
        );
    }
    if config.track_invariants {
        println!(
            "max conditional-mean drift: {:.3e}; max variance-ratio drift: {:.3e}",
            chain.meta.boost.max_mean_drift, chain.meta.boost.max_ratio_drift
        );
    }
    println!("manifest: {}", manifest.display());
    Ok(())
}

pub fn parse_estimator(name: &str) -> Result<IfEstimator, CliError> {
    match name {
        "ar-spectral" => Ok(IfEstimator::ArSpectral),
        "initial-positive" => Ok(IfEstimator::InitialPositiveSequence),
        other => Err(CliError::Config(format!(
            "unknown estimator {other:?}; use ar-spectral or initial-positive"
        ))),
    }
}

/// Inefficiency factors per loadings cell; restricted cells are `None`.
pub fn loadings_if_table(
    store: &DrawStore,
    estimator: IfEstimator,
) -> Result<Vec<Vec<Option<f64>>>, CliError> {
    let mut table = vec![vec![None; store.r]; store.m];
    for i in 0..store.m {
        for j in 0..store.r {
            if !store.pattern.is_free(i, j) {
                continue;
            }
            let trace: Vec<f64> = store.loadings.iter().map(|l| l[(i, j)]).collect();
            table[i][j] = inefficiency_factor_with(&trace, estimator).ok();
        }
    }
    Ok(table)
}

pub fn cmd_diag(dir: &Path, estimator_name: &str, max_lag: usize) -> Result<(), CliError> {
    let estimator = parse_estimator(estimator_name)?;
    let store = DrawStore::load(dir)?;
    if store.stored() == 0 {
        return Err(CliError::Config("draws directory holds no draws".into()));
    }
    let table = loadings_if_table(&store, estimator)?;

    println!("inefficiency factors, factor loadings (estimator: {estimator_name})");
    print!("{:>8}", "series");
    for j in 1..=store.r {
        print!("{j:>12}");
    }
    println!();
    let mut csv_rows: Vec<Vec<String>> = Vec::new();
    for (i, row) in table.iter().enumerate() {
        print!("{:>8}", i + 1);
        let mut csv_row = vec![(i + 1).to_string()];
        for cell in row {
            match cell {
                Some(v) => {
                    print!("{v:>12.2}");
                    csv_row.push(format!("{v:.6}"));
                }
                None => {
                    print!("{:>12}", "");
                    csv_row.push(String::new());
                }
            }
        }
        println!();
        csv_rows.push(csv_row);
    }
    write_string_csv(
        &dir.join("if_loadings.csv"),
        &std::iter::once("series".to_string())
            .chain((1..=store.r).map(|j| format!("factor_{j}")))
            .collect::<Vec<_>>(),
        &csv_rows,
    )?;

    println!();
    println!("inefficiency factors, final-time latent states");
    let mut names = Vec::new();
    let mut values = Vec::new();
    for j in 0..store.r {
        let trace: Vec<f64> = store.final_factors.iter().map(|f| f[j]).collect();
        names.push(format!("f_{}_t{}", j + 1, store.t_len));
        values.push(inefficiency_factor_with(&trace, estimator).ok());
    }
    for s in 0..store.m + store.r {
        let trace: Vec<f64> = store.final_h.iter().map(|h| h[s]).collect();
        names.push(format!("h_{}_t{}", s + 1, store.t_len));
        values.push(inefficiency_factor_with(&trace, estimator).ok());
    }
    for (n, v) in names.iter().zip(values.iter()) {
        match v {
            Some(v) => println!("{n:>14} {v:>12.2}"),
            None => println!("{n:>14} {:>12}", ""),
        }
    }
    let rows: Vec<Vec<String>> = names
        .iter()
        .zip(values.iter())
        .map(|(n, v)| {
            vec![
                n.clone(),
                v.map(|x| format!("{x:.6}")).unwrap_or_default(),
            ]
        })
        .collect();
    write_string_csv(
        &dir.join("if_final_states.csv"),
        &["state".to_string(), "inefficiency".to_string()],
        &rows,
    )?;

    // Autocorrelations of the free loadings cells, plot-ready.
    let lag_cap = max_lag.min(store.stored().saturating_sub(1));
    let mut headers = vec!["lag".to_string()];
    let mut cols: Vec<Vec<f64>> = Vec::new();
    for i in 0..store.m {
        for j in 0..store.r {
            if !store.pattern.is_free(i, j) {
                continue;
            }
            let trace: Vec<f64> = store.loadings.iter().map(|l| l[(i, j)]).collect();
            if let Ok(a) = fsv::diag::acf(&trace, lag_cap) {
                headers.push(format!("lambda_{}_{}", i + 1, j + 1));
                cols.push(a);
            }
        }
    }
    let rows: Vec<Vec<String>> = (0..=lag_cap)
        .map(|l| {
            std::iter::once(l.to_string())
                .chain(cols.iter().map(|c| format!("{:.8}", c[l])))
                .collect()
        })
        .collect();
    write_string_csv(&dir.join("acf_loadings.csv"), &headers, &rows)?;
    println!();
    println!(
        "wrote if_loadings.csv, if_final_states.csv, acf_loadings.csv (lags 0..{lag_cap}) to {}",
        dir.display()
    );
    Ok(())
}

fn write_string_csv(
    path: &Path,
    headers: &[String],
    rows: &[Vec<String>],
) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path)
        .map_err(|e| CliError::Io(format!("cannot create {}: {e}", path.display())))?;
    w.write_record(headers)
        .map_err(|e| CliError::Io(e.to_string()))?;
    for row in rows {
        w.write_record(row).map_err(|e| CliError::Io(e.to_string()))?;
    }
    w.flush().map_err(|e| CliError::Io(e.to_string()))?;
    Ok(())
}

pub fn cmd_summarize(
    dir: &Path,
    sign_method: &str,
    reorder: bool,
    estimator_name: &str,
) -> Result<(), CliError> {
    let estimator = parse_estimator(estimator_name)?;
    let store = DrawStore::load(dir)?;
    if store.stored() == 0 {
        return Err(CliError::Config("draws directory holds no draws".into()));
    }

    let mut loadings: Vec<DMatrix<f64>> = store.loadings.clone();
    let mut final_factors = store.final_factors.clone();
    let mut final_h = store.final_h.clone();

    if reorder {
        let (perm, permuted) = reorder_columns_by_median(&loadings)?;
        loadings = permuted;
        for f in final_factors.iter_mut() {
            let old = f.clone();
            for (c, &src) in perm.iter().enumerate() {
                f[c] = old[src];
            }
        }
        for h in final_h.iter_mut() {
            let old = h.clone();
            for (c, &src) in perm.iter().enumerate() {
                h[store.m + c] = old[store.m + src];
            }
        }
        let shown: Vec<usize> = perm.iter().map(|p| p + 1).collect();
        println!("column order by max median loading: {shown:?}");
    }

    match sign_method {
        "maximin" => {
            let (aligned, anchors) = sign_identify_maximin(&loadings)?;
            loadings = aligned;
            let shown: Vec<usize> = anchors.iter().map(|a| a + 1).collect();
            println!("sign anchors (maximin rule), row per factor: {shown:?}");
        }
        "diagonal" => {
            loadings = sign_identify_diagonal(&loadings)?;
            println!("sign anchors: leading series (diagonal rule)");
        }
        "none" => {}
        other => {
            return Err(CliError::Config(format!(
                "unknown sign-identify method {other:?}; use maximin, diagonal, or none"
            )))
        }
    }

    let mut summaries: Vec<ParamSummary> = Vec::new();
    for i in 0..store.m {
        for j in 0..store.r {
            let trace: Vec<f64> = loadings.iter().map(|l| l[(i, j)]).collect();
            summaries.push(
                summarize_trace(&format!("lambda_{}_{}", i + 1, j + 1), &trace, estimator)
                    .map_err(CliError::Run)?,
            );
        }
    }
    for s in 0..store.m + store.r {
        for (idx, name) in ["mu", "phi", "sigma"].iter().enumerate() {
            if s >= store.m && idx == 0 {
                continue; // factor levels are structurally zero
            }
            let trace: Vec<f64> = store
                .sv
                .iter()
                .map(|draw| match idx {
                    0 => draw[s].0,
                    1 => draw[s].1,
                    _ => draw[s].2,
                })
                .collect();
            summaries.push(
                summarize_trace(&format!("{name}_{}", s + 1), &trace, estimator)
                    .map_err(CliError::Run)?,
            );
        }
    }
    for j in 0..store.r {
        let trace: Vec<f64> = final_factors.iter().map(|f| f[j]).collect();
        summaries.push(
            summarize_trace(&format!("f_{}_t{}", j + 1, store.t_len), &trace, estimator)
                .map_err(CliError::Run)?,
        );
    }

    println!(
        "{:>16} {:>12} {:>12} {:>12} {:>12} {:>12} {:>10}",
        "parameter", "mean", "sd", "q05", "q50", "q95", "IF"
    );
    let mut rows: Vec<Vec<String>> = Vec::new();
    for s in &summaries {
        let if_str = s
            .inefficiency
            .map(|v| format!("{v:.2}"))
            .unwrap_or_default();
        println!(
            "{:>16} {:>12.5} {:>12.5} {:>12.5} {:>12.5} {:>12.5} {:>10}",
            s.name, s.mean, s.sd, s.q05, s.q50, s.q95, if_str
        );
        rows.push(vec![
            s.name.clone(),
            fmt_f64(s.mean),
            fmt_f64(s.sd),
            fmt_f64(s.q05),
            fmt_f64(s.q50),
            fmt_f64(s.q95),
            s.inefficiency.map(fmt_f64).unwrap_or_default(),
        ]);
    }
    write_string_csv(
        &dir.join("summary.csv"),
        &[
            "parameter".to_string(),
            "mean".to_string(),
            "sd".to_string(),
            "q05".to_string(),
            "q50".to_string(),
            "q95".to_string(),
            "inefficiency".to_string(),
        ],
        &rows,
    )?;
    println!();
    println!("wrote summary.csv to {}", dir.display());
    Ok(())
}

/// Helper for tests: absolute path of a draws-dir file.
pub fn draws_file(dir: &Path, name: &str) -> PathBuf {
    dir.join(name)
}
