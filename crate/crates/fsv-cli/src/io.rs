//! CSV ingestion, draw persistence, and manifest handling.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;

use fsv::gibbs::ChainOutput;
use fsv::model::{FsvParams, RestrictionPattern, SvParams};

use crate::config::{fmt_f64, read_key_values, RestrictionKind, RunConfig};
use crate::error::CliError;

/// Loads a returns CSV (header row of series names, one row per time point)
/// into a series-major `m x T` matrix. `demean` subtracts each series'
/// sample mean.
pub fn load_returns_csv(path: &Path, demean: bool) -> Result<(DMatrix<f64>, Vec<String>), CliError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(false)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| CliError::Io(format!("cannot open {}: {e}", path.display())))?;
    let labels: Vec<String> = reader
        .headers()
        .map_err(|e| CliError::Parse(format!("{}: bad header: {e}", path.display())))?
        .iter()
        .map(|s| s.to_string())
        .collect();
    let m = labels.len();
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| {
            CliError::Parse(format!("{}: {e}", path.display()))
        })?;
        let line = record
            .position()
            .map(|p| p.line().to_string())
            .unwrap_or_else(|| "?".to_string());
        if record.len() != m {
            return Err(CliError::Parse(format!(
                "{}:{line}: expected {m} fields, found {}",
                path.display(),
                record.len()
            )));
        }
        let mut row = Vec::with_capacity(m);
        for field in record.iter() {
            let v: f64 = field.parse().map_err(|_| {
                CliError::Parse(format!(
                    "{}:{line}: non-numeric cell {field:?}",
                    path.display()
                ))
            })?;
            row.push(v);
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(CliError::Parse(format!(
            "{}: fewer than 2 rows; need a header and at least one observation",
            path.display()
        )));
    }
    let t_len = rows.len();
    let mut data = DMatrix::zeros(m, t_len);
    for (t, row) in rows.iter().enumerate() {
        for (i, &v) in row.iter().enumerate() {
            data[(i, t)] = v;
        }
    }
    if demean {
        for i in 0..m {
            let mean = data.row(i).sum() / t_len as f64;
            for t in 0..t_len {
                data[(i, t)] -= mean;
            }
        }
    }
    Ok((data, labels))
}

/// Writes a time-major CSV (one row per time point) with the given column
/// headers, using 17-significant-digit serialization.
pub fn write_matrix_csv(
    path: &Path,
    headers: &[String],
    columns: &DMatrix<f64>,
) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path)
        .map_err(|e| CliError::Io(format!("cannot create {}: {e}", path.display())))?;
    w.write_record(headers)
        .map_err(|e| CliError::Io(e.to_string()))?;
    for t in 0..columns.ncols() {
        let row: Vec<String> = (0..columns.nrows())
            .map(|i| fmt_f64(columns[(i, t)]))
            .collect();
        w.write_record(&row).map_err(|e| CliError::Io(e.to_string()))?;
    }
    w.flush().map_err(|e| CliError::Io(e.to_string()))?;
    Ok(())
}

fn write_rows_csv(path: &Path, headers: &[String], rows: &[Vec<f64>]) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path)
        .map_err(|e| CliError::Io(format!("cannot create {}: {e}", path.display())))?;
    w.write_record(headers)
        .map_err(|e| CliError::Io(e.to_string()))?;
    for row in rows {
        let rec: Vec<String> = row.iter().map(|&v| fmt_f64(v)).collect();
        w.write_record(&rec).map_err(|e| CliError::Io(e.to_string()))?;
    }
    w.flush().map_err(|e| CliError::Io(e.to_string()))?;
    Ok(())
}

fn read_rows_csv(path: &Path) -> Result<(Vec<String>, Vec<Vec<f64>>), CliError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|e| CliError::Io(format!("cannot open {}: {e}", path.display())))?;
    let headers: Vec<String> = reader
        .headers()
        .map_err(|e| CliError::Parse(e.to_string()))?
        .iter()
        .map(|s| s.to_string())
        .collect();
    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| CliError::Parse(e.to_string()))?;
        let mut row = Vec::with_capacity(headers.len());
        for field in record.iter() {
            row.push(field.parse::<f64>().map_err(|_| {
                CliError::Parse(format!("{}: non-numeric cell {field:?}", path.display()))
            })?);
        }
        rows.push(row);
    }
    Ok((headers, rows))
}

/// Draw-directory file names.
pub const LOADINGS_FILE: &str = "loadings.csv";
pub const SV_PARAMS_FILE: &str = "sv_params.csv";
pub const FINAL_STATES_FILE: &str = "final_states.csv";
pub const H_FILE: &str = "h.csv";
pub const F_FILE: &str = "f.csv";
pub const MANIFEST_FILE: &str = "manifest.txt";

/// Persists a chain into `dir`: one CSV per block plus a manifest echoing
/// the run configuration, seed, version, and interweaving counters.
/// Restricted loadings cells are serialized as literal zero columns so the
/// layout stays dense.
pub fn write_draws(chain: &ChainOutput, config: &RunConfig, dir: &Path) -> Result<PathBuf, CliError> {
    std::fs::create_dir_all(dir)
        .map_err(|e| CliError::Io(format!("cannot create {}: {e}", dir.display())))?;
    let (m, r, t_len) = (chain.dims.m, chain.dims.r, chain.dims.t);

    let mut headers = Vec::with_capacity(m * r);
    for i in 0..m {
        for j in 0..r {
            headers.push(format!("lambda_{}_{}", i + 1, j + 1));
        }
    }
    let rows: Vec<Vec<f64>> = chain
        .loadings
        .iter()
        .map(|l| {
            let mut row = Vec::with_capacity(m * r);
            for i in 0..m {
                for j in 0..r {
                    row.push(l[(i, j)]);
                }
            }
            row
        })
        .collect();
    write_rows_csv(&dir.join(LOADINGS_FILE), &headers, &rows)?;

    let mut headers = Vec::with_capacity(3 * (m + r));
    for s in 0..m + r {
        headers.push(format!("mu_{}", s + 1));
        headers.push(format!("phi_{}", s + 1));
        headers.push(format!("sigma_{}", s + 1));
    }
    let rows: Vec<Vec<f64>> = chain
        .sv_params
        .iter()
        .map(|sv| {
            sv.iter()
                .flat_map(|p| [p.mu, p.phi, p.sigma])
                .collect::<Vec<f64>>()
        })
        .collect();
    write_rows_csv(&dir.join(SV_PARAMS_FILE), &headers, &rows)?;

    let mut headers = Vec::with_capacity(m + 2 * r);
    for j in 0..r {
        headers.push(format!("f_{}_t{}", j + 1, t_len));
    }
    for s in 0..m + r {
        headers.push(format!("h_{}_t{}", s + 1, t_len));
    }
    let rows: Vec<Vec<f64>> = chain
        .final_factors
        .iter()
        .zip(chain.final_h.iter())
        .map(|(f, h)| f.iter().chain(h.iter()).copied().collect())
        .collect();
    write_rows_csv(&dir.join(FINAL_STATES_FILE), &headers, &rows)?;

    if let Some(h_draws) = &chain.h_draws {
        let mut headers = Vec::new();
        for s in 0..m + r {
            for t in 0..=t_len {
                headers.push(format!("h_{}_t{}", s + 1, t));
            }
        }
        let rows: Vec<Vec<f64>> = h_draws
            .iter()
            .map(|h| {
                let mut row = Vec::with_capacity((m + r) * (t_len + 1));
                for s in 0..m + r {
                    for t in 0..=t_len {
                        row.push(h[(s, t)]);
                    }
                }
                row
            })
            .collect();
        write_rows_csv(&dir.join(H_FILE), &headers, &rows)?;
    }
    if let Some(f_draws) = &chain.f_draws {
        let mut headers = Vec::new();
        for j in 0..r {
            for t in 1..=t_len {
                headers.push(format!("f_{}_t{}", j + 1, t));
            }
        }
        let rows: Vec<Vec<f64>> = f_draws
            .iter()
            .map(|f| {
                let mut row = Vec::with_capacity(r * t_len);
                for j in 0..r {
                    for t in 0..t_len {
                        row.push(f[(j, t)]);
                    }
                }
                row
            })
            .collect();
        write_rows_csv(&dir.join(F_FILE), &headers, &rows)?;
    }

    let manifest_path = dir.join(MANIFEST_FILE);
    let mut text = config.to_key_values();
    let _ = writeln!(text, "version = {}", env!("CARGO_PKG_VERSION"));
    let _ = writeln!(text, "series = {m}");
    let _ = writeln!(text, "time_points = {t_len}");
    let _ = writeln!(text, "stored_draws = {}", chain.stored());
    let _ = writeln!(text, "deep_proposals = {}", chain.meta.boost.deep_proposals);
    let _ = writeln!(text, "deep_accepts = {}", chain.meta.boost.deep_accepts);
    let _ = writeln!(
        text,
        "max_mean_drift = {}",
        fmt_f64(chain.meta.boost.max_mean_drift)
    );
    let _ = writeln!(
        text,
        "max_ratio_drift = {}",
        fmt_f64(chain.meta.boost.max_ratio_drift)
    );
    std::fs::write(&manifest_path, text)
        .map_err(|e| CliError::Io(format!("cannot write manifest: {e}")))?;
    Ok(manifest_path)
}

/// A draws directory read back for diagnostics and summaries.
pub struct DrawStore {
    pub config: RunConfig,
    pub m: usize,
    pub r: usize,
    pub t_len: usize,
    pub pattern: RestrictionPattern,
    /// Kept draws of the dense loadings matrix.
    pub loadings: Vec<DMatrix<f64>>,
    /// Kept draws of (mu, phi, sigma) per series.
    pub sv: Vec<Vec<(f64, f64, f64)>>,
    /// Kept draws of the final-time factors.
    pub final_factors: Vec<Vec<f64>>,
    /// Kept draws of the final-time log-variances.
    pub final_h: Vec<Vec<f64>>,
}

impl DrawStore {
    pub fn load(dir: &Path) -> Result<Self, CliError> {
        let manifest = read_key_values(&dir.join(MANIFEST_FILE))?;
        let config = RunConfig::from_key_values(&manifest)?;
        let m: usize = manifest
            .get("series")
            .ok_or_else(|| CliError::Config("manifest lacks `series`".into()))?
            .parse()
            .map_err(|_| CliError::Config("bad `series` in manifest".into()))?;
        let t_len: usize = manifest
            .get("time_points")
            .ok_or_else(|| CliError::Config("manifest lacks `time_points`".into()))?
            .parse()
            .map_err(|_| CliError::Config("bad `time_points` in manifest".into()))?;
        let r = config.factors;
        let pattern = config.restriction.pattern(m, r);

        let (_, lrows) = read_rows_csv(&dir.join(LOADINGS_FILE))?;
        let loadings = lrows
            .iter()
            .map(|row| DMatrix::from_fn(m, r, |i, j| row[i * r + j]))
            .collect();
        let (_, srows) = read_rows_csv(&dir.join(SV_PARAMS_FILE))?;
        let sv = srows
            .iter()
            .map(|row| {
                (0..m + r)
                    .map(|s| (row[3 * s], row[3 * s + 1], row[3 * s + 2]))
                    .collect()
            })
            .collect();
        let (_, frows) = read_rows_csv(&dir.join(FINAL_STATES_FILE))?;
        let final_factors = frows.iter().map(|row| row[..r].to_vec()).collect();
        let final_h = frows.iter().map(|row| row[r..].to_vec()).collect();
        Ok(Self {
            config,
            m,
            r,
            t_len,
            pattern,
            loadings,
            sv,
            final_factors,
            final_h,
        })
    }

    pub fn stored(&self) -> usize {
        self.loadings.len()
    }
}

/// Writes the data-generating parameters in the flat params-file format
/// that `simulate --params` reads back.
pub fn write_params_file(path: &Path, params: &FsvParams) -> Result<(), CliError> {
    let (m, r) = (params.m(), params.r());
    let kind = match params.pattern().kind() {
        fsv::model::PatternKind::LowerTriangular => "lower-triangular",
        fsv::model::PatternKind::Unrestricted => "unrestricted",
        fsv::model::PatternKind::Custom => {
            return Err(CliError::Config(
                "params files support lower-triangular or unrestricted patterns".into(),
            ))
        }
    };
    let mut text = String::new();
    let _ = writeln!(text, "m = {m}");
    let _ = writeln!(text, "r = {r}");
    let _ = writeln!(text, "restriction = {kind}");
    for i in 0..m {
        for j in 0..r {
            if params.pattern().is_free(i, j) {
                let _ = writeln!(
                    text,
                    "lambda_{}_{} = {}",
                    i + 1,
                    j + 1,
                    fmt_f64(params.loadings()[(i, j)])
                );
            }
        }
    }
    for (s, sv) in params.sv().iter().enumerate() {
        if s < m {
            let _ = writeln!(text, "mu_{} = {}", s + 1, fmt_f64(sv.mu));
        }
        let _ = writeln!(text, "phi_{} = {}", s + 1, fmt_f64(sv.phi));
        let _ = writeln!(text, "sigma_{} = {}", s + 1, fmt_f64(sv.sigma));
    }
    std::fs::write(path, text).map_err(|e| CliError::Io(format!("cannot write params: {e}")))?;
    Ok(())
}

/// Reads a flat params file into model parameters.
pub fn read_params_file(path: &Path) -> Result<FsvParams, CliError> {
    let map = read_key_values(path)?;
    let get = |k: &str| -> Result<&String, CliError> {
        map.get(k)
            .ok_or_else(|| CliError::Config(format!("params file lacks `{k}`")))
    };
    let m: usize = get("m")?
        .parse()
        .map_err(|_| CliError::Config("bad m".into()))?;
    let r: usize = get("r")?
        .parse()
        .map_err(|_| CliError::Config("bad r".into()))?;
    let kind = RestrictionKind::parse(get("restriction")?)?;
    let pattern = kind.pattern(m, r);
    let mut loadings = DMatrix::zeros(m, r);
    for i in 0..m {
        for j in 0..r {
            let key = format!("lambda_{}_{}", i + 1, j + 1);
            if let Some(v) = map.get(&key) {
                if !pattern.is_free(i, j) {
                    return Err(CliError::Config(format!(
                        "{key} is restricted to zero under {}",
                        kind.name()
                    )));
                }
                loadings[(i, j)] = v
                    .parse()
                    .map_err(|_| CliError::Config(format!("bad {key}")))?;
            }
        }
    }
    let mut sv = Vec::with_capacity(m + r);
    for s in 0..m + r {
        let mu = if s < m {
            map.get(&format!("mu_{}", s + 1))
                .map(|v| v.parse::<f64>())
                .transpose()
                .map_err(|_| CliError::Config(format!("bad mu_{}", s + 1)))?
                .unwrap_or(0.0)
        } else {
            0.0
        };
        let phi: f64 = get(&format!("phi_{}", s + 1))?
            .parse()
            .map_err(|_| CliError::Config(format!("bad phi_{}", s + 1)))?;
        let sigma: f64 = get(&format!("sigma_{}", s + 1))?
            .parse()
            .map_err(|_| CliError::Config(format!("bad sigma_{}", s + 1)))?;
        sv.push(
            SvParams::new(mu, phi, sigma)
                .map_err(|e| CliError::Config(format!("series {}: {e}", s + 1)))?,
        );
    }
    FsvParams::new(loadings, pattern, sv).map_err(|e| CliError::Config(e.to_string()))
}
