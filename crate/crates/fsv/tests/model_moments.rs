//! Long-run moment checks of the data-generating process.

use fsv::model::{simulate_fsv, table_ai_params, ModelDims};

#[test]
fn long_run_h_moments_match_stationary_law() {
    let params = table_ai_params();
    let t_len = 100_000;
    let dims = ModelDims::new(10, 2, t_len).unwrap();
    let (_, truth) = simulate_fsv(dims, &params, 2024).unwrap();

    // Check a spread of series: strong noise (0), middling (5), and the
    // first factor (10).
    for &i in &[0usize, 5, 10] {
        let sv = params.sv()[i];
        let h: Vec<f64> = (1..=t_len).map(|t| truth.h[(i, t)]).collect();
        let mean = h.iter().sum::<f64>() / t_len as f64;
        let var = h.iter().map(|&x| (x - mean) * (x - mean)).sum::<f64>() / t_len as f64;
        let expect = sv.stationary_var();
        assert!(
            (var - expect).abs() / expect < 0.05,
            "series {i}: sample var {var} vs stationary {expect}"
        );
        let lag1: f64 = (0..t_len - 1)
            .map(|t| (h[t] - mean) * (h[t + 1] - mean))
            .sum::<f64>()
            / (t_len as f64 * var);
        assert!(
            (lag1 - sv.phi).abs() / sv.phi < 0.05,
            "series {i}: lag-1 autocorrelation {lag1} vs phi {}",
            sv.phi
        );
    }

    // The first idiosyncratic series has stationary variance exactly
    // 0.6^2/(1 - 0.8^2) = 1.
    let h1: Vec<f64> = (1..=t_len).map(|t| truth.h[(0, t)]).collect();
    let m = h1.iter().sum::<f64>() / t_len as f64;
    let v = h1.iter().map(|&x| (x - m) * (x - m)).sum::<f64>() / t_len as f64;
    assert!((v - 1.0).abs() < 0.05, "h_1 variance {v} vs 1.0");
}

#[test]
fn standardized_residuals_pass_normality_moment_check() {
    let params = table_ai_params();
    let t_len = 100_000;
    let dims = ModelDims::new(10, 2, t_len).unwrap();
    let (y, truth) = simulate_fsv(dims, &params, 77).unwrap();
    let lam = params.loadings();

    for i in 0..3 {
        let resid: Vec<f64> = (0..t_len)
            .map(|t| {
                let mut mean = 0.0;
                for j in 0..2 {
                    mean += lam[(i, j)] * truth.f[(j, t)];
                }
                (y[(i, t)] - mean) / (0.5 * truth.h[(i, t + 1)]).exp()
            })
            .collect();
        let n = t_len as f64;
        let mean = resid.iter().sum::<f64>() / n;
        let var = resid.iter().map(|&x| (x - mean) * (x - mean)).sum::<f64>() / n;
        let sd = var.sqrt();
        let skew = resid
            .iter()
            .map(|&x| ((x - mean) / sd).powi(3))
            .sum::<f64>()
            / n;
        let kurt = resid
            .iter()
            .map(|&x| ((x - mean) / sd).powi(4))
            .sum::<f64>()
            / n;
        // Monte Carlo standard errors for normal samples.
        let se_skew = (6.0 / n).sqrt();
        let se_kurt = (24.0 / n).sqrt();
        assert!(mean.abs() < 4.0 / n.sqrt(), "series {i}: residual mean {mean}");
        assert!((var - 1.0).abs() < 4.0 * (2.0 / n).sqrt(), "series {i}: residual var {var}");
        assert!(skew.abs() < 4.0 * se_skew, "series {i}: skewness {skew}");
        assert!((kurt - 3.0).abs() < 4.0 * se_kurt, "series {i}: kurtosis {kurt}");
    }
}
