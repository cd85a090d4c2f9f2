//! Distributional check of the shallow column-scale redraw against the
//! closed-form mean of its conditional, using published Bessel values.

use fsv::interweave::{shallow_redraw, ColumnView};
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

#[test]
fn shallow_redraw_mean_matches_bessel_ratio() {
    // T = 1, k = 0, f*_1 = 1, h = 0, B = 1: the squared anchor follows
    // GIG(0, 1, 1) with mean K_1(1)/K_0(1).
    let view = ColumnView {
        j: 0,
        anchor_row: 0,
        lambda_jj_old: 1.0,
        lambda_star: vec![],
        f_old: vec![1.0],
        h_old: vec![0.0, 0.0],
        phi: 0.9,
        sigma: 0.2,
    };
    let expect = 0.601_907_230_197_234_6 / 0.421_024_438_240_708_34; // K_1(1)/K_0(1)
    let n = 1_000_000;
    let mut rng = ChaCha12Rng::seed_from_u64(31);
    let mut sum = 0.0;
    let mut sumsq = 0.0;
    for _ in 0..n {
        let lam = shallow_redraw(&view, 1.0, &mut rng).unwrap();
        // The draw carries the anchor's sign; the squared draw is the GIG
        // variate itself.
        assert!(lam > 0.0);
        let sq = lam * lam;
        sum += sq;
        sumsq += sq * sq;
    }
    let mean = sum / n as f64;
    let sd = (sumsq / n as f64 - mean * mean).sqrt();
    let se = sd / (n as f64).sqrt();
    assert!(
        (mean - expect).abs() < 3.0 * se,
        "shallow redraw squared-anchor mean {mean} vs {expect} (se {se})"
    );
}

#[test]
fn shallow_redraw_preserves_negative_anchor_sign() {
    let view = ColumnView {
        j: 0,
        anchor_row: 0,
        lambda_jj_old: -0.7,
        lambda_star: vec![0.4],
        f_old: vec![0.9, -0.3, 0.5],
        h_old: vec![0.0, 0.1, -0.2, 0.3],
        phi: 0.9,
        sigma: 0.2,
    };
    let mut rng = ChaCha12Rng::seed_from_u64(5);
    for _ in 0..200 {
        let lam = shallow_redraw(&view, 1.0, &mut rng).unwrap();
        assert!(lam < 0.0, "sign of the anchor must survive the redraw");
    }
}
