//! Statistical checks of the benchmark hierarchies over many random inputs.

use subsim_core::hierarchy::{LimitStateModel, ParameterVector};
use subsim_core::models::{BrownianModel, DarcyConfig, DarcyModel};
use subsim_core::rng::stream;

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

#[test]
fn brownian_level_error_decays_like_root_grid_width() {
    // 1024 terms resolve the path well below the grids checked here
    let finest = 13;
    let m = BrownianModel::new(1024, finest, 4.0).unwrap();
    let mut rng = stream(41, &[]);
    let samples: Vec<ParameterVector> = (0..200).map(|_| ParameterVector::standard_normal(m.dim(), &mut rng)).collect();
    let reference: Vec<f64> = samples.iter().map(|t| m.level_value(t, finest).unwrap()).collect();
    let err = |l: u32| {
        let e: Vec<f64> = samples.iter().zip(&reference).map(|(t, g)| m.level_value(t, l).unwrap() - g).collect();
        mean(&e)
    };
    // G_l >= G_L pathwise, so the mean difference is the mean absolute error
    let c = err(4) * 2f64.powi(2);
    for l in 2..=7 {
        let e = err(l);
        let predicted = c * 2f64.powf(-(l as f64) / 2.0);
        assert!(e > 0.0);
        assert!(e < 2.0 * predicted && e > predicted / 2.0, "level {l}: {e} vs {predicted}");
    }
}

#[test]
fn darcy_increments_shrink_geometrically() {
    let m = DarcyModel::new(DarcyConfig::default()).unwrap();
    let mut rng = stream(42, &[]);
    let mut inc = [Vec::new(), Vec::new(), Vec::new()];
    for _ in 0..100 {
        let theta = ParameterVector::standard_normal(m.dim(), &mut rng);
        let q: Vec<f64> = (1..=4).map(|k| m.qoi(&theta, k).unwrap()).collect();
        for k in 0..3 {
            inc[k].push((q[k + 1] - q[k]).abs());
        }
    }
    let means: Vec<f64> = inc.iter().map(|v| mean(v)).collect();
    for w in means.windows(2) {
        assert!(w[1] < 0.5 * w[0], "{means:?}");
    }
}

#[test]
fn darcy_pressure_obeys_the_maximum_principle() {
    let m = DarcyModel::new(DarcyConfig::default()).unwrap();
    let mut rng = stream(43, &[]);
    for _ in 0..100 {
        let theta = ParameterVector::standard_normal(m.dim(), &mut rng);
        let sol = m.fem_solve(&theta, 2).unwrap();
        assert!(sol.u.iter().all(|&u| (-1e-12..=1.0 + 1e-12).contains(&u)));
        let q = m.qoi(&theta, 2).unwrap();
        assert!((0.0..=1.0).contains(&q));
    }
}

#[test]
fn kl_log_field_variance_matches_the_eigenvalue_sum() {
    let m = DarcyModel::new(DarcyConfig::default()).unwrap();
    let field = m.field();
    let points = [(0.13, 0.71), (0.5, 0.5), (0.9, 0.05)];
    let mut rng = stream(44, &[]);
    let n = 4000;
    let mut sq = [0.0; 3];
    for _ in 0..n {
        let theta = ParameterVector::standard_normal(m.dim(), &mut rng);
        for (s, v) in sq.iter_mut().zip(field.log_values(&theta, &points).unwrap()) {
            *s += v * v;
        }
    }
    for (s, &(x, y)) in sq.iter().zip(&points) {
        let empirical = s / n as f64;
        let exact = field.variance_at(x, y);
        assert!((empirical / exact - 1.0).abs() < 0.1, "({x},{y}): {empirical} vs {exact}");
    }
}
