use gaslight_core::model::{likelihood_ratio, rollout, NoiseFamily};
use gaslight_core::stats::{run_trials, Estimate};
use gaslight_core::{scenarios, ControlPolicy, Grid, GridDensity, ModelSpec, SamplingMode, SystemModel};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{Continuous, ContinuousCDF, Normal};
use statrs::statistics::Statistics;

fn truncated_normal_pdf(loc: f64, scale: f64, lo: f64, hi: f64, x: f64) -> f64 {
    let n = Normal::new(loc, scale).unwrap();
    n.pdf(x) / (n.cdf(hi) - n.cdf(lo))
}

#[test]
fn truncated_normal_grid_density_matches_closed_form() {
    let g = Grid::new(-1.0, 2.0, 2001).unwrap();
    let d = NoiseFamily::TruncatedNormal { loc: 0.3, scale: 0.45 }.density(g).unwrap();
    for (x, v) in g.nodes().zip(d.values()) {
        let exact = truncated_normal_pdf(0.3, 0.45, -1.0, 2.0, x);
        assert!((v - exact).abs() <= 1e-6 * exact.max(1e-3), "{x}: {v} vs {exact}");
    }
}

#[test]
fn quantile_draws_follow_the_density() {
    let g = Grid::new(0.0, 1.0, 401).unwrap();
    let d: GridDensity = NoiseFamily::TruncatedNormal { loc: 0.6, scale: 0.2 }.density(g).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let n = 20_000;
    let mut xs: Vec<f64> = (0..n).map(|_| d.quantile(rng.gen())).collect();
    xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let norm = Normal::new(0.6, 0.2).unwrap();
    let (c0, c1) = (norm.cdf(0.0), norm.cdf(1.0));
    let ks = xs
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = (norm.cdf(x) - c0) / (c1 - c0);
            (f - i as f64 / n as f64).abs().max((f - (i + 1) as f64 / n as f64).abs())
        })
        .fold(0.0, f64::max);
    // 99.9% Kolmogorov critical value for n = 20000 is about 0.0138
    assert!(ks < 0.0138, "KS statistic {ks}");
}

#[test]
fn estimate_matches_statrs() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let xs: Vec<f64> = (0..5000).map(|_| rng.gen::<f64>().powi(3) * 7.0 - 1.0).collect();
    let e = Estimate::from_samples(&xs);
    let mean = xs.iter().mean();
    let se = xs.iter().std_dev() / (xs.len() as f64).sqrt();
    assert!((e.mean - mean).abs() < 1e-12);
    assert!((e.std_error - se).abs() < 1e-12);
}

#[test]
fn change_of_measure_reproduces_nominal_expectations() {
    let m = SystemModel::new(scenarios::canonical()).unwrap();
    let policy = ControlPolicy::OpenLoop(vec![0.5, 0.0, -0.5]);
    let k = m.horizon();
    let g = |states: &[f64], ys: &[f64]| {
        let indicator = if states[k] > 0.0 { 1.0 } else { 0.0 };
        indicator * (1.0 + ys[0]) + (ys[k - 1] * 3.0).cos()
    };
    let n = 100_000;
    let nominal = run_trials(n, 11, |_, rng| {
        let r = rollout(&m, &policy, None, SamplingMode::Nominal, rng, None).unwrap();
        g(&r.trajectory.states, &r.trajectory.observations)
    });
    let weighted = run_trials(n, 12, |_, rng| {
        let r = rollout(&m, &policy, None, SamplingMode::Reference, rng, None).unwrap();
        let z = likelihood_ratio(&m, &r.trajectory, k).unwrap();
        z * g(&r.trajectory.states, &r.trajectory.observations)
    });
    let a = Estimate::from_samples(&nominal);
    let b = Estimate::from_samples(&weighted);
    assert!(a.agrees_with(&b, 4.0), "{a:?} vs {b:?}");
}

#[test]
fn model_spec_round_trips_through_json() {
    for name in scenarios::NAMES {
        let spec = scenarios::by_name(name).unwrap();
        let text = serde_json::to_string(&spec).unwrap();
        let back: ModelSpec = serde_json::from_str(&text).unwrap();
        assert_eq!(back, spec, "{name}");
    }
}
