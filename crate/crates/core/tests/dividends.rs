use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use repo_contagion::assets::{step_dividend, DividendState};

fn series(seed: u64, n: usize) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut state = DividendState::new(10.0, 0.95, 0.5);
    (0..n)
        .map(|_| {
            let z: f64 = StandardNormal.sample(&mut rng);
            let mu = state.innovation(z);
            step_dividend(&mut state, mu)
        })
        .collect()
}

#[test]
fn long_run_mean_is_d_bar() {
    for seed in 0..5 {
        let d = series(seed, 10_000);
        let n = d.len() as f64;
        let mean = d.iter().sum::<f64>() / n;
        // Stationary AR(1): the standard error of the mean is inflated by
        // (1 + ρ) / (1 − ρ) relative to independent draws.
        let var = d.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
        let se = (var / n * (1.0 + 0.95) / (1.0 - 0.95)).sqrt();
        assert!((mean - 10.0).abs() < 3.0 * se, "seed {seed}: mean {mean}, se {se}");
    }
}

#[test]
fn lag_one_autocorrelation() {
    for seed in 0..5 {
        let d = series(seed, 10_000);
        let x: Vec<f64> = d.iter().map(|v| v - 10.0).collect();
        let num: f64 = x.windows(2).map(|w| w[0] * w[1]).sum();
        let den: f64 = x.iter().map(|v| v * v).sum();
        let rho = num / den;
        assert!((rho - 0.95).abs() < 0.03, "seed {seed}: {rho}");
    }
}
