use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use repo_contagion::sis::{
    epidemic_threshold, integrate_sis, read_edge_list, ring_lattice, steady_state_density, write_edge_list, WeightedNetwork,
};

fn random_graph(seed: u64) -> WeightedNetwork {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.random_range(5..=50);
    let mut net = WeightedNetwork::zeros(n);
    for i in 0..n {
        // A directed ring keeps every graph strongly connected.
        net.set(i, (i + 1) % n, rng.random_range(0.1..1.0)).unwrap();
        for j in 0..n {
            if i != j && j != (i + 1) % n && rng.random::<f64>() < 0.2 {
                net.set(i, j, rng.random_range(0.1..1.0)).unwrap();
            }
        }
    }
    net
}

#[test]
fn steady_state_matches_long_integration() {
    let tol = 1e-10;
    for seed in 0..10 {
        let net = random_graph(seed);
        let n = net.size();
        assert!(epidemic_threshold(&net).unwrap().is_finite());
        let lambda = 2.0 * epidemic_threshold(&net).unwrap();
        let fixed = steady_state_density(lambda, &net, tol).unwrap();
        let traj = integrate_sis(&vec![0.5; n], lambda, &net, 0.01, 200.0, 1000).unwrap();
        let end = traj.last();
        for (a, b) in fixed.iter().zip(end) {
            assert!((a - b).abs() <= 10.0 * tol.max(1e-9), "seed {seed}: {a} vs {b}");
        }
    }
}

#[test]
fn regular_threshold_is_sharp() {
    let net = ring_lattice(100, 4).unwrap();
    let below = steady_state_density(0.99 / 4.0, &net, 1e-8).unwrap();
    assert!(below.iter().all(|v| *v == 0.0));
    let above = steady_state_density(1.01 / 4.0, &net, 1e-8).unwrap();
    assert!(above.iter().all(|v| *v > 0.0));
}

#[test]
fn edge_list_round_trip_random() {
    for seed in 0..10 {
        let net = random_graph(seed);
        let mut buf = Vec::new();
        write_edge_list(&net, &mut buf).unwrap();
        assert_eq!(read_edge_list(buf.as_slice()).unwrap(), net);
    }
}
