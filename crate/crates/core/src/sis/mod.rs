//! Quenched mean-field SIS dynamics on a weighted network.
//!
//! `dρ_i/dt = −ρ_i + λ(1 − ρ_i) Σ_j Ω_ij ρ_j`, with time in units of the
//! recovery rate.

mod exposure;
mod io;

pub use exposure::{extract_exposure_network, initial_infection, ExposureNetwork};
pub use io::{read_edge_list, write_edge_list};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum SisError {
    #[error("invalid network: {0}")]
    InvalidNetwork(String),
    #[error("invalid state: {0}")]
    InvalidState(String),
    #[error("integration diverged at t = {time}")]
    IntegrationDiverged { time: f64 },
    #[error("no convergence after {iterations} iterations")]
    NoConvergence { iterations: usize },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Dense weight matrix `Ω`, row-major; `Ω_ij` is the weight with which node
/// `j` infects node `i`.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedNetwork {
    n: usize,
    omega: Vec<f64>,
}

impl WeightedNetwork {
    pub fn zeros(n: usize) -> Self {
        WeightedNetwork { n, omega: vec![0.0; n * n] }
    }

    pub fn from_dense(n: usize, omega: Vec<f64>) -> Result<Self, SisError> {
        if omega.len() != n * n {
            return Err(SisError::InvalidNetwork(format!("{} entries for {n} nodes", omega.len())));
        }
        let net = WeightedNetwork { n, omega };
        for i in 0..n {
            for j in 0..n {
                net.check_weight(i, j, net.get(i, j))?;
            }
        }
        Ok(net)
    }

    pub fn from_edges(n: usize, edges: &[(usize, usize, f64)]) -> Result<Self, SisError> {
        let mut net = Self::zeros(n);
        for &(i, j, w) in edges {
            net.set(i, j, w)?;
        }
        Ok(net)
    }

    fn check_weight(&self, i: usize, j: usize, w: f64) -> Result<(), SisError> {
        if i >= self.n || j >= self.n {
            return Err(SisError::InvalidNetwork(format!("edge ({i}, {j}) outside {} nodes", self.n)));
        }
        if !(w.is_finite() && w >= 0.0) {
            return Err(SisError::InvalidNetwork(format!("weight {w} on ({i}, {j})")));
        }
        if i == j && w != 0.0 {
            return Err(SisError::InvalidNetwork(format!("self-loop on node {i}")));
        }
        Ok(())
    }

    pub fn set(&mut self, i: usize, j: usize, w: f64) -> Result<(), SisError> {
        self.check_weight(i, j, w)?;
        self.omega[i * self.n + j] = w;
        Ok(())
    }

    pub fn size(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.omega[i * self.n + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.omega[i * self.n..(i + 1) * self.n]
    }

    pub fn scaled(&self, c: f64) -> Self {
        WeightedNetwork { n: self.n, omega: self.omega.iter().map(|w| w * c).collect() }
    }

    /// Non-zero entries in row-major order.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        self.omega.iter().enumerate().filter(|(_, w)| **w != 0.0).map(move |(k, w)| (k / self.n, k % self.n, *w))
    }

    /// `y = Ω x`, summing each row left to right.
    pub fn mul_vec(&self, x: &[f64], y: &mut [f64]) {
        for (i, yi) in y.iter_mut().enumerate() {
            *yi = self.row(i).iter().zip(x).map(|(w, v)| w * v).sum();
        }
    }
}

/// Undirected ring where each node links to its `k / 2` nearest neighbours
/// on either side, unit weights. `k` must be even and below `n`.
pub fn ring_lattice(n: usize, k: usize) -> Result<WeightedNetwork, SisError> {
    if !k.is_multiple_of(2) || k >= n {
        return Err(SisError::InvalidNetwork(format!("ring lattice needs even k < n, got n={n} k={k}")));
    }
    let mut net = WeightedNetwork::zeros(n);
    for i in 0..n {
        for d in 1..=k / 2 {
            net.set(i, (i + d) % n, 1.0)?;
            net.set(i, (i + n - d) % n, 1.0)?;
        }
    }
    Ok(net)
}

/// Hub node 0 joined to `leaves` leaf nodes, unit weights both ways.
pub fn star(leaves: usize) -> WeightedNetwork {
    let mut net = WeightedNetwork::zeros(leaves + 1);
    for l in 1..=leaves {
        net.omega[l] = 1.0;
        net.omega[l * (leaves + 1)] = 1.0;
    }
    net
}

fn check_rho(rho: &[f64], n: usize) -> Result<(), SisError> {
    if rho.len() != n {
        return Err(SisError::InvalidState(format!("state has {} entries for {n} nodes", rho.len())));
    }
    if let Some(v) = rho.iter().find(|v| !(0.0..=1.0).contains(*v)) {
        return Err(SisError::InvalidState(format!("density {v} outside [0, 1]")));
    }
    Ok(())
}

/// Right-hand side of the SIS equations, written into `out`.
pub fn sis_rhs_into(rho: &[f64], lambda: f64, net: &WeightedNetwork, out: &mut [f64]) {
    net.mul_vec(rho, out);
    for (o, r) in out.iter_mut().zip(rho) {
        *o = -r + lambda * (1.0 - r) * *o;
    }
}

pub fn sis_rhs(rho: &[f64], lambda: f64, net: &WeightedNetwork) -> Vec<f64> {
    let mut out = vec![0.0; rho.len()];
    sis_rhs_into(rho, lambda, net, &mut out);
    out
}

/// Sampled solution of the SIS equations.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub rho: Vec<Vec<f64>>,
}

impl Trajectory {
    pub fn last(&self) -> &[f64] {
        self.rho.last().expect("trajectory has the initial sample")
    }
}

/// Fixed-step classic Runge–Kutta from `rho0` to `t_end`.
///
/// The state is clamped to `[0, 1]` after every step. Every `stride`-th
/// step is stored, together with `t = 0` and `t_end`. The final step is
/// shortened when `t_end` is not a multiple of `dt`.
pub fn integrate_sis(
    rho0: &[f64],
    lambda: f64,
    net: &WeightedNetwork,
    dt: f64,
    t_end: f64,
    stride: usize,
) -> Result<Trajectory, SisError> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(SisError::InvalidState(format!("time step {dt}")));
    }
    if !(t_end >= 0.0 && t_end.is_finite()) {
        return Err(SisError::InvalidState(format!("end time {t_end}")));
    }
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(SisError::InvalidState(format!("transmission rate {lambda}")));
    }
    let n = net.size();
    check_rho(rho0, n)?;
    let stride = stride.max(1);
    let full = (t_end / dt + 1e-9).floor() as usize;
    let tail = t_end - full as f64 * dt;
    let steps = if tail > 1e-12 * dt.max(t_end) { full + 1 } else { full };

    let mut rho = rho0.to_vec();
    let (mut k1, mut k2, mut k3, mut k4, mut tmp) =
        (vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]);
    let mut traj = Trajectory { times: vec![0.0], rho: vec![rho.clone()] };
    for s in 0..steps {
        let t0 = s as f64 * dt;
        let h = if s == full { tail } else { dt };
        sis_rhs_into(&rho, lambda, net, &mut k1);
        for i in 0..n {
            tmp[i] = rho[i] + 0.5 * h * k1[i];
        }
        sis_rhs_into(&tmp, lambda, net, &mut k2);
        for i in 0..n {
            tmp[i] = rho[i] + 0.5 * h * k2[i];
        }
        sis_rhs_into(&tmp, lambda, net, &mut k3);
        for i in 0..n {
            tmp[i] = rho[i] + h * k3[i];
        }
        sis_rhs_into(&tmp, lambda, net, &mut k4);
        let t = if s + 1 == steps { t_end } else { (s + 1) as f64 * dt };
        for i in 0..n {
            let next = rho[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
            if !next.is_finite() {
                return Err(SisError::IntegrationDiverged { time: t0 });
            }
            rho[i] = next.clamp(0.0, 1.0);
        }
        if (s + 1) % stride == 0 || s + 1 == steps {
            traj.times.push(t);
            traj.rho.push(rho.clone());
        }
    }
    Ok(traj)
}

pub const EIGEN_TOLERANCE: f64 = 1e-10;
pub const EIGEN_MAX_ITERATIONS: usize = 10_000;
pub const STEADY_MAX_ITERATIONS: usize = 100_000;

/// Nodes that can lie on a cycle: repeatedly drops nodes with no incoming
/// or no outgoing weight. The spectral radius lives on what remains.
fn cyclic_core(net: &WeightedNetwork) -> Vec<usize> {
    let n = net.size();
    let mut alive = vec![true; n];
    loop {
        let mut changed = false;
        for i in 0..n {
            if !alive[i] {
                continue;
            }
            let out = (0..n).any(|j| alive[j] && net.get(i, j) > 0.0);
            let inc = (0..n).any(|j| alive[j] && net.get(j, i) > 0.0);
            if !(out && inc) {
                alive[i] = false;
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }
    (0..n).filter(|&i| alive[i]).collect()
}

/// Largest eigenvalue of `Ω` by power iteration.
///
/// Iterates on `Ω + I`, whose dominant eigenvalue is strictly separated in
/// modulus even for bipartite graphs, and subtracts the shift at the end.
pub fn dominant_eigenvalue(net: &WeightedNetwork) -> Result<f64, SisError> {
    let core = cyclic_core(net);
    let m = core.len();
    if m == 0 {
        return Ok(0.0);
    }
    let sub: Vec<f64> = core.iter().flat_map(|&i| core.iter().map(move |&j| net.get(i, j))).collect();
    let sub = WeightedNetwork { n: m, omega: sub };
    let mut x = vec![1.0 / (m as f64).sqrt(); m];
    let mut y = vec![0.0; m];
    let mut estimate = f64::NAN;
    for _ in 0..EIGEN_MAX_ITERATIONS {
        sub.mul_vec(&x, &mut y);
        for (yi, xi) in y.iter_mut().zip(&x) {
            *yi += xi;
        }
        let norm = y.iter().map(|v| v * v).sum::<f64>().sqrt();
        if !(norm > 0.0 && norm.is_finite()) {
            return Err(SisError::InvalidNetwork("power iteration degenerated".into()));
        }
        let next = norm - 1.0;
        for (xi, yi) in x.iter_mut().zip(&y) {
            *xi = yi / norm;
        }
        if (next - estimate).abs() <= EIGEN_TOLERANCE * next.abs().max(f64::MIN_POSITIVE) {
            return Ok(next);
        }
        estimate = next;
    }
    Err(SisError::NoConvergence { iterations: EIGEN_MAX_ITERATIONS })
}

/// `λ_c = 1 / Λ_max(Ω)`; infinite when no epidemic can spread.
pub fn epidemic_threshold(net: &WeightedNetwork) -> Result<f64, SisError> {
    let lmax = dominant_eigenvalue(net)?;
    Ok(if lmax > 0.0 { 1.0 / lmax } else { f64::INFINITY })
}

/// Endemic state by fixed-point iteration of `ρ_i = λS_i / (1 + λS_i)` from
/// `ρ = 0.5`, stopping once no component moves by more than `tol`. Below the
/// threshold the zero vector is returned directly.
pub fn steady_state_density(lambda: f64, net: &WeightedNetwork, tol: f64) -> Result<Vec<f64>, SisError> {
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(SisError::InvalidState(format!("transmission rate {lambda}")));
    }
    let n = net.size();
    if lambda == 0.0 || lambda * dominant_eigenvalue(net)? <= 1.0 {
        return Ok(vec![0.0; n]);
    }
    let mut rho = vec![0.5; n];
    let mut s = vec![0.0; n];
    for _ in 0..STEADY_MAX_ITERATIONS {
        net.mul_vec(&rho, &mut s);
        let mut delta: f64 = 0.0;
        for (r, si) in rho.iter_mut().zip(&s) {
            let next = lambda * si / (1.0 + lambda * si);
            delta = delta.max((next - *r).abs());
            *r = next;
        }
        if delta < tol {
            return Ok(rho);
        }
    }
    Err(SisError::NoConvergence { iterations: STEADY_MAX_ITERATIONS })
}
