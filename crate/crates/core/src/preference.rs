//! Perturbed best response, throughput-rate correction, and integration of
//! the aggregate path-preference ODE on the simplex `S_lambda(t)`.

use crate::error::Result;
use crate::network::NUM_PATHS;
use crate::numerics::{rk4_step, SampledFunction, TimeGrid};

/// Aggregate path preferences `z(t)` with `z >= 0` and `1'z = lambda(t)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PreferenceTrajectory {
    grid: TimeGrid,
    z: Vec<[f64; NUM_PATHS]>,
    /// Nodes where `lambda = 0` forced the degenerate simplex `z = 0`.
    degenerate_nodes: Vec<usize>,
}

impl PreferenceTrajectory {
    pub fn constant(grid: TimeGrid, z: [f64; NUM_PATHS]) -> Self {
        Self {
            grid,
            z: vec![z; grid.len()],
            degenerate_nodes: Vec::new(),
        }
    }

    pub fn grid(&self) -> TimeGrid {
        self.grid
    }

    pub fn samples(&self) -> &[[f64; NUM_PATHS]] {
        &self.z
    }

    pub fn at(&self, k: usize) -> [f64; NUM_PATHS] {
        self.z[k]
    }

    pub fn degenerate_nodes(&self) -> &[usize] {
        &self.degenerate_nodes
    }

    pub fn eval(&self, t: f64) -> [f64; NUM_PATHS] {
        let t = t.clamp(0.0, self.grid.horizon());
        let c = self.grid.cell(t);
        let w = (t - self.grid.node(c)) / self.grid.dt();
        std::array::from_fn(|i| self.z[c][i] * (1.0 - w) + self.z[c + 1][i] * w)
    }
}

fn softmax_weights(costs: [f64; NUM_PATHS], beta: f64) -> [f64; NUM_PATHS] {
    let scaled: [f64; NUM_PATHS] = std::array::from_fn(|i| -beta * costs[i]);
    let max = scaled.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let w: [f64; NUM_PATHS] = std::array::from_fn(|i| (scaled[i] - max).exp());
    let sum: f64 = w.iter().sum();
    std::array::from_fn(|i| w[i] / sum)
}

/// `F = lambda_t * softmax(-beta * J)`: the share of the throughput each path
/// attracts under noisy cost information.
pub fn perturbed_best_response(
    costs: [f64; NUM_PATHS],
    lambda_t: f64,
    beta: f64,
) -> [f64; NUM_PATHS] {
    debug_assert!(beta >= 0.0 && lambda_t >= 0.0);
    let w = softmax_weights(costs, beta);
    std::array::from_fn(|i| lambda_t * w[i])
}

/// `Q = lambda_dot_t * softmax(-beta * J)`: the analogous allocation of the
/// throughput's time variation.
pub fn rate_response(costs: [f64; NUM_PATHS], lambda_dot_t: f64, beta: f64) -> [f64; NUM_PATHS] {
    let w = softmax_weights(costs, beta);
    std::array::from_fn(|i| lambda_dot_t * w[i])
}

/// Clamps negatives and rescales so the components sum to `lambda_t`.
/// Returns `None` when `lambda_t = 0` forces the degenerate simplex.
fn project_to_simplex(z: &mut [f64; NUM_PATHS], lambda_t: f64) -> Option<()> {
    for v in z.iter_mut() {
        if *v < 0.0 {
            *v = 0.0;
        }
    }
    if lambda_t <= 0.0 {
        let was_positive = z.iter().any(|&v| v > 0.0);
        *z = [0.0; NUM_PATHS];
        return if was_positive { None } else { Some(()) };
    }
    let sum: f64 = z.iter().sum();
    if sum > 0.0 {
        let scale = lambda_t / sum;
        for v in z.iter_mut() {
            *v *= scale;
        }
    } else {
        *z = [lambda_t / NUM_PATHS as f64; NUM_PATHS];
    }
    Some(())
}

/// RK4 integration of `z' = eta (F + Q - z)` with a post-step projection onto
/// the simplex at every node.
pub fn evolve_preferences(
    costs: &[SampledFunction; NUM_PATHS],
    lambda: &SampledFunction,
    lambda_dot: &SampledFunction,
    z0: [f64; NUM_PATHS],
    eta: f64,
    beta: f64,
    grid: TimeGrid,
) -> Result<PreferenceTrajectory> {
    let mut z = z0;
    let mut degenerate_nodes = Vec::new();
    // z0 may violate the simplex constraint; project it like any other node.
    if project_to_simplex(&mut z, lambda.value_at(0)).is_none() {
        degenerate_nodes.push(0);
    }

    let mut rhs = |s: f64, state: &[f64], out: &mut [f64]| {
        let j: [f64; NUM_PATHS] = std::array::from_fn(|i| costs[i].eval(s));
        let f = perturbed_best_response(j, lambda.eval(s), beta);
        let q = rate_response(j, lambda_dot.eval(s), beta);
        for i in 0..NUM_PATHS {
            out[i] = eta * (f[i] + q[i] - state[i]);
        }
    };

    let mut samples = Vec::with_capacity(grid.len());
    samples.push(z);
    let h = grid.dt();
    let mut next = [0.0; NUM_PATHS];
    for k in 0..grid.steps() {
        rk4_step(&mut rhs, grid.node(k), h, &z, &mut next);
        z = next;
        if project_to_simplex(&mut z, lambda.value_at(k + 1)).is_none() {
            degenerate_nodes.push(k + 1);
        }
        samples.push(z);
    }
    Ok(PreferenceTrajectory {
        grid,
        z: samples,
        degenerate_nodes,
    })
}
