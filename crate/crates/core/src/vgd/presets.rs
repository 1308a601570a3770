//! Default VGD settings for the simulation study.

use crate::kernels::{BandwidthPolicy, KernelSpec};
use crate::model::{Prior, Problem, Task};
use crate::vgd::{Target, VgdConfig};

pub const DEFAULT_PRIOR_SD: f64 = 10.0;
/// Spread of the initial particles `μ₀ = N(0, 1)`.
pub const DEFAULT_INIT_SD: f64 = 1.0;
pub const SIMULATION_PARTICLES: usize = 20;
pub const SIMULATION_ITERATIONS: usize = 500;

/// Largest per-datum curvature of the log-likelihood over the region the
/// particles visit, used to scale the step size with `n`.
fn curvature_per_datum(problem: Problem) -> f64 {
    match problem {
        // E[x⁴] / σ² with x ~ U[0, 1]
        Problem::Quadratic => 0.2 / 0.25,
        // E[x²] / (16 σ²) with x ~ U[−1, 1], attained at θ = 0
        Problem::Sigmoid => (1.0 / 3.0) / (16.0 * 0.0025),
        // top eigenvalue of E[(1, x)ᵀ(1, x)] / σ² with x ~ U[−2, 2]
        Problem::Linear => (4.0 / 3.0) / 0.64,
        // E[sin²(kx)] / σ²
        Problem::Sinusoid { .. } => 0.5 / 0.04,
    }
}

/// `ε = c / (1 + n·curvature)`, so that `ε` times the curvature of the log
/// posterior stays below `c` for every dataset size.
pub fn step_size_for(task: Task, n: usize) -> f64 {
    const C: f64 = 0.5;
    C / (1.0 + n as f64 * curvature_per_datum(task.problem))
}

/// IMQ kernel with per-iteration median bandwidth, `N(0, 10²)` prior, `N = 20`,
/// particles initialized from `N(0, 1)`.
pub fn simulation_config(task: Task, n: usize, target: Target, seed: u64) -> VgdConfig {
    let d = task.model().param_dim();
    VgdConfig {
        target,
        particles: SIMULATION_PARTICLES,
        iterations: SIMULATION_ITERATIONS,
        step_size: step_size_for(task, n),
        kernel: KernelSpec::imq(1.0, 1.0, 0.5).with_bandwidth(BandwidthPolicy::MedianPerIteration),
        prior: Prior::gaussian(d, 0.0, DEFAULT_PRIOR_SD).expect("valid prior"),
        init: Some(Prior::gaussian(d, 0.0, DEFAULT_INIT_SD).expect("valid init")),
        seed,
        kgd_every: 10,
    }
}
