//! The fixed-point map over mass trajectories and the damped Picard
//! iteration locating a mean-field equilibrium.
//!
//! One application of the map: freeze a mass trajectory, compute the value
//! field and optimal policy, derive per-path costs, evolve the preference
//! ODE, and integrate the mass-conservation system under the resulting
//! flows. Ties between the stay and move branch are convexified by a split
//! function dividing agents between the two.

use crate::error::{Error, Result};
use crate::mass::{evolve_mass, MassTrajectory, Policy};
use crate::network::{Link, NUM_LINKS, NUM_PATHS};
use crate::numerics::{SampledFunction, TimeGrid};
use crate::preference::{evolve_preferences, PreferenceTrajectory};
use crate::scenario::Scenario;
use crate::value::{path_costs_with_model, value_field, CostModel, ValueField};

/// Fraction of agents taking the stay branch on tied nodes, per link and
/// grid node (grid-constant on each cell).
#[derive(Debug, Clone)]
pub struct SplitFunction {
    grid: TimeGrid,
    stay_fraction: [Vec<f64>; NUM_LINKS],
}

impl SplitFunction {
    /// The same stay fraction everywhere (default 1/2).
    pub fn uniform(grid: TimeGrid, stay_fraction: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&stay_fraction) {
            return Err(Error::Validation {
                rule: format!("split fraction {stay_fraction} must lie in [0, 1]"),
            });
        }
        Ok(Self {
            grid,
            stay_fraction: std::array::from_fn(|_| vec![stay_fraction; grid.len()]),
        })
    }

    pub fn grid(&self) -> TimeGrid {
        self.grid
    }

    pub fn stay_fraction(&self, e: Link, k: usize) -> f64 {
        self.stay_fraction[e.index()][k]
    }

    pub fn move_fraction(&self, e: Link, k: usize) -> f64 {
        1.0 - self.stay_fraction[e.index()][k]
    }
}

/// Everything produced along one application of the fixed-point map.
pub struct PsiArtifacts {
    pub field: ValueField,
    pub path_costs: [SampledFunction; NUM_PATHS],
    pub preferences: PreferenceTrajectory,
    pub arrivals: SampledFunction,
}

/// A uniform partition of the horizon fine enough that a branch optimal at a
/// node stays `epsilon`-optimal across its cell, snapped to the base grid.
pub fn epsilon_partition(epsilon: f64, scenario: &Scenario) -> Result<TimeGrid> {
    if !(epsilon > 0.0) {
        return Err(Error::Validation {
            rule: "epsilon must be positive".into(),
        });
    }
    let lipschitz = scenario.value_slope_bound();
    let horizon = scenario.grid.horizon();
    let step = epsilon / lipschitz;
    if step < scenario.grid.dt() {
        return Err(Error::StepTooSmall {
            step,
            dt: scenario.grid.dt(),
        });
    }
    let cells = ((horizon / step).ceil() as usize).max(1);
    TimeGrid::new(horizon, cells)
}

/// One application of the fixed-point map, with artifacts.
pub fn apply_psi_full(
    rho: &MassTrajectory,
    split: &SplitFunction,
    scenario: &Scenario,
) -> Result<(MassTrajectory, PsiArtifacts)> {
    let grid = scenario.grid;
    let field = value_field(rho, scenario)?;

    let model = CostModel::new(rho, scenario);
    let mut per_path: [Vec<f64>; NUM_PATHS] =
        std::array::from_fn(|_| Vec::with_capacity(grid.len()));
    for k in 0..grid.len() {
        let costs = path_costs_with_model(&model, &field, grid.node(k));
        for p in 0..NUM_PATHS {
            per_path[p].push(costs[p]);
        }
    }
    let path_costs: [SampledFunction; NUM_PATHS] = std::array::from_fn(|p| {
        SampledFunction::new(grid, per_path[p].clone()).expect("node count matches grid")
    });

    let preferences = evolve_preferences(
        &path_costs,
        &scenario.lambda,
        &scenario.lambda_dot,
        scenario.z0,
        scenario.eta,
        scenario.beta,
        grid,
    )?;

    let policy = Policy::with_move_share(&field, |e, k| split.move_fraction(e, k));
    let (rho_next, arrivals) = evolve_mass(&preferences, &policy, &scenario.lambda, scenario)?;

    Ok((
        rho_next,
        PsiArtifacts {
            field,
            path_costs,
            preferences,
            arrivals,
        },
    ))
}

/// One application of the fixed-point map.
pub fn apply_psi(
    rho: &MassTrajectory,
    split: &SplitFunction,
    scenario: &Scenario,
) -> Result<MassTrajectory> {
    apply_psi_full(rho, split, scenario).map(|(rho_next, _)| rho_next)
}

/// Outcome of the damped fixed-point iteration.
pub struct EquilibriumResult {
    pub rho: MassTrajectory,
    pub preferences: PreferenceTrajectory,
    pub field: ValueField,
    pub path_costs: [SampledFunction; NUM_PATHS],
    pub arrivals: SampledFunction,
    pub residual_history: Vec<f64>,
    pub ties: Vec<(Link, usize)>,
    pub converged: bool,
    pub iterations: usize,
}

/// Damped Picard iteration `rho <- (1 - gamma) rho + gamma psi(rho)` from the
/// empty network, with ties split half/half and the damping halved after ten
/// consecutive non-improving iterations (floor 1/64).
pub fn find_equilibrium(scenario: &Scenario) -> Result<EquilibriumResult> {
    find_equilibrium_with_split(scenario, 0.5)
}

pub fn find_equilibrium_with_split(
    scenario: &Scenario,
    stay_fraction: f64,
) -> Result<EquilibriumResult> {
    const STALL_LIMIT: usize = 10;
    const DAMPING_FLOOR: f64 = 1.0 / 64.0;

    let cfg = scenario.solver;
    let split = SplitFunction::uniform(scenario.grid, stay_fraction)?;
    let mut rho = MassTrajectory::zero(scenario.grid);
    let mut damping = cfg.damping;
    let mut residual_history = Vec::new();
    let mut best_residual = f64::INFINITY;
    let mut stall = 0usize;

    let mut last: Option<(MassTrajectory, PsiArtifacts)> = None;
    let mut converged = false;
    let mut iterations = 0;

    while iterations < cfg.max_iter {
        iterations += 1;
        let (rho_next, artifacts) = apply_psi_full(&rho, &split, scenario)?;
        let residual = rho_next.sup_distance(&rho);
        residual_history.push(residual);
        if residual <= cfg.tol {
            rho = rho_next.clone();
            last = Some((rho_next, artifacts));
            converged = true;
            break;
        }
        if residual < best_residual {
            best_residual = residual;
            stall = 0;
        } else {
            stall += 1;
            if stall >= STALL_LIMIT {
                let halved = damping * 0.5;
                if halved >= DAMPING_FLOOR {
                    damping = halved;
                    stall = 0;
                } else {
                    last = Some((rho_next, artifacts));
                    break;
                }
            }
        }
        rho = blend(&rho, &rho_next, damping)?;
        last = Some((rho_next, artifacts));
    }

    let (_, artifacts) = last.expect("max_iter >= 1 guarantees one application");
    let ties = artifacts.field.ties();
    Ok(EquilibriumResult {
        rho,
        preferences: artifacts.preferences,
        field: artifacts.field,
        path_costs: artifacts.path_costs,
        arrivals: artifacts.arrivals,
        residual_history,
        ties,
        converged,
        iterations,
    })
}

fn blend(a: &MassTrajectory, b: &MassTrajectory, gamma: f64) -> Result<MassTrajectory> {
    let samples = a
        .samples()
        .iter()
        .zip(b.samples())
        .map(|(ra, rb)| std::array::from_fn(|i| (1.0 - gamma) * ra[i] + gamma * rb[i]))
        .collect();
    MassTrajectory::new(a.grid(), samples)
}
