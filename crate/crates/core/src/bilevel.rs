//! Outer search over linear congestion-cost parameters: the central
//! authority picks `(alpha', alpha'')` in a box so that the induced
//! equilibrium mass is as close as possible (sup-norm) to a reference.

use serde::{Deserialize, Serialize};

use crate::equilibrium::find_equilibrium;
use crate::error::{Error, Result};
use crate::mass::MassTrajectory;
use crate::network::NUM_LINKS;
use crate::scenario::Scenario;
use crate::value::CongestionParams;

/// Compact box of admissible congestion parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamBox {
    pub alpha_prime_lower: [f64; NUM_LINKS],
    pub alpha_prime_upper: [f64; NUM_LINKS],
    pub alpha_second_lower: [f64; NUM_LINKS],
    pub alpha_second_upper: [f64; NUM_LINKS],
}

impl ParamBox {
    pub fn validate(&self) -> Result<()> {
        let pairs = self
            .alpha_prime_lower
            .iter()
            .zip(&self.alpha_prime_upper)
            .chain(self.alpha_second_lower.iter().zip(&self.alpha_second_upper));
        for (lo, hi) in pairs {
            if !(*lo >= 0.0 && lo <= hi && hi.is_finite()) {
                return Err(Error::Validation {
                    rule: format!("param box requires 0 <= lower <= upper, got [{lo}, {hi}]"),
                });
            }
        }
        Ok(())
    }

    fn lower(&self) -> [f64; 2 * NUM_LINKS] {
        concat(self.alpha_prime_lower, self.alpha_second_lower)
    }

    fn upper(&self) -> [f64; 2 * NUM_LINKS] {
        concat(self.alpha_prime_upper, self.alpha_second_upper)
    }

    fn center(&self) -> [f64; 2 * NUM_LINKS] {
        let lo = self.lower();
        let hi = self.upper();
        std::array::from_fn(|i| 0.5 * (lo[i] + hi[i]))
    }

    fn contains(&self, x: &[f64; 2 * NUM_LINKS]) -> bool {
        let lo = self.lower();
        let hi = self.upper();
        (0..2 * NUM_LINKS).all(|i| lo[i] <= x[i] && x[i] <= hi[i])
    }
}

fn concat(a: [f64; NUM_LINKS], b: [f64; NUM_LINKS]) -> [f64; 2 * NUM_LINKS] {
    std::array::from_fn(|i| if i < NUM_LINKS { a[i] } else { b[i - NUM_LINKS] })
}

fn to_params(x: &[f64; 2 * NUM_LINKS]) -> CongestionParams {
    CongestionParams {
        alpha_prime: std::array::from_fn(|i| x[i]),
        alpha_second: std::array::from_fn(|i| x[NUM_LINKS + i]),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SearchMethod {
    Grid,
    Pattern,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SearchConfig {
    pub budget: usize,
    pub method: SearchMethod,
}

/// One evaluated candidate.
#[derive(Debug, Clone, Serialize)]
pub struct CandidateRecord {
    pub alpha_prime: [f64; NUM_LINKS],
    pub alpha_second: [f64; NUM_LINKS],
    pub objective: f64,
    pub converged: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct BilevelResult {
    pub best_alpha_prime: [f64; NUM_LINKS],
    pub best_alpha_second: [f64; NUM_LINKS],
    pub best_objective: f64,
    pub log: Vec<CandidateRecord>,
    pub evaluations: usize,
}

/// Runs the inner equilibrium solver at the given congestion parameters and
/// measures the sup-norm gap from the reference mass. A `MassOverflow`
/// reports an infinite objective rather than an error.
pub fn bilevel_objective(
    params: CongestionParams,
    reference: &MassTrajectory,
    scenario: &Scenario,
) -> Result<(f64, bool)> {
    let candidate = scenario.with_congestion(params);
    match find_equilibrium(&candidate) {
        Ok(result) => Ok((result.rho.sup_distance(reference), result.converged)),
        Err(Error::MassOverflow { .. }) => Ok((f64::INFINITY, false)),
        Err(other) => Err(other),
    }
}

/// Derivative-free outer search over the box.
pub fn optimize_params(
    bounds: &ParamBox,
    reference: &MassTrajectory,
    scenario: &Scenario,
    cfg: SearchConfig,
) -> Result<BilevelResult> {
    bounds.validate()?;
    if cfg.budget == 0 {
        return Err(Error::InvalidBudget);
    }
    let mut log: Vec<CandidateRecord> = Vec::new();
    let evaluate = |x: &[f64; 2 * NUM_LINKS],
                        log: &mut Vec<CandidateRecord>|
     -> Result<(f64, bool)> {
        debug_assert!(bounds.contains(x));
        let params = to_params(x);
        let (objective, converged) = bilevel_objective(params, reference, scenario)?;
        log.push(CandidateRecord {
            alpha_prime: params.alpha_prime,
            alpha_second: params.alpha_second,
            objective,
            converged,
        });
        Ok((objective, converged))
    };

    let lo = bounds.lower();
    let hi = bounds.upper();
    let active: Vec<usize> = (0..2 * NUM_LINKS).filter(|&i| hi[i] > lo[i]).collect();

    match cfg.method {
        SearchMethod::Grid => {
            if active.is_empty() {
                evaluate(&lo, &mut log)?;
            } else {
                // Per-dimension resolution from the budget.
                let per_dim = (cfg.budget as f64)
                    .powf(1.0 / active.len() as f64)
                    .floor() as usize;
                let per_dim = per_dim.max(1);
                let mut indices = vec![0usize; active.len()];
                loop {
                    if log.len() >= cfg.budget {
                        break;
                    }
                    let mut x = bounds.center();
                    for (slot, &dim) in active.iter().enumerate() {
                        let w = if per_dim == 1 {
                            0.5
                        } else {
                            indices[slot] as f64 / (per_dim - 1) as f64
                        };
                        x[dim] = lo[dim] + w * (hi[dim] - lo[dim]);
                    }
                    evaluate(&x, &mut log)?;
                    // Odometer increment.
                    let mut slot = 0;
                    loop {
                        if slot == indices.len() {
                            break;
                        }
                        indices[slot] += 1;
                        if indices[slot] < per_dim {
                            break;
                        }
                        indices[slot] = 0;
                        slot += 1;
                    }
                    if slot == indices.len() {
                        break;
                    }
                }
            }
        }
        SearchMethod::Pattern => {
            let mut x = bounds.center();
            let (mut best, _) = evaluate(&x, &mut log)?;
            let mut step: [f64; 2 * NUM_LINKS] =
                std::array::from_fn(|i| 0.25 * (hi[i] - lo[i]));
            let min_scale = 1e-10;
            'outer: while log.len() < cfg.budget {
                let mut improved = false;
                for &dim in &active {
                    for sign in [1.0, -1.0] {
                        if log.len() >= cfg.budget {
                            break 'outer;
                        }
                        let mut candidate = x;
                        candidate[dim] =
                            (candidate[dim] + sign * step[dim]).clamp(lo[dim], hi[dim]);
                        if candidate[dim] == x[dim] {
                            continue;
                        }
                        let (objective, _) = evaluate(&candidate, &mut log)?;
                        if objective < best {
                            best = objective;
                            x = candidate;
                            improved = true;
                        }
                    }
                }
                if !improved {
                    for s in step.iter_mut() {
                        *s *= 0.5;
                    }
                    let scale = active
                        .iter()
                        .map(|&i| step[i] / (hi[i] - lo[i]))
                        .fold(0.0, f64::max);
                    if scale < min_scale {
                        break;
                    }
                }
            }
        }
    }

    let best = log
        .iter()
        .filter(|r| r.converged)
        .min_by(|a, b| a.objective.total_cmp(&b.objective))
        .ok_or(Error::NoConvergedCandidate)?;
    Ok(BilevelResult {
        best_alpha_prime: best.alpha_prime,
        best_alpha_second: best.alpha_second,
        best_objective: best.objective,
        evaluations: log.len(),
        log,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn desk_scenario() -> Scenario {
        let mut scenario = Scenario::unit_symmetric(200);
        scenario.congestion.alpha_prime = [0.05; 5];
        scenario
    }

    fn point_box(params: CongestionParams) -> ParamBox {
        ParamBox {
            alpha_prime_lower: params.alpha_prime,
            alpha_prime_upper: params.alpha_prime,
            alpha_second_lower: params.alpha_second,
            alpha_second_upper: params.alpha_second,
        }
    }

    #[test]
    fn self_consistency_objective_is_tiny() {
        let scenario = desk_scenario();
        let reference = find_equilibrium(&scenario).unwrap().rho;
        let (objective, converged) =
            bilevel_objective(scenario.congestion, &reference, &scenario).unwrap();
        assert!(converged);
        assert!(objective <= 2.0 * scenario.solver.tol, "objective {objective}");
    }

    #[test]
    fn zero_inflow_objective_is_zero() {
        let mut scenario = Scenario::unit_symmetric(100);
        scenario.set_throughput(crate::numerics::ThroughputSpec::Constant { level: 0.0 });
        let reference = MassTrajectory::zero(scenario.grid);
        let params = CongestionParams {
            alpha_prime: [0.3; 5],
            alpha_second: [0.1; 5],
        };
        let (objective, converged) = bilevel_objective(params, &reference, &scenario).unwrap();
        assert!(converged);
        assert_eq!(objective, 0.0);
    }

    #[test]
    fn large_offset_changes_the_equilibrium() {
        let scenario = desk_scenario();
        let reference = find_equilibrium(&scenario).unwrap().rho;
        let shifted = CongestionParams {
            alpha_prime: scenario.congestion.alpha_prime,
            alpha_second: [5.0; 5],
        };
        let (objective, _) = bilevel_objective(shifted, &reference, &scenario).unwrap();
        assert!(objective > 0.0);
    }

    #[test]
    fn degenerate_box_is_one_evaluation() {
        let scenario = desk_scenario();
        let reference = find_equilibrium(&scenario).unwrap().rho;
        let bounds = point_box(scenario.congestion);
        for method in [SearchMethod::Grid, SearchMethod::Pattern] {
            let result = optimize_params(
                &bounds,
                &reference,
                &scenario,
                SearchConfig { budget: 50, method },
            )
            .unwrap();
            assert_eq!(result.evaluations, 1);
            assert!(result.best_objective <= 2.0 * scenario.solver.tol);
        }
    }

    #[test]
    fn zero_budget_rejected() {
        let scenario = desk_scenario();
        let reference = MassTrajectory::zero(scenario.grid);
        let bounds = point_box(scenario.congestion);
        assert!(matches!(
            optimize_params(
                &bounds,
                &reference,
                &scenario,
                SearchConfig {
                    budget: 0,
                    method: SearchMethod::Pattern
                }
            ),
            Err(Error::InvalidBudget)
        ));
    }

    #[test]
    fn candidates_stay_in_box_and_log_is_complete() {
        let scenario = desk_scenario();
        let reference = find_equilibrium(&scenario).unwrap().rho;
        let mut bounds = point_box(scenario.congestion);
        bounds.alpha_prime_lower[0] = 0.0;
        bounds.alpha_prime_upper[0] = 0.1;
        bounds.alpha_prime_lower[1] = 0.0;
        bounds.alpha_prime_upper[1] = 0.1;
        let result = optimize_params(
            &bounds,
            &reference,
            &scenario,
            SearchConfig {
                budget: 30,
                method: SearchMethod::Pattern,
            },
        )
        .unwrap();
        assert!(result.evaluations <= 30);
        for record in &result.log {
            for i in 0..NUM_LINKS {
                assert!(record.alpha_prime[i] >= bounds.alpha_prime_lower[i]);
                assert!(record.alpha_prime[i] <= bounds.alpha_prime_upper[i]);
            }
        }
        let best_logged = result
            .log
            .iter()
            .filter(|r| r.converged)
            .map(|r| r.objective)
            .fold(f64::INFINITY, f64::min);
        assert_eq!(result.best_objective, best_logged);
    }
}
