//! Scenario ingestion: the single JSON document describing one experiment,
//! validated against every module-level rule.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::{Link, Network, NUM_LINKS, NUM_PATHS};
use crate::numerics::{sample_throughput, SampledFunction, ThroughputSpec, TimeGrid};
use crate::value::CongestionParams;

/// Fixed-point solver configuration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverConfig {
    /// Sup-norm residual below which the iteration stops.
    pub tol: f64,
    pub max_iter: usize,
    /// Damping factor in `(0, 1]`; halved on stall, floored at 1/64.
    pub damping: f64,
    /// Target accuracy of the epsilon-partition machinery.
    pub epsilon: f64,
    /// Cost-units tolerance below which the two branches count as tied.
    pub tie_tolerance: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            tol: 1e-6,
            max_iter: 200,
            damping: 1.0,
            epsilon: 1e-2,
            tie_tolerance: 1e-6,
        }
    }
}

impl SolverConfig {
    fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0) {
            return Err(Error::Validation {
                rule: "solver.tol must be positive".into(),
            });
        }
        if self.max_iter == 0 {
            return Err(Error::Validation {
                rule: "solver.max_iter must be at least 1".into(),
            });
        }
        if !(self.damping > 0.0 && self.damping <= 1.0) {
            return Err(Error::Validation {
                rule: "solver.damping must lie in (0, 1]".into(),
            });
        }
        if !(self.epsilon > 0.0) {
            return Err(Error::Validation {
                rule: "solver.epsilon must be positive".into(),
            });
        }
        if !(self.tie_tolerance >= 0.0) {
            return Err(Error::Validation {
                rule: "solver.tie_tolerance must be nonnegative".into(),
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct NetworkSpec {
    lengths: [f64; NUM_LINKS],
    capacities: [f64; NUM_LINKS],
}

/// On-disk scenario schema; every key is fixed, unknown keys are rejected.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    network: NetworkSpec,
    horizon: f64,
    grid_points: usize,
    throughput: ThroughputSpec,
    beta: f64,
    eta: f64,
    alpha: f64,
    alpha_prime: [f64; NUM_LINKS],
    alpha_second: [f64; NUM_LINKS],
    rho_max: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    z0: Option<[f64; NUM_PATHS]>,
    #[serde(skip_serializing_if = "Option::is_none")]
    solver: Option<SolverConfig>,
}

/// A fully validated problem instance shared by all solver modules.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub network: Network,
    pub grid: TimeGrid,
    pub throughput: ThroughputSpec,
    pub lambda: SampledFunction,
    pub lambda_dot: SampledFunction,
    pub lambda_max: f64,
    pub beta: f64,
    pub eta: f64,
    pub alpha: f64,
    pub congestion: CongestionParams,
    pub rho_max: f64,
    pub z0: [f64; NUM_PATHS],
    pub solver: SolverConfig,
}

impl Scenario {
    pub fn from_file(file: ScenarioFile) -> Result<Self> {
        if !(file.horizon > 0.0) || !file.horizon.is_finite() {
            return Err(Error::Validation {
                rule: "horizon must be positive and finite".into(),
            });
        }
        if file.grid_points < 2 {
            return Err(Error::Validation {
                rule: "grid_points must be at least 2".into(),
            });
        }
        if file.beta < 0.0 {
            return Err(Error::Validation {
                rule: "beta must be nonnegative".into(),
            });
        }
        if !(file.eta > 0.0) {
            return Err(Error::Validation {
                rule: "eta must be positive".into(),
            });
        }
        if !(file.alpha > 0.0) {
            return Err(Error::Validation {
                rule: "alpha must be positive".into(),
            });
        }
        if !(file.rho_max > 0.0) {
            return Err(Error::Validation {
                rule: "rho_max must be positive".into(),
            });
        }
        let network = Network::new(file.network.lengths, file.network.capacities)?;
        let grid = TimeGrid::new(file.horizon, file.grid_points)?;
        let (lambda, lambda_dot) =
            sample_throughput(&file.throughput, grid).map_err(|e| match e {
                Error::NegativeThroughput { t, value } => Error::Validation {
                    rule: format!("throughput: lambda(t) >= 0 violated at t={t} (lambda={value})"),
                },
                Error::RateViolation { t, value } => Error::Validation {
                    rule: format!(
                        "throughput: lambda + lambda_dot >= 0 violated at t={t} (value={value})"
                    ),
                },
                other => other,
            })?;
        let lambda_max = lambda.max_value();
        if lambda_max > file.rho_max {
            return Err(Error::Validation {
                rule: format!(
                    "throughput: lambda must stay within [0, rho_max] (max lambda {lambda_max} > rho_max {})",
                    file.rho_max
                ),
            });
        }
        let congestion = CongestionParams {
            alpha_prime: file.alpha_prime,
            alpha_second: file.alpha_second,
        };
        congestion.validate()?;
        let solver = file.solver.unwrap_or_default();
        solver.validate()?;
        let z0 = match file.z0 {
            Some(z0) => {
                for (i, &v) in z0.iter().enumerate() {
                    if v < 0.0 {
                        return Err(Error::Validation {
                            rule: format!("z0 component {} must be nonnegative", i + 1),
                        });
                    }
                }
                z0
            }
            None => [lambda.value_at(0) / NUM_PATHS as f64; NUM_PATHS],
        };
        Ok(Self {
            network,
            grid,
            throughput: file.throughput,
            lambda,
            lambda_dot,
            lambda_max,
            beta: file.beta,
            eta: file.eta,
            alpha: file.alpha,
            congestion,
            rho_max: file.rho_max,
            z0,
            solver,
        })
    }

    /// Largest congestion cost any link can charge.
    pub fn phi_max(&self) -> f64 {
        self.congestion.phi_max(self.rho_max)
    }

    /// Bound on any optimal traversal speed on `e`: a faster crossing would
    /// already cost more in effort than giving up entirely.
    pub fn control_bound(&self, e: Link) -> f64 {
        let stay_max = self.alpha * self.network.penalty_length(e)
            + self.grid.horizon() * self.phi_max();
        2.0 * stay_max / self.network.length(e)
    }

    /// Time-Lipschitz bound for every link value function, independent of the
    /// mass trajectory: the worst branch slope `B^2/2 + phi_max`.
    pub fn value_slope_bound(&self) -> f64 {
        let worst_control = Link::ALL
            .iter()
            .map(|&e| self.control_bound(e))
            .fold(0.0, f64::max);
        0.5 * worst_control * worst_control + self.phi_max()
    }

    /// Lipschitz bound for every mass component: inflow plus total capacity.
    pub fn mass_slope_bound(&self) -> f64 {
        self.lambda_max + self.network.capacities().iter().sum::<f64>()
    }

    /// Same scenario with the congestion parameters replaced (the bi-level
    /// outer variable).
    pub fn with_congestion(&self, congestion: CongestionParams) -> Self {
        let mut scenario = self.clone();
        scenario.congestion = congestion;
        scenario
    }

    /// Replaces the throughput family and resamples; panics on invalid specs
    /// (intended for programmatic construction).
    pub fn set_throughput(&mut self, spec: ThroughputSpec) {
        let (lambda, lambda_dot) =
            sample_throughput(&spec, self.grid).expect("throughput spec must be valid");
        self.lambda_max = lambda.max_value();
        self.lambda = lambda;
        self.lambda_dot = lambda_dot;
        self.throughput = spec;
        self.z0 = [self.lambda.value_at(0) / NUM_PATHS as f64; NUM_PATHS];
    }

    /// The unit symmetric desk scenario: unit lengths, constant `lambda = 1`,
    /// `T = 2`, `alpha = 1`, no congestion cost.
    pub fn unit_symmetric(grid_points: usize) -> Self {
        Scenario::from_file(ScenarioFile {
            network: NetworkSpec {
                lengths: [1.0; NUM_LINKS],
                capacities: [10.0; NUM_LINKS],
            },
            horizon: 2.0,
            grid_points,
            throughput: ThroughputSpec::Constant { level: 1.0 },
            beta: 1.0,
            eta: 1.0,
            alpha: 1.0,
            alpha_prime: [0.0; NUM_LINKS],
            alpha_second: [0.0; NUM_LINKS],
            rho_max: 100.0,
            z0: None,
            solver: None,
        })
        .expect("unit scenario is valid")
    }
}

/// Parses and validates a scenario from a JSON string.
pub fn parse_scenario_str(text: &str) -> Result<Scenario> {
    let file: ScenarioFile = serde_json::from_str(text).map_err(|e| {
        if e.is_syntax() || e.is_eof() {
            Error::Parse(e.to_string())
        } else {
            Error::Schema(e.to_string())
        }
    })?;
    Scenario::from_file(file)
}

/// Parses and validates a scenario file.
pub fn parse_scenario(path: impl AsRef<Path>) -> Result<Scenario> {
    let text = std::fs::read_to_string(path)?;
    parse_scenario_str(&text)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn minimal_json() -> serde_json::Value {
        serde_json::json!({
            "network": {"lengths": [1.0, 1.0, 1.0, 1.0, 1.0],
                        "capacities": [10.0, 10.0, 10.0, 10.0, 10.0]},
            "horizon": 2.0,
            "grid_points": 2000,
            "throughput": {"kind": "constant", "level": 1.0},
            "beta": 1.0,
            "eta": 1.0,
            "alpha": 1.0,
            "alpha_prime": [0.0, 0.0, 0.0, 0.0, 0.0],
            "alpha_second": [0.0, 0.0, 0.0, 0.0, 0.0],
            "rho_max": 100.0
        })
    }

    #[test]
    fn minimal_document_parses() {
        let s = parse_scenario_str(&minimal_json().to_string()).unwrap();
        assert_eq!(s.grid.steps(), 2000);
        assert_eq!(s.z0, [1.0 / 3.0; 3]);
        assert_eq!(s.solver, SolverConfig::default());
    }

    #[test]
    fn missing_horizon_is_schema_error() {
        let mut doc = minimal_json();
        doc.as_object_mut().unwrap().remove("horizon");
        match parse_scenario_str(&doc.to_string()) {
            Err(Error::Schema(msg)) => assert!(msg.contains("horizon"), "{msg}"),
            other => panic!("expected Schema error, got {other:?}"),
        }
    }

    #[test]
    fn unknown_key_is_schema_error() {
        let mut doc = minimal_json();
        doc.as_object_mut()
            .unwrap()
            .insert("mystery".into(), 1.0.into());
        assert!(matches!(
            parse_scenario_str(&doc.to_string()),
            Err(Error::Schema(_))
        ));
    }

    #[test]
    fn malformed_json_is_parse_error() {
        assert!(matches!(
            parse_scenario_str("{not json"),
            Err(Error::Parse(_))
        ));
    }

    #[test]
    fn rate_violation_named_in_validation() {
        let mut doc = minimal_json();
        doc["throughput"] =
            serde_json::json!({"kind": "trapezoid_smooth", "level": 1.0, "ramp": 0.5});
        doc["grid_points"] = 400.into();
        match parse_scenario_str(&doc.to_string()) {
            Err(Error::Validation { rule }) => {
                assert!(rule.contains("lambda + lambda_dot"), "{rule}")
            }
            other => panic!("expected Validation error, got {other:?}"),
        }
    }

    #[test]
    fn derived_bounds() {
        let s = Scenario::unit_symmetric(100);
        assert_eq!(s.phi_max(), 0.0);
        // B_e4 = 2 * (1 * 1 + 0) / 1 = 2; worst link is e1/e2/e3 with penalty 2.
        assert_eq!(s.control_bound(Link::E4), 2.0);
        assert_eq!(s.control_bound(Link::E1), 4.0);
        assert_eq!(s.mass_slope_bound(), 1.0 + 50.0);
        assert_eq!(s.value_slope_bound(), 8.0);
    }
}
