//! Backward value-function computation for a frozen mass trajectory, optimal
//! stay/move decisions per link and grid node, and link/path cost evaluation.
//!
//! Each link admits two candidate behaviors at its tail: stay forever (pay
//! congestion until `T` plus the residual-route penalty) or traverse at
//! constant speed `l_e / (tau - t)` for an arrival time `tau in (t, T]`.
//! Terminal links have the closed-form optimum `tau = T`; inner links
//! minimize over `tau` with the downstream value as continuation.

use crate::error::{Error, Result};
use crate::mass::MassTrajectory;
use crate::network::{Link, Network, Path, NUM_LINKS, NUM_PATHS};
use crate::numerics::{golden_min, CumulativeTrapezoid, SampledFunction, TimeGrid};
use crate::scenario::Scenario;

/// Linear congestion cost `phi_e(rho) = alpha_prime_e * rho + alpha_second_e`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CongestionParams {
    pub alpha_prime: [f64; NUM_LINKS],
    pub alpha_second: [f64; NUM_LINKS],
}

impl CongestionParams {
    pub fn zero() -> Self {
        Self {
            alpha_prime: [0.0; NUM_LINKS],
            alpha_second: [0.0; NUM_LINKS],
        }
    }

    pub fn validate(&self) -> Result<()> {
        for i in 0..NUM_LINKS {
            if self.alpha_prime[i] < 0.0 || self.alpha_second[i] < 0.0 {
                return Err(Error::Validation {
                    rule: format!("congestion parameters for link {} must be >= 0", i + 1),
                });
            }
        }
        Ok(())
    }

    pub fn phi(&self, e: Link, rho: f64) -> f64 {
        self.alpha_prime[e.index()] * rho + self.alpha_second[e.index()]
    }

    /// Upper bound of all `phi_e` on `[0, rho_max]`.
    pub fn phi_max(&self, rho_max: f64) -> f64 {
        (0..NUM_LINKS)
            .map(|i| self.alpha_prime[i] * rho_max + self.alpha_second[i])
            .fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DecisionMode {
    Stay,
    /// Traverse at constant speed `control = l_e / (arrival - t)`.
    Move { arrival: f64, control: f64 },
}

/// Optimal behavior at the tail of a link for a given entry time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkDecision {
    pub mode: DecisionMode,
    pub value: f64,
    /// Both branches within the tie tolerance; the move branch was kept.
    pub tie: bool,
}

/// Sampled value functions for the five links plus the origin value `V0`.
#[derive(Debug, Clone)]
pub struct ValueField {
    pub grid: TimeGrid,
    pub link_values: [SampledFunction; NUM_LINKS],
    pub decisions: [Vec<LinkDecision>; NUM_LINKS],
    pub origin_value: SampledFunction,
    /// First link chosen at the origin per node (`E1` preferred on ties).
    pub origin_choice: Vec<Link>,
    pub origin_tie: Vec<bool>,
}

impl ValueField {
    pub fn decision(&self, e: Link, k: usize) -> &LinkDecision {
        &self.decisions[e.index()][k]
    }

    /// Decision governing an entry at arbitrary time `t`: the one recorded at
    /// the nearest grid node.
    pub fn decision_near(&self, e: Link, t: f64) -> &LinkDecision {
        &self.decisions[e.index()][self.grid.nearest(t)]
    }

    /// All `(link, node)` pairs where the two branches tied.
    pub fn ties(&self) -> Vec<(Link, usize)> {
        let mut out = Vec::new();
        for e in Link::ALL {
            for (k, d) in self.decisions[e.index()].iter().enumerate() {
                if d.tie {
                    out.push((e, k));
                }
            }
        }
        out
    }
}

/// Precomputed congestion integrals and cost terms for one `(rho, scenario)`.
pub struct CostModel<'a> {
    network: &'a Network,
    alpha: f64,
    grid: TimeGrid,
    phi_cum: [CumulativeTrapezoid; NUM_LINKS],
}

impl<'a> CostModel<'a> {
    pub fn new(rho: &MassTrajectory, scenario: &'a Scenario) -> Self {
        let grid = rho.grid();
        let phi_cum = std::array::from_fn(|i| {
            let e = Link::from_index(i);
            let phi = SampledFunction::from_fn(grid, |t| {
                scenario.congestion.phi(e, rho.eval(t)[i])
            });
            CumulativeTrapezoid::new(&phi)
        });
        Self {
            network: &scenario.network,
            alpha: scenario.alpha,
            grid,
            phi_cum,
        }
    }

    pub fn congestion_integral(&self, e: Link, a: f64, b: f64) -> f64 {
        self.phi_cum[e.index()].integral(a, b)
    }

    /// Stay branch: congestion until `T` plus the residual-route penalty.
    pub fn stay_cost(&self, e: Link, t: f64) -> f64 {
        self.congestion_integral(e, t, self.grid.horizon())
            + self.alpha * self.network.penalty_length(e)
    }

    /// Move branch without continuation: kinetic effort plus congestion.
    pub fn move_cost(&self, e: Link, t: f64, arrival: f64) -> Result<f64> {
        if arrival <= t {
            return Err(Error::InvalidDecision { entry: t, arrival });
        }
        let l = self.network.length(e);
        Ok(l * l / (2.0 * (arrival - t)) + self.congestion_integral(e, t, arrival))
    }
}

/// Cost incurred on link `e` entered at `t` under a fixed decision.
pub fn link_cost(
    e: Link,
    t: f64,
    decision: &LinkDecision,
    rho: &MassTrajectory,
    scenario: &Scenario,
) -> Result<f64> {
    let model = CostModel::new(rho, scenario);
    match decision.mode {
        DecisionMode::Stay => Ok(model.stay_cost(e, t)),
        DecisionMode::Move { arrival, .. } => model.move_cost(e, t, arrival),
    }
}

struct LinkSolver<'a, 'b> {
    model: &'b CostModel<'a>,
    tie_tolerance: f64,
}

impl LinkSolver<'_, '_> {
    /// Terminal links (`e4`, `e5`): the only useful arrival is `T`.
    fn terminal(&self, e: Link) -> (Vec<f64>, Vec<LinkDecision>) {
        let grid = self.model.grid;
        let horizon = grid.horizon();
        let l = self.model.network.length(e);
        let alpha_pen = self.model.alpha * self.model.network.penalty_length(e);
        let mut values = Vec::with_capacity(grid.len());
        let mut decisions = Vec::with_capacity(grid.len());
        for k in 0..grid.len() {
            let t = grid.node(k);
            let congestion = self.model.congestion_integral(e, t, horizon);
            let stay = alpha_pen + congestion;
            if k == grid.steps() {
                values.push(stay);
                decisions.push(LinkDecision {
                    mode: DecisionMode::Stay,
                    value: stay,
                    tie: false,
                });
                continue;
            }
            let kinetic = l * l / (2.0 * (horizon - t));
            let mv = kinetic + congestion;
            let tie = (stay - mv).abs() <= self.tie_tolerance;
            if mv <= stay || tie {
                values.push(mv.min(stay));
                decisions.push(LinkDecision {
                    mode: DecisionMode::Move {
                        arrival: horizon,
                        control: l / (horizon - t),
                    },
                    value: mv.min(stay),
                    tie,
                });
            } else {
                values.push(stay);
                decisions.push(LinkDecision {
                    mode: DecisionMode::Stay,
                    value: stay,
                    tie,
                });
            }
        }
        (values, decisions)
    }

    /// Inner links: minimize over the arrival time with a downstream
    /// continuation. Grid scan to bracket, then golden-section refinement on
    /// the two cells adjacent to the best node (the objective is convex per
    /// cell: linearly interpolated terms plus the convex kinetic term).
    fn inner(
        &self,
        e: Link,
        continuation: impl Fn(f64) -> f64,
        continuation_nodes: &[f64],
        // Interior kink of the continuation within `(lo, hi)`, if any: the
        // min of two interpolants is concave there and golden section alone
        // could settle on the wrong side.
        continuation_kink: impl Fn(f64, f64) -> Option<f64>,
    ) -> (Vec<f64>, Vec<LinkDecision>) {
        let grid = self.model.grid;
        let horizon = grid.horizon();
        let n = grid.steps();
        let l = self.model.network.length(e);
        let x_tol = (grid.dt() * 1e-7).max(1e-13);
        let mut values = Vec::with_capacity(grid.len());
        let mut decisions = Vec::with_capacity(grid.len());
        for k in 0..grid.len() {
            let t = grid.node(k);
            let stay = self.model.stay_cost(e, t);
            if k == n {
                values.push(stay);
                decisions.push(LinkDecision {
                    mode: DecisionMode::Stay,
                    value: stay,
                    tie: false,
                });
                continue;
            }
            let objective = |tau: f64| {
                l * l / (2.0 * (tau - t))
                    + self.model.congestion_integral(e, t, tau)
                    + continuation(tau)
            };
            let mut best_j = k + 1;
            let mut best = f64::INFINITY;
            for j in k + 1..=n {
                let tau = grid.node(j);
                let obj = l * l / (2.0 * (tau - t))
                    + self.model.congestion_integral(e, t, tau)
                    + continuation_nodes[j];
                if obj < best {
                    best = obj;
                    best_j = j;
                }
            }
            let mut best_tau = grid.node(best_j);
            let refine = |lo: f64, hi: f64, best: &mut f64, best_tau: &mut f64| {
                let brackets = match continuation_kink(lo, hi) {
                    Some(kink) => vec![(lo, kink), (kink, hi)],
                    None => vec![(lo, hi)],
                };
                for (a, b) in brackets {
                    let (x, fx) = golden_min(&objective, a, b, x_tol);
                    if fx < *best {
                        *best = fx;
                        *best_tau = x;
                    }
                }
            };
            let lo = if best_j == k + 1 {
                t + 1e-12 * horizon.max(1.0)
            } else {
                grid.node(best_j - 1)
            };
            refine(lo, grid.node(best_j), &mut best, &mut best_tau);
            if best_j < n {
                refine(
                    grid.node(best_j),
                    grid.node(best_j + 1),
                    &mut best,
                    &mut best_tau,
                );
            }
            let tie = (stay - best).abs() <= self.tie_tolerance;
            if best <= stay || tie {
                let value = best.min(stay);
                values.push(value);
                decisions.push(LinkDecision {
                    mode: DecisionMode::Move {
                        arrival: best_tau,
                        control: l / (best_tau - t),
                    },
                    value,
                    tie,
                });
            } else {
                values.push(stay);
                decisions.push(LinkDecision {
                    mode: DecisionMode::Stay,
                    value: stay,
                    tie,
                });
            }
        }
        (values, decisions)
    }
}

/// Computes all link value functions and `V0` backward through the network:
/// `e4, e5 -> e3 -> e1, e2 -> V0`.
pub fn value_field(rho: &MassTrajectory, scenario: &Scenario) -> Result<ValueField> {
    let grid = rho.grid();
    let model = CostModel::new(rho, scenario);
    let solver = LinkSolver {
        model: &model,
        tie_tolerance: scenario.solver.tie_tolerance,
    };

    let (v4, d4) = solver.terminal(Link::E4);
    let (v5, d5) = solver.terminal(Link::E5);

    let interp = |vals: &[f64], tau: f64| -> f64 {
        let tau = tau.clamp(0.0, grid.horizon());
        let c = grid.cell(tau);
        let w = (tau - grid.node(c)) / grid.dt();
        vals[c] * (1.0 - w) + vals[c + 1] * w
    };

    let (v3, d3) = solver.inner(Link::E3, |tau| interp(&v5, tau), &v5, |_, _| None);

    let cont1_nodes: Vec<f64> = (0..grid.len()).map(|k| v3[k].min(v4[k])).collect();
    // Crossing of the two interpolants strictly inside (lo, hi); brackets
    // never span more than one grid cell.
    let cont1_kink = |lo: f64, hi: f64| -> Option<f64> {
        let c = grid.cell(0.5 * (lo + hi));
        let d0 = v3[c] - v4[c];
        let d1 = v3[c + 1] - v4[c + 1];
        if d0 * d1 >= 0.0 {
            return None;
        }
        let tau = grid.node(c) + grid.dt() * d0 / (d0 - d1);
        (lo < tau && tau < hi).then_some(tau)
    };
    let (v1, d1) = solver.inner(
        Link::E1,
        |tau| interp(&v3, tau).min(interp(&v4, tau)),
        &cont1_nodes,
        cont1_kink,
    );
    let (v2, d2) = solver.inner(Link::E2, |tau| interp(&v5, tau), &v5, |_, _| None);

    let mut v0 = Vec::with_capacity(grid.len());
    let mut origin_choice = Vec::with_capacity(grid.len());
    let mut origin_tie = Vec::with_capacity(grid.len());
    for k in 0..grid.len() {
        let tie = (v1[k] - v2[k]).abs() <= scenario.solver.tie_tolerance;
        // e1 preferred on ties.
        if v1[k] <= v2[k] || tie {
            v0.push(v1[k].min(v2[k]));
            origin_choice.push(Link::E1);
        } else {
            v0.push(v2[k]);
            origin_choice.push(Link::E2);
        }
        origin_tie.push(tie);
    }

    let sf = |vals: Vec<f64>| SampledFunction::new(grid, vals).expect("node count matches grid");
    Ok(ValueField {
        grid,
        link_values: [sf(v1), sf(v2), sf(v3), sf(v4), sf(v5)],
        decisions: [d1, d2, d3, d4, d5],
        origin_value: sf(v0),
        origin_choice,
        origin_tie,
    })
}

pub(crate) fn path_costs_with_model(
    model: &CostModel<'_>,
    field: &ValueField,
    t: f64,
) -> [f64; NUM_PATHS] {
    let horizon = model.grid.horizon();
    let mut costs = [0.0; NUM_PATHS];
    for p in Path::ALL {
        let mut total = 0.0;
        let mut entry = t.clamp(0.0, horizon);
        for &e in p.links() {
            let decision = field.decision_near(e, entry);
            match decision.mode {
                DecisionMode::Stay => {
                    // The agent never leaves this link; downstream links of
                    // the path contribute nothing.
                    total += model.stay_cost(e, entry);
                    break;
                }
                DecisionMode::Move { control, .. } => {
                    if entry >= horizon {
                        total += model.stay_cost(e, entry);
                        break;
                    }
                    let l = model.network.length(e);
                    let arrival = entry + l / control;
                    if arrival > horizon {
                        // The committed speed cannot complete the link by T:
                        // effort and congestion until T, then the penalty.
                        total += 0.5 * control * control * (horizon - entry)
                            + model.congestion_integral(e, entry, horizon)
                            + model.alpha * model.network.penalty_length(e);
                        break;
                    }
                    total += l * l / (2.0 * (arrival - entry))
                        + model.congestion_integral(e, entry, arrival);
                    entry = arrival;
                }
            }
        }
        costs[p.index()] = total;
    }
    costs
}

/// Expected cost per path for an agent reaching the origin at `t`, composing
/// the recorded per-link decisions along each path.
pub fn path_cost_vector(
    t: f64,
    field: &ValueField,
    rho: &MassTrajectory,
    scenario: &Scenario,
) -> [f64; NUM_PATHS] {
    let model = CostModel::new(rho, scenario);
    path_costs_with_model(&model, field, t)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::Scenario;

    fn unit_scenario(n: usize) -> Scenario {
        Scenario::unit_symmetric(n)
    }

    fn zero_mass(scenario: &Scenario) -> MassTrajectory {
        MassTrajectory::zero(scenario.grid)
    }

    #[test]
    fn link_cost_examples() {
        let scenario = unit_scenario(200);
        let rho = zero_mass(&scenario);
        // phi = 0, alpha = 1, unit lengths: stay on e4 costs the penalty only.
        let stay = LinkDecision {
            mode: DecisionMode::Stay,
            value: 0.0,
            tie: false,
        };
        let c = link_cost(Link::E4, 0.3, &stay, &rho, &scenario).unwrap();
        assert!((c - 1.0).abs() < 1e-12);

        let mv = LinkDecision {
            mode: DecisionMode::Move {
                arrival: 2.0,
                control: 0.5,
            },
            value: 0.0,
            tie: false,
        };
        let c = link_cost(Link::E4, 0.0, &mv, &rho, &scenario).unwrap();
        assert!((c - 0.25).abs() < 1e-12);

        // Constant phi = 0.5: kinetic 0.5 plus integral 0.5 over [0, 1].
        let mut scenario = unit_scenario(200);
        scenario.congestion.alpha_second = [0.5; 5];
        let rho = zero_mass(&scenario);
        let mv = LinkDecision {
            mode: DecisionMode::Move {
                arrival: 1.0,
                control: 1.0,
            },
            value: 0.0,
            tie: false,
        };
        let c = link_cost(Link::E4, 0.0, &mv, &rho, &scenario).unwrap();
        assert!((c - 1.0).abs() < 1e-12);

        let bad = LinkDecision {
            mode: DecisionMode::Move {
                arrival: 0.5,
                control: 1.0,
            },
            value: 0.0,
            tie: false,
        };
        assert!(matches!(
            link_cost(Link::E4, 0.5, &bad, &rho, &scenario),
            Err(Error::InvalidDecision { .. })
        ));
    }

    #[test]
    fn unit_symmetric_values() {
        let scenario = unit_scenario(2000);
        let rho = zero_mass(&scenario);
        let field = value_field(&rho, &scenario).unwrap();

        // V_e4(0) = min{1, 1/(2*2)} = 0.25, move with arrival T.
        let v4 = field.link_values[Link::E4.index()].value_at(0);
        assert!((v4 - 0.25).abs() < 1e-9);
        match field.decision(Link::E4, 0).mode {
            DecisionMode::Move { arrival, .. } => assert!((arrival - 2.0).abs() < 1e-12),
            _ => panic!("expected move"),
        }

        // V_e3(0): split length 2 evenly over [0, 2], optimal tau = 1.
        let v3 = field.link_values[Link::E3.index()].value_at(0);
        assert!((v3 - 1.0).abs() < 1e-6, "v3 = {v3}");
        match field.decision(Link::E3, 0).mode {
            DecisionMode::Move { arrival, .. } => assert!((arrival - 1.0).abs() < 1e-3),
            _ => panic!("expected move"),
        }

        // Symmetric network: V0(0) = 1 with e1 and e2 tied.
        let v0 = field.origin_value.value_at(0);
        assert!((v0 - 1.0).abs() < 1e-6, "v0 = {v0}");
        assert!(field.origin_tie[0]);
        assert_eq!(field.origin_choice[0], Link::E1);
    }

    #[test]
    fn terminal_values_equal_penalty() {
        let scenario = unit_scenario(100);
        let rho = zero_mass(&scenario);
        let field = value_field(&rho, &scenario).unwrap();
        let n = scenario.grid.steps();
        for e in Link::ALL {
            let expected = scenario.alpha * scenario.network.penalty_length(e);
            assert_eq!(field.link_values[e.index()].value_at(n), expected);
        }
    }

    #[test]
    fn stay_always_feasible_bound() {
        let mut scenario = unit_scenario(150);
        scenario.congestion.alpha_second = [0.3, 0.1, 0.2, 0.4, 0.05];
        let rho = zero_mass(&scenario);
        let field = value_field(&rho, &scenario).unwrap();
        let model = CostModel::new(&rho, &scenario);
        for e in Link::ALL {
            for k in 0..scenario.grid.len() {
                let t = scenario.grid.node(k);
                let v = field.link_values[e.index()].value_at(k);
                assert!(v <= model.stay_cost(e, t) + 1e-12);
            }
        }
    }

    #[test]
    fn monotone_in_alpha_second() {
        let scenario_lo = unit_scenario(120);
        let mut scenario_hi = unit_scenario(120);
        scenario_hi.congestion.alpha_second = [0.2; 5];
        let rho = zero_mass(&scenario_lo);
        let lo = value_field(&rho, &scenario_lo).unwrap();
        let hi = value_field(&rho, &scenario_hi).unwrap();
        for e in Link::ALL {
            for k in 0..scenario_lo.grid.len() {
                assert!(
                    hi.link_values[e.index()].value_at(k)
                        >= lo.link_values[e.index()].value_at(k) - 1e-12
                );
            }
        }
    }

    #[test]
    fn path_costs_symmetric_scenario() {
        let scenario = unit_scenario(2000);
        let rho = zero_mass(&scenario);
        let field = value_field(&rho, &scenario).unwrap();
        let j = path_cost_vector(0.0, &field, &rho, &scenario);
        assert!((j[0] - 1.0).abs() < 1e-6, "j1 = {}", j[0]);
        assert!((j[1] - 1.0).abs() < 1e-6, "j2 = {}", j[1]);
        assert!(j[2] > 1.0, "j3 = {}", j[2]);
    }

    #[test]
    fn path_costs_at_horizon_are_stay_costs() {
        let scenario = unit_scenario(100);
        let rho = zero_mass(&scenario);
        let field = value_field(&rho, &scenario).unwrap();
        let j = path_cost_vector(2.0, &field, &rho, &scenario);
        for (p, cost) in Path::ALL.iter().zip(j) {
            let first = p.links()[0];
            let expected = scenario.alpha * scenario.network.penalty_length(first);
            assert!((cost - expected).abs() < 1e-12);
        }
    }

    #[test]
    fn move_costs_independent_of_large_alpha() {
        let scenario = unit_scenario(2000);
        let mut expensive = unit_scenario(2000);
        expensive.alpha = 100.0;
        let rho = zero_mass(&scenario);
        let f1 = value_field(&rho, &scenario).unwrap();
        let f2 = value_field(&rho, &expensive).unwrap();
        let j1 = path_cost_vector(0.0, &f1, &rho, &scenario);
        let j2 = path_cost_vector(0.0, &f2, &rho, &expensive);
        // Once moving is optimal everywhere the kinetic costs do not read alpha.
        assert!((j1[0] - j2[0]).abs() < 1e-6);
        assert!((j1[1] - j2[1]).abs() < 1e-6);
    }

    #[test]
    fn move_controls_bounded() {
        let mut scenario = unit_scenario(300);
        scenario.congestion.alpha_prime = [0.1; 5];
        scenario.congestion.alpha_second = [0.2; 5];
        let rho = zero_mass(&scenario);
        let field = value_field(&rho, &scenario).unwrap();
        for e in Link::ALL {
            let bound = scenario.control_bound(e);
            for d in &field.decisions[e.index()] {
                if let DecisionMode::Move { control, .. } = d.mode {
                    assert!(
                        control <= bound + 1e-6,
                        "control {control} exceeds bound {bound} on {e:?}"
                    );
                }
            }
        }
    }
}
