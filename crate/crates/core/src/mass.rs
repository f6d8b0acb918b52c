//! Local decision function, link flows, mass-conservation right-hand side and
//! forward integration of the link masses.

use crate::error::{Error, Result};
use crate::network::{Link, Network, Node, NUM_LINKS, NUM_PATHS};
use crate::numerics::{rk4_step, SampledFunction, TimeGrid};
use crate::preference::PreferenceTrajectory;
use crate::scenario::Scenario;
use crate::value::{DecisionMode, ValueField};

/// Time-sampled masses on the five links.
#[derive(Debug, Clone, PartialEq)]
pub struct MassTrajectory {
    grid: TimeGrid,
    rho: Vec<[f64; NUM_LINKS]>,
}

impl MassTrajectory {
    pub fn new(grid: TimeGrid, rho: Vec<[f64; NUM_LINKS]>) -> Result<Self> {
        if rho.len() != grid.len() {
            return Err(Error::Validation {
                rule: format!(
                    "mass trajectory has {} samples for {} grid nodes",
                    rho.len(),
                    grid.len()
                ),
            });
        }
        Ok(Self { grid, rho })
    }

    /// The empty-network trajectory, `rho = 0`.
    pub fn zero(grid: TimeGrid) -> Self {
        Self {
            grid,
            rho: vec![[0.0; NUM_LINKS]; grid.len()],
        }
    }

    pub fn grid(&self) -> TimeGrid {
        self.grid
    }

    pub fn samples(&self) -> &[[f64; NUM_LINKS]] {
        &self.rho
    }

    pub fn at(&self, k: usize) -> [f64; NUM_LINKS] {
        self.rho[k]
    }

    pub fn eval(&self, t: f64) -> [f64; NUM_LINKS] {
        let t = t.clamp(0.0, self.grid.horizon());
        let c = self.grid.cell(t);
        let w = (t - self.grid.node(c)) / self.grid.dt();
        std::array::from_fn(|i| self.rho[c][i] * (1.0 - w) + self.rho[c + 1][i] * w)
    }

    pub fn link_samples(&self, e: Link) -> SampledFunction {
        let values = self.rho.iter().map(|r| r[e.index()]).collect();
        SampledFunction::new(self.grid, values).expect("lengths match")
    }

    /// Sup-norm distance over links and grid nodes.
    pub fn sup_distance(&self, other: &MassTrajectory) -> f64 {
        self.rho
            .iter()
            .zip(&other.rho)
            .flat_map(|(a, b)| a.iter().zip(b).map(|(x, y)| (x - y).abs()))
            .fold(0.0, f64::max)
    }

    pub fn max_mass(&self) -> f64 {
        self.rho
            .iter()
            .flat_map(|r| r.iter().cloned())
            .fold(0.0, f64::max)
    }

    /// Largest finite-difference slope over links and adjacent nodes.
    pub fn max_slope(&self) -> f64 {
        let dt = self.grid.dt();
        self.rho
            .windows(2)
            .flat_map(|w| (0..NUM_LINKS).map(move |i| (w[1][i] - w[0][i]).abs() / dt))
            .fold(0.0, f64::max)
    }

    /// Checks membership in the fixed-point space: range `[0, rho_max]`,
    /// slopes within `slope_bound`, and an empty network at `t = 0`.
    pub fn check_in_space(&self, rho_max: f64, slope_bound: f64) -> Result<()> {
        if self.rho[0] != [0.0; NUM_LINKS] {
            return Err(Error::Validation {
                rule: "mass trajectory must start empty".into(),
            });
        }
        for (k, r) in self.rho.iter().enumerate() {
            for (i, &v) in r.iter().enumerate() {
                if !(0.0..=rho_max).contains(&v) {
                    return Err(Error::MassOverflow {
                        link: i + 1,
                        t: self.grid.node(k),
                        value: v,
                        rho_max,
                    });
                }
            }
        }
        let slope = self.max_slope();
        if slope > slope_bound * (1.0 + 1e-9) {
            return Err(Error::Validation {
                rule: format!("mass slope {slope} exceeds the Lipschitz bound {slope_bound}"),
            });
        }
        Ok(())
    }
}

/// Per-node outflow split fractions proportional to `y = A z`; uniform on
/// zero flow.
pub fn local_decision(z: [f64; NUM_PATHS], network: &Network) -> Result<[f64; NUM_LINKS]> {
    let y = network.path_flow(z)?;
    let mut g = [0.0; NUM_LINKS];
    for node in [Node::Origin, Node::V1, Node::V2] {
        let out = Network::out_links(node);
        let total: f64 = out.iter().map(|&e| y[e.index()]).sum();
        for &e in out {
            g[e.index()] = if total > 0.0 {
                y[e.index()] / total
            } else {
                1.0 / out.len() as f64
            };
        }
    }
    Ok(g)
}

/// Per-link controls and tie weights frozen from a value field, evaluated by
/// nearest grid node. `move_weight` is the fraction of agents actually
/// traversing: 1 on untied nodes, the split's move share on ties.
#[derive(Debug, Clone)]
pub struct Policy {
    grid: TimeGrid,
    controls: [Vec<f64>; NUM_LINKS],
    move_weights: [Vec<f64>; NUM_LINKS],
}

impl Policy {
    pub fn new(
        grid: TimeGrid,
        controls: [Vec<f64>; NUM_LINKS],
        move_weights: [Vec<f64>; NUM_LINKS],
    ) -> Self {
        Self {
            grid,
            controls,
            move_weights,
        }
    }

    /// Policy taking every recorded decision at full weight.
    pub fn from_field(field: &ValueField) -> Self {
        Self::with_move_share(field, |_, _| 1.0)
    }

    /// Policy whose tied nodes traverse with the given move share.
    pub fn with_move_share(field: &ValueField, move_share: impl Fn(Link, usize) -> f64) -> Self {
        let controls = std::array::from_fn(|i| {
            field.decisions[i]
                .iter()
                .map(|d| match d.mode {
                    DecisionMode::Stay => 0.0,
                    DecisionMode::Move { control, .. } => control,
                })
                .collect()
        });
        let move_weights = std::array::from_fn(|i| {
            field.decisions[i]
                .iter()
                .enumerate()
                .map(|(k, d)| if d.tie { move_share(Link::from_index(i), k) } else { 1.0 })
                .collect()
        });
        Self {
            grid: field.grid,
            controls,
            move_weights,
        }
    }

    /// `(control, move weight)` at the node nearest to `t`.
    pub fn control_at(&self, e: Link, t: f64) -> (f64, f64) {
        let k = self.grid.nearest(t);
        (self.controls[e.index()][k], self.move_weights[e.index()][k])
    }
}

/// Flows `f_e = rho_e * u_e / l_e`, zero for stay decisions, clamped to
/// `[0, C_e]`.
pub fn link_flows(
    rho_t: [f64; NUM_LINKS],
    decisions: &[crate::value::LinkDecision; NUM_LINKS],
    network: &Network,
) -> [f64; NUM_LINKS] {
    let controls = std::array::from_fn(|i| match decisions[i].mode {
        DecisionMode::Stay => 0.0,
        DecisionMode::Move { control, .. } => control,
    });
    flows_from_controls(rho_t, controls, [1.0; NUM_LINKS], network)
}

fn flows_from_controls(
    rho_t: [f64; NUM_LINKS],
    controls: [f64; NUM_LINKS],
    move_weights: [f64; NUM_LINKS],
    network: &Network,
) -> [f64; NUM_LINKS] {
    std::array::from_fn(|i| {
        let e = Link::from_index(i);
        let raw = move_weights[i] * rho_t[i].max(0.0) * controls[i] / network.length(e);
        raw.clamp(0.0, network.capacity(e))
    })
}

/// Mass-conservation right-hand side: inflow split by the local decision
/// minus the own outflow.
pub fn mass_rhs(
    f: [f64; NUM_LINKS],
    z: [f64; NUM_PATHS],
    lambda_t: f64,
    network: &Network,
) -> Result<[f64; NUM_LINKS]> {
    let g = local_decision(z, network)?;
    let mut h = [0.0; NUM_LINKS];
    for e in Link::ALL {
        let i = e.index();
        let exogenous = if e.tail() == Node::Origin { lambda_t } else { 0.0 };
        let upstream: f64 = Network::in_links(e.tail())
            .iter()
            .map(|&j| f[j.index()])
            .sum();
        h[i] = g[i] * (exogenous + upstream) - f[i];
    }
    Ok(h)
}

/// Forward RK4 integration of the masses under a preference trajectory and a
/// frozen policy. Returns the mass trajectory together with the cumulative
/// arrivals at the destination.
pub fn evolve_mass(
    z_traj: &PreferenceTrajectory,
    policy: &Policy,
    lambda: &SampledFunction,
    scenario: &Scenario,
) -> Result<(MassTrajectory, SampledFunction)> {
    let grid = scenario.grid;
    let network = &scenario.network;
    let rho_max = scenario.rho_max;

    // State: five link masses plus cumulative arrivals.
    let mut rhs = |s: f64, state: &[f64], out: &mut [f64]| {
        let rho_s: [f64; NUM_LINKS] = std::array::from_fn(|i| state[i].max(0.0));
        let mut controls = [0.0; NUM_LINKS];
        let mut weights = [0.0; NUM_LINKS];
        for e in Link::ALL {
            let (u, w) = policy.control_at(e, s);
            controls[e.index()] = u;
            weights[e.index()] = w;
        }
        let f = flows_from_controls(rho_s, controls, weights, network);
        let z = z_traj.eval(s);
        let h = mass_rhs(f, z, lambda.eval(s), network).expect("preferences are nonnegative");
        out[..NUM_LINKS].copy_from_slice(&h);
        out[NUM_LINKS] = f[Link::E4.index()] + f[Link::E5.index()];
    };

    let mut rho = Vec::with_capacity(grid.len());
    let mut arrivals = Vec::with_capacity(grid.len());
    rho.push([0.0; NUM_LINKS]);
    arrivals.push(0.0);
    let mut state = [0.0; NUM_LINKS + 1];
    let mut next = [0.0; NUM_LINKS + 1];
    let h = grid.dt();
    for k in 0..grid.steps() {
        let t = grid.node(k);
        rk4_step(&mut rhs, t, h, &state, &mut next);
        for v in next.iter_mut() {
            if !v.is_finite() {
                return Err(Error::NonFiniteState { t: grid.node(k + 1) });
            }
            // RK4 can undershoot zero at mass depletion.
            if *v < 0.0 {
                *v = 0.0;
            }
        }
        for i in 0..NUM_LINKS {
            if next[i] > rho_max {
                return Err(Error::MassOverflow {
                    link: i + 1,
                    t: grid.node(k + 1),
                    value: next[i],
                    rho_max,
                });
            }
        }
        state = next;
        rho.push(std::array::from_fn(|i| state[i]));
        arrivals.push(state[NUM_LINKS]);
    }
    Ok((
        MassTrajectory::new(grid, rho)?,
        SampledFunction::new(grid, arrivals)?,
    ))
}
