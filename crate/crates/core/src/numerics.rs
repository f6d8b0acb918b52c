//! Time grids, sampled functions, quadrature and fixed-step ODE integration.
//!
//! Every trajectory in the crate lives on one shared uniform [`TimeGrid`];
//! values between nodes are linearly interpolated. The trapezoid rule is
//! therefore exact for every sampled integrand.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Uniform partition of `[0, T]` into `steps` cells (`steps + 1` nodes).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeGrid {
    horizon: f64,
    steps: usize,
}

impl TimeGrid {
    pub fn new(horizon: f64, steps: usize) -> Result<Self> {
        if !(horizon > 0.0) || !horizon.is_finite() {
            return Err(Error::Validation {
                rule: format!("horizon must be positive and finite, got {horizon}"),
            });
        }
        if steps < 1 {
            return Err(Error::Validation {
                rule: "grid must have at least one step".into(),
            });
        }
        Ok(Self { horizon, steps })
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    /// Number of nodes, `steps + 1`.
    pub fn len(&self) -> usize {
        self.steps + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn dt(&self) -> f64 {
        self.horizon / self.steps as f64
    }

    /// Node `t_k = k * T / N`; `node(N) == T` exactly.
    pub fn node(&self, k: usize) -> f64 {
        debug_assert!(k <= self.steps);
        self.horizon * k as f64 / self.steps as f64
    }

    pub fn nodes(&self) -> impl Iterator<Item = f64> + '_ {
        (0..=self.steps).map(move |k| self.node(k))
    }

    /// Index of the grid node nearest to `t` (clamped to the grid).
    pub fn nearest(&self, t: f64) -> usize {
        let k = (t / self.dt()).round();
        (k.max(0.0) as usize).min(self.steps)
    }

    /// Index of the cell containing `t`, in `0..steps`.
    pub fn cell(&self, t: f64) -> usize {
        let k = (t / self.dt()).floor();
        (k.max(0.0) as usize).min(self.steps - 1)
    }
}

/// A real function sampled at the grid nodes, linearly interpolated between.
#[derive(Debug, Clone, PartialEq)]
pub struct SampledFunction {
    grid: TimeGrid,
    values: Vec<f64>,
}

impl SampledFunction {
    pub fn new(grid: TimeGrid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::Validation {
                rule: format!(
                    "sampled function has {} values for {} grid nodes",
                    values.len(),
                    grid.len()
                ),
            });
        }
        Ok(Self { grid, values })
    }

    pub fn from_fn(grid: TimeGrid, f: impl Fn(f64) -> f64) -> Self {
        let values = grid.nodes().map(f).collect();
        Self { grid, values }
    }

    pub fn grid(&self) -> TimeGrid {
        self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn value_at(&self, k: usize) -> f64 {
        self.values[k]
    }

    pub fn max_value(&self) -> f64 {
        self.values.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Linear interpolation; `t` is clamped to `[0, T]`.
    pub fn eval(&self, t: f64) -> f64 {
        let t = t.clamp(0.0, self.grid.horizon());
        let k = self.grid.cell(t);
        let t_k = self.grid.node(k);
        let w = (t - t_k) / self.grid.dt();
        self.values[k] * (1.0 - w) + self.values[k + 1] * w
    }
}

/// Prefix sums of the trapezoid rule, for O(1) integrals of a sampled function.
///
/// `integral(a, b)` is the exact integral of the piecewise-linear interpolant,
/// so integrals are additive: `integral(a, c) = integral(a, b) + integral(b, c)`.
#[derive(Debug, Clone)]
pub struct CumulativeTrapezoid {
    grid: TimeGrid,
    values: Vec<f64>,
    prefix: Vec<f64>,
}

impl CumulativeTrapezoid {
    pub fn new(f: &SampledFunction) -> Self {
        let grid = f.grid();
        let dt = grid.dt();
        let mut prefix = Vec::with_capacity(grid.len());
        let mut acc = 0.0;
        prefix.push(0.0);
        for k in 0..grid.steps() {
            acc += 0.5 * dt * (f.value_at(k) + f.value_at(k + 1));
            prefix.push(acc);
        }
        Self {
            grid,
            values: f.values().to_vec(),
            prefix,
        }
    }

    /// Antiderivative of the interpolant at `t` (with `P(0) = 0`).
    fn antiderivative(&self, t: f64) -> f64 {
        let k = self.grid.cell(t);
        let t_k = self.grid.node(k);
        let dt = self.grid.dt();
        let w = (t - t_k) / dt;
        let f_t = self.values[k] * (1.0 - w) + self.values[k + 1] * w;
        self.prefix[k] + 0.5 * (t - t_k) * (self.values[k] + f_t)
    }

    /// Integral over `[a, b]`; callers must keep `0 <= a <= b <= T`.
    pub fn integral(&self, a: f64, b: f64) -> f64 {
        if b <= a {
            return 0.0;
        }
        self.antiderivative(b) - self.antiderivative(a)
    }
}

/// Composite trapezoid integral of `f` over `[a, b]`, endpoints interpolated.
pub fn integrate_trapezoid(f: &SampledFunction, a: f64, b: f64) -> Result<f64> {
    let horizon = f.grid().horizon();
    if !(0.0 <= a && a <= b && b <= horizon) {
        return Err(Error::OutOfRange { a, b, horizon });
    }
    Ok(CumulativeTrapezoid::new(f).integral(a, b))
}

/// Parametric throughput families; the derivative is always analytic.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ThroughputSpec {
    Constant { level: f64 },
    /// Raised cosine supported on `[start, end]`, peaking midway.
    Bump { peak: f64, start: f64, end: f64 },
    /// Constant `level` with smoothstep ramps of width `ramp` at both ends.
    TrapezoidSmooth { level: f64, ramp: f64 },
}

fn smoothstep(x: f64) -> f64 {
    x * x * (3.0 - 2.0 * x)
}

fn smoothstep_deriv(x: f64) -> f64 {
    6.0 * x * (1.0 - x)
}

impl ThroughputSpec {
    pub fn validate(&self, horizon: f64) -> Result<()> {
        match *self {
            ThroughputSpec::Constant { level } => {
                if level < 0.0 {
                    return Err(Error::Validation {
                        rule: format!("constant throughput level {level} < 0"),
                    });
                }
            }
            ThroughputSpec::Bump { peak, start, end } => {
                if peak < 0.0 {
                    return Err(Error::Validation {
                        rule: format!("bump peak {peak} < 0"),
                    });
                }
                if !(start < end) {
                    return Err(Error::Validation {
                        rule: format!("bump support [{start}, {end}] is empty"),
                    });
                }
            }
            ThroughputSpec::TrapezoidSmooth { level, ramp } => {
                if level < 0.0 {
                    return Err(Error::Validation {
                        rule: format!("trapezoid level {level} < 0"),
                    });
                }
                if !(ramp > 0.0) || 2.0 * ramp > horizon {
                    return Err(Error::Validation {
                        rule: format!("trapezoid ramp {ramp} must satisfy 0 < 2*ramp <= horizon"),
                    });
                }
            }
        }
        Ok(())
    }

    pub fn eval(&self, t: f64, horizon: f64) -> f64 {
        match *self {
            ThroughputSpec::Constant { level } => level,
            ThroughputSpec::Bump { peak, start, end } => {
                if t < start || t > end {
                    0.0
                } else {
                    let x = (t - start) / (end - start);
                    0.5 * peak * (1.0 - (2.0 * std::f64::consts::PI * x).cos())
                }
            }
            ThroughputSpec::TrapezoidSmooth { level, ramp } => {
                if t < ramp {
                    level * smoothstep((t / ramp).max(0.0))
                } else if t > horizon - ramp {
                    level * smoothstep(((horizon - t) / ramp).max(0.0))
                } else {
                    level
                }
            }
        }
    }

    pub fn derivative(&self, t: f64, horizon: f64) -> f64 {
        match *self {
            ThroughputSpec::Constant { .. } => 0.0,
            ThroughputSpec::Bump { peak, start, end } => {
                if t < start || t > end {
                    0.0
                } else {
                    let width = end - start;
                    let x = (t - start) / width;
                    peak * std::f64::consts::PI / width * (2.0 * std::f64::consts::PI * x).sin()
                }
            }
            ThroughputSpec::TrapezoidSmooth { level, ramp } => {
                if t < ramp {
                    level * smoothstep_deriv((t / ramp).max(0.0)) / ramp
                } else if t > horizon - ramp {
                    -level * smoothstep_deriv(((horizon - t) / ramp).max(0.0)) / ramp
                } else {
                    0.0
                }
            }
        }
    }
}

/// Samples `lambda` and its analytic derivative, rejecting scenarios where
/// `lambda < 0` or `lambda + lambda_dot < 0` at any node.
pub fn sample_throughput(
    spec: &ThroughputSpec,
    grid: TimeGrid,
) -> Result<(SampledFunction, SampledFunction)> {
    spec.validate(grid.horizon())?;
    let horizon = grid.horizon();
    let lambda = SampledFunction::from_fn(grid, |t| spec.eval(t, horizon));
    let lambda_dot = SampledFunction::from_fn(grid, |t| spec.derivative(t, horizon));
    for k in 0..grid.len() {
        let t = grid.node(k);
        let l = lambda.value_at(k);
        if l < 0.0 {
            return Err(Error::NegativeThroughput { t, value: l });
        }
        let rate = l + lambda_dot.value_at(k);
        if rate < 0.0 {
            return Err(Error::RateViolation { t, value: rate });
        }
    }
    Ok((lambda, lambda_dot))
}

/// One classical RK4 step from `(t, y)` with step `h`, writing into `out`.
pub(crate) fn rk4_step(
    rhs: &mut impl FnMut(f64, &[f64], &mut [f64]),
    t: f64,
    h: f64,
    y: &[f64],
    out: &mut [f64],
) {
    let n = y.len();
    let mut k1 = vec![0.0; n];
    let mut k2 = vec![0.0; n];
    let mut k3 = vec![0.0; n];
    let mut k4 = vec![0.0; n];
    let mut stage = vec![0.0; n];

    rhs(t, y, &mut k1);
    for i in 0..n {
        stage[i] = y[i] + 0.5 * h * k1[i];
    }
    rhs(t + 0.5 * h, &stage, &mut k2);
    for i in 0..n {
        stage[i] = y[i] + 0.5 * h * k2[i];
    }
    rhs(t + 0.5 * h, &stage, &mut k3);
    for i in 0..n {
        stage[i] = y[i] + h * k3[i];
    }
    rhs(t + h, &stage, &mut k4);
    for i in 0..n {
        out[i] = y[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    }
}

/// Classical RK4 trajectory of `y' = rhs(t, y)` over the grid.
pub fn integrate_ode(
    mut rhs: impl FnMut(f64, &[f64], &mut [f64]),
    y0: &[f64],
    grid: TimeGrid,
) -> Result<Vec<Vec<f64>>> {
    let mut trajectory = Vec::with_capacity(grid.len());
    trajectory.push(y0.to_vec());
    let h = grid.dt();
    let mut next = vec![0.0; y0.len()];
    for k in 0..grid.steps() {
        let t = grid.node(k);
        rk4_step(&mut rhs, t, h, trajectory.last().unwrap(), &mut next);
        if next.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteState { t: grid.node(k + 1) });
        }
        trajectory.push(next.clone());
    }
    Ok(trajectory)
}

/// Golden-section minimization on `[lo, hi]`; intended for objectives convex
/// on the bracket. Returns `(argmin, min)`.
pub(crate) fn golden_min(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64, x_tol: f64) -> (f64, f64) {
    const INV_PHI: f64 = 0.618_033_988_749_894_9;
    let mut x1 = hi - INV_PHI * (hi - lo);
    let mut x2 = lo + INV_PHI * (hi - lo);
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    while hi - lo > x_tol {
        if f1 <= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - INV_PHI * (hi - lo);
            f1 = f(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + INV_PHI * (hi - lo);
            f2 = f(x2);
        }
    }
    let x = 0.5 * (lo + hi);
    (x, f(x))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn grid(t: f64, n: usize) -> TimeGrid {
        TimeGrid::new(t, n).unwrap()
    }

    #[test]
    fn constant_family_samples() {
        let g = grid(2.0, 4);
        let (l, ld) = sample_throughput(&ThroughputSpec::Constant { level: 1.0 }, g).unwrap();
        assert_eq!(l.values(), &[1.0; 5]);
        assert_eq!(ld.values(), &[0.0; 5]);
    }

    #[test]
    fn bump_peak_at_midpoint() {
        let spec = ThroughputSpec::Bump {
            peak: 2.0,
            start: 0.0,
            end: 2.0,
        };
        assert!((spec.eval(1.0, 2.0) - 2.0).abs() < 1e-12);
        assert!(spec.derivative(1.0, 2.0).abs() < 1e-12);
        assert_eq!(spec.eval(-0.5, 2.0), 0.0);
        assert_eq!(spec.eval(2.5, 2.0), 0.0);
    }

    #[test]
    fn bump_rate_condition() {
        // The falling half of the bump always has a stretch where
        // lambda + lambda_dot < 0, so only supports whose descent lies
        // beyond the horizon pass validation.
        let g = grid(2.0, 400);
        let falling = ThroughputSpec::Bump {
            peak: 2.0,
            start: 0.0,
            end: 2.0,
        };
        assert!(matches!(
            sample_throughput(&falling, g),
            Err(Error::RateViolation { .. })
        ));
        let rising = ThroughputSpec::Bump {
            peak: 2.0,
            start: 0.0,
            end: 4.0,
        };
        let (l, _) = sample_throughput(&rising, g).unwrap();
        assert!((l.eval(2.0) - 2.0).abs() < 1e-12);
    }

    #[test]
    fn steep_trapezoid_down_ramp_rejected() {
        // On the down-ramp midpoint lambda + lambda_dot = level*(1/2 - 1.5/ramp),
        // negative for any ramp < 3.
        let g = grid(2.0, 400);
        let spec = ThroughputSpec::TrapezoidSmooth {
            level: 1.0,
            ramp: 0.5,
        };
        match sample_throughput(&spec, g) {
            Err(Error::RateViolation { t, .. }) => assert!(t > 1.0),
            other => panic!("expected RateViolation, got {other:?}"),
        }
    }

    #[test]
    fn trapezoid_integral_examples() {
        let g = grid(2.0, 4);
        let one = SampledFunction::from_fn(g, |_| 1.0);
        assert!((integrate_trapezoid(&one, 0.0, 2.0).unwrap() - 2.0).abs() < 1e-14);
        assert_eq!(integrate_trapezoid(&one, 0.7, 0.7).unwrap(), 0.0);
        let linear = SampledFunction::from_fn(g, |t| t);
        assert!((integrate_trapezoid(&linear, 0.0, 2.0).unwrap() - 2.0).abs() < 1e-14);
        assert!(matches!(
            integrate_trapezoid(&one, -0.1, 1.0),
            Err(Error::OutOfRange { .. })
        ));
    }

    #[test]
    fn rk4_constant_and_decay() {
        let g = grid(1.0, 10);
        let traj = integrate_ode(|_, _, dy| dy.fill(0.0), &[1.0, 2.0, 3.0], g).unwrap();
        assert_eq!(traj.last().unwrap(), &vec![1.0, 2.0, 3.0]);

        let g = grid(1.0, 1000);
        let traj = integrate_ode(
            |_, y, dy| {
                dy[0] = -y[0];
            },
            &[1.0],
            g,
        )
        .unwrap();
        assert!((traj.last().unwrap()[0] - (-1.0f64).exp()).abs() < 1e-10);
    }

    #[test]
    fn rk4_rejects_non_finite() {
        let g = grid(1.0, 4);
        let res = integrate_ode(|_, _, dy| dy.fill(f64::INFINITY), &[1.0], g);
        assert!(matches!(res, Err(Error::NonFiniteState { .. })));
    }

    #[test]
    fn rk4_order_check() {
        // Halving dt must reduce the error on y' = -y by at least 8x.
        let exact = (-1.0f64).exp();
        let err = |n: usize| {
            let g = grid(1.0, n);
            let traj = integrate_ode(
                |_, y, dy| {
                    dy[0] = -y[0];
                },
                &[1.0],
                g,
            )
            .unwrap();
            (traj.last().unwrap()[0] - exact).abs()
        };
        assert!(err(10) / err(20) >= 8.0);
    }

    proptest! {
        #[test]
        fn trapezoid_additive(
            vals in proptest::collection::vec(-5.0f64..5.0, 21),
            a in 0.0f64..2.0,
            b in 0.0f64..2.0,
            c in 0.0f64..2.0,
        ) {
            let g = grid(2.0, 20);
            let f = SampledFunction::new(g, vals).unwrap();
            let mut pts = [a, b, c];
            pts.sort_by(f64::total_cmp);
            let [a, b, c] = pts;
            let whole = integrate_trapezoid(&f, a, c).unwrap();
            let split = integrate_trapezoid(&f, a, b).unwrap()
                + integrate_trapezoid(&f, b, c).unwrap();
            let scale = whole.abs().max(1.0);
            prop_assert!((whole - split).abs() <= 1e-12 * scale);
        }
    }
}
