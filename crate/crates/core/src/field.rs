//! Reconstructions: the piecewise constant density, the interpolated
//! velocity `A`, the residual `Av - f(v)` and the characteristic tracer.

use serde::{Deserialize, Serialize};

use crate::dynamics::{velocities, Trajectory};
use crate::error::{Error, Result};
use crate::flux::FluxModel;
use crate::init::ParticleState;
use crate::par::Parallelism;

/// Step function with `values[i]` on `(breakpoints[i], breakpoints[i + 1])`
/// and zero outside.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PiecewiseConstantFn {
    breakpoints: Vec<f64>,
    values: Vec<f64>,
}

impl PiecewiseConstantFn {
    pub fn new(breakpoints: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if breakpoints.len() < 2 || values.len() + 1 != breakpoints.len() {
            return Err(Error::invalid("need n + 1 breakpoints for n values"));
        }
        if breakpoints.windows(2).any(|w| w[1] <= w[0]) || breakpoints.iter().any(|b| !b.is_finite()) {
            return Err(Error::invalid("breakpoints must be finite and strictly increasing"));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("values must be finite"));
        }
        Ok(PiecewiseConstantFn { breakpoints, values })
    }

    pub fn breakpoints(&self) -> &[f64] {
        &self.breakpoints
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Value at `x`; right-continuous at interior breakpoints.
    pub fn eval(&self, x: f64) -> f64 {
        let b = &self.breakpoints;
        if x < b[0] || x >= b[b.len() - 1] {
            return 0.0;
        }
        self.values[b.partition_point(|&p| p <= x) - 1]
    }

    pub fn integral(&self) -> f64 {
        self.breakpoints
            .windows(2)
            .zip(&self.values)
            .map(|(w, v)| v * (w[1] - w[0]))
            .sum()
    }

    /// Total variation including the jumps to zero at both ends.
    pub fn total_variation(&self) -> f64 {
        let n = self.values.len();
        self.values[0].abs()
            + self.values[n - 1].abs()
            + self.values.windows(2).map(|w| (w[1] - w[0]).abs()).sum::<f64>()
    }

    pub fn l1_norm(&self) -> f64 {
        self.breakpoints
            .windows(2)
            .zip(&self.values)
            .map(|(w, v)| v.abs() * (w[1] - w[0]))
            .sum()
    }

    /// `int |self - other|` over the real line, exact on merged breakpoints.
    pub fn l1_distance(&self, other: &PiecewiseConstantFn) -> f64 {
        self.l1_distance_on(other, f64::NEG_INFINITY, f64::INFINITY)
    }

    /// `int_lo^hi |self - other|`, exact on merged breakpoints.
    pub fn l1_distance_on(&self, other: &PiecewiseConstantFn, lo: f64, hi: f64) -> f64 {
        let mut pts: Vec<f64> = self
            .breakpoints
            .iter()
            .chain(&other.breakpoints)
            .copied()
            .filter(|&p| p > lo && p < hi)
            .collect();
        if lo.is_finite() {
            pts.push(lo);
        }
        if hi.is_finite() {
            pts.push(hi);
        }
        pts.sort_by(f64::total_cmp);
        pts.dedup();
        pts.windows(2)
            .map(|w| {
                let m = 0.5 * (w[0] + w[1]);
                (self.eval(m) - other.eval(m)).abs() * (w[1] - w[0])
            })
            .sum()
    }
}

/// Continuous piecewise linear function through `(nodes[i], values[i])`,
/// extended by constants outside the nodes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PiecewiseLinearFn {
    nodes: Vec<f64>,
    values: Vec<f64>,
}

impl PiecewiseLinearFn {
    pub fn new(nodes: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if nodes.is_empty() || nodes.len() != values.len() {
            return Err(Error::invalid("need one value per node"));
        }
        if nodes.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::invalid("nodes must be strictly increasing"));
        }
        Ok(PiecewiseLinearFn { nodes, values })
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn eval(&self, x: f64) -> f64 {
        let n = self.nodes.len();
        if x <= self.nodes[0] {
            return self.values[0];
        }
        if x >= self.nodes[n - 1] {
            return self.values[n - 1];
        }
        let k = self.nodes.partition_point(|&p| p <= x);
        let (x0, x1) = (self.nodes[k - 1], self.nodes[k]);
        let s = (x - x0) / (x1 - x0);
        self.values[k - 1] + s * (self.values[k] - self.values[k - 1])
    }
}

/// The piecewise constant density of a particle state.
pub fn reconstruct_v(state: &ParticleState) -> PiecewiseConstantFn {
    PiecewiseConstantFn {
        breakpoints: state.positions().to_vec(),
        values: state.densities().to_vec(),
    }
}

/// Interpolated velocity `A`: node `i` carries the particle velocity
/// `V(v^{i-1}, v^i)`.
#[allow(non_snake_case)]
pub fn build_A(model: &FluxModel, state: &ParticleState) -> Result<PiecewiseLinearFn> {
    let vel = velocities(model, state, Parallelism::Sequential)?;
    Ok(PiecewiseLinearFn {
        nodes: state.positions().to_vec(),
        values: vel,
    })
}

/// `int_0^h |g|` for `g` affine with end values `g0`, `g1`.
pub(crate) fn abs_affine_integral(g0: f64, g1: f64, h: f64) -> f64 {
    if g0 * g1 >= 0.0 {
        0.5 * h * (g0.abs() + g1.abs())
    } else {
        0.5 * h * (g0 * g0 + g1 * g1) / (g0.abs() + g1.abs())
    }
}

/// `int |A v - f(v)| dx` at the state's time, integrated exactly.
pub fn residual_l1(model: &FluxModel, state: &ParticleState) -> Result<f64> {
    let vel = velocities(model, state, Parallelism::Sequential)?;
    Ok(residual_from_velocities(model, state, &vel))
}

pub(crate) fn residual_from_velocities(model: &FluxModel, state: &ParticleState, vel: &[f64]) -> f64 {
    state
        .densities()
        .iter()
        .enumerate()
        .map(|(i, &v)| {
            if v == 0.0 {
                return 0.0;
            }
            let a = model.eval_a(v);
            v * abs_affine_integral(vel[i] - a, vel[i + 1] - a, state.width(i))
        })
        .sum()
}

/// Trapezoidal time integral of a per-snapshot quantity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeIntegral {
    pub value: f64,
    /// Largest time interval used by the quadrature.
    pub max_interval: f64,
    pub intervals: usize,
}

/// `||Av - f(v)||_{L1(R x (0, T))}` by the trapezoidal rule over snapshots.
/// Collision pre/post pairs share a time and contribute no interval.
pub fn time_integrated_residual(model: &FluxModel, trajectory: &Trajectory) -> Result<TimeIntegral> {
    if trajectory.snapshots.len() < 2 {
        return Err(Error::invalid("time integration needs at least two snapshots"));
    }
    let res: Vec<f64> = trajectory
        .snapshots
        .iter()
        .map(|s| residual_l1(model, &s.state))
        .collect::<Result<_>>()?;
    let mut value = 0.0;
    let mut max_interval = 0.0f64;
    let mut intervals = 0;
    for (k, w) in trajectory.snapshots.windows(2).enumerate() {
        let dt = w[1].time() - w[0].time();
        if dt > 0.0 {
            value += 0.5 * dt * (res[k] + res[k + 1]);
            max_interval = max_interval.max(dt);
            intervals += 1;
        }
    }
    Ok(TimeIntegral {
        value,
        max_interval,
        intervals,
    })
}

/// Euler path of `x' = A(x, t)` with `A` frozen at the left snapshot of each
/// snapshot interval, `substeps` Euler steps per interval. Returns `(t, x)`
/// samples from `t_start` to the final time.
pub fn trace_characteristic(
    model: &FluxModel,
    trajectory: &Trajectory,
    x_start: f64,
    t_start: f64,
    substeps: usize,
) -> Result<Vec<(f64, f64)>> {
    let t0 = trajectory.snapshots[0].time();
    let t_end = trajectory.final_time;
    if !(t_start >= t0 && t_start <= t_end) {
        return Err(Error::OutsideWindow(format!(
            "start time {t_start} outside trajectory span [{t0}, {t_end}]"
        )));
    }
    let substeps = substeps.max(1);
    let mut path = vec![(t_start, x_start)];
    let (mut t, mut x) = (t_start, x_start);
    for w in trajectory.snapshots.windows(2) {
        let (ta, tb) = (w[0].time(), w[1].time());
        if tb <= t {
            continue;
        }
        let a = build_A(model, &w[0].state)?;
        let h = (tb - t) / substeps as f64;
        for k in 0..substeps {
            x += h * a.eval(x);
            t = if k + 1 == substeps { tb } else { t + h };
        }
        debug_assert!(ta <= tb);
        path.push((t, x));
    }
    Ok(path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{run, IntegratorControls, SnapshotSchedule};
    use crate::init::{cell_average, InitialData};

    fn riemann_sum(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
        let h = (b - a) / n as f64;
        (0..n).map(|k| f(a + (k as f64 + 0.5) * h) * h).sum()
    }

    #[test]
    fn reconstruction_examples() {
        let s = ParticleState::new(vec![0.0, 1.0], vec![2.0]).unwrap();
        let v = reconstruct_v(&s);
        assert_eq!((v.eval(-0.1), v.eval(0.5), v.eval(1.0)), (0.0, 2.0, 0.0));
        let p = ParticleState::new(vec![-1.0, 0.0, 1.0, 2.0], vec![1.0, 3.0, 1.0]).unwrap();
        let v = reconstruct_v(&p);
        assert_eq!((v.eval(-0.5), v.eval(0.5), v.eval(1.5)), (1.0, 3.0, 1.0));
        assert_eq!(v.integral(), 5.0);
        assert_eq!(v.total_variation(), 6.0);
        let z = ParticleState::new(vec![0.0, 1.0, 2.0], vec![0.0, 0.0]).unwrap();
        assert_eq!(reconstruct_v(&z).l1_norm(), 0.0);
    }

    #[test]
    fn exact_l1_distance() {
        let f = PiecewiseConstantFn::new(vec![0.0, 1.0, 2.0], vec![1.0, 3.0]).unwrap();
        let g = PiecewiseConstantFn::new(vec![0.5, 1.5], vec![2.0]).unwrap();
        let rs = riemann_sum(|x| (f.eval(x) - g.eval(x)).abs(), -1.0, 3.0, 400_000);
        assert!((f.l1_distance(&g) - 3.0).abs() < 1e-14);
        assert!((rs - 3.0).abs() < 1e-4);
        assert!((f.l1_distance_on(&g, 0.75, 1.25) - 0.5).abs() < 1e-14);
    }

    #[test]
    fn a_interpolates_particle_velocities() {
        let b = FluxModel::burgers();
        let s = ParticleState::new(vec![0.0, 1.0, 2.0], vec![3.0, 1.0]).unwrap();
        let a = build_A(&b, &s).unwrap();
        assert_eq!(a.values(), &[0.0, 1.5, 0.5]);
        assert_eq!(a.eval(0.5), 0.75);
        assert_eq!(a.eval(-3.0), 0.0);
        assert_eq!(a.eval(7.0), 0.5);
        let c = ParticleState::new(vec![0.0, 0.3, 1.0], vec![0.4, 0.4]).unwrap();
        let l = FluxModel::lwr(1.0, 1.0).unwrap();
        let a = build_A(&l, &c).unwrap();
        // Nodes touching a constant cell from inside carry a(c); the right
        // vacuum edge carries max a on [0, c] = 1.
        assert_eq!(a.values(), &[0.6, 0.6, 1.0]);
        assert!((a.eval(0.15) - 0.6).abs() < 1e-15);
    }

    #[test]
    fn residual_examples() {
        let b = FluxModel::burgers();
        let s = ParticleState::new(vec![0.0, 1.0], vec![1.0]).unwrap();
        let r = residual_l1(&b, &s).unwrap();
        let rs = riemann_sum(|x| (0.5 * x - 0.5f64).abs(), 0.0, 1.0, 100_000);
        assert!((r - 0.25).abs() < 1e-15);
        assert!((rs - 0.25).abs() < 1e-9);
        let lin = FluxModel::linear(2.0).unwrap();
        let c = ParticleState::new(vec![0.0, 0.5, 1.0], vec![2.0, 1.0]).unwrap();
        assert_eq!(residual_l1(&lin, &c).unwrap(), 0.0);
    }

    #[test]
    fn residual_matches_riemann_sum_with_sign_change() {
        let b = FluxModel::burgers();
        let s = ParticleState::new(vec![0.0, 1.0, 1.5, 3.0], vec![1.0, 3.0, 0.5]).unwrap();
        let a = build_A(&b, &s).unwrap();
        let v = reconstruct_v(&s);
        let rs = riemann_sum(|x| (a.eval(x) * v.eval(x) - b.eval_f(v.eval(x))).abs(), 0.0, 3.0, 600_000);
        assert!((residual_l1(&b, &s).unwrap() - rs).abs() < 1e-8);
    }

    #[test]
    fn abs_affine_matches_quadrature() {
        for (g0, g1) in [(1.0, 2.0), (-1.0, 3.0), (2.0, -0.5), (0.0, -1.0)] {
            let rs = riemann_sum(|s| (g0 + s * (g1 - g0)).abs(), 0.0, 1.0, 200_000);
            assert!((abs_affine_integral(g0, g1, 1.0) - rs).abs() < 1e-9);
        }
    }

    fn example_run(n: usize, schedule: SnapshotSchedule) -> (FluxModel, Trajectory) {
        let b = FluxModel::burgers().restricted_to(3.0).unwrap();
        let d = InitialData::paper_example();
        let xs: Vec<f64> = (0..n).map(|k| -2.0 + 5.0 * k as f64 / (n - 1) as f64).collect();
        let s = cell_average(&d, &xs).unwrap();
        let c = IntegratorControls::default().with_dt_max(1e-3).with_schedule(schedule);
        let tr = run(&b, &s, 0.25, &c).unwrap();
        (b, tr)
    }

    #[test]
    fn time_integrated_residual_scales_with_spacing() {
        let (b, coarse) = example_run(26, SnapshotSchedule::Count(64));
        let (_, fine) = example_run(51, SnapshotSchedule::Count(64));
        let rc = time_integrated_residual(&b, &coarse).unwrap();
        let rf = time_integrated_residual(&b, &fine).unwrap();
        let dx = 0.2;
        assert!(rc.value > 0.0);
        assert!(rc.value <= 0.25 * 0.5 * 3.0 * dx * 6.0);
        let ratio = rf.value / rc.value;
        assert!((0.3..=0.7).contains(&ratio), "{ratio}");
        assert_eq!(rc.intervals, 64);
    }

    #[test]
    fn rigid_translation_has_no_residual() {
        let lin = FluxModel::linear(1.0).unwrap();
        let s = ParticleState::new(vec![0.0, 0.5, 2.0], vec![1.0, 4.0]).unwrap();
        let tr = run(&lin, &s, 1.0, &IntegratorControls::default()).unwrap();
        assert_eq!(time_integrated_residual(&lin, &tr).unwrap().value, 0.0);
        let path = trace_characteristic(&lin, &tr, 0.2, 0.0, 4).unwrap();
        let (t, x) = *path.last().unwrap();
        assert_eq!(t, 1.0);
        assert!((x - 1.2).abs() < 1e-12);
    }

    #[test]
    fn tracer_follows_particles() {
        let (b, tr) = example_run(26, SnapshotSchedule::EveryStep);
        let x0 = tr.initial_state().positions()[7];
        let path = trace_characteristic(&b, &tr, x0, 0.0, 1).unwrap();
        let end = path.last().unwrap().1;
        let i = tr.final_state().ids().iter().position(|&id| id == 7).unwrap();
        assert!((end - tr.final_state().positions()[i]).abs() < 1e-12);
    }

    #[test]
    fn tracers_do_not_cross() {
        let (b, tr) = example_run(26, SnapshotSchedule::Count(64));
        let starts: Vec<f64> = (0..40).map(|k| -1.5 + 0.1 * k as f64).collect();
        let ends: Vec<f64> = starts
            .iter()
            .map(|&x| trace_characteristic(&b, &tr, x, 0.0, 8).unwrap().last().unwrap().1)
            .collect();
        assert!(ends.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn tracer_rejects_out_of_span() {
        let (b, tr) = example_run(26, SnapshotSchedule::Count(4));
        assert!(matches!(
            trace_characteristic(&b, &tr, 0.0, 0.3, 1),
            Err(Error::OutsideWindow(_))
        ));
    }
}
