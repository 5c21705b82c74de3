//! Particle dynamics: forward Euler between collisions, collision detection
//! and deletion, and assembly of the global trajectory.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flux::FluxModel;
use crate::init::{width_rounding, ParticleState};
use crate::par::{map_range, Parallelism};
use crate::velocity::particle_velocity;

/// Default crossing-safety factor of the time step cap.
pub const THETA_DEFAULT: f64 = 0.1;
/// Default collision threshold relative to the median initial spacing.
pub const EPS_COLL_RELATIVE: f64 = 1e-9;
/// Largest mass a collision may discard, relative to the total mass.
pub const MASS_TOL: f64 = 1e-8;
/// Default number of equispaced output times.
pub const SNAPSHOT_COUNT_DEFAULT: usize = 64;

const PAR_MIN_PARTICLES: usize = 4096;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SnapshotSchedule {
    /// Output at `T * k / n` for `k = 0..=n`.
    Count(usize),
    /// Output after every Euler step.
    EveryStep,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntegratorControls {
    pub dt_max: f64,
    pub theta: f64,
    /// Absolute collision threshold; `None` uses
    /// `EPS_COLL_RELATIVE * median initial spacing`.
    pub eps_coll: Option<f64>,
    pub schedule: SnapshotSchedule,
    pub parallelism: Parallelism,
}

impl Default for IntegratorControls {
    fn default() -> Self {
        IntegratorControls {
            dt_max: 1e-3,
            theta: THETA_DEFAULT,
            eps_coll: None,
            schedule: SnapshotSchedule::Count(SNAPSHOT_COUNT_DEFAULT),
            parallelism: Parallelism::default(),
        }
    }
}

impl IntegratorControls {
    pub fn with_dt_max(mut self, dt_max: f64) -> Self {
        self.dt_max = dt_max;
        self
    }

    pub fn with_schedule(mut self, schedule: SnapshotSchedule) -> Self {
        self.schedule = schedule;
        self
    }

    pub fn with_parallelism(mut self, parallelism: Parallelism) -> Self {
        self.parallelism = parallelism;
        self
    }

    fn validate(&self) -> Result<()> {
        if !(self.dt_max.is_finite() && self.dt_max > 0.0) {
            return Err(Error::invalid(format!("dt_max must be positive, got {}", self.dt_max)));
        }
        if !(self.theta > 0.0 && self.theta < 1.0) {
            return Err(Error::invalid(format!("theta must lie in (0, 1), got {}", self.theta)));
        }
        if let Some(eps) = self.eps_coll {
            if !(eps.is_finite() && eps > 0.0) {
                return Err(Error::invalid(format!("eps_coll must be positive, got {eps}")));
            }
        }
        if self.schedule == SnapshotSchedule::Count(0) {
            return Err(Error::invalid("snapshot count must be positive"));
        }
        Ok(())
    }
}

/// Particle velocities `V(v^{i-1}, v^i)` with zero sentinel densities.
pub fn velocities(model: &FluxModel, state: &ParticleState, par: Parallelism) -> Result<Vec<f64>> {
    let n = state.particle_count();
    let cap = model.working_max();
    // Densities above the cap by no more than the rounding of their width
    // are read as the cap.
    let density = |i: isize| {
        let v = state.density_or_vacuum(i);
        if v > cap && i >= 0 {
            let (xl, xr) = (state.positions[i as usize], state.positions[i as usize + 1]);
            if v - cap <= v * width_rounding(xl, xr) / (xr - xl) {
                return cap;
            }
        }
        v
    };
    map_range(n, par, PAR_MIN_PARTICLES, |i| {
        particle_velocity(model, density(i as isize - 1), density(i as isize))
    })
    .into_iter()
    .collect()
}

fn advance(state: &ParticleState, vel: &[f64], dt: f64, new_time: f64) -> Result<ParticleState> {
    let positions: Vec<f64> = state
        .positions
        .iter()
        .zip(vel)
        .map(|(x, v)| x + dt * v)
        .collect();
    let densities: Vec<f64> = positions
        .windows(2)
        .zip(&state.masses)
        .map(|(w, m)| m / (w[1] - w[0]))
        .collect();
    let next = ParticleState {
        time: new_time,
        positions,
        densities,
        masses: state.masses.clone(),
        ids: state.ids.clone(),
    };
    if next.positions.iter().chain(&next.densities).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite {
            time: new_time,
            snapshot: Box::new(state.clone()),
        });
    }
    if let Some(left) = next.positions.windows(2).position(|w| w[1] <= w[0]) {
        return Err(Error::Ordering { time: new_time, left });
    }
    Ok(next)
}

/// One forward Euler step of length `dt`. Masses are kept; densities are
/// recomputed as mass over width.
pub fn step(model: &FluxModel, state: &ParticleState, dt: f64) -> Result<ParticleState> {
    if !(dt.is_finite() && dt > 0.0) {
        return Err(Error::invalid(format!("dt must be positive, got {dt}")));
    }
    let vel = velocities(model, state, Parallelism::Sequential)?;
    advance(state, &vel, dt, state.time + dt)
}

/// Largest step `<= dt_max` with `dt * (V_i - V_{i+1}) <= (1 - theta) * dx_i`
/// for every cell, further reduced so that no cell density leaves the range
/// spanned by itself and its two neighbours.
pub fn choose_dt(model: &FluxModel, state: &ParticleState, dt_max: f64, theta: f64) -> Result<f64> {
    let vel = velocities(model, state, Parallelism::Sequential)?;
    Ok(extremum_cap(state, &vel, dt_cap(state, &vel, dt_max, theta)))
}

/// Caps `dt` so that one Euler step keeps every density between the local
/// minimum and maximum of its neighbourhood (vacuum outside the particles).
/// Compression or expansion towards a neighbour's density happens at a rate
/// proportional to the distance from it, so the cap stays bounded below.
fn extremum_cap(state: &ParticleState, vel: &[f64], dt_max: f64) -> f64 {
    let v = &state.densities;
    let n = v.len();
    let mut dt = dt_max;
    for (i, w) in state.positions.windows(2).enumerate() {
        let dx = w[1] - w[0];
        let rate = vel[i + 1] - vel[i];
        let left = if i == 0 { 0.0 } else { v[i - 1] };
        let right = if i + 1 == n { 0.0 } else { v[i + 1] };
        if rate < 0.0 {
            let hi = left.max(right);
            if v[i] < hi {
                dt = dt.min(dx * (1.0 - v[i] / hi) / -rate);
            }
        } else if rate > 0.0 {
            let lo = left.min(right);
            if v[i] > lo && lo > 0.0 {
                dt = dt.min(dx * (v[i] / lo - 1.0) / rate);
            }
        }
    }
    dt
}

fn dt_cap(state: &ParticleState, vel: &[f64], dt_max: f64, theta: f64) -> f64 {
    let mut dt = dt_max;
    for (i, w) in state.positions.windows(2).enumerate() {
        let closing = vel[i] - vel[i + 1];
        if closing > 0.0 {
            dt = dt.min((1.0 - theta) * (w[1] - w[0]) / closing);
        }
    }
    dt
}

/// Deletion of the leftmost particles of one or more colliding clusters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CollisionEvent {
    pub time: f64,
    /// Indices in the pre-collision state of the deleted particles; each
    /// deleted particle takes the cell to its right with it.
    pub deleted_indices: Vec<usize>,
    /// Original (time zero) ids of the deleted particles.
    pub deleted_ids: Vec<usize>,
    /// Pre-collision index to post-collision index, `None` when deleted.
    pub survivor_map: Vec<Option<usize>>,
    pub discarded_mass: f64,
    pub particles_before: usize,
    pub particles_after: usize,
}

/// Collapses every maximal cluster of particles with consecutive gaps
/// `<= eps_coll` onto its rightmost member.
///
/// Fails when the deleted cells carry more than `MASS_TOL` of the total mass.
pub fn detect_and_resolve_collisions(
    state: &ParticleState,
    eps_coll: f64,
) -> Result<(ParticleState, Option<CollisionEvent>)> {
    let n = state.particle_count();
    let mut deleted = vec![false; n];
    let mut any = false;
    for (i, w) in state.positions.windows(2).enumerate() {
        if w[1] - w[0] <= eps_coll {
            // Particle i is not the rightmost of its cluster.
            deleted[i] = true;
            any = true;
        }
    }
    if !any {
        return Ok((state.clone(), None));
    }
    let kept = deleted.iter().filter(|d| !**d).count();
    if kept < 2 {
        return Err(Error::Precondition(format!(
            "collision at t = {} would leave fewer than two particles",
            state.time
        )));
    }
    let total = state.total_mass();
    let discarded: f64 = (0..n - 1).filter(|&i| deleted[i]).map(|i| state.masses[i]).sum();
    let limit = MASS_TOL * total;
    if discarded > limit {
        return Err(Error::CollisionMassLoss {
            time: state.time,
            discarded,
            limit,
        });
    }

    let mut positions = Vec::with_capacity(kept);
    let mut ids = Vec::with_capacity(kept);
    let mut masses = Vec::with_capacity(kept - 1);
    let mut survivor_map = Vec::with_capacity(n);
    for i in 0..n {
        if deleted[i] {
            survivor_map.push(None);
            continue;
        }
        survivor_map.push(Some(positions.len()));
        positions.push(state.positions[i]);
        ids.push(state.ids[i]);
        if i + 1 < n {
            masses.push(state.masses[i]);
        }
    }
    let next = ParticleState::from_masses(state.time, positions, masses, Some(ids))?;
    let deleted_indices: Vec<usize> = (0..n).filter(|&i| deleted[i]).collect();
    let event = CollisionEvent {
        time: state.time,
        deleted_ids: deleted_indices.iter().map(|&i| state.ids[i]).collect(),
        deleted_indices,
        survivor_map,
        discarded_mass: discarded,
        particles_before: n,
        particles_after: kept,
    };
    Ok((next, Some(event)))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SnapshotKind {
    Scheduled,
    PreCollision,
    PostCollision,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub kind: SnapshotKind,
    pub state: ParticleState,
}

impl Snapshot {
    pub fn time(&self) -> f64 {
        self.state.time
    }
}

/// Global-in-time record of a run.
///
/// Snapshot times are nondecreasing; equal consecutive times occur only for
/// the pre/post pair of a collision event.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub snapshots: Vec<Snapshot>,
    pub events: Vec<CollisionEvent>,
    /// Canonical description of the model and controls that produced it.
    pub fingerprint: String,
    pub final_time: f64,
    pub eps_coll: f64,
    pub steps: usize,
    pub max_dt: f64,
}

impl Trajectory {
    pub fn initial_state(&self) -> &ParticleState {
        &self.snapshots[0].state
    }

    pub fn final_state(&self) -> &ParticleState {
        &self.snapshots[self.snapshots.len() - 1].state
    }

    pub fn times(&self) -> Vec<f64> {
        self.snapshots.iter().map(Snapshot::time).collect()
    }

    /// Largest gap between consecutive snapshot times.
    pub fn max_snapshot_spacing(&self) -> f64 {
        self.snapshots
            .windows(2)
            .map(|w| w[1].time() - w[0].time())
            .fold(0.0, f64::max)
    }
}

fn median_spacing(state: &ParticleState) -> f64 {
    let mut w: Vec<f64> = state.widths().collect();
    w.sort_by(f64::total_cmp);
    w[w.len() / 2]
}

pub fn fingerprint(model: &FluxModel, state0: &ParticleState, t_final: f64, controls: &IntegratorControls) -> String {
    format!(
        "flux={:?} u_cap={} n={} x=[{}, {}] mass={} T={} dt_max={} theta={} eps_coll={:?} schedule={:?}",
        model.kind(),
        model.working_max(),
        state0.particle_count(),
        state0.positions()[0],
        state0.positions()[state0.particle_count() - 1],
        state0.total_mass(),
        t_final,
        controls.dt_max,
        controls.theta,
        controls.eps_coll,
        controls.schedule,
    )
}

/// Runs the scheme from `state0` to time `t_final`.
pub fn run(
    model: &FluxModel,
    state0: &ParticleState,
    t_final: f64,
    controls: &IntegratorControls,
) -> Result<Trajectory> {
    controls.validate()?;
    if !(t_final.is_finite() && t_final > 0.0) {
        return Err(Error::invalid(format!("final time must be positive, got {t_final}")));
    }
    if state0.time != 0.0 {
        return Err(Error::invalid("initial state must be at time zero"));
    }
    let eps_coll = controls
        .eps_coll
        .unwrap_or_else(|| EPS_COLL_RELATIVE * median_spacing(state0));
    let output_time = |k: usize| match controls.schedule {
        SnapshotSchedule::Count(n) if k < n => t_final * k as f64 / n as f64,
        _ => t_final,
    };

    let mut snapshots = Vec::new();
    let mut events = Vec::new();
    let mut state = state0.clone();
    let (resolved, event) = detect_and_resolve_collisions(&state, eps_coll)?;
    if let Some(e) = event {
        snapshots.push(Snapshot { kind: SnapshotKind::PreCollision, state });
        snapshots.push(Snapshot { kind: SnapshotKind::PostCollision, state: resolved.clone() });
        events.push(e);
    } else {
        snapshots.push(Snapshot { kind: SnapshotKind::Scheduled, state: resolved.clone() });
    }
    state = resolved;

    let mut next_output = 1usize;
    let mut steps = 0usize;
    let mut max_dt = 0.0f64;
    while state.time < t_final {
        let target = match controls.schedule {
            SnapshotSchedule::Count(_) => output_time(next_output),
            SnapshotSchedule::EveryStep => t_final,
        };
        let vel = velocities(model, &state, controls.parallelism)?;
        let mut dt = extremum_cap(&state, &vel, dt_cap(&state, &vel, controls.dt_max, controls.theta));
        let mut new_time = state.time + dt;
        let lands = new_time >= target || (target - new_time) <= 1e-12 * target.abs().max(1.0);
        if lands {
            dt = target - state.time;
            new_time = target;
        }
        let stepped = advance(&state, &vel, dt, new_time)?;
        steps += 1;
        max_dt = max_dt.max(dt);

        let (resolved, event) = detect_and_resolve_collisions(&stepped, eps_coll)?;
        let scheduled = match controls.schedule {
            SnapshotSchedule::Count(_) => lands,
            SnapshotSchedule::EveryStep => true,
        };
        if let Some(e) = event {
            snapshots.push(Snapshot { kind: SnapshotKind::PreCollision, state: stepped });
            snapshots.push(Snapshot { kind: SnapshotKind::PostCollision, state: resolved.clone() });
            events.push(e);
        } else if scheduled {
            snapshots.push(Snapshot { kind: SnapshotKind::Scheduled, state: resolved.clone() });
        }
        if lands && matches!(controls.schedule, SnapshotSchedule::Count(_)) {
            next_output += 1;
        }
        state = resolved;
    }

    Ok(Trajectory {
        snapshots,
        events,
        fingerprint: fingerprint(model, state0, t_final, controls),
        final_time: t_final,
        eps_coll,
        steps,
        max_dt,
    })
}
