//! Particle path scheme for one-dimensional scalar conservation laws with
//! nonnegative initial data.

pub mod analysis;
pub mod dynamics;
pub mod error;
pub mod field;
pub mod flux;
pub mod init;
pub mod io;
mod par;
pub mod quad;
pub mod reference;
pub mod velocity;

pub use analysis::{
    continuity_pairing, convergence_study, entropy_inequality_check, error_report, fit_rate, invariant_audit,
    temporal_modulus_check, tol_entropy, AuditReport, Bump, ConvergenceStudy, EntropyDefect, ErrorReport, RateFit,
    StudySpec,
};
pub use dynamics::{
    choose_dt, detect_and_resolve_collisions, run, step, velocities, CollisionEvent, IntegratorControls,
    Snapshot, SnapshotKind, SnapshotSchedule, Trajectory,
};
pub use error::{Error, Result};
pub use field::{
    build_A, reconstruct_v, residual_l1, time_integrated_residual, trace_characteristic, PiecewiseConstantFn,
    PiecewiseLinearFn, TimeIntegral,
};
pub use flux::{builtin_flux, Extrema, FluxKind, FluxModel};
pub use init::{cell_average, initial_l1_gap, place_particles, InitialData, InitialGap, ParticleState, Placement};
pub use par::Parallelism;
pub use reference::{burgers_paper_example, godunov_oracle, riemann_exact, ExactSolution, Mesh, RiemannWave};
pub use velocity::{ftl_coincidence_check, particle_velocity};
