//! Error measurement, stability bounds, entropy and continuity pairings,
//! convergence-rate fitting and the invariant audit.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dynamics::{run, velocities, IntegratorControls, SnapshotKind, Trajectory};
use crate::error::{Error, Result};
use crate::field::{reconstruct_v, time_integrated_residual, PiecewiseConstantFn};
use crate::flux::FluxModel;
use crate::init::{cell_average, initial_l1_gap, place_particles, width_rounding, InitialData, ParticleState, Placement};
use crate::par::{map_collect, Parallelism};
use crate::quad::adaptive_gauss;
use crate::reference::ExactSolution;

/// Absolute tolerance of the per-piece quadrature in [`l1_error_against`].
pub const TOL_ERROR_QUAD: f64 = 1e-11;
/// Errors at or below this level make a rate fit degenerate.
pub const FIT_NOISE_FLOOR: f64 = 1e-10;
/// Slack of the temporal modulus check.
pub const TEMPORAL_SLACK: f64 = 1.05;
/// Constant of the entropy tolerance.
pub const ENTROPY_TOL_CONSTANT: f64 = 5.0;
/// Relative tolerance of the mass identities.
pub const MASS_REL_TOL: f64 = 1e-12;
/// Absolute slack of the maximum principle and velocity bounds.
pub const BOUND_TOL: f64 = 1e-12;
/// Slack of the total variation comparison.
pub const TV_TOL: f64 = 1e-10;

/// `int_lo^hi |v(x) - u(x, t)| dx`, split at the breakpoints of both
/// functions and integrated adaptively on each piece with an open rule.
pub fn l1_error_against(v: &PiecewiseConstantFn, exact: &ExactSolution, t: f64, lo: f64, hi: f64) -> Result<f64> {
    exact.eval(0.5 * (lo + hi), t)?;
    let mut pts: Vec<f64> = v.breakpoints().iter().copied().filter(|&p| p > lo && p < hi).collect();
    pts.extend(exact.breakpoints(t, lo, hi));
    pts.push(lo);
    pts.push(hi);
    pts.sort_by(f64::total_cmp);
    pts.dedup();
    let mut total = 0.0;
    for w in pts.windows(2) {
        let c = v.eval(0.5 * (w[0] + w[1]));
        let g = |x: f64| exact.eval(x, t).map(|u| (u - c).abs()).unwrap_or(f64::NAN);
        total += adaptive_gauss(&g, w[0], w[1], TOL_ERROR_QUAD).map_err(|q| Error::Quadrature {
            cell: usize::MAX,
            lo: q.lo,
            hi: q.hi,
        })?;
    }
    Ok(total)
}

/// `gap + 2 sqrt(2 tv residual)`.
pub fn theorem_bound(initial_gap: f64, tv: f64, residual: f64) -> f64 {
    initial_gap + 2.0 * (2.0 * tv * residual).sqrt()
}

/// `tail + tv (dx + 2 sqrt(T lip_fprime sup dx))`.
pub fn corollary_bound(tail_mass: f64, tv: f64, dx: f64, t_final: f64, lip_fprime: f64, sup: f64) -> f64 {
    tail_mass + tv * (dx + 2.0 * (t_final * lip_fprime * sup * dx).sqrt())
}

/// `(lip_fprime / 2) sup dx tv`: per-time bound on the residual.
pub fn residual_bound(lip_fprime: f64, sup: f64, dx: f64, tv: f64) -> f64 {
    0.5 * lip_fprime * sup * dx * tv
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorReport {
    pub particles: usize,
    pub dx0_star: f64,
    pub final_time: f64,
    pub window: (f64, f64),
    pub l1_error: f64,
    /// `||v0 - u0||_L1` including the tail mass.
    pub initial_gap: f64,
    pub tail_mass: f64,
    pub residual: f64,
    pub residual_time_step: f64,
    /// Variation of the data the scheme approximates (truncated to the hint).
    pub tv_truncated: f64,
    pub tv_u0: f64,
    pub sup_u0: f64,
    pub lip_fprime: Option<f64>,
    pub theorem_bound: f64,
    pub corollary_bound: Option<f64>,
    pub audit: AuditReport,
}

/// Measures the error of a run against an exact solution at the final time
/// and assembles the stability and rate bounds.
pub fn error_report(
    model: &FluxModel,
    data: &InitialData,
    trajectory: &Trajectory,
    exact: &ExactSolution,
    window: (f64, f64),
) -> Result<ErrorReport> {
    let t_final = trajectory.final_time;
    let last = trajectory.final_state();
    if last.time() < t_final * (1.0 - 1e-12) {
        return Err(Error::invalid(format!(
            "trajectory ends at {} before its final time {t_final}",
            last.time()
        )));
    }
    let l1_error = l1_error_against(&reconstruct_v(last), exact, t_final, window.0, window.1)?;
    let initial = trajectory.initial_state();
    let gap = initial_l1_gap(data, initial)?;
    let residual = time_integrated_residual(model, trajectory)?;
    let tv_truncated = data.tv_truncated();
    let bound = theorem_bound(gap.total, tv_truncated, residual.value);
    debug_assert!(bound >= theorem_bound(gap.total, tv_truncated, 0.0));
    let dx0_star = initial.max_spacing();
    let lip_fprime = model.lip_fprime();
    let corollary = lip_fprime.map(|l| corollary_bound(gap.tail_mass, data.tv_u0(), dx0_star, t_final, l, data.sup_u0()));
    Ok(ErrorReport {
        particles: initial.particle_count(),
        dx0_star,
        final_time: t_final,
        window,
        l1_error,
        initial_gap: gap.total,
        tail_mass: gap.tail_mass,
        residual: residual.value,
        residual_time_step: residual.max_interval,
        tv_truncated,
        tv_u0: data.tv_u0(),
        sup_u0: data.sup_u0(),
        lip_fprime,
        theorem_bound: bound,
        corollary_bound: corollary,
        audit: invariant_audit(model, trajectory)?,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateFit {
    pub resolutions: Vec<f64>,
    pub errors: Vec<f64>,
    /// Least-squares slope of `log error` against `log resolution`.
    pub slope: Option<f64>,
    pub intercept: Option<f64>,
    /// Slope over the three finest resolutions.
    pub slope_finest3: Option<f64>,
    /// Errors at the noise floor; no meaningful rate.
    pub degenerate: bool,
}

fn least_squares(xs: &[f64], ys: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let slope = sxy / sxx;
    (slope, my - slope * mx)
}

pub fn fit_rate(resolutions: &[f64], errors: &[f64]) -> Result<RateFit> {
    if resolutions.len() < 3 || resolutions.len() != errors.len() {
        return Err(Error::invalid("a rate fit needs at least three (resolution, error) pairs"));
    }
    if resolutions.windows(2).any(|w| w[1] >= w[0]) || resolutions.iter().any(|h| !(*h > 0.0)) {
        return Err(Error::invalid("resolutions must be positive and strictly decreasing"));
    }
    let degenerate = errors.iter().any(|e| !(*e > FIT_NOISE_FLOOR));
    let (mut slope, mut intercept, mut slope_finest3) = (None, None, None);
    if !degenerate {
        let lx: Vec<f64> = resolutions.iter().map(|h| h.ln()).collect();
        let ly: Vec<f64> = errors.iter().map(|e| e.ln()).collect();
        let (s, c) = least_squares(&lx, &ly);
        slope = Some(s);
        intercept = Some(c);
        let k = lx.len() - 3;
        slope_finest3 = Some(least_squares(&lx[k..], &ly[k..]).0);
    }
    Ok(RateFit {
        resolutions: resolutions.to_vec(),
        errors: errors.to_vec(),
        slope,
        intercept,
        slope_finest3,
        degenerate,
    })
}

/// One row of a convergence table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceRow {
    pub dx: f64,
    pub error: f64,
    pub bound: f64,
    /// Slope between this and the previous row.
    pub slope_so_far: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceStudy {
    pub reports: Vec<ErrorReport>,
    pub fit: RateFit,
}

impl ConvergenceStudy {
    pub fn table(&self) -> Vec<ConvergenceRow> {
        self.reports
            .iter()
            .enumerate()
            .map(|(k, r)| ConvergenceRow {
                dx: r.dx0_star,
                error: r.l1_error,
                bound: r.theorem_bound,
                slope_so_far: (k > 0).then(|| {
                    let p = &self.reports[k - 1];
                    (r.l1_error / p.l1_error).ln() / (r.dx0_star / p.dx0_star).ln()
                }),
            })
            .collect()
    }
}

/// A family of runs differing only in the particle count.
#[derive(Debug, Clone)]
pub struct StudySpec {
    pub model: FluxModel,
    pub data: InitialData,
    pub exact: ExactSolution,
    pub t_final: f64,
    pub window: (f64, f64),
    pub placement: Placement,
    pub controls: IntegratorControls,
    pub particle_counts: Vec<usize>,
}

/// Runs one scheme instance of the family with `n` particles.
pub fn run_family_member(spec: &StudySpec, n: usize) -> Result<(Trajectory, ErrorReport)> {
    let model = spec.model.restricted_to(spec.data.sup_u0())?;
    let xs = place_particles(&spec.data, n, spec.placement)?;
    let state = cell_average(&spec.data, &xs)?;
    let trajectory = run(&model, &state, spec.t_final, &spec.controls)?;
    let report = error_report(&model, &spec.data, &trajectory, &spec.exact, spec.window)?;
    if !report.audit.passed() {
        return Err(Error::AuditFailed {
            run: format!("N = {n}"),
            detail: report.audit.failures().join("; "),
        });
    }
    Ok((trajectory, report))
}

/// Runs the family (concurrently when `par` allows) and fits the rate of
/// the final-time error against the initial spacing.
pub fn convergence_study(spec: &StudySpec, par: Parallelism) -> Result<ConvergenceStudy> {
    if spec.particle_counts.len() < 3 {
        return Err(Error::invalid("a convergence study needs at least three resolutions"));
    }
    let reports: Vec<ErrorReport> = map_collect(&spec.particle_counts, par, |&n| {
        run_family_member(spec, n).map(|(_, r)| r)
    })
    .into_iter()
    .collect::<Result<_>>()?;
    let dx: Vec<f64> = reports.iter().map(|r| r.dx0_star).collect();
    let err: Vec<f64> = reports.iter().map(|r| r.l1_error).collect();
    Ok(ConvergenceStudy {
        fit: fit_rate(&dx, &err)?,
        reports,
    })
}

/// Product test function `psi((x - xc) / wx) * psi((t - tc) / wt)` with
/// `psi(s) = (1 - s^2)^3` on `|s| < 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bump {
    pub xc: f64,
    pub wx: f64,
    pub tc: f64,
    pub wt: f64,
}

fn psi(s: f64) -> f64 {
    if s.abs() >= 1.0 {
        0.0
    } else {
        let q = 1.0 - s * s;
        q * q * q
    }
}

fn dpsi(s: f64) -> f64 {
    if s.abs() >= 1.0 {
        0.0
    } else {
        let q = 1.0 - s * s;
        -6.0 * s * q * q
    }
}

/// Antiderivative of `psi` with `Psi(-1) = -16/35`, constant outside.
fn psi_integral(s: f64) -> f64 {
    let s = s.clamp(-1.0, 1.0);
    let s2 = s * s;
    s * (1.0 - s2 + 0.6 * s2 * s2 - s2 * s2 * s2 / 7.0)
}

impl Bump {
    pub fn new(xc: f64, wx: f64, tc: f64, wt: f64) -> Result<Self> {
        if !(wx > 0.0 && wt > 0.0 && xc.is_finite() && tc.is_finite()) {
            return Err(Error::invalid("bump widths must be positive and centres finite"));
        }
        Ok(Bump { xc, wx, tc, wt })
    }

    pub fn eval(&self, x: f64, t: f64) -> f64 {
        psi((x - self.xc) / self.wx) * psi((t - self.tc) / self.wt)
    }

    fn time_factor(&self, t: f64) -> (f64, f64) {
        let s = (t - self.tc) / self.wt;
        (psi(s), dpsi(s) / self.wt)
    }

    fn space(&self, x: f64) -> f64 {
        psi((x - self.xc) / self.wx)
    }

    /// `int_a^b psi((x - xc) / wx) dx`.
    fn space_integral(&self, a: f64, b: f64) -> f64 {
        self.wx * (psi_integral((b - self.xc) / self.wx) - psi_integral((a - self.xc) / self.wx))
    }

    fn x_support(&self) -> (f64, f64) {
        (self.xc - self.wx, self.xc + self.wx)
    }

    /// Scale of the first derivatives, `1/wx + 1/wt`.
    pub fn derivative_scale(&self) -> f64 {
        1.0 / self.wx + 1.0 / self.wt
    }
}

/// Random bumps with spatial support inside `window` and time centre in
/// `[0, t_final]`; deterministic for a given seed.
pub fn random_bumps(seed: u64, count: usize, window: (f64, f64), t_final: f64) -> Vec<Bump> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let len = window.1 - window.0;
    (0..count)
        .map(|_| {
            let wx = rng.gen_range(0.05..0.25) * len;
            let xc = rng.gen_range(window.0 + wx..window.1 - wx);
            let wt = rng.gen_range(0.2..0.6) * t_final;
            let tc = rng.gen_range(0.0..t_final);
            Bump { xc, wx, tc, wt }
        })
        .collect()
}

/// Spatial integrals of one snapshot against the bump's spatial factor.
struct SpatialTerms {
    /// `int |v - k| X dx`
    eta: f64,
    /// `int (A v - f(k)) sgn(v - k) X' dx`
    flux: f64,
}

fn sgn(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Cells of a state including the two vacuum exteriors, clipped to the
/// bump's support: `(a, b, v, A(a), A(b))`.
fn cells_on_support(state: &ParticleState, vel: &[f64], lo: f64, hi: f64) -> Vec<(f64, f64, f64, f64, f64)> {
    let xs = state.positions();
    let n = xs.len();
    let mut out = Vec::new();
    let a_at = |x: f64, i: usize| {
        // A on the cell between particles i and i + 1.
        let s = (x - xs[i]) / (xs[i + 1] - xs[i]);
        vel[i] + s * (vel[i + 1] - vel[i])
    };
    if lo < xs[0] {
        let b = xs[0].min(hi);
        out.push((lo, b, 0.0, vel[0], vel[0]));
    }
    let start = xs.partition_point(|&p| p <= lo).saturating_sub(1);
    for i in start..n - 1 {
        if xs[i] >= hi {
            break;
        }
        let (a, b) = (xs[i].max(lo), xs[i + 1].min(hi));
        if b > a {
            out.push((a, b, state.densities()[i], a_at(a, i), a_at(b, i)));
        }
    }
    if hi > xs[n - 1] {
        let a = xs[n - 1].max(lo);
        out.push((a, hi, 0.0, vel[n - 1], vel[n - 1]));
    }
    out
}

fn spatial_terms(model: &FluxModel, state: &ParticleState, vel: &[f64], bump: &Bump, k: f64) -> SpatialTerms {
    let (lo, hi) = bump.x_support();
    let fk = model.eval_f(k);
    let mut eta = 0.0;
    let mut flux = 0.0;
    for (a, b, v, aa, ab) in cells_on_support(state, vel, lo, hi) {
        let ix = bump.space_integral(a, b);
        eta += (v - k).abs() * ix;
        let s = sgn(v - k);
        if s != 0.0 {
            // int A X' = [A X] - beta int X, with A affine of slope beta.
            let beta = (ab - aa) / (b - a);
            let int_a_dx = ab * bump.space(b) - aa * bump.space(a) - beta * ix;
            let int_dx = bump.space(b) - bump.space(a);
            flux += s * (v * int_a_dx - fk * int_dx);
        }
    }
    SpatialTerms { eta, flux }
}

/// Value of the entropy functional together with the tolerance it is
/// compared against.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EntropyDefect {
    pub k: f64,
    pub bump: Bump,
    pub value: f64,
    pub tol: f64,
}

impl EntropyDefect {
    pub fn passed(&self) -> bool {
        self.value >= -self.tol
    }
}

/// `C (dt + snapshot spacing) (1/wx + 1/wt) (mass + 2 k wx)`.
pub fn tol_entropy(dt: f64, snapshot_spacing: f64, bump: &Bump, total_mass: f64, k: f64) -> f64 {
    ENTROPY_TOL_CONSTANT * (dt + snapshot_spacing) * bump.derivative_scale() * (total_mass + k * 2.0 * bump.wx)
}

fn check_bump_window(bump: &Bump, window: (f64, f64), t_final: f64) -> Result<()> {
    let (lo, hi) = bump.x_support();
    if lo < window.0 || hi > window.1 || !(bump.tc >= 0.0 && bump.tc <= t_final) {
        return Err(Error::OutsideWindow(format!(
            "bump support [{lo}, {hi}] x centre time {} escapes [{}, {}] x [0, {t_final}]",
            bump.tc, window.0, window.1
        )));
    }
    Ok(())
}

/// Trapezoidal time quadrature over snapshots of `g(snapshot)`, skipping
/// zero-length collision intervals.
fn time_quadrature(trajectory: &Trajectory, values: &[f64]) -> f64 {
    trajectory
        .snapshots
        .windows(2)
        .enumerate()
        .map(|(j, w)| 0.5 * (w[1].time() - w[0].time()) * (values[j] + values[j + 1]))
        .sum()
}

/// Left side of the entropy inequality for `|v - k|` against `bump`:
/// `int int |v-k| phi_t + (Av - f(k)) sgn(v-k) phi_x - int phi(T)|v(T)-k| + int phi(0)|v0-k|`.
pub fn entropy_inequality_check(
    model: &FluxModel,
    trajectory: &Trajectory,
    k: f64,
    bump: &Bump,
    window: (f64, f64),
) -> Result<EntropyDefect> {
    if !(k >= 0.0 && k.is_finite()) {
        return Err(Error::invalid(format!("k must be nonnegative, got {k}")));
    }
    check_bump_window(bump, window, trajectory.final_time)?;
    let mut integrand = Vec::with_capacity(trajectory.snapshots.len());
    let mut boundary = 0.0;
    let last = trajectory.snapshots.len() - 1;
    for (j, snap) in trajectory.snapshots.iter().enumerate() {
        let (tf, dtf) = bump.time_factor(snap.time());
        if tf == 0.0 && dtf == 0.0 {
            integrand.push(0.0);
            continue;
        }
        let vel = velocities(model, &snap.state, Parallelism::Sequential)?;
        let terms = spatial_terms(model, &snap.state, &vel, bump, k);
        integrand.push(terms.eta * dtf + terms.flux * tf);
        if j == 0 {
            boundary += tf * terms.eta;
        }
        if j == last {
            boundary -= tf * terms.eta;
        }
    }
    let value = time_quadrature(trajectory, &integrand) + boundary;
    let tol = tol_entropy(
        trajectory.max_dt,
        trajectory.max_snapshot_spacing(),
        bump,
        trajectory.initial_state().total_mass(),
        k,
    );
    Ok(EntropyDefect {
        k,
        bump: *bump,
        value,
        tol,
    })
}

/// Entropy functional for many `(k, bump)` pairs, concurrently when `par`
/// allows; results keep the input order.
pub fn entropy_suite(
    model: &FluxModel,
    trajectory: &Trajectory,
    pairs: &[(f64, Bump)],
    window: (f64, f64),
    par: Parallelism,
) -> Result<Vec<EntropyDefect>> {
    map_collect(pairs, par, |(k, b)| entropy_inequality_check(model, trajectory, *k, b, window))
        .into_iter()
        .collect()
}

/// Weak continuity pairing
/// `int int (phi_t + A phi_x) v + int phi(0) v0 - int phi(T) v(T)`.
pub fn continuity_pairing(model: &FluxModel, trajectory: &Trajectory, bump: &Bump, window: (f64, f64)) -> Result<f64> {
    check_bump_window(bump, window, trajectory.final_time)?;
    let (lo, hi) = bump.x_support();
    let mut integrand = Vec::with_capacity(trajectory.snapshots.len());
    let mut boundary = 0.0;
    let last = trajectory.snapshots.len() - 1;
    for (j, snap) in trajectory.snapshots.iter().enumerate() {
        let (tf, dtf) = bump.time_factor(snap.time());
        if tf == 0.0 && dtf == 0.0 {
            integrand.push(0.0);
            continue;
        }
        let vel = velocities(model, &snap.state, Parallelism::Sequential)?;
        let (mut mass, mut transport) = (0.0, 0.0);
        for (a, b, v, aa, ab) in cells_on_support(&snap.state, &vel, lo, hi) {
            if v == 0.0 {
                continue;
            }
            let ix = bump.space_integral(a, b);
            let beta = (ab - aa) / (b - a);
            mass += v * ix;
            transport += v * (ab * bump.space(b) - aa * bump.space(a) - beta * ix);
        }
        integrand.push(mass * dtf + transport * tf);
        if j == 0 {
            boundary += tf * mass;
        }
        if j == last {
            boundary -= tf * mass;
        }
    }
    Ok(time_quadrature(trajectory, &integrand) + boundary)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InvariantCheck {
    pub name: String,
    pub passed: bool,
    /// Smallest slack over all snapshots; negative when violated.
    pub worst_margin: f64,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditReport {
    pub checks: Vec<InvariantCheck>,
}

impl AuditReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn failures(&self) -> Vec<String> {
        self.checks
            .iter()
            .filter(|c| !c.passed)
            .map(|c| format!("{}: {}", c.name, c.detail))
            .collect()
    }

    pub fn get(&self, name: &str) -> Option<&InvariantCheck> {
        self.checks.iter().find(|c| c.name == name)
    }
}

struct Tracker {
    name: &'static str,
    margin: f64,
    tol: f64,
    detail: String,
}

impl Tracker {
    fn new(name: &'static str, tol: f64) -> Self {
        Tracker {
            name,
            margin: f64::INFINITY,
            tol,
            detail: String::new(),
        }
    }

    fn observe(&mut self, margin: f64, detail: impl FnOnce() -> String) {
        if margin < self.margin {
            self.margin = margin;
            if margin < -self.tol {
                self.detail = detail();
            }
        }
    }

    fn finish(self) -> InvariantCheck {
        let passed = !(self.margin < -self.tol);
        InvariantCheck {
            name: self.name.into(),
            passed,
            worst_margin: if self.margin.is_finite() { self.margin } else { 0.0 },
            detail: if passed { "ok".into() } else { self.detail },
        }
    }
}

/// Evaluates the a priori properties of the scheme over every snapshot.
///
/// Original widths and masses are pulled through particle ids: a cell whose
/// left particle has id `p` and right particle id `q` spans the original
/// cells `p..q`.
pub fn invariant_audit(model: &FluxModel, trajectory: &Trajectory) -> Result<AuditReport> {
    let init = trajectory.initial_state();
    let x0 = init.positions();
    let m0 = init.masses();
    let v_star = init.max_density();
    let total0 = init.total_mass();
    let tv0 = init.total_variation();
    let ext = model.a_extrema(0.0, v_star.min(model.working_max()))?;
    let spread = ext.max - ext.min;

    let mut order = Tracker::new("ordering", 0.0);
    let mut mass = Tracker::new("mass_conservation", 0.0);
    let mut maxp = Tracker::new("maximum_principle", BOUND_TOL);
    let mut lower = Tracker::new("density_lower_bound", BOUND_TOL);
    let mut sep_lo = Tracker::new("separation_lower", BOUND_TOL);
    let mut sep_hi = Tracker::new("separation_upper", BOUND_TOL);
    let mut tv = Tracker::new("tv_diminishing", TV_TOL);
    let mut vb = Tracker::new("velocity_bounds", BOUND_TOL);
    let mut events = Tracker::new("collision_events", 0.0);

    let mut prev: Option<(f64, f64, f64, SnapshotKind)> = None;
    for snap in &trajectory.snapshots {
        let s = &snap.state;
        let t = s.time();
        let xs = s.positions();
        let ids = s.ids();
        let gap = xs.windows(2).map(|w| w[1] - w[0]).fold(f64::INFINITY, f64::min);
        order.observe(if gap > 0.0 { 1.0 } else { -1.0 }, || format!("positions not increasing at t = {t}"));

        let mut total = 0.0;
        for (i, w) in xs.windows(2).enumerate() {
            let (p, q) = (ids[i], ids[i + 1]);
            let width = w[1] - w[0];
            let v = s.densities()[i];
            let m = s.masses()[i];
            total += m;
            let m_orig = m0[p];
            let rel = |a: f64, b: f64| (a - b).abs() - MASS_REL_TOL * a.abs().max(b.abs()).max(f64::MIN_POSITIVE);
            mass.observe(-rel(m, m_orig).max(rel(v * width, m)).max(0.0), || {
                format!("cell id {p} at t = {t}: mass {m} (stored {m_orig}, v dx = {})", v * width)
            });
            // Widths, and so densities, carry a rounding error relative to
            // the position magnitude.
            let round_w = width_rounding(w[0], w[1]);
            maxp.observe(v_star - v + v * round_w / width, || {
                format!("density {v} > {v_star} in cell id {p} at t = {t}")
            });
            let span0 = x0[q] - x0[p];
            let upper_width = span0 + t * spread;
            lower.observe(v - m / upper_width, || {
                format!("density {v} below {} in cell id {p} at t = {t}", m / upper_width)
            });
            if v_star > 0.0 {
                sep_lo.observe(width - m / v_star + round_w, || format!("width {width} below {} in cell id {p} at t = {t}", m / v_star));
            }
            sep_hi.observe(upper_width - width, || format!("width {width} above {upper_width} in cell id {p} at t = {t}"));
        }
        match velocities(model, s, Parallelism::Sequential) {
            Ok(vel) => {
                for (i, v) in vel.iter().enumerate() {
                    vb.observe((v - ext.min).min(ext.max - v), || {
                        format!("velocity {v} of particle id {} outside [{}, {}] at t = {t}", ids[i], ext.min, ext.max)
                    });
                }
            }
            Err(e) => vb.observe(f64::NEG_INFINITY, || format!("velocities undefined at t = {t}: {e}")),
        }
        let tvs = s.total_variation();
        if let Some((pt, ptv, pmass, pkind)) = prev {
            let same_time_ok = pkind == SnapshotKind::PreCollision && snap.kind == SnapshotKind::PostCollision;
            order.observe(
                if t > pt || (t == pt && same_time_ok) { 1.0 } else { -1.0 },
                || format!("snapshot time {t} does not follow {pt}"),
            );
            tv.observe(ptv - tvs, || format!("TV rose from {ptv} to {tvs} at t = {t}"));
            let drift = if same_time_ok { pmass - total } else { -(total - pmass).abs() };
            let lim = if same_time_ok { MASS_TOL_EVENT * pmass } else { MASS_REL_TOL * pmass };
            mass.observe(if same_time_ok { lim - drift.abs() } else { (drift + lim).min(0.0) }, || {
                format!("total mass changed from {pmass} to {total} at t = {t}")
            });
        } else {
            mass.observe(-((total - total0).abs() - MASS_REL_TOL * total0).max(0.0), || "initial mass mismatch".into());
        }
        tv.observe(tv0 - tvs + 0.0, || format!("TV {tvs} above initial {tv0} at t = {t}"));
        prev = Some((t, tvs, total, snap.kind));
    }
    let n0 = init.particle_count();
    let removed: usize = trajectory.events.iter().map(|e| e.deleted_indices.len()).sum();
    events.observe(if removed < n0 - 1 { 1.0 } else { -1.0 }, || format!("{removed} particles removed out of {n0}"));
    for e in &trajectory.events {
        events.observe(MASS_TOL_EVENT * total0 - e.discarded_mass, || {
            format!("event at t = {} discarded mass {}", e.time, e.discarded_mass)
        });
    }
    Ok(AuditReport {
        checks: vec![
            order.finish(),
            mass.finish(),
            maxp.finish(),
            lower.finish(),
            sep_lo.finish(),
            sep_hi.finish(),
            tv.finish(),
            vb.finish(),
            events.finish(),
        ],
    })
}

const MASS_TOL_EVENT: f64 = crate::dynamics::MASS_TOL;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TemporalModulus {
    pub pairs_checked: usize,
    /// Largest `||v(t) - v(s)|| / (4 lip_f tv0 |t - s|)`.
    pub worst_ratio: f64,
    pub passed: bool,
}

/// Checks `||v(t) - v(s)||_L1 <= 1.05 * 4 lip_f |v0|_BV |t - s|` for all
/// pairs of snapshots at distinct times.
pub fn temporal_modulus_check(model: &FluxModel, trajectory: &Trajectory) -> Result<TemporalModulus> {
    let init = trajectory.initial_state();
    let lip = model.restricted_to(init.max_density().max(f64::MIN_POSITIVE))?.lip_f();
    let tv0 = init.total_variation();
    let recon: Vec<(f64, PiecewiseConstantFn)> = trajectory
        .snapshots
        .iter()
        .map(|s| (s.time(), reconstruct_v(&s.state)))
        .collect();
    let mut worst: f64 = 0.0;
    let mut pairs = 0;
    for (i, (s, vs)) in recon.iter().enumerate() {
        for (t, vt) in &recon[i + 1..] {
            if t <= s {
                continue;
            }
            let bound = 4.0 * lip * tv0 * (t - s);
            let d = vs.l1_distance(vt);
            worst = worst.max(if bound > 0.0 { d / bound } else if d > 0.0 { f64::INFINITY } else { 0.0 });
            pairs += 1;
        }
    }
    Ok(TemporalModulus {
        pairs_checked: pairs,
        worst_ratio: worst,
        passed: worst <= TEMPORAL_SLACK,
    })
}

/// `k` values and bumps for the entropy suite; deterministic for a seed.
pub fn random_entropy_pairs(seed: u64, count: usize, k_max: f64, window: (f64, f64), t_final: f64) -> Vec<(f64, Bump)> {
    let bumps = random_bumps(seed, count, window, t_final);
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
    bumps.into_iter().map(|b| (rng.gen_range(0.0..k_max), b)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::SnapshotSchedule;
    use crate::reference::burgers_paper_example;

    #[test]
    fn psi_antiderivative() {
        let n = 200_000;
        let h = 2.0 / n as f64;
        let rs: f64 = (0..n).map(|k| psi(-1.0 + (k as f64 + 0.5) * h) * h).sum();
        assert!((psi_integral(1.0) - psi_integral(-1.0) - rs).abs() < 1e-9);
        assert!((psi_integral(1.0) - 16.0 / 35.0).abs() < 1e-15);
        let d = (psi(0.3 + 1e-6) - psi(0.3 - 1e-6)) / 2e-6;
        assert!((dpsi(0.3) - d).abs() < 1e-8);
    }

    #[test]
    fn fit_examples() {
        let h = [0.4, 0.2, 0.1, 0.05];
        let e: Vec<f64> = h.iter().map(|x: &f64| 3.0 * x.sqrt()).collect();
        let f = fit_rate(&h, &e).unwrap();
        assert!((f.slope.unwrap() - 0.5).abs() < 1e-12);
        assert!((f.slope_finest3.unwrap() - 0.5).abs() < 1e-12);
        assert!((f.intercept.unwrap() - 3f64.ln()).abs() < 1e-12);
        let z = fit_rate(&h, &[1e-15, 0.0, 1e-16, 0.0]).unwrap();
        assert!(z.degenerate && z.slope.is_none());
        assert!(fit_rate(&[0.1, 0.2, 0.3], &[1.0, 1.0, 1.0]).is_err());
        assert!(fit_rate(&[0.2, 0.1], &[1.0, 1.0]).is_err());
    }

    #[test]
    fn bounds_are_monotone() {
        assert!(theorem_bound(0.1, 4.0, 0.02) > theorem_bound(0.1, 4.0, 0.01));
        assert_eq!(theorem_bound(0.3, 4.0, 0.0), 0.3);
        assert_eq!(corollary_bound(0.0, 4.0, 0.01, 0.0, 1.0, 3.0), 0.04);
    }

    fn burgers_run(n: usize, dt: f64, schedule: SnapshotSchedule) -> (FluxModel, InitialData, Trajectory) {
        let b = FluxModel::burgers().restricted_to(3.0).unwrap();
        let d = InitialData::paper_example();
        let xs = place_particles(&d, n, Placement::Uniform).unwrap();
        let s = cell_average(&d, &xs).unwrap();
        let c = IntegratorControls::default().with_dt_max(dt).with_schedule(schedule);
        let tr = run(&b, &s, 0.25, &c).unwrap();
        (b, d, tr)
    }

    #[test]
    fn example_report_within_bounds() {
        let (b, d, tr) = burgers_run(51, 1e-3, SnapshotSchedule::Count(64));
        let r = error_report(&b, &d, &tr, &burgers_paper_example(), (-1.0, 2.0)).unwrap();
        assert!(r.audit.passed(), "{:?}", r.audit.failures());
        assert!(r.l1_error > 0.0);
        assert!(r.l1_error <= r.theorem_bound, "{r:?}");
        assert!(r.l1_error <= r.corollary_bound.unwrap(), "{r:?}");
        assert_eq!(r.initial_gap, r.tail_mass);
        assert!((r.dx0_star - 0.1).abs() < 1e-14);
    }

    #[test]
    fn self_error_is_zero() {
        let lin = FluxModel::linear(1.0).unwrap();
        let d = InitialData::box_data(2.0, 0.0, 1.0).unwrap();
        let xs = place_particles(&d, 11, Placement::Uniform).unwrap();
        let s = cell_average(&d, &xs).unwrap();
        let tr = run(&lin, &s, 0.5, &IntegratorControls::default()).unwrap();
        let exact = ExactSolution::Translated { data: d.clone(), speed: 1.0 };
        let r = error_report(&lin, &d, &tr, &exact, (-1.0, 3.0)).unwrap();
        assert!(r.l1_error < 1e-12, "{}", r.l1_error);
        assert_eq!(r.residual, 0.0);
    }

    #[test]
    fn pairing_and_entropy_agree_at_zero() {
        let (b, _, tr) = burgers_run(26, 1e-3, SnapshotSchedule::EveryStep);
        for bump in random_bumps(3, 5, (-1.0, 2.0), 0.25) {
            let p = continuity_pairing(&b, &tr, &bump, (-1.0, 2.0)).unwrap();
            let e = entropy_inequality_check(&b, &tr, 0.0, &bump, (-1.0, 2.0)).unwrap();
            assert!((p - e.value).abs() < 1e-12, "{p} {}", e.value);
            assert!(p.abs() <= e.tol, "{p} {}", e.tol);
            let above = entropy_inequality_check(&b, &tr, 3.5, &bump, (-1.0, 2.0)).unwrap();
            assert!((above.value + p).abs() <= above.tol, "{} {p}", above.value);
        }
    }

    #[test]
    fn bump_outside_window_rejected() {
        let (b, _, tr) = burgers_run(26, 1e-2, SnapshotSchedule::Count(4));
        let bump = Bump::new(1.9, 0.2, 0.1, 0.05).unwrap();
        assert!(matches!(
            entropy_inequality_check(&b, &tr, 1.0, &bump, (-1.0, 2.0)),
            Err(Error::OutsideWindow(_))
        ));
    }

    #[test]
    fn audit_flags_corrupted_density() {
        let (b, _, mut tr) = burgers_run(26, 1e-2, SnapshotSchedule::Count(4));
        assert!(invariant_audit(&b, &tr).unwrap().passed());
        let s = &mut tr.snapshots[2].state;
        s.densities[5] = 3.5;
        let a = invariant_audit(&b, &tr).unwrap();
        assert!(!a.get("maximum_principle").unwrap().passed);
        assert!(a.get("maximum_principle").unwrap().worst_margin < 0.0);
    }

    #[test]
    fn temporal_modulus_on_example_run() {
        let (b, _, tr) = burgers_run(26, 1e-3, SnapshotSchedule::Count(16));
        let m = temporal_modulus_check(&b, &tr).unwrap();
        assert!(m.passed && m.worst_ratio > 0.0, "{m:?}");
        assert_eq!(m.pairs_checked, 17 * 16 / 2);
    }
}
