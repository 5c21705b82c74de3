//! Exact entropy solutions and a Godunov finite-volume oracle.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::PiecewiseConstantFn;
use crate::flux::FluxModel;
use crate::init::InitialData;
use crate::par::{map_range, Parallelism};

/// Points and tolerance of the second-difference convexity scan.
pub const CONVEXITY_SCAN_POINTS: usize = 1000;
pub const CONVEXITY_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum RiemannWave {
    Constant,
    Shock { speed: f64 },
    Rarefaction { head: f64, tail: f64 },
}

#[derive(Debug, Clone)]
pub enum ExactSolution {
    /// Burgers with `u0 = 3` on `(0, 1)` and `1` elsewhere, valid for `t < 1`.
    PaperExample,
    Riemann {
        model: FluxModel,
        u_l: f64,
        u_r: f64,
        x0: f64,
        wave: RiemannWave,
    },
    /// Transport of `data` at constant `speed`.
    Translated { data: InitialData, speed: f64 },
    Constant(f64),
}

impl ExactSolution {
    pub fn description(&self) -> String {
        match self {
            ExactSolution::PaperExample => "burgers example".into(),
            ExactSolution::Riemann { u_l, u_r, x0, wave, .. } => {
                format!("riemann u_l = {u_l}, u_r = {u_r}, x0 = {x0}, {wave:?}")
            }
            ExactSolution::Translated { data, speed } => format!("{} translated at {speed}", data.label),
            ExactSolution::Constant(c) => format!("constant {c}"),
        }
    }

    /// Solutions are valid on `[0, valid_until)`.
    pub fn valid_until(&self) -> f64 {
        match self {
            ExactSolution::PaperExample => 1.0,
            _ => f64::INFINITY,
        }
    }

    pub fn eval(&self, x: f64, t: f64) -> Result<f64> {
        if !(t >= 0.0 && t < self.valid_until()) {
            return Err(Error::OutsideWindow(format!(
                "{} evaluated at t = {t}, valid on [0, {})",
                self.description(),
                self.valid_until()
            )));
        }
        Ok(match self {
            ExactSolution::PaperExample => {
                if t == 0.0 {
                    if x > 0.0 && x < 1.0 {
                        3.0
                    } else {
                        1.0
                    }
                } else if x > t && x < 3.0 * t {
                    x / t
                } else if x >= 3.0 * t && x < 1.0 + 2.0 * t {
                    3.0
                } else {
                    1.0
                }
            }
            ExactSolution::Riemann {
                model,
                u_l,
                u_r,
                x0,
                wave,
            } => {
                let xi = if t == 0.0 {
                    if x < *x0 {
                        f64::NEG_INFINITY
                    } else {
                        f64::INFINITY
                    }
                } else {
                    (x - x0) / t
                };
                match *wave {
                    RiemannWave::Constant => *u_l,
                    RiemannWave::Shock { speed } => {
                        if xi < speed {
                            *u_l
                        } else {
                            *u_r
                        }
                    }
                    RiemannWave::Rarefaction { head, tail } => {
                        if xi <= tail {
                            *u_l
                        } else if xi >= head {
                            *u_r
                        } else {
                            invert_fprime(model, *u_l, *u_r, xi)
                        }
                    }
                }
            }
            ExactSolution::Translated { data, speed } => data.eval(x - speed * t),
            ExactSolution::Constant(c) => *c,
        })
    }

    /// Points in `(lo, hi)` where `u(., t)` may fail to be smooth.
    pub fn breakpoints(&self, t: f64, lo: f64, hi: f64) -> Vec<f64> {
        let pts: Vec<f64> = match self {
            ExactSolution::PaperExample => vec![0.0, t, 3.0 * t, 1.0, 1.0 + 2.0 * t],
            ExactSolution::Riemann { x0, wave, .. } => match *wave {
                RiemannWave::Constant => vec![],
                RiemannWave::Shock { speed } => vec![x0 + speed * t],
                RiemannWave::Rarefaction { head, tail } => vec![x0 + tail * t, x0 + head * t],
            },
            ExactSolution::Translated { data, speed } => {
                let (a, b) = data.support_hint();
                let mut v = data.breakpoints_all();
                v.extend([a, b]);
                v.iter().map(|p| p + speed * t).collect()
            }
            ExactSolution::Constant(_) => vec![],
        };
        let mut pts: Vec<f64> = pts.into_iter().filter(|&p| p > lo && p < hi).collect();
        pts.sort_by(f64::total_cmp);
        pts.dedup();
        pts
    }

    /// Samples `u(., t)` as `(x, u)` rows at `n` equispaced points.
    pub fn sample(&self, t: f64, lo: f64, hi: f64, n: usize) -> Result<Vec<(f64, f64)>> {
        let n = n.max(2);
        (0..n)
            .map(|k| {
                let x = lo + (hi - lo) * k as f64 / (n - 1) as f64;
                Ok((x, self.eval(x, t)?))
            })
            .collect()
    }
}

/// Solves `f'(u) = xi` for `u` between `u_l` and `u_r` by bisection.
fn invert_fprime(model: &FluxModel, u_l: f64, u_r: f64, xi: f64) -> f64 {
    let (mut lo, mut hi) = (u_l, u_r);
    let increasing = model.eval_fprime(hi) >= model.eval_fprime(lo);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid == lo || mid == hi {
            break;
        }
        let below = model.eval_fprime(mid) < xi;
        if below == increasing {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// The Burgers solution with `u0 = 3` on `(0, 1)` and `1` elsewhere.
pub fn burgers_paper_example() -> ExactSolution {
    ExactSolution::PaperExample
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Curvature {
    Convex,
    Concave,
}

fn curvature(model: &FluxModel, lo: f64, hi: f64) -> Option<Curvature> {
    let n = CONVEXITY_SCAN_POINTS;
    let h = (hi - lo) / (n - 1) as f64;
    let (mut convex, mut concave) = (true, true);
    for k in 1..n - 1 {
        let u = lo + h * k as f64;
        let d2 = (model.eval_f(u - h) - 2.0 * model.eval_f(u) + model.eval_f(u + h)) / (h * h);
        convex &= d2 >= -CONVEXITY_TOL;
        concave &= d2 <= CONVEXITY_TOL;
    }
    if convex {
        Some(Curvature::Convex)
    } else if concave {
        Some(Curvature::Concave)
    } else {
        None
    }
}

/// Exact solution of the Riemann problem `u_l` / `u_r` at `x0` for a flux
/// that is convex or concave between the two states.
pub fn riemann_exact(model: &FluxModel, u_l: f64, u_r: f64, x0: f64) -> Result<ExactSolution> {
    if !(u_l >= 0.0 && u_r >= 0.0 && u_l.is_finite() && u_r.is_finite()) {
        return Err(Error::invalid(format!(
            "riemann states must be finite and nonnegative, got ({u_l}, {u_r})"
        )));
    }
    let wave = if u_l == u_r {
        RiemannWave::Constant
    } else {
        let (lo, hi) = (u_l.min(u_r), u_l.max(u_r));
        let shape = curvature(model, lo, hi).ok_or_else(|| {
            Error::Precondition(format!(
                "flux is neither convex nor concave on [{lo}, {hi}]; use the Godunov oracle"
            ))
        })?;
        let shock = match shape {
            Curvature::Convex => u_l > u_r,
            Curvature::Concave => u_l < u_r,
        };
        let (tail, head) = (model.eval_fprime(u_l), model.eval_fprime(u_r));
        if shock || head - tail <= 1e-14 * (1.0 + tail.abs()) {
            RiemannWave::Shock {
                speed: (model.eval_f(u_l) - model.eval_f(u_r)) / (u_l - u_r),
            }
        } else {
            RiemannWave::Rarefaction { head, tail }
        }
    };
    Ok(ExactSolution::Riemann {
        model: model.clone(),
        u_l,
        u_r,
        x0,
        wave,
    })
}

/// Uniform finite-volume mesh on `[lo, hi]`. `dt = None` picks the largest
/// step with CFL number 0.9.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Mesh {
    pub cells: usize,
    pub lo: f64,
    pub hi: f64,
    pub dt: Option<f64>,
}

pub const CFL_MAX: f64 = 0.9;

/// Godunov flux `min f on [ul, ur]` if `ul <= ur`, else `max f on [ur, ul]`.
pub fn godunov_flux(model: &FluxModel, ul: f64, ur: f64) -> Result<f64> {
    if ul <= ur {
        Ok(model.f_extrema(ul, ur)?.min)
    } else {
        Ok(model.f_extrema(ur, ul)?.max)
    }
}

/// First-order Godunov solution at time `t_final` on `mesh`, with
/// zero-gradient boundary cells. The data is cell-averaged without
/// truncation to its support hint.
pub fn godunov_oracle(
    model: &FluxModel,
    data: &InitialData,
    mesh: &Mesh,
    t_final: f64,
    par: Parallelism,
) -> Result<PiecewiseConstantFn> {
    if mesh.cells < 2 || !(mesh.lo < mesh.hi) {
        return Err(Error::invalid("mesh needs at least two cells on a nonempty interval"));
    }
    if !(t_final >= 0.0 && t_final.is_finite()) {
        return Err(Error::invalid(format!("final time must be nonnegative, got {t_final}")));
    }
    let n = mesh.cells;
    let dx = (mesh.hi - mesh.lo) / n as f64;
    let edges: Vec<f64> = (0..=n)
        .map(|k| if k == n { mesh.hi } else { mesh.lo + dx * k as f64 })
        .collect();
    let mut u: Vec<f64> = edges
        .windows(2)
        .enumerate()
        .map(|(cell, w)| {
            data.integrate(w[0], w[1])
                .map(|m| m / (w[1] - w[0]))
                .map_err(|_| Error::Quadrature { cell, lo: w[0], hi: w[1] })
        })
        .collect::<Result<_>>()?;
    let sup = u.iter().copied().fold(0.0, f64::max);
    let lip = model.restricted_to(sup.max(f64::MIN_POSITIVE))?.lip_f();
    let dt_cfl = if lip > 0.0 { CFL_MAX * dx / lip } else { f64::INFINITY };
    let dt = match mesh.dt {
        Some(dt) if dt * lip / dx > CFL_MAX * (1.0 + 1e-12) => {
            return Err(Error::Precondition(format!(
                "CFL number {} exceeds {CFL_MAX}",
                dt * lip / dx
            )))
        }
        Some(dt) if dt > 0.0 => dt,
        Some(dt) => return Err(Error::invalid(format!("dt must be positive, got {dt}"))),
        None => dt_cfl,
    };
    let steps = if t_final == 0.0 { 0 } else { (t_final / dt).ceil().max(1.0) as usize };
    let dt = if steps == 0 { 0.0 } else { t_final / steps as f64 };
    for _ in 0..steps {
        // Interface k sits between cells k - 1 and k, ghosts copy the ends.
        let fluxes: Vec<f64> = map_range(n + 1, par, 1024, |k| {
            let ul = u[k.saturating_sub(1)];
            let ur = u[k.min(n - 1)];
            godunov_flux(model, ul, ur)
        })
        .into_iter()
        .collect::<Result<_>>()?;
        for (i, ui) in u.iter_mut().enumerate() {
            *ui -= dt / dx * (fluxes[i + 1] - fluxes[i]);
        }
    }
    PiecewiseConstantFn::new(edges, u)
}
