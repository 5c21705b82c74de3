//! Flux functions `f`, the velocity field `a(u) = f(u)/u` and its interval
//! extrema.
//!
//! Every model satisfies `f(0) = 0`; `a(0)` is defined as `f'(0)`. Builtin
//! models carry an analytic extremum oracle for `a` (monotone closed forms
//! or critical points of a polynomial). Tabulated fluxes fall back to a
//! Lipschitz-aware scan followed by golden-section refinement.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Self-check tolerance for analytic extremum oracles.
pub const TOL_EXT_ANALYTIC: f64 = 1e-10;
/// Accuracy target of the numeric extremum fallback.
pub const TOL_EXT_NUMERIC: f64 = 1e-8;
/// Relative slack applied to the supremum of the initial data when fixing
/// the working interval.
pub const WORKING_INTERVAL_SLACK: f64 = 1e-12;

const MAX_SCAN: usize = 4097;
const MIN_SCAN: usize = 65;
const ROOT_SAMPLES: usize = 512;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FluxKind {
    /// `f(u) = u^2 / 2`.
    Burgers,
    /// `f(u) = v_max * u * (1 - u / u_max)`.
    Lwr { v_max: f64, u_max: f64 },
    /// `f(u) = speed * u`.
    Linear { speed: f64 },
    /// `f(u) = sum_k coeffs[k] * u^k`.
    Polynomial { coeffs: Vec<f64> },
    /// Piecewise linear interpolation of samples `(u_k, f_k)`, linearly
    /// extended past the last sample.
    Tabulated { u: Vec<f64>, f: Vec<f64> },
}

/// Extrema of a function over a closed interval together with points
/// attaining them.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Extrema {
    pub min: f64,
    pub max: f64,
    pub argmin: f64,
    pub argmax: f64,
}

impl Extrema {
    fn point(x: f64, value: f64) -> Self {
        Extrema {
            min: value,
            max: value,
            argmin: x,
            argmax: x,
        }
    }

    fn from_candidates(candidates: impl IntoIterator<Item = f64>, g: impl Fn(f64) -> f64) -> Self {
        let mut it = candidates.into_iter();
        let first = it.next().expect("at least one candidate");
        let mut ext = Extrema::point(first, g(first));
        for x in it {
            let y = g(x);
            if y < ext.min {
                ext.min = y;
                ext.argmin = x;
            }
            if y > ext.max {
                ext.max = y;
                ext.argmax = x;
            }
        }
        ext
    }
}

/// An immutable flux model restricted to a working interval `[0, u_cap]`.
#[derive(Debug, Clone, PartialEq)]
pub struct FluxModel {
    kind: FluxKind,
    u_cap: f64,
    a_zero: f64,
}

impl FluxModel {
    pub fn new(kind: FluxKind) -> Result<Self> {
        let (u_cap, a_zero) = match &kind {
            FluxKind::Burgers => (f64::INFINITY, 0.0),
            FluxKind::Lwr { v_max, u_max } => {
                if !(v_max.is_finite() && *v_max >= 0.0 && u_max.is_finite() && *u_max > 0.0) {
                    return Err(Error::invalid(format!(
                        "lwr requires v_max >= 0 and u_max > 0, got v_max = {v_max}, u_max = {u_max}"
                    )));
                }
                (*u_max, *v_max)
            }
            FluxKind::Linear { speed } => {
                if !speed.is_finite() {
                    return Err(Error::invalid("linear flux speed must be finite"));
                }
                (f64::INFINITY, *speed)
            }
            FluxKind::Polynomial { coeffs } => {
                if coeffs.is_empty() || coeffs.iter().any(|c| !c.is_finite()) {
                    return Err(Error::invalid("polynomial flux needs finite coefficients"));
                }
                if coeffs[0] != 0.0 {
                    return Err(Error::invalid(format!(
                        "polynomial flux has f(0) = {} != 0",
                        coeffs[0]
                    )));
                }
                (f64::INFINITY, coeffs.get(1).copied().unwrap_or(0.0))
            }
            FluxKind::Tabulated { u, f } => {
                if u.len() < 2 || u.len() != f.len() {
                    return Err(Error::invalid(
                        "tabulated flux needs at least two (u, f) samples of equal length",
                    ));
                }
                if u[0] != 0.0 {
                    return Err(Error::invalid("tabulated flux must start at u = 0"));
                }
                if f[0] != 0.0 {
                    return Err(Error::invalid(format!("tabulated flux has f(0) = {} != 0", f[0])));
                }
                if u.windows(2).any(|w| w[1] <= w[0]) || u.iter().chain(f).any(|x| !x.is_finite()) {
                    return Err(Error::invalid(
                        "tabulated flux samples must be finite with strictly increasing u",
                    ));
                }
                let u_max = *u.last().unwrap();
                let h = 1e-7 * u_max;
                let a0 = tabulated_eval(u, f, h) / h;
                (u_max, a0)
            }
        };
        Ok(FluxModel {
            kind,
            u_cap,
            a_zero,
        })
    }

    pub fn burgers() -> Self {
        FluxModel::new(FluxKind::Burgers).unwrap()
    }

    pub fn lwr(v_max: f64, u_max: f64) -> Result<Self> {
        FluxModel::new(FluxKind::Lwr { v_max, u_max })
    }

    pub fn linear(speed: f64) -> Result<Self> {
        FluxModel::new(FluxKind::Linear { speed })
    }

    pub fn polynomial(coeffs: Vec<f64>) -> Result<Self> {
        FluxModel::new(FluxKind::Polynomial { coeffs })
    }

    pub fn tabulated(u: Vec<f64>, f: Vec<f64>) -> Result<Self> {
        FluxModel::new(FluxKind::Tabulated { u, f })
    }

    pub fn kind(&self) -> &FluxKind {
        &self.kind
    }

    pub fn name(&self) -> &'static str {
        match self.kind {
            FluxKind::Burgers => "burgers",
            FluxKind::Lwr { .. } => "lwr",
            FluxKind::Linear { .. } => "linear",
            FluxKind::Polynomial { .. } => "polynomial",
            FluxKind::Tabulated { .. } => "tabulated",
        }
    }

    /// Upper end of the working interval.
    pub fn working_max(&self) -> f64 {
        self.u_cap
    }

    /// Restricts the working interval to `[0, sup * (1 + 1e-12)]`, where
    /// `sup` is the supremum of the initial data.
    pub fn restricted_to(&self, sup: f64) -> Result<Self> {
        if !(sup.is_finite() && sup >= 0.0) {
            return Err(Error::invalid(format!("working interval supremum {sup} is invalid")));
        }
        let cap = sup * (1.0 + WORKING_INTERVAL_SLACK);
        if cap > self.u_cap * (1.0 + WORKING_INTERVAL_SLACK) {
            return Err(Error::invalid(format!(
                "data supremum {sup} exceeds the admissible range [0, {}] of the {} flux",
                self.u_cap,
                self.name()
            )));
        }
        Ok(FluxModel {
            kind: self.kind.clone(),
            u_cap: cap.min(self.u_cap),
            a_zero: self.a_zero,
        })
    }

    /// Whether `a` has a closed-form extremum oracle.
    pub fn has_extremum_oracle(&self) -> bool {
        !matches!(self.kind, FluxKind::Tabulated { .. })
    }

    pub fn eval_f(&self, u: f64) -> f64 {
        match &self.kind {
            FluxKind::Burgers => 0.5 * u * u,
            FluxKind::Lwr { v_max, u_max } => v_max * u * (1.0 - u / u_max),
            FluxKind::Linear { speed } => speed * u,
            FluxKind::Polynomial { coeffs } => poly_eval(coeffs, u),
            FluxKind::Tabulated { u: us, f } => tabulated_eval(us, f, u),
        }
    }

    /// `a(u) = f(u)/u` with `a(0) = f'(0)`.
    pub fn eval_a(&self, u: f64) -> f64 {
        match &self.kind {
            FluxKind::Burgers => 0.5 * u,
            FluxKind::Lwr { v_max, u_max } => v_max * (1.0 - u / u_max),
            FluxKind::Linear { speed } => *speed,
            FluxKind::Polynomial { coeffs } => poly_eval(&coeffs[1..], u),
            FluxKind::Tabulated { u: us, f } => {
                if u == 0.0 {
                    self.a_zero
                } else {
                    tabulated_eval(us, f, u) / u
                }
            }
        }
    }

    /// `f'(u)`; for tabulated fluxes the slope of the segment containing `u`
    /// (right-continuous at knots).
    pub fn eval_fprime(&self, u: f64) -> f64 {
        match &self.kind {
            FluxKind::Burgers => u,
            FluxKind::Lwr { v_max, u_max } => v_max * (1.0 - 2.0 * u / u_max),
            FluxKind::Linear { speed } => *speed,
            FluxKind::Polynomial { coeffs } => poly_eval(&poly_deriv(coeffs), u),
            FluxKind::Tabulated { u: us, f } => {
                let k = segment_index(us, u);
                (f[k + 1] - f[k]) / (us[k + 1] - us[k])
            }
        }
    }

    /// `f'(0)`, equal to `a(0)`.
    pub fn fprime_zero(&self) -> f64 {
        self.a_zero
    }

    /// Lipschitz constant of `f` on the working interval.
    pub fn lip_f(&self) -> f64 {
        let cap = self.u_cap;
        match &self.kind {
            FluxKind::Burgers => cap,
            FluxKind::Lwr { v_max, u_max } => v_max * 1f64.max((1.0 - 2.0 * cap / u_max).abs()),
            FluxKind::Linear { speed } => speed.abs(),
            FluxKind::Polynomial { coeffs } => poly_abs_max(&poly_deriv(coeffs), 0.0, cap),
            FluxKind::Tabulated { u, f } => u
                .windows(2)
                .zip(f.windows(2))
                .filter(|(uw, _)| uw[0] < cap)
                .map(|(uw, fw)| ((fw[1] - fw[0]) / (uw[1] - uw[0])).abs())
                .fold(0.0, f64::max),
        }
    }

    /// Lipschitz constant of `f'` on the working interval, when `f'` is
    /// Lipschitz.
    pub fn lip_fprime(&self) -> Option<f64> {
        match &self.kind {
            FluxKind::Burgers => Some(1.0),
            FluxKind::Lwr { v_max, u_max } => Some(2.0 * v_max / u_max),
            FluxKind::Linear { .. } => Some(0.0),
            FluxKind::Polynomial { coeffs } => {
                Some(poly_abs_max(&poly_deriv(&poly_deriv(coeffs)), 0.0, self.u_cap))
            }
            FluxKind::Tabulated { .. } => None,
        }
    }

    fn check_interval(&self, lo: f64, hi: f64) -> Result<()> {
        if !(lo.is_finite() && hi.is_finite()) || lo < 0.0 || lo > hi {
            return Err(Error::invalid(format!(
                "interval [{lo}, {hi}] must satisfy 0 <= lo <= hi"
            )));
        }
        if hi > self.u_cap {
            return Err(Error::invalid(format!(
                "interval [{lo}, {hi}] leaves the working interval [0, {}]",
                self.u_cap
            )));
        }
        Ok(())
    }

    /// Minimum and maximum of `a` on `[lo, hi]` with points attaining them.
    pub fn a_extrema(&self, lo: f64, hi: f64) -> Result<Extrema> {
        self.check_interval(lo, hi)?;
        if lo == hi {
            return Ok(Extrema::point(lo, self.eval_a(lo)));
        }
        Ok(match &self.kind {
            FluxKind::Burgers => Extrema {
                min: self.eval_a(lo),
                max: self.eval_a(hi),
                argmin: lo,
                argmax: hi,
            },
            FluxKind::Lwr { v_max, .. } if *v_max > 0.0 => Extrema {
                min: self.eval_a(hi),
                max: self.eval_a(lo),
                argmin: hi,
                argmax: lo,
            },
            FluxKind::Lwr { .. } | FluxKind::Linear { .. } => Extrema::point(lo, self.eval_a(lo)),
            FluxKind::Polynomial { coeffs } => {
                let a_coeffs = &coeffs[1..];
                let crit = poly_roots_in(&poly_deriv(a_coeffs), lo, hi);
                Extrema::from_candidates(
                    [lo, hi].into_iter().chain(crit),
                    |u| poly_eval(a_coeffs, u),
                )
            }
            FluxKind::Tabulated { .. } => self.numeric_a_extrema(lo, hi),
        })
    }

    /// Scan-and-refine extremum search for `a`, used when no analytic oracle
    /// exists. Public so it can be compared against the analytic oracles.
    pub fn numeric_a_extrema(&self, lo: f64, hi: f64) -> Extrema {
        numeric_extrema(|u| self.eval_a(u), lo, hi)
    }

    /// Minimum and maximum of `f` on `[lo, hi]`; the Godunov flux is built on
    /// this.
    pub fn f_extrema(&self, lo: f64, hi: f64) -> Result<Extrema> {
        if !(lo.is_finite() && hi.is_finite()) || lo < 0.0 || lo > hi {
            return Err(Error::invalid(format!(
                "interval [{lo}, {hi}] must satisfy 0 <= lo <= hi"
            )));
        }
        if lo == hi {
            return Ok(Extrema::point(lo, self.eval_f(lo)));
        }
        let f = |u| self.eval_f(u);
        Ok(match &self.kind {
            FluxKind::Burgers | FluxKind::Linear { .. } => Extrema::from_candidates([lo, hi], f),
            FluxKind::Lwr { u_max, .. } => {
                let peak = 0.5 * u_max;
                let inner = (peak > lo && peak < hi).then_some(peak);
                Extrema::from_candidates([lo, hi].into_iter().chain(inner), f)
            }
            FluxKind::Polynomial { coeffs } => {
                let crit = poly_roots_in(&poly_deriv(coeffs), lo, hi);
                Extrema::from_candidates([lo, hi].into_iter().chain(crit), f)
            }
            FluxKind::Tabulated { u, .. } => {
                let knots = u.iter().copied().filter(|&k| k > lo && k < hi);
                Extrema::from_candidates([lo, hi].into_iter().chain(knots), f)
            }
        })
    }
}

/// Constructs a named builtin flux. Recognised names: `burgers`,
/// `lwr` (params `v_max`, `u_max`, both default 1) and `linear`
/// (param `speed`, default 1).
pub fn builtin_flux(name: &str, params: &[(&str, f64)]) -> Result<FluxModel> {
    let get = |key: &str, default: f64| -> Result<f64> {
        let mut value = default;
        for (k, v) in params {
            if *k == key {
                value = *v;
            } else if !matches!(*k, "v_max" | "u_max" | "speed") {
                return Err(Error::invalid(format!("unknown flux parameter '{k}'")));
            }
        }
        Ok(value)
    };
    match name {
        "burgers" => Ok(FluxModel::burgers()),
        "lwr" => FluxModel::lwr(get("v_max", 1.0)?, get("u_max", 1.0)?),
        "linear" => FluxModel::linear(get("speed", 1.0)?),
        other => Err(Error::invalid(format!("unknown flux '{other}'"))),
    }
}

fn numeric_extrema(g: impl Fn(f64) -> f64, lo: f64, hi: f64) -> Extrema {
    let width = hi - lo;
    // Lipschitz estimate of g from a coarse pass.
    let coarse = 64;
    let mut lip = 0.0f64;
    let mut prev = g(lo);
    for k in 1..=coarse {
        let x = lo + width * k as f64 / coarse as f64;
        let y = g(x);
        lip = lip.max((y - prev).abs() / (width / coarse as f64));
        prev = y;
    }
    let wanted = (width * lip.max(1.0) / TOL_EXT_NUMERIC).ceil() as usize + 1;
    let n = wanted.clamp(MIN_SCAN, MAX_SCAN);
    let h = width / (n - 1) as f64;
    let xs = |k: usize| if k == n - 1 { hi } else { lo + h * k as f64 };

    let mut ext = Extrema::point(lo, g(lo));
    let (mut kmin, mut kmax) = (0, 0);
    for k in 1..n {
        let x = xs(k);
        let y = g(x);
        if y < ext.min {
            ext.min = y;
            ext.argmin = x;
            kmin = k;
        }
        if y > ext.max {
            ext.max = y;
            ext.argmax = x;
            kmax = k;
        }
    }
    let bracket = |k: usize| (xs(k.saturating_sub(1)), xs((k + 1).min(n - 1)));
    let (a, b) = bracket(kmin);
    let (x, y) = golden_min(&g, a, b);
    if y < ext.min {
        ext.min = y;
        ext.argmin = x;
    }
    let (a, b) = bracket(kmax);
    let (x, y) = golden_min(&|u| -g(u), a, b);
    if -y > ext.max {
        ext.max = -y;
        ext.argmax = x;
    }
    ext
}

fn golden_min(g: &impl Fn(f64) -> f64, mut a: f64, mut b: f64) -> (f64, f64) {
    const INV_PHI: f64 = 0.618_033_988_749_894_8;
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let (mut fc, mut fd) = (g(c), g(d));
    for _ in 0..80 {
        if b - a <= 1e-14 * (1.0 + a.abs()) {
            break;
        }
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INV_PHI * (b - a);
            fc = g(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INV_PHI * (b - a);
            fd = g(d);
        }
    }
    if fc < fd {
        (c, fc)
    } else {
        (d, fd)
    }
}

fn segment_index(us: &[f64], u: f64) -> usize {
    let last = us.len() - 2;
    match us.binary_search_by(|p| p.partial_cmp(&u).unwrap()) {
        Ok(k) => k.min(last),
        Err(0) => 0,
        Err(k) => (k - 1).min(last),
    }
}

fn tabulated_eval(us: &[f64], f: &[f64], u: f64) -> f64 {
    let k = segment_index(us, u);
    let s = (u - us[k]) / (us[k + 1] - us[k]);
    f[k] + s * (f[k + 1] - f[k])
}

pub(crate) fn poly_eval(c: &[f64], x: f64) -> f64 {
    c.iter().rev().fold(0.0, |acc, &ck| acc * x + ck)
}

pub(crate) fn poly_deriv(c: &[f64]) -> Vec<f64> {
    c.iter()
        .enumerate()
        .skip(1)
        .map(|(k, &ck)| k as f64 * ck)
        .collect()
}

fn poly_abs_max(c: &[f64], lo: f64, hi: f64) -> f64 {
    let deg = c.iter().rposition(|&x| x != 0.0);
    match deg {
        None => 0.0,
        Some(0) => c[0].abs(),
        Some(_) if !hi.is_finite() => f64::INFINITY,
        Some(_) => {
            let crit = poly_roots_in(&poly_deriv(c), lo, hi);
            [lo, hi]
                .into_iter()
                .chain(crit)
                .map(|x| poly_eval(c, x).abs())
                .fold(0.0, f64::max)
        }
    }
}

/// Real roots of the polynomial `c` inside `[lo, hi]`.
pub(crate) fn poly_roots_in(c: &[f64], lo: f64, hi: f64) -> Vec<f64> {
    let deg = match c.iter().rposition(|&x| x != 0.0) {
        None | Some(0) => return Vec::new(),
        Some(d) => d,
    };
    let inside = |x: &f64| *x >= lo && *x <= hi;
    match deg {
        1 => [-c[0] / c[1]].into_iter().filter(inside).collect(),
        2 => {
            let (a, b, cc) = (c[2], c[1], c[0]);
            let disc = b * b - 4.0 * a * cc;
            if disc < 0.0 {
                return Vec::new();
            }
            let q = -0.5 * (b + b.signum() * disc.sqrt());
            let mut roots = Vec::with_capacity(2);
            if q != 0.0 {
                roots.push(q / a);
                roots.push(cc / q);
            } else {
                roots.push(0.0);
            }
            roots.into_iter().filter(inside).collect()
        }
        _ => {
            let hi_eff = if hi.is_finite() { hi } else { lo + 1e6 };
            let n = ROOT_SAMPLES;
            let h = (hi_eff - lo) / n as f64;
            let mut roots = Vec::new();
            let mut x0 = lo;
            let mut y0 = poly_eval(c, x0);
            for k in 1..=n {
                let x1 = if k == n { hi_eff } else { lo + h * k as f64 };
                let y1 = poly_eval(c, x1);
                if y0 == 0.0 {
                    roots.push(x0);
                } else if y0 * y1 < 0.0 {
                    let (mut a, mut b, mut ya) = (x0, x1, y0);
                    for _ in 0..100 {
                        let m = 0.5 * (a + b);
                        let ym = poly_eval(c, m);
                        if ym == 0.0 || b - a <= 1e-15 * (1.0 + m.abs()) {
                            a = m;
                            b = m;
                            break;
                        }
                        if ya * ym < 0.0 {
                            b = m;
                        } else {
                            a = m;
                            ya = ym;
                        }
                    }
                    roots.push(0.5 * (a + b));
                }
                x0 = x1;
                y0 = y1;
            }
            if y0 == 0.0 {
                roots.push(x0);
            }
            roots
        }
    }
}
