//! Initial data, particle placement and cell averaging.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quad::{adaptive_simpson, QuadratureFailure};

/// Per-cell tolerance of the adaptive quadrature used for non-piecewise data.
pub const TOL_QUAD: f64 = 1e-10;

pub type DensityFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

#[derive(Clone)]
pub enum Profile {
    /// Piecewise constant: `values[0]` on `(-inf, breakpoints[0])`,
    /// `values[k]` on `(breakpoints[k-1], breakpoints[k])`, `values[m]` on
    /// `(breakpoints[m-1], inf)`.
    Piecewise {
        breakpoints: Vec<f64>,
        values: Vec<f64>,
    },
    /// Linear interpolation of samples, zero outside the sampled range.
    Sampled { x: Vec<f64>, u: Vec<f64> },
    /// Arbitrary density, integrated adaptively between declared breakpoints.
    Function {
        density: DensityFn,
        breakpoints: Vec<f64>,
    },
}

impl fmt::Debug for Profile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Profile::Piecewise {
                breakpoints,
                values,
            } => f
                .debug_struct("Piecewise")
                .field("breakpoints", breakpoints)
                .field("values", values)
                .finish(),
            Profile::Sampled { x, u } => f.debug_struct("Sampled").field("x", x).field("u", u).finish(),
            Profile::Function { breakpoints, .. } => f
                .debug_struct("Function")
                .field("breakpoints", breakpoints)
                .finish_non_exhaustive(),
        }
    }
}

/// Nonnegative initial data with a finite support hint.
///
/// The scheme only sees `u0` on the support hint: data that does not decay
/// (Riemann states, the rarefaction/shock example) is truncated there.
#[derive(Debug, Clone)]
pub struct InitialData {
    pub label: String,
    profile: Profile,
    hint: (f64, f64),
    tv_u0: f64,
    sup_u0: f64,
}

impl InitialData {
    /// Piecewise constant data; see [`Profile::Piecewise`] for the layout.
    pub fn piecewise(
        label: impl Into<String>,
        breakpoints: Vec<f64>,
        values: Vec<f64>,
        hint: (f64, f64),
    ) -> Result<Self> {
        if values.len() != breakpoints.len() + 1 {
            return Err(Error::invalid("piecewise data needs one more value than breakpoints"));
        }
        if breakpoints.windows(2).any(|w| w[1] <= w[0]) || breakpoints.iter().any(|b| !b.is_finite()) {
            return Err(Error::invalid("breakpoints must be finite and strictly increasing"));
        }
        if values.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::invalid("initial data must be finite and nonnegative"));
        }
        let tv_u0 = values.windows(2).map(|w| (w[1] - w[0]).abs()).sum();
        let sup_u0 = values.iter().copied().fold(0.0, f64::max);
        InitialData {
            label: label.into(),
            profile: Profile::Piecewise {
                breakpoints,
                values,
            },
            hint,
            tv_u0,
            sup_u0,
        }
        .validated()
    }

    /// Two constant states separated at `x0`, truncated to `[x0 - 1, x0 + 1]`.
    pub fn riemann(u_l: f64, u_r: f64, x0: f64) -> Result<Self> {
        InitialData::piecewise(
            format!("riemann({u_l}, {u_r}, {x0})"),
            vec![x0],
            vec![u_l, u_r],
            (x0 - 1.0, x0 + 1.0),
        )
    }

    /// `u0 = 3` on `(0, 1)` and `1` elsewhere, truncated to `[-2, 3]`.
    pub fn paper_example() -> Self {
        InitialData::piecewise("paper_example", vec![0.0, 1.0], vec![1.0, 3.0, 1.0], (-2.0, 3.0))
            .expect("valid builtin")
    }

    /// `height` on `(a, b)`, zero elsewhere.
    pub fn box_data(height: f64, a: f64, b: f64) -> Result<Self> {
        if !(a < b) {
            return Err(Error::invalid(format!("box needs a < b, got ({a}, {b})")));
        }
        InitialData::piecewise(
            format!("box({height}, {a}, {b})"),
            vec![a, b],
            vec![0.0, height, 0.0],
            (a, b),
        )
    }

    /// Piecewise constant data `values[k]` on `(breakpoints[k], breakpoints[k+1])`,
    /// zero outside.
    pub fn piecewise_constant(breakpoints: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if breakpoints.len() < 2 || values.len() + 1 != breakpoints.len() {
            return Err(Error::invalid(
                "piecewise_constant needs n + 1 breakpoints for n values",
            ));
        }
        let hint = (breakpoints[0], *breakpoints.last().unwrap());
        let mut all = Vec::with_capacity(values.len() + 2);
        all.push(0.0);
        all.extend(values);
        all.push(0.0);
        InitialData::piecewise("piecewise_constant", breakpoints, all, hint)
    }

    /// Linear interpolation of `(x, u)` samples, zero outside them.
    pub fn sampled(x: Vec<f64>, u: Vec<f64>) -> Result<Self> {
        if x.len() < 2 || x.len() != u.len() {
            return Err(Error::invalid("sampled data needs at least two (x, u) pairs"));
        }
        if x.windows(2).any(|w| w[1] <= w[0]) || x.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("sample positions must be finite and strictly increasing"));
        }
        if u.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::invalid("initial data must be finite and nonnegative"));
        }
        let tv_u0 = u[0] + u[u.len() - 1] + u.windows(2).map(|w| (w[1] - w[0]).abs()).sum::<f64>();
        let sup_u0 = u.iter().copied().fold(0.0, f64::max);
        let hint = (x[0], x[x.len() - 1]);
        InitialData {
            label: "sampled".into(),
            profile: Profile::Sampled { x, u },
            hint,
            tv_u0,
            sup_u0,
        }
        .validated()
    }

    /// Arbitrary density. `tv_u0` and `sup_u0` are supplied by the caller;
    /// `breakpoints` mark discontinuities or kinks the quadrature should split at.
    pub fn function(
        label: impl Into<String>,
        density: DensityFn,
        breakpoints: Vec<f64>,
        hint: (f64, f64),
        tv_u0: f64,
        sup_u0: f64,
    ) -> Result<Self> {
        if !(tv_u0 >= 0.0 && sup_u0 >= 0.0) {
            return Err(Error::invalid("tv_u0 and sup_u0 must be nonnegative"));
        }
        InitialData {
            label: label.into(),
            profile: Profile::Function {
                density,
                breakpoints,
            },
            hint,
            tv_u0,
            sup_u0,
        }
        .validated()
    }

    fn validated(self) -> Result<Self> {
        let (lo, hi) = self.hint;
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(Error::invalid(format!("support hint [{lo}, {hi}] must be finite and nonempty")));
        }
        Ok(self)
    }

    /// Replaces the support hint (truncation window).
    pub fn with_hint(mut self, lo: f64, hi: f64) -> Result<Self> {
        self.hint = (lo, hi);
        self.validated()
    }

    pub fn profile(&self) -> &Profile {
        &self.profile
    }

    pub fn support_hint(&self) -> (f64, f64) {
        self.hint
    }

    /// Total variation of `u0` over the real line as declared by the data.
    pub fn tv_u0(&self) -> f64 {
        self.tv_u0
    }

    pub fn sup_u0(&self) -> f64 {
        self.sup_u0
    }

    /// Total variation of `u0` restricted to the support hint and extended
    /// by zero, i.e. of the data the scheme actually approximates.
    pub fn tv_truncated(&self) -> f64 {
        match &self.profile {
            Profile::Piecewise {
                breakpoints,
                values,
            } => {
                let (lo, hi) = self.hint;
                let mut seq = vec![0.0];
                for (k, &v) in values.iter().enumerate() {
                    let left = if k == 0 { f64::NEG_INFINITY } else { breakpoints[k - 1] };
                    let right = breakpoints.get(k).copied().unwrap_or(f64::INFINITY);
                    if right > lo && left < hi {
                        seq.push(v);
                    }
                }
                seq.push(0.0);
                seq.windows(2).map(|w| (w[1] - w[0]).abs()).sum()
            }
            _ => self.tv_u0,
        }
    }

    pub fn eval(&self, x: f64) -> f64 {
        match &self.profile {
            Profile::Piecewise {
                breakpoints,
                values,
            } => values[breakpoints.partition_point(|&b| b <= x)],
            Profile::Sampled { x: xs, u } => {
                if x < xs[0] || x > xs[xs.len() - 1] {
                    return 0.0;
                }
                let k = xs.partition_point(|&p| p <= x).clamp(1, xs.len() - 1);
                let s = (x - xs[k - 1]) / (xs[k] - xs[k - 1]);
                u[k - 1] + s * (u[k] - u[k - 1])
            }
            Profile::Function { density, .. } => density(x),
        }
    }

    /// Discontinuities or kinks of the profile.
    pub fn breakpoints_all(&self) -> Vec<f64> {
        match &self.profile {
            Profile::Piecewise { breakpoints, .. } => breakpoints.clone(),
            Profile::Sampled { x, .. } => x.clone(),
            Profile::Function { breakpoints, .. } => breakpoints.clone(),
        }
    }

    fn breakpoints_in(&self, a: f64, b: f64) -> Vec<f64> {
        let all: &[f64] = match &self.profile {
            Profile::Piecewise { breakpoints, .. } => breakpoints,
            Profile::Sampled { x, .. } => x,
            Profile::Function { breakpoints, .. } => breakpoints,
        };
        let mut pts = vec![a];
        pts.extend(all.iter().copied().filter(|&p| p > a && p < b));
        pts.push(b);
        pts
    }

    /// `int_a^b g(u0(x)) dx` where `g` is applied pointwise. Exact for
    /// piecewise constant data; adaptive Simpson otherwise, split at the
    /// profile's breakpoints.
    fn integrate_composed(
        &self,
        a: f64,
        b: f64,
        g: impl Fn(f64) -> f64,
        kinks: &[f64],
    ) -> std::result::Result<f64, QuadratureFailure> {
        if b <= a {
            return Ok(0.0);
        }
        let pts = self.breakpoints_in(a, b);
        let mut total = 0.0;
        for w in pts.windows(2) {
            let (p, q) = (w[0], w[1]);
            if let Profile::Piecewise { .. } = self.profile {
                total += g(self.eval(0.5 * (p + q))) * (q - p);
                continue;
            }
            let mut sub = vec![p];
            sub.extend(kinks.iter().copied().filter(|&k| k > p && k < q));
            sub.push(q);
            for s in sub.windows(2) {
                let f = |x: f64| g(self.eval(x));
                total += adaptive_simpson(&f, s[0], s[1], TOL_QUAD)?;
            }
        }
        Ok(total)
    }

    /// `int_a^b u0 dx`.
    pub fn integrate(&self, a: f64, b: f64) -> std::result::Result<f64, QuadratureFailure> {
        self.integrate_composed(a, b, |u| u, &[])
    }

    /// `int_a^b |u0 - c| dx`, split where linear samples cross `c`.
    fn l1_against_constant(&self, a: f64, b: f64, c: f64) -> std::result::Result<f64, QuadratureFailure> {
        let kinks: Vec<f64> = match &self.profile {
            Profile::Sampled { x, u } => x
                .windows(2)
                .zip(u.windows(2))
                .filter_map(|(xw, uw)| {
                    let (d0, d1) = (uw[0] - c, uw[1] - c);
                    (d0 * d1 < 0.0).then(|| xw[0] + (xw[1] - xw[0]) * d0 / (d0 - d1))
                })
                .collect(),
            _ => Vec::new(),
        };
        self.integrate_composed(a, b, |u| (u - c).abs(), &kinks)
    }
}

/// Absolute rounding allowance on a width `xr - xl` computed from
/// positions of that magnitude.
pub(crate) fn width_rounding(xl: f64, xr: f64) -> f64 {
    4.0 * f64::EPSILON * (xl.abs() + xr.abs())
}

/// Particle positions, local densities and conserved cell masses.
///
/// Cell `i` lies between particles `i` and `i + 1`. The exterior cells
/// `(-inf, x_1)` and `(x_N, inf)` carry density zero and are not stored.
/// `ids[i]` is the index particle `i` had at time zero; cell `i` inherits the
/// id of its left particle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParticleState {
    pub(crate) time: f64,
    pub(crate) positions: Vec<f64>,
    pub(crate) densities: Vec<f64>,
    pub(crate) masses: Vec<f64>,
    pub(crate) ids: Vec<usize>,
}

impl ParticleState {
    /// State at time zero from positions and densities; masses are
    /// `density * width`.
    pub fn new(positions: Vec<f64>, densities: Vec<f64>) -> Result<Self> {
        let masses = positions
            .windows(2)
            .zip(&densities)
            .map(|(w, v)| v * (w[1] - w[0]))
            .collect();
        ParticleState::from_parts(0.0, positions, densities, masses, None)
    }

    /// State from conserved cell masses; densities are `mass / width`.
    pub fn from_masses(time: f64, positions: Vec<f64>, masses: Vec<f64>, ids: Option<Vec<usize>>) -> Result<Self> {
        let densities = positions
            .windows(2)
            .zip(&masses)
            .map(|(w, m)| m / (w[1] - w[0]))
            .collect();
        ParticleState::from_parts(time, positions, densities, masses, ids)
    }

    pub(crate) fn from_parts(
        time: f64,
        positions: Vec<f64>,
        densities: Vec<f64>,
        masses: Vec<f64>,
        ids: Option<Vec<usize>>,
    ) -> Result<Self> {
        if positions.len() < 2 {
            return Err(Error::invalid("a particle state needs at least two particles"));
        }
        if densities.len() + 1 != positions.len() || masses.len() != densities.len() {
            return Err(Error::invalid("need exactly one density and mass per cell"));
        }
        if positions.iter().any(|x| !x.is_finite()) {
            return Err(Error::invalid("particle positions must be finite"));
        }
        if let Some(k) = positions.windows(2).position(|w| w[1] <= w[0]) {
            return Err(Error::invalid(format!(
                "particle positions must be strictly increasing (violated at index {k})"
            )));
        }
        if densities.iter().chain(&masses).any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::invalid("densities and masses must be finite and nonnegative"));
        }
        let ids = ids.unwrap_or_else(|| (0..positions.len()).collect());
        if ids.len() != positions.len() || ids.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::invalid("particle ids must be strictly increasing, one per particle"));
        }
        Ok(ParticleState {
            time,
            positions,
            densities,
            masses,
            ids,
        })
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn positions(&self) -> &[f64] {
        &self.positions
    }

    pub fn densities(&self) -> &[f64] {
        &self.densities
    }

    pub fn masses(&self) -> &[f64] {
        &self.masses
    }

    /// Original indices of the surviving particles.
    pub fn ids(&self) -> &[usize] {
        &self.ids
    }

    pub fn particle_count(&self) -> usize {
        self.positions.len()
    }

    pub fn cell_count(&self) -> usize {
        self.densities.len()
    }

    pub fn width(&self, i: usize) -> f64 {
        self.positions[i + 1] - self.positions[i]
    }

    pub fn widths(&self) -> impl Iterator<Item = f64> + '_ {
        self.positions.windows(2).map(|w| w[1] - w[0])
    }

    pub fn total_mass(&self) -> f64 {
        self.masses.iter().sum()
    }

    pub fn max_density(&self) -> f64 {
        self.densities.iter().copied().fold(0.0, f64::max)
    }

    /// Total variation of the reconstruction, including the jumps to the
    /// zero exterior.
    pub fn total_variation(&self) -> f64 {
        let n = self.densities.len();
        if n == 0 {
            return 0.0;
        }
        self.densities[0]
            + self.densities[n - 1]
            + self.densities.windows(2).map(|w| (w[1] - w[0]).abs()).sum::<f64>()
    }

    /// Density of cell `i`, with zero for the exterior cells `i < 0` or
    /// `i >= cell_count()`.
    pub fn density_or_vacuum(&self, i: isize) -> f64 {
        if i < 0 {
            0.0
        } else {
            self.densities.get(i as usize).copied().unwrap_or(0.0)
        }
    }

    /// Largest spacing between consecutive particles.
    pub fn max_spacing(&self) -> f64 {
        self.widths().fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Placement {
    /// Equal spacing over the support hint.
    Uniform,
    /// Equal mass between consecutive particles.
    MassEquidistributed,
}

/// Initial particle positions covering the support hint.
pub fn place_particles(data: &InitialData, n: usize, strategy: Placement) -> Result<Vec<f64>> {
    if n < 2 {
        return Err(Error::invalid(format!("need at least two particles, got {n}")));
    }
    let (lo, hi) = data.support_hint();
    let mut xs = Vec::with_capacity(n);
    match strategy {
        Placement::Uniform => {
            for k in 0..n {
                xs.push(if k == n - 1 {
                    hi
                } else {
                    lo + (hi - lo) * k as f64 / (n - 1) as f64
                });
            }
        }
        Placement::MassEquidistributed => {
            let cdf = |x: f64| {
                data.integrate(lo, x)
                    .map_err(|q| Error::Quadrature { cell: 0, lo: q.lo, hi: q.hi })
            };
            let total = cdf(hi)?;
            if total <= 0.0 {
                return Err(Error::invalid(
                    "mass-equidistributed placement needs positive total mass",
                ));
            }
            xs.push(lo);
            let mut left = lo;
            for k in 1..n - 1 {
                let target = total * k as f64 / (n - 1) as f64;
                let (mut a, mut b) = (left, hi);
                for _ in 0..200 {
                    let m = 0.5 * (a + b);
                    if m <= a || m >= b {
                        break;
                    }
                    if cdf(m)? < target {
                        a = m;
                    } else {
                        b = m;
                    }
                }
                let x = 0.5 * (a + b);
                xs.push(x);
                left = x;
            }
            xs.push(hi);
        }
    }
    if let Some(k) = xs.windows(2).position(|w| w[1] <= w[0]) {
        return Err(Error::invalid(format!(
            "placement produced non-increasing positions at index {k}"
        )));
    }
    Ok(xs)
}

/// Cell averages of `u0` between consecutive particles: the scheme's state at
/// time zero.
pub fn cell_average(data: &InitialData, positions: &[f64]) -> Result<ParticleState> {
    if positions.len() < 2 {
        return Err(Error::invalid("need at least two particles"));
    }
    if let Some(k) = positions.windows(2).position(|w| w[1] <= w[0]) {
        return Err(Error::invalid(format!(
            "particle positions must be strictly increasing (violated at index {k})"
        )));
    }
    let mut masses = Vec::with_capacity(positions.len() - 1);
    for (cell, w) in positions.windows(2).enumerate() {
        let m = data.integrate(w[0], w[1]).map_err(|_| Error::Quadrature {
            cell,
            lo: w[0],
            hi: w[1],
        })?;
        masses.push(m.max(0.0));
    }
    ParticleState::from_masses(0.0, positions.to_vec(), masses, None)
}

/// `||v0 - u0||_L1` split into the part between the outer particles and the
/// tail mass of the (truncated) data outside them.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InitialGap {
    pub interior: f64,
    pub tail_mass: f64,
    pub total: f64,
}

pub fn initial_l1_gap(data: &InitialData, state: &ParticleState) -> Result<InitialGap> {
    let xs = state.positions();
    let mut interior = 0.0;
    for (cell, w) in xs.windows(2).enumerate() {
        interior += data
            .l1_against_constant(w[0], w[1], state.densities()[cell])
            .map_err(|_| Error::Quadrature {
                cell,
                lo: w[0],
                hi: w[1],
            })?;
    }
    let (lo, hi) = data.support_hint();
    let (first, last) = (xs[0], xs[xs.len() - 1]);
    let tail = |a: f64, b: f64| {
        data.integrate(a, b)
            .map_err(|q| Error::Quadrature { cell: usize::MAX, lo: q.lo, hi: q.hi })
    };
    let tail_mass = tail(lo, first.min(hi))? + tail(last.max(lo), hi)?;
    Ok(InitialGap {
        interior,
        tail_mass,
        total: interior + tail_mass,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
        a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol)
    }

    fn example_on_minus1_2() -> InitialData {
        InitialData::paper_example().with_hint(-1.0, 2.0).unwrap()
    }

    #[test]
    fn uniform_placement_of_example_data() {
        let xs = place_particles(&example_on_minus1_2(), 4, Placement::Uniform).unwrap();
        assert_eq!(xs, vec![-1.0, 0.0, 1.0, 2.0]);
    }

    #[test]
    fn mass_equidistributed_box() {
        let d = InitialData::box_data(1.0, 0.0, 1.0).unwrap();
        let xs = place_particles(&d, 5, Placement::MassEquidistributed).unwrap();
        assert!(close(&xs, &[0.0, 0.25, 0.5, 0.75, 1.0], 1e-12), "{xs:?}");
    }

    #[test]
    fn mass_equidistributed_two_level() {
        let d = InitialData::piecewise_constant(vec![0.0, 1.0, 2.0], vec![2.0, 1.0]).unwrap();
        let xs = place_particles(&d, 4, Placement::MassEquidistributed).unwrap();
        // Oracle: cumulative mass 3, thirds at masses 1 and 2, inverted by a
        // fine Riemann-sum CDF.
        let cdf = |x: f64| {
            let n = 200_000;
            (0..n)
                .map(|k| d.eval((k as f64 + 0.5) * x / n as f64) * x / n as f64)
                .sum::<f64>()
        };
        assert!((cdf(xs[1]) - 1.0).abs() < 1e-6 && (cdf(xs[2]) - 2.0).abs() < 1e-6);
        assert!(close(&xs, &[0.0, 0.5, 1.0, 2.0], 1e-12), "{xs:?}");
    }

    #[test]
    fn placement_errors() {
        let d = InitialData::box_data(1.0, 0.0, 1.0).unwrap();
        assert!(place_particles(&d, 1, Placement::Uniform).is_err());
        let zero = InitialData::box_data(0.0, 0.0, 1.0).unwrap();
        assert!(place_particles(&zero, 3, Placement::MassEquidistributed).is_err());
        assert!(d.clone().with_hint(0.0, f64::INFINITY).is_err());
    }

    #[test]
    fn cell_averages() {
        let p = example_on_minus1_2();
        let s = cell_average(&p, &[0.0, 0.5, 1.0]).unwrap();
        assert_eq!(s.densities(), &[3.0, 3.0]);
        let s = cell_average(&p, &[-1.0, 0.0, 1.0, 2.0]).unwrap();
        assert_eq!(s.densities(), &[1.0, 3.0, 1.0]);
        let b = InitialData::box_data(1.0, 0.0, 1.0).unwrap();
        let s = cell_average(&b, &[-1.0, 1.0]).unwrap();
        assert_eq!(s.densities(), &[0.5]);
        assert_eq!(s.time(), 0.0);
    }

    #[test]
    fn masses_sum_to_integral() {
        let d = InitialData::function(
            "bump",
            Arc::new(|x: f64| if (0.0..=1.0).contains(&x) { (std::f64::consts::PI * x).sin() } else { 0.0 }),
            vec![0.0, 1.0],
            (0.0, 1.0),
            2.0,
            1.0,
        )
        .unwrap();
        let xs = place_particles(&d, 17, Placement::Uniform).unwrap();
        let s = cell_average(&d, &xs).unwrap();
        assert!((s.total_mass() - 2.0 / std::f64::consts::PI).abs() < 1e-9);
        for (i, w) in s.widths().enumerate() {
            assert!((s.densities()[i] * w - s.masses()[i]).abs() <= 1e-15);
        }
        // Averaging never increases variation.
        assert!(s.total_variation() <= d.tv_truncated() + 1e-12);
    }

    #[test]
    fn quadrature_failure_names_cell() {
        let d = InitialData::function(
            "bad",
            Arc::new(|x: f64| if x > 0.75 { f64::NAN } else { 1.0 }),
            vec![],
            (0.0, 1.0),
            1.0,
            1.0,
        )
        .unwrap();
        let err = cell_average(&d, &[0.0, 0.5, 1.0]).unwrap_err();
        assert!(matches!(err, Error::Quadrature { cell: 1, .. }), "{err}");
    }

    #[test]
    fn gap_examples() {
        let b = InitialData::box_data(1.0, 0.0, 1.0).unwrap();
        let s = cell_average(&b, &[-1.0, 1.0]).unwrap();
        let g = initial_l1_gap(&b, &s).unwrap();
        // Oracle: midpoint Riemann sum of |0.5 - u0| on [-1, 1].
        let n = 100_000;
        let riemann: f64 = (0..n)
            .map(|k| {
                let x = -1.0 + 2.0 * (k as f64 + 0.5) / n as f64;
                (0.5 - b.eval(x)).abs() * 2.0 / n as f64
            })
            .sum();
        assert!((g.total - 1.0).abs() < 1e-14);
        assert!((riemann - 1.0).abs() < 1e-9);
        assert_eq!(g.tail_mass, 0.0);

        let p = example_on_minus1_2();
        let xs = place_particles(&p, 4, Placement::Uniform).unwrap();
        let s = cell_average(&p, &xs).unwrap();
        assert_eq!(initial_l1_gap(&p, &s).unwrap().total, 0.0);
    }

    #[test]
    fn gap_bounded_by_spacing_times_variation() {
        let d = InitialData::sampled(vec![0.0, 0.3, 0.7, 1.5], vec![0.0, 2.0, 0.5, 1.0]).unwrap();
        for n in [3, 5, 9, 33] {
            let xs = place_particles(&d, n, Placement::Uniform).unwrap();
            let s = cell_average(&d, &xs).unwrap();
            let g = initial_l1_gap(&d, &s).unwrap();
            assert!(g.total <= s.max_spacing() * d.tv_u0() + g.tail_mass + 1e-12);
        }
        // Particles not covering the hint: the uncovered mass is the tail.
        let s = cell_average(&d, &[0.3, 0.7]).unwrap();
        let g = initial_l1_gap(&d, &s).unwrap();
        assert!((g.tail_mass - (0.3 + 0.8 * 0.75)).abs() < 1e-12);
    }

    #[test]
    fn truncated_variation() {
        let p = InitialData::paper_example();
        assert_eq!(p.tv_u0(), 4.0);
        assert_eq!(p.tv_truncated(), 6.0);
        let r = InitialData::riemann(0.2, 0.8, 0.0).unwrap();
        assert!((r.tv_truncated() - 1.6).abs() < 1e-15);
        let b = InitialData::box_data(2.0, 0.0, 1.0).unwrap();
        assert_eq!(b.tv_truncated(), b.tv_u0());
    }

    #[test]
    fn exact_averaging_when_breakpoints_are_particles() {
        let d = InitialData::piecewise_constant(vec![0.0, 0.5, 2.0, 2.25], vec![1.0, 0.0, 4.0]).unwrap();
        let xs = vec![0.0, 0.25, 0.5, 1.0, 2.0, 2.25];
        let s = cell_average(&d, &xs).unwrap();
        assert_eq!(initial_l1_gap(&d, &s).unwrap().total, 0.0);
    }
}
