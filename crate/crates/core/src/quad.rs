//! Adaptive Simpson quadrature.

/// Returned when the recursion depth is exhausted before the tolerance is met.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadratureFailure {
    pub lo: f64,
    pub hi: f64,
}

const MAX_DEPTH: u32 = 48;

/// Integrates `f` over `[a, b]` to absolute tolerance `tol`.
pub fn adaptive_simpson<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    b: f64,
    tol: f64,
) -> Result<f64, QuadratureFailure> {
    if b <= a {
        return Ok(0.0);
    }
    let fa = f(a);
    let fb = f(b);
    let m = 0.5 * (a + b);
    let fm = f(m);
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    recurse(f, a, b, fa, fm, fb, whole, tol, MAX_DEPTH)
}

#[allow(clippy::too_many_arguments)]
fn recurse<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: u32,
) -> Result<f64, QuadratureFailure> {
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm);
    let frm = f(rm);
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    if !delta.is_finite() {
        return Err(QuadratureFailure { lo: a, hi: b });
    }
    if delta.abs() <= 15.0 * tol || (b - a) <= f64::EPSILON * (a.abs() + b.abs()) {
        return Ok(left + right + delta / 15.0);
    }
    if depth == 0 {
        return Err(QuadratureFailure { lo: a, hi: b });
    }
    let l = recurse(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)?;
    let r = recurse(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)?;
    Ok(l + r)
}

const GL_NODES: [f64; 5] = [
    0.0,
    0.538_469_310_105_683_1,
    -0.538_469_310_105_683_1,
    0.906_179_845_938_664,
    -0.906_179_845_938_664,
];
const GL_WEIGHTS: [f64; 5] = [
    0.568_888_888_888_888_9,
    0.478_628_670_499_366_5,
    0.478_628_670_499_366_5,
    0.236_926_885_056_189_1,
    0.236_926_885_056_189_1,
];

fn gauss5<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> f64 {
    let (m, r) = (0.5 * (a + b), 0.5 * (b - a));
    r * GL_NODES.iter().zip(GL_WEIGHTS).map(|(x, w)| w * f(m + r * x)).sum::<f64>()
}

/// Adaptive five-point Gauss-Legendre quadrature to absolute tolerance
/// `tol`. The integrand is never evaluated at interval endpoints, so
/// one-sided values at jumps located exactly there do not matter.
pub fn adaptive_gauss<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    b: f64,
    tol: f64,
) -> Result<f64, QuadratureFailure> {
    if b <= a {
        return Ok(0.0);
    }
    gauss_recurse(f, a, b, gauss5(f, a, b), tol, MAX_DEPTH)
}

fn gauss_recurse<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    b: f64,
    whole: f64,
    tol: f64,
    depth: u32,
) -> Result<f64, QuadratureFailure> {
    let m = 0.5 * (a + b);
    let left = gauss5(f, a, m);
    let right = gauss5(f, m, b);
    let delta = left + right - whole;
    if !delta.is_finite() {
        return Err(QuadratureFailure { lo: a, hi: b });
    }
    if delta.abs() <= tol || (b - a) <= f64::EPSILON * (a.abs() + b.abs()) {
        return Ok(left + right);
    }
    if depth == 0 {
        return Err(QuadratureFailure { lo: a, hi: b });
    }
    Ok(gauss_recurse(f, a, m, left, 0.5 * tol, depth - 1)? + gauss_recurse(f, m, b, right, 0.5 * tol, depth - 1)?)
}
