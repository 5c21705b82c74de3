//! Entropic particle velocity for nonnegative neighbouring densities.

use crate::error::{Error, Result};
use crate::flux::FluxModel;

/// Velocity of a particle separating a cell of density `v_l` (left) from a
/// cell of density `v_r` (right).
///
/// Returns the minimum of `a` over `[v_l, v_r]` when `v_l <= v_r` and the
/// maximum of `a` over `[v_r, v_l]` otherwise.
pub fn particle_velocity(model: &FluxModel, v_l: f64, v_r: f64) -> Result<f64> {
    if !(v_l >= 0.0 && v_r >= 0.0) {
        return Err(Error::invalid(format!(
            "particle velocity needs nonnegative densities, got ({v_l}, {v_r})"
        )));
    }
    if v_l <= v_r {
        Ok(model.a_extrema(v_l, v_r)?.min)
    } else {
        Ok(model.a_extrema(v_r, v_l)?.max)
    }
}

/// Samples used by the nonincreasing scan of `a`.
pub const MONOTONE_SCAN_POINTS: usize = 2001;

/// Checks that `a` is numerically nonincreasing on `[0, u_hi]`.
pub fn check_nonincreasing(model: &FluxModel, u_hi: f64) -> Result<()> {
    let n = MONOTONE_SCAN_POINTS;
    let mut prev = model.eval_a(0.0);
    for k in 1..n {
        let u = u_hi * k as f64 / (n - 1) as f64;
        let a = model.eval_a(u);
        if a > prev + 1e-12 * (1.0 + prev.abs()) {
            return Err(Error::Precondition(format!(
                "a is increasing near u = {u}: a({u}) = {a} > {prev}"
            )));
        }
        prev = a;
    }
    Ok(())
}

/// Largest deviation `|V(v_l, v_r) - a(v_r)|` over `pairs`.
///
/// For a nonincreasing velocity field the particle velocity is the
/// follow-the-leader velocity `a(v_r)` of the cell ahead, so the deviation
/// vanishes up to the extremum tolerance.
pub fn ftl_coincidence_check(model: &FluxModel, pairs: &[(f64, f64)]) -> Result<f64> {
    let u_hi = if model.working_max().is_finite() {
        model.working_max()
    } else {
        pairs
            .iter()
            .map(|&(l, r)| l.max(r))
            .fold(0.0, f64::max)
    };
    check_nonincreasing(model, u_hi)?;
    let mut worst = 0.0f64;
    for &(v_l, v_r) in pairs {
        let v = particle_velocity(model, v_l, v_r)?;
        worst = worst.max((v - model.eval_a(v_r)).abs());
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn burgers_increasing_pair() {
        let b = FluxModel::burgers();
        // Grid minimum of u/2 over [1, 3].
        let grid_min = (0..=10_000)
            .map(|k| 0.5 * (1.0 + 2.0 * k as f64 / 10_000.0))
            .fold(f64::INFINITY, f64::min);
        assert_eq!(particle_velocity(&b, 1.0, 3.0).unwrap(), grid_min);
        assert_eq!(grid_min, 0.5);
    }

    #[test]
    fn equal_states_give_a() {
        let l = FluxModel::lwr(1.0, 1.0).unwrap();
        for c in [0.0, 0.13, 0.5, 1.0] {
            assert_eq!(particle_velocity(&l, c, c).unwrap(), l.eval_a(c));
        }
    }

    #[test]
    fn lwr_decreasing_pair_is_ftl_velocity() {
        let l = FluxModel::lwr(1.0, 1.0).unwrap();
        let v = particle_velocity(&l, 0.8, 0.2).unwrap();
        assert!((v - 0.8).abs() < 1e-15);
        assert_eq!(v, l.eval_a(0.2));
    }

    #[test]
    fn vacuum_neighbours() {
        let b = FluxModel::burgers();
        assert_eq!(particle_velocity(&b, 0.0, 3.0).unwrap(), 0.0);
        assert_eq!(particle_velocity(&b, 1.0, 0.0).unwrap(), 0.5);
    }

    #[test]
    fn negative_state_rejected() {
        let b = FluxModel::burgers();
        assert!(matches!(particle_velocity(&b, -1.0, 1.0), Err(Error::InvalidInput(_))));
        assert!(particle_velocity(&b, 1.0, f64::NAN).is_err());
    }

    #[test]
    fn ftl_single_pair_and_precondition() {
        let l = FluxModel::lwr(1.0, 1.0).unwrap();
        assert_eq!(ftl_coincidence_check(&l, &[(0.5, 0.5)]).unwrap(), 0.0);
        let b = FluxModel::burgers().restricted_to(2.0).unwrap();
        let err = ftl_coincidence_check(&b, &[(0.5, 1.0)]).unwrap_err();
        assert!(matches!(err, Error::Precondition(ref m) if m.contains("u =")), "{err}");
    }

    fn models() -> Vec<FluxModel> {
        vec![
            FluxModel::burgers().restricted_to(3.0).unwrap(),
            FluxModel::lwr(1.0, 1.0).unwrap(),
            FluxModel::polynomial(vec![0.0, 0.5, -0.5, 1.0 / 3.0]).unwrap().restricted_to(1.5).unwrap(),
        ]
    }

    proptest! {
        #[test]
        fn velocity_within_extrema(x in 0.0f64..1.0, y in 0.0f64..1.0) {
            for m in models() {
                let cap = m.working_max() / 1.000_000_001;
                let (vl, vr) = (x * cap, y * cap);
                let v = particle_velocity(&m, vl, vr).unwrap();
                let e = m.a_extrema(vl.min(vr), vl.max(vr)).unwrap();
                prop_assert!(e.min <= v && v <= e.max);
            }
        }

        #[test]
        fn entropic_ordering(x in 0.0f64..1.0, y in 0.0f64..1.0, z in 0.0f64..1.0) {
            for m in models() {
                let cap = m.working_max() / 1.000_000_001;
                let (p, q, r) = (x * cap, y * cap, z * cap);
                let left = particle_velocity(&m, p, q).unwrap();
                let right = particle_velocity(&m, q, r).unwrap();
                if p <= q && q >= r {
                    prop_assert!(left <= right);
                }
                if p >= q && q <= r {
                    prop_assert!(left >= right);
                }
            }
        }

        #[test]
        fn branches_agree_at_equality(x in 0.0f64..1.0) {
            for m in models() {
                let c = x * m.working_max() / 1.000_000_001;
                let e = m.a_extrema(c, c).unwrap();
                prop_assert_eq!(e.min, e.max);
                prop_assert_eq!(particle_velocity(&m, c, c).unwrap(), m.eval_a(c));
            }
        }
    }
}
