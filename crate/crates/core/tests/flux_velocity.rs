use particle_path::*;
use proptest::prelude::*;

fn builtins() -> Vec<FluxModel> {
    vec![
        FluxModel::burgers().restricted_to(4.0).unwrap(),
        FluxModel::lwr(1.0, 1.0).unwrap(),
        FluxModel::lwr(2.0, 3.0).unwrap(),
        FluxModel::linear(-0.7).unwrap().restricted_to(4.0).unwrap(),
        FluxModel::polynomial(vec![0.0, 0.5, -0.5, 1.0 / 3.0]).unwrap().restricted_to(2.0).unwrap(),
    ]
}

/// Dense scan of `a`; the oracle for extrema.
fn scan(model: &FluxModel, lo: f64, hi: f64) -> (f64, f64) {
    let n = 20_000;
    (0..=n)
        .map(|k| model.eval_a(lo + (hi - lo) * k as f64 / n as f64))
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(mn, mx), a| (mn.min(a), mx.max(a)))
}

#[test]
fn builtin_lookup() {
    let b = builtin_flux("burgers", &[]).unwrap();
    assert_eq!(b.eval_f(1.0), 0.5);
    assert_eq!(b.eval_a(1.0), 0.5);
    assert_eq!(b.fprime_zero(), 0.0);
    let l = builtin_flux("lwr", &[("v_max", 1.0), ("u_max", 1.0)]).unwrap();
    assert!((l.eval_f(0.3) - 0.21).abs() < 1e-15);
    assert_eq!(l.eval_a(0.5), 0.5);
    assert!(builtin_flux("nope", &[]).is_err());
}

#[test]
fn extrema_examples() {
    let e = FluxModel::burgers().a_extrema(1.0, 3.0).unwrap();
    assert_eq!((e.min, e.max, e.argmin, e.argmax), (0.5, 1.5, 1.0, 3.0));
    let l = FluxModel::lwr(1.0, 1.0).unwrap().a_extrema(0.2, 0.8).unwrap();
    assert!((l.min - 0.2).abs() < 1e-15 && (l.max - 0.8).abs() < 1e-15);
    assert_eq!((l.argmin, l.argmax), (0.8, 0.2));
    for m in builtins() {
        let e = m.a_extrema(0.4, 0.4).unwrap();
        assert_eq!((e.min, e.max, e.argmin, e.argmax), (m.eval_a(0.4), m.eval_a(0.4), 0.4, 0.4));
    }
}

#[test]
fn velocity_examples() {
    let b = FluxModel::burgers();
    assert_eq!(particle_velocity(&b, 1.0, 3.0).unwrap(), 0.5);
    let l = FluxModel::lwr(1.0, 1.0).unwrap();
    assert!((particle_velocity(&l, 0.8, 0.2).unwrap() - 0.8).abs() < 1e-15);
    assert_eq!(ftl_coincidence_check(&l, &[(0.5, 0.5)]).unwrap(), 0.0);
    assert!(matches!(ftl_coincidence_check(&b, &[(0.5, 0.2)]), Err(Error::Precondition(_))));
}

#[test]
fn a_at_zero_is_limit() {
    for m in builtins() {
        let q = m.eval_f(1e-9) / 1e-9;
        assert!((m.eval_a(0.0) - q).abs() < 1e-8, "{}", m.name());
        assert_eq!(m.eval_f(0.0), 0.0);
    }
}

proptest! {
    #[test]
    fn extrema_bracket_a(which in 0usize..5, p in 0.0f64..1.0, q in 0.0f64..1.0) {
        let m = &builtins()[which];
        let cap = m.working_max();
        let (lo, hi) = (p.min(q) * cap, p.max(q) * cap);
        let e = m.a_extrema(lo, hi).unwrap();
        for k in 0..100 {
            let a = m.eval_a(lo + (hi - lo) * k as f64 / 99.0);
            prop_assert!(e.min <= a + 1e-10 && a <= e.max + 1e-10);
        }
        let (smin, smax) = scan(m, lo, hi);
        prop_assert!((e.min - smin).abs() < 1e-8 && (e.max - smax).abs() < 1e-8);
        prop_assert!(m.eval_a(lo).abs() <= m.lip_f() + 1e-12);
    }

    #[test]
    fn numeric_fallback_matches_analytic(which in 0usize..5, p in 0.0f64..1.0, q in 0.0f64..1.0) {
        let m = &builtins()[which];
        let cap = m.working_max();
        let (lo, hi) = (p.min(q) * cap, p.max(q) * cap);
        let e = m.a_extrema(lo, hi).unwrap();
        let n = m.numeric_a_extrema(lo, hi);
        prop_assert!((e.min - n.min).abs() < 1e-8, "{e:?} {n:?}");
        prop_assert!((e.max - n.max).abs() < 1e-8, "{e:?} {n:?}");
    }

    #[test]
    fn extrema_monotone_under_inclusion(which in 0usize..5, mut pts in prop::array::uniform4(0.0f64..1.0)) {
        let m = &builtins()[which];
        let cap = m.working_max();
        pts.sort_by(f64::total_cmp);
        let outer = m.a_extrema(pts[0] * cap, pts[3] * cap).unwrap();
        let inner = m.a_extrema(pts[1] * cap, pts[2] * cap).unwrap();
        prop_assert!(outer.min <= inner.min + 1e-12 && inner.max <= outer.max + 1e-12);
    }

    #[test]
    fn velocity_consistency_and_bounds(which in 0usize..5, p in 0.0f64..1.0, q in 0.0f64..1.0) {
        let m = &builtins()[which];
        let cap = m.working_max();
        let (vl, vr) = (p * cap, q * cap);
        prop_assert_eq!(particle_velocity(m, vl, vl).unwrap(), m.eval_a(vl));
        let v = particle_velocity(m, vl, vr).unwrap();
        let e = m.a_extrema(vl.min(vr), vl.max(vr)).unwrap();
        prop_assert!(e.min <= v && v <= e.max);
        // Vacuum neighbours follow the formula, including a(0).
        let z = m.a_extrema(0.0, vr).unwrap();
        prop_assert_eq!(particle_velocity(m, 0.0, vr).unwrap(), z.min);
        prop_assert_eq!(particle_velocity(m, vr, 0.0).unwrap(), z.max);
    }

    #[test]
    fn entropic_ordering(which in 0usize..5, p in 0.0f64..1.0, q in 0.0f64..1.0, r in 0.0f64..1.0) {
        let m = &builtins()[which];
        let cap = m.working_max();
        let (a, b, c) = (p * cap, q * cap, r * cap);
        let left = particle_velocity(m, a, b).unwrap();
        let right = particle_velocity(m, b, c).unwrap();
        if a <= b && b >= c {
            prop_assert!(left <= right);
        }
        if a >= b && b <= c {
            prop_assert!(left >= right);
        }
    }

    #[test]
    fn ftl_coincidence_for_lwr(pairs in prop::collection::vec((0.0f64..=1.0, 0.0f64..=1.0), 1..100)) {
        let l = FluxModel::lwr(1.0, 1.0).unwrap();
        prop_assert!(ftl_coincidence_check(&l, &pairs).unwrap() <= 1e-8);
    }
}
