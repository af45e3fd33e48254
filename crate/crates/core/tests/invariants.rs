use lorenzlab_core::dimension::{local_dimension, BallTally, MassCurve, RadiiGrid};
use lorenzlab_core::ergodic::{IntervalMap, Segments, MODEL_DOMAIN};
use lorenzlab_core::model::{
    return_map, ModelParams, QuotientBase, SectionBase, SectionPoint, Suspension, SuspensionBase,
};
use lorenzlab_core::ode::{integrate, Params3, Solver, State3};
use lorenzlab_core::rng::StreamRng;
use lorenzlab_core::special::clopper_pearson;
use lorenzlab_core::statistics::{lap_decomposition_check, DeviationTally};
use proptest::prelude::*;

fn half_open() -> impl Strategy<Value = f64> {
    (-0.5f64..0.5).prop_filter("off the singular line", |x| x.abs() > 1e-12)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn quotient_map_is_odd_expanding_and_into(x in half_open()) {
        let m = ModelParams::classical();
        prop_assert_eq!(m.f(-x), -m.f(x));
        prop_assert!(m.df(x) >= std::f64::consts::SQRT_2);
        prop_assert!(m.f(x).abs() <= 0.5);
    }

    #[test]
    fn return_map_preserves_stable_leaves(x in half_open(), y1 in -0.5f64..0.5, y2 in -0.5f64..0.5) {
        let m = ModelParams::classical();
        let a = return_map(&SectionPoint::new(x, y1).unwrap(), &m).unwrap();
        let b = return_map(&SectionPoint::new(x, y2).unwrap(), &m).unwrap();
        prop_assert_eq!(a.x, b.x);
        prop_assert!((a.y - b.y).abs() <= m.contraction_factor() * (y1 - y2).abs() * (1.0 + 1e-12));
        prop_assert!(a.y.abs() <= m.sup_abs_g() * (1.0 + 1e-15));
        prop_assert_eq!(a.y > 0.0, x > 0.0);
    }

    #[test]
    fn roof_is_bounded_below(x in half_open()) {
        let m = ModelParams::classical();
        let floor = m.r0 + std::f64::consts::LN_2 / m.lambda1;
        prop_assert!(m.r(x) >= floor - 1e-12);
        prop_assert_eq!(m.r(x), m.r(-x));
    }

    #[test]
    fn suspension_is_a_semigroup(x in half_open(), frac in 0.0f64..1.0, t in 0.0f64..30.0, u in 0.0f64..30.0) {
        let s = Suspension::new(QuotientBase(ModelParams::classical()));
        let r = s.base.roof(&x).unwrap();
        let q = s.point(x, frac * r).unwrap();
        let (a, na) = s.evolve(&q, t).unwrap();
        let (ab, nb) = s.evolve(&a, u).unwrap();
        let (d, nd) = s.evolve(&q, t + u).unwrap();
        prop_assert_eq!(na + nb, nd);
        prop_assert_eq!(ab.base, d.base);
        prop_assert!((ab.s - d.s).abs() <= 1e-10);
        prop_assert!(d.s >= 0.0 && d.s < s.base.roof(&d.base).unwrap());
    }

    #[test]
    fn section_suspension_projects_to_quotient(x in half_open(), y in -0.5f64..0.5, t in 0.0f64..40.0) {
        let m = ModelParams::classical();
        let full = Suspension::new(SectionBase(m));
        let quot = Suspension::new(QuotientBase(m));
        let (a, na) = full.evolve(&full.point(SectionPoint::new(x, y).unwrap(), 0.0).unwrap(), t).unwrap();
        let (b, nb) = quot.evolve(&quot.point(x, 0.0).unwrap(), t).unwrap();
        prop_assert_eq!(na, nb);
        prop_assert_eq!(a.base.x, b.base);
        prop_assert_eq!(a.s, b.s);
    }

    #[test]
    fn lap_identity_for_affine_observables(x in half_open(), frac in 0.0f64..1.0, c0 in -2.0f64..2.0, c1 in -2.0f64..2.0, t in 1.0f64..60.0) {
        let s = Suspension::new(QuotientBase(ModelParams::classical()));
        let q = s.point(x, frac * s.base.roof(&x).unwrap()).unwrap();
        let chk = lap_decomposition_check(&s, &q, move |x: &f64, h: f64| c0 + c1 * x * h, t, None).unwrap();
        prop_assert!(chk.identity_holds(), "{:?}", chk);
    }

    #[test]
    fn lorenz_flow_commutes_with_the_mirror(x in -20.0f64..20.0, y in -20.0f64..20.0, z in 0.0f64..45.0) {
        let p = Params3::CLASSICAL;
        let solver = Solver::Rk4 { dt: 0.01 };
        let s0 = State3::new(x, y, z);
        let a = integrate(s0, &p, 2.0, solver, 0.5).unwrap();
        let b = integrate(s0.mirror(), &p, 2.0, solver, 0.5).unwrap();
        for ((ta, sa), (tb, sb)) in a.iter().zip(b.iter()) {
            prop_assert_eq!(ta, tb);
            prop_assert!(sa.mirror().max_abs_diff(&sb) <= 1e-12 * (1.0 + sa.norm()));
        }
    }

    #[test]
    fn planted_power_laws_are_recovered(d in 0.1f64..3.0, c in 1e-3f64..10.0, lo in -4.0f64..-2.0) {
        let radii = RadiiGrid::new(10f64.powf(lo), 10f64.powf(lo + 1.5), 7).unwrap().radii();
        let masses: Vec<f64> = radii.iter().map(|r| c * r.powf(d)).collect();
        let est = local_dimension(&MassCurve::from_masses(&radii, &masses)).unwrap();
        prop_assert!((est.d_hat - d).abs() <= 1e-10);
        prop_assert!(est.d_minus <= est.d_hat + 1e-12 && est.d_hat <= est.d_plus + 1e-12);
    }

    #[test]
    fn tallies_merge_like_one_pass(ds in prop::collection::vec(0.0f64..0.2, 1..200), split in 0usize..200) {
        let radii = vec![0.01, 0.05, 0.1];
        let mut whole = BallTally::new(1, radii.clone());
        for &d in &ds {
            whole.add(0, d);
            whole.sample_done();
        }
        let k = split.min(ds.len());
        let (mut a, mut b) = (BallTally::new(1, radii.clone()), BallTally::new(1, radii));
        for &d in &ds[..k] {
            a.add(0, d);
            a.sample_done();
        }
        for &d in &ds[k..] {
            b.add(0, d);
            b.sample_done();
        }
        a.merge(&b);
        prop_assert_eq!(a, whole);
    }

    #[test]
    fn deviation_tally_counts_are_monotone_in_epsilon(avgs in prop::collection::vec(-1.0f64..1.0, 1..100), e1 in 0.01f64..0.5, de in 0.0f64..0.5) {
        let mut small = DeviationTally::new(vec![1.0], 0.0, e1).unwrap();
        let mut large = DeviationTally::new(vec![1.0], 0.0, e1 + de).unwrap();
        for &a in &avgs {
            small.record(&[a]);
            large.record(&[a]);
        }
        prop_assert!(large.deviating[0] <= small.deviating[0]);
    }

    #[test]
    fn clopper_pearson_brackets_the_proportion(n in 1u64..5000, frac in 0.0f64..=1.0, conf in 0.5f64..0.999) {
        let k = ((n as f64) * frac).round() as u64;
        let (lo, hi) = clopper_pearson(k, n, conf);
        let p = k as f64 / n as f64;
        prop_assert!(0.0 <= lo && lo <= p && p <= hi && hi <= 1.0);
        let (lo2, hi2) = clopper_pearson(k, n, (conf + 1.0) / 2.0);
        prop_assert!(lo2 <= lo + 1e-12 && hi <= hi2 + 1e-12);
    }

    #[test]
    fn streams_are_reproducible_and_distinct(seed in any::<u64>(), stream in any::<u64>()) {
        let mut a = StreamRng::new(seed, stream);
        let mut b = StreamRng::new(seed, stream);
        let mut c = StreamRng::new(seed, stream.wrapping_add(1));
        let xa: Vec<u64> = (0..8).map(|_| a.next_u64()).collect();
        let xb: Vec<u64> = (0..8).map(|_| b.next_u64()).collect();
        let xc: Vec<u64> = (0..8).map(|_| c.next_u64()).collect();
        prop_assert_eq!(&xa, &xb);
        prop_assert_ne!(&xa, &xc);
        let u = a.uniform();
        prop_assert!((0.0..1.0).contains(&u));
    }
}

#[test]
fn segment_starts_are_fixed_by_seed_and_index() {
    let m = ModelParams::classical();
    let seg = Segments::new(4, 1000, 100).unwrap();
    for i in 0..4 {
        let a = seg.start(&m, MODEL_DOMAIN, 9, i);
        assert_eq!(a, seg.start(&m, MODEL_DOMAIN, 9, i));
        assert!(a.abs() <= 0.5);
        let mut n = 0;
        assert_eq!(
            seg.visit(&m, MODEL_DOMAIN, 9, i, |x| {
                assert!(x.abs() <= 0.5);
                n += 1;
            }),
            1000
        );
        assert_eq!(n, 1000);
    }
    assert_ne!(seg.start(&m, MODEL_DOMAIN, 9, 0), seg.start(&m, MODEL_DOMAIN, 9, 1));
    assert_ne!(seg.start(&m, MODEL_DOMAIN, 9, 0), seg.start(&m, MODEL_DOMAIN, 10, 0));
}

#[test]
fn quotient_map_has_no_other_singular_points() {
    let m = ModelParams::classical();
    assert!(m.apply(0.0).is_none());
    assert!(m.apply(1e-200).is_some());
}
