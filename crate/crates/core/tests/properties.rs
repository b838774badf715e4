use std::sync::OnceLock;

use proptest::prelude::*;

use singular_flow_core::dimension::{box_count, predicted_print_region, Region};
use singular_flow_core::distance::{DistanceEvaluator, MeasureConfig};
use singular_flow_core::exec::Sequential;
use singular_flow_core::fields::{
    fd_divergence, normal_component, perp_kernel, trajectory_threshold, Background, FieldSpec, Path, VortexTerm,
};
use singular_flow_core::flow::{avoidance_from_minima, TubeIntegral};
use singular_flow_core::geometry::{dist2, BoxDomain, KdTree, PointSet};
use singular_flow_core::sets::{
    cantor_intervals, holder_spot_check, make_cantor, make_graph, make_reciprocal_powers, Motion, TrajectoryBundle,
};
use singular_flow_core::transport::{solve_transport, Boundary, TransportConfig};
use singular_flow_core::vortex_wave::{simulate_vortex_wave, ParticleState, VortexWaveConfig};

fn moving_vortex_set() -> DistanceEvaluator {
    let path = Path::Circular {
        center: [0.0, 0.0],
        radius: 0.3,
        omega: 2.0,
        phase: 0.0,
    };
    DistanceEvaluator::new(path.to_set(1.0).unwrap(), 1e-3).unwrap()
}

fn cantor_graph() -> &'static DistanceEvaluator {
    static GRAPH: OnceLock<DistanceEvaluator> = OnceLock::new();
    GRAPH.get_or_init(|| {
        let base = make_cantor(0.25, 6).unwrap().embed(2).unwrap();
        let motion = Motion::PowerDrift {
            direction: vec![1.0, 0.0],
            exponent: 0.5,
        };
        let bundle = TrajectoryBundle::with_known_holder(motion, &base.points, 1.0).unwrap();
        DistanceEvaluator::new(make_graph(base, bundle).unwrap(), 1e-3).unwrap()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn cantor_prefractal_shape(keep in 0.05f64..0.45, depth in 0u32..10) {
        let iv = cantor_intervals(keep, depth);
        prop_assert_eq!(iv.len(), 1usize << (depth + 1));
        let set = make_cantor(keep, depth).unwrap();
        prop_assert_eq!(set.points.len(), 1usize << (depth + 2));
        prop_assert!(set.points.coords().iter().all(|x| (0.0..=1.0).contains(x)));
        prop_assert!(iv.windows(2).all(|w| w[0].1 < w[1].0));
    }

    #[test]
    fn reciprocal_powers_decrease_to_zero(p in 1.0f64..4.0, n in 2usize..500) {
        let set = make_reciprocal_powers(p, n).unwrap();
        let mut xs = set.points.coords().to_vec();
        xs.sort_by(|a, b| b.total_cmp(a));
        prop_assert!(xs.windows(2).all(|w| w[0] > w[1]));
        prop_assert_eq!(*xs.last().unwrap(), 0.0);
    }

    #[test]
    fn box_counts_grow_with_the_set(keep in 0.1f64..0.45, depth in 2u32..8, eps in 0.001f64..0.3) {
        let sub = make_cantor(keep, depth).unwrap().points;
        let mut sup = sub.clone();
        for x in [0.37, 0.5, 0.61] {
            sup.push(&[x]);
        }
        prop_assert!(box_count(&sup, eps).unwrap() >= box_count(&sub, eps).unwrap());
    }

    #[test]
    fn spacetime_distance_is_one_lipschitz(
        t1 in 0.0f64..1.0, t2 in 0.0f64..1.0,
        x1 in -1.0f64..1.0, y1 in -1.0f64..1.0, x2 in -1.0f64..1.0, y2 in -1.0f64..1.0,
    ) {
        let e = moving_vortex_set();
        let a = e.dist_spacetime(t1, &[x1, y1]).unwrap();
        let b = e.dist_spacetime(t2, &[x2, y2]).unwrap();
        let gap = ((t1 - t2).powi(2) + (x1 - x2).powi(2) + (y1 - y2).powi(2)).sqrt();
        prop_assert!((a - b).abs() <= gap + 2.0 * e.error_bound() + 1e-12);
        let s = e.dist_section(t1, &[x1, y1]).unwrap();
        prop_assert!(a <= s + e.error_bound() + 1e-12);
    }

    #[test]
    fn graph_distance_below_section_distance(t in 0.0f64..1.0, x in -0.5f64..2.0, y in -0.5f64..0.5) {
        let e = cantor_graph();
        let d = e.dist_spacetime(t, &[x, y]).unwrap();
        let s = e.dist_section(t, &[x, y]).unwrap();
        prop_assert!(d <= s + e.error_bound() + 1e-12);
        prop_assert!(d >= 0.0);
    }

    #[test]
    fn normal_component_bounded_by_speed(t in 0.0f64..1.0, x in -1.0f64..1.0, y in -1.0f64..1.0) {
        let e = moving_vortex_set();
        let b = FieldSpec::new(2, 1.0, Background::Rotation { omega: 0.7 }).unwrap()
            .with_vortex(VortexTerm {
                path: Path::Circular { center: [0.0, 0.0], radius: 0.3, omega: 2.0, phase: 0.0 },
                strength: 0.5,
                normalized: false,
            }).unwrap();
        prop_assume!(e.dist_spacetime(t, &[x, y]).unwrap() > 0.01);
        let nc = normal_component(&b, &e, t, &[x, y], 1e-9).unwrap();
        let speed = b.eval(t, &[x, y]).unwrap().iter().map(|v| v * v).sum::<f64>().sqrt();
        prop_assert!(nc.value.abs() <= speed * (1.0 + 1e-6) + 1e-9);
    }

    #[test]
    fn vortex_term_is_divergence_free(x in -1.0f64..1.0, y in -1.0f64..1.0) {
        prop_assume!((x * x + y * y).sqrt() >= 0.1);
        let b = FieldSpec::new(2, 1.0, Background::Zero).unwrap()
            .with_vortex(VortexTerm { path: Path::Fixed([0.0, 0.0]), strength: 1.0, normalized: false })
            .unwrap();
        prop_assert!(fd_divergence(&b, 0.0, &[x, y], 1e-3).unwrap().abs() < 1e-5);
    }

    #[test]
    fn threshold_is_monotone(a1 in 0.05f64..1.0, a2 in 0.05f64..1.0, d1 in 0.0f64..1.9, d2 in 0.0f64..1.9) {
        let (lo_a, hi_a) = if a1 <= a2 { (a1, a2) } else { (a2, a1) };
        let (lo_d, hi_d) = if d1 <= d2 { (d1, d2) } else { (d2, d1) };
        let q = |a: f64, d: f64| trajectory_threshold(a, 2, d).unwrap_or(f64::INFINITY);
        prop_assert!(q(hi_a, lo_d) <= q(lo_a, lo_d));
        prop_assert!(q(hi_a, lo_d) <= q(hi_a, hi_d));
    }

    #[test]
    fn print_region_is_monotone_in_exponents(a in 0.1f64..3.0, b in 0.1f64..3.0, s in 0.0f64..0.5) {
        // shrinking both exponents never turns a member into a non-member
        if predicted_print_region(0.5, 0.5, 1, a, b) == Region::Member {
            prop_assert_eq!(predicted_print_region(0.5, 0.5, 1, a * (1.0 - s), b * (1.0 - s)), Region::Member);
        }
    }

    #[test]
    fn tube_families_are_nested(
        minima in proptest::collection::vec(0.0f64..1.0, 1..200),
        mut ladder in proptest::collection::vec(0.001f64..0.49, 1..8),
    ) {
        ladder.sort_by(|a, b| b.total_cmp(a));
        let n = minima.len();
        let weights = vec![1.0 / n as f64; n];
        let initial = vec![1.0; n];
        let flagged = vec![false; n];
        let rep = avoidance_from_minima(
            &weights, &initial, &minima, &flagged, 0.5, &ladder,
            TubeIntegral { value: 1.0, stderr: 0.0 }, 1.0, 0.1,
        ).unwrap();
        prop_assert!(rep.nested);
        prop_assert!(rep.mu.windows(2).all(|w| w[0] >= w[1]));
    }

    #[test]
    fn kdtree_nearest_is_exact(
        pts in prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0), 1..200),
        q in (-2.0f64..2.0, -2.0f64..2.0),
    ) {
        let set = PointSet::from_rows(2, pts.iter().map(|&(x, y)| [x, y])).unwrap();
        let tree = KdTree::build(set.clone());
        let q = [q.0, q.1];
        let brute = set.iter().map(|p| dist2(p, &q)).fold(f64::INFINITY, f64::min);
        let (i, d) = tree.nearest(&q).unwrap();
        prop_assert_eq!(d, brute);
        prop_assert_eq!(dist2(set.point(i), &q), d);
    }

    #[test]
    fn perp_kernel_is_antisymmetric(dx in -2.0f64..2.0, dy in -2.0f64..2.0, rho in 0.0f64..0.5) {
        prop_assume!(dx.abs() + dy.abs() > 1e-3);
        let a = perp_kernel(dx, dy, rho * rho);
        let b = perp_kernel(-dx, -dy, rho * rho);
        prop_assert_eq!(a[0], -b[0]);
        prop_assert_eq!(a[1], -b[1]);
        // tangent to circles about the source
        prop_assert!((a[0] * dx + a[1] * dy).abs() < 1e-12);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn graph_bundles_pass_the_holder_check(exponent in 0.2f64..1.0, seed in any::<u64>()) {
        let base = make_cantor(0.25, 5).unwrap().embed(2).unwrap();
        let motion = Motion::PowerDrift { direction: vec![0.6, 0.8], exponent };
        let bundle = TrajectoryBundle::with_known_holder(motion, &base.points, 2.0).unwrap();
        prop_assert!(holder_spot_check(&base, &bundle, 20_000, seed).is_ok());
    }

    #[test]
    fn transport_keeps_the_initial_range(omega in -2.0f64..2.0, cx in -0.5f64..0.5) {
        let b = FieldSpec::new(2, 1.0, Background::Rotation { omega }).unwrap();
        let cfg = TransportConfig::new(BoxDomain::cube(2, -1.0, 1.0).unwrap(), 24, 0.1, 0.5);
        let u0 = move |x: &[f64]| (-((x[0] - cx).powi(2) + x[1] * x[1]) * 8.0).exp() - 0.3;
        let u = solve_transport(&Sequential, &b, None, u0, &cfg).unwrap();
        let lo = u.values[0].iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = u.values[0].iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        prop_assert!(u.values.iter().flatten().all(|v| *v >= lo && *v <= hi));
    }

    #[test]
    fn translation_commutes_with_shifts(c in 0.0f64..1.0, k in 1usize..6) {
        // shifting by whole cells on a periodic grid is exact
        let h = 1.0 / 32.0;
        let shift = k as f64 * h;
        let b = FieldSpec::new(2, 1.0, Background::Uniform(vec![c, 0.0])).unwrap();
        let mut cfg = TransportConfig::new(BoxDomain::cube(2, 0.0, 1.0).unwrap(), 32, 0.05, 0.2);
        cfg.boundary = Boundary::Periodic;
        let u0 = |x: &[f64]| (2.0 * std::f64::consts::PI * x[0]).sin() + (2.0 * std::f64::consts::PI * x[1]).cos();
        let a = solve_transport(&Sequential, &b, None, u0, &cfg).unwrap();
        let shifted = move |x: &[f64]| u0(&[x[0] - shift, x[1]]);
        let s = solve_transport(&Sequential, &b, None, shifted, &cfg).unwrap();
        let m = a.nodes();
        let last_a = a.final_values();
        let last_s = s.final_values();
        for j in 0..m {
            for i in 0..m {
                let moved = last_a[j * m + (i + m - k) % m];
                prop_assert!((moved - last_s[j * m + i]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn vortex_wave_conserves_vorticity_and_centre(seed in 0u64..1000) {
        let mut positions = Vec::new();
        let mut omega = Vec::new();
        for i in 0..12u64 {
            let a = ((seed * 31 + i * 17) % 97) as f64 / 97.0 * std::f64::consts::TAU;
            let r = 0.4 + 0.3 * (((seed + i * 7) % 13) as f64 / 13.0);
            positions.push([r * a.cos(), r * a.sin()]);
            omega.push(0.05 + 0.01 * (i % 3) as f64);
        }
        let s = ParticleState::from_particles(positions, omega, [0.05, 0.0]).unwrap();
        let mut cfg = VortexWaveConfig::new(0.3, 0.1, 0.5);
        cfg.snapshots = 2;
        let run = simulate_vortex_wave(&Sequential, &s, &cfg).unwrap();
        let last = run.snapshots.last().unwrap();
        prop_assert_eq!(last.total_vorticity(), s.total_vorticity());
        let (m0, m1) = (s.circulation_moment(0.3), last.circulation_moment(0.3));
        let scale = s.omega.iter().sum::<f64>() + 0.3;
        prop_assert!(((m1[0] - m0[0]).powi(2) + (m1[1] - m0[1]).powi(2)).sqrt() / scale < 0.01 * 0.5);
    }
}

#[test]
fn singleton_section_measure_matches_disc_area() {
    let e = DistanceEvaluator::new(Path::Fixed([0.1, -0.2]).to_set(1.0).unwrap(), 1e-3).unwrap();
    let dom = BoxDomain::cube(2, -1.0, 1.0).unwrap();
    let cfg = MeasureConfig::default();
    let mut prev = 0.0;
    for eps in [0.02, 0.05, 0.1, 0.2] {
        let m = e.neighborhood_measure(&Sequential, 0.5, eps, &dom, &cfg).unwrap();
        let ratio = m.value / (eps * eps);
        let se = m.standard_error / (eps * eps);
        assert!((ratio - std::f64::consts::PI).abs() < 3.0 * se + 1e-9, "{ratio} ± {se}");
        assert!(m.value + 3.0 * m.standard_error >= prev);
        prev = m.value;
    }
    let pts = PointSet::from_scalars(&[0.0]);
    assert_eq!(pts.len(), 1);
}
