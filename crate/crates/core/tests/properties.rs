use std::sync::OnceLock;

use proptest::prelude::*;

use coupling_lab::bounds::{
    caccioppoli_factor, iteration_count, lambda0, maclaurin_m, remainder_r, scaled_remainder,
};
use coupling_lab::discretize::{build_grid_box, Field, Grid, OperatorSpec};
use coupling_lab::evolve::{step, SnapshotStore, SolveConfig};
use coupling_lab::geometry::{offset_region, shell_family, BoxDomain, DomainSpec, RegionMask, ShapeKind, ShapeSpec};
use coupling_lab::harness::chain::verify_caccioppoli_chain;
use coupling_lab::harness::{simulate, CaseConfig};
use coupling_lab::observables::l2_sq;

fn grid2(n: usize) -> Grid {
    build_grid_box(&BoxDomain::unit(2), &[n, n]).unwrap()
}

fn shape() -> impl Strategy<Value = ShapeSpec> {
    let center = (0.35..0.65f64, 0.35..0.65f64);
    prop_oneof![
        (center.clone(), 0.1..0.25f64)
            .prop_map(|((x, y), r)| ShapeSpec::new(ShapeKind::Ball { center: vec![x, y], radius: r })),
        (center.clone(), 0.1..0.25f64, 0.1..0.25f64).prop_map(|((x, y), ax, ay)| {
            ShapeSpec::new(ShapeKind::Ellipse {
                center: vec![x, y],
                semi_axes: vec![ax, ay],
            })
        }),
        (center, 0.1..0.2f64, 0.1..0.2f64, 0.02..0.08f64).prop_map(|((x, y), hx, hy, r)| {
            ShapeSpec::new(ShapeKind::RoundedBox {
                center: vec![x, y],
                half_widths: vec![hx, hy],
                corner_radius: r.min(hx).min(hy),
            })
        }),
    ]
    .prop_map(|s| s.unwrap())
}

fn reference_store() -> &'static (SnapshotStore, DomainSpec, f64) {
    static STORE: OnceLock<(SnapshotStore, DomainSpec, f64)> = OnceLock::new();
    STORE.get_or_init(|| {
        let sim = simulate(&CaseConfig {
            cells: 40,
            lambda: 300.0,
            t_end: 0.02,
            ..CaseConfig::default()
        })
        .unwrap();
        (sim.store, sim.domain, sim.u0_l2_sq)
    })
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 64, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn offsets_are_monotone(s in shape(), f1 in -0.9..0.9f64, f2 in -0.9..0.9f64) {
        let g = grid2(40);
        let to_rho = |f: f64| if f < 0.0 { f * s.reach_inward } else { f * s.reach_outward.min(0.1) };
        let (lo, hi) = if f1 <= f2 { (f1, f2) } else { (f2, f1) };
        let inner = offset_region(&s, to_rho(lo), &g).unwrap();
        let outer = offset_region(&s, to_rho(hi), &g).unwrap();
        prop_assert!(inner.is_subset_of(&outer));
        prop_assert!(inner.measure <= outer.measure);
    }

    #[test]
    fn exterior_distance_is_eikonal(s in shape(), x in 0.0..1.0f64, y in 0.0..1.0f64) {
        let p = [x, y];
        prop_assume!(s.distance(&p) > 0.01);
        let grad = s.gradient(&p, 1e-6);
        let norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
        prop_assert!((norm - 1.0).abs() < 1e-4, "|grad| = {}", norm);
    }

    #[test]
    fn shells_are_nested(gamma in 0.05..=1.0f64, n in 1usize..6) {
        let domain = DomainSpec::reference(2);
        let shells = shell_family(&domain, gamma, n, &grid2(48)).unwrap();
        prop_assert_eq!(shells.len(), n + 1);
        for w in shells.windows(2) {
            prop_assert!(w[1].mask.is_subset_of(&w[0].mask));
        }
    }

    #[test]
    fn implicit_step_contracts_and_preserves_sign(
        values in prop::collection::vec(0.0..1.0f64, 144),
        lambda in 0.0..1e4f64,
        dt in 1e-5..1e-2f64,
    ) {
        let g = grid2(12);
        let obstacle = RegionMask::from_cells(g, (0..g.len()).map(|i| {
            let c = g.center(i);
            (c[0] - 0.5).abs() < 0.25 && (c[1] - 0.5).abs() < 0.25
        }).collect());
        let op = OperatorSpec::new(g, lambda, obstacle).unwrap();
        let u = Field::new(g, values, 0.0).unwrap();
        let cfg = SolveConfig { dt, ..SolveConfig::for_lambda(lambda, 2.0 * dt) };
        let (next, _) = step(&u, &op, &cfg).unwrap();
        let all = RegionMask::full(g);
        prop_assert!(l2_sq(&next, &all).unwrap() <= l2_sq(&u, &all).unwrap() * (1.0 + 1e-12));
        prop_assert!(next.integral() <= u.integral() * (1.0 + 1e-12) + 1e-14);
        prop_assert!(next.min() >= -1e-12 * u.max().max(1e-300));
    }

    #[test]
    fn maclaurin_split_is_exact(k in 0usize..80, s in 0.0..60.0f64) {
        let total = maclaurin_m(k, s).unwrap() + remainder_r(k, s).unwrap();
        prop_assert!((total - s.exp()).abs() <= 1e-13 * s.exp());
        let scaled = scaled_remainder(k, s).unwrap();
        prop_assert!((0.0..=1.0).contains(&scaled));
        let direct = remainder_r(k, s).unwrap() * (-s).exp();
        prop_assert!((scaled - direct).abs() <= 1e-12 * direct.max(1e-300) + 1e-15);
    }

    #[test]
    fn shell_cost_below_inverse_e_past_threshold(
        a in 0.05..1.0f64,
        gamma in 0.1..0.95f64,
        nu in 0.1..0.45f64,
        stretch in 1.0..100.0f64,
    ) {
        let l0 = lambda0(a, gamma, nu).unwrap();
        prop_assume!(l0 * stretch < 1e300);
        let lambda = l0 * stretch;
        let n = iteration_count(lambda, nu) as f64;
        let cost = caccioppoli_factor(lambda, gamma * a / n);
        prop_assert!(cost <= (-1.0f64).exp() * (1.0 + 1e-9), "cost {}", cost);
    }

    #[test]
    fn link_ratios_telescope(gamma in 0.2..=1.0f64, n in 1usize..5) {
        let (store, domain, reference) = reference_store();
        let reports = verify_caccioppoli_chain(store, domain, gamma, n, 300.0, *reference).unwrap();
        prop_assert_eq!(reports.len(), 2 * n);
        for family in reports.chunks(n) {
            let product: f64 = family.iter().map(|r| r.params["link_ratio"]).product();
            let first = family[0].params["outer"];
            let last = family[n - 1].measured;
            prop_assert!((product - last / first).abs() <= 1e-10 * (last / first));
        }
    }
}
