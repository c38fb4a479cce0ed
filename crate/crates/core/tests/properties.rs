use horocut_core::busemann::busemann_values_common;
use horocut_core::catalog::{catalog, find, Lab};
use horocut_core::config::{to_toml, RunConfig};
use horocut_core::distance::{shoot_distance, ShootOptions};
use horocut_core::geodesic::integrate;
use horocut_core::grid::Provenance;
use horocut_core::io::{field_from_bytes, field_to_bytes};
use horocut_core::{Error, FieldKind, FinslerMetric, Grid, GridSpec, Point, ScalarField, Vec2};
use proptest::prelude::*;
use std::sync::OnceLock;

fn metrics() -> &'static Vec<FinslerMetric> {
    static M: OnceLock<Vec<FinslerMetric>> = OnceLock::new();
    M.get_or_init(|| catalog().iter().map(|e| e.prepare().unwrap().metric).collect())
}

fn zermelo_lab() -> &'static Lab {
    static L: OnceLock<Lab> = OnceLock::new();
    L.get_or_init(|| find("zermelo-w05").unwrap().prepare().unwrap())
}

fn point(r: f64) -> impl Strategy<Value = Point> {
    (-r..r, -r..r).prop_map(|(x, y)| Point::new(x, y))
}

fn vector() -> impl Strategy<Value = Vec2> {
    (0.0..std::f64::consts::TAU, 0.1f64..5.0).prop_map(|(a, r)| Vec2::new(r * a.cos(), r * a.sin()))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn positive_homogeneity(m in 0usize..5, x in point(3.0), y in vector(), lambda in 0.01f64..100.0) {
        let f = &metrics()[m];
        let a = f.f(&x, &(y * lambda));
        let b = lambda * f.f(&x, &y);
        prop_assert!(a > 0.0);
        prop_assert!((a - b).abs() <= 1e-12 * b.max(1.0), "{a} vs {b}");
    }

    #[test]
    fn reverse_flips_the_vector(m in 0usize..5, x in point(3.0), y in vector()) {
        let f = &metrics()[m];
        prop_assert_eq!(f.reverse().f(&x, &y), f.f(&x, &(-y)));
    }

    #[test]
    fn fundamental_tensor_is_positive_definite(m in 0usize..5, x in point(3.0), y in vector()) {
        let g = metrics()[m].fundamental_tensor(&x, &y).unwrap();
        prop_assert!(g[(0, 0)] > 0.0 && g.determinant() > 0.0);
        let l = metrics()[m].f(&x, &y);
        prop_assert!(((y.transpose() * g * y)[(0, 0)] - l * l).abs() <= 1e-8 * l * l);
    }

    #[test]
    fn field_bytes_round_trip(nx in 2usize..12, ny in 2usize..12, h in 0.01f64..1.0, ox in -5.0f64..5.0, seed in any::<u64>()) {
        let grid = Grid::new([ox, -1.0], h, nx, ny, [false, false]).unwrap();
        let vals: Vec<f64> = (0..nx * ny).map(|k| ((seed ^ k as u64) as f64).sin()).collect();
        let f = ScalarField::new(grid, vals, FieldKind::Busemann, Provenance { metric_id: "m".into(), source: "s".into(), params: serde_json::json!({ "seed": seed }) });
        let bytes = field_to_bytes(&f);
        prop_assert_eq!(field_from_bytes(&bytes).unwrap(), f);
    }

    #[test]
    fn damaged_field_bytes_are_rejected(nx in 2usize..8, ny in 2usize..8, pos in any::<prop::sample::Index>(), bit in 0u8..8) {
        let grid = Grid::new([0.0, 0.0], 0.5, nx, ny, [false, false]).unwrap();
        let f = ScalarField::from_fn(grid, FieldKind::Busemann, "p", |p| p[0] - p[1]);
        let mut bytes = field_to_bytes(&f);
        let i = pos.index(bytes.len());
        bytes[i] ^= 1 << bit;
        prop_assert!(field_from_bytes(&bytes).is_err());
        let truncated = &field_to_bytes(&f)[..i];
        prop_assert!(matches!(field_from_bytes(truncated), Err(Error::Corrupt(_))));
    }

    #[test]
    fn grid_overrides_survive_toml(x0 in -9.0f64..0.0, w in 0.5f64..9.0, h in 0.01f64..0.5, jobs in 1usize..8) {
        let mut cfg = RunConfig::for_experiment("bump-A1");
        cfg.grid = Some(GridSpec { x: [x0, x0 + w], y: [-w, w], h });
        cfg.jobs = Some(jobs);
        let back = RunConfig::parse(&to_toml(&cfg).unwrap(), false).unwrap();
        prop_assert_eq!(back, cfg);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn geodesics_keep_unit_speed(m in 0usize..5, x in point(2.0), a in 0.0..std::f64::consts::TAU) {
        let f = &metrics()[m];
        let e = Vec2::new(a.cos(), a.sin());
        let v = e / f.f(&x, &e);
        let g = integrate(f, &x, &v, (0.0, 4.0), 1e-10).unwrap();
        prop_assert!(g.speed_residual(f) < 1e-7);
        prop_assert!((g.measured_length(f) - 4.0).abs() < 1e-6);
    }

    #[test]
    fn reverse_distance_duality(m in 0usize..5, p in point(2.5), q in point(2.5)) {
        let f = &metrics()[m];
        prop_assume!((p - q).norm() > 0.05);
        let opts = ShootOptions::default();
        let fwd = shoot_distance(f, &p, &q, &opts).unwrap().value;
        let bwd = shoot_distance(&f.reverse(), &q, &p, &opts).unwrap().value;
        prop_assert!((fwd - bwd).abs() <= 1e-6 * fwd.max(1.0), "{fwd} vs {bwd}");
    }

    #[test]
    fn triangle_inequality(m in 0usize..5, p in point(2.5), q in point(2.5), r in point(2.5)) {
        let f = &metrics()[m];
        prop_assume!((p - q).norm() > 0.05 && (q - r).norm() > 0.05 && (p - r).norm() > 0.05);
        let opts = ShootOptions::default();
        let d = |a: &Point, b: &Point| shoot_distance(f, a, b, &opts).unwrap().value;
        let (pr, pq, qr) = (d(&p, &r), d(&p, &q), d(&q, &r));
        prop_assert!(pr <= pq + qr + 1e-7, "{pr} > {pq} + {qr}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn busemann_is_one_lipschitz(p in point(3.0), q in point(3.0)) {
        prop_assume!((p - q).norm() > 0.05);
        let lab = zermelo_lab();
        let (b, _) = busemann_values_common(&lab.metric, &lab.ray, &[p, q], &lab.busemann).unwrap();
        let d = shoot_distance(&lab.metric, &p, &q, &ShootOptions::default()).unwrap().value;
        prop_assert!(b[0] - b[1] <= d + 1e-8, "b(p) - b(q) = {} > d(p, q) = {d}", b[0] - b[1]);
        let expected = (2.0 / 3.0) * (p[0] - q[0]);
        prop_assert!((b[0] - b[1] - expected).abs() < 2e-3);
    }
}
