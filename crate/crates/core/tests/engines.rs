use std::sync::Arc;

use horocut_core::catalog::find;
use horocut_core::cutlocus::cut_locus;
use horocut_core::distance::nearest_foot;
use horocut_core::eikonal::{eikonal_field, eikonal_solve, EikonalOptions};
use horocut_core::{ClosedSetSpec, Direction, FieldKind, Grid, GridSpec, Point, ScalarField};

fn lab_on(id: &str, grid: GridSpec) -> horocut_core::catalog::Lab {
    let mut e = find(id).unwrap();
    e.grid = grid;
    e.prepare().unwrap()
}

#[test]
fn bump_splits_the_shortest_path_to_a_half_plane() {
    let lab = lab_on("bump-A1", GridSpec { x: [-5.0, 5.0], y: [-5.0, 5.0], h: 0.05 });
    let xf = ScalarField::from_fn(lab.grid.clone(), FieldKind::Auxiliary, "x", |p| p[0]);
    let set = ClosedSetSpec::Superlevel { field: Arc::new(xf), threshold: 3.0 };
    let sol = eikonal_solve(&lab.metric, &set, &lab.grid, Direction::ToTarget, &EikonalOptions::default()).unwrap();
    let field = sol.field(FieldKind::DistanceToSet, Default::default());
    let feet = nearest_foot(&lab.metric, &field, &set, &Point::new(-3.0, 0.0), 3.0 * lab.grid.h).unwrap();
    assert_eq!(feet.len(), 2, "{feet:?}");
    let (a, b) = (&feet[0], &feet[1]);
    assert!(a.point[1] * b.point[1] < 0.0);
    assert!((a.point[1] + b.point[1]).abs() < 2.0 * lab.grid.h, "{feet:?}");
    assert!((a.length - b.length).abs() < 1e-3);
    assert!(a.length < 6.0 * std::f64::consts::E);
}

#[test]
fn reverse_fields_are_dual() {
    let lab = lab_on("zermelo-w05", GridSpec { x: [-2.0, 2.0], y: [-2.0, 2.0], h: 0.05 });
    let p = ClosedSetSpec::point(Point::new(0.5, -0.25));
    let from = eikonal_field(&lab.metric, &p, &lab.grid, Direction::FromSource).unwrap();
    let to_rev = eikonal_field(&lab.metric.reverse(), &p, &lab.grid, Direction::ToTarget).unwrap();
    assert!(from.max_abs_diff(&to_rev) < 1e-9);
    let to = eikonal_field(&lab.metric, &p, &lab.grid, Direction::ToTarget).unwrap();
    assert!(from.max_abs_diff(&to) > 0.5);
}

#[test]
fn zermelo_point_field_matches_travel_time() {
    let lab = lab_on("zermelo-w05", GridSpec { x: [-2.0, 2.0], y: [-2.0, 2.0], h: 0.05 });
    let o = Point::new(0.0, 0.0);
    let f = eikonal_field(&lab.metric, &ClosedSetSpec::point(o), &lab.grid, Direction::FromSource).unwrap();
    // Travel time under unit airspeed with wind (0.5, 0).
    let time = |q: &Point| {
        let (x, y) = (q[0], q[1]);
        let (w, a) = (0.5, 1.0 - 0.25);
        ((a * (x * x + y * y) + (w * x) * (w * x)).sqrt() - w * x) / a
    };
    let h = lab.grid.h;
    for q in [Point::new(1.0, 0.0), Point::new(-1.0, 0.0), Point::new(0.0, 1.5), Point::new(-1.2, 1.1)] {
        let v = f.interpolate(&q).unwrap();
        assert!((v - time(&q)).abs() < 3.0 * h, "{q:?}: {v} vs {}", time(&q));
    }
}

#[test]
fn cylinder_point_cut_locus_is_the_antipodal_line() {
    let lab = lab_on("cylinder-vertical", GridSpec { x: [-std::f64::consts::PI, std::f64::consts::PI], y: [-1.0, 1.0], h: 0.05 });
    let grid: &Grid = &lab.grid;
    let locus = cut_locus(&lab.metric, &ClosedSetSpec::point(Point::new(0.0, 0.0)), grid).unwrap();
    let pts = locus.points();
    assert!(pts.len() > 10);
    for p in &pts {
        assert!(std::f64::consts::PI - p[0].abs() <= 2.0 * grid.h, "{p:?}");
    }
}
