//! Closed target/source sets and their rasterization onto a grid.

use std::sync::Arc;

use crate::chart::{Point, Vec2};
use crate::grid::{Grid, ScalarField};
use crate::metric::FinslerMetric;

/// A closed subset of the chart.
#[derive(Clone, Debug)]
pub enum ClosedSetSpec {
    Points(Vec<Point>),
    /// Open polyline through the given vertices.
    Polyline(Vec<Point>),
    /// `{field >= threshold}`.
    Superlevel { field: Arc<ScalarField>, threshold: f64 },
    /// `{field <= threshold}`.
    Sublevel { field: Arc<ScalarField>, threshold: f64 },
}

/// Initial value for one node of an eikonal solve.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Seed {
    pub node: usize,
    pub value: f64,
    /// Fixed seeds are never updated by the solver.
    pub fixed: bool,
}

/// Which way paths run relative to the seeded set.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Direction {
    /// `u(x) = d(x, N)`: paths leave `x` and end on the set.
    ToTarget,
    /// `u(x) = d(N, x)`: paths leave the set and end at `x`.
    FromSource,
}

/// F-length of the straight segment from `a` by displacement `w`, by
/// 3-point Gauss-Legendre quadrature.
pub fn segment_cost(metric: &FinslerMetric, a: &Point, w: &Vec2) -> f64 {
    const X: f64 = 0.774_596_669_241_483_4;
    let p = |t: f64| a + w * (0.5 + 0.5 * t);
    (5.0 * metric.f(&p(-X), w) + 8.0 * metric.f(&p(0.0), w) + 5.0 * metric.f(&p(X), w)) / 18.0
}

/// Directed straight-line cost between a node `x` and a set point `p`.
pub fn directed_cost(metric: &FinslerMetric, x: &Point, w_to_p: &Vec2, dir: Direction) -> f64 {
    match dir {
        Direction::ToTarget => segment_cost(metric, x, w_to_p),
        Direction::FromSource => segment_cost(metric, &(x + w_to_p), &(-w_to_p)),
    }
}

fn closest_on_segment(p: &Point, a: &Point, b: &Point) -> Point {
    let d = b - a;
    let l2 = d.norm_squared();
    if l2 == 0.0 {
        return *a;
    }
    let t = ((p - a).dot(&d) / l2).clamp(0.0, 1.0);
    a + d * t
}

impl ClosedSetSpec {
    pub fn point(p: Point) -> Self {
        ClosedSetSpec::Points(vec![p])
    }

    /// Euclidean displacement from `x` to the nearest point of a point or
    /// polyline set, using the grid's periodicity.
    fn nearest_displacement(&self, grid: &Grid, x: &Point) -> Option<Vec2> {
        match self {
            ClosedSetSpec::Points(ps) => ps
                .iter()
                .map(|p| grid.delta(x, p))
                .min_by(|a, b| a.norm().total_cmp(&b.norm())),
            ClosedSetSpec::Polyline(vs) => {
                if vs.len() == 1 {
                    return Some(grid.delta(x, &vs[0]));
                }
                vs.windows(2)
                    .map(|w| {
                        let a = x + grid.delta(x, &w[0]);
                        let b = a + (w[1] - w[0]);
                        closest_on_segment(x, &a, &b) - x
                    })
                    .min_by(|a, b| a.norm().total_cmp(&b.norm()))
            }
            _ => None,
        }
    }

    /// Membership test with rasterization tolerance `tol` for point and
    /// polyline sets.
    pub fn contains(&self, grid: &Grid, x: &Point, tol: f64) -> bool {
        match self {
            ClosedSetSpec::Superlevel { field, threshold } => {
                field.interpolate(x).is_some_and(|v| v >= *threshold)
            }
            ClosedSetSpec::Sublevel { field, threshold } => {
                field.interpolate(x).is_some_and(|v| v <= *threshold)
            }
            _ => self.nearest_displacement(grid, x).is_some_and(|d| d.norm() <= tol),
        }
    }

    fn level_value(&self, x: &Point) -> Option<f64> {
        match self {
            ClosedSetSpec::Superlevel { field, threshold } => field.interpolate(x).map(|v| v - threshold),
            ClosedSetSpec::Sublevel { field, threshold } => field.interpolate(x).map(|v| threshold - v),
            _ => None,
        }
    }

    /// Initial values for an eikonal solve. Nodes within `h/2` of a point
    /// or polyline set (or inside a level set) are fixed; nodes near the
    /// set get straight-line upper bounds.
    pub fn seeds(&self, metric: &FinslerMetric, grid: &Grid, dir: Direction) -> Vec<Seed> {
        let h = grid.h;
        let mut out = Vec::new();
        match self {
            ClosedSetSpec::Points(_) | ClosedSetSpec::Polyline(_) => {
                for k in 0..grid.len() {
                    let x = grid.node_at(k);
                    let Some(d) = self.nearest_displacement(grid, &x) else { continue };
                    let r = d.norm();
                    if r <= 0.5 * h + 1e-12 {
                        let value = match self {
                            ClosedSetSpec::Polyline(_) => 0.0,
                            _ => directed_cost(metric, &x, &d, dir),
                        };
                        out.push(Seed { node: k, value, fixed: true });
                    } else if r <= 3.0 * h {
                        out.push(Seed { node: k, value: directed_cost(metric, &x, &d, dir), fixed: false });
                    }
                }
            }
            ClosedSetSpec::Superlevel { .. } | ClosedSetSpec::Sublevel { .. } => {
                let vals: Vec<Option<f64>> = (0..grid.len()).map(|k| self.level_value(&grid.node_at(k))).collect();
                for k in 0..grid.len() {
                    let Some(vk) = vals[k] else { continue };
                    if vk >= 0.0 {
                        out.push(Seed { node: k, value: 0.0, fixed: true });
                        continue;
                    }
                    let (i, j) = grid.ij(k);
                    let x = grid.node_at(k);
                    let mut best = f64::INFINITY;
                    for (di, dj) in [(1, 0), (-1, 0), (0, 1), (0, -1), (1, 1), (1, -1), (-1, 1), (-1, -1)] {
                        let Some(n) = grid.offset(i, j, di, dj) else { continue };
                        let Some(vn) = vals[n] else { continue };
                        if vn >= 0.0 {
                            let lambda = vk / (vk - vn);
                            let w = Vec2::new(di as f64, dj as f64) * (h * lambda);
                            best = best.min(directed_cost(metric, &x, &w, dir));
                        }
                    }
                    if best.is_finite() {
                        out.push(Seed { node: k, value: best, fixed: false });
                    }
                }
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chart::Chart;
    use crate::grid::FieldKind;

    #[test]
    fn point_seeds_are_local() {
        let m = FinslerMetric::euclidean(Chart::rect(5.0));
        let g = Grid::new([-1.0, -1.0], 0.1, 21, 21, [false, false]).unwrap();
        let s = ClosedSetSpec::point(Point::new(0.0, 0.0)).seeds(&m, &g, Direction::ToTarget);
        let zero = s.iter().find(|s| s.value == 0.0).unwrap();
        assert!(zero.fixed);
        assert_eq!(g.node_at(zero.node).norm(), 0.0);
        for sd in &s {
            assert!((sd.value - g.node_at(sd.node).norm()).abs() < 1e-12);
            assert!(sd.value <= 0.3 + 1e-12);
        }
    }

    #[test]
    fn zermelo_seeds_respect_direction() {
        let m = FinslerMetric::zermelo([0.5, 0.0], Chart::rect(5.0));
        let g = Grid::new([-1.0, -1.0], 0.1, 21, 21, [false, false]).unwrap();
        let set = ClosedSetSpec::point(Point::new(0.0, 0.0));
        let k = g.idx(11, 10);
        let to = set.seeds(&m, &g, Direction::ToTarget).into_iter().find(|s| s.node == k).unwrap();
        let from = set.seeds(&m, &g, Direction::FromSource).into_iter().find(|s| s.node == k).unwrap();
        assert!((to.value - 0.2).abs() < 1e-12);
        assert!((from.value - 0.1 / 1.5).abs() < 1e-12);
    }

    #[test]
    fn level_set_interface_seeding() {
        let m = FinslerMetric::euclidean(Chart::rect(5.0));
        let g = Grid::new([-1.0, -1.0], 0.1, 21, 21, [false, false]).unwrap();
        let f = ScalarField::from_fn(g.clone(), FieldKind::Auxiliary, "x", |p| p[0]);
        let set = ClosedSetSpec::Superlevel { field: Arc::new(f), threshold: 0.55 };
        let seeds = set.seeds(&m, &g, Direction::ToTarget);
        let at = |i, j| seeds.iter().find(|s| s.node == g.idx(i, j)).copied();
        assert!(at(20, 3).unwrap().fixed);
        assert!((at(15, 3).unwrap().value - 0.05).abs() < 1e-9);
        assert!(at(10, 3).is_none());
        assert!(set.contains(&g, &Point::new(0.6, 0.0), 0.0));
    }
}
