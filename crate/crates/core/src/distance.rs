//! Point-to-point distances by geodesic shooting, a lattice-graph oracle,
//! shortest-path feet on closed sets, and ray minimality certificates.

use std::cmp::Reverse;
use std::collections::BinaryHeap;

use serde::{Deserialize, Serialize};

use crate::chart::{angle_between, angle_of, unit, Point, Vec2};
use crate::error::{Error, Result};
use crate::geodesic::{integrate, Geodesic, MinimalityCertificate, Ray};
use crate::grid::{Grid, ScalarField};
use crate::metric::FinslerMetric;
use crate::ring::{ring_profile, ring_radius};
use crate::sets::{segment_cost, ClosedSetSpec};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Shooting,
    Eikonal,
    GraphOracle,
}

#[derive(Clone, Debug)]
pub struct DistanceResult {
    pub value: f64,
    /// Minimal segments; more than one when lengths tie.
    pub segments: Vec<Geodesic>,
    pub method: Method,
    pub error: f64,
}

impl DistanceResult {
    /// Unit initial velocities of the minimal segments.
    pub fn directions(&self) -> Vec<Vec2> {
        self.segments.iter().map(|g| g.initial_velocity()).collect()
    }
}

#[derive(Clone, Debug)]
pub struct ShootOptions {
    /// Relative endpoint tolerance; the ODE runs at `tol * 1e-2`.
    pub tol: f64,
    /// Equispaced multi-start directions.
    pub directions: usize,
    /// Additional start directions tried first.
    pub extra_seeds: Vec<Vec2>,
    /// Converged branches closer than this (radians) are merged.
    pub dedup_angle: f64,
    /// Length gap below which two branches tie.
    pub tie_tol: f64,
    /// Angular separation required for a tie to count as two segments.
    pub tie_angle: f64,
    pub max_newton: usize,
}

impl Default for ShootOptions {
    fn default() -> Self {
        ShootOptions {
            tol: 1e-9,
            directions: 64,
            extra_seeds: Vec::new(),
            dedup_angle: 1e-3,
            tie_tol: 1e-5,
            tie_angle: 0.05,
            max_newton: 40,
        }
    }
}

/// F-length of the straight chord from `a` along `w`, by composite
/// Gauss-Legendre quadrature on pieces no longer than a fifth of the
/// metric's step limit.
pub fn straight_length(metric: &FinslerMetric, a: &Point, w: &Vec2) -> f64 {
    let len = w.norm();
    if len == 0.0 {
        return 0.0;
    }
    let dir = w / len;
    let mut s = 0.0;
    let mut total = 0.0;
    while s < len {
        let x = a + dir * s;
        let piece = (0.2 * metric.step_limit(&x)).max(0.02).min(len - s);
        let piece = if len - s - piece < 1e-12 * len { len - s } else { piece };
        total += segment_cost(metric, &x, &(dir * piece));
        s += piece;
    }
    total
}

struct Branch {
    theta: f64,
    length: f64,
    miss: f64,
    geodesic: Geodesic,
}

fn closest_approach(metric: &FinslerMetric, g: &Geodesic, q: &Point) -> (f64, f64) {
    let chart = metric.chart();
    let miss = |s: f64| chart.delta(q, &g.point_unwrapped(s)).norm();
    let samples = g.samples();
    let mut best = (samples[0].s, miss(samples[0].s));
    let mut idx = 0;
    for (i, p) in samples.iter().enumerate() {
        let m = chart.delta(q, &p.x).norm();
        if m < best.1 {
            best = (p.s, m);
            idx = i;
        }
    }
    let lo = samples[idx.saturating_sub(1)].s;
    let hi = samples[(idx + 1).min(samples.len() - 1)].s;
    // Samples can be far apart; scan the bracketing intervals before refining.
    let n = 32;
    for k in 0..=n {
        let s = lo + (hi - lo) * k as f64 / n as f64;
        let m = miss(s);
        if m < best.1 {
            best = (s, m);
        }
    }
    let step = (hi - lo) / n as f64;
    let (mut a, mut b) = ((best.0 - step).max(lo), (best.0 + step).min(hi));
    let r = 0.5 * (5f64.sqrt() - 1.0);
    for _ in 0..60 {
        let m1 = b - r * (b - a);
        let m2 = a + r * (b - a);
        if miss(m1) < miss(m2) {
            b = m2;
        } else {
            a = m1;
        }
    }
    let s = 0.5 * (a + b);
    let m = miss(s);
    if m < best.1 {
        (s, m)
    } else {
        best
    }
}

/// Newton iteration on `(θ, L) ↦ x(L; θ) - q`.
fn refine(metric: &FinslerMetric, p: &Point, q: &Point, theta0: f64, l0: f64, opts: &ShootOptions) -> Option<Branch> {
    let chart = metric.chart();
    let ode_tol = opts.tol * 1e-2;
    let shoot = |theta: f64, l: f64| integrate(metric, p, &unit(theta), (0.0, l.max(1e-12)), ode_tol).ok();
    let resid = |g: &Geodesic| chart.delta(q, &g.point_unwrapped(g.span().1));
    let (mut theta, mut l) = (theta0, l0);
    let mut g = shoot(theta, l)?;
    let mut e = resid(&g);
    let dth = 1e-6;
    for _ in 0..opts.max_newton {
        if e.norm() < opts.tol * (1.0 + l) {
            return (!g.truncated()).then(|| Branch { theta, length: l, miss: e.norm(), geodesic: g });
        }
        let gp = shoot(theta + dth, l)?;
        let gm = shoot(theta - dth, l)?;
        let col0 = (gp.point_unwrapped(l) - gm.point_unwrapped(l)) / (2.0 * dth);
        let col1 = g.velocity(l);
        let det = col0[0] * col1[1] - col0[1] * col1[0];
        if det.abs() < 1e-14 * (1.0 + col0.norm()) {
            return None;
        }
        let d_theta = (col1[1] * e[0] - col1[0] * e[1]) / det;
        let d_l = (-col0[1] * e[0] + col0[0] * e[1]) / det;
        let mut lam = 1.0;
        let mut accepted = false;
        for _ in 0..12 {
            let (t2, l2) = (theta - lam * d_theta, l - lam * d_l);
            if l2 > 0.0 {
                if let Some(g2) = shoot(t2, l2) {
                    let e2 = resid(&g2);
                    if e2.norm() < e.norm() {
                        (theta, l, g, e) = (t2, l2, g2, e2);
                        accepted = true;
                        break;
                    }
                }
            }
            lam *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    (e.norm() < opts.tol * (1.0 + l) && !g.truncated()).then(|| Branch { theta, length: l, miss: e.norm(), geodesic: g })
}

/// Forward distance `d(p, q)` by multi-start shooting. Every local minimum
/// of the closest-approach miss over the start directions is refined by
/// Newton's method; the shortest converged branch wins.
pub fn shoot_distance(metric: &FinslerMetric, p: &Point, q: &Point, opts: &ShootOptions) -> Result<DistanceResult> {
    let chart = metric.chart();
    chart.check_point(p)?;
    chart.check_point(q)?;
    let w = chart.delta(p, q);
    if w.norm() < opts.tol {
        let g = integrate(metric, p, &Vec2::new(1.0, 0.0), (0.0, 0.0), opts.tol)?;
        return Ok(DistanceResult { value: 0.0, segments: vec![g], method: Method::Shooting, error: opts.tol });
    }
    let upper = straight_length(metric, p, &w);
    let l_max = 1.05 * upper + 1e-9;
    let ode_tol = opts.tol * 1e-2;
    let n = opts.directions.max(4);
    let mut starts: Vec<f64> = opts.extra_seeds.iter().map(angle_of).collect();
    let probe: Vec<(f64, f64, f64)> = (0..n)
        .map(|i| {
            let theta = angle_of(&w) + i as f64 * std::f64::consts::TAU / n as f64;
            match integrate(metric, p, &unit(theta), (0.0, l_max), ode_tol.max(1e-10)) {
                Ok(g) => {
                    let (s, m) = closest_approach(metric, &g, q);
                    (theta, s, m)
                }
                Err(_) => (theta, 0.0, f64::INFINITY),
            }
        })
        .collect();
    let mut order: Vec<usize> = (0..n)
        .filter(|&i| {
            let m = probe[i].2;
            m.is_finite() && m <= probe[(i + n - 1) % n].2 && m <= probe[(i + 1) % n].2
        })
        .collect();
    order.sort_by(|&a, &b| probe[a].2.total_cmp(&probe[b].2));
    starts.extend(order.iter().map(|&i| probe[i].0));
    let mut lengths: Vec<f64> = opts
        .extra_seeds
        .iter()
        .map(|v| {
            integrate(metric, p, v, (0.0, l_max), ode_tol.max(1e-10))
                .map(|g| closest_approach(metric, &g, q).0)
                .unwrap_or(upper)
        })
        .collect();
    lengths.extend(order.iter().map(|&i| probe[i].1));

    let mut branches: Vec<Branch> = Vec::new();
    for (theta, l0) in starts.into_iter().zip(lengths) {
        if let Some(b) = refine(metric, p, q, theta, l0.max(1e-3 * upper), opts) {
            let dup = branches.iter_mut().find(|o| angle_between(&unit(o.theta), &unit(b.theta)) < opts.dedup_angle);
            match dup {
                Some(o) if o.length <= b.length => {}
                Some(o) => *o = b,
                None => branches.push(b),
            }
        }
    }
    if branches.is_empty() {
        let best = probe.iter().map(|x| x.2).fold(f64::INFINITY, f64::min);
        return Err(Error::Solver(format!(
            "shooting from ({}, {}) to ({}, {}) found no converged branch (best miss {best:.3e})",
            p[0], p[1], q[0], q[1]
        )));
    }
    branches.sort_by(|a, b| a.length.total_cmp(&b.length));
    let value = branches[0].length;
    let mut segments: Vec<Branch> = Vec::new();
    for b in branches {
        if b.length - value > opts.tie_tol {
            break;
        }
        if segments.iter().all(|s| angle_between(&unit(s.theta), &unit(b.theta)) > opts.tie_angle) {
            segments.push(b);
        }
    }
    let error = segments.iter().map(|b| b.miss).fold(0.0, f64::max) + opts.tol * (1.0 + value);
    Ok(DistanceResult {
        value,
        segments: segments.into_iter().map(|b| b.geodesic).collect(),
        method: Method::Shooting,
        error,
    })
}

#[derive(PartialEq)]
struct Key(f64);
impl Eq for Key {}
impl PartialOrd for Key {
    fn partial_cmp(&self, o: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(o))
    }
}
impl Ord for Key {
    fn cmp(&self, o: &Self) -> std::cmp::Ordering {
        self.0.total_cmp(&o.0)
    }
}

/// Shortest-path length between the grid nodes nearest `p` and `q` on the
/// lattice graph whose edges are the primitive offsets of max-norm at most
/// `stencil_radius`, weighted by the directed F-length of the straight edge.
/// An upper bound on `d(p, q)` up to the snapping of the endpoints.
pub fn graph_oracle_distance(
    metric: &FinslerMetric,
    p: &Point,
    q: &Point,
    grid: &Grid,
    stencil_radius: i32,
) -> Result<f64> {
    let src = grid.nearest(p).ok_or_else(|| Error::Domain("p outside grid".into()))?;
    let dst = grid.nearest(q).ok_or_else(|| Error::Domain("q outside grid".into()))?;
    let r = stencil_radius.max(1);
    let gcd = |mut a: i32, mut b: i32| {
        (a, b) = (a.abs(), b.abs());
        while b != 0 {
            (a, b) = (b, a % b);
        }
        a
    };
    let offsets: Vec<(i32, i32)> =
        (-r..=r).flat_map(|i| (-r..=r).map(move |j| (i, j))).filter(|&(i, j)| gcd(i, j) == 1).collect();
    let mut dist = vec![f64::INFINITY; grid.len()];
    let mut heap = BinaryHeap::new();
    dist[src] = 0.0;
    heap.push(Reverse((Key(0.0), src)));
    while let Some(Reverse((Key(d), node))) = heap.pop() {
        if node == dst {
            return Ok(d);
        }
        if d > dist[node] {
            continue;
        }
        let (i, j) = grid.ij(node);
        let x = grid.node(i, j);
        for &(di, dj) in &offsets {
            if let Some(z) = grid.offset(i, j, di, dj) {
                let w = Vec2::new(di as f64, dj as f64) * grid.h;
                let nd = d + segment_cost(metric, &x, &w);
                if nd < dist[z] {
                    dist[z] = nd;
                    heap.push(Reverse((Key(nd), z)));
                }
            }
        }
    }
    Ok(f64::INFINITY)
}

/// A shortest path from `x` into a closed set: its initial unit direction
/// and where it lands.
#[derive(Clone, Debug)]
pub struct Foot {
    pub point: Point,
    pub direction: Vec2,
    pub length: f64,
}

/// Feet of the shortest paths from `x` into `set`, read off the to-target
/// field `field = d(·, set)`. Each significant minimum of the ring profile
/// within `tie` of the best one yields a foot, found by following the
/// geodesic until it enters the set.
pub fn nearest_foot(
    metric: &FinslerMetric,
    field: &ScalarField,
    set: &ClosedSetSpec,
    x: &Point,
    tie: f64,
) -> Result<Vec<Foot>> {
    let h = field.grid.h;
    if set.contains(&field.grid, x, 0.5 * h) {
        return Err(Error::Domain(format!("({}, {}) lies in the set", x[0], x[1])));
    }
    let u = field.interpolate(x).ok_or_else(|| Error::Domain("point outside field grid".into()))?;
    let rho = ring_radius(metric, h, u);
    let prof = ring_profile(metric, field, x, rho, 256);
    let basins = prof.basins(0.02 * h);
    let best = basins.first().map(|b| b.value).ok_or_else(|| Error::Solver("empty ring profile".into()))?;
    let span = 1.5 * u + 4.0 * h;
    let hit = |theta: f64| -> Option<Foot> {
        let e = unit(theta);
        let dir = e / metric.f(x, &e);
        let g = integrate(metric, x, &dir, (0.0, span), 1e-10).ok()?;
        let inside = |s: f64| set.contains(&field.grid, &g.point(s), 0.5 * h);
        let ds = 0.25 * h;
        let n = (g.length() / ds).ceil() as usize;
        let k = (1..=n).find(|&k| inside((k as f64 * ds).min(g.length())))?;
        let (mut a, mut b) = ((k - 1) as f64 * ds, (k as f64 * ds).min(g.length()));
        for _ in 0..50 {
            let m = 0.5 * (a + b);
            if inside(m) {
                b = m;
            } else {
                a = m;
            }
        }
        Some(Foot { point: g.point(b), direction: dir, length: b })
    };
    let len = |theta: f64| hit(theta).map_or(f64::INFINITY, |f| f.length);
    let mut feet: Vec<Foot> = Vec::new();
    for b in basins.iter().filter(|b| b.value <= best + tie) {
        if feet.iter().any(|f| angle_between(&f.direction, &unit(b.theta)) < 0.05) {
            continue;
        }
        // The ring minimum is only grid-accurate; polish by minimizing the
        // length of the path to first contact with the set.
        let w = 2.0 * std::f64::consts::TAU / prof.thetas.len() as f64;
        let (mut lo, mut hi) = (b.theta - w, b.theta + w);
        let r = 0.5 * (5f64.sqrt() - 1.0);
        for _ in 0..30 {
            let m1 = hi - r * (hi - lo);
            let m2 = lo + r * (hi - lo);
            if len(m1) < len(m2) {
                hi = m2;
            } else {
                lo = m1;
            }
        }
        let theta = if len(0.5 * (lo + hi)) <= len(b.theta) { 0.5 * (lo + hi) } else { b.theta };
        if let Some(f) = hit(theta) {
            feet.push(f);
        }
    }
    if feet.is_empty() {
        return Err(Error::Solver("no descent path reached the set".into()));
    }
    Ok(feet)
}

/// Certifies a ray as minimizing between all pairs of the dyadic parameters
/// `{0} ∪ {T·2^-k}` down to `t_min`: `|d(γ(a), γ(b)) - (b - a)| ≤ threshold`.
pub fn certify_ray(metric: &FinslerMetric, ray: &Ray, t_min: f64, threshold: f64) -> Result<MinimalityCertificate> {
    let mut params = vec![0.0];
    let mut t = ray.horizon();
    let mut dyadic = Vec::new();
    while t >= t_min {
        dyadic.push(t);
        t *= 0.5;
    }
    dyadic.reverse();
    params.extend(dyadic);
    let g = ray.geodesic();
    let mut pairs = Vec::new();
    for i in 0..params.len() {
        for j in i + 1..params.len() {
            pairs.push((params[i], params[j]));
        }
    }
    use rayon::prelude::*;
    let residuals: Vec<Result<f64>> = pairs
        .par_iter()
        .map(|&(a, b)| {
            let opts = ShootOptions { directions: 16, extra_seeds: vec![g.velocity(a)], ..Default::default() };
            let d = shoot_distance(metric, &g.point(a), &g.point(b), &opts)?;
            Ok((d.value - (b - a)).abs())
        })
        .collect();
    let mut max_residual: f64 = 0.0;
    for r in residuals {
        max_residual = max_residual.max(r?);
    }
    if max_residual > threshold {
        return Err(Error::NotCertified.context(format!(
            "ray not minimizing at resolution: residual {max_residual:.3e} > {threshold:.3e}"
        )));
    }
    Ok(MinimalityCertificate { parameters: params, pairs_checked: pairs.len(), max_residual, threshold })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chart::Chart;
    use crate::eikonal::{eikonal_solve, EikonalOptions};
    use crate::grid::FieldKind;
    use crate::sets::Direction;

    #[test]
    fn euclidean_shooting() {
        let m = FinslerMetric::euclidean(Chart::rect(20.0));
        let r = shoot_distance(&m, &Point::zeros(), &Point::new(3.0, 4.0), &ShootOptions::default()).unwrap();
        assert!((r.value - 5.0).abs() < 1e-8);
        assert_eq!(r.segments.len(), 1);
    }

    #[test]
    fn zermelo_shooting_both_ways() {
        let m = FinslerMetric::zermelo([0.5, 0.0], Chart::rect(20.0));
        let o = ShootOptions::default();
        let a = shoot_distance(&m, &Point::zeros(), &Point::new(1.0, 0.0), &o).unwrap();
        let b = shoot_distance(&m, &Point::new(1.0, 0.0), &Point::zeros(), &o).unwrap();
        assert!((a.value - 2.0 / 3.0).abs() < 1e-6 * 2.0 / 3.0);
        assert!((b.value - 2.0).abs() < 2e-6);
    }

    #[test]
    fn bump_has_two_tied_segments() {
        let m = FinslerMetric::conformal_bump(1.0, [0.0, 0.0], 1.0, Chart::rect(20.0));
        let r = shoot_distance(&m, &Point::new(-4.0, 0.0), &Point::new(4.0, 0.0), &ShootOptions::default()).unwrap();
        assert_eq!(r.segments.len(), 2, "{:?}", r.directions());
        let d = r.directions();
        assert!((d[0][1] + d[1][1]).abs() < 1e-4);
        let lens: Vec<f64> = r.segments.iter().map(|g| g.length()).collect();
        assert!((lens[0] - lens[1]).abs() < 1e-6);
        assert!(r.value < 8.0 * (1.0 + 1e-9) + 1.0);
    }

    #[test]
    fn cylinder_uses_short_way_round() {
        let pi = std::f64::consts::PI;
        let m = FinslerMetric::flat_cylinder(Chart::new([-pi, pi], [-20.0, 20.0], [true, false], "c").unwrap()).unwrap();
        let r = shoot_distance(&m, &Point::new(3.0, 0.0), &Point::new(-3.0, 1.0), &ShootOptions::default()).unwrap();
        let expect = ((2.0 * pi - 6.0).powi(2) + 1.0).sqrt();
        assert!((r.value - expect).abs() < 1e-7);
    }

    #[test]
    fn graph_oracle_examples() {
        let m = FinslerMetric::euclidean(Chart::rect(5.0));
        let g = Grid::new([-0.5, -0.5], 0.05, 41, 41, [false, false]).unwrap();
        let d = graph_oracle_distance(&m, &Point::zeros(), &Point::new(1.0, 1.0), &g, 3).unwrap();
        assert!((d / 2f64.sqrt() - 1.0).abs() < 0.01);
        let z = FinslerMetric::zermelo([0.5, 0.0], Chart::rect(5.0));
        let f = graph_oracle_distance(&z, &Point::zeros(), &Point::new(1.0, 0.0), &g, 3).unwrap();
        let b = graph_oracle_distance(&z, &Point::new(1.0, 0.0), &Point::zeros(), &g, 3).unwrap();
        assert!((f / (2.0 / 3.0) - 1.0).abs() < 0.02);
        assert!((b / 2.0 - 1.0).abs() < 0.02);
    }

    #[test]
    fn feet_on_half_plane_and_disk_complement() {
        let m = FinslerMetric::euclidean(Chart::rect(5.0));
        let g = Grid::new([-2.0, -2.0], 0.02, 201, 201, [false, false]).unwrap();
        let xf = ScalarField::from_fn(g.clone(), FieldKind::Auxiliary, "x", |p| p[0]);
        let hp = ClosedSetSpec::Superlevel { field: std::sync::Arc::new(xf), threshold: 1.0 };
        let sol = eikonal_solve(&m, &hp, &g, Direction::ToTarget, &EikonalOptions::default()).unwrap();
        let field = sol.field(FieldKind::DistanceToSet, Default::default());
        let feet = nearest_foot(&m, &field, &hp, &Point::new(0.0, 0.3), 1e-4).unwrap();
        assert_eq!(feet.len(), 1);
        assert!((feet[0].direction - Vec2::new(1.0, 0.0)).norm() < 1e-6);
        assert!((feet[0].point - Point::new(1.0, 0.3)).norm() < 0.02);

        let rf = ScalarField::from_fn(g.clone(), FieldKind::Auxiliary, "r", |p| p.norm());
        let disk = ClosedSetSpec::Superlevel { field: std::sync::Arc::new(rf), threshold: 1.0 };
        let sol = eikonal_solve(&m, &disk, &g, Direction::ToTarget, &EikonalOptions::default()).unwrap();
        let field = sol.field(FieldKind::DistanceToSet, Default::default());
        let feet = nearest_foot(&m, &field, &disk, &Point::new(0.2, 0.0), 1e-4).unwrap();
        assert_eq!(feet.len(), 1);
        assert!((feet[0].point - Point::new(1.0, 0.0)).norm() < 0.03, "{feet:?}");
        assert!(nearest_foot(&m, &field, &disk, &Point::new(1.5, 0.0), 1e-4).is_err());
    }

    #[test]
    fn straight_length_matches_closed_forms() {
        let z = FinslerMetric::zermelo([0.5, 0.0], Chart::rect(5.0));
        assert!((straight_length(&z, &Point::zeros(), &Vec2::new(-3.0, 0.0)) - 6.0).abs() < 1e-12);
        let b = FinslerMetric::conformal_bump(1.0, [0.0, 0.0], 1.0, Chart::rect(5.0));
        let l = straight_length(&b, &Point::new(-4.0, 0.0), &Vec2::new(8.0, 0.0));
        let n = 200_000;
        let dt = 8.0 / n as f64;
        let exact: f64 = (0..n).map(|i| (-(-4.0 + (i as f64 + 0.5) * dt).powi(2)).exp().exp() * dt).sum();
        assert!((l - exact).abs() < 1e-6, "{l} vs {exact}");
    }
}
