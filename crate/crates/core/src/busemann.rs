//! Busemann functions `b(x) = lim (t - d(x, γ(t)))` by doubling truncation,
//! co-rays as limits of minimal segments, and the checks tied to them.

use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::chart::{angle_between, Point, Vec2};
use crate::distance::{shoot_distance, straight_length, ShootOptions};
use crate::eikonal::{solve, EikonalOptions};
use crate::error::{Error, Result};
use crate::geodesic::{integrate, Geodesic, Ray};
use crate::grid::{FieldKind, Grid, Provenance, ScalarField};
use crate::metric::FinslerMetric;
use crate::sets::{ClosedSetSpec, Direction, Seed};

/// Truncation settings shared by the point and field evaluators.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BusemannOptions {
    /// Convergence threshold on the last increment.
    pub tol: f64,
    /// First truncation parameter; the schedule is `t0 · 2^k` up to the horizon.
    pub t0: f64,
}

impl BusemannOptions {
    pub fn new(tol: f64, t0: f64) -> Self {
        BusemannOptions { tol, t0 }
    }

    pub fn schedule(&self, horizon: f64) -> Vec<f64> {
        let mut out = Vec::new();
        let mut t = self.t0;
        while t <= horizon * (1.0 + 1e-12) {
            out.push(t);
            t *= 2.0;
        }
        out
    }
}

/// Identifier of a ray: origin, unit initial velocity, horizon.
pub fn ray_id(ray: &Ray) -> String {
    let o = ray.origin();
    let v = ray.geodesic().initial_velocity();
    format!("ray(o=({:.6},{:.6}),v=({:.6},{:.6}),T={})", o[0], o[1], v[0], v[1], ray.horizon())
}

fn require_certified(ray: &Ray) -> Result<()> {
    if ray.certificate().is_none() {
        return Err(Error::NotCertified);
    }
    Ok(())
}

fn horizon_error(what: &str, t: f64, inc: f64, tol: f64) -> Error {
    Error::Horizon(format!("{what}: last increment {inc:.3e} at t = {t} still above tol {tol:.1e}"))
}

/// Pointwise Busemann value and its error estimate (the last increment).
pub fn busemann_value(
    metric: &FinslerMetric,
    ray: &Ray,
    x: &Point,
    opts: &BusemannOptions,
) -> Result<(f64, f64)> {
    require_certified(ray)?;
    metric.chart().check_point(x)?;
    let schedule = opts.schedule(ray.horizon());
    let mut prev: Option<f64> = None;
    let mut seeds: Vec<Vec2> = Vec::new();
    let mut last_inc = f64::INFINITY;
    for &t in &schedule {
        let target = ray.point(t);
        let sopts = shoot_opts(&seeds);
        let d = shoot_distance(metric, x, &target, &sopts)?;
        seeds = d.directions();
        let v = t - d.value;
        if let Some(p) = prev {
            let inc = v - p;
            if inc < -(d.error + 1e-6 * (1.0 + t)) {
                return Err(Error::Solver(format!("truncated Busemann values decreased by {:.3e} at t = {t}", -inc)));
            }
            last_inc = inc.abs();
            if last_inc < opts.tol {
                return Ok((v, last_inc));
            }
        }
        prev = Some(v);
    }
    Err(horizon_error("busemann value", *schedule.last().unwrap_or(&0.0), last_inc, opts.tol))
}

fn shoot_opts(seeds: &[Vec2]) -> ShootOptions {
    if seeds.is_empty() {
        ShootOptions::default()
    } else {
        ShootOptions { directions: 24, extra_seeds: seeds.to_vec(), ..Default::default() }
    }
}

/// Truncated values `t - d(x_i, γ(t))` for several points evaluated at a
/// common final schedule parameter, chosen as the first one at which every
/// point has converged. Pairwise comparisons then share one truncation.
pub fn busemann_values_common(
    metric: &FinslerMetric,
    ray: &Ray,
    xs: &[Point],
    opts: &BusemannOptions,
) -> Result<(Vec<f64>, f64)> {
    require_certified(ray)?;
    let schedule = opts.schedule(ray.horizon());
    let mut prev: Option<Vec<f64>> = None;
    let mut seeds: Vec<Vec<Vec2>> = vec![Vec::new(); xs.len()];
    let mut last = 0.0;
    for &t in &schedule {
        let target = ray.point(t);
        let res: Vec<Result<(f64, Vec<Vec2>)>> = xs
            .par_iter()
            .zip(seeds.par_iter())
            .map(|(x, s)| {
                let d = shoot_distance(metric, x, &target, &shoot_opts(s))?;
                Ok((t - d.value, d.directions()))
            })
            .collect();
        let mut vals = Vec::with_capacity(xs.len());
        for (i, r) in res.into_iter().enumerate() {
            let (v, dirs) = r?;
            vals.push(v);
            seeds[i] = dirs;
        }
        if let Some(p) = &prev {
            last = vals.iter().zip(p).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            if last < opts.tol {
                return Ok((vals, t));
            }
        }
        prev = Some(vals);
    }
    Err(horizon_error("common busemann values", *schedule.last().unwrap_or(&0.0), last, opts.tol))
}

/// Busemann function sampled on a grid.
#[derive(Clone, Debug)]
pub struct BusemannField {
    pub field: ScalarField,
    pub ray_id: String,
    /// Truncation parameters actually used.
    pub schedule: Vec<f64>,
    /// `|b_K - b_{K-1}|` per node at the final schedule point.
    pub last_increment: Vec<f64>,
    /// Smallest increment `b_{k+1} - b_k` per node over the schedule.
    pub min_increment: Vec<f64>,
}

impl BusemannField {
    /// Wraps a field that was not produced by truncation, for planted
    /// identities and imported data.
    pub fn synthetic(field: ScalarField) -> Self {
        let n = field.values.len();
        BusemannField {
            ray_id: field.provenance.source.clone(),
            field,
            schedule: Vec::new(),
            last_increment: vec![0.0; n],
            min_increment: vec![0.0; n],
        }
    }

    /// Companion fields holding the last and the smallest increments.
    pub fn increment_fields(&self) -> (ScalarField, ScalarField) {
        let aux = |v: &Vec<f64>, what: &str| {
            let prov = Provenance { source: format!("{}:{what}", self.ray_id), ..self.field.provenance.clone() };
            ScalarField::new(self.field.grid.clone(), v.clone(), FieldKind::Auxiliary, prov)
        };
        (aux(&self.last_increment, "last-increment"), aux(&self.min_increment, "min-increment"))
    }

    /// Inverse of [`BusemannField::increment_fields`]; the schedule is read
    /// from the field provenance.
    pub fn from_parts(field: ScalarField, last: ScalarField, min: ScalarField) -> Result<Self> {
        if last.grid != field.grid || min.grid != field.grid {
            return Err(Error::Input("increment fields live on a different grid".into()));
        }
        let schedule = field.provenance.params.get("schedule").and_then(|s| s.as_array()).map(|a| a.iter().filter_map(|v| v.as_f64()).collect()).unwrap_or_default();
        Ok(BusemannField { ray_id: field.provenance.source.clone(), field, schedule, last_increment: last.values, min_increment: min.values })
    }

    pub fn grid(&self) -> &Grid {
        &self.field.grid
    }

    pub fn value(&self, p: &Point) -> Option<f64> {
        self.field.interpolate(p)
    }

    pub fn max_last_increment(&self) -> f64 {
        self.last_increment.iter().copied().fold(0.0, f64::max)
    }

    pub fn min_increment(&self) -> f64 {
        self.min_increment.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

/// Seeds for the to-target field `d(·, q)`: boundary nodes receive the
/// straight-chord length to `q`, which is exact wherever the metric is flat
/// outside the grid; if `q` lies in the grid its neighbourhood is seeded too.
pub fn far_target_seeds(metric: &FinslerMetric, grid: &Grid, q: &Point) -> Vec<Seed> {
    let mut seeds: Vec<Seed> = grid
        .boundary_nodes()
        .into_iter()
        .map(|k| {
            let x = grid.node_at(k);
            let w = metric.chart().delta(&x, q);
            Seed { node: k, value: straight_length(metric, &x, &w), fixed: false }
        })
        .collect();
    if grid.contains(q) {
        seeds.extend(ClosedSetSpec::point(*q).seeds(metric, grid, Direction::ToTarget));
    }
    seeds
}

/// Truncated Busemann field at one schedule parameter.
pub fn truncated_field(metric: &FinslerMetric, ray: &Ray, grid: &Grid, t: f64) -> Result<Vec<f64>> {
    let target = ray.point(t);
    let seeds = far_target_seeds(metric, grid, &target);
    let sol = solve(metric, grid, &seeds, Direction::ToTarget, &EikonalOptions::default())?;
    Ok(sol.values.iter().map(|u| t - u).collect())
}

/// Busemann field on `grid`. Each schedule point costs one to-target eikonal
/// solve; the schedule runs until every node's increment drops below `tol`.
pub fn busemann_field(metric: &FinslerMetric, ray: &Ray, grid: &Grid, opts: &BusemannOptions) -> Result<BusemannField> {
    require_certified(ray)?;
    let schedule = opts.schedule(ray.horizon());
    if schedule.len() < 2 {
        return Err(Error::Horizon(format!(
            "horizon {} admits fewer than two schedule points from t0 = {}",
            ray.horizon(),
            opts.t0
        )));
    }
    let n = grid.len();
    let mut prev: Option<Vec<f64>> = None;
    let mut min_inc = vec![f64::INFINITY; n];
    let mut used = Vec::new();
    let mut last_max = f64::INFINITY;
    for &t in &schedule {
        let vals = truncated_field(metric, ray, grid, t)?;
        used.push(t);
        if let Some(p) = prev {
            let inc: Vec<f64> = vals.iter().zip(&p).map(|(a, b)| a - b).collect();
            for (m, i) in min_inc.iter_mut().zip(&inc) {
                *m = m.min(*i);
            }
            last_max = inc.iter().map(|i| i.abs()).fold(0.0, f64::max);
            if last_max < opts.tol {
                let field = ScalarField::new(
                    grid.clone(),
                    vals,
                    FieldKind::Busemann,
                    Provenance {
                        metric_id: metric.id(),
                        source: ray_id(ray),
                        params: serde_json::json!({ "tol": opts.tol, "t0": opts.t0, "schedule": used, "h": grid.h }),
                    },
                );
                return Ok(BusemannField {
                    field,
                    ray_id: ray_id(ray),
                    schedule: used,
                    last_increment: inc.iter().map(|i| i.abs()).collect(),
                    min_increment: min_inc,
                });
            }
        }
        prev = Some(vals);
    }
    Err(horizon_error("busemann field", *schedule.last().unwrap(), last_max, opts.tol))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Multiplicity {
    Unique,
    Multiple,
    Undecided,
}

#[derive(Clone, Debug)]
pub struct CoRayResult {
    pub base: Point,
    /// Unit initial velocities, one per limit direction.
    pub directions: Vec<Vec2>,
    /// Co-ray geodesics on `[0, s_max]`.
    pub corays: Vec<Geodesic>,
    pub verdict: Multiplicity,
    /// Per schedule point: the segment directions found.
    pub history: Vec<(f64, Vec<Vec2>)>,
    /// Largest direction change over the Cauchy tail.
    pub tail_change: f64,
}

#[derive(Clone, Debug)]
pub struct CoRayOptions {
    pub busemann: BusemannOptions,
    /// Clustering threshold for limit directions (radians).
    pub cluster_angle: f64,
    /// Length of the returned co-ray geodesics.
    pub s_max: f64,
    /// Cauchy tail threshold on direction changes (radians).
    pub direction_tol: f64,
}

impl CoRayOptions {
    pub fn new(busemann: BusemannOptions) -> Self {
        CoRayOptions { busemann, cluster_angle: 0.05, s_max: 3.0, direction_tol: 1e-3 }
    }
}

fn match_clusters(a: &[Vec2], b: &[Vec2], angle: f64) -> Option<f64> {
    if a.len() != b.len() {
        return None;
    }
    let mut worst: f64 = 0.0;
    for u in a {
        let best = b.iter().map(|v| angle_between(u, v)).fold(f64::INFINITY, f64::min);
        if best > angle {
            return None;
        }
        worst = worst.max(best);
    }
    Some(worst)
}

/// Co-rays from `x`: limits of the initial directions of minimal segments
/// from `x` to `γ(t_k)` along the truncation schedule.
pub fn construct_coray(metric: &FinslerMetric, ray: &Ray, x: &Point, opts: &CoRayOptions) -> Result<CoRayResult> {
    require_certified(ray)?;
    metric.chart().check_point(x)?;
    let schedule = opts.busemann.schedule(ray.horizon());
    if schedule.len() < 3 {
        return Err(Error::Horizon(format!("horizon {} too short for a 3-point Cauchy tail", ray.horizon())));
    }
    let mut history: Vec<(f64, Vec<Vec2>)> = Vec::new();
    let mut seeds: Vec<Vec2> = Vec::new();
    let mut verdict = Multiplicity::Undecided;
    let mut tail_change = f64::INFINITY;
    for &t in &schedule {
        let mut sopts = shoot_opts(&seeds);
        sopts.tie_angle = opts.cluster_angle;
        let d = shoot_distance(metric, x, &ray.point(t), &sopts)?;
        let dirs = d.directions();
        seeds = dirs.clone();
        history.push((t, dirs));
        if history.len() >= 3 {
            let tail = &history[history.len() - 3..];
            let c1 = match_clusters(&tail[0].1, &tail[1].1, opts.cluster_angle);
            let c2 = match_clusters(&tail[1].1, &tail[2].1, opts.cluster_angle);
            if let (Some(a), Some(b)) = (c1, c2) {
                tail_change = a.max(b);
                if tail_change < opts.direction_tol {
                    verdict = if tail[2].1.len() == 1 { Multiplicity::Unique } else { Multiplicity::Multiple };
                    break;
                }
            } else {
                tail_change = f64::INFINITY;
            }
        }
    }
    let directions = history.last().map(|h| h.1.clone()).unwrap_or_default();
    let corays = directions
        .iter()
        .map(|v| integrate(metric, x, v, (0.0, opts.s_max), 1e-10))
        .collect::<Result<Vec<_>>>()?;
    Ok(CoRayResult { base: *x, directions, corays, verdict, history, tail_change })
}

/// `max_s |b(σ(s)) - s - b(σ(0))|` over points of the curve at spacing `h/2`
/// that lie in the field's grid.
pub fn affine_growth_residual(coray: &Geodesic, bus: &BusemannField) -> f64 {
    let h = bus.grid().h;
    let (s0, _) = coray.span();
    let Some(b0) = bus.value(&coray.start()) else { return f64::INFINITY };
    coray
        .dense(0.5 * h)
        .into_iter()
        .filter_map(|(s, p)| bus.value(&p).map(|b| (b - (s - s0) - b0).abs()))
        .fold(0.0, f64::max)
}

/// Closed superlevel set `N^b = {b_γ ≥ b}` of a Busemann field.
pub fn upper_level_set(bus: &BusemannField, b: f64) -> Result<ClosedSetSpec> {
    if !b.is_finite() {
        return Err(Error::Level(format!("level {b} is not finite")));
    }
    if b > bus.field.max() {
        return Err(Error::Level(format!("level {b} above field maximum {:.4}; upper level set is empty", bus.field.max())));
    }
    Ok(ClosedSetSpec::Superlevel { field: Arc::new(bus.field.clone()), threshold: b })
}

/// Comparison of `{b > a}` with the union of backward balls
/// `{x : d(x, γ(t + a)) < t}` over the schedule.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BallUnionReport {
    pub level: f64,
    pub nodes: usize,
    pub mismatches: usize,
    /// Mismatches whose Busemann value lies farther than the band from `a`.
    pub mismatches_outside_band: usize,
    pub band: f64,
}

pub fn ball_union_check(
    metric: &FinslerMetric,
    ray: &Ray,
    bus: &BusemannField,
    a: f64,
    band: f64,
) -> Result<BallUnionReport> {
    let grid = bus.grid();
    let mut in_union = vec![false; grid.len()];
    for &t in &bus.schedule {
        if t + a > ray.horizon() || t + a <= 0.0 {
            continue;
        }
        let target = ray.point(t + a);
        let seeds = far_target_seeds(metric, grid, &target);
        let sol = solve(metric, grid, &seeds, Direction::ToTarget, &EikonalOptions::default())?;
        for (flag, u) in in_union.iter_mut().zip(&sol.values) {
            *flag |= *u < t;
        }
    }
    let mut mismatches = 0;
    let mut outside = 0;
    for (k, &inside) in in_union.iter().enumerate() {
        let b = bus.field.values[k];
        if (b > a) != inside {
            mismatches += 1;
            if (b - a).abs() > band {
                outside += 1;
            }
        }
    }
    Ok(BallUnionReport { level: a, nodes: grid.len(), mismatches, mismatches_outside_band: outside, band })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chart::Chart;
    use crate::geodesic::MinimalityCertificate;

    fn ray(metric: &FinslerMetric, dir: Vec2) -> Ray {
        let mut r = Ray::new(metric, &Point::zeros(), &dir, 40960.0, 1e-10).unwrap();
        r.set_certificate(MinimalityCertificate { parameters: vec![], pairs_checked: 0, max_residual: 0.0, threshold: 0.0 });
        r
    }

    fn opts() -> BusemannOptions {
        BusemannOptions::new(1e-3, 10.0)
    }

    #[test]
    fn schedule_doubles_up_to_horizon() {
        let s = opts().schedule(40960.0);
        assert_eq!(s.len(), 13);
        assert_eq!(*s.last().unwrap(), 40960.0);
    }

    #[test]
    fn euclidean_value() {
        let m = FinslerMetric::euclidean(Chart::rect(50000.0));
        let r = ray(&m, Vec2::new(1.0, 0.0));
        let (v, err) = busemann_value(&m, &r, &Point::new(2.0, 3.0), &opts()).unwrap();
        assert!((v - 2.0).abs() < 1e-3, "{v}");
        assert!(err < 1e-3);
        let (v, _) = busemann_value(&m, &r, &r.point(5.0), &opts()).unwrap();
        assert!((v - 5.0).abs() < 1e-6);
    }

    #[test]
    fn zermelo_value() {
        let m = FinslerMetric::zermelo([0.5, 0.0], Chart::rect(70000.0));
        let r = ray(&m, Vec2::new(1.0, 0.0));
        assert!((r.point(1.0) - Point::new(1.5, 0.0)).norm() < 1e-9);
        let (v, _) = busemann_value(&m, &r, &Point::new(1.0, 1.0), &opts()).unwrap();
        assert!((v - 2.0 / 3.0).abs() < 1e-3, "{v}");
    }

    #[test]
    fn uncertified_ray_is_rejected() {
        let m = FinslerMetric::euclidean(Chart::rect(50000.0));
        let r = Ray::new(&m, &Point::zeros(), &Vec2::new(1.0, 0.0), 100.0, 1e-10).unwrap();
        assert!(matches!(busemann_value(&m, &r, &Point::zeros(), &opts()), Err(Error::NotCertified)));
    }

    #[test]
    fn short_horizon_is_a_horizon_error() {
        let m = FinslerMetric::euclidean(Chart::rect(50000.0));
        let mut r = Ray::new(&m, &Point::zeros(), &Vec2::new(1.0, 0.0), 40.0, 1e-10).unwrap();
        r.set_certificate(MinimalityCertificate { parameters: vec![], pairs_checked: 0, max_residual: 0.0, threshold: 0.0 });
        let e = busemann_value(&m, &r, &Point::new(0.0, 3.0), &opts()).unwrap_err();
        assert!(matches!(e, Error::Horizon(_)));
        assert!(e.to_string().contains("extend ray horizon"));
    }

    #[test]
    fn euclidean_field_and_corays() {
        let m = FinslerMetric::euclidean(Chart::rect(50000.0));
        let r = ray(&m, Vec2::new(1.0, 0.0));
        let g = Grid::new([-2.0, -2.0], 0.1, 41, 41, [false, false]).unwrap();
        let bus = busemann_field(&m, &r, &g, &BusemannOptions::new(1e-3, 4.0)).unwrap();
        let err = (0..g.len()).map(|k| (bus.field.values[k] - g.node_at(k)[0]).abs()).fold(0.0, f64::max);
        assert!(err < 5.0 * g.h, "{err}");
        assert!(bus.min_increment() > -3.0 * g.h);
        let c = construct_coray(&m, &r, &Point::new(-1.0, 0.5), &CoRayOptions::new(opts())).unwrap();
        assert_eq!(c.verdict, Multiplicity::Unique);
        assert!((c.directions[0] - Vec2::new(1.0, 0.0)).norm() < 1e-3);
        let res = affine_growth_residual(&c.corays[0], &bus);
        assert!(res < 5.0 * g.h);
        let perp = integrate(&m, &Point::new(-1.0, -1.5), &Vec2::new(0.0, 1.0), (0.0, 3.0), 1e-10).unwrap();
        assert!(affine_growth_residual(&perp, &bus) > 0.5);
        assert!(upper_level_set(&bus, 5.0).is_err());
        let rep = ball_union_check(&m, &r, &bus, 0.5, 3.0 * g.h).unwrap();
        assert_eq!(rep.mismatches_outside_band, 0, "{rep:?}");
    }
}
