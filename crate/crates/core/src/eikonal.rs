//! Fast-sweeping solver for the directed eikonal equation `F*(x, ±du) = 1`.
//!
//! Each node update is a discrete Hopf-Lax step over a radius-3 stencil:
//! `u(x) = min_w [ c(x, w) + u(x + w) ]`, where `w` ranges over segments
//! between angularly adjacent primitive lattice offsets and `u(x + w)` is
//! interpolated linearly along the segment. The midpoint cost
//! `c(x, w) = F(x + w/2, w)` is used for target problems; source problems
//! use the reverse metric. Updates only ever lower a value, so the sweeps
//! terminate.

use std::sync::OnceLock;

use crate::chart::Vec2;
use crate::error::{Error, Result};
use crate::grid::{FieldKind, Grid, Provenance, ScalarField};
use crate::metric::FinslerMetric;
use crate::sets::{ClosedSetSpec, Direction, Seed};

#[derive(Clone, Debug)]
pub struct EikonalOptions {
    pub max_sweeps: usize,
    /// Changes smaller than this do not re-activate neighbours.
    pub tol: f64,
    pub golden_iters: usize,
}

impl Default for EikonalOptions {
    fn default() -> Self {
        EikonalOptions { max_sweeps: 400, tol: 1e-12, golden_iters: 16 }
    }
}

/// Converged values plus, per node, the unit-speed travel direction of the
/// minimizing discrete path (toward the set for target problems, away from
/// it for source problems). Fixed nodes carry a zero direction.
#[derive(Clone, Debug)]
pub struct EikonalSolution {
    pub grid: Grid,
    pub direction: Direction,
    pub values: Vec<f64>,
    pub feet: Vec<Vec2>,
    pub fixed: Vec<bool>,
    pub sweeps: usize,
}

impl EikonalSolution {
    pub fn field(&self, kind: FieldKind, provenance: Provenance) -> ScalarField {
        ScalarField::new(self.grid.clone(), self.values.clone(), kind, provenance)
    }
}

struct Stencil {
    offsets: Vec<(i32, i32)>,
    /// Euclidean distance (lattice units) from the origin to segment k -> k+1.
    seg_dist: Vec<f64>,
}

fn stencil() -> &'static Stencil {
    static S: OnceLock<Stencil> = OnceLock::new();
    S.get_or_init(|| {
        let gcd = |mut a: i32, mut b: i32| {
            a = a.abs();
            b = b.abs();
            while b != 0 {
                (a, b) = (b, a % b);
            }
            a
        };
        let mut offsets: Vec<(i32, i32)> = Vec::new();
        for di in -3..=3 {
            for dj in -3..=3 {
                if (di, dj) != (0, 0) && gcd(di, dj) == 1 {
                    offsets.push((di, dj));
                }
            }
        }
        offsets.sort_by(|a, b| (a.1 as f64).atan2(a.0 as f64).total_cmp(&(b.1 as f64).atan2(b.0 as f64)));
        let n = offsets.len();
        let seg_dist = (0..n)
            .map(|k| {
                let a = Vec2::new(offsets[k].0 as f64, offsets[k].1 as f64);
                let b = Vec2::new(offsets[(k + 1) % n].0 as f64, offsets[(k + 1) % n].1 as f64);
                let d = b - a;
                let t = (-a.dot(&d) / d.norm_squared()).clamp(0.0, 1.0);
                (a + d * t).norm()
            })
            .collect();
        Stencil { offsets, seg_dist }
    })
}

struct Ctx<'a> {
    grid: &'a Grid,
    cost: FinslerMetric,
    lb_speed: f64,
    /// Neighbour index per (node, offset), `usize::MAX` if outside.
    nbr: Vec<usize>,
    /// Vertex costs per (node, offset).
    vcost: Vec<f64>,
    golden_iters: usize,
}

impl Ctx<'_> {
    #[inline]
    fn seg_cost(&self, node: usize, w: &Vec2) -> f64 {
        let x = self.grid.node_at(node);
        self.cost.f(&(x + w * 0.5), w)
    }

    /// Best Hopf-Lax value at `node` strictly below `cap`, with the minimizing
    /// displacement.
    fn update(&self, u: &[f64], node: usize, cap: f64) -> Option<(f64, Vec2)> {
        let st = stencil();
        let n = st.offsets.len();
        let h = self.grid.h;
        let base = node * n;
        let mut best = cap;
        let mut arg = None;
        for k in 0..n {
            let z = self.nbr[base + k];
            if z == usize::MAX || !u[z].is_finite() {
                continue;
            }
            let c = u[z] + self.vcost[base + k];
            if c < best {
                best = c;
                let (di, dj) = st.offsets[k];
                arg = Some(Vec2::new(di as f64, dj as f64) * h);
            }
        }
        for k in 0..n {
            let k2 = (k + 1) % n;
            let (z1, z2) = (self.nbr[base + k], self.nbr[base + k2]);
            if z1 == usize::MAX || z2 == usize::MAX {
                continue;
            }
            let (u1, u2) = (u[z1], u[z2]);
            if !(u1.is_finite() && u2.is_finite()) {
                continue;
            }
            if u1.min(u2) + self.lb_speed * h * st.seg_dist[k] >= best {
                continue;
            }
            let (a, b) = (st.offsets[k], st.offsets[k2]);
            let wa = Vec2::new(a.0 as f64, a.1 as f64) * h;
            let wb = Vec2::new(b.0 as f64, b.1 as f64) * h;
            let g = |l: f64| {
                let w = wa * l + wb * (1.0 - l);
                (self.seg_cost(node, &w) + l * u1 + (1.0 - l) * u2, w)
            };
            let r = 0.5 * (5f64.sqrt() - 1.0);
            let (mut lo, mut hi) = (0.0, 1.0);
            let mut m1 = hi - r * (hi - lo);
            let mut m2 = lo + r * (hi - lo);
            let mut f1 = g(m1).0;
            let mut f2 = g(m2).0;
            for _ in 0..self.golden_iters {
                if f1 < f2 {
                    hi = m2;
                    m2 = m1;
                    f2 = f1;
                    m1 = hi - r * (hi - lo);
                    f1 = g(m1).0;
                } else {
                    lo = m1;
                    m1 = m2;
                    f1 = f2;
                    m2 = lo + r * (hi - lo);
                    f2 = g(m2).0;
                }
            }
            let (v, w) = g(0.5 * (lo + hi));
            if v < best {
                best = v;
                arg = Some(w);
            }
        }
        arg.map(|w| (best, w))
    }
}

/// Solves from explicit seeds. Later seeds for the same node keep the
/// smaller value; a node is fixed if any of its seeds is.
pub fn solve(
    metric: &FinslerMetric,
    grid: &Grid,
    seeds: &[Seed],
    direction: Direction,
    opts: &EikonalOptions,
) -> Result<EikonalSolution> {
    if seeds.is_empty() {
        return Err(Error::Input("eikonal solve needs a non-empty seed set".into()));
    }
    let chart = metric.chart();
    for p in [grid.node(0, 0), grid.node(grid.nx - 1, grid.ny - 1)] {
        chart.check_point(&p).map_err(|e| e.context("grid exceeds metric chart"))?;
    }
    let st = stencil();
    let n_off = st.offsets.len();
    let cost = match direction {
        Direction::ToTarget => metric.clone(),
        Direction::FromSource => metric.reverse(),
    };
    let len = grid.len();
    let mut nbr = vec![usize::MAX; len * n_off];
    let mut vcost = vec![f64::INFINITY; len * n_off];
    for node in 0..len {
        let (i, j) = grid.ij(node);
        let x = grid.node(i, j);
        for (k, &(di, dj)) in st.offsets.iter().enumerate() {
            if let Some(z) = grid.offset(i, j, di, dj) {
                nbr[node * n_off + k] = z;
                let w = Vec2::new(di as f64, dj as f64) * grid.h;
                vcost[node * n_off + k] = cost.f(&(x + w * 0.5), &w);
            }
        }
    }
    let ctx = Ctx {
        grid,
        lb_speed: cost.min_unit_speed(),
        cost,
        nbr,
        vcost,
        golden_iters: opts.golden_iters,
    };

    let mut u = vec![f64::INFINITY; len];
    let mut fixed = vec![false; len];
    for s in seeds {
        if s.node >= len || !s.value.is_finite() {
            return Err(Error::Input(format!("bad seed {s:?}")));
        }
        u[s.node] = u[s.node].min(s.value);
        fixed[s.node] |= s.fixed;
    }
    let mut dirty = vec![true; len];
    let mut sweeps = 0;
    let orders = [(false, false), (true, false), (true, true), (false, true)];
    loop {
        let mut any = false;
        let (rev_i, rev_j) = orders[sweeps % 4];
        for jj in 0..grid.ny {
            let j = if rev_j { grid.ny - 1 - jj } else { jj };
            for ii in 0..grid.nx {
                let i = if rev_i { grid.nx - 1 - ii } else { ii };
                let node = grid.idx(i, j);
                if !dirty[node] {
                    continue;
                }
                dirty[node] = false;
                if fixed[node] {
                    continue;
                }
                if let Some((v, _)) = ctx.update(&u, node, u[node]) {
                    let old = u[node];
                    u[node] = v;
                    if !(old - v <= opts.tol * (1.0 + v.abs())) {
                        any = true;
                        for k in 0..n_off {
                            let z = ctx.nbr[node * n_off + k];
                            if z != usize::MAX {
                                dirty[z] = true;
                            }
                        }
                    }
                }
            }
        }
        sweeps += 1;
        if !any && !dirty.iter().any(|&d| d) {
            break;
        }
        if sweeps >= opts.max_sweeps {
            return Err(Error::Solver(format!("eikonal sweeps did not converge in {sweeps} sweeps")));
        }
    }

    let mut feet = vec![Vec2::zeros(); len];
    for node in 0..len {
        if fixed[node] || !u[node].is_finite() {
            continue;
        }
        let cap = u[node] + 1e-9 * (1.0 + u[node].abs());
        if let Some((_, w)) = ctx.update(&u, node, cap) {
            let travel = match direction {
                Direction::ToTarget => w,
                Direction::FromSource => -w,
            };
            let x = grid.node_at(node);
            let s = metric.f(&x, &travel);
            if s > 0.0 {
                feet[node] = travel / s;
            }
        }
    }
    Ok(EikonalSolution { grid: grid.clone(), direction, values: u, feet, fixed, sweeps })
}

/// Solution for the distance to (or from) a closed set.
pub fn eikonal_solve(
    metric: &FinslerMetric,
    set: &ClosedSetSpec,
    grid: &Grid,
    direction: Direction,
    opts: &EikonalOptions,
) -> Result<EikonalSolution> {
    let seeds = set.seeds(metric, grid, direction);
    if seeds.is_empty() {
        return Err(Error::Input("set does not meet the grid".into()));
    }
    solve(metric, grid, &seeds, direction, opts)
}

/// `d(·, N)` (target) or `d(N, ·)` (source) sampled on `grid`.
pub fn eikonal_field(
    metric: &FinslerMetric,
    set: &ClosedSetSpec,
    grid: &Grid,
    direction: Direction,
) -> Result<ScalarField> {
    let sol = eikonal_solve(metric, set, grid, direction, &EikonalOptions::default())?;
    let kind = match (direction, set) {
        (Direction::FromSource, ClosedSetSpec::Points(p)) if p.len() == 1 => FieldKind::DistanceFromPoint,
        _ => FieldKind::DistanceToSet,
    };
    let source = match direction {
        Direction::ToTarget => "eikonal:to-target",
        Direction::FromSource => "eikonal:from-source",
    };
    Ok(sol.field(
        kind,
        Provenance { metric_id: metric.id(), source: source.into(), params: serde_json::json!({ "h": grid.h }) },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chart::{Chart, Point};

    #[test]
    fn stencil_shape() {
        let s = stencil();
        assert_eq!(s.offsets.len(), 32);
        assert!(s.seg_dist.iter().all(|&d| d > 0.4 && d < 3.0));
    }

    #[test]
    fn euclidean_point_source() {
        let m = FinslerMetric::euclidean(Chart::rect(5.0));
        let g = Grid::new([-1.0, -1.0], 0.02, 101, 101, [false, false]).unwrap();
        let f = eikonal_field(&m, &ClosedSetSpec::point(Point::zeros()), &g, Direction::FromSource).unwrap();
        let err = (0..g.len()).map(|k| (f.values[k] - g.node_at(k).norm()).abs()).fold(0.0, f64::max);
        assert!(err < 3.0 * g.h, "err {err}");
        assert!(err < 0.1 * g.h, "radius-3 stencil should be far better than 3h: {err}");
    }

    #[test]
    fn zermelo_to_target() {
        let m = FinslerMetric::zermelo([0.5, 0.0], Chart::rect(5.0));
        let g = Grid::new([-2.0, -2.0], 0.05, 81, 81, [false, false]).unwrap();
        let f = eikonal_field(&m, &ClosedSetSpec::point(Point::zeros()), &g, Direction::ToTarget).unwrap();
        let v = f.interpolate(&Point::new(1.0, 0.0)).unwrap();
        assert!((v - 2.0).abs() < 3.0 * g.h, "{v}");
        let v = f.interpolate(&Point::new(-1.0, 0.0)).unwrap();
        assert!((v - 2.0 / 3.0).abs() < 3.0 * g.h, "{v}");
    }

    #[test]
    fn half_plane_target() {
        let m = FinslerMetric::euclidean(Chart::rect(5.0));
        let g = Grid::new([-2.0, -2.0], 0.05, 81, 81, [false, false]).unwrap();
        let xf = ScalarField::from_fn(g.clone(), FieldKind::Auxiliary, "x", |p| p[0]);
        let set = ClosedSetSpec::Superlevel { field: std::sync::Arc::new(xf), threshold: 1.0 };
        let sol = eikonal_solve(&m, &set, &g, Direction::ToTarget, &EikonalOptions::default()).unwrap();
        for k in 0..g.len() {
            let p = g.node_at(k);
            assert!((sol.values[k] - (1.0 - p[0]).max(0.0)).abs() < 2.0 * g.h);
            if p[0] < 0.5 {
                assert!((sol.feet[k] - Vec2::new(1.0, 0.0)).norm() < 1e-6);
            }
        }
    }

    #[test]
    fn cylinder_wraps_around() {
        let tau = std::f64::consts::TAU;
        let chart = Chart::new([-tau / 2.0, tau / 2.0], [-5.0, 5.0], [true, false], "cyl").unwrap();
        let m = FinslerMetric::flat_cylinder(chart.clone()).unwrap();
        let g = Grid::from_spec(&crate::grid::GridSpec { x: [-tau / 2.0, tau / 2.0], y: [-2.0, 2.0], h: 0.05 }, &chart)
            .unwrap();
        let f = eikonal_field(&m, &ClosedSetSpec::point(Point::new(3.0, 0.0)), &g, Direction::FromSource).unwrap();
        let v = f.interpolate(&Point::new(-3.0, 0.0)).unwrap();
        assert!((v - (tau - 6.0)).abs() < 0.02, "{v}");
    }

    #[test]
    fn feet_point_toward_source_characteristics() {
        let m = FinslerMetric::euclidean(Chart::rect(5.0));
        let g = Grid::new([-1.0, -1.0], 0.05, 41, 41, [false, false]).unwrap();
        let sol = eikonal_solve(
            &m,
            &ClosedSetSpec::point(Point::zeros()),
            &g,
            Direction::ToTarget,
            &EikonalOptions::default(),
        )
        .unwrap();
        let k = g.idx(40, 30);
        let x = g.node_at(k);
        let expect = -x / x.norm();
        assert!((sol.feet[k] - expect).norm() < 0.05);
    }
}
