//! Named checks grouped into suites. Every check reports its value, the
//! threshold it is held to and the verdict.

use std::f64::consts::TAU;
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::busemann::{
    affine_growth_residual, ball_union_check, busemann_value, busemann_values_common, construct_coray,
    upper_level_set, Multiplicity,
};
use crate::catalog::{CoPointExpectation, Tolerances};
use crate::chart::{angle_between, Point, Vec2};
use crate::contour::level_curve_arcs;
use crate::cutlocus::{differentiability_map, nsegment_check, one_sided_hausdorff, IsolatedCheck};
use crate::distance::{shoot_distance, ShootOptions};
use crate::eikonal::eikonal_field;
use crate::error::{Error, Result};
use crate::geodesic::{integrate, Geodesic};
use crate::grid::{Grid, GridSpec, ScalarField};
use crate::session::Session;
use crate::sets::{ClosedSetSpec, Direction};
use crate::structure::{build_graph, intrinsic_metric, local_tree_check, sublevel_compactness_probe};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Suite {
    All,
    Thm14,
    Thm17,
    Thm111,
    Thm112,
    Probes,
}

impl Suite {
    pub const NAMES: [&'static str; 6] = ["all", "thm14", "thm17", "thm111", "thm112", "probes"];

    fn includes(self, other: Suite) -> bool {
        self == Suite::All || self == other
    }
}

impl FromStr for Suite {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "all" => Suite::All,
            "thm14" => Suite::Thm14,
            "thm17" => Suite::Thm17,
            "thm111" => Suite::Thm111,
            "thm112" => Suite::Thm112,
            "probes" => Suite::Probes,
            _ => return Err(Error::Config(format!("unknown suite '{s}'; known: {}", Suite::NAMES.join(", ")))),
        })
    }
}

impl fmt::Display for Suite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let i = [Suite::All, Suite::Thm14, Suite::Thm17, Suite::Thm111, Suite::Thm112, Suite::Probes]
            .iter()
            .position(|s| s == self)
            .unwrap();
        f.write_str(Suite::NAMES[i])
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Relation {
    /// `value ≤ threshold`.
    Le,
    /// `value < threshold`.
    Lt,
    /// `value ≥ threshold`.
    Ge,
    /// Reported only; always passes.
    Info,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub relation: Relation,
    pub threshold: f64,
    pub pass: bool,
    pub detail: String,
}

impl Check {
    pub fn new(name: impl Into<String>, value: f64, relation: Relation, threshold: f64, detail: impl Into<String>) -> Self {
        let pass = match relation {
            Relation::Le => value <= threshold,
            Relation::Lt => value < threshold,
            Relation::Ge => value >= threshold,
            Relation::Info => true,
        };
        Check { name: name.into(), value, relation, threshold, pass, detail: detail.into() }
    }

    pub fn le(name: impl Into<String>, value: f64, threshold: f64, detail: impl Into<String>) -> Self {
        Check::new(name, value, Relation::Le, threshold, detail)
    }

    pub fn lt(name: impl Into<String>, value: f64, threshold: f64, detail: impl Into<String>) -> Self {
        Check::new(name, value, Relation::Lt, threshold, detail)
    }

    pub fn ge(name: impl Into<String>, value: f64, threshold: f64, detail: impl Into<String>) -> Self {
        Check::new(name, value, Relation::Ge, threshold, detail)
    }

    pub fn info(name: impl Into<String>, value: f64, detail: impl Into<String>) -> Self {
        Check::new(name, value, Relation::Info, f64::NAN, detail)
    }

    /// A check that could not be evaluated.
    pub fn failed(name: impl Into<String>, err: &Error) -> Self {
        Check { name: name.into(), value: f64::NAN, relation: Relation::Info, threshold: f64::NAN, pass: false, detail: err.to_string() }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct VerifyReport {
    pub experiment: String,
    pub suite: Suite,
    pub h: f64,
    /// Effective tolerances.
    pub tolerances: Tolerances,
    pub checks: Vec<Check>,
}

impl VerifyReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    pub fn failures(&self) -> impl Iterator<Item = &Check> {
        self.checks.iter().filter(|c| !c.pass)
    }

    /// Fixed-width pass/fail table.
    pub fn table(&self) -> String {
        let width = self.checks.iter().map(|c| c.name.len()).max().unwrap_or(4).max(5);
        let mut s = format!("{:<width$}  {:>12}  {:>3}  {:>12}  {}\n", "check", "value", "", "threshold", "result");
        for c in &self.checks {
            let rel = match c.relation {
                Relation::Le => "<=",
                Relation::Lt => "<",
                Relation::Ge => ">=",
                Relation::Info => "",
            };
            let verdict = match (c.relation, c.pass) {
                (_, false) => "FAIL",
                (Relation::Info, true) => "info",
                _ => "pass",
            };
            let thr = if c.threshold.is_nan() { String::new() } else { format!("{:.4e}", c.threshold) };
            s.push_str(&format!("{:<width$}  {:>12.4e}  {:>3}  {:>12}  {verdict}", c.name, c.value, rel, thr));
            if !c.detail.is_empty() {
                s.push_str("  ");
                s.push_str(&c.detail);
            }
            s.push('\n');
        }
        s
    }
}

/// Runs `suite` on the session's experiment. Errors inside a check become
/// failed rows; errors building shared artifacts abort the run.
pub fn verify(session: &mut Session, suite: Suite) -> Result<VerifyReport> {
    let mut checks = Vec::new();
    session.busemann()?;
    let mut run = |name: &str, r: Result<Vec<Check>>| match r {
        Ok(c) => checks.extend(c),
        Err(e) => checks.push(Check::failed(name, &e)),
    };
    if suite.includes(Suite::Probes) {
        run("probes.distance", distance_checks(session));
        run("probes.duality", duality_check(session, 100));
        run("probes.busemann", busemann_field_checks(session));
        run("probes.ray-identity", ray_identity_checks(session));
        run("probes.lipschitz", lipschitz_check(session, 1000, 400));
        run("probes.subray-shift", subray_shift_check(session));
        run("probes.ball-union", ball_union(session));
        run("probes.compactness", compactness_checks(session));
    }
    if suite.includes(Suite::Thm14) {
        run("thm14", thm14_checks(session, 50, 50));
    }
    if suite.includes(Suite::Thm17) {
        run("thm17.copoints", copoint_checks(session));
        run("thm17.nd-mask", nd_mask_check(session, 10));
        run("thm17.gradient", gradient_check(session, 100));
        run("thm17.isolated", isolated_check(session));
    }
    if suite.includes(Suite::Thm111) {
        run("thm111", tree_checks(session));
    }
    if suite.includes(Suite::Thm112) {
        run("thm112", contour_checks(session, 5));
    }
    let lab = &session.lab;
    Ok(VerifyReport {
        experiment: lab.experiment.id.clone(),
        suite,
        h: lab.grid.h,
        tolerances: lab.experiment.tolerances.clone(),
        checks,
    })
}

fn rng(session: &Session, salt: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(session.lab.experiment.tolerances.seed ^ salt.wrapping_mul(0x9e37_79b9_7f4a_7c15))
}

/// Uniform points at least `margin` inside the grid rectangle.
pub fn sample_points(grid: &Grid, margin: f64, n: usize, rng: &mut impl Rng) -> Vec<Point> {
    let m = grid.max_corner();
    let lo = [grid.origin[0] + margin, grid.origin[1] + margin];
    let hi = [m[0] - margin, m[1] - margin];
    (0..n).map(|_| Point::new(rng.gen_range(lo[0]..hi[0]), rng.gen_range(lo[1]..hi[1]))).collect()
}

fn fmt_pt(p: &[f64; 2]) -> String {
    format!("({}, {})", p[0], p[1])
}

/// Closed-form distances by shooting (relative error `1e-6`) and by the
/// eikonal solver on a local grid of spacing `0.02` (error `3h`).
pub fn distance_checks(session: &Session) -> Result<Vec<Check>> {
    let lab = &session.lab;
    let chart = lab.metric.chart();
    let mut out = Vec::new();
    for o in &lab.experiment.expected.distances {
        let (p, q) = (Point::new(o.p[0], o.p[1]), Point::new(o.q[0], o.q[1]));
        let name = format!("probes.distance {} -> {}", fmt_pt(&o.p), fmt_pt(&o.q));
        let d = shoot_distance(&lab.metric, &p, &q, &ShootOptions::default())?;
        out.push(Check::le(format!("{name} shooting"), (d.value - o.value).abs() / o.value, 1e-6, format!("value {:.9}, oracle {:.9}", d.value, o.value)));
        let h = 0.02;
        let span = |a: usize| {
            if chart.is_periodic(a) {
                if a == 0 { chart.x } else { chart.y }
            } else {
                let lo = p[a].min(q[a]) - 1.0;
                let hi = p[a].max(q[a]) + 1.0;
                let b = if a == 0 { chart.x } else { chart.y };
                [lo.max(b[0]), hi.min(b[1])]
            }
        };
        let grid = Grid::from_spec(&GridSpec { x: span(0), y: span(1), h }, chart)?;
        let u = eikonal_field(&lab.metric, &ClosedSetSpec::point(p), &grid, Direction::FromSource)?;
        let v = u.interpolate(&q).ok_or_else(|| Error::Domain("probe outside local grid".into()))?;
        out.push(Check::le(format!("{name} eikonal"), (v - o.value).abs(), 3.0 * grid.h, format!("value {v:.6}, h {}", grid.h)));
    }
    Ok(out)
}

/// `d_F(p, q) = d_F̄(q, p)` by shooting on random pairs.
pub fn duality_check(session: &Session, pairs: usize) -> Result<Vec<Check>> {
    let lab = &session.lab;
    let rev = lab.metric.reverse();
    let mut r = rng(session, 13);
    let pts = sample_points(&lab.grid, 0.0, 2 * pairs, &mut r);
    let opts = ShootOptions::default();
    let mut worst: f64 = 0.0;
    for pq in pts.chunks(2) {
        let a = shoot_distance(&lab.metric, &pq[0], &pq[1], &opts)?.value;
        let b = shoot_distance(&rev, &pq[1], &pq[0], &opts)?.value;
        worst = worst.max((a - b).abs());
    }
    Ok(vec![Check::le("probes.duality", worst, 1e-6, format!("{pairs} pairs, max |d_F(p,q) - d_Frev(q,p)|"))])
}

/// Oracle comparison, monotone truncations and convergence of the field.
pub fn busemann_field_checks(session: &mut Session) -> Result<Vec<Check>> {
    let h = session.lab.grid.h;
    let oracle = session.lab.experiment.expected.busemann.clone();
    let tol = session.lab.busemann.tol;
    let bus = session.busemann()?;
    let g = bus.grid();
    let mut out = Vec::new();
    if let Some(o) = oracle {
        let err = (0..g.len()).map(|k| (bus.field.values[k] - o.value(&g.node_at(k))).abs()).fold(0.0, f64::max);
        out.push(Check::le("probes.busemann.oracle", err, 5.0 * h, format!("max |b - oracle| over {} nodes; {}", g.len(), o.provenance)));
    }
    out.push(Check::ge(
        "probes.busemann.monotone",
        bus.min_increment(),
        -1e-8,
        format!("smallest truncation increment over {} schedule points", bus.schedule.len()),
    ));
    out.push(Check::lt("probes.busemann.converged", bus.max_last_increment(), tol, format!("final t = {}", bus.schedule.last().unwrap_or(&0.0))));
    Ok(out)
}

/// `b(γ(t)) = t` for `t ∈ {1, 5, 10}`.
pub fn ray_identity_checks(session: &Session) -> Result<Vec<Check>> {
    let lab = &session.lab;
    [1.0, 5.0, 10.0]
        .iter()
        .map(|&t| {
            let (v, err) = busemann_value(&lab.metric, &lab.ray, &lab.ray.point(t), &lab.busemann)?;
            Ok(Check::le(format!("probes.ray-identity t={t}"), (v - t).abs(), 1e-3, format!("b = {v:.7}, increment {err:.1e}")))
        })
        .collect()
}

/// `-d(x, y) ≤ b(x) - b(y) ≤ d(y, x) + 4h` on random pairs drawn from a
/// pool of points whose values share one truncation parameter.
pub fn lipschitz_check(session: &Session, pairs: usize, pool: usize) -> Result<Vec<Check>> {
    let lab = &session.lab;
    let h = lab.grid.h;
    let mut r = rng(session, 4);
    let pts = sample_points(&lab.grid, 0.0, pool, &mut r);
    let (b, t) = busemann_values_common(&lab.metric, &lab.ray, &pts, &lab.busemann)?;
    let opts = ShootOptions::default();
    let (mut lower, mut upper) = (f64::NEG_INFINITY, f64::NEG_INFINITY);
    let (mut lv, mut uv) = (0, 0);
    for _ in 0..pairs {
        let i = r.gen_range(0..pool);
        let j = (i + r.gen_range(1..pool)) % pool;
        let dxy = shoot_distance(&lab.metric, &pts[i], &pts[j], &opts)?.value;
        let dyx = shoot_distance(&lab.metric, &pts[j], &pts[i], &opts)?.value;
        let diff = b[i] - b[j];
        let lo = -dxy - diff;
        let up = diff - dyx;
        lower = lower.max(lo);
        upper = upper.max(up);
        lv += (lo > 1e-8) as usize;
        uv += (up > 4.0 * h) as usize;
    }
    Ok(vec![
        Check::le("probes.lipschitz.lower", lower, 1e-8, format!("max -d(x,y) - (b(x)-b(y)); {lv} violations in {pairs} pairs; common t = {t}")),
        Check::le("probes.lipschitz.upper", upper, 4.0 * h, format!("max (b(x)-b(y)) - d(y,x); {uv} violations in {pairs} pairs")),
    ])
}

/// `b_{γ_{t0}} = b_γ - t0` for the subray from `t0 = 2`.
pub fn subray_shift_check(session: &Session) -> Result<Vec<Check>> {
    let lab = &session.lab;
    let t0 = 2.0;
    let sub = lab.ray.subray(&lab.metric, t0, 1e-10)?;
    let mut r = rng(session, 5);
    let mut worst: f64 = 0.0;
    for x in sample_points(&lab.grid, 0.0, 5, &mut r) {
        let (a, _) = busemann_value(&lab.metric, &lab.ray, &x, &lab.busemann)?;
        let (b, _) = busemann_value(&lab.metric, &sub, &x, &lab.busemann)?;
        worst = worst.max((b - (a - t0)).abs());
    }
    Ok(vec![Check::le("probes.subray-shift", worst, 2.0 * lab.busemann.tol, "5 points, t0 = 2")])
}

/// `{b > a}` against the union of backward balls at the median level.
pub fn ball_union(session: &mut Session) -> Result<Vec<Check>> {
    let h = session.lab.grid.h;
    session.busemann()?;
    let bus = session.busemann()?.clone();
    let mut v = bus.field.values.clone();
    v.sort_by(f64::total_cmp);
    let a = v[v.len() / 2];
    let rep = ball_union_check(&session.lab.metric, &session.lab.ray, &bus, a, 3.0 * h)?;
    Ok(vec![Check::le(
        "probes.ball-union",
        rep.mismatches_outside_band as f64,
        0.0,
        format!("level {a:.4}: {} mismatches, all within {:.3} of the level", rep.mismatches, rep.band),
    )])
}

/// Sublevel compactness probes at three quantiles (reported only).
pub fn compactness_checks(session: &mut Session) -> Result<Vec<Check>> {
    let h = session.lab.grid.h;
    let copoints = session.copoints()?.points();
    let bus = session.busemann()?;
    let mut v = bus.field.values.clone();
    v.sort_by(f64::total_cmp);
    Ok([0.1, 0.25, 0.5]
        .iter()
        .map(|q| {
            let c = v[((v.len() - 1) as f64 * q) as usize];
            let p = sublevel_compactness_probe(&bus.field, c, 2.0 * h, &copoints);
            Check::info(
                format!("probes.compactness q={q}"),
                p.sublevel_nodes as f64,
                format!("level {c:.4}: {:?}; co-points inside {}: {:?}", p.verdict, p.hypothesis_points, p.hypothesis),
            )
        })
        .collect())
}

/// First parameter in `(0, s_max]` where `b` along `g` reaches `level`,
/// `None` if the curve leaves the grid first.
fn level_crossing(g: &Geodesic, bus: &ScalarField, level: f64) -> Option<f64> {
    let h = bus.grid.h;
    let mut prev = 0.0;
    for (s, p) in g.dense(0.25 * h) {
        let b = bus.interpolate(&p)?;
        if b >= level {
            if s == 0.0 {
                return Some(0.0);
            }
            let (mut lo, mut hi) = (prev, s);
            for _ in 0..40 {
                let mid = 0.5 * (lo + hi);
                match bus.interpolate(&g.point(mid)) {
                    Some(v) if v >= level => hi = mid,
                    Some(_) => lo = mid,
                    None => return None,
                }
            }
            return Some(hi);
        }
        prev = s;
    }
    None
}

struct Tested {
    affine: f64,
    nsegment: f64,
}

/// Co-ray arcs pass both the affine-growth and the N-segment test; planted
/// geodesics that leave the co-ray direction fail both. Arcs are cut where
/// they reach one of a few common levels, so one distance field per level
/// serves all of them. The same co-ray samples test `d(x, N^a) = a - b(x)`.
pub fn thm14_checks(session: &mut Session, corays: usize, planted: usize) -> Result<Vec<Check>> {
    let h = session.lab.grid.h;
    let thr = 5.0 * h;
    let mut r = rng(session, 14);
    let bus = session.busemann()?.clone();
    let lab = &session.lab;
    let (bmin, bmax) = (bus.field.min(), bus.field.max());
    let levels: Vec<f64> = (0..4).map(|k| bmax - 0.5 - 1.5 * k as f64).filter(|l| *l > bmin + 1.0).collect();
    let fields: Vec<ScalarField> = levels
        .iter()
        .map(|&l| eikonal_field(&lab.metric, &upper_level_set(&bus, l)?, &lab.grid, Direction::ToTarget))
        .collect::<Result<_>>()?;
    let pick_level = |b: f64| levels.iter().enumerate().filter(|(_, l)| **l >= b + 1.0).min_by(|a, b| a.1.total_cmp(b.1)).map(|(k, _)| k);
    let test = |alpha: &Geodesic, k: usize| Tested {
        affine: affine_growth_residual(alpha, &bus),
        nsegment: nsegment_check(alpha, &fields[k]).max_residual,
    };
    let len = 6.0;
    let (mut good, mut bad): (Vec<Tested>, Vec<Tested>) = (Vec::new(), Vec::new());
    let mut level_identity: f64 = 0.0;
    let mut attempts = 0;
    while (good.len() < corays || bad.len() < planted) && attempts < 40 * (corays + planted) {
        attempts += 1;
        let x = sample_points(&lab.grid, 1.0, 1, &mut r)[0];
        let Some(bx) = bus.value(&x) else { continue };
        let Some(k) = pick_level(bx) else { continue };
        let c = construct_coray(&lab.metric, &lab.ray, &x, &lab.coray)?;
        if c.verdict != Multiplicity::Unique {
            continue;
        }
        let want_coray = good.len() < corays && (bad.len() >= planted || attempts % 2 == 0);
        let v = if want_coray {
            c.directions[0]
        } else {
            let th: f64 = r.gen_range(0.9..1.3) * if r.gen_bool(0.5) { 1.0 } else { -1.0 };
            let (cs, sn) = (th.cos(), th.sin());
            let d = c.directions[0];
            Vec2::new(cs * d[0] - sn * d[1], sn * d[0] + cs * d[1])
        };
        let g = integrate(&lab.metric, &x, &v, (0.0, len), 1e-10)?;
        let Some(a) = level_crossing(&g, &bus.field, levels[k]) else { continue };
        if a < 0.5 {
            continue;
        }
        let alpha = g.restrict(0.0, a);
        let t = test(&alpha, k);
        if want_coray {
            for (_, p) in alpha.dense(0.25) {
                if let (Some(d), Some(b)) = (fields[k].interpolate(&p), bus.value(&p)) {
                    level_identity = level_identity.max((d + b - levels[k]).abs());
                }
            }
            good.push(t);
        } else {
            bad.push(t);
        }
    }
    let max = |v: &[Tested], f: fn(&Tested) -> f64| v.iter().map(f).fold(0.0, f64::max);
    let min = |v: &[Tested], f: fn(&Tested) -> f64| v.iter().map(f).fold(f64::INFINITY, f64::min);
    let disagreements =
        good.iter().chain(&bad).filter(|t| (t.affine < thr) != (t.nsegment < thr)).count();
    let lv = format!("levels {:?}", levels.iter().map(|l| (l * 1e4).round() / 1e4).collect::<Vec<_>>());
    Ok(vec![
        Check::ge("thm14.corays tested", good.len() as f64, corays as f64, lv.clone()),
        Check::lt("thm14.corays affine-growth", max(&good, |t| t.affine), thr, "max residual over co-ray arcs"),
        Check::lt("thm14.corays N-segment", max(&good, |t| t.nsegment), thr, "max residual over co-ray arcs"),
        Check::ge("thm14.planted tested", bad.len() as f64, planted as f64, "geodesics rotated 0.9..1.3 rad off the co-ray"),
        Check::ge("thm14.planted affine-growth", min(&bad, |t| t.affine), thr, "min residual; must fail the test"),
        Check::ge("thm14.planted N-segment", min(&bad, |t| t.nsegment), thr, "min residual; must fail the test"),
        Check::le("thm14.disagreements", disagreements as f64, 0.0, "arcs where exactly one test passes"),
        Check::lt("thm14.level-distance", level_identity, thr, "max |d(x,N^a) + b(x) - a| over co-ray samples"),
    ])
}

/// Expected co-point shape, nesting across levels and maximality.
pub fn copoint_checks(session: &mut Session) -> Result<Vec<Check>> {
    let h = session.lab.grid.h;
    let grid = session.lab.grid.clone();
    let expected = session.lab.experiment.expected.copoints.clone();
    let cp = session.copoints()?;
    let pts = cp.points();
    let mut out = Vec::new();
    match expected {
        CoPointExpectation::Empty { provenance } => {
            out.push(Check::le("thm17.copoints empty", pts.len() as f64, 0.0, provenance));
        }
        CoPointExpectation::NearNegativeAxis { band, x_max, provenance } => {
            out.push(Check::ge("thm17.copoints non-empty", pts.len() as f64, 1.0, provenance));
            let off = pts.iter().map(|p| p[1].abs().max(p[0] - x_max)).fold(0.0, f64::max);
            out.push(Check::le("thm17.copoints near negative axis", off, band, "max of |x2| and x1 - x_max"));
            let mirror: Vec<Point> = pts.iter().map(|p| Point::new(p[0], -p[1])).collect();
            let sym = one_sided_hausdorff(&grid, &mirror, &pts);
            out.push(Check::le("thm17.copoints symmetric", sym, 2.0 * h, "Hausdorff distance to the mirror image"));
        }
    }
    let mut nest: f64 = 0.0;
    let mut nonempty = 0;
    for w in cp.levels.windows(2) {
        let a = w[0].locus.points();
        nonempty += (!a.is_empty()) as usize;
        nest = nest.max(one_sided_hausdorff(&grid, &a, &w[1].locus.points()));
    }
    out.push(Check::le(
        "thm17.nesting",
        nest,
        2.0 * h,
        format!("{} level pairs, {nonempty} with a non-empty lower locus", cp.levels.len().saturating_sub(1)),
    ));
    let unconfirmed = cp.records.iter().filter(|r| !r.maximality.passed).count();
    let multiple = cp.records.iter().filter(|r| r.multiplicity == Multiplicity::Multiple).count();
    out.push(Check::le(
        "thm17.maximality",
        unconfirmed as f64,
        0.0,
        format!("{} records, {multiple} with several co-rays", cp.records.len()),
    ));
    Ok(out)
}

/// Co-ray multiplicity mask against the co-point estimate within `2h`.
pub fn nd_mask_check(session: &mut Session, stride: usize) -> Result<Vec<Check>> {
    let h = session.lab.grid.h;
    let nodes: Vec<usize> = session.copoints()?.records.iter().map(|r| r.node).collect();
    let pts = session.copoints()?.points();
    let bus = session.busemann()?.clone();
    let lab = &session.lab;
    let map = differentiability_map(&lab.metric, &lab.ray, &bus, &nodes, stride, &lab.coray)?;
    let cmp = map.compare(&lab.grid, &pts, 2.0 * h);
    let detail = format!(
        "{} samples, {} masked, {} undecided; mask->copoints {:.3e}, copoints->mask {:.3e}",
        map.samples.len(),
        cmp.masked,
        cmp.undecided,
        cmp.mask_to_copoints,
        cmp.copoints_to_mask
    );
    Ok(vec![
        Check::le("thm17.nd-mask", cmp.mask_to_copoints.max(cmp.copoints_to_mask), cmp.band, detail),
        Check::info("thm17.nd-mask undecided", cmp.undecided as f64, "nodes whose co-ray directions did not settle"),
    ])
}

/// At random nodes with one co-ray, the central-difference derivative of
/// `b` over 64 unit directions peaks next to the co-ray direction with a
/// maximum of `1 ± 5h`.
pub fn gradient_check(session: &mut Session, nodes: usize) -> Result<Vec<Check>> {
    let h = session.lab.grid.h;
    let cps = session.copoints()?.points();
    let bus = session.busemann()?.clone();
    let lab = &session.lab;
    let grid = &lab.grid;
    let mut r = rng(session, 10);
    let step = 4.0 * h;
    let bins = 64;
    let bin = TAU / bins as f64;
    let (mut worst_val, mut worst_ang, mut worst_gap): (f64, f64, f64) = (0.0, 0.0, 0.0);
    let mut tested = 0;
    let mut attempts = 0;
    while tested < nodes && attempts < 20 * nodes {
        attempts += 1;
        let k = r.gen_range(0..grid.len());
        let x = grid.node_at(k);
        if grid.boundary_distance(&x) < 3.0 * step || cps.iter().any(|q| grid.delta(&x, q).norm() < 3.0 * step) {
            continue;
        }
        let c = construct_coray(&lab.metric, &lab.ray, &x, &lab.coray)?;
        if c.verdict != Multiplicity::Unique {
            continue;
        }
        let v = c.directions[0];
        let deriv = |u: &Vec2| -> Option<f64> { Some((bus.value(&(x + u * step))? - bus.value(&(x - u * step))?) / (2.0 * step)) };
        let mut best = (f64::NEG_INFINITY, Vec2::zeros());
        for i in 0..bins {
            let e = Vec2::new((i as f64 * bin).cos(), (i as f64 * bin).sin());
            let u = e / lab.metric.f(&x, &e);
            let Some(d) = deriv(&u) else { continue };
            if d > best.0 {
                best = (d, u);
            }
        }
        let Some(dv) = deriv(&v) else { continue };
        tested += 1;
        worst_val = worst_val.max((best.0 - 1.0).abs());
        worst_ang = worst_ang.max(angle_between(&best.1, &v));
        worst_gap = worst_gap.max(best.0 - dv);
    }
    Ok(vec![
        Check::ge("thm17.gradient nodes", tested as f64, nodes as f64, format!("{attempts} nodes drawn")),
        Check::le("thm17.gradient max derivative", worst_val, 5.0 * h, "max |max_k D_k b - 1|"),
        Check::le("thm17.gradient argmax", worst_ang, bin, "max angle between argmax direction and co-ray (one bin)"),
        Check::le("thm17.gradient co-ray attains max", worst_gap, 5.0 * h, "max (max_k D_k b - D_v b)"),
    ])
}

/// Local tree checks at `5h, 10h, 20h`, graph faithfulness, the intrinsic
/// metric on sampled triples and a planted cycle that must be detected.
pub fn tree_checks(session: &mut Session) -> Result<Vec<Check>> {
    let h = session.lab.grid.h;
    let metric = session.lab.metric.clone();
    let grid = session.lab.grid.clone();
    let mut r = rng(session, 111);
    let cp = session.copoints()?;
    let g = &cp.graph;
    let mut out = Vec::new();
    let radii = [5.0 * h, 10.0 * h, 20.0 * h];
    let tree = local_tree_check(&metric, g, &radii);
    for b in &tree.results {
        out.push(Check::le(
            format!("thm111.local-tree r={:.0}h", b.radius / h),
            b.cycles.len() as f64,
            0.0,
            format!("{} balls probed", b.balls_probed),
        ));
    }
    let mids: Vec<Point> = g.edges.iter().map(|e| g.vertices[e.a] + grid.delta(&g.vertices[e.a], &g.vertices[e.b]) * 0.5).collect();
    let cloud = cp.points();
    let faithful = one_sided_hausdorff(&grid, &mids, &cloud).max(one_sided_hausdorff(&grid, &cloud, &g.vertices));
    out.push(Check::le("thm111.graph faithfulness", faithful, h, format!("{} vertices, {} edges", g.vertices.len(), g.edges.len())));
    let (mut zero, mut tri, mut triples): (f64, f64, usize) = (0.0, 0.0, 0);
    if !g.vertices.is_empty() {
        for _ in 0..20 {
            let pick = |r: &mut ChaCha8Rng| g.vertices[r.gen_range(0..g.vertices.len())];
            let (a, b, c) = (pick(&mut r), pick(&mut r), pick(&mut r));
            zero = zero.max(intrinsic_metric(g, &a, &a).min());
            let (ab, bc, ac) = (intrinsic_metric(g, &a, &b), intrinsic_metric(g, &b, &c), intrinsic_metric(g, &a, &c));
            if ab.forward.is_finite() && bc.forward.is_finite() {
                triples += 1;
                tri = tri.max(ac.forward / (ab.forward + bc.forward).max(1e-300) - 1.0);
            }
        }
    }
    out.push(Check::le("thm111.intrinsic zero", zero, 0.0, "max delta(q, q)"));
    out.push(Check::le("thm111.intrinsic triangle", tri, 0.01, format!("{triples} triples in one component; max relative excess")));
    let centre = grid.node(grid.nx / 2, grid.ny / 2);
    // Euclidean radius small enough that a 20h ball about any ring vertex
    // holds the whole ring.
    let rad = 9.0 * h / metric.max_unit_speed();
    let n = (TAU * rad / (0.7 * h)).ceil() as usize;
    let ring: Vec<Point> = (0..n).map(|k| centre + Vec2::new((k as f64 * TAU / n as f64).cos(), (k as f64 * TAU / n as f64).sin()) * rad).collect();
    let planted = local_tree_check(&metric, &build_graph(&metric, &ring, h), &[20.0 * h]);
    let found = planted.results[0].cycles.len();
    out.push(Check::ge("thm111.planted cycle detected", found as f64, 1.0, format!("ring of Euclidean radius {rad:.3}, ball radius 20h")));
    let degrees = g.adjacency().iter().map(|a| a.len()).fold(vec![0usize; 1], |mut hist, d| {
        if hist.len() <= d {
            hist.resize(d + 1, 0);
        }
        hist[d] += 1;
        hist
    });
    out.push(Check::info("thm111.components", g.component_count() as f64, format!("degree histogram {degrees:?}")));
    Ok(out)
}

/// Level curves of `b` at generic levels: component counts, separation
/// `≥ h`, and counts unchanged on the grid refined to `h/2`.
pub fn contour_checks(session: &mut Session, count: usize) -> Result<Vec<Check>> {
    let h = session.lab.grid.h;
    let bus = session.busemann()?.clone();
    let fine = session.refined_busemann()?.clone();
    let (bmin, bmax) = (bus.field.min(), bus.field.max());
    let mut out = Vec::new();
    let g = bus.grid();
    let shift = (0..g.len()).map(|k| fine.value(&g.node_at(k)).map(|v| (v - bus.field.values[k]).abs()).unwrap_or(0.0)).fold(0.0, f64::max);
    out.push(Check::le("thm112.refinement consistency", shift, 5.0 * h, "max |b_h - b_h/2| at coarse nodes"));
    for i in 0..count {
        let base = bmin + (bmax - bmin) * (0.15 + 0.6 * i as f64 / (count.max(2) - 1) as f64) + 0.1234 * h;
        // Nudge away from levels that produce flagged (saddle) cells.
        let mut t = base;
        let mut coarse = level_curve_arcs(&bus.field, t);
        let mut refined = level_curve_arcs(&fine.field, t);
        for k in 1..6 {
            if !coarse.anomalous() && !refined.anomalous() {
                break;
            }
            t = base + 0.37 * h * k as f64;
            coarse = level_curve_arcs(&bus.field, t);
            refined = level_curve_arcs(&fine.field, t);
        }
        let name = format!("thm112.level {t:.4}");
        let closed = coarse.components.iter().filter(|c| c.closed).count();
        out.push(Check::ge(
            format!("{name} components"),
            coarse.count() as f64,
            1.0,
            format!("{} arcs ({closed} closed), {} points", coarse.count(), coarse.components.iter().map(|c| c.points.len()).sum::<usize>()),
        ));
        out.push(Check::ge(format!("{name} separation"), coarse.min_separation, h, coarse.anomalies.join("; ")));
        out.push(Check::le(
            format!("{name} refinement"),
            (coarse.count() as f64 - refined.count() as f64).abs(),
            0.0,
            format!("{} arcs at h, {} at h/2", coarse.count(), refined.count()),
        ));
    }
    Ok(out)
}

/// The isolated co-point identity when the estimate is a single point.
pub fn isolated_check(session: &mut Session) -> Result<Vec<Check>> {
    let pts = session.copoints()?.points();
    let bus = session.busemann()?.clone();
    let lab = &session.lab;
    let Some(p) = pts.first() else {
        return Ok(vec![Check::info("thm17.isolated", 0.0, "not applicable: no co-points")]);
    };
    let d = eikonal_field(&lab.metric, &ClosedSetSpec::point(*p), &lab.grid, Direction::FromSource)?;
    Ok(vec![match crate::cutlocus::isolated_copoint_check(&pts, &bus, &d) {
        IsolatedCheck::NotApplicable { reason } => Check::info("thm17.isolated", 0.0, format!("not applicable: {reason}")),
        IsolatedCheck::Checked { residual, threshold, .. } => Check::le("thm17.isolated", residual, threshold, "max |d(p,q) + b(p) - b(q)|"),
    }])
}
