//! N-segments, cut-point tests, cut loci of closed sets, and the co-point
//! set of a ray assembled level by level from cut loci of Busemann upper
//! level sets.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::busemann::{construct_coray, upper_level_set, BusemannField, CoRayOptions, Multiplicity};
use crate::chart::{angle_between, unit, Point, Vec2};
use crate::contour::level_curve_arcs;
use crate::eikonal::{eikonal_solve, EikonalOptions, EikonalSolution};
use crate::error::Result;
use crate::geodesic::{extend_backward, integrate, Geodesic, Ray};
use crate::grid::{FieldKind, Grid, Provenance, ScalarField};
use crate::metric::FinslerMetric;
use crate::ring::{ring_profile, ring_radius};
use crate::sets::{ClosedSetSpec, Direction};
use crate::structure::{build_graph, CutLocusGraph};

/// Foot-direction jump between 4-neighbours that marks a ridge node.
pub const RIDGE_JUMP: f64 = 0.3;
/// Minimal angle between two feet for them to count as distinct.
pub const FOOT_ANGLE: f64 = 0.05;
const RING_POINTS: usize = 256;
const NMS_RADIUS: i32 = 4;

/// Tie tolerance for two-feet witnesses on a grid of spacing `h`.
pub fn tie_tolerance(h: f64) -> f64 {
    (3.0 * h).max(1e-5)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct NSegmentCertificate {
    /// Length `a` of the tested geodesic.
    pub length: f64,
    /// `(t, |d(α(t), N) - (a - t)|)` at spacing `h/2`, in-grid samples only.
    pub residuals: Vec<(f64, f64)>,
    pub max_residual: f64,
    pub threshold: f64,
    pub pass: bool,
}

/// Tests `d(α(t), N) = a - t` along `alpha` against the to-target field of
/// `N`; passes when the largest residual is below `5h`.
pub fn nsegment_check(alpha: &Geodesic, field: &ScalarField) -> NSegmentCertificate {
    let h = field.grid.h;
    let (s0, s1) = alpha.span();
    let a = s1 - s0;
    let residuals: Vec<(f64, f64)> = alpha
        .dense(0.5 * h)
        .into_iter()
        .filter_map(|(s, p)| field.interpolate(&p).map(|u| (s - s0, (u - (a - (s - s0))).abs())))
        .collect();
    let max_residual = if residuals.is_empty() {
        f64::INFINITY
    } else {
        residuals.iter().map(|r| r.1).fold(0.0, f64::max)
    };
    let threshold = 5.0 * h;
    NSegmentCertificate { length: a, residuals, max_residual, threshold, pass: max_residual < threshold }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    Cut,
    NotCut,
    Undecided,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TwoFeetWitness {
    /// Unit-speed initial directions of the competing segments.
    pub directions: Vec<Vec2>,
    /// Value gap between the two deepest distinct ring basins, or the
    /// profile range for a plateau.
    pub gap: f64,
    /// Every ring direction ties: a continuum of segments.
    pub plateau: bool,
    pub tie: f64,
    pub passed: bool,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ExtensionWitness {
    pub eps: f64,
    /// `ε + d(x, N) - d(x̃, N)` for the backward extension `x̃`.
    pub deficit: f64,
    pub threshold: f64,
    pub passed: bool,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CutVerdict {
    pub point: Point,
    pub two_feet: Option<TwoFeetWitness>,
    pub extension: Option<ExtensionWitness>,
    pub verdict: Verdict,
    /// Ranking used when thinning the cut cloud.
    pub strength: f64,
}

/// Point reached by running the geodesic with initial velocity `v` at `x`
/// backward for `eps`; `None` if it leaves the chart.
fn backward_point(metric: &FinslerMetric, x: &Point, v: &Vec2, eps: f64) -> Option<Point> {
    let g = integrate(metric, x, v, (0.0, 0.0), 1e-9).ok()?;
    let e = extend_backward(metric, &g, eps, 1e-9).ok()?;
    (!e.truncated()).then(|| e.start())
}

/// Cut test at `x` for the set whose to-target field is `field`.
///
/// Two-feet witness: the ring profile has two distinct basins within the
/// tie tolerance, or is flat. Extension witness: the backward extension of
/// the primary segment by `eps` loses more than `5h` of length.
pub fn cut_point_test(metric: &FinslerMetric, x: &Point, set: &ClosedSetSpec, field: &ScalarField, eps: f64) -> CutVerdict {
    let h = field.grid.h;
    let mut out = CutVerdict { point: *x, two_feet: None, extension: None, verdict: Verdict::NotCut, strength: 0.0 };
    if set.contains(&field.grid, x, 0.5 * h) {
        return out;
    }
    let Some(u) = field.interpolate(x).filter(|u| *u > 0.0) else {
        out.verdict = Verdict::Undecided;
        return out;
    };
    let tie = tie_tolerance(h);
    let rho = ring_radius(metric, h, u);
    let prof = ring_profile(metric, field, x, rho, RING_POINTS);
    let basins = prof.basins(0.05 * h);
    let Some(first) = basins.first().copied() else {
        out.verdict = Verdict::Undecided;
        return out;
    };
    let d0 = first.direction(metric, x);
    // Within a few cells of the set the interpolated field has
    // interface artifacts; only the extension witness applies there.
    let far = u >= 4.0 * h * metric.max_unit_speed();
    let plateau = far && prof.complete() && prof.range() <= tie.min(0.25 * rho * metric.min_unit_speed());
    let second = basins
        .iter()
        .skip(1)
        .find(|b| angle_between(&unit(b.theta), &unit(first.theta)) > FOOT_ANGLE)
        .filter(|_| far);
    let mut near_tie = false;
    if plateau {
        out.two_feet = Some(TwoFeetWitness { directions: vec![d0], gap: prof.range(), plateau: true, tie, passed: true });
        out.strength = 3.0;
    } else if let Some(s) = second {
        let gap = s.value - first.value;
        let passed = gap <= tie;
        near_tie = !passed && gap <= 2.0 * tie;
        if passed {
            out.strength = 1.0 + (tie - gap) / tie;
        }
        out.two_feet =
            Some(TwoFeetWitness { directions: vec![d0, s.direction(metric, x)], gap, plateau: false, tie, passed });
    }
    let threshold = 5.0 * h;
    let mut near_deficit = false;
    if let Some(ux) = backward_point(metric, x, &d0, eps).and_then(|p| field.interpolate(&p)) {
        let deficit = eps + u - ux;
        let passed = deficit > threshold;
        near_deficit = !passed && deficit > 0.5 * threshold;
        if passed && out.strength == 0.0 {
            out.strength = deficit / (2.0 * eps);
        }
        out.extension = Some(ExtensionWitness { eps, deficit, threshold, passed });
    }
    let passed = out.two_feet.as_ref().is_some_and(|w| w.passed) || out.extension.as_ref().is_some_and(|w| w.passed);
    out.verdict = if passed {
        Verdict::Cut
    } else if near_tie || near_deficit {
        Verdict::Undecided
    } else {
        Verdict::NotCut
    };
    out
}

/// Thinned cut locus of a closed set on a grid.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CutLocus {
    /// Grid nodes retained after thinning.
    pub nodes: Vec<usize>,
    pub verdicts: Vec<CutVerdict>,
    pub graph: CutLocusGraph,
    /// Ridge nodes that were tested.
    pub candidates: usize,
    /// Ridge nodes with a cut verdict before thinning.
    pub cut_before_thinning: usize,
    pub undecided: Vec<usize>,
    pub eps: f64,
}

impl CutLocus {
    pub fn points(&self) -> Vec<Point> {
        self.verdicts.iter().map(|v| v.point).collect()
    }
}

fn foot_jump(a: &Vec2, b: &Vec2) -> Option<f64> {
    (a.norm() > 0.0 && b.norm() > 0.0).then(|| angle_between(a, b))
}

/// Ridge nodes of a solved to-target field: non-fixed nodes whose foot
/// direction jumps by more than [`RIDGE_JUMP`] against a 4-neighbour.
pub fn ridge_candidates(sol: &EikonalSolution) -> Vec<usize> {
    let g = &sol.grid;
    (0..g.len())
        .filter(|&k| {
            if sol.fixed[k] || !sol.values[k].is_finite() {
                return false;
            }
            let (i, j) = g.ij(k);
            [(1, 0), (-1, 0), (0, 1), (0, -1)].into_iter().any(|(di, dj)| {
                g.offset(i, j, di, dj)
                    .filter(|&n| !sol.fixed[n])
                    .and_then(|n| foot_jump(&sol.feet[k], &sol.feet[n]))
                    .is_some_and(|a| a > RIDGE_JUMP)
            })
        })
        .collect()
}

/// Cut locus from a solved to-target field of `set`: ridge nodes with a cut
/// verdict, thinned by dropping nodes that have a clearly stronger cut node
/// within four cells, either across a foot jump or behind them along their
/// foot direction.
pub fn cut_locus_from(metric: &FinslerMetric, set: &ClosedSetSpec, sol: &EikonalSolution) -> CutLocus {
    let g = &sol.grid;
    let h = g.h;
    let eps = 5.0 * h;
    let field = sol.field(FieldKind::DistanceToSet, Provenance::default());
    let candidates = ridge_candidates(sol);
    // Neighbours are tested too so that thinning sees their strength.
    let mut tested = std::collections::BTreeSet::new();
    for &k in &candidates {
        let (i, j) = g.ij(k);
        for (di, dj) in (-1..=1).flat_map(|di| (-1..=1).map(move |dj| (di, dj))) {
            if let Some(n) = g.offset(i, j, di, dj).filter(|&n| !sol.fixed[n]) {
                tested.insert(n);
            }
        }
    }
    let is_candidate: std::collections::BTreeSet<usize> = candidates.iter().copied().collect();
    let tested: Vec<usize> = tested.into_iter().collect();
    let verdicts: Vec<(usize, CutVerdict)> = tested
        .par_iter()
        .map(|&k| (k, cut_point_test(metric, &g.node_at(k), set, &field, eps)))
        .collect();
    let undecided: Vec<usize> = verdicts
        .iter()
        .filter(|(k, v)| v.verdict == Verdict::Undecided && is_candidate.contains(k))
        .map(|(k, _)| *k)
        .collect();
    let cut: BTreeMap<usize, &CutVerdict> =
        verdicts.iter().filter(|(_, v)| v.verdict == Verdict::Cut).map(|(k, v)| (*k, v)).collect();
    let mut kept = Vec::new();
    for (&k, v) in cut.iter().filter(|(k, _)| is_candidate.contains(k)) {
        let (i, j) = g.ij(k);
        let x = g.node_at(k);
        let fx = sol.feet[k];
        // The window matches the ring radius: ring profiles of nodes that
        // close to a stronger cut point can show spurious shallow ties.
        let dominated = (-NMS_RADIUS..=NMS_RADIUS)
            .flat_map(|di| (-NMS_RADIUS..=NMS_RADIUS).map(move |dj| (di, dj)))
            .any(|(di, dj)| {
                let Some(n) = g.offset(i, j, di, dj).filter(|&n| n != k) else { return false };
                let Some(w) = cut.get(&n) else { return false };
                if w.strength <= v.strength + 0.1 {
                    return false;
                }
                let jump = foot_jump(&fx, &sol.feet[n]).is_some_and(|a| a > RIDGE_JUMP);
                let d = g.delta(&x, &g.node_at(n));
                let behind = fx.norm() > 0.0 && d.dot(&fx.normalize()) < -0.85 * d.norm();
                jump || behind
            });
        if !dominated {
            kept.push((k, (*v).clone()));
        }
    }
    let nodes: Vec<usize> = kept.iter().map(|p| p.0).collect();
    let verdicts: Vec<CutVerdict> = kept.into_iter().map(|p| p.1).collect();
    let cloud: Vec<Point> = verdicts.iter().map(|v| v.point).collect();
    CutLocus {
        graph: build_graph(metric, &cloud, h),
        nodes,
        verdicts,
        candidates: candidates.len(),
        cut_before_thinning: cut.keys().filter(|k| is_candidate.contains(k)).count(),
        undecided,
        eps,
    }
}

/// Cut locus of `set` on `grid`. An empty locus is a valid result.
pub fn cut_locus(metric: &FinslerMetric, set: &ClosedSetSpec, grid: &Grid) -> Result<CutLocus> {
    let sol = eikonal_solve(metric, set, grid, Direction::ToTarget, &EikonalOptions::default())?;
    Ok(cut_locus_from(metric, set, &sol))
}

/// One-sided Hausdorff distance `sup_{a ∈ A} inf_{b ∈ B} |a - b|` in the
/// grid's displacement metric; zero for empty `A`, infinite for empty `B`.
pub fn one_sided_hausdorff(grid: &Grid, a: &[Point], b: &[Point]) -> f64 {
    a.iter()
        .map(|p| b.iter().map(|q| grid.delta(p, q).norm()).fold(f64::INFINITY, f64::min))
        .fold(0.0, f64::max)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MaximalityWitness {
    pub eps: f64,
    /// `b(σ(-ε)) - b(x) + ε` for the primary co-ray, when the extension
    /// stays in the grid.
    pub deficit: Option<f64>,
    pub multiple: bool,
    pub passed: bool,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CoPointRecord {
    pub point: Point,
    pub node: usize,
    /// Unit initial velocities of the co-rays found at `point`.
    pub directions: Vec<Vec2>,
    /// Lowest level whose cut locus contains the point.
    pub level: f64,
    pub multiplicity: Multiplicity,
    pub maximality: MaximalityWitness,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LevelLocus {
    pub level: f64,
    pub locus: CutLocus,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CoPointSet {
    pub levels: Vec<LevelLocus>,
    /// Union of the per-level loci, one record per node.
    pub records: Vec<CoPointRecord>,
    pub graph: CutLocusGraph,
}

impl CoPointSet {
    pub fn points(&self) -> Vec<Point> {
        self.records.iter().map(|r| r.point).collect()
    }

    /// Records whose maximality witness passed.
    pub fn confirmed(&self) -> impl Iterator<Item = &CoPointRecord> {
        self.records.iter().filter(|r| r.maximality.passed)
    }
}

/// Levels `b_min + k·Δ`, `k = 1..=count`, with `b_min` the field minimum.
pub fn level_schedule(bus: &BusemannField, delta: f64, count: usize) -> Vec<f64> {
    let lo = bus.field.min();
    (1..=count).map(|k| lo + k as f64 * delta).filter(|b| *b < bus.field.max()).collect()
}

fn maximality(metric: &FinslerMetric, bus: &BusemannField, x: &Point, dirs: &[Vec2], verdict: Multiplicity) -> MaximalityWitness {
    let h = bus.grid().h;
    let eps = 5.0 * h;
    let multiple = verdict == Multiplicity::Multiple;
    let deficit = dirs.first().and_then(|v| {
        let b0 = bus.value(x)?;
        let p = backward_point(metric, x, v, eps)?;
        Some(bus.value(&p)? - b0 + eps)
    });
    MaximalityWitness { eps, deficit, multiple, passed: multiple || deficit.is_some_and(|d| d > 5.0 * h) }
}

/// Co-point estimate of `ray`: the cut locus of each upper level set
/// `N^b = {b_γ ≥ b}` (which lies in `{b_γ < b}`), and the union over the
/// levels with co-ray directions attached.
pub fn copoint_set(
    metric: &FinslerMetric,
    ray: &Ray,
    bus: &BusemannField,
    levels: &[f64],
    opts: &CoRayOptions,
) -> Result<CoPointSet> {
    let grid = bus.grid();
    let mut per_level = Vec::new();
    let mut first_level: BTreeMap<usize, f64> = BTreeMap::new();
    for &b in levels {
        let set = upper_level_set(bus, b)?;
        let locus = cut_locus(metric, &set, grid)?;
        for &k in &locus.nodes {
            first_level.entry(k).or_insert(b);
        }
        per_level.push(LevelLocus { level: b, locus });
    }
    let entries: Vec<(usize, f64)> = first_level.into_iter().collect();
    let records = entries
        .par_iter()
        .map(|&(k, level)| {
            let x = grid.node_at(k);
            let c = construct_coray(metric, ray, &x, opts)?;
            let maximality = maximality(metric, bus, &x, &c.directions, c.verdict);
            Ok(CoPointRecord { point: x, node: k, directions: c.directions, level, multiplicity: c.verdict, maximality })
        })
        .collect::<Result<Vec<_>>>()?;
    let cloud: Vec<Point> = records.iter().map(|r| r.point).collect();
    Ok(CoPointSet { levels: per_level, graph: build_graph(metric, &cloud, grid.h), records })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DifferentiabilitySample {
    pub node: usize,
    pub point: Point,
    pub multiplicity: Multiplicity,
    pub directions: Vec<Vec2>,
}

/// Co-ray multiplicity sampled on a coarse lattice and around co-point
/// records. Nodes with several co-rays form the non-differentiability mask.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DifferentiabilityMap {
    pub samples: Vec<DifferentiabilitySample>,
    pub stride: usize,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MaskComparison {
    /// Largest distance from a masked node to the co-point estimate.
    pub mask_to_copoints: f64,
    /// Largest distance from a co-point record to the mask.
    pub copoints_to_mask: f64,
    pub band: f64,
    pub masked: usize,
    pub undecided: usize,
    pub agree: bool,
}

impl DifferentiabilityMap {
    pub fn mask(&self) -> Vec<Point> {
        self.samples.iter().filter(|s| s.multiplicity == Multiplicity::Multiple).map(|s| s.point).collect()
    }

    pub fn undecided(&self) -> usize {
        self.samples.iter().filter(|s| s.multiplicity == Multiplicity::Undecided).count()
    }

    /// Two-sided agreement of the mask with `copoints` within `band`.
    pub fn compare(&self, grid: &Grid, copoints: &[Point], band: f64) -> MaskComparison {
        let mask = self.mask();
        let a = one_sided_hausdorff(grid, &mask, copoints);
        let b = one_sided_hausdorff(grid, copoints, &mask);
        MaskComparison {
            mask_to_copoints: a,
            copoints_to_mask: b,
            band,
            masked: mask.len(),
            undecided: self.undecided(),
            agree: a <= band + 1e-9 && b <= band + 1e-9,
        }
    }
}

/// Samples co-ray multiplicity at every `stride`-th node in each direction
/// and at each co-point node together with its 8-neighbours.
pub fn differentiability_map(
    metric: &FinslerMetric,
    ray: &Ray,
    bus: &BusemannField,
    copoint_nodes: &[usize],
    stride: usize,
    opts: &CoRayOptions,
) -> Result<DifferentiabilityMap> {
    let g = bus.grid();
    let stride = stride.max(1);
    let mut nodes = std::collections::BTreeSet::new();
    for j in (0..g.ny).step_by(stride) {
        for i in (0..g.nx).step_by(stride) {
            nodes.insert(g.idx(i, j));
        }
    }
    for &k in copoint_nodes {
        let (i, j) = g.ij(k);
        for di in -1..=1 {
            for dj in -1..=1 {
                if let Some(n) = g.offset(i, j, di, dj) {
                    nodes.insert(n);
                }
            }
        }
    }
    let nodes: Vec<usize> = nodes.into_iter().collect();
    let samples = nodes
        .par_iter()
        .map(|&k| {
            let x = g.node_at(k);
            let c = construct_coray(metric, ray, &x, opts)?;
            Ok(DifferentiabilitySample { node: k, point: x, multiplicity: c.verdict, directions: c.directions })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(DifferentiabilityMap { samples, stride })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "kebab-case")]
pub enum IsolatedCheck {
    NotApplicable {
        reason: String,
    },
    Checked {
        point: Point,
        /// `max_q |d(p, q) + b(p) - b(q)|` over grid nodes.
        residual: f64,
        /// `(a, Hausdorff distance between {b = a} and S⁺(p, a - b(p)))`.
        spheres: Vec<(f64, f64)>,
        threshold: f64,
        pass: bool,
    },
}

/// Checks `d(p, q) + b(p) = b(q)` and that the level curves of `b` are the
/// forward spheres about `p`, when the co-point estimate is the single
/// point `p` at grid resolution. `dist_from_p` is `d(p, ·)` on the field grid.
pub fn isolated_copoint_check(copoints: &[Point], bus: &BusemannField, dist_from_p: &ScalarField) -> IsolatedCheck {
    let g = bus.grid();
    let h = g.h;
    let Some(p) = copoints.first().copied() else {
        return IsolatedCheck::NotApplicable { reason: "no co-points".into() };
    };
    if copoints.iter().any(|q| g.delta(&p, q).norm() > 2.0 * h) {
        return IsolatedCheck::NotApplicable {
            reason: format!("co-point estimate spreads beyond 2h of ({:.3}, {:.3})", p[0], p[1]),
        };
    }
    let Some(bp) = bus.value(&p) else {
        return IsolatedCheck::NotApplicable { reason: "co-point outside the field grid".into() };
    };
    let residual = (0..g.len())
        .filter_map(|k| {
            let q = g.node_at(k);
            let (d, b) = (dist_from_p.values[k], bus.field.values[k]);
            (d.is_finite() && b.is_finite() && dist_from_p.grid.contains(&q)).then(|| (d + bp - b).abs())
        })
        .fold(0.0, f64::max);
    let reach = g
        .boundary_nodes()
        .into_iter()
        .map(|k| dist_from_p.values[k])
        .filter(|v| v.is_finite())
        .fold(f64::INFINITY, f64::min);
    let spheres: Vec<(f64, f64)> = [0.25, 0.5, 0.75]
        .iter()
        .map(|f| {
            let r = f * reach;
            let a = bp + r;
            let level: Vec<Point> = level_curve_arcs(&bus.field, a).components.into_iter().flat_map(|c| c.points).collect();
            let sphere: Vec<Point> =
                level_curve_arcs(dist_from_p, r).components.into_iter().flat_map(|c| c.points).collect();
            let d = one_sided_hausdorff(g, &level, &sphere).max(one_sided_hausdorff(g, &sphere, &level));
            (a, d)
        })
        .collect();
    let threshold = 3.0 * h;
    let pass = residual < threshold && spheres.iter().all(|s| s.1 <= threshold);
    IsolatedCheck::Checked { point: p, residual, spheres, threshold, pass }
}
