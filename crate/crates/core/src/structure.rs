//! Graphs of cut loci and co-point sets, local-tree probes, the intrinsic
//! length metric, and sublevel compactness probes.

use std::cmp::Reverse;
use std::collections::{BTreeMap, BinaryHeap};

use serde::{Deserialize, Serialize};

use crate::chart::Point;
use crate::distance::straight_length;
use crate::grid::ScalarField;
use crate::metric::FinslerMetric;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Edge {
    pub a: usize,
    pub b: usize,
    /// Finsler length traversed from `a` to `b`.
    pub length_ab: f64,
    /// Finsler length traversed from `b` to `a`.
    pub length_ba: f64,
}

impl Edge {
    pub fn min_length(&self) -> f64 {
        self.length_ab.min(self.length_ba)
    }
}

/// Chain of degree-2 vertices between two branch or end vertices.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Polyline {
    pub vertices: Vec<usize>,
    pub points: Vec<Point>,
    pub length_forward: f64,
    pub length_backward: f64,
}

/// Embedded graph on a point cloud of grid nodes.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct CutLocusGraph {
    pub vertices: Vec<Point>,
    pub edges: Vec<Edge>,
    /// Component label per vertex, numbered from zero in order of first vertex.
    pub components: Vec<usize>,
    pub h: f64,
}

struct UnionFind {
    parent: Vec<usize>,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        UnionFind { parent: (0..n).collect() }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    fn union(&mut self, a: usize, b: usize) -> bool {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return false;
        }
        let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
        self.parent[hi] = lo;
        true
    }
}

/// Links cloud points that are 8-neighbours on the lattice of spacing `h`.
/// Diagonals already covered by a two-step axis path are dropped.
pub fn build_graph(metric: &FinslerMetric, cloud: &[Point], h: f64) -> CutLocusGraph {
    let chart = metric.chart();
    let n = cloud.len();
    let key = |p: &Point| ((p[0] / h).round() as i64, (p[1] / h).round() as i64);
    let mut cells: BTreeMap<(i64, i64), Vec<usize>> = BTreeMap::new();
    for (i, p) in cloud.iter().enumerate() {
        cells.entry(key(p)).or_default().push(i);
    }
    let tol = 1e-6 * h;
    let mut axis = Vec::new();
    let mut diag = Vec::new();
    for (i, p) in cloud.iter().enumerate() {
        let (ci, cj) = key(p);
        for di in -1..=1 {
            for dj in -1..=1 {
                for &j in cells.get(&(ci + di, cj + dj)).map(|v| v.as_slice()).unwrap_or(&[]) {
                    if j <= i {
                        continue;
                    }
                    let d = chart.delta(p, &cloud[j]);
                    let (ax, ay) = (d[0].abs(), d[1].abs());
                    if ax > h + tol || ay > h + tol {
                        continue;
                    }
                    if ax > tol && ay > tol {
                        diag.push((i, j));
                    } else if ax > tol || ay > tol {
                        axis.push((i, j));
                    }
                }
            }
        }
    }
    // Periodic charts can make lattice neighbours far apart in raw
    // coordinates; catch those with a direct scan on small clouds.
    if chart.is_periodic(0) || chart.is_periodic(1) {
        let mut seen: std::collections::BTreeSet<(usize, usize)> = axis.iter().chain(&diag).copied().collect();
        for i in 0..n {
            for j in i + 1..n {
                if seen.contains(&(i, j)) {
                    continue;
                }
                let d = chart.delta(&cloud[i], &cloud[j]);
                let (ax, ay) = (d[0].abs(), d[1].abs());
                if ax <= h + tol && ay <= h + tol && (ax > tol || ay > tol) {
                    seen.insert((i, j));
                    if ax > tol && ay > tol {
                        diag.push((i, j));
                    } else {
                        axis.push((i, j));
                    }
                }
            }
        }
    }
    let mut axis_adj = vec![Vec::new(); n];
    for &(a, b) in &axis {
        axis_adj[a].push(b);
        axis_adj[b].push(a);
    }
    let covered = |a: usize, b: usize| axis_adj[a].iter().any(|c| axis_adj[*c].contains(&b));
    let mut links: Vec<(usize, usize)> = axis.clone();
    links.extend(diag.into_iter().filter(|&(a, b)| !covered(a, b)));
    links.sort_unstable();

    let mut uf = UnionFind::new(n);
    let mut kept = links;
    for &(a, b) in &kept {
        uf.union(a, b);
    }
    kept.sort_unstable();
    let edges = kept
        .into_iter()
        .map(|(a, b)| {
            let w = chart.delta(&cloud[a], &cloud[b]);
            Edge {
                a,
                b,
                length_ab: straight_length(metric, &cloud[a], &w),
                length_ba: straight_length(metric, &cloud[b], &(-w)),
            }
        })
        .collect();
    let mut labels = vec![0; n];
    let mut map = BTreeMap::new();
    for (i, l) in labels.iter_mut().enumerate() {
        let r = uf.find(i);
        let next = map.len();
        *l = *map.entry(r).or_insert(next);
    }
    CutLocusGraph { vertices: cloud.to_vec(), edges, components: labels, h }
}

impl CutLocusGraph {
    pub fn component_count(&self) -> usize {
        self.components.iter().copied().max().map_or(0, |m| m + 1)
    }

    pub fn adjacency(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.vertices.len()];
        for e in &self.edges {
            adj[e.a].push(e.b);
            adj[e.b].push(e.a);
        }
        adj
    }

    pub fn max_degree(&self) -> usize {
        self.adjacency().iter().map(|a| a.len()).max().unwrap_or(0)
    }

    pub fn nearest_vertex(&self, p: &Point) -> Option<usize> {
        (0..self.vertices.len()).min_by(|&a, &b| {
            (self.vertices[a] - p).norm_squared().total_cmp(&(self.vertices[b] - p).norm_squared())
        })
    }

    /// Maximal chains through degree-2 vertices, for export.
    pub fn polylines(&self) -> Vec<Polyline> {
        let adj = self.adjacency();
        let mut edge_of = BTreeMap::new();
        for (k, e) in self.edges.iter().enumerate() {
            edge_of.insert((e.a.min(e.b), e.a.max(e.b)), k);
        }
        let mut used = vec![false; self.edges.len()];
        let mut out = Vec::new();
        let walk = |start: usize, next: usize, used: &mut Vec<bool>| {
            let mut verts = vec![start];
            let (mut prev, mut cur) = (start, next);
            let (mut fwd, mut bwd) = (0.0, 0.0);
            loop {
                let k = edge_of[&(prev.min(cur), prev.max(cur))];
                used[k] = true;
                let e = &self.edges[k];
                if e.a == prev {
                    fwd += e.length_ab;
                    bwd += e.length_ba;
                } else {
                    fwd += e.length_ba;
                    bwd += e.length_ab;
                }
                verts.push(cur);
                if adj[cur].len() != 2 || cur == start {
                    break;
                }
                let nxt = if adj[cur][0] == prev { adj[cur][1] } else { adj[cur][0] };
                if used[edge_of[&(cur.min(nxt), cur.max(nxt))]] {
                    break;
                }
                (prev, cur) = (cur, nxt);
            }
            Polyline {
                points: verts.iter().map(|&v| self.vertices[v]).collect(),
                vertices: verts,
                length_forward: fwd,
                length_backward: bwd,
            }
        };
        for v in 0..self.vertices.len() {
            if adj[v].len() == 2 {
                continue;
            }
            for &w in &adj[v] {
                let k = edge_of[&(v.min(w), v.max(w))];
                if !used[k] {
                    out.push(walk(v, w, &mut used));
                }
            }
        }
        for k in 0..self.edges.len() {
            if !used[k] {
                let e = &self.edges[k];
                out.push(walk(e.a, e.b, &mut used));
            }
        }
        for v in 0..self.vertices.len() {
            if adj[v].is_empty() {
                out.push(Polyline {
                    vertices: vec![v],
                    points: vec![self.vertices[v]],
                    length_forward: 0.0,
                    length_backward: 0.0,
                });
            }
        }
        out
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BallResult {
    pub radius: f64,
    pub balls_probed: usize,
    /// Distinct cycles, each as a vertex list.
    pub cycles: Vec<Vec<usize>>,
    pub pass: bool,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TreeReport {
    pub results: Vec<BallResult>,
    pub pass: bool,
}

/// Holes of a lattice point set: bounded 4-connected components of the
/// complement. Each hole is reported by the set points 8-adjacent to it.
fn lattice_holes(cells: &[((i64, i64), usize)]) -> Vec<Vec<usize>> {
    if cells.is_empty() {
        return Vec::new();
    }
    let owner: BTreeMap<(i64, i64), usize> = cells.iter().copied().collect();
    let (mut x0, mut x1, mut y0, mut y1) = (i64::MAX, i64::MIN, i64::MAX, i64::MIN);
    for &((i, j), _) in cells {
        (x0, x1, y0, y1) = (x0.min(i - 1), x1.max(i + 1), y0.min(j - 1), y1.max(j + 1));
    }
    let w = (x1 - x0 + 1) as usize;
    let hgt = (y1 - y0 + 1) as usize;
    let at = |i: i64, j: i64| (j - y0) as usize * w + (i - x0) as usize;
    // 0 unvisited background, 1 set, 2+ background component label.
    let mut label = vec![0usize; w * hgt];
    for &(c, _) in cells {
        label[at(c.0, c.1)] = 1;
    }
    let mut holes = Vec::new();
    let mut next = 2;
    for j in y0..=y1 {
        for i in x0..=x1 {
            if label[at(i, j)] != 0 {
                continue;
            }
            let mut stack = vec![(i, j)];
            label[at(i, j)] = next;
            let mut members = Vec::new();
            let mut bounded = true;
            while let Some((a, b)) = stack.pop() {
                members.push((a, b));
                if a == x0 || a == x1 || b == y0 || b == y1 {
                    bounded = false;
                }
                for (da, db) in [(1, 0), (-1, 0), (0, 1), (0, -1)] {
                    let (u, v) = (a + da, b + db);
                    if u < x0 || u > x1 || v < y0 || v > y1 || label[at(u, v)] != 0 {
                        continue;
                    }
                    label[at(u, v)] = next;
                    stack.push((u, v));
                }
            }
            next += 1;
            if bounded {
                let mut rim: Vec<usize> = members
                    .iter()
                    .flat_map(|&(a, b)| {
                        (-1..=1).flat_map(move |da| (-1..=1).map(move |db| (a + da, b + db)))
                    })
                    .filter_map(|c| owner.get(&c).copied())
                    .collect();
                rim.sort_unstable();
                rim.dedup();
                holes.push(rim);
            }
        }
    }
    holes
}

/// For every vertex and radius, checks that the part of the cloud inside the
/// metric ball (F frozen at the centre) encloses no hole. Lattice-scale
/// blocks of a thick locus are therefore not counted as cycles.
pub fn local_tree_check(metric: &FinslerMetric, g: &CutLocusGraph, radii: &[f64]) -> TreeReport {
    let chart = metric.chart();
    let mut results = Vec::new();
    for &r in radii {
        let mut cycles: std::collections::BTreeSet<Vec<usize>> = Default::default();
        for x in &g.vertices {
            let cells: Vec<((i64, i64), usize)> = g
                .vertices
                .iter()
                .enumerate()
                .filter_map(|(k, p)| {
                    let d = chart.delta(x, p);
                    (metric.f(x, &d) < r).then(|| (((d[0] / g.h).round() as i64, (d[1] / g.h).round() as i64), k))
                })
                .collect();
            cycles.extend(lattice_holes(&cells));
        }
        let cycles: Vec<Vec<usize>> = cycles.into_iter().collect();
        results.push(BallResult { radius: r, balls_probed: g.vertices.len(), pass: cycles.is_empty(), cycles });
    }
    let pass = results.iter().all(|r| r.pass);
    TreeReport { results, pass }
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct IntrinsicDistance {
    /// Shortest path from `q1` to `q2` with edges traversed forward.
    pub forward: f64,
    /// Shortest path from `q2` to `q1`.
    pub backward: f64,
}

impl IntrinsicDistance {
    pub fn min(&self) -> f64 {
        self.forward.min(self.backward)
    }
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

fn directed_dijkstra(g: &CutLocusGraph, from: usize, to: usize) -> f64 {
    let mut out: Vec<Vec<(usize, f64)>> = vec![Vec::new(); g.vertices.len()];
    for e in &g.edges {
        out[e.a].push((e.b, e.length_ab));
        out[e.b].push((e.a, e.length_ba));
    }
    let mut dist = vec![f64::INFINITY; g.vertices.len()];
    let mut heap = BinaryHeap::new();
    dist[from] = 0.0;
    heap.push(Reverse((Key(0.0), from)));
    while let Some(Reverse((Key(d), v))) = heap.pop() {
        if v == to {
            return d;
        }
        if d > dist[v] {
            continue;
        }
        for &(w, l) in &out[v] {
            if d + l < dist[w] {
                dist[w] = d + l;
                heap.push(Reverse((Key(d + l), w)));
            }
        }
    }
    f64::INFINITY
}

/// Intrinsic length distance between the vertices nearest `q1` and `q2`;
/// infinite across components.
pub fn intrinsic_metric(g: &CutLocusGraph, q1: &Point, q2: &Point) -> IntrinsicDistance {
    match (g.nearest_vertex(q1), g.nearest_vertex(q2)) {
        (Some(a), Some(b)) => {
            IntrinsicDistance { forward: directed_dijkstra(g, a, b), backward: directed_dijkstra(g, b, a) }
        }
        _ => IntrinsicDistance { forward: f64::INFINITY, backward: f64::INFINITY },
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CompactnessVerdict {
    BoundedInChart,
    TouchesBoundary,
    Empty,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CompactnessProbe {
    pub level: f64,
    pub margin: f64,
    pub sublevel_nodes: usize,
    pub verdict: CompactnessVerdict,
    /// Co-point estimate restricted to the sublevel: count and verdict.
    pub hypothesis_points: usize,
    pub hypothesis: CompactnessVerdict,
}

/// Does `{b ≤ c}` reach the grid's boundary margin? The same question is
/// asked of the co-point points inside the sublevel set.
pub fn sublevel_compactness_probe(field: &ScalarField, c: f64, margin: f64, copoints: &[Point]) -> CompactnessProbe {
    let grid = &field.grid;
    let mut count = 0;
    let mut touches = false;
    for k in 0..grid.len() {
        if field.values[k] <= c {
            count += 1;
            if grid.boundary_distance(&grid.node_at(k)) < margin {
                touches = true;
            }
        }
    }
    let verdict = match (count, touches) {
        (0, _) => CompactnessVerdict::Empty,
        (_, true) => CompactnessVerdict::TouchesBoundary,
        _ => CompactnessVerdict::BoundedInChart,
    };
    let inside: Vec<&Point> = copoints.iter().filter(|p| field.interpolate(p).is_some_and(|b| b <= c)).collect();
    let hypothesis = if inside.is_empty() {
        CompactnessVerdict::Empty
    } else if inside.iter().any(|p| grid.boundary_distance(p) < margin) {
        CompactnessVerdict::TouchesBoundary
    } else {
        CompactnessVerdict::BoundedInChart
    };
    CompactnessProbe { level: c, margin, sublevel_nodes: count, verdict, hypothesis_points: inside.len(), hypothesis }
}
