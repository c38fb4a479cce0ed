//! Marching-squares level curves with component and separation reports.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::chart::Point;
use crate::grid::ScalarField;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Contour {
    pub points: Vec<Point>,
    pub closed: bool,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ContourReport {
    pub level: f64,
    pub components: Vec<Contour>,
    /// Smallest distance between points of different components; infinite
    /// when all components are more than two cells apart.
    pub min_separation: f64,
    pub ambiguous_cells: usize,
    pub anomalies: Vec<String>,
}

impl ContourReport {
    pub fn count(&self) -> usize {
        self.components.len()
    }

    pub fn anomalous(&self) -> bool {
        !self.anomalies.is_empty()
    }
}

/// Lattice edge: horizontal from node `(i, j)` (`false`) or vertical (`true`).
type EdgeKey = (usize, usize, bool);

/// Components of `{field = t}` by marching squares. Ambiguous saddle cells
/// are resolved by the cell-centre average and flagged; components closer
/// than one grid spacing are flagged as well.
pub fn level_curve_arcs(field: &ScalarField, t: f64) -> ContourReport {
    let g = &field.grid;
    let h = g.h;
    let ci = if g.periodic[0] { g.nx } else { g.nx - 1 };
    let cj = if g.periodic[1] { g.ny } else { g.ny - 1 };
    let wrap = |i: usize, n: usize| i % n;
    let val = |i: usize, j: usize| field.values[g.idx(wrap(i, g.nx), wrap(j, g.ny))];
    let crossing = |key: EdgeKey| -> Point {
        let (i, j, vertical) = key;
        let (i2, j2) = if vertical { (i, j + 1) } else { (i + 1, j) };
        let (a, b) = (val(i, j), val(i2, j2));
        let lam = if a == b { 0.5 } else { ((t - a) / (b - a)).clamp(0.0, 1.0) };
        let p = g.node(i, j);
        let q = g.node(i2, j2);
        p + (q - p) * lam
    };
    let norm = |k: EdgeKey| (wrap(k.0, g.nx), wrap(k.1, g.ny), k.2);
    let mut segs: Vec<(EdgeKey, EdgeKey)> = Vec::new();
    let mut ambiguous = 0;
    let mut anomalies = Vec::new();
    for j in 0..cj {
        for i in 0..ci {
            let v = [val(i, j), val(i + 1, j), val(i + 1, j + 1), val(i, j + 1)];
            if v.iter().any(|x| !x.is_finite()) {
                continue;
            }
            let inside: Vec<bool> = v.iter().map(|&x| x >= t).collect();
            let code = inside.iter().enumerate().fold(0u8, |c, (k, &b)| c | ((b as u8) << k));
            if code == 0 || code == 15 {
                continue;
            }
            let bottom = norm((i, j, false));
            let right = norm((i + 1, j, true));
            let top = norm((i, j + 1, false));
            let left = norm((i, j, true));
            // Edge k joins corner k and corner k+1.
            let edges = [bottom, right, top, left];
            let crossed: Vec<usize> = (0..4).filter(|&k| inside[k] != inside[(k + 1) % 4]).collect();
            if crossed.len() == 2 {
                segs.push((edges[crossed[0]], edges[crossed[1]]));
            } else {
                ambiguous += 1;
                let centre = 0.25 * v.iter().sum::<f64>();
                let p = g.node(i, j);
                anomalies.push(format!("saddle cell at ({:.4}, {:.4}), centre value {centre:.3e}", p[0], p[1]));
                // Connect so that the centre's side separates the others.
                if (centre >= t) == inside[0] {
                    segs.push((bottom, right));
                    segs.push((top, left));
                } else {
                    segs.push((left, bottom));
                    segs.push((right, top));
                }
            }
        }
    }
    let mut adj: BTreeMap<EdgeKey, Vec<usize>> = BTreeMap::new();
    for (k, (a, b)) in segs.iter().enumerate() {
        adj.entry(*a).or_default().push(k);
        adj.entry(*b).or_default().push(k);
    }
    let mut used = vec![false; segs.len()];
    let mut components = Vec::new();
    let mut comp_of_point: Vec<(Point, usize)> = Vec::new();
    let other = |s: usize, e: EdgeKey| if segs[s].0 == e { segs[s].1 } else { segs[s].0 };
    let mut starts: Vec<usize> = (0..segs.len())
        .filter(|&s| adj[&segs[s].0].len() == 1 || adj[&segs[s].1].len() == 1)
        .collect();
    starts.extend(0..segs.len());
    for s0 in starts {
        if used[s0] {
            continue;
        }
        let begin = if adj[&segs[s0].0].len() == 1 { segs[s0].0 } else if adj[&segs[s0].1].len() == 1 { segs[s0].1 } else { segs[s0].0 };
        let mut keys = vec![begin];
        let mut cur_edge = begin;
        let mut cur_seg = s0;
        let mut closed = false;
        loop {
            used[cur_seg] = true;
            let nxt = other(cur_seg, cur_edge);
            keys.push(nxt);
            if nxt == begin {
                closed = true;
                break;
            }
            match adj[&nxt].iter().copied().find(|&s| !used[s]) {
                Some(s) => {
                    cur_seg = s;
                    cur_edge = nxt;
                }
                None => break,
            }
        }
        let points: Vec<Point> = keys.iter().map(|&k| crossing(k)).collect();
        let id = components.len();
        comp_of_point.extend(points.iter().map(|p| (*p, id)));
        components.push(Contour { points, closed });
    }

    let mut buckets: HashMap<(i64, i64), Vec<usize>> = HashMap::new();
    let cell = |p: &Point| ((p[0] / h).floor() as i64, (p[1] / h).floor() as i64);
    for (k, (p, _)) in comp_of_point.iter().enumerate() {
        buckets.entry(cell(p)).or_default().push(k);
    }
    let mut min_sep = f64::INFINITY;
    for (p, c) in &comp_of_point {
        let (bx, by) = cell(p);
        for dx in -1..=1 {
            for dy in -1..=1 {
                for &k in buckets.get(&(bx + dx, by + dy)).map(|v| v.as_slice()).unwrap_or(&[]) {
                    let (q, d) = &comp_of_point[k];
                    if d != c {
                        min_sep = min_sep.min(g.delta(p, q).norm());
                    }
                }
            }
        }
    }
    if components.len() > 1 && min_sep < h {
        anomalies.push(format!("components approach within {min_sep:.3e} < h"));
    }
    ContourReport { level: t, components, min_separation: min_sep, ambiguous_cells: ambiguous, anomalies }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{FieldKind, Grid};

    fn grid() -> Grid {
        Grid::new([-2.0, -2.0], 0.1, 41, 41, [false, false]).unwrap()
    }

    #[test]
    fn straight_level_is_one_arc() {
        let f = ScalarField::from_fn(grid(), FieldKind::Busemann, "x", |p| p[0]);
        let r = level_curve_arcs(&f, 1.03);
        assert_eq!(r.count(), 1);
        assert!(!r.anomalous());
        assert!(r.components[0].points.iter().all(|p| (p[0] - 1.03).abs() < 1e-12));
        assert_eq!(r.components[0].points.len(), 41);
    }

    #[test]
    fn circle_is_closed() {
        let f = ScalarField::from_fn(grid(), FieldKind::Busemann, "r", |p| p.norm());
        let r = level_curve_arcs(&f, 1.01);
        assert_eq!(r.count(), 1);
        assert!(r.components[0].closed);
    }

    #[test]
    fn two_lines_are_separated() {
        let f = ScalarField::from_fn(grid(), FieldKind::Busemann, "|x|", |p| p[0].abs());
        let r = level_curve_arcs(&f, 0.52);
        assert_eq!(r.count(), 2);
        assert!(r.min_separation > 0.1);
        assert!(!r.anomalous());
    }

    #[test]
    fn planted_saddle_is_flagged() {
        let f = ScalarField::from_fn(grid(), FieldKind::Busemann, "saddle", |p| p[0] * p[0] - p[1] * p[1]);
        assert!(level_curve_arcs(&f, 0.0).anomalous());
        let g = ScalarField::from_fn(grid(), FieldKind::Busemann, "saddle", |p| (p[0] - 0.05) * (p[1] - 0.05));
        assert!(level_curve_arcs(&g, 0.0).anomalous());
    }
}
