//! Regular lattices over chart sub-rectangles and grid-sampled scalar fields.

use serde::{Deserialize, Serialize};

use crate::chart::{Chart, Point, Vec2};
use crate::error::{Error, Result};

/// User-facing grid request: a rectangle and a spacing.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub x: [f64; 2],
    pub y: [f64; 2],
    pub h: f64,
}

/// Regular lattice with equal spacing on both axes. Periodic axes have
/// `n·h = period` and no duplicated end node.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub origin: [f64; 2],
    pub h: f64,
    pub nx: usize,
    pub ny: usize,
    pub periodic: [bool; 2],
}

impl Grid {
    pub fn new(origin: [f64; 2], h: f64, nx: usize, ny: usize, periodic: [bool; 2]) -> Result<Self> {
        if !(h > 0.0 && h.is_finite()) {
            return Err(Error::Input(format!("grid spacing {h} must be positive")));
        }
        if nx < 2 || ny < 2 {
            return Err(Error::Input(format!("grid too small: {nx}x{ny}")));
        }
        Ok(Grid { origin, h, nx, ny, periodic })
    }

    /// Builds the lattice for `spec` inside `chart`. An axis is periodic when
    /// the requested range covers a periodic chart axis exactly; the spacing
    /// is then adjusted so the period is a whole number of cells.
    pub fn from_spec(spec: &GridSpec, chart: &Chart) -> Result<Self> {
        if !(spec.h > 0.0) {
            return Err(Error::Input(format!("grid spacing {} must be positive", spec.h)));
        }
        let mut periodic = [false; 2];
        let mut h = spec.h;
        for (axis, r) in [spec.x, spec.y].iter().enumerate() {
            if !(r[1] > r[0]) {
                return Err(Error::Input(format!("grid axis {axis} has empty range {r:?}")));
            }
            let cb = if axis == 0 { chart.x } else { chart.y };
            if let Some(p) = chart.periodic[axis] {
                if (r[1] - r[0] - p).abs() < 1e-9 * p {
                    periodic[axis] = true;
                    h = p / (p / spec.h).round();
                }
            } else if r[0] < cb[0] - 1e-9 || r[1] > cb[1] + 1e-9 {
                return Err(Error::Domain(format!("grid axis {axis} range {r:?} exceeds chart {cb:?}")));
            }
        }
        let count = |r: [f64; 2], per: bool| {
            if per {
                ((r[1] - r[0]) / h).round() as usize
            } else {
                ((r[1] - r[0]) / h).round() as usize + 1
            }
        };
        Grid::new([spec.x[0], spec.y[0]], h, count(spec.x, periodic[0]), count(spec.y, periodic[1]), periodic)
    }

    pub fn len(&self) -> usize {
        self.nx * self.ny
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn idx(&self, i: usize, j: usize) -> usize {
        j * self.nx + i
    }

    #[inline]
    pub fn ij(&self, idx: usize) -> (usize, usize) {
        (idx % self.nx, idx / self.nx)
    }

    #[inline]
    pub fn node(&self, i: usize, j: usize) -> Point {
        Point::new(self.origin[0] + i as f64 * self.h, self.origin[1] + j as f64 * self.h)
    }

    pub fn node_at(&self, idx: usize) -> Point {
        let (i, j) = self.ij(idx);
        self.node(i, j)
    }

    /// Upper corner of the covered rectangle (inclusive for non-periodic axes).
    pub fn max_corner(&self) -> [f64; 2] {
        let ext = |n: usize, per: bool| if per { n as f64 * self.h } else { (n - 1) as f64 * self.h };
        [self.origin[0] + ext(self.nx, self.periodic[0]), self.origin[1] + ext(self.ny, self.periodic[1])]
    }

    pub fn extent(&self) -> f64 {
        let m = self.max_corner();
        (m[0] - self.origin[0]).max(m[1] - self.origin[1])
    }

    /// Lattice neighbour at integer offset, wrapping periodic axes.
    #[inline]
    pub fn offset(&self, i: usize, j: usize, di: i32, dj: i32) -> Option<usize> {
        let wrap = |k: usize, d: i32, n: usize, per: bool| -> Option<usize> {
            let t = k as i64 + d as i64;
            if per {
                Some(t.rem_euclid(n as i64) as usize)
            } else if t < 0 || t >= n as i64 {
                None
            } else {
                Some(t as usize)
            }
        };
        let ii = wrap(i, di, self.nx, self.periodic[0])?;
        let jj = wrap(j, dj, self.ny, self.periodic[1])?;
        Some(self.idx(ii, jj))
    }

    /// Continuous lattice coordinates of `p`, wrapped on periodic axes;
    /// `None` outside the covered rectangle.
    pub fn locate(&self, p: &Point) -> Option<(f64, f64)> {
        let mut c = [0.0; 2];
        let n = [self.nx, self.ny];
        for a in 0..2 {
            let mut t = (p[a] - self.origin[a]) / self.h;
            if self.periodic[a] {
                t = t.rem_euclid(n[a] as f64);
            } else {
                let eps = 1e-9;
                if t < -eps || t > (n[a] - 1) as f64 + eps {
                    return None;
                }
                t = t.clamp(0.0, (n[a] - 1) as f64);
            }
            c[a] = t;
        }
        Some((c[0], c[1]))
    }

    pub fn contains(&self, p: &Point) -> bool {
        self.locate(p).is_some()
    }

    /// Nearest lattice node to `p`.
    pub fn nearest(&self, p: &Point) -> Option<usize> {
        let (u, v) = self.locate(p)?;
        let i = (u.round() as usize) % self.nx.max(1);
        let j = (v.round() as usize) % self.ny.max(1);
        Some(self.idx(i.min(self.nx - 1), j.min(self.ny - 1)))
    }

    /// Minimal-image displacement between two points under the grid's periodicity.
    pub fn delta(&self, a: &Point, b: &Point) -> Vec2 {
        let mut d = b - a;
        let n = [self.nx, self.ny];
        for axis in 0..2 {
            if self.periodic[axis] {
                let p = n[axis] as f64 * self.h;
                d[axis] -= p * (d[axis] / p).round();
            }
        }
        d
    }

    /// Distance from `p` to the nearest non-periodic grid edge.
    pub fn boundary_distance(&self, p: &Point) -> f64 {
        let m = self.max_corner();
        let mut best = f64::INFINITY;
        for a in 0..2 {
            if !self.periodic[a] {
                best = best.min(p[a] - self.origin[a]).min(m[a] - p[a]);
            }
        }
        best
    }

    /// Indices of nodes on the non-periodic boundary.
    pub fn boundary_nodes(&self) -> Vec<usize> {
        let mut out = Vec::new();
        for j in 0..self.ny {
            for i in 0..self.nx {
                let on_x = !self.periodic[0] && (i == 0 || i == self.nx - 1);
                let on_y = !self.periodic[1] && (j == 0 || j == self.ny - 1);
                if on_x || on_y {
                    out.push(self.idx(i, j));
                }
            }
        }
        out
    }

    /// Same rectangle at half the spacing.
    pub fn refined(&self) -> Grid {
        let n = |k: usize, per: bool| if per { 2 * k } else { 2 * k - 1 };
        Grid {
            origin: self.origin,
            h: self.h / 2.0,
            nx: n(self.nx, self.periodic[0]),
            ny: n(self.ny, self.periodic[1]),
            periodic: self.periodic,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FieldKind {
    DistanceToSet,
    DistanceFromPoint,
    Busemann,
    /// Companion data (e.g. per-node truncation increments).
    Auxiliary,
}

impl FieldKind {
    pub fn code(self) -> u8 {
        match self {
            FieldKind::DistanceToSet => 1,
            FieldKind::DistanceFromPoint => 2,
            FieldKind::Busemann => 3,
            FieldKind::Auxiliary => 4,
        }
    }

    pub fn from_code(c: u8) -> Option<Self> {
        Some(match c {
            1 => FieldKind::DistanceToSet,
            2 => FieldKind::DistanceFromPoint,
            3 => FieldKind::Busemann,
            4 => FieldKind::Auxiliary,
            _ => return None,
        })
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub metric_id: String,
    pub source: String,
    #[serde(default)]
    pub params: serde_json::Value,
}

/// Function sampled on a grid, row-major (`j * nx + i`).
#[derive(Clone, Debug, PartialEq)]
pub struct ScalarField {
    pub grid: Grid,
    pub values: Vec<f64>,
    pub kind: FieldKind,
    pub provenance: Provenance,
}

impl ScalarField {
    pub fn new(grid: Grid, values: Vec<f64>, kind: FieldKind, provenance: Provenance) -> Self {
        assert_eq!(grid.len(), values.len(), "field size mismatch");
        ScalarField { grid, values, kind, provenance }
    }

    /// Samples `f` at every node.
    pub fn from_fn(grid: Grid, kind: FieldKind, source: &str, f: impl Fn(&Point) -> f64) -> Self {
        let values = (0..grid.len()).map(|k| f(&grid.node_at(k))).collect();
        ScalarField::new(grid, values, kind, Provenance { source: source.into(), ..Default::default() })
    }

    #[inline]
    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.values[self.grid.idx(i, j)]
    }

    /// Bilinear interpolation; `None` outside the grid or next to a
    /// non-finite node.
    pub fn interpolate(&self, p: &Point) -> Option<f64> {
        let (u, v) = self.grid.locate(p)?;
        let g = &self.grid;
        let i0 = (u.floor() as usize).min(if g.periodic[0] { g.nx - 1 } else { g.nx - 2 });
        let j0 = (v.floor() as usize).min(if g.periodic[1] { g.ny - 1 } else { g.ny - 2 });
        let fu = u - i0 as f64;
        let fv = v - j0 as f64;
        let i1 = if g.periodic[0] { (i0 + 1) % g.nx } else { i0 + 1 };
        let j1 = if g.periodic[1] { (j0 + 1) % g.ny } else { j0 + 1 };
        let (a, b, c, d) = (self.at(i0, j0), self.at(i1, j0), self.at(i0, j1), self.at(i1, j1));
        let val = (a * (1.0 - fu) + b * fu) * (1.0 - fv) + (c * (1.0 - fu) + d * fu) * fv;
        val.is_finite().then_some(val)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().filter(|v| v.is_finite()).fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().filter(|v| v.is_finite()).fold(f64::INFINITY, f64::min)
    }

    /// Max |self - other| over nodes where both are finite.
    pub fn max_abs_diff(&self, other: &ScalarField) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .filter(|(a, b)| a.is_finite() && b.is_finite())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    /// CSV export `x,y,value`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("x,y,value\n");
        for k in 0..self.grid.len() {
            let p = self.grid.node_at(k);
            out.push_str(&format!("{},{},{}\n", p[0], p[1], self.values[k]));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spec_to_grid() {
        let chart = Chart::rect(10.0);
        let g = Grid::from_spec(&GridSpec { x: [-5.0, 5.0], y: [-5.0, 5.0], h: 0.05 }, &chart).unwrap();
        assert_eq!((g.nx, g.ny), (201, 201));
        assert!((g.node(200, 200) - Point::new(5.0, 5.0)).norm() < 1e-12);
        let tau = std::f64::consts::TAU;
        let cyl = Chart::new([-tau / 2.0, tau / 2.0], [-20.0, 20.0], [true, false], "cyl").unwrap();
        let g = Grid::from_spec(&GridSpec { x: [-tau / 2.0, tau / 2.0], y: [-5.0, 5.0], h: 0.05 }, &cyl).unwrap();
        assert!(g.periodic[0] && !g.periodic[1]);
        assert!((g.nx as f64 * g.h - tau).abs() < 1e-12);
        assert!(Grid::from_spec(&GridSpec { x: [-50.0, 5.0], y: [-5.0, 5.0], h: 0.1 }, &chart).is_err());
    }

    #[test]
    fn bilinear_reproduces_affine_functions() {
        let g = Grid::new([-1.0, -1.0], 0.1, 21, 21, [false, false]).unwrap();
        let f = ScalarField::from_fn(g, FieldKind::Auxiliary, "affine", |p| 2.0 * p[0] - 0.5 * p[1] + 1.0);
        for p in [Point::new(0.013, -0.77), Point::new(0.999, 0.999), Point::new(-1.0, 1.0)] {
            let v = f.interpolate(&p).unwrap();
            assert!((v - (2.0 * p[0] - 0.5 * p[1] + 1.0)).abs() < 1e-12);
        }
        assert!(f.interpolate(&Point::new(1.2, 0.0)).is_none());
    }

    #[test]
    fn periodic_interpolation_wraps() {
        let g = Grid::new([0.0, 0.0], 0.25, 8, 5, [true, false]).unwrap();
        let f = ScalarField::from_fn(g, FieldKind::Auxiliary, "sin", |p| (p[0] * std::f64::consts::PI).sin());
        let a = f.interpolate(&Point::new(1.9, 0.5)).unwrap();
        let b = f.interpolate(&Point::new(-0.1, 0.5)).unwrap();
        assert!((a - b).abs() < 1e-12);
        assert_eq!(f.grid.offset(7, 0, 1, 0), Some(f.grid.idx(0, 0)));
        assert_eq!(f.grid.offset(0, 0, 0, -1), None);
    }

    #[test]
    fn refinement_keeps_rectangle() {
        let g = Grid::new([-1.0, -2.0], 0.1, 21, 41, [false, false]).unwrap();
        let r = g.refined();
        assert_eq!(r.max_corner(), g.max_corner());
        assert_eq!((r.nx, r.ny), (41, 81));
    }
}
