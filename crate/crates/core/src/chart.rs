//! Coordinate charts standing in for the complete surface.

use nalgebra::Vector2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Point = Vector2<f64>;
pub type Vec2 = Vector2<f64>;

/// Axis-aligned rectangle with optional periodic identification per axis.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(from = "ChartRepr", into = "ChartRepr")]
pub struct Chart {
    pub x: [f64; 2],
    pub y: [f64; 2],
    /// Period of each axis, if periodic. Must equal the axis extent.
    pub periodic: [Option<f64>; 2],
    pub label: String,
}

/// Serialized form: periodicity as flags, periods implied by the bounds.
#[derive(Clone, Serialize, Deserialize)]
struct ChartRepr {
    x: [f64; 2],
    y: [f64; 2],
    #[serde(default)]
    periodic: [bool; 2],
    #[serde(default)]
    label: String,
}

impl From<ChartRepr> for Chart {
    fn from(r: ChartRepr) -> Self {
        Chart {
            x: r.x,
            y: r.y,
            periodic: [r.periodic[0].then(|| r.x[1] - r.x[0]), r.periodic[1].then(|| r.y[1] - r.y[0])],
            label: r.label,
        }
    }
}

impl From<Chart> for ChartRepr {
    fn from(c: Chart) -> Self {
        ChartRepr { x: c.x, y: c.y, periodic: [c.periodic[0].is_some(), c.periodic[1].is_some()], label: c.label }
    }
}

impl Chart {
    pub fn new(x: [f64; 2], y: [f64; 2], periodic: [bool; 2], label: impl Into<String>) -> Result<Self> {
        let chart = Chart {
            x,
            y,
            periodic: [
                periodic[0].then(|| x[1] - x[0]),
                periodic[1].then(|| y[1] - y[0]),
            ],
            label: label.into(),
        };
        chart.check()?;
        Ok(chart)
    }

    pub fn rect(half: f64) -> Self {
        Chart { x: [-half, half], y: [-half, half], periodic: [None, None], label: String::new() }
    }

    pub fn check(&self) -> Result<()> {
        for (axis, b) in [self.x, self.y].iter().enumerate() {
            if !(b[0].is_finite() && b[1].is_finite() && b[1] > b[0]) {
                return Err(Error::Input(format!("chart axis {axis} has degenerate bounds {b:?}")));
            }
            if let Some(p) = self.periodic[axis] {
                if (p - (b[1] - b[0])).abs() > 1e-9 * p.abs().max(1.0) {
                    return Err(Error::Input(format!(
                        "chart axis {axis}: period {p} differs from extent {}",
                        b[1] - b[0]
                    )));
                }
            }
        }
        Ok(())
    }

    fn bounds(&self, axis: usize) -> [f64; 2] {
        if axis == 0 {
            self.x
        } else {
            self.y
        }
    }

    pub fn is_periodic(&self, axis: usize) -> bool {
        self.periodic[axis].is_some()
    }

    /// Largest axis extent.
    pub fn extent(&self) -> f64 {
        (self.x[1] - self.x[0]).max(self.y[1] - self.y[0])
    }

    /// True if `p` lies in the chart; periodic axes accept any coordinate.
    pub fn contains(&self, p: &Point) -> bool {
        (0..2).all(|a| {
            let b = self.bounds(a);
            let slack = 1e-12 * (b[1] - b[0]);
            self.periodic[a].is_some() || (p[a] >= b[0] - slack && p[a] <= b[1] + slack)
        })
    }

    /// Maps periodic coordinates into `[min, min + period)`.
    pub fn wrap(&self, p: &Point) -> Point {
        let mut q = *p;
        for a in 0..2 {
            if let Some(period) = self.periodic[a] {
                let lo = self.bounds(a)[0];
                q[a] = lo + (q[a] - lo).rem_euclid(period);
            }
        }
        q
    }

    /// Minimal-image displacement from `a` to `b`.
    pub fn delta(&self, a: &Point, b: &Point) -> Vec2 {
        let mut d = b - a;
        for axis in 0..2 {
            if let Some(period) = self.periodic[axis] {
                d[axis] -= period * (d[axis] / period).round();
            }
        }
        d
    }

    /// Distance from `p` to the nearest non-periodic boundary edge; infinite
    /// when both axes are periodic.
    pub fn boundary_distance(&self, p: &Point) -> f64 {
        let mut best = f64::INFINITY;
        for a in 0..2 {
            if self.periodic[a].is_none() {
                let b = self.bounds(a);
                best = best.min(p[a] - b[0]).min(b[1] - p[a]);
            }
        }
        best
    }

    /// Default truncation margin: 5% of chart extent.
    pub fn default_margin(&self) -> f64 {
        0.05 * self.extent()
    }

    pub fn check_point(&self, p: &Point) -> Result<()> {
        if !(p[0].is_finite() && p[1].is_finite()) {
            return Err(Error::Input(format!("non-finite point ({}, {})", p[0], p[1])));
        }
        if !self.contains(p) {
            return Err(Error::Domain(format!(
                "point ({}, {}) outside chart [{}, {}]x[{}, {}]",
                p[0], p[1], self.x[0], self.x[1], self.y[0], self.y[1]
            )));
        }
        Ok(())
    }
}

/// Angle of a vector in `(-pi, pi]`.
pub fn angle_of(v: &Vec2) -> f64 {
    v[1].atan2(v[0])
}

/// Absolute angular separation in `[0, pi]`.
pub fn angle_between(a: &Vec2, b: &Vec2) -> f64 {
    let d = (angle_of(b) - angle_of(a)).rem_euclid(std::f64::consts::TAU);
    d.min(std::f64::consts::TAU - d)
}

pub fn unit(theta: f64) -> Vec2 {
    Vec2::new(theta.cos(), theta.sin())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_degenerate_bounds() {
        assert!(Chart::new([0.0, 0.0], [0.0, 1.0], [false, false], "c").is_err());
        assert!(Chart::new([0.0, 1.0], [2.0, 1.0], [false, false], "c").is_err());
    }

    #[test]
    fn periodic_wrap_and_delta() {
        let tau = std::f64::consts::TAU;
        let c = Chart::new([-tau / 2.0, tau / 2.0], [-10.0, 10.0], [true, false], "cyl").unwrap();
        let p = c.wrap(&Point::new(2.0 * tau + 0.5, 1.0));
        assert!((p[0] - 0.5).abs() < 1e-12);
        let d = c.delta(&Point::new(3.0, 0.0), &Point::new(-3.0, 0.0));
        assert!((d[0] - (tau - 6.0)).abs() < 1e-12);
        assert!(c.contains(&Point::new(100.0, 0.0)));
        assert!(!c.contains(&Point::new(0.0, 11.0)));
        assert!(c.boundary_distance(&Point::new(0.0, 9.0)) - 1.0 < 1e-12);
    }

    #[test]
    fn angles() {
        let a = Vec2::new(1.0, 0.0);
        let b = Vec2::new(-1.0, 1e-9);
        assert!((angle_between(&a, &b) - std::f64::consts::PI).abs() < 1e-8);
        assert!(angle_between(&unit(3.1), &unit(-3.1)) < 0.1);
    }
}
