//! Ring profiles `f(θ) = ρ·F(x, e_θ) + u(x + ρ·e_θ)` of a to-target field
//! and their significant minima. A minimizer of the profile approximates the
//! initial direction of a shortest path from `x` into the target set.

use crate::chart::{unit, Point, Vec2};
use crate::grid::ScalarField;
use crate::metric::FinslerMetric;

#[derive(Clone, Debug)]
pub struct RingProfile {
    pub center: Point,
    pub radius: f64,
    pub thetas: Vec<f64>,
    /// `NaN` where the ring leaves the grid.
    pub values: Vec<f64>,
}

/// A significant local minimum of a ring profile.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Basin {
    pub theta: f64,
    pub value: f64,
    /// Depth below the lowest saddle towards a deeper basin; infinite for
    /// the global minimum.
    pub persistence: f64,
}

impl Basin {
    /// Unit-speed direction at `x`.
    pub fn direction(&self, metric: &FinslerMetric, x: &Point) -> Vec2 {
        let e = unit(self.theta);
        e / metric.f(x, &e)
    }
}

/// Ring radius for a node with field value `u`: `4h`, shrunk so the ring
/// stays off the set.
pub fn ring_radius(metric: &FinslerMetric, h: f64, u: f64) -> f64 {
    (4.0 * h).min(0.9 * u / metric.max_unit_speed())
}

pub fn ring_profile(metric: &FinslerMetric, field: &ScalarField, x: &Point, radius: f64, k: usize) -> RingProfile {
    let thetas: Vec<f64> = (0..k).map(|i| i as f64 * std::f64::consts::TAU / k as f64).collect();
    let values = thetas
        .iter()
        .map(|&t| {
            let e = unit(t);
            let y = x + e * radius;
            match field.interpolate(&y) {
                Some(u) => radius * metric.f(x, &e) + u,
                None => f64::NAN,
            }
        })
        .collect();
    RingProfile { center: *x, radius, thetas, values }
}

impl RingProfile {
    pub fn min(&self) -> f64 {
        self.values.iter().copied().filter(|v| v.is_finite()).fold(f64::INFINITY, f64::min)
    }

    pub fn range(&self) -> f64 {
        let max = self.values.iter().copied().filter(|v| v.is_finite()).fold(f64::NEG_INFINITY, f64::max);
        max - self.min()
    }

    pub fn complete(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    /// Local minima with persistence above `eta`, sorted by value. The
    /// minimum position is refined by a parabola through its neighbours.
    pub fn basins(&self, eta: f64) -> Vec<Basin> {
        let n = self.values.len();
        let f = &self.values;
        let at = |i: isize| f[i.rem_euclid(n as isize) as usize];
        let mut out = Vec::new();
        for i in 0..n {
            let v = f[i];
            if !v.is_finite() {
                continue;
            }
            let (l, r) = (at(i as isize - 1), at(i as isize + 1));
            // Plateaus count once, at their first index.
            if !(l.is_nan() || v < l) || !(r.is_nan() || v <= r) {
                continue;
            }
            let mut saddle = f64::INFINITY;
            for side in [-1isize, 1] {
                let mut peak = v;
                let mut lower = false;
                for step in 1..n as isize {
                    let w = at(i as isize + side * step);
                    if w.is_nan() {
                        break;
                    }
                    if w < v {
                        lower = true;
                        break;
                    }
                    peak = peak.max(w);
                }
                if lower {
                    saddle = saddle.min(peak);
                }
            }
            let persistence = saddle - v;
            if persistence <= eta {
                continue;
            }
            let step = std::f64::consts::TAU / n as f64;
            let mut theta = self.thetas[i];
            let mut value = v;
            if l.is_finite() && r.is_finite() {
                let den = l - 2.0 * v + r;
                if den > 0.0 {
                    let off = (0.5 * (l - r) / den).clamp(-0.5, 0.5);
                    theta += off * step;
                    value = v - 0.25 * (l - r) * off;
                }
            }
            out.push(Basin { theta, value, persistence });
        }
        out.sort_by(|a, b| a.value.total_cmp(&b.value));
        out
    }
}
