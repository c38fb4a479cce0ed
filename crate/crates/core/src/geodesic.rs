//! Unit-speed geodesics: adaptive Dormand–Prince 5(4) integration of
//! `ẍ = -2G(x, ẋ)` with projective renormalization `y ← y / F(x, y)` at
//! accepted steps and cubic Hermite dense output.

use serde::{Deserialize, Serialize};

use crate::chart::{Chart, Point, Vec2};
use crate::error::{Error, Result};
use crate::metric::FinslerMetric;

/// One accepted step. Positions are unwrapped (universal cover of periodic axes).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub s: f64,
    pub x: Point,
    pub v: Vec2,
    pub a: Vec2,
}

#[derive(Clone, Debug)]
pub struct Geodesic {
    metric_id: String,
    chart: Chart,
    samples: Vec<Sample>,
    tol: f64,
    truncated: bool,
    warnings: Vec<String>,
}

/// Observer decision after each accepted step.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Flow {
    Continue,
    Stop,
}

pub(crate) struct Run {
    pub samples: Vec<Sample>,
    pub truncated: bool,
}

const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [0.2, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
const B5: [f64; 7] = [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0, 0.0];
const B4: [f64; 7] = [
    5179.0 / 57600.0,
    0.0,
    7571.0 / 16695.0,
    393.0 / 640.0,
    -92097.0 / 339200.0,
    187.0 / 2100.0,
    1.0 / 40.0,
];

type State = [f64; 4];

#[inline]
fn rhs(metric: &FinslerMetric, z: &State) -> State {
    let x = Point::new(z[0], z[1]);
    let v = Vec2::new(z[2], z[3]);
    let g = metric.spray(&x, &v);
    [z[2], z[3], -2.0 * g[0], -2.0 * g[1]]
}

fn accel(metric: &FinslerMetric, x: &Point, v: &Vec2) -> Vec2 {
    metric.spray(x, v) * -2.0
}

/// Normalizes `v` to unit F-speed at `x`.
pub fn normalize(metric: &FinslerMetric, x: &Point, v: &Vec2) -> Result<Vec2> {
    let f = metric.f(x, v);
    if !(f.is_finite() && f > 0.0) {
        return Err(Error::Input(format!("cannot normalize tangent vector ({}, {})", v[0], v[1])));
    }
    Ok(v / f)
}

/// Integrates from `(x0, v0)` (unit speed) over `length` in direction `dir`
/// (`+1` forward, `-1` backward in the parameter). The observer sees every
/// accepted sample and may stop the run.
pub(crate) fn integrate_raw(
    metric: &FinslerMetric,
    x0: Point,
    v0: Vec2,
    s0: f64,
    length: f64,
    dir: f64,
    tol: f64,
    observer: &mut dyn FnMut(&Sample) -> Flow,
) -> Result<Run> {
    let chart = metric.chart();
    let mut s = s0;
    let s_end = s0 + dir * length;
    let mut z: State = [x0[0], x0[1], v0[0], v0[1]];
    let first = Sample { s, x: x0, v: v0, a: accel(metric, &x0, &v0) };
    let mut samples = vec![first];
    if observer(&first) == Flow::Stop || length <= 0.0 {
        return Ok(Run { samples, truncated: false });
    }
    let mut h = (0.05 * length).min(0.05).max(1e-6 * length);
    let max_steps = 2_000_000;
    let mut steps = 0;
    loop {
        let remaining = (s_end - s) * dir;
        if remaining <= 1e-14 * (1.0 + s_end.abs()) {
            break;
        }
        steps += 1;
        if steps > max_steps {
            return Err(Error::Integration("step budget exhausted".into()));
        }
        let limit = metric.step_limit(&Point::new(z[0], z[1]));
        h = h.min(remaining).min(limit);
        let hs = h * dir;
        let mut k = [[0.0; 4]; 7];
        k[0] = rhs(metric, &z);
        for i in 1..7 {
            let mut zi = z;
            for (j, kj) in k.iter().enumerate().take(i) {
                let a = A[i][j];
                if a != 0.0 {
                    for c in 0..4 {
                        zi[c] += hs * a * kj[c];
                    }
                }
            }
            k[i] = rhs(metric, &zi);
        }
        let mut z5 = z;
        let mut err_acc = 0.0;
        for c in 0..4 {
            let mut d5 = 0.0;
            let mut d4 = 0.0;
            for i in 0..7 {
                d5 += B5[i] * k[i][c];
                d4 += B4[i] * k[i][c];
            }
            z5[c] = z[c] + hs * d5;
            let e = hs * (d5 - d4);
            let sc = tol + tol * z[c].abs().max(z5[c].abs());
            err_acc += (e / sc).powi(2);
        }
        let err = (err_acc / 4.0).sqrt();
        if !z5.iter().all(|v| v.is_finite()) || !err.is_finite() {
            h *= 0.25;
            if h < 1e-14 * (1.0 + s.abs()) {
                return Err(Error::Integration("solution blew up".into()));
            }
            continue;
        }
        if err <= 1.0 {
            let xn = Point::new(z5[0], z5[1]);
            let vraw = Vec2::new(z5[2], z5[3]);
            let f = metric.f(&xn, &vraw);
            if !(f.is_finite() && f > 0.0) {
                return Err(Error::Integration("lost positive speed".into()));
            }
            let vn = vraw / f;
            let sn = s + hs;
            let mut sample = Sample { s: sn, x: xn, v: vn, a: accel(metric, &xn, &vn) };
            if !chart.contains(&xn) {
                let prev = *samples.last().expect("non-empty");
                sample = boundary_crossing(metric, &prev, &sample);
                samples.push(sample);
                observer(&sample);
                return Ok(Run { samples, truncated: true });
            }
            samples.push(sample);
            s = sn;
            z = [xn[0], xn[1], vn[0], vn[1]];
            if observer(&sample) == Flow::Stop {
                break;
            }
            let fac = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
            h *= fac;
        } else {
            h *= (0.9 * err.powf(-0.2)).clamp(0.1, 0.9);
            if h < 1e-14 * (1.0 + s.abs()) {
                return Err(Error::Integration(format!("step size underflow at s = {s}")));
            }
        }
    }
    Ok(Run { samples, truncated: false })
}

fn boundary_crossing(metric: &FinslerMetric, a: &Sample, b: &Sample) -> Sample {
    let chart = metric.chart();
    let (mut lo, mut hi) = (0.0, 1.0);
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        let (x, _) = hermite(a, b, a.s + mid * (b.s - a.s));
        if chart.contains(&x) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let s = a.s + lo * (b.s - a.s);
    let (x, v) = hermite(a, b, s);
    let v = normalize(metric, &x, &v).unwrap_or(v);
    Sample { s, x, v, a: accel(metric, &x, &v) }
}

/// Cubic Hermite position and velocity between two samples.
fn hermite(a: &Sample, b: &Sample, s: f64) -> (Point, Vec2) {
    let dt = b.s - a.s;
    if dt == 0.0 {
        return (a.x, a.v);
    }
    let t = (s - a.s) / dt;
    let t2 = t * t;
    let t3 = t2 * t;
    let h00 = 2.0 * t3 - 3.0 * t2 + 1.0;
    let h10 = t3 - 2.0 * t2 + t;
    let h01 = -2.0 * t3 + 3.0 * t2;
    let h11 = t3 - t2;
    let x = a.x * h00 + a.v * (h10 * dt) + b.x * h01 + b.v * (h11 * dt);
    let v = a.v * h00 + a.a * (h10 * dt) + b.v * h01 + b.a * (h11 * dt);
    (x, v)
}

impl Geodesic {
    pub(crate) fn from_run(metric: &FinslerMetric, mut run: Run, tol: f64, backward: bool) -> Self {
        if backward {
            run.samples.reverse();
        }
        let mut g = Geodesic {
            metric_id: metric.id(),
            chart: metric.chart().clone(),
            samples: run.samples,
            tol,
            truncated: run.truncated,
            warnings: Vec::new(),
        };
        if run.truncated {
            g.warnings.push("geodesic left the chart; result truncated".into());
        }
        g.check_margin(metric.chart().default_margin());
        g
    }

    fn check_margin(&mut self, margin: f64) {
        let near = self.samples.iter().any(|s| self.chart.boundary_distance(&s.x) < margin);
        if near && !self.truncated {
            self.warnings.push(format!("geodesic within margin {margin} of the chart boundary"));
        }
    }

    pub fn metric_id(&self) -> &str {
        &self.metric_id
    }

    pub fn samples(&self) -> &[Sample] {
        &self.samples
    }

    pub fn tol(&self) -> f64 {
        self.tol
    }

    pub fn truncated(&self) -> bool {
        self.truncated
    }

    pub fn warnings(&self) -> &[String] {
        &self.warnings
    }

    pub fn span(&self) -> (f64, f64) {
        (self.samples[0].s, self.samples[self.samples.len() - 1].s)
    }

    pub fn length(&self) -> f64 {
        let (a, b) = self.span();
        b - a
    }

    fn locate(&self, s: f64) -> usize {
        let n = self.samples.len();
        match self.samples.binary_search_by(|p| p.s.partial_cmp(&s).expect("finite parameter")) {
            Ok(i) => i.min(n.saturating_sub(2)),
            Err(0) => 0,
            Err(i) => (i - 1).min(n.saturating_sub(2)),
        }
    }

    /// Position and velocity at parameter `s` (clamped to the span), unwrapped.
    pub fn state_unwrapped(&self, s: f64) -> (Point, Vec2) {
        if self.samples.len() == 1 {
            return (self.samples[0].x, self.samples[0].v);
        }
        let (a, b) = self.span();
        let s = s.clamp(a, b);
        let i = self.locate(s);
        hermite(&self.samples[i], &self.samples[i + 1], s)
    }

    pub fn point_unwrapped(&self, s: f64) -> Point {
        self.state_unwrapped(s).0
    }

    /// Position at `s`, wrapped into the chart.
    pub fn point(&self, s: f64) -> Point {
        self.chart.wrap(&self.point_unwrapped(s))
    }

    pub fn velocity(&self, s: f64) -> Vec2 {
        self.state_unwrapped(s).1
    }

    pub fn start(&self) -> Point {
        self.chart.wrap(&self.samples[0].x)
    }

    pub fn end(&self) -> Point {
        self.chart.wrap(&self.samples[self.samples.len() - 1].x)
    }

    pub fn initial_velocity(&self) -> Vec2 {
        self.samples[0].v
    }

    /// Points at parameter spacing at most `ds`, including both ends.
    pub fn dense(&self, ds: f64) -> Vec<(f64, Point)> {
        let (a, b) = self.span();
        let n = (((b - a) / ds).ceil() as usize).max(1);
        (0..=n)
            .map(|i| {
                let s = a + (b - a) * i as f64 / n as f64;
                (s, self.point(s))
            })
            .collect()
    }

    /// Restriction to `[s0, s1]` (intersected with the span).
    pub fn restrict(&self, s0: f64, s1: f64) -> Geodesic {
        let (a, b) = self.span();
        let (s0, s1) = (s0.max(a), s1.min(b));
        let mk = |s: f64| {
            let (x, v) = self.state_unwrapped(s);
            let i = self.locate(s);
            let j = (i + 1).min(self.samples.len() - 1);
            let (p, q) = (&self.samples[i], &self.samples[j]);
            let w = if q.s > p.s { (s - p.s) / (q.s - p.s) } else { 0.0 };
            Sample { s, x, v, a: p.a * (1.0 - w) + q.a * w }
        };
        let mut samples = vec![mk(s0)];
        samples.extend(self.samples.iter().filter(|p| p.s > s0 && p.s < s1).copied());
        if s1 > s0 {
            samples.push(mk(s1));
        }
        Geodesic { samples, warnings: Vec::new(), truncated: false, ..self.clone() }
    }

    /// Max deviation of `F(x(s), ẋ(s))` from one over the stored samples.
    pub fn speed_residual(&self, metric: &FinslerMetric) -> f64 {
        self.samples.iter().map(|p| (metric.f(&p.x, &p.v) - 1.0).abs()).fold(0.0, f64::max)
    }

    /// Finsler length of the dense curve, by the trapezoid rule on samples;
    /// a consistency check on the arc-length parameter.
    pub fn measured_length(&self, metric: &FinslerMetric) -> f64 {
        self.samples
            .windows(2)
            .map(|w| {
                let ds = w[1].s - w[0].s;
                0.5 * ds * (metric.f(&w[0].x, &w[0].v) + metric.f(&w[1].x, &w[1].v))
            })
            .sum()
    }

    /// CSV rows `s,x,y,dx,dy` (positions wrapped).
    pub fn to_csv(&self) -> String {
        let mut out = String::from("s,x,y,dx,dy\n");
        for p in &self.samples {
            let x = self.chart.wrap(&p.x);
            out.push_str(&format!("{},{},{},{},{}\n", p.s, x[0], x[1], p.v[0], p.v[1]));
        }
        out
    }
}

/// Integrates the unit-speed geodesic with initial point `x0` at parameter
/// `span.0` and direction `v0` (rescaled to unit speed) up to `span.1`.
pub fn integrate(metric: &FinslerMetric, x0: &Point, v0: &Vec2, span: (f64, f64), tol: f64) -> Result<Geodesic> {
    metric.chart().check_point(x0)?;
    if !(span.0.is_finite() && span.1.is_finite() && span.1 >= span.0) {
        return Err(Error::Input(format!("invalid span {span:?}")));
    }
    if !(tol > 0.0) {
        return Err(Error::Input("tolerance must be positive".into()));
    }
    let v = normalize(metric, x0, v0)?;
    let run = integrate_raw(metric, *x0, v, span.0, span.1 - span.0, 1.0, tol, &mut |_| Flow::Continue)?;
    Ok(Geodesic::from_run(metric, run, tol, false))
}

/// `exp_{x0}(v)`: the endpoint of the geodesic with initial velocity `v`.
pub fn exp_map(metric: &FinslerMetric, x0: &Point, v: &Vec2, tol: f64) -> Result<Point> {
    metric.chart().check_point(x0)?;
    if v[0] == 0.0 && v[1] == 0.0 {
        return Ok(*x0);
    }
    let s = metric.evaluate(x0, v)?;
    let g = integrate(metric, x0, v, (0.0, s), tol)?;
    Ok(g.end())
}

/// Extends `g` backward by `delta`, integrating the same geodesic equation
/// with decreasing parameter.
pub fn extend_backward(metric: &FinslerMetric, g: &Geodesic, delta: f64, tol: f64) -> Result<Geodesic> {
    if !(delta > 0.0) {
        return Err(Error::Input(format!("extension length {delta} must be positive")));
    }
    let first = g.samples[0];
    let run = integrate_raw(metric, first.x, first.v, first.s, delta, -1.0, tol, &mut |_| Flow::Continue)?;
    let truncated = run.truncated;
    let mut samples: Vec<Sample> = run.samples.into_iter().rev().collect();
    samples.pop();
    samples.extend_from_slice(&g.samples);
    let mut out = Geodesic { samples, truncated: g.truncated || truncated, ..g.clone() };
    if truncated {
        out.warnings.push("backward extension left the chart; result truncated".into());
    }
    Ok(out)
}

/// Certificate that a ray is minimizing between sampled parameter pairs.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MinimalityCertificate {
    pub parameters: Vec<f64>,
    pub pairs_checked: usize,
    pub max_residual: f64,
    pub threshold: f64,
}

/// A unit-speed geodesic on `[0, T]`; `T` stands in for infinity.
#[derive(Clone, Debug)]
pub struct Ray {
    geodesic: Geodesic,
    horizon: f64,
    certificate: Option<MinimalityCertificate>,
}

impl Ray {
    pub fn new(metric: &FinslerMetric, origin: &Point, direction: &Vec2, horizon: f64, tol: f64) -> Result<Self> {
        if !(horizon > 0.0) {
            return Err(Error::Input(format!("ray horizon {horizon} must be positive")));
        }
        let geodesic = integrate(metric, origin, direction, (0.0, horizon), tol)?;
        if geodesic.truncated() {
            return Err(Error::Domain(format!(
                "ray leaves the chart at t = {:.3} before its horizon {horizon}",
                geodesic.span().1
            )));
        }
        Ok(Ray { geodesic, horizon, certificate: None })
    }

    pub fn geodesic(&self) -> &Geodesic {
        &self.geodesic
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn origin(&self) -> Point {
        self.geodesic.start()
    }

    pub fn point(&self, t: f64) -> Point {
        self.geodesic.point(t)
    }

    pub fn certificate(&self) -> Option<&MinimalityCertificate> {
        self.certificate.as_ref()
    }

    pub fn set_certificate(&mut self, cert: MinimalityCertificate) {
        self.certificate = Some(cert);
    }

    /// The sub-ray `s ↦ γ(t0 + s)`, inheriting the certificate.
    pub fn subray(&self, metric: &FinslerMetric, t0: f64, tol: f64) -> Result<Ray> {
        if !(t0 >= 0.0 && t0 < self.horizon) {
            return Err(Error::Input(format!("sub-ray offset {t0} outside [0, {})", self.horizon)));
        }
        let (x, v) = self.geodesic.state_unwrapped(t0);
        let mut r = Ray::new(metric, &metric.chart().wrap(&x), &v, self.horizon - t0, tol)?;
        r.certificate = self.certificate.clone();
        Ok(r)
    }
}
