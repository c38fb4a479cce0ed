//! Finsler metrics on 2-D charts: evaluation, fundamental tensor, geodesic
//! spray and the reverse metric.
//!
//! Catalog metrics carry analytic tensors and sprays. Any other metric falls
//! back to central finite differences of `F²` with step `1e-5·(1+|y|)` for
//! first derivatives (second derivatives use `1e-4·(1+|y|)` to keep roundoff
//! below truncation error).

use std::fmt;
use std::sync::Arc;

use nalgebra::{Matrix2, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::chart::{Chart, Point, Vec2};
use crate::error::{Error, Result};

pub type Evaluator = Arc<dyn Fn(&Point, &Vec2) -> f64 + Send + Sync>;

/// Serializable description of a catalog metric.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum MetricSpec {
    Euclidean,
    /// `F² = (1-blend)|y|² + blend·sqrt(y₁⁴ + y₂⁴)`, strongly convex for `blend < 1`.
    MinkowskiQuartic { blend: f64 },
    /// Navigation metric for a constant wind `W`, `|W| < 1`.
    Zermelo { wind: [f64; 2] },
    /// `e^{φ}|y|` with `φ(x) = A·exp(-|x-c|²/s²)`.
    ConformalBump { amplitude: f64, center: [f64; 2], width: f64 },
    /// Euclidean metric on a chart with periodic x-axis.
    FlatCylinder,
}

#[derive(Clone)]
pub enum MetricKind {
    Euclidean,
    MinkowskiQuartic { blend: f64 },
    Zermelo { wind: Vec2 },
    ConformalBump { amplitude: f64, center: Point, width: f64 },
    Custom { id: String, eval: Evaluator },
}

impl fmt::Debug for MetricKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MetricKind::Euclidean => write!(f, "Euclidean"),
            MetricKind::MinkowskiQuartic { blend } => write!(f, "MinkowskiQuartic({blend})"),
            MetricKind::Zermelo { wind } => write!(f, "Zermelo({}, {})", wind[0], wind[1]),
            MetricKind::ConformalBump { amplitude, center, width } => {
                write!(f, "ConformalBump(A={amplitude}, c=({}, {}), s={width})", center[0], center[1])
            }
            MetricKind::Custom { id, .. } => write!(f, "Custom({id})"),
        }
    }
}

/// A Finsler metric `F(x, y)` on a chart.
#[derive(Clone, Debug)]
pub struct FinslerMetric {
    kind: MetricKind,
    chart: Chart,
    reversed: bool,
    spec: Option<MetricSpec>,
}

/// Result of [`FinslerMetric::validate`].
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ValidationReport {
    pub samples: usize,
    pub max_homogeneity_residual: f64,
    pub min_tensor_eigenvalue: f64,
    pub non_finite: usize,
    pub valid: bool,
}

impl FinslerMetric {
    pub fn euclidean(chart: Chart) -> Self {
        Self::with_kind(MetricKind::Euclidean, chart, Some(MetricSpec::Euclidean))
    }

    pub fn minkowski_quartic(blend: f64, chart: Chart) -> Self {
        Self::with_kind(
            MetricKind::MinkowskiQuartic { blend },
            chart,
            Some(MetricSpec::MinkowskiQuartic { blend }),
        )
    }

    pub fn zermelo(wind: [f64; 2], chart: Chart) -> Self {
        Self::with_kind(
            MetricKind::Zermelo { wind: Vec2::new(wind[0], wind[1]) },
            chart,
            Some(MetricSpec::Zermelo { wind }),
        )
    }

    pub fn conformal_bump(amplitude: f64, center: [f64; 2], width: f64, chart: Chart) -> Self {
        Self::with_kind(
            MetricKind::ConformalBump { amplitude, center: Point::new(center[0], center[1]), width },
            chart,
            Some(MetricSpec::ConformalBump { amplitude, center, width }),
        )
    }

    /// Euclidean metric on a chart whose x-axis is periodic.
    pub fn flat_cylinder(chart: Chart) -> Result<Self> {
        if !chart.is_periodic(0) {
            return Err(Error::Input("flat cylinder needs a periodic x-axis".into()));
        }
        Ok(Self::with_kind(MetricKind::Euclidean, chart, Some(MetricSpec::FlatCylinder)))
    }

    /// A user-supplied metric; derivatives come from finite differences.
    pub fn custom(id: impl Into<String>, chart: Chart, eval: Evaluator) -> Self {
        Self::with_kind(MetricKind::Custom { id: id.into(), eval }, chart, None)
    }

    pub fn from_spec(spec: &MetricSpec, chart: Chart) -> Result<Self> {
        chart.check()?;
        let m = match *spec {
            MetricSpec::Euclidean => Self::euclidean(chart),
            MetricSpec::MinkowskiQuartic { blend } => {
                if !(0.0..1.0).contains(&blend) {
                    return Err(Error::Input(format!("quartic blend {blend} outside [0, 1)")));
                }
                Self::minkowski_quartic(blend, chart)
            }
            MetricSpec::Zermelo { wind } => Self::zermelo(wind, chart),
            MetricSpec::ConformalBump { amplitude, center, width } => {
                if !(width > 0.0) {
                    return Err(Error::Input(format!("bump width {width} must be positive")));
                }
                Self::conformal_bump(amplitude, center, width, chart)
            }
            MetricSpec::FlatCylinder => Self::flat_cylinder(chart)?,
        };
        Ok(m)
    }

    fn with_kind(kind: MetricKind, chart: Chart, spec: Option<MetricSpec>) -> Self {
        FinslerMetric { kind, chart, reversed: false, spec }
    }

    pub fn chart(&self) -> &Chart {
        &self.chart
    }

    pub fn kind(&self) -> &MetricKind {
        &self.kind
    }

    pub fn spec(&self) -> Option<&MetricSpec> {
        self.spec.as_ref()
    }

    pub fn is_reversed(&self) -> bool {
        self.reversed
    }

    /// Stable identifier, including parameters and orientation.
    pub fn id(&self) -> String {
        let base = match (&self.spec, &self.kind) {
            (Some(MetricSpec::FlatCylinder), _) => "flat-cylinder".to_string(),
            (_, MetricKind::Euclidean) => "euclidean".to_string(),
            (_, MetricKind::MinkowskiQuartic { blend }) => format!("minkowski-quartic(blend={blend})"),
            (_, MetricKind::Zermelo { wind }) => format!("zermelo(W=({}, {}))", wind[0], wind[1]),
            (_, MetricKind::ConformalBump { amplitude, center, width }) => format!(
                "conformal-bump(A={amplitude}, c=({}, {}), s={width})",
                center[0], center[1]
            ),
            (_, MetricKind::Custom { id, .. }) => format!("custom({id})"),
        };
        if self.reversed {
            format!("reverse[{base}]")
        } else {
            base
        }
    }

    /// The reverse metric `F̄(x, y) = F(x, -y)`.
    pub fn reverse(&self) -> Self {
        FinslerMetric { reversed: !self.reversed, ..self.clone() }
    }

    /// True when `F` does not depend on the base point.
    pub fn is_translation_invariant(&self) -> bool {
        !matches!(self.kind, MetricKind::ConformalBump { .. } | MetricKind::Custom { .. })
    }

    /// `F(x, y)` with input checks.
    pub fn evaluate(&self, x: &Point, y: &Vec2) -> Result<f64> {
        if !(y[0].is_finite() && y[1].is_finite()) {
            return Err(Error::Input("non-finite tangent vector".into()));
        }
        self.chart.check_point(x)?;
        let v = self.f(x, y);
        if !v.is_finite() || v < 0.0 {
            return Err(Error::MetricValidity(format!("F = {v} at x=({}, {})", x[0], x[1])));
        }
        Ok(v)
    }

    /// `F(x, y)` without checks; `x` is wrapped on periodic axes.
    #[inline]
    pub fn f(&self, x: &Point, y: &Vec2) -> f64 {
        let y = if self.reversed { -*y } else { *y };
        self.f_forward(x, &y)
    }

    #[inline]
    fn f_forward(&self, x: &Point, y: &Vec2) -> f64 {
        match &self.kind {
            MetricKind::Euclidean => y.norm(),
            MetricKind::MinkowskiQuartic { blend } => {
                let q = (y[0].powi(4) + y[1].powi(4)).sqrt();
                ((1.0 - blend) * y.norm_squared() + blend * q).sqrt()
            }
            MetricKind::Zermelo { wind } => {
                let lambda = 1.0 - wind.norm_squared();
                let wy = wind.dot(y);
                ((lambda * y.norm_squared() + wy * wy).sqrt() - wy) / lambda
            }
            MetricKind::ConformalBump { .. } => self.bump_phi(x).exp() * y.norm(),
            MetricKind::Custom { eval, .. } => eval(&self.chart.wrap(x), y),
        }
    }

    fn bump_phi(&self, x: &Point) -> f64 {
        match &self.kind {
            MetricKind::ConformalBump { amplitude, center, width } => {
                let d = self.chart.delta(center, x);
                amplitude * (-d.norm_squared() / (width * width)).exp()
            }
            _ => 0.0,
        }
    }

    fn bump_grad_phi(&self, x: &Point) -> Vec2 {
        match &self.kind {
            MetricKind::ConformalBump { amplitude, center, width } => {
                let d = self.chart.delta(center, x);
                let s2 = width * width;
                let phi = amplitude * (-d.norm_squared() / s2).exp();
                d * (-2.0 * phi / s2)
            }
            _ => Vec2::zeros(),
        }
    }

    /// Lower bound of `F(x, u)` over Euclidean unit vectors `u` and all `x`.
    pub fn min_unit_speed(&self) -> f64 {
        match &self.kind {
            MetricKind::Euclidean => 1.0,
            MetricKind::MinkowskiQuartic { blend } => ((1.0 - blend) + blend / 2f64.sqrt()).sqrt(),
            MetricKind::Zermelo { wind } => 1.0 / (1.0 + wind.norm()),
            MetricKind::ConformalBump { amplitude, .. } => amplitude.min(0.0).exp(),
            MetricKind::Custom { .. } => 0.0,
        }
    }

    /// Upper bound of `F(x, u)` over Euclidean unit vectors `u` and all `x`.
    pub fn max_unit_speed(&self) -> f64 {
        match &self.kind {
            MetricKind::Euclidean | MetricKind::MinkowskiQuartic { .. } => 1.0,
            MetricKind::Zermelo { wind } => 1.0 / (1.0 - wind.norm()),
            MetricKind::ConformalBump { amplitude, .. } => amplitude.max(0.0).exp(),
            MetricKind::Custom { .. } => {
                let x = Point::new(
                    0.5 * (self.chart.x[0] + self.chart.x[1]),
                    0.5 * (self.chart.y[0] + self.chart.y[1]),
                );
                (0..64)
                    .map(|k| self.f(&x, &crate::chart::unit(k as f64 * std::f64::consts::TAU / 64.0)))
                    .fold(0.0, f64::max)
                    * 2.0
            }
        }
    }

    /// Largest integration step at `x` that cannot jump over a feature of
    /// the metric. Unbounded for translation-invariant metrics.
    pub fn step_limit(&self, x: &Point) -> f64 {
        match &self.kind {
            MetricKind::ConformalBump { center, width, .. } => {
                let d = self.chart.delta(center, x).norm();
                (0.25 * width).max((d - 3.0 * width) * self.min_unit_speed())
            }
            MetricKind::Custom { .. } => 0.5,
            _ => f64::INFINITY,
        }
    }

    /// `g_ij(x, y) = ½ ∂²F²/∂y^i∂y^j`, checked for positive definiteness.
    pub fn fundamental_tensor(&self, x: &Point, y: &Vec2) -> Result<Matrix2<f64>> {
        if y.norm() == 0.0 {
            return Err(Error::Input("fundamental tensor needs y != 0".into()));
        }
        let g = self.tensor_unchecked(x, y);
        let eig = SymmetricEigen::new(g).eigenvalues;
        if !(eig.iter().all(|e| e.is_finite() && *e > 0.0)) {
            return Err(Error::MetricValidity(format!(
                "fundamental tensor not positive definite (eigenvalues {}, {})",
                eig[0], eig[1]
            )));
        }
        Ok(g)
    }

    pub(crate) fn tensor_unchecked(&self, x: &Point, y: &Vec2) -> Matrix2<f64> {
        let y = if self.reversed { -*y } else { *y };
        match &self.kind {
            MetricKind::Euclidean => Matrix2::identity(),
            MetricKind::ConformalBump { .. } => Matrix2::identity() * (2.0 * self.bump_phi(x)).exp(),
            MetricKind::MinkowskiQuartic { blend } => {
                let (a, b) = (y[0], y[1]);
                let s = (a.powi(4) + b.powi(4)).sqrt();
                let s3 = s * s * s;
                let h11 = 6.0 * a * a / s - 4.0 * a.powi(6) / s3;
                let h22 = 6.0 * b * b / s - 4.0 * b.powi(6) / s3;
                let h12 = -4.0 * a.powi(3) * b.powi(3) / s3;
                Matrix2::identity() * (1.0 - blend) + Matrix2::new(h11, h12, h12, h22) * (0.5 * blend)
            }
            MetricKind::Zermelo { wind } => {
                // Randers form F = sqrt(yᵀAy) + b·y.
                let lambda = 1.0 - wind.norm_squared();
                let a_mat = (Matrix2::identity() * lambda + wind * wind.transpose()) / (lambda * lambda);
                let b = -*wind / lambda;
                let ay = a_mat * y;
                let alpha = y.dot(&ay).sqrt();
                let f = alpha + b.dot(&y);
                let ai = ay / alpha;
                a_mat * (f / alpha) - ai * ai.transpose() * (f / alpha) + (ai + b) * (ai + b).transpose()
            }
            MetricKind::Custom { .. } => self.tensor_fd_forward(x, &y),
        }
    }

    /// Finite-difference Hessian of `½F²` in `y`.
    pub fn fundamental_tensor_fd(&self, x: &Point, y: &Vec2) -> Matrix2<f64> {
        let y = if self.reversed { -*y } else { *y };
        self.tensor_fd_forward(x, &y)
    }

    fn tensor_fd_forward(&self, x: &Point, y: &Vec2) -> Matrix2<f64> {
        let h = 1e-4 * (1.0 + y.norm());
        let e = |v: Vec2| 0.5 * self.f_forward(x, &v).powi(2);
        let e1 = Vec2::new(h, 0.0);
        let e2 = Vec2::new(0.0, h);
        let c = e(*y);
        let g11 = (e(y + e1) - 2.0 * c + e(y - e1)) / (h * h);
        let g22 = (e(y + e2) - 2.0 * c + e(y - e2)) / (h * h);
        let g12 = (e(y + e1 + e2) - e(y + e1 - e2) - e(y - e1 + e2) + e(y - e1 - e2)) / (4.0 * h * h);
        Matrix2::new(g11, g12, g12, g22)
    }

    /// Spray coefficients `G(x, y)`; geodesics solve `ẍ + 2G(x, ẋ) = 0`.
    pub fn spray_coefficients(&self, x: &Point, y: &Vec2) -> Result<Vec2> {
        if y.norm() == 0.0 {
            return Err(Error::Input("spray needs y != 0".into()));
        }
        let g = self.spray(x, y);
        if !(g[0].is_finite() && g[1].is_finite()) {
            return Err(Error::MetricValidity("non-finite spray".into()));
        }
        Ok(g)
    }

    #[inline]
    pub(crate) fn spray(&self, x: &Point, y: &Vec2) -> Vec2 {
        // The reverse metric has G̃(x, y) = G(x, -y).
        let y = if self.reversed { -*y } else { *y };
        match &self.kind {
            MetricKind::Euclidean | MetricKind::MinkowskiQuartic { .. } | MetricKind::Zermelo { .. } => {
                Vec2::zeros()
            }
            MetricKind::ConformalBump { .. } => {
                let gp = self.bump_grad_phi(x);
                y * gp.dot(&y) - gp * (0.5 * y.norm_squared())
            }
            MetricKind::Custom { .. } => self.spray_fd_forward(x, &y),
        }
    }

    /// Spray from finite differences of `F²`:
    /// `G^i = ¼ g^{il} (∂²F²/∂x^k∂y^l · y^k - ∂F²/∂x^l)`.
    pub fn spray_fd(&self, x: &Point, y: &Vec2) -> Vec2 {
        let y = if self.reversed { -*y } else { *y };
        self.spray_fd_forward(x, &y)
    }

    fn spray_fd_forward(&self, x: &Point, y: &Vec2) -> Vec2 {
        let f2 = |p: &Point, v: &Vec2| self.f_forward(p, v).powi(2);
        let hy = 1e-5 * (1.0 + y.norm());
        let hx = 1e-5 * (1.0 + x.norm());
        let dy = |p: &Point, l: usize| {
            let mut e = Vec2::zeros();
            e[l] = hy;
            (f2(p, &(y + e)) - f2(p, &(y - e))) / (2.0 * hy)
        };
        let yn = y.norm();
        let along = y / yn;
        let mut rhs = Vec2::zeros();
        for l in 0..2 {
            let mixed = (dy(&(x + along * hx), l) - dy(&(x - along * hx), l)) / (2.0 * hx) * yn;
            let mut e = Vec2::zeros();
            e[l] = hx;
            let dx = (f2(&(x + e), y) - f2(&(x - e), y)) / (2.0 * hx);
            rhs[l] = mixed - dx;
        }
        let g = self.tensor_fd_forward(x, y);
        g.try_inverse().map(|gi| gi * rhs * 0.25).unwrap_or_else(|| Vec2::repeat(f64::NAN))
    }

    /// Samples homogeneity and convexity at `sample_count` random points.
    pub fn validate(&self, sample_count: usize) -> ValidationReport {
        let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_f1e1d);
        let mut max_res: f64 = 0.0;
        let mut min_eig = f64::INFINITY;
        let mut non_finite = 0;
        for _ in 0..sample_count {
            let x = Point::new(
                rng.gen_range(self.chart.x[0]..self.chart.x[1]),
                rng.gen_range(self.chart.y[0]..self.chart.y[1]),
            );
            let theta = rng.gen_range(0.0..std::f64::consts::TAU);
            let r = rng.gen_range(0.1..10.0);
            let y = crate::chart::unit(theta) * r;
            let lambda = rng.gen_range(1e-3..=10.0);
            let fy = self.f(&x, &y);
            let fly = self.f(&x, &(y * lambda));
            if !fy.is_finite() || !fly.is_finite() || fy <= 0.0 {
                non_finite += 1;
                continue;
            }
            max_res = max_res.max((fly - lambda * fy).abs() / (lambda * fy));
            let g = self.tensor_unchecked(&x, &y);
            let eig = SymmetricEigen::new(g).eigenvalues;
            if eig.iter().any(|e| !e.is_finite()) {
                non_finite += 1;
                continue;
            }
            min_eig = min_eig.min(eig.min());
        }
        ValidationReport {
            samples: sample_count,
            max_homogeneity_residual: max_res,
            min_tensor_eigenvalue: min_eig,
            non_finite,
            valid: non_finite == 0 && min_eig > 0.0 && max_res < 1e-8,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::{prop_assert, proptest};
    use rand::Rng;

    fn big() -> Chart {
        Chart::rect(100.0)
    }

    fn catalog() -> Vec<FinslerMetric> {
        let tau = std::f64::consts::TAU;
        vec![
            FinslerMetric::euclidean(big()),
            FinslerMetric::minkowski_quartic(0.5, big()),
            FinslerMetric::zermelo([0.5, 0.0], big()),
            FinslerMetric::zermelo([0.3, -0.4], big()),
            FinslerMetric::conformal_bump(1.0, [0.0, 0.0], 1.0, big()),
            FinslerMetric::flat_cylinder(
                Chart::new([-tau / 2.0, tau / 2.0], [-100.0, 100.0], [true, false], "cyl").unwrap(),
            )
            .unwrap(),
        ]
    }

    #[test]
    fn evaluate_examples() {
        let e = FinslerMetric::euclidean(big());
        assert_eq!(e.evaluate(&Point::zeros(), &Vec2::new(3.0, 4.0)).unwrap(), 5.0);
        let z = FinslerMetric::zermelo([0.5, 0.0], big());
        let v = z.evaluate(&Point::zeros(), &Vec2::new(1.0, 0.0)).unwrap();
        assert!((v - 2.0 / 3.0).abs() < 1e-15);
        // |y/F - W| = 1 characterizes the navigation metric.
        let y = Vec2::new(0.3, 0.7);
        let f = z.f(&Point::zeros(), &y);
        assert!(((y / f) - Vec2::new(0.5, 0.0)).norm() - 1.0 < 1e-12);
    }

    #[test]
    fn evaluate_errors() {
        let e = FinslerMetric::euclidean(Chart::rect(1.0));
        assert!(matches!(e.evaluate(&Point::new(2.0, 0.0), &Vec2::new(1.0, 0.0)), Err(Error::Domain(_))));
        assert!(matches!(e.evaluate(&Point::zeros(), &Vec2::new(f64::NAN, 0.0)), Err(Error::Input(_))));
        assert!(matches!(e.evaluate(&Point::new(f64::INFINITY, 0.0), &Vec2::new(1.0, 0.0)), Err(Error::Input(_))));
    }

    #[test]
    fn tensor_examples() {
        let e = FinslerMetric::euclidean(big());
        assert_eq!(e.fundamental_tensor(&Point::new(1.0, 2.0), &Vec2::new(0.3, 0.1)).unwrap(), Matrix2::identity());
        // φ(0) = 1 for an amplitude-one bump centred at the origin.
        let b = FinslerMetric::conformal_bump(1.0, [0.0, 0.0], 1.0, big());
        let g = b.fundamental_tensor(&Point::zeros(), &Vec2::new(1.0, 2.0)).unwrap();
        assert!((g - Matrix2::identity() * 1f64.exp().powi(2)).norm() < 1e-12);
    }

    #[test]
    fn analytic_tensors_match_finite_differences() {
        let x = Point::new(0.4, -0.3);
        for m in catalog() {
            for y in [Vec2::new(1.0, 0.0), Vec2::new(-0.3, 0.8), Vec2::new(2.0, -1.5)] {
                let g = m.fundamental_tensor(&x, &y).unwrap();
                let fd = m.fundamental_tensor_fd(&x, &y);
                assert!((g - fd).norm() < 1e-6 * g.norm(), "{}: {g} vs {fd}", m.id());
                let r = m.reverse();
                let gr = r.fundamental_tensor(&x, &y).unwrap();
                assert!((gr - r.fundamental_tensor_fd(&x, &y)).norm() < 1e-6 * gr.norm());
            }
        }
    }

    #[test]
    fn analytic_spray_matches_finite_differences() {
        let m = FinslerMetric::conformal_bump(1.0, [0.2, -0.1], 0.8, big());
        for (x, y) in [
            (Point::new(0.5, 0.3), Vec2::new(1.0, 0.2)),
            (Point::new(-0.7, 0.9), Vec2::new(-0.4, 1.3)),
        ] {
            let g = m.spray_coefficients(&x, &y).unwrap();
            let fd = m.spray_fd(&x, &y);
            assert!((g - fd).norm() < 1e-5 * (1.0 + g.norm()), "{g} vs {fd}");
        }
        let e = FinslerMetric::euclidean(big());
        assert_eq!(e.spray_coefficients(&Point::zeros(), &Vec2::new(1.0, 1.0)).unwrap(), Vec2::zeros());
    }

    #[test]
    fn custom_metric_uses_finite_differences() {
        let bump = FinslerMetric::conformal_bump(0.7, [0.0, 0.0], 1.0, big());
        let inner = bump.clone();
        let custom = FinslerMetric::custom("bump-copy", big(), Arc::new(move |x, y| inner.f(x, y)));
        let x = Point::new(0.3, 0.6);
        let y = Vec2::new(0.9, -0.2);
        assert!((custom.spray(&x, &y) - bump.spray(&x, &y)).norm() < 1e-5);
        assert!((custom.tensor_unchecked(&x, &y) - bump.tensor_unchecked(&x, &y)).norm() < 1e-6);
    }

    #[test]
    fn reverse_examples() {
        let z = FinslerMetric::zermelo([0.5, 0.0], big());
        let r = z.reverse();
        assert!((r.f(&Point::zeros(), &Vec2::new(1.0, 0.0)) - 2.0).abs() < 1e-15);
        let e = FinslerMetric::euclidean(big());
        let er = e.reverse();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..100 {
            let x = Point::new(rng.gen_range(-5.0..5.0), rng.gen_range(-5.0..5.0));
            let y = Vec2::new(rng.gen_range(-5.0..5.0), rng.gen_range(-5.0..5.0));
            assert_eq!(e.f(&x, &y), er.f(&x, &y));
            for m in catalog() {
                assert_eq!(m.reverse().reverse().f(&x, &y), m.f(&x, &y));
                assert_eq!(m.reverse().f(&x, &y), m.f(&x, &(-y)));
            }
        }
    }

    #[test]
    fn non_symmetric_witness() {
        let z = FinslerMetric::zermelo([0.5, 0.0], big());
        let y = Vec2::new(1.0, 0.3);
        assert!((z.f(&Point::zeros(), &y) - z.f(&Point::zeros(), &(-y))).abs() > 0.1);
    }

    #[test]
    fn validate_examples() {
        let rep = FinslerMetric::euclidean(big()).validate(1000);
        assert!(rep.valid && rep.max_homogeneity_residual < 1e-12);
        assert!(FinslerMetric::zermelo([0.5, 0.0], big()).validate(1000).valid);
        assert!(!FinslerMetric::zermelo([1.2, 0.0], big()).validate(1000).valid);
        for m in catalog() {
            let rep = m.validate(1000);
            assert!(rep.valid, "{}: {rep:?}", m.id());
            assert!(rep.min_tensor_eigenvalue > 0.0);
        }
    }

    #[test]
    fn speed_bounds_hold() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for m in catalog() {
            for _ in 0..500 {
                let x = Point::new(rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0));
                let u = crate::chart::unit(rng.gen_range(0.0..std::f64::consts::TAU));
                let f = m.f(&x, &u);
                assert!(f >= m.min_unit_speed() - 1e-12 && f <= m.max_unit_speed() + 1e-12, "{}", m.id());
            }
        }
    }

    proptest! {
        #[test]
        fn homogeneity(x0 in -5.0..5.0f64, x1 in -5.0..5.0f64, th in 0.0..std::f64::consts::TAU,
                       r in 0.01..10.0f64, lambda in 1e-3..10.0f64, which in 0usize..6) {
            let m = &catalog()[which];
            let x = Point::new(x0, x1);
            let y = crate::chart::unit(th) * r;
            let f = m.f(&x, &y);
            prop_assert!((m.f(&x, &(y * lambda)) - lambda * f).abs() <= 1e-10 * lambda * f);
            prop_assert!((m.f(&x, &(y * 2.0)) - 2.0 * f).abs() <= 1e-12 * f.max(1.0));
            let g = m.spray(&x, &y);
            prop_assert!((m.spray(&x, &(y * 2.0)) - g * 4.0).norm() <= 1e-10 * (1.0 + g.norm()));
            let t = m.tensor_unchecked(&x, &y);
            prop_assert!((m.tensor_unchecked(&x, &(y * lambda)) - t).norm() <= 1e-9 * t.norm());
        }
    }
}
