//! Built-in experiments: metric, chart, grid, ray, level schedule,
//! tolerances and expected outcomes.

use serde::{Deserialize, Serialize};

use crate::busemann::{BusemannOptions, CoRayOptions};
use crate::chart::{Chart, Point, Vec2};
use crate::distance::certify_ray;
use crate::error::{Error, Result};
use crate::geodesic::Ray;
use crate::grid::{Grid, GridSpec};
use crate::metric::{FinslerMetric, MetricSpec};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RaySpec {
    pub origin: [f64; 2],
    /// Initial direction; rescaled to unit speed.
    pub direction: [f64; 2],
    /// Truncation horizon `T` standing in for `[0, ∞)`.
    pub horizon: f64,
}

/// Numerical knobs with their defaults. Thresholds that scale with the grid
/// spacing are given as multiples of `h`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Tolerances {
    /// Convergence threshold on the last truncation increment.
    pub busemann_tol: f64,
    /// First truncation parameter; defaults to the grid extent.
    pub t0: Option<f64>,
    /// Smallest dyadic parameter of the ray certificate.
    pub certify_t_min: f64,
    /// Ray certificate threshold in units of `h`.
    pub certify_h: f64,
    pub coray_cluster_angle: f64,
    pub coray_direction_tol: f64,
    pub coray_length: f64,
    /// Spacing between copoint levels in units of `h`.
    pub level_step_h: f64,
    pub level_count: usize,
    pub seed: u64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            busemann_tol: 1e-3,
            t0: None,
            certify_t_min: 1.0,
            certify_h: 3.0,
            coray_cluster_angle: 0.05,
            coray_direction_tol: 1e-3,
            coray_length: 3.0,
            level_step_h: 10.0,
            level_count: 10,
            seed: 20_240_601,
        }
    }
}

/// Closed-form Busemann function `b(x) = g·x + c`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinearOracle {
    pub gradient: [f64; 2],
    pub offset: f64,
    pub provenance: String,
}

impl LinearOracle {
    pub fn value(&self, x: &Point) -> f64 {
        self.gradient[0] * x[0] + self.gradient[1] * x[1] + self.offset
    }
}

/// Closed-form distance `d(p, q)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DistanceOracle {
    pub p: [f64; 2],
    pub q: [f64; 2],
    pub value: f64,
    pub provenance: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum CoPointExpectation {
    Empty { provenance: String },
    /// Non-empty, symmetric under `x₂ ↦ -x₂`, inside `x₂ ∈ [-band, band]`
    /// and `x₁ < x_max`.
    NearNegativeAxis { band: f64, x_max: f64, provenance: String },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Expected {
    #[serde(default)]
    pub busemann: Option<LinearOracle>,
    #[serde(default)]
    pub distances: Vec<DistanceOracle>,
    pub copoints: CoPointExpectation,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Experiment {
    pub id: String,
    pub description: String,
    pub metric: MetricSpec,
    pub chart: Chart,
    pub grid: GridSpec,
    pub ray: RaySpec,
    /// Explicit copoint levels; when empty, `b_min + k·Δ` is used.
    #[serde(default)]
    pub levels: Vec<f64>,
    #[serde(default)]
    pub tolerances: Tolerances,
    pub expected: Expected,
}

/// Metric, certified ray, grid and options of an experiment.
#[derive(Clone, Debug)]
pub struct Lab {
    pub experiment: Experiment,
    pub metric: FinslerMetric,
    pub ray: Ray,
    pub grid: Grid,
    pub busemann: BusemannOptions,
    pub coray: CoRayOptions,
}

const WIDE: f64 = 50_000.0;

fn window() -> GridSpec {
    GridSpec { x: [-5.0, 5.0], y: [-5.0, 5.0], h: 0.05 }
}

fn ray_along_x(origin: [f64; 2]) -> RaySpec {
    RaySpec { origin, direction: [1.0, 0.0], horizon: 40_960.0 }
}

fn linear(gradient: [f64; 2], offset: f64, provenance: &str) -> Option<LinearOracle> {
    Some(LinearOracle { gradient, offset, provenance: provenance.into() })
}

fn empty(provenance: &str) -> CoPointExpectation {
    CoPointExpectation::Empty { provenance: provenance.into() }
}

/// The built-in experiments, in listing order.
pub fn catalog() -> Vec<Experiment> {
    let zermelo_time = |v: [f64; 2]| {
        let w = [0.5, 0.0];
        let vw = v[0] * w[0] + v[1] * w[1];
        let vv = v[0] * v[0] + v[1] * v[1];
        let k = 1.0 - 0.25;
        (-vw + (vw * vw + k * vv).sqrt()) / k
    };
    vec![
        Experiment {
            id: "euclid-ray".into(),
            description: "Euclidean plane, ray along the x-axis from the origin".into(),
            metric: MetricSpec::Euclidean,
            chart: Chart::rect(WIDE),
            grid: window(),
            ray: ray_along_x([0.0, 0.0]),
            levels: Vec::new(),
            tolerances: Tolerances::default(),
            expected: Expected {
                busemann: linear([1.0, 0.0], 0.0, "closed form: lim t - |x - (t, 0)| = x1"),
                distances: vec![DistanceOracle {
                    p: [0.0, 0.0],
                    q: [3.0, 4.0],
                    value: 5.0,
                    provenance: "Euclidean norm".into(),
                }],
                copoints: empty("b is linear, every point has one co-ray"),
            },
        },
        Experiment {
            id: "zermelo-w05".into(),
            description: "Constant wind W = (0.5, 0), ray downwind from the origin".into(),
            metric: MetricSpec::Zermelo { wind: [0.5, 0.0] },
            chart: Chart::rect(1.5 * WIDE),
            grid: window(),
            ray: ray_along_x([0.0, 0.0]),
            levels: Vec::new(),
            tolerances: Tolerances::default(),
            expected: Expected {
                busemann: linear([2.0 / 3.0, 0.0], 0.0, "travel-time formula expanded as t grows"),
                distances: vec![
                    DistanceOracle {
                        p: [0.0, 0.0],
                        q: [1.0, 0.0],
                        value: zermelo_time([1.0, 0.0]),
                        provenance: "travel-time formula".into(),
                    },
                    DistanceOracle {
                        p: [1.0, 0.0],
                        q: [0.0, 0.0],
                        value: zermelo_time([-1.0, 0.0]),
                        provenance: "travel-time formula".into(),
                    },
                    DistanceOracle {
                        p: [0.0, 0.0],
                        q: [1.0, 1.0],
                        value: zermelo_time([1.0, 1.0]),
                        provenance: "travel-time formula".into(),
                    },
                ],
                copoints: empty("translation-invariant metric, b is linear"),
            },
        },
        Experiment {
            id: "bump-A1".into(),
            description: "Conformal Gaussian bump A = 1, s = 1 at the origin, ray from (3, 0) along +x".into(),
            metric: MetricSpec::ConformalBump { amplitude: 1.0, center: [0.0, 0.0], width: 1.0 },
            chart: Chart::rect(WIDE),
            grid: window(),
            ray: ray_along_x([3.0, 0.0]),
            levels: Vec::new(),
            tolerances: Tolerances::default(),
            expected: Expected {
                busemann: None,
                distances: Vec::new(),
                copoints: CoPointExpectation::NearNegativeAxis {
                    band: 0.1,
                    x_max: 0.0,
                    provenance: "two mirror-image paths around the bump; cross-checked by co-ray multiplicity".into(),
                },
            },
        },
        Experiment {
            id: "cylinder-vertical".into(),
            description: "Flat cylinder with period 2π in x, ray along the axis direction".into(),
            metric: MetricSpec::FlatCylinder,
            chart: Chart {
                x: [-std::f64::consts::PI, std::f64::consts::PI],
                y: [-WIDE, WIDE],
                periodic: [Some(std::f64::consts::TAU), None],
                label: "cylinder".into(),
            },
            grid: GridSpec { x: [-std::f64::consts::PI, std::f64::consts::PI], y: [-5.0, 5.0], h: 0.05 },
            ray: RaySpec { origin: [0.0, 0.0], direction: [0.0, 1.0], horizon: 40_960.0 },
            levels: Vec::new(),
            tolerances: Tolerances::default(),
            expected: Expected {
                busemann: linear([0.0, 1.0], 0.0, "closed form: b = height"),
                distances: vec![DistanceOracle {
                    p: [3.0, 0.0],
                    q: [-3.0, 0.0],
                    value: std::f64::consts::TAU - 6.0,
                    provenance: "short way around the period".into(),
                }],
                copoints: empty("b is the height function"),
            },
        },
        Experiment {
            id: "minkowski-quartic".into(),
            description: "Quartic Minkowski norm blended with Euclidean (blend 0.5), ray along +x".into(),
            metric: MetricSpec::MinkowskiQuartic { blend: 0.5 },
            chart: Chart::rect(WIDE),
            grid: window(),
            ray: ray_along_x([0.0, 0.0]),
            levels: Vec::new(),
            tolerances: Tolerances::default(),
            expected: Expected {
                busemann: linear([1.0, 0.0], 0.0, "b(x) = dF(e1)·x for a norm; dF(e1) = e1 for this blend"),
                distances: vec![DistanceOracle {
                    p: [0.0, 0.0],
                    q: [1.0, 1.0],
                    value: (0.5f64 * 2.0 + 0.5 * 2f64.sqrt()).sqrt(),
                    provenance: "straight lines are geodesics of a norm".into(),
                }],
                copoints: empty("translation-invariant metric, b is linear"),
            },
        },
    ]
}

/// `(id, description)` pairs in catalog order.
pub fn list_catalog() -> Vec<(String, String)> {
    catalog().into_iter().map(|e| (e.id, e.description)).collect()
}

pub fn find(id: &str) -> Result<Experiment> {
    catalog().into_iter().find(|e| e.id == id).ok_or_else(|| {
        let ids: Vec<String> = list_catalog().into_iter().map(|p| p.0).collect();
        Error::Config(format!("unknown experiment '{id}'; known: {}", ids.join(", ")))
    })
}

impl Experiment {
    /// Builds the metric and grid, integrates and certifies the ray.
    pub fn prepare(&self) -> Result<Lab> {
        let ctx = |e: Error| e.context(format!("experiment {}", self.id));
        let metric = FinslerMetric::from_spec(&self.metric, self.chart.clone()).map_err(ctx)?;
        let grid = Grid::from_spec(&self.grid, &self.chart).map_err(ctx)?;
        let t = &self.tolerances;
        if !(t.busemann_tol > 0.0 && t.certify_h > 0.0 && t.coray_length > 0.0 && t.level_step_h > 0.0) {
            return Err(ctx(Error::Config("tolerances must be positive".into())));
        }
        let origin = Point::new(self.ray.origin[0], self.ray.origin[1]);
        let dir = Vec2::new(self.ray.direction[0], self.ray.direction[1]);
        let mut ray = Ray::new(&metric, &origin, &dir, self.ray.horizon, 1e-10).map_err(ctx)?;
        let cert = certify_ray(&metric, &ray, t.certify_t_min, t.certify_h * grid.h).map_err(ctx)?;
        ray.set_certificate(cert);
        let busemann = BusemannOptions::new(t.busemann_tol, t.t0.unwrap_or_else(|| grid.extent()));
        let mut coray = CoRayOptions::new(busemann.clone());
        coray.cluster_angle = t.coray_cluster_angle;
        coray.direction_tol = t.coray_direction_tol;
        coray.s_max = t.coray_length;
        Ok(Lab { experiment: self.clone(), metric, ray, grid, busemann, coray })
    }
}
