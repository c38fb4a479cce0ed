use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand, ValueEnum};
use horocut_core::busemann::{affine_growth_residual, busemann_value, construct_coray, upper_level_set};
use horocut_core::cache::FieldCache;
use horocut_core::catalog::{list_catalog, Experiment};
use horocut_core::config::RunConfig;
use horocut_core::cutlocus::{cut_locus_from, CutLocus};
use horocut_core::distance::{graph_oracle_distance, shoot_distance, ShootOptions};
use horocut_core::eikonal::{eikonal_field, eikonal_solve, EikonalOptions};
use horocut_core::io::{points_csv, svg, write_atomic, write_field, write_json, Figure};
use horocut_core::session::Session;
use horocut_core::verify::{verify, Suite};
use horocut_core::{Direction, Error, Point, ScalarField};
use serde_json::json;

#[derive(Parser)]
#[command(name = "horocut", version, about = "Busemann functions, co-rays and cut loci on Finsler surfaces")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args, Clone)]
struct Common {
    /// Run configuration (TOML, or JSON by extension).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory; overrides the config.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads.
    #[arg(long)]
    jobs: Option<usize>,
}

#[derive(Copy, Clone, ValueEnum)]
enum Method {
    Shooting,
    Eikonal,
    Graph,
}

#[derive(Subcommand)]
enum Command {
    /// Distance d(p, q).
    Dist {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_parser = parse_point, allow_hyphen_values = true)]
        from: Point,
        #[arg(long, value_parser = parse_point, allow_hyphen_values = true)]
        to: Point,
        #[arg(long, value_enum, default_value = "shooting")]
        method: Method,
    },
    /// Busemann field of the experiment ray.
    Busemann {
        #[command(flatten)]
        common: Common,
    },
    /// Co-rays from a point.
    Coray {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_parser = parse_point, allow_hyphen_values = true)]
        at: Point,
    },
    /// Cut locus of the configured set, or of the upper level set {b >= B}.
    Cutlocus {
        #[command(flatten)]
        common: Common,
        #[arg(long, allow_hyphen_values = true)]
        level: Option<f64>,
    },
    /// Co-point set over the level schedule.
    Copoints {
        #[command(flatten)]
        common: Common,
    },
    /// Verification suite; exit status 1 if any check fails.
    Verify {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value = "all")]
        suite: String,
    },
    /// Lists the built-in experiments, or prints one manifest.
    Catalog {
        id: Option<String>,
    },
    /// Writes the resolved manifest and the Busemann field in every format.
    Export {
        #[command(flatten)]
        common: Common,
    },
}

fn parse_point(s: &str) -> Result<Point, String> {
    let v: Vec<f64> = s.split(',').map(|t| t.trim().parse::<f64>()).collect::<Result<_, _>>().map_err(|e| e.to_string())?;
    match v.as_slice() {
        [x, y] => Ok(Point::new(*x, *y)),
        _ => Err(format!("expected X,Y, got '{s}'")),
    }
}

enum Failure {
    Verification,
    Error(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Error(e)
    }
}

fn exit_code(e: &Error) -> u8 {
    match e.root() {
        Error::Horizon(_) | Error::Io(_) | Error::Solver(_) | Error::Integration(_) | Error::Corrupt(_) => 3,
        _ => 2,
    }
}

struct Ctx {
    config: RunConfig,
    experiment: Experiment,
    out: PathBuf,
    cache: FieldCache,
}

impl Ctx {
    fn load(common: &Common) -> Result<Ctx, Error> {
        let path = common.config.as_ref().ok_or_else(|| Error::Config("--config FILE is required".into()))?;
        let config = RunConfig::load(path)?;
        let experiment = config.resolve()?;
        let jobs = common.jobs.or(config.jobs);
        if let Some(n) = jobs {
            if n == 0 {
                return Err(Error::Config("--jobs must be at least 1".into()));
            }
            let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
        }
        let out = common.out.clone().or_else(|| config.out.clone()).unwrap_or_else(|| PathBuf::from("horocut-out"));
        fs::create_dir_all(&out).map_err(|e| Error::Config(format!("output directory {}: {e}", out.display())))?;
        let probe = out.join(".write-test");
        fs::write(&probe, b"").map_err(|e| Error::Config(format!("output directory {} is not writable: {e}", out.display())))?;
        let _ = fs::remove_file(probe);
        let cache = FieldCache::from_env(config.cache.clone().unwrap_or_else(|| PathBuf::from(".horocut-cache")))?;
        Ok(Ctx { config, experiment, out, cache })
    }

    fn path(&self, name: &str) -> PathBuf {
        self.out.join(format!("{}.{name}", self.experiment.id))
    }

    fn text(&self, name: &str, s: &str) -> Result<(), Error> {
        write_atomic(&self.path(name), s.as_bytes())
    }

    fn json<T: serde::Serialize>(&self, name: &str, v: &T) -> Result<(), Error> {
        if self.config.export.json {
            write_json(&self.path(name), v)?;
        }
        Ok(())
    }

    fn csv(&self, name: &str, s: &str) -> Result<(), Error> {
        if self.config.export.csv {
            self.text(name, s)?;
        }
        Ok(())
    }

    fn svg(&self, name: &str, s: &str) -> Result<(), Error> {
        if self.config.export.svg {
            self.text(name, s)?;
        }
        Ok(())
    }
}

/// Evenly spaced interior levels of a field.
fn contour_levels(f: &ScalarField, n: usize) -> Vec<f64> {
    let (lo, hi) = (f.min(), f.max());
    (1..=n).map(|k| lo + (hi - lo) * k as f64 / (n + 1) as f64).collect()
}

fn cmd_dist(common: &Common, p: Point, q: Point, method: Method) -> Result<(), Failure> {
    let ctx = Ctx::load(common)?;
    let lab = ctx.experiment.prepare()?;
    let chart = lab.metric.chart();
    chart.check_point(&p)?;
    chart.check_point(&q)?;
    let (value, error, name, segments) = match method {
        Method::Shooting => {
            let d = shoot_distance(&lab.metric, &p, &q, &ShootOptions::default())?;
            (d.value, d.error, "shooting", d.segments.len())
        }
        Method::Eikonal => {
            let f = eikonal_field(&lab.metric, &horocut_core::ClosedSetSpec::point(p), &lab.grid, Direction::FromSource)?;
            let v = f.interpolate(&q).ok_or_else(|| Error::Domain("q lies outside the grid".into()))?;
            (v, 3.0 * lab.grid.h, "eikonal", 0)
        }
        Method::Graph => {
            let v = graph_oracle_distance(&lab.metric, &p, &q, &lab.grid, 3)?;
            (v, 0.02 * v, "graph-oracle", 0)
        }
    };
    println!("d = {value:.6}  method {name}  error estimate {error:.1e}");
    ctx.json(
        "dist.json",
        &json!({ "experiment": ctx.experiment.id, "p": [p[0], p[1]], "q": [q[0], q[1]], "value": value, "method": name, "error": error, "segments": segments }),
    )?;
    Ok(())
}

fn cmd_busemann(common: &Common) -> Result<(), Failure> {
    let ctx = Ctx::load(common)?;
    let mut s = Session::new(&ctx.experiment, Some(&ctx.cache))?;
    let bus = s.busemann()?.clone();
    let lab = &s.lab;
    let h = lab.grid.h;
    println!("busemann field: {} nodes, h = {h}", lab.grid.len());
    println!("  schedule: {:?}", bus.schedule);
    println!("  max last increment {:.3e} (tol {:.1e})", bus.max_last_increment(), lab.busemann.tol);
    println!("  min truncation increment {:.3e}", bus.min_increment());
    let mut summary = json!({
        "experiment": ctx.experiment.id,
        "h": h,
        "schedule": bus.schedule,
        "max_last_increment": bus.max_last_increment(),
        "min_increment": bus.min_increment(),
        "range": [bus.field.min(), bus.field.max()],
    });
    if let Some(o) = &ctx.experiment.expected.busemann {
        let g = &lab.grid;
        let err = (0..g.len()).map(|k| (bus.field.values[k] - o.value(&g.node_at(k))).abs()).fold(0.0, f64::max);
        println!("  max |b - oracle| = {err:.3e} (5h = {:.3})", 5.0 * h);
        summary["oracle_error"] = json!(err);
    }
    let mut spots = Vec::new();
    for t in [1.0, 5.0, 10.0] {
        let (v, _) = busemann_value(&lab.metric, &lab.ray, &lab.ray.point(t), &lab.busemann)?;
        println!("  b(gamma({t})) = {v:.7}");
        spots.push(json!({ "t": t, "b": v }));
    }
    summary["ray_identity"] = json!(spots);
    write_field(&ctx.path("busemann.hcsf"), &bus.field)?;
    ctx.csv("busemann.csv", &bus.field.to_csv())?;
    ctx.svg(
        "busemann.svg",
        &svg(&lab.grid, &Figure { title: format!("{} level curves", ctx.experiment.id), contours: Some((&bus.field, contour_levels(&bus.field, 12))), graph: None, points: vec![] }),
    )?;
    ctx.json("busemann.json", &summary)?;
    Ok(())
}

fn cmd_coray(common: &Common, at: Point) -> Result<(), Failure> {
    let ctx = Ctx::load(common)?;
    let mut s = Session::new(&ctx.experiment, Some(&ctx.cache))?;
    let bus = s.busemann()?.clone();
    let lab = &s.lab;
    let c = construct_coray(&lab.metric, &lab.ray, &at, &lab.coray)?;
    println!("co-rays from ({}, {}): {:?}, tail change {:.2e}", at[0], at[1], c.verdict, c.tail_change);
    let mut rows = Vec::new();
    for (k, (v, g)) in c.directions.iter().zip(&c.corays).enumerate() {
        let res = affine_growth_residual(g, &bus);
        println!("  direction ({:.6}, {:.6})  affine-growth residual {res:.3e}", v[0], v[1]);
        ctx.csv(&format!("coray{k}.csv"), &g.to_csv())?;
        rows.push(json!({ "direction": [v[0], v[1]], "affine_residual": res }));
    }
    ctx.json("coray.json", &json!({ "base": [at[0], at[1]], "verdict": c.verdict, "tail_change": c.tail_change, "corays": rows }))?;
    Ok(())
}

fn locus_outputs(ctx: &Ctx, grid: &horocut_core::Grid, locus: &CutLocus, field: &ScalarField, levels: Vec<f64>, title: &str) -> Result<(), Error> {
    let pts = locus.points();
    println!("cut locus: {} nodes ({} candidates tested, {} undecided)", pts.len(), locus.candidates, locus.undecided.len());
    ctx.csv("cutlocus.csv", &points_csv(&pts))?;
    ctx.json("cutlocus.json", locus)?;
    ctx.svg("cutlocus.svg", &svg(grid, &Figure { title: title.into(), contours: Some((field, levels)), graph: Some(&locus.graph), points: pts }))
}

fn cmd_cutlocus(common: &Common, level: Option<f64>) -> Result<(), Failure> {
    let ctx = Ctx::load(common)?;
    if let Some(set_cfg) = ctx.config.set.clone() {
        let lab = ctx.experiment.prepare()?;
        let set = set_cfg.build(&lab.grid)?;
        let sol = eikonal_solve(&lab.metric, &set, &lab.grid, Direction::ToTarget, &EikonalOptions::default())?;
        let locus = cut_locus_from(&lab.metric, &set, &sol);
        let field = ScalarField::new(lab.grid.clone(), sol.values.clone(), horocut_core::FieldKind::DistanceToSet, Default::default());
        let levels = contour_levels(&field, 10);
        locus_outputs(&ctx, &lab.grid, &locus, &field, levels, "cut locus of the configured set")?;
        return Ok(());
    }
    let b = level.ok_or_else(|| Error::Config("cutlocus needs --level B or a [set] block in the config".into()))?;
    let mut s = Session::new(&ctx.experiment, Some(&ctx.cache))?;
    let bus = s.busemann()?.clone();
    let lab = &s.lab;
    let set = upper_level_set(&bus, b)?;
    let sol = eikonal_solve(&lab.metric, &set, &lab.grid, Direction::ToTarget, &EikonalOptions::default())?;
    let locus = cut_locus_from(&lab.metric, &set, &sol);
    let levels = contour_levels(&bus.field, 12);
    locus_outputs(&ctx, &lab.grid, &locus, &bus.field, levels, &format!("cut locus of {{b >= {b}}}"))?;
    Ok(())
}

fn cmd_copoints(common: &Common) -> Result<(), Failure> {
    let ctx = Ctx::load(common)?;
    let mut s = Session::new(&ctx.experiment, Some(&ctx.cache))?;
    let bus = s.busemann()?.clone();
    let cp = s.copoints()?.clone();
    let lab = &s.lab;
    let pts = cp.points();
    let multiple = cp.records.iter().filter(|r| r.multiplicity == horocut_core::busemann::Multiplicity::Multiple).count();
    println!("co-points: {} records over {} levels, {multiple} with several co-rays", cp.records.len(), cp.levels.len());
    println!("  graph: {} components, max degree {}", cp.graph.component_count(), cp.graph.max_degree());
    ctx.csv("copoints.csv", &points_csv(&pts))?;
    ctx.json("copoints.json", &cp.records)?;
    ctx.json("copoint-graph.json", &cp.graph)?;
    let levels: Vec<f64> = cp.levels.iter().map(|l| l.level).collect();
    ctx.svg(
        "copoints.svg",
        &svg(&lab.grid, &Figure { title: format!("{} co-points", ctx.experiment.id), contours: Some((&bus.field, levels)), graph: Some(&cp.graph), points: pts }),
    )?;
    Ok(())
}

fn cmd_verify(common: &Common, suite: &str) -> Result<(), Failure> {
    let suite: Suite = suite.parse()?;
    let ctx = Ctx::load(common)?;
    let start = Instant::now();
    let mut s = Session::new(&ctx.experiment, Some(&ctx.cache))?;
    let report = verify(&mut s, suite)?;
    print!("{}", report.table());
    let failed = report.failures().count();
    println!("{}: {} checks, {failed} failed", ctx.experiment.id, report.checks.len());
    ctx.json(&format!("verify-{suite}.json"), &report)?;
    ctx.json(
        &format!("verify-{suite}.meta.json"),
        &json!({ "elapsed_s": start.elapsed().as_secs_f64(), "cache": s.lookups }),
    )?;
    if report.passed() {
        Ok(())
    } else {
        Err(Failure::Verification)
    }
}

fn cmd_catalog(id: Option<&str>) -> Result<(), Failure> {
    match id {
        None => {
            for (id, desc) in list_catalog() {
                println!("{id:<20} {desc}");
            }
        }
        Some(id) => {
            let e = horocut_core::catalog::find(id)?;
            print!("{}", toml_manifest(&e)?);
        }
    }
    Ok(())
}

fn toml_manifest(e: &Experiment) -> Result<String, Error> {
    // Manifests are the config format with the experiment inlined.
    let cfg = RunConfig { experiment: horocut_core::config::ExperimentRef::Inline(Box::new(e.clone())), ..RunConfig::for_experiment(&e.id) };
    horocut_core::config::to_toml(&cfg)
}

fn cmd_export(common: &Common) -> Result<(), Failure> {
    let ctx = Ctx::load(common)?;
    ctx.text("manifest.toml", &toml_manifest(&ctx.experiment)?)?;
    let mut s = Session::new(&ctx.experiment, Some(&ctx.cache))?;
    let bus = s.busemann()?.clone();
    write_field(&ctx.path("busemann.hcsf"), &bus.field)?;
    ctx.csv("busemann.csv", &bus.field.to_csv())?;
    ctx.svg(
        "busemann.svg",
        &svg(&s.lab.grid, &Figure { title: ctx.experiment.id.clone(), contours: Some((&bus.field, contour_levels(&bus.field, 12))), graph: None, points: vec![] }),
    )?;
    println!("exported {} to {}", ctx.experiment.id, ctx.out.display());
    Ok(())
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Dist { common, from, to, method } => cmd_dist(&common, from, to, method),
        Command::Busemann { common } => cmd_busemann(&common),
        Command::Coray { common, at } => cmd_coray(&common, at),
        Command::Cutlocus { common, level } => cmd_cutlocus(&common, level),
        Command::Copoints { common } => cmd_copoints(&common),
        Command::Verify { common, suite } => cmd_verify(&common, &suite),
        Command::Catalog { id } => cmd_catalog(id.as_deref()),
        Command::Export { common } => cmd_export(&common),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Verification) => ExitCode::from(1),
        Err(Failure::Error(e)) => {
            eprintln!("horocut: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
