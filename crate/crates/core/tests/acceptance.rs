//! Acceptance run: every criterion prints one line; the process exits
//! non-zero when any criterion fails.

use std::time::Instant;

use horocut_core::catalog::{catalog, find};
use horocut_core::config::SetConfig;
use horocut_core::cutlocus::cut_locus;
use horocut_core::session::Session;
use horocut_core::verify::{distance_checks, verify, Check, Suite, VerifyReport};
use horocut_core::{Grid, GridSpec, Point};

const IDS: [&str; 5] = ["euclid-ray", "zermelo-w05", "bump-A1", "cylinder-vertical", "minkowski-quartic"];

struct Line {
    pass: bool,
    text: String,
}

fn line(pass: bool, text: impl Into<String>) -> Line {
    Line { pass, text: text.into() }
}

/// Travel time from the origin to `q` at unit airspeed in the wind `(w, 0)`.
fn travel_time(q: [f64; 2], w: f64) -> f64 {
    let a = 1.0 - w * w;
    let dot = w * q[0];
    ((a * (q[0] * q[0] + q[1] * q[1]) + dot * dot).sqrt() - dot) / a
}

struct Run {
    id: String,
    report: VerifyReport,
    busemann_s: f64,
    total_s: f64,
    oracle_err: Option<f64>,
    min_increment: f64,
}

fn run_experiment(id: &str) -> Result<Run, String> {
    let start = Instant::now();
    let e = find(id).map_err(|e| e.to_string())?;
    let mut s = Session::new(&e, None).map_err(|e| e.to_string())?;
    let bus = s.busemann().map_err(|e| e.to_string())?.clone();
    let busemann_s = start.elapsed().as_secs_f64();
    let slope = match id {
        "euclid-ray" => Some(1.0),
        "zermelo-w05" => Some(2.0 / 3.0),
        _ => None,
    };
    let oracle_err = slope.map(|k| {
        let g = &bus.field.grid;
        (0..g.len()).map(|i| (bus.field.values[i] - k * g.node_at(i)[0]).abs()).fold(0.0, f64::max)
    });
    let report = verify(&mut s, Suite::All).map_err(|e| e.to_string())?;
    Ok(Run {
        id: id.into(),
        report,
        busemann_s,
        total_s: start.elapsed().as_secs_f64(),
        oracle_err,
        min_increment: bus.min_increment(),
    })
}

/// Rows whose name starts with one of `prefixes`, across the given
/// experiments. Passes when every such experiment has rows and all pass.
fn rows(runs: &[Run], ids: &[&str], prefixes: &[&str], exclude: &[&str]) -> Line {
    let mut n = 0;
    let mut failed = Vec::new();
    let mut missing = Vec::new();
    for id in ids {
        let Some(r) = runs.iter().find(|r| r.id == *id) else {
            missing.push(id.to_string());
            continue;
        };
        let sel: Vec<&Check> = r
            .report
            .checks
            .iter()
            .filter(|c| prefixes.iter().any(|p| c.name.starts_with(p)) && !exclude.iter().any(|x| c.name.starts_with(x)))
            .collect();
        if sel.is_empty() {
            missing.push(id.to_string());
        }
        n += sel.len();
        failed.extend(sel.iter().filter(|c| !c.pass).map(|c| format!("{id}: {} = {:.3e} ({})", c.name, c.value, c.detail)));
    }
    let pass = failed.is_empty() && missing.is_empty();
    let mut text = format!("{n} checks over {} experiments", ids.len());
    if !missing.is_empty() {
        text.push_str(&format!("; no rows for {}", missing.join(", ")));
    }
    if !failed.is_empty() {
        text.push_str(&format!("; failed: {}", failed.join("; ")));
    }
    line(pass, text)
}

fn zermelo_distances() -> Line {
    let start = Instant::now();
    let e = find("zermelo-w05").unwrap();
    let wanted = [([0.0, 0.0], [1.0, 0.0], 2.0 / 3.0), ([1.0, 0.0], [0.0, 0.0], 2.0)];
    for (p, q, v) in wanted {
        let o = e.expected.distances.iter().find(|o| o.p == p && o.q == q);
        let t = travel_time([q[0] - p[0], q[1] - p[1]], 0.5);
        if o.is_none_or(|o| (o.value - v).abs() > 1e-12) || (t - v).abs() > 1e-12 {
            return line(false, format!("catalog oracle for {p:?} -> {q:?} is not {v}"));
        }
    }
    let checks = Session::new(&e, None).and_then(|s| distance_checks(&s));
    let secs = start.elapsed().as_secs_f64();
    match checks {
        Ok(c) => {
            let bad: Vec<String> = c.iter().filter(|c| !c.pass).map(|c| format!("{} = {:.3e}", c.name, c.value)).collect();
            let worst_rel = c.iter().filter(|c| c.name.ends_with("shooting")).map(|c| c.value).fold(0.0, f64::max);
            let worst_eik = c.iter().filter(|c| c.name.ends_with("eikonal")).map(|c| c.value).fold(0.0, f64::max);
            line(
                bad.is_empty() && secs < 10.0,
                format!("shooting rel err {worst_rel:.1e}, eikonal err {worst_eik:.1e} (h 0.02), {secs:.1} s{}", if bad.is_empty() { String::new() } else { format!("; failed: {}", bad.join("; ")) }),
            )
        }
        Err(e) => line(false, e.to_string()),
    }
}

fn oracle_fields(runs: &[Run]) -> Line {
    let mut pass = true;
    let mut parts = Vec::new();
    let mut secs = 0.0;
    for id in ["euclid-ray", "zermelo-w05"] {
        let Some(r) = runs.iter().find(|r| r.id == id) else {
            return line(false, format!("{id} did not run"));
        };
        let err = r.oracle_err.unwrap_or(f64::INFINITY);
        let h = r.report.h;
        pass &= err <= 5.0 * h && r.min_increment >= -1e-8;
        secs += r.busemann_s;
        parts.push(format!("{id} max err {err:.2e} (5h {:.2}), min increment {:.1e}", 5.0 * h, r.min_increment));
    }
    pass &= secs < 120.0;
    line(pass, format!("{}; fields in {secs:.1} s", parts.join(", ")))
}

fn classical_loci() -> Line {
    let mut e = find("euclid-ray").unwrap();
    e.grid = GridSpec { x: [-2.0, 2.0], y: [-2.0, 2.0], h: 0.05 };
    let lab = match e.prepare() {
        Ok(l) => l,
        Err(e) => return line(false, e.to_string()),
    };
    let grid: &Grid = &lab.grid;
    let h = grid.h;
    let locus = |cfg: SetConfig| -> Result<Vec<Point>, String> {
        let set = cfg.build(grid).map_err(|e| e.to_string())?;
        Ok(cut_locus(&lab.metric, &set, grid).map_err(|e| e.to_string())?.points())
    };
    let two = locus(SetConfig::Points { points: vec![[-1.0, 0.0], [1.0, 0.0]] });
    let disk = locus(SetConfig::DiskComplement { center: [0.0, 0.0], radius: 1.5 });
    let half = locus(SetConfig::HalfPlane { normal: [1.0, 0.0], offset: 1.0 });
    match (two, disk, half) {
        (Ok(two), Ok(disk), Ok(half)) => {
            let bis = two.iter().map(|p| p[0].abs()).fold(0.0, f64::max);
            let ctr = disk.iter().map(|p| p.norm()).fold(0.0, f64::max);
            let pass = !two.is_empty() && !disk.is_empty() && half.is_empty() && bis <= 2.0 * h && ctr <= 2.0 * h;
            line(
                pass,
                format!(
                    "bisector {} nodes err {bis:.3}, centre {} nodes err {ctr:.3}, half-plane {} nodes (2h {:.2})",
                    two.len(),
                    disk.len(),
                    half.len(),
                    2.0 * h
                ),
            )
        }
        (a, b, c) => line(false, format!("{:?} {:?} {:?}", a.err(), b.err(), c.err())),
    }
}

fn main() {
    assert_eq!(catalog().iter().map(|e| e.id.as_str()).collect::<Vec<_>>(), IDS);
    let mut lines: Vec<(&str, Line)> = Vec::new();
    lines.push(("zermelo closed-form distances", zermelo_distances()));

    let mut runs = Vec::new();
    let mut run_errors = Vec::new();
    for id in IDS {
        match run_experiment(id) {
            Ok(r) => {
                eprintln!("  {id}: verify all in {:.1} s, {} checks, {} failed", r.total_s, r.report.checks.len(), r.report.failures().count());
                runs.push(r);
            }
            Err(e) => run_errors.push(format!("{id}: {e}")),
        }
    }

    let flats = ["euclid-ray", "zermelo-w05", "cylinder-vertical"];
    lines.push(("busemann oracle fields", oracle_fields(&runs)));
    lines.push(("ray identity b(gamma(t)) = t", rows(&runs, &IDS, &["probes.ray-identity"], &[])));
    lines.push(("lipschitz bounds", rows(&runs, &IDS, &["probes.lipschitz"], &[])));
    lines.push(("co-ray and N-segment equivalence", rows(&runs, &IDS, &["thm14."], &["thm14.level-distance"])));
    lines.push(("distance to upper level sets", rows(&runs, &IDS, &["thm14.level-distance"], &[])));
    lines.push(("classical cut loci", classical_loci()));
    lines.push(("bump co-point nesting", rows(&runs, &["bump-A1"], &["thm17.nesting"], &[])));
    let mut nd = rows(&runs, &["bump-A1"], &["thm17.nd-mask"], &[]);
    let flat = rows(&runs, &flats, &["thm17.nd-mask", "thm17.copoints empty"], &[]);
    nd = line(nd.pass && flat.pass, format!("bump: {}; flat: {}", nd.text, flat.text));
    lines.push(("differentiability mask", nd));
    lines.push(("gradient characterization", rows(&runs, &IDS, &["thm17.gradient"], &[])));
    lines.push(("bump local tree and planted cycle", rows(&runs, &["bump-A1"], &["thm111."], &[])));
    lines.push(("bump level contours", rows(&runs, &["bump-A1"], &["thm112."], &[])));
    lines.push(("reverse-metric duality", rows(&runs, &IDS, &["probes.duality"], &[])));
    let total: f64 = runs.iter().map(|r| r.total_s).sum();
    let failures: Vec<String> = runs
        .iter()
        .flat_map(|r| r.report.failures().map(move |c| format!("{}: {}", r.id, c.name)))
        .chain(run_errors.iter().cloned())
        .collect();
    let all_pass = runs.len() == IDS.len() && failures.is_empty() && total < 1800.0;
    let checks: usize = runs.iter().map(|r| r.report.checks.len()).sum();
    let mut text = format!("{checks} checks over {} experiments in {total:.0} s", runs.len());
    if !failures.is_empty() {
        text.push_str(&format!("; failed: {}", failures.join("; ")));
    }
    lines.push(("verify all on the catalog", line(all_pass, text)));

    let mut ok = true;
    for (k, (name, l)) in lines.iter().enumerate() {
        ok &= l.pass;
        println!("criterion {:>2} {}  {name}: {}", k + 1, if l.pass { "PASS" } else { "FAIL" }, l.text);
    }
    if !ok {
        std::process::exit(1);
    }
}
