use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

struct Env {
    dir: tempfile::TempDir,
}

impl Env {
    fn new() -> Self {
        Env { dir: tempfile::tempdir().unwrap() }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn write(&self, name: &str, text: &str) -> PathBuf {
        let p = self.path(name);
        fs::write(&p, text).unwrap();
        p
    }

    fn run(&self, args: &[&str]) -> Output {
        Command::new(env!("CARGO_BIN_EXE_horocut"))
            .args(args)
            .current_dir(self.dir.path())
            .env("HOROCUT_CACHE", self.path("cache"))
            .output()
            .unwrap()
    }
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

const SMALL_GRID: &str = "[grid]\nx = [-2.0, 2.0]\ny = [-2.0, 2.0]\nh = 0.1\n";

fn small(id: &str) -> String {
    format!("experiment = \"{id}\"\n{SMALL_GRID}")
}

#[test]
fn dist_closed_forms() {
    let env = Env::new();
    env.write("z.toml", "experiment = \"zermelo-w05\"\n");
    env.write("e.toml", "experiment = \"euclid-ray\"\n");
    let o = env.run(&["dist", "--config", "z.toml", "--from", "0,0", "--to", "1,0"]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("d = 0.666667"), "{}", stdout(&o));
    let o = env.run(&["dist", "--config", "e.toml", "--from", "0,0", "--to", "3,4"]);
    assert!(stdout(&o).contains("d = 5.000000"));
    let report: serde_json::Value = serde_json::from_str(&fs::read_to_string(env.path("horocut-out/euclid-ray.dist.json")).unwrap()).unwrap();
    assert_eq!(report["method"], "shooting");
}

#[test]
fn point_outside_chart_is_a_domain_error() {
    let env = Env::new();
    env.write("e.toml", "experiment = \"euclid-ray\"\n");
    let o = env.run(&["dist", "--config", "e.toml", "--from", "0,0", "--to", "1e9,0"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("domain error"), "{}", stderr(&o));
}

#[test]
fn bad_inputs_exit_2() {
    let env = Env::new();
    env.write("e.toml", "experiment = \"euclid-ray\"\n");
    env.write("bad.toml", "experiment = \"nope\"\n");
    assert_eq!(env.run(&["verify", "--config", "e.toml", "--suite", "thm99"]).status.code(), Some(2));
    assert_eq!(env.run(&["busemann", "--config", "bad.toml"]).status.code(), Some(2));
    assert_eq!(env.run(&["busemann", "--config", "missing.toml"]).status.code(), Some(2));
    assert_eq!(env.run(&["cutlocus", "--config", "e.toml"]).status.code(), Some(2));
}

#[test]
fn catalog_lists_all_experiments() {
    let env = Env::new();
    let o = env.run(&["catalog"]);
    let s = stdout(&o);
    for id in ["euclid-ray", "zermelo-w05", "bump-A1", "cylinder-vertical", "minkowski-quartic"] {
        assert!(s.contains(id), "{s}");
    }
    let m = env.run(&["catalog", "bump-A1"]);
    assert!(stdout(&m).contains("conformal-bump"));
}

fn manifest_with(env: &Env, id: &str, edit: impl Fn(String) -> String) -> PathBuf {
    let m = stdout(&env.run(&["catalog", id]));
    env.write("inline.toml", &format!("{}{SMALL_GRID}", edit(m)))
}

#[test]
fn short_horizon_exits_3_with_hint() {
    let env = Env::new();
    let cfg = manifest_with(&env, "euclid-ray", |m| m.replace("horizon = 40960.0", "horizon = 40.0"));
    let o = env.run(&["busemann", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
    assert!(stderr(&o).contains("extend ray horizon"));
}

#[test]
fn busemann_summary_files_and_cache() {
    let env = Env::new();
    env.write("e.toml", &small("euclid-ray"));
    let o = env.run(&["busemann", "--config", "e.toml", "--out", "a"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let s = stdout(&o);
    assert!(s.contains("max |b - oracle|"), "{s}");
    assert!(s.contains("b(gamma(5)) = 5.0000000"), "{s}");
    for f in ["busemann.hcsf", "busemann.csv", "busemann.svg", "busemann.json"] {
        assert!(Path::new(&env.path("a").join(format!("euclid-ray.{f}"))).exists(), "{f}");
    }
    assert!(fs::read_dir(env.path("cache")).unwrap().count() > 0);
    let o2 = env.run(&["busemann", "--config", "e.toml", "--out", "b"]);
    assert!(o2.status.success());
    let read = |d: &str, f: &str| fs::read(env.path(d).join(format!("euclid-ray.{f}"))).unwrap();
    assert_eq!(read("a", "busemann.json"), read("b", "busemann.json"));
    assert_eq!(read("a", "busemann.hcsf"), read("b", "busemann.hcsf"));
}

#[test]
fn damaged_cache_entries_are_recomputed() {
    let env = Env::new();
    env.write("e.toml", &small("euclid-ray"));
    assert!(env.run(&["busemann", "--config", "e.toml", "--out", "a"]).status.success());
    for entry in fs::read_dir(env.path("cache")).unwrap() {
        let p = entry.unwrap().path();
        if p.extension().is_some_and(|e| e == "hcsf") {
            let b = fs::read(&p).unwrap();
            fs::write(&p, &b[..b.len() / 3]).unwrap();
        }
    }
    let o = env.run(&["busemann", "--config", "e.toml", "--out", "b"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let read = |d: &str| fs::read(env.path(d).join("euclid-ray.busemann.hcsf")).unwrap();
    assert_eq!(read("a"), read("b"));
}

#[test]
fn euclidean_level_cut_locus_is_empty() {
    let env = Env::new();
    env.write("e.toml", &small("euclid-ray"));
    let o = env.run(&["cutlocus", "--config", "e.toml", "--level", "0.5"]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("cut locus: 0 nodes"), "{}", stdout(&o));
    let svg = fs::read_to_string(env.path("horocut-out/euclid-ray.cutlocus.svg")).unwrap();
    assert!(svg.contains("<path"));
    assert!(!svg.contains("<line"));
    assert_eq!(fs::read_to_string(env.path("horocut-out/euclid-ray.cutlocus.csv")).unwrap(), "x,y\n");
}

#[test]
fn two_point_set_gives_bisector() {
    let env = Env::new();
    env.write("two.toml", &format!("{}[set]\nkind = \"points\"\npoints = [[-1.0, 0.0], [1.0, 0.0]]\n", small("euclid-ray")));
    let o = env.run(&["cutlocus", "--config", "two.toml"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = fs::read_to_string(env.path("horocut-out/euclid-ray.cutlocus.csv")).unwrap();
    let xs: Vec<f64> = csv.lines().skip(1).map(|l| l.split(',').next().unwrap().parse().unwrap()).collect();
    assert!(xs.len() > 20);
    assert!(xs.iter().all(|x| x.abs() <= 0.2 + 1e-9), "{xs:?}");
    assert!(fs::read_to_string(env.path("horocut-out/euclid-ray.cutlocus.svg")).unwrap().contains("<line"));
}

#[test]
fn coray_and_export() {
    let env = Env::new();
    env.write("e.toml", &small("euclid-ray"));
    let o = env.run(&["coray", "--config", "e.toml", "--at", "-1,0.5"]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("Unique"), "{}", stdout(&o));
    assert!(env.path("horocut-out/euclid-ray.coray0.csv").exists());
    let o = env.run(&["export", "--config", "e.toml", "--out", "x"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let manifest = env.path("x/euclid-ray.manifest.toml");
    let o = env.run(&["dist", "--config", manifest.to_str().unwrap(), "--from", "0,0", "--to", "0,2"]);
    assert!(stdout(&o).contains("d = 2.000000"), "{}", stderr(&o));
}

#[test]
fn verify_passes_and_reports_deterministically() {
    let env = Env::new();
    env.write("e.toml", &small("euclid-ray"));
    let o = env.run(&["verify", "--config", "e.toml", "--suite", "thm14", "--out", "a", "--jobs", "1"]);
    assert!(o.status.success(), "{}{}", stdout(&o), stderr(&o));
    assert!(stdout(&o).contains("thm14.disagreements"));
    let o = env.run(&["verify", "--config", "e.toml", "--suite", "thm14", "--out", "b"]);
    assert!(o.status.success());
    let read = |d: &str| fs::read(env.path(d).join("euclid-ray.verify-thm14.json")).unwrap();
    assert_eq!(read("a"), read("b"));
}

#[test]
fn failed_check_exits_1() {
    let env = Env::new();
    let cfg = manifest_with(&env, "euclid-ray", |m| m.replace("gradient = [1.0, 0.0]", "gradient = [0.5, 0.0]"));
    let o = env.run(&["verify", "--config", cfg.to_str().unwrap(), "--suite", "probes"]);
    assert_eq!(o.status.code(), Some(1), "{}{}", stdout(&o), stderr(&o));
    assert!(stdout(&o).contains("FAIL"));
}

#[test]
fn json_configs_are_accepted() {
    let env = Env::new();
    env.write("z.json", r#"{ "experiment": "zermelo-w05", "export": { "json": false } }"#);
    let o = env.run(&["dist", "--config", "z.json", "--from", "1,0", "--to", "0,0"]);
    assert!(stdout(&o).contains("d = 2.000000"), "{}", stderr(&o));
    assert!(!env.path("horocut-out/zermelo-w05.dist.json").exists());
}
