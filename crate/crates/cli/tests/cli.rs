use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

const P: &str = r#"{"shape":[2],"blocks":[[[[1,0],[0,0]],[[0,0],[0,0]]]]}"#;
const Q: &str = r#"{"shape":[2],"blocks":[[[[0.5,0],[0.5,0]],[[0.5,0],[0.5,0]]]]}"#;
const R: &str = r#"{"shape":[2],"blocks":[[[[0,0],[0,0]],[[0,0],[1,0]]]]}"#;

fn projlat(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_projlat"))
        .args(args)
        .current_dir(dir)
        .env_remove("PROJLAT_TOL_EQ")
        .env_remove("PROJLAT_TOL_RANK")
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

/// Every entry of an operator's blocks, in order.
fn numbers(json: &[u8]) -> Vec<f64> {
    let v: serde_json::Value = serde_json::from_slice(json).unwrap();
    fn walk(v: &serde_json::Value, out: &mut Vec<f64>) {
        match v {
            serde_json::Value::Array(xs) => xs.iter().for_each(|x| walk(x, out)),
            serde_json::Value::Number(n) => out.push(n.as_f64().unwrap()),
            _ => {}
        }
    }
    let mut out = Vec::new();
    walk(&v["blocks"], &mut out);
    out
}

fn setup() -> TempDir {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("p.json"), P).unwrap();
    fs::write(dir.path().join("q.json"), Q).unwrap();
    fs::write(dir.path().join("r.json"), R).unwrap();
    dir
}

fn value(out: &str, key: &str) -> String {
    let prefix = format!("{key}=");
    out.lines().find_map(|l| l.strip_prefix(&prefix)).unwrap().to_string()
}

#[test]
fn halmos_quarter_turn() {
    let dir = setup();
    let o = projlat(dir.path(), &["halmos", "p.json", "q.json"]);
    assert_eq!(o.status.code(), Some(0));
    let out = stdout(&o);
    let angles: Vec<f64> = serde_json::from_str(&value(&out, "angles")).unwrap();
    assert_eq!(angles.len(), 1);
    assert!((angles[0] - std::f64::consts::FRAC_PI_4).abs() < 1e-12);
    let d: f64 = value(&out, "distance").parse().unwrap();
    assert!((d - 0.5f64.sqrt()).abs() < 1e-12);
    assert_eq!(out.lines().last(), Some("PASS"));
    for key in ["e1", "e2", "v", "a", "b", "p_and_q"] {
        serde_json::from_str::<serde_json::Value>(&value(&out, key)).unwrap();
    }
}

#[test]
fn output_is_deterministic() {
    let dir = setup();
    let a = projlat(dir.path(), &["midpoint", "p.json", "r.json", "--sample", "3", "--seed", "4"]);
    let b = projlat(dir.path(), &["midpoint", "p.json", "r.json", "--sample", "3", "--seed", "4"]);
    assert_eq!(a.status.code(), Some(0));
    assert_eq!(a.stdout, b.stdout);
    let pts: Vec<serde_json::Value> = serde_json::from_slice(&a.stdout).unwrap();
    assert_eq!(pts.len(), 3);
}

#[test]
fn triangle_and_sharp() {
    let dir = setup();
    let o = projlat(dir.path(), &["triangle", "p.json", "r.json"]);
    assert_eq!((o.status.code(), stdout(&o).trim()), (Some(0), "1"));
    let o = projlat(dir.path(), &["triangle", "p.json", "q.json"]);
    assert_eq!((o.status.code(), stdout(&o).trim()), (Some(0), "none"));
    let o = projlat(dir.path(), &["sharp", "p.json", "r.json"]);
    assert_eq!(stdout(&o).trim(), "false");
    let o = projlat(dir.path(), &["sharp", "p.json", "q.json"]);
    assert_eq!(stdout(&o).trim(), "false");
    let unit = |k: usize| {
        let rows: Vec<String> = (0..3)
            .map(|i| {
                let row: Vec<&str> = (0..3).map(|j| if i == k && j == k { "[1,0]" } else { "[0,0]" }).collect();
                format!("[{}]", row.join(","))
            })
            .collect();
        format!(r#"{{"shape":[3],"blocks":[[{}]]}}"#, rows.join(","))
    };
    fs::write(dir.path().join("e0.json"), unit(0)).unwrap();
    fs::write(dir.path().join("e1.json"), unit(1)).unwrap();
    let o = projlat(dir.path(), &["sharp", "e0.json", "e1.json"]);
    assert_eq!((o.status.code(), stdout(&o).trim()), (Some(0), "true"));
}

#[test]
fn midpoint_and_geodesic() {
    let dir = setup();
    // u must be a unitary of the corner pMp, here the phase i
    let u = r#"{"shape":[2],"blocks":[[[[0,1],[0,0]],[[0,0],[0,0]]]]}"#;
    fs::write(dir.path().join("u.json"), u).unwrap();
    let o = projlat(dir.path(), &["midpoint", "p.json", "r.json", "--unitary", "u.json"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    fs::write(dir.path().join("m.json"), &o.stdout).unwrap();

    let pi = std::f64::consts::PI;
    for (theta, end) in [(0.0, P), (pi / 2.0, R)] {
        let o = projlat(dir.path(), &["geodesic", "p.json", "r.json", "m.json", "--theta", &theta.to_string()]);
        assert_eq!(o.status.code(), Some(0));
        let got: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
        let want: serde_json::Value = serde_json::from_str(end).unwrap();
        for (x, y) in numbers(got.to_string().as_bytes()).iter().zip(numbers(want.to_string().as_bytes())) {
            assert!((x - y).abs() < 1e-9);
        }
    }
    let o = projlat(dir.path(), &["geodesic", "p.json", "r.json", "q.json", "--theta", "0.5"]);
    assert_eq!(o.status.code(), Some(0));
    let o = projlat(dir.path(), &["geodesic", "p.json", "r.json", "p.json", "--theta", "0.5"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn gen_round_trips() {
    let dir = setup();
    let o = projlat(dir.path(), &["gen", "--shape", "2,3", "--ranks", "1,2", "--seed", "8"]);
    assert_eq!(o.status.code(), Some(0));
    fs::write(dir.path().join("g.json"), &o.stdout).unwrap();
    let o = projlat(dir.path(), &["halmos", "g.json", "g.json"]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(value(&stdout(&o), "distance"), "0.0");
}

#[test]
fn factorize_from_recorded_probes() {
    let dir = setup();
    let o = projlat(dir.path(), &["probes", "--builtin", "random:3,2/1,1@11", "--dir", "probes"]);
    assert_eq!(o.status.code(), Some(0));
    let o = projlat(dir.path(), &["factorize", "--oracle-dir", "probes"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    fs::write(dir.path().join("f.json"), &o.stdout).unwrap();

    let o = projlat(dir.path(), &["verify", "f.json", "--oracle-dir", "probes"]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(stdout(&o).lines().last(), Some("PASS"));
    let o = projlat(dir.path(), &["verify", "f.json", "--builtin", "random:3,2/1,1@11", "--trials", "25"]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    let o = projlat(dir.path(), &["verify", "f.json", "--builtin", "random:3,2/1,1@12", "--trials", "25"]);
    assert_eq!(o.status.code(), Some(3));
    assert_eq!(stdout(&o).lines().last(), Some("FAIL"));
}

#[test]
fn extend_needs_its_probes() {
    let dir = setup();
    let o = projlat(dir.path(), &["gen", "--shape", "4", "--ranks", "2", "--seed", "3"]);
    fs::write(dir.path().join("e.json"), &o.stdout).unwrap();

    projlat(dir.path(), &["probes", "--builtin", "transpose:4/1", "--dir", "plain"]);
    let o = projlat(dir.path(), &["extend", "e.json", "--oracle-dir", "plain"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("probe not available"));

    projlat(dir.path(), &["probes", "--builtin", "transpose:4/1", "--dir", "full", "--extend", "e.json"]);
    let from_dir = projlat(dir.path(), &["extend", "e.json", "--oracle-dir", "full"]);
    let direct = projlat(dir.path(), &["extend", "e.json", "--builtin", "transpose:4/1"]);
    assert_eq!(from_dir.status.code(), Some(0));
    assert_eq!(direct.status.code(), Some(0));
    let (a, b) = (numbers(&from_dir.stdout), numbers(&direct.stdout));
    assert_eq!(a.len(), b.len());
    assert!(a.iter().zip(&b).all(|(x, y)| (x - y).abs() < 1e-9));
}

#[test]
fn exit_codes() {
    let dir = setup();
    fs::write(dir.path().join("bad.json"), r#"{"shape":[2],"blocks":[[[[1,0],[1,0]],[[0,0],[0,0]]]]}"#).unwrap();
    fs::write(dir.path().join("junk.json"), "not json").unwrap();
    assert_eq!(projlat(dir.path(), &["halmos", "bad.json", "q.json"]).status.code(), Some(2));
    assert_eq!(projlat(dir.path(), &["halmos", "junk.json", "q.json"]).status.code(), Some(2));
    assert_eq!(projlat(dir.path(), &["halmos", "missing.json", "q.json"]).status.code(), Some(2));
    assert_eq!(projlat(dir.path(), &["frobnicate"]).status.code(), Some(2));
    assert_eq!(projlat(dir.path(), &["factorize", "--builtin", "odd:3/1"]).status.code(), Some(2));
    let o = projlat(dir.path(), &["factorize", "--builtin", "identity:3,2/1,1", "--budget", "2"]);
    assert_eq!(o.status.code(), Some(4));
    let o = Command::new(env!("CARGO_BIN_EXE_projlat"))
        .args(["halmos", "p.json", "q.json"])
        .current_dir(dir.path())
        .env("PROJLAT_TOL_EQ", "-1")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn selftest_small() {
    let dir = setup();
    let o = projlat(dir.path(), &["selftest", "--trials", "3", "--seed", "5"]);
    let out = stdout(&o);
    assert_eq!(out.lines().filter(|l| l.starts_with("criterion")).count(), 8);
    assert_eq!(o.status.code(), Some(0), "{out}");
    assert_eq!(out.lines().last(), Some("PASS"));
}
