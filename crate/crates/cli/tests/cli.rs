use std::fs;
use std::path::Path;
use std::process::Command;

use serde_json::Value;
use tempfile::TempDir;

const FLAT: &str = r#"{"kappa":0,"warp":{"family":"Const","c":0}}"#;
const EXP: &str = r#"{"kappa":0,"warp":{"family":"ExpScaled","a":1,"b":-1}}"#;

fn run(dir: &Path, cmd: &str, config: &str, extra: &[&str]) -> i32 {
    let cfg = dir.join(format!("{cmd}.json"));
    fs::write(&cfg, config).unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_warpsurf"))
        .arg(cmd)
        .arg("--config")
        .arg(&cfg)
        .arg("--out")
        .arg(dir)
        .args(extra)
        .output()
        .unwrap();
    out.status.code().unwrap()
}

fn json(dir: &Path, name: &str) -> Value {
    serde_json::from_str(&fs::read_to_string(dir.join(name)).unwrap()).unwrap()
}

#[test]
fn compat_on_the_sphere() {
    let d = TempDir::new().unwrap();
    let cfg = format!(r#"{{"schema":"1","ambient":{FLAT},"surface":{{"kind":"sphere","radius":1}}}}"#);
    assert_eq!(run(d.path(), "verify-compat", &cfg, &[]), 0);
    let r = json(d.path(), "compat_report.json");
    assert!(r["checks"]["gauss"]["max"].as_f64().unwrap() <= 1e-6);
    assert_eq!(r["tolerances"]["gauss"], 1e-6);
    assert_eq!(r["pass"], true);
    assert!(json(d.path(), "metadata.json")["unixTime"].as_u64().is_some());
}

#[test]
fn warped_slice_structure_equation_vanishes() {
    let d = TempDir::new().unwrap();
    let cfg = r#"{"schema":"1","ambient":{"kappa":0,"warp":{"family":"Affine","a":0.5,"b":0}},
                  "surface":{"kind":"slice","t0":0.3}}"#;
    assert_eq!(run(d.path(), "verify-compat", cfg, &[]), 0);
    assert!(
        json(d.path(), "compat_report.json")["checks"]["eq33"]["max"]
            .as_f64()
            .unwrap()
            < 1e-12
    );
}

#[test]
fn config_errors_exit_2() {
    let d = TempDir::new().unwrap();
    assert_eq!(run(d.path(), "verify-compat", "{not json", &[]), 2);
    let unknown = format!(r#"{{"schema":"1","ambient":{FLAT},"surface":{{"kind":"slice","t0":0}},"bogus":1}}"#);
    assert_eq!(run(d.path(), "verify-compat", &unknown, &[]), 2);
    let schema = format!(r#"{{"schema":"2","ambient":{FLAT},"surface":{{"kind":"slice","t0":0}}}}"#);
    assert_eq!(run(d.path(), "verify-compat", &schema, &[]), 2);
    let kappa =
        r#"{"schema":"1","ambient":{"kappa":3,"warp":{"family":"Const","c":0}},"surface":{"kind":"slice","t0":0}}"#;
    assert_eq!(run(d.path(), "verify-compat", kappa, &[]), 2);
    let ok = format!(r#"{{"schema":"1","ambient":{FLAT},"surface":{{"kind":"slice","t0":0}}}}"#);
    assert_eq!(run(d.path(), "verify-compat", &ok, &["--tol-scale", "-1"]), 2);
    let status = Command::new(env!("CARGO_BIN_EXE_warpsurf"))
        .arg("sweep")
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(2));
}

#[test]
fn tight_tolerance_exits_1() {
    let d = TempDir::new().unwrap();
    let cfg = format!(
        r#"{{"schema":"1","ambient":{FLAT},"surface":{{"kind":"sphere","radius":1}},
             "jet":{{"mode":"finiteDifference"}},"tolerances":{{"gauss":1e-14}}}}"#
    );
    assert_eq!(run(d.path(), "verify-compat", &cfg, &[]), 1);
    assert_eq!(json(d.path(), "compat_report.json")["failures"][0], "gauss");
}

#[test]
fn deterministic_and_seeded() {
    let d = TempDir::new().unwrap();
    let cfg = format!(
        r#"{{"schema":"1","ambient":{EXP},"surface":{{"kind":"polynomialGraph","coeffs":[1,0,-1],"r0":0.2,"r1":0.8}},
             "grid":{{"nu":3,"nv":3}},"randomPoints":20}}"#
    );
    let read = |seed: &str| {
        assert_eq!(run(d.path(), "verify-compat", &cfg, &["--seed", seed]), 0);
        fs::read(d.path().join("compat_report.json")).unwrap()
    };
    let a = read("7");
    assert_eq!(a, read("7"));
    assert_ne!(a, read("8"));
}

#[test]
fn sphere_conformal_lemmas() {
    let d = TempDir::new().unwrap();
    let cfg =
        format!(r#"{{"schema":"1","ambient":{FLAT},"surface":{{"kind":"sphere","radius":1}},"chart":"conformalII"}}"#);
    assert_eq!(run(d.path(), "verify-lemmas", &cfg, &[]), 0);
    let r = json(d.path(), "lemma_report.json");
    for eq in ["e10", "e11", "e12", "e13", "e14", "e15", "eq16g"] {
        assert!(r["checks"][eq]["max"].as_f64().unwrap() <= 1e-5, "{eq}");
    }
}

#[test]
fn negatively_curved_conformal_ii_exits_1() {
    let d = TempDir::new().unwrap();
    let cfg = format!(
        r#"{{"schema":"1","ambient":{FLAT},"surface":{{"kind":"catenoid","a":1,"s0":-1,"s1":1}},"chart":"conformalII"}}"#
    );
    assert_eq!(run(d.path(), "verify-lemmas", &cfg, &[]), 1);
    let r = json(d.path(), "lemma_report.json");
    assert!(r["error"].as_str().unwrap().contains("positively"), "{}", r["error"]);
}

#[test]
fn solved_cap_round_trips_into_lemmas() {
    let d = TempDir::new().unwrap();
    let cap = format!(r#"{{"schema":"1","ambient":{EXP},"cap":{{"mode":"cmc","H":1}},"apex":0.5}}"#);
    assert_eq!(run(d.path(), "solve-cap", &cap, &[]), 0);
    let v = json(d.path(), "verdict.json");
    assert_eq!(v["verdict"]["measuredHeight"], 0.5);
    assert!((v["verdict"]["bound"].as_f64().unwrap() - std::f64::consts::E).abs() < 1e-12);
    let lem = format!(
        r#"{{"schema":"1","ambient":{EXP},"surface":{{"kind":"profileCsv","path":"profile.csv"}},"chart":"isothermalI"}}"#
    );
    assert_eq!(run(d.path(), "verify-lemmas", &lem, &[]), 0);
    let r = json(d.path(), "lemma_report.json");
    assert_eq!(r["tolerances"]["he4"], 1e-3);
    assert!(r["aux"]["minLaplacian"].as_f64().unwrap() > 0.0);
}

#[test]
fn hemisphere_equality_case() {
    let d = TempDir::new().unwrap();
    let cap = format!(r#"{{"schema":"1","ambient":{FLAT},"cap":{{"mode":"cmc","H":1}},"apex":1}}"#);
    assert_eq!(run(d.path(), "solve-cap", &cap, &[]), 0);
    let v = json(d.path(), "verdict.json");
    assert_eq!(v["verdict"]["bound"], 1.0);
    assert!((v["boundaryRadius"].as_f64().unwrap() - 1.0).abs() < 1e-6);
    let csv = fs::read_to_string(d.path().join("profile.csv")).unwrap();
    assert!(csv.starts_with("r,u,uPrime,curvature,"));
}

#[test]
fn cap_without_boundary_exits_1() {
    let d = TempDir::new().unwrap();
    let cap = format!(r#"{{"schema":"1","ambient":{EXP},"cap":{{"mode":"cmc","H":1}},"apex":2}}"#);
    assert_eq!(run(d.path(), "solve-cap", &cap, &[]), 1);
    assert!(json(d.path(), "verdict.json")["error"]
        .as_str()
        .unwrap()
        .contains("no boundary"));
}

#[test]
fn minimal_rigidity_outcomes() {
    let d = TempDir::new().unwrap();
    let lin = r#"{"schema":"1","ambient":{"kappa":0,"warp":{"family":"Affine","a":1,"b":0}},"cap":{"mode":"minimal"}}"#;
    assert_eq!(run(d.path(), "solve-cap", lin, &[]), 0);
    let r = json(d.path(), "rigidity.json");
    assert_eq!(r["outcome"], "no such minimal surface");
    assert_eq!(r["report"]["capsFound"], 0);
    let quad = r#"{"schema":"1","ambient":{"kappa":0,"warp":{"family":"Quadratic","a":1,"b":0,"c":0}},
                  "cap":{"mode":"minimal"},"apexHeights":[0,0.1,0.5,1]}"#;
    assert_eq!(run(d.path(), "solve-cap", quad, &[]), 0);
    assert_eq!(json(d.path(), "rigidity.json")["outcome"], "only the slice");
}

#[test]
fn sweeps() {
    let d = TempDir::new().unwrap();
    let flat = format!(r#"{{"schema":"1","ambient":{FLAT},"mode":"cmc","values":[0.5,1,2],"apexFractions":[1]}}"#);
    assert_eq!(run(d.path(), "sweep", &flat, &[]), 0);
    let csv = fs::read_to_string(d.path().join("sweep.csv")).unwrap();
    let rows: Vec<Vec<&str>> = csv.lines().skip(1).map(|l| l.split(',').collect()).collect();
    assert_eq!(rows.len(), 3);
    for r in &rows {
        let (h, measured, bound): (f64, f64, f64) =
            (r[1].parse().unwrap(), r[2].parse().unwrap(), r[3].parse().unwrap());
        assert!((bound - 1.0 / h).abs() < 1e-12 && (measured - bound).abs() < 1e-6 && r[4] == "true");
    }

    let warped =
        format!(r#"{{"schema":"1","ambient":{EXP},"mode":"cmc","values":[0.5,1,2],"apexFractions":[0.05,0.1,0.2]}}"#);
    assert_eq!(run(d.path(), "sweep", &warped, &[]), 0);
    let s = json(d.path(), "sweep_summary.json");
    assert_eq!(s["rows"], 9);
    assert!(s["capsFound"].as_u64().unwrap() > 0);

    let empty = format!(r#"{{"schema":"1","ambient":{FLAT},"mode":"cmc","values":[1],"apexHeights":[]}}"#);
    assert_eq!(run(d.path(), "sweep", &empty, &[]), 2);
    let none = format!(r#"{{"schema":"1","ambient":{FLAT},"mode":"ke","values":[],"apexHeights":[1]}}"#);
    assert_eq!(run(d.path(), "sweep", &none, &[]), 2);
}
