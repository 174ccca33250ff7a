use std::f64::consts::PI;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn nambu(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_nambu"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn scenario(dir: &Path, name: &str, body: &str) -> PathBuf {
    let p = dir.join(format!("{name}.toml"));
    std::fs::write(&p, body).unwrap();
    p
}

fn json(o: &Output) -> Value {
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    serde_json::from_slice(&o.stdout).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn periods(doc: &Value) -> Vec<f64> {
    doc["report"]["components"]
        .as_array()
        .unwrap()
        .iter()
        .map(|c| c["period"].as_f64().unwrap())
        .collect()
}

#[test]
fn sphere_equator_report() {
    let dir = tempfile::tempdir().unwrap();
    let p = scenario(
        dir.path(),
        "eq",
        "domain = \"sphere2\"\nresolution = [128, 256]\nf = \"z\"\n",
    );
    let doc = json(&nambu(&["invariants", s(&p)]));
    let t = periods(&doc);
    assert_eq!(t.len(), 1);
    assert!((t[0] - 2.0 * PI).abs() < 1e-3 * 2.0 * PI);
    assert!(doc["report"]["volume"].as_f64().unwrap().abs() < 1e-3);
    assert_eq!(doc["report"]["h2"]["dimension"], 2);
    assert_eq!(doc["graph"]["edges"].as_array().unwrap().len(), 1);
    assert!(doc["canonical_code"].is_string());
}

#[test]
fn torus_circles_report() {
    let dir = tempfile::tempdir().unwrap();
    let p = scenario(
        dir.path(),
        "t",
        "domain = \"torus2\"\nresolution = [128, 128]\nf = \"sin(2*pi*x)\"\n",
    );
    let doc = json(&nambu(&["invariants", s(&p)]));
    let t = periods(&doc);
    assert_eq!(t.len(), 2);
    for v in t {
        assert!((v - 1.0 / (2.0 * PI)).abs() < 1e-4);
    }
    assert!(doc["report"]["volume"].as_f64().unwrap().abs() < 1e-3);
    assert_eq!(doc["report"]["h2"]["dimension"], 3);
    assert!(doc["canonical_code"].is_null());
}

#[test]
fn constant_field_report() {
    let dir = tempfile::tempdir().unwrap();
    let p = scenario(
        dir.path(),
        "c",
        "domain = \"sphere2\"\nresolution = [64, 128]\nf = \"0.5\"\n",
    );
    let doc = json(&nambu(&["invariants", s(&p)]));
    assert!(periods(&doc).is_empty());
    assert!((doc["report"]["volume"].as_f64().unwrap() - 8.0 * PI).abs() < 1e-6);
    assert_eq!(doc["report"]["h2"]["dimension"], 1);
}

#[test]
fn reports_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let p = scenario(
        dir.path(),
        "two",
        "domain = \"sphere2\"\nresolution = [128, 256]\nf = \"(z - 0.5)*(z + 0.5)\"\n",
    );
    let (o1, o2) = (dir.path().join("a"), dir.path().join("b"));
    let a = nambu(&["invariants", s(&p), "--out-dir", s(&o1)]);
    let b = nambu(&["invariants", s(&p), "--out-dir", s(&o2)]);
    assert!(a.status.success());
    assert_eq!(a.stdout, b.stdout);
    for name in ["two.report.json", "two.dot", "two.svg", "two.volume.csv"] {
        let x = std::fs::read(o1.join(name)).unwrap();
        let y = std::fs::read(o2.join(name)).unwrap();
        assert_eq!(x, y, "{name}");
    }
    assert_eq!(std::fs::read(o1.join("two.report.json")).unwrap(), a.stdout);
}

#[test]
fn artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let p = scenario(
        dir.path(),
        "circles",
        "domain = \"torus2\"\nresolution = [64, 64]\nf = \"sin(2*pi*x)\"\n",
    );
    assert!(nambu(&["invariants", s(&p), "--out-dir", s(&out)])
        .status
        .success());
    let dot = std::fs::read_to_string(out.join("circles.dot")).unwrap();
    assert_eq!(
        dot.matches("[label=\"+\"]").count() + dot.matches("[label=\"-\"]").count(),
        2
    );
    assert_eq!(dot.matches(" -- ").count(), 2);
    let svg = std::fs::read_to_string(out.join("circles.svg")).unwrap();
    assert_eq!(svg.matches("class=\"contour\"").count(), 2);
    assert_eq!(svg.matches("class=\"region\"").count(), 2);
    let csv = std::fs::read_to_string(out.join("circles.volume.csv")).unwrap();
    assert_eq!(csv.lines().count(), 4);

    let p = scenario(
        dir.path(),
        "planes",
        "domain = \"torus3\"\nresolution = [16, 16, 16]\nf = \"sin(2*pi*x)\"\noutputs = [\"dot\", \"svg\"]\n",
    );
    let o = nambu(&["invariants", s(&p), "--out-dir", s(&out)]);
    assert!(o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("SVG skipped"));
    assert!(out.join("planes.dot").exists());
    assert!(!out.join("planes.svg").exists());
    assert!(!out.join("planes.report.json").exists());
}

#[test]
fn equivalence_verdicts() {
    let dir = tempfile::tempdir().unwrap();
    let base = "domain = \"sphere2\"\nresolution = [128, 256]\n";
    let z = scenario(dir.path(), "z", &format!("{base}f = \"z\"\n"));
    let nz = scenario(dir.path(), "nz", &format!("{base}f = \"-z\"\n"));
    let shifted = scenario(dir.path(), "zs", &format!("{base}f = \"z + 0.5\"\n"));
    let v = json(&nambu(&["equiv", s(&z), s(&nz)]));
    assert_eq!(v["verdict"], "equivalent_orientation_preserving");
    let v = json(&nambu(&["equiv", s(&z), s(&z)]));
    assert_eq!(v["verdict"], "equivalent_orientation_preserving");
    let v = json(&nambu(&["equiv", s(&z), s(&shifted)]));
    assert_eq!(v["verdict"], "inequivalent");
    assert_eq!(v["reason"], "volume");
}

#[test]
fn deform_uses_theta_key_or_file() {
    let dir = tempfile::tempdir().unwrap();
    let base = scenario(
        dir.path(),
        "base",
        "domain = \"sphere2\"\nresolution = [128, 256]\nf = \"z\"\ntheta = \"z*(1 + 0.25*z)\"\n",
    );
    let doc = json(&nambu(&["deform", s(&base)]));
    assert!((doc["c"][0].as_f64().unwrap() - 1.0).abs() < 1e-9);
    assert!((doc["v_rel"].as_f64().unwrap() - PI).abs() < 1e-2);
    let twice = scenario(dir.path(), "twice", "domain = \"sphere2\"\nf = \"2*z\"\n");
    let doc = json(&nambu(&["deform", s(&base), s(&twice)]));
    assert!((doc["c"][0].as_f64().unwrap() - 2.0).abs() < 1e-9);
    let bare = scenario(dir.path(), "bare", "domain = \"sphere2\"\nf = \"z\"\n");
    let o = nambu(&["deform", s(&bare)]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("field `theta`"));
}

#[test]
fn trees_and_linearize() {
    let doc = json(&nambu(&["trees", "3"]));
    assert_eq!(doc["count"], 3);
    let o = nambu(&[
        "linearize",
        "--f",
        "r*(1+r)",
        "--k",
        "2",
        "--samples",
        "101",
    ]);
    assert!(o.status.success());
    let text = String::from_utf8(o.stdout).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("r,g,residual"));
    for line in lines {
        let cols: Vec<&str> = line.split(',').collect();
        let r: f64 = cols[0].parse().unwrap();
        let g: f64 = cols[1].parse().unwrap();
        assert!((g - 2.0 * r / (1.0 + r)).abs() < 1e-8);
    }
    assert!(String::from_utf8_lossy(&o.stderr).starts_with("max residual"));
}

#[test]
fn plot_writes_svg() {
    let dir = tempfile::tempdir().unwrap();
    let p = scenario(
        dir.path(),
        "eq",
        "domain = \"sphere2\"\nresolution = [64, 128]\nf = \"z\"\n",
    );
    let o = nambu(&["plot", s(&p)]);
    assert!(o.status.success());
    let svg = String::from_utf8(o.stdout).unwrap();
    assert!(svg.starts_with("<svg"));
    assert_eq!(svg.matches("class=\"contour\"").count(), 1);
}

fn failure(args: &[&str]) -> (i32, String) {
    let o = nambu(args);
    (
        o.status.code().unwrap(),
        String::from_utf8(o.stderr).unwrap(),
    )
}

#[test]
fn errors_name_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let pole = scenario(
        dir.path(),
        "pole",
        "domain = \"sphere2\"\nresolution = [64, 128]\nf = \"x\"\n",
    );
    let (code, msg) = failure(&["invariants", s(&pole)]);
    assert_eq!(code, 1);
    assert!(msg.contains("pole.toml:3: field `f`"), "{msg}");

    let unknown = scenario(
        dir.path(),
        "unknown",
        "domain = \"torus2\"\nf = \"x\"\nfoo = 1\n",
    );
    let (code, msg) = failure(&["invariants", s(&unknown)]);
    assert_eq!(code, 1);
    assert!(msg.contains("foo"), "{msg}");

    let cut = scenario(
        dir.path(),
        "cut",
        "domain = \"sphere2\"\nresolution = [64, 128]\nf = \"z\"\ncutoff = \"-z\"\n",
    );
    let (code, msg) = failure(&["invariants", s(&cut)]);
    assert_eq!(code, 1);
    assert!(msg.contains("cut.toml:4: field `cutoff`"), "{msg}");

    let z = scenario(
        dir.path(),
        "z",
        "domain = \"sphere2\"\nresolution = [64, 128]\nf = \"z\"\n",
    );
    let (code, msg) = failure(&["invariants", s(&z), "--eps", "0.1"]);
    assert_eq!(code, 1);
    assert!(msg.contains("field `eps`"), "{msg}");
}

#[test]
fn non_convergence_exits_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let p = scenario(
        dir.path(),
        "zs",
        "domain = \"sphere2\"\nresolution = [64, 128]\nf = \"z + 0.5\"\n",
    );
    let (code, msg) = failure(&["invariants", s(&p), "--tol-volume", "1e-9"]);
    assert_eq!(code, 2, "{msg}");
    assert!(msg.contains("field `eps`"), "{msg}");
}
