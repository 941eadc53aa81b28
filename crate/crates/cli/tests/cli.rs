use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use serde_json::Value;
use tempfile::TempDir;

struct Run {
    code: i32,
    out: PathBuf,
    stderr: String,
    _dir: TempDir,
}

fn run(cmd: &str, config: &str, ext: &str, extra: &[&str]) -> Run {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join(format!("run.{ext}"));
    fs::write(&cfg, config).unwrap();
    let out = dir.path().join("out");
    let res = Command::new(env!("CARGO_BIN_EXE_topolab"))
        .arg(cmd)
        .arg("--config")
        .arg(&cfg)
        .arg("--out")
        .arg(&out)
        .args(extra)
        .output()
        .unwrap();
    Run { code: res.status.code().unwrap(), out, stderr: String::from_utf8_lossy(&res.stderr).into(), _dir: dir }
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn csv_column(path: &Path, name: &str) -> Vec<String> {
    let text = fs::read_to_string(path).unwrap();
    let mut lines = text.lines();
    let idx = lines.next().unwrap().split(',').position(|h| h == name).unwrap();
    lines.map(|l| l.split(',').nth(idx).unwrap().to_string()).collect()
}

const PARABOLOID: &str = r#"
seed = 3

[surface]
family = "paraboloid"

[grid]
s = [-2.0, 2.0]
t = [-2.0, 2.0]
ns = 64
nt = 64
"#;

fn flow_config(scheme: &str, n_r: usize, extra: &str) -> String {
    format!(
        r#"
[surface]
family = "paraboloid"

[flow]
circle = {{ centre = [0.4, 0.0], radius = 0.3 }}
n_r = {n_r}
n_theta = {}

[flow.options]
scheme = "{scheme}"
{extra}
"#,
        2 * n_r
    )
}

#[test]
fn analyze_headers_and_the_paraboloid_tip() {
    let r = run("analyze", PARABOLOID, "toml", &[]);
    assert_eq!(r.code, 0, "{}", r.stderr);
    let text = fs::read_to_string(r.out.join("analyze.csv")).unwrap();
    assert_eq!(
        text.lines().next().unwrap(),
        "s,t,kappa1,kappa2,gap,product,lagrangian_residual,defect,rho_abs,signature"
    );
    assert_eq!(text.lines().count(), 1 + 64 * 64);
    let s = json(&r.out.join("analyze_summary.json"));
    let cells = &s["cells"];
    assert_eq!(cells["umbilic"], serde_json::json!([[31, 31]]));
    assert_eq!(cells["coincide"], true);
    assert!(s["max_residual"]["value"].as_f64().unwrap() < 1e-6);
    assert_eq!(s["lorentz_check"]["all_lorentz"], true);
    assert_eq!(s["neutral_signature"]["all_neutral"], true);
    assert_eq!(s["neutral_signature"]["seed"], 3);
}

#[test]
fn sphere_is_complex_everywhere() {
    let cfg = r#"
[surface]
family = "sphere"
params = { radius = 2.0 }

[grid]
s = [0.3, 2.8]
t = [0.0, 6.0]
ns = 16
nt = 16
"#;
    let r = run("analyze", cfg, "toml", &[]);
    assert_eq!(r.code, 0, "{}", r.stderr);
    let s = json(&r.out.join("analyze_summary.json"));
    assert_eq!(s["all_cells_complex"], true);
    assert!(s["max_residual"]["value"].as_f64().unwrap() < 1e-8);
    assert_eq!(s["signatures"]["degenerate"], 256);
    for sig in csv_column(&r.out.join("analyze.csv"), "signature") {
        assert_eq!(sig, "degenerate");
    }
}

#[test]
fn outputs_are_byte_identical() {
    let a = run("analyze", PARABOLOID, "toml", &["--threads", "1"]);
    let b = run("analyze", PARABOLOID, "toml", &["--threads", "3"]);
    for f in ["analyze.csv", "analyze_summary.json"] {
        assert_eq!(fs::read(a.out.join(f)).unwrap(), fs::read(b.out.join(f)).unwrap(), "{f}");
    }
    let cfg = flow_config("dbar_descent", 8, "max_steps = 40");
    let a = run("flow", &cfg, "toml", &["--threads", "1"]);
    let b = run("flow", &cfg, "toml", &["--threads", "2"]);
    for f in ["trajectory.csv", "final_mesh.csv", "flow_summary.json"] {
        assert_eq!(fs::read(a.out.join(f)).unwrap(), fs::read(b.out.join(f)).unwrap(), "{f}");
    }
    // A different seed changes only the sampled lines.
    let c = run("analyze", PARABOLOID, "toml", &["--seed", "4"]);
    let d = run("analyze", PARABOLOID, "toml", &[]);
    assert_eq!(fs::read(c.out.join("analyze.csv")).unwrap(), fs::read(d.out.join("analyze.csv")).unwrap());
    assert_eq!(json(&c.out.join("analyze_summary.json"))["neutral_signature"]["seed"], 4);
}

#[test]
fn manifest_records_the_run() {
    let a = run("analyze", PARABOLOID, "toml", &[]);
    let b = run("analyze", PARABOLOID, "toml", &[]);
    let (ma, mb) = (json(&a.out.join("manifest.json")), json(&b.out.join("manifest.json")));
    let hash = ma["config_sha256"].as_str().unwrap();
    assert_eq!(hash.len(), 64);
    assert!(hash.chars().all(|c| c.is_ascii_hexdigit()));
    assert_eq!(ma["config_sha256"], mb["config_sha256"]);
    assert_eq!(ma["outputs"], serde_json::json!(["analyze.csv", "analyze_summary.json"]));
    assert!(ma["wall_time_s"].as_f64().unwrap() > 0.0);
    assert_eq!(ma["versions"]["topolab"], "0.1.0");
    assert_eq!(ma["exit_code"], 0);
    // No temp files survive.
    for e in fs::read_dir(&a.out).unwrap() {
        assert!(!e.unwrap().file_name().to_string_lossy().ends_with(".tmp"));
    }
}

#[test]
fn json_and_toml_configs_agree() {
    let cfg = r#"{
        "seed": 3,
        "surface": { "family": "paraboloid" },
        "grid": { "s": [-2.0, 2.0], "t": [-2.0, 2.0], "ns": 64, "nt": 64 }
    }"#;
    let a = run("analyze", cfg, "json", &[]);
    let b = run("analyze", PARABOLOID, "toml", &[]);
    assert_eq!(a.code, 0, "{}", a.stderr);
    assert_eq!(fs::read(a.out.join("analyze.csv")).unwrap(), fs::read(b.out.join("analyze.csv")).unwrap());
}

#[test]
fn config_errors_exit_2_without_outputs() {
    let cases: &[(&str, &str, &str, &str)] = &[
        ("analyze", "[surface\nfamily = 1", "toml", "line"),
        ("analyze", &PARABOLOID.replace("ns = 64", "ns = 64\nnx = 3"), "toml", "unknown field `nx`"),
        ("analyze", "{\"surface\": {\"family\": \"paraboloid\"}, \"grid\": {\"s\": [0,1]}}", "json", "line 1"),
        ("analyze", PARABOLOID, "yaml", ".toml or .json"),
        ("analyze", &PARABOLOID.replace("paraboloid", "torus"), "toml", "torus"),
        ("analyze", "[surface]\nfamily = \"plane\"\n", "toml", "`grid` is required"),
        ("maslov", PARABOLOID, "toml", "`maslov` is required"),
        ("flow", &flow_config("dbar_descent", 8, "dt = -1.0"), "toml", "dt"),
        ("flow", &flow_config("sideways", 8, ""), "toml", "sideways"),
        ("toponogov", "[toponogov]\nprofile = { kind = \"cigar\", r1 = 2.0 }\n", "toml", "r1"),
        ("analyze", PARABOLOID, "toml", "threads"),
    ];
    for (k, &(cmd, cfg, ext, needle)) in cases.iter().enumerate() {
        let extra: &[&str] = if k == cases.len() - 1 { &["--threads", "0"] } else { &[] };
        let r = run(cmd, cfg, ext, extra);
        assert_eq!(r.code, 2, "case {k}: {}", r.stderr);
        assert!(r.stderr.contains(needle), "case {k}: {}", r.stderr);
        assert!(!r.out.exists(), "case {k} left outputs");
    }
}

#[test]
fn maslov_annulus_and_tip_loops() {
    let cfg = r#"
[surface]
family = "paraboloid"

[grid]
s = [-2.0, 2.0]
t = [-2.0, 2.0]
ns = 9
nt = 9

[[maslov.loops]]
kind = "circle"
centre = [1.0, 0.0]
radius = 0.5
samples = 128

[[maslov.loops]]
kind = "polygon"
vertices = [[-1.0, -1.0], [1.0, -1.0], [1.0, 1.0], [-1.0, 1.0]]
samples_per_edge = 64
"#;
    let r = run("maslov", cfg, "toml", &[]);
    assert_eq!(r.code, 0, "{}", r.stderr);
    let m = json(&r.out.join("maslov.json"));
    assert_eq!(m["grid"]["ns"], 9);
    let loops = m["loops"].as_array().unwrap();
    assert_eq!(loops[0]["loop"]["kind"], "circle");
    assert_eq!(loops[0]["result"], serde_json::json!({ "winding": 0, "maslov": 0, "I": 2, "unparam_dim": -1 }));
    // ρ ∝ z̄² near the tip with orientation sign −1: two zeros of total
    // signed count +2 inside the square.
    assert_eq!(loops[1]["result"]["winding"], 2);
    assert_eq!(loops[1]["result"]["unparam_dim"], 3);
}

#[test]
fn loop_through_the_tip_is_a_structured_error() {
    let cfg = r#"
[surface]
family = "paraboloid"

[grid]
s = [-1.0, 1.0]
t = [-1.0, 1.0]
ns = 5
nt = 5

[maslov]
loops = [
  { kind = "circle", centre = [0.5, 0.0], radius = 0.5, samples = 64 },
  { kind = "circle", centre = [1.0, 0.0], radius = 0.5, samples = 64 },
]
"#;
    let r = run("maslov", cfg, "toml", &[]);
    assert_eq!(r.code, 1);
    let m = json(&r.out.join("maslov.json"));
    let err = &m["loops"][0]["result"]["error"];
    assert_eq!(err["kind"], "complex_point_on_loop");
    assert!(err["message"].as_str().unwrap().contains("sample 32"));
    assert_eq!(m["loops"][1]["result"]["winding"], 0);
    assert_eq!(json(&r.out.join("manifest.json"))["error"]["kind"], "complex_point_on_loop");
}

#[test]
fn flow_descent_reduces_the_residual() {
    let r = run("flow", &flow_config("dbar_descent", 16, "max_steps = 400"), "toml", &[]);
    assert_eq!(r.code, 0, "{}", r.stderr);
    let traj = r.out.join("trajectory.csv");
    let header = fs::read_to_string(&traj).unwrap().lines().next().unwrap().to_string();
    assert_eq!(header, "step,time,dbar_norm,max_boundary_defect,spacelike_ok");
    let norms: Vec<f64> = csv_column(&traj, "dbar_norm").iter().map(|v| v.parse().unwrap()).collect();
    assert!(norms.windows(2).all(|w| w[1] <= w[0] + 1e-10));
    assert!(norms.last().unwrap() / norms[0] <= 0.1);
    let mesh = fs::read_to_string(r.out.join("final_mesh.csv")).unwrap();
    assert_eq!(mesh.lines().next().unwrap(), "r,theta,re_xi,im_xi,re_eta,im_eta");
    assert_eq!(mesh.lines().count(), 1 + 1 + 16 * 32);
    let s = json(&r.out.join("flow_summary.json"));
    assert_eq!(s["status"], "max_steps");
    assert!(s["ratio"].as_f64().unwrap() <= 0.1);
}

#[test]
fn zero_step_gives_a_flat_trajectory() {
    let r = run("flow", &flow_config("dbar_descent", 8, "dt = 0.0\nmax_steps = 5"), "toml", &[]);
    assert_eq!(r.code, 0, "{}", r.stderr);
    let norms = csv_column(&r.out.join("trajectory.csv"), "dbar_norm");
    assert_eq!(norms.len(), 6);
    assert!(norms.iter().all(|n| *n == norms[0]));
}

#[test]
fn mcf_on_the_paraboloid_reports_breakdown() {
    let r = run("flow", &flow_config("neutral_mcf", 8, "dt = 1e-4"), "toml", &[]);
    assert_eq!(r.code, 0, "{}", r.stderr);
    let s = json(&r.out.join("flow_summary.json"));
    assert_eq!(s["status"], "breakdown");
    assert!(s["reason"].as_str().unwrap().contains("spacelike"));
    assert_eq!(csv_column(&r.out.join("trajectory.csv"), "spacelike_ok"), vec!["false"]);
}

#[test]
fn impossible_boundary_is_a_computation_failure() {
    // The circle passes through the tip, where the section is complex.
    let cfg = flow_config("dbar_descent", 8, "").replace("centre = [0.4, 0.0]", "centre = [0.3, 0.0]");
    let r = run("flow", &cfg, "toml", &[]);
    assert_eq!(r.code, 1);
    let e = json(&r.out.join("error.json"));
    assert_eq!(e["error"]["kind"], "invalid_boundary");
    assert!(r.out.join("manifest.json").exists());
    assert!(!r.out.join("trajectory.csv").exists());
}

#[test]
fn toponogov_reports() {
    let cfg = r#"
[surface]
family = "convex_graph"

[toponogov]
profile = { kind = "cigar", r0 = 1.5, a = 0.8 }
radii = [1.0, 2.0, 4.0, 6.0, 8.0, 10.0]
sweep = { inner_radius = 0.5 }
"#;
    let r = run("toponogov", cfg, "toml", &[]);
    assert_eq!(r.code, 0, "{}", r.stderr);
    let t = json(&r.out.join("toponogov.json"));
    assert_eq!(t["profile"]["all_pass"], true);
    let sweep = r.out.join("sweep.csv");
    assert_eq!(fs::read_to_string(&sweep).unwrap().lines().next().unwrap(), "R,min_gap");
    let gaps: Vec<f64> = csv_column(&sweep, "min_gap").iter().map(|v| v.parse().unwrap()).collect();
    assert!(gaps.windows(2).all(|w| w[1] <= w[0]));
    assert!(*gaps.last().unwrap() < 0.01);

    let plane = "[surface]\nfamily = \"plane\"\n\n[toponogov]\nradii = [1.0, 2.0, 3.0]\n";
    let r = run("toponogov", plane, "toml", &[]);
    assert_eq!(r.code, 0, "{}", r.stderr);
    assert!(csv_column(&r.out.join("sweep.csv"), "min_gap").iter().all(|g| g.parse::<f64>().unwrap() == 0.0));

    let cone = "[toponogov]\nprofile = { kind = \"linear\", r0 = 1.0 }\n";
    let r = run("toponogov", cone, "toml", &[]);
    let t = json(&r.out.join("toponogov.json"));
    assert_eq!(t["profile"]["all_pass"], false);
    assert!(!r.out.join("sweep.csv").exists());
}

#[test]
fn truncated_cigar_has_an_edge() {
    let cfg = r#"
[surface]
family = "cigar"
domain = { kind = "annulus", cs = 0.0, ct = 0.0, inner = 0.5, outer = 0.9 }

[toponogov]
radii = [0.7, 0.9]
sweep = { inner_radius = 0.5 }
rays = [{ origin = [0.6, 0.0], direction = [1.0, 0.0] }]
"#;
    let r = run("toponogov", cfg, "toml", &[]);
    assert_eq!(r.code, 0, "{}", r.stderr);
    let t = json(&r.out.join("toponogov.json"));
    assert!(t["sweep"]["min_gap"][1].as_f64().unwrap() > 0.1);
    let ray = &t["probe"]["rays"][0];
    assert_eq!(ray["class"], "bounded");
    assert!(ray["extrapolated"].as_f64().unwrap().is_finite());
}

#[test]
fn expression_surfaces_match_the_family() {
    let cfg = r#"
[surface]
expr = { x = "s", y = "t", z = "(s^2 + t^2) / 2" }
domain = { kind = "rect", s0 = -2.0, s1 = 2.0, t0 = -2.0, t1 = 2.0 }

[grid]
s = [-2.0, 2.0]
t = [-2.0, 2.0]
ns = 16
nt = 16
"#;
    let r = run("analyze", cfg, "toml", &[]);
    assert_eq!(r.code, 0, "{}", r.stderr);
    let fam = run("analyze", &cfg.replace("expr = { x = \"s\", y = \"t\", z = \"(s^2 + t^2) / 2\" }", "family = \"paraboloid\""), "toml", &[]);
    let a = csv_column(&r.out.join("analyze.csv"), "kappa1");
    let b = csv_column(&fam.out.join("analyze.csv"), "kappa1");
    for (x, y) in a.iter().zip(&b) {
        let (x, y): (f64, f64) = (x.parse().unwrap(), y.parse().unwrap());
        assert!((x - y).abs() < 1e-8, "{x} vs {y}");
    }
    let bad = run("analyze", &cfg.replace("(s^2 + t^2) / 2", "s +* t"), "toml", &[]);
    assert_eq!(bad.code, 2);
    assert!(bad.stderr.contains("column"), "{}", bad.stderr);
}
