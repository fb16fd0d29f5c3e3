use std::path::PathBuf;
use std::process::Command;

use serde_json::Value;

struct Run {
    code: i32,
    stdout: String,
    stderr: String,
}

fn run(args: &[&str]) -> Run {
    let out = Command::new(env!("CARGO_BIN_EXE_contact-kit"))
        .args(args)
        .output()
        .expect("binary runs");
    Run {
        code: out.status.code().unwrap_or(-1),
        stdout: String::from_utf8(out.stdout).unwrap(),
        stderr: String::from_utf8(out.stderr).unwrap(),
    }
}

fn json(args: &[&str]) -> Value {
    let r = run(args);
    assert_eq!(r.code, 0, "{args:?}: {}", r.stderr);
    serde_json::from_str(&r.stdout).unwrap()
}

fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("contact-kit-cli-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    dir.join(name)
}

fn point_arg(v: &Value) -> String {
    v.as_array()
        .unwrap()
        .iter()
        .map(|x| format!("{:?}", x.as_f64().unwrap()))
        .collect::<Vec<_>>()
        .join(",")
}

#[test]
fn analyze_mitotic_cusp() {
    let d = json(&[
        "analyze",
        "--model",
        "mitotic",
        "--face",
        "X=0",
        "--point",
        "0,0.7,0.5",
    ]);
    assert_eq!(d["schema"], "contact-kit/1");
    assert_eq!(d["verdict"]["kind"], "contact");
    assert_eq!(d["verdict"]["order"], 2);
    assert_eq!(d["verdict"]["slow_generic"], true);
    // 63/1600.
    let k = d["cusp_coefficient"].as_f64().unwrap();
    assert!((k - 63.0 / 1600.0).abs() <= 1e-8, "{k}");
    assert_eq!(d["C0"]["rank"], 2);
    for row in d["C0"]["rows"].as_array().unwrap() {
        let nz: Vec<f64> = row
            .as_array()
            .unwrap()
            .iter()
            .map(|v| v.as_f64().unwrap())
            .filter(|v| *v != 0.0)
            .collect();
        assert_eq!(nz.len(), 1);
        assert!((nz[0].abs() - 0.21).abs() <= 1e-8);
    }
    for key in [
        "model",
        "parameters",
        "point",
        "projected_point",
        "eigenvalues",
        "l",
        "r",
        "chain",
        "fold_coefficient",
        "tolerances",
    ] {
        assert!(d.get(key).is_some(), "missing {key}");
    }
}

#[test]
fn analyze_three_component_fold() {
    let d = json(&[
        "analyze",
        "--model",
        "three_component",
        "--point",
        "0.5,0,0.3",
    ]);
    assert_eq!(d["verdict"]["order"], 1);
    assert_eq!(d["verdict"]["label"], "fold");
    // α₁(α₂ − (1 + z²))/(1 + z²) at α = (0.2, 2, 0.2), z = 0.3.
    let want = 0.2 * (2.0 - 1.09) / 1.09;
    assert!((d["fold_coefficient"].as_f64().unwrap() - want).abs() <= 1e-8);
    let chain = d["chain"].as_array().unwrap();
    let orders: Vec<u64> = chain.iter().map(|c| c["order"].as_u64().unwrap()).collect();
    assert_eq!(orders, (0..orders.len() as u64).collect::<Vec<_>>());
    assert!(orders.len() >= 3);
}

#[test]
fn analyze_planar_is_normally_hyperbolic_at_the_geometric_fold() {
    let d = json(&["analyze", "--model", "planar_parabola", "--point", "0,1"]);
    assert_eq!(d["verdict"]["kind"], "normally_hyperbolic");
    assert_eq!(d["verdict"]["order"], Value::Null);
    let e = &d["eigenvalues"][0];
    assert!((e[0].as_f64().unwrap() - 1.0).abs() <= 1e-10);
    assert_eq!(e[1].as_f64().unwrap(), 0.0);
}

#[test]
fn analyze_round_trip_keeps_the_verdict() {
    let cases: [&[&str]; 4] = [
        &["--model", "three_component", "--point", "0.5,0.00001,0.3"],
        &["--model", "mitotic", "--point", "0,0.7,0.5"],
        &["--model", "cusp_normal_form", "--point", "0,0,0"],
        &["--model", "planar_parabola", "--point", "0.29289,0.91421"],
    ];
    for case in cases {
        let mut args = vec!["analyze"];
        args.extend_from_slice(case);
        let first = json(&args);
        let at = if first["projected_point"].is_null() {
            &first["point"]
        } else {
            &first["projected_point"]
        };
        let p = point_arg(at);
        let mut again: Vec<&str> = args.clone();
        let pos = again.iter().position(|a| *a == "--point").unwrap();
        again[pos + 1] = &p;
        let second = json(&again);
        assert_eq!(first["verdict"], second["verdict"], "{case:?}");
        assert_eq!(second["projected_point"], Value::Null, "{case:?}");
    }
}

#[test]
fn analyze_csv_uses_full_precision() {
    let r = run(&[
        "analyze",
        "--model",
        "three_component",
        "--point",
        "0.5,0,0.3",
        "--format",
        "csv",
    ]);
    assert_eq!(r.code, 0);
    let lines: Vec<&str> = r.stdout.lines().collect();
    assert_eq!(lines.len(), 2);
    assert!(lines[0].starts_with("model,x,y,z,projected,kind,label,order"));
    let cells: Vec<&str> = lines[1].split(',').collect();
    assert_eq!(cells[3], "2.9999999999999999e-1");
    let fold: f64 = cells[10].parse().unwrap();
    assert!((fold - 0.2 * 0.91 / 1.09).abs() <= 1e-8);
    for c in &cells[1..4] {
        let mantissa = c.split('e').next().unwrap().replace(['-', '.'], "");
        assert_eq!(mantissa.len(), 17, "{c}");
    }
}

#[test]
fn scan_grid_is_deterministic_and_ordered() {
    let args = [
        "scan",
        "--model",
        "planar_parabola",
        "--grid",
        "-1:3:9",
        "--grid",
        "-2:1:7",
        "--project",
    ];
    let a = run(&args);
    let b = run(&args);
    assert_eq!(a.code, 0, "{}", a.stderr);
    assert_eq!(a.stdout, b.stdout);
    let lines: Vec<&str> = a.stdout.lines().collect();
    assert_eq!(lines.len(), 1 + 63);
    for (i, l) in lines[1..].iter().enumerate() {
        assert!(l.starts_with(&format!("{i},")));
    }
    assert!(lines[0].starts_with("index,x,y,manifold_residual,kind,label"));
}

#[test]
fn scan_branch_flags_the_cusp() {
    let d = json(&[
        "scan",
        "--branch",
        "--model",
        "three_component",
        "--point",
        "0.5,0,0.2",
        "--pin",
        "z=0.2",
        "--format",
        "json",
    ]);
    assert_eq!(d["mode"], "branch");
    let rows = d["rows"].as_array().unwrap();
    let events: Vec<&Value> = rows.iter().filter(|r| !r["event"].is_null()).collect();
    let cusps: Vec<&&Value> = events.iter().filter(|r| r["label"] == "cusp").collect();
    assert_eq!(cusps.len(), 1);
    let z = cusps[0]["point"][2].as_f64().unwrap();
    assert!((z - 1.0).abs() <= 1e-6, "{z}");
    let s: Vec<f64> = rows
        .iter()
        .map(|r| r["arclength"].as_f64().unwrap())
        .collect();
    assert!(s.windows(2).all(|w| w[0] <= w[1]));
}

#[test]
fn fibers_and_simulate_are_byte_identical_across_runs() {
    let cases: [&[&str]; 2] = [
        &[
            "fibers",
            "--model",
            "planar_parabola",
            "--point",
            "0,0",
            "--point",
            "1,-1",
            "--t-span=-1,1",
        ],
        &[
            "simulate",
            "--model",
            "three_component",
            "--point",
            "0.5,0,0.3",
            "--t-span",
            "0,20",
            "--stride",
            "5",
        ],
    ];
    for args in cases {
        let a = run(args);
        assert_eq!(a.code, 0, "{}", a.stderr);
        assert_eq!(a.stdout, run(args).stdout);
        assert!(a.stdout.lines().count() > 3);
    }
}

#[test]
fn fiber_csv_preserves_the_first_integral() {
    let r = run(&[
        "fibers",
        "--model",
        "planar_parabola",
        "--grid",
        "0:1:2",
        "--grid",
        "-1:0:2",
        "--t-span=-1,1",
    ]);
    assert_eq!(r.code, 0, "{}", r.stderr);
    let mut per_fiber: std::collections::BTreeMap<usize, Vec<f64>> = Default::default();
    for line in r.stdout.lines().skip(1) {
        let c: Vec<f64> = line.split(',').map(|s| s.parse().unwrap()).collect();
        per_fiber
            .entry(c[0] as usize)
            .or_default()
            .push(c[3] - (c[2] - 2.0).abs().ln());
    }
    assert_eq!(per_fiber.len(), 4);
    for v in per_fiber.values() {
        let drift = v.iter().map(|h| (h - v[0]).abs()).fold(0.0, f64::max);
        assert!(drift <= 1e-6, "{drift}");
    }
}

#[test]
fn models_lists_the_zoo() {
    let d = json(&["models"]);
    let names: Vec<&str> = d["models"]
        .as_array()
        .unwrap()
        .iter()
        .map(|m| m["name"].as_str().unwrap())
        .collect();
    for n in [
        "planar_parabola",
        "cusp_normal_form",
        "ac_family",
        "three_component",
        "mitotic",
        "mitotic:M=1",
    ] {
        assert!(names.contains(&n), "{n}");
    }
    let csv = run(&["models", "--format", "csv"]);
    assert!(csv
        .stdout
        .starts_with("model,entry,name,value,detail,provenance\n"));
}

#[test]
fn verify_passes_on_built_in_models() {
    for m in [
        "planar_parabola",
        "cusp_normal_form",
        "ac_family",
        "three_component",
        "mitotic",
    ] {
        let d = json(&["verify", "--model", m, "--samples", "20", "--seed", "7"]);
        assert_eq!(d["passed"], true, "{m}");
    }
}

#[test]
fn config_file_supplies_defaults_and_flags_win() {
    let path = scratch("run.cfg");
    std::fs::write(
        &path,
        "# defaults\nmodel = three_component\npoint = 0.5,0,0.3\nparam = alpha1=0.3\n",
    )
    .unwrap();
    let cfg = path.to_str().unwrap();
    let d = json(&["analyze", "--config", cfg]);
    let want = 0.3 * 0.91 / 1.09;
    assert!((d["fold_coefficient"].as_f64().unwrap() - want).abs() <= 1e-8);
    assert_eq!(d["parameters"]["alpha1"], 0.3);
    let d = json(&["analyze", "--config", cfg, "--point", "0.5,0,0.5"]);
    assert_eq!(d["point"][2], 0.5);
    std::fs::write(&path, "colour = red\n").unwrap();
    assert_eq!(run(&["analyze", "--config", cfg]).code, 1);
}

#[test]
fn output_flag_writes_a_file() {
    let path = scratch("out.json");
    let r = run(&[
        "analyze",
        "--model",
        "planar_parabola",
        "--point",
        "0,1",
        "-o",
        path.to_str().unwrap(),
    ]);
    assert_eq!(r.code, 0);
    assert!(r.stdout.is_empty());
    let d: Value = serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
    assert_eq!(d["verdict"]["kind"], "normally_hyperbolic");
}

#[test]
fn custom_model_file() {
    let path = scratch("parabola.toml");
    std::fs::write(
        &path,
        r#"
name = "my_parabola"
variables = ["x", "y"]
k = 1

[domain]
lower = [-3.0, -3.0]
upper = [3.0, 3.0]

[expressions]
f = ["y + x^2 - 1"]
N = [["x - 2"], ["1"]]
"#,
    )
    .unwrap();
    let d = json(&[
        "analyze",
        "--model-file",
        path.to_str().unwrap(),
        "--point",
        "0,1",
    ]);
    assert_eq!(d["model"], "my_parabola");
    assert_eq!(d["verdict"]["kind"], "normally_hyperbolic");
}

#[test]
fn exit_codes() {
    // Usage errors.
    for args in [
        &["analyze", "--model", "nope", "--point", "0,1"][..],
        &["analyze", "--model", "planar_parabola", "--point", "0,1,2"],
        &["analyze", "--model", "planar_parabola"],
        &[
            "analyze",
            "--model",
            "ac_family",
            "--param",
            "c=9",
            "--point",
            "0,0",
        ],
        &[
            "scan",
            "--model",
            "planar_parabola",
            "--grid",
            "0:1:0",
            "--grid",
            "0:1:2",
        ],
        &[
            "fibers",
            "--model",
            "three_component",
            "--point",
            "0.5,0,0.3",
            "--point",
            "x",
        ],
        &["frobnicate"],
    ] {
        let r = run(args);
        assert_eq!(r.code, 1, "{args:?}: {}", r.stderr);
        assert!(!r.stderr.is_empty());
    }
    // Numerical failure: finite-time blow-up.
    let r = run(&[
        "simulate",
        "--model",
        "planar_parabola",
        "--point",
        "3,3",
        "--t-span",
        "0,10",
    ]);
    assert_eq!(r.code, 2, "{}", r.stderr);
    assert_eq!(run(&["--help"]).code, 0);
}
