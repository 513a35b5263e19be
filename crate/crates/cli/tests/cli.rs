use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn jonesbeta(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_jonesbeta")).args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn read_json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn gen_koch_mass() {
    let o = jonesbeta(&["gen", "koch", "--k", "2", "--n", "2", "--alpha", "pi/3"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    let mass = v["summary"]["mass"].as_f64().unwrap();
    assert!((mass - 479.0 / 243.0).abs() < 1e-12, "{mass}");
    assert_eq!(v["descriptor"]["family"], "koch");
}

#[test]
fn gen_fourcorner_segments() {
    let o = jonesbeta(&["gen", "fourcorner", "--k", "3"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["segments"].as_array().unwrap().len(), 64);
    assert_eq!(v["summary"]["mass"].as_f64().unwrap(), 1.0);
}

#[test]
fn gen_rejects_growth_bounds() {
    let o = jonesbeta(&["gen", "koch", "--n", "1", "--alpha", "pi/3"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("upper bound fails"), "{}", stderr(&o));
}

#[test]
fn exit_codes_for_bad_input_and_budget() {
    assert_eq!(jonesbeta(&["beta", "fourcorner", "--k", "1", "--at", "0,0"]).status.code(), Some(2));
    assert_eq!(jonesbeta(&["beta", "fourcorner", "--at", "x", "--r", "1"]).status.code(), Some(2));
    assert_eq!(jonesbeta(&["frobnicate"]).status.code(), Some(2));
    let o = jonesbeta(&["gen", "fourcorner", "--k", "8", "--repr", "explicit", "--max-leaves", "1000"]);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
    let o = jonesbeta(&["render", "fourcorner", "--k", "6", "--max-leaves", "100"]);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
    let o = jonesbeta(&["beta", "koch", "--k", "6", "--repr", "tree", "--at", "0.5,0.1", "--r", "0.4", "--rel-tol", "1e-12", "--max-nodes", "10"]);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
}

#[test]
fn beta_on_fourcorner_stage_one() {
    let o = jonesbeta(&["beta", "fourcorner", "--k", "1", "--at", "0,0", "--r", "1.25"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let out = stdout(&o);
    let mut lines = out.lines();
    assert_eq!(lines.next(), Some("x,y,r,beta_sq,err,mass_in_ball"));
    let row: Vec<f64> = lines.next().unwrap().split(',').map(|f| f.parse().unwrap()).collect();
    assert!((row[3] - 0.072).abs() < 1e-12, "{row:?}");
}

#[test]
fn single_segment_carleson_is_zero() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("seg.json");
    fs::write(&input, "{\"segments\": [[0, 0, 1, 0]]}").unwrap();
    let out = dir.path().join("out");
    let o = jonesbeta(&["carleson", "--input", input.to_str().unwrap(), "--at", "0.5,0", "--r", "0.25", "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = fs::read_to_string(out.join("carleson.csv")).unwrap();
    assert!(csv.starts_with("sample_x,sample_y,weight,inner_sum\n"));
    assert!(csv.lines().count() > 1);
    assert_eq!(read_json(&out.join("carleson.json"))["value"].as_f64(), Some(0.0));
}

#[test]
fn jones_profile_csv() {
    let o = jonesbeta(&["jones", "koch", "--k", "4", "--at", "0,0", "--m-max", "6"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let out = stdout(&o);
    let lines: Vec<&str> = out.lines().collect();
    assert_eq!(lines[0], "m,r,beta_sq,err,mass_in_ball,partial_sum");
    assert_eq!(lines.len(), 8);
    let partial: Vec<f64> = lines[1..].iter().map(|l| l.rsplit(',').next().unwrap().parse().unwrap()).collect();
    assert!(partial.windows(2).all(|w| w[1] >= w[0]));
}

#[test]
fn outputs_are_deterministic() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for dir in [a.path(), b.path()] {
        let d = dir.to_str().unwrap();
        assert!(jonesbeta(&["gen", "sigma0", "--nmax", "1", "--out", d]).status.success());
        assert!(jonesbeta(&["jones", "fourcorner", "--k", "5", "--at", "0.1,0", "--out", d]).status.success());
        assert!(jonesbeta(&["carleson", "fourcorner", "--k", "3", "--r", "0.5", "--out", d]).status.success());
        assert!(jonesbeta(&["render", "koch", "--color-stages", "--out", d]).status.success());
    }
    for name in ["set.json", "cubes.csv", "profile.csv", "profile.json", "carleson.csv", "carleson.json", "render.svg"] {
        assert_eq!(fs::read(a.path().join(name)).unwrap(), fs::read(b.path().join(name)).unwrap(), "{name}");
    }
}

#[test]
fn gen_load_gen_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let first = dir.path().join("first");
    let second = dir.path().join("second");
    let o = jonesbeta(&["gen", "a0", "--stage", "1", "--nmax", "2", "--out", first.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let input = first.join("set.json");
    let o = jonesbeta(&["gen", "--input", input.to_str().unwrap(), "--out", second.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(fs::read(&input).unwrap(), fs::read(second.join("set.json")).unwrap());
    assert_eq!(fs::read(first.join("cubes.csv")).unwrap(), fs::read(second.join("cubes.csv")).unwrap());

    // a loaded file answers queries like the family it came from
    let q = ["--at", "0.3,0", "--r", "0.2"];
    let direct = jonesbeta(&[&["beta", "a0", "--stage", "1"][..], &q].concat());
    let loaded = jonesbeta(&[&["beta", "--input", input.to_str().unwrap()][..], &q].concat());
    assert_eq!(stdout(&direct), stdout(&loaded));
}

#[test]
fn cube_report_columns() {
    let dir = tempfile::tempdir().unwrap();
    let o = jonesbeta(&["gen", "sigma0", "--nmax", "1", "--out", dir.path().to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = fs::read_to_string(dir.path().join("cubes.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("level,root_x,root_y,classification,mass,density"));
    let first: Vec<&str> = lines.next().unwrap().split(',').collect();
    assert_eq!(first[0], "0");
    assert_eq!(first[3], "scaled_sigma0_with_base");
}

#[test]
fn config_file_and_flag_precedence() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    fs::write(&cfg, "family = \"fourcorner\"\nk = 2\n").unwrap();
    let c = cfg.to_str().unwrap();
    let v: serde_json::Value = serde_json::from_str(&stdout(&jonesbeta(&["gen", "--config", c]))).unwrap();
    assert_eq!(v["segments"].as_array().unwrap().len(), 16);
    let v: serde_json::Value = serde_json::from_str(&stdout(&jonesbeta(&["gen", "--config", c, "--k", "3"]))).unwrap();
    assert_eq!(v["segments"].as_array().unwrap().len(), 64);
    fs::write(&cfg, "kay = 2\n").unwrap();
    assert_eq!(jonesbeta(&["gen", "--config", c]).status.code(), Some(2));
}

#[test]
fn render_counts() {
    let o = jonesbeta(&["render", "fourcorner", "--k", "3"]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(stdout(&o).matches("<polyline").count(), 64);

    // Koch k = 2, n = 2: [0, 1/9]; block 1 has one triadic piece and two
    // depth-1 roof legs (4 leaves each); block 2 one piece and two depth-3 legs
    let o = jonesbeta(&["render", "koch", "--k", "2", "--color-stages"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let svg = stdout(&o);
    let count = |class: u32| {
        let start = svg.find(&format!("class=\"stage-{class}\"")).unwrap();
        let end = start + svg[start..].find("</g>").unwrap();
        svg[start..end].matches("<polyline").count()
    };
    assert_eq!((count(0), count(1), count(2)), (1, 9, 129));

    let o = jonesbeta(&["render", "sigma0", "--nmax", "1", "--heatmap-r", "0.1", "--grid", "8"]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("class=\"heatmap\""));
}

#[test]
fn verify_suite_filter_and_report() {
    let dir = tempfile::tempdir().unwrap();
    let o = jonesbeta(&["verify", "--suite", "sigma0", "--out", dir.path().to_str().unwrap()]);
    let out = stdout(&o);
    let lines: Vec<&str> = out.lines().filter(|l| l.starts_with("PASS") || l.starts_with("FAIL")).collect();
    assert_eq!(lines.len(), 3);
    assert!(lines.iter().all(|l| l.contains("sigma0")));
    let report = read_json(&dir.path().join("report.json"));
    let passed = report["passed"].as_bool().unwrap();
    assert_eq!(o.status.success(), passed);
    assert!(report["defaults"]["seed"].is_u64());
    assert_eq!(jonesbeta(&["verify", "--suite", "nope"]).status.code(), Some(2));
}
