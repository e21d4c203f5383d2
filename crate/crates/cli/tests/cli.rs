use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn dimer(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dimer"))
        .args(args)
        .env("DIMER_OUT_DIR", out)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn read_dir_sorted(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), fs::read(e.path()).unwrap())
        })
        .collect();
    files.sort();
    files
}

#[test]
fn fixed_points_table_lists_four_records_with_the_sink() {
    let dir = tempfile::tempdir().unwrap();
    let o = dimer(&["fixed-points", "--g", "2", "--gamma", "0.5", "--v", "1", "--epsilon", "0"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let table = stdout(&o);
    let rows: Vec<&str> = table.lines().skip(1).take_while(|l| !l.starts_with("region")).collect();
    assert_eq!(rows.len(), 4, "{table}");
    let sink = rows.iter().find(|r| r.contains("sink")).expect("sink row");
    let sz: f64 = sink.split_whitespace().nth(2).unwrap().parse().unwrap();
    assert!((sz + 0.437238).abs() < 2e-6, "{sz}");

    let csv = fs::read_to_string(dir.path().join("fixed-points.csv")).unwrap();
    let sink_sz: f64 = csv
        .lines()
        .find(|l| l.contains(",sink,"))
        .and_then(|l| l.split(',').nth(2))
        .unwrap()
        .parse()
        .unwrap();
    let g2: f64 = 4.25;
    assert!((sink_sz + (g2 - 1.0).sqrt() / (2.0 * g2.sqrt())).abs() < 1e-12);
}

#[test]
fn figure3_bottom_writes_csv_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let o = dimer(&["figure", "3", "--panel", "bottom", "--out", out.to_str().unwrap()], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = fs::read_to_string(out.join("figure3-bottom.csv")).unwrap();
    assert!(csv.starts_with("t,sx_mp,sy_mp,sz_mp,"));
    assert_eq!(csv.lines().count(), 4002);
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("figure3-bottom.manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["config"]["g"], "2");
    assert_eq!(manifest["config"]["gamma"], "0.5");
    assert_eq!(manifest["config"]["n"], "20");
    let dist = manifest["diagnostics"]["imbalance"]["sink_distance_mp"].as_f64().unwrap();
    assert!(dist < 0.05, "{dist}");
    let manifests = fs::read_dir(&out)
        .unwrap()
        .filter(|e| e.as_ref().unwrap().file_name().to_string_lossy().ends_with(".manifest.json"))
        .count();
    assert_eq!(manifests, 1);
}

#[test]
fn off_sphere_initial_state_is_a_validation_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = dimer(&["mf-evolve", "--init", "bloch:0.5,0.5,0"], dir.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("sphere"), "{}", stderr(&o));
}

#[test]
fn bad_flags_and_spec_keys_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(dimer(&["fixed-points", "--bogus", "1"], dir.path()).status.code(), Some(1));
    let spec = dir.path().join("run.spec");
    fs::write(&spec, "g = 2\nwidth = 3\n").unwrap();
    let o = dimer(&["compare", "--spec", spec.to_str().unwrap()], dir.path());
    assert_eq!(o.status.code(), Some(1));
    let msg = stderr(&o);
    assert!(msg.contains(":2:") && msg.contains("`width`"), "{msg}");
}

#[test]
fn numerical_failure_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let o = dimer(&["mf-evolve", "--rtol", "1e-300", "--atol", "1e-300", "--t-max", "1"], dir.path());
    assert_eq!(o.status.code(), Some(2), "{}{}", stdout(&o), stderr(&o));
    assert!(stderr(&o).contains("integration failed"));
}

#[test]
fn fixed_step_reruns_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let args = |out: &str| {
        vec![
            "compare".to_string(),
            "--g".into(),
            "1.5".into(),
            "--gamma".into(),
            "0.2".into(),
            "--n".into(),
            "8".into(),
            "--t-max".into(),
            "4".into(),
            "--samples".into(),
            "41".into(),
            "--fixed-step".into(),
            "0.01".into(),
            "--out".into(),
            out.to_string(),
        ]
    };
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    for d in [&a, &b] {
        let argv = args(d.to_str().unwrap());
        let argv: Vec<&str> = argv.iter().map(String::as_str).collect();
        let o = dimer(&argv, dir.path());
        assert!(o.status.success(), "{}", stderr(&o));
    }
    assert_eq!(read_dir_sorted(&a), read_dir_sorted(&b));
}

#[test]
fn manifest_reruns_reproduce_the_run() {
    let dir = tempfile::tempdir().unwrap();
    let first = dir.path().join("first");
    let spec = dir.path().join("run.spec");
    fs::write(&spec, "# small comparison\nid = probe\ng = 0.8\ngamma = 0.3\nn = 6\nt_max = 3\nsamples = 31\ninit = bloch:0.5,0,0\n")
        .unwrap();
    let o = dimer(&["compare", "--spec", spec.to_str().unwrap(), "--out", first.to_str().unwrap()], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let manifest = first.join("probe.manifest.json");
    let second = dir.path().join("second");
    let o = dimer(&["compare", "--spec", manifest.to_str().unwrap(), "--out", second.to_str().unwrap()], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(read_dir_sorted(&first), read_dir_sorted(&second));

    let o = dimer(&["mp-evolve", "--spec", manifest.to_str().unwrap()], dir.path());
    assert_eq!(o.status.code(), Some(1), "manifest command must match");
}

#[test]
fn batched_compare_writes_one_manifest_per_run() {
    let dir = tempfile::tempdir().unwrap();
    let mut specs = Vec::new();
    for (i, g) in ["0.5", "1.5", "2.5"].iter().enumerate() {
        let p = dir.path().join(format!("s{i}.spec"));
        fs::write(&p, format!("id = run{i}\ng = {g}\ngamma = 0.1\nn = 5\nt_max = 2\nsamples = 21\n")).unwrap();
        specs.push(p);
    }
    let out = dir.path().join("out");
    let mut argv = vec!["compare".to_string()];
    for p in &specs {
        argv.push("--spec".into());
        argv.push(p.to_string_lossy().into_owned());
    }
    argv.extend(["--out".into(), out.to_string_lossy().into_owned(), "--threads".into(), "2".into()]);
    let argv: Vec<&str> = argv.iter().map(String::as_str).collect();
    let o = dimer(&argv, dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let names: Vec<String> = read_dir_sorted(&out).into_iter().map(|(n, _)| n).collect();
    assert_eq!(
        names,
        ["run0.csv", "run0.manifest.json", "run1.csv", "run1.manifest.json", "run2.csv", "run2.manifest.json"]
    );
}

#[test]
fn evolve_commands_write_their_series() {
    let dir = tempfile::tempdir().unwrap();
    for (cmd, header) in [
        ("mp-evolve", "t,sx,sy,sz,survival,pop1,pop2"),
        ("mf-evolve", "t,sx,sy,sz,n"),
        ("gpe-evolve", "t,re_psi1,im_psi1,re_psi2,im_psi2,beta,n,sx,sy,sz"),
    ] {
        let o = dimer(
            &[cmd, "--g", "1", "--gamma", "0.2", "--n", "6", "--t-max", "2", "--samples", "11"],
            dir.path(),
        );
        assert!(o.status.success(), "{cmd}: {}", stderr(&o));
        let csv = fs::read_to_string(dir.path().join(format!("{cmd}.csv"))).unwrap();
        assert_eq!(csv.lines().next(), Some(header));
        assert_eq!(csv.lines().count(), 12);
        assert!(dir.path().join(format!("{cmd}.manifest.json")).exists());
    }
}

#[test]
fn region_scan_and_phase_portrait_run() {
    let dir = tempfile::tempdir().unwrap();
    let o = dimer(
        &["region-scan", "--g-max", "2", "--g-steps", "11", "--gamma-max", "2", "--gamma-steps", "11"],
        dir.path(),
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let scan = fs::read_to_string(dir.path().join("region-scan.csv")).unwrap();
    assert_eq!(scan.lines().count(), 1 + 11 * 11);
    assert!(dir.path().join("region-scan-crossings.csv").exists());

    let o = dimer(
        &["phase-portrait", "--g", "2", "--gamma", "0.75", "--seeds-theta", "2", "--seeds-phi", "3", "--t-max", "1"],
        dir.path(),
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let traj = fs::read_to_string(dir.path().join("phase-portrait-trajectories.csv")).unwrap();
    assert_eq!(traj.lines().count(), 1 + 6 * 401);
}

#[test]
fn help_is_available_per_subcommand() {
    let dir = tempfile::tempdir().unwrap();
    for cmd in ["mp-evolve", "compare", "figure", "region-scan"] {
        let o = dimer(&[cmd, "--help"], dir.path());
        assert!(o.status.success());
        assert!(stdout(&o).contains("Usage"));
    }
}
