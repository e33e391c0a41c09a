mod common;

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn pano_track(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pano-track"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn scenario(name: &str) -> String {
    common::scenario_dir().join(name).display().to_string()
}

fn csv_files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|x| x == "csv"))
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap()))
        .collect();
    files.sort();
    files
}

#[test]
fn unknown_override_key_is_a_schema_error() {
    let out = tempfile::tempdir().unwrap();
    let o = pano_track(&[
        "track",
        "--scenario",
        &scenario("spiral_6m.json"),
        "--out",
        out.path().to_str().unwrap(),
        "--override",
        "sensor.fov_horiz=1.0",
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("fov_horiz"));
}

#[test]
fn track_writes_identical_csvs_on_rerun() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for dir in [&a, &b] {
        let o = pano_track(&[
            "track",
            "--scenario",
            &scenario("elliptical_7m.json"),
            "--out",
            dir.path().to_str().unwrap(),
            "--frames",
            "80",
            "--seed",
            "4",
        ]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    let (fa, fb) = (csv_files(a.path()), csv_files(b.path()));
    assert_eq!(fa.len(), 4, "three trajectories plus ground truth");
    assert_eq!(fa, fb);

    let header = String::from_utf8_lossy(&fa.iter().find(|(n, _)| n.contains("fused")).unwrap().1).into_owned();
    assert!(header.starts_with("t,x,y,z,vx,vy,vz,source,cluster_count\n"));
    assert!(!header.contains('\r'));
}

#[test]
fn track_reports_a_verdict_and_report_reproduces_it() {
    let out = tempfile::tempdir().unwrap();
    let dir = out.path().to_str().unwrap();
    let path = scenario("spiral_8m.json");
    let o = pano_track(&["track", "--scenario", &path, "--out", dir, "--frames", "200"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let text = fs::read_to_string(out.path().join("comparison.txt")).unwrap();
    assert!(text.contains("fused best mean APE"), "{text}");

    let again = pano_track(&["report", "--scenario", &path, "--out", dir, "--frames", "200"]);
    assert_eq!(again.status.code(), Some(0), "{}", String::from_utf8_lossy(&again.stderr));
    assert!(String::from_utf8_lossy(&again.stdout).contains("fused best mean APE"));
}

#[test]
fn bench_rejects_short_runs() {
    let out = tempfile::tempdir().unwrap();
    let o = pano_track(&[
        "bench",
        "--scenario",
        &scenario("spiral_6m.json"),
        "--out",
        out.path().to_str().unwrap(),
        "--frames",
        "50",
    ]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn never_initialized_tracker_exits_with_three() {
    let out = tempfile::tempdir().unwrap();
    let o = pano_track(&[
        "track",
        "--scenario",
        &scenario("spiral_6m.json"),
        "--out",
        out.path().to_str().unwrap(),
        "--frames",
        "30",
        "--modes",
        "image_only",
        "--override",
        "detector.simulated.max_reliable_range=0.01",
    ]);
    assert_eq!(o.status.code(), Some(3), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn gen_writes_one_dump_per_frame() {
    let out = tempfile::tempdir().unwrap();
    let o = pano_track(&[
        "gen",
        "--scenario",
        &scenario("spiral_6m.json"),
        "--out",
        out.path().to_str().unwrap(),
        "--frames",
        "5",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(fs::read_dir(out.path().join("scans")).unwrap().count(), 5);
}
