use std::path::Path;
use std::process::{Command, Output};

fn rppg(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rppg"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn synth(dir: &Path, extra: &[&str]) {
    let mut args = vec!["synth", "--out", p(dir)];
    args.extend_from_slice(extra);
    let out = rppg(&args);
    assert!(out.status.success(), "{}", stderr(&out));
}

fn read(path: &Path) -> String {
    std::fs::read_to_string(path).unwrap()
}

fn data_rows(csv: &str) -> Vec<Vec<String>> {
    csv.lines()
        .skip(1)
        .map(|l| l.split(',').map(String::from).collect())
        .collect()
}

#[test]
fn synth_writes_session_files() {
    let tmp = tempfile::tempdir().unwrap();
    let s = tmp.path().join("s1");
    synth(&s, &["--hr", "72", "--duration", "60"]);
    for f in [
        "manifest.json",
        "frames.raw",
        "boxes.csv",
        "groundtruth.csv",
    ] {
        assert!(s.join(f).is_file(), "{f}");
    }
    let gt = read(&s.join("groundtruth.csv"));
    assert_eq!(gt.lines().count(), 61);
    assert!(gt.lines().skip(1).all(|l| l.ends_with(",72")));
    assert_eq!(
        std::fs::metadata(s.join("frames.raw")).unwrap().len(),
        64 * 64 * 3 * 1800
    );
}

#[test]
fn synth_step_profile_switches_groundtruth() {
    let tmp = tempfile::tempdir().unwrap();
    synth(
        tmp.path(),
        &["--profile", "step:70,100,30", "--duration", "60"],
    );
    let gt = read(&tmp.path().join("groundtruth.csv"));
    assert!(gt.contains("\n29,70\n"));
    assert!(gt.contains("\n30,100\n"));
}

#[test]
fn synth_rejects_out_of_band_rate() {
    let tmp = tempfile::tempdir().unwrap();
    let out = rppg(&["synth", "--hr", "500", "--out", p(tmp.path())]);
    assert_eq!(out.status.code(), Some(1));
    let err = stderr(&out);
    assert!(err.contains("InvalidConfig"), "{err}");
    assert!(err.contains("240"), "{err}");
    assert!(!tmp.path().join("frames.raw").exists());
}

#[test]
fn unknown_flag_exits_one_with_json() {
    let out = rppg(&["estimate", "--bogus"]);
    assert_eq!(out.status.code(), Some(1));
    let line: serde_json::Value = serde_json::from_str(stderr(&out).trim()).unwrap();
    assert_eq!(line["error"], "InvalidArguments");
}

#[test]
fn estimate_constant_session() {
    let tmp = tempfile::tempdir().unwrap();
    let s = tmp.path().join("s");
    let out_dir = tmp.path().join("est");
    synth(&s, &["--hr", "72"]);
    let out = rppg(&["estimate", p(&s), "--window", "10", "--out", p(&out_dir)]);
    assert!(out.status.success(), "{}", stderr(&out));

    let series = read(&out_dir.join("hr_series.csv"));
    assert!(series.starts_with("window_start_s,window_end_s,bpm\n"));
    let rows = data_rows(&series);
    assert_eq!(rows.len(), 6);
    for r in &rows {
        let bpm: f64 = r[2].parse().unwrap();
        assert!((bpm - 72.0).abs() <= 1.5, "{bpm}");
    }
    let summary: serde_json::Value =
        serde_json::from_str(&read(&out_dir.join("summary.json"))).unwrap();
    assert_eq!(summary["n_windows"], 6);
    assert_eq!(summary["window_s"], 10.0);
    assert!((summary["session_mean_bpm"].as_f64().unwrap() - 72.0).abs() <= 1.5);

    let pairs = data_rows(&read(&out_dir.join("gt_vs_est.csv")));
    assert_eq!(pairs.len(), 6);
    assert!(pairs.iter().all(|r| r[2] == "72"));
}

#[test]
fn estimate_with_hop_gives_overlapping_rows() {
    let tmp = tempfile::tempdir().unwrap();
    let s = tmp.path().join("s");
    let out_dir = tmp.path().join("est");
    synth(&s, &["--hr", "72"]);
    let out = rppg(&[
        "estimate",
        p(&s),
        "--window",
        "10",
        "--hop",
        "2",
        "--out",
        p(&out_dir),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    assert_eq!(data_rows(&read(&out_dir.join("hr_series.csv"))).len(), 26);
}

#[test]
fn estimate_missing_boxes_exits_one() {
    let tmp = tempfile::tempdir().unwrap();
    let s = tmp.path().join("s");
    synth(&s, &["--duration", "20"]);
    std::fs::remove_file(s.join("boxes.csv")).unwrap();
    let out = rppg(&["estimate", p(&s), "--out", p(&tmp.path().join("o"))]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("MissingFile"), "{}", stderr(&out));
}

#[test]
fn estimate_rejects_bad_window_before_processing() {
    let tmp = tempfile::tempdir().unwrap();
    let s = tmp.path().join("s");
    synth(&s, &["--duration", "20"]);
    let out = rppg(&[
        "estimate",
        p(&s),
        "--window",
        "2",
        "--out",
        p(&tmp.path().join("o")),
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("InvalidWindow"));
    let out = rppg(&[
        "estimate",
        p(&s),
        "--band",
        "0.7:20",
        "--out",
        p(&tmp.path().join("o")),
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("InvalidBand"));
}

#[test]
fn estimate_too_short_session_exits_two() {
    let tmp = tempfile::tempdir().unwrap();
    let s = tmp.path().join("s");
    synth(&s, &["--duration", "15"]);
    let out = rppg(&[
        "estimate",
        p(&s),
        "--window",
        "20",
        "--out",
        p(&tmp.path().join("o")),
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("SessionTooShort"));
}

#[test]
fn evaluate_perfect_estimates_scores_zero() {
    let tmp = tempfile::tempdir().unwrap();
    let est = tmp.path().join("hr_series.csv");
    let gt = tmp.path().join("gt.csv");
    std::fs::write(
        &est,
        "window_start_s,window_end_s,bpm\n0,10,72\n10,20,75\n20,30,80\n",
    )
    .unwrap();
    let mut text = String::from("t,bpm\n");
    for t in 0..30 {
        text.push_str(&format!("{t},{}\n", [72, 75, 80][t / 10]));
    }
    std::fs::write(&gt, text).unwrap();
    let out_dir = tmp.path().join("r");
    let out = rppg(&[
        "evaluate",
        "--estimates",
        p(&est),
        "--groundtruth",
        p(&gt),
        "--out",
        p(&out_dir),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let report: serde_json::Value =
        serde_json::from_str(&read(&out_dir.join("report.json"))).unwrap();
    assert_eq!(report["per_session"][0]["sub51_bpm"], 0.0);
    assert_eq!(report["per_session"][0]["sub52_bpm"], 0.0);
    assert_eq!(report["aggregation"], "unweighted mean over sessions");
    assert!(read(&out_dir.join("report.csv"))
        .starts_with("session,channel,window_s,sub51_bpm,sub52_bpm,n_windows\n"));
}

#[test]
fn evaluate_clean_session() {
    let tmp = tempfile::tempdir().unwrap();
    let s = tmp.path().join("clean");
    synth(&s, &["--hr", "84"]);
    let out_dir = tmp.path().join("r");
    let out = rppg(&["evaluate", p(&s), "--window", "10", "--out", p(&out_dir)]);
    assert!(out.status.success(), "{}", stderr(&out));
    let report: serde_json::Value =
        serde_json::from_str(&read(&out_dir.join("report.json"))).unwrap();
    let row = &report["per_session"][0];
    assert_eq!(row["session"], "clean");
    assert!(row["sub52_bpm"].as_f64().unwrap() <= 1.5);
    assert_eq!(row["n_windows"], 6);
}

#[test]
fn evaluate_short_groundtruth_reports_empty_windows() {
    let tmp = tempfile::tempdir().unwrap();
    let s = tmp.path().join("s");
    synth(&s, &["--duration", "30"]);
    let gt = s.join("groundtruth.csv");
    let truncated: String = read(&gt)
        .lines()
        .take(11)
        .map(|l| format!("{l}\n"))
        .collect();
    std::fs::write(&gt, truncated).unwrap();
    let out_dir = tmp.path().join("r");
    let out = rppg(&["evaluate", p(&s), "--window", "5", "--out", p(&out_dir)]);
    assert_eq!(out.status.code(), Some(2));
    let err = stderr(&out);
    assert!(err.contains("EmptyWindowGt"), "{err}");
    assert!(err.contains("[2, 3, 4, 5]"), "{err}");
    let csv = read(&out_dir.join("report.csv"));
    assert!(csv.contains("excluded,channel,window_s,error,reason"));
    assert!(csv.contains("EmptyWindowGt"));
}

#[test]
fn sweep_protocol_axes() {
    let tmp = tempfile::tempdir().unwrap();
    let s = tmp.path().join("s");
    synth(&s, &["--hr", "66"]);
    for (protocol, columns) in [("5.1", 4), ("5.2", 9)] {
        let out_dir = tmp.path().join(protocol);
        let out = rppg(&["sweep", p(&s), "--protocol", protocol, "--out", p(&out_dir)]);
        assert!(out.status.success(), "{}", stderr(&out));
        let table = read(&out_dir.join("table_rgb.csv"));
        let header: Vec<&str> = table.lines().next().unwrap().split(',').collect();
        assert_eq!(header.len(), 2 + columns, "{table}");
        assert!(out_dir.join("sweep_rgb.csv").is_file());
        assert!(out_dir.join("sweep_rgb.json").is_file());
    }
}

#[test]
fn sweep_single_length_has_one_row() {
    let tmp = tempfile::tempdir().unwrap();
    let s = tmp.path().join("s");
    synth(&s, &["--duration", "20"]);
    let out_dir = tmp.path().join("o");
    let out = rppg(&["sweep", p(&s), "--lengths", "10", "--out", p(&out_dir)]);
    assert!(out.status.success(), "{}", stderr(&out));
    let report: serde_json::Value =
        serde_json::from_str(&read(&out_dir.join("sweep_rgb.json"))).unwrap();
    assert_eq!(report["per_session"].as_array().unwrap().len(), 1);
    assert_eq!(report["dataset"].as_array().unwrap().len(), 1);
}

#[test]
fn sweep_dataset_row_is_session_mean_and_reruns_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    synth(
        &a,
        &[
            "--hr",
            "70",
            "--noise",
            "4",
            "--seed",
            "1",
            "--duration",
            "30",
        ],
    );
    synth(
        &b,
        &[
            "--profile",
            "ramp:80,110",
            "--noise",
            "4",
            "--seed",
            "2",
            "--duration",
            "30",
        ],
    );
    let out_dir = tmp.path().join("o");
    let args = [
        "sweep",
        p(&a),
        p(&b),
        "--protocol",
        "5.2",
        "--lengths",
        "5,10",
        "--out",
        p(&out_dir),
    ];
    let out = rppg(&args);
    assert!(out.status.success(), "{}", stderr(&out));

    let report: serde_json::Value =
        serde_json::from_str(&read(&out_dir.join("sweep_rgb.json"))).unwrap();
    let sessions = report["per_session"].as_array().unwrap();
    assert_eq!(sessions.len(), 4);
    for d in report["dataset"].as_array().unwrap() {
        let w = d["window_s"].as_f64().unwrap();
        let rows: Vec<_> = sessions
            .iter()
            .filter(|r| r["window_s"].as_f64() == Some(w))
            .collect();
        assert_eq!(rows.len(), 2);
        for key in ["sub51", "sub52"] {
            let mean = (rows[0][format!("{key}_bpm")].as_f64().unwrap()
                + rows[1][format!("{key}_bpm")].as_f64().unwrap())
                / 2.0;
            let got = d[format!("{key}_mae_bpm")].as_f64().unwrap();
            assert!(
                (got - mean).abs() <= 1e-12 * mean.max(1.0),
                "{key}: {got} vs {mean}"
            );
        }
    }

    let files = ["sweep_rgb.csv", "sweep_rgb.json", "table_rgb.csv"];
    let first: Vec<Vec<u8>> = files
        .iter()
        .map(|f| std::fs::read(out_dir.join(f)).unwrap())
        .collect();
    let out = rppg(&args);
    assert!(out.status.success());
    let second: Vec<Vec<u8>> = files
        .iter()
        .map(|f| std::fs::read(out_dir.join(f)).unwrap())
        .collect();
    assert_eq!(first, second);
}

#[test]
fn sweep_continues_past_failed_session() {
    let tmp = tempfile::tempdir().unwrap();
    let good = tmp.path().join("good");
    let bad = tmp.path().join("bad");
    synth(&good, &["--duration", "20"]);
    synth(&bad, &["--duration", "20"]);
    std::fs::write(bad.join("boxes.csv"), "frame,x,y,w,h\n").unwrap();
    let out_dir = tmp.path().join("o");
    let out = rppg(&[
        "sweep",
        p(&good),
        p(&bad),
        "--lengths",
        "10",
        "--out",
        p(&out_dir),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    assert!(stderr(&out).contains("EmptyTrack"));
    let csv = read(&out_dir.join("sweep_rgb.csv"));
    assert!(csv.contains("\nbad,rgb,,EmptyTrack,"), "{csv}");
    assert!(csv.contains("dataset_unweighted_mean,rgb,10,"));
}

#[test]
fn nir_channel_and_mono_session() {
    let tmp = tempfile::tempdir().unwrap();
    let s = tmp.path().join("nir");
    synth(&s, &["--mono", "--hr", "90"]);
    let out_dir = tmp.path().join("o");
    let out = rppg(&[
        "sweep",
        p(&s),
        "--channel",
        "nir",
        "--lengths",
        "10",
        "--out",
        p(&out_dir),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let table = read(&out_dir.join("table_nir.csv"));
    assert!(table
        .lines()
        .nth(2)
        .unwrap()
        .starts_with("sub52_mae_bpm,nir,"));
}
