use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn imime(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_imime")).args(args).output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn config(dir: &Path, body: &str) -> PathBuf {
    let p = dir.join("run.ini");
    fs::write(&p, body).unwrap();
    p
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn run_writes_outputs_and_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), "[run]\nsteps = 2000\nseed = 9\n");
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for out in [&a, &b] {
        let o = imime(&["run", "--config", s(&cfg), "--out", s(out)]);
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    }
    for f in ["log.csv", "decisions.csv", "learner.csv", "metrics.csv", "windows.csv"] {
        let (x, y) = (fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap());
        assert!(!x.is_empty(), "{f} empty");
        assert!(x == y, "{f} differs between identical runs");
    }
    let log = fs::read_to_string(a.join("log.csv")).unwrap();
    assert_eq!(log.lines().count(), 2001);
    assert!(log.starts_with("tick,routine,cause,attending,reward,explore,jerk,orientation,decision"));

    let o = imime(&["run", "--config", s(&cfg), "--out", s(&dir.path().join("c")), "--seed", "10"]);
    assert_eq!(code(&o), 0);
    assert_ne!(fs::read(a.join("log.csv")).unwrap(), fs::read(dir.path().join("c/log.csv")).unwrap());
}

#[test]
fn config_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nope.ini");
    assert_eq!(code(&imime(&["run", "--config", s(&missing)])), 2);
    for body in [
        "[run]\nstpes = 3\n",
        "[learning]\ngamma = 1.5\n",
        "[run]\ndump_frames = true\n",
        "[viewer]\nprofile = absent.csv\n",
    ] {
        let cfg = config(dir.path(), body);
        let o = imime(&["run", "--config", s(&cfg), "--out", s(&dir.path().join("o"))]);
        assert_eq!(code(&o), 2, "{body:?}: {}", String::from_utf8_lossy(&o.stderr));
    }
    let cfg = config(dir.path(), "[run]\nsteps = 0\n");
    assert_eq!(code(&imime(&["oracle", "--config", s(&cfg)])), 2);
}

#[test]
fn runtime_errors_exit_with_three() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), "");
    let o = imime(&["analyze", "--frames", s(&dir.path().join("missing")), "--config", s(&cfg)]);
    assert_eq!(code(&o), 3);
    let log = dir.path().join("log.csv");
    fs::write(&log, "tick,attending\n0,1\n").unwrap();
    let o = imime(&["plot", "--log", s(&log), "--out", s(&dir.path().join("c.csv"))]);
    assert_eq!(code(&o), 3);
}

#[test]
fn oracle_prints_the_cycle_policy() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), "");
    let o = imime(&["oracle", "--config", s(&cfg)]);
    assert_eq!(code(&o), 0);
    let text = String::from_utf8(o.stdout).unwrap();
    let actions: Vec<&str> = text.lines().skip(1).map(|l| l.split(',').nth(2).unwrap()).collect();
    assert_eq!(
        actions,
        ["Beckon", "Beckon", "Mimic", "Mimic", "Ponder", "Ponder", "IdleGazeWander", "IdleGazeWander"]
    );
}

#[test]
fn plot_writes_csv_and_png() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), "[run]\nsteps = 5000\n");
    let out = dir.path().join("run");
    assert_eq!(code(&imime(&["run", "--config", s(&cfg), "--out", s(&out)])), 0);
    let csv = dir.path().join("curve.csv");
    let o = imime(&["plot", "--log", s(&out.join("log.csv")), "--out", s(&csv)]);
    assert_eq!(code(&o), 0);
    let text = fs::read_to_string(&csv).unwrap();
    let rows: Vec<&str> = text.lines().collect();
    assert_eq!(rows[0], "window,decisions,attention_fraction,cumulative_reward");
    // 250 decisions in windows of 100
    assert_eq!(rows.len(), 4);
    assert!(rows[3].starts_with("2,250,"));
    let windows = fs::read_to_string(out.join("windows.csv")).unwrap();
    for (w, c) in windows.lines().skip(1).zip(rows.iter().skip(1)) {
        assert_eq!(w.split(',').nth(1), c.split(',').nth(2));
    }

    let png = dir.path().join("curve.png");
    assert_eq!(code(&imime(&["plot", "--log", s(&out.join("log.csv")), "--out", s(&png)])), 0);
    assert_eq!(&fs::read(&png).unwrap()[..8], b"\x89PNG\r\n\x1a\n");
}

#[test]
fn analyze_reads_dumped_frames() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), "[run]\nsteps = 60\nmode = pixels\n");
    let out = dir.path().join("run");
    let o = imime(&["run", "--config", s(&cfg), "--out", s(&out), "--dump-frames"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let frames = out.join("frames");
    assert!(frames.join("face_000000.pgm").exists());
    assert!(frames.join("body_000059.pgm").exists());
    assert!(frames.join("background_000.pgm").exists());

    let csv = dir.path().join("analysis.csv");
    let o = imime(&["analyze", "--frames", s(&frames), "--config", s(&cfg), "--out", s(&csv)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let text = fs::read_to_string(&csv).unwrap();
    assert_eq!(text.lines().count(), 61);
    let report = String::from_utf8(o.stderr).unwrap();
    let agreed: Vec<u32> = report
        .lines()
        .filter_map(|l| l.split(" on ").nth(1)?.split('/').next()?.parse().ok())
        .collect();
    assert_eq!(agreed.len(), 2, "{report}");
    assert!(agreed.iter().all(|&n| n >= 55), "{report}");
}
