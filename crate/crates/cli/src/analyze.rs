use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use imime_core::attention::AttentionFuser;
use imime_core::harness::PixelVision;
use imime_core::Frame;

/// `prefix_NNN.pgm` files in `dir`, keyed by their number.
fn numbered(dir: &Path, prefix: &str) -> Result<BTreeMap<u64, PathBuf>> {
    let mut out = BTreeMap::new();
    for entry in fs::read_dir(dir).with_context(|| format!("reading {}", dir.display()))? {
        let path = entry?.path();
        let Some(name) = path.file_name().and_then(|n| n.to_str()) else {
            continue;
        };
        let Some(num) = name
            .strip_prefix(prefix)
            .and_then(|r| r.strip_prefix('_'))
            .and_then(|r| r.strip_suffix(".pgm"))
        else {
            continue;
        };
        if let Ok(n) = num.parse() {
            out.insert(n, path);
        }
    }
    Ok(out)
}

fn load(path: &Path) -> Result<Frame> {
    Frame::load_pgm(path).with_context(|| format!("loading {}", path.display()))
}

/// Ground-truth labels written next to dumped frames, if any.
fn read_truth(dir: &Path) -> Result<BTreeMap<u64, (String, String)>> {
    let path = dir.join("truth.csv");
    let mut out = BTreeMap::new();
    if !path.exists() {
        return Ok(out);
    }
    let mut r = csv::Reader::from_path(&path)?;
    let headers = r.headers()?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .with_context(|| format!("{} lacks a {name} column", path.display()))
    };
    let (tick, label, pose) = (col("tick")?, col("label")?, col("pose")?);
    for rec in r.records() {
        let rec = rec?;
        let t: u64 = rec[tick].parse().context("bad tick in truth.csv")?;
        out.insert(t, (rec[label].to_string(), rec[pose].to_string()));
    }
    Ok(out)
}

pub fn analyze(dir: &Path, config: &Path, out: Option<&Path>) -> Result<()> {
    let cfg = crate::run::load(config)?;
    let faces = numbered(dir, "face")?;
    if faces.is_empty() {
        bail!("no face_*.pgm frames in {}", dir.display());
    }
    let bodies = numbered(dir, "body")?;
    let background: Vec<Frame> = numbered(dir, "background")?
        .values()
        .map(|p| load(p))
        .collect::<Result<_>>()?;
    let truth = read_truth(dir)?;

    let mut vision = PixelVision::new(&cfg, &background)?;
    let mut fuser = AttentionFuser::new(cfg.vision.fusion);
    let sink: Box<dyn Write> = match out {
        Some(p) => Box::new(BufWriter::new(File::create(p).with_context(|| format!("creating {}", p.display()))?)),
        None => Box::new(io::stdout().lock()),
    };
    let mut w = csv::Writer::from_writer(sink);
    w.write_record([
        "frame",
        "face_x",
        "face_y",
        "face_w",
        "face_h",
        "orientation",
        "confidence",
        "motion",
        "expression",
        "jerk",
        "pose",
        "attending",
    ])?;
    let (mut label_hits, mut label_total, mut pose_hits, mut pose_total) = (0, 0, 0, 0);
    for (&tick, path) in &faces {
        let face = load(path)?;
        let body = bodies.get(&tick).map(|p| load(p)).transpose()?;
        let obs = vision.observe(&face, body.as_ref(), &cfg)?;
        let att = fuser.evaluate(&obs.cues, tick as f64 / cfg.run.fps);
        let orientation = obs.cues.orientation.map_or_else(|| "None".to_string(), |l| l.to_string());
        let pose = obs.cues.pose.map_or_else(|| "None".to_string(), |p| p.to_string());
        if let Some((want_label, want_pose)) = truth.get(&tick) {
            label_total += 1;
            label_hits += (*want_label == orientation) as usize;
            if body.is_some() && !background.is_empty() {
                pose_total += 1;
                pose_hits += (*want_pose == pose) as usize;
            }
        }
        let (rect, confidence, motion, expression) = match &obs.face {
            Some(f) => (
                Some(f.rect.rect()),
                format!("{:.4}", f.orientation.confidence),
                format!("{:?}", f.motion),
                f.expression.to_string(),
            ),
            None => (None, String::new(), String::new(), String::new()),
        };
        let coord = |f: fn(&imime_core::Rect) -> usize| rect.as_ref().map_or(String::new(), |r| f(r).to_string());
        w.write_record([
            tick.to_string(),
            coord(|r| r.x),
            coord(|r| r.y),
            coord(|r| r.w),
            coord(|r| r.h),
            orientation,
            confidence,
            motion,
            expression,
            format!("{:.6}", obs.cues.jerk),
            pose,
            (att.attending as u8).to_string(),
        ])?;
    }
    w.flush()?;
    if label_total > 0 {
        eprintln!("orientation agrees with truth on {label_hits}/{label_total} frames");
    }
    if pose_total > 0 {
        eprintln!("pose agrees with truth on {pose_hits}/{pose_total} frames");
    }
    Ok(())
}
