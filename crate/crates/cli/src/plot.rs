use std::path::Path;

use anyhow::{bail, Context, Result};
use image::{Rgb, RgbImage};
use imime_core::harness::{attention_fraction, WINDOW};

/// One point of the learning curve.
pub struct CurvePoint {
    pub window: usize,
    /// Decisions seen up to the end of this window.
    pub decisions: usize,
    pub attention: f64,
    /// Rewarded frames up to the last decision of this window.
    pub cumulative_reward: u64,
}

/// Per-window attention fraction from a `run` log.
pub fn learning_curve(log: &Path) -> Result<Vec<CurvePoint>> {
    let mut r = csv::Reader::from_path(log).with_context(|| format!("reading {}", log.display()))?;
    let headers = r.headers()?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .with_context(|| format!("{} lacks a {name} column", log.display()))
    };
    let (attending, reward, decision) = (col("attending")?, col("reward")?, col("decision")?);
    let mut bits = Vec::new();
    let mut rewards = Vec::new();
    let mut total = 0u64;
    for rec in r.records() {
        let rec = rec?;
        total += rec[reward].parse::<u64>().context("bad reward")?;
        if &rec[decision] == "1" {
            bits.push(&rec[attending] == "1");
            rewards.push(total);
        }
    }
    Ok(bits
        .chunks(WINDOW)
        .enumerate()
        .map(|(i, chunk)| {
            let end = (i * WINDOW + chunk.len()).min(bits.len());
            CurvePoint {
                window: i,
                decisions: end,
                attention: attention_fraction(chunk),
                cumulative_reward: rewards[end - 1],
            }
        })
        .collect())
}

pub fn plot(log: &Path, out: &Path) -> Result<()> {
    let curve = learning_curve(log)?;
    if curve.is_empty() {
        bail!("{} holds no decision ticks", log.display());
    }
    match out.extension().and_then(|e| e.to_str()) {
        Some("png") => render_png(&curve, out),
        _ => {
            let mut w = csv::Writer::from_path(out).with_context(|| format!("creating {}", out.display()))?;
            w.write_record(["window", "decisions", "attention_fraction", "cumulative_reward"])?;
            for p in &curve {
                w.write_record([
                    p.window.to_string(),
                    p.decisions.to_string(),
                    format!("{:.6}", p.attention),
                    p.cumulative_reward.to_string(),
                ])?;
            }
            w.flush()?;
            Ok(())
        }
    }
}

const W: u32 = 640;
const H: u32 = 360;
const PAD: u32 = 30;

fn line(img: &mut RgbImage, (x0, y0): (i64, i64), (x1, y1): (i64, i64), c: Rgb<u8>) {
    let steps = (x1 - x0).abs().max((y1 - y0).abs()).max(1);
    for i in 0..=steps {
        let x = x0 + (x1 - x0) * i / steps;
        let y = y0 + (y1 - y0) * i / steps;
        if (0..W as i64).contains(&x) && (0..H as i64).contains(&y) {
            img.put_pixel(x as u32, y as u32, c);
        }
    }
}

/// Attention fraction per window on a [0, 1] axis, gridlines every 0.25.
fn render_png(curve: &[CurvePoint], out: &Path) -> Result<()> {
    let mut img = RgbImage::from_pixel(W, H, Rgb([255, 255, 255]));
    let (left, right, top, bottom) = (PAD as i64, (W - PAD) as i64, PAD as i64, (H - PAD) as i64);
    let y_of = |f: f64| bottom - ((bottom - top) as f64 * f).round() as i64;
    for q in 1..=4 {
        let y = y_of(q as f64 / 4.0);
        line(&mut img, (left, y), (right, y), Rgb([220, 220, 220]));
    }
    line(&mut img, (left, bottom), (right, bottom), Rgb([0, 0, 0]));
    line(&mut img, (left, top), (left, bottom), Rgb([0, 0, 0]));
    let span = (curve.len().max(2) - 1) as f64;
    let pts: Vec<(i64, i64)> = curve
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let x = left + ((right - left) as f64 * i as f64 / span).round() as i64;
            (x, y_of(p.attention.clamp(0.0, 1.0)))
        })
        .collect();
    for pair in pts.windows(2) {
        line(&mut img, pair[0], pair[1], Rgb([200, 40, 40]));
    }
    if let [only] = pts.as_slice() {
        line(&mut img, *only, *only, Rgb([200, 40, 40]));
    }
    img.save(out).with_context(|| format!("writing {}", out.display()))?;
    Ok(())
}
