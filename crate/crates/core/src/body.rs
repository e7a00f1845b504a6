//! Upper-body analysis: per-pixel Gaussian background, Mahalanobis
//! segmentation, 1-D cloth drape and correlation-based pose matching.

use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use thiserror::Error;

use crate::frame::{Frame, FrameError};
use crate::par::{self, Exec};

pub const VARIANCE_FLOOR: f64 = 4.0;

#[derive(Debug, Error)]
pub enum BodyError {
    #[error("background training needs at least 2 frames, got {0}")]
    TooFewFrames(usize),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("reference set is empty")]
    EmptyReferenceSet,
    #[error("profile length {got} does not match reference length {expected}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("unknown pose label {0:?}")]
    UnknownPoseLabel(String),
    #[error("malformed csv: {0}")]
    Csv(String),
    #[error(transparent)]
    Frame(#[from] FrameError),
}

impl From<csv::Error> for BodyError {
    fn from(e: csv::Error) -> Self {
        BodyError::Csv(e.to_string())
    }
}

/// Per-pixel intensity mean and variance.
#[derive(Debug, Clone, PartialEq)]
pub struct BackgroundModel {
    width: usize,
    height: usize,
    mean: Vec<f64>,
    var: Vec<f64>,
}

impl BackgroundModel {
    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn variance(&self) -> &[f64] {
        &self.var
    }

    /// CSV layout: header `stat,row,c0..c{w-1}`; one `mean` row per image
    /// row followed by one `var` row per image row.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), BodyError> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["stat".to_string(), "row".to_string()];
        header.extend((0..self.width).map(|c| format!("c{c}")));
        w.write_record(&header)?;
        for (stat, buf) in [("mean", &self.mean), ("var", &self.var)] {
            for y in 0..self.height {
                let mut rec = vec![stat.to_string(), y.to_string()];
                rec.extend(buf[y * self.width..(y + 1) * self.width].iter().map(f64::to_string));
                w.write_record(&rec)?;
            }
        }
        w.flush().map_err(|e| BodyError::Csv(e.to_string()))
    }

    pub fn read_csv<R: Read>(input: R) -> Result<Self, BodyError> {
        let mut r = csv::Reader::from_reader(input);
        let width = r.headers()?.len().saturating_sub(2);
        let (mut mean, mut var) = (Vec::new(), Vec::new());
        for rec in r.records() {
            let rec = rec?;
            let vals = rec
                .iter()
                .skip(2)
                .map(|v| v.parse::<f64>().map_err(|e| BodyError::Csv(e.to_string())))
                .collect::<Result<Vec<_>, _>>()?;
            if vals.len() != width {
                return Err(BodyError::Csv(format!("row has {} values, expected {width}", vals.len())));
            }
            match rec.get(0) {
                Some("mean") => mean.extend(vals),
                Some("var") => var.extend(vals),
                other => return Err(BodyError::Csv(format!("unknown stat {other:?}"))),
            }
        }
        if width == 0 || mean.len() != var.len() || mean.len() % width != 0 {
            return Err(BodyError::Csv("mean/var blocks inconsistent".into()));
        }
        Ok(Self {
            width,
            height: mean.len() / width,
            mean,
            var,
        })
    }
}

/// Population mean/variance per pixel, variance clamped to `floor`.
pub fn train_background(frames: &[Frame], floor: f64, exec: Exec) -> Result<BackgroundModel, BodyError> {
    if frames.len() < 2 {
        return Err(BodyError::TooFewFrames(frames.len()));
    }
    let first = &frames[0];
    for f in &frames[1..] {
        f.same_dims(first)
            .map_err(|e| BodyError::DimensionMismatch(e.to_string()))?;
    }
    let (w, h) = (first.width(), first.height());
    let n = frames.len() as f64;
    let mut stats = vec![(0.0f64, 0.0f64); w * h];
    par::for_each_row(exec, &mut stats, w, |y, row| {
        for (x, slot) in row.iter_mut().enumerate() {
            let i = y * w + x;
            let mean = frames.iter().map(|f| f.data()[i] as f64).sum::<f64>() / n;
            let var = frames
                .iter()
                .map(|f| (f.data()[i] as f64 - mean).powi(2))
                .sum::<f64>()
                / n;
            *slot = (mean, var.max(floor));
        }
    });
    let (mean, var) = stats.into_iter().unzip();
    Ok(BackgroundModel {
        width: w,
        height: h,
        mean,
        var,
    })
}

/// Binary foreground map.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ForegroundMask {
    width: usize,
    height: usize,
    bits: Vec<bool>,
}

impl ForegroundMask {
    pub fn empty(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            bits: vec![false; width * height],
        }
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> bool) -> Self {
        let mut bits = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                bits.push(f(x, y));
            }
        }
        Self { width, height, bits }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> bool {
        self.bits[y * self.width + x]
    }

    pub fn set(&mut self, x: usize, y: usize, v: bool) {
        self.bits[y * self.width + x] = v;
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn fraction(&self) -> f64 {
        self.count() as f64 / self.bits.len() as f64
    }

    pub fn iou(&self, other: &ForegroundMask) -> f64 {
        let (mut inter, mut uni) = (0usize, 0usize);
        for (&a, &b) in self.bits.iter().zip(&other.bits) {
            inter += (a && b) as usize;
            uni += (a || b) as usize;
        }
        if uni == 0 {
            1.0
        } else {
            inter as f64 / uni as f64
        }
    }

    /// Foreground white, background black.
    pub fn to_frame(&self) -> Result<Frame, FrameError> {
        Frame::new(
            self.width,
            self.height,
            self.bits.iter().map(|&b| if b { 255 } else { 0 }).collect(),
        )
    }

    fn majority_cleanup(&self, exec: Exec) -> Self {
        let (w, h) = (self.width, self.height);
        let mut out = vec![false; w * h];
        par::for_each_row(exec, &mut out, w, |y, row| {
            for (x, slot) in row.iter_mut().enumerate() {
                let (mut on, mut total) = (0, 0);
                for ny in y.saturating_sub(1)..=(y + 1).min(h - 1) {
                    for nx in x.saturating_sub(1)..=(x + 1).min(w - 1) {
                        total += 1;
                        on += self.bits[ny * w + nx] as usize;
                    }
                }
                *slot = 2 * on > total;
            }
        });
        Self {
            width: w,
            height: h,
            bits: out,
        }
    }
}

/// Mahalanobis threshold followed by one 3x3 majority-vote pass.
pub fn segment_foreground(
    model: &BackgroundModel,
    frame: &Frame,
    threshold: f64,
    exec: Exec,
) -> Result<ForegroundMask, BodyError> {
    if model.width != frame.width() || model.height != frame.height() {
        return Err(BodyError::DimensionMismatch(format!(
            "model {}x{}, frame {}x{}",
            model.width,
            model.height,
            frame.width(),
            frame.height()
        )));
    }
    let w = model.width;
    let mut bits = vec![false; w * model.height];
    par::for_each_row(exec, &mut bits, w, |y, row| {
        for (x, slot) in row.iter_mut().enumerate() {
            let i = y * w + x;
            let d = (frame.data()[i] as f64 - model.mean[i]).abs() / model.var[i].sqrt();
            *slot = d > threshold;
        }
    });
    let raw = ForegroundMask {
        width: w,
        height: model.height,
        bits,
    };
    Ok(raw.majority_cleanup(exec))
}

/// Cloth simulation constants.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DrapeParams {
    pub gravity: f64,
    pub coupling: f64,
    pub tolerance: f64,
    pub max_iters: usize,
}

impl Default for DrapeParams {
    fn default() -> Self {
        Self {
            gravity: 2.0,
            coupling: 0.25,
            tolerance: 0.05,
            max_iters: 2000,
        }
    }
}

/// Settled cloth, one node per column.
#[derive(Debug, Clone, PartialEq)]
pub struct DrapeResult {
    /// Node depth from the top edge, per column.
    pub depth: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

impl DrapeResult {
    /// Height above the floor, per column.
    pub fn heights(&self, frame_height: usize) -> Vec<f64> {
        self.depth.iter().map(|d| frame_height as f64 - d).collect()
    }
}

/// Drops a 1-D mass-spring cloth from the top edge onto the mask.
///
/// Each step every node falls by `gravity`, is pulled toward the mean of
/// its neighbours with weight `coupling`, and is stopped by the topmost
/// foreground pixel of its column (or the floor).
pub fn drape_cloth(mask: &ForegroundMask, params: &DrapeParams) -> DrapeResult {
    let (w, h) = (mask.width, mask.height);
    let support: Vec<f64> = (0..w)
        .map(|x| (0..h).find(|&y| mask.get(x, y)).unwrap_or(h) as f64)
        .collect();
    let mut y = vec![0.0f64; w];
    let mut next = vec![0.0f64; w];
    let mut iterations = 0;
    let mut converged = false;
    while iterations < params.max_iters {
        iterations += 1;
        let mut max_step = 0.0f64;
        for i in 0..w {
            let left = if i > 0 { y[i - 1] } else { y[(i + 1).min(w - 1)] };
            let right = if i + 1 < w { y[i + 1] } else { y[i.saturating_sub(1)] };
            let avg = 0.5 * (left + right);
            let moved = y[i] + params.gravity + params.coupling * (avg - y[i]);
            next[i] = moved.min(support[i]);
            max_step = max_step.max((next[i] - y[i]).abs());
        }
        std::mem::swap(&mut y, &mut next);
        if max_step < params.tolerance {
            converged = true;
            break;
        }
    }
    DrapeResult {
        depth: y,
        iterations,
        converged,
    }
}

/// Min-max normalized drape heights.
#[derive(Debug, Clone, PartialEq)]
pub struct DrapeProfile(pub Vec<f64>);

impl DrapeProfile {
    /// `(v - min) / (max - min)`; a constant input maps to all zeros.
    pub fn normalized(values: &[f64]) -> Self {
        let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if values.is_empty() || hi - lo <= 0.0 {
            return Self(vec![0.0; values.len()]);
        }
        Self(values.iter().map(|v| (v - lo) / (hi - lo)).collect())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

pub fn drape(mask: &ForegroundMask, params: &DrapeParams) -> DrapeProfile {
    let settled = drape_cloth(mask, params);
    DrapeProfile::normalized(&settled.heights(mask.height))
}

/// Pearson correlation; 0 when either side is constant.
pub fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len().min(b.len());
    if n == 0 {
        return 0.0;
    }
    let ma = a[..n].iter().sum::<f64>() / n as f64;
    let mb = b[..n].iter().sum::<f64>() / n as f64;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for i in 0..n {
        let (da, db) = (a[i] - ma, b[i] - mb);
        sab += da * db;
        saa += da * da;
        sbb += db * db;
    }
    if saa <= 1e-12 || sbb <= 1e-12 {
        return 0.0;
    }
    sab / (saa.sqrt() * sbb.sqrt())
}

/// Shipped upper-body poses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Pose {
    ArmsDown,
    LeftArmRaised,
    RightArmRaised,
    BothArmsRaised,
    Wave,
}

impl Pose {
    pub const ALL: [Pose; 5] = [
        Pose::ArmsDown,
        Pose::LeftArmRaised,
        Pose::RightArmRaised,
        Pose::BothArmsRaised,
        Pose::Wave,
    ];

    /// Poses that count as deliberate gestures (everything but the rest pose).
    pub const GESTURES: [Pose; 4] = [
        Pose::LeftArmRaised,
        Pose::RightArmRaised,
        Pose::BothArmsRaised,
        Pose::Wave,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Pose::ArmsDown => "ArmsDown",
            Pose::LeftArmRaised => "LeftArmRaised",
            Pose::RightArmRaised => "RightArmRaised",
            Pose::BothArmsRaised => "BothArmsRaised",
            Pose::Wave => "Wave",
        }
    }

    pub fn is_gesture(self) -> bool {
        self != Pose::ArmsDown
    }
}

impl fmt::Display for Pose {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Pose {
    type Err = BodyError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Pose::ALL
            .into_iter()
            .find(|p| p.as_str() == s)
            .ok_or_else(|| BodyError::UnknownPoseLabel(s.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PoseReference {
    pub label: Pose,
    pub profile: DrapeProfile,
}

/// Best-correlated reference label, or `None` (Unknown) below `threshold`.
pub fn classify_pose(
    profile: &DrapeProfile,
    refs: &[PoseReference],
    threshold: f64,
) -> Result<Option<Pose>, BodyError> {
    if refs.is_empty() {
        return Err(BodyError::EmptyReferenceSet);
    }
    let mut best: Option<(f64, Pose)> = None;
    for r in refs {
        if r.profile.len() != profile.len() {
            return Err(BodyError::LengthMismatch {
                expected: r.profile.len(),
                got: profile.len(),
            });
        }
        let c = pearson(&profile.0, &r.profile.0);
        if best.is_none_or(|(b, _)| c > b) {
            best = Some((c, r.label));
        }
    }
    Ok(best.filter(|(c, _)| *c >= threshold).map(|(_, l)| l))
}

/// CSV layout: header `label,v0..v{n-1}`, one row per reference.
pub fn write_pose_refs<W: Write>(refs: &[PoseReference], out: W) -> Result<(), BodyError> {
    let mut w = csv::Writer::from_writer(out);
    let n = refs.first().map_or(0, |r| r.profile.len());
    let mut header = vec!["label".to_string()];
    header.extend((0..n).map(|i| format!("v{i}")));
    w.write_record(&header)?;
    for r in refs {
        let mut rec = vec![r.label.to_string()];
        rec.extend(r.profile.0.iter().map(f64::to_string));
        w.write_record(&rec)?;
    }
    w.flush().map_err(|e| BodyError::Csv(e.to_string()))
}

pub fn read_pose_refs<R: Read>(input: R) -> Result<Vec<PoseReference>, BodyError> {
    let mut r = csv::Reader::from_reader(input);
    let mut out = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let label: Pose = rec.get(0).unwrap_or_default().parse()?;
        let values = rec
            .iter()
            .skip(1)
            .map(|v| v.parse::<f64>().map_err(|e| BodyError::Csv(e.to_string())))
            .collect::<Result<Vec<_>, _>>()?;
        out.push(PoseReference {
            label,
            profile: DrapeProfile(values),
        });
    }
    Ok(out)
}
