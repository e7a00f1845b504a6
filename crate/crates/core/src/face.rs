//! Facial cue extraction: region flows, expression and motion class, head
//! orientation from symmetry and edge balance, and the head-jerk operator.

use std::collections::VecDeque;
use std::fmt;

use thiserror::Error;

use crate::frame::{Frame, FrameError, Rect};
use crate::par::{self, Exec};

/// Every region must be at least 2 px wide, which needs a 14 px face.
pub const MIN_FACE_SIDE: usize = 14;
/// Samples needed by the 4th-order difference.
pub const JERK_WINDOW: usize = 5;

#[derive(Debug, Error)]
pub enum FaceError {
    #[error("face rectangle {0:?} too small to partition")]
    RectTooSmall(Rect),
    #[error("face rectangle {rect:?} outside {width}x{height} frame")]
    RectOutsideFrame { rect: Rect, width: usize, height: usize },
    #[error("invalid region layout: {0}")]
    BadLayout(String),
    #[error("reference set is empty")]
    EmptyReferenceSet,
    #[error("reference {0:?} is the zero vector")]
    ZeroReference(String),
    #[error("jerk needs {JERK_WINDOW} samples, track has {0}")]
    InsufficientHistory(usize),
    #[error(transparent)]
    Frame(#[from] FrameError),
}

/// A validated face rectangle: inside its frame and at least 14x14.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FaceRect(Rect);

impl FaceRect {
    pub fn new(rect: Rect, frame_width: usize, frame_height: usize) -> Result<Self, FaceError> {
        if !rect.fits_in(frame_width, frame_height) {
            return Err(FaceError::RectOutsideFrame {
                rect,
                width: frame_width,
                height: frame_height,
            });
        }
        if rect.w < MIN_FACE_SIDE || rect.h < MIN_FACE_SIDE {
            return Err(FaceError::RectTooSmall(rect));
        }
        Ok(Self(rect))
    }

    pub fn rect(&self) -> Rect {
        self.0
    }
}

/// Injected face finder.
pub trait FaceDetector {
    fn detect(&self, frame: &Frame) -> Option<FaceRect>;
}

/// Bounding box of all pixels brighter than `threshold`.
///
/// Stands in for a trained cascade on synthetic frames where the head is the
/// only bright object.
#[derive(Debug, Clone, Copy)]
pub struct BrightBlobDetector {
    pub threshold: u8,
    pub min_pixels: usize,
}

impl Default for BrightBlobDetector {
    fn default() -> Self {
        Self {
            threshold: 125,
            min_pixels: 64,
        }
    }
}

impl FaceDetector for BrightBlobDetector {
    fn detect(&self, frame: &Frame) -> Option<FaceRect> {
        let (mut x0, mut y0, mut x1, mut y1) = (usize::MAX, usize::MAX, 0, 0);
        let mut count = 0usize;
        for y in 0..frame.height() {
            for x in 0..frame.width() {
                if frame.get(x, y) > self.threshold {
                    count += 1;
                    x0 = x0.min(x);
                    y0 = y0.min(y);
                    x1 = x1.max(x);
                    y1 = y1.max(y);
                }
            }
        }
        if count < self.min_pixels {
            return None;
        }
        let rect = Rect::new(x0, y0, x1 - x0 + 1, y1 - y0 + 1);
        FaceRect::new(rect, frame.width(), frame.height()).ok()
    }
}

/// The seven analysis zones, in canonical order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Region {
    LeftEyebrow,
    RightEyebrow,
    LeftEye,
    RightEye,
    LeftCheek,
    RightCheek,
    Mouth,
}

impl Region {
    pub const ALL: [Region; 7] = [
        Region::LeftEyebrow,
        Region::RightEyebrow,
        Region::LeftEye,
        Region::RightEye,
        Region::LeftCheek,
        Region::RightCheek,
        Region::Mouth,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    fn mirror(self) -> Region {
        match self {
            Region::LeftEyebrow => Region::RightEyebrow,
            Region::RightEyebrow => Region::LeftEyebrow,
            Region::LeftEye => Region::RightEye,
            Region::RightEye => Region::LeftEye,
            Region::LeftCheek => Region::RightCheek,
            Region::RightCheek => Region::LeftCheek,
            Region::Mouth => Region::Mouth,
        }
    }
}

/// Fractional sub-rectangle of the unit square: `[x0, x1) x [y0, y1)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FracRect {
    pub x0: f64,
    pub y0: f64,
    pub x1: f64,
    pub y1: f64,
}

impl FracRect {
    pub const fn new(x0: f64, y0: f64, x1: f64, y1: f64) -> Self {
        Self { x0, y0, x1, y1 }
    }

    fn overlaps(&self, o: &FracRect) -> bool {
        self.x0 < o.x1 && o.x0 < self.x1 && self.y0 < o.y1 && o.y0 < self.y1
    }
}

/// Placement of the seven regions inside a face rectangle.
#[derive(Debug, Clone, PartialEq)]
pub struct RegionLayout {
    regions: [FracRect; 7],
}

impl Default for RegionLayout {
    fn default() -> Self {
        let (lx, rx) = ((0.10, 0.45), (0.55, 0.90));
        let row = |y0, y1, (x0, x1): (f64, f64)| FracRect::new(x0, y0, x1, y1);
        Self {
            regions: [
                row(0.15, 0.30, lx),
                row(0.15, 0.30, rx),
                row(0.30, 0.45, lx),
                row(0.30, 0.45, rx),
                row(0.50, 0.70, lx),
                row(0.50, 0.70, rx),
                FracRect::new(0.30, 0.70, 0.70, 0.90),
            ],
        }
    }
}

impl RegionLayout {
    pub fn new(regions: [FracRect; 7]) -> Result<Self, FaceError> {
        const EPS: f64 = 1e-9;
        for (i, r) in regions.iter().enumerate() {
            let ok = r.x0 >= 0.0 && r.y0 >= 0.0 && r.x1 <= 1.0 && r.y1 <= 1.0;
            if !ok || r.x0 >= r.x1 || r.y0 >= r.y1 {
                return Err(FaceError::BadLayout(format!(
                    "{:?} not a proper sub-rectangle of the unit square",
                    Region::ALL[i]
                )));
            }
            for (j, o) in regions.iter().enumerate().skip(i + 1) {
                if r.overlaps(o) {
                    return Err(FaceError::BadLayout(format!(
                        "{:?} overlaps {:?}",
                        Region::ALL[i],
                        Region::ALL[j]
                    )));
                }
            }
        }
        for region in Region::ALL {
            let a = regions[region.index()];
            let b = regions[region.mirror().index()];
            let sym = (a.x0 - (1.0 - b.x1)).abs() < EPS
                && (a.x1 - (1.0 - b.x0)).abs() < EPS
                && (a.y0 - b.y0).abs() < EPS
                && (a.y1 - b.y1).abs() < EPS;
            if !sym {
                return Err(FaceError::BadLayout(format!(
                    "{region:?} is not the mirror of {:?}",
                    region.mirror()
                )));
            }
        }
        Ok(Self { regions })
    }

    pub fn get(&self, region: Region) -> FracRect {
        self.regions[region.index()]
    }

    pub fn regions(&self) -> &[FracRect; 7] {
        &self.regions
    }
}

/// Splits a face rectangle into the seven pixel regions, canonical order.
pub fn partition_regions(rect: FaceRect, layout: &RegionLayout) -> Result<[Rect; 7], FaceError> {
    let r = rect.rect();
    if r.w < MIN_FACE_SIDE || r.h < MIN_FACE_SIDE {
        return Err(FaceError::RectTooSmall(r));
    }
    let px = |f: f64, len: usize| (f * len as f64).round() as usize;
    let mut out = [Rect::new(0, 0, 0, 0); 7];
    for (slot, fr) in out.iter_mut().zip(layout.regions()) {
        let (x0, x1) = (px(fr.x0, r.w), px(fr.x1, r.w));
        let (y0, y1) = (px(fr.y0, r.h), px(fr.y1, r.h));
        let sub = Rect::new(r.x + x0, r.y + y0, x1.saturating_sub(x0), y1.saturating_sub(y0));
        if sub.area() < 4 || sub.w == 0 || sub.h == 0 {
            return Err(FaceError::RectTooSmall(r));
        }
        *slot = sub;
    }
    Ok(out)
}

/// Block-matching parameters.
#[derive(Debug, Clone, Copy)]
pub struct FlowConfig {
    pub block: usize,
    pub radius: i32,
    /// SAD margin per pixel a non-zero displacement must beat the zero
    /// displacement by. Keeps sensor noise on flat blocks from reading as
    /// motion; 0 gives the plain SAD argmin.
    pub zero_bias: f64,
    pub exec: Exec,
}

impl Default for FlowConfig {
    fn default() -> Self {
        Self {
            block: 8,
            radius: 7,
            zero_bias: 1.0,
            exec: Exec::Parallel,
        }
    }
}

/// Per-block displacement from `prev` to `cur`.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowField {
    pub blocks: Vec<Rect>,
    pub vectors: Vec<[f64; 2]>,
    pub block_size: usize,
}

impl FlowField {
    pub fn zeros(blocks: Vec<Rect>, block_size: usize) -> Self {
        let vectors = vec![[0.0; 2]; blocks.len()];
        Self {
            blocks,
            vectors,
            block_size,
        }
    }

    pub fn scaled(&self, alpha: f64) -> Self {
        Self {
            blocks: self.blocks.clone(),
            vectors: self.vectors.iter().map(|v| [v[0] * alpha, v[1] * alpha]).collect(),
            block_size: self.block_size,
        }
    }

    pub fn mean(&self) -> [f64; 2] {
        if self.vectors.is_empty() {
            return [0.0; 2];
        }
        let n = self.vectors.len() as f64;
        let (sx, sy) = self
            .vectors
            .iter()
            .fold((0.0, 0.0), |(sx, sy), v| (sx + v[0], sy + v[1]));
        [sx / n, sy / n]
    }

    pub fn mean_magnitude(&self) -> f64 {
        if self.vectors.is_empty() {
            return 0.0;
        }
        self.vectors.iter().map(|v| v[0].hypot(v[1])).sum::<f64>() / self.vectors.len() as f64
    }
}

/// Tiles `region` with `block`-sized cells; edge cells are truncated.
pub fn tile_blocks(region: Rect, block: usize) -> Vec<Rect> {
    let mut out = Vec::new();
    let mut y = region.y;
    while y < region.bottom() {
        let h = block.min(region.bottom() - y);
        let mut x = region.x;
        while x < region.right() {
            let w = block.min(region.right() - x);
            out.push(Rect::new(x, y, w, h));
            x += w;
        }
        y += h;
    }
    out
}

fn sad(prev: &Frame, cur: &Frame, b: Rect, dx: i32, dy: i32, bound: u32) -> u32 {
    let w = cur.width();
    let (pd, cd) = (prev.data(), cur.data());
    let mut acc = 0u32;
    for y in b.y..b.bottom() {
        let py = (y as i64 - dy as i64) as usize;
        let crow = &cd[y * w + b.x..y * w + b.right()];
        let px0 = (b.x as i64 - dx as i64) as usize;
        let prow = &pd[py * w + px0..py * w + px0 + b.w];
        acc += crow
            .iter()
            .zip(prow)
            .map(|(&a, &b)| a.abs_diff(b) as u32)
            .sum::<u32>();
        if acc > bound {
            return acc;
        }
    }
    acc
}

fn match_block(prev: &Frame, cur: &Frame, b: Rect, radius: i32, zero_bias: f64) -> [f64; 2] {
    let zero = sad(prev, cur, b, 0, 0, u32::MAX);
    let handicap = (zero_bias * b.area() as f64).round() as u32;
    if zero <= handicap {
        return [0.0; 2];
    }
    let (fw, fh) = (cur.width() as i64, cur.height() as i64);
    // (sad, magnitude², dy, dx) compared lexicographically
    let mut best = (zero - handicap, 0i32, 0i32, 0i32);
    for dy in -radius..=radius {
        let top = b.y as i64 - dy as i64;
        if top < 0 || top + b.h as i64 > fh {
            continue;
        }
        for dx in -radius..=radius {
            let left = b.x as i64 - dx as i64;
            if left < 0 || left + b.w as i64 > fw {
                continue;
            }
            let s = sad(prev, cur, b, dx, dy, best.0);
            let key = (s, dx * dx + dy * dy, dy, dx);
            if key < best {
                best = key;
            }
        }
    }
    [best.3 as f64, best.2 as f64]
}

/// Block-matching optical flow over `region`.
///
/// Each block takes the displacement minimizing SAD against `prev`, with
/// the zero displacement credited `zero_bias` per pixel; ties prefer the
/// smallest magnitude, then the smallest dy, then dx.
pub fn block_flow(
    prev: &Frame,
    cur: &Frame,
    region: Rect,
    cfg: &FlowConfig,
) -> Result<FlowField, FaceError> {
    prev.same_dims(cur)?;
    if !region.fits_in(cur.width(), cur.height()) {
        return Err(FaceError::RectOutsideFrame {
            rect: region,
            width: cur.width(),
            height: cur.height(),
        });
    }
    let blocks = tile_blocks(region, cfg.block.max(1));
    let vectors = par::map_slice(cfg.exec, &blocks, |&b| match_block(prev, cur, b, cfg.radius, cfg.zero_bias));
    Ok(FlowField {
        blocks,
        vectors,
        block_size: cfg.block,
    })
}

/// Concatenated mean flow of the seven regions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CharacteristicFlow(pub [f64; 14]);

impl CharacteristicFlow {
    pub const ZERO: Self = Self([0.0; 14]);

    pub fn norm(&self) -> f64 {
        self.0.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn dot(&self, other: &Self) -> f64 {
        self.0.iter().zip(&other.0).map(|(a, b)| a * b).sum()
    }

    pub fn scaled(&self, alpha: f64) -> Self {
        Self(self.0.map(|v| v * alpha))
    }

    pub fn region(&self, region: Region) -> [f64; 2] {
        let i = region.index() * 2;
        [self.0[i], self.0[i + 1]]
    }

    pub fn cosine(&self, other: &Self) -> f64 {
        let d = self.norm() * other.norm();
        if d == 0.0 {
            0.0
        } else {
            self.dot(other) / d
        }
    }
}

pub fn characteristic_flow(fields: &[FlowField; 7]) -> CharacteristicFlow {
    let mut out = [0.0; 14];
    for (i, f) in fields.iter().enumerate() {
        let m = f.mean();
        out[2 * i] = m[0];
        out[2 * i + 1] = m[1];
    }
    CharacteristicFlow(out)
}

/// Classified facial expression.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default)]
pub enum Expression {
    #[default]
    Neutral,
    Label(String),
}

impl Expression {
    pub fn is_neutral(&self) -> bool {
        matches!(self, Expression::Neutral)
    }
}

impl fmt::Display for Expression {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expression::Neutral => f.write_str("Neutral"),
            Expression::Label(s) => f.write_str(s),
        }
    }
}

/// Labeled reference flow for nearest-reference expression matching.
#[derive(Debug, Clone, PartialEq)]
pub struct ExpressionRef {
    pub label: String,
    pub flow: CharacteristicFlow,
}

impl ExpressionRef {
    pub fn new(label: impl Into<String>, flow: [f64; 14]) -> Self {
        Self {
            label: label.into(),
            flow: CharacteristicFlow(flow),
        }
    }
}

/// Canonical upward/outward patterns for the shipped expression set.
pub fn default_expression_refs() -> Vec<ExpressionRef> {
    let mut smile = [0.0; 14];
    // cheeks lift and pull outward, mouth rises
    smile[8] = -0.5;
    smile[9] = -1.0;
    smile[10] = 0.5;
    smile[11] = -1.0;
    smile[13] = -1.5;
    let mut frown = [0.0; 14];
    frown[1] = 1.0;
    frown[3] = 1.0;
    frown[13] = 1.5;
    let mut raise = [0.0; 14];
    raise[1] = -2.0;
    raise[3] = -2.0;
    raise[5] = -0.5;
    raise[7] = -0.5;
    vec![
        ExpressionRef::new("Smile", smile),
        ExpressionRef::new("Frown", frown),
        ExpressionRef::new("EyebrowRaise", raise),
    ]
}

/// Thresholds for the facial pipeline.
#[derive(Debug, Clone, PartialEq)]
pub struct FaceThresholds {
    pub sym: f64,
    pub cog: f64,
    pub still: f64,
    pub zone: f64,
    pub spread: f64,
    pub expr: f64,
    pub mag: f64,
    pub edge: f64,
}

impl Default for FaceThresholds {
    fn default() -> Self {
        Self {
            sym: 0.06,
            cog: 0.25,
            still: 0.3,
            zone: 0.5,
            spread: 0.35,
            expr: 0.85,
            mag: 1.0,
            edge: 64.0,
        }
    }
}

pub fn classify_expression(
    cf: &CharacteristicFlow,
    refs: &[ExpressionRef],
    th: &FaceThresholds,
) -> Result<Expression, FaceError> {
    if refs.is_empty() {
        return Err(FaceError::EmptyReferenceSet);
    }
    if let Some(r) = refs.iter().find(|r| r.flow.norm() == 0.0) {
        return Err(FaceError::ZeroReference(r.label.clone()));
    }
    if cf.norm() < th.mag {
        return Ok(Expression::Neutral);
    }
    let mut best: Option<(f64, &ExpressionRef)> = None;
    for r in refs {
        let c = cf.cosine(&r.flow);
        if best.is_none_or(|(b, _)| c > b) {
            best = Some((c, r));
        }
    }
    Ok(match best {
        Some((c, r)) if c >= th.expr => Expression::Label(r.label.clone()),
        _ => Expression::Neutral,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum MotionClass {
    Still,
    Rigid,
    NonRigid,
}

/// Spatial spread of the strongest flow blocks, normalized by half the face
/// diagonal. Peaks are blocks at or above the 75th percentile of nonzero
/// magnitudes.
pub fn peak_spread(field: &FlowField, face: Rect) -> f64 {
    let mags: Vec<f64> = field.vectors.iter().map(|v| v[0].hypot(v[1])).collect();
    let mut nonzero: Vec<f64> = mags.iter().copied().filter(|&m| m > 0.0).collect();
    if nonzero.is_empty() {
        return 0.0;
    }
    nonzero.sort_by(f64::total_cmp);
    let rank = ((0.75 * nonzero.len() as f64).ceil() as usize).max(1) - 1;
    let cut = nonzero[rank];
    let peaks: Vec<(f64, f64)> = field
        .blocks
        .iter()
        .zip(&mags)
        .filter(|(_, &m)| m >= cut)
        .map(|(b, _)| b.center())
        .collect();
    let n = peaks.len() as f64;
    let (mx, my) = peaks
        .iter()
        .fold((0.0, 0.0), |(ax, ay), (x, y)| (ax + x / n, ay + y / n));
    let var = peaks
        .iter()
        .map(|(x, y)| (x - mx).powi(2) + (y - my).powi(2))
        .sum::<f64>()
        / n;
    let half_diag = (face.w as f64).hypot(face.h as f64) / 2.0;
    var.sqrt() / half_diag
}

pub fn classify_motion(
    field: &FlowField,
    face: Rect,
    region_means: &CharacteristicFlow,
    th: &FaceThresholds,
) -> MotionClass {
    if field.mean_magnitude() < th.still {
        return MotionClass::Still;
    }
    let all_zones = Region::ALL.iter().all(|&r| {
        let [dx, dy] = region_means.region(r);
        dx.hypot(dy) > th.zone
    });
    if all_zones && peak_spread(field, face) > th.spread {
        MotionClass::Rigid
    } else {
        MotionClass::NonRigid
    }
}

/// 3x3 median filter over the contents of `rect`, edges replicated within
/// the rectangle. Returned buffer is `rect.w * rect.h`, row-major.
pub fn median3_in_rect(frame: &Frame, rect: Rect) -> Vec<u8> {
    let (w, h) = (rect.w, rect.h);
    let at = |x: isize, y: isize| {
        let cx = x.clamp(0, w as isize - 1) as usize;
        let cy = y.clamp(0, h as isize - 1) as usize;
        frame.get(rect.x + cx, rect.y + cy)
    };
    let mut out = vec![0u8; w * h];
    for y in 0..h as isize {
        for x in 0..w as isize {
            let mut win = [0u8; 9];
            let mut k = 0;
            for oy in -1..=1 {
                for ox in -1..=1 {
                    win[k] = at(x + ox, y + oy);
                    k += 1;
                }
            }
            win.sort_unstable();
            out[y as usize * w + x as usize] = win[4];
        }
    }
    out
}

/// Mean absolute left/right mirror difference after median filtering, in [0,1].
pub fn symmetry_score(frame: &Frame, rect: FaceRect) -> f64 {
    let r = rect.rect();
    let m = median3_in_rect(frame, r);
    let mut acc = 0u64;
    for y in 0..r.h {
        let row = &m[y * r.w..(y + 1) * r.w];
        for x in 0..r.w {
            acc += row[x].abs_diff(row[r.w - 1 - x]) as u64;
        }
    }
    acc as f64 / (r.area() as f64 * 255.0)
}

/// Sobel gradient magnitude inside `rect`, edges replicated within it.
pub fn gradient_magnitude_in_rect(frame: &Frame, rect: Rect) -> Vec<f64> {
    let (w, h) = (rect.w, rect.h);
    let at = |x: isize, y: isize| {
        let cx = x.clamp(0, w as isize - 1) as usize;
        let cy = y.clamp(0, h as isize - 1) as usize;
        frame.get(rect.x + cx, rect.y + cy) as f64
    };
    let mut out = vec![0.0; w * h];
    for y in 0..h as isize {
        for x in 0..w as isize {
            let gx = (at(x + 1, y - 1) + 2.0 * at(x + 1, y) + at(x + 1, y + 1))
                - (at(x - 1, y - 1) + 2.0 * at(x - 1, y) + at(x - 1, y + 1));
            let gy = (at(x - 1, y + 1) + 2.0 * at(x, y + 1) + at(x + 1, y + 1))
                - (at(x - 1, y - 1) + 2.0 * at(x, y - 1) + at(x + 1, y - 1));
            out[y as usize * w + x as usize] = gx.hypot(gy);
        }
    }
    out
}

/// Horizontal offset of the centroid of significant edges from the rect
/// centre, in half-widths. Positive means edge mass right of centre.
pub fn edge_cog_offset(frame: &Frame, rect: FaceRect, edge_threshold: f64) -> f64 {
    let r = rect.rect();
    let g = gradient_magnitude_in_rect(frame, r);
    let (mut sum_x, mut n) = (0.0, 0usize);
    for (i, &m) in g.iter().enumerate() {
        if m >= edge_threshold {
            sum_x += (i % r.w) as f64 + 0.5;
            n += 1;
        }
    }
    if n == 0 {
        return 0.0;
    }
    let half = r.w as f64 / 2.0;
    ((sum_x / n as f64 - half) / half).clamp(-1.0, 1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum HeadLabel {
    Left,
    Frontal,
    Right,
}

impl fmt::Display for HeadLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            HeadLabel::Left => "Left",
            HeadLabel::Frontal => "Frontal",
            HeadLabel::Right => "Right",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OrientationEstimate {
    pub symmetry: f64,
    pub edge_offset: f64,
    pub label: HeadLabel,
    pub confidence: f64,
}

/// Combines the symmetry and edge cues.
///
/// Frontal needs both cues under threshold. Otherwise the edge sign decides
/// the side; a zero edge offset keeps the previous side (Left if there is
/// none).
pub fn fuse_orientation(
    s: f64,
    e: f64,
    previous: Option<HeadLabel>,
    th: &FaceThresholds,
) -> OrientationEstimate {
    let sym_turn = (s / th.sym).min(1.0);
    let edge_turn = (e.abs() / th.cog).min(1.0);
    let frontal_conf = (1.0 - sym_turn) * (1.0 - edge_turn);
    let (label, confidence) = if s < th.sym && e.abs() < th.cog {
        (HeadLabel::Frontal, frontal_conf)
    } else {
        let side = if e < 0.0 {
            HeadLabel::Left
        } else if e > 0.0 {
            HeadLabel::Right
        } else {
            match previous {
                Some(HeadLabel::Right) => HeadLabel::Right,
                _ => HeadLabel::Left,
            }
        };
        (side, 1.0 - frontal_conf)
    };
    OrientationEstimate {
        symmetry: s,
        edge_offset: e,
        label,
        confidence,
    }
}

/// Fixed-capacity history of face-rect centres, oldest first.
#[derive(Debug, Clone)]
pub struct HeadTrack {
    cap: usize,
    points: VecDeque<(f64, f64)>,
}

impl Default for HeadTrack {
    fn default() -> Self {
        Self::new(JERK_WINDOW)
    }
}

impl HeadTrack {
    pub fn new(capacity: usize) -> Self {
        let cap = capacity.max(JERK_WINDOW);
        Self {
            cap,
            points: VecDeque::with_capacity(cap),
        }
    }

    pub fn push(&mut self, p: (f64, f64)) {
        if self.points.len() == self.cap {
            self.points.pop_front();
        }
        self.points.push_back(p);
    }

    pub fn clear(&mut self) {
        self.points.clear();
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.cap
    }

    pub fn points(&self) -> impl Iterator<Item = &(f64, f64)> {
        self.points.iter()
    }
}

/// Norm of the 4th-order backward difference of the newest five positions.
pub fn estimate_jerk(track: &HeadTrack) -> Result<f64, FaceError> {
    let n = track.len();
    if n < JERK_WINDOW {
        return Err(FaceError::InsufficientHistory(n));
    }
    const COEF: [f64; 5] = [1.0, -4.0, 6.0, -4.0, 1.0];
    let (mut jx, mut jy) = (0.0, 0.0);
    // newest first
    for (c, p) in COEF.iter().zip(track.points.iter().rev()) {
        jx += c * p.0;
        jy += c * p.1;
    }
    Ok(jx.hypot(jy))
}

/// Everything the face camera yields for one frame.
#[derive(Debug, Clone, PartialEq)]
pub struct FaceObservation {
    pub rect: FaceRect,
    pub orientation: OrientationEstimate,
    pub expression: Expression,
    pub motion: MotionClass,
    pub characteristic: CharacteristicFlow,
    pub jerk: f64,
}

/// Stateful per-camera face pipeline.
pub struct FaceAnalyzer<D: FaceDetector> {
    pub detector: D,
    pub layout: RegionLayout,
    pub flow: FlowConfig,
    pub thresholds: FaceThresholds,
    pub refs: Vec<ExpressionRef>,
    prev: Option<Frame>,
    track: HeadTrack,
    last_label: Option<HeadLabel>,
}

impl<D: FaceDetector> FaceAnalyzer<D> {
    pub fn new(
        detector: D,
        layout: RegionLayout,
        flow: FlowConfig,
        thresholds: FaceThresholds,
        refs: Vec<ExpressionRef>,
    ) -> Self {
        Self {
            detector,
            layout,
            flow,
            thresholds,
            refs,
            prev: None,
            track: HeadTrack::default(),
            last_label: None,
        }
    }

    /// Returns `None` when no face is found; the head track is reset then.
    pub fn process(&mut self, frame: &Frame) -> Result<Option<FaceObservation>, FaceError> {
        let Some(rect) = self.detector.detect(frame) else {
            self.track.clear();
            self.prev = Some(frame.clone());
            return Ok(None);
        };
        self.track.push(rect.rect().center());
        let jerk = estimate_jerk(&self.track).unwrap_or(0.0);

        let s = symmetry_score(frame, rect);
        let e = edge_cog_offset(frame, rect, self.thresholds.edge);
        let orientation = fuse_orientation(s, e, self.last_label, &self.thresholds);
        self.last_label = Some(orientation.label);

        let (characteristic, motion, expression) = match &self.prev {
            Some(prev) if prev.same_dims(frame).is_ok() => {
                let regions = partition_regions(rect, &self.layout)?;
                let mut fields: [FlowField; 7] =
                    std::array::from_fn(|_| FlowField::zeros(Vec::new(), self.flow.block));
                for (slot, r) in fields.iter_mut().zip(regions) {
                    *slot = block_flow(prev, frame, r, &self.flow)?;
                }
                let cf = characteristic_flow(&fields);
                let whole = block_flow(prev, frame, rect.rect(), &self.flow)?;
                let motion = classify_motion(&whole, rect.rect(), &cf, &self.thresholds);
                let expression = if motion == MotionClass::NonRigid {
                    classify_expression(&cf, &self.refs, &self.thresholds)?
                } else {
                    Expression::Neutral
                };
                (cf, motion, expression)
            }
            _ => (CharacteristicFlow::ZERO, MotionClass::Still, Expression::Neutral),
        };
        self.prev = Some(frame.clone());
        Ok(Some(FaceObservation {
            rect,
            orientation,
            expression,
            motion,
            characteristic,
            jerk,
        }))
    }
}
