//! Simulated viewer and synthetic camera frames.
//!
//! The viewer's attention after each decision is a Bernoulli draw with a
//! known probability per (state, action), so learned models can be checked
//! against ground truth. Frames are drawn so that the vision pipeline
//! recovers the viewer's head orientation and body pose.

use std::io::{Read, Write};

use rand::Rng;
use rand_distr::{Distribution, Normal};
use thiserror::Error;

use crate::body::{drape, DrapeParams, DrapeProfile, ForegroundMask, Pose, PoseReference};
use crate::face::{HeadLabel, MIN_FACE_SIDE};
use crate::frame::{Frame, Rect};
use crate::learning::{ActionSet, StateId};
use crate::routine::Routine;

#[derive(Debug, Error)]
pub enum ViewerError {
    #[error("no silhouette for pose label {0}")]
    UnknownPoseLabel(String),
    #[error("invalid profile: {0}")]
    BadProfile(String),
    #[error("invalid scene: {0}")]
    BadScene(String),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

/// Ground-truth attention behaviour of the simulated viewer.
#[derive(Debug, Clone, PartialEq)]
pub struct ViewerProfile {
    actions: ActionSet,
    /// `p★` indexed by `state.index() * actions + action`.
    p_star: Vec<f64>,
    /// Per-frame probability of starting an erratic burst.
    pub erratic_rate: f64,
    /// Frames in one erratic burst.
    pub erratic_frames: usize,
    /// Chance of performing the prompted gesture.
    pub compliance: f64,
}

impl ViewerProfile {
    pub fn from_fn(actions: ActionSet, mut f: impl FnMut(StateId, usize) -> f64) -> Result<Self, ViewerError> {
        let n = actions.len();
        let mut p_star = Vec::with_capacity(2 * n * n);
        for s in 0..2 * n {
            for a in 0..n {
                p_star.push(f(StateId::from_index(s), a));
            }
        }
        let profile = Self {
            actions,
            p_star,
            erratic_rate: 0.002,
            erratic_frames: 8,
            compliance: 0.7,
        };
        profile.validate()?;
        Ok(profile)
    }

    pub fn constant(actions: ActionSet, p: f64) -> Result<Self, ViewerError> {
        Self::from_fn(actions, |_, _| p)
    }

    pub fn validate(&self) -> Result<(), ViewerError> {
        let unit = |p: f64| (0.0..=1.0).contains(&p);
        if let Some(p) = self.p_star.iter().find(|p| !unit(**p)) {
            return Err(ViewerError::BadProfile(format!("attend probability {p} outside [0,1]")));
        }
        if !unit(self.erratic_rate) || !unit(self.compliance) {
            return Err(ViewerError::BadProfile("rates must lie in [0,1]".into()));
        }
        Ok(())
    }

    pub fn actions(&self) -> &ActionSet {
        &self.actions
    }

    pub fn p_star(&self, s: StateId, a: usize) -> f64 {
        self.p_star[s.index() * self.actions.len() + a]
    }

    pub fn set_p_star(&mut self, s: StateId, a: usize, p: f64) {
        let n = self.actions.len();
        self.p_star[s.index() * n + a] = p.clamp(0.0, 1.0);
    }

    /// CSV: `routine,attending,action,p`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), ViewerError> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["routine", "attending", "action", "p"])?;
        let n = self.actions.len();
        for s in 0..2 * n {
            let sid = StateId::from_index(s);
            for a in 0..n {
                w.write_record([
                    self.actions.get(sid.routine).as_str().to_string(),
                    sid.attending.to_string(),
                    self.actions.get(a).as_str().to_string(),
                    self.p_star(sid, a).to_string(),
                ])?;
            }
        }
        w.flush().map_err(csv::Error::from)?;
        Ok(())
    }

    /// Reads `p★` rows over `actions`; every cell must be present.
    pub fn read_csv<R: Read>(input: R, actions: ActionSet) -> Result<Self, ViewerError> {
        let n = actions.len();
        let mut cells: Vec<Option<f64>> = vec![None; 2 * n * n];
        let mut r = csv::Reader::from_reader(input);
        for rec in r.records() {
            let rec = rec?;
            if rec.len() != 4 {
                return Err(ViewerError::BadProfile(format!("expected 4 columns, got {}", rec.len())));
            }
            let routine = |i: usize| -> Result<usize, ViewerError> {
                let r: Routine = rec[i]
                    .parse()
                    .map_err(|e: crate::routine::UnknownRoutine| ViewerError::BadProfile(e.to_string()))?;
                actions
                    .index_of(r)
                    .ok_or_else(|| ViewerError::BadProfile(format!("{r} is not a selectable routine")))
            };
            let attending: bool = rec[1]
                .trim()
                .parse()
                .map_err(|_| ViewerError::BadProfile(format!("bad attending flag {:?}", &rec[1])))?;
            let p: f64 = rec[3]
                .trim()
                .parse()
                .map_err(|_| ViewerError::BadProfile(format!("bad probability {:?}", &rec[3])))?;
            let s = StateId::new(routine(0)?, attending);
            cells[s.index() * n + routine(2)?] = Some(p);
        }
        let p_star = cells
            .into_iter()
            .enumerate()
            .map(|(i, c)| c.ok_or_else(|| ViewerError::BadProfile(format!("missing cell {i}"))))
            .collect::<Result<Vec<_>, _>>()?;
        let profile = Self {
            actions,
            p_star,
            ..Self::default()
        };
        profile.validate()?;
        Ok(profile)
    }
}

/// Routines of the default desk-scale profile.
pub const DEFAULT_ACTIONS: [Routine; 4] = [
    Routine::IdleGazeWander,
    Routine::Beckon,
    Routine::Mimic,
    Routine::Ponder,
];

impl Default for ViewerProfile {
    /// The viewer warms to variety in a fixed order: each routine is best
    /// followed by the next one in `IdleGazeWander → Beckon → Mimic →
    /// Ponder → IdleGazeWander`, and repeating a routine bores them. The
    /// unique optimal policy walks that cycle, so every state stays
    /// visited.
    fn default() -> Self {
        let actions = ActionSet::new(DEFAULT_ACTIONS.to_vec()).expect("static action set");
        const BASE: [f64; 4] = [0.15, 0.25, 0.30, 0.25];
        const SUCCESSOR: f64 = 0.55;
        const REPEAT: f64 = 0.15;
        const ATTENDING: f64 = 0.08;
        let n = actions.len();
        Self::from_fn(actions, |s, a| {
            let mut p = BASE[a];
            if s.attending {
                p += ATTENDING;
            }
            if a == (s.routine + 1) % n {
                p += SUCCESSOR;
            }
            if a == s.routine {
                p -= REPEAT;
            }
            p.clamp(0.02, 0.98)
        })
        .expect("default profile is valid")
    }
}

/// Ground truth about the viewer for one frame.
#[derive(Debug, Clone, PartialEq)]
pub struct ViewerState {
    pub attending: bool,
    /// Degrees; positive turns toward image right.
    pub yaw: f64,
    /// Head centre in face-camera pixels.
    pub head: (f64, f64),
    pub gesture: Option<Pose>,
    /// `None` when nobody stands in front of the body camera.
    pub body_pose: Option<Pose>,
    burst_left: usize,
    burst_phase: usize,
    answered_prompt: Option<Pose>,
}

impl ViewerState {
    pub fn new(head: (f64, f64)) -> Self {
        Self {
            attending: false,
            yaw: 30.0,
            head,
            gesture: None,
            body_pose: Some(Pose::ArmsDown),
            burst_left: 0,
            burst_phase: 0,
            answered_prompt: None,
        }
    }

    pub fn in_burst(&self) -> bool {
        self.burst_left > 0
    }

    /// Begins an erratic burst of `frames` jittered frames, this one first.
    pub fn start_burst(&mut self, frames: usize) {
        self.burst_left = frames;
        self.burst_phase = 0;
    }

    pub fn head_label(&self) -> HeadLabel {
        truth_label(self.yaw)
    }
}

/// Orientation the pipeline should report at `yaw` degrees.
pub fn truth_label(yaw: f64) -> HeadLabel {
    if yaw.abs() < 15.0 {
        HeadLabel::Frontal
    } else if yaw > 0.0 {
        HeadLabel::Right
    } else {
        HeadLabel::Left
    }
}

/// Draws the attend bit for the coming decision period and a matching yaw.
/// With no previous decision the viewer attends with probability 0.5.
pub fn step_viewer<R: Rng + ?Sized>(
    profile: &ViewerProfile,
    state: &ViewerState,
    decision: Option<(StateId, usize)>,
    rng: &mut R,
) -> ViewerState {
    let p = decision.map_or(0.5, |(s, a)| profile.p_star(s, a));
    let attending = rng.gen_bool(p);
    let yaw = if attending {
        rng.gen_range(-5.0..=5.0)
    } else {
        let mag = rng.gen_range(20.0..=45.0);
        if rng.gen_bool(0.5) {
            mag
        } else {
            -mag
        }
    };
    ViewerState {
        attending,
        yaw,
        ..state.clone()
    }
}

/// Per-frame extras: erratic bursts and responses to gesture prompts.
///
/// Draw order: one burst-onset draw when no burst runs, then, on the first
/// frame of a new prompt, the compliance draw (and a wrong-gesture pick on
/// refusal).
pub fn frame_step<R: Rng + ?Sized>(
    profile: &ViewerProfile,
    state: &mut ViewerState,
    prompt: Option<Pose>,
    gestures: &[Pose],
    rng: &mut R,
) {
    if state.burst_left > 0 {
        state.burst_left -= 1;
        state.burst_phase += 1;
    } else if profile.erratic_rate > 0.0 && rng.gen_bool(profile.erratic_rate) {
        state.start_burst(profile.erratic_frames);
    }
    match prompt {
        Some(g) if state.answered_prompt != Some(g) => {
            state.answered_prompt = Some(g);
            state.gesture = if rng.gen_bool(profile.compliance) {
                Some(g)
            } else if rng.gen_bool(0.5) {
                // a wrong answer rather than none
                let others: Vec<Pose> = gestures.iter().copied().filter(|&p| p != g).collect();
                (!others.is_empty()).then(|| others[rng.gen_range(0..others.len())])
            } else {
                None
            };
        }
        Some(_) => {}
        None => {
            state.answered_prompt = None;
            state.gesture = None;
        }
    }
    state.body_pose = state.body_pose.map(|_| state.gesture.unwrap_or(Pose::ArmsDown));
}

/// Head centre actually shown this frame, burst jitter included.
pub fn shown_head(state: &ViewerState, amplitude: f64) -> (f64, f64) {
    let (x, y) = state.head;
    if state.burst_left == 0 {
        return (x.round(), y.round());
    }
    let sign = if state.burst_phase.is_multiple_of(2) { 1.0 } else { -1.0 };
    ((x + sign * amplitude).round(), y.round())
}

/// Drawing primitive, pixel coordinates; a pixel is covered when its centre
/// lies inside.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Shape {
    Rect { x0: f64, y0: f64, x1: f64, y1: f64 },
    Disk { cx: f64, cy: f64, r: f64 },
}

impl Shape {
    pub fn covers(&self, x: f64, y: f64) -> bool {
        match *self {
            Shape::Rect { x0, y0, x1, y1 } => x >= x0 && x < x1 && y >= y0 && y < y1,
            Shape::Disk { cx, cy, r } => (x - cx).powi(2) + (y - cy).powi(2) <= r * r,
        }
    }
}

fn rect(x0: f64, y0: f64, x1: f64, y1: f64) -> Shape {
    Shape::Rect { x0, y0, x1, y1 }
}

/// Silhouette outline of each shipped pose on the default 96x72 body frame.
pub fn default_silhouettes() -> Vec<(Pose, Vec<Shape>)> {
    let head = Shape::Disk { cx: 48.0, cy: 22.0, r: 7.0 };
    let torso = rect(38.0, 30.0, 58.0, 72.0);
    let left_down = rect(30.0, 32.0, 36.0, 64.0);
    let right_down = rect(60.0, 32.0, 66.0, 64.0);
    let left_up = rect(30.0, 6.0, 36.0, 36.0);
    let right_up = rect(60.0, 6.0, 66.0, 36.0);
    let right_wave = [rect(58.0, 30.0, 84.0, 36.0), rect(78.0, 14.0, 84.0, 36.0)];
    vec![
        (Pose::ArmsDown, vec![head, torso, left_down, right_down]),
        (Pose::LeftArmRaised, vec![head, torso, left_up, right_down]),
        (Pose::RightArmRaised, vec![head, torso, left_down, right_up]),
        (Pose::BothArmsRaised, vec![head, torso, left_up, right_up]),
        (Pose::Wave, [vec![head, torso, left_down], right_wave.to_vec()].concat()),
    ]
}

/// Scene geometry and photometry for both cameras.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneConfig {
    pub face_width: usize,
    pub face_height: usize,
    pub body_width: usize,
    pub body_height: usize,
    pub background: f64,
    pub noise_sigma: f64,
    /// Head ellipse semi-axes, px.
    pub head_axes: (f64, f64),
    pub head_intensity: f64,
    pub feature_intensity: f64,
    /// Rim brightening per degree of yaw.
    pub gradient: f64,
    /// Horizontal jitter of an erratic burst, px.
    pub burst_amplitude: f64,
    pub body_background: f64,
    pub body_intensity: f64,
    pub silhouettes: Vec<(Pose, Vec<Shape>)>,
}

impl Default for SceneConfig {
    fn default() -> Self {
        Self {
            face_width: 96,
            face_height: 96,
            body_width: 96,
            body_height: 72,
            background: 50.0,
            noise_sigma: 2.0,
            head_axes: (14.0, 18.0),
            head_intensity: 190.0,
            feature_intensity: 140.0,
            gradient: 1.3,
            burst_amplitude: 4.0,
            body_background: 80.0,
            body_intensity: 160.0,
            silhouettes: default_silhouettes(),
        }
    }
}

impl SceneConfig {
    pub fn validate(&self) -> Result<(), ViewerError> {
        let (ax, ay) = self.head_axes;
        let margin_x = 2.0 * (ax + self.burst_amplitude) + 2.0;
        let margin_y = 2.0 * ay + 2.0;
        if ax * 2.0 < MIN_FACE_SIDE as f64 || ay * 2.0 < MIN_FACE_SIDE as f64 {
            return Err(ViewerError::BadScene("head too small for the detector".into()));
        }
        if margin_x > self.face_width as f64 || margin_y > self.face_height as f64 {
            return Err(ViewerError::BadScene("face does not fit in the frame".into()));
        }
        if self.face_width < 16 || self.face_height < 16 || self.body_width < 16 || self.body_height < 16 {
            return Err(ViewerError::BadScene("frames must be at least 16 px".into()));
        }
        if !(self.noise_sigma >= 0.0) {
            return Err(ViewerError::BadScene("noise sigma must be non-negative".into()));
        }
        Ok(())
    }

    pub fn head_centre(&self) -> (f64, f64) {
        ((self.face_width / 2) as f64, (self.face_height / 2) as f64)
    }

    fn silhouette(&self, pose: Pose) -> Result<&[Shape], ViewerError> {
        self.silhouettes
            .iter()
            .find(|(p, _)| *p == pose)
            .map(|(_, s)| s.as_slice())
            .ok_or_else(|| ViewerError::UnknownPoseLabel(pose.as_str().into()))
    }

    /// Exact silhouette mask for `pose`.
    pub fn silhouette_mask(&self, pose: Pose) -> Result<ForegroundMask, ViewerError> {
        let shapes = self.silhouette(pose)?;
        Ok(ForegroundMask::from_fn(self.body_width, self.body_height, |x, y| {
            let (px, py) = (x as f64 + 0.5, y as f64 + 0.5);
            shapes.iter().any(|s| s.covers(px, py))
        }))
    }
}

fn add_noise<R: Rng + ?Sized>(values: &mut [f64], sigma: f64, rng: &mut R) {
    // no draws at zero noise, so noiseless runs share the label-mode stream
    if sigma > 0.0 {
        let normal = Normal::new(0.0, sigma).expect("finite sigma");
        for v in values.iter_mut() {
            *v += normal.sample(rng);
        }
    }
}

fn quantize(width: usize, height: usize, values: &[f64]) -> Frame {
    let data = values.iter().map(|v| v.round().clamp(0.0, 255.0) as u8).collect();
    Frame::new(width, height, data).expect("scene dimensions validated")
}

/// Bounding box of the rasterized head ellipse.
pub fn head_rect(state: &ViewerState, scene: &SceneConfig) -> Rect {
    let (cx, cy) = shown_head(state, scene.burst_amplitude);
    let (ax, ay) = scene.head_axes;
    let inside = |x: usize, y: usize| {
        let u = (x as f64 + 0.5 - cx) / ax;
        let v = (y as f64 + 0.5 - cy) / ay;
        u * u + v * v <= 1.0
    };
    let (mut x0, mut y0, mut x1, mut y1) = (usize::MAX, usize::MAX, 0, 0);
    let xs = (cx - ax - 1.0).max(0.0) as usize..((cx + ax + 1.0) as usize).min(scene.face_width);
    let ys = (cy - ay - 1.0).max(0.0) as usize..((cy + ay + 1.0) as usize).min(scene.face_height);
    for y in ys {
        for x in xs.clone() {
            if inside(x, y) {
                x0 = x0.min(x);
                y0 = y0.min(y);
                x1 = x1.max(x);
                y1 = y1.max(y);
            }
        }
    }
    Rect::new(x0, y0, x1 + 1 - x0, y1 + 1 - y0)
}

/// What a synthesized face frame shows.
#[derive(Debug, Clone, PartialEq)]
pub struct FaceTruth {
    pub rect: Rect,
    pub yaw: f64,
    pub attending: bool,
    pub label: HeadLabel,
}

/// Draws the head with eyes and mouth displaced by yaw and a lateral
/// brightness gradient growing with |yaw|.
pub fn synthesize_face_frame<R: Rng + ?Sized>(
    state: &ViewerState,
    scene: &SceneConfig,
    rng: &mut R,
) -> (Frame, FaceTruth) {
    let (w, h) = (scene.face_width, scene.face_height);
    let (cx, cy) = shown_head(state, scene.burst_amplitude);
    let (ax, ay) = scene.head_axes;
    let shift = state.yaw * ax / 45.0;
    let eye_r = 0.16 * ax;
    let eyes = [
        (cx - 0.4 * ax + shift, cy - 0.25 * ay),
        (cx + 0.4 * ax + shift, cy - 0.25 * ay),
    ];
    let mouth = (cx + shift, cy + 0.45 * ay, 0.35 * ax, 0.07 * ay);
    let mut values = vec![scene.background; w * h];
    for y in 0..h {
        for x in 0..w {
            let (px, py) = (x as f64 + 0.5, y as f64 + 0.5);
            let (u, v) = ((px - cx) / ax, (py - cy) / ay);
            if u * u + v * v > 1.0 {
                continue;
            }
            let on_eye = eyes
                .iter()
                .any(|&(ex, ey)| (px - ex).powi(2) + (py - ey).powi(2) <= eye_r * eye_r);
            let on_mouth = (px - mouth.0).abs() <= mouth.2 && (py - mouth.1).abs() <= mouth.3;
            values[y * w + x] = if on_eye || on_mouth {
                scene.feature_intensity
            } else {
                scene.head_intensity + scene.gradient * state.yaw * u
            };
        }
    }
    add_noise(&mut values, scene.noise_sigma, rng);
    (
        quantize(w, h, &values),
        FaceTruth {
            rect: head_rect(state, scene),
            yaw: state.yaw,
            attending: state.attending,
            label: truth_label(state.yaw),
        },
    )
}

/// Composites the viewer's silhouette over the noisy body-camera
/// background. Returns the shown pose.
pub fn synthesize_body_frame<R: Rng + ?Sized>(
    state: &ViewerState,
    scene: &SceneConfig,
    rng: &mut R,
) -> Result<(Frame, Option<Pose>), ViewerError> {
    let (w, h) = (scene.body_width, scene.body_height);
    let mut values = vec![scene.body_background; w * h];
    if let Some(pose) = state.body_pose {
        let mask = scene.silhouette_mask(pose)?;
        for (i, v) in values.iter_mut().enumerate() {
            if mask.get(i % w, i / w) {
                *v = scene.body_intensity;
            }
        }
    }
    add_noise(&mut values, scene.noise_sigma, rng);
    Ok((quantize(w, h, &values), state.body_pose))
}

/// Empty-scene frame for background training.
pub fn background_frame<R: Rng + ?Sized>(scene: &SceneConfig, rng: &mut R) -> Frame {
    let mut values = vec![scene.body_background; scene.body_width * scene.body_height];
    add_noise(&mut values, scene.noise_sigma, rng);
    quantize(scene.body_width, scene.body_height, &values)
}

/// Drape profiles of the clean silhouettes.
pub fn default_pose_references(scene: &SceneConfig, params: &DrapeParams) -> Result<Vec<PoseReference>, ViewerError> {
    Pose::ALL
        .iter()
        .map(|&pose| {
            let mask = scene.silhouette_mask(pose)?;
            let profile: DrapeProfile = drape(&mask, params);
            Ok(PoseReference { label: pose, profile })
        })
        .collect()
}
