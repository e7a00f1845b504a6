//! Run configuration: `key = value` lines grouped under `[section]`
//! headers. Every key is optional; unknown keys are rejected so typos
//! surface early.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use ini::Ini;
use thiserror::Error;

use crate::attention::FusionConfig;
use crate::behavior::BehaviorConfig;
use crate::body::{DrapeParams, Pose, VARIANCE_FLOOR};
use crate::face::{FaceThresholds, FlowConfig};
use crate::learning::{ActionSet, PolicyConfig, ValueMode};
use crate::par::Exec;
use crate::routine::Routine;
use crate::viewer::{SceneConfig, ViewerProfile};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{key}: {message}")]
    Key { key: String, message: String },
    #[error("cannot read {path}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed config: {0}")]
    Syntax(String),
}

impl ConfigError {
    pub fn key(key: impl Into<String>, message: impl Into<String>) -> Self {
        ConfigError::Key {
            key: key.into(),
            message: message.into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Mode {
    #[default]
    Labels,
    Pixels,
}

impl FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "labels" => Ok(Mode::Labels),
            "pixels" => Ok(Mode::Pixels),
            other => Err(format!("expected labels or pixels, got {other:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub mode: Mode,
    /// Frames to simulate.
    pub steps: u64,
    pub seed: u64,
    pub fps: f64,
    pub decision_secs: f64,
    pub dump_frames: bool,
    pub out: PathBuf,
    pub exec: Exec,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            mode: Mode::Labels,
            steps: 40_000,
            seed: 1,
            fps: 10.0,
            decision_secs: 2.0,
            dump_frames: false,
            out: PathBuf::from("out"),
            exec: Exec::default(),
        }
    }
}

impl RunConfig {
    /// Frames per decision period.
    pub fn period(&self) -> u64 {
        (self.decision_secs * self.fps).round() as u64
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VisionConfig {
    pub detector_threshold: u8,
    pub detector_min_pixels: usize,
    pub thresholds: FaceThresholds,
    pub flow_block: usize,
    pub flow_radius: i32,
    pub flow_zero_bias: f64,
    pub fusion: FusionConfig,
    pub mahalanobis: f64,
    pub variance_floor: f64,
    pub background_frames: usize,
    pub pose_threshold: f64,
    pub drape: DrapeParams,
}

impl Default for VisionConfig {
    fn default() -> Self {
        let flow = FlowConfig::default();
        Self {
            detector_threshold: 125,
            detector_min_pixels: 64,
            thresholds: FaceThresholds::default(),
            flow_block: flow.block,
            flow_radius: flow.radius,
            flow_zero_bias: flow.zero_bias,
            fusion: FusionConfig::default(),
            mahalanobis: 3.0,
            variance_floor: VARIANCE_FLOOR,
            background_frames: 20,
            pose_threshold: 0.9,
            drape: DrapeParams::default(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Config {
    pub run: RunConfig,
    pub policy: PolicyConfig,
    pub value_mode: ValueMode,
    /// Outcome-table CSV to start learning from.
    pub warm_start: Option<PathBuf>,
    pub behavior: BehaviorConfig,
    pub profile: ViewerProfile,
    pub scene: SceneConfig,
    pub vision: VisionConfig,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            run: RunConfig::default(),
            policy: PolicyConfig::default(),
            value_mode: ValueMode::Synchronous,
            warm_start: None,
            behavior: BehaviorConfig::default(),
            profile: ViewerProfile::default(),
            scene: SceneConfig::default(),
            vision: VisionConfig::default(),
        }
    }
}

/// Typed access to one section; remembers which keys were read.
struct Section<'a> {
    name: &'a str,
    values: BTreeMap<String, String>,
}

impl<'a> Section<'a> {
    fn key(&self, k: &str) -> String {
        format!("{}.{k}", self.name)
    }

    fn take<T: FromStr>(&mut self, k: &str, slot: &mut T) -> Result<(), ConfigError>
    where
        T::Err: std::fmt::Display,
    {
        if let Some(raw) = self.values.remove(k) {
            *slot = raw
                .parse()
                .map_err(|e: T::Err| ConfigError::key(self.key(k), format!("cannot parse {raw:?}: {e}")))?;
        }
        Ok(())
    }

    fn take_with<T>(&mut self, k: &str, slot: &mut T, parse: impl FnOnce(&str) -> Result<T, String>) -> Result<(), ConfigError> {
        if let Some(raw) = self.values.remove(k) {
            *slot = parse(&raw).map_err(|e| ConfigError::key(self.key(k), e))?;
        }
        Ok(())
    }

    fn raw(&mut self, k: &str) -> Option<String> {
        self.values.remove(k)
    }

    fn finish(self) -> Result<(), ConfigError> {
        match self.values.into_keys().next() {
            Some(k) => Err(ConfigError::key(format!("{}.{k}", self.name), "unknown key")),
            None => Ok(()),
        }
    }
}

fn parse_list<T: FromStr>(raw: &str) -> Result<Vec<T>, String>
where
    T::Err: std::fmt::Display,
{
    raw.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| s.parse::<T>().map_err(|e| e.to_string()))
        .collect()
}

fn parse_bool(raw: &str) -> Result<bool, String> {
    match raw {
        "true" | "yes" | "1" | "on" => Ok(true),
        "false" | "no" | "0" | "off" => Ok(false),
        other => Err(format!("expected a boolean, got {other:?}")),
    }
}

fn parse_exec(raw: &str) -> Result<Exec, String> {
    match raw {
        "parallel" => Ok(Exec::Parallel),
        "sequential" => Ok(Exec::Sequential),
        other => Err(format!("expected parallel or sequential, got {other:?}")),
    }
}

fn parse_value_mode(raw: &str) -> Result<ValueMode, String> {
    match raw {
        "sync" | "synchronous" => Ok(ValueMode::Synchronous),
        "async" | "asynchronous" => Ok(ValueMode::Asynchronous),
        other => Err(format!("expected sync or async, got {other:?}")),
    }
}

const SECTIONS: [&str; 7] = ["run", "learning", "behavior", "viewer", "scene", "vision", "parallel"];

impl Config {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::parse(&text, path.parent())
    }

    /// Parses config text; relative paths resolve against `base`.
    pub fn parse(text: &str, base: Option<&Path>) -> Result<Self, ConfigError> {
        let ini = Ini::load_from_str(text).map_err(|e| ConfigError::Syntax(e.to_string()))?;
        let mut sections: BTreeMap<&str, BTreeMap<String, String>> = BTreeMap::new();
        for (name, props) in ini.iter() {
            let Some(name) = name else {
                if let Some((k, _)) = props.iter().next() {
                    return Err(ConfigError::key(k, "key outside any [section]"));
                }
                continue;
            };
            let Some(&known) = SECTIONS.iter().find(|s| **s == name) else {
                return Err(ConfigError::key(name, "unknown section"));
            };
            let entry = sections.entry(known).or_default();
            for (k, v) in props.iter() {
                entry.insert(k.to_string(), v.trim().to_string());
            }
        }
        let mut section = |name: &'static str| Section {
            name,
            values: sections.remove(name).unwrap_or_default(),
        };
        let resolve = |p: String| -> PathBuf {
            let p = PathBuf::from(p);
            match base {
                Some(b) if p.is_relative() => b.join(p),
                _ => p,
            }
        };
        let mut cfg = Config::default();

        let mut s = section("run");
        let run = &mut cfg.run;
        s.take_with("mode", &mut run.mode, |r| r.parse())?;
        s.take("steps", &mut run.steps)?;
        s.take("seed", &mut run.seed)?;
        s.take("fps", &mut run.fps)?;
        s.take("decision_secs", &mut run.decision_secs)?;
        s.take_with("dump_frames", &mut run.dump_frames, parse_bool)?;
        if let Some(out) = s.raw("out") {
            run.out = resolve(out);
        }
        s.finish()?;

        let mut s = section("parallel");
        s.take_with("exec", &mut cfg.run.exec, parse_exec)?;
        s.finish()?;

        let mut s = section("learning");
        let p = &mut cfg.policy;
        s.take("epsilon", &mut p.epsilon)?;
        s.take("gamma", &mut p.gamma)?;
        s.take("tolerance", &mut p.tolerance)?;
        s.take("max_sweeps", &mut p.max_sweeps)?;
        s.take_with("value_mode", &mut cfg.value_mode, parse_value_mode)?;
        cfg.warm_start = s.raw("warm_start").map(resolve);
        let actions = s.raw("actions");
        s.finish()?;

        let mut s = section("behavior");
        let b = &mut cfg.behavior;
        b.fps = cfg.run.fps;
        s.take("idle_secs", &mut b.idle_secs)?;
        s.take("ponder_secs", &mut b.ponder_secs)?;
        s.take("response_secs", &mut b.response_secs)?;
        s.take("reward_secs", &mut b.reward_secs)?;
        s.take("beckon_secs", &mut b.beckon_secs)?;
        s.take("puzzled_hold_secs", &mut b.puzzled_hold_secs)?;
        s.take("face_ratio_lo", &mut b.face_ratio_lo)?;
        s.take("face_ratio_hi", &mut b.face_ratio_hi)?;
        s.take("change_probability", &mut b.change_probability)?;
        s.take_with("gestures", &mut b.gestures, parse_list::<Pose>)?;
        s.finish()?;

        let mut s = section("viewer");
        let profile_path = s.raw("profile").map(resolve);
        let mut erratic_rate = cfg.profile.erratic_rate;
        let mut erratic_frames = cfg.profile.erratic_frames;
        let mut compliance = cfg.profile.compliance;
        s.take("erratic_rate", &mut erratic_rate)?;
        s.take("erratic_frames", &mut erratic_frames)?;
        s.take("compliance", &mut compliance)?;
        s.finish()?;
        let actions = match actions {
            Some(raw) => {
                let list = parse_list::<Routine>(&raw).map_err(|e| ConfigError::key("learning.actions", e))?;
                ActionSet::new(list).map_err(|e| ConfigError::key("learning.actions", e.to_string()))?
            }
            None => cfg.profile.actions().clone(),
        };
        if let Some(path) = profile_path {
            let file = std::fs::File::open(&path)
                .map_err(|e| ConfigError::key("viewer.profile", format!("{}: {e}", path.display())))?;
            cfg.profile = ViewerProfile::read_csv(file, actions)
                .map_err(|e| ConfigError::key("viewer.profile", e.to_string()))?;
        } else if &actions != cfg.profile.actions() {
            return Err(ConfigError::key(
                "learning.actions",
                "a custom action set needs a matching viewer.profile file",
            ));
        }
        cfg.profile.erratic_rate = erratic_rate;
        cfg.profile.erratic_frames = erratic_frames;
        cfg.profile.compliance = compliance;
        cfg.profile
            .validate()
            .map_err(|e| ConfigError::key("viewer", e.to_string()))?;

        let mut s = section("scene");
        let sc = &mut cfg.scene;
        s.take("face_width", &mut sc.face_width)?;
        s.take("face_height", &mut sc.face_height)?;
        s.take("body_width", &mut sc.body_width)?;
        s.take("body_height", &mut sc.body_height)?;
        s.take("background", &mut sc.background)?;
        s.take("noise_sigma", &mut sc.noise_sigma)?;
        s.take("head_axis_x", &mut sc.head_axes.0)?;
        s.take("head_axis_y", &mut sc.head_axes.1)?;
        s.take("head_intensity", &mut sc.head_intensity)?;
        s.take("feature_intensity", &mut sc.feature_intensity)?;
        s.take("gradient", &mut sc.gradient)?;
        s.take("burst_amplitude", &mut sc.burst_amplitude)?;
        s.take("body_background", &mut sc.body_background)?;
        s.take("body_intensity", &mut sc.body_intensity)?;
        s.finish()?;

        let mut s = section("vision");
        let v = &mut cfg.vision;
        s.take("detector_threshold", &mut v.detector_threshold)?;
        s.take("detector_min_pixels", &mut v.detector_min_pixels)?;
        let th = &mut v.thresholds;
        s.take("sym", &mut th.sym)?;
        s.take("cog", &mut th.cog)?;
        s.take("still", &mut th.still)?;
        s.take("zone", &mut th.zone)?;
        s.take("spread", &mut th.spread)?;
        s.take("expr", &mut th.expr)?;
        s.take("mag", &mut th.mag)?;
        s.take("edge", &mut th.edge)?;
        s.take("flow_block", &mut v.flow_block)?;
        s.take("flow_radius", &mut v.flow_radius)?;
        s.take("flow_zero_bias", &mut v.flow_zero_bias)?;
        s.take("jerk_threshold", &mut v.fusion.jerk_threshold)?;
        s.take("erratic_frames", &mut v.fusion.erratic_frames)?;
        s.take("recent_secs", &mut v.fusion.recent_secs)?;
        s.take("mahalanobis", &mut v.mahalanobis)?;
        s.take("variance_floor", &mut v.variance_floor)?;
        s.take("background_frames", &mut v.background_frames)?;
        s.take("pose_threshold", &mut v.pose_threshold)?;
        s.take("drape_gravity", &mut v.drape.gravity)?;
        s.take("drape_coupling", &mut v.drape.coupling)?;
        s.take("drape_tolerance", &mut v.drape.tolerance)?;
        s.take("drape_max_iters", &mut v.drape.max_iters)?;
        s.finish()?;

        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let r = &self.run;
        if r.steps < 1 {
            return Err(ConfigError::key("run.steps", "must be at least 1"));
        }
        if !(r.fps > 0.0) {
            return Err(ConfigError::key("run.fps", "must be positive"));
        }
        let frames = r.decision_secs * r.fps;
        if !(frames >= 1.0) || (frames - frames.round()).abs() > 1e-9 {
            return Err(ConfigError::key(
                "run.decision_secs",
                "must be a positive multiple of the frame period",
            ));
        }
        if r.dump_frames && r.mode != Mode::Pixels {
            return Err(ConfigError::key("run.dump_frames", "frames are only synthesized in pixels mode"));
        }
        let p = &self.policy;
        if !(0.0..=1.0).contains(&p.epsilon) {
            return Err(ConfigError::key("learning.epsilon", "must lie in [0,1]"));
        }
        if !(0.0..1.0).contains(&p.gamma) {
            return Err(ConfigError::key("learning.gamma", "must lie in [0,1)"));
        }
        if !(p.tolerance > 0.0) {
            return Err(ConfigError::key("learning.tolerance", "must be positive"));
        }
        if !(0.0..=1.0).contains(&self.behavior.change_probability) {
            return Err(ConfigError::key("behavior.change_probability", "must lie in [0,1]"));
        }
        if self.behavior.gestures.is_empty() || self.behavior.gestures.iter().any(|g| !g.is_gesture()) {
            return Err(ConfigError::key("behavior.gestures", "needs at least one gesture, ArmsDown excluded"));
        }
        if self.behavior.face_ratio_lo > self.behavior.face_ratio_hi {
            return Err(ConfigError::key("behavior.face_ratio_lo", "exceeds face_ratio_hi"));
        }
        self.scene
            .validate()
            .map_err(|e| ConfigError::key("scene", e.to_string()))?;
        let v = &self.vision;
        if v.flow_block == 0 {
            return Err(ConfigError::key("vision.flow_block", "must be positive"));
        }
        if !(v.flow_zero_bias >= 0.0) {
            return Err(ConfigError::key("vision.flow_zero_bias", "must be non-negative"));
        }
        if v.background_frames < 2 {
            return Err(ConfigError::key("vision.background_frames", "needs at least 2 frames"));
        }
        if !(v.variance_floor > 0.0) {
            return Err(ConfigError::key("vision.variance_floor", "must be positive"));
        }
        if v.fusion.erratic_frames == 0 {
            return Err(ConfigError::key("vision.erratic_frames", "must be at least 1"));
        }
        Ok(())
    }

    pub fn flow(&self) -> FlowConfig {
        FlowConfig {
            block: self.vision.flow_block,
            radius: self.vision.flow_radius,
            zero_bias: self.vision.flow_zero_bias,
            exec: self.run.exec,
        }
    }
}
