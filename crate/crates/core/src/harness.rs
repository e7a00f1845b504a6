//! The closed interaction loop: simulated viewer → vision → attention →
//! behavior arbitration → learning, plus the oracle solver and metrics.
//!
//! Per frame the single seeded RNG is consumed in this order:
//!
//! 1. viewer: on decision ticks the attend bit and yaw, then every frame
//!    the burst-onset draw and any prompt-compliance draws;
//! 2. pixel noise (pixel mode with non-zero noise only);
//! 3. on decision ticks the scheduler coin, then the ε draws;
//! 4. behavior draws (idle routine choice, prompted gesture).
//!
//! Noise comes before the coin because the state fed to the policy is what
//! the vision pipeline reports for the current frame. Background training
//! frames are drawn once before the first tick.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::attention::{AttentionFuser, AttentionState, Cues};
use crate::behavior::{scheduler_tick, BehaviorEngine, Cause, GameEvent};
use crate::body::{
    classify_pose, drape, segment_foreground, train_background, BackgroundModel, BodyError, Pose,
    PoseReference,
};
use crate::config::{Config, ConfigError, Mode};
use crate::face::{
    default_expression_refs, estimate_jerk, BrightBlobDetector, FaceAnalyzer, FaceError, FaceObservation,
    HeadTrack, MotionClass, RegionLayout,
};
use crate::frame::Frame;
use crate::learning::{compute_reward, ActionSet, Learner, LearningError, QTable, StateId};
use crate::par::{self, Exec};
use crate::routine::Routine;
use crate::viewer::{
    background_frame, default_pose_references, frame_step, head_rect, step_viewer, synthesize_body_frame,
    synthesize_face_frame, FaceTruth, ViewerError, ViewerProfile, ViewerState,
};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Learning(#[from] LearningError),
    #[error(transparent)]
    Face(#[from] FaceError),
    #[error(transparent)]
    Body(#[from] BodyError),
    #[error(transparent)]
    Viewer(#[from] ViewerError),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Who picks routines on scheduler heads.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Agent {
    /// ε-greedy on the learned values.
    Learned,
    /// Uniform over the action set; the baseline.
    Random,
    /// Always this action index.
    Fixed(usize),
}

/// One log row per frame.
#[derive(Debug, Clone, PartialEq)]
pub struct LogRow {
    pub tick: u64,
    pub routine: Routine,
    pub cause: Cause,
    pub attending: bool,
    pub reward: u8,
    /// An ε-exploration happened on this tick.
    pub explore: bool,
    pub jerk: f64,
    /// `None` when no face was seen.
    pub orientation: Option<String>,
    pub decision: bool,
}

/// One scheduler decision.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecisionRecord {
    pub tick: u64,
    pub state: StateId,
    pub action: usize,
    /// Scheduler coin came up heads.
    pub reconsidered: bool,
    pub explored: bool,
}

impl DecisionRecord {
    pub fn attending(&self) -> bool {
        self.state.attending
    }
}

/// A frame pair and its ground truth, for dumping.
pub enum FrameEvent<'a> {
    Background { index: usize, frame: &'a Frame },
    Tick {
        tick: u64,
        face: &'a Frame,
        body: &'a Frame,
        truth: &'a FaceTruth,
        pose: Option<Pose>,
    },
}

pub type FrameSink<'a> = dyn FnMut(FrameEvent<'_>) -> std::io::Result<()> + 'a;

pub struct Episode {
    pub rows: Vec<LogRow>,
    pub decisions: Vec<DecisionRecord>,
    /// Outcomes handed to the learner.
    pub outcomes: u64,
    /// Ground-truth attend bit per frame.
    pub truth: Vec<bool>,
    pub game_events: Vec<(u64, GameEvent)>,
    pub learner: Learner,
    pub final_q: QTable,
}

impl Episode {
    /// Attend bits observed at decision ticks.
    pub fn decision_attention(&self) -> Vec<bool> {
        self.decisions.iter().map(|d| d.attending()).collect()
    }
}

/// The pixel-mode vision stack: face pipeline plus body segmentation and
/// drape classification against a trained background.
pub struct PixelVision {
    analyzer: FaceAnalyzer<BrightBlobDetector>,
    background: Option<BackgroundModel>,
    refs: Vec<PoseReference>,
}

/// What the vision stack reports for one frame.
#[derive(Debug, Clone)]
pub struct Observation {
    pub cues: Cues,
    /// Face area over frame area; 0 without a face.
    pub face_ratio: f64,
    pub face: Option<FaceObservation>,
}

fn label_observation(viewer: &ViewerState, cfg: &Config, track: &mut HeadTrack) -> Observation {
    let rect = head_rect(viewer, &cfg.scene);
    track.push(rect.center());
    let jerk = estimate_jerk(track).unwrap_or(0.0);
    Observation {
        cues: Cues {
            orientation: Some(viewer.head_label()),
            expression: Default::default(),
            motion: MotionClass::Still,
            jerk,
            pose: viewer.body_pose,
        },
        face_ratio: rect.area() as f64 / (cfg.scene.face_width * cfg.scene.face_height) as f64,
        face: None,
    }
}

impl PixelVision {
    /// Without background frames the body camera is ignored.
    pub fn new(cfg: &Config, background_frames: &[Frame]) -> Result<Self, HarnessError> {
        let v = &cfg.vision;
        let background = if background_frames.is_empty() {
            None
        } else {
            Some(train_background(background_frames, v.variance_floor, cfg.run.exec)?)
        };
        Ok(Self {
            analyzer: build_analyzer(cfg),
            background,
            refs: default_pose_references(&cfg.scene, &v.drape)?,
        })
    }

    pub fn observe(&mut self, face: &Frame, body: Option<&Frame>, cfg: &Config) -> Result<Observation, HarnessError> {
        let v = &cfg.vision;
        let obs = self.analyzer.process(face)?;
        let pose = match (&self.background, body) {
            (Some(bg), Some(body)) => {
                let mask = segment_foreground(bg, body, v.mahalanobis, cfg.run.exec)?;
                classify_pose(&drape(&mask, &v.drape), &self.refs, v.pose_threshold)?
            }
            _ => None,
        };
        Ok(match obs {
            Some(o) => Observation {
                face_ratio: o.rect.rect().area() as f64 / (face.width() * face.height()) as f64,
                cues: Cues {
                    orientation: Some(o.orientation.label),
                    expression: o.expression.clone(),
                    motion: o.motion,
                    jerk: o.jerk,
                    pose,
                },
                face: Some(o),
            },
            None => Observation {
                cues: Cues { pose, ..Cues::no_face() },
                face_ratio: 0.0,
                face: None,
            },
        })
    }
}

fn pixel_vision<R: Rng + ?Sized>(
    cfg: &Config,
    rng: &mut R,
    sink: &mut Option<&mut FrameSink<'_>>,
) -> Result<PixelVision, HarnessError> {
    let frames: Vec<Frame> = (0..cfg.vision.background_frames)
        .map(|_| background_frame(&cfg.scene, rng))
        .collect();
    if let Some(sink) = sink.as_mut() {
        for (index, frame) in frames.iter().enumerate() {
            sink(FrameEvent::Background { index, frame })?;
        }
    }
    PixelVision::new(cfg, &frames)
}

/// Face pipeline configured from `cfg`.
pub fn build_analyzer(cfg: &Config) -> FaceAnalyzer<BrightBlobDetector> {
    let v = &cfg.vision;
    FaceAnalyzer::new(
        BrightBlobDetector {
            threshold: v.detector_threshold,
            min_pixels: v.detector_min_pixels,
        },
        RegionLayout::default(),
        cfg.flow(),
        v.thresholds.clone(),
        default_expression_refs(),
    )
}

fn build_learner(cfg: &Config) -> Result<Learner, HarnessError> {
    let actions = cfg.profile.actions().clone();
    let mut learner = Learner::new(actions.clone(), cfg.policy, cfg.value_mode);
    if let Some(path) = &cfg.warm_start {
        let file = std::fs::File::open(path)
            .map_err(|e| ConfigError::key("learning.warm_start", format!("{}: {e}", path.display())))?;
        let table = crate::learning::read_outcome_csv(file, &actions)
            .map_err(|e| ConfigError::key("learning.warm_start", e.to_string()))?;
        learner.warm_start(table)?;
    }
    Ok(learner)
}

/// Runs one seeded episode of `cfg.run.steps` frames.
pub fn run_episode(cfg: &Config, agent: Agent, mut sink: Option<&mut FrameSink<'_>>) -> Result<Episode, HarnessError> {
    cfg.validate()?;
    let actions: ActionSet = cfg.profile.actions().clone();
    if let Agent::Fixed(a) = agent {
        if a >= actions.len() {
            return Err(ConfigError::key("agent", format!("action index {a} out of range")).into());
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.run.seed);
    let period = cfg.run.period();
    let fps = cfg.run.fps;
    let mut learner = build_learner(cfg)?;
    let mut behavior_cfg = cfg.behavior.clone();
    behavior_cfg.fps = fps;
    let mut engine = BehaviorEngine::new(behavior_cfg, actions.get(0));
    let mut fuser = AttentionFuser::new(cfg.vision.fusion);
    let mut viewer = ViewerState::new(cfg.scene.head_centre());
    let mut track = HeadTrack::default();
    let mut vision = match cfg.run.mode {
        Mode::Pixels => Some(pixel_vision(cfg, &mut rng, &mut sink)?),
        Mode::Labels => None,
    };

    let steps = cfg.run.steps as usize;
    let mut rows = Vec::with_capacity(steps);
    let mut truth = Vec::with_capacity(steps);
    let mut decisions = Vec::with_capacity(steps / period as usize + 1);
    let mut game_events = Vec::new();
    let mut outcomes = 0u64;
    let mut pending: Option<(StateId, usize)> = None;

    for t in 0..cfg.run.steps {
        let decision = t % period == 0;
        if decision {
            viewer = step_viewer(&cfg.profile, &viewer, pending, &mut rng);
        }
        frame_step(
            &cfg.profile,
            &mut viewer,
            engine.state.game.prompted_gesture(),
            &engine.cfg.gestures,
            &mut rng,
        );
        truth.push(viewer.attending);

        let obs = match vision.as_mut() {
            Some(v) => {
                let (face, face_truth) = synthesize_face_frame(&viewer, &cfg.scene, &mut rng);
                let (body, pose) = synthesize_body_frame(&viewer, &cfg.scene, &mut rng)?;
                if let Some(sink) = sink.as_mut() {
                    sink(FrameEvent::Tick {
                        tick: t,
                        face: &face,
                        body: &body,
                        truth: &face_truth,
                        pose,
                    })?;
                }
                v.observe(&face, Some(&body), cfg)?
            }
            None => label_observation(&viewer, cfg, &mut track),
        };
        let attention: AttentionState = fuser.evaluate(&obs.cues, t as f64 / fps);

        let mut explore = false;
        if decision {
            if learner.learning_step(attention.attending)?.is_some() {
                outcomes += 1;
            }
            let base = actions
                .index_of(engine.state.base)
                .expect("the base routine always comes from the action set");
            let s = StateId::new(base, attention.attending);
            let choice = scheduler_tick(&mut rng, engine.cfg.change_probability, |rng| match agent {
                Agent::Learned => learner.select(s, rng),
                Agent::Random => Ok((rng.gen_range(0..actions.len()), false)),
                Agent::Fixed(a) => Ok((a, false)),
            })
            .transpose()?;
            let (action, explored) = choice.unwrap_or((base, false));
            explore = explored;
            learner.set_pending(s, action);
            pending = Some((s, action));
            engine.apply_policy(actions.get(action));
            decisions.push(DecisionRecord {
                tick: t,
                state: s,
                action,
                reconsidered: choice.is_some(),
                explored,
            });
        }

        let outcome = engine.step(&attention, obs.face_ratio, t, &mut rng);
        if outcome.game != GameEvent::None {
            game_events.push((t, outcome.game));
        }
        rows.push(LogRow {
            tick: t,
            routine: outcome.routine,
            cause: outcome.cause,
            attending: attention.attending,
            reward: compute_reward(&attention),
            explore,
            jerk: obs.cues.jerk,
            orientation: obs.cues.orientation.map(|l| l.to_string()),
            decision,
        });
    }
    let final_q = learner.q()?.clone();
    Ok(Episode {
        rows,
        decisions,
        outcomes,
        truth,
        game_events,
        learner,
        final_q,
    })
}

/// Runs one episode per seed, fanned out according to `exec`.
pub fn run_seeds(cfg: &Config, agent: Agent, seeds: &[u64], exec: Exec) -> Vec<Result<Episode, HarnessError>> {
    par::map_slice(exec, seeds, |&seed| {
        let mut c = cfg.clone();
        c.run.seed = seed;
        // nested fan-out inside an episode would only add contention
        if exec.is_parallel() {
            c.run.exec = Exec::Sequential;
        }
        run_episode(&c, agent, None)
    })
}

/// CSV: `tick,routine,cause,attending,reward,explore,jerk,orientation,decision`.
pub fn write_log_csv<W: Write>(rows: &[LogRow], out: W) -> Result<(), HarnessError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "tick",
        "routine",
        "cause",
        "attending",
        "reward",
        "explore",
        "jerk",
        "orientation",
        "decision",
    ])?;
    for r in rows {
        w.write_record([
            r.tick.to_string(),
            r.routine.to_string(),
            r.cause.to_string(),
            (r.attending as u8).to_string(),
            r.reward.to_string(),
            (r.explore as u8).to_string(),
            format!("{:.6}", r.jerk),
            r.orientation.clone().unwrap_or_else(|| "None".into()),
            (r.decision as u8).to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// CSV: `tick,routine,attending,action,reconsidered,explored`.
pub fn write_decisions_csv<W: Write>(decisions: &[DecisionRecord], actions: &ActionSet, out: W) -> Result<(), HarnessError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["tick", "routine", "attending", "action", "reconsidered", "explored"])?;
    for d in decisions {
        w.write_record([
            d.tick.to_string(),
            actions.get(d.state.routine).to_string(),
            (d.state.attending as u8).to_string(),
            actions.get(d.action).to_string(),
            (d.reconsidered as u8).to_string(),
            (d.explored as u8).to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Exact solution on the true attend probabilities.
#[derive(Debug, Clone, PartialEq)]
pub struct Oracle {
    pub actions: usize,
    pub gamma: f64,
    /// `Q★`, indexed `state * actions + action`.
    pub q: Vec<f64>,
    pub values: Vec<f64>,
    /// Greedy action per state; ties go to the lowest index.
    pub policy: Vec<usize>,
}

impl Oracle {
    pub fn q(&self, s: StateId, a: usize) -> f64 {
        self.q[s.index() * self.actions + a]
    }

    /// Best minus second-best action value in state `s`.
    pub fn margin(&self, s: usize) -> f64 {
        let row = &self.q[s * self.actions..(s + 1) * self.actions];
        let best = row[self.policy[s]];
        row.iter()
            .enumerate()
            .filter(|&(a, _)| a != self.policy[s])
            .map(|(_, &v)| best - v)
            .fold(f64::INFINITY, f64::min)
    }

    /// Actions within `tol` of the best value in state `s`.
    pub fn optimal_actions(&self, s: usize, tol: f64) -> Vec<usize> {
        let row = &self.q[s * self.actions..(s + 1) * self.actions];
        let best = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        (0..self.actions).filter(|&a| best - row[a] <= tol).collect()
    }
}

/// Value iteration over state values on the true `p★`, to 1e-10.
///
/// Deliberately separate from the learner's solver: it iterates `V`
/// directly and uses its own stopping rule.
pub fn oracle_policy(profile: &ViewerProfile, gamma: f64) -> Oracle {
    let n = profile.actions().len();
    let states = 2 * n;
    let backup = |v: &[f64], s: usize, a: usize| {
        let p = profile.p_star(StateId::from_index(s), a);
        p * (1.0 + gamma * v[2 * a + 1]) + (1.0 - p) * gamma * v[2 * a]
    };
    let mut v = vec![0.0; states];
    loop {
        let next: Vec<f64> = (0..states)
            .map(|s| (0..n).map(|a| backup(&v, s, a)).fold(f64::NEG_INFINITY, f64::max))
            .collect();
        let delta = next
            .iter()
            .zip(&v)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        v = next;
        // contraction bound on the distance to the fixed point
        if delta * gamma / (1.0 - gamma) < 1e-10 || delta == 0.0 {
            break;
        }
    }
    let q: Vec<f64> = (0..states)
        .flat_map(|s| (0..n).map(move |a| (s, a)))
        .map(|(s, a)| backup(&v, s, a))
        .collect();
    let policy = (0..states)
        .map(|s| {
            let row = &q[s * n..(s + 1) * n];
            let mut best = 0;
            for a in 1..n {
                if row[a] > row[best] {
                    best = a;
                }
            }
            best
        })
        .collect();
    Oracle {
        actions: n,
        gamma,
        q,
        values: v,
        policy,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Metrics {
    pub decisions: usize,
    pub outcomes: u64,
    /// Attention fraction over consecutive 100-decision windows.
    pub window_attention: Vec<f64>,
    /// Attention fraction over the last 500 decisions (or all, if fewer).
    pub final_attention: f64,
    /// Frames with the viewer attending.
    pub cumulative_reward: u64,
    /// Oracle value of the first state minus the realized discounted return.
    pub regret: f64,
    /// Share of decisions that explored.
    pub exploration_rate: f64,
    /// Share of states whose learned greedy action is oracle-optimal.
    pub greedy_agreement: f64,
}

pub const WINDOW: usize = 100;
pub const FINAL_WINDOW: usize = 500;

/// Fraction of `bits` that are set; 0 when empty.
pub fn attention_fraction(bits: &[bool]) -> f64 {
    if bits.is_empty() {
        0.0
    } else {
        bits.iter().filter(|&&b| b).count() as f64 / bits.len() as f64
    }
}

/// Share of states where `policy` picks an oracle-optimal action.
pub fn greedy_agreement(policy: &[usize], oracle: &Oracle) -> f64 {
    if policy.is_empty() {
        return 0.0;
    }
    let hits = policy
        .iter()
        .enumerate()
        .filter(|&(s, a)| oracle.optimal_actions(s, 1e-9).contains(a))
        .count();
    hits as f64 / policy.len() as f64
}

pub fn metrics(episode: &Episode, oracle: &Oracle) -> Metrics {
    let bits = episode.decision_attention();
    let window_attention = bits.chunks(WINDOW).map(attention_fraction).collect();
    let tail = &bits[bits.len().saturating_sub(FINAL_WINDOW)..];
    let realized: f64 = bits
        .iter()
        .skip(1)
        .enumerate()
        .map(|(i, &b)| oracle.gamma.powi(i as i32) * f64::from(u8::from(b)))
        .sum();
    let regret = episode
        .decisions
        .first()
        .map_or(0.0, |d| oracle.values[d.state.index()] - realized);
    let explored = episode.decisions.iter().filter(|d| d.explored).count();
    Metrics {
        decisions: episode.decisions.len(),
        outcomes: episode.outcomes,
        window_attention,
        final_attention: attention_fraction(tail),
        cumulative_reward: episode.rows.iter().map(|r| u64::from(r.reward)).sum(),
        regret,
        exploration_rate: if episode.decisions.is_empty() {
            0.0
        } else {
            explored as f64 / episode.decisions.len() as f64
        },
        greedy_agreement: greedy_agreement(&episode.final_q.greedy_policy(), oracle),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::viewer::DEFAULT_ACTIONS;

    fn actions() -> ActionSet {
        ActionSet::new(DEFAULT_ACTIONS.to_vec()).unwrap()
    }

    #[test]
    fn oracle_trivial_profiles() {
        let g = 0.9;
        let one = oracle_policy(&ViewerProfile::constant(actions(), 1.0).unwrap(), g);
        assert!(one.values.iter().all(|v| (v - 10.0).abs() < 1e-8));
        let half = oracle_policy(&ViewerProfile::constant(actions(), 0.5).unwrap(), g);
        assert!(half.values.iter().all(|v| (v - 5.0).abs() < 1e-8));
        assert!((0..8).all(|s| half.optimal_actions(s, 1e-9).len() == 4));
        assert_eq!(greedy_agreement(&one.policy, &one), 1.0);
    }

    #[test]
    fn default_profile_has_clear_optimum() {
        let o = oracle_policy(&ViewerProfile::default(), 0.9);
        // each routine hands over to the next one in the cycle
        assert_eq!(o.policy, vec![1, 1, 2, 2, 3, 3, 0, 0]);
        for s in 0..8 {
            assert!(o.margin(s) >= 0.15, "state {s} margin {}", o.margin(s));
        }
    }

    #[test]
    fn single_step_episode() {
        let mut cfg = Config::default();
        cfg.run.steps = 1;
        let ep = run_episode(&cfg, Agent::Learned, None).unwrap();
        assert_eq!(ep.rows.len(), 1);
        assert_eq!(ep.decisions.len(), 1);
        assert_eq!(ep.outcomes, 0);
    }

    #[test]
    fn all_attending_log_scores_one() {
        let mut cfg = Config::default();
        cfg.profile = ViewerProfile::constant(actions(), 1.0).unwrap();
        cfg.run.steps = 2_000;
        let ep = run_episode(&cfg, Agent::Learned, None).unwrap();
        let bits = ep.decision_attention();
        // the very first decision precedes any viewer response
        assert!(bits[1..].iter().all(|&b| b));
        let m = metrics(&ep, &oracle_policy(&cfg.profile, 0.9));
        assert_eq!(m.outcomes, m.decisions as u64 - 1);
        assert_eq!(*m.window_attention.last().unwrap(), 1.0);
    }
}
