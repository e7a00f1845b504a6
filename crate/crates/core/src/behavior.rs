//! The mime's behavior engine: reflexes, the Simon-Says game and the
//! periodic policy scheduler, arbitrated reflex > game > policy.

use std::fmt;

use rand::Rng;

use crate::attention::AttentionState;
use crate::body::Pose;
use crate::routine::Routine;

/// Which layer produced the displayed routine.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Cause {
    Reflex,
    Game,
    Policy,
    None,
}

impl fmt::Display for Cause {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Cause::Reflex => "reflex",
            Cause::Game => "game",
            Cause::Policy => "policy",
            Cause::None => "none",
        })
    }
}

/// Timing and distance constants. Durations are in seconds and converted
/// to ticks with `fps`.
#[derive(Debug, Clone, PartialEq)]
pub struct BehaviorConfig {
    pub fps: f64,
    pub idle_secs: f64,
    pub ponder_secs: f64,
    pub response_secs: f64,
    pub reward_secs: f64,
    pub beckon_secs: f64,
    pub puzzled_hold_secs: f64,
    pub face_ratio_lo: f64,
    pub face_ratio_hi: f64,
    pub change_probability: f64,
    /// Gestures the game may prompt.
    pub gestures: Vec<Pose>,
}

impl Default for BehaviorConfig {
    fn default() -> Self {
        Self {
            fps: 10.0,
            idle_secs: 10.0,
            ponder_secs: 2.0,
            response_secs: 5.0,
            reward_secs: 2.0,
            beckon_secs: 2.0,
            puzzled_hold_secs: 1.0,
            face_ratio_lo: 0.02,
            face_ratio_hi: 0.30,
            change_probability: 0.5,
            gestures: Pose::GESTURES.to_vec(),
        }
    }
}

impl BehaviorConfig {
    pub fn ticks(&self, secs: f64) -> u64 {
        (secs * self.fps).round() as u64
    }

    /// Longest a reflex or game episode can hold control after its
    /// trigger conditions clear.
    pub fn max_release_ticks(&self) -> u64 {
        let reflex = self.ticks(self.beckon_secs.max(self.puzzled_hold_secs));
        let game = self.ticks(self.ponder_secs + self.response_secs + self.reward_secs);
        reflex + game + 2
    }
}

/// Decides whether the scheduler reconsiders the routine at this 2 s
/// boundary. The coin is drawn first; `policy` runs only on heads.
pub fn scheduler_tick<R: Rng + ?Sized, T>(
    rng: &mut R,
    change_probability: f64,
    policy: impl FnOnce(&mut R) -> T,
) -> Option<T> {
    if rng.gen_bool(change_probability) {
        Some(policy(rng))
    } else {
        None
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GamePhase {
    Idle,
    Pondering { until: u64 },
    Prompted { gesture: Pose, deadline: u64 },
    Responding { routine: Routine, until: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GameEvent {
    None,
    Ponder,
    Prompt(Pose),
    Reward,
    Scold,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GameState {
    pub phase: GamePhase,
    pub last_interaction_at: u64,
}

impl GameState {
    pub fn new(tick: u64) -> Self {
        Self {
            phase: GamePhase::Idle,
            last_interaction_at: tick,
        }
    }

    /// Routine the game wants on screen, if it is running.
    pub fn routine(&self) -> Option<Routine> {
        match self.phase {
            GamePhase::Idle => None,
            GamePhase::Pondering { .. } => Some(Routine::Ponder),
            GamePhase::Prompted { .. } => Some(Routine::PromptGesture),
            GamePhase::Responding { routine, .. } => Some(routine),
        }
    }

    pub fn prompted_gesture(&self) -> Option<Pose> {
        match self.phase {
            GamePhase::Prompted { gesture, .. } => Some(gesture),
            _ => None,
        }
    }
}

/// One frame of the Simon-Says game.
///
/// After `idle_secs` without interaction (and with a face in view) the
/// character ponders, then prompts a random gesture. The matching gesture
/// before the deadline earns a Reward; a wrong gesture or the deadline
/// passing earns a Scold. Either response holds for `reward_secs`.
pub fn simon_step<R: Rng + ?Sized>(
    game: &mut GameState,
    attention: &AttentionState,
    tick: u64,
    rng: &mut R,
    cfg: &BehaviorConfig,
) -> GameEvent {
    match game.phase {
        GamePhase::Idle => {
            if attention.gesture.is_some() || !attention.expression.is_neutral() {
                game.last_interaction_at = tick;
            }
            let idle = tick.saturating_sub(game.last_interaction_at);
            if attention.face_present && idle > cfg.ticks(cfg.idle_secs) && !cfg.gestures.is_empty() {
                game.phase = GamePhase::Pondering {
                    until: tick + cfg.ticks(cfg.ponder_secs),
                };
                return GameEvent::Ponder;
            }
            GameEvent::None
        }
        GamePhase::Pondering { until } => {
            if tick < until {
                return GameEvent::None;
            }
            let gesture = cfg.gestures[rng.gen_range(0..cfg.gestures.len())];
            game.phase = GamePhase::Prompted {
                gesture,
                deadline: tick + cfg.ticks(cfg.response_secs).max(1),
            };
            GameEvent::Prompt(gesture)
        }
        GamePhase::Prompted { gesture, deadline } => {
            let verdict = match attention.gesture {
                Some(g) if tick < deadline && g == gesture => Some(Routine::Reward),
                Some(_) => Some(Routine::Scold),
                None if tick >= deadline => Some(Routine::Scold),
                None => None,
            };
            match verdict {
                Some(routine) => {
                    game.phase = GamePhase::Responding {
                        routine,
                        until: tick + cfg.ticks(cfg.reward_secs),
                    };
                    game.last_interaction_at = tick;
                    if routine == Routine::Reward {
                        GameEvent::Reward
                    } else {
                        GameEvent::Scold
                    }
                }
                None => GameEvent::None,
            }
        }
        GamePhase::Responding { until, .. } => {
            if tick >= until {
                game.phase = GamePhase::Idle;
                game.last_interaction_at = tick;
            }
            GameEvent::None
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Overlay {
    routine: Routine,
    until: u64,
}

/// Full engine state.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BehaviorState {
    pub current: Routine,
    pub routine_entered_at: u64,
    /// Routine chosen by the policy; shown whenever no reflex or game holds
    /// the stage.
    pub base: Routine,
    pub game: GameState,
    face_seen: bool,
    idle: Option<Routine>,
    overlay: Option<Overlay>,
}

impl BehaviorState {
    pub fn new(base: Routine, tick: u64) -> Self {
        Self {
            current: base,
            routine_entered_at: tick,
            base,
            game: GameState::new(tick),
            face_seen: false,
            idle: None,
            overlay: None,
        }
    }

    pub fn reflex_active(&self) -> bool {
        self.overlay.is_some()
    }
}

/// Reflex rules in priority order: erratic motion, no face, newly
/// appeared face, bad viewing distance. Also latches the reflex routine
/// for its hold time.
pub fn reflex_step<R: Rng + ?Sized>(
    state: &mut BehaviorState,
    attention: &AttentionState,
    face_area_ratio: f64,
    tick: u64,
    cfg: &BehaviorConfig,
    rng: &mut R,
) -> Option<Routine> {
    let newly_appeared = attention.face_present && !state.face_seen;
    state.face_seen = attention.face_present;
    if attention.face_present {
        state.idle = None;
    }

    let fired = if attention.erratic {
        Some((Routine::Puzzled, cfg.ticks(cfg.puzzled_hold_secs)))
    } else if !attention.face_present {
        let idle = *state.idle.get_or_insert_with(|| {
            if rng.gen_bool(0.5) {
                Routine::IdleGazeWander
            } else {
                Routine::IdleDrum
            }
        });
        Some((idle, 0))
    } else if newly_appeared {
        Some((Routine::Beckon, cfg.ticks(cfg.beckon_secs)))
    } else if face_area_ratio < cfg.face_ratio_lo || face_area_ratio > cfg.face_ratio_hi {
        Some((Routine::DistanceGuide, 0))
    } else {
        None
    };

    match fired {
        Some((routine, hold)) => {
            state.overlay = Some(Overlay {
                routine,
                until: tick + hold,
            });
            Some(routine)
        }
        None => {
            if state.overlay.is_some_and(|o| tick >= o.until) {
                state.overlay = None;
            }
            None
        }
    }
}

/// What happened on one frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FrameOutcome {
    pub routine: Routine,
    pub previous: Routine,
    /// Layer responsible for a change this frame; `None` if unchanged.
    pub cause: Cause,
    pub game: GameEvent,
}

impl FrameOutcome {
    pub fn changed(&self) -> bool {
        self.routine != self.previous
    }
}

/// Owns the behavior state and applies the arbitration order.
#[derive(Debug, Clone)]
pub struct BehaviorEngine {
    pub cfg: BehaviorConfig,
    pub state: BehaviorState,
}

impl BehaviorEngine {
    pub fn new(cfg: BehaviorConfig, initial: Routine) -> Self {
        Self {
            cfg,
            state: BehaviorState::new(initial, 0),
        }
    }

    /// Installs the policy's choice; it shows once higher layers release.
    pub fn apply_policy(&mut self, routine: Routine) {
        self.state.base = routine;
    }

    /// Per-frame arbitration. At most one routine change per frame.
    pub fn step<R: Rng + ?Sized>(
        &mut self,
        attention: &AttentionState,
        face_area_ratio: f64,
        tick: u64,
        rng: &mut R,
    ) -> FrameOutcome {
        let reflex = reflex_step(&mut self.state, attention, face_area_ratio, tick, &self.cfg, rng);
        let game = simon_step(&mut self.state.game, attention, tick, rng, &self.cfg);
        let (routine, layer) = if let Some(r) = reflex.or(self.state.overlay.map(|o| o.routine)) {
            (r, Cause::Reflex)
        } else if let Some(r) = self.state.game.routine() {
            (r, Cause::Game)
        } else {
            (self.state.base, Cause::Policy)
        };
        let previous = self.state.current;
        let cause = if routine != previous {
            self.state.current = routine;
            self.state.routine_entered_at = tick;
            layer
        } else {
            Cause::None
        };
        FrameOutcome {
            routine,
            previous,
            cause,
            game,
        }
    }
}

/// Animation directive for the renderer-facing side.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Directive {
    pub routine: Routine,
    /// Expression label to copy onto the character's face.
    pub mirror_expression: Option<String>,
    pub mirror_gesture: Option<Pose>,
}

pub fn directive(routine: Routine, attention: &AttentionState) -> Directive {
    let mimic = routine == Routine::Mimic;
    Directive {
        routine,
        mirror_expression: match &attention.expression {
            crate::face::Expression::Label(l) if mimic => Some(l.clone()),
            _ => None,
        },
        mirror_gesture: attention.gesture.filter(|g| mimic && *g == Pose::Wave),
    }
}
