//! Per-tick fusion of face and body cues into a discrete attention state.

use std::fmt;

use crate::body::Pose;
use crate::face::{Expression, HeadLabel, MotionClass};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub enum Interest {
    #[default]
    Passive,
    Interested,
    Engaged,
}

impl fmt::Display for Interest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Interest::Passive => "Passive",
            Interest::Interested => "Interested",
            Interest::Engaged => "Engaged",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct AttentionState {
    pub face_present: bool,
    pub attending: bool,
    pub interest: Interest,
    pub erratic: bool,
    pub gesture: Option<Pose>,
    pub expression: Expression,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FusionConfig {
    /// 4th-difference magnitude above which a frame counts as jerky, px.
    pub jerk_threshold: f64,
    /// Consecutive jerky frames needed to flag erratic movement.
    pub erratic_frames: usize,
    /// How long a facial expression keeps the viewer "interested", s.
    pub recent_secs: f64,
}

impl Default for FusionConfig {
    fn default() -> Self {
        Self {
            jerk_threshold: 12.0,
            erratic_frames: 3,
            recent_secs: 2.0,
        }
    }
}

/// What the vision layer saw this tick.
#[derive(Debug, Clone, PartialEq)]
pub struct Cues {
    /// `None` when no face was found.
    pub orientation: Option<HeadLabel>,
    pub expression: Expression,
    pub motion: MotionClass,
    pub jerk: f64,
    /// Classified body pose; `None` means Unknown.
    pub pose: Option<Pose>,
}

impl Cues {
    pub fn no_face() -> Self {
        Self {
            orientation: None,
            expression: Expression::Neutral,
            motion: MotionClass::Still,
            jerk: 0.0,
            pose: None,
        }
    }
}

/// Stateful fuser; owns the jerk run-length and expression recency.
#[derive(Debug, Clone)]
pub struct AttentionFuser {
    cfg: FusionConfig,
    jerky_run: usize,
    last_expression_at: Option<f64>,
}

impl AttentionFuser {
    pub fn new(cfg: FusionConfig) -> Self {
        Self {
            cfg,
            jerky_run: 0,
            last_expression_at: None,
        }
    }

    pub fn config(&self) -> &FusionConfig {
        &self.cfg
    }

    pub fn evaluate(&mut self, cues: &Cues, clock_secs: f64) -> AttentionState {
        let face_present = cues.orientation.is_some();
        let attending = cues.orientation == Some(HeadLabel::Frontal);

        if face_present && cues.jerk > self.cfg.jerk_threshold {
            self.jerky_run += 1;
        } else {
            self.jerky_run = 0;
        }
        let erratic = self.jerky_run >= self.cfg.erratic_frames;

        let counts_as_expression = face_present && cues.motion != MotionClass::Rigid;
        if counts_as_expression && !cues.expression.is_neutral() {
            self.last_expression_at = Some(clock_secs);
        }
        let recent_expression = self
            .last_expression_at
            .is_some_and(|t| clock_secs - t <= self.cfg.recent_secs);

        let gesture = cues.pose.filter(|p| p.is_gesture());
        let interest = if attending && gesture.is_some() {
            Interest::Engaged
        } else if attending && recent_expression {
            Interest::Interested
        } else {
            Interest::Passive
        };

        AttentionState {
            face_present,
            attending,
            interest,
            erratic,
            gesture,
            expression: if counts_as_expression {
                cues.expression.clone()
            } else {
                Expression::Neutral
            },
        }
    }
}
