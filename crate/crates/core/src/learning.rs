//! Model-based reinforcement learning over (routine, attending) states.
//!
//! The model estimator keeps binomial outcome counts per state-action cell
//! and turns them into MAP transition probabilities under a uniform prior.
//! The value estimator solves the Q-form Bellman equation over that model by
//! synchronous sweeps. Actions are picked ε-greedily with the exploration
//! mass spread uniformly over the non-greedy actions.

use std::io::{Read, Write};
use std::sync::mpsc::{self, Receiver, Sender};
use std::thread::JoinHandle;

use rand::Rng;
use thiserror::Error;

use crate::attention::AttentionState;
use crate::routine::Routine;

#[derive(Debug, Error)]
pub enum LearningError {
    #[error("state {state} / action {action} out of range")]
    UnknownStateOrAction { state: usize, action: usize },
    #[error("routine {0} is not in the action set")]
    NotSelectable(Routine),
    #[error("value iteration did not converge after {sweeps} sweeps (residual {residual:e})")]
    NonConvergence { sweeps: usize, residual: f64 },
    #[error("action set is empty")]
    EmptyActionSet,
    #[error("malformed learning dump: {0}")]
    Dump(String),
    #[error("value worker terminated")]
    WorkerGone,
}

impl From<csv::Error> for LearningError {
    fn from(e: csv::Error) -> Self {
        LearningError::Dump(e.to_string())
    }
}

/// Reward for one observation: 1 while the viewer looks at the character.
pub fn compute_reward(attention: &AttentionState) -> u8 {
    attention.attending as u8
}

/// The policy's action set; also indexes the routine half of every state.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ActionSet(Vec<Routine>);

impl ActionSet {
    pub fn new(routines: Vec<Routine>) -> Result<Self, LearningError> {
        if routines.is_empty() {
            return Err(LearningError::EmptyActionSet);
        }
        if let Some(r) = routines.iter().find(|r| r.is_reflex_only()) {
            return Err(LearningError::NotSelectable(*r));
        }
        let mut seen = routines.clone();
        seen.sort();
        seen.dedup();
        if seen.len() != routines.len() {
            return Err(LearningError::Dump("duplicate routine in action set".into()));
        }
        Ok(Self(routines))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn routines(&self) -> &[Routine] {
        &self.0
    }

    pub fn get(&self, i: usize) -> Routine {
        self.0[i]
    }

    pub fn index_of(&self, r: Routine) -> Option<usize> {
        self.0.iter().position(|&x| x == r)
    }

    pub fn states(&self) -> usize {
        2 * self.0.len()
    }
}

/// (routine index, attending) packed as `2 * routine + attending`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct StateId {
    pub routine: usize,
    pub attending: bool,
}

impl StateId {
    pub fn new(routine: usize, attending: bool) -> Self {
        Self { routine, attending }
    }

    pub fn index(self) -> usize {
        2 * self.routine + self.attending as usize
    }

    pub fn from_index(i: usize) -> Self {
        Self::new(i / 2, i % 2 == 1)
    }
}

/// Attend / not-attend counts per state-action cell.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OutcomeTable {
    actions: usize,
    attended: Vec<u64>,
    lapsed: Vec<u64>,
}

impl OutcomeTable {
    pub fn new(actions: usize) -> Self {
        let cells = 2 * actions * actions;
        Self {
            actions,
            attended: vec![0; cells],
            lapsed: vec![0; cells],
        }
    }

    pub fn actions(&self) -> usize {
        self.actions
    }

    fn cell(&self, s: StateId, a: usize) -> Result<usize, LearningError> {
        if s.routine >= self.actions || a >= self.actions {
            return Err(LearningError::UnknownStateOrAction {
                state: s.index(),
                action: a,
            });
        }
        Ok(s.index() * self.actions + a)
    }

    pub fn record_outcome(&mut self, s: StateId, a: usize, attended_after: bool) -> Result<(), LearningError> {
        let c = self.cell(s, a)?;
        if attended_after {
            self.attended[c] += 1;
        } else {
            self.lapsed[c] += 1;
        }
        Ok(())
    }

    /// `(k, m)`: attended-after and not-attended-after counts.
    pub fn counts(&self, s: StateId, a: usize) -> Result<(u64, u64), LearningError> {
        let c = self.cell(s, a)?;
        Ok((self.attended[c], self.lapsed[c]))
    }

    pub fn visits(&self, s: StateId, a: usize) -> u64 {
        self.counts(s, a).map_or(0, |(k, m)| k + m)
    }

    pub fn total(&self) -> u64 {
        self.attended.iter().sum::<u64>() + self.lapsed.iter().sum::<u64>()
    }
}

/// MAP estimate of a Bernoulli parameter under a Beta(1,1) prior.
///
/// The posterior Beta(1+k, 1+m) has mode k/(k+m); with no evidence the
/// posterior is flat and 0.5 is returned.
pub fn map_estimate(k: u64, m: u64) -> f64 {
    if k + m == 0 {
        0.5
    } else {
        k as f64 / (k + m) as f64
    }
}

pub fn estimate_transition(table: &OutcomeTable, s: StateId, a: usize) -> Result<f64, LearningError> {
    let (k, m) = table.counts(s, a)?;
    Ok(map_estimate(k, m))
}

/// Probability of attending after each state-action pair.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionModel {
    actions: usize,
    p: Vec<f64>,
}

impl TransitionModel {
    pub fn uniform(actions: usize, p: f64) -> Self {
        Self {
            actions,
            p: vec![p; 2 * actions * actions],
        }
    }

    pub fn from_fn(actions: usize, mut f: impl FnMut(StateId, usize) -> f64) -> Self {
        let mut p = Vec::with_capacity(2 * actions * actions);
        for s in 0..2 * actions {
            for a in 0..actions {
                p.push(f(StateId::from_index(s), a).clamp(0.0, 1.0));
            }
        }
        Self { actions, p }
    }

    pub fn from_table(table: &OutcomeTable) -> Self {
        Self::from_fn(table.actions, |s, a| {
            estimate_transition(table, s, a).expect("cell in range")
        })
    }

    pub fn actions(&self) -> usize {
        self.actions
    }

    pub fn get(&self, s: StateId, a: usize) -> f64 {
        self.p[s.index() * self.actions + a]
    }

    pub fn refresh(&mut self, table: &OutcomeTable, s: StateId, a: usize) -> Result<(), LearningError> {
        let v = estimate_transition(table, s, a)?;
        self.p[s.index() * self.actions + a] = v;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PolicyConfig {
    pub epsilon: f64,
    pub gamma: f64,
    pub tolerance: f64,
    pub max_sweeps: usize,
}

impl Default for PolicyConfig {
    fn default() -> Self {
        Self {
            epsilon: 0.125,
            gamma: 0.9,
            tolerance: 1e-6,
            max_sweeps: 10_000,
        }
    }
}

/// Action values, row-major by state.
#[derive(Debug, Clone, PartialEq)]
pub struct QTable {
    actions: usize,
    q: Vec<f64>,
    gamma: f64,
}

impl QTable {
    pub fn zeros(actions: usize, gamma: f64) -> Self {
        Self {
            actions,
            q: vec![0.0; 2 * actions * actions],
            gamma,
        }
    }

    pub fn actions(&self) -> usize {
        self.actions
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn get(&self, s: StateId, a: usize) -> f64 {
        self.q[s.index() * self.actions + a]
    }

    pub fn row(&self, s: StateId) -> &[f64] {
        let i = s.index() * self.actions;
        &self.q[i..i + self.actions]
    }

    pub fn values(&self) -> &[f64] {
        &self.q
    }

    pub fn state_value(&self, s: StateId) -> f64 {
        self.row(s).iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Lowest-index argmax per state.
    pub fn greedy_policy(&self) -> Vec<usize> {
        (0..2 * self.actions)
            .map(|s| argmax(self.row(StateId::from_index(s))))
            .collect()
    }
}

/// Index of the largest element; ties go to the lowest index.
pub fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate().skip(1) {
        if v > row[best] {
            best = i;
        }
    }
    best
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValueReport {
    pub sweeps: usize,
    /// Sup-norm change of each sweep.
    pub residuals: Vec<f64>,
}

impl ValueReport {
    pub fn final_residual(&self) -> f64 {
        self.residuals.last().copied().unwrap_or(0.0)
    }
}

/// Value iteration from all-zero action values.
pub fn update_values(model: &TransitionModel, cfg: &PolicyConfig) -> Result<(QTable, ValueReport), LearningError> {
    update_values_from(model, cfg, &QTable::zeros(model.actions, cfg.gamma))
}

/// Value iteration warm-started from `init`.
///
/// `Q(s,a) = p(s,a)·(1 + γ·V(a,attending)) + (1 − p(s,a))·γ·V(a,not attending)`
/// with `V(s) = max_b Q(s,b)`, iterated until the sup-norm change drops
/// below the tolerance.
pub fn update_values_from(
    model: &TransitionModel,
    cfg: &PolicyConfig,
    init: &QTable,
) -> Result<(QTable, ValueReport), LearningError> {
    let n = model.actions;
    let states = 2 * n;
    let gamma = cfg.gamma;
    let mut q = if init.actions == n {
        init.q.clone()
    } else {
        vec![0.0; states * n]
    };
    let mut next = vec![0.0; states * n];
    let mut v = vec![0.0; states];
    let mut residuals = Vec::new();
    for sweep in 1..=cfg.max_sweeps {
        for (s, slot) in v.iter_mut().enumerate() {
            *slot = q[s * n..(s + 1) * n].iter().copied().fold(f64::NEG_INFINITY, f64::max);
        }
        let mut residual = 0.0f64;
        for s in 0..states {
            for a in 0..n {
                let p = model.p[s * n + a];
                let up = v[2 * a + 1];
                let down = v[2 * a];
                let val = p * (1.0 + gamma * up) + (1.0 - p) * gamma * down;
                residual = residual.max((val - q[s * n + a]).abs());
                next[s * n + a] = val;
            }
        }
        std::mem::swap(&mut q, &mut next);
        residuals.push(residual);
        if residual < cfg.tolerance {
            return Ok((
                QTable { actions: n, q, gamma },
                ValueReport { sweeps: sweep, residuals },
            ));
        }
    }
    Err(LearningError::NonConvergence {
        sweeps: cfg.max_sweeps,
        residual: residuals.last().copied().unwrap_or(f64::INFINITY),
    })
}

/// ε-greedy choice: the argmax with probability 1 − ε, otherwise a uniform
/// pick among the remaining actions. Returns `(action, explored)`.
pub fn select_action<R: Rng + ?Sized>(
    q: &QTable,
    s: StateId,
    epsilon: f64,
    rng: &mut R,
) -> Result<(usize, bool), LearningError> {
    let row = q.row(s);
    match row.len() {
        0 => Err(LearningError::EmptyActionSet),
        1 => Ok((0, false)),
        n => {
            let best = argmax(row);
            if rng.gen::<f64>() < epsilon {
                let k = rng.gen_range(0..n - 1);
                Ok((if k >= best { k + 1 } else { k }, true))
            } else {
                Ok((best, false))
            }
        }
    }
}

/// Where value updates run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ValueMode {
    /// Inline, before the next action is selected.
    #[default]
    Synchronous,
    /// On a worker thread; a barrier at each decision waits for the result.
    Asynchronous,
}

type Job = (TransitionModel, PolicyConfig, QTable);
type JobResult = Result<(QTable, ValueReport), LearningError>;

struct ValueWorker {
    jobs: Option<Sender<Job>>,
    results: Receiver<JobResult>,
    handle: Option<JoinHandle<()>>,
}

impl ValueWorker {
    fn spawn() -> Self {
        let (job_tx, job_rx) = mpsc::channel::<Job>();
        let (res_tx, res_rx) = mpsc::channel();
        let handle = std::thread::Builder::new()
            .name("value-estimator".into())
            .spawn(move || {
                for (model, cfg, init) in job_rx {
                    if res_tx.send(update_values_from(&model, &cfg, &init)).is_err() {
                        break;
                    }
                }
            })
            .expect("spawn value worker");
        Self {
            jobs: Some(job_tx),
            results: res_rx,
            handle: Some(handle),
        }
    }
}

impl Drop for ValueWorker {
    fn drop(&mut self) {
        self.jobs.take();
        if let Some(h) = self.handle.take() {
            let _ = h.join();
        }
    }
}

/// Outcome of one learning step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Recorded {
    pub state: StateId,
    pub action: usize,
    pub attended_after: bool,
}

/// The full learning stack: counts, model, values and the pending decision.
pub struct Learner {
    actions: ActionSet,
    cfg: PolicyConfig,
    table: OutcomeTable,
    model: TransitionModel,
    q: QTable,
    pending: Option<(StateId, usize)>,
    worker: Option<ValueWorker>,
    in_flight: bool,
    last_report: Option<ValueReport>,
}

impl Learner {
    pub fn new(actions: ActionSet, cfg: PolicyConfig, mode: ValueMode) -> Self {
        let n = actions.len();
        Self {
            actions,
            cfg,
            table: OutcomeTable::new(n),
            model: TransitionModel::uniform(n, 0.5),
            q: QTable::zeros(n, cfg.gamma),
            pending: None,
            worker: (mode == ValueMode::Asynchronous).then(ValueWorker::spawn),
            in_flight: false,
            last_report: None,
        }
    }

    /// Starts from previously dumped counts; values are re-solved.
    pub fn warm_start(&mut self, table: OutcomeTable) -> Result<(), LearningError> {
        if table.actions() != self.actions.len() {
            return Err(LearningError::Dump(format!(
                "dump has {} actions, expected {}",
                table.actions(),
                self.actions.len()
            )));
        }
        self.model = TransitionModel::from_table(&table);
        self.table = table;
        let (q, report) = update_values(&self.model, &self.cfg)?;
        self.q = q;
        self.last_report = Some(report);
        Ok(())
    }

    pub fn actions(&self) -> &ActionSet {
        &self.actions
    }

    pub fn config(&self) -> &PolicyConfig {
        &self.cfg
    }

    pub fn table(&self) -> &OutcomeTable {
        &self.table
    }

    pub fn model(&self) -> &TransitionModel {
        &self.model
    }

    pub fn last_report(&self) -> Option<&ValueReport> {
        self.last_report.as_ref()
    }

    pub fn pending(&self) -> Option<(StateId, usize)> {
        self.pending
    }

    /// Records the decision just taken; its outcome is observed at the next
    /// decision tick.
    pub fn set_pending(&mut self, s: StateId, action: usize) {
        self.pending = Some((s, action));
    }

    /// Attributes the current attention bit to the previous decision and
    /// refreshes the model and values. Returns `None` on the first tick.
    pub fn learning_step(&mut self, attending: bool) -> Result<Option<Recorded>, LearningError> {
        let Some((s, a)) = self.pending.take() else {
            return Ok(None);
        };
        self.table.record_outcome(s, a, attending)?;
        self.model.refresh(&self.table, s, a)?;
        match &self.worker {
            Some(_) => {
                // warm-start from the latest values, as the inline path does
                self.barrier()?;
                let w = self.worker.as_ref().ok_or(LearningError::WorkerGone)?;
                let job = (self.model.clone(), self.cfg, self.q.clone());
                w.jobs
                    .as_ref()
                    .ok_or(LearningError::WorkerGone)?
                    .send(job)
                    .map_err(|_| LearningError::WorkerGone)?;
                self.in_flight = true;
            }
            None => {
                let (q, report) = update_values_from(&self.model, &self.cfg, &self.q)?;
                self.q = q;
                self.last_report = Some(report);
            }
        }
        Ok(Some(Recorded {
            state: s,
            action: a,
            attended_after: attending,
        }))
    }

    /// Waits for any in-flight value update.
    pub fn barrier(&mut self) -> Result<(), LearningError> {
        if self.in_flight {
            let w = self.worker.as_ref().ok_or(LearningError::WorkerGone)?;
            let (q, report) = w.results.recv().map_err(|_| LearningError::WorkerGone)??;
            self.q = q;
            self.last_report = Some(report);
            self.in_flight = false;
        }
        Ok(())
    }

    pub fn q(&mut self) -> Result<&QTable, LearningError> {
        self.barrier()?;
        Ok(&self.q)
    }

    pub fn select<R: Rng + ?Sized>(&mut self, s: StateId, rng: &mut R) -> Result<(usize, bool), LearningError> {
        self.barrier()?;
        select_action(&self.q, s, self.cfg.epsilon, rng)
    }

    /// CSV dump: `routine,attending,action,k,m,p_hat,q`, one row per cell.
    pub fn write_csv<W: Write>(&mut self, out: W) -> Result<(), LearningError> {
        self.barrier()?;
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["routine", "attending", "action", "k", "m", "p_hat", "q"])?;
        let n = self.actions.len();
        for s in 0..2 * n {
            let sid = StateId::from_index(s);
            for a in 0..n {
                let (k, m) = self.table.counts(sid, a)?;
                w.write_record([
                    self.actions.get(sid.routine).to_string(),
                    (sid.attending as u8).to_string(),
                    self.actions.get(a).to_string(),
                    k.to_string(),
                    m.to_string(),
                    self.model.get(sid, a).to_string(),
                    self.q.get(sid, a).to_string(),
                ])?;
            }
        }
        w.flush().map_err(|e| LearningError::Dump(e.to_string()))
    }
}

/// Reads the counts back from a learner dump.
pub fn read_outcome_csv<R: Read>(input: R, actions: &ActionSet) -> Result<OutcomeTable, LearningError> {
    let mut r = csv::Reader::from_reader(input);
    let mut table = OutcomeTable::new(actions.len());
    let bad = |m: String| LearningError::Dump(m);
    for rec in r.records() {
        let rec = rec?;
        let field = |i: usize| rec.get(i).ok_or_else(|| bad(format!("missing column {i}")));
        let routine: Routine = field(0)?.parse().map_err(|e| bad(format!("{e}")))?;
        let action: Routine = field(2)?.parse().map_err(|e| bad(format!("{e}")))?;
        let attending = field(1)? == "1";
        let k: u64 = field(3)?.parse().map_err(|_| bad("bad k".into()))?;
        let m: u64 = field(4)?.parse().map_err(|_| bad("bad m".into()))?;
        let ri = actions.index_of(routine).ok_or(LearningError::NotSelectable(routine))?;
        let ai = actions.index_of(action).ok_or(LearningError::NotSelectable(action))?;
        let c = table.cell(StateId::new(ri, attending), ai)?;
        table.attended[c] = k;
        table.lapsed[c] = m;
    }
    Ok(table)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn reward_is_attending_bit() {
        let mut a = AttentionState {
            face_present: true,
            attending: true,
            ..Default::default()
        };
        assert_eq!(compute_reward(&a), 1);
        a.attending = false;
        assert_eq!(compute_reward(&a), 0);
        assert_eq!(compute_reward(&AttentionState::default()), 0);
    }

    #[test]
    fn outcome_counting_is_local() {
        let mut t = OutcomeTable::new(3);
        let s = StateId::new(1, true);
        t.record_outcome(s, 2, true).unwrap();
        assert_eq!(t.counts(s, 2).unwrap(), (1, 0));
        for _ in 0..2 {
            t.record_outcome(s, 2, true).unwrap();
        }
        t.record_outcome(s, 2, false).unwrap();
        assert_eq!(t.counts(s, 2).unwrap(), (3, 1));
        assert_eq!(t.counts(s, 1).unwrap(), (0, 0));
        assert_eq!(t.counts(StateId::new(1, false), 2).unwrap(), (0, 0));
        assert!(matches!(
            t.record_outcome(StateId::new(3, false), 0, true),
            Err(LearningError::UnknownStateOrAction { .. })
        ));
        assert!(t.record_outcome(s, 3, true).is_err());
    }

    #[test]
    fn map_values() {
        assert_eq!(map_estimate(3, 1), 0.75);
        assert_eq!(map_estimate(0, 0), 0.5);
        assert_eq!(map_estimate(0, 4), 0.0);
    }

    #[test]
    fn map_tracks_bernoulli_source() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut t = OutcomeTable::new(1);
        let s = StateId::new(0, false);
        for _ in 0..1000 {
            t.record_outcome(s, 0, rng.gen_bool(0.7)).unwrap();
        }
        assert!((estimate_transition(&t, s, 0).unwrap() - 0.7).abs() <= 0.05);
    }

    #[test]
    fn analytic_value_cases() {
        let cfg = PolicyConfig::default();
        let (q, _) = update_values(&TransitionModel::uniform(1, 1.0), &cfg).unwrap();
        assert!(q.values().iter().all(|v| (v - 10.0).abs() < 1e-5));
        let (q, _) = update_values(&TransitionModel::uniform(3, 0.0), &cfg).unwrap();
        assert!(q.values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn non_convergence_reports_residual() {
        let cfg = PolicyConfig { max_sweeps: 3, ..Default::default() };
        match update_values(&TransitionModel::uniform(2, 1.0), &cfg) {
            Err(LearningError::NonConvergence { sweeps: 3, residual }) => assert!(residual > 0.0),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn greedy_only_at_zero_epsilon() {
        let mut q = QTable::zeros(3, 0.9);
        q.q[..3].copy_from_slice(&[0.5, 0.9, 0.1]);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..1000 {
            assert_eq!(select_action(&q, StateId::new(0, false), 0.0, &mut rng).unwrap(), (1, false));
        }
    }

    #[test]
    fn tie_break_to_lowest() {
        let q = QTable::zeros(4, 0.9);
        assert_eq!(q.greedy_policy(), vec![0; 8]);
        let single = QTable::zeros(1, 0.9);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert_eq!(select_action(&single, StateId::new(0, true), 0.9, &mut rng).unwrap(), (0, false));
    }

    #[test]
    fn first_step_records_nothing() {
        let actions = ActionSet::new(vec![Routine::Mimic, Routine::Ponder]).unwrap();
        let mut l = Learner::new(actions, PolicyConfig::default(), ValueMode::Synchronous);
        assert_eq!(l.learning_step(true).unwrap(), None);
        l.set_pending(StateId::new(0, true), 1);
        let r = l.learning_step(true).unwrap().unwrap();
        assert_eq!(r.action, 1);
        assert_eq!(l.table().total(), 1);
        assert_eq!(l.learning_step(true).unwrap(), None);
    }

    #[test]
    fn async_matches_sync() {
        let actions = ActionSet::new(vec![Routine::Mimic, Routine::Ponder, Routine::Beckon]).unwrap();
        let mut a = Learner::new(actions.clone(), PolicyConfig::default(), ValueMode::Synchronous);
        let mut b = Learner::new(actions, PolicyConfig::default(), ValueMode::Asynchronous);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for i in 0..200 {
            let s = StateId::new(i % 3, i % 2 == 0);
            let att = rng.gen_bool(0.6);
            a.set_pending(s, (i * 7) % 3);
            b.set_pending(s, (i * 7) % 3);
            a.learning_step(att).unwrap();
            b.learning_step(att).unwrap();
            assert_eq!(a.q().unwrap(), b.q().unwrap());
        }
    }

    #[test]
    fn action_set_validation() {
        assert!(matches!(ActionSet::new(vec![]), Err(LearningError::EmptyActionSet)));
        assert!(matches!(
            ActionSet::new(vec![Routine::Mimic, Routine::Reward]),
            Err(LearningError::NotSelectable(Routine::Reward))
        ));
    }

    #[test]
    fn dump_roundtrip() {
        let actions = ActionSet::new(vec![Routine::Mimic, Routine::Ponder]).unwrap();
        let mut l = Learner::new(actions.clone(), PolicyConfig::default(), ValueMode::Synchronous);
        l.set_pending(StateId::new(1, false), 0);
        l.learning_step(true).unwrap();
        l.set_pending(StateId::new(1, false), 0);
        l.learning_step(false).unwrap();
        let mut buf = Vec::new();
        l.write_csv(&mut buf).unwrap();
        let table = read_outcome_csv(&buf[..], &actions).unwrap();
        assert_eq!(&table, l.table());
        let mut warm = Learner::new(actions, PolicyConfig::default(), ValueMode::Synchronous);
        warm.warm_start(table).unwrap();
        assert_eq!(warm.model(), l.model());
    }
}
