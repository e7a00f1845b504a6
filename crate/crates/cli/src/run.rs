use std::fs::{self, File};
use std::io::{self, BufWriter};
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use imime_core::config::{Config, Mode};
use imime_core::harness::{
    metrics, oracle_policy, run_episode, write_decisions_csv, write_log_csv, Agent, FrameEvent, FrameSink,
};
use imime_core::learning::StateId;

pub struct Overrides {
    pub config: PathBuf,
    pub seed: Option<u64>,
    pub steps: Option<u64>,
    pub mode: Option<Mode>,
    pub dump_frames: bool,
    pub out: Option<PathBuf>,
}

pub fn load(path: &Path) -> Result<Config> {
    let cfg = Config::load(path)?;
    cfg.validate()?;
    Ok(cfg)
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    let f = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    Ok(BufWriter::new(f))
}

struct FrameDump {
    dir: PathBuf,
    truth: csv::Writer<BufWriter<File>>,
}

impl FrameDump {
    fn new(dir: PathBuf) -> Result<Self> {
        fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
        let mut truth = csv::Writer::from_writer(create(&dir.join("truth.csv"))?);
        truth.write_record(["tick", "yaw", "attending", "label", "x", "y", "w", "h", "pose"])?;
        Ok(Self { dir, truth })
    }

    fn write(&mut self, event: FrameEvent<'_>) -> io::Result<()> {
        match event {
            FrameEvent::Background { index, frame } => {
                frame.save_pgm(self.dir.join(format!("background_{index:03}.pgm")))
            }
            FrameEvent::Tick {
                tick,
                face,
                body,
                truth,
                pose,
            } => {
                face.save_pgm(self.dir.join(format!("face_{tick:06}.pgm")))?;
                body.save_pgm(self.dir.join(format!("body_{tick:06}.pgm")))?;
                let r = truth.rect;
                self.truth.write_record([
                    tick.to_string(),
                    format!("{:.3}", truth.yaw),
                    (truth.attending as u8).to_string(),
                    truth.label.to_string(),
                    r.x.to_string(),
                    r.y.to_string(),
                    r.w.to_string(),
                    r.h.to_string(),
                    pose.map_or_else(|| "None".into(), |p| p.to_string()),
                ])?;
                Ok(())
            }
        }
    }
}

pub fn run(o: Overrides) -> Result<()> {
    let mut cfg = Config::load(&o.config)?;
    if let Some(seed) = o.seed {
        cfg.run.seed = seed;
    }
    if let Some(steps) = o.steps {
        cfg.run.steps = steps;
    }
    if let Some(mode) = o.mode {
        cfg.run.mode = mode;
    }
    if o.dump_frames {
        cfg.run.dump_frames = true;
    }
    if let Some(out) = o.out {
        cfg.run.out = out;
    }
    cfg.validate()?;

    let out = cfg.run.out.clone();
    fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
    let mut dump = if cfg.run.dump_frames {
        Some(FrameDump::new(out.join("frames"))?)
    } else {
        None
    };
    let mut write_frame = |e: FrameEvent<'_>| match dump.as_mut() {
        Some(d) => d.write(e),
        None => Ok(()),
    };
    let sink: Option<&mut FrameSink<'_>> = if cfg.run.dump_frames {
        Some(&mut write_frame)
    } else {
        None
    };
    let mut episode = run_episode(&cfg, Agent::Learned, sink)?;
    if let Some(mut d) = dump {
        d.truth.flush()?;
    }

    let actions = cfg.profile.actions().clone();
    write_log_csv(&episode.rows, create(&out.join("log.csv"))?)?;
    write_decisions_csv(&episode.decisions, &actions, create(&out.join("decisions.csv"))?)?;
    episode.learner.write_csv(create(&out.join("learner.csv"))?)?;

    let oracle = oracle_policy(&cfg.profile, cfg.policy.gamma);
    let m = metrics(&episode, &oracle);
    let mut w = csv::Writer::from_writer(create(&out.join("metrics.csv"))?);
    w.write_record(["metric", "value"])?;
    for (k, v) in [
        ("frames", episode.rows.len().to_string()),
        ("decisions", m.decisions.to_string()),
        ("outcomes", m.outcomes.to_string()),
        ("final_attention", format!("{:.6}", m.final_attention)),
        ("cumulative_reward", m.cumulative_reward.to_string()),
        ("regret", format!("{:.6}", m.regret)),
        ("exploration_rate", format!("{:.6}", m.exploration_rate)),
        ("greedy_agreement", format!("{:.6}", m.greedy_agreement)),
    ] {
        w.write_record([k, v.as_str()])?;
    }
    w.flush()?;
    let mut w = csv::Writer::from_writer(create(&out.join("windows.csv"))?);
    w.write_record(["window", "attention_fraction"])?;
    for (i, f) in m.window_attention.iter().enumerate() {
        w.write_record([i.to_string(), format!("{f:.6}")])?;
    }
    w.flush()?;

    println!(
        "{} frames, {} decisions, final attention {:.3}, greedy agreement {:.3}, wrote {}",
        episode.rows.len(),
        m.decisions,
        m.final_attention,
        m.greedy_agreement,
        out.display()
    );
    Ok(())
}

pub fn oracle(config: &Path) -> Result<()> {
    let cfg = load(config)?;
    let o = oracle_policy(&cfg.profile, cfg.policy.gamma);
    let actions = cfg.profile.actions();
    let stdout = io::stdout();
    let mut w = csv::Writer::from_writer(stdout.lock());
    w.write_record(["routine", "attending", "action", "value", "margin"])?;
    for s in 0..actions.states() {
        let sid = StateId::from_index(s);
        w.write_record([
            actions.get(sid.routine).to_string(),
            (sid.attending as u8).to_string(),
            actions.get(o.policy[s]).to_string(),
            format!("{:.10}", o.values[s]),
            format!("{:.10}", o.margin(s)),
        ])?;
    }
    w.flush()?;
    Ok(())
}
