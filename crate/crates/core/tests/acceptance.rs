//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any fails.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::ExitCode;
use std::time::Instant;

use nalgebra::{DMatrix, DVector, Matrix4, Rotation3, Unit, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use imime_core::animation::{
    blend_morphs, face_mesh, forward_kinematics, morph_library, perlin_1d, skin, Mesh, Skeleton, SkinWeights,
};
use imime_core::attention::{AttentionFuser, AttentionState};
use imime_core::behavior::{simon_step, BehaviorConfig, GameEvent, GamePhase, GameState};
use imime_core::body::{classify_pose, drape, segment_foreground, train_background, Pose};
use imime_core::config::Config;
use imime_core::face::{block_flow, estimate_jerk, FlowConfig, HeadTrack};
use imime_core::harness::{
    build_analyzer, metrics, oracle_policy, run_episode, run_seeds, write_log_csv, Agent, Episode,
};
use imime_core::learning::{
    map_estimate, select_action, update_values, PolicyConfig, StateId, TransitionModel, ValueMode,
};
use imime_core::midi::{parse_midi, read_vlq, Division, MidiError, MidiKind};
use imime_core::viewer::{
    background_frame, default_pose_references, synthesize_body_frame, synthesize_face_frame,
    truth_label, ViewerState,
};
use imime_core::{Exec, Frame, Rect};

/// A failed check. `infeasible` marks a target that no implementation can
/// reach; it still prints as FAIL but does not fail the run.
struct Failure {
    detail: String,
    infeasible: bool,
}

impl Failure {
    fn infeasible(detail: String) -> Self {
        Self { detail, infeasible: true }
    }
}

impl From<String> for Failure {
    fn from(detail: String) -> Self {
        Self {
            detail,
            infeasible: false,
        }
    }
}

impl From<&str> for Failure {
    fn from(detail: &str) -> Self {
        detail.to_string().into()
    }
}

type Outcome = Result<String, Failure>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn episodes(cfg: &Config, agent: Agent, seeds: &[u64]) -> Result<Vec<Episode>, String> {
    run_seeds(cfg, agent, seeds, Exec::Parallel)
        .into_iter()
        .collect::<Result<_, _>>()
        .map_err(|e| e.to_string())
}

fn decisions_cfg(decisions: u64) -> Config {
    let mut cfg = Config::default();
    cfg.run.steps = decisions * cfg.run.period();
    cfg
}

fn learning_convergence() -> Outcome {
    let start = Instant::now();
    let cfg = decisions_cfg(2_000);
    let oracle = oracle_policy(&cfg.profile, cfg.policy.gamma);
    ensure(cfg.profile.actions().len() == 4 && oracle.policy.len() == 8, || {
        "default profile is not 4 routines / 8 states".into()
    })?;
    let margin = (0..8).map(|s| oracle.margin(s)).fold(f64::INFINITY, f64::min);
    ensure(margin >= 0.15, || format!("default profile margin {margin:.3} < 0.15"))?;
    let seeds: Vec<u64> = (1..=10).collect();
    let agreement: Vec<f64> = episodes(&cfg, Agent::Learned, &seeds)?
        .iter()
        .map(|e| metrics(e, &oracle).greedy_agreement)
        .collect();
    let good = agreement.iter().filter(|&&a| a >= 0.9).count();
    let secs = start.elapsed().as_secs_f64();
    let detail = format!("{good}/10 seeds agree on >= 90% of states (margin {margin:.3}), {secs:.1} s");
    ensure(good >= 9, || format!("{detail}; agreement {agreement:?}"))?;
    ensure(secs < 10.0, || format!("{detail}; over the 10 s budget"))?;
    Ok(detail)
}

fn attention_uplift() -> Outcome {
    let start = Instant::now();
    let cfg = decisions_cfg(2_000);
    let oracle = oracle_policy(&cfg.profile, cfg.policy.gamma);
    let seeds: Vec<u64> = (1..=10).collect();
    let learned = episodes(&cfg, Agent::Learned, &seeds)?;
    let random = episodes(&cfg, Agent::Random, &seeds)?;
    let gaps: Vec<f64> = learned
        .iter()
        .zip(&random)
        .map(|(l, r)| metrics(l, &oracle).final_attention - metrics(r, &oracle).final_attention)
        .collect();
    let worst = gaps.iter().copied().fold(f64::INFINITY, f64::min);
    let secs = start.elapsed().as_secs_f64();
    let detail = format!("smallest paired uplift {worst:.3} over 10 seeds, {secs:.1} s");
    ensure(worst >= 0.10, || format!("{detail}; gaps {gaps:?}"))?;
    ensure(secs < 20.0, || format!("{detail}; over the 20 s budget"))?;
    Ok(detail)
}

fn estimator_accuracy() -> Outcome {
    ensure(map_estimate(3, 1) == 0.75, || "MAP(3,1) != 0.75".into())?;
    ensure(map_estimate(0, 0) == 0.5, || "MAP(0,0) != 0.5".into())?;
    let cfg = decisions_cfg(10_000);
    let ep = run_episode(&cfg, Agent::Learned, None).map_err(|e| e.to_string())?;
    let table = ep.learner.table();
    let (mut cells, mut worst) = (0, 0.0f64);
    for s in 0..8 {
        for a in 0..4 {
            let sid = StateId::from_index(s);
            let (k, m) = table.counts(sid, a).map_err(|e| e.to_string())?;
            if k + m >= 400 {
                cells += 1;
                worst = worst.max((map_estimate(k, m) - cfg.profile.p_star(sid, a)).abs());
            }
        }
    }
    let detail = format!("{cells} cells with >= 400 visits, max |p_hat - p*| = {worst:.4}");
    ensure(cells > 0, || format!("{detail}; nothing to check"))?;
    ensure(worst <= 0.05, || detail.clone())?;
    Ok(detail)
}

/// Exact optimal values of the (routine, attending) MDP by enumerating
/// every deterministic policy and solving its linear system.
fn brute_force_q(p: &[f64], n: usize, gamma: f64) -> Vec<f64> {
    let states = 2 * n;
    let mut best = vec![f64::NEG_INFINITY; states];
    let total = n.pow(states as u32);
    for code in 0..total {
        let policy: Vec<usize> = (0..states).map(|s| (code / n.pow(s as u32)) % n).collect();
        let mut m = DMatrix::<f64>::identity(states, states);
        let mut r = DVector::<f64>::zeros(states);
        for s in 0..states {
            let a = policy[s];
            let pa = p[s * n + a];
            r[s] = pa;
            m[(s, 2 * a + 1)] -= gamma * pa;
            m[(s, 2 * a)] -= gamma * (1.0 - pa);
        }
        let v = m.lu().solve(&r).expect("I - γP is invertible");
        for s in 0..states {
            best[s] = best[s].max(v[s]);
        }
    }
    (0..states)
        .flat_map(|s| (0..n).map(move |a| (s, a)))
        .map(|(s, a)| {
            let pa = p[s * n + a];
            pa * (1.0 + gamma * best[2 * a + 1]) + (1.0 - pa) * gamma * best[2 * a]
        })
        .collect()
}

fn value_oracle() -> Outcome {
    let tight = PolicyConfig {
        tolerance: 1e-12,
        max_sweeps: 100_000,
        ..PolicyConfig::default()
    };
    let gamma = tight.gamma;
    let p = [0.30, 0.80, 0.60, 0.10, 0.90, 0.20, 0.45, 0.55];
    let model = TransitionModel::from_fn(2, |s, a| p[s.index() * 2 + a]);
    let (q, _) = update_values(&model, &tight).map_err(|e| e.to_string())?;
    let oracle = brute_force_q(&p, 2, gamma);
    let sup = q
        .values()
        .iter()
        .zip(&oracle)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    ensure(sup <= 1e-8, || format!("2-routine sup-norm error {sup:e}"))?;

    let analytic = |pv: f64, want: f64| -> Result<f64, String> {
        let m = TransitionModel::uniform(4, pv);
        let (q, _) = update_values(&m, &tight).map_err(|e| e.to_string())?;
        let err = q.values().iter().map(|v| (v - want).abs()).fold(0.0, f64::max);
        ensure(err <= 1e-6, || format!("p_hat = {pv}: error {err:e}"))?;
        Ok(err)
    };
    let one = analytic(1.0, 1.0 / (1.0 - gamma))?;
    let zero = analytic(0.0, 0.0)?;
    Ok(format!(
        "2-routine sup-norm {sup:.1e}; p_hat=1 error {one:.1e}; p_hat=0 error {zero:.1e}"
    ))
}

fn policy_distribution() -> Outcome {
    let cfg = PolicyConfig::default();
    ensure(cfg.epsilon == 0.125, || format!("default epsilon {}", cfg.epsilon))?;
    let model = TransitionModel::from_fn(4, |_, a| if a == 2 { 0.9 } else { 0.3 });
    let (q, _) = update_values(&model, &cfg).map_err(|e| e.to_string())?;
    let s = StateId::new(0, false);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut counts = [0usize; 4];
    const DRAWS: usize = 80_000;
    for _ in 0..DRAWS {
        counts[select_action(&q, s, cfg.epsilon, &mut rng).map_err(|e| e.to_string())?.0] += 1;
    }
    let freq = counts.map(|c| c as f64 / DRAWS as f64);
    let max_dev = |want: [f64; 4]| freq.iter().zip(want).map(|(f, w)| (f - w).abs()).fold(0.0, f64::max);

    let mut heads = 0usize;
    for _ in 0..10_000 {
        heads += imime_core::behavior::scheduler_tick(&mut rng, 0.5, |_| ()).is_some() as usize;
    }
    let coin = heads as f64 / 10_000.0;
    ensure((coin - 0.5).abs() <= 0.02, || format!("scheduler coin {coin}"))?;

    // the selection rule itself: 1 − ε on the argmax, ε shared evenly by the rest
    let e = cfg.epsilon / 3.0;
    let rule_dev = max_dev([e, e, 1.0 - cfg.epsilon, e]);
    ensure(rule_dev <= 0.01, || format!("frequencies {freq:?} break the ε-greedy rule"))?;

    let detail = format!(
        "greedy {:.4}, others {:.4}/{:.4}/{:.4}; coin {coin:.4}",
        freq[2], freq[0], freq[1], freq[3]
    );
    let target = [0.0625, 0.0625, 0.875, 0.0625];
    if max_dev(target) <= 0.01 {
        return Ok(detail);
    }
    let sum: f64 = target.iter().sum();
    Err(Failure::infeasible(format!(
        "{detail}; target (0.875; 0.0625; 0.0625; 0.0625) sums to {sum} so no distribution is within \
         0.01 of it; measured frequencies match 1-ε / ε/3 within {rule_dev:.4}"
    )))
}

fn vision_accuracy() -> Outcome {
    let cfg = Config::default();
    let scene = &cfg.scene;
    let mut rng = ChaCha8Rng::seed_from_u64(21);

    // orientation over a yaw sweep, one fresh pipeline per frame
    const FRAMES: usize = 1_000;
    let mut hits = 0;
    for i in 0..FRAMES {
        let yaw = -45.0 + 90.0 * i as f64 / (FRAMES - 1) as f64;
        let mut viewer = ViewerState::new(scene.head_centre());
        viewer.yaw = yaw;
        let (frame, _) = synthesize_face_frame(&viewer, scene, &mut rng);
        let obs = build_analyzer(&cfg).process(&frame).map_err(|e| e.to_string())?;
        hits += obs.is_some_and(|o| o.orientation.label == truth_label(yaw)) as usize;
    }
    let acc = hits as f64 / FRAMES as f64;
    ensure(acc >= 0.95, || format!("orientation accuracy {acc:.3}"))?;

    // drape classification of every shipped silhouette under default noise
    let bg: Vec<Frame> = (0..cfg.vision.background_frames)
        .map(|_| background_frame(scene, &mut rng))
        .collect();
    let model = train_background(&bg, cfg.vision.variance_floor, Exec::Sequential).map_err(|e| e.to_string())?;
    let refs = default_pose_references(scene, &cfg.vision.drape).map_err(|e| e.to_string())?;
    let (mut pose_hits, mut pose_total) = (0, 0);
    for pose in Pose::ALL {
        for _ in 0..20 {
            let mut viewer = ViewerState::new(scene.head_centre());
            viewer.body_pose = Some(pose);
            let (frame, _) = synthesize_body_frame(&viewer, scene, &mut rng).map_err(|e| e.to_string())?;
            let mask = segment_foreground(&model, &frame, cfg.vision.mahalanobis, Exec::Sequential)
                .map_err(|e| e.to_string())?;
            let got = classify_pose(&drape(&mask, &cfg.vision.drape), &refs, cfg.vision.pose_threshold)
                .map_err(|e| e.to_string())?;
            pose_total += 1;
            pose_hits += (got == Some(pose)) as usize;
        }
    }
    ensure(pose_hits == pose_total, || format!("pose {pose_hits}/{pose_total}"))?;

    // jerk: bursts injected into a still head, through the pixel pipeline
    let threshold = cfg.vision.fusion.jerk_threshold;
    let mut quiet = cfg.profile.clone();
    quiet.erratic_rate = 0.0;
    let mut analyzer = build_analyzer(&cfg);
    let mut fuser = AttentionFuser::new(cfg.vision.fusion);
    let mut viewer = ViewerState::new(scene.head_centre());
    viewer.yaw = 0.0;
    let mut clock = 0u64;
    let mut frame_once = |viewer: &ViewerState, rng: &mut ChaCha8Rng| -> Result<(f64, bool), String> {
        let (frame, _) = synthesize_face_frame(viewer, scene, rng);
        let obs = analyzer.process(&frame).map_err(|e| e.to_string())?.ok_or("face lost")?;
        let cues = imime_core::attention::Cues {
            orientation: Some(obs.orientation.label),
            expression: obs.expression,
            motion: obs.motion,
            jerk: obs.jerk,
            pose: None,
        };
        let att: AttentionState = fuser.evaluate(&cues, clock as f64 / cfg.run.fps);
        clock += 1;
        Ok((obs.jerk, att.erratic))
    };
    const BURSTS: usize = 10;
    let (mut fired, mut flagged) = (0, 0);
    for _ in 0..BURSTS {
        for _ in 0..20 {
            imime_core::viewer::frame_step(&quiet, &mut viewer, None, &[], &mut rng);
            frame_once(&viewer, &mut rng)?;
        }
        viewer.start_burst(cfg.profile.erratic_frames);
        let (mut any_jerk, mut any_flag) = (false, false);
        while viewer.in_burst() {
            let (jerk, erratic) = frame_once(&viewer, &mut rng)?;
            any_jerk |= jerk > threshold;
            any_flag |= erratic;
            imime_core::viewer::frame_step(&quiet, &mut viewer, None, &[], &mut rng);
        }
        fired += any_jerk as usize;
        flagged += any_flag as usize;
    }
    ensure(fired == BURSTS && flagged == BURSTS, || {
        format!("{BURSTS} bursts, detector fired on {fired}, fuser flagged {flagged}")
    })?;

    // polynomial head motion of degree <= 3 never trips the detector
    let mut moving = ViewerState::new(scene.head_centre());
    moving.yaw = 0.0;
    let mut max_poly = 0.0f64;
    for (c1, c2, c3) in [(0.3, 0.0, 0.0), (0.0, 0.02, 0.0), (0.5, -0.01, 0.0001), (-0.2, 0.004, -0.00005)] {
        let mut analyzer = build_analyzer(&cfg);
        let (x0, y0) = scene.head_centre();
        for t in 0..60 {
            let tf = t as f64;
            let dx = c1 * tf + c2 * tf * tf + c3 * tf * tf * tf;
            moving.head = (x0 + dx.clamp(-12.0, 12.0), y0 + (dx / 2.0).clamp(-8.0, 8.0));
            let (frame, _) = synthesize_face_frame(&moving, scene, &mut rng);
            let obs = analyzer.process(&frame).map_err(|e| e.to_string())?.ok_or("face lost")?;
            max_poly = max_poly.max(obs.jerk);
        }
    }
    ensure(max_poly <= threshold, || format!("jerk {max_poly:.2} on polynomial motion"))?;
    let mut track = HeadTrack::default();
    let mut exact_max = 0.0f64;
    for t in 0..50 {
        let tf = t as f64;
        track.push((1.5 * tf - 0.2 * tf * tf + 0.01 * tf * tf * tf, 3.0 + 0.7 * tf));
        if let Ok(j) = estimate_jerk(&track) {
            exact_max = exact_max.max(j);
        }
    }
    ensure(exact_max < 1e-9, || format!("jerk {exact_max:e} on an exact cubic"))?;

    Ok(format!(
        "orientation {hits}/{FRAMES}; pose {pose_hits}/{pose_total}; bursts {fired}/{BURSTS} fired; \
         max jerk on cubic motion {max_poly:.1} (threshold {threshold})"
    ))
}

fn texture(w: usize, h: usize, rng: &mut ChaCha8Rng) -> Frame {
    Frame::new(w, h, (0..w * h).map(|_| rng.gen()).collect()).unwrap()
}

/// Global bone matrices by walking each root-to-bone chain and multiplying
/// homogeneous matrices.
fn transform_stack(skel: &Skeleton, angles: &[f64]) -> Vec<Matrix4<f64>> {
    let bones = skel.bones();
    (0..bones.len())
        .map(|b| {
            let mut chain = vec![b];
            while let Some(p) = bones[*chain.last().unwrap()].parent {
                chain.push(p);
            }
            chain.iter().rev().fold(Matrix4::identity(), |acc, &i| {
                let o = bones[i].offset;
                let axis = Unit::new_normalize(Vector3::from(bones[i].axis));
                let rot = Rotation3::from_axis_angle(&axis, angles[i]).to_homogeneous();
                acc * Matrix4::new_translation(&Vector3::new(o[0], o[1], o[2])) * rot
            })
        })
        .collect()
}

fn numerical_checks() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(77);

    let mut track = HeadTrack::default();
    for t in 0..5 {
        track.push(((t as f64).powi(4), 0.0));
    }
    let j = estimate_jerk(&track).map_err(|e| e.to_string())?;
    ensure(j == 24.0, || format!("jerk of t^4 = {j}"))?;

    let prev = texture(64, 64, &mut rng);
    let region = Rect::new(16, 16, 32, 32);
    for zero_bias in [0.0, FlowConfig::default().zero_bias] {
        let cfg = FlowConfig {
            zero_bias,
            exec: Exec::Sequential,
            ..FlowConfig::default()
        };
        for dy in -3i32..=3 {
            for dx in -3i32..=3 {
                let cur = Frame::from_fn(64, 64, |x, y| {
                    prev.get((x as i32 - dx).rem_euclid(64) as usize, (y as i32 - dy).rem_euclid(64) as usize)
                })
                .unwrap();
                let field = block_flow(&prev, &cur, region, &cfg).map_err(|e| e.to_string())?;
                let want = [dx as f64, dy as f64];
                ensure(field.vectors.iter().all(|v| *v == want), || {
                    format!("flow for shift ({dx},{dy}) with bias {zero_bias}: {:?}", field.vectors)
                })?;
            }
        }
    }

    let skel = Skeleton::character();
    let mut fk_err = 0.0f64;
    for _ in 0..50 {
        let angles: Vec<f64> = (0..skel.len()).map(|_| rng.gen_range(-3.0..3.0)).collect();
        let fk = forward_kinematics(&skel, &angles).map_err(|e| e.to_string())?;
        for (t, m) in fk.iter().zip(transform_stack(&skel, &angles)) {
            for i in 0..3 {
                for k in 0..3 {
                    fk_err = fk_err.max((t.rot[i][k] - m[(i, k)]).abs());
                }
                fk_err = fk_err.max((t.trans[i] - m[(i, 3)]).abs());
            }
        }
    }
    ensure(fk_err <= 1e-9, || format!("FK vs transform stack {fk_err:e}"))?;

    let base = face_mesh();
    let rest = forward_kinematics(&skel, &vec![0.0; skel.len()]).map_err(|e| e.to_string())?;
    let weights = SkinWeights(
        base.vertices
            .iter()
            .map(|_| {
                let picks: Vec<(usize, f64)> = (0..3).map(|_| (rng.gen_range(0..skel.len()), rng.gen_range(0.1..1.0))).collect();
                let sum: f64 = picks.iter().map(|p| p.1).sum();
                picks.into_iter().map(|(b, w)| (b, w / sum)).collect()
            })
            .collect(),
    );
    let at_rest = skin(&base, &rest, &weights, &rest).map_err(|e| e.to_string())?;
    let skin_err = at_rest
        .vertices
        .iter()
        .zip(&base.vertices)
        .flat_map(|(a, b)| (0..3).map(move |k| (a[k] - b[k]).abs()))
        .fold(0.0, f64::max);
    ensure(skin_err <= 1e-9, || format!("skin at rest {skin_err:e}"))?;

    for seed in [0, 1, 42, u64::MAX] {
        for k in -50i64..=50 {
            let v = perlin_1d(seed, k as f64);
            ensure(v == 0.0, || format!("perlin_1d({seed}, {k}) = {v}"))?;
        }
    }

    let targets = morph_library();
    let none = blend_morphs(&base, &targets, &vec![0.0; targets.len()]).map_err(|e| e.to_string())?;
    ensure(none == base, || "zero weights changed the mesh".into())?;
    for (j, t) in targets.iter().enumerate() {
        let mut w = vec![0.0; targets.len()];
        w[j] = 1.0;
        let full = blend_morphs(&base, &targets, &w).map_err(|e| e.to_string())?;
        let want = Mesh {
            vertices: base
                .vertices
                .iter()
                .zip(&t.deltas)
                .map(|(v, d)| [v[0] + d[0], v[1] + d[1], v[2] + d[2]])
                .collect(),
        };
        ensure(full == want, || format!("unit weight on {} is not base + delta", t.label))?;
    }
    Ok(format!(
        "jerk(t^4) = {j}; flow exact on 49 shifts; FK error {fk_err:.1e}; skin error {skin_err:.1e}; \
         perlin lattice zeros; {} morph endpoints exact",
        targets.len()
    ))
}

fn fixture(name: &str) -> Vec<u8> {
    std::fs::read(format!("{}/tests/fixtures/{name}", env!("CARGO_MANIFEST_DIR"))).unwrap()
}

type Row = (u64, usize, Option<u8>, MidiKind);

fn midi_table(bytes: &[u8]) -> Result<(Division, Vec<Row>), String> {
    let m = parse_midi(bytes).map_err(|e| e.to_string())?;
    Ok((
        m.division,
        m.events.into_iter().map(|e| (e.tick, e.track, e.channel, e.kind)).collect(),
    ))
}

fn midi() -> Outcome {
    let on = |pitch, velocity| MidiKind::NoteOn { pitch, velocity };
    let off = |pitch| MidiKind::NoteOff { pitch };
    let format0: Vec<Row> = vec![
        (0, 0, None, MidiKind::Tempo(500_000)),
        (0, 0, Some(0), on(60, 100)),
        (0, 0, Some(0), on(64, 80)),
        (96, 0, Some(0), off(60)),
        (96, 0, None, MidiKind::Tempo(250_000)),
        (192, 0, Some(0), on(67, 90)),
        (192, 0, Some(0), off(64)),
        (384, 0, Some(0), off(67)),
        (384, 0, None, MidiKind::Other(vec![0xFF, 0x01, 0x02, b'h', b'i'])),
    ];
    let format1: Vec<Row> = vec![
        (0, 0, None, MidiKind::Tempo(600_000)),
        (0, 1, Some(1), on(62, 64)),
        (240, 0, Some(0), on(48, 70)),
        (480, 1, Some(1), off(62)),
        (720, 0, Some(0), off(48)),
        (960, 0, None, MidiKind::Tempo(300_000)),
        (960, 1, Some(1), on(62, 64)),
        (960, 1, Some(1), on(65, 100)),
        (1440, 1, Some(1), off(62)),
        (1440, 1, Some(1), MidiKind::Other(vec![0xC1, 5])),
        (1440, 1, None, MidiKind::Other(vec![0xF0, 0x02, 0x7E, 0xF7])),
    ];
    for (name, div, want) in [
        ("format0.mid", 96, format0),
        ("format1.mid", 480, format1),
    ] {
        let got = midi_table(&fixture(name))?;
        ensure(got == (Division::TicksPerQuarter(div), want), || format!("{name} event table differs: {got:?}"))?;
    }
    let vlq: [(&[u8], u32); 4] = [(&[0x00], 0), (&[0x7F], 127), (&[0x81, 0x00], 128), (&[0xFF, 0x7F], 16_383)];
    for (bytes, want) in vlq {
        let got = read_vlq(bytes, 0).map_err(|e| e.to_string())?;
        ensure(got == (want, bytes.len()), || format!("VLQ {bytes:02X?} -> {got:?}"))?;
    }
    let mut format2 = b"MThd\x00\x00\x00\x06\x00\x02\x00\x01\x00\x60".to_vec();
    format2.extend_from_slice(b"MTrk\x00\x00\x00\x04\x00\xFF\x2F\x00");
    ensure(matches!(parse_midi(&format2), Err(MidiError::UnsupportedFormat(2))), || {
        "format 2 was not rejected".into()
    })?;
    Ok("format 0 and 1 tables exact; 4 VLQ boundaries; format 2 rejected".into())
}

fn log_bytes(cfg: &Config) -> Result<Vec<u8>, String> {
    let ep = run_episode(cfg, Agent::Learned, None).map_err(|e| e.to_string())?;
    let mut buf = Vec::new();
    write_log_csv(&ep.rows, &mut buf).map_err(|e| e.to_string())?;
    imime_core::harness::write_decisions_csv(&ep.decisions, cfg.profile.actions(), &mut buf)
        .map_err(|e| e.to_string())?;
    Ok(buf)
}

fn determinism() -> Outcome {
    let mut checked = Vec::new();
    for (mode, steps) in [(imime_core::config::Mode::Labels, 6_000), (imime_core::config::Mode::Pixels, 600)] {
        let mut cfg = Config::default();
        cfg.run.mode = mode;
        cfg.run.steps = steps;
        cfg.run.seed = 9;
        let first = log_bytes(&cfg)?;
        let second = log_bytes(&cfg)?;
        ensure(first == second, || format!("{mode:?}: two runs differ"))?;
        cfg.value_mode = ValueMode::Asynchronous;
        let threaded = log_bytes(&cfg)?;
        ensure(first == threaded, || format!("{mode:?}: sync and async logs differ"))?;
        checked.push(format!("{mode:?} {} bytes", first.len()));
    }
    Ok(format!("repeat and sync/async logs identical ({})", checked.join(", ")))
}

fn loop_integrity() -> Outcome {
    let mut cfg = Config::default();
    cfg.run.steps = 8_000;
    let ep = run_episode(&cfg, Agent::Learned, None).map_err(|e| e.to_string())?;
    let decisions = ep.decisions.len() as u64;
    ensure(ep.rows.len() as u64 == cfg.run.steps, || format!("{} rows", ep.rows.len()))?;
    ensure(ep.outcomes == decisions - 1, || format!("{} outcomes for {decisions} decisions", ep.outcomes))?;

    // independent table: only the prompted gesture before the deadline
    // earns a Reward; silence before the deadline waits
    let bcfg = BehaviorConfig::default();
    let prompt = Pose::Wave;
    let deadline = 50;
    let watching = AttentionState {
        face_present: true,
        attending: true,
        ..AttentionState::default()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut rows = 0;
    for (answer, gesture) in [("correct", Some(Pose::Wave)), ("wrong", Some(Pose::BothArmsRaised)), ("timeout", None)] {
        for (when, tick) in [("before", deadline - 1), ("after", deadline)] {
            let want = match (answer, when) {
                ("correct", "before") => GameEvent::Reward,
                ("timeout", "before") => GameEvent::None,
                _ => GameEvent::Scold,
            };
            let mut game = GameState {
                phase: GamePhase::Prompted { gesture: prompt, deadline },
                last_interaction_at: 0,
            };
            let att = AttentionState { gesture, ..watching.clone() };
            let got = simon_step(&mut game, &att, tick, &mut rng, &bcfg);
            ensure(got == want, || format!("{answer}/{when}: got {got:?}, want {want:?}"))?;
            rows += 1;
        }
    }
    Ok(format!(
        "{} outcomes for {decisions} decisions; {rows}/6 Simon-Says cases match",
        ep.outcomes
    ))
}

type Criterion = (&'static str, fn() -> Outcome);

fn main() -> ExitCode {
    let criteria: [Criterion; 10] = [
        ("learning convergence", learning_convergence),
        ("attention uplift", attention_uplift),
        ("estimator accuracy", estimator_accuracy),
        ("value estimator vs oracle", value_oracle),
        ("policy distribution", policy_distribution),
        ("vision pixel-mode accuracy", vision_accuracy),
        ("numerical micro-checks", numerical_checks),
        ("MIDI parsing", midi),
        ("determinism", determinism),
        ("loop integrity", loop_integrity),
    ];
    let (mut failed, mut infeasible) = (0, 0);
    for (i, (name, check)) in criteria.iter().enumerate() {
        let result = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into())
                .into())
        });
        match result {
            Ok(detail) => println!("PASS {:>2} {name}: {detail}", i + 1),
            Err(f) if f.infeasible => {
                infeasible += 1;
                println!("FAIL {:>2} {name} (infeasible target): {}", i + 1, f.detail);
            }
            Err(f) => {
                failed += 1;
                println!("FAIL {:>2} {name}: {}", i + 1, f.detail);
            }
        }
    }
    let passed = criteria.len() - failed - infeasible;
    println!(
        "acceptance: {passed}/{} criteria pass, {infeasible} infeasible, {failed} failed",
        criteria.len()
    );
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
