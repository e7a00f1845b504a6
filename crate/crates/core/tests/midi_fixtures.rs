use imime_core::midi::{
    events_to_envelopes, event_seconds, parse_midi, Division, MidiKind, MidiMapping,
};

fn load(name: &str) -> Vec<u8> {
    std::fs::read(format!("{}/tests/fixtures/{name}", env!("CARGO_MANIFEST_DIR"))).unwrap()
}

type Row = (u64, usize, Option<u8>, MidiKind);

fn table(bytes: &[u8]) -> (Division, Vec<Row>, Vec<f64>) {
    let m = parse_midi(bytes).unwrap();
    let secs = event_seconds(&m.events, m.division);
    let rows = m
        .events
        .into_iter()
        .map(|e| (e.tick, e.track, e.channel, e.kind))
        .collect();
    (m.division, rows, secs)
}

fn on(pitch: u8, velocity: u8) -> MidiKind {
    MidiKind::NoteOn { pitch, velocity }
}

fn off(pitch: u8) -> MidiKind {
    MidiKind::NoteOff { pitch }
}

#[test]
fn format0_event_table() {
    let (div, rows, secs) = table(&load("format0.mid"));
    assert_eq!(div, Division::TicksPerQuarter(96));
    let want: Vec<Row> = vec![
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
    assert_eq!(rows, want);
    // 96 ticks at 0.5 s per quarter, then quarters of 0.25 s
    let want_secs = [0.0, 0.0, 0.0, 0.5, 0.5, 0.75, 0.75, 1.25, 1.25];
    for (got, want) in secs.iter().zip(want_secs) {
        assert!((got - want).abs() < 1e-12, "{got} vs {want}");
    }
}

#[test]
fn format1_merge_is_tick_sorted_and_stable() {
    let (div, rows, secs) = table(&load("format1.mid"));
    assert_eq!(div, Division::TicksPerQuarter(480));
    let want: Vec<Row> = vec![
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
    assert_eq!(rows, want);
    let want_secs = [0.0, 0.0, 0.3, 0.6, 0.9, 1.2, 1.2, 1.2, 1.5, 1.5, 1.5];
    for (got, want) in secs.iter().zip(want_secs) {
        assert!((got - want).abs() < 1e-12, "{got} vs {want}");
    }
}

#[test]
fn reparsing_is_deterministic() {
    for name in ["format0.mid", "format1.mid"] {
        let bytes = load(name);
        assert_eq!(parse_midi(&bytes).unwrap(), parse_midi(&bytes).unwrap());
    }
}

#[test]
fn fixture_envelopes_are_well_formed() {
    for name in ["format0.mid", "format1.mid"] {
        let m = parse_midi(&load(name)).unwrap();
        let note_ons = m
            .events
            .iter()
            .filter(|e| matches!(e.kind, MidiKind::NoteOn { .. }))
            .count();
        let out = events_to_envelopes(&m.events, m.division, &MidiMapping::default());
        assert!(out.warnings.is_empty());
        assert!(!out.envelopes.is_empty() && out.envelopes.len() <= note_ons);
        for env in &out.envelopes {
            assert!(env.points.windows(2).all(|w| w[0].0 < w[1].0));
            assert!(env.points.iter().all(|p| (0.0..=1.0).contains(&p.1)));
        }
    }
}

#[test]
fn format0_note_timing_in_envelopes() {
    let m = parse_midi(&load("format0.mid")).unwrap();
    let out = events_to_envelopes(&m.events, m.division, &MidiMapping::default());
    // pitch 60 is class 0: on at 0 s, off at 0.5 s, peak 100/127
    let jaw = out.envelopes.iter().find(|e| e.label == "JawOpen").unwrap();
    let peak = 100.0 / 127.0;
    assert_eq!(jaw.points.len(), 4);
    assert!((jaw.points[1].0 - 0.05).abs() < 1e-12 && (jaw.points[1].1 - peak).abs() < 1e-12);
    assert!((jaw.points[2].0 - 0.5).abs() < 1e-12);
    assert!((jaw.points[3].0 - 0.7).abs() < 1e-12 && jaw.points[3].1 == 0.0);
}
