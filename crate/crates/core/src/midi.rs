//! Standard MIDI File parsing and the note → facial-expression envelope
//! mapping.
//!
//! The mapping layer is our own: pitch class picks one of twelve morph
//! labels, velocity sets the peak weight, and each note rises over an attack
//! time and decays over a release time.

use std::io::Write;

use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum MidiError {
    #[error("bad header: {0}")]
    BadHeader(String),
    #[error("truncated chunk at byte {0}")]
    TruncatedChunk(usize),
    #[error("unsupported SMF format {0}")]
    UnsupportedFormat(u16),
    #[error("variable-length quantity longer than 4 bytes at byte {0}")]
    BadVLQ(usize),
    #[error("bad event at byte {offset}: {reason}")]
    BadEvent { offset: usize, reason: String },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum MidiKind {
    NoteOn { pitch: u8, velocity: u8 },
    NoteOff { pitch: u8 },
    /// Microseconds per quarter note.
    Tempo(u32),
    /// Any other channel, meta or sysex event, bytes from the status byte on.
    Other(Vec<u8>),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MidiEvent {
    pub tick: u64,
    pub track: usize,
    /// `None` for meta and sysex events.
    pub channel: Option<u8>,
    pub kind: MidiKind,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Division {
    TicksPerQuarter(u16),
    /// SMPTE frames per second and ticks per frame.
    Smpte { fps: u8, ticks_per_frame: u8 },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MidiFile {
    pub format: u16,
    pub division: Division,
    pub events: Vec<MidiEvent>,
}

/// Decodes a variable-length quantity at `pos`, returning `(value, bytes read)`.
pub fn read_vlq(bytes: &[u8], pos: usize) -> Result<(u32, usize), MidiError> {
    let mut value = 0u32;
    for i in 0..4 {
        let b = *bytes.get(pos + i).ok_or(MidiError::TruncatedChunk(pos + i))?;
        value = (value << 7) | u32::from(b & 0x7F);
        if b & 0x80 == 0 {
            return Ok((value, i + 1));
        }
    }
    Err(MidiError::BadVLQ(pos))
}

fn be_u16(b: &[u8]) -> u16 {
    u16::from_be_bytes([b[0], b[1]])
}

fn be_u32(b: &[u8]) -> u32 {
    u32::from_be_bytes([b[0], b[1], b[2], b[3]])
}

pub fn parse_midi(bytes: &[u8]) -> Result<MidiFile, MidiError> {
    if bytes.len() < 14 {
        return Err(MidiError::BadHeader("file shorter than a header chunk".into()));
    }
    if &bytes[0..4] != b"MThd" {
        return Err(MidiError::BadHeader("missing MThd".into()));
    }
    let header_len = be_u32(&bytes[4..8]) as usize;
    if header_len < 6 {
        return Err(MidiError::BadHeader(format!("header length {header_len}")));
    }
    let format = be_u16(&bytes[8..10]);
    let ntracks = be_u16(&bytes[10..12]) as usize;
    let raw_div = be_u16(&bytes[12..14]);
    match format {
        0 | 1 => {}
        2 => return Err(MidiError::UnsupportedFormat(2)),
        f => return Err(MidiError::BadHeader(format!("format {f}"))),
    }
    if format == 0 && ntracks != 1 {
        return Err(MidiError::BadHeader(format!("format 0 with {ntracks} tracks")));
    }
    let division = if raw_div & 0x8000 != 0 {
        let fps = (-((raw_div >> 8) as u8 as i8)) as u8;
        Division::Smpte {
            fps,
            ticks_per_frame: (raw_div & 0xFF) as u8,
        }
    } else if raw_div == 0 {
        return Err(MidiError::BadHeader("zero division".into()));
    } else {
        Division::TicksPerQuarter(raw_div)
    };
    let mut pos = 8 + header_len;
    if pos > bytes.len() {
        return Err(MidiError::TruncatedChunk(8));
    }
    let mut events = Vec::new();
    let mut track = 0;
    while track < ntracks {
        if pos + 8 > bytes.len() {
            return Err(MidiError::TruncatedChunk(pos));
        }
        let len = be_u32(&bytes[pos + 4..pos + 8]) as usize;
        let body_start = pos + 8;
        let body_end = body_start.checked_add(len).filter(|&e| e <= bytes.len());
        let Some(body_end) = body_end else {
            return Err(MidiError::TruncatedChunk(pos));
        };
        if &bytes[pos..pos + 4] == b"MTrk" {
            parse_track(&bytes[..body_end], body_start, track, &mut events)?;
            track += 1;
        }
        // alien chunks are skipped
        pos = body_end;
    }
    // stable sort keeps track order on equal ticks
    events.sort_by_key(|e| e.tick);
    Ok(MidiFile {
        format,
        division,
        events,
    })
}

fn parse_track(bytes: &[u8], start: usize, track: usize, out: &mut Vec<MidiEvent>) -> Result<(), MidiError> {
    let mut pos = start;
    let mut tick = 0u64;
    let mut running: Option<u8> = None;
    let byte_at = |p: usize| bytes.get(p).copied().ok_or(MidiError::TruncatedChunk(p));
    while pos < bytes.len() {
        let (delta, n) = read_vlq(bytes, pos)?;
        pos += n;
        tick += u64::from(delta);
        let first = byte_at(pos)?;
        let event_start = pos;
        let status = if first & 0x80 != 0 {
            pos += 1;
            first
        } else {
            running.ok_or_else(|| MidiError::BadEvent {
                offset: pos,
                reason: "data byte without running status".into(),
            })?
        };
        match status {
            0xFF => {
                running = None;
                let meta = byte_at(pos)?;
                let (len, n) = read_vlq(bytes, pos + 1)?;
                let data_start = pos + 1 + n;
                let data_end = data_start + len as usize;
                if data_end > bytes.len() {
                    return Err(MidiError::TruncatedChunk(data_start));
                }
                pos = data_end;
                match meta {
                    0x2F => return Ok(()),
                    0x51 if len == 3 => {
                        let d = &bytes[data_start..data_end];
                        let tempo = (u32::from(d[0]) << 16) | (u32::from(d[1]) << 8) | u32::from(d[2]);
                        out.push(MidiEvent {
                            tick,
                            track,
                            channel: None,
                            kind: MidiKind::Tempo(tempo),
                        });
                    }
                    _ => out.push(MidiEvent {
                        tick,
                        track,
                        channel: None,
                        kind: MidiKind::Other(bytes[event_start..data_end].to_vec()),
                    }),
                }
            }
            0xF0 | 0xF7 => {
                running = None;
                let (len, n) = read_vlq(bytes, pos)?;
                let data_end = pos + n + len as usize;
                if data_end > bytes.len() {
                    return Err(MidiError::TruncatedChunk(pos));
                }
                pos = data_end;
                out.push(MidiEvent {
                    tick,
                    track,
                    channel: None,
                    kind: MidiKind::Other(bytes[event_start..data_end].to_vec()),
                });
            }
            0xF1..=0xFE => {
                return Err(MidiError::BadEvent {
                    offset: event_start,
                    reason: format!("system status {status:#04x} inside a track"),
                })
            }
            _ => {
                running = Some(status);
                let channel = status & 0x0F;
                let data_len = if matches!(status & 0xF0, 0xC0 | 0xD0) { 1 } else { 2 };
                let mut data = [0u8; 2];
                for (i, slot) in data.iter_mut().take(data_len).enumerate() {
                    let b = byte_at(pos + i)?;
                    if b & 0x80 != 0 {
                        return Err(MidiError::BadEvent {
                            offset: pos + i,
                            reason: "status byte where data expected".into(),
                        });
                    }
                    *slot = b;
                }
                pos += data_len;
                let kind = match (status & 0xF0, data[1]) {
                    (0x90, 0) | (0x80, _) => MidiKind::NoteOff { pitch: data[0] },
                    (0x90, v) => MidiKind::NoteOn {
                        pitch: data[0],
                        velocity: v,
                    },
                    _ => {
                        let mut raw = vec![status];
                        raw.extend_from_slice(&data[..data_len]);
                        MidiKind::Other(raw)
                    }
                };
                out.push(MidiEvent {
                    tick,
                    track,
                    channel: Some(channel),
                    kind,
                });
            }
        }
    }
    Ok(())
}

pub const DEFAULT_TEMPO: u32 = 500_000;

/// Absolute seconds of every event, honoring tempo changes at their tick.
pub fn event_seconds(events: &[MidiEvent], division: Division) -> Vec<f64> {
    match division {
        Division::Smpte { fps, ticks_per_frame } => {
            let per_sec = f64::from(fps) * f64::from(ticks_per_frame);
            events.iter().map(|e| e.tick as f64 / per_sec).collect()
        }
        Division::TicksPerQuarter(tpq) => {
            let tpq = f64::from(tpq);
            let mut tempo = f64::from(DEFAULT_TEMPO);
            let mut anchor_tick = 0u64;
            let mut anchor_secs = 0.0;
            events
                .iter()
                .map(|e| {
                    let secs = anchor_secs + (e.tick - anchor_tick) as f64 * tempo / (tpq * 1e6);
                    if let MidiKind::Tempo(t) = e.kind {
                        anchor_tick = e.tick;
                        anchor_secs = secs;
                        tempo = f64::from(t);
                    }
                    secs
                })
                .collect()
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MidiMapping {
    /// Morph label per pitch class, C first.
    pub labels: [String; 12],
    pub attack_secs: f64,
    pub release_secs: f64,
}

pub const DEFAULT_PITCH_LABELS: [&str; 12] = [
    "JawOpen",
    "MouthSmileL",
    "MouthSmileR",
    "BrowRaiseInnerL",
    "BrowRaiseInnerR",
    "EyeWideL",
    "EyeWideR",
    "MouthPucker",
    "CheekPuffL",
    "CheekPuffR",
    "MouthFrownL",
    "MouthFrownR",
];

impl Default for MidiMapping {
    fn default() -> Self {
        Self {
            labels: DEFAULT_PITCH_LABELS.map(String::from),
            attack_secs: 0.05,
            release_secs: 0.2,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExpressionEnvelope {
    pub label: String,
    /// `(seconds, weight)` with strictly increasing times.
    pub points: Vec<(f64, f64)>,
}

impl ExpressionEnvelope {
    /// Linear interpolation between breakpoints, zero outside.
    pub fn weight_at(&self, t: f64) -> f64 {
        let p = &self.points;
        if p.is_empty() || t < p[0].0 || t > p[p.len() - 1].0 {
            return 0.0;
        }
        let i = p.partition_point(|q| q.0 <= t);
        if i == 0 {
            return p[0].1;
        }
        if i == p.len() {
            return p[p.len() - 1].1;
        }
        let (t0, w0) = p[i - 1];
        let (t1, w1) = p[i];
        w0 + (w1 - w0) * (t - t0) / (t1 - t0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnvelopeOutput {
    pub envelopes: Vec<ExpressionEnvelope>,
    /// Non-fatal issues such as unmatched note-offs.
    pub warnings: Vec<String>,
}

/// A single note's weight curve.
#[derive(Debug, Clone, Copy)]
struct NoteShape {
    on: f64,
    off: f64,
    peak: f64,
    attack: f64,
    release: f64,
}

impl NoteShape {
    fn level_at_release(&self) -> f64 {
        self.rise(self.off)
    }

    fn rise(&self, t: f64) -> f64 {
        if self.attack <= 0.0 {
            self.peak
        } else {
            self.peak * ((t - self.on) / self.attack).clamp(0.0, 1.0)
        }
    }

    fn end(&self) -> f64 {
        self.off + self.release
    }

    fn value(&self, t: f64) -> f64 {
        if t <= self.on || t >= self.end() {
            return if t == self.on && self.attack <= 0.0 { self.peak } else { 0.0 };
        }
        if t <= self.off {
            return self.rise(t);
        }
        if self.release <= 0.0 {
            return 0.0;
        }
        self.level_at_release() * (1.0 - (t - self.off) / self.release)
    }

    fn breakpoints(&self) -> Vec<f64> {
        let mut v = vec![self.on, self.off, self.end()];
        if self.on + self.attack < self.off {
            v.push(self.on + self.attack);
        }
        v
    }
}

/// Maps note events to one envelope per morph label.
pub fn events_to_envelopes(events: &[MidiEvent], division: Division, mapping: &MidiMapping) -> EnvelopeOutput {
    let secs = event_seconds(events, division);
    let end_of_stream = secs.last().copied().unwrap_or(0.0);
    let mut open: Vec<(u8, u8, f64, f64)> = Vec::new(); // channel, pitch, on, peak
    let mut notes: Vec<(usize, NoteShape)> = Vec::new();
    let mut warnings = Vec::new();
    let shape = |on: f64, off: f64, peak: f64| NoteShape {
        on,
        off: off.max(on),
        peak,
        attack: mapping.attack_secs.max(0.0),
        release: mapping.release_secs.max(0.0),
    };
    for (e, &t) in events.iter().zip(&secs) {
        let ch = e.channel.unwrap_or(0);
        match e.kind {
            MidiKind::NoteOn { pitch, velocity } => {
                open.push((ch, pitch, t, f64::from(velocity.min(127)) / 127.0));
            }
            MidiKind::NoteOff { pitch } => {
                if let Some(i) = open.iter().position(|o| o.0 == ch && o.1 == pitch) {
                    let (_, p, on, peak) = open.remove(i);
                    notes.push((usize::from(p % 12), shape(on, t, peak)));
                } else {
                    warnings.push(format!("unmatched note-off pitch {pitch} channel {ch} at tick {}", e.tick));
                }
            }
            _ => {}
        }
    }
    for (_, p, on, peak) in open {
        notes.push((usize::from(p % 12), shape(on, end_of_stream, peak)));
    }

    let mut envelopes = Vec::new();
    for class in 0..12 {
        let shapes: Vec<NoteShape> = notes.iter().filter(|n| n.0 == class).map(|n| n.1).collect();
        if shapes.is_empty() {
            continue;
        }
        let label = mapping.labels[class].clone();
        // pitch classes mapped to the same label share one envelope
        if let Some(env) = envelopes.iter_mut().find(|e: &&mut (String, Vec<NoteShape>)| e.0 == label) {
            env.1.extend(shapes);
        } else {
            envelopes.push((label, shapes));
        }
    }
    let envelopes = envelopes
        .into_iter()
        .map(|(label, shapes)| ExpressionEnvelope {
            label,
            points: max_envelope(&shapes),
        })
        .collect();
    EnvelopeOutput { envelopes, warnings }
}

/// Exact pointwise maximum of piecewise-linear note shapes.
fn max_envelope(shapes: &[NoteShape]) -> Vec<(f64, f64)> {
    let mut times: Vec<f64> = shapes.iter().flat_map(|s| s.breakpoints()).collect();
    times.sort_by(f64::total_cmp);
    times.dedup();
    let eval = |t: f64| shapes.iter().map(|s| s.value(t)).fold(0.0, f64::max);
    let mut all = Vec::with_capacity(times.len());
    for w in times.windows(2) {
        let (a, b) = (w[0], w[1]);
        all.push(a);
        // each shape is linear on (a, b); add pairwise crossings
        let mid = |s: &NoteShape, t: f64| {
            let eps = (b - a) * 1e-9;
            s.value(t.clamp(a + eps, b - eps))
        };
        for (i, s) in shapes.iter().enumerate() {
            for r in &shapes[i + 1..] {
                let da = mid(s, a) - mid(r, a);
                let db = mid(s, b) - mid(r, b);
                if da * db < 0.0 {
                    all.push(a + (b - a) * da / (da - db));
                }
            }
        }
    }
    if let Some(&last) = times.last() {
        all.push(last);
    }
    all.sort_by(f64::total_cmp);
    all.dedup_by(|x, y| (*x - *y).abs() < 1e-12);
    let mut points: Vec<(f64, f64)> = all.into_iter().map(|t| (t, eval(t).clamp(0.0, 1.0))).collect();
    // drop interior points that lie on the line through their neighbours
    let mut i = 1;
    while i + 1 < points.len() {
        let (t0, w0) = points[i - 1];
        let (t1, w1) = points[i];
        let (t2, w2) = points[i + 1];
        let interp = w0 + (w2 - w0) * (t1 - t0) / (t2 - t0);
        if (interp - w1).abs() < 1e-12 {
            points.remove(i);
        } else {
            i += 1;
        }
    }
    points
}

/// CSV: `label,time,weight`.
pub fn write_envelopes_csv<W: Write>(envelopes: &[ExpressionEnvelope], mut out: W) -> std::io::Result<()> {
    writeln!(out, "label,time,weight")?;
    for env in envelopes {
        for (t, w) in &env.points {
            writeln!(out, "{},{t},{w}", env.label)?;
        }
    }
    Ok(())
}
