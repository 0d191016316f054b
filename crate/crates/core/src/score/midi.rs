//! Standard MIDI File reading (format 0/1) and writing (format 1).

use std::collections::{HashMap, VecDeque};
use std::path::Path;

use super::{MeterChange, Segment, Song, TempoChange, TimedNote, Track};
use crate::{Error, Result, BEATS_PER_SEGMENT, STEPS_PER_BEAT};

/// Resolution used when writing files.
pub const DEFAULT_TICKS_PER_BEAT: u16 = 480;
const DEFAULT_TEMPO: u32 = 500_000;
const DEFAULT_VELOCITY: u8 = 80;

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn err(&self, message: impl Into<String>) -> Error {
        Error::MidiParse {
            offset: self.pos,
            message: message.into(),
        }
    }

    fn remaining(&self) -> usize {
        self.bytes.len() - self.pos
    }

    fn u8(&mut self) -> Result<u8> {
        let b = *self
            .bytes
            .get(self.pos)
            .ok_or_else(|| self.err("unexpected end of data"))?;
        self.pos += 1;
        Ok(b)
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.remaining() < n {
            return Err(self.err(format!("need {n} bytes, {} left", self.remaining())));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u16(&mut self) -> Result<u16> {
        let b = self.take(2)?;
        Ok(u16::from_be_bytes([b[0], b[1]]))
    }

    fn u32(&mut self) -> Result<u32> {
        let b = self.take(4)?;
        Ok(u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
    }

    fn vlq(&mut self) -> Result<u32> {
        let start = self.pos;
        let mut value = 0u32;
        for _ in 0..4 {
            let b = self.u8()?;
            value = (value << 7) | u32::from(b & 0x7f);
            if b & 0x80 == 0 {
                return Ok(value);
            }
        }
        Err(Error::MidiParse {
            offset: start,
            message: "variable-length quantity longer than 4 bytes".into(),
        })
    }

    fn data_byte(&mut self) -> Result<u8> {
        let b = self.u8()?;
        if b & 0x80 != 0 {
            self.pos -= 1;
            return Err(self.err(format!("expected data byte, found status 0x{b:02x}")));
        }
        Ok(b)
    }
}

#[derive(Default)]
struct ParsedTrack {
    name: Option<String>,
    notes: Vec<TimedNote>,
    end_tick: u64,
    meter: Vec<(u64, u8, u8)>,
    tempo: Vec<TempoChange>,
}

fn parse_track(r: &mut Reader<'_>, end: usize) -> Result<ParsedTrack> {
    let mut out = ParsedTrack::default();
    let mut tick = 0u64;
    let mut running: Option<u8> = None;
    // (channel, pitch) -> queue of (onset, velocity)
    let mut open: HashMap<(u8, u8), VecDeque<(u64, u8)>> = HashMap::new();

    while r.pos < end {
        tick += u64::from(r.vlq()?);
        let first = r.u8()?;
        let status = if first & 0x80 != 0 {
            first
        } else {
            r.pos -= 1;
            running.ok_or_else(|| r.err("data byte without running status"))?
        };
        match status {
            0x80..=0xef => {
                running = Some(status);
                let channel = status & 0x0f;
                let kind = status & 0xf0;
                let a = r.data_byte()?;
                let b = if kind == 0xc0 || kind == 0xd0 {
                    0
                } else {
                    r.data_byte()?
                };
                let key = (channel, a);
                match kind {
                    0x90 if b > 0 => open.entry(key).or_default().push_back((tick, b)),
                    0x80 | 0x90 => {
                        if let Some((onset, velocity)) =
                            open.get_mut(&key).and_then(|q| q.pop_front())
                        {
                            out.notes.push(TimedNote {
                                onset,
                                duration: tick - onset,
                                pitch: a,
                                velocity,
                            });
                        }
                    }
                    _ => {}
                }
            }
            0xf0 | 0xf7 => {
                running = None;
                let len = r.vlq()? as usize;
                r.take(len)?;
            }
            0xff => {
                running = None;
                let kind = r.u8()?;
                let len = r.vlq()? as usize;
                let data_at = r.pos;
                let data = r.take(len)?;
                match kind {
                    0x03 => out.name = Some(String::from_utf8_lossy(data).into_owned()),
                    0x51 => {
                        if len != 3 {
                            return Err(Error::MidiParse {
                                offset: data_at,
                                message: format!("tempo event with length {len}"),
                            });
                        }
                        let micros = u32::from_be_bytes([0, data[0], data[1], data[2]]);
                        out.tempo.push(TempoChange {
                            tick,
                            micros_per_beat: micros,
                        });
                    }
                    0x58 => {
                        if len < 2 {
                            return Err(Error::MidiParse {
                                offset: data_at,
                                message: format!("time signature with length {len}"),
                            });
                        }
                        if data[1] > 7 {
                            return Err(Error::MidiParse {
                                offset: data_at + 1,
                                message: format!("time signature denominator 2^{}", data[1]),
                            });
                        }
                        out.meter.push((tick, data[0], 1u8 << data[1]));
                    }
                    0x2f => {
                        r.pos = end;
                        break;
                    }
                    _ => {}
                }
            }
            other => return Err(r.err(format!("invalid status byte 0x{other:02x} in track"))),
        }
    }
    out.end_tick = tick;
    // notes never switched off end with the track
    for ((_, pitch), queue) in open {
        for (onset, velocity) in queue {
            out.notes.push(TimedNote {
                onset,
                duration: tick - onset,
                pitch,
                velocity,
            });
        }
    }
    out.notes.sort_by_key(|n| (n.onset, n.pitch, n.duration));
    Ok(out)
}

/// Parses an in-memory Standard MIDI File.
///
/// Returns every track that holds notes or carries a name. A file with no
/// notes at all parses successfully; [`load_midi`] rejects it.
pub fn parse_smf(bytes: &[u8], song_id: &str) -> Result<Song> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(4)? != b"MThd" {
        return Err(Error::MidiParse {
            offset: 0,
            message: "missing MThd header".into(),
        });
    }
    let header_len = r.u32()? as usize;
    if header_len < 6 {
        return Err(r.err(format!("header length {header_len} < 6")));
    }
    let header_end = r
        .pos
        .checked_add(header_len)
        .filter(|&e| e <= bytes.len())
        .ok_or_else(|| r.err("header chunk runs past end of file"))?;
    let format = r.u16()?;
    let ntracks = r.u16()?;
    let division = r.u16()?;
    r.pos = header_end;
    match format {
        0 | 1 => {}
        2 => return Err(Error::UnsupportedMidi("format 2 (independent sequences)".into())),
        f => return Err(Error::UnsupportedMidi(format!("format {f}"))),
    }
    if division & 0x8000 != 0 {
        return Err(Error::UnsupportedMidi("SMPTE time division".into()));
    }
    if division == 0 {
        return Err(Error::MidiParse {
            offset: 12,
            message: "zero ticks per quarter note".into(),
        });
    }

    let mut parsed = Vec::new();
    while parsed.len() < usize::from(ntracks) && r.remaining() > 0 {
        let chunk_at = r.pos;
        let id = r.take(4)?;
        let len = r.u32()? as usize;
        let end = r
            .pos
            .checked_add(len)
            .filter(|&e| e <= bytes.len())
            .ok_or_else(|| Error::MidiParse {
                offset: chunk_at,
                message: format!("chunk length {len} runs past end of file"),
            })?;
        if id == b"MTrk" {
            parsed.push(parse_track(&mut r, end)?);
        }
        r.pos = end;
    }

    let end_tick = parsed.iter().map(|t| t.end_tick).max().unwrap_or(0);
    let mut raw_meter: Vec<(u64, u8, u8)> = parsed.iter().flat_map(|t| t.meter.clone()).collect();
    raw_meter.sort_by_key(|m| m.0);
    if raw_meter.first().map_or(true, |m| m.0 > 0) {
        raw_meter.insert(0, (0, 4, 4));
    }
    let meter = bar_numbers(&raw_meter, division);
    let mut tempo: Vec<TempoChange> = parsed.iter().flat_map(|t| t.tempo.clone()).collect();
    tempo.sort_by_key(|t| t.tick);
    if tempo.first().map_or(true, |t| t.tick > 0) {
        tempo.insert(
            0,
            TempoChange {
                tick: 0,
                micros_per_beat: DEFAULT_TEMPO,
            },
        );
    }

    let tracks = parsed
        .into_iter()
        .enumerate()
        .filter(|(_, t)| !t.notes.is_empty() || t.name.is_some())
        .map(|(i, t)| Track {
            name: t.name.unwrap_or_else(|| format!("track{i}")),
            notes: t.notes,
        })
        .collect();

    Ok(Song {
        id: song_id.to_string(),
        ticks_per_beat: division,
        tracks,
        meter,
        tempo,
        end_tick,
    })
}

fn bar_numbers(raw: &[(u64, u8, u8)], tpb: u16) -> Vec<MeterChange> {
    let mut out: Vec<MeterChange> = Vec::with_capacity(raw.len());
    for &(tick, numerator, denominator) in raw {
        let bar = match out.last() {
            None => 0,
            Some(prev) => {
                let bar_ticks = u64::from(tpb) * 4 * u64::from(prev.numerator.max(1))
                    / u64::from(prev.denominator.max(1));
                prev.bar + ((tick - prev.tick) / bar_ticks.max(1)) as u32
            }
        };
        // a later signature at the same tick replaces the earlier one
        if out.last().is_some_and(|p| p.tick == tick) {
            out.pop();
        }
        out.push(MeterChange {
            tick,
            bar,
            numerator,
            denominator,
        });
    }
    out
}

/// Reads and parses a MIDI file; the song id is the file stem.
pub fn load_midi(path: impl AsRef<Path>) -> Result<Song> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let id = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    let song = parse_smf(&bytes, &id)?;
    if song.note_count() == 0 {
        return Err(Error::EmptySong);
    }
    Ok(song)
}

fn push_vlq(out: &mut Vec<u8>, mut v: u32) {
    let mut stack = [0u8; 5];
    let mut n = 0;
    loop {
        stack[n] = (v & 0x7f) as u8;
        n += 1;
        v >>= 7;
        if v == 0 {
            break;
        }
    }
    for i in (0..n).rev() {
        out.push(if i > 0 { stack[i] | 0x80 } else { stack[i] });
    }
}

struct TrackWriter {
    bytes: Vec<u8>,
    tick: u64,
}

impl TrackWriter {
    fn new() -> Self {
        Self {
            bytes: Vec::new(),
            tick: 0,
        }
    }

    fn event(&mut self, tick: u64, data: &[u8]) {
        let delta = tick.saturating_sub(self.tick);
        push_vlq(&mut self.bytes, delta.min(0x0fff_ffff) as u32);
        self.tick = self.tick.max(tick);
        self.bytes.extend_from_slice(data);
    }

    fn meta(&mut self, tick: u64, kind: u8, data: &[u8]) {
        let mut ev = vec![0xff, kind];
        push_vlq(&mut ev, data.len() as u32);
        ev.extend_from_slice(data);
        self.event(tick, &ev);
    }

    fn finish(mut self, end_tick: u64, out: &mut Vec<u8>) {
        let end = end_tick.max(self.tick);
        self.meta(end, 0x2f, &[]);
        out.extend_from_slice(b"MTrk");
        out.extend_from_slice(&(self.bytes.len() as u32).to_be_bytes());
        out.extend_from_slice(&self.bytes);
    }
}

/// Allocates MIDI channels so that no two overlapping notes of equal pitch
/// share a channel; this keeps on/off pairing unambiguous on reload.
fn assign_channels(notes: &[TimedNote]) -> Vec<u8> {
    const CHANNELS: [u8; 15] = [0, 1, 2, 3, 4, 5, 6, 7, 8, 10, 11, 12, 13, 14, 15];
    let mut busy_until: HashMap<(u8, u8), u64> = HashMap::new();
    notes
        .iter()
        .map(|n| {
            let ch = CHANNELS
                .iter()
                .copied()
                .find(|&c| busy_until.get(&(c, n.pitch)).map_or(true, |&t| t <= n.onset))
                .unwrap_or(0);
            busy_until.insert((ch, n.pitch), n.onset + n.duration.max(1));
            ch
        })
        .collect()
}

/// Serializes a song as a format-1 SMF with a leading conductor track.
pub fn encode_smf(song: &Song) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(b"MThd");
    out.extend_from_slice(&6u32.to_be_bytes());
    out.extend_from_slice(&1u16.to_be_bytes());
    out.extend_from_slice(&((song.tracks.len() + 1) as u16).to_be_bytes());
    out.extend_from_slice(&song.ticks_per_beat.to_be_bytes());

    let mut conductor = TrackWriter::new();
    let tempo = if song.tempo.is_empty() {
        vec![TempoChange {
            tick: 0,
            micros_per_beat: DEFAULT_TEMPO,
        }]
    } else {
        song.tempo.clone()
    };
    let mut meta: Vec<(u64, u8, Vec<u8>)> = tempo
        .iter()
        .map(|t| (t.tick, 0x51, t.micros_per_beat.to_be_bytes()[1..].to_vec()))
        .collect();
    for m in &song.meter {
        let dd = m.denominator.max(1).trailing_zeros() as u8;
        meta.push((m.tick, 0x58, vec![m.numerator, dd, 24, 8]));
    }
    meta.sort_by_key(|m| m.0);
    for (tick, kind, data) in &meta {
        conductor.meta(*tick, *kind, data);
    }
    conductor.finish(song.end_tick, &mut out);

    for track in &song.tracks {
        let mut w = TrackWriter::new();
        w.meta(0, 0x03, track.name.as_bytes());
        let channels = assign_channels(&track.notes);
        // (tick, is_on, channel, pitch, velocity); offs sort before ons
        let mut events: Vec<(u64, bool, u8, u8, u8)> = Vec::with_capacity(track.notes.len() * 2);
        for (n, &ch) in track.notes.iter().zip(&channels) {
            events.push((n.onset, true, ch, n.pitch, n.velocity.clamp(1, 127)));
            events.push((n.onset + n.duration, false, ch, n.pitch, 0));
        }
        events.sort_by_key(|e| (e.0, e.1, e.2, e.3));
        for (tick, on, ch, pitch, vel) in events {
            if on {
                w.event(tick, &[0x90 | ch, pitch & 0x7f, vel]);
            } else {
                w.event(tick, &[0x80 | ch, pitch & 0x7f, 0]);
            }
        }
        w.finish(song.end_tick, &mut out);
    }
    out
}

pub fn write_song(path: impl AsRef<Path>, song: &Song) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, encode_smf(song)).map_err(|e| Error::io(path, e))
}

/// Lays consecutive segments back to back (8 beats each) on named tracks.
///
/// All tracks must hold the same number of segments or fewer; the song
/// length is set by the longest track.
pub fn segments_to_song(id: &str, tracks: &[(&str, &[Segment])]) -> Song {
    let tpb = u64::from(DEFAULT_TICKS_PER_BEAT);
    let step_ticks = tpb / STEPS_PER_BEAT as u64;
    let segment_ticks = tpb * BEATS_PER_SEGMENT as u64;
    let n_segments = tracks.iter().map(|(_, s)| s.len()).max().unwrap_or(0);
    let tracks = tracks
        .iter()
        .map(|(name, segs)| Track {
            name: name.to_string(),
            notes: segs
                .iter()
                .enumerate()
                .flat_map(|(k, seg)| {
                    seg.notes().iter().map(move |n| TimedNote {
                        onset: k as u64 * segment_ticks + u64::from(n.onset) * step_ticks,
                        duration: u64::from(n.duration) * step_ticks,
                        pitch: n.pitch,
                        velocity: DEFAULT_VELOCITY,
                    })
                })
                .collect(),
        })
        .collect();
    Song {
        id: id.to_string(),
        ticks_per_beat: DEFAULT_TICKS_PER_BEAT,
        tracks,
        meter: vec![MeterChange {
            tick: 0,
            bar: 0,
            numerator: 4,
            denominator: 4,
        }],
        tempo: vec![TempoChange {
            tick: 0,
            micros_per_beat: DEFAULT_TEMPO,
        }],
        end_tick: n_segments as u64 * segment_ticks,
    }
}

/// Writes segments as a format-1 MIDI file, one named track per entry.
pub fn write_segments(path: impl AsRef<Path>, tracks: &[(&str, &[Segment])]) -> Result<()> {
    let id = path
        .as_ref()
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    write_song(path, &segments_to_song(&id, tracks))
}
