//! Per-song segment records.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic      b"PDSG"
//! version    u16                       (currently 1)
//! song_id    u16 length + UTF-8 bytes
//! streams    u16 count, then per stream:
//!   name     u16 length + UTF-8 bytes
//!   segments u32 count, then per segment:
//!     start_beat u32
//!     notes      u16 count, then per note: onset u8, pitch u8, duration u8
//! ```
//!
//! Notes inside a segment must satisfy the [`Segment`] invariants; the
//! decoder rejects anything else rather than silently normalizing it.

use std::path::{Path, PathBuf};

use super::{segment_song, NoteEvent, Segment, SegmentOptions, SegmentSource, Song};
use crate::{Error, Result};

pub const RECORD_MAGIC: &[u8; 4] = b"PDSG";
pub const RECORD_VERSION: u16 = 1;

/// A named sequence of consecutive segments, e.g. `"piano"` or `"melody"`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Stream {
    pub name: String,
    pub segments: Vec<Segment>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SongRecord {
    pub song_id: String,
    pub streams: Vec<Stream>,
}

impl SongRecord {
    pub fn stream(&self, name: &str) -> Option<&Stream> {
        self.streams.iter().find(|s| s.name == name)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(RECORD_MAGIC);
        out.extend_from_slice(&RECORD_VERSION.to_le_bytes());
        put_str(&mut out, &self.song_id);
        out.extend_from_slice(&(self.streams.len() as u16).to_le_bytes());
        for stream in &self.streams {
            put_str(&mut out, &stream.name);
            out.extend_from_slice(&(stream.segments.len() as u32).to_le_bytes());
            for seg in &stream.segments {
                out.extend_from_slice(&seg.source.start_beat.to_le_bytes());
                out.extend_from_slice(&(seg.len() as u16).to_le_bytes());
                for n in seg.notes() {
                    out.extend_from_slice(&[n.onset as u8, n.pitch, n.duration as u8]);
                }
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut c = Cursor { bytes, pos: 0 };
        if c.take(4)? != RECORD_MAGIC {
            return Err(Error::decode("segment record", 0, "bad magic"));
        }
        let version = c.u16()?;
        if version != RECORD_VERSION {
            return Err(Error::decode(
                "segment record",
                4,
                format!("unsupported version {version}"),
            ));
        }
        let song_id = c.string()?;
        let n_streams = c.u16()?;
        let mut streams = Vec::with_capacity(usize::from(n_streams).min(64));
        for _ in 0..n_streams {
            let name = c.string()?;
            let n_segments = c.u32()? as usize;
            let mut segments = Vec::with_capacity(n_segments.min(c.remaining() / 6));
            for _ in 0..n_segments {
                let start_beat = c.u32()?;
                let n_notes = usize::from(c.u16()?);
                let at = c.pos;
                let raw = c.take(n_notes * 3)?;
                let notes: Vec<NoteEvent> = raw
                    .chunks_exact(3)
                    .map(|b| NoteEvent::new(u32::from(b[0]), b[1], u32::from(b[2])))
                    .collect();
                let seg = Segment::new(notes.iter().copied(), SegmentSource::new(&song_id, start_beat));
                if seg.notes() != notes.as_slice() {
                    return Err(Error::decode(
                        "segment record",
                        at,
                        "notes violate segment invariants",
                    ));
                }
                segments.push(seg);
            }
            streams.push(Stream { name, segments });
        }
        if c.remaining() != 0 {
            return Err(Error::decode("segment record", c.pos, "trailing bytes"));
        }
        Ok(Self { song_id, streams })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}

/// File extension of saved records.
pub const RECORD_EXTENSION: &str = "pdsg";

impl SongRecord {
    /// Segments `song` once per `(stream name, track names)` pair. An empty
    /// track list takes every track.
    pub fn from_song(song: &Song, streams: &[(&str, &[String])], hop_beats: u32) -> Self {
        let streams = streams
            .iter()
            .map(|(name, tracks)| Stream {
                name: (*name).to_string(),
                segments: segment_song(
                    song,
                    &SegmentOptions {
                        hop_beats,
                        offset_beats: 0,
                        tracks: (!tracks.is_empty()).then(|| tracks.to_vec()),
                    },
                )
                .segments,
            })
            .collect();
        Self {
            song_id: song.id.clone(),
            streams,
        }
    }

    /// Every `*.pdsg` record directly inside `dir`, in file-name order.
    pub fn load_dir(dir: impl AsRef<Path>) -> Result<Vec<Self>> {
        let dir = dir.as_ref();
        let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)
            .map_err(|e| Error::io(dir, e))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.is_file() && p.extension().is_some_and(|x| x == RECORD_EXTENSION))
            .collect();
        paths.sort();
        paths.iter().map(Self::load).collect()
    }
}

fn put_str(out: &mut Vec<u8>, s: &str) {
    let b = &s.as_bytes()[..s.len().min(u16::MAX as usize)];
    out.extend_from_slice(&(b.len() as u16).to_le_bytes());
    out.extend_from_slice(b);
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn remaining(&self) -> usize {
        self.bytes.len() - self.pos
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.remaining() < n {
            return Err(Error::decode(
                "segment record",
                self.pos,
                format!("need {n} bytes, {} left", self.remaining()),
            ));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u16(&mut self) -> Result<u16> {
        let b = self.take(2)?;
        Ok(u16::from_le_bytes([b[0], b[1]]))
    }

    fn u32(&mut self) -> Result<u32> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }

    fn string(&mut self) -> Result<String> {
        let len = usize::from(self.u16()?);
        let at = self.pos;
        let b = self.take(len)?;
        String::from_utf8(b.to_vec()).map_err(|_| Error::decode("segment record", at, "invalid UTF-8"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn arb_record() -> impl Strategy<Value = SongRecord> {
        let seg = (0u32..1000, prop::collection::vec((0u32..32, 0u8..128, 1u32..33), 0..20)).prop_map(
            |(start, notes)| {
                Segment::new(
                    notes.into_iter().map(|(o, p, d)| NoteEvent::new(o, p, d)),
                    SegmentSource::new("song", start),
                )
            },
        );
        prop::collection::vec(("[a-z]{1,8}", prop::collection::vec(seg, 0..5)), 0..3).prop_map(|streams| {
            SongRecord {
                song_id: "song".into(),
                streams: streams
                    .into_iter()
                    .map(|(name, segments)| Stream { name, segments })
                    .collect(),
            }
        })
    }

    proptest! {
        #[test]
        fn round_trip(rec in arb_record()) {
            prop_assert_eq!(SongRecord::from_bytes(&rec.to_bytes()).unwrap(), rec);
        }
    }

    #[test]
    fn rejects_unsorted_notes() {
        let rec = SongRecord {
            song_id: "s".into(),
            streams: vec![Stream {
                name: "piano".into(),
                segments: vec![Segment::from_notes([NoteEvent::new(0, 60, 4), NoteEvent::new(0, 64, 4)])],
            }],
        };
        let mut bytes = rec.to_bytes();
        let n = bytes.len();
        bytes.swap(n - 5, n - 2); // swap pitches of the two notes
        assert!(matches!(SongRecord::from_bytes(&bytes), Err(Error::Decode { .. })));
        assert!(SongRecord::from_bytes(&bytes[..n - 1]).is_err());
        assert!(SongRecord::from_bytes(b"PDSG\x02\x00").is_err());
    }

    #[test]
    fn directory_round_trip() {
        let song = crate::synth::generate_corpus(1, &Default::default(), 3).remove(0);
        let rec = SongRecord::from_song(&song, &[("piano", &["piano".to_string()]), ("all", &[])], 8);
        assert_eq!(rec.stream("piano").unwrap().segments.len(), 8);
        assert!(rec.stream("all").unwrap().segments[0].len() > rec.stream("piano").unwrap().segments[0].len());
        let dir = tempfile::tempdir().unwrap();
        rec.save(dir.path().join("b.pdsg")).unwrap();
        SongRecord { song_id: "a".into(), streams: vec![] }.save(dir.path().join("a.pdsg")).unwrap();
        std::fs::write(dir.path().join("notes.txt"), "x").unwrap();
        let all = SongRecord::load_dir(dir.path()).unwrap();
        assert_eq!(all.len(), 2);
        assert_eq!(all[1], rec);
    }
}
