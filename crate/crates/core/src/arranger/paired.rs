//! Melody/accompaniment pairing: the manifest format and 16-bar samples.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::UNITS_PER_SAMPLE;
use crate::score::{segment_song, Segment, SegmentOptions, SongRecord, Song};
use crate::{Error, Result, BEATS_PER_SEGMENT};

fn default_melody() -> Vec<String> {
    vec!["MELODY".into()]
}

fn default_accompaniment() -> Vec<String> {
    vec!["PIANO".into()]
}

/// One song of a paired corpus: which tracks form the melody and which
/// form the accompaniment.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PairedSong {
    pub file: String,
    #[serde(default)]
    pub id: Option<String>,
    #[serde(default = "default_melody")]
    pub melody: Vec<String>,
    #[serde(default = "default_accompaniment")]
    pub accompaniment: Vec<String>,
}

impl PairedSong {
    pub fn song_id(&self) -> String {
        self.id.clone().unwrap_or_else(|| {
            Path::new(&self.file)
                .file_stem()
                .map_or_else(|| self.file.clone(), |s| s.to_string_lossy().into_owned())
        })
    }
}

/// A TOML list of `[[song]]` tables.
///
/// ```toml
/// [[song]]
/// file = "001.mid"
/// melody = ["MELODY"]
/// accompaniment = ["PIANO", "BRIDGE"]
/// ```
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PairedManifest {
    #[serde(default, rename = "song")]
    pub songs: Vec<PairedSong>,
}

impl PairedManifest {
    pub fn from_toml(text: &str) -> Result<Self> {
        let m: Self = toml::from_str(text).map_err(|e| Error::Config(format!("paired manifest: {e}")))?;
        for (i, s) in m.songs.iter().enumerate() {
            if s.file.is_empty() {
                return Err(Error::Config(format!("paired manifest: song {i} has an empty file name")));
            }
            if s.accompaniment.is_empty() {
                return Err(Error::Config(format!(
                    "paired manifest: song {i} lists no accompaniment tracks"
                )));
            }
        }
        Ok(m)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text)
    }
}

/// Four consecutive 2-bar units of accompaniment with the melody over
/// them, if the song has one.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PairedSample {
    pub song_id: String,
    pub start_beat: u32,
    pub melody: Option<Vec<Segment>>,
    pub accompaniment: Vec<Segment>,
}

/// Cuts `song` into non-overlapping 16-bar samples. Samples whose melody
/// tracks are absent carry `melody: None`.
pub fn paired_samples(song: &Song, melody: &[String], accompaniment: &[String]) -> Vec<PairedSample> {
    let opts = |tracks: &[String]| SegmentOptions {
        hop_beats: BEATS_PER_SEGMENT as u32,
        offset_beats: 0,
        tracks: Some(tracks.to_vec()),
    };
    let acc = segment_song(song, &opts(accompaniment)).segments;
    let has_melody = song.tracks.iter().any(|t| melody.contains(&t.name) && !t.notes.is_empty());
    let mel = has_melody.then(|| segment_song(song, &opts(melody)).segments);
    let units = mel.as_ref().map_or(acc.len(), |m| m.len().min(acc.len()));
    (0..units / UNITS_PER_SAMPLE)
        .map(|w| {
            let range = w * UNITS_PER_SAMPLE..(w + 1) * UNITS_PER_SAMPLE;
            PairedSample {
                song_id: song.id.clone(),
                start_beat: acc[range.start].source.start_beat,
                melody: mel.as_ref().map(|m| m[range.clone()].to_vec()),
                accompaniment: acc[range].to_vec(),
            }
        })
        .collect()
}

/// Samples from preprocessed streams. Windows start on 32-beat boundaries
/// and need all four accompaniment units present.
pub fn paired_samples_from_record(record: &SongRecord, melody: &str, accompaniment: &str) -> Vec<PairedSample> {
    let Some(acc) = record.stream(accompaniment) else {
        return Vec::new();
    };
    let by_beat = |segs: &[Segment]| -> BTreeMap<u32, Segment> {
        segs.iter().map(|s| (s.source.start_beat, s.clone())).collect()
    };
    let acc = by_beat(&acc.segments);
    let mel = record.stream(melody).map(|m| by_beat(&m.segments));
    let unit = BEATS_PER_SEGMENT as u32;
    let span = unit * UNITS_PER_SAMPLE as u32;
    let last = acc.keys().next_back().copied().unwrap_or(0);
    let mut out = Vec::new();
    let mut start = 0;
    while start <= last {
        let beats: Vec<u32> = (0..UNITS_PER_SAMPLE as u32).map(|k| start + k * unit).collect();
        if let Some(a) = beats.iter().map(|b| acc.get(b).cloned()).collect::<Option<Vec<_>>>() {
            let m = mel
                .as_ref()
                .and_then(|m| beats.iter().map(|b| m.get(b).cloned()).collect::<Option<Vec<_>>>());
            out.push(PairedSample {
                song_id: record.song_id.clone(),
                start_beat: start,
                melody: m,
                accompaniment: a,
            });
        }
        start += span;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::score::Stream;
    use crate::synth::{generate_song, SynthOptions};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn manifest_defaults_and_errors() {
        let m = PairedManifest::from_toml(
            r#"
            [[song]]
            file = "pop/001.mid"

            [[song]]
            file = "b.mid"
            id = "bee"
            melody = ["lead"]
            accompaniment = ["piano", "bridge"]
            "#,
        )
        .unwrap();
        assert_eq!(m.songs.len(), 2);
        assert_eq!(m.songs[0].song_id(), "001");
        assert_eq!(m.songs[0].melody, ["MELODY"]);
        assert_eq!(m.songs[1].song_id(), "bee");
        assert!(PairedManifest::from_toml("[[song]]\nfile = \"\"").is_err());
        assert!(PairedManifest::from_toml("[[song]]\nfile = \"a\"\naccompaniment = []").is_err());
        assert!(PairedManifest::from_toml("[[song]]\nfile = \"a\"\ncolour = 1").is_err());
        assert_eq!(PairedManifest::from_toml("").unwrap().songs.len(), 0);
    }

    #[test]
    fn samples_cover_sixteen_bars() {
        let song = generate_song("s", &SynthOptions::default(), &mut ChaCha8Rng::seed_from_u64(1));
        let samples = paired_samples(&song, &["melody".into()], &["piano".into()]);
        assert_eq!(samples.len(), 2);
        assert_eq!(samples[1].start_beat, 32);
        assert!(samples.iter().all(|s| s.melody.as_ref().unwrap().len() == 4 && s.accompaniment.len() == 4));
        let none = paired_samples(&song, &["vocals".into()], &["piano".into()]);
        assert!(none.iter().all(|s| s.melody.is_none()));

        let record = SongRecord {
            song_id: "s".into(),
            streams: vec![
                Stream {
                    name: "piano".into(),
                    segments: samples.iter().flat_map(|s| s.accompaniment.clone()).collect(),
                },
                Stream {
                    name: "melody".into(),
                    segments: samples.iter().flat_map(|s| s.melody.clone().unwrap()).collect(),
                },
            ],
        };
        assert_eq!(paired_samples_from_record(&record, "melody", "piano"), samples);
    }
}
