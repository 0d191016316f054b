use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::config::{EvalSplit, DATA_ROOT_ENV};

/// Chord/texture disentanglement for polyphonic piano music.
#[derive(Debug, Parser)]
#[command(name = "polydis", version, about, propagate_version = true)]
pub struct Cli {
    /// TOML configuration; flags override its values.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,

    /// Directory that relative input paths are resolved against.
    #[arg(long, global = true, env = DATA_ROOT_ENV, value_name = "DIR")]
    pub data_root: Option<PathBuf>,

    /// Log more (repeat for debug output).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Convert MIDI files into segment records.
    Preprocess(PreprocessArgs),
    /// Train the chord/texture VAE on segment records.
    Train(TrainArgs),
    /// Train the melody-to-accompaniment arranger against a trained VAE.
    TrainArranger(TrainArrangerArgs),
    /// Swap chords and textures between two pieces, unit by unit.
    ///
    /// A unit is 8 beats: 2 bars of 4/4 or 4 bars of 2/4. A trailing
    /// partial unit is dropped.
    Transfer(TransferArgs),
    /// Re-sample the texture of a piece while keeping its chords.
    Vary(VaryArgs),
    /// Generate accompaniments for a chord progression from the prior.
    Sample(SampleArgs),
    /// Arrange an accompaniment for a melody.
    Arrange(ArrangeArgs),
    /// Run disentanglement sweeps and reconstruction metrics.
    Evaluate(EvaluateArgs),
    /// Write segment records back to MIDI, optionally with their latents.
    Export(ExportArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Preprocess(_) => "preprocess",
            Command::Train(_) => "train",
            Command::TrainArranger(_) => "train-arranger",
            Command::Transfer(_) => "transfer",
            Command::Vary(_) => "vary",
            Command::Sample(_) => "sample",
            Command::Arrange(_) => "arrange",
            Command::Evaluate(_) => "evaluate",
            Command::Export(_) => "export",
        }
    }
}

#[derive(Debug, Args)]
pub struct OutArg {
    /// Output directory, created if missing.
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct PreprocessArgs {
    /// Directory of .mid/.midi files.
    #[arg(long, value_name = "DIR")]
    pub input: PathBuf,
    /// Paired-corpus manifest naming melody and accompaniment tracks per song.
    #[arg(long, value_name = "FILE")]
    pub manifest: Option<PathBuf>,
    /// Beats between consecutive segment starts.
    #[arg(long, value_name = "N")]
    pub hop_beats: Option<u32>,
    /// Tracks forming the melody stream (comma-separated).
    #[arg(long, value_delimiter = ',', value_name = "NAMES")]
    pub melody_tracks: Option<Vec<String>>,
    /// Tracks forming the piano stream (comma-separated; default every track).
    #[arg(long, value_delimiter = ',', value_name = "NAMES")]
    pub accompaniment_tracks: Option<Vec<String>>,
    #[command(flatten)]
    pub out: OutArg,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum VaePreset {
    /// Latent 8, hidden 16; for tests.
    Tiny,
    /// Latent 32; trains on one CPU in minutes.
    Small,
    /// The published widths (latent 256).
    Full,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Directory of segment records.
    #[arg(long, value_name = "DIR")]
    pub data: Option<PathBuf>,
    /// Passes over the training data.
    #[arg(long, value_name = "N")]
    pub epochs: Option<usize>,
    /// Segments per optimizer step.
    #[arg(long, value_name = "N")]
    pub batch_size: Option<usize>,
    /// Random seed.
    #[arg(long, value_name = "N")]
    pub seed: Option<u64>,
    /// Stop after this many optimizer steps.
    #[arg(long, value_name = "N")]
    pub max_steps: Option<usize>,
    /// Transposed copies per training segment (1 to 12).
    #[arg(long, value_name = "N")]
    pub transpositions: Option<usize>,
    /// Model widths; replaces the config's model section.
    #[arg(long, value_enum)]
    pub preset: Option<VaePreset>,
    /// Continue from a training checkpoint.
    #[arg(long, value_name = "CKPT")]
    pub resume: Option<PathBuf>,
    #[command(flatten)]
    pub out: OutArg,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum ArrangerPreset {
    /// Hidden 32, 2 layers.
    Toy,
    /// Hidden 256, 4 layers, 8 heads.
    Full,
}

#[derive(Debug, Args)]
pub struct TrainArrangerArgs {
    /// Trained VAE checkpoint supplying the targets.
    #[arg(long, value_name = "CKPT")]
    pub vae: PathBuf,
    /// Directory of segment records with melody and piano streams.
    #[arg(long, value_name = "DIR")]
    pub data: PathBuf,
    /// Passes over the training data.
    #[arg(long, value_name = "N")]
    pub epochs: Option<usize>,
    /// Segments per optimizer step.
    #[arg(long, value_name = "N")]
    pub batch_size: Option<usize>,
    /// Random seed.
    #[arg(long, value_name = "N")]
    pub seed: Option<u64>,
    /// Model widths; replaces the config's arranger section.
    #[arg(long, value_enum)]
    pub preset: Option<ArrangerPreset>,
    /// Record stream holding the melody.
    #[arg(long, default_value = "melody", value_name = "NAME")]
    pub melody_stream: String,
    /// Record stream holding the accompaniment.
    #[arg(long, default_value = "piano", value_name = "NAME")]
    pub accompaniment_stream: String,
    #[command(flatten)]
    pub out: OutArg,
}

#[derive(Debug, Args)]
pub struct TransferArgs {
    /// VAE checkpoint.
    #[arg(long, value_name = "CKPT")]
    pub checkpoint: PathBuf,
    /// First piece.
    #[arg(long, value_name = "MIDI")]
    pub a: PathBuf,
    /// Second piece.
    #[arg(long, value_name = "MIDI")]
    pub b: PathBuf,
    /// Tracks read from both pieces (comma-separated; default every track).
    #[arg(long, value_delimiter = ',', value_name = "NAMES")]
    pub tracks: Option<Vec<String>>,
    /// Beat at which the first 8-beat unit starts.
    #[arg(long, default_value_t = 0, value_name = "BEATS")]
    pub offset_beats: u32,
    #[command(flatten)]
    pub out: OutArg,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum VaryMode {
    /// Sample the texture latent from the piece's own posterior.
    Posterior,
    /// Sample the texture latent from the standard normal prior.
    Prior,
}

#[derive(Debug, Args)]
pub struct VaryArgs {
    /// VAE checkpoint.
    #[arg(long, value_name = "CKPT")]
    pub checkpoint: PathBuf,
    /// Piece whose chords are kept.
    #[arg(long, value_name = "MIDI")]
    pub input: PathBuf,
    /// Number of variations.
    #[arg(long, value_name = "N")]
    pub n: Option<usize>,
    /// Random seed.
    #[arg(long, value_name = "N")]
    pub seed: Option<u64>,
    /// Where texture latents are drawn from.
    #[arg(long, value_enum, default_value = "posterior")]
    pub mode: VaryMode,
    /// Tracks read from the input (comma-separated; default every track).
    #[arg(long, value_delimiter = ',', value_name = "NAMES")]
    pub tracks: Option<Vec<String>>,
    /// Beat at which the first 8-beat unit starts.
    #[arg(long, default_value_t = 0, value_name = "BEATS")]
    pub offset_beats: u32,
    #[command(flatten)]
    pub out: OutArg,
}

#[derive(Debug, Args)]
pub struct SampleArgs {
    /// VAE checkpoint.
    #[arg(long, value_name = "CKPT")]
    pub checkpoint: PathBuf,
    /// Chord symbols, e.g. "C Am F G"; they must fill whole 8-beat units.
    #[arg(long, value_name = "SYMBOLS")]
    pub chords: String,
    /// Beats per chord symbol.
    #[arg(long, value_name = "N")]
    pub beats_per_chord: Option<usize>,
    /// Number of samples.
    #[arg(long, value_name = "N")]
    pub n: Option<usize>,
    /// Random seed.
    #[arg(long, value_name = "N")]
    pub seed: Option<u64>,
    #[command(flatten)]
    pub out: OutArg,
}

#[derive(Debug, Args)]
pub struct ArrangeArgs {
    /// Trained VAE checkpoint.
    #[arg(long, value_name = "CKPT")]
    pub vae: PathBuf,
    /// Trained arranger checkpoint.
    #[arg(long, value_name = "CKPT")]
    pub arranger: PathBuf,
    /// MIDI file holding the melody.
    #[arg(long, value_name = "MIDI")]
    pub melody: PathBuf,
    /// Melody tracks in that file (comma-separated; default every track).
    #[arg(long, value_delimiter = ',', value_name = "NAMES")]
    pub melody_tracks: Option<Vec<String>>,
    /// Chords to force, one symbol per --beats-per-chord beats.
    #[arg(long, value_name = "SYMBOLS")]
    pub chords: Option<String>,
    /// Beats per chord symbol.
    #[arg(long, value_name = "N")]
    pub beats_per_chord: Option<usize>,
    /// Accompaniment whose opening units are kept.
    #[arg(long, value_name = "MIDI")]
    pub prefix: Option<PathBuf>,
    /// How many 8-beat units of --prefix to keep.
    #[arg(long, default_value_t = 1, value_name = "N")]
    pub prefix_units: usize,
    #[command(flatten)]
    pub out: OutArg,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Sweep {
    Transpose,
    Perturb,
    All,
    None,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    /// VAE checkpoint.
    #[arg(long, value_name = "CKPT")]
    pub checkpoint: PathBuf,
    /// Directory of segment records.
    #[arg(long, value_name = "DIR")]
    pub data: PathBuf,
    /// Record stream to evaluate.
    #[arg(long, default_value = "piano", value_name = "NAME")]
    pub stream: String,
    /// Which augmentation sweeps to run.
    #[arg(long, value_enum, default_value = "all")]
    pub sweep: Sweep,
    /// Which songs form the test set.
    #[arg(long, value_enum)]
    pub split: Option<EvalSplit>,
    /// Probabilities for the perturbation sweeps (comma-separated).
    #[arg(long, value_delimiter = ',', value_name = "P")]
    pub probabilities: Option<Vec<f64>>,
    /// Base seed of the per-segment augmentation draws.
    #[arg(long, value_name = "N")]
    pub seed: Option<u64>,
    #[command(flatten)]
    pub out: OutArg,
}

#[derive(Debug, Args)]
pub struct ExportArgs {
    /// Directory of segment records.
    #[arg(long, value_name = "DIR")]
    pub data: PathBuf,
    /// Record stream to export.
    #[arg(long, default_value = "piano", value_name = "NAME")]
    pub stream: String,
    /// Also write posterior-mean latents per segment.
    #[arg(long, value_name = "CKPT")]
    pub checkpoint: Option<PathBuf>,
    #[command(flatten)]
    pub out: OutArg,
}
