use std::fs;
use std::path::{Path, PathBuf};

use polydis::arranger::{
    paired_samples_from_record, train_arranger, ArrangeOptions, Arranger, ArrangerConfig, PairedManifest,
};
use polydis::chord::progressions_from_symbols;
use polydis::control::{prior_pairs, style_transfer};
use polydis::eval::{
    delta_sweep_perturb, delta_sweep_transpose, reconstruction_report, save_delta_csv, write_reconstruction_csv,
};
use polydis::nn::Checkpoint;
use polydis::score::{load_midi, segment_song, write_segments, Segment, SegmentOptions, SegmentSource, SongRecord};
use polydis::trainer::{build_corpus, Trainer};
use polydis::vae::{ChordTextureVae, VaeConfig};
use polydis::{Error, BEATS_PER_SEGMENT};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use crate::args::*;
use crate::config::{CliConfig, EvalSplit, Paths};
use crate::error::{CliError, CliResult};
use crate::manifest::RunManifest;

pub struct Context {
    pub config: CliConfig,
    pub paths: Paths,
}

pub fn run(ctx: &Context, command: &Command) -> CliResult<RunManifest> {
    match command {
        Command::Preprocess(a) => preprocess(ctx, a),
        Command::Train(a) => train(ctx, a),
        Command::TrainArranger(a) => train_arranger_cmd(ctx, a),
        Command::Transfer(a) => transfer(ctx, a),
        Command::Vary(a) => vary(ctx, a),
        Command::Sample(a) => sample(ctx, a),
        Command::Arrange(a) => arrange(ctx, a),
        Command::Evaluate(a) => evaluate(ctx, a),
        Command::Export(a) => export(ctx, a),
    }
}

/// Output directory of a command.
pub fn out_dir(command: &Command) -> &Path {
    match command {
        Command::Preprocess(a) => &a.out.out,
        Command::Train(a) => &a.out.out,
        Command::TrainArranger(a) => &a.out.out,
        Command::Transfer(a) => &a.out.out,
        Command::Vary(a) => &a.out.out,
        Command::Sample(a) => &a.out.out,
        Command::Arrange(a) => &a.out.out,
        Command::Evaluate(a) => &a.out.out,
        Command::Export(a) => &a.out.out,
    }
}

fn json<T: Serialize>(v: &T) -> serde_json::Value {
    serde_json::to_value(v).expect("config serializes")
}

fn make_dir(dir: &Path) -> CliResult<()> {
    fs::create_dir_all(dir).map_err(|e| {
        CliError::data(
            format!("cannot create output directory {}: {e}", dir.display()),
            "choose a writable --out directory",
        )
    })
}

fn load_vae(path: &Path) -> CliResult<ChordTextureVae> {
    if !path.is_file() {
        return Err(CliError::data(
            format!("checkpoint {} not found", path.display()),
            "pass a VAE checkpoint written by `polydis train` (e.g. <out>/last.ckpt)",
        ));
    }
    ChordTextureVae::load(path).map_err(|e| CliError::from(e).hint("pass a VAE checkpoint written by `polydis train`"))
}

fn load_arranger(path: &Path) -> CliResult<Arranger> {
    if !path.is_file() {
        return Err(CliError::data(
            format!("checkpoint {} not found", path.display()),
            "pass an arranger checkpoint written by `polydis train-arranger`",
        ));
    }
    Arranger::load(path).map_err(|e| CliError::from(e).hint("pass an arranger checkpoint written by `polydis train-arranger`"))
}

/// 8-beat units of a MIDI file, back to back from `offset` beats.
fn read_piece(path: &Path, tracks: Option<&[String]>, offset: u32) -> CliResult<Vec<Segment>> {
    let song = load_midi(path)?;
    let segs = segment_song(
        &song,
        &SegmentOptions {
            hop_beats: BEATS_PER_SEGMENT as u32,
            offset_beats: offset,
            tracks: tracks.filter(|t| !t.is_empty()).map(<[String]>::to_vec),
        },
    );
    if segs.skipped > 0 {
        return Err(Error::UnsupportedMidi(format!("{}: only 2/4 and 4/4 meters are supported", path.display())).into());
    }
    if segs.segments.iter().all(Segment::is_empty) {
        return Err(CliError::data(
            format!("{} has no notes on the selected tracks", path.display()),
            "check the track names with --tracks",
        ));
    }
    Ok(segs.segments)
}

fn load_records(dir: &Path) -> CliResult<Vec<SongRecord>> {
    if !dir.is_dir() {
        return Err(CliError::data(
            format!("data directory {} not found", dir.display()),
            "run `polydis preprocess` first or set --data / POLYDIS_DATA_ROOT",
        ));
    }
    Ok(SongRecord::load_dir(dir)?)
}

fn write_midi(path: PathBuf, segs: &[Segment], manifest: &mut RunManifest) -> CliResult<()> {
    write_segments(&path, &[("piano", segs)])?;
    manifest.outputs.push(path);
    Ok(())
}

fn write_json<T: Serialize>(path: PathBuf, value: &T, manifest: &mut RunManifest) -> CliResult<()> {
    let text = serde_json::to_string_pretty(value).expect("serializes") + "\n";
    fs::write(&path, text).map_err(|e| Error::Io { path: path.clone(), source: e })?;
    manifest.outputs.push(path);
    Ok(())
}

fn is_midi(p: &Path) -> bool {
    p.extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| e.eq_ignore_ascii_case("mid") || e.eq_ignore_ascii_case("midi"))
}

fn preprocess(ctx: &Context, a: &PreprocessArgs) -> CliResult<RunManifest> {
    let mut cfg = ctx.config.preprocess.clone();
    if let Some(h) = a.hop_beats {
        cfg.hop_beats = h;
    }
    if let Some(t) = &a.melody_tracks {
        cfg.melody_tracks = t.clone();
    }
    if let Some(t) = &a.accompaniment_tracks {
        cfg.accompaniment_tracks = t.clone();
    }
    if cfg.hop_beats == 0 {
        return Err(CliError::usage("hop_beats must be positive", "pass --hop-beats 1 or more"));
    }
    let input = ctx.paths.input(&a.input);
    if !input.is_dir() {
        return Err(CliError::data(
            format!("input directory {} not found", input.display()),
            "pass a directory of MIDI files to --input",
        ));
    }
    let mut manifest = RunManifest::new("preprocess", json(&cfg), None);
    // (file, song id, melody tracks, accompaniment tracks)
    let jobs: Vec<(PathBuf, Option<String>, Vec<String>, Vec<String>)> = match &a.manifest {
        Some(m) => {
            let path = ctx.paths.input(m);
            manifest.inputs.push(path.clone());
            PairedManifest::load(&path)?
                .songs
                .into_iter()
                .map(|s| (input.join(&s.file), Some(s.song_id()), s.melody, s.accompaniment))
                .collect()
        }
        None => {
            let mut files: Vec<PathBuf> = fs::read_dir(&input)
                .map_err(|e| Error::Io { path: input.clone(), source: e })?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| p.is_file() && is_midi(p))
                .collect();
            files.sort();
            files
                .into_iter()
                .map(|f| (f, None, cfg.melody_tracks.clone(), cfg.accompaniment_tracks.clone()))
                .collect()
        }
    };
    manifest.inputs.push(input.clone());
    make_dir(&a.out.out)?;
    let (mut written, mut failed, mut skipped) = (0, 0, 0);
    for (file, id, melody, acc) in jobs {
        let mut song = match load_midi(&file) {
            Ok(s) => s,
            Err(e) => {
                log::warn!("skipping {}: {e}", file.display());
                failed += 1;
                continue;
            }
        };
        if let Some(id) = id {
            song.id = id;
        }
        let mut streams: Vec<(&str, &[String])> = vec![("piano", &acc)];
        if !melody.is_empty() {
            streams.push(("melody", &melody));
        }
        let record = SongRecord::from_song(&song, &streams, cfg.hop_beats);
        if record.streams[0].segments.is_empty() {
            log::warn!("skipping {}: no segments (unsupported meter or too short)", file.display());
            skipped += 1;
            continue;
        }
        let path = a.out.out.join(format!("{}.{}", song.id, polydis::score::RECORD_EXTENSION));
        record.save(&path)?;
        manifest.outputs.push(path);
        written += 1;
    }
    println!("preprocessed {written} songs ({skipped} skipped, {failed} unreadable)");
    if written == 0 {
        return Err(Error::EmptyCorpus.into());
    }
    Ok(manifest)
}

fn train(ctx: &Context, a: &TrainArgs) -> CliResult<RunManifest> {
    let mut cfg = ctx.config.train.clone();
    if let Some(v) = a.epochs {
        cfg.epochs = v;
    }
    if let Some(v) = a.batch_size {
        cfg.batch_size = v;
    }
    if let Some(v) = a.seed {
        cfg.seed = v;
    }
    if let Some(v) = a.max_steps {
        cfg.max_steps = Some(v);
    }
    if let Some(v) = a.transpositions {
        cfg.transpositions = v;
    }
    if let Some(p) = a.preset {
        cfg.model = match p {
            VaePreset::Tiny => VaeConfig::tiny(),
            VaePreset::Small => VaeConfig::small(),
            VaePreset::Full => VaeConfig::default(),
        };
    }
    if let Some(d) = &a.data {
        cfg.data_dir = Some(d.clone());
    }
    let data = cfg.data_dir.clone().map(|d| ctx.paths.input(&d)).ok_or_else(|| {
        CliError::usage(
            "no training data given",
            "pass --data DIR, set train.data_dir in the config, or set POLYDIS_DATA_ROOT",
        )
    })?;
    cfg.data_dir = Some(data.clone());
    cfg.out_dir = Some(a.out.out.clone());
    cfg.validate()?;

    let records = load_records(&data)?;
    let songs = records.into_iter().map(|r| {
        let segs = r.stream(&cfg.stream).map(|s| s.segments.clone()).unwrap_or_default();
        (r.song_id, segs)
    });
    let corpus = build_corpus(songs, cfg.split_fraction, cfg.transpositions, cfg.seed)?;
    let mut manifest = RunManifest::new("train", json(&cfg), Some(cfg.seed));
    manifest.inputs.push(data);
    make_dir(&a.out.out)?;
    let mut trainer = match &a.resume {
        Some(p) => {
            let path = ctx.paths.input(p);
            manifest.checkpoint(&path)?;
            Trainer::resume(&corpus, cfg.clone(), &Checkpoint::load(&path)?)?
        }
        None => {
            // a fresh run starts a fresh metrics log
            let _ = fs::remove_file(a.out.out.join("metrics.jsonl"));
            Trainer::new(&corpus, cfg.clone())?
        }
    };
    trainer = trainer.output_to(&a.out.out)?;
    let log = trainer.run()?;
    for (e, parts) in log.epoch_train.iter().enumerate() {
        println!("epoch {e}: train loss {:.4}", parts.total);
    }
    let last = a.out.out.join("last.ckpt");
    trainer.save(&last)?;
    manifest.outputs.push(a.out.out.join("metrics.jsonl"));
    manifest.outputs.push(last.clone());
    manifest.checkpoint(&last)?;
    println!("trained {} steps; checkpoint {}", trainer.state().step, last.display());
    Ok(manifest)
}

fn train_arranger_cmd(ctx: &Context, a: &TrainArrangerArgs) -> CliResult<RunManifest> {
    let vae_path = ctx.paths.input(&a.vae);
    let vae = load_vae(&vae_path)?;
    let mut cfg = match a.preset {
        Some(ArrangerPreset::Toy) => ArrangerConfig::toy(vae.latent_dim()),
        Some(ArrangerPreset::Full) => ArrangerConfig::default(),
        None => ctx.config.arranger.clone(),
    };
    cfg.latent_dim = vae.latent_dim();
    if let Some(v) = a.epochs {
        cfg.epochs = v;
    }
    if let Some(v) = a.batch_size {
        cfg.batch_size = v;
    }
    if let Some(v) = a.seed {
        cfg.seed = v;
    }
    cfg.validate()?;
    let data = ctx.paths.input(&a.data);
    let records = load_records(&data)?;
    let samples: Vec<_> = records
        .iter()
        .flat_map(|r| paired_samples_from_record(r, &a.melody_stream, &a.accompaniment_stream))
        .collect();
    let mut manifest = RunManifest::new("train-arranger", json(&cfg), Some(cfg.seed));
    manifest.inputs.push(data);
    manifest.checkpoint(&vae_path)?;
    make_dir(&a.out.out)?;
    let outcome = train_arranger(&samples, &vae, &cfg)?;
    for (e, l) in outcome.epoch_losses.iter().enumerate() {
        println!("epoch {e}: mse {l:.6}");
    }
    println!("{} samples skipped without a melody pairing", outcome.skipped);
    let ck = a.out.out.join("arranger.ckpt");
    outcome
        .model
        .to_checkpoint(serde_json::json!({ "skipped": outcome.skipped, "steps": outcome.steps }))
        .save(&ck)?;
    write_json(a.out.out.join("losses.json"), &outcome.epoch_losses, &mut manifest)?;
    manifest.outputs.push(ck.clone());
    manifest.checkpoint(&ck)?;
    Ok(manifest)
}

fn transfer(ctx: &Context, a: &TransferArgs) -> CliResult<RunManifest> {
    let ck = ctx.paths.input(&a.checkpoint);
    let vae = load_vae(&ck)?;
    let (pa, pb) = (ctx.paths.input(&a.a), ctx.paths.input(&a.b));
    let tracks = a.tracks.as_deref();
    let mut xa = read_piece(&pa, tracks, a.offset_beats)?;
    let mut xb = read_piece(&pb, tracks, a.offset_beats)?;
    let n = xa.len().min(xb.len());
    if xa.len() != xb.len() {
        log::warn!("pieces have {} and {} units; using the first {n}", xa.len(), xb.len());
    }
    xa.truncate(n);
    xb.truncate(n);
    let mut manifest = RunManifest::new("transfer", serde_json::json!({ "tracks": a.tracks, "offset_beats": a.offset_beats }), None);
    manifest.inputs.extend([pa, pb]);
    manifest.checkpoint(&ck)?;
    make_dir(&a.out.out)?;
    let a_chords = style_transfer(&vae, &xb, &xa)?;
    let b_chords = style_transfer(&vae, &xa, &xb)?;
    write_midi(a.out.out.join("a-chords_b-texture.mid"), &a_chords, &mut manifest)?;
    write_midi(a.out.out.join("b-chords_a-texture.mid"), &b_chords, &mut manifest)?;
    println!("wrote 2 transfers of {n} units");
    Ok(manifest)
}

fn vary(ctx: &Context, a: &VaryArgs) -> CliResult<RunManifest> {
    let ck = ctx.paths.input(&a.checkpoint);
    let vae = load_vae(&ck)?;
    let input = ctx.paths.input(&a.input);
    let piece = read_piece(&input, a.tracks.as_deref(), a.offset_beats)?;
    let n = a.n.unwrap_or(ctx.config.generate.n);
    let seed = a.seed.unwrap_or(ctx.config.generate.seed);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let lat = vae.encode_segments(&piece);
    // variation i, unit k
    let mut zc = Vec::with_capacity(n * piece.len());
    let mut zt = Vec::with_capacity(n * piece.len());
    for _ in 0..n {
        for (c, t) in &lat {
            zc.push(c.mean.clone());
            zt.push(match a.mode {
                VaryMode::Posterior => t.sample(&mut rng),
                VaryMode::Prior => (0..vae.latent_dim()).map(|_| rng.sample(StandardNormal)).collect(),
            });
        }
    }
    let decoded = vae.decode_segments(&zc, &zt, SegmentSource::new("variation", 0));
    let mut manifest = RunManifest::new(
        "vary",
        serde_json::json!({ "n": n, "mode": format!("{:?}", a.mode).to_lowercase(), "tracks": a.tracks, "offset_beats": a.offset_beats }),
        Some(seed),
    );
    manifest.inputs.push(input);
    manifest.checkpoint(&ck)?;
    make_dir(&a.out.out)?;
    for (i, piece_out) in decoded.chunks(piece.len().max(1)).enumerate() {
        write_midi(a.out.out.join(format!("variation-{i:03}.mid")), piece_out, &mut manifest)?;
    }
    println!("wrote {n} variations");
    Ok(manifest)
}

fn sample(ctx: &Context, a: &SampleArgs) -> CliResult<RunManifest> {
    let ck = ctx.paths.input(&a.checkpoint);
    let vae = load_vae(&ck)?;
    let bpc = a.beats_per_chord.unwrap_or(ctx.config.generate.beats_per_chord);
    let n = a.n.unwrap_or(ctx.config.generate.n);
    let seed = a.seed.unwrap_or(ctx.config.generate.seed);
    let progs = progressions_from_symbols(&a.chords, bpc)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // unit-major draws: pairs[k][i] is unit k of sample i
    let pairs: Vec<_> = progs.iter().map(|p| prior_pairs(&vae, p, &mut rng, n)).collect();
    let mut zc = Vec::with_capacity(n * progs.len());
    let mut zt = Vec::with_capacity(n * progs.len());
    for i in 0..n {
        for unit in &pairs {
            zc.push(unit[i].z_chd.clone());
            zt.push(unit[i].z_txt.clone());
        }
    }
    let decoded = vae.decode_segments(&zc, &zt, SegmentSource::new(polydis::control::PRIOR_TAG, 0));
    let mut manifest = RunManifest::new(
        "sample",
        serde_json::json!({ "chords": a.chords, "beats_per_chord": bpc, "n": n }),
        Some(seed),
    );
    manifest.checkpoint(&ck)?;
    make_dir(&a.out.out)?;
    let mut accuracy = Vec::with_capacity(n);
    for (i, piece) in decoded.chunks(progs.len()).enumerate() {
        write_midi(a.out.out.join(format!("sample-{i:03}.mid")), piece, &mut manifest)?;
        let hits: f64 = piece
            .iter()
            .zip(&progs)
            .map(|(s, p)| polydis::control::chord_root_accuracy(std::slice::from_ref(s), p))
            .sum();
        accuracy.push(hits / progs.len() as f64);
    }
    write_json(
        a.out.out.join("chord_accuracy.json"),
        &serde_json::json!({ "per_sample_root_accuracy": accuracy }),
        &mut manifest,
    )?;
    println!("wrote {n} samples");
    Ok(manifest)
}

fn arrange(ctx: &Context, a: &ArrangeArgs) -> CliResult<RunManifest> {
    let (vp, ap) = (ctx.paths.input(&a.vae), ctx.paths.input(&a.arranger));
    let vae = load_vae(&vp)?;
    let arranger = load_arranger(&ap)?;
    let mp = ctx.paths.input(&a.melody);
    let melody = read_piece(&mp, a.melody_tracks.as_deref(), 0)?;
    let bpc = a.beats_per_chord.unwrap_or(ctx.config.generate.beats_per_chord);
    let given_chords = a.chords.as_deref().map(|c| progressions_from_symbols(c, bpc)).transpose()?;
    let mut manifest = RunManifest::new(
        "arrange",
        serde_json::json!({
            "chords": a.chords,
            "beats_per_chord": bpc,
            "prefix_units": a.prefix.as_ref().map(|_| a.prefix_units),
            "melody_tracks": a.melody_tracks,
        }),
        None,
    );
    manifest.inputs.push(mp);
    let given_prefix = match &a.prefix {
        Some(p) => {
            let path = ctx.paths.input(p);
            let mut units = read_piece(&path, None, 0)?;
            manifest.inputs.push(path);
            if a.prefix_units > units.len() {
                return Err(CliError::usage(
                    format!("--prefix-units {} exceeds the {} units of the prefix file", a.prefix_units, units.len()),
                    "lower --prefix-units",
                ));
            }
            units.truncate(a.prefix_units);
            Some(units)
        }
        None => None,
    };
    manifest.checkpoint(&vp)?;
    manifest.checkpoint(&ap)?;
    let out = arranger.arrange_melody(&vae, &melody, &ArrangeOptions { given_chords, given_prefix })?;
    make_dir(&a.out.out)?;
    let path = a.out.out.join("arrangement.mid");
    write_segments(&path, &[("melody", &melody), ("piano", &out)])?;
    manifest.outputs.push(path);
    println!("arranged {} units", out.len());
    Ok(manifest)
}

fn evaluate(ctx: &Context, a: &EvaluateArgs) -> CliResult<RunManifest> {
    let ck = ctx.paths.input(&a.checkpoint);
    let vae = load_vae(&ck)?;
    let mut cfg = ctx.config.evaluate.clone();
    if let Some(s) = a.split {
        cfg.split = s;
    }
    if let Some(p) = &a.probabilities {
        cfg.probabilities = p.clone();
    }
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    let data = ctx.paths.input(&a.data);
    let records = load_records(&data)?;
    let test: Vec<Segment> = match cfg.split {
        EvalSplit::All => records
            .iter()
            .filter_map(|r| r.stream(&a.stream))
            .flat_map(|s| s.segments.iter().cloned())
            .collect(),
        EvalSplit::Test => {
            let t = &ctx.config.train;
            let songs = records.iter().map(|r| {
                (r.song_id.clone(), r.stream(&a.stream).map(|s| s.segments.clone()).unwrap_or_default())
            });
            match build_corpus(songs, t.split_fraction, 1, t.seed) {
                Ok(c) => c.test_segments(),
                Err(Error::EmptyCorpus) => Vec::new(),
                Err(e) => return Err(e.into()),
            }
        }
    };
    if test.is_empty() {
        return Err(Error::EmptyTestSet.into());
    }
    let mut manifest = RunManifest::new(
        "evaluate",
        serde_json::json!({ "evaluate": cfg, "stream": a.stream, "sweep": format!("{:?}", a.sweep).to_lowercase() }),
        Some(cfg.seed),
    );
    manifest.inputs.push(data);
    manifest.checkpoint(&ck)?;
    make_dir(&a.out.out)?;
    if matches!(a.sweep, Sweep::Transpose | Sweep::All) {
        let path = a.out.out.join("delta_transpose.csv");
        save_delta_csv(&delta_sweep_transpose(&vae, &test)?, &path)?;
        manifest.outputs.push(path);
    }
    if matches!(a.sweep, Sweep::Perturb | Sweep::All) {
        let path = a.out.out.join("delta_perturb.csv");
        save_delta_csv(&delta_sweep_perturb(&vae, &test, &cfg.probabilities, cfg.seed)?, &path)?;
        manifest.outputs.push(path);
    }
    let report = reconstruction_report(&vae, &test)?;
    let path = a.out.out.join("reconstruction.csv");
    let file = fs::File::create(&path).map_err(|e| Error::Io { path: path.clone(), source: e })?;
    write_reconstruction_csv(&report, std::io::BufWriter::new(file))?;
    manifest.outputs.push(path);
    println!(
        "{} segments: pitch accuracy {:.4}, root accuracy {:.4}",
        report.segments, report.pitch_accuracy, report.root_accuracy
    );
    Ok(manifest)
}

#[derive(Serialize)]
struct SegmentLatents {
    start_beat: u32,
    z_chd: Vec<f64>,
    z_txt: Vec<f64>,
}

fn export(ctx: &Context, a: &ExportArgs) -> CliResult<RunManifest> {
    let data = ctx.paths.input(&a.data);
    let records = load_records(&data)?;
    let vae = a.checkpoint.as_ref().map(|p| load_vae(&ctx.paths.input(p))).transpose()?;
    let mut manifest = RunManifest::new("export", serde_json::json!({ "stream": a.stream }), None);
    manifest.inputs.push(data);
    if let Some(p) = &a.checkpoint {
        manifest.checkpoint(&ctx.paths.input(p))?;
    }
    make_dir(&a.out.out)?;
    let unit = BEATS_PER_SEGMENT as u32;
    for r in &records {
        let Some(stream) = r.stream(&a.stream) else {
            log::warn!("{} has no {:?} stream", r.song_id, a.stream);
            continue;
        };
        // back-to-back units only, so overlapping hops are not written twice
        let segs: Vec<Segment> = stream
            .segments
            .iter()
            .filter(|s| s.source.start_beat % unit == 0)
            .cloned()
            .collect();
        write_midi(a.out.out.join(format!("{}.mid", r.song_id)), &segs, &mut manifest)?;
        if let Some(vae) = &vae {
            let lat: Vec<SegmentLatents> = vae
                .encode_segments(&stream.segments)
                .into_iter()
                .zip(&stream.segments)
                .map(|((c, t), s)| SegmentLatents {
                    start_beat: s.source.start_beat,
                    z_chd: c.mean,
                    z_txt: t.mean,
                })
                .collect();
            write_json(a.out.out.join(format!("{}.latents.json", r.song_id)), &lat, &mut manifest)?;
        }
    }
    println!("exported {} records", records.len());
    Ok(manifest)
}
