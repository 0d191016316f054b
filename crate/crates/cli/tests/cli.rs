use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use polydis::score::write_song;
use polydis::synth::{generate_corpus, SynthOptions};

fn polydis(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_polydis"))
        .args(args)
        .env_remove("POLYDIS_DATA_ROOT")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = polydis(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn fails(args: &[&str], code: i32) -> String {
    let out = polydis(args);
    assert_eq!(out.status.code(), Some(code), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stderr).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn files(dir: &Path, ext: &str) -> Vec<PathBuf> {
    let mut v: Vec<PathBuf> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|e| e == ext))
        .collect();
    v.sort();
    v
}

/// Synthetic MIDI corpus, preprocessed records and a tiny trained VAE.
struct Fixture {
    _dir: tempfile::TempDir,
    root: PathBuf,
    midi: PathBuf,
    records: PathBuf,
    vae: PathBuf,
}

fn fixture() -> Fixture {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path().to_path_buf();
    let midi = root.join("midi");
    fs::create_dir(&midi).unwrap();
    let opts = SynthOptions {
        bars: 8,
        ..Default::default()
    };
    for song in generate_corpus(4, &opts, 3) {
        write_song(midi.join(format!("{}.mid", song.id)), &song).unwrap();
    }
    let records = root.join("records");
    ok(&[
        "preprocess",
        "--input",
        s(&midi),
        "--melody-tracks",
        "melody",
        "--accompaniment-tracks",
        "piano",
        "--out",
        s(&records),
    ]);
    let run = root.join("run");
    ok(&[
        "train", "--data", s(&records), "--preset", "tiny", "--epochs", "1", "--batch-size", "4", "--seed", "5",
        "--out", s(&run),
    ]);
    Fixture {
        vae: run.join("last.ckpt"),
        _dir: dir,
        root,
        midi,
        records,
    }
}

#[test]
fn help_lists_commands_and_flags() {
    let out = ok(&["--help"]);
    for c in ["preprocess", "train", "train-arranger", "transfer", "vary", "sample", "arrange", "evaluate", "export"] {
        assert!(out.contains(c), "{c} missing from help");
    }
    let out = ok(&["sample", "--help"]);
    for f in ["--checkpoint", "--chords", "--beats-per-chord", "--n", "--seed", "--out", "--config"] {
        assert!(out.contains(f), "{f} missing from sample help");
    }
}

#[test]
fn every_flag_has_help_text() {
    for c in ["preprocess", "train", "train-arranger", "transfer", "vary", "sample", "arrange", "evaluate", "export"] {
        let help = ok(&[c, "-h"]);
        for line in help.lines().map(str::trim_start).filter(|l| l.starts_with('-')) {
            // "  --flag <V>  Description": a described flag has a gap before its text
            assert!(line.contains("  "), "{c}: undocumented {line}");
        }
    }
}

#[test]
fn usage_errors_exit_one() {
    let err = fails(&["sample", "--bogus"], 1);
    assert!(err.contains("hint:"));
    fails(&[], 1);
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    fs::write(&cfg, "[train]\nepoch = 3\n").unwrap();
    let err = fails(&["--config", s(&cfg), "export", "--data", "x", "--out", "y"], 1);
    assert!(err.contains("malformed config"), "{err}");
}

#[test]
fn missing_inputs_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let err = fails(
        &["sample", "--checkpoint", s(&dir.path().join("nope.ckpt")), "--chords", "C", "--out", s(&out)],
        2,
    );
    assert!(err.contains("not found") && err.contains("hint:"), "{err}");
    let empty = dir.path().join("empty");
    fs::create_dir(&empty).unwrap();
    let err = fails(&["preprocess", "--input", s(&empty), "--out", s(&out)], 2);
    assert!(err.contains("empty"), "{err}");
}

#[test]
fn pipeline_end_to_end() {
    let f = fixture();
    assert_eq!(files(&f.records, "pdsg").len(), 4);
    let run = f.vae.parent().unwrap();
    let manifest: serde_json::Value = serde_json::from_str(&fs::read_to_string(run.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["command"], "train");
    assert_eq!(manifest["seed"], 5);
    assert_eq!(manifest["checkpoints"][0]["sha256"].as_str().unwrap().len(), 64);
    assert!(run.join("metrics.jsonl").is_file());

    // sampling is bit-exact under a fixed seed
    let (s1, s2) = (f.root.join("s1"), f.root.join("s2"));
    for out in [&s1, &s2] {
        ok(&[
            "sample", "--checkpoint", s(&f.vae), "--chords", "C Am F G", "--n", "4", "--seed", "7", "--out", s(out),
        ]);
    }
    let mids = files(&s1, "mid");
    assert_eq!(mids.len(), 4);
    for m in &mids {
        let other = s2.join(m.file_name().unwrap());
        assert_eq!(fs::read(m).unwrap(), fs::read(other).unwrap());
    }
    assert!(s1.join("chord_accuracy.json").is_file());
    let err = fails(
        &["sample", "--checkpoint", s(&f.vae), "--chords", "C Am F", "--out", s(&s1)],
        1,
    );
    assert!(err.contains("hint:"), "{err}");
    fails(&["sample", "--checkpoint", s(&f.vae), "--chords", "Hm7", "--out", s(&s1)], 1);

    // transfer, vary
    let pieces = files(&f.midi, "mid");
    let t = f.root.join("transfer");
    ok(&[
        "transfer", "--checkpoint", s(&f.vae), "--a", s(&pieces[0]), "--b", s(&pieces[1]), "--tracks", "piano",
        "--out", s(&t),
    ]);
    assert!(t.join("a-chords_b-texture.mid").is_file());
    assert!(t.join("b-chords_a-texture.mid").is_file());
    let v = f.root.join("vary");
    ok(&[
        "vary", "--checkpoint", s(&f.vae), "--input", s(&pieces[2]), "--tracks", "piano", "--n", "2", "--mode",
        "prior", "--out", s(&v),
    ]);
    assert_eq!(files(&v, "mid").len(), 2);

    // evaluate with a data root and relative paths
    let e = f.root.join("eval");
    ok(&[
        "--data-root", s(&f.root), "evaluate", "--checkpoint", "run/last.ckpt", "--data", "records",
        "--probabilities", "0,0.5", "--out", s(&e),
    ]);
    for csv in ["delta_transpose.csv", "delta_perturb.csv", "reconstruction.csv"] {
        assert!(e.join(csv).is_file(), "{csv}");
    }
    let perturb = fs::read_to_string(e.join("delta_perturb.csv")).unwrap();
    // header plus 2 probabilities × 3 series × 2 factors
    assert_eq!(perturb.lines().count(), 1 + 12);
    let empty = f.root.join("no-records");
    fs::create_dir(&empty).unwrap();
    let err = fails(
        &["evaluate", "--checkpoint", s(&f.vae), "--data", s(&empty), "--out", s(&e)],
        2,
    );
    assert!(err.contains("empty test set"), "{err}");

    // export with latents
    let x = f.root.join("export");
    ok(&["export", "--data", s(&f.records), "--checkpoint", s(&f.vae), "--out", s(&x)]);
    assert_eq!(files(&x, "mid").len(), 4);
    assert_eq!(files(&x, "json").len(), 4 + 1);

    // arranger
    let a = f.root.join("arranger");
    ok(&[
        "train-arranger", "--vae", s(&f.vae), "--data", s(&f.records), "--preset", "toy", "--epochs", "1",
        "--out", s(&a),
    ]);
    let arr = a.join("arranger.ckpt");
    assert!(arr.is_file());
    let out = f.root.join("arranged");
    ok(&[
        "arrange", "--vae", s(&f.vae), "--arranger", s(&arr), "--melody", s(&pieces[3]), "--melody-tracks",
        "melody", "--chords", "C G Am F C G F C", "--beats-per-chord", "4", "--out", s(&out),
    ]);
    assert!(out.join("arrangement.mid").is_file());
    // a VAE checkpoint is not an arranger checkpoint
    fails(
        &["arrange", "--vae", s(&f.vae), "--arranger", s(&f.vae), "--melody", s(&pieces[3]), "--out", s(&out)],
        2,
    );
}
