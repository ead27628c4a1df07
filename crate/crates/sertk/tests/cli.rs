//! End-to-end runs of the `sertk` binary on a tiny corpus.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use sertk::audio::write_wav_i16;
use sertk::report::{parse_csv, parse_json};

const SPEAKERS: [&str; 8] = ["NI", "RH", "AH", "JG", "RI", "AL", "SY", "MH"];
const LABELS: [&str; 4] = ["Angry", "Happy", "Neutral", "Sad"];

const TINY_CONFIG: &str = r#"
manifest = "manifest.csv"
votes = "votes.csv"
out_dir = "out"
seed = 3
n_mels = 16
target_frames = 32
kernels = [4, 4]
pools = [2, 2]
lstm_units = 6
attention_units = 4
folds = 2
batch_size = 4
max_epochs = 2
embedding_stage = "post_attention"
"#;

struct Fixture {
    dir: tempfile::TempDir,
}

impl Fixture {
    /// Eight utterances, one per fixture speaker, two per class, each with
    /// four unanimous votes.
    fn new() -> Self {
        let dir = tempfile::tempdir().unwrap();
        let root = dir.path();
        fs::write(root.join("sertk.toml"), TINY_CONFIG).unwrap();
        fs::create_dir(root.join("wav")).unwrap();
        let mut manifest = String::from("utterance_id,speaker,path,duration\n");
        let mut votes = String::from("utterance_id,evaluator,label,confidence\n");
        for (i, speaker) in SPEAKERS.iter().enumerate() {
            let id = format!("u{i}");
            let freq = 200.0 + 900.0 * (i % 4) as f64;
            let n = 6_000 + 500 * i;
            let samples: Vec<f64> =
                (0..n).map(|t| 0.4 * (2.0 * std::f64::consts::PI * freq * t as f64 / 16_000.0).sin()).collect();
            write_wav_i16(&root.join(format!("wav/{id}.wav")), &samples, 16_000).unwrap();
            manifest.push_str(&format!("{id},{speaker},wav/{id}.wav,\n"));
            for e in 1..=4 {
                votes.push_str(&format!("{id},E{e},{},{}\n", LABELS[i % 4], 1 + (i + e) % 5));
            }
        }
        fs::write(root.join("manifest.csv"), manifest).unwrap();
        fs::write(root.join("votes.csv"), votes).unwrap();
        Self { dir }
    }

    fn root(&self) -> &Path {
        self.dir.path()
    }

    fn out(&self, rel: &str) -> PathBuf {
        self.root().join("out").join(rel)
    }

    fn run(&self, args: &[&str]) -> Output {
        let config = self.root().join("sertk.toml");
        Command::new(env!("CARGO_BIN_EXE_sertk"))
            .arg("--config")
            .arg(&config)
            .args(args)
            .env("RUST_LOG", "warn")
            .output()
            .unwrap()
    }

    fn ok(&self, args: &[&str]) -> String {
        let o = self.run(args);
        assert!(o.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&o.stderr));
        String::from_utf8(o.stdout).unwrap()
    }

    fn fails(&self, args: &[&str]) -> String {
        let o = self.run(args);
        assert!(!o.status.success(), "{args:?} unexpectedly succeeded");
        String::from_utf8(o.stderr).unwrap()
    }
}

fn snapshot(dir: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push((p.clone(), fs::read(&p).unwrap()));
            }
        }
    }
    out.sort();
    out
}

#[test]
fn empty_manifest_is_an_error() {
    let f = Fixture::new();
    fs::write(f.root().join("manifest.csv"), "utterance_id,speaker,path,duration\n").unwrap();
    assert!(f.fails(&["features"]).contains("no utterances"));
}

#[test]
fn corrupt_wav_is_listed_and_the_rest_cached() {
    let f = Fixture::new();
    let bad = f.root().join("wav/u3.wav");
    let bytes = fs::read(&bad).unwrap();
    fs::write(&bad, &bytes[..30]).unwrap();
    let err = f.fails(&["features"]);
    assert!(err.contains("1 of 8"), "{err}");
    let cached = fs::read_dir(f.out("features")).unwrap().count();
    assert_eq!(cached, 7);
    let listing = fs::read_to_string(f.out("features_errors.csv")).unwrap();
    let rows: Vec<&str> = listing.lines().filter(|l| !l.starts_with('#')).skip(1).collect();
    assert_eq!(rows.len(), 1);
    assert!(rows[0].starts_with("u3,"), "{listing}");
}

#[test]
fn feature_rerun_rewrites_nothing() {
    let f = Fixture::new();
    assert!(f.ok(&["features"]).contains("8 written, 0 up to date"));
    let before = snapshot(&f.out("features"));
    let times: Vec<_> = before.iter().map(|(p, _)| fs::metadata(p).unwrap().modified().unwrap()).collect();
    assert!(f.ok(&["features"]).contains("0 written, 8 up to date"));
    let after = snapshot(&f.out("features"));
    assert_eq!(before, after);
    let times_after: Vec<_> = after.iter().map(|(p, _)| fs::metadata(p).unwrap().modified().unwrap()).collect();
    assert_eq!(times, times_after);
    // A DSP change invalidates every entry.
    let cfg = f.root().join("sertk.toml");
    fs::write(&cfg, format!("{TINY_CONFIG}hop_ms = 12\n")).unwrap();
    assert!(f.ok(&["features"]).contains("8 written"));
}

#[test]
fn annotate_reproduces_worked_examples() {
    let f = Fixture::new();
    fs::write(
        f.root().join("votes.csv"),
        "utterance_id,evaluator,label,confidence\n\
         r1,E1,Angry,4\nr1,E2,Angry,3\nr1,E3,Angry,2\nr1,E4,Neutral,5\n\
         r2,E1,Happy,5\nr2,E2,Happy,2\nr2,E3,Sad,4\nr2,E4,Sad,4\n\
         r3,E1,Angry,1\nr3,E2,Happy,2\nr3,E3,Neutral,3\nr3,E4,Sad,4\n",
    )
    .unwrap();
    f.ok(&["annotate"]);
    let labels = fs::read_to_string(f.out("labels.csv")).unwrap();
    let body: Vec<&str> = labels.lines().skip(2).collect();
    assert_eq!(
        body,
        [
            "r1,accepted,Angry,3.0,majority",
            "r2,accepted,Sad,4.0,confidence_tie_break",
            "r3,discarded,,,no_agreement"
        ]
    );
    let first = snapshot(f.out("").as_path());
    f.ok(&["annotate"]);
    assert_eq!(first, snapshot(f.out("").as_path()));
    assert!(fs::read_to_string(f.out("table1.txt")).unwrap().contains("accepted 2, discarded 1"));
}

#[test]
fn all_discarded_corpus_is_an_error() {
    let f = Fixture::new();
    fs::write(
        f.root().join("votes.csv"),
        "utterance_id,evaluator,label,confidence\nr3,E1,Angry,1\nr3,E2,Happy,2\nr3,E3,Neutral,3\nr3,E4,Sad,4\n",
    )
    .unwrap();
    assert!(f.fails(&["annotate"]).contains("no accepted labels"));
}

#[test]
fn malformed_votes_are_an_error() {
    let f = Fixture::new();
    fs::write(f.root().join("votes.csv"), "utterance_id,evaluator,label,confidence\nr,E1,Angry,9\nr,E2,Angry,1\nr,E3,Angry,1\nr,E4,Angry,1\n")
        .unwrap();
    f.fails(&["annotate"]);
}

#[test]
fn train_without_features_names_the_features_command() {
    let f = Fixture::new();
    f.ok(&["annotate"]);
    let err = f.fails(&["train"]);
    assert!(err.contains("sertk features"), "{err}");
}

#[test]
fn pipeline_is_deterministic_and_joins_the_fixture() {
    let f = Fixture::new();
    f.ok(&["features"]);
    f.ok(&["annotate"]);
    let out = f.ok(&["train"]);
    assert!(out.contains("mean UA"), "{out}");
    let report = fs::read(f.out("report.json")).unwrap();
    let ckpt = fs::read(f.out("checkpoints/fold1.json")).unwrap();
    f.ok(&["train"]);
    assert_eq!(report, fs::read(f.out("report.json")).unwrap());
    assert_eq!(ckpt, fs::read(f.out("checkpoints/fold1.json")).unwrap());
    let doc: serde_json::Value = serde_json::from_slice(&report).unwrap();
    assert_eq!(doc["examples"], 8);
    let predictions = fs::read_to_string(f.out("predictions.csv")).unwrap();
    assert_eq!(predictions.lines().count(), 2 + 8);

    assert!(f.ok(&["analyze"]).contains("8 electoral rows joined"));
    let shares = parse_csv(&fs::read_to_string(f.out("analysis/shares.csv")).unwrap()).unwrap();
    assert_eq!(shares.rows().len(), 8);
    for (_, v) in shares.rows() {
        assert!((v.iter().sum::<f64>() - 100.0).abs() < 1e-9);
    }
    let joined = parse_json(&fs::read_to_string(f.out("analysis/electoral.json")).unwrap()).unwrap();
    let sy = joined.rows().iter().find(|(k, _)| k == "SY").unwrap();
    assert_eq!(&sy.1[4..], &[1.62, -54.39]);
    assert_eq!(fs::read_to_string(f.out("analysis/unmatched.csv")).unwrap().lines().count(), 2);
    let emb = fs::read_to_string(f.out("analysis/embeddings.jsonl")).unwrap();
    assert_eq!(emb.lines().count(), 8);

    let svg = fs::read(f.out("analysis/shares.svg")).unwrap();
    f.ok(&["analyze"]);
    assert_eq!(svg, fs::read(f.out("analysis/shares.svg")).unwrap());

    let json = f.root().join("shares.json");
    f.ok(&["report", f.out("analysis/shares.csv").to_str().unwrap(), "--format", "json", "--output", json.to_str().unwrap()]);
    assert_eq!(parse_json(&fs::read_to_string(&json).unwrap()).unwrap(), shares);
}

#[test]
fn seed_flag_overrides_config() {
    let f = Fixture::new();
    let text = f.ok(&["--seed", "42", "config"]);
    assert!(text.contains("seed = 42"), "{text}");
}
