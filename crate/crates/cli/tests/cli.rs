use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn echochamber(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_echochamber"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = echochamber(dir, args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn code(dir: &Path, args: &[&str]) -> i32 {
    echochamber(dir, args).status.code().expect("exit code")
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn write_raw(path: &Path, speakers: &[&str], turns: usize) {
    let words = [
        "we", "should", "ship", "the", "release", "today", "tests", "pass", "review", "code",
    ];
    let mut s = String::new();
    for i in 0..turns {
        let who = speakers[i % speakers.len()];
        let text: Vec<&str> = (0..5)
            .map(|k| words[(i * 3 + k * 7) % words.len()])
            .collect();
        s.push_str(&format!(
            "{{\"speaker\": \"{who}\", \"start\": {}, \"duration\": 1.5, \"text\": \"{}\"}}\n",
            2 * i,
            text.join(" ")
        ));
    }
    fs::write(path, s).unwrap();
}

fn small_sim(dir: &Path) {
    ok(
        dir,
        &[
            "simulate",
            "--out",
            "sim",
            "--persons",
            "3",
            "--utterances",
            "60",
            "--vocab",
            "6",
            "--mean-length",
            "8",
            "--seed",
            "5",
        ],
    );
}

const QUICK: [&str; 4] = ["--burn-in", "5", "--samples", "10"];

#[test]
fn preprocess_writes_transcript_and_stats_reproducibly() {
    let d = tempfile::tempdir().unwrap();
    write_raw(&d.path().join("raw.jsonl"), &["ann", "bob", "cy"], 45);
    ok(
        d.path(),
        &["preprocess", "--input", "raw.jsonl", "--out", "a"],
    );
    ok(
        d.path(),
        &["preprocess", "--input", "raw.jsonl", "--out", "b"],
    );
    let stats = json(&d.path().join("a/stats.json"));
    assert_eq!(stats["persons"], 3);
    assert_eq!(stats["utterances"], 45);
    assert_eq!(stats["tokens"], 225);
    for f in ["transcript.json", "stats.json"] {
        assert_eq!(
            fs::read(d.path().join("a").join(f)).unwrap(),
            fs::read(d.path().join("b").join(f)).unwrap()
        );
    }
    let cfg = fs::read_to_string(d.path().join("a/config.toml")).unwrap();
    assert!(cfg.contains("command = \"preprocess\""));
    assert!(cfg.contains(env!("CARGO_PKG_VERSION")));
}

#[test]
fn preprocess_with_one_surviving_speaker_fails() {
    let d = tempfile::tempdir().unwrap();
    let raw = d.path().join("raw.jsonl");
    write_raw(&raw, &["ann", "ann", "ann", "bob"], 20);
    assert_eq!(
        code(
            d.path(),
            &["preprocess", "--input", "raw.jsonl", "--out", "o"]
        ),
        3
    );
}

#[test]
fn config_file_is_read_and_flags_override_it() {
    let d = tempfile::tempdir().unwrap();
    small_sim(d.path());
    fs::write(
        d.path().join("run.toml"),
        "[fit]\nmodel = \"bec\"\n[sampler]\nburn_in = 3\nsamples = 4\nseed = 11\n",
    )
    .unwrap();
    ok(
        d.path(),
        &[
            "--config",
            "run.toml",
            "fit",
            "--transcript",
            "sim/transcript.json",
            "--out",
            "f",
            "--samples",
            "6",
        ],
    );
    let meta = json(&d.path().join("f/run.json"));
    assert_eq!(meta["chains"][0]["seed"], 11);
    assert_eq!(meta["chains"][0]["draws"], 6);
}

#[test]
fn bad_config_is_a_usage_error() {
    let d = tempfile::tempdir().unwrap();
    fs::write(d.path().join("bad.toml"), "[sampler]\nburnin = 3\n").unwrap();
    assert_eq!(
        code(
            d.path(),
            &["--config", "bad.toml", "simulate", "--out", "s"]
        ),
        2
    );
    assert_eq!(code(d.path(), &["fit", "--model", "bec", "--out", "f"]), 2);
    assert_eq!(code(d.path(), &["frobnicate"]), 2);
}

#[test]
fn chains_use_consecutive_seeds() {
    let d = tempfile::tempdir().unwrap();
    small_sim(d.path());
    let mut args = vec![
        "fit",
        "--model",
        "bec",
        "--transcript",
        "sim/transcript.json",
        "--out",
        "f",
        "--chains",
        "4",
        "--seed",
        "7",
    ];
    args.extend(QUICK);
    ok(d.path(), &args);
    let meta = json(&d.path().join("f/run.json"));
    let seeds: Vec<u64> = meta["chains"]
        .as_array()
        .unwrap()
        .iter()
        .map(|c| c["seed"].as_u64().unwrap())
        .collect();
    assert_eq!(seeds, [7, 8, 9, 10]);
    for i in 0..4 {
        let lines = fs::read_to_string(d.path().join(format!("f/chain-{i}.jsonl"))).unwrap();
        assert_eq!(lines.lines().count(), 10);
        assert!(d
            .path()
            .join(format!("f/chain-{i}.diagnostics.csv"))
            .is_file());
    }
    let a = fs::read(d.path().join("f/chain-0.jsonl")).unwrap();
    let b = fs::read(d.path().join("f/chain-1.jsonl")).unwrap();
    assert_ne!(a, b);
}

#[test]
fn interrupted_fit_resumes_to_the_same_chain() {
    let d = tempfile::tempdir().unwrap();
    small_sim(d.path());
    let base = [
        "fit",
        "--model",
        "bec",
        "--transcript",
        "sim/transcript.json",
        "--burn-in",
        "4",
        "--samples",
        "12",
    ];
    let mut full = base.to_vec();
    full.extend(["--out", "full"]);
    ok(d.path(), &full);
    let mut part = base.to_vec();
    part.extend(["--out", "part", "--stop-after", "9"]);
    ok(d.path(), &part);
    assert_eq!(
        json(&d.path().join("part/run.json"))["chains"][0]["status"],
        "stopped"
    );
    let mut resume = base.to_vec();
    resume.extend(["--out", "part", "--resume"]);
    ok(d.path(), &resume);
    assert_eq!(
        fs::read(d.path().join("full/chain-0.jsonl")).unwrap(),
        fs::read(d.path().join("part/chain-0.jsonl")).unwrap()
    );
}

#[test]
fn default_simulation_protocol_gives_about_fifteen_thousand_tokens() {
    let d = tempfile::tempdir().unwrap();
    let out = ok(d.path(), &["simulate", "--out", "s", "--seed", "1"]);
    let t = json(&d.path().join("s/transcript.json"));
    let tokens: usize = t["utterances"]
        .as_array()
        .unwrap()
        .iter()
        .map(|u| u["tokens"].as_array().unwrap().len())
        .sum();
    assert!(
        (14_000..=16_000).contains(&tokens),
        "{tokens} tokens; {out}"
    );
    assert!(d.path().join("s/truth.json").is_file());
}

#[test]
fn hawkes_protocol_checks_stationarity() {
    let d = tempfile::tempdir().unwrap();
    let params = |decay: f64| {
        format!(
            r#"{{"bec": null, "hawkes": {{"base_rate": [0.5, 0.5], "excitation": [[0, 0.5], [0.5, 0]], "decay": [{decay}, {decay}]}}}}"#
        )
    };
    fs::write(d.path().join("good.json"), params(1.0)).unwrap();
    fs::write(d.path().join("bad.json"), params(2.0)).unwrap();
    let sim = |p: &str, out: &str| {
        code(
            d.path(),
            &[
                "simulate",
                "--protocol",
                "hawkes",
                "--params",
                p,
                "--out",
                out,
                "--persons",
                "2",
                "--vocab",
                "4",
                "--mean-length",
                "5",
                "--horizon",
                "50",
            ],
        )
    };
    assert_eq!(sim("good.json", "g"), 0);
    assert_ne!(sim("bad.json", "b"), 0);
    let truth = json(&d.path().join("g/truth.json"));
    assert!(truth["hawkes"].is_object());
}

#[test]
fn evaluate_reports_and_compares() {
    let d = tempfile::tempdir().unwrap();
    small_sim(d.path());
    for (model, out) in [("bec", "fb"), ("unigram", "fu")] {
        let mut args = vec![
            "fit",
            "--model",
            model,
            "--transcript",
            "sim/transcript.json",
            "--out",
            out,
            "--train-fraction",
            "0.1",
        ];
        args.extend(QUICK);
        ok(d.path(), &args);
    }
    ok(
        d.path(),
        &[
            "evaluate",
            "--transcript",
            "sim/transcript.json",
            "--chains",
            "fb",
            "--out",
            "ev",
            "--dataset",
            "toy",
        ],
    );
    ok(
        d.path(),
        &[
            "evaluate",
            "--transcript",
            "sim/transcript.json",
            "--chains",
            "fu",
            "--out",
            "ev",
            "--dataset",
            "toy",
        ],
    );
    let r = json(&d.path().join("ev/report-toy-bec-0.1.json"));
    assert_eq!(r["draws"], 10);
    assert!(r["mean"].as_f64().unwrap() < 0.0);
    assert!(r["sd"].as_f64().unwrap() >= 0.0);
    let md = fs::read_to_string(d.path().join("ev/comparison.md")).unwrap();
    assert!(md.contains("| bec | unigram |"), "{md}");
    assert!(md.contains("| toy | 10% |"), "{md}");

    // The unigram chain has all influence at zero, so scoring it with the full
    // model must reproduce the unigram score.
    ok(
        d.path(),
        &[
            "evaluate",
            "--transcript",
            "sim/transcript.json",
            "--chains",
            "fu",
            "--model",
            "bec",
            "--out",
            "ev0",
            "--dataset",
            "toy",
        ],
    );
    let zeroed = json(&d.path().join("ev0/report-toy-bec-0.1.json"))["mean"]
        .as_f64()
        .unwrap();
    let unigram = json(&d.path().join("ev/report-toy-unigram-0.1.json"))["mean"]
        .as_f64()
        .unwrap();
    assert!((zeroed - unigram).abs() <= 1e-9, "{zeroed} vs {unigram}");

    assert_eq!(
        code(
            d.path(),
            &[
                "evaluate",
                "--transcript",
                "sim/transcript.json",
                "--chains",
                "nope.jsonl",
                "--out",
                "ev"
            ]
        ),
        3
    );
    assert_eq!(
        code(
            d.path(),
            &[
                "evaluate",
                "--transcript",
                "sim/transcript.json",
                "--chains",
                "fb",
                "--fraction",
                "0.2",
                "--out",
                "ev"
            ]
        ),
        2
    );
}

#[test]
fn export_writes_every_format_and_filters_edges() {
    let d = tempfile::tempdir().unwrap();
    small_sim(d.path());
    let mut args = vec![
        "fit",
        "--model",
        "bec",
        "--transcript",
        "sim/transcript.json",
        "--out",
        "f",
    ];
    args.extend(QUICK);
    ok(d.path(), &args);
    ok(d.path(), &["export", "--chains", "f", "--out", "net"]);
    for ext in ["json", "dot", "csv"] {
        assert!(d.path().join(format!("net/network.{ext}")).is_file());
    }
    let all = json(&d.path().join("net/network.json"));
    assert_eq!(all["edges"].as_array().unwrap().len(), 6);
    ok(
        d.path(),
        &[
            "export",
            "--chains",
            "f/chain-0.jsonl",
            "--out",
            "hi",
            "--format",
            "json",
            "--threshold",
            "1e9",
        ],
    );
    let none = json(&d.path().join("hi/network.json"));
    assert_eq!(none["edges"].as_array().unwrap().len(), 0);
    assert!(!d.path().join("hi/network.dot").exists());
}

#[test]
fn manifest_groups_give_one_network_each() {
    let d = tempfile::tempdir().unwrap();
    small_sim(d.path());
    for (i, seed) in ["1", "2", "3", "4", "5", "6"].iter().enumerate() {
        let out = format!("m{i}");
        let mut args = vec![
            "fit",
            "--model",
            "bec",
            "--transcript",
            "sim/transcript.json",
            "--out",
            &out,
            "--seed",
            seed,
        ];
        args.extend(QUICK);
        ok(d.path(), &args);
    }
    fs::write(
        d.path().join("groups.toml"),
        "[[group]]\nname = \"early\"\nruns = [\"m0\", \"m1\"]\n\
         [[group]]\nname = \"middle\"\nruns = [\"m2\", \"m3\"]\n\
         [[group]]\nname = \"late\"\nruns = [\"m4\", \"m5\"]\n",
    )
    .unwrap();
    ok(
        d.path(),
        &[
            "export",
            "--manifest",
            "groups.toml",
            "--out",
            "g",
            "--format",
            "json,csv",
        ],
    );
    for g in ["early", "middle", "late"] {
        let s = json(&d.path().join(format!("g/{g}.json")));
        assert_eq!(s["persons"].as_array().unwrap().len(), 3);
        assert!(d.path().join(format!("g/{g}.csv")).is_file());
    }
}
