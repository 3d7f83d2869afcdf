use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const FAST: &str = "[eval]\nmin_topic_messages = 10\n[eval.mlp]\nepochs = 4\nhidden = [32]\n[eval.gbt]\ntrees = 30\n[embeddings]\nhash_dim = 64\n";

fn propwatch(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_propwatch"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) -> Output {
    let out = propwatch(dir, args);
    assert_eq!(
        out.status.code(),
        Some(0),
        "{args:?}\nstdout: {}\nstderr: {}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn workdir() -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("fast.toml"), FAST).unwrap();
    dir
}

fn synth(dir: &Path, out: &str) -> PathBuf {
    ok(dir, &["synth", "--small", "--seed", "7", "--config", "fast.toml", "-o", out]);
    dir.join(out)
}

#[test]
fn no_arguments_prints_usage_and_exits_1() {
    let dir = workdir();
    let out = propwatch(dir.path(), &[]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("Usage"));
}

#[test]
fn unknown_subcommand_exits_1() {
    let dir = workdir();
    assert_eq!(propwatch(dir.path(), &["frobnicate"]).status.code(), Some(1));
    assert_eq!(propwatch(dir.path(), &["analyze", "nothing"]).status.code(), Some(1));
}

#[test]
fn bad_config_is_a_usage_error() {
    let dir = workdir();
    fs::write(dir.path().join("bad.toml"), "no_such_key = 1\n").unwrap();
    assert_eq!(propwatch(dir.path(), &["synth", "--config", "bad.toml"]).status.code(), Some(1));
}

#[test]
fn synth_then_eval_writes_a_report_and_is_repeatable() {
    let dir = workdir();
    let data = synth(dir.path(), "data");
    for name in ["corpus.jsonl", "labels.jsonl", "topics.jsonl", "embeddings.tgemb", "synth.json"] {
        assert!(data.join(name).is_file(), "{name}");
        assert!(data.join(format!("{name}.manifest.json")).is_file(), "{name} manifest");
    }
    ok(dir.path(), &["eval", "--data", "data", "--config", "fast.toml", "-o", "eval1", "--plots"]);
    let report: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.path().join("eval1/report.json")).unwrap()).unwrap();
    let models: Vec<&str> = report["models"].as_array().unwrap().iter().map(|m| m["model"].as_str().unwrap()).collect();
    assert_eq!(models, ["features", "reply", "trigger", "ensemble", "pair"]);
    assert!(dir.path().join("eval1/report.md").is_file());
    assert!(dir.path().join("eval1/models/pair.model.json").is_file());
    assert!(dir.path().join("eval1/plots/accuracy.svg").is_file());

    // same inputs and seed: identical artifacts, manifests differ only in time
    synth(dir.path(), "data2");
    assert_eq!(fs::read(data.join("corpus.jsonl")).unwrap(), fs::read(dir.path().join("data2/corpus.jsonl")).unwrap());
    assert_eq!(
        fs::read(data.join("embeddings.tgemb")).unwrap(),
        fs::read(dir.path().join("data2/embeddings.tgemb")).unwrap()
    );
    ok(dir.path(), &["eval", "--data", "data", "--config", "fast.toml", "-o", "eval2"]);
    assert_eq!(
        fs::read(dir.path().join("eval1/report.json")).unwrap(),
        fs::read(dir.path().join("eval2/report.json")).unwrap()
    );
    let manifest = |p: &str| -> serde_json::Value {
        let mut v: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.path().join(p)).unwrap()).unwrap();
        v.as_object_mut().unwrap().remove("created_at");
        v
    };
    let (a, b) = (manifest("eval1/report.json.manifest.json"), manifest("eval2/report.json.manifest.json"));
    assert_eq!(a["corpus_hash"], b["corpus_hash"]);
    assert_eq!(a["seed"], b["seed"]);
    assert_eq!(a["inputs"], b["inputs"]);
}

#[test]
fn train_pair_without_embeddings_names_the_missing_store() {
    let dir = workdir();
    let data = synth(dir.path(), "data");
    fs::remove_file(data.join("embeddings.tgemb")).unwrap();
    let out = propwatch(dir.path(), &["train", "pair", "--data", "data", "-o", "models"]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("embedding store"), "{err}");
    assert!(err.contains("embeddings.tgemb"), "{err}");
}

#[test]
fn pipeline_subcommands_run_on_synthetic_data() {
    let dir = workdir();
    synth(dir.path(), "data");
    let d = dir.path();
    let cfg = ["--config", "fast.toml"];
    let run = |args: &[&str]| {
        let mut all: Vec<&str> = args.to_vec();
        all.extend(cfg);
        ok(d, &all)
    };

    run(&["ingest", "--historical", "data/historical.jsonl", "--realtime", "data/realtime.jsonl", "-o", "ingested"]);
    run(&[
        "diff", "--historical", "data/historical.jsonl", "--realtime", "data/realtime.jsonl", "--labels",
        "data/labels.jsonl", "-o", "diffed", "--plots",
    ]);
    // re-running recovery reproduces the generator's corpus byte for byte
    assert_eq!(fs::read(d.join("diffed/corpus.jsonl")).unwrap(), fs::read(d.join("data/corpus.jsonl")).unwrap());
    let deletions: serde_json::Value = serde_json::from_str(&fs::read_to_string(d.join("diffed/deletions.json")).unwrap()).unwrap();
    assert!(deletions["moderation"]["overall"]["propaganda_ratio"].as_f64().unwrap() > 0.5);

    let labels = fs::read_to_string(d.join("data/labels.jsonl")).unwrap();
    let seed = labels.lines().find(|l| l.contains("\"propaganda\"")).unwrap();
    fs::write(d.join("seeds.jsonl"), format!("{seed}\n")).unwrap();
    run(&["label", "augment", "--data", "data", "--seeds", "seeds.jsonl", "-o", "aug"]);
    let aug: serde_json::Value = serde_json::from_str(&fs::read_to_string(d.join("aug/augmentation.json")).unwrap()).unwrap();
    assert!(aug["labeled"].as_u64().unwrap() > 1);

    run(&["analyze", "graph", "--data", "data", "-o", "graph", "--plots"]);
    let graph: serde_json::Value = serde_json::from_str(&fs::read_to_string(d.join("graph/graph.json")).unwrap()).unwrap();
    assert!(graph["largest_component_fraction"].as_f64().unwrap() >= 0.9);
    run(&["analyze", "stats", "--data", "data", "-o", "stats", "--plots"]);
    assert!(d.join("stats/accounts_propaganda.csv").is_file());
    run(&["analyze", "wordshift", "--data", "data", "-o", "shift"]);
    run(&["topics", "cluster", "--data", "data", "--eps", "0.4", "-o", "clusters"]);
    assert!(d.join("clusters/topics.jsonl").is_file());
    run(&["topics", "timeline", "--data", "data", "-o", "timeline", "--plots"]);
    assert!(d.join("timeline/plots/timeline.svg").is_file());
    run(&["features", "--data", "data", "-o", "features"]);
    let csv = fs::read_to_string(d.join("features/features.csv")).unwrap();
    assert!(csv.starts_with("channel_id,message_id,account_id,label,msg_length"));

    run(&["train", "gbt", "--data", "data", "-o", "trained"]);
    run(&["train", "mlp", "--input", "trigger", "--data", "data", "-o", "trained"]);
    run(&["train", "pair", "--data", "data", "-o", "trained"]);
    for m in ["features", "trigger", "pair"] {
        assert!(d.join(format!("trained/models/{m}.model.json")).is_file(), "{m}");
    }
    run(&["bench", "--data", "data", "--model", "trained/models/pair.model.json", "--pairs", "200", "-o", "bench"]);
    let bench: serde_json::Value = serde_json::from_str(&fs::read_to_string(d.join("bench/bench.json")).unwrap()).unwrap();
    assert_eq!(bench["result"]["pairs"], 200);

    // serve over a file of events in log mode
    let events: String = fs::read_to_string(d.join("data/realtime.jsonl")).unwrap().lines().take(50).map(|l| format!("{l}\n")).collect();
    fs::write(d.join("events.jsonl"), format!("{events}not json\n")).unwrap();
    fs::write(
        d.join("bot.toml"),
        "[bot]\npair_model = \"trained/models/pair.model.json\"\nembedding = { kind = \"hash\", dim = 64 }\n",
    )
    .unwrap();
    ok(d, &["serve", "--config", "bot.toml", "--input", "events.jsonl", "-o", "served"]);
    let verdicts = fs::read_to_string(d.join("served/verdicts.jsonl")).unwrap();
    assert_eq!(verdicts.lines().count(), 50);
    let summary: serde_json::Value = serde_json::from_str(&fs::read_to_string(d.join("served/serve.json")).unwrap()).unwrap();
    assert_eq!(summary["malformed"], 1);
}

#[test]
fn serve_refuses_to_act_without_an_allowlist() {
    let dir = workdir();
    fs::write(
        dir.path().join("bot.toml"),
        "[bot]\naction = \"delete\"\napi_base = \"http://127.0.0.1:9\"\napi_token = \"t\"\n",
    )
    .unwrap();
    let out = propwatch(dir.path(), &["serve", "--config", "bot.toml", "--input", "none.jsonl"]);
    assert_eq!(out.status.code(), Some(1), "{}", String::from_utf8_lossy(&out.stderr));
}
