use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use chrono::{DateTime, Duration, Utc};
use propwatch_core::coordination::{
    account_stats, build_graph, effectiveness, louvain, write_account_stats_csv, wordshift, CoordGraph,
};
use propwatch_core::corpus::{
    build_accounts, diff_deleted, merge, parse_export, parse_stream_bytes, read_dump, write_dump, Corpus, Message,
    ParseOutcome, Source,
};
use propwatch_core::embeddings::{hash_store, load_store, save_store, EmbeddingStore};
use propwatch_core::evaluation::{
    balance, build_examples, moderator_baseline, run_evaluation, temporal_split, train_embedding_model,
    train_features, EvalContext, Example,
};
use propwatch_core::features::{batch_extract, COLUMNS};
use propwatch_core::labeling::{
    augment_labels, read_exclusions, repetition_stats, username_pattern, Label, LabelSet,
};
use propwatch_core::models::{load_model, save_model, AnyModel, InputKind, MlpModel};
use propwatch_core::synthgen::{generate, GenConfig};
use propwatch_core::topics::{
    dbscan, keyword_augment, read_rules, topic_longevity, topic_timeline, TopicAssignment,
};
use propwatch_modbot::bench::{latency_bench, reply_pairs};
use propwatch_modbot::{Detector, Embedder, MissingPolicy};
use serde::Serialize;
use serde_json::json;

use crate::args::{AnalyzeCommand, Cohort, Command, Common, Feeds, Inputs, LabelCommand, MlpInput, TopicsCommand, TrainCommand};
use crate::error::{CliError, CliResult};
use crate::output::Run;
use crate::plot;
use crate::settings::Settings;

pub struct Ctx {
    pub common: Common,
    pub settings: Settings,
}

impl Ctx {
    fn run(&self, subcommand: &str) -> CliResult<Run> {
        Run::new(subcommand, self.common.config.as_deref(), &self.common.out, self.settings.seed())
    }
}

pub fn dispatch(command: Command, ctx: &Ctx) -> CliResult<()> {
    match command {
        Command::Ingest { feeds } => ingest(ctx, &feeds),
        Command::Diff { feeds, labels } => diff(ctx, &feeds, labels.as_deref()),
        Command::Label(LabelCommand::Augment {
            inputs,
            seeds,
            exclusions,
            min_len,
        }) => label_augment(ctx, &inputs, &seeds, exclusions.as_deref(), min_len),
        Command::Analyze(AnalyzeCommand::Graph { inputs, cohort, min_len }) => analyze_graph(ctx, &inputs, cohort, min_len),
        Command::Analyze(AnalyzeCommand::Stats { inputs }) => analyze_stats(ctx, &inputs),
        Command::Analyze(AnalyzeCommand::Wordshift { inputs, top_k }) => analyze_wordshift(ctx, &inputs, top_k),
        Command::Topics(TopicsCommand::Cluster {
            inputs,
            eps,
            min_pts,
            rules,
        }) => topics_cluster(ctx, &inputs, eps, min_pts, rules.as_deref()),
        Command::Topics(TopicsCommand::Timeline { inputs, bin_hours }) => topics_timeline(ctx, &inputs, bin_hours),
        Command::Features { inputs, all } => features(ctx, &inputs, all),
        Command::Train(TrainCommand::Gbt { inputs, cutoff }) => train(ctx, &inputs, cutoff.as_deref(), None),
        Command::Train(TrainCommand::Mlp { inputs, cutoff, input }) => {
            let kind = match input {
                MlpInput::Reply => InputKind::Reply,
                MlpInput::Trigger => InputKind::Trigger,
            };
            train(ctx, &inputs, cutoff.as_deref(), Some(kind))
        }
        Command::Train(TrainCommand::Pair { inputs, cutoff }) => {
            train(ctx, &inputs, cutoff.as_deref(), Some(InputKind::Pair))
        }
        Command::Eval { inputs, cutoff } => eval(ctx, &inputs, cutoff.as_deref()),
        Command::Bench {
            inputs,
            model,
            pairs,
            use_store,
        } => bench(ctx, &inputs, model.as_deref(), pairs, use_store),
        Command::Serve { input, listen, poll } => crate::serve::serve(ctx, input, listen, poll),
        Command::Synth { small } => synth(ctx, small),
    }
}

// ---------------------------------------------------------------------------
// Inputs

fn require(path: PathBuf, what: &str) -> CliResult<PathBuf> {
    if path.is_file() {
        Ok(path)
    } else {
        Err(CliError::Data(format!("{what} not found: {}", path.display())))
    }
}

impl Inputs {
    fn path(&self, explicit: &Option<PathBuf>, default: &str) -> PathBuf {
        explicit.clone().unwrap_or_else(|| self.data.join(default))
    }

    fn corpus(&self, run: &mut Run) -> CliResult<Corpus> {
        let p = require(self.path(&self.corpus, "corpus.jsonl"), "corpus")?;
        run.input(&p);
        let corpus = merge([read_dump(&p)?]);
        if corpus.is_empty() {
            return Err(CliError::Data(format!("corpus {} is empty", p.display())));
        }
        run.corpus(&corpus);
        Ok(corpus)
    }

    fn labels(&self, run: &mut Run) -> CliResult<LabelSet> {
        let p = require(self.path(&self.labels, "labels.jsonl"), "labels")?;
        run.input(&p);
        Ok(LabelSet::read_jsonl(&p)?)
    }

    /// Topics are optional; without them per-topic scores are empty.
    fn topics(&self, run: &mut Run) -> CliResult<TopicAssignment> {
        let p = self.path(&self.topics, "topics.jsonl");
        if self.topics.is_none() && !p.exists() {
            log::warn!("no topic assignment at {}; per-topic results will be empty", p.display());
            return Ok(TopicAssignment::new());
        }
        let p = require(p, "topic assignment")?;
        run.input(&p);
        Ok(TopicAssignment::read_jsonl(&p)?)
    }

    fn store(&self, run: &mut Run) -> CliResult<EmbeddingStore> {
        let p = require(self.path(&self.embeddings, "embeddings.tgemb"), "embedding store")?;
        run.input(&p);
        Ok(load_store(&p)?)
    }

    fn has_store(&self) -> bool {
        self.path(&self.embeddings, "embeddings.tgemb").is_file()
    }

    /// `--cutoff`, else the cutoff recorded by `synth` next to the data.
    fn cutoff(&self, flag: Option<&str>, required: bool) -> CliResult<Option<DateTime<Utc>>> {
        if let Some(s) = flag {
            return DateTime::parse_from_rfc3339(s)
                .map(|t| Some(t.with_timezone(&Utc)))
                .map_err(|e| CliError::Usage(format!("--cutoff {s}: {e}")));
        }
        let recorded = self.data.join("synth.json");
        if recorded.is_file() {
            let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&recorded)?)
                .map_err(|e| CliError::Data(format!("{}: {e}", recorded.display())))?;
            if let Some(t) = v["cutoff"].as_str().and_then(|s| DateTime::parse_from_rfc3339(s).ok()) {
                return Ok(Some(t.with_timezone(&Utc)));
            }
        }
        if required {
            Err(CliError::Usage("--cutoff is required (no synth.json with a recorded cutoff)".into()))
        } else {
            Ok(None)
        }
    }
}

fn cohort_accounts(labels: &LabelSet, cohort: Cohort) -> BTreeSet<String> {
    labels.accounts_with(match cohort {
        Cohort::Propaganda => Label::Propaganda,
        Cohort::User => Label::User,
    })
}

fn svg(ctx: &Ctx, run: &mut Run, name: &str, body: impl FnOnce() -> String) -> CliResult<()> {
    if ctx.common.plots {
        run.write_text(&format!("plots/{name}.svg"), &body())?;
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Ingestion

#[derive(Serialize)]
struct FileSummary {
    path: PathBuf,
    source: Source,
    messages: usize,
    malformed: usize,
    non_monotone: usize,
}

#[derive(Serialize)]
struct IngestSummary {
    files: Vec<FileSummary>,
    messages: usize,
    conflicts: usize,
}

fn read_feed(path: &Path, source: Source) -> CliResult<ParseOutcome> {
    let path = require(path.to_path_buf(), "input feed")?;
    if source == Source::Historical && path.extension().is_some_and(|e| e == "json") {
        return Ok(parse_export(&path)?);
    }
    let bytes = std::fs::read(&path)?;
    Ok(parse_stream_bytes(&bytes, source))
}

fn read_feeds(run: &mut Run, feeds: &Feeds) -> CliResult<(Corpus, IngestSummary)> {
    if feeds.historical.is_empty() && feeds.realtime.is_empty() {
        return Err(CliError::Usage("give at least one --historical or --realtime file".into()));
    }
    let mut batches = Vec::new();
    let mut files = Vec::new();
    let tagged = feeds
        .historical
        .iter()
        .map(|p| (p, Source::Historical))
        .chain(feeds.realtime.iter().map(|p| (p, Source::Realtime)));
    for (path, source) in tagged {
        let parsed = read_feed(path, source)?;
        run.input(path);
        files.push(FileSummary {
            path: path.clone(),
            source,
            messages: parsed.messages.len(),
            malformed: parsed.malformed.len(),
            non_monotone: parsed.non_monotone,
        });
        batches.push(parsed.messages);
    }
    let corpus = merge(batches);
    let summary = IngestSummary {
        files,
        messages: corpus.len(),
        conflicts: corpus.conflicts(),
    };
    Ok((corpus, summary))
}

fn ingest(ctx: &Ctx, feeds: &Feeds) -> CliResult<()> {
    let mut run = ctx.run("ingest")?;
    let (corpus, summary) = read_feeds(&mut run, feeds)?;
    run.corpus(&corpus);
    write_dump(&run.output("corpus.jsonl")?, &corpus)?;
    run.write_json("ingest.json", &summary)?;
    println!("{} messages in {} channels", corpus.len(), corpus.channels().count());
    run.finish().map(drop)
}

fn diff(ctx: &Ctx, feeds: &Feeds, labels: Option<&Path>) -> CliResult<()> {
    let mut run = ctx.run("diff")?;
    let (mut corpus, summary) = read_feeds(&mut run, feeds)?;
    let deletions = diff_deleted(&mut corpus)?;
    let moderation = match labels {
        Some(p) => {
            let p = require(p.to_path_buf(), "labels")?;
            run.input(&p);
            Some(moderator_baseline(&corpus, &LabelSet::read_jsonl(&p)?))
        }
        None => None,
    };
    run.corpus(&corpus);
    write_dump(&run.output("corpus.jsonl")?, &corpus)?;
    run.write_json(
        "deletions.json",
        &json!({"ingest": summary, "deletions": deletions, "moderation": moderation}),
    )?;
    svg(ctx, &mut run, "deletions", || {
        let bars: Vec<_> = deletions.channels.iter().map(|(c, d)| (c.clone(), d.deleted as f64)).collect();
        plot::bar_chart("Deleted messages per channel", &bars)
    })?;
    println!("{} deleted messages", deletions.total_deleted);
    if let Some(m) = &moderation {
        println!(
            "moderators removed {} of propaganda and {} of user messages",
            pct(m.overall.propaganda_ratio),
            pct(m.overall.user_ratio)
        );
    }
    run.finish().map(drop)
}

fn pct(x: Option<f64>) -> String {
    x.map_or_else(|| "n/a".into(), |v| format!("{:.1}%", v * 100.0))
}

// ---------------------------------------------------------------------------
// Labels and analysis

fn label_augment(
    ctx: &Ctx,
    inputs: &Inputs,
    seeds: &Path,
    exclusions: Option<&Path>,
    min_len: Option<usize>,
) -> CliResult<()> {
    let mut run = ctx.run("label augment")?;
    let corpus = inputs.corpus(&mut run)?;
    let seeds = require(seeds.to_path_buf(), "seed labels")?;
    run.input(&seeds);
    let seed_set = LabelSet::read_jsonl(&seeds)?;
    let excluded = match exclusions {
        Some(p) => {
            let p = require(p.to_path_buf(), "exclusion list")?;
            run.input(&p);
            read_exclusions(&p)?
        }
        None => BTreeSet::new(),
    };
    let min_len = min_len.unwrap_or(ctx.settings.labeling.min_len);
    let aug = augment_labels(&corpus, &seed_set, min_len, &excluded)?;
    aug.labels.write_jsonl(&run.output("labels.jsonl")?)?;
    run.write_json(
        "augmentation.json",
        &json!({
            "min_len": min_len,
            "seeds": seed_set.len(),
            "labeled": aug.labels.len(),
            "iterations": aug.iterations(),
            "additions": aug.additions,
            "review": aug.review,
            "blocked": aug.blocked,
        }),
    )?;
    println!(
        "{} seeds grew to {} labeled accounts in {} rounds",
        seed_set.len(),
        aug.labels.len(),
        aug.iterations()
    );
    run.finish().map(drop)
}

fn analyze_graph(ctx: &Ctx, inputs: &Inputs, cohort: Cohort, min_len: Option<usize>) -> CliResult<()> {
    let mut run = ctx.run("analyze graph")?;
    let corpus = inputs.corpus(&mut run)?;
    let accounts = cohort_accounts(&inputs.labels(&mut run)?, cohort);
    let min_len = min_len.unwrap_or(ctx.settings.graph.min_len);
    let graph: CoordGraph = build_graph(&corpus, &accounts, min_len)?;
    let partition = louvain(&graph, ctx.settings.seed())?;
    graph.write_edge_list(&run.output("graph_edges.csv")?)?;
    partition.write_jsonl(&graph, &run.output("communities.jsonl")?)?;
    let mut sizes = vec![0usize; partition.assignment.iter().max().map_or(0, |m| m + 1)];
    for &c in &partition.assignment {
        sizes[c] += 1;
    }
    sizes.sort_unstable_by(|a, b| b.cmp(a));
    run.write_json(
        "graph.json",
        &json!({
            "cohort": format!("{cohort:?}").to_lowercase(),
            "min_len": min_len,
            "accounts": accounts.len(),
            "nodes": graph.node_count(),
            "edges": graph.edge_count(),
            "components": graph.components().len(),
            "largest_component_fraction": graph.largest_component_fraction(),
            "communities": partition.community_count(),
            "community_sizes": sizes,
            "modularity": partition.modularity,
        }),
    )?;
    svg(ctx, &mut run, "community_sizes", || {
        let bars: Vec<_> = sizes.iter().enumerate().map(|(i, s)| (format!("#{}", i + 1), *s as f64)).collect();
        plot::bar_chart("Community sizes", &bars)
    })?;
    println!(
        "{} nodes, {} edges, largest component {:.1}%, {} communities, modularity {:.3}",
        graph.node_count(),
        graph.edge_count(),
        graph.largest_component_fraction() * 100.0,
        partition.community_count(),
        partition.modularity
    );
    run.finish().map(drop)
}

fn analyze_stats(ctx: &Ctx, inputs: &Inputs) -> CliResult<()> {
    let mut run = ctx.run("analyze stats")?;
    let corpus = inputs.corpus(&mut run)?;
    let labels = inputs.labels(&mut run)?;
    let accounts = build_accounts(&corpus);
    let mut summary = serde_json::Map::new();
    let mut lifespans = Vec::new();
    for cohort in [Cohort::Propaganda, Cohort::User] {
        let name = format!("{cohort:?}").to_lowercase();
        let members = cohort_accounts(&labels, cohort);
        let stats = account_stats(&corpus, &members);
        write_account_stats_csv(&stats, &run.output(&format!("accounts_{name}.csv"))?)?;
        let mut hours: Vec<f64> = stats.iter().map(|s| s.lifespan_hours).collect();
        hours.sort_by(f64::total_cmp);
        let median = (!hours.is_empty()).then(|| {
            let n = hours.len();
            if n % 2 == 1 {
                hours[n / 2]
            } else {
                (hours[n / 2 - 1] + hours[n / 2]) / 2.0
            }
        });
        let patterns: Vec<_> = accounts
            .iter()
            .filter(|a| members.contains(&a.account_id))
            .map(|a| username_pattern(a.username.as_deref()))
            .collect();
        let share = |f: fn(&propwatch_core::labeling::PatternReport) -> bool| {
            (!patterns.is_empty()).then(|| patterns.iter().filter(|p| f(p)).count() as f64 / patterns.len() as f64)
        };
        let eff = if members.is_empty() {
            None
        } else {
            Some(effectiveness(&corpus, &members)?)
        };
        let reuse = repetition_stats(&corpus, Some(&members), 50);
        summary.insert(
            name.clone(),
            json!({
                "accounts": members.len(),
                "active_accounts": stats.len(),
                "lifespan_median_hours": median,
                "effectiveness": eff,
                "username_western_name_number": share(|p| p.is_western_name_number),
                "username_dictionary_reference": share(|p| p.dictionary_reference),
                "username_hidden": share(|p| p.username_hidden),
                "repeated_texts": reuse.texts.iter().filter(|t| t.occurrences > 1).count(),
                "length_buckets": reuse.buckets,
            }),
        );
        lifespans.push((name, hours));
    }
    summary.insert("moderation".into(), serde_json::to_value(moderator_baseline(&corpus, &labels))?);
    run.write_json("stats.json", &summary)?;
    for (name, hours) in &lifespans {
        svg(ctx, &mut run, &format!("lifespan_{name}"), || {
            plot::histogram(&format!("Account lifespan, {name} (hours)"), hours, 20)
        })?;
    }
    for (name, hours) in &lifespans {
        println!("{name}: {} accounts", hours.len());
    }
    run.finish().map(drop)
}

fn analyze_wordshift(ctx: &Ctx, inputs: &Inputs, top_k: usize) -> CliResult<()> {
    let mut run = ctx.run("analyze wordshift")?;
    let corpus = inputs.corpus(&mut run)?;
    let labels = inputs.labels(&mut run)?;
    let (mut a, mut b) = (Vec::new(), Vec::new());
    for m in corpus.messages() {
        match m.account_id.as_deref().and_then(|id| labels.label_of(id)) {
            Some(Label::Propaganda) => a.push(m.text.as_str()),
            Some(Label::User) => b.push(m.text.as_str()),
            None => {}
        }
    }
    let shift = wordshift(&a, &b, top_k)?;
    run.write_json("wordshift.json", &shift)?;
    svg(ctx, &mut run, "wordshift", || {
        let bars: Vec<_> = shift.a_side.iter().map(|s| (s.stem.clone(), s.score)).collect();
        plot::bar_chart("Stems over-represented in propaganda", &bars)
    })?;
    for s in shift.a_side.iter().take(10) {
        println!("{:<20} {:+.5}", s.stem, s.score);
    }
    run.finish().map(drop)
}

// ---------------------------------------------------------------------------
// Topics

fn topics_cluster(
    ctx: &Ctx,
    inputs: &Inputs,
    eps: Option<f64>,
    min_pts: Option<usize>,
    rules: Option<&Path>,
) -> CliResult<()> {
    let mut run = ctx.run("topics cluster")?;
    let corpus = inputs.corpus(&mut run)?;
    let store = inputs.store(&mut run)?;
    let mut params = ctx.settings.topics.dbscan;
    params.eps = eps.unwrap_or(params.eps);
    params.min_pts = min_pts.unwrap_or(params.min_pts);
    let (keys, points): (Vec<_>, Vec<_>) = corpus
        .messages()
        .filter_map(|m| store.get_key(&m.key()).map(|v| (m.key(), v)))
        .unzip();
    let missing = corpus.len() - keys.len();
    if missing > 0 {
        log::warn!("{missing} messages have no embedding and stay unassigned");
    }
    let clusters = dbscan(&points, &params)?;
    let mut assignment = TopicAssignment::from_clusters(&keys, &clusters);
    if let Some(p) = rules {
        let p = require(p.to_path_buf(), "keyword rules")?;
        run.input(&p);
        assignment = keyword_augment(&assignment, &corpus, &read_rules(&p)?);
    }
    assignment.write_jsonl(&run.output("topics.jsonl")?)?;
    let clusters_found = clusters.iter().flatten().collect::<BTreeSet<_>>().len();
    run.write_json(
        "topics_summary.json",
        &json!({
            "params": params,
            "messages": keys.len(),
            "without_embedding": missing,
            "clusters": clusters_found,
            "noise": clusters.iter().filter(|c| c.is_none()).count(),
            "assigned": assignment.assigned_count(),
            "topics": assignment.topics(),
        }),
    )?;
    println!(
        "{clusters_found} clusters; {} of {} messages assigned",
        assignment.assigned_count(),
        keys.len()
    );
    run.finish().map(drop)
}

fn topics_timeline(ctx: &Ctx, inputs: &Inputs, bin_hours: Option<u32>) -> CliResult<()> {
    let mut run = ctx.run("topics timeline")?;
    let corpus = inputs.corpus(&mut run)?;
    let p = require(inputs.path(&inputs.topics, "topics.jsonl"), "topic assignment")?;
    run.input(&p);
    let assignment = TopicAssignment::read_jsonl(&p)?;
    let hours = bin_hours.unwrap_or(ctx.settings.topics.bin_hours);
    let timeline = topic_timeline(&corpus, &assignment, Duration::hours(hours as i64))?;
    timeline.write_csv(&run.output("timeline.csv")?)?;
    run.write_json("longevity.json", &topic_longevity(&timeline))?;
    svg(ctx, &mut run, "timeline", || {
        let x: Vec<String> = (0..timeline.bins).map(|b| timeline.bin_start(b).format("%m-%d").to_string()).collect();
        let series: Vec<_> = timeline
            .counts
            .iter()
            .map(|(t, c)| (t.clone(), c.iter().map(|&v| v as f64).collect()))
            .collect();
        plot::line_chart("Messages per topic", &x, &series)
    })?;
    println!("{} topics over {} bins", timeline.counts.len(), timeline.bins);
    run.finish().map(drop)
}

// ---------------------------------------------------------------------------
// Features and models

fn features(ctx: &Ctx, inputs: &Inputs, all: bool) -> CliResult<()> {
    let mut run = ctx.run("features")?;
    let corpus = inputs.corpus(&mut run)?;
    let labels = if all { LabelSet::new() } else { inputs.labels(&mut run)? };
    let selected: Vec<&Message> = corpus
        .messages()
        .filter(|m| all || m.account_id.as_deref().is_some_and(|a| labels.label_of(a).is_some()))
        .collect();
    let pairs: Vec<_> = selected.iter().map(|m| (*m, corpus.trigger_of(m))).collect();
    let matrix = batch_extract(&pairs, ctx.settings.eval.time_mode)?;
    let mut csv = format!("channel_id,message_id,account_id,label,{}\n", COLUMNS.join(","));
    for (m, row) in selected.iter().zip(&matrix.rows) {
        let label = m
            .account_id
            .as_deref()
            .and_then(|a| labels.label_of(a))
            .map_or("", |l| if l.is_propaganda() { "propaganda" } else { "user" });
        let values: Vec<String> = row.to_row().iter().map(|v| v.to_string()).collect();
        csv.push_str(&format!(
            "{},{},{},{label},{}\n",
            m.channel_id,
            m.message_id,
            m.account_id.as_deref().unwrap_or(""),
            values.join(",")
        ));
    }
    run.write_text("features.csv", &csv)?;
    run.write_json("features.schema.json", &matrix.schema)?;
    println!("{} feature rows", matrix.rows.len());
    run.finish().map(drop)
}

fn model_name(kind: Option<InputKind>) -> &'static str {
    match kind {
        None => "features",
        Some(InputKind::Reply) => "reply",
        Some(InputKind::Trigger) => "trigger",
        Some(InputKind::Pair) => "pair",
    }
}

fn save(run: &mut Run, name: &str, model: AnyModel) -> CliResult<String> {
    let id = model.id();
    save_model(&run.output(&format!("models/{name}.model.json"))?, &model)?;
    Ok(id)
}

fn train(ctx: &Ctx, inputs: &Inputs, cutoff: Option<&str>, kind: Option<InputKind>) -> CliResult<()> {
    let name = model_name(kind);
    let mut run = ctx.run(&format!("train {}", if kind.is_none() { "gbt" } else { name }))?;
    let corpus = inputs.corpus(&mut run)?;
    let labels = inputs.labels(&mut run)?;
    let store = match kind {
        Some(_) => Some(inputs.store(&mut run)?),
        None => None,
    };
    let assignment = inputs.topics(&mut run)?;
    let examples = build_examples(&corpus, &labels, &assignment);
    let cutoff = inputs.cutoff(cutoff, false)?;
    let pool: Vec<Example> = match cutoff {
        Some(t) => temporal_split(&examples, t)?.train,
        None => examples,
    };
    let train = balance(&pool, ctx.settings.seed());
    if train.is_empty() {
        return Err(CliError::Data("no training examples from both classes".into()));
    }
    let cfg = &ctx.settings.eval;
    let ctx_eval = EvalContext {
        corpus: &corpus,
        store: store.as_ref(),
        time_mode: cfg.time_mode,
    };
    let model = match kind {
        None => AnyModel::Gbt(train_features(&train, &ctx_eval, &cfg.gbt)?),
        Some(k) => AnyModel::Mlp(train_embedding_model(&train, &ctx_eval, k, &cfg.mlp)?),
    };
    let id = save(&mut run, name, model)?;
    run.write_json(
        &format!("models/{name}.train.json"),
        &json!({"model_id": id, "examples": train.len(), "cutoff": cutoff}),
    )?;
    println!("trained {id} on {} examples", train.len());
    run.finish().map(drop)
}

fn eval(ctx: &Ctx, inputs: &Inputs, cutoff: Option<&str>) -> CliResult<()> {
    let mut run = ctx.run("eval")?;
    let corpus = inputs.corpus(&mut run)?;
    let labels = inputs.labels(&mut run)?;
    let assignment = inputs.topics(&mut run)?;
    let store = if inputs.embeddings.is_some() || inputs.has_store() {
        Some(inputs.store(&mut run)?)
    } else {
        log::warn!("no embedding store; only the feature model is evaluated");
        None
    };
    let cutoff = inputs.cutoff(cutoff, true)?.expect("required");
    let evaluation = run_evaluation(&corpus, &labels, &assignment, store.as_ref(), cutoff, &ctx.settings.eval)?;
    let report = &evaluation.report;
    run.write_text("report.json", &report.to_json()?)?;
    run.write_text("report.md", &report.to_markdown())?;
    let d = &evaluation.detectors;
    save(&mut run, "features", AnyModel::Gbt(d.features.clone()))?;
    for (name, m) in [("reply", &d.reply), ("trigger", &d.trigger), ("pair", &d.pair)] {
        if let Some(m) = m {
            save(&mut run, name, AnyModel::Mlp(m.clone()))?;
        }
    }
    svg(ctx, &mut run, "accuracy", || {
        let bars: Vec<_> = report
            .models
            .iter()
            .map(|m| (m.model.clone(), m.overall_accuracy))
            .collect();
        plot::bar_chart("Overall accuracy", &bars)
    })?;
    for m in &report.models {
        println!(
            "{:<10} accuracy {}  false positives {}  unseen topics {}",
            m.model,
            pct(Some(m.overall_accuracy)),
            pct(m.false_positive_rate),
            pct(m.new_topic_accuracy)
        );
    }
    run.finish().map(drop)
}

fn bench(ctx: &Ctx, inputs: &Inputs, model: Option<&Path>, n: usize, use_store: bool) -> CliResult<()> {
    let mut run = ctx.run("bench")?;
    let corpus = inputs.corpus(&mut run)?;
    let path = require(
        model.map_or_else(|| inputs.data.join("models/pair.model.json"), Path::to_path_buf),
        "pair model",
    )?;
    run.input(&path);
    let any = load_model(&path)?;
    let id = any.id();
    let pair: MlpModel = any.into_mlp()?;
    let embedder = if use_store {
        Embedder::Store(inputs.store(&mut run)?)
    } else {
        Embedder::Hash {
            dim: pair.input.embedding_dim,
        }
    };
    let detector = Detector::new(pair, id, None, embedder, ctx.settings.bot.threshold, MissingPolicy::Skip)?;
    let mut pairs = reply_pairs(&corpus, n);
    if pairs.is_empty() {
        return Err(CliError::Data("the corpus has no resolvable reply pairs".into()));
    }
    let available = pairs.len();
    while pairs.len() < n {
        pairs.push(pairs[pairs.len() % available].clone());
    }
    let result = latency_bench(&detector, &pairs)?;
    run.write_json("bench.json", &json!({"distinct_pairs": available, "result": result}))?;
    println!(
        "{} pairs: mean {:.3} ms, std {} ms",
        result.pairs,
        result.mean_secs * 1e3,
        result.std_secs.map_or_else(|| "n/a".into(), |s| format!("{:.3}", s * 1e3))
    );
    run.finish().map(drop)
}

// ---------------------------------------------------------------------------
// Synthetic data

fn write_messages(path: &Path, messages: &[Message]) -> CliResult<()> {
    let mut text = String::new();
    for m in messages {
        text.push_str(&serde_json::to_string(m)?);
        text.push('\n');
    }
    std::fs::write(path, text).map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))
}

fn synth(ctx: &Ctx, small: bool) -> CliResult<()> {
    let mut run = ctx.run("synth")?;
    let cfg = if small {
        GenConfig::small(ctx.settings.synth.seed)
    } else {
        ctx.settings.synth.clone()
    };
    let data = generate(&cfg)?;
    run.corpus(&data.corpus);
    write_messages(&run.output("historical.jsonl")?, &data.historical)?;
    write_messages(&run.output("realtime.jsonl")?, &data.realtime)?;
    write_dump(&run.output("corpus.jsonl")?, &data.corpus)?;
    data.labels.write_jsonl(&run.output("labels.jsonl")?)?;
    data.topics.write_jsonl(&run.output("topics.jsonl")?)?;
    let store = hash_store(&data.corpus, ctx.settings.embeddings.hash_dim)?;
    save_store(&store, &run.output("embeddings.tgemb")?)?;
    run.write_json(
        "synth.json",
        &json!({"cutoff": data.cutoff(), "config": cfg, "planted": data.planted}),
    )?;
    println!(
        "{} messages, {} propaganda and {} user accounts",
        data.corpus.len(),
        data.planted.propaganda_accounts,
        data.planted.user_accounts
    );
    run.finish().map(drop)
}
