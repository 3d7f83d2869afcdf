//! Shared-text coordination graph, Louvain communities and cohort statistics.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rust_stemmers::{Algorithm, Stemmer};
use serde::Serialize;
use unicode_segmentation::UnicodeSegmentation;

use crate::corpus::Corpus;
use crate::error::{Error, Result};
use crate::text;

/// Texts must be strictly longer than this to link two accounts.
pub const DEFAULT_GRAPH_MIN_LEN: usize = 10;

/// Up to this many shared texts are kept per edge for inspection.
const EDGE_SAMPLES: usize = 3;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Edge {
    /// Number of distinct shared texts.
    pub weight: f64,
    pub samples: Vec<String>,
}

/// Undirected account graph; nodes are kept sorted by account id.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CoordGraph {
    nodes: Vec<String>,
    index: HashMap<String, usize>,
    edges: BTreeMap<(usize, usize), Edge>,
}

impl CoordGraph {
    /// Builds a graph from explicit weighted edges. Self-loops and
    /// non-positive weights are rejected; repeated pairs accumulate.
    pub fn from_edges<S: AsRef<str>>(
        nodes: impl IntoIterator<Item = S>,
        edges: impl IntoIterator<Item = (S, S, f64)>,
    ) -> Result<Self> {
        let mut g = CoordGraph::with_nodes(nodes.into_iter().map(|s| s.as_ref().to_string()));
        for (a, b, w) in edges {
            let (a, b) = (a.as_ref(), b.as_ref());
            if a == b {
                return Err(Error::InvalidInput(format!("self-loop on {a}")));
            }
            if !(w > 0.0 && w.is_finite()) {
                return Err(Error::InvalidInput(format!("edge {a}-{b} has weight {w}")));
            }
            let (Some(&i), Some(&j)) = (g.index.get(a), g.index.get(b)) else {
                return Err(Error::InvalidInput(format!("edge {a}-{b} references an unknown node")));
            };
            g.edges
                .entry((i.min(j), i.max(j)))
                .or_insert(Edge {
                    weight: 0.0,
                    samples: Vec::new(),
                })
                .weight += w;
        }
        Ok(g)
    }

    fn with_nodes(nodes: impl IntoIterator<Item = String>) -> Self {
        let nodes: Vec<String> = nodes.into_iter().collect::<BTreeSet<_>>().into_iter().collect();
        let index = nodes.iter().enumerate().map(|(i, n)| (n.clone(), i)).collect();
        CoordGraph {
            nodes,
            index,
            edges: BTreeMap::new(),
        }
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn nodes(&self) -> &[String] {
        &self.nodes
    }

    pub fn node_index(&self, account: &str) -> Option<usize> {
        self.index.get(account).copied()
    }

    /// Edges as `(u, v, edge)` with `u < v`.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize, &Edge)> {
        self.edges.iter().map(|(&(u, v), e)| (u, v, e))
    }

    pub fn edge(&self, a: &str, b: &str) -> Option<&Edge> {
        let (i, j) = (self.node_index(a)?, self.node_index(b)?);
        self.edges.get(&(i.min(j), i.max(j)))
    }

    /// Same topology with every weight set to 1.
    pub fn unweighted(&self) -> Self {
        let mut g = self.clone();
        for e in g.edges.values_mut() {
            e.weight = 1.0;
        }
        g
    }

    pub fn total_weight(&self) -> f64 {
        self.edges.values().map(|e| e.weight).sum()
    }

    pub fn degrees(&self) -> Vec<f64> {
        let mut k = vec![0.0; self.nodes.len()];
        for (&(u, v), e) in &self.edges {
            k[u] += e.weight;
            k[v] += e.weight;
        }
        k
    }

    pub fn adjacency(&self) -> Vec<Vec<(usize, f64)>> {
        let mut adj = vec![Vec::new(); self.nodes.len()];
        for (&(u, v), e) in &self.edges {
            adj[u].push((v, e.weight));
            adj[v].push((u, e.weight));
        }
        adj
    }

    /// Connected components as node-index lists, largest first (ties by
    /// smallest member).
    pub fn components(&self) -> Vec<Vec<usize>> {
        let adj = self.adjacency();
        let mut seen = vec![false; self.nodes.len()];
        let mut comps = Vec::new();
        for start in 0..self.nodes.len() {
            if seen[start] {
                continue;
            }
            seen[start] = true;
            let mut comp = vec![start];
            let mut stack = vec![start];
            while let Some(u) = stack.pop() {
                for &(v, _) in &adj[u] {
                    if !seen[v] {
                        seen[v] = true;
                        comp.push(v);
                        stack.push(v);
                    }
                }
            }
            comp.sort_unstable();
            comps.push(comp);
        }
        comps.sort_by(|a, b| b.len().cmp(&a.len()).then(a[0].cmp(&b[0])));
        comps
    }

    /// Share of nodes inside the largest connected component.
    pub fn largest_component_fraction(&self) -> f64 {
        if self.nodes.is_empty() {
            return 0.0;
        }
        self.components()[0].len() as f64 / self.nodes.len() as f64
    }

    /// `a<TAB>b<TAB>weight` lines.
    pub fn write_edge_list(&self, path: &Path) -> Result<()> {
        let f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(f);
        for (u, v, e) in self.edges() {
            writeln!(w, "{}\t{}\t{}", self.nodes[u], self.nodes[v], e.weight)
                .map_err(|e| Error::io(path, e))?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}

/// Links two cohort accounts for every distinct canonical text longer than
/// `min_len` that both posted.
pub fn build_graph(corpus: &Corpus, cohort: &BTreeSet<String>, min_len: usize) -> Result<CoordGraph> {
    if cohort.is_empty() {
        return Err(Error::InvalidInput("coordination graph needs a non-empty cohort".into()));
    }
    let mut writers: BTreeMap<String, BTreeSet<&str>> = BTreeMap::new();
    for m in corpus.messages() {
        let Some(a) = m.account_id.as_deref().filter(|a| cohort.contains(*a)) else {
            continue;
        };
        if let Some(t) = text::long_canonical(&m.text, min_len) {
            writers.entry(t).or_default().insert(a);
        }
    }

    let mut g = CoordGraph::with_nodes(cohort.iter().cloned());
    for (t, accounts) in writers {
        if accounts.len() < 2 {
            continue;
        }
        let ids: Vec<usize> = accounts.iter().map(|a| g.index[*a]).collect();
        for (x, &i) in ids.iter().enumerate() {
            for &j in &ids[x + 1..] {
                let e = g.edges.entry((i.min(j), i.max(j))).or_insert(Edge {
                    weight: 0.0,
                    samples: Vec::new(),
                });
                e.weight += 1.0;
                if e.samples.len() < EDGE_SAMPLES {
                    e.samples.push(t.clone());
                }
            }
        }
    }
    Ok(g)
}

// ---------------------------------------------------------------------------
// Communities

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Partition {
    /// Community of each node, indexed like [`CoordGraph::nodes`].
    pub assignment: Vec<usize>,
    pub modularity: f64,
}

impl Partition {
    pub fn community_count(&self) -> usize {
        self.assignment.iter().collect::<BTreeSet<_>>().len()
    }

    /// JSONL `{account_id, community}`.
    pub fn write_jsonl(&self, graph: &CoordGraph, path: &Path) -> Result<()> {
        #[derive(Serialize)]
        struct Row<'a> {
            account_id: &'a str,
            community: usize,
        }
        let f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(f);
        for (node, &community) in graph.nodes().iter().zip(&self.assignment) {
            serde_json::to_writer(&mut w, &Row { account_id: node, community })?;
            w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}

/// Weighted Newman modularity `Σ_c [in_c/2m − (tot_c/2m)²]`. Zero for a
/// graph without edges.
pub fn modularity(graph: &CoordGraph, assignment: &[usize]) -> f64 {
    let m = graph.total_weight();
    if m == 0.0 {
        return 0.0;
    }
    let mut inside: HashMap<usize, f64> = HashMap::new();
    let mut total: HashMap<usize, f64> = HashMap::new();
    for (u, v, e) in graph.edges() {
        *total.entry(assignment[u]).or_default() += e.weight;
        *total.entry(assignment[v]).or_default() += e.weight;
        if assignment[u] == assignment[v] {
            *inside.entry(assignment[u]).or_default() += 2.0 * e.weight;
        }
    }
    let two_m = 2.0 * m;
    total
        .iter()
        .map(|(c, tot)| inside.get(c).copied().unwrap_or(0.0) / two_m - (tot / two_m).powi(2))
        .sum()
}

/// Graph at one aggregation level. `loops[u]` holds the weight of edges
/// already folded inside super-node `u`, each counted once.
struct Level {
    adj: Vec<Vec<(usize, f64)>>,
    loops: Vec<f64>,
}

impl Level {
    fn degree(&self, u: usize) -> f64 {
        self.adj[u].iter().map(|&(_, w)| w).sum::<f64>() + 2.0 * self.loops[u]
    }

    fn aggregate(&self, comm: &[usize], count: usize) -> Level {
        let mut loops = vec![0.0; count];
        let mut maps: Vec<BTreeMap<usize, f64>> = vec![BTreeMap::new(); count];
        for u in 0..self.adj.len() {
            let cu = comm[u];
            loops[cu] += self.loops[u];
            for &(v, w) in &self.adj[u] {
                let cv = comm[v];
                if cu == cv {
                    // seen from both endpoints
                    loops[cu] += w / 2.0;
                } else {
                    *maps[cu].entry(cv).or_default() += w;
                }
            }
        }
        Level {
            adj: maps.into_iter().map(|m| m.into_iter().collect()).collect(),
            loops,
        }
    }
}

const GAIN_EPS: f64 = 1e-12;

/// One local-moving phase. Returns whether any node moved.
fn local_moves(level: &Level, comm: &mut [usize], m: f64, rng: &mut ChaCha8Rng) -> bool {
    let n = level.adj.len();
    let k: Vec<f64> = (0..n).map(|u| level.degree(u)).collect();
    let mut tot = vec![0.0; n];
    for u in 0..n {
        tot[comm[u]] += k[u];
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);

    let mut moved_any = false;
    loop {
        let mut moved = false;
        for &u in &order {
            let own = comm[u];
            let mut links: BTreeMap<usize, f64> = BTreeMap::new();
            links.insert(own, 0.0);
            for &(v, w) in &level.adj[u] {
                *links.entry(comm[v]).or_default() += w;
            }
            tot[own] -= k[u];
            let gain = |c: usize, w: f64| w - tot[c] * k[u] / (2.0 * m);
            let stay = gain(own, links[&own]);
            let mut best = own;
            let mut best_gain = stay;
            // BTreeMap iterates ids ascending, so the first strict winner is the
            // lowest id among equal gains.
            for (&c, &w) in &links {
                let g = gain(c, w);
                if g > best_gain + GAIN_EPS {
                    best = c;
                    best_gain = g;
                }
            }
            tot[best] += k[u];
            if best != own {
                comm[u] = best;
                moved = true;
                moved_any = true;
            }
        }
        if !moved {
            return moved_any;
        }
    }
}

fn renumber(comm: &mut [usize]) -> usize {
    let mut map: HashMap<usize, usize> = HashMap::new();
    for c in comm.iter_mut() {
        let next = map.len();
        *c = *map.entry(*c).or_insert(next);
    }
    map.len()
}

/// Louvain with the modularity of the original graph after each level,
/// starting with the singleton partition.
pub fn louvain_trace(graph: &CoordGraph, seed: u64) -> Result<(Partition, Vec<f64>)> {
    if graph.node_count() == 0 {
        return Err(Error::InvalidInput("louvain needs a non-empty graph".into()));
    }
    let n = graph.node_count();
    let mut membership: Vec<usize> = (0..n).collect();
    let mut trace = vec![modularity(graph, &membership)];
    let m = graph.total_weight();
    if m == 0.0 {
        return Ok((
            Partition {
                assignment: membership,
                modularity: trace[0],
            },
            trace,
        ));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut level = Level {
        adj: graph.adjacency(),
        loops: vec![0.0; n],
    };
    loop {
        let mut comm: Vec<usize> = (0..level.adj.len()).collect();
        if !local_moves(&level, &mut comm, m, &mut rng) {
            break;
        }
        let count = renumber(&mut comm);
        for c in membership.iter_mut() {
            *c = comm[*c];
        }
        trace.push(modularity(graph, &membership));
        if count == level.adj.len() {
            break;
        }
        level = level.aggregate(&comm, count);
    }
    renumber(&mut membership);
    let q = modularity(graph, &membership);
    Ok((
        Partition {
            assignment: membership,
            modularity: q,
        },
        trace,
    ))
}

/// Deterministic for a fixed seed: nodes are swept in a seeded shuffle of
/// sorted-id order, and equal gains go to the lowest community id.
/// Community ids are numbered by first appearance in node order.
pub fn louvain(graph: &CoordGraph, seed: u64) -> Result<Partition> {
    louvain_trace(graph, seed).map(|(p, _)| p)
}

// ---------------------------------------------------------------------------
// Cohort statistics

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AccountStats {
    pub account_id: String,
    pub lifespan_hours: f64,
    pub message_count: usize,
    pub channel_count: usize,
    pub mean_message_length: f64,
}

pub const ACCOUNT_STATS_HEADER: &str =
    "account_id,lifespan_hours,message_count,channel_count,mean_message_length";

/// Per-account lifespan (first to last message), volume, spread and length.
pub fn account_stats(corpus: &Corpus, cohort: &BTreeSet<String>) -> Vec<AccountStats> {
    crate::corpus::build_accounts(corpus)
        .into_iter()
        .filter(|a| cohort.contains(&a.account_id))
        .map(|a| {
            let total_len: usize = a
                .message_ids
                .iter()
                .map(|k| text::char_len(&corpus.get(k).expect("indexed message").text))
                .sum();
            AccountStats {
                lifespan_hours: (a.last_seen - a.first_seen).num_seconds() as f64 / 3600.0,
                message_count: a.message_ids.len(),
                channel_count: a.channels_active.len(),
                mean_message_length: total_len as f64 / a.message_ids.len() as f64,
                account_id: a.account_id,
            }
        })
        .collect()
}

pub fn write_account_stats_csv(stats: &[AccountStats], path: &Path) -> Result<()> {
    let f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(f);
    let io = |e| Error::io(path, e);
    writeln!(w, "{ACCOUNT_STATS_HEADER}").map_err(io)?;
    for s in stats {
        writeln!(
            w,
            "{},{},{},{},{}",
            s.account_id, s.lifespan_hours, s.message_count, s.channel_count, s.mean_message_length
        )
        .map_err(io)?;
    }
    w.flush().map_err(io)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Effectiveness {
    pub mean: f64,
    pub messages: usize,
    pub replies: usize,
    /// replies received -> number of cohort messages
    pub distribution: BTreeMap<usize, usize>,
}

/// Mean number of replies received per message written by the cohort.
pub fn effectiveness(corpus: &Corpus, cohort: &BTreeSet<String>) -> Result<Effectiveness> {
    let mut distribution = BTreeMap::new();
    let mut messages = 0;
    let mut replies = 0;
    for m in corpus.messages() {
        if !m.account_id.as_deref().is_some_and(|a| cohort.contains(a)) {
            continue;
        }
        let r = corpus.replies_to(&m.key()).len();
        *distribution.entry(r).or_insert(0) += 1;
        messages += 1;
        replies += r;
    }
    if messages == 0 {
        return Err(Error::InvalidInput("cohort has no messages".into()));
    }
    Ok(Effectiveness {
        mean: replies as f64 / messages as f64,
        messages,
        replies,
        distribution,
    })
}

// ---------------------------------------------------------------------------
// Wordshift

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StemShift {
    pub stem: String,
    pub freq_a: f64,
    pub freq_b: f64,
    /// `freq_a - freq_b`
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Wordshift {
    /// Stems over-represented in A, strongest first.
    pub a_side: Vec<StemShift>,
    /// Stems over-represented in B, strongest first.
    pub b_side: Vec<StemShift>,
    /// Every stem, by descending score.
    pub all: Vec<StemShift>,
}

fn is_cyrillic(c: char) -> bool {
    ('\u{0400}'..='\u{04FF}').contains(&c)
}

/// Lowercased word tokens reduced to Snowball stems (Russian stemmer for
/// Cyrillic tokens, English otherwise). Tokens without letters are dropped.
pub fn stems(text: &str) -> Vec<String> {
    thread_local! {
        static RU: Stemmer = Stemmer::create(Algorithm::Russian);
        static EN: Stemmer = Stemmer::create(Algorithm::English);
    }
    text.unicode_words()
        .filter(|w| w.chars().any(char::is_alphabetic))
        .map(|w| {
            let w = w.to_lowercase();
            if w.chars().any(is_cyrillic) {
                RU.with(|s| s.stem(&w).into_owned())
            } else {
                EN.with(|s| s.stem(&w).into_owned())
            }
        })
        .collect()
}

fn stem_frequencies<S: AsRef<str>>(texts: &[S]) -> (HashMap<String, usize>, usize) {
    let mut counts = HashMap::new();
    let mut total = 0;
    for t in texts {
        for s in stems(t.as_ref()) {
            *counts.entry(s).or_insert(0) += 1;
            total += 1;
        }
    }
    (counts, total)
}

pub fn wordshift<S: AsRef<str>>(a: &[S], b: &[S], top_k: usize) -> Result<Wordshift> {
    let (ca, na) = stem_frequencies(a);
    let (cb, nb) = stem_frequencies(b);
    if na == 0 || nb == 0 {
        return Err(Error::InvalidInput("wordshift needs words on both sides".into()));
    }
    let vocab: BTreeSet<&String> = ca.keys().chain(cb.keys()).collect();
    let mut all: Vec<StemShift> = vocab
        .into_iter()
        .map(|s| {
            let freq_a = ca.get(s).copied().unwrap_or(0) as f64 / na as f64;
            let freq_b = cb.get(s).copied().unwrap_or(0) as f64 / nb as f64;
            StemShift {
                stem: s.clone(),
                freq_a,
                freq_b,
                score: freq_a - freq_b,
            }
        })
        .collect();
    all.sort_by(|x, y| y.score.total_cmp(&x.score).then_with(|| x.stem.cmp(&y.stem)));
    let a_side = all.iter().filter(|s| s.score > 0.0).take(top_k).cloned().collect();
    let b_side = all
        .iter()
        .rev()
        .filter(|s| s.score < 0.0)
        .take(top_k)
        .cloned()
        .collect();
    Ok(Wordshift { a_side, b_side, all })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{merge, Message, Source};
    use chrono::{TimeZone, Utc};

    fn m(id: i64, account: &str, text: &str, t: i64) -> Message {
        Message {
            channel_id: "c".into(),
            message_id: id,
            account_id: Some(account.into()),
            timestamp: Utc.timestamp_opt(1_700_000_000 + t, 0).unwrap(),
            text: text.into(),
            reply_to: None,
            first_name: None,
            last_name: None,
            username: None,
            deleted: false,
            source: Source::Realtime,
        }
    }

    fn cohort(ids: &[&str]) -> BTreeSet<String> {
        ids.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn shared_text_creates_edge_short_text_does_not() {
        let corpus = merge(vec![vec![
            m(1, "a", "hello world!", 0),
            m(2, "b", "hello world!", 1),
            m(3, "a", "yes", 2),
            m(4, "c", "yes", 3),
        ]]);
        let g = build_graph(&corpus, &cohort(&["a", "b", "c"]), 10).unwrap();
        assert_eq!(g.edge_count(), 1);
        let e = g.edge("a", "b").unwrap();
        assert_eq!(e.weight, 1.0);
        assert_eq!(e.samples, vec!["hello world!"]);
        assert!(g.edge("a", "c").is_none());
        assert!(build_graph(&corpus, &BTreeSet::new(), 10).is_err());
    }

    #[test]
    fn weights_count_distinct_texts() {
        let corpus = merge(vec![vec![
            m(1, "a", "first shared text", 0),
            m(2, "b", "first shared text", 1),
            m(3, "a", "second shared text", 2),
            m(4, "b", "second shared text", 3),
            m(5, "b", "second shared text", 4),
        ]]);
        let g = build_graph(&corpus, &cohort(&["a", "b"]), 10).unwrap();
        assert_eq!(g.edge("a", "b").unwrap().weight, 2.0);
        assert_eq!(g.unweighted().edge("a", "b").unwrap().weight, 1.0);
    }

    #[test]
    fn modularity_closed_forms() {
        let g = CoordGraph::from_edges(
            ["a", "b", "c", "d"],
            [("a", "b", 1.0), ("b", "c", 2.0), ("c", "d", 1.0)],
        )
        .unwrap();
        let k = g.degrees();
        let two_m = 2.0 * g.total_weight();
        let singleton: f64 = -k.iter().map(|d| (d / two_m).powi(2)).sum::<f64>();
        assert!((modularity(&g, &[0, 1, 2, 3]) - singleton).abs() < 1e-15);
        assert!(modularity(&g, &[0, 0, 0, 0]).abs() < 1e-15);
    }

    #[test]
    fn single_edge_merges_into_one_community() {
        let g = CoordGraph::from_edges(["a", "b"], [("a", "b", 1.0)]).unwrap();
        let p = louvain(&g, 1).unwrap();
        assert_eq!(p.assignment, vec![0, 0]);
        assert!(p.modularity.abs() < 1e-15);
        assert!((modularity(&g, &[0, 1]) + 0.5).abs() < 1e-15);
    }

    #[test]
    fn louvain_is_deterministic_per_seed() {
        let edges: Vec<(String, String, f64)> = (0..12)
            .flat_map(|i| [(i, (i + 1) % 12), (i, (i + 5) % 12)])
            .map(|(a, b)| (format!("n{a:02}"), format!("n{b:02}"), 1.0))
            .collect();
        let nodes: Vec<String> = (0..12).map(|i| format!("n{i:02}")).collect();
        let g = CoordGraph::from_edges(nodes, edges).unwrap();
        assert_eq!(louvain(&g, 9).unwrap(), louvain(&g, 9).unwrap());
    }

    #[test]
    fn effectiveness_counts_replies() {
        let mut msgs = vec![m(1, "p", "propaganda", 0)];
        for i in 0..3 {
            let mut r = m(10 + i, &format!("u{i}"), "reply", 10 + i);
            r.reply_to = Some(1);
            msgs.push(r);
        }
        let corpus = merge(vec![msgs]);
        let e = effectiveness(&corpus, &cohort(&["p"])).unwrap();
        assert_eq!(e.mean, 3.0);
        assert_eq!(effectiveness(&corpus, &cohort(&["u0"])).unwrap().mean, 0.0);
        assert!(effectiveness(&corpus, &cohort(&["nobody"])).is_err());
    }

    #[test]
    fn lifespan_in_hours() {
        let corpus = merge(vec![vec![
            m(1, "a", "one", 0),
            m(2, "b", "first", 0),
            m(3, "b", "second", 86_400),
        ]]);
        let stats = account_stats(&corpus, &cohort(&["a", "b"]));
        assert_eq!(stats[0].lifespan_hours, 0.0);
        assert_eq!(stats[1].lifespan_hours, 24.0);
        assert_eq!(stats[1].mean_message_length, 5.5);
    }

    #[test]
    fn wordshift_examples() {
        let w = wordshift(&["да да"], &["нет"], 5).unwrap();
        assert_eq!(w.a_side[0].stem, stems("да")[0]);
        assert_eq!(w.a_side[0].score, 1.0);
        assert_eq!(w.b_side[0].stem, stems("нет")[0]);

        let same = wordshift(&["one two", "three"], &["one two", "three"], 5).unwrap();
        assert!(same.all.iter().all(|s| s.score == 0.0));
        assert!(same.a_side.is_empty() && same.b_side.is_empty());

        assert!(wordshift::<&str>(&[], &["x"], 5).is_err());
    }

    #[test]
    fn stemming_merges_inflections() {
        assert_eq!(stems("Украина"), stems("украины"));
        assert_eq!(stems("running runs"), vec!["run", "run"]);
    }
}
