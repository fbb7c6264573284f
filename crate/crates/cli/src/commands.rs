//! Subcommand implementations.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context};
use rayon::prelude::*;
use semshift::cluster::two_pass;
use semshift::config::{binary_preset, Language, DEFAULT_T_CS};
use semshift::detect::{
    analyze_word, classify_word, neighbor_sets, reports_to_tsv, ChangeReport, DetectionConfig, WordAnalysis,
};
use semshift::eval::{
    accuracy, default_grid_t0, default_grid_t1, grid, load_devset, parse_binary_tsv, parse_graded_tsv,
    spearman_maps, tune, TuneFixed,
};
use semshift::fixtures::{calibrated_devset, ranking_fixture, synthetic_benchmark, World};
use semshift::graph::{build_spatiotemporal, build_temporal, build_tree, emit, SemanticGraph};
use semshift::ranking::{rank_words, Grouping, RankingConfig};
use semshift::store::{load_store, representative_embedding, save_store, EmbeddingStore, SliceId};
use semshift::xlingual::{compare_word_pair, PairStores, Pairing, XlingComparison};
use serde::Serialize;

use crate::config::{pick, require, RunConfig};
use crate::{Command, Failure, GraphKindArg, Params, SecondLanguage, StorePair, SynthKind, Task};

pub struct Ctx {
    pub cfg: RunConfig,
    pub lang: Option<Language>,
}

pub fn dispatch(ctx: &Ctx, command: Command) -> Result<(), Failure> {
    match command {
        Command::Detect {
            stores,
            words,
            params,
            out,
        } => detect(ctx, &stores, words, &params, out),
        Command::Rank {
            stores,
            words,
            params,
            grouping,
            out,
        } => rank(ctx, &stores, words, grouping, &params, out),
        Command::Compare {
            stores,
            word,
            l2,
            params,
            out,
        } => compare(ctx, &stores, &word, &l2, &params, out),
        Command::Graph {
            kind,
            format,
            word,
            stores,
            l2,
            params,
            out,
        } => {
            let g = graph(ctx, kind, &word, &stores, &l2, &params)?;
            write_out(ctx, out, &emit(&g, format))
        }
        Command::Tune {
            dev,
            t0_low,
            t1_low,
            grid_t0,
            grid_t1,
            out,
        } => run_tune(ctx, dev, t0_low, t1_low, grid_t0, grid_t1, out),
        Command::Eval { pred, gold, task } => eval(ctx, pred, gold, task),
        Command::Synth { kind, seed, out } => synth(ctx, kind, seed, out),
        Command::Validate { store } => validate(&store),
    }
}

fn load(path: &Path) -> Result<EmbeddingStore, Failure> {
    load_store(path)
        .with_context(|| format!("store {}", path.display()))
        .map_err(Failure::Data)
}

fn load_pair(ctx: &Ctx, s: &StorePair) -> Result<(EmbeddingStore, EmbeddingStore), Failure> {
    let p0 = require(&s.store_t0, &ctx.cfg.paths.store_t0, "store-t0")?;
    let p1 = require(&s.store_t1, &ctx.cfg.paths.store_t1, "store-t1")?;
    Ok((load(&p0)?, load(&p1)?))
}

fn load_l2(ctx: &Ctx, l2: &SecondLanguage) -> Result<(EmbeddingStore, EmbeddingStore), Failure> {
    let p0 = require(&l2.l2_store_t0, &ctx.cfg.paths.l2_store_t0, "l2-store-t0")?;
    let p1 = require(&l2.l2_store_t1, &ctx.cfg.paths.l2_store_t1, "l2-store-t1")?;
    Ok((load(&p0)?, load(&p1)?))
}

/// Explicit preset, else the language tag of the store.
fn language(explicit: Option<Language>, store: Option<&EmbeddingStore>) -> Result<Language, Failure> {
    if let Some(l) = explicit {
        return Ok(l);
    }
    let tag = store.map(|s| s.slice().language.as_str()).unwrap_or("");
    tag.parse().map_err(|_| {
        Failure::usage(format!(
            "store language `{tag}` has no preset; pass --lang en|de|la|sv"
        ))
    })
}

fn check_range(name: &str, v: f64, lo_open: f64, hi: f64) -> Result<(), Failure> {
    if v > lo_open && v <= hi {
        Ok(())
    } else {
        Err(Failure::usage(format!("--{name} must lie in ({lo_open}, {hi}], got {v}")))
    }
}

/// Preset for `lang` with config-file values and then flags applied. The
/// similarity threshold follows the second-pass threshold unless set.
fn detection_config(ctx: &Ctx, lang: Language, p: &Params) -> Result<DetectionConfig, Failure> {
    let f = &ctx.cfg;
    let mut c = DetectionConfig::for_language(lang);
    if let Some(v) = pick(&p.t0_sc, &f.t0_sc) {
        c.cluster_params.pass0.t_sc = v;
    }
    if let Some(v) = pick(&p.t1_sc, &f.t1_sc) {
        c.cluster_params.pass1.t_sc = v;
    }
    c.t_sc = pick(&p.t_sc, &f.t_sc_detect).unwrap_or(c.cluster_params.pass1.t_sc);
    if let Some(v) = pick(&p.k, &f.k) {
        c.k = v;
    }
    if let Some(v) = pick(&p.t0_low, &f.t0_low) {
        c.cluster_params.pass0.t_low = v;
    }
    if let Some(v) = pick(&p.t1_low, &f.t1_low) {
        c.cluster_params.pass1.t_low = v;
    }
    if let Some(v) = pick(&p.min_tokens, &f.min_tokens) {
        c.min_tokens = v;
    }
    if let Some(v) = pick(&p.metric, &f.metric) {
        c.metric = v;
    }
    if let Some(v) = pick(&p.strategy, &f.strategy) {
        c.strategy = v;
    }
    c.validate().map_err(|e| Failure::usage(e.to_string()))?;
    Ok(c)
}

/// Ranking shares the detection overrides; pruning is disabled downstream.
fn ranking_config(ctx: &Ctx, lang: Language, p: &Params, grouping: Option<Grouping>) -> Result<RankingConfig, Failure> {
    let d = detection_config(ctx, lang, p)?;
    Ok(RankingConfig {
        t_sc: d.t_sc,
        cluster_params: d.cluster_params,
        k: d.k,
        min_tokens: d.min_tokens,
        grouping: pick(&grouping, &ctx.cfg.grouping).unwrap_or_default(),
    })
}

fn read_words(path: &Path) -> Result<Vec<String>, Failure> {
    let text = std::fs::read_to_string(path).with_context(|| format!("word list {}", path.display()))?;
    Ok(text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .map(String::from)
        .collect())
}

/// Listed words, else every word present in both stores.
fn target_words(
    ctx: &Ctx,
    words: Option<PathBuf>,
    s0: &EmbeddingStore,
    s1: &EmbeddingStore,
) -> Result<Vec<String>, Failure> {
    match pick(&words, &ctx.cfg.paths.words) {
        Some(path) => read_words(&path),
        None => Ok(s0.words().filter(|w| s1.contains(w)).map(String::from).collect()),
    }
}

fn write_out(ctx: &Ctx, out: Option<PathBuf>, bytes: &[u8]) -> Result<(), Failure> {
    match pick(&out, &ctx.cfg.paths.out) {
        Some(path) => std::fs::write(&path, bytes).with_context(|| format!("writing {}", path.display()))?,
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout.write_all(bytes).context("writing to stdout")?;
            stdout.flush().context("writing to stdout")?;
        }
    }
    Ok(())
}

fn json_bytes<T: Serialize>(value: &T) -> Result<Vec<u8>, Failure> {
    let mut s = serde_json::to_string_pretty(value).context("serializing output")?;
    s.push('\n');
    Ok(s.into_bytes())
}

fn detect(
    ctx: &Ctx,
    stores: &StorePair,
    words: Option<PathBuf>,
    params: &Params,
    out: Option<PathBuf>,
) -> Result<(), Failure> {
    let (s0, s1) = load_pair(ctx, stores)?;
    let lang = language(pick(&ctx.lang, &ctx.cfg.language), Some(&s0))?;
    let cfg = detection_config(ctx, lang, params)?;
    let words = target_words(ctx, words, &s0, &s1)?;
    let results: Vec<(&String, semshift::Result<ChangeReport>)> = words
        .par_iter()
        .map(|w| (w, classify_word(w, &s0, &s1, &cfg)))
        .collect();
    let mut reports = Vec::new();
    for (w, r) in results {
        match r {
            Ok(r) => reports.push(r),
            Err(e) => eprintln!("warning: skipping `{w}`: {e}"),
        }
    }
    if reports.is_empty() {
        return Err(anyhow!("no word could be analyzed").into());
    }
    write_out(ctx, out, reports_to_tsv(&reports).as_bytes())
}

fn rank(
    ctx: &Ctx,
    stores: &StorePair,
    words: Option<PathBuf>,
    grouping: Option<Grouping>,
    params: &Params,
    out: Option<PathBuf>,
) -> Result<(), Failure> {
    let (s0, s1) = load_pair(ctx, stores)?;
    let lang = language(pick(&ctx.lang, &ctx.cfg.language), Some(&s0))?;
    let cfg = ranking_config(ctx, lang, params, grouping)?;
    let words = target_words(ctx, words, &s0, &s1)?;
    let ranking = rank_words(&words, &s0, &s1, &cfg);
    for (w, e) in &ranking.failures {
        eprintln!("warning: skipping `{w}`: {e}");
    }
    if ranking.scores.is_empty() {
        return Err(anyhow!("no word could be scored").into());
    }
    write_out(ctx, out, ranking.to_tsv().as_bytes())
}

struct CrossSetup {
    l1: (EmbeddingStore, EmbeddingStore),
    l2: (EmbeddingStore, EmbeddingStore),
    cfg_l1: DetectionConfig,
    cfg_l2: DetectionConfig,
    word_l2: String,
    t_cs: f64,
    pairing: Pairing,
}

fn cross_setup(ctx: &Ctx, stores: &StorePair, l2: &SecondLanguage, params: &Params) -> Result<CrossSetup, Failure> {
    let word_l2 = l2
        .word_l2
        .clone()
        .ok_or_else(|| Failure::usage("missing required argument --word-l2"))?;
    let a = load_pair(ctx, stores)?;
    let b = load_l2(ctx, l2)?;
    let lang1 = language(pick(&ctx.lang, &ctx.cfg.language), Some(&a.0))?;
    let lang2 = language(pick(&l2.lang_l2, &ctx.cfg.language_l2), Some(&b.0))?;
    let t_cs = pick(&l2.t_cs, &ctx.cfg.t_cs).unwrap_or(DEFAULT_T_CS);
    check_range("t-cs", t_cs, -1.0, 1.0)?;
    Ok(CrossSetup {
        cfg_l1: detection_config(ctx, lang1, params)?,
        cfg_l2: detection_config(ctx, lang2, params)?,
        l1: a,
        l2: b,
        word_l2,
        t_cs,
        pairing: pick(&l2.pairing, &ctx.cfg.pairing).unwrap_or_default(),
    })
}

impl CrossSetup {
    fn stores(&self) -> PairStores<'_> {
        PairStores {
            l1_t0: &self.l1.0,
            l1_t1: &self.l1.1,
            l2_t0: &self.l2.0,
            l2_t1: &self.l2.1,
        }
    }
}

#[derive(Serialize)]
struct CompareOutput<'a> {
    word_l1: &'a str,
    word_l2: &'a str,
    report_l1: &'a ChangeReport,
    report_l2: &'a ChangeReport,
    comparison: &'a XlingComparison,
}

fn compare(
    ctx: &Ctx,
    stores: &StorePair,
    word: &str,
    l2: &SecondLanguage,
    params: &Params,
    out: Option<PathBuf>,
) -> Result<(), Failure> {
    let s = cross_setup(ctx, stores, l2, params)?;
    let a = compare_word_pair(word, &s.word_l2, s.stores(), &s.cfg_l1, &s.cfg_l2, s.t_cs, s.pairing)?;
    let doc = CompareOutput {
        word_l1: word,
        word_l2: &s.word_l2,
        report_l1: &a.l1.report,
        report_l2: &a.l2.report,
        comparison: &a.comparison,
    };
    write_out(ctx, out, &json_bytes(&doc)?)
}

fn tree_of(
    word: &str,
    store: &EmbeddingStore,
    clusters: &semshift::cluster::ClusterSet,
    neighbors: &[semshift::similarity::NeighborSet],
    cfg: &DetectionConfig,
) -> Result<SemanticGraph, Failure> {
    let owned;
    let neighbors = if neighbors.len() == clusters.len() {
        neighbors
    } else {
        owned = neighbor_sets(store, clusters, cfg.k, cfg.min_tokens)?;
        &owned
    };
    Ok(build_tree(word, &representative_embedding(store, word)?, clusters, neighbors)?)
}

fn temporal_of(
    word: &str,
    s0: &EmbeddingStore,
    s1: &EmbeddingStore,
    a: &WordAnalysis,
    cfg: &DetectionConfig,
) -> Result<SemanticGraph, Failure> {
    let t0 = tree_of(word, s0, &a.clusters_t0, &a.neighbors_t0, cfg)?;
    let t1 = tree_of(word, s1, &a.clusters_t1, &a.neighbors_t1, cfg)?;
    Ok(build_temporal(word, &t0, &t1, &a.report)?)
}

fn graph(
    ctx: &Ctx,
    kind: GraphKindArg,
    word: &str,
    stores: &StorePair,
    l2: &SecondLanguage,
    params: &Params,
) -> Result<SemanticGraph, Failure> {
    match kind {
        GraphKindArg::Tree => {
            let path = require(&stores.store_t0, &ctx.cfg.paths.store_t0, "store-t0")?;
            let store = load(&path)?;
            let lang = language(pick(&ctx.lang, &ctx.cfg.language), Some(&store))?;
            let cfg = detection_config(ctx, lang, params)?;
            let clusters = two_pass(store.cloud(word)?, &cfg.cluster_params)?.with_slice(store.slice().clone());
            tree_of(word, &store, &clusters, &[], &cfg)
        }
        GraphKindArg::Temporal => {
            let (s0, s1) = load_pair(ctx, stores)?;
            let lang = language(pick(&ctx.lang, &ctx.cfg.language), Some(&s0))?;
            let cfg = detection_config(ctx, lang, params)?;
            let a = analyze_word(word, &s0, &s1, &cfg)?;
            temporal_of(word, &s0, &s1, &a, &cfg)
        }
        GraphKindArg::Spatiotemporal => {
            let s = cross_setup(ctx, stores, l2, params)?;
            let a = compare_word_pair(word, &s.word_l2, s.stores(), &s.cfg_l1, &s.cfg_l2, s.t_cs, s.pairing)?;
            let g1 = temporal_of(word, &s.l1.0, &s.l1.1, &a.l1, &s.cfg_l1)?;
            let g2 = temporal_of(&s.word_l2, &s.l2.0, &s.l2.1, &a.l2, &s.cfg_l2)?;
            Ok(build_spatiotemporal((word, &s.word_l2), &g1, &g2, &a.comparison)?)
        }
    }
}

fn parse_grid(spec: &str) -> Result<Vec<f64>, Failure> {
    let bad = || Failure::usage(format!("grid `{spec}` must be lo:hi:step"));
    let parts: Vec<f64> = spec
        .split(':')
        .map(|p| p.trim().parse::<f64>())
        .collect::<Result<_, _>>()
        .map_err(|_| bad())?;
    let [lo, hi, step] = parts[..] else {
        return Err(bad());
    };
    grid(lo, hi, step).map_err(|e| Failure::usage(e.to_string()))
}

fn run_tune(
    ctx: &Ctx,
    dev: Option<PathBuf>,
    t0_low: Option<usize>,
    t1_low: Option<usize>,
    grid_t0: Option<String>,
    grid_t1: Option<String>,
    out: Option<PathBuf>,
) -> Result<(), Failure> {
    let dev = require(&dev, &ctx.cfg.paths.dev, "dev")?;
    let preset = binary_preset(pick(&ctx.lang, &ctx.cfg.language).unwrap_or(Language::En));
    let fixed = TuneFixed {
        t0_low: pick(&t0_low, &ctx.cfg.t0_low).unwrap_or(preset.t0_low),
        t1_low: pick(&t1_low, &ctx.cfg.t1_low).unwrap_or(preset.t1_low),
    };
    let g0 = grid_t0.as_deref().map(parse_grid).transpose()?.unwrap_or_else(default_grid_t0);
    let g1 = grid_t1.as_deref().map(parse_grid).transpose()?.unwrap_or_else(default_grid_t1);
    let devset = load_devset(&dev).with_context(|| format!("dev set {}", dev.display()))?;
    let report = tune(&devset, &g0, &g1, fixed)?;
    write_out(ctx, out, report.to_json().as_bytes())
}

fn read_text(path: &Path, what: &str) -> Result<String, Failure> {
    Ok(std::fs::read_to_string(path).with_context(|| format!("{what} {}", path.display()))?)
}

/// Predictions restricted to the gold vocabulary, so detection output over a
/// whole store can be scored directly. Gold words without a prediction are
/// left for the metric to reject.
fn restrict<T: Clone>(pred: BTreeMap<String, T>, gold: &BTreeMap<String, impl Sized>) -> BTreeMap<String, T> {
    pred.into_iter().filter(|(w, _)| gold.contains_key(w)).collect()
}

fn eval(ctx: &Ctx, pred: Option<PathBuf>, gold: Option<PathBuf>, task: Task) -> Result<(), Failure> {
    let pred_path = require(&pred, &ctx.cfg.paths.pred, "pred")?;
    let gold_path = require(&gold, &ctx.cfg.paths.gold, "gold")?;
    let pred_text = read_text(&pred_path, "predictions")?;
    let gold_text = read_text(&gold_path, "gold")?;
    let mut line = String::new();
    match task {
        Task::Binary => {
            let gold = parse_binary_tsv(&gold_text).context("gold")?;
            let pred = restrict(parse_binary_tsv(&pred_text).context("predictions")?, &gold);
            let acc = accuracy(&pred, &gold)?;
            let _ = writeln!(line, "accuracy {acc:.4} ({} words)", gold.len());
        }
        Task::Graded => {
            let gold = parse_graded_tsv(&gold_text).context("gold")?;
            let pred = restrict(parse_graded_tsv(&pred_text).context("predictions")?, &gold);
            let rho = spearman_maps(&pred, &gold)?;
            let _ = writeln!(line, "spearman {rho:.4} ({} words)", gold.len());
        }
    }
    print!("{line}");
    Ok(())
}

fn save_world(world: &World, dir: &Path) -> Result<(), Failure> {
    save_store(&world.t0, dir.join("t0"))?;
    save_store(&world.t1, dir.join("t1"))?;
    Ok(())
}

fn write_file(path: &Path, text: &str) -> Result<(), Failure> {
    Ok(std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))?)
}

#[derive(Serialize)]
struct DevEntry<'a> {
    labels: &'a [usize],
    store_ref: &'a str,
}

fn synth(ctx: &Ctx, kind: SynthKind, seed: Option<u64>, out: Option<PathBuf>) -> Result<(), Failure> {
    let dir = require(&out, &ctx.cfg.paths.out, "out")?;
    std::fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    let need_seed = || require(&seed, &ctx.cfg.seed, "seed");
    match kind {
        SynthKind::Benchmark => {
            let b = synthetic_benchmark(need_seed()?)?;
            save_world(&b.world, &dir)?;
            let gold: String = b.gold.iter().map(|(w, l)| format!("{w}\t{l}\n")).collect();
            let targets: String = b.words.iter().map(|w| format!("{}\n", w.word)).collect();
            write_file(&dir.join("gold.tsv"), &gold)?;
            write_file(&dir.join("targets.txt"), &targets)?;
        }
        SynthKind::Ranking => {
            let (world, names) = ranking_fixture(need_seed()?)?;
            save_world(&world, &dir)?;
            let gold: String = names.iter().map(|(w, f)| format!("{w}\t{f}\n")).collect();
            let targets: String = names.iter().map(|(w, _)| format!("{w}\n")).collect();
            write_file(&dir.join("gold.tsv"), &gold)?;
            write_file(&dir.join("targets.txt"), &targets)?;
        }
        SynthKind::Devset => {
            let (dev, _) = calibrated_devset()?;
            let store = EmbeddingStore::new(
                SliceId::new("en", "dev")?,
                dev.words.values().map(|w| w.cloud.clone()),
                None,
            )?;
            save_store(&store, dir.join("dev"))?;
            let entries: BTreeMap<&str, DevEntry<'_>> = dev
                .words
                .iter()
                .map(|(w, d)| {
                    (
                        w.as_str(),
                        DevEntry {
                            labels: &d.labels,
                            store_ref: "dev",
                        },
                    )
                })
                .collect();
            std::fs::write(dir.join("dev.json"), json_bytes(&entries)?).context("writing dev.json")?;
        }
    }
    Ok(())
}

fn validate(path: &Path) -> Result<(), Failure> {
    let store = load(path)?;
    let tokens: usize = store.clouds().map(|c| c.len()).sum();
    println!(
        "ok {}: dim {}, {} words, {} tokens",
        store.slice(),
        store.dim(),
        store.len(),
        tokens
    );
    Ok(())
}
