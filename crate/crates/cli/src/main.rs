//! `knnmt`: build, merge, remap, tune and evaluate kNN-MT datastores over the
//! seeded toy world.
//!
//! Exit status is 0 on success, 1 on a usage error and 2 when input data is
//! missing, corrupt or inconsistent.

mod artifacts;
mod config;

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::BufReader;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use knnmt::datastore::{self, merge};
use knnmt::eval::{
    corpus_bleu, grid_search, origin_analysis, retrieval_hit_rate, throughput_bench, token_metrics,
    write_bench_csv, write_grid_csv, EvalReport, Metric, TokenMetrics, Weighting,
};
use knnmt::index::{load_index, save_index};
use knnmt::retrieval::{decode_traced, write_trace_jsonl, read_trace_jsonl, TraceStep};
use knnmt::synth::{gen_corpus, gen_world, read_corpus_jsonl, write_corpus_jsonl, Corpus, Sentence, ToyProvider, World};
use knnmt::xmap::{extract_aligned_pairs, fit_linear_map, remap_store};
use knnmt::{Datastore, DecodeParams, Index, IndexKind, IndexParams, LanguageTag, LinearMap, RetrievalParams, Ridge};
use serde::{Deserialize, Serialize};

use crate::artifacts::{log_hash, sha256_file, OutDir};
use crate::config::{usage, RunConfig, Usage, DEV_FIRST_ID, TEST_FIRST_ID, TRAIN_FIRST_ID};

#[derive(Parser)]
#[command(name = "knnmt", version, about = "Multilingual kNN-MT datastore toolkit")]
struct Cli {
    /// Run configuration (JSON).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the world seed from the configuration.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory. Relative input paths that do not exist are also looked up here.
    #[arg(long, global = true, env = "KNNMT_OUT")]
    out: Option<PathBuf>,
    #[arg(long, global = true, value_parser = ["flat", "ivf"])]
    index: Option<String>,
    #[arg(long, global = true)]
    k: Option<usize>,
    #[arg(long, global = true)]
    lambda: Option<f64>,
    #[arg(long, global = true)]
    temp: Option<f64>,
    /// Linear map (JSON) applied to queries, or to keys for `remap`.
    #[arg(long, global = true)]
    map: Option<PathBuf>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args)]
struct QueryArgs {
    /// Source language of the queries.
    #[arg(long)]
    lang: String,
    #[arg(long)]
    store: PathBuf,
    /// Corpus split used when `--corpus` is absent.
    #[arg(long, value_parser = ["train", "dev", "test"])]
    split: Option<String>,
    #[arg(long)]
    corpus: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate the world description and train/dev/test corpora.
    SynthGen,
    /// Build a bilingual datastore from a training corpus.
    Build {
        #[arg(long)]
        lang: String,
        #[arg(long)]
        corpus: Option<PathBuf>,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Concatenate stores into a multilingual store.
    Merge {
        stores: Vec<PathBuf>,
        /// A merged store named in the configuration.
        #[arg(long, conflicts_with = "stores")]
        group: Option<String>,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Fit a linear map from one store's contexts to another's on shared coordinates.
    FitMap {
        #[arg(long)]
        src: PathBuf,
        #[arg(long)]
        dst: PathBuf,
        /// "auto" or a non-negative number.
        #[arg(long, default_value = "auto")]
        ridge: String,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Apply `--map` to every key of a store.
    Remap {
        store: PathBuf,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Grid-search k, λ and T on a dev corpus.
    Tune {
        #[command(flatten)]
        q: QueryArgs,
        #[arg(long, value_parser = ["accuracy", "bleu"])]
        metric: Option<String>,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Decode a corpus, writing hypotheses and the retrieval trace.
    Decode {
        #[command(flatten)]
        q: QueryArgs,
        /// Retrieval parameters (JSON), e.g. the output of `tune`.
        #[arg(long)]
        params: Option<PathBuf>,
        #[arg(long)]
        beam: Option<usize>,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Teacher-forced metrics and BLEU against the λ = 0 baseline.
    Eval {
        #[command(flatten)]
        q: QueryArgs,
        #[arg(long)]
        params: Option<PathBuf>,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Observed vs uniform origin shares of a decode trace.
    Origins {
        #[arg(long)]
        trace: PathBuf,
        #[arg(long)]
        store: PathBuf,
        #[arg(long, value_parser = ["occurrence", "mass"], default_value = "occurrence")]
        weighting: String,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Greedy decoding throughput against several stores.
    Bench {
        #[arg(long)]
        lang: String,
        #[arg(long, num_args = 1.., required = true)]
        stores: Vec<PathBuf>,
        #[arg(long, value_parser = ["train", "dev", "test"])]
        split: Option<String>,
        #[arg(long)]
        corpus: Option<PathBuf>,
        #[arg(long)]
        params: Option<PathBuf>,
        #[arg(long, default_value_t = 3)]
        reps: usize,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Print store statistics as JSON.
    Info { store: PathBuf },
}

/// Records the world and the hash of every generated corpus file.
#[derive(Debug, Serialize, Deserialize)]
struct Manifest {
    world_fingerprint: String,
    files: BTreeMap<String, String>,
}

#[derive(Debug, Serialize)]
struct EvalOutput {
    lang: String,
    store: String,
    baseline: TokenMetrics,
    retrieval_hit_rate: f64,
    mapped: bool,
    report: EvalReport,
}

struct Ctx {
    cli_config: Option<RunConfig>,
    seed: Option<u64>,
    out: OutDir,
    index: Option<IndexKind>,
    k: Option<usize>,
    lambda: Option<f64>,
    temp: Option<f64>,
    map: Option<PathBuf>,
}

impl Ctx {
    fn config(&self) -> anyhow::Result<&RunConfig> {
        self.cli_config.as_ref().ok_or_else(|| usage("this command needs --config").into())
    }

    fn world(&self) -> anyhow::Result<World> {
        let mut wc = self.config()?.world.clone();
        if let Some(s) = self.seed {
            wc.seed = s;
        }
        Ok(gen_world(&wc)?)
    }

    fn lang(&self, world: &World, code: &str) -> anyhow::Result<LanguageTag> {
        world.language(code).map_err(|_| usage(format!("language {code:?} is not in the world")).into())
    }

    /// Input paths resolve against the working directory first, then the output directory.
    fn input(&self, p: &Path) -> PathBuf {
        if p.is_relative() && !p.exists() {
            let alt = self.out.root().join(p);
            if alt.exists() {
                return alt;
            }
        }
        p.to_path_buf()
    }

    fn index_params(&self) -> IndexParams {
        let mut p = self.cli_config.as_ref().map(|c| c.index.clone()).unwrap_or_else(IndexParams::flat);
        if let Some(kind) = self.index {
            p.kind = kind;
        }
        p
    }

    fn load_map(&self) -> anyhow::Result<Option<LinearMap>> {
        match &self.map {
            None => Ok(None),
            Some(p) => {
                let p = self.input(p);
                let text = fs::read_to_string(&p).with_context(|| format!("reading map {}", p.display()))?;
                Ok(Some(LinearMap::from_json(&text)?))
            }
        }
    }

    fn corpus_path(&self, lang: &str, split: &str, explicit: Option<&Path>) -> PathBuf {
        match explicit {
            Some(p) => self.input(p),
            None => self.out.root().join("corpora").join(format!("{lang}.{split}.jsonl")),
        }
    }

    /// Reads a corpus, checking it against the manifest written beside it, if any.
    fn read_corpus(&self, world: &World, lang: &LanguageTag, path: &Path) -> anyhow::Result<Corpus> {
        let manifest = path.with_file_name("manifest.json");
        if manifest.exists() {
            let m: Manifest = serde_json::from_str(&fs::read_to_string(&manifest)?).map_err(knnmt::Error::from)?;
            if m.world_fingerprint != world.fingerprint() {
                return Err(data_error(format!(
                    "{} was generated for a different world (check --seed and the config)",
                    path.display()
                )));
            }
            let name = path.file_name().and_then(|n| n.to_str()).unwrap_or_default();
            if let Some(expected) = m.files.get(name) {
                if &sha256_file(path)? != expected {
                    return Err(data_error(format!("{} does not match its manifest hash", path.display())));
                }
            }
        }
        let f = File::open(path).with_context(|| format!("opening corpus {}", path.display()))?;
        Ok(read_corpus_jsonl(BufReader::new(f), lang.clone(), world.target_lang())?)
    }

    fn load_store(&self, p: &Path) -> anyhow::Result<Arc<Datastore>> {
        let p = self.input(p);
        let s = datastore::load(&p).with_context(|| format!("loading store {}", p.display()))?;
        Ok(Arc::new(s))
    }

    /// A saved `.kix` beside the store is reused when IVF is requested; otherwise the index is built.
    fn open_index(&self, store_path: &Path, store: Arc<Datastore>) -> anyhow::Result<Index> {
        let params = self.index_params();
        let kix = self.input(store_path).with_extension("kix");
        if params.kind == IndexKind::Ivf && kix.exists() {
            return Ok(load_index(&kix, store)?);
        }
        Ok(Index::build(store, &params)?)
    }

    fn save_store(&self, rel: &Path, store: Datastore) -> anyhow::Result<()> {
        let path = self.out.path(rel)?;
        datastore::save(&store, &path)?;
        log_hash(&path)?;
        log_hash(&datastore::meta_path(&path))?;
        let params = self.index_params();
        if params.kind == IndexKind::Ivf {
            let index = Index::build(Arc::new(store), &params)?;
            let kix = path.with_extension("kix");
            save_index(&index, &kix)?;
            log_hash(&kix)?;
        }
        Ok(())
    }

    /// Parameters from `--params`, with `--k`, `--lambda` and `--temp` applied on top.
    fn retrieval_params(&self, file: Option<&Path>) -> anyhow::Result<RetrievalParams> {
        let base: Option<RetrievalParams> = match file {
            Some(p) => {
                let p = self.input(p);
                let text = fs::read_to_string(&p).with_context(|| format!("reading {}", p.display()))?;
                Some(serde_json::from_str(&text).map_err(knnmt::Error::from)?)
            }
            None => None,
        };
        let k = self.k.or(base.map(|b| b.k));
        let lambda = self.lambda.or(base.map(|b| b.lambda));
        let temp = self.temp.or(base.map(|b| b.temperature));
        match (k, lambda, temp) {
            (Some(k), Some(l), Some(t)) => {
                RetrievalParams::new(k, l, t).map_err(|e| usage(e.to_string()).into())
            }
            _ => bail!(usage("retrieval parameters need --params or all of --k, --lambda and --temp")),
        }
    }
}

fn data_error(msg: String) -> anyhow::Error {
    knnmt::Error::Format(msg).into()
}

/// `p` with `suffix` appended to its file name.
fn suffixed(p: &Path, suffix: &str) -> PathBuf {
    let mut s = p.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

fn stem(p: &Path) -> String {
    p.file_stem().and_then(|s| s.to_str()).unwrap_or("out").to_owned()
}

fn split_first_id(split: &str) -> u32 {
    match split {
        "train" => TRAIN_FIRST_ID,
        "dev" => DEV_FIRST_ID,
        _ => TEST_FIRST_ID,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(if e.downcast_ref::<Usage>().is_some() { 1 } else { 2 })
        }
    }
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let cli_config = match &cli.config {
        Some(p) => Some(RunConfig::load(p)?),
        None => None,
    };
    let root = cli
        .out
        .clone()
        .or_else(|| cli_config.as_ref().and_then(|c| c.output_dir.clone()))
        .unwrap_or_else(|| PathBuf::from("out"));
    let index = cli.index.as_deref().map(|s| s.parse::<IndexKind>()).transpose()?;
    let ctx = Ctx {
        cli_config,
        seed: cli.seed,
        out: OutDir::new(root),
        index,
        k: cli.k,
        lambda: cli.lambda,
        temp: cli.temp,
        map: cli.map,
    };

    match cli.cmd {
        Cmd::SynthGen => synth_gen(&ctx),
        Cmd::Build { lang, corpus, output } => build(&ctx, &lang, corpus.as_deref(), output),
        Cmd::Merge { stores, group, output } => merge_cmd(&ctx, stores, group, output),
        Cmd::FitMap { src, dst, ridge, output } => fit_map(&ctx, &src, &dst, &ridge, output),
        Cmd::Remap { store, output } => remap(&ctx, &store, output),
        Cmd::Tune { q, metric, output } => tune(&ctx, &q, metric.as_deref(), output),
        Cmd::Decode { q, params, beam, output } => decode_cmd(&ctx, &q, params.as_deref(), beam, output),
        Cmd::Eval { q, params, output } => eval(&ctx, &q, params.as_deref(), output),
        Cmd::Origins { trace, store, weighting, output } => origins(&ctx, &trace, &store, &weighting, output),
        Cmd::Bench { lang, stores, split, corpus, params, reps, output } => {
            let split = split.unwrap_or_else(|| "test".into());
            bench(&ctx, &lang, &stores, &split, corpus.as_deref(), params.as_deref(), reps, output)
        }
        Cmd::Info { store } => info(&ctx, &store),
    }
}

fn synth_gen(ctx: &Ctx) -> anyhow::Result<()> {
    let cfg = ctx.config()?;
    let world = ctx.world()?;
    ctx.out.write(Path::new("world.json"), serde_json::to_string_pretty(world.config())?.as_bytes())?;
    let mut files = BTreeMap::new();
    for spec in &cfg.corpora {
        let lang = ctx.lang(&world, &spec.lang)?;
        for (split, n) in [("train", spec.n_train), ("dev", spec.n_dev), ("test", spec.n_test)] {
            let corpus = gen_corpus(&world, &lang, n, spec.mean_length, split_first_id(split))?;
            let mut buf = Vec::new();
            write_corpus_jsonl(&mut buf, &corpus)?;
            let name = format!("{}.{split}.jsonl", spec.lang);
            let path = ctx.out.write(&Path::new("corpora").join(&name), &buf)?;
            files.insert(name, sha256_file(&path)?);
        }
    }
    let manifest = Manifest { world_fingerprint: world.fingerprint().to_owned(), files };
    ctx.out.write(Path::new("corpora/manifest.json"), serde_json::to_string_pretty(&manifest)?.as_bytes())?;
    Ok(())
}

fn build(ctx: &Ctx, lang: &str, corpus: Option<&Path>, output: Option<PathBuf>) -> anyhow::Result<()> {
    let world = ctx.world()?;
    let tag = ctx.lang(&world, lang)?;
    let corpus = ctx.read_corpus(&world, &tag, &ctx.corpus_path(lang, "train", corpus))?;
    let provider = ToyProvider::new(&world, &tag)?;
    let mut store = Datastore::new(world.dim(), world.target_lang())?;
    store.build_from_corpus(&corpus, &provider)?;
    store.add_provenance(format!(
        "built from {} {}-{} sentences ({} tokens), world {}",
        corpus.len(),
        tag,
        world.target_lang(),
        corpus.total_tokens(),
        &world.fingerprint()[..16]
    ))?;
    store.seal();
    let rel = output.unwrap_or_else(|| PathBuf::from(format!("stores/{lang}.kds")));
    ctx.save_store(&rel, store)
}

fn merge_cmd(ctx: &Ctx, stores: Vec<PathBuf>, group: Option<String>, output: Option<PathBuf>) -> anyhow::Result<()> {
    let (paths, default_rel) = match group {
        Some(g) => {
            let members = ctx
                .config()?
                .merged
                .get(&g)
                .ok_or_else(|| usage(format!("no merged store named {g:?} in the config")))?;
            let paths = members.iter().map(|m| PathBuf::from(format!("stores/{m}.kds"))).collect();
            (paths, Some(PathBuf::from(format!("stores/{g}.kds"))))
        }
        None => (stores, None),
    };
    if paths.is_empty() {
        bail!(usage("merge needs input stores or --group"));
    }
    let rel = output.or(default_rel).ok_or_else(|| usage("merge of explicit stores needs -o"))?;
    let loaded = paths.iter().map(|p| ctx.load_store(p)).collect::<anyhow::Result<Vec<_>>>()?;
    let refs: Vec<&Datastore> = loaded.iter().map(|s| s.as_ref()).collect();
    ctx.save_store(&rel, merge(&refs)?)
}

fn fit_map(ctx: &Ctx, src: &Path, dst: &Path, ridge: &str, output: Option<PathBuf>) -> anyhow::Result<()> {
    let ridge: Ridge = ridge.parse().map_err(|e: knnmt::Error| usage(e.to_string()))?;
    let (a, b) = (ctx.load_store(src)?, ctx.load_store(dst)?);
    let pairs = extract_aligned_pairs(&a, &b)?;
    if pairs.is_empty() {
        return Err(data_error("the stores share no (sentence, position) coordinates".into()));
    }
    let map = fit_linear_map(&pairs, ridge)?;
    eprintln!("fitted {} pairs, residual {:.6e}", map.n_pairs, map.residual);
    let rel = output.unwrap_or_else(|| PathBuf::from(format!("maps/{}-{}.json", stem(src), stem(dst))));
    ctx.out.write(&rel, map.to_json()?.as_bytes())?;
    Ok(())
}

fn remap(ctx: &Ctx, store: &Path, output: Option<PathBuf>) -> anyhow::Result<()> {
    let map = ctx.load_map()?.ok_or_else(|| usage("remap needs --map"))?;
    let s = ctx.load_store(store)?;
    let rel = output.unwrap_or_else(|| PathBuf::from(format!("stores/{}.mapped.kds", stem(store))));
    ctx.save_store(&rel, remap_store(&s, &map)?)
}

/// World, language, provider inputs shared by the query commands.
struct Query {
    world: World,
    tag: LanguageTag,
    corpus: Corpus,
    index: Index,
    map: Option<LinearMap>,
}

fn open_query(ctx: &Ctx, q: &QueryArgs, default_split: &str) -> anyhow::Result<Query> {
    let world = ctx.world()?;
    let tag = ctx.lang(&world, &q.lang)?;
    let split = q.split.as_deref().unwrap_or(default_split);
    let corpus = ctx.read_corpus(&world, &tag, &ctx.corpus_path(&q.lang, split, q.corpus.as_deref()))?;
    let store = ctx.load_store(&q.store)?;
    if store.dim() != world.dim() {
        return Err(data_error(format!("store dimension {} does not match the world's {}", store.dim(), world.dim())));
    }
    let index = ctx.open_index(&q.store, store)?;
    Ok(Query { world, tag, corpus, index, map: ctx.load_map()? })
}

fn tune(ctx: &Ctx, q: &QueryArgs, metric: Option<&str>, output: Option<PathBuf>) -> anyhow::Result<()> {
    let cfg = ctx.config()?;
    let qq = open_query(ctx, q, "dev")?;
    let provider = ToyProvider::new(&qq.world, &qq.tag)?;
    let mut grids = cfg.grids.clone();
    if let Some(k) = ctx.k {
        grids.k = vec![k];
    }
    if let Some(l) = ctx.lambda {
        grids.lambda = vec![l];
    }
    if let Some(t) = ctx.temp {
        grids.temperature = vec![t];
    }
    let metric = match metric {
        Some("bleu") => Metric::Bleu,
        Some(_) => Metric::Accuracy,
        None => cfg.metric,
    };
    let (best, rows) = grid_search(&provider, &qq.index, qq.map.as_ref(), &qq.corpus, &grids, metric, &cfg.decode)?;
    eprintln!("evaluated {} configurations; best k={} lambda={} T={}", rows.len(), best.k, best.lambda, best.temperature);
    let base = output.unwrap_or_else(|| PathBuf::from(format!("tune/{}.{}", q.lang, stem(&q.store))));
    ctx.out.write(&suffixed(&base, ".grid.csv"), write_grid_csv(&rows).as_bytes())?;
    ctx.out.write(&suffixed(&base, ".best.json"), serde_json::to_string_pretty(&best)?.as_bytes())?;
    Ok(())
}

fn decode_params(ctx: &Ctx, beam: Option<usize>) -> DecodeParams {
    let mut d = ctx.cli_config.as_ref().map(|c| c.decode).unwrap_or_default();
    if let Some(b) = beam {
        d.beam_width = b;
    }
    d
}

fn decode_cmd(
    ctx: &Ctx,
    q: &QueryArgs,
    params: Option<&Path>,
    beam: Option<usize>,
    output: Option<PathBuf>,
) -> anyhow::Result<()> {
    let rparams = ctx.retrieval_params(params)?;
    let dparams = decode_params(ctx, beam);
    if dparams.beam_width == 0 {
        bail!(usage("--beam must be at least 1"));
    }
    let qq = open_query(ctx, q, "test")?;
    let provider = ToyProvider::new(&qq.world, &qq.tag)?;
    let mut hyps = Vec::new();
    let mut trace: Vec<TraceStep> = Vec::new();
    for s in &qq.corpus.sentences {
        let out = decode_traced(&provider, &qq.index, qq.map.as_ref(), &rparams, &dparams, s)?;
        trace.extend(out.trace.into_iter().map(|mut t| {
            t.sentence_id = Some(s.id);
            t
        }));
        hyps.push(Sentence { id: s.id, tokens: out.tokens });
    }
    let hyp_corpus = Corpus { source: qq.tag.clone(), target: qq.world.target_lang(), sentences: hyps };
    let base = output.unwrap_or_else(|| PathBuf::from(format!("decode/{}.{}", q.lang, stem(&q.store))));
    let mut buf = Vec::new();
    write_corpus_jsonl(&mut buf, &hyp_corpus)?;
    ctx.out.write(&suffixed(&base, ".hyp.jsonl"), &buf)?;
    let mut buf = Vec::new();
    write_trace_jsonl(&mut buf, &trace)?;
    ctx.out.write(&suffixed(&base, ".trace.jsonl"), &buf)?;
    Ok(())
}

fn eval(ctx: &Ctx, q: &QueryArgs, params: Option<&Path>, output: Option<PathBuf>) -> anyhow::Result<()> {
    let rparams = ctx.retrieval_params(params)?;
    let dparams = decode_params(ctx, None);
    let qq = open_query(ctx, q, "test")?;
    let provider = ToyProvider::new(&qq.world, &qq.tag)?;
    let map = qq.map.as_ref();
    let baseline = token_metrics(&provider, &qq.index, map, &RetrievalParams { lambda: 0.0, ..rparams }, &qq.corpus)?;
    let tm = token_metrics(&provider, &qq.index, map, &rparams, &qq.corpus)?;
    let hit_rate = retrieval_hit_rate(&provider, &qq.index, map, &qq.corpus)?;
    let outs = knnmt::eval::decode_corpus(&provider, &qq.index, map, &rparams, &dparams, &qq.corpus)?;
    let hyps: Vec<Vec<u32>> = outs.into_iter().map(|o| o.tokens).collect();
    let refs: Vec<Vec<u32>> = qq.corpus.sentences.iter().map(|s| s.tokens.clone()).collect();
    let bleu = if refs.is_empty() { 0.0 } else { corpus_bleu(&hyps, &refs)? };
    let report = EvalReport {
        params: rparams,
        accuracy: tm.accuracy,
        nll: tm.nll,
        bleu,
        tokens: tm.tokens,
        configs: Vec::new(),
    };
    eprintln!(
        "{}: accuracy {:.4} (baseline {:.4}), bleu {:.2}",
        q.lang, report.accuracy, baseline.accuracy, report.bleu
    );
    let out = EvalOutput {
        lang: q.lang.clone(),
        store: stem(&q.store),
        baseline,
        retrieval_hit_rate: hit_rate,
        mapped: map.is_some(),
        report,
    };
    let rel = output.unwrap_or_else(|| PathBuf::from(format!("eval/{}.{}.json", q.lang, stem(&q.store))));
    ctx.out.write(&rel, serde_json::to_string_pretty(&out)?.as_bytes())?;
    Ok(())
}

fn origins(ctx: &Ctx, trace: &Path, store: &Path, weighting: &str, output: Option<PathBuf>) -> anyhow::Result<()> {
    let weighting = if weighting == "mass" { Weighting::Mass } else { Weighting::Occurrence };
    let trace_path = ctx.input(trace);
    let f = File::open(&trace_path).with_context(|| format!("opening trace {}", trace_path.display()))?;
    let steps = read_trace_jsonl(BufReader::new(f))?;
    let s = ctx.load_store(store)?;
    let report = origin_analysis(&steps, &s, weighting).map_err(|e| data_error(e.to_string()))?;
    let rel = output.unwrap_or_else(|| {
        let t = stem(trace);
        PathBuf::from(format!("origins/{}.json", t.trim_end_matches(".trace")))
    });
    ctx.out.write(&rel, serde_json::to_string_pretty(&report)?.as_bytes())?;
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn bench(
    ctx: &Ctx,
    lang: &str,
    stores: &[PathBuf],
    split: &str,
    corpus: Option<&Path>,
    params: Option<&Path>,
    reps: usize,
    output: Option<PathBuf>,
) -> anyhow::Result<()> {
    let rparams = ctx.retrieval_params(params)?;
    let world = ctx.world()?;
    let tag = ctx.lang(&world, lang)?;
    let corpus = ctx.read_corpus(&world, &tag, &ctx.corpus_path(lang, split, corpus))?;
    let indexes = stores
        .iter()
        .map(|p| ctx.load_store(p).and_then(|s| ctx.open_index(p, s)))
        .collect::<anyhow::Result<Vec<_>>>()?;
    let refs: Vec<&Index> = indexes.iter().collect();
    let provider = ToyProvider::new(&world, &tag)?;
    let dparams = DecodeParams { beam_width: 1, ..decode_params(ctx, None) };
    let report = throughput_bench(&provider, &refs, &corpus, &rparams, &dparams, reps)?;
    for r in &report.rows {
        eprintln!("|D| = {:>9}: {:.0} tokens/s", r.size, r.tokens_per_sec);
    }
    let rel = output.unwrap_or_else(|| PathBuf::from(format!("bench/{lang}.csv")));
    ctx.out.write(&rel, write_bench_csv(&report).as_bytes())?;
    Ok(())
}

fn info(ctx: &Ctx, store: &Path) -> anyhow::Result<()> {
    let s = ctx.load_store(store)?;
    println!("{}", serde_json::to_string_pretty(&s.stats())?);
    Ok(())
}
