//! The `xrl` command line: one subcommand per pipeline stage.
//!
//! Stages communicate through files in the output directory, so any stage can
//! be rerun on its own. Every flag may also come from a TOML config file;
//! flags given on the command line win.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::analysis::{
    cluster_metric, cluster_metric_report, cluster_representatives, embedding_overlay, MetricKind, OverlayField,
};
use crate::clustering::{generate_clusters, ClusterAssignment};
use crate::dataset::{derive, load_dataset, save_dataset, validate, ArrayName, DerivedFields, XrlDataset};
use crate::embedding::{build_feature_matrix, tsne_embed, EmbeddingMap, TsneConfig};
use crate::error::Error;
use crate::render::{chart_svg, emit_dot, graph_svg, layout_graph, write_file, Palette, RenderConfig};
use crate::samdp::{
    all_paths, best_path, build_samdp, make_view, terminal_paths_view, SamdpModel, SamdpView, ViewKind,
    DEFAULT_MAX_HOPS,
};
use crate::synth::{generate_dataset, value_iteration, GridSpec, GridworldMdp, SyntheticPolicy};
use crate::xrld::Container;

pub const OUT_DIR_ENV: &str = "XRL_OUT_DIR";
pub const DEFAULT_OUT_DIR: &str = "xrl-out";
pub const DATASET_FILE: &str = "dataset.xrld";
pub const EMBEDDINGS_FILE: &str = "embeddings.xrld";
pub const CLUSTERS_FILE: &str = "clusters.xrld";

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

#[derive(Debug, Parser)]
#[command(
    name = "xrl",
    version,
    about = "Embed, cluster and graph recorded RL policy behaviour"
)]
pub struct Cli {
    /// TOML file supplying defaults for any flag.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Directory for all artifacts.
    #[arg(long, global = true, env = OUT_DIR_ENV)]
    pub out_dir: Option<PathBuf>,
    /// Dataset file; defaults to `<out-dir>/dataset.xrld`.
    #[arg(long, global = true)]
    pub dataset: Option<PathBuf>,
    /// Seed for every random stage.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a gridworld dataset from an ε-greedy optimal policy.
    Synth(SynthArgs),
    /// Print a summary of the dataset.
    Info,
    /// Check the dataset; exits 1 on any violation.
    Validate,
    /// t-SNE embedding of the dataset.
    Embed(EmbedArgs),
    /// Staged clustering of the dataset.
    Cluster(ClusterArgs),
    /// Per-cluster metrics, embedding overlays and representatives.
    Analyze(AnalyzeArgs),
    /// Cluster transition graphs.
    Samdp(SamdpArgs),
    /// Most probable and all simple paths between two clusters.
    Paths(PathsArgs),
    /// Subgraph of edges leading into terminal clusters.
    TerminalPaths(RenderArgs),
    /// Rerun analysis, graphs and path queries from cached artifacts.
    RenderAll(RenderAllArgs),
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Preset name or path to a TOML layout.
    #[arg(long)]
    pub layout: Option<String>,
    /// Number of episodes to roll out.
    #[arg(long)]
    pub episodes: Option<usize>,
    /// Probability of a uniformly random action.
    #[arg(long)]
    pub epsilon: Option<f64>,
}

#[derive(Debug, Args)]
pub struct EmbedArgs {
    /// Comma-separated array names; defaults to latents, else observations.
    #[arg(long, value_delimiter = ',')]
    pub features: Option<Vec<String>>,
    /// Effective neighbour count; capped at (N - 1) / 3.
    #[arg(long)]
    pub perplexity: Option<f64>,
    /// Gradient descent iterations.
    #[arg(long)]
    pub iterations: Option<usize>,
}

#[derive(Debug, Args)]
pub struct ClusterArgs {
    /// Comma-separated array names to cluster on.
    #[arg(long, value_delimiter = ',')]
    pub features: Option<Vec<String>>,
    /// Number of intermediate clusters.
    #[arg(long)]
    pub k: Option<usize>,
}

#[derive(Debug, Args, Default)]
pub struct RenderArgs {
    /// SVG width in pixels.
    #[arg(long)]
    pub width: Option<u32>,
    /// SVG height in pixels.
    #[arg(long)]
    pub height: Option<u32>,
    /// One of tab10, set2, dark2.
    #[arg(long)]
    pub palette: Option<String>,
    /// Scatter marker radius in pixels.
    #[arg(long)]
    pub point_size: Option<f64>,
    /// Leave action/probability labels off graph edges.
    #[arg(long)]
    pub no_labels: bool,
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    /// Comma-separated subset of confidence, reward, expected_return, critic_value.
    #[arg(long, value_delimiter = ',')]
    pub metrics: Option<Vec<String>>,
    #[command(flatten)]
    pub render: RenderArgs,
}

#[derive(Debug, Args)]
pub struct SamdpArgs {
    /// Comma-separated subset of complete, simplified, likely.
    #[arg(long, value_delimiter = ',')]
    pub views: Option<Vec<String>>,
    /// Drop edges below this probability.
    #[arg(long)]
    pub min_prob: Option<f64>,
    #[command(flatten)]
    pub render: RenderArgs,
}

#[derive(Debug, Args)]
pub struct PathsArgs {
    /// Source cluster id.
    #[arg(long)]
    pub from: Option<usize>,
    /// Destination cluster id.
    #[arg(long)]
    pub to: Option<usize>,
    /// Longest path listed under `all_paths`.
    #[arg(long)]
    pub max_hops: Option<usize>,
    #[command(flatten)]
    pub render: RenderArgs,
}

#[derive(Debug, Args)]
pub struct RenderAllArgs {
    #[command(flatten)]
    pub render: RenderArgs,
}

/// Contents of the `--config` file.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub dataset: Option<PathBuf>,
    pub out_dir: Option<PathBuf>,
    pub seed: Option<u64>,
    pub synth: SynthConfig,
    pub embed: EmbedConfig,
    pub cluster: ClusterConfig,
    pub analyze: AnalyzeConfig,
    pub samdp: SamdpConfig,
    pub paths: PathsConfig,
    pub render: RenderOptions,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub layout: Option<String>,
    pub episodes: Option<usize>,
    pub epsilon: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EmbedConfig {
    pub features: Option<Vec<String>>,
    pub perplexity: Option<f64>,
    pub iterations: Option<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClusterConfig {
    pub features: Option<Vec<String>>,
    pub k: Option<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnalyzeConfig {
    pub metrics: Option<Vec<String>>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamdpConfig {
    pub views: Option<Vec<String>>,
    pub min_prob: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PathsConfig {
    pub from: Option<usize>,
    pub to: Option<usize>,
    pub max_hops: Option<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RenderOptions {
    pub width: Option<u32>,
    pub height: Option<u32>,
    pub palette: Option<String>,
    pub point_size: Option<f64>,
    pub labels: Option<bool>,
}

pub const DEFAULT_LAYOUT: &str = "cliffwalk-4x4";
pub const DEFAULT_EPISODES: usize = 200;
pub const DEFAULT_EPSILON: f64 = 0.1;
pub const DEFAULT_K: usize = 20;

/// Why a run stopped.
#[derive(Debug)]
pub enum Failure {
    /// Bad flags, config or a missing earlier stage; exit code 2.
    Usage(String),
    /// Invalid data or a failed computation; exit code 1.
    Failed(String),
}

impl Failure {
    pub fn exit_code(&self) -> i32 {
        match self {
            Failure::Usage(_) => EXIT_USAGE,
            Failure::Failed(_) => EXIT_FAILURE,
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Config(_) => Failure::Usage(e.to_string()),
            _ => Failure::Failed(e.to_string()),
        }
    }
}

type Outcome<T = ()> = std::result::Result<T, Failure>;

/// Flags merged over the config file.
struct Context {
    config: RunConfig,
    out_dir: PathBuf,
    dataset_path: PathBuf,
    seed: u64,
}

impl Context {
    fn new(cli: &Cli) -> Outcome<Self> {
        let config = match &cli.config {
            Some(path) => {
                let text = fs::read_to_string(path)
                    .map_err(|e| Failure::Usage(format!("cannot read config {}: {e}", path.display())))?;
                toml::from_str::<RunConfig>(&text)
                    .map_err(|e| Failure::Usage(format!("config {}: {e}", path.display())))?
            }
            None => RunConfig::default(),
        };
        let out_dir = cli
            .out_dir
            .clone()
            .or_else(|| config.out_dir.clone())
            .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT_DIR));
        let dataset_path = cli
            .dataset
            .clone()
            .or_else(|| config.dataset.clone())
            .unwrap_or_else(|| out_dir.join(DATASET_FILE));
        let seed = cli.seed.or(config.seed).unwrap_or(0);
        Ok(Context {
            config,
            out_dir,
            dataset_path,
            seed,
        })
    }

    fn artifact(&self, name: &str) -> PathBuf {
        self.out_dir.join(name)
    }

    fn ensure_out_dir(&self) -> Outcome {
        fs::create_dir_all(&self.out_dir).map_err(|e| Error::io(&self.out_dir, e).into())
    }

    fn write(&self, name: &str, text: &str) -> Outcome {
        let path = self.artifact(name);
        write_file(&path, text)?;
        println!("wrote {}", path.display());
        Ok(())
    }

    fn write_json(&self, name: &str, value: &impl Serialize) -> Outcome {
        let text = serde_json::to_string_pretty(value).expect("artifact serializes");
        self.write(name, &(text + "\n"))
    }

    fn render_config(&self, args: &RenderArgs) -> Outcome<(RenderConfig, bool)> {
        let opts = &self.config.render;
        let mut config = RenderConfig::default();
        if let Some(w) = args.width.or(opts.width) {
            config.width = w;
        }
        if let Some(h) = args.height.or(opts.height) {
            config.height = h;
        }
        if let Some(p) = args.palette.as_ref().or(opts.palette.as_ref()) {
            config.palette = p.parse::<Palette>()?;
        }
        if let Some(s) = args.point_size.or(opts.point_size) {
            config.point_size = s;
        }
        let labels = !args.no_labels && opts.labels.unwrap_or(true);
        Ok((config, labels))
    }

    fn load_dataset(&self) -> Outcome<XrlDataset> {
        if !self.dataset_path.exists() {
            return Err(Failure::Usage(format!(
                "dataset {} not found; run the synth stage or pass --dataset",
                self.dataset_path.display()
            )));
        }
        Ok(load_dataset(&self.dataset_path)?)
    }

    /// The dataset without a trailing unfinished episode, and its derived fields.
    fn prepared(&self) -> Outcome<(XrlDataset, DerivedFields)> {
        let raw = self.load_dataset()?;
        let report = validate(&raw);
        if let Some(v) = report.violations.first() {
            return Err(Failure::Failed(format!(
                "dataset has {} validation violation(s), first: {v}",
                report.violations.len()
            )));
        }
        let dataset = match report.truncated_tail {
            Some(cut) => {
                eprintln!("note: dropping unfinished trailing episode from index {cut}");
                raw.truncated(cut)
            }
            None => raw,
        };
        let derived = derive(&dataset)?;
        Ok((dataset, derived))
    }

    fn require(&self, file: &str, stage: &str) -> Outcome<Container> {
        let path = self.artifact(file);
        if !path.exists() {
            return Err(Failure::Usage(format!(
                "{} not found; run the {stage} stage first",
                path.display()
            )));
        }
        Ok(Container::read(&path)?)
    }

    fn clusters(&self, n: usize) -> Outcome<ClusterAssignment> {
        let clusters = ClusterAssignment::from_container(&self.require(CLUSTERS_FILE, "cluster")?)?;
        if clusters.labels.len() != n {
            return Err(Failure::Failed(format!(
                "{CLUSTERS_FILE} labels {} datapoints but the dataset has {n}; rerun the cluster stage",
                clusters.labels.len()
            )));
        }
        Ok(clusters)
    }
}

fn parse_names(names: &[String]) -> Outcome<Vec<ArrayName>> {
    Ok(names
        .iter()
        .map(|s| s.trim().parse())
        .collect::<crate::Result<Vec<_>>>()?)
}

/// Parses `args` (program name first) and runs; returns the exit code.
pub fn run_from<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match run(&cli) {
        Ok(code) => code,
        Err(f) => {
            match &f {
                Failure::Usage(msg) => eprintln!("usage error: {msg}"),
                Failure::Failed(msg) => eprintln!("error: {msg}"),
            }
            f.exit_code()
        }
    }
}

pub fn run(cli: &Cli) -> Outcome<i32> {
    let ctx = Context::new(cli)?;
    match &cli.command {
        Command::Synth(args) => synth(&ctx, args).map(|_| EXIT_OK),
        Command::Info => info(&ctx).map(|_| EXIT_OK),
        Command::Validate => validate_cmd(&ctx),
        Command::Embed(args) => embed(&ctx, args).map(|_| EXIT_OK),
        Command::Cluster(args) => cluster(&ctx, args).map(|_| EXIT_OK),
        Command::Analyze(args) => analyze(&ctx, args.metrics.as_deref(), &args.render).map(|_| EXIT_OK),
        Command::Samdp(args) => samdp(&ctx, args.views.as_deref(), args.min_prob, &args.render).map(|_| EXIT_OK),
        Command::Paths(args) => paths(&ctx, args).map(|_| EXIT_OK),
        Command::TerminalPaths(args) => terminal_paths(&ctx, args).map(|_| EXIT_OK),
        Command::RenderAll(args) => render_all(&ctx, &args.render).map(|_| EXIT_OK),
    }
}

fn synth(ctx: &Context, args: &SynthArgs) -> Outcome {
    let cfg = &ctx.config.synth;
    let layout = args
        .layout
        .clone()
        .or_else(|| cfg.layout.clone())
        .unwrap_or_else(|| DEFAULT_LAYOUT.into());
    let episodes = args.episodes.or(cfg.episodes).unwrap_or(DEFAULT_EPISODES);
    let epsilon = args.epsilon.or(cfg.epsilon).unwrap_or(DEFAULT_EPSILON);
    if episodes == 0 {
        return Err(Failure::Usage("--episodes must be >= 1".into()));
    }
    let spec = if layout.ends_with(".toml") || Path::new(&layout).is_file() {
        let text =
            fs::read_to_string(&layout).map_err(|e| Failure::Usage(format!("cannot read layout {layout}: {e}")))?;
        GridSpec::from_toml(&text)?
    } else {
        GridSpec::preset(&layout)?
    };
    let mdp = GridworldMdp::from_spec(&spec)?;
    let (_, q) = value_iteration(&mdp, 1e-9)?;
    let policy = SyntheticPolicy::new(q, epsilon).map_err(|e| Failure::Usage(e.to_string()))?;
    let dataset = generate_dataset(&mdp, &policy, episodes, ctx.seed)?;

    if let Some(parent) = ctx.dataset_path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| Failure::from(Error::io(parent, e)))?;
    }
    save_dataset(&dataset, &ctx.dataset_path)?;
    println!(
        "wrote {} ({} records, {} episodes)",
        ctx.dataset_path.display(),
        dataset.len(),
        episodes
    );
    Ok(())
}

fn info(ctx: &Context) -> Outcome {
    let d = ctx.load_dataset()?;
    let report = validate(&d);
    let arrays: Vec<&str> = ArrayName::ALL
        .iter()
        .filter(|&&a| d.has(a))
        .map(|a| a.as_str())
        .collect();
    println!("dataset:      {}", ctx.dataset_path.display());
    println!("environment:  {}", d.meta.env_id);
    println!("generator:    {}", d.meta.generator);
    println!("records:      {}", d.len());
    println!("episodes:     {}", d.episode_ranges().len());
    println!("actions:      {}", d.num_actions());
    println!("observation:  {:?}", d.meta.obs_shape);
    println!("discount:     {}", d.discount());
    println!("arrays:       {}", arrays.join(", "));
    if let Some(t) = &d.meta.timeout_episodes {
        println!("timeouts:     {}", t.len());
    }
    println!("violations:   {}", report.violations.len());
    if let Some(cut) = report.truncated_tail {
        println!("unfinished trailing episode from index {cut}");
    }
    Ok(())
}

fn validate_cmd(ctx: &Context) -> Outcome<i32> {
    let d = ctx.load_dataset()?;
    let report = validate(&d);
    for v in &report.violations {
        println!("violation: {v}");
    }
    if let Some(cut) = report.truncated_tail {
        println!("note: trailing episode from index {cut} has no terminal step");
    }
    if report.is_clean() {
        println!("ok: {} records", d.len());
        Ok(EXIT_OK)
    } else {
        println!("{} violation(s)", report.violations.len());
        Ok(EXIT_FAILURE)
    }
}

fn embed(ctx: &Context, args: &EmbedArgs) -> Outcome {
    let (dataset, _) = ctx.prepared()?;
    let cfg = &ctx.config.embed;
    let spec = match args.features.as_ref().or(cfg.features.as_ref()) {
        Some(names) => parse_names(names)?,
        None if dataset.has(ArrayName::Latents) => vec![ArrayName::Latents],
        None => vec![ArrayName::Observations],
    };
    let defaults = TsneConfig::default();
    let tsne = TsneConfig {
        perplexity: args.perplexity.or(cfg.perplexity).unwrap_or(defaults.perplexity),
        iterations: args.iterations.or(cfg.iterations).unwrap_or(defaults.iterations),
        seed: ctx.seed,
        ..defaults
    };
    let features = build_feature_matrix(&dataset, &spec)?;
    let mut map = tsne_embed(features.view(), &tsne)?;
    map.feature_spec = spec.iter().map(|s| s.to_string()).collect();
    ctx.ensure_out_dir()?;
    let path = ctx.artifact(EMBEDDINGS_FILE);
    map.to_container(&dataset.meta).write(&path)?;
    println!("wrote {} (KL {:.4})", path.display(), map.final_kl);
    Ok(())
}

fn cluster(ctx: &Context, args: &ClusterArgs) -> Outcome {
    let (dataset, derived) = ctx.prepared()?;
    let cfg = &ctx.config.cluster;
    let names = args
        .features
        .as_ref()
        .or(cfg.features.as_ref())
        .ok_or_else(|| Failure::Usage("cluster needs --features (e.g. --features latents)".into()))?;
    let spec = parse_names(names)?;
    let k = args.k.or(cfg.k).unwrap_or(DEFAULT_K);
    let clusters = generate_clusters(&dataset, &derived, &spec, k, ctx.seed)?;
    ctx.ensure_out_dir()?;
    let path = ctx.artifact(CLUSTERS_FILE);
    clusters.to_container(&dataset.meta).write(&path)?;
    println!(
        "wrote {} ({} intermediate, {} initial, {} terminal clusters)",
        path.display(),
        clusters.k_intermediate,
        clusters.n_initial,
        clusters.n_terminal
    );
    Ok(())
}

fn analyze(ctx: &Context, metrics: Option<&[String]>, render: &RenderArgs) -> Outcome {
    let (dataset, derived) = ctx.prepared()?;
    let clusters = ctx.clusters(dataset.len())?;
    let (config, _) = ctx.render_config(render)?;
    let kinds: Vec<MetricKind> = match metrics.or(ctx.config.analyze.metrics.as_deref()) {
        Some(names) => names.iter().map(|s| s.trim().parse()).collect::<crate::Result<_>>()?,
        None => MetricKind::ALL
            .into_iter()
            .filter(|m| match m {
                MetricKind::Confidence => dataset.has(ArrayName::DistProbs),
                MetricKind::CriticValue => dataset.has(ArrayName::CriticValues),
                _ => true,
            })
            .collect(),
    };
    ctx.ensure_out_dir()?;

    let mut summaries = Vec::new();
    for kind in kinds {
        let metric = cluster_metric(&dataset, &derived, &clusters, kind)?;
        let graph = metric.to_graph();
        ctx.write(&format!("metric_{kind}.svg"), &chart_svg(&graph, &config)?)?;
        ctx.write_json(&format!("metric_{kind}.json"), &graph)?;
        summaries.push(metric);
    }
    let report = cluster_metric_report(&summaries)?;
    report.save(&ctx.artifact("metrics.csv"), &ctx.artifact("metrics.json"))?;
    println!("wrote {}", ctx.artifact("metrics.csv").display());

    let reps = cluster_representatives(&dataset, &clusters, 3)?;
    ctx.write_json("representatives.json", &reps)?;

    let emb_path = ctx.artifact(EMBEDDINGS_FILE);
    if emb_path.exists() {
        let map = EmbeddingMap::from_container(&Container::read(&emb_path)?)?;
        if map.len() != dataset.len() {
            return Err(Failure::Failed(format!(
                "{EMBEDDINGS_FILE} has {} points but the dataset has {}; rerun the embed stage",
                map.len(),
                dataset.len()
            )));
        }
        for field in OverlayField::ALL {
            let available = match field {
                OverlayField::Confidence => dataset.has(ArrayName::DistProbs),
                OverlayField::CriticValue => dataset.has(ArrayName::CriticValues),
                _ => true,
            };
            if available {
                let graph = embedding_overlay(&dataset, &derived, &map, field)?;
                ctx.write(&format!("overlay_{field}.svg"), &chart_svg(&graph, &config)?)?;
                ctx.write_json(&format!("overlay_{field}.json"), &graph)?;
            }
        }
    } else {
        eprintln!("note: no {EMBEDDINGS_FILE}; skipping embedding overlays");
    }
    Ok(())
}

fn model(ctx: &Context) -> Outcome<SamdpModel> {
    let (dataset, derived) = ctx.prepared()?;
    let clusters = ctx.clusters(dataset.len())?;
    Ok(build_samdp(&dataset, &derived, &clusters)?)
}

fn write_view(ctx: &Context, stem: &str, view: &SamdpView, render: &RenderArgs) -> Outcome {
    let (config, labels) = ctx.render_config(render)?;
    ctx.write(&format!("{stem}.dot"), &emit_dot(view, labels))?;
    let layout = layout_graph(view, ctx.seed);
    ctx.write(&format!("{stem}.svg"), &graph_svg(view, &layout, &config, labels)?)?;
    ctx.write_json(&format!("{stem}.json"), view)
}

fn samdp(ctx: &Context, views: Option<&[String]>, min_prob: Option<f64>, render: &RenderArgs) -> Outcome {
    let model = model(ctx)?;
    let cfg = &ctx.config.samdp;
    let kinds: Vec<ViewKind> = match views.or(cfg.views.as_deref()) {
        Some(names) => names
            .iter()
            .map(|s| s.trim().parse().map_err(|e: Error| Failure::Usage(e.to_string())))
            .collect::<Outcome<_>>()?,
        None => vec![ViewKind::Complete, ViewKind::Simplified, ViewKind::Likely],
    };
    let min_prob = min_prob.or(cfg.min_prob);
    ctx.ensure_out_dir()?;
    for kind in kinds {
        let mut view = make_view(&model, kind).map_err(|e| Failure::Usage(e.to_string()))?;
        if let Some(p) = min_prob {
            view = view.with_min_prob(p);
        }
        write_view(ctx, &format!("samdp_{kind}"), &view, render)?;
    }
    Ok(())
}

fn paths(ctx: &Context, args: &PathsArgs) -> Outcome {
    let cfg = &ctx.config.paths;
    let from = args
        .from
        .or(cfg.from)
        .ok_or_else(|| Failure::Usage("paths needs --from".into()))?;
    let to = args
        .to
        .or(cfg.to)
        .ok_or_else(|| Failure::Usage("paths needs --to".into()))?;
    let max_hops = args.max_hops.or(cfg.max_hops).unwrap_or(DEFAULT_MAX_HOPS);
    let model = model(ctx)?;
    write_paths(ctx, &model, from, to, max_hops, &args.render)
}

fn write_paths(
    ctx: &Context,
    model: &SamdpModel,
    from: usize,
    to: usize,
    max_hops: usize,
    render: &RenderArgs,
) -> Outcome {
    let best = best_path(model, from, to)?;
    let all = all_paths(model, from, to, max_hops)?;
    ctx.ensure_out_dir()?;
    let stem = format!("paths_{from}_{to}");
    let doc = json!({
        "from": from,
        "to": to,
        "reachable": best.is_some(),
        "nodes": best.as_ref().map(|p| p.nodes.clone()).unwrap_or_default(),
        "path": best.as_ref().map(|p| p.hops.clone()).unwrap_or_default(),
        "probability": best.as_ref().map_or(0.0, |p| p.probability),
        "max_hops": max_hops,
        "all_paths": all,
    });
    ctx.write_json(&format!("{stem}.json"), &doc)?;
    if let Some(p) = best.filter(|p| !p.hops.is_empty()) {
        let view = p.to_view(model);
        let (_, labels) = ctx.render_config(render)?;
        ctx.write(&format!("{stem}.dot"), &emit_dot(&view, labels))?;
    }
    Ok(())
}

fn terminal_paths(ctx: &Context, render: &RenderArgs) -> Outcome {
    let model = model(ctx)?;
    let view = terminal_paths_view(&model)?;
    ctx.ensure_out_dir()?;
    write_view(ctx, "samdp_terminal-paths", &view, render)
}

fn render_all(ctx: &Context, render: &RenderArgs) -> Outcome {
    ctx.require(CLUSTERS_FILE, "cluster")?;
    analyze(ctx, None, render)?;
    samdp(ctx, None, None, render)?;
    terminal_paths(ctx, render)?;
    let cfg = &ctx.config.paths;
    if let (Some(from), Some(to)) = (cfg.from, cfg.to) {
        let model = model(ctx)?;
        write_paths(ctx, &model, from, to, cfg.max_hops.unwrap_or(DEFAULT_MAX_HOPS), render)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_file_parses() {
        let text = r#"
            seed = 3
            out_dir = "runs/a"
            [cluster]
            features = ["latents"]
            k = 5
            [samdp]
            views = ["likely"]
            [render]
            palette = "set2"
            labels = false
        "#;
        let cfg: RunConfig = toml::from_str(text).unwrap();
        assert_eq!(cfg.seed, Some(3));
        assert_eq!(cfg.cluster.k, Some(5));
        assert_eq!(cfg.render.labels, Some(false));
        assert!(toml::from_str::<RunConfig>("bogus = 1").is_err());
    }

    #[test]
    fn usage_errors_exit_two() {
        assert_eq!(run_from(["xrl", "no-such-command"]), EXIT_USAGE);
        assert_eq!(run_from(["xrl", "paths", "--from", "x"]), EXIT_USAGE);
    }

    #[test]
    fn config_errors_are_usage_errors() {
        assert_eq!(Failure::from(Error::Config("x".into())).exit_code(), EXIT_USAGE);
        assert_eq!(Failure::from(Error::Input("x".into())).exit_code(), EXIT_FAILURE);
    }
}
