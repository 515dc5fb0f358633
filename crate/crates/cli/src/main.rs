mod output;

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use templink_core::centrality::{betweenness_social, pagerank_social, pagerank_social_unweighted};
use templink_core::community::{leiden_social, leiden_view, modularity};
use templink_core::embed::{node2vec, LinkMode};
use templink_core::eval::{evaluate_index, evaluate_ml, test_links, EvalReport, KillFeatures};
use templink_core::export::{export_figures, write_link_embeddings};
use templink_core::graph::{AliasTable, WeightedGraph};
use templink_core::indices::{IndexKind, IndexScorer, IndexSpec};
use templink_core::ml::{FeatureMode, ModelKind};
use templink_core::report::{feature_context, report_all, AnalysisConfig, DatasetRef, Inputs, RunManifest};
use templink_core::{load_kills, load_social};

use output::{Cell, Format, Table};

const BUNDLED_DATA: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/../../data");

#[derive(Parser)]
#[command(name = "templink", version, about = "Temporal link prediction on a kills network")]
struct Cli {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    tuning: Tuning,
    /// Master seed for every random component [default: 7, or the config's].
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output format.
    #[arg(long, global = true, value_enum, default_value = "table")]
    format: Format,
    /// JSON file with analysis settings; flags given explicitly win.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Run evaluation repeats one after another instead of in parallel.
    #[arg(long, global = true)]
    serial: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct DataArgs {
    /// Directory holding kills.csv, aliases.csv and got-edges.csv.
    #[arg(long, global = true, env = "TEMPLINK_DATA_DIR")]
    data_dir: Option<PathBuf>,
    /// Kills CSV (season,episode,killer,victim).
    #[arg(long, global = true)]
    kills: Option<PathBuf>,
    /// Alias CSV mapping variant spellings to canonical names.
    #[arg(long, global = true)]
    aliases: Option<PathBuf>,
    /// Ignore the alias table.
    #[arg(long, global = true)]
    no_aliases: bool,
    /// Social edge list (Source,Target,Weight).
    #[arg(long, global = true)]
    social: Option<PathBuf>,
}

#[derive(Args)]
struct Tuning {
    /// Repeats with fresh negative samples [default: 5].
    #[arg(long, global = true)]
    runs: Option<usize>,
    /// First global test episode [default: 30].
    #[arg(long, global = true)]
    episode_start: Option<u32>,
    /// Last global test episode, inclusive [default: 60].
    #[arg(long, global = true)]
    episode_end: Option<u32>,
    /// Add isolated nodes to the negative-sampling universe.
    #[arg(long, global = true)]
    augment_isolated: Option<usize>,
    /// Feed raw features to the classifiers.
    #[arg(long, global = true)]
    no_standardize: bool,
    /// Walk the social network as if every edge had weight 1.
    #[arg(long, global = true)]
    unweighted_walks: bool,
    /// Snapshot used for the kills of a classifier's training set.
    #[arg(long, global = true, value_enum)]
    kill_features: Option<KillFeaturesArg>,
}

#[derive(Clone, Copy, ValueEnum)]
enum KillFeaturesArg {
    TrainingSnapshot,
    AtKill,
}

#[derive(Subcommand)]
enum Command {
    /// Load and validate both networks and summarize them.
    Ingest,
    /// Kills-network statistics.
    Graph {
        #[command(subcommand)]
        command: GraphCommand,
    },
    /// Score killer,victim pairs with an index on the snapshot before an episode.
    Score {
        #[arg(long, value_parser = parse_index)]
        index: IndexKind,
        #[arg(long)]
        death_check: bool,
        #[arg(long)]
        at_episode: u32,
        /// CSV with killer,victim columns.
        #[arg(long)]
        pairs: PathBuf,
    },
    /// Leiden communities of either network.
    Communities {
        #[arg(long, value_enum, default_value = "social")]
        network: Network,
        /// Kills snapshot before this episode [default: full history].
        #[arg(long)]
        at_episode: Option<u32>,
        #[arg(long)]
        resolution: Option<f64>,
    },
    /// Centrality of social-network characters.
    Centrality {
        #[arg(long, value_enum, default_value = "pagerank")]
        measure: MeasureArg,
        /// Ignore edge weights (PageRank only).
        #[arg(long)]
        unweighted: bool,
        #[arg(long)]
        top: Option<usize>,
    },
    /// Train node2vec on the social network and print the vectors.
    Embed,
    /// Link embeddings of the test pairs of the first evaluation run.
    ExportLinkEmbeddings {
        #[arg(long, value_enum, default_value = "concat")]
        mode: ModeArg,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Temporal evaluation of one method.
    Eval {
        #[command(subcommand)]
        command: EvalCommand,
    },
    /// All three result tables.
    Report {
        /// Replay a manifest written by --write-manifest.
        #[arg(long)]
        manifest: Option<PathBuf>,
        #[arg(long)]
        write_manifest: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// CSV files behind the figures.
    ExportFigures {
        #[arg(long, default_value = "figures")]
        out_dir: PathBuf,
    },
}

#[derive(Subcommand)]
enum GraphCommand {
    /// Node, link and death counts, or the out-degree distribution.
    Stats {
        #[arg(long)]
        at_episode: Option<u32>,
        #[arg(long)]
        degrees: bool,
    },
}

#[derive(Subcommand)]
enum EvalCommand {
    Index {
        #[arg(long, value_parser = parse_index)]
        index: IndexKind,
        #[arg(long)]
        death_check: bool,
    },
    Ml {
        #[arg(long, value_parser = parse_model)]
        model: ModelKind,
        /// basic, basic-killer, handcrafted, node2vec or node2vec-average.
        #[arg(long, value_parser = parse_features, default_value = "basic")]
        features: FeatureMode,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Network {
    Social,
    Kills,
}

#[derive(Clone, Copy, ValueEnum)]
enum MeasureArg {
    Pagerank,
    Betweenness,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Concat,
    Average,
}

fn parse_index(s: &str) -> Result<IndexKind, String> {
    s.parse().map_err(|e: templink_core::Error| e.to_string())
}

fn parse_model(s: &str) -> Result<ModelKind, String> {
    s.parse().map_err(|e: templink_core::Error| e.to_string())
}

fn parse_features(s: &str) -> Result<FeatureMode, String> {
    s.parse().map_err(|e: templink_core::Error| e.to_string())
}

struct Paths {
    kills: PathBuf,
    aliases: Option<PathBuf>,
    social: PathBuf,
}

impl Cli {
    fn paths(&self) -> Paths {
        let d = &self.data;
        let dir = d.data_dir.clone().unwrap_or_else(|| PathBuf::from(BUNDLED_DATA));
        let aliases = if d.no_aliases {
            None
        } else {
            d.aliases.clone().or_else(|| Some(dir.join("aliases.csv")).filter(|p| p.exists()))
        };
        Paths {
            kills: d.kills.clone().unwrap_or_else(|| dir.join("kills.csv")),
            aliases,
            social: d.social.clone().unwrap_or_else(|| dir.join("got-edges.csv")),
        }
    }

    fn analysis_config(&self) -> Result<(AnalysisConfig, u64)> {
        let mut cfg = match &self.config {
            Some(p) => {
                let text = fs::read_to_string(p).with_context(|| format!("reading config {}", p.display()))?;
                serde_json::from_str(&text).with_context(|| format!("parsing config {}", p.display()))?
            }
            None => AnalysisConfig::default(),
        };
        let seed = self.seed.unwrap_or(cfg.eval.seed);
        if self.seed.is_some() || self.config.is_none() {
            cfg = cfg.with_seed(seed);
        }
        let t = &self.tuning;
        let e = &mut cfg.eval;
        e.runs = t.runs.unwrap_or(e.runs);
        e.episode_start = t.episode_start.unwrap_or(e.episode_start);
        e.episode_end = t.episode_end.unwrap_or(e.episode_end);
        e.augment_isolated = t.augment_isolated.unwrap_or(e.augment_isolated);
        if let Some(k) = t.kill_features {
            e.kill_features = match k {
                KillFeaturesArg::TrainingSnapshot => KillFeatures::TrainingSnapshot,
                KillFeaturesArg::AtKill => KillFeatures::AtKill,
            };
        }
        if t.no_standardize {
            e.train.standardize = false;
        }
        if t.unweighted_walks {
            cfg.node2vec.weighted = false;
        }
        e.parallel = !self.serial;
        Ok((cfg, seed))
    }

    fn inputs(&self) -> Result<Inputs> {
        let p = self.paths();
        let kills = load_kills(&p.kills, p.aliases.as_deref())
            .with_context(|| format!("loading kills network from {}", p.kills.display()))?;
        let social =
            load_social(&p.social).with_context(|| format!("loading social network from {}", p.social.display()))?;
        Ok(Inputs { kills, social })
    }
}

fn emit(text: &str, out: Option<&Path>) -> Result<()> {
    match out {
        Some(p) => fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn key_values(rows: Vec<(&str, Cell)>) -> Table {
    let mut t = Table::new(["key", "value"]);
    for (k, v) in rows {
        t.push(vec![k.into(), v]);
    }
    t
}

fn report_table(r: &EvalReport) -> Table {
    let mut t = Table::new([
        "method",
        "positives",
        "auc",
        "auc_std",
        "auc_exact",
        "precision",
        "precision_std",
        "recall",
        "recall_std",
    ]);
    t.push(vec![
        r.method.clone().into(),
        r.positives.into(),
        r.auc.mean.into(),
        r.auc.std.into(),
        r.auc_exact.mean.into(),
        r.precision.mean.into(),
        r.precision.std.into(),
        r.recall.mean.into(),
        r.recall.std.into(),
    ]);
    t
}

fn emit_eval(r: &EvalReport, format: Format) -> Result<()> {
    match format {
        Format::Json => emit(&(serde_json::to_string_pretty(r)? + "\n"), None),
        f => emit(&report_table(r).render(f)?, None),
    }
}

fn run(cli: &Cli) -> Result<()> {
    let (cfg, seed) = cli.analysis_config()?;
    let format = cli.format;
    match &cli.command {
        Command::Ingest => {
            let p = cli.paths();
            let inputs = cli.inputs()?;
            let positives: usize = test_links(&inputs.kills, &cfg.eval)?.iter().map(|(_, v)| v.len()).sum();
            let matched = inputs.kills.names().iter().filter(|(_, n)| inputs.social.names().get(n).is_some()).count();
            let mut rows = vec![
                ("kills_nodes", inputs.kills.node_count().into()),
                ("kills_links", inputs.kills.link_count().into()),
                ("unattributed_deaths", inputs.kills.unattributed_deaths().len().into()),
                ("test_positives", positives.into()),
                ("social_nodes", inputs.social.node_count().into()),
                ("social_edges", inputs.social.edge_count().into()),
                ("social_self_loops_dropped", inputs.social.self_loops_dropped().into()),
                ("names_in_both", matched.into()),
                ("kills_sha256", DatasetRef::hash(&p.kills)?.sha256.into()),
                ("social_sha256", DatasetRef::hash(&p.social)?.sha256.into()),
            ];
            if let Some(a) = &p.aliases {
                rows.push(("aliases_sha256", DatasetRef::hash(a)?.sha256.into()));
            }
            emit(&key_values(rows).render(format)?, None)
        }
        Command::Graph {
            command: GraphCommand::Stats { at_episode, degrees },
        } => {
            let inputs = cli.inputs()?;
            let g = &inputs.kills;
            let view = at_episode.map_or_else(|| g.full_view(), |t| g.snapshot_before(t));
            if *degrees {
                let mut t = Table::new(["degree", "node_count", "fraction"]);
                for b in view.out_degree_distribution() {
                    t.push(vec![b.degree.into(), b.node_count.into(), b.fraction.into()]);
                }
                return emit(&t.render(format)?, None);
            }
            let ids = || g.names().iter().map(|(id, _)| id);
            let dead = ids().filter(|&v| view.is_dead(v).unwrap_or(false)).count();
            let killers = ids().filter(|&v| view.out_degree(v).unwrap_or(0) > 0).count();
            let self_kills = view.links().filter(|l| l.killer == l.victim).count();
            let rows = vec![
                ("nodes", view.node_count().into()),
                ("links", view.link_count().into()),
                ("dead_by_link", dead.into()),
                ("killers", killers.into()),
                ("self_kills", self_kills.into()),
                ("max_link_episode", view.max_link_episode().map_or(Cell::Text(String::new()), Cell::from)),
            ];
            emit(&key_values(rows).render(format)?, None)
        }
        Command::Score {
            index,
            death_check,
            at_episode,
            pairs,
        } => {
            let inputs = cli.inputs()?;
            let g = &inputs.kills;
            let aliases = match cli.paths().aliases {
                Some(p) => AliasTable::load(&p)?,
                None => AliasTable::default(),
            };
            let scorer = IndexScorer::new(
                g.snapshot_before(*at_episode),
                IndexSpec::new(*index, *death_check),
                cfg.eval.community_seed,
            )?;
            let mut rdr = csv::ReaderBuilder::new()
                .trim(csv::Trim::All)
                .from_path(pairs)
                .with_context(|| format!("reading pairs from {}", pairs.display()))?;
            let mut t = Table::new(["killer", "victim", "score"]);
            for rec in rdr.records() {
                let rec = rec.with_context(|| format!("reading pairs from {}", pairs.display()))?;
                if rec.len() < 2 {
                    bail!("{}: expected killer,victim columns", pairs.display());
                }
                let (a, b) = (aliases.resolve(&rec[0]), aliases.resolve(&rec[1]));
                let s: f64 = scorer.score(g.id(a)?, g.id(b)?)?;
                t.push(vec![rec[0].into(), rec[1].into(), s.into()]);
            }
            emit(&t.render(format)?, None)
        }
        Command::Communities {
            network,
            at_episode,
            resolution,
        } => {
            let inputs = cli.inputs()?;
            let gamma = resolution.unwrap_or(cfg.resolution);
            let (names, partition, q): (Vec<String>, _, f64) = match network {
                Network::Social => {
                    let p = leiden_social(&inputs.social, gamma, cfg.social_community_seed);
                    let q = modularity(&WeightedGraph::from_social(&inputs.social), &p, gamma)?;
                    (inputs.social.names().iter().map(|(_, n)| n.to_string()).collect(), p, q)
                }
                Network::Kills => {
                    let g = &inputs.kills;
                    let view = at_episode.map_or_else(|| g.full_view(), |t| g.snapshot_before(t));
                    let p = leiden_view(&view, gamma, cfg.eval.community_seed);
                    let q = modularity(&WeightedGraph::from_view(&view), &p, gamma)?;
                    (g.names().iter().map(|(_, n)| n.to_string()).collect(), p, q)
                }
            };
            // stderr keeps stdout parseable
            eprintln!("communities={} modularity={q}", partition.community_count());
            let mut t = Table::new(["name", "community"]);
            for (v, name) in names.into_iter().enumerate() {
                t.push(vec![name.into(), partition.label(v).into()]);
            }
            emit(&t.render(format)?, None)
        }
        Command::Centrality {
            measure,
            unweighted,
            top,
        } => {
            let inputs = cli.inputs()?;
            let s = &inputs.social;
            let scores = match (measure, unweighted) {
                (MeasureArg::Pagerank, false) => pagerank_social(s, cfg.damping)?,
                (MeasureArg::Pagerank, true) => pagerank_social_unweighted(s, cfg.damping)?,
                (MeasureArg::Betweenness, false) => betweenness_social(s),
                (MeasureArg::Betweenness, true) => bail!("--unweighted applies to PageRank only"),
            };
            let mut t = Table::new(["rank", "name", "score"]);
            for (rank, (v, x)) in scores.ranked().into_iter().take(top.unwrap_or(usize::MAX)).enumerate() {
                let name = s.names().name(templink_core::CharacterId::from_index(v));
                t.push(vec![(rank + 1).into(), name.into(), x.into()]);
            }
            emit(&t.render(format)?, None)
        }
        Command::Embed => {
            let inputs = cli.inputs()?;
            let (table, log) = node2vec(&inputs.social, &cfg.node2vec)?;
            log::info!("epoch loss {:?}", log.epoch_loss);
            let mut t = Table::new(
                std::iter::once("name".to_string()).chain((0..table.dim).map(|k| format!("e{k}"))),
            );
            for (id, name) in inputs.social.names().iter() {
                let mut row = vec![Cell::from(name)];
                row.extend(table.vector(Some(id)).iter().map(|&x| Cell::from(x)));
                t.push(row);
            }
            emit(&t.render(format)?, None)
        }
        Command::ExportLinkEmbeddings { mode, out } => {
            let inputs = cli.inputs()?;
            let (ctx, _) = feature_context(&inputs.kills, &inputs.social, &cfg)?;
            let mode = match mode {
                ModeArg::Concat => LinkMode::Concat,
                ModeArg::Average => LinkMode::Average,
            };
            let table = ctx.embeddings.as_ref().expect("context has embeddings");
            let mut buf = Vec::new();
            let n = write_link_embeddings(&inputs.kills, &ctx, table, &cfg.eval, mode, &mut buf)?;
            log::info!("{n} link embeddings");
            emit(&String::from_utf8(buf)?, out.as_deref())
        }
        Command::Eval { command } => {
            let inputs = cli.inputs()?;
            let r = match command {
                EvalCommand::Index { index, death_check } => {
                    evaluate_index(&inputs.kills, IndexSpec::new(*index, *death_check), &cfg.eval)?
                }
                EvalCommand::Ml { model, features } => {
                    let (ctx, _) = feature_context(&inputs.kills, &inputs.social, &cfg)?;
                    evaluate_ml(&inputs.kills, *model, *features, &cfg.eval, &ctx)?
                }
            };
            emit_eval(&r, format)
        }
        Command::Report {
            manifest,
            write_manifest,
            out,
        } => {
            let m = match manifest {
                Some(p) => {
                    let text = fs::read_to_string(p).with_context(|| format!("reading manifest {}", p.display()))?;
                    RunManifest::from_json(&text).with_context(|| format!("parsing manifest {}", p.display()))?
                }
                None => {
                    let p = cli.paths();
                    RunManifest::new(&p.kills, p.aliases.as_deref(), &p.social, seed, cfg.clone())
                        .with_context(|| format!("hashing inputs {} and {}", p.kills.display(), p.social.display()))?
                }
            };
            if let Some(p) = write_manifest {
                fs::write(p, m.to_json()? + "\n").with_context(|| format!("writing {}", p.display()))?;
            }
            let mut m = m;
            m.config.eval.parallel = !cli.serial;
            let report = report_all(&m)?;
            let text = match format {
                Format::Table => report.to_markdown()?,
                Format::Csv => report.to_csv()?,
                Format::Json => report.to_json()?,
            };
            emit(&text, out.as_deref())
        }
        Command::ExportFigures { out_dir } => {
            let inputs = cli.inputs()?;
            let files = export_figures(&inputs, &cfg, out_dir)?;
            let mut t = Table::new(["file"]);
            for f in files {
                t.push(vec![f.display().to_string().into()]);
            }
            emit(&t.render(format)?, None)
        }
    }
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    if let Err(e) = run(&cli) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}
