//! Run manifests and the three result tables.
//!
//! A manifest pins the input files by content hash together with every
//! setting that influences the numbers. Rendering a report never reads the
//! clock, so two runs of one manifest give identical bytes.

use std::fmt::Write as _;
use std::fs;
use std::io::Read;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::centrality::{betweenness_social, pagerank_social};
use crate::community::leiden_social;
use crate::embed::{node2vec, Node2vecParams, TrainingLog};
use crate::error::{Error, Result};
use crate::eval::{evaluate_index, evaluate_ml, EvalConfig, EvalReport, Summary};
use crate::graph::{load_kills, load_social, SocialGraph, TemporalDigraph};
use crate::indices::{IndexKind, IndexSpec};
use crate::ml::{FeatureContext, FeatureMode, ModelKind};

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetRef {
    pub path: PathBuf,
    pub sha256: String,
}

impl DatasetRef {
    pub fn hash(path: &Path) -> Result<Self> {
        Ok(DatasetRef {
            path: path.to_path_buf(),
            sha256: sha256_file(path)?,
        })
    }

    /// Fails if the file no longer has the recorded hash.
    pub fn verify(&self) -> Result<()> {
        let now = sha256_file(&self.path)?;
        if now != self.sha256 {
            return Err(Error::Invalid(format!(
                "{} changed since the manifest was written (sha256 {} != {})",
                self.path.display(),
                now,
                self.sha256
            )));
        }
        Ok(())
    }
}

fn sha256_file(path: &Path) -> Result<String> {
    let mut file = fs::File::open(path).map_err(|e| Error::Invalid(format!("{}: {e}", path.display())))?;
    let mut hasher = Sha256::new();
    let mut buf = [0u8; 8192];
    loop {
        let n = file.read(&mut buf)?;
        if n == 0 {
            break;
        }
        hasher.update(&buf[..n]);
    }
    Ok(hex::encode(hasher.finalize()))
}

/// Everything besides the inputs that the tables depend on.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AnalysisConfig {
    pub eval: EvalConfig,
    pub node2vec: Node2vecParams<f64>,
    pub damping: f64,
    /// Leiden resolution for both networks.
    pub resolution: f64,
    pub social_community_seed: u64,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        AnalysisConfig {
            eval: EvalConfig::default(),
            node2vec: Node2vecParams::default(),
            damping: crate::centrality::DEFAULT_DAMPING,
            resolution: 1.0,
            social_community_seed: 0,
        }
        .with_seed(EvalConfig::default().seed)
    }
}

impl AnalysisConfig {
    /// Points every seeded component at `seed`.
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.eval.seed = seed;
        self.eval.community_seed = seed;
        self.node2vec.seed = seed;
        self.social_community_seed = seed;
        self
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool_version: String,
    pub seed: u64,
    pub kills: DatasetRef,
    pub aliases: Option<DatasetRef>,
    pub social: DatasetRef,
    pub config: AnalysisConfig,
}

/// Loaded inputs of a manifest.
pub struct Inputs {
    pub kills: TemporalDigraph,
    pub social: SocialGraph,
}

impl RunManifest {
    pub fn new(kills: &Path, aliases: Option<&Path>, social: &Path, seed: u64, config: AnalysisConfig) -> Result<Self> {
        Ok(RunManifest {
            tool_version: TOOL_VERSION.to_string(),
            seed,
            kills: DatasetRef::hash(kills)?,
            aliases: aliases.map(DatasetRef::hash).transpose()?,
            social: DatasetRef::hash(social)?,
            config: config.with_seed(seed),
        })
    }

    /// Loads the inputs after checking their hashes.
    pub fn load(&self) -> Result<Inputs> {
        self.kills.verify()?;
        self.social.verify()?;
        if let Some(a) = &self.aliases {
            a.verify()?;
        }
        Ok(Inputs {
            kills: load_kills(&self.kills.path, self.aliases.as_ref().map(|a| a.path.as_path()))?,
            social: load_social(&self.social.path)?,
        })
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

/// Centralities, communities and embeddings of the social network, keyed to
/// the kills network by name.
pub fn feature_context(
    kills: &TemporalDigraph,
    social: &SocialGraph,
    cfg: &AnalysisConfig,
) -> Result<(FeatureContext<f64>, TrainingLog)> {
    let mut ctx = FeatureContext::new(kills, social);
    ctx.pagerank = Some(pagerank_social(social, cfg.damping)?);
    ctx.betweenness = Some(betweenness_social(social));
    ctx.communities = Some(leiden_social(social, cfg.resolution, cfg.social_community_seed));
    let (table, log) = node2vec(social, &cfg.node2vec)?;
    ctx.embeddings = Some(table);
    Ok((ctx, log))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Table {
    pub id: String,
    pub title: String,
    pub rows: Vec<EvalReport>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub manifest: RunManifest,
    pub tables: Vec<Table>,
}

/// Index rows in display order.
pub const INDEX_ROWS: [(IndexKind, bool); 7] = [
    (IndexKind::PreferentialAttachment, false),
    (IndexKind::PreferentialAttachment, true),
    (IndexKind::AdamicAdar, false),
    (IndexKind::AdamicAdar, true),
    (IndexKind::Community, false),
    (IndexKind::Community, true),
    (IndexKind::Alive, false),
];

fn ml_row(
    inputs: &Inputs,
    ctx: &FeatureContext<f64>,
    cfg: &EvalConfig,
    kind: ModelKind,
    mode: FeatureMode,
    label: String,
) -> Result<EvalReport> {
    let mut r = evaluate_ml(&inputs.kills, kind, mode, cfg, ctx)?;
    r.method = label;
    Ok(r)
}

pub fn report_all(manifest: &RunManifest) -> Result<Report> {
    let inputs = manifest.load()?;
    report_with(manifest, &inputs)
}

/// The tables for already loaded inputs.
pub fn report_with(manifest: &RunManifest, inputs: &Inputs) -> Result<Report> {
    let cfg = &manifest.config;
    let ev = &cfg.eval;
    let table1 = INDEX_ROWS
        .iter()
        .map(|&(kind, dc)| evaluate_index(&inputs.kills, IndexSpec::new(kind, dc), ev))
        .collect::<Result<Vec<_>>>()?;
    let (ctx, _) = feature_context(&inputs.kills, &inputs.social, cfg)?;
    let mut table2 = Vec::new();
    let mut table3 = Vec::new();
    let mut node2vec_rows = Vec::new();
    for kind in ModelKind::ALL {
        table2.push(ml_row(inputs, &ctx, ev, kind, FeatureMode::Basic, kind.name().to_string())?);
        table3.push(ml_row(inputs, &ctx, ev, kind, FeatureMode::Handcrafted, kind.name().to_string())?);
        node2vec_rows.push(ml_row(
            inputs,
            &ctx,
            ev,
            kind,
            FeatureMode::Node2vecConcat,
            format!("{} (node2vec)", kind.name()),
        )?);
    }
    table3.extend(node2vec_rows);
    Ok(Report {
        manifest: manifest.clone(),
        tables: vec![
            Table {
                id: "table1".into(),
                title: "Link prediction indices".into(),
                rows: table1,
            },
            Table {
                id: "table2".into(),
                title: "Classifiers on the basic features".into(),
                rows: table2,
            },
            Table {
                id: "table3".into(),
                title: "Classifiers on the augmented features".into(),
                rows: table3,
            },
        ],
    })
}

const CSV_HEADER: [&str; 11] = [
    "table",
    "method",
    "positives",
    "auc_mean",
    "auc_std",
    "auc_exact_mean",
    "auc_exact_std",
    "precision_mean",
    "precision_std",
    "recall_mean",
    "recall_std",
];
const MANIFEST_PREFIX: &str = "# manifest ";

fn cell(s: &Summary, bold: bool) -> String {
    let mean = format!("{:.3}", s.mean);
    let mean = if bold { format!("**{mean}**") } else { mean };
    format!("{mean} ({:.3})", s.std)
}

impl Report {
    pub fn table(&self, id: &str) -> Option<&Table> {
        self.tables.iter().find(|t| t.id == id)
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    /// Summary rows preceded by the manifest on one comment line. Per-run
    /// values are not part of the CSV form.
    pub fn to_csv(&self) -> Result<String> {
        let mut out = format!("{MANIFEST_PREFIX}{}\n", serde_json::to_string(&self.manifest)?);
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(CSV_HEADER)?;
        for t in &self.tables {
            for r in &t.rows {
                let mut rec = vec![t.id.clone(), r.method.clone(), r.positives.to_string()];
                for s in [r.auc, r.auc_exact, r.precision, r.recall] {
                    rec.push(s.mean.to_string());
                    rec.push(s.std.to_string());
                }
                w.write_record(&rec)?;
            }
        }
        let bytes = w.into_inner().map_err(|e| Error::Invalid(e.to_string()))?;
        out.push_str(&String::from_utf8(bytes).map_err(|e| Error::Invalid(e.to_string()))?);
        Ok(out)
    }

    pub fn from_csv(s: &str) -> Result<Self> {
        let (first, rest) = s.split_once('\n').ok_or_else(|| Error::Invalid("empty report".into()))?;
        let manifest: RunManifest = serde_json::from_str(
            first
                .strip_prefix(MANIFEST_PREFIX)
                .ok_or_else(|| Error::Invalid("missing manifest line".into()))?,
        )?;
        let mut tables: Vec<Table> = Vec::new();
        let mut rdr = csv::Reader::from_reader(rest.as_bytes());
        for rec in rdr.records() {
            let rec = rec?;
            if rec.len() != CSV_HEADER.len() {
                return Err(Error::Invalid(format!("expected {} columns, got {}", CSV_HEADER.len(), rec.len())));
            }
            let num = |k: usize| -> Result<f64> {
                rec[k].parse().map_err(|_| Error::Invalid(format!("bad number '{}'", &rec[k])))
            };
            let summary = |k: usize| -> Result<Summary> { Ok(Summary { mean: num(k)?, std: num(k + 1)? }) };
            let row = EvalReport {
                method: rec[1].to_string(),
                positives: rec[2].parse().map_err(|_| Error::Invalid(format!("bad count '{}'", &rec[2])))?,
                auc: summary(3)?,
                auc_exact: summary(5)?,
                precision: summary(7)?,
                recall: summary(9)?,
                runs: Vec::new(),
            };
            match tables.last_mut() {
                Some(t) if t.id == rec[0] => t.rows.push(row),
                _ => tables.push(Table {
                    id: rec[0].to_string(),
                    title: title_of(&rec[0]),
                    rows: vec![row],
                }),
            }
        }
        Ok(Report { manifest, tables })
    }

    /// Markdown with the best mean of each column in bold.
    pub fn to_markdown(&self) -> Result<String> {
        let mut out = String::from("# Temporal link prediction report\n\n");
        for t in &self.tables {
            let _ = writeln!(out, "## {}\n", t.title);
            out.push_str("| Method | AUC | Precision | Recall |\n|---|---|---|---|\n");
            let best = |f: fn(&EvalReport) -> f64| {
                let m = t.rows.iter().map(f).fold(f64::NEG_INFINITY, f64::max);
                format!("{m:.3}")
            };
            let best = [best(|r| r.auc.mean), best(|r| r.precision.mean), best(|r| r.recall.mean)];
            for r in &t.rows {
                let cols = [r.auc, r.precision, r.recall];
                let cells: Vec<String> = cols
                    .iter()
                    .zip(&best)
                    .map(|(s, b)| cell(s, format!("{:.3}", s.mean) == *b))
                    .collect();
                let _ = writeln!(out, "| {} | {} |", r.method.replace('|', "\\|"), cells.join(" | "));
            }
            out.push('\n');
        }
        let _ = writeln!(out, "## Manifest\n\n```json\n{}\n```", self.manifest.to_json()?);
        Ok(out)
    }
}

fn title_of(id: &str) -> String {
    match id {
        "table1" => "Link prediction indices",
        "table2" => "Classifiers on the basic features",
        "table3" => "Classifiers on the augmented features",
        other => other,
    }
    .to_string()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::RunMetrics;
    use std::io::Write;

    fn manifest(dir: &Path) -> RunManifest {
        let kills = dir.join("kills.csv");
        let social = dir.join("social.csv");
        fs::File::create(&kills).unwrap().write_all(b"season,episode,killer,victim\n1,1,A,B\n").unwrap();
        fs::File::create(&social).unwrap().write_all(b"Source,Target,Weight\nA,B,1\n").unwrap();
        RunManifest::new(&kills, None, &social, 11, AnalysisConfig::default()).unwrap()
    }

    fn toy_report(dir: &Path) -> Report {
        let runs = vec![
            RunMetrics { auc: 0.5, auc_exact: 0.5, precision: 0.1, recall: 1.0 / 3.0 },
            RunMetrics { auc: 0.7, auc_exact: 0.65, precision: 0.2, recall: 0.0 },
        ];
        Report {
            manifest: manifest(dir),
            tables: vec![Table {
                id: "table2".into(),
                title: title_of("table2"),
                rows: vec![
                    EvalReport::from_runs("KNN", 3, runs.clone()),
                    EvalReport::from_runs("a|b, \"c\"", 3, runs[..1].to_vec()),
                ],
            }],
        }
    }

    #[test]
    fn seed_reaches_every_component() {
        let c = AnalysisConfig::default().with_seed(99);
        assert_eq!((c.eval.seed, c.eval.community_seed, c.node2vec.seed, c.social_community_seed), (99, 99, 99, 99));
    }

    #[test]
    fn hashes_detect_changes() {
        let dir = tempfile::tempdir().unwrap();
        let m = manifest(dir.path());
        assert_eq!(m.kills.sha256.len(), 64);
        m.kills.verify().unwrap();
        fs::write(&m.kills.path, "season,episode,killer,victim\n").unwrap();
        assert!(m.kills.verify().is_err());
    }

    #[test]
    fn json_and_csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let r = toy_report(dir.path());
        let json = r.to_json().unwrap();
        assert_eq!(Report::from_json(&json).unwrap(), r);
        assert_eq!(Report::from_json(&json).unwrap().to_json().unwrap(), json);
        let csv = r.to_csv().unwrap();
        let back = Report::from_csv(&csv).unwrap();
        assert_eq!(back.to_csv().unwrap(), csv);
        assert_eq!(back.manifest, r.manifest);
        assert_eq!(back.tables[0].rows[0].recall, r.tables[0].rows[0].recall);
    }

    #[test]
    fn markdown_bolds_column_maxima() {
        let dir = tempfile::tempdir().unwrap();
        let md = toy_report(dir.path()).to_markdown().unwrap();
        assert!(md.contains("| KNN | **0.600** (0.100) | **0.150** (0.050) | 0.167 (0.167) |"), "{md}");
        assert!(md.contains("| a\\|b, \"c\" | 0.500 (0.000) | 0.100 (0.000) | **0.333** (0.000) |"), "{md}");
    }

    #[test]
    fn manifest_loads_inputs() {
        let dir = tempfile::tempdir().unwrap();
        let m = manifest(dir.path());
        let inputs = m.load().unwrap();
        assert_eq!(inputs.kills.link_count(), 1);
        assert_eq!(RunManifest::from_json(&m.to_json().unwrap()).unwrap(), m);
    }
}
