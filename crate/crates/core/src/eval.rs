//! Episode-by-episode evaluation of link predictors.
//!
//! For each test episode `t` the positives are the kills at `t`, scored on
//! the snapshot of kills strictly before `t`. Negatives are sampled non-links.
//! Each run repeats the random parts with its own derived streams.

use std::collections::HashSet;

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{CharacterId, DigraphView, TemporalDigraph};
use crate::indices::{IndexScorer, IndexSpec};
use crate::ml::{build_features, train, FeatureContext, FeatureMode, LinkSample, ModelKind, TrainConfig};
use crate::rng::{self, tag};

pub type Pair = (CharacterId, CharacterId);

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalConfig {
    pub episode_start: u32,
    pub episode_end: u32,
    pub runs: usize,
    pub seed: u64,
    /// Index scores strictly above this count as positive.
    pub index_threshold: f64,
    /// Classifier scores at or above this count as positive.
    pub ml_threshold: f64,
    /// Extra isolated nodes added to the negative-sampling universe.
    pub augment_isolated: usize,
    /// Seed for Leiden partitions of snapshots.
    pub community_seed: u64,
    pub train: TrainConfig,
    pub kill_features: KillFeatures,
    /// Execute runs on the rayon pool. Results do not depend on it, so it is
    /// left out of serialized configs.
    #[serde(skip)]
    pub parallel: bool,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            episode_start: 30,
            episode_end: 60,
            runs: 5,
            seed: 7,
            index_threshold: 0.0,
            ml_threshold: 0.5,
            augment_isolated: 0,
            community_seed: 0,
            train: TrainConfig::default(),
            kill_features: KillFeatures::default(),
            parallel: true,
        }
    }
}

impl EvalConfig {
    pub fn validate(&self) -> Result<()> {
        if self.episode_start == 0 || self.episode_start > self.episode_end {
            return Err(Error::Invalid(format!(
                "bad episode range {}..={}",
                self.episode_start, self.episode_end
            )));
        }
        if self.runs == 0 {
            return Err(Error::Invalid("runs must be positive".into()));
        }
        Ok(())
    }
}

/// Snapshot used to featurize the kills of a classifier's training set.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KillFeatures {
    /// The same snapshot as the training negatives.
    #[default]
    TrainingSnapshot,
    /// The snapshot just before each kill's own episode.
    AtKill,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ScoreSets {
    pub positives: Vec<f64>,
    pub negatives: Vec<f64>,
}

fn check_nonempty(s: &ScoreSets) -> Result<()> {
    if s.positives.is_empty() || s.negatives.is_empty() {
        return Err(Error::EmptyScores);
    }
    Ok(())
}

fn compare(p: f64, n: f64) -> f64 {
    if p > n {
        1.0
    } else if p == n {
        0.5
    } else {
        0.0
    }
}

/// `(b + e/2) / |S_P|` over `|S_P|` uniformly drawn (positive, negative)
/// score pairs, drawn with replacement.
pub fn auc_sampled<R: Rng>(s: &ScoreSets, rng: &mut R) -> Result<f64> {
    check_nonempty(s)?;
    let draws = s.positives.len();
    let total: f64 = (0..draws)
        .map(|_| {
            let p = s.positives[rng.gen_range(0..s.positives.len())];
            let n = s.negatives[rng.gen_range(0..s.negatives.len())];
            compare(p, n)
        })
        .sum();
    Ok(total / draws as f64)
}

/// Mann-Whitney statistic over all positive/negative pairs.
pub fn auc_exact(s: &ScoreSets) -> Result<f64> {
    check_nonempty(s)?;
    let total: f64 = s
        .positives
        .iter()
        .map(|&p| s.negatives.iter().map(|&n| compare(p, n)).sum::<f64>())
        .sum();
    Ok(total / (s.positives.len() * s.negatives.len()) as f64)
}

/// Precision and recall when scores above `threshold` (or equal, if not
/// `strict`) are classified positive. Precision is 0 when nothing is.
pub fn precision_recall(s: &ScoreSets, threshold: f64, strict: bool) -> (f64, f64) {
    let hit = |x: f64| if strict { x > threshold } else { x >= threshold };
    let tp = s.positives.iter().filter(|&&x| hit(x)).count();
    let fp = s.negatives.iter().filter(|&&x| hit(x)).count();
    let precision = if tp + fp == 0 { 0.0 } else { tp as f64 / (tp + fp) as f64 };
    let recall = if s.positives.is_empty() { 0.0 } else { tp as f64 / s.positives.len() as f64 };
    (precision, recall)
}

/// `count` distinct ordered pairs `(i, j)`, `i != j`, drawn uniformly from
/// all node pairs that are neither links of `g` nor in `exclude`.
pub fn sample_negatives<R: Rng>(
    g: &TemporalDigraph,
    count: usize,
    exclude: &HashSet<Pair>,
    rng: &mut R,
) -> Result<Vec<Pair>> {
    let n = g.node_count();
    let universe = n * n.saturating_sub(1);
    let mut banned: HashSet<Pair> = g
        .links()
        .iter()
        .filter(|l| l.killer != l.victim)
        .map(|l| (l.killer, l.victim))
        .collect();
    banned.extend(exclude.iter().filter(|(a, b)| a != b && a.index() < n && b.index() < n));
    let available = universe - banned.len();
    if count > available {
        return Err(Error::NegativeUniverse {
            requested: count,
            available,
        });
    }
    if count == 0 {
        return Ok(Vec::new());
    }
    if 2 * count > available {
        let mut all: Vec<Pair> = (0..n)
            .flat_map(|a| (0..n).map(move |b| (a, b)))
            .filter(|(a, b)| a != b)
            .map(|(a, b)| (CharacterId::from_index(a), CharacterId::from_index(b)))
            .filter(|p| !banned.contains(p))
            .collect();
        let (chosen, _) = all.partial_shuffle(rng, count);
        return Ok(chosen.to_vec());
    }
    let mut out = Vec::with_capacity(count);
    let mut taken: HashSet<Pair> = HashSet::with_capacity(count);
    while out.len() < count {
        let a = rng.gen_range(0..n);
        let b = rng.gen_range(0..n);
        if a == b {
            continue;
        }
        let p = (CharacterId::from_index(a), CharacterId::from_index(b));
        if banned.contains(&p) || !taken.insert(p) {
            continue;
        }
        out.push(p);
    }
    Ok(out)
}

/// Observes every view the harness scores against. `test_episode` is the
/// episode of the positives being scored, or `None` for negatives.
pub trait ViewProbe: Sync {
    fn observe(&self, view: &DigraphView<'_>, test_episode: Option<u32>);
}

pub struct NoProbe;

impl ViewProbe for NoProbe {
    fn observe(&self, _: &DigraphView<'_>, _: Option<u32>) {}
}

fn hygiene(view: &DigraphView<'_>, t: u32, probe: &dyn ViewProbe) -> Result<()> {
    probe.observe(view, Some(t));
    match view.max_link_episode() {
        Some(e) if e >= t => Err(Error::TemporalLeak { cutoff: t, episode: e }),
        _ => Ok(()),
    }
}

/// Scores pairs against one view.
pub trait PairScorer {
    fn score(&self, i: CharacterId, j: CharacterId) -> Result<f64>;
}

/// Builds a [`PairScorer`] for a view.
pub trait ScorerFactory: Sync {
    type Scorer<'v>: PairScorer + Sync;
    fn build<'v>(&self, view: DigraphView<'v>) -> Result<Self::Scorer<'v>>;
}

impl PairScorer for IndexScorer<'_> {
    fn score(&self, i: CharacterId, j: CharacterId) -> Result<f64> {
        IndexScorer::score(self, i, j)
    }
}

/// An index plus the seed used for any community detection it needs.
#[derive(Clone, Copy, Debug)]
pub struct IndexFactory {
    pub spec: IndexSpec,
    pub community_seed: u64,
}

impl ScorerFactory for IndexFactory {
    type Scorer<'v> = IndexScorer<'v>;

    fn build<'v>(&self, view: DigraphView<'v>) -> Result<IndexScorer<'v>> {
        IndexScorer::new(view, self.spec, self.community_seed)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mean: f64,
    /// Population standard deviation.
    pub std: f64,
}

impl Summary {
    pub fn of(values: &[f64]) -> Self {
        if values.is_empty() {
            return Summary::default();
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        Summary { mean, std: var.sqrt() }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub auc: f64,
    pub auc_exact: f64,
    pub precision: f64,
    pub recall: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub method: String,
    pub positives: usize,
    pub auc: Summary,
    pub auc_exact: Summary,
    pub precision: Summary,
    pub recall: Summary,
    pub runs: Vec<RunMetrics>,
}

impl EvalReport {
    pub fn from_runs(method: impl Into<String>, positives: usize, runs: Vec<RunMetrics>) -> Self {
        let col = |f: fn(&RunMetrics) -> f64| Summary::of(&runs.iter().map(f).collect::<Vec<_>>());
        EvalReport {
            method: method.into(),
            positives,
            auc: col(|r| r.auc),
            auc_exact: col(|r| r.auc_exact),
            precision: col(|r| r.precision),
            recall: col(|r| r.recall),
            runs,
        }
    }
}

fn metrics(s: &ScoreSets, seed: u64, run: usize, threshold: f64, strict: bool) -> Result<RunMetrics> {
    let mut rng = rng::stream(seed, &[run as u64, tag::AUC_PAIRING]);
    let auc = auc_sampled(s, &mut rng)?;
    let (precision, recall) = precision_recall(s, threshold, strict);
    Ok(RunMetrics {
        auc,
        auc_exact: auc_exact(s)?,
        precision,
        recall,
    })
}

fn map_runs<F>(cfg: &EvalConfig, f: F) -> Result<Vec<RunMetrics>>
where
    F: Fn(usize) -> Result<RunMetrics> + Send + Sync,
{
    if cfg.parallel {
        (0..cfg.runs).into_par_iter().map(f).collect()
    } else {
        (0..cfg.runs).map(f).collect()
    }
}

/// Kills inside the evaluation window, grouped by episode.
pub fn test_links(g: &TemporalDigraph, cfg: &EvalConfig) -> Result<Vec<(u32, Vec<Pair>)>> {
    let mut out = Vec::new();
    for t in cfg.episode_start..=cfg.episode_end {
        let pairs: Vec<Pair> = g
            .links()
            .iter()
            .filter(|l| l.episode == t)
            .map(|l| (l.killer, l.victim))
            .collect();
        if !pairs.is_empty() {
            out.push((t, pairs));
        }
    }
    if out.is_empty() {
        return Err(Error::NoPositives {
            start: cfg.episode_start,
            end: cfg.episode_end,
        });
    }
    Ok(out)
}

/// Index protocol with a custom scorer and probe.
pub fn evaluate_scorer<F: ScorerFactory>(
    g: &TemporalDigraph,
    factory: &F,
    method: &str,
    cfg: &EvalConfig,
    probe: &dyn ViewProbe,
) -> Result<EvalReport> {
    cfg.validate()?;
    let g = g.add_isolated_nodes(cfg.augment_isolated);
    let tests = test_links(&g, cfg)?;
    let mut positives = Vec::new();
    for (t, pairs) in &tests {
        let view = g.snapshot_before(*t);
        hygiene(&view, *t, probe)?;
        let scorer = factory.build(view)?;
        for &(i, j) in pairs {
            positives.push(scorer.score(i, j)?);
        }
    }
    let full = g.full_view();
    probe.observe(&full, None);
    let full_scorer = factory.build(full)?;
    let runs = map_runs(cfg, |run| {
        let mut rng = rng::stream(cfg.seed, &[run as u64, tag::NEGATIVES]);
        let negs = sample_negatives(&g, positives.len(), &HashSet::new(), &mut rng)?;
        let negatives = negs
            .iter()
            .map(|&(i, j)| full_scorer.score(i, j))
            .collect::<Result<Vec<f64>>>()?;
        let s = ScoreSets {
            positives: positives.clone(),
            negatives,
        };
        metrics(&s, cfg.seed, run, cfg.index_threshold, true)
    })?;
    Ok(EvalReport::from_runs(method, positives.len(), runs))
}

pub fn evaluate_index(g: &TemporalDigraph, spec: IndexSpec, cfg: &EvalConfig) -> Result<EvalReport> {
    evaluate_index_with_probe(g, spec, cfg, &NoProbe)
}

pub fn evaluate_index_with_probe(
    g: &TemporalDigraph,
    spec: IndexSpec,
    cfg: &EvalConfig,
    probe: &dyn ViewProbe,
) -> Result<EvalReport> {
    let factory = IndexFactory {
        spec,
        community_seed: cfg.community_seed,
    };
    evaluate_scorer(g, &factory, &spec.to_string(), cfg, probe)
}

/// Kill features at the moment of each kill (snapshot before its episode).
fn positive_samples(
    g: &TemporalDigraph,
    ctx: &FeatureContext<f64>,
    mode: FeatureMode,
    probe: &dyn ViewProbe,
) -> Result<Vec<LinkSample<f64>>> {
    g.links()
        .iter()
        .map(|l| {
            let view = g.snapshot_before(l.episode);
            hygiene(&view, l.episode, probe)?;
            Ok(LinkSample {
                killer: l.killer,
                victim: l.victim,
                label: true,
                episode: Some(l.episode),
                features: build_features(l.killer, l.victim, &view, ctx, mode)?,
            })
        })
        .collect()
}

/// Kills visible in `view`, featurized per `how`.
fn training_kills(
    kills: &[LinkSample<f64>],
    view: &DigraphView<'_>,
    ctx: &FeatureContext<f64>,
    mode: FeatureMode,
    how: KillFeatures,
) -> Result<Vec<LinkSample<f64>>> {
    let visible = kills.iter().filter(|s| s.episode < Some(view.cutoff()));
    match how {
        KillFeatures::AtKill => Ok(visible.cloned().collect()),
        KillFeatures::TrainingSnapshot => visible
            .map(|s| {
                Ok(LinkSample {
                    features: build_features(s.killer, s.victim, view, ctx, mode)?,
                    ..s.clone()
                })
            })
            .collect(),
    }
}

fn negative_samples(pairs: &[Pair], view: &DigraphView<'_>, ctx: &FeatureContext<f64>, mode: FeatureMode) -> Result<Vec<LinkSample<f64>>> {
    pairs
        .iter()
        .map(|&(i, j)| {
            Ok(LinkSample {
                killer: i,
                victim: j,
                label: false,
                episode: None,
                features: build_features(i, j, view, ctx, mode)?,
            })
        })
        .collect()
}

/// Test pairs of one run of the classifier protocol: the positive kills of
/// the window and the negatives scored in the negative pass.
pub struct MlPairs {
    pub positives: Vec<(u32, Pair)>,
    pub train_negatives: Vec<Pair>,
    pub test_negatives: Vec<Pair>,
}

/// Negative-pass pairs for `run`; `g` must already be augmented.
pub fn ml_negative_pass_pairs(g: &TemporalDigraph, cfg: &EvalConfig, run: usize, test_count: usize) -> Result<(Vec<Pair>, Vec<Pair>)> {
    let mut rng = rng::stream(cfg.seed, &[run as u64, tag::TRAIN_NEGATIVES, u64::MAX]);
    let train_neg = sample_negatives(g, g.link_count(), &HashSet::new(), &mut rng)?;
    let exclude: HashSet<Pair> = train_neg.iter().copied().collect();
    let mut rng = rng::stream(cfg.seed, &[run as u64, tag::TEST_NEGATIVES]);
    let test_neg = sample_negatives(g, test_count, &exclude, &mut rng)?;
    Ok((train_neg, test_neg))
}

pub fn ml_pairs(g: &TemporalDigraph, cfg: &EvalConfig, run: usize) -> Result<MlPairs> {
    cfg.validate()?;
    let g = g.add_isolated_nodes(cfg.augment_isolated);
    let positives: Vec<(u32, Pair)> = test_links(&g, cfg)?
        .into_iter()
        .flat_map(|(t, ps)| ps.into_iter().map(move |p| (t, p)))
        .collect();
    let (train_negatives, test_negatives) = ml_negative_pass_pairs(&g, cfg, run, positives.len())?;
    Ok(MlPairs {
        positives,
        train_negatives,
        test_negatives,
    })
}

/// Classifier protocol.
///
/// Positive pass: for each test episode `t`, train on the kills before `t`
/// plus as many fresh negatives (featurized on the snapshot before `t`) and
/// score the kills at `t`. Negative pass: train on all kills plus as many
/// negatives (featurized on the full history) and score an equal number of
/// other non-links. Test kills are featurized on the snapshot before their
/// own episode; training kills follow `cfg.kill_features`.
pub fn evaluate_ml(
    g: &TemporalDigraph,
    kind: ModelKind,
    mode: FeatureMode,
    cfg: &EvalConfig,
    ctx: &FeatureContext<f64>,
) -> Result<EvalReport> {
    evaluate_ml_with_probe(g, kind, mode, cfg, ctx, &NoProbe)
}

pub fn evaluate_ml_with_probe(
    g: &TemporalDigraph,
    kind: ModelKind,
    mode: FeatureMode,
    cfg: &EvalConfig,
    ctx: &FeatureContext<f64>,
    probe: &dyn ViewProbe,
) -> Result<EvalReport> {
    cfg.validate()?;
    let g = g.add_isolated_nodes(cfg.augment_isolated);
    let tests = test_links(&g, cfg)?;
    let kills = positive_samples(&g, ctx, mode, probe)?;
    let n_pos: usize = tests.iter().map(|(_, p)| p.len()).sum();
    let full = g.full_view();
    let runs = map_runs(cfg, |run| {
        let mut positives = Vec::with_capacity(n_pos);
        for (t, _) in &tests {
            let t = *t;
            let view = g.snapshot_before(t);
            hygiene(&view, t, probe)?;
            let mut train_set = training_kills(&kills, &view, ctx, mode, cfg.kill_features)?;
            let mut rng = rng::stream(cfg.seed, &[run as u64, tag::TRAIN_NEGATIVES, u64::from(t)]);
            let negs = sample_negatives(&g, train_set.len(), &HashSet::new(), &mut rng)?;
            train_set.extend(negative_samples(&negs, &view, ctx, mode)?);
            let model = train(kind, &train_set, &cfg.train, rng::derive(cfg.seed, &[run as u64, tag::MODEL, u64::from(t)]))?;
            for s in kills.iter().filter(|s| s.episode == Some(t)) {
                positives.push(model.score(&s.features)?);
            }
        }
        probe.observe(&full, None);
        let (train_neg, test_neg) = ml_negative_pass_pairs(&g, cfg, run, n_pos)?;
        let mut train_set = training_kills(&kills, &full, ctx, mode, cfg.kill_features)?;
        train_set.extend(negative_samples(&train_neg, &full, ctx, mode)?);
        let model = train(kind, &train_set, &cfg.train, rng::derive(cfg.seed, &[run as u64, tag::MODEL, u64::MAX]))?;
        let negatives = negative_samples(&test_neg, &full, ctx, mode)?
            .iter()
            .map(|s| model.score(&s.features))
            .collect::<Result<Vec<f64>>>()?;
        let s = ScoreSets { positives, negatives };
        metrics(&s, cfg.seed, run, cfg.ml_threshold, false)
    })?;
    let method = format!("{} ({})", kind.name(), mode.name());
    Ok(EvalReport::from_runs(method, n_pos, runs))
}
