//! Link features and three small classifiers: k-nearest neighbours,
//! L2-regularized logistic regression and a linear soft-margin SVM.

use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::centrality::CentralityScores;
use crate::community::Partition;
use crate::embed::{link_embedding, EmbeddingTable, LinkMode};
use crate::error::{Error, Result};
use crate::graph::{CharacterId, DigraphView, SocialGraph, TemporalDigraph};
use crate::rng;
use crate::scalar::{dot, sigmoid, softplus, Scalar};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureMode {
    /// Out-degrees of killer and victim.
    Basic,
    /// Out-degree of the killer only.
    BasicKillerOnly,
    /// Basic plus PageRank, betweenness and community one-hots.
    Handcrafted,
    Node2vecConcat,
    Node2vecAverage,
}

impl FeatureMode {
    pub fn name(self) -> &'static str {
        match self {
            FeatureMode::Basic => "basic",
            FeatureMode::BasicKillerOnly => "basic_killer",
            FeatureMode::Handcrafted => "handcrafted",
            FeatureMode::Node2vecConcat => "node2vec",
            FeatureMode::Node2vecAverage => "node2vec_average",
        }
    }
}

impl fmt::Display for FeatureMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for FeatureMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "basic" => Ok(FeatureMode::Basic),
            "basic_killer" | "basic-killer" => Ok(FeatureMode::BasicKillerOnly),
            "handcrafted" => Ok(FeatureMode::Handcrafted),
            "node2vec" | "node2vec_concat" | "node2vec-concat" => Ok(FeatureMode::Node2vecConcat),
            "node2vec_average" | "node2vec-average" => Ok(FeatureMode::Node2vecAverage),
            other => Err(Error::Invalid(format!("unknown feature mode '{other}'"))),
        }
    }
}

/// Social-network derived data shared by all feature builders.
#[derive(Clone, Debug)]
pub struct FeatureContext<T> {
    /// Social id of each kills node, matched by name.
    pub social_ids: Vec<Option<CharacterId>>,
    pub pagerank: Option<CentralityScores<T>>,
    pub betweenness: Option<CentralityScores<T>>,
    /// Partition of the social network.
    pub communities: Option<Partition>,
    pub embeddings: Option<EmbeddingTable<T>>,
}

impl<T: Scalar> FeatureContext<T> {
    /// Matches kills nodes to social nodes by exact name.
    pub fn new(kills: &TemporalDigraph, social: &SocialGraph) -> Self {
        let social_ids = kills
            .names()
            .iter()
            .map(|(_, name)| social.names().get(name))
            .collect();
        FeatureContext {
            social_ids,
            pagerank: None,
            betweenness: None,
            communities: None,
            embeddings: None,
        }
    }

    pub fn social_id(&self, v: CharacterId) -> Option<CharacterId> {
        self.social_ids.get(v.index()).copied().flatten()
    }

    /// One-hot width: social communities plus one dummy column.
    pub fn community_width(&self) -> Option<usize> {
        self.communities.as_ref().map(|p| p.community_count() + 1)
    }

    pub fn feature_len(&self, mode: FeatureMode) -> Result<usize> {
        Ok(match mode {
            FeatureMode::Basic => 2,
            FeatureMode::BasicKillerOnly => 1,
            FeatureMode::Handcrafted => {
                6 + 2 * self.community_width().ok_or_else(|| missing("communities"))?
            }
            FeatureMode::Node2vecConcat => 2 * self.embeddings.as_ref().ok_or_else(|| missing("embeddings"))?.dim,
            FeatureMode::Node2vecAverage => self.embeddings.as_ref().ok_or_else(|| missing("embeddings"))?.dim,
        })
    }

    fn one_hot(&self, v: CharacterId, out: &mut Vec<T>) -> Result<()> {
        let p = self.communities.as_ref().ok_or_else(|| missing("communities"))?;
        let width = p.community_count() + 1;
        let col = self.social_id(v).map_or(width - 1, |s| p.label(s.index()));
        out.extend((0..width).map(|c| if c == col { T::one() } else { T::zero() }));
        Ok(())
    }
}

fn missing(what: &str) -> Error {
    Error::Invalid(format!("feature mode needs {what}"))
}

/// Feature vector for the ordered pair `(killer, victim)` under `view`.
pub fn build_features<T: Scalar>(
    killer: CharacterId,
    victim: CharacterId,
    view: &DigraphView<'_>,
    ctx: &FeatureContext<T>,
    mode: FeatureMode,
) -> Result<Vec<T>> {
    let mut x = Vec::with_capacity(ctx.feature_len(mode).unwrap_or(2));
    match mode {
        FeatureMode::BasicKillerOnly => x.push(T::of_usize(view.out_degree(killer)?)),
        FeatureMode::Basic | FeatureMode::Handcrafted => {
            x.push(T::of_usize(view.out_degree(killer)?));
            x.push(T::of_usize(view.out_degree(victim)?));
        }
        FeatureMode::Node2vecConcat | FeatureMode::Node2vecAverage => {
            let table = ctx.embeddings.as_ref().ok_or_else(|| missing("embeddings"))?;
            let link_mode = if mode == FeatureMode::Node2vecConcat { LinkMode::Concat } else { LinkMode::Average };
            return Ok(link_embedding(table, ctx.social_id(killer), ctx.social_id(victim), link_mode).vector);
        }
    }
    if mode == FeatureMode::Handcrafted {
        let pr = ctx.pagerank.as_ref().ok_or_else(|| missing("pagerank"))?;
        let bt = ctx.betweenness.as_ref().ok_or_else(|| missing("betweenness"))?;
        let (sk, sv) = (ctx.social_id(killer), ctx.social_id(victim));
        x.extend([pr.feature_value(sk), pr.feature_value(sv), bt.feature_value(sk), bt.feature_value(sv)]);
        ctx.one_hot(killer, &mut x)?;
        ctx.one_hot(victim, &mut x)?;
    }
    Ok(x)
}

#[derive(Clone, Debug, PartialEq)]
pub struct LinkSample<T> {
    pub killer: CharacterId,
    pub victim: CharacterId,
    pub label: bool,
    pub episode: Option<u32>,
    pub features: Vec<T>,
}

/// Per-column z-scoring fitted on training rows.
#[derive(Clone, Debug, PartialEq)]
pub struct Standardizer<T> {
    pub mean: Vec<T>,
    pub scale: Vec<T>,
}

impl<T: Scalar> Standardizer<T> {
    /// Zero-variance columns get scale 1.
    pub fn fit(rows: &[&[T]]) -> Self {
        let d = rows.first().map_or(0, |r| r.len());
        let n = T::of_usize(rows.len().max(1));
        let mut mean = vec![T::zero(); d];
        for r in rows {
            for (m, &x) in mean.iter_mut().zip(r.iter()) {
                *m += x;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![T::zero(); d];
        for r in rows {
            for k in 0..d {
                let c = r[k] - mean[k];
                var[k] += c * c;
            }
        }
        let scale = var
            .into_iter()
            .map(|v| {
                let sd = (v / n).sqrt();
                if sd > T::of(1e-12) { sd } else { T::one() }
            })
            .collect();
        Standardizer { mean, scale }
    }

    pub fn identity(d: usize) -> Self {
        Standardizer {
            mean: vec![T::zero(); d],
            scale: vec![T::one(); d],
        }
    }

    pub fn transform(&self, x: &[T]) -> Vec<T> {
        x.iter()
            .zip(self.mean.iter().zip(&self.scale))
            .map(|(&v, (&m, &s))| (v - m) / s)
            .collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Knn,
    LogisticRegression,
    Svm,
}

impl ModelKind {
    pub const ALL: [ModelKind; 3] = [ModelKind::Knn, ModelKind::LogisticRegression, ModelKind::Svm];

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Knn => "KNN",
            ModelKind::LogisticRegression => "logistic regression",
            ModelKind::Svm => "SVM",
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "knn" => Ok(ModelKind::Knn),
            "lr" | "logreg" | "logistic_regression" => Ok(ModelKind::LogisticRegression),
            "svm" => Ok(ModelKind::Svm),
            other => Err(Error::Invalid(format!("unknown model '{other}'"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub standardize: bool,
    pub knn_k: usize,
    /// L2 strength of logistic regression.
    pub lambda: f64,
    pub lr_max_iter: usize,
    pub lr_grad_tol: f64,
    /// SVM hinge weight.
    pub svm_c: f64,
    pub svm_epochs: usize,
    pub svm_step: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            standardize: true,
            knn_k: 5,
            lambda: 1.0,
            lr_max_iter: 10_000,
            lr_grad_tol: 1e-8,
            svm_c: 1.0,
            svm_epochs: 1000,
            svm_step: 0.1,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum ModelParams<T> {
    Knn { k: usize, x: Vec<Vec<T>>, y: Vec<bool> },
    Linear { w: Vec<T>, b: T },
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainedModel<T> {
    pub kind: ModelKind,
    pub standardizer: Standardizer<T>,
    pub params: ModelParams<T>,
    /// Objective after each accepted iteration or epoch (linear models).
    pub objective_trace: Vec<T>,
}

impl<T: Scalar> TrainedModel<T> {
    pub fn feature_len(&self) -> usize {
        self.standardizer.mean.len()
    }

    /// Score in `[0, 1]`.
    pub fn score(&self, x: &[T]) -> Result<T> {
        if x.len() != self.feature_len() {
            return Err(Error::FeatureLength {
                expected: self.feature_len(),
                got: x.len(),
            });
        }
        let z = self.standardizer.transform(x);
        Ok(match &self.params {
            ModelParams::Knn { k, x, y } => knn_score(x, y, *k, &z),
            ModelParams::Linear { w, b } => sigmoid(dot(w, &z) + *b),
        })
    }
}

fn knn_score<T: Scalar>(xs: &[Vec<T>], ys: &[bool], k: usize, z: &[T]) -> T {
    let mut d: Vec<(T, usize)> = xs
        .iter()
        .enumerate()
        .map(|(i, x)| (x.iter().zip(z).map(|(&a, &b)| (a - b) * (a - b)).sum(), i))
        .collect();
    let k = k.min(d.len());
    let cmp = |a: &(T, usize), b: &(T, usize)| a.0.partial_cmp(&b.0).expect("finite distance").then(a.1.cmp(&b.1));
    if k < d.len() {
        d.select_nth_unstable_by(k - 1, cmp);
    }
    let pos = d[..k].iter().filter(|&&(_, i)| ys[i]).count();
    T::of_usize(pos) / T::of_usize(k)
}

/// Regularized log-loss `Σ softplus(-y z) + λ/2 ‖w‖²` (bias unpenalized) and
/// its gradient, with labels mapped to ±1.
pub fn logistic_objective<T: Scalar>(w: &[T], b: T, xs: &[Vec<T>], ys: &[bool], lambda: T) -> (T, Vec<T>, T) {
    let half = T::of(0.5);
    let mut f = half * lambda * dot(w, w);
    let mut gw: Vec<T> = w.iter().map(|&wi| lambda * wi).collect();
    let mut gb = T::zero();
    for (x, &y) in xs.iter().zip(ys) {
        let s = if y { T::one() } else { -T::one() };
        let m = s * (dot(w, x) + b);
        f += softplus(-m);
        let c = -s * sigmoid(-m);
        for (g, &xi) in gw.iter_mut().zip(x) {
            *g += c * xi;
        }
        gb += c;
    }
    (f, gw, gb)
}

fn fit_logistic<T: Scalar>(xs: &[Vec<T>], ys: &[bool], cfg: &TrainConfig) -> (Vec<T>, T, Vec<T>) {
    let d = xs[0].len();
    let lambda = T::of(cfg.lambda);
    let mut w = vec![T::zero(); d];
    let mut b = T::zero();
    let (mut f, mut gw, mut gb) = logistic_objective(&w, b, xs, ys, lambda);
    let mut trace = vec![f];
    let mut step = T::one() / T::of_usize(xs.len());
    let armijo = T::of(1e-4);
    let mut bb: Option<T> = None;
    for _ in 0..cfg.lr_max_iter {
        let g2 = dot(&gw, &gw) + gb * gb;
        if g2.sqrt() < T::of(cfg.lr_grad_tol) {
            break;
        }
        // Barzilai-Borwein trial step, then Armijo backtracking
        step = bb.unwrap_or(step * T::of(2.0));
        let accepted = loop {
            let nw: Vec<T> = w.iter().zip(&gw).map(|(&wi, &gi)| wi - step * gi).collect();
            let nb = b - step * gb;
            let (nf, ngw, ngb) = logistic_objective(&nw, nb, xs, ys, lambda);
            // near the optimum the decrease drops below rounding of f, so a
            // step that keeps f within rounding and shrinks the gradient counts
            let flat = nf <= f + T::epsilon() * f.abs() * T::of(16.0)
                && dot(&ngw, &ngw) + ngb * ngb < g2;
            if nf <= f - armijo * step * g2 || flat {
                break Some((nw, nb, nf, ngw, ngb));
            }
            if step < T::of(1e-20) {
                break None;
            }
            step = step * T::of(0.5);
        };
        let Some((nw, nb, nf, ngw, ngb)) = accepted else {
            break;
        };
        let (mut ss, mut sy) = ((nb - b) * (nb - b), (nb - b) * (ngb - gb));
        for k in 0..d {
            let dw = nw[k] - w[k];
            ss += dw * dw;
            sy += dw * (ngw[k] - gw[k]);
        }
        bb = (sy > T::zero()).then(|| ss / sy);
        (w, b, f, gw, gb) = (nw, nb, nf, ngw, ngb);
        trace.push(f);
    }
    (w, b, trace)
}

/// `½‖w‖² + C Σ max(0, 1 - y z)`.
pub fn svm_objective<T: Scalar>(w: &[T], b: T, xs: &[Vec<T>], ys: &[bool], c: T) -> T {
    let hinge: T = xs
        .iter()
        .zip(ys)
        .map(|(x, &y)| {
            let s = if y { T::one() } else { -T::one() };
            (T::one() - s * (dot(w, x) + b)).max(T::zero())
        })
        .sum();
    T::of(0.5) * dot(w, w) + c * hinge
}

/// Epoch-wise stochastic subgradient descent. An epoch's result is kept only
/// if it lowers the objective; otherwise it is discarded and the step halved,
/// so the recorded objective never increases.
fn fit_svm<T: Scalar>(xs: &[Vec<T>], ys: &[bool], cfg: &TrainConfig, seed: u64) -> (Vec<T>, T, Vec<T>) {
    let n = xs.len();
    let d = xs[0].len();
    let c = T::of(cfg.svm_c);
    let reg = T::one() / T::of_usize(n);
    let mut rng = rng::stream(seed, &[rng::tag::MODEL, 0x5f3]);
    let mut w = vec![T::zero(); d];
    let mut b = T::zero();
    let mut f = svm_objective(&w, b, xs, ys, c);
    let mut trace = vec![f];
    let eta0 = T::of(cfg.svm_step);
    let mut order: Vec<usize> = (0..n).collect();
    let (mut cw, mut cb) = (w.clone(), b);
    let mut t = 0usize;
    for _ in 0..cfg.svm_epochs {
        order.shuffle(&mut rng);
        // the running iterate continues across epochs; the candidate is the
        // mean of this epoch's iterates
        let mut sum_w = vec![T::zero(); d];
        let mut sum_b = T::zero();
        for &i in &order {
            // steps decay like n / t, the inverse of the per-sample curvature
            let lr = eta0 / (T::one() + eta0 * reg * T::of_usize(t));
            t += 1;
            let s = if ys[i] { T::one() } else { -T::one() };
            let violated = s * (dot(&cw, &xs[i]) + cb) < T::one();
            for k in 0..d {
                let mut g = reg * cw[k];
                if violated {
                    g -= c * s * xs[i][k];
                }
                cw[k] -= lr * g;
                sum_w[k] += cw[k];
            }
            if violated {
                cb += lr * c * s;
            }
            sum_b += cb;
        }
        let inv = T::one() / T::of_usize(n);
        let nw: Vec<T> = sum_w.iter().map(|&x| x * inv).collect();
        let nb = sum_b * inv;
        let nf = svm_objective(&nw, nb, xs, ys, c);
        if nf < f {
            (w, b, f) = (nw, nb, nf);
            trace.push(f);
        }
    }
    (w, b, trace)
}

/// Fits a model. Features are z-scored on the training rows unless
/// `cfg.standardize` is false.
pub fn train<T: Scalar>(kind: ModelKind, samples: &[LinkSample<T>], cfg: &TrainConfig, seed: u64) -> Result<TrainedModel<T>> {
    let d = samples.first().map_or(0, |s| s.features.len());
    if let Some(bad) = samples.iter().find(|s| s.features.len() != d) {
        return Err(Error::FeatureLength {
            expected: d,
            got: bad.features.len(),
        });
    }
    let positives = samples.iter().filter(|s| s.label).count();
    if positives == 0 || positives == samples.len() {
        return Err(Error::SingleClass);
    }
    let rows: Vec<&[T]> = samples.iter().map(|s| s.features.as_slice()).collect();
    let standardizer = if cfg.standardize { Standardizer::fit(&rows) } else { Standardizer::identity(d) };
    let xs: Vec<Vec<T>> = rows.iter().map(|r| standardizer.transform(r)).collect();
    let ys: Vec<bool> = samples.iter().map(|s| s.label).collect();
    let (params, objective_trace) = match kind {
        ModelKind::Knn => {
            // Equal distances go to the lower stored index; storing the rows in
            // a seeded random order keeps that from favouring one class.
            let mut order: Vec<usize> = (0..xs.len()).collect();
            order.shuffle(&mut rng::stream(seed, &[rng::tag::MODEL, 0x6b6e]));
            let x = order.iter().map(|&i| xs[i].clone()).collect();
            let y = order.iter().map(|&i| ys[i]).collect();
            (ModelParams::Knn { k: cfg.knn_k.max(1), x, y }, Vec::new())
        }
        ModelKind::LogisticRegression => {
            let (w, b, trace) = fit_logistic(&xs, &ys, cfg);
            (ModelParams::Linear { w, b }, trace)
        }
        ModelKind::Svm => {
            let (w, b, trace) = fit_svm(&xs, &ys, cfg, seed);
            (ModelParams::Linear { w, b }, trace)
        }
    };
    Ok(TrainedModel {
        kind,
        standardizer,
        params,
        objective_trace,
    })
}
