//! node2vec: second-order biased random walks and skip-gram with negative
//! sampling, plus link embeddings built from endpoint vectors.

use std::fmt;
use std::str::FromStr;

use rand::distributions::{Distribution, Uniform};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{CharacterId, SocialGraph, WeightedGraph};
use crate::rng;
use crate::scalar::{dot, sigmoid, softplus, Scalar};

const WALK_TAG: u64 = 0x3a1c;
const TRAIN_TAG: u64 = 0x5e9d;
const EVAL_TAG: u64 = 0xe7a1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, bound(deserialize = "T: Scalar + Deserialize<'de>"))]
pub struct Node2vecParams<T> {
    /// Return parameter.
    pub p: T,
    /// In-out parameter.
    pub q: T,
    pub dim: usize,
    pub walks_per_node: usize,
    /// Nodes per walk.
    pub walk_length: usize,
    pub window: usize,
    pub negatives: usize,
    pub epochs: usize,
    pub learning_rate: T,
    pub seed: u64,
    /// Multiply transition weights by edge weights.
    pub weighted: bool,
}

impl<T: Scalar> Default for Node2vecParams<T> {
    fn default() -> Self {
        Node2vecParams {
            p: T::of(2.0),
            q: T::of(0.5),
            dim: 16,
            walks_per_node: 10,
            walk_length: 80,
            window: 10,
            negatives: 5,
            epochs: 5,
            learning_rate: T::of(0.025),
            seed: 0,
            weighted: true,
        }
    }
}

impl<T: Scalar> Node2vecParams<T> {
    pub fn validate(&self) -> Result<()> {
        let positive = [self.dim, self.walks_per_node, self.walk_length, self.window, self.negatives, self.epochs];
        if positive.contains(&0) {
            return Err(Error::Invalid("node2vec sizes must be positive".into()));
        }
        if !(self.p > T::zero() && self.q > T::zero() && self.learning_rate > T::zero()) {
            return Err(Error::Invalid("p, q and learning rate must be positive".into()));
        }
        Ok(())
    }
}

fn edge_weight<T: Scalar>(g: &WeightedGraph<T>, a: usize, b: usize) -> Option<T> {
    let row = g.neighbors(a);
    row.binary_search_by_key(&b, |&(u, _)| u).ok().map(|k| row[k].1)
}

/// Unnormalized probability of stepping `cur -> next` having arrived from
/// `prev`: the edge weight (or 1) times `1/p` for returning, `1` for a node
/// adjacent to `prev`, and `1/q` otherwise.
pub fn transition_weight<T: Scalar>(
    g: &WeightedGraph<T>,
    prev: usize,
    cur: usize,
    next: usize,
    params: &Node2vecParams<T>,
) -> Result<T> {
    let w = edge_weight(g, cur, next)
        .ok_or_else(|| Error::Invalid(format!("no edge between {cur} and {next}")))?;
    let w = if params.weighted { w } else { T::one() };
    let bias = if next == prev {
        T::one() / params.p
    } else if edge_weight(g, prev, next).is_some() {
        T::one()
    } else {
        T::one() / params.q
    };
    Ok(w * bias)
}

fn sample_index<T: Scalar, R: Rng>(weights: &[T], rng: &mut R) -> usize {
    let total: T = weights.iter().copied().sum();
    let mut r = T::of(rng.gen::<f64>()) * total;
    for (k, &w) in weights.iter().enumerate() {
        if r < w {
            return k;
        }
        r -= w;
    }
    weights.len() - 1
}

fn walk_from<T: Scalar>(g: &WeightedGraph<T>, start: usize, params: &Node2vecParams<T>, walk_index: usize) -> Vec<u32> {
    let mut rng = rng::stream(params.seed, &[WALK_TAG, start as u64, walk_index as u64]);
    let mut walk = Vec::with_capacity(params.walk_length);
    walk.push(start as u32);
    let mut weights: Vec<T> = Vec::new();
    while walk.len() < params.walk_length {
        let cur = *walk.last().unwrap() as usize;
        let nbrs = g.neighbors(cur);
        if nbrs.is_empty() {
            break;
        }
        weights.clear();
        if walk.len() == 1 {
            weights.extend(nbrs.iter().map(|&(_, w)| if params.weighted { w } else { T::one() }));
        } else {
            let prev = walk[walk.len() - 2] as usize;
            for &(next, _) in nbrs {
                weights.push(transition_weight(g, prev, cur, next, params).expect("neighbor edge"));
            }
        }
        walk.push(nbrs[sample_index(&weights, &mut rng)].0 as u32);
    }
    walk
}

/// `walks_per_node` walks from every node, ordered by walk round and then by
/// start node. Each walk has its own random stream, so the corpus does not
/// depend on thread scheduling.
pub fn generate_walks<T: Scalar>(g: &WeightedGraph<T>, params: &Node2vecParams<T>) -> Vec<Vec<u32>> {
    let n = g.node_count();
    (0..params.walks_per_node * n)
        .into_par_iter()
        .map(|k| walk_from(g, k % n, params, k / n))
        .collect()
}

/// Same corpus as [`generate_walks`], built on one thread.
pub fn generate_walks_serial<T: Scalar>(g: &WeightedGraph<T>, params: &Node2vecParams<T>) -> Vec<Vec<u32>> {
    let n = g.node_count();
    (0..params.walks_per_node * n)
        .map(|k| walk_from(g, k % n, params, k / n))
        .collect()
}

/// Draws node ids with probability proportional to `count^0.75`.
#[derive(Clone, Debug)]
pub struct NegativeSampler {
    cumulative: Vec<f64>,
}

impl NegativeSampler {
    pub fn from_counts(counts: &[usize]) -> Self {
        let mut acc = 0.0;
        let cumulative = counts
            .iter()
            .map(|&c| {
                acc += (c as f64).powf(0.75);
                acc
            })
            .collect();
        NegativeSampler { cumulative }
    }

    pub fn probability(&self, v: usize) -> f64 {
        let total = *self.cumulative.last().unwrap_or(&0.0);
        let lo = if v == 0 { 0.0 } else { self.cumulative[v - 1] };
        (self.cumulative[v] - lo) / total
    }

    pub fn sample<R: Rng>(&self, rng: &mut R) -> usize {
        let total = *self.cumulative.last().expect("non-empty vocabulary");
        let r = rng.gen::<f64>() * total;
        self.cumulative.partition_point(|&c| c <= r).min(self.cumulative.len() - 1)
    }
}

/// Trained node vectors plus the generic vector used for unknown nodes.
#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingTable<T> {
    pub dim: usize,
    pub vectors: Vec<Vec<T>>,
    pub generic: Vec<T>,
}

impl<T: Scalar> EmbeddingTable<T> {
    pub fn from_vectors(dim: usize, vectors: Vec<Vec<T>>) -> Self {
        let mut generic = vec![T::zero(); dim];
        for v in &vectors {
            for (g, &x) in generic.iter_mut().zip(v) {
                *g += x;
            }
        }
        if !vectors.is_empty() {
            let n = T::of_usize(vectors.len());
            generic.iter_mut().for_each(|g| *g /= n);
        }
        EmbeddingTable { dim, vectors, generic }
    }

    /// Vector of `v`, or the generic vector when `v` is unknown.
    pub fn vector(&self, v: Option<CharacterId>) -> &[T] {
        v.and_then(|v| self.vectors.get(v.index()))
            .map(Vec::as_slice)
            .unwrap_or(&self.generic)
    }
}

/// Per-epoch training summary.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainingLog {
    /// Mean negative-sampling loss per (center, context) pair over the whole
    /// corpus, evaluated after each epoch with fixed negative draws.
    pub epoch_loss: Vec<f64>,
    /// The same loss accumulated while the epoch was training.
    pub online_loss: Vec<f64>,
}

/// Skip-gram with negative sampling, trained by plain SGD on one thread.
/// The learning rate decays linearly to 1e-4 of its start value.
pub fn train_embeddings<T: Scalar>(
    corpus: &[Vec<u32>],
    node_count: usize,
    params: &Node2vecParams<T>,
) -> Result<(EmbeddingTable<T>, TrainingLog)> {
    params.validate()?;
    if corpus.iter().all(|w| w.is_empty()) {
        return Err(Error::Invalid("empty walk corpus".into()));
    }
    let dim = params.dim;
    let mut counts = vec![0usize; node_count];
    for &v in corpus.iter().flatten() {
        counts[v as usize] += 1;
    }
    let sampler = NegativeSampler::from_counts(&counts);
    let mut rng = rng::stream(params.seed, &[TRAIN_TAG]);
    let init = Uniform::new(-0.5 / dim as f64, 0.5 / dim as f64);
    let mut syn0: Vec<Vec<T>> = (0..node_count)
        .map(|_| (0..dim).map(|_| T::of(init.sample(&mut rng))).collect())
        .collect();
    let mut syn1: Vec<Vec<T>> = vec![vec![T::zero(); dim]; node_count];
    let total_tokens = (corpus.iter().map(Vec::len).sum::<usize>() * params.epochs) as f64;
    let lr0 = params.learning_rate.as_f64();
    let mut processed = 0usize;
    let mut neu1e = vec![T::zero(); dim];
    let mut log = TrainingLog::default();
    for _ in 0..params.epochs {
        let (mut loss, mut pairs) = (0.0f64, 0usize);
        for walk in corpus {
            for (pos, &center) in walk.iter().enumerate() {
                let lr = T::of(lr0 * (1.0 - processed as f64 / total_tokens).max(1e-4));
                processed += 1;
                let shrink = rng.gen_range(0..params.window);
                let span = params.window - shrink;
                let lo = pos.saturating_sub(span);
                let hi = (pos + span).min(walk.len() - 1);
                for (cpos, &context) in walk.iter().enumerate().take(hi + 1).skip(lo) {
                    if cpos == pos {
                        continue;
                    }
                    let input = &mut syn0[center as usize];
                    neu1e.iter_mut().for_each(|e| *e = T::zero());
                    for k in 0..=params.negatives {
                        let (target, label) = if k == 0 {
                            (context as usize, T::one())
                        } else {
                            let t = sampler.sample(&mut rng);
                            if t == context as usize {
                                continue;
                            }
                            (t, T::zero())
                        };
                        let out = &mut syn1[target];
                        let f = dot(input, out);
                        loss += if k == 0 { softplus(-f) } else { softplus(f) }.as_f64();
                        let g = (label - sigmoid(f)) * lr;
                        for d in 0..dim {
                            neu1e[d] += g * out[d];
                            out[d] += g * input[d];
                        }
                    }
                    for d in 0..dim {
                        input[d] += neu1e[d];
                    }
                    pairs += 1;
                }
            }
        }
        log.online_loss.push(if pairs == 0 { 0.0 } else { loss / pairs as f64 });
        log.epoch_loss.push(frozen_loss(corpus, &syn0, &syn1, &sampler, params));
    }
    if syn0.iter().flatten().any(|x| !x.is_finite()) {
        return Err(Error::Invalid("embedding training diverged".into()));
    }
    Ok((EmbeddingTable::from_vectors(dim, syn0), log))
}

/// Mean negative-sampling loss over every (center, context) pair of the
/// corpus at full window, with negatives drawn from the same stream each
/// time so that successive calls are comparable.
fn frozen_loss<T: Scalar>(
    corpus: &[Vec<u32>],
    syn0: &[Vec<T>],
    syn1: &[Vec<T>],
    sampler: &NegativeSampler,
    params: &Node2vecParams<T>,
) -> f64 {
    let mut rng = rng::stream(params.seed, &[EVAL_TAG]);
    let (mut loss, mut pairs) = (0.0f64, 0usize);
    for walk in corpus {
        for (pos, &center) in walk.iter().enumerate() {
            let lo = pos.saturating_sub(params.window);
            let hi = (pos + params.window).min(walk.len() - 1);
            let input = &syn0[center as usize];
            for (cpos, &context) in walk.iter().enumerate().take(hi + 1).skip(lo) {
                if cpos == pos {
                    continue;
                }
                loss += softplus(-dot(input, &syn1[context as usize])).as_f64();
                for _ in 0..params.negatives {
                    let t = sampler.sample(&mut rng);
                    if t != context as usize {
                        loss += softplus(dot(input, &syn1[t])).as_f64();
                    }
                }
                pairs += 1;
            }
        }
    }
    if pairs == 0 {
        0.0
    } else {
        loss / pairs as f64
    }
}

/// Walks and trains on the social network.
pub fn node2vec<T: Scalar>(g: &SocialGraph, params: &Node2vecParams<T>) -> Result<(EmbeddingTable<T>, TrainingLog)> {
    params.validate()?;
    let wg = WeightedGraph::<T>::from_social(g);
    let corpus = generate_walks(&wg, params);
    train_embeddings(&corpus, g.node_count(), params)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LinkMode {
    Concat,
    Average,
}

impl fmt::Display for LinkMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LinkMode::Concat => "concat",
            LinkMode::Average => "average",
        })
    }
}

impl FromStr for LinkMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "concat" => Ok(LinkMode::Concat),
            "average" => Ok(LinkMode::Average),
            other => Err(Error::Invalid(format!("unknown link mode '{other}'"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LinkEmbedding<T> {
    pub vector: Vec<T>,
    pub mode: LinkMode,
}

/// `[vec(i) ‖ vec(j)]` or `(vec(i) + vec(j)) / 2`; unknown endpoints use the
/// generic vector.
pub fn link_embedding<T: Scalar>(
    table: &EmbeddingTable<T>,
    i: Option<CharacterId>,
    j: Option<CharacterId>,
    mode: LinkMode,
) -> LinkEmbedding<T> {
    let (a, b) = (table.vector(i), table.vector(j));
    let vector = match mode {
        LinkMode::Concat => a.iter().chain(b).copied().collect(),
        LinkMode::Average => a.iter().zip(b).map(|(&x, &y)| (x + y) / T::of(2.0)).collect(),
    };
    LinkEmbedding { vector, mode }
}
