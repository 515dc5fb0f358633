//! Leiden modularity optimization and partition statistics.

use std::collections::{BTreeMap, HashMap, VecDeque};

use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::{Error, Result};
use crate::graph::{DigraphView, SocialGraph, WeightedGraph};
use crate::rng;
use crate::scalar::Scalar;

/// Gains below this are treated as no improvement.
pub const GAIN_EPS: f64 = 1e-12;

/// Upper bound on full Leiden passes.
const MAX_PASSES: usize = 50;
/// Randomness of the refinement step, in units of modularity.
const REFINE_THETA: f64 = 0.01;
/// Independent seeded runs; the highest modularity wins.
const CHAINS: u64 = 8;

/// Community label per node, dense and canonically numbered: community 0
/// contains node 0, and labels increase with each community's smallest node.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Partition {
    labels: Vec<usize>,
    count: usize,
}

impl Partition {
    /// Canonicalizes arbitrary labels.
    pub fn from_labels(raw: &[usize]) -> Self {
        let mut map: HashMap<usize, usize> = HashMap::new();
        let labels: Vec<usize> = raw
            .iter()
            .map(|&l| {
                let next = map.len();
                *map.entry(l).or_insert(next)
            })
            .collect();
        Partition {
            count: map.len(),
            labels,
        }
    }

    pub fn singletons(n: usize) -> Self {
        Partition {
            labels: (0..n).collect(),
            count: n,
        }
    }

    pub fn one_community(n: usize) -> Self {
        Partition {
            labels: vec![0; n],
            count: usize::from(n > 0),
        }
    }

    pub fn label(&self, v: usize) -> usize {
        self.labels[v]
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn community_count(&self) -> usize {
        self.count
    }

    pub fn members(&self, c: usize) -> Vec<usize> {
        (0..self.labels.len()).filter(|&v| self.labels[v] == c).collect()
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut n = vec![0; self.count];
        for &c in &self.labels {
            n[c] += 1;
        }
        n
    }
}

/// Node and link counts per community and per unordered community pair.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PartitionStats {
    pub n: Vec<usize>,
    pub m: Vec<usize>,
    pub m_between: BTreeMap<(usize, usize), usize>,
}

impl PartitionStats {
    /// Counts each link once; a link inside one community adds to `m`.
    pub fn from_links(partition: &Partition, links: impl IntoIterator<Item = (usize, usize)>) -> Self {
        let mut m = vec![0; partition.community_count()];
        let mut m_between = BTreeMap::new();
        for (a, b) in links {
            let (ca, cb) = (partition.label(a), partition.label(b));
            if ca == cb {
                m[ca] += 1;
            } else {
                *m_between.entry((ca.min(cb), ca.max(cb))).or_insert(0) += 1;
            }
        }
        PartitionStats {
            n: partition.sizes(),
            m,
            m_between,
        }
    }

    pub fn between(&self, a: usize, b: usize) -> usize {
        self.m_between
            .get(&(a.min(b), a.max(b)))
            .copied()
            .unwrap_or(0)
    }

    pub fn link_total(&self) -> usize {
        self.m.iter().sum::<usize>() + self.m_between.values().sum::<usize>()
    }
}

fn check_cover(n: usize, partition: &Partition) -> Result<()> {
    if partition.len() != n {
        return Err(Error::Coverage {
            expected: n,
            got: partition.len(),
        });
    }
    Ok(())
}

/// Stats over the kill links visible in `view`.
pub fn partition_stats_view(view: &DigraphView<'_>, partition: &Partition) -> Result<PartitionStats> {
    check_cover(view.node_count(), partition)?;
    Ok(PartitionStats::from_links(
        partition,
        view.links().map(|l| (l.killer.index(), l.victim.index())),
    ))
}

/// Stats over the social edges.
pub fn partition_stats_social(g: &SocialGraph, partition: &Partition) -> Result<PartitionStats> {
    check_cover(g.node_count(), partition)?;
    Ok(PartitionStats::from_links(
        partition,
        g.edges().iter().map(|e| (e.a.index(), e.b.index())),
    ))
}

/// Newman modularity with resolution `gamma`. Zero for an edgeless graph.
pub fn modularity<T: Scalar>(g: &WeightedGraph<T>, partition: &Partition, gamma: T) -> Result<T> {
    check_cover(g.node_count(), partition)?;
    let m = g.total_weight();
    if m <= T::zero() {
        return Ok(T::zero());
    }
    let k = partition.community_count();
    let mut internal = vec![T::zero(); k];
    let mut tot = vec![T::zero(); k];
    for (a, b, w) in g.edges() {
        if partition.label(a) == partition.label(b) {
            internal[partition.label(a)] += w;
        }
    }
    for v in 0..g.node_count() {
        tot[partition.label(v)] += g.strength(v);
    }
    let two_m = m + m;
    Ok((0..k)
        .map(|c| internal[c] / m - gamma * (tot[c] / two_m) * (tot[c] / two_m))
        .sum())
}

/// Leiden community detection: local moving, randomized refinement and
/// aggregation, repeated until the partition stops coarsening. Whole
/// passes are then rerun from the previous result while modularity improves.
/// `CHAINS` such runs use independent streams derived from `seed`; the best
/// one is returned (earliest on ties).
///
/// Node visiting order is shuffled with a seeded stream. Among equal gains
/// the current community is kept, else the lowest label wins. The returned
/// communities are connected.
pub fn leiden<T: Scalar>(g: &WeightedGraph<T>, gamma: T, seed: u64) -> Partition {
    let n = g.node_count();
    if g.total_weight() <= T::zero() {
        return Partition::singletons(n);
    }
    let two_m = g.total_weight() * T::of(2.0);
    let mut best: Option<(T, Partition)> = None;
    for chain in 0..CHAINS {
        let mut rng = rng::stream(seed, &[0x1e1d, chain]);
        let mut part = split_disconnected(g, &leiden_pass(g, (0..n).collect(), gamma, two_m, &mut rng));
        let mut q = modularity(g, &part, gamma).expect("partition covers graph");
        // Later passes start from the previous result.
        for _ in 1..MAX_PASSES {
            let next = split_disconnected(g, &leiden_pass(g, part.labels().to_vec(), gamma, two_m, &mut rng));
            let nq = modularity(g, &next, gamma).expect("partition covers graph");
            if nq <= q + T::of(GAIN_EPS) {
                break;
            }
            part = next;
            q = nq;
        }
        if best.as_ref().map_or(true, |(bq, _)| q > *bq + T::of(GAIN_EPS)) {
            best = Some((q, part));
        }
    }
    best.expect("at least one chain").1
}

fn leiden_pass<T: Scalar, R: Rng>(g: &WeightedGraph<T>, init: Vec<usize>, gamma: T, two_m: T, rng: &mut R) -> Vec<usize> {
    let n = g.node_count();
    // original node -> node of the current aggregate graph
    let mut membership: Vec<usize> = (0..n).collect();
    let mut level = g.clone();
    let mut part = init;
    loop {
        let mut order: Vec<usize> = (0..level.node_count()).collect();
        order.shuffle(rng);
        move_nodes(&level, &mut part, &order, gamma, two_m);
        let communities = relabel(&mut part);
        if communities == level.node_count() {
            break;
        }
        let refined = refine(&level, &part, &order, gamma, two_m, rng);
        let refined_count = refined.iter().max().map_or(0, |&c| c + 1);
        if refined_count == level.node_count() {
            break;
        }
        // Aggregate on the refined partition; aggregated nodes start in
        // their unrefined community.
        let mut next_part = vec![0; refined_count];
        for v in 0..level.node_count() {
            next_part[refined[v]] = part[v];
        }
        level = aggregate(&level, &refined, refined_count);
        for x in membership.iter_mut() {
            *x = refined[*x];
        }
        part = next_part;
    }
    membership.iter().map(|&x| part[x]).collect()
}

/// Queue-based local moving. Returns whether any node moved.
fn move_nodes<T: Scalar>(g: &WeightedGraph<T>, part: &mut [usize], order: &[usize], gamma: T, two_m: T) -> bool {
    let n = g.node_count();
    let eps = T::of(GAIN_EPS);
    let mut tot = vec![T::zero(); n];
    let mut size = vec![0usize; n];
    for v in 0..n {
        tot[part[v]] += g.strength(v);
        size[part[v]] += 1;
    }
    let mut empty: Vec<usize> = (0..n).filter(|&c| size[c] == 0).collect();
    let mut queue: VecDeque<usize> = order.iter().copied().collect();
    let mut queued = vec![true; n];
    let mut weight_to: HashMap<usize, T> = HashMap::new();
    let mut moved = false;
    while let Some(v) = queue.pop_front() {
        queued[v] = false;
        let cur = part[v];
        let kv = g.strength(v);
        weight_to.clear();
        for &(u, w) in g.neighbors(v) {
            if u != v {
                *weight_to.entry(part[u]).or_insert_with(T::zero) += w;
            }
        }
        tot[cur] -= kv;
        size[cur] -= 1;
        let gain = |c: usize, w: T| w - gamma * kv * tot[c] / two_m;
        let cur_gain = gain(cur, weight_to.get(&cur).copied().unwrap_or_else(T::zero));
        let mut best = cur;
        let mut best_gain = cur_gain;
        let mut candidates: Vec<(usize, T)> = weight_to.iter().map(|(&c, &w)| (c, w)).collect();
        candidates.sort_by_key(|&(c, _)| c);
        for (c, w) in candidates {
            if c == cur {
                continue;
            }
            let gc = gain(c, w);
            if gc > best_gain + eps || (best != cur && c < best && (gc - best_gain).abs() <= eps) {
                best = c;
                best_gain = gc;
            }
        }
        // An empty community has gain 0.
        if size[cur] > 0 && T::zero() > best_gain + eps {
            best = empty.pop().expect("an empty community exists");
            best_gain = T::zero();
        }
        let _ = best_gain;
        tot[best] += kv;
        size[best] += 1;
        if best != cur {
            if size[cur] == 0 {
                empty.push(cur);
            }
            part[v] = best;
            moved = true;
            for &(u, _) in g.neighbors(v) {
                if !queued[u] && part[u] != best {
                    queued[u] = true;
                    queue.push_back(u);
                }
            }
        }
    }
    moved
}

/// Randomized refinement inside each community of `part`: starting from
/// singletons, each still-singleton well-connected node joins a
/// well-connected refined subcommunity (or stays alone) with probability
/// proportional to `exp(dQ / REFINE_THETA)` over the moves with `dQ >= 0`.
fn refine<T: Scalar, R: Rng>(
    g: &WeightedGraph<T>,
    part: &[usize],
    order: &[usize],
    gamma: T,
    two_m: T,
    rng: &mut R,
) -> Vec<usize> {
    let n = g.node_count();
    let eps = T::of(GAIN_EPS);
    let mut refined: Vec<usize> = (0..n).collect();
    let mut singleton = vec![true; n];
    let k: Vec<T> = (0..n).map(|v| g.strength(v)).collect();
    let communities = part.iter().max().map_or(0, |&c| c + 1);
    let mut tot_c = vec![T::zero(); communities];
    for v in 0..n {
        tot_c[part[v]] += k[v];
    }
    // refined subcommunity totals and their weight to the rest of the
    // enclosing community
    let mut tot_s: Vec<T> = k.clone();
    let mut ext_s: Vec<T> = (0..n)
        .map(|v| {
            g.neighbors(v)
                .iter()
                .filter(|&&(u, _)| u != v && part[u] == part[v])
                .map(|&(_, w)| w)
                .sum()
        })
        .collect();
    let well_connected = |ext: T, tot: T, c: usize| ext + eps >= gamma * tot * (tot_c[c] - tot) / two_m;
    let mut weight_to: HashMap<usize, T> = HashMap::new();
    for &v in order {
        let c = part[v];
        if !singleton[v] || !well_connected(ext_s[v], k[v], c) {
            continue;
        }
        weight_to.clear();
        for &(u, w) in g.neighbors(v) {
            if u != v && part[u] == c {
                *weight_to.entry(refined[u]).or_insert_with(T::zero) += w;
            }
        }
        let mut candidates: Vec<(usize, T)> = weight_to.iter().map(|(&s, &w)| (s, w)).collect();
        candidates.sort_by_key(|&(s, _)| s);
        // modularity gains; staying alone is the zero-gain option
        let mut moves: Vec<(usize, f64)> = vec![(refined[v], 0.0)];
        for (s, w) in candidates {
            if s == refined[v] || !well_connected(ext_s[s], tot_s[s], c) {
                continue;
            }
            let gs = w - gamma * k[v] * tot_s[s] / two_m;
            if gs >= -eps {
                moves.push((s, (gs + gs).to_f64().unwrap_or(0.0) / two_m.to_f64().unwrap_or(1.0)));
            }
        }
        let top = moves.iter().map(|m| m.1).fold(f64::NEG_INFINITY, f64::max);
        let weights: Vec<f64> = moves.iter().map(|m| ((m.1 - top) / REFINE_THETA).exp()).collect();
        let mut x = rng.gen::<f64>() * weights.iter().sum::<f64>();
        let mut best = moves[moves.len() - 1].0;
        for (m, wt) in moves.iter().zip(&weights) {
            if x < *wt {
                best = m.0;
                break;
            }
            x -= wt;
        }
        if best == refined[v] {
            continue;
        }
        let old = refined[v];
        // Weight between v and its new subcommunity stops being external.
        let w_vs = weight_to[&best];
        ext_s[best] = ext_s[best] + ext_s[old] - w_vs - w_vs;
        tot_s[best] += k[v];
        tot_s[old] = T::zero();
        ext_s[old] = T::zero();
        refined[v] = best;
        singleton[v] = false;
        for &(u, _) in g.neighbors(v) {
            if refined[u] == best {
                singleton[u] = false;
            }
        }
    }
    relabel(&mut refined);
    refined
}

fn aggregate<T: Scalar>(g: &WeightedGraph<T>, map: &[usize], count: usize) -> WeightedGraph<T> {
    WeightedGraph::from_edges(count, g.edges().map(|(a, b, w)| (map[a], map[b], w)))
}

/// Renumbers labels densely in order of first occurrence; returns the count.
fn relabel(labels: &mut [usize]) -> usize {
    let mut map: HashMap<usize, usize> = HashMap::new();
    for l in labels.iter_mut() {
        let next = map.len();
        *l = *map.entry(*l).or_insert(next);
    }
    map.len()
}

/// Splits every community into its connected components (never lowers
/// modularity) and canonicalizes.
fn split_disconnected<T: Scalar>(g: &WeightedGraph<T>, labels: &[usize]) -> Partition {
    let n = g.node_count();
    let mut comp = vec![usize::MAX; n];
    let mut next = 0;
    for s in 0..n {
        if comp[s] != usize::MAX {
            continue;
        }
        comp[s] = next;
        let mut stack = vec![s];
        while let Some(v) = stack.pop() {
            for &(u, _) in g.neighbors(v) {
                if comp[u] == usize::MAX && labels[u] == labels[s] {
                    comp[u] = next;
                    stack.push(u);
                }
            }
        }
        next += 1;
    }
    Partition::from_labels(&comp)
}

/// Leiden on the weighted social network.
pub fn leiden_social(g: &SocialGraph, gamma: f64, seed: u64) -> Partition {
    leiden(&WeightedGraph::<f64>::from_social(g), gamma, seed)
}

/// Leiden on the unweighted undirected projection of a kills view.
pub fn leiden_view(view: &DigraphView<'_>, gamma: f64, seed: u64) -> Partition {
    leiden(&WeightedGraph::<f64>::from_view(view), gamma, seed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    pub(crate) fn two_cliques() -> WeightedGraph<f64> {
        let mut e = Vec::new();
        for base in [0, 4] {
            for a in 0..4 {
                for b in a + 1..4 {
                    e.push((base + a, base + b, 1.0));
                }
            }
        }
        e.push((3, 4, 1.0));
        WeightedGraph::from_edges(8, e)
    }

    /// Q = (1/2m) Σ_ij [A_ij − γ k_i k_j / 2m] δ(c_i, c_j)
    fn modularity_by_summation(g: &WeightedGraph<f64>, labels: &[usize], gamma: f64) -> f64 {
        let n = g.node_count();
        let mut a = vec![vec![0.0; n]; n];
        for (x, y, w) in g.edges() {
            a[x][y] += w;
            if x != y {
                a[y][x] += w;
            } else {
                a[x][x] += w;
            }
        }
        let k: Vec<f64> = (0..n).map(|i| a[i].iter().sum()).collect();
        let two_m: f64 = k.iter().sum();
        let mut q = 0.0;
        for i in 0..n {
            for j in 0..n {
                if labels[i] == labels[j] {
                    q += a[i][j] - gamma * k[i] * k[j] / two_m;
                }
            }
        }
        q / two_m
    }

    /// All set partitions of 0..n as restricted growth strings.
    fn set_partitions(n: usize) -> Vec<Vec<usize>> {
        fn rec(prefix: &mut Vec<usize>, max: usize, n: usize, out: &mut Vec<Vec<usize>>) {
            if prefix.len() == n {
                out.push(prefix.clone());
                return;
            }
            for c in 0..=max + 1 {
                prefix.push(c);
                rec(prefix, max.max(c), n, out);
                prefix.pop();
            }
        }
        let mut out = Vec::new();
        if n > 0 {
            rec(&mut vec![0], 0, n, &mut out);
        }
        out
    }

    #[test]
    fn bell_eight() {
        assert_eq!(set_partitions(8).len(), 4140);
    }

    #[test]
    fn two_cliques_match_exhaustive_optimum() {
        let g = two_cliques();
        let best = set_partitions(8)
            .into_iter()
            .max_by(|a, b| {
                modularity_by_summation(&g, a, 1.0)
                    .partial_cmp(&modularity_by_summation(&g, b, 1.0))
                    .unwrap()
            })
            .unwrap();
        let expected = Partition::from_labels(&best);
        for seed in 0..10 {
            let p = leiden(&g, 1.0, seed);
            assert_eq!(p, expected, "seed {seed}");
            assert_eq!(p.community_count(), 2);
        }
        assert_eq!(expected.labels(), &[0, 0, 0, 0, 1, 1, 1, 1]);
    }

    #[test]
    fn modularity_closed_forms() {
        let g = two_cliques();
        let two_m = 2.0 * g.total_weight();
        let singles = modularity(&g, &Partition::singletons(8), 1.0).unwrap();
        let closed: f64 = -(0..8).map(|v| g.strength(v).powi(2)).sum::<f64>() / (two_m * two_m);
        assert!((singles - closed).abs() < 1e-12);
        assert!(modularity(&g, &Partition::one_community(8), 1.0).unwrap().abs() < 1e-12);
        let cliques = Partition::from_labels(&[0, 0, 0, 0, 1, 1, 1, 1]);
        let q = modularity(&g, &cliques, 1.0).unwrap();
        assert!((q - modularity_by_summation(&g, cliques.labels(), 1.0)).abs() < 1e-12);
        assert!(matches!(
            modularity(&g, &Partition::singletons(3), 1.0),
            Err(Error::Coverage { .. })
        ));
    }

    #[test]
    fn edgeless_graph_stays_singletons() {
        let g: WeightedGraph<f64> = WeightedGraph::from_edges(5, Vec::new());
        assert_eq!(leiden(&g, 1.0, 3), Partition::singletons(5));
        assert_eq!(modularity(&g, &Partition::singletons(5), 1.0).unwrap(), 0.0);
    }

    #[test]
    fn stats_hand_counts() {
        let g = two_cliques();
        let links: Vec<(usize, usize)> = g.edges().map(|(a, b, _)| (a, b)).collect();
        let s = PartitionStats::from_links(&Partition::from_labels(&[0, 0, 0, 0, 1, 1, 1, 1]), links.clone());
        assert_eq!(s.n, vec![4, 4]);
        assert_eq!(s.m, vec![6, 6]);
        assert_eq!(s.between(1, 0), 1);
        let s = PartitionStats::from_links(&Partition::singletons(8), links.clone());
        assert!(s.m.iter().all(|&m| m == 0));
        let s = PartitionStats::from_links(&Partition::one_community(8), links);
        assert_eq!(s.m, vec![13]);
        assert!(s.m_between.is_empty());
    }

    #[test]
    fn canonical_labels() {
        let p = Partition::from_labels(&[7, 7, 2, 9, 2]);
        assert_eq!(p.labels(), &[0, 0, 1, 2, 1]);
        assert_eq!(p.community_count(), 3);
    }

    #[test]
    fn works_in_f32() {
        let e: Vec<(usize, usize, f32)> = two_cliques().edges().map(|(a, b, w)| (a, b, w as f32)).collect();
        let g = WeightedGraph::from_edges(8, e);
        assert_eq!(leiden(&g, 1.0f32, 0).community_count(), 2);
    }

    fn arb_graph() -> impl Strategy<Value = WeightedGraph<f64>> {
        (2usize..25).prop_flat_map(|n| {
            prop::collection::vec((0..n, 0..n, 1u8..4), 0..3 * n).prop_map(move |edges| {
                WeightedGraph::from_edges(
                    n,
                    edges
                        .into_iter()
                        .filter(|(a, b, _)| a != b)
                        .map(|(a, b, w)| (a, b, f64::from(w))),
                )
            })
        })
    }

    fn connected_within(g: &WeightedGraph<f64>, p: &Partition, c: usize) -> bool {
        let members = p.members(c);
        let mut seen = vec![false; g.node_count()];
        let mut stack = vec![members[0]];
        seen[members[0]] = true;
        let mut count = 1;
        while let Some(v) = stack.pop() {
            for &(u, _) in g.neighbors(v) {
                if !seen[u] && p.label(u) == c {
                    seen[u] = true;
                    count += 1;
                    stack.push(u);
                }
            }
        }
        count == members.len()
    }

    proptest! {
        #[test]
        fn leiden_beats_trivial_partitions(g in arb_graph(), seed in 0u64..1000) {
            let n = g.node_count();
            let p = leiden(&g, 1.0, seed);
            let q = modularity(&g, &p, 1.0).unwrap();
            prop_assert!(q + 1e-12 >= modularity(&g, &Partition::singletons(n), 1.0).unwrap());
            prop_assert!(q + 1e-12 >= modularity(&g, &Partition::one_community(n), 1.0).unwrap());
            prop_assert!((-1.0..=1.0).contains(&q));
        }

        #[test]
        fn leiden_communities_are_connected(g in arb_graph(), seed in 0u64..1000) {
            let p = leiden(&g, 1.0, seed);
            for c in 0..p.community_count() {
                prop_assert!(connected_within(&g, &p, c));
            }
        }

        #[test]
        fn leiden_is_deterministic(g in arb_graph(), seed in 0u64..1000) {
            prop_assert_eq!(leiden(&g, 1.0, seed), leiden(&g, 1.0, seed));
        }

        #[test]
        fn stats_reconcile(g in arb_graph(), seed in 0u64..50) {
            let p = leiden(&g, 1.0, seed);
            let links: Vec<(usize, usize)> = g.edges().map(|(a, b, _)| (a, b)).collect();
            let s = PartitionStats::from_links(&p, links.iter().copied());
            prop_assert_eq!(s.link_total(), links.len());
            prop_assert_eq!(s.n.iter().sum::<usize>(), g.node_count());
        }
    }
}
