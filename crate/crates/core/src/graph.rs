//! Kill-event digraph, character co-occurrence graph and CSV ingestion.
//!
//! Two networks are involved. The kills network is directed and temporal:
//! every link carries the global episode index at which the kill happened,
//! and a character can be the victim of at most one link. The social network
//! is undirected and weighted and is only used to derive features.

use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::fs::File;
use std::io::Read;
use std::path::{Path, PathBuf};

use log::warn;
use thiserror::Error;

use crate::scalar::Scalar;

/// Episodes per season in the global episode index.
pub const EPISODES_PER_SEASON: u32 = 10;

/// Dense node identifier, contiguous from zero within one graph.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct CharacterId(pub u32);

impl CharacterId {
    #[inline]
    pub fn index(self) -> usize {
        self.0 as usize
    }

    #[inline]
    pub fn from_index(i: usize) -> Self {
        CharacterId(u32::try_from(i).expect("node count fits in u32"))
    }
}

impl fmt::Display for CharacterId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "#{}", self.0)
    }
}

#[derive(Debug, Error)]
pub enum GraphError {
    #[error("cannot read {}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {message}")]
    Parse { line: u64, message: String },
    #[error("line {line}: integrity error, '{victim}' dies more than once")]
    DuplicateDeath { victim: String, line: u64 },
    #[error("unknown node {0}")]
    UnknownNode(String),
}

/// Bijective name <-> id table.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct NameTable {
    names: Vec<String>,
    index: HashMap<String, CharacterId>,
}

impl NameTable {
    pub fn new() -> Self {
        Self::default()
    }

    /// Returns the id of `name`, inserting it if needed.
    pub fn intern(&mut self, name: &str) -> CharacterId {
        if let Some(&id) = self.index.get(name) {
            return id;
        }
        let id = CharacterId::from_index(self.names.len());
        self.names.push(name.to_string());
        self.index.insert(name.to_string(), id);
        id
    }

    pub fn get(&self, name: &str) -> Option<CharacterId> {
        self.index.get(name).copied()
    }

    pub fn name(&self, id: CharacterId) -> &str {
        &self.names[id.index()]
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (CharacterId, &str)> {
        self.names
            .iter()
            .enumerate()
            .map(|(i, n)| (CharacterId::from_index(i), n.as_str()))
    }
}

/// Maps name variants used in the kills data onto canonical names.
#[derive(Clone, Debug, Default)]
pub struct AliasTable {
    map: HashMap<String, String>,
}

impl AliasTable {
    pub fn load(path: &Path) -> Result<Self, GraphError> {
        Self::from_reader(open(path)?)
    }

    /// Reads a `variant,canonical` CSV.
    pub fn from_reader<R: Read>(reader: R) -> Result<Self, GraphError> {
        let mut rdr = csv_reader(reader);
        check_header(&mut rdr, &["variant", "canonical"])?;
        let mut map = HashMap::new();
        for record in rdr.records() {
            let record = record.map_err(csv_error)?;
            let line = line_of(&record);
            if record.len() != 2 {
                return Err(column_count(line, 2, record.len()));
            }
            let (variant, canonical) = (&record[0], &record[1]);
            if variant.is_empty() || canonical.is_empty() {
                return Err(GraphError::Parse {
                    line,
                    message: "empty alias field".into(),
                });
            }
            map.insert(variant.to_string(), canonical.to_string());
        }
        Ok(AliasTable { map })
    }

    pub fn resolve<'a>(&'a self, name: &'a str) -> &'a str {
        self.map.get(name).map(String::as_str).unwrap_or(name)
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Direction {
    In,
    Out,
    Undirected,
}

/// One directed kill. `episode` is the global 1-based episode index.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct KillEvent {
    pub killer: CharacterId,
    pub victim: CharacterId,
    pub season: u32,
    pub episode: u32,
}

/// A death recorded without a killer. The victim is a node but has no link.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct UnattributedDeath {
    pub victim: CharacterId,
    pub season: u32,
    pub episode: u32,
}

/// Global episode index of `(season, episode-within-season)`.
pub fn global_episode(season: u32, episode: u32) -> u32 {
    EPISODES_PER_SEASON * (season - 1) + episode
}

/// Directed temporal kills network. Immutable once built.
#[derive(Clone, Debug)]
pub struct TemporalDigraph {
    names: NameTable,
    links: Vec<KillEvent>,
    unattributed: Vec<UnattributedDeath>,
    // Indices into `links`, per node.
    out_adj: Vec<Vec<usize>>,
    in_adj: Vec<Vec<usize>>,
}

impl TemporalDigraph {
    /// Builds a graph from already-resolved parts. Links are sorted by
    /// episode (stable). Fails if any node would get a second in-link.
    pub fn from_parts(
        names: NameTable,
        mut links: Vec<KillEvent>,
        unattributed: Vec<UnattributedDeath>,
    ) -> Result<Self, GraphError> {
        links.sort_by_key(|l| l.episode);
        let n = names.len();
        let mut out_adj = vec![Vec::new(); n];
        let mut in_adj: Vec<Vec<usize>> = vec![Vec::new(); n];
        let mut dead = vec![false; n];
        for d in &unattributed {
            if std::mem::replace(&mut dead[d.victim.index()], true) {
                return Err(GraphError::DuplicateDeath {
                    victim: names.name(d.victim).to_string(),
                    line: 0,
                });
            }
        }
        for (k, l) in links.iter().enumerate() {
            if std::mem::replace(&mut dead[l.victim.index()], true) {
                return Err(GraphError::DuplicateDeath {
                    victim: names.name(l.victim).to_string(),
                    line: 0,
                });
            }
            out_adj[l.killer.index()].push(k);
            in_adj[l.victim.index()].push(k);
        }
        Ok(TemporalDigraph {
            names,
            links,
            unattributed,
            out_adj,
            in_adj,
        })
    }

    pub fn names(&self) -> &NameTable {
        &self.names
    }

    pub fn node_count(&self) -> usize {
        self.names.len()
    }

    pub fn link_count(&self) -> usize {
        self.links.len()
    }

    /// All links, sorted by episode.
    pub fn links(&self) -> &[KillEvent] {
        &self.links
    }

    pub fn unattributed_deaths(&self) -> &[UnattributedDeath] {
        &self.unattributed
    }

    pub fn max_episode(&self) -> u32 {
        self.links.last().map_or(0, |l| l.episode)
    }

    pub fn id(&self, name: &str) -> Result<CharacterId, GraphError> {
        self.names
            .get(name)
            .ok_or_else(|| GraphError::UnknownNode(name.to_string()))
    }

    pub fn has_link(&self, killer: CharacterId, victim: CharacterId) -> bool {
        self.in_adj[victim.index()]
            .iter()
            .any(|&k| self.links[k].killer == killer)
    }

    /// View containing only links with `episode < t`.
    pub fn snapshot_before(&self, t: u32) -> DigraphView<'_> {
        DigraphView {
            graph: self,
            cutoff: t,
        }
    }

    /// View over the entire history.
    pub fn full_view(&self) -> DigraphView<'_> {
        self.snapshot_before(u32::MAX)
    }

    /// Copy of the graph with `n` extra degree-0 nodes.
    pub fn add_isolated_nodes(&self, n: usize) -> TemporalDigraph {
        let mut g = self.clone();
        let mut k = 0usize;
        let mut added = 0usize;
        while added < n {
            k += 1;
            let name = format!("isolated #{k}");
            if g.names.get(&name).is_some() {
                continue;
            }
            g.names.intern(&name);
            g.out_adj.push(Vec::new());
            g.in_adj.push(Vec::new());
            added += 1;
        }
        g
    }
}

/// Read-only restriction of a [`TemporalDigraph`] to links strictly before
/// an episode cutoff. The node set is unchanged.
#[derive(Clone, Copy, Debug)]
pub struct DigraphView<'a> {
    graph: &'a TemporalDigraph,
    cutoff: u32,
}

impl<'a> DigraphView<'a> {
    pub fn graph(&self) -> &'a TemporalDigraph {
        self.graph
    }

    pub fn cutoff(&self) -> u32 {
        self.cutoff
    }

    pub fn node_count(&self) -> usize {
        self.graph.node_count()
    }

    pub fn links(&self) -> impl Iterator<Item = &'a KillEvent> + 'a {
        let cutoff = self.cutoff;
        self.graph
            .links
            .iter()
            .take_while(move |l| l.episode < cutoff)
    }

    pub fn link_count(&self) -> usize {
        self.graph.links.partition_point(|l| l.episode < self.cutoff)
    }

    /// Largest episode among visible links, if any.
    pub fn max_link_episode(&self) -> Option<u32> {
        self.links().last().map(|l| l.episode)
    }

    fn check(&self, v: CharacterId) -> Result<(), GraphError> {
        if v.index() < self.graph.node_count() {
            Ok(())
        } else {
            Err(GraphError::UnknownNode(v.to_string()))
        }
    }

    fn visible(&self, adj: &'a [usize]) -> impl Iterator<Item = &'a KillEvent> + 'a {
        let links = &self.graph.links;
        let cutoff = self.cutoff;
        adj.iter()
            .map(move |&k| &links[k])
            .filter(move |l| l.episode < cutoff)
    }

    pub fn out_degree(&self, v: CharacterId) -> Result<usize, GraphError> {
        self.check(v)?;
        Ok(self.visible(&self.graph.out_adj[v.index()]).count())
    }

    pub fn in_degree(&self, v: CharacterId) -> Result<usize, GraphError> {
        self.check(v)?;
        Ok(self.visible(&self.graph.in_adj[v.index()]).count())
    }

    /// True when the character was killed in a visible link.
    pub fn is_dead(&self, v: CharacterId) -> Result<bool, GraphError> {
        Ok(self.in_degree(v)? > 0)
    }

    /// Count of nodes per out-degree, for degrees that occur.
    pub fn out_degree_distribution(&self) -> Vec<DegreeBin> {
        let n = self.node_count();
        let mut counts: Vec<usize> = Vec::new();
        for v in 0..n {
            let d = self
                .visible(&self.graph.out_adj[v])
                .count();
            if counts.len() <= d {
                counts.resize(d + 1, 0);
            }
            counts[d] += 1;
        }
        counts
            .into_iter()
            .enumerate()
            .filter(|&(_, c)| c > 0)
            .map(|(degree, node_count)| DegreeBin {
                degree,
                node_count,
                fraction: node_count as f64 / n as f64,
            })
            .collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DegreeBin {
    pub degree: usize,
    pub node_count: usize,
    pub fraction: f64,
}

/// Degree and neighborhood queries shared by both networks.
pub trait Adjacency {
    fn node_count(&self) -> usize;

    /// Distinct adjacent nodes. Undirected neighborhoods never contain `v`.
    fn neighbors(&self, v: CharacterId, dir: Direction) -> Result<BTreeSet<CharacterId>, GraphError>;

    /// Link count in the given direction; for `Undirected`, the number of
    /// distinct neighbors.
    fn degree(&self, v: CharacterId, dir: Direction) -> Result<usize, GraphError>;
}

impl Adjacency for DigraphView<'_> {
    fn node_count(&self) -> usize {
        self.graph.node_count()
    }

    fn neighbors(&self, v: CharacterId, dir: Direction) -> Result<BTreeSet<CharacterId>, GraphError> {
        self.check(v)?;
        let out = || self.visible(&self.graph.out_adj[v.index()]).map(|l| l.victim);
        let inn = || self.visible(&self.graph.in_adj[v.index()]).map(|l| l.killer);
        Ok(match dir {
            Direction::Out => out().collect(),
            Direction::In => inn().collect(),
            Direction::Undirected => out().chain(inn()).filter(|&u| u != v).collect(),
        })
    }

    fn degree(&self, v: CharacterId, dir: Direction) -> Result<usize, GraphError> {
        match dir {
            Direction::Out => self.out_degree(v),
            Direction::In => self.in_degree(v),
            Direction::Undirected => Ok(self.neighbors(v, dir)?.len()),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SocialEdge {
    pub a: CharacterId,
    pub b: CharacterId,
    pub weight: f64,
}

/// Undirected weighted co-occurrence network without self-loops.
#[derive(Clone, Debug)]
pub struct SocialGraph {
    names: NameTable,
    edges: Vec<SocialEdge>,
    adj: Vec<Vec<(CharacterId, f64)>>,
    self_loops_dropped: usize,
}

impl SocialGraph {
    /// Builds the graph from `(a, b, weight)` triples. Repeated pairs (in
    /// either orientation) merge by summing weights; self-loops are dropped.
    pub fn from_weighted_edges<'s>(
        edges: impl IntoIterator<Item = (&'s str, &'s str, f64)>,
    ) -> Self {
        let mut names = NameTable::new();
        let mut merged: HashMap<(CharacterId, CharacterId), usize> = HashMap::new();
        let mut list: Vec<SocialEdge> = Vec::new();
        let mut self_loops = 0usize;
        for (a, b, w) in edges {
            let (a, b) = (names.intern(a), names.intern(b));
            if a == b {
                self_loops += 1;
                continue;
            }
            let key = (a.min(b), a.max(b));
            match merged.get(&key) {
                Some(&k) => list[k].weight += w,
                None => {
                    merged.insert(key, list.len());
                    list.push(SocialEdge {
                        a: key.0,
                        b: key.1,
                        weight: w,
                    });
                }
            }
        }
        let mut adj = vec![Vec::new(); names.len()];
        for e in &list {
            adj[e.a.index()].push((e.b, e.weight));
            adj[e.b.index()].push((e.a, e.weight));
        }
        for row in &mut adj {
            row.sort_by_key(|&(u, _)| u);
        }
        if self_loops > 0 {
            warn!("dropped {self_loops} self-loop row(s) from social network");
        }
        SocialGraph {
            names,
            edges: list,
            adj,
            self_loops_dropped: self_loops,
        }
    }

    pub fn names(&self) -> &NameTable {
        &self.names
    }

    pub fn node_count(&self) -> usize {
        self.names.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn edges(&self) -> &[SocialEdge] {
        &self.edges
    }

    pub fn self_loops_dropped(&self) -> usize {
        self.self_loops_dropped
    }

    pub fn id(&self, name: &str) -> Result<CharacterId, GraphError> {
        self.names
            .get(name)
            .ok_or_else(|| GraphError::UnknownNode(name.to_string()))
    }

    /// Sorted `(neighbor, weight)` pairs.
    pub fn weighted_neighbors(&self, v: CharacterId) -> &[(CharacterId, f64)] {
        &self.adj[v.index()]
    }

    pub fn edge_weight(&self, a: CharacterId, b: CharacterId) -> Option<f64> {
        let row = self.adj.get(a.index())?;
        row.binary_search_by_key(&b, |&(u, _)| u)
            .ok()
            .map(|k| row[k].1)
    }

    pub fn strength(&self, v: CharacterId) -> f64 {
        self.adj[v.index()].iter().map(|&(_, w)| w).sum()
    }
}

impl Adjacency for SocialGraph {
    fn node_count(&self) -> usize {
        self.names.len()
    }

    fn neighbors(&self, v: CharacterId, _dir: Direction) -> Result<BTreeSet<CharacterId>, GraphError> {
        let row = self
            .adj
            .get(v.index())
            .ok_or_else(|| GraphError::UnknownNode(v.to_string()))?;
        Ok(row.iter().map(|&(u, _)| u).collect())
    }

    fn degree(&self, v: CharacterId, _dir: Direction) -> Result<usize, GraphError> {
        self.adj
            .get(v.index())
            .map(Vec::len)
            .ok_or_else(|| GraphError::UnknownNode(v.to_string()))
    }
}

/// Plain undirected weighted adjacency used by the community and centrality
/// code. Self-loops are allowed (they arise when aggregating communities).
#[derive(Clone, Debug, PartialEq)]
pub struct WeightedGraph<T> {
    adj: Vec<Vec<(usize, T)>>,
}

impl<T: Scalar> WeightedGraph<T> {
    /// Builds from an edge list; repeated pairs accumulate.
    pub fn from_edges(n: usize, edges: impl IntoIterator<Item = (usize, usize, T)>) -> Self {
        let mut maps: Vec<HashMap<usize, T>> = vec![HashMap::new(); n];
        for (a, b, w) in edges {
            *maps[a].entry(b).or_insert_with(T::zero) += w;
            if a != b {
                *maps[b].entry(a).or_insert_with(T::zero) += w;
            }
        }
        let adj = maps
            .into_iter()
            .map(|m| {
                let mut row: Vec<(usize, T)> = m.into_iter().collect();
                row.sort_by_key(|&(u, _)| u);
                row
            })
            .collect();
        WeightedGraph { adj }
    }

    pub fn from_social(g: &SocialGraph) -> Self {
        Self::from_edges(
            g.node_count(),
            g.edges()
                .iter()
                .map(|e| (e.a.index(), e.b.index(), T::of(e.weight))),
        )
    }

    /// Unweighted undirected projection of a kills view. Mutual kills
    /// collapse into one edge and self-kills are left out.
    pub fn from_view(view: &DigraphView<'_>) -> Self {
        let mut pairs: BTreeSet<(usize, usize)> = BTreeSet::new();
        for l in view.links() {
            let (a, b) = (l.killer.index(), l.victim.index());
            if a != b {
                pairs.insert((a.min(b), a.max(b)));
            }
        }
        Self::from_edges(
            view.node_count(),
            pairs.into_iter().map(|(a, b)| (a, b, T::one())),
        )
    }

    pub fn node_count(&self) -> usize {
        self.adj.len()
    }

    /// Sorted `(neighbor, weight)`; a self-loop appears once with its weight.
    pub fn neighbors(&self, v: usize) -> &[(usize, T)] {
        &self.adj[v]
    }

    /// Weighted degree, self-loops counted twice.
    pub fn strength(&self, v: usize) -> T {
        self.adj[v]
            .iter()
            .map(|&(u, w)| if u == v { w + w } else { w })
            .sum()
    }

    /// Sum of all edge weights (each undirected edge once).
    pub fn total_weight(&self) -> T {
        let twice: T = (0..self.adj.len()).map(|v| self.strength(v)).sum();
        twice / T::of(2.0)
    }

    /// Each undirected edge once, as `(a, b, w)` with `a <= b`.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize, T)> + '_ {
        self.adj.iter().enumerate().flat_map(|(a, row)| {
            row.iter()
                .filter(move |&&(b, _)| a <= b)
                .map(move |&(b, w)| (a, b, w))
        })
    }
}

/// Loads the kills CSV (`season,episode,killer,victim`).
///
/// `episode` is the episode number within the season (1..=10) and is turned
/// into the global index. An empty `killer` records an unattributed death:
/// the victim becomes a node without an incoming link.
pub fn load_kills(path: &Path, aliases: Option<&Path>) -> Result<TemporalDigraph, GraphError> {
    let aliases = match aliases {
        Some(p) => AliasTable::load(p)?,
        None => AliasTable::default(),
    };
    kills_from_reader(open(path)?, &aliases)
}

pub fn kills_from_reader<R: Read>(reader: R, aliases: &AliasTable) -> Result<TemporalDigraph, GraphError> {
    let mut rdr = csv_reader(reader);
    check_header(&mut rdr, &["season", "episode", "killer", "victim"])?;
    let mut names = NameTable::new();
    let mut links = Vec::new();
    let mut unattributed = Vec::new();
    let mut death_line: HashMap<CharacterId, u64> = HashMap::new();
    for record in rdr.records() {
        let record = record.map_err(csv_error)?;
        let line = line_of(&record);
        if record.len() != 4 {
            return Err(column_count(line, 4, record.len()));
        }
        let season = parse_positive(&record[0], "season", line)?;
        let within = parse_positive(&record[1], "episode", line)?;
        if within > EPISODES_PER_SEASON {
            return Err(GraphError::Parse {
                line,
                message: format!("episode {within} exceeds {EPISODES_PER_SEASON} per season"),
            });
        }
        let episode = global_episode(season, within);
        let victim_name = aliases.resolve(&record[3]);
        if victim_name.is_empty() {
            return Err(GraphError::Parse {
                line,
                message: "empty victim".into(),
            });
        }
        let killer_name = aliases.resolve(&record[2]).to_string();
        let killer = (!killer_name.is_empty()).then(|| names.intern(&killer_name));
        let victim = names.intern(victim_name);
        if death_line.insert(victim, line).is_some() {
            return Err(GraphError::DuplicateDeath {
                victim: victim_name.to_string(),
                line,
            });
        }
        match killer {
            Some(killer) => links.push(KillEvent {
                killer,
                victim,
                season,
                episode,
            }),
            None => unattributed.push(UnattributedDeath {
                victim,
                season,
                episode,
            }),
        }
    }
    TemporalDigraph::from_parts(names, links, unattributed)
}

/// Loads the social CSV (`Source,Target,Weight`).
pub fn load_social(path: &Path) -> Result<SocialGraph, GraphError> {
    social_from_reader(open(path)?)
}

pub fn social_from_reader<R: Read>(reader: R) -> Result<SocialGraph, GraphError> {
    let mut rdr = csv_reader(reader);
    check_header(&mut rdr, &["Source", "Target", "Weight"])?;
    let mut rows: Vec<(String, String, f64)> = Vec::new();
    for record in rdr.records() {
        let record = record.map_err(csv_error)?;
        let line = line_of(&record);
        if record.len() != 3 {
            return Err(column_count(line, 3, record.len()));
        }
        let weight: f64 = record[2].parse().map_err(|_| GraphError::Parse {
            line,
            message: format!("weight '{}' is not a number", &record[2]),
        })?;
        if !(weight > 0.0) || !weight.is_finite() {
            return Err(GraphError::Parse {
                line,
                message: format!("weight must be positive, got {weight}"),
            });
        }
        if record[0].is_empty() || record[1].is_empty() {
            return Err(GraphError::Parse {
                line,
                message: "empty node name".into(),
            });
        }
        rows.push((record[0].to_string(), record[1].to_string(), weight));
    }
    Ok(SocialGraph::from_weighted_edges(
        rows.iter().map(|(a, b, w)| (a.as_str(), b.as_str(), *w)),
    ))
}

fn open(path: &Path) -> Result<File, GraphError> {
    File::open(path).map_err(|source| GraphError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn csv_reader<R: Read>(reader: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader)
}

fn check_header<R: Read>(rdr: &mut csv::Reader<R>, expected: &[&str]) -> Result<(), GraphError> {
    let header = rdr.headers().map_err(csv_error)?;
    let got: Vec<&str> = header.iter().collect();
    if got != expected {
        return Err(GraphError::Parse {
            line: 1,
            message: format!("expected header '{}', got '{}'", expected.join(","), got.join(",")),
        });
    }
    Ok(())
}

fn line_of(record: &csv::StringRecord) -> u64 {
    record.position().map_or(0, |p| p.line())
}

fn csv_error(e: csv::Error) -> GraphError {
    let line = e.position().map_or(0, |p| p.line());
    GraphError::Parse {
        line,
        message: e.to_string(),
    }
}

fn column_count(line: u64, expected: usize, got: usize) -> GraphError {
    GraphError::Parse {
        line,
        message: format!("expected {expected} columns, got {got}"),
    }
}

fn parse_positive(field: &str, what: &str, line: u64) -> Result<u32, GraphError> {
    match field.parse::<u32>() {
        Ok(v) if v >= 1 => Ok(v),
        _ => Err(GraphError::Parse {
            line,
            message: format!("{what} '{field}' is not a positive integer"),
        }),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn kills(csv: &str) -> Result<TemporalDigraph, GraphError> {
        kills_from_reader(csv.as_bytes(), &AliasTable::default())
    }

    #[test]
    fn empty_kills_csv_is_empty_graph() {
        let g = kills("season,episode,killer,victim\n").unwrap();
        assert_eq!(g.node_count(), 0);
        assert_eq!(g.link_count(), 0);
    }

    #[test]
    fn two_row_chain() {
        let g = kills("season,episode,killer,victim\n1,1,A,B\n1,2,B,C\n").unwrap();
        assert_eq!(g.node_count(), 3);
        assert_eq!(g.link_count(), 2);
        let b = g.id("B").unwrap();
        assert_eq!(g.full_view().in_degree(b).unwrap(), 1);
        assert_eq!(g.full_view().out_degree(b).unwrap(), 1);
    }

    #[test]
    fn second_death_is_rejected_with_name() {
        let err = kills("season,episode,killer,victim\n1,1,A,B\n1,2,C,B\n").unwrap_err();
        match err {
            GraphError::DuplicateDeath { victim, line } => {
                assert_eq!(victim, "B");
                assert_eq!(line, 3);
            }
            other => panic!("unexpected {other:?}"),
        }
        // parallel duplicate rows are the same violation
        assert!(matches!(
            kills("season,episode,killer,victim\n1,1,A,B\n1,1,A,B\n"),
            Err(GraphError::DuplicateDeath { .. })
        ));
    }

    #[test]
    fn malformed_rows_report_line_numbers() {
        let err = kills("season,episode,killer,victim\n1,1,A,B\n1,x,B,C\n").unwrap_err();
        assert!(matches!(err, GraphError::Parse { line: 3, .. }), "{err}");
        let err = kills("season,episode,killer,victim\n1,1,A\n").unwrap_err();
        assert!(matches!(err, GraphError::Parse { line: 2, .. }), "{err}");
        let err = kills("season,episode,killer,victim\n0,1,A,B\n").unwrap_err();
        assert!(matches!(err, GraphError::Parse { line: 2, .. }), "{err}");
        let err = kills("killer,victim\nA,B\n").unwrap_err();
        assert!(matches!(err, GraphError::Parse { line: 1, .. }), "{err}");
    }

    #[test]
    fn global_episode_index() {
        assert_eq!(global_episode(1, 1), 1);
        assert_eq!(global_episode(4, 1), 31);
        assert_eq!(global_episode(6, 10), 60);
        let g = kills("season,episode,killer,victim\n4,1,A,B\n").unwrap();
        assert_eq!(g.links()[0].episode, 31);
        assert_eq!(g.links()[0].season, 4);
    }

    #[test]
    fn unattributed_death_adds_node_only() {
        let g = kills("season,episode,killer,victim\n1,3,,Jon Arryn\n1,4,A,B\n").unwrap();
        assert_eq!(g.node_count(), 3);
        assert_eq!(g.link_count(), 1);
        assert_eq!(g.unattributed_deaths().len(), 1);
        let err = kills("season,episode,killer,victim\n1,3,,B\n1,4,A,B\n").unwrap_err();
        assert!(matches!(err, GraphError::DuplicateDeath { .. }));
    }

    #[test]
    fn aliases_resolve_before_interning() {
        let aliases =
            AliasTable::from_reader("variant,canonical\nJon Snow,Jon\n".as_bytes()).unwrap();
        let g = kills_from_reader(
            "season,episode,killer,victim\n1,1,Jon Snow,B\n1,2, Jon ,C\n".as_bytes(),
            &aliases,
        )
        .unwrap();
        assert_eq!(g.node_count(), 3);
        assert_eq!(g.full_view().out_degree(g.id("Jon").unwrap()).unwrap(), 2);
    }

    #[test]
    fn snapshot_cutoffs() {
        let g = kills("season,episode,killer,victim\n1,3,A,B\n1,5,A,C\n1,9,D,E\n").unwrap();
        assert_eq!(g.snapshot_before(5).link_count(), 1);
        assert_eq!(g.snapshot_before(1).link_count(), 0);
        assert_eq!(g.snapshot_before(g.max_episode() + 1).link_count(), 3);
        assert_eq!(g.snapshot_before(5).node_count(), 5);
    }

    #[test]
    fn degrees_respect_direction_and_cutoff() {
        let g = kills(
            "season,episode,killer,victim\n1,1,X,A\n1,2,A,B\n1,3,A,C\n1,4,A,D\n1,5,E,F\n",
        )
        .unwrap();
        let a = g.id("A").unwrap();
        let full = g.full_view();
        assert_eq!(full.degree(a, Direction::Out).unwrap(), 3);
        assert_eq!(full.degree(a, Direction::In).unwrap(), 1);
        assert_eq!(full.degree(a, Direction::Undirected).unwrap(), 4);
        assert_eq!(g.snapshot_before(4).degree(a, Direction::Out).unwrap(), 2);
        let f = g.id("F").unwrap();
        let iso = g.add_isolated_nodes(1);
        let z = CharacterId::from_index(iso.node_count() - 1);
        for dir in [Direction::In, Direction::Out, Direction::Undirected] {
            assert_eq!(iso.full_view().degree(z, dir).unwrap(), 0);
        }
        assert_eq!(full.degree(f, Direction::Out).unwrap(), 0);
        assert!(matches!(
            full.degree(CharacterId(99), Direction::Out),
            Err(GraphError::UnknownNode(_))
        ));
    }

    #[test]
    fn neighbor_sets() {
        let g = kills("season,episode,killer,victim\n1,1,A,B\n1,2,A,C\n").unwrap();
        let (a, b, c) = (g.id("A").unwrap(), g.id("B").unwrap(), g.id("C").unwrap());
        let v = g.full_view();
        assert_eq!(v.neighbors(a, Direction::Out).unwrap(), BTreeSet::from([b, c]));
        assert!(v.neighbors(b, Direction::Out).unwrap().is_empty());
        assert_eq!(v.neighbors(b, Direction::Undirected).unwrap(), BTreeSet::from([a]));
    }

    #[test]
    fn isolated_nodes_keep_links() {
        let g = kills("season,episode,killer,victim\n1,1,A,B\n").unwrap();
        let same = g.add_isolated_nodes(0);
        assert_eq!(same.node_count(), 2);
        assert_eq!(same.links(), g.links());
        let more = g.add_isolated_nodes(3);
        assert_eq!(more.node_count(), 5);
        assert_eq!(more.link_count(), 1);
    }

    #[test]
    fn social_merges_and_drops_loops() {
        let g = social_from_reader("Source,Target,Weight\nA,B,3\n".as_bytes()).unwrap();
        assert_eq!((g.node_count(), g.edge_count()), (2, 1));
        assert_eq!(g.edges()[0].weight, 3.0);
        let g = social_from_reader("Source,Target,Weight\nA,B,1\nB,A,2\nC,C,4\n".as_bytes())
            .unwrap();
        assert_eq!(g.edge_count(), 1);
        assert_eq!(g.edges()[0].weight, 3.0);
        assert_eq!(g.self_loops_dropped(), 1);
        let err = social_from_reader("Source,Target,Weight\nA,B,0\n".as_bytes()).unwrap_err();
        assert!(matches!(err, GraphError::Parse { line: 2, .. }));
        let err = social_from_reader("Source,Target,Weight\nA,B,-1\n".as_bytes()).unwrap_err();
        assert!(matches!(err, GraphError::Parse { .. }));
    }

    #[test]
    fn out_degree_distribution_sums_to_node_count() {
        let g = kills("season,episode,killer,victim\n1,1,A,B\n1,2,A,C\n1,3,D,E\n").unwrap();
        let bins = g.full_view().out_degree_distribution();
        assert_eq!(bins.iter().map(|b| b.node_count).sum::<usize>(), 5);
        assert_eq!(bins.last().unwrap().degree, 2);
        let total: f64 = bins.iter().map(|b| b.fraction).sum();
        assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn weighted_projection_of_view() {
        let g = kills("season,episode,killer,victim\n1,1,A,B\n1,2,B,A2\n1,3,C,C\n").unwrap();
        let w: WeightedGraph<f64> = WeightedGraph::from_view(&g.full_view());
        assert_eq!(w.total_weight(), 2.0);
        assert_eq!(w.edges().count(), 2);
    }
}
