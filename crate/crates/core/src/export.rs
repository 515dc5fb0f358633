//! CSV exports of the data behind the figures.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use crate::centrality::CentralityScores;
use crate::community::{leiden_view, Partition};
use crate::embed::{link_embedding, EmbeddingTable, LinkMode};
use crate::error::{Error, Result};
use crate::eval::{ml_pairs, EvalConfig};
use crate::graph::{SocialGraph, TemporalDigraph};
use crate::ml::FeatureContext;
use crate::report::{feature_context, AnalysisConfig, Inputs};

fn writer<W: Write>(w: W) -> csv::Writer<W> {
    csv::Writer::from_writer(w)
}

pub fn write_out_degree_distribution<W: Write>(g: &TemporalDigraph, w: W) -> Result<()> {
    let mut w = writer(w);
    w.write_record(["degree", "node_count", "fraction"])?;
    for bin in g.full_view().out_degree_distribution() {
        w.write_record([bin.degree.to_string(), bin.node_count.to_string(), bin.fraction.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

/// One row per node of each network: `network,name,community`.
pub fn write_communities<W: Write>(
    social: &SocialGraph,
    social_partition: &Partition,
    kills: &TemporalDigraph,
    kills_partition: &Partition,
    w: W,
) -> Result<()> {
    let mut w = writer(w);
    w.write_record(["network", "name", "community"])?;
    for (id, name) in social.names().iter() {
        w.write_record(["social", name, &social_partition.label(id.index()).to_string()])?;
    }
    for (id, name) in kills.names().iter() {
        w.write_record(["kills", name, &kills_partition.label(id.index()).to_string()])?;
    }
    w.flush()?;
    Ok(())
}

/// Social characters by decreasing score.
pub fn write_centrality<W: Write>(social: &SocialGraph, scores: &CentralityScores<f64>, w: W) -> Result<()> {
    let mut w = writer(w);
    w.write_record(["rank", "name", "score"])?;
    for (rank, (v, x)) in scores.ranked().into_iter().enumerate() {
        let name = social.names().name(crate::CharacterId::from_index(v));
        w.write_record([(rank + 1).to_string(), name.to_string(), x.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

/// Link embeddings of the test pairs of the first run: the kills of the
/// evaluation window (label 1) followed by as many test non-links (label 0).
pub fn write_link_embeddings<W: Write>(
    g: &TemporalDigraph,
    ctx: &FeatureContext<f64>,
    table: &EmbeddingTable<f64>,
    cfg: &EvalConfig,
    mode: LinkMode,
    w: W,
) -> Result<usize> {
    let pairs = ml_pairs(g, cfg, 0)?;
    let g = g.add_isolated_nodes(cfg.augment_isolated);
    let width = match mode {
        LinkMode::Concat => 2 * table.dim,
        LinkMode::Average => table.dim,
    };
    let mut w = writer(w);
    let mut header: Vec<String> = ["killer", "victim", "label", "episode"].map(String::from).to_vec();
    header.extend((0..width).map(|k| format!("e{k}")));
    w.write_record(&header)?;
    let rows = pairs
        .positives
        .iter()
        .map(|&(t, p)| (p, true, Some(t)))
        .chain(pairs.test_negatives.iter().map(|&p| (p, false, None)));
    let mut count = 0;
    for ((i, j), label, episode) in rows {
        let e = link_embedding(table, ctx.social_id(i), ctx.social_id(j), mode);
        let mut rec = vec![
            g.names().name(i).to_string(),
            g.names().name(j).to_string(),
            u8::from(label).to_string(),
            episode.map_or(String::new(), |t| t.to_string()),
        ];
        rec.extend(e.vector.iter().map(f64::to_string));
        w.write_record(&rec)?;
        count += 1;
    }
    w.flush()?;
    Ok(count)
}

fn create(dir: &Path, name: &str) -> Result<(PathBuf, fs::File)> {
    let path = dir.join(name);
    let file = fs::File::create(&path).map_err(|e| Error::Invalid(format!("{}: {e}", path.display())))?;
    Ok((path, file))
}

/// Writes every figure file into `out_dir` and returns their paths.
pub fn export_figures(inputs: &Inputs, cfg: &AnalysisConfig, out_dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(out_dir).map_err(|e| Error::Invalid(format!("{}: {e}", out_dir.display())))?;
    let (ctx, _) = feature_context(&inputs.kills, &inputs.social, cfg)?;
    let mut written = Vec::new();

    let (path, f) = create(out_dir, "out_degree_distribution.csv")?;
    write_out_degree_distribution(&inputs.kills, f)?;
    written.push(path);

    let (path, f) = create(out_dir, "link_embeddings.csv")?;
    let table = ctx.embeddings.as_ref().expect("context has embeddings");
    write_link_embeddings(&inputs.kills, &ctx, table, &cfg.eval, LinkMode::Concat, f)?;
    written.push(path);

    let (path, f) = create(out_dir, "communities.csv")?;
    let kills_partition = leiden_view(&inputs.kills.full_view(), cfg.resolution, cfg.eval.community_seed);
    let social_partition = ctx.communities.as_ref().expect("context has communities");
    write_communities(&inputs.social, social_partition, &inputs.kills, &kills_partition, f)?;
    written.push(path);

    for (name, scores) in [
        ("centrality_pagerank.csv", ctx.pagerank.as_ref()),
        ("centrality_betweenness.csv", ctx.betweenness.as_ref()),
    ] {
        let (path, f) = create(out_dir, name)?;
        write_centrality(&inputs.social, scores.expect("context has centralities"), f)?;
        written.push(path);
    }
    Ok(written)
}
