//! Temporal link prediction on a directed kill-event network.
//!
//! The crate loads the kills network and a character co-occurrence network,
//! scores candidate links with structural indices or trained classifiers, and
//! evaluates them episode by episode without looking into the future.

pub mod centrality;
pub mod community;
pub mod embed;
pub mod error;
pub mod eval;
pub mod export;
pub mod graph;
pub mod indices;
pub mod ml;
pub mod report;
pub mod rng;
pub mod scalar;

pub use error::{Error, Result};
pub use graph::{
    load_kills, load_social, AliasTable, CharacterId, DigraphView, Direction, GraphError, KillEvent,
    SocialGraph, TemporalDigraph,
};
pub use scalar::Scalar;

pub type CentralityScores = centrality::CentralityScores<f64>;
pub type EmbeddingTable = embed::EmbeddingTable<f64>;
pub type FeatureContext = ml::FeatureContext<f64>;
pub type Node2vecParams = embed::Node2vecParams<f64>;
pub type TrainedModel = ml::TrainedModel<f64>;
pub type WeightedGraph = graph::WeightedGraph<f64>;

/// Single-precision variants.
pub mod f32 {
    pub type CentralityScores = crate::centrality::CentralityScores<f32>;
    pub type EmbeddingTable = crate::embed::EmbeddingTable<f32>;
    pub type Node2vecParams = crate::embed::Node2vecParams<f32>;
    pub type TrainedModel = crate::ml::TrainedModel<f32>;
    pub type WeightedGraph = crate::graph::WeightedGraph<f32>;
}
