//! Structural link-prediction indices on a kills snapshot.
//!
//! Every index has a death-check variant that returns negative infinity
//! when either endpoint already has an incoming link (is dead) in the view.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::community::{leiden_view, partition_stats_view, Partition, PartitionStats};
use crate::error::{Error, Result};
use crate::graph::{Adjacency, CharacterId, DigraphView, Direction};
use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IndexKind {
    Alive,
    PreferentialAttachment,
    AdamicAdar,
    Community,
}

impl IndexKind {
    pub const ALL: [IndexKind; 4] = [
        IndexKind::Alive,
        IndexKind::PreferentialAttachment,
        IndexKind::AdamicAdar,
        IndexKind::Community,
    ];

    pub fn short_name(self) -> &'static str {
        match self {
            IndexKind::Alive => "alive",
            IndexKind::PreferentialAttachment => "pa",
            IndexKind::AdamicAdar => "aa",
            IndexKind::Community => "community",
        }
    }

    pub fn long_name(self) -> &'static str {
        match self {
            IndexKind::Alive => "alive index",
            IndexKind::PreferentialAttachment => "preferential attachment",
            IndexKind::AdamicAdar => "Adamic-Adar",
            IndexKind::Community => "community index",
        }
    }
}

impl FromStr for IndexKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "alive" => Ok(IndexKind::Alive),
            "pa" | "preferential_attachment" => Ok(IndexKind::PreferentialAttachment),
            "aa" | "adamic_adar" => Ok(IndexKind::AdamicAdar),
            "community" => Ok(IndexKind::Community),
            other => Err(Error::Invalid(format!("unknown index '{other}'"))),
        }
    }
}

/// An index together with its death-check flag.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct IndexSpec {
    pub kind: IndexKind,
    pub death_check: bool,
}

impl IndexSpec {
    pub fn new(kind: IndexKind, death_check: bool) -> Self {
        IndexSpec { kind, death_check }
    }
}

impl fmt::Display for IndexSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        // The alive index already encodes the check.
        if self.death_check && self.kind != IndexKind::Alive {
            write!(f, "{} †", self.kind.long_name())
        } else {
            f.write_str(self.kind.long_name())
        }
    }
}

fn dead_endpoint(view: &DigraphView<'_>, i: CharacterId, j: CharacterId) -> Result<bool> {
    Ok(view.is_dead(i)? || view.is_dead(j)?)
}

/// 1 if neither endpoint has died yet, else 0.
pub fn alive_index<T: Scalar>(view: &DigraphView<'_>, i: CharacterId, j: CharacterId) -> Result<T> {
    Ok(if dead_endpoint(view, i, j)? { T::zero() } else { T::one() })
}

/// Product of out-degrees.
pub fn preferential_attachment<T: Scalar>(
    view: &DigraphView<'_>,
    i: CharacterId,
    j: CharacterId,
    death_check: bool,
) -> Result<T> {
    let (ki, kj) = (view.out_degree(i)?, view.out_degree(j)?);
    if death_check && dead_endpoint(view, i, j)? {
        return Ok(T::neg_infinity());
    }
    Ok(T::of_usize(ki) * T::of_usize(kj))
}

/// Sum of `1 / ln k_x` over common neighbors in the undirected projection.
pub fn adamic_adar<T: Scalar>(
    view: &DigraphView<'_>,
    i: CharacterId,
    j: CharacterId,
    death_check: bool,
) -> Result<T> {
    if i == j {
        return Err(Error::Invalid("Adamic-Adar needs distinct endpoints".into()));
    }
    let gi = view.neighbors(i, Direction::Undirected)?;
    let gj = view.neighbors(j, Direction::Undirected)?;
    if death_check && dead_endpoint(view, i, j)? {
        return Ok(T::neg_infinity());
    }
    let mut s = T::zero();
    for &x in gi.intersection(&gj) {
        let kx = view.degree(x, Direction::Undirected)?;
        assert!(kx >= 2, "common neighbor with undirected degree {kx}");
        s += T::one() / T::of_usize(kx).ln();
    }
    Ok(s)
}

/// Precomputed partition of a view, for the community index.
#[derive(Clone, Debug)]
pub struct CommunityModel {
    pub partition: Partition,
    pub stats: PartitionStats,
}

impl CommunityModel {
    pub fn new(view: &DigraphView<'_>, partition: Partition) -> Result<Self> {
        let stats = partition_stats_view(view, &partition)?;
        Ok(CommunityModel { partition, stats })
    }

    /// Leiden on the view's undirected projection.
    pub fn detect(view: &DigraphView<'_>, resolution: f64, seed: u64) -> Result<Self> {
        Self::new(view, leiden_view(view, resolution, seed))
    }
}

/// Intra-community link density `m_c / C(n_c, 2)` when both endpoints share a
/// community, inter-community density `m_ab / (n_a n_b)` otherwise.
pub fn community_index<T: Scalar>(
    view: &DigraphView<'_>,
    model: &CommunityModel,
    i: CharacterId,
    j: CharacterId,
    death_check: bool,
) -> Result<T> {
    let p = &model.partition;
    if i.index() >= p.len() || j.index() >= p.len() {
        return Err(Error::Coverage {
            expected: view.node_count(),
            got: p.len(),
        });
    }
    if death_check && dead_endpoint(view, i, j)? {
        return Ok(T::neg_infinity());
    }
    let (a, b) = (p.label(i.index()), p.label(j.index()));
    let s = &model.stats;
    if a == b {
        let n = s.n[a];
        let pairs = n * n.saturating_sub(1) / 2;
        if pairs == 0 {
            return Ok(T::zero());
        }
        Ok(T::of_usize(s.m[a]) / T::of_usize(pairs))
    } else {
        Ok(T::of_usize(s.between(a, b)) / (T::of_usize(s.n[a]) * T::of_usize(s.n[b])))
    }
}

/// Scores pairs against one view with one index.
pub struct IndexScorer<'v> {
    view: DigraphView<'v>,
    spec: IndexSpec,
    community: Option<CommunityModel>,
}

impl<'v> IndexScorer<'v> {
    /// Community partitions are detected on the view with `seed`.
    pub fn new(view: DigraphView<'v>, spec: IndexSpec, seed: u64) -> Result<Self> {
        let community = match spec.kind {
            IndexKind::Community => Some(CommunityModel::detect(&view, 1.0, seed)?),
            _ => None,
        };
        Ok(IndexScorer {
            view,
            spec,
            community,
        })
    }

    pub fn with_partition(view: DigraphView<'v>, spec: IndexSpec, partition: Partition) -> Result<Self> {
        let community = Some(CommunityModel::new(&view, partition)?);
        Ok(IndexScorer {
            view,
            spec,
            community,
        })
    }

    pub fn view(&self) -> &DigraphView<'v> {
        &self.view
    }

    pub fn score<T: Scalar>(&self, i: CharacterId, j: CharacterId) -> Result<T> {
        let dc = self.spec.death_check;
        match self.spec.kind {
            IndexKind::Alive => alive_index(&self.view, i, j),
            IndexKind::PreferentialAttachment => preferential_attachment(&self.view, i, j, dc),
            IndexKind::AdamicAdar => adamic_adar(&self.view, i, j, dc),
            IndexKind::Community => {
                let model = self.community.as_ref().expect("community model built");
                community_index(&self.view, model, i, j, dc)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{kills_from_reader, AliasTable, TemporalDigraph};
    use proptest::prelude::*;

    fn kills(csv: &str) -> TemporalDigraph {
        kills_from_reader(
            format!("season,episode,killer,victim\n{csv}").as_bytes(),
            &AliasTable::default(),
        )
        .unwrap()
    }

    fn id(g: &TemporalDigraph, n: &str) -> CharacterId {
        g.id(n).unwrap()
    }

    #[test]
    fn alive_cases() {
        let g = kills("1,1,A,B\n1,2,C,D\n");
        let v = g.full_view();
        assert_eq!(alive_index::<f64>(&v, id(&g, "A"), id(&g, "C")).unwrap(), 1.0);
        assert_eq!(alive_index::<f64>(&v, id(&g, "B"), id(&g, "C")).unwrap(), 0.0);
        assert_eq!(alive_index::<f64>(&v, id(&g, "A"), id(&g, "D")).unwrap(), 0.0);
    }

    #[test]
    fn pa_cases() {
        let g = kills("1,1,A,B\n1,2,A,C\n1,3,A,D\n1,4,E,F\n1,5,E,G\n1,6,H,I\n1,7,X,E\n");
        let v = g.snapshot_before(7);
        let (a, e, h) = (id(&g, "A"), id(&g, "E"), id(&g, "H"));
        assert_eq!(preferential_attachment::<f64>(&v, a, e, false).unwrap(), 6.0);
        assert_eq!(preferential_attachment::<f64>(&v, id(&g, "B"), h, false).unwrap(), 0.0);
        assert_eq!(preferential_attachment::<f64>(&v, a, id(&g, "B"), true).unwrap(), f64::NEG_INFINITY);
        let full = g.full_view();
        assert_eq!(preferential_attachment::<f64>(&full, a, e, true).unwrap(), f64::NEG_INFINITY);
        assert_eq!(preferential_attachment::<f64>(&full, a, e, false).unwrap(), 6.0);
    }

    #[test]
    fn aa_cases() {
        // X is adjacent to A and B in the undirected projection.
        let g = kills("1,1,X,A\n1,2,B,X\n1,3,C,D\n");
        let v = g.full_view();
        let aa: f64 = adamic_adar(&v, id(&g, "A"), id(&g, "B"), false).unwrap();
        assert!((aa - 1.0 / 2f64.ln()).abs() < 1e-12);
        assert!((aa - 1.4427).abs() < 1e-4);
        assert_eq!(adamic_adar::<f64>(&v, id(&g, "A"), id(&g, "C"), false).unwrap(), 0.0);
        assert_eq!(adamic_adar::<f64>(&v, id(&g, "A"), id(&g, "B"), true).unwrap(), f64::NEG_INFINITY);
        assert!(adamic_adar::<f64>(&v, id(&g, "A"), id(&g, "A"), false).is_err());
    }

    #[test]
    fn community_cases() {
        // Community 0 = {A,B,C,D} with 3 links; 1 = {E,F}; 2 = {G,H,I}.
        let g = kills("1,1,A,B\n1,2,C,D\n1,3,A,C\n1,4,E,F\n1,5,G,H\n");
        let v = g.full_view();
        let p = Partition::from_labels(&[0, 0, 0, 0, 1, 1, 2, 2]);
        let model = CommunityModel::new(&v, p).unwrap();
        let s: f64 = community_index(&v, &model, id(&g, "A"), id(&g, "D"), false).unwrap();
        assert_eq!(s, 0.5);
        let s: f64 = community_index(&v, &model, id(&g, "E"), id(&g, "G"), false).unwrap();
        assert_eq!(s, 0.0);
        let lonely = g.add_isolated_nodes(1);
        let lv = lonely.full_view();
        let p = Partition::from_labels(&[0, 0, 0, 0, 1, 1, 2, 2, 3]);
        let model = CommunityModel::new(&lv, p).unwrap();
        let z = CharacterId::from_index(8);
        assert_eq!(community_index::<f64>(&lv, &model, z, z, false).unwrap(), 0.0);
        let short = CommunityModel::new(&v, Partition::singletons(3));
        assert!(short.is_err());
    }

    #[test]
    fn display_names() {
        assert_eq!(IndexSpec::new(IndexKind::Alive, true).to_string(), "alive index");
        assert_eq!(
            IndexSpec::new(IndexKind::PreferentialAttachment, true).to_string(),
            "preferential attachment †"
        );
        assert_eq!("pa".parse::<IndexKind>().unwrap(), IndexKind::PreferentialAttachment);
        assert!("cn".parse::<IndexKind>().is_err());
    }

    fn arb_kills() -> impl Strategy<Value = TemporalDigraph> {
        (3usize..15).prop_flat_map(|n| {
            (prop::collection::vec((0..n, 1u32..20), 0..n), Just(n)).prop_map(|(killers, n)| {
                // victim k is killed by killers[k] (if any), guaranteeing
                // in-degree <= 1; killer < victim keeps the projection simple
                let mut rows = String::new();
                for (victim, &(killer, ep)) in killers.iter().enumerate() {
                    if killer < victim {
                        rows.push_str(&format!("1,{},N{killer},N{victim}\n", ep % 10 + 1));
                    }
                }
                for k in 0..n {
                    rows.push_str(&format!("2,1,,Z{k}\n"));
                }
                kills(&rows)
            })
        })
    }

    proptest! {
        #[test]
        fn death_check_agrees_or_sentinel(g in arb_kills(), t in 1u32..12) {
            let v = g.snapshot_before(t);
            let model = CommunityModel::detect(&v, 1.0, 1).unwrap();
            let n = g.node_count();
            for a in 0..n {
                for b in 0..n {
                    if a == b { continue; }
                    let (i, j) = (CharacterId::from_index(a), CharacterId::from_index(b));
                    let alive = v.in_degree(i).unwrap() == 0 && v.in_degree(j).unwrap() == 0;
                    let pairs: [(f64, f64); 3] = [
                        (preferential_attachment(&v, i, j, false).unwrap(), preferential_attachment(&v, i, j, true).unwrap()),
                        (adamic_adar(&v, i, j, false).unwrap(), adamic_adar(&v, i, j, true).unwrap()),
                        (community_index(&v, &model, i, j, false).unwrap(), community_index(&v, &model, i, j, true).unwrap()),
                    ];
                    for (plain, checked) in pairs {
                        if alive {
                            prop_assert_eq!(plain, checked);
                        } else {
                            prop_assert_eq!(checked, f64::NEG_INFINITY);
                        }
                        prop_assert!(plain.is_finite());
                    }
                    let c: f64 = community_index(&v, &model, i, j, false).unwrap();
                    prop_assert!((0.0..=1.0).contains(&c));
                }
            }
        }

        #[test]
        fn symmetric_indices(g in arb_kills(), t in 1u32..12) {
            let v = g.snapshot_before(t);
            let n = g.node_count();
            for a in 0..n {
                for b in a + 1..n {
                    let (i, j) = (CharacterId::from_index(a), CharacterId::from_index(b));
                    prop_assert_eq!(adamic_adar::<f64>(&v, i, j, false).unwrap(), adamic_adar::<f64>(&v, j, i, false).unwrap());
                    prop_assert_eq!(preferential_attachment::<f64>(&v, i, j, true).unwrap(), preferential_attachment::<f64>(&v, j, i, true).unwrap());
                    prop_assert_eq!(alive_index::<f64>(&v, i, j).unwrap(), alive_index::<f64>(&v, j, i).unwrap());
                }
            }
        }
    }
}
