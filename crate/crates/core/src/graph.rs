//! Semantic-tree, temporal and spatio-temporal graphs with 2-D layouts.
//!
//! A tree for one word in one slice has three layers: the word's
//! representative embedding, its sense centroids, and each sense's nearest
//! neighboring words. Temporal graphs join the trees of two periods with a
//! time edge; spatio-temporal graphs join two languages' temporal graphs
//! with a language edge. Node positions come from a joint PCA over every
//! embedding in the graph, so panels of one figure share a coordinate frame.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::cluster::ClusterSet;
use crate::detect::{ChangeReport, Period};
use crate::error::{Error, Result};
use crate::similarity::NeighborSet;
use crate::store::SliceId;
use crate::xlingual::XlingComparison;

/// Projects `vectors` onto the top two principal axes of their covariance.
///
/// Axes are ordered by descending eigenvalue and signed so that each axis'
/// largest-magnitude loading is positive.
pub fn pca2(vectors: &[Vec<f64>]) -> Result<Vec<[f64; 2]>> {
    let n = vectors.len();
    if n < 2 {
        return Err(Error::InvalidParameter(format!(
            "PCA needs at least 2 vectors, got {n}"
        )));
    }
    let d = vectors[0].len();
    if d == 0 {
        return Err(Error::InvalidParameter("PCA on zero-dimensional vectors".into()));
    }
    if let Some(v) = vectors.iter().find(|v| v.len() != d) {
        return Err(Error::DimensionMismatch {
            expected: d,
            got: v.len(),
        });
    }
    if vectors.iter().flatten().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("PCA input".into()));
    }
    let mean: Vec<f64> = (0..d)
        .map(|j| vectors.iter().map(|v| v[j]).sum::<f64>() / n as f64)
        .collect();
    let centered = DMatrix::from_fn(n, d, |i, j| vectors[i][j] - mean[j]);
    let cov = (centered.transpose() * &centered) / (n - 1) as f64;
    let eig = SymmetricEigen::new(cov);

    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));

    let axes: Vec<Vec<f64>> = order
        .iter()
        .take(2)
        .map(|&c| {
            let mut axis: Vec<f64> = eig.eigenvectors.column(c).iter().copied().collect();
            let lead = axis
                .iter()
                .enumerate()
                .fold((0usize, 0.0f64), |best, (i, &x)| {
                    if x.abs() > best.1 {
                        (i, x.abs())
                    } else {
                        best
                    }
                })
                .0;
            if axis[lead] < 0.0 {
                axis.iter_mut().for_each(|x| *x = -*x);
            }
            axis
        })
        .collect();

    Ok((0..n)
        .map(|i| {
            let row = centered.row(i);
            let mut out = [0.0; 2];
            for (k, axis) in axes.iter().enumerate() {
                out[k] = row.iter().zip(axis).map(|(a, b)| a * b).sum();
            }
            out
        })
        .collect())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Layer {
    Root,
    Sense,
    Neighbor,
}

impl Layer {
    pub fn depth(self) -> u8 {
        match self {
            Layer::Root => 0,
            Layer::Sense => 1,
            Layer::Neighbor => 2,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeStatus {
    #[default]
    Unchanged,
    Gained,
    Lost,
    ConsistentXling,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GraphNode {
    pub id: String,
    pub label: String,
    pub layer: Layer,
    pub coords: [f64; 2],
    pub status: NodeStatus,
    pub slice: SliceId,
    /// Sense index for sense nodes.
    pub sense: Option<usize>,
    /// Which period of a temporal graph the node belongs to.
    pub period: Option<Period>,
    pub embedding: Vec<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EdgeStyle {
    Tree,
    Time,
    Language,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GraphEdge {
    pub from: String,
    pub to: String,
    pub style: EdgeStyle,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GraphKind {
    Tree,
    Temporal,
    Spatiotemporal,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SemanticGraph {
    pub word: String,
    pub kind: GraphKind,
    pub nodes: Vec<GraphNode>,
    pub edges: Vec<GraphEdge>,
}

impl SemanticGraph {
    pub fn node(&self, id: &str) -> Option<&GraphNode> {
        self.nodes.iter().find(|n| n.id == id)
    }

    fn root_of(&self, slice: &SliceId) -> Result<&GraphNode> {
        self.nodes
            .iter()
            .find(|n| n.layer == Layer::Root && &n.slice == slice)
            .ok_or_else(|| Error::ShapeMismatch(format!("graph has no root for {slice}")))
    }

    fn slice_of(&self, period: Period) -> Result<SliceId> {
        self.nodes
            .iter()
            .find(|n| n.layer == Layer::Root && n.period == Some(period))
            .map(|n| n.slice.clone())
            .ok_or_else(|| Error::ShapeMismatch(format!("graph has no {period:?} root")))
    }

    /// Checks that edge endpoints exist, ids are unique and coordinates finite.
    pub fn validate(&self) -> Result<()> {
        let mut ids = BTreeMap::new();
        for n in &self.nodes {
            if ids.insert(n.id.as_str(), ()).is_some() {
                return Err(Error::ShapeMismatch(format!("duplicate node id {}", n.id)));
            }
            if n.coords.iter().any(|c| !c.is_finite()) {
                return Err(Error::NonFinite(format!("coordinates of {}", n.id)));
            }
        }
        for e in &self.edges {
            if !ids.contains_key(e.from.as_str()) || !ids.contains_key(e.to.as_str()) {
                return Err(Error::ShapeMismatch(format!(
                    "edge {} -> {} references a missing node",
                    e.from, e.to
                )));
            }
        }
        Ok(())
    }

    fn relayout(&mut self) -> Result<()> {
        let embeddings: Vec<Vec<f64>> = self.nodes.iter().map(|n| n.embedding.clone()).collect();
        for (node, xy) in self.nodes.iter_mut().zip(pca2(&embeddings)?) {
            node.coords = xy;
        }
        Ok(())
    }

    fn merge(&mut self, other: SemanticGraph) -> Result<()> {
        for n in &other.nodes {
            if self.node(&n.id).is_some() {
                return Err(Error::ShapeMismatch(format!(
                    "node id {} appears in both graphs; slices must differ",
                    n.id
                )));
            }
        }
        self.nodes.extend(other.nodes);
        self.edges.extend(other.edges);
        Ok(())
    }
}

fn node_id(slice: &SliceId, layer: Layer, idx: usize) -> String {
    format!("{}_{}_{}_{}", slice.language, slice.period, layer.depth(), idx)
}

/// Three-layer tree: root, one node per sense, `k` neighbor nodes per sense.
pub fn build_tree(
    word: &str,
    root_embedding: &[f64],
    clusters: &ClusterSet,
    neighbor_sets: &[NeighborSet],
) -> Result<SemanticGraph> {
    if clusters.is_empty() {
        return Err(Error::InvalidParameter(format!("`{word}` has no sense clusters")));
    }
    if neighbor_sets.len() != clusters.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} senses but {} neighbor sets",
            clusters.len(),
            neighbor_sets.len()
        )));
    }
    let slice = clusters
        .slice
        .clone()
        .ok_or_else(|| Error::InvalidParameter("cluster set has no slice".into()))?;
    let root_id = node_id(&slice, Layer::Root, 0);
    let mut nodes = vec![GraphNode {
        id: root_id.clone(),
        label: word.to_string(),
        layer: Layer::Root,
        coords: [0.0; 2],
        status: NodeStatus::Unchanged,
        slice: slice.clone(),
        sense: None,
        period: None,
        embedding: root_embedding.to_vec(),
    }];
    let mut edges = Vec::new();
    let mut neighbor_idx = 0;
    for (i, (cluster, nset)) in clusters.clusters.iter().zip(neighbor_sets).enumerate() {
        let sense_id = node_id(&slice, Layer::Sense, i);
        nodes.push(GraphNode {
            id: sense_id.clone(),
            label: format!("{word}#{i}"),
            layer: Layer::Sense,
            coords: [0.0; 2],
            status: NodeStatus::Unchanged,
            slice: slice.clone(),
            sense: Some(i),
            period: None,
            embedding: cluster.centroid.clone(),
        });
        edges.push(GraphEdge {
            from: root_id.clone(),
            to: sense_id.clone(),
            style: EdgeStyle::Tree,
        });
        for nb in &nset.neighbors {
            let id = node_id(&slice, Layer::Neighbor, neighbor_idx);
            neighbor_idx += 1;
            nodes.push(GraphNode {
                id: id.clone(),
                label: nb.word.clone(),
                layer: Layer::Neighbor,
                coords: [0.0; 2],
                status: NodeStatus::Unchanged,
                slice: slice.clone(),
                sense: None,
                period: None,
                embedding: nb.embedding.clone(),
            });
            edges.push(GraphEdge {
                from: sense_id.clone(),
                to: id,
                style: EdgeStyle::Tree,
            });
        }
    }
    let mut graph = SemanticGraph {
        word: word.to_string(),
        kind: GraphKind::Tree,
        nodes,
        edges,
    };
    graph.relayout()?;
    Ok(graph)
}

fn check_senses(graph: &SemanticGraph, indices: &[usize], what: &str) -> Result<()> {
    let senses = graph.nodes.iter().filter(|n| n.layer == Layer::Sense).count();
    match indices.iter().find(|&&i| i >= senses) {
        Some(i) => Err(Error::ShapeMismatch(format!(
            "{what} sense {i} out of range ({senses} senses)"
        ))),
        None => Ok(()),
    }
}

/// Joins two trees of one word with a time edge and marks gained/lost senses.
pub fn build_temporal(
    word: &str,
    tree_t0: &SemanticGraph,
    tree_t1: &SemanticGraph,
    report: &ChangeReport,
) -> Result<SemanticGraph> {
    check_senses(tree_t0, &report.lost, "lost")?;
    check_senses(tree_t1, &report.gained, "gained")?;
    let mut early = tree_t0.clone();
    let mut late = tree_t1.clone();
    for n in &mut early.nodes {
        n.period = Some(Period::Earlier);
        if n.layer == Layer::Sense && n.sense.is_some_and(|s| report.lost.contains(&s)) {
            n.status = NodeStatus::Lost;
        }
    }
    for n in &mut late.nodes {
        n.period = Some(Period::Later);
        if n.layer == Layer::Sense && n.sense.is_some_and(|s| report.gained.contains(&s)) {
            n.status = NodeStatus::Gained;
        }
    }
    let from = early.nodes[0].id.clone();
    let to = late.nodes[0].id.clone();
    let mut graph = SemanticGraph {
        word: word.to_string(),
        kind: GraphKind::Temporal,
        nodes: Vec::new(),
        edges: Vec::new(),
    };
    graph.merge(early)?;
    graph.merge(late)?;
    graph.edges.push(GraphEdge {
        from,
        to,
        style: EdgeStyle::Time,
    });
    graph.relayout()?;
    Ok(graph)
}

/// Joins two languages' temporal graphs with a language edge between their
/// later-period roots and marks senses that changed consistently.
pub fn build_spatiotemporal(
    pair: (&str, &str),
    temporal_l1: &SemanticGraph,
    temporal_l2: &SemanticGraph,
    cmp: &XlingComparison,
) -> Result<SemanticGraph> {
    let mark = |g: &mut SemanticGraph, period: Period, senses: &[usize]| -> Result<()> {
        let slice = g.slice_of(period)?;
        for &s in senses {
            let node = g
                .nodes
                .iter_mut()
                .find(|n| n.layer == Layer::Sense && n.slice == slice && n.sense == Some(s))
                .ok_or_else(|| Error::ShapeMismatch(format!("no sense {s} in {slice}")))?;
            node.status = NodeStatus::ConsistentXling;
        }
        Ok(())
    };
    let mut g1 = temporal_l1.clone();
    let mut g2 = temporal_l2.clone();
    let gains1: Vec<usize> = cmp.consistent_gains.iter().map(|p| p.l1).collect();
    let gains2: Vec<usize> = cmp.consistent_gains.iter().map(|p| p.l2).collect();
    let loss1: Vec<usize> = cmp.consistent_losses.iter().map(|p| p.l1).collect();
    let loss2: Vec<usize> = cmp.consistent_losses.iter().map(|p| p.l2).collect();
    mark(&mut g1, Period::Later, &gains1)?;
    mark(&mut g2, Period::Later, &gains2)?;
    mark(&mut g1, Period::Earlier, &loss1)?;
    mark(&mut g2, Period::Earlier, &loss2)?;

    let from = g1.root_of(&g1.slice_of(Period::Later)?)?.id.clone();
    let to = g2.root_of(&g2.slice_of(Period::Later)?)?.id.clone();
    let mut graph = SemanticGraph {
        word: format!("{}/{}", pair.0, pair.1),
        kind: GraphKind::Spatiotemporal,
        nodes: Vec::new(),
        edges: Vec::new(),
    };
    graph.merge(g1)?;
    graph.merge(g2)?;
    graph.edges.push(GraphEdge {
        from,
        to,
        style: EdgeStyle::Language,
    });
    graph.relayout()?;
    Ok(graph)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Format {
    Json,
    Dot,
}

impl std::str::FromStr for Format {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "json" => Ok(Format::Json),
            "dot" => Ok(Format::Dot),
            other => Err(Error::InvalidParameter(format!("unknown format `{other}`"))),
        }
    }
}

#[derive(Serialize)]
struct JsonNode<'a> {
    id: &'a str,
    label: &'a str,
    layer: u8,
    x: f64,
    y: f64,
    status: NodeStatus,
    language: &'a str,
    period: &'a str,
}

#[derive(Serialize)]
struct JsonGraph<'a> {
    kind: GraphKind,
    nodes: Vec<JsonNode<'a>>,
    edges: &'a [GraphEdge],
}

fn dot_escape(s: &str) -> String {
    s.replace('\\', "\\\\").replace('"', "\\\"").replace('\n', "\\n")
}

/// Serializes a graph. Output is a pure function of the graph.
pub fn emit(graph: &SemanticGraph, format: Format) -> Vec<u8> {
    match format {
        Format::Json => {
            let doc = JsonGraph {
                kind: graph.kind,
                nodes: graph
                    .nodes
                    .iter()
                    .map(|n| JsonNode {
                        id: &n.id,
                        label: &n.label,
                        layer: n.layer.depth(),
                        x: n.coords[0],
                        y: n.coords[1],
                        status: n.status,
                        language: &n.slice.language,
                        period: &n.slice.period,
                    })
                    .collect(),
                edges: &graph.edges,
            };
            let mut s = serde_json::to_string_pretty(&doc).expect("graph serializes");
            s.push('\n');
            s.into_bytes()
        }
        Format::Dot => {
            let mut s = String::new();
            let _ = writeln!(s, "digraph \"{}\" {{", dot_escape(&graph.word));
            let _ = writeln!(s, "  node [shape=ellipse];");
            for n in &graph.nodes {
                let style = match n.status {
                    NodeStatus::Unchanged => "color=black",
                    NodeStatus::Gained => "color=blue, fontcolor=blue",
                    NodeStatus::Lost => "color=gray, style=dashed",
                    NodeStatus::ConsistentXling => "color=black, fontcolor=orange",
                };
                let _ = writeln!(
                    s,
                    "  \"{}\" [label=\"{}\", {}, pos=\"{:.6},{:.6}!\"];",
                    dot_escape(&n.id),
                    dot_escape(&n.label),
                    style,
                    n.coords[0],
                    n.coords[1]
                );
            }
            for e in &graph.edges {
                let style = match e.style {
                    EdgeStyle::Tree => "style=solid",
                    EdgeStyle::Time => "style=bold, dir=none",
                    EdgeStyle::Language => "style=dotted, dir=none",
                };
                let _ = writeln!(
                    s,
                    "  \"{}\" -> \"{}\" [{}];",
                    dot_escape(&e.from),
                    dot_escape(&e.to),
                    style
                );
            }
            s.push_str("}\n");
            s.into_bytes()
        }
    }
}
