//! Link-prediction anomaly detector: a two-layer graph convolutional
//! autoencoder trained on the normal edges of a resource-interaction graph.
//! Edges whose reconstruction score falls below a threshold are flagged
//! abnormal. Training is full-batch gradient descent with hand-derived
//! gradients, deterministic under a fixed seed.

use std::collections::{HashMap, HashSet};

use ndarray::{Array2, Axis};
use rand::Rng;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::eval::ConfusionMatrix;
use crate::graph::{EdgeKey, NodeType, RIGraph};
use crate::label::EdgeLabel;
use crate::segment::{edge_vectors, Delta};

#[derive(Debug, Error)]
pub enum GaeError {
    #[error("need at least 2 normal edges to train, found {0}")]
    TooFewNormalEdges(usize),
    #[error("node index {0} out of range (graph has {1} nodes)")]
    UnknownNode(usize, usize),
    #[error("loss became non-finite at epoch {0}; lower the learning rate")]
    NonFinite(usize),
    #[error("bad configuration: {0}")]
    BadConfig(&'static str),
    #[error("feature extraction failed: {0}")]
    Segment(#[from] crate::segment::SegmentError),
    #[error("checkpoint malformed: {0}")]
    Checkpoint(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AttributeMode {
    /// One-hot node type plus summed incident syscall-count vectors.
    NodeAndEdge,
    /// One-hot node type only (ablation).
    NodeOnly,
}

#[derive(Debug, Clone, Copy)]
pub struct FeatureOptions {
    pub mode: AttributeMode,
    /// log1p then per-column max scaling of the syscall-count block.
    pub scale: bool,
}

impl Default for FeatureOptions {
    fn default() -> Self {
        FeatureOptions {
            mode: AttributeMode::NodeAndEdge,
            scale: true,
        }
    }
}

/// Undirected view of a resource-interaction graph with node features,
/// ready for link prediction.
#[derive(Debug, Clone)]
pub struct LinkPredGraph {
    pub node_ids: Vec<String>,
    pub index: HashMap<String, usize>,
    /// Node feature matrix, one row per node.
    pub x: Array2<f64>,
    /// Unique undirected pairs in first-seen order, endpoints ordered
    /// (low index, high index).
    pub edges: Vec<(usize, usize)>,
    /// The directed edge keys collapsed into each undirected pair.
    pub directed: Vec<Vec<EdgeKey>>,
}

/// Builds node features and the undirected edge list. The aggregate
/// syscall-count vector of every edge is added to the feature rows of both
/// endpoints.
pub fn to_linkpred(
    g: &RIGraph,
    vector_len: usize,
    opts: FeatureOptions,
) -> Result<LinkPredGraph, GaeError> {
    let node_ids: Vec<String> = g.nodes.keys().cloned().collect();
    let index: HashMap<String, usize> = node_ids
        .iter()
        .enumerate()
        .map(|(i, id)| (id.clone(), i))
        .collect();
    let edge_cols = match opts.mode {
        AttributeMode::NodeAndEdge => vector_len,
        AttributeMode::NodeOnly => 0,
    };
    let mut x = Array2::<f64>::zeros((node_ids.len(), NodeType::COUNT + edge_cols));
    for (i, id) in node_ids.iter().enumerate() {
        x[(i, g.nodes[id].node_type.onehot_index())] = 1.0;
    }
    if edge_cols > 0 {
        let vecs = edge_vectors(g, Delta::Infinite, vector_len)?;
        for ((from, to), list) in &vecs {
            let counts = &list[0].counts;
            for endpoint in [from, to] {
                let row = index[endpoint];
                for (j, &c) in counts.iter().enumerate() {
                    x[(row, NodeType::COUNT + j)] += c as f64;
                }
            }
        }
        if opts.scale {
            for mut col in x
                .slice_mut(ndarray::s![.., NodeType::COUNT..])
                .axis_iter_mut(Axis(1))
            {
                col.mapv_inplace(|v| (1.0 + v).ln());
                let max = col.iter().cloned().fold(0.0f64, f64::max);
                if max > 0.0 {
                    col.mapv_inplace(|v| v / max);
                }
            }
        }
    }

    let mut edges = Vec::new();
    let mut directed: Vec<Vec<EdgeKey>> = Vec::new();
    let mut seen: HashMap<(usize, usize), usize> = HashMap::new();
    for key in g.edges.keys() {
        let (u, v) = (index[&key.0], index[&key.1]);
        let pair = (u.min(v), u.max(v));
        match seen.get(&pair) {
            Some(&slot) => directed[slot].push(key.clone()),
            None => {
                seen.insert(pair, edges.len());
                edges.push(pair);
                directed.push(vec![key.clone()]);
            }
        }
    }
    Ok(LinkPredGraph {
        node_ids,
        index,
        x,
        edges,
        directed,
    })
}

/// Labels for the undirected pairs: abnormal if any collapsed directed edge
/// is abnormal.
pub fn undirected_labels(
    lp: &LinkPredGraph,
    labels: &indexmap::IndexMap<EdgeKey, EdgeLabel>,
) -> Vec<EdgeLabel> {
    lp.directed
        .iter()
        .map(|keys| {
            if keys.iter().any(|k| labels.get(k) == Some(&EdgeLabel::Abnormal)) {
                EdgeLabel::Abnormal
            } else {
                EdgeLabel::Normal
            }
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct EdgeSplit {
    /// Normal edges the model trains on (also the message-passing edges).
    pub train: Vec<(usize, usize)>,
    /// Held-out normal edges plus every abnormal edge.
    pub test: Vec<(usize, usize)>,
    pub test_labels: Vec<EdgeLabel>,
}

/// Splits edges for evaluation: `train_frac` of the normal edges train the
/// model; the rest of the normal edges and all abnormal edges are scored.
pub fn split_edges(
    lp: &LinkPredGraph,
    labels: &[EdgeLabel],
    train_frac: f64,
    seed: u64,
) -> Result<EdgeSplit, GaeError> {
    if !(0.0..1.0).contains(&train_frac) || train_frac <= 0.0 {
        return Err(GaeError::BadConfig("train_frac must be in (0, 1)"));
    }
    assert_eq!(lp.edges.len(), labels.len());
    let normal: Vec<usize> = (0..lp.edges.len())
        .filter(|&i| labels[i] == EdgeLabel::Normal)
        .collect();
    if normal.len() < 2 {
        return Err(GaeError::TooFewNormalEdges(normal.len()));
    }
    let mut order = normal.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    order.shuffle(&mut rng);
    let n_train = ((normal.len() as f64 * train_frac).round() as usize).clamp(1, normal.len() - 1);
    let train: Vec<(usize, usize)> = order[..n_train].iter().map(|&i| lp.edges[i]).collect();
    let train_set: HashSet<usize> = order[..n_train].iter().copied().collect();
    let mut test = Vec::new();
    let mut test_labels = Vec::new();
    for (i, &edge) in lp.edges.iter().enumerate() {
        if !train_set.contains(&i) {
            test.push(edge);
            test_labels.push(labels[i]);
        }
    }
    Ok(EdgeSplit {
        train,
        test,
        test_labels,
    })
}

/// Symmetrically normalized adjacency with self loops, built from the given
/// undirected edges only.
pub fn normalized_adjacency(n: usize, edges: &[(usize, usize)]) -> Array2<f64> {
    let mut a = Array2::<f64>::eye(n);
    for &(u, v) in edges {
        a[(u, v)] = 1.0;
        a[(v, u)] = 1.0;
    }
    let deg: Vec<f64> = a.sum_axis(Axis(1)).to_vec();
    for ((i, j), val) in a.indexed_iter_mut() {
        *val /= (deg[i] * deg[j]).sqrt();
    }
    a
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Numerically stable binary cross-entropy on a logit.
fn bce_with_logit(logit: f64, y: f64) -> f64 {
    logit.max(0.0) - logit * y + (1.0 + (-logit.abs()).exp()).ln()
}

/// Full forward/backward pass: returns the mean BCE loss over the given
/// positive and negative pairs and the gradients of both weight matrices.
pub fn loss_and_grads(
    x: &Array2<f64>,
    a_hat: &Array2<f64>,
    w0: &Array2<f64>,
    w1: &Array2<f64>,
    pos: &[(usize, usize)],
    neg: &[(usize, usize)],
) -> (f64, Array2<f64>, Array2<f64>) {
    let ax = a_hat.dot(x);
    let h1 = ax.dot(w0);
    let h1r = h1.mapv(|v| v.max(0.0));
    let ah1r = a_hat.dot(&h1r);
    let z = ah1r.dot(w1);

    let n_samples = (pos.len() + neg.len()) as f64;
    let mut loss = 0.0;
    let mut dz = Array2::<f64>::zeros(z.raw_dim());
    let samples = pos
        .iter()
        .map(|&e| (e, 1.0))
        .chain(neg.iter().map(|&e| (e, 0.0)));
    for ((u, v), y) in samples {
        let logit = z.row(u).dot(&z.row(v));
        loss += bce_with_logit(logit, y);
        let g = (sigmoid(logit) - y) / n_samples;
        let zv = z.row(v).to_owned();
        let zu = z.row(u).to_owned();
        dz.row_mut(u).scaled_add(g, &zv);
        dz.row_mut(v).scaled_add(g, &zu);
    }
    loss /= n_samples;

    let dw1 = ah1r.t().dot(&dz);
    let dh1r = a_hat.t().dot(&dz).dot(&w1.t());
    let mask = h1.mapv(|v| if v > 0.0 { 1.0 } else { 0.0 });
    let dh1 = dh1r * &mask;
    let dw0 = ax.t().dot(&dh1);
    (loss, dw0, dw1)
}

#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub hidden: usize,
    pub embed: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 1000,
            learning_rate: 0.01,
            hidden: 32,
            embed: 16,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrainedGae {
    pub w0: Array2<f64>,
    pub w1: Array2<f64>,
    /// Final node embeddings under the training-edge adjacency.
    pub z: Array2<f64>,
    pub loss_trace: Vec<f64>,
}

fn glorot(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Array2<f64> {
    let bound = (6.0 / (rows + cols) as f64).sqrt();
    Array2::from_shape_fn((rows, cols), |_| rng.random_range(-bound..bound))
}

fn sample_negatives(
    rng: &mut ChaCha8Rng,
    n_nodes: usize,
    count: usize,
    forbidden: &HashSet<(usize, usize)>,
) -> Vec<(usize, usize)> {
    let mut out = Vec::with_capacity(count);
    let mut attempts = 0usize;
    while out.len() < count && attempts < count * 200 {
        attempts += 1;
        let u = rng.random_range(0..n_nodes);
        let v = rng.random_range(0..n_nodes);
        if u == v {
            continue;
        }
        let pair = (u.min(v), u.max(v));
        if forbidden.contains(&pair) {
            continue;
        }
        out.push(pair);
    }
    out
}

/// Trains on the given edges only; negatives are resampled uniformly each
/// epoch at a 1:1 ratio with the positives.
pub fn train(
    lp: &LinkPredGraph,
    train_edges: &[(usize, usize)],
    cfg: &TrainConfig,
) -> Result<TrainedGae, GaeError> {
    if train_edges.is_empty() {
        return Err(GaeError::TooFewNormalEdges(0));
    }
    if cfg.hidden == 0 || cfg.embed == 0 || cfg.epochs == 0 {
        return Err(GaeError::BadConfig("epochs and layer widths must be > 0"));
    }
    let n = lp.node_ids.len();
    for &(u, v) in train_edges {
        if u >= n || v >= n {
            return Err(GaeError::UnknownNode(u.max(v), n));
        }
    }
    let a_hat = normalized_adjacency(n, train_edges);
    let d = lp.x.ncols();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut w0 = glorot(&mut rng, d, cfg.hidden);
    let mut w1 = glorot(&mut rng, cfg.hidden, cfg.embed);
    // negatives come from true non-edges: every observed pair is excluded,
    // not just the training split, so held-out edges are not pushed to zero
    let forbidden: HashSet<(usize, usize)> = lp
        .edges
        .iter()
        .chain(train_edges.iter())
        .copied()
        .collect();

    let mut loss_trace = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        let neg = sample_negatives(&mut rng, n, train_edges.len(), &forbidden);
        let (loss, dw0, dw1) = loss_and_grads(&lp.x, &a_hat, &w0, &w1, train_edges, &neg);
        if !loss.is_finite() {
            return Err(GaeError::NonFinite(epoch));
        }
        w0.scaled_add(-cfg.learning_rate, &dw0);
        w1.scaled_add(-cfg.learning_rate, &dw1);
        loss_trace.push(loss);
    }

    let h1r = a_hat.dot(&lp.x).dot(&w0).mapv(|v| v.max(0.0));
    let z = a_hat.dot(&h1r).dot(&w1);
    Ok(TrainedGae {
        w0,
        w1,
        z,
        loss_trace,
    })
}

/// Reconstruction probability of a node pair; symmetric in its arguments.
pub fn score_pair(t: &TrainedGae, u: usize, v: usize) -> Result<f64, GaeError> {
    let n = t.z.nrows();
    if u >= n || v >= n {
        return Err(GaeError::UnknownNode(u.max(v), n));
    }
    Ok(sigmoid(t.z.row(u).dot(&t.z.row(v))))
}

pub fn score_edges(t: &TrainedGae, edges: &[(usize, usize)]) -> Result<Vec<f64>, GaeError> {
    edges.iter().map(|&(u, v)| score_pair(t, u, v)).collect()
}

#[derive(Debug, Clone, Copy)]
pub enum ThresholdRule {
    Fixed(f64),
    /// Pick the threshold on a 0.01 grid over [0, 1] that maximizes F1;
    /// ties go to the smallest threshold.
    Sweep,
}

#[derive(Debug, Clone)]
pub struct Classification {
    pub threshold: f64,
    pub predictions: Vec<EdgeLabel>,
    pub confusion: ConfusionMatrix,
}

fn confusion_at(scores: &[f64], labels: &[EdgeLabel], threshold: f64) -> ConfusionMatrix {
    let mut cm = ConfusionMatrix::default();
    for (&s, &l) in scores.iter().zip(labels) {
        let predicted_abnormal = s < threshold;
        match (predicted_abnormal, l) {
            (true, EdgeLabel::Abnormal) => cm.tp += 1,
            (true, EdgeLabel::Normal) => cm.fp += 1,
            (false, EdgeLabel::Abnormal) => cm.fn_ += 1,
            (false, EdgeLabel::Normal) => cm.tn += 1,
        }
    }
    cm
}

/// An edge is predicted abnormal when its score falls below the threshold
/// (poorly reconstructed links are the suspicious ones).
pub fn classify(scores: &[f64], labels: &[EdgeLabel], rule: ThresholdRule) -> Classification {
    assert_eq!(scores.len(), labels.len());
    let threshold = match rule {
        ThresholdRule::Fixed(t) => t,
        ThresholdRule::Sweep => {
            let mut best = (0.0f64, f64::NEG_INFINITY);
            for i in 0..=100 {
                let t = i as f64 / 100.0;
                let f1 = crate::eval::metrics(&confusion_at(scores, labels, t)).f1;
                if f1 > best.1 {
                    best = (t, f1);
                }
            }
            best.0
        }
    };
    let cm = confusion_at(scores, labels, threshold);
    let predictions = scores
        .iter()
        .map(|&s| {
            if s < threshold {
                EdgeLabel::Abnormal
            } else {
                EdgeLabel::Normal
            }
        })
        .collect();
    Classification {
        threshold,
        predictions,
        confusion: cm,
    }
}

#[derive(Serialize, Deserialize)]
struct MatrixDoc {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl MatrixDoc {
    fn from(a: &Array2<f64>) -> Self {
        MatrixDoc {
            rows: a.nrows(),
            cols: a.ncols(),
            data: a.iter().cloned().collect(),
        }
    }

    fn to_array(&self) -> Result<Array2<f64>, GaeError> {
        Array2::from_shape_vec((self.rows, self.cols), self.data.clone())
            .map_err(|e| GaeError::Checkpoint(e.to_string()))
    }
}

#[derive(Serialize, Deserialize)]
struct CheckpointDoc {
    w0: MatrixDoc,
    w1: MatrixDoc,
    z: MatrixDoc,
}

pub fn save_checkpoint(t: &TrainedGae) -> String {
    let doc = CheckpointDoc {
        w0: MatrixDoc::from(&t.w0),
        w1: MatrixDoc::from(&t.w1),
        z: MatrixDoc::from(&t.z),
    };
    serde_json::to_string_pretty(&doc).expect("checkpoint serialization")
}

pub fn load_checkpoint(json: &str) -> Result<TrainedGae, GaeError> {
    let doc: CheckpointDoc =
        serde_json::from_str(json).map_err(|e| GaeError::Checkpoint(e.to_string()))?;
    Ok(TrainedGae {
        w0: doc.w0.to_array()?,
        w1: doc.w1.to_array()?,
        z: doc.z.to_array()?,
        loss_trace: Vec::new(),
    })
}
