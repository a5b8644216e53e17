//! Whole-graph anomaly detection by sketch clustering: each graph becomes a
//! bag of bounded-length traversal strings, graphs are clustered with
//! k-medoids under cosine distance, and a graph is abnormal when it falls
//! outside every cluster's slack-scaled radius.

use std::collections::HashMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::audit::AuditEvent;
use crate::eval::{metrics, ConfusionMatrix};
use crate::graph::{build_graph, BuildOptions, GraphMode, RIGraph};
use crate::label::AttackWindow;

#[derive(Debug, Error)]
pub enum ClusterError {
    #[error("no training graphs")]
    NoTrainGraphs,
    #[error("no feasible candidate in the search grid")]
    EmptyGrid,
    #[error("k must satisfy 1 <= k <= number of points (k={0}, n={1})")]
    BadK(usize, usize),
    #[error("need at least {0} logs for {1}-fold cross-validation")]
    TooFewLogs(usize, usize),
}

/// Shingle-count vector of one graph.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct GraphSketch {
    pub shingles: HashMap<String, f64>,
}

impl GraphSketch {
    pub fn is_empty(&self) -> bool {
        self.shingles.is_empty()
    }
}

/// Per-node traversal string: the node's type character followed by
/// `<syscall>;<target type char>` for every outgoing interaction in time
/// order, chopped into chunks of at most `max_chunk` characters. A process
/// that ran one execve(59) on a file yields "P59;F"; a leaf user node yields
/// just "U".
pub fn sketch(g: &RIGraph, max_chunk: usize) -> GraphSketch {
    assert!(max_chunk >= 1);
    let mut shingles: HashMap<String, f64> = HashMap::new();
    for (id, node) in &g.nodes {
        // merge this node's outgoing interactions across edges, time-ordered
        let mut out: Vec<(crate::time::Timestamp, u32, char)> = Vec::new();
        for ((from, to), edge) in &g.edges {
            if from != id {
                continue;
            }
            let tc = g.nodes[to].node_type.type_char();
            for &(ts, sys) in &edge.interactions {
                out.push((ts, sys, tc));
            }
        }
        out.sort_by_key(|&(ts, sys, tc)| (ts, sys, tc));
        let mut s = String::new();
        s.push(node.node_type.type_char());
        for (_, sys, tc) in out {
            s.push_str(&sys.to_string());
            s.push(';');
            s.push(tc);
        }
        let chars: Vec<char> = s.chars().collect();
        for chunk in chars.chunks(max_chunk) {
            let piece: String = chunk.iter().collect();
            *shingles.entry(piece).or_insert(0.0) += 1.0;
        }
    }
    GraphSketch { shingles }
}

/// Cosine distance 1 - cos(a, b). Two empty sketches are identical
/// (distance 0); an empty sketch is maximally far from a non-empty one.
pub fn cosine_distance(a: &GraphSketch, b: &GraphSketch) -> f64 {
    match (a.is_empty(), b.is_empty()) {
        (true, true) => return 0.0,
        (true, false) | (false, true) => return 1.0,
        _ => {}
    }
    let (small, large) = if a.shingles.len() <= b.shingles.len() {
        (a, b)
    } else {
        (b, a)
    };
    let dot: f64 = small
        .shingles
        .iter()
        .filter_map(|(k, &v)| large.shingles.get(k).map(|&w| v * w))
        .sum();
    let norm = |s: &GraphSketch| s.shingles.values().map(|v| v * v).sum::<f64>().sqrt();
    1.0 - dot / (norm(a) * norm(b))
}

fn distance_matrix(points: &[GraphSketch]) -> Vec<Vec<f64>> {
    let n = points.len();
    let mut d = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in i + 1..n {
            let dist = cosine_distance(&points[i], &points[j]);
            d[i][j] = dist;
            d[j][i] = dist;
        }
    }
    d
}

fn assignment_cost(d: &[Vec<f64>], medoids: &[usize]) -> f64 {
    (0..d.len())
        .map(|i| {
            medoids
                .iter()
                .map(|&m| d[i][m])
                .fold(f64::INFINITY, f64::min)
        })
        .sum()
}

/// Subset-count cap below which medoid selection is solved exactly.
const EXACT_SEARCH_LIMIT: u128 = 20_000;

fn combinations(n: usize, k: usize) -> u128 {
    let mut c: u128 = 1;
    for i in 0..k {
        c = c.saturating_mul((n - i) as u128) / (i + 1) as u128;
        if c > EXACT_SEARCH_LIMIT {
            return c;
        }
    }
    c
}

/// Exhaustive search over all k-subsets; optimal by construction.
fn exact_medoids(d: &[Vec<f64>], n: usize, k: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..k).collect();
    let mut best = (idx.clone(), assignment_cost(d, &idx));
    loop {
        // advance to the next k-combination of 0..n
        let mut i = k;
        loop {
            if i == 0 {
                return best.0;
            }
            i -= 1;
            if idx[i] != i + n - k {
                idx[i] += 1;
                for j in i + 1..k {
                    idx[j] = idx[j - 1] + 1;
                }
                break;
            }
        }
        let cost = assignment_cost(d, &idx);
        if cost < best.1 {
            best = (idx.clone(), cost);
        }
    }
}

/// Deterministic k-medoids. Small instances are solved exactly; larger ones
/// use greedy seeding followed by best-improvement swaps until convergence.
/// Returns medoid indices and the final total assignment cost.
pub fn k_medoids(points: &[GraphSketch], k: usize) -> Result<(Vec<usize>, f64), ClusterError> {
    let n = points.len();
    if k == 0 || k > n {
        return Err(ClusterError::BadK(k, n));
    }
    let d = distance_matrix(points);
    if combinations(n, k) <= EXACT_SEARCH_LIMIT {
        let medoids = exact_medoids(&d, n, k);
        let cost = assignment_cost(&d, &medoids);
        return Ok((medoids, cost));
    }
    let mut medoids: Vec<usize> = Vec::with_capacity(k);
    for _ in 0..k {
        let mut best: Option<(usize, f64)> = None;
        for cand in 0..n {
            if medoids.contains(&cand) {
                continue;
            }
            medoids.push(cand);
            let cost = assignment_cost(&d, &medoids);
            medoids.pop();
            if best.is_none_or(|(_, c)| cost < c) {
                best = Some((cand, cost));
            }
        }
        medoids.push(best.expect("k <= n leaves a candidate").0);
    }

    let mut cost = assignment_cost(&d, &medoids);
    loop {
        let mut best_swap: Option<(usize, usize, f64)> = None;
        for mi in 0..k {
            for h in 0..n {
                if medoids.contains(&h) {
                    continue;
                }
                let saved = medoids[mi];
                medoids[mi] = h;
                let c = assignment_cost(&d, &medoids);
                medoids[mi] = saved;
                if c < cost - 1e-15 && best_swap.is_none_or(|(_, _, bc)| c < bc) {
                    best_swap = Some((mi, h, c));
                }
            }
        }
        match best_swap {
            Some((mi, h, c)) => {
                medoids[mi] = h;
                cost = c;
            }
            None => break,
        }
    }
    medoids.sort_unstable();
    let final_cost = assignment_cost(&d, &medoids);
    Ok((medoids, final_cost))
}

#[derive(Debug, Clone)]
pub struct ClusterModel {
    pub max_chunk: usize,
    pub k: usize,
    pub slack: f64,
    pub medoids: Vec<GraphSketch>,
    /// slack * max member distance per cluster.
    pub radii: Vec<f64>,
}

impl ClusterModel {
    /// Abnormal when the sketch is outside every cluster's radius. Returns
    /// the verdict and the distance to the nearest medoid.
    pub fn predict(&self, s: &GraphSketch) -> (bool, f64) {
        let mut nearest = f64::INFINITY;
        let mut inside = false;
        for (m, &r) in self.medoids.iter().zip(&self.radii) {
            let dist = cosine_distance(s, m);
            if dist <= r {
                inside = true;
            }
            nearest = nearest.min(dist);
        }
        (!inside, nearest)
    }
}

#[derive(Debug, Clone)]
pub struct CandidateGrid {
    pub max_chunks: Vec<usize>,
    pub ks: Vec<usize>,
    pub slacks: Vec<f64>,
}

impl Default for CandidateGrid {
    fn default() -> Self {
        CandidateGrid {
            max_chunks: (10..=50).step_by(2).collect(),
            ks: (1..=5).collect(),
            slacks: vec![1.0, 1.1, 1.25, 1.5],
        }
    }
}

#[derive(Debug, Clone)]
pub struct FitReport {
    pub model: ClusterModel,
    pub validation_false_positives: usize,
}

fn build_model(
    train: &[GraphSketch],
    medoid_idx: &[usize],
    max_chunk: usize,
    k: usize,
    slack: f64,
) -> ClusterModel {
    let mut radii = vec![0.0f64; medoid_idx.len()];
    for s in train {
        let (cluster, dist) = medoid_idx
            .iter()
            .enumerate()
            .map(|(c, &m)| (c, cosine_distance(s, &train[m])))
            .min_by(|a, b| a.1.partial_cmp(&b.1).unwrap())
            .unwrap();
        radii[cluster] = radii[cluster].max(dist);
    }
    ClusterModel {
        max_chunk,
        k,
        slack,
        medoids: medoid_idx.iter().map(|&m| train[m].clone()).collect(),
        radii: radii.iter().map(|r| r * slack).collect(),
    }
}

/// Grid search over chunk size, cluster count, and radius slack, minimizing
/// false positives on the (benign) validation graphs. Ties prefer the
/// smallest chunk, then the smallest k, then the smallest slack.
pub fn fit(
    train_graphs: &[RIGraph],
    validate_graphs: &[RIGraph],
    grid: &CandidateGrid,
) -> Result<FitReport, ClusterError> {
    if train_graphs.is_empty() {
        return Err(ClusterError::NoTrainGraphs);
    }
    let mut best: Option<FitReport> = None;
    for &max_chunk in &grid.max_chunks {
        let train: Vec<GraphSketch> = train_graphs.iter().map(|g| sketch(g, max_chunk)).collect();
        let validate: Vec<GraphSketch> = validate_graphs
            .iter()
            .map(|g| sketch(g, max_chunk))
            .collect();
        for &k in &grid.ks {
            if k > train.len() {
                continue;
            }
            let (medoid_idx, _) = k_medoids(&train, k)?;
            for &slack in &grid.slacks {
                let model = build_model(&train, &medoid_idx, max_chunk, k, slack);
                let fps = validate.iter().filter(|s| model.predict(s).0).count();
                if best
                    .as_ref()
                    .is_none_or(|b| fps < b.validation_false_positives)
                {
                    best = Some(FitReport {
                        model,
                        validation_false_positives: fps,
                    });
                }
            }
        }
    }
    best.ok_or(ClusterError::EmptyGrid)
}

/// One whole log plus its ground-truth attack window, if any.
#[derive(Debug, Clone)]
pub struct LogCase {
    pub events: Vec<AuditEvent>,
    pub window: Option<AttackWindow>,
}

impl LogCase {
    /// Events strictly before the attack starts; the whole log when benign.
    fn benign_prefix(&self) -> Vec<AuditEvent> {
        match &self.window {
            Some(w) => self
                .events
                .iter()
                .filter(|e| e.timestamp < w.start)
                .cloned()
                .collect(),
            None => self.events.clone(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct CrossvalOptions {
    pub folds: usize,
    pub seed: u64,
    pub mode: GraphMode,
    pub grid: CandidateGrid,
}

impl Default for CrossvalOptions {
    fn default() -> Self {
        CrossvalOptions {
            folds: 4,
            seed: 0,
            mode: GraphMode::PseudoProcess,
            grid: CandidateGrid::default(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct FoldOutcome {
    pub fold: usize,
    pub max_chunk: usize,
    pub k: usize,
    pub slack: f64,
    pub confusion: ConfusionMatrix,
    pub f1: f64,
}

#[derive(Debug, Clone)]
pub struct CrossvalReport {
    pub folds: Vec<FoldOutcome>,
    pub mean_f1: f64,
}

/// Rotating cross-validation over whole logs. Logs are assigned to
/// 2*folds groups, attack and benign logs interleaved so every group holds
/// both kinds; each fold tests on one group (whole logs), validates on the
/// next (benign prefixes), and trains on the remaining six (benign
/// prefixes), i.e. a 75/12.5/12.5 split for four folds.
pub fn crossval(cases: &[LogCase], opts: &CrossvalOptions) -> Result<CrossvalReport, ClusterError> {
    let groups = opts.folds * 2;
    if cases.len() < groups {
        return Err(ClusterError::TooFewLogs(groups, opts.folds));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut pos: Vec<usize> = (0..cases.len()).filter(|&i| cases[i].window.is_some()).collect();
    let mut neg: Vec<usize> = (0..cases.len()).filter(|&i| cases[i].window.is_none()).collect();
    pos.shuffle(&mut rng);
    neg.shuffle(&mut rng);
    let mut group_of = vec![0usize; cases.len()];
    for (j, &i) in pos.iter().enumerate() {
        group_of[i] = j % groups;
    }
    // continue the deal where the attack logs left off so no group is empty
    // when there are barely enough logs
    for (j, &i) in neg.iter().enumerate() {
        group_of[i] = (pos.len() + j) % groups;
    }

    let graph_of = |events: &[AuditEvent]| {
        build_graph(events, opts.mode, BuildOptions::default()).0
    };

    let mut folds = Vec::with_capacity(opts.folds);
    let mut f1_sum = 0.0;
    for f in 0..opts.folds {
        let test_g = 2 * f;
        let val_g = 2 * f + 1;
        let mut train_graphs = Vec::new();
        let mut validate_graphs = Vec::new();
        let mut test_idx = Vec::new();
        for (i, case) in cases.iter().enumerate() {
            if group_of[i] == test_g {
                test_idx.push(i);
            } else {
                let prefix = case.benign_prefix();
                if prefix.is_empty() {
                    continue;
                }
                if group_of[i] == val_g {
                    validate_graphs.push(graph_of(&prefix));
                } else {
                    train_graphs.push(graph_of(&prefix));
                }
            }
        }
        let report = fit(&train_graphs, &validate_graphs, &opts.grid)?;
        let mut cm = ConfusionMatrix::default();
        for &i in &test_idx {
            let g = graph_of(&cases[i].events);
            let flagged = report.model.predict(&sketch(&g, report.model.max_chunk)).0;
            match (flagged, cases[i].window.is_some()) {
                (true, true) => cm.tp += 1,
                (true, false) => cm.fp += 1,
                (false, true) => cm.fn_ += 1,
                (false, false) => cm.tn += 1,
            }
        }
        let f1 = metrics(&cm).f1;
        f1_sum += f1;
        folds.push(FoldOutcome {
            fold: f,
            max_chunk: report.model.max_chunk,
            k: report.model.k,
            slack: report.model.slack,
            confusion: cm,
            f1,
        });
    }
    Ok(CrossvalReport {
        mean_f1: f1_sum / opts.folds as f64,
        folds,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{NodeType, RIGEdge, RIGNode};
    use crate::time::Timestamp;
    use rand::Rng;

    fn ts(ms: i64) -> Timestamp {
        Timestamp::from_millis(ms)
    }

    fn add_node(g: &mut RIGraph, id: &str, t: NodeType) {
        g.nodes.insert(
            id.to_string(),
            RIGNode {
                id: id.to_string(),
                node_type: t,
                created_at: ts(0),
            },
        );
    }

    fn add_edge(g: &mut RIGraph, from: &str, to: &str, interactions: &[(i64, u32)]) {
        g.edges.insert(
            (from.to_string(), to.to_string()),
            RIGEdge {
                created_at: ts(interactions[0].0),
                interactions: interactions.iter().map(|&(t, s)| (ts(t), s)).collect(),
            },
        );
    }

    #[test]
    fn two_node_execve_example() {
        let mut g = RIGraph::new(GraphMode::PseudoProcess);
        add_node(&mut g, "u", NodeType::User);
        add_node(&mut g, "p", NodeType::Process);
        add_edge(&mut g, "u", "p", &[(100, 59)]);
        let s = sketch(&g, 10);
        assert_eq!(s.shingles.len(), 2);
        assert_eq!(s.shingles["U59;P"], 1.0);
        assert_eq!(s.shingles["P"], 1.0);
    }

    #[test]
    fn chunking_splits_long_traversals() {
        let mut g = RIGraph::new(GraphMode::PseudoProcess);
        add_node(&mut g, "p", NodeType::Process);
        add_node(&mut g, "f", NodeType::File);
        // traversal "P3;F3;F3;F" (10 chars) chunks at 4 into 4+4+2
        add_edge(&mut g, "p", "f", &[(100, 3), (200, 3), (300, 3)]);
        let s = sketch(&g, 4);
        assert_eq!(s.shingles["P3;F"], 1.0);
        assert_eq!(s.shingles["3;F3"], 1.0);
        assert_eq!(s.shingles[";F"], 1.0);
        assert_eq!(s.shingles["F"], 1.0); // the leaf file node
    }

    #[test]
    fn outgoing_interactions_are_time_ordered_across_edges() {
        let mut g = RIGraph::new(GraphMode::PseudoProcess);
        add_node(&mut g, "p", NodeType::Process);
        add_node(&mut g, "a", NodeType::File);
        add_node(&mut g, "s", NodeType::Socket);
        add_edge(&mut g, "p", "a", &[(100, 3), (400, 5)]);
        add_edge(&mut g, "p", "s", &[(200, 4)]);
        let s = sketch(&g, 50);
        assert_eq!(s.shingles["P3;F4;S5;F"], 1.0);
    }

    #[test]
    fn cosine_distance_basics() {
        let empty = GraphSketch::default();
        let mut a = GraphSketch::default();
        a.shingles.insert("x".into(), 2.0);
        let mut b = GraphSketch::default();
        b.shingles.insert("y".into(), 3.0);
        assert_eq!(cosine_distance(&empty, &empty), 0.0);
        assert_eq!(cosine_distance(&empty, &a), 1.0);
        assert!((cosine_distance(&a, &a)).abs() < 1e-12);
        assert!((cosine_distance(&a, &b) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn doubled_counts_are_cosine_identical() {
        let mut g = RIGraph::new(GraphMode::PseudoProcess);
        add_node(&mut g, "p", NodeType::Process);
        add_node(&mut g, "f", NodeType::File);
        add_edge(&mut g, "p", "f", &[(100, 3)]);
        let a = sketch(&g, 50);
        let mut b = a.clone();
        for v in b.shingles.values_mut() {
            *v *= 2.0;
        }
        assert!(cosine_distance(&a, &b).abs() < 1e-12);
    }

    fn brute_force_k_medoids(points: &[GraphSketch], k: usize) -> f64 {
        let n = points.len();
        let d = distance_matrix(points);
        let mut best = f64::INFINITY;
        let mut idx: Vec<usize> = (0..k).collect();
        loop {
            best = best.min(assignment_cost(&d, &idx));
            // next k-combination of 0..n
            let mut i = k;
            loop {
                if i == 0 {
                    return best;
                }
                i -= 1;
                if idx[i] != i + n - k {
                    idx[i] += 1;
                    for j in i + 1..k {
                        idx[j] = idx[j - 1] + 1;
                    }
                    break;
                }
            }
        }
    }

    fn random_sketches(rng: &mut ChaCha8Rng, n: usize) -> Vec<GraphSketch> {
        (0..n)
            .map(|_| {
                let mut s = GraphSketch::default();
                for token in ["a", "b", "c", "d", "e"] {
                    if rng.random::<f64>() < 0.7 {
                        s.shingles
                            .insert(token.to_string(), rng.random_range(1.0..5.0));
                    }
                }
                if s.is_empty() {
                    s.shingles.insert("a".to_string(), 1.0);
                }
                s
            })
            .collect()
    }

    #[test]
    fn large_instance_swap_path_is_no_worse_than_naive_selection() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let points = random_sketches(&mut rng, 30);
        let k = 5; // C(30,5) exceeds the exact-search cap
        let d = distance_matrix(&points);
        let (medoids, cost) = k_medoids(&points, k).unwrap();
        assert_eq!(medoids.len(), k);
        let naive: Vec<usize> = (0..k).collect();
        assert!(cost <= assignment_cost(&d, &naive) + 1e-12);
    }

    #[test]
    fn small_instances_match_exhaustive_search() {
        for seed in 0..5 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let points = random_sketches(&mut rng, 7);
            for k in 1..=3 {
                let (_, cost) = k_medoids(&points, k).unwrap();
                let best = brute_force_k_medoids(&points, k);
                assert!(
                    (cost - best).abs() <= 1e-12,
                    "seed={seed} k={k}: pam={cost} exhaustive={best}"
                );
            }
        }
    }

    #[test]
    fn medoid_cost_is_permutation_invariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let points = random_sketches(&mut rng, 8);
        let mut reversed = points.clone();
        reversed.reverse();
        let (_, a) = k_medoids(&points, 2).unwrap();
        let (_, b) = k_medoids(&reversed, 2).unwrap();
        assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn radii_scale_with_slack() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let points = random_sketches(&mut rng, 6);
        let (medoids, _) = k_medoids(&points, 2).unwrap();
        let tight = build_model(&points, &medoids, 10, 2, 1.0);
        let loose = build_model(&points, &medoids, 10, 2, 1.5);
        for (t, l) in tight.radii.iter().zip(&loose.radii) {
            assert!((l - t * 1.5).abs() < 1e-12);
        }
    }

    #[test]
    fn empty_sketch_is_always_abnormal() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let points = random_sketches(&mut rng, 4);
        let (medoids, _) = k_medoids(&points, 1).unwrap();
        let model = build_model(&points, &medoids, 10, 1, 1.5);
        let (abnormal, dist) = model.predict(&GraphSketch::default());
        assert!(abnormal);
        assert_eq!(dist, 1.0);
    }

    #[test]
    fn fit_prefers_smaller_chunk_and_k_on_ties() {
        // identical training graphs: every candidate gets zero validation
        // false positives, so the tie-break decides
        let mut g = RIGraph::new(GraphMode::PseudoProcess);
        add_node(&mut g, "p", NodeType::Process);
        add_node(&mut g, "f", NodeType::File);
        add_edge(&mut g, "p", "f", &[(100, 3)]);
        let train = vec![g.clone(), g.clone(), g.clone()];
        let validate = vec![g.clone()];
        let grid = CandidateGrid {
            max_chunks: vec![10, 20],
            ks: vec![1, 2],
            slacks: vec![1.0, 1.5],
        };
        let report = fit(&train, &validate, &grid).unwrap();
        assert_eq!(report.validation_false_positives, 0);
        assert_eq!(report.model.max_chunk, 10);
        assert_eq!(report.model.k, 1);
        assert_eq!(report.model.slack, 1.0);
    }

    #[test]
    fn crossval_needs_enough_logs() {
        let cases: Vec<LogCase> = (0..5)
            .map(|_| LogCase {
                events: vec![],
                window: None,
            })
            .collect();
        assert!(matches!(
            crossval(&cases, &CrossvalOptions::default()),
            Err(ClusterError::TooFewLogs(8, 4))
        ));
    }
}
