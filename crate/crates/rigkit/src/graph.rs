//! Resource-interaction graph construction from audit events.
//!
//! Nodes are resources (user, process, executable, file, socket); directed
//! edges carry the ordered (timestamp, syscall) interactions between them.
//! Process-tree mode keeps parent->child process edges; pseudo-process mode
//! collapses each (uid, executable) pair into one process node, bounding
//! every path at length two.

use std::collections::{HashMap, HashSet, VecDeque};

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use crate::audit::AuditEvent;
use crate::time::Timestamp;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum NodeType {
    Process,
    Executable,
    User,
    File,
    Socket,
}

impl NodeType {
    pub const COUNT: usize = 5;

    /// Index into the one-hot encoding.
    pub fn onehot_index(self) -> usize {
        match self {
            NodeType::Process => 0,
            NodeType::Executable => 1,
            NodeType::User => 2,
            NodeType::File => 3,
            NodeType::Socket => 4,
        }
    }

    /// Single-character tag used in graph sketch strings.
    pub fn type_char(self) -> char {
        match self {
            NodeType::Process => 'P',
            NodeType::Executable => 'E',
            NodeType::User => 'U',
            NodeType::File => 'F',
            NodeType::Socket => 'S',
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum GraphMode {
    ProcessTree,
    PseudoProcess,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RIGNode {
    pub id: String,
    pub node_type: NodeType,
    pub created_at: Timestamp,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RIGEdge {
    pub created_at: Timestamp,
    /// Ordered (timestamp, syscall) tuples, nondecreasing in time.
    pub interactions: Vec<(Timestamp, u32)>,
}

pub type EdgeKey = (String, String);

#[derive(Debug, Clone, Copy, Default)]
pub struct BuildOptions {
    /// Also create a FILE node (and process edge) for the event's cwd.
    pub cwd_node: bool,
}

#[derive(Debug, Clone)]
pub struct RIGraph {
    pub mode: GraphMode,
    pub nodes: IndexMap<String, RIGNode>,
    pub edges: IndexMap<EdgeKey, RIGEdge>,
    /// Identifier reused with a different type; first type wins.
    pub type_conflicts: u32,
    /// Events dropped for missing pid/exe (tree mode also ppid).
    pub skipped_events: u32,
    /// Events whose missing uid was defaulted to "unset".
    pub uid_defaulted: u32,
}

impl RIGraph {
    pub fn new(mode: GraphMode) -> Self {
        RIGraph {
            mode,
            nodes: IndexMap::new(),
            edges: IndexMap::new(),
            type_conflicts: 0,
            skipped_events: 0,
            uid_defaulted: 0,
        }
    }

    fn add_node(&mut self, id: &str, node_type: NodeType, ts: Timestamp) {
        match self.nodes.get(id) {
            Some(existing) => {
                if existing.node_type != node_type {
                    self.type_conflicts += 1;
                }
            }
            None => {
                self.nodes.insert(
                    id.to_string(),
                    RIGNode {
                        id: id.to_string(),
                        node_type,
                        created_at: ts,
                    },
                );
            }
        }
    }

    /// Applies one audit event, per the event-to-graph conversion rules.
    /// Returns the keys of edges *created* (not merely appended) by this
    /// event, in creation order.
    pub fn apply_event(&mut self, e: &AuditEvent, opts: BuildOptions) -> Vec<EdgeKey> {
        let ts = e.timestamp;
        let sys = e.syscall;
        if e.exe.is_empty() {
            self.skipped_events += 1;
            return Vec::new();
        }
        // exe can coincide with a path; the prefix keeps it unique and
        // breaks potential cycles
        let exe_id = format!("executable:{}", e.exe);
        let uid = if e.uid.is_empty() {
            self.uid_defaulted += 1;
            "unset".to_string()
        } else {
            e.uid.clone()
        };
        let build_tree = self.mode == GraphMode::ProcessTree;
        let pid = if build_tree {
            if e.pid.is_empty() || e.ppid.is_empty() {
                self.skipped_events += 1;
                return Vec::new();
            }
            e.pid.clone()
        } else {
            // collapse all processes of (uid, exe) into one pseudo process
            format!("{uid}{exe_id}")
        };

        let mut created = Vec::new();
        let mut touched: HashSet<EdgeKey> = HashSet::new();
        let mut add_edge = |g: &mut RIGraph, from: &str, to: &str| {
            let key = (from.to_string(), to.to_string());
            if !touched.insert(key.clone()) {
                return;
            }
            match g.edges.get_mut(&key) {
                Some(edge) => edge.interactions.push((ts, sys)),
                None => {
                    g.edges.insert(
                        key.clone(),
                        RIGEdge {
                            created_at: ts,
                            interactions: vec![(ts, sys)],
                        },
                    );
                    created.push(key);
                }
            }
        };

        self.add_node(&pid, NodeType::Process, ts);
        self.add_node(&exe_id, NodeType::Executable, ts);
        self.add_node(&uid, NodeType::User, ts);
        add_edge(self, &uid, &pid);
        add_edge(self, &pid, &exe_id);

        if build_tree {
            self.add_node(&e.ppid, NodeType::Process, ts);
            add_edge(self, &e.ppid.clone(), &pid);
        }

        if let Some(addr) = &e.sockaddr {
            self.add_node(addr, NodeType::Socket, ts);
            add_edge(self, &pid, &addr.clone());
        }

        for (name, _inode) in &e.paths {
            if !name.is_empty() {
                self.add_node(name, NodeType::File, ts);
                add_edge(self, &pid, &name.clone());
            }
        }

        for arg in &e.execve_args {
            if arg.starts_with('/') {
                self.add_node(arg, NodeType::File, ts);
                add_edge(self, &pid, &arg.clone());
            }
        }

        if opts.cwd_node {
            if let Some(cwd) = &e.cwd {
                if !cwd.is_empty() {
                    self.add_node(cwd, NodeType::File, ts);
                    add_edge(self, &pid, &cwd.clone());
                }
            }
        }

        created
    }
}

/// Folds events left-to-right into a graph; the journal maps event index to
/// the edge keys that event created.
pub fn build_graph(
    events: &[AuditEvent],
    mode: GraphMode,
    opts: BuildOptions,
) -> (RIGraph, Vec<Vec<EdgeKey>>) {
    let mut g = RIGraph::new(mode);
    let journal = events.iter().map(|e| g.apply_event(e, opts)).collect();
    (g, journal)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct InvariantReport {
    pub acyclic: bool,
    /// Longest path (edge count); only meaningful when acyclic.
    pub max_path_len: usize,
    pub type_conflicts: u32,
}

/// Checks the structural invariants by topological sort and longest-path DP.
pub fn check_invariants(g: &RIGraph) -> InvariantReport {
    let idx: HashMap<&str, usize> = g
        .nodes
        .keys()
        .enumerate()
        .map(|(i, k)| (k.as_str(), i))
        .collect();
    let n = g.nodes.len();
    let mut out_adj: Vec<Vec<usize>> = vec![Vec::new(); n];
    let mut in_deg = vec![0usize; n];
    for (from, to) in g.edges.keys() {
        let (f, t) = (idx[from.as_str()], idx[to.as_str()]);
        out_adj[f].push(t);
        in_deg[t] += 1;
    }

    let mut queue: VecDeque<usize> = (0..n).filter(|&i| in_deg[i] == 0).collect();
    let mut topo = Vec::with_capacity(n);
    let mut in_deg_work = in_deg.clone();
    while let Some(u) = queue.pop_front() {
        topo.push(u);
        for &v in &out_adj[u] {
            in_deg_work[v] -= 1;
            if in_deg_work[v] == 0 {
                queue.push_back(v);
            }
        }
    }
    let acyclic = topo.len() == n;

    let mut max_path_len = 0;
    if acyclic {
        let mut longest = vec![0usize; n];
        for &u in &topo {
            for &v in &out_adj[u] {
                longest[v] = longest[v].max(longest[u] + 1);
                max_path_len = max_path_len.max(longest[v]);
            }
        }
    }

    InvariantReport {
        acyclic,
        max_path_len,
        type_conflicts: g.type_conflicts,
    }
}

// ---------------------------------------------------------------------------
// Serialization: JSON (round-trips bit-exactly), DOT, CSV edge list.

#[derive(Serialize, Deserialize)]
struct NodeDoc {
    id: String,
    #[serde(rename = "type")]
    node_type: NodeType,
    created_at: Timestamp,
}

#[derive(Serialize, Deserialize)]
struct EdgeDoc {
    from: String,
    to: String,
    created_at: Timestamp,
    interactions: Vec<(Timestamp, u32)>,
}

#[derive(Serialize, Deserialize)]
struct GraphDoc {
    mode: GraphMode,
    nodes: Vec<NodeDoc>,
    edges: Vec<EdgeDoc>,
}

pub fn to_json(g: &RIGraph) -> String {
    let doc = GraphDoc {
        mode: g.mode,
        nodes: g
            .nodes
            .values()
            .map(|n| NodeDoc {
                id: n.id.clone(),
                node_type: n.node_type,
                created_at: n.created_at,
            })
            .collect(),
        edges: g
            .edges
            .iter()
            .map(|((from, to), e)| EdgeDoc {
                from: from.clone(),
                to: to.clone(),
                created_at: e.created_at,
                interactions: e.interactions.clone(),
            })
            .collect(),
    };
    serde_json::to_string_pretty(&doc).expect("graph serialization")
}

pub fn from_json(text: &str) -> Result<RIGraph, serde_json::Error> {
    let doc: GraphDoc = serde_json::from_str(text)?;
    let mut g = RIGraph::new(doc.mode);
    for n in doc.nodes {
        g.nodes.insert(
            n.id.clone(),
            RIGNode {
                id: n.id,
                node_type: n.node_type,
                created_at: n.created_at,
            },
        );
    }
    for e in doc.edges {
        g.edges.insert(
            (e.from, e.to),
            RIGEdge {
                created_at: e.created_at,
                interactions: e.interactions,
            },
        );
    }
    Ok(g)
}

fn dot_escape(s: &str) -> String {
    s.replace('\\', "\\\\").replace('"', "\\\"")
}

pub fn to_dot(g: &RIGraph) -> String {
    let mut out = String::from("digraph rig {\n");
    for node in g.nodes.values() {
        let shape = match node.node_type {
            NodeType::Process => "ellipse",
            NodeType::Executable => "box",
            NodeType::User => "diamond",
            NodeType::File => "note",
            NodeType::Socket => "hexagon",
        };
        out.push_str(&format!(
            "  \"{}\" [shape={}];\n",
            dot_escape(&node.id),
            shape
        ));
    }
    for ((from, to), edge) in &g.edges {
        out.push_str(&format!(
            "  \"{}\" -> \"{}\" [label=\"n={}\"];\n",
            dot_escape(from),
            dot_escape(to),
            edge.interactions.len()
        ));
    }
    out.push_str("}\n");
    out
}

fn csv_quote(s: &str) -> String {
    if s.contains(',') || s.contains('"') || s.contains('\n') {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

pub fn to_csv(g: &RIGraph) -> String {
    let mut out = String::from("from,to,created_at,interactions\n");
    for ((from, to), edge) in &g.edges {
        out.push_str(&format!(
            "{},{},{},{}\n",
            csv_quote(from),
            csv_quote(to),
            edge.created_at,
            edge.interactions.len()
        ));
    }
    out
}
