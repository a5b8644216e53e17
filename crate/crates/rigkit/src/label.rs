//! Edge labeling from a known attack window: an edge is abnormal only if
//! the window contains its creation time. Appends to an existing edge never
//! flip its label.

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use crate::graph::{EdgeKey, RIGraph};
use crate::time::Timestamp;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AttackWindow {
    pub start: Timestamp,
    pub duration_secs: f64,
}

impl AttackWindow {
    pub fn new(start: Timestamp, duration_secs: f64) -> Self {
        assert!(duration_secs > 0.0, "attack window duration must be > 0");
        AttackWindow {
            start,
            duration_secs,
        }
    }

    pub fn end(&self) -> Timestamp {
        self.start.add_secs_f64(self.duration_secs)
    }

    /// Both endpoints inclusive.
    pub fn contains(&self, t: Timestamp) -> bool {
        t >= self.start && t <= self.end()
    }

    /// Parses the `start_seconds duration_seconds` sidecar format.
    pub fn parse_sidecar(text: &str) -> Option<Self> {
        let mut it = text.split_whitespace();
        let start: Timestamp = it.next()?.parse().ok()?;
        let duration: f64 = it.next()?.parse().ok()?;
        if duration <= 0.0 {
            return None;
        }
        Some(AttackWindow::new(start, duration))
    }

    pub fn to_sidecar(&self) -> String {
        format!("{} {}\n", self.start, self.duration_secs)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EdgeLabel {
    Normal,
    Abnormal,
}

#[derive(Debug, Clone)]
pub struct LabelSummary {
    pub labels: IndexMap<EdgeKey, EdgeLabel>,
    pub normal: usize,
    pub abnormal: usize,
    /// Set when the window misses the log's time span entirely.
    pub window_out_of_range: bool,
}

pub fn label_edges(g: &RIGraph, w: &AttackWindow) -> LabelSummary {
    let mut labels = IndexMap::new();
    let mut normal = 0;
    let mut abnormal = 0;
    for (key, edge) in &g.edges {
        let label = if w.contains(edge.created_at) {
            abnormal += 1;
            EdgeLabel::Abnormal
        } else {
            normal += 1;
            EdgeLabel::Normal
        };
        labels.insert(key.clone(), label);
    }
    let span = g
        .edges
        .values()
        .flat_map(|e| e.interactions.iter().map(|&(t, _)| t))
        .fold(None::<(Timestamp, Timestamp)>, |acc, t| match acc {
            None => Some((t, t)),
            Some((lo, hi)) => Some((lo.min(t), hi.max(t))),
        });
    let window_out_of_range = match span {
        Some((lo, hi)) => w.end() < lo || w.start > hi,
        None => false,
    };
    LabelSummary {
        labels,
        normal,
        abnormal,
        window_out_of_range,
    }
}

pub fn labels_to_csv(summary: &LabelSummary) -> String {
    let mut out = String::from("from,to,label\n");
    for ((from, to), label) in &summary.labels {
        let tag = match label {
            EdgeLabel::Normal => "normal",
            EdgeLabel::Abnormal => "abnormal",
        };
        out.push_str(&format!("{from},{to},{tag}\n"));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{GraphMode, RIGEdge};

    fn graph_with_edges(created: &[i64]) -> RIGraph {
        let mut g = RIGraph::new(GraphMode::ProcessTree);
        for (i, &ms) in created.iter().enumerate() {
            let ts = Timestamp::from_millis(ms);
            g.edges.insert(
                (format!("a{i}"), format!("b{i}")),
                RIGEdge {
                    created_at: ts,
                    interactions: vec![(ts, 3)],
                },
            );
        }
        g
    }

    #[test]
    fn edge_created_inside_window_is_abnormal() {
        let g = graph_with_edges(&[5_000]);
        let w = AttackWindow::new(Timestamp::from_millis(4_000), 2.0);
        let s = label_edges(&g, &w);
        assert_eq!(s.abnormal, 1);
    }

    #[test]
    fn pre_window_edge_with_in_window_interactions_stays_normal() {
        let mut g = graph_with_edges(&[1_000]);
        let key = g.edges.keys().next().unwrap().clone();
        g.edges
            .get_mut(&key)
            .unwrap()
            .interactions
            .push((Timestamp::from_millis(5_000), 4));
        let w = AttackWindow::new(Timestamp::from_millis(4_000), 2.0);
        let s = label_edges(&g, &w);
        assert_eq!(s.normal, 1);
        assert_eq!(s.abnormal, 0);
    }

    #[test]
    fn five_pre_three_in_window() {
        let g = graph_with_edges(&[0, 100, 200, 300, 400, 10_000, 10_500, 11_000]);
        let w = AttackWindow::new(Timestamp::from_millis(10_000), 2.0);
        let s = label_edges(&g, &w);
        assert_eq!((s.normal, s.abnormal), (5, 3));
    }

    #[test]
    fn out_of_range_window_flags_and_labels_all_normal() {
        let g = graph_with_edges(&[1_000, 2_000]);
        let w = AttackWindow::new(Timestamp::from_millis(100_000), 5.0);
        let s = label_edges(&g, &w);
        assert!(s.window_out_of_range);
        assert_eq!(s.abnormal, 0);
    }

    #[test]
    fn widening_never_flips_abnormal_to_normal() {
        let g = graph_with_edges(&[0, 2_000, 4_000, 6_000, 8_000]);
        let w1 = AttackWindow::new(Timestamp::from_millis(3_000), 2.0);
        let w2 = AttackWindow::new(Timestamp::from_millis(3_000), 6.0);
        let s1 = label_edges(&g, &w1);
        let s2 = label_edges(&g, &w2);
        for (key, l1) in &s1.labels {
            if *l1 == EdgeLabel::Abnormal {
                assert_eq!(s2.labels[key], EdgeLabel::Abnormal);
            }
        }
    }

    #[test]
    fn endpoints_are_inclusive() {
        let g = graph_with_edges(&[4_000, 6_000]);
        let w = AttackWindow::new(Timestamp::from_millis(4_000), 2.0);
        let s = label_edges(&g, &w);
        assert_eq!(s.abnormal, 2);
    }

    #[test]
    fn sidecar_round_trip() {
        let w = AttackWindow::new(Timestamp::from_millis(1_632_851_805_333), 30.0);
        let parsed = AttackWindow::parse_sidecar(&w.to_sidecar()).unwrap();
        assert_eq!(parsed, w);
    }
}
