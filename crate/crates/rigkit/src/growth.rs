//! Graph growth series versus event count, plus the logarithmic reference
//! curve used for comparison plots.

use thiserror::Error;

use crate::audit::AuditEvent;
use crate::graph::{BuildOptions, GraphMode, RIGraph};

#[derive(Debug, Error)]
pub enum GrowthError {
    #[error("log has {0} events, fewer than skip_head + skip_tail = {1}")]
    TooFewEvents(usize, usize),
    #[error("stride must be >= 1")]
    BadStride,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GrowthPoint {
    pub event_count: usize,
    pub vertex_count: usize,
    pub edge_count: usize,
    pub interaction_tuple_count: usize,
}

#[derive(Debug, Clone)]
pub struct GrowthSeries {
    pub stride: usize,
    pub points: Vec<GrowthPoint>,
}

/// Folds events through the graph builder, sampling counts every `stride`
/// events after dropping the head/tail startup noise.
pub fn growth(
    events: &[AuditEvent],
    mode: GraphMode,
    stride: usize,
    skip_head: usize,
    skip_tail: usize,
) -> Result<GrowthSeries, GrowthError> {
    if stride == 0 {
        return Err(GrowthError::BadStride);
    }
    if events.len() < skip_head + skip_tail {
        return Err(GrowthError::TooFewEvents(events.len(), skip_head + skip_tail));
    }
    let body = &events[skip_head..events.len() - skip_tail];
    let mut g = RIGraph::new(mode);
    let mut points = Vec::new();
    for (i, e) in body.iter().enumerate() {
        g.apply_event(e, BuildOptions::default());
        if (i + 1) % stride == 0 || i + 1 == body.len() {
            let interactions = g.edges.values().map(|e| e.interactions.len()).sum();
            points.push(GrowthPoint {
                event_count: i + 1,
                vertex_count: g.nodes.len(),
                edge_count: g.edges.len(),
                interaction_tuple_count: interactions,
            });
        }
    }
    Ok(GrowthSeries { stride, points })
}

/// log_base(n) reference values; n = 1 maps to 0.
pub fn log_reference(event_counts: &[usize], base: f64) -> Vec<f64> {
    assert!(base > 1.0, "log base must exceed 1");
    event_counts
        .iter()
        .map(|&n| (n as f64).ln() / base.ln())
        .collect()
}

pub fn growth_to_csv(series: &GrowthSeries, base: f64) -> String {
    let mut out = String::from("events,vertices,edges,interactions,log_reference\n");
    let refs = log_reference(
        &series.points.iter().map(|p| p.event_count).collect::<Vec<_>>(),
        base,
    );
    for (p, r) in series.points.iter().zip(refs) {
        out.push_str(&format!(
            "{},{},{},{},{r:.6}\n",
            p.event_count, p.vertex_count, p.edge_count, p.interaction_tuple_count
        ));
    }
    out
}
