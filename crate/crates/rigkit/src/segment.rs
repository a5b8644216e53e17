//! Syscall-count vectors: whole-log time-segment vectors and per-edge
//! vectors with configurable interval, stride, and an infinite-interval
//! aggregate.

use indexmap::IndexMap;
use thiserror::Error;

use crate::audit::AuditEvent;
use crate::graph::{EdgeKey, RIGraph};
use crate::time::Timestamp;

#[derive(Debug, Error)]
pub enum SegmentError {
    #[error("syscall index {0} exceeds table vector length {1} (table mismatch)")]
    IndexOutOfRange(u32, usize),
    #[error("delta must be > 0")]
    BadDelta,
    #[error("stride must satisfy 0 < stride <= delta")]
    BadStride,
}

/// Syscall-count histogram over `[start, end)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SegmentVector {
    pub start: Timestamp,
    pub end: Timestamp,
    pub counts: Vec<u32>,
}

impl SegmentVector {
    pub fn total(&self) -> u64 {
        self.counts.iter().map(|&c| c as u64).sum()
    }
}

/// Per-edge bucketing interval.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Delta {
    Seconds(f64),
    /// One aggregate vector per edge.
    Infinite,
    /// One unit vector per interaction (the smallest-possible-interval case).
    Unit,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EdgeVector {
    /// None for the infinite interval.
    pub interval: Option<(Timestamp, Timestamp)>,
    pub counts: Vec<u32>,
}

impl EdgeVector {
    pub fn total(&self) -> u64 {
        self.counts.iter().map(|&c| c as u64).sum()
    }
}

fn bump(counts: &mut [u32], syscall: u32) -> Result<(), SegmentError> {
    let idx = syscall as usize;
    if idx >= counts.len() {
        return Err(SegmentError::IndexOutOfRange(syscall, counts.len()));
    }
    counts[idx] += 1;
    Ok(())
}

/// Whole-log segmentation: windows of length `delta` starting at the first
/// event, advancing by `stride` (stride < delta overlaps), half-open
/// `[t, t+delta)`, covering through the last event.
pub fn segment_log(
    events: &[AuditEvent],
    vector_len: usize,
    delta_secs: f64,
    stride_secs: f64,
) -> Result<Vec<SegmentVector>, SegmentError> {
    if delta_secs.is_nan() || delta_secs <= 0.0 {
        return Err(SegmentError::BadDelta);
    }
    if stride_secs.is_nan() || stride_secs <= 0.0 || stride_secs > delta_secs {
        return Err(SegmentError::BadStride);
    }
    if events.is_empty() {
        return Ok(Vec::new());
    }
    let delta_ms = (delta_secs * 1000.0).round() as i64;
    let stride_ms = (stride_secs * 1000.0).round() as i64;
    let t0 = events[0].timestamp.as_millis();
    let t_last = events.last().unwrap().timestamp.as_millis();

    let mut out = Vec::new();
    let mut start = t0;
    while start <= t_last {
        let end = start + delta_ms;
        let mut counts = vec![0u32; vector_len];
        for e in events {
            let t = e.timestamp.as_millis();
            if t >= start && t < end {
                bump(&mut counts, e.syscall)?;
            }
        }
        out.push(SegmentVector {
            start: Timestamp::from_millis(start),
            end: Timestamp::from_millis(end),
            counts,
        });
        start += stride_ms;
    }
    Ok(out)
}

/// Per-edge vectors: interactions bucketed into consecutive windows anchored
/// at the edge's creation time.
pub fn edge_vectors(
    g: &RIGraph,
    delta: Delta,
    vector_len: usize,
) -> Result<IndexMap<EdgeKey, Vec<EdgeVector>>, SegmentError> {
    let mut out = IndexMap::new();
    for (key, edge) in &g.edges {
        let vectors = match delta {
            Delta::Infinite => {
                let mut counts = vec![0u32; vector_len];
                for &(_, sys) in &edge.interactions {
                    bump(&mut counts, sys)?;
                }
                vec![EdgeVector {
                    interval: None,
                    counts,
                }]
            }
            Delta::Unit => edge
                .interactions
                .iter()
                .map(|&(ts, sys)| {
                    let mut counts = vec![0u32; vector_len];
                    bump(&mut counts, sys)?;
                    Ok(EdgeVector {
                        interval: Some((ts, ts)),
                        counts,
                    })
                })
                .collect::<Result<Vec<_>, _>>()?,
            Delta::Seconds(secs) => {
                if secs.is_nan() || secs <= 0.0 {
                    return Err(SegmentError::BadDelta);
                }
                let delta_ms = (secs * 1000.0).round() as i64;
                let anchor = edge.created_at.as_millis();
                let last = edge.interactions.last().unwrap().0.as_millis();
                let n_buckets = ((last - anchor) / delta_ms) as usize + 1;
                let mut vectors: Vec<EdgeVector> = (0..n_buckets)
                    .map(|k| EdgeVector {
                        interval: Some((
                            Timestamp::from_millis(anchor + k as i64 * delta_ms),
                            Timestamp::from_millis(anchor + (k as i64 + 1) * delta_ms),
                        )),
                        counts: vec![0u32; vector_len],
                    })
                    .collect();
                for &(ts, sys) in &edge.interactions {
                    let k = ((ts.as_millis() - anchor) / delta_ms) as usize;
                    bump(&mut vectors[k].counts, sys)?;
                }
                vectors
            }
        };
        out.insert(key.clone(), vectors);
    }
    Ok(out)
}

/// CSV export: one row per vector with counts as sparse `idx:count` pairs.
pub fn vectors_to_csv(
    log_vectors: &[SegmentVector],
    edge_vecs: &IndexMap<EdgeKey, Vec<EdgeVector>>,
) -> String {
    let sparse = |counts: &[u32]| -> String {
        counts
            .iter()
            .enumerate()
            .filter(|(_, &c)| c > 0)
            .map(|(i, &c)| format!("{i}:{c}"))
            .collect::<Vec<_>>()
            .join(";")
    };
    let mut out = String::from("scope,edge,start,end,counts\n");
    for v in log_vectors {
        out.push_str(&format!("log,-,{},{},{}\n", v.start, v.end, sparse(&v.counts)));
    }
    for ((from, to), vecs) in edge_vecs {
        for v in vecs {
            let (start, end) = match v.interval {
                Some((s, e)) => (s.to_string(), e.to_string()),
                None => ("-inf".to_string(), "+inf".to_string()),
            };
            out.push_str(&format!(
                "edge,{from}->{to},{start},{end},{}\n",
                sparse(&v.counts)
            ));
        }
    }
    out
}
