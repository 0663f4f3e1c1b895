use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::log::SessionLog;
use super::AnalyticsError;
use crate::genetics::{EvolutionState, Generation};
use crate::guideline::AttributeSchema;

pub const HISTOGRAM_BINS: usize = 10;

/// Which individuals feed the continuous histograms.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HistogramScope {
    #[default]
    Voted,
    Population,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContinuousStats {
    pub mean: f64,
    pub variance: f64,
    pub histogram: [u64; HISTOGRAM_BINS],
}

/// Chart data for one iteration: a radar per discrete attribute and a bar
/// per continuous attribute.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationStats {
    pub iteration: u64,
    /// attribute -> value -> weight share within the attribute.
    pub radar: BTreeMap<String, BTreeMap<String, f64>>,
    pub bars: BTreeMap<String, ContinuousStats>,
    pub votes_total: u64,
}

fn bin(x: f64) -> usize {
    ((x * HISTOGRAM_BINS as f64).floor() as usize).min(HISTOGRAM_BINS - 1)
}

/// Stats for a balloted generation under `state`.
pub fn compute_stats(
    state: &EvolutionState,
    g: &Generation,
    schema: &AttributeSchema,
    scope: HistogramScope,
) -> IterationStats {
    let bars = schema
        .continuous()
        .map(|attr| {
            let model = state
                .continuous_models
                .get(attr.id())
                .copied()
                .unwrap_or_default();
            let mut histogram = [0u64; HISTOGRAM_BINS];
            let members = g
                .individuals
                .iter()
                .filter(|i| scope == HistogramScope::Population || i.votes > 0);
            for ind in members {
                if let Some(x) = ind.chromosome.gene(attr.id()) {
                    histogram[bin(x)] += 1;
                }
            }
            (
                attr.id().to_string(),
                ContinuousStats {
                    mean: model.mean,
                    variance: model.variance,
                    histogram,
                },
            )
        })
        .collect();
    IterationStats {
        iteration: g.index,
        radar: state.normalized(schema),
        bars,
        votes_total: g.total_votes(),
    }
}

/// Normalized weight of every value across the iterations of a session.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StreamSeries {
    pub iterations: Vec<u64>,
    /// value token -> one share per iteration.
    pub series: BTreeMap<String, Vec<f64>>,
}

impl StreamSeries {
    pub fn len(&self) -> usize {
        self.iterations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.iterations.is_empty()
    }
}

pub fn stream(log: &SessionLog) -> Result<StreamSeries, AnalyticsError> {
    if log.records().is_empty() {
        return Err(AnalyticsError::EmptyLog);
    }
    let schema = &log.header().schema;
    let mut series: BTreeMap<String, Vec<f64>> = schema
        .value_tokens()
        .map(|v| (v.to_string(), Vec::with_capacity(log.records().len())))
        .collect();
    for record in log.records() {
        for shares in record.state.normalized(schema).into_values() {
            for (value, share) in shares {
                series.get_mut(&value).expect("schema value").push(share);
            }
        }
    }
    Ok(StreamSeries {
        iterations: log.records().iter().map(|r| r.index).collect(),
        series,
    })
}
