//! Metric histograms, budget filters and two-objective Pareto fronts.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::store::{ModelStore, Objective, StoreError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AnalyticsError {
    #[error("UnknownMetric: {0}")]
    UnknownMetric(String),
    #[error("NoValues: no model carries metric {0}")]
    NoValues(String),
    #[error("InvalidBins: bin count must be positive")]
    InvalidBins,
    #[error("InvalidFilter: {metric} has low {low} > high {high}")]
    InvalidFilter { metric: String, low: f64, high: f64 },
}

impl AnalyticsError {
    pub fn code(&self) -> &'static str {
        match self {
            AnalyticsError::UnknownMetric(_) => "UnknownMetric",
            AnalyticsError::NoValues(_) => "NoValues",
            AnalyticsError::InvalidBins => "InvalidBins",
            AnalyticsError::InvalidFilter { .. } => "InvalidFilter",
        }
    }
}

impl From<StoreError> for AnalyticsError {
    fn from(e: StoreError) -> Self {
        match e {
            StoreError::UnknownMetric(m) => AnalyticsError::UnknownMetric(m),
            other => AnalyticsError::UnknownMetric(other.to_string()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricHistogram {
    pub metric: String,
    pub edges: Vec<f64>,
    pub counts: Vec<u64>,
    pub model_bins: BTreeMap<String, usize>,
}

/// Inclusive metric range.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricFilter {
    pub metric: String,
    pub low: f64,
    pub high: f64,
}

impl MetricFilter {
    pub fn new(metric: impl Into<String>, low: f64, high: f64) -> Self {
        MetricFilter {
            metric: metric.into(),
            low,
            high,
        }
    }

    pub fn accepts(&self, value: f64) -> bool {
        self.low <= value && value <= self.high
    }
}

/// Equal-width histogram over the observed range of `metric`.
///
/// Models without the metric are skipped. If every value is equal the
/// histogram has a single bin `[v, v + 1]`.
pub fn metric_histogram(
    store: &ModelStore,
    metric: &str,
    bins: usize,
) -> Result<MetricHistogram, AnalyticsError> {
    store.metric(metric)?;
    if bins == 0 {
        return Err(AnalyticsError::InvalidBins);
    }
    let values: Vec<(&str, f64)> = store
        .nodes()
        .filter_map(|n| n.metrics.get(metric).map(|v| (n.id.as_str(), *v)))
        .collect();
    if values.is_empty() {
        return Err(AnalyticsError::NoValues(metric.to_string()));
    }
    let lo = values.iter().map(|v| v.1).fold(f64::INFINITY, f64::min);
    let hi = values.iter().map(|v| v.1).fold(f64::NEG_INFINITY, f64::max);

    let edges = if lo == hi {
        vec![lo, lo + 1.0]
    } else {
        let width = (hi - lo) / bins as f64;
        let mut e: Vec<f64> = (0..=bins).map(|i| lo + width * i as f64).collect();
        e[bins] = hi;
        e
    };
    let k = edges.len() - 1;

    let mut counts = vec![0u64; k];
    let mut model_bins = BTreeMap::new();
    for (id, v) in values {
        let b = bin_of(&edges, v);
        counts[b] += 1;
        model_bins.insert(id.to_string(), b);
    }
    Ok(MetricHistogram {
        metric: metric.to_string(),
        edges,
        counts,
        model_bins,
    })
}

/// Bin index with `edges[b] <= v <= edges[b + 1]`; the upper edge belongs to
/// the next bin except for the last one.
fn bin_of(edges: &[f64], v: f64) -> usize {
    let k = edges.len() - 1;
    let width = (edges[k] - edges[0]) / k as f64;
    let mut b = if width > 0.0 {
        (((v - edges[0]) / width).floor().max(0.0) as usize).min(k - 1)
    } else {
        0
    };
    // Float rounding in the division can land one bin off.
    while b > 0 && v < edges[b] {
        b -= 1;
    }
    while b + 1 < k && v >= edges[b + 1] {
        b += 1;
    }
    b
}

/// Models satisfying every filter. Models missing a filtered metric are
/// disabled.
pub fn apply_filters(
    store: &ModelStore,
    filters: &[MetricFilter],
) -> Result<BTreeSet<String>, AnalyticsError> {
    for f in filters {
        store.metric(&f.metric)?;
        if f.low > f.high {
            return Err(AnalyticsError::InvalidFilter {
                metric: f.metric.clone(),
                low: f.low,
                high: f.high,
            });
        }
    }
    Ok(store
        .nodes()
        .filter(|n| {
            filters
                .iter()
                .all(|f| n.metrics.get(&f.metric).is_some_and(|v| f.accepts(*v)))
        })
        .map(|n| n.id.clone())
        .collect())
}

/// `a` dominates `b` when it is at least as good on both objectives and
/// strictly better on one.
pub fn dominates(a: (f64, f64), b: (f64, f64), objectives: (Objective, Objective)) -> bool {
    let better_eq = |x: f64, y: f64, o: Objective| match o {
        Objective::Maximize => x >= y,
        Objective::Minimize => x <= y,
    };
    let strictly = |x: f64, y: f64, o: Objective| match o {
        Objective::Maximize => x > y,
        Objective::Minimize => x < y,
    };
    better_eq(a.0, b.0, objectives.0)
        && better_eq(a.1, b.1, objectives.1)
        && (strictly(a.0, b.0, objectives.0) || strictly(a.1, b.1, objectives.1))
}

/// Non-dominated models over `(x_metric, y_metric)`, sorted by x.
///
/// Sort-and-sweep: after ordering by x (best first) then y (best first), a
/// point is on the front iff its y beats every y seen at a strictly better x.
/// Models with identical coordinates are all kept.
pub fn pareto_front(
    store: &ModelStore,
    x_metric: &str,
    y_metric: &str,
) -> Result<Vec<String>, AnalyticsError> {
    let ox = store.metric(x_metric)?.objective;
    let oy = store.metric(y_metric)?.objective;
    let mut pts: Vec<(&str, f64, f64)> = store
        .nodes()
        .filter_map(|n| {
            let x = *n.metrics.get(x_metric)?;
            let y = *n.metrics.get(y_metric)?;
            Some((n.id.as_str(), x, y))
        })
        .collect();

    let key = |v: f64, o: Objective| match o {
        Objective::Maximize => -v,
        Objective::Minimize => v,
    };
    pts.sort_by(|a, b| {
        key(a.1, ox)
            .total_cmp(&key(b.1, ox))
            .then(key(a.2, oy).total_cmp(&key(b.2, oy)))
    });

    let mut front = Vec::new();
    // Best y among points with strictly better x than the current group.
    let mut best_y_before: Option<f64> = None;
    let mut i = 0;
    while i < pts.len() {
        let mut j = i;
        while j < pts.len() && pts[j].1 == pts[i].1 {
            j += 1;
        }
        // Within an x-group only the best y survives (ties all kept).
        let group_best = key(pts[i].2, oy);
        for p in &pts[i..j] {
            let ky = key(p.2, oy);
            let beaten_in_group = ky > group_best;
            let beaten_before = best_y_before.is_some_and(|b| b <= ky);
            if !beaten_in_group && !beaten_before {
                front.push(*p);
            }
        }
        best_y_before = Some(match best_y_before {
            Some(b) => b.min(group_best),
            None => group_best,
        });
        i = j;
    }

    front.sort_by(|a, b| {
        a.1.total_cmp(&b.1)
            .then(a.2.total_cmp(&b.2))
            .then(store.position(a.0).cmp(&store.position(b.0)))
    });
    Ok(front.into_iter().map(|p| p.0.to_string()).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::store::load_store;
    use serde_json::json;

    fn store_with(values: &[(&str, Option<f64>, Option<f64>)]) -> ModelStore {
        let models: Vec<_> = values
            .iter()
            .map(|(id, acc, size)| {
                let mut m = serde_json::Map::new();
                if let Some(a) = acc {
                    m.insert("accuracy".into(), json!(a));
                }
                if let Some(s) = size {
                    m.insert("size".into(), json!(s));
                }
                json!({"id": id, "parent": null, "operation": null, "metrics": m})
            })
            .collect();
        load_store(
            &json!({
                "schema_version": 1,
                "metrics": [
                    {"name": "accuracy", "unit": "", "objective": "maximize"},
                    {"name": "size", "unit": "bytes", "objective": "minimize"}
                ],
                "models": models
            })
            .to_string(),
        )
        .unwrap()
    }

    #[test]
    fn histogram_single_model() {
        let s = store_with(&[("a", Some(0.7), None)]);
        let h = metric_histogram(&s, "accuracy", 5).unwrap();
        assert_eq!(h.counts, vec![1]);
        assert_eq!(h.edges, vec![0.7, 1.7]);
    }

    #[test]
    fn histogram_two_bins() {
        let s = store_with(&[("a", Some(0.0), None), ("b", Some(1.0), None)]);
        let h = metric_histogram(&s, "accuracy", 2).unwrap();
        assert_eq!(h.counts, vec![1, 1]);
        assert_eq!(h.edges, vec![0.0, 0.5, 1.0]);
        assert_eq!(h.model_bins["b"], 1);
    }

    #[test]
    fn histogram_errors() {
        let s = store_with(&[("a", Some(0.7), None)]);
        assert_eq!(
            metric_histogram(&s, "latency", 3).unwrap_err(),
            AnalyticsError::UnknownMetric("latency".into())
        );
        assert_eq!(
            metric_histogram(&s, "size", 3).unwrap_err(),
            AnalyticsError::NoValues("size".into())
        );
    }

    #[test]
    fn filters() {
        let s = store_with(&[("a", Some(0.95), Some(10.0)), ("b", Some(0.85), Some(5.0)), ("c", None, Some(1.0))]);
        assert_eq!(apply_filters(&s, &[]).unwrap().len(), 3);
        let acc = apply_filters(&s, &[MetricFilter::new("accuracy", 0.9, 1.0)]).unwrap();
        assert_eq!(acc.into_iter().collect::<Vec<_>>(), ["a"]);
        let low_acc = apply_filters(&s, &[MetricFilter::new("accuracy", 0.0, 1.0)]).unwrap();
        assert!(!low_acc.contains("c"), "missing metric disables the model");
        assert!(matches!(
            apply_filters(&s, &[MetricFilter::new("accuracy", 1.0, 0.0)]),
            Err(AnalyticsError::InvalidFilter { .. })
        ));
    }

    #[test]
    fn pareto_basics() {
        let s = store_with(&[("only", Some(0.9), Some(1.0))]);
        assert_eq!(pareto_front(&s, "size", "accuracy").unwrap(), ["only"]);

        let s = store_with(&[("a", Some(0.9), Some(1.0)), ("b", Some(0.8), Some(2.0))]);
        assert_eq!(pareto_front(&s, "size", "accuracy").unwrap(), ["a"]);

        let s = store_with(&[
            ("a", Some(0.9), Some(1.0)),
            ("twin", Some(0.9), Some(1.0)),
            ("big", Some(0.95), Some(3.0)),
            ("bad", Some(0.5), Some(3.0)),
        ]);
        assert_eq!(pareto_front(&s, "size", "accuracy").unwrap(), ["a", "twin", "big"]);
    }
}
