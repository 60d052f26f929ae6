use std::collections::BTreeMap;
use std::io::Write;

use serde::Serialize;

use super::trial::TrialRecord;
use super::Method;
use crate::error::Result;
use crate::scene::Family;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct IterationSummary {
    pub iteration: usize,
    pub trials: usize,
    pub success_rate: f64,
    pub mean_area: f64,
    pub mean_rvis: f64,
    /// Over the trials that produced a mesh on this view.
    pub mean_mpvpe: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AggregateRow {
    pub family: Family,
    pub method: Method,
    pub trials: usize,
    pub failed_trials: usize,
    pub iterations: Vec<IterationSummary>,
    /// Highest per-iteration value over iterations 1 and later.
    pub peak_success_rate: f64,
    pub peak_area: f64,
    pub peak_rvis: f64,
}

/// Per family and method: per-iteration rates and means, then the peak of
/// each over the post-spawn iterations. Rows are ordered by family, method.
pub fn aggregate(records: &[TrialRecord]) -> Vec<AggregateRow> {
    let mut groups: BTreeMap<(Family, Method), Vec<&TrialRecord>> = BTreeMap::new();
    for r in records {
        groups.entry((r.family, r.method)).or_default().push(r);
    }
    groups
        .into_iter()
        .map(|((family, method), recs)| {
            let ok: Vec<&TrialRecord> = recs.iter().copied().filter(|r| r.error.is_none()).collect();
            let n_iter = ok.iter().map(|r| r.iterations.len()).max().unwrap_or(0);
            let iterations: Vec<IterationSummary> = (0..n_iter)
                .map(|i| {
                    let its: Vec<_> = ok.iter().filter_map(|r| r.iterations.get(i)).collect();
                    let n = its.len() as f64;
                    let m: Vec<f64> = its.iter().filter_map(|it| it.mpvpe).collect();
                    IterationSummary {
                        iteration: i,
                        trials: its.len(),
                        success_rate: its.iter().filter(|it| it.success).count() as f64 / n,
                        mean_area: its.iter().map(|it| it.area).sum::<f64>() / n,
                        mean_rvis: its.iter().map(|it| it.r_vis).sum::<f64>() / n,
                        mean_mpvpe: (!m.is_empty()).then(|| m.iter().sum::<f64>() / m.len() as f64),
                    }
                })
                .collect();
            let peak = |f: fn(&IterationSummary) -> f64| iterations.iter().skip(1).map(f).fold(0.0, f64::max);
            AggregateRow {
                family,
                method,
                trials: ok.len(),
                failed_trials: recs.len() - ok.len(),
                peak_success_rate: peak(|s| s.success_rate),
                peak_area: peak(|s| s.mean_area),
                peak_rvis: peak(|s| s.mean_rvis),
                iterations,
            }
        })
        .collect()
}

/// One row per (family, method, iteration) plus a `peak` row per group.
pub fn write_aggregate_csv<W: Write>(w: W, rows: &[AggregateRow]) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record([
        "family",
        "method",
        "iteration",
        "trials",
        "failed_trials",
        "success_rate",
        "mean_area",
        "mean_rvis",
        "mean_mpvpe",
    ])?;
    for r in rows {
        for s in &r.iterations {
            wr.write_record([
                r.family.to_string(),
                r.method.to_string(),
                s.iteration.to_string(),
                s.trials.to_string(),
                r.failed_trials.to_string(),
                s.success_rate.to_string(),
                s.mean_area.to_string(),
                s.mean_rvis.to_string(),
                s.mean_mpvpe.map(|v| v.to_string()).unwrap_or_default(),
            ])?;
        }
        wr.write_record([
            r.family.to_string(),
            r.method.to_string(),
            "peak".to_string(),
            r.trials.to_string(),
            r.failed_trials.to_string(),
            r.peak_success_rate.to_string(),
            r.peak_area.to_string(),
            r.peak_rvis.to_string(),
            String::new(),
        ])?;
    }
    wr.flush()?;
    Ok(())
}
