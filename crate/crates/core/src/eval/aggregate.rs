//! Mean generation time and token consumption over run records.

use std::collections::BTreeMap;

use num_rational::Ratio;
use num_traits::{ToPrimitive, Zero};
use serde::{Deserialize, Serialize};

use super::EvalError;
use crate::orchestrator::{Agent, RunRecord};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AgentMeans {
    pub gt_seconds: f64,
    pub tc_tokens: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub n: usize,
    pub mean_per_agent: BTreeMap<Agent, AgentMeans>,
    pub mean_total_gt: f64,
    pub mean_total_tc: f64,
    /// Mean of totals equals the sum of per-agent means, checked in exact arithmetic.
    pub linear: bool,
}

type Q = Ratio<i128>;

fn secs(q: Q) -> f64 {
    // nanoseconds → seconds, rounded once
    (q / Q::from_integer(1_000_000_000)).to_f64().unwrap_or(f64::NAN)
}

/// Averages records that carry metrics; the others are skipped.
pub fn aggregate_metrics(records: &[RunRecord]) -> Result<MetricsReport, EvalError> {
    let with: Vec<_> = records.iter().filter_map(|r| r.metrics.as_ref()).collect();
    if with.is_empty() {
        return Err(EvalError::NoMetrics);
    }
    let n = Q::from_integer(with.len() as i128);
    let mut per_agent: BTreeMap<Agent, (Q, Q)> = BTreeMap::new();
    let (mut total_gt, mut total_tc) = (Q::zero(), Q::zero());
    for m in &with {
        for (agent, am) in &m.per_agent {
            let e = per_agent.entry(*agent).or_insert((Q::zero(), Q::zero()));
            e.0 += Q::from_integer(am.gt.as_nanos() as i128);
            e.1 += Q::from_integer(am.tc as i128);
        }
        total_gt += Q::from_integer(m.total_gt.as_nanos() as i128);
        total_tc += Q::from_integer(m.total_tc as i128);
    }
    let means: BTreeMap<Agent, (Q, Q)> = per_agent.into_iter().map(|(a, (g, t))| (a, (g / n, t / n))).collect();
    let (mean_gt, mean_tc) = (total_gt / n, total_tc / n);
    let sum_gt = means.values().fold(Q::zero(), |s, v| s + v.0);
    let sum_tc = means.values().fold(Q::zero(), |s, v| s + v.1);
    Ok(MetricsReport {
        n: with.len(),
        mean_per_agent: means
            .iter()
            .map(|(a, (g, t))| (*a, AgentMeans { gt_seconds: secs(*g), tc_tokens: t.to_f64().unwrap_or(f64::NAN) }))
            .collect(),
        mean_total_gt: secs(mean_gt),
        mean_total_tc: mean_tc.to_f64().unwrap_or(f64::NAN),
        linear: sum_gt == mean_gt && sum_tc == mean_tc,
    })
}

#[derive(Serialize)]
struct Row {
    agent: String,
    mean_gt_seconds: f64,
    mean_tc_tokens: f64,
    n: usize,
}

impl MetricsReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        let rows = self
            .mean_per_agent
            .iter()
            .map(|(a, m)| (a.to_string(), m.gt_seconds, m.tc_tokens))
            .chain(std::iter::once(("Total".to_string(), self.mean_total_gt, self.mean_total_tc)));
        for (agent, g, t) in rows {
            w.serialize(Row { agent, mean_gt_seconds: g, mean_tc_tokens: t, n: self.n }).expect("in-memory csv");
        }
        String::from_utf8(w.into_inner().expect("flush")).expect("utf-8 csv")
    }
}
