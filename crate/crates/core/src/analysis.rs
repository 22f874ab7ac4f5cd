//! Chart payloads built from a dataset, its embedding and its clusters.
//!
//! Every analytic returns a [`GraphData`], which the render module turns into
//! SVG and which serializes to JSON unchanged.

use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use ndarray::{ArrayView2, Axis};
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::clustering::{ClusterAssignment, Stage};
use crate::dataset::{ArrayName, DerivedFields, XrlDataset};
use crate::embedding::{build_feature_matrix, EmbeddingMap};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ChartKind {
    Scatter,
    Bar,
}

/// Renderer-agnostic chart payload.
///
/// For scatter charts `x`/`y` are positions and `values` the color channel.
/// For bar charts `x` holds the category (cluster id), `y` is empty and
/// `values` are bar heights with optional `error` half-widths.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphData {
    pub kind: ChartKind,
    pub title: String,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub values: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<Vec<f64>>,
    /// Set for categorical color channels: value → label.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub legend: Option<BTreeMap<i64, String>>,
    pub colorbar: bool,
    /// Per-element group name used for coloring bars (cluster stage).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub groups: Option<Vec<String>>,
}

impl GraphData {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn is_categorical(&self) -> bool {
        self.legend.is_some()
    }

    pub fn check(&self) -> Result<()> {
        let n = self.values.len();
        if self.x.len() != n {
            return Err(Error::Input(format!("x has {} entries, values {n}", self.x.len())));
        }
        let y_ok = match self.kind {
            ChartKind::Scatter => self.y.len() == n,
            ChartKind::Bar => self.y.is_empty() || self.y.len() == n,
        };
        if !y_ok {
            return Err(Error::Input(format!("y has {} entries, values {n}", self.y.len())));
        }
        if let Some(err) = &self.error {
            if err.len() != n {
                return Err(Error::Input(format!("error has {} entries, values {n}", err.len())));
            }
            if err.iter().any(|e| !(*e >= 0.0)) {
                return Err(Error::Input("error bars must be non-negative".into()));
            }
        }
        if let Some(groups) = &self.groups {
            if groups.len() != n {
                return Err(Error::Input(format!("groups has {} entries, values {n}", groups.len())));
            }
        }
        Ok(())
    }
}

/// Per-datapoint quantity shown on an embedding scatter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OverlayField {
    EpisodeStep,
    Confidence,
    Action,
    Reward,
    ReturnToGo,
    CriticValue,
    Done,
}

impl OverlayField {
    pub const ALL: [OverlayField; 7] = [
        OverlayField::EpisodeStep,
        OverlayField::Confidence,
        OverlayField::Action,
        OverlayField::Reward,
        OverlayField::ReturnToGo,
        OverlayField::CriticValue,
        OverlayField::Done,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            OverlayField::EpisodeStep => "episode_step",
            OverlayField::Confidence => "confidence",
            OverlayField::Action => "action",
            OverlayField::Reward => "reward",
            OverlayField::ReturnToGo => "return_to_go",
            OverlayField::CriticValue => "critic_value",
            OverlayField::Done => "done",
        }
    }
}

impl fmt::Display for OverlayField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for OverlayField {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        OverlayField::ALL
            .into_iter()
            .find(|f| f.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown overlay field {s:?}")))
    }
}

fn require<T>(v: Option<T>, name: ArrayName) -> Result<T> {
    v.ok_or_else(|| Error::Config(format!("dataset has no {name} array")))
}

/// Scatter of the embedding colored by `field`.
pub fn embedding_overlay(
    dataset: &XrlDataset,
    derived: &DerivedFields,
    embedding: &EmbeddingMap,
    field: OverlayField,
) -> Result<GraphData> {
    let n = dataset.len();
    if embedding.len() != n {
        return Err(Error::Input(format!(
            "embedding has {} points, dataset {n}",
            embedding.len()
        )));
    }
    let mut legend = None;
    let values: Vec<f64> = match field {
        OverlayField::EpisodeStep => dataset.steps.iter().map(|&s| s as f64).collect(),
        OverlayField::Confidence => require(dataset.confidence(), ArrayName::DistProbs)?,
        OverlayField::Action => {
            legend = Some(
                (0..dataset.num_actions() as i64)
                    .map(|a| (a, format!("action {a}")))
                    .collect(),
            );
            dataset.actions.iter().map(|&a| a as f64).collect()
        }
        OverlayField::Reward => dataset.rewards.iter().map(|&r| r as f64).collect(),
        OverlayField::ReturnToGo => derived.returns_to_go.clone(),
        OverlayField::CriticValue => require(dataset.critic_values.as_ref(), ArrayName::CriticValues)?
            .iter()
            .map(|&v| v as f64)
            .collect(),
        OverlayField::Done => {
            legend = Some(BTreeMap::from([(0, "running".into()), (1, "done".into())]));
            dataset.dones.iter().map(|&d| d as u8 as f64).collect()
        }
    };
    Ok(GraphData {
        kind: ChartKind::Scatter,
        title: format!("Embedding colored by {field}"),
        x: embedding.coords.column(0).to_vec(),
        y: embedding.coords.column(1).to_vec(),
        values,
        error: None,
        colorbar: legend.is_none(),
        legend,
        groups: None,
    })
}

/// Per-datapoint quantity averaged per cluster.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricKind {
    Confidence,
    Reward,
    ExpectedReturn,
    CriticValue,
}

impl MetricKind {
    pub const ALL: [MetricKind; 4] = [
        MetricKind::Confidence,
        MetricKind::Reward,
        MetricKind::ExpectedReturn,
        MetricKind::CriticValue,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            MetricKind::Confidence => "confidence",
            MetricKind::Reward => "reward",
            MetricKind::ExpectedReturn => "expected_return",
            MetricKind::CriticValue => "critic_value",
        }
    }

    /// The per-datapoint values this metric summarizes.
    pub fn values(self, dataset: &XrlDataset, derived: &DerivedFields) -> Result<Vec<f64>> {
        Ok(match self {
            MetricKind::Confidence => require(dataset.confidence(), ArrayName::DistProbs)?,
            MetricKind::Reward => dataset.rewards.iter().map(|&r| r as f64).collect(),
            MetricKind::ExpectedReturn => derived.returns_to_go.clone(),
            MetricKind::CriticValue => require(dataset.critic_values.as_ref(), ArrayName::CriticValues)?
                .iter()
                .map(|&v| v as f64)
                .collect(),
        })
    }
}

impl fmt::Display for MetricKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for MetricKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        MetricKind::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown metric {s:?}")))
    }
}

/// Mean and population standard deviation of a quantity per cluster.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterMetric {
    pub metric_name: String,
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    pub count: Vec<usize>,
    pub stage_of: Vec<Stage>,
}

impl ClusterMetric {
    pub fn num_clusters(&self) -> usize {
        self.mean.len()
    }

    /// Bar chart of the means with standard-deviation error bars.
    pub fn to_graph(&self) -> GraphData {
        GraphData {
            kind: ChartKind::Bar,
            title: format!("Mean {} per cluster", self.metric_name),
            x: (0..self.num_clusters()).map(|c| c as f64).collect(),
            y: Vec::new(),
            values: self.mean.clone(),
            error: Some(self.std.clone()),
            legend: None,
            colorbar: false,
            groups: Some(self.stage_of.iter().map(|s| s.to_string()).collect()),
        }
    }
}

/// Summarizes `values` per cluster of `clusters`.
pub fn summarize(name: &str, values: &[f64], clusters: &ClusterAssignment) -> Result<ClusterMetric> {
    let n = clusters.labels.len();
    if values.len() != n {
        return Err(Error::Input(format!(
            "{name} has {} values, clusters label {n} datapoints",
            values.len()
        )));
    }
    let c = clusters.num_clusters();
    let mut count = vec![0usize; c];
    let mut sum = vec![0.0f64; c];
    for (&l, &v) in clusters.labels.iter().zip(values) {
        count[l] += 1;
        sum[l] += v;
    }
    if let Some(empty) = count.iter().position(|&k| k == 0) {
        return Err(Error::Input(format!("cluster {empty} has no members")));
    }
    let mean: Vec<f64> = sum.iter().zip(&count).map(|(s, &k)| s / k as f64).collect();
    let mut sq = vec![0.0f64; c];
    for (&l, &v) in clusters.labels.iter().zip(values) {
        sq[l] += (v - mean[l]).powi(2);
    }
    let std = sq.iter().zip(&count).map(|(s, &k)| (s / k as f64).sqrt()).collect();
    Ok(ClusterMetric {
        metric_name: name.to_string(),
        mean,
        std,
        count,
        stage_of: clusters.stages(),
    })
}

pub fn cluster_metric(
    dataset: &XrlDataset,
    derived: &DerivedFields,
    clusters: &ClusterAssignment,
    metric: MetricKind,
) -> Result<ClusterMetric> {
    summarize(metric.as_str(), &metric.values(dataset, derived)?, clusters)
}

/// Up to `per_cluster` members per cluster nearest to the cluster centroid in
/// `features`, nearest first, ties to the lower index.
pub fn representatives_in(
    features: ArrayView2<f64>,
    clusters: &ClusterAssignment,
    per_cluster: usize,
) -> Result<BTreeMap<usize, Vec<usize>>> {
    if per_cluster == 0 {
        return Err(Error::Input("per_cluster must be >= 1".into()));
    }
    if features.nrows() != clusters.labels.len() {
        return Err(Error::Input(format!(
            "feature matrix has {} rows, clusters label {}",
            features.nrows(),
            clusters.labels.len()
        )));
    }
    let mut out = BTreeMap::new();
    for c in 0..clusters.num_clusters() {
        let members = clusters.members(c);
        if members.is_empty() {
            continue;
        }
        let block = features.select(Axis(0), &members);
        let centroid = block.mean_axis(Axis(0)).expect("non-empty");
        let mut ranked: Vec<(f64, usize)> = block
            .rows()
            .into_iter()
            .zip(&members)
            .map(|(row, &i)| {
                let d = row.iter().zip(&centroid).map(|(a, b)| (a - b) * (a - b)).sum();
                (d, i)
            })
            .collect();
        ranked.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        out.insert(c, ranked.into_iter().take(per_cluster).map(|(_, i)| i).collect());
    }
    Ok(out)
}

/// [`representatives_in`] on the feature matrix the clusters were built from.
pub fn cluster_representatives(
    dataset: &XrlDataset,
    clusters: &ClusterAssignment,
    per_cluster: usize,
) -> Result<BTreeMap<usize, Vec<usize>>> {
    let spec = clusters
        .feature_spec
        .iter()
        .map(|s| s.parse())
        .collect::<Result<Vec<ArrayName>>>()?;
    if spec.is_empty() {
        return Err(Error::Config("cluster assignment records no feature spec".into()));
    }
    let features = build_feature_matrix(dataset, &spec)?;
    representatives_in(features.view(), clusters, per_cluster)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub cluster_id: usize,
    pub stage: Stage,
    pub count: usize,
    /// `(mean, std)` per metric, in column order.
    pub stats: Vec<(f64, f64)>,
}

/// One row per cluster; columns `cluster_id, stage, count` then
/// `<metric>_mean, <metric>_std` for each metric in order.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricReport {
    pub metric_names: Vec<String>,
    pub rows: Vec<ReportRow>,
}

pub fn cluster_metric_report(metrics: &[ClusterMetric]) -> Result<MetricReport> {
    let Some(first) = metrics.first() else {
        return Ok(MetricReport {
            metric_names: Vec::new(),
            rows: Vec::new(),
        });
    };
    if let Some(m) = metrics
        .iter()
        .find(|m| m.num_clusters() != first.num_clusters() || m.count != first.count)
    {
        return Err(Error::Input(format!(
            "metric {} covers {} clusters, {} covers {}",
            m.metric_name,
            m.num_clusters(),
            first.metric_name,
            first.num_clusters()
        )));
    }
    let rows = (0..first.num_clusters())
        .map(|c| ReportRow {
            cluster_id: c,
            stage: first.stage_of[c],
            count: first.count[c],
            stats: metrics.iter().map(|m| (m.mean[c], m.std[c])).collect(),
        })
        .collect();
    Ok(MetricReport {
        metric_names: metrics.iter().map(|m| m.metric_name.clone()).collect(),
        rows,
    })
}

impl MetricReport {
    pub fn columns(&self) -> Vec<String> {
        let mut cols = vec!["cluster_id".to_string(), "stage".into(), "count".into()];
        for name in &self.metric_names {
            cols.push(format!("{name}_mean"));
            cols.push(format!("{name}_std"));
        }
        cols
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let csv_err = |e: csv::Error| Error::Input(format!("csv: {e}"));
        let mut w = csv::Writer::from_writer(out);
        w.write_record(self.columns()).map_err(csv_err)?;
        for row in &self.rows {
            let mut rec = vec![row.cluster_id.to_string(), row.stage.to_string(), row.count.to_string()];
            for (m, s) in &row.stats {
                rec.push(m.to_string());
                rec.push(s.to_string());
            }
            w.write_record(&rec).map_err(csv_err)?;
        }
        w.flush().map_err(|e| Error::Input(format!("csv: {e}")))
    }

    pub fn to_json(&self) -> Value {
        let rows = self
            .rows
            .iter()
            .map(|row| {
                let mut obj = Map::new();
                obj.insert("cluster_id".into(), row.cluster_id.into());
                obj.insert("stage".into(), row.stage.to_string().into());
                obj.insert("count".into(), row.count.into());
                for (name, (m, s)) in self.metric_names.iter().zip(&row.stats) {
                    obj.insert(format!("{name}_mean"), (*m).into());
                    obj.insert(format!("{name}_std"), (*s).into());
                }
                Value::Object(obj)
            })
            .collect();
        Value::Array(rows)
    }

    pub fn save(&self, csv_path: &Path, json_path: &Path) -> Result<()> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)?;
        std::fs::write(csv_path, buf).map_err(|e| Error::io(csv_path, e))?;
        let text = serde_json::to_string_pretty(&self.to_json()).expect("report serializes");
        std::fs::write(json_path, text + "\n").map_err(|e| Error::io(json_path, e))
    }
}
