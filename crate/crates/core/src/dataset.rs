//! Per-step XRL dataset: transitions plus optional policy internals.
//!
//! Records are stored column-wise in file order. An episode is a maximal run
//! of records starting at `steps == 0` and ending at the first `done`.

use std::fmt;
use std::ops::Range;
use std::path::Path;
use std::str::FromStr;

use ndarray::{Array2, ArrayView1};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::xrld::{ArrayData, Container, Meta, NamedArray};

/// Tolerance on the row sum of `dist_probs`.
pub const PROB_ROW_TOL: f64 = 1e-5;

/// Names of the arrays a dataset can carry.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ArrayName {
    Observations,
    Actions,
    Rewards,
    Dones,
    Steps,
    Latents,
    DistProbs,
    CriticValues,
}

impl ArrayName {
    pub const ALL: [ArrayName; 8] = [
        ArrayName::Observations,
        ArrayName::Actions,
        ArrayName::Rewards,
        ArrayName::Dones,
        ArrayName::Steps,
        ArrayName::Latents,
        ArrayName::DistProbs,
        ArrayName::CriticValues,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ArrayName::Observations => "observations",
            ArrayName::Actions => "actions",
            ArrayName::Rewards => "rewards",
            ArrayName::Dones => "dones",
            ArrayName::Steps => "steps",
            ArrayName::Latents => "latents",
            ArrayName::DistProbs => "dist_probs",
            ArrayName::CriticValues => "critic_values",
        }
    }
}

impl fmt::Display for ArrayName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ArrayName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ArrayName::ALL
            .into_iter()
            .find(|n| n.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown array name {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct XrlDataset {
    pub meta: Meta,
    /// `[N × D_obs]`, flattened per step; the original shape is `meta.obs_shape`.
    pub observations: Array2<f32>,
    pub actions: Vec<i32>,
    pub rewards: Vec<f32>,
    pub dones: Vec<bool>,
    pub steps: Vec<i32>,
    pub latents: Option<Array2<f32>>,
    pub dist_probs: Option<Array2<f32>>,
    pub critic_values: Option<Vec<f32>>,
}

impl XrlDataset {
    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    pub fn num_actions(&self) -> usize {
        self.meta.num_actions as usize
    }

    pub fn discount(&self) -> f64 {
        self.meta.discount
    }

    pub fn has(&self, name: ArrayName) -> bool {
        match name {
            ArrayName::Latents => self.latents.is_some(),
            ArrayName::DistProbs => self.dist_probs.is_some(),
            ArrayName::CriticValues => self.critic_values.is_some(),
            _ => true,
        }
    }

    /// The named array as an `N × k` block of `f64`, or `None` if absent.
    pub fn column_block(&self, name: ArrayName) -> Option<Array2<f64>> {
        let n = self.len();
        let col = |v: Vec<f64>| Array2::from_shape_vec((n, 1), v).expect("length checked");
        Some(match name {
            ArrayName::Observations => self.observations.mapv(f64::from),
            ArrayName::Latents => self.latents.as_ref()?.mapv(f64::from),
            ArrayName::DistProbs => self.dist_probs.as_ref()?.mapv(f64::from),
            ArrayName::Actions => col(self.actions.iter().map(|&a| a as f64).collect()),
            ArrayName::Rewards => col(self.rewards.iter().map(|&r| r as f64).collect()),
            ArrayName::Dones => col(self.dones.iter().map(|&d| d as u8 as f64).collect()),
            ArrayName::Steps => col(self.steps.iter().map(|&s| s as f64).collect()),
            ArrayName::CriticValues => col(self.critic_values.as_ref()?.iter().map(|&v| v as f64).collect()),
        })
    }

    /// Greedy-action confidence: the largest entry of each `dist_probs` row.
    pub fn confidence(&self) -> Option<Vec<f64>> {
        let probs = self.dist_probs.as_ref()?;
        Some(
            probs
                .rows()
                .into_iter()
                .map(|row| row.iter().fold(f32::NEG_INFINITY, |m, &p| m.max(p)) as f64)
                .collect(),
        )
    }

    /// Record ranges of each episode, split at `steps == 0` and after each `done`.
    pub fn episode_ranges(&self) -> Vec<Range<usize>> {
        let mut ranges = Vec::new();
        let mut start = 0;
        for i in 0..self.len() {
            let next_starts = i + 1 == self.len() || self.dones[i] || self.steps[i + 1] == 0;
            if next_starts {
                ranges.push(start..i + 1);
                start = i + 1;
            }
        }
        ranges
    }

    /// Copy of the dataset with the first `n` records.
    pub fn truncated(&self, n: usize) -> XrlDataset {
        let rows = |m: &Array2<f32>| m.slice(ndarray::s![..n, ..]).to_owned();
        XrlDataset {
            meta: self.meta.clone(),
            observations: rows(&self.observations),
            actions: self.actions[..n].to_vec(),
            rewards: self.rewards[..n].to_vec(),
            dones: self.dones[..n].to_vec(),
            steps: self.steps[..n].to_vec(),
            latents: self.latents.as_ref().map(rows),
            dist_probs: self.dist_probs.as_ref().map(rows),
            critic_values: self.critic_values.as_ref().map(|v| v[..n].to_vec()),
        }
    }

    /// Drops a trailing episode that never reached `done`.
    pub fn without_truncated_tail(&self) -> XrlDataset {
        match truncated_tail_start(self) {
            Some(cut) => self.truncated(cut),
            None => self.clone(),
        }
    }

    pub fn to_container(&self) -> Container {
        let n = self.len();
        let matrix = |name: &str, m: &Array2<f32>| {
            NamedArray::new(
                name,
                vec![m.nrows(), m.ncols()],
                ArrayData::F32(m.iter().copied().collect()),
            )
        };
        let mut arrays = vec![
            matrix("observations", &self.observations),
            NamedArray::new("actions", vec![n], ArrayData::I32(self.actions.clone())),
            NamedArray::new("rewards", vec![n], ArrayData::F32(self.rewards.clone())),
            NamedArray::new(
                "dones",
                vec![n],
                ArrayData::U8(self.dones.iter().map(|&d| d as u8).collect()),
            ),
            NamedArray::new("steps", vec![n], ArrayData::I32(self.steps.clone())),
        ];
        if let Some(l) = &self.latents {
            arrays.push(matrix("latents", l));
        }
        if let Some(p) = &self.dist_probs {
            arrays.push(matrix("dist_probs", p));
        }
        if let Some(v) = &self.critic_values {
            arrays.push(NamedArray::new(
                "critic_values",
                vec![v.len()],
                ArrayData::F32(v.clone()),
            ));
        }
        Container {
            meta: self.meta.clone(),
            attrs: None,
            arrays,
        }
    }

    pub fn from_container(c: Container) -> Result<Self> {
        let find = |name: &str| c.get(name);
        let required = |name: &str| find(name).ok_or_else(|| Error::Format(format!("required array {name:?} missing")));

        let n = required("actions")?.data.len();
        let f32_matrix = |a: &NamedArray| -> Result<Array2<f32>> {
            let ArrayData::F32(v) = &a.data else {
                return Err(Error::Format(format!("array {} must be f32", a.name)));
            };
            let cols = if a.shape.len() >= 2 {
                a.shape[1..].iter().product()
            } else {
                1
            };
            let rows = a.shape.first().copied().unwrap_or(0);
            if rows != n {
                return Err(Error::Format(format!("array {} has {rows} rows, expected {n}", a.name)));
            }
            Array2::from_shape_vec((rows, cols), v.clone())
                .map_err(|e| Error::Corruption(format!("array {}: {e}", a.name)))
        };
        let f32_vec = |a: &NamedArray| -> Result<Vec<f32>> {
            match &a.data {
                ArrayData::F32(v) if v.len() == n => Ok(v.clone()),
                ArrayData::F32(v) => Err(Error::Format(format!(
                    "array {} has {} entries, expected {n}",
                    a.name,
                    v.len()
                ))),
                _ => Err(Error::Format(format!("array {} must be f32", a.name))),
            }
        };
        let i32_vec = |a: &NamedArray| -> Result<Vec<i32>> {
            match &a.data {
                ArrayData::I32(v) if v.len() == n => Ok(v.clone()),
                ArrayData::I32(v) => Err(Error::Format(format!(
                    "array {} has {} entries, expected {n}",
                    a.name,
                    v.len()
                ))),
                _ => Err(Error::Format(format!("array {} must be i32", a.name))),
            }
        };

        let dones = match &required("dones")?.data {
            ArrayData::U8(v) if v.len() == n => v.iter().map(|&b| b != 0).collect(),
            _ => return Err(Error::Format("array dones must be u8 of length N".into())),
        };

        Ok(XrlDataset {
            observations: f32_matrix(required("observations")?)?,
            actions: i32_vec(required("actions")?)?,
            rewards: f32_vec(required("rewards")?)?,
            dones,
            steps: i32_vec(required("steps")?)?,
            latents: find("latents").map(f32_matrix).transpose()?,
            dist_probs: find("dist_probs").map(f32_matrix).transpose()?,
            critic_values: find("critic_values").map(f32_vec).transpose()?,
            meta: c.meta,
        })
    }
}

pub fn load_dataset(path: &Path) -> Result<XrlDataset> {
    XrlDataset::from_container(Container::read(path)?)
}

pub fn save_dataset(dataset: &XrlDataset, path: &Path) -> Result<()> {
    dataset.to_container().write(path)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Violation {
    /// An array does not have N rows.
    Shape {
        array: String,
        expected: usize,
        found: usize,
    },
    /// `steps[index]` is not the successor of the previous record (or 0 after a done).
    StepSequence {
        index: usize,
        expected: i32,
        found: i32,
    },
    /// A `dist_probs` row is negative, non-finite, or does not sum to 1.
    ProbabilityRow {
        index: usize,
        sum: f64,
    },
    ActionRange {
        index: usize,
        action: i32,
    },
    NonFinite {
        array: String,
        index: usize,
    },
    Header {
        message: String,
    },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::Shape { array, expected, found } => {
                write!(f, "array {array}: {found} rows, expected {expected}")
            }
            Violation::StepSequence { index, expected, found } => {
                write!(
                    f,
                    "step sequence broken at index {index}: expected {expected}, found {found}"
                )
            }
            Violation::ProbabilityRow { index, sum } => {
                write!(f, "dist_probs row {index} is not a distribution (sum {sum})")
            }
            Violation::ActionRange { index, action } => {
                write!(f, "action {action} at index {index} out of range")
            }
            Violation::NonFinite { array, index } => {
                write!(f, "non-finite value in {array} at index {index}")
            }
            Violation::Header { message } => write!(f, "header: {message}"),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
    /// Start index of a trailing episode with no `done`; such an episode is dropped
    /// before deriving fields.
    pub truncated_tail: Option<usize>,
}

impl ValidationReport {
    pub fn is_clean(&self) -> bool {
        self.violations.is_empty()
    }
}

fn truncated_tail_start(d: &XrlDataset) -> Option<usize> {
    if d.is_empty() || *d.dones.last().unwrap() {
        return None;
    }
    let last = d.len() - 1;
    let start = (0..=last).rev().find(|&i| d.steps[i] == 0 || (i > 0 && d.dones[i - 1]));
    Some(start.unwrap_or(0))
}

pub fn validate(d: &XrlDataset) -> ValidationReport {
    let n = d.len();
    let mut violations = Vec::new();

    if d.meta.num_actions < 2 {
        violations.push(Violation::Header {
            message: format!("num_actions = {} (needs >= 2)", d.meta.num_actions),
        });
    }
    if !(d.meta.discount > 0.0 && d.meta.discount <= 1.0) {
        violations.push(Violation::Header {
            message: format!("discount {} outside (0, 1]", d.meta.discount),
        });
    }

    let mut shape = |array: &str, found: usize| {
        if found != n {
            violations.push(Violation::Shape {
                array: array.into(),
                expected: n,
                found,
            });
        }
    };
    shape("observations", d.observations.nrows());
    shape("rewards", d.rewards.len());
    shape("dones", d.dones.len());
    shape("steps", d.steps.len());
    if let Some(l) = &d.latents {
        shape("latents", l.nrows());
    }
    if let Some(p) = &d.dist_probs {
        shape("dist_probs", p.nrows());
    }
    if let Some(v) = &d.critic_values {
        shape("critic_values", v.len());
    }
    if !violations.is_empty() {
        // Row-wise checks below would index out of bounds.
        return ValidationReport {
            violations,
            truncated_tail: None,
        };
    }

    for i in 0..n {
        let expected = if i == 0 || d.dones[i - 1] {
            0
        } else {
            d.steps[i - 1] + 1
        };
        if d.steps[i] != expected {
            violations.push(Violation::StepSequence {
                index: i,
                expected,
                found: d.steps[i],
            });
        }
    }

    for (i, &a) in d.actions.iter().enumerate() {
        if a < 0 || a as u32 >= d.meta.num_actions {
            violations.push(Violation::ActionRange { index: i, action: a });
        }
    }

    if let Some(p) = &d.dist_probs {
        if p.ncols() != d.num_actions() {
            violations.push(Violation::Header {
                message: format!(
                    "dist_probs has {} columns but num_actions = {}",
                    p.ncols(),
                    d.num_actions()
                ),
            });
        }
        for (i, row) in p.rows().into_iter().enumerate() {
            let sum: f64 = row.iter().map(|&x| x as f64).sum();
            let bad_entry = row.iter().any(|&x| !x.is_finite() || x < 0.0);
            if bad_entry || !sum.is_finite() || (sum - 1.0).abs() > PROB_ROW_TOL {
                violations.push(Violation::ProbabilityRow { index: i, sum });
            }
        }
    }

    let mut finite = |array: &str, values: ArrayView1<f32>| {
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            violations.push(Violation::NonFinite {
                array: array.into(),
                index: i,
            });
        }
    };
    finite("rewards", ArrayView1::from(&d.rewards));
    if let Some(v) = &d.critic_values {
        finite("critic_values", ArrayView1::from(v));
    }
    for (name, m) in [("observations", Some(&d.observations)), ("latents", d.latents.as_ref())] {
        if let Some(m) = m {
            if let Some(pos) = m.iter().position(|v| !v.is_finite()) {
                violations.push(Violation::NonFinite {
                    array: name.into(),
                    index: pos / m.ncols().max(1),
                });
            }
        }
    }

    ValidationReport {
        violations,
        truncated_tail: truncated_tail_start(d),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DerivedFields {
    pub start_indices: Vec<usize>,
    pub done_indices: Vec<usize>,
    /// Discounted return-to-go `G_t = r_t + γ G_{t+1}`, accumulated in f64.
    pub returns_to_go: Vec<f64>,
    pub episode_ids: Vec<usize>,
}

impl DerivedFields {
    pub fn num_episodes(&self) -> usize {
        self.start_indices.len()
    }
}

/// Computes episode boundaries and return-to-go. The dataset must validate
/// cleanly and must not end in a truncated episode.
pub fn derive(d: &XrlDataset) -> Result<DerivedFields> {
    let report = validate(d);
    if let Some(v) = report.violations.first() {
        return Err(Error::Precondition(format!(
            "dataset has {} validation violation(s), first: {v}",
            report.violations.len()
        )));
    }
    if let Some(cut) = report.truncated_tail {
        return Err(Error::Precondition(format!(
            "trailing episode starting at index {cut} has no terminal step; drop it first"
        )));
    }

    let n = d.len();
    let gamma = d.discount();
    let start_indices: Vec<usize> = (0..n).filter(|&i| d.steps[i] == 0).collect();
    let done_indices: Vec<usize> = (0..n).filter(|&i| d.dones[i]).collect();

    let mut episode_ids = vec![0usize; n];
    let mut episode = 0usize;
    for i in 0..n {
        if i > 0 && d.steps[i] == 0 {
            episode += 1;
        }
        episode_ids[i] = episode;
    }

    let mut returns_to_go = vec![0.0f64; n];
    let mut next = 0.0f64;
    for i in (0..n).rev() {
        if d.dones[i] {
            next = 0.0;
        }
        next = d.rewards[i] as f64 + gamma * next;
        returns_to_go[i] = next;
    }

    Ok(DerivedFields {
        start_indices,
        done_indices,
        returns_to_go,
        episode_ids,
    })
}
