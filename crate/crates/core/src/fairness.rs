//! Group fairness for binary classifiers.
//!
//! Scores are thresholded per subgroup of a protected attribute, confusion
//! matrices are tallied per subgroup, and five confusion-matrix metrics are
//! compared against a privileged subgroup. A metric ratio outside
//! `[epsilon, 1/epsilon]` counts as a violation.

use std::collections::BTreeMap;

use serde::Serialize;
use serde_json::json;

use crate::data::ColumnData;
use crate::error::{ExplainError, Result};
use crate::explainer::{Explainer, TaskType};
use crate::explanation::{ColumnValues, Explanation, ResultTable};

pub const DEFAULT_CUTOFF: f64 = 0.5;
pub const DEFAULT_EPSILON: f64 = 0.8;

/// Relative slack on the ratio bounds so values that equal a bound up to
/// rounding are not flagged.
const BOUND_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Metric {
    Tpr,
    Acc,
    Ppv,
    Fpr,
    Stp,
}

impl Metric {
    pub const ALL: [Metric; 5] = [Metric::Tpr, Metric::Acc, Metric::Ppv, Metric::Fpr, Metric::Stp];

    pub fn as_str(&self) -> &'static str {
        match self {
            Metric::Tpr => "TPR",
            Metric::Acc => "ACC",
            Metric::Ppv => "PPV",
            Metric::Fpr => "FPR",
            Metric::Stp => "STP",
        }
    }

    fn index(&self) -> usize {
        *self as usize
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct Confusion {
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

impl Confusion {
    pub fn n(&self) -> u64 {
        self.tp + self.fp + self.tn + self.fn_
    }

    pub fn add(&mut self, other: &Confusion) {
        self.tp += other.tp;
        self.fp += other.fp;
        self.tn += other.tn;
        self.fn_ += other.fn_;
    }

    fn tally(&mut self, actual: bool, predicted: bool) {
        match (actual, predicted) {
            (true, true) => self.tp += 1,
            (false, true) => self.fp += 1,
            (false, false) => self.tn += 1,
            (true, false) => self.fn_ += 1,
        }
    }

    pub fn metric(&self, m: Metric) -> Option<f64> {
        let ratio = |a: u64, b: u64| (b > 0).then(|| a as f64 / b as f64);
        match m {
            Metric::Tpr => ratio(self.tp, self.tp + self.fn_),
            Metric::Acc => ratio(self.tp + self.tn, self.n()),
            Metric::Ppv => ratio(self.tp, self.tp + self.fp),
            Metric::Fpr => ratio(self.fp, self.fp + self.tn),
            Metric::Stp => ratio(self.tp + self.fp, self.n()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SubgroupConfusion {
    pub protected: String,
    /// Subgroups with at least one row, in level order.
    pub subgroups: Vec<String>,
    pub confusion: Vec<Confusion>,
    pub cutoffs: Vec<f64>,
    /// Levels of the protected column with no rows; left out of the analysis.
    pub excluded: Vec<String>,
}

impl SubgroupConfusion {
    pub fn get(&self, subgroup: &str) -> Option<&Confusion> {
        self.subgroups
            .iter()
            .position(|s| s == subgroup)
            .map(|i| &self.confusion[i])
    }

    pub fn total(&self) -> Confusion {
        let mut c = Confusion::default();
        self.confusion.iter().for_each(|x| c.add(x));
        c
    }
}

/// Tallies confusion matrices per subgroup of `protected`.
///
/// A row is predicted positive iff its score is at least its subgroup's
/// cutoff; subgroups missing from `cutoffs` use 0.5.
pub fn subgroup_confusion(
    explainer: &Explainer,
    protected: &str,
    cutoffs: &BTreeMap<String, f64>,
) -> Result<SubgroupConfusion> {
    if explainer.task() != TaskType::Classification {
        return Err(ExplainError::param(
            "task",
            "fairness analysis requires a classification model",
        ));
    }
    let col = explainer
        .features()
        .column_index(protected)
        .ok_or_else(|| ExplainError::param("protected", format!("unknown column '{protected}'")))?;
    let levels = &explainer.features().schema()[col].levels;
    let ColumnData::Categorical(codes) = explainer.features().column(col) else {
        return Err(ExplainError::param(
            "protected",
            format!("column '{protected}' is numeric; a categorical column is required"),
        ));
    };
    for (k, c) in cutoffs {
        if !levels.contains(k) {
            return Err(ExplainError::param("cutoffs", format!("unknown subgroup '{k}'")));
        }
        if !(0.0..=1.0).contains(c) {
            return Err(ExplainError::param(
                "cutoffs",
                format!("cutoff for '{k}' must lie in [0, 1]"),
            ));
        }
    }
    let cutoff_of: Vec<f64> = levels
        .iter()
        .map(|l| cutoffs.get(l).copied().unwrap_or(DEFAULT_CUTOFF))
        .collect();
    let scores = explainer.predictions()?;
    let y = explainer.target();
    let mut per_level = vec![Confusion::default(); levels.len()];
    for (i, &code) in codes.iter().enumerate() {
        let l = code as usize;
        per_level[l].tally(y[i] == 1.0, scores[i] >= cutoff_of[l]);
    }
    let mut out = SubgroupConfusion {
        protected: protected.to_string(),
        subgroups: Vec::new(),
        confusion: Vec::new(),
        cutoffs: Vec::new(),
        excluded: Vec::new(),
    };
    for (l, c) in per_level.into_iter().enumerate() {
        if c.n() == 0 {
            out.excluded.push(levels[l].clone());
        } else {
            out.subgroups.push(levels[l].clone());
            out.confusion.push(c);
            out.cutoffs.push(cutoff_of[l]);
        }
    }
    Ok(out)
}

/// Metric values per subgroup; `None` where the denominator is zero.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricScores {
    pub subgroups: Vec<String>,
    pub scores: Vec<[Option<f64>; 5]>,
}

impl MetricScores {
    pub fn get(&self, subgroup: &str, metric: Metric) -> Option<f64> {
        let i = self.subgroups.iter().position(|s| s == subgroup)?;
        self.scores[i][metric.index()]
    }

    fn index_of(&self, subgroup: &str) -> Result<usize> {
        self.subgroups
            .iter()
            .position(|s| s == subgroup)
            .ok_or_else(|| ExplainError::param("privileged", format!("'{subgroup}' is not a subgroup with data")))
    }
}

pub fn fairness_metrics(confusion: &SubgroupConfusion) -> MetricScores {
    MetricScores {
        subgroups: confusion.subgroups.clone(),
        scores: confusion
            .confusion
            .iter()
            .map(|c| Metric::ALL.map(|m| c.metric(m)))
            .collect(),
    }
}

/// Whether `ratio` falls outside `[epsilon, 1/epsilon]`.
pub fn is_violation(ratio: f64, epsilon: f64) -> bool {
    ratio < epsilon * (1.0 - BOUND_TOLERANCE) || ratio > (1.0 / epsilon) * (1.0 + BOUND_TOLERANCE)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Fair,
    Borderline,
    NotFair,
}

impl Verdict {
    pub fn from_violations(count: usize) -> Verdict {
        match count {
            0 => Verdict::Fair,
            1 => Verdict::Borderline,
            _ => Verdict::NotFair,
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            Verdict::Fair => "fair",
            Verdict::Borderline => "borderline",
            Verdict::NotFair => "not_fair",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Violation {
    pub subgroup: String,
    pub metric: Metric,
    pub ratio: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FairnessReport {
    pub protected: String,
    pub privileged: String,
    pub epsilon: f64,
    pub confusion: SubgroupConfusion,
    pub scores: MetricScores,
    /// Ratio to the privileged subgroup, per subgroup (incl. privileged) and metric.
    pub ratios: Vec<[Option<f64>; 5]>,
    pub violations: Vec<Violation>,
    /// Metrics left out because the privileged value is undefined or zero.
    pub skipped_metrics: Vec<Metric>,
    /// Count of undefined unprivileged ratios skipped in metrics that were checked.
    pub undefined_skipped: usize,
    pub verdict: Verdict,
    pub narrative: Vec<String>,
}

fn fmt_ratio(r: f64) -> String {
    format!("{r:.3}")
}

/// Compares each subgroup's metrics to the privileged subgroup.
///
/// Verdict: `fair` with no violations, `borderline` with exactly one,
/// `not_fair` with two or more.
pub fn fairness_check(
    explainer: &Explainer,
    protected: &str,
    privileged: &str,
    epsilon: f64,
    cutoffs: &BTreeMap<String, f64>,
) -> Result<FairnessReport> {
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(ExplainError::param("epsilon", "must lie strictly between 0 and 1"));
    }
    let confusion = subgroup_confusion(explainer, protected, cutoffs)?;
    let scores = fairness_metrics(&confusion);
    let priv_idx = scores.index_of(privileged)?;
    let upper = 1.0 / epsilon;

    let mut narrative = vec![
        format!("Fairness check for protected attribute '{protected}' with privileged subgroup '{privileged}'."),
        format!(
            "Ratios of each subgroup's metric to the privileged value are acceptable within [{epsilon}, {}].",
            crate::data::format_number(upper)
        ),
    ];
    for e in &confusion.excluded {
        narrative.push(format!("Warning: subgroup '{e}' has no rows and is excluded."));
    }

    let mut ratios = vec![[None; 5]; scores.subgroups.len()];
    let mut violations = Vec::new();
    let mut skipped_metrics = Vec::new();
    let mut undefined_skipped = 0;
    for m in Metric::ALL {
        let priv_value = scores.scores[priv_idx][m.index()];
        let base = match priv_value {
            Some(v) if v > 0.0 => v,
            Some(_) => {
                skipped_metrics.push(m);
                narrative.push(format!(
                    "Warning: {} of the privileged subgroup is 0, so ratios are undefined; metric skipped.",
                    m.as_str()
                ));
                continue;
            }
            None => {
                skipped_metrics.push(m);
                narrative.push(format!(
                    "Warning: {} of the privileged subgroup is undefined; metric skipped.",
                    m.as_str()
                ));
                continue;
            }
        };
        let mut parts = Vec::new();
        for (i, g) in scores.subgroups.iter().enumerate() {
            if i == priv_idx {
                ratios[i][m.index()] = Some(1.0);
                continue;
            }
            match scores.scores[i][m.index()] {
                Some(v) => {
                    let r = v / base;
                    ratios[i][m.index()] = Some(r);
                    if is_violation(r, epsilon) {
                        violations.push(Violation {
                            subgroup: g.clone(),
                            metric: m,
                            ratio: r,
                        });
                        parts.push(format!("{g} {} (violation)", fmt_ratio(r)));
                    } else {
                        parts.push(format!("{g} {}", fmt_ratio(r)));
                    }
                }
                None => {
                    undefined_skipped += 1;
                    parts.push(format!("{g} undefined (skipped)"));
                }
            }
        }
        let mut line = format!(
            "{}: {}",
            m.as_str(),
            if parts.is_empty() {
                "no other subgroups".to_string()
            } else {
                parts.join(", ")
            }
        );
        if m == Metric::Fpr {
            line.push_str(&format!(
                ". For FPR a ratio above {} means the unprivileged subgroup receives more false positives.",
                crate::data::format_number(upper)
            ));
        }
        narrative.push(line);
    }
    if undefined_skipped > 0 {
        narrative.push(format!("Skipped {undefined_skipped} undefined metric value(s)."));
    }
    let verdict = Verdict::from_violations(violations.len());
    if violations.is_empty() {
        narrative.push("No metric ratio falls outside the acceptable range.".to_string());
    } else {
        let listed: Vec<String> = violations
            .iter()
            .map(|v| format!("{} for '{}' ({})", v.metric.as_str(), v.subgroup, fmt_ratio(v.ratio)))
            .collect();
        narrative.push(format!(
            "{} violation(s) found: {}.",
            violations.len(),
            listed.join("; ")
        ));
    }
    narrative.push(match verdict {
        Verdict::Fair => "Conclusion: the model is fair with respect to this attribute.".to_string(),
        Verdict::Borderline => "Conclusion: borderline; exactly one metric ratio is out of range.".to_string(),
        Verdict::NotFair => {
            "Conclusion: the model is not fair; two or more metric ratios are out of range.".to_string()
        }
    });

    Ok(FairnessReport {
        protected: protected.to_string(),
        privileged: privileged.to_string(),
        epsilon,
        confusion,
        scores,
        ratios,
        violations,
        skipped_metrics,
        undefined_skipped,
        verdict,
        narrative,
    })
}

impl FairnessReport {
    pub fn ratio(&self, subgroup: &str, metric: Metric) -> Option<f64> {
        let i = self.scores.subgroups.iter().position(|s| s == subgroup)?;
        self.ratios[i][metric.index()]
    }

    pub fn to_explanation(&self, label: &str) -> Explanation {
        let mut subgroup = Vec::new();
        let mut metric = Vec::new();
        let mut score = Vec::new();
        let mut ratio = Vec::new();
        let mut violation = Vec::new();
        for m in Metric::ALL {
            for (i, g) in self.scores.subgroups.iter().enumerate() {
                subgroup.push(g.clone());
                metric.push(m.as_str().to_string());
                score.push(self.scores.scores[i][m.index()]);
                ratio.push(self.ratios[i][m.index()]);
                let flagged = self.violations.iter().any(|v| v.metric == m && &v.subgroup == g);
                violation.push(i64::from(flagged));
            }
        }
        let result = ResultTable::new()
            .with("subgroup", ColumnValues::Text(subgroup))
            .with("metric", ColumnValues::Text(metric))
            .with("score", ColumnValues::MaybeFloat(score))
            .with("ratio", ColumnValues::MaybeFloat(ratio))
            .with("violation", ColumnValues::Int(violation));

        let metrics: Vec<_> = Metric::ALL
            .iter()
            .map(|m| {
                let groups: Vec<_> = self
                    .scores
                    .subgroups
                    .iter()
                    .enumerate()
                    .filter(|(_, g)| **g != self.privileged)
                    .map(|(i, g)| json!({"subgroup": g, "ratio": self.ratios[i][m.index()], "score": self.scores.scores[i][m.index()]}))
                    .collect();
                json!({"metric": m.as_str(), "skipped": self.skipped_metrics.contains(m), "subgroups": groups})
            })
            .collect();
        let confusion: BTreeMap<&str, _> = self
            .confusion
            .subgroups
            .iter()
            .zip(&self.confusion.confusion)
            .map(|(g, c)| (g.as_str(), *c))
            .collect();
        let chart = json!({
            "type": "fairness_check",
            "protected": self.protected,
            "privileged": self.privileged,
            "epsilon": self.epsilon,
            "band": [self.epsilon, 1.0 / self.epsilon],
            "metrics": metrics,
            "confusion": confusion,
            "violations": self.violations,
            "verdict": self.verdict.as_str(),
            "narrative": self.narrative,
        });
        let cutoffs: BTreeMap<&str, f64> = self
            .confusion
            .subgroups
            .iter()
            .zip(&self.confusion.cutoffs)
            .map(|(g, c)| (g.as_str(), *c))
            .collect();
        Explanation::new("fairness", label, result, chart)
            .with_meta("protected", self.protected.as_str())
            .with_meta("privileged", self.privileged.as_str())
            .with_meta("epsilon", self.epsilon)
            .with_meta("cutoffs", json!(cutoffs))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParityLoss {
    /// Per metric; `None` when the privileged value is undefined or zero.
    pub values: BTreeMap<Metric, Option<f64>>,
    /// (subgroup, metric) pairs left out because the subgroup value is undefined or zero.
    pub skipped: Vec<(String, Metric)>,
}

/// Sum over unprivileged subgroups of `|ln(metric / privileged metric)|`.
pub fn parity_loss(scores: &MetricScores, privileged: &str) -> Result<ParityLoss> {
    let p = scores.index_of(privileged)?;
    let mut values = BTreeMap::new();
    let mut skipped = Vec::new();
    for m in Metric::ALL {
        let Some(base) = scores.scores[p][m.index()].filter(|v| *v > 0.0) else {
            values.insert(m, None);
            continue;
        };
        let mut total = 0.0;
        for (i, g) in scores.subgroups.iter().enumerate() {
            if i == p {
                continue;
            }
            match scores.scores[i][m.index()] {
                Some(v) if v > 0.0 => total += (v / base).ln().abs(),
                _ => skipped.push((g.clone(), m)),
            }
        }
        values.insert(m, Some(total));
    }
    Ok(ParityLoss { values, skipped })
}
