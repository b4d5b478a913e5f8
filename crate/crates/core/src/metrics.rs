//! Multi-label evaluation: ROC-AUC and average precision for classification
//! tags, RMSE for regression tags, macro-averaged across tags.

use std::fmt::Write as _;

use serde::Serialize;
use thiserror::Error;

#[derive(Error, Debug)]
pub enum MetricsError {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("empty input: {0}")]
    Empty(String),
    #[error("prediction rows do not align with the manifest: {0}")]
    Alignment(String),
}

pub type Result<T> = std::result::Result<T, MetricsError>;

/// Per-tag treatment: bi-modal tags are ranked (AUCs), pseudo-uniform tags
/// are regressed (RMSE).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum TagKind {
    Classification,
    Regression,
}

impl TagKind {
    pub fn parse(text: &str) -> Option<TagKind> {
        match text.trim() {
            "classification" => Some(TagKind::Classification),
            "regression" => Some(TagKind::Regression),
            _ => None,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            TagKind::Classification => "classification",
            TagKind::Regression => "regression",
        }
    }
}

/// ROC-AUC by the rank method: the Mann-Whitney statistic
/// `P(score_pos > score_neg) + 0.5 * P(tie)`, computed with average ranks so
/// ties get half credit. Returns `None` when labels are single-class.
pub fn roc_auc(scores: &[f64], labels: &[bool]) -> Option<f64> {
    assert_eq!(scores.len(), labels.len(), "scores/labels length mismatch");
    let n_pos = labels.iter().filter(|&&l| l).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return None;
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].partial_cmp(&scores[b]).expect("non-finite score"));

    // average ranks over tie groups (1-based ranks)
    let mut rank_sum_pos = 0.0f64;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        let avg_rank = (i + 1 + j + 1) as f64 / 2.0;
        for &idx in &order[i..=j] {
            if labels[idx] {
                rank_sum_pos += avg_rank;
            }
        }
        i = j + 1;
    }
    let u = rank_sum_pos - (n_pos * (n_pos + 1)) as f64 / 2.0;
    Some(u / (n_pos as f64 * n_neg as f64))
}

/// Average precision with ties grouped at distinct score thresholds:
/// `AP = sum over thresholds of (delta recall) * precision`. Scores are
/// walked in descending order (stable over the input for equal scores), and
/// every positive inside a tie block is credited with the block-end
/// precision, so a constant ranker scores exactly the positive rate.
/// Returns `None` when there are no positives.
pub fn average_precision(scores: &[f64], labels: &[bool]) -> Option<f64> {
    assert_eq!(scores.len(), labels.len(), "scores/labels length mismatch");
    let n_pos = labels.iter().filter(|&&l| l).count();
    if n_pos == 0 {
        return None;
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].partial_cmp(&scores[a]).expect("non-finite score"));

    let mut ap = 0.0f64;
    let mut tp = 0usize;
    let mut seen = 0usize;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        let tp_block = order[i..=j].iter().filter(|&&idx| labels[idx]).count();
        tp += tp_block;
        seen += j - i + 1;
        if tp_block > 0 {
            let precision = tp as f64 / seen as f64;
            let delta_recall = tp_block as f64 / n_pos as f64;
            ap += precision * delta_recall;
        }
        i = j + 1;
    }
    Some(ap)
}

/// Root mean squared error over all cells.
pub fn rmse(pred: &[f64], target: &[f64]) -> Result<f64> {
    if pred.len() != target.len() {
        return Err(MetricsError::Shape(format!("{} vs {}", pred.len(), target.len())));
    }
    if pred.is_empty() {
        return Err(MetricsError::Empty("rmse of zero cells".into()));
    }
    let sq: f64 = pred.iter().zip(target).map(|(p, t)| (p - t) * (p - t)).sum();
    Ok((sq / pred.len() as f64).sqrt())
}

#[derive(Debug, Clone, Serialize)]
pub struct TagMetrics {
    pub name: String,
    pub kind: TagKind,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub roc_auc: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pr_auc: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rmse: Option<f64>,
}

/// Micro-averaged AUCs over pooled (song, tag) classification cells;
/// secondary view behind a flag.
#[derive(Debug, Clone, Serialize)]
pub struct MicroMetrics {
    pub roc_auc: Option<f64>,
    pub pr_auc: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct EvalReport {
    pub per_tag: Vec<TagMetrics>,
    pub macro_roc_auc: Option<f64>,
    pub macro_pr_auc: Option<f64>,
    pub macro_rmse: Option<f64>,
    pub n_songs: usize,
    /// Classification tags excluded from the macro AUCs because their labels
    /// were single-class in this split.
    pub n_excluded: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub micro: Option<MicroMetrics>,
    /// Estimator conventions, recorded so numbers are comparable.
    pub notes: String,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct EvalOptions {
    /// Also compute micro-averaged AUCs over pooled (song, tag) cells.
    pub micro: bool,
}

/// Evaluate a song-by-tag prediction matrix (row-major, one row per song)
/// against targets of identical layout.
///
/// Classification targets are thresholded at 0.5 into labels; regression
/// tags contribute RMSE. Macro values are unweighted means over tags that
/// have the metric defined; undefined tags are counted, never imputed.
pub fn evaluate(
    predictions: &[f64],
    targets: &[f64],
    names: &[String],
    kinds: &[TagKind],
    options: EvalOptions,
) -> Result<EvalReport> {
    let n_tags = kinds.len();
    if n_tags == 0 || names.len() != n_tags {
        return Err(MetricsError::Shape("tag names/kinds mismatch".into()));
    }
    if predictions.len() != targets.len() || predictions.len() % n_tags != 0 {
        return Err(MetricsError::Shape(format!(
            "{} predictions vs {} targets over {} tags",
            predictions.len(),
            targets.len(),
            n_tags
        )));
    }
    let n_songs = predictions.len() / n_tags;
    if n_songs == 0 {
        return Err(MetricsError::Empty("no songs to evaluate".into()));
    }

    let mut per_tag = Vec::with_capacity(n_tags);
    let mut n_excluded = 0usize;
    let column = |m: &[f64], t: usize| -> Vec<f64> {
        (0..n_songs).map(|s| m[s * n_tags + t]).collect()
    };
    for t in 0..n_tags {
        let scores = column(predictions, t);
        let tcol = column(targets, t);
        match kinds[t] {
            TagKind::Classification => {
                let labels: Vec<bool> = tcol.iter().map(|&v| v >= 0.5).collect();
                let roc = roc_auc(&scores, &labels);
                let ap = average_precision(&scores, &labels);
                if roc.is_none() {
                    n_excluded += 1;
                }
                per_tag.push(TagMetrics {
                    name: names[t].clone(),
                    kind: kinds[t],
                    roc_auc: roc,
                    pr_auc: ap,
                    rmse: None,
                });
            }
            TagKind::Regression => {
                per_tag.push(TagMetrics {
                    name: names[t].clone(),
                    kind: kinds[t],
                    roc_auc: None,
                    pr_auc: None,
                    rmse: Some(rmse(&scores, &tcol)?),
                });
            }
        }
    }

    let mean_of = |vals: Vec<f64>| -> Option<f64> {
        if vals.is_empty() {
            None
        } else {
            Some(vals.iter().sum::<f64>() / vals.len() as f64)
        }
    };
    let macro_roc_auc = mean_of(per_tag.iter().filter_map(|t| t.roc_auc).collect());
    let macro_pr_auc = mean_of(per_tag.iter().filter_map(|t| t.pr_auc).collect());
    let macro_rmse = mean_of(per_tag.iter().filter_map(|t| t.rmse).collect());

    let micro = if options.micro {
        let mut scores = Vec::new();
        let mut labels = Vec::new();
        for t in 0..n_tags {
            if kinds[t] == TagKind::Classification {
                for s in 0..n_songs {
                    scores.push(predictions[s * n_tags + t]);
                    labels.push(targets[s * n_tags + t] >= 0.5);
                }
            }
        }
        Some(MicroMetrics {
            roc_auc: roc_auc(&scores, &labels),
            pr_auc: average_precision(&scores, &labels),
        })
    } else {
        None
    };

    Ok(EvalReport {
        per_tag,
        macro_roc_auc,
        macro_pr_auc,
        macro_rmse,
        n_songs,
        n_excluded,
        micro,
        notes: "pr_auc = average precision (step-wise, ties grouped at distinct scores); \
                roc_auc = rank method with half tie credit; macro = unweighted mean over \
                defined tags"
            .into(),
    })
}

impl EvalReport {
    fn fmt_opt(v: Option<f64>) -> String {
        match v {
            Some(x) => format!("{}", x),
            None => "-".into(),
        }
    }

    /// Flat text table plus a summary block.
    pub fn to_text(&self) -> String {
        let mut out = String::from("tag\tkind\troc_auc\tpr_auc\trmse\n");
        for t in &self.per_tag {
            let _ = writeln!(
                out,
                "{}\t{}\t{}\t{}\t{}",
                t.name,
                t.kind.name(),
                Self::fmt_opt(t.roc_auc),
                Self::fmt_opt(t.pr_auc),
                Self::fmt_opt(t.rmse)
            );
        }
        let _ = writeln!(out, "\nsummary");
        let _ = writeln!(out, "n_songs\t{}", self.n_songs);
        let _ = writeln!(out, "macro_roc_auc\t{}", Self::fmt_opt(self.macro_roc_auc));
        let _ = writeln!(out, "macro_pr_auc\t{}", Self::fmt_opt(self.macro_pr_auc));
        let _ = writeln!(out, "macro_rmse\t{}", Self::fmt_opt(self.macro_rmse));
        let _ = writeln!(out, "excluded_single_class_tags\t{}", self.n_excluded);
        if let Some(micro) = &self.micro {
            let _ = writeln!(out, "micro_roc_auc\t{}", Self::fmt_opt(micro.roc_auc));
            let _ = writeln!(out, "micro_pr_auc\t{}", Self::fmt_opt(micro.pr_auc));
        }
        let _ = writeln!(out, "notes\t{}", self.notes);
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}
