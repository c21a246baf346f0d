use std::io::Write;

use serde::{Deserialize, Serialize};

use super::protocol::{label_names, Evaluation};
use crate::error::{Error, Result};

/// One line of the per-fold results table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub subject: String,
    pub variant: String,
    pub class_set: u8,
    pub fold: usize,
    pub accuracy: f64,
}

impl Evaluation {
    pub fn rows(&self) -> Vec<ResultRow> {
        self.folds
            .iter()
            .map(|f| ResultRow {
                subject: f.subject.clone(),
                variant: f.variant.to_string(),
                class_set: self.class_set.into(),
                fold: f.fold,
                accuracy: f.accuracy,
            })
            .collect()
    }
}

/// Writes rows as CSV with a `subject,variant,class_set,fold,accuracy` header.
pub fn write_results_csv<W: Write>(rows: &[ResultRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r).map_err(|e| Error::Format(format!("results csv: {e}")))?;
    }
    w.flush().map_err(|e| Error::Format(format!("results csv: {e}")))
}

/// Per-variant entry of [`Summary`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariantSummary {
    pub variant: String,
    pub subjects: Vec<String>,
    pub mean: f64,
    pub sd: f64,
    pub fold_accuracies: Vec<f64>,
    /// Class names in row/column order of `confusion`.
    pub classes: Vec<String>,
    pub confusion: Vec<Vec<usize>>,
    pub p_value_vs_fudnn: Option<f64>,
}

/// Machine-readable digest: means, spreads and p-values per variant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub class_set: u8,
    /// States how `sd` was computed.
    pub sd_kind: String,
    pub variants: Vec<VariantSummary>,
}

impl Summary {
    pub fn new(evaluations: &[Evaluation]) -> Result<Self> {
        let first = evaluations.first().ok_or_else(|| Error::Contract("nothing to summarize".into()))?;
        let variants = evaluations
            .iter()
            .map(|e| {
                let mut subjects: Vec<String> = e.folds.iter().map(|f| f.subject.clone()).collect();
                subjects.dedup();
                VariantSummary {
                    variant: e.variant.to_string(),
                    subjects,
                    mean: e.metrics.mean,
                    sd: e.metrics.sd,
                    fold_accuracies: e.metrics.fold_accuracies.clone(),
                    classes: label_names(e.class_set).into_iter().map(String::from).collect(),
                    confusion: e.metrics.confusion.clone(),
                    p_value_vs_fudnn: e.metrics.p_value,
                }
            })
            .collect();
        Ok(Summary {
            class_set: first.class_set.into(),
            sd_kind: "sample standard deviation over folds (n-1)".into(),
            variants,
        })
    }
}
