//! Joins prediction and reference rows on id and scores them.

use std::collections::HashMap;
use std::path::Path;

use medconsult_core::metrics::{evaluate, MetricReport};

use crate::error::{Error, Result};
use crate::formats::{load_text_rows, TextRow};

/// Pairs rows by id in reference order. Every reference needs a prediction
/// and every prediction a reference.
pub fn join_rows(predictions: &[TextRow], references: &[TextRow]) -> Result<(Vec<String>, Vec<String>)> {
    let mut by_id: HashMap<&str, &str> = HashMap::with_capacity(predictions.len());
    for p in predictions {
        if by_id.insert(&p.id, &p.text).is_some() {
            return Err(Error::Validation(format!("duplicate prediction id `{}`", p.id)));
        }
    }
    let mut preds = Vec::with_capacity(references.len());
    let mut refs = Vec::with_capacity(references.len());
    for r in references {
        let p = by_id.remove(r.id.as_str()).ok_or_else(|| Error::Validation(format!("no prediction for id `{}`", r.id)))?;
        preds.push(p.to_owned());
        refs.push(r.text.clone());
    }
    if let Some(extra) = by_id.keys().min() {
        return Err(Error::Validation(format!("prediction `{extra}` has no reference")));
    }
    Ok((preds, refs))
}

pub fn evaluate_rows(predictions: &[TextRow], references: &[TextRow]) -> Result<MetricReport> {
    let (p, r) = join_rows(predictions, references)?;
    Ok(evaluate(&p, &r)?)
}

pub fn evaluate_files(pred: &Path, reference: &Path) -> Result<MetricReport> {
    evaluate_rows(&load_text_rows(pred)?, &load_text_rows(reference)?)
}
