use serde::{Deserialize, Serialize};

use crate::dataset::{ClassId, BENIGN};
use crate::{Error, Result};

/// Binary confusion tallies with attack as the positive class.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub tn: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

impl ConfusionCounts {
    pub fn total(&self) -> u64 {
        self.tp + self.tn + self.fp + self.fn_
    }

    /// Fraction of correct predictions regardless of class.
    pub fn plain_accuracy(&self) -> Result<f64> {
        if self.total() == 0 {
            return Err(Error::Undefined("accuracy of zero samples".into()));
        }
        Ok((self.tp + self.tn) as f64 / self.total() as f64)
    }

    /// Swaps the roles of the two classes.
    pub fn swapped(&self) -> Self {
        ConfusionCounts {
            tp: self.tn,
            tn: self.tp,
            fp: self.fn_,
            fn_: self.fp,
        }
    }
}

/// Tallies predictions against truth; every non-benign label is positive.
pub fn confusion(preds: &[ClassId], truth: &[ClassId]) -> Result<ConfusionCounts> {
    if preds.len() != truth.len() {
        return Err(Error::Shape(format!(
            "{} predictions for {} truth labels",
            preds.len(),
            truth.len()
        )));
    }
    if preds.is_empty() {
        return Err(Error::Empty("no predictions to score".into()));
    }
    let mut c = ConfusionCounts::default();
    for (&p, &t) in preds.iter().zip(truth) {
        match (p != BENIGN, t != BENIGN) {
            (true, true) => c.tp += 1,
            (false, false) => c.tn += 1,
            (true, false) => c.fp += 1,
            (false, true) => c.fn_ += 1,
        }
    }
    Ok(c)
}

/// Mean of specificity and recall. Both classes must be present.
pub fn attack_accuracy(c: &ConfusionCounts) -> Result<f64> {
    let negatives = c.tn + c.fp;
    let positives = c.tp + c.fn_;
    if negatives == 0 {
        return Err(Error::Undefined("attack accuracy needs benign samples".into()));
    }
    if positives == 0 {
        return Err(Error::Undefined("attack accuracy needs attack samples".into()));
    }
    Ok((c.tn as f64 / negatives as f64 + c.tp as f64 / positives as f64) / 2.0)
}

/// Precision and recall; `None` where the denominator is zero.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PrecisionRecall {
    pub precision: Option<f64>,
    pub recall: Option<f64>,
}

pub fn precision_recall(c: &ConfusionCounts) -> PrecisionRecall {
    let ratio = |num: u64, den: u64| (den > 0).then(|| num as f64 / den as f64);
    PrecisionRecall {
        precision: ratio(c.tp, c.tp + c.fp),
        recall: ratio(c.tp, c.tp + c.fn_),
    }
}
