use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::{Error, Result, Scalar, Tensor};

/// Index of the largest entry; ties go to the lowest index.
pub fn argmax<T: Scalar>(row: &[T]) -> usize {
    let mut best = 0;
    for (i, v) in row.iter().enumerate().skip(1) {
        if *v > row[best] {
            best = i;
        }
    }
    best
}

/// Number of rows of `logits` whose argmax equals the label.
pub fn correct_count<T: Scalar>(logits: &Tensor<T>, labels: &[usize]) -> Result<usize> {
    let (b, k) = logits.dims2("top1")?;
    if labels.len() != b {
        return Err(Error::shape("top1", "labels", b, labels.len()));
    }
    Ok(logits
        .data()
        .chunks(k)
        .zip(labels)
        .filter(|(row, &y)| argmax(row) == y)
        .count())
}

/// Top-1 accuracy in percent.
pub fn top1<T: Scalar>(logits: &Tensor<T>, labels: &[usize]) -> Result<f64> {
    if labels.is_empty() {
        return Err(Error::invalid("top1", "empty batch"));
    }
    Ok(100.0 * correct_count(logits, labels)? as f64 / labels.len() as f64)
}

pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Some(if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    })
}

pub const FINAL_WINDOW: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FinalTop1 {
    pub value: f64,
    /// Set when fewer than [`FINAL_WINDOW`] epochs were available.
    pub short_history: bool,
}

/// Median test top-1 over the last ten epochs (all epochs if fewer).
pub fn final_top1(history: &[f64]) -> Result<FinalTop1> {
    let start = history.len().saturating_sub(FINAL_WINDOW);
    let value = median(&history[start..]).ok_or_else(|| Error::invalid("final_top1", "empty history"))?;
    Ok(FinalTop1 {
        value,
        short_history: history.len() < FINAL_WINDOW,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub loss: f64,
    pub top1: f64,
    pub lr: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EpochHistory {
    pub epochs: Vec<EpochRecord>,
}

impl EpochHistory {
    pub fn push(&mut self, r: EpochRecord) {
        self.epochs.push(r);
    }

    pub fn len(&self) -> usize {
        self.epochs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.epochs.is_empty()
    }

    pub fn top1_series(&self) -> Vec<f64> {
        self.epochs.iter().map(|e| e.top1).collect()
    }

    pub fn final_top1(&self) -> Result<FinalTop1> {
        final_top1(&self.top1_series())
    }

    /// `epoch,loss,top1,lr` with fixed precision so reruns are byte-identical.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("epoch,loss,top1,lr\n");
        for e in &self.epochs {
            let _ = writeln!(s, "{},{:.10},{:.4},{:.10}", e.epoch, e.loss, e.top1, e.lr);
        }
        s
    }
}
