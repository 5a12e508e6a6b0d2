use std::ops::Range;

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::numkit::{DenseMatrix, DenseVector, SeededRng};

/// Samples whose feature columns are split across parties.
///
/// The last party holds the labels.
#[derive(Debug, Clone, PartialEq)]
pub struct VerticalDataset {
    slices: Vec<DenseMatrix>,
    labels: DenseVector,
    feature_split: Vec<Range<usize>>,
}

impl VerticalDataset {
    pub fn new(slices: Vec<DenseMatrix>, labels: DenseVector) -> Result<Self> {
        if slices.is_empty() {
            return Err(Error::Config("a dataset needs at least one party".into()));
        }
        let n = labels.len();
        let mut feature_split = Vec::with_capacity(slices.len());
        let mut start = 0;
        for (k, s) in slices.iter().enumerate() {
            if s.rows() != n {
                return Err(Error::Shape(format!(
                    "party {k} holds {} rows but there are {n} labels",
                    s.rows()
                )));
            }
            feature_split.push(start..start + s.cols());
            start += s.cols();
        }
        Ok(Self {
            slices,
            labels,
            feature_split,
        })
    }

    pub fn n(&self) -> usize {
        self.labels.len()
    }

    pub fn parties(&self) -> usize {
        self.slices.len()
    }

    pub fn label_party(&self) -> usize {
        self.slices.len() - 1
    }

    pub fn dims(&self) -> Vec<usize> {
        self.slices.iter().map(DenseMatrix::cols).collect()
    }

    pub fn total_dim(&self) -> usize {
        self.slices.iter().map(DenseMatrix::cols).sum()
    }

    pub fn slice(&self, k: usize) -> &DenseMatrix {
        &self.slices[k]
    }

    pub fn slices(&self) -> &[DenseMatrix] {
        &self.slices
    }

    pub fn labels(&self) -> &DenseVector {
        &self.labels
    }

    pub fn feature_split(&self) -> &[Range<usize>] {
        &self.feature_split
    }

    /// Horizontal concatenation of every party's slice.
    pub fn concat_features(&self) -> DenseMatrix {
        DenseMatrix::hstack(&self.slices).expect("slices share the row count")
    }

    /// Replaces party `k`'s slice, keeping the row count.
    pub fn with_slice(&self, k: usize, slice: DenseMatrix) -> Result<Self> {
        let mut slices = self.slices.clone();
        if k >= slices.len() {
            return Err(Error::Config(format!("no party {k}")));
        }
        slices[k] = slice;
        Self::new(slices, self.labels.clone())
    }

    pub fn select_rows(&self, idx: &[usize]) -> Result<Self> {
        let slices = self
            .slices
            .iter()
            .map(|s| s.select_rows(idx))
            .collect::<Result<Vec<_>>>()?;
        let labels = DenseVector::from_raw(idx.iter().map(|&i| self.labels[i]).collect());
        Self::new(slices, labels)
    }

    /// Seeded split into `(train, held_out)`, the held-out part holding
    /// `round(n·eval_fraction)` samples.
    pub fn train_eval_split(&self, eval_fraction: f64, seed: u64) -> Result<(Self, Self)> {
        if !(0.0..1.0).contains(&eval_fraction) {
            return Err(Error::Config(format!(
                "evaluation fraction {eval_fraction} outside [0, 1)"
            )));
        }
        let mut idx: Vec<usize> = (0..self.n()).collect();
        SeededRng::new(seed, crate::streams::HOLDOUT).shuffle(&mut idx);
        let n_eval = (self.n() as f64 * eval_fraction).round() as usize;
        let (eval, train) = idx.split_at(n_eval);
        let mut train = train.to_vec();
        let mut eval = eval.to_vec();
        train.sort_unstable();
        eval.sort_unstable();
        Ok((self.select_rows(&train)?, self.select_rows(&eval)?))
    }

    /// SHA-256 over shapes, features and labels.
    pub fn fingerprint(&self) -> String {
        let mut h = Sha256::new();
        h.update((self.n() as u64).to_le_bytes());
        for s in &self.slices {
            h.update((s.cols() as u64).to_le_bytes());
            for v in s.as_slice() {
                h.update(v.to_le_bytes());
            }
        }
        for v in self.labels.iter() {
            h.update(v.to_le_bytes());
        }
        hex::encode(h.finalize())
    }
}

/// Splits `d` columns into `k` contiguous ranges, earlier parties taking
/// the remainder.
pub fn equal_split(d: usize, k: usize) -> Result<Vec<Range<usize>>> {
    if k == 0 || d < k {
        return Err(Error::Config(format!(
            "cannot split {d} columns among {k} parties"
        )));
    }
    let base = d / k;
    let extra = d % k;
    let mut out = Vec::with_capacity(k);
    let mut start = 0;
    for i in 0..k {
        let w = base + usize::from(i < extra);
        out.push(start..start + w);
        start += w;
    }
    Ok(out)
}

/// Ranges from per-party column counts.
pub fn split_from_widths(widths: &[usize]) -> Vec<Range<usize>> {
    let mut start = 0;
    widths
        .iter()
        .map(|&w| {
            let r = start..start + w;
            start += w;
            r
        })
        .collect()
}

/// Hands each party its column range. `label_party` must be the last one.
pub fn split_vertical(
    features: &DenseMatrix,
    labels: &DenseVector,
    split: &[Range<usize>],
    label_party: usize,
) -> Result<VerticalDataset> {
    if split.is_empty() {
        return Err(Error::Config("empty feature split".into()));
    }
    if label_party + 1 != split.len() {
        return Err(Error::Config(format!(
            "label party must be the last party ({}), got {label_party}",
            split.len() - 1
        )));
    }
    let mut expected = 0;
    for (k, r) in split.iter().enumerate() {
        if r.start != expected {
            return Err(Error::Config(format!(
                "party {k} starts at column {} but the previous range ended at {expected} \
                 (ranges must be ordered, disjoint and covering)",
                r.start
            )));
        }
        if r.is_empty() {
            return Err(Error::Config(format!("party {k} has no columns")));
        }
        expected = r.end;
    }
    if expected != features.cols() {
        return Err(Error::Config(format!(
            "split covers {expected} columns, data has {}",
            features.cols()
        )));
    }
    if labels.len() != features.rows() {
        return Err(Error::Shape(format!(
            "{} labels for {} rows",
            labels.len(),
            features.rows()
        )));
    }
    let slices = split
        .iter()
        .map(|r| features.columns(r.clone()))
        .collect::<Result<Vec<_>>>()?;
    VerticalDataset::new(slices, labels.clone())
}
