use nalgebra::DMatrix;

use crate::error::{param, Error, Result};
use crate::rng;
use crate::stats::{mean_and_std, standardize};

/// Observations with a segment label per row.
#[derive(Debug, Clone, PartialEq)]
pub struct SegmentedDataset {
    x: DMatrix<f64>,
    labels: Vec<usize>,
    n_segments: usize,
}

impl SegmentedDataset {
    /// Labels must cover `0..E` with at least two rows per segment.
    pub fn new(x: DMatrix<f64>, labels: Vec<usize>) -> Result<Self> {
        if x.nrows() != labels.len() {
            return Err(Error::Dimension { expected: x.nrows(), got: labels.len() });
        }
        if x.nrows() == 0 || x.ncols() == 0 {
            return Err(Error::Empty("dataset".into()));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::Degenerate("non-finite observation".into()));
        }
        let n_segments = labels.iter().max().map_or(0, |m| m + 1);
        let mut counts = vec![0usize; n_segments];
        for &l in &labels {
            counts[l] += 1;
        }
        if let Some(e) = counts.iter().position(|&c| c < 2) {
            return Err(param(format!("segment {e} has {} rows; every segment needs at least 2", counts[e])));
        }
        Ok(Self { x, labels, n_segments })
    }

    pub fn x(&self) -> &DMatrix<f64> {
        &self.x
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn dim(&self) -> usize {
        self.x.ncols()
    }

    pub fn n_segments(&self) -> usize {
        self.n_segments
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        self.x.column(j).iter().copied().collect()
    }

    pub fn row(&self, i: usize) -> Vec<f64> {
        self.x.row(i).iter().copied().collect()
    }

    /// Row indices of each segment.
    pub fn segment_rows(&self) -> Vec<Vec<usize>> {
        let mut rows = vec![Vec::new(); self.n_segments];
        for (i, &l) in self.labels.iter().enumerate() {
            rows[l].push(i);
        }
        rows
    }

    /// Dataset restricted to the given columns, in the given order.
    pub fn select_columns(&self, cols: &[usize]) -> Result<Self> {
        if let Some(&c) = cols.iter().find(|&&c| c >= self.dim()) {
            return Err(param(format!("column {c} out of range for dimension {}", self.dim())));
        }
        let x = DMatrix::from_fn(self.n(), cols.len(), |i, j| self.x[(i, cols[j])]);
        Ok(Self { x, labels: self.labels.clone(), n_segments: self.n_segments })
    }

    pub fn with_x(&self, x: DMatrix<f64>) -> Result<Self> {
        if x.nrows() != self.n() {
            return Err(Error::Dimension { expected: self.n(), got: x.nrows() });
        }
        Ok(Self { x, labels: self.labels.clone(), n_segments: self.n_segments })
    }

    /// Per-column zero mean, unit population variance. Returns the column
    /// means and standard deviations alongside.
    pub fn standardized(&self) -> Result<(Self, Vec<f64>, Vec<f64>)> {
        let mut x = self.x.clone();
        let mut means = Vec::with_capacity(self.dim());
        let mut stds = Vec::with_capacity(self.dim());
        for j in 0..self.dim() {
            let s = standardize(&self.column(j)).map_err(|_| Error::Degenerate(format!("column {} has zero variance", j + 1)))?;
            x.column_mut(j).copy_from_slice(&s.values);
            means.push(s.mean);
            stds.push(s.std);
        }
        Ok((Self { x, labels: self.labels.clone(), n_segments: self.n_segments }, means, stds))
    }

    pub fn column_stats(&self) -> Vec<(f64, f64)> {
        (0..self.dim()).map(|j| mean_and_std(&self.column(j))).collect()
    }

    /// Same observations with labels randomly permuted across rows.
    pub fn with_shuffled_labels(&self, seed: u64) -> Self {
        use rand::seq::SliceRandom;
        let mut labels = self.labels.clone();
        labels.shuffle(&mut rng::rng(seed));
        Self { x: self.x.clone(), labels, n_segments: self.n_segments }
    }
}
