use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Standardized {
    pub values: Vec<f64>,
    pub mean: f64,
    /// Population standard deviation (divides by `n`).
    pub std: f64,
}

pub fn mean_and_std(samples: &[f64]) -> (f64, f64) {
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    let var = samples.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Rescale to zero mean and unit population variance.
///
/// The returned `mean`/`std` let callers undo the map, or add `ln std` to an
/// entropy computed on the standardized values.
pub fn standardize(samples: &[f64]) -> Result<Standardized> {
    if samples.is_empty() {
        return Err(Error::Empty("standardize".into()));
    }
    let (mean, std) = mean_and_std(samples);
    let scale = samples.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if !std.is_finite() || std <= 1e-12 * scale.max(f64::MIN_POSITIVE) {
        return Err(Error::Degenerate("zero variance".into()));
    }
    let values = samples.iter().map(|v| (v - mean) / std).collect();
    Ok(Standardized { values, mean, std })
}
