//! Differentiable maps `R^p -> R^q`.
//!
//! The likelihood-ratio direction measure needs the partial derivatives of
//! the estimated disturbance map with respect to each observed variable.
//! Networks, linear unmixings, exact mixing inverses and their compositions
//! all implement [`DifferentiableMap`].

use nalgebra::{DMatrix, DVector};

pub trait DifferentiableMap: Send + Sync {
    fn input_dim(&self) -> usize;
    fn output_dim(&self) -> usize;

    fn apply(&self, x: &[f64]) -> Vec<f64>;

    /// Jacobian at `x`, shape `output_dim × input_dim`.
    fn jacobian(&self, x: &[f64]) -> DMatrix<f64>;
}

impl<M: DifferentiableMap + ?Sized> DifferentiableMap for &M {
    fn input_dim(&self) -> usize {
        (**self).input_dim()
    }
    fn output_dim(&self) -> usize {
        (**self).output_dim()
    }
    fn apply(&self, x: &[f64]) -> Vec<f64> {
        (**self).apply(x)
    }
    fn jacobian(&self, x: &[f64]) -> DMatrix<f64> {
        (**self).jacobian(x)
    }
}

impl<M: DifferentiableMap + ?Sized> DifferentiableMap for Box<M> {
    fn input_dim(&self) -> usize {
        (**self).input_dim()
    }
    fn output_dim(&self) -> usize {
        (**self).output_dim()
    }
    fn apply(&self, x: &[f64]) -> Vec<f64> {
        (**self).apply(x)
    }
    fn jacobian(&self, x: &[f64]) -> DMatrix<f64> {
        (**self).jacobian(x)
    }
}

/// `x ↦ A (x - shift)`.
#[derive(Debug, Clone)]
pub struct AffineMap {
    pub matrix: DMatrix<f64>,
    pub shift: DVector<f64>,
}

impl AffineMap {
    pub fn linear(matrix: DMatrix<f64>) -> Self {
        let shift = DVector::zeros(matrix.ncols());
        Self { matrix, shift }
    }

    /// Maps standardized coordinates back to raw ones: `x_raw = mean + std ⊙ x`.
    pub fn destandardize(mean: &[f64], std: &[f64]) -> Self {
        let d = mean.len();
        let matrix = DMatrix::from_diagonal(&DVector::from_column_slice(std));
        // x_raw = S x + m = S (x - (-S^{-1} m))
        let shift = DVector::from_iterator(d, (0..d).map(|i| -mean[i] / std[i]));
        Self { matrix, shift }
    }
}

impl DifferentiableMap for AffineMap {
    fn input_dim(&self) -> usize {
        self.matrix.ncols()
    }
    fn output_dim(&self) -> usize {
        self.matrix.nrows()
    }
    fn apply(&self, x: &[f64]) -> Vec<f64> {
        let v = DVector::from_column_slice(x) - &self.shift;
        (&self.matrix * v).as_slice().to_vec()
    }
    fn jacobian(&self, _x: &[f64]) -> DMatrix<f64> {
        self.matrix.clone()
    }
}

/// `outer ∘ inner`.
pub struct Composed<A, B> {
    pub inner: A,
    pub outer: B,
}

impl<A: DifferentiableMap, B: DifferentiableMap> DifferentiableMap for Composed<A, B> {
    fn input_dim(&self) -> usize {
        self.inner.input_dim()
    }
    fn output_dim(&self) -> usize {
        self.outer.output_dim()
    }
    fn apply(&self, x: &[f64]) -> Vec<f64> {
        self.outer.apply(&self.inner.apply(x))
    }
    fn jacobian(&self, x: &[f64]) -> DMatrix<f64> {
        let mid = self.inner.apply(x);
        self.outer.jacobian(&mid) * self.inner.jacobian(x)
    }
}

/// Reorders inputs and outputs of a map: `y[i] = g(x∘perm_in)[perm_out[i]]`.
///
/// Used to present the same estimated map under swapped variable roles
/// without recomputing anything, so results are bit-identical.
pub struct Permuted<M> {
    pub map: M,
    /// `input_perm[k]` is the inner input index fed by outer input `k`.
    pub input_perm: Vec<usize>,
    /// `output_perm[i]` is the inner output reported as outer output `i`.
    pub output_perm: Vec<usize>,
}

impl<M: DifferentiableMap> Permuted<M> {
    fn inner_input(&self, x: &[f64]) -> Vec<f64> {
        let mut inner = vec![0.0; x.len()];
        for (k, &p) in self.input_perm.iter().enumerate() {
            inner[p] = x[k];
        }
        inner
    }
}

impl<M: DifferentiableMap> DifferentiableMap for Permuted<M> {
    fn input_dim(&self) -> usize {
        self.map.input_dim()
    }
    fn output_dim(&self) -> usize {
        self.map.output_dim()
    }
    fn apply(&self, x: &[f64]) -> Vec<f64> {
        let y = self.map.apply(&self.inner_input(x));
        self.output_perm.iter().map(|&o| y[o]).collect()
    }
    fn jacobian(&self, x: &[f64]) -> DMatrix<f64> {
        let j = self.map.jacobian(&self.inner_input(x));
        DMatrix::from_fn(self.output_perm.len(), self.input_perm.len(), |r, c| j[(self.output_perm[r], self.input_perm[c])])
    }
}

/// Apply a map to every row of a data matrix.
pub fn apply_rows<M: DifferentiableMap + ?Sized>(map: &M, x: &DMatrix<f64>) -> DMatrix<f64> {
    let n = x.nrows();
    let mut out = DMatrix::zeros(n, map.output_dim());
    let mut row = vec![0.0; x.ncols()];
    for i in 0..n {
        for (j, r) in row.iter_mut().enumerate() {
            *r = x[(i, j)];
        }
        let y = map.apply(&row);
        for (j, v) in y.into_iter().enumerate() {
            out[(i, j)] = v;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn destandardize_inverts_standardization() {
        let m = AffineMap::destandardize(&[1.0, -2.0], &[2.0, 0.5]);
        let y = m.apply(&[0.5, 4.0]);
        assert!((y[0] - 2.0).abs() < 1e-15);
        assert!((y[1] - 0.0).abs() < 1e-15);
    }

    #[test]
    fn permuted_swaps_roles() {
        let a = AffineMap::linear(DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 4.0]));
        let p = Permuted { map: a.clone(), input_perm: vec![1, 0], output_perm: vec![1, 0] };
        let x = [5.0, 7.0];
        let direct = a.apply(&[7.0, 5.0]);
        let swapped = p.apply(&x);
        assert_eq!(swapped, vec![direct[1], direct[0]]);
        let j = p.jacobian(&x);
        assert_eq!(j[(0, 0)], 4.0);
        assert_eq!(j[(0, 1)], 3.0);
    }
}
