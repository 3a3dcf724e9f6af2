use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{contract, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Reduction {
    /// Sum of squared errors over the batch and outputs.
    #[default]
    Sum,
    /// Sum divided by the number of elements.
    Mean,
}

/// Squared-error loss and its gradient with respect to `pred`.
pub fn mse_loss(pred: ArrayView2<'_, f64>, target: ArrayView2<'_, f64>, reduction: Reduction) -> Result<(f64, Array2<f64>)> {
    if pred.dim() != target.dim() {
        return Err(contract(format!("prediction {:?} vs target {:?}", pred.dim(), target.dim())));
    }
    let diff = &pred - &target;
    let sse = diff.iter().map(|d| d * d).sum::<f64>();
    let mut grad = diff * 2.0;
    match reduction {
        Reduction::Sum => Ok((sse, grad)),
        Reduction::Mean => {
            let n = pred.len().max(1) as f64;
            grad /= n;
            Ok((sse / n, grad))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn hand_cases() {
        let t = array![[1.0, 2.0, 3.0]];
        assert_eq!(mse_loss(t.view(), t.view(), Reduction::Sum).unwrap().0, 0.0);
        let (l, g) = mse_loss(array![[2.0, 2.0, 2.0]].view(), t.view(), Reduction::Sum).unwrap();
        assert_eq!(l, 2.0);
        assert_eq!(g, array![[2.0, 0.0, -2.0]]);
        let (_, g) = mse_loss(array![[2.0]].view(), array![[1.0]].view(), Reduction::Sum).unwrap();
        assert_eq!(g, array![[2.0]]);
        let (l, _) = mse_loss(array![[2.0, 2.0, 2.0]].view(), t.view(), Reduction::Mean).unwrap();
        assert!((l - 2.0 / 3.0).abs() < 1e-15);
        assert!(mse_loss(t.view(), array![[1.0]].view(), Reduction::Sum).is_err());
    }
}
