//! L2-regularized multinomial logistic regression fitted by full-batch
//! gradient descent with backtracking. Class ids are `0..C`.

use ndarray::{s, Array1, Array2, ArrayView2, Axis};

use crate::error::{invalid, Error, Result};

const ARMIJO: f64 = 1e-4;
const MIN_STEP: f64 = 1e-20;

#[derive(Debug, Clone, PartialEq)]
pub struct LinearModel {
    /// `C × D`.
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitConfig {
    /// L2 strength; `None` picks `1e-4 · mean ‖f‖²`.
    pub lambda: Option<f64>,
    pub max_iter: usize,
    pub tol: f64,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            lambda: None,
            max_iter: 500,
            tol: 1e-6,
        }
    }
}

#[derive(Debug, Clone)]
pub struct FitResult {
    pub model: LinearModel,
    pub lambda: f64,
    /// Loss after every accepted step, starting with the initial loss.
    pub loss_trace: Vec<f64>,
    pub gradient_norm: f64,
}

impl LinearModel {
    pub fn zeros(n_classes: usize, dim: usize) -> Self {
        Self {
            weights: Array2::zeros((n_classes, dim)),
            bias: Array1::zeros(n_classes),
        }
    }

    pub fn n_classes(&self) -> usize {
        self.weights.nrows()
    }

    pub fn dim(&self) -> usize {
        self.weights.ncols()
    }

    /// `N × C` class scores.
    pub fn scores(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        if x.ncols() != self.dim() {
            return Err(Error::DimensionMismatch(format!(
                "features have {} columns, model expects {}",
                x.ncols(),
                self.dim()
            )));
        }
        Ok(x.dot(&self.weights.t()) + &self.bias)
    }

    fn norm_sq(&self) -> f64 {
        self.weights
            .iter()
            .chain(self.bias.iter())
            .map(|v| v * v)
            .sum()
    }
}

pub fn default_lambda(x: ArrayView2<f64>) -> f64 {
    if x.nrows() == 0 {
        return 0.0;
    }
    1e-4 * x.iter().map(|v| v * v).sum::<f64>() / x.nrows() as f64
}

/// Mean cross-entropy plus `(λ/2)‖W‖²` (bias unregularized), with gradient.
pub fn loss_and_gradient(
    model: &LinearModel,
    x: ArrayView2<f64>,
    labels: &[usize],
    lambda: f64,
) -> Result<(f64, LinearModel)> {
    if labels.len() != x.nrows() {
        return Err(Error::DimensionMismatch(format!(
            "{} labels for {} rows",
            labels.len(),
            x.nrows()
        )));
    }
    let n = x.nrows() as f64;
    let mut p = model.scores(x)?;
    let mut loss = 0.0;
    for (mut row, &y) in p.axis_iter_mut(Axis(0)).zip(labels) {
        let m = row.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        let z: f64 = row.iter().map(|s| (s - m).exp()).sum();
        loss += m + z.ln() - row[y];
        row.mapv_inplace(|s| (s - m).exp() / z);
        row[y] -= 1.0;
    }
    p /= n;
    let w_sq: f64 = model.weights.iter().map(|v| v * v).sum();
    let grad = LinearModel {
        weights: p.t().dot(&x) + &(&model.weights * lambda),
        bias: p.sum_axis(Axis(0)),
    };
    Ok((loss / n + 0.5 * lambda * w_sq, grad))
}

pub fn fit(x: ArrayView2<f64>, labels: &[usize], cfg: &FitConfig) -> Result<FitResult> {
    let (n, d) = x.dim();
    if labels.len() != n {
        return Err(Error::DimensionMismatch(format!(
            "{} labels for {n} rows",
            labels.len()
        )));
    }
    let n_classes = labels.iter().max().map_or(0, |m| m + 1);
    let mut seen = vec![false; n_classes];
    labels.iter().for_each(|&y| seen[y] = true);
    if seen.iter().filter(|s| **s).count() < 2 {
        return Err(invalid("classifier needs at least two distinct classes"));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(invalid("features contain non-finite values"));
    }
    let lambda = cfg.lambda.unwrap_or_else(|| default_lambda(x));
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(Error::Config(format!(
            "lambda must be finite and >= 0, got {lambda}"
        )));
    }

    // the softmax Hessian is bounded by ½·max(‖x‖² + 1) + λ
    let max_sq = x
        .axis_iter(Axis(0))
        .map(|r| r.iter().map(|v| v * v).sum::<f64>())
        .fold(0.0, f64::max);
    let mut step = 1.0 / (0.5 * (max_sq + 1.0) + lambda);

    let mut model = LinearModel::zeros(n_classes, d);
    let (mut loss, mut grad) = loss_and_gradient(&model, x, labels, lambda)?;
    let mut trace = vec![loss];
    let mut gnorm = grad.norm_sq().sqrt();
    for _ in 0..cfg.max_iter {
        if gnorm <= cfg.tol {
            break;
        }
        step *= 2.0;
        let accepted = loop {
            let cand = LinearModel {
                weights: &model.weights - &(&grad.weights * step),
                bias: &model.bias - &(&grad.bias * step),
            };
            let (l, g) = loss_and_gradient(&cand, x, labels, lambda)?;
            if l <= loss - ARMIJO * step * gnorm * gnorm {
                break Some((cand, l, g));
            }
            step *= 0.5;
            if step < MIN_STEP {
                break None;
            }
        };
        let Some((m, l, g)) = accepted else { break };
        model = m;
        loss = l;
        grad = g;
        gnorm = grad.norm_sq().sqrt();
        trace.push(loss);
    }
    if !loss.is_finite() {
        return Err(Error::Numeric("classifier loss diverged".into()));
    }
    Ok(FitResult {
        model,
        lambda,
        loss_trace: trace,
        gradient_norm: gnorm,
    })
}

/// Argmax class per row; ties go to the smallest id.
pub fn predict(model: &LinearModel, x: ArrayView2<f64>) -> Result<Vec<usize>> {
    let s = model.scores(x)?;
    Ok(s.axis_iter(Axis(0))
        .map(|row| {
            let mut best = 0;
            for c in 1..row.len() {
                if row[c] > row[best] {
                    best = c;
                }
            }
            best
        })
        .collect())
}

/// Mean per-class recall over classes `0..n_classes` that occur in `labels`.
pub fn balanced_accuracy(preds: &[usize], labels: &[usize], n_classes: usize) -> Result<f64> {
    if preds.len() != labels.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} predictions for {} labels",
            preds.len(),
            labels.len()
        )));
    }
    let mut hits = vec![0usize; n_classes];
    let mut total = vec![0usize; n_classes];
    for (&p, &y) in preds.iter().zip(labels) {
        if y >= n_classes {
            return Err(invalid(format!("label {y} outside 0..{n_classes}")));
        }
        total[y] += 1;
        hits[y] += usize::from(p == y);
    }
    let present: Vec<usize> = (0..n_classes).filter(|&c| total[c] > 0).collect();
    if present.len() < n_classes {
        log::warn!(
            "{} of {n_classes} classes have no labels and are excluded",
            n_classes - present.len()
        );
    }
    if present.is_empty() {
        return Err(invalid("no labels to score"));
    }
    let sum: f64 = present
        .iter()
        .map(|&c| hits[c] as f64 / total[c] as f64)
        .sum();
    Ok(sum / present.len() as f64)
}

/// Stacks equal-length rows into a matrix.
pub fn stack_rows(rows: &[Vec<f64>]) -> Result<Array2<f64>> {
    let d = rows.first().map_or(0, Vec::len);
    let mut out = Array2::zeros((rows.len(), d));
    for (i, r) in rows.iter().enumerate() {
        if r.len() != d {
            return Err(Error::DimensionMismatch(
                "feature rows differ in length".into(),
            ));
        }
        out.slice_mut(s![i, ..]).assign(&ndarray::aview1(r));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn separable_clouds_fit_perfectly() {
        let x = array![
            [0.0, 1.0],
            [0.2, 1.1],
            [0.1, 0.9],
            [3.0, -1.0],
            [3.2, -0.8],
            [2.9, -1.2]
        ];
        let y = [0, 0, 0, 1, 1, 1];
        let cfg = FitConfig {
            lambda: Some(1e-4),
            ..Default::default()
        };
        let r = fit(x.view(), &y, &cfg).unwrap();
        assert_eq!(predict(&r.model, x.view()).unwrap(), y);
        assert!(r.loss_trace.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn zero_features_give_priors() {
        let x = Array2::zeros((4, 3));
        let r = fit(x.view(), &[0, 1, 0, 1], &FitConfig::default()).unwrap();
        assert!((r.model.bias[0] - r.model.bias[1]).abs() < 1e-9);
    }

    #[test]
    fn zero_model_predicts_first_class() {
        let m = LinearModel::zeros(3, 2);
        assert_eq!(
            predict(&m, array![[1.0, 2.0], [-1.0, 0.5]].view()).unwrap(),
            vec![0, 0]
        );
    }

    #[test]
    fn single_class_rejected() {
        let x = Array2::zeros((3, 2));
        assert!(fit(x.view(), &[1, 1, 1], &FitConfig::default()).is_err());
    }

    #[test]
    fn balanced_accuracy_cases() {
        assert_eq!(balanced_accuracy(&[0, 1, 1], &[0, 1, 1], 2).unwrap(), 1.0);
        assert_eq!(
            balanced_accuracy(&[0, 0, 0, 0], &[0, 0, 1, 1], 2).unwrap(),
            0.5
        );
        // class 2 never appears in labels
        assert_eq!(balanced_accuracy(&[2, 1], &[0, 1], 3).unwrap(), 0.5);
    }
}
