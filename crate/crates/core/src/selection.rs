//! Covariate selection by the largest gap in the ordered `beta_hat_j^2`, and
//! the selection estimator `T_gamma` built on it.

use ndarray::Array1;

use crate::error::{require_n, Error, Result};
use crate::estimators::{ensure_whitened, naive_tau2, subset_psi_sum};
use crate::model::{build_w, CovariateModel, LabeledDataset, WMatrix};

#[derive(Debug, Clone, PartialEq)]
pub struct SelectionResult {
    /// Selected zero-based column indices, ascending.
    pub selected: Vec<usize>,
    pub threshold_value: f64,
    /// `lambda_k = v_(k) - v_(k-1)` over the ascending order statistics.
    pub gaps: Vec<f64>,
    pub split_used: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SelectionOptions {
    pub split: bool,
    pub split_fraction: f64,
    /// Keep at most this many of the largest selected columns.
    pub cap: Option<usize>,
}

impl Default for SelectionOptions {
    fn default() -> Self {
        Self {
            split: false,
            split_fraction: 0.5,
            cap: Some(50),
        }
    }
}

/// Per-column unbiased estimates `beta_hat_j^2`.
pub fn beta_squared_estimates(w: &WMatrix) -> Result<Array1<f64>> {
    let n = w.n();
    require_n(n, 2)?;
    let denom = n as f64 * (n as f64 - 1.0);
    Ok(w
        .column_sums()
        .iter()
        .zip(w.column_square_sums().iter())
        .map(|(s, s2)| (s * s - s2) / denom)
        .collect())
}

/// Select `{j : beta2_j > v_(k*)}` where `k*` is the first position of the
/// largest gap between consecutive ascending order statistics.
pub fn gap_select(beta2: &[f64]) -> Result<SelectionResult> {
    let p = beta2.len();
    if p < 2 {
        return Err(Error::TooFewColumns { needed: 2, got: p });
    }
    if beta2.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidDataset("non-finite beta_hat^2".into()));
    }
    let mut order: Vec<usize> = (0..p).collect();
    order.sort_by(|&a, &b| beta2[a].total_cmp(&beta2[b]).then(a.cmp(&b)));
    let sorted: Vec<f64> = order.iter().map(|&j| beta2[j]).collect();
    let gaps: Vec<f64> = sorted.windows(2).map(|w| w[1] - w[0]).collect();
    let mut best = 0;
    for (k, &g) in gaps.iter().enumerate() {
        if g > gaps[best] {
            best = k;
        }
    }
    // gap `best` separates sorted[best] and sorted[best + 1]; the order
    // statistic at the gap position is the upper one
    let threshold_value = sorted[best + 1];
    let selected = (0..p).filter(|&j| beta2[j] > threshold_value).collect();
    Ok(SelectionResult {
        selected,
        threshold_value,
        gaps,
        split_used: false,
    })
}

/// Keep the `cap` selected columns with the largest `beta2`.
fn apply_cap(selected: &mut Vec<usize>, beta2: &[f64], cap: usize) {
    if selected.len() <= cap {
        return;
    }
    selected.sort_by(|&a, &b| beta2[b].total_cmp(&beta2[a]).then(a.cmp(&b)));
    selected.truncate(cap);
    selected.sort_unstable();
}

/// Everything `T_gamma` computes on the way, for variance estimation.
#[derive(Debug, Clone)]
pub struct GammaFit {
    pub tau2: f64,
    /// `tau_hat^2` on the evaluation rows.
    pub naive_tau2: f64,
    pub selection: SelectionResult,
    /// `beta_hat_j^2` on the evaluation rows.
    pub beta2: Array1<f64>,
    /// Rows used for `tau_hat^2` and the correction.
    pub eval: LabeledDataset,
    pub eval_w: WMatrix,
}

/// Selection estimator `tau_hat^2 - 2 sum_{j,j' in B_gamma} psi_hat_jj'`.
///
/// With `split` the first `floor(split_fraction * n)` rows choose `B_gamma`
/// and the remaining rows compute both `tau_hat^2` and the correction.
pub fn fit_t_gamma(
    ds: &LabeledDataset,
    model: &CovariateModel,
    opts: &SelectionOptions,
) -> Result<GammaFit> {
    ensure_whitened(ds, model)?;
    let n = ds.n();
    if !opts.split {
        require_n(n, 3)?;
        let w = build_w(ds);
        return finish(ds.clone(), w, None, opts);
    }
    if !(opts.split_fraction > 0.0 && opts.split_fraction < 1.0) {
        return Err(Error::Config(format!(
            "split fraction must lie in (0, 1), got {}",
            opts.split_fraction
        )));
    }
    require_n(n, 6)?;
    let cut = (opts.split_fraction * n as f64).floor() as usize;
    if cut < 2 || n - cut < 3 {
        return Err(Error::TooFewObservations {
            needed: if cut < 2 { 2 } else { 3 },
            got: if cut < 2 { cut } else { n - cut },
        });
    }
    let select_part = ds.row_range(0, cut)?;
    let eval = ds.row_range(cut, n)?;
    let select_beta2 = beta_squared_estimates(&build_w(&select_part))?;
    let eval_w = build_w(&eval);
    finish(eval, eval_w, Some(select_beta2), opts)
}

fn finish(
    eval: LabeledDataset,
    eval_w: WMatrix,
    select_beta2: Option<Array1<f64>>,
    opts: &SelectionOptions,
) -> Result<GammaFit> {
    let beta2 = beta_squared_estimates(&eval_w)?;
    let split_used = select_beta2.is_some();
    let basis = select_beta2.unwrap_or_else(|| beta2.clone());
    let basis = basis.as_slice().expect("contiguous");
    let mut selection = gap_select(basis)?;
    selection.split_used = split_used;
    if let Some(cap) = opts.cap {
        apply_cap(&mut selection.selected, basis, cap);
    }
    let naive = naive_tau2(&eval_w)?;
    let tau2 = naive - 2.0 * subset_psi_sum(&eval, &eval_w, &selection.selected)?;
    Ok(GammaFit {
        tau2,
        naive_tau2: naive,
        selection,
        beta2,
        eval,
        eval_w,
    })
}

/// `B_gamma` as one-based column numbers separated by spaces.
pub fn format_selected(selected: &[usize]) -> String {
    selected
        .iter()
        .map(|j| (j + 1).to_string())
        .collect::<Vec<_>>()
        .join(" ")
}
