//! Point estimators of the signal level `tau^2 = ||beta||^2` and the noise
//! level `sigma^2`.
//!
//! All estimators assume whitened covariates (`E X = 0`, `Cov X = I`), so
//! `E(X_ij X_ij') = delta_jj'` wherever a centered product appears.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use ndarray::{Array1, ArrayView1};

use crate::error::{require_n, Error, Result};
use crate::model::{CoefficientVector, CovariateModel, LabeledDataset, WMatrix};
use crate::sum::{self, NeumaierSum};
use crate::ustat::{pair_sum_distinct, triple_sum_distinct};
use crate::variance::VarianceMethod;

/// Stable estimator identifiers, as written to CSV outputs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum EstimatorId {
    Naive,
    Dicker,
    Oracle,
    Full,
    Single,
    Selection,
    Empirical,
}

impl EstimatorId {
    pub const ALL: [EstimatorId; 7] = [
        EstimatorId::Naive,
        EstimatorId::Dicker,
        EstimatorId::Oracle,
        EstimatorId::Full,
        EstimatorId::Single,
        EstimatorId::Selection,
        EstimatorId::Empirical,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            EstimatorId::Naive => "naive",
            EstimatorId::Dicker => "dicker",
            EstimatorId::Oracle => "oracle",
            EstimatorId::Full => "full",
            EstimatorId::Single => "single",
            EstimatorId::Selection => "selection",
            EstimatorId::Empirical => "empirical",
        }
    }
}

impl fmt::Display for EstimatorId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for EstimatorId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        EstimatorId::ALL
            .into_iter()
            .find(|id| id.as_str() == s)
            .ok_or_else(|| {
                Error::Config(format!(
                    "unknown estimator `{s}` (expected one of naive, dicker, oracle, full, single, selection, empirical)"
                ))
            })
    }
}

/// An estimate of `tau^2` and `sigma^2` with an optional variance estimate.
///
/// `sigma2` is `sigma_Y^2 - tau2` and is never clamped here; see
/// [`EstimateReport::clamped`].
#[derive(Debug, Clone, PartialEq)]
pub struct EstimateReport {
    pub estimator: EstimatorId,
    pub tau2: f64,
    pub sigma2: f64,
    pub variance_estimate: Option<f64>,
    pub variance_method: Option<VarianceMethod>,
    pub aux: BTreeMap<String, String>,
}

impl EstimateReport {
    pub fn new(estimator: EstimatorId, tau2: f64, sigma_y2: f64) -> Self {
        Self {
            estimator,
            tau2,
            sigma2: sigma2_from(tau2, sigma_y2),
            variance_estimate: None,
            variance_method: None,
            aux: BTreeMap::new(),
        }
    }

    pub fn with_aux(mut self, key: &str, value: impl ToString) -> Self {
        self.aux.insert(key.to_string(), value.to_string());
        self
    }

    /// Copy with `max(0, .)` applied to both point estimates.
    pub fn clamped(&self) -> Self {
        let mut out = self.clone();
        out.tau2 = out.tau2.max(0.0);
        out.sigma2 = out.sigma2.max(0.0);
        out
    }

    /// `key=value` pairs joined by `;`.
    pub fn aux_string(&self) -> String {
        self.aux
            .iter()
            .map(|(k, v)| format!("{k}={v}"))
            .collect::<Vec<_>>()
            .join(";")
    }
}

pub(crate) fn ensure_whitened(ds: &LabeledDataset, model: &CovariateModel) -> Result<()> {
    if model.p() != ds.p() {
        return Err(Error::DimensionMismatch {
            what: "covariate model",
            expected: ds.p(),
            got: model.p(),
        });
    }
    if !ds.is_whitened() || !model.is_standard() {
        return Err(Error::NotWhitened);
    }
    Ok(())
}

fn check_w(ds: &LabeledDataset, w: &WMatrix) -> Result<()> {
    if w.n() != ds.n() || w.p() != ds.p() {
        return Err(Error::DimensionMismatch {
            what: "W matrix rows",
            expected: ds.n(),
            got: w.n(),
        });
    }
    Ok(())
}

/// Naive unbiased estimator `sum_j sum_{i1 != i2} W_{i1 j} W_{i2 j} / (n(n-1))`,
/// evaluated in O(np) from the cached column sums.
pub fn naive_tau2(w: &WMatrix) -> Result<f64> {
    let n = w.n();
    require_n(n, 2)?;
    let s = w.column_sums();
    let s2 = w.column_square_sums();
    let total = sum::sum(s.iter().zip(s2.iter()).map(|(a, b)| a * a - b));
    Ok(total / (n as f64 * (n as f64 - 1.0)))
}

/// `(||X^T Y||^2 - p ||Y||^2) / (n(n+1))`.
pub fn dicker_tau2(ds: &LabeledDataset) -> f64 {
    let (n, p) = (ds.n(), ds.p());
    let x = ds.x();
    let y = ds.y();
    let mut xty = vec![NeumaierSum::new(); p];
    for i in 0..n {
        for j in 0..p {
            xty[j].add(x[[i, j]] * y[i]);
        }
    }
    let xty_sq = sum::sum(xty.iter().map(|s| s.value().powi(2)));
    let y_sq = sum::dot(y.iter(), y.iter());
    (xty_sq - p as f64 * y_sq) / (n as f64 * (n as f64 + 1.0))
}

/// `sigma_Y^2 - tau^2`, unclamped.
pub fn sigma2_from(tau2: f64, sigma_y2: f64) -> f64 {
    sigma_y2 - tau2
}

/// Oracle estimator `tau_hat^2 - 2 sum_{j,j'} beta_j beta_j' h_jj'` with
/// `h_jj' = n^{-1} sum_i [X_ij X_ij' - delta_jj']`.
///
/// The double sum collapses to `n^{-1} sum_i [(beta . X_i)^2 - ||beta||^2]`.
pub fn t_oracle(
    ds: &LabeledDataset,
    w: &WMatrix,
    beta: &CoefficientVector,
    model: &CovariateModel,
) -> Result<f64> {
    ensure_whitened(ds, model)?;
    check_w(ds, w)?;
    if beta.p() != ds.p() {
        return Err(Error::DimensionMismatch {
            what: "coefficient vector",
            expected: ds.p(),
            got: beta.p(),
        });
    }
    let tau2 = naive_tau2(w)?;
    Ok(tau2 - 2.0 * oracle_correction(ds, beta))
}

/// `sum_{j,j'} beta_j beta_j' h_jj'`.
pub fn oracle_correction(ds: &LabeledDataset, beta: &CoefficientVector) -> f64 {
    let b = beta.beta();
    let norm2 = beta.tau2();
    let x = ds.x();
    let terms = x.rows().into_iter().map(|row| {
        let proj = sum::dot(row.iter(), b.iter());
        proj * proj - norm2
    });
    sum::sum(terms) / ds.n() as f64
}

fn triple_norm(n: usize) -> f64 {
    let n = n as f64;
    n * (n - 1.0) * (n - 2.0)
}

/// U-statistic `psi_hat_jj'`: distinct-triple sum of
/// `W_{i1 j} W_{i2 j'} [X_{i3 j} X_{i3 j'} - delta_jj']` over `n(n-1)(n-2)`.
pub fn psi_hat(
    ds: &LabeledDataset,
    w: &WMatrix,
    j: usize,
    jp: usize,
    model: &CovariateModel,
) -> Result<f64> {
    ensure_whitened(ds, model)?;
    check_w(ds, w)?;
    require_n(ds.n(), 3)?;
    psi_hat_unchecked(ds, w, j, jp)
}

fn psi_hat_unchecked(ds: &LabeledDataset, w: &WMatrix, j: usize, jp: usize) -> Result<f64> {
    let p = ds.p();
    for idx in [j, jp] {
        if idx >= p {
            return Err(Error::IndexOutOfRange { index: idx, p });
        }
    }
    let x = ds.x();
    let delta = if j == jp { 1.0 } else { 0.0 };
    let z: Array1<f64> = x.rows().into_iter().map(|r| r[j] * r[jp] - delta).collect();
    let wm = w.w();
    let t = triple_sum_distinct(wm.column(j), wm.column(jp), z.view())?;
    Ok(t / triple_norm(ds.n()))
}

/// Fully estimated correction `T = tau_hat^2 - 2 sum_{j,j'} psi_hat_jj'`.
///
/// With `K = X X^T` the correction is a distinct-triple sum over
/// `y_{i1} K[i1][i3] y_{i2} K[i2][i3] - y_{i1} y_{i2} K[i1][i2]`, which reduces
/// to O(n^2) work after the O(n^2 p) product.
pub fn t_full(ds: &LabeledDataset, w: &WMatrix, model: &CovariateModel) -> Result<f64> {
    ensure_whitened(ds, model)?;
    check_w(ds, w)?;
    let n = ds.n();
    require_n(n, 3)?;
    let tau2 = naive_tau2(w)?;
    Ok(tau2 - 2.0 * full_psi_sum(ds))
}

/// `sum_{j,j'} psi_hat_jj'` over all column pairs.
pub fn full_psi_sum(ds: &LabeledDataset) -> f64 {
    let n = ds.n();
    let x = ds.x();
    let y = ds.y();
    let mut k = x.dot(&x.t());
    for a in 0..n {
        for b in 0..a {
            k[[a, b]] = k[[b, a]];
        }
    }
    let mut squares = NeumaierSum::new();
    let mut pairs = NeumaierSum::new();
    for i3 in 0..n {
        let row = k.row(i3);
        let mut c = NeumaierSum::new();
        let mut q = NeumaierSum::new();
        for i1 in 0..n {
            if i1 != i3 {
                let t = y[i1] * row[i1];
                c.add(t);
                q.add(t * t);
            }
        }
        let c = c.value();
        squares.add(c * c);
        squares.add(-q.value());
        pairs.add(y[i3] * c);
    }
    let total = squares.value() - (n as f64 - 2.0) * pairs.value();
    total / triple_norm(n)
}

/// `T_B = tau_hat^2 - 2 sum_{j,j' in B} psi_hat_jj'` for a fixed index set.
pub fn t_b(ds: &LabeledDataset, w: &WMatrix, b_set: &[usize], model: &CovariateModel) -> Result<f64> {
    ensure_whitened(ds, model)?;
    check_w(ds, w)?;
    require_n(ds.n(), 3)?;
    let tau2 = naive_tau2(w)?;
    Ok(tau2 - 2.0 * subset_psi_sum(ds, w, b_set)?)
}

/// `sum_{j,j' in B} psi_hat_jj'`, O(|B|^2 n). Duplicate indices are ignored.
pub fn subset_psi_sum(ds: &LabeledDataset, w: &WMatrix, b_set: &[usize]) -> Result<f64> {
    let p = ds.p();
    if let Some(&bad) = b_set.iter().find(|&&j| j >= p) {
        return Err(Error::IndexOutOfRange { index: bad, p });
    }
    let mut set = b_set.to_vec();
    set.sort_unstable();
    set.dedup();
    let mut acc = NeumaierSum::new();
    for (a, &j) in set.iter().enumerate() {
        acc.add(psi_hat_unchecked(ds, w, j, j)?);
        for &jp in &set[a + 1..] {
            // psi_hat is symmetric in (j, j')
            acc.add(2.0 * psi_hat_unchecked(ds, w, j, jp)?);
        }
    }
    Ok(acc.value())
}

/// The single zero-estimator `g_i = sum_{j<j'} X_ij X_ij'` and its mean.
#[derive(Debug, Clone, PartialEq)]
pub struct SingleZeroStat {
    g_per_obs: Array1<f64>,
    g_n: f64,
    var_g: f64,
}

impl SingleZeroStat {
    pub fn g_per_obs(&self) -> ArrayView1<'_, f64> {
        self.g_per_obs.view()
    }

    pub fn g_n(&self) -> f64 {
        self.g_n
    }

    /// `Var(g_i)` from the covariate model.
    pub fn var_g(&self) -> f64 {
        self.var_g
    }

    pub fn n(&self) -> usize {
        self.g_per_obs.len()
    }

    /// Mean of `g_i` over the given rows (a bootstrap resample).
    pub fn mean_over(&self, rows: &[usize]) -> f64 {
        sum::sum(rows.iter().map(|&i| self.g_per_obs[i])) / rows.len() as f64
    }
}

/// `g_i = ((sum_j X_ij)^2 - sum_j X_ij^2) / 2`, O(p) per row.
pub fn build_single_zero(ds: &LabeledDataset, model: &CovariateModel) -> Result<SingleZeroStat> {
    if ds.p() < 2 {
        return Err(Error::DegenerateZeroEstimator(format!(
            "g_i is an empty sum for p = {}",
            ds.p()
        )));
    }
    ensure_whitened(ds, model)?;
    let var_g = model.var_g()?;
    let g_per_obs: Array1<f64> = ds
        .x()
        .rows()
        .into_iter()
        .map(|row| {
            let s = sum::sum(row.iter().copied());
            let s2 = sum::dot(row.iter(), row.iter());
            (s * s - s2) / 2.0
        })
        .collect();
    let g_n = sum::mean(g_per_obs.as_slice().expect("contiguous"));
    Ok(SingleZeroStat {
        g_per_obs,
        g_n,
        var_g,
    })
}

/// Oracle coefficient `c* = 2 sum_j beta_j theta_j / Var(g_i)` with
/// `theta_j = sum_{m != j} beta_m`, so `sum_j beta_j theta_j = (sum beta)^2 - tau^2`.
pub fn c_star_oracle(
    beta: &CoefficientVector,
    single: &SingleZeroStat,
    model: &CovariateModel,
) -> Result<f64> {
    if beta.p() < 2 {
        return Err(Error::DegenerateZeroEstimator(format!("p = {}", beta.p())));
    }
    if beta.p() != model.p() {
        return Err(Error::DimensionMismatch {
            what: "coefficient vector",
            expected: model.p(),
            got: beta.p(),
        });
    }
    if !model.independent_columns() {
        return Err(Error::UnsupportedDependenceStructure);
    }
    Ok(2.0 * beta_theta(beta) / single.var_g)
}

/// `sum_j beta_j theta_j = (sum_j beta_j)^2 - ||beta||^2`.
pub fn beta_theta(beta: &CoefficientVector) -> f64 {
    let s = sum::sum(beta.beta().iter().copied());
    s * s - beta.tau2()
}

fn check_single(w: &WMatrix, single: &SingleZeroStat) -> Result<()> {
    if w.p() < 2 {
        return Err(Error::DegenerateZeroEstimator(format!("p = {}", w.p())));
    }
    if single.n() != w.n() {
        return Err(Error::LengthMismatch {
            left: w.n(),
            right: single.n(),
        });
    }
    require_n(w.n(), 2)
}

/// `(2 / (n(n-1))) sum_{i1 != i2} sum_j W_{i1 j} S_{i2 j}` with `S_ij = W_ij g_i`,
/// an unbiased estimate of `2 sum_j beta_j theta_j`.
pub fn c_hat_numerator(w: &WMatrix, single: &SingleZeroStat) -> Result<f64> {
    check_single(w, single)?;
    let n = w.n();
    let wm = w.w();
    let g = single.g_per_obs();
    let mut acc = NeumaierSum::new();
    for j in 0..w.p() {
        let s: Array1<f64> = wm.column(j).iter().zip(g.iter()).map(|(a, b)| a * b).collect();
        acc.add(pair_sum_distinct(wm.column(j), s.view())?);
    }
    Ok(2.0 * acc.value() / (n as f64 * (n as f64 - 1.0)))
}

/// U-statistic estimate of `c*`.
pub fn c_hat_star(w: &WMatrix, single: &SingleZeroStat) -> Result<f64> {
    Ok(c_hat_numerator(w, single)? / single.var_g)
}

/// `tau_hat^2 - c g_n` for a given coefficient (the oracle `T_c*` when `c = c*`).
pub fn t_c_star(w: &WMatrix, single: &SingleZeroStat, c: f64) -> Result<f64> {
    check_single(w, single)?;
    Ok(naive_tau2(w)? - c * single.g_n)
}

/// Feasible single-correction estimator `tau_hat^2 - c_hat* g_n`.
pub fn t_c_hat_star(w: &WMatrix, single: &SingleZeroStat) -> Result<f64> {
    let c = c_hat_star(w, single)?;
    t_c_star(w, single, c)
}
