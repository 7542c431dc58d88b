//! Theoretical variances of the estimators and their feasible estimates.
//!
//! Theory formulas take the true `beta` and `sigma^2` and assume whitened,
//! independent covariate columns. The leading-order ones (full, subset and
//! selection) drop their `O(n^-2)` remainders.

use std::fmt;
use std::str::FromStr;

use ndarray::Array2;

use crate::error::{require_n, Error, Result};
use crate::estimators::{beta_theta, c_hat_numerator, naive_tau2, SingleZeroStat};
use crate::model::{CoefficientVector, CovariateModel, WMatrix};
use crate::sum::{self, NeumaierSum};
use crate::ustat::{chain_sum_distinct, offdiag_square_sum, GramMatrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum VarianceMethod {
    Theory,
    GaussianPlugin,
    Tilde,
}

impl VarianceMethod {
    pub fn as_str(self) -> &'static str {
        match self {
            VarianceMethod::Theory => "theory",
            VarianceMethod::GaussianPlugin => "gaussian-plugin",
            VarianceMethod::Tilde => "tilde",
        }
    }
}

impl fmt::Display for VarianceMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for VarianceMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "theory" => Ok(VarianceMethod::Theory),
            "gaussian-plugin" => Ok(VarianceMethod::GaussianPlugin),
            "tilde" => Ok(VarianceMethod::Tilde),
            _ => Err(Error::Config(format!(
                "unknown variance method `{s}` (expected theory, gaussian-plugin or tilde)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ADerivation {
    AnalyticIndependentColumns,
    Provided,
}

/// `A = E(W_i W_i^T)`.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentMatrixA {
    a: Array2<f64>,
    derivation: ADerivation,
}

impl MomentMatrixA {
    pub fn provided(a: Array2<f64>) -> Result<Self> {
        let p = a.nrows();
        if a.ncols() != p {
            return Err(Error::DimensionMismatch {
                what: "moment matrix",
                expected: p,
                got: a.ncols(),
            });
        }
        for i in 0..p {
            for j in 0..i {
                if a[[i, j]] != a[[j, i]] {
                    return Err(Error::InvalidModel("moment matrix is not symmetric".into()));
                }
            }
        }
        Ok(Self {
            a,
            derivation: ADerivation::Provided,
        })
    }

    pub fn a(&self) -> &Array2<f64> {
        &self.a
    }

    pub fn derivation(&self) -> ADerivation {
        self.derivation
    }

    pub fn frobenius_sq(&self) -> f64 {
        sum::sum(self.a.iter().map(|v| v * v))
    }

    pub fn quadratic_form(&self, beta: &CoefficientVector) -> f64 {
        let b = beta.beta();
        let p = b.len();
        let mut acc = NeumaierSum::new();
        for i in 0..p {
            for j in 0..p {
                acc.add(b[i] * self.a[[i, j]] * b[j]);
            }
        }
        acc.value()
    }
}

fn check_theory_inputs(beta: &CoefficientVector, model: &CovariateModel) -> Result<()> {
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
    Ok(())
}

/// Diagonal `sigma_Y^2 + beta_j^2 (E X_j^4 - 1)`, off-diagonal `2 beta_j beta_j'`.
pub fn moment_matrix_a(
    beta: &CoefficientVector,
    sigma2: f64,
    model: &CovariateModel,
) -> Result<MomentMatrixA> {
    check_theory_inputs(beta, model)?;
    let b = beta.beta();
    let kappa = model.fourth_moments();
    let sigma_y2 = beta.tau2() + sigma2;
    let p = b.len();
    let a = Array2::from_shape_fn((p, p), |(i, j)| {
        if i == j {
            sigma_y2 + b[i] * b[i] * (kappa[i] - 1.0)
        } else {
            2.0 * b[i] * b[j]
        }
    });
    Ok(MomentMatrixA {
        a,
        derivation: ADerivation::AnalyticIndependentColumns,
    })
}

/// Exact finite-sample `Var(tau_hat^2)` given `A`.
pub fn var_naive_from_a(a: &MomentMatrixA, beta: &CoefficientVector, n: usize) -> Result<f64> {
    require_n(n, 2)?;
    let nf = n as f64;
    let b4 = beta.tau2().powi(2);
    let d = nf * (nf - 1.0);
    Ok(4.0 * (nf - 2.0) / d * (a.quadratic_form(beta) - b4) + 2.0 / d * (a.frobenius_sq() - b4))
}

pub fn var_naive_theory(
    beta: &CoefficientVector,
    sigma2: f64,
    model: &CovariateModel,
    n: usize,
) -> Result<f64> {
    let a = moment_matrix_a(beta, sigma2, model)?;
    var_naive_from_a(&a, beta, n)
}

/// Asymptotic variance of `sqrt(n)(tau_hat^2 - tau^2)` for Gaussian covariates.
pub fn asymptotic_psi(tau2: f64, sigma2: f64, p: usize, n: usize) -> f64 {
    let ratio = p as f64 / n as f64;
    2.0 * ((1.0 + ratio) * (sigma2 + tau2).powi(2) - sigma2 * sigma2 + 3.0 * tau2 * tau2)
}

/// `(4/n) {sum_B beta^4 (E X^4 - 1) + 2 sum_{j != j' in B} beta^2 beta'^2}`,
/// over all columns when `set` is `None`.
pub fn oracle_reduction(
    beta: &CoefficientVector,
    model: &CovariateModel,
    n: usize,
    set: Option<&[usize]>,
) -> Result<f64> {
    check_theory_inputs(beta, model)?;
    let b = beta.beta();
    let kappa = model.fourth_moments();
    let all: Vec<usize>;
    let idx = match set {
        Some(s) => s,
        None => {
            all = (0..b.len()).collect();
            &all
        }
    };
    reduction_terms(idx.iter().map(|&j| (b[j] * b[j], kappa[j])), b.len(), idx, n)
}

fn reduction_terms<I>(terms: I, p: usize, idx: &[usize], n: usize) -> Result<f64>
where
    I: Iterator<Item = (f64, f64)>,
{
    if let Some(&bad) = idx.iter().find(|&&j| j >= p) {
        return Err(Error::IndexOutOfRange { index: bad, p });
    }
    let mut sq = NeumaierSum::new();
    let mut fourth = NeumaierSum::new();
    let mut kurt = NeumaierSum::new();
    for (b2, kappa) in terms {
        sq.add(b2);
        fourth.add(b2 * b2);
        kurt.add(b2 * b2 * (kappa - 1.0));
    }
    // sum_{j != j'} b_j^2 b_j'^2 = (sum b^2)^2 - sum b^4
    let cross = sq.value().powi(2) - fourth.value();
    Ok(4.0 / n as f64 * (kurt.value() + 2.0 * cross))
}

pub fn var_t_oracle_theory(
    beta: &CoefficientVector,
    sigma2: f64,
    model: &CovariateModel,
    n: usize,
) -> Result<f64> {
    Ok(var_naive_theory(beta, sigma2, model, n)? - oracle_reduction(beta, model, n, None)?)
}

/// Leading-order `Var(T_B)` for a fixed set `B`.
pub fn var_t_b_theory(
    beta: &CoefficientVector,
    sigma2: f64,
    model: &CovariateModel,
    n: usize,
    b_set: &[usize],
) -> Result<f64> {
    let mut set = b_set.to_vec();
    set.sort_unstable();
    set.dedup();
    Ok(var_naive_theory(beta, sigma2, model, n)? - oracle_reduction(beta, model, n, Some(&set))?)
}

/// `Var(tau_hat^2) - [2 sum_j beta_j theta_j]^2 / (n Var(g_i))`.
pub fn var_t_cstar_theory(
    beta: &CoefficientVector,
    sigma2: f64,
    model: &CovariateModel,
    n: usize,
) -> Result<f64> {
    let var_g = model.var_g()?;
    check_theory_inputs(beta, model)?;
    let num = 2.0 * beta_theta(beta);
    Ok(var_naive_theory(beta, sigma2, model, n)? - num * num / (n as f64 * var_g))
}

/// Leading-order `Var(T) = Var(T_oracle) + 8 p^2 sigma_Y^4 / n^3 + 16 p tau^4 / n^2`.
///
/// The last term comes from the second-order Hoeffding components of the
/// `psi_hat` sum; it is of the same order as the others once `p ~ n`.
pub fn var_t_full_theory(
    beta: &CoefficientVector,
    sigma2: f64,
    model: &CovariateModel,
    n: usize,
) -> Result<f64> {
    let p = model.p() as f64;
    let tau2 = beta.tau2();
    let sigma_y2 = tau2 + sigma2;
    let nf = n as f64;
    let third = 8.0 * p * p * sigma_y2 * sigma_y2 / nf.powi(3);
    let second = 16.0 * p * tau2 * tau2 / (nf * nf);
    Ok(var_t_oracle_theory(beta, sigma2, model, n)? + third + second)
}

/// Gaussian plug-in estimate of `Var(tau_hat^2)`.
pub fn var_hat_naive_gaussian(tau2_hat: f64, sigma_y2_hat: f64, n: usize, p: usize) -> f64 {
    let nf = n as f64;
    let (t, s) = (tau2_hat, sigma_y2_hat);
    let t4 = t * t;
    let first = (nf - 2.0) / (nf - 1.0) * (s * t + t4);
    let second = (p as f64 * s * s + 4.0 * s * t + 3.0 * t4) / (2.0 * (nf - 1.0));
    4.0 / nf * (first + second)
}

fn check_indices(beta2: &[f64], set: &[usize]) -> Result<()> {
    match set.iter().find(|&&j| j >= beta2.len()) {
        Some(&bad) => Err(Error::IndexOutOfRange {
            index: bad,
            p: beta2.len(),
        }),
        None => Ok(()),
    }
}

/// `Var_hat(tau_hat^2) - (8/n) (sum_{B_gamma} beta_hat_j^2)^2`.
pub fn var_hat_t_gamma(var_hat_naive: f64, beta2: &[f64], b_gamma: &[usize], n: usize) -> Result<f64> {
    check_indices(beta2, b_gamma)?;
    let tau2_b = sum::sum(b_gamma.iter().map(|&j| beta2[j]));
    Ok(var_hat_naive - 8.0 / n as f64 * tau2_b * tau2_b)
}

/// U-statistic plug-ins for the exact `Var(tau_hat^2)` formula.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TildeComponents {
    pub beta_a_beta: f64,
    pub a_frobenius_sq: f64,
    pub beta4: f64,
}

pub fn tilde_components(w: &WMatrix, g: &GramMatrix) -> Result<TildeComponents> {
    let n = w.n();
    require_n(n, 3)?;
    if g.n() != n {
        return Err(Error::DimensionMismatch {
            what: "gram matrix",
            expected: n,
            got: g.n(),
        });
    }
    let nf = n as f64;
    let tau2 = naive_tau2(w)?;
    Ok(TildeComponents {
        beta_a_beta: chain_sum_distinct(g)? / (nf * (nf - 1.0) * (nf - 2.0)),
        a_frobenius_sq: offdiag_square_sum(g) / (nf * (nf - 1.0)),
        beta4: tau2 * tau2,
    })
}

/// Distribution-free estimate of `Var(tau_hat^2)`.
pub fn var_tilde_naive(w: &WMatrix, g: &GramMatrix) -> Result<f64> {
    let c = tilde_components(w, g)?;
    let nf = w.n() as f64;
    let d = nf * (nf - 1.0);
    Ok(4.0 * (nf - 2.0) / d * (c.beta_a_beta - c.beta4) + 2.0 / d * (c.a_frobenius_sq - c.beta4))
}

pub fn var_tilde_t_gamma(
    var_tilde: f64,
    beta2: &[f64],
    b_gamma: &[usize],
    model: &CovariateModel,
    n: usize,
) -> Result<f64> {
    check_indices(beta2, b_gamma)?;
    if model.p() != beta2.len() {
        return Err(Error::DimensionMismatch {
            what: "covariate model",
            expected: beta2.len(),
            got: model.p(),
        });
    }
    let kappa = model.fourth_moments();
    let reduction = reduction_terms(
        b_gamma.iter().map(|&j| (beta2[j], kappa[j])),
        beta2.len(),
        b_gamma,
        n,
    )?;
    Ok(var_tilde - reduction)
}

/// `var_tilde - [c_hat numerator]^2 / (n Var(g_i))`.
pub fn var_tilde_t_chat(var_tilde: f64, w: &WMatrix, single: &SingleZeroStat) -> Result<f64> {
    let num = c_hat_numerator(w, single)?;
    Ok(var_tilde - num * num / (w.n() as f64 * single.var_g()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{build_w, LabeledDataset};
    use crate::ustat::gram;
    use ndarray::{array, Array1};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn flat_beta(p: usize, tau2: f64) -> CoefficientVector {
        CoefficientVector::new(Array1::from_elem(p, (tau2 / p as f64).sqrt())).unwrap()
    }

    #[test]
    fn method_ids_round_trip() {
        for m in [VarianceMethod::Theory, VarianceMethod::GaussianPlugin, VarianceMethod::Tilde] {
            assert_eq!(m.as_str().parse::<VarianceMethod>().unwrap(), m);
        }
        assert!("bootstrap".parse::<VarianceMethod>().is_err());
    }

    #[test]
    fn moment_matrix_examples() {
        let model = CovariateModel::standard_gaussian(3);
        let zero = CoefficientVector::new(Array1::zeros(3)).unwrap();
        assert_eq!(moment_matrix_a(&zero, 1.0, &model).unwrap().a(), &Array2::eye(3));
        let one = CoefficientVector::new(array![1.0]).unwrap();
        let a = moment_matrix_a(&one, 1.0, &CovariateModel::standard_gaussian(1)).unwrap();
        assert_eq!(a.a()[[0, 0]], 4.0);
        assert_eq!(a.derivation(), ADerivation::AnalyticIndependentColumns);
    }

    #[test]
    fn var_naive_limits() {
        let n = 400;
        let model = CovariateModel::standard_gaussian(n);
        let v = var_naive_theory(&flat_beta(n, 1.0), 1.0, &model, n).unwrap();
        assert!((n as f64 * v - 20.0).abs() < 0.4, "{}", n as f64 * v);

        let p = 7;
        let model = CovariateModel::standard_gaussian(p);
        let zero = CoefficientVector::new(Array1::zeros(p)).unwrap();
        let v = var_naive_theory(&zero, 2.0, &model, 10).unwrap();
        assert!((v - 2.0 * p as f64 * 4.0 / 90.0).abs() < 1e-14);
    }

    #[test]
    fn var_naive_closed_form_agrees() {
        // the quadratic form and Frobenius norm of the analytic A have closed forms
        let beta = CoefficientVector::new(array![0.3, -0.8, 0.5, 1.1]).unwrap();
        let model = CovariateModel::standard_independent(4, 5.0).unwrap();
        let a = moment_matrix_a(&beta, 0.7, &model).unwrap();
        let b: Vec<f64> = beta.beta().to_vec();
        let t2 = beta.tau2();
        let sy = t2 + 0.7;
        let b4: f64 = b.iter().map(|v| v.powi(4)).sum();
        let diag: Vec<f64> = b.iter().map(|v| sy + v * v * 4.0).collect();
        let quad: f64 = b.iter().zip(&diag).map(|(v, d)| v * v * d).sum::<f64>() + 2.0 * (t2 * t2 - b4);
        let frob: f64 = diag.iter().map(|d| d * d).sum::<f64>() + 4.0 * (t2 * t2 - b4);
        assert!((a.quadratic_form(&beta) - quad).abs() < 1e-12);
        assert!((a.frobenius_sq() - frob).abs() < 1e-12);
    }

    #[test]
    fn asymptotic_psi_examples() {
        assert_eq!(asymptotic_psi(1.0, 1.0, 100, 100), 20.0);
        assert!((asymptotic_psi(0.0, 2.0, 50, 100) - 2.0 * 4.0 * 0.5).abs() < 1e-14);
        assert!((asymptotic_psi(1.0, 1.0, 1, 1_000_000_000) - 12.0).abs() < 1e-6);
    }

    #[test]
    fn oracle_and_cstar_limits() {
        let n = 400;
        let model = CovariateModel::standard_gaussian(n);
        let beta = flat_beta(n, 1.0);
        let v = var_t_oracle_theory(&beta, 1.0, &model, n).unwrap();
        assert!((n as f64 * v - 12.0).abs() < 0.4);
        let v = var_t_cstar_theory(&beta, 1.0, &model, n).unwrap();
        assert!((n as f64 * v - 12.0).abs() < 0.4);
        let v = var_t_full_theory(&beta, 1.0, &model, n).unwrap();
        assert!((n as f64 * v - 60.0).abs() < 0.8);

        let zero = CoefficientVector::new(Array1::zeros(5)).unwrap();
        let m5 = CovariateModel::standard_gaussian(5);
        let naive = var_naive_theory(&zero, 1.0, &m5, 20).unwrap();
        assert_eq!(var_t_oracle_theory(&zero, 1.0, &m5, 20).unwrap(), naive);
        assert_eq!(var_t_cstar_theory(&zero, 1.0, &m5, 20).unwrap(), naive);
        assert_eq!(var_t_b_theory(&zero, 1.0, &m5, 20, &[]).unwrap(), naive);
    }

    #[test]
    fn heavy_tail_single_coefficient_reduction() {
        let model = CovariateModel::standard_independent(3, 9.0).unwrap();
        let beta = CoefficientVector::new(array![1.0, 0.0, 0.0]).unwrap();
        let r = oracle_reduction(&beta, &model, 50, None).unwrap();
        assert!((r - 32.0 / 50.0).abs() < 1e-14);
    }

    #[test]
    fn subset_reduction_ten_percent() {
        let n = 400;
        let model = CovariateModel::standard_gaussian(n);
        let mut b = Array1::from_elem(n, (0.5 / (n - 5) as f64).sqrt());
        for j in 0..5 {
            b[j] = 0.1_f64.sqrt();
        }
        let beta = CoefficientVector::new(b).unwrap();
        let naive = var_naive_theory(&beta, 1.0, &model, n).unwrap();
        let tb = var_t_b_theory(&beta, 1.0, &model, n, &[0, 1, 2, 3, 4]).unwrap();
        assert!(((naive - tb) / naive - 0.1).abs() < 0.005);
    }

    #[test]
    fn cstar_with_zero_sum_beta_still_reduces() {
        let model = CovariateModel::standard_gaussian(2);
        let s = 0.5_f64.sqrt();
        let beta = CoefficientVector::new(array![s, -s]).unwrap();
        let naive = var_naive_theory(&beta, 1.0, &model, 30).unwrap();
        let v = var_t_cstar_theory(&beta, 1.0, &model, 30).unwrap();
        // numerator 2((sum beta)^2 - tau^2) = -2, Var(g) = 1
        assert!((naive - v - 4.0 / 30.0).abs() < 1e-14);
    }

    #[test]
    fn gaussian_plugin_examples() {
        let v = var_hat_naive_gaussian(1.0, 2.0, 400, 400);
        assert!((v / 0.05 - 1.0).abs() < 0.03);
        let v0 = var_hat_naive_gaussian(0.0, 1.5, 50, 20);
        assert!((v0 - 4.0 / 50.0 * 20.0 * 2.25 / 98.0).abs() < 1e-15);
        assert_eq!(var_hat_t_gamma(0.3, &[1.0, 2.0], &[], 400).unwrap(), 0.3);
        assert!((var_hat_t_gamma(0.3, &[1.0, 0.0], &[0], 400).unwrap() - 0.28).abs() < 1e-15);
    }

    #[test]
    fn tilde_t_gamma_examples() {
        let model = CovariateModel::standard_gaussian(2);
        assert_eq!(var_tilde_t_gamma(0.5, &[1.0, 0.2], &[], &model, 100).unwrap(), 0.5);
        let v = var_tilde_t_gamma(0.5, &[1.0, 0.2], &[0], &model, 100).unwrap();
        assert!((v - (0.5 - 0.08)).abs() < 1e-15);
    }

    #[test]
    fn tilde_orthogonal_rows() {
        let ds = LabeledDataset::new(Array2::eye(3), array![1.0, 2.0, 3.0]).unwrap();
        let w = build_w(&ds);
        let g = gram(&w).unwrap();
        let c = tilde_components(&w, &g).unwrap();
        assert_eq!((c.beta_a_beta, c.a_frobenius_sq), (0.0, 0.0));
        let t4 = naive_tau2(&w).unwrap().powi(2);
        let expected = -(4.0 * 1.0 + 2.0) / 6.0 * t4;
        assert!((var_tilde_naive(&w, &g).unwrap() - expected).abs() < 1e-15);
    }

    #[test]
    fn tilde_t_chat_zero_w_is_identity() {
        let model = CovariateModel::standard_gaussian(3);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = Array2::from_shape_fn((6, 3), |_| rng.random_range(-1.0..1.0));
        let ds = LabeledDataset::new(x, Array1::zeros(6)).unwrap();
        let single = crate::estimators::build_single_zero(&ds, &model).unwrap();
        assert_eq!(var_tilde_t_chat(0.25, &build_w(&ds), &single).unwrap(), 0.25);
    }
}
