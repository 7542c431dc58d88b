//! Data model: the known covariate distribution, labeled observations, the
//! whitening transform and the `W_ij = X_ij * Y_i` matrix every estimator is
//! built on.

use nalgebra::{DMatrix, SymmetricEigen};
use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use serde::Deserialize;

use crate::error::{require_n, Error, Result};
use crate::sum::{self, NeumaierSum};

/// Relative eigenvalue floor below which a covariance is treated as singular.
pub const SINGULARITY_TOL: f64 = 1e-10;

/// The known distribution of the covariates.
///
/// `fourth_moments` are `E[X_j^4]` of the *whitened* columns, and
/// `independent_columns` likewise refers to the whitened coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct CovariateModel {
    mean: Array1<f64>,
    covariance: Array2<f64>,
    fourth_moments: Array1<f64>,
    independent_columns: bool,
    gaussian: bool,
}

impl CovariateModel {
    pub fn new(
        mean: Array1<f64>,
        covariance: Array2<f64>,
        fourth_moments: Array1<f64>,
        independent_columns: bool,
        gaussian: bool,
    ) -> Result<Self> {
        let p = mean.len();
        if p == 0 {
            return Err(Error::InvalidModel("model has no covariates".into()));
        }
        if covariance.dim() != (p, p) {
            return Err(Error::DimensionMismatch {
                what: "covariance",
                expected: p,
                got: covariance.nrows(),
            });
        }
        if fourth_moments.len() != p {
            return Err(Error::DimensionMismatch {
                what: "fourth_moments",
                expected: p,
                got: fourth_moments.len(),
            });
        }
        if mean.iter().chain(covariance.iter()).chain(fourth_moments.iter()).any(|v| !v.is_finite()) {
            return Err(Error::InvalidModel("non-finite model entry".into()));
        }
        let scale = covariance.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        for i in 0..p {
            for j in 0..i {
                if (covariance[[i, j]] - covariance[[j, i]]).abs() > 1e-12 * scale {
                    return Err(Error::InvalidModel(format!(
                        "covariance is not symmetric at ({i}, {j})"
                    )));
                }
            }
        }
        let (min_eig, _) = eigen_range(&covariance);
        if min_eig <= 0.0 {
            return Err(Error::InvalidModel(format!(
                "covariance is not positive definite (smallest eigenvalue {min_eig:e})"
            )));
        }
        if let Some((j, m)) = fourth_moments.iter().enumerate().find(|(_, m)| **m < 1.0) {
            return Err(Error::InvalidModel(format!(
                "fourth moment of column {j} is {m} < 1, impossible for unit-variance columns"
            )));
        }
        if gaussian && fourth_moments.iter().any(|m| *m != 3.0) {
            return Err(Error::InvalidModel(
                "gaussian model must have fourth moments equal to 3".into(),
            ));
        }
        Ok(Self {
            mean,
            covariance,
            fourth_moments,
            independent_columns,
            gaussian,
        })
    }

    /// `N(0, I_p)` covariates.
    pub fn standard_gaussian(p: usize) -> Self {
        Self {
            mean: Array1::zeros(p),
            covariance: Array2::eye(p),
            fourth_moments: Array1::from_elem(p, 3.0),
            independent_columns: true,
            gaussian: true,
        }
    }

    /// Mean-zero, identity-covariance covariates with independent columns
    /// sharing one fourth moment.
    pub fn standard_independent(p: usize, fourth_moment: f64) -> Result<Self> {
        Self::new(
            Array1::zeros(p),
            Array2::eye(p),
            Array1::from_elem(p, fourth_moment),
            true,
            false,
        )
    }

    pub fn p(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> ArrayView1<'_, f64> {
        self.mean.view()
    }

    pub fn covariance(&self) -> ArrayView2<'_, f64> {
        self.covariance.view()
    }

    pub fn fourth_moments(&self) -> ArrayView1<'_, f64> {
        self.fourth_moments.view()
    }

    pub fn independent_columns(&self) -> bool {
        self.independent_columns
    }

    pub fn is_gaussian(&self) -> bool {
        self.gaussian
    }

    /// True when the model is already in whitened coordinates.
    pub fn is_standard(&self) -> bool {
        let p = self.p();
        self.mean.iter().all(|m| *m == 0.0)
            && (0..p).all(|i| (0..p).all(|j| self.covariance[[i, j]] == if i == j { 1.0 } else { 0.0 }))
    }

    /// The same model expressed in whitened coordinates.
    pub fn whitened(&self) -> Self {
        let p = self.p();
        Self {
            mean: Array1::zeros(p),
            covariance: Array2::eye(p),
            fourth_moments: self.fourth_moments.clone(),
            independent_columns: self.independent_columns,
            gaussian: self.gaussian,
        }
    }

    /// `Var(g_i)` for `g_i = sum_{j<j'} X_ij X_ij'`, which is `p(p-1)/2` for
    /// independent whitened columns.
    pub fn var_g(&self) -> Result<f64> {
        let p = self.p();
        if p < 2 {
            return Err(Error::DegenerateZeroEstimator(format!(
                "g_i needs at least two columns, model has p = {p}"
            )));
        }
        if !self.independent_columns {
            return Err(Error::UnsupportedDependenceStructure);
        }
        Ok((p * (p - 1)) as f64 / 2.0)
    }

    /// Symmetric inverse square root `Sigma^{-1/2}`.
    pub fn inverse_sqrt_covariance(&self) -> Result<Array2<f64>> {
        let p = self.p();
        let m = DMatrix::from_fn(p, p, |i, j| self.covariance[[i, j]]);
        let eig = SymmetricEigen::new(m);
        let max = eig.eigenvalues.iter().cloned().fold(f64::MIN, f64::max);
        let min = eig.eigenvalues.iter().cloned().fold(f64::MAX, f64::min);
        if !(min > SINGULARITY_TOL * max) {
            return Err(Error::NearSingularCovariance {
                min,
                max,
                tol: SINGULARITY_TOL,
            });
        }
        let q = &eig.eigenvectors;
        let mut out = Array2::zeros((p, p));
        for i in 0..p {
            for j in 0..=i {
                let v = sum::sum((0..p).map(|k| q[(i, k)] * q[(j, k)] / eig.eigenvalues[k].sqrt()));
                out[[i, j]] = v;
                out[[j, i]] = v;
            }
        }
        Ok(out)
    }

    /// Parse a model description (TOML) for `p` covariates.
    ///
    /// ```toml
    /// mean = [0.0, 0.0]              # optional, defaults to zeros
    /// covariance = "identity"        # or a dense nested array
    /// fourth_moments = 3.0           # scalar broadcast or per-column array
    /// independent_columns = true     # defaults to the value of `gaussian`
    /// gaussian = true
    /// ```
    pub fn from_toml_str(text: &str, p: usize) -> Result<Self> {
        let file: ModelFile = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        let gaussian = file.gaussian.unwrap_or(false);
        let mean = match file.mean {
            Some(v) => Array1::from(v),
            None => Array1::zeros(p),
        };
        let covariance = match file.covariance {
            None => Array2::eye(p),
            Some(CovarianceSpec::Named(name)) if name == "identity" => Array2::eye(p),
            Some(CovarianceSpec::Named(name)) => {
                return Err(Error::Config(format!("unknown covariance `{name}`")))
            }
            Some(CovarianceSpec::Dense(rows)) => {
                let k = rows.len();
                if rows.iter().any(|r| r.len() != k) {
                    return Err(Error::Config("covariance must be square".into()));
                }
                Array2::from_shape_fn((k, k), |(i, j)| rows[i][j])
            }
        };
        let fourth_moments = match file.fourth_moments {
            Some(MomentSpec::Scalar(m)) => Array1::from_elem(p, m),
            Some(MomentSpec::Vector(v)) => Array1::from(v),
            None if gaussian => Array1::from_elem(p, 3.0),
            None => {
                return Err(Error::Config(
                    "fourth_moments is required for non-gaussian models".into(),
                ))
            }
        };
        if mean.len() != p {
            return Err(Error::DimensionMismatch {
                what: "model mean",
                expected: p,
                got: mean.len(),
            });
        }
        let independent = file.independent_columns.unwrap_or(gaussian);
        Self::new(mean, covariance, fourth_moments, independent, gaussian)
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelFile {
    mean: Option<Vec<f64>>,
    covariance: Option<CovarianceSpec>,
    fourth_moments: Option<MomentSpec>,
    independent_columns: Option<bool>,
    gaussian: Option<bool>,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum CovarianceSpec {
    Named(String),
    Dense(Vec<Vec<f64>>),
}

#[derive(Deserialize)]
#[serde(untagged)]
enum MomentSpec {
    Scalar(f64),
    Vector(Vec<f64>),
}

fn eigen_range(cov: &Array2<f64>) -> (f64, f64) {
    let p = cov.nrows();
    let m = DMatrix::from_fn(p, p, |i, j| cov[[i, j]]);
    let ev = m.symmetric_eigenvalues();
    let min = ev.iter().cloned().fold(f64::MAX, f64::min);
    let max = ev.iter().cloned().fold(f64::MIN, f64::max);
    (min, max)
}

/// Observed covariates and responses.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    x: Array2<f64>,
    y: Array1<f64>,
    whitened: bool,
}

impl LabeledDataset {
    /// Observations already in whitened coordinates.
    pub fn new(x: Array2<f64>, y: Array1<f64>) -> Result<Self> {
        Self::build(x, y, true)
    }

    /// Observations on the raw covariate scale; see [`LabeledDataset::whiten_with`].
    pub fn raw(x: Array2<f64>, y: Array1<f64>) -> Result<Self> {
        Self::build(x, y, false)
    }

    fn build(x: Array2<f64>, y: Array1<f64>, whitened: bool) -> Result<Self> {
        if x.nrows() != y.len() {
            return Err(Error::LengthMismatch {
                left: x.nrows(),
                right: y.len(),
            });
        }
        require_n(y.len(), 2)?;
        if x.ncols() == 0 {
            return Err(Error::TooFewColumns { needed: 1, got: 0 });
        }
        if x.iter().chain(y.iter()).any(|v| !v.is_finite()) {
            return Err(Error::InvalidDataset("non-finite entry".into()));
        }
        Ok(Self { x, y, whitened })
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }

    pub fn p(&self) -> usize {
        self.x.ncols()
    }

    pub fn x(&self) -> ArrayView2<'_, f64> {
        self.x.view()
    }

    pub fn y(&self) -> ArrayView1<'_, f64> {
        self.y.view()
    }

    pub fn is_whitened(&self) -> bool {
        self.whitened
    }

    /// Apply the model's whitening transform to the covariates.
    pub fn whiten_with(&self, model: &CovariateModel) -> Result<Self> {
        let x = whiten(self.x.view(), model)?;
        Ok(Self {
            x,
            y: self.y.clone(),
            whitened: true,
        })
    }

    /// Copy with `Y` centered at its sample mean.
    pub fn centered_y(&self) -> Self {
        let m = sum::mean(self.y.as_slice().expect("contiguous y"));
        Self {
            x: self.x.clone(),
            y: self.y.mapv(|v| v - m),
            whitened: self.whitened,
        }
    }

    /// Rows in the given order (duplicates allowed, as in a bootstrap resample).
    pub fn select_rows(&self, rows: &[usize]) -> Result<Self> {
        require_n(rows.len(), 2)?;
        Ok(Self {
            x: self.x.select(Axis(0), rows),
            y: self.y.select(Axis(0), rows),
            whitened: self.whitened,
        })
    }

    /// Contiguous block of rows `start..end`.
    pub fn row_range(&self, start: usize, end: usize) -> Result<Self> {
        require_n(end.saturating_sub(start), 2)?;
        Ok(Self {
            x: self.x.slice(ndarray::s![start..end, ..]).to_owned(),
            y: self.y.slice(ndarray::s![start..end]).to_owned(),
            whitened: self.whitened,
        })
    }
}

/// `Sigma^{-1/2}(x_i - mu)` for every row, via the symmetric eigendecomposition.
///
/// Standardized models (mean 0, identity covariance) return the input unchanged.
pub fn whiten(x_raw: ArrayView2<'_, f64>, model: &CovariateModel) -> Result<Array2<f64>> {
    if x_raw.ncols() != model.p() {
        return Err(Error::DimensionMismatch {
            what: "covariate columns",
            expected: model.p(),
            got: x_raw.ncols(),
        });
    }
    if model.is_standard() {
        return Ok(x_raw.to_owned());
    }
    let root = model.inverse_sqrt_covariance()?;
    let p = model.p();
    let mut out = Array2::zeros(x_raw.raw_dim());
    let mut centered = vec![0.0; p];
    for (i, row) in x_raw.rows().into_iter().enumerate() {
        for j in 0..p {
            centered[j] = row[j] - model.mean[j];
        }
        for k in 0..p {
            out[[i, k]] = sum::dot(root.row(k).iter(), centered.iter());
        }
    }
    Ok(out)
}

/// `W_ij = X_ij * Y_i` with cached column sums and column sums of squares.
#[derive(Debug, Clone, PartialEq)]
pub struct WMatrix {
    w: Array2<f64>,
    column_sums: Array1<f64>,
    column_square_sums: Array1<f64>,
}

impl WMatrix {
    pub fn w(&self) -> ArrayView2<'_, f64> {
        self.w.view()
    }

    pub fn column_sums(&self) -> ArrayView1<'_, f64> {
        self.column_sums.view()
    }

    pub fn column_square_sums(&self) -> ArrayView1<'_, f64> {
        self.column_square_sums.view()
    }

    pub fn n(&self) -> usize {
        self.w.nrows()
    }

    pub fn p(&self) -> usize {
        self.w.ncols()
    }
}

pub fn build_w(ds: &LabeledDataset) -> WMatrix {
    let (n, p) = ds.x.dim();
    let mut w = Array2::zeros((n, p));
    let mut sums = vec![NeumaierSum::new(); p];
    let mut squares = vec![NeumaierSum::new(); p];
    for i in 0..n {
        let yi = ds.y[i];
        for j in 0..p {
            let v = ds.x[[i, j]] * yi;
            w[[i, j]] = v;
            sums[j].add(v);
            squares[j].add(v * v);
        }
    }
    WMatrix {
        w,
        column_sums: sums.iter().map(NeumaierSum::value).collect(),
        column_square_sums: squares.iter().map(NeumaierSum::value).collect(),
    }
}

/// Unbiased sample variance of the responses, `(n-1)^{-1} sum (Y_i - Ybar)^2`.
pub fn sample_variance_y(y: ArrayView1<'_, f64>) -> Result<f64> {
    require_n(y.len(), 2)?;
    let values: Vec<f64> = y.iter().copied().collect();
    Ok(sum::sample_variance(&values))
}

/// True regression coefficients in whitened coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientVector {
    beta: Array1<f64>,
    oracle_only: bool,
}

impl CoefficientVector {
    pub fn new(beta: Array1<f64>) -> Result<Self> {
        if beta.iter().any(|b| !b.is_finite()) {
            return Err(Error::InvalidScenario("non-finite coefficient".into()));
        }
        Ok(Self {
            beta,
            oracle_only: true,
        })
    }

    pub fn beta(&self) -> ArrayView1<'_, f64> {
        self.beta.view()
    }

    pub fn p(&self) -> usize {
        self.beta.len()
    }

    pub fn oracle_only(&self) -> bool {
        self.oracle_only
    }

    /// `tau^2 = ||beta||^2`.
    pub fn tau2(&self) -> f64 {
        sum::sum(self.beta.iter().map(|b| b * b))
    }

    /// `tau_B^2 = sum_{j in B} beta_j^2`.
    pub fn tau2_subset(&self, set: &[usize]) -> f64 {
        sum::sum(set.iter().map(|&j| self.beta[j] * self.beta[j]))
    }
}
