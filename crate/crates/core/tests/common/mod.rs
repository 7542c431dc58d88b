//! Brute-force nested-loop oracles and Monte Carlo helpers shared by the
//! integration tests.
#![allow(dead_code)]

use ndarray::{Array1, Array2, ArrayView2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use varest::LabeledDataset;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn uniform_matrix(rng: &mut ChaCha8Rng, n: usize, p: usize) -> Array2<f64> {
    Array2::from_shape_fn((n, p), |_| rng.random_range(-2.0..2.0))
}

pub fn uniform_vec(rng: &mut ChaCha8Rng, n: usize) -> Array1<f64> {
    Array1::from_shape_fn(n, |_| rng.random_range(-2.0..2.0))
}

pub fn random_dataset(rng: &mut ChaCha8Rng, n: usize, p: usize) -> LabeledDataset {
    let x = uniform_matrix(rng, n, p);
    let y = uniform_vec(rng, n);
    LabeledDataset::new(x, y).unwrap()
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    let scale = a.abs().max(b.abs());
    if scale == 0.0 {
        0.0
    } else {
        (a - b).abs() / scale
    }
}

pub fn brute_w(ds: &LabeledDataset) -> Array2<f64> {
    let (n, p) = (ds.n(), ds.p());
    let mut w = Array2::zeros((n, p));
    for i in 0..n {
        for j in 0..p {
            w[[i, j]] = ds.x()[[i, j]] * ds.y()[i];
        }
    }
    w
}

pub fn brute_pair(u: &[f64], v: &[f64]) -> f64 {
    let mut t = 0.0;
    for a in 0..u.len() {
        for b in 0..v.len() {
            if a != b {
                t += u[a] * v[b];
            }
        }
    }
    t
}

pub fn brute_triple(u: &[f64], v: &[f64], w: &[f64]) -> f64 {
    let n = u.len();
    let mut t = 0.0;
    for a in 0..n {
        for b in 0..n {
            for c in 0..n {
                if a != b && b != c && a != c {
                    t += u[a] * v[b] * w[c];
                }
            }
        }
    }
    t
}

pub fn brute_gram(w: ArrayView2<'_, f64>) -> Array2<f64> {
    let (n, p) = w.dim();
    Array2::from_shape_fn((n, n), |(a, b)| (0..p).map(|j| w[[a, j]] * w[[b, j]]).sum())
}

/// `sum_{i1 != i2} (W_i1 . W_i2)^2`.
pub fn brute_offdiag_sq(w: ArrayView2<'_, f64>) -> f64 {
    let (n, p) = w.dim();
    let mut t = 0.0;
    for a in 0..n {
        for b in 0..n {
            if a != b {
                let d: f64 = (0..p).map(|j| w[[a, j]] * w[[b, j]]).sum();
                t += d * d;
            }
        }
    }
    t
}

/// `sum_{i1, i2, i3 distinct} W_i1^T (W_i2 W_i2^T) W_i3`.
pub fn brute_chain(w: ArrayView2<'_, f64>) -> f64 {
    let (n, p) = w.dim();
    let mut t = 0.0;
    for a in 0..n {
        for b in 0..n {
            for c in 0..n {
                if a != b && b != c && a != c {
                    let ab: f64 = (0..p).map(|j| w[[a, j]] * w[[b, j]]).sum();
                    let bc: f64 = (0..p).map(|j| w[[b, j]] * w[[c, j]]).sum();
                    t += ab * bc;
                }
            }
        }
    }
    t
}

/// `psi_hat_jj'` by its defining triple loop.
pub fn brute_psi(ds: &LabeledDataset, j: usize, jp: usize) -> f64 {
    let n = ds.n();
    let (x, y) = (ds.x(), ds.y());
    let delta = if j == jp { 1.0 } else { 0.0 };
    let mut t = 0.0;
    for a in 0..n {
        for b in 0..n {
            for c in 0..n {
                if a != b && b != c && a != c {
                    t += x[[a, j]] * y[a] * x[[b, jp]] * y[b] * (x[[c, j]] * x[[c, jp]] - delta);
                }
            }
        }
    }
    t / (n * (n - 1) * (n - 2)) as f64
}

/// `g_i = sum_{j < j'} X_ij X_ij'`.
pub fn brute_g(ds: &LabeledDataset) -> Vec<f64> {
    let (n, p) = (ds.n(), ds.p());
    (0..n)
        .map(|i| {
            let mut g = 0.0;
            for j in 0..p {
                for jp in j + 1..p {
                    g += ds.x()[[i, j]] * ds.x()[[i, jp]];
                }
            }
            g
        })
        .collect()
}

/// `(2 / (n(n-1))) sum_{i1 != i2} sum_j W_i1j W_i2j g_i2`.
pub fn brute_c_hat_numerator(ds: &LabeledDataset) -> f64 {
    let w = brute_w(ds);
    let g = brute_g(ds);
    let (n, p) = w.dim();
    let mut t = 0.0;
    for a in 0..n {
        for b in 0..n {
            if a != b {
                for j in 0..p {
                    t += w[[a, j]] * w[[b, j]] * g[b];
                }
            }
        }
    }
    2.0 * t / (n * (n - 1)) as f64
}

pub fn brute_naive(ds: &LabeledDataset) -> f64 {
    let w = brute_w(ds);
    let (n, p) = w.dim();
    let mut t = 0.0;
    for j in 0..p {
        for a in 0..n {
            for b in 0..n {
                if a != b {
                    t += w[[a, j]] * w[[b, j]];
                }
            }
        }
    }
    t / (n * (n - 1)) as f64
}

/// Sample mean and its standard error.
pub fn mean_se(v: &[f64]) -> (f64, f64) {
    let m = v.len() as f64;
    let mean = varest::sum::mean(v);
    let var = varest::sum::sample_variance(v);
    (mean, (var / m).sqrt())
}

/// Sample variance and its large-sample standard error
/// `sqrt((mu4 - s^4) / m)`.
pub fn var_se(v: &[f64]) -> (f64, f64) {
    let m = v.len() as f64;
    let mean = varest::sum::mean(v);
    let s2 = varest::sum::sample_variance(v);
    let mu4 = varest::sum::mean(&v.iter().map(|x| (x - mean).powi(4)).collect::<Vec<_>>());
    (s2, ((mu4 - s2 * s2) / m).sqrt())
}

pub fn sd(v: &[f64]) -> f64 {
    varest::sum::sample_variance(v).sqrt()
}
