//! Closed-form evaluation of distinct-index sums.
//!
//! The estimators are written as sums over pairwise-distinct observation
//! indices. Expanding the inclusion-exclusion turns the O(n^2) pair sums and
//! O(n^3) triple sums into O(n) expressions in power sums, and the Gram-based
//! kernels into O(n^2) expressions once the Gram matrix is formed.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};

use crate::error::{require_n, Error, Result};
use crate::model::WMatrix;
use crate::sum::{self, NeumaierSum};

/// `sum_{i1 != i2} u_{i1} v_{i2} = (sum u)(sum v) - sum u_i v_i`.
pub fn pair_sum_distinct(u: ArrayView1<'_, f64>, v: ArrayView1<'_, f64>) -> Result<f64> {
    if u.len() != v.len() {
        return Err(Error::LengthMismatch {
            left: u.len(),
            right: v.len(),
        });
    }
    let su = sum::sum(u.iter().copied());
    let sv = sum::sum(v.iter().copied());
    let suv = sum::dot(u.iter(), v.iter());
    Ok(su * sv - suv)
}

/// `sum_{i1, i2, i3 pairwise distinct} u_{i1} v_{i2} w_{i3}`.
///
/// Expands to `S_u S_v S_w - S_uv S_w - S_uw S_v - S_vw S_u + 2 S_uvw` with
/// `S_ab = sum_i a_i b_i`.
pub fn triple_sum_distinct(
    u: ArrayView1<'_, f64>,
    v: ArrayView1<'_, f64>,
    w: ArrayView1<'_, f64>,
) -> Result<f64> {
    if u.len() != v.len() || u.len() != w.len() {
        return Err(Error::LengthMismatch {
            left: u.len(),
            right: if u.len() != v.len() { v.len() } else { w.len() },
        });
    }
    require_n(u.len(), 3)?;
    let mut s = [NeumaierSum::new(); 7];
    for i in 0..u.len() {
        let (a, b, c) = (u[i], v[i], w[i]);
        s[0].add(a);
        s[1].add(b);
        s[2].add(c);
        s[3].add(a * b);
        s[4].add(a * c);
        s[5].add(b * c);
        s[6].add(a * b * c);
    }
    let [su, sv, sw, suv, suw, svw, suvw] = s.map(|acc| acc.value());
    Ok(sum::sum([
        su * sv * sw,
        -suv * sw,
        -suw * sv,
        -svw * su,
        2.0 * suvw,
    ]))
}

/// Gram matrix of the rows of `W`, `g[i1][i2] = W_{i1} . W_{i2}`.
#[derive(Debug, Clone, PartialEq)]
pub struct GramMatrix {
    g: Array2<f64>,
    row_sums_offdiag: Array1<f64>,
}

impl GramMatrix {
    /// Wrap an explicit symmetric matrix.
    pub fn from_matrix(g: Array2<f64>) -> Result<Self> {
        let n = g.nrows();
        if g.ncols() != n {
            return Err(Error::DimensionMismatch {
                what: "gram matrix",
                expected: n,
                got: g.ncols(),
            });
        }
        let scale = g.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        for i in 0..n {
            for k in 0..i {
                if (g[[i, k]] - g[[k, i]]).abs() > 1e-10 * scale {
                    return Err(Error::InvalidDataset(format!(
                        "gram matrix not symmetric at ({i}, {k})"
                    )));
                }
            }
        }
        let row_sums_offdiag = (0..n)
            .map(|i| sum::sum((0..n).filter(|&k| k != i).map(|k| g[[i, k]])))
            .collect();
        Ok(Self { g, row_sums_offdiag })
    }

    pub fn g(&self) -> ArrayView2<'_, f64> {
        self.g.view()
    }

    pub fn row_sums_offdiag(&self) -> ArrayView1<'_, f64> {
        self.row_sums_offdiag.view()
    }

    pub fn n(&self) -> usize {
        self.g.nrows()
    }

    /// `sum_{i1 != i2} g[i1][i2]`.
    pub fn offdiag_sum(&self) -> f64 {
        sum::sum(self.row_sums_offdiag.iter().copied())
    }
}

/// Gram matrix of `W`'s rows; O(n^2 p).
pub fn gram(w: &WMatrix) -> Result<GramMatrix> {
    require_n(w.n(), 2)?;
    let wm = w.w();
    let mut g = wm.dot(&wm.t());
    let n = g.nrows();
    // gemm does not promise bitwise symmetry
    for i in 0..n {
        for k in 0..i {
            g[[i, k]] = g[[k, i]];
        }
    }
    GramMatrix::from_matrix(g)
}

/// `sum_{i1 != i2} g[i1][i2]^2`, unnormalized.
pub fn offdiag_square_sum(g: &GramMatrix) -> f64 {
    let m = g.g();
    let n = g.n();
    let mut acc = NeumaierSum::new();
    for i in 0..n {
        for k in 0..n {
            if k != i {
                acc.add(m[[i, k]] * m[[i, k]]);
            }
        }
    }
    acc.value()
}

/// `sum_{(i1, i2, i3) pairwise distinct} g[i1][i2] g[i2][i3]`.
///
/// For fixed middle index the sum over `i1 != i3` is the squared off-diagonal
/// row sum minus its diagonal `i1 = i3` terms.
pub fn chain_sum_distinct(g: &GramMatrix) -> Result<f64> {
    let n = g.n();
    require_n(n, 3)?;
    let m = g.g();
    let r = g.row_sums_offdiag();
    let mut acc = NeumaierSum::new();
    for i2 in 0..n {
        acc.add(r[i2] * r[i2]);
        for i1 in 0..n {
            if i1 != i2 {
                acc.add(-(m[[i1, i2]] * m[[i1, i2]]));
            }
        }
    }
    Ok(acc.value())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{build_w, LabeledDataset};
    use ndarray::array;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rel_close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol * a.abs().max(b.abs()).max(1e-300)
    }

    fn random_vec(rng: &mut ChaCha8Rng, n: usize) -> Array1<f64> {
        Array1::from_shape_fn(n, |_| rng.random_range(-2.0..2.0))
    }

    #[test]
    fn pair_sum_examples() {
        assert_eq!(pair_sum_distinct(array![1.0, 1.0].view(), array![1.0, 1.0].view()).unwrap(), 2.0);
        assert_eq!(
            pair_sum_distinct(array![1.0, 2.0, 3.0].view(), array![1.0, 1.0, 1.0].view()).unwrap(),
            12.0
        );
        assert!(matches!(
            pair_sum_distinct(array![1.0].view(), array![1.0, 2.0].view()),
            Err(Error::LengthMismatch { .. })
        ));
    }

    #[test]
    fn pair_sum_matches_double_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let (u, v) = (random_vec(&mut rng, 25), random_vec(&mut rng, 25));
        let mut brute = 0.0;
        for a in 0..25 {
            for b in 0..25 {
                if a != b {
                    brute += u[a] * v[b];
                }
            }
        }
        assert!(rel_close(pair_sum_distinct(u.view(), v.view()).unwrap(), brute, 1e-12));
    }

    #[test]
    fn triple_sum_examples() {
        let ones = array![1.0, 1.0, 1.0];
        assert_eq!(triple_sum_distinct(ones.view(), ones.view(), ones.view()).unwrap(), 6.0);
        assert_eq!(
            triple_sum_distinct(
                array![1.0, 0.0, 0.0].view(),
                array![0.0, 1.0, 0.0].view(),
                array![0.0, 0.0, 1.0].view()
            )
            .unwrap(),
            1.0
        );
        assert!(matches!(
            triple_sum_distinct(array![1.0, 1.0].view(), array![1.0, 1.0].view(), array![1.0, 1.0].view()),
            Err(Error::TooFewObservations { needed: 3, got: 2 })
        ));
    }

    #[test]
    fn triple_sum_matches_triple_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let n = 20;
        let (u, v, w) = (random_vec(&mut rng, n), random_vec(&mut rng, n), random_vec(&mut rng, n));
        let mut brute = 0.0;
        for a in 0..n {
            for b in 0..n {
                for c in 0..n {
                    if a != b && b != c && a != c {
                        brute += u[a] * v[b] * w[c];
                    }
                }
            }
        }
        let fast = triple_sum_distinct(u.view(), v.view(), w.view()).unwrap();
        assert!(rel_close(fast, brute, 1e-12), "{fast} vs {brute}");
    }

    #[test]
    fn gram_examples() {
        let ds = LabeledDataset::new(array![[1.0], [2.0]], array![1.0, 1.0]).unwrap();
        let g = gram(&build_w(&ds)).unwrap();
        assert_eq!(g.g(), array![[1.0, 2.0], [2.0, 4.0]]);
        assert_eq!(g.row_sums_offdiag().to_vec(), vec![2.0, 2.0]);

        let ds = LabeledDataset::new(array![[1.0, 0.0], [0.0, 1.0]], array![3.0, -2.0]).unwrap();
        let g = gram(&build_w(&ds)).unwrap();
        assert_eq!(g.g()[[0, 1]], 0.0);
        assert_eq!(g.g()[[1, 0]], 0.0);
    }

    #[test]
    fn gram_matches_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let x = Array2::from_shape_fn((10, 4), |_| rng.random_range(-1.0..1.0));
        let y = random_vec(&mut rng, 10);
        let w = build_w(&LabeledDataset::new(x, y).unwrap());
        let g = gram(&w).unwrap();
        for a in 0..10 {
            for b in 0..10 {
                let brute: f64 = (0..4).map(|j| w.w()[[a, j]] * w.w()[[b, j]]).sum();
                assert!(rel_close(g.g()[[a, b]], brute, 1e-12));
            }
        }
    }

    #[test]
    fn offdiag_and_chain_examples() {
        let eye = GramMatrix::from_matrix(Array2::eye(3)).unwrap();
        assert_eq!(offdiag_square_sum(&eye), 0.0);
        assert_eq!(chain_sum_distinct(&eye).unwrap(), 0.0);
        let ones = GramMatrix::from_matrix(Array2::from_elem((3, 3), 1.0)).unwrap();
        assert_eq!(offdiag_square_sum(&ones), 6.0);
        assert_eq!(chain_sum_distinct(&ones).unwrap(), 6.0);
        let small = GramMatrix::from_matrix(Array2::eye(2)).unwrap();
        assert!(chain_sum_distinct(&small).is_err());
    }

    #[test]
    fn offdiag_and_chain_match_loops() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let n = 12;
        let a = Array2::from_shape_fn((n, 3), |_| rng.random_range(-1.0..1.0));
        let g = GramMatrix::from_matrix(a.dot(&a.t())).unwrap();
        let m = g.g();
        let mut sq = 0.0;
        let mut chain = 0.0;
        for i1 in 0..n {
            for i2 in 0..n {
                if i1 == i2 {
                    continue;
                }
                sq += m[[i1, i2]].powi(2);
                for i3 in 0..n {
                    if i3 != i1 && i3 != i2 {
                        chain += m[[i1, i2]] * m[[i2, i3]];
                    }
                }
            }
        }
        assert!(rel_close(offdiag_square_sum(&g), sq, 1e-12));
        assert!(rel_close(chain_sum_distinct(&g).unwrap(), chain, 1e-12));
    }
}
