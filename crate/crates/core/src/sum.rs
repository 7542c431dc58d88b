//! Compensated accumulation.
//!
//! Every reduction in the crate goes through [`NeumaierSum`]: the U-statistic
//! sums at n = p = 400 combine ~10^5 terms of mixed sign, and the distinct-index
//! identities subtract large, nearly equal quantities.

/// Neumaier's variant of Kahan summation.
#[derive(Debug, Clone, Copy, Default)]
pub struct NeumaierSum {
    sum: f64,
    comp: f64,
}

impl NeumaierSum {
    pub fn new() -> Self {
        Self::default()
    }

    #[inline]
    pub fn add(&mut self, value: f64) {
        let t = self.sum + value;
        if self.sum.abs() >= value.abs() {
            self.comp += (self.sum - t) + value;
        } else {
            self.comp += (value - t) + self.sum;
        }
        self.sum = t;
    }

    #[inline]
    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

impl Extend<f64> for NeumaierSum {
    fn extend<I: IntoIterator<Item = f64>>(&mut self, iter: I) {
        for v in iter {
            self.add(v);
        }
    }
}

/// Compensated sum of an iterator.
pub fn sum<I: IntoIterator<Item = f64>>(iter: I) -> f64 {
    let mut acc = NeumaierSum::new();
    acc.extend(iter);
    acc.value()
}

/// Compensated dot product. Panics on length mismatch; callers check shapes.
pub fn dot<'a, A, B>(a: A, b: B) -> f64
where
    A: IntoIterator<Item = &'a f64>,
    B: IntoIterator<Item = &'a f64>,
{
    sum(a.into_iter().zip(b).map(|(x, y)| x * y))
}

/// Compensated arithmetic mean; `NaN` for empty input.
pub fn mean(values: &[f64]) -> f64 {
    sum(values.iter().copied()) / values.len() as f64
}

/// Sample variance with the (m - 1) divisor, two-pass.
pub fn sample_variance(values: &[f64]) -> f64 {
    let m = mean(values);
    sum(values.iter().map(|v| (v - m) * (v - m))) / (values.len() as f64 - 1.0)
}

/// Sample covariance with the (m - 1) divisor, two-pass.
pub fn sample_covariance(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    let ma = mean(a);
    let mb = mean(b);
    sum(a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb))) / (a.len() as f64 - 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn recovers_cancelled_small_terms() {
        let vals = [1e16, 1.0, -1e16, 1.0];
        assert_eq!(sum(vals), 2.0);
        let naive: f64 = vals.iter().sum();
        assert_ne!(naive, 2.0);
    }

    #[test]
    fn variance_and_covariance_agree() {
        let a = [1.0, 2.0, 4.0, 7.0];
        assert!((sample_variance(&a) - sample_covariance(&a, &a)).abs() < 1e-15);
        assert!((sample_variance(&a) - 7.0).abs() < 1e-12);
    }
}
