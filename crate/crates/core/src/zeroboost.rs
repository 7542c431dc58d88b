//! Bootstrap "empirical estimator": improve any initial `tau^2` estimator by
//! regressing it on the zero-mean instrument `g_n` across resamples.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::estimators::{build_single_zero, EstimateReport, EstimatorId, SingleZeroStat};
use crate::model::{sample_variance_y, CovariateModel, LabeledDataset};
use crate::sum;

pub const DEFAULT_N_BOOT: usize = 200;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BootstrapConfig {
    pub n_boot: usize,
    pub seed: u64,
    pub initial: EstimatorId,
}

impl BootstrapConfig {
    pub fn new(n_boot: usize, seed: u64, initial: EstimatorId) -> Result<Self> {
        if n_boot < 2 {
            return Err(Error::Config(format!(
                "bootstrap needs at least 2 resamples, got {n_boot}"
            )));
        }
        if initial == EstimatorId::Empirical {
            return Err(Error::Config(
                "the empirical estimator cannot be its own initial estimator".into(),
            ));
        }
        Ok(Self {
            n_boot,
            seed,
            initial,
        })
    }
}

/// Row indices of resample `b`: a pure function of `(seed, b)`.
pub fn resample_rows(n: usize, seed: u64, b: usize) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(b as u64);
    (0..n).map(|_| rng.random_range(0..n)).collect()
}

/// Bootstrap empirical estimator with the initial estimator supplied as a closure.
///
/// `c_tilde = Cov_boot(tau_tilde^*, g_n^*) / (Var(g_i) / n)` and the result is
/// `tau_tilde - c_tilde g_n`, both `tau_tilde` and `g_n` on the full data.
pub fn empirical_estimator_with<F>(
    ds: &LabeledDataset,
    model: &CovariateModel,
    cfg: &BootstrapConfig,
    initial: F,
) -> Result<EstimateReport>
where
    F: Fn(&LabeledDataset) -> Result<f64> + Sync,
{
    if cfg.n_boot < 2 {
        return Err(Error::Config(format!(
            "bootstrap needs at least 2 resamples, got {}",
            cfg.n_boot
        )));
    }
    let single = build_single_zero(ds, model)?;
    let tau_tilde = initial(ds)?;
    let n = ds.n();
    let draws: Vec<(f64, f64)> = (0..cfg.n_boot)
        .into_par_iter()
        .map(|b| {
            let rows = resample_rows(n, cfg.seed, b);
            let resampled = ds.select_rows(&rows)?;
            let t = initial(&resampled).map_err(|e| Error::InitialEstimatorFailure {
                resample: b,
                source: Box::new(e),
            })?;
            Ok((t, single.mean_over(&rows)))
        })
        .collect::<Result<_>>()?;
    let c_tilde = coefficient(&draws, &single);
    let tau2 = tau_tilde - c_tilde * single.g_n();
    let sigma_y2 = sample_variance_y(ds.y())?;
    Ok(EstimateReport::new(EstimatorId::Empirical, tau2, sigma_y2)
        .with_aux("c_tilde", c_tilde)
        .with_aux("n_boot", cfg.n_boot)
        .with_aux("initial", cfg.initial))
}

fn coefficient(draws: &[(f64, f64)], single: &SingleZeroStat) -> f64 {
    let (t, g): (Vec<f64>, Vec<f64>) = draws.iter().copied().unzip();
    let cov = sum::sample_covariance(&t, &g);
    cov / (single.var_g() / single.n() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimators::naive_tau2;
    use crate::model::build_w;
    use ndarray::{Array1, Array2};

    fn dataset(seed: u64, n: usize, p: usize) -> LabeledDataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = Array2::from_shape_fn((n, p), |_| rng.random_range(-1.7..1.7));
        let y = Array1::from_shape_fn(n, |i| x[[i, 0]] + rng.random_range(-1.0..1.0));
        LabeledDataset::new(x, y).unwrap()
    }

    #[test]
    fn config_validation() {
        assert!(BootstrapConfig::new(1, 0, EstimatorId::Naive).is_err());
        assert!(BootstrapConfig::new(10, 0, EstimatorId::Empirical).is_err());
        assert!(BootstrapConfig::new(2, 0, EstimatorId::Naive).is_ok());
    }

    #[test]
    fn resamples_are_reproducible_and_distinct() {
        assert_eq!(resample_rows(50, 9, 3), resample_rows(50, 9, 3));
        assert_ne!(resample_rows(50, 9, 3), resample_rows(50, 9, 4));
        assert!(resample_rows(50, 9, 0).iter().all(|&i| i < 50));
    }

    #[test]
    fn constant_initial_gives_identity() {
        let ds = dataset(1, 30, 4);
        let model = CovariateModel::standard_gaussian(4);
        let cfg = BootstrapConfig::new(20, 5, EstimatorId::Naive).unwrap();
        let r = empirical_estimator_with(&ds, &model, &cfg, |_| Ok(0.75)).unwrap();
        assert_eq!(r.tau2, 0.75);
        assert_eq!(r.aux["c_tilde"], "0");
    }

    #[test]
    fn deterministic_across_thread_counts() {
        let ds = dataset(2, 40, 5);
        let model = CovariateModel::standard_gaussian(5);
        let cfg = BootstrapConfig::new(64, 17, EstimatorId::Naive).unwrap();
        let naive = |d: &LabeledDataset| naive_tau2(&build_w(d));
        let run = |threads| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| empirical_estimator_with(&ds, &model, &cfg, naive).unwrap())
        };
        let a = run(1);
        let b = run(4);
        assert_eq!(a.tau2.to_bits(), b.tau2.to_bits());
        assert_eq!(a.aux, b.aux);
    }

    #[test]
    fn initial_failure_reports_resample() {
        let ds = dataset(3, 20, 3);
        let model = CovariateModel::standard_gaussian(3);
        let cfg = BootstrapConfig::new(5, 1, EstimatorId::Naive).unwrap();
        let calls = std::sync::atomic::AtomicUsize::new(0);
        let err = empirical_estimator_with(&ds, &model, &cfg, |d| {
            if calls.fetch_add(1, std::sync::atomic::Ordering::SeqCst) == 0 {
                Ok(naive_tau2(&build_w(d))?)
            } else {
                Err(Error::DegenerateZeroEstimator("boom".into()))
            }
        })
        .unwrap_err();
        assert!(matches!(err, Error::InitialEstimatorFailure { .. }));
    }

    #[test]
    fn needs_two_columns() {
        let ds = dataset(4, 20, 1);
        let model = CovariateModel::standard_gaussian(1);
        let cfg = BootstrapConfig::new(5, 1, EstimatorId::Naive).unwrap();
        assert!(matches!(
            empirical_estimator_with(&ds, &model, &cfg, |_| Ok(1.0)),
            Err(Error::DegenerateZeroEstimator(_))
        ));
    }
}
