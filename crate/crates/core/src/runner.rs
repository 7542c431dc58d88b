//! Dispatch from estimator ids to point estimates and variance estimates,
//! sharing the per-dataset intermediates (W, Gram matrix, g_i) between them.

use std::cell::OnceCell;

use crate::error::{Error, Result};
use crate::estimators::{
    build_single_zero, c_hat_star, dicker_tau2, naive_tau2, t_c_star, t_full, t_oracle,
    EstimateReport, EstimatorId, SingleZeroStat,
};
use crate::model::{build_w, sample_variance_y, CoefficientVector, CovariateModel, LabeledDataset, WMatrix};
use crate::selection::{fit_t_gamma, format_selected, SelectionOptions};
use crate::ustat::{gram, GramMatrix};
use crate::variance::{
    var_hat_naive_gaussian, var_hat_t_gamma, var_naive_theory, var_t_b_theory,
    var_t_cstar_theory, var_t_full_theory, var_t_oracle_theory, var_tilde_naive,
    var_tilde_t_chat, var_tilde_t_gamma, VarianceMethod,
};
use crate::zeroboost::{empirical_estimator_with, BootstrapConfig, DEFAULT_N_BOOT};

/// True parameters, available only in simulations.
#[derive(Debug, Clone, Copy)]
pub struct Truth<'a> {
    pub beta: &'a CoefficientVector,
    pub sigma2: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EstimateOptions {
    pub selection: SelectionOptions,
    pub variance: Option<VarianceMethod>,
    pub bootstrap: BootstrapConfig,
}

impl Default for EstimateOptions {
    fn default() -> Self {
        Self {
            selection: SelectionOptions::default(),
            variance: None,
            bootstrap: BootstrapConfig {
                n_boot: DEFAULT_N_BOOT,
                seed: 0,
                initial: EstimatorId::Naive,
            },
        }
    }
}

/// One whitened dataset with lazily computed shared intermediates.
pub struct Context<'a> {
    ds: &'a LabeledDataset,
    model: &'a CovariateModel,
    truth: Option<Truth<'a>>,
    w: WMatrix,
    sigma_y2: f64,
    gram: OnceCell<GramMatrix>,
    single: OnceCell<SingleZeroStat>,
}

impl<'a> Context<'a> {
    pub fn new(
        ds: &'a LabeledDataset,
        model: &'a CovariateModel,
        truth: Option<Truth<'a>>,
    ) -> Result<Self> {
        crate::estimators::ensure_whitened(ds, model)?;
        Ok(Self {
            ds,
            model,
            truth,
            w: build_w(ds),
            sigma_y2: sample_variance_y(ds.y())?,
            gram: OnceCell::new(),
            single: OnceCell::new(),
        })
    }

    pub fn w(&self) -> &WMatrix {
        &self.w
    }

    pub fn sigma_y2(&self) -> f64 {
        self.sigma_y2
    }

    fn gram(&self) -> Result<&GramMatrix> {
        if let Some(g) = self.gram.get() {
            return Ok(g);
        }
        let g = gram(&self.w)?;
        Ok(self.gram.get_or_init(|| g))
    }

    fn single(&self) -> Result<&SingleZeroStat> {
        if let Some(s) = self.single.get() {
            return Ok(s);
        }
        let s = build_single_zero(self.ds, self.model)?;
        Ok(self.single.get_or_init(|| s))
    }

    fn truth(&self) -> Result<Truth<'a>> {
        self.truth.ok_or(Error::MissingOracleCoefficients)
    }

    /// Point estimate and, if requested and defined, a variance estimate.
    pub fn run(&self, id: EstimatorId, opts: &EstimateOptions) -> Result<EstimateReport> {
        let (n, p) = (self.ds.n(), self.ds.p());
        let method = opts.variance;
        let report = |tau2| EstimateReport::new(id, tau2, self.sigma_y2);
        let (mut rep, var) = match id {
            EstimatorId::Naive | EstimatorId::Dicker => {
                let tau2 = if id == EstimatorId::Naive {
                    naive_tau2(&self.w)?
                } else {
                    dicker_tau2(self.ds)
                };
                let var = match method {
                    Some(VarianceMethod::Theory) => {
                        let t = self.truth()?;
                        Some(var_naive_theory(t.beta, t.sigma2, self.model, n)?)
                    }
                    Some(VarianceMethod::GaussianPlugin) => {
                        self.require_gaussian()?;
                        Some(var_hat_naive_gaussian(tau2, self.sigma_y2, n, p))
                    }
                    Some(VarianceMethod::Tilde) => Some(var_tilde_naive(&self.w, self.gram()?)?),
                    None => None,
                };
                (report(tau2), var)
            }
            EstimatorId::Oracle => {
                let t = self.truth()?;
                let tau2 = t_oracle(self.ds, &self.w, t.beta, self.model)?;
                let var = match method {
                    Some(VarianceMethod::Theory) => {
                        Some(var_t_oracle_theory(t.beta, t.sigma2, self.model, n)?)
                    }
                    _ => None,
                };
                (report(tau2), var)
            }
            EstimatorId::Full => {
                let tau2 = t_full(self.ds, &self.w, self.model)?;
                let var = match method {
                    Some(VarianceMethod::Theory) => {
                        let t = self.truth()?;
                        Some(var_t_full_theory(t.beta, t.sigma2, self.model, n)?)
                    }
                    _ => None,
                };
                (report(tau2), var)
            }
            EstimatorId::Single => {
                let single = self.single()?;
                let c = c_hat_star(&self.w, single)?;
                let tau2 = t_c_star(&self.w, single, c)?;
                let var = match method {
                    Some(VarianceMethod::Theory) => {
                        let t = self.truth()?;
                        Some(var_t_cstar_theory(t.beta, t.sigma2, self.model, n)?)
                    }
                    Some(VarianceMethod::Tilde) => {
                        let v = var_tilde_naive(&self.w, self.gram()?)?;
                        Some(var_tilde_t_chat(v, &self.w, single)?)
                    }
                    _ => None,
                };
                (report(tau2).with_aux("c_hat", c), var)
            }
            EstimatorId::Selection => {
                let fit = fit_t_gamma(self.ds, self.model, &opts.selection)?;
                let sel = &fit.selection.selected;
                let beta2 = fit.beta2.as_slice().expect("contiguous");
                let n_eval = fit.eval.n();
                let var = match method {
                    Some(VarianceMethod::Theory) => {
                        let t = self.truth()?;
                        Some(var_t_b_theory(t.beta, t.sigma2, self.model, n_eval, sel)?)
                    }
                    Some(VarianceMethod::GaussianPlugin) => {
                        self.require_gaussian()?;
                        let sy2 = sample_variance_y(fit.eval.y())?;
                        let v = var_hat_naive_gaussian(fit.naive_tau2, sy2, n_eval, p);
                        Some(var_hat_t_gamma(v, beta2, sel, n_eval)?)
                    }
                    Some(VarianceMethod::Tilde) => {
                        let v = if fit.selection.split_used {
                            var_tilde_naive(&fit.eval_w, &gram(&fit.eval_w)?)?
                        } else {
                            var_tilde_naive(&self.w, self.gram()?)?
                        };
                        Some(var_tilde_t_gamma(v, beta2, sel, self.model, n_eval)?)
                    }
                    None => None,
                };
                let r = report(fit.tau2)
                    .with_aux("selected", format_selected(sel))
                    .with_aux("split", fit.selection.split_used);
                (r, var)
            }
            EstimatorId::Empirical => {
                let cfg = BootstrapConfig::new(
                    opts.bootstrap.n_boot,
                    opts.bootstrap.seed,
                    opts.bootstrap.initial,
                )?;
                let inner = EstimateOptions {
                    variance: None,
                    ..*opts
                };
                let truth = self.truth;
                let model = self.model;
                let initial = |d: &LabeledDataset| -> Result<f64> {
                    Ok(Context::new(d, model, truth)?.run(cfg.initial, &inner)?.tau2)
                };
                (empirical_estimator_with(self.ds, self.model, &cfg, initial)?, None)
            }
        };
        if let Some(m) = method {
            rep.variance_method = var.map(|_| m);
            rep.variance_estimate = var;
            match var {
                None => rep.aux.insert("variance".into(), "unavailable".into()),
                Some(v) if v < 0.0 => rep.aux.insert("variance_negative".into(), "true".into()),
                Some(_) => None,
            };
            // dicker borrows the naive formulas
            let approx = id == EstimatorId::Dicker
                || (m == VarianceMethod::Theory && matches!(id, EstimatorId::Full | EstimatorId::Selection));
            if approx && var.is_some() {
                rep.aux.insert("variance_order".into(), "approx".into());
            }
        }
        Ok(rep)
    }

    fn require_gaussian(&self) -> Result<()> {
        if self.model.is_gaussian() {
            Ok(())
        } else {
            Err(Error::InvalidModel(
                "the gaussian-plugin variance needs a Gaussian covariate model".into(),
            ))
        }
    }
}
