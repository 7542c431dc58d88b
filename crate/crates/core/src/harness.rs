//! Monte Carlo driver and mean/bias/SE/RMSE summaries.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::time::Instant;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::estimators::EstimatorId;
use crate::runner::{Context, EstimateOptions, Truth};
use crate::simgen::{build_beta, generate_dataset, ScenarioConfig};
use crate::sum;

#[derive(Debug, Clone, PartialEq)]
pub struct RepRecord {
    pub rep: usize,
    pub estimator: EstimatorId,
    pub tau2_hat: f64,
    pub sigma2_hat: f64,
    pub variance_estimate: Option<f64>,
    pub wall_ms: Option<f64>,
    pub aux: BTreeMap<String, String>,
    /// Set when the estimator failed on this replication; estimates are NaN.
    pub error: Option<String>,
}

impl RepRecord {
    pub fn is_usable(&self) -> bool {
        self.error.is_none() && self.tau2_hat.is_finite()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct RunOptions {
    pub estimate: EstimateOptions,
    /// Record per-estimator wall time (makes record files non-reproducible).
    pub timing: bool,
}

/// Bootstrap seed for replication `rep`, decorrelated from the data stream.
pub fn bootstrap_seed(seed: u64, rep: usize) -> u64 {
    seed ^ 0x9E37_79B9_7F4A_7C15u64.wrapping_mul(rep as u64 + 1)
}

/// Run every estimator on every replication. Records come back ordered by
/// `(rep, position in estimators)` whatever the thread count.
pub fn run_scenario(
    cfg: &ScenarioConfig,
    estimators: &[EstimatorId],
    opts: &RunOptions,
) -> Result<Vec<RepRecord>> {
    cfg.validate()?;
    let beta = build_beta(cfg)?;
    let model = cfg.model()?;
    let per_rep: Vec<Vec<RepRecord>> = (0..cfg.reps)
        .into_par_iter()
        .map(|rep| -> Result<Vec<RepRecord>> {
            let ds = generate_dataset(cfg, &beta, rep)?;
            let truth = Truth {
                beta: &beta,
                sigma2: cfg.sigma2,
            };
            let ctx = Context::new(&ds, &model, Some(truth))?;
            let mut est = opts.estimate;
            est.bootstrap.seed = bootstrap_seed(opts.estimate.bootstrap.seed ^ cfg.seed, rep);
            Ok(estimators
                .iter()
                .map(|&id| {
                    let start = Instant::now();
                    let outcome = ctx.run(id, &est);
                    let wall_ms = opts.timing.then(|| start.elapsed().as_secs_f64() * 1e3);
                    match outcome {
                        Ok(r) => RepRecord {
                            rep,
                            estimator: id,
                            tau2_hat: r.tau2,
                            sigma2_hat: r.sigma2,
                            variance_estimate: r.variance_estimate,
                            wall_ms,
                            aux: r.aux,
                            error: None,
                        },
                        Err(e) => RepRecord {
                            rep,
                            estimator: id,
                            tau2_hat: f64::NAN,
                            sigma2_hat: f64::NAN,
                            variance_estimate: None,
                            wall_ms,
                            aux: BTreeMap::new(),
                            error: Some(e.to_string()),
                        },
                    }
                })
                .collect())
        })
        .collect::<Result<_>>()?;
    Ok(per_rep.into_iter().flatten().collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct SummaryStats {
    pub estimator: EstimatorId,
    pub reps: usize,
    pub mean: f64,
    /// `true_tau2 - mean`.
    pub bias: f64,
    pub se: f64,
    pub rmse: f64,
    /// Delta-method standard deviation of `rmse`.
    pub rmse_sd: f64,
}

/// Summaries in canonical estimator order, skipping failed records.
pub fn summarize(records: &[RepRecord], true_tau2: f64) -> Result<Vec<SummaryStats>> {
    if records.is_empty() {
        return Err(Error::InsufficientRecords {
            estimator: "any".into(),
            got: 0,
        });
    }
    let mut groups: BTreeMap<EstimatorId, Vec<f64>> = BTreeMap::new();
    for r in records {
        let entry = groups.entry(r.estimator).or_default();
        if r.is_usable() {
            entry.push(r.tau2_hat);
        }
    }
    groups
        .into_iter()
        .map(|(id, mut values)| {
            if values.len() < 2 {
                return Err(Error::InsufficientRecords {
                    estimator: id.to_string(),
                    got: values.len(),
                });
            }
            // fixed order makes the result independent of record order
            values.sort_by(f64::total_cmp);
            Ok(summarize_values(id, &values, true_tau2))
        })
        .collect()
}

fn summarize_values(id: EstimatorId, values: &[f64], true_tau2: f64) -> SummaryStats {
    let m = values.len() as f64;
    let mean = sum::mean(values);
    let se = sum::sample_variance(values).sqrt();
    let sq_err: Vec<f64> = values.iter().map(|v| (v - true_tau2).powi(2)).collect();
    let rmse = sum::mean(&sq_err).sqrt();
    let rmse_sd = if rmse > 0.0 {
        sum::sample_variance(&sq_err).sqrt() / (2.0 * rmse * m.sqrt())
    } else {
        0.0
    };
    SummaryStats {
        estimator: id,
        reps: values.len(),
        mean,
        bias: true_tau2 - mean,
        se,
        rmse,
        rmse_sd,
    }
}

/// Six significant digits, shortest decimal rendering.
pub fn format_sig6(x: f64) -> String {
    if !x.is_finite() {
        return x.to_string();
    }
    let rounded: f64 = format!("{x:.5e}").parse().expect("valid float");
    if rounded == 0.0 {
        "0".into()
    } else {
        rounded.to_string()
    }
}

pub const RECORDS_HEADER: [&str; 6] = ["rep", "estimator", "tau2_hat", "sigma2_hat", "var_hat", "wall_ms"];
pub const SUMMARY_HEADER: [&str; 6] = ["estimator", "mean", "bias", "se", "rmse", "rmse_sd"];

fn opt_cell(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn csv_err(e: csv::Error) -> Error {
    let line = e.position().map(|p| p.line() as usize).unwrap_or(0);
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        kind => Error::Parse {
            line,
            msg: format!("{kind:?}"),
        },
    }
}

/// Records CSV with full round-trip precision; failed estimates are `NaN`.
pub fn write_records<W: Write>(out: W, records: &[RepRecord]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(RECORDS_HEADER).map_err(csv_err)?;
    for r in records {
        w.write_record([
            r.rep.to_string(),
            r.estimator.to_string(),
            r.tau2_hat.to_string(),
            r.sigma2_hat.to_string(),
            opt_cell(r.variance_estimate),
            opt_cell(r.wall_ms),
        ])
        .map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_records<R: Read>(input: R) -> Result<Vec<RepRecord>> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(input);
    let header = rdr.headers().map_err(csv_err)?.clone();
    if header.iter().collect::<Vec<_>>() != RECORDS_HEADER {
        return Err(Error::Parse {
            line: 1,
            msg: format!("expected header `{}`", RECORDS_HEADER.join(",")),
        });
    }
    let mut out = Vec::new();
    for row in rdr.records() {
        let row = row.map_err(csv_err)?;
        let line = row.position().map(|p| p.line() as usize).unwrap_or(0);
        let bad = |field: &str, msg: String| Error::Parse {
            line,
            msg: format!("{field}: {msg}"),
        };
        let float = |idx: usize, field: &str| -> Result<Option<f64>> {
            let s = row[idx].trim();
            if s.is_empty() {
                return Ok(None);
            }
            s.parse::<f64>().map(Some).map_err(|e| bad(field, e.to_string()))
        };
        let tau2_hat = float(2, "tau2_hat")?.ok_or_else(|| bad("tau2_hat", "missing".into()))?;
        let sigma2_hat = float(3, "sigma2_hat")?.unwrap_or(f64::NAN);
        out.push(RepRecord {
            rep: row[0].trim().parse().map_err(|e: std::num::ParseIntError| bad("rep", e.to_string()))?,
            estimator: row[1].trim().parse().map_err(|e: Error| bad("estimator", e.to_string()))?,
            tau2_hat,
            sigma2_hat,
            variance_estimate: float(4, "var_hat")?,
            wall_ms: float(5, "wall_ms")?,
            aux: BTreeMap::new(),
            error: None,
        });
    }
    Ok(out)
}

pub fn write_summary<W: Write>(out: W, stats: &[SummaryStats]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(SUMMARY_HEADER).map_err(csv_err)?;
    for s in stats {
        w.write_record([
            s.estimator.to_string(),
            format_sig6(s.mean),
            format_sig6(s.bias),
            format_sig6(s.se),
            format_sig6(s.rmse),
            format_sig6(s.rmse_sd),
        ])
        .map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simgen::XDist;

    fn record(rep: usize, id: EstimatorId, tau2: f64) -> RepRecord {
        RepRecord {
            rep,
            estimator: id,
            tau2_hat: tau2,
            sigma2_hat: 1.0 - tau2,
            variance_estimate: None,
            wall_ms: None,
            aux: BTreeMap::new(),
            error: None,
        }
    }

    #[test]
    fn hand_summary() {
        let recs: Vec<_> = [1.1, 0.9, 1.2]
            .iter()
            .enumerate()
            .map(|(i, &t)| record(i, EstimatorId::Naive, t))
            .collect();
        let s = &summarize(&recs, 1.0).unwrap()[0];
        assert!((s.rmse - 0.02_f64.sqrt()).abs() < 1e-12);
        assert!((s.rmse_sd - 0.0173205 / (2.0 * 0.02_f64.sqrt() * 3_f64.sqrt())).abs() < 1e-6);
        assert_eq!(format_sig6(s.rmse), "0.141421");
        assert_eq!(format_sig6(s.rmse_sd), "0.0353553");
        // rmse^2 = bias^2 + se^2 (m-1)/m
        let m = 3.0;
        assert!((s.rmse.powi(2) - (s.bias.powi(2) + s.se.powi(2) * (m - 1.0) / m)).abs() < 1e-10);
    }

    #[test]
    fn exact_estimates_summarize_to_zero() {
        let recs: Vec<_> = (0..4).map(|i| record(i, EstimatorId::Oracle, 2.0)).collect();
        let s = &summarize(&recs, 2.0).unwrap()[0];
        assert_eq!((s.bias, s.se, s.rmse, s.rmse_sd), (0.0, 0.0, 0.0, 0.0));
    }

    #[test]
    fn insufficient_records() {
        assert!(summarize(&[], 1.0).is_err());
        let recs = vec![record(0, EstimatorId::Naive, 1.0)];
        assert!(matches!(summarize(&recs, 1.0), Err(Error::InsufficientRecords { .. })));
    }

    #[test]
    fn records_round_trip() {
        let mut recs: Vec<_> = (0..3).map(|i| record(i, EstimatorId::Single, 0.1 + i as f64 / 3.0)).collect();
        recs[1].variance_estimate = Some(1.0 / 7.0);
        let mut buf = Vec::new();
        write_records(&mut buf, &recs).unwrap();
        let back = read_records(buf.as_slice()).unwrap();
        assert_eq!(back, recs);
    }

    #[test]
    fn malformed_records_report_line() {
        let text = "rep,estimator,tau2_hat,sigma2_hat,var_hat,wall_ms\n0,naive,1.0,0.0,,\n1,naive,abc,0.0,,\n";
        match read_records(text.as_bytes()) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn format_examples() {
        assert_eq!(format_sig6(1.0), "1");
        assert_eq!(format_sig6(-0.0200001234), "-0.0200001");
        assert_eq!(format_sig6(123456789.0), "123457000");
        assert_eq!(format_sig6(-0.0), "0");
    }

    #[test]
    fn small_scenario_is_deterministic() {
        let cfg = ScenarioConfig {
            n: 30,
            p: 10,
            tau2: 1.0,
            tau2_b: 0.5,
            sigma2: 1.0,
            b_size: 2,
            reps: 6,
            seed: 5,
            x_dist: XDist::Gaussian,
        };
        let ids = [EstimatorId::Naive, EstimatorId::Selection, EstimatorId::Empirical];
        let mut opts = RunOptions::default();
        opts.estimate.bootstrap.n_boot = 8;
        let a = run_scenario(&cfg, &ids, &opts).unwrap();
        let b = rayon::ThreadPoolBuilder::new()
            .num_threads(3)
            .build()
            .unwrap()
            .install(|| run_scenario(&cfg, &ids, &opts).unwrap());
        assert_eq!(a.len(), 18);
        assert_eq!(a, b);
        assert_eq!((a[4].rep, a[4].estimator), (1, EstimatorId::Selection));
    }
}
