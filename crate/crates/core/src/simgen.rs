//! Synthetic data for the simulation design: a strong block of `b_size`
//! coefficients carrying `tau2_b` and a flat remainder carrying the rest.

use std::fmt;
use std::str::FromStr;

use ndarray::{Array1, Array2};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal, StudentT};
use serde::Deserialize;

use crate::error::{Error, Result};
use crate::model::{CoefficientVector, CovariateModel, LabeledDataset};

/// Marginal law of each (independent, standardized) covariate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum XDist {
    Gaussian,
    /// Student t with `df > 4` degrees of freedom scaled to unit variance.
    ScaledT { df: f64 },
    /// `N(0, 1)` with probability `normal_weight`, otherwise a random sign.
    RademacherMix { normal_weight: f64 },
}

impl XDist {
    pub fn fourth_moment(&self) -> f64 {
        match *self {
            XDist::Gaussian => 3.0,
            XDist::ScaledT { df } => 3.0 * (df - 2.0) / (df - 4.0),
            XDist::RademacherMix { normal_weight } => 1.0 + 2.0 * normal_weight,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            XDist::Gaussian => Ok(()),
            XDist::ScaledT { df } if df.is_finite() && df > 4.0 => Ok(()),
            XDist::ScaledT { df } => Err(Error::InvalidScenario(format!(
                "t covariates need df > 4 for a finite fourth moment, got {df}"
            ))),
            XDist::RademacherMix { normal_weight } if (0.0..=1.0).contains(&normal_weight) => Ok(()),
            XDist::RademacherMix { normal_weight } => Err(Error::InvalidScenario(format!(
                "mixture weight must lie in [0, 1], got {normal_weight}"
            ))),
        }
    }

    fn sample<R: Rng>(&self, rng: &mut R, t: Option<&StudentT<f64>>) -> f64 {
        match *self {
            XDist::Gaussian => StandardNormal.sample(rng),
            XDist::ScaledT { df } => {
                t.expect("t distribution").sample(rng) * ((df - 2.0) / df).sqrt()
            }
            XDist::RademacherMix { normal_weight } => {
                if rng.random::<f64>() < normal_weight {
                    StandardNormal.sample(rng)
                } else if rng.random::<bool>() {
                    1.0
                } else {
                    -1.0
                }
            }
        }
    }
}

impl fmt::Display for XDist {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            XDist::Gaussian => f.write_str("gaussian"),
            XDist::ScaledT { df } => write!(f, "t:{df}"),
            XDist::RademacherMix { normal_weight } => write!(f, "rademacher-mix:{normal_weight}"),
        }
    }
}

impl FromStr for XDist {
    type Err = Error;

    /// `gaussian`, `t:<df>` or `rademacher-mix:<weight>`.
    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::InvalidScenario(format!("unknown covariate distribution `{s}`"));
        let dist = match s.split_once(':') {
            None if s == "gaussian" => XDist::Gaussian,
            Some(("t", df)) => XDist::ScaledT {
                df: df.trim().parse().map_err(|_| bad())?,
            },
            Some(("rademacher-mix", w)) => XDist::RademacherMix {
                normal_weight: w.trim().parse().map_err(|_| bad())?,
            },
            _ => return Err(bad()),
        };
        dist.validate()?;
        Ok(dist)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub n: usize,
    pub p: usize,
    pub tau2: f64,
    pub tau2_b: f64,
    pub sigma2: f64,
    pub b_size: usize,
    pub reps: usize,
    pub seed: u64,
    pub x_dist: XDist,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenarioFile {
    n: Option<usize>,
    p: Option<usize>,
    tau2: Option<f64>,
    tau2_b: Option<f64>,
    sigma2: Option<f64>,
    b_size: Option<usize>,
    reps: Option<usize>,
    seed: Option<u64>,
    x_dist: Option<String>,
}

/// Scenario fields that may come from a file and be overridden by flags.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ScenarioOverrides {
    pub n: Option<usize>,
    pub p: Option<usize>,
    pub tau2: Option<f64>,
    pub tau2_b: Option<f64>,
    pub sigma2: Option<f64>,
    pub b_size: Option<usize>,
    pub reps: Option<usize>,
    pub seed: Option<u64>,
    pub x_dist: Option<XDist>,
}

impl ScenarioOverrides {
    /// Parse a TOML scenario file; every field is optional here.
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let f: ScenarioFile = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        Ok(Self {
            n: f.n,
            p: f.p,
            tau2: f.tau2,
            tau2_b: f.tau2_b,
            sigma2: f.sigma2,
            b_size: f.b_size,
            reps: f.reps,
            seed: f.seed,
            x_dist: f.x_dist.as_deref().map(str::parse).transpose()?,
        })
    }

    /// Fields set in `other` win.
    pub fn merge(self, other: ScenarioOverrides) -> Self {
        Self {
            n: other.n.or(self.n),
            p: other.p.or(self.p),
            tau2: other.tau2.or(self.tau2),
            tau2_b: other.tau2_b.or(self.tau2_b),
            sigma2: other.sigma2.or(self.sigma2),
            b_size: other.b_size.or(self.b_size),
            reps: other.reps.or(self.reps),
            seed: other.seed.or(self.seed),
            x_dist: other.x_dist.or(self.x_dist),
        }
    }

    /// Fill defaults (`sigma2 = 1`, `b_size = 5`, `reps = 100`, Gaussian) and
    /// validate. Required fields name their CLI flag when missing.
    pub fn resolve(self) -> Result<ScenarioConfig> {
        let missing = |flag: &str| Error::Config(format!("missing required `--{flag}`"));
        let cfg = ScenarioConfig {
            n: self.n.ok_or_else(|| missing("n"))?,
            p: self.p.ok_or_else(|| missing("p"))?,
            tau2: self.tau2.ok_or_else(|| missing("tau2"))?,
            tau2_b: self.tau2_b.ok_or_else(|| missing("tau2b"))?,
            sigma2: self.sigma2.unwrap_or(1.0),
            b_size: self.b_size.unwrap_or(5),
            reps: self.reps.unwrap_or(100),
            seed: self.seed.ok_or_else(|| missing("seed"))?,
            x_dist: self.x_dist.unwrap_or(XDist::Gaussian),
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidScenario(m));
        if self.n < 3 {
            return bad(format!("n must be at least 3, got {}", self.n));
        }
        if self.b_size >= self.p {
            return bad(format!("b_size ({}) must be smaller than p ({})", self.b_size, self.p));
        }
        if !(self.tau2.is_finite() && self.tau2_b.is_finite() && self.sigma2.is_finite()) {
            return bad("tau2, tau2_b and sigma2 must be finite".into());
        }
        if !(0.0 <= self.tau2_b && self.tau2_b <= self.tau2) {
            return bad(format!(
                "need 0 <= tau2_b <= tau2, got tau2_b = {} and tau2 = {}",
                self.tau2_b, self.tau2
            ));
        }
        if self.sigma2 < 0.0 {
            return bad(format!("sigma2 must be nonnegative, got {}", self.sigma2));
        }
        if self.tau2_b > 0.0 && self.b_size == 0 {
            return bad("tau2_b > 0 needs b_size >= 1".into());
        }
        if self.reps == 0 {
            return bad("reps must be at least 1".into());
        }
        self.x_dist.validate()
    }

    /// The known covariate model implied by `x_dist`.
    pub fn model(&self) -> Result<CovariateModel> {
        match self.x_dist {
            XDist::Gaussian => Ok(CovariateModel::standard_gaussian(self.p)),
            d => CovariateModel::standard_independent(self.p, d.fourth_moment()),
        }
    }

    /// Zero-based indices of the strong block.
    pub fn strong_set(&self) -> Vec<usize> {
        (0..self.b_size).collect()
    }
}

/// `beta_j = sqrt(tau2_b / b_size)` on the strong block and
/// `sqrt((tau2 - tau2_b) / (p - b_size))` elsewhere, all positive.
pub fn build_beta(cfg: &ScenarioConfig) -> Result<CoefficientVector> {
    cfg.validate()?;
    let strong = if cfg.b_size > 0 {
        (cfg.tau2_b / cfg.b_size as f64).sqrt()
    } else {
        0.0
    };
    let weak = ((cfg.tau2 - cfg.tau2_b) / (cfg.p - cfg.b_size) as f64).sqrt();
    let beta = Array1::from_shape_fn(cfg.p, |j| if j < cfg.b_size { strong } else { weak });
    CoefficientVector::new(beta)
}

/// Draw replication `rep_index`; the RNG stream depends only on
/// `(cfg.seed, rep_index)`.
pub fn generate_dataset(
    cfg: &ScenarioConfig,
    beta: &CoefficientVector,
    rep_index: usize,
) -> Result<LabeledDataset> {
    if beta.p() != cfg.p {
        return Err(Error::DimensionMismatch {
            what: "coefficient vector",
            expected: cfg.p,
            got: beta.p(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(rep_index as u64);
    let t = match cfg.x_dist {
        XDist::ScaledT { df } => {
            Some(StudentT::new(df).map_err(|e| Error::InvalidScenario(e.to_string()))?)
        }
        _ => None,
    };
    let mut x = Array2::zeros((cfg.n, cfg.p));
    for v in x.iter_mut() {
        *v = cfg.x_dist.sample(&mut rng, t.as_ref());
    }
    let sigma = cfg.sigma2.sqrt();
    let signal = x.dot(&beta.beta());
    let y = signal.mapv(|s| {
        let e: f64 = StandardNormal.sample(&mut rng);
        s + sigma * e
    });
    LabeledDataset::new(x, y)
}
