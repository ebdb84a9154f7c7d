//! Residual-based inference for partial tail correlation.
//!
//! For a pair `(i, j)` and the complement `c`, the residual preimages
//! `U = t^-1(X_(i,j)) - b^T t^-1(X_c)` are regularly varying on the whole
//! plane with TPDM equal to the conditional matrix. Thresholding their radii
//! gives an angular estimate `sigma_u` of the off-diagonal entry, and
//!
//! ```text
//! sigma_u / sqrt(tau2 / k)  ~  T_(k-1)
//! ```
//!
//! under the null hypothesis of zero partial tail correlation.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use statrs::distribution::{Continuous, ContinuousCDF, Normal, StudentsT};

use crate::error::{Error, Result};
use crate::project::{conditional_ipm, solve_b, Partition};
use crate::rvsim::{ar1_matrix, construct, mix_seed, try_sample_noise, NoiseSpec};
use crate::tpdm::{
    check_level, estimate_mass, estimate_tpdm, exceedances, quantile, IpMatrix, TailSample,
    TpdmOptions, MIN_EXCEEDANCES,
};
use crate::xlinear::sp;

/// Residual preimages for one target pair with their polar decomposition.
#[derive(Debug, Clone)]
pub struct ResidualSample {
    u: Vec<[f64; 2]>,
    radii: Vec<f64>,
    angles: Vec<[f64; 2]>,
    pair: (usize, usize),
    b_used: DMatrix<f64>,
}

impl ResidualSample {
    pub fn u(&self) -> &[[f64; 2]] {
        &self.u
    }

    pub fn radii(&self) -> &[f64] {
        &self.radii
    }

    pub fn angles(&self) -> &[[f64; 2]] {
        &self.angles
    }

    pub fn pair(&self) -> (usize, usize) {
        self.pair
    }

    pub fn b_used(&self) -> &DMatrix<f64> {
        &self.b_used
    }

    pub fn len(&self) -> usize {
        self.u.len()
    }

    pub fn is_empty(&self) -> bool {
        self.u.is_empty()
    }

    /// Copy with every residual multiplied by `c > 0`.
    pub fn scaled(&self, c: f64) -> Result<Self> {
        if !(c > 0.0 && c.is_finite()) {
            return Err(Error::Domain(format!("scale {c} must be positive")));
        }
        Ok(Self {
            u: self.u.iter().map(|u| [u[0] * c, u[1] * c]).collect(),
            radii: self.radii.iter().map(|r| r * c).collect(),
            angles: self.angles.clone(),
            pair: self.pair,
            b_used: self.b_used.clone(),
        })
    }
}

/// Residual preimages for the pair targeted by `part`.
///
/// With `pred_quantile = Some(q)` only rows whose predicted pair
/// `t(b^T t^-1(X_c))` has norm above its `q` quantile are kept. Rows with
/// zero residual are dropped.
pub fn residuals(
    sample: &TailSample,
    part: &Partition,
    b: &DMatrix<f64>,
    pred_quantile: Option<f64>,
) -> Result<ResidualSample> {
    residuals_from_preimages(&sample.preimages(), part, b, pred_quantile)
}

pub(crate) fn residuals_from_preimages(
    y: &DMatrix<f64>,
    part: &Partition,
    b: &DMatrix<f64>,
    pred_quantile: Option<f64>,
) -> Result<ResidualSample> {
    let targets = part.targets();
    let comp = part.complement();
    if targets.len() != 2 {
        return Err(Error::Domain("residual inference needs a target pair".into()));
    }
    if y.ncols() != part.p() {
        return Err(Error::Dimension {
            context: "residuals",
            expected: part.p(),
            got: y.ncols(),
        });
    }
    if b.shape() != (comp.len(), 2) {
        return Err(Error::Dimension {
            context: "residual coefficients",
            expected: comp.len(),
            got: b.nrows(),
        });
    }
    let n = y.nrows();
    let mut fitted = vec![[0.0; 2]; n];
    let mut raw = Vec::with_capacity(n);
    for (t, fit) in fitted.iter_mut().enumerate() {
        for (k, &c) in comp.iter().enumerate() {
            fit[0] += b[(k, 0)] * y[(t, c)];
            fit[1] += b[(k, 1)] * y[(t, c)];
        }
        raw.push([y[(t, targets[0])] - fit[0], y[(t, targets[1])] - fit[1]]);
    }

    let keep: Vec<bool> = match pred_quantile {
        None => vec![true; n],
        Some(q) => {
            check_level(q, "prediction quantile")?;
            let mags: Vec<f64> = fitted.iter().map(|f| sp(f[0]).hypot(sp(f[1]))).collect();
            let thr = quantile(&mags, q)?;
            mags.iter().map(|m| *m > thr).collect()
        }
    };

    let mut u = Vec::new();
    let mut radii = Vec::new();
    let mut angles = Vec::new();
    for (row, keep) in raw.into_iter().zip(keep) {
        let r = row[0].hypot(row[1]);
        if keep && r > 0.0 && r.is_finite() {
            u.push(row);
            radii.push(r);
            angles.push([row[0] / r, row[1] / r]);
        }
    }
    if u.len() < MIN_EXCEEDANCES {
        return Err(Error::InsufficientExceedances {
            k: u.len(),
            min: MIN_EXCEEDANCES,
        });
    }
    Ok(ResidualSample {
        u,
        radii,
        angles,
        pair: (targets[0], targets[1]),
        b_used: b.clone(),
    })
}

/// Total mass used to scale the residual angular estimator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ResidualMass {
    /// Known `m_tilde`, normally the trace of the estimated conditional matrix.
    Trace(f64),
    /// `(R_(k)^2 / n) k` on the residual radii.
    Estimate,
}

/// Thresholded angular estimate of the conditional off-diagonal entry.
#[derive(Debug, Clone)]
pub struct SigmaU {
    pub sigma_u: f64,
    pub m_tilde: f64,
    pub k: usize,
    pub threshold: f64,
    /// `w1 w2` of each retained residual.
    pub products: Vec<f64>,
}

pub fn estimate_sigma_u(res: &ResidualSample, q_res: f64, mass: ResidualMass) -> Result<SigmaU> {
    let (threshold, idx) = exceedances(res.radii(), q_res)?;
    let k = idx.len();
    if k < MIN_EXCEEDANCES {
        return Err(Error::InsufficientExceedances {
            k,
            min: MIN_EXCEEDANCES,
        });
    }
    let m_tilde = match mass {
        ResidualMass::Trace(m) if m > 0.0 && m.is_finite() => m,
        ResidualMass::Trace(m) => {
            return Err(Error::Numerical(format!("conditional mass {m} is not positive")))
        }
        ResidualMass::Estimate => estimate_mass(res.radii(), k)?,
    };
    let products: Vec<f64> = idx
        .iter()
        .map(|&l| res.angles()[l][0] * res.angles()[l][1])
        .collect();
    let sigma_u = m_tilde / k as f64 * products.iter().sum::<f64>();
    Ok(SigmaU {
        sigma_u,
        m_tilde,
        k,
        threshold,
        products,
    })
}

/// `m^2 (E[(W1 W2)^2] - E[W1 W2]^2)` with `1/(k-1)` sample moments.
pub fn tau2_from_products(products: &[f64], m_tilde: f64) -> Result<f64> {
    let k = products.len();
    if k < MIN_EXCEEDANCES {
        return Err(Error::InsufficientExceedances {
            k,
            min: MIN_EXCEEDANCES,
        });
    }
    let d = (k - 1) as f64;
    let e1 = products.iter().sum::<f64>() / d;
    let e2 = products.iter().map(|p| p * p).sum::<f64>() / d;
    let value = m_tilde * m_tilde * (e2 - e1 * e1);
    if !(value > 1e-14 * m_tilde * m_tilde) {
        return Err(Error::DegenerateVariance { value });
    }
    Ok(value)
}

pub fn estimate_tau2(su: &SigmaU) -> Result<f64> {
    tau2_from_products(&su.products, su.m_tilde)
}

fn check_t_args(tau2: f64, k: usize) -> Result<()> {
    if !(tau2 > 0.0 && tau2.is_finite()) {
        return Err(Error::DegenerateVariance { value: tau2 });
    }
    if k < 2 {
        return Err(Error::InsufficientExceedances { k, min: 2 });
    }
    Ok(())
}

pub fn t_statistic(sigma_u: f64, tau2: f64, k: usize) -> Result<f64> {
    check_t_args(tau2, k)?;
    Ok(sigma_u / (tau2 / k as f64).sqrt())
}

/// Above this many degrees of freedom the t distribution is evaluated by an
/// expansion about the normal, where the library routines lose accuracy.
const LARGE_DF: f64 = 1e5;

fn students_t(df: f64) -> Result<StudentsT> {
    StudentsT::new(0.0, 1.0, df).map_err(|e| Error::Domain(format!("degrees of freedom {df}: {e}")))
}

fn std_normal() -> Normal {
    Normal::new(0.0, 1.0).expect("unit normal")
}

/// Quantile of Student's t with `df` degrees of freedom.
pub fn t_quantile(prob: f64, df: f64) -> Result<f64> {
    if !(prob > 0.0 && prob < 1.0) {
        return Err(Error::Domain(format!("probability {prob} must lie in (0, 1)")));
    }
    if df > LARGE_DF && df.is_finite() {
        // Cornish-Fisher expansion in 1/df; the first omitted term is O(df^-5).
        let x = std_normal().inverse_cdf(prob);
        let x2 = x * x;
        let g1 = x * (x2 + 1.0) / 4.0;
        let g2 = x * ((5.0 * x2 + 16.0) * x2 + 3.0) / 96.0;
        let g3 = x * (((3.0 * x2 + 19.0) * x2 + 17.0) * x2 - 15.0) / 384.0;
        let g4 = x * ((((79.0 * x2 + 776.0) * x2 + 1482.0) * x2 - 1920.0) * x2 - 945.0) / 92160.0;
        return Ok(x + (g1 + (g2 + (g3 + g4 / df) / df) / df) / df);
    }
    let dist = students_t(df)?;
    // Polish the library inverse with Newton steps on the CDF.
    let mut x = dist.inverse_cdf(prob);
    for _ in 0..4 {
        let err = dist.cdf(x) - prob;
        let dens = dist.pdf(x);
        if dens <= 0.0 || err == 0.0 {
            break;
        }
        x -= err / dens;
    }
    Ok(x)
}

/// CDF of Student's t, used for p-values.
pub fn t_cdf(x: f64, df: f64) -> Result<f64> {
    if df > LARGE_DF && df.is_finite() {
        let n = std_normal();
        // first-order Edgeworth correction, error O(df^-2)
        return Ok(n.cdf(x) - n.pdf(x) * x * (x * x + 1.0) / (4.0 * df));
    }
    Ok(students_t(df)?.cdf(x))
}

pub fn confidence_interval(sigma_u: f64, tau2: f64, k: usize, level: f64) -> Result<(f64, f64)> {
    check_t_args(tau2, k)?;
    check_level(level, "confidence level")?;
    let q = t_quantile((1.0 + level) / 2.0, (k - 1) as f64)?;
    let half = q * (tau2 / k as f64).sqrt();
    Ok((sigma_u - half, sigma_u + half))
}

/// How the critical value for `|t|` is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", content = "value", rename_all = "lowercase")]
pub enum CriticalMethod {
    /// Two-sided t quantile at `alpha / (2 n_pairs)`.
    Bonferroni,
    /// Supplied value used as is.
    Fixed(f64),
    /// Two-sided t quantile at `alpha / 2`, no adjustment.
    None,
}

impl std::str::FromStr for CriticalMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "bonferroni" => Ok(Self::Bonferroni),
            "none" => Ok(Self::None),
            _ => {
                let c = s
                    .strip_prefix("fixed:")
                    .and_then(|v| v.parse::<f64>().ok())
                    .ok_or_else(|| {
                        Error::Domain(format!(
                            "critical method `{s}`; expected bonferroni, none or fixed:<c>"
                        ))
                    })?;
                if c > 0.0 && c.is_finite() {
                    Ok(Self::Fixed(c))
                } else {
                    Err(Error::Domain(format!("fixed critical value {c} must be positive")))
                }
            }
        }
    }
}

pub fn critical_value(method: CriticalMethod, alpha: f64, n_pairs: usize, df: usize) -> Result<f64> {
    check_level(alpha, "alpha")?;
    match method {
        CriticalMethod::Fixed(c) => Ok(c),
        _ if df < 2 => Err(Error::Domain(format!("degrees of freedom {df} must be at least 2"))),
        CriticalMethod::Bonferroni => {
            if n_pairs == 0 {
                return Err(Error::Domain("no pairs to adjust over".into()));
            }
            t_quantile(1.0 - alpha / (2.0 * n_pairs as f64), df as f64)
        }
        CriticalMethod::None => t_quantile(1.0 - alpha / 2.0, df as f64),
    }
}

/// Which mass scales the residual estimator inside the pipeline.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum MassChoice {
    #[default]
    Trace,
    Estimate,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PtcTestOptions {
    pub tpdm: TpdmOptions,
    pub pred_quantile: Option<f64>,
    pub res_quantile: f64,
    pub alpha: f64,
    pub critical: CriticalMethod,
    pub mass: MassChoice,
}

impl Default for PtcTestOptions {
    fn default() -> Self {
        Self {
            tpdm: TpdmOptions::default(),
            pred_quantile: None,
            res_quantile: 0.98,
            alpha: 0.05,
            critical: CriticalMethod::Bonferroni,
            mass: MassChoice::Trace,
        }
    }
}

/// Estimates behind a tested pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairDetail {
    pub sigma_u: f64,
    pub tau2: f64,
    pub k: usize,
    pub m_tilde: f64,
    /// Off-diagonal of the conditional matrix computed from the estimated TPDM.
    pub conditional: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairRecord {
    pub i: usize,
    pub j: usize,
    pub t_stat: f64,
    pub reject: bool,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub detail: Option<PairDetail>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "lowercase")]
pub enum PairOutcome {
    Tested(PairRecord),
    Failed { i: usize, j: usize, reason: String },
}

impl PairOutcome {
    pub fn indices(&self) -> (usize, usize) {
        match self {
            PairOutcome::Tested(r) => (r.i, r.j),
            PairOutcome::Failed { i, j, .. } => (*i, *j),
        }
    }
}

/// Outcome of testing every pair, with one shared critical value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PtcTestReport {
    pub names: Vec<String>,
    pub outcomes: Vec<PairOutcome>,
    pub critical_value: f64,
    pub adjustment: CriticalMethod,
    pub alpha: f64,
    /// Degrees of freedom behind a computed critical value.
    pub df: Option<usize>,
}

impl PtcTestReport {
    /// Report from a symmetric table of test statistics (upper triangle is read).
    pub fn from_t_matrix(
        names: Vec<String>,
        t: &DMatrix<f64>,
        critical_value: f64,
        adjustment: CriticalMethod,
        alpha: f64,
    ) -> Result<Self> {
        let p = t.nrows();
        if !t.is_square() || names.len() != p {
            return Err(Error::Dimension {
                context: "statistics table",
                expected: names.len(),
                got: t.ncols(),
            });
        }
        let mut outcomes = Vec::new();
        for i in 0..p {
            for j in i + 1..p {
                let v = t[(i, j)];
                outcomes.push(if v.is_finite() {
                    PairOutcome::Tested(PairRecord {
                        i,
                        j,
                        t_stat: v,
                        reject: v.abs() > critical_value,
                        detail: None,
                    })
                } else {
                    PairOutcome::Failed {
                        i,
                        j,
                        reason: "missing statistic".into(),
                    }
                });
            }
        }
        Ok(Self {
            names,
            outcomes,
            critical_value,
            adjustment,
            alpha,
            df: None,
        })
    }

    pub fn p(&self) -> usize {
        self.names.len()
    }

    pub fn records(&self) -> impl Iterator<Item = &PairRecord> {
        self.outcomes.iter().filter_map(|o| match o {
            PairOutcome::Tested(r) => Some(r),
            PairOutcome::Failed { .. } => None,
        })
    }

    pub fn failures(&self) -> impl Iterator<Item = (usize, usize, &str)> {
        self.outcomes.iter().filter_map(|o| match o {
            PairOutcome::Failed { i, j, reason } => Some((*i, *j, reason.as_str())),
            PairOutcome::Tested(_) => None,
        })
    }

    /// Record for the unordered pair `{i, j}`.
    pub fn get(&self, i: usize, j: usize) -> Option<&PairOutcome> {
        let key = (i.min(j), i.max(j));
        self.outcomes.iter().find(|o| o.indices() == key)
    }

    pub fn rejections(&self) -> usize {
        self.records().filter(|r| r.reject).count()
    }
}

/// Test every pair for zero partial tail correlation.
///
/// The TPDM is estimated once; failures confined to one pair are recorded in
/// the report. Estimation failures of the whole matrix are returned as errors.
pub fn ptc_test_all_pairs(sample: &TailSample, opts: &PtcTestOptions) -> Result<PtcTestReport> {
    let p = sample.p();
    if p < 3 {
        return Err(Error::Data(format!(
            "partial tail correlation needs at least 3 variables, got {p}"
        )));
    }
    check_level(opts.res_quantile, "residual quantile")?;
    check_level(opts.alpha, "alpha")?;
    let sigma = estimate_tpdm(sample, &opts.tpdm)?;
    let y = sample.preimages();
    let pairs: Vec<(usize, usize)> = (0..p)
        .flat_map(|i| (i + 1..p).map(move |j| (i, j)))
        .collect();
    let results = crate::par::map(&pairs, |&(i, j)| test_pair(&sigma, &y, i, j, opts));

    let mut stats = Vec::with_capacity(pairs.len());
    for (&(i, j), r) in pairs.iter().zip(results) {
        match r {
            Ok((t, detail)) => stats.push(Ok((i, j, t, detail))),
            Err(e) => stats.push(Err((i, j, e.to_string()))),
        }
    }
    let min_k = stats
        .iter()
        .filter_map(|s| s.as_ref().ok().map(|(_, _, _, d)| d.k))
        .min();
    let (critical, df) = match (opts.critical, min_k) {
        (CriticalMethod::Fixed(c), _) => (c, None),
        (_, Some(k)) => (critical_value(opts.critical, opts.alpha, pairs.len(), k - 1)?, Some(k - 1)),
        (_, None) => return Err(Error::Numerical("no pair could be tested".into())),
    };
    let outcomes = stats
        .into_iter()
        .map(|s| match s {
            Ok((i, j, t, detail)) => PairOutcome::Tested(PairRecord {
                i,
                j,
                t_stat: t,
                reject: t.abs() > critical,
                detail: Some(detail),
            }),
            Err((i, j, reason)) => PairOutcome::Failed { i, j, reason },
        })
        .collect();
    Ok(PtcTestReport {
        names: sample.names().to_vec(),
        outcomes,
        critical_value: critical,
        adjustment: opts.critical,
        alpha: opts.alpha,
        df,
    })
}

/// Everything computed for one pair.
#[derive(Debug, Clone)]
pub struct PairAnalysis {
    pub conditional: DMatrix<f64>,
    pub sigma_u: SigmaU,
    pub tau2: f64,
    pub t_stat: f64,
}

/// Residual analysis of one pair against an estimated TPDM.
pub fn analyse_pair(
    sigma: &IpMatrix,
    y: &DMatrix<f64>,
    i: usize,
    j: usize,
    pred_quantile: Option<f64>,
    res_quantile: f64,
    mass: MassChoice,
) -> Result<PairAnalysis> {
    let part = Partition::pair(sigma.dim(), i, j)?;
    let b = solve_b(sigma, &part)?;
    let cond = conditional_ipm(sigma, &part)?;
    let res = residuals_from_preimages(y, &part, &b, pred_quantile)?;
    let mass = match mass {
        MassChoice::Trace => ResidualMass::Trace(cond.trace()),
        MassChoice::Estimate => ResidualMass::Estimate,
    };
    let su = estimate_sigma_u(&res, res_quantile, mass)?;
    let tau2 = estimate_tau2(&su)?;
    let t_stat = t_statistic(su.sigma_u, tau2, su.k)?;
    Ok(PairAnalysis {
        conditional: cond.matrix().clone(),
        sigma_u: su,
        tau2,
        t_stat,
    })
}

fn test_pair(
    sigma: &IpMatrix,
    y: &DMatrix<f64>,
    i: usize,
    j: usize,
    opts: &PtcTestOptions,
) -> Result<(f64, PairDetail)> {
    let a = analyse_pair(sigma, y, i, j, opts.pred_quantile, opts.res_quantile, opts.mass)?;
    Ok((
        a.t_stat,
        PairDetail {
            sigma_u: a.sigma_u.sigma_u,
            tau2: a.tau2,
            k: a.sigma_u.k,
            m_tilde: a.sigma_u.m_tilde,
            conditional: a.conditional[(0, 1)],
        },
    ))
}

/// Monte Carlo study of interval coverage under the AR(1) model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoverageConfig {
    pub phi: f64,
    pub p: usize,
    pub n: usize,
    pub reps: usize,
    pub pair: (usize, usize),
    pub tpdm: TpdmOptions,
    pub res_quantile: f64,
    pub level: f64,
    pub noise: NoiseSpec,
    pub seed: u64,
}

impl CoverageConfig {
    /// phi = 0.7, p = 4, n = 10^4, 500 replications, pair (2, 4) given (1, 3).
    pub fn standard(seed: u64) -> Result<Self> {
        Ok(Self {
            phi: 0.7,
            p: 4,
            n: 10_000,
            reps: 500,
            pair: (1, 3),
            tpdm: TpdmOptions::global(),
            res_quantile: 0.98,
            level: 0.95,
            noise: NoiseSpec::centred_pareto()?,
            seed,
        })
    }
}

/// One replication of a coverage study.
#[derive(Debug, Clone, Serialize)]
pub struct Replication {
    pub seed: u64,
    /// Conditional matrix entries (11, 12, 22) from the estimated TPDM.
    pub partition: [f64; 3],
    /// Residual-based estimate of the (1, 2) entry.
    pub residual: f64,
    pub t_stat: f64,
    pub k: usize,
    pub ci: (f64, f64),
    pub covered: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct CoverageSummary {
    pub coverage: f64,
    pub level: f64,
    pub reps: usize,
    pub failed: usize,
    pub replications: Vec<Replication>,
}

/// Seed for replication `rep`; the same derivation is used by every study.
pub fn replication_seed(seed: u64, rep: usize) -> u64 {
    mix_seed(seed, rep as u64)
}

/// Simulate one AR(1) replication and analyse the configured pair.
pub fn simulate_pair(cfg: &CoverageConfig, rep_seed: u64) -> Result<PairAnalysis> {
    let a = ar1_matrix(cfg.phi, cfg.p)?;
    let z = try_sample_noise(cfg.p, cfg.n, cfg.noise, rep_seed)?;
    let x = construct(&a, &z)?;
    let sample = TailSample::from_matrix(x, crate::tpdm::MarginMeta::Raw)?;
    let sigma = estimate_tpdm(&sample, &cfg.tpdm)?;
    analyse_pair(
        &sigma,
        &sample.preimages(),
        cfg.pair.0,
        cfg.pair.1,
        None,
        cfg.res_quantile,
        MassChoice::Trace,
    )
}

pub fn coverage_study(cfg: &CoverageConfig) -> Result<CoverageSummary> {
    if cfg.reps == 0 {
        return Err(Error::Domain("at least one replication is required".into()));
    }
    check_level(cfg.level, "confidence level")?;
    let results = crate::par::map_range(cfg.reps, |rep| {
        let seed = replication_seed(cfg.seed, rep);
        let a = simulate_pair(cfg, seed)?;
        let ci = confidence_interval(a.sigma_u.sigma_u, a.tau2, a.sigma_u.k, cfg.level)?;
        Ok::<_, Error>(Replication {
            seed,
            partition: [a.conditional[(0, 0)], a.conditional[(0, 1)], a.conditional[(1, 1)]],
            residual: a.sigma_u.sigma_u,
            t_stat: a.t_stat,
            k: a.sigma_u.k,
            ci,
            covered: ci.0 <= 0.0 && 0.0 <= ci.1,
        })
    });
    let mut replications = Vec::with_capacity(cfg.reps);
    let mut failed = 0;
    for r in results {
        match r {
            Ok(rep) => replications.push(rep),
            Err(e) => {
                log::warn!("replication failed: {e}");
                failed += 1;
            }
        }
    }
    if replications.is_empty() {
        return Err(Error::Numerical("every replication failed".into()));
    }
    let covered = replications.iter().filter(|r| r.covered).count();
    Ok(CoverageSummary {
        coverage: covered as f64 / replications.len() as f64,
        level: cfg.level,
        reps: cfg.reps,
        failed,
        replications,
    })
}
