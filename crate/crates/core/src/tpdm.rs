//! Marginal preprocessing and estimation of the tail pairwise dependence
//! matrix (TPDM) from threshold exceedances.
//!
//! For unit-scale margins with tail index 2 the TPDM entry `sigma_ij` is
//! estimated by the angular average
//!
//! ```text
//! sigma_ij = (m / k) * sum_l w_li w_lj 1[r_l > r_(k)]
//! ```
//!
//! over the `k` observations whose L2 radius exceeds a high empirical
//! quantile; `m` is the total mass of the angular measure.

use std::sync::OnceLock;

use log::warn;
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::xlinear::sp_inv;

/// Observations at or below this value are rejected before the polar transform.
pub const MIN_OBSERVATION: f64 = 1e-12;

/// Fewest exceedances any angular estimator will accept.
pub const MIN_EXCEEDANCES: usize = 10;

const MIN_PAIR_LENGTH: usize = 50;

/// Whether a matrix was computed from model coefficients or estimated from data.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MatrixKind {
    Theoretical,
    Estimated,
}

/// Symmetric matrix of inner products, or TPDM entries.
#[derive(Debug, Clone, PartialEq)]
pub struct IpMatrix {
    entries: DMatrix<f64>,
    kind: MatrixKind,
    k_used: Option<DMatrix<usize>>,
}

impl IpMatrix {
    pub fn theoretical(entries: DMatrix<f64>) -> Result<Self> {
        Self::checked(entries, MatrixKind::Theoretical, None)
    }

    pub fn estimated(entries: DMatrix<f64>, k_used: DMatrix<usize>) -> Result<Self> {
        if k_used.shape() != entries.shape() {
            return Err(Error::Dimension {
                context: "IpMatrix k_used",
                expected: entries.nrows(),
                got: k_used.nrows(),
            });
        }
        Self::checked(entries, MatrixKind::Estimated, Some(k_used))
    }

    fn checked(
        entries: DMatrix<f64>,
        kind: MatrixKind,
        k_used: Option<DMatrix<usize>>,
    ) -> Result<Self> {
        if !entries.is_square() {
            return Err(Error::Dimension {
                context: "IpMatrix",
                expected: entries.nrows(),
                got: entries.ncols(),
            });
        }
        if entries.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numerical("non-finite matrix entry".into()));
        }
        let scale = entries.amax().max(1.0);
        let asym = (&entries - entries.transpose()).amax();
        if asym > 1e-12 * scale {
            return Err(Error::Numerical(format!(
                "matrix is not symmetric (max asymmetry {asym:.3e})"
            )));
        }
        // Exact symmetry from here on.
        let entries = (&entries + entries.transpose()) * 0.5;
        Ok(Self {
            entries,
            kind,
            k_used,
        })
    }

    pub fn dim(&self) -> usize {
        self.entries.nrows()
    }

    pub fn entries(&self) -> &DMatrix<f64> {
        &self.entries
    }

    pub fn kind(&self) -> MatrixKind {
        self.kind
    }

    /// Per-pair exceedance counts; present only for estimated matrices.
    pub fn k_used(&self) -> Option<&DMatrix<usize>> {
        self.k_used.as_ref()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[(i, j)]
    }

    pub fn trace(&self) -> f64 {
        self.entries.trace()
    }
}

/// Provenance of the marginal scale of a sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "margin", rename_all = "kebab-case")]
pub enum MarginMeta {
    Raw,
    ShiftedPareto { delta: f64 },
}

/// n x p sample of strictly positive observations.
#[derive(Debug, Clone)]
pub struct TailSample {
    data: DMatrix<f64>,
    names: Vec<String>,
    margin: MarginMeta,
}

impl TailSample {
    pub fn new(data: DMatrix<f64>, names: Vec<String>, margin: MarginMeta) -> Result<Self> {
        if names.len() != data.ncols() {
            return Err(Error::Dimension {
                context: "TailSample names",
                expected: data.ncols(),
                got: names.len(),
            });
        }
        for (col, column) in data.column_iter().enumerate() {
            if let Some((row, v)) = column
                .iter()
                .enumerate()
                .find(|(_, v)| !v.is_finite() || **v <= MIN_OBSERVATION)
            {
                return Err(Error::Data(format!(
                    "observation at row {row}, column {col} is {v}; values must exceed {MIN_OBSERVATION}"
                )));
            }
        }
        Ok(Self {
            data,
            names,
            margin,
        })
    }

    /// Sample with default column names `X1..Xp`.
    pub fn from_matrix(data: DMatrix<f64>, margin: MarginMeta) -> Result<Self> {
        let names = default_names(data.ncols());
        Self::new(data, names, margin)
    }

    pub fn data(&self) -> &DMatrix<f64> {
        &self.data
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn margin(&self) -> MarginMeta {
        self.margin
    }

    pub fn n(&self) -> usize {
        self.data.nrows()
    }

    pub fn p(&self) -> usize {
        self.data.ncols()
    }

    /// `t^-1` applied to every observation.
    pub fn preimages(&self) -> DMatrix<f64> {
        self.data.map(sp_inv)
    }
}

/// Column names `X1..Xp`.
pub fn default_names(p: usize) -> Vec<String> {
    (1..=p).map(|i| format!("X{i}")).collect()
}

/// Mean of `t^-1(Y - delta)` for `Y ~ Pareto(alpha = 2)` on `[1, inf)`.
///
/// With `y = 1/s` the integral `int_1^inf t^-1(y - delta) 2 y^-3 dy` becomes
/// `int_0^1 2 s t^-1(1/s - delta) ds`, whose integrand is bounded at `s = 0`.
pub fn preimage_mean(delta: f64) -> Result<f64> {
    if !(0.0..1.0).contains(&delta) {
        return Err(Error::Domain(format!(
            "shift {delta} must lie in [0, 1) to keep the support positive"
        )));
    }
    let integrand = |s: f64| {
        if s <= 0.0 {
            2.0
        } else {
            2.0 * s * sp_inv(1.0 / s - delta)
        }
    };
    let out = quadrature::double_exponential::integrate(integrand, 0.0, 1.0, 1e-13);
    if !out.integral.is_finite() || out.error_estimate > 1e-9 {
        return Err(Error::Numerical(format!(
            "quadrature did not converge (estimate {:.3e}, error {:.3e})",
            out.integral, out.error_estimate
        )));
    }
    Ok(out.integral)
}

/// Shift `delta` for which `1/sqrt(1 - U) - delta` has centred preimages.
pub fn solve_delta() -> Result<f64> {
    let mut convergency = roots::SimpleConvergency {
        eps: 1e-14,
        max_iter: 200,
    };
    // preimage_mean cannot fail inside the bracket; carry failures out as NaN.
    let root = roots::find_root_brent(0.0, 0.999, |d| preimage_mean(d).unwrap_or(f64::NAN), &mut convergency)
        .map_err(|e| Error::Numerical(format!("root search for the shift failed: {e:?}")))?;
    let residual = preimage_mean(root)?;
    if residual.abs() >= 1e-8 {
        return Err(Error::Numerical(format!(
            "shift root residual {residual:.3e} exceeds tolerance"
        )));
    }
    Ok(root)
}

static DELTA: OnceLock<f64> = OnceLock::new();

/// Cached [`solve_delta`].
pub fn default_delta() -> Result<f64> {
    if let Some(d) = DELTA.get() {
        return Ok(*d);
    }
    let d = solve_delta()?;
    Ok(*DELTA.get_or_init(|| d))
}

/// Average ranks (1-based), ties sharing the mean of their positions.
pub(crate) fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && values[order[end]] == values[order[start]] {
            end += 1;
        }
        // positions start..end hold ranks start+1..=end
        let rank = (start + end + 1) as f64 / 2.0;
        for &idx in &order[start..end] {
            ranks[idx] = rank;
        }
        start = end;
    }
    ranks
}

/// Rank-based transform to shifted Pareto margins, `1/sqrt(1 - F) - delta`,
/// with `F = rank / (n + 1)`.
pub fn marginal_transform_with(
    raw: &DMatrix<f64>,
    names: Vec<String>,
    delta: f64,
) -> Result<TailSample> {
    let n = raw.nrows();
    if n < 2 {
        return Err(Error::Data(format!("need at least 2 observations, got {n}")));
    }
    if !(0.0..1.0).contains(&delta) {
        return Err(Error::Domain(format!("shift {delta} outside [0, 1)")));
    }
    let mut out = DMatrix::zeros(n, raw.ncols());
    for (col, column) in raw.column_iter().enumerate() {
        if let Some((row, v)) = column.iter().enumerate().find(|(_, v)| !v.is_finite()) {
            return Err(Error::Data(format!(
                "non-finite value {v} at row {row}, column {col}"
            )));
        }
        let values: Vec<f64> = column.iter().copied().collect();
        if values.iter().all(|v| *v == values[0]) {
            return Err(Error::DegenerateMargin { column: col });
        }
        for (row, rank) in average_ranks(&values).into_iter().enumerate() {
            let f = rank / (n as f64 + 1.0);
            out[(row, col)] = 1.0 / (1.0 - f).sqrt() - delta;
        }
    }
    TailSample::new(out, names, MarginMeta::ShiftedPareto { delta })
}

/// [`marginal_transform_with`] using the centring shift and default names.
pub fn marginal_transform(raw: &DMatrix<f64>) -> Result<TailSample> {
    marginal_transform_with(raw, default_names(raw.ncols()), default_delta()?)
}

/// Bivariate polar coordinates with the L2 norm.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PolarPair {
    pub r: f64,
    pub w: [f64; 2],
}

impl PolarPair {
    pub fn from_xy(x: f64, y: f64) -> Option<Self> {
        let r = x.hypot(y);
        (r > 0.0 && r.is_finite()).then(|| Self {
            r,
            w: [x / r, y / r],
        })
    }
}

/// Polar decomposition of paired observations; zero pairs are skipped.
pub fn polar2(xi: &[f64], xj: &[f64]) -> Result<Vec<PolarPair>> {
    check_same_len(xi, xj, "polar2")?;
    let mut skipped = 0;
    let out = xi
        .iter()
        .zip(xj)
        .filter_map(|(&a, &b)| {
            let p = PolarPair::from_xy(a, b);
            if p.is_none() {
                skipped += 1;
            }
            p
        })
        .collect();
    if skipped > 0 {
        warn!("polar2: skipped {skipped} zero observation(s)");
    }
    Ok(out)
}

fn check_same_len(a: &[f64], b: &[f64], context: &'static str) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::Dimension {
            context,
            expected: a.len(),
            got: b.len(),
        });
    }
    Ok(())
}

/// Empirical quantile with linear interpolation between order statistics.
pub fn quantile(values: &[f64], q: f64) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::Data("quantile of an empty sample".into()));
    }
    if !(0.0..=1.0).contains(&q) {
        return Err(Error::Domain(format!("quantile level {q} outside [0, 1]")));
    }
    let mut v = values.to_vec();
    let h = (v.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let (_, lo_val, upper) = v.select_nth_unstable_by(lo, f64::total_cmp);
    let lo_val = *lo_val;
    let frac = h - lo as f64;
    if frac == 0.0 || upper.is_empty() {
        return Ok(lo_val);
    }
    let hi_val = upper.iter().copied().fold(f64::INFINITY, f64::min);
    Ok(lo_val + frac * (hi_val - lo_val))
}

/// Indices of values strictly above the empirical `q` quantile, with the threshold.
pub(crate) fn exceedances(values: &[f64], q: f64) -> Result<(f64, Vec<usize>)> {
    check_level(q, "radial quantile")?;
    let threshold = quantile(values, q)?;
    let idx = values
        .iter()
        .enumerate()
        .filter(|(_, r)| **r > threshold)
        .map(|(i, _)| i)
        .collect();
    Ok((threshold, idx))
}

pub(crate) fn check_level(q: f64, what: &str) -> Result<()> {
    if q > 0.0 && q < 1.0 {
        Ok(())
    } else {
        Err(Error::Domain(format!("{what} {q} must lie in (0, 1)")))
    }
}

/// Total-mass estimate `(r_(k)^2 / n) k`, `r_(k)` the k-th largest radius.
pub fn estimate_mass(radii: &[f64], k: usize) -> Result<f64> {
    let n = radii.len();
    if k == 0 || k > n {
        return Err(Error::Domain(format!("k = {k} must lie in 1..={n}")));
    }
    let mut v = radii.to_vec();
    let (_, rk, _) = v.select_nth_unstable_by(n - k, f64::total_cmp);
    Ok(*rk * *rk / n as f64 * k as f64)
}

/// How the angular-measure total mass is obtained.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mass {
    /// Known total mass, e.g. 2 for a unit-scale pair.
    Fixed(f64),
    /// `(r_(k)^2 / n) k` from the radii.
    Estimate,
}

impl Mass {
    fn resolve(self, radii: &[f64], k: usize) -> Result<f64> {
        match self {
            Mass::Fixed(m) if m > 0.0 && m.is_finite() => Ok(m),
            Mass::Fixed(m) => Err(Error::Domain(format!("total mass {m} must be positive"))),
            Mass::Estimate => estimate_mass(radii, k),
        }
    }
}

/// Output of the bivariate estimator.
#[derive(Debug, Clone)]
pub struct PairEstimate {
    pub sigma: f64,
    /// Diagonal estimates `(m/k) sum w_i^2` and `(m/k) sum w_j^2` from the same exceedances.
    pub sigma_ii: f64,
    pub sigma_jj: f64,
    pub k: usize,
    pub mass: f64,
    pub threshold: f64,
    /// Angles of the retained exceedances.
    pub angles: Vec<[f64; 2]>,
}

/// Bivariate TPDM estimate from the observations whose radius exceeds the
/// `q_radial` quantile. Ties at the threshold are excluded.
pub fn estimate_sigma_pair(xi: &[f64], xj: &[f64], q_radial: f64, mass: Mass) -> Result<PairEstimate> {
    check_same_len(xi, xj, "estimate_sigma_pair")?;
    check_level(q_radial, "radial quantile")?;
    if xi.len() < MIN_PAIR_LENGTH {
        return Err(Error::Data(format!(
            "need at least {MIN_PAIR_LENGTH} observations, got {}",
            xi.len()
        )));
    }
    if let Some(v) = xi
        .iter()
        .chain(xj)
        .find(|v| !v.is_finite() || **v <= MIN_OBSERVATION)
    {
        return Err(Error::Data(format!(
            "observation {v} is not above {MIN_OBSERVATION}"
        )));
    }
    let polar = polar2(xi, xj)?;
    let radii: Vec<f64> = polar.iter().map(|p| p.r).collect();
    let (threshold, idx) = exceedances(&radii, q_radial)?;
    let k = idx.len();
    if k < MIN_EXCEEDANCES {
        return Err(Error::InsufficientExceedances {
            k,
            min: MIN_EXCEEDANCES,
        });
    }
    let m = mass.resolve(&radii, k)?;
    let angles: Vec<[f64; 2]> = idx.iter().map(|&l| polar[l].w).collect();
    let scale = m / k as f64;
    let (mut s12, mut s11, mut s22) = (0.0, 0.0, 0.0);
    for w in &angles {
        s12 += w[0] * w[1];
        s11 += w[0] * w[0];
        s22 += w[1] * w[1];
    }
    Ok(PairEstimate {
        sigma: scale * s12,
        sigma_ii: scale * s11,
        sigma_jj: scale * s22,
        k,
        mass: m,
        threshold,
        angles,
    })
}

/// Which radius defines the exceedances.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RadiusMode {
    /// Per-pair radius `||(x_i, x_j)||`, one threshold per pair.
    Pairwise,
    /// Full-vector radius `||x||`, one threshold for the whole matrix.
    Global,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TpdmOptions {
    pub q_radial: f64,
    pub mode: RadiusMode,
    pub mass: Mass,
}

impl TpdmOptions {
    /// Per-pair radii at the 0.95 quantile with mass 2, for preprocessed data.
    pub fn pairwise() -> Self {
        Self {
            q_radial: 0.95,
            mode: RadiusMode::Pairwise,
            mass: Mass::Fixed(2.0),
        }
    }

    /// Full-vector radii at the 0.98 quantile with estimated mass.
    pub fn global() -> Self {
        Self {
            q_radial: 0.98,
            mode: RadiusMode::Global,
            mass: Mass::Estimate,
        }
    }
}

impl Default for TpdmOptions {
    fn default() -> Self {
        Self::pairwise()
    }
}

/// Estimate the TPDM of a sample.
///
/// In pairwise mode each off-diagonal entry uses its own bivariate
/// exceedances, and the diagonal entry `sigma_ii` is the mean of the
/// bivariate diagonal estimates over all partners `j`. In global mode one
/// threshold on the full radius serves every entry.
pub fn estimate_tpdm(sample: &TailSample, opts: &TpdmOptions) -> Result<IpMatrix> {
    match opts.mode {
        RadiusMode::Pairwise => estimate_pairwise(sample, opts),
        RadiusMode::Global => estimate_global(sample, opts),
    }
}

fn estimate_pairwise(sample: &TailSample, opts: &TpdmOptions) -> Result<IpMatrix> {
    let p = sample.p();
    if p < 2 {
        return Err(Error::Data("pairwise estimation needs at least 2 columns".into()));
    }
    let columns: Vec<Vec<f64>> = sample
        .data()
        .column_iter()
        .map(|c| c.iter().copied().collect())
        .collect();
    let pairs: Vec<(usize, usize)> = (0..p)
        .flat_map(|i| (i + 1..p).map(move |j| (i, j)))
        .collect();
    let estimates = crate::par::map(&pairs, |&(i, j)| {
        estimate_sigma_pair(&columns[i], &columns[j], opts.q_radial, opts.mass)
    });

    let mut entries = DMatrix::zeros(p, p);
    let mut k_used = DMatrix::zeros(p, p);
    let mut diag_sum = vec![0.0; p];
    for (&(i, j), est) in pairs.iter().zip(estimates) {
        let est = est?;
        entries[(i, j)] = est.sigma;
        entries[(j, i)] = est.sigma;
        k_used[(i, j)] = est.k;
        k_used[(j, i)] = est.k;
        diag_sum[i] += est.sigma_ii;
        diag_sum[j] += est.sigma_jj;
    }
    for i in 0..p {
        entries[(i, i)] = diag_sum[i] / (p - 1) as f64;
        k_used[(i, i)] = (0..p).filter(|&j| j != i).map(|j| k_used[(i, j)]).min().unwrap_or(0);
    }
    IpMatrix::estimated(entries, k_used)
}

fn estimate_global(sample: &TailSample, opts: &TpdmOptions) -> Result<IpMatrix> {
    let x = sample.data();
    let (n, p) = x.shape();
    if n < MIN_PAIR_LENGTH {
        return Err(Error::Data(format!(
            "need at least {MIN_PAIR_LENGTH} observations, got {n}"
        )));
    }
    let radii: Vec<f64> = x.row_iter().map(|row| row.norm()).collect();
    let (_, idx) = exceedances(&radii, opts.q_radial)?;
    let k = idx.len();
    if k < MIN_EXCEEDANCES {
        return Err(Error::InsufficientExceedances {
            k,
            min: MIN_EXCEEDANCES,
        });
    }
    let m = opts.mass.resolve(&radii, k)?;
    let mut entries = DMatrix::zeros(p, p);
    for &l in &idx {
        let w = x.row(l) / radii[l];
        entries += w.transpose() * w;
    }
    entries *= m / k as f64;
    IpMatrix::estimated(entries, DMatrix::from_element(p, p, k))
}
