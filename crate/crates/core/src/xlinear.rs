//! Transformed-linear algebra on the positive orthant.
//!
//! The softplus transform `t(y) = log(1 + e^y)` is a bijection from the reals
//! onto `(0, inf)`. Conjugating ordinary vector operations through it gives a
//! vector space on the positive orthant whose operations leave large values
//! essentially untouched, so regular variation is preserved:
//!
//! ```text
//! x1 (+) x2 = t(t^-1(x1) + t^-1(x2))
//! a  (*) x  = t(a * t^-1(x))
//! A  (*) x  = t(A t^-1(x))
//! ```
//!
//! The additive identity is `t(0) = log 2`.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Coefficient vector `a` indexing the element `a^T (*) Z` of the space.
pub type CoefVector = DVector<f64>;

/// Coefficient matrix `A` (p x q) indexing the random vector `A (*) Z`.
pub type CoefMatrix = DMatrix<f64>;

/// `t(0)`, the additive identity of the transformed-linear space.
pub const T_ZERO: f64 = std::f64::consts::LN_2;

#[inline]
pub(crate) fn sp(y: f64) -> f64 {
    y.max(0.0) + (-y.abs()).exp().ln_1p()
}

#[inline]
pub(crate) fn sp_inv(x: f64) -> f64 {
    if x > 1.0 {
        x + (-(-x).exp()).ln_1p()
    } else {
        // expm1 keeps full relative accuracy as x -> 0.
        x.exp_m1().ln()
    }
}

/// The softplus transform `log(exp(y) + 1)`.
pub fn softplus(y: f64) -> Result<f64> {
    if !y.is_finite() {
        return Err(Error::Domain(format!("softplus of non-finite value {y}")));
    }
    Ok(sp(y))
}

/// The inverse softplus `log(exp(x) - 1)`, defined for `x > 0`.
pub fn softplus_inv(x: f64) -> Result<f64> {
    if !(x > 0.0) || !x.is_finite() {
        return Err(Error::Domain(format!(
            "softplus preimage undefined for {x}; requires a finite positive value"
        )));
    }
    Ok(sp_inv(x))
}

/// A point of the positive orthant. Every entry is finite and strictly positive.
#[derive(Debug, Clone, PartialEq)]
pub struct PositiveVector(DVector<f64>);

impl PositiveVector {
    pub fn new(values: DVector<f64>) -> Result<Self> {
        if let Some((i, v)) = values
            .iter()
            .enumerate()
            .find(|(_, v)| !(**v > 0.0) || !v.is_finite())
        {
            return Err(Error::Domain(format!(
                "entry {i} = {v} is not a finite positive value"
            )));
        }
        Ok(Self(values))
    }

    pub fn from_slice(values: &[f64]) -> Result<Self> {
        Self::new(DVector::from_column_slice(values))
    }

    /// Image under `t` of an arbitrary real vector.
    pub fn from_preimage(y: &DVector<f64>) -> Result<Self> {
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::Domain("non-finite preimage".into()));
        }
        Ok(Self(y.map(sp)))
    }

    /// The additive identity `(log 2, ..., log 2)`.
    pub fn zero(len: usize) -> Self {
        Self(DVector::from_element(len, T_ZERO))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn values(&self) -> &DVector<f64> {
        &self.0
    }

    pub fn into_inner(self) -> DVector<f64> {
        self.0
    }

    /// `t^-1` applied componentwise.
    pub fn preimage(&self) -> DVector<f64> {
        self.0.map(sp_inv)
    }
}

/// Transformed addition `x1 (+) x2`.
pub fn tadd(x1: &PositiveVector, x2: &PositiveVector) -> Result<PositiveVector> {
    if x1.len() != x2.len() {
        return Err(Error::Dimension {
            context: "tadd",
            expected: x1.len(),
            got: x2.len(),
        });
    }
    PositiveVector::from_preimage(&(x1.preimage() + x2.preimage()))
}

/// Transformed scalar multiplication `a (*) x`.
pub fn tscale(a: f64, x: &PositiveVector) -> Result<PositiveVector> {
    if !a.is_finite() {
        return Err(Error::Domain(format!("non-finite scalar {a}")));
    }
    PositiveVector::from_preimage(&(x.preimage() * a))
}

/// Transformed matrix application `A (*) x = t(A t^-1(x))`.
pub fn tmatmul(a: &CoefMatrix, x: &PositiveVector) -> Result<PositiveVector> {
    if a.ncols() != x.len() {
        return Err(Error::Dimension {
            context: "tmatmul",
            expected: a.ncols(),
            got: x.len(),
        });
    }
    PositiveVector::from_preimage(&(a * x.preimage()))
}

/// The zero operation `max(a, 0)` applied entrywise.
pub fn zero_clip(a: &CoefMatrix) -> CoefMatrix {
    a.map(|v| v.max(0.0))
}

/// Tail ratio of `a^T (*) Z`: only positive coefficients reach the upper tail.
pub fn tail_ratio(a: &[f64]) -> f64 {
    a.iter().map(|v| v.max(0.0).powi(2)).sum()
}

/// Tail ratio of `max(a^T (*) Z, b^T (*) Z)`.
///
/// Component `Z_j` pushes the maximum to extremes with the larger of its two
/// positive loadings, so the ratio is `sum_j max(a_j, b_j, 0)^2`.
pub fn tail_ratio_of_max(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::Dimension {
            context: "tail_ratio_of_max",
            expected: a.len(),
            got: b.len(),
        });
    }
    Ok(a.iter()
        .zip(b)
        .map(|(x, y)| x.max(*y).max(0.0).powi(2))
        .sum())
}

/// Squared metric `d^2(X1, X2) = sum_j (a1_j - a2_j)^2` between elements.
pub fn metric_sq(a1: &[f64], a2: &[f64]) -> Result<f64> {
    if a1.len() != a2.len() {
        return Err(Error::Dimension {
            context: "metric_sq",
            expected: a1.len(),
            got: a2.len(),
        });
    }
    Ok(a1.iter().zip(a2).map(|(x, y)| (x - y).powi(2)).sum())
}
