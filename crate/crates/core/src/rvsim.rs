//! Construction and sampling of regularly varying vectors `X = A o Z`.

use log::warn;
use nalgebra::{DMatrix, DVector};
use rand::distr::{Distribution, Open01};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tpdm::IpMatrix;
use crate::xlinear::{sp, sp_inv, zero_clip, CoefMatrix};

/// Marginal law of the independent noise terms; tail index 2, unit scale.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "distribution", rename_all = "kebab-case")]
pub enum NoiseSpec {
    /// `1/sqrt(1 - U) - shift`, Pareto(2) moved left by `shift`.
    ShiftedPareto { shift: f64 },
    /// `(-ln U)^(-1/2)`, Frechet(2).
    Frechet,
}

impl NoiseSpec {
    /// Shifted Pareto with the centring shift.
    pub fn centred_pareto() -> Result<Self> {
        Ok(Self::ShiftedPareto {
            shift: crate::tpdm::default_delta()?,
        })
    }

    fn draw(self, u: f64) -> f64 {
        match self {
            NoiseSpec::ShiftedPareto { shift } => 1.0 / (1.0 - u).sqrt() - shift,
            NoiseSpec::Frechet => 1.0 / (-u.ln()).sqrt(),
        }
    }

    fn validate(self) -> Result<()> {
        match self {
            NoiseSpec::ShiftedPareto { shift } if !(0.0..1.0).contains(&shift) => Err(
                Error::Domain(format!("shift {shift} must lie in [0, 1)")),
            ),
            _ => Ok(()),
        }
    }
}

/// SplitMix64 finaliser; spreads consecutive counters over the seed space.
pub fn mix_seed(seed: u64, counter: u64) -> u64 {
    let mut z = seed.wrapping_add(counter.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// n x q matrix of iid noise. Column `j` comes from ChaCha stream `j` of the
/// root seed, so changing `q` or `n` leaves the other columns' draws intact.
pub fn sample_noise(q: usize, n: usize, spec: NoiseSpec, seed: u64) -> DMatrix<f64> {
    try_sample_noise(q, n, spec, seed).expect("invalid noise specification")
}

/// [`sample_noise`] with argument checks.
pub fn try_sample_noise(q: usize, n: usize, spec: NoiseSpec, seed: u64) -> Result<DMatrix<f64>> {
    if q == 0 || n == 0 {
        return Err(Error::Domain(format!("noise shape {n}x{q} must be non-empty")));
    }
    spec.validate()?;
    let columns = crate::par::map_range(q, |j| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(j as u64);
        (0..n)
            .map(|_| spec.draw(Open01.sample(&mut rng)))
            .collect::<Vec<f64>>()
    });
    Ok(DMatrix::from_fn(n, q, |i, j| columns[j][i]))
}

/// Row-wise `t(A t^-1(z))`.
pub fn construct(a: &CoefMatrix, z: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if a.ncols() != z.ncols() {
        return Err(Error::Dimension {
            context: "construct",
            expected: a.ncols(),
            got: z.ncols(),
        });
    }
    if let Some(v) = z.iter().find(|v| !(**v > 0.0 && v.is_finite())) {
        return Err(Error::Domain(format!("noise value {v} is not positive")));
    }
    for (j, col) in a.column_iter().enumerate() {
        if col.iter().all(|v| *v <= 0.0) {
            warn!("column {j} of A has no positive entry; it adds no tail mass");
        }
    }
    let pre = z.map(sp_inv);
    Ok((pre * a.transpose()).map(sp))
}

/// Lower-triangular `p x p` matrix with entries `phi^(i-j)`.
pub fn ar1_matrix(phi: f64, p: usize) -> Result<CoefMatrix> {
    if !(phi > 0.0 && phi < 1.0) {
        return Err(Error::Domain(format!("phi = {phi} must lie in (0, 1)")));
    }
    if p == 0 {
        return Err(Error::Domain("dimension must be at least 1".into()));
    }
    Ok(DMatrix::from_fn(p, p, |i, j| {
        if i >= j {
            phi.powi((i - j) as i32)
        } else {
            0.0
        }
    }))
}

/// Inner-product matrix `A A^T`.
pub fn theoretical_ipm(a: &CoefMatrix) -> Result<IpMatrix> {
    IpMatrix::theoretical(a * a.transpose())
}

/// TPDM `A0 A0^T` with `A0` the zero-clipped coefficients.
pub fn theoretical_tpdm(a: &CoefMatrix) -> Result<IpMatrix> {
    let a0 = zero_clip(a);
    IpMatrix::theoretical(&a0 * a0.transpose())
}

/// Point mass of the angular measure of `A o Z`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AngularPointMass {
    pub direction: Vec<f64>,
    pub mass: f64,
}

/// One point per column with positive clipped norm.
pub fn angular_points(a: &CoefMatrix) -> Vec<AngularPointMass> {
    let a0 = zero_clip(a);
    a0.column_iter()
        .enumerate()
        .filter_map(|(j, col)| {
            let norm = col.norm();
            if norm == 0.0 {
                warn!("column {j} has no positive entries and carries no angular mass");
                return None;
            }
            let dir: DVector<f64> = col / norm;
            Some(AngularPointMass {
                direction: dir.iter().copied().collect(),
                mass: norm * norm,
            })
        })
        .collect()
}
