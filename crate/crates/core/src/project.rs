//! Projections, best transformed-linear prediction and partial tail
//! correlation, all computed on inner-product matrices or coefficients.

use nalgebra::{Cholesky, DMatrix, Dyn, SymmetricEigen};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::tpdm::IpMatrix;
use crate::xlinear::{tmatmul, CoefMatrix, CoefVector, PositiveVector};

/// Largest accepted condition number for a block that must be inverted.
pub const MAX_CONDITION: f64 = 1e12;

/// Split of `0..p` into target indices and the ordered complement.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Partition {
    targets: Vec<usize>,
    complement: Vec<usize>,
}

impl Partition {
    /// Targets may be one index or a pair; the complement is everything else in order.
    pub fn new(p: usize, targets: &[usize]) -> Result<Self> {
        if targets.is_empty() || targets.len() > 2 {
            return Err(Error::Domain(format!(
                "expected one or two target indices, got {}",
                targets.len()
            )));
        }
        if let Some(&bad) = targets.iter().find(|&&t| t >= p) {
            return Err(Error::Domain(format!("target index {bad} out of range for p = {p}")));
        }
        if targets.len() == 2 && targets[0] == targets[1] {
            return Err(Error::Domain(format!("target indices must differ, got {} twice", targets[0])));
        }
        let complement = (0..p).filter(|i| !targets.contains(i)).collect();
        Ok(Self {
            targets: targets.to_vec(),
            complement,
        })
    }

    pub fn pair(p: usize, i: usize, j: usize) -> Result<Self> {
        Self::new(p, &[i, j])
    }

    pub fn single(p: usize, i: usize) -> Result<Self> {
        Self::new(p, &[i])
    }

    pub fn targets(&self) -> &[usize] {
        &self.targets
    }

    pub fn complement(&self) -> &[usize] {
        &self.complement
    }

    pub fn p(&self) -> usize {
        self.targets.len() + self.complement.len()
    }
}

fn submatrix(m: &DMatrix<f64>, rows: &[usize], cols: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), cols.len(), |a, b| m[(rows[a], cols[b])])
}

/// Ratio of extreme eigenvalues; infinite when the matrix is not positive definite.
pub fn condition_number(m: &DMatrix<f64>) -> f64 {
    if m.is_empty() {
        return 1.0;
    }
    let eig = SymmetricEigen::new(m.clone()).eigenvalues;
    let max = eig.max();
    let min = eig.min();
    if min <= 0.0 || !min.is_finite() {
        f64::INFINITY
    } else {
        max / min
    }
}

fn spd_factor(m: &DMatrix<f64>) -> Result<Cholesky<f64, Dyn>> {
    let condition = condition_number(m);
    if !(condition < MAX_CONDITION) {
        return Err(Error::Conditioning { condition });
    }
    Cholesky::new(m.clone()).ok_or(Error::Conditioning { condition })
}

fn check_partition(gamma: &IpMatrix, part: &Partition) -> Result<()> {
    if gamma.dim() != part.p() {
        return Err(Error::Dimension {
            context: "partition",
            expected: gamma.dim(),
            got: part.p(),
        });
    }
    Ok(())
}

/// Coefficients `b` solving `Gamma_22 b = Gamma_21`, one column per target.
pub fn solve_b(gamma: &IpMatrix, part: &Partition) -> Result<DMatrix<f64>> {
    check_partition(gamma, part)?;
    let g = gamma.entries();
    let g22 = submatrix(g, part.complement(), part.complement());
    let g21 = submatrix(g, part.complement(), part.targets());
    if g22.is_empty() {
        return Ok(g21);
    }
    let b = spd_factor(&g22)?.solve(&g21);
    let scale = g21.amax();
    let resid = (&g22 * &b - &g21).amax();
    if resid > 1e-10 * scale.max(f64::MIN_POSITIVE) && resid > 1e-14 {
        return Err(Error::Numerical(format!("solve residual {resid:.3e} too large")));
    }
    Ok(b)
}

/// Best transformed-linear predictor `b^T o x2`.
pub fn predict(b: &CoefVector, x2: &PositiveVector) -> Result<f64> {
    if b.len() != x2.len() {
        return Err(Error::Dimension {
            context: "predict",
            expected: b.len(),
            got: x2.len(),
        });
    }
    let row = CoefMatrix::from_row_slice(1, b.len(), b.as_slice());
    Ok(tmatmul(&row, x2)?.values()[0])
}

/// Inner-product matrix of the prediction errors of the targets.
#[derive(Debug, Clone, PartialEq)]
pub struct ConditionalIpm {
    matrix: DMatrix<f64>,
    partition: Partition,
}

impl ConditionalIpm {
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn partition(&self) -> &Partition {
        &self.partition
    }

    pub fn trace(&self) -> f64 {
        self.matrix.trace()
    }
}

/// Schur complement `Gamma_11 - Gamma_12 Gamma_22^-1 Gamma_21`.
pub fn conditional_ipm(gamma: &IpMatrix, part: &Partition) -> Result<ConditionalIpm> {
    let b = solve_b(gamma, part)?;
    let g = gamma.entries();
    let g11 = submatrix(g, part.targets(), part.targets());
    let g21 = submatrix(g, part.complement(), part.targets());
    let schur = if g21.is_empty() { g11 } else { g11 - g21.transpose() * b };
    Ok(ConditionalIpm {
        matrix: (&schur + schur.transpose()) * 0.5,
        partition: part.clone(),
    })
}

/// Partial tail correlation of `i` and `j` given all other components.
pub fn ptc(gamma: &IpMatrix, i: usize, j: usize) -> Result<f64> {
    let part = Partition::pair(gamma.dim(), i, j)?;
    let c = conditional_ipm(gamma, &part)?;
    ptc_from_conditional(&c)
}

/// Correlation read off a 2x2 conditional matrix.
pub fn ptc_from_conditional(c: &ConditionalIpm) -> Result<f64> {
    let m = c.matrix();
    if m.nrows() != 2 {
        return Err(Error::Dimension {
            context: "ptc",
            expected: 2,
            got: m.nrows(),
        });
    }
    let targets = c.partition().targets();
    let g = submatrix(m, &[0, 1], &[0, 1]);
    let tol = 1e-12 * g.amax().max(1.0);
    for (k, &idx) in targets.iter().enumerate() {
        if g[(k, k)] <= tol {
            return Err(Error::DegenerateProjection { index: idx });
        }
    }
    Ok((g[(0, 1)] / (g[(0, 0)] * g[(1, 1)]).sqrt()).clamp(-1.0, 1.0))
}

/// Partial tail correlation from the full inverse, `-Q_ij / sqrt(Q_ii Q_jj)`.
pub fn ptc_from_inverse(q: &IpMatrix, i: usize, j: usize) -> Result<f64> {
    let p = q.dim();
    if i >= p || j >= p || i == j {
        return Err(Error::Domain(format!("invalid pair ({i}, {j}) for dimension {p}")));
    }
    let (qii, qjj) = (q.get(i, i), q.get(j, j));
    if qii <= 0.0 {
        return Err(Error::DegenerateProjection { index: i });
    }
    if qjj <= 0.0 {
        return Err(Error::DegenerateProjection { index: j });
    }
    Ok(-q.get(i, j) / (qii * qjj).sqrt())
}

/// Inverse of a positive-definite inner-product matrix.
pub fn invert_ipm(gamma: &IpMatrix) -> Result<IpMatrix> {
    let inv = spd_factor(gamma.entries())?.inverse();
    let sym = (&inv + inv.transpose()) * 0.5;
    match gamma.k_used() {
        Some(k) => IpMatrix::estimated(sym, k.clone()),
        None => IpMatrix::theoretical(sym),
    }
}

/// Orthogonal decomposition of a coefficient vector against a span.
#[derive(Debug, Clone, PartialEq)]
pub struct Projection {
    /// Weights on the rows of the spanning matrix.
    pub weights: CoefVector,
    pub projection: CoefVector,
    pub residual: CoefVector,
}

/// Project `x` onto the row span of `a2` in coefficient space.
pub fn project_onto_span(x: &CoefVector, a2: &CoefMatrix) -> Result<Projection> {
    if a2.ncols() != x.len() {
        return Err(Error::Dimension {
            context: "project_onto_span",
            expected: a2.ncols(),
            got: x.len(),
        });
    }
    let g22 = a2 * a2.transpose();
    let g21 = a2 * x;
    let weights = spd_factor(&g22)?.solve(&g21);
    let projection = a2.transpose() * &weights;
    let residual = x - &projection;
    Ok(Projection {
        weights,
        projection,
        residual,
    })
}

/// Partial tail correlations of every pair; `None` on the diagonal and for failed pairs.
#[derive(Debug, Clone, Serialize)]
pub struct PtcMatrix {
    pub names: Vec<String>,
    pub values: Vec<Vec<Option<f64>>>,
}

pub fn ptc_matrix(gamma: &IpMatrix, names: &[String]) -> Result<PtcMatrix> {
    let p = gamma.dim();
    if names.len() != p {
        return Err(Error::Dimension {
            context: "ptc_matrix names",
            expected: p,
            got: names.len(),
        });
    }
    let pairs: Vec<(usize, usize)> = (0..p)
        .flat_map(|i| (i + 1..p).map(move |j| (i, j)))
        .collect();
    let results = crate::par::map(&pairs, |&(i, j)| ptc(gamma, i, j));
    let mut values = vec![vec![None; p]; p];
    for (&(i, j), r) in pairs.iter().zip(results) {
        match r {
            Ok(v) => {
                values[i][j] = Some(v);
                values[j][i] = Some(v);
            }
            Err(e @ Error::Conditioning { .. }) => return Err(e),
            Err(e) => log::warn!("pair ({i}, {j}): {e}"),
        }
    }
    Ok(PtcMatrix {
        names: names.to_vec(),
        values,
    })
}

/// Conditional matrix from a precision matrix via block inversion.
pub fn conditional_from_inverse(q: &IpMatrix, part: &Partition) -> Result<DMatrix<f64>> {
    let q11 = submatrix(q.entries(), part.targets(), part.targets());
    spd_factor(&q11).map(|c| c.inverse())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rvsim::{ar1_matrix, theoretical_ipm};
    use nalgebra::DVector;
    use proptest::prelude::*;

    fn ar1_gamma(phi: f64) -> IpMatrix {
        theoretical_ipm(&ar1_matrix(phi, 4).unwrap()).unwrap()
    }

    fn spd(p: usize, seed: &[f64]) -> IpMatrix {
        let a = DMatrix::from_fn(p, p + 2, |i, j| seed[(i * (p + 2) + j) % seed.len()]);
        IpMatrix::theoretical(&a * a.transpose() + DMatrix::identity(p, p) * 0.5).unwrap()
    }

    fn spd_strategy(p: usize) -> impl Strategy<Value = IpMatrix> {
        prop::collection::vec(-2.0f64..2.0, p * (p + 2)).prop_map(move |v| spd(p, &v))
    }

    #[test]
    fn ar1_last_component_weights() {
        for phi in [0.1, 0.5, 0.7, 0.95] {
            let g = ar1_gamma(phi);
            let b = solve_b(&g, &Partition::single(4, 3).unwrap()).unwrap();
            let want = [0.0, 0.0, phi];
            for k in 0..3 {
                assert!((b[(k, 0)] - want[k]).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn identity_complement_returns_cross_block() {
        let mut m = DMatrix::identity(3, 3);
        m[(0, 2)] = 0.3;
        m[(2, 0)] = 0.3;
        m[(1, 2)] = -0.2;
        m[(2, 1)] = -0.2;
        let g = IpMatrix::theoretical(m).unwrap();
        let b = solve_b(&g, &Partition::single(3, 2).unwrap()).unwrap();
        assert!((b[(0, 0)] - 0.3).abs() < 1e-15 && (b[(1, 0)] + 0.2).abs() < 1e-15);
    }

    #[test]
    fn duplicate_column_is_ill_conditioned() {
        let a = DMatrix::from_row_slice(3, 2, &[1.0, 0.5, 1.0, 0.5, 0.2, 1.0]);
        let g = IpMatrix::theoretical(&a * a.transpose()).unwrap();
        let err = solve_b(&g, &Partition::single(3, 2).unwrap()).unwrap_err();
        assert!(matches!(err, Error::Conditioning { .. }));
    }

    #[test]
    fn prediction_examples() {
        let x2 = PositiveVector::from_slice(&[1.5, 2.5, 4.0]).unwrap();
        let e2 = DVector::from_column_slice(&[0.0, 1.0, 0.0]);
        assert!((predict(&e2, &x2).unwrap() - 2.5).abs() < 1e-12);
        let zero = DVector::zeros(3);
        assert!((predict(&zero, &x2).unwrap() - std::f64::consts::LN_2).abs() < 1e-15);
        let g = ar1_gamma(0.7);
        let b = solve_b(&g, &Partition::single(4, 3).unwrap()).unwrap();
        let scaled = crate::xlinear::tscale(0.7, &PositiveVector::from_slice(&[4.0]).unwrap()).unwrap();
        assert!((predict(&b.column(0).into_owned(), &x2).unwrap() - scaled.values()[0]).abs() < 1e-10);
        assert!(predict(&DVector::zeros(2), &x2).is_err());
    }

    #[test]
    fn ar1_conditional_and_ptc() {
        let phi = 0.7;
        let g = ar1_gamma(phi);
        let c = conditional_ipm(&g, &Partition::pair(4, 1, 3).unwrap()).unwrap();
        assert!(c.matrix()[(0, 1)].abs() < 1e-10);
        assert!(ptc(&g, 1, 3).unwrap().abs() < 1e-10);
        // block-inversion oracle: Q_11 = Q_22 = 1 + phi^2, Q_12 = -phi
        let want = phi / (1.0 + phi * phi);
        assert!((ptc(&g, 0, 1).unwrap() - want).abs() < 1e-9);
        assert!((ptc(&g, 1, 0).unwrap() - want).abs() < 1e-12);
        let id = IpMatrix::theoretical(DMatrix::identity(4, 4)).unwrap();
        assert_eq!(ptc(&id, 0, 2).unwrap(), 0.0);
        let c = conditional_ipm(&id, &Partition::pair(4, 0, 2).unwrap()).unwrap();
        assert_eq!(c.matrix(), &DMatrix::identity(2, 2));
    }

    #[test]
    fn ar1_precision_matrix() {
        let phi = 0.7;
        let q = invert_ipm(&ar1_gamma(phi)).unwrap();
        let d = 1.0 + phi * phi;
        let want = DMatrix::from_row_slice(
            4,
            4,
            &[d, -phi, 0.0, 0.0, -phi, d, -phi, 0.0, 0.0, -phi, d, -phi, 0.0, 0.0, -phi, 1.0],
        );
        assert!((q.entries() - want).amax() < 1e-10);
        assert!((ptc_from_inverse(&q, 0, 1).unwrap() - phi / d).abs() < 1e-12);
        assert_eq!(ptc_from_inverse(&q, 0, 3).unwrap(), 0.0);
    }

    #[test]
    fn two_by_two_inverse_closed_form() {
        let (a, b, c) = (2.0, 0.6, 1.5);
        let g = IpMatrix::theoretical(DMatrix::from_row_slice(2, 2, &[a, b, b, c])).unwrap();
        let det = a * c - b * b;
        let want = DMatrix::from_row_slice(2, 2, &[c / det, -b / det, -b / det, a / det]);
        assert!((invert_ipm(&g).unwrap().entries() - want).amax() < 1e-14);
    }

    #[test]
    fn three_variable_ptc_has_no_complement_issue() {
        let g = IpMatrix::theoretical(DMatrix::from_row_slice(2, 2, &[1.0, 0.3, 0.3, 2.0])).unwrap();
        let r = ptc(&g, 0, 1).unwrap();
        assert!((r - 0.3 / 2.0f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn target_in_span_is_degenerate() {
        // X3 coefficients equal X1: Gamma singular in the target block only.
        let a = DMatrix::from_row_slice(3, 3, &[1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 1.0, 1e-9]);
        let g = IpMatrix::theoretical(&a * a.transpose()).unwrap();
        let err = ptc(&g, 0, 2).unwrap_err();
        assert!(matches!(err, Error::DegenerateProjection { index: 2 }), "{err}");
    }

    #[test]
    fn negative_conditional_entry_is_accepted() {
        let g = IpMatrix::theoretical(DMatrix::from_row_slice(
            3,
            3,
            &[1.0, 0.8, 0.1, 0.8, 1.0, 0.7, 0.1, 0.7, 1.0],
        ))
        .unwrap();
        let c = conditional_ipm(&g, &Partition::pair(3, 0, 2).unwrap()).unwrap();
        assert!(c.matrix()[(0, 1)] < 0.0);
        assert!(ptc(&g, 0, 2).unwrap() < 0.0);
    }

    #[test]
    fn ptc_matrix_has_null_diagonal() {
        let names: Vec<String> = (1..=4).map(|i| format!("X{i}")).collect();
        let m = ptc_matrix(&ar1_gamma(0.7), &names).unwrap();
        let json = serde_json::to_value(&m).unwrap();
        assert!(json["values"][2][2].is_null());
        assert!(json["values"][1][3].as_f64().unwrap().abs() < 1e-10);
        assert_eq!(m.values[0][1], m.values[1][0]);
    }

    #[test]
    fn projection_examples() {
        let a2 = DMatrix::from_row_slice(2, 4, &[1.0, 0.0, 1.0, 0.0, 0.0, 1.0, 0.0, 0.0]);
        let inside = DVector::from_column_slice(&[2.0, -1.0, 2.0, 0.0]);
        let p = project_onto_span(&inside, &a2).unwrap();
        assert!(p.residual.amax() < 1e-12);
        let ortho = DVector::from_column_slice(&[1.0, 0.0, -1.0, 3.0]);
        let p = project_onto_span(&ortho, &a2).unwrap();
        assert!(p.projection.amax() < 1e-12);
        let rank_deficient = DMatrix::from_row_slice(2, 3, &[1.0, 2.0, 3.0, 2.0, 4.0, 6.0]);
        assert!(project_onto_span(&DVector::zeros(3), &rank_deficient).is_err());
    }

    proptest! {
        #[test]
        fn solve_b_matches_dense_solver(g in spd_strategy(5), t in 0usize..5) {
            let part = Partition::single(5, t).unwrap();
            let b = solve_b(&g, &part).unwrap();
            let g22 = submatrix(g.entries(), part.complement(), part.complement());
            let g21 = submatrix(g.entries(), part.complement(), part.targets());
            let oracle = g22.lu().solve(&g21).unwrap();
            prop_assert!((b - oracle).amax() < 1e-9);
        }

        #[test]
        fn schur_matches_explicit_inverse(g in spd_strategy(6), i in 0usize..6, j in 0usize..6) {
            prop_assume!(i != j);
            let part = Partition::pair(6, i, j).unwrap();
            let c = conditional_ipm(&g, &part).unwrap();
            let q = g.entries().clone().try_inverse().unwrap();
            let q11 = submatrix(&q, part.targets(), part.targets());
            let oracle = q11.try_inverse().unwrap();
            prop_assert!((c.matrix() - &oracle).amax() < 1e-9);
            prop_assert_eq!(c.matrix(), &c.matrix().transpose());
        }

        #[test]
        fn dual_path_ptc(g in spd_strategy(5), i in 0usize..5, j in 0usize..5) {
            prop_assume!(i != j);
            let q = invert_ipm(&g).unwrap();
            let a = ptc(&g, i, j).unwrap();
            let b = ptc_from_inverse(&q, i, j).unwrap();
            prop_assert!((a - b).abs() < 1e-10);
            prop_assert!((a - ptc(&g, j, i).unwrap()).abs() < 1e-12);
            prop_assert!((-1.0..=1.0).contains(&a));
            let eye = g.entries() * q.entries();
            prop_assert!((eye - DMatrix::identity(5, 5)).amax() < 1e-8);
        }

        #[test]
        fn planted_zero_gives_zero_weight_and_ptc(
            v in prop::collection::vec(-1.0f64..1.0, 20),
            i in 0usize..4,
        ) {
            // Precision matrix with an exact zero at (i, 4).
            let mut l = DMatrix::from_fn(5, 5, |r, c| if r == c { 2.0 } else { v[(r * 5 + c) % 20] * 0.3 });
            l = &l * l.transpose() + DMatrix::identity(5, 5);
            l[(i, 4)] = 0.0;
            l[(4, i)] = 0.0;
            prop_assume!(condition_number(&l) < 1e6);
            let g = IpMatrix::theoretical(l.clone().try_inverse().unwrap()).unwrap();
            let b = solve_b(&g, &Partition::single(5, 4).unwrap()).unwrap();
            prop_assert!(b[(i, 0)].abs() < 1e-10);
            prop_assert!(ptc(&g, 4, i).unwrap().abs() < 1e-10);
            // and the converse direction for a nonzero pair
            let other = (i + 1) % 4;
            if l[(other, 4)].abs() > 1e-3 {
                prop_assert!(b[(other, 0)].abs() > 1e-8);
                prop_assert!(ptc(&g, 4, other).unwrap().abs() > 1e-8);
            }
        }

        #[test]
        fn projection_theorem(
            a in prop::collection::vec(-1.0f64..1.0, 18),
            x in prop::collection::vec(-1.0f64..1.0, 6),
            y in prop::collection::vec(-1.0f64..1.0, 6),
            alpha in -2.0f64..2.0,
            beta in -2.0f64..2.0,
        ) {
            let a2 = DMatrix::from_row_slice(3, 6, &a);
            prop_assume!(condition_number(&(&a2 * a2.transpose())) < 1e8);
            let x = DVector::from_column_slice(&x);
            let y = DVector::from_column_slice(&y);
            let px = project_onto_span(&x, &a2).unwrap();
            prop_assert!((&a2 * &px.residual).amax() < 1e-10);
            prop_assert!((&px.projection + &px.residual - &x).amax() < 1e-12);
            // normal-equations oracle via SVD least squares
            let svd = a2.transpose().svd(true, true);
            let w = svd.solve(&x, 1e-14).unwrap();
            prop_assert!((a2.transpose() * w - &px.projection).amax() < 1e-9);
            // reordering generators leaves the decomposition unchanged
            let swapped = DMatrix::from_fn(3, 6, |r, c| a2[(2 - r, c)]);
            let ps = project_onto_span(&x, &swapped).unwrap();
            prop_assert!((&ps.projection - &px.projection).amax() < 1e-10);
            // linearity
            let py = project_onto_span(&y, &a2).unwrap();
            let pz = project_onto_span(&(&x * alpha + &y * beta), &a2).unwrap();
            prop_assert!((pz.projection - (&px.projection * alpha + &py.projection * beta)).amax() < 1e-10);
            // deterministic re-solve
            prop_assert_eq!(project_onto_span(&x, &a2).unwrap(), px);
        }
    }
}
