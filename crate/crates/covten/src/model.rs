//! The coupled CP factor model, reconstruction, factor alignment, and the
//! normalized recovery metrics.
//!
//! A rank-R model carries positive weights and unit-norm factor columns per
//! tensor mode; coupled modes additionally carry matrix weights and unit-norm
//! covariate columns. Column recovery is unique only up to a joint permutation
//! and per-column signs, so [`align`] matches an estimate to a reference
//! before [`metrics`] measures errors.

use crate::error::{Error, Result};
use crate::tensor::{dot, norm2, DenseMatrix, DenseTensor, Dims};

/// Factor columns for one mode: `rows x rank`, stored column-wise.
#[derive(Debug, Clone, PartialEq)]
pub struct Factor {
    rows: usize,
    cols: Vec<Vec<f64>>,
}

impl Factor {
    pub fn new(rows: usize, cols: Vec<Vec<f64>>) -> Result<Self> {
        for col in &cols {
            if col.len() != rows {
                return Err(Error::Shape(format!(
                    "factor column has length {}, expected {rows}",
                    col.len()
                )));
            }
        }
        Ok(Factor { rows, cols })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn rank(&self) -> usize {
        self.cols.len()
    }

    pub fn col(&self, r: usize) -> &[f64] {
        &self.cols[r]
    }

    pub fn col_mut(&mut self, r: usize) -> &mut Vec<f64> {
        &mut self.cols[r]
    }

    pub fn cols(&self) -> &[Vec<f64>] {
        &self.cols
    }

    /// Frobenius norm of the difference, for convergence checks.
    pub fn frobenius_distance(&self, other: &Factor) -> f64 {
        let mut s = 0.0;
        for (a, b) in self.cols.iter().zip(&other.cols) {
            for (x, y) in a.iter().zip(b) {
                let d = x - y;
                s += d * d;
            }
        }
        s.sqrt()
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.cols.iter().map(|c| crate::tensor::sum_sq(c)).sum::<f64>().sqrt()
    }

    pub fn to_dense(&self) -> DenseMatrix {
        let mut m = DenseMatrix::zeros(self.rows, self.rank().max(1));
        for (r, col) in self.cols.iter().enumerate() {
            for (i, &v) in col.iter().enumerate() {
                m.set(i, r, v);
            }
        }
        m
    }
}

/// Rank-R CP model: positive weights plus unit-norm factor columns per mode.
#[derive(Debug, Clone, PartialEq)]
pub struct CpFactors {
    weights: Vec<f64>,
    factors: Vec<Factor>,
}

impl CpFactors {
    pub fn new(weights: Vec<f64>, factors: Vec<Factor>) -> Result<Self> {
        if factors.len() < 2 {
            return Err(Error::Shape(format!(
                "CP model needs >= 2 modes, got {}",
                factors.len()
            )));
        }
        let rank = weights.len();
        for f in &factors {
            if f.rank() != rank {
                return Err(Error::RankMismatch {
                    expected: rank,
                    found: f.rank(),
                });
            }
        }
        Ok(CpFactors { weights, factors })
    }

    pub fn rank(&self) -> usize {
        self.weights.len()
    }

    pub fn order(&self) -> usize {
        self.factors.len()
    }

    pub fn dims(&self) -> Result<Dims> {
        Dims::new(self.factors.iter().map(|f| f.rows()).collect())
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn weights_mut(&mut self) -> &mut [f64] {
        &mut self.weights
    }

    pub fn factor(&self, mode: usize) -> &Factor {
        &self.factors[mode]
    }

    pub fn factor_mut(&mut self, mode: usize) -> &mut Factor {
        &mut self.factors[mode]
    }

    pub fn factors(&self) -> &[Factor] {
        &self.factors
    }

    /// Value of the model at one coordinate.
    pub fn value_at(&self, coord: &[usize]) -> f64 {
        let mut acc = 0.0;
        for r in 0..self.rank() {
            let mut w = self.weights[r];
            for (k, &c) in coord.iter().enumerate() {
                w *= self.factors[k].col(r)[c];
            }
            acc += w;
        }
        acc
    }
}

/// Which tensor modes carry a covariate matrix, and how wide it is.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CouplingSpec {
    widths: Vec<Option<usize>>,
}

impl CouplingSpec {
    pub fn new(widths: Vec<Option<usize>>) -> Result<Self> {
        if widths.iter().any(|w| w == &Some(0)) {
            return Err(Error::Shape("coupled covariate width must be positive".into()));
        }
        Ok(CouplingSpec { widths })
    }

    /// No coupled modes at all (the standalone tensor-completion ablation).
    pub fn none(order: usize) -> Self {
        CouplingSpec {
            widths: vec![None; order],
        }
    }

    /// A single coupled mode, as in the base model.
    pub fn single(order: usize, mode: usize, width: usize) -> Result<Self> {
        if mode >= order {
            return Err(Error::ModeOutOfRange { mode, order });
        }
        let mut widths = vec![None; order];
        widths[mode] = Some(width);
        CouplingSpec::new(widths)
    }

    pub fn order(&self) -> usize {
        self.widths.len()
    }

    pub fn is_coupled(&self, mode: usize) -> bool {
        self.widths.get(mode).copied().flatten().is_some()
    }

    pub fn width(&self, mode: usize) -> Option<usize> {
        self.widths.get(mode).copied().flatten()
    }

    pub fn widths(&self) -> &[Option<usize>] {
        &self.widths
    }

    pub fn coupled_modes(&self) -> impl Iterator<Item = usize> + '_ {
        self.widths
            .iter()
            .enumerate()
            .filter_map(|(k, w)| w.map(|_| k))
    }

    pub fn all_coupled(&self) -> bool {
        self.widths.iter().all(|w| w.is_some())
    }
}

/// Covariate-side factors for one coupled mode.
#[derive(Debug, Clone, PartialEq)]
pub struct MatrixFactor {
    pub sigma: Vec<f64>,
    pub v: Factor,
}

/// CP factors plus, per coupled mode, matrix weights and covariate columns.
#[derive(Debug, Clone, PartialEq)]
pub struct CoupledModel {
    pub cp: CpFactors,
    couplings: Vec<Option<MatrixFactor>>,
}

impl CoupledModel {
    pub fn new(cp: CpFactors, couplings: Vec<Option<MatrixFactor>>) -> Result<Self> {
        if couplings.len() != cp.order() {
            return Err(Error::Shape(format!(
                "coupling slots ({}) must match tensor order ({})",
                couplings.len(),
                cp.order()
            )));
        }
        for mf in couplings.iter().flatten() {
            if mf.sigma.len() != cp.rank() || mf.v.rank() != cp.rank() {
                return Err(Error::RankMismatch {
                    expected: cp.rank(),
                    found: mf.sigma.len().min(mf.v.rank()),
                });
            }
        }
        Ok(CoupledModel { cp, couplings })
    }

    /// A CP model with no couplings.
    pub fn uncoupled(cp: CpFactors) -> Self {
        let order = cp.order();
        CoupledModel {
            cp,
            couplings: vec![None; order],
        }
    }

    pub fn rank(&self) -> usize {
        self.cp.rank()
    }

    pub fn order(&self) -> usize {
        self.cp.order()
    }

    pub fn coupling(&self, mode: usize) -> Option<&MatrixFactor> {
        self.couplings.get(mode).and_then(|c| c.as_ref())
    }

    pub fn coupling_mut(&mut self, mode: usize) -> Option<&mut MatrixFactor> {
        self.couplings.get_mut(mode).and_then(|c| c.as_mut())
    }

    pub fn couplings(&self) -> &[Option<MatrixFactor>] {
        &self.couplings
    }

    /// The model restricted to its first `rank` components. Deflation-based
    /// initialization extracts components sequentially, so the rank-R start
    /// is exactly this prefix of a higher-rank start.
    pub fn rank_prefix(&self, rank: usize) -> Result<CoupledModel> {
        if rank > self.rank() {
            return Err(Error::RankMismatch {
                expected: self.rank(),
                found: rank,
            });
        }
        let weights = self.cp.weights()[..rank].to_vec();
        let factors = self
            .cp
            .factors()
            .iter()
            .map(|f| Factor::new(f.rows(), f.cols()[..rank].to_vec()))
            .collect::<Result<Vec<_>>>()?;
        let couplings = self
            .couplings
            .iter()
            .map(|c| {
                c.as_ref()
                    .map(|mf| {
                        Factor::new(mf.v.rows(), mf.v.cols()[..rank].to_vec()).map(|v| {
                            MatrixFactor {
                                sigma: mf.sigma[..rank].to_vec(),
                                v,
                            }
                        })
                    })
                    .transpose()
            })
            .collect::<Result<Vec<_>>>()?;
        CoupledModel::new(CpFactors::new(weights, factors)?, couplings)
    }

    pub fn coupling_spec(&self) -> CouplingSpec {
        CouplingSpec {
            widths: self
                .couplings
                .iter()
                .map(|c| c.as_ref().map(|mf| mf.v.rows()))
                .collect(),
        }
    }
}

/// Densify the CP model: entry `(i, j, …)` is `sum_r w_r a_r(i) b_r(j) …`.
pub fn reconstruct(cp: &CpFactors) -> Result<DenseTensor> {
    let dims = cp.dims()?;
    let order = dims.order();
    let sizes = dims.sizes().to_vec();
    let mut out = DenseTensor::zeros(dims);
    let mut coord = vec![0usize; order];
    let rank = cp.rank();
    for slot in out.values_mut() {
        let mut acc = 0.0;
        for r in 0..rank {
            let mut w = cp.weights()[r];
            for (k, &c) in coord.iter().enumerate() {
                w *= cp.factor(k).col(r)[c];
            }
            acc += w;
        }
        *slot = acc;
        for k in (0..order).rev() {
            coord[k] += 1;
            if coord[k] < sizes[k] {
                break;
            }
            coord[k] = 0;
        }
    }
    Ok(out)
}

/// Densify one coupled covariate matrix: `sum_r sigma_r u_r v_r^T` where
/// `u_r` is the mode's tensor factor column.
pub fn reconstruct_covariate(model: &CoupledModel, mode: usize) -> Result<DenseMatrix> {
    let mf = model.coupling(mode).ok_or(Error::NotCoupled { mode })?;
    let u = model.cp.factor(mode);
    let mut out = DenseMatrix::zeros(u.rows(), mf.v.rows());
    for r in 0..model.rank() {
        out.subtract_rank1(-mf.sigma[r], u.col(r), mf.v.col(r));
    }
    Ok(out)
}

fn check_comparable(est: &CoupledModel, truth: &CoupledModel) -> Result<()> {
    if est.rank() != truth.rank() {
        return Err(Error::RankMismatch {
            expected: truth.rank(),
            found: est.rank(),
        });
    }
    if est.order() != truth.order() {
        return Err(Error::Shape(format!(
            "order {} vs {}",
            est.order(),
            truth.order()
        )));
    }
    for k in 0..est.order() {
        if est.cp.factor(k).rows() != truth.cp.factor(k).rows() {
            return Err(Error::Shape(format!(
                "mode {k} size {} vs {}",
                est.cp.factor(k).rows(),
                truth.cp.factor(k).rows()
            )));
        }
        match (est.coupling(k), truth.coupling(k)) {
            (None, None) => {}
            (Some(a), Some(b)) if a.v.rows() == b.v.rows() => {}
            _ => {
                return Err(Error::Shape(format!(
                    "coupling mismatch at mode {k}"
                )))
            }
        }
    }
    Ok(())
}

/// Permute the estimate's components to match the reference and flip column
/// signs so each aligned column has nonnegative inner product with its
/// reference column.
///
/// One global permutation is chosen greedily by the pair score
/// `sum_modes |<est_col, truth_col>|`; sign flips are independent per mode
/// per rank. Weights travel with their components unchanged.
pub fn align(est: &CoupledModel, truth: &CoupledModel) -> Result<CoupledModel> {
    check_comparable(est, truth)?;
    let rank = est.rank();
    let order = est.order();

    // score[e][t] over tensor modes
    let mut score = vec![vec![0.0; rank]; rank];
    for (e, row) in score.iter_mut().enumerate() {
        for (t, s) in row.iter_mut().enumerate() {
            for k in 0..order {
                *s += dot(est.cp.factor(k).col(e), truth.cp.factor(k).col(t)).abs();
            }
        }
    }

    // greedy assignment, ties broken by lowest truth index then lowest est index
    let mut est_for_truth = vec![usize::MAX; rank];
    let mut est_used = vec![false; rank];
    let mut truth_used = vec![false; rank];
    for _ in 0..rank {
        let mut best: Option<(f64, usize, usize)> = None;
        for t in 0..rank {
            if truth_used[t] {
                continue;
            }
            for (e, used) in est_used.iter().enumerate() {
                if *used {
                    continue;
                }
                let better = match best {
                    None => true,
                    Some((bs, _, _)) => score[e][t] > bs,
                };
                if better {
                    best = Some((score[e][t], t, e));
                }
            }
        }
        let (_, t, e) = best.expect("rank components remain");
        est_for_truth[t] = e;
        truth_used[t] = true;
        est_used[e] = true;
    }

    let mut weights = Vec::with_capacity(rank);
    let mut factors: Vec<Vec<Vec<f64>>> = vec![Vec::with_capacity(rank); order];
    let mut couplings: Vec<Option<(Vec<f64>, Vec<Vec<f64>>)>> = est
        .couplings()
        .iter()
        .map(|c| c.as_ref().map(|_| (Vec::new(), Vec::new())))
        .collect();

    for (t, &e) in est_for_truth.iter().enumerate() {
        weights.push(est.cp.weights()[e]);
        for k in 0..order {
            let mut col = est.cp.factor(k).col(e).to_vec();
            if dot(&col, truth.cp.factor(k).col(t)) < 0.0 {
                col.iter_mut().for_each(|x| *x = -*x);
            }
            factors[k].push(col);
        }
        for k in 0..order {
            if let (Some(emf), Some(tmf)) = (est.coupling(k), truth.coupling(k)) {
                let slot = couplings[k].as_mut().expect("coupling slot");
                slot.0.push(emf.sigma[e]);
                let mut col = emf.v.col(e).to_vec();
                if dot(&col, tmf.v.col(t)) < 0.0 {
                    col.iter_mut().for_each(|x| *x = -*x);
                }
                slot.1.push(col);
            }
        }
    }

    let cp = CpFactors::new(
        weights,
        factors
            .into_iter()
            .enumerate()
            .map(|(k, cols)| Factor::new(est.cp.factor(k).rows(), cols))
            .collect::<Result<Vec<_>>>()?,
    )?;
    let couplings = couplings
        .into_iter()
        .enumerate()
        .map(|(k, c)| {
            c.map(|(sigma, cols)| {
                Factor::new(est.coupling(k).unwrap().v.rows(), cols)
                    .map(|v| MatrixFactor { sigma, v })
            })
            .transpose()
        })
        .collect::<Result<Vec<_>>>()?;
    CoupledModel::new(cp, couplings)
}

/// Normalized recovery errors of an estimate against a reference model.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport {
    /// `||T_ref - T_est||_F / ||T_ref||_F` over the dense reconstructions.
    pub tensor_error: f64,
    /// Per tensor mode, `||U_ref - U_est||_F / ||U_ref||_F` after alignment.
    pub component_errors: Vec<f64>,
    /// `||w_ref - w_est||_2 / ||w_ref||_2` after alignment.
    pub weight_error: f64,
}

/// Compute the report; alignment is applied internally. The tensor error is
/// taken from the unaligned estimate (sign alignment is per mode and may not
/// preserve the reconstruction).
pub fn metrics(
    est: &CoupledModel,
    truth: &CoupledModel,
    truth_tensor: &DenseTensor,
) -> Result<MetricsReport> {
    check_comparable(est, truth)?;
    let est_tensor = reconstruct(&est.cp)?;
    if est_tensor.dims() != truth_tensor.dims() {
        return Err(Error::Shape(format!(
            "truth tensor dims {:?} vs model dims {:?}",
            truth_tensor.dims().sizes(),
            est_tensor.dims().sizes()
        )));
    }
    let denom = truth_tensor.frobenius_norm();
    let mut diff = 0.0;
    for (a, b) in est_tensor.values().iter().zip(truth_tensor.values()) {
        let d = a - b;
        diff += d * d;
    }
    let tensor_error = if denom > 0.0 { diff.sqrt() / denom } else { diff.sqrt() };

    let aligned = align(est, truth)?;
    let mut component_errors = Vec::with_capacity(est.order());
    for k in 0..est.order() {
        let num = aligned.cp.factor(k).frobenius_distance(truth.cp.factor(k));
        let den = truth.cp.factor(k).frobenius_norm();
        component_errors.push(if den > 0.0 { num / den } else { num });
    }
    let wdiff: Vec<f64> = aligned
        .cp
        .weights()
        .iter()
        .zip(truth.cp.weights())
        .map(|(a, b)| a - b)
        .collect();
    let wden = norm2(truth.cp.weights());
    let weight_error = if wden > 0.0 { norm2(&wdiff) / wden } else { norm2(&wdiff) };

    Ok(MetricsReport {
        tensor_error,
        component_errors,
        weight_error,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{normal_vec, stream_rng};
    use approx::assert_relative_eq;
    use rand::Rng;

    pub(crate) fn unit(v: Vec<f64>) -> Vec<f64> {
        let n = norm2(&v);
        v.into_iter().map(|x| x / n).collect()
    }

    fn random_model(seed: u64, rank: usize, sizes: &[usize], widths: &[Option<usize>]) -> CoupledModel {
        let mut rng = stream_rng(seed, &[42]);
        let factors = sizes
            .iter()
            .map(|&n| {
                Factor::new(
                    n,
                    (0..rank).map(|_| unit(normal_vec(&mut rng, n))).collect(),
                )
                .unwrap()
            })
            .collect();
        let weights = (0..rank).map(|_| 1.0 + rng.random::<f64>()).collect();
        let cp = CpFactors::new(weights, factors).unwrap();
        let couplings = widths
            .iter()
            .map(|w| {
                w.map(|nv| {
                    let v = Factor::new(
                        nv,
                        (0..rank).map(|_| unit(normal_vec(&mut rng, nv))).collect(),
                    )
                    .unwrap();
                    let sigma = (0..rank).map(|_| 0.5 + rng.random::<f64>()).collect();
                    MatrixFactor { sigma, v }
                })
            })
            .collect();
        CoupledModel::new(cp, couplings).unwrap()
    }

    #[test]
    fn reconstruct_single_basis_outer_product() {
        let cp = CpFactors::new(
            vec![1.0],
            vec![
                Factor::new(2, vec![vec![1.0, 0.0]]).unwrap(),
                Factor::new(2, vec![vec![1.0, 0.0]]).unwrap(),
                Factor::new(2, vec![vec![1.0, 0.0]]).unwrap(),
            ],
        )
        .unwrap();
        let t = reconstruct(&cp).unwrap();
        assert_eq!(t.at(&[0, 0, 0]), 1.0);
        assert_eq!(t.values().iter().filter(|&&x| x != 0.0).count(), 1);
    }

    #[test]
    fn reconstruct_empty_model_is_zero() {
        let cp = CpFactors::new(
            vec![],
            vec![Factor::new(2, vec![]).unwrap(), Factor::new(3, vec![]).unwrap()],
        )
        .unwrap();
        let t = reconstruct(&cp).unwrap();
        assert!(t.values().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn reconstruct_matches_triple_loop() {
        let m = random_model(3, 2, &[2, 2, 2], &[None, None, None]);
        let t = reconstruct(&m.cp).unwrap();
        for i in 0..2 {
            for j in 0..2 {
                for k in 0..2 {
                    let mut expect = 0.0;
                    for r in 0..2 {
                        expect += m.cp.weights()[r]
                            * m.cp.factor(0).col(r)[i]
                            * m.cp.factor(1).col(r)[j]
                            * m.cp.factor(2).col(r)[k];
                    }
                    assert_relative_eq!(t.at(&[i, j, k]), expect, max_relative = 1e-14);
                }
            }
        }
    }

    #[test]
    fn covariate_reconstruction() {
        let cp = CpFactors::new(
            vec![1.0],
            vec![
                Factor::new(2, vec![vec![1.0, 0.0]]).unwrap(),
                Factor::new(2, vec![vec![0.0, 1.0]]).unwrap(),
            ],
        )
        .unwrap();
        let v = Factor::new(3, vec![vec![0.0, 1.0, 0.0]]).unwrap();
        let model = CoupledModel::new(
            cp,
            vec![Some(MatrixFactor { sigma: vec![2.0], v }), None],
        )
        .unwrap();
        let m = reconstruct_covariate(&model, 0).unwrap();
        assert_eq!(m.at(0, 1), 2.0);
        assert_eq!(m.values().iter().filter(|&&x| x != 0.0).count(), 1);
        assert!(matches!(
            reconstruct_covariate(&model, 1),
            Err(Error::NotCoupled { mode: 1 })
        ));

        // R = 2 against an explicit double loop
        let model = random_model(9, 2, &[3, 4], &[Some(5), None]);
        let m = reconstruct_covariate(&model, 0).unwrap();
        let mf = model.coupling(0).unwrap();
        for i in 0..3 {
            for l in 0..5 {
                let mut expect = 0.0;
                for r in 0..2 {
                    expect += mf.sigma[r] * model.cp.factor(0).col(r)[i] * mf.v.col(r)[l];
                }
                assert_relative_eq!(m.at(i, l), expect, max_relative = 1e-14);
            }
        }
    }

    fn permute_and_flip(model: &CoupledModel, perm: &[usize], flips: &[Vec<bool>]) -> CoupledModel {
        // flips[k][r]: negate mode k of (new) rank r
        let order = model.order();
        let mut factors = Vec::new();
        for k in 0..order {
            let cols = perm
                .iter()
                .enumerate()
                .map(|(new_r, &old_r)| {
                    let mut c = model.cp.factor(k).col(old_r).to_vec();
                    if flips[k][new_r] {
                        c.iter_mut().for_each(|x| *x = -*x);
                    }
                    c
                })
                .collect();
            factors.push(Factor::new(model.cp.factor(k).rows(), cols).unwrap());
        }
        let weights = perm.iter().map(|&r| model.cp.weights()[r]).collect();
        let couplings = (0..order)
            .map(|k| {
                model.coupling(k).map(|mf| {
                    let sigma = perm.iter().map(|&r| mf.sigma[r]).collect();
                    let cols = perm.iter().map(|&r| mf.v.col(r).to_vec()).collect();
                    MatrixFactor {
                        sigma,
                        v: Factor::new(mf.v.rows(), cols).unwrap(),
                    }
                })
            })
            .collect();
        CoupledModel::new(CpFactors::new(weights, factors).unwrap(), couplings).unwrap()
    }

    #[test]
    fn align_identity_and_swap() {
        let truth = random_model(7, 3, &[5, 6, 4], &[Some(5), None, None]);
        let aligned = align(&truth, &truth).unwrap();
        assert_eq!(aligned, truth);

        let no_flips = vec![vec![false; 3]; 3];
        let swapped = permute_and_flip(&truth, &[1, 0, 2], &no_flips);
        let aligned = align(&swapped, &truth).unwrap();
        let report = metrics(&aligned, &truth, &reconstruct(&truth.cp).unwrap()).unwrap();
        assert!(report.component_errors.iter().all(|&e| e < 1e-12));
        assert!(report.weight_error < 1e-12);
    }

    #[test]
    fn align_restores_even_flips_and_preserves_reconstruction() {
        let truth = random_model(13, 2, &[5, 4, 6], &[None, None, None]);
        // negate modes 1 and 2 of rank 0: an even flip, reconstruction unchanged
        let mut flips = vec![vec![false; 2]; 3];
        flips[1][0] = true;
        flips[2][0] = true;
        let est = permute_and_flip(&truth, &[0, 1], &flips);
        let before = reconstruct(&est.cp).unwrap();
        let aligned = align(&est, &truth).unwrap();
        let after = reconstruct(&aligned.cp).unwrap();
        for (a, b) in after.values().iter().zip(before.values()) {
            assert_relative_eq!(*a, *b, max_relative = 1e-12, epsilon = 1e-14);
        }
        let report = metrics(&est, &truth, &reconstruct(&truth.cp).unwrap()).unwrap();
        assert!(report.component_errors.iter().all(|&e| e < 1e-12));
    }

    #[test]
    fn align_is_idempotent() {
        let truth = random_model(21, 3, &[5, 5, 5], &[Some(4), None, None]);
        let est = random_model(22, 3, &[5, 5, 5], &[Some(4), None, None]);
        let once = align(&est, &truth).unwrap();
        let twice = align(&once, &truth).unwrap();
        assert_eq!(once, twice);
    }

    #[test]
    fn metrics_exact_and_scaled_weights() {
        let truth = random_model(31, 2, &[4, 5, 6], &[Some(3), None, None]);
        let t = reconstruct(&truth.cp).unwrap();
        let report = metrics(&truth, &truth, &t).unwrap();
        assert_eq!(report.tensor_error, 0.0);
        assert!(report.component_errors.iter().all(|&e| e == 0.0));
        assert_eq!(report.weight_error, 0.0);

        let mut est = truth.clone();
        for w in est.cp.weights_mut() {
            *w *= 2.0;
        }
        let report = metrics(&est, &truth, &t).unwrap();
        assert_relative_eq!(report.weight_error, 1.0, max_relative = 1e-12);
        assert!(report.component_errors.iter().all(|&e| e < 1e-12));
    }

    #[test]
    fn metrics_matches_direct_formula_on_perturbed_factors() {
        let truth = random_model(41, 2, &[4, 4, 4], &[None, None, None]);
        let mut est = truth.clone();
        // hand perturbation, no permutation/sign ambiguity
        est.cp.factor_mut(1).col_mut(0)[2] += 0.05;
        est.cp.factor_mut(2).col_mut(1)[0] -= 0.03;
        let t = reconstruct(&truth.cp).unwrap();
        let report = metrics(&est, &truth, &t).unwrap();

        // straight-line evaluation of the normalized errors
        let te = reconstruct(&est.cp).unwrap();
        let mut num = 0.0;
        let mut den = 0.0;
        for (a, b) in te.values().iter().zip(t.values()) {
            num += (a - b) * (a - b);
            den += b * b;
        }
        assert_relative_eq!(report.tensor_error, (num / den).sqrt(), max_relative = 1e-12);
        for k in 0..3 {
            let mut num = 0.0;
            let mut den = 0.0;
            for r in 0..2 {
                for i in 0..4 {
                    let d = est.cp.factor(k).col(r)[i] - truth.cp.factor(k).col(r)[i];
                    num += d * d;
                    den += truth.cp.factor(k).col(r)[i] * truth.cp.factor(k).col(r)[i];
                }
            }
            assert_relative_eq!(
                report.component_errors[k],
                (num / den).sqrt(),
                max_relative = 1e-12
            );
        }
    }

    #[test]
    fn metrics_invariant_under_permutation_and_even_flips() {
        let truth = random_model(51, 3, &[6, 5, 4], &[Some(4), None, None]);
        let t = reconstruct(&truth.cp).unwrap();
        let mut est = truth.clone();
        est.cp.factor_mut(0).col_mut(0)[1] += 0.02; // mild perturbation
        let base = metrics(&est, &truth, &t).unwrap();

        let mut rng = stream_rng(52, &[1]);
        for _ in 0..10 {
            let mut perm: Vec<usize> = (0..3).collect();
            // Fisher-Yates
            for i in (1..3).rev() {
                let j = rng.random_range(0..=i);
                perm.swap(i, j);
            }
            // even flips per rank: flip two random modes of one rank
            let mut flips = vec![vec![false; 3]; 3];
            let r = rng.random_range(0..3);
            flips[0][r] = true;
            flips[1][r] = true;
            let shuffled = permute_and_flip(&est, &perm, &flips);
            let report = metrics(&shuffled, &truth, &t).unwrap();
            assert_relative_eq!(report.tensor_error, base.tensor_error, max_relative = 1e-10);
            for (a, b) in report.component_errors.iter().zip(&base.component_errors) {
                assert_relative_eq!(*a, *b, max_relative = 1e-10, epsilon = 1e-12);
            }
            assert_relative_eq!(report.weight_error, base.weight_error, max_relative = 1e-10);
        }
    }

    #[test]
    fn align_rejects_rank_mismatch() {
        let a = random_model(61, 2, &[4, 4, 4], &[None, None, None]);
        let b = random_model(62, 3, &[4, 4, 4], &[None, None, None]);
        assert!(matches!(align(&a, &b), Err(Error::RankMismatch { .. })));
    }
}
