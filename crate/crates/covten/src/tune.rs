//! BIC-style rank and sparsity selection.
//!
//! The criterion is the log of the size-normalized misfit (tensor term over
//! the full entry count, one matrix term per coupled mode over its size)
//! plus a complexity penalty proportional to the total nonzero count of the
//! factor columns. Tuning runs sequentially: rank first with full budgets,
//! then a uniform sparsity fraction over the uncoupled tensor modes at the
//! chosen rank. Coupled modes and covariate columns keep full budgets
//! during tuning since the coupling carries dense structure.

use crate::error::{Error, Result};
use crate::init::{initialize, InitConfig};
use crate::model::CoupledModel;
use crate::solver::{fit, misfit_parts, Dataset, FitResult, SolverConfig};

/// Candidate ranks and per-mode nonzero fractions.
#[derive(Debug, Clone, PartialEq)]
pub struct TuneGrid {
    pub ranks: Vec<usize>,
    pub sparsity_fracs: Vec<f64>,
}

impl Default for TuneGrid {
    fn default() -> Self {
        TuneGrid {
            ranks: vec![1, 2, 3, 4, 5],
            sparsity_fracs: vec![0.2, 0.4, 0.6, 0.8, 0.9, 1.0],
        }
    }
}

impl TuneGrid {
    pub fn validate(&self) -> Result<()> {
        if self.ranks.is_empty() || self.sparsity_fracs.is_empty() {
            return Err(Error::Shape("tuning grid must be nonempty".into()));
        }
        if self.ranks.iter().any(|&r| r == 0) {
            return Err(Error::Shape("candidate rank 0 is not tunable".into()));
        }
        if self.sparsity_fracs.iter().any(|&f| !(f > 0.0 && f <= 1.0)) {
            return Err(Error::Shape("sparsity fractions must lie in (0, 1]".into()));
        }
        Ok(())
    }
}

const MISFIT_FLOOR: f64 = 1e-30;

fn nonzero_count(model: &CoupledModel) -> usize {
    let mut total = 0;
    for k in 0..model.order() {
        for r in 0..model.rank() {
            total += model.cp.factor(k).col(r).iter().filter(|&&x| x != 0.0).count();
        }
    }
    for mf in model.couplings().iter().flatten() {
        for r in 0..mf.v.rank() {
            total += mf.v.col(r).iter().filter(|&&x| x != 0.0).count();
        }
    }
    total
}

/// The selection criterion for a fitted model on its data; strictly
/// increasing in the total nonzero count at a fixed misfit.
pub fn bic(data: &Dataset, fit: &FitResult) -> Result<f64> {
    if data.obs.is_empty() {
        return Err(Error::NoObservations);
    }
    let (tensor_part, matrix_parts) = misfit_parts(data, &fit.model)?;
    let tensor_cells = data.obs.dims().total() as f64;
    let mut misfit = tensor_part / tensor_cells;
    let mut total_cells = tensor_cells;
    for (k, part) in matrix_parts.iter().enumerate() {
        if let Some(p) = part {
            let cov = data.covariate(k).expect("misfit part implies covariate");
            let cells = (cov.matrix.rows() * cov.matrix.cols()) as f64;
            misfit += p / cells;
            total_cells += cells;
        }
    }
    let penalty = total_cells.ln() / total_cells * nonzero_count(&fit.model) as f64;
    Ok(misfit.max(MISFIT_FLOOR).ln() + penalty)
}

/// Everything the sequential search looked at, plus the winning fit.
#[derive(Debug, Clone)]
pub struct TuneOutcome {
    pub rank: usize,
    pub sparsity_frac: f64,
    pub tensor_budgets: Vec<usize>,
    pub covariate_budgets: Vec<Option<usize>>,
    pub best: FitResult,
    /// `(rank, bic)` per stage-1 candidate, in grid order.
    pub stage1: Vec<(usize, f64)>,
    /// `(fraction, bic)` per stage-2 candidate, in grid order.
    pub stage2: Vec<(f64, f64)>,
}

fn frac_budget(n: usize, frac: f64) -> usize {
    ((frac * n as f64).ceil() as usize).clamp(1, n)
}

fn budgets_for(data: &Dataset, frac: f64) -> (Vec<usize>, Vec<Option<usize>>) {
    let spec = data.coupling_spec();
    let dims = data.obs.dims();
    let tensor = (0..dims.order())
        .map(|k| {
            if spec.is_coupled(k) {
                dims.size(k)
            } else {
                frac_budget(dims.size(k), frac)
            }
        })
        .collect();
    let covariate = (0..dims.order())
        .map(|k| data.covariate(k).map(|c| c.matrix.cols()))
        .collect();
    (tensor, covariate)
}

/// Sequential search: pick the rank by BIC at full budgets, then the
/// sparsity fraction at the chosen rank. Ties go to the smaller rank and
/// the smaller fraction.
pub fn tune(
    data: &Dataset,
    grid: &TuneGrid,
    base: &SolverConfig,
    init_cfg: &InitConfig,
) -> Result<TuneOutcome> {
    grid.validate()?;
    // deflation extracts components sequentially, so one initialization at
    // the largest candidate rank serves every grid point as a prefix
    let max_rank = *grid.ranks.iter().max().expect("nonempty grid");
    let full_init = initialize(data, &data.coupling_spec(), max_rank, init_cfg, 0)?;

    let mut stage1 = Vec::with_capacity(grid.ranks.len());
    let mut best_rank: Option<(f64, usize, FitResult)> = None;
    for &rank in &grid.ranks {
        let (tensor_budgets, covariate_budgets) = budgets_for(data, 1.0);
        let cfg = SolverConfig {
            rank,
            tensor_budgets,
            covariate_budgets,
            ..base.clone()
        };
        let fitted = fit(data, &cfg, &full_init.rank_prefix(rank)?)?;
        let score = bic(data, &fitted)?;
        stage1.push((rank, score));
        if best_rank.as_ref().map_or(true, |(b, _, _)| score < *b) {
            best_rank = Some((score, rank, fitted));
        }
    }
    let (_, rank, mut best_fit) = best_rank.expect("nonempty grid");

    let rank_init = full_init.rank_prefix(rank)?;
    let mut stage2 = Vec::with_capacity(grid.sparsity_fracs.len());
    let mut best_frac: Option<(f64, f64)> = None;
    let mut best_budgets = budgets_for(data, 1.0);
    for &frac in &grid.sparsity_fracs {
        let (tensor_budgets, covariate_budgets) = budgets_for(data, frac);
        let cfg = SolverConfig {
            rank,
            tensor_budgets: tensor_budgets.clone(),
            covariate_budgets: covariate_budgets.clone(),
            ..base.clone()
        };
        let fitted = fit(data, &cfg, &rank_init)?;
        let score = bic(data, &fitted)?;
        stage2.push((frac, score));
        if best_frac.as_ref().map_or(true, |(b, _)| score < *b) {
            best_frac = Some((score, frac));
            best_fit = fitted;
            best_budgets = (tensor_budgets, covariate_budgets);
        }
    }
    let (_, frac) = best_frac.expect("nonempty grid");

    Ok(TuneOutcome {
        rank,
        sparsity_frac: frac,
        tensor_budgets: best_budgets.0,
        covariate_budgets: best_budgets.1,
        best: best_fit,
        stage1,
        stage2,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{CoupledModel, CpFactors, Factor, MatrixFactor};
    use crate::rng::{normal_vec, stream_rng};
    use crate::tensor::{norm2, Covariate, DenseMatrix, Dims, ObservedTensor};
    use approx::assert_relative_eq;

    fn unit(v: Vec<f64>) -> Vec<f64> {
        let n = norm2(&v);
        v.into_iter().map(|x| x / n).collect()
    }

    fn small_instance(seed: u64) -> (Dataset, CoupledModel) {
        let mut rng = stream_rng(seed, &[1]);
        let sizes = [2usize, 2, 2];
        let cols: Vec<Vec<f64>> = sizes.iter().map(|&n| unit(normal_vec(&mut rng, n))).collect();
        let vcol = unit(normal_vec(&mut rng, 3));
        let dims = Dims::new(sizes.to_vec()).unwrap();
        let mut entries = Vec::new();
        for i in 0..2 {
            for j in 0..2 {
                for k in 0..2 {
                    entries.push((vec![i, j, k], 2.0 * cols[0][i] * cols[1][j] * cols[2][k]));
                }
            }
        }
        let obs = ObservedTensor::new(dims, entries).unwrap();
        let mut m = DenseMatrix::zeros(2, 3);
        m.subtract_rank1(-1.5, &cols[0], &vcol);
        let data = Dataset::new(obs, vec![Some(Covariate::full(m)), None, None]).unwrap();
        let cp = CpFactors::new(
            vec![2.0],
            (0..3)
                .map(|k| Factor::new(2, vec![cols[k].clone()]).unwrap())
                .collect(),
        )
        .unwrap();
        let v = Factor::new(3, vec![vcol]).unwrap();
        let model = CoupledModel::new(
            cp,
            vec![Some(MatrixFactor { sigma: vec![1.5], v }), None, None],
        )
        .unwrap();
        (data, model)
    }

    fn fake_fit(model: CoupledModel) -> FitResult {
        FitResult {
            model,
            objective_trace: vec![0.0],
            iterations: 1,
            converged: true,
            restart_index: 0,
            seed: 0,
        }
    }

    #[test]
    fn bic_matches_hand_computation() {
        let (data, model) = small_instance(3);
        // perturb one weight so the misfit is nonzero and known
        let mut est = model.clone();
        est.cp.weights_mut()[0] = 1.0;
        let fitted = fake_fit(est.clone());
        let got = bic(&data, &fitted).unwrap();

        let (tpart, mparts) = misfit_parts(&data, &est).unwrap();
        let misfit = tpart / 8.0 + mparts[0].unwrap() / 6.0;
        let cells: f64 = 8.0 + 6.0;
        let nnz = (2 + 2 + 2 + 3) as f64; // all entries nonzero at rank 1
        let expect = misfit.ln() + cells.ln() / cells * nnz;
        assert_relative_eq!(got, expect, max_relative = 1e-12);
    }

    #[test]
    fn bic_penalty_is_monotone_in_nonzeros() {
        // splitting a component into two half-weight copies keeps the misfit
        // bitwise identical while doubling the nonzero count
        let (data, model) = small_instance(5);
        let mut est = model.clone();
        est.cp.weights_mut()[0] = 1.7; // nonzero misfit
        let doubled = {
            let w = est.cp.weights()[0] / 2.0;
            let factors = (0..3)
                .map(|k| {
                    let col = est.cp.factor(k).col(0).to_vec();
                    Factor::new(2, vec![col.clone(), col]).unwrap()
                })
                .collect();
            let cp = CpFactors::new(vec![w, w], factors).unwrap();
            let mf = est.coupling(0).unwrap();
            let s = mf.sigma[0] / 2.0;
            let vcol = mf.v.col(0).to_vec();
            CoupledModel::new(
                cp,
                vec![
                    Some(MatrixFactor {
                        sigma: vec![s, s],
                        v: Factor::new(3, vec![vcol.clone(), vcol]).unwrap(),
                    }),
                    None,
                    None,
                ],
            )
            .unwrap()
        };
        let single = bic(&data, &fake_fit(est)).unwrap();
        let double = bic(&data, &fake_fit(doubled)).unwrap();
        assert!(double > single);
    }

    #[test]
    fn bic_perfect_fit_hits_the_floor() {
        let (data, model) = small_instance(7);
        let fitted = fake_fit(model);
        let got = bic(&data, &fitted).unwrap();
        let cells = 14.0_f64;
        let penalty = cells.ln() / cells * 9.0;
        assert_relative_eq!(got, MISFIT_FLOOR.ln() + penalty, max_relative = 1e-9);
    }

    #[test]
    fn bic_requires_observations() {
        let (data, model) = small_instance(9);
        let empty = ObservedTensor::new(data.obs.dims().clone(), vec![]).unwrap();
        let data = Dataset::new(empty, data.covariates().to_vec()).unwrap();
        assert!(matches!(
            bic(&data, &fake_fit(model)),
            Err(Error::NoObservations)
        ));
    }

    #[test]
    fn singleton_grid_selects_the_only_rank() {
        let (data, _) = small_instance(11);
        let grid = TuneGrid {
            ranks: vec![1],
            sparsity_fracs: vec![1.0],
        };
        let base = SolverConfig {
            restarts: 2,
            max_iters: 50,
            seed: 11,
            ..SolverConfig::dense(&data, 1)
        };
        let init_cfg = InitConfig {
            seed: 11,
            ..Default::default()
        };
        let out = tune(&data, &grid, &base, &init_cfg).unwrap();
        assert_eq!(out.rank, 1);
        assert_eq!(out.sparsity_frac, 1.0);
        assert_eq!(out.stage1.len(), 1);
    }

    #[test]
    fn tune_is_deterministic() {
        let (data, _) = small_instance(13);
        let grid = TuneGrid {
            ranks: vec![1, 2],
            sparsity_fracs: vec![0.5, 1.0],
        };
        let base = SolverConfig {
            restarts: 2,
            max_iters: 30,
            seed: 13,
            ..SolverConfig::dense(&data, 1)
        };
        let init_cfg = InitConfig {
            seed: 13,
            ..Default::default()
        };
        let a = tune(&data, &grid, &base, &init_cfg).unwrap();
        let b = tune(&data, &grid, &base, &init_cfg).unwrap();
        assert_eq!(a.rank, b.rank);
        assert_eq!(a.sparsity_frac, b.sparsity_frac);
        assert_eq!(a.stage1, b.stage1);
        assert_eq!(a.stage2, b.stage2);
        assert_eq!(a.best, b.best);
    }
}
