//! Synthetic-data protocol and the experiment harness.
//!
//! Ground truth draws every factor entry iid standard normal, hard-thresholds
//! the uncoupled tensor columns to the top fraction by magnitude (coupled
//! columns and covariate columns stay dense), defines the weights as products
//! of the pre-normalization column norms, then normalizes. Corruption adds
//! Gaussian noise rescaled so the perturbation's Frobenius norm is a fixed
//! multiple of the signal's, and reveals entries under an iid Bernoulli mask.
//!
//! The harness scale-balances each dataset (observed tensor and covariates
//! divided by their Frobenius norms, fitted weights rescaled back), fits the
//! coupled solver and the zero-coupling ablation (same code path, empty
//! coupling) on each replica, and aggregates the normalized recovery errors.

use rand::Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::init::InitConfig;
use crate::model::{
    reconstruct, reconstruct_covariate, CoupledModel, CpFactors, Factor, MatrixFactor,
    MetricsReport,
};
use crate::rng::{derive, normal_vec, stream, stream_rng};
use crate::solver::{fit_auto, truncate, Dataset, SolverConfig};
use crate::tensor::{norm2, Covariate, DenseMatrix, DenseTensor, ObservedTensor};

/// One synthetic setting: sizes, coupling, rank, sparsity, noise, masking.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub dims: Vec<usize>,
    /// Covariate width per mode; `Some` marks a coupled mode.
    pub covariate_widths: Vec<Option<usize>>,
    pub rank: usize,
    /// Fraction of entries kept in each uncoupled factor column.
    pub keep_fraction: f64,
    pub eta_tensor: f64,
    pub eta_matrix: f64,
    pub reveal_prob: f64,
    pub replicas: usize,
    pub seed: u64,
}

impl Default for Scenario {
    fn default() -> Self {
        Scenario {
            dims: vec![30, 30, 30, 30],
            covariate_widths: vec![Some(30), None, None, None],
            rank: 2,
            keep_fraction: 0.4,
            eta_tensor: 0.001,
            eta_matrix: 0.001,
            reveal_prob: 0.1,
            replicas: 30,
            seed: 0,
        }
    }
}

impl Scenario {
    pub fn validate(&self) -> Result<()> {
        if self.dims.len() < 2 {
            return Err(Error::Shape("scenario needs order >= 2".into()));
        }
        if self.covariate_widths.len() != self.dims.len() {
            return Err(Error::Shape(
                "one covariate width slot per tensor mode".into(),
            ));
        }
        if self.covariate_widths.iter().any(|w| w == &Some(0)) {
            return Err(Error::Shape("covariate width must be positive".into()));
        }
        if !(self.keep_fraction > 0.0 && self.keep_fraction <= 1.0) {
            return Err(Error::Shape("keep fraction must lie in (0, 1]".into()));
        }
        if !(0.0..=1.0).contains(&self.reveal_prob) {
            return Err(Error::Shape("reveal probability must lie in [0, 1]".into()));
        }
        if self.replicas == 0 {
            return Err(Error::Shape("replicas must be >= 1".into()));
        }
        if self.rank == 0 {
            return Err(Error::Shape("rank must be >= 1".into()));
        }
        Ok(())
    }

    fn keep_count(&self, n: usize) -> usize {
        ((self.keep_fraction * n as f64).ceil() as usize).clamp(1, n)
    }
}

/// Ground truth: the model, its dense tensor, and the clean covariates.
#[derive(Debug, Clone)]
pub struct TruthData {
    pub model: CoupledModel,
    pub tensor: DenseTensor,
    pub covariates: Vec<Option<DenseMatrix>>,
}

/// Draw the ground truth for a scenario from its seed.
pub fn gen_truth(sc: &Scenario) -> Result<TruthData> {
    sc.validate()?;
    let order = sc.dims.len();
    let rank = sc.rank;
    let mut raw_norms: Vec<Vec<f64>> = vec![vec![0.0; rank]; order];
    let mut factors: Vec<Factor> = Vec::with_capacity(order);
    for (k, &n) in sc.dims.iter().enumerate() {
        let mut rng = stream_rng(sc.seed, &[stream::TRUTH, k as u64]);
        let coupled = sc.covariate_widths[k].is_some();
        let mut cols = Vec::with_capacity(rank);
        for r in 0..rank {
            let mut col = normal_vec(&mut rng, n);
            if !coupled {
                col = truncate(&col, sc.keep_count(n))?;
            }
            let norm = norm2(&col);
            if norm == 0.0 {
                return Err(Error::Degenerate("drawn truth column is zero".into()));
            }
            raw_norms[k][r] = norm;
            col.iter_mut().for_each(|x| *x /= norm);
            cols.push(col);
        }
        factors.push(Factor::new(n, cols)?);
    }
    let mut couplings: Vec<Option<MatrixFactor>> = vec![None; order];
    for (k, width) in sc.covariate_widths.iter().enumerate() {
        let Some(nv) = width else { continue };
        let mut rng = stream_rng(sc.seed, &[stream::TRUTH, 1000 + k as u64]);
        let mut sigma = Vec::with_capacity(rank);
        let mut cols = Vec::with_capacity(rank);
        for r in 0..rank {
            let mut col = normal_vec(&mut rng, *nv);
            let norm = norm2(&col);
            if norm == 0.0 {
                return Err(Error::Degenerate("drawn covariate column is zero".into()));
            }
            col.iter_mut().for_each(|x| *x /= norm);
            sigma.push(raw_norms[k][r] * norm);
            cols.push(col);
        }
        couplings[k] = Some(MatrixFactor {
            sigma,
            v: Factor::new(*nv, cols)?,
        });
    }
    let weights = (0..rank)
        .map(|r| (0..order).map(|k| raw_norms[k][r]).product())
        .collect();
    let cp = CpFactors::new(weights, factors)?;
    let model = CoupledModel::new(cp, couplings)?;
    let tensor = reconstruct(&model.cp)?;
    let covariates = (0..order)
        .map(|k| {
            model
                .coupling(k)
                .map(|_| reconstruct_covariate(&model, k))
                .transpose()
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(TruthData {
        model,
        tensor,
        covariates,
    })
}

/// Add norm-calibrated Gaussian noise and reveal entries under an iid
/// Bernoulli(p) mask. Covariates stay fully observed.
pub fn corrupt(
    truth: &TruthData,
    eta_tensor: f64,
    eta_matrix: f64,
    reveal_prob: f64,
    seed: u64,
) -> Result<(ObservedTensor, Vec<Option<Covariate>>)> {
    if !(0.0..=1.0).contains(&reveal_prob) {
        return Err(Error::Shape("reveal probability must lie in [0, 1]".into()));
    }
    let dims = truth.tensor.dims().clone();
    let total = dims.total();

    let mut noisy = truth.tensor.values().to_vec();
    if eta_tensor > 0.0 {
        let mut rng = stream_rng(seed, &[stream::NOISE_TENSOR]);
        let noise = normal_vec(&mut rng, total);
        let scale = eta_tensor * truth.tensor.frobenius_norm() / norm2(&noise);
        for (t, n) in noisy.iter_mut().zip(&noise) {
            *t += scale * n;
        }
    }

    let mut rng = stream_rng(seed, &[stream::MASK]);
    let order = dims.order();
    let sizes = dims.sizes().to_vec();
    let mut coords: Vec<u32> = Vec::new();
    let mut values: Vec<f64> = Vec::new();
    let mut coord = vec![0u32; order];
    for &val in &noisy {
        if rng.random::<f64>() < reveal_prob {
            coords.extend_from_slice(&coord);
            values.push(val);
        }
        for k in (0..order).rev() {
            coord[k] += 1;
            if (coord[k] as usize) < sizes[k] {
                break;
            }
            coord[k] = 0;
        }
    }
    let obs = ObservedTensor::from_sorted_parts(dims, coords, values);

    let covariates = truth
        .covariates
        .iter()
        .enumerate()
        .map(|(k, m)| {
            m.as_ref().map(|m| {
                let mut vals = m.values().to_vec();
                if eta_matrix > 0.0 {
                    let mut rng = stream_rng(seed, &[stream::NOISE_MATRIX, k as u64]);
                    let noise = normal_vec(&mut rng, vals.len());
                    let scale = eta_matrix * m.frobenius_norm() / norm2(&noise);
                    for (t, n) in vals.iter_mut().zip(&noise) {
                        *t += scale * n;
                    }
                }
                DenseMatrix::new(m.rows(), m.cols(), vals).map(Covariate::full)
            })
            .transpose()
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((obs, covariates))
}

/// Fit settings for the harness.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub restarts: usize,
    pub tol: f64,
    pub max_iters: usize,
    pub init: InitConfig,
    /// Also run the zero-coupling ablation on each replica.
    pub with_ablation: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            restarts: 10,
            tol: 1e-7,
            max_iters: 200,
            init: InitConfig::default(),
            with_ablation: true,
        }
    }
}

/// Errors of one replica under each method.
#[derive(Debug, Clone)]
pub struct ReplicaOutcome {
    pub replica: usize,
    pub coupled: MetricsReport,
    pub ablation: Option<MetricsReport>,
}

/// Aggregated row: mean and standard error of one metric for one method.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentRow {
    pub method: String,
    pub metric: String,
    pub mean: f64,
    pub stderr: f64,
}

/// All per-replica reports plus the aggregation.
#[derive(Debug, Clone)]
pub struct ExperimentOutcome {
    pub scenario: Scenario,
    pub replicas: Vec<ReplicaOutcome>,
}

fn mean_stderr(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

impl ExperimentOutcome {
    /// One row per method and metric: `tensor`, `comp<k>` per mode, `weight`.
    pub fn rows(&self) -> Vec<ExperimentRow> {
        let order = self.scenario.dims.len();
        let mut rows = Vec::new();
        let methods: &[(&str, bool)] = &[("coupled", false), ("uncoupled", true)];
        for &(name, is_ablation) in methods {
            let reports: Vec<&MetricsReport> = self
                .replicas
                .iter()
                .filter_map(|r| {
                    if is_ablation {
                        r.ablation.as_ref()
                    } else {
                        Some(&r.coupled)
                    }
                })
                .collect();
            if reports.is_empty() {
                continue;
            }
            let tensor: Vec<f64> = reports.iter().map(|r| r.tensor_error).collect();
            let (mean, stderr) = mean_stderr(&tensor);
            rows.push(ExperimentRow {
                method: name.into(),
                metric: "tensor".into(),
                mean,
                stderr,
            });
            for k in 0..order {
                let comp: Vec<f64> = reports.iter().map(|r| r.component_errors[k]).collect();
                let (mean, stderr) = mean_stderr(&comp);
                rows.push(ExperimentRow {
                    method: name.into(),
                    metric: format!("comp{k}"),
                    mean,
                    stderr,
                });
            }
            let weight: Vec<f64> = reports.iter().map(|r| r.weight_error).collect();
            let (mean, stderr) = mean_stderr(&weight);
            rows.push(ExperimentRow {
                method: name.into(),
                metric: "weight".into(),
                mean,
                stderr,
            });
        }
        rows
    }
}

/// Scale-balance a dataset: divide the observed tensor and each covariate
/// by its Frobenius norm so the misfit terms carry comparable weight, and
/// return the scales. Without this the tensor term dominates the coupled
/// updates by a factor of roughly `(lambda/sigma)^2 p` and the covariate
/// contributes almost nothing. Zero norms are left untouched.
pub fn normalized_dataset(
    obs: &ObservedTensor,
    covariates: &[Option<Covariate>],
) -> Result<(Dataset, f64, Vec<Option<f64>>)> {
    let tscale = {
        let n = obs.frobenius_norm();
        if n > 0.0 {
            n
        } else {
            1.0
        }
    };
    let entries: Vec<(Vec<usize>, f64)> = obs
        .entries()
        .map(|(c, v)| (c.iter().map(|&x| x as usize).collect(), v / tscale))
        .collect();
    let obs_n = ObservedTensor::new(obs.dims().clone(), entries)?;
    let mut scales = vec![None; covariates.len()];
    let covs_n = covariates
        .iter()
        .enumerate()
        .map(|(k, c)| {
            c.as_ref()
                .map(|cov| {
                    let n = cov.matrix.frobenius_norm();
                    let scale = if n > 0.0 { n } else { 1.0 };
                    scales[k] = Some(scale);
                    let vals: Vec<f64> =
                        cov.matrix.values().iter().map(|v| v / scale).collect();
                    let m = DenseMatrix::new(cov.matrix.rows(), cov.matrix.cols(), vals)?;
                    match cov.mask() {
                        None => Ok(Covariate::full(m)),
                        Some(mask) => Covariate::masked(m, mask.to_vec()),
                    }
                })
                .transpose()
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((Dataset::new(obs_n, covs_n)?, tscale, scales))
}

/// Undo [`normalized_dataset`]'s scaling on a fitted model's weights so it
/// lives in the original data units.
pub fn rescale_model_weights(
    model: &mut CoupledModel,
    tensor_scale: f64,
    covariate_scales: &[Option<f64>],
) {
    for w in model.cp.weights_mut() {
        *w *= tensor_scale;
    }
    for (k, scale) in covariate_scales.iter().enumerate() {
        if let (Some(scale), Some(mf)) = (scale, model.coupling_mut(k)) {
            for s in mf.sigma.iter_mut() {
                *s *= scale;
            }
        }
    }
}

/// Oracle budgets for a scenario: uncoupled modes get the true kept count,
/// coupled modes and covariate columns stay dense.
pub fn oracle_budgets(sc: &Scenario) -> (Vec<usize>, Vec<Option<usize>>) {
    let tensor = sc
        .dims
        .iter()
        .enumerate()
        .map(|(k, &n)| {
            if sc.covariate_widths[k].is_some() {
                n
            } else {
                sc.keep_count(n)
            }
        })
        .collect();
    let covariate = sc.covariate_widths.clone();
    (tensor, covariate)
}

fn run_replica(sc: &Scenario, cfg: &RunConfig, replica: usize) -> Result<ReplicaOutcome> {
    let mut rsc = sc.clone();
    rsc.seed = derive(sc.seed, &[stream::REPLICA, replica as u64]);
    let truth = gen_truth(&rsc)?;
    let (obs, covs) = corrupt(&truth, rsc.eta_tensor, rsc.eta_matrix, rsc.reveal_prob, rsc.seed)?;
    let (tensor_budgets, covariate_budgets) = oracle_budgets(&rsc);

    let (data, tensor_scale, covariate_scales) = normalized_dataset(&obs, &covs)?;
    let solver_cfg = SolverConfig {
        rank: rsc.rank,
        tensor_budgets: tensor_budgets.clone(),
        covariate_budgets,
        tol: cfg.tol,
        max_iters: cfg.max_iters,
        restarts: cfg.restarts,
        fix_shared: false,
        restart_jitter: cfg.init.restart_jitter,
        seed: derive(rsc.seed, &[stream::FIT]),
    };
    let init_cfg = InitConfig {
        seed: solver_cfg.seed,
        ..cfg.init.clone()
    };
    let mut fitted = fit_auto(&data, &solver_cfg, &init_cfg)?;
    rescale_model_weights(&mut fitted.model, tensor_scale, &covariate_scales);
    let coupled = crate::model::metrics(&fitted.model, &truth.model, &truth.tensor)?;

    let ablation = if cfg.with_ablation {
        let (data, tensor_scale, _) = normalized_dataset(&obs, &vec![None; rsc.dims.len()])?;
        let solver_cfg = SolverConfig {
            covariate_budgets: vec![None; rsc.dims.len()],
            seed: derive(rsc.seed, &[stream::ABLATION]),
            ..solver_cfg
        };
        let init_cfg = InitConfig {
            seed: solver_cfg.seed,
            ..cfg.init.clone()
        };
        let mut fitted = fit_auto(&data, &solver_cfg, &init_cfg)?;
        rescale_model_weights(&mut fitted.model, tensor_scale, &[]);
        // compare against the same coupled truth on tensor quantities only
        let truth_uncoupled = CoupledModel::uncoupled(truth.model.cp.clone());
        Some(crate::model::metrics(
            &fitted.model,
            &truth_uncoupled,
            &truth.tensor,
        )?)
    } else {
        None
    };

    Ok(ReplicaOutcome {
        replica,
        coupled,
        ablation,
    })
}

/// Run every replica (in parallel, deterministically seeded) and collect
/// the per-replica reports.
pub fn run_experiment(sc: &Scenario, cfg: &RunConfig) -> Result<ExperimentOutcome> {
    sc.validate()?;
    let replicas = (0..sc.replicas)
        .into_par_iter()
        .map(|i| run_replica(sc, cfg, i))
        .collect::<Result<Vec<_>>>()?;
    Ok(ExperimentOutcome {
        scenario: sc.clone(),
        replicas,
    })
}
