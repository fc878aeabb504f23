//! Coupled, masked, hard-thresholded alternating least squares.
//!
//! One sweep runs the per-rank refinement loop: for each component r it
//! rebuilds the residuals excluding r, re-solves each coupled tensor mode,
//! each uncoupled tensor mode, the component weight, and each covariate
//! factor, truncating and renormalizing after every elementwise
//! least-squares quotient. Residuals exclude component r entirely, so they
//! are computed once per r; coordinate descent enters through the updated
//! columns used by each subsequent contraction.
//!
//! `fit` wraps the sweep loop in a convergence test on the tensor factor
//! matrices and a multi-restart search over jittered initializations; a
//! restart whose component collapses (zero vector after truncation, zero
//! weight) is abandoned rather than re-randomized, keeping restarts
//! statistically independent.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::{CoupledModel, CouplingSpec};
use crate::tensor::{
    contract_coords, norm2, weight_coords, Covariate, DenseMatrix, ObservedTensor,
};

/// The observation tensor plus one optional covariate matrix per mode.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub obs: ObservedTensor,
    covariates: Vec<Option<Covariate>>,
}

impl Dataset {
    pub fn new(obs: ObservedTensor, covariates: Vec<Option<Covariate>>) -> Result<Self> {
        if covariates.len() != obs.dims().order() {
            return Err(Error::Shape(format!(
                "need one covariate slot per mode ({}), got {}",
                obs.dims().order(),
                covariates.len()
            )));
        }
        for (k, cov) in covariates.iter().enumerate() {
            if let Some(c) = cov {
                if c.matrix.rows() != obs.dims().size(k) {
                    return Err(Error::Shape(format!(
                        "covariate at mode {k} has {} rows, mode size is {}",
                        c.matrix.rows(),
                        obs.dims().size(k)
                    )));
                }
            }
        }
        Ok(Dataset { obs, covariates })
    }

    /// No covariates: the standalone sparse tensor-completion ablation.
    pub fn tensor_only(obs: ObservedTensor) -> Self {
        let order = obs.dims().order();
        Dataset {
            obs,
            covariates: vec![None; order],
        }
    }

    pub fn covariate(&self, mode: usize) -> Option<&Covariate> {
        self.covariates.get(mode).and_then(|c| c.as_ref())
    }

    pub fn covariates(&self) -> &[Option<Covariate>] {
        &self.covariates
    }

    pub fn coupling_spec(&self) -> CouplingSpec {
        CouplingSpec::new(
            self.covariates
                .iter()
                .map(|c| c.as_ref().map(|cov| cov.matrix.cols()))
                .collect(),
        )
        .expect("covariate widths are positive")
    }
}

/// Solver parameters: rank, per-mode sparsity budgets, stopping control,
/// restart policy.
#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    pub rank: usize,
    /// Per tensor mode, the nonzero budget `1..=n_k`.
    pub tensor_budgets: Vec<usize>,
    /// Per coupled mode, the covariate-column budget `1..=n_v`.
    pub covariate_budgets: Vec<Option<usize>>,
    pub tol: f64,
    pub max_iters: usize,
    pub restarts: usize,
    /// Keep coupled-mode factors at their initialization (noiseless-covariate
    /// fast path).
    pub fix_shared: bool,
    /// Relative scale of the Gaussian perturbation applied to restarts > 0.
    pub restart_jitter: f64,
    pub seed: u64,
}

impl SolverConfig {
    /// Full budgets everywhere (no sparsity), default stopping parameters.
    pub fn dense(data: &Dataset, rank: usize) -> Self {
        SolverConfig {
            rank,
            tensor_budgets: data.obs.dims().sizes().to_vec(),
            covariate_budgets: data
                .covariates()
                .iter()
                .map(|c| c.as_ref().map(|cov| cov.matrix.cols()))
                .collect(),
            tol: 1e-7,
            max_iters: 200,
            restarts: 10,
            fix_shared: false,
            restart_jitter: 0.1,
            seed: 0,
        }
    }

    pub fn validate(&self, data: &Dataset) -> Result<()> {
        let dims = data.obs.dims();
        if self.tensor_budgets.len() != dims.order() {
            return Err(Error::Shape(format!(
                "expected {} tensor budgets, got {}",
                dims.order(),
                self.tensor_budgets.len()
            )));
        }
        for (k, &s) in self.tensor_budgets.iter().enumerate() {
            if s == 0 || s > dims.size(k) {
                return Err(Error::BudgetOutOfRange {
                    budget: s,
                    len: dims.size(k),
                });
            }
        }
        if self.covariate_budgets.len() != dims.order() {
            return Err(Error::Shape(format!(
                "expected {} covariate budget slots, got {}",
                dims.order(),
                self.covariate_budgets.len()
            )));
        }
        for (k, slot) in self.covariate_budgets.iter().enumerate() {
            match (slot, data.covariate(k)) {
                (&Some(s), Some(cov)) => {
                    if s == 0 || s > cov.matrix.cols() {
                        return Err(Error::BudgetOutOfRange {
                            budget: s,
                            len: cov.matrix.cols(),
                        });
                    }
                }
                (&None, None) => {}
                (&Some(_), None) => return Err(Error::NotCoupled { mode: k }),
                (&None, Some(_)) => {
                    return Err(Error::Shape(format!(
                        "mode {k} is coupled but has no covariate budget"
                    )))
                }
            }
        }
        if self.max_iters == 0 {
            return Err(Error::Shape("max_iters must be >= 1".into()));
        }
        if !(self.tol > 0.0) {
            return Err(Error::Shape("tol must be positive".into()));
        }
        if self.restarts == 0 {
            return Err(Error::Shape("restarts must be >= 1".into()));
        }
        Ok(())
    }
}

/// Outcome of a fit: the best restart's model plus its trace and provenance.
#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    pub model: CoupledModel,
    /// Objective before any sweep, then after each sweep.
    pub objective_trace: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub restart_index: usize,
    pub seed: u64,
}

impl FitResult {
    pub fn final_objective(&self) -> f64 {
        *self
            .objective_trace
            .last()
            .expect("objective trace is never empty")
    }
}

/// Zero every entry outside the `s` largest absolute values; ties keep the
/// earliest-occurring indices.
pub fn truncate(v: &[f64], s: usize) -> Result<Vec<f64>> {
    if s == 0 || s > v.len() {
        return Err(Error::BudgetOutOfRange {
            budget: s,
            len: v.len(),
        });
    }
    let mut out = v.to_vec();
    truncate_in_place(&mut out, s);
    Ok(out)
}

fn truncate_in_place(v: &mut [f64], s: usize) {
    if s >= v.len() {
        return;
    }
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[b].abs().total_cmp(&v[a].abs()).then(a.cmp(&b)));
    for &i in &idx[s..] {
        v[i] = 0.0;
    }
}

fn factor_cols<'a>(model: &'a CoupledModel, r: usize) -> Vec<&'a [f64]> {
    (0..model.order())
        .map(|k| model.cp.factor(k).col(r))
        .collect()
}

fn check_rank(model: &CoupledModel, r: usize) -> Result<()> {
    if r >= model.rank() {
        return Err(Error::RankMismatch {
            expected: model.rank(),
            found: r,
        });
    }
    Ok(())
}

fn residual_tensor_values(obs: &ObservedTensor, model: &CoupledModel, r: usize, out: &mut Vec<f64>) {
    let rank = model.rank();
    out.clear();
    out.reserve(obs.len());
    for (coord, val) in obs.entries() {
        let mut acc = val;
        for m in 0..rank {
            if m == r {
                continue;
            }
            let mut w = model.cp.weights()[m];
            for (k, &c) in coord.iter().enumerate() {
                w *= model.cp.factor(k).col(m)[c as usize];
            }
            acc -= w;
        }
        out.push(acc);
    }
}

/// Observed values of the data minus the model reconstruction excluding
/// component `r`.
pub fn residual_tensor(obs: &ObservedTensor, model: &CoupledModel, r: usize) -> Result<ObservedTensor> {
    check_rank(model, r)?;
    let mut vals = Vec::new();
    residual_tensor_values(obs, model, r, &mut vals);
    Ok(obs.with_values(vals))
}

fn residual_matrix_inner(cov: &Covariate, model: &CoupledModel, mode: usize, r: usize) -> DenseMatrix {
    let mf = model.coupling(mode).expect("checked coupled");
    let u = model.cp.factor(mode);
    match cov.mask() {
        None => {
            let mut res = cov.matrix.clone();
            for m in 0..model.rank() {
                if m != r {
                    res.subtract_rank1(mf.sigma[m], u.col(m), mf.v.col(m));
                }
            }
            res
        }
        Some(mask) => {
            // values only at masked coordinates, zero elsewhere
            let mut res = DenseMatrix::zeros(cov.matrix.rows(), cov.matrix.cols());
            for &(i, l) in mask {
                let (i, l) = (i as usize, l as usize);
                let mut acc = cov.matrix.at(i, l);
                for m in 0..model.rank() {
                    if m != r {
                        acc -= mf.sigma[m] * u.col(m)[i] * mf.v.col(m)[l];
                    }
                }
                res.set(i, l, acc);
            }
            res
        }
    }
}

/// Covariate matrix minus its reconstruction excluding component `r`; with a
/// mask present only masked entries carry values.
pub fn residual_matrix(
    cov: &Covariate,
    model: &CoupledModel,
    mode: usize,
    r: usize,
) -> Result<DenseMatrix> {
    check_rank(model, r)?;
    if model.coupling(mode).is_none() {
        return Err(Error::NotCoupled { mode });
    }
    Ok(residual_matrix_inner(cov, model, mode, r))
}

/// Elementwise quotient with the no-information convention: a component with
/// a zero denominator (no observed entries and no coupling mass) is zero.
fn quotient(mut num: Vec<f64>, den: &[f64]) -> Vec<f64> {
    for (n, &d) in num.iter_mut().zip(den) {
        *n = if d == 0.0 { 0.0 } else { *n / d };
    }
    num
}

fn coupled_vector_inner(
    data: &Dataset,
    model: &CoupledModel,
    r: usize,
    mode: usize,
    res_t: &[f64],
    res_m: &DenseMatrix,
) -> Vec<f64> {
    let mf = model.coupling(mode).expect("checked coupled");
    let cov = data.covariate(mode).expect("checked coupled");
    let lambda = model.cp.weights()[r];
    let sigma = mf.sigma[r];
    let vcol = mf.v.col(r);
    let fixed = factor_cols(model, r);
    let dims = data.obs.dims();

    let mut num = contract_coords(dims, data.obs.flat_coords(), res_t, &fixed, mode);
    num.iter_mut().for_each(|x| *x *= lambda);
    let mv = res_m.matvec(vcol).expect("residual matrix conforms");
    for (n, m) in num.iter_mut().zip(&mv) {
        *n += sigma * m;
    }

    let mut den = weight_coords(dims, data.obs.flat_coords(), &fixed, mode);
    den.iter_mut().for_each(|x| *x *= lambda * lambda);
    let vsq = cov.rowwise_masked_sumsq(vcol);
    for (d, s) in den.iter_mut().zip(&vsq) {
        *d += sigma * sigma * s;
    }
    quotient(num, &den)
}

fn uncoupled_vector_inner(
    data: &Dataset,
    model: &CoupledModel,
    r: usize,
    mode: usize,
    res_t: &[f64],
) -> Vec<f64> {
    let fixed = factor_cols(model, r);
    let dims = data.obs.dims();
    let num = contract_coords(dims, data.obs.flat_coords(), res_t, &fixed, mode);
    let den = weight_coords(dims, data.obs.flat_coords(), &fixed, mode);
    quotient(num, &den)
}

fn covariate_vector_inner(
    data: &Dataset,
    model: &CoupledModel,
    r: usize,
    mode: usize,
    res_m: &DenseMatrix,
) -> Vec<f64> {
    let cov = data.covariate(mode).expect("checked coupled");
    let ucol = model.cp.factor(mode).col(r);
    let num = res_m.tmatvec(ucol).expect("residual matrix conforms");
    if cov.is_masked() {
        let den = cov.colwise_masked_sumsq(ucol);
        quotient(num, den.as_slice())
    } else {
        // unit u: the least-squares denominator is exactly 1
        num
    }
}

fn coupled_prereqs(data: &Dataset, model: &CoupledModel, r: usize, mode: usize) -> Result<()> {
    check_rank(model, r)?;
    if data.covariate(mode).is_none() || model.coupling(mode).is_none() {
        return Err(Error::NotCoupled { mode });
    }
    Ok(())
}

/// Pre-truncation, pre-normalization least-squares vector for a coupled
/// tensor mode (the elementwise quotient of Algorithm updates).
pub fn coupled_update_vector(
    data: &Dataset,
    model: &CoupledModel,
    r: usize,
    mode: usize,
) -> Result<Vec<f64>> {
    coupled_prereqs(data, model, r, mode)?;
    let mut res_t = Vec::new();
    residual_tensor_values(&data.obs, model, r, &mut res_t);
    let res_m = residual_matrix_inner(data.covariate(mode).unwrap(), model, mode, r);
    Ok(coupled_vector_inner(data, model, r, mode, &res_t, &res_m))
}

/// Pre-truncation, pre-normalization least-squares vector for an uncoupled
/// tensor mode. Its norm after truncation is the component weight when the
/// mode is the weight-carrying one.
pub fn uncoupled_update_vector(
    data: &Dataset,
    model: &CoupledModel,
    r: usize,
    mode: usize,
) -> Result<Vec<f64>> {
    check_rank(model, r)?;
    if mode >= model.order() {
        return Err(Error::ModeOutOfRange {
            mode,
            order: model.order(),
        });
    }
    let mut res_t = Vec::new();
    residual_tensor_values(&data.obs, model, r, &mut res_t);
    Ok(uncoupled_vector_inner(data, model, r, mode, &res_t))
}

/// Pre-truncation covariate-column vector `res_M^T u_r` (masked variants
/// divide by the per-column observed mass of `u_r`).
pub fn covariate_update_vector(
    data: &Dataset,
    model: &CoupledModel,
    r: usize,
    mode: usize,
) -> Result<Vec<f64>> {
    coupled_prereqs(data, model, r, mode)?;
    let res_m = residual_matrix_inner(data.covariate(mode).unwrap(), model, mode, r);
    Ok(covariate_vector_inner(data, model, r, mode, &res_m))
}

fn apply_column(
    model: &mut CoupledModel,
    mode: usize,
    r: usize,
    mut vec: Vec<f64>,
    budget: usize,
    set_weight: bool,
) -> Result<()> {
    truncate_in_place(&mut vec, budget);
    let n = norm2(&vec);
    if n == 0.0 {
        return Err(Error::Degenerate(format!(
            "mode {mode} component {r} is zero after truncation"
        )));
    }
    vec.iter_mut().for_each(|x| *x /= n);
    *model.cp.factor_mut(mode).col_mut(r) = vec;
    if set_weight {
        model.cp.weights_mut()[r] = n;
    }
    Ok(())
}

/// Re-solve one coupled tensor mode of component `r`: elementwise quotient,
/// truncate to the mode budget, renormalize. A no-op under `fix_shared`.
pub fn update_coupled_mode(
    data: &Dataset,
    cfg: &SolverConfig,
    model: &mut CoupledModel,
    r: usize,
    mode: usize,
) -> Result<()> {
    coupled_prereqs(data, model, r, mode)?;
    if cfg.fix_shared {
        return Ok(());
    }
    let vec = coupled_update_vector(data, model, r, mode)?;
    apply_column(model, mode, r, vec, cfg.tensor_budgets[mode], false)
}

/// Re-solve one uncoupled tensor mode; the weight-carrying mode also
/// refreshes the component weight from the truncated vector's norm.
pub fn update_uncoupled_mode(
    data: &Dataset,
    cfg: &SolverConfig,
    model: &mut CoupledModel,
    r: usize,
    mode: usize,
    is_weight_mode: bool,
) -> Result<()> {
    let vec = uncoupled_update_vector(data, model, r, mode)?;
    apply_column(model, mode, r, vec, cfg.tensor_budgets[mode], is_weight_mode)
}

/// Re-solve one covariate column: `res_M^T u_r`, truncate, extract the
/// matrix weight, renormalize.
pub fn update_covariate(
    data: &Dataset,
    cfg: &SolverConfig,
    model: &mut CoupledModel,
    r: usize,
    mode: usize,
) -> Result<()> {
    let mut vec = covariate_update_vector(data, model, r, mode)?;
    let budget = cfg.covariate_budgets[mode].ok_or(Error::NotCoupled { mode })?;
    truncate_in_place(&mut vec, budget);
    let sigma = norm2(&vec);
    if sigma == 0.0 {
        return Err(Error::Degenerate(format!(
            "covariate column at mode {mode}, component {r}, is zero"
        )));
    }
    vec.iter_mut().for_each(|x| *x /= sigma);
    let mf = model.coupling_mut(mode).expect("checked coupled");
    mf.sigma[r] = sigma;
    *mf.v.col_mut(r) = vec;
    Ok(())
}

/// Closed-form scalar refresh of the component weight when no uncoupled
/// tensor mode exists to carry it: the least-squares ratio of two inner
/// products over observed entries. A negative solution is absorbed by
/// flipping the last mode's tensor column together with its covariate
/// column, which leaves every covariate reconstruction unchanged.
fn refresh_weight_scalar(
    data: &Dataset,
    model: &mut CoupledModel,
    r: usize,
    res_t: &[f64],
) -> Result<()> {
    let order = model.order();
    let mut num = 0.0;
    let mut den = 0.0;
    for (e, (coord, _)) in data.obs.entries().enumerate() {
        let mut w = 1.0;
        for (k, &c) in coord.iter().enumerate() {
            w *= model.cp.factor(k).col(r)[c as usize];
        }
        num += res_t[e] * w;
        den += w * w;
    }
    if den == 0.0 {
        return Err(Error::Degenerate(format!(
            "component {r} weight has no observed mass"
        )));
    }
    let mut lambda = num / den;
    if lambda < 0.0 {
        lambda = -lambda;
        let last = order - 1;
        model
            .cp
            .factor_mut(last)
            .col_mut(r)
            .iter_mut()
            .for_each(|x| *x = -*x);
        if let Some(mf) = model.coupling_mut(last) {
            mf.v.col_mut(r).iter_mut().for_each(|x| *x = -*x);
        }
    }
    if lambda == 0.0 {
        return Err(Error::Degenerate(format!("component {r} weight is zero")));
    }
    model.cp.weights_mut()[r] = lambda;
    Ok(())
}

/// One full refinement pass over all components: per component, coupled
/// tensor modes in ascending order, then uncoupled tensor modes (the last
/// one carries the weight), then covariate columns.
pub fn sweep(data: &Dataset, cfg: &SolverConfig, model: &mut CoupledModel) -> Result<()> {
    cfg.validate(data)?;
    let order = model.order();
    let spec = data.coupling_spec();
    let weight_mode = (0..order).rev().find(|&k| !spec.is_coupled(k));
    let nnz = data.obs.len();
    let rank = model.rank();

    // Per-component value buffers over observed coordinates keep the per-r
    // residual linear in the rank instead of quadratic.
    let component_values = |model: &CoupledModel, m: usize| -> Vec<f64> {
        let mut vals = Vec::with_capacity(nnz);
        for (coord, _) in data.obs.entries() {
            let mut w = model.cp.weights()[m];
            for (k, &c) in coord.iter().enumerate() {
                w *= model.cp.factor(k).col(m)[c as usize];
            }
            vals.push(w);
        }
        vals
    };
    let mut comp: Vec<Vec<f64>> = (0..rank).map(|m| component_values(model, m)).collect();
    let mut total = vec![0.0; nnz];
    for c in &comp {
        for (t, v) in total.iter_mut().zip(c) {
            *t += v;
        }
    }

    let mut res_t: Vec<f64> = vec![0.0; nnz];
    for r in 0..rank {
        for (e, &obs_val) in data.obs.values().iter().enumerate() {
            res_t[e] = obs_val - (total[e] - comp[r][e]);
        }
        let res_m: Vec<Option<DenseMatrix>> = (0..order)
            .map(|k| {
                data.covariate(k)
                    .map(|cov| residual_matrix_inner(cov, model, k, r))
            })
            .collect();

        for k in spec.coupled_modes() {
            if cfg.fix_shared {
                continue;
            }
            let vec = coupled_vector_inner(data, model, r, k, &res_t, res_m[k].as_ref().unwrap());
            apply_column(model, k, r, vec, cfg.tensor_budgets[k], false)?;
        }
        for k in 0..order {
            if spec.is_coupled(k) {
                continue;
            }
            let vec = uncoupled_vector_inner(data, model, r, k, &res_t);
            apply_column(model, k, r, vec, cfg.tensor_budgets[k], weight_mode == Some(k))?;
        }
        if weight_mode.is_none() {
            refresh_weight_scalar(data, model, r, &res_t)?;
        }
        for k in spec.coupled_modes() {
            let mut vec =
                covariate_vector_inner(data, model, r, k, res_m[k].as_ref().unwrap());
            let budget = cfg.covariate_budgets[k].expect("validated");
            truncate_in_place(&mut vec, budget);
            let sigma = norm2(&vec);
            if sigma == 0.0 {
                return Err(Error::Degenerate(format!(
                    "covariate column at mode {k}, component {r}, is zero"
                )));
            }
            vec.iter_mut().for_each(|x| *x /= sigma);
            let mf = model.coupling_mut(k).expect("coupled");
            mf.sigma[r] = sigma;
            *mf.v.col_mut(r) = vec;
        }

        let fresh = component_values(model, r);
        for ((t, old), new) in total.iter_mut().zip(&comp[r]).zip(&fresh) {
            *t += new - old;
        }
        comp[r] = fresh;
    }
    Ok(())
}

/// Squared tensor misfit on observed entries plus, per coupled mode, the
/// squared covariate misfit (restricted to its mask when present).
pub fn misfit_parts(data: &Dataset, model: &CoupledModel) -> Result<(f64, Vec<Option<f64>>)> {
    if model.order() != data.obs.dims().order() {
        return Err(Error::Shape(format!(
            "model order {} vs data order {}",
            model.order(),
            data.obs.dims().order()
        )));
    }
    let rank = model.rank();
    let mut tensor_part = 0.0;
    for (coord, val) in data.obs.entries() {
        let mut acc = val;
        for m in 0..rank {
            let mut w = model.cp.weights()[m];
            for (k, &c) in coord.iter().enumerate() {
                w *= model.cp.factor(k).col(m)[c as usize];
            }
            acc -= w;
        }
        tensor_part += acc * acc;
    }
    let mut matrix_parts = vec![None; model.order()];
    for k in 0..model.order() {
        let (cov, mf) = match (data.covariate(k), model.coupling(k)) {
            (Some(cov), Some(mf)) => (cov, mf),
            (None, None) => continue,
            _ => return Err(Error::Shape(format!("coupling mismatch at mode {k}"))),
        };
        let u = model.cp.factor(k);
        let mut part = 0.0;
        match cov.mask() {
            None => {
                for i in 0..cov.matrix.rows() {
                    for l in 0..cov.matrix.cols() {
                        let mut acc = cov.matrix.at(i, l);
                        for m in 0..rank {
                            acc -= mf.sigma[m] * u.col(m)[i] * mf.v.col(m)[l];
                        }
                        part += acc * acc;
                    }
                }
            }
            Some(mask) => {
                for &(i, l) in mask {
                    let (i, l) = (i as usize, l as usize);
                    let mut acc = cov.matrix.at(i, l);
                    for m in 0..rank {
                        acc -= mf.sigma[m] * u.col(m)[i] * mf.v.col(m)[l];
                    }
                    part += acc * acc;
                }
            }
        }
        matrix_parts[k] = Some(part);
    }
    Ok((tensor_part, matrix_parts))
}

/// Squared misfit on observed tensor entries plus the squared misfit of
/// every coupled covariate matrix.
pub fn objective(data: &Dataset, model: &CoupledModel) -> Result<f64> {
    let (tensor_part, matrix_parts) = misfit_parts(data, model)?;
    Ok(tensor_part + matrix_parts.into_iter().flatten().sum::<f64>())
}

fn run_restart(
    data: &Dataset,
    cfg: &SolverConfig,
    mut model: CoupledModel,
    restart_index: usize,
) -> Result<FitResult> {
    let mut trace = vec![objective(data, &model)?];
    let mut converged = false;
    let mut iterations = 0;
    for t in 1..=cfg.max_iters {
        let old: Vec<_> = (0..model.order())
            .map(|k| model.cp.factor(k).clone())
            .collect();
        sweep(data, cfg, &mut model)?;
        iterations = t;
        trace.push(objective(data, &model)?);
        let mut change = 0.0;
        for (k, o) in old.iter().enumerate() {
            let den = o.frobenius_norm();
            let d = o.frobenius_distance(model.cp.factor(k));
            if den > 0.0 {
                change += d / den;
            } else if d > 0.0 {
                change = f64::INFINITY;
            }
        }
        if change < cfg.tol {
            converged = true;
            break;
        }
    }
    Ok(FitResult {
        model,
        objective_trace: trace,
        iterations,
        converged,
        restart_index,
        seed: cfg.seed,
    })
}

/// Run the sweep loop from `init` across `cfg.restarts` initializations
/// (restart 0 uses `init` as-is; later restarts jitter it) and keep the
/// restart with the smallest final objective, ties to the lower index.
/// Restarts that hit a degenerate component are dropped; it is an error for
/// all of them to degenerate.
pub fn fit(data: &Dataset, cfg: &SolverConfig, init: &CoupledModel) -> Result<FitResult> {
    cfg.validate(data)?;
    if init.rank() != cfg.rank {
        return Err(Error::RankMismatch {
            expected: cfg.rank,
            found: init.rank(),
        });
    }
    if init.coupling_spec() != data.coupling_spec() {
        return Err(Error::Shape(
            "init coupling layout does not match the dataset".into(),
        ));
    }
    let outcomes: Vec<Option<FitResult>> = (0..cfg.restarts)
        .into_par_iter()
        .map(|i| {
            let start = if i == 0 {
                init.clone()
            } else {
                match crate::init::jitter_model(init, cfg.restart_jitter, cfg.seed, i as u64) {
                    Ok(m) => m,
                    Err(_) => return Ok(None),
                }
            };
            match run_restart(data, cfg, start, i) {
                Ok(res) => Ok(Some(res)),
                Err(Error::Degenerate(_)) => Ok(None),
                Err(e) => Err(e),
            }
        })
        .collect::<Result<Vec<_>>>()?;
    outcomes
        .into_iter()
        .flatten()
        .min_by(|a, b| {
            a.final_objective()
                .total_cmp(&b.final_objective())
                .then(a.restart_index.cmp(&b.restart_index))
        })
        .ok_or(Error::AllRestartsDegenerate {
            restarts: cfg.restarts,
        })
}

/// Initialize from the data (spectral + tensor power method) and fit.
pub fn fit_auto(
    data: &Dataset,
    cfg: &SolverConfig,
    init_cfg: &crate::init::InitConfig,
) -> Result<FitResult> {
    let base = crate::init::initialize(data, &data.coupling_spec(), cfg.rank, init_cfg, 0)?;
    fit(data, cfg, &base)
}

/// Model values at the given coordinates.
pub fn complete(model: &CoupledModel, coords: &[Vec<usize>]) -> Result<Vec<f64>> {
    let dims = model.cp.dims()?;
    let mut out = Vec::with_capacity(coords.len());
    for c in coords {
        if !dims.contains(c) {
            return Err(Error::CoordOutOfRange {
                coord: c.clone(),
                dims: dims.sizes().to_vec(),
            });
        }
        out.push(model.cp.value_at(c));
    }
    Ok(out)
}
