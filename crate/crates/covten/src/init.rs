//! Starting values for the solver.
//!
//! Coupled modes are initialized from a truncated SVD of their covariate
//! matrix (power iteration with deflation; left singular vectors seed the
//! tensor mode, singular values seed the matrix weights, right singular
//! vectors seed the covariate columns). Uncoupled modes and the tensor
//! weights come from a best-of-many-starts rank-1 power method on the
//! zero-filled observation tensor, holding any coupled columns fixed and
//! deflating between components. When every mode is coupled the power
//! method is skipped and weights come from the closed-form scalar solve.
//!
//! Restarts beyond the first perturb every column with Gaussian noise of a
//! relative scale and renormalize; weights are jittered multiplicatively.

use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::model::{CoupledModel, CouplingSpec, CpFactors, Factor, MatrixFactor};
use crate::rng::{normal, normal_vec, stream, stream_rng};
use crate::solver::Dataset;
use crate::tensor::{contract_coords, dot, norm2, DenseMatrix};

/// Initialization parameters; the defaults match the solver's experiments.
#[derive(Debug, Clone, PartialEq)]
pub struct InitConfig {
    /// Random starts per extracted component.
    pub rtpm_starts: usize,
    /// Power-iteration rounds per start.
    pub rtpm_iters: usize,
    /// Cap on SVD power-iteration rounds per singular triple.
    pub svd_power_iters: usize,
    /// Stop when the singular-pair residual `||M v - sigma u||` falls
    /// below this times sigma.
    pub svd_tol: f64,
    /// Relative Gaussian perturbation scale for restarts > 0.
    pub restart_jitter: f64,
    pub seed: u64,
}

impl InitConfig {
    pub fn validate(&self) -> Result<()> {
        if self.rtpm_starts == 0 || self.rtpm_iters == 0 || self.svd_power_iters == 0 {
            return Err(Error::Shape("initialization iteration counts must be >= 1".into()));
        }
        if !(self.svd_tol > 0.0) || !(self.restart_jitter > 0.0) {
            return Err(Error::Shape("initialization tolerances must be positive".into()));
        }
        Ok(())
    }
}

impl Default for InitConfig {
    fn default() -> Self {
        InitConfig {
            rtpm_starts: 30,
            rtpm_iters: 50,
            svd_power_iters: 5000,
            svd_tol: 1e-10,
            restart_jitter: 0.1,
            seed: 0,
        }
    }
}

/// Top-R singular triples.
#[derive(Debug, Clone)]
pub struct SvdInit {
    /// Left singular vectors, unit columns.
    pub u: Vec<Vec<f64>>,
    /// Singular values, nonincreasing.
    pub sigma: Vec<f64>,
    /// Right singular vectors, unit columns.
    pub v: Vec<Vec<f64>>,
}

fn normalize(v: &mut [f64]) -> f64 {
    let n = norm2(v);
    if n > 0.0 {
        v.iter_mut().for_each(|x| *x /= n);
    }
    n
}

/// Top-R SVD of `m` by alternating power iteration with deflation.
///
/// Sign convention: the largest-magnitude entry of each left vector is
/// positive, with the right vector flipped to compensate.
pub fn svd_init(m: &DenseMatrix, rank: usize, cfg: &InitConfig, seed_path: &[u64]) -> Result<SvdInit> {
    if rank > m.rows().min(m.cols()) {
        return Err(Error::Shape(format!(
            "rank {rank} exceeds min dimension of a {}x{} matrix",
            m.rows(),
            m.cols()
        )));
    }
    let mut work = m.clone();
    let mut u_cols = Vec::with_capacity(rank);
    let mut sigmas = Vec::with_capacity(rank);
    let mut v_cols = Vec::with_capacity(rank);
    for r in 0..rank {
        let mut rng = stream_rng(cfg.seed, &[seed_path, &[stream::SVD, r as u64]].concat());
        let mut v = normal_vec(&mut rng, m.cols());
        if normalize(&mut v) == 0.0 {
            return Err(Error::Degenerate("svd start vector is zero".into()));
        }
        let mut u = vec![0.0; m.rows()];
        let mut sigma = 0.0;
        let mut converged = false;
        for _ in 0..cfg.svd_power_iters {
            u = work.matvec(&v)?;
            if normalize(&mut u) == 0.0 {
                return Err(Error::Degenerate(format!("singular value {r} is zero")));
            }
            let mut v_next = work.tmatvec(&u)?;
            sigma = normalize(&mut v_next);
            if sigma == 0.0 {
                return Err(Error::Degenerate(format!("singular value {r} is zero")));
            }
            v = v_next;
            // singular-pair residual: insensitive to rotation inside a
            // near-degenerate block, where any basis serves the deflation
            let mv = work.matvec(&v)?;
            let residual: f64 = mv
                .iter()
                .zip(&u)
                .map(|(a, b)| (a - sigma * b) * (a - sigma * b))
                .sum::<f64>()
                .sqrt();
            if residual <= cfg.svd_tol * sigma {
                converged = true;
                break;
            }
        }
        if !converged {
            return Err(Error::SvdNoConvergence {
                iters: cfg.svd_power_iters,
            });
        }
        // largest-magnitude entry of u positive; flip v to compensate
        let lead = u
            .iter()
            .enumerate()
            .max_by(|(i, a), (j, b)| a.abs().total_cmp(&b.abs()).then(j.cmp(i)))
            .map(|(i, _)| i)
            .unwrap();
        if u[lead] < 0.0 {
            u.iter_mut().for_each(|x| *x = -*x);
            v.iter_mut().for_each(|x| *x = -*x);
        }
        work.subtract_rank1(sigma, &u, &v);
        u_cols.push(u);
        sigmas.push(sigma);
        v_cols.push(v);
    }
    Ok(SvdInit {
        u: u_cols,
        sigma: sigmas,
        v: v_cols,
    })
}

/// One already-extracted rank-1 component, for deflation by linearity.
struct Extracted {
    weight: f64,
    cols: Vec<Vec<f64>>,
}

/// Contract the deflated zero-filled tensor along all modes but `free`,
/// using `cur` for the fixed modes.
fn deflated_contract(
    data: &Dataset,
    extracted: &[Extracted],
    cur: &[Vec<f64>],
    free: usize,
) -> Vec<f64> {
    let dims = data.obs.dims();
    let fixed: Vec<&[f64]> = cur.iter().map(|c| c.as_slice()).collect();
    let mut out = contract_coords(dims, data.obs.flat_coords(), data.obs.values(), &fixed, free);
    for prev in extracted {
        let mut scale = prev.weight;
        for (k, col) in prev.cols.iter().enumerate() {
            if k != free {
                scale *= dot(col, &cur[k]);
            }
        }
        for (o, p) in out.iter_mut().zip(&prev.cols[free]) {
            *o -= scale * p;
        }
    }
    out
}

fn deflated_value(data: &Dataset, extracted: &[Extracted], cur: &[Vec<f64>]) -> f64 {
    let mut total = 0.0;
    for (coord, val) in data.obs.entries() {
        let mut w = val;
        for (k, &c) in coord.iter().enumerate() {
            w *= cur[k][c as usize];
        }
        total += w;
    }
    for prev in extracted {
        let mut scale = prev.weight;
        for (k, col) in prev.cols.iter().enumerate() {
            scale *= dot(col, &cur[k]);
        }
        total -= scale;
    }
    total
}

/// Best-of-many-starts rank-1 power method with deflation on the zero-filled
/// observation tensor. Modes with `fixed` columns are held at those values;
/// the remaining modes and the component weights are returned.
pub fn rtpm_init(
    data: &Dataset,
    rank: usize,
    cfg: &InitConfig,
    fixed: &[Option<&Factor>],
) -> Result<(Vec<f64>, Vec<Factor>)> {
    let dims = data.obs.dims();
    let order = dims.order();
    if fixed.len() != order {
        return Err(Error::Shape(format!(
            "need one fixed slot per mode ({order}), got {}",
            fixed.len()
        )));
    }
    if rank == 0 {
        return Err(Error::Shape("rtpm needs rank >= 1".into()));
    }
    let free_modes: Vec<usize> = (0..order).filter(|&k| fixed[k].is_none()).collect();
    if free_modes.is_empty() {
        return Err(Error::Shape("rtpm needs at least one free mode".into()));
    }

    let mut extracted: Vec<Extracted> = Vec::new();
    let mut lambdas = Vec::with_capacity(rank);
    let mut cols_per_mode: Vec<Vec<Vec<f64>>> = vec![Vec::with_capacity(rank); order];
    for r in 0..rank {
        let mut best: Option<(f64, Vec<Vec<f64>>)> = None;
        for l in 0..cfg.rtpm_starts {
            let mut rng = stream_rng(cfg.seed, &[stream::RTPM_START, r as u64, l as u64]);
            let mut cur: Vec<Vec<f64>> = (0..order)
                .map(|k| match fixed[k] {
                    Some(f) => f.col(r).to_vec(),
                    None => {
                        let mut v = normal_vec(&mut rng, dims.size(k));
                        normalize(&mut v);
                        v
                    }
                })
                .collect();
            let mut collapsed = false;
            for _ in 0..cfg.rtpm_iters {
                for &k in &free_modes {
                    let mut next = deflated_contract(data, &extracted, &cur, k);
                    if normalize(&mut next) == 0.0 {
                        collapsed = true;
                        break;
                    }
                    cur[k] = next;
                }
                if collapsed {
                    break;
                }
            }
            if collapsed {
                continue;
            }
            let value = deflated_value(data, &extracted, &cur);
            if best.as_ref().map_or(true, |(b, _)| value.abs() > b.abs()) {
                best = Some((value, cur));
            }
        }
        let (value, mut cur) = best.ok_or_else(|| {
            Error::Degenerate(format!("all power-method starts collapsed at component {r}"))
        })?;
        if value == 0.0 {
            return Err(Error::Degenerate(format!(
                "power method found no mass for component {r}"
            )));
        }
        let lambda = value.abs();
        if value < 0.0 {
            // flip the first free mode so the component carries a positive weight
            cur[free_modes[0]].iter_mut().for_each(|x| *x = -*x);
        }
        extracted.push(Extracted {
            weight: lambda,
            cols: cur.clone(),
        });
        lambdas.push(lambda);
        for (k, col) in cur.into_iter().enumerate() {
            cols_per_mode[k].push(col);
        }
    }
    let factors = cols_per_mode
        .into_iter()
        .enumerate()
        .map(|(k, cols)| Factor::new(dims.size(k), cols))
        .collect::<Result<Vec<_>>>()?;
    Ok((lambdas, factors))
}

/// Zero-fill a masked covariate so spectral initialization sees only
/// observed values.
fn zero_filled(cov: &crate::tensor::Covariate) -> DenseMatrix {
    match cov.mask() {
        None => cov.matrix.clone(),
        Some(mask) => {
            let mut m = DenseMatrix::zeros(cov.matrix.rows(), cov.matrix.cols());
            for &(i, l) in mask {
                m.set(i as usize, l as usize, cov.matrix.at(i as usize, l as usize));
            }
            m
        }
    }
}

/// Sequential closed-form weights when every mode is coupled: for each
/// component, the least-squares scalar against the residual of the
/// previously weighted components. Negative solutions flip the last mode's
/// tensor and covariate columns, which leaves the covariate reconstruction
/// unchanged.
fn scalar_weights(
    data: &Dataset,
    factors: &mut [Factor],
    couplings: &mut [Option<MatrixFactor>],
    rank: usize,
) -> Result<Vec<f64>> {
    let order = factors.len();
    let mut lambdas = vec![0.0; rank];
    for r in 0..rank {
        let mut num = 0.0;
        let mut den = 0.0;
        for (coord, val) in data.obs.entries() {
            let mut w = 1.0;
            for (k, &c) in coord.iter().enumerate() {
                w *= factors[k].col(r)[c as usize];
            }
            let mut res = val;
            for (m, &lam) in lambdas.iter().enumerate().take(r) {
                let mut wm = lam;
                for (k, &c) in coord.iter().enumerate() {
                    wm *= factors[k].col(m)[c as usize];
                }
                res -= wm;
            }
            num += res * w;
            den += w * w;
        }
        if den == 0.0 {
            return Err(Error::Degenerate(format!(
                "component {r} weight has no observed mass"
            )));
        }
        let mut lam = num / den;
        if lam < 0.0 {
            lam = -lam;
            factors[order - 1].col_mut(r).iter_mut().for_each(|x| *x = -*x);
            if let Some(mf) = couplings[order - 1].as_mut() {
                mf.v.col_mut(r).iter_mut().for_each(|x| *x = -*x);
            }
        }
        if lam == 0.0 {
            return Err(Error::Degenerate(format!("component {r} weight is zero")));
        }
        lambdas[r] = lam;
    }
    Ok(lambdas)
}

fn base_initialize(
    data: &Dataset,
    coupling: &CouplingSpec,
    rank: usize,
    cfg: &InitConfig,
) -> Result<CoupledModel> {
    cfg.validate()?;
    let dims = data.obs.dims();
    let order = dims.order();
    if coupling.order() != order {
        return Err(Error::Shape(format!(
            "coupling order {} vs tensor order {}",
            coupling.order(),
            order
        )));
    }
    let mut svd_factors: Vec<Option<Factor>> = vec![None; order];
    let mut couplings: Vec<Option<MatrixFactor>> = vec![None; order];
    for k in coupling.coupled_modes() {
        let cov = data
            .covariate(k)
            .ok_or(Error::NotCoupled { mode: k })?;
        let svd = svd_init(&zero_filled(cov), rank, cfg, &[k as u64])?;
        svd_factors[k] = Some(Factor::new(dims.size(k), svd.u)?);
        couplings[k] = Some(MatrixFactor {
            sigma: svd.sigma,
            v: Factor::new(cov.matrix.cols(), svd.v)?,
        });
    }

    let (weights, factors) = if coupling.all_coupled() {
        let mut factors: Vec<Factor> = svd_factors.into_iter().map(|f| f.unwrap()).collect();
        let weights = scalar_weights(data, &mut factors, &mut couplings, rank)?;
        (weights, factors)
    } else {
        let fixed: Vec<Option<&Factor>> = svd_factors.iter().map(|f| f.as_ref()).collect();
        let (weights, mut factors) = rtpm_init(data, rank, cfg, &fixed)?;
        // keep the SVD columns verbatim on coupled modes
        for (k, f) in svd_factors.into_iter().enumerate() {
            if let Some(f) = f {
                factors[k] = f;
            }
        }
        (weights, factors)
    };

    let cp = CpFactors::new(weights, factors)?;
    CoupledModel::new(cp, couplings)
}

/// Perturb every factor and covariate column with Gaussian noise of relative
/// norm `scale` and renormalize; weights are scaled by `|1 + scale * g|`.
/// Restart 0 of a fit uses the unjittered base.
pub fn jitter_model(
    model: &CoupledModel,
    scale: f64,
    seed: u64,
    restart_index: u64,
) -> Result<CoupledModel> {
    let mut rng = stream_rng(seed, &[stream::RESTART, restart_index]);
    let mut out = model.clone();
    let jitter_col = |col: &mut Vec<f64>, rng: &mut ChaCha8Rng| -> Result<()> {
        let mut g = normal_vec(rng, col.len());
        let gn = norm2(&g);
        if gn > 0.0 {
            let target = scale * norm2(col) / gn;
            for (c, gi) in col.iter_mut().zip(&g) {
                *c += target * gi;
            }
        } else {
            g.clear();
        }
        if normalize(col) == 0.0 {
            return Err(Error::Degenerate("jittered column collapsed to zero".into()));
        }
        Ok(())
    };
    for k in 0..out.order() {
        for r in 0..out.rank() {
            jitter_col(out.cp.factor_mut(k).col_mut(r), &mut rng)?;
        }
    }
    for k in 0..out.order() {
        if let Some(mf) = out.coupling_mut(k) {
            for r in 0..mf.v.rank() {
                jitter_col(mf.v.col_mut(r), &mut rng)?;
            }
        }
    }
    for w in out.cp.weights_mut() {
        let f = (1.0 + scale * normal(&mut rng)).abs();
        if f == 0.0 {
            return Err(Error::Degenerate("jittered weight collapsed to zero".into()));
        }
        *w *= f;
    }
    for k in 0..out.order() {
        if let Some(mf) = out.coupling_mut(k) {
            for s in mf.sigma.iter_mut() {
                let f = (1.0 + scale * normal(&mut rng)).abs();
                if f == 0.0 {
                    return Err(Error::Degenerate("jittered weight collapsed to zero".into()));
                }
                *s *= f;
            }
        }
    }
    Ok(out)
}

/// Full starting model for one restart: spectral values on coupled modes,
/// power-method values elsewhere, jitter for restarts beyond the first.
pub fn initialize(
    data: &Dataset,
    coupling: &CouplingSpec,
    rank: usize,
    cfg: &InitConfig,
    restart_index: usize,
) -> Result<CoupledModel> {
    let base = base_initialize(data, coupling, rank, cfg)?;
    if restart_index == 0 {
        Ok(base)
    } else {
        jitter_model(&base, cfg.restart_jitter, cfg.seed, restart_index as u64)
    }
}
