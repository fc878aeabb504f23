//! Plain-text file formats.
//!
//! All formats are line-oriented, whitespace-separated, diff-able, and
//! round-trip losslessly: floats are written with 17 significant digits.
//! Lines whose first non-blank character is `#` are comments. Coordinate
//! files declare their index base (`base=0` or `base=1`) in the header and
//! are converted to 0-based on read.
//!
//! - tensor file: `tensor <K> <n_1> … <n_K> base=<0|1>`, then one line per
//!   observed entry (`K` coordinates and a value);
//! - matrix file: `matrix <rows> <cols>`, then dense rows, or
//!   `matrix-coo <rows> <cols> base=<0|1>` with `(i, j, value)` lines for a
//!   covariate observed only on a mask;
//! - model file: keyword sections (`dims`, `rank`, `lambda`, `factor`,
//!   `coupling`, optional `seed`/`objective` provenance) ending in `end`;
//! - coords file: `coords <K> base=<0|1>`, then one coordinate per line;
//! - CSV outputs: a fixed header row, comma-separated, no quoting;
//! - plot data: whitespace-separated columns behind a `#` header comment,
//!   directly loadable by gnuplot.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::model::{CoupledModel, CpFactors, Factor, MatrixFactor, MetricsReport};
use crate::sim::{ExperimentOutcome, Scenario};
use crate::tensor::{Covariate, DenseMatrix, Dims, ObservedTensor};

/// 17 significant digits: enough for an exact f64 round trip.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

fn parse_err(line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        line,
        message: message.into(),
    }
}

fn parse_f64(tok: &str, line: usize) -> Result<f64> {
    tok.parse::<f64>()
        .map_err(|_| parse_err(line, format!("expected a number, found {tok:?}")))
}

fn parse_usize(tok: &str, line: usize) -> Result<usize> {
    tok.parse::<usize>()
        .map_err(|_| parse_err(line, format!("expected a nonnegative integer, found {tok:?}")))
}

fn parse_base(tok: &str, line: usize) -> Result<usize> {
    match tok {
        "base=0" => Ok(0),
        "base=1" => Ok(1),
        other => Err(parse_err(line, format!("expected base=0 or base=1, found {other:?}"))),
    }
}

/// Numbered significant lines (comments and blanks skipped).
struct Lines<'a> {
    iter: std::iter::Enumerate<std::str::Lines<'a>>,
}

impl<'a> Lines<'a> {
    fn new(text: &'a str) -> Self {
        Lines {
            iter: text.lines().enumerate(),
        }
    }

    fn next(&mut self) -> Option<(usize, &'a str)> {
        for (i, raw) in self.iter.by_ref() {
            let t = raw.trim();
            if t.is_empty() || t.starts_with('#') {
                continue;
            }
            return Some((i + 1, t));
        }
        None
    }

    fn expect(&mut self, what: &str) -> Result<(usize, &'a str)> {
        self.next()
            .ok_or_else(|| parse_err(0, format!("unexpected end of file, expected {what}")))
    }
}

// ---------------------------------------------------------------------------
// tensor files

pub fn write_tensor_string(obs: &ObservedTensor) -> String {
    let dims = obs.dims();
    let mut out = String::new();
    let _ = write!(out, "tensor {}", dims.order());
    for &n in dims.sizes() {
        let _ = write!(out, " {n}");
    }
    let _ = writeln!(out, " base=0");
    for (coord, value) in obs.entries() {
        for &c in coord {
            let _ = write!(out, "{c} ");
        }
        let _ = writeln!(out, "{}", fmt_f64(value));
    }
    out
}

pub fn write_tensor(path: &Path, obs: &ObservedTensor) -> Result<()> {
    fs::write(path, write_tensor_string(obs))?;
    Ok(())
}

pub fn read_tensor_string(text: &str) -> Result<ObservedTensor> {
    let mut lines = Lines::new(text);
    let (hline, header) = lines.expect("tensor header")?;
    let toks: Vec<&str> = header.split_whitespace().collect();
    if toks.first() != Some(&"tensor") {
        return Err(parse_err(hline, "expected a `tensor` header"));
    }
    if toks.len() < 2 {
        return Err(parse_err(hline, "tensor header needs an order"));
    }
    let order = parse_usize(toks[1], hline)?;
    if toks.len() != order + 3 {
        return Err(parse_err(
            hline,
            format!("tensor header needs {order} sizes and a base declaration"),
        ));
    }
    let sizes = toks[2..2 + order]
        .iter()
        .map(|t| parse_usize(t, hline))
        .collect::<Result<Vec<_>>>()?;
    let base = parse_base(toks[2 + order], hline)?;
    let dims = Dims::new(sizes.clone()).map_err(|e| parse_err(hline, e.to_string()))?;

    let mut entries: Vec<(Vec<usize>, f64)> = Vec::new();
    let mut seen: std::collections::HashMap<usize, usize> = std::collections::HashMap::new();
    while let Some((lno, line)) = lines.next() {
        let toks: Vec<&str> = line.split_whitespace().collect();
        if toks.len() != order + 1 {
            return Err(parse_err(
                lno,
                format!("expected {order} coordinates and a value, found {} tokens", toks.len()),
            ));
        }
        let mut coord = Vec::with_capacity(order);
        for t in &toks[..order] {
            let raw = parse_usize(t, lno)?;
            if raw < base {
                return Err(parse_err(lno, format!("coordinate {raw} below base {base}")));
            }
            coord.push(raw - base);
        }
        if !dims.contains(&coord) {
            return Err(parse_err(
                lno,
                format!("coordinate {coord:?} out of range for dims {sizes:?}"),
            ));
        }
        let off = dims.offset(&coord);
        if let Some(first) = seen.insert(off, lno) {
            return Err(parse_err(
                lno,
                format!("duplicate coordinate (first seen on line {first})"),
            ));
        }
        let value = parse_f64(toks[order], lno)?;
        entries.push((coord, value));
    }
    ObservedTensor::new(dims, entries)
}

pub fn read_tensor(path: &Path) -> Result<ObservedTensor> {
    read_tensor_string(&fs::read_to_string(path)?)
}

// ---------------------------------------------------------------------------
// matrix files

pub fn write_matrix_string(m: &DenseMatrix) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "matrix {} {}", m.rows(), m.cols());
    for i in 0..m.rows() {
        let row: Vec<String> = m.row(i).iter().map(|&x| fmt_f64(x)).collect();
        let _ = writeln!(out, "{}", row.join(" "));
    }
    out
}

pub fn write_covariate_string(cov: &Covariate) -> String {
    match cov.mask() {
        None => write_matrix_string(&cov.matrix),
        Some(mask) => {
            let mut out = String::new();
            let _ = writeln!(
                out,
                "matrix-coo {} {} base=0",
                cov.matrix.rows(),
                cov.matrix.cols()
            );
            for &(i, j) in mask {
                let _ = writeln!(
                    out,
                    "{i} {j} {}",
                    fmt_f64(cov.matrix.at(i as usize, j as usize))
                );
            }
            out
        }
    }
}

pub fn write_covariate(path: &Path, cov: &Covariate) -> Result<()> {
    fs::write(path, write_covariate_string(cov))?;
    Ok(())
}

/// Read either the dense `matrix` format or the masked `matrix-coo` format.
pub fn read_covariate_string(text: &str) -> Result<Covariate> {
    let mut lines = Lines::new(text);
    let (hline, header) = lines.expect("matrix header")?;
    let toks: Vec<&str> = header.split_whitespace().collect();
    match toks.first() {
        Some(&"matrix") => {
            if toks.len() != 3 {
                return Err(parse_err(hline, "matrix header is `matrix <rows> <cols>`"));
            }
            let rows = parse_usize(toks[1], hline)?;
            let cols = parse_usize(toks[2], hline)?;
            let mut values = Vec::with_capacity(rows * cols);
            for _ in 0..rows {
                let (lno, line) = lines.expect("a matrix row")?;
                let toks: Vec<&str> = line.split_whitespace().collect();
                if toks.len() != cols {
                    return Err(parse_err(
                        lno,
                        format!("expected {cols} values in a row, found {}", toks.len()),
                    ));
                }
                for t in toks {
                    values.push(parse_f64(t, lno)?);
                }
            }
            if let Some((lno, _)) = lines.next() {
                return Err(parse_err(lno, "trailing content after the last matrix row"));
            }
            Ok(Covariate::full(DenseMatrix::new(rows, cols, values)?))
        }
        Some(&"matrix-coo") => {
            if toks.len() != 4 {
                return Err(parse_err(
                    hline,
                    "matrix-coo header is `matrix-coo <rows> <cols> base=<0|1>`",
                ));
            }
            let rows = parse_usize(toks[1], hline)?;
            let cols = parse_usize(toks[2], hline)?;
            let base = parse_base(toks[3], hline)?;
            let mut m = DenseMatrix::zeros(rows, cols);
            let mut mask = Vec::new();
            let mut seen = std::collections::HashMap::new();
            while let Some((lno, line)) = lines.next() {
                let toks: Vec<&str> = line.split_whitespace().collect();
                if toks.len() != 3 {
                    return Err(parse_err(lno, "expected `i j value`"));
                }
                let i = parse_usize(toks[0], lno)?;
                let j = parse_usize(toks[1], lno)?;
                if i < base || j < base {
                    return Err(parse_err(lno, format!("coordinate below base {base}")));
                }
                let (i, j) = (i - base, j - base);
                if i >= rows || j >= cols {
                    return Err(parse_err(
                        lno,
                        format!("coordinate ({i}, {j}) out of range for {rows}x{cols}"),
                    ));
                }
                if let Some(first) = seen.insert((i, j), lno) {
                    return Err(parse_err(
                        lno,
                        format!("duplicate coordinate (first seen on line {first})"),
                    ));
                }
                m.set(i, j, parse_f64(toks[2], lno)?);
                mask.push((i as u32, j as u32));
            }
            Covariate::masked(m, mask)
        }
        _ => Err(parse_err(hline, "expected a `matrix` or `matrix-coo` header")),
    }
}

pub fn read_covariate(path: &Path) -> Result<Covariate> {
    read_covariate_string(&fs::read_to_string(path)?)
}

// ---------------------------------------------------------------------------
// model files

/// A model plus optional fit provenance.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelRecord {
    pub model: CoupledModel,
    pub seed: Option<u64>,
    pub restart_index: Option<usize>,
    pub objective: Option<f64>,
}

impl ModelRecord {
    pub fn bare(model: CoupledModel) -> Self {
        ModelRecord {
            model,
            seed: None,
            restart_index: None,
            objective: None,
        }
    }

    pub fn from_fit(fit: &crate::solver::FitResult) -> Self {
        ModelRecord {
            model: fit.model.clone(),
            seed: Some(fit.seed),
            restart_index: Some(fit.restart_index),
            objective: Some(fit.final_objective()),
        }
    }
}

pub fn write_model_string(rec: &ModelRecord) -> String {
    let model = &rec.model;
    let rank = model.rank();
    let mut out = String::new();
    let _ = writeln!(out, "model");
    let _ = write!(out, "dims {}", model.order());
    for k in 0..model.order() {
        let _ = write!(out, " {}", model.cp.factor(k).rows());
    }
    let _ = writeln!(out);
    let _ = writeln!(out, "rank {rank}");
    if let (Some(seed), Some(restart)) = (rec.seed, rec.restart_index) {
        let _ = writeln!(out, "seed {seed} restart {restart}");
    }
    if let Some(obj) = rec.objective {
        let _ = writeln!(out, "objective {}", fmt_f64(obj));
    }
    let lambda: Vec<String> = model.cp.weights().iter().map(|&x| fmt_f64(x)).collect();
    let _ = writeln!(out, "lambda {}", lambda.join(" "));
    for k in 0..model.order() {
        let f = model.cp.factor(k);
        let _ = writeln!(out, "factor {k} rows {}", f.rows());
        for i in 0..f.rows() {
            let row: Vec<String> = (0..rank).map(|r| fmt_f64(f.col(r)[i])).collect();
            let _ = writeln!(out, "{}", row.join(" "));
        }
    }
    for k in 0..model.order() {
        if let Some(mf) = model.coupling(k) {
            let _ = writeln!(out, "coupling {k} width {}", mf.v.rows());
            let sigma: Vec<String> = mf.sigma.iter().map(|&x| fmt_f64(x)).collect();
            let _ = writeln!(out, "sigma {}", sigma.join(" "));
            for i in 0..mf.v.rows() {
                let row: Vec<String> = (0..rank).map(|r| fmt_f64(mf.v.col(r)[i])).collect();
                let _ = writeln!(out, "{}", row.join(" "));
            }
        }
    }
    let _ = writeln!(out, "end");
    out
}

pub fn write_model(path: &Path, rec: &ModelRecord) -> Result<()> {
    fs::write(path, write_model_string(rec))?;
    Ok(())
}

fn read_columns(lines: &mut Lines, rows: usize, rank: usize, what: &str) -> Result<Vec<Vec<f64>>> {
    let mut cols = vec![vec![0.0; rows]; rank];
    for i in 0..rows {
        let (lno, line) = lines.expect(what)?;
        let toks: Vec<&str> = line.split_whitespace().collect();
        if toks.len() != rank {
            return Err(parse_err(
                lno,
                format!("expected {rank} values in a {what} row, found {}", toks.len()),
            ));
        }
        for (r, t) in toks.iter().enumerate() {
            cols[r][i] = parse_f64(t, lno)?;
        }
    }
    Ok(cols)
}

pub fn read_model_string(text: &str) -> Result<ModelRecord> {
    let mut lines = Lines::new(text);
    let (hline, header) = lines.expect("model header")?;
    if header != "model" {
        return Err(parse_err(hline, "expected a `model` header"));
    }
    let (dline, dims_line) = lines.expect("dims")?;
    let toks: Vec<&str> = dims_line.split_whitespace().collect();
    if toks.first() != Some(&"dims") || toks.len() < 2 {
        return Err(parse_err(dline, "expected `dims <K> <n_1> … <n_K>`"));
    }
    let order = parse_usize(toks[1], dline)?;
    if toks.len() != order + 2 {
        return Err(parse_err(dline, format!("dims line needs {order} sizes")));
    }
    let sizes = toks[2..]
        .iter()
        .map(|t| parse_usize(t, dline))
        .collect::<Result<Vec<_>>>()?;

    let (rline, rank_line) = lines.expect("rank")?;
    let toks: Vec<&str> = rank_line.split_whitespace().collect();
    if toks.first() != Some(&"rank") || toks.len() != 2 {
        return Err(parse_err(rline, "expected `rank <R>`"));
    }
    let rank = parse_usize(toks[1], rline)?;

    let mut seed = None;
    let mut restart_index = None;
    let mut objective = None;
    let mut weights: Option<Vec<f64>> = None;
    let mut factors: Vec<Option<Factor>> = vec![None; order];
    let mut couplings: Vec<Option<MatrixFactor>> = vec![None; order];

    loop {
        let (lno, line) = lines.expect("a model section or `end`")?;
        let toks: Vec<&str> = line.split_whitespace().collect();
        match toks[0] {
            "end" => break,
            "seed" => {
                if toks.len() != 4 || toks[2] != "restart" {
                    return Err(parse_err(lno, "expected `seed <u64> restart <index>`"));
                }
                seed = Some(
                    toks[1]
                        .parse::<u64>()
                        .map_err(|_| parse_err(lno, "bad seed"))?,
                );
                restart_index = Some(parse_usize(toks[3], lno)?);
            }
            "objective" => {
                if toks.len() != 2 {
                    return Err(parse_err(lno, "expected `objective <value>`"));
                }
                objective = Some(parse_f64(toks[1], lno)?);
            }
            "lambda" => {
                if toks.len() != rank + 1 {
                    return Err(parse_err(lno, format!("lambda needs {rank} values")));
                }
                weights = Some(
                    toks[1..]
                        .iter()
                        .map(|t| parse_f64(t, lno))
                        .collect::<Result<Vec<_>>>()?,
                );
            }
            "factor" => {
                if toks.len() != 4 || toks[2] != "rows" {
                    return Err(parse_err(lno, "expected `factor <mode> rows <n>`"));
                }
                let mode = parse_usize(toks[1], lno)?;
                let rows = parse_usize(toks[3], lno)?;
                if mode >= order {
                    return Err(parse_err(lno, format!("factor mode {mode} out of range")));
                }
                if rows != sizes[mode] {
                    return Err(parse_err(
                        lno,
                        format!("factor {mode} declares {rows} rows, dims say {}", sizes[mode]),
                    ));
                }
                let cols = read_columns(&mut lines, rows, rank, "factor")?;
                factors[mode] = Some(Factor::new(rows, cols)?);
            }
            "coupling" => {
                if toks.len() != 4 || toks[2] != "width" {
                    return Err(parse_err(lno, "expected `coupling <mode> width <n_v>`"));
                }
                let mode = parse_usize(toks[1], lno)?;
                let width = parse_usize(toks[3], lno)?;
                if mode >= order {
                    return Err(parse_err(lno, format!("coupling mode {mode} out of range")));
                }
                let (slno, sigma_line) = lines.expect("sigma")?;
                let stoks: Vec<&str> = sigma_line.split_whitespace().collect();
                if stoks.first() != Some(&"sigma") || stoks.len() != rank + 1 {
                    return Err(parse_err(slno, format!("expected `sigma` with {rank} values")));
                }
                let sigma = stoks[1..]
                    .iter()
                    .map(|t| parse_f64(t, slno))
                    .collect::<Result<Vec<_>>>()?;
                let cols = read_columns(&mut lines, width, rank, "coupling")?;
                couplings[mode] = Some(MatrixFactor {
                    sigma,
                    v: Factor::new(width, cols)?,
                });
            }
            other => return Err(parse_err(lno, format!("unknown model section {other:?}"))),
        }
    }

    let weights = weights.ok_or_else(|| parse_err(0, "model file is missing `lambda`"))?;
    let factors = factors
        .into_iter()
        .enumerate()
        .map(|(k, f)| f.ok_or_else(|| parse_err(0, format!("model file is missing factor {k}"))))
        .collect::<Result<Vec<_>>>()?;
    let cp = CpFactors::new(weights, factors)?;
    let model = CoupledModel::new(cp, couplings)?;
    Ok(ModelRecord {
        model,
        seed,
        restart_index,
        objective,
    })
}

pub fn read_model(path: &Path) -> Result<ModelRecord> {
    read_model_string(&fs::read_to_string(path)?)
}

// ---------------------------------------------------------------------------
// coordinate lists

pub fn write_coords_string(order: usize, coords: &[Vec<usize>]) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "coords {order} base=0");
    for c in coords {
        let words: Vec<String> = c.iter().map(|x| x.to_string()).collect();
        let _ = writeln!(out, "{}", words.join(" "));
    }
    out
}

pub fn read_coords_string(text: &str) -> Result<Vec<Vec<usize>>> {
    let mut lines = Lines::new(text);
    let (hline, header) = lines.expect("coords header")?;
    let toks: Vec<&str> = header.split_whitespace().collect();
    if toks.first() != Some(&"coords") || toks.len() != 3 {
        return Err(parse_err(hline, "expected `coords <K> base=<0|1>`"));
    }
    let order = parse_usize(toks[1], hline)?;
    let base = parse_base(toks[2], hline)?;
    let mut out = Vec::new();
    while let Some((lno, line)) = lines.next() {
        let toks: Vec<&str> = line.split_whitespace().collect();
        if toks.len() != order {
            return Err(parse_err(lno, format!("expected {order} coordinates")));
        }
        let mut coord = Vec::with_capacity(order);
        for t in toks {
            let raw = parse_usize(t, lno)?;
            if raw < base {
                return Err(parse_err(lno, format!("coordinate {raw} below base {base}")));
            }
            coord.push(raw - base);
        }
        out.push(coord);
    }
    Ok(out)
}

pub fn read_coords(path: &Path) -> Result<Vec<Vec<usize>>> {
    read_coords_string(&fs::read_to_string(path)?)
}

// ---------------------------------------------------------------------------
// CSV outputs

/// `metric,value` rows for one evaluation report.
pub fn metrics_csv(report: &MetricsReport) -> String {
    let mut out = String::from("metric,value\n");
    let _ = writeln!(out, "tensor,{}", fmt_f64(report.tensor_error));
    for (k, e) in report.component_errors.iter().enumerate() {
        let _ = writeln!(out, "comp{k},{}", fmt_f64(*e));
    }
    let _ = writeln!(out, "weight,{}", fmt_f64(report.weight_error));
    out
}

fn scenario_key(sc: &Scenario) -> (String, String) {
    let dims: Vec<String> = sc.dims.iter().map(|n| n.to_string()).collect();
    let coupled: Vec<String> = sc
        .covariate_widths
        .iter()
        .enumerate()
        .filter_map(|(k, w)| w.map(|nv| format!("{k}:{nv}")))
        .collect();
    (
        dims.join("x"),
        if coupled.is_empty() {
            "-".into()
        } else {
            coupled.join(";")
        },
    )
}

pub const EXPERIMENT_CSV_HEADER: &str =
    "dims,coupled,rank,keep_frac,eta_t,eta_m,p,replicas,seed,method,metric,mean,stderr";

/// One row per method and metric, keyed by the scenario parameters.
pub fn experiment_csv(outcomes: &[ExperimentOutcome]) -> String {
    let mut out = String::from(EXPERIMENT_CSV_HEADER);
    out.push('\n');
    for oc in outcomes {
        let sc = &oc.scenario;
        let (dims, coupled) = scenario_key(sc);
        for row in oc.rows() {
            let _ = writeln!(
                out,
                "{dims},{coupled},{},{},{},{},{},{},{},{},{},{},{}",
                sc.rank,
                sc.keep_fraction,
                sc.eta_tensor,
                sc.eta_matrix,
                sc.reveal_prob,
                sc.replicas,
                sc.seed,
                row.method,
                row.metric,
                fmt_f64(row.mean),
                fmt_f64(row.stderr)
            );
        }
    }
    out
}

/// Gnuplot-friendly whitespace table: a `#`-commented header, then one row
/// per scenario with the mean and standard error of the tensor error for
/// each method (`nan` for a method that did not run).
pub fn experiment_plot_data(outcomes: &[ExperimentOutcome]) -> String {
    let mut out = String::from(
        "# d1 rank eta_t eta_m p tensor_coupled tensor_coupled_se tensor_uncoupled tensor_uncoupled_se\n",
    );
    for oc in outcomes {
        let sc = &oc.scenario;
        let rows = oc.rows();
        let pick = |method: &str| {
            rows.iter()
                .find(|r| r.method == method && r.metric == "tensor")
                .map(|r| (r.mean, r.stderr))
        };
        let (cm, cs) = pick("coupled").unwrap_or((f64::NAN, f64::NAN));
        let (um, us) = pick("uncoupled").unwrap_or((f64::NAN, f64::NAN));
        let _ = writeln!(
            out,
            "{} {} {} {} {} {} {} {} {}",
            sc.dims[0], sc.rank, sc.eta_tensor, sc.eta_matrix, sc.reveal_prob, cm, cs, um, us
        );
    }
    out
}

/// `stage,parameter,bic` rows from a tuning run.
pub fn tune_csv(outcome: &crate::tune::TuneOutcome) -> String {
    let mut out = String::from("stage,parameter,bic\n");
    for (rank, score) in &outcome.stage1 {
        let _ = writeln!(out, "rank,{rank},{}", fmt_f64(*score));
    }
    for (frac, score) in &outcome.stage2 {
        let _ = writeln!(out, "sparsity,{frac},{}", fmt_f64(*score));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{normal_vec, stream_rng};
    use crate::tensor::norm2;

    fn sample_obs(seed: u64) -> ObservedTensor {
        let mut rng = stream_rng(seed, &[1]);
        let dims = Dims::new(vec![3, 4, 2]).unwrap();
        let mut entries = Vec::new();
        for i in 0..3 {
            for j in 0..4 {
                if (i + j) % 2 == 0 {
                    entries.push((vec![i, j, 1], normal_vec(&mut rng, 1)[0]));
                }
            }
        }
        ObservedTensor::new(dims, entries).unwrap()
    }

    #[test]
    fn tensor_round_trip() {
        let obs = sample_obs(3);
        let text = write_tensor_string(&obs);
        let back = read_tensor_string(&text).unwrap();
        assert_eq!(obs, back);
    }

    #[test]
    fn tensor_base1_matches_base0() {
        let text0 = "tensor 2 2 2 base=0\n0 1 2.5\n1 0 -1.0\n";
        let text1 = "tensor 2 2 2 base=1\n1 2 2.5\n2 1 -1.0\n";
        assert_eq!(
            read_tensor_string(text0).unwrap(),
            read_tensor_string(text1).unwrap()
        );
    }

    #[test]
    fn tensor_errors_carry_line_numbers() {
        let text = "tensor 2 2 2 base=0\n0 1 1.0\n0 2 1.0\n";
        match read_tensor_string(text) {
            Err(Error::Parse { line, message }) => {
                assert_eq!(line, 3);
                assert!(message.contains("out of range"), "{message}");
            }
            other => panic!("expected a parse error, got {other:?}"),
        }
        let text = "tensor 2 2 2 base=0\n0 1 1.0\n0 1 2.0\n";
        match read_tensor_string(text) {
            Err(Error::Parse { line, message }) => {
                assert_eq!(line, 3);
                assert!(message.contains("duplicate"), "{message}");
            }
            other => panic!("expected a duplicate error, got {other:?}"),
        }
    }

    #[test]
    fn comments_and_blanks_are_ignored() {
        let text = "# observed entries\n\ntensor 2 2 2 base=0\n# first\n0 0 1.0\n";
        let obs = read_tensor_string(text).unwrap();
        assert_eq!(obs.len(), 1);
    }

    #[test]
    fn matrix_round_trips() {
        let mut rng = stream_rng(5, &[2]);
        let m = DenseMatrix::new(3, 4, normal_vec(&mut rng, 12)).unwrap();
        let cov = Covariate::full(m.clone());
        let back = read_covariate_string(&write_covariate_string(&cov)).unwrap();
        assert_eq!(cov, back);

        let masked = Covariate::masked(
            {
                let mut z = DenseMatrix::zeros(3, 4);
                z.set(0, 1, 2.25);
                z.set(2, 3, -0.5);
                z
            },
            vec![(0, 1), (2, 3)],
        )
        .unwrap();
        let back = read_covariate_string(&write_covariate_string(&masked)).unwrap();
        assert_eq!(masked, back);
    }

    #[test]
    fn model_round_trip_is_lossless() {
        let mut rng = stream_rng(9, &[3]);
        let unit = |mut v: Vec<f64>| {
            let n = norm2(&v);
            v.iter_mut().for_each(|x| *x /= n);
            v
        };
        let cp = CpFactors::new(
            vec![1.0 / 3.0, std::f64::consts::PI],
            vec![
                Factor::new(3, (0..2).map(|_| unit(normal_vec(&mut rng, 3))).collect()).unwrap(),
                Factor::new(4, (0..2).map(|_| unit(normal_vec(&mut rng, 4))).collect()).unwrap(),
                Factor::new(2, (0..2).map(|_| unit(normal_vec(&mut rng, 2))).collect()).unwrap(),
            ],
        )
        .unwrap();
        let v = Factor::new(5, (0..2).map(|_| unit(normal_vec(&mut rng, 5))).collect()).unwrap();
        let model = CoupledModel::new(
            cp,
            vec![Some(MatrixFactor { sigma: vec![0.1, 7.0], v }), None, None],
        )
        .unwrap();
        let rec = ModelRecord {
            model,
            seed: Some(42),
            restart_index: Some(3),
            objective: Some(1.2345678901234567e-9),
        };
        let text = write_model_string(&rec);
        let back = read_model_string(&text).unwrap();
        assert_eq!(rec, back);
    }

    #[test]
    fn coords_round_trip_and_base() {
        let coords = vec![vec![0, 1, 2], vec![1, 0, 0]];
        let text = write_coords_string(3, &coords);
        assert_eq!(read_coords_string(&text).unwrap(), coords);
        let text1 = "coords 3 base=1\n1 2 3\n2 1 1\n";
        assert_eq!(read_coords_string(text1).unwrap(), coords);
    }

    #[test]
    fn float_format_is_lossless() {
        for &x in &[
            0.1,
            -1.0 / 3.0,
            std::f64::consts::PI,
            1e-300,
            -2.2250738585072014e-308,
            98765.43210987654,
        ] {
            let s = fmt_f64(x);
            assert_eq!(s.parse::<f64>().unwrap(), x, "{s}");
        }
    }
}
