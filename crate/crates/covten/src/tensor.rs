//! Dense and coordinate-observed tensor kernels.
//!
//! The solver only ever touches observed coordinates, so observations are
//! stored as a lexicographically sorted COO list (flat `u32` coordinates plus
//! values). All contractions accumulate in storage order, which makes every
//! kernel bitwise-deterministic for a fixed input.

use crate::error::{Error, Result};

/// Tensor dimensions `(n_1, …, n_K)`, `K >= 2`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Dims(Vec<usize>);

impl Dims {
    pub fn new(sizes: Vec<usize>) -> Result<Self> {
        if sizes.len() < 2 {
            return Err(Error::Shape(format!(
                "tensor order must be >= 2, got {}",
                sizes.len()
            )));
        }
        if sizes.iter().any(|&n| n == 0) {
            return Err(Error::Shape(format!("zero-sized mode in {sizes:?}")));
        }
        Ok(Dims(sizes))
    }

    pub fn order(&self) -> usize {
        self.0.len()
    }

    pub fn size(&self, mode: usize) -> usize {
        self.0[mode]
    }

    pub fn sizes(&self) -> &[usize] {
        &self.0
    }

    /// Total number of entries, `prod(n_k)`.
    pub fn total(&self) -> usize {
        self.0.iter().product()
    }

    pub fn contains(&self, coord: &[usize]) -> bool {
        coord.len() == self.order() && coord.iter().zip(&self.0).all(|(&c, &n)| c < n)
    }

    /// Row-major flat offset of a coordinate.
    pub fn offset(&self, coord: &[usize]) -> usize {
        let mut off = 0;
        for (k, &c) in coord.iter().enumerate() {
            off = off * self.0[k] + c;
        }
        off
    }
}

/// Dense tensor in row-major order.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseTensor {
    dims: Dims,
    values: Vec<f64>,
}

impl DenseTensor {
    pub fn new(dims: Dims, values: Vec<f64>) -> Result<Self> {
        if values.len() != dims.total() {
            return Err(Error::Shape(format!(
                "dense tensor needs {} values for dims {:?}, got {}",
                dims.total(),
                dims.sizes(),
                values.len()
            )));
        }
        Ok(DenseTensor { dims, values })
    }

    pub fn zeros(dims: Dims) -> Self {
        let n = dims.total();
        DenseTensor {
            dims,
            values: vec![0.0; n],
        }
    }

    pub fn dims(&self) -> &Dims {
        &self.dims
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn at(&self, coord: &[usize]) -> f64 {
        self.values[self.dims.offset(coord)]
    }

    pub fn frobenius_norm(&self) -> f64 {
        sum_sq(&self.values).sqrt()
    }
}

/// Observed entries of a tensor: the mask and the values it reveals.
///
/// Coordinates are 0-based, stored flat (`len * order` u32 words), sorted
/// lexicographically, duplicates rejected at construction.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservedTensor {
    dims: Dims,
    coords: Vec<u32>,
    values: Vec<f64>,
}

impl ObservedTensor {
    pub fn new(dims: Dims, entries: Vec<(Vec<usize>, f64)>) -> Result<Self> {
        let order = dims.order();
        let mut indexed: Vec<(usize, &(Vec<usize>, f64))> = Vec::with_capacity(entries.len());
        for e in &entries {
            if !dims.contains(&e.0) {
                return Err(Error::CoordOutOfRange {
                    coord: e.0.clone(),
                    dims: dims.sizes().to_vec(),
                });
            }
            indexed.push((dims.offset(&e.0), e));
        }
        indexed.sort_by_key(|(off, _)| *off);
        for w in indexed.windows(2) {
            if w[0].0 == w[1].0 {
                return Err(Error::DuplicateCoordinate {
                    coord: w[0].1 .0.clone(),
                });
            }
        }
        let mut coords = Vec::with_capacity(entries.len() * order);
        let mut values = Vec::with_capacity(entries.len());
        for (_, (coord, value)) in indexed {
            coords.extend(coord.iter().map(|&c| c as u32));
            values.push(*value);
        }
        Ok(ObservedTensor {
            dims,
            coords,
            values,
        })
    }

    /// Build from pre-sorted flat parts. Callers guarantee ordering,
    /// uniqueness, and range; only cheap consistency is checked.
    pub(crate) fn from_sorted_parts(dims: Dims, coords: Vec<u32>, values: Vec<f64>) -> Self {
        debug_assert_eq!(coords.len(), values.len() * dims.order());
        ObservedTensor {
            dims,
            coords,
            values,
        }
    }

    pub fn dims(&self) -> &Dims {
        &self.dims
    }

    /// Number of observed entries.
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn coord(&self, entry: usize) -> &[u32] {
        let k = self.dims.order();
        &self.coords[entry * k..(entry + 1) * k]
    }

    pub fn value(&self, entry: usize) -> f64 {
        self.values[entry]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub(crate) fn flat_coords(&self) -> &[u32] {
        &self.coords
    }

    /// Iterate `(coord, value)` pairs in storage order.
    pub fn entries(&self) -> impl Iterator<Item = (&[u32], f64)> + '_ {
        let k = self.dims.order();
        self.coords
            .chunks_exact(k)
            .zip(self.values.iter().copied())
    }

    /// Same entry set with replaced values.
    pub(crate) fn with_values(&self, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), self.len());
        ObservedTensor {
            dims: self.dims.clone(),
            coords: self.coords.clone(),
            values,
        }
    }

    pub fn frobenius_norm(&self) -> f64 {
        sum_sq(&self.values).sqrt()
    }
}

/// Dense matrix in row-major order.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    values: Vec<f64>,
}

impl DenseMatrix {
    pub fn new(rows: usize, cols: usize, values: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::Shape(format!("zero-sized matrix {rows}x{cols}")));
        }
        if values.len() != rows * cols {
            return Err(Error::Shape(format!(
                "matrix {rows}x{cols} needs {} values, got {}",
                rows * cols,
                values.len()
            )));
        }
        Ok(DenseMatrix { rows, cols, values })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        DenseMatrix {
            rows,
            cols,
            values: vec![0.0; rows * cols],
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.cols + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.values[i * self.cols + j] = v;
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.cols..(i + 1) * self.cols]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    /// `M v`.
    pub fn matvec(&self, v: &[f64]) -> Result<Vec<f64>> {
        if v.len() != self.cols {
            return Err(Error::Shape(format!(
                "matvec length {} vs {} cols",
                v.len(),
                self.cols
            )));
        }
        Ok((0..self.rows)
            .map(|i| dot(self.row(i), v))
            .collect())
    }

    /// `M^T u`.
    pub fn tmatvec(&self, u: &[f64]) -> Result<Vec<f64>> {
        if u.len() != self.rows {
            return Err(Error::Shape(format!(
                "tmatvec length {} vs {} rows",
                u.len(),
                self.rows
            )));
        }
        let mut out = vec![0.0; self.cols];
        for i in 0..self.rows {
            let ui = u[i];
            for (o, &m) in out.iter_mut().zip(self.row(i)) {
                *o += ui * m;
            }
        }
        Ok(out)
    }

    /// `self -= scale * u v^T`.
    pub fn subtract_rank1(&mut self, scale: f64, u: &[f64], v: &[f64]) {
        debug_assert_eq!(u.len(), self.rows);
        debug_assert_eq!(v.len(), self.cols);
        for i in 0..self.rows {
            let s = scale * u[i];
            let row = &mut self.values[i * self.cols..(i + 1) * self.cols];
            for (r, &vj) in row.iter_mut().zip(v) {
                *r -= s * vj;
            }
        }
    }

    pub fn frobenius_norm(&self) -> f64 {
        sum_sq(&self.values).sqrt()
    }
}

/// A covariate matrix, optionally observed only on a coordinate mask.
#[derive(Debug, Clone, PartialEq)]
pub struct Covariate {
    pub matrix: DenseMatrix,
    /// Sorted (row, col) pairs of the observed set; `None` = fully observed.
    mask: Option<Vec<(u32, u32)>>,
}

impl Covariate {
    pub fn full(matrix: DenseMatrix) -> Self {
        Covariate { matrix, mask: None }
    }

    pub fn masked(matrix: DenseMatrix, mut mask: Vec<(u32, u32)>) -> Result<Self> {
        mask.sort_unstable();
        for w in mask.windows(2) {
            if w[0] == w[1] {
                return Err(Error::DuplicateCoordinate {
                    coord: vec![w[0].0 as usize, w[0].1 as usize],
                });
            }
        }
        if let Some(&(i, j)) = mask.last() {
            if i as usize >= matrix.rows() || j as usize >= matrix.cols() {
                return Err(Error::CoordOutOfRange {
                    coord: vec![i as usize, j as usize],
                    dims: vec![matrix.rows(), matrix.cols()],
                });
            }
        }
        Ok(Covariate {
            matrix,
            mask: Some(mask),
        })
    }

    pub fn is_masked(&self) -> bool {
        self.mask.is_some()
    }

    pub fn mask(&self) -> Option<&[(u32, u32)]> {
        self.mask.as_deref()
    }

    /// Per-row sum of `w[j]^2` over observed columns of that row.
    pub fn rowwise_masked_sumsq(&self, w: &[f64]) -> Vec<f64> {
        match &self.mask {
            None => {
                let s = sum_sq(w);
                vec![s; self.matrix.rows()]
            }
            Some(mask) => {
                let mut out = vec![0.0; self.matrix.rows()];
                for &(i, j) in mask {
                    out[i as usize] += w[j as usize] * w[j as usize];
                }
                out
            }
        }
    }

    /// Per-column sum of `w[i]^2` over observed rows of that column.
    pub fn colwise_masked_sumsq(&self, w: &[f64]) -> Vec<f64> {
        match &self.mask {
            None => {
                let s = sum_sq(w);
                vec![s; self.matrix.cols()]
            }
            Some(mask) => {
                let mut out = vec![0.0; self.matrix.cols()];
                for &(i, j) in mask {
                    out[j as usize] += w[i as usize] * w[i as usize];
                }
                out
            }
        }
    }
}

/// Keep the dense values at the mask's coordinates.
///
/// The mask is the entry set of `mask` (its values are ignored); re-projecting
/// the result with the same mask reproduces it.
pub fn project(mask: &ObservedTensor, dense: &DenseTensor) -> Result<ObservedTensor> {
    if mask.dims() != dense.dims() {
        return Err(Error::Shape(format!(
            "project: mask dims {:?} vs dense dims {:?}",
            mask.dims().sizes(),
            dense.dims().sizes()
        )));
    }
    let values = mask
        .entries()
        .map(|(coord, _)| {
            let c: Vec<usize> = coord.iter().map(|&x| x as usize).collect();
            dense.at(&c)
        })
        .collect();
    Ok(mask.with_values(values))
}

fn check_fixed(dims: &Dims, fixed: &[&[f64]], free_mode: usize) -> Result<()> {
    let order = dims.order();
    if free_mode >= order {
        return Err(Error::ModeOutOfRange {
            mode: free_mode,
            order,
        });
    }
    if fixed.len() != order {
        return Err(Error::Shape(format!(
            "need one fixed slot per mode ({order}), got {}",
            fixed.len()
        )));
    }
    for (k, f) in fixed.iter().enumerate() {
        if k != free_mode && f.len() != dims.size(k) {
            return Err(Error::Shape(format!(
                "fixed vector for mode {k} has length {}, mode size is {}",
                f.len(),
                dims.size(k)
            )));
        }
    }
    Ok(())
}

/// Kernel shared by [`masked_contract`] and the residual-valued variant.
pub(crate) fn contract_coords(
    dims: &Dims,
    coords: &[u32],
    values: &[f64],
    fixed: &[&[f64]],
    free_mode: usize,
) -> Vec<f64> {
    let order = dims.order();
    let mut out = vec![0.0; dims.size(free_mode)];
    for (coord, &v) in coords.chunks_exact(order).zip(values) {
        let mut w = v;
        for (k, &c) in coord.iter().enumerate() {
            if k != free_mode {
                w *= fixed[k][c as usize];
            }
        }
        out[coord[free_mode] as usize] += w;
    }
    out
}

/// Contract an observed tensor against one fixed vector per mode, leaving
/// `free_mode` open: component `i` sums `value * prod(fixed)` over observed
/// entries whose free-mode index is `i`. `fixed[free_mode]` is ignored.
pub fn masked_contract(
    obs: &ObservedTensor,
    fixed: &[&[f64]],
    free_mode: usize,
) -> Result<Vec<f64>> {
    check_fixed(obs.dims(), fixed, free_mode)?;
    Ok(contract_coords(
        obs.dims(),
        &obs.coords,
        &obs.values,
        fixed,
        free_mode,
    ))
}

pub(crate) fn weight_coords(
    dims: &Dims,
    coords: &[u32],
    fixed: &[&[f64]],
    free_mode: usize,
) -> Vec<f64> {
    let order = dims.order();
    let mut out = vec![0.0; dims.size(free_mode)];
    for coord in coords.chunks_exact(order) {
        let mut w = 1.0;
        for (k, &c) in coord.iter().enumerate() {
            if k != free_mode {
                let f = fixed[k][c as usize];
                w *= f * f;
            }
        }
        out[coord[free_mode] as usize] += w;
    }
    out
}

/// Like [`masked_contract`] on an all-ones observation with the fixed
/// vectors squared entry-wise: the elementwise denominator of the masked
/// least-squares updates. Componentwise nonnegative.
pub fn masked_weight(obs: &ObservedTensor, fixed: &[&[f64]], free_mode: usize) -> Result<Vec<f64>> {
    check_fixed(obs.dims(), fixed, free_mode)?;
    Ok(weight_coords(obs.dims(), &obs.coords, fixed, free_mode))
}

/// Unmasked analogue of [`masked_contract`]; agrees with it under a full mask.
pub fn dense_contract(t: &DenseTensor, fixed: &[&[f64]], free_mode: usize) -> Result<Vec<f64>> {
    check_fixed(t.dims(), fixed, free_mode)?;
    let order = t.dims().order();
    let sizes = t.dims().sizes();
    let mut out = vec![0.0; sizes[free_mode]];
    let mut coord = vec![0usize; order];
    for &v in t.values() {
        let mut w = v;
        for (k, &c) in coord.iter().enumerate() {
            if k != free_mode {
                w *= fixed[k][c];
            }
        }
        out[coord[free_mode]] += w;
        // row-major odometer
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

pub(crate) fn sum_sq(xs: &[f64]) -> f64 {
    xs.iter().map(|x| x * x).sum()
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Euclidean norm.
pub fn norm2(xs: &[f64]) -> f64 {
    sum_sq(xs).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{normal_vec, stream_rng};
    use approx::assert_relative_eq;

    fn dims(sizes: &[usize]) -> Dims {
        Dims::new(sizes.to_vec()).unwrap()
    }

    fn full_mask(d: &Dims) -> ObservedTensor {
        let mut entries = Vec::new();
        let sizes = d.sizes();
        let mut coord = vec![0usize; d.order()];
        for _ in 0..d.total() {
            entries.push((coord.clone(), 1.0));
            for k in (0..d.order()).rev() {
                coord[k] += 1;
                if coord[k] < sizes[k] {
                    break;
                }
                coord[k] = 0;
            }
        }
        ObservedTensor::new(d.clone(), entries).unwrap()
    }

    fn random_dense(d: &Dims, seed: u64) -> DenseTensor {
        let mut rng = stream_rng(seed, &[99]);
        DenseTensor::new(d.clone(), normal_vec(&mut rng, d.total())).unwrap()
    }

    #[test]
    fn dims_rejects_bad_shapes() {
        assert!(Dims::new(vec![3]).is_err());
        assert!(Dims::new(vec![3, 0]).is_err());
        assert!(Dims::new(vec![2, 2]).is_ok());
    }

    #[test]
    fn observed_rejects_out_of_range_and_duplicates() {
        let d = dims(&[2, 2, 2]);
        let err = ObservedTensor::new(d.clone(), vec![(vec![0, 0, 2], 1.0)]);
        assert!(matches!(err, Err(Error::CoordOutOfRange { .. })));
        let err = ObservedTensor::new(
            d,
            vec![(vec![0, 1, 0], 1.0), (vec![0, 1, 0], 2.0)],
        );
        assert!(matches!(err, Err(Error::DuplicateCoordinate { .. })));
    }

    #[test]
    fn observed_sorts_lexicographically() {
        let d = dims(&[2, 2]);
        let obs = ObservedTensor::new(
            d,
            vec![(vec![1, 1], 4.0), (vec![0, 1], 2.0), (vec![1, 0], 3.0)],
        )
        .unwrap();
        let coords: Vec<Vec<u32>> = obs.entries().map(|(c, _)| c.to_vec()).collect();
        assert_eq!(coords, vec![vec![0, 1], vec![1, 0], vec![1, 1]]);
        assert_eq!(obs.values(), &[2.0, 3.0, 4.0]);
    }

    #[test]
    fn project_full_empty_and_partial() {
        let d = dims(&[2, 2, 2]);
        let dense = random_dense(&d, 1);
        let full = full_mask(&d);
        let proj = project(&full, &dense).unwrap();
        assert_eq!(proj.values(), dense.values());

        let empty = ObservedTensor::new(d.clone(), vec![]).unwrap();
        assert_eq!(project(&empty, &dense).unwrap().len(), 0);

        let mask = ObservedTensor::new(
            d,
            vec![
                (vec![0, 0, 0], 0.0),
                (vec![1, 0, 1], 0.0),
                (vec![1, 1, 1], 0.0),
            ],
        )
        .unwrap();
        let proj = project(&mask, &dense).unwrap();
        assert_eq!(proj.len(), 3);
        assert_eq!(proj.value(0), dense.at(&[0, 0, 0]));
        assert_eq!(proj.value(1), dense.at(&[1, 0, 1]));
        assert_eq!(proj.value(2), dense.at(&[1, 1, 1]));
        // idempotent under re-projection
        let dense_back = {
            let mut z = DenseTensor::zeros(proj.dims().clone());
            for (c, v) in proj.entries() {
                let cc: Vec<usize> = c.iter().map(|&x| x as usize).collect();
                let off = z.dims().offset(&cc);
                z.values_mut()[off] = v;
            }
            z
        };
        let again = project(&proj, &dense_back).unwrap();
        assert_eq!(again.values(), proj.values());
    }

    #[test]
    fn masked_contract_all_ones_cube() {
        let d = dims(&[2, 2, 2]);
        let obs = full_mask(&d);
        let b = [1.0, 0.0];
        let c = [1.0, 0.0];
        let out = masked_contract(&obs, &[&[], &b, &c], 0).unwrap();
        assert_eq!(out, vec![1.0, 1.0]);
    }

    #[test]
    fn masked_contract_empty_is_zero() {
        let d = dims(&[2, 3, 2]);
        let obs = ObservedTensor::new(d, vec![]).unwrap();
        let b = [1.0, 1.0, 1.0];
        let c = [1.0, 1.0];
        let out = masked_contract(&obs, &[&[], &b, &c], 0).unwrap();
        assert_eq!(out, vec![0.0, 0.0]);
    }

    #[test]
    fn masked_contract_rank1_identity() {
        // T = lambda a (x) b (x) c fully observed; contracting with unit b, c
        // along modes 1 and 2 returns lambda * a.
        let d = dims(&[3, 4, 5]);
        let mut rng = stream_rng(5, &[1]);
        let mut a = normal_vec(&mut rng, 3);
        let mut b = normal_vec(&mut rng, 4);
        let mut c = normal_vec(&mut rng, 5);
        for v in [&mut a, &mut b, &mut c] {
            let n = norm2(v);
            v.iter_mut().for_each(|x| *x /= n);
        }
        let lambda = 2.5;
        let mut entries = Vec::new();
        for i in 0..3 {
            for j in 0..4 {
                for k in 0..5 {
                    entries.push((vec![i, j, k], lambda * a[i] * b[j] * c[k]));
                }
            }
        }
        let obs = ObservedTensor::new(d, entries).unwrap();
        let out = masked_contract(&obs, &[&[], &b, &c], 0).unwrap();
        for (o, &ai) in out.iter().zip(&a) {
            assert_relative_eq!(*o, lambda * ai, max_relative = 1e-12);
        }
    }

    #[test]
    fn masked_weight_examples() {
        let d = dims(&[2, 2, 2]);
        let obs = full_mask(&d);
        let b = [1.0, 0.0];
        let c = [1.0, 0.0];
        let out = masked_weight(&obs, &[&[], &b, &c], 0).unwrap();
        assert_eq!(out, vec![1.0, 1.0]);

        let empty = ObservedTensor::new(dims(&[2, 2, 2]), vec![]).unwrap();
        let out = masked_weight(&empty, &[&[], &b, &c], 0).unwrap();
        assert_eq!(out, vec![0.0, 0.0]);

        // full observation with unit fixed vectors: every component is 1
        let b = [0.6, 0.8];
        let c = [0.8, -0.6];
        let out = masked_weight(&obs, &[&[], &b, &c], 0).unwrap();
        for o in out {
            assert_relative_eq!(o, 1.0, max_relative = 1e-12);
        }
    }

    #[test]
    fn masked_weight_nonnegative() {
        let d = dims(&[3, 3, 3]);
        let mut rng = stream_rng(11, &[4]);
        let mut entries = Vec::new();
        for i in 0..3 {
            for j in 0..3 {
                for k in 0..3 {
                    if (i + j + k) % 2 == 0 {
                        entries.push((vec![i, j, k], normal_vec(&mut rng, 1)[0]));
                    }
                }
            }
        }
        let obs = ObservedTensor::new(d, entries).unwrap();
        let b = normal_vec(&mut rng, 3);
        let c = normal_vec(&mut rng, 3);
        for mode in 0..3 {
            let out = masked_weight(&obs, &[&b, &b, &c], mode).unwrap();
            assert!(out.iter().all(|&x| x >= 0.0));
        }
    }

    #[test]
    fn dense_contract_zero_and_diagonal() {
        let d = dims(&[3, 3, 3]);
        let z = DenseTensor::zeros(d.clone());
        let e1 = [1.0, 0.0, 0.0];
        let out = dense_contract(&z, &[&[], &e1, &e1], 0).unwrap();
        assert_eq!(out, vec![0.0; 3]);

        let mut t = DenseTensor::zeros(d);
        for i in 0..3 {
            let off = t.dims().offset(&[i, i, i]);
            t.values_mut()[off] = 1.0;
        }
        let out = dense_contract(&t, &[&[], &e1, &e1], 0).unwrap();
        assert_eq!(out, vec![1.0, 0.0, 0.0]);
    }

    #[test]
    fn dense_agrees_with_masked_under_full_mask() {
        let d = dims(&[3, 3, 3]);
        let dense = random_dense(&d, 3);
        let obs = project(&full_mask(&d), &dense).unwrap();
        let mut rng = stream_rng(3, &[7]);
        let u = normal_vec(&mut rng, 3);
        let v = normal_vec(&mut rng, 3);
        let w = normal_vec(&mut rng, 3);
        for mode in 0..3 {
            let a = dense_contract(&dense, &[&u, &v, &w], mode).unwrap();
            let b = masked_contract(&obs, &[&u, &v, &w], mode).unwrap();
            for (x, y) in a.iter().zip(&b) {
                assert_relative_eq!(*x, *y, max_relative = 1e-12);
            }
        }
    }

    #[test]
    fn masked_contract_is_linear_in_fixed_vectors() {
        let d = dims(&[4, 3, 3]);
        let dense = random_dense(&d, 17);
        let obs = project(&full_mask(&d), &dense).unwrap();
        let mut rng = stream_rng(17, &[8]);
        let u = normal_vec(&mut rng, 3);
        let w = normal_vec(&mut rng, 3);
        let c = normal_vec(&mut rng, 3);
        let (alpha, beta) = (0.3, -1.7);
        let mixed: Vec<f64> = u.iter().zip(&w).map(|(a, b)| alpha * a + beta * b).collect();
        let lhs = masked_contract(&obs, &[&[], &mixed, &c], 0).unwrap();
        let ru = masked_contract(&obs, &[&[], &u, &c], 0).unwrap();
        let rw = masked_contract(&obs, &[&[], &w, &c], 0).unwrap();
        for ((l, a), b) in lhs.iter().zip(&ru).zip(&rw) {
            assert_relative_eq!(*l, alpha * a + beta * b, max_relative = 1e-12);
        }
    }

    #[test]
    fn contraction_shape_errors() {
        let d = dims(&[2, 2, 2]);
        let obs = full_mask(&d);
        let b = [1.0, 0.0];
        assert!(matches!(
            masked_contract(&obs, &[&[], &b, &b], 3),
            Err(Error::ModeOutOfRange { .. })
        ));
        let short = [1.0];
        assert!(masked_contract(&obs, &[&[], &short, &b], 0).is_err());
    }

    #[test]
    fn norms() {
        let d = dims(&[2, 2]);
        assert_eq!(DenseTensor::zeros(d.clone()).frobenius_norm(), 0.0);
        let single = ObservedTensor::new(d.clone(), vec![(vec![0, 1], 3.0)]).unwrap();
        assert_eq!(single.frobenius_norm(), 3.0);
        let m = DenseMatrix::new(2, 2, vec![1.0, 1.0, 1.0, 1.0]).unwrap();
        assert_eq!(m.frobenius_norm(), 2.0);
    }

    #[test]
    fn matrix_vec_products() {
        let m = DenseMatrix::new(2, 3, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        assert_eq!(m.matvec(&[1.0, 0.0, -1.0]).unwrap(), vec![-2.0, -2.0]);
        assert_eq!(m.tmatvec(&[1.0, 1.0]).unwrap(), vec![5.0, 7.0, 9.0]);
        assert!(m.matvec(&[1.0]).is_err());
    }

    #[test]
    fn covariate_masked_sums() {
        let m = DenseMatrix::new(2, 3, vec![0.0; 6]).unwrap();
        let cov = Covariate::masked(m.clone(), vec![(0, 0), (0, 2), (1, 1)]).unwrap();
        let w = [2.0, 3.0, 4.0];
        assert_eq!(cov.rowwise_masked_sumsq(&w), vec![20.0, 9.0]);
        let u = [2.0, 3.0];
        assert_eq!(cov.colwise_masked_sumsq(&u), vec![4.0, 9.0, 4.0]);
        let full = Covariate::full(m);
        assert_eq!(full.rowwise_masked_sumsq(&w), vec![29.0, 29.0]);
    }
}
