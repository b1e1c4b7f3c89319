//! Finite-domain probability primitives.
//!
//! Every quantity here is in bits. Values are immutable after construction.
//! `0 · log 0` is taken as `0`; positive mass on an impossible entry yields
//! `f64::INFINITY` (never NaN).

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// Sums within this distance of 1 are accepted as-is.
pub const NORMALIZATION_TOLERANCE: f64 = 1e-12;

/// Sums within this distance of 1 are silently renormalized; anything
/// further off is rejected.
pub const RENORMALIZE_TOLERANCE: f64 = 1e-9;

fn check_normalized(values: &mut [f64], what: &str) -> Result<()> {
    if values.is_empty() {
        return Err(Error::Dimension(format!("{what} is empty")));
    }
    if let Some(v) = values.iter().find(|v| !v.is_finite() || **v < 0.0) {
        return Err(Error::Normalization(format!("{what} has invalid entry {v}")));
    }
    let sum: f64 = values.iter().sum();
    let dev = (sum - 1.0).abs();
    if dev > RENORMALIZE_TOLERANCE {
        return Err(Error::Normalization(format!("{what} sums to {sum}")));
    }
    if dev > NORMALIZATION_TOLERANCE {
        values.iter_mut().for_each(|v| *v /= sum);
    }
    Ok(())
}

/// `p · log2 q` with the conventions used throughout the crate.
#[inline]
pub(crate) fn plogq(p: f64, q: f64) -> f64 {
    if p == 0.0 {
        0.0
    } else if q == 0.0 {
        f64::NEG_INFINITY
    } else {
        p * q.log2()
    }
}

/// A normalized probability vector over `0..n`.
#[derive(Debug, Clone, PartialEq)]
pub struct Categorical {
    probs: Vec<f64>,
}

impl Categorical {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        let mut probs = probs;
        check_normalized(&mut probs, "categorical")?;
        Ok(Self { probs })
    }

    /// Normalizes a non-negative weight vector. Fails on an all-zero vector.
    pub fn from_weights(weights: &[f64]) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::Dimension("categorical is empty".into()));
        }
        if let Some(v) = weights.iter().find(|v| !v.is_finite() || **v < 0.0) {
            return Err(Error::Normalization(format!("weight {v}")));
        }
        let sum: f64 = weights.iter().sum();
        if sum <= 0.0 {
            return Err(Error::Normalization("all weights are zero".into()));
        }
        Ok(Self {
            probs: weights.iter().map(|w| w / sum).collect(),
        })
    }

    pub fn uniform(n: usize) -> Self {
        assert!(n > 0, "uniform over an empty domain");
        Self {
            probs: vec![1.0 / n as f64; n],
        }
    }

    pub fn one_hot(n: usize, index: usize) -> Self {
        PointMass::new(index, n)
            .expect("one-hot index out of range")
            .to_categorical()
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.probs
    }

    /// Lowest index attaining the maximum probability.
    pub fn argmax(&self) -> usize {
        argmax_lowest(&self.probs)
    }

    pub fn entropy(&self) -> f64 {
        entropy(self)
    }
}

impl Serialize for Categorical {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.probs.serialize(s)
    }
}

impl<'de> Deserialize<'de> for Categorical {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let probs = Vec::<f64>::deserialize(d)?;
        Categorical::new(probs).map_err(serde::de::Error::custom)
    }
}

/// Index of the first maximal entry; ties go to the lowest index.
pub fn argmax_lowest(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate().skip(1) {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

/// A Kronecker delta belief at `index` over a domain of `size` values.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PointMass {
    index: usize,
    size: usize,
}

impl PointMass {
    pub fn new(index: usize, size: usize) -> Result<Self> {
        if index >= size {
            return Err(Error::Dimension(format!(
                "point mass at {index} outside domain of size {size}"
            )));
        }
        Ok(Self { index, size })
    }

    pub fn index(&self) -> usize {
        self.index
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn to_categorical(&self) -> Categorical {
        let mut probs = vec![0.0; self.size];
        probs[self.index] = 1.0;
        Categorical { probs }
    }
}

/// A matrix whose column `j` is a conditional distribution over rows.
///
/// Stored row-major; `get(i, j)` is `p(row = i | column = j)`.
#[derive(Debug, Clone, PartialEq)]
pub struct StochasticMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl StochasticMatrix {
    /// Builds from row-major rows, validating (and if needed renormalizing)
    /// every column.
    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let n_rows = rows.len();
        if n_rows == 0 {
            return Err(Error::Dimension("matrix has no rows".into()));
        }
        let n_cols = rows[0].len();
        if n_cols == 0 || rows.iter().any(|r| r.len() != n_cols) {
            return Err(Error::Dimension("ragged or empty matrix rows".into()));
        }
        let data: Vec<f64> = rows.into_iter().flatten().collect();
        Self::from_row_major(n_rows, n_cols, data)
    }

    pub fn from_row_major(rows: usize, cols: usize, mut data: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 || data.len() != rows * cols {
            return Err(Error::Dimension(format!(
                "{} entries for a {rows}x{cols} matrix",
                data.len()
            )));
        }
        for j in 0..cols {
            let mut col: Vec<f64> = (0..rows).map(|i| data[i * cols + j]).collect();
            check_normalized(&mut col, &format!("column {j}"))?;
            for (i, v) in col.into_iter().enumerate() {
                data[i * cols + j] = v;
            }
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_columns(columns: &[Categorical]) -> Result<Self> {
        let cols = columns.len();
        if cols == 0 {
            return Err(Error::Dimension("no columns".into()));
        }
        let rows = columns[0].len();
        if columns.iter().any(|c| c.len() != rows) {
            return Err(Error::Dimension("columns differ in length".into()));
        }
        let mut data = vec![0.0; rows * cols];
        for (j, c) in columns.iter().enumerate() {
            for (i, p) in c.probs().iter().enumerate() {
                data[i * cols + j] = *p;
            }
        }
        Ok(Self { rows, cols, data })
    }

    pub fn identity(n: usize) -> Self {
        let mut data = vec![0.0; n * n];
        for i in 0..n {
            data[i * n + i] = 1.0;
        }
        Self { rows: n, cols: n, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.cols + col]
    }

    pub fn row(&self, row: usize) -> &[f64] {
        &self.data[row * self.cols..(row + 1) * self.cols]
    }

    pub fn column(&self, col: usize) -> Categorical {
        Categorical {
            probs: (0..self.rows).map(|i| self.get(i, col)).collect(),
        }
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        self.data.chunks(self.cols).map(<[f64]>::to_vec).collect()
    }

    /// `M · v`, mapping a vector over columns to a vector over rows.
    pub fn mul_vec(&self, v: &[f64]) -> Vec<f64> {
        debug_assert_eq!(v.len(), self.cols);
        self.data
            .chunks(self.cols)
            .map(|row| row.iter().zip(v).map(|(m, x)| m * x).sum())
            .collect()
    }

    /// `Mᵀ · v`, mapping a vector over rows to a vector over columns.
    pub fn tmul_vec(&self, v: &[f64]) -> Vec<f64> {
        debug_assert_eq!(v.len(), self.rows);
        let mut out = vec![0.0; self.cols];
        for (row, x) in self.data.chunks(self.cols).zip(v) {
            if *x == 0.0 {
                continue;
            }
            for (o, m) in out.iter_mut().zip(row) {
                *o += m * x;
            }
        }
        out
    }

    /// Predictive distribution over rows for a column belief.
    pub fn predict(&self, p: &Categorical) -> Result<Categorical> {
        if p.len() != self.cols {
            return Err(Error::Dimension(format!(
                "belief of length {} against {} columns",
                p.len(),
                self.cols
            )));
        }
        Categorical::new(self.mul_vec(p.probs()))
    }

    /// Kronecker product `self ⊗ other`; the left factor is the major index.
    pub fn kron(&self, other: &StochasticMatrix) -> StochasticMatrix {
        let rows = self.rows * other.rows;
        let cols = self.cols * other.cols;
        let mut data = vec![0.0; rows * cols];
        for i in 0..self.rows {
            for j in 0..self.cols {
                let a = self.get(i, j);
                if a == 0.0 {
                    continue;
                }
                for k in 0..other.rows {
                    for l in 0..other.cols {
                        let r = i * other.rows + k;
                        let c = j * other.cols + l;
                        data[r * cols + c] = a * other.get(k, l);
                    }
                }
            }
        }
        StochasticMatrix { rows, cols, data }
    }
}

impl Serialize for StochasticMatrix {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.to_rows().serialize(s)
    }
}

impl<'de> Deserialize<'de> for StochasticMatrix {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let rows = Vec::<Vec<f64>>::deserialize(d)?;
        StochasticMatrix::from_rows(rows).map_err(serde::de::Error::custom)
    }
}

/// Shannon entropy in bits.
pub fn entropy(p: &Categorical) -> f64 {
    -p.probs.iter().map(|&x| plogq(x, x)).sum::<f64>()
}

/// `KL(p ‖ q)` in bits; `+∞` when `p` puts mass where `q` has none.
pub fn kl_divergence(p: &Categorical, q: &Categorical) -> Result<f64> {
    if p.len() != q.len() {
        return Err(Error::Dimension(format!(
            "KL between lengths {} and {}",
            p.len(),
            q.len()
        )));
    }
    let mut total = 0.0;
    for (&a, &b) in p.probs.iter().zip(&q.probs) {
        if a == 0.0 {
            continue;
        }
        if b == 0.0 {
            return Ok(f64::INFINITY);
        }
        total += a * (a / b).log2();
    }
    // rounding can push identical inputs a hair below zero
    Ok(total.max(0.0))
}

/// `σ(s)_i = exp(s_i) / Σ_j exp(s_j)`, stabilized by subtracting `max(s)`.
pub fn softmax(s: &[f64]) -> Result<Categorical> {
    if s.is_empty() {
        return Err(Error::Dimension("softmax of an empty vector".into()));
    }
    if s.iter().any(|v| !v.is_finite()) {
        return Err(Error::Normalization("softmax of a non-finite entry".into()));
    }
    let max = s.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = s.iter().map(|v| (v - max).exp()).collect();
    Categorical::from_weights(&exps)
}

/// `out[i·len(w) + j] = v_i · w_j`.
pub fn kronecker(v: &[f64], w: &[f64]) -> Vec<f64> {
    v.iter().flat_map(|a| w.iter().map(move |b| a * b)).collect()
}

/// Block-diagonal concatenation.
pub fn direct_sum(blocks: &[StochasticMatrix]) -> Result<StochasticMatrix> {
    if blocks.is_empty() {
        return Err(Error::Dimension("direct sum of no blocks".into()));
    }
    let rows: usize = blocks.iter().map(|b| b.rows).sum();
    let cols: usize = blocks.iter().map(|b| b.cols).sum();
    let mut data = vec![0.0; rows * cols];
    let (mut r0, mut c0) = (0, 0);
    for b in blocks {
        for i in 0..b.rows {
            for j in 0..b.cols {
                data[(r0 + i) * cols + c0 + j] = b.get(i, j);
            }
        }
        r0 += b.rows;
        c0 += b.cols;
    }
    Ok(StochasticMatrix { rows, cols, data })
}
