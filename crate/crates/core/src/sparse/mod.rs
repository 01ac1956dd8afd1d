//! Compressed sparse row storage, deterministic assembly and a sparse direct solver.

mod lu;
mod ordering;

use std::io::Write;

use nalgebra::DMatrix;

use crate::error::{Error, Result};

pub use lu::{lu_factor, lu_factor_grouped, solve, LuFactors};
pub use ordering::nested_dissection;

#[derive(Clone, Debug, PartialEq)]
pub struct CsrMatrix {
    rows: usize,
    cols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

/// One block of [`CsrMatrix::from_blocks`]: `scale * matrix` (or its transpose)
/// placed with its top-left corner at `(row, col)`.
#[derive(Clone, Copy, Debug)]
pub struct Block<'a> {
    pub row: usize,
    pub col: usize,
    pub matrix: &'a CsrMatrix,
    pub scale: f64,
    pub transpose: bool,
}

impl<'a> Block<'a> {
    pub fn new(row: usize, col: usize, matrix: &'a CsrMatrix, scale: f64) -> Self {
        Block {
            row,
            col,
            matrix,
            scale,
            transpose: false,
        }
    }

    pub fn transposed(row: usize, col: usize, matrix: &'a CsrMatrix, scale: f64) -> Self {
        Block {
            row,
            col,
            matrix,
            scale,
            transpose: true,
        }
    }
}

/// Sums duplicate `(i, j)` entries. Entries of one position are added in
/// ascending value order, so the result is bitwise independent of the order
/// in which the triplets arrive.
pub fn assemble_csr(
    rows: usize,
    cols: usize,
    triplets: impl IntoIterator<Item = (usize, usize, f64)>,
) -> Result<CsrMatrix> {
    let triplets: Vec<(usize, usize, f64)> = triplets.into_iter().collect();
    let mut count = vec![0usize; rows + 1];
    for &(i, j, v) in &triplets {
        if i >= rows || j >= cols {
            return Err(Error::invalid(format!(
                "triplet ({i}, {j}) outside a {rows}x{cols} matrix"
            )));
        }
        if v.is_nan() {
            return Err(Error::invalid(format!("NaN value at ({i}, {j})")));
        }
        count[i + 1] += 1;
    }
    for i in 0..rows {
        count[i + 1] += count[i];
    }
    let mut bucket = vec![(0usize, 0.0f64); triplets.len()];
    let mut next = count.clone();
    for &(i, j, v) in &triplets {
        bucket[next[i]] = (j, v);
        next[i] += 1;
    }
    drop(triplets);

    let mut row_ptr = Vec::with_capacity(rows + 1);
    let mut col_idx = Vec::new();
    let mut values = Vec::new();
    row_ptr.push(0);
    for i in 0..rows {
        let seg = &mut bucket[count[i]..count[i + 1]];
        seg.sort_unstable_by(|a, b| a.0.cmp(&b.0).then(a.1.total_cmp(&b.1)));
        let mut k = 0;
        while k < seg.len() {
            let j = seg[k].0;
            let mut sum = 0.0;
            while k < seg.len() && seg[k].0 == j {
                sum += seg[k].1;
                k += 1;
            }
            col_idx.push(j);
            values.push(sum);
        }
        row_ptr.push(col_idx.len());
    }
    Ok(CsrMatrix {
        rows,
        cols,
        row_ptr,
        col_idx,
        values,
    })
}

impl CsrMatrix {
    pub fn new(
        rows: usize,
        cols: usize,
        row_ptr: Vec<usize>,
        col_idx: Vec<usize>,
        values: Vec<f64>,
    ) -> Result<Self> {
        if row_ptr.len() != rows + 1 || row_ptr[0] != 0 || col_idx.len() != values.len() {
            return Err(Error::dims("inconsistent CSR arrays"));
        }
        if row_ptr[rows] != col_idx.len() {
            return Err(Error::dims("row_ptr does not end at nnz"));
        }
        for i in 0..rows {
            if row_ptr[i] > row_ptr[i + 1] {
                return Err(Error::invalid("row_ptr is not monotone"));
            }
            let r = &col_idx[row_ptr[i]..row_ptr[i + 1]];
            if r.windows(2).any(|w| w[0] >= w[1]) || r.last().is_some_and(|&j| j >= cols) {
                return Err(Error::invalid(format!("row {i} has unsorted or out-of-range columns")));
            }
        }
        if values.iter().any(|v| v.is_nan()) {
            return Err(Error::invalid("NaN stored in matrix"));
        }
        Ok(CsrMatrix {
            rows,
            cols,
            row_ptr,
            col_idx,
            values,
        })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        CsrMatrix {
            rows,
            cols,
            row_ptr: vec![0; rows + 1],
            col_idx: Vec::new(),
            values: Vec::new(),
        }
    }

    pub fn identity(n: usize) -> Self {
        Self::diagonal(&vec![1.0; n])
    }

    pub fn diagonal(d: &[f64]) -> Self {
        CsrMatrix {
            rows: d.len(),
            cols: d.len(),
            row_ptr: (0..=d.len()).collect(),
            col_idx: (0..d.len()).collect(),
            values: d.to_vec(),
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row_ptr(&self) -> &[usize] {
        &self.row_ptr
    }

    pub fn col_idx(&self) -> &[usize] {
        &self.col_idx
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Column indices and values of row `i`.
    pub fn row(&self, i: usize) -> (&[usize], &[f64]) {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        (&self.col_idx[r.clone()], &self.values[r])
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (c, v) = self.row(i);
        c.binary_search(&j).map_or(0.0, |k| v[k])
    }

    pub fn triplets(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.rows).flat_map(move |i| {
            let (c, v) = self.row(i);
            c.iter().zip(v).map(move |(&j, &x)| (i, j, x))
        })
    }

    pub fn matvec(&self, x: &[f64]) -> Result<Vec<f64>> {
        let mut y = vec![0.0; self.rows];
        self.matvec_into(x, &mut y)?;
        Ok(y)
    }

    pub fn matvec_into(&self, x: &[f64], y: &mut [f64]) -> Result<()> {
        if x.len() != self.cols || y.len() != self.rows {
            return Err(Error::dims(format!(
                "matvec of {}x{} with x of length {} into y of length {}",
                self.rows,
                self.cols,
                x.len(),
                y.len()
            )));
        }
        for (i, yi) in y.iter_mut().enumerate() {
            let (c, v) = self.row(i);
            *yi = c.iter().zip(v).map(|(&j, &a)| a * x[j]).sum();
        }
        Ok(())
    }

    pub fn transpose(&self) -> CsrMatrix {
        let mut count = vec![0usize; self.cols + 1];
        for &j in &self.col_idx {
            count[j + 1] += 1;
        }
        for j in 0..self.cols {
            count[j + 1] += count[j];
        }
        let mut next = count.clone();
        let mut col_idx = vec![0; self.nnz()];
        let mut values = vec![0.0; self.nnz()];
        for i in 0..self.rows {
            let (c, v) = self.row(i);
            for (&j, &x) in c.iter().zip(v) {
                col_idx[next[j]] = i;
                values[next[j]] = x;
                next[j] += 1;
            }
        }
        CsrMatrix {
            rows: self.cols,
            cols: self.rows,
            row_ptr: count,
            col_idx,
            values,
        }
    }

    pub fn scaled(&self, s: f64) -> CsrMatrix {
        let mut m = self.clone();
        m.values.iter_mut().for_each(|v| *v *= s);
        m
    }

    /// `self + s * other`.
    pub fn add_scaled(&self, other: &CsrMatrix, s: f64) -> Result<CsrMatrix> {
        if self.rows != other.rows || self.cols != other.cols {
            return Err(Error::dims("matrix sum of different shapes"));
        }
        CsrMatrix::from_blocks(
            self.rows,
            self.cols,
            &[Block::new(0, 0, self, 1.0), Block::new(0, 0, other, s)],
        )
    }

    pub fn from_blocks(rows: usize, cols: usize, blocks: &[Block<'_>]) -> Result<CsrMatrix> {
        let mut triplets = Vec::with_capacity(blocks.iter().map(|b| b.matrix.nnz()).sum());
        for b in blocks {
            let (br, bc) = if b.transpose {
                (b.matrix.cols, b.matrix.rows)
            } else {
                (b.matrix.rows, b.matrix.cols)
            };
            if b.row + br > rows || b.col + bc > cols {
                return Err(Error::dims(format!(
                    "{br}x{bc} block at ({}, {}) exceeds {rows}x{cols}",
                    b.row, b.col
                )));
            }
            if b.scale == 0.0 {
                continue;
            }
            for (i, j, v) in b.matrix.triplets() {
                let (i, j) = if b.transpose { (j, i) } else { (i, j) };
                triplets.push((b.row + i, b.col + j, b.scale * v));
            }
        }
        assemble_csr(rows, cols, triplets)
    }

    /// Rows `keep_rows` and columns `keep_cols` in the given order.
    pub fn submatrix(&self, keep_rows: &[usize], keep_cols: &[usize]) -> Result<CsrMatrix> {
        let mut col_map = vec![usize::MAX; self.cols];
        for (new, &old) in keep_cols.iter().enumerate() {
            if old >= self.cols {
                return Err(Error::invalid(format!("column {old} out of range")));
            }
            col_map[old] = new;
        }
        let mut triplets = Vec::new();
        for (new_i, &old_i) in keep_rows.iter().enumerate() {
            if old_i >= self.rows {
                return Err(Error::invalid(format!("row {old_i} out of range")));
            }
            let (c, v) = self.row(old_i);
            for (&j, &x) in c.iter().zip(v) {
                if col_map[j] != usize::MAX {
                    triplets.push((new_i, col_map[j], x));
                }
            }
        }
        assemble_csr(keep_rows.len(), keep_cols.len(), triplets)
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut d = DMatrix::zeros(self.rows, self.cols);
        for (i, j, v) in self.triplets() {
            d[(i, j)] += v;
        }
        d
    }

    pub fn from_dense(d: &DMatrix<f64>, drop_below: f64) -> CsrMatrix {
        let triplets = (0..d.nrows())
            .flat_map(|i| (0..d.ncols()).map(move |j| (i, j, d[(i, j)])))
            .filter(|t| t.2.abs() > drop_below);
        assemble_csr(d.nrows(), d.ncols(), triplets).expect("dense entries are in range")
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Largest `|A_ij - A_ji|` over stored entries.
    pub fn asymmetry(&self) -> f64 {
        self.triplets()
            .map(|(i, j, v)| (v - self.get(j, i)).abs())
            .fold(0.0, f64::max)
    }

    /// Matrix Market coordinate format (`real general`, 1-based indices).
    pub fn write_matrix_market(&self, mut w: impl Write) -> Result<()> {
        writeln!(w, "%%MatrixMarket matrix coordinate real general")?;
        writeln!(w, "{} {} {}", self.rows, self.cols, self.nnz())?;
        for (i, j, v) in self.triplets() {
            writeln!(w, "{} {} {:?}", i + 1, j + 1, v)?;
        }
        Ok(())
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}
