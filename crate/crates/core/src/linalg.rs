//! Small linear-algebra kernels shared by the assembly and the solvers:
//! CSR products, a symmetric banded Cholesky factorization and COO export.

use std::io::Write;
use std::path::Path;

use nalgebra_sparse::CsrMatrix;

use crate::error::{Error, Result};

pub fn matvec(a: &CsrMatrix<f64>, x: &[f64]) -> Vec<f64> {
    let mut y = vec![0.0; a.nrows()];
    matvec_into(a, x, &mut y);
    y
}

pub fn matvec_into(a: &CsrMatrix<f64>, x: &[f64], y: &mut [f64]) {
    for (i, row) in a.row_iter().enumerate() {
        y[i] = row
            .col_indices()
            .iter()
            .zip(row.values())
            .map(|(&j, &v)| v * x[j])
            .sum();
    }
}

/// `x^T A y`.
pub fn bilinear(a: &CsrMatrix<f64>, x: &[f64], y: &[f64]) -> f64 {
    a.row_iter()
        .enumerate()
        .map(|(i, row)| {
            let ay: f64 = row
                .col_indices()
                .iter()
                .zip(row.values())
                .map(|(&j, &v)| v * y[j])
                .sum();
            x[i] * ay
        })
        .sum()
}

pub fn quad_form(a: &CsrMatrix<f64>, x: &[f64]) -> f64 {
    bilinear(a, x, x)
}

pub fn dot(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| a * b).sum()
}

pub fn max_abs_diff(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
}

/// Largest `|i - j|` over the stored entries.
pub fn half_bandwidth(a: &CsrMatrix<f64>) -> usize {
    a.triplet_iter().map(|(i, j, _)| i.abs_diff(j)).max().unwrap_or(0)
}

/// Writes `A` as `row col value` lines (zero-based), preceded by a
/// `rows cols nnz` header line.
pub fn write_coo(a: &CsrMatrix<f64>, path: &Path) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = std::io::BufWriter::new(file);
    let mut write = || -> std::io::Result<()> {
        writeln!(out, "{} {} {}", a.nrows(), a.ncols(), a.nnz())?;
        for (i, j, v) in a.triplet_iter() {
            writeln!(out, "{i} {j} {v:e}")?;
        }
        out.flush()
    };
    write().map_err(|e| Error::io(path, e))
}

/// Lower band of a symmetric matrix, `band[i][d]` holding `A[i][i - d]`.
#[derive(Debug, Clone)]
pub struct BandMatrix {
    n: usize,
    bw: usize,
    data: Vec<f64>,
}

impl BandMatrix {
    pub fn zeros(n: usize, bw: usize) -> Self {
        BandMatrix {
            n,
            bw,
            data: vec![0.0; n * (bw + 1)],
        }
    }

    /// Builds the band from the symmetric CSR matrix `a`, adding `diag` on the
    /// diagonal. Rows and columns with `pinned[i]` set are replaced by the
    /// identity, which is how essential conditions and active constraints are
    /// eliminated.
    pub fn from_csr_pinned(a: &CsrMatrix<f64>, diag: &[f64], pinned: &[bool]) -> Self {
        let mut band = BandMatrix::zeros(a.nrows(), half_bandwidth(a));
        for (i, row) in a.row_iter().enumerate() {
            if pinned[i] {
                continue;
            }
            for (&j, &v) in row.col_indices().iter().zip(row.values()) {
                if j <= i && !pinned[j] {
                    band.add(i, j, v);
                }
            }
        }
        for i in 0..band.n {
            if pinned[i] {
                band.set_diag(i, 1.0);
            } else {
                band.add(i, i, diag[i]);
            }
        }
        band
    }

    /// Adds `v` to `A[i][j]`; requires `j <= i <= j + bw`.
    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        debug_assert!(j <= i && i - j <= self.bw);
        self.data[i * (self.bw + 1) + (i - j)] += v;
    }

    fn set_diag(&mut self, i: usize, v: f64) {
        self.data[i * (self.bw + 1)] = v;
    }

    pub fn cholesky(mut self) -> Result<BandedCholesky> {
        let (n, bw) = (self.n, self.bw);
        let w = bw + 1;
        for i in 0..n {
            let lo_i = i.saturating_sub(bw);
            for j in lo_i..=i {
                let lo = lo_i.max(j.saturating_sub(bw));
                let mut sum = self.data[i * w + (i - j)];
                for k in lo..j {
                    sum -= self.data[i * w + (i - k)] * self.data[j * w + (j - k)];
                }
                if i == j {
                    if !(sum > 0.0) {
                        return Err(Error::NotPositiveDefinite { pivot: i, value: sum });
                    }
                    self.data[i * w] = sum.sqrt();
                } else {
                    self.data[i * w + (i - j)] = sum / self.data[j * w];
                }
            }
        }
        Ok(BandedCholesky { band: self })
    }
}

/// Solves `(A + diag) u = rhs` on the unpinned unknowns with `u = values` on
/// the pinned ones, moving the pinned columns to the right-hand side.
pub fn solve_pinned(
    a: &CsrMatrix<f64>,
    diag: &[f64],
    pinned: &[bool],
    values: &[f64],
    rhs: &[f64],
) -> Result<Vec<f64>> {
    let mut b = rhs.to_vec();
    for (i, row) in a.row_iter().enumerate() {
        if pinned[i] {
            b[i] = values[i];
            continue;
        }
        for (&j, &v) in row.col_indices().iter().zip(row.values()) {
            if pinned[j] {
                b[i] -= v * values[j];
            }
        }
    }
    let chol = BandMatrix::from_csr_pinned(a, diag, pinned).cholesky()?;
    chol.solve_in_place(&mut b);
    Ok(b)
}

/// `A = L L^T` with `L` stored in band form.
#[derive(Debug, Clone)]
pub struct BandedCholesky {
    band: BandMatrix,
}

impl BandedCholesky {
    pub fn dim(&self) -> usize {
        self.band.n
    }

    /// Overwrites `b` with `A^{-1} b`.
    pub fn solve_in_place(&self, b: &mut [f64]) {
        let BandMatrix { n, bw, ref data } = self.band;
        let w = bw + 1;
        for i in 0..n {
            let mut s = b[i];
            for k in i.saturating_sub(bw)..i {
                s -= data[i * w + (i - k)] * b[k];
            }
            b[i] = s / data[i * w];
        }
        for i in (0..n).rev() {
            let mut s = b[i];
            for k in (i + 1)..(i + w).min(n) {
                s -= data[k * w + (k - i)] * b[k];
            }
            b[i] = s / data[i * w];
        }
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let mut x = b.to_vec();
        self.solve_in_place(&mut x);
        x
    }
}
