//! Truncated SVD of the motion matrix and latent compression.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default latent dimension of compressed futures.
pub const DEFAULT_LATENT_DIM: usize = 4;

/// Row-major dense matrix with a fixed row width.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RowMatrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl RowMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::DimensionMismatch {
                expected: rows * cols,
                got: data.len(),
            });
        }
        Ok(RowMatrix { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if let Some(bad) = rows.iter().find(|r| r.len() != cols) {
            return Err(Error::DimensionMismatch {
                expected: cols,
                got: bad.len(),
            });
        }
        RowMatrix::new(rows.len(), cols, rows.concat())
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn iter_rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.cols.max(1)).take(self.rows)
    }
}

/// The kept right singular vectors of a motion matrix.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SvdBasis {
    /// `d_s × dim`, rows orthonormal.
    pub v_rows: RowMatrix,
    /// Non-increasing, zero-padded when the input is rank deficient.
    pub singular_values: Vec<f64>,
}

impl SvdBasis {
    pub fn latent_dim(&self) -> usize {
        self.v_rows.rows
    }

    /// Length of a flattened trajectory, `2·T_f`.
    pub fn dim(&self) -> usize {
        self.v_rows.cols
    }
}

/// Keeps the top `d_s` right singular vectors of `a`.
///
/// Each kept vector is sign-normalized so its largest-magnitude component is
/// positive, which makes the basis reproducible across runs.
pub fn fit_svd_basis(a: &RowMatrix, d_s: usize) -> Result<SvdBasis> {
    let max_rank = a.rows.min(a.cols);
    if d_s == 0 || d_s > max_rank {
        return Err(Error::InvalidInput(format!(
            "latent dimension {d_s} must be in 1..={max_rank} for a {}x{} motion matrix",
            a.rows, a.cols
        )));
    }
    if a.data.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("motion matrix contains non-finite values".into()));
    }
    // Always factor the tall orientation: nalgebra 0.35 returns wrong factors
    // for some rank-deficient wide matrices. For a wide A, the right singular
    // vectors of A are the left singular vectors of Aᵀ.
    let m = DMatrix::from_row_slice(a.rows, a.cols, &a.data);
    let (svd, v_t) = if a.rows >= a.cols {
        let svd = m.svd(false, true);
        let v_t = svd.v_t.clone();
        (svd, v_t)
    } else {
        let svd = m.transpose().svd(true, false);
        let v_t = svd.u.as_ref().map(|u| u.transpose());
        (svd, v_t)
    };
    let v_t =
        v_t.ok_or_else(|| Error::Numerical("SVD did not produce right singular vectors".into()))?;

    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&i, &j| svd.singular_values[j].total_cmp(&svd.singular_values[i]));

    let sigma_max = order.first().map_or(0.0, |&i| svd.singular_values[i]);
    let tol = sigma_max * a.rows.max(a.cols) as f64 * f64::EPSILON;

    let mut data = Vec::with_capacity(d_s * a.cols);
    let mut singular_values = Vec::with_capacity(d_s);
    for &idx in order.iter().take(d_s) {
        let mut row: Vec<f64> = v_t.row(idx).iter().copied().collect();
        let pivot = row
            .iter()
            .enumerate()
            .fold((0, 0.0f64), |best, (k, v)| {
                if v.abs() > best.1.abs() + 1e-12 {
                    (k, *v)
                } else {
                    best
                }
            })
            .1;
        if pivot < 0.0 {
            row.iter_mut().for_each(|v| *v = -*v);
        }
        data.extend(row);
        let s = svd.singular_values[idx];
        singular_values.push(if s <= tol { 0.0 } else { s });
    }

    Ok(SvdBasis {
        v_rows: RowMatrix::new(d_s, a.cols, data)?,
        singular_values,
    })
}

/// Latent coordinates `v = row · Vᵀ`.
pub fn compress(row: &[f64], basis: &SvdBasis) -> Result<Vec<f64>> {
    if row.len() != basis.dim() {
        return Err(Error::DimensionMismatch {
            expected: basis.dim(),
            got: row.len(),
        });
    }
    Ok(basis
        .v_rows
        .iter_rows()
        .map(|v| v.iter().zip(row).map(|(a, b)| a * b).sum())
        .collect())
}

/// Back to a flattened trajectory, `v · V`.
pub fn decompress(latent: &[f64], basis: &SvdBasis) -> Result<Vec<f64>> {
    if latent.len() != basis.latent_dim() {
        return Err(Error::DimensionMismatch {
            expected: basis.latent_dim(),
            got: latent.len(),
        });
    }
    let mut out = vec![0.0; basis.dim()];
    for (coef, v) in latent.iter().zip(basis.v_rows.iter_rows()) {
        for (o, x) in out.iter_mut().zip(v) {
            *o += coef * x;
        }
    }
    Ok(out)
}

/// Frobenius norm of `A − A·VᵀV`.
pub fn reconstruction_residual(a: &RowMatrix, basis: &SvdBasis) -> Result<f64> {
    let mut total = 0.0;
    for row in a.iter_rows() {
        let back = decompress(&compress(row, basis)?, basis)?;
        total += row
            .iter()
            .zip(&back)
            .map(|(x, y)| (x - y) * (x - y))
            .sum::<f64>();
    }
    Ok(total.sqrt())
}
