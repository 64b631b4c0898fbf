//! Dense matrix helpers and the row-major JSON matrix format shared by every
//! file the crate reads or writes.
//!
//! ```json
//! {"rows": 2, "cols": 2, "real": [1, 0, 0, 1], "imag": [0, 0, 0, 0]}
//! ```
//!
//! `imag` is optional; when absent the matrix is real.

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

pub type RMat = DMatrix<f64>;
pub type CMat = DMatrix<Complex64>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatrixJson {
    pub rows: usize,
    pub cols: usize,
    pub real: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub imag: Option<Vec<f64>>,
}

impl MatrixJson {
    pub fn from_real(m: &RMat) -> Self {
        MatrixJson {
            rows: m.nrows(),
            cols: m.ncols(),
            real: row_major(m),
            imag: None,
        }
    }

    pub fn from_complex(m: &CMat) -> Self {
        MatrixJson {
            rows: m.nrows(),
            cols: m.ncols(),
            real: row_major(&m.map(|z| z.re)),
            imag: Some(row_major(&m.map(|z| z.im))),
        }
    }

    fn check(&self) -> Result<()> {
        let len = self.rows * self.cols;
        if self.real.len() != len {
            return Err(Error::Parse(format!(
                "matrix declares {}x{} but carries {} real entries",
                self.rows,
                self.cols,
                self.real.len()
            )));
        }
        if let Some(im) = &self.imag {
            if im.len() != len {
                return Err(Error::Parse(format!(
                    "matrix declares {}x{} but carries {} imaginary entries",
                    self.rows,
                    self.cols,
                    im.len()
                )));
            }
        }
        Ok(())
    }

    /// Real view; fails if a nonzero imaginary part is present.
    pub fn to_real(&self) -> Result<RMat> {
        self.check()?;
        if let Some(im) = &self.imag {
            if im.iter().any(|&v| v != 0.0) {
                return Err(Error::Parse("expected a real matrix".into()));
            }
        }
        Ok(RMat::from_row_slice(self.rows, self.cols, &self.real))
    }

    pub fn to_complex(&self) -> Result<CMat> {
        self.check()?;
        let zero = vec![0.0; self.real.len()];
        let im = self.imag.as_ref().unwrap_or(&zero);
        let data: Vec<Complex64> = self
            .real
            .iter()
            .zip(im)
            .map(|(&re, &im)| Complex64::new(re, im))
            .collect();
        Ok(CMat::from_row_slice(self.rows, self.cols, &data))
    }
}

fn row_major(m: &RMat) -> Vec<f64> {
    let mut out = Vec::with_capacity(m.len());
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            out.push(m[(i, j)]);
        }
    }
    out
}

/// Largest absolute entry. Every `‖·‖∞` tolerance in the crate is entrywise.
pub fn max_abs(m: &RMat) -> f64 {
    m.iter().fold(0.0, |acc, v| acc.max(v.abs()))
}

pub fn max_abs_c(m: &CMat) -> f64 {
    m.iter().fold(0.0, |acc, v| acc.max(v.norm()))
}

pub fn symmetrize(m: &RMat) -> RMat {
    (m + m.transpose()) * 0.5
}

pub fn asymmetry(m: &RMat) -> f64 {
    max_abs(&(m - m.transpose()))
}

pub fn all_finite(m: &RMat) -> bool {
    m.iter().all(|v| v.is_finite())
}

pub fn all_finite_c(m: &CMat) -> bool {
    m.iter().all(|v| v.re.is_finite() && v.im.is_finite())
}

pub fn re(m: &CMat) -> RMat {
    m.map(|z| z.re)
}

pub fn im(m: &CMat) -> RMat {
    m.map(|z| z.im)
}

pub fn complexify(m: &RMat) -> CMat {
    m.map(|v| Complex64::new(v, 0.0))
}

/// `[[a, b], [c, d]]` assembled from equally compatible blocks.
pub fn block2(a: &RMat, b: &RMat, c: &RMat, d: &RMat) -> Result<RMat> {
    if a.nrows() != b.nrows() || c.nrows() != d.nrows() || a.ncols() != c.ncols() || b.ncols() != d.ncols()
    {
        return Err(invalid("incompatible block shapes"));
    }
    let (r0, c0) = a.shape();
    let mut out = RMat::zeros(r0 + c.nrows(), c0 + b.ncols());
    out.view_mut((0, 0), a.shape()).copy_from(a);
    out.view_mut((0, c0), b.shape()).copy_from(b);
    out.view_mut((r0, 0), c.shape()).copy_from(c);
    out.view_mut((r0, c0), d.shape()).copy_from(d);
    Ok(out)
}

pub fn block_diag(a: &RMat, b: &RMat) -> RMat {
    let mut out = RMat::zeros(a.nrows() + b.nrows(), a.ncols() + b.ncols());
    out.view_mut((0, 0), a.shape()).copy_from(a);
    out.view_mut(a.shape(), b.shape()).copy_from(b);
    out
}

pub fn read_matrix_json(text: &str) -> Result<MatrixJson> {
    Ok(serde_json::from_str(text)?)
}
