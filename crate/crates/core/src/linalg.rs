//! Dense Hermitian matrices in either symmetry class, plus the little bit of
//! linear algebra the rest of the crate needs.

use std::io::{Read, Write};

use faer::{Mat, Side};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::model::SymmetryClass;

pub type C64 = Complex64;

/// A matrix in `Sym_beta(N)`. Real symmetric matrices are stored as `f64`
/// so the common beta = 1 path does not pay for complex arithmetic.
#[derive(Clone, Debug)]
pub enum HMatrix {
    Real(Mat<f64>),
    Complex(Mat<C64>),
}

impl HMatrix {
    pub fn zeros(n: usize, symmetry: SymmetryClass) -> Self {
        match symmetry {
            SymmetryClass::RealSymmetric => HMatrix::Real(Mat::zeros(n, n)),
            SymmetryClass::ComplexHermitian => HMatrix::Complex(Mat::zeros(n, n)),
        }
    }

    pub fn identity(n: usize, symmetry: SymmetryClass) -> Self {
        let mut m = Self::zeros(n, symmetry);
        for i in 0..n {
            m.set_sym(i, i, C64::new(1.0, 0.0));
        }
        m
    }

    pub fn from_diagonal(values: &[f64], symmetry: SymmetryClass) -> Self {
        let mut m = Self::zeros(values.len(), symmetry);
        for (i, &v) in values.iter().enumerate() {
            m.set_sym(i, i, C64::new(v, 0.0));
        }
        m
    }

    pub fn n(&self) -> usize {
        match self {
            HMatrix::Real(m) => m.nrows(),
            HMatrix::Complex(m) => m.nrows(),
        }
    }

    pub fn symmetry(&self) -> SymmetryClass {
        match self {
            HMatrix::Real(_) => SymmetryClass::RealSymmetric,
            HMatrix::Complex(_) => SymmetryClass::ComplexHermitian,
        }
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> C64 {
        match self {
            HMatrix::Real(m) => C64::new(m[(i, j)], 0.0),
            HMatrix::Complex(m) => m[(i, j)],
        }
    }

    /// Sets entry (i, j) and its mirror (j, i) so the matrix stays in
    /// `Sym_beta(N)`. Diagonal entries keep only their real part; the
    /// imaginary part is dropped for the real class.
    #[inline]
    pub fn set_sym(&mut self, i: usize, j: usize, v: C64) {
        match self {
            HMatrix::Real(m) => {
                m[(i, j)] = v.re;
                m[(j, i)] = v.re;
            }
            HMatrix::Complex(m) => {
                if i == j {
                    m[(i, i)] = C64::new(v.re, 0.0);
                } else {
                    m[(i, j)] = v;
                    m[(j, i)] = v.conj();
                }
            }
        }
    }

    pub fn to_complex(&self) -> Mat<C64> {
        match self {
            HMatrix::Real(m) => Mat::from_fn(m.nrows(), m.ncols(), |i, j| C64::new(m[(i, j)], 0.0)),
            HMatrix::Complex(m) => m.clone(),
        }
    }

    /// Exact Hermiticity test; bitwise for the real class.
    pub fn is_hermitian(&self) -> bool {
        let n = self.n();
        match self {
            HMatrix::Real(m) => (0..n).all(|i| (0..i).all(|j| m[(i, j)].to_bits() == m[(j, i)].to_bits())),
            HMatrix::Complex(m) => (0..n).all(|i| {
                m[(i, i)].im == 0.0 && (0..i).all(|j| m[(i, j)] == m[(j, i)].conj())
            }),
        }
    }

    pub fn max_abs_diff(&self, other: &HMatrix) -> f64 {
        let n = self.n();
        let mut worst = 0.0f64;
        for i in 0..n {
            for j in 0..n {
                worst = worst.max((self.get(i, j) - other.get(i, j)).norm());
            }
        }
        worst
    }

    pub fn max_abs(&self) -> f64 {
        let n = self.n();
        let mut worst = 0.0f64;
        for i in 0..n {
            for j in 0..n {
                worst = worst.max(self.get(i, j).norm());
            }
        }
        worst
    }

    /// `self + scale * other`, both of the same class and size.
    pub fn add_scaled(&self, scale: f64, other: &HMatrix) -> Result<HMatrix> {
        check_same(self, other)?;
        Ok(match (self, other) {
            (HMatrix::Real(a), HMatrix::Real(b)) => {
                HMatrix::Real(Mat::from_fn(a.nrows(), a.ncols(), |i, j| a[(i, j)] + scale * b[(i, j)]))
            }
            (HMatrix::Complex(a), HMatrix::Complex(b)) => {
                HMatrix::Complex(Mat::from_fn(a.nrows(), a.ncols(), |i, j| a[(i, j)] + b[(i, j)] * scale))
            }
            _ => unreachable!(),
        })
    }

    pub fn scaled(&self, scale: f64) -> HMatrix {
        match self {
            HMatrix::Real(a) => HMatrix::Real(Mat::from_fn(a.nrows(), a.ncols(), |i, j| scale * a[(i, j)])),
            HMatrix::Complex(a) => HMatrix::Complex(Mat::from_fn(a.nrows(), a.ncols(), |i, j| a[(i, j)] * scale)),
        }
    }

    /// `Tr(H^2) = sum_{ab} |h_ab|^2`.
    pub fn trace_of_square(&self) -> f64 {
        let n = self.n();
        let mut acc = 0.0;
        match self {
            HMatrix::Real(m) => {
                for j in 0..n {
                    for i in 0..n {
                        acc += m[(i, j)] * m[(i, j)];
                    }
                }
            }
            HMatrix::Complex(m) => {
                for j in 0..n {
                    for i in 0..n {
                        acc += m[(i, j)].norm_sqr();
                    }
                }
            }
        }
        acc
    }

    /// `Tr(self * other)` for Hermitian arguments (real-valued).
    pub fn trace_product(&self, other: &HMatrix) -> f64 {
        let n = self.n();
        let mut acc = C64::new(0.0, 0.0);
        for i in 0..n {
            for j in 0..n {
                acc += self.get(i, j) * other.get(j, i);
            }
        }
        acc.re
    }

    /// All eigenvalues in ascending order.
    pub fn eigenvalues(&self) -> Result<Vec<f64>> {
        let mut ev = match self {
            HMatrix::Real(m) => m.self_adjoint_eigenvalues(Side::Lower),
            HMatrix::Complex(m) => m.self_adjoint_eigenvalues(Side::Lower),
        }
        .map_err(|e| Error::Eigensolver(format!("{e:?}")))?;
        ev.sort_by(f64::total_cmp);
        Ok(ev)
    }

    /// Operator norm, i.e. the largest absolute eigenvalue.
    pub fn operator_norm(&self) -> Result<f64> {
        let ev = self.eigenvalues()?;
        Ok(ev.iter().fold(0.0f64, |acc, x| acc.max(x.abs())))
    }

    pub fn is_diagonal(&self) -> bool {
        let n = self.n();
        (0..n).all(|i| (0..n).all(|j| i == j || self.get(i, j) == C64::new(0.0, 0.0)))
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.n()).map(|i| self.get(i, i).re).collect()
    }

    /// Little-endian binary: an 8-byte `u64` dimension header followed by
    /// row-major `f64` entries. Complex matrices store interleaved
    /// `(re, im)` pairs, so the class is recovered from the payload length.
    pub fn write_binary<W: Write>(&self, mut out: W) -> Result<()> {
        let n = self.n();
        out.write_all(&(n as u64).to_le_bytes())?;
        for i in 0..n {
            for j in 0..n {
                match self {
                    HMatrix::Real(m) => out.write_all(&m[(i, j)].to_le_bytes())?,
                    HMatrix::Complex(m) => {
                        out.write_all(&m[(i, j)].re.to_le_bytes())?;
                        out.write_all(&m[(i, j)].im.to_le_bytes())?;
                    }
                }
            }
        }
        Ok(())
    }

    pub fn read_binary<R: Read>(mut input: R) -> Result<HMatrix> {
        let mut header = [0u8; 8];
        input.read_exact(&mut header)?;
        let n = u64::from_le_bytes(header) as usize;
        let mut payload = Vec::new();
        input.read_to_end(&mut payload)?;
        let values: Vec<f64> = payload
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
            .collect();
        if payload.len() % 8 != 0 {
            return Err(Error::InvalidArgument("truncated matrix payload".into()));
        }
        if values.len() == n * n {
            Ok(HMatrix::Real(Mat::from_fn(n, n, |i, j| values[i * n + j])))
        } else if values.len() == 2 * n * n {
            Ok(HMatrix::Complex(Mat::from_fn(n, n, |i, j| {
                C64::new(values[2 * (i * n + j)], values[2 * (i * n + j) + 1])
            })))
        } else {
            Err(Error::InvalidArgument(format!(
                "payload of {} values does not match dimension {n}",
                values.len()
            )))
        }
    }
}

fn check_same(a: &HMatrix, b: &HMatrix) -> Result<()> {
    if a.n() != b.n() {
        return Err(Error::DimensionMismatch { expected: a.n(), got: b.n() });
    }
    if a.symmetry() != b.symmetry() {
        return Err(Error::InvalidArgument("symmetry classes differ".into()));
    }
    Ok(())
}

/// Inverse of a general complex square matrix via partial-pivot LU.
pub fn inverse(m: &Mat<C64>) -> Mat<C64> {
    use faer::linalg::solvers::DenseSolveCore;
    m.partial_piv_lu().inverse()
}

/// Smallest eigenvalue of the Hermitian part `(M - M^*)/(2i)`, i.e. of `Im M`.
pub fn min_eig_imag_part(m: &Mat<C64>) -> Result<f64> {
    let n = m.nrows();
    let im = Mat::from_fn(n, n, |i, j| (m[(i, j)] - m[(j, i)].conj()) / C64::new(0.0, 2.0));
    let ev = im
        .self_adjoint_eigenvalues(Side::Lower)
        .map_err(|e| Error::Eigensolver(format!("{e:?}")))?;
    Ok(ev.iter().copied().fold(f64::INFINITY, f64::min))
}

pub fn normalized_trace(m: &Mat<C64>) -> C64 {
    let n = m.nrows();
    let mut acc = C64::new(0.0, 0.0);
    for i in 0..n {
        acc += m[(i, i)];
    }
    acc / n as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn binary_roundtrip_real_and_complex() {
        let mut a = HMatrix::zeros(3, SymmetryClass::RealSymmetric);
        a.set_sym(0, 2, C64::new(1.5, 0.0));
        a.set_sym(1, 1, C64::new(-2.0, 0.0));
        let mut buf = Vec::new();
        a.write_binary(&mut buf).unwrap();
        assert_eq!(buf.len(), 8 + 8 * 9);
        assert_eq!(&buf[..8], &3u64.to_le_bytes());
        let back = HMatrix::read_binary(&buf[..]).unwrap();
        assert_eq!(back.symmetry(), SymmetryClass::RealSymmetric);
        assert_eq!(back.max_abs_diff(&a), 0.0);

        let mut c = HMatrix::zeros(2, SymmetryClass::ComplexHermitian);
        c.set_sym(0, 1, C64::new(0.25, -0.5));
        let mut buf = Vec::new();
        c.write_binary(&mut buf).unwrap();
        let back = HMatrix::read_binary(&buf[..]).unwrap();
        assert_eq!(back.symmetry(), SymmetryClass::ComplexHermitian);
        assert_eq!(back.get(1, 0), C64::new(0.25, 0.5));
    }

    #[test]
    fn rejects_bad_payload() {
        let mut buf = 2u64.to_le_bytes().to_vec();
        buf.extend_from_slice(&1.0f64.to_le_bytes());
        assert!(HMatrix::read_binary(&buf[..]).is_err());
    }

    #[test]
    fn eigenvalues_of_diagonal() {
        let n = 6;
        let diag: Vec<f64> = (1..=n).map(|k| k as f64 / n as f64).collect();
        let h = HMatrix::from_diagonal(&diag, SymmetryClass::ComplexHermitian);
        let ev = h.eigenvalues().unwrap();
        for (a, b) in ev.iter().zip(&diag) {
            assert!((a - b).abs() < 1e-14);
        }
    }
}
