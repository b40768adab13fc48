//! Dense complex linear algebra shared by the other modules.
//!
//! Everything here is sized for Fock spaces of at most ten modes
//! (dimension 1024), so the cubic-cost cyclic Jacobi eigensolver is
//! entirely adequate. Entropies are reported in bits.

use num_complex::Complex64;
use thiserror::Error;

/// Tolerance for identities that are exact in f64 arithmetic.
pub const TOL_EXACT: f64 = 1e-12;
/// Tolerance for eigenvalue-based quantities.
pub const TOL_EIGEN: f64 = 1e-9;

#[derive(Debug, Error, PartialEq)]
pub enum NumericsError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("matrix is not Hermitian within tolerance (max |m - m^dag| = {0:.3e})")]
    NonHermitianInput(f64),
    #[error("matrix is not a valid state: {0}")]
    NotAState(String),
    #[error("linear system is singular (pivot {0:.3e})")]
    SingularSystem(f64),
}

/// Dense complex matrix, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexMatrix {
    rows: usize,
    cols: usize,
    data: Vec<Complex64>,
}

impl ComplexMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        assert!(rows > 0 && cols > 0, "matrix dimensions must be positive");
        ComplexMatrix {
            rows,
            cols,
            data: vec![Complex64::new(0.0, 0.0); rows * cols],
        }
    }

    pub fn identity(dim: usize) -> Self {
        let mut m = Self::zeros(dim, dim);
        for i in 0..dim {
            m.set(i, i, Complex64::new(1.0, 0.0));
        }
        m
    }

    pub fn from_rows(rows: &[Vec<Complex64>]) -> Self {
        let r = rows.len();
        let c = rows[0].len();
        assert!(rows.iter().all(|row| row.len() == c));
        let mut m = Self::zeros(r, c);
        for (i, row) in rows.iter().enumerate() {
            for (j, v) in row.iter().enumerate() {
                m.set(i, j, *v);
            }
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> Complex64 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: Complex64) {
        self.data[r * self.cols + c] = v;
    }

    #[inline]
    pub fn add_to(&mut self, r: usize, c: usize, v: Complex64) {
        self.data[r * self.cols + c] += v;
    }

    pub fn mul(&self, other: &ComplexMatrix) -> Result<ComplexMatrix, NumericsError> {
        if self.cols != other.rows {
            return Err(NumericsError::DimensionMismatch(format!(
                "product of {}x{} and {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let mut out = ComplexMatrix::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self.get(i, k);
                // Ladder-operator matrices are mostly zeros; skipping
                // empty rows keeps the CAR suite cheap at n = 8.
                if a == Complex64::new(0.0, 0.0) {
                    continue;
                }
                for j in 0..other.cols {
                    out.data[i * other.cols + j] += a * other.get(k, j);
                }
            }
        }
        Ok(out)
    }

    pub fn add(&self, other: &ComplexMatrix) -> Result<ComplexMatrix, NumericsError> {
        if self.rows != other.rows || self.cols != other.cols {
            return Err(NumericsError::DimensionMismatch(format!(
                "sum of {}x{} and {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let mut out = self.clone();
        for (o, v) in out.data.iter_mut().zip(&other.data) {
            *o += v;
        }
        Ok(out)
    }

    pub fn sub(&self, other: &ComplexMatrix) -> Result<ComplexMatrix, NumericsError> {
        self.add(&other.scale(Complex64::new(-1.0, 0.0)))
    }

    pub fn scale(&self, factor: Complex64) -> ComplexMatrix {
        let mut out = self.clone();
        for v in out.data.iter_mut() {
            *v *= factor;
        }
        out
    }

    pub fn adjoint(&self) -> ComplexMatrix {
        let mut out = ComplexMatrix::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                out.set(c, r, self.get(r, c).conj());
            }
        }
        out
    }

    pub fn trace(&self) -> Complex64 {
        assert!(self.is_square(), "trace of a non-square matrix");
        (0..self.rows).map(|i| self.get(i, i)).sum()
    }

    pub fn kron(&self, other: &ComplexMatrix) -> ComplexMatrix {
        let mut out = ComplexMatrix::zeros(self.rows * other.rows, self.cols * other.cols);
        for i in 0..self.rows {
            for j in 0..self.cols {
                let a = self.get(i, j);
                for k in 0..other.rows {
                    for l in 0..other.cols {
                        out.set(i * other.rows + k, j * other.cols + l, a * other.get(k, l));
                    }
                }
            }
        }
        out
    }

    pub fn mul_vec(&self, v: &[Complex64]) -> Vec<Complex64> {
        assert_eq!(self.cols, v.len());
        (0..self.rows)
            .map(|i| {
                v.iter()
                    .enumerate()
                    .map(|(j, x)| self.get(i, j) * x)
                    .sum()
            })
            .collect()
    }

    /// Outer product ket * bra^dag.
    pub fn outer(ket: &[Complex64], bra: &[Complex64]) -> ComplexMatrix {
        let mut out = ComplexMatrix::zeros(ket.len(), bra.len());
        for (i, a) in ket.iter().enumerate() {
            for (j, b) in bra.iter().enumerate() {
                out.set(i, j, a * b.conj());
            }
        }
        out
    }

    pub fn max_abs_diff(&self, other: &ComplexMatrix) -> f64 {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }

    pub fn hermiticity_defect(&self) -> f64 {
        assert!(self.is_square());
        let mut worst = 0.0f64;
        for r in 0..self.rows {
            for c in r..self.cols {
                let d = (self.get(r, c) - self.get(c, r).conj()).norm();
                worst = worst.max(d);
            }
        }
        worst
    }

    pub fn is_hermitian(&self, tol: f64) -> bool {
        self.is_square() && self.hermiticity_defect() <= tol
    }

    /// (m + m^dag) / 2.
    pub fn symmetrized(&self) -> ComplexMatrix {
        self.add(&self.adjoint())
            .expect("square matrix")
            .scale(Complex64::new(0.5, 0.0))
    }
}

/// Real eigenvalues of a Hermitian matrix, descending.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    pub eigenvalues: Vec<f64>,
    pub tolerance: f64,
}

/// Eigendecomposition of a Hermitian matrix: descending eigenvalues and
/// the matching unit eigenvectors as columns.
#[derive(Debug, Clone)]
pub struct HermitianEigen {
    pub eigenvalues: Vec<f64>,
    pub eigenvectors: ComplexMatrix,
}

/// Cyclic Jacobi for complex Hermitian matrices.
///
/// Each rotation zeroes one off-diagonal element a_pq: the (p,q) plane is
/// first dephased so the pivot becomes real, then rotated like the real
/// symmetric case. Accumulating the plane unitaries yields eigenvectors.
pub fn hermitian_eigen(m: &ComplexMatrix, tol: f64) -> Result<HermitianEigen, NumericsError> {
    if !m.is_square() {
        return Err(NumericsError::DimensionMismatch(format!(
            "eigendecomposition of {}x{}",
            m.rows, m.cols
        )));
    }
    let defect = m.hermiticity_defect();
    if defect > tol {
        return Err(NumericsError::NonHermitianInput(defect));
    }
    let dim = m.rows;
    let mut a = m.symmetrized();
    let mut v = ComplexMatrix::identity(dim);

    let scale: f64 = a.data.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt();
    let stop = (scale * f64::EPSILON * dim as f64).max(f64::MIN_POSITIVE);

    for _sweep in 0..64 {
        let mut off = 0.0f64;
        for p in 0..dim {
            for q in (p + 1)..dim {
                off += a.get(p, q).norm_sqr();
            }
        }
        if off.sqrt() * std::f64::consts::SQRT_2 <= stop {
            break;
        }
        for p in 0..dim {
            for q in (p + 1)..dim {
                let g = a.get(p, q);
                let r = g.norm();
                if r <= stop / dim as f64 {
                    continue;
                }
                let phase = g / r; // e^{i phi}
                let alpha = a.get(p, p).re;
                let beta = a.get(q, q).re;
                let tau = (beta - alpha) / (2.0 * r);
                let t = if tau >= 0.0 {
                    -1.0 / (tau + (tau * tau + 1.0).sqrt())
                } else {
                    1.0 / (-tau + (tau * tau + 1.0).sqrt())
                };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = t * c;
                let pc = phase.conj();

                // Columns: A <- A G, with G the plane unitary.
                for i in 0..dim {
                    let aip = a.get(i, p);
                    let aiq = a.get(i, q);
                    a.set(i, p, aip * c + aiq * (pc * s));
                    a.set(i, q, aip * (-s) + aiq * (pc * c));
                }
                // Rows: A <- G^dag A.
                for j in 0..dim {
                    let apj = a.get(p, j);
                    let aqj = a.get(q, j);
                    a.set(p, j, apj * c + aqj * (phase * s));
                    a.set(q, j, apj * (-s) + aqj * (phase * c));
                }
                // Eigenvector accumulator: V <- V G.
                for i in 0..dim {
                    let vip = v.get(i, p);
                    let viq = v.get(i, q);
                    v.set(i, p, vip * c + viq * (pc * s));
                    v.set(i, q, vip * (-s) + viq * (pc * c));
                }
            }
        }
    }

    let mut order: Vec<usize> = (0..dim).collect();
    let diag: Vec<f64> = (0..dim).map(|i| a.get(i, i).re).collect();
    order.sort_by(|&x, &y| diag[y].partial_cmp(&diag[x]).unwrap());

    let eigenvalues: Vec<f64> = order.iter().map(|&i| diag[i]).collect();
    let mut eigenvectors = ComplexMatrix::zeros(dim, dim);
    for (col, &src) in order.iter().enumerate() {
        for row in 0..dim {
            eigenvectors.set(row, col, v.get(row, src));
        }
    }
    Ok(HermitianEigen {
        eigenvalues,
        eigenvectors,
    })
}

pub fn hermitian_eigenvalues(m: &ComplexMatrix, tol: f64) -> Result<Spectrum, NumericsError> {
    let eig = hermitian_eigen(m, tol)?;
    Ok(Spectrum {
        eigenvalues: eig.eigenvalues,
        tolerance: tol,
    })
}

/// Von Neumann entropy in bits of a unit-trace PSD Hermitian matrix.
pub fn von_neumann_entropy(m: &ComplexMatrix, tol: f64) -> Result<f64, NumericsError> {
    let spectrum = hermitian_eigenvalues(m, tol)?;
    let tr: f64 = spectrum.eigenvalues.iter().sum();
    if (tr - 1.0).abs() > tol.max(TOL_EXACT) * 10.0 * m.rows() as f64 {
        return Err(NumericsError::NotAState(format!("trace is {tr}")));
    }
    if let Some(min) = spectrum.eigenvalues.last() {
        if *min < -tol {
            return Err(NumericsError::NotAState(format!(
                "negative eigenvalue {min:.3e}"
            )));
        }
    }
    let mut entropy = 0.0;
    for &lambda in &spectrum.eigenvalues {
        if lambda > tol {
            entropy -= lambda * lambda.log2();
        }
    }
    Ok(entropy)
}

/// Hermitian PSD square root via eigendecomposition.
pub fn psd_sqrt(m: &ComplexMatrix, tol: f64) -> Result<ComplexMatrix, NumericsError> {
    let eig = hermitian_eigen(m, tol)?;
    let dim = m.rows();
    let mut out = ComplexMatrix::zeros(dim, dim);
    for (k, &lambda) in eig.eigenvalues.iter().enumerate() {
        if lambda < -tol {
            return Err(NumericsError::NotAState(format!(
                "negative eigenvalue {lambda:.3e} in psd_sqrt"
            )));
        }
        let root = lambda.max(0.0).sqrt();
        if root == 0.0 {
            continue;
        }
        for i in 0..dim {
            let vi = eig.eigenvectors.get(i, k);
            for j in 0..dim {
                out.add_to(i, j, vi * eig.eigenvectors.get(j, k).conj() * root);
            }
        }
    }
    Ok(out)
}

/// Tr(a b) without forming the product.
pub fn trace_product(a: &ComplexMatrix, b: &ComplexMatrix) -> Complex64 {
    assert!(a.cols() == b.rows() && a.rows() == b.cols());
    let mut acc = Complex64::new(0.0, 0.0);
    for i in 0..a.rows() {
        for j in 0..a.cols() {
            acc += a.get(i, j) * b.get(j, i);
        }
    }
    acc
}

/// LU factorization (partial pivoting) of a real square matrix, reusable
/// across right-hand sides.
#[derive(Debug, Clone)]
pub struct LuReal {
    lu: Vec<Vec<f64>>,
    perm: Vec<usize>,
}

impl LuReal {
    pub fn factor(mut a: Vec<Vec<f64>>) -> Result<Self, NumericsError> {
        let n = a.len();
        assert!(a.iter().all(|row| row.len() == n));
        let mut perm: Vec<usize> = (0..n).collect();
        for col in 0..n {
            let (pivot_row, pivot) = (col..n)
                .map(|r| (r, a[r][col].abs()))
                .max_by(|x, y| x.1.partial_cmp(&y.1).unwrap())
                .unwrap();
            if pivot < 1e-10 {
                return Err(NumericsError::SingularSystem(pivot));
            }
            a.swap(col, pivot_row);
            perm.swap(col, pivot_row);
            let (top, rest) = a.split_at_mut(col + 1);
            let pivot_values = &top[col];
            for row in rest.iter_mut() {
                let f = row[col] / pivot_values[col];
                row[col] = f;
                if f == 0.0 {
                    continue;
                }
                for (x, p) in row[col + 1..].iter_mut().zip(&pivot_values[col + 1..]) {
                    *x -= f * p;
                }
            }
        }
        Ok(LuReal { lu: a, perm })
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = b.len();
        assert_eq!(n, self.lu.len());
        let mut y: Vec<f64> = self.perm.iter().map(|&p| b[p]).collect();
        for r in 1..n {
            for c in 0..r {
                y[r] -= self.lu[r][c] * y[c];
            }
        }
        let mut x = y;
        for r in (0..n).rev() {
            for c in (r + 1)..n {
                x[r] -= self.lu[r][c] * x[c];
            }
            x[r] /= self.lu[r][r];
        }
        x
    }
}

/// Solve the real linear system `a x = b`.
pub fn solve_real(a: Vec<Vec<f64>>, b: Vec<f64>) -> Result<Vec<f64>, NumericsError> {
    Ok(LuReal::factor(a)?.solve(&b))
}
