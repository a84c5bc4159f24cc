//! Small dense kernels: symmetric eigendecomposition by cyclic Jacobi
//! rotations and complex Gaussian elimination.
//!
//! Dimensions here are tiny (chains of a few dozen sites), so everything is
//! stored row-major in a flat `Vec` and updated in place.

use num_complex::Complex;
use num_traits::Zero;

use crate::error::{invalid, Error, Result};
use crate::scalar::Real;

/// Maximum number of full Jacobi sweeps before giving up.
pub const MAX_SWEEPS: usize = 100;

/// Dense real square matrix, row-major. Symmetry is checked by consumers
/// that need it.
#[derive(Debug, Clone, PartialEq)]
pub struct SymMatrix<T> {
    n: usize,
    data: Vec<T>,
}

impl<T: Real> SymMatrix<T> {
    pub fn zeros(n: usize) -> Self {
        Self {
            n,
            data: vec![T::zero(); n * n],
        }
    }

    pub fn from_fn(n: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut m = Self::zeros(n);
        for i in 0..n {
            for j in 0..n {
                m.data[i * n + j] = f(i, j);
            }
        }
        m
    }

    /// Builds from row-major data; `data.len()` must be a perfect square.
    pub fn from_rows(n: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != n * n {
            return Err(invalid(format!(
                "expected {} entries for a {n}x{n} matrix, got {}",
                n * n,
                data.len()
            )));
        }
        Ok(Self { n, data })
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> T {
        self.data[i * self.n + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: T) {
        self.data[i * self.n + j] = v;
    }

    /// Sets `(i, j)` and `(j, i)`.
    pub fn set_sym(&mut self, i: usize, j: usize, v: T) {
        self.set(i, j, v);
        self.set(j, i, v);
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn frobenius_norm(&self) -> T {
        self.data.iter().map(|&x| x * x).sum::<T>().sqrt()
    }

    pub fn off_diagonal_norm(&self) -> T {
        let mut s = T::zero();
        for i in 0..self.n {
            for j in 0..self.n {
                if i != j {
                    let v = self.get(i, j);
                    s += v * v;
                }
            }
        }
        s.sqrt()
    }

    pub fn is_symmetric(&self) -> bool {
        (0..self.n).all(|i| (i + 1..self.n).all(|j| self.get(i, j) == self.get(j, i)))
    }

    pub fn scaled(&self, k: T) -> Self {
        Self {
            n: self.n,
            data: self.data.iter().map(|&x| x * k).collect(),
        }
    }

    pub fn mul_vec(&self, v: &[T]) -> Vec<T> {
        (0..self.n)
            .map(|i| (0..self.n).map(|j| self.get(i, j) * v[j]).sum())
            .collect()
    }
}

/// Eigen-pairs of a real symmetric matrix, eigenvalues ascending.
/// Column `k` of `vectors` (row-major `n x n`) is the eigenvector of `values[k]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SymEigen<T> {
    pub values: Vec<T>,
    pub vectors: SymMatrix<T>,
    pub sweeps: usize,
}

impl<T: Real> SymEigen<T> {
    pub fn dim(&self) -> usize {
        self.values.len()
    }

    /// Component `i` of eigenvector `k`.
    #[inline]
    pub fn vector(&self, i: usize, k: usize) -> T {
        self.vectors.get(i, k)
    }
}

/// Cyclic Jacobi eigendecomposition of a real symmetric matrix.
///
/// Sweeps over every upper-triangular pair `(p, q)` and annihilates `a[p][q]`
/// with a plane rotation, accumulating the rotations into the eigenvector
/// matrix. Converges when the off-diagonal Frobenius norm drops below
/// `tol * ||A||_F` with `tol = max(1e-14, 16 eps)`; fails with
/// [`Error::NumericalFailure`] after [`MAX_SWEEPS`] sweeps.
pub fn jacobi_eigen<T: Real>(a: &SymMatrix<T>) -> Result<SymEigen<T>> {
    let n = a.dim();
    if !a.is_symmetric() {
        return Err(invalid("matrix is not symmetric"));
    }
    if a.as_slice().iter().any(|x| !x.is_finite()) {
        return Err(invalid("matrix has non-finite entries"));
    }

    let mut m = a.clone();
    let mut v = SymMatrix::from_fn(n, |i, j| if i == j { T::one() } else { T::zero() });
    let target = T::kernel_tolerance() * a.frobenius_norm();

    let mut sweeps = 0;
    loop {
        let off = m.off_diagonal_norm();
        if off <= target {
            break;
        }
        if sweeps == MAX_SWEEPS {
            return Err(Error::NumericalFailure {
                sweeps,
                off_norm: off.to_f64().unwrap_or(f64::NAN),
                target: target.to_f64().unwrap_or(f64::NAN),
            });
        }
        sweeps += 1;
        for p in 0..n {
            for q in p + 1..n {
                rotate(&mut m, &mut v, p, q);
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| {
        m.get(i, i)
            .partial_cmp(&m.get(j, j))
            .expect("finite eigenvalues")
    });
    let values = order.iter().map(|&k| m.get(k, k)).collect();
    let vectors = SymMatrix::from_fn(n, |i, k| v.get(i, order[k]));
    Ok(SymEigen {
        values,
        vectors,
        sweeps,
    })
}

fn rotate<T: Real>(m: &mut SymMatrix<T>, v: &mut SymMatrix<T>, p: usize, q: usize) {
    let apq = m.get(p, q);
    if apq == T::zero() {
        return;
    }
    let n = m.dim();
    let app = m.get(p, p);
    let aqq = m.get(q, q);
    let two = T::lit(2.0);

    let theta = (aqq - app) / (two * apq);
    let t = {
        let mag = T::one() / (theta.abs() + (theta * theta + T::one()).sqrt());
        if theta < T::zero() {
            -mag
        } else {
            mag
        }
    };
    let c = T::one() / (t * t + T::one()).sqrt();
    let s = t * c;

    m.set(p, p, app - t * apq);
    m.set(q, q, aqq + t * apq);
    m.set_sym(p, q, T::zero());
    for r in 0..n {
        if r == p || r == q {
            continue;
        }
        let arp = m.get(r, p);
        let arq = m.get(r, q);
        m.set_sym(r, p, c * arp - s * arq);
        m.set_sym(r, q, s * arp + c * arq);
    }
    for r in 0..n {
        let vrp = v.get(r, p);
        let vrq = v.get(r, q);
        v.set(r, p, c * vrp - s * vrq);
        v.set(r, q, s * vrp + c * vrq);
    }
}

/// Solves `A x = b` for complex `A` (row-major `n x n`) by Gaussian
/// elimination with partial pivoting.
pub fn solve_complex<T: Real>(
    n: usize,
    mut a: Vec<Complex<T>>,
    mut b: Vec<Complex<T>>,
) -> Result<Vec<Complex<T>>> {
    if a.len() != n * n || b.len() != n {
        return Err(invalid("dimension mismatch in linear solve"));
    }
    for col in 0..n {
        let (pivot, pivot_mag) =
            (col..n)
                .map(|r| (r, a[r * n + col].norm()))
                .fold(
                    (col, T::zero()),
                    |best, cur| if cur.1 > best.1 { cur } else { best },
                );
        if pivot_mag == T::zero() || !pivot_mag.is_finite() {
            return Err(invalid(format!("singular system at column {col}")));
        }
        if pivot != col {
            for k in 0..n {
                a.swap(col * n + k, pivot * n + k);
            }
            b.swap(col, pivot);
        }
        let d = a[col * n + col];
        for r in col + 1..n {
            let f = a[r * n + col] / d;
            if f.is_zero() {
                continue;
            }
            for k in col..n {
                let upd = a[col * n + k] * f;
                a[r * n + k] -= upd;
            }
            let upd = b[col] * f;
            b[r] -= upd;
        }
    }
    let mut x = vec![Complex::zero(); n];
    for r in (0..n).rev() {
        let mut acc = b[r];
        for k in r + 1..n {
            acc -= a[r * n + k] * x[k];
        }
        x[r] = acc / a[r * n + r];
    }
    Ok(x)
}
