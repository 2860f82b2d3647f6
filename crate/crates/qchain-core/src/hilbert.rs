//! Dense complex linear algebra over small Hilbert spaces.
//!
//! Vectors and operators are double-precision complex arrays backed by
//! `nalgebra`. Composite spaces use a fixed big-endian Kronecker convention:
//! in `a ⊗ b` the left factor is the slow (most significant) index, so the
//! basis state `|i⟩ ⊗ |j⟩` sits at index `i * dim(b) + j`. Every basis-index
//! computation in the crate derives from this convention.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

pub type C64 = Complex64;
pub type CVector = DVector<C64>;
pub type COperator = DMatrix<C64>;

/// Default cap on composite dimensions, overridable via `QCHAIN_DIM_CAP`.
pub const DEFAULT_DIM_CAP: usize = 4096;

/// Dimensions at or above this use the blocked `zgemm` kernel for products.
const BLOCKED_GEMM_MIN_DIM: usize = 32;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum HilbertError {
    #[error("composite dimension {dim} exceeds cap {cap} (override with QCHAIN_DIM_CAP)")]
    CapacityExceeded { dim: usize, cap: usize },

    #[error("factor index {index} out of range for {count} factors")]
    FactorIndexOutOfRange { index: usize, count: usize },

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("operator is not square ({rows}x{cols})")]
    NotSquare { rows: usize, cols: usize },

    #[error("seed vectors are not orthonormal (max deviation {deviation:.3e})")]
    NotOrthonormal { deviation: f64 },

    #[error("basis completion failed: only {found} of {dim} orthonormal columns")]
    CompletionFailed { found: usize, dim: usize },
}

/// Active composite-dimension cap: `QCHAIN_DIM_CAP` when set, else 4096.
pub fn dim_cap() -> usize {
    std::env::var("QCHAIN_DIM_CAP")
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .filter(|&cap| cap >= 1)
        .unwrap_or(DEFAULT_DIM_CAP)
}

pub fn identity(dim: usize) -> COperator {
    COperator::identity(dim, dim)
}

/// Computational basis vector `|k⟩`.
pub fn basis_vector(dim: usize, k: usize) -> CVector {
    assert!(k < dim, "basis index {k} out of range for dim {dim}");
    let mut v = CVector::zeros(dim);
    v[k] = C64::new(1.0, 0.0);
    v
}

/// Rank-one operator `|a⟩⟨b|`.
pub fn outer_product(a: &CVector, b: &CVector) -> COperator {
    a * b.adjoint()
}

/// The 2×2 Hadamard gate.
pub fn hadamard() -> COperator {
    let h = std::f64::consts::FRAC_1_SQRT_2;
    COperator::from_row_slice(
        2,
        2,
        &[
            C64::new(h, 0.0),
            C64::new(h, 0.0),
            C64::new(h, 0.0),
            C64::new(-h, 0.0),
        ],
    )
}

/// Real 2×2 rotation: entries cos θ on the diagonal, ∓sin θ / ±sin θ off it.
pub fn rotation(theta: f64) -> COperator {
    let (s, c) = theta.sin_cos();
    COperator::from_row_slice(
        2,
        2,
        &[
            C64::new(c, 0.0),
            C64::new(-s, 0.0),
            C64::new(s, 0.0),
            C64::new(c, 0.0),
        ],
    )
}

/// Kronecker product of operators; the left operand is the slow index.
pub fn tensor_product(a: &COperator, b: &COperator) -> Result<COperator, HilbertError> {
    let dim = a.nrows() * b.nrows();
    let cap = dim_cap();
    if dim > cap {
        return Err(HilbertError::CapacityExceeded { dim, cap });
    }
    Ok(a.kronecker(b))
}

/// Kronecker product of vectors; the left operand is the slow index.
pub fn tensor_product_vec(a: &CVector, b: &CVector) -> Result<CVector, HilbertError> {
    let dim = a.len() * b.len();
    let cap = dim_cap();
    if dim > cap {
        return Err(HilbertError::CapacityExceeded { dim, cap });
    }
    let mut out = CVector::zeros(dim);
    for i in 0..a.len() {
        for j in 0..b.len() {
            out[i * b.len() + j] = a[i] * b[j];
        }
    }
    Ok(out)
}

/// Lift `op` to the composite of `dims`, acting on factor `factor_index` and
/// as identity on all others.
pub fn embed_operator(
    op: &COperator,
    factor_index: usize,
    dims: &[usize],
) -> Result<COperator, HilbertError> {
    if factor_index >= dims.len() {
        return Err(HilbertError::FactorIndexOutOfRange {
            index: factor_index,
            count: dims.len(),
        });
    }
    if op.nrows() != op.ncols() {
        return Err(HilbertError::NotSquare {
            rows: op.nrows(),
            cols: op.ncols(),
        });
    }
    if op.nrows() != dims[factor_index] {
        return Err(HilbertError::DimensionMismatch {
            expected: dims[factor_index],
            actual: op.nrows(),
        });
    }
    let left: usize = dims[..factor_index].iter().product();
    let right: usize = dims[factor_index + 1..].iter().product();
    let lifted = tensor_product(&identity(left), op)?;
    tensor_product(&lifted, &identity(right))
}

/// Matrix product, routed through a blocked complex gemm for larger sizes.
pub fn matmul(a: &COperator, b: &COperator) -> COperator {
    assert_eq!(
        a.ncols(),
        b.nrows(),
        "matmul shape mismatch: {}x{} * {}x{}",
        a.nrows(),
        a.ncols(),
        b.nrows(),
        b.ncols()
    );
    let (m, k, n) = (a.nrows(), a.ncols(), b.ncols());
    if m.min(k).min(n) < BLOCKED_GEMM_MIN_DIM {
        return a * b;
    }
    let mut c = COperator::zeros(m, n);
    // nalgebra stores column-major; num_complex::Complex64 is repr(C) and
    // layout-compatible with [f64; 2].
    unsafe {
        matrixmultiply::zgemm(
            matrixmultiply::CGemmOption::Standard,
            matrixmultiply::CGemmOption::Standard,
            m,
            k,
            n,
            [1.0, 0.0],
            a.as_ptr() as *const [f64; 2],
            1,
            m as isize,
            b.as_ptr() as *const [f64; 2],
            1,
            k as isize,
            [0.0, 0.0],
            c.as_mut_ptr() as *mut [f64; 2],
            1,
            m as isize,
        );
    }
    c
}

/// Largest entry of `|U†U − I|`; infinite for non-square input.
pub fn unitarity_deviation(u: &COperator) -> f64 {
    if u.nrows() != u.ncols() {
        return f64::INFINITY;
    }
    let gram = matmul(&u.adjoint(), u);
    let n = gram.nrows();
    let mut worst = 0.0f64;
    for j in 0..n {
        for i in 0..n {
            let expected = if i == j { 1.0 } else { 0.0 };
            let dev = (gram[(i, j)] - C64::new(expected, 0.0)).norm();
            worst = worst.max(dev);
        }
    }
    worst
}

/// True iff the largest entry of `|U†U − I|` stays below `tol`.
pub fn adjoint_check(u: &COperator, tol: f64) -> bool {
    unitarity_deviation(u) < tol
}

/// Haar-distributed random unitary, deterministic in `seed`.
///
/// Complex Gaussian entries followed by a QR decomposition with the diagonal
/// of R phase-normalized, which makes the distribution exactly Haar.
pub fn haar_random_unitary(dim: usize, seed: u64) -> COperator {
    assert!(dim >= 1, "haar_random_unitary needs dim >= 1");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let g = COperator::from_fn(dim, dim, |_, _| {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        C64::new(re, im)
    });
    let qr = g.qr();
    let r = qr.r();
    let mut u = qr.q();
    for j in 0..dim {
        let d = r[(j, j)];
        let phase = if d.norm() > 0.0 {
            d / d.norm()
        } else {
            C64::new(1.0, 0.0)
        };
        for i in 0..dim {
            u[(i, j)] *= phase;
        }
    }
    u
}

/// Random unit vector, deterministic in `seed`.
pub fn random_state(dim: usize, seed: u64) -> CVector {
    assert!(dim >= 1, "random_state needs dim >= 1");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    loop {
        let v = CVector::from_fn(dim, |_, _| {
            let re: f64 = rng.sample(StandardNormal);
            let im: f64 = rng.sample(StandardNormal);
            C64::new(re, im)
        });
        let n = v.norm();
        if n > 1e-6 {
            return v.unscale(n);
        }
    }
}

/// Extend orthonormal `seed` columns to a full orthonormal basis of `dim`,
/// preserving the seed columns verbatim as the leading columns.
pub fn complete_basis(seed: &[CVector], dim: usize) -> Result<COperator, HilbertError> {
    if seed.len() > dim {
        return Err(HilbertError::DimensionMismatch {
            expected: dim,
            actual: seed.len(),
        });
    }
    let mut worst = 0.0f64;
    for (i, a) in seed.iter().enumerate() {
        if a.len() != dim {
            return Err(HilbertError::DimensionMismatch {
                expected: dim,
                actual: a.len(),
            });
        }
        for (j, b) in seed.iter().enumerate() {
            let expected = if i == j { 1.0 } else { 0.0 };
            worst = worst.max((a.dotc(b) - C64::new(expected, 0.0)).norm());
        }
    }
    if worst > 1e-10 {
        return Err(HilbertError::NotOrthonormal { deviation: worst });
    }

    let mut cols: Vec<CVector> = seed.to_vec();
    for threshold in [1e-6, 1e-12] {
        for k in 0..dim {
            if cols.len() == dim {
                break;
            }
            let mut v = basis_vector(dim, k);
            // Two Gram-Schmidt sweeps keep the result orthonormal to ~1e-15.
            for _ in 0..2 {
                for c in &cols {
                    let ov = c.dotc(&v);
                    v -= c * ov;
                }
            }
            let n = v.norm();
            if n > threshold {
                cols.push(v.unscale(n));
            }
        }
    }
    if cols.len() < dim {
        return Err(HilbertError::CompletionFailed {
            found: cols.len(),
            dim,
        });
    }
    Ok(COperator::from_columns(&cols))
}

/// Largest entrywise difference between two operators.
pub fn max_abs_diff(a: &COperator, b: &COperator) -> f64 {
    assert_eq!(a.shape(), b.shape(), "shape mismatch in max_abs_diff");
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| (x - y).norm())
        .fold(0.0, f64::max)
}

/// Largest entrywise difference between two vectors.
pub fn max_abs_diff_vec(a: &CVector, b: &CVector) -> f64 {
    assert_eq!(a.len(), b.len(), "length mismatch in max_abs_diff_vec");
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| (x - y).norm())
        .fold(0.0, f64::max)
}
