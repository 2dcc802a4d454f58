//! Shared dense linear algebra helpers on complex matrices.
//!
//! Everything here is deterministic: parallel reductions use a fixed block
//! tree whose shape depends only on the problem size, never on the number of
//! worker threads, so repeated runs are bit-identical.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rayon::prelude::*;

use crate::{Error, Result};

/// Row-block size for the fixed-tree snapshot reductions.
const BLOCK_ROWS: usize = 1024;

/// Replaces `h` by its Hermitian part `(h + h†)/2`.
pub fn symmetrize(h: &mut DMatrix<Complex64>) {
    let n = h.nrows();
    for i in 0..n {
        h[(i, i)] = Complex64::new(h[(i, i)].re, 0.0);
        for j in (i + 1)..n {
            let avg = 0.5 * (h[(i, j)] + h[(j, i)].conj());
            h[(i, j)] = avg;
            h[(j, i)] = avg.conj();
        }
    }
}

/// Eigenvalues of a Hermitian matrix, ascending. The input is symmetrized
/// first so tiny assembly asymmetry cannot leak complex parts.
pub fn hermitian_eigenvalues(h: &DMatrix<Complex64>) -> DVector<f64> {
    let mut m = h.clone();
    symmetrize(&mut m);
    let mut ev: Vec<f64> = m.symmetric_eigen().eigenvalues.iter().cloned().collect();
    ev.sort_by(f64::total_cmp);
    DVector::from_vec(ev)
}

/// Smallest eigenvalue of a Hermitian matrix.
pub fn min_hermitian_eigenvalue(h: &DMatrix<Complex64>) -> f64 {
    let ev = hermitian_eigenvalues(h);
    ev[0]
}

/// Full Hermitian eigendecomposition (values ascending, matching columns).
pub fn hermitian_eigen(h: &DMatrix<Complex64>) -> (DVector<f64>, DMatrix<Complex64>) {
    let mut m = h.clone();
    symmetrize(&mut m);
    let se = m.symmetric_eigen();
    let n = se.eigenvalues.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| se.eigenvalues[a].total_cmp(&se.eigenvalues[b]));
    let vals = DVector::from_iterator(n, order.iter().map(|&i| se.eigenvalues[i]));
    let mut vecs = DMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        vecs.set_column(dst, &se.eigenvectors.column(src));
    }
    (vals, vecs)
}

// Singular-value computations below deliberately avoid nalgebra's SVD:
// its Golub-Kahan iteration mis-deflates exactly rank-deficient inputs
// (both real and complex), returning factorizations whose largest
// singular value can exceed the Frobenius norm. The Hermitian
// eigensolver does not share the defect, so singular values are obtained
// from Gram or Jordan-Wielandt matrices instead.

/// Largest singular value.
pub fn spectral_norm(m: &DMatrix<Complex64>) -> f64 {
    let (r, c) = m.shape();
    if r == 0 || c == 0 {
        return 0.0;
    }
    let mut gram = if c <= r { m.adjoint() * m } else { m * m.adjoint() };
    symmetrize(&mut gram);
    let top = gram
        .symmetric_eigen()
        .eigenvalues
        .iter()
        .cloned()
        .fold(0.0, f64::max);
    top.max(0.0).sqrt()
}

/// Moore-Penrose pseudoinverse with singular values below
/// `rel_tol * sigma_max` discarded.
///
/// Works on the Hermitian block matrix `[[0, M], [M†, 0]]`, whose
/// positive eigenvalues are the singular values of `M` and whose
/// eigenvectors stack the corresponding left and right singular vectors.
pub fn pseudoinverse(m: &DMatrix<Complex64>, rel_tol: f64) -> Result<DMatrix<Complex64>> {
    let (rows, cols) = m.shape();
    if rows == 0 || cols == 0 {
        return Err(Error::GramZero);
    }
    let dim = rows + cols;
    let mut block = DMatrix::<Complex64>::zeros(dim, dim);
    for i in 0..rows {
        for j in 0..cols {
            block[(i, rows + j)] = m[(i, j)];
            block[(rows + j, i)] = m[(i, j)].conj();
        }
    }
    let se = block.symmetric_eigen();
    let smax = se.eigenvalues.iter().cloned().fold(0.0, f64::max);
    if smax == 0.0 {
        return Err(Error::GramZero);
    }
    let mut pinv = DMatrix::<Complex64>::zeros(cols, rows);
    for (idx, &sigma) in se.eigenvalues.iter().enumerate() {
        if sigma <= rel_tol * smax {
            continue;
        }
        let w = se.eigenvectors.column(idx);
        // w = (u, v)/sqrt(2) with Mv = sigma u, so 1/sigma * v u^H
        // contributes 2/sigma * w_lower w_upper^H.
        let scale = Complex64::new(2.0 / sigma, 0.0);
        for i in 0..cols {
            for j in 0..rows {
                pinv[(i, j)] += scale * w[rows + i] * w[j].conj();
            }
        }
    }
    Ok(pinv)
}

/// Eigenvalues of a general complex matrix.
///
/// A permutation pre-pass (the classical balancing isolation step) peels off
/// rows and columns whose off-diagonal entries are exactly zero; their
/// diagonal entries are exact eigenvalues. This makes triangular-permutable
/// inputs (weighted shifts, Jordan chains) exact instead of scattering their
/// eigenvalues by the usual eps^(1/k) perturbation cloud. The remaining dense
/// block goes through a Schur decomposition.
pub fn complex_eigenvalues(a: &DMatrix<Complex64>) -> Result<Vec<Complex64>> {
    let n = a.nrows();
    assert_eq!(n, a.ncols(), "eigenvalues need a square matrix");
    if n == 0 {
        return Ok(Vec::new());
    }
    let mut m = a.clone();
    let mut isolated: Vec<Complex64> = Vec::new();
    let mut active: Vec<usize> = (0..n).collect();
    loop {
        let mut progressed = false;
        // rows with no off-diagonal entries in the active block
        'rows: for (pi, &i) in active.iter().enumerate() {
            if active
                .iter()
                .all(|&j| j == i || m[(i, j)] == Complex64::new(0.0, 0.0))
            {
                isolated.push(m[(i, i)]);
                active.remove(pi);
                progressed = true;
                break 'rows;
            }
        }
        if progressed {
            continue;
        }
        // columns with no off-diagonal entries in the active block
        'cols: for (pj, &j) in active.iter().enumerate() {
            if active
                .iter()
                .all(|&i| i == j || m[(i, j)] == Complex64::new(0.0, 0.0))
            {
                isolated.push(m[(j, j)]);
                active.remove(pj);
                progressed = true;
                break 'cols;
            }
        }
        if !progressed {
            break;
        }
    }
    if !active.is_empty() {
        let k = active.len();
        let mut block = DMatrix::<Complex64>::zeros(k, k);
        for (bi, &i) in active.iter().enumerate() {
            for (bj, &j) in active.iter().enumerate() {
                block[(bi, bj)] = m[(i, j)];
            }
        }
        let schur = block
            .try_schur(1.0e-14, 200 * k.max(10))
            .ok_or_else(|| Error::EigensolverFailure("Schur iteration did not converge".into()))?;
        let t = schur.unpack().1;
        for i in 0..k {
            isolated.push(t[(i, i)]);
        }
    }
    // silence the unused-assignment lint on the working copy
    let _ = &mut m;
    Ok(isolated)
}

/// `X† diag(w) Y` accumulated over fixed row blocks.
///
/// Block partials are computed independently (in parallel when a rayon pool
/// is active) and then combined strictly in block order, so the floating
/// point result does not depend on the thread count.
pub fn weighted_gram(
    x: &DMatrix<Complex64>,
    y: &DMatrix<Complex64>,
    w: &[f64],
) -> Result<DMatrix<Complex64>> {
    if x.nrows() != y.nrows() || x.nrows() != w.len() {
        return Err(Error::ShapeMismatch(format!(
            "weighted_gram: {}x{} vs {}x{} with {} weights",
            x.nrows(),
            x.ncols(),
            y.nrows(),
            y.ncols(),
            w.len()
        )));
    }
    let m = x.nrows();
    let blocks: Vec<(usize, usize)> = (0..m)
        .step_by(BLOCK_ROWS)
        .map(|lo| (lo, (lo + BLOCK_ROWS).min(m)))
        .collect();
    let partials: Vec<DMatrix<Complex64>> = blocks
        .par_iter()
        .map(|&(lo, hi)| {
            let xb = x.rows(lo, hi - lo);
            let mut yb = y.rows(lo, hi - lo).clone_owned();
            for (r, wi) in w[lo..hi].iter().enumerate() {
                for c in 0..yb.ncols() {
                    yb[(r, c)] *= *wi;
                }
            }
            xb.adjoint() * yb
        })
        .collect();
    let mut acc = DMatrix::<Complex64>::zeros(x.ncols(), y.ncols());
    for p in partials {
        acc += p;
    }
    Ok(acc)
}
