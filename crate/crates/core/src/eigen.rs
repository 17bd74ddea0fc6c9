//! Dense eigen-analysis of small real matrices.

use nalgebra::{Matrix6, SMatrix, Schur};
use num_complex::Complex64;

pub type CMatrix6 = SMatrix<Complex64, 6, 6>;

const SCHUR_MAX_ITER: usize = 2000;
const SVD_MAX_ITER: usize = 2000;

/// Deterministic orthogonal matrix: a product of Givens rotations.
fn mixing_rotation(k: usize) -> Matrix6<f64> {
    let mut q = Matrix6::identity();
    for i in 0..5 {
        let th = 0.37 + 0.61 * (k + i) as f64;
        let (s, c) = th.sin_cos();
        let mut g = Matrix6::identity();
        g[(i, i)] = c;
        g[(i + 1, i + 1)] = c;
        g[(i, i + 1)] = -s;
        g[(i + 1, i)] = s;
        q = g * q;
    }
    q
}

/// Eigenvalues of a real 6×6 matrix sorted by (Re, Im).
///
/// The real Schur iteration occasionally stalls on matrices with clustered
/// eigenvalues; it is then repeated on an orthogonally rotated copy, which
/// has the same spectrum. Returns NaNs if every attempt stalls.
pub fn eigenvalues(m: &Matrix6<f64>) -> [Complex64; 6] {
    let mut out = [Complex64::new(f64::NAN, f64::NAN); 6];
    if !m.iter().all(|x| x.is_finite()) {
        return out;
    }
    for attempt in 0..8 {
        let a = if attempt == 0 {
            *m
        } else {
            let q = mixing_rotation(attempt);
            q.transpose() * m * q
        };
        if let Some(schur) = Schur::try_new(a, f64::EPSILON, SCHUR_MAX_ITER) {
            for (o, e) in out.iter_mut().zip(schur.complex_eigenvalues().iter()) {
                *o = *e;
            }
            sort_spectrum(&mut out);
            return out;
        }
    }
    out
}

pub fn sort_spectrum(ev: &mut [Complex64]) {
    ev.sort_by(|a, b| a.re.total_cmp(&b.re).then(a.im.total_cmp(&b.im)));
}

/// Smallest pairwise distance within a spectrum, with the indices realizing it.
pub fn min_gap(ev: &[Complex64]) -> (f64, usize, usize) {
    let mut best = (f64::INFINITY, 0, 0);
    for i in 0..ev.len() {
        for j in i + 1..ev.len() {
            let d = (ev[i] - ev[j]).norm();
            if d < best.0 {
                best = (d, i, j);
            }
        }
    }
    best
}

fn complexify(m: &Matrix6<f64>) -> CMatrix6 {
    m.map(|x| Complex64::new(x, 0.0))
}

fn frobenius(m: &Matrix6<f64>) -> f64 {
    m.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Right singular vectors of `a` ordered by ascending singular value.
fn smallest_singular(a: &CMatrix6) -> (Vec<f64>, Vec<[Complex64; 6]>) {
    let svd = match a.clone().try_svd(false, true, f64::EPSILON, SVD_MAX_ITER) {
        Some(svd) => svd,
        None => {
            let nan = [Complex64::new(f64::NAN, f64::NAN); 6];
            return (vec![f64::NAN; 6], vec![nan; 6]);
        }
    };
    let v_t = svd.v_t.expect("requested v_t");
    let mut idx: Vec<usize> = (0..6).collect();
    idx.sort_by(|&i, &j| svd.singular_values[i].total_cmp(&svd.singular_values[j]));
    let values = idx.iter().map(|&i| svd.singular_values[i]).collect();
    let vectors = idx
        .iter()
        .map(|&i| {
            let mut v = [Complex64::new(0.0, 0.0); 6];
            for (k, x) in v.iter_mut().enumerate() {
                *x = v_t[(i, k)].conj();
            }
            v
        })
        .collect();
    (values, vectors)
}

/// Unit right eigenvectors, one per eigenvalue in `ev`.
///
/// Eigenvalues closer than `cluster_tol` (relative to the matrix norm) are
/// treated as one cluster. If the cluster has full geometric multiplicity the
/// corresponding null space basis is returned; otherwise the same vector is
/// repeated, which makes the eigenvector matrix singular as it should be for a
/// defective eigenvalue.
pub fn eigenvectors(m: &Matrix6<f64>, ev: &[Complex64; 6], cluster_tol: f64) -> [[Complex64; 6]; 6] {
    let scale = frobenius(m).max(1e-300);
    let mc = complexify(m);
    let mut out = [[Complex64::new(0.0, 0.0); 6]; 6];
    let mut done = [false; 6];
    for i in 0..6 {
        if done[i] {
            continue;
        }
        let members: Vec<usize> = (i..6)
            .filter(|&j| !done[j] && (ev[j] - ev[i]).norm() <= cluster_tol * scale)
            .collect();
        let centre = members.iter().map(|&j| ev[j]).sum::<Complex64>() / members.len() as f64;
        let shifted = mc - CMatrix6::identity() * centre;
        let (sv, vecs) = smallest_singular(&shifted);
        let null_tol = (cluster_tol * scale).max(1e3 * f64::EPSILON * scale);
        let nullity = sv.iter().take_while(|&&s| s <= null_tol).count().max(1);
        for (k, &j) in members.iter().enumerate() {
            out[j] = if k < nullity { vecs[k] } else { vecs[0] };
            done[j] = true;
        }
    }
    out
}

/// 2-norm condition number of the matrix whose columns are `vecs`.
pub fn condition_number(vecs: &[[Complex64; 6]; 6]) -> f64 {
    let mut v = CMatrix6::zeros();
    for (c, col) in vecs.iter().enumerate() {
        for (r, x) in col.iter().enumerate() {
            v[(r, c)] = *x;
        }
    }
    let Some(svd) = v.try_svd(false, false, f64::EPSILON, SVD_MAX_ITER) else {
        return f64::NAN;
    };
    let sv = svd.singular_values;
    let max = sv.iter().cloned().fold(0.0, f64::max);
    let min = sv.iter().cloned().fold(f64::INFINITY, f64::min);
    if min <= 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

/// Residual ‖(M − λ)v‖ for each eigenpair.
pub fn eigen_residuals(m: &Matrix6<f64>, ev: &[Complex64; 6], vecs: &[[Complex64; 6]; 6]) -> [f64; 6] {
    let mc = complexify(m);
    let mut out = [0.0; 6];
    for k in 0..6 {
        let v = SMatrix::<Complex64, 6, 1>::from_column_slice(&vecs[k]);
        let r = mc * v - v * ev[k];
        out[k] = r.norm();
    }
    out
}

/// Nearest-neighbour relabelling of `next` so that each entry continues the
/// corresponding entry of `prev`. Searches all permutations, which is cheap
/// for six elements.
pub fn match_continuation(prev: &[Complex64; 6], next: &[Complex64; 6]) -> [Complex64; 6] {
    let mut perm = [0usize, 1, 2, 3, 4, 5];
    let mut best = perm;
    let mut best_cost = f64::INFINITY;
    permute(&mut perm, 0, &mut |p| {
        let cost: f64 = (0..6).map(|i| (prev[i] - next[p[i]]).norm_sqr()).sum();
        if cost < best_cost {
            best_cost = cost;
            best = *p;
        }
    });
    let mut out = *next;
    for i in 0..6 {
        out[i] = next[best[i]];
    }
    out
}

fn permute(p: &mut [usize; 6], k: usize, visit: &mut impl FnMut(&[usize; 6])) {
    if k == p.len() {
        visit(p);
        return;
    }
    for i in k..p.len() {
        p.swap(k, i);
        permute(p, k + 1, visit);
        p.swap(k, i);
    }
}
