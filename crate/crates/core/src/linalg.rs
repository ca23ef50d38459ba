//! Small dense/banded eigensolvers used by the flux-level solver and by the
//! validation oracles.
//!
//! The flux Hamiltonian discretizes to a real symmetric tridiagonal matrix,
//! for which the lowest few eigenpairs are found by Sturm-sequence bisection
//! plus inverse iteration. A cyclic Jacobi solver covers the small dense
//! symmetric matrices that show up in tests.

use ndarray::Array2;

/// Real symmetric tridiagonal matrix: `diag` has length n, `off` length n-1.
#[derive(Debug, Clone)]
pub struct SymTridiag {
    pub diag: Vec<f64>,
    pub off: Vec<f64>,
}

impl SymTridiag {
    pub fn new(diag: Vec<f64>, off: Vec<f64>) -> Self {
        assert_eq!(
            off.len() + 1,
            diag.len(),
            "off-diagonal must be one shorter than the diagonal"
        );
        Self { diag, off }
    }

    pub fn dim(&self) -> usize {
        self.diag.len()
    }

    /// Infinity norm, used to scale degeneracy and residual tolerances.
    pub fn norm_inf(&self) -> f64 {
        let n = self.dim();
        (0..n)
            .map(|i| {
                let left = if i > 0 { self.off[i - 1].abs() } else { 0.0 };
                let right = if i + 1 < n { self.off[i].abs() } else { 0.0 };
                self.diag[i].abs() + left + right
            })
            .fold(0.0, f64::max)
    }

    /// Number of eigenvalues strictly below `lambda` (Sturm sequence via the
    /// LDL^T pivot signs).
    pub fn count_below(&self, lambda: f64) -> usize {
        let n = self.dim();
        let mut count = 0;
        let mut q = self.diag[0] - lambda;
        if q < 0.0 {
            count += 1;
        }
        for i in 1..n {
            let q_safe = if q.abs() < 1e-300 {
                if q >= 0.0 {
                    1e-300
                } else {
                    -1e-300
                }
            } else {
                q
            };
            q = (self.diag[i] - lambda) - self.off[i - 1] * self.off[i - 1] / q_safe;
            if q < 0.0 {
                count += 1;
            }
        }
        count
    }

    /// Lowest `k` eigenvalues in ascending order, each located by bisection.
    pub fn lowest_eigenvalues(&self, k: usize) -> Vec<f64> {
        let n = self.dim();
        assert!(k <= n, "requested more eigenvalues than the dimension");
        // Gershgorin bounds.
        let mut lo = f64::MAX;
        let mut hi = f64::MIN;
        for i in 0..n {
            let left = if i > 0 { self.off[i - 1].abs() } else { 0.0 };
            let right = if i + 1 < n { self.off[i].abs() } else { 0.0 };
            lo = lo.min(self.diag[i] - left - right);
            hi = hi.max(self.diag[i] + left + right);
        }
        let span = (hi - lo).max(f64::MIN_POSITIVE);
        lo -= 1e-3 * span;
        hi += 1e-3 * span;

        let mut eigenvalues = Vec::with_capacity(k);
        let mut floor = lo;
        for j in 0..k {
            let mut a = floor;
            let mut b = hi;
            for _ in 0..300 {
                let mid = 0.5 * (a + b);
                if b - a <= 2.0 * f64::EPSILON * (a.abs() + b.abs()) + f64::MIN_POSITIVE {
                    break;
                }
                if self.count_below(mid) >= j + 1 {
                    b = mid;
                } else {
                    a = mid;
                }
            }
            let lambda = 0.5 * (a + b);
            eigenvalues.push(lambda);
            // The next eigenvalue cannot lie below this one.
            floor = a;
        }
        eigenvalues
    }

    /// Eigenvector for a precomputed eigenvalue, by inverse iteration with a
    /// partially pivoted tridiagonal solve. `ortho` holds previously accepted
    /// eigenvectors; the result is re-orthogonalized against any of them whose
    /// eigenvalue lies within the degeneracy window.
    pub fn eigenvector(&self, lambda: f64, ortho: &[(f64, Vec<f64>)]) -> Vec<f64> {
        let n = self.dim();
        let scale = self.norm_inf().max(f64::MIN_POSITIVE);

        // Deterministic pseudo-random start vector (xorshift64*), so repeated
        // runs produce bit-identical output.
        let mut state: u64 = 0x9e37_79b9_7f4a_7c15 ^ (lambda.to_bits() | 1);
        let mut x: Vec<f64> = (0..n)
            .map(|_| {
                state ^= state << 13;
                state ^= state >> 7;
                state ^= state << 17;
                (state >> 11) as f64 / (1u64 << 53) as f64 - 0.5
            })
            .collect();
        normalize(&mut x);

        // Tunneling doublets in a symmetric double well can sit many orders
        // of magnitude closer than the matrix norm; treat anything below
        // 1e-8 of the norm as a cluster and orthogonalize within it.
        let cluster_window = 1e-8 * scale;
        let mut y = vec![0.0; n];
        for _ in 0..10 {
            solve_shifted(&self.diag, &self.off, lambda, &x, &mut y);
            // Project out near-degenerate partners before normalizing.
            for (mu, v) in ortho {
                if (mu - lambda).abs() <= cluster_window {
                    let dot: f64 = y.iter().zip(v).map(|(a, b)| a * b).sum();
                    y.iter_mut().zip(v).for_each(|(a, b)| *a -= dot * b);
                }
            }
            normalize(&mut y);
            std::mem::swap(&mut x, &mut y);
            if self.residual(lambda, &x) <= 100.0 * f64::EPSILON * scale {
                break;
            }
        }
        x
    }

    /// ||T x - lambda x||_inf
    fn residual(&self, lambda: f64, x: &[f64]) -> f64 {
        let n = self.dim();
        let mut worst = 0.0f64;
        for i in 0..n {
            let mut r = (self.diag[i] - lambda) * x[i];
            if i > 0 {
                r += self.off[i - 1] * x[i - 1];
            }
            if i + 1 < n {
                r += self.off[i] * x[i + 1];
            }
            worst = worst.max(r.abs());
        }
        worst
    }

    /// Lowest `k` eigenpairs; eigenvectors are L2-normalized (unit Euclidean
    /// norm, no grid weight).
    ///
    /// Inverse iteration leaves cross-contamination of order
    /// eps ||T|| / gap between close eigenpairs, which grows quadratically
    /// with the grid size; a closing Rayleigh-Ritz rotation within the
    /// computed subspace removes it.
    pub fn lowest_eigenpairs(&self, k: usize) -> (Vec<f64>, Vec<Vec<f64>>) {
        let eigenvalues = self.lowest_eigenvalues(k);
        let mut pairs: Vec<(f64, Vec<f64>)> = Vec::with_capacity(k);
        for &lambda in &eigenvalues {
            let v = self.eigenvector(lambda, &pairs);
            pairs.push((lambda, v));
        }
        let mut vectors: Vec<Vec<f64>> = pairs.into_iter().map(|(_, v)| v).collect();
        self.rayleigh_ritz(&mut vectors);
        (eigenvalues, vectors)
    }

    /// Re-mix `vectors` by diagonalizing the projection of T onto their span.
    fn rayleigh_ritz(&self, vectors: &mut [Vec<f64>]) {
        let k = vectors.len();
        if k < 2 {
            return;
        }
        let n = self.dim();
        // Orthonormalize (modified Gram-Schmidt); the set is already close.
        for i in 0..k {
            for j in 0..i {
                let dot: f64 = vectors[j].iter().zip(&vectors[i]).map(|(a, b)| a * b).sum();
                for p in 0..n {
                    let vj = vectors[j][p];
                    vectors[i][p] -= dot * vj;
                }
            }
            normalize(&mut vectors[i]);
        }
        // Projected matrix M = V^T T V.
        let mut tv: Vec<Vec<f64>> = Vec::with_capacity(k);
        for v in vectors.iter() {
            let mut w = vec![0.0; n];
            for i in 0..n {
                let mut acc = self.diag[i] * v[i];
                if i > 0 {
                    acc += self.off[i - 1] * v[i - 1];
                }
                if i + 1 < n {
                    acc += self.off[i] * v[i + 1];
                }
                w[i] = acc;
            }
            tv.push(w);
        }
        let mut projected = Array2::zeros((k, k));
        for i in 0..k {
            for j in 0..k {
                projected[[i, j]] = vectors[i].iter().zip(&tv[j]).map(|(a, b)| a * b).sum();
            }
        }
        let (_, rotation) = jacobi_eigh(&projected);
        let old: Vec<Vec<f64>> = vectors.to_vec();
        for (a, v) in vectors.iter_mut().enumerate() {
            for p in 0..n {
                let mut acc = 0.0;
                for (i, o) in old.iter().enumerate() {
                    acc += rotation[[i, a]] * o[p];
                }
                v[p] = acc;
            }
        }
    }
}

fn normalize(x: &mut [f64]) {
    let nrm = x.iter().map(|a| a * a).sum::<f64>().sqrt();
    if nrm > 0.0 {
        x.iter_mut().for_each(|a| *a /= nrm);
    } else {
        x[0] = 1.0;
    }
}

/// Solve (T - sigma I) y = b for tridiagonal T with partial pivoting.
/// Near-singular pivots are clamped, which is exactly what inverse iteration
/// wants at a converged shift.
fn solve_shifted(diag: &[f64], off: &[f64], sigma: f64, b: &[f64], y: &mut [f64]) {
    let n = diag.len();
    if n == 1 {
        let d = diag[0] - sigma;
        let d = if d.abs() < 1e-300 { 1e-300 } else { d };
        y[0] = b[0] / d;
        return;
    }
    // Working bands: alpha = diag of U, gamma = first super, delta = second
    // super (fill-in from pivoting).
    let mut alpha: Vec<f64> = diag.iter().map(|d| d - sigma).collect();
    let mut gamma: Vec<f64> = vec![0.0; n];
    let mut delta: Vec<f64> = vec![0.0; n];
    for i in 0..n - 1 {
        gamma[i] = off[i];
    }
    y.copy_from_slice(b);

    for i in 0..n - 1 {
        // Row i: (alpha[i], gamma[i], delta[i]); row i+1: (off[i], alpha[i+1], gamma[i+1]).
        let mut r1 = (alpha[i], gamma[i], delta[i]);
        let mut r2 = (off[i], alpha[i + 1], gamma[i + 1]);
        if r2.0.abs() > r1.0.abs() {
            std::mem::swap(&mut r1, &mut r2);
            y.swap(i, i + 1);
        }
        let pivot = if r1.0.abs() < 1e-300 {
            if r1.0 >= 0.0 {
                1e-300
            } else {
                -1e-300
            }
        } else {
            r1.0
        };
        let m = r2.0 / pivot;
        alpha[i] = pivot;
        gamma[i] = r1.1;
        delta[i] = r1.2;
        alpha[i + 1] = r2.1 - m * r1.1;
        gamma[i + 1] = r2.2 - m * r1.2;
        let yi = y[i];
        y[i + 1] -= m * yi;
    }

    // Back substitution.
    let clamp = |v: f64| {
        if v.abs() < 1e-300 {
            if v >= 0.0 {
                1e-300
            } else {
                -1e-300
            }
        } else {
            v
        }
    };
    y[n - 1] /= clamp(alpha[n - 1]);
    if n >= 2 {
        y[n - 2] = (y[n - 2] - gamma[n - 2] * y[n - 1]) / clamp(alpha[n - 2]);
    }
    for i in (0..n.saturating_sub(2)).rev() {
        y[i] = (y[i] - gamma[i] * y[i + 1] - delta[i] * y[i + 2]) / clamp(alpha[i]);
    }
}

/// Eigendecomposition of a small dense real symmetric matrix by cyclic Jacobi
/// rotations. Returns eigenvalues ascending and eigenvectors as matching
/// columns. Intended for validation-scale matrices (n up to a few hundred).
pub fn jacobi_eigh(matrix: &Array2<f64>) -> (Vec<f64>, Array2<f64>) {
    let n = matrix.nrows();
    assert_eq!(n, matrix.ncols(), "jacobi_eigh needs a square matrix");
    let mut a = matrix.clone();
    let mut v: Array2<f64> = Array2::eye(n);

    let frob = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let tol = 1e-15 * frob.max(f64::MIN_POSITIVE);
    for _sweep in 0..100 {
        let mut off = 0.0f64;
        for p in 0..n {
            for q in (p + 1)..n {
                off += a[[p, q]].abs();
            }
        }
        if off <= tol {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[[p, q]];
                if apq.abs() <= 1e-300 {
                    continue;
                }
                let theta = (a[[q, q]] - a[[p, p]]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[[k, p]];
                    let akq = a[[k, q]];
                    a[[k, p]] = c * akp - s * akq;
                    a[[k, q]] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[[p, k]];
                    let aqk = a[[q, k]];
                    a[[p, k]] = c * apk - s * aqk;
                    a[[q, k]] = s * apk + c * aqk;
                }
                for k in 0..n {
                    let vkp = v[[k, p]];
                    let vkq = v[[k, q]];
                    v[[k, p]] = c * vkp - s * vkq;
                    v[[k, q]] = s * vkp + c * vkq;
                }
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[[i, i]].total_cmp(&a[[j, j]]));
    let eigenvalues: Vec<f64> = order.iter().map(|&i| a[[i, i]]).collect();
    let mut vectors = Array2::zeros((n, n));
    for (col, &i) in order.iter().enumerate() {
        for k in 0..n {
            vectors[[k, col]] = v[[k, i]];
        }
    }
    (eigenvalues, vectors)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn tridiag_matches_known_laplacian_spectrum() {
        // -u'' on a path graph: eigenvalues 2 - 2 cos(k pi / (n+1)).
        let n = 200;
        let tri = SymTridiag::new(vec![2.0; n], vec![-1.0; n - 1]);
        let eigs = tri.lowest_eigenvalues(5);
        for (k, lambda) in eigs.iter().enumerate() {
            let exact =
                2.0 - 2.0 * ((k as f64 + 1.0) * std::f64::consts::PI / (n as f64 + 1.0)).cos();
            assert!(
                (lambda - exact).abs() <= 1e-12,
                "level {k}: {lambda} vs {exact}"
            );
        }
    }

    #[test]
    fn tridiag_eigenvectors_are_orthonormal_with_small_residual() {
        let n = 400;
        // A rough double-well profile on the diagonal.
        let diag: Vec<f64> = (0..n)
            .map(|i| {
                let x = (i as f64 / (n - 1) as f64 - 0.5) * 10.0;
                2.0 + 0.05 * (x * x - 4.0) * (x * x - 4.0)
            })
            .collect();
        let tri = SymTridiag::new(diag, vec![-1.0; n - 1]);
        let (eigs, vecs) = tri.lowest_eigenpairs(4);
        let scale = tri.norm_inf();
        for (k, v) in vecs.iter().enumerate() {
            assert!(tri.residual(eigs[k], v) <= 1e-11 * scale);
            for (l, w) in vecs.iter().enumerate() {
                let dot: f64 = v.iter().zip(w).map(|(a, b)| a * b).sum();
                let expect = if k == l { 1.0 } else { 0.0 };
                assert!((dot - expect).abs() <= 1e-10, "({k},{l}): {dot}");
            }
        }
    }

    #[test]
    fn jacobi_recovers_hand_diagonalizable_matrix() {
        let a = array![[2.0, 1.0, 0.0], [1.0, 2.0, 1.0], [0.0, 1.0, 2.0]];
        let (eigs, vecs) = jacobi_eigh(&a);
        let sqrt2 = std::f64::consts::SQRT_2;
        let exact = [2.0 - sqrt2, 2.0, 2.0 + sqrt2];
        for (lambda, mu) in eigs.iter().zip(exact) {
            assert!((lambda - mu).abs() <= 1e-13);
        }
        // Columns diagonalize a.
        for (col, &lambda) in eigs.iter().enumerate() {
            for row in 0..3 {
                let av: f64 = (0..3).map(|k| a[[row, k]] * vecs[[k, col]]).sum();
                assert!((av - lambda * vecs[[row, col]]).abs() <= 1e-12);
            }
        }
    }
}
