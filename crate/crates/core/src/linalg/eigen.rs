//! Eigenvalues of dense nonsymmetric matrices and eigenvector bases for
//! selected eigenvalue clusters.
//!
//! Eigenvalues come from Householder reduction to upper Hessenberg form
//! followed by the Francis double-shift QR iteration (with exceptional shifts
//! after 10 and 20 stagnant sweeps). Invariant-subspace bases for a cluster of
//! nearby eigenvalues are then obtained by block inverse iteration in complex
//! arithmetic, which converges to the full generalized eigenspace even for
//! repeated or defective eigenvalues.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{LinalgError, Matrix};

/// Relative subdiagonal deflation threshold.
pub const DEFLATION_TOL: f64 = 1e-12;
const MAX_SWEEPS_PER_EIGENVALUE: usize = 60;

/// Householder reduction to upper Hessenberg form (similarity transform).
pub fn hessenberg(a: &Matrix) -> Matrix {
    assert!(a.is_square());
    let n = a.rows();
    let mut h = a.clone();
    if n < 3 {
        return h;
    }
    let mut v = vec![0.0; n];
    for k in 0..n - 2 {
        let alpha_norm = ((k + 1)..n).map(|i| h[(i, k)] * h[(i, k)]).sum::<f64>().sqrt();
        if alpha_norm == 0.0 {
            continue;
        }
        let x0 = h[(k + 1, k)];
        let alpha = if x0 >= 0.0 { -alpha_norm } else { alpha_norm };
        for i in 0..n {
            v[i] = if i > k { h[(i, k)] } else { 0.0 };
        }
        v[k + 1] -= alpha;
        let vnorm2: f64 = v[k + 1..].iter().map(|x| x * x).sum();
        if vnorm2 == 0.0 {
            continue;
        }
        // H <- (I - 2vvᵀ/vᵀv) H
        for j in 0..n {
            let s: f64 = ((k + 1)..n).map(|i| v[i] * h[(i, j)]).sum::<f64>() * 2.0 / vnorm2;
            for i in (k + 1)..n {
                h[(i, j)] -= s * v[i];
            }
        }
        // H <- H (I - 2vvᵀ/vᵀv)
        for i in 0..n {
            let s: f64 = ((k + 1)..n).map(|j| h[(i, j)] * v[j]).sum::<f64>() * 2.0 / vnorm2;
            for j in (k + 1)..n {
                h[(i, j)] -= s * v[j];
            }
        }
        h[(k + 1, k)] = alpha;
        for i in (k + 2)..n {
            h[(i, k)] = 0.0;
        }
    }
    h
}

/// All eigenvalues of a square real matrix, in no particular order.
pub fn eigenvalues(a: &Matrix) -> Result<Vec<Complex64>, LinalgError> {
    if !a.is_square() {
        return Err(LinalgError::DimensionMismatch {
            expected: "square matrix".into(),
            got: format!("{}x{}", a.rows(), a.cols()),
        });
    }
    if !a.is_finite() {
        return Err(LinalgError::NonFinite);
    }
    let n = a.rows();
    let mut h = hessenberg(a);
    let mut out = vec![Complex64::new(0.0, 0.0); n];
    if n == 0 {
        return Ok(out);
    }

    let mut anorm = 0.0;
    for i in 0..n {
        for j in i.saturating_sub(1)..n {
            anorm += h[(i, j)].abs();
        }
    }

    let mut nn = n as isize - 1;
    let mut t = 0.0;
    while nn >= 0 {
        let mut its = 0;
        loop {
            let nu = nn as usize;
            // Look for a single small subdiagonal element.
            let mut l = nu;
            while l >= 1 {
                let mut s = h[(l - 1, l - 1)].abs() + h[(l, l)].abs();
                if s == 0.0 {
                    s = anorm;
                }
                if h[(l, l - 1)].abs() <= DEFLATION_TOL * s {
                    h[(l, l - 1)] = 0.0;
                    break;
                }
                l -= 1;
            }
            let mut x = h[(nu, nu)];
            if l == nu {
                out[nu] = Complex64::new(x + t, 0.0);
                nn -= 1;
            } else {
                let mut y = h[(nu - 1, nu - 1)];
                let mut w = h[(nu, nu - 1)] * h[(nu - 1, nu)];
                if l == nu - 1 {
                    let p = 0.5 * (y - x);
                    let q = p * p + w;
                    let z = q.abs().sqrt();
                    x += t;
                    if q >= 0.0 {
                        let z = p + z.copysign(p);
                        out[nu - 1] = Complex64::new(x + z, 0.0);
                        out[nu] = if z != 0.0 {
                            Complex64::new(x - w / z, 0.0)
                        } else {
                            Complex64::new(x + z, 0.0)
                        };
                    } else {
                        out[nu - 1] = Complex64::new(x + p, z);
                        out[nu] = Complex64::new(x + p, -z);
                    }
                    nn -= 2;
                } else {
                    if its == MAX_SWEEPS_PER_EIGENVALUE {
                        return Err(LinalgError::NoConvergence);
                    }
                    if its > 0 && its % 10 == 0 {
                        // Exceptional shift.
                        t += x;
                        for i in 0..=nu {
                            h[(i, i)] -= x;
                        }
                        let s = h[(nu, nu - 1)].abs() + h[(nu - 1, nu - 2)].abs();
                        x = 0.75 * s;
                        y = x;
                        w = -0.4375 * s * s;
                    }
                    its += 1;
                    francis_sweep(&mut h, l, nu, x, y, w);
                }
            }
            if nn < 0 || l + 1 >= nn as usize {
                break;
            }
        }
    }
    Ok(out)
}

/// One implicit double-shift QR sweep on the active block `l..=nn`.
fn francis_sweep(h: &mut Matrix, l: usize, nn: usize, mut x: f64, mut y: f64, w: f64) {
    let (mut p, mut q, mut r);
    let mut z;
    // Look for two consecutive small subdiagonal elements.
    let mut m = nn - 2;
    loop {
        z = h[(m, m)];
        let rr = x - z;
        let ss = y - z;
        p = (rr * ss - w) / h[(m + 1, m)] + h[(m, m + 1)];
        q = h[(m + 1, m + 1)] - z - rr - ss;
        r = h[(m + 2, m + 1)];
        let s = p.abs() + q.abs() + r.abs();
        p /= s;
        q /= s;
        r /= s;
        if m == l {
            break;
        }
        let u = h[(m, m - 1)].abs() * (q.abs() + r.abs());
        let v = p.abs() * (h[(m - 1, m - 1)].abs() + z.abs() + h[(m + 1, m + 1)].abs());
        if u <= DEFLATION_TOL * v {
            break;
        }
        m -= 1;
    }
    for i in (m + 2)..=nn {
        h[(i, i - 2)] = 0.0;
        if i != m + 2 {
            h[(i, i - 3)] = 0.0;
        }
    }
    for k in m..nn {
        if k != m {
            p = h[(k, k - 1)];
            q = h[(k + 1, k - 1)];
            r = if k != nn - 1 { h[(k + 2, k - 1)] } else { 0.0 };
            x = p.abs() + q.abs() + r.abs();
            if x != 0.0 {
                p /= x;
                q /= x;
                r /= x;
            }
        }
        let s = (p * p + q * q + r * r).sqrt().copysign(p);
        if s == 0.0 {
            continue;
        }
        if k == m {
            if l != m {
                h[(k, k - 1)] = -h[(k, k - 1)];
            }
        } else {
            h[(k, k - 1)] = -s * x;
        }
        p += s;
        x = p / s;
        y = q / s;
        z = r / s;
        q /= p;
        r /= p;
        for j in k..=nn {
            let mut pp = h[(k, j)] + q * h[(k + 1, j)];
            if k != nn - 1 {
                pp += r * h[(k + 2, j)];
                h[(k + 2, j)] -= pp * z;
            }
            h[(k + 1, j)] -= pp * y;
            h[(k, j)] -= pp * x;
        }
        let mmin = if nn < k + 3 { nn } else { k + 3 };
        for i in l..=mmin {
            let mut pp = x * h[(i, k)] + y * h[(i, k + 1)];
            if k != nn - 1 {
                pp += z * h[(i, k + 2)];
                h[(i, k + 2)] -= pp * r;
            }
            h[(i, k + 1)] -= pp * q;
            h[(i, k)] -= pp;
        }
    }
}

/// Largest real part among the eigenvalues of `a`.
pub fn spectral_abscissa(a: &Matrix) -> Result<f64, LinalgError> {
    Ok(eigenvalues(a)?.iter().map(|l| l.re).fold(f64::NEG_INFINITY, f64::max))
}

/// Smallest eigenvalue of a symmetric matrix (real parts; imaginary parts
/// are roundoff for symmetric input).
pub fn min_symmetric_eigenvalue(a: &Matrix) -> Result<f64, LinalgError> {
    Ok(eigenvalues(&a.symmetrize())?
        .iter()
        .map(|l| l.re)
        .fold(f64::INFINITY, f64::min))
}

/// A group of numerically coincident eigenvalues.
#[derive(Debug, Clone)]
pub struct EigenCluster {
    pub center: Complex64,
    pub multiplicity: usize,
}

/// Groups eigenvalues lying within `tol` of one another (single linkage).
pub fn cluster_eigenvalues(values: &[Complex64], tol: f64) -> Vec<EigenCluster> {
    let n = values.len();
    let mut label: Vec<usize> = (0..n).collect();
    fn root(label: &mut [usize], mut i: usize) -> usize {
        while label[i] != i {
            label[i] = label[label[i]];
            i = label[i];
        }
        i
    }
    for i in 0..n {
        for j in (i + 1)..n {
            if (values[i] - values[j]).norm() <= tol {
                let (ri, rj) = (root(&mut label, i), root(&mut label, j));
                if ri != rj {
                    label[rj.max(ri)] = rj.min(ri);
                }
            }
        }
    }
    let mut clusters: Vec<(usize, Complex64, usize)> = Vec::new();
    for i in 0..n {
        let r = root(&mut label, i);
        match clusters.iter_mut().find(|c| c.0 == r) {
            Some(c) => {
                c.1 += values[i];
                c.2 += 1;
            }
            None => clusters.push((r, values[i], 1)),
        }
    }
    clusters
        .into_iter()
        .map(|(_, sum, k)| EigenCluster {
            center: sum / k as f64,
            multiplicity: k,
        })
        .collect()
}

/// Orthonormal complex basis (as columns) of the invariant subspace of `a`
/// belonging to the eigenvalues clustered around `cluster.center`.
pub fn cluster_subspace(a: &Matrix, cluster: &EigenCluster) -> Result<Vec<Vec<Complex64>>, LinalgError> {
    let n = a.rows();
    let k = cluster.multiplicity;
    let scale = 1.0 + a.norm_inf();
    // Shift slightly off the cluster so the factorization stays regular.
    let shift = cluster.center + Complex64::new(1e-10 * scale, 1e-10 * scale);
    let mut m: Vec<Complex64> = a.as_slice().iter().map(|&v| Complex64::new(v, 0.0)).collect();
    for i in 0..n {
        m[i * n + i] -= shift;
    }
    let lu = ComplexLu::factor(n, m, scale);

    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_cafe);
    let mut basis: Vec<Vec<Complex64>> = (0..k)
        .map(|_| {
            (0..n)
                .map(|_| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
                .collect()
        })
        .collect();
    orthonormalize(&mut basis)?;
    for _ in 0..6 {
        for v in basis.iter_mut() {
            *v = lu.solve(v);
        }
        orthonormalize(&mut basis)?;
    }
    Ok(basis)
}

/// Modified Gram-Schmidt in place; errors when the set is rank deficient.
fn orthonormalize(vs: &mut [Vec<Complex64>]) -> Result<(), LinalgError> {
    for i in 0..vs.len() {
        for _pass in 0..2 {
            for j in 0..i {
                let (head, tail) = vs.split_at_mut(i);
                let proj: Complex64 = head[j].iter().zip(tail[0].iter()).map(|(a, b)| a.conj() * b).sum();
                for (t, h) in tail[0].iter_mut().zip(head[j].iter()) {
                    *t -= proj * h;
                }
            }
        }
        let norm = vs[i].iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
        if !(norm > 1e-300) || !norm.is_finite() {
            return Err(LinalgError::SubspaceExtraction(
                "inverse iteration produced a rank-deficient basis".into(),
            ));
        }
        for c in vs[i].iter_mut() {
            *c /= norm;
        }
    }
    Ok(())
}

/// Complex LU with partial pivoting; exact zero pivots are nudged to a tiny
/// value so inverse iteration can proceed on a (nearly) singular shift.
struct ComplexLu {
    n: usize,
    lu: Vec<Complex64>,
    perm: Vec<usize>,
}

impl ComplexLu {
    fn factor(n: usize, mut lu: Vec<Complex64>, scale: f64) -> Self {
        let mut perm: Vec<usize> = (0..n).collect();
        let tiny = f64::EPSILON * scale;
        for k in 0..n {
            let mut p = k;
            let mut best = lu[k * n + k].norm();
            for i in (k + 1)..n {
                let v = lu[i * n + k].norm();
                if v > best {
                    best = v;
                    p = i;
                }
            }
            if p != k {
                for j in 0..n {
                    lu.swap(k * n + j, p * n + j);
                }
                perm.swap(k, p);
            }
            if lu[k * n + k].norm() < tiny {
                lu[k * n + k] = Complex64::new(tiny, 0.0);
            }
            let pivot = lu[k * n + k];
            for i in (k + 1)..n {
                let f = lu[i * n + k] / pivot;
                lu[i * n + k] = f;
                for j in (k + 1)..n {
                    let u = lu[k * n + j];
                    lu[i * n + j] -= f * u;
                }
            }
        }
        Self { n, lu, perm }
    }

    fn solve(&self, b: &[Complex64]) -> Vec<Complex64> {
        let n = self.n;
        let mut x: Vec<Complex64> = self.perm.iter().map(|&p| b[p]).collect();
        for i in 0..n {
            let mut s = x[i];
            for j in 0..i {
                s -= self.lu[i * n + j] * x[j];
            }
            x[i] = s;
        }
        for i in (0..n).rev() {
            let mut s = x[i];
            for j in (i + 1)..n {
                s -= self.lu[i * n + j] * x[j];
            }
            x[i] = s / self.lu[i * n + i];
        }
        x
    }
}
