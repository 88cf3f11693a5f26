//! Lanczos iterations: lowest eigenpair and short-iterative time stepping.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::{Error, Result, C64};

/// A Hermitian operator applied matrix-free.
pub trait HermitianOperator {
    fn dim(&self) -> usize;
    /// `y = A x`.
    fn apply(&self, x: &[C64], y: &mut [C64]);
}

pub(crate) fn dot(a: &[C64], b: &[C64]) -> C64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

pub(crate) fn norm(a: &[C64]) -> f64 {
    a.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt()
}

/// Fixes the global phase so the largest-magnitude entry is real positive.
pub fn fix_phase(v: &mut [C64]) {
    let big = v
        .iter()
        .copied()
        .enumerate()
        .max_by(|a, b| a.1.norm().total_cmp(&b.1.norm()))
        .map(|(_, z)| z);
    if let Some(z) = big {
        if z.norm() > 0.0 {
            let phase = z.conj() / z.norm();
            v.iter_mut().for_each(|x| *x *= phase);
        }
    }
}

/// Lanczos basis with full reorthogonalisation.
struct Lanczos {
    basis: Vec<Vec<C64>>,
    alpha: Vec<f64>,
    beta: Vec<f64>,
}

impl Lanczos {
    /// Runs up to `m` steps from the unit vector `v0`. Stops early on an
    /// invariant subspace.
    fn run(op: &impl HermitianOperator, v0: Vec<C64>, m: usize) -> Self {
        let n = op.dim();
        let mut basis = vec![v0];
        let mut alpha = Vec::with_capacity(m);
        let mut beta = Vec::with_capacity(m);
        let mut w = vec![C64::new(0.0, 0.0); n];
        for j in 0..m {
            op.apply(&basis[j], &mut w);
            let a = dot(&basis[j], &w).re;
            alpha.push(a);
            for _ in 0..2 {
                for v in &basis {
                    let c = dot(v, &w);
                    w.iter_mut().zip(v).for_each(|(x, y)| *x -= c * y);
                }
            }
            let b = norm(&w);
            beta.push(b);
            if b <= 1e-13 * (a.abs() + 1.0) || j + 1 == m {
                break;
            }
            basis.push(w.iter().map(|x| x / b).collect());
        }
        Self { basis, alpha, beta }
    }

    fn tridiagonal(&self) -> DMatrix<f64> {
        let k = self.alpha.len();
        DMatrix::from_fn(k, k, |i, j| {
            if i == j {
                self.alpha[i]
            } else if i + 1 == j {
                self.beta[i]
            } else if j + 1 == i {
                self.beta[j]
            } else {
                0.0
            }
        })
    }

    fn combine(&self, coeffs: &[C64], out: &mut [C64]) {
        out.iter_mut().for_each(|x| *x = C64::new(0.0, 0.0));
        for (v, &c) in self.basis.iter().zip(coeffs) {
            out.iter_mut().zip(v).for_each(|(o, x)| *o += c * x);
        }
    }
}

#[derive(Clone, Debug)]
pub struct GroundState {
    pub energy: f64,
    pub vector: Vec<C64>,
    pub residual: f64,
    pub iterations: usize,
}

/// Lowest eigenpair by explicitly restarted Lanczos.
pub fn lowest_eigenpair(
    op: &impl HermitianOperator,
    start: &[C64],
    tol: f64,
    krylov_dim: usize,
    max_restarts: usize,
) -> Result<GroundState> {
    let n = op.dim();
    let mut v: Vec<C64> = start.to_vec();
    let nv = norm(&v);
    if nv == 0.0 || v.len() != n {
        return Err(Error::Numerical("Lanczos start vector is empty or has the wrong length".into()));
    }
    v.iter_mut().for_each(|x| *x /= nv);
    let m = krylov_dim.min(n).max(1);
    let mut av = vec![C64::new(0.0, 0.0); n];
    let mut residual = f64::INFINITY;
    let mut theta = 0.0;
    for restart in 0..=max_restarts {
        let lz = Lanczos::run(op, v.clone(), m);
        let eig = SymmetricEigen::new(lz.tridiagonal());
        let low = eig.eigenvalues.imin();
        theta = eig.eigenvalues[low];
        let s: Vec<C64> = eig.eigenvectors.column(low).iter().map(|&x| C64::new(x, 0.0)).collect();
        lz.combine(&s, &mut v);
        let nv = norm(&v);
        v.iter_mut().for_each(|x| *x /= nv);
        op.apply(&v, &mut av);
        residual = av.iter().zip(&v).map(|(a, x)| (a - x * theta).norm_sqr()).sum::<f64>().sqrt();
        if residual <= tol * theta.abs().max(1.0) {
            fix_phase(&mut v);
            return Ok(GroundState { energy: theta, vector: v, residual, iterations: restart + 1 });
        }
    }
    Err(Error::NoConvergence { what: format!("Lanczos ground state (E ~ {theta})"), residual })
}

/// Short-iterative Lanczos propagation `psi -> exp(-i (A - shift) dt) psi`
/// with adaptive sub-stepping.
#[derive(Clone, Debug)]
pub struct KrylovPropagator {
    pub krylov_dim: usize,
    /// Error bound per unit time.
    pub tol: f64,
    pub shift: f64,
    dt: f64,
    pub substeps: u64,
    pub rejections: u64,
}

impl KrylovPropagator {
    pub fn new(krylov_dim: usize, tol: f64, shift: f64) -> Self {
        Self { krylov_dim, tol, shift, dt: 0.0, substeps: 0, rejections: 0 }
    }

    /// One attempt over `dt`; returns the propagated state and the error
    /// estimate `beta_m |[exp(-i T dt) e_1]_m|`.
    fn attempt(&self, op: &impl HermitianOperator, psi: &[C64], dt: f64) -> (Vec<C64>, f64) {
        let nrm = norm(psi);
        let v0: Vec<C64> = psi.iter().map(|x| x / nrm).collect();
        let lz = Lanczos::run(op, v0, self.krylov_dim.min(op.dim()));
        let k = lz.alpha.len();
        let eig = SymmetricEigen::new(lz.tridiagonal() - DMatrix::identity(k, k) * self.shift);
        let u = &eig.eigenvectors;
        let phases = DVector::from_fn(k, |i, _| (-C64::i() * eig.eigenvalues[i] * dt).exp() * u[(0, i)]);
        let coeffs: Vec<C64> = (0..k).map(|r| (0..k).map(|i| u[(r, i)] * phases[i]).sum::<C64>() * nrm).collect();
        let err = if lz.basis.len() < k || lz.beta[k - 1] <= 1e-13 {
            0.0
        } else {
            lz.beta[k - 1] * coeffs[k - 1].norm() / nrm
        };
        let mut out = vec![C64::new(0.0, 0.0); psi.len()];
        lz.combine(&coeffs, &mut out);
        (out, err)
    }

    /// Propagates `psi` in place over `t_span`.
    pub fn propagate(&mut self, op: &impl HermitianOperator, psi: &mut Vec<C64>, t_span: f64) -> Result<()> {
        let mut t = 0.0;
        if self.dt <= 0.0 {
            self.dt = t_span.min(1.0);
        }
        let mut failures = 0;
        while t < t_span {
            let dt = self.dt.min(t_span - t);
            let (next, err) = self.attempt(op, psi, dt);
            if err <= self.tol * dt {
                *psi = next;
                t += dt;
                self.substeps += 1;
                failures = 0;
                if err < 0.1 * self.tol * dt {
                    self.dt = (self.dt * 1.5).min(t_span.max(self.dt));
                }
            } else {
                self.rejections += 1;
                failures += 1;
                self.dt = dt * 0.5;
                if failures > 60 || self.dt < 1e-12 {
                    return Err(Error::Numerical(format!(
                        "Krylov stepping keeps failing (error {err:.3e} at dt = {dt:.3e})"
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Dense Hermitian matrix as an operator, used in tests and small problems.
pub struct DenseOperator(pub DMatrix<C64>);

impl HermitianOperator for DenseOperator {
    fn dim(&self) -> usize {
        self.0.nrows()
    }

    fn apply(&self, x: &[C64], y: &mut [C64]) {
        for (i, yi) in y.iter_mut().enumerate() {
            *yi = (0..x.len()).map(|j| self.0[(i, j)] * x[j]).sum();
        }
    }
}

/// Dense matrix of an operator, column by column.
pub fn to_dense(op: &impl HermitianOperator) -> DMatrix<C64> {
    let n = op.dim();
    let mut m = DMatrix::zeros(n, n);
    let mut e = vec![C64::new(0.0, 0.0); n];
    let mut col = vec![C64::new(0.0, 0.0); n];
    for j in 0..n {
        e[j] = C64::new(1.0, 0.0);
        op.apply(&e, &mut col);
        for i in 0..n {
            m[(i, j)] = col[i];
        }
        e[j] = C64::new(0.0, 0.0);
    }
    m
}

#[cfg(test)]
mod tests {
    use super::*;

    fn test_matrix(n: usize) -> DMatrix<C64> {
        let a = DMatrix::from_fn(n, n, |i, j| {
            C64::new(((i * 7 + j * 3) % 11) as f64 / 11.0 - 0.5, ((i * 5 + j) % 7) as f64 / 7.0 - 0.5)
        });
        let h = &a + a.adjoint();
        h + DMatrix::from_diagonal(&DVector::from_fn(n, |i, _| C64::new(i as f64, 0.0)))
    }

    #[test]
    fn ground_state_matches_dense() {
        let h = test_matrix(60);
        let eig = SymmetricEigen::new(h.clone());
        let e0 = eig.eigenvalues.min();
        let op = DenseOperator(h);
        let start = vec![C64::new(1.0, 0.0); 60];
        let gs = lowest_eigenpair(&op, &start, 1e-11, 20, 200).unwrap();
        assert!((gs.energy - e0).abs() < 1e-9);
        let big = gs.vector.iter().max_by(|a, b| a.norm().total_cmp(&b.norm())).unwrap();
        assert!(big.im.abs() < 1e-15 && big.re > 0.0);
    }

    #[test]
    fn krylov_matches_dense_exponential() {
        let n = 40;
        let h = test_matrix(n);
        let eig = SymmetricEigen::new(h.clone());
        let psi0: Vec<C64> = (0..n).map(|i| C64::new(1.0 / (1.0 + i as f64), 0.1)).collect();
        let nrm = norm(&psi0);
        let psi0: Vec<C64> = psi0.iter().map(|x| x / nrm).collect();
        let t = 3.7;
        let v = &eig.eigenvectors;
        let c = v.adjoint() * DVector::from_vec(psi0.clone());
        let exact = v * DVector::from_fn(n, |i, _| c[i] * (-C64::i() * eig.eigenvalues[i] * t).exp());

        let op = DenseOperator(h);
        let mut psi = psi0;
        let mut prop = KrylovPropagator::new(20, 1e-12, 0.0);
        prop.propagate(&op, &mut psi, t).unwrap();
        let dev = psi.iter().zip(exact.iter()).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
        assert!(dev < 1e-9, "{dev}");
        assert!((norm(&psi) - 1.0).abs() < 1e-12);
    }
}
