//! Linear solvers for the per-species systems of the time step.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::fem::SparseOperator;
use crate::math;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SolverKind {
    /// Jacobi-preconditioned conjugate gradients; symmetric positive definite systems only.
    ConjugateGradient,
    /// Jacobi-preconditioned BiCGSTAB.
    #[default]
    BiCgStab,
    /// Dense LU with partial pivoting. Intended for small systems and cross-checks.
    Direct,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverConfig {
    pub kind: SolverKind,
    pub rtol: f64,
    pub max_iter: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            kind: SolverKind::BiCgStab,
            rtol: 1e-10,
            max_iter: 5000,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.rtol > 0.0 && self.rtol < 1.0) {
            return Err(Error::InvalidArgument(alloc::format!(
                "solver rtol must lie in (0, 1), got {}",
                self.rtol
            )));
        }
        if self.max_iter == 0 {
            return Err(Error::InvalidArgument("solver max_iter must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveReport {
    pub x: Vec<f64>,
    pub iterations: usize,
    /// `‖Ax − b‖ / ‖b‖`, recomputed from the returned `x`.
    pub residual: f64,
}

fn norm(v: &[f64]) -> f64 {
    math::sqrt(dot(v, v))
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn true_residual(a: &SparseOperator, x: &[f64], b: &[f64]) -> f64 {
    let ax = a.apply(x);
    let r: Vec<f64> = ax.iter().zip(b).map(|(p, q)| q - p).collect();
    norm(&r)
}

/// Solves `A x = b` to `‖Ax − b‖ ≤ rtol ‖b‖`, starting from `x0` when given.
pub fn solve_linear(a: &SparseOperator, b: &[f64], x0: Option<&[f64]>, cfg: &SolverConfig) -> Result<SolveReport> {
    let n = a.dim();
    if b.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: b.len(),
        });
    }
    if let Some(x0) = x0 {
        if x0.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: x0.len(),
            });
        }
    }
    if b.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument("right-hand side is not finite".into()));
    }
    let bnorm = norm(b);
    if bnorm == 0.0 {
        return Ok(SolveReport {
            x: vec![0.0; n],
            iterations: 0,
            residual: 0.0,
        });
    }
    let (x, iterations) = match cfg.kind {
        SolverKind::ConjugateGradient => cg(a, b, x0, cfg, bnorm)?,
        SolverKind::BiCgStab => bicgstab(a, b, x0, cfg, bnorm)?,
        SolverKind::Direct => (dense_lu(a, b)?, 1),
    };
    let residual = true_residual(a, &x, b) / bnorm;
    let method = match cfg.kind {
        SolverKind::ConjugateGradient => "conjugate gradients",
        SolverKind::BiCgStab => "BiCGSTAB",
        SolverKind::Direct => "dense LU",
    };
    // Recurrence residuals drift; accept a small slack on the recomputed one.
    if !(residual <= 10.0 * cfg.rtol) {
        return Err(Error::SolverNotConverged {
            method,
            iterations,
            residual,
        });
    }
    Ok(SolveReport {
        x,
        iterations,
        residual,
    })
}

fn jacobi(a: &SparseOperator) -> Vec<f64> {
    a.diagonal()
        .into_iter()
        .map(|d| if d != 0.0 && d.is_finite() { 1.0 / d } else { 1.0 })
        .collect()
}

fn start(a: &SparseOperator, b: &[f64], x0: Option<&[f64]>) -> (Vec<f64>, Vec<f64>) {
    let x = x0.map_or_else(|| vec![0.0; b.len()], <[f64]>::to_vec);
    let ax = a.apply(&x);
    let r = b.iter().zip(&ax).map(|(p, q)| p - q).collect();
    (x, r)
}

fn cg(a: &SparseOperator, b: &[f64], x0: Option<&[f64]>, cfg: &SolverConfig, bnorm: f64) -> Result<(Vec<f64>, usize)> {
    let n = b.len();
    let minv = jacobi(a);
    let (mut x, mut r) = start(a, b, x0);
    if norm(&r) <= cfg.rtol * bnorm {
        return Ok((x, 0));
    }
    let mut z: Vec<f64> = r.iter().zip(&minv).map(|(p, q)| p * q).collect();
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut ap = vec![0.0; n];
    for it in 1..=cfg.max_iter {
        a.matvec(&p, &mut ap);
        let pap = dot(&p, &ap);
        if !(pap > 0.0) {
            return Err(Error::SolverBreakdown {
                method: "conjugate gradients",
                iterations: it,
                residual: norm(&r) / bnorm,
            });
        }
        let alpha = rz / pap;
        for k in 0..n {
            x[k] += alpha * p[k];
            r[k] -= alpha * ap[k];
        }
        if norm(&r) <= cfg.rtol * bnorm {
            return Ok((x, it));
        }
        for k in 0..n {
            z[k] = r[k] * minv[k];
        }
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for k in 0..n {
            p[k] = z[k] + beta * p[k];
        }
    }
    Err(Error::SolverNotConverged {
        method: "conjugate gradients",
        iterations: cfg.max_iter,
        residual: norm(&r) / bnorm,
    })
}

fn bicgstab(
    a: &SparseOperator,
    b: &[f64],
    x0: Option<&[f64]>,
    cfg: &SolverConfig,
    bnorm: f64,
) -> Result<(Vec<f64>, usize)> {
    const METHOD: &str = "BiCGSTAB";
    let n = b.len();
    let minv = jacobi(a);
    let (mut x, mut r) = start(a, b, x0);
    if norm(&r) <= cfg.rtol * bnorm {
        return Ok((x, 0));
    }
    let r_hat = r.clone();
    let mut rho = 1.0;
    let mut alpha = 1.0;
    let mut omega = 1.0;
    let mut v = vec![0.0; n];
    let mut p = vec![0.0; n];
    let mut y = vec![0.0; n];
    let mut z = vec![0.0; n];
    let mut s = vec![0.0; n];
    let mut t = vec![0.0; n];
    let breakdown = |it, r: &[f64]| Error::SolverBreakdown {
        method: METHOD,
        iterations: it,
        residual: norm(r) / bnorm,
    };
    for it in 1..=cfg.max_iter {
        let rho_new = dot(&r_hat, &r);
        if rho_new == 0.0 || !rho_new.is_finite() {
            return Err(breakdown(it, &r));
        }
        let beta = (rho_new / rho) * (alpha / omega);
        rho = rho_new;
        for k in 0..n {
            p[k] = r[k] + beta * (p[k] - omega * v[k]);
            y[k] = p[k] * minv[k];
        }
        a.matvec(&y, &mut v);
        let rv = dot(&r_hat, &v);
        if rv == 0.0 || !rv.is_finite() {
            return Err(breakdown(it, &r));
        }
        alpha = rho / rv;
        for k in 0..n {
            s[k] = r[k] - alpha * v[k];
        }
        if norm(&s) <= cfg.rtol * bnorm {
            for k in 0..n {
                x[k] += alpha * y[k];
            }
            return Ok((x, it));
        }
        for k in 0..n {
            z[k] = s[k] * minv[k];
        }
        a.matvec(&z, &mut t);
        let tt = dot(&t, &t);
        if tt == 0.0 {
            return Err(breakdown(it, &s));
        }
        omega = dot(&t, &s) / tt;
        for k in 0..n {
            x[k] += alpha * y[k] + omega * z[k];
            r[k] = s[k] - omega * t[k];
        }
        if norm(&r) <= cfg.rtol * bnorm {
            return Ok((x, it));
        }
        if omega == 0.0 {
            return Err(breakdown(it, &r));
        }
    }
    Err(Error::SolverNotConverged {
        method: METHOD,
        iterations: cfg.max_iter,
        residual: norm(&r) / bnorm,
    })
}

fn dense_lu(a: &SparseOperator, b: &[f64]) -> Result<Vec<f64>> {
    let n = b.len();
    let mut m = vec![0.0; n * n];
    for r in 0..n {
        for (c, v) in a.row(r) {
            m[r * n + c] = v;
        }
    }
    let mut x = b.to_vec();
    let scale = a.max_abs().max(f64::MIN_POSITIVE);
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&i, &j| m[i * n + col].abs().total_cmp(&m[j * n + col].abs()))
            .expect("non-empty range");
        if m[pivot * n + col].abs() <= 1e-14 * scale {
            return Err(Error::SolverBreakdown {
                method: "dense LU",
                iterations: col,
                residual: f64::NAN,
            });
        }
        if pivot != col {
            for k in 0..n {
                m.swap(col * n + k, pivot * n + k);
            }
            x.swap(col, pivot);
        }
        let d = m[col * n + col];
        for r in col + 1..n {
            let f = m[r * n + col] / d;
            if f != 0.0 {
                for k in col..n {
                    m[r * n + k] -= f * m[col * n + k];
                }
                x[r] -= f * x[col];
            }
        }
    }
    for r in (0..n).rev() {
        let mut acc = x[r];
        for k in r + 1..n {
            acc -= m[r * n + k] * x[k];
        }
        x[r] = acc / m[r * n + r];
    }
    Ok(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fem::{assemble_mass, assemble_stiffness, P1Space};
    use crate::geometry::DomainMap;
    use crate::mesh::ReferenceMesh;

    const KINDS: [SolverKind; 3] = [SolverKind::ConjugateGradient, SolverKind::BiCgStab, SolverKind::Direct];

    fn cfg(kind: SolverKind) -> SolverConfig {
        SolverConfig {
            kind,
            ..SolverConfig::default()
        }
    }

    #[test]
    fn identity_returns_rhs() {
        let a = SparseOperator::identity(5);
        let b = [1.0, -2.0, 3.5, 0.0, 7.0];
        for kind in KINDS {
            let rep = solve_linear(&a, &b, None, &cfg(kind)).unwrap();
            for (x, y) in rep.x.iter().zip(&b) {
                assert!((x - y).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn two_by_two() {
        let a = SparseOperator::from_triplets(2, [(0, 0, 2.0), (0, 1, 1.0), (1, 0, 1.0), (1, 1, 2.0)]);
        for kind in KINDS {
            let rep = solve_linear(&a, &[3.0, 3.0], None, &cfg(kind)).unwrap();
            assert!((rep.x[0] - 1.0).abs() < 1e-10 && (rep.x[1] - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn singular_neumann_system() {
        let space = P1Space::new(&ReferenceMesh::uniform(6).unwrap());
        let id = DomainMap::identity(1.0).unwrap();
        let s = assemble_stiffness(&space, &id, 0.0, 1.0).unwrap();
        let rep = solve_linear(&s, &vec![0.0; space.dofs()], None, &cfg(SolverKind::BiCgStab)).unwrap();
        assert!(rep.x.iter().all(|&v| v == rep.x[0]));
        // A compatible right-hand side (zero mean) is solvable by CG up to a constant.
        let mut b: Vec<f64> = space.coords().iter().map(|p| p[0] - 0.5).collect();
        let mean = b.iter().sum::<f64>() / b.len() as f64;
        b.iter_mut().for_each(|v| *v -= mean);
        let rep = solve_linear(&s, &b, None, &cfg(SolverKind::ConjugateGradient)).unwrap();
        assert!(rep.residual <= 1e-9);
    }

    #[test]
    fn indefinite_shift_is_handled_by_bicgstab() {
        let space = P1Space::new(&ReferenceMesh::uniform(8).unwrap());
        let id = DomainMap::identity(1.0).unwrap();
        let mut a = assemble_mass(&space, &id, 0.0).unwrap();
        let s = assemble_stiffness(&space, &id, 0.0, 1.0).unwrap();
        // M + τS − 3τM with τ = 0.01 keeps the operator nonsingular but shifted.
        a.add_scaled(0.01, &s);
        let m = a.clone();
        a.add_scaled(-0.3, &m);
        let b: Vec<f64> = (0..space.dofs()).map(|k| ((k * 7) % 5) as f64 - 2.0).collect();
        let it = solve_linear(&a, &b, None, &cfg(SolverKind::BiCgStab)).unwrap();
        let lu = solve_linear(&a, &b, None, &cfg(SolverKind::Direct)).unwrap();
        for (x, y) in it.x.iter().zip(&lu.x) {
            assert!((x - y).abs() <= 1e-7 * (1.0 + y.abs()));
        }
    }

    #[test]
    fn non_convergence_is_reported() {
        let space = P1Space::new(&ReferenceMesh::uniform(8).unwrap());
        let id = DomainMap::identity(1.0).unwrap();
        let s = assemble_stiffness(&space, &id, 0.0, 1.0).unwrap();
        let mut m = assemble_mass(&space, &id, 0.0).unwrap();
        m.add_scaled(1.0, &s);
        let b = vec![1.0; space.dofs()];
        let c = SolverConfig {
            kind: SolverKind::ConjugateGradient,
            rtol: 1e-14,
            max_iter: 2,
        };
        assert!(matches!(
            solve_linear(&m, &b, None, &c),
            Err(Error::SolverNotConverged { iterations: 2, .. })
        ));
    }

    #[test]
    fn rejects_bad_input() {
        let a = SparseOperator::identity(3);
        assert!(solve_linear(&a, &[1.0, 2.0], None, &SolverConfig::default()).is_err());
        assert!(solve_linear(&a, &[1.0, f64::NAN, 0.0], None, &SolverConfig::default()).is_err());
        assert!(SolverConfig { rtol: 0.0, ..SolverConfig::default() }.validate().is_err());
    }
}
