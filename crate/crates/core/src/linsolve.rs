//! Solvers for the SPD systems of the chemical-potential update: a direct
//! tridiagonal sweep in 1D, Jacobi-preconditioned conjugate gradients
//! otherwise. Both are strictly sequential so that identical systems yield
//! bitwise identical solutions.

use crate::error::{Error, Result};
use crate::grid::{DiffusionMatrix, ScalarField};

/// Diffusion operator plus a strictly positive diagonal (the reaction and
/// time terms), with right-hand side and solve parameters.
#[derive(Clone, Debug)]
pub struct SpdSystem<'a> {
    pub matrix: &'a DiffusionMatrix,
    pub diagonal: Vec<f64>,
    pub rhs: ScalarField,
    /// Relative residual target.
    pub tolerance: f64,
    pub max_iterations: usize,
}

impl<'a> SpdSystem<'a> {
    pub fn new(
        matrix: &'a DiffusionMatrix,
        diagonal: Vec<f64>,
        rhs: ScalarField,
        tolerance: f64,
        max_iterations: usize,
    ) -> Result<SpdSystem<'a>> {
        let n = matrix.grid().cell_count();
        if diagonal.len() != n || rhs.len() != n {
            return Err(Error::Shape(format!(
                "system size mismatch: operator {n}, diagonal {}, rhs {}",
                diagonal.len(),
                rhs.len()
            )));
        }
        if let Some(i) = diagonal.iter().position(|&d| !(d > 0.0)) {
            return Err(Error::InvalidParameter(format!(
                "added diagonal must be strictly positive, got {} at cell {i}",
                diagonal[i]
            )));
        }
        if !(tolerance > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "tolerance must be positive, got {tolerance}"
            )));
        }
        Ok(SpdSystem {
            matrix,
            diagonal,
            rhs,
            tolerance,
            max_iterations,
        })
    }

    /// out = (A + diag) v.
    pub fn apply_to(&self, v: &[f64], out: &mut [f64]) {
        self.matrix.apply_to(v, out);
        for i in 0..v.len() {
            out[i] += self.diagonal[i] * v[i];
        }
    }
}

/// Direct solve by forward elimination / back substitution; 1D grids only.
pub fn solve_tridiagonal(system: &SpdSystem) -> Result<ScalarField> {
    let grid = system.matrix.grid();
    if grid.dim() != 1 {
        return Err(Error::Shape(format!(
            "tridiagonal solve requires a 1D grid, got dim {}",
            grid.dim()
        )));
    }
    let n = grid.cell_count();
    let faces = system.matrix.face_conductances_x();
    let rhs = system.rhs.values();

    // row i: -faces[i-1], diagonal[i] + incident faces, -faces[i]
    let mut c_prime = vec![0.0; n];
    let mut d_prime = vec![0.0; n];
    let diag = |i: usize| -> f64 {
        let mut d = system.diagonal[i];
        if i > 0 {
            d += faces[i - 1];
        }
        if i + 1 < n {
            d += faces[i];
        }
        d
    };

    let b0 = diag(0);
    if b0 == 0.0 {
        return Err(Error::SingularSystem { row: 0 });
    }
    if n > 1 {
        c_prime[0] = -faces[0] / b0;
    }
    d_prime[0] = rhs[0] / b0;
    for i in 1..n {
        let a = -faces[i - 1];
        let den = diag(i) - a * c_prime[i - 1];
        if den == 0.0 {
            return Err(Error::SingularSystem { row: i });
        }
        if i + 1 < n {
            c_prime[i] = -faces[i] / den;
        }
        d_prime[i] = (rhs[i] - a * d_prime[i - 1]) / den;
    }
    let mut x = vec![0.0; n];
    x[n - 1] = d_prime[n - 1];
    for i in (0..n - 1).rev() {
        x[i] = d_prime[i] - c_prime[i] * x[i + 1];
    }
    ScalarField::from_values(grid, x)
}

#[derive(Clone, Copy, Debug)]
pub struct CgReport {
    pub iterations: usize,
    /// Final true relative residual ||Ax - b|| / ||b||.
    pub residual: f64,
}

/// Jacobi-preconditioned conjugate gradients to the system's relative
/// residual tolerance. The true residual is re-checked explicitly at
/// convergence so the returned contract is honest against recurrence drift.
pub fn solve_cg(system: &SpdSystem) -> Result<(ScalarField, CgReport)> {
    let grid = system.matrix.grid();
    let n = grid.cell_count();
    let b = system.rhs.values();
    let norm_b = norm2(b);
    if norm_b == 0.0 {
        return Ok((
            ScalarField::constant(grid, 0.0),
            CgReport {
                iterations: 0,
                residual: 0.0,
            },
        ));
    }

    let mut inv_diag = system.matrix.diagonal();
    for (d, add) in inv_diag.iter_mut().zip(&system.diagonal) {
        *d = 1.0 / (*d + add);
    }

    let mut x = vec![0.0; n];
    let mut r = b.to_vec();
    let mut z: Vec<f64> = r.iter().zip(&inv_diag).map(|(r, d)| r * d).collect();
    let mut p = z.clone();
    let mut rz: f64 = dot(&r, &z);
    let mut q = vec![0.0; n];
    let mut iterations = 0;

    while iterations < system.max_iterations {
        iterations += 1;
        system.apply_to(&p, &mut q);
        let alpha = rz / dot(&p, &q);
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * q[i];
        }
        if norm2(&r) <= system.tolerance * norm_b {
            // guard against drift of the recurrence residual
            system.apply_to(&x, &mut q);
            for i in 0..n {
                r[i] = b[i] - q[i];
            }
            let true_res = norm2(&r);
            if true_res <= system.tolerance * norm_b {
                return Ok((
                    ScalarField::from_values(grid, x)?,
                    CgReport {
                        iterations,
                        residual: true_res / norm_b,
                    },
                ));
            }
        }
        for i in 0..n {
            z[i] = r[i] * inv_diag[i];
        }
        let rz_next = dot(&r, &z);
        let beta = rz_next / rz;
        rz = rz_next;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    Err(Error::LinearNonConvergence {
        iterations,
        residual: norm2(&r) / norm_b,
    })
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm2(v: &[f64]) -> f64 {
    dot(v, v).sqrt()
}
