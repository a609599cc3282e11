// SPDX-License-Identifier: Apache-2.0

//! Matrix-free conjugate gradients for `(σ I - κ div((A + ν) grad)) z = b`.

use crate::error::{Error, Result};
use crate::grid::{Grid, ScalarField};

use super::{SolverConfig, StepCoefficients};

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct LinearStats {
    pub iterations: usize,
    /// Final residual relative to the zero-mean right-hand side.
    pub residual: f64,
}

/// `out = div((a + ν) grad u)` on the staggered stencil.
pub(crate) fn apply_diffusion(
    grid: Grid,
    ax: &[f64],
    ay: &[f64],
    nu: f64,
    u: &[f64],
    out: &mut [f64],
) {
    let n = grid.n();
    let inv_h2 = 1.0 / (grid.h() * grid.h());
    for i in 0..n {
        let ip = if i + 1 == n { 0 } else { i + 1 };
        let im = if i == 0 { n - 1 } else { i - 1 };
        let (row, row_p, row_m) = (i * n, ip * n, im * n);
        for j in 0..n {
            let jp = if j + 1 == n { 0 } else { j + 1 };
            let jm = if j == 0 { n - 1 } else { j - 1 };
            let k = row + j;
            let c = u[k];
            let east = (ax[k] + nu) * (u[row_p + j] - c);
            let west = (ax[row_m + j] + nu) * (c - u[row_m + j]);
            let north = (ay[k] + nu) * (u[row + jp] - c);
            let south = (ay[row + jm] + nu) * (c - u[row + jm]);
            out[k] = (east - west + north - south) * inv_h2;
        }
    }
}

struct Operator<'a> {
    grid: Grid,
    coeffs: &'a StepCoefficients,
    kappa: f64,
    sigma: f64,
    nu: f64,
}

impl Operator<'_> {
    fn apply(&self, x: &[f64], out: &mut [f64]) {
        apply_diffusion(
            self.grid,
            self.coeffs.ax(),
            self.coeffs.ay(),
            self.nu,
            x,
            out,
        );
        for (o, xi) in out.iter_mut().zip(x) {
            *o = self.sigma * xi - self.kappa * *o;
        }
    }

    fn diagonal(&self) -> Vec<f64> {
        let n = self.grid.n();
        let inv_h2 = 1.0 / (self.grid.h() * self.grid.h());
        let (ax, ay) = (self.coeffs.ax(), self.coeffs.ay());
        let mut d = vec![0.0; self.grid.len()];
        for i in 0..n {
            let im = (i + n - 1) % n;
            for j in 0..n {
                let jm = (j + n - 1) % n;
                let k = i * n + j;
                let sum = ax[k] + ax[im * n + j] + ay[k] + ay[i * n + jm] + 4.0 * self.nu;
                d[k] = self.sigma + self.kappa * sum * inv_h2;
            }
        }
        d
    }

    /// Upper bound of the operator norm over `σ`.
    fn spread(&self) -> f64 {
        let inv_h2 = 1.0 / (self.grid.h() * self.grid.h());
        1.0 + self.kappa * 8.0 * (self.coeffs.max_diffusivity() + self.nu) * inv_h2 / self.sigma
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Solves `(σ I - κ div((A + ν) grad)) z = z_old + κ div C`.
///
/// The constant mode is handled exactly, `mean(z) = mean(b) / σ`; conjugate
/// gradients act on the zero-mean remainder, warm-started from `z_old`.
pub fn implicit_solve(
    z_old: &ScalarField,
    coeffs: &StepCoefficients,
    kappa: f64,
    sigma: f64,
    nu: f64,
    config: &SolverConfig,
) -> Result<(ScalarField, LinearStats)> {
    let grid = z_old.grid();
    if coeffs.grid() != grid {
        return Err(Error::GridMismatch("state and coefficients".into()));
    }
    if !(kappa >= 0.0) || !(sigma > 0.0) || !(nu >= 0.0) {
        return Err(Error::Config(format!(
            "implicit solve needs kappa >= 0, sigma > 0, nu >= 0 (got {kappa}, {sigma}, {nu})"
        )));
    }
    let len = grid.len();
    let mut b: Vec<f64> = z_old
        .values()
        .iter()
        .zip(coeffs.source().values())
        .map(|(z, s)| z + kappa * s)
        .collect();
    let b_mean = b.iter().sum::<f64>() / len as f64;
    let b_full_norm = dot(&b, &b).sqrt();
    b.iter_mut().for_each(|v| *v -= b_mean);
    let b_norm = dot(&b, &b).sqrt();

    let op = Operator {
        grid,
        coeffs,
        kappa,
        sigma,
        nu,
    };
    let z_mean = z_old.mean();
    let mut x: Vec<f64> = z_old.values().iter().map(|v| v - z_mean).collect();
    let mut r = vec![0.0; len];
    op.apply(&x, &mut r);
    for (ri, bi) in r.iter_mut().zip(&b) {
        *ri = bi - *ri;
    }

    // rounding in forming b and applying the operator sets a floor
    let floor = 16.0 * f64::EPSILON * op.spread() * b_full_norm;
    let threshold = (config.linear_tol * b_norm).max(floor);
    let inv_diag = config.precondition.then(|| {
        op.diagonal()
            .into_iter()
            .map(|d| 1.0 / d)
            .collect::<Vec<_>>()
    });
    let precond = |r: &[f64], z: &mut [f64]| match &inv_diag {
        Some(d) => z
            .iter_mut()
            .zip(r.iter().zip(d))
            .for_each(|(zi, (ri, di))| *zi = ri * di),
        None => z.copy_from_slice(r),
    };

    let mut zr = vec![0.0; len];
    precond(&r, &mut zr);
    let mut p = zr.clone();
    let mut ap = vec![0.0; len];
    let mut rz = dot(&r, &zr);
    let mut res = dot(&r, &r).sqrt();
    let mut iterations = 0;
    while res > threshold {
        if iterations == config.linear_maxiter {
            return Err(Error::LinearSolve {
                iterations,
                residual: res / b_norm.max(f64::MIN_POSITIVE),
            });
        }
        op.apply(&p, &mut ap);
        let pap = dot(&p, &ap);
        if !(pap > 0.0) {
            break;
        }
        let alpha = rz / pap;
        for k in 0..len {
            x[k] += alpha * p[k];
            r[k] -= alpha * ap[k];
        }
        precond(&r, &mut zr);
        let rz_new = dot(&r, &zr);
        let beta = rz_new / rz;
        rz = rz_new;
        for k in 0..len {
            p[k] = zr[k] + beta * p[k];
        }
        res = dot(&r, &r).sqrt();
        iterations += 1;
    }

    let x_mean = x.iter().sum::<f64>() / len as f64;
    let mean = b_mean / sigma;
    x.iter_mut().for_each(|v| *v += mean - x_mean);
    let z = ScalarField::from_values(grid, x)?;
    Ok((
        z,
        LinearStats {
            iterations,
            residual: if b_norm > 0.0 { res / b_norm } else { 0.0 },
        },
    ))
}
