//! Truncated Karhunen–Loève expansion of a Gaussian field on the unit square
//! with covariance operator `(-Laplace + tau^2)^-alpha` under Neumann
//! boundary conditions.
//!
//! The eigenpairs are `lambda_ij = (pi^2 (i^2 + j^2) + tau^2)^-alpha` and
//! `e_ij(x, y) = c_i c_j cos(i pi x) cos(j pi y)` with `c_0 = 1`,
//! `c_k = sqrt(2)` otherwise. Coefficients are indexed row-major in `(i, j)`.

use std::f64::consts::{PI, SQRT_2};

use crate::error::{Error, Result};
use crate::hierarchy::ParameterVector;

#[derive(Debug, Clone)]
pub struct KlField {
    modes: usize,
    tau: f64,
    alpha: f64,
    sqrt_lambda: Vec<f64>,
}

fn norm_const(k: usize) -> f64 {
    if k == 0 {
        1.0
    } else {
        SQRT_2
    }
}

/// `c_k cos(k pi x)` for `k = 0..modes`.
fn cosines(modes: usize, x: f64, out: &mut [f64]) {
    for (k, o) in out.iter_mut().enumerate().take(modes) {
        *o = norm_const(k) * (k as f64 * PI * x).cos();
    }
}

impl KlField {
    /// Keeps all modes with `0 <= i, j <= max_index`.
    pub fn new(max_index: usize, tau: f64, alpha: f64) -> Result<Self> {
        if !(tau >= 0.0 && alpha > 0.0) {
            return Err(Error::InvalidInput(format!("need tau >= 0 and alpha > 0 (tau={tau}, alpha={alpha})")));
        }
        if tau == 0.0 {
            return Err(Error::InvalidInput("tau = 0 leaves the constant mode with infinite variance".into()));
        }
        let modes = max_index + 1;
        let mut sqrt_lambda = Vec::with_capacity(modes * modes);
        for i in 0..modes {
            for j in 0..modes {
                sqrt_lambda.push(Self::eigenvalue_of(i, j, tau, alpha).sqrt());
            }
        }
        Ok(Self { modes, tau, alpha, sqrt_lambda })
    }

    fn eigenvalue_of(i: usize, j: usize, tau: f64, alpha: f64) -> f64 {
        let k2 = (i * i + j * j) as f64;
        (PI * PI * k2 + tau * tau).powf(-alpha)
    }

    pub fn eigenvalue(&self, i: usize, j: usize) -> f64 {
        Self::eigenvalue_of(i, j, self.tau, self.alpha)
    }

    /// Number of modes per axis.
    pub fn modes(&self) -> usize {
        self.modes
    }

    /// Parameter dimension (retained modes).
    pub fn dim(&self) -> usize {
        self.modes * self.modes
    }

    fn check(&self, theta: &ParameterVector) -> Result<()> {
        if theta.dim() < self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), found: theta.dim() });
        }
        Ok(())
    }

    /// Pointwise variance of the truncated log field.
    pub fn variance_at(&self, x: f64, y: f64) -> f64 {
        let mut cx = vec![0.0; self.modes];
        let mut cy = vec![0.0; self.modes];
        cosines(self.modes, x, &mut cx);
        cosines(self.modes, y, &mut cy);
        let mut v = 0.0;
        for (row, a) in self.sqrt_lambda.chunks_exact(self.modes).zip(&cx) {
            for (l, b) in row.iter().zip(&cy) {
                let s = l * a * b;
                v += s * s;
            }
        }
        v
    }

    /// Log field at arbitrary points.
    pub fn log_values(&self, theta: &ParameterVector, points: &[(f64, f64)]) -> Result<Vec<f64>> {
        self.check(theta)?;
        let m = self.modes;
        let mut cx = vec![0.0; m];
        let mut cy = vec![0.0; m];
        Ok(points
            .iter()
            .map(|&(x, y)| {
                cosines(m, x, &mut cx);
                cosines(m, y, &mut cy);
                let mut s = 0.0;
                let rows = self.sqrt_lambda.chunks_exact(m).zip(theta.coords().chunks_exact(m));
                for ((row, th), a) in rows.zip(&cx) {
                    let inner: f64 = row.iter().zip(th).zip(&cy).map(|((l, t), c)| l * t * c).sum();
                    s += a * inner;
                }
                s
            })
            .collect())
    }

    /// Permeability `exp(log field)` at arbitrary points.
    pub fn field_values(&self, theta: &ParameterVector, points: &[(f64, f64)]) -> Result<Vec<f64>> {
        Ok(self.log_values(theta, points)?.into_iter().map(f64::exp).collect())
    }

    /// Cosine tables for a fixed set of coordinates, reusable across draws.
    pub fn basis_table(&self, coords: &[f64]) -> Vec<f64> {
        let m = self.modes;
        let mut out = vec![0.0; coords.len() * m];
        for (p, &x) in coords.iter().enumerate() {
            cosines(m, x, &mut out[p * m..(p + 1) * m]);
        }
        out
    }

    /// Log field on the tensor grid `xs x ys` given cosine tables from
    /// [`KlField::basis_table`]; output is indexed `[ix * ny + iy]`.
    pub fn log_on_grid(&self, theta: &ParameterVector, xtab: &[f64], ytab: &[f64]) -> Result<Vec<f64>> {
        self.check(theta)?;
        let m = self.modes;
        let nx = xtab.len() / m;
        let ny = ytab.len() / m;
        // partial[i * ny + iy] = sum_j sqrt(lambda_ij) theta_ij c_j cos(j pi y)
        let mut partial = vec![0.0; m * ny];
        for i in 0..m {
            let row = &self.sqrt_lambda[i * m..(i + 1) * m];
            let th = &theta.coords()[i * m..(i + 1) * m];
            let a: Vec<f64> = row.iter().zip(th).map(|(l, t)| l * t).collect();
            for iy in 0..ny {
                let c = &ytab[iy * m..(iy + 1) * m];
                partial[i * ny + iy] = a.iter().zip(c).map(|(a, c)| a * c).sum();
            }
        }
        let mut out = vec![0.0; nx * ny];
        for ix in 0..nx {
            let c = &xtab[ix * m..(ix + 1) * m];
            let o = &mut out[ix * ny..(ix + 1) * ny];
            for (i, &ci) in c.iter().enumerate() {
                let p = &partial[i * ny..(i + 1) * ny];
                for (o, p) in o.iter_mut().zip(p) {
                    *o += ci * p;
                }
            }
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;

    #[test]
    fn eigenvalues_by_hand() {
        let f = KlField::new(16, 0.1, 1.0).unwrap();
        assert!((f.eigenvalue(0, 0) - 100.0).abs() < 1e-9);
        assert!((f.eigenvalue(1, 0) - 1.0 / (PI * PI + 0.01)).abs() < 1e-15);
        assert!((f.eigenvalue(1, 0) - 0.101_22).abs() < 1e-5);
        assert_eq!(f.dim(), 289);
    }

    #[test]
    fn zero_coefficients_give_unit_field() {
        let f = KlField::new(4, 0.1, 1.0).unwrap();
        let v = f.field_values(&ParameterVector::zeros(25), &[(0.1, 0.2), (0.9, 0.5)]).unwrap();
        assert_eq!(v, vec![1.0, 1.0]);
    }

    #[test]
    fn grid_evaluation_matches_pointwise() {
        let f = KlField::new(6, 0.1, 1.0).unwrap();
        let mut rng = stream(3, &[]);
        let theta = ParameterVector::standard_normal(f.dim(), &mut rng);
        let xs = [0.05, 0.4, 0.77];
        let ys = [0.11, 0.5, 0.93, 0.99];
        let g = f.log_on_grid(&theta, &f.basis_table(&xs), &f.basis_table(&ys)).unwrap();
        for (ix, &x) in xs.iter().enumerate() {
            for (iy, &y) in ys.iter().enumerate() {
                let p = f.log_values(&theta, &[(x, y)]).unwrap()[0];
                assert!((g[ix * ys.len() + iy] - p).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn rejects_short_theta() {
        let f = KlField::new(3, 0.1, 1.0).unwrap();
        assert!(f.log_values(&ParameterVector::zeros(4), &[(0.5, 0.5)]).is_err());
    }
}
