//! Analytic test densities that bypass the projector.

use super::model::LogDensity;

/// Independent standard normals in `d` dimensions.
#[derive(Debug, Clone)]
pub struct StandardGaussian {
    dim: usize,
}

impl StandardGaussian {
    pub fn new(dim: usize) -> Self {
        Self { dim }
    }
}

impl LogDensity for StandardGaussian {
    fn dim(&self) -> usize {
        self.dim
    }

    fn log_density_grad(&self, x: &[f64], grad: &mut [f64]) -> f64 {
        let mut lp = 0.0;
        for (g, &v) in grad.iter_mut().zip(x) {
            *g = -v;
            lp -= 0.5 * v * v;
        }
        lp
    }
}

/// Zero-mean Gaussian with a dense covariance, parameterised by its precision matrix.
#[derive(Debug, Clone)]
pub struct CorrelatedGaussian {
    covariance: Vec<f64>,
    precision: Vec<f64>,
    dim: usize,
}

impl CorrelatedGaussian {
    /// `covariance` is row-major `d × d` and must be symmetric positive definite.
    pub fn new(covariance: Vec<f64>, dim: usize) -> Option<Self> {
        if covariance.len() != dim * dim {
            return None;
        }
        let m = nalgebra::DMatrix::from_row_slice(dim, dim, &covariance);
        let inv = m.cholesky()?.inverse();
        let precision = (0..dim)
            .flat_map(|i| (0..dim).map(move |j| (i, j)))
            .map(|(i, j)| inv[(i, j)])
            .collect();
        Some(Self {
            covariance,
            precision,
            dim,
        })
    }

    pub fn covariance(&self) -> &[f64] {
        &self.covariance
    }
}

impl LogDensity for CorrelatedGaussian {
    fn dim(&self) -> usize {
        self.dim
    }

    fn log_density_grad(&self, x: &[f64], grad: &mut [f64]) -> f64 {
        let d = self.dim;
        let mut lp = 0.0;
        for i in 0..d {
            let row = &self.precision[i * d..(i + 1) * d];
            let px: f64 = row.iter().zip(x).map(|(a, b)| a * b).sum();
            grad[i] = -px;
            lp -= 0.5 * x[i] * px;
        }
        lp
    }
}
