//! Correlated Gaussian sampling with reproducible per-run streams.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

/// Independent stream for run `run` of a Monte-Carlo batch seeded by `seed`.
pub fn run_rng(seed: u64, run: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(run);
    rng
}

/// Draws `S z` with `S S' = covariance` and `z` standard normal.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianSampler {
    factor: DMatrix<f64>,
}

impl GaussianSampler {
    /// Cholesky factor of a positive definite covariance.
    pub fn from_covariance(cov: &DMatrix<f64>) -> Result<Self> {
        let chol = cov
            .clone()
            .cholesky()
            .ok_or_else(|| Error::Factorization("noise covariance is not positive definite".into()))?;
        Ok(Self { factor: chol.l() })
    }

    /// Symmetric square root of a positive semi-definite covariance.
    pub fn from_psd(cov: &DMatrix<f64>) -> Result<Self> {
        let scale = cov.amax().max(1.0);
        if (cov - cov.transpose()).amax() > 1e-12 * scale {
            return Err(Error::Asymmetric {
                context: "covariance",
                asymmetry: (cov - cov.transpose()).amax(),
            });
        }
        let eig = cov.clone().symmetric_eigen();
        if eig.eigenvalues.min() < -1e-10 * scale {
            return Err(Error::Factorization("covariance is not positive semi-definite".into()));
        }
        let roots = eig.eigenvalues.map(|l| l.max(0.0).sqrt());
        let factor = &eig.eigenvectors * DMatrix::from_diagonal(&roots) * eig.eigenvectors.transpose();
        Ok(Self { factor })
    }

    pub fn dim(&self) -> usize {
        self.factor.nrows()
    }

    pub fn factor(&self) -> &DMatrix<f64> {
        &self.factor
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R, scale: f64) -> DVector<f64> {
        let z = DVector::from_fn(self.dim(), |_, _| rng.sample::<f64, _>(StandardNormal));
        (&self.factor * z) * scale
    }
}

/// One draw from `N(0, W)`.
pub fn sample_noise<R: Rng + ?Sized>(w: &DMatrix<f64>, rng: &mut R) -> Result<DVector<f64>> {
    Ok(GaussianSampler::from_covariance(w)?.sample(rng, 1.0))
}
