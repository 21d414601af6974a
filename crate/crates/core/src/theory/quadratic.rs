use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed::{derive_seed, rng_from, stream};

const SYMMETRY_TOL: f64 = 1e-10;
const PSD_TOL: f64 = 1e-12;

/// Two quadratic objectives `L(theta) = 0.5 (theta - b)^T A (theta - b)` sharing a parameter
/// space, with additive Gaussian gradient noise of std `sigma / sqrt(N)` per coordinate.
#[derive(Clone, Debug, PartialEq)]
pub struct QuadraticPair {
    a_rl: DMatrix<f64>,
    b_rl: DVector<f64>,
    a_il: DMatrix<f64>,
    b_il: DVector<f64>,
    pub sigma_il: f64,
    pub sigma_rl: f64,
    pub n_il: usize,
    pub n_rl: usize,
    l_rl: f64,
    l_il: f64,
}

/// Knobs for [`QuadraticPair::random`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RandomPairOptions {
    pub dim: usize,
    /// Smallest eigenvalue relative to the largest (which is scaled to `l`).
    pub min_eig_ratio: f64,
    pub l_rl: f64,
    pub l_il: f64,
    pub relation: Relation,
    pub sigma: f64,
    pub batch: usize,
    /// Scale of the random start relative to the targets.
    pub start_scale: f64,
}

/// How the IL target relates to the RL target.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Relation {
    /// Independent random targets and curvatures.
    Independent,
    /// `b_il = b_rl` and `A_il` a multiple of `A_rl`: the gradients are always parallel.
    Aligned,
}

impl Default for RandomPairOptions {
    fn default() -> Self {
        RandomPairOptions {
            dim: 4,
            min_eig_ratio: 0.1,
            l_rl: 1.0,
            l_il: 1.0,
            relation: Relation::Independent,
            sigma: 0.0,
            batch: 16,
            start_scale: 3.0,
        }
    }
}

fn largest_eigenvalue(a: &DMatrix<f64>) -> f64 {
    SymmetricEigen::new(a.clone()).eigenvalues.max()
}

fn check_matrix(name: &str, a: &DMatrix<f64>, b: &DVector<f64>) -> Result<()> {
    if !a.is_square() || a.nrows() != b.len() || b.is_empty() {
        return Err(Error::Shape(format!("{name}: matrix {}x{} with target of length {}", a.nrows(), a.ncols(), b.len())));
    }
    if a.iter().chain(b.iter()).any(|v| !v.is_finite()) {
        return Err(Error::Numeric(format!("{name}: non-finite entries")));
    }
    let scale = a.amax().max(1.0);
    if (a - a.transpose()).amax() > SYMMETRY_TOL * scale {
        return Err(Error::Config(format!("{name}: matrix is not symmetric")));
    }
    let min = SymmetricEigen::new(a.clone()).eigenvalues.min();
    if min < -PSD_TOL * scale {
        return Err(Error::Config(format!("{name}: matrix has negative eigenvalue {min:e}")));
    }
    Ok(())
}

fn random_spd(rng: &mut impl Rng, dim: usize, top: f64, min_ratio: f64) -> DMatrix<f64> {
    let g = DMatrix::from_fn(dim, dim, |_, _| rng.sample::<f64, _>(StandardNormal));
    let q = g.qr().q();
    let mut eig = DVector::from_fn(dim, |_, _| top * rng.random_range(min_ratio..=1.0));
    eig[0] = top;
    let a = &q * DMatrix::from_diagonal(&eig) * q.transpose();
    // Exact symmetry so eigen-solvers see a symmetric input.
    (&a + a.transpose()) * 0.5
}

impl QuadraticPair {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        a_rl: DMatrix<f64>,
        b_rl: DVector<f64>,
        a_il: DMatrix<f64>,
        b_il: DVector<f64>,
        sigma_il: f64,
        sigma_rl: f64,
        n_il: usize,
        n_rl: usize,
    ) -> Result<Self> {
        check_matrix("RL objective", &a_rl, &b_rl)?;
        check_matrix("IL objective", &a_il, &b_il)?;
        if a_rl.nrows() != a_il.nrows() {
            return Err(Error::Shape("objectives live in different dimensions".into()));
        }
        if !(sigma_il >= 0.0 && sigma_rl >= 0.0) || n_il == 0 || n_rl == 0 {
            return Err(Error::Config("noise std must be >= 0 and batch sizes positive".into()));
        }
        let l_rl = largest_eigenvalue(&a_rl);
        let l_il = largest_eigenvalue(&a_il);
        if l_rl <= 0.0 || l_il <= 0.0 {
            return Err(Error::Config("objectives need a positive largest eigenvalue".into()));
        }
        Ok(QuadraticPair {
            a_rl,
            b_rl,
            a_il,
            b_il,
            sigma_il,
            sigma_rl,
            n_il,
            n_rl,
            l_rl,
            l_il,
        })
    }

    /// One-dimensional pair `0.5 a (x - b)^2` per objective, noise-free.
    pub fn one_d(a_rl: f64, b_rl: f64, a_il: f64, b_il: f64) -> Result<Self> {
        Self::new(
            DMatrix::from_element(1, 1, a_rl),
            DVector::from_element(1, b_rl),
            DMatrix::from_element(1, 1, a_il),
            DVector::from_element(1, b_il),
            0.0,
            0.0,
            1,
            1,
        )
    }

    /// Random pair plus a random start, both derived from `seed`.
    pub fn random(opts: &RandomPairOptions, seed: u64) -> Result<(Self, DVector<f64>)> {
        if opts.dim == 0 || !(opts.min_eig_ratio > 0.0 && opts.min_eig_ratio <= 1.0) {
            return Err(Error::Config("dim must be positive and min_eig_ratio in (0, 1]".into()));
        }
        let mut rng = rng_from(derive_seed(seed, stream::THEORY_INSTANCE, 0));
        let a_rl = random_spd(&mut rng, opts.dim, opts.l_rl, opts.min_eig_ratio);
        let a_il = random_spd(&mut rng, opts.dim, opts.l_il, opts.min_eig_ratio);
        let b_rl = DVector::from_fn(opts.dim, |_, _| rng.sample::<f64, _>(StandardNormal));
        let b_il = DVector::from_fn(opts.dim, |_, _| rng.sample::<f64, _>(StandardNormal));
        let (a_il, b_il) = match opts.relation {
            Relation::Independent => (a_il, b_il),
            Relation::Aligned => (&a_rl * (opts.l_il / opts.l_rl), b_rl.clone()),
        };
        let theta0 = DVector::from_fn(opts.dim, |_, _| opts.start_scale * rng.sample::<f64, _>(StandardNormal));
        let pair = Self::new(a_rl, b_rl, a_il, b_il, opts.sigma, opts.sigma, opts.batch, opts.batch)?;
        Ok((pair, theta0))
    }

    pub fn with_noise(mut self, sigma_il: f64, sigma_rl: f64, n_il: usize, n_rl: usize) -> Result<Self> {
        if !(sigma_il >= 0.0 && sigma_rl >= 0.0) || n_il == 0 || n_rl == 0 {
            return Err(Error::Config("noise std must be >= 0 and batch sizes positive".into()));
        }
        self.sigma_il = sigma_il;
        self.sigma_rl = sigma_rl;
        self.n_il = n_il;
        self.n_rl = n_rl;
        Ok(self)
    }

    pub fn dim(&self) -> usize {
        self.b_rl.len()
    }

    pub fn a_rl(&self) -> &DMatrix<f64> {
        &self.a_rl
    }

    pub fn a_il(&self) -> &DMatrix<f64> {
        &self.a_il
    }

    pub fn b_rl(&self) -> &DVector<f64> {
        &self.b_rl
    }

    pub fn b_il(&self) -> &DVector<f64> {
        &self.b_il
    }

    /// Largest eigenvalue of `A_rl`.
    pub fn l_rl(&self) -> f64 {
        self.l_rl
    }

    pub fn l_il(&self) -> f64 {
        self.l_il
    }

    /// Expected squared norm of the RL gradient noise for `N = 1`: `dim * sigma_rl^2`.
    pub fn sigma2_rl(&self) -> f64 {
        self.dim() as f64 * self.sigma_rl * self.sigma_rl
    }

    pub fn sigma2_il(&self) -> f64 {
        self.dim() as f64 * self.sigma_il * self.sigma_il
    }

    pub fn loss_rl(&self, theta: &DVector<f64>) -> f64 {
        let d = theta - &self.b_rl;
        0.5 * d.dot(&(&self.a_rl * &d))
    }

    pub fn loss_il(&self, theta: &DVector<f64>) -> f64 {
        let d = theta - &self.b_il;
        0.5 * d.dot(&(&self.a_il * &d))
    }

    pub fn grad_rl(&self, theta: &DVector<f64>) -> DVector<f64> {
        &self.a_rl * (theta - &self.b_rl)
    }

    pub fn grad_il(&self, theta: &DVector<f64>) -> DVector<f64> {
        &self.a_il * (theta - &self.b_il)
    }

    /// Minimum of either objective; attained at its target.
    pub fn optimum(&self) -> f64 {
        0.0
    }

    pub fn noisy_grad_rl(&self, theta: &DVector<f64>, rng: &mut impl Rng) -> DVector<f64> {
        add_noise(self.grad_rl(theta), self.sigma_rl / (self.n_rl as f64).sqrt(), rng)
    }

    pub fn noisy_grad_il(&self, theta: &DVector<f64>, rng: &mut impl Rng) -> DVector<f64> {
        add_noise(self.grad_il(theta), self.sigma_il / (self.n_il as f64).sqrt(), rng)
    }
}

fn add_noise(mut g: DVector<f64>, std: f64, rng: &mut impl Rng) -> DVector<f64> {
    if std > 0.0 {
        g.iter_mut().for_each(|v| *v += std * rng.sample::<f64, _>(StandardNormal));
    }
    g
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn random_pair_has_requested_smoothness() {
        let opts = RandomPairOptions {
            l_rl: 2.5,
            ..Default::default()
        };
        let (p, theta) = QuadraticPair::random(&opts, 3).unwrap();
        assert!((p.l_rl() - 2.5).abs() < 1e-9);
        assert!((p.l_il() - 1.0).abs() < 1e-9);
        assert_eq!(theta.len(), 4);
        assert_eq!(p.loss_rl(p.b_rl()), 0.0);
    }

    #[test]
    fn rejects_indefinite_matrix() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]);
        let b = DVector::zeros(2);
        let err = QuadraticPair::new(a.clone(), b.clone(), a, b, 0.0, 0.0, 1, 1).unwrap_err();
        assert!(matches!(err, Error::Config(_)));
    }

    #[test]
    fn gradient_is_a_times_offset() {
        let p = QuadraticPair::one_d(2.0, 1.0, 1.0, 0.0).unwrap();
        let t = DVector::from_element(1, 3.0);
        assert_eq!(p.grad_rl(&t)[0], 4.0);
        assert_eq!(p.loss_rl(&t), 4.0);
        assert_eq!(p.grad_il(&t)[0], 3.0);
    }
}
