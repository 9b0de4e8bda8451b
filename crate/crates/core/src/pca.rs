//! Principal subspace of a small set of trajectories.
//!
//! Trajectories live in `R^L` with `L` on the order of tens, so the covariance
//! matrix is tiny and is diagonalised directly with cyclic Jacobi rotations.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use thiserror::Error;

#[derive(Error, Debug, Clone, PartialEq)]
#[non_exhaustive]
pub enum PcaError {
    #[error("need at least {needed} trajectories, got {got}")]
    NotEnoughSamples { needed: usize, got: usize },
    #[error("trajectories have zero length")]
    ZeroDimension,
    #[error("non-finite value in trajectory data")]
    NonFinite,
    #[error("component count {k} outside [1, {max}]")]
    BadComponentCount { k: usize, max: usize },
    #[error("variance ratio must lie in (0, 1], got {0}")]
    BadVarianceRatio(f64),
    #[error("trajectory has length {actual}, model expects {expected}")]
    LengthMismatch { expected: usize, actual: usize },
    #[error("eigen-decomposition did not converge")]
    NoConvergence,
}

/// Eigen-decomposition of a symmetric matrix, eigenvalues descending.
#[derive(Debug, Clone)]
pub struct SymmetricEigen {
    pub values: Array1<f64>,
    /// Eigenvectors as columns, in the order of `values`.
    pub vectors: Array2<f64>,
}

/// Cyclic Jacobi eigen-decomposition.
///
/// Eigenvector signs are normalised so the largest-magnitude entry of each
/// column is positive; ties in eigenvalue keep the original axis order.
pub fn symmetric_eigen(a: ArrayView2<'_, f64>) -> Result<SymmetricEigen, PcaError> {
    let n = a.nrows();
    assert_eq!(n, a.ncols(), "matrix must be square");
    let mut m = a.to_owned();
    let mut v = Array2::<f64>::eye(n);
    let scale: f64 = m.iter().map(|x| x * x).sum::<f64>().sqrt();
    let mut converged = n < 2 || scale == 0.0;
    for _sweep in 0..100 {
        if converged {
            break;
        }
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| m[[i, j]] * m[[i, j]])
            .sum::<f64>()
            .sqrt();
        if off <= 1e-15 * scale {
            converged = true;
            break;
        }
        for p in 0..n - 1 {
            for q in p + 1..n {
                let apq = m[[p, q]];
                if apq == 0.0 {
                    continue;
                }
                let app = m[[p, p]];
                let aqq = m[[q, q]];
                let theta = (aqq - app) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let mkp = m[[k, p]];
                    let mkq = m[[k, q]];
                    m[[k, p]] = c * mkp - s * mkq;
                    m[[k, q]] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let mpk = m[[p, k]];
                    let mqk = m[[q, k]];
                    m[[p, k]] = c * mpk - s * mqk;
                    m[[q, k]] = s * mpk + c * mqk;
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
    if !converged {
        return Err(PcaError::NoConvergence);
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| m[[j, j]].total_cmp(&m[[i, i]]).then(i.cmp(&j)));
    let values = Array1::from_iter(order.iter().map(|&i| m[[i, i]]));
    let mut vectors = Array2::zeros((n, n));
    for (dst, &src) in order.iter().enumerate() {
        let mut col = v.column(src).to_owned();
        let lead = col
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.abs().total_cmp(&b.1.abs()).then(b.0.cmp(&a.0)))
            .map(|(i, _)| i)
            .unwrap_or(0);
        if col[lead] < 0.0 {
            col.mapv_inplace(|x| -x);
        }
        vectors.column_mut(dst).assign(&col);
    }
    Ok(SymmetricEigen { values, vectors })
}

/// A fitted principal subspace: origin plus orthonormal basis.
#[derive(Debug, Clone, PartialEq)]
pub struct Subspace {
    /// Origin of the subspace; zero for uncentred fits.
    pub mean: Array1<f64>,
    /// `L x K`, orthonormal columns.
    pub basis: Array2<f64>,
    /// Fraction of the total variance captured by `basis`; 1 for constant data.
    pub explained_variance_ratio: f64,
    /// All eigenvalues of the (centred) second-moment matrix, descending.
    pub spectrum: Array1<f64>,
}

/// Variance below which a data set counts as constant.
const ZERO_VARIANCE: f64 = 1e-12;

impl Subspace {
    /// Fits the smallest subspace explaining at least `var_ratio` of the
    /// variance, keeping between 1 and `min(L, n - 1)` components.
    pub fn fit(data: ArrayView2<'_, f64>, var_ratio: f64, centered: bool) -> Result<Self, PcaError> {
        if !(var_ratio > 0.0 && var_ratio <= 1.0) {
            return Err(PcaError::BadVarianceRatio(var_ratio));
        }
        let (mean, eig) = decompose(data, centered)?;
        let total: f64 = eig.values.iter().map(|&x| x.max(0.0)).sum();
        let cap = component_cap(data.nrows(), data.ncols(), centered);
        let k = if total <= ZERO_VARIANCE {
            1
        } else {
            let mut cum = 0.0;
            let mut k = eig.values.len();
            for (i, &lambda) in eig.values.iter().enumerate() {
                cum += lambda.max(0.0);
                if cum >= var_ratio * total * (1.0 - 1e-12) {
                    k = i + 1;
                    break;
                }
            }
            k.clamp(1, cap)
        };
        Ok(Self::from_decomposition(mean, eig, k, total))
    }

    /// Fits a subspace with exactly `k` components.
    pub fn fit_components(data: ArrayView2<'_, f64>, k: usize, centered: bool) -> Result<Self, PcaError> {
        let max = data.ncols();
        if k == 0 || k > max {
            return Err(PcaError::BadComponentCount { k, max });
        }
        let (mean, eig) = decompose(data, centered)?;
        let total: f64 = eig.values.iter().map(|&x| x.max(0.0)).sum();
        Ok(Self::from_decomposition(mean, eig, k, total))
    }

    fn from_decomposition(mean: Array1<f64>, eig: SymmetricEigen, k: usize, total: f64) -> Self {
        let basis = eig.vectors.slice(ndarray::s![.., ..k]).to_owned();
        let explained = if total <= ZERO_VARIANCE {
            1.0
        } else {
            (eig.values.iter().take(k).map(|&x| x.max(0.0)).sum::<f64>() / total).min(1.0)
        };
        Subspace {
            mean,
            basis,
            explained_variance_ratio: explained,
            spectrum: eig.values,
        }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn num_components(&self) -> usize {
        self.basis.ncols()
    }

    /// Reconstruction of `x` from its projection onto the subspace.
    pub fn reconstruct(&self, x: ArrayView1<'_, f64>) -> Result<Array1<f64>, PcaError> {
        self.check_len(x.len())?;
        let centred = &x - &self.mean;
        let coeffs = self.basis.t().dot(&centred);
        Ok(self.basis.dot(&coeffs) + &self.mean)
    }

    /// Squared distance from `x` to the subspace.
    pub fn reconstruction_error(&self, x: ArrayView1<'_, f64>) -> Result<f64, PcaError> {
        self.check_len(x.len())?;
        let centred = &x - &self.mean;
        let coeffs = self.basis.t().dot(&centred);
        let residual = centred - self.basis.dot(&coeffs);
        Ok(residual.dot(&residual).max(0.0))
    }

    fn check_len(&self, actual: usize) -> Result<(), PcaError> {
        if actual != self.dim() {
            return Err(PcaError::LengthMismatch {
                expected: self.dim(),
                actual,
            });
        }
        Ok(())
    }
}

fn component_cap(n: usize, dim: usize, centered: bool) -> usize {
    let rank_bound = if centered { n.saturating_sub(1) } else { n };
    dim.min(rank_bound).max(1)
}

fn decompose(data: ArrayView2<'_, f64>, centered: bool) -> Result<(Array1<f64>, SymmetricEigen), PcaError> {
    let (n, dim) = data.dim();
    if dim == 0 {
        return Err(PcaError::ZeroDimension);
    }
    let needed = if centered { 2 } else { 1 };
    if n < needed {
        return Err(PcaError::NotEnoughSamples { needed, got: n });
    }
    if data.iter().any(|x| !x.is_finite()) {
        return Err(PcaError::NonFinite);
    }
    let mean = if centered {
        data.mean_axis(Axis(0)).expect("n >= 2")
    } else {
        Array1::zeros(dim)
    };
    let x = &data - &mean;
    let denom = if centered { (n - 1) as f64 } else { n as f64 };
    let cov = x.t().dot(&x) / denom;
    let eig = symmetric_eigen(cov.view())?;
    Ok((mean, eig))
}
