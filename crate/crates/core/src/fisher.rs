//! Empirical Fisher information: dense construction, symmetric
//! eigendecomposition, and the pathology metrics built on the spectrum.
//!
//! The matrix is the empirical form F = (1/n) Σ gᵢgᵢᵀ over per-sample
//! parameter gradients at the true labels. Accumulation runs over the
//! dataset's canonical sample order in fixed-size chunks combined left to
//! right, so the result is bit-identical under dataset permutation and
//! under any worker-thread count.
//!
//! Eigenvalues come from cyclic Jacobi rotations (with eigenvectors), the
//! right tool at this scale: unconditionally stable on symmetric input and
//! accurate for the tiny eigenvalues the pathology metrics care about.

use ndarray::Array2;
use rayon::prelude::*;
use thiserror::Error;

use crate::learn::{Dataset, LearnError};
use crate::net::{Loss, NetError, Network};
use crate::scalar::Real;

/// Dense-regime guard: matrices above this order are refused.
pub const MAX_PARAMS: usize = 2000;

/// Chunk length for the deterministic gradient accumulation.
const ACC_CHUNK: usize = 64;

/// Floor factor for the condition ratio denominator.
pub const TAU_FLOOR_FACTOR: f64 = 1e-15;

/// Floor factor for the damping parameter.
pub const DAMPING_FLOOR_FACTOR: f64 = 1e-12;

#[derive(Debug, Error, PartialEq)]
pub enum FisherError {
    #[error("{got} parameters exceed the dense limit {limit}")]
    TooLarge { got: usize, limit: usize },
    #[error("matrix must be square, got {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },
    #[error("matrix must be symmetric within tolerance")]
    Asymmetric,
    #[error("vector length {got} does not match matrix order {expected}")]
    SizeMismatch { expected: usize, got: usize },
    #[error("damping must be positive")]
    InvalidDamping,
    #[error("tau must lie in (0, 1)")]
    InvalidTau,
    #[error("{0} did not converge within the iteration budget")]
    NonConvergence(&'static str),
    #[error(transparent)]
    Net(#[from] NetError),
    #[error(transparent)]
    Learn(#[from] LearnError),
}

/// Summary of a symmetric spectrum with the pathology metrics attached.
#[derive(Debug, Clone, PartialEq)]
pub struct FisherSpectrum<T: Real> {
    /// Eigenvalues sorted descending.
    pub eigenvalues: Vec<T>,
    pub trace: T,
    pub lambda_max: T,
    /// max(smallest eigenvalue, tau_floor); the condition denominator.
    pub lambda_min_damped: T,
    /// lambda_max / lambda_min_damped.
    pub condition_ratio: T,
    /// Share of eigenvalues below tau * lambda_max.
    pub near_zero_fraction: T,
    /// Relative near-zero threshold used for the fraction.
    pub tau: T,
    /// Absolute floor applied to the condition denominator.
    pub tau_floor: T,
}

/// Norms and ratio of a damped natural-gradient solve.
#[derive(Debug, Clone, PartialEq)]
pub struct NatGradReport<T: Real> {
    pub grad_norm: T,
    pub natgrad_norm: T,
    /// natgrad_norm / grad_norm: how much the inverse metric inflates the
    /// step.
    pub explosion_index: T,
    /// Damping actually used (after the relative floor).
    pub lambda: T,
    pub iterations: usize,
}

/// Eigenvalues with their orthonormal eigenvector columns, descending.
#[derive(Debug, Clone, PartialEq)]
pub struct EigenDecomposition<T: Real> {
    pub eigenvalues: Vec<T>,
    pub vectors: Array2<T>,
}

/// F = (1/n) Σ gᵢgᵢᵀ over per-sample loss gradients.
pub fn empirical_fisher<T: Real>(
    net: &Network<T>,
    data: &Dataset<T>,
    loss: Loss,
) -> Result<Array2<T>, FisherError> {
    let c = net.param_count();
    if c > MAX_PARAMS {
        return Err(FisherError::TooLarge { got: c, limit: MAX_PARAMS });
    }
    if data.is_empty() {
        return Err(FisherError::Learn(LearnError::EmptyDataset));
    }
    let order = data.canonical_order();
    let partials: Result<Vec<Array2<T>>, FisherError> = order
        .par_chunks(ACC_CHUNK)
        .map(|chunk| {
            let mut part = Array2::<T>::zeros((c, c));
            for &i in chunk {
                let g = net.gradient_params(data.input_row(i), &data.target(i), loss)?;
                for (r, &gr) in g.iter().enumerate() {
                    for (s, &gs) in g.iter().enumerate() {
                        part[(r, s)] += gr * gs;
                    }
                }
            }
            Ok(part)
        })
        .collect();
    let mut f = Array2::<T>::zeros((c, c));
    for part in partials? {
        f += &part;
    }
    let n_inv = T::one() / T::of(data.len() as f64);
    f.mapv_inplace(|v| v * n_inv);
    Ok(f)
}

/// Mean parameter gradient over the dataset, in canonical sample order.
pub fn mean_gradient<T: Real>(
    net: &Network<T>,
    data: &Dataset<T>,
    loss: Loss,
) -> Result<Vec<T>, FisherError> {
    if data.is_empty() {
        return Err(FisherError::Learn(LearnError::EmptyDataset));
    }
    let order = data.canonical_order();
    let mut g = vec![T::zero(); net.param_count()];
    for &i in &order {
        let gi = net.gradient_params(data.input_row(i), &data.target(i), loss)?;
        for (a, b) in g.iter_mut().zip(&gi) {
            *a += *b;
        }
    }
    let n_inv = T::one() / T::of(data.len() as f64);
    for a in g.iter_mut() {
        *a *= n_inv;
    }
    Ok(g)
}

fn check_symmetric<T: Real>(f: &Array2<T>) -> Result<usize, FisherError> {
    let (rows, cols) = f.dim();
    if rows != cols {
        return Err(FisherError::NotSquare { rows, cols });
    }
    let scale = f.iter().fold(T::zero(), |a, &v| a.max(v.abs())).max(T::one());
    let tol = T::of(1e-10) * scale;
    for r in 0..rows {
        for s in r + 1..rows {
            if (f[(r, s)] - f[(s, r)]).abs() > tol {
                return Err(FisherError::Asymmetric);
            }
        }
    }
    Ok(rows)
}

/// Cyclic Jacobi eigendecomposition of a symmetric matrix. Sweeps rotate
/// every off-diagonal pair until the off-diagonal Frobenius mass falls
/// below 1e-12 of the matrix norm.
pub fn symmetric_eigen<T: Real>(f: &Array2<T>) -> Result<EigenDecomposition<T>, FisherError> {
    let n = check_symmetric(f)?;
    if n > MAX_PARAMS {
        return Err(FisherError::TooLarge { got: n, limit: MAX_PARAMS });
    }
    let mut a = f.clone();
    let mut q = Array2::<T>::eye(n);
    let norm = a.iter().fold(T::zero(), |acc, &v| acc + v * v).sqrt();
    // Aim three decades below the guaranteed bound; small eigenvalues come
    // out much more accurate and the extra sweeps are cheap.
    let required = T::of(1e-12) * norm.max(T::min_positive_value());
    let target = T::of(1e-15) * norm.max(T::min_positive_value());

    let off = |a: &Array2<T>| -> T {
        let mut s = T::zero();
        for r in 0..n {
            for c in 0..n {
                if r != c {
                    s += a[(r, c)] * a[(r, c)];
                }
            }
        }
        s.sqrt()
    };

    let mut prev_off = T::infinity();
    for _sweep in 0..64 {
        if n >= 2 {
            let o = off(&a);
            if o <= target || o >= prev_off {
                // Hit the target, or rounding noise has stopped the descent.
                break;
            }
            prev_off = o;
        }
        for p in 0..n {
            for r in p + 1..n {
                let apr = a[(p, r)];
                if apr == T::zero() {
                    continue;
                }
                let app = a[(p, p)];
                let arr = a[(r, r)];
                let theta = (arr - app) / (T::of(2.0) * apr);
                let t = if theta >= T::zero() {
                    T::one() / (theta + (theta * theta + T::one()).sqrt())
                } else {
                    -T::one() / (-theta + (theta * theta + T::one()).sqrt())
                };
                let c = T::one() / (t * t + T::one()).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[(k, p)];
                    let akr = a[(k, r)];
                    a[(k, p)] = c * akp - s * akr;
                    a[(k, r)] = s * akp + c * akr;
                }
                for k in 0..n {
                    let apk = a[(p, k)];
                    let ark = a[(r, k)];
                    a[(p, k)] = c * apk - s * ark;
                    a[(r, k)] = s * apk + c * ark;
                }
                for k in 0..n {
                    let qkp = q[(k, p)];
                    let qkr = q[(k, r)];
                    q[(k, p)] = c * qkp - s * qkr;
                    q[(k, r)] = s * qkp + c * qkr;
                }
            }
        }
    }
    if n >= 2 && off(&a) > required {
        return Err(FisherError::NonConvergence("jacobi eigensolver"));
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[(j, j)].partial_cmp(&a[(i, i)]).expect("finite eigenvalues"));
    let eigenvalues: Vec<T> = order.iter().map(|&i| a[(i, i)]).collect();
    let mut vectors = Array2::<T>::zeros((n, n));
    for (col, &src) in order.iter().enumerate() {
        for row in 0..n {
            vectors[(row, col)] = q[(row, src)];
        }
    }
    Ok(EigenDecomposition { eigenvalues, vectors })
}

/// Spectrum summary with pathology metrics at relative threshold `tau`.
pub fn eigenspectrum<T: Real>(f: &Array2<T>, tau: T) -> Result<FisherSpectrum<T>, FisherError> {
    if !(tau > T::zero() && tau < T::one()) {
        return Err(FisherError::InvalidTau);
    }
    let eig = symmetric_eigen(f)?;
    Ok(spectrum_from_eigenvalues(eig.eigenvalues, tau))
}

/// Metrics from an already-computed descending eigenvalue list.
pub fn spectrum_from_eigenvalues<T: Real>(eigenvalues: Vec<T>, tau: T) -> FisherSpectrum<T> {
    let lambda_max = eigenvalues.first().copied().unwrap_or_else(T::zero);
    let lambda_min = eigenvalues.last().copied().unwrap_or_else(T::zero);
    let trace = eigenvalues.iter().copied().fold(T::zero(), |a, b| a + b);
    let tau_floor = T::of(TAU_FLOOR_FACTOR) * lambda_max;
    let (lambda_min_damped, condition_ratio) = if lambda_max > T::zero() {
        let dmin = lambda_min.max(tau_floor);
        (dmin, lambda_max / dmin)
    } else {
        (lambda_min, T::one())
    };
    let near_zero = eigenvalues
        .iter()
        .filter(|&&v| v < tau * lambda_max)
        .count();
    let near_zero_fraction = if eigenvalues.is_empty() {
        T::zero()
    } else {
        T::of(near_zero as f64 / eigenvalues.len() as f64)
    };
    FisherSpectrum {
        eigenvalues,
        trace,
        lambda_max,
        lambda_min_damped,
        condition_ratio,
        near_zero_fraction,
        tau,
        tau_floor,
    }
}

/// Solve (F + λI)v = g by conjugate gradients and report how the inverse
/// metric scales the step. λ is floored at 1e-12 times a cheap upper
/// estimate of λ_max (the max row sum), keeping the solve meaningful on
/// the rank-deficient matrices this module exists to study.
pub fn natural_gradient_norm<T: Real>(
    f: &Array2<T>,
    g: &[T],
    lambda: T,
) -> Result<NatGradReport<T>, FisherError> {
    let n = check_symmetric(f)?;
    if g.len() != n {
        return Err(FisherError::SizeMismatch { expected: n, got: g.len() });
    }
    if !(lambda > T::zero()) {
        return Err(FisherError::InvalidDamping);
    }
    let row_sum_max = (0..n)
        .map(|r| (0..n).map(|c| f[(r, c)].abs()).fold(T::zero(), |a, b| a + b))
        .fold(T::zero(), T::max);
    let lambda_eff = lambda.max(T::of(DAMPING_FLOOR_FACTOR) * row_sum_max);

    let apply = |v: &[T], out: &mut [T]| {
        for r in 0..n {
            let mut acc = lambda_eff * v[r];
            for c in 0..n {
                acc += f[(r, c)] * v[c];
            }
            out[r] = acc;
        }
    };
    let dot = |a: &[T], b: &[T]| -> T {
        a.iter().zip(b).map(|(&x, &y)| x * y).fold(T::zero(), |s, t| s + t)
    };

    let grad_norm = dot(g, g).sqrt();
    let mut x = vec![T::zero(); n];
    let mut r = g.to_vec();
    let mut p = r.clone();
    let mut rr = dot(&r, &r);
    let tol = T::of(1e-10) * grad_norm;
    let mut ap = vec![T::zero(); n];
    let max_iters = 10 * n.max(1);
    let mut iterations = 0usize;
    while rr.sqrt() > tol && iterations < max_iters {
        apply(&p, &mut ap);
        let pap = dot(&p, &ap);
        if !(pap > T::zero()) {
            // Rounding has produced a non-descent direction; the final
            // residual check below decides whether we already converged.
            break;
        }
        let alpha = rr / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        iterations += 1;
        if iterations % 64 == 0 {
            // Residual replacement: recompute r = g - (F+lambda)x to stop
            // the recurrence drifting away from the true residual.
            apply(&x, &mut ap);
            for i in 0..n {
                r[i] = g[i] - ap[i];
            }
        }
        let rr_new = dot(&r, &r);
        let beta = rr_new / rr;
        for i in 0..n {
            p[i] = r[i] + beta * p[i];
        }
        rr = rr_new;
    }
    if rr.sqrt() > tol {
        return Err(FisherError::NonConvergence("conjugate gradient"));
    }
    let natgrad_norm = dot(&x, &x).sqrt();
    let explosion_index = if grad_norm > T::zero() {
        natgrad_norm / grad_norm
    } else {
        T::zero()
    };
    Ok(NatGradReport {
        grad_norm,
        natgrad_norm,
        explosion_index,
        lambda: lambda_eff,
        iterations,
    })
}

/// Full pathology pass: Fisher matrix, spectrum at threshold `tau`, and
/// the damped natural gradient of the mean loss.
pub fn pathology_report<T: Real>(
    net: &Network<T>,
    data: &Dataset<T>,
    loss: Loss,
    lambda: T,
    tau: T,
) -> Result<(FisherSpectrum<T>, NatGradReport<T>), FisherError> {
    let f = empirical_fisher(net, data, loss)?;
    let spectrum = eigenspectrum(&f, tau)?;
    let g = mean_gradient(net, data, loss)?;
    let natgrad = natural_gradient_norm(&f, &g, lambda)?;
    Ok((spectrum, natgrad))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::learn::{make_dataset, DatasetKind, Targets};
    use crate::net::{random_network, ActivationKind, Layer, NetSpec, Target};
    use crate::rng;
    use approx::assert_relative_eq;
    use ndarray::{array, Array1};

    fn probe_net(seed: u64) -> Network<f64> {
        random_network(&NetSpec::mlp(&[2, 6, 3], ActivationKind::Tanh), 1.0, seed)
    }

    fn probe_data(n: usize, seed: u64) -> Dataset<f64> {
        let mut r = rng::stream(seed, "fisher_data");
        let mut inputs = Array2::zeros((n, 2));
        let mut classes = Vec::with_capacity(n);
        for i in 0..n {
            inputs[(i, 0)] = f64::standard_normal(&mut r);
            inputs[(i, 1)] = f64::standard_normal(&mut r);
            classes.push(i % 3);
        }
        Dataset::from_classes(inputs, classes, "probe".into(), seed).unwrap()
    }

    #[test]
    fn single_sample_fisher_is_the_outer_product() {
        let net = probe_net(1);
        let ds = probe_data(1, 2);
        let f = empirical_fisher(&net, &ds, Loss::SoftmaxXent).unwrap();
        let g = net
            .gradient_params(ds.input_row(0), &ds.target(0), Loss::SoftmaxXent)
            .unwrap();
        for r in 0..g.len() {
            for s in 0..g.len() {
                assert_eq!(f[(r, s)], g[r] * g[s]);
            }
        }
    }

    #[test]
    fn duplicated_datum_gives_a_rank_one_matrix() {
        let net = probe_net(3);
        let one = probe_data(1, 4);
        let mut inputs = Array2::zeros((8, 2));
        for i in 0..8 {
            inputs[(i, 0)] = one.inputs[(0, 0)];
            inputs[(i, 1)] = one.inputs[(0, 1)];
        }
        let ds =
            Dataset::from_classes(inputs, vec![one.classes().unwrap()[0]; 8], "dup".into(), 0)
                .unwrap();
        let f = empirical_fisher(&net, &ds, Loss::SoftmaxXent).unwrap();
        let eig = symmetric_eigen(&f).unwrap();
        let l1 = eig.eigenvalues[0];
        for &l in &eig.eigenvalues[1..] {
            assert!(l.abs() <= 1e-10 * l1, "secondary eigenvalue {l} vs {l1}");
        }
    }

    #[test]
    fn trace_equals_mean_squared_gradient_norm() {
        let net = probe_net(5);
        let ds = probe_data(40, 6);
        let f = empirical_fisher(&net, &ds, Loss::SoftmaxXent).unwrap();
        let trace: f64 = (0..net.param_count()).map(|i| f[(i, i)]).sum();
        let mut mean_sq = 0.0;
        for i in 0..ds.len() {
            let g = net
                .gradient_params(ds.input_row(i), &ds.target(i), Loss::SoftmaxXent)
                .unwrap();
            mean_sq += g.iter().map(|&v| v * v).sum::<f64>();
        }
        mean_sq /= ds.len() as f64;
        assert_relative_eq!(trace, mean_sq, max_relative = 1e-10);
    }

    #[test]
    fn fisher_is_permutation_and_thread_invariant() {
        let net = probe_net(7);
        let ds = probe_data(100, 8);
        let f = empirical_fisher(&net, &ds, Loss::SoftmaxXent).unwrap();

        let n = ds.len();
        let mut rev_inputs = Array2::zeros((n, 2));
        let mut rev_classes = vec![0usize; n];
        for i in 0..n {
            rev_inputs[(n - 1 - i, 0)] = ds.inputs[(i, 0)];
            rev_inputs[(n - 1 - i, 1)] = ds.inputs[(i, 1)];
            rev_classes[n - 1 - i] = ds.classes().unwrap()[i];
        }
        let rev = Dataset::from_classes(rev_inputs, rev_classes, "rev".into(), 0).unwrap();
        let f_rev = empirical_fisher(&net, &rev, Loss::SoftmaxXent).unwrap();
        assert_eq!(f, f_rev);

        for threads in [1usize, 4] {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap();
            let f_t =
                pool.install(|| empirical_fisher(&net, &ds, Loss::SoftmaxXent).unwrap());
            assert_eq!(f, f_t);
        }
    }

    #[test]
    fn identity_spectrum_is_flat() {
        let f = Array2::<f64>::eye(3);
        let s = eigenspectrum(&f, 1e-6).unwrap();
        assert_eq!(s.eigenvalues, vec![1.0, 1.0, 1.0]);
        assert_eq!(s.condition_ratio, 1.0);
        assert_eq!(s.near_zero_fraction, 0.0);
        assert_relative_eq!(s.trace, 3.0);
    }

    #[test]
    fn diagonal_spectrum_reports_the_near_zero_share() {
        let f = Array2::from_diag(&array![4.0, 1.0, 0.0]);
        let s = eigenspectrum(&f, 1e-6).unwrap();
        assert_eq!(s.eigenvalues, vec![4.0, 1.0, 0.0]);
        assert_relative_eq!(s.near_zero_fraction, 1.0 / 3.0, max_relative = 1e-15);
        // Zero eigenvalue hits the relative floor 1e-15 * lambda_max.
        assert_relative_eq!(s.condition_ratio, 1e15, max_relative = 1e-12);
        assert_eq!(s.lambda_min_damped, s.tau_floor);
    }

    /// Plain QR iteration (Gram-Schmidt), used only as an independent
    /// eigenvalue oracle.
    fn qr_eigenvalues(f: &Array2<f64>, iters: usize) -> Vec<f64> {
        let n = f.nrows();
        let mut a = f.clone();
        for _ in 0..iters {
            let mut q = Array2::<f64>::zeros((n, n));
            let mut r = Array2::<f64>::zeros((n, n));
            for j in 0..n {
                let mut v: Vec<f64> = (0..n).map(|i| a[(i, j)]).collect();
                for k in 0..j {
                    let proj: f64 = (0..n).map(|i| q[(i, k)] * a[(i, j)]).sum();
                    r[(k, j)] = proj;
                    for i in 0..n {
                        v[i] -= proj * q[(i, k)];
                    }
                }
                let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
                r[(j, j)] = norm;
                for i in 0..n {
                    q[(i, j)] = v[i] / norm;
                }
            }
            a = r.dot(&q);
        }
        let mut eig: Vec<f64> = (0..n).map(|i| a[(i, i)]).collect();
        eig.sort_by(|x, y| y.partial_cmp(x).unwrap());
        eig
    }

    #[test]
    fn jacobi_matches_an_independent_qr_oracle() {
        // Random PSD with well-separated eigenvalues.
        let mut r = rng::stream(11, "psd");
        let n = 6;
        let mut m = Array2::<f64>::zeros((n, n));
        for i in 0..n {
            for j in 0..n {
                m[(i, j)] = f64::standard_normal(&mut r);
            }
        }
        let spread = Array2::from_diag(&array![5.0, 3.0, 1.0, 0.5, 0.1, 0.01]);
        // Orthogonalize m's columns first so the construction is exact.
        let q = {
            let mut q = m.clone();
            for j in 0..n {
                for k in 0..j {
                    let proj: f64 = (0..n).map(|i| q[(i, k)] * q[(i, j)]).sum();
                    for i in 0..n {
                        q[(i, j)] = q[(i, j)] - proj * q[(i, k)];
                    }
                }
                let norm = (0..n).map(|i| q[(i, j)] * q[(i, j)]).sum::<f64>().sqrt();
                for i in 0..n {
                    q[(i, j)] /= norm;
                }
            }
            q
        };
        let f = q.dot(&spread).dot(&q.t());
        let f = (&f + &f.t()) * 0.5;

        let jac = symmetric_eigen(&f).unwrap();
        let oracle = qr_eigenvalues(&f, 600);
        for (a, b) in jac.eigenvalues.iter().zip(&oracle) {
            assert_relative_eq!(*a, *b, max_relative = 1e-9);
        }
        for (a, b) in jac.eigenvalues.iter().zip([5.0, 3.0, 1.0, 0.5, 0.1, 0.01]) {
            assert_relative_eq!(*a, b, max_relative = 1e-9);
        }
    }

    #[test]
    fn jacobi_reconstructs_the_input() {
        let net = probe_net(13);
        let ds = probe_data(60, 14);
        let f = empirical_fisher(&net, &ds, Loss::SoftmaxXent).unwrap();
        let eig = symmetric_eigen(&f).unwrap();
        let lam = Array2::from_diag(&Array1::from(eig.eigenvalues.clone()));
        let rec = eig.vectors.dot(&lam).dot(&eig.vectors.t());
        let norm = f.iter().map(|v| v * v).sum::<f64>().sqrt();
        let err = (&rec - &f).iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!(err <= 1e-8 * norm, "reconstruction error {err} vs norm {norm}");
    }

    #[test]
    fn asymmetric_input_is_rejected() {
        let f = array![[1.0, 2.0], [0.0, 1.0]];
        assert_eq!(symmetric_eigen(&f).unwrap_err(), FisherError::Asymmetric);
        let f = Array2::<f64>::zeros((2, 3));
        assert!(matches!(
            symmetric_eigen(&f).unwrap_err(),
            FisherError::NotSquare { .. }
        ));
    }

    #[test]
    fn fisher_is_psd_within_tolerance() {
        for seed in 0..5u64 {
            let net = probe_net(seed);
            let ds = probe_data(30, seed + 100);
            let f = empirical_fisher(&net, &ds, Loss::SoftmaxXent).unwrap();
            let s = eigenspectrum(&f, 1e-6).unwrap();
            let min = *s.eigenvalues.last().unwrap();
            assert!(min >= -1e-8 * s.lambda_max, "negative eigenvalue {min}");
            let sum: f64 = s.eigenvalues.iter().sum();
            assert_relative_eq!(sum, s.trace, max_relative = 1e-12);
        }
    }

    #[test]
    fn eigenvalues_scale_quadratically_and_ratio_is_invariant() {
        let net = probe_net(17);
        let ds = probe_data(30, 18);
        let f = empirical_fisher(&net, &ds, Loss::SoftmaxXent).unwrap();
        let s1 = eigenspectrum(&f, 1e-6).unwrap();
        let scaled = &f * 9.0; // gradients scaled by s=3
        let s2 = eigenspectrum(&scaled, 1e-6).unwrap();
        // Eigenvalues near zero carry solver noise of order 1e-15 * ||F||,
        // so the pairwise check is relative to the spectrum scale, with the
        // strict ratio reserved for eigenvalues that dominate that noise.
        for (a, b) in s1.eigenvalues.iter().zip(&s2.eigenvalues) {
            assert!(
                (b - 9.0 * a).abs() <= 1e-10 * 9.0 * s1.lambda_max,
                "pair ({a}, {b}) off scale"
            );
            if *a > 1e-3 * s1.lambda_max {
                assert_relative_eq!(b / a, 9.0, max_relative = 1e-10);
            }
        }
        assert_relative_eq!(
            s2.condition_ratio,
            s1.condition_ratio,
            max_relative = 1e-10
        );
    }

    #[test]
    fn natgrad_identity_metric_changes_nothing() {
        let f = Array2::<f64>::eye(4);
        let g = vec![1.0, -2.0, 0.5, 3.0];
        let rep = natural_gradient_norm(&f, &g, 1e-12).unwrap();
        assert_relative_eq!(rep.explosion_index, 1.0, max_relative = 1e-6);
    }

    #[test]
    fn natgrad_blows_up_on_a_tiny_eigenvalue() {
        let f = Array2::from_diag(&array![1.0, 1e-8]);
        let g = vec![0.0, 1.0];
        let rep = natural_gradient_norm(&f, &g, 1e-12).unwrap();
        assert!(rep.explosion_index >= 1e7, "index {}", rep.explosion_index);
        assert_relative_eq!(rep.explosion_index, 1e8, max_relative = 1e-3);
    }

    #[test]
    fn natgrad_heavy_damping_kills_the_step() {
        let f = Array2::<f64>::eye(3);
        let g = vec![1.0, 1.0, 1.0];
        let rep = natural_gradient_norm(&f, &g, 1e6).unwrap();
        assert!(rep.explosion_index < 1e-5);
    }

    #[test]
    fn explosion_index_is_monotone_in_damping() {
        // Dense PSD fixture with a bounded condition number, so the solver
        // can certify 1e-10 residuals across the whole damping grid.
        let mut r = rng::stream(77, "cg_fixture");
        let m = Array2::from_shape_fn((12, 12), |_| f64::standard_normal(&mut r));
        let mut f = m.t().dot(&m);
        let shift = 1e-4 * f.diag().sum() / 12.0;
        for i in 0..12 {
            f[(i, i)] += shift;
        }
        let g: Vec<f64> = (0..12).map(|_| f64::standard_normal(&mut r)).collect();
        let mut last = f64::INFINITY;
        // The solver stops at relative residual 1e-10, so allow that much
        // slack on the comparison.
        for lambda in [1e-12, 1e-9, 1e-6, 1e-3, 1.0, 1e3] {
            let rep = natural_gradient_norm(&f, &g, lambda).unwrap();
            assert!(
                rep.explosion_index <= last * (1.0 + 1e-8),
                "index rose at lambda {lambda}"
            );
            last = rep.explosion_index;
        }
    }

    #[test]
    fn network_fisher_natural_gradient_converges_at_moderate_damping() {
        let net = probe_net(19);
        let ds = probe_data(30, 20);
        let f = empirical_fisher(&net, &ds, Loss::SoftmaxXent).unwrap();
        let g = mean_gradient(&net, &ds, Loss::SoftmaxXent).unwrap();
        let s = eigenspectrum(&f, 1e-6).unwrap();
        let rep = natural_gradient_norm(&f, &g, 1e-6 * s.lambda_max).unwrap();
        assert!(rep.explosion_index.is_finite() && rep.explosion_index > 0.0);
        assert!(rep.iterations <= 10 * g.len());
    }

    #[test]
    fn zero_network_spectrum_is_flagged_degenerate() {
        // All-zero weights on symmetric data: only the output bias carries
        // gradient, so almost the whole spectrum clusters at zero.
        let net = Network::new(vec![
            Layer {
                weights: Array2::zeros((4, 2)),
                bias: Array1::zeros(4),
                activation: ActivationKind::Relu,
            },
            Layer {
                weights: Array2::zeros((2, 4)),
                bias: Array1::zeros(2),
                activation: ActivationKind::Linear,
            },
        ])
        .unwrap();
        let ds = make_dataset::<f64>(DatasetKind::XorGrid, 40, 21).unwrap();
        let (spectrum, _) =
            pathology_report(&net, &ds, Loss::SoftmaxXent, 1e-9, 1e-6).unwrap();
        assert!(spectrum.near_zero_fraction > 0.5);
    }

    #[test]
    fn mse_fisher_works_with_vector_targets() {
        let net = random_network::<f64>(
            &NetSpec::mlp(&[2, 4, 1], ActivationKind::Tanh),
            1.0,
            23,
        );
        let mut r = rng::stream(24, "mse");
        let n = 20;
        let mut inputs = Array2::zeros((n, 2));
        let mut ys = Array2::zeros((n, 1));
        for i in 0..n {
            inputs[(i, 0)] = f64::standard_normal(&mut r);
            inputs[(i, 1)] = f64::standard_normal(&mut r);
            ys[(i, 0)] = f64::standard_normal(&mut r);
        }
        let ds = Dataset {
            inputs,
            targets: Targets::Vectors(ys),
            generator: "mse probe".into(),
            seed: 24,
        };
        let f = empirical_fisher(&net, &ds, Loss::Mse).unwrap();
        let s = eigenspectrum(&f, 1e-6).unwrap();
        assert!(s.lambda_max > 0.0);
        assert!(matches!(ds.target(0), Target::Vector(_)));
    }
}
