//! Closed-form catastrophe bounds, evaluated exactly.
//!
//! Everything here is pure scalar arithmetic: the safe-measure upper bound
//! K·exp(−αC/δ^d), the relu density lower bound driven by neuron count,
//! the asymptotic density bound driven by complexity, the maximum safe
//! complexity C₀, the complexity sandwich ratio, and a depth-amplification
//! model. Reports carry both a linear value and an exact log10 form so
//! nothing is lost when the exponent leaves f64 range (policy: magnitude
//! beyond 700 means the linear field has saturated and the log10 fields
//! are authoritative).
//!
//! The geometric overlap constants c_k of the neuron-count bound are not
//! derivable analytically; [`fit_relu_constants`] estimates them from exact
//! density measurements and the shipped d=2 defaults were produced by that
//! routine (see [`FITTED_C_D2`]).

use num_bigint::BigUint;
use num_traits::ToPrimitive;
use thiserror::Error;

use crate::scalar::Real;

/// Linear-domain exponents beyond this magnitude saturate in f64;
/// the log10 report fields stay exact.
pub const EXPONENT_SATURATION: f64 = 700.0;

/// Overlap constants c₁, c₂ for the d=2 neuron-count density bound.
///
/// Fitted by [`fit_relu_constants`] against the exact grid oracle on
/// random depth-1 relu networks (d=2, N in 10..=200, delta=0.01, R=1),
/// anchored so the bound evaluates to 0.43 at N=100. Regenerate with the
/// `fit-constants` subcommand of the experiment CLI.
pub const FITTED_C_D2: [f64; 2] = [3.504143468114613e1, 4.276860027112725e-3];

#[derive(Debug, Error, PartialEq)]
pub enum BoundError {
    #[error("dimension must be a positive integer")]
    InvalidDim,
    #[error("delta must be positive")]
    InvalidDelta,
    #[error("delta must not exceed the domain radius")]
    DeltaExceedsRadius,
    #[error("rho_max must lie strictly between 0 and 1")]
    InvalidRhoMax,
    #[error("K must be positive")]
    InvalidK,
    #[error("overlap constants must be non-negative")]
    NegativeConstant,
    #[error("piece count must be at least 2")]
    InvalidPieces,
    #[error("complexity must be non-negative")]
    InvalidComplexity,
    #[error("bits_per_param must be positive")]
    InvalidBits,
    #[error("mutual information must be non-negative")]
    InvalidInformation,
    #[error("need overlap constants c_1..c_{needed}, got {got}")]
    MissingConstants { needed: usize, got: usize },
    #[error("fit needs at least {0} observations with distinct neuron counts")]
    FitUnderdetermined(usize),
    #[error("fit normal equations are singular")]
    FitSingular,
    #[error("observed density must lie in [0, 1)")]
    InvalidObservation,
}

/// How the exponential rate α is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AlphaMode {
    /// α = ln2 / d! (integer gamma).
    GammaFormula,
    /// α = ln m for activations with m linear pieces.
    LogPieces { pieces: u64 },
}

/// Constants entering the closed-form bounds.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundConstants<T: Real> {
    pub k_const: T,
    pub alpha_mode: AlphaMode,
    /// Overlap constants c₁..c_d for the neuron-count bound.
    pub c: Vec<T>,
}

impl<T: Real> Default for BoundConstants<T> {
    fn default() -> Self {
        BoundConstants {
            k_const: T::one(),
            alpha_mode: AlphaMode::GammaFormula,
            c: FITTED_C_D2.iter().map(|&v| T::of(v)).collect(),
        }
    }
}

impl<T: Real> BoundConstants<T> {
    pub fn new(k_const: T, alpha_mode: AlphaMode, c: Vec<T>) -> Result<Self, BoundError> {
        if !(k_const > T::zero()) {
            return Err(BoundError::InvalidK);
        }
        if c.iter().any(|&v| v < T::zero()) {
            return Err(BoundError::NegativeConstant);
        }
        if let AlphaMode::LogPieces { pieces } = alpha_mode {
            if pieces < 2 {
                return Err(BoundError::InvalidPieces);
            }
        }
        Ok(BoundConstants { k_const, alpha_mode, c })
    }

    pub fn with_c(c: Vec<T>) -> Result<Self, BoundError> {
        Self::new(T::one(), AlphaMode::GammaFormula, c)
    }
}

/// One evaluated bound with its inputs echoed.
///
/// `value` is the linear-domain result (it saturates at 0, 1 or infinity
/// when the exponent does); `log10_value` is log10 of the same quantity,
/// computed in the log domain so it stays exact under saturation. For
/// probability-valued formulas `log10_complement` carries the exact
/// log10(1 − value), the quantity of interest when the bound pins to 1.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundReport<T: Real> {
    pub formula: &'static str,
    pub inputs: Vec<(&'static str, String)>,
    pub value: T,
    pub log10_value: T,
    pub log10_complement: Option<T>,
    pub note: String,
}

/// Exact factorial, `None` once it no longer fits in u128 (d > 34).
pub fn factorial_exact(d: u32) -> Option<u128> {
    let mut acc: u128 = 1;
    for i in 2..=d as u128 {
        acc = acc.checked_mul(i)?;
    }
    Some(acc)
}

/// Exact binomial coefficient.
pub fn binomial_exact(n: u64, k: u32) -> BigUint {
    let mut acc = BigUint::from(1u32);
    if u64::from(k) > n {
        return BigUint::from(0u32);
    }
    for i in 0..u64::from(k) {
        acc *= BigUint::from(n - i);
        acc /= BigUint::from(i + 1);
    }
    acc
}

fn binomial_f64(n: u64, k: u32) -> f64 {
    binomial_exact(n, k).to_f64().unwrap_or(f64::INFINITY)
}

/// The exponential rate α.
pub fn alpha<T: Real>(d: u32, mode: AlphaMode) -> Result<T, BoundError> {
    if d == 0 {
        return Err(BoundError::InvalidDim);
    }
    match mode {
        AlphaMode::GammaFormula => Ok(match factorial_exact(d) {
            Some(f) => T::of(std::f64::consts::LN_2 / f as f64),
            None => T::of((std::f64::consts::LN_2.ln() - statrs::function::gamma::ln_gamma(d as f64 + 1.0)).exp()),
        }),
        AlphaMode::LogPieces { pieces } => {
            if pieces < 2 {
                return Err(BoundError::InvalidPieces);
            }
            Ok(T::of((pieces as f64).ln()))
        }
    }
}

/// Natural log of α, exact for any d (no factorial underflow).
pub fn ln_alpha<T: Real>(d: u32, mode: AlphaMode) -> Result<T, BoundError> {
    if d == 0 {
        return Err(BoundError::InvalidDim);
    }
    match mode {
        AlphaMode::GammaFormula => Ok(T::of(
            std::f64::consts::LN_2.ln() - statrs::function::gamma::ln_gamma(d as f64 + 1.0),
        )),
        AlphaMode::LogPieces { pieces } => {
            if pieces < 2 {
                return Err(BoundError::InvalidPieces);
            }
            Ok(T::of((pieces as f64).ln().ln()))
        }
    }
}

const LOG10_E: f64 = std::f64::consts::LOG10_E;

/// Build the density report 1 − exp(−s) from a non-negative exponent given
/// in both linear and log10 form (log form authoritative under saturation).
fn density_from_exponent<T: Real>(
    formula: &'static str,
    inputs: Vec<(&'static str, String)>,
    s: f64,
    log10_s: f64,
) -> BoundReport<T> {
    let value = -(-s).exp_m1();
    let log10_complement = -10f64.powf(log10_s) * LOG10_E;
    let log10_value = if value > 0.0 {
        value.log10()
    } else {
        // 1 - exp(-s) ~ s as s -> 0; exact in the log domain.
        log10_s
    };
    let note = if s > EXPONENT_SATURATION {
        "linear value saturated at 1; log10_complement is exact".to_string()
    } else {
        String::new()
    };
    BoundReport {
        formula,
        inputs,
        value: T::of(value.clamp(0.0, 1.0)),
        log10_value: T::of(log10_value),
        log10_complement: Some(T::of(log10_complement)),
        note,
    }
}

fn fmt_real<T: Real>(v: T) -> String {
    format!("{v:e}")
}

/// Density lower bound from the neuron count of a depth-1 relu network:
/// 1 − exp(−Σ_{k=1}^{d} C(N,k)·c_k·(δ/R)^{d−k+1}).
pub fn relu_density_lower_bound<T: Real>(
    n_neurons: u64,
    dim: u32,
    delta: T,
    radius: T,
    constants: &BoundConstants<T>,
) -> Result<BoundReport<T>, BoundError> {
    if dim == 0 {
        return Err(BoundError::InvalidDim);
    }
    if !(delta > T::zero()) {
        return Err(BoundError::InvalidDelta);
    }
    if delta > radius {
        return Err(BoundError::DeltaExceedsRadius);
    }
    if constants.c.len() < dim as usize {
        return Err(BoundError::MissingConstants {
            needed: dim as usize,
            got: constants.c.len(),
        });
    }
    let ratio = (delta / radius).to_f64().unwrap();
    let mut s = 0.0f64;
    for k in 1..=dim {
        let ck = constants.c[(k - 1) as usize].to_f64().unwrap();
        let power = (dim - k + 1) as i32;
        s += binomial_f64(n_neurons, k) * ck * ratio.powi(power);
    }
    let log10_s = if s.is_finite() {
        s.log10()
    } else {
        // Rebuild the dominant term in log space; the k=dim binomial is
        // the largest for the regimes that overflow.
        (1..=dim)
            .map(|k| {
                let ck = constants.c[(k - 1) as usize].to_f64().unwrap();
                let b = binomial_exact(n_neurons, k);
                let log10_b = b.to_f64().map_or_else(
                    || b.bits() as f64 * std::f64::consts::LOG10_2,
                    |v| if v.is_finite() { v.log10() } else { b.bits() as f64 * std::f64::consts::LOG10_2 },
                );
                log10_b + ck.log10() + (dim - k + 1) as f64 * ratio.log10()
            })
            .fold(f64::NEG_INFINITY, f64::max)
    };
    let mut inputs = vec![
        ("n_neurons", n_neurons.to_string()),
        ("dim", dim.to_string()),
        ("delta", fmt_real(delta)),
        ("radius", fmt_real(radius)),
    ];
    for (i, &ck) in constants.c.iter().take(dim as usize).enumerate() {
        inputs.push(("c", format!("c{}={:e}", i + 1, ck)));
    }
    Ok(density_from_exponent(
        "density_from_neuron_count",
        inputs,
        s,
        log10_s,
    ))
}

/// Density lower bound from complexity: 1 − exp(−α·C/δ^{d−1}), α = ln2/d!.
pub fn asymptotic_density_bound<T: Real>(
    complexity: T,
    delta: T,
    dim: u32,
) -> Result<BoundReport<T>, BoundError> {
    if dim < 2 {
        return Err(BoundError::InvalidDim);
    }
    if !(delta > T::zero()) {
        return Err(BoundError::InvalidDelta);
    }
    if complexity < T::zero() {
        return Err(BoundError::InvalidComplexity);
    }
    let a: f64 = alpha::<f64>(dim, AlphaMode::GammaFormula)?;
    let c = complexity.to_f64().unwrap();
    let dl = delta.to_f64().unwrap();
    let s = a * c / dl.powi(dim as i32 - 1);
    let log10_s = if c > 0.0 {
        ln_alpha::<f64>(dim, AlphaMode::GammaFormula)? * LOG10_E + c.log10()
            - (dim as f64 - 1.0) * dl.log10()
    } else {
        f64::NEG_INFINITY
    };
    let inputs = vec![
        ("complexity", fmt_real(complexity)),
        ("delta", fmt_real(delta)),
        ("dim", dim.to_string()),
        ("alpha", format!("{a:e}")),
    ];
    Ok(density_from_exponent(
        "density_from_complexity",
        inputs,
        s,
        log10_s,
    ))
}

/// Safe-measure upper bound K·exp(−α·C/δ^d).
///
/// Note the exponent uses δ^d, one power higher than the density bound's
/// δ^{d−1}; the two forms are intentionally kept distinct.
pub fn safe_measure_upper_bound<T: Real>(
    complexity: T,
    delta: T,
    dim: u32,
    constants: &BoundConstants<T>,
) -> Result<BoundReport<T>, BoundError> {
    if dim == 0 {
        return Err(BoundError::InvalidDim);
    }
    if !(delta > T::zero()) {
        return Err(BoundError::InvalidDelta);
    }
    if complexity < T::zero() {
        return Err(BoundError::InvalidComplexity);
    }
    if !(constants.k_const > T::zero()) {
        return Err(BoundError::InvalidK);
    }
    let a: f64 = alpha::<f64>(dim, constants.alpha_mode)?;
    let c = complexity.to_f64().unwrap();
    let dl = delta.to_f64().unwrap();
    let k = constants.k_const.to_f64().unwrap();
    let s = a * c / dl.powi(dim as i32);
    let value = k * (-s).exp();
    let log10_value = k.log10() - s * LOG10_E;
    let note = if s > EXPONENT_SATURATION {
        "linear value saturated at 0; log10_value is exact".to_string()
    } else if value > 1.0 {
        "bound exceeds 1 and is vacuous for a probability measure".to_string()
    } else {
        String::new()
    };
    Ok(BoundReport {
        formula: "safe_measure",
        inputs: vec![
            ("complexity", fmt_real(complexity)),
            ("delta", fmt_real(delta)),
            ("dim", dim.to_string()),
            ("k_const", fmt_real(constants.k_const)),
            ("alpha", format!("{a:e}")),
        ],
        value: T::of(value),
        log10_value: T::of(log10_value),
        log10_complement: None,
        note,
    })
}

/// How to invert the density bound for the largest complexity with
/// density at most rho_max.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum C0Mode {
    /// Exact inversion: −ln(1−ρ_max)·δ^{d−1}/α.
    ExactLog,
    /// First-order form ρ_max·δ^{d−1}/α.
    PaperLinear,
}

/// Maximum complexity C₀ whose density bound stays below rho_max.
pub fn max_safe_complexity<T: Real>(
    rho_max: T,
    delta: T,
    dim: u32,
    mode: C0Mode,
) -> Result<BoundReport<T>, BoundError> {
    if dim == 0 {
        return Err(BoundError::InvalidDim);
    }
    if !(delta > T::zero()) {
        return Err(BoundError::InvalidDelta);
    }
    if !(rho_max > T::zero() && rho_max < T::one()) {
        return Err(BoundError::InvalidRhoMax);
    }
    let a: f64 = alpha::<f64>(dim, AlphaMode::GammaFormula)?;
    let rho = rho_max.to_f64().unwrap();
    let dl = delta.to_f64().unwrap();
    let numerator = match mode {
        C0Mode::ExactLog => -(-rho).ln_1p(),
        C0Mode::PaperLinear => rho,
    };
    let value = numerator * dl.powi(dim as i32 - 1) / a;
    let log10_value =
        numerator.log10() + (dim as f64 - 1.0) * dl.log10() - a.log10();
    Ok(BoundReport {
        formula: "max_safe_complexity",
        inputs: vec![
            ("rho_max", fmt_real(rho_max)),
            ("delta", fmt_real(delta)),
            ("dim", dim.to_string()),
            ("mode", format!("{mode:?}")),
            ("alpha", format!("{a:e}")),
        ],
        value: T::of(value),
        log10_value: T::of(log10_value),
        log10_complement: None,
        note: String::new(),
    })
}

/// The complexity sandwich: actual complexity against the safe ceiling C₀
/// and the information-theoretic usefulness floor.
#[derive(Debug, Clone, PartialEq)]
pub struct SandwichReport<T: Real> {
    pub c0: BoundReport<T>,
    pub c_actual: T,
    /// Parameters needed to store the task information at the given coding
    /// rate: I(X;Y) in bits over bits_per_param.
    pub c_min_proxy: T,
    /// log10(C_actual / C₀), exact in the log domain.
    pub log10_ratio: T,
    /// True when even the usefulness floor exceeds the safe ceiling.
    pub sandwich_holds: bool,
}

pub fn sandwich_report<T: Real>(
    c_actual: T,
    rho_max: T,
    delta: T,
    dim: u32,
    i_xy_bits: T,
    bits_per_param: T,
) -> Result<SandwichReport<T>, BoundError> {
    if !(c_actual > T::zero()) {
        return Err(BoundError::InvalidComplexity);
    }
    if i_xy_bits < T::zero() {
        return Err(BoundError::InvalidInformation);
    }
    if !(bits_per_param > T::zero()) {
        return Err(BoundError::InvalidBits);
    }
    let c0 = max_safe_complexity(rho_max, delta, dim, C0Mode::PaperLinear)?;
    let c_min_proxy = i_xy_bits / bits_per_param;
    let log10_ratio = c_actual.to_f64().unwrap().log10() - c0.log10_value.to_f64().unwrap();
    let sandwich_holds = c_min_proxy > c0.value;
    Ok(SandwichReport {
        c0,
        c_actual,
        c_min_proxy,
        log10_ratio: T::of(log10_ratio),
        sandwich_holds,
    })
}

/// Depth-amplification model for a per-layer catastrophe density.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DepthModel {
    /// The printed formula ρ^L. Decreases with depth for ρ < 1, at odds
    /// with the "amplify" reading; kept verbatim rather than reconciled.
    PaperPower,
    /// Independent layers: 1 − (1−ρ)^L.
    UnionIndependent,
}

pub fn depth_amplification<T: Real>(rho_single: T, depth: u32, model: DepthModel) -> T {
    debug_assert!(rho_single >= T::zero() && rho_single <= T::one());
    debug_assert!(depth >= 1);
    match model {
        DepthModel::PaperPower => rho_single.powi(depth as i32),
        DepthModel::UnionIndependent => {
            if rho_single >= T::one() {
                T::one()
            } else {
                // 1 - (1-rho)^L via expm1/ln1p for small-rho accuracy.
                -(T::of(depth as f64) * (-rho_single).ln_1p()).exp_m1()
            }
        }
    }
}

/// One density observation for the constant fit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitObservation<T: Real> {
    pub n_neurons: u64,
    pub rho: T,
}

/// Least squares for the overlap constants c₁..c_d in the exponent domain:
/// each observation contributes the linear equation
/// Σ_k C(N,k)·(δ/R)^{d−k+1}·c_k ≈ −ln(1−ρ).
///
/// With `anchor` set, the fit is constrained so the bound passes exactly
/// through the anchor point (Lagrange multiplier on the normal equations).
/// Negative components are pinned to zero and the reduced system re-solved.
pub fn fit_relu_constants<T: Real>(
    observations: &[FitObservation<T>],
    dim: u32,
    delta: T,
    radius: T,
    anchor: Option<FitObservation<T>>,
) -> Result<Vec<T>, BoundError> {
    let d = dim as usize;
    if d == 0 {
        return Err(BoundError::InvalidDim);
    }
    if !(delta > T::zero()) || delta > radius {
        return Err(BoundError::InvalidDelta);
    }
    if observations.len() < d {
        return Err(BoundError::FitUnderdetermined(d));
    }
    let ratio = (delta / radius).to_f64().unwrap();
    let row = |n: u64| -> Vec<f64> {
        (1..=dim)
            .map(|k| binomial_f64(n, k) * ratio.powi((dim - k + 1) as i32))
            .collect()
    };
    let target = |rho: T| -> Result<f64, BoundError> {
        let r = rho.to_f64().unwrap();
        if !(0.0..1.0).contains(&r) {
            return Err(BoundError::InvalidObservation);
        }
        Ok(-(-r).ln_1p())
    };

    let mut xs: Vec<Vec<f64>> = Vec::with_capacity(observations.len());
    let mut ys: Vec<f64> = Vec::with_capacity(observations.len());
    for obs in observations {
        xs.push(row(obs.n_neurons));
        ys.push(target(obs.rho)?);
    }
    let anchor_row = match anchor {
        Some(a) => Some((row(a.n_neurons), target(a.rho)?)),
        None => None,
    };

    // Active-set loop: solve, pin negative components to zero, repeat.
    let mut free: Vec<bool> = vec![true; d];
    for _ in 0..=d {
        let idx: Vec<usize> = (0..d).filter(|&j| free[j]).collect();
        if idx.is_empty() {
            return Ok(vec![T::zero(); d]);
        }
        let m = idx.len();
        let constrained = anchor_row.is_some();
        let size = m + usize::from(constrained);
        let mut a = vec![vec![0.0f64; size]; size];
        let mut b = vec![0.0f64; size];
        for (r, x) in xs.iter().enumerate() {
            for (p, &jp) in idx.iter().enumerate() {
                for (q, &jq) in idx.iter().enumerate() {
                    a[p][q] += x[jp] * x[jq];
                }
                b[p] += x[jp] * ys[r];
            }
        }
        if let Some((ar, ay)) = &anchor_row {
            for (p, &jp) in idx.iter().enumerate() {
                a[p][m] = ar[jp] / 2.0;
                a[m][p] = ar[jp];
            }
            b[m] = *ay;
        }
        let sol = solve_dense(&mut a, &mut b).ok_or(BoundError::FitSingular)?;
        let mut any_negative = false;
        let mut c = vec![0.0f64; d];
        for (p, &jp) in idx.iter().enumerate() {
            if sol[p] < 0.0 {
                free[jp] = false;
                any_negative = true;
            } else {
                c[jp] = sol[p];
            }
        }
        if !any_negative {
            return Ok(c.into_iter().map(T::of).collect());
        }
    }
    Err(BoundError::FitSingular)
}

/// Gaussian elimination with partial pivoting; consumes its inputs.
fn solve_dense(a: &mut [Vec<f64>], b: &mut [f64]) -> Option<Vec<f64>> {
    let n = b.len();
    for col in 0..n {
        let pivot = (col..n).max_by(|&i, &j| {
            a[i][col].abs().partial_cmp(&a[j][col].abs()).unwrap()
        })?;
        if a[pivot][col].abs() < 1e-300 {
            return None;
        }
        a.swap(col, pivot);
        b.swap(col, pivot);
        for r in col + 1..n {
            let f = a[r][col] / a[col][col];
            for c in col..n {
                a[r][c] -= f * a[col][c];
            }
            b[r] -= f * b[col];
        }
    }
    let mut x = vec![0.0f64; n];
    for col in (0..n).rev() {
        let mut s = b[col];
        for c in col + 1..n {
            s -= a[col][c] * x[c];
        }
        x[col] = s / a[col][col];
    }
    Some(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::{assert_abs_diff_eq, assert_relative_eq};

    #[test]
    fn alpha_two_is_half_ln_two() {
        let a: f64 = alpha(2, AlphaMode::GammaFormula).unwrap();
        assert_abs_diff_eq!(a, 0.346574, epsilon = 1e-6);
        assert_eq!(a, std::f64::consts::LN_2 / 2.0);
    }

    #[test]
    fn alpha_times_factorial_recovers_ln_two() {
        for d in 1..=20u32 {
            let a: f64 = alpha(d, AlphaMode::GammaFormula).unwrap();
            let fact = factorial_exact(d).unwrap() as f64;
            assert_abs_diff_eq!(a * fact, std::f64::consts::LN_2, epsilon = 1e-15);
        }
    }

    #[test]
    fn alpha_edge_cases() {
        assert_eq!(
            alpha::<f64>(1, AlphaMode::GammaFormula).unwrap(),
            std::f64::consts::LN_2
        );
        assert_eq!(
            alpha::<f64>(5, AlphaMode::LogPieces { pieces: 2 }).unwrap(),
            std::f64::consts::LN_2
        );
        assert_eq!(
            alpha::<f64>(0, AlphaMode::GammaFormula).unwrap_err(),
            BoundError::InvalidDim
        );
        assert_eq!(
            alpha::<f64>(3, AlphaMode::LogPieces { pieces: 1 }).unwrap_err(),
            BoundError::InvalidPieces
        );
        // Beyond the exact-factorial range the gamma path takes over.
        let a40: f64 = alpha(40, AlphaMode::GammaFormula).unwrap();
        let expect = (std::f64::consts::LN_2.ln()
            - statrs::function::gamma::ln_gamma(41.0))
        .exp();
        assert_relative_eq!(a40, expect, max_relative = 1e-12);
    }

    #[test]
    fn factorials_are_exact_and_bounded() {
        assert_eq!(factorial_exact(0), Some(1));
        assert_eq!(factorial_exact(5), Some(120));
        assert_eq!(factorial_exact(20), Some(2_432_902_008_176_640_000));
        assert!(factorial_exact(34).is_some());
        assert_eq!(factorial_exact(35), None);
    }

    #[test]
    fn binomials_match_pascal() {
        assert_eq!(binomial_exact(0, 0).to_u64(), Some(1));
        assert_eq!(binomial_exact(100, 2).to_u64(), Some(4950));
        assert_eq!(binomial_exact(5, 7).to_u64(), Some(0));
        for n in 1..=40u64 {
            for k in 1..n as u32 {
                let lhs = binomial_exact(n, k);
                let rhs = binomial_exact(n - 1, k - 1) + binomial_exact(n - 1, k);
                assert_eq!(lhs, rhs);
            }
        }
    }

    #[test]
    fn neuron_count_bound_trivial_cases() {
        let cst = BoundConstants::with_c(vec![0.5, 0.25]).unwrap();
        let r = relu_density_lower_bound(0, 2, 0.01, 1.0, &cst).unwrap();
        assert_eq!(r.value, 0.0);
        assert_eq!(
            relu_density_lower_bound(10, 2, 1.5, 1.0, &cst).unwrap_err(),
            BoundError::DeltaExceedsRadius
        );
        assert_eq!(
            relu_density_lower_bound::<f64>(
                10,
                3,
                0.01,
                1.0,
                &BoundConstants::with_c(vec![0.5]).unwrap()
            )
            .unwrap_err(),
            BoundError::MissingConstants { needed: 3, got: 1 }
        );
    }

    #[test]
    fn neuron_count_bound_d1_reduces_to_scalar_form() {
        let cst = BoundConstants::with_c(vec![0.3]).unwrap();
        let r = relu_density_lower_bound(7, 1, 0.05, 1.0, &cst).unwrap();
        let expect = 1.0 - (-7.0 * 0.3 * 0.05f64).exp();
        assert_relative_eq!(r.value, expect, max_relative = 1e-14);
    }

    #[test]
    fn neuron_count_bound_monotone() {
        let delta = 0.01;
        let base = BoundConstants::with_c(vec![0.5, 0.01]).unwrap();
        let mut last = -1.0;
        for n in [0u64, 1, 5, 20, 100, 1000] {
            let v = relu_density_lower_bound(n, 2, delta, 1.0, &base)
                .unwrap()
                .value;
            assert!(v >= last);
            last = v;
        }
        let mut last = -1.0;
        for delta in [1e-4, 1e-3, 1e-2, 1e-1] {
            let v = relu_density_lower_bound(50, 2, delta, 1.0, &base)
                .unwrap()
                .value;
            assert!(v >= last);
            last = v;
        }
        let v0 = relu_density_lower_bound(50, 2, delta, 1.0, &base)
            .unwrap()
            .value;
        for scale in [1.5, 2.0, 10.0] {
            let cst =
                BoundConstants::with_c(vec![0.5 * scale, 0.01 * scale]).unwrap();
            assert!(relu_density_lower_bound(50, 2, delta, 1.0, &cst).unwrap().value >= v0);
        }
    }

    #[test]
    fn neuron_count_bound_saturates_cleanly() {
        let cst = BoundConstants::with_c(vec![0.5f64, 0.01]).unwrap();
        let r = relu_density_lower_bound(1_000_000, 2, 0.01, 1.0, &cst).unwrap();
        assert_eq!(r.value, 1.0);
        let lc = r.log10_complement.unwrap();
        assert!(lc < -1e4, "complement log10 {lc}");
        assert!(lc.is_finite());
    }

    #[test]
    fn complexity_bound_examples() {
        let r = asymptotic_density_bound(0.0, 1e-3, 2).unwrap();
        assert_eq!(r.value, 0.0);

        let r = asymptotic_density_bound(1.0, 1.0, 2).unwrap();
        assert_abs_diff_eq!(r.value, 0.29289, epsilon = 1e-5);

        let r = asymptotic_density_bound(1e12, 1e-3, 2).unwrap();
        assert_eq!(r.value, 1.0);
        let lc = r.log10_complement.unwrap();
        assert!((-1.6e14..=-1.4e14).contains(&lc), "log10 complement {lc}");
    }

    #[test]
    fn safe_measure_examples() {
        let cst = BoundConstants::<f64>::default();
        let r = safe_measure_upper_bound(0.0, 0.5, 2, &cst).unwrap();
        assert_eq!(r.value, 1.0);

        let r = safe_measure_upper_bound(1.0, 1.0, 1, &cst).unwrap();
        assert_relative_eq!(r.value, 0.5, max_relative = 1e-15);

        let r = safe_measure_upper_bound(1e8, 1e-2, 2, &cst).unwrap();
        assert_eq!(r.value, 0.0);
        assert_relative_eq!(r.log10_value, -0.34657e12 * LOG10_E, max_relative = 1e-4);
        assert!(r.note.contains("log10_value"));
    }

    #[test]
    fn safe_measure_monotone_in_complexity() {
        let cst = BoundConstants::<f64>::default();
        let mut last = f64::INFINITY;
        for c in [0.0, 1.0, 10.0, 100.0, 1e4] {
            let v = safe_measure_upper_bound(c, 0.1, 2, &cst).unwrap().value;
            assert!(v <= last);
            last = v;
        }
    }

    #[test]
    fn max_safe_complexity_examples() {
        let r = max_safe_complexity(0.01, 1e-3, 2, C0Mode::PaperLinear).unwrap();
        assert_relative_eq!(r.value, 2.885e-5, max_relative = 1e-3);

        // The exact inversion sits about rho/2 above the linear form.
        let exact = max_safe_complexity(0.01, 1e-3, 2, C0Mode::ExactLog).unwrap();
        let gap = (exact.value - r.value) / r.value;
        assert!((0.004..0.006).contains(&gap), "gap {gap}");

        for rho in [1e-6, 1e-9] {
            let v = max_safe_complexity(rho, 1e-3, 2, C0Mode::PaperLinear)
                .unwrap()
                .value;
            assert!(v < rho);
        }
        assert_eq!(
            max_safe_complexity::<f64>(1.0, 1e-3, 2, C0Mode::ExactLog).unwrap_err(),
            BoundError::InvalidRhoMax
        );
    }

    #[test]
    fn sandwich_orders_of_magnitude() {
        let r = sandwich_report(1e12, 0.01, 1e-3, 2, 1e9, 2.0).unwrap();
        assert!((16.4..=17.6).contains(&r.log10_ratio), "{}", r.log10_ratio);
        assert!(r.sandwich_holds);
        assert_eq!(r.c_min_proxy, 5e8);

        let r = sandwich_report(1e8, 0.01, 1e-3, 2, 1e9, 2.0).unwrap();
        assert!((12.4..=13.6).contains(&r.log10_ratio), "{}", r.log10_ratio);

        let r = sandwich_report(1e12, 0.01, 1e-3, 2, 0.0, 2.0).unwrap();
        assert_eq!(r.c_min_proxy, 0.0);
        assert!(!r.sandwich_holds);
    }

    #[test]
    fn depth_models() {
        for model in [DepthModel::PaperPower, DepthModel::UnionIndependent] {
            assert_eq!(depth_amplification(0.0, 5, model), 0.0);
            assert_relative_eq!(
                depth_amplification(0.3, 1, model),
                0.3,
                max_relative = 1e-15
            );
        }
        assert_relative_eq!(
            depth_amplification(0.1, 3, DepthModel::UnionIndependent),
            0.271,
            max_relative = 1e-12
        );
        assert_relative_eq!(
            depth_amplification(0.1, 3, DepthModel::PaperPower),
            0.001,
            max_relative = 1e-12
        );
        // The union model amplifies; the power form shrinks.
        assert!(
            depth_amplification(0.1, 10, DepthModel::UnionIndependent) > 0.1
        );
        assert!(depth_amplification(0.1, 10, DepthModel::PaperPower) < 0.1);
    }

    #[test]
    fn log_and_linear_domains_agree() {
        let cst = BoundConstants::with_c(vec![0.5, 0.01]).unwrap();
        for n in [1u64, 5, 20, 80] {
            let r = relu_density_lower_bound(n, 2, 0.01, 1.0, &cst).unwrap();
            if r.value > 0.0 && r.value < 1.0 {
                assert_relative_eq!(
                    10f64.powf(r.log10_value),
                    r.value,
                    max_relative = 1e-12
                );
            }
        }
        for c in [0.1, 1.0, 10.0] {
            let r = asymptotic_density_bound(c, 0.5, 2).unwrap();
            assert_relative_eq!(10f64.powf(r.log10_value), r.value, max_relative = 1e-12);
            let s = safe_measure_upper_bound(c, 0.5, 2, &BoundConstants::default()).unwrap();
            assert_relative_eq!(10f64.powf(s.log10_value), s.value, max_relative = 1e-12);
        }
        let r = max_safe_complexity(0.3, 0.01, 3, C0Mode::ExactLog).unwrap();
        assert_relative_eq!(10f64.powf(r.log10_value), r.value, max_relative = 1e-12);
    }

    #[test]
    fn fit_recovers_exact_synthetic_constants() {
        let truth = [0.8, 0.002];
        let delta = 0.01;
        let make_rho = |n: u64| -> f64 {
            let s = n as f64 * truth[0] * delta * delta
                + binomial_f64(n, 2) * truth[1] * delta;
            1.0 - (-s).exp()
        };
        let obs: Vec<FitObservation<f64>> = (1..=20)
            .map(|i| {
                let n = 10 * i as u64;
                FitObservation { n_neurons: n, rho: make_rho(n) }
            })
            .collect();
        let c = fit_relu_constants(&obs, 2, delta, 1.0, None).unwrap();
        assert_relative_eq!(c[0], truth[0], max_relative = 1e-6);
        assert_relative_eq!(c[1], truth[1], max_relative = 1e-6);

        // A consistent anchor changes nothing.
        let anchor = FitObservation { n_neurons: 100, rho: make_rho(100) };
        let c = fit_relu_constants(&obs, 2, delta, 1.0, Some(anchor)).unwrap();
        assert_relative_eq!(c[0], truth[0], max_relative = 1e-6);
        assert_relative_eq!(c[1], truth[1], max_relative = 1e-6);
    }

    #[test]
    fn anchored_fit_passes_through_the_anchor() {
        // Data generated by a pure single-constant law; the anchor demands
        // a different value at N=100, and the constrained fit must hit it.
        let delta = 0.01;
        let obs: Vec<FitObservation<f64>> = (1..=20)
            .map(|i| {
                let n = 10 * i as u64;
                FitObservation {
                    n_neurons: n,
                    rho: 1.0 - (-0.0079 * n as f64).exp(),
                }
            })
            .collect();
        let anchor = FitObservation { n_neurons: 100, rho: 0.43 };
        let c = fit_relu_constants(&obs, 2, delta, 1.0, Some(anchor)).unwrap();
        assert!(c.iter().all(|&v| v >= 0.0));
        let cst = BoundConstants::with_c(c).unwrap();
        let r = relu_density_lower_bound(100, 2, delta, 1.0, &cst).unwrap();
        assert_relative_eq!(r.value, 0.43, max_relative = 1e-10);
    }

    #[test]
    fn fit_input_validation() {
        let obs = [FitObservation { n_neurons: 10, rho: 0.1 }];
        assert_eq!(
            fit_relu_constants(&obs, 2, 0.01, 1.0, None).unwrap_err(),
            BoundError::FitUnderdetermined(2)
        );
        let bad = [
            FitObservation { n_neurons: 10, rho: 0.1 },
            FitObservation { n_neurons: 20, rho: 1.0 },
        ];
        assert_eq!(
            fit_relu_constants(&bad, 2, 0.01, 1.0, None).unwrap_err(),
            BoundError::InvalidObservation
        );
    }

    #[test]
    fn constants_validation() {
        assert_eq!(
            BoundConstants::new(0.0, AlphaMode::GammaFormula, vec![]).unwrap_err(),
            BoundError::InvalidK
        );
        assert_eq!(
            BoundConstants::with_c(vec![0.1, -0.2]).unwrap_err(),
            BoundError::NegativeConstant
        );
        let d = BoundConstants::<f64>::default();
        assert_eq!(d.k_const, 1.0);
        assert_eq!(d.c.len(), 2);
    }
}
