//! Seeded Monte Carlo estimators of catastrophe density.
//!
//! Three related quantities over a ball domain, all binomial proportions
//! with Wilson score intervals:
//!
//! - kink density: fraction of inputs within `delta` of an activation
//!   boundary (exact per-sample test for depth-1 networks, directional
//!   probe otherwise — the probe can only miss boundaries, so those
//!   estimates are flagged as lower bounds);
//! - output instability: fraction of inputs where a perturbation of norm
//!   at most `delta` moves the output by at least `eps`; witnesses come
//!   from a projected-gradient inner maximizer, so this too is a certified
//!   lower bound;
//! - safe measure: the complement of the chosen catastrophe criterion.
//!
//! Sampling is uniform on the ball (normalized Gaussian direction, radius
//! `R u^(1/d)`), split into fixed-size chunks with per-chunk derived RNG
//! streams: estimates are bit-identical for a fixed seed no matter how many
//! worker threads run the chunks.

use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::net::{Domain, NetError, Network};
use crate::region::{self, RegionError};
use crate::rng;
use crate::scalar::Real;
use crate::stats::{self, TrendTest};

const CHUNK: u64 = 4096;

#[derive(Debug, Error, PartialEq)]
pub enum DensityError {
    #[error("{0} must be positive")]
    NotPositive(&'static str),
    #[error("sample count must be positive")]
    NoSamples,
    #[error("confidence must be in (0,1)")]
    BadConfidence,
    #[error("width grid must hold at least two distinct widths")]
    DegenerateGrid,
    #[error("trials_per_width must be at least 30 for the trend test")]
    TooFewTrials,
    #[error(transparent)]
    Region(#[from] RegionError),
    #[error(transparent)]
    Net(#[from] NetError),
}

/// Norm applied to the output change in the instability criterion.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutputNorm {
    L2,
    Linf,
}

impl OutputNorm {
    pub fn apply<T: Real>(self, v: &[T]) -> T {
        match self {
            OutputNorm::L2 => v.iter().map(|&x| x * x).fold(T::zero(), |a, b| a + b).sqrt(),
            OutputNorm::Linf => v.iter().fold(T::zero(), |a, &b| a.max(b.abs())),
        }
    }
}

/// What counts as a catastrophe at a point.
#[derive(Debug, Clone, PartialEq)]
pub enum Criterion<T: Real> {
    /// Within `delta` of an activation boundary.
    Kink,
    /// Some `|dx| <= delta` moves the output by at least `eps` in `norm`.
    OutputJump { eps: T, norm: OutputNorm },
}

/// Which estimator produced a [`DensityEstimate`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EstimateKind {
    KinkDensity,
    OutputInstability,
    SafeMeasure,
    AttackSuccess,
}

/// A binomial proportion estimate with its Wilson interval and provenance.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityEstimate<T: Real> {
    pub rho: T,
    pub ci_low: T,
    pub ci_high: T,
    pub hits: u64,
    pub n: u64,
    pub confidence: T,
    pub seed: u64,
    pub kind: EstimateKind,
    /// True when the per-sample test can miss positives (probe or witness
    /// search), making `rho` a lower bound on the true proportion.
    pub is_lower_bound: bool,
}

impl<T: Real> DensityEstimate<T> {
    fn from_counts(
        hits: u64,
        n: u64,
        confidence: T,
        seed: u64,
        kind: EstimateKind,
        is_lower_bound: bool,
    ) -> Self {
        let (lo, hi) = stats::wilson_interval(hits, n, confidence);
        DensityEstimate {
            rho: T::of(hits as f64 / n as f64),
            ci_low: lo,
            ci_high: hi,
            hits,
            n,
            confidence,
            seed,
            kind,
            is_lower_bound,
        }
    }

    /// The complementary proportion (same data, flipped interval).
    pub fn complement(&self, kind: EstimateKind) -> Self {
        DensityEstimate {
            rho: T::one() - self.rho,
            ci_low: T::one() - self.ci_high,
            ci_high: T::one() - self.ci_low,
            hits: self.n - self.hits,
            n: self.n,
            confidence: self.confidence,
            seed: self.seed,
            kind,
            // A lower bound on catastrophes is an upper bound on safety;
            // the flag keeps meaning "one-sided in the conservative-for-
            // catastrophe direction".
            is_lower_bound: self.is_lower_bound,
        }
    }
}

/// Tuning knobs shared by the Monte Carlo estimators.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McOptions<T: Real> {
    pub confidence: T,
    /// Probe directions for deep-network kink tests.
    pub probe_directions: usize,
    /// Projected-gradient steps for the output-jump inner maximizer.
    pub inner_budget: usize,
}

impl<T: Real> Default for McOptions<T> {
    fn default() -> Self {
        McOptions {
            confidence: T::of(0.99),
            probe_directions: 64,
            inner_budget: 20,
        }
    }
}

/// Draw a point uniformly from the domain ball into `out`.
pub fn sample_in_ball<T: Real>(domain: &Domain<T>, r: &mut ChaCha8Rng, out: &mut [T]) {
    let d = domain.dim();
    debug_assert_eq!(out.len(), d);
    loop {
        let mut n2 = T::zero();
        for o in out.iter_mut() {
            *o = T::standard_normal(r);
            n2 += *o * *o;
        }
        let n = n2.sqrt();
        if n > T::zero() {
            let u = T::uniform_01(r);
            let radius = domain.radius * u.powf(T::one() / T::of(d as f64));
            for (o, c) in out.iter_mut().zip(&domain.center) {
                *o = *c + *o / n * radius;
            }
            return;
        }
    }
}

fn validate_common<T: Real>(delta: T, n: u64, confidence: T) -> Result<(), DensityError> {
    if delta <= T::zero() {
        return Err(DensityError::NotPositive("delta"));
    }
    if n == 0 {
        return Err(DensityError::NoSamples);
    }
    if confidence <= T::zero() || confidence >= T::one() {
        return Err(DensityError::BadConfidence);
    }
    Ok(())
}

/// Deterministic chunked Bernoulli counter: `test` sees a per-chunk RNG and
/// a scratch sample buffer. Thread count never affects the result.
fn count_hits<T, F>(domain: &Domain<T>, n: u64, seed: u64, label: &str, test: F) -> u64
where
    T: Real,
    F: Fn(&[T], &mut ChaCha8Rng) -> bool + Sync,
{
    let chunks = n.div_ceil(CHUNK);
    (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut r = rng::chunk_stream(seed, label, c);
            let len = CHUNK.min(n - c * CHUNK);
            let mut x = vec![T::zero(); domain.dim()];
            let mut hits = 0u64;
            for _ in 0..len {
                sample_in_ball(domain, &mut r, &mut x);
                if test(&x, &mut r) {
                    hits += 1;
                }
            }
            hits
        })
        .sum()
}

/// Monte Carlo kink density: the measure of inputs within `delta` of an
/// activation boundary, over uniform samples from the domain.
pub fn estimate_kink_density<T: Real>(
    net: &Network<T>,
    domain: &Domain<T>,
    delta: T,
    n: u64,
    seed: u64,
    opts: &McOptions<T>,
) -> Result<DensityEstimate<T>, DensityError> {
    validate_common(delta, n, opts.confidence)?;
    if !net.is_piecewise_linear() {
        return Err(DensityError::Region(RegionError::NotPiecewiseLinear));
    }
    if domain.dim() != net.input_dim() {
        return Err(DensityError::Region(RegionError::DomainMismatch {
            domain: domain.dim(),
            net: net.input_dim(),
        }));
    }
    let exact = net.is_depth1_piecewise();
    let hits = if exact {
        let planes = region::first_layer_boundaries(net, domain)?;
        let unit_planes: Vec<(Vec<T>, T)> = planes
            .iter()
            .map(|bp| {
                let norm = bp.plane.norm();
                (
                    bp.plane.normal.iter().map(|&v| v / norm).collect(),
                    bp.plane.offset / norm,
                )
            })
            .collect();
        count_hits(domain, n, seed, "kink_density", |x, _| {
            unit_planes.iter().any(|(w, c)| {
                let mut z = *c;
                for (wi, xi) in w.iter().zip(x) {
                    z += *wi * *xi;
                }
                z.abs() <= delta
            })
        })
    } else {
        let k = opts.probe_directions.max(1);
        count_hits(domain, n, seed, "kink_density", |x, r| {
            probe_kink_within(net, x, delta, k, r)
        })
    };
    Ok(DensityEstimate::from_counts(
        hits,
        n,
        opts.confidence,
        seed,
        EstimateKind::KinkDensity,
        !exact,
    ))
}

/// True when the activation pattern changes within distance `delta` of `x`
/// along one of `k` random directions (each tested both ways).
fn probe_kink_within<T: Real>(
    net: &Network<T>,
    x: &[T],
    delta: T,
    k: usize,
    r: &mut ChaCha8Rng,
) -> bool {
    let base = net.forward_with_pattern(x).expect("pl net, finite point").1;
    let d = x.len();
    let mut u = vec![T::zero(); d];
    let mut probe = vec![T::zero(); d];
    for _ in 0..k {
        loop {
            let mut n2 = T::zero();
            for ui in u.iter_mut() {
                *ui = T::standard_normal(r);
                n2 += *ui * *ui;
            }
            let norm = n2.sqrt();
            if norm > T::zero() {
                for ui in u.iter_mut() {
                    *ui /= norm;
                }
                break;
            }
        }
        for sign in [T::one(), -T::one()] {
            for i in 0..d {
                probe[i] = x[i] + sign * delta * u[i];
            }
            if net.forward_with_pattern(&probe).expect("pl net").1 != base {
                return true;
            }
        }
    }
    false
}

fn l2_diff<T: Real>(a: &[T], b: &[T], out: &mut [T]) {
    for ((o, &ai), &bi) in out.iter_mut().zip(a).zip(b) {
        *o = ai - bi;
    }
}

fn project_to_ball<T: Real>(x: &mut [T], center: &[T], radius: T) {
    let mut n2 = T::zero();
    for (xi, ci) in x.iter().zip(center) {
        let d = *xi - *ci;
        n2 += d * d;
    }
    let n = n2.sqrt();
    if n > radius {
        let s = radius / n;
        for (xi, ci) in x.iter_mut().zip(center) {
            *xi = *ci + (*xi - *ci) * s;
        }
    }
}

/// Largest output change found inside each of the given perturbation radii
/// (`radii` must be sorted ascending). Results are non-decreasing by
/// construction: the search at a larger radius starts from the best witness
/// found at the smaller one.
///
/// The search is a projected gradient ascent on `|f(x') - f(x)|_2^2` with
/// a Jacobian-aligned first step, axis probes (for d <= 8), and a few
/// random starts.
pub fn output_jump_profile<T: Real>(
    net: &Network<T>,
    x: &[T],
    radii: &[T],
    budget: usize,
    r: &mut ChaCha8Rng,
) -> Result<Vec<T>, NetError> {
    let f0 = net.forward(x)?;
    let d = x.len();
    let out_dim = f0.len();

    // Top right-singular direction of the Jacobian at x by power iteration.
    let jac = net.jacobian_input(x)?.matrix;
    let mut v: Vec<T> = (0..d).map(|_| T::standard_normal(r)).collect();
    for _ in 0..8 {
        let mut jv = vec![T::zero(); out_dim];
        for (i, jvi) in jv.iter_mut().enumerate() {
            for (k, &vk) in v.iter().enumerate() {
                *jvi += jac[(i, k)] * vk;
            }
        }
        let mut jtjv = vec![T::zero(); d];
        for (k, t) in jtjv.iter_mut().enumerate() {
            for (i, &ji) in jv.iter().enumerate() {
                *t += jac[(i, k)] * ji;
            }
        }
        let n = jtjv.iter().map(|&a| a * a).fold(T::zero(), |a, b| a + b).sqrt();
        if n == T::zero() {
            break;
        }
        for (vi, ti) in v.iter_mut().zip(&jtjv) {
            *vi = *ti / n;
        }
    }

    let jump_at = |p: &[T]| -> T {
        let f = net.forward(p).expect("finite probe");
        let mut diff = vec![T::zero(); out_dim];
        l2_diff(&f, &f0, &mut diff);
        OutputNorm::L2.apply(&diff)
    };

    let mut results = Vec::with_capacity(radii.len());
    let mut carry: Option<Vec<T>> = None; // best witness from the previous radius
    for &radius in radii {
        let mut starts: Vec<Vec<T>> = Vec::new();
        if let Some(c) = &carry {
            starts.push(c.clone());
        }
        for sign in [T::one(), -T::one()] {
            starts.push(x.iter().zip(&v).map(|(&xi, &vi)| xi + sign * radius * vi).collect());
        }
        if d <= 8 {
            for i in 0..d {
                for sign in [T::one(), -T::one()] {
                    let mut p = x.to_vec();
                    p[i] += sign * radius;
                    starts.push(p);
                }
            }
        }
        for _ in 0..4 {
            let mut u: Vec<T> = (0..d).map(|_| T::standard_normal(r)).collect();
            let n = u.iter().map(|&a| a * a).fold(T::zero(), |a, b| a + b).sqrt();
            if n > T::zero() {
                for ui in u.iter_mut() {
                    *ui /= n;
                }
                starts.push(x.iter().zip(&u).map(|(&xi, &ui)| xi + radius * ui).collect());
            }
        }

        let mut best = T::zero();
        let mut best_point = x.to_vec();
        for mut s in starts {
            project_to_ball(&mut s, x, radius);
            let j = jump_at(&s);
            if j > best {
                best = j;
                best_point = s;
            }
        }

        // Gradient ascent from the best start.
        let step = radius / T::of(4.0);
        let mut cur = best_point.clone();
        for _ in 0..budget {
            let f = net.forward(&cur).expect("finite iterate");
            let mut diff = vec![T::zero(); out_dim];
            l2_diff(&f, &f0, &mut diff);
            let jc = net.jacobian_input(&cur).expect("finite iterate").matrix;
            let mut g = vec![T::zero(); d];
            for (k, gk) in g.iter_mut().enumerate() {
                for (i, &di) in diff.iter().enumerate() {
                    *gk += jc[(i, k)] * di;
                }
            }
            let gn = g.iter().map(|&a| a * a).fold(T::zero(), |a, b| a + b).sqrt();
            if gn == T::zero() {
                break;
            }
            for (ci, gi) in cur.iter_mut().zip(&g) {
                *ci += step * *gi / gn;
            }
            project_to_ball(&mut cur, x, radius);
            let j = jump_at(&cur);
            if j > best {
                best = j;
                best_point = cur.clone();
            }
        }
        results.push(best);
        carry = Some(best_point);
    }
    Ok(results)
}

/// Monte Carlo output instability: the measure of inputs where some
/// perturbation with `|dx|_2 <= delta` moves the output by at least `eps`.
/// A certified lower bound: every counted point has an explicit witness.
pub fn estimate_output_instability<T: Real>(
    net: &Network<T>,
    domain: &Domain<T>,
    eps: T,
    delta: T,
    n: u64,
    seed: u64,
    norm: OutputNorm,
    opts: &McOptions<T>,
) -> Result<DensityEstimate<T>, DensityError> {
    validate_common(delta, n, opts.confidence)?;
    if eps <= T::zero() {
        return Err(DensityError::NotPositive("eps"));
    }
    if domain.dim() != net.input_dim() {
        return Err(DensityError::Region(RegionError::DomainMismatch {
            domain: domain.dim(),
            net: net.input_dim(),
        }));
    }
    let budget = opts.inner_budget;
    let hits = count_hits(domain, n, seed, "output_instability", |x, r| {
        // The ascent maximizes the L2 jump; for Linf the found witness is
        // re-measured in the requested norm (still a valid witness test).
        match norm {
            OutputNorm::L2 => {
                let best = output_jump_profile(net, x, &[delta], budget, r).expect("finite");
                best[0] >= eps
            }
            OutputNorm::Linf => {
                let f0 = net.forward(x).expect("finite");
                let best = output_jump_witness_linf(net, x, &f0, delta, budget, r);
                best >= eps
            }
        }
    });
    Ok(DensityEstimate::from_counts(
        hits,
        n,
        opts.confidence,
        seed,
        EstimateKind::OutputInstability,
        true,
    ))
}

/// Best Linf output jump within the delta-ball: per output coordinate,
/// step along that coordinate's gradient row, then refine with a short
/// sign-fixed gradient ascent on the winning coordinate.
fn output_jump_witness_linf<T: Real>(
    net: &Network<T>,
    x: &[T],
    f0: &[T],
    delta: T,
    budget: usize,
    r: &mut ChaCha8Rng,
) -> T {
    let d = x.len();
    let out_dim = f0.len();
    let jac = net.jacobian_input(x).expect("finite point").matrix;
    let mut candidates: Vec<Vec<T>> = Vec::new();
    for i in 0..out_dim {
        let row: Vec<T> = (0..d).map(|k| jac[(i, k)]).collect();
        let n = row.iter().map(|&a| a * a).fold(T::zero(), |a, b| a + b).sqrt();
        if n == T::zero() {
            continue;
        }
        for sign in [T::one(), -T::one()] {
            candidates.push(
                x.iter()
                    .zip(&row)
                    .map(|(&xi, &ri)| xi + sign * delta * ri / n)
                    .collect(),
            );
        }
    }
    if d <= 8 {
        for i in 0..d {
            for sign in [T::one(), -T::one()] {
                let mut p = x.to_vec();
                p[i] += sign * delta;
                candidates.push(p);
            }
        }
    }
    for _ in 0..4 {
        let u: Vec<T> = (0..d).map(|_| T::standard_normal(r)).collect();
        let n = u.iter().map(|&a| a * a).fold(T::zero(), |a, b| a + b).sqrt();
        if n > T::zero() {
            candidates
                .push(x.iter().zip(&u).map(|(&xi, &ui)| xi + delta * ui / n).collect());
        }
    }

    let mut diff = vec![T::zero(); out_dim];
    let jump_at = |p: &[T], diff: &mut [T]| -> (T, usize) {
        let f = net.forward(p).expect("finite probe");
        l2_diff(&f, f0, diff);
        let mut best = T::zero();
        let mut arg = 0;
        for (i, &v) in diff.iter().enumerate() {
            if v.abs() > best {
                best = v.abs();
                arg = i;
            }
        }
        (best, arg)
    };

    let mut best = T::zero();
    let mut best_point = x.to_vec();
    let mut best_coord = 0;
    for mut c in candidates {
        project_to_ball(&mut c, x, delta);
        let (j, arg) = jump_at(&c, &mut diff);
        if j > best {
            best = j;
            best_coord = arg;
            best_point = c;
        }
    }
    if best == T::zero() {
        return best;
    }

    // Ascend |f_i(x') - f_i(x)| for the winning coordinate i.
    let step = delta / T::of(4.0);
    let mut cur = best_point;
    for _ in 0..budget {
        let f = net.forward(&cur).expect("finite iterate");
        let sign = if f[best_coord] >= f0[best_coord] { T::one() } else { -T::one() };
        let jc = net.jacobian_input(&cur).expect("finite iterate").matrix;
        let mut g: Vec<T> = (0..d).map(|k| sign * jc[(best_coord, k)]).collect();
        let gn = g.iter().map(|&a| a * a).fold(T::zero(), |a, b| a + b).sqrt();
        if gn == T::zero() {
            break;
        }
        for gi in g.iter_mut() {
            *gi /= gn;
        }
        for (ci, gi) in cur.iter_mut().zip(&g) {
            *ci += step * *gi;
        }
        project_to_ball(&mut cur, x, delta);
        let (j, _) = jump_at(&cur, &mut diff);
        best = best.max(j);
    }
    best
}

/// Measure of safe inputs: the complement of the chosen catastrophe
/// estimator on the same samples.
pub fn estimate_safe_measure<T: Real>(
    net: &Network<T>,
    domain: &Domain<T>,
    criterion: &Criterion<T>,
    delta: T,
    n: u64,
    seed: u64,
    opts: &McOptions<T>,
) -> Result<DensityEstimate<T>, DensityError> {
    let catastrophic = match criterion {
        Criterion::Kink => estimate_kink_density(net, domain, delta, n, seed, opts)?,
        Criterion::OutputJump { eps, norm } => {
            estimate_output_instability(net, domain, *eps, delta, n, seed, *norm, opts)?
        }
    };
    Ok(catastrophic.complement(EstimateKind::SafeMeasure))
}

/// One width level of a genericity sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow<T: Real> {
    pub width: usize,
    pub rhos: Vec<T>,
    pub fraction_above: T,
    pub ci_low: T,
    pub ci_high: T,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult<T: Real> {
    pub rows: Vec<SweepRow<T>>,
    /// Mann–Kendall trend of the per-trial densities against width.
    pub trend: TrendTest,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepConfig<T: Real> {
    pub widths: Vec<usize>,
    pub trials_per_width: usize,
    pub delta: T,
    /// A trial counts when its estimated density reaches this threshold.
    pub threshold: T,
    pub domain: Domain<T>,
    pub samples_per_net: u64,
    pub weight_scale: T,
    pub seed: u64,
    pub confidence: T,
}

impl<T: Real> SweepConfig<T> {
    pub fn new(widths: Vec<usize>, trials_per_width: usize, delta: T, threshold: T, domain: Domain<T>) -> Self {
        SweepConfig {
            widths,
            trials_per_width,
            delta,
            threshold,
            domain,
            samples_per_net: 2000,
            weight_scale: T::one(),
            seed: 0,
            confidence: T::of(0.99),
        }
    }
}

/// Sweep random depth-1 relu networks over a width grid: per width, the
/// fraction of trials whose kink density reaches the threshold, plus a
/// pooled Mann–Kendall trend test of density against width.
pub fn genericity_sweep<T: Real>(cfg: &SweepConfig<T>) -> Result<SweepResult<T>, DensityError> {
    {
        let mut distinct = cfg.widths.clone();
        distinct.sort_unstable();
        distinct.dedup();
        if distinct.len() < 2 {
            return Err(DensityError::DegenerateGrid);
        }
    }
    if cfg.trials_per_width < 30 {
        return Err(DensityError::TooFewTrials);
    }
    validate_common(cfg.delta, cfg.samples_per_net, cfg.confidence)?;

    use crate::net::{random_network, ActivationKind, NetSpec};
    let d = cfg.domain.dim();
    let opts = McOptions {
        confidence: cfg.confidence,
        ..McOptions::default()
    };
    let mut rows = Vec::with_capacity(cfg.widths.len());
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for (wi, &width) in cfg.widths.iter().enumerate() {
        let mut rhos = Vec::with_capacity(cfg.trials_per_width);
        let mut above = 0u64;
        for trial in 0..cfg.trials_per_width {
            let net_seed = rng::derive_indexed(
                rng::derive_labeled(cfg.seed, "sweep_net"),
                (wi * cfg.trials_per_width + trial) as u64,
            );
            let spec = if width == 0 {
                NetSpec {
                    input_dim: d,
                    layers: vec![(1, ActivationKind::Linear)],
                }
            } else {
                NetSpec::depth1(d, width, 1, ActivationKind::Relu)
            };
            let net = random_network(&spec, cfg.weight_scale, net_seed);
            let est = estimate_kink_density(
                &net,
                &cfg.domain,
                cfg.delta,
                cfg.samples_per_net,
                rng::derive_indexed(net_seed, 1),
                &opts,
            )?;
            if est.rho >= cfg.threshold {
                above += 1;
            }
            xs.push(T::of(width as f64));
            ys.push(est.rho);
            rhos.push(est.rho);
        }
        let (lo, hi) =
            stats::wilson_interval(above, cfg.trials_per_width as u64, cfg.confidence);
        rows.push(SweepRow {
            width,
            fraction_above: T::of(above as f64 / cfg.trials_per_width as f64),
            ci_low: lo,
            ci_high: hi,
            rhos,
        });
    }
    let trend = stats::mann_kendall(&xs, &ys);
    Ok(SweepResult { rows, trend })
}
