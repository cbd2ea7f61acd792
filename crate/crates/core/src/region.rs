//! Exact geometry of activation boundaries.
//!
//! For a depth-1 piecewise-linear network (one piecewise layer, affine
//! read-out) every kink of the input-output map lies on a first-layer
//! hyperplane `w.x + b = t`, one per (unit, breakpoint) pair. That makes
//! three exact computations possible and cheap in low dimension:
//!
//! - point-to-boundary distances (plain point/plane distances),
//! - region counts over an interval (d=1) or a disk (d=2, incremental
//!   line-arrangement insertion),
//! - the area of a `delta`-strip around a line intersected with a disk
//!   (closed form via circular segments).
//!
//! Deeper networks have curved (piecewise) boundaries for which only the
//! sampled lower bounds and direction-probe distances are available.

use std::collections::BTreeSet;

use thiserror::Error;

use crate::density::sample_in_ball;
use crate::net::{ActivationPattern, Domain, NetError, Network};
use crate::rng;
use crate::scalar::Real;

/// Merge tolerance for degenerate arrangements (coincident lines, repeated
/// intersection points). Ties are broken deterministically by insertion
/// index, so a fixed input always yields the same census.
pub const DEGENERACY_TOL: f64 = 1e-12;

#[derive(Debug, Error, PartialEq)]
pub enum RegionError {
    #[error("operation needs a piecewise-linear network")]
    NotPiecewiseLinear,
    #[error("operation needs a depth-1 piecewise network (one piecewise layer, affine read-out)")]
    NotDepth1,
    #[error("exact census implemented for d <= 2, got d = {0}")]
    DimensionTooHigh(usize),
    #[error("grid resolution {resolution} exceeds delta/10 = {max}")]
    ResolutionTooCoarse { resolution: f64, max: f64 },
    #[error("{0} must be positive")]
    NotPositive(&'static str),
    #[error(transparent)]
    Net(#[from] NetError),
    #[error("domain dimension {domain} does not match network input {net}")]
    DomainMismatch { domain: usize, net: usize },
}

/// Affine hyperplane `{x : normal.x + offset = 0}` with `|normal| > 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct Hyperplane<T: Real> {
    pub normal: Vec<T>,
    pub offset: T,
}

impl<T: Real> Hyperplane<T> {
    pub fn new(normal: Vec<T>, offset: T) -> Self {
        let h = Hyperplane { normal, offset };
        assert!(h.norm() > T::zero(), "hyperplane normal must be nonzero");
        h
    }

    pub fn norm(&self) -> T {
        self.normal
            .iter()
            .map(|&v| v * v)
            .fold(T::zero(), |a, b| a + b)
            .sqrt()
    }

    /// Euclidean distance from `x` to the plane.
    pub fn distance(&self, x: &[T]) -> T {
        let mut dot = self.offset;
        for (n, v) in self.normal.iter().zip(x) {
            dot += *n * *v;
        }
        dot.abs() / self.norm()
    }
}

/// A first-layer kink plane: unit `unit` crosses its `breakpoint`-th kink on
/// this plane. `meets_domain` is false when the plane misses the domain ball
/// entirely (it then bounds no region inside the domain).
#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryPlane<T: Real> {
    pub plane: Hyperplane<T>,
    pub unit: usize,
    pub breakpoint: usize,
    pub meets_domain: bool,
}

/// All first-layer activation boundaries of `net` as hyperplanes. Units
/// with a zero weight row never change branch and contribute none.
pub fn first_layer_boundaries<T: Real>(
    net: &Network<T>,
    domain: &Domain<T>,
) -> Result<Vec<BoundaryPlane<T>>, RegionError> {
    let first = &net.layers()[0];
    if !first.activation.is_piecewise_linear() {
        return Err(RegionError::NotPiecewiseLinear);
    }
    if domain.dim() != net.input_dim() {
        return Err(RegionError::DomainMismatch {
            domain: domain.dim(),
            net: net.input_dim(),
        });
    }
    let breakpoints = first.activation.breakpoints();
    let mut out = Vec::new();
    for unit in 0..first.out_dim() {
        let w: Vec<T> = first.weights.row(unit).to_vec();
        let norm2: T = w.iter().map(|&v| v * v).fold(T::zero(), |a, b| a + b);
        if norm2 == T::zero() {
            continue;
        }
        for (k, &t) in breakpoints.iter().enumerate() {
            // w.x + b = t  <=>  w.x + (b - t) = 0
            let plane = Hyperplane::new(w.clone(), first.bias[unit] - t);
            let meets = plane.distance(&domain.center) <= domain.radius;
            out.push(BoundaryPlane {
                plane,
                unit,
                breakpoint: k,
                meets_domain: meets,
            });
        }
    }
    Ok(out)
}

/// Distance from `x` to the nearest activation boundary.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceResult<T: Real> {
    pub value: T,
    /// Exact point/plane computation (depth-1) versus directional probe.
    pub exact: bool,
    /// Probe directions used; 0 for the exact path.
    pub directions_used: usize,
}

/// Probe settings for deep networks.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProbeConfig {
    pub directions: usize,
    pub seed: u64,
    /// Bisection stops once the bracket is narrower than this.
    pub tol: f64,
    /// Give up on a ray beyond this radius.
    pub max_radius: f64,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        ProbeConfig {
            directions: 64,
            seed: 0,
            tol: 1e-10,
            max_radius: 1e6,
        }
    }
}

/// Distance from `x` to the nearest activation boundary of a
/// piecewise-linear network.
///
/// Depth-1 networks get the exact minimum over first-layer planes. Deeper
/// networks get an upper bound: along each of `probe.directions` random
/// rays, bisect to the nearest activation-pattern change and take the
/// minimum.
pub fn distance_to_boundary<T: Real>(
    net: &Network<T>,
    x: &[T],
    probe: &ProbeConfig,
) -> Result<DistanceResult<T>, RegionError> {
    if !net.is_piecewise_linear() {
        return Err(RegionError::NotPiecewiseLinear);
    }
    if net.is_depth1_piecewise() {
        return Ok(DistanceResult {
            value: exact_depth1_distance(net, x)?,
            exact: true,
            directions_used: 0,
        });
    }

    let (_, base) = net.forward_with_pattern(x)?;
    let mut r = rng::stream(probe.seed, "distance_probe");
    let d = x.len();
    let mut best = T::infinity();
    for _ in 0..probe.directions {
        // Uniform direction from a normalized Gaussian draw.
        let mut u = vec![T::zero(); d];
        loop {
            let mut n2 = T::zero();
            for ui in u.iter_mut() {
                *ui = T::standard_normal(&mut r);
                n2 += *ui * *ui;
            }
            let n = n2.sqrt();
            if n > T::zero() {
                for ui in u.iter_mut() {
                    *ui /= n;
                }
                break;
            }
        }
        if let Some(hit) = ray_first_change(net, x, &base, &u, probe) {
            best = best.min(hit);
        }
    }
    Ok(DistanceResult {
        value: best,
        exact: false,
        directions_used: probe.directions,
    })
}

fn exact_depth1_distance<T: Real>(net: &Network<T>, x: &[T]) -> Result<T, RegionError> {
    if x.len() != net.input_dim() {
        return Err(RegionError::Net(NetError::DimensionMismatch {
            expected: net.input_dim(),
            got: x.len(),
        }));
    }
    let first = &net.layers()[0];
    let breakpoints = first.activation.breakpoints();
    let mut best = T::infinity();
    for unit in 0..first.out_dim() {
        let row = first.weights.row(unit);
        let norm2: T = row.iter().map(|&v| v * v).fold(T::zero(), |a, b| a + b);
        if norm2 == T::zero() {
            continue;
        }
        let norm = norm2.sqrt();
        let mut z = first.bias[unit];
        for (w, v) in row.iter().zip(x) {
            z += *w * *v;
        }
        for &t in &breakpoints {
            best = best.min((z - t).abs() / norm);
        }
    }
    Ok(best)
}

/// First pattern change along the ray `x + s u`, `s in (0, max_radius]`.
fn ray_first_change<T: Real>(
    net: &Network<T>,
    x: &[T],
    base: &ActivationPattern,
    u: &[T],
    probe: &ProbeConfig,
) -> Option<T> {
    let at = |s: T| -> ActivationPattern {
        let p: Vec<T> = x.iter().zip(u).map(|(&xi, &ui)| xi + s * ui).collect();
        net.forward_with_pattern(&p).expect("pl net, finite point").1
    };
    // Geometric expansion to bracket the first change.
    let mut lo = T::zero();
    let mut hi = T::of(probe.tol.max(1e-6));
    let max_r = T::of(probe.max_radius);
    loop {
        if at(hi) != *base {
            break;
        }
        lo = hi;
        hi = hi * T::of(2.0);
        if hi > max_r {
            return None;
        }
    }
    // Bisect [lo, hi] with pattern(lo) == base != pattern(hi).
    let tol = T::of(probe.tol);
    while hi - lo > tol {
        let mid = (lo + hi) * T::of(0.5);
        if at(mid) == *base {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Some(hi)
}

/// How a region census was computed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CensusMethod {
    /// Exact combinatorial count (d <= 2, depth-1).
    ArrangementExact,
    /// Distinct activation patterns over n samples; a lower bound.
    PatternSamplingLowerBound,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegionCensus {
    pub region_count: u64,
    /// Realized patterns. Filled by the sampling method and by the 1D exact
    /// method; the 2D arrangement count is purely combinatorial.
    pub patterns: Vec<ActivationPattern>,
    pub method: CensusMethod,
}

/// Exact number of linear regions of a depth-1 piecewise network inside the
/// domain ball, for d <= 2.
///
/// d=1 subdivides the interval at unit kink points. d=2 inserts the kink
/// lines one at a time: a line crossing the disk adds one region plus one
/// for each distinct interior intersection with previously inserted lines.
/// Near-coincident geometry (within [`DEGENERACY_TOL`], relative to the
/// domain radius) is merged before counting.
pub fn region_count_exact<T: Real>(
    net: &Network<T>,
    domain: &Domain<T>,
) -> Result<RegionCensus, RegionError> {
    if !net.is_piecewise_linear() {
        return Err(RegionError::NotPiecewiseLinear);
    }
    if !net.is_depth1_piecewise() {
        return Err(RegionError::NotDepth1);
    }
    match domain.dim() {
        1 => region_count_1d(net, domain),
        2 => region_count_2d(net, domain),
        d => Err(RegionError::DimensionTooHigh(d)),
    }
}

fn region_count_1d<T: Real>(
    net: &Network<T>,
    domain: &Domain<T>,
) -> Result<RegionCensus, RegionError> {
    let planes = first_layer_boundaries(net, domain)?;
    let c = domain.center[0];
    let (lo, hi) = (c - domain.radius, c + domain.radius);
    let mut kinks: Vec<T> = planes
        .iter()
        .filter_map(|bp| {
            let w = bp.plane.normal[0];
            let x = -bp.plane.offset / w;
            (x > lo && x < hi).then_some(x)
        })
        .collect();
    kinks.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let eta = T::of(DEGENERACY_TOL) * T::one().max(domain.radius);
    kinks.dedup_by(|a, b| (*a - *b).abs() <= eta);

    // One representative point per interval gives the realized patterns.
    let mut cuts = vec![lo];
    cuts.extend(kinks.iter().cloned());
    cuts.push(hi);
    let mut patterns = Vec::new();
    for w in cuts.windows(2) {
        let mid = (w[0] + w[1]) * T::of(0.5);
        let (_, p) = net.forward_with_pattern(&[mid])?;
        patterns.push(p);
    }
    patterns.dedup();
    Ok(RegionCensus {
        region_count: patterns.len() as u64,
        patterns,
        method: CensusMethod::ArrangementExact,
    })
}

fn region_count_2d<T: Real>(
    net: &Network<T>,
    domain: &Domain<T>,
) -> Result<RegionCensus, RegionError> {
    let planes = first_layer_boundaries(net, domain)?;
    let eta = DEGENERACY_TOL * 1.0f64.max(domain.radius.to_f64().unwrap());
    let cx = domain.center[0].to_f64().unwrap();
    let cy = domain.center[1].to_f64().unwrap();
    let radius = domain.radius.to_f64().unwrap();

    // Canonical line form (unit normal, fixed sign) for dedup.
    #[derive(Clone)]
    struct Line {
        nx: f64,
        ny: f64,
        c: f64, // nx*x + ny*y + c = 0 with (nx, ny) unit
    }
    let mut lines: Vec<Line> = Vec::new();
    for bp in &planes {
        let nx = bp.plane.normal[0].to_f64().unwrap();
        let ny = bp.plane.normal[1].to_f64().unwrap();
        let n = (nx * nx + ny * ny).sqrt();
        let (mut nx, mut ny, mut c) = (nx / n, ny / n, bp.plane.offset.to_f64().unwrap() / n);
        // Sign convention: largest-magnitude component positive.
        let flip = if nx.abs() >= ny.abs() { nx < 0.0 } else { ny < 0.0 };
        if flip {
            nx = -nx;
            ny = -ny;
            c = -c;
        }
        let dup = lines.iter().any(|l| {
            (l.nx - nx).abs() <= eta && (l.ny - ny).abs() <= eta && (l.c - c).abs() <= eta
        });
        if !dup {
            lines.push(Line { nx, ny, c });
        }
    }

    let mut regions: u64 = 1;
    let mut inserted: Vec<Line> = Vec::new();
    for line in lines {
        let center_dist = (line.nx * cx + line.ny * cy + line.c).abs();
        if center_dist >= radius - eta {
            // Misses the open disk (or is tangent): cuts nothing.
            inserted.push(line);
            continue;
        }
        // Interior intersections with already-inserted lines, as arc-length
        // parameters along this line, deduplicated.
        let dir = (-line.ny, line.nx);
        let mut params: Vec<f64> = Vec::new();
        for prev in &inserted {
            let det = line.nx * prev.ny - line.ny * prev.nx;
            if det.abs() <= eta {
                continue; // parallel or coincident
            }
            let px = (-line.c * prev.ny + prev.c * line.ny) / det;
            let py = (-line.nx * prev.c + prev.nx * line.c) / det;
            let dx = px - cx;
            let dy = py - cy;
            if (dx * dx + dy * dy).sqrt() < radius - eta {
                params.push(px * dir.0 + py * dir.1);
            }
        }
        params.sort_by(|a, b| a.partial_cmp(b).unwrap());
        params.dedup_by(|a, b| (*a - *b).abs() <= eta);
        regions += 1 + params.len() as u64;
        inserted.push(line);
    }
    Ok(RegionCensus {
        region_count: regions,
        patterns: Vec::new(),
        method: CensusMethod::ArrangementExact,
    })
}

/// Distinct activation patterns over `n` uniform samples from the domain
/// ball: a lower bound on the region count for any piecewise-linear net.
pub fn region_count_sampled<T: Real>(
    net: &Network<T>,
    domain: &Domain<T>,
    n: u64,
    seed: u64,
) -> Result<RegionCensus, RegionError> {
    if !net.is_piecewise_linear() {
        return Err(RegionError::NotPiecewiseLinear);
    }
    if domain.dim() != net.input_dim() {
        return Err(RegionError::DomainMismatch {
            domain: domain.dim(),
            net: net.input_dim(),
        });
    }
    let mut r = rng::stream(seed, "region_sampling");
    let mut seen: BTreeSet<ActivationPattern> = BTreeSet::new();
    let mut x = vec![T::zero(); domain.dim()];
    for _ in 0..n {
        sample_in_ball(domain, &mut r, &mut x);
        let (_, p) = net.forward_with_pattern(&x)?;
        seen.insert(p);
    }
    Ok(RegionCensus {
        region_count: seen.len() as u64,
        patterns: seen.into_iter().collect(),
        method: CensusMethod::PatternSamplingLowerBound,
    })
}

/// Exact (up to grid error) kink density of a depth-1 piecewise network:
/// the fraction of a cell-centered grid over the domain ball whose points
/// lie within `delta` of some first-layer boundary plane.
///
/// `resolution` is the grid step and must not exceed `delta / 10`.
pub fn exact_kink_density<T: Real>(
    net: &Network<T>,
    domain: &Domain<T>,
    delta: T,
    resolution: T,
) -> Result<T, RegionError> {
    if delta <= T::zero() {
        return Err(RegionError::NotPositive("delta"));
    }
    if resolution <= T::zero() {
        return Err(RegionError::NotPositive("resolution"));
    }
    let max_step = delta / T::of(10.0);
    if resolution > max_step {
        return Err(RegionError::ResolutionTooCoarse {
            resolution: resolution.to_f64().unwrap(),
            max: max_step.to_f64().unwrap(),
        });
    }
    if !net.is_depth1_piecewise() {
        return Err(RegionError::NotDepth1);
    }
    let d = domain.dim();
    if d > 2 {
        return Err(RegionError::DimensionTooHigh(d));
    }
    let planes = first_layer_boundaries(net, domain)?;
    // Unit-normalized plane list in f64 for the hot loop.
    let unit_planes: Vec<(Vec<f64>, f64)> = planes
        .iter()
        .map(|bp| {
            let n: Vec<f64> = bp.plane.normal.iter().map(|v| v.to_f64().unwrap()).collect();
            let len = n.iter().map(|v| v * v).sum::<f64>().sqrt();
            (n.iter().map(|v| v / len).collect(), bp.plane.offset.to_f64().unwrap() / len)
        })
        .collect();

    let h = resolution.to_f64().unwrap();
    let r = domain.radius.to_f64().unwrap();
    let dl = delta.to_f64().unwrap();
    let steps = (2.0 * r / h).ceil() as usize;
    let mut inside: u64 = 0;
    let mut hit: u64 = 0;
    let near = |p: &[f64; 2], dim: usize| -> bool {
        for (n, c) in &unit_planes {
            let mut z = *c;
            for k in 0..dim {
                z += n[k] * p[k];
            }
            if z.abs() <= dl {
                return true;
            }
        }
        false
    };
    match d {
        1 => {
            let c0 = domain.center[0].to_f64().unwrap();
            for i in 0..steps {
                let x = c0 - r + (i as f64 + 0.5) * h;
                if (x - c0).abs() <= r {
                    inside += 1;
                    if near(&[x, 0.0], 1) {
                        hit += 1;
                    }
                }
            }
        }
        2 => {
            let c0 = domain.center[0].to_f64().unwrap();
            let c1 = domain.center[1].to_f64().unwrap();
            for i in 0..steps {
                let x = c0 - r + (i as f64 + 0.5) * h;
                let dx = x - c0;
                if dx.abs() > r {
                    continue;
                }
                // Only scan the chord of the disk at this x.
                let half = (r * r - dx * dx).sqrt();
                let j_lo = (((c1 - half) - (c1 - r)) / h - 0.5).ceil().max(0.0) as usize;
                for j in j_lo..steps {
                    let y = c1 - r + (j as f64 + 0.5) * h;
                    let dy = y - c1;
                    if dy > half {
                        break;
                    }
                    if dx * dx + dy * dy <= r * r {
                        inside += 1;
                        if near(&[x, y], 2) {
                            hit += 1;
                        }
                    }
                }
            }
        }
        _ => unreachable!(),
    }
    if inside == 0 {
        return Err(RegionError::NotPositive("grid point count"));
    }
    Ok(T::of(hit as f64 / inside as f64))
}

/// Area of the circular segment of a disk with radius `r` cut off by a line
/// at signed center distance `u` (full disk for `u <= -r`, empty for
/// `u >= r`).
fn segment_area(u: f64, r: f64) -> f64 {
    if u <= -r {
        std::f64::consts::PI * r * r
    } else if u >= r {
        0.0
    } else {
        r * r * (u / r).acos() - u * (r * r - u * u).sqrt()
    }
}

/// Exact area of `{x in disk(radius) : dist(x, line) <= delta}` where the
/// line passes at distance `center_distance >= 0` from the disk center.
///
/// Difference of two circular segments: the strip is the slab between the
/// chords at signed distances `t - delta` and `t + delta`.
pub fn strip_disk_area<T: Real>(delta: T, radius: T, center_distance: T) -> T {
    assert!(delta >= T::zero() && radius > T::zero());
    assert!(center_distance >= T::zero());
    let d = delta.to_f64().unwrap();
    let r = radius.to_f64().unwrap();
    let t = center_distance.to_f64().unwrap();
    T::of(segment_area(t - d, r) - segment_area(t + d, r))
}

/// [`strip_disk_area`] for an explicit plane and 2D domain.
pub fn strip_disk_area_plane<T: Real>(
    delta: T,
    domain: &Domain<T>,
    plane: &Hyperplane<T>,
) -> T {
    assert_eq!(domain.dim(), 2);
    strip_disk_area(delta, domain.radius, plane.distance(&domain.center))
}
