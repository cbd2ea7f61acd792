//! Feedforward networks with piecewise-linear and smooth activations.
//!
//! The geometry modules only ever need three things from a network: its
//! value, its activation pattern (which linear piece each unit is on), and
//! its derivatives. All three are computed here by plain dense forward and
//! backward passes.
//!
//! Conventions that the rest of the crate relies on:
//!
//! - parameters flatten layer-major: for each layer, weight rows in order,
//!   then the bias row (`flatten_params` / `param_count`);
//! - at an activation breakpoint the right-hand branch is used, and the
//!   evaluation reports how many units sat within `KINK_TOL` (relative) of
//!   a breakpoint;
//! - `neuron_count` counts units in layers with a non-linear activation;
//!   a purely affine network has `neuron_count() == 0`.

use std::fmt::Write as _;

use ndarray::{Array1, Array2};
use thiserror::Error;

use crate::rng;
use crate::scalar::Real;

/// Relative half-width of the "too close to a kink" detection band.
pub const KINK_TOL: f64 = 1e-12;

#[derive(Debug, Error, PartialEq)]
pub enum NetError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("activation pattern undefined: layer {layer} has a smooth activation")]
    SmoothActivation { layer: usize },
    #[error("invalid activation: {0}")]
    InvalidActivation(String),
    #[error("network must have at least one layer")]
    Empty,
    #[error("layer {layer}: input width {got} does not match previous output {expected}")]
    LayerChain { layer: usize, expected: usize, got: usize },
    #[error("loss/target mismatch: {0}")]
    LossMismatch(&'static str),
    #[error("class index {got} out of range for {classes} outputs")]
    ClassOutOfRange { got: usize, classes: usize },
}

/// Unit activation function.
#[derive(Debug, Clone, PartialEq)]
pub enum ActivationKind<T: Real> {
    Linear,
    Relu,
    LeakyRelu(T),
    /// Continuous piecewise-linear function anchored at `f(0) = 0`, with
    /// `slopes[k]` on the k-th segment of the partition induced by the
    /// strictly increasing `breakpoints`.
    HardPiecewise {
        breakpoints: Vec<T>,
        slopes: Vec<T>,
    },
    Tanh,
    Sigmoid,
}

impl<T: Real> ActivationKind<T> {
    pub fn hard_piecewise(breakpoints: Vec<T>, slopes: Vec<T>) -> Result<Self, NetError> {
        let a = ActivationKind::HardPiecewise { breakpoints, slopes };
        a.validate()?;
        Ok(a)
    }

    pub fn validate(&self) -> Result<(), NetError> {
        if let ActivationKind::HardPiecewise { breakpoints, slopes } = self {
            if breakpoints.is_empty() {
                return Err(NetError::InvalidActivation(
                    "hard_piecewise needs at least one breakpoint".into(),
                ));
            }
            if slopes.len() != breakpoints.len() + 1 {
                return Err(NetError::InvalidActivation(format!(
                    "hard_piecewise needs {} slopes for {} breakpoints",
                    breakpoints.len() + 1,
                    breakpoints.len()
                )));
            }
            for w in breakpoints.windows(2) {
                if !(w[0] < w[1]) {
                    return Err(NetError::InvalidActivation(
                        "breakpoints must be strictly increasing".into(),
                    ));
                }
            }
            if breakpoints.iter().chain(slopes.iter()).any(|v| !v.is_finite()) {
                return Err(NetError::NonFinite("activation parameters"));
            }
        }
        if let ActivationKind::LeakyRelu(s) = self {
            if !s.is_finite() {
                return Err(NetError::NonFinite("leaky_relu slope"));
            }
        }
        Ok(())
    }

    /// Number of linear pieces; `None` for smooth activations.
    pub fn pieces(&self) -> Option<usize> {
        match self {
            ActivationKind::Linear => Some(1),
            ActivationKind::Relu | ActivationKind::LeakyRelu(_) => Some(2),
            ActivationKind::HardPiecewise { slopes, .. } => Some(slopes.len()),
            ActivationKind::Tanh | ActivationKind::Sigmoid => None,
        }
    }

    pub fn is_piecewise_linear(&self) -> bool {
        self.pieces().is_some()
    }

    /// Kink locations in pre-activation space.
    pub fn breakpoints(&self) -> Vec<T> {
        match self {
            ActivationKind::Linear | ActivationKind::Tanh | ActivationKind::Sigmoid => vec![],
            ActivationKind::Relu | ActivationKind::LeakyRelu(_) => vec![T::zero()],
            ActivationKind::HardPiecewise { breakpoints, .. } => breakpoints.clone(),
        }
    }

    /// Branch index at pre-activation `z`: the number of breakpoints `<= z`,
    /// so a point exactly on a breakpoint belongs to the right-hand piece.
    pub fn branch(&self, z: T) -> u32 {
        match self {
            ActivationKind::Linear | ActivationKind::Tanh | ActivationKind::Sigmoid => 0,
            ActivationKind::Relu | ActivationKind::LeakyRelu(_) => {
                u32::from(z >= T::zero())
            }
            ActivationKind::HardPiecewise { breakpoints, .. } => {
                breakpoints.iter().filter(|&&b| z >= b).count() as u32
            }
        }
    }

    pub fn value(&self, z: T) -> T {
        match self {
            ActivationKind::Linear => z,
            ActivationKind::Relu => z.max(T::zero()),
            ActivationKind::LeakyRelu(s) => {
                if z >= T::zero() {
                    z
                } else {
                    *s * z
                }
            }
            ActivationKind::HardPiecewise { breakpoints, slopes } => {
                // Integrate the slope field from the anchor f(0) = 0.
                let (lo, hi, sgn) = if z >= T::zero() {
                    (T::zero(), z, T::one())
                } else {
                    (z, T::zero(), -T::one())
                };
                let mut acc = T::zero();
                let m = slopes.len();
                for (k, &s) in slopes.iter().enumerate() {
                    let seg_lo = if k == 0 { T::neg_infinity() } else { breakpoints[k - 1] };
                    let seg_hi = if k == m - 1 { T::infinity() } else { breakpoints[k] };
                    let len = (hi.min(seg_hi) - lo.max(seg_lo)).max(T::zero());
                    acc += s * len;
                }
                sgn * acc
            }
            ActivationKind::Tanh => z.tanh(),
            ActivationKind::Sigmoid => T::one() / (T::one() + (-z).exp()),
        }
    }

    /// Derivative at `z` (right-hand branch on kinks).
    pub fn derivative(&self, z: T) -> T {
        match self {
            ActivationKind::Linear => T::one(),
            ActivationKind::Relu => {
                if z >= T::zero() {
                    T::one()
                } else {
                    T::zero()
                }
            }
            ActivationKind::LeakyRelu(s) => {
                if z >= T::zero() {
                    T::one()
                } else {
                    *s
                }
            }
            ActivationKind::HardPiecewise { slopes, .. } => slopes[self.branch(z) as usize],
            ActivationKind::Tanh => {
                let t = z.tanh();
                T::one() - t * t
            }
            ActivationKind::Sigmoid => {
                let s = T::one() / (T::one() + (-z).exp());
                s * (T::one() - s)
            }
        }
    }

    /// True when `z` lies within `KINK_TOL` (relative) of a breakpoint.
    pub fn near_kink(&self, z: T) -> bool {
        let tol = T::of(KINK_TOL);
        self.breakpoints().iter().any(|&b| {
            let scale = T::one().max(z.abs()).max(b.abs());
            (z - b).abs() <= tol * scale
        })
    }
}

/// One dense layer: `a = act(W x + b)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer<T: Real> {
    pub weights: Array2<T>,
    pub bias: Array1<T>,
    pub activation: ActivationKind<T>,
}

impl<T: Real> Layer<T> {
    pub fn out_dim(&self) -> usize {
        self.weights.nrows()
    }

    pub fn in_dim(&self) -> usize {
        self.weights.ncols()
    }
}

/// Closed ball input domain.
#[derive(Debug, Clone, PartialEq)]
pub struct Domain<T: Real> {
    pub center: Vec<T>,
    pub radius: T,
}

impl<T: Real> Domain<T> {
    pub fn ball(center: Vec<T>, radius: T) -> Self {
        assert!(radius > T::zero(), "domain radius must be positive");
        assert!(center.iter().all(|c| c.is_finite()), "domain center must be finite");
        Domain { center, radius }
    }

    /// Unit-radius ball centered at the origin.
    pub fn unit(dim: usize) -> Self {
        Domain::ball(vec![T::zero(); dim], T::one())
    }

    pub fn dim(&self) -> usize {
        self.center.len()
    }

    pub fn contains(&self, x: &[T]) -> bool {
        let mut d2 = T::zero();
        for (xi, ci) in x.iter().zip(&self.center) {
            let d = *xi - *ci;
            d2 += d * d;
        }
        d2.sqrt() <= self.radius
    }
}

/// Activation pattern: per layer, the branch index of every unit. Two
/// inputs share a pattern exactly when they lie in the same linear region.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ActivationPattern(pub Vec<Vec<u32>>);

/// Input-space Jacobian together with a count of units that were evaluated
/// on top of a kink (one-sided derivative taken).
#[derive(Debug, Clone)]
pub struct Jacobian<T: Real> {
    /// `out_dim x in_dim`.
    pub matrix: Array2<T>,
    pub kink_hits: usize,
}

/// Training losses, applied to the raw network outputs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Loss {
    /// Sum of squared errors, no averaging: `L = sum_j (y_j - t_j)^2`.
    Mse,
    /// Cross-entropy of the softmax of the outputs against a class index.
    SoftmaxXent,
}

/// Training target matching the loss.
#[derive(Debug, Clone, PartialEq)]
pub enum Target<T: Real> {
    Vector(Vec<T>),
    Class(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Network<T: Real = f64> {
    layers: Vec<Layer<T>>,
}

impl<T: Real> Network<T> {
    pub fn new(layers: Vec<Layer<T>>) -> Result<Self, NetError> {
        if layers.is_empty() {
            return Err(NetError::Empty);
        }
        for (i, layer) in layers.iter().enumerate() {
            layer.activation.validate()?;
            if layer.bias.len() != layer.out_dim() {
                return Err(NetError::DimensionMismatch {
                    expected: layer.out_dim(),
                    got: layer.bias.len(),
                });
            }
            if i > 0 && layer.in_dim() != layers[i - 1].out_dim() {
                return Err(NetError::LayerChain {
                    layer: i,
                    expected: layers[i - 1].out_dim(),
                    got: layer.in_dim(),
                });
            }
            if layer.weights.iter().any(|w| !w.is_finite())
                || layer.bias.iter().any(|b| !b.is_finite())
            {
                return Err(NetError::NonFinite("layer parameters"));
            }
        }
        Ok(Network { layers })
    }

    pub fn layers(&self) -> &[Layer<T>] {
        &self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].in_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().unwrap().out_dim()
    }

    pub fn depth(&self) -> usize {
        self.layers.len()
    }

    /// Total parameter count `C` (weights plus biases of every layer).
    pub fn param_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.out_dim() * l.in_dim() + l.out_dim())
            .sum()
    }

    /// Total units in layers with a non-linear activation.
    pub fn neuron_count(&self) -> usize {
        self.layers
            .iter()
            .filter(|l| l.activation != ActivationKind::Linear)
            .map(|l| l.out_dim())
            .sum()
    }

    pub fn is_piecewise_linear(&self) -> bool {
        self.layers.iter().all(|l| l.activation.is_piecewise_linear())
    }

    /// True when only the first layer can produce kinks: first layer
    /// piecewise-linear, every later layer affine.
    pub fn is_depth1_piecewise(&self) -> bool {
        self.layers[0].activation.is_piecewise_linear()
            && self.layers[1..]
                .iter()
                .all(|l| l.activation == ActivationKind::Linear)
    }

    fn check_input(&self, x: &[T]) -> Result<(), NetError> {
        if x.len() != self.input_dim() {
            return Err(NetError::DimensionMismatch {
                expected: self.input_dim(),
                got: x.len(),
            });
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(NetError::NonFinite("input"));
        }
        Ok(())
    }

    /// Raw network outputs (no softmax).
    pub fn forward(&self, x: &[T]) -> Result<Vec<T>, NetError> {
        self.check_input(x)?;
        let mut a = Array1::from(x.to_vec());
        for layer in &self.layers {
            let z = layer.weights.dot(&a) + &layer.bias;
            a = z.mapv(|v| layer.activation.value(v));
        }
        Ok(a.to_vec())
    }

    /// Outputs plus the branch vector of every unit. Rejects networks with
    /// smooth activations, whose pattern is undefined.
    pub fn forward_with_pattern(
        &self,
        x: &[T],
    ) -> Result<(Vec<T>, ActivationPattern), NetError> {
        self.check_input(x)?;
        for (i, layer) in self.layers.iter().enumerate() {
            if !layer.activation.is_piecewise_linear() {
                return Err(NetError::SmoothActivation { layer: i });
            }
        }
        let mut a = Array1::from(x.to_vec());
        let mut pattern = Vec::with_capacity(self.layers.len());
        for layer in &self.layers {
            let z = layer.weights.dot(&a) + &layer.bias;
            pattern.push(z.iter().map(|&v| layer.activation.branch(v)).collect());
            a = z.mapv(|v| layer.activation.value(v));
        }
        Ok((a.to_vec(), ActivationPattern(pattern)))
    }

    /// Jacobian of the outputs with respect to the input, by the chain rule
    /// over layers. Kinks take the right-hand branch and are counted.
    pub fn jacobian_input(&self, x: &[T]) -> Result<Jacobian<T>, NetError> {
        self.check_input(x)?;
        let mut a = Array1::from(x.to_vec());
        // J starts as the identity on the input space.
        let mut j = Array2::eye(self.input_dim());
        let mut kink_hits = 0usize;
        for layer in &self.layers {
            let z = layer.weights.dot(&a) + &layer.bias;
            let wj = layer.weights.dot(&j);
            let mut dj = wj;
            for (r, &zr) in z.iter().enumerate() {
                if layer.activation.near_kink(zr) {
                    kink_hits += 1;
                }
                let d = layer.activation.derivative(zr);
                for c in 0..dj.ncols() {
                    dj[(r, c)] *= d;
                }
            }
            j = dj;
            a = z.mapv(|v| layer.activation.value(v));
        }
        Ok(Jacobian { matrix: j, kink_hits })
    }

    /// Loss value, flat parameter gradient (canonical order), input
    /// gradient, and kink-hit count, all from one backward pass.
    pub fn loss_backward(
        &self,
        x: &[T],
        target: &Target<T>,
        loss: Loss,
    ) -> Result<BackwardReport<T>, NetError> {
        self.check_input(x)?;
        // Forward, keeping pre-activations and activations per layer.
        let mut acts: Vec<Array1<T>> = Vec::with_capacity(self.layers.len() + 1);
        let mut pres: Vec<Array1<T>> = Vec::with_capacity(self.layers.len());
        acts.push(Array1::from(x.to_vec()));
        let mut kink_hits = 0usize;
        for layer in &self.layers {
            let z = layer.weights.dot(acts.last().unwrap()) + &layer.bias;
            for &zr in z.iter() {
                if layer.activation.near_kink(zr) {
                    kink_hits += 1;
                }
            }
            acts.push(z.mapv(|v| layer.activation.value(v)));
            pres.push(z);
        }
        let y = acts.last().unwrap();

        let (loss_value, mut dy) = match (loss, target) {
            (Loss::Mse, Target::Vector(t)) => {
                if t.len() != y.len() {
                    return Err(NetError::DimensionMismatch {
                        expected: y.len(),
                        got: t.len(),
                    });
                }
                let mut l = T::zero();
                let mut d = Array1::zeros(y.len());
                for (i, (&yi, &ti)) in y.iter().zip(t.iter()).enumerate() {
                    let e = yi - ti;
                    l += e * e;
                    d[i] = T::of(2.0) * e;
                }
                (l, d)
            }
            (Loss::SoftmaxXent, Target::Class(c)) => {
                if *c >= y.len() {
                    return Err(NetError::ClassOutOfRange {
                        got: *c,
                        classes: y.len(),
                    });
                }
                // Stable softmax.
                let m = y.iter().cloned().fold(T::neg_infinity(), T::max);
                let exps: Array1<T> = y.mapv(|v| (v - m).exp());
                let sum: T = exps.iter().cloned().sum();
                let mut d = exps.mapv(|e| e / sum);
                let l = -(d[*c].ln());
                d[*c] -= T::one();
                (l, d)
            }
            (Loss::Mse, Target::Class(_)) => {
                return Err(NetError::LossMismatch("mse needs a vector target"))
            }
            (Loss::SoftmaxXent, Target::Vector(_)) => {
                return Err(NetError::LossMismatch(
                    "softmax cross-entropy needs a class target",
                ))
            }
        };

        // Backward pass; gradient blocks collected layer-major.
        let mut grad_blocks: Vec<(Array2<T>, Array1<T>)> = Vec::with_capacity(self.layers.len());
        for (l, layer) in self.layers.iter().enumerate().rev() {
            let mut delta = dy;
            for (r, &zr) in pres[l].iter().enumerate() {
                delta[r] *= layer.activation.derivative(zr);
            }
            let a_prev = &acts[l];
            let mut dw = Array2::zeros((layer.out_dim(), layer.in_dim()));
            for r in 0..layer.out_dim() {
                for c in 0..layer.in_dim() {
                    dw[(r, c)] = delta[r] * a_prev[c];
                }
            }
            dy = layer.weights.t().dot(&delta);
            grad_blocks.push((dw, delta));
        }
        grad_blocks.reverse();

        let mut grad = Vec::with_capacity(self.param_count());
        for (dw, db) in &grad_blocks {
            grad.extend(dw.iter().cloned());
            grad.extend(db.iter().cloned());
        }
        Ok(BackwardReport {
            loss: loss_value,
            grad,
            input_grad: dy.to_vec(),
            kink_hits,
        })
    }

    /// Flat parameter gradient of the loss at `x` (canonical layer-major
    /// order: weight rows, then bias, per layer).
    pub fn gradient_params(
        &self,
        x: &[T],
        target: &Target<T>,
        loss: Loss,
    ) -> Result<Vec<T>, NetError> {
        Ok(self.loss_backward(x, target, loss)?.grad)
    }

    /// Gradient of the loss with respect to the input.
    pub fn input_gradient(
        &self,
        x: &[T],
        target: &Target<T>,
        loss: Loss,
    ) -> Result<Vec<T>, NetError> {
        Ok(self.loss_backward(x, target, loss)?.input_grad)
    }

    /// Flatten parameters in the canonical order.
    pub fn flatten_params(&self) -> Vec<T> {
        let mut out = Vec::with_capacity(self.param_count());
        for layer in &self.layers {
            out.extend(layer.weights.iter().cloned());
            out.extend(layer.bias.iter().cloned());
        }
        out
    }

    /// Inverse of [`flatten_params`]: write a flat vector back into the
    /// network's parameter slots.
    pub fn set_params(&mut self, flat: &[T]) -> Result<(), NetError> {
        if flat.len() != self.param_count() {
            return Err(NetError::DimensionMismatch {
                expected: self.param_count(),
                got: flat.len(),
            });
        }
        let mut k = 0usize;
        for layer in &mut self.layers {
            for r in 0..layer.weights.nrows() {
                for c in 0..layer.weights.ncols() {
                    layer.weights[(r, c)] = flat[k];
                    k += 1;
                }
            }
            for r in 0..layer.bias.len() {
                layer.bias[r] = flat[k];
                k += 1;
            }
        }
        Ok(())
    }

    /// Predicted class: argmax of the raw outputs, lowest index on ties.
    pub fn predict_class(&self, x: &[T]) -> Result<usize, NetError> {
        let y = self.forward(x)?;
        let mut best = 0usize;
        for (i, &v) in y.iter().enumerate() {
            if v > y[best] {
                best = i;
            }
        }
        Ok(best)
    }
}

/// Everything one backward pass produces.
#[derive(Debug, Clone)]
pub struct BackwardReport<T: Real> {
    pub loss: T,
    pub grad: Vec<T>,
    pub input_grad: Vec<T>,
    pub kink_hits: usize,
}

/// Architecture description for random construction.
#[derive(Debug, Clone, PartialEq)]
pub struct NetSpec<T: Real> {
    pub input_dim: usize,
    /// `(width, activation)` per layer.
    pub layers: Vec<(usize, ActivationKind<T>)>,
}

impl<T: Real> NetSpec<T> {
    /// Standard MLP: `dims = [in, h1, ..., out]`, the given activation on
    /// every hidden layer, affine output layer.
    pub fn mlp(dims: &[usize], hidden: ActivationKind<T>) -> Self {
        assert!(dims.len() >= 2, "mlp needs at least input and output dims");
        let mut layers = Vec::new();
        for (i, &w) in dims[1..].iter().enumerate() {
            let act = if i + 2 == dims.len() {
                ActivationKind::Linear
            } else {
                hidden.clone()
            };
            layers.push((w, act));
        }
        NetSpec { input_dim: dims[0], layers }
    }

    /// Depth-1 piecewise net: one hidden layer, affine read-out.
    pub fn depth1(input_dim: usize, width: usize, out: usize, act: ActivationKind<T>) -> Self {
        NetSpec {
            input_dim,
            layers: vec![(width, act), (out, ActivationKind::Linear)],
        }
    }
}

/// Seeded random network. Weights are i.i.d. Gaussian with standard
/// deviation `weight_scale / sqrt(fan_in)`; biases are uniform on
/// `[-weight_scale, weight_scale]`. Draw order is fixed (layer by layer,
/// weights row-major, then biases), so a seed pins every parameter bit.
pub fn random_network<T: Real>(spec: &NetSpec<T>, weight_scale: T, seed: u64) -> Network<T> {
    assert!(weight_scale > T::zero(), "weight_scale must be positive");
    let mut r = rng::stream(seed, "random_network");
    let mut layers = Vec::with_capacity(spec.layers.len());
    let mut fan_in = spec.input_dim;
    for (width, act) in &spec.layers {
        let std = weight_scale / T::of(fan_in as f64).sqrt();
        let mut w = Array2::zeros((*width, fan_in));
        for r_i in 0..*width {
            for c_i in 0..fan_in {
                w[(r_i, c_i)] = T::standard_normal(&mut r) * std;
            }
        }
        let mut b = Array1::zeros(*width);
        for r_i in 0..*width {
            let u = T::uniform_01(&mut r);
            b[r_i] = (u + u - T::one()) * weight_scale;
        }
        layers.push(Layer {
            weights: w,
            bias: b,
            activation: act.clone(),
        });
        fan_in = *width;
    }
    Network::new(layers).expect("random spec is structurally valid")
}

// ---------------------------------------------------------------------------
// NETV1 text format.
//
//   NETV1 d=<input_dim>
//   LAYER out=<rows> in=<cols> act=<name[:params]>
//   <rows weight lines, space-separated decimals>
//   <one bias line>
//
// Decimal formatting round-trips exactly (shortest representation that
// parses back to the same bits).
// ---------------------------------------------------------------------------

#[derive(Debug, Error, PartialEq)]
#[error("parse error at line {line}: {msg}")]
pub struct ParseError {
    pub line: usize,
    pub msg: String,
}

fn act_name<T: Real>(a: &ActivationKind<T>) -> String {
    match a {
        ActivationKind::Linear => "linear".into(),
        ActivationKind::Relu => "relu".into(),
        ActivationKind::LeakyRelu(s) => format!("leaky_relu:{s}"),
        ActivationKind::HardPiecewise { breakpoints, slopes } => {
            let b: Vec<String> = breakpoints.iter().map(|v| format!("{v}")).collect();
            let s: Vec<String> = slopes.iter().map(|v| format!("{v}")).collect();
            format!("hard_piecewise:{};{}", b.join(","), s.join(","))
        }
        ActivationKind::Tanh => "tanh".into(),
        ActivationKind::Sigmoid => "sigmoid".into(),
    }
}

fn parse_act<T: Real>(s: &str, line: usize) -> Result<ActivationKind<T>, ParseError> {
    let err = |msg: String| ParseError { line, msg };
    let (name, params) = match s.split_once(':') {
        Some((n, p)) => (n, Some(p)),
        None => (s, None),
    };
    let parse_num = |tok: &str| -> Result<T, ParseError> {
        tok.parse::<T>()
            .map_err(|_| err(format!("bad number '{tok}' in activation params")))
    };
    match (name, params) {
        ("linear", None) => Ok(ActivationKind::Linear),
        ("relu", None) => Ok(ActivationKind::Relu),
        ("tanh", None) => Ok(ActivationKind::Tanh),
        ("sigmoid", None) => Ok(ActivationKind::Sigmoid),
        ("leaky_relu", Some(p)) => Ok(ActivationKind::LeakyRelu(parse_num(p)?)),
        ("hard_piecewise", Some(p)) => {
            let (b, s) = p
                .split_once(';')
                .ok_or_else(|| err("hard_piecewise params need 'breaks;slopes'".into()))?;
            let breakpoints = b
                .split(',')
                .map(parse_num)
                .collect::<Result<Vec<_>, _>>()?;
            let slopes = s
                .split(',')
                .map(parse_num)
                .collect::<Result<Vec<_>, _>>()?;
            ActivationKind::hard_piecewise(breakpoints, slopes)
                .map_err(|e| err(e.to_string()))
        }
        _ => Err(err(format!("unknown activation '{s}'"))),
    }
}

/// Serialize to the NETV1 text format.
pub fn to_netv1<T: Real>(net: &Network<T>) -> String {
    let mut out = String::new();
    writeln!(out, "NETV1 d={}", net.input_dim()).unwrap();
    for layer in net.layers() {
        writeln!(
            out,
            "LAYER out={} in={} act={}",
            layer.out_dim(),
            layer.in_dim(),
            act_name(&layer.activation)
        )
        .unwrap();
        for r in 0..layer.out_dim() {
            let row: Vec<String> = (0..layer.in_dim())
                .map(|c| format!("{}", layer.weights[(r, c)]))
                .collect();
            writeln!(out, "{}", row.join(" ")).unwrap();
        }
        let bias: Vec<String> = layer.bias.iter().map(|v| format!("{v}")).collect();
        writeln!(out, "{}", bias.join(" ")).unwrap();
    }
    out
}

/// Parse the NETV1 text format. A truncated or malformed file yields an
/// error naming the offending line; no partial network is returned.
pub fn from_netv1<T: Real>(text: &str) -> Result<Network<T>, ParseError> {
    let mut lines = text.lines().enumerate().peekable();
    let err = |line: usize, msg: String| ParseError { line: line + 1, msg };

    let (hl, header) = lines
        .next()
        .ok_or_else(|| err(0, "empty input".into()))?;
    let d: usize = header
        .strip_prefix("NETV1 d=")
        .and_then(|v| v.trim().parse().ok())
        .ok_or_else(|| err(hl, "expected 'NETV1 d=<int>' header".into()))?;

    let mut layers: Vec<Layer<T>> = Vec::new();
    let mut expect_in = d;
    while let Some((ll, line)) = lines.next() {
        if line.trim().is_empty() {
            continue;
        }
        let rest = line
            .strip_prefix("LAYER ")
            .ok_or_else(|| err(ll, format!("expected LAYER line, got '{line}'")))?;
        let mut out_dim = None;
        let mut in_dim = None;
        let mut act = None;
        for tok in rest.split_whitespace() {
            let (k, v) = tok
                .split_once('=')
                .ok_or_else(|| err(ll, format!("bad LAYER field '{tok}'")))?;
            match k {
                "out" => {
                    out_dim = Some(v.parse::<usize>().map_err(|_| {
                        err(ll, format!("bad out dimension '{v}'"))
                    })?)
                }
                "in" => {
                    in_dim = Some(v.parse::<usize>().map_err(|_| {
                        err(ll, format!("bad in dimension '{v}'"))
                    })?)
                }
                "act" => act = Some(parse_act::<T>(v, ll + 1)?),
                _ => return Err(err(ll, format!("unknown LAYER field '{k}'"))),
            }
        }
        let (out_dim, in_dim, act) = match (out_dim, in_dim, act) {
            (Some(o), Some(i), Some(a)) => (o, i, a),
            _ => return Err(err(ll, "LAYER needs out=, in=, act=".into())),
        };
        if out_dim == 0 || in_dim == 0 {
            return Err(err(ll, "layer dimensions must be positive".into()));
        }
        if in_dim != expect_in {
            return Err(err(
                ll,
                format!("layer input {in_dim} does not chain from previous width {expect_in}"),
            ));
        }

        let mut w = Array2::zeros((out_dim, in_dim));
        for r in 0..out_dim {
            let (rl, row) = lines
                .next()
                .ok_or_else(|| err(ll, format!("truncated: missing weight row {r}")))?;
            let vals: Vec<&str> = row.split_whitespace().collect();
            if vals.len() != in_dim {
                return Err(err(
                    rl,
                    format!("expected {in_dim} weights, got {}", vals.len()),
                ));
            }
            for (c, tok) in vals.iter().enumerate() {
                w[(r, c)] = tok
                    .parse::<T>()
                    .map_err(|_| err(rl, format!("bad weight '{tok}'")))?;
            }
        }
        let (bl, brow) = lines
            .next()
            .ok_or_else(|| err(ll, "truncated: missing bias row".into()))?;
        let bvals: Vec<&str> = brow.split_whitespace().collect();
        if bvals.len() != out_dim {
            return Err(err(
                bl,
                format!("expected {out_dim} biases, got {}", bvals.len()),
            ));
        }
        let mut b = Array1::zeros(out_dim);
        for (r, tok) in bvals.iter().enumerate() {
            b[r] = tok
                .parse::<T>()
                .map_err(|_| err(bl, format!("bad bias '{tok}'")))?;
        }
        layers.push(Layer {
            weights: w,
            bias: b,
            activation: act,
        });
        expect_in = out_dim;
    }
    Network::new(layers).map_err(|e| ParseError {
        line: 0,
        msg: e.to_string(),
    })
}
