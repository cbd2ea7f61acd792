//! Toy datasets, a small SGD trainer, gradient-based attacks, and a
//! plug-in mutual-information estimate.
//!
//! This is the empirical side of the lab: everything here produces the
//! trained fixtures and measured quantities that the analytic modules are
//! compared against. All randomness is seed-derived and training is
//! strictly sequential, so fixtures are bit-reproducible.

use ndarray::Array2;
use rand::seq::SliceRandom;
use rayon::prelude::*;
use thiserror::Error;

use crate::density::{DensityEstimate, EstimateKind};
use crate::net::{ActivationKind, Loss, NetError, NetSpec, Network, Target};
use crate::rng;
use crate::scalar::Real;

#[derive(Debug, Error, PartialEq)]
pub enum LearnError {
    #[error("dataset must hold at least one sample")]
    EmptyDataset,
    #[error("{0} must be positive")]
    NotPositive(&'static str),
    #[error("class label {got} out of range for {classes} classes")]
    ClassOutOfRange { got: usize, classes: usize },
    #[error("dataset entries must be finite")]
    NonFinite,
    #[error("training diverged at epoch {epoch}")]
    Diverged { epoch: usize },
    #[error("expected class targets for this operation")]
    NeedsClasses,
    #[error("no correctly classified points to attack")]
    NoCorrectPoints,
    #[error("plug-in estimator supports at most 3 input dimensions, got {0}")]
    TooManyDims(usize),
    #[error("bins_per_dim must be at least 2")]
    TooFewBins,
    #[error("{cells} cells for {n} samples; need cells <= n/5")]
    TooManyCells { cells: usize, n: usize },
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error(transparent)]
    Net(#[from] NetError),
}

/// Supervised targets: class indices or regression vectors.
#[derive(Debug, Clone, PartialEq)]
pub enum Targets<T: Real> {
    Classes(Vec<usize>),
    Vectors(Array2<T>),
}

/// An in-memory dataset plus the recipe that generated it.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset<T: Real> {
    pub inputs: Array2<T>,
    pub targets: Targets<T>,
    /// Generator id with its parameters, e.g. `two_moons noise=1e-1`.
    pub generator: String,
    pub seed: u64,
}

impl<T: Real> Dataset<T> {
    pub fn from_classes(
        inputs: Array2<T>,
        classes: Vec<usize>,
        generator: String,
        seed: u64,
    ) -> Result<Self, LearnError> {
        if inputs.nrows() == 0 || inputs.nrows() != classes.len() {
            return Err(LearnError::EmptyDataset);
        }
        if inputs.iter().any(|v| !v.is_finite()) {
            return Err(LearnError::NonFinite);
        }
        Ok(Dataset { inputs, targets: Targets::Classes(classes), generator, seed })
    }

    pub fn len(&self) -> usize {
        self.inputs.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dim(&self) -> usize {
        self.inputs.ncols()
    }

    pub fn input_row(&self, i: usize) -> &[T] {
        self.inputs.row(i).to_slice().expect("row-major storage")
    }

    pub fn target(&self, i: usize) -> Target<T> {
        match &self.targets {
            Targets::Classes(c) => Target::Class(c[i]),
            Targets::Vectors(v) => Target::Vector(v.row(i).to_vec()),
        }
    }

    pub fn classes(&self) -> Option<&[usize]> {
        match &self.targets {
            Targets::Classes(c) => Some(c),
            Targets::Vectors(_) => None,
        }
    }

    pub fn class_count(&self) -> Option<usize> {
        self.classes().map(|c| c.iter().max().map_or(0, |&m| m + 1))
    }

    /// Re-encode class targets as one-hot vectors, e.g. to train against
    /// the squared loss. Width is the class count.
    pub fn one_hot(&self) -> Result<Dataset<T>, LearnError> {
        let classes = self.classes().ok_or(LearnError::NeedsClasses)?;
        let width = self.class_count().expect("classes imply a count");
        let mut t = Array2::zeros((self.len(), width));
        for (i, &c) in classes.iter().enumerate() {
            t[(i, c)] = T::one();
        }
        Ok(Dataset {
            inputs: self.inputs.clone(),
            targets: Targets::Vectors(t),
            generator: format!("{}+one_hot", self.generator),
            seed: self.seed,
        })
    }

    /// Index order sorted by input row, then target. Accumulating in this
    /// order makes sums independent of how the dataset was permuted.
    pub fn canonical_order(&self) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..self.len()).collect();
        idx.sort_by(|&a, &b| {
            let ra = self.inputs.row(a);
            let rb = self.inputs.row(b);
            for (va, vb) in ra.iter().zip(rb.iter()) {
                match va.partial_cmp(vb).expect("finite entries") {
                    std::cmp::Ordering::Equal => continue,
                    other => return other,
                }
            }
            match &self.targets {
                Targets::Classes(c) => c[a].cmp(&c[b]),
                Targets::Vectors(v) => {
                    for (va, vb) in v.row(a).iter().zip(v.row(b).iter()) {
                        match va.partial_cmp(vb).expect("finite entries") {
                            std::cmp::Ordering::Equal => continue,
                            other => return other,
                        }
                    }
                    std::cmp::Ordering::Equal
                }
            }
        });
        idx
    }

    /// Serialize as CSV with `# key = value` metadata lines for the
    /// generator and seed, then a header row.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("# generator = {}\n", self.generator));
        out.push_str(&format!("# seed = {}\n", self.seed));
        let d = self.dim();
        let mut header: Vec<String> = (0..d).map(|j| format!("x{j}")).collect();
        match &self.targets {
            Targets::Classes(_) => header.push("class".to_string()),
            Targets::Vectors(v) => {
                header.extend((0..v.ncols()).map(|j| format!("y{j}")));
            }
        }
        out.push_str(&header.join(","));
        out.push('\n');
        for i in 0..self.len() {
            let mut row: Vec<String> =
                self.inputs.row(i).iter().map(|v| format!("{v}")).collect();
            match &self.targets {
                Targets::Classes(c) => row.push(c[i].to_string()),
                Targets::Vectors(v) => {
                    row.extend(v.row(i).iter().map(|y| format!("{y}")));
                }
            }
            out.push_str(&row.join(","));
            out.push('\n');
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self, LearnError> {
        let mut generator = String::new();
        let mut seed = 0u64;
        let mut header: Option<Vec<String>> = None;
        let mut rows: Vec<Vec<T>> = Vec::new();
        let mut classes: Vec<usize> = Vec::new();
        let mut vectors: Vec<Vec<T>> = Vec::new();
        let mut d = 0usize;
        let mut class_target = true;
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            let err = |msg: &str| LearnError::Parse { line: lineno + 1, msg: msg.to_string() };
            if line.is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix('#') {
                if let Some((k, v)) = rest.split_once('=') {
                    match k.trim() {
                        "generator" => generator = v.trim().to_string(),
                        "seed" => {
                            seed = v.trim().parse().map_err(|_| err("bad seed"))?
                        }
                        _ => {}
                    }
                }
                continue;
            }
            let fields: Vec<&str> = line.split(',').map(str::trim).collect();
            match &header {
                None => {
                    let h: Vec<String> = fields.iter().map(|s| s.to_string()).collect();
                    d = h.iter().take_while(|c| c.starts_with('x')).count();
                    if d == 0 || d == h.len() {
                        return Err(err("header must list x columns then targets"));
                    }
                    class_target = h[d] == "class";
                    header = Some(h);
                }
                Some(h) => {
                    if fields.len() != h.len() {
                        return Err(err("wrong field count"));
                    }
                    let mut row = Vec::with_capacity(d);
                    for f in &fields[..d] {
                        row.push(f.parse::<T>().map_err(|_| err("bad number"))?);
                    }
                    rows.push(row);
                    if class_target {
                        classes.push(fields[d].parse().map_err(|_| err("bad class"))?);
                    } else {
                        let mut y = Vec::with_capacity(fields.len() - d);
                        for f in &fields[d..] {
                            y.push(f.parse::<T>().map_err(|_| err("bad number"))?);
                        }
                        vectors.push(y);
                    }
                }
            }
        }
        if rows.is_empty() {
            return Err(LearnError::EmptyDataset);
        }
        let n = rows.len();
        let inputs =
            Array2::from_shape_vec((n, d), rows.into_iter().flatten().collect())
                .expect("consistent row widths");
        let targets = if class_target {
            Targets::Classes(classes)
        } else {
            let m = vectors[0].len();
            Targets::Vectors(
                Array2::from_shape_vec((n, m), vectors.into_iter().flatten().collect())
                    .expect("consistent row widths"),
            )
        };
        if inputs.iter().any(|v| !v.is_finite()) {
            return Err(LearnError::NonFinite);
        }
        Ok(Dataset { inputs, targets, generator, seed })
    }
}

/// Dataset generators.
#[derive(Debug, Clone)]
pub enum DatasetKind<'a, T: Real> {
    /// Two interleaved half-circle arcs: class 0 on the unit circle at the
    /// origin, class 1 on the unit circle centered at (1, 0.5), mirrored;
    /// isotropic Gaussian noise of the given scale added to both.
    TwoMoons { noise: T },
    /// Four uniform square clusters at (±1/2, ±1/2) with jitter 1/4;
    /// label = XOR of the coordinate signs.
    XorGrid,
    /// Inputs uniform in the unit ball; labels = argmax of the teacher.
    RandomTeacher { teacher: &'a Network<T> },
}

pub fn make_dataset<T: Real>(
    kind: DatasetKind<'_, T>,
    n: usize,
    seed: u64,
) -> Result<Dataset<T>, LearnError> {
    if n == 0 {
        return Err(LearnError::EmptyDataset);
    }
    match kind {
        DatasetKind::TwoMoons { noise } => {
            if noise < T::zero() {
                return Err(LearnError::NotPositive("noise"));
            }
            let mut r = rng::stream(seed, "two_moons");
            let mut inputs = Array2::zeros((n, 2));
            let mut classes = Vec::with_capacity(n);
            let pi = T::of(std::f64::consts::PI);
            for i in 0..n {
                let t = T::uniform_01(&mut r) * pi;
                let class = i % 2;
                let (mut x, mut y) = if class == 0 {
                    (t.cos(), t.sin())
                } else {
                    (T::one() - t.cos(), T::of(0.5) - t.sin())
                };
                x += noise * T::standard_normal(&mut r);
                y += noise * T::standard_normal(&mut r);
                inputs[(i, 0)] = x;
                inputs[(i, 1)] = y;
                classes.push(class);
            }
            Dataset::from_classes(
                inputs,
                classes,
                format!("two_moons noise={noise:e}"),
                seed,
            )
        }
        DatasetKind::XorGrid => {
            let mut r = rng::stream(seed, "xor_grid");
            let mut inputs = Array2::zeros((n, 2));
            let mut classes = Vec::with_capacity(n);
            let half = T::of(0.5);
            let quarter = T::of(0.25);
            for i in 0..n {
                let q = i % 4;
                let sx = if q == 0 || q == 3 { T::one() } else { -T::one() };
                let sy = if q < 2 { T::one() } else { -T::one() };
                let jx = (T::uniform_01(&mut r) - half) * half;
                let jy = (T::uniform_01(&mut r) - half) * half;
                let x = sx * half + jx;
                let y = sy * half + jy;
                debug_assert!(jx.abs() <= quarter && jy.abs() <= quarter);
                inputs[(i, 0)] = x;
                inputs[(i, 1)] = y;
                classes.push(usize::from((x > T::zero()) != (y > T::zero())));
            }
            Dataset::from_classes(inputs, classes, "xor_grid".to_string(), seed)
        }
        DatasetKind::RandomTeacher { teacher } => {
            let d = teacher.input_dim();
            let domain = crate::net::Domain::unit(d);
            let mut r = rng::stream(seed, "random_teacher");
            let mut inputs = Array2::zeros((n, d));
            let mut classes = Vec::with_capacity(n);
            let mut x = vec![T::zero(); d];
            for i in 0..n {
                crate::density::sample_in_ball(&domain, &mut r, &mut x);
                for (j, &v) in x.iter().enumerate() {
                    inputs[(i, j)] = v;
                }
                classes.push(teacher.predict_class(&x)?);
            }
            Dataset::from_classes(
                inputs,
                classes,
                format!("random_teacher outputs={}", teacher.output_dim()),
                seed,
            )
        }
    }
}

/// Mini-batch SGD. Returns a trained copy (the input network is untouched)
/// and the per-epoch mean sample loss. Batch order is a seeded shuffle per
/// epoch; gradients accumulate in batch-index order, so a fixed seed gives
/// bit-identical weights.
pub fn train_sgd<T: Real>(
    net: &Network<T>,
    data: &Dataset<T>,
    loss: Loss,
    lr: T,
    epochs: usize,
    batch: usize,
    seed: u64,
) -> Result<(Network<T>, Vec<T>), LearnError> {
    if data.is_empty() {
        return Err(LearnError::EmptyDataset);
    }
    if !(lr > T::zero()) {
        return Err(LearnError::NotPositive("lr"));
    }
    if batch == 0 {
        return Err(LearnError::NotPositive("batch"));
    }
    if data.dim() != net.input_dim() {
        return Err(LearnError::Net(NetError::DimensionMismatch {
            expected: net.input_dim(),
            got: data.dim(),
        }));
    }
    if let Some(classes) = data.classes() {
        for &c in classes {
            if c >= net.output_dim() {
                return Err(LearnError::ClassOutOfRange {
                    got: c,
                    classes: net.output_dim(),
                });
            }
        }
    }

    let mut trained = net.clone();
    let mut params = trained.flatten_params();
    let mut curve = Vec::with_capacity(epochs);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut shuffle_rng = rng::stream(seed, "train_shuffle");
    let n_inv = T::one() / T::of(data.len() as f64);
    for epoch in 0..epochs {
        order.shuffle(&mut shuffle_rng);
        let mut epoch_loss = T::zero();
        for chunk in order.chunks(batch) {
            let mut grad = vec![T::zero(); params.len()];
            let mut batch_loss = T::zero();
            for &i in chunk {
                let rep = trained.loss_backward(data.input_row(i), &data.target(i), loss)?;
                batch_loss += rep.loss;
                for (g, d) in grad.iter_mut().zip(&rep.grad) {
                    *g += *d;
                }
            }
            if !batch_loss.is_finite() {
                return Err(LearnError::Diverged { epoch });
            }
            epoch_loss += batch_loss;
            let scale = lr / T::of(chunk.len() as f64);
            for (p, g) in params.iter_mut().zip(&grad) {
                *p -= scale * *g;
            }
            trained.set_params(&params)?;
        }
        let mean = epoch_loss * n_inv;
        if !mean.is_finite() {
            return Err(LearnError::Diverged { epoch });
        }
        curve.push(mean);
    }
    Ok((trained, curve))
}

/// Fraction of points whose predicted class matches the label. Vector
/// targets are read as class scores (argmax), so one-hot datasets work too.
pub fn accuracy<T: Real>(net: &Network<T>, data: &Dataset<T>) -> Result<T, LearnError> {
    let label_of = |i: usize| -> usize {
        match &data.targets {
            Targets::Classes(c) => c[i],
            Targets::Vectors(v) => {
                let row = v.row(i);
                let mut best = 0usize;
                for (j, x) in row.iter().enumerate() {
                    if *x > row[best] {
                        best = j;
                    }
                }
                best
            }
        }
    };
    let mut hits = 0usize;
    for i in 0..data.len() {
        if net.predict_class(data.input_row(i))? == label_of(i) {
            hits += 1;
        }
    }
    Ok(T::of(hits as f64 / data.len() as f64))
}

/// Norm constraining the input perturbation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PerturbNorm {
    L2,
    Linf,
}

impl PerturbNorm {
    fn measure<T: Real>(self, p: &[T]) -> T {
        match self {
            PerturbNorm::L2 => p.iter().map(|&v| v * v).fold(T::zero(), |a, b| a + b).sqrt(),
            PerturbNorm::Linf => p.iter().fold(T::zero(), |a, &v| a.max(v.abs())),
        }
    }
}

/// Outcome of one adversarial search at one point.
#[derive(Debug, Clone, PartialEq)]
pub struct AttackResult<T: Real> {
    pub success: bool,
    pub x_adv: Vec<T>,
    /// Size of the applied perturbation in the attack's norm.
    pub perturbation_norm: T,
    /// L2 change of the raw network output.
    pub output_change: T,
    pub steps_used: usize,
}

/// Input-loss gradient, retried at a deterministic 1e-9 offset when the
/// point sits on an activation kink.
fn input_grad_with_jitter<T: Real>(
    net: &Network<T>,
    x: &[T],
    label: usize,
) -> Result<Vec<T>, NetError> {
    let rep = net.loss_backward(x, &Target::Class(label), Loss::SoftmaxXent)?;
    if rep.kink_hits == 0 {
        return Ok(rep.input_grad);
    }
    let jitter = T::of(1e-9);
    let moved: Vec<T> = x.iter().map(|&v| v + jitter).collect();
    Ok(net
        .loss_backward(&moved, &Target::Class(label), Loss::SoftmaxXent)?
        .input_grad)
}

fn output_change_l2<T: Real>(net: &Network<T>, x: &[T], x_adv: &[T]) -> Result<T, NetError> {
    let a = net.forward(x)?;
    let b = net.forward(x_adv)?;
    Ok(a.iter()
        .zip(&b)
        .map(|(&u, &v)| (u - v) * (u - v))
        .fold(T::zero(), |s, t| s + t)
        .sqrt())
}

/// One signed-gradient step of size `eps_step` per coordinate; success
/// means the predicted class changed.
pub fn fgsm<T: Real>(
    net: &Network<T>,
    x: &[T],
    label: usize,
    eps_step: T,
) -> Result<AttackResult<T>, LearnError> {
    if eps_step < T::zero() {
        return Err(LearnError::NotPositive("eps_step"));
    }
    if label >= net.output_dim() {
        return Err(LearnError::ClassOutOfRange { got: label, classes: net.output_dim() });
    }
    let orig = net.predict_class(x)?;
    let g = input_grad_with_jitter(net, x, label)?;
    let x_adv: Vec<T> = x
        .iter()
        .zip(&g)
        .map(|(&xi, &gi)| xi + eps_step * gi.signum())
        .collect();
    let p: Vec<T> = x_adv.iter().zip(x).map(|(&a, &b)| a - b).collect();
    Ok(AttackResult {
        success: net.predict_class(&x_adv)? != orig,
        perturbation_norm: PerturbNorm::Linf.measure(&p),
        output_change: output_change_l2(net, x, &x_adv)?,
        x_adv,
        steps_used: 1,
    })
}

fn project_perturbation<T: Real>(x_adv: &mut [T], x: &[T], delta: T, norm: PerturbNorm) {
    match norm {
        PerturbNorm::L2 => {
            let mut n2 = T::zero();
            for (a, b) in x_adv.iter().zip(x) {
                let d = *a - *b;
                n2 += d * d;
            }
            let n = n2.sqrt();
            if n > delta {
                let s = delta / n;
                for (a, b) in x_adv.iter_mut().zip(x) {
                    *a = *b + (*a - *b) * s;
                }
            }
        }
        PerturbNorm::Linf => {
            for (a, b) in x_adv.iter_mut().zip(x) {
                *a = (*a).max(*b - delta).min(*b + delta);
            }
        }
    }
}

/// Projected gradient ascent on the classification loss inside the
/// delta-ball. Stops at the first class flip; otherwise returns the
/// highest-loss iterate.
pub fn pgd<T: Real>(
    net: &Network<T>,
    x: &[T],
    label: usize,
    delta: T,
    steps: usize,
    step_size: T,
    norm: PerturbNorm,
    seed: u64,
) -> Result<AttackResult<T>, LearnError> {
    if delta < T::zero() {
        return Err(LearnError::NotPositive("delta"));
    }
    if steps == 0 {
        return Err(LearnError::NotPositive("steps"));
    }
    if !(step_size > T::zero()) {
        return Err(LearnError::NotPositive("step_size"));
    }
    if label >= net.output_dim() {
        return Err(LearnError::ClassOutOfRange { got: label, classes: net.output_dim() });
    }
    let orig = net.predict_class(x)?;
    let mut r = rng::stream(seed, "pgd");
    let mut cur = x.to_vec();
    let mut best = x.to_vec();
    let mut best_loss = net
        .loss_backward(x, &Target::Class(label), Loss::SoftmaxXent)?
        .loss;
    let mut steps_used = 0usize;
    for step in 0..steps {
        steps_used = step + 1;
        let rep = net.loss_backward(&cur, &Target::Class(label), Loss::SoftmaxXent)?;
        let mut g = if rep.kink_hits == 0 {
            rep.input_grad
        } else {
            // On a kink the gradient is one-sided; nudge randomly and retry.
            let moved: Vec<T> = cur
                .iter()
                .map(|&v| v + T::of(1e-9) * (T::uniform_01(&mut r) - T::of(0.5)))
                .collect();
            net.loss_backward(&moved, &Target::Class(label), Loss::SoftmaxXent)?
                .input_grad
        };
        match norm {
            PerturbNorm::L2 => {
                let n = PerturbNorm::L2.measure(&g);
                if n == T::zero() {
                    break;
                }
                for gi in g.iter_mut() {
                    *gi /= n;
                }
            }
            PerturbNorm::Linf => {
                for gi in g.iter_mut() {
                    *gi = gi.signum();
                }
            }
        }
        for (c, gi) in cur.iter_mut().zip(&g) {
            *c += step_size * *gi;
        }
        project_perturbation(&mut cur, x, delta, norm);
        let rep = net.loss_backward(&cur, &Target::Class(label), Loss::SoftmaxXent)?;
        if rep.loss > best_loss {
            best_loss = rep.loss;
            best.copy_from_slice(&cur);
        }
        if net.predict_class(&cur)? != orig {
            best.copy_from_slice(&cur);
            break;
        }
    }
    let p: Vec<T> = best.iter().zip(x).map(|(&a, &b)| a - b).collect();
    Ok(AttackResult {
        success: net.predict_class(&best)? != orig,
        perturbation_norm: norm.measure(&p),
        output_change: output_change_l2(net, x, &best)?,
        x_adv: best,
        steps_used,
    })
}

/// Attack recipe for [`attack_success_rate`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AttackMethod<T: Real> {
    /// One signed-gradient step of size delta.
    Fgsm,
    /// Projected gradient ascent with the given schedule.
    Pgd { steps: usize, step_size: T, norm: PerturbNorm },
}

/// Fraction of correctly classified points flipped by the attack within
/// budget `delta`, with a Wilson interval. Per-point seeds are derived, so
/// the result is independent of evaluation order.
pub fn attack_success_rate<T: Real>(
    net: &Network<T>,
    data: &Dataset<T>,
    method: AttackMethod<T>,
    delta: T,
    confidence: T,
    seed: u64,
) -> Result<DensityEstimate<T>, LearnError> {
    let classes = data.classes().ok_or(LearnError::NeedsClasses)?;
    if delta < T::zero() {
        return Err(LearnError::NotPositive("delta"));
    }
    let mut correct = Vec::new();
    for i in 0..data.len() {
        if net.predict_class(data.input_row(i))? == classes[i] {
            correct.push(i);
        }
    }
    if correct.is_empty() {
        return Err(LearnError::NoCorrectPoints);
    }
    let flips: Result<Vec<bool>, LearnError> = correct
        .par_iter()
        .map(|&i| {
            let x = data.input_row(i);
            let res = match method {
                AttackMethod::Fgsm => fgsm(net, x, classes[i], delta)?,
                AttackMethod::Pgd { steps, step_size, norm } => pgd(
                    net,
                    x,
                    classes[i],
                    delta,
                    steps,
                    step_size,
                    norm,
                    rng::derive_indexed(seed, i as u64),
                )?,
            };
            Ok(res.success)
        })
        .collect();
    let flips = flips?;
    let hits = flips.iter().filter(|&&b| b).count() as u64;
    let n = correct.len() as u64;
    let (lo, hi) = crate::stats::wilson_interval(hits, n, confidence);
    Ok(DensityEstimate {
        rho: T::of(hits as f64 / n as f64),
        ci_low: lo,
        ci_high: hi,
        hits,
        n,
        confidence,
        seed,
        kind: EstimateKind::AttackSuccess,
        is_lower_bound: true,
    })
}

/// Plug-in mutual information between quantized inputs and class labels.
#[derive(Debug, Clone, PartialEq)]
pub struct MIEstimate<T: Real> {
    pub i_xy_bits: T,
    pub bins_per_dim: usize,
    pub cells: usize,
    pub class_count: usize,
    pub n: usize,
    /// Miller-style first-order bias bound (|X||Y|-1)/(2 n ln2), in bits.
    pub bias_bound_bits: T,
    pub h_x_bits: T,
    pub h_y_bits: T,
}

/// Histogram MI: inputs quantized per dimension into equal-width bins over
/// the observed range, labels taken as-is.
pub fn mutual_information_plugin<T: Real>(
    data: &Dataset<T>,
    bins_per_dim: usize,
) -> Result<MIEstimate<T>, LearnError> {
    let classes = data.classes().ok_or(LearnError::NeedsClasses)?;
    if bins_per_dim < 2 {
        return Err(LearnError::TooFewBins);
    }
    let d = data.dim();
    if d > 3 {
        return Err(LearnError::TooManyDims(d));
    }
    let n = data.len();
    let cells = bins_per_dim.pow(d as u32);
    if cells > n / 5 {
        return Err(LearnError::TooManyCells { cells, n });
    }
    let class_count = data.class_count().expect("class targets");

    let mut lo = vec![T::infinity(); d];
    let mut hi = vec![T::neg_infinity(); d];
    for i in 0..n {
        for (j, &v) in data.input_row(i).iter().enumerate() {
            lo[j] = lo[j].min(v);
            hi[j] = hi[j].max(v);
        }
    }
    let bins = T::of(bins_per_dim as f64);
    let cell_of = |x: &[T]| -> usize {
        let mut idx = 0usize;
        for j in 0..d {
            let b = if hi[j] > lo[j] {
                let f = (x[j] - lo[j]) / (hi[j] - lo[j]) * bins;
                (f.to_f64().unwrap() as usize).min(bins_per_dim - 1)
            } else {
                0
            };
            idx = idx * bins_per_dim + b;
        }
        idx
    };

    let mut joint = vec![0u64; cells * class_count];
    let mut px = vec![0u64; cells];
    let mut py = vec![0u64; class_count];
    for i in 0..n {
        let cx = cell_of(data.input_row(i));
        let cy = classes[i];
        joint[cx * class_count + cy] += 1;
        px[cx] += 1;
        py[cy] += 1;
    }

    let nt = T::of(n as f64);
    let ln2 = T::of(std::f64::consts::LN_2);
    let mut i_bits = T::zero();
    for cx in 0..cells {
        for cy in 0..class_count {
            let c = joint[cx * class_count + cy];
            if c == 0 {
                continue;
            }
            let pj = T::of(c as f64) / nt;
            let pxv = T::of(px[cx] as f64) / nt;
            let pyv = T::of(py[cy] as f64) / nt;
            i_bits += pj * (pj / (pxv * pyv)).ln() / ln2;
        }
    }
    let entropy = |counts: &[u64]| -> T {
        let mut h = T::zero();
        for &c in counts {
            if c > 0 {
                let p = T::of(c as f64) / nt;
                h -= p * p.ln() / ln2;
            }
        }
        h
    };
    let bias = T::of((cells * class_count - 1) as f64)
        / (T::of(2.0) * nt * T::of(std::f64::consts::LN_2));
    Ok(MIEstimate {
        i_xy_bits: i_bits.max(T::zero()),
        bins_per_dim,
        cells,
        class_count,
        n,
        bias_bound_bits: bias,
        h_x_bits: entropy(&px),
        h_y_bits: entropy(&py),
    })
}

/// A frozen training recipe: everything needed to rebuild one trained
/// network bit-for-bit.
#[derive(Debug, Clone)]
pub struct FixtureSpec<T: Real> {
    pub name: &'static str,
    pub hidden: Vec<usize>,
    pub activation: ActivationKind<T>,
    pub loss: Loss,
    pub data_n: usize,
    pub data_noise: T,
    pub data_seed: u64,
    pub weight_scale: T,
    pub init_seed: u64,
    pub lr: T,
    pub epochs: usize,
    pub batch: usize,
    pub train_seed: u64,
}

impl<T: Real> FixtureSpec<T> {
    /// Training view of the two-moons data: class labels for the softmax
    /// loss, one-hot vectors for the squared loss.
    pub fn dataset(&self) -> Dataset<T> {
        let raw = make_dataset(
            DatasetKind::TwoMoons { noise: self.data_noise },
            self.data_n,
            self.data_seed,
        )
        .expect("fixture datasets are valid by construction");
        match self.loss {
            Loss::SoftmaxXent => raw,
            Loss::Mse => raw.one_hot().expect("two-moons data has class labels"),
        }
    }

    pub fn untrained(&self) -> Network<T> {
        let mut dims = vec![2];
        dims.extend(&self.hidden);
        dims.push(2);
        crate::net::random_network(
            &NetSpec::mlp(&dims, self.activation.clone()),
            self.weight_scale,
            self.init_seed,
        )
    }

    pub fn train(&self) -> Result<(Network<T>, Vec<T>), LearnError> {
        train_sgd(
            &self.untrained(),
            &self.dataset(),
            self.loss,
            self.lr,
            self.epochs,
            self.batch,
            self.train_seed,
        )
    }
}

/// Relu two-moons classifier used by the attack experiments.
pub fn two_moons_relu_fixture<T: Real>() -> FixtureSpec<T> {
    FixtureSpec {
        name: "two_moons_relu_v1",
        hidden: vec![32, 32],
        activation: ActivationKind::Relu,
        loss: Loss::SoftmaxXent,
        data_n: 200,
        data_noise: T::of(0.1),
        data_seed: 7,
        weight_scale: T::one(),
        init_seed: 7,
        lr: T::of(0.1),
        epochs: 200,
        batch: 32,
        train_seed: 7,
    }
}

/// Smooth two-moons regressor used by the information-matrix experiments.
/// Squared loss on one-hot targets, because a softmax head ties its output
/// rows together and plants exact null directions in every gradient outer
/// product; the net is kept tiny so even the smallest eigenvalue of the
/// untrained matrix sits above the reporting floor.
pub fn two_moons_tanh_fixture<T: Real>() -> FixtureSpec<T> {
    FixtureSpec {
        name: "two_moons_tanh_v1",
        hidden: vec![4],
        activation: ActivationKind::Tanh,
        loss: Loss::Mse,
        data_n: 600,
        data_noise: T::of(0.1),
        data_seed: 7,
        weight_scale: T::one(),
        init_seed: 7,
        lr: T::of(0.1),
        epochs: 200,
        batch: 32,
        train_seed: 7,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::{assert_abs_diff_eq, assert_relative_eq};
    use ndarray::{array, Array1};

    #[test]
    fn two_moons_noiseless_points_sit_on_the_arcs() {
        let ds = make_dataset::<f64>(
            DatasetKind::TwoMoons { noise: 0.0 },
            400,
            11,
        )
        .unwrap();
        let classes = ds.classes().unwrap();
        for i in 0..ds.len() {
            let x = ds.inputs[(i, 0)];
            let y = ds.inputs[(i, 1)];
            if classes[i] == 0 {
                assert_abs_diff_eq!(x * x + y * y, 1.0, epsilon = 1e-12);
                assert!(y >= -1e-12);
            } else {
                let dx = x - 1.0;
                let dy = y - 0.5;
                assert_abs_diff_eq!(dx * dx + dy * dy, 1.0, epsilon = 1e-12);
                assert!(dy <= 1e-12);
            }
        }
        assert_eq!(classes.iter().filter(|&&c| c == 0).count(), 200);
    }

    #[test]
    fn xor_grid_labels_follow_the_signs() {
        let ds = make_dataset::<f64>(DatasetKind::XorGrid, 400, 3).unwrap();
        let classes = ds.classes().unwrap();
        let mut quadrant_seen = [false; 4];
        for i in 0..ds.len() {
            let x = ds.inputs[(i, 0)];
            let y = ds.inputs[(i, 1)];
            assert_eq!(classes[i], usize::from((x > 0.0) != (y > 0.0)));
            quadrant_seen[usize::from(x > 0.0) * 2 + usize::from(y > 0.0)] = true;
            assert!(x.abs() >= 0.25 && x.abs() <= 0.75);
        }
        assert!(quadrant_seen.iter().all(|&q| q));
    }

    #[test]
    fn random_teacher_labels_match_the_teacher() {
        let teacher = crate::net::random_network::<f64>(
            &NetSpec::depth1(3, 8, 4, ActivationKind::Relu),
            1.0,
            19,
        );
        let ds = make_dataset(DatasetKind::RandomTeacher { teacher: &teacher }, 100, 5)
            .unwrap();
        let classes = ds.classes().unwrap();
        for i in 0..ds.len() {
            assert_eq!(teacher.predict_class(ds.input_row(i)).unwrap(), classes[i]);
        }
        assert_eq!(ds.dim(), 3);
    }

    #[test]
    fn empty_dataset_rejected() {
        assert_eq!(
            make_dataset::<f64>(DatasetKind::XorGrid, 0, 1).unwrap_err(),
            LearnError::EmptyDataset
        );
    }

    #[test]
    fn csv_roundtrip_is_bit_exact() {
        let ds = make_dataset::<f64>(
            DatasetKind::TwoMoons { noise: 0.05 },
            50,
            23,
        )
        .unwrap();
        let text = ds.to_csv();
        let back = Dataset::<f64>::from_csv(&text).unwrap();
        assert_eq!(ds, back);

        let vecs = Dataset::<f64> {
            inputs: array![[0.5, -1.25], [0.125, 3.0]],
            targets: Targets::Vectors(array![[1.0], [0.0625]]),
            generator: "by hand".to_string(),
            seed: 9,
        };
        let back = Dataset::<f64>::from_csv(&vecs.to_csv()).unwrap();
        assert_eq!(vecs, back);
    }

    #[test]
    fn csv_parse_errors_carry_line_numbers() {
        let bad = "# seed = 1\nx0,class\n0.5,zero\n";
        match Dataset::<f64>::from_csv(bad).unwrap_err() {
            LearnError::Parse { line, .. } => assert_eq!(line, 3),
            e => panic!("unexpected {e:?}"),
        }
    }

    #[test]
    fn canonical_order_ignores_permutation() {
        let ds = make_dataset::<f64>(DatasetKind::XorGrid, 64, 8).unwrap();
        let order = ds.canonical_order();
        // Reverse the dataset; the canonical view must list the same points.
        let n = ds.len();
        let mut rev_inputs = Array2::zeros((n, ds.dim()));
        let mut rev_classes = vec![0usize; n];
        for i in 0..n {
            for j in 0..ds.dim() {
                rev_inputs[(n - 1 - i, j)] = ds.inputs[(i, j)];
            }
            rev_classes[n - 1 - i] = ds.classes().unwrap()[i];
        }
        let rev = Dataset::from_classes(rev_inputs, rev_classes, String::new(), 0).unwrap();
        let rev_order = rev.canonical_order();
        for (a, b) in order.iter().zip(&rev_order) {
            assert_eq!(ds.input_row(*a), rev.input_row(*b));
        }
    }

    #[test]
    fn training_zero_epochs_is_identity() {
        let net = crate::net::random_network::<f64>(
            &NetSpec::mlp(&[2, 8, 2], ActivationKind::Relu),
            1.0,
            2,
        );
        let ds = make_dataset(DatasetKind::XorGrid, 40, 4).unwrap();
        let (out, curve) = train_sgd(&net, &ds, Loss::SoftmaxXent, 0.1, 0, 8, 1).unwrap();
        assert_eq!(net.flatten_params(), out.flatten_params());
        assert!(curve.is_empty());
    }

    #[test]
    fn training_is_seed_reproducible() {
        let net = crate::net::random_network::<f64>(
            &NetSpec::mlp(&[2, 8, 2], ActivationKind::Relu),
            1.0,
            2,
        );
        let ds = make_dataset(DatasetKind::XorGrid, 40, 4).unwrap();
        let run = |seed| {
            train_sgd(&net, &ds, Loss::SoftmaxXent, 0.05, 20, 8, seed)
                .unwrap()
                .0
                .flatten_params()
        };
        assert_eq!(run(3), run(3));
        assert_ne!(run(3), run(4));
    }

    #[test]
    fn convex_fixture_loss_is_non_increasing() {
        // One linear layer + mse is convex; a small enough full-batch step
        // descends monotonically.
        let net = crate::net::random_network::<f64>(
            &NetSpec { input_dim: 2, layers: vec![(1, ActivationKind::Linear)] },
            1.0,
            6,
        );
        let inputs = array![[0.0, 1.0], [1.0, 0.0], [1.0, 1.0], [-1.0, 0.5]];
        let targets = Targets::Vectors(array![[1.0], [0.5], [2.0], [0.0]]);
        let ds = Dataset { inputs, targets, generator: "by hand".into(), seed: 0 };
        let (_, curve) = train_sgd(&net, &ds, Loss::Mse, 0.01, 60, 4, 1).unwrap();
        for w in curve.windows(2) {
            assert!(w[1] <= w[0] + 1e-12, "loss rose: {w:?}");
        }
    }

    #[test]
    fn divergence_is_reported_with_the_epoch() {
        let net = crate::net::random_network::<f64>(
            &NetSpec { input_dim: 2, layers: vec![(1, ActivationKind::Linear)] },
            1.0,
            6,
        );
        let inputs = array![[1.0, 1.0], [2.0, -1.0]];
        let targets = Targets::Vectors(array![[0.0], [1.0]]);
        let ds = Dataset { inputs, targets, generator: "by hand".into(), seed: 0 };
        match train_sgd(&net, &ds, Loss::Mse, 1e6, 50, 2, 1).unwrap_err() {
            LearnError::Diverged { .. } => {}
            e => panic!("unexpected {e:?}"),
        }
    }

    fn linear_binary(seed: u64) -> (Network<f64>, Vec<f64>, usize) {
        let mut r = rng::stream(seed, "linfix");
        let w: Vec<f64> = (0..4).map(|_| f64::standard_normal(&mut r)).collect();
        let b: Vec<f64> = (0..2).map(|_| 0.3 * f64::standard_normal(&mut r)).collect();
        let net = Network::new(vec![crate::net::Layer {
            weights: Array2::from_shape_vec((2, 2), w).unwrap(),
            bias: Array1::from(b),
            activation: ActivationKind::Linear,
        }])
        .unwrap();
        let x: Vec<f64> = (0..2).map(|_| f64::standard_normal(&mut r)).collect();
        let label = net.predict_class(&x).unwrap();
        (net, x, label)
    }

    #[test]
    fn pgd_matches_the_linear_closed_form() {
        let mut checked = 0;
        for seed in 0..200u64 {
            let (net, x, label) = linear_binary(seed);
            let z = net.forward(&x).unwrap();
            let margin = (z[label] - z[1 - label]).abs();
            let dw: Vec<f64> = (0..2)
                .map(|j| net.layers()[0].weights[(1 - label, j)] - net.layers()[0].weights[(label, j)])
                .collect();
            let dw_norm = (dw[0] * dw[0] + dw[1] * dw[1]).sqrt();
            let delta = 0.25;
            let reachable = margin / dw_norm <= delta;
            let res =
                pgd(&net, &x, label, delta, 12, delta / 3.0, PerturbNorm::L2, seed).unwrap();
            assert_eq!(res.success, reachable, "seed {seed}");
            assert!(res.perturbation_norm <= delta + 1e-9);
            checked += 1;
        }
        assert_eq!(checked, 200);
    }

    #[test]
    fn pgd_zero_budget_never_succeeds() {
        let (net, x, label) = linear_binary(77);
        let res = pgd(&net, &x, label, 0.0, 5, 0.1, PerturbNorm::L2, 1).unwrap();
        assert!(!res.success);
        assert_eq!(res.x_adv, x);
        assert_eq!(res.perturbation_norm, 0.0);
    }

    #[test]
    fn pgd_respects_both_norm_budgets() {
        for seed in 0..20u64 {
            let net = crate::net::random_network::<f64>(
                &NetSpec::mlp(&[3, 10, 3], ActivationKind::Relu),
                1.0,
                seed,
            );
            let mut r = rng::stream(seed, "pt");
            let x: Vec<f64> = (0..3).map(|_| f64::standard_normal(&mut r)).collect();
            let label = (seed % 3) as usize;
            for norm in [PerturbNorm::L2, PerturbNorm::Linf] {
                let res = pgd(&net, &x, label, 0.05, 15, 0.02, norm, seed).unwrap();
                assert!(res.perturbation_norm <= 0.05 + 1e-9);
                let p: Vec<f64> =
                    res.x_adv.iter().zip(&x).map(|(a, b)| a - b).collect();
                assert!(norm.measure(&p) <= 0.05 + 1e-9);
            }
        }
    }

    #[test]
    fn fgsm_zero_step_is_a_no_op() {
        let (net, x, label) = linear_binary(5);
        let res = fgsm(&net, &x, label, 0.0).unwrap();
        assert!(!res.success);
        assert_eq!(res.x_adv, x);
        assert_eq!(res.output_change, 0.0);
    }

    #[test]
    fn fgsm_survives_a_point_on_a_kink() {
        let net = Network::<f64>::new(vec![
            crate::net::Layer {
                weights: array![[1.0, 0.0], [0.0, 1.0]],
                bias: Array1::from(vec![0.0, 0.0]),
                activation: ActivationKind::Relu,
            },
            crate::net::Layer {
                weights: array![[1.0, -1.0], [-1.0, 1.0]],
                bias: Array1::from(vec![0.0, 0.0]),
                activation: ActivationKind::Linear,
            },
        ])
        .unwrap();
        // Both relu units sit exactly at their breakpoints here.
        let res = fgsm(&net, &[0.0, 0.0], 0, 0.1).unwrap();
        assert!(res.x_adv.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn attack_rate_edge_cases() {
        let (net, _, _) = linear_binary(9);
        let mut inputs = Array2::zeros((30, 2));
        let mut labels = Vec::new();
        let mut r = rng::stream(2, "pts");
        for i in 0..30 {
            let x: Vec<f64> = (0..2).map(|_| f64::standard_normal(&mut r)).collect();
            inputs[(i, 0)] = x[0];
            inputs[(i, 1)] = x[1];
            labels.push(net.predict_class(&x).unwrap());
        }
        let ds = Dataset::from_classes(inputs, labels, "probe".into(), 2).unwrap();

        let rate = attack_success_rate(
            &net,
            &ds,
            AttackMethod::Pgd { steps: 8, step_size: 0.1, norm: PerturbNorm::L2 },
            0.0,
            0.99,
            1,
        )
        .unwrap();
        assert_eq!(rate.rho, 0.0);
        assert_eq!(rate.n, 30);

        // A huge budget flips every point of a non-degenerate linear net.
        let rate = attack_success_rate(
            &net,
            &ds,
            AttackMethod::Pgd { steps: 30, step_size: 10.0, norm: PerturbNorm::L2 },
            50.0,
            0.99,
            1,
        )
        .unwrap();
        assert_eq!(rate.rho, 1.0);
        assert_eq!(rate.kind, EstimateKind::AttackSuccess);

        // All labels wrong: nothing to attack.
        let flipped: Vec<usize> =
            ds.classes().unwrap().iter().map(|&c| 1 - c).collect();
        let wrong =
            Dataset::from_classes(ds.inputs.clone(), flipped, "probe".into(), 2).unwrap();
        assert_eq!(
            attack_success_rate(&net, &wrong, AttackMethod::Fgsm, 0.1, 0.99, 1)
                .unwrap_err(),
            LearnError::NoCorrectPoints
        );
    }

    #[test]
    fn mi_of_a_four_level_identity_is_two_bits() {
        let n = 400;
        let mut inputs = Array2::zeros((n, 1));
        let mut classes = Vec::with_capacity(n);
        for i in 0..n {
            inputs[(i, 0)] = (i % 4) as f64;
            classes.push(i % 4);
        }
        let ds = Dataset::from_classes(inputs, classes, "identity".into(), 0).unwrap();
        let est = mutual_information_plugin(&ds, 4).unwrap();
        assert_eq!(est.i_xy_bits, 2.0);
        assert_eq!(est.h_y_bits, 2.0);
    }

    #[test]
    fn mi_of_constant_labels_is_zero() {
        let mut inputs = Array2::zeros((100, 1));
        for i in 0..100 {
            inputs[(i, 0)] = i as f64;
        }
        let ds =
            Dataset::from_classes(inputs, vec![0; 100], "const".into(), 0).unwrap();
        let est = mutual_information_plugin(&ds, 8).unwrap();
        assert_eq!(est.i_xy_bits, 0.0);
    }

    #[test]
    fn mi_never_exceeds_the_marginal_entropies() {
        for seed in 0..10u64 {
            let ds =
                make_dataset::<f64>(DatasetKind::TwoMoons { noise: 0.3 }, 500, seed)
                    .unwrap();
            let est = mutual_information_plugin(&ds, 8).unwrap();
            assert!(est.i_xy_bits >= 0.0);
            assert!(est.i_xy_bits <= est.h_x_bits.min(est.h_y_bits) + 1e-12);
        }
    }

    #[test]
    fn mi_independent_labels_stay_within_the_bias_bound_on_average() {
        let mut total = 0.0;
        let resamples = 20;
        for seed in 0..resamples {
            let mut r = rng::stream(seed, "indep");
            let n = 500;
            let mut inputs = Array2::zeros((n, 1));
            let mut classes = Vec::with_capacity(n);
            for i in 0..n {
                inputs[(i, 0)] = f64::standard_normal(&mut r);
                classes.push(usize::from(f64::uniform_01(&mut r) > 0.5));
            }
            let ds = Dataset::from_classes(inputs, classes, "indep".into(), seed).unwrap();
            let est = mutual_information_plugin(&ds, 4).unwrap();
            total += est.i_xy_bits;
        }
        let mean = total / resamples as f64;
        let bound = (4.0 * 2.0 - 1.0) / (2.0 * 500.0 * std::f64::consts::LN_2);
        assert!(mean <= bound, "mean {mean} > bound {bound}");
    }

    #[test]
    fn mi_noiseless_moons_carry_the_label() {
        let ds =
            make_dataset::<f64>(DatasetKind::TwoMoons { noise: 0.0 }, 10_000, 13).unwrap();
        let est = mutual_information_plugin(&ds, 16).unwrap();
        assert!(est.i_xy_bits >= 0.9, "I = {}", est.i_xy_bits);
    }

    #[test]
    fn mi_guards() {
        let ds = make_dataset::<f64>(DatasetKind::XorGrid, 100, 1).unwrap();
        assert_eq!(
            mutual_information_plugin(&ds, 1).unwrap_err(),
            LearnError::TooFewBins
        );
        assert_eq!(
            mutual_information_plugin(&ds, 16).unwrap_err(),
            LearnError::TooManyCells { cells: 256, n: 100 }
        );
    }

    #[test]
    fn accuracy_counts_matches() {
        let (net, _, _) = linear_binary(31);
        let inputs = array![[1.0, 0.0], [0.0, 1.0], [-1.0, 0.0], [0.0, -1.0]];
        let labels: Vec<usize> = (0..4)
            .map(|i| net.predict_class(inputs.row(i).to_slice().unwrap()).unwrap())
            .collect();
        let mut half_wrong = labels.clone();
        half_wrong[0] = 1 - half_wrong[0];
        half_wrong[1] = 1 - half_wrong[1];
        let ds = Dataset::from_classes(inputs, half_wrong, "acc".into(), 0).unwrap();
        assert_relative_eq!(accuracy(&net, &ds).unwrap(), 0.5);
    }
}
