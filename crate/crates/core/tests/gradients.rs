//! Analytic derivatives against central finite differences on smooth nets.

use catgeo::net::{random_network, ActivationKind, Loss, NetSpec, Network, Target};
use catgeo::rng;
use catgeo::scalar::Real;

const H: f64 = 1e-5;
const TOL: f64 = 1e-4;

fn rel_err(analytic: &[f64], numeric: &[f64]) -> f64 {
    let diff: f64 = analytic
        .iter()
        .zip(numeric)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt();
    let scale: f64 = analytic.iter().map(|v| v * v).sum::<f64>().sqrt();
    diff / scale.max(1e-8)
}

fn numeric_jacobian(net: &Network<f64>, x: &[f64]) -> Vec<f64> {
    let d = x.len();
    let out = net.output_dim();
    let mut rows = vec![0.0; out * d];
    for j in 0..d {
        let mut hi = x.to_vec();
        let mut lo = x.to_vec();
        hi[j] += H;
        lo[j] -= H;
        let fh = net.forward(&hi).unwrap();
        let fl = net.forward(&lo).unwrap();
        for i in 0..out {
            rows[i * d + j] = (fh[i] - fl[i]) / (2.0 * H);
        }
    }
    rows
}

fn numeric_param_gradient(net: &Network<f64>, x: &[f64], target: &Target<f64>) -> Vec<f64> {
    let theta = net.flatten_params();
    let mut work = net.clone();
    let mut grad = vec![0.0; theta.len()];
    let loss_at = |work: &mut Network<f64>, params: &[f64]| -> f64 {
        work.set_params(params).unwrap();
        work.loss_backward(x, target, Loss::SoftmaxXent).unwrap().loss
    };
    for k in 0..theta.len() {
        let mut t = theta.clone();
        t[k] += H;
        let lh = loss_at(&mut work, &t);
        t[k] = theta[k] - H;
        let ll = loss_at(&mut work, &t);
        grad[k] = (lh - ll) / (2.0 * H);
    }
    grad
}

#[test]
fn derivatives_match_central_differences_on_smooth_probes() {
    let mut worst_jac = 0.0f64;
    let mut worst_par = 0.0f64;
    for probe in 0..100u64 {
        let act = if probe % 2 == 0 {
            ActivationKind::Tanh
        } else {
            ActivationKind::Sigmoid
        };
        let net = random_network::<f64>(
            &NetSpec::mlp(&[3, 8, 6, 2], act),
            1.0,
            rng::derive_indexed(9000, probe),
        );
        let mut r = rng::chunk_stream(9001, "probe_point", probe);
        let x: Vec<f64> = (0..3).map(|_| 0.8 * f64::standard_normal(&mut r)).collect();

        let jac = net.jacobian_input(&x).unwrap();
        let flat: Vec<f64> = jac.matrix.iter().copied().collect();
        let jerr = rel_err(&flat, &numeric_jacobian(&net, &x));
        worst_jac = worst_jac.max(jerr);
        assert!(jerr <= TOL, "probe {probe}: jacobian rel err {jerr:e}");

        let target = Target::Class((probe % 2) as usize);
        let g = net.gradient_params(&x, &target, Loss::SoftmaxXent).unwrap();
        let perr = rel_err(&g, &numeric_param_gradient(&net, &x, &target));
        worst_par = worst_par.max(perr);
        assert!(perr <= TOL, "probe {probe}: parameter-gradient rel err {perr:e}");
    }
    println!("worst jacobian rel err {worst_jac:e}, worst parameter rel err {worst_par:e}");
}
