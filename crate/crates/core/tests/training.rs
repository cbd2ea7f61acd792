//! End-to-end training runs: fixture accuracy, teacher distillation, and
//! the Fisher pathology comparison between trained and untrained nets.

use catgeo::fisher::pathology_report;
use catgeo::learn::{
    accuracy, make_dataset, train_sgd, two_moons_relu_fixture, two_moons_tanh_fixture,
    DatasetKind,
};
use catgeo::net::{random_network, ActivationKind, Loss, NetSpec};

#[test]
fn relu_two_moons_fixture_reaches_advertised_accuracy() {
    let fix = two_moons_relu_fixture::<f64>();
    let data = fix.dataset();
    let (trained, curve) = fix.train().unwrap();
    let acc = accuracy(&trained, &data).unwrap();
    println!("fixture {} train accuracy {acc:.3}", fix.name);
    assert!(acc >= 0.9, "train accuracy {acc}");
    assert!(curve.len() == fix.epochs);
    // Learned something: the loss curve ends well below where it started.
    assert!(curve.last().unwrap() < &(0.5 * curve[0]));
}

#[test]
fn training_is_reproducible_bit_for_bit() {
    let fix = two_moons_relu_fixture::<f64>();
    let (a, _) = fix.train().unwrap();
    let (b, _) = fix.train().unwrap();
    assert_eq!(a.flatten_params(), b.flatten_params());
}

#[test]
fn student_matches_a_random_teacher() {
    let teacher = random_network::<f64>(
        &NetSpec::mlp(&[2, 4, 2], ActivationKind::Tanh),
        1.5,
        42,
    );
    let data = make_dataset(DatasetKind::RandomTeacher { teacher: &teacher }, 2000, 43).unwrap();
    let student = random_network::<f64>(&NetSpec::mlp(&[2, 16, 16, 2], ActivationKind::Tanh), 1.0, 44);
    let (trained, _) = train_sgd(&student, &data, Loss::SoftmaxXent, 0.1, 300, 32, 45).unwrap();
    let agreement = accuracy(&trained, &data).unwrap();
    println!("teacher agreement {agreement:.3}");
    assert!(agreement >= 0.95, "agreement {agreement}");
}

#[test]
fn training_sharpens_the_fisher_spectrum() {
    let fix = two_moons_tanh_fixture::<f64>();
    let data = fix.dataset();
    let untrained = fix.untrained();
    let (trained, _) = fix.train().unwrap();
    assert!(accuracy(&trained, &data).unwrap() >= 0.9);

    let (spec_untrained, _) =
        pathology_report(&untrained, &data, fix.loss, 1e-6, 1e-6).unwrap();
    let (spec_trained, natgrad) =
        pathology_report(&trained, &data, fix.loss, 1e-6, 1e-6).unwrap();
    println!(
        "condition ratio untrained {:.3e}, trained {:.3e}; trained explosion index {:.3e}",
        spec_untrained.condition_ratio, spec_trained.condition_ratio, natgrad.explosion_index
    );
    println!(
        "near-zero fraction untrained {:.3}, trained {:.3}",
        spec_untrained.near_zero_fraction, spec_trained.near_zero_fraction
    );
    assert!(spec_trained.condition_ratio >= 1e3);
    assert!(spec_trained.condition_ratio > spec_untrained.condition_ratio);
}
