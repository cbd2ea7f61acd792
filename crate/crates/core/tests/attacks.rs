//! Adversarial search on trained fixtures: budget discipline, method
//! ordering, and the width-versus-vulnerability comparison.

use catgeo::learn::{
    accuracy, attack_success_rate, pgd, train_sgd, two_moons_relu_fixture, AttackMethod,
    PerturbNorm,
};
use catgeo::net::Loss;

#[test]
fn trained_fixture_is_attackable_within_budget() {
    let fix = two_moons_relu_fixture::<f64>();
    let data = fix.dataset();
    let (net, _) = fix.train().unwrap();
    let delta = 0.1;

    let rate_l2 = attack_success_rate(
        &net,
        &data,
        AttackMethod::Pgd {
            steps: 40,
            step_size: delta / 8.0,
            norm: PerturbNorm::L2,
        },
        delta,
        0.99,
        500,
    )
    .unwrap();
    assert!(rate_l2.rho > 0.0, "no adversarial points found");

    // Budget-matched comparison: fgsm takes one full-size sign step, so the
    // shared feasible set is the L-infinity ball.
    let rate_pgd = attack_success_rate(
        &net,
        &data,
        AttackMethod::Pgd {
            steps: 40,
            step_size: delta / 8.0,
            norm: PerturbNorm::Linf,
        },
        delta,
        0.99,
        500,
    )
    .unwrap();
    let rate_fgsm =
        attack_success_rate(&net, &data, AttackMethod::Fgsm, delta, 0.99, 500).unwrap();
    println!(
        "l2 rate {:.3} ({}/{}), linf pgd rate {:.3}, fgsm rate {:.3}",
        rate_l2.rho, rate_l2.hits, rate_l2.n, rate_pgd.rho, rate_fgsm.rho
    );
    assert!(rate_pgd.rho >= rate_fgsm.rho, "pgd weaker than fgsm");

    // Every individual attack respects the perturbation budget.
    let classes = data.classes().unwrap();
    for i in 0..data.len() {
        let res = pgd(
            &net,
            data.input_row(i),
            classes[i],
            delta,
            20,
            delta / 4.0,
            PerturbNorm::L2,
            900 + i as u64,
        )
        .unwrap();
        assert!(res.perturbation_norm <= delta + 1e-9, "budget broken at {i}");
    }
}

#[test]
fn wider_net_vulnerability_is_reported_next_to_narrow() {
    let fix = two_moons_relu_fixture::<f64>();
    let data = fix.dataset();
    let delta = 0.1;
    let mut rates = Vec::new();
    for (tag, hidden) in [("narrow", vec![8]), ("wide", vec![128, 128])] {
        let mut spec = fix.clone();
        spec.hidden = hidden;
        let (net, _) = spec.train().unwrap();
        let acc = accuracy(&net, &data).unwrap();
        assert!(acc >= 0.9, "{tag} net failed to train: accuracy {acc}");
        let rate = attack_success_rate(
            &net,
            &data,
            AttackMethod::Pgd {
                steps: 20,
                step_size: delta / 4.0,
                norm: PerturbNorm::L2,
            },
            delta,
            0.99,
            501,
        )
        .unwrap();
        println!(
            "{tag}: accuracy {acc:.3}, attack rate {:.3} [{:.3}, {:.3}]",
            rate.rho, rate.ci_low, rate.ci_high
        );
        rates.push(rate.rho);
    }
    // The capability-vulnerability direction is reported, not asserted:
    // at this scale the two rates are often statistically indistinguishable.
    println!("narrow {:.3} vs wide {:.3}", rates[0], rates[1]);
}

#[test]
fn sgd_then_pgd_round_trip_stays_deterministic() {
    let fix = two_moons_relu_fixture::<f64>();
    let data = fix.dataset();
    let (net, _) = train_sgd(
        &fix.untrained(),
        &data,
        Loss::SoftmaxXent,
        fix.lr,
        20,
        fix.batch,
        fix.train_seed,
    )
    .unwrap();
    let run = || {
        attack_success_rate(
            &net,
            &data,
            AttackMethod::Pgd {
                steps: 10,
                step_size: 0.025,
                norm: PerturbNorm::L2,
            },
            0.1,
            0.99,
            7,
        )
        .unwrap()
    };
    let a = run();
    let b = run();
    assert_eq!(a, b);
}
