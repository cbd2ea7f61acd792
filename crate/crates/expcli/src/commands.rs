//! Subcommand implementations: each turns a resolved config into library
//! calls and metric rows, then the shared runner writes the report.

use std::fmt::Write as _;
use std::fs;
use std::path::PathBuf;

use catgeo::bounds::{
    self, AlphaMode, BoundConstants, BoundReport, C0Mode, DepthModel, FitObservation,
};
use catgeo::density::{self, Criterion, DensityEstimate, McOptions, OutputNorm, SweepConfig};
use catgeo::fisher;
use catgeo::learn::{
    accuracy, attack_success_rate, make_dataset, mutual_information_plugin, train_sgd,
    two_moons_relu_fixture, two_moons_tanh_fixture, AttackMethod, Dataset, DatasetKind,
    FixtureSpec, PerturbNorm,
};
use catgeo::net::{self, ActivationKind, Domain, Loss, NetSpec, Network};
use catgeo::region;
use catgeo::rng;
use catgeo::Real;

use crate::config::Resolved;
use crate::errors::{self, CliError, CliResult};
use crate::report::{self, Report, Row, Value};

/// Echo to stdout, ignoring a closed pipe: the report file is the real
/// artifact, so `expcli ... | head` must not abort the run.
macro_rules! say {
    ($($arg:tt)*) => {{
        use std::io::Write as _;
        let _ = writeln!(std::io::stdout(), $($arg)*);
    }};
}

/// Execute the experiment named by the config and write its report.
pub fn run(r: &Resolved, supplied: &[String]) -> CliResult<PathBuf> {
    let mut rep = Report::new(&r.experiment, &r.hash(), r.pairs());
    match r.experiment.as_str() {
        "density" => density(r, &mut rep)?,
        "instability" => instability(r, &mut rep)?,
        "safe-measure" => safe_measure(r, &mut rep)?,
        "sweep" => sweep(r, &mut rep)?,
        "bounds" => bounds_cmd(r, &mut rep)?,
        "sandwich" => sandwich(r, &mut rep)?,
        "fim" => fim(r, &mut rep)?,
        "train" => train(r, supplied, &mut rep)?,
        "attack" => attack(r, &mut rep)?,
        "mi" => mi(r, &mut rep)?,
        "oracle-check" => oracle_check(r, &mut rep)?,
        "reproduce" => reproduce(r, &mut rep)?,
        "fit-constants" => fit_constants(r, &mut rep)?,
        other => unreachable!("unknown subcommand `{other}`"),
    }
    let path = rep.write(&r.out_dir, &r.format).map_err(errors::io)?;
    for row in &rep.rows {
        say!("{}", row_line(row));
    }
    say!("report: {}", path.display());
    Ok(path)
}

fn row_line(row: &Row) -> String {
    let mut s = format!("{} = {}", row.metric, row.value.text());
    if let (Some(lo), Some(hi)) = (row.ci_low, row.ci_high) {
        write!(s, "  ci [{lo:e}, {hi:e}]").unwrap();
    }
    if !row.flags.is_empty() {
        write!(s, "  ({})", row.flags.join(";")).unwrap();
    }
    s
}

fn vreal(v: f64) -> CliResult<Value> {
    Value::real(v).map_err(errors::numeric)
}

fn load_net(path: &str) -> CliResult<Network<f64>> {
    let text = fs::read_to_string(path).map_err(|e| errors::input_file(path, e))?;
    net::from_netv1(&text).map_err(|e| errors::precondition(format!("{path}: {e}")))
}

fn load_data(path: &str) -> CliResult<Dataset<f64>> {
    let text = fs::read_to_string(path).map_err(|e| errors::input_file(path, e))?;
    Dataset::from_csv(&text).map_err(|e| errors::precondition(format!("{path}: {e}")))
}

fn origin_domain(dim: usize, radius: f64) -> CliResult<Domain<f64>> {
    if !(radius > 0.0) {
        return Err(CliError::Precondition("radius must be positive".into()));
    }
    Ok(Domain::ball(vec![0.0; dim], radius))
}

/// `0` in a step/size parameter means "derive from delta".
fn auto(value: f64, fallback: f64) -> f64 {
    if value > 0.0 {
        value
    } else {
        fallback
    }
}

fn output_norm(name: &str) -> OutputNorm {
    match name {
        "linf" => OutputNorm::Linf,
        _ => OutputNorm::L2,
    }
}

fn perturb_norm(name: &str) -> PerturbNorm {
    match name {
        "linf" => PerturbNorm::Linf,
        _ => PerturbNorm::L2,
    }
}

fn loss_of(name: &str) -> Loss {
    match name {
        "mse" => Loss::Mse,
        _ => Loss::SoftmaxXent,
    }
}

/// The squared loss needs vector targets; class-labeled data is converted.
fn loss_view(data: Dataset<f64>, loss: Loss) -> CliResult<Dataset<f64>> {
    if loss == Loss::Mse && data.classes().is_some() {
        data.one_hot().map_err(errors::from_learn)
    } else {
        Ok(data)
    }
}

fn mc_options(r: &Resolved) -> McOptions<f64> {
    let mut opts = McOptions::default();
    opts.confidence = r.f64("confidence");
    if r.get("probes").is_some() {
        opts.probe_directions = r.usize("probes");
    }
    if r.get("inner-budget").is_some() {
        opts.inner_budget = r.usize("inner-budget");
    }
    opts
}

fn push_estimate(
    rep: &mut Report,
    metric: &str,
    est: &DensityEstimate<f64>,
    flags: &[String],
) -> CliResult<()> {
    let mut row = Row::new(metric, vreal(est.rho)?).with_ci(est.ci_low, est.ci_high);
    for f in flags {
        row = row.with_flag(f);
    }
    if est.is_lower_bound {
        row = row.with_flag("one-sided");
    }
    rep.push(row);
    rep.push(Row::new(&format!("{metric}_hits"), Value::Int(est.hits)));
    Ok(())
}

fn density(r: &Resolved, rep: &mut Report) -> CliResult<()> {
    let network = load_net(r.text("net"))?;
    let domain = origin_domain(network.input_dim(), r.f64("radius"))?;
    let delta = r.f64("delta");
    let est = density::estimate_kink_density(
        &network,
        &domain,
        delta,
        r.u64("n"),
        r.u64("seed"),
        &mc_options(r),
    )
    .map_err(errors::from_density)?;
    push_estimate(rep, "rho", &est, &["mc".to_string()])?;
    if r.boolean("exact") {
        let step = auto(r.f64("grid-step"), delta / 20.0);
        let exact = region::exact_kink_density(&network, &domain, delta, step)
            .map_err(errors::precondition)?;
        rep.push(Row::new("rho_exact", vreal(exact)?).with_flag("grid"));
        let inside = est.ci_low <= exact && exact <= est.ci_high;
        rep.push(Row::new("exact_inside_mc_ci", Value::Bool(inside)));
    }
    Ok(())
}

fn instability(r: &Resolved, rep: &mut Report) -> CliResult<()> {
    let network = load_net(r.text("net"))?;
    let domain = origin_domain(network.input_dim(), r.f64("radius"))?;
    let est = density::estimate_output_instability(
        &network,
        &domain,
        r.f64("eps"),
        r.f64("delta"),
        r.u64("n"),
        r.u64("seed"),
        output_norm(r.text("norm")),
        &mc_options(r),
    )
    .map_err(errors::from_density)?;
    push_estimate(rep, "rho_unstable", &est, &[format!("norm={}", r.text("norm"))])
}

fn safe_measure(r: &Resolved, rep: &mut Report) -> CliResult<()> {
    let network = load_net(r.text("net"))?;
    let domain = origin_domain(network.input_dim(), r.f64("radius"))?;
    let criterion = match r.text("criterion") {
        "jump" => {
            let eps = r.f64("eps");
            if !(eps > 0.0) {
                return Err(CliError::Config("--criterion jump requires --eps > 0".into()));
            }
            Criterion::OutputJump { eps, norm: output_norm(r.text("norm")) }
        }
        _ => Criterion::Kink,
    };
    let est = density::estimate_safe_measure(
        &network,
        &domain,
        &criterion,
        r.f64("delta"),
        r.u64("n"),
        r.u64("seed"),
        &mc_options(r),
    )
    .map_err(errors::from_density)?;
    push_estimate(rep, "safe_measure", &est, &[format!("criterion={}", r.text("criterion"))])
}

fn sweep(r: &Resolved, rep: &mut Report) -> CliResult<()> {
    let domain = origin_domain(r.usize("dim"), r.f64("radius"))?;
    let mut cfg = SweepConfig::new(
        r.ulist("widths"),
        r.usize("trials"),
        r.f64("delta"),
        r.f64("threshold"),
        domain,
    );
    cfg.samples_per_net = r.u64("samples");
    cfg.weight_scale = r.f64("weight-scale");
    cfg.seed = r.u64("seed");
    cfg.confidence = r.f64("confidence");
    let result = density::genericity_sweep(&cfg).map_err(errors::from_density)?;
    for row in &result.rows {
        rep.push(
            Row::new("fraction_above", vreal(row.fraction_above)?)
                .with_ci(row.ci_low, row.ci_high)
                .with_flag(&format!("width={}", row.width)),
        );
    }
    rep.push(Row::new("mann_kendall_s", vreal(result.trend.s as f64)?));
    rep.push(Row::new("mann_kendall_z", vreal(result.trend.z)?));
    rep.push(Row::new("p_increasing", vreal(result.trend.p_increasing)?));
    rep.push(Row::new("trend_significant", Value::Bool(result.trend.p_increasing < 0.05)));
    Ok(())
}

fn need_f64(r: &Resolved, key: &str, formula: &str) -> CliResult<f64> {
    r.maybe_f64(key)
        .ok_or_else(|| CliError::Config(format!("formula `{formula}` requires --{key}")))
}

fn alpha_mode(r: &Resolved) -> AlphaMode {
    match r.text("alpha-mode") {
        "log-pieces" => AlphaMode::LogPieces { pieces: r.u64("pieces") },
        _ => AlphaMode::GammaFormula,
    }
}

fn constants_from(r: &Resolved) -> CliResult<BoundConstants<f64>> {
    let c = r.flist("c");
    let c = if c.is_empty() { BoundConstants::<f64>::default().c } else { c };
    BoundConstants::new(r.f64("k-const"), alpha_mode(r), c).map_err(errors::from_bound)
}

fn push_bound(rep: &mut Report, b: &BoundReport<f64>) -> CliResult<()> {
    // The linear value saturates at 0 or infinity when the exponent leaves
    // f64 range; the log-domain evaluation stays exact, so report that.
    let saturated = (b.value == 0.0 && b.log10_value < -300.0)
        || (b.value.is_infinite() && b.log10_value > 300.0);
    let value = if saturated {
        Value::Overflow { log10: b.log10_value }
    } else {
        vreal(b.value)?
    };
    let mut row = Row::new(b.formula, value);
    for (k, v) in &b.inputs {
        row = row.with_flag(&format!("{k}={v}"));
    }
    if !b.note.is_empty() {
        row = row.with_flag(&format!("note:{}", b.note));
    }
    rep.push(row);
    if b.log10_value.is_finite() {
        rep.push(Row::new("log10_value", Value::Real(b.log10_value)));
    }
    if let Some(lc) = b.log10_complement {
        if lc.is_finite() {
            rep.push(Row::new("log10_complement", Value::Real(lc)));
        }
    }
    Ok(())
}

fn bounds_cmd(r: &Resolved, rep: &mut Report) -> CliResult<()> {
    let d = r.u64("d") as u32;
    let delta = r.f64("delta");
    match r.text("formula") {
        "alpha" => {
            let a: f64 = bounds::alpha(d, alpha_mode(r)).map_err(errors::from_bound)?;
            rep.push(Row::new("alpha", vreal(a)?).with_flag(&format!("d={d}")));
        }
        "relu" => {
            let b = bounds::relu_density_lower_bound(
                r.u64("n-neurons"),
                d,
                delta,
                r.f64("radius"),
                &constants_from(r)?,
            )
            .map_err(errors::from_bound)?;
            push_bound(rep, &b)?;
        }
        "asymptotic" => {
            let c = need_f64(r, "complexity", "asymptotic")?;
            let b = bounds::asymptotic_density_bound(c, delta, d).map_err(errors::from_bound)?;
            push_bound(rep, &b)?;
        }
        "safe-measure" => {
            let c = need_f64(r, "complexity", "safe-measure")?;
            let b = bounds::safe_measure_upper_bound(c, delta, d, &constants_from(r)?)
                .map_err(errors::from_bound)?;
            push_bound(rep, &b)?;
        }
        "c0" => {
            let rho_max = need_f64(r, "rho-max", "c0")?;
            let mode = match r.text("mode") {
                "exact_log" => C0Mode::ExactLog,
                _ => C0Mode::PaperLinear,
            };
            let b = bounds::max_safe_complexity(rho_max, delta, d, mode)
                .map_err(errors::from_bound)?;
            push_bound(rep, &b)?;
        }
        "depth" => {
            let rho = need_f64(r, "rho", "depth")?;
            if !(0.0..=1.0).contains(&rho) {
                return Err(CliError::Precondition("--rho must lie in [0, 1]".into()));
            }
            let layers = r.u64("layers") as u32;
            if layers < 1 {
                return Err(CliError::Precondition("--layers must be at least 1".into()));
            }
            let model = match r.text("depth-model") {
                "paper_power" => DepthModel::PaperPower,
                _ => DepthModel::UnionIndependent,
            };
            let v = bounds::depth_amplification(rho, layers, model);
            rep.push(
                Row::new("rho_deep", vreal(v)?)
                    .with_flag(r.text("depth-model"))
                    .with_flag(&format!("layers={layers}")),
            );
        }
        other => unreachable!("unknown formula `{other}`"),
    }
    Ok(())
}

fn sandwich(r: &Resolved, rep: &mut Report) -> CliResult<()> {
    let s = bounds::sandwich_report(
        r.f64("c"),
        r.f64("rho-max"),
        r.f64("delta"),
        r.u64("d") as u32,
        r.f64("i-bits"),
        r.f64("bits-per-param"),
    )
    .map_err(errors::from_bound)?;
    rep.push(Row::new("c0", vreal(s.c0.value)?));
    rep.push(Row::new("c_actual", vreal(s.c_actual)?));
    rep.push(Row::new("c_min_proxy", vreal(s.c_min_proxy)?));
    rep.push(Row::new("log10_ratio", vreal(s.log10_ratio)?));
    rep.push(Row::new("sandwich_holds", Value::Bool(s.sandwich_holds)));
    say!(
        "complexity sandwich (d={}, delta={:e}, rho_max={:e})",
        r.u64("d"),
        r.f64("delta"),
        r.f64("rho-max")
    );
    say!("  safe ceiling      C0    = {:e}", s.c0.value);
    say!("  actual complexity C     = {:e}", s.c_actual);
    say!("  usefulness floor  C_min = {:e}", s.c_min_proxy);
    say!("  log10(C / C0)           = {:.3}", s.log10_ratio);
    say!(
        "  floor exceeds ceiling:    {}",
        if s.sandwich_holds { "yes (no safe useful network at this budget)" } else { "no" }
    );
    Ok(())
}

fn fim(r: &Resolved, rep: &mut Report) -> CliResult<()> {
    let network = load_net(r.text("net"))?;
    let loss = loss_of(r.text("loss"));
    let data = loss_view(load_data(r.text("data"))?, loss)?;
    let (spectrum, natgrad) =
        fisher::pathology_report(&network, &data, loss, r.f64("lambda"), r.f64("tau"))
            .map_err(errors::from_fisher)?;
    rep.push(Row::new("trace", vreal(spectrum.trace)?));
    rep.push(Row::new("lambda_max", vreal(spectrum.lambda_max)?));
    rep.push(Row::new("lambda_min_damped", vreal(spectrum.lambda_min_damped)?));
    rep.push(Row::new("condition_ratio", vreal(spectrum.condition_ratio)?));
    rep.push(
        Row::new("near_zero_fraction", vreal(spectrum.near_zero_fraction)?)
            .with_flag(&format!("tau={:e}", spectrum.tau)),
    );
    rep.push(Row::new("grad_norm", vreal(natgrad.grad_norm)?));
    rep.push(Row::new("natgrad_norm", vreal(natgrad.natgrad_norm)?));
    rep.push(Row::new("explosion_index", vreal(natgrad.explosion_index)?));
    rep.push(Row::new("lambda_used", vreal(natgrad.lambda)?));
    rep.push(Row::new("cg_iterations", Value::Int(natgrad.iterations as u64)));
    if r.text("spectrum") == "full" {
        for (i, ev) in spectrum.eigenvalues.iter().enumerate() {
            rep.push(Row::new(&format!("eigenvalue_{i:04}"), vreal(*ev)?));
        }
    }
    Ok(())
}

fn activation_of(name: &str) -> ActivationKind<f64> {
    match name {
        "tanh" => ActivationKind::Tanh,
        "sigmoid" => ActivationKind::Sigmoid,
        "leaky" => ActivationKind::LeakyRelu(0.01),
        _ => ActivationKind::Relu,
    }
}

fn train(r: &Resolved, supplied: &[String], rep: &mut Report) -> CliResult<()> {
    let fixture = r.text("fixture").to_string();
    if !fixture.is_empty() {
        const FROZEN: &[&str] = &[
            "data", "dataset", "data-n", "noise", "data-seed", "arch", "act", "loss",
            "weight-scale", "init-seed", "lr", "epochs", "batch", "seed",
        ];
        if let Some(k) = FROZEN.iter().find(|k| supplied.iter().any(|s| s == *k)) {
            return Err(CliError::Config(format!(
                "--fixture names a frozen setup; drop --{k} or drop --fixture"
            )));
        }
        let fix: FixtureSpec<f64> = match fixture.as_str() {
            "two-moons-relu" => two_moons_relu_fixture(),
            _ => two_moons_tanh_fixture(),
        };
        let data = fix.dataset();
        let (trained, curve) = fix.train().map_err(errors::from_learn)?;
        return finish_train(r, rep, &trained, &curve, &data);
    }

    let data = if !r.text("data").is_empty() {
        if r.text("dataset") != "none" {
            return Err(CliError::Config("--data and --dataset are exclusive".into()));
        }
        load_data(r.text("data"))?
    } else {
        match r.text("dataset") {
            "two-moons" => make_dataset(
                DatasetKind::TwoMoons { noise: r.f64("noise") },
                r.usize("data-n"),
                r.u64("data-seed"),
            )
            .map_err(errors::from_learn)?,
            "xor" => make_dataset(DatasetKind::XorGrid, r.usize("data-n"), r.u64("data-seed"))
                .map_err(errors::from_learn)?,
            _ => return Err(CliError::Config("need --fixture, --data, or --dataset".into())),
        }
    };
    let loss = loss_of(r.text("loss"));
    let data = loss_view(data, loss)?;
    let arch = r.ulist("arch");
    if arch.len() < 2 {
        return Err(CliError::Config("--arch needs at least input and output widths".into()));
    }
    let net0 = net::random_network(
        &NetSpec::mlp(&arch, activation_of(r.text("act"))),
        r.f64("weight-scale"),
        r.u64("init-seed"),
    );
    let (trained, curve) = train_sgd(
        &net0,
        &data,
        loss,
        r.f64("lr"),
        r.usize("epochs"),
        r.usize("batch"),
        r.u64("seed"),
    )
    .map_err(errors::from_learn)?;
    finish_train(r, rep, &trained, &curve, &data)
}

fn finish_train(
    r: &Resolved,
    rep: &mut Report,
    trained: &Network<f64>,
    curve: &[f64],
    data: &Dataset<f64>,
) -> CliResult<()> {
    if let Some(&first) = curve.first() {
        rep.push(Row::new("first_loss", vreal(first)?));
    }
    if let Some(&last) = curve.last() {
        rep.push(Row::new("final_loss", vreal(last)?));
    }
    rep.push(Row::new("accuracy", vreal(accuracy(trained, data).map_err(errors::from_learn)?)?));
    rep.push(Row::new("epochs_run", Value::Int(curve.len() as u64)));
    rep.push(Row::new("params", Value::Int(trained.param_count() as u64)));

    let net_path = if r.text("net-out").is_empty() {
        r.out_dir.join(format!("train-{}.netv1", r.hash()))
    } else {
        PathBuf::from(r.text("net-out"))
    };
    report::write_atomic(&net_path, &net::to_netv1(trained)).map_err(errors::io)?;
    let shown = net_path
        .file_name()
        .map(|f| f.to_string_lossy().into_owned())
        .unwrap_or_default();
    rep.push(Row::new("net_file", Value::Text(shown)));

    if !r.text("data-out").is_empty() {
        let data_path = PathBuf::from(r.text("data-out"));
        report::write_atomic(&data_path, &data.to_csv()).map_err(errors::io)?;
        let shown = data_path
            .file_name()
            .map(|f| f.to_string_lossy().into_owned())
            .unwrap_or_default();
        rep.push(Row::new("data_file", Value::Text(shown)));
    }
    Ok(())
}

fn attack(r: &Resolved, rep: &mut Report) -> CliResult<()> {
    let network = load_net(r.text("net"))?;
    let data = load_data(r.text("data"))?;
    let delta = r.f64("delta");
    let method = match r.text("method") {
        "fgsm" => AttackMethod::Fgsm,
        _ => AttackMethod::Pgd {
            steps: r.usize("steps"),
            step_size: auto(r.f64("step-size"), delta / 8.0),
            norm: perturb_norm(r.text("norm")),
        },
    };
    let est = attack_success_rate(&network, &data, method, delta, r.f64("confidence"), r.u64("seed"))
        .map_err(errors::from_learn)?;
    push_estimate(
        rep,
        "attack_rate",
        &est,
        &[format!("method={}", r.text("method")), format!("norm={}", r.text("norm"))],
    )?;
    rep.push(Row::new("attacked_points", Value::Int(est.n)));
    Ok(())
}

fn mi(r: &Resolved, rep: &mut Report) -> CliResult<()> {
    let data = load_data(r.text("data"))?;
    let est = mutual_information_plugin(&data, r.usize("bins")).map_err(errors::from_learn)?;
    rep.push(Row::new("mi_bits", vreal(est.i_xy_bits)?));
    rep.push(Row::new("bias_bound_bits", vreal(est.bias_bound_bits)?));
    rep.push(Row::new("h_x_bits", vreal(est.h_x_bits)?));
    rep.push(Row::new("h_y_bits", vreal(est.h_y_bits)?));
    rep.push(Row::new("cells", Value::Int(est.cells as u64)));
    rep.push(Row::new("classes", Value::Int(est.class_count as u64)));
    rep.push(Row::new("samples", Value::Int(est.n as u64)));
    Ok(())
}

fn oracle_check(r: &Resolved, rep: &mut Report) -> CliResult<()> {
    let count = r.u64("count");
    let max_neurons = r.u64("max-neurons").max(1);
    let delta = r.f64("delta");
    let step = auto(r.f64("grid-step"), delta / 20.0);
    let seed = r.u64("seed");
    let domain = origin_domain(2, r.f64("radius"))?;
    let opts = mc_options(r);
    let mut agree = 0u64;
    for i in 0..count {
        let width = 1 + rng::derive_indexed(rng::derive_labeled(seed, "oracle_width"), i) % max_neurons;
        let net_seed = rng::derive_indexed(rng::derive_labeled(seed, "oracle_net"), i);
        let mc_seed = rng::derive_indexed(rng::derive_labeled(seed, "oracle_mc"), i);
        let network = net::random_network(
            &NetSpec::depth1(2, width as usize, 1, ActivationKind::Relu),
            r.f64("weight-scale"),
            net_seed,
        );
        let est = density::estimate_kink_density(&network, &domain, delta, r.u64("n"), mc_seed, &opts)
            .map_err(errors::from_density)?;
        let exact = region::exact_kink_density(&network, &domain, delta, step)
            .map_err(errors::precondition)?;
        let inside = est.ci_low <= exact && exact <= est.ci_high;
        agree += inside as u64;
        rep.push(
            Row::new("rho_mc", vreal(est.rho)?)
                .with_ci(est.ci_low, est.ci_high)
                .with_flag(&format!("net={i}"))
                .with_flag(&format!("width={width}")),
        );
        rep.push(Row::new("rho_exact", vreal(exact)?).with_flag(&format!("net={i}")));
        rep.push(Row::new("inside_ci", Value::Bool(inside)).with_flag(&format!("net={i}")));
    }
    rep.push(Row::new("agree_count", Value::Int(agree)));
    rep.push(Row::new("nets", Value::Int(count)));
    Ok(())
}

enum Tol {
    Abs(f64),
    Rel(f64),
}

fn verdict(rep: &mut Report, computed: f64, claimed: f64, tol: Tol) -> CliResult<bool> {
    let (pass, label) = match tol {
        Tol::Abs(t) => ((computed - claimed).abs() <= t, format!("abs:{t:e}")),
        Tol::Rel(t) => ((computed - claimed).abs() <= t * claimed.abs(), format!("rel:{t:e}")),
    };
    rep.push(Row::new("computed", vreal(computed)?));
    rep.push(Row::new("claimed", vreal(claimed)?));
    rep.push(Row::new("tolerance", Value::Text(label)));
    rep.push(Row::new("pass", Value::Bool(pass)));
    Ok(pass)
}

fn reproduce(r: &Resolved, rep: &mut Report) -> CliResult<()> {
    let pass = match r.text("id") {
        "alpha_d2" => {
            let computed: f64 =
                bounds::alpha(2, AlphaMode::GammaFormula).map_err(errors::from_bound)?;
            verdict(rep, computed, 0.347, Tol::Abs(1e-3))?
        }
        "c0_2e5" => {
            let b = bounds::max_safe_complexity(0.01, 1e-3, 2, C0Mode::PaperLinear)
                .map_err(errors::from_bound)?;
            verdict(rep, b.value, 2.8e-5, Tol::Rel(0.05))?
        }
        "gpt4_margin" => {
            let s = bounds::sandwich_report(1e12, 0.01, 1e-3, 2, 0.0, 2.0)
                .map_err(errors::from_bound)?;
            verdict(rep, s.log10_ratio, 17.0, Tol::Abs(0.6))?
        }
        "resnet_margin" => {
            let s = bounds::sandwich_report(1e8, 0.01, 1e-3, 2, 0.0, 2.0)
                .map_err(errors::from_bound)?;
            verdict(rep, s.log10_ratio, 13.0, Tol::Abs(0.6))?
        }
        "relu_043" => relu_043(r, rep)?,
        other => unreachable!("unknown id `{other}`"),
    };
    say!("{}: {}", r.text("id"), if pass { "PASS" } else { "FAIL" });
    Ok(())
}

/// Depth-1 relu net whose kink set is `planes` random lines through the
/// unit disk: unit normals at uniform angles, offsets uniform in (-1, 1).
fn through_disk_net(planes: u64, seed: u64) -> CliResult<Network<f64>> {
    let mut rg = rng::stream(seed, "through_disk");
    let mut text = String::from("NETV1 d=2\n");
    writeln!(text, "LAYER out={planes} in=2 act=relu").unwrap();
    let mut biases = Vec::with_capacity(planes as usize);
    for _ in 0..planes {
        let theta = f64::uniform_01(&mut rg) * std::f64::consts::TAU;
        let offset = 2.0 * f64::uniform_01(&mut rg) - 1.0;
        writeln!(text, "{:e} {:e}", theta.cos(), theta.sin()).unwrap();
        biases.push(format!("{:e}", -offset));
    }
    writeln!(text, "{}", biases.join(" ")).unwrap();
    writeln!(text, "LAYER out=1 in={planes} act=linear").unwrap();
    writeln!(text, "{}", vec!["1"; planes as usize].join(" ")).unwrap();
    writeln!(text, "0").unwrap();
    net::from_netv1(&text).map_err(|e| errors::precondition(format!("generated net: {e}")))
}

fn relu_043(r: &Resolved, rep: &mut Report) -> CliResult<bool> {
    let planes = r.u64("planes");
    if planes == 0 {
        return Err(CliError::Config("--planes must be positive".into()));
    }
    let delta = r.f64("delta");
    let network = through_disk_net(planes, r.u64("seed"))?;
    let domain = origin_domain(2, 1.0)?;
    let rho = region::exact_kink_density(&network, &domain, delta, delta / 10.0)
        .map_err(errors::precondition)?;
    let bound = bounds::relu_density_lower_bound(planes, 2, delta, 1.0, &BoundConstants::default())
        .map_err(errors::from_bound)?;
    let in_band = (0.2..=0.8).contains(&rho);
    let bound_ok = (bound.value - 0.43).abs() <= 0.05;
    rep.push(Row::new("rho_empirical", vreal(rho)?).with_flag("exact-grid"));
    rep.push(Row::new("bound_fitted", vreal(bound.value)?));
    rep.push(Row::new("claimed", vreal(0.43)?));
    rep.push(Row::new("empirical_in_band", Value::Bool(in_band)).with_flag("band=[2e-1,8e-1]"));
    rep.push(Row::new("bound_within_tolerance", Value::Bool(bound_ok)).with_flag("tol=5e-2"));
    rep.push(Row::new("pass", Value::Bool(in_band && bound_ok)));
    Ok(in_band && bound_ok)
}

fn fit_constants(r: &Resolved, rep: &mut Report) -> CliResult<()> {
    let widths = r.ulist("widths");
    let per = r.u64("nets-per-width");
    let delta = r.f64("delta");
    let radius = r.f64("radius");
    let resolution = auto(r.f64("resolution"), delta / 10.0);
    let seed = r.u64("seed");
    let domain = origin_domain(2, radius)?;
    let mut observations = Vec::new();
    for (wi, &w) in widths.iter().enumerate() {
        for j in 0..per {
            let net_seed = rng::derive_indexed(
                rng::derive_labeled(seed, "fit_net"),
                (wi as u64) * 1_000 + j,
            );
            let network = net::random_network(
                &NetSpec::depth1(2, w, 1, ActivationKind::Relu),
                r.f64("weight-scale"),
                net_seed,
            );
            let rho = region::exact_kink_density(&network, &domain, delta, resolution)
                .map_err(errors::precondition)?;
            let mut row =
                Row::new("rho_exact", vreal(rho)?).with_flag(&format!("width={w}")).with_flag(&format!("net={j}"));
            if rho >= 0.999 {
                // -ln(1-rho) blows up as rho -> 1; a saturated observation
                // carries no information about the constants.
                row = row.with_flag("saturated:excluded-from-fit");
            } else {
                observations.push(FitObservation { n_neurons: w as u64, rho });
            }
            rep.push(row);
        }
    }
    let anchor = r
        .boolean("anchor")
        .then(|| FitObservation { n_neurons: r.u64("anchor-n"), rho: r.f64("anchor-rho") });
    let c = bounds::fit_relu_constants(&observations, 2, delta, radius, anchor)
        .map_err(errors::from_bound)?;
    for (i, ci) in c.iter().enumerate() {
        rep.push(Row::new(&format!("c{}", i + 1), vreal(*ci)?));
    }
    let ratio = delta / radius;
    let mut sq = 0.0;
    for o in &observations {
        let n = o.n_neurons as f64;
        let s_obs = -(-o.rho).ln_1p();
        let s_fit = n * c[0] * ratio * ratio + n * (n - 1.0) / 2.0 * c[1] * ratio;
        sq += (s_fit - s_obs) * (s_fit - s_obs);
    }
    rep.push(Row::new(
        "rms_exponent_residual",
        vreal((sq / observations.len() as f64).sqrt())?,
    ));
    Ok(())
}
