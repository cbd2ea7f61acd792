//! Parameter table, flag/config-file resolution, and config hashing.
//!
//! Every subcommand's parameters live in one declarative table. Values merge
//! with precedence flag > config file > table default; unknown config keys
//! are rejected. Each value is re-rendered into a canonical text form before
//! hashing, so the config hash is stable under key reordering, whitespace,
//! and spelling variants of the same number (`0.01` vs `1e-2`).

use std::collections::BTreeMap;
use std::env;
use std::fs;
use std::path::PathBuf;

use clap::{Arg, ArgAction, ArgMatches, Command};
use sha2::{Digest, Sha256};

/// Env var naming the default output directory.
pub const OUT_DIR_ENV: &str = "EXPCLI_OUT_DIR";
const OUT_DIR_FALLBACK: &str = "reports";

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Kind {
    U64,
    F64,
    Bool,
    Choice(&'static [&'static str]),
    /// Comma-separated unsigned integers, non-empty.
    UList,
    /// Comma-separated floats; empty means "unset".
    FList,
    Path,
}

impl Kind {
    fn value_name(self) -> &'static str {
        match self {
            Kind::U64 => "N",
            Kind::F64 => "X",
            Kind::Bool => "true|false",
            Kind::Choice(_) => "CHOICE",
            Kind::UList => "N,N,..",
            Kind::FList => "X,X,..",
            Kind::Path => "PATH",
        }
    }
}

pub struct ParamSpec {
    pub key: &'static str,
    pub kind: Kind,
    pub default: Option<&'static str>,
    pub required: bool,
    pub positional: bool,
    pub help: &'static str,
}

const fn opt(key: &'static str, kind: Kind, default: &'static str, help: &'static str) -> ParamSpec {
    ParamSpec { key, kind, default: Some(default), required: false, positional: false, help }
}

const fn req(key: &'static str, kind: Kind, help: &'static str) -> ParamSpec {
    ParamSpec { key, kind, default: None, required: true, positional: false, help }
}

const fn maybe(key: &'static str, kind: Kind, help: &'static str) -> ParamSpec {
    ParamSpec { key, kind, default: None, required: false, positional: false, help }
}

const fn pos(key: &'static str, kind: Kind, help: &'static str) -> ParamSpec {
    ParamSpec { key, kind, default: None, required: true, positional: true, help }
}

pub struct CommandSpec {
    pub name: &'static str,
    pub about: &'static str,
    pub params: &'static [ParamSpec],
}

/// Runner-level parameters, attached to every subcommand. They steer where
/// and how the report is written, never what is computed, so they stay out
/// of the config hash; only `format` may also appear in a config file.
const META: &[ParamSpec] = &[
    maybe("config", Kind::Path, "flat `key = value` file merged beneath the flags (# comments)"),
    maybe("out", Kind::Path, "output directory (default: $EXPCLI_OUT_DIR, then ./reports)"),
    opt("format", Kind::Choice(&["csv", "json"]), "csv", "report format"),
    opt("threads", Kind::U64, "0", "worker threads for parallel estimators (0 = library default)"),
];

const NORMS: &[&str] = &["l2", "linf"];
const LOSSES: &[&str] = &["xent", "mse"];

pub const COMMANDS: &[CommandSpec] = &[
    CommandSpec {
        name: "density",
        about: "Kink density of a network over an origin-centered ball (Monte Carlo, optional exact grid)",
        params: &[
            req("net", Kind::Path, "NETV1 network file"),
            opt("delta", Kind::F64, "1e-2", "catastrophe distance threshold"),
            opt("n", Kind::U64, "1000000", "Monte Carlo sample count"),
            opt("radius", Kind::F64, "1", "domain ball radius"),
            opt("seed", Kind::U64, "0", "root seed"),
            opt("confidence", Kind::F64, "0.99", "Wilson interval confidence"),
            opt("probes", Kind::U64, "64", "probe directions for deep-network kink tests"),
            opt("exact", Kind::Bool, "false", "also run the exact grid oracle (depth-1, d <= 2)"),
            opt("grid-step", Kind::F64, "0", "exact-oracle cell size (0 = delta/20)"),
        ],
    },
    CommandSpec {
        name: "instability",
        about: "Measure of points where some |dx| <= delta moves the output by at least eps",
        params: &[
            req("net", Kind::Path, "NETV1 network file"),
            req("eps", Kind::F64, "output jump threshold"),
            opt("delta", Kind::F64, "1e-2", "input perturbation radius"),
            opt("n", Kind::U64, "1000000", "Monte Carlo sample count"),
            opt("radius", Kind::F64, "1", "domain ball radius"),
            opt("seed", Kind::U64, "0", "root seed"),
            opt("confidence", Kind::F64, "0.99", "Wilson interval confidence"),
            opt("norm", Kind::Choice(NORMS), "l2", "norm applied to the output change"),
            opt("inner-budget", Kind::U64, "20", "ascent steps for the inner maximizer"),
        ],
    },
    CommandSpec {
        name: "safe-measure",
        about: "Complement measure of the catastrophic set under a kink or output-jump criterion",
        params: &[
            req("net", Kind::Path, "NETV1 network file"),
            opt("criterion", Kind::Choice(&["kink", "jump"]), "kink", "what counts as catastrophic"),
            opt("eps", Kind::F64, "0", "output jump threshold (required for --criterion jump)"),
            opt("delta", Kind::F64, "1e-2", "catastrophe distance threshold"),
            opt("n", Kind::U64, "1000000", "Monte Carlo sample count"),
            opt("radius", Kind::F64, "1", "domain ball radius"),
            opt("seed", Kind::U64, "0", "root seed"),
            opt("confidence", Kind::F64, "0.99", "Wilson interval confidence"),
            opt("norm", Kind::Choice(NORMS), "l2", "norm for the jump criterion"),
            opt("probes", Kind::U64, "64", "probe directions for deep-network kink tests"),
            opt("inner-budget", Kind::U64, "20", "ascent steps for the jump criterion"),
        ],
    },
    CommandSpec {
        name: "sweep",
        about: "Genericity sweep: fraction of random depth-1 relu nets with near-total kink density, by width",
        params: &[
            opt("widths", Kind::UList, "10,50,200,800", "width grid"),
            opt("trials", Kind::U64, "30", "random nets per width"),
            opt("delta", Kind::F64, "1e-2", "catastrophe distance threshold"),
            opt("threshold", Kind::F64, "0.9", "density a trial must reach to count"),
            opt("samples", Kind::U64, "2000", "Monte Carlo samples per net"),
            opt("dim", Kind::U64, "2", "input dimension"),
            opt("radius", Kind::F64, "1", "domain ball radius"),
            opt("weight-scale", Kind::F64, "1", "random net weight scale"),
            opt("seed", Kind::U64, "0", "root seed"),
            opt("confidence", Kind::F64, "0.99", "Wilson interval confidence"),
        ],
    },
    CommandSpec {
        name: "bounds",
        about: "Closed-form density and safe-measure bounds",
        params: &[
            req("formula", Kind::Choice(&["alpha", "relu", "asymptotic", "safe-measure", "c0", "depth"]),
                "which bound to evaluate"),
            opt("d", Kind::U64, "2", "input dimension"),
            opt("delta", Kind::F64, "1e-2", "catastrophe distance threshold"),
            opt("radius", Kind::F64, "1", "domain radius (relu formula)"),
            opt("n-neurons", Kind::U64, "100", "first-layer neuron count (relu formula)"),
            opt("c", Kind::FList, "", "overlap constants c_1..c_d (empty = fitted defaults)"),
            opt("k-const", Kind::F64, "1", "prefactor K"),
            opt("alpha-mode", Kind::Choice(&["gamma", "log-pieces"]), "gamma", "rate constant convention"),
            opt("pieces", Kind::U64, "2", "activation piece count (for --alpha-mode log-pieces)"),
            maybe("complexity", Kind::F64, "complexity C (asymptotic and safe-measure formulas)"),
            maybe("rho-max", Kind::F64, "density budget (c0 formula)"),
            opt("mode", Kind::Choice(&["exact_log", "paper_linear"]), "paper_linear", "C0 inversion mode"),
            maybe("rho", Kind::F64, "single-layer density (depth formula)"),
            opt("layers", Kind::U64, "2", "depth L (depth formula)"),
            opt("depth-model", Kind::Choice(&["paper_power", "union_independent"]), "union_independent",
                "composition model (depth formula)"),
        ],
    },
    CommandSpec {
        name: "sandwich",
        about: "Complexity sandwich: actual complexity against the safe ceiling C0 and the usefulness floor",
        params: &[
            req("c", Kind::F64, "actual complexity C"),
            opt("rho-max", Kind::F64, "0.01", "density budget defining C0"),
            opt("delta", Kind::F64, "1e-3", "catastrophe distance threshold"),
            opt("d", Kind::U64, "2", "input dimension"),
            opt("i-bits", Kind::F64, "0", "task mutual information I(X;Y) in bits"),
            opt("bits-per-param", Kind::F64, "2", "coding-rate convention for the usefulness floor"),
        ],
    },
    CommandSpec {
        name: "fim",
        about: "Empirical Fisher spectrum and damped natural-gradient pathology metrics",
        params: &[
            req("net", Kind::Path, "NETV1 network file"),
            req("data", Kind::Path, "dataset CSV"),
            opt("loss", Kind::Choice(LOSSES), "xent", "loss the Fisher is taken under"),
            opt("lambda", Kind::F64, "1e-6", "natural-gradient damping (relative floor applies)"),
            opt("tau", Kind::F64, "1e-6", "near-zero threshold relative to lambda_max"),
            opt("spectrum", Kind::Choice(&["summary", "full"]), "summary", "eigenvalue reporting"),
        ],
    },
    CommandSpec {
        name: "train",
        about: "SGD training of a small MLP; writes the trained network as NETV1",
        params: &[
            opt("fixture", Kind::Choice(&["", "two-moons-relu", "two-moons-tanh"]), "",
                "frozen named setup (supersedes data and architecture flags)"),
            opt("data", Kind::Path, "", "dataset CSV (exclusive with --dataset)"),
            opt("dataset", Kind::Choice(&["none", "two-moons", "xor"]), "none", "generated dataset"),
            opt("data-n", Kind::U64, "500", "generated dataset size"),
            opt("noise", Kind::F64, "0.1", "two-moons noise scale"),
            opt("data-seed", Kind::U64, "0", "dataset seed"),
            opt("arch", Kind::UList, "2,16,2", "layer widths, input to output"),
            opt("act", Kind::Choice(&["relu", "tanh", "sigmoid", "leaky"]), "relu", "hidden activation"),
            opt("loss", Kind::Choice(LOSSES), "xent", "training loss"),
            opt("weight-scale", Kind::F64, "1", "init weight scale"),
            opt("init-seed", Kind::U64, "0", "init seed"),
            opt("lr", Kind::F64, "0.1", "learning rate"),
            opt("epochs", Kind::U64, "200", "epochs"),
            opt("batch", Kind::U64, "32", "minibatch size"),
            opt("seed", Kind::U64, "0", "shuffle seed"),
            opt("net-out", Kind::Path, "", "trained network path (empty = auto under --out)"),
            opt("data-out", Kind::Path, "", "also write the training data as CSV"),
        ],
    },
    CommandSpec {
        name: "attack",
        about: "FGSM/PGD attack success rate over the correctly classified points of a dataset",
        params: &[
            req("net", Kind::Path, "NETV1 network file"),
            req("data", Kind::Path, "dataset CSV with class labels"),
            opt("method", Kind::Choice(&["fgsm", "pgd"]), "pgd", "attack"),
            opt("delta", Kind::F64, "1e-1", "perturbation budget"),
            opt("steps", Kind::U64, "40", "PGD steps"),
            opt("step-size", Kind::F64, "0", "PGD step size (0 = delta/8)"),
            opt("norm", Kind::Choice(NORMS), "l2", "perturbation norm"),
            opt("confidence", Kind::F64, "0.99", "Wilson interval confidence"),
            opt("seed", Kind::U64, "0", "root seed"),
        ],
    },
    CommandSpec {
        name: "mi",
        about: "Plug-in mutual information between binned inputs and class labels",
        params: &[
            req("data", Kind::Path, "dataset CSV with class labels"),
            opt("bins", Kind::U64, "4", "bins per input dimension"),
        ],
    },
    CommandSpec {
        name: "oracle-check",
        about: "Monte Carlo vs exact-grid kink density on random depth-1 relu nets (d = 2)",
        params: &[
            opt("count", Kind::U64, "20", "number of random nets"),
            opt("max-neurons", Kind::U64, "50", "width sampled uniformly from 1..=max"),
            opt("delta", Kind::F64, "1e-2", "catastrophe distance threshold"),
            opt("n", Kind::U64, "1000000", "Monte Carlo samples per net"),
            opt("radius", Kind::F64, "1", "domain ball radius"),
            opt("grid-step", Kind::F64, "0", "exact-oracle cell size (0 = delta/20)"),
            opt("confidence", Kind::F64, "0.99", "Wilson interval confidence"),
            opt("weight-scale", Kind::F64, "1", "random net weight scale"),
            opt("seed", Kind::U64, "0", "root seed"),
        ],
    },
    CommandSpec {
        name: "reproduce",
        about: "Re-run a documented headline calculation and compare against its published value",
        params: &[
            pos("id", Kind::Choice(&["relu_043", "c0_2e5", "gpt4_margin", "resnet_margin", "alpha_d2"]),
                "which calculation"),
            opt("planes", Kind::U64, "100", "through-disk plane count (relu_043)"),
            opt("delta", Kind::F64, "1e-2", "catastrophe distance threshold (relu_043)"),
            opt("seed", Kind::U64, "0", "plane sampling seed (relu_043)"),
        ],
    },
    CommandSpec {
        name: "fit-constants",
        about: "Fit the relu-bound overlap constants against the exact oracle on random depth-1 nets (d = 2)",
        params: &[
            opt("widths", Kind::UList, "10,25,50,75,100,150,200", "neuron counts to sample"),
            opt("nets-per-width", Kind::U64, "3", "random nets per width"),
            opt("delta", Kind::F64, "1e-2", "catastrophe distance threshold"),
            opt("resolution", Kind::F64, "0", "exact-oracle cell size (0 = delta/10)"),
            opt("radius", Kind::F64, "1", "domain ball radius"),
            opt("weight-scale", Kind::F64, "1", "random net weight scale"),
            opt("anchor", Kind::Bool, "true", "constrain the fit through (anchor-n, anchor-rho)"),
            opt("anchor-n", Kind::U64, "100", "anchor neuron count"),
            opt("anchor-rho", Kind::F64, "0.43", "anchor density"),
            opt("seed", Kind::U64, "0", "net sampling seed"),
        ],
    },
];

pub fn find_command(name: &str) -> Option<&'static CommandSpec> {
    COMMANDS.iter().find(|c| c.name == name)
}

/// Parse a non-negative integer, accepting exact scientific shorthand like
/// `1e6`.
fn parse_u64(s: &str) -> Result<u64, String> {
    if let Ok(v) = s.parse::<u64>() {
        return Ok(v);
    }
    if let Ok(f) = s.parse::<f64>() {
        if f.is_finite() && f >= 0.0 && f.fract() == 0.0 && f <= 9.007_199_254_740_992e15 {
            return Ok(f as u64);
        }
    }
    Err(format!("expected a non-negative integer, got `{s}`"))
}

fn parse_f64(s: &str) -> Result<f64, String> {
    s.parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .ok_or_else(|| format!("expected a finite number, got `{s}`"))
}

/// Validate a raw value against its kind and re-render it canonically
/// (integers as plain decimal, floats in `{:e}` round-trip form).
pub fn canonicalize(kind: Kind, raw: &str) -> Result<String, String> {
    let raw = raw.trim();
    match kind {
        Kind::U64 => parse_u64(raw).map(|v| v.to_string()),
        Kind::F64 => parse_f64(raw).map(|v| format!("{v:e}")),
        Kind::Bool => match raw {
            "true" | "false" => Ok(raw.to_string()),
            _ => Err(format!("expected true or false, got `{raw}`")),
        },
        Kind::Choice(options) => {
            if options.contains(&raw) {
                Ok(raw.to_string())
            } else {
                Err(format!("expected one of {}, got `{raw}`", options.join("|")))
            }
        }
        Kind::UList => {
            if raw.is_empty() {
                return Err("expected a comma-separated integer list".to_string());
            }
            let vals: Result<Vec<u64>, String> =
                raw.split(',').map(|p| parse_u64(p.trim())).collect();
            vals.map(|v| v.iter().map(u64::to_string).collect::<Vec<_>>().join(","))
        }
        Kind::FList => {
            if raw.is_empty() {
                return Ok(String::new());
            }
            let vals: Result<Vec<f64>, String> =
                raw.split(',').map(|p| parse_f64(p.trim())).collect();
            vals.map(|v| v.iter().map(|x| format!("{x:e}")).collect::<Vec<_>>().join(","))
        }
        Kind::Path => Ok(raw.to_string()),
    }
}

pub fn command_tree() -> Command {
    let mut root = Command::new("expcli")
        .about("Reproducible experiments on catastrophe geometry: densities, bounds, Fisher spectra, attacks")
        .version(crate::report::build_id())
        .subcommand_required(true)
        .arg_required_else_help(true)
        .disable_help_subcommand(true);
    for c in COMMANDS {
        let mut cmd = Command::new(c.name).about(c.about);
        for p in META.iter().chain(c.params.iter()) {
            let mut arg = Arg::new(p.key).help(p.help).action(ArgAction::Set);
            if p.positional {
                arg = arg.value_name(p.key.to_uppercase()).index(1);
            } else {
                arg = arg.long(p.key).value_name(p.kind.value_name());
            }
            // Requiredness is enforced after the merge so a config file can
            // supply any parameter, including positionals.
            cmd = cmd.arg(arg);
        }
        root = root.subcommand(cmd);
    }
    root
}

/// A fully merged, canonicalized configuration for one run.
#[derive(Debug, Clone)]
pub struct Resolved {
    pub experiment: String,
    values: BTreeMap<String, String>,
    pub out_dir: PathBuf,
    pub format: String,
    pub threads: usize,
}

impl Resolved {
    /// First 16 hex digits of sha256 over the experiment name and the
    /// sorted canonical `key=value` pairs. Runner plumbing (out dir,
    /// threads, format) stays out, so any rerun of the same experiment
    /// collides to the same id.
    pub fn hash(&self) -> String {
        let mut h = Sha256::new();
        h.update(self.experiment.as_bytes());
        h.update(b"\n");
        for (k, v) in &self.values {
            h.update(k.as_bytes());
            h.update(b"=");
            h.update(v.as_bytes());
            h.update(b"\n");
        }
        h.finalize().iter().take(8).map(|b| format!("{b:02x}")).collect()
    }

    pub fn pairs(&self) -> Vec<(String, String)> {
        self.values.iter().map(|(k, v)| (k.clone(), v.clone())).collect()
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(String::as_str)
    }

    fn expect(&self, key: &str) -> &str {
        self.get(key).unwrap_or_else(|| panic!("parameter `{key}` has a table default"))
    }

    pub fn f64(&self, key: &str) -> f64 {
        self.expect(key).parse().expect("canonical float")
    }

    pub fn maybe_f64(&self, key: &str) -> Option<f64> {
        self.get(key).map(|v| v.parse().expect("canonical float"))
    }

    pub fn u64(&self, key: &str) -> u64 {
        self.expect(key).parse().expect("canonical integer")
    }

    pub fn usize(&self, key: &str) -> usize {
        self.u64(key) as usize
    }

    pub fn boolean(&self, key: &str) -> bool {
        self.expect(key) == "true"
    }

    pub fn text(&self, key: &str) -> &str {
        self.expect(key)
    }

    pub fn ulist(&self, key: &str) -> Vec<usize> {
        self.expect(key).split(',').map(|p| p.parse().expect("canonical integer")).collect()
    }

    pub fn flist(&self, key: &str) -> Vec<f64> {
        let raw = self.expect(key);
        if raw.is_empty() {
            return Vec::new();
        }
        raw.split(',').map(|p| p.parse().expect("canonical float")).collect()
    }
}

/// Parse a flat `key = value` config file into canonical pairs, rejecting
/// unknown and duplicate keys. `#` starts a comment.
fn parse_config_file(
    spec: &CommandSpec,
    path: &str,
) -> Result<BTreeMap<String, String>, String> {
    let text = fs::read_to_string(path).map_err(|e| format!("config file {path}: {e}"))?;
    let mut out = BTreeMap::new();
    for (idx, raw_line) in text.lines().enumerate() {
        let line = raw_line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let lineno = idx + 1;
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| format!("{path}:{lineno}: expected `key = value`"))?;
        let k = k.trim();
        let v = v.trim();
        let param = spec
            .params
            .iter()
            .find(|p| p.key == k)
            .or_else(|| META.iter().find(|p| p.key == k && p.key == "format"))
            .ok_or_else(|| format!("{path}:{lineno}: unknown key `{k}` for `{}`", spec.name))?;
        let canon = canonicalize(param.kind, v).map_err(|e| format!("{path}:{lineno}: {k}: {e}"))?;
        if out.insert(k.to_string(), canon).is_some() {
            return Err(format!("{path}:{lineno}: duplicate key `{k}`"));
        }
    }
    Ok(out)
}

/// Merge flags, config file, and defaults into a [`Resolved`] config.
/// Also returns the set of explicitly supplied keys for conflict checks.
pub fn resolve(
    spec: &CommandSpec,
    matches: &ArgMatches,
) -> Result<(Resolved, Vec<String>), String> {
    let from_file = match matches.get_one::<String>("config") {
        Some(path) => parse_config_file(spec, path)?,
        None => BTreeMap::new(),
    };

    let mut values = BTreeMap::new();
    let mut supplied = Vec::new();
    for p in spec.params {
        let resolved = if let Some(raw) = matches.get_one::<String>(p.key) {
            supplied.push(p.key.to_string());
            Some(canonicalize(p.kind, raw).map_err(|e| format!("--{}: {e}", p.key))?)
        } else if let Some(v) = from_file.get(p.key) {
            supplied.push(p.key.to_string());
            Some(v.clone())
        } else if let Some(d) = p.default {
            Some(canonicalize(p.kind, d).expect("table defaults are canonical"))
        } else {
            None
        };
        match resolved {
            Some(v) => {
                values.insert(p.key.to_string(), v);
            }
            None if p.required => {
                return Err(format!("`{}` requires --{}", spec.name, p.key));
            }
            None => {}
        }
    }

    let format = match matches.get_one::<String>("format") {
        Some(raw) => canonicalize(Kind::Choice(&["csv", "json"]), raw).map_err(|e| format!("--format: {e}"))?,
        None => from_file.get("format").cloned().unwrap_or_else(|| "csv".to_string()),
    };
    let threads = match matches.get_one::<String>("threads") {
        Some(raw) => canonicalize(Kind::U64, raw)
            .map_err(|e| format!("--threads: {e}"))?
            .parse::<usize>()
            .expect("canonical integer"),
        None => 0,
    };
    let out_dir = matches
        .get_one::<String>("out")
        .cloned()
        .or_else(|| env::var(OUT_DIR_ENV).ok().filter(|v| !v.is_empty()))
        .unwrap_or_else(|| OUT_DIR_FALLBACK.to_string());

    Ok((
        Resolved {
            experiment: spec.name.to_string(),
            values,
            out_dir: PathBuf::from(out_dir),
            format,
            threads,
        },
        supplied,
    ))
}
