//! `cfrisk`: counterfactual-loss risk analysis on finite spaces.
//!
//! Exit codes: 0 success, 2 invalid input, 3 negative certificate
//! (loss not additive, no standard loss, risk not identified), 4 search or
//! enumeration guard exceeded.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use cfrisk::additivity::{
    binary_weight_family, decompose, load_decomposition, AdditiveDecomposition, Decomposition,
    NotAdditive, Variant,
};
use cfrisk::distributions::{
    load_model, marginalize, read_records, simulate_records, write_records, JointModel,
    NumericMode, ObservableVariant,
};
use cfrisk::equivalence::{standard_loss_exists, to_standard_loss, EquivalenceCertificate};
use cfrisk::estimation::{
    estimate_identified_part, estimate_identified_risk, monte_carlo, EmpiricalView,
};
use cfrisk::examples::{builtin_example, example_params, parse_params, EXAMPLE_NAMES};
use cfrisk::oracle::{certify_identifiability, risk_bounds, FiberProblem, Verdict};
use cfrisk::rational::{self, Rational};
use cfrisk::risk::{
    binary_decomposition, identified_difference, identified_risk, optimize_policy, true_risk,
    ConstantHandling, OutcomeMarginals, RiskReport,
};
use cfrisk::{build_structure_matrix, classify, load_loss, Error, LossTensor, Spaces};
use clap::{Args, Parser, Subcommand};
use serde_json::{json, Value};

#[derive(Parser)]
#[command(
    name = "cfrisk",
    version,
    about = "Counterfactual-loss risk analysis on finite spaces"
)]
struct Cli {
    /// Worker threads for parallel enumeration and replication.
    #[arg(long, global = true)]
    jobs: Option<usize>,

    /// Write the primary output here instead of standard output.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct LossArg {
    /// Loss document, or an additive decomposition document.
    #[arg(long)]
    loss: PathBuf,
}

#[derive(Args)]
struct ModelArgs {
    /// Distribution document.
    #[arg(long)]
    model: PathBuf,

    /// How probabilities in the distribution document are parsed.
    #[arg(long, default_value = "rational")]
    mode: NumericMode,
}

#[derive(Subcommand)]
enum Command {
    /// Decompose a loss into weights and intercepts, or certify that it is not additive.
    CheckAdditivity {
        #[command(flatten)]
        loss: LossArg,
        /// `full` allows outcome intercepts, `restricted` does not.
        #[arg(long, default_value = "full")]
        variant: Variant,
    },
    /// Five-parameter weight family of a binary-decision, binary-outcome loss.
    Weights {
        #[command(flatten)]
        loss: LossArg,
    },
    /// Print the structure matrix.
    Matrix {
        #[arg(long = "K")]
        k: usize,
        #[arg(long = "M")]
        m: usize,
        #[arg(long, default_value = "full")]
        variant: Variant,
        /// Reorder rows and columns to the published K = M = 2 layout.
        #[arg(long)]
        paper_layout: bool,
    },
    /// True risk and the identified risk of a model.
    Risk {
        #[command(flatten)]
        loss: LossArg,
        #[command(flatten)]
        model: ModelArgs,
        /// Observable view: `a` marginals only, `b` with the outcome joint law.
        #[arg(long, default_value = "a")]
        variant: ObservableVariant,
    },
    /// Identified risk difference between two models of one population.
    RiskDiff {
        #[command(flatten)]
        loss: LossArg,
        /// Distribution document; give exactly two.
        #[arg(long, required = true)]
        model: Vec<PathBuf>,
        #[arg(long, default_value = "rational")]
        mode: NumericMode,
        #[arg(long, default_value = "a")]
        variant: ObservableVariant,
    },
    /// Best deterministic per-stratum rule for the model's potential outcomes.
    OptimizePolicy {
        #[command(flatten)]
        loss: LossArg,
        #[command(flatten)]
        model: ModelArgs,
    },
    /// Standard loss with the same policy ranking (two decisions).
    ToStandard {
        #[command(flatten)]
        loss: LossArg,
    },
    /// Certificate for or against an equivalent standard loss (three or more decisions).
    StdExists {
        #[command(flatten)]
        loss: LossArg,
    },
    /// Exact risk range over the joint laws compatible with the observables.
    Oracle {
        #[command(flatten)]
        loss: LossArg,
        /// Bound the risk for this model; without it, random joint laws are sampled.
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long, default_value = "rational")]
        mode: NumericMode,
        #[arg(long, default_value = "b")]
        variant: ObservableVariant,
        /// Number of sampled joint laws.
        #[arg(long, default_value_t = 50)]
        reps: usize,
        /// Required when sampling.
        #[arg(long, required_unless_present = "model")]
        seed: Option<u64>,
    },
    /// Draw IID records from a model.
    Simulate {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long)]
        n: usize,
        #[arg(long)]
        seed: u64,
    },
    /// Plug-in estimate of the identified risk.
    Estimate {
        #[command(flatten)]
        loss: LossArg,
        /// Records file; strata indices refer to the loss document's strata.
        #[arg(long, conflicts_with = "model", required_unless_present = "model")]
        records: Option<PathBuf>,
        /// Run a Monte Carlo study against this model instead.
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long, default_value = "rational")]
        mode: NumericMode,
        /// Sample size per replication (Monte Carlo).
        #[arg(long, default_value_t = 10_000)]
        n: usize,
        /// Number of replications (Monte Carlo).
        #[arg(long, default_value_t = 10)]
        reps: u64,
        /// First seed (Monte Carlo).
        #[arg(long, required_unless_present = "records")]
        seed: Option<u64>,
        /// Report only the identified part when the loss has an intercept.
        #[arg(long)]
        part_only: bool,
    },
    /// Emit a built-in loss as a loss document.
    Example {
        /// Example name; omit to list them.
        name: Option<String>,
        /// Parameters as name=value.
        params: Vec<String>,
    },
}

/// Failure of a subcommand, carrying its exit code.
struct Failure {
    code: u8,
    message: String,
    /// Document to emit before failing (certificates).
    output: Option<String>,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::TooLarge(_) | Error::SearchSpaceTooLarge(_) => 4,
            _ => 2,
        };
        Self {
            code,
            message: e.to_string(),
            output: None,
        }
    }
}

fn negative(message: impl Into<String>, output: String) -> Failure {
    Failure {
        code: 3,
        message: message.into(),
        output: Some(output),
    }
}

type CmdResult = std::result::Result<String, Failure>;

fn read(path: &Path) -> std::result::Result<String, Failure> {
    std::fs::read_to_string(path).map_err(|e| Failure {
        code: 2,
        message: format!("cannot read {}: {e}", path.display()),
        output: None,
    })
}

enum LossInput {
    Loss(LossTensor),
    Decomposition(AdditiveDecomposition),
}

impl LossInput {
    fn tensor(&self) -> LossTensor {
        match self {
            Self::Loss(l) => l.clone(),
            Self::Decomposition(d) => d.reconstruct(),
        }
    }

    fn spaces(&self) -> &Spaces {
        match self {
            Self::Loss(l) => l.spaces(),
            Self::Decomposition(d) => d.spaces(),
        }
    }

    /// The given decomposition, or a decomposition of the given loss.
    fn additive(&self, variant: Variant) -> std::result::Result<AdditiveDecomposition, Failure> {
        match self {
            Self::Decomposition(d) => Ok(d.clone()),
            Self::Loss(l) => match decompose(l, variant) {
                Decomposition::Additive(d) => Ok(d),
                Decomposition::NotAdditive(r) => Err(negative(
                    "loss is not additive",
                    pretty(&residual_json(l.spaces(), &r)),
                )),
            },
        }
    }
}

fn load_loss_input(arg: &LossArg) -> std::result::Result<LossInput, Failure> {
    let text = read(&arg.loss)?;
    match load_loss(&text) {
        Ok(l) => Ok(LossInput::Loss(l)),
        Err(loss_err) => match load_decomposition(&text) {
            Ok(d) => Ok(LossInput::Decomposition(d)),
            Err(Error::MalformedDocument(_)) => Err(loss_err.into()),
            Err(e) => Err(e.into()),
        },
    }
}

fn load_model_file(path: &Path, mode: NumericMode) -> std::result::Result<JointModel, Failure> {
    Ok(load_model(&read(path)?, mode)?)
}

fn check_shapes(a: &Spaces, b: &Spaces) -> std::result::Result<(), Failure> {
    if a.same_shape(b) {
        Ok(())
    } else {
        Err(Error::DimensionMismatch(format!(
            "loss has K={}, M={}, {} strata; model has K={}, M={}, {} strata",
            a.decisions(),
            a.outcomes(),
            a.n_strata(),
            b.decisions(),
            b.outcomes(),
            b.n_strata()
        ))
        .into())
    }
}

fn pretty(v: &Value) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("json");
    s.push('\n');
    s
}

fn fmt(r: &Rational) -> Value {
    Value::String(rational::format(r))
}

fn fmt_opt(r: &Option<Rational>) -> Value {
    r.as_ref().map_or(Value::String("unknown".into()), fmt)
}

fn residual_json(spaces: &Spaces, r: &NotAdditive) -> Value {
    let failures: Vec<Value> = r
        .failures
        .iter()
        .map(|f| {
            let entries: Vec<Value> = f
                .residual
                .iter()
                .enumerate()
                .filter(|(_, v)| **v != rational::zero())
                .map(|(i, v)| {
                    let (d, y) = spaces.joint_cell(i);
                    json!({"d": d, "y": y, "value": fmt(v)})
                })
                .collect();
            json!({"stratum": spaces.strata()[f.stratum], "residual": entries})
        })
        .collect();
    json!({"additive": false, "variant": r.variant, "failures": failures})
}

fn report_json(spaces: &Spaces, r: &RiskReport) -> Value {
    let strata: Vec<Value> = spaces
        .strata()
        .iter()
        .enumerate()
        .map(|(s, label)| {
            json!({
                "label": label,
                "weight": fmt(&r.stratum_weights[s]),
                "identified_part": fmt(&r.identified_part[s]),
                "constant_part": fmt_opt(&r.constant_part[s]),
                "conditional": fmt_opt(&r.conditional()[s]),
            })
        })
        .collect();
    json!({
        "total": fmt_opt(&r.total()),
        "identified_total": fmt(&r.identified_total()),
        "constant_total": fmt_opt(&r.constant_total()),
        "exact": r.exact,
        "strata": strata,
    })
}

fn check_additivity(arg: &LossArg, variant: Variant) -> CmdResult {
    let input = load_loss_input(arg)?;
    let loss = input.tensor();
    let label = classify(&loss);
    let d = input.additive(variant).map_err(|mut f| {
        if let Some(doc) = f.output.take() {
            let mut v: Value = serde_json::from_str(&doc).expect("json");
            v["regime"] = json!(label.regime);
            f.output = Some(pretty(&v));
        }
        f
    })?;
    eprintln!("regime: {}", label.regime);
    Ok(d.to_json() + "\n")
}

fn weights(arg: &LossArg) -> CmdResult {
    let loss = load_loss_input(arg)?.tensor();
    match binary_weight_family(&loss) {
        Ok(fam) => Ok(fam.render()),
        Err(Error::RestrictionViolated(msg)) => Err(negative(msg, String::new())),
        Err(e) => Err(e.into()),
    }
}

fn matrix(k: usize, m: usize, variant: Variant, paper_layout: bool) -> CmdResult {
    let spaces = Spaces::single(k, m)?;
    if paper_layout && (k, m) != (2, 2) {
        return Err(Error::InvalidArgument(
            "the published layout exists only for K = M = 2".into(),
        )
        .into());
    }
    Ok(build_structure_matrix(&spaces, variant).to_grid(paper_layout))
}

fn risk(arg: &LossArg, margs: &ModelArgs, variant: ObservableVariant) -> CmdResult {
    let input = load_loss_input(arg)?;
    let model = load_model_file(&margs.model, margs.mode)?;
    check_shapes(input.spaces(), model.spaces())?;
    let loss = input.tensor();
    let truth = true_risk(&loss, &model)?;
    let d = input.additive(Variant::Full).map_err(|mut f| {
        f.output = Some(pretty(&json!({
            "true_risk": fmt_opt(&truth.total()),
            "identified": null,
            "certificate": serde_json::from_str::<Value>(f.output.as_deref().unwrap_or("null")).expect("json"),
        })));
        f
    })?;
    let view = marginalize(&model, variant);
    let id = identified_risk(&d, &view, ConstantHandling::AllowUnknown)?;
    let mut out = json!({
        "true_risk": fmt_opt(&truth.total()),
        "variant": variant,
        "identified": report_json(model.spaces(), &id),
    });
    if model.spaces().outcomes() == 2 {
        let b = binary_decomposition(&d, &view)?;
        eprint!("{}", b.render_table());
        let terms: Vec<Value> = (0..model.spaces().n_strata())
            .map(|s| {
                json!({
                    "label": model.spaces().strata()[s],
                    "accuracy": fmt(&b.accuracy_term(s)),
                    "difficulty": fmt(&b.difficulty_term(s)),
                    "baseline": fmt(&b.baseline_term(s)),
                    "constant": fmt_opt(&b.constant[s]),
                })
            })
            .collect();
        out["binary_terms"] = json!(terms);
    }
    Ok(pretty(&out))
}

fn risk_diff(
    arg: &LossArg,
    paths: &[PathBuf],
    mode: NumericMode,
    variant: ObservableVariant,
) -> CmdResult {
    if paths.len() != 2 {
        return Err(Error::InvalidArgument(format!(
            "risk-diff takes two --model files, got {}",
            paths.len()
        ))
        .into());
    }
    let input = load_loss_input(arg)?;
    let first = load_model_file(&paths[0], mode)?;
    let second = load_model_file(&paths[1], mode)?;
    check_shapes(input.spaces(), first.spaces())?;
    check_shapes(input.spaces(), second.spaces())?;
    let d = input.additive(Variant::Full)?;
    let diff = identified_difference(
        &d,
        &marginalize(&first, variant),
        &marginalize(&second, variant),
    )?;
    let loss = input.tensor();
    let truth = true_risk(&loss, &first)?.total().expect("known")
        - true_risk(&loss, &second)?.total().expect("known");
    Ok(pretty(&json!({
        "identified_difference": fmt(&diff.total),
        "per_stratum": diff.per_stratum.iter().map(fmt).collect::<Vec<_>>(),
        "true_difference": fmt(&truth),
    })))
}

fn optimize(arg: &LossArg, margs: &ModelArgs) -> CmdResult {
    let input = load_loss_input(arg)?;
    let model = load_model_file(&margs.model, margs.mode)?;
    check_shapes(input.spaces(), model.spaces())?;
    let d = input.additive(Variant::Full)?;
    let opt = optimize_policy(&d, &OutcomeMarginals::from_model(&model))?;
    let policy: Vec<Value> = opt
        .policy
        .iter()
        .enumerate()
        .map(|(s, d)| json!({"stratum": model.spaces().strata()[s], "decision": d}))
        .collect();
    Ok(pretty(&json!({
        "policy": policy,
        "risk": report_json(model.spaces(), &opt.report),
    })))
}

fn to_standard(arg: &LossArg) -> CmdResult {
    let d = load_loss_input(arg)?.additive(Variant::Full)?;
    Ok(to_standard_loss(&d)?.to_json() + "\n")
}

fn std_exists(arg: &LossArg) -> CmdResult {
    let d = load_loss_input(arg)?.additive(Variant::Full)?;
    let cert = standard_loss_exists(&d)?;
    let doc = cert.to_json() + "\n";
    match cert {
        EquivalenceCertificate::StandardLossExists { .. } => Ok(doc),
        EquivalenceCertificate::NoStandardLoss(w) => Err(negative(
            format!(
                "no standard loss: in stratum `{}` the weight on Y({}) differs between decisions {} and {}",
                w.stratum, w.k, w.j, w.j_prime
            ),
            doc,
        )),
    }
}

fn single_stratum_model(spaces: &Spaces, p: &[Rational]) -> std::result::Result<Value, Failure> {
    let sp = Spaces::single(spaces.decisions(), spaces.outcomes())?;
    let k = sp.decisions() as i64;
    let model = JointModel::new(
        sp.clone(),
        vec![p.to_vec()],
        vec![vec![rational::ratio(1, k); sp.decisions()]],
        vec![rational::one()],
    )?;
    Ok(serde_json::to_value(model.to_document()).expect("json"))
}

#[allow(clippy::too_many_arguments)]
fn oracle(
    arg: &LossArg,
    model: Option<&Path>,
    mode: NumericMode,
    variant: ObservableVariant,
    reps: usize,
    seed: Option<u64>,
) -> CmdResult {
    let loss = load_loss_input(arg)?.tensor();
    let sp = loss.spaces().clone();
    if let Some(path) = model {
        let model = load_model_file(path, mode)?;
        check_shapes(&sp, model.spaces())?;
        let mut strata = Vec::new();
        let mut all = true;
        for s in 0..sp.n_strata() {
            let r = risk_bounds(&FiberProblem::from_model(&loss, &model, variant, s)?)?;
            all &= r.identifiable();
            strata.push(json!({
                "label": sp.strata()[s],
                "min": fmt(&r.min),
                "max": fmt(&r.max),
                "identifiable": r.identifiable(),
                "argmin": single_stratum_model(&sp, &r.argmin)?,
                "argmax": single_stratum_model(&sp, &r.argmax)?,
            }));
        }
        let doc = pretty(&json!({"variant": variant, "strata": strata}));
        return if all {
            Ok(doc)
        } else {
            Err(negative("risk is not identified", doc))
        };
    }
    let rep = certify_identifiability(&loss, variant, reps, seed.expect("clap requires a seed"))?;
    let mut v = serde_json::to_value(&rep).expect("json");
    if let Some(ce) = &rep.counterexample {
        v["counterexample_models"] = json!([
            single_stratum_model(&sp, &ce.p1)?,
            single_stratum_model(&sp, &ce.p2)?
        ]);
    }
    let doc = pretty(&v);
    if !rep.agrees {
        return Err(Failure {
            code: 3,
            message: "oracle verdict disagrees with the classification".into(),
            output: Some(doc),
        });
    }
    match rep.level {
        Verdict::EmpiricallyIdentifiable => Ok(doc),
        Verdict::NonIdentifiable => Err(negative("risk level is not identified", doc)),
    }
}

fn simulate(margs: &ModelArgs, n: usize, seed: u64) -> CmdResult {
    let model = load_model_file(&margs.model, margs.mode)?;
    Ok(write_records(&simulate_records(&model, n, seed)?))
}

#[allow(clippy::too_many_arguments)]
fn estimate(
    arg: &LossArg,
    records: Option<&Path>,
    model: Option<&Path>,
    mode: NumericMode,
    n: usize,
    reps: u64,
    seed: Option<u64>,
    part_only: bool,
) -> CmdResult {
    let input = load_loss_input(arg)?;
    let d = input.additive(Variant::Full)?;
    if let Some(path) = model {
        let model = load_model_file(path, mode)?;
        check_shapes(input.spaces(), model.spaces())?;
        let seed = seed.expect("clap requires a seed");
        let mc = monte_carlo(&d, &model, &[n], seed..seed + reps)?;
        let errs = mc.errors(0);
        let mae = errs.iter().map(|e| e.abs()).sum::<f64>() / errs.len() as f64;
        return Ok(pretty(&json!({
            "estimator": "plug-in",
            "truth": mc.truth,
            "n": n,
            "reps": reps,
            "rmse": mc.rmse(0),
            "mean_abs_error": mae,
            "replications": mc.replications,
        })));
    }
    let text = read(records.expect("clap requires records or model"))?;
    let recs = read_records(&text, input.spaces())?;
    let view = EmpiricalView::from_records(&recs, input.spaces())?;
    let est = if part_only {
        estimate_identified_part(&d, &view)?
    } else {
        estimate_identified_risk(&d, &view)?
    };
    let strata: Vec<Value> = input
        .spaces()
        .strata()
        .iter()
        .enumerate()
        .map(|(s, label)| {
            json!({
                "label": label,
                "weight": rational::to_f64(&est.stratum_weights[s]),
                "identified_part": rational::to_f64(&est.identified_part[s]),
            })
        })
        .collect();
    Ok(pretty(&json!({
        "estimator": "plug-in",
        "n": recs.len(),
        "estimate": est.total_f64(),
        "constant_omitted": est.constant_omitted,
        "strata": strata,
    })))
}

fn example(name: Option<&str>, params: &[String]) -> CmdResult {
    let Some(name) = name else {
        let mut out = String::new();
        for n in EXAMPLE_NAMES {
            out.push_str(&format!("{n}: {}\n", example_params(n)?.join(" ")));
        }
        return Ok(out);
    };
    let params = parse_params(params.iter().map(String::as_str))?;
    Ok(builtin_example(name, &params)?.to_json() + "\n")
}

fn run(cli: &Cli) -> CmdResult {
    match &cli.command {
        Command::CheckAdditivity { loss, variant } => check_additivity(loss, *variant),
        Command::Weights { loss } => weights(loss),
        Command::Matrix {
            k,
            m,
            variant,
            paper_layout,
        } => matrix(*k, *m, *variant, *paper_layout),
        Command::Risk {
            loss,
            model,
            variant,
        } => risk(loss, model, *variant),
        Command::RiskDiff {
            loss,
            model,
            mode,
            variant,
        } => risk_diff(loss, model, *mode, *variant),
        Command::OptimizePolicy { loss, model } => optimize(loss, model),
        Command::ToStandard { loss } => to_standard(loss),
        Command::StdExists { loss } => std_exists(loss),
        Command::Oracle {
            loss,
            model,
            mode,
            variant,
            reps,
            seed,
        } => oracle(loss, model.as_deref(), *mode, *variant, *reps, *seed),
        Command::Simulate { model, n, seed } => simulate(model, *n, *seed),
        Command::Estimate {
            loss,
            records,
            model,
            mode,
            n,
            reps,
            seed,
            part_only,
        } => estimate(
            loss,
            records.as_deref(),
            model.as_deref(),
            *mode,
            *n,
            *reps,
            *seed,
            *part_only,
        ),
        Command::Example { name, params } => example(name.as_deref(), params),
    }
}

fn emit(out: Option<&Path>, text: &str) -> std::result::Result<(), String> {
    match out {
        Some(p) => {
            std::fs::write(p, text).map_err(|e| format!("cannot write {}: {e}", p.display()))
        }
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(j) = cli.jobs {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(j)
            .build_global()
        {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    }
    let (text, code) = match run(&cli) {
        Ok(t) => (Some(t), 0),
        Err(f) => {
            eprintln!("error: {}", f.message);
            (f.output.filter(|o| !o.is_empty()), f.code)
        }
    };
    if let Some(t) = text {
        if let Err(e) = emit(cli.out.as_deref(), &t) {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    }
    ExitCode::from(code)
}
