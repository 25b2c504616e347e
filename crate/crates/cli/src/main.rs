//! Command-line pipeline: SCM generation, exact informer tables,
//! Monte-Carlo sampling, dataset construction, model training, and
//! evaluation, with deterministic per-stage seeds and manifest-based
//! caching.

mod manifest;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;
use sha2::{Digest, Sha256};

use manifest::Manifest;
use pns_core::datagen::{
    build_dataset, generate_counters, merge_counters, write_raw_samples, Dataset, RegimeKind,
    SampleCounters,
};
use pns_core::eval::{evaluate_model, metrics, ModelReport};
use pns_core::informer::{enumerate_informer, InformerTable};
use pns_core::ml::{
    gbdt_train, mlp_train, rf_train, ActivationKind, ForestConfig, GbdtConfig, LabelColumn,
    MlpConfig, ModelMeta, ModelParams, Predictor, SavedModel,
};
use pns_core::scm::{paper_scm, random_scm, ScmSpec};

#[derive(Parser)]
#[command(name = "pns", version, about = "Causation-bound pipeline")]
struct Cli {
    /// Cap worker parallelism; never affects outputs.
    #[arg(long, global = true)]
    workers: Option<usize>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate or inspect an SCM spec file.
    Scm {
        #[command(subcommand)]
        cmd: ScmCmd,
    },
    /// Compute the exact informer table for a spec.
    Informer {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Generate Monte-Carlo samples into per-subpopulation counters.
    Sample {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        n_exp: u64,
        #[arg(long)]
        n_obs: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        /// Also write raw experimental samples to this CSV (audit only).
        #[arg(long)]
        emit_raw: Option<PathBuf>,
    },
    /// Filter counters by threshold and label with estimated PNS bounds.
    Dataset {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        counters: PathBuf,
        #[arg(long, default_value_t = 1300)]
        threshold: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train one model against one bound label.
    Train(TrainArgs),
    /// Predict with a saved model over the subpopulations of a CSV.
    Predict {
        #[arg(long)]
        model: PathBuf,
        /// Informer or dataset CSV supplying the feature rows.
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score saved models against an informer table and emit reports.
    Eval {
        #[arg(long)]
        informer: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
        #[arg(long, default_value_t = 10)]
        bins: usize,
        /// Saved model files.
        #[arg(required = true)]
        models: Vec<PathBuf>,
    },
    /// Run the whole pipeline with reference defaults.
    Reproduce(ReproduceArgs),
}

#[derive(Subcommand)]
enum ScmCmd {
    Gen {
        /// Use the built-in reference constants instead of a random draw.
        #[arg(long, conflicts_with = "seed")]
        paper: bool,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value_t = 20)]
        n_features: usize,
        #[arg(long, default_value_t = 15)]
        n_observed: usize,
        #[arg(long)]
        out: PathBuf,
    },
    Show {
        spec: PathBuf,
    },
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ModelKindArg {
    Mlp,
    Rf,
    Gbdt,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ActivationArg {
    Relu,
    LeakyRelu,
    Mish,
}

impl From<ActivationArg> for ActivationKind {
    fn from(a: ActivationArg) -> Self {
        match a {
            ActivationArg::Relu => ActivationKind::Relu,
            ActivationArg::LeakyRelu => ActivationKind::LeakyRelu,
            ActivationArg::Mish => ActivationKind::Mish,
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum LabelArg {
    Lb,
    Ub,
}

impl From<LabelArg> for LabelColumn {
    fn from(l: LabelArg) -> Self {
        match l {
            LabelArg::Lb => LabelColumn::Lb,
            LabelArg::Ub => LabelColumn::Ub,
        }
    }
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long, value_enum)]
    model: ModelKindArg,
    #[arg(long, value_enum, default_value = "mish")]
    activation: ActivationArg,
    #[arg(long, value_enum)]
    label: LabelArg,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 1000)]
    epochs: usize,
    #[arg(long, default_value_t = 0.01)]
    learning_rate: f64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ReproduceArgs {
    /// Reduced preset: 2M samples per regime, threshold 400.
    #[arg(long)]
    desk_scale: bool,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Defaults to $PNS_OUT_ROOT/run-<seed> or ./run-<seed>.
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// Override samples per regime.
    #[arg(long)]
    n_samples: Option<u64>,
    #[arg(long)]
    threshold: Option<u64>,
    /// Skip the static SVG scatters.
    #[arg(long)]
    no_svg: bool,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            // clap helps (--help/--version) exit 0; usage errors exit 1
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    if let Some(n) = cli.workers {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    }
    match run(cli.cmd) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            let code = match e.downcast_ref::<pns_core::Error>() {
                Some(pns_core::Error::ResourceBudget(_)) => 3,
                _ => 2,
            };
            ExitCode::from(code)
        }
    }
}

fn load_spec(path: &Path) -> Result<ScmSpec> {
    let f = std::fs::File::open(path).with_context(|| format!("opening {}", path.display()))?;
    let spec: ScmSpec = serde_json::from_reader(f)?;
    spec.validate()?;
    Ok(spec)
}

fn write_spec(spec: &ScmSpec, path: &Path) -> Result<()> {
    let f = std::fs::File::create(path).with_context(|| format!("writing {}", path.display()))?;
    serde_json::to_writer_pretty(f, spec)?;
    Ok(())
}

/// Per-stage seed: first 8 little-endian bytes of
/// sha256(master_seed_le || stage_name).
fn stage_seed(master: u64, stage: &str) -> u64 {
    let mut h = Sha256::new();
    h.update(master.to_le_bytes());
    h.update(stage.as_bytes());
    let d = h.finalize();
    u64::from_le_bytes(d[..8].try_into().unwrap())
}

fn run(cmd: Cmd) -> Result<()> {
    match cmd {
        Cmd::Scm { cmd } => run_scm(cmd),
        Cmd::Informer { spec, out } => {
            let s = load_spec(&spec)?;
            let table = enumerate_informer(&s)?;
            table.write_csv_path(&out)?;
            Manifest::build("informer", None, &[&spec], json!({}))?.write_for(&out)?;
            let lbs: Vec<f64> = table.rows.iter().map(|r| r.lb).collect();
            let ubs: Vec<f64> = table.rows.iter().map(|r| r.ub).collect();
            let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
            eprintln!(
                "informer: {} rows, mean lb {:.4}, mean ub {:.4}",
                table.rows.len(),
                mean(&lbs),
                mean(&ubs)
            );
            Ok(())
        }
        Cmd::Sample {
            spec,
            n_exp,
            n_obs,
            seed,
            out,
            emit_raw,
        } => {
            let s = load_spec(&spec)?;
            let counters = sample_counters(&s, n_exp, n_obs, seed)?;
            counters.write_csv_path(&out)?;
            Manifest::build(
                "sample",
                Some(seed),
                &[&spec],
                json!({"n_exp": n_exp, "n_obs": n_obs}),
            )?
            .write_for(&out)?;
            if let Some(raw) = emit_raw {
                let f = std::fs::File::create(&raw)?;
                write_raw_samples(
                    &s,
                    n_exp,
                    RegimeKind::Experimental,
                    stage_seed(seed, "exp"),
                    std::io::BufWriter::new(f),
                )?;
            }
            let (e, o) = counters.grand_totals();
            eprintln!("sample: {e} experimental + {o} observational");
            Ok(())
        }
        Cmd::Dataset {
            spec,
            counters,
            threshold,
            seed,
            out,
        } => {
            if threshold < 1 {
                bail!("threshold must be >= 1");
            }
            let s = load_spec(&spec)?;
            let c = SampleCounters::read_csv_path(&counters, &s)?;
            let ds = build_dataset(&c, threshold, Some(seed));
            ds.write_csv_path(&out)?;
            Manifest::build(
                "dataset",
                Some(seed),
                &[&spec, &counters],
                json!({"threshold": threshold}),
            )?
            .write_for(&out)?;
            eprintln!("dataset: {} records", ds.records.len());
            Ok(())
        }
        Cmd::Train(args) => {
            run_train(&args)?;
            Ok(())
        }
        Cmd::Predict { model, input, out } => run_predict(&model, &input, &out),
        Cmd::Eval {
            informer,
            out_dir,
            bins,
            models,
        } => run_eval(&informer, &out_dir, bins, &models, true),
        Cmd::Reproduce(args) => run_reproduce(args),
    }
}

fn run_scm(cmd: ScmCmd) -> Result<()> {
    match cmd {
        ScmCmd::Gen {
            paper,
            seed,
            n_features,
            n_observed,
            out,
        } => {
            let spec = if paper {
                paper_scm()
            } else {
                let seed = seed.unwrap_or(0);
                random_scm(seed, n_features, n_observed, (-1.0, 1.0), (0.0, 1.0))?
            };
            write_spec(&spec, &out)?;
            Manifest::build(
                "scm",
                spec.meta.seed,
                &[],
                json!({"source": if paper { "paper" } else { "random" }}),
            )?
            .write_for(&out)?;
            eprintln!("scm: wrote {}", out.display());
            Ok(())
        }
        ScmCmd::Show { spec } => {
            let s = load_spec(&spec)?;
            println!("n_features = {}", s.n_features);
            println!("n_observed = {}", s.n_observed);
            println!("c_y = {}", s.c_y);
            println!("p_ux = {}", s.p_ux);
            println!("p_uy = {}", s.p_uy);
            for i in 0..s.n_features {
                println!(
                    "z{:<2} mx = {:>18} my = {:>18} pz = {}",
                    i + 1,
                    s.mx_coeffs[i],
                    s.my_coeffs[i],
                    s.pz[i]
                );
            }
            Ok(())
        }
    }
}

fn sample_counters(spec: &ScmSpec, n_exp: u64, n_obs: u64, seed: u64) -> Result<SampleCounters> {
    let e = generate_counters(spec, n_exp, RegimeKind::Experimental, stage_seed(seed, "exp"))?;
    let o = generate_counters(spec, n_obs, RegimeKind::Observational, stage_seed(seed, "obs"))?;
    Ok(merge_counters(&e, &o)?)
}

fn model_display_name(kind: ModelKindArg, activation: ActivationArg) -> String {
    match kind {
        ModelKindArg::Mlp => match activation {
            ActivationArg::Relu => "MLP(ReLU)".to_string(),
            ActivationArg::LeakyRelu => "MLP(LeakyReLU)".to_string(),
            ActivationArg::Mish => "MLP(Mish)".to_string(),
        },
        ModelKindArg::Rf => "RF".to_string(),
        ModelKindArg::Gbdt => "GBDT".to_string(),
    }
}

fn run_train(args: &TrainArgs) -> Result<SavedModel> {
    let dataset = Dataset::read_csv_path(&args.dataset)?;
    if dataset.records.is_empty() {
        bail!("dataset {} has no records", args.dataset.display());
    }
    let label: LabelColumn = args.label.into();
    let rows = pns_core::ml::training_rows(&dataset, label);
    let dataset_hash = manifest::file_hash(&args.dataset)?;
    let (params, kind_name, config_json) = match args.model {
        ModelKindArg::Mlp => {
            let mut cfg = MlpConfig::defaults(args.activation.into(), args.seed);
            cfg.layer_sizes[0] = dataset.n_observed;
            cfg.epochs = args.epochs;
            cfg.learning_rate = args.learning_rate;
            let (model, report) = mlp_train(&rows, &cfg)?;
            eprintln!(
                "train: {} final mse {:.6} ({:.1}s)",
                model_display_name(args.model, args.activation),
                report.final_mse,
                report.wall_time_s
            );
            let cfg_json = serde_json::to_value(&cfg)?;
            (ModelParams::Mlp(model), "mlp", cfg_json)
        }
        ModelKindArg::Rf => {
            let cfg = ForestConfig::defaults(dataset.n_observed, args.seed);
            let model = rf_train(&rows, &cfg)?;
            let cfg_json = serde_json::to_value(&cfg)?;
            (ModelParams::Forest(model), "rf", cfg_json)
        }
        ModelKindArg::Gbdt => {
            let cfg = GbdtConfig::defaults(args.seed);
            let model = gbdt_train(&rows, &cfg)?;
            let cfg_json = serde_json::to_value(&cfg)?;
            (ModelParams::Gbdt(model), "gbdt", cfg_json)
        }
    };
    let preds: Vec<f64> = rows.iter().map(|(x, _)| params.predict(x)).collect();
    let labels: Vec<f64> = rows.iter().map(|(_, y)| *y).collect();
    let train_metrics = metrics(&preds, &labels, label, kind_name)?;
    let saved = SavedModel {
        kind: model_display_name(args.model, args.activation),
        label,
        params,
        meta: ModelMeta {
            seed: args.seed,
            dataset_hash,
            train_mse: train_metrics.mse,
            train_mae: train_metrics.mae,
        },
    };
    saved.save(&args.out)?;
    Manifest::build(
        "train",
        Some(args.seed),
        &[&args.dataset],
        json!({"model": kind_name, "label": label.to_string(), "config": config_json}),
    )?
    .write_for(&args.out)?;
    Ok(saved)
}

fn run_predict(model_path: &Path, input: &Path, out: &Path) -> Result<()> {
    let model = SavedModel::load(model_path)?;
    let header: Vec<String> = {
        use std::io::BufRead;
        let f = std::io::BufReader::new(std::fs::File::open(input)?);
        let first = f.lines().next().transpose()?.unwrap_or_default();
        first.split(',').map(|s| s.trim().to_string()).collect()
    };
    let keys: Vec<u32> = if header.first().map(String::as_str) == Some("key") {
        InformerTable::read_csv_path(input)?
            .rows
            .iter()
            .map(|r| r.key.0)
            .collect()
    } else {
        Dataset::read_csv_path(input)?
            .records
            .iter()
            .map(|r| r.key.0)
            .collect()
    };
    let n_observed = header.iter().filter(|h| h.starts_with('z')).count();
    let mut w = std::io::BufWriter::new(std::fs::File::create(out)?);
    use std::io::Write;
    writeln!(w, "key,predicted")?;
    for k in keys {
        let feats: Vec<f64> = (0..n_observed).map(|i| ((k >> i) & 1) as f64).collect();
        writeln!(w, "{k},{:.17}", model.params.predict(&feats))?;
    }
    eprintln!("predict: wrote {}", out.display());
    Ok(())
}

fn run_eval(
    informer: &Path,
    out_dir: &Path,
    bins: usize,
    models: &[PathBuf],
    write_svg: bool,
) -> Result<()> {
    let table = InformerTable::read_csv_path(informer)?;
    let mut reports: Vec<ModelReport> = Vec::new();
    let mut train_lines = Vec::new();
    for path in models {
        let saved = SavedModel::load(path)?;
        let rep = evaluate_model(&saved.params, &table, saved.label, &saved.kind, bins)?;
        eprintln!(
            "eval: {} {} mse {:.4} mae {:.4}",
            saved.kind, saved.label, rep.metrics.mse, rep.metrics.mae
        );
        train_lines.push(format!(
            "{},{},{:.6},{:.6}",
            saved.kind,
            match saved.label {
                LabelColumn::Lb => "Lower bound",
                LabelColumn::Ub => "Upper bound",
            },
            saved.meta.train_mse,
            saved.meta.train_mae
        ));
        reports.push(rep);
    }
    pns_core::eval::emit_report(&reports, out_dir, write_svg)?;
    // train-set metrics alongside the oracle-population comparison
    let mut train_csv = String::from("Model,Dataset,MSE,MAE\n");
    for line in train_lines {
        train_csv.push_str(&line);
        train_csv.push('\n');
    }
    std::fs::write(out_dir.join("comparison_train.csv"), train_csv)?;
    let inputs: Vec<&Path> = std::iter::once(informer)
        .chain(models.iter().map(|p| p.as_path()))
        .collect();
    Manifest::build("eval", None, &inputs, json!({"bins": bins}))?
        .write_for(&out_dir.join("comparison.csv"))?;
    Ok(())
}

struct ReproducePlan {
    n_samples: u64,
    threshold: u64,
}

fn run_reproduce(args: ReproduceArgs) -> Result<()> {
    let plan = if args.desk_scale {
        ReproducePlan {
            n_samples: args.n_samples.unwrap_or(2_000_000),
            threshold: args.threshold.unwrap_or(400),
        }
    } else {
        ReproducePlan {
            n_samples: args.n_samples.unwrap_or(50_000_000),
            threshold: args.threshold.unwrap_or(1300),
        }
    };
    let out_dir = args.out_dir.unwrap_or_else(|| {
        let root = std::env::var("PNS_OUT_ROOT").unwrap_or_else(|_| ".".into());
        PathBuf::from(root).join(format!("run-{}", args.seed))
    });
    std::fs::create_dir_all(&out_dir)?;
    let master = args.seed;

    // stage 1: spec
    let spec_path = out_dir.join("scm.json");
    let spec_manifest = Manifest::build("scm", None, &[], json!({"source": "paper"}))?;
    if spec_manifest.cache_valid(&spec_path) {
        eprintln!("reproduce: scm cached");
    } else {
        write_spec(&paper_scm(), &spec_path)?;
        spec_manifest.write_for(&spec_path)?;
    }
    let spec = load_spec(&spec_path)?;

    // stage 2: informer table
    let informer_path = out_dir.join("informer.csv");
    let informer_manifest = Manifest::build("informer", None, &[&spec_path], json!({}))?;
    if informer_manifest.cache_valid(&informer_path) {
        eprintln!("reproduce: informer cached");
    } else {
        enumerate_informer(&spec)?.write_csv_path(&informer_path)?;
        informer_manifest.write_for(&informer_path)?;
    }

    // stage 3: sampling
    let sample_seed = stage_seed(master, "sample");
    let counters_path = out_dir.join("counters.csv");
    let sample_manifest = Manifest::build(
        "sample",
        Some(sample_seed),
        &[&spec_path],
        json!({"n_exp": plan.n_samples, "n_obs": plan.n_samples}),
    )?;
    if sample_manifest.cache_valid(&counters_path) {
        eprintln!("reproduce: sample cached");
    } else {
        let c = sample_counters(&spec, plan.n_samples, plan.n_samples, sample_seed)?;
        c.write_csv_path(&counters_path)?;
        sample_manifest.write_for(&counters_path)?;
    }

    // stage 4: dataset
    let dataset_path = out_dir.join("dataset.csv");
    let dataset_manifest = Manifest::build(
        "dataset",
        Some(master),
        &[&spec_path, &counters_path],
        json!({"threshold": plan.threshold}),
    )?;
    if dataset_manifest.cache_valid(&dataset_path) {
        eprintln!("reproduce: dataset cached");
    } else {
        let c = SampleCounters::read_csv_path(&counters_path, &spec)?;
        let ds = build_dataset(&c, plan.threshold, Some(master));
        eprintln!("reproduce: dataset has {} records", ds.records.len());
        ds.write_csv_path(&dataset_path)?;
        dataset_manifest.write_for(&dataset_path)?;
    }

    // stage 5: training
    let models_dir = out_dir.join("models");
    std::fs::create_dir_all(&models_dir)?;
    let selections: Vec<(ModelKindArg, ActivationArg, &str)> = vec![
        (ModelKindArg::Mlp, ActivationArg::Mish, "mlp_mish"),
        (ModelKindArg::Mlp, ActivationArg::Relu, "mlp_relu"),
        (ModelKindArg::Mlp, ActivationArg::LeakyRelu, "mlp_leaky_relu"),
        (ModelKindArg::Rf, ActivationArg::Mish, "rf"),
        (ModelKindArg::Gbdt, ActivationArg::Mish, "gbdt"),
    ];
    let mut model_paths = Vec::new();
    for (kind, act, stem) in &selections {
        for label in [LabelArg::Lb, LabelArg::Ub] {
            let label_name = match label {
                LabelArg::Lb => "lb",
                LabelArg::Ub => "ub",
            };
            let out = models_dir.join(format!("{stem}_{label_name}.json"));
            let seed = stage_seed(master, &format!("train-{stem}-{label_name}"));
            let train_args = TrainArgs {
                dataset: dataset_path.clone(),
                model: *kind,
                activation: *act,
                label,
                seed,
                epochs: 1000,
                learning_rate: 0.01,
                out: out.clone(),
            };
            let cached = Manifest::build(
                "train",
                Some(seed),
                &[&dataset_path],
                json!({"stem": stem, "label": label_name}),
            )?;
            // run_train writes its own manifest; reuse only when ours matches
            if cached.cache_valid(&out) {
                eprintln!("reproduce: {stem}_{label_name} cached");
            } else {
                run_train(&train_args)?;
                cached.write_for(&out)?;
            }
            model_paths.push(out);
        }
    }

    // stage 6: evaluation report
    let report_dir = out_dir.join("report");
    run_eval(&informer_path, &report_dir, 10, &model_paths, !args.no_svg)?;
    eprintln!("reproduce: report at {}", report_dir.display());
    Ok(())
}
