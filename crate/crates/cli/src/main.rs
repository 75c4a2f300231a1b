mod config;

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use serde_json::json;
use sha2::{Digest, Sha256};

use wheelodo::domain_adapt::{
    recalibrate, train_generic, train_specific, AdaptationSlice, DomainRole,
};
use wheelodo::eval::{compare_models, Contender, OutageScenario, Predictor, Report};
use wheelodo::ingest::{load_manifest, DriveRole};
use wheelodo::rnn::{RnnModel, TrainingLog};
use wheelodo::synth::{
    default_domain_specs, generate_domains, write_domain, CorpusLayout, DomainSpec,
};
use wheelodo::wheel_physics::{calibrate_radius_multi, CalibrationParams};

use config::RunConfig;

const VERSION: &str = concat!("v", env!("CARGO_PKG_VERSION"));

#[derive(Parser)]
#[command(name = "wheelodo", version = VERSION, about = "Wheel-odometry error models and GNSS-outage evaluation")]
struct Cli {
    /// TOML run configuration
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Overrides the seed from the config file and WHEELODO_SEED
    #[arg(long, global = true)]
    seed: Option<u64>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Role {
    Generic,
    Specific,
}

#[derive(Subcommand)]
enum Command {
    /// Generate synthetic vehicle domains
    Simulate {
        /// TOML simulation spec; vehicles A and B when omitted
        #[arg(long)]
        spec: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Estimate the wheel radius from a dataset's training drives
    Calibrate {
        #[arg(long)]
        data: PathBuf,
        /// Where to write the calibration JSON
        #[arg(long, default_value = "calibration.json")]
        out: PathBuf,
    },
    /// Train a source (generic) or target (specific) model
    Train {
        #[arg(long, value_enum)]
        role: Role,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Physics radius for the error labels; calibrated on the data when omitted
        #[arg(long, conflicts_with = "radius_from")]
        radius: Option<f64>,
        /// Take the physics radius from an existing model
        #[arg(long)]
        radius_from: Option<PathBuf>,
        #[arg(long)]
        epochs: Option<usize>,
    },
    /// Adapt a generic model with the head of a target dataset
    Recalibrate {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        seconds: Option<usize>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        epochs: Option<usize>,
    },
    /// Evaluate models over GNSS outages of a dataset's test drives
    Evaluate {
        #[arg(long, value_delimiter = ',', required = true)]
        models: Vec<PathBuf>,
        #[arg(long)]
        data: PathBuf,
        /// Outage lengths in seconds, comma separated
        #[arg(long)]
        scenarios: Option<String>,
        #[arg(long)]
        out: PathBuf,
        /// Radius of the uncorrected physics column; defaults to the first model's
        #[arg(long)]
        radius: Option<f64>,
    },
    /// Render the tables of an evaluation directory
    Report {
        #[arg(long = "in")]
        input: PathBuf,
    },
}

#[derive(Serialize)]
struct RunRecord<'a> {
    command: &'a str,
    version: &'a str,
    seed: u64,
    config_hash: String,
    config: &'a RunConfig,
    inputs: BTreeMap<String, String>,
    outputs: Vec<String>,
}

fn sha256_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path).with_context(|| format!("missing file: {}", path.display()))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

/// Hashes a manifest together with every drive file it names.
fn hash_dataset(manifest: &Path, inputs: &mut BTreeMap<String, String>) -> Result<()> {
    inputs.insert(manifest.display().to_string(), sha256_file(manifest)?);
    let parsed = wheelodo::ingest::DatasetManifest::read(manifest)?;
    let base = manifest.parent().unwrap_or(Path::new("."));
    for d in parsed.drives {
        let p = base.join(&d.path);
        inputs.insert(p.display().to_string(), sha256_file(&p)?);
    }
    Ok(())
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
    }
    fs::write(path, text).with_context(|| format!("cannot write {}", path.display()))
}

fn write_run(
    path: &Path,
    command: &str,
    config: &RunConfig,
    inputs: BTreeMap<String, String>,
    outputs: Vec<String>,
) -> Result<()> {
    let record = RunRecord {
        command,
        version: VERSION,
        seed: config.seed,
        config_hash: config.hash(),
        config,
        inputs,
        outputs,
    };
    write_text(path, &(serde_json::to_string_pretty(&record)? + "\n"))?;
    let name = path
        .file_name()
        .and_then(|n| n.to_str())
        .unwrap_or("run.json");
    let snapshot = path.with_file_name(name.replace("run.json", "config.toml"));
    write_text(&snapshot, &config.to_toml())
}

/// `model.json` → `model.<suffix>`
fn sidecar(path: &Path, suffix: &str) -> PathBuf {
    let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("out");
    path.with_file_name(format!("{stem}.{suffix}"))
}

fn load_model(path: &Path) -> Result<RnnModel> {
    Ok(RnnModel::load(path)?)
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct SimulationSpec {
    layout: Option<CorpusLayout>,
    domain: Vec<DomainSpec>,
}

fn simulate(config: &RunConfig, spec_path: Option<&Path>, out: &Path) -> Result<()> {
    let mut inputs = BTreeMap::new();
    let spec: SimulationSpec = match spec_path {
        Some(p) => {
            inputs.insert(p.display().to_string(), sha256_file(p)?);
            let text = fs::read_to_string(p)?;
            toml::from_str(&text)
                .with_context(|| format!("invalid simulation spec {}", p.display()))?
        }
        None => SimulationSpec::default(),
    };
    let domains = if spec.domain.is_empty() {
        default_domain_specs()
    } else {
        spec.domain
    };
    let generated = generate_domains(&domains, spec.layout.unwrap_or_default(), config.seed)?;
    let mut outputs = Vec::new();
    for d in &generated {
        let manifest = write_domain(d, &out.join(&d.domain_id))?;
        println!("{}", manifest.display());
        outputs.push(manifest.display().to_string());
    }
    write_run(&out.join("run.json"), "simulate", config, inputs, outputs)
}

fn calibrate(config: &RunConfig, data: &Path, out: &Path) -> Result<()> {
    let mut inputs = BTreeMap::new();
    hash_dataset(data, &mut inputs)?;
    let ds = load_manifest(data)?;
    let cal = calibrate_radius_multi(ds.drives(DriveRole::Train))?;
    let text = serde_json::to_string_pretty(&json!({
        "domain_id": ds.domain_id,
        "r": cal.r,
        "plausible": cal.is_plausible(),
    }))? + "\n";
    print!("{text}");
    write_text(out, &text)?;
    write_run(
        &sidecar(out, "run.json"),
        "calibrate",
        config,
        inputs,
        vec![out.display().to_string()],
    )
}

fn save_model(model: &RnnModel, log: &TrainingLog, out: &Path) -> Result<Vec<String>> {
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    model.save(out)?;
    let log_path = sidecar(out, "log.csv");
    write_text(&log_path, &log.to_csv())?;
    Ok(vec![
        out.display().to_string(),
        log_path.display().to_string(),
    ])
}

fn train_cmd(
    config: &RunConfig,
    role: Role,
    data: &Path,
    out: &Path,
    radius: Option<f64>,
    radius_from: Option<&Path>,
) -> Result<()> {
    let mut inputs = BTreeMap::new();
    hash_dataset(data, &mut inputs)?;
    let ds = load_manifest(data)?;
    let cal = match (radius, radius_from) {
        (Some(r), _) => CalibrationParams::new(r)?,
        (None, Some(p)) => {
            inputs.insert(p.display().to_string(), sha256_file(p)?);
            CalibrationParams::new(load_model(p)?.meta.wheel_radius)?
        }
        (None, None) => calibrate_radius_multi(ds.drives(DriveRole::Train))?,
    };
    let train_config = config.train_config();
    let (model, log) = match role {
        Role::Generic => train_generic(
            &ds.partition(DriveRole::Train, DomainRole::Source)?,
            &train_config,
            cal,
        )?,
        Role::Specific => train_specific(
            &ds.partition(DriveRole::Train, DomainRole::Target)?,
            &train_config,
            cal,
        )?,
    };
    if let Some(last) = log.last() {
        println!(
            "{} epochs={} train_mae_m={} r={}",
            model.meta.variant, model.meta.epochs_trained, last.train_mae_m, cal.r
        );
    }
    let outputs = save_model(&model, &log, out)?;
    write_run(&sidecar(out, "run.json"), "train", config, inputs, outputs)
}

fn recalibrate_cmd(
    config: &RunConfig,
    model_path: &Path,
    data: &Path,
    seconds: usize,
    out: &Path,
) -> Result<()> {
    let mut inputs = BTreeMap::new();
    inputs.insert(model_path.display().to_string(), sha256_file(model_path)?);
    hash_dataset(data, &mut inputs)?;
    let g = load_model(model_path)?;
    let ds = load_manifest(data)?;
    let target = ds.partition(DriveRole::Adapt, DomainRole::Target)?;
    let (model, log) = recalibrate(
        &g,
        &target,
        AdaptationSlice::new(seconds),
        &config.recal_config(),
    )?;
    if let Some(last) = log.last() {
        println!(
            "{} slice={}s train_mae_m={}",
            model.meta.variant, seconds, last.train_mae_m
        );
    }
    let outputs = save_model(&model, &log, out)?;
    write_run(
        &sidecar(out, "run.json"),
        "recalibrate",
        config,
        inputs,
        outputs,
    )
}

fn parse_scenarios(text: &str) -> Result<Vec<OutageScenario>> {
    text.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| {
            let d: usize = s
                .parse()
                .map_err(|_| anyhow!("invalid outage length '{s}'"))?;
            Ok(OutageScenario::new(d)?)
        })
        .collect()
}

fn evaluate_cmd(
    config: &RunConfig,
    model_paths: &[PathBuf],
    data: &Path,
    scenarios: Option<&str>,
    out: &Path,
    radius: Option<f64>,
) -> Result<()> {
    let mut inputs = BTreeMap::new();
    let mut models = Vec::new();
    for p in model_paths {
        if !p.exists() {
            bail!("missing file: {}", p.display());
        }
        inputs.insert(p.display().to_string(), sha256_file(p)?);
        models.push(load_model(p)?);
    }
    hash_dataset(data, &mut inputs)?;
    let ds = load_manifest(data)?;
    let test = ds.drives(DriveRole::Test);
    if test.is_empty() {
        return Err(wheelodo::Error::EmptyPartition("test".into()).into());
    }
    let scenarios = match scenarios {
        Some(s) => parse_scenarios(s)?,
        None => config
            .evaluate
            .scenarios
            .iter()
            .map(|&d| OutageScenario::new(d))
            .collect::<wheelodo::Result<_>>()?,
    };
    if scenarios.is_empty() {
        eprintln!("warning: no outage scenarios requested; the report is empty");
    }

    let mut names: Vec<String> = Vec::new();
    for (m, p) in models.iter().zip(model_paths) {
        let mut name = m.meta.variant.label().to_string();
        if names.contains(&name) {
            name = format!(
                "{name}:{}",
                p.file_stem().and_then(|s| s.to_str()).unwrap_or("model")
            );
        }
        names.push(name);
    }
    let wpm_radius = radius.or_else(|| models.first().map(|m| m.meta.wheel_radius));
    let mut contenders = Vec::new();
    if let Some(r) = wpm_radius {
        contenders.push(Contender {
            name: "WPM",
            predictor: Predictor::Wpm { radius: r },
        });
    }
    for (m, n) in models.iter().zip(&names) {
        contenders.push(Contender {
            name: n,
            predictor: Predictor::Model(m),
        });
    }
    let evaluation = compare_models(&contenders, test, &scenarios)?;
    for (drive, sc) in &evaluation.skipped {
        eprintln!("warning: drive {drive} is too short for {sc} s outages");
    }

    fs::create_dir_all(out)?;
    let mut model_meta = BTreeMap::new();
    for (m, n) in models.iter().zip(&names) {
        model_meta.insert(
            n.clone(),
            json!({
                "hash": m.content_hash()?,
                "config_hash": m.meta.config_hash,
                "parent_hash": m.meta.parent_hash,
                "wheel_radius": m.meta.wheel_radius,
            }),
        );
    }
    let provenance = json!({
        "version": VERSION,
        "config_hash": config.hash(),
        "seed": config.seed,
        "dataset": ds.domain_id,
        "wpm_radius": wpm_radius,
        "models": model_meta,
    });
    let report = evaluation.report(provenance);
    let mut outputs = Vec::new();
    let mut emit = |name: &str, text: &str| -> Result<()> {
        let p = out.join(name);
        write_text(&p, text)?;
        outputs.push(p.display().to_string());
        Ok(())
    };
    emit("report.csv", &evaluation.report_csv())?;
    emit(
        "report.json",
        &(serde_json::to_string_pretty(&report)? + "\n"),
    )?;
    emit("sequences.csv", &evaluation.sequences_csv())?;
    for (file, body) in evaluation.traces() {
        emit(&format!("traces/{file}"), &body)?;
    }
    print!("{}", report.render());
    write_run(&out.join("run.json"), "evaluate", config, inputs, outputs)
}

/// Collects `report.json` from the directory and its immediate children.
fn find_reports(dir: &Path) -> Result<Vec<PathBuf>> {
    if !dir.is_dir() {
        bail!("no report inputs in {}", dir.display());
    }
    let mut found = Vec::new();
    let top = dir.join("report.json");
    if top.is_file() {
        found.push(top);
    }
    let mut children: Vec<PathBuf> = fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_dir())
        .collect();
    children.sort();
    for c in children {
        let p = c.join("report.json");
        if p.is_file() {
            found.push(p);
        }
    }
    Ok(found)
}

fn report_cmd(config: &RunConfig, dir: &Path) -> Result<()> {
    let paths = find_reports(dir)?;
    if paths.is_empty() {
        bail!("no report inputs in {}", dir.display());
    }
    let mut inputs = BTreeMap::new();
    let mut reports = Vec::new();
    for p in &paths {
        inputs.insert(p.display().to_string(), sha256_file(p)?);
        let text = fs::read_to_string(p)?;
        let r: Report = serde_json::from_str(&text)
            .with_context(|| format!("invalid report {}", p.display()))?;
        reports.push(r);
    }
    let origin = |r: &Report| {
        (
            r.provenance["version"].clone(),
            r.provenance["config_hash"].clone(),
        )
    };
    let first = origin(&reports[0]);
    if let Some((i, _)) = reports.iter().enumerate().find(|(_, r)| origin(r) != first) {
        bail!(
            "mixed provenance: {} and {} come from different runs",
            paths[0].display(),
            paths[i].display()
        );
    }
    let mut text = String::new();
    for (p, r) in paths.iter().zip(&reports) {
        text.push_str(&format!(
            "# {} ({})\n\n",
            p.display(),
            r.provenance["dataset"].as_str().unwrap_or("?")
        ));
        text.push_str(&r.render());
    }
    print!("{text}");
    let tables = dir.join("tables.txt");
    write_text(&tables, &text)?;
    write_run(
        &dir.join("report.run.json"),
        "report",
        config,
        inputs,
        vec![tables.display().to_string()],
    )
}

fn run(cli: Cli) -> Result<()> {
    let mut config = RunConfig::load(cli.config.as_deref())?;
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    match cli.command {
        Command::Simulate { spec, out } => simulate(&config, spec.as_deref(), &out),
        Command::Calibrate { data, out } => calibrate(&config, &data, &out),
        Command::Train {
            role,
            data,
            out,
            radius,
            radius_from,
            epochs,
        } => {
            if let Some(e) = epochs {
                config.train.epochs = e;
            }
            train_cmd(&config, role, &data, &out, radius, radius_from.as_deref())
        }
        Command::Recalibrate {
            model,
            data,
            seconds,
            out,
            epochs,
        } => {
            if let Some(e) = epochs {
                config.recalibrate.epochs = e;
            }
            if let Some(s) = seconds {
                config.recalibrate.seconds = s;
            }
            let seconds = config.recalibrate.seconds;
            recalibrate_cmd(&config, &model, &data, seconds, &out)
        }
        Command::Evaluate {
            models,
            data,
            scenarios,
            out,
            radius,
        } => evaluate_cmd(&config, &models, &data, scenarios.as_deref(), &out, radius),
        Command::Report { input } => report_cmd(&config, &input),
    }
}

/// Short machine-readable tag for an error.
fn error_kind(err: &anyhow::Error) -> &'static str {
    use wheelodo::Error as E;
    match err.downcast_ref::<E>() {
        Some(E::MissingFile(_)) => "missing_file",
        Some(E::Schema { .. } | E::ExcessJitter { .. }) => "schema",
        Some(E::InvalidConfig(_) | E::InvalidScript(_)) => "invalid_config",
        Some(E::SliceTooLong { .. }) => "slice_too_long",
        Some(E::VariantMismatch { .. }) => "variant_mismatch",
        Some(E::UntrainedModel | E::ScalerMissing) => "untrained_model",
        Some(E::EmptyDataset(_) | E::EmptyPartition(_) | E::EmptyTrainingSet) => "empty_dataset",
        Some(E::InsufficientMotion { .. }) => "insufficient_motion",
        Some(E::FormatVersion(_)) => "format_version",
        Some(_) => "data",
        None => {
            let msg = err.to_string();
            if msg.starts_with("missing file") {
                "missing_file"
            } else if msg.starts_with("no report inputs") {
                "no_report_inputs"
            } else if msg.starts_with("mixed provenance") {
                "mixed_provenance"
            } else {
                "runtime"
            }
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            let message = format!("{err:#}").replace('\n', " ");
            eprintln!("error[{}]: {message}", error_kind(&err));
            ExitCode::FAILURE
        }
    }
}
