//! The four subcommands. Each merges its config file with flag overrides,
//! echoes the resolved config into the output directory and then runs.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use toml::{Table, Value};

use scoredim_bench::plan::{build_field, write_loss_trace, BaselineSpec, DatasetSpec, ExperimentPlan, FieldSpec, RunOptions};
use scoredim_bench::plot::{export_spectrum_plot, PlotOptions};
use scoredim_bench::{default_suite, run_suite, Profile, Section, Suite};
use scoredim_core::estimator::{estimate_dataset, EstimatorConfig};
use scoredim_core::oracle::{corrupt_score, reference_points, EmpiricalOracle};
use scoredim_core::scorenet::{as_score_field, load_checkpoint, save_checkpoint, ScoreNet, TrainConfig, TrainState};
use scoredim_core::{rng, Dataset, Error, NoiseSchedule, ScoreField};

use crate::config::{echo, int, out_dir, read_table, read_typed, set, set_opt, typed, CliError, CliResult};
use crate::{BenchmarkArgs, EstimateArgs, FieldKind, GenerateArgs, OnlyArg, ProfileArg, TrainArgs};

/// println! that ignores a closed stdout.
macro_rules! say {
    ($($arg:tt)*) => {{
        use std::io::Write as _;
        let _ = writeln!(std::io::stdout(), $($arg)*);
    }};
}

/// Flags shared by every subcommand.
pub struct Global {
    pub config: Option<PathBuf>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
}

impl Global {
    fn base_table(&self) -> CliResult<Table> {
        match &self.config {
            Some(p) => read_table(p),
            None => Ok(Table::new()),
        }
    }
}

fn io(path: &Path, e: std::io::Error) -> CliError {
    CliError::Runtime(format!("{}: {e}", path.display()))
}

fn load_dataset(path: &Path) -> CliResult<Dataset> {
    if !path.exists() {
        return Err(CliError::Usage(format!("dataset {} not found", path.display())));
    }
    Ok(Dataset::load(path)?)
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct GenerateConfig {
    #[serde(default)]
    seed: u64,
    dataset: DatasetSpec,
    #[serde(default)]
    csv: bool,
}

pub fn generate(global: &Global, args: &GenerateArgs) -> CliResult<()> {
    let mut t = global.base_table()?;
    set_opt(&mut t, "seed", global.seed.map(int).transpose()?);
    set_opt(&mut t, "dataset.manifold", args.manifold.clone());
    for (key, v) in [("k", args.k), ("d", args.d), ("n", args.n), ("k1", args.k1), ("k2", args.k2)] {
        set_opt(&mut t, &format!("dataset.{key}"), v.map(int).transpose()?);
    }
    set_opt(&mut t, "dataset.n_each", args.n_each.map(int).transpose()?);
    set_opt(&mut t, "dataset.side", args.side.map(int).transpose()?);
    for (key, v) in [
        ("radius", args.radius),
        ("alpha", args.alpha),
        ("noise_sigma", args.noise_sigma),
        ("t_lo", args.t_lo),
        ("t_hi", args.t_hi),
        ("r1", args.r1),
        ("r2", args.r2),
    ] {
        set_opt(&mut t, &format!("dataset.{key}"), v);
    }
    if args.csv {
        set(&mut t, "csv", true);
    }
    let cfg: GenerateConfig = typed(t, "generate")?;
    let out = out_dir(global.out.as_deref(), "generate");
    echo(&cfg, &out, "generate")?;

    let data = cfg.dataset.generate(cfg.seed)?;
    let bin = out.join("dataset.bin");
    data.save(&bin)?;
    say!("wrote {} ({} x {})", bin.display(), data.len(), data.ambient_dim());
    if cfg.csv {
        let csv = out.join("dataset.csv");
        data.write_csv(&csv)?;
        say!("wrote {}", csv.display());
    }
    Ok(())
}

fn default_hidden() -> Vec<usize> {
    vec![512; 3]
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TrainFile {
    dataset: PathBuf,
    #[serde(default)]
    seed: u64,
    #[serde(default = "default_hidden")]
    hidden: Vec<usize>,
    #[serde(default)]
    resume: bool,
    #[serde(default)]
    stop_at: Option<u64>,
    #[serde(default)]
    train: TrainConfig,
}

pub fn train(global: &Global, args: &TrainArgs) -> CliResult<()> {
    let mut t = global.base_table()?;
    set_opt(&mut t, "seed", global.seed.map(int).transpose()?);
    set_opt(&mut t, "dataset", args.dataset.as_ref().map(|p| p.display().to_string()));
    if let Some(h) = &args.hidden {
        set(&mut t, "hidden", h.iter().map(|&w| int(w)).collect::<CliResult<Vec<Value>>>()?);
    }
    set_opt(&mut t, "train.steps", args.steps.map(int).transpose()?);
    set_opt(&mut t, "train.learning_rate", args.lr);
    set_opt(&mut t, "train.batch_size", args.batch_size.map(int).transpose()?);
    set_opt(&mut t, "train.schedule.sigma_min", args.sigma_min);
    set_opt(&mut t, "train.schedule.sigma_max", args.sigma_max);
    set_opt(&mut t, "stop_at", args.stop_at.map(int).transpose()?);
    if args.resume {
        set(&mut t, "resume", true);
    }
    let mut cfg: TrainFile = typed(t, "train")?;
    cfg.train.seed = cfg.seed;
    cfg.train.validate()?;
    let data = load_dataset(&cfg.dataset)?;
    let out = out_dir(global.out.as_deref(), "train");
    echo(&cfg, &out, "train")?;

    let ckpt = out.join("checkpoint.json");
    let init = ScoreNet::<f32>::new(data.ambient_dim(), &cfg.hidden, &mut rng::stream(rng::derive_seed(cfg.seed, "init"), 0))?
        .normalized_for(&data)?;
    let mut state = if cfg.resume {
        if !ckpt.exists() {
            return Err(CliError::Usage(format!("no checkpoint to resume at {}", ckpt.display())));
        }
        let (state, manifest) = load_checkpoint::<f32>(&ckpt)?;
        if manifest.seed != cfg.seed || manifest.schedule != cfg.train.schedule || state.net.mlp.widths() != init.mlp.widths() {
            return Err(CliError::Usage(format!(
                "checkpoint {} was trained with a different seed, schedule or architecture",
                ckpt.display()
            )));
        }
        log::info!("resuming from step {}", state.step);
        state
    } else {
        TrainState::new(init)
    };

    let steps = cfg.train.steps;
    let until = cfg.stop_at.unwrap_or(steps).min(steps);
    let log_every = (steps / 20).max(1);
    let result = state.run_until(&data, &cfg.train, until, |step, loss| {
        if step % log_every == 0 {
            log::info!("step {step}/{steps} loss {loss:.4}");
        }
    });
    let trace = out.join("loss.csv");
    if let Err(Error::Diverged { step, loss, trace: losses }) = &result {
        write_loss_trace(losses, &trace)?;
        return Err(CliError::Runtime(format!(
            "training diverged at step {step} (loss {loss}); loss trace written to {}",
            trace.display()
        )));
    }
    result?;
    save_checkpoint(&ckpt, &state, &cfg.train.schedule, cfg.seed)?;
    write_loss_trace(&state.loss_trace, &trace)?;
    let last = state.loss_trace.last().copied().unwrap_or(f64::NAN);
    say!("wrote {} (step {}, final loss {last:.4})", ckpt.display(), state.step);
    Ok(())
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct EstimateFile {
    field: FieldKind,
    #[serde(default)]
    inner: Option<FieldKind>,
    #[serde(default)]
    ratio: Option<f64>,
    #[serde(default)]
    dataset: Option<PathBuf>,
    #[serde(default)]
    checkpoint: Option<PathBuf>,
    /// Subspace Gaussian generated on the fly when no dataset is given.
    #[serde(default)]
    k: Option<usize>,
    #[serde(default)]
    d: Option<usize>,
    #[serde(default)]
    n: Option<usize>,
    #[serde(default)]
    seed: u64,
    #[serde(default)]
    sigma_t0: Option<f64>,
    #[serde(default)]
    schedule: NoiseSchedule,
    #[serde(default)]
    estimator: EstimatorConfig,
    #[serde(default)]
    baselines: Vec<BaselineSpec>,
}

const DEFAULT_SUBSPACE_POINTS: usize = 1000;
const CORRUPTION_REFERENCE_POINTS: usize = 1000;

/// Parses `mle:5`, `local_pca:20` or `ppca`.
fn parse_baseline(s: &str) -> CliResult<Value> {
    let (method, arg) = match s.split_once(':') {
        Some((m, a)) => (m, Some(a)),
        None => (s, None),
    };
    let num = |key: &str, default: usize| -> CliResult<(String, Value)> {
        let v = match arg {
            Some(a) => a.parse::<usize>().map_err(|_| CliError::Usage(format!("bad baseline {s:?}")))?,
            None => default,
        };
        Ok((key.to_string(), int(v)?))
    };
    let mut t = Table::new();
    t.insert("method".into(), Value::String(method.into()));
    match method {
        "mle" => {
            let (k, v) = num("m", 5)?;
            t.insert(k, v);
        }
        "local_pca" => {
            let (k, v) = num("neighborhood_size", 20)?;
            t.insert(k, v);
        }
        "ppca" if arg.is_none() => {}
        _ => return Err(CliError::Usage(format!("unknown baseline {s:?}; expected mle[:m], local_pca[:size] or ppca"))),
    }
    Ok(Value::Table(t))
}

fn trained_field(cfg: &EstimateFile) -> CliResult<(Box<dyn ScoreField>, NoiseSchedule)> {
    let path = cfg.checkpoint.as_ref().ok_or_else(|| CliError::Usage("a trained field needs --checkpoint".into()))?;
    if !path.exists() {
        return Err(CliError::Usage(format!("checkpoint {} not found", path.display())));
    }
    let (state, manifest) = load_checkpoint::<f32>(path)?;
    Ok((Box::new(as_score_field(state.ema, manifest.schedule)?), manifest.schedule))
}

fn closed_form_field(kind: FieldKind, data: &Dataset, schedule: NoiseSchedule) -> CliResult<Box<dyn ScoreField>> {
    let spec = match kind {
        FieldKind::Exact => FieldSpec::Exact,
        FieldKind::Subspace => FieldSpec::Subspace,
        _ => unreachable!("only closed-form kinds reach here"),
    };
    let dataset = DatasetSpec::from_dataset(data)
        .ok_or_else(|| CliError::Usage(format!("no closed-form score for a {:?} dataset", data.generator_tag)))?;
    let mut plan = ExperimentPlan::new("estimate", data.seed, dataset);
    plan.schedule = schedule;
    Ok(build_field(&plan, &spec, data, &RunOptions::default())?)
}

pub fn estimate(global: &Global, args: &EstimateArgs) -> CliResult<()> {
    let mut t = global.base_table()?;
    set_opt(&mut t, "seed", global.seed.map(int).transpose()?);
    set_opt(&mut t, "field", args.field.map(kind_name));
    set_opt(&mut t, "inner", args.inner.map(kind_name));
    set_opt(&mut t, "ratio", args.ratio);
    set_opt(&mut t, "dataset", args.dataset.as_ref().map(|p| p.display().to_string()));
    set_opt(&mut t, "checkpoint", args.checkpoint.as_ref().map(|p| p.display().to_string()));
    for (key, v) in [("k", args.k), ("d", args.d), ("n", args.n)] {
        set_opt(&mut t, key, v.map(int).transpose()?);
    }
    set_opt(&mut t, "sigma_t0", args.sigma_t0);
    set_opt(&mut t, "estimator.base_points", args.base_points.map(int).transpose()?);
    set_opt(&mut t, "estimator.samples", args.samples.map(int).transpose()?);
    if let Some(list) = &args.baselines {
        set(&mut t, "baselines", list.iter().map(|s| parse_baseline(s)).collect::<CliResult<Vec<Value>>>()?);
    }
    let mut cfg: EstimateFile = typed(t, "estimate")?;

    let data = match (&cfg.dataset, cfg.field, cfg.inner) {
        (Some(p), _, _) => load_dataset(p)?,
        (None, FieldKind::Subspace, _) | (None, FieldKind::Corrupted, Some(FieldKind::Subspace)) => {
            let (k, d) = cfg.k.zip(cfg.d).ok_or_else(|| CliError::Usage("a subspace field without a dataset needs --k and --d".into()))?;
            let n = cfg.n.unwrap_or(DEFAULT_SUBSPACE_POINTS);
            DatasetSpec::SubspaceGaussian { k, d, n }.generate(cfg.seed)?
        }
        _ => return Err(CliError::Usage("--dataset is required".into())),
    };

    let base_kind = match cfg.field {
        FieldKind::Corrupted => match cfg.inner {
            None => return Err(CliError::Usage("a corrupted field needs --inner".into())),
            Some(FieldKind::Corrupted) => return Err(CliError::Usage("--inner cannot itself be corrupted".into())),
            Some(k) => k,
        },
        k => k,
    };
    let (inner, schedule): (Box<dyn ScoreField>, NoiseSchedule) = match base_kind {
        FieldKind::Trained => {
            let (f, s) = trained_field(&cfg)?;
            if s != cfg.schedule {
                log::info!("using the checkpoint's noise schedule {s:?}");
            }
            (f, s)
        }
        FieldKind::Empirical => (Box::new(EmpiricalOracle::new(&data, cfg.schedule)?), cfg.schedule),
        k => (closed_form_field(k, &data, cfg.schedule)?, cfg.schedule),
    };
    cfg.schedule = schedule;
    let mut est = cfg.estimator.clone();
    est.seed = cfg.seed;
    if let Some(s) = cfg.sigma_t0 {
        est.t0 = Some(schedule.time_for_sigma(s)?);
    }
    let field: Box<dyn ScoreField> = if cfg.field == FieldKind::Corrupted {
        let ratio = cfg.ratio.ok_or_else(|| CliError::Usage("a corrupted field needs --ratio".into()))?;
        let t0 = est.resolve_t0(&schedule);
        let seed = rng::derive_seed(cfg.seed, "corrupt");
        let reference = reference_points(&data, &schedule, t0, CORRUPTION_REFERENCE_POINTS, seed)?;
        Box::new(corrupt_score(inner, ratio, &reference, t0, seed)?)
    } else {
        inner
    };

    let out = out_dir(global.out.as_deref(), "estimate");
    echo(&cfg, &out, "estimate")?;
    let mut report = estimate_dataset(field.as_ref(), &data, &schedule, &est)?;
    for b in &cfg.baselines {
        report.baselines.insert(b.label(), b.run(&data)?);
    }
    report.write_json(&out.join("report.json"))?;
    if !report.spectra.is_empty() {
        export_spectrum_plot(
            &report.spectra,
            &out.join("spectra.svg"),
            &PlotOptions { normalized: true, log_scale: true, title: data.generator_tag.clone() },
        )?;
    }
    say!("estimate: {}", report.aggregate);
    say!("per-point histogram: {:?}", report.histogram);
    if let Some(k) = report.true_dim {
        say!("true dimension: {k}");
    }
    for (label, v) in &report.baselines {
        say!("{label}: {v:.2}");
    }
    say!("wrote {}", out.join("report.json").display());
    Ok(())
}

fn kind_name(k: FieldKind) -> String {
    match k {
        FieldKind::Trained => "trained",
        FieldKind::Empirical => "empirical",
        FieldKind::Subspace => "subspace",
        FieldKind::Exact => "exact",
        FieldKind::Corrupted => "corrupted",
    }
    .into()
}

pub fn benchmark(global: &Global, args: &BenchmarkArgs) -> CliResult<()> {
    let mut suite: Suite = match &global.config {
        Some(path) => {
            let mut s: Suite = read_typed(path)?;
            if let Some(seed) = global.seed {
                for p in s.table.iter_mut() {
                    p.seed = seed;
                }
                for p in [s.nonuniform.as_mut().map(|x| &mut x.plan), s.noise.as_mut().map(|x| &mut x.plan), s.offmanifold.as_mut().map(|x| &mut x.plan)]
                    .into_iter()
                    .flatten()
                {
                    p.seed = seed;
                }
            }
            s
        }
        None => {
            let profile = match args.profile {
                ProfileArg::Smoke => Profile::Smoke,
                ProfileArg::Desk => Profile::Desk,
                ProfileArg::Full => Profile::Full,
            };
            default_suite(profile, global.seed.unwrap_or(0))
        }
    };
    for p in suite.table.iter() {
        p.validate().map_err(|e| CliError::Usage(format!("plan {:?}: {e}", p.name)))?;
    }
    let baselines_only = args.only.contains(&OnlyArg::Baselines);
    if baselines_only {
        suite = suite.baselines_only();
    }
    let sections: Vec<Section> = args
        .only
        .iter()
        .filter_map(|o| match o {
            OnlyArg::Baselines => None,
            OnlyArg::Table => Some(Section::Table),
            OnlyArg::Nonuniform => Some(Section::Nonuniform),
            OnlyArg::Noise => Some(Section::Noise),
            OnlyArg::Offmanifold => Some(Section::Offmanifold),
        })
        .collect();

    let out = out_dir(global.out.as_deref(), "benchmark");
    echo(&suite, &out, "benchmark")?;
    let opts = RunOptions { out_dir: Some(out.clone()), skip_training: baselines_only, reuse_checkpoints: args.reuse_checkpoints };
    let result = run_suite(&suite, &sections, &opts)?;
    if let Some(t) = &result.table {
        say!("{}", t.table.to_text());
    }
    if let Some(t) = &result.nonuniform {
        say!("non-uniform density\n{}", t.to_text());
    }
    for (name, sweep) in [("score noise", &result.noise), ("data noise", &result.offmanifold)] {
        if let Some(s) = sweep {
            say!("{name}\n{}", s.table().to_text());
        }
    }
    let summary = out.join("summary.json");
    let json = serde_json::to_string_pretty(&result).map_err(|e| CliError::Runtime(e.to_string()))?;
    fs::write(&summary, json + "\n").map_err(|e| io(&summary, e))?;
    say!("wrote {}", out.display());
    Ok(())
}
