//! `hoseq` subcommands.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};
use hoseq_core::data::{DataDims, Split};
use hoseq_core::gradcheck::{check_model, toy_dataset, DEFAULT_EPSILON, DEFAULT_THRESHOLD};
use hoseq_core::metrics::MetricsReport;
use hoseq_core::model::{count_parameters, HoseqModel, ModelMode};
use hoseq_core::synth::{synth_generate, SynthSpec};
use hoseq_core::train::{train, Clock, TrainHistory};

use crate::checkpoint::Checkpoint;
use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::mmseq::{read_mmseq, write_mmseq};

pub const CHECKPOINT_FILE: &str = "model.ckpt";
pub const HISTORY_FILE: &str = "history.tsv";
pub const GRAD_TRACE_FILE: &str = "grad_trace.tsv";
pub const CONFIG_FILE: &str = "config.txt";

#[derive(Debug, Parser)]
#[command(name = "hoseq", version, about = "Higher-order multimodal sequence fusion")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Train a model and write checkpoint, history and gradient trace.
    Train(TrainArgs),
    /// Evaluate a checkpoint on an MMSEQ file.
    Eval(EvalArgs),
    /// Generate a synthetic MMSEQ dataset.
    Synth(SynthArgs),
    /// Compare analytic gradients with finite differences on a toy problem.
    Gradcheck(GradcheckArgs),
    /// Print parameter counts per group for a configuration and data shape.
    CountParams(CountArgs),
    /// Print every configuration key with its default.
    Defaults,
}

#[derive(Debug, Args)]
struct TrainArgs {
    #[arg(long)]
    train: Option<PathBuf>,
    #[arg(long)]
    val: Option<PathBuf>,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    mode: Option<ModelMode>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct EvalArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    mode: Option<ModelMode>,
}

#[derive(Debug, Args)]
struct SynthArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 1000)]
    n: usize,
    #[arg(long, default_value_t = 8)]
    tk: usize,
    #[arg(long, default_value_t = 6)]
    dl: usize,
    #[arg(long, default_value_t = 4)]
    dv: usize,
    #[arg(long, default_value_t = 5)]
    da: usize,
    #[arg(long, default_value_t = 0.5)]
    async_fraction: f64,
    #[arg(long, default_value_t = 0.1)]
    noise: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Debug, Args)]
struct GradcheckArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    mode: Option<ModelMode>,
    #[arg(long, default_value_t = DEFAULT_EPSILON)]
    epsilon: f64,
    /// Multiplies the analytic gradient; exercises the failure path.
    #[arg(long, hide = true, default_value_t = 1.0)]
    inject_fault: f64,
}

#[derive(Debug, Args)]
struct CountArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value_t = 8)]
    tk: usize,
    #[arg(long, default_value_t = 6)]
    dl: usize,
    #[arg(long, default_value_t = 4)]
    dv: usize,
    #[arg(long, default_value_t = 5)]
    da: usize,
}

/// Seconds since construction.
#[derive(Debug, Clone, Copy)]
pub struct WallClock(Instant);

impl Default for WallClock {
    fn default() -> Self {
        Self(Instant::now())
    }
}

impl Clock for WallClock {
    fn now_seconds(&mut self) -> f64 {
        self.0.elapsed().as_secs_f64()
    }
}

/// Parses `args` (program name first) and runs the subcommand, writing
/// results to `out`. Help and version requests are written to `out` too.
pub fn run<I, T>(args: I, out: &mut dyn Write) -> Result<()>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) => {
            return write_out(out, &e.to_string());
        }
        Err(e) => {
            let text = e.to_string();
            let first = text.lines().next().unwrap_or_default();
            return Err(Error::Usage(first.trim_start_matches("error: ").to_string()));
        }
    };
    match cli.command {
        Command::Train(a) => run_train(a, out),
        Command::Eval(a) => run_eval(a, out),
        Command::Synth(a) => run_synth(a, out),
        Command::Gradcheck(a) => run_gradcheck(a, out),
        Command::CountParams(a) => run_count(a, out),
        Command::Defaults => write_out(out, &RunConfig::default().render()),
    }
}

fn write_out(out: &mut dyn Write, text: &str) -> Result<()> {
    out.write_all(text.as_bytes()).map_err(|e| Error::io(Path::new("<stdout>"), e))
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn load_config(path: Option<&Path>) -> Result<RunConfig> {
    match path {
        Some(p) => RunConfig::parse(&fs::read_to_string(p).map_err(|e| Error::io(p, e))?),
        None => Ok(RunConfig::default()),
    }
}

fn required<'a>(value: &'a Option<PathBuf>, flag: &str) -> Result<&'a Path> {
    value
        .as_deref()
        .ok_or_else(|| Error::Usage(format!("missing --{flag} (or `{flag}` in the configuration file)")))
}

/// `epoch train_loss val_mae seconds`, one row per epoch.
pub fn history_tsv(history: &TrainHistory) -> String {
    let mut text = String::from("epoch\ttrain_loss\tval_mae\tseconds\n");
    for r in &history.records {
        text.push_str(&format!("{}\t{}\t{}\t{:.3}\n", r.epoch, r.train_loss, r.val_mae, r.seconds));
    }
    text
}

/// `epoch group grad_norm`, one row per epoch and trained group.
pub fn grad_trace_tsv(history: &TrainHistory) -> String {
    let mut text = String::from("epoch\tgroup\tgrad_norm\n");
    for g in &history.grad_norms {
        text.push_str(&format!("{}\t{}\t{}\n", g.epoch, g.group, g.norm));
    }
    text
}

fn run_train(a: TrainArgs, out: &mut dyn Write) -> Result<()> {
    let mut config = load_config(a.config.as_deref())?;
    if let Some(mode) = a.mode {
        config.model.mode = mode;
    }
    if let Some(seed) = a.seed {
        config.model.seed = seed;
    }
    config.train = a.train.or(config.train);
    config.val = a.val.or(config.val);
    config.out = a.out.or(config.out);
    let train_path = required(&config.train, "train")?;
    let val_path = required(&config.val, "val")?;
    let out_dir = required(&config.out, "out")?;
    config.validate()?;

    let train_set = read_mmseq(train_path, Split::Train)?;
    let val_set = read_mmseq(val_path, Split::Validation)?;
    if train_set.dims() != val_set.dims() {
        return Err(Error::data(format!(
            "training data has {}, validation data has {}",
            show_dims(train_set.dims()),
            show_dims(val_set.dims())
        )));
    }
    let rendered = config.render();
    write_out(out, &rendered)?;

    let (_, store, history) = train(&config.model, &train_set, &val_set, &mut WallClock::default())?;
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    write_file(&out_dir.join(CONFIG_FILE), &rendered)?;
    Checkpoint::from_store(&store, train_set.dims()).write(&out_dir.join(CHECKPOINT_FILE))?;
    write_file(&out_dir.join(HISTORY_FILE), &history_tsv(&history))?;
    write_file(&out_dir.join(GRAD_TRACE_FILE), &grad_trace_tsv(&history))?;

    let mut summary = format!("epochs={}\nstopped_early={}\n", history.records.len(), history.stopped_early);
    if let Some(best) = history.best_record() {
        summary.push_str(&format!("best_epoch={}\nbest_val_mae={:.6}\n", best.epoch, best.val_mae));
    }
    summary.push_str(&format!("output={}\n", out_dir.display()));
    write_out(out, &summary)
}

pub fn show_dims(d: DataDims) -> String {
    format!("t_k={} d_l={} d_v={} d_a={}", d.t_k, d.d_l, d.d_v, d.d_a)
}

fn run_eval(a: EvalArgs, out: &mut dyn Write) -> Result<()> {
    let mut config = load_config(a.config.as_deref())?;
    if let Some(mode) = a.mode {
        config.model.mode = mode;
    }
    config.validate()?;
    let checkpoint = Checkpoint::read(&a.checkpoint)?;
    let data = read_mmseq(&a.data, Split::Test)?;
    let (model, mut store) = HoseqModel::build(&config.model, checkpoint.dims)?;
    checkpoint.load_into(&mut store, data.dims())?;
    let pred = model.predict(&store, &data)?;
    let report = MetricsReport::compute(&pred, &data.labels())?;
    write_out(out, &report.to_string())
}

fn run_synth(a: SynthArgs, out: &mut dyn Write) -> Result<()> {
    let spec = SynthSpec {
        n: a.n,
        dims: DataDims { t_k: a.tk, d_l: a.dl, d_v: a.dv, d_a: a.da },
        async_fraction: a.async_fraction,
        noise_sigma: a.noise,
        seed: a.seed,
    };
    let synth = synth_generate(&spec)?;
    write_mmseq(&synth.dataset, &a.out)?;
    let late = synth.late.iter().filter(|&&l| l).count();
    write_out(
        out,
        &format!("n={} {} late={late} output={}\n", a.n, show_dims(spec.dims), a.out.display()),
    )
}

fn run_gradcheck(a: GradcheckArgs, out: &mut dyn Write) -> Result<()> {
    let mut config = load_config(a.config.as_deref())?;
    if let Some(mode) = a.mode {
        config.model.mode = mode;
    }
    if let Some(seed) = a.seed {
        config.model.seed = seed;
    }
    config.validate()?;
    let (dc, du) = (config.model.common.dropout_rate, config.model.unique.dropout_rate);
    if dc != 0.0 || du != 0.0 {
        write_out(out, &format!("note: dropout disabled for the check (common {dc:?}, unique {du:?})\n"))?;
        config.model = config.model.without_dropout();
    }
    let data = toy_dataset(config.model.seed)?;
    let (model, mut store) = HoseqModel::build(&config.model, data.dims())?;
    let report = check_model(&model, &mut store, &data, a.epsilon, a.inject_fault)?;

    let mut table = format!("mode={} {}\ngroup\tmax_rel_error\n", config.model.mode, show_dims(data.dims()));
    for (group, err) in report.by_group() {
        table.push_str(&format!("{group}\t{err:.3e}\n"));
    }
    let max = report.max_error();
    table.push_str(&format!(
        "max_rel_error={max:.3e} threshold={DEFAULT_THRESHOLD:e} kink_refined={}\n",
        report.kink_refined
    ));
    write_out(out, &table)?;
    if !report.passes(DEFAULT_THRESHOLD) {
        let worst = report
            .params
            .iter()
            .max_by(|x, y| x.max_rel_error.total_cmp(&y.max_rel_error))
            .expect("failing report has entries");
        return Err(Error::GradCheck(format!(
            "{} element {}: analytic {:e}, numeric {:e}, relative error {:.3e} >= {DEFAULT_THRESHOLD:e}",
            worst.name, worst.index, worst.analytic, worst.numeric, worst.max_rel_error
        )));
    }
    Ok(())
}

fn run_count(a: CountArgs, out: &mut dyn Write) -> Result<()> {
    let config = load_config(a.config.as_deref())?;
    config.validate()?;
    let dims = DataDims { t_k: a.tk, d_l: a.dl, d_v: a.dv, d_a: a.da };
    let (_, store) = HoseqModel::build(&config.model, dims)?;
    let count = count_parameters(&store);
    let mut text = format!("{}\n{count}", show_dims(dims));
    if let Some((group, n)) = count.largest_group() {
        text.push_str(&format!("largest={group} {n} ({:.2}%)\n", 100.0 * count.share(group)));
    }
    write_out(out, &text)
}
