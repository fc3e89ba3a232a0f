//! The `lrnet` command line: dataset generation, training, evaluation,
//! prediction, and the gradient-check release gate.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use lrnet_core::config::RunConfig;
use lrnet_core::data::{
    generate_indexed, read_ppm, subtract_mean, write_dataset, write_pgm_labels, write_ppm,
    Dataset, DatasetManifest, GenConfig,
};
use lrnet_core::gradcheck::{run_suite, GradcheckOptions};
use lrnet_core::metrics::{default_palette, evaluate, predict_labels, render_prediction};
use lrnet_core::train::{train_loop, Checkpoint, LogRecord, TrainObserver};
use lrnet_core::Error;

pub const EXIT_OK: i32 = 0;
pub const EXIT_VERIFY: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_SHAPE: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "lrnet", version, about = "Label refinement network for semantic segmentation")]
pub struct Cli {
    /// Worker threads (results do not depend on it).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a synthetic shapes dataset.
    GenData {
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        count: usize,
        #[arg(long, default_value_t = 64)]
        size: usize,
        #[arg(long, default_value_t = 5)]
        classes: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Train from scratch and write a checkpoint plus `<out>.log`.
    Train {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score a checkpoint on a dataset.
    Eval {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        ckpt: PathBuf,
        /// Also report mean IoU for every decoder stage.
        #[arg(long)]
        stagewise: bool,
        /// Write the report as CSV to this file.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Label a single image.
    Predict {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        image: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Also write a colour rendering of the labels.
        #[arg(long)]
        color: Option<PathBuf>,
    },
    /// Finite-difference check of every backward pass.
    Gradcheck {
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

/// Exit code for a library error.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Dimension(_) => EXIT_SHAPE,
        _ => EXIT_USAGE,
    }
}

/// Runs a parsed command, writing human output to `out` and diagnostics to
/// `err`. Returns the process exit code.
pub fn run(cli: Cli, out: &mut (dyn Write + Send), err: &mut (dyn Write + Send)) -> i32 {
    let pool = match rayon::ThreadPoolBuilder::new()
        .num_threads(cli.threads.unwrap_or(0))
        .build()
    {
        Ok(p) => p,
        Err(e) => {
            let _ = writeln!(err, "error: cannot start worker threads: {e}");
            return EXIT_USAGE;
        }
    };
    pool.install(move || dispatch(cli.command, out, err))
}

fn dispatch(command: Command, out: &mut dyn Write, err: &mut dyn Write) -> i32 {
    let result = match command {
        Command::GenData { out: dir, count, size, classes, seed } => {
            cmd_gen_data(&dir, count, size, classes, seed, out)
        }
        Command::Train { data, config, out: ckpt } => cmd_train(&data, &config, &ckpt, out),
        Command::Eval { data, ckpt, stagewise, csv } => {
            cmd_eval(&data, &ckpt, stagewise, csv.as_deref(), out)
        }
        Command::Predict { ckpt, image, out: dst, color } => {
            cmd_predict(&ckpt, &image, &dst, color.as_deref())
        }
        Command::Gradcheck { seed } => return cmd_gradcheck(seed, None, out, err),
    };
    match result {
        Ok(()) => EXIT_OK,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            exit_code(&e)
        }
    }
}

fn write_out(out: &mut dyn Write, text: &str) -> lrnet_core::Result<()> {
    out.write_all(text.as_bytes())
        .map_err(|e| Error::Io { path: PathBuf::from("<stdout>"), source: e })
}

fn write_file(path: &Path, bytes: &[u8]) -> lrnet_core::Result<()> {
    fs::write(path, bytes).map_err(|e| Error::Io { path: path.to_path_buf(), source: e })
}

pub fn cmd_gen_data(
    dir: &Path,
    count: usize,
    size: usize,
    classes: usize,
    seed: u64,
    out: &mut dyn Write,
) -> lrnet_core::Result<()> {
    let cfg = GenConfig { size, num_classes: classes, seed, ..GenConfig::default() };
    cfg.validate()?;
    let m = write_dataset(dir, classes, (0..count as u64).map(|i| generate_indexed(&cfg, i)))?;
    write_out(out, &format!("wrote {} samples to {}\n", m.len(), dir.display()))
}

/// Path of the metrics log written next to a checkpoint.
pub fn log_path(ckpt: &Path) -> PathBuf {
    let mut s = ckpt.as_os_str().to_owned();
    s.push(".log");
    PathBuf::from(s)
}

struct FileObserver<'a> {
    ckpt: &'a Path,
    log: Vec<u8>,
    out: &'a mut dyn Write,
}

impl TrainObserver for FileObserver<'_> {
    fn on_log(&mut self, record: &LogRecord) -> lrnet_core::Result<()> {
        let line = format!("{record}\n");
        self.log.extend_from_slice(line.as_bytes());
        write_out(self.out, &line)
    }

    fn on_checkpoint(&mut self, checkpoint: &Checkpoint) -> lrnet_core::Result<()> {
        checkpoint.save(self.ckpt)?;
        write_file(&log_path(self.ckpt), &self.log)
    }
}

pub fn cmd_train(
    data: &Path,
    config: &Path,
    ckpt: &Path,
    out: &mut dyn Write,
) -> lrnet_core::Result<()> {
    let text = fs::read_to_string(config)
        .map_err(|e| Error::Io { path: config.to_path_buf(), source: e })?;
    let cfg = RunConfig::parse(&text)?;
    let manifest = DatasetManifest::read(data)?;
    if manifest.num_classes != cfg.model.num_classes {
        return Err(Error::Dimension(format!(
            "dataset has {} classes, config num_classes={}",
            manifest.num_classes, cfg.model.num_classes
        )));
    }
    let dataset = Dataset::load(&manifest)?;
    let mut obs = FileObserver { ckpt, log: Vec::new(), out };
    train_loop(&cfg, &dataset, &mut obs)?;
    Ok(())
}

pub fn cmd_eval(
    data: &Path,
    ckpt: &Path,
    stagewise: bool,
    csv: Option<&Path>,
    out: &mut dyn Write,
) -> lrnet_core::Result<()> {
    let ck = Checkpoint::load(ckpt)?;
    let manifest = DatasetManifest::read(data)?;
    let model = &ck.config.model;
    if manifest.num_classes != model.num_classes {
        return Err(Error::Dimension(format!(
            "dataset has {} classes, checkpoint {}",
            manifest.num_classes, model.num_classes
        )));
    }
    let dataset = Dataset::load(&manifest)?;
    let report = evaluate(&ck.params, model, &dataset, &ck.mean_pixel, stagewise)?;
    write_out(out, &report.to_text(&manifest.class_names))?;
    if let Some(path) = csv {
        write_file(path, report.to_csv(&manifest.class_names).as_bytes())?;
    }
    Ok(())
}

pub fn cmd_predict(
    ckpt: &Path,
    image: &Path,
    dst: &Path,
    color: Option<&Path>,
) -> lrnet_core::Result<()> {
    let ck = Checkpoint::load(ckpt)?;
    let bytes = fs::read(image).map_err(|e| Error::Io { path: image.to_path_buf(), source: e })?;
    let img = read_ppm(&bytes)?;
    let model = &ck.config.model;
    let d = img.dims();
    if (d.h, d.w) != (model.input_h, model.input_w) {
        return Err(Error::Dimension(format!(
            "image is {}x{}, checkpoint expects {}x{}",
            d.h, d.w, model.input_h, model.input_w
        )));
    }
    let labels = predict_labels(&ck.params, model, &subtract_mean(&img, &ck.mean_pixel))?
        .pop()
        .expect("one image in, one label map out");
    write_file(dst, &write_pgm_labels(&labels))?;
    if let Some(path) = color {
        let rgb = render_prediction(&labels, &default_palette(model.num_classes))?;
        write_file(path, &write_ppm(&rgb)?)?;
    }
    Ok(())
}

/// Runs the gradient suite. `fault` names an op whose analytic gradient is
/// deliberately perturbed, for testing the gate itself.
pub fn cmd_gradcheck(
    seed: u64,
    fault: Option<&str>,
    out: &mut dyn Write,
    err: &mut dyn Write,
) -> i32 {
    let opts = GradcheckOptions {
        seed,
        fault: fault.map(str::to_owned),
        ..GradcheckOptions::default()
    };
    let report = match run_suite(&opts) {
        Ok(r) => r,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            return exit_code(&e);
        }
    };
    for c in report.ops.iter().chain(std::iter::once(&report.end_to_end)) {
        let _ = writeln!(
            out,
            "{:<22} {} max_rel_err={:.3e} tol={:.0e} instances={}",
            c.name,
            if c.passed() { "ok  " } else { "FAIL" },
            c.max_rel_err,
            c.tolerance,
            c.instances
        );
    }
    if report.passed() {
        let _ = writeln!(out, "gradcheck passed");
        EXIT_OK
    } else {
        let _ = writeln!(err, "gradcheck failed: {}", report.failures().join(", "));
        EXIT_VERIFY
    }
}
