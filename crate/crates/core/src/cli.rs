//! Command-line front end; `main.rs` only parses and dispatches here.

use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};

use crate::autodiff::Fault;
use crate::checkpoint::{Checkpoint, Preprocessing};
use crate::config::RunConfig;
use crate::data::{center_root, load_pose_csv_at, synth_motion, window, write_pose_csv_from, MotionKind, PoseSequence, SamplePair};
use crate::error::{Error, Result};
use crate::gradcheck::{run_suite, CheckScale, GRADCHECK_TOLERANCE};
use crate::irb::sweep_configs;
use crate::model::ModelConfig;
use crate::tensor::Tensor;
use crate::training::{evaluate, horizon_frame, run_sweep, train, SweepReport};

pub const CHECKPOINT_FILE: &str = "checkpoint.bin";
pub const HISTORY_FILE: &str = "history.csv";
pub const TIMING_FILE: &str = "timing.csv";

#[derive(Debug, Parser)]
#[command(name = "irb-motion", version, about = "Human motion prediction with an inception residual block and a graph convolution stack")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a synthetic pose sequence as CSV.
    Synth {
        #[arg(long, value_parser = parse_kind)]
        kind: MotionKind,
        #[arg(long, default_value_t = 16)]
        joints: usize,
        #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
        frames: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = crate::data::DEFAULT_FRAME_RATE)]
        frame_rate: u32,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a model; writes a checkpoint, history.csv and timing.csv.
    Train {
        #[arg(long)]
        config: PathBuf,
        /// Output directory; overrides the config and IRB_MOTION_OUT_DIR.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Per-horizon MPJPE of a checkpoint, next to the zero-velocity baseline.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        /// A pose CSV or a directory of them.
        #[arg(long)]
        data: PathBuf,
        /// Comma-separated milliseconds; defaults to 80,160,320,400 or,
        /// for 25-frame models, 560,1000.
        #[arg(long, value_delimiter = ',')]
        horizons: Vec<u32>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Forecast the frames following the end of a pose CSV.
    Predict {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        input_csv: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Compare every backward rule with central finite differences.
    Gradcheck {
        #[arg(long, value_enum, default_value_t = Scale::Tiny)]
        scale: Scale,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, value_enum, hide = true)]
        inject_fault: Option<InjectFault>,
    },
    /// Train one model per feature-count preset and tabulate the losses.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        /// Output CSV path.
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 1)]
        jobs: usize,
    },
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum Scale {
    Tiny,
    Default,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum InjectFault {
    Tanh,
    ConvBias,
}

fn parse_kind(s: &str) -> std::result::Result<MotionKind, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Synth { kind, joints, frames, seed, frame_rate, out } => {
            let seq = synth_motion(kind, joints, frames as usize, seed, frame_rate)?;
            write_pose_csv_from(&seq, &out, 0)?;
            println!("wrote {} frames of {joints} joints to {}", frames, out.display());
            Ok(())
        }
        Command::Train { config, out } => cmd_train(&config, out),
        Command::Eval { checkpoint, data, horizons, out } => cmd_eval(&checkpoint, &data, horizons, &out),
        Command::Predict { checkpoint, input_csv, out } => cmd_predict(&checkpoint, &input_csv, &out),
        Command::Gradcheck { scale, seed, inject_fault } => cmd_gradcheck(scale, seed, inject_fault),
        Command::Sweep { config, out, jobs } => cmd_sweep(&config, &out, jobs),
    }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    File::create(path).map(BufWriter::new).map_err(|e| Error::io(path, e))
}

fn cmd_train(config_path: &Path, out: Option<PathBuf>) -> Result<()> {
    let config = RunConfig::load(config_path)?;
    let out_dir = out.unwrap_or_else(|| config.output_dir());
    let data = config.datasets()?;
    let model_config = config.model_config(data.joints)?;
    log::info!(
        "{} train / {} val windows, {} parameters",
        data.train.len(),
        data.val.len(),
        crate::model::ModelParams::zeros(&model_config).count()
    );
    let model = config.train.initial_model(model_config)?;
    let outcome = train(model, &data.train, &data.val, &config.train)?;
    fs::create_dir_all(&out_dir).map_err(|e| Error::io(&out_dir, e))?;
    let ckpt = Checkpoint {
        model: outcome.best,
        preprocessing: config.preprocessing(),
    };
    ckpt.save(out_dir.join(CHECKPOINT_FILE))?;
    outcome.history.write_csv(create(&out_dir.join(HISTORY_FILE))?)?;
    let mut timing = create(&out_dir.join(TIMING_FILE))?;
    let write = |t: &mut BufWriter<File>| -> io::Result<()> {
        writeln!(t, "epoch,wall_seconds")?;
        for e in &outcome.history.epochs {
            writeln!(t, "{},{}", e.epoch, e.wall_seconds)?;
        }
        t.flush()
    };
    write(&mut timing).map_err(|e| Error::io(out_dir.join(TIMING_FILE), e))?;
    let last = outcome.history.epochs.last().expect("at least one epoch");
    println!(
        "trained {} epochs: train {:.3} mm, val {}; kept epoch {} in {}",
        last.epoch,
        last.train_loss,
        last.val_loss.map_or("-".into(), |v| format!("{v:.3} mm")),
        outcome.best_epoch,
        out_dir.display()
    );
    Ok(())
}

fn prepare(seq: PoseSequence, prep: &Preprocessing) -> Result<PoseSequence> {
    if prep.center_root {
        center_root(&seq, prep.root_joint)
    } else {
        Ok(seq)
    }
}

fn check_joints(config: &ModelConfig, seq: &PoseSequence, path: &Path) -> Result<()> {
    if seq.joint_count() != config.joints {
        return Err(Error::Config(format!(
            "checkpoint expects {} joints but {} has {}",
            config.joints,
            path.display(),
            seq.joint_count()
        )));
    }
    Ok(())
}

fn cmd_eval(checkpoint: &Path, data: &Path, horizons: Vec<u32>, out: &Path) -> Result<()> {
    let ckpt = Checkpoint::load(checkpoint)?;
    let config = &ckpt.model.config;
    let horizons = if horizons.is_empty() {
        if horizon_frame(1000, ckpt.preprocessing.frame_rate, config.output_frames).is_ok() {
            vec![560, 1000]
        } else {
            vec![80, 160, 320, 400]
        }
    } else {
        horizons
    };
    let files = if data.is_dir() {
        let mut f: Vec<PathBuf> = fs::read_dir(data)
            .map_err(|e| Error::io(data, e))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|e| e == "csv"))
            .collect();
        f.sort();
        f
    } else {
        vec![data.to_path_buf()]
    };
    let mut samples: Vec<SamplePair> = Vec::new();
    for f in &files {
        let seq = load_pose_csv_at(f, ckpt.preprocessing.frame_rate)?;
        check_joints(config, &seq, f)?;
        samples.extend(window(&prepare(seq, &ckpt.preprocessing)?, config.input_frames, config.output_frames, 1));
    }
    if samples.is_empty() {
        return Err(Error::Config(format!(
            "{} has no sequence of at least {} frames",
            data.display(),
            config.input_frames + config.output_frames
        )));
    }
    let table = evaluate(&ckpt.model, &samples, &horizons, ckpt.preprocessing.frame_rate)?;
    table.write_csv(create(out)?)?;
    println!("{:>8} {:>12} {:>14}", "ms", "mpjpe_mm", "zero_vel_mm");
    for r in &table.rows {
        println!("{:>8} {:>12.3} {:>14.3}", r.horizon_ms, r.mpjpe_mm, r.zero_velocity_mm);
    }
    Ok(())
}

fn cmd_predict(checkpoint: &Path, input: &Path, out: &Path) -> Result<()> {
    let ckpt = Checkpoint::load(checkpoint)?;
    let config = &ckpt.model.config;
    let prep = &ckpt.preprocessing;
    let seq = load_pose_csv_at(input, prep.frame_rate)?;
    check_joints(config, &seq, input)?;
    let t_n = config.input_frames;
    if seq.frame_count() < t_n {
        return Err(Error::Config(format!(
            "{} has {} frames, the model needs at least {t_n}",
            input.display(),
            seq.frame_count()
        )));
    }
    let start = seq.frame_count() - t_n;
    let recent = PoseSequence::from_tensor(&seq.slice(start, t_n), prep.frame_rate)?;
    let root = prep.center_root.then(|| seq.joint(seq.frame_count() - 1, prep.root_joint));
    let past = prepare(recent, prep)?.slice(0, t_n);
    let k = config.joints;
    let sample = SamplePair {
        future: Tensor::zeros(vec![config.output_frames, k, 3]),
        past,
    };
    let mut pred = ckpt.model.predict(&[&sample])?.remove(0);
    if let Some(r) = root {
        // back to world coordinates, assuming the root stays where it was last seen
        for (i, v) in pred.data_mut().iter_mut().enumerate() {
            *v += r[i % 3];
        }
    }
    let forecast = PoseSequence::from_tensor(&pred, prep.frame_rate)?;
    write_pose_csv_from(&forecast, out, seq.frame_count())?;
    println!("wrote {} predicted frames to {}", config.output_frames, out.display());
    Ok(())
}

fn cmd_gradcheck(scale: Scale, seed: u64, fault: Option<InjectFault>) -> Result<()> {
    let scale = match scale {
        Scale::Tiny => CheckScale::Tiny,
        Scale::Default => CheckScale::Default,
    };
    let fault = fault.map(|f| match f {
        InjectFault::Tanh => Fault::TanhBackward,
        InjectFault::ConvBias => Fault::ConvBiasBackward,
    });
    let results = run_suite(scale, fault, seed)?;
    let mut failed = Vec::new();
    for r in &results {
        let ok = r.passed(GRADCHECK_TOLERANCE);
        println!("{:<22} {:>10.3e}  {:>5} coords  {}", r.name, r.max_rel_error, r.coords, if ok { "ok" } else { "FAIL" });
        if !ok {
            failed.push(r.name.clone());
        }
    }
    if failed.is_empty() {
        Ok(())
    } else {
        Err(Error::Config(format!(
            "gradient check above {GRADCHECK_TOLERANCE:e}: {}",
            failed.join(", ")
        )))
    }
}

fn cmd_sweep(config_path: &Path, out: &Path, jobs: usize) -> Result<()> {
    let config = RunConfig::load(config_path)?;
    let data = config.datasets()?;
    let base = config.model_config(data.joints)?;
    let encoders = sweep_configs()
        .into_iter()
        .map(|c| {
            let counts: Vec<usize> = c.branches().iter().map(|b| b.num_kernels).collect();
            crate::irb::IrbConfig::with_kernel_counts(base.input_frames, counts.try_into().expect("five branches"))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut w = csv::Writer::from_writer(create(out)?);
    let rows = run_sweep(&base, &encoders, &data.train, &data.val, &config.train, jobs, |row| {
        w.serialize(row).map_err(crate::training::csv_error)?;
        w.flush().map_err(|e| Error::io(out, e))?;
        println!("{:>4} features  train {:?}  val {:?}  {}", row.features, row.avg_train_loss, row.avg_val_loss, row.status);
        Ok(())
    })?;
    let report = SweepReport { rows };
    let failed = report.rows.iter().filter(|r| !r.is_ok()).count();
    if failed > 0 {
        return Err(Error::Config(format!("{failed} sweep entries failed; see {}", out.display())));
    }
    Ok(())
}
