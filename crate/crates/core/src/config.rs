//! TOML run configuration.
//!
//! ```toml
//! [model]
//! input_frames = 10
//! output_frames = 10
//! irb_features = 360        # or an explicit [model.irb] table
//! stable_init = true
//!
//! [train]
//! epochs = 50
//!
//! [data]
//! center_root = true
//! [data.synthetic]
//! kind = "gait"
//! sequences = 20
//! joints = 8
//! frames = 60
//!
//! [paths]
//! output_dir = "runs/default"
//! ```
//!
//! Unknown keys are errors. Relative paths resolve against the directory of
//! the config file. `IRB_MOTION_OUT_DIR` overrides `paths.output_dir`.

use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::checkpoint::Preprocessing;
use crate::data::{center_root, load_pose_csv_at, synth_motion, window, MotionKind, PoseSequence, SamplePair, DEFAULT_FRAME_RATE};
use crate::error::{Error, Result};
use crate::gcn::{GcnInit, DEFAULT_LAYERS};
use crate::irb::{sweep_configs, IrbConfig, SWEEP_TOTALS};
use crate::model::{LossWindow, ModelConfig};
use crate::training::TrainConfig;

pub const OUT_DIR_ENV: &str = "IRB_MOTION_OUT_DIR";

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelSection,
    pub train: TrainConfig,
    pub data: DataSection,
    pub paths: PathsSection,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    /// Taken from the data when absent.
    pub joints: Option<usize>,
    pub input_frames: usize,
    pub output_frames: usize,
    pub gcn_layers: usize,
    /// One of the sweep presets; ignored when `irb` is given.
    pub irb_features: usize,
    pub irb: Option<IrbConfig>,
    pub loss_window: LossWindow,
    /// Shorthand for the near-identity, variance-preserving graph init with
    /// inputs scaled by 0.01; overrides `gcn_init` and `input_scale`.
    pub stable_init: bool,
    pub gcn_init: GcnInit,
    pub input_scale: f64,
}

impl Default for ModelSection {
    fn default() -> Self {
        Self {
            joints: None,
            input_frames: 10,
            output_frames: 10,
            gcn_layers: DEFAULT_LAYERS,
            irb_features: 360,
            irb: None,
            loss_window: LossWindow::Future,
            stable_init: false,
            gcn_init: GcnInit::default(),
            input_scale: 1.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataSection {
    pub frame_rate: u32,
    pub stride: usize,
    pub center_root: bool,
    pub root_joint: usize,
    /// Every `*.csv` below this directory, split by sequence.
    pub dir: Option<PathBuf>,
    /// Explicit splits; used instead of `dir` or `synthetic`.
    pub train: Vec<PathBuf>,
    pub val: Vec<PathBuf>,
    pub test: Vec<PathBuf>,
    pub synthetic: Option<SyntheticSection>,
    pub val_fraction: f64,
    pub test_fraction: f64,
    pub split_seed: u64,
}

impl Default for DataSection {
    fn default() -> Self {
        Self {
            frame_rate: DEFAULT_FRAME_RATE,
            stride: 1,
            center_root: false,
            root_joint: 0,
            dir: None,
            train: Vec::new(),
            val: Vec::new(),
            test: Vec::new(),
            synthetic: None,
            val_fraction: 0.1,
            test_fraction: 0.1,
            split_seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticSection {
    pub kind: MotionKind,
    pub sequences: usize,
    pub joints: usize,
    pub frames: usize,
    #[serde(default)]
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PathsSection {
    pub output_dir: PathBuf,
}

impl Default for PathsSection {
    fn default() -> Self {
        Self { output_dir: PathBuf::from("runs") }
    }
}

/// Windowed samples per split, plus the sequences they came from.
#[derive(Clone, Debug, Default)]
pub struct Datasets {
    pub train: Vec<SamplePair>,
    pub val: Vec<SamplePair>,
    pub test: Vec<SamplePair>,
    pub joints: usize,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let c: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        c.validate()?;
        Ok(c)
    }

    /// Reads `path`, resolves relative paths against its directory and
    /// checks that every referenced input exists.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut c: Self = toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        c.resolve_paths(base);
        c.validate()?;
        for p in c.data.dir.iter().chain(&c.data.train).chain(&c.data.val).chain(&c.data.test) {
            if !p.exists() {
                return Err(Error::Config(format!("{}: data path {} does not exist", path.display(), p.display())));
            }
        }
        Ok(c)
    }

    fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        let d = &mut self.data;
        d.dir.iter_mut().chain(&mut d.train).chain(&mut d.val).chain(&mut d.test).for_each(fix);
        fix(&mut self.paths.output_dir);
    }

    pub fn validate(&self) -> Result<()> {
        self.train.validate()?;
        let d = &self.data;
        if d.stride == 0 || d.frame_rate == 0 {
            return Err(Error::Config("data.stride and data.frame_rate must be positive".into()));
        }
        let sources = usize::from(d.dir.is_some()) + usize::from(!d.train.is_empty()) + usize::from(d.synthetic.is_some());
        if sources != 1 {
            return Err(Error::Config("[data] needs exactly one of `dir`, `train` file lists or [data.synthetic]".into()));
        }
        if !(0.0..1.0).contains(&(d.val_fraction + d.test_fraction)) || d.val_fraction < 0.0 || d.test_fraction < 0.0 {
            return Err(Error::Config("data.val_fraction + data.test_fraction must lie in [0, 1)".into()));
        }
        if let Some(s) = &d.synthetic {
            if s.sequences == 0 {
                return Err(Error::Config("data.synthetic.sequences must be positive".into()));
            }
        }
        if self.model.irb.is_none() && !SWEEP_TOTALS.contains(&self.model.irb_features) {
            return Err(Error::Config(format!(
                "model.irb_features = {} is not a preset ({SWEEP_TOTALS:?}); give an explicit [model.irb]",
                self.model.irb_features
            )));
        }
        Ok(())
    }

    /// `IRB_MOTION_OUT_DIR` when set, otherwise `paths.output_dir`.
    pub fn output_dir(&self) -> PathBuf {
        std::env::var_os(OUT_DIR_ENV).map_or_else(|| self.paths.output_dir.clone(), PathBuf::from)
    }

    pub fn preprocessing(&self) -> Preprocessing {
        Preprocessing {
            center_root: self.data.center_root,
            root_joint: self.data.root_joint,
            frame_rate: self.data.frame_rate,
        }
    }

    pub fn irb(&self) -> Result<IrbConfig> {
        if let Some(irb) = &self.model.irb {
            return Ok(irb.clone());
        }
        let i = SWEEP_TOTALS.iter().position(|&t| t == self.model.irb_features).expect("validated preset");
        if self.model.input_frames == crate::irb::DEFAULT_INPUT_LEN {
            return Ok(sweep_configs().swap_remove(i));
        }
        IrbConfig::with_kernel_counts(self.model.input_frames, crate::irb::SWEEP_KERNEL_COUNTS[i])
    }

    pub fn model_config(&self, joints: usize) -> Result<ModelConfig> {
        let m = &self.model;
        if let Some(j) = m.joints {
            if j != joints {
                return Err(Error::Config(format!("model.joints = {j} but the data has {joints} joints")));
            }
        }
        let mut c = ModelConfig::new(joints, m.input_frames, m.output_frames, self.irb()?, m.gcn_layers)?;
        c.loss_window = m.loss_window;
        if m.stable_init {
            c = c.with_stable_init();
        } else {
            c.gcn_init = m.gcn_init;
            c.input_scale = m.input_scale;
        }
        c.validate()?;
        Ok(c)
    }

    fn load_sequences(&self) -> Result<[Vec<PoseSequence>; 3]> {
        let d = &self.data;
        let read = |paths: &[PathBuf]| paths.iter().map(|p| load_pose_csv_at(p, d.frame_rate)).collect::<Result<Vec<_>>>();
        if !d.train.is_empty() {
            return Ok([read(&d.train)?, read(&d.val)?, read(&d.test)?]);
        }
        let all = if let Some(dir) = &d.dir {
            read(&csv_files(dir)?)?
        } else {
            let s = d.synthetic.as_ref().expect("validated source");
            (0..s.sequences)
                .map(|i| synth_motion(s.kind, s.joints, s.frames, s.seed + i as u64, d.frame_rate))
                .collect::<Result<Vec<_>>>()?
        };
        Ok(split(all, d.val_fraction, d.test_fraction, d.split_seed))
    }

    /// Loads, preprocesses and windows every split.
    pub fn datasets(&self) -> Result<Datasets> {
        let [train, val, test] = self.load_sequences()?;
        let joints = train.first().map(PoseSequence::joint_count).ok_or_else(|| Error::Config("no training sequences".into()))?;
        let prep = |seqs: Vec<PoseSequence>| -> Result<Vec<SamplePair>> {
            let mut out = Vec::new();
            for s in seqs {
                if s.joint_count() != joints {
                    return Err(Error::Config(format!("sequences mix {joints} and {} joints", s.joint_count())));
                }
                let s = if self.data.center_root { center_root(&s, self.data.root_joint)? } else { s };
                out.extend(window(&s, self.model.input_frames, self.model.output_frames, self.data.stride));
            }
            Ok(out)
        };
        let ds = Datasets {
            train: prep(train)?,
            val: prep(val)?,
            test: prep(test)?,
            joints,
        };
        if ds.train.is_empty() {
            return Err(Error::Config(format!(
                "no training windows: sequences are shorter than {} frames",
                self.model.input_frames + self.model.output_frames
            )));
        }
        Ok(ds)
    }
}

fn csv_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut files = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in fs::read_dir(&d).map_err(|e| Error::io(&d, e))? {
            let p = entry.map_err(|e| Error::io(&d, e))?.path();
            if p.is_dir() {
                stack.push(p);
            } else if p.extension().is_some_and(|e| e == "csv") {
                files.push(p);
            }
        }
    }
    files.sort();
    if files.is_empty() {
        return Err(Error::Config(format!("{}: no .csv files", dir.display())));
    }
    Ok(files)
}

/// Seeded split by sequence into train / val / test.
fn split<T>(mut items: Vec<T>, val_fraction: f64, test_fraction: f64, seed: u64) -> [Vec<T>; 3] {
    let n = items.len();
    items.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_val = (n as f64 * val_fraction).round() as usize;
    let n_test = ((n as f64 * test_fraction).round() as usize).min(n - n_val.min(n));
    let n_val = n_val.min(n.saturating_sub(1));
    let n_test = n_test.min(n - 1 - n_val);
    let test = items.split_off(n - n_test);
    let val = items.split_off(n - n_test - n_val);
    [items, val, test]
}

#[cfg(test)]
mod tests {
    use super::*;

    const SYNTH: &str = "[data.synthetic]\nkind = \"one_limb\"\nsequences = 10\njoints = 4\nframes = 25\n";

    #[test]
    fn defaults_and_presets() {
        let c = RunConfig::from_toml(SYNTH).unwrap();
        assert_eq!(c.train, TrainConfig::default());
        assert_eq!(c.irb().unwrap().total_features(), 360);
        let m = c.model_config(4).unwrap();
        assert_eq!(m.gcn_layers, 12);
        assert_eq!(m.input_scale, 1.0);
        let stable = RunConfig::from_toml(&format!("[model]\nstable_init = true\n{SYNTH}")).unwrap();
        assert_eq!(stable.model_config(4).unwrap().gcn_init, GcnInit::stable());
        let c300 = RunConfig::from_toml(&format!("[model]\nirb_features = 300\n{SYNTH}")).unwrap();
        assert_eq!(c300.irb().unwrap().total_features(), 300);
    }

    #[test]
    fn unknown_keys_fail() {
        let e = RunConfig::from_toml(&format!("[train]\nlearnin_rate = 0.1\n{SYNTH}")).unwrap_err();
        assert!(e.to_string().contains("learnin_rate"), "{e}");
        assert!(RunConfig::from_toml(&format!("[model]\nirb_features = 361\n{SYNTH}")).is_err());
        assert!(RunConfig::from_toml("[train]\nepochs = 3\n").is_err());
    }

    #[test]
    fn split_is_seeded_and_complete() {
        let [a, b, c] = split((0..10).collect(), 0.1, 0.1, 4);
        assert_eq!((a.len(), b.len(), c.len()), (8, 1, 1));
        let mut all: Vec<i32> = a.iter().chain(&b).chain(&c).copied().collect();
        all.sort();
        assert_eq!(all, (0..10).collect::<Vec<_>>());
        assert_eq!(split((0..10).collect(), 0.1, 0.1, 4), [a, b, c]);
        let [t, v, _] = split(vec![1], 0.5, 0.4, 0);
        assert_eq!((t.len(), v.len()), (1, 0));
    }

    #[test]
    fn synthetic_datasets_window() {
        let c = RunConfig::from_toml(SYNTH).unwrap();
        let d = c.datasets().unwrap();
        // 25 frames give 6 windows of 10 + 10
        assert_eq!((d.train.len(), d.val.len(), d.test.len()), (48, 6, 6));
        assert_eq!(d.joints, 4);
        let pinned = RunConfig::from_toml(&format!("[model]\njoints = 4\n{SYNTH}")).unwrap();
        assert!(pinned.model_config(4).is_ok());
        assert!(pinned.model_config(5).is_err());
    }
}
