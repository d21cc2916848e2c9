//! Inception residual block: the per-coordinate temporal encoder.
//!
//! One trajectory of `T_N` frames (a single joint coordinate) is encoded by
//! several parallel valid convolutions, each reading the most recent
//! `input_len` frames, plus a raw passthrough of the newest frames. The
//! flattened branch outputs are concatenated into `C` and a kernel-size-1
//! convolution over the whole trajectory produces the residual `R`; the
//! embedding is `E = C + R`.
//!
//! Concatenation follows branch order, each branch flattened channel-major
//! (every output of filter 0, then filter 1, ...), with the passthrough last.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Tape, Var};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// One convolution branch: `num_kernels` filters of width `kernel_size`
/// sliding over the last `input_len` frames.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BranchSpec {
    pub input_len: usize,
    pub num_kernels: usize,
    pub kernel_size: usize,
}

impl BranchSpec {
    pub const fn new(input_len: usize, num_kernels: usize, kernel_size: usize) -> Self {
        Self {
            input_len,
            num_kernels,
            kernel_size,
        }
    }

    pub fn out_len(&self) -> usize {
        self.input_len + 1 - self.kernel_size
    }

    pub fn out_features(&self) -> usize {
        self.num_kernels * self.out_len()
    }
}

/// Window lengths and kernel sizes of the default block; only kernel counts
/// vary across the feature sweep.
pub const DEFAULT_BRANCH_SHAPES: [(usize, usize); 5] = [(5, 2), (5, 3), (10, 3), (10, 5), (10, 7)];
pub const DEFAULT_KERNEL_COUNTS: [usize; 5] = [17, 16, 14, 13, 11];
pub const DEFAULT_PASSTHROUGH: usize = 10;
pub const DEFAULT_INPUT_LEN: usize = 10;

/// Feature totals of the parametric sweep.
pub const SWEEP_TOTALS: [usize; 5] = [223, 300, 360, 420, 460];

/// Kernel counts realizing each sweep total, as found by [`search_kernel_counts`].
pub const SWEEP_KERNEL_COUNTS: [[usize; 5]; 5] = [
    [10, 11, 8, 8, 7],
    [14, 14, 12, 10, 9],
    DEFAULT_KERNEL_COUNTS,
    [20, 18, 16, 16, 13],
    [22, 20, 18, 17, 14],
];

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "IrbConfigFile", into = "IrbConfigFile")]
pub struct IrbConfig {
    input_len: usize,
    branches: Vec<BranchSpec>,
    passthrough_len: usize,
    residual_kernels: usize,
}

/// On-disk form; `residual_kernels` may be omitted and is then derived.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct IrbConfigFile {
    input_len: usize,
    branches: Vec<BranchSpec>,
    passthrough_len: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    residual_kernels: Option<usize>,
}

impl TryFrom<IrbConfigFile> for IrbConfig {
    type Error = Error;

    fn try_from(f: IrbConfigFile) -> Result<Self> {
        let config = IrbConfig::new(f.input_len, f.branches, f.passthrough_len)?;
        if let Some(r) = f.residual_kernels {
            if r != config.residual_kernels {
                return Err(Error::Config(format!(
                    "residual_kernels = {r}, but {} features from a {}-frame trajectory need {}",
                    config.total_features(),
                    config.input_len,
                    config.residual_kernels
                )));
            }
        }
        Ok(config)
    }
}

impl From<IrbConfig> for IrbConfigFile {
    fn from(c: IrbConfig) -> Self {
        Self {
            input_len: c.input_len,
            branches: c.branches,
            passthrough_len: c.passthrough_len,
            residual_kernels: Some(c.residual_kernels),
        }
    }
}

impl IrbConfig {
    /// Validates the branches and derives the residual projection width
    /// `⌈total / input_len⌉`.
    pub fn new(input_len: usize, branches: Vec<BranchSpec>, passthrough_len: usize) -> Result<Self> {
        if input_len == 0 {
            return Err(Error::Config("trajectory length must be positive".into()));
        }
        if branches.is_empty() {
            return Err(Error::Config("inception block needs at least one branch".into()));
        }
        for (i, b) in branches.iter().enumerate() {
            if b.num_kernels == 0 || b.kernel_size == 0 || b.input_len == 0 {
                return Err(Error::Config(format!("branch {i}: all extents must be positive")));
            }
            if b.kernel_size > b.input_len {
                return Err(Error::Config(format!(
                    "branch {i}: kernel size {} exceeds its input length {}",
                    b.kernel_size, b.input_len
                )));
            }
            if b.input_len > input_len {
                return Err(Error::Config(format!(
                    "branch {i}: reads {} frames but the trajectory has {input_len}",
                    b.input_len
                )));
            }
        }
        if passthrough_len > input_len {
            return Err(Error::Config(format!(
                "passthrough of {passthrough_len} frames exceeds trajectory length {input_len}"
            )));
        }
        let total: usize = branches.iter().map(BranchSpec::out_features).sum::<usize>() + passthrough_len;
        Ok(Self {
            input_len,
            branches,
            passthrough_len,
            residual_kernels: total.div_ceil(input_len),
        })
    }

    /// The five-branch block with 360 output features.
    pub fn default_for(input_len: usize) -> Result<Self> {
        Self::with_kernel_counts(input_len, DEFAULT_KERNEL_COUNTS)
    }

    /// Default window lengths and kernel sizes with the given kernel counts.
    pub fn with_kernel_counts(input_len: usize, counts: [usize; 5]) -> Result<Self> {
        let longest = DEFAULT_BRANCH_SHAPES.iter().map(|s| s.0).max().unwrap();
        if input_len < longest {
            return Err(Error::Config(format!(
                "the default block reads {longest} frames, trajectory has only {input_len}"
            )));
        }
        let branches = DEFAULT_BRANCH_SHAPES
            .iter()
            .zip(counts)
            .map(|(&(len, k), n)| BranchSpec::new(len, n, k))
            .collect();
        Self::new(input_len, branches, DEFAULT_PASSTHROUGH)
    }

    pub fn input_len(&self) -> usize {
        self.input_len
    }

    pub fn branches(&self) -> &[BranchSpec] {
        &self.branches
    }

    pub fn passthrough_len(&self) -> usize {
        self.passthrough_len
    }

    pub fn residual_kernels(&self) -> usize {
        self.residual_kernels
    }

    pub fn total_features(&self) -> usize {
        self.branches.iter().map(BranchSpec::out_features).sum::<usize>() + self.passthrough_len
    }
}

pub fn default_config() -> IrbConfig {
    IrbConfig::default_for(DEFAULT_INPUT_LEN).expect("default block is valid")
}

/// Presets for the feature-count sweep, in [`SWEEP_TOTALS`] order.
pub fn sweep_configs() -> Vec<IrbConfig> {
    SWEEP_KERNEL_COUNTS
        .iter()
        .map(|&c| IrbConfig::with_kernel_counts(DEFAULT_INPUT_LEN, c).expect("sweep preset is valid"))
        .collect()
}

/// Finds kernel counts for the default branch shapes whose block emits
/// exactly `total` features.
///
/// Among all solutions with every count in `1..=max_count`, the one closest
/// (in squared distance) to the default counts scaled by
/// `(total − passthrough) / 350` wins; ties go to the lexicographically
/// smallest tuple. Returns `None` when no solution exists.
pub fn search_kernel_counts(total: usize, max_count: usize) -> Option<[usize; 5]> {
    let per: Vec<usize> = DEFAULT_BRANCH_SHAPES.iter().map(|&(l, k)| l + 1 - k).collect();
    let base: usize = DEFAULT_KERNEL_COUNTS.iter().zip(&per).map(|(c, p)| c * p).sum();
    let rem = total.checked_sub(DEFAULT_PASSTHROUGH)?;
    let scale = rem as f64 / base as f64;
    let target: Vec<f64> = DEFAULT_KERNEL_COUNTS.iter().map(|&c| c as f64 * scale).collect();
    let mut best: Option<(f64, [usize; 5])> = None;
    for a in 1..=max_count {
        for b in 1..=max_count {
            for c in 1..=max_count {
                for d in 1..=max_count {
                    let used = a * per[0] + b * per[1] + c * per[2] + d * per[3];
                    let Some(left) = rem.checked_sub(used) else { continue };
                    if left == 0 || left % per[4] != 0 || left / per[4] > max_count {
                        continue;
                    }
                    let cand = [a, b, c, d, left / per[4]];
                    let err: f64 = cand
                        .iter()
                        .zip(&target)
                        .map(|(&n, t)| (n as f64 - t).powi(2))
                        .sum();
                    // strict comparison keeps the first (lexicographically smallest) tie
                    if best.is_none_or(|(e, _)| err < e) {
                        best = Some((err, cand));
                    }
                }
            }
        }
    }
    best.map(|(_, c)| c)
}

/// Learnable values of one block.
#[derive(Clone, Debug, PartialEq)]
pub struct IrbParams {
    pub branch_kernels: Vec<Tensor>,
    pub branch_biases: Vec<Tensor>,
    pub residual_kernels: Tensor,
    pub residual_bias: Tensor,
}

/// An [`IrbParams`] registered on a tape.
#[derive(Clone, Debug)]
pub struct IrbVars {
    pub branch_kernels: Vec<Var>,
    pub branch_biases: Vec<Var>,
    pub residual_kernels: Var,
    pub residual_bias: Var,
}

impl IrbParams {
    /// Kernels uniform in `±1/√fan_in`, biases zero.
    pub fn init(config: &IrbConfig, rng: &mut impl Rng) -> Self {
        let branch_kernels = config
            .branches
            .iter()
            .map(|b| {
                let bound = 1.0 / (b.kernel_size as f64).sqrt();
                Tensor::uniform(vec![b.num_kernels, b.kernel_size], bound, rng)
            })
            .collect();
        Self {
            branch_kernels,
            branch_biases: zero_biases(config),
            residual_kernels: Tensor::uniform(vec![config.residual_kernels, 1], 1.0, rng),
            residual_bias: Tensor::zeros(vec![config.residual_kernels]),
        }
    }

    pub fn zeros(config: &IrbConfig) -> Self {
        Self {
            branch_kernels: config
                .branches
                .iter()
                .map(|b| Tensor::zeros(vec![b.num_kernels, b.kernel_size]))
                .collect(),
            branch_biases: zero_biases(config),
            residual_kernels: Tensor::zeros(vec![config.residual_kernels, 1]),
            residual_bias: Tensor::zeros(vec![config.residual_kernels]),
        }
    }

    pub fn check(&self, config: &IrbConfig) -> Result<()> {
        let expected = Self::zeros(config);
        let ok = self.branch_kernels.len() == expected.branch_kernels.len()
            && self.branch_biases.len() == expected.branch_biases.len()
            && self.tensors().zip(expected.tensors()).all(|(a, b)| a.shape() == b.shape());
        if ok {
            Ok(())
        } else {
            Err(Error::Config("inception block parameters do not match the configuration".into()))
        }
    }

    /// Branch kernels and biases interleaved, then the residual projection.
    pub fn tensors(&self) -> impl Iterator<Item = &Tensor> {
        self.branch_kernels
            .iter()
            .zip(&self.branch_biases)
            .flat_map(|(k, b)| [k, b])
            .chain([&self.residual_kernels, &self.residual_bias])
    }

    pub fn tensors_mut(&mut self) -> impl Iterator<Item = &mut Tensor> {
        self.branch_kernels
            .iter_mut()
            .zip(self.branch_biases.iter_mut())
            .flat_map(|(k, b)| [k, b])
            .chain([&mut self.residual_kernels, &mut self.residual_bias])
    }

    pub fn names(&self) -> Vec<String> {
        let mut names = Vec::new();
        for i in 0..self.branch_kernels.len() {
            names.push(format!("irb.branch{i}.kernels"));
            names.push(format!("irb.branch{i}.bias"));
        }
        names.push("irb.residual.kernels".into());
        names.push("irb.residual.bias".into());
        names
    }

    pub fn register(&self, tape: &mut Tape) -> IrbVars {
        IrbVars {
            branch_kernels: self.branch_kernels.iter().map(|t| tape.leaf(t.clone())).collect(),
            branch_biases: self.branch_biases.iter().map(|t| tape.leaf(t.clone())).collect(),
            residual_kernels: tape.leaf(self.residual_kernels.clone()),
            residual_bias: tape.leaf(self.residual_bias.clone()),
        }
    }
}

impl IrbVars {
    /// Leaves in the same order as [`IrbParams::tensors`].
    pub fn leaves(&self) -> Vec<Var> {
        self.branch_kernels
            .iter()
            .zip(&self.branch_biases)
            .flat_map(|(&k, &b)| [k, b])
            .chain([self.residual_kernels, self.residual_bias])
            .collect()
    }
}

fn zero_biases(config: &IrbConfig) -> Vec<Tensor> {
    config
        .branches
        .iter()
        .map(|b| Tensor::zeros(vec![b.num_kernels]))
        .collect()
}

/// Encodes a trajectory `[T_N]`, or a batch of them `[M, T_N]`, into
/// `[total]` / `[M, total]` embeddings.
pub fn irb_forward(tape: &mut Tape, traj: Var, config: &IrbConfig, params: &IrbVars) -> Result<Var> {
    let shape = tape.value(traj).shape().to_vec();
    let (lead, t_n) = match shape[..] {
        [t] => (None, t),
        [m, t] => (Some(m), t),
        _ => return Err(Error::shape("irb_forward", &shape, &[config.input_len])),
    };
    if t_n != config.input_len {
        return Err(Error::shape("irb_forward", &shape, &[config.input_len]));
    }
    let flat = |features: usize| match lead {
        Some(m) => vec![m, features],
        None => vec![features],
    };

    let mut parts = Vec::with_capacity(config.branches.len() + 1);
    for (i, branch) in config.branches.iter().enumerate() {
        let window = tape.slice_last(traj, t_n - branch.input_len, branch.input_len)?;
        let out = tape
            .conv1d_valid(window, params.branch_kernels[i], params.branch_biases[i])
            .map_err(|e| Error::Config(format!("branch {i}: {e}")))?;
        parts.push(tape.reshape(out, &flat(branch.out_features()))?);
    }
    if config.passthrough_len > 0 {
        parts.push(tape.slice_last(traj, t_n - config.passthrough_len, config.passthrough_len)?);
    }
    let inception = tape.concat(&parts)?;

    let total = config.total_features();
    let projected = tape.conv1d_valid(traj, params.residual_kernels, params.residual_bias)?;
    let mut residual = tape.reshape(projected, &flat(config.residual_kernels * t_n))?;
    if config.residual_kernels * t_n > total {
        residual = tape.slice_last(residual, 0, total)?;
    }
    tape.add(inception, residual)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn default_block_arithmetic() {
        let c = default_config();
        let per: Vec<usize> = c.branches().iter().map(BranchSpec::out_features).collect();
        assert_eq!(per, vec![68, 48, 112, 78, 44]);
        assert_eq!(c.passthrough_len(), 10);
        assert_eq!(c.residual_kernels(), 36);
        assert_eq!(c.total_features(), 360);
    }

    #[test]
    fn default_needs_ten_frames() {
        assert!(IrbConfig::default_for(9).is_err());
        let long = IrbConfig::default_for(12).unwrap();
        assert_eq!(long.total_features(), 360);
        assert_eq!(long.residual_kernels(), 30);
    }

    #[test]
    fn degenerate_single_output_block() {
        let c = IrbConfig::new(3, vec![BranchSpec::new(3, 1, 3)], 0).unwrap();
        assert_eq!(c.total_features(), 1);
        assert_eq!(c.residual_kernels(), 1);
        let mut tape = Tape::new();
        let traj = tape.leaf(Tensor::from_vec(vec![1.0, 2.0, 3.0]).unwrap());
        let vars = IrbParams::zeros(&c).register(&mut tape);
        let e = irb_forward(&mut tape, traj, &c, &vars).unwrap();
        assert_eq!(tape.value(e).shape(), &[1]);
    }

    #[test]
    fn long_kernel_error_names_branch() {
        let err = IrbConfig::new(10, vec![BranchSpec::new(5, 2, 2), BranchSpec::new(5, 1, 6)], 0)
            .unwrap_err()
            .to_string();
        assert!(err.contains("branch 1"), "{err}");
    }

    #[test]
    fn sweep_presets_hit_their_totals() {
        let configs = sweep_configs();
        let totals: Vec<usize> = configs.iter().map(IrbConfig::total_features).collect();
        assert_eq!(totals, SWEEP_TOTALS.to_vec());
        assert_eq!(configs[2], default_config());
        for (total, counts) in SWEEP_TOTALS.iter().zip(SWEEP_KERNEL_COUNTS) {
            assert_eq!(search_kernel_counts(*total, 40), Some(counts));
        }
    }

    #[test]
    fn zero_trajectory_gives_zero_embedding() {
        let c = default_config();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let params = IrbParams::init(&c, &mut rng);
        let mut tape = Tape::new();
        let traj = tape.leaf(Tensor::zeros(vec![10]));
        let vars = params.register(&mut tape);
        let e = irb_forward(&mut tape, traj, &c, &vars).unwrap();
        assert_eq!(tape.value(e), &Tensor::zeros(vec![360]));
    }

    #[test]
    fn config_serde_roundtrip_and_validation() {
        let c = default_config();
        let text = serde_json::to_string(&c).unwrap();
        let back: IrbConfig = serde_json::from_str(&text).unwrap();
        assert_eq!(back, c);
        let bad = text.replace("\"residual_kernels\":36", "\"residual_kernels\":35");
        assert!(serde_json::from_str::<IrbConfig>(&bad).is_err());
        let unknown = text.replace("\"passthrough_len\"", "\"passtrough_len\"");
        assert!(serde_json::from_str::<IrbConfig>(&unknown).is_err());
    }
}
