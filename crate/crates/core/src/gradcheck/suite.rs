//! The finite-difference suite behind `irb-motion gradcheck`.

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{finite_diff_probe, relative_error, DEFAULT_STEP};
use crate::autodiff::{Fault, Tape, Var};
use crate::data::SamplePair;
use crate::error::Result;
use crate::gcn::{gcn_forward, GcnConfig, GcnInit, GcnLayerVars, GcnParams};
use crate::irb::{IrbConfig, IrbParams, IrbVars, irb_forward};
use crate::model::{Batch, LossKind, Model, ModelConfig, ModelParams};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CheckScale {
    /// Two joints, two graph layers, two output frames.
    Tiny,
    /// The reference model: default block, twelve graph layers, ten frames.
    Default,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CheckResult {
    pub name: String,
    pub max_rel_error: f64,
    /// Number of coordinates compared.
    pub coords: usize,
}

impl CheckResult {
    pub fn passed(&self, tolerance: f64) -> bool {
        self.max_rel_error <= tolerance
    }
}

type Build<'a> = dyn Fn(&mut Tape, &[Var]) -> Result<Var> + 'a;

struct Checker {
    rng: ChaCha8Rng,
    fault: Option<Fault>,
    /// Tensors larger than this are probed at a random subset of entries.
    max_coords: usize,
}

impl Checker {
    fn uniform(&mut self, shape: &[usize]) -> Tensor {
        Tensor::uniform(shape.to_vec(), 1.0, &mut self.rng)
    }

    /// Compares backward and finite-difference gradients of a random linear
    /// functional of `build`'s output.
    fn check(&mut self, name: &str, leaves: Vec<Tensor>, build: &Build) -> Result<CheckResult> {
        let weights = {
            let mut tape = Tape::new();
            let vars: Vec<Var> = leaves.iter().map(|t| tape.leaf(t.clone())).collect();
            let out = build(&mut tape, &vars)?;
            self.uniform(&[tape.value(out).numel(), 1])
        };
        let record = |tape: &mut Tape, values: &[Tensor]| -> Result<(Vec<Var>, Var)> {
            let vars: Vec<Var> = values.iter().map(|t| tape.leaf(t.clone())).collect();
            let out = build(tape, &vars)?;
            let n = tape.value(out).numel();
            let flat = tape.reshape(out, &[1, n])?;
            let w = tape.leaf(weights.clone());
            let dot = tape.matmul(flat, w)?;
            Ok((vars, tape.sum_all(dot)))
        };
        let mut tape = Tape::with_fault(self.fault);
        let (vars, loss) = record(&mut tape, &leaves)?;
        let analytic = tape.backward(loss, &vars)?.into_grads();
        let f = |values: &[Tensor]| {
            let mut t = Tape::new();
            let (_, l) = record(&mut t, values)?;
            Ok(t.value(l).item().expect("scalar"))
        };
        self.compare(name, &leaves, &analytic, f)
    }

    fn compare(&mut self, name: &str, leaves: &[Tensor], analytic: &[Tensor], f: impl FnMut(&[Tensor]) -> Result<f64>) -> Result<CheckResult> {
        let mut coords = Vec::new();
        for (li, t) in leaves.iter().enumerate() {
            if t.numel() <= self.max_coords {
                coords.extend((0..t.numel()).map(|i| (li, i)));
            } else {
                let mut picked = sample(&mut self.rng, t.numel(), self.max_coords).into_vec();
                picked.sort_unstable();
                coords.extend(picked.into_iter().map(|i| (li, i)));
            }
        }
        let numeric = finite_diff_probe(f, leaves, &coords, DEFAULT_STEP)?;
        let mut worst: f64 = 0.0;
        for li in 0..leaves.len() {
            let (a, n): (Vec<f64>, Vec<f64>) = coords
                .iter()
                .zip(&numeric)
                .filter(|((l, _), _)| *l == li)
                .map(|(&(_, i), &nv)| (analytic[li].data()[i], nv))
                .unzip();
            worst = worst.max(relative_error(&a, &n));
        }
        Ok(CheckResult { name: name.into(), max_rel_error: worst, coords: coords.len() })
    }
}

fn irb_vars(vars: &[Var], branches: usize) -> IrbVars {
    IrbVars {
        branch_kernels: (0..branches).map(|i| vars[2 * i]).collect(),
        branch_biases: (0..branches).map(|i| vars[2 * i + 1]).collect(),
        residual_kernels: vars[2 * branches],
        residual_bias: vars[2 * branches + 1],
    }
}

fn gcn_vars(vars: &[Var]) -> Vec<GcnLayerVars> {
    vars.chunks(3)
        .map(|c| GcnLayerVars { adjacency: c[0], weights: c[1], bias: c[2] })
        .collect()
}

/// Checks every primitive, the block, the stack and the composed model.
pub fn run_suite(scale: CheckScale, fault: Option<Fault>, seed: u64) -> Result<Vec<CheckResult>> {
    let mut c = Checker {
        rng: ChaCha8Rng::seed_from_u64(seed),
        fault,
        max_coords: match scale {
            CheckScale::Tiny => 256,
            CheckScale::Default => 24,
        },
    };
    let (joints, out_frames, layers) = match scale {
        CheckScale::Tiny => (2, 2, 2),
        CheckScale::Default => (4, 10, crate::gcn::DEFAULT_LAYERS),
    };
    let mut results = Vec::new();
    macro_rules! case {
        ($name:expr, [$($shape:expr),*], $build:expr) => {{
            let leaves = vec![$(c.uniform(&$shape)),*];
            results.push(c.check($name, leaves, &$build)?);
        }};
    }
    case!("conv1d_valid", [[10], [3, 4], [3]], |t: &mut Tape, v: &[Var]| t.conv1d_valid(v[0], v[1], v[2]));
    case!("conv1d_valid_batched", [[2, 10], [3, 4], [3]], |t: &mut Tape, v: &[Var]| t.conv1d_valid(v[0], v[1], v[2]));
    case!("matmul", [[3, 4], [4, 2]], |t: &mut Tape, v: &[Var]| t.matmul(v[0], v[1]));
    case!("concat", [[2, 3], [2, 4]], |t: &mut Tape, v: &[Var]| t.concat(&[v[0], v[1]]));
    case!("add", [[2, 3], [2, 3]], |t: &mut Tape, v: &[Var]| t.add(v[0], v[1]));
    case!("sub", [[2, 3], [2, 3]], |t: &mut Tape, v: &[Var]| t.sub(v[0], v[1]));
    case!("tanh", [[2, 3]], |t: &mut Tape, v: &[Var]| Ok(t.tanh(v[0])));
    case!("scale", [[2, 3]], |t: &mut Tape, v: &[Var]| Ok(t.scale(v[0], -2.5)));
    case!("sum_all", [[2, 3]], |t: &mut Tape, v: &[Var]| Ok(t.sum_all(v[0])));
    case!("reshape", [[2, 3]], |t: &mut Tape, v: &[Var]| t.reshape(v[0], &[3, 2]));
    case!("slice_last", [[2, 6]], |t: &mut Tape, v: &[Var]| t.slice_last(v[0], 1, 3));
    case!("add_row_bias", [[3, 4], [4]], |t: &mut Tape, v: &[Var]| t.add_row_bias(v[0], v[1]));
    case!("add_column", [[3, 4], [3]], |t: &mut Tape, v: &[Var]| t.add_column(v[0], v[1]));
    case!("gather", [[2, 3]], |t: &mut Tape, v: &[Var]| t.gather(v[0], vec![5, 0, 0, 2, 4, 1], &[3, 2]));
    case!("mean_norm", [[2, 2, 3]], |t: &mut Tape, v: &[Var]| Ok(t.mean_norm(v[0], false)));
    case!("mean_norm_squared", [[2, 2, 3]], |t: &mut Tape, v: &[Var]| Ok(t.mean_norm(v[0], true)));

    let irb = IrbConfig::default_for(10)?;
    let nodes = joints * 3;
    let mut leaves = vec![c.uniform(&[nodes, 10])];
    leaves.extend(IrbParams::init(&irb, &mut c.rng).tensors().cloned());
    let branches = irb.branches().len();
    results.push(c.check("irb_forward", leaves, &|t: &mut Tape, v: &[Var]| {
        irb_forward(t, v[0], &irb, &irb_vars(&v[1..], branches))
    })?);

    // Under the plain init a 12-layer stack passes ~1e-14 of the signal, which
    // central differences cannot resolve, so the deep check uses the stable init.
    let deep = scale == CheckScale::Default;
    let init = if deep { GcnInit::stable() } else { GcnInit::default() };
    let gcn = GcnConfig::new(layers, nodes, irb.total_features(), out_frames)?;
    let mut leaves = vec![c.uniform(&[nodes, gcn.hidden_features]), c.uniform(&[nodes])];
    leaves.extend(GcnParams::init(&gcn, &init, &mut c.rng).tensors().cloned());
    results.push(c.check("gcn_forward", leaves, &|t: &mut Tape, v: &[Var]| {
        gcn_forward(t, v[0], v[1], &gcn, &gcn_vars(&v[2..]), 1)
    })?);

    let mut model = ModelConfig::new(joints, 10, out_frames, irb, layers)?;
    if deep {
        model = model.with_stable_init();
    }
    results.push(check_model(&mut c, model)?);
    Ok(results)
}

/// Loss of the full model on one random sample, against every parameter tensor.
fn check_model(c: &mut Checker, config: ModelConfig) -> Result<CheckResult> {
    let k = config.joints;
    let sample = SamplePair {
        past: c.uniform(&[config.input_frames, k, 3]),
        future: c.uniform(&[config.output_frames, k, 3]),
    };
    let model = Model::init(config, c.rng.random())?;
    let batch = Batch::new(&model.config, &[&sample])?;
    let (_, analytic) = model.loss_and_grads(&batch, LossKind::Mpjpe, c.fault)?;
    let leaves: Vec<Tensor> = model.params.tensors().cloned().collect();
    let f = |values: &[Tensor]| {
        let m = Model::new(model.config.clone(), ModelParams::from_tensors(&model.config, values.to_vec())?)?;
        Ok(m.loss_and_grads(&batch, LossKind::Mpjpe, None)?.0)
    };
    c.compare("model", &leaves, &analytic, f)
}
