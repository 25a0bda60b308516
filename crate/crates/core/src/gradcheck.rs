//! Central-difference verification of hand-written backward passes.
//!
//! All evaluation happens in `f64`. The scalar objective is
//! `sum_i r_i * y_i` for a fixed pseudo-random `r`, which avoids the blind
//! spots of a plain sum (e.g. softmax rows always summing to one).

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::params::{Gradients, ParameterTable};
use crate::tensor::Tensor;

pub const DEFAULT_EPS: f64 = 1e-5;

/// Denominator floor. Central differences with the default step carry about
/// 1e-11 of round-off, so gradients that are analytically zero (a bias in
/// front of batch norm) stay well below tolerance.
pub const ERROR_FLOOR: f64 = 1e-6;

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(ERROR_FLOOR)
}

pub fn objective_weights(shape: &[usize], seed: u64) -> Tensor<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n: usize = shape.iter().product();
    Tensor::from_parts(
        shape.to_vec(),
        (0..n).map(|_| rng.random_range(-1.0..1.0)).collect(),
    )
}

fn weighted(y: &Tensor<f64>, r: &Tensor<f64>) -> f64 {
    y.data().iter().zip(r.data()).map(|(a, b)| a * b).sum()
}

/// Max relative error over the coordinates of the `checked` targets.
/// A missing analytic gradient counts as zero.
pub(crate) fn fd_max_relative_error(
    targets: &mut [Tensor<f64>],
    analytic: &[Option<Tensor<f64>>],
    checked: &[bool],
    objective: impl Fn(&[Tensor<f64>]) -> Result<f64>,
    eps: f64,
) -> Result<f64> {
    let mut worst = 0.0f64;
    for t in 0..targets.len() {
        if !checked[t] {
            continue;
        }
        for i in 0..targets[t].len() {
            let orig = targets[t].data()[i];
            targets[t].data_mut()[i] = orig + eps;
            let plus = objective(targets)?;
            targets[t].data_mut()[i] = orig - eps;
            let minus = objective(targets)?;
            targets[t].data_mut()[i] = orig;
            let numeric = (plus - minus) / (2.0 * eps);
            let a = analytic[t].as_ref().map_or(0.0, |g| g.data()[i]);
            worst = worst.max(relative_error(a, numeric));
        }
    }
    Ok(worst)
}

#[derive(Clone, Debug)]
pub struct CheckOptions {
    pub eps: f64,
    /// Check at most this many randomly chosen coordinates per tensor.
    pub max_coords_per_tensor: Option<usize>,
    pub seed: u64,
}

impl Default for CheckOptions {
    fn default() -> Self {
        CheckOptions {
            eps: DEFAULT_EPS,
            max_coords_per_tensor: None,
            seed: 0x5eed,
        }
    }
}

#[derive(Clone, Debug)]
pub struct CheckReport {
    pub max_relative_error: f64,
    /// Where the worst disagreement occurred, e.g. `input 0[12]` or `etm.ffs.w[3]`.
    pub worst: String,
    pub coords_checked: usize,
}

fn pick_coords(n: usize, limit: Option<usize>, rng: &mut ChaCha8Rng) -> Vec<usize> {
    match limit {
        Some(k) if k < n => (0..k).map(|_| rng.random_range(0..n)).collect(),
        _ => (0..n).collect(),
    }
}

/// Verify a composite block. `forward` maps (inputs, params) to an output
/// tensor; `backward` receives the upstream gradient and returns gradients
/// for the inputs (`None` = not differentiated) and trainable parameters.
/// Inputs whose `perturb_inputs` flag is false are held fixed.
pub fn check_block<F, B>(
    inputs: &mut [Tensor<f64>],
    perturb_inputs: &[bool],
    params: &mut ParameterTable<f64>,
    forward: F,
    backward: B,
    opts: &CheckOptions,
) -> Result<CheckReport>
where
    F: Fn(&[Tensor<f64>], &ParameterTable<f64>) -> Result<Tensor<f64>>,
    B: Fn(
        &[Tensor<f64>],
        &ParameterTable<f64>,
        &Tensor<f64>,
    ) -> Result<(Vec<Option<Tensor<f64>>>, Gradients<f64>)>,
{
    let y = forward(inputs, params)?;
    let r = objective_weights(y.shape(), opts.seed);
    let (g_inputs, g_params) = backward(inputs, params, &r)?;
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed ^ 0xc0ffee);
    let eps = opts.eps;
    let mut report = CheckReport {
        max_relative_error: 0.0,
        worst: String::new(),
        coords_checked: 0,
    };
    let note = |err: f64, loc: String, report: &mut CheckReport| {
        report.coords_checked += 1;
        if err >= report.max_relative_error {
            report.max_relative_error = err;
            report.worst = loc;
        }
    };

    for t in 0..inputs.len() {
        if !perturb_inputs.get(t).copied().unwrap_or(false) {
            continue;
        }
        for i in pick_coords(inputs[t].len(), opts.max_coords_per_tensor, &mut rng) {
            let orig = inputs[t].data()[i];
            inputs[t].data_mut()[i] = orig + eps;
            let plus = weighted(&forward(inputs, params)?, &r);
            inputs[t].data_mut()[i] = orig - eps;
            let minus = weighted(&forward(inputs, params)?, &r);
            inputs[t].data_mut()[i] = orig;
            let numeric = (plus - minus) / (2.0 * eps);
            let a = g_inputs
                .get(t)
                .and_then(|g| g.as_ref())
                .map_or(0.0, |g| g.data()[i]);
            note(relative_error(a, numeric), format!("input {t}[{i}]"), &mut report);
        }
    }

    let paths: Vec<String> = params
        .iter()
        .filter(|(_, p)| p.trainable)
        .map(|(k, _)| k.to_string())
        .collect();
    for path in paths {
        let n = params.get(&path)?.len();
        for i in pick_coords(n, opts.max_coords_per_tensor, &mut rng) {
            let orig = params.get(&path)?.data()[i];
            params.get_mut(&path)?.data_mut()[i] = orig + eps;
            let plus = weighted(&forward(inputs, params)?, &r);
            params.get_mut(&path)?.data_mut()[i] = orig - eps;
            let minus = weighted(&forward(inputs, params)?, &r);
            params.get_mut(&path)?.data_mut()[i] = orig;
            let numeric = (plus - minus) / (2.0 * eps);
            let a = g_params.get(&path).map_or(0.0, |g| g.data()[i]);
            note(relative_error(a, numeric), format!("{path}[{i}]"), &mut report);
        }
    }
    Ok(report)
}
