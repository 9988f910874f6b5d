//! Central finite differences, the reference every analytic gradient is checked against.

use crate::error::{Error, Result};
use crate::par;
use crate::params::ParamSet;
use crate::tensor::Tensor;

/// `(f(θ+h·e_i) − f(θ−h·e_i)) / 2h` for every coordinate of every parameter.
pub fn finite_difference_gradient<F>(loss: F, params: &ParamSet, h: f64) -> Result<ParamSet>
where
    F: Fn(&ParamSet) -> Result<f64> + Sync + Send,
{
    if !(h > 0.0) {
        return Err(Error::InvalidInput(format!("finite-difference step must be positive, got {h}")));
    }
    let coords: Vec<(String, usize)> =
        params.iter().flat_map(|(name, t)| (0..t.len()).map(move |i| (name.to_string(), i))).collect();
    let partials = par::try_map(&coords, |(name, i)| {
        let mut probe = params.clone();
        let mut eval_at = |delta: f64| -> Result<f64> {
            probe.get_mut(name)?.data_mut()[*i] = params.get(name)?.data()[*i] + delta;
            loss(&probe)
        };
        let plus = eval_at(h)?;
        let minus = eval_at(-h)?;
        Ok((plus - minus) / (2.0 * h))
    })?;

    let mut out = ParamSet::new();
    let mut it = partials.into_iter();
    for (name, t) in params.iter() {
        let data: Vec<f64> = it.by_ref().take(t.len()).collect();
        out.insert(name, Tensor::new(t.shape(), data)?);
    }
    Ok(out)
}

/// Largest per-coordinate `|a−b| / max(|a|, |b|, floor)` across two gradient sets.
///
/// The floor keeps coordinates whose true derivative is (near) zero from
/// turning finite-difference round-off into huge relative errors.
pub fn max_relative_error(a: &ParamSet, b: &ParamSet, floor: f64) -> Result<f64> {
    let mut worst: f64 = 0.0;
    for (name, ta) in a.iter() {
        let tb = b.get(name)?;
        if ta.shape() != tb.shape() {
            return Err(Error::ShapeMismatch {
                op: "max_relative_error",
                lhs: ta.shape().to_string(),
                rhs: tb.shape().to_string(),
            });
        }
        for (&x, &y) in ta.data().iter().zip(tb.data()) {
            let denom = x.abs().max(y.abs()).max(floor);
            worst = worst.max((x - y).abs() / denom);
        }
    }
    if b.len() != a.len() {
        return Err(Error::InvalidInput("gradient sets cover different parameters".into()));
    }
    Ok(worst)
}
