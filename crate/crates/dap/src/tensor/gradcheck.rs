//! Central finite-difference verification of backward passes.

use crate::error::{Error, Result};

use super::Tensor;

#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub max_rel_err: f64,
    pub pass: bool,
}

/// Compares analytic gradients of the scalar-valued `f` at `x` against
/// central differences with step `h`. Relative error uses the denominator
/// max(|analytic|, |numeric|, 1e-8).
pub fn grad_check(
    f: impl Fn(&Tensor) -> Result<Tensor>,
    x: &Tensor,
    h: f64,
    tol: f64,
) -> Result<GradCheckReport> {
    let loss = f(x)?;
    if loss.numel() != 1 {
        return Err(Error::Shape(
            format!("{:?}", loss.shape()),
            "[1] (grad_check needs a scalar function)".into(),
        ));
    }
    if !loss.item().is_finite() {
        return Err(Error::NumericDivergence("non-finite f(x) in grad_check".into()));
    }
    x.zero_grad();
    loss.backward()?;
    let analytic = x
        .grad()
        .unwrap_or_else(|| vec![0.0; x.numel()]);
    x.zero_grad();

    let base = x.to_vec();
    let mut max_rel_err: f64 = 0.0;
    for i in 0..base.len() {
        let mut probe = base.clone();
        probe[i] = base[i] + h;
        x.set_data(probe.clone());
        let fp = super::no_grad(|| f(x)).map(|t| t.item())?;
        probe[i] = base[i] - h;
        x.set_data(probe);
        let fm = super::no_grad(|| f(x)).map(|t| t.item())?;
        let numeric = (fp - fm) / (2.0 * h);
        let denom = analytic[i].abs().max(numeric.abs()).max(1e-8);
        max_rel_err = max_rel_err.max((analytic[i] - numeric).abs() / denom);
    }
    x.set_data(base);
    Ok(GradCheckReport {
        max_rel_err,
        pass: max_rel_err < tol,
    })
}
