//! Central-finite-difference verification of tape gradients.

use alloc::vec::Vec;

use super::{Tape, Tensor, TensorError, Var};

fn eval<F>(f: &F, input: &Tensor) -> Result<f64, TensorError>
where
    F: Fn(&mut Tape, Var) -> Result<Var, TensorError>,
{
    let mut tape = Tape::new();
    let x = tape.leaf(input.clone(), false);
    let y = f(&mut tape, x)?;
    let yv = tape.value(y);
    if yv.numel() != 1 {
        return Err(TensorError::NonScalarLoss { numel: yv.numel() });
    }
    Ok(yv.item() as f64)
}

/// Compare the tape gradient of a scalar-valued function against central
/// finite differences. Returns the maximum over coordinates of
/// `|autodiff - central| / max(|central|, 1e-6)`.
///
/// Kinked functions (ReLU at 0) make finite differences unreliable; use
/// [`gradient_check_masked`] to exclude coordinates sitting on a kink.
pub fn gradient_check<F>(f: F, input: &Tensor, step: f32) -> Result<f32, TensorError>
where
    F: Fn(&mut Tape, Var) -> Result<Var, TensorError>,
{
    gradient_check_masked(f, input, step, |_, _| true)
}

/// As [`gradient_check`], but only coordinates for which
/// `include(index, value)` returns true participate in the maximum.
pub fn gradient_check_masked<F, M>(
    f: F,
    input: &Tensor,
    step: f32,
    include: M,
) -> Result<f32, TensorError>
where
    F: Fn(&mut Tape, Var) -> Result<Var, TensorError>,
    M: Fn(usize, f32) -> bool,
{
    let autodiff: Vec<f32> = {
        let mut tape = Tape::new();
        let x = tape.leaf(input.clone(), true);
        let y = f(&mut tape, x)?;
        tape.backward(y)?;
        tape.grad_or_zeros(x)
    };

    let mut max_rel = 0.0f64;
    for i in 0..input.numel() {
        if !include(i, input.data()[i]) {
            continue;
        }
        let mut plus = input.clone();
        plus.data_mut()[i] += step;
        let mut minus = input.clone();
        minus.data_mut()[i] -= step;
        let central = (eval(&f, &plus)? - eval(&f, &minus)?) / (2.0 * step as f64);
        let rel = (autodiff[i] as f64 - central).abs() / central.abs().max(1e-6);
        if rel > max_rel {
            max_rel = rel;
        }
    }
    Ok(max_rel as f32)
}
