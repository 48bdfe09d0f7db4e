//! Central-difference gradient checking.

use crate::ad::tape::{Bindings, Tape, Var};
use crate::ad::tensor::Tensor;
use crate::error::Result;
use crate::rng::RngStream;

/// Compares the reverse-mode gradient of a scalar function against central
/// differences at `point`.
///
/// `build` records the function on a fresh tape given the input var `"x"`
/// and returns its scalar output. The tape keeps one fixed random stream, so
/// dropout masks and Bayesian noise are frozen across the perturbed
/// evaluations. Returns the maximum over coordinates of
/// `|analytic - numeric| / max(1e-8, |numeric|)`; `f64::INFINITY` if either
/// side is non-finite or evaluation fails.
pub fn finite_diff_check<F>(build: F, point: &Tensor, eps: f64) -> f64
where
    F: Fn(&mut Tape, Var) -> Var,
{
    finite_diff_check_seeded(build, point, eps, RngStream::new(0x5eed, 0))
}

pub fn finite_diff_check_seeded<F>(build: F, point: &Tensor, eps: f64, rng: RngStream) -> f64
where
    F: Fn(&mut Tape, Var) -> Var,
{
    match run_check(build, point, eps, rng) {
        Ok(err) if err.is_nan() => f64::INFINITY,
        Ok(err) => err,
        Err(_) => f64::INFINITY,
    }
}

/// Like [`finite_diff_check_seeded`] for a graph with several inputs:
/// `build` records the whole function, the input `name` is varied around
/// `point`, and every other input is read from `rest`.
pub fn finite_diff_check_named<F>(
    build: F,
    name: &str,
    point: &Tensor,
    eps: f64,
    rng: RngStream,
    rest: &dyn Bindings,
) -> f64
where
    F: Fn(&mut Tape) -> Var,
{
    let mut tape = Tape::new(rng);
    let out = build(&mut tape);
    match check_tape(&mut tape, out, name, point, eps, rest) {
        Ok(err) if err.is_nan() => f64::INFINITY,
        Ok(err) => err,
        Err(_) => f64::INFINITY,
    }
}

struct Override<'a> {
    name: &'a str,
    value: Tensor,
    rest: &'a dyn Bindings,
}

impl Bindings for Override<'_> {
    fn lookup(&self, name: &str) -> Option<&Tensor> {
        if name == self.name {
            Some(&self.value)
        } else {
            self.rest.lookup(name)
        }
    }
}

fn run_check<F>(build: F, point: &Tensor, eps: f64, rng: RngStream) -> Result<f64>
where
    F: Fn(&mut Tape, Var) -> Var,
{
    let mut tape = Tape::new(rng);
    let x = tape.input("x");
    let out = build(&mut tape, x);
    let none: [(&str, Tensor); 0] = [];
    check_tape(&mut tape, out, "x", point, eps, &none)
}

fn check_tape(tape: &mut Tape, out: Var, name: &str, point: &Tensor, eps: f64, rest: &dyn Bindings) -> Result<f64> {
    let mut eval = |t: &Tensor| -> Result<f64> {
        tape.forward(&Override { name, value: t.clone(), rest })?;
        Ok(tape.value(out).and_then(Tensor::item).unwrap_or(f64::NAN))
    };
    let mut numeric = Vec::with_capacity(point.len());
    for i in 0..point.len() {
        let mut plus = point.clone();
        plus.data_mut()[i] += eps;
        let mut minus = point.clone();
        minus.data_mut()[i] -= eps;
        numeric.push((eval(&plus)? - eval(&minus)?) / (2.0 * eps));
    }

    tape.forward(&Override { name, value: point.clone(), rest })?;
    let seed = Tensor::full(tape.value(out).expect("evaluated").shape().to_vec(), 1.0);
    let grads = tape.backward(out, &seed)?;
    let analytic = grads
        .get(name)
        .ok_or_else(|| crate::Error::contract(format!("`{name}` is not an input of the checked graph")))?;

    let mut worst: f64 = 0.0;
    for (a, n) in analytic.data().iter().zip(&numeric) {
        if !a.is_finite() || !n.is_finite() {
            return Ok(f64::INFINITY);
        }
        worst = worst.max((a - n).abs() / n.abs().max(1e-8));
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_function_has_zero_error() {
        let err = finite_diff_check(
            |t, _x| t.constant(Tensor::scalar(3.0)),
            &Tensor::from_vec(vec![1.0, 2.0]),
            1e-6,
        );
        assert_eq!(err, 0.0);
    }

    #[test]
    fn square_matches_at_three() {
        let err = finite_diff_check(
            |t, x| {
                let y = t.mul(x, x);
                t.sum(y)
            },
            &Tensor::scalar(3.0),
            1e-6,
        );
        assert!(err < 1e-8, "{err}");
    }

    #[test]
    fn nan_is_infinite_error() {
        let err = finite_diff_check(|t, x| {
            let l = t.log(x);
            t.sum(l)
        }, &Tensor::scalar(-1.0), 1e-6);
        assert!(err.is_infinite());
    }
}
