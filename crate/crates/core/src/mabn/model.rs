use std::collections::BTreeMap;

use crate::ad::{Bindings, Tape, Tensor, Var};
use crate::error::{Error, Result};
use crate::mabn::config::{MabnConfig, ModelArch};
use crate::mabn::params::{BayesianLinearParams, MabnParams};
use crate::rng::RngStream;

/// Weight noise for a single Bayesian layer.
#[derive(Debug, Clone, PartialEq)]
pub enum Noise {
    /// Fresh `eps ~ N(0, I)` from the tape's random stream.
    Sample,
    /// Caller-supplied `eps`, shaped like the weights.
    Frozen(Tensor),
    /// `eps = 0`: the posterior mean.
    Mean,
}

/// Weight noise for every Bayesian layer of a predictor.
#[derive(Debug, Clone, PartialEq, Default)]
pub enum BayesMode {
    Sample,
    /// `eps` per layer name (`"bin"`, `"bout"`).
    Frozen(BTreeMap<String, Tensor>),
    #[default]
    Mean,
}

impl BayesMode {
    fn noise(&self, layer: &str) -> Result<Noise> {
        match self {
            BayesMode::Sample => Ok(Noise::Sample),
            BayesMode::Mean => Ok(Noise::Mean),
            BayesMode::Frozen(m) => m
                .get(layer)
                .cloned()
                .map(Noise::Frozen)
                .ok_or_else(|| Error::contract(format!("no frozen noise for layer `{layer}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ForwardMode {
    pub bayes: BayesMode,
    /// Enables dropout.
    pub train: bool,
}

impl ForwardMode {
    pub fn eval() -> Self {
        Self::default()
    }

    pub fn train() -> Self {
        Self {
            bayes: BayesMode::Sample,
            train: true,
        }
    }
}

/// `y = x W^T` with `W = mu + softplus(rho) * eps`, recorded on `tape`.
pub fn bayes_linear_on_tape(tape: &mut Tape, x: Var, mu: Var, rho: Var, shape: &[usize], noise: Noise) -> Var {
    let w = match noise {
        Noise::Mean => mu,
        Noise::Sample => {
            let eps = tape.randn(shape);
            scaled_noise(tape, mu, rho, eps)
        }
        Noise::Frozen(e) => {
            let eps = tape.constant(e);
            scaled_noise(tape, mu, rho, eps)
        }
    };
    let wt = tape.transpose(w);
    tape.matmul(x, wt)
}

fn scaled_noise(tape: &mut Tape, mu: Var, rho: Var, eps: Var) -> Var {
    let sigma = tape.softplus(rho);
    let d = tape.mul(sigma, eps);
    tape.add(mu, d)
}

/// Evaluates one Bayesian linear layer on `x` (`[.., in]`).
pub fn bayes_linear(x: &Tensor, p: &BayesianLinearParams, noise: Noise, rng: RngStream) -> Result<Tensor> {
    if let Noise::Frozen(e) = &noise {
        if e.shape() != p.mu.shape() {
            return Err(Error::Shape {
                op: "bayes_linear",
                detail: format!("eps {:?} vs weights {:?}", e.shape(), p.mu.shape()),
            });
        }
    }
    let mut tape = Tape::new(rng);
    let (xv, mu, rho) = (tape.input("x"), tape.input("mu"), tape.input("rho"));
    let y = bayes_linear_on_tape(&mut tape, xv, mu, rho, p.mu.shape(), noise);
    tape.mark_output("y", y);
    let bind = [("x", x.clone()), ("mu", p.mu.clone()), ("rho", p.rho.clone())];
    Ok(tape.forward(&bind)?.remove("y").expect("marked"))
}

fn dense(tape: &mut Tape, x: Var, name: &str) -> Var {
    let w = tape.input(&format!("{name}.w"));
    let b = tape.input(&format!("{name}.b"));
    let wt = tape.transpose(w);
    let y = tape.matmul(x, wt);
    tape.add(y, b)
}

fn bayes_layer(tape: &mut Tape, x: Var, c: &MabnConfig, name: &str, shape: &[usize], mode: &BayesMode) -> Result<Var> {
    let mu = tape.input(&format!("{name}.mu"));
    if !c.bayes {
        let wt = tape.transpose(mu);
        return Ok(tape.matmul(x, wt));
    }
    let rho = tape.input(&format!("{name}.rho"));
    Ok(bayes_linear_on_tape(tape, x, mu, rho, shape, mode.noise(name)?))
}

/// One segment-mixer block on `h` shaped `[N, S, L]`.
///
/// Layer norm over the segment axis, a cross-segment feed-forward applied
/// on the transposed view with a residual, then a per-segment channel path
/// (`head_repeats` Linear/ReLU/Dropout maps) with a second residual. With
/// all feed-forward weights zero the block reduces to the normalised input.
pub fn mixer_block(tape: &mut Tape, h: Var, block: usize, c: &MabnConfig, train: bool) -> Var {
    let p = |s: &str| format!("mix{block}.{s}");
    let g = tape.input(&p("ln.g"));
    let b = tape.input(&p("ln.b"));
    let n = tape.layernorm(h);
    let n = tape.mul(n, g);
    let n = tape.add(n, b);

    let t = tape.transpose(n);
    let f = dense(tape, t, &p("tok1"));
    let f = tape.relu(f);
    let f = dense(tape, f, &p("tok2"));
    let t = tape.add(t, f);
    let back = tape.transpose(t);

    let drop = if train { c.dropout } else { 0.0 };
    let mut ch = back;
    for j in 0..c.head_repeats {
        ch = dense(tape, ch, &p(&format!("ch{j}")));
        ch = tape.relu(ch);
        ch = tape.dropout(ch, drop);
    }
    tape.add(back, ch)
}

/// Records the predictor for a batch of `n` rows. Parameters are tape
/// inputs named after their keys in [`MabnParams::tensors`]; the features
/// are bound as `"x"`. Returns `(x, scores)` with scores shaped `[n]`.
pub fn record_forward(tape: &mut Tape, n: usize, c: &MabnConfig, mode: &ForwardMode) -> Result<(Var, Var)> {
    let x = tape.input("x");
    let (s, l) = (c.segments, c.segment_len);
    let drop = if mode.train { c.dropout } else { 0.0 };
    let y = match c.arch {
        ModelArch::MlpBaseline => {
            let h = dense(tape, x, "mlp0");
            let h = tape.relu(h);
            let h = tape.dropout(h, drop);
            let h = dense(tape, h, "mlp1");
            let h = tape.relu(h);
            let h = tape.dropout(h, drop);
            dense(tape, h, "mlp2")
        }
        ModelArch::Mabn => {
            let h = dense(tape, x, "proj");
            let mut h = tape.reshape(h, &[n, s, l]);
            h = bayes_layer(tape, h, c, "bin", &[l, l], &mode.bayes)?;
            for b in 0..c.mixer_depth {
                h = mixer_block(tape, h, b, c, mode.train);
            }
            let pooled = tape.mean_last(h);
            bayes_layer(tape, pooled, c, "bout", &[1, s], &mode.bayes)?
        }
    };
    let out = tape.reshape(y, &[n]);
    Ok((x, out))
}

fn check_input(x: &Tensor, c: &MabnConfig) -> Result<usize> {
    if x.rank() != 2 || x.shape()[1] != c.input_dim {
        return Err(Error::Shape {
            op: "mabn_forward",
            detail: format!("features {:?}, model expects [N, {}]", x.shape(), c.input_dim),
        });
    }
    Ok(x.shape()[0])
}

/// Scores every row of `x` (`[N, D]`).
pub fn mabn_forward(x: &Tensor, params: &MabnParams, mode: &ForwardMode, rng: RngStream) -> Result<Vec<f64>> {
    let n = check_input(x, &params.config)?;
    let mut tape = Tape::new(rng);
    let (_, out) = record_forward(&mut tape, n, &params.config, mode)?;
    tape.mark_output("y", out);
    let bind = (&params.tensors, [("x", x.clone())]);
    let held: &dyn Bindings = &bind;
    Ok(tape.forward(held)?.remove("y").expect("marked").into_vec())
}

/// Posterior-mean scores when `mc_samples == 0`, otherwise the average of
/// `mc_samples` weight draws. Dropout is off.
pub fn predict(x: &Tensor, params: &MabnParams, mc_samples: usize, rng: RngStream) -> Result<Vec<f64>> {
    if mc_samples == 0 || !params.config.bayes {
        return mabn_forward(x, params, &ForwardMode::eval(), rng);
    }
    let n = check_input(x, &params.config)?;
    let mut tape = Tape::new(rng);
    let mode = ForwardMode {
        bayes: BayesMode::Sample,
        train: false,
    };
    let (_, out) = record_forward(&mut tape, n, &params.config, &mode)?;
    tape.mark_output("y", out);
    let bind = (&params.tensors, [("x", x.clone())]);
    let mut acc = vec![0.0; n];
    for s in 0..mc_samples {
        tape.set_rng(rng.split(s as u64));
        let y = tape.forward(&bind)?.remove("y").expect("marked");
        for (a, v) in acc.iter_mut().zip(y.data()) {
            *a += v;
        }
    }
    Ok(acc.into_iter().map(|a| a / mc_samples as f64).collect())
}
