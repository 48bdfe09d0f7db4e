use std::collections::BTreeMap;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::ad::Tensor;
use crate::error::{Error, Result};
use crate::mabn::config::{MabnConfig, ModelArch};
use crate::rng::RngStream;

/// Mean and pre-softplus scale of a Bayesian linear map, both `[out, in]`.
#[derive(Debug, Clone, PartialEq)]
pub struct BayesianLinearParams {
    pub mu: Tensor,
    pub rho: Tensor,
}

impl BayesianLinearParams {
    pub fn new(mu: Tensor, rho: Tensor) -> Result<Self> {
        if mu.rank() != 2 || mu.shape() != rho.shape() {
            return Err(Error::Shape {
                op: "bayes_linear",
                detail: format!("mu {:?} vs rho {:?}", mu.shape(), rho.shape()),
            });
        }
        Ok(Self { mu, rho })
    }
}

/// Named parameter tensors of a predictor plus the config they were built for.
#[derive(Debug, Clone, PartialEq)]
pub struct MabnParams {
    pub config: MabnConfig,
    pub seed: u64,
    pub tensors: BTreeMap<String, Tensor>,
}

/// Parameter names and shapes a config requires, in a stable order.
pub fn param_layout(c: &MabnConfig) -> Vec<(String, Vec<usize>, Init)> {
    let mut out = Vec::new();
    let dense = |out: &mut Vec<_>, name: &str, o: usize, i: usize| {
        out.push((format!("{name}.w"), vec![o, i], Init::FanIn(i)));
        out.push((format!("{name}.b"), vec![o], Init::Const(0.0)));
    };
    match c.arch {
        ModelArch::MlpBaseline => {
            dense(&mut out, "mlp0", c.hidden_dim(), c.input_dim);
            dense(&mut out, "mlp1", c.segment_len, c.hidden_dim());
            dense(&mut out, "mlp2", 1, c.segment_len);
        }
        ModelArch::Mabn => {
            let (s, l) = (c.segments, c.segment_len);
            dense(&mut out, "proj", c.hidden_dim(), c.input_dim);
            bayes(&mut out, c, "bin", l, l);
            for b in 0..c.mixer_depth {
                out.push((format!("mix{b}.ln.g"), vec![l], Init::Const(1.0)));
                out.push((format!("mix{b}.ln.b"), vec![l], Init::Const(0.0)));
                dense(&mut out, &format!("mix{b}.tok1"), c.token_hidden(), s);
                dense(&mut out, &format!("mix{b}.tok2"), s, c.token_hidden());
                for (j, w) in c.channel_widths().windows(2).enumerate() {
                    dense(&mut out, &format!("mix{b}.ch{j}"), w[1], w[0]);
                }
            }
            bayes(&mut out, c, "bout", 1, s);
        }
    }
    out
}

fn bayes(out: &mut Vec<(String, Vec<usize>, Init)>, c: &MabnConfig, name: &str, o: usize, i: usize) {
    out.push((format!("{name}.mu"), vec![o, i], Init::FanIn(i)));
    if c.bayes {
        out.push((format!("{name}.rho"), vec![o, i], Init::Const(c.rho_init)));
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Init {
    /// `N(0, 1 / fan_in)`
    FanIn(usize),
    Const(f64),
}

/// Fan-in scaled normal weights, zero biases, unit layer-norm gains and a
/// constant `rho`.
pub fn init_params(config: &MabnConfig, seed: u64) -> Result<MabnParams> {
    config.validate()?;
    let rng = RngStream::new(seed, 0x1a17);
    let mut tensors = BTreeMap::new();
    for (k, (name, shape, init)) in param_layout(config).into_iter().enumerate() {
        let n: usize = shape.iter().product();
        let data = match init {
            Init::Const(v) => vec![v; n],
            Init::FanIn(fan_in) => {
                let mut g = rng.generator(k as u64);
                let std = 1.0 / (fan_in as f64).sqrt();
                (0..n).map(|_| std * g.sample::<f64, _>(StandardNormal)).collect()
            }
        };
        tensors.insert(name, Tensor::new(shape, data)?);
    }
    Ok(MabnParams {
        config: config.clone(),
        seed,
        tensors,
    })
}

impl MabnParams {
    pub fn get(&self, name: &str) -> Result<&Tensor> {
        self.tensors
            .get(name)
            .ok_or_else(|| Error::contract(format!("missing parameter `{name}`")))
    }

    pub fn bayesian(&self, layer: &str) -> Result<BayesianLinearParams> {
        BayesianLinearParams::new(
            self.get(&format!("{layer}.mu"))?.clone(),
            self.get(&format!("{layer}.rho"))?.clone(),
        )
    }

    pub fn num_scalars(&self) -> usize {
        self.tensors.values().map(Tensor::len).sum()
    }

    /// Checks names and shapes against the config.
    pub fn validate(&self) -> Result<()> {
        let layout = param_layout(&self.config);
        if layout.len() != self.tensors.len() {
            return Err(Error::contract(format!(
                "expected {} parameter tensors, found {}",
                layout.len(),
                self.tensors.len()
            )));
        }
        for (name, shape, _) in layout {
            let t = self.get(&name)?;
            if t.shape() != shape.as_slice() {
                return Err(Error::Shape {
                    op: "params",
                    detail: format!("`{name}` is {:?}, config needs {shape:?}", t.shape()),
                });
            }
        }
        Ok(())
    }
}
