use rand::RngCore;
use serde::{Deserialize, Serialize};

use super::{dropout, glorot, NUM_CLASSES};
use crate::nn::{Graph, Matrix, ParamId, ParamSet, Var};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Gelu,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HeadConfig {
    pub hidden: usize,
    pub activation: Activation,
    pub dropout: f64,
    pub num_classes: usize,
}

impl Default for HeadConfig {
    fn default() -> Self {
        HeadConfig {
            hidden: 1024,
            activation: Activation::Relu,
            dropout: 0.1,
            num_classes: NUM_CLASSES,
        }
    }
}

impl HeadConfig {
    pub fn with_activation(activation: Activation) -> Self {
        HeadConfig {
            activation,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.hidden == 0 || self.num_classes < 2 {
            return Err(Error::InvalidArgument(format!("degenerate head config {self:?}")));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::InvalidArgument(format!("dropout {} outside [0, 1)", self.dropout)));
        }
        Ok(())
    }
}

/// Dense → activation → dropout → dense, registered inside a model's
/// parameter set.
#[derive(Clone, Debug)]
pub struct ClassifierHead {
    cfg: HeadConfig,
    in_dim: usize,
    w1: ParamId,
    b1: ParamId,
    w2: ParamId,
    b2: ParamId,
}

impl ClassifierHead {
    pub fn register(
        params: &mut ParamSet,
        prefix: &str,
        in_dim: usize,
        cfg: HeadConfig,
        rng: &mut dyn RngCore,
    ) -> Result<Self> {
        cfg.validate()?;
        if in_dim == 0 {
            return Err(Error::InvalidArgument("head input dimension is zero".into()));
        }
        Ok(ClassifierHead {
            w1: params.add(format!("{prefix}.w1"), glorot(rng, in_dim, cfg.hidden)),
            b1: params.add(format!("{prefix}.b1"), Matrix::zeros((1, cfg.hidden))),
            w2: params.add(format!("{prefix}.w2"), glorot(rng, cfg.hidden, cfg.num_classes)),
            b2: params.add(format!("{prefix}.b2"), Matrix::zeros((1, cfg.num_classes))),
            cfg,
            in_dim,
        })
    }

    pub fn config(&self) -> &HeadConfig {
        &self.cfg
    }

    pub fn in_dim(&self) -> usize {
        self.in_dim
    }

    /// Logits for `x` (`batch × in_dim`).
    pub fn forward(&self, g: &mut Graph<'_>, x: Var, rng: Option<&mut dyn RngCore>) -> Result<Var> {
        if g.shape(x).1 != self.in_dim {
            return Err(Error::Shape(format!(
                "head expects {} features, got {}",
                self.in_dim,
                g.shape(x).1
            )));
        }
        let w1 = g.param(self.w1);
        let b1 = g.param(self.b1);
        let h = g.matmul(x, w1);
        let h = g.add_row(h, b1);
        let h = match self.cfg.activation {
            Activation::Relu => g.relu(h),
            Activation::Gelu => g.gelu(h),
        };
        let h = dropout(g, h, self.cfg.dropout, rng);
        let w2 = g.param(self.w2);
        let b2 = g.param(self.b2);
        let z = g.matmul(h, w2);
        Ok(g.add_row(z, b2))
    }
}

/// Explicit weights for [`classify_head`].
#[derive(Clone, Debug, PartialEq)]
pub struct HeadWeights {
    pub w1: Matrix,
    pub b1: Matrix,
    pub w2: Matrix,
    pub b2: Matrix,
}

/// Class probabilities for pooled representations (`batch × d`), without
/// dropout.
pub fn classify_head(pooled: &Matrix, weights: &HeadWeights, activation: Activation) -> Result<Matrix> {
    let HeadWeights { w1, b1, w2, b2 } = weights;
    if pooled.ncols() != w1.nrows()
        || b1.dim() != (1, w1.ncols())
        || w2.nrows() != w1.ncols()
        || b2.dim() != (1, w2.ncols())
    {
        return Err(Error::Shape(format!(
            "head weights {:?}/{:?}/{:?}/{:?} do not fit input {:?}",
            w1.dim(),
            b1.dim(),
            w2.dim(),
            b2.dim(),
            pooled.dim()
        )));
    }
    let mut params = ParamSet::new();
    let ids = [
        params.add("w1", w1.clone()),
        params.add("b1", b1.clone()),
        params.add("w2", w2.clone()),
        params.add("b2", b2.clone()),
    ];
    let head = ClassifierHead {
        cfg: HeadConfig {
            hidden: w1.ncols(),
            activation,
            dropout: 0.0,
            num_classes: w2.ncols(),
        },
        in_dim: w1.nrows(),
        w1: ids[0],
        b1: ids[1],
        w2: ids[2],
        b2: ids[3],
    };
    let mut g = Graph::new(&params);
    let x = g.input(pooled.clone());
    let z = head.forward(&mut g, x, None)?;
    let p = g.softmax_rows(z);
    Ok(g.value(p).clone())
}
