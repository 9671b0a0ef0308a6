//! Discriminative heads mapping a completed target to designs: the plain MLP
//! regressor and the mixture density network.

use super::mixture::{MixtureDensity, LN_2PI};
use crate::rng::Rng;
use crate::tensor::{softmax_slice, Activation, Bound, Mlp, ParamStore, Tape, Tensor, Var};
use crate::{Error, Result};

/// Clamp on log-variances produced by the mixture head.
pub const MDN_LOGVAR_CLAMP: f64 = 20.0;

/// Mixture density head: three sub-networks producing mixing logits,
/// component means and per-component log-variances.
#[derive(Clone, Debug, PartialEq)]
pub struct MdnHead {
    pub components: usize,
    pub out_dim: usize,
    pub weight_net: Mlp,
    pub mean_net: Mlp,
    pub logvar_net: Mlp,
}

/// Tape handles of one MDN forward pass.
#[derive(Clone, Copy, Debug)]
pub struct MdnOutput {
    /// `[b × K]` log mixing weights (log-softmax of the weight net).
    pub log_weights: Var,
    /// `[b × K·M]` component means, component-major.
    pub means: Var,
    /// `[b × K]` clamped log-variances.
    pub logvars: Var,
}

impl MdnHead {
    pub fn new(
        store: &mut ParamStore,
        inputs: usize,
        hidden: &[usize],
        out_dim: usize,
        components: usize,
        rng: &mut Rng,
    ) -> Self {
        let weight_net = Mlp::new(store, "mdn.weight", inputs, hidden, components, Activation::Identity, rng);
        let mean_net = Mlp::new(store, "mdn.mean", inputs, hidden, components * out_dim, Activation::Identity, rng);
        let logvar_net = Mlp::new(store, "mdn.logvar", inputs, hidden, components, Activation::Identity, rng);
        Self {
            components,
            out_dim,
            weight_net,
            mean_net,
            logvar_net,
        }
    }

    pub fn forward(&self, tape: &mut Tape, bound: &Bound, cond: Var) -> Result<MdnOutput> {
        let logits = self.weight_net.forward(tape, bound, cond)?;
        tape.check_finite(logits, "mdn weight net")?;
        let means = self.mean_net.forward(tape, bound, cond)?;
        tape.check_finite(means, "mdn mean net")?;
        let raw = self.logvar_net.forward(tape, bound, cond)?;
        tape.check_finite(raw, "mdn log-variance net")?;
        Ok(MdnOutput {
            log_weights: tape.log_softmax_rows(logits),
            means,
            logvars: tape.clamp(raw, -MDN_LOGVAR_CLAMP, MDN_LOGVAR_CLAMP),
        })
    }

    /// `[b × 1]` per-row mixture log-density of `x: [b × M]`.
    pub fn log_density_rows(&self, tape: &mut Tape, out: &MdnOutput, x: Var) -> Result<Var> {
        let m = self.out_dim;
        let mut terms = Vec::with_capacity(self.components);
        for k in 0..self.components {
            let mu = tape.slice_cols(out.means, k * m, (k + 1) * m)?;
            let d = tape.sub(x, mu)?;
            let d2 = tape.square(d);
            let sq = tape.sum_rows(d2);
            let lv = tape.slice_cols(out.logvars, k, k + 1)?;
            let neg_lv = tape.neg(lv);
            let precision = tape.exp(neg_lv);
            let q = tape.mul(sq, precision)?;
            let q = tape.scale(q, -0.5);
            let norm = tape.scale(lv, -0.5 * m as f64);
            let t = tape.add(q, norm)?;
            terms.push(tape.add_scalar(t, -0.5 * m as f64 * LN_2PI));
        }
        let comp = tape.concat_cols(&terms)?;
        let joint = tape.add(comp, out.log_weights)?;
        Ok(tape.log_sum_exp_rows(joint))
    }

    /// Reads row `r` of a forward pass back as a [`MixtureDensity`].
    pub fn mixture_at(&self, tape: &Tape, out: &MdnOutput, r: usize) -> Result<MixtureDensity> {
        let (k, m) = (self.components, self.out_dim);
        let lw = &tape.value(out.log_weights)[r * k..(r + 1) * k];
        let weights = softmax_slice(lw);
        let mv = &tape.value(out.means)[r * k * m..(r + 1) * k * m];
        let means = mv.chunks(m).map(<[f64]>::to_vec).collect();
        let variances = tape.value(out.logvars)[r * k..(r + 1) * k]
            .iter()
            .map(|v| v.exp())
            .collect();
        MixtureDensity::new(weights, means, variances)
    }
}

/// Either predictor family.
#[derive(Clone, Debug, PartialEq)]
pub enum PredictorNet {
    Mlp(Mlp),
    Mdn(MdnHead),
}

/// Predictor network plus its parameter store (γ).
#[derive(Clone, Debug, PartialEq)]
pub struct Predictor {
    pub net: PredictorNet,
    pub params: ParamStore,
}

impl Predictor {
    pub fn mlp(inputs: usize, hidden: &[usize], outputs: usize, rng: &mut Rng) -> Self {
        let mut params = ParamStore::new("gamma");
        let net = Mlp::new(&mut params, "mlp", inputs, hidden, outputs, Activation::Identity, rng);
        Self {
            net: PredictorNet::Mlp(net),
            params,
        }
    }

    pub fn mdn(inputs: usize, hidden: &[usize], outputs: usize, components: usize, rng: &mut Rng) -> Self {
        let mut params = ParamStore::new("gamma");
        let net = MdnHead::new(&mut params, inputs, hidden, outputs, components, rng);
        Self {
            net: PredictorNet::Mdn(net),
            params,
        }
    }

    pub fn is_mixture(&self) -> bool {
        matches!(self.net, PredictorNet::Mdn(_))
    }

    pub fn inputs(&self) -> usize {
        match &self.net {
            PredictorNet::Mlp(m) => m.inputs(),
            PredictorNet::Mdn(h) => h.weight_net.inputs(),
        }
    }

    pub fn outputs(&self) -> usize {
        match &self.net {
            PredictorNet::Mlp(m) => m.outputs(),
            PredictorNet::Mdn(h) => h.out_dim,
        }
    }

    /// `Σ_rows log P_γ(x | cond)`. The MLP is read as a unit-variance Gaussian
    /// around its output, so maximizing this is least squares.
    pub fn log_likelihood(&self, tape: &mut Tape, bound: &Bound, cond: Var, x: Var) -> Result<Var> {
        match &self.net {
            PredictorNet::Mlp(net) => {
                let f = net.forward(tape, bound, cond)?;
                tape.check_finite(f, "mlp predictor")?;
                let d = tape.sub(x, f)?;
                let sq = tape.square(d);
                let s = tape.sum(sq);
                let rows = tape.dims(x).0 as f64;
                let m = net.outputs() as f64;
                let half = tape.scale(s, -0.5);
                Ok(tape.add_scalar(half, -0.5 * m * LN_2PI * rows))
            }
            PredictorNet::Mdn(head) => {
                let out = head.forward(tape, bound, cond)?;
                let rows = head.log_density_rows(tape, &out, x)?;
                Ok(tape.sum(rows))
            }
        }
    }

    /// Conditional distributions for each row of `cond` (row-major, `inputs`
    /// wide). MLP outputs become point masses.
    pub fn distributions(&self, cond: &[f64]) -> Result<Vec<MixtureDensity>> {
        let width = self.inputs();
        if width == 0 || cond.len() % width != 0 {
            return Err(Error::dim("predictor condition", &[width], &[cond.len()]));
        }
        let rows = cond.len() / width;
        let mut tape = Tape::new();
        let bound = self.params.bind_frozen(&mut tape);
        let c = tape.constant(Tensor::matrix(rows, width, cond.to_vec())?);
        match &self.net {
            PredictorNet::Mlp(net) => {
                let f = net.forward(&mut tape, &bound, c)?;
                tape.check_finite(f, "mlp predictor")?;
                let m = net.outputs();
                Ok(tape.value(f).chunks(m).map(|r| MixtureDensity::point_mass(r.to_vec())).collect())
            }
            PredictorNet::Mdn(head) => {
                let out = head.forward(&mut tape, &bound, c)?;
                (0..rows).map(|r| head.mixture_at(&tape, &out, r)).collect()
            }
        }
    }
}

/// Negative log-likelihood of `x` under the head's mixture given `condition`,
/// for a single example. Differentiable w.r.t. γ and the condition.
pub fn mdn_nll(tape: &mut Tape, head: &MdnHead, bound: &Bound, condition: Var, x: Var) -> Result<Var> {
    let out = head.forward(tape, bound, condition)?;
    let ll = head.log_density_rows(tape, &out, x)?;
    let s = tape.sum(ll);
    Ok(tape.neg(s))
}
