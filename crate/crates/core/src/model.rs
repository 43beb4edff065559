//! The forecaster: a mixed channel-embedding block shared across time
//! steps, two prediction paths with their own per-channel (or per-group)
//! linear heads, and averaging of the two paths' outputs.
//!
//! Each channel's lookback vector is one token. The embedding block runs
//! pre-norm transformer encoder layers followed by token-wise MLP blocks
//! between an L→d_model and a d_model→L projection, and collapses to the
//! identity when both layer counts are zero.

use serde::{Deserialize, Serialize};

use crate::cluster::Grouping;
use crate::revin::{self, RevinParams, RevinState};
use crate::rng::Rng;
use crate::tensor::Tensor;
use crate::{Error, Result};

fn default_d_model() -> usize {
    256
}

fn default_n_heads() -> usize {
    8
}

fn default_true() -> bool {
    true
}

/// Architecture hyperparameters of one forecaster instance.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelConfig {
    pub n_channels: usize,
    pub lookback: usize,
    pub horizon: usize,
    #[serde(default)]
    pub n_transformer_layers: usize,
    #[serde(default)]
    pub n_mlp_layers: usize,
    #[serde(default = "default_d_model")]
    pub d_model: usize,
    #[serde(default = "default_n_heads")]
    pub n_heads: usize,
    #[serde(default)]
    pub dropout: f64,
    #[serde(default = "default_true")]
    pub channel_independent: bool,
    #[serde(default)]
    pub grouping: Option<Grouping>,
    #[serde(default = "default_true")]
    pub revin_affine: bool,
    /// Ablation: keep only the raw-path heads, no embedding, no averaging.
    #[serde(default)]
    pub raw_only: bool,
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_channels == 0 || self.lookback == 0 || self.horizon == 0 {
            return Err(Error::Config("channels, lookback, and horizon must be ≥ 1".into()));
        }
        if self.d_model == 0 || self.n_heads == 0 || !self.d_model.is_multiple_of(self.n_heads) {
            return Err(Error::Config(format!(
                "d_model {} must be a positive multiple of n_heads {}",
                self.d_model, self.n_heads
            )));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::InvalidDropoutRate(self.dropout));
        }
        if let Some(g) = &self.grouping {
            g.validate(self.n_channels)?;
        }
        Ok(())
    }

    fn has_embedding(&self) -> bool {
        !self.raw_only && self.n_transformer_layers + self.n_mlp_layers > 0
    }

    /// Number of distinct head parameter sets per path.
    pub fn head_count(&self) -> usize {
        if !self.channel_independent {
            1
        } else if let Some(g) = &self.grouping {
            g.group_count
        } else {
            self.n_channels
        }
    }

}

/// Dense layer y = x·W + b with W: in×out.
#[derive(Debug, Clone)]
pub struct Linear {
    pub weight: Tensor,
    pub bias: Tensor,
}

impl Linear {
    fn init(fan_in: usize, fan_out: usize, rng: &mut Rng) -> Linear {
        let bound = 1.0 / (fan_in as f64).sqrt();
        let w: Vec<f64> = (0..fan_in * fan_out).map(|_| rng.uniform(-bound, bound)).collect();
        let b: Vec<f64> = (0..fan_out).map(|_| rng.uniform(-bound, bound)).collect();
        Linear {
            weight: Tensor::from_vec(w, &[fan_in, fan_out]).unwrap(),
            bias: Tensor::from_vec(b, &[fan_out]).unwrap(),
        }
    }

    pub fn apply(&self, x: &Tensor) -> Result<Tensor> {
        x.matmul(&self.weight)?.add(&self.bias)
    }
}

#[derive(Debug, Clone)]
pub struct LayerNormParams {
    pub gain: Tensor,
    pub bias: Tensor,
}

impl LayerNormParams {
    fn new(d: usize) -> LayerNormParams {
        LayerNormParams { gain: Tensor::ones(&[d]), bias: Tensor::zeros(&[d]) }
    }

    fn apply(&self, x: &Tensor) -> Result<Tensor> {
        x.layer_norm(&self.gain, &self.bias)
    }
}

/// One pre-norm encoder layer: attention over channel tokens plus a
/// position-wise feed-forward of width 4·d_model, both with residuals.
#[derive(Debug, Clone)]
pub struct EncoderLayerParams {
    pub ln1: LayerNormParams,
    pub q: Linear,
    pub k: Linear,
    pub v: Linear,
    pub o: Linear,
    pub ln2: LayerNormParams,
    pub ff1: Linear,
    pub ff2: Linear,
}

/// Token-wise block: linear, GELU, dropout, layer norm.
#[derive(Debug, Clone)]
pub struct MlpBlockParams {
    pub lin: Linear,
    pub ln: LayerNormParams,
}

#[derive(Debug, Clone)]
pub struct EmbeddingParams {
    pub in_proj: Linear,
    pub layers: Vec<EncoderLayerParams>,
    pub blocks: Vec<MlpBlockParams>,
    pub out_proj: Linear,
}

/// All learnable parameters of one forecaster.
#[derive(Debug, Clone)]
pub struct ModelParams {
    pub revin: RevinParams,
    pub embedding: Option<EmbeddingParams>,
    pub heads_raw: Vec<Linear>,
    pub heads_emb: Vec<Linear>,
}

pub struct Model {
    pub config: ModelConfig,
    pub params: ModelParams,
}

impl Model {
    pub fn new(config: ModelConfig, rng: &mut Rng) -> Result<Model> {
        config.validate()?;
        let d = config.d_model;
        let revin = RevinParams::new(config.n_channels, config.revin_affine);
        let embedding = if config.has_embedding() {
            let in_proj = Linear::init(config.lookback, d, rng);
            let layers = (0..config.n_transformer_layers)
                .map(|_| EncoderLayerParams {
                    ln1: LayerNormParams::new(d),
                    q: Linear::init(d, d, rng),
                    k: Linear::init(d, d, rng),
                    v: Linear::init(d, d, rng),
                    o: Linear::init(d, d, rng),
                    ln2: LayerNormParams::new(d),
                    ff1: Linear::init(d, 4 * d, rng),
                    ff2: Linear::init(4 * d, d, rng),
                })
                .collect();
            let blocks = (0..config.n_mlp_layers)
                .map(|_| MlpBlockParams {
                    lin: Linear::init(d, d, rng),
                    ln: LayerNormParams::new(d),
                })
                .collect();
            let out_proj = Linear::init(d, config.lookback, rng);
            Some(EmbeddingParams { in_proj, layers, blocks, out_proj })
        } else {
            None
        };
        let head_count = config.head_count();
        let heads_raw = (0..head_count)
            .map(|_| Linear::init(config.lookback, config.horizon, rng))
            .collect();
        let heads_emb = if config.raw_only {
            Vec::new()
        } else {
            (0..head_count)
                .map(|_| Linear::init(config.lookback, config.horizon, rng))
                .collect()
        };
        Ok(Model {
            config,
            params: ModelParams { revin, embedding, heads_raw, heads_emb },
        })
    }

    /// Channel-token embedding: B×C×L in, B×C×L out. Identity when the
    /// configuration has no embedding layers of either kind.
    pub fn embed_channels(&self, x: &Tensor, training: bool, rng: &mut Rng) -> Result<Tensor> {
        let emb = match &self.params.embedding {
            Some(emb) => emb,
            None => return Ok(x.clone()),
        };
        let rate = if training { self.config.dropout } else { 0.0 };
        let mut h = emb.in_proj.apply(x)?;
        for layer in &emb.layers {
            h = self.encoder_layer(&h, layer, rate, rng)?;
        }
        for block in &emb.blocks {
            let z = block.lin.apply(&h)?.gelu().dropout(rate, rng)?;
            h = block.ln.apply(&z)?;
        }
        emb.out_proj.apply(&h)
    }

    fn encoder_layer(
        &self,
        x: &Tensor,
        layer: &EncoderLayerParams,
        rate: f64,
        rng: &mut Rng,
    ) -> Result<Tensor> {
        let normed = layer.ln1.apply(x)?;
        let attn = self.attention(&normed, layer, rate, rng)?;
        let attn = layer.o.apply(&attn)?.dropout(rate, rng)?;
        let x = x.add(&attn)?;
        let normed = layer.ln2.apply(&x)?;
        let ff = layer.ff1.apply(&normed)?.gelu().dropout(rate, rng)?;
        let ff = layer.ff2.apply(&ff)?.dropout(rate, rng)?;
        x.add(&ff)
    }

    /// Scaled dot-product attention over channel tokens, one slice per
    /// head, concatenated back to d_model width (before the output
    /// projection, which the encoder layer applies).
    fn attention(
        &self,
        x: &Tensor,
        layer: &EncoderLayerParams,
        rate: f64,
        rng: &mut Rng,
    ) -> Result<Tensor> {
        let d = self.config.d_model;
        let heads = self.config.n_heads;
        let dh = d / heads;
        let q = layer.q.apply(x)?;
        let k = layer.k.apply(x)?;
        let v = layer.v.apply(x)?;
        let mut outputs = Vec::with_capacity(heads);
        for head in 0..heads {
            let (lo, hi) = (head * dh, (head + 1) * dh);
            let qs = q.slice(2, lo, hi)?;
            let ks = k.slice(2, lo, hi)?;
            let vs = v.slice(2, lo, hi)?;
            let scores = qs.matmul(&ks.transpose_last2()?)?.scale(1.0 / (dh as f64).sqrt());
            let probs = scores.softmax_last()?.dropout(rate, rng)?;
            outputs.push(probs.matmul(&vs)?);
        }
        Tensor::concat(&outputs, 2)
    }

    fn apply_heads(&self, heads: &[Linear], x: &Tensor) -> Result<Tensor> {
        if heads.len() == 1 {
            return heads[0].apply(x);
        }
        let c = self.config.n_channels;
        let head_of: Vec<usize> = match &self.config.grouping {
            Some(g) if self.config.channel_independent => g.group_index_map(),
            _ => (0..c).collect(),
        };
        let mut parts = Vec::with_capacity(c);
        for channel in 0..c {
            let xc = x.slice(1, channel, channel + 1)?;
            parts.push(heads[head_of[channel]].apply(&xc)?);
        }
        Tensor::concat(&parts, 1)
    }

    /// Full forward pass: B×C×L standardized input to B×C×H prediction.
    pub fn forward(&self, batch: &Tensor, training: bool, rng: &mut Rng) -> Result<Tensor> {
        let (normed, state) = revin::normalize(batch, &self.params.revin)?;
        let y_raw = self.apply_heads(&self.params.heads_raw, &normed)?;
        let y = if self.config.raw_only {
            y_raw
        } else {
            let embedded = self.embed_channels(&normed, training, rng)?;
            let y_emb = self.apply_heads(&self.params.heads_emb, &embedded)?;
            y_raw.add(&y_emb)?.scale(0.5)
        };
        self.denormalize(&y, &state)
    }

    fn denormalize(&self, y: &Tensor, state: &RevinState) -> Result<Tensor> {
        revin::denormalize(y, state, &self.params.revin)
    }

    /// Exact count of scalar learnables.
    pub fn parameter_count(&self) -> usize {
        self.named_params().iter().map(|(_, t)| t.numel()).sum()
    }

    /// Stable, construction-ordered list of all learnable tensors.
    pub fn named_params(&self) -> Vec<(String, &Tensor)> {
        let mut out: Vec<(String, &Tensor)> = Vec::new();
        if let Some(g) = &self.params.revin.gain {
            out.push(("revin.gain".into(), g));
        }
        if let Some(b) = &self.params.revin.bias {
            out.push(("revin.bias".into(), b));
        }
        if let Some(emb) = &self.params.embedding {
            push_linear(&mut out, "embed.in_proj", &emb.in_proj);
            for (i, layer) in emb.layers.iter().enumerate() {
                let p = format!("embed.layer{}", i);
                out.push((format!("{}.ln1.gain", p), &layer.ln1.gain));
                out.push((format!("{}.ln1.bias", p), &layer.ln1.bias));
                push_linear(&mut out, &format!("{}.q", p), &layer.q);
                push_linear(&mut out, &format!("{}.k", p), &layer.k);
                push_linear(&mut out, &format!("{}.v", p), &layer.v);
                push_linear(&mut out, &format!("{}.o", p), &layer.o);
                out.push((format!("{}.ln2.gain", p), &layer.ln2.gain));
                out.push((format!("{}.ln2.bias", p), &layer.ln2.bias));
                push_linear(&mut out, &format!("{}.ff1", p), &layer.ff1);
                push_linear(&mut out, &format!("{}.ff2", p), &layer.ff2);
            }
            for (i, block) in emb.blocks.iter().enumerate() {
                let p = format!("embed.block{}", i);
                push_linear(&mut out, &format!("{}.lin", p), &block.lin);
                out.push((format!("{}.ln.gain", p), &block.ln.gain));
                out.push((format!("{}.ln.bias", p), &block.ln.bias));
            }
            push_linear(&mut out, "embed.out_proj", &emb.out_proj);
        }
        for (i, h) in self.params.heads_raw.iter().enumerate() {
            push_linear(&mut out, &format!("head_raw.{}", i), h);
        }
        for (i, h) in self.params.heads_emb.iter().enumerate() {
            push_linear(&mut out, &format!("head_emb.{}", i), h);
        }
        out
    }

    /// Mutable counterpart of `named_params`, same order.
    pub fn named_params_mut(&mut self) -> Vec<(String, &mut Tensor)> {
        let mut out: Vec<(String, &mut Tensor)> = Vec::new();
        if let Some(g) = &mut self.params.revin.gain {
            out.push(("revin.gain".into(), g));
        }
        if let Some(b) = &mut self.params.revin.bias {
            out.push(("revin.bias".into(), b));
        }
        if let Some(emb) = &mut self.params.embedding {
            push_linear_mut(&mut out, "embed.in_proj", &mut emb.in_proj);
            for (i, layer) in emb.layers.iter_mut().enumerate() {
                let p = format!("embed.layer{}", i);
                out.push((format!("{}.ln1.gain", p), &mut layer.ln1.gain));
                out.push((format!("{}.ln1.bias", p), &mut layer.ln1.bias));
                push_linear_mut(&mut out, &format!("{}.q", p), &mut layer.q);
                push_linear_mut(&mut out, &format!("{}.k", p), &mut layer.k);
                push_linear_mut(&mut out, &format!("{}.v", p), &mut layer.v);
                push_linear_mut(&mut out, &format!("{}.o", p), &mut layer.o);
                out.push((format!("{}.ln2.gain", p), &mut layer.ln2.gain));
                out.push((format!("{}.ln2.bias", p), &mut layer.ln2.bias));
                push_linear_mut(&mut out, &format!("{}.ff1", p), &mut layer.ff1);
                push_linear_mut(&mut out, &format!("{}.ff2", p), &mut layer.ff2);
            }
            for (i, block) in emb.blocks.iter_mut().enumerate() {
                let p = format!("embed.block{}", i);
                push_linear_mut(&mut out, &format!("{}.lin", p), &mut block.lin);
                out.push((format!("{}.ln.gain", p), &mut block.ln.gain));
                out.push((format!("{}.ln.bias", p), &mut block.ln.bias));
            }
            push_linear_mut(&mut out, "embed.out_proj", &mut emb.out_proj);
        }
        for (i, h) in self.params.heads_raw.iter_mut().enumerate() {
            push_linear_mut(&mut out, &format!("head_raw.{}", i), h);
        }
        for (i, h) in self.params.heads_emb.iter_mut().enumerate() {
            push_linear_mut(&mut out, &format!("head_emb.{}", i), h);
        }
        out
    }

    /// Snapshot of all parameter tensors (cheap handle copies).
    pub fn snapshot(&self) -> Vec<Tensor> {
        self.named_params().into_iter().map(|(_, t)| t.clone()).collect()
    }

    /// Restores a snapshot taken from an identically configured model.
    pub fn restore(&mut self, snapshot: &[Tensor]) {
        let mut params = self.named_params_mut();
        assert_eq!(params.len(), snapshot.len());
        for ((_, p), s) in params.iter_mut().zip(snapshot) {
            **p = s.clone();
        }
    }
}

fn push_linear<'a>(out: &mut Vec<(String, &'a Tensor)>, prefix: &str, lin: &'a Linear) {
    out.push((format!("{}.weight", prefix), &lin.weight));
    out.push((format!("{}.bias", prefix), &lin.bias));
}

fn push_linear_mut<'a>(out: &mut Vec<(String, &'a mut Tensor)>, prefix: &str, lin: &'a mut Linear) {
    out.push((format!("{}.weight", prefix), &mut lin.weight));
    out.push((format!("{}.bias", prefix), &mut lin.bias));
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::revin;
    use crate::tensor::grad_check;

    fn config(c: usize, l: usize, h: usize) -> ModelConfig {
        ModelConfig {
            n_channels: c,
            lookback: l,
            horizon: h,
            n_transformer_layers: 0,
            n_mlp_layers: 0,
            d_model: 8,
            n_heads: 2,
            dropout: 0.0,
            channel_independent: true,
            grouping: None,
            revin_affine: true,
            raw_only: false,
        }
    }

    fn random(rng: &mut Rng, shape: &[usize]) -> Tensor {
        let n: usize = shape.iter().product();
        Tensor::from_vec((0..n).map(|_| rng.normal(0.0, 1.0)).collect(), shape).unwrap()
    }

    #[test]
    fn embed_is_identity_with_zero_layers() {
        let mut rng = Rng::new(50);
        let model = Model::new(config(7, 96, 96), &mut rng).unwrap();
        let x = random(&mut rng, &[2, 7, 96]);
        let out = model.embed_channels(&x, false, &mut rng).unwrap();
        assert_eq!(out.data(), x.data());
    }

    #[test]
    fn forward_shape_contract() {
        let mut rng = Rng::new(51);
        let mut cfg = config(7, 96, 96);
        cfg.n_transformer_layers = 1;
        cfg.n_mlp_layers = 1;
        let model = Model::new(cfg, &mut rng).unwrap();
        let x = random(&mut rng, &[2, 7, 96]);
        let out = model.forward(&x, false, &mut rng).unwrap();
        assert_eq!(out.shape(), &[2, 7, 96]);
        let e = model.embed_channels(&x, false, &mut rng).unwrap();
        assert_eq!(e.shape(), &[2, 7, 96]);
    }

    #[test]
    fn single_token_attention_reduces_to_value_path() {
        let mut rng = Rng::new(52);
        let mut cfg = config(1, 12, 4);
        cfg.n_transformer_layers = 1;
        cfg.d_model = 8;
        cfg.n_heads = 2;
        let model = Model::new(cfg, &mut rng).unwrap();
        let x = random(&mut rng, &[3, 1, 12]);

        // hand-rolled trace: softmax over one token is 1, so attention
        // passes the value projection through untouched
        let emb = model.params.embedding.as_ref().unwrap();
        let layer = &emb.layers[0];
        let h = emb.in_proj.apply(&x).unwrap();
        let normed = layer.ln1.apply(&h).unwrap();
        let v = layer.v.apply(&normed).unwrap();
        let h = h.add(&layer.o.apply(&v).unwrap()).unwrap();
        let normed = layer.ln2.apply(&h).unwrap();
        let ff = layer.ff2.apply(&layer.ff1.apply(&normed).unwrap().gelu()).unwrap();
        let h = h.add(&ff).unwrap();
        let expected = emb.out_proj.apply(&h).unwrap();

        let actual = model.embed_channels(&x, false, &mut rng).unwrap();
        for (a, e) in actual.data().iter().zip(expected.data()) {
            assert!((a - e).abs() < 1e-12, "{} vs {}", a, e);
        }
    }

    #[test]
    fn tied_heads_make_averaging_exact() {
        let mut rng = Rng::new(53);
        let mut model = Model::new(config(2, 8, 5), &mut rng).unwrap();
        model.params.heads_emb = model.params.heads_raw.clone();
        let x = random(&mut rng, &[3, 2, 8]);

        let (normed, state) = revin::normalize(&x, &model.params.revin).unwrap();
        let mut parts = Vec::new();
        for c in 0..2 {
            let xc = normed.slice(1, c, c + 1).unwrap();
            parts.push(model.params.heads_raw[c].apply(&xc).unwrap());
        }
        let single = Tensor::concat(&parts, 1).unwrap();
        let expected = revin::denormalize(&single, &state, &model.params.revin).unwrap();

        let actual = model.forward(&x, false, &mut rng).unwrap();
        assert_eq!(actual.data(), expected.data());
    }

    #[test]
    fn parameter_count_examples() {
        let mut rng = Rng::new(54);
        let mut cfg = config(2, 4, 3);
        cfg.revin_affine = false;
        let model = Model::new(cfg.clone(), &mut rng).unwrap();
        assert_eq!(model.parameter_count(), 60);

        let mut grouped = cfg.clone();
        grouped.grouping = Some(Grouping::from_labels(vec![0, 0]));
        let model = Model::new(grouped, &mut rng).unwrap();
        assert_eq!(model.parameter_count(), 30);

        let mut shared = cfg;
        shared.channel_independent = false;
        let model = Model::new(shared, &mut rng).unwrap();
        assert_eq!(model.parameter_count(), 30);
    }

    #[test]
    fn merging_groups_never_increases_count() {
        let mut rng = Rng::new(55);
        let mut cfg = config(4, 6, 3);
        cfg.grouping = Some(Grouping::from_labels(vec![0, 0, 2, 3]));
        let before = Model::new(cfg.clone(), &mut rng).unwrap().parameter_count();
        cfg.grouping = Some(Grouping::from_labels(vec![0, 0, 2, 2]));
        let after = Model::new(cfg.clone(), &mut rng).unwrap().parameter_count();
        assert!(after <= before);
        cfg.grouping = Some(Grouping::from_labels(vec![0, 0, 0, 0]));
        let merged_all = Model::new(cfg.clone(), &mut rng).unwrap().parameter_count();
        assert!(merged_all <= after);
        // one group equals the shared-head configuration
        cfg.grouping = None;
        cfg.channel_independent = false;
        let shared = Model::new(cfg, &mut rng).unwrap().parameter_count();
        assert_eq!(merged_all, shared);
    }

    #[test]
    fn grouping_out_of_range_fails_at_construction() {
        let mut rng = Rng::new(56);
        let mut cfg = config(3, 4, 2);
        cfg.grouping = Some(Grouping { labels: vec![0, 0, 5], group_count: 2 });
        assert!(Model::new(cfg, &mut rng).is_err());
    }

    #[test]
    fn permutation_equivariance_with_shared_heads_zero_embedding() {
        let mut rng = Rng::new(57);
        let mut cfg = config(5, 16, 8);
        cfg.channel_independent = false;
        let model = Model::new(cfg, &mut rng).unwrap();
        let x = random(&mut rng, &[2, 5, 16]);
        let out = model.forward(&x, false, &mut rng).unwrap();
        let perm = [3usize, 1, 4, 0, 2];
        let permuted = permute_channels(&x, &perm);
        let out_p = model.forward(&permuted, false, &mut rng).unwrap();
        for b in 0..2 {
            for (dst, &src) in perm.iter().enumerate() {
                let expect = &out.data()[(b * 5 + src) * 8..(b * 5 + src + 1) * 8];
                let got = &out_p.data()[(b * 5 + dst) * 8..(b * 5 + dst + 1) * 8];
                for (e, g) in expect.iter().zip(got) {
                    assert!((e - g).abs() < 1e-9);
                }
            }
        }
    }

    fn permute_channels(x: &Tensor, perm: &[usize]) -> Tensor {
        let (b, c, l) = (x.shape()[0], x.shape()[1], x.shape()[2]);
        let mut data = vec![0.0; x.numel()];
        for bi in 0..b {
            for (dst, &src) in perm.iter().enumerate() {
                let from = (bi * c + src) * l;
                let to = (bi * c + dst) * l;
                data[to..to + l].copy_from_slice(&x.data()[from..from + l]);
            }
        }
        Tensor::from_vec(data, x.shape()).unwrap()
    }

    #[test]
    fn eval_forward_ignores_rng() {
        let mut rng = Rng::new(58);
        let mut cfg = config(3, 8, 4);
        cfg.n_transformer_layers = 1;
        cfg.dropout = 0.5;
        let model = Model::new(cfg, &mut rng).unwrap();
        let x = random(&mut rng, &[2, 3, 8]);
        let a = model.forward(&x, false, &mut Rng::new(1)).unwrap();
        let b = model.forward(&x, false, &mut Rng::new(999)).unwrap();
        let bits = |t: &Tensor| t.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&a), bits(&b));
    }

    #[test]
    fn full_model_gradient_check() {
        let mut rng = Rng::new(59);
        let mut cfg = config(3, 8, 4);
        cfg.n_transformer_layers = 1;
        cfg.n_mlp_layers = 1;
        let model = Model::new(cfg, &mut rng).unwrap();
        let x0 = random(&mut rng, &[2, 3, 8]);
        let y = random(&mut rng, &[2, 3, 4]);
        let f = |x: &Tensor| {
            let mut dummy = Rng::new(0);
            model.forward(x, false, &mut dummy)?.mse(&y)
        };
        let err = grad_check(f, &x0, 1e-5).unwrap();
        assert!(err < 1e-3, "max relative error {}", err);
    }

    #[test]
    fn mlp_only_embedding_stack() {
        let mut rng = Rng::new(61);
        let mut cfg = config(4, 12, 6);
        cfg.n_transformer_layers = 0;
        cfg.n_mlp_layers = 2;
        let model = Model::new(cfg, &mut rng).unwrap();
        let emb = model.params.embedding.as_ref().unwrap();
        assert!(emb.layers.is_empty());
        assert_eq!(emb.blocks.len(), 2);

        let x = random(&mut rng, &[2, 4, 12]);
        let out = model.embed_channels(&x, false, &mut rng).unwrap();
        assert_eq!(out.shape(), &[2, 4, 12]);
        assert_ne!(out.data(), x.data());

        let y = random(&mut rng, &[2, 4, 6]);
        let err = grad_check(
            |x| model.forward(x, false, &mut Rng::new(0))?.mse(&y),
            &x,
            1e-5,
        )
        .unwrap();
        assert!(err < 1e-3, "max relative error {}", err);
    }

    #[test]
    fn raw_only_drops_embedding_and_second_heads() {
        let mut rng = Rng::new(60);
        let mut cfg = config(2, 4, 3);
        cfg.revin_affine = false;
        cfg.raw_only = true;
        cfg.n_transformer_layers = 2; // ignored by the ablated variant
        let model = Model::new(cfg, &mut rng).unwrap();
        assert_eq!(model.parameter_count(), 30);
        assert!(model.params.embedding.is_none());
        assert!(model.params.heads_emb.is_empty());
        let x = random(&mut rng, &[2, 2, 4]);
        assert_eq!(model.forward(&x, false, &mut rng).unwrap().shape(), &[2, 2, 3]);
    }
}
