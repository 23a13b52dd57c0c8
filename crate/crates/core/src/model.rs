//! Early-fusion AU model.
//!
//! ```text
//! h_v  = P_v f_v                       h_g = P_g f_g
//! h_tg = BiGRU_tg(P_tg f_tg[0..9])     h_a = BiGRU_a(P_a f_a[..])
//! h_t  = BiGRU_t(P_t f_t[..])
//! h    = [h_v ‖ h_g ‖ h_tg ‖ h_a ‖ h_t]          (dim 2·d_p + 6·d_h)
//! ŷ    = W_2 relu(W_1 h + b_1) + b_2            (12 logits)
//! ```
//!
//! Sequence streams are projected per timestep before their GRU.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::au::NUM_AUS;
use crate::error::{Error, Result};
use crate::feature_store::{FusionInput, FusionSample, StreamDims};
use crate::losses::{bce_with_logits, total_loss_grad_row, LossWeights};
use crate::nn::gru::BiGruCache;
use crate::nn::init::rng;
use crate::nn::mlp::MlpCache;
use crate::nn::params::prefixed;
use crate::nn::{sigmoid, Activation, GruParams, LinearParams, MlpParams, Params, TensorRef};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub visual_dim: usize,
    pub ghfeat_dim: usize,
    pub audio_dim: usize,
    pub text_dim: usize,
    pub proj_dim: usize,
    pub gru_hidden: usize,
    pub mlp_hidden: usize,
    pub n_aus: usize,
    #[serde(default)]
    pub activation: Activation,
    pub seed: u64,
}

impl ModelConfig {
    /// Default widths (`d_p = d_h = 128`, `d_m = 512`) for the given input dims.
    pub fn for_dims(dims: StreamDims) -> Self {
        ModelConfig {
            visual_dim: dims.swin,
            ghfeat_dim: dims.ghfeat,
            audio_dim: dims.hubert,
            text_dim: dims.roberta,
            proj_dim: 128,
            gru_hidden: 128,
            mlp_hidden: 512,
            n_aus: NUM_AUS,
            activation: Activation::Relu,
            seed: 0,
        }
    }

    pub fn concat_dim(&self) -> usize {
        2 * self.proj_dim + 3 * 2 * self.gru_hidden
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_aus != NUM_AUS {
            return Err(Error::InvalidArgument(format!(
                "n_aus must be {NUM_AUS}, got {}",
                self.n_aus
            )));
        }
        let dims = [
            ("visual_dim", self.visual_dim),
            ("ghfeat_dim", self.ghfeat_dim),
            ("audio_dim", self.audio_dim),
            ("text_dim", self.text_dim),
            ("proj_dim", self.proj_dim),
            ("gru_hidden", self.gru_hidden),
            ("mlp_hidden", self.mlp_hidden),
        ];
        if let Some((name, _)) = dims.iter().find(|(_, d)| *d == 0) {
            return Err(Error::InvalidArgument(format!("{name} must be positive")));
        }
        Ok(())
    }

    pub fn matches(&self, dims: StreamDims) -> Result<()> {
        for (name, want, have) in [
            ("visual", self.visual_dim, dims.swin),
            ("ghfeat", self.ghfeat_dim, dims.ghfeat),
            ("audio", self.audio_dim, dims.hubert),
            ("text", self.text_dim, dims.roberta),
        ] {
            if want != have {
                return Err(Error::dim(format!("{name} stream width"), want, have));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub proj_v: LinearParams,
    pub proj_g: LinearParams,
    pub proj_tg: LinearParams,
    pub proj_a: LinearParams,
    pub proj_t: LinearParams,
    pub gru_tg: GruParams,
    pub gru_a: GruParams,
    pub gru_t: GruParams,
    pub head: MlpParams,
    pub activation: Activation,
}

/// Gradients share the parameter layout.
pub type Gradients = ModelParams;

/// Logits and probabilities for one frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Prediction {
    pub logits: [f64; NUM_AUS],
    pub probs: [f64; NUM_AUS],
}

impl Prediction {
    pub fn from_logits(logits: [f64; NUM_AUS]) -> Self {
        Prediction {
            logits,
            probs: logits.map(sigmoid),
        }
    }
}

pub fn init_model(cfg: &ModelConfig) -> Result<ModelParams> {
    cfg.validate()?;
    let mut r = rng(cfg.seed);
    let (p, h) = (cfg.proj_dim, cfg.gru_hidden);
    Ok(ModelParams {
        proj_v: LinearParams::init(&mut r, cfg.visual_dim, p),
        proj_g: LinearParams::init(&mut r, cfg.ghfeat_dim, p),
        proj_tg: LinearParams::init(&mut r, cfg.ghfeat_dim, p),
        proj_a: LinearParams::init(&mut r, cfg.audio_dim, p),
        proj_t: LinearParams::init(&mut r, cfg.text_dim, p),
        gru_tg: GruParams::init(&mut r, p, h),
        gru_a: GruParams::init(&mut r, p, h),
        gru_t: GruParams::init(&mut r, p, h),
        head: MlpParams::init(&mut r, cfg.concat_dim(), cfg.mlp_hidden, NUM_AUS),
        activation: cfg.activation,
    })
}

struct SequenceCache {
    projected: Vec<Vec<f64>>,
    gru: BiGruCache,
}

struct ForwardCache {
    concat: Vec<f64>,
    mlp: MlpCache,
    tg: SequenceCache,
    audio: SequenceCache,
    text: SequenceCache,
}

impl ModelParams {
    pub fn concat_dim(&self) -> usize {
        self.head.input_dim()
    }

    fn check_input(&self, x: &FusionInput) -> Result<()> {
        let check_vec = |ctx: &str, want: usize, v: &[f64]| {
            if v.len() == want {
                Ok(())
            } else {
                Err(Error::dim(ctx, want, v.len()))
            }
        };
        let check_seq = |ctx: &str, want: usize, s: &[Vec<f64>]| {
            if s.is_empty() {
                return Err(Error::Empty(format!("{ctx} sequence")));
            }
            s.iter().try_for_each(|v| check_vec(ctx, want, v))
        };
        check_vec("visual features", self.proj_v.input_dim(), &x.visual)?;
        check_vec("ghfeat features", self.proj_g.input_dim(), &x.ghfeat)?;
        check_seq("ghfeat window", self.proj_tg.input_dim(), &x.ghfeat_seq)?;
        check_seq("audio window", self.proj_a.input_dim(), &x.audio_seq)?;
        check_seq("text window", self.proj_t.input_dim(), &x.text_seq)
    }

    fn encode_seq(proj: &LinearParams, gru: &GruParams, seq: &[Vec<f64>]) -> (Vec<f64>, SequenceCache) {
        let projected: Vec<Vec<f64>> = seq.iter().map(|x| proj.forward(x)).collect();
        let (h, cache) = gru.forward(&projected);
        (
            h,
            SequenceCache {
                projected,
                gru: cache,
            },
        )
    }

    fn forward_cached(&self, x: &FusionInput) -> ([f64; NUM_AUS], ForwardCache) {
        let h_v = self.proj_v.forward(&x.visual);
        let h_g = self.proj_g.forward(&x.ghfeat);
        let (h_tg, tg) = Self::encode_seq(&self.proj_tg, &self.gru_tg, &x.ghfeat_seq);
        let (h_a, audio) = Self::encode_seq(&self.proj_a, &self.gru_a, &x.audio_seq);
        let (h_t, text) = Self::encode_seq(&self.proj_t, &self.gru_t, &x.text_seq);

        let mut concat = Vec::with_capacity(self.concat_dim());
        for part in [&h_v, &h_g, &h_tg, &h_a, &h_t] {
            concat.extend_from_slice(part);
        }
        let (out, mlp) = self.head.forward(&concat, self.activation);
        let logits: [f64; NUM_AUS] = out.try_into().expect("head emits 12 logits");
        (
            logits,
            ForwardCache {
                concat,
                mlp,
                tg,
                audio,
                text,
            },
        )
    }

    fn backward_seq(
        proj: &LinearParams,
        gru: &GruParams,
        raw: &[Vec<f64>],
        cache: &SequenceCache,
        d_h: &[f64],
        g_proj: &mut LinearParams,
        g_gru: &mut GruParams,
    ) {
        let d_proj = gru.backward(&cache.projected, &cache.gru, d_h, g_gru);
        for (x, dy) in raw.iter().zip(&d_proj) {
            proj.backward(x, dy, g_proj, None);
        }
    }

    /// Accumulates `∂L/∂θ` for one sample given `∂L/∂logits`.
    fn backward_sample(&self, x: &FusionInput, cache: &ForwardCache, d_logits: &[f64], grad: &mut ModelParams) {
        let mut d_concat = vec![0.0; self.concat_dim()];
        self.head.backward(
            &cache.concat,
            &cache.mlp,
            d_logits,
            self.activation,
            &mut grad.head,
            &mut d_concat,
        );
        let p = self.proj_v.output_dim();
        let h2 = self.gru_tg.output_dim();
        let (d_v, rest) = d_concat.split_at(p);
        let (d_g, rest) = rest.split_at(p);
        let (d_tg, rest) = rest.split_at(h2);
        let (d_a, d_t) = rest.split_at(h2);

        self.proj_v.backward(&x.visual, d_v, &mut grad.proj_v, None);
        self.proj_g.backward(&x.ghfeat, d_g, &mut grad.proj_g, None);
        Self::backward_seq(
            &self.proj_tg,
            &self.gru_tg,
            &x.ghfeat_seq,
            &cache.tg,
            d_tg,
            &mut grad.proj_tg,
            &mut grad.gru_tg,
        );
        Self::backward_seq(
            &self.proj_a,
            &self.gru_a,
            &x.audio_seq,
            &cache.audio,
            d_a,
            &mut grad.proj_a,
            &mut grad.gru_a,
        );
        Self::backward_seq(
            &self.proj_t,
            &self.gru_t,
            &x.text_seq,
            &cache.text,
            d_t,
            &mut grad.proj_t,
            &mut grad.gru_t,
        );
    }
}

pub fn forward(params: &ModelParams, input: &FusionInput) -> Result<Prediction> {
    params.check_input(input)?;
    Ok(Prediction::from_logits(params.forward_cached(input).0))
}

/// Parallel [`forward`] over many inputs, order preserved.
pub fn forward_batch(params: &ModelParams, inputs: &[FusionInput]) -> Result<Vec<Prediction>> {
    inputs.par_iter().map(|x| forward(params, x)).collect()
}

/// Samples per gradient chunk. Chunks are reduced in order so the summed
/// gradient does not depend on thread scheduling.
const GRAD_CHUNK: usize = 8;

/// Loss and exact gradient of `total_loss` over a batch.
///
/// With `sample_weights`, sample `i`'s contribution to the loss (and so to
/// the gradient) is multiplied by `sample_weights[i]`.
pub fn backward(
    params: &ModelParams,
    batch: &[FusionSample],
    sample_weights: Option<&[f64]>,
    weights: &LossWeights,
) -> Result<(f64, Gradients)> {
    if batch.is_empty() {
        return Err(Error::Empty("backward batch".into()));
    }
    if let Some(sw) = sample_weights {
        if sw.len() != batch.len() {
            return Err(Error::dim("sample weights", batch.len(), sw.len()));
        }
    }
    for (i, s) in batch.iter().enumerate() {
        params.check_input(&s.input)?;
        if let Some(j) = s.label.iter().position(|&v| v > 1) {
            return Err(Error::InvalidLabel {
                sample: i,
                au: j,
                value: s.label[j] as i64,
            });
        }
    }
    let n = batch.len();
    let denom = (n * NUM_AUS) as f64;
    let partials: Vec<(f64, Gradients)> = batch
        .par_chunks(GRAD_CHUNK)
        .enumerate()
        .map(|(c, chunk)| {
            let mut grad = params.zeros_like();
            let mut loss = 0.0;
            for (k, s) in chunk.iter().enumerate() {
                let sw = sample_weights.map_or(1.0, |w| w[c * GRAD_CHUNK + k]);
                let (logits, cache) = params.forward_cached(&s.input);
                let per: f64 = (0..NUM_AUS)
                    .map(|j| weights.combined(j) * bce_with_logits(logits[j], s.label[j] as f64))
                    .sum();
                loss += sw * per / denom;
                let d = total_loss_grad_row(&logits, &s.label, weights, n, sw);
                params.backward_sample(&s.input, &cache, &d, &mut grad);
            }
            (loss, grad)
        })
        .collect();
    let mut iter = partials.into_iter();
    let (mut loss, mut grad) = iter.next().expect("non-empty batch");
    for (l, g) in iter {
        loss += l;
        grad.add_assign(&g);
    }
    Ok((loss, grad))
}

/// Feature streams that can be zeroed at the input for ablations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InputStream {
    Visual,
    GhfeatStatic,
    GhfeatTemporal,
    Audio,
    Text,
}

impl FusionInput {
    /// Zeros the feature values of `streams`, leaving shapes unchanged.
    pub fn zero_streams(&mut self, streams: &[InputStream]) {
        let zero = |v: &mut Vec<f64>| v.iter_mut().for_each(|x| *x = 0.0);
        for s in streams {
            match s {
                InputStream::Visual => zero(&mut self.visual),
                InputStream::GhfeatStatic => zero(&mut self.ghfeat),
                InputStream::GhfeatTemporal => self.ghfeat_seq.iter_mut().for_each(zero),
                InputStream::Audio => self.audio_seq.iter_mut().for_each(zero),
                InputStream::Text => self.text_seq.iter_mut().for_each(zero),
            }
        }
    }
}

impl Params for ModelParams {
    fn tensors(&self) -> Vec<TensorRef<'_>> {
        let mut out = Vec::new();
        out.extend(prefixed("proj_v", self.proj_v.tensors()));
        out.extend(prefixed("proj_g", self.proj_g.tensors()));
        out.extend(prefixed("proj_tg", self.proj_tg.tensors()));
        out.extend(prefixed("proj_a", self.proj_a.tensors()));
        out.extend(prefixed("proj_t", self.proj_t.tensors()));
        out.extend(prefixed("gru_tg", self.gru_tg.tensors()));
        out.extend(prefixed("gru_a", self.gru_a.tensors()));
        out.extend(prefixed("gru_t", self.gru_t.tensors()));
        out.extend(prefixed("head", self.head.tensors()));
        out
    }

    fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out = Vec::new();
        out.extend(self.proj_v.tensors_mut());
        out.extend(self.proj_g.tensors_mut());
        out.extend(self.proj_tg.tensors_mut());
        out.extend(self.proj_a.tensors_mut());
        out.extend(self.proj_t.tensors_mut());
        out.extend(self.gru_tg.tensors_mut());
        out.extend(self.gru_a.tensors_mut());
        out.extend(self.gru_t.tensors_mut());
        out.extend(self.head.tensors_mut());
        out
    }
}

/// `out[i][j] = 1` iff `probs[i][j] > tau[j]`.
pub fn predict_binary(probs: &[[f64; NUM_AUS]], tau: &crate::postprocess::ThresholdVector) -> Result<Vec<[u8; NUM_AUS]>> {
    let tau = crate::postprocess::ThresholdVector::new(tau.0)?;
    probs
        .iter()
        .enumerate()
        .map(|(i, p)| {
            if p.iter().any(|v| !(0.0..=1.0).contains(v)) {
                return Err(Error::InvalidArgument(format!("probability outside [0,1] in row {i}")));
            }
            Ok(tau.apply(p))
        })
        .collect()
}
