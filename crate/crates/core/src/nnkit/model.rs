use rand::Rng;
use serde::{Deserialize, Serialize};

use super::dense::{Activation, DenseNet, NetCache};
use crate::error::{Error, Result};

/// Layer sizes shared by every model in a run.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Topology {
    pub audio_dim: usize,
    pub visual_dim: usize,
    /// Hidden ReLU widths inside each encoder.
    pub encoder_hidden: Vec<usize>,
    pub embed_dim: usize,
    pub num_classes: usize,
}

impl Topology {
    fn encoder_shape(&self, input_dim: usize) -> (Vec<usize>, Vec<Activation>) {
        let mut dims = vec![input_dim];
        dims.extend(&self.encoder_hidden);
        dims.push(self.embed_dim);
        let mut acts = vec![Activation::Relu; self.encoder_hidden.len()];
        acts.push(Activation::Identity);
        (dims, acts)
    }

    pub fn audio_encoder(&self) -> Result<DenseNet> {
        let (d, a) = self.encoder_shape(self.audio_dim);
        DenseNet::zeros(&d, &a)
    }

    pub fn visual_encoder(&self) -> Result<DenseNet> {
        let (d, a) = self.encoder_shape(self.visual_dim);
        DenseNet::zeros(&d, &a)
    }

    /// Linear classifier on one embedding; also used for Harmony's visual head.
    pub fn head(&self) -> Result<DenseNet> {
        DenseNet::zeros(&[self.embed_dim, self.num_classes], &[Activation::Identity])
    }

    pub fn fusion_head(&self) -> Result<DenseNet> {
        DenseNet::zeros(&[2 * self.embed_dim, self.num_classes], &[Activation::Identity])
    }

    pub fn glorot_audio_encoder<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<DenseNet> {
        let (d, a) = self.encoder_shape(self.audio_dim);
        DenseNet::glorot(&d, &a, rng)
    }

    pub fn glorot_visual_encoder<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<DenseNet> {
        let (d, a) = self.encoder_shape(self.visual_dim);
        DenseNet::glorot(&d, &a, rng)
    }

    pub fn glorot_head<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<DenseNet> {
        DenseNet::glorot(&[self.embed_dim, self.num_classes], &[Activation::Identity], rng)
    }

    pub fn glorot_fusion_head<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<DenseNet> {
        DenseNet::glorot(
            &[2 * self.embed_dim, self.num_classes],
            &[Activation::Identity],
            rng,
        )
    }

    pub fn validate(&self) -> Result<()> {
        if self.audio_dim == 0 || self.visual_dim == 0 || self.embed_dim == 0 {
            return Err(Error::invalid("topology dimensions must be positive"));
        }
        if self.num_classes < 2 {
            return Err(Error::invalid("need at least two classes"));
        }
        if self.encoder_hidden.contains(&0) {
            return Err(Error::invalid("hidden widths must be positive"));
        }
        Ok(())
    }
}

/// A classifier over a flat input vector with exact backprop.
pub trait Model {
    type Cache;

    fn input_dim(&self) -> usize;
    fn num_classes(&self) -> usize;
    fn num_params(&self) -> usize;
    fn to_flat(&self) -> Vec<f64>;
    fn load_flat(&mut self, flat: &[f64]) -> Result<()>;
    fn forward(&self, x: &[f64]) -> Result<(Vec<f64>, Self::Cache)>;
    /// Accumulates the parameter gradient for `d_logits` into `grad`.
    fn backward(&self, cache: &Self::Cache, d_logits: &[f64], grad: &mut [f64]);

    fn logits(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.forward(x).map(|(z, _)| z)
    }
}

/// Encoder followed by a classification head. The audio model is the
/// instance used throughout the simulator; Harmony also uses one over visual
/// inputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnimodalModel {
    pub encoder: DenseNet,
    pub head: DenseNet,
}

pub type AudioModel = UnimodalModel;

#[derive(Debug, Clone)]
pub struct UnimodalCache {
    encoder: NetCache,
    head: NetCache,
}

impl UnimodalModel {
    pub fn new(encoder: DenseNet, head: DenseNet) -> Result<Self> {
        if encoder.output_dim() != head.input_dim() {
            return Err(Error::invalid(format!(
                "encoder emits {} features, head expects {}",
                encoder.output_dim(),
                head.input_dim()
            )));
        }
        Ok(Self { encoder, head })
    }
}

impl Model for UnimodalModel {
    type Cache = UnimodalCache;

    fn input_dim(&self) -> usize {
        self.encoder.input_dim()
    }

    fn num_classes(&self) -> usize {
        self.head.output_dim()
    }

    fn num_params(&self) -> usize {
        self.encoder.num_params() + self.head.num_params()
    }

    fn to_flat(&self) -> Vec<f64> {
        let mut v = self.encoder.to_flat();
        v.extend(self.head.to_flat());
        v
    }

    fn load_flat(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.num_params() {
            return Err(Error::invalid(format!(
                "expected {} parameters, got {}",
                self.num_params(),
                flat.len()
            )));
        }
        let split = self.encoder.num_params();
        self.encoder.load_flat(&flat[..split])?;
        self.head.load_flat(&flat[split..])
    }

    fn forward(&self, x: &[f64]) -> Result<(Vec<f64>, UnimodalCache)> {
        let (emb, encoder) = self.encoder.forward(x)?;
        let (logits, head) = self.head.forward(&emb)?;
        Ok((logits, UnimodalCache { encoder, head }))
    }

    fn backward(&self, cache: &UnimodalCache, d_logits: &[f64], grad: &mut [f64]) {
        let (g_enc, g_head) = grad.split_at_mut(self.encoder.num_params());
        let d_emb = self.head.backward(&cache.head, d_logits, g_head);
        self.encoder.backward(&cache.encoder, &d_emb, g_enc);
    }
}

/// Late-fusion audio-visual classifier: both embeddings are concatenated
/// (audio first) and fed to a shared head.
///
/// Through the [`Model`] trait the input is the concatenation `audio ‖ visual`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultimodalModel {
    pub audio_encoder: DenseNet,
    pub visual_encoder: DenseNet,
    pub fusion_head: DenseNet,
}

#[derive(Debug, Clone)]
pub struct MultimodalCache {
    audio: NetCache,
    visual: NetCache,
    fusion: NetCache,
}

impl MultimodalModel {
    pub fn new(audio_encoder: DenseNet, visual_encoder: DenseNet, fusion_head: DenseNet) -> Result<Self> {
        let fused = audio_encoder.output_dim() + visual_encoder.output_dim();
        if audio_encoder.output_dim() != visual_encoder.output_dim() {
            return Err(Error::invalid("audio and visual embeddings must have equal width"));
        }
        if fusion_head.input_dim() != fused {
            return Err(Error::invalid(format!(
                "fusion head expects {} inputs, concatenated embedding has {fused}",
                fusion_head.input_dim()
            )));
        }
        Ok(Self {
            audio_encoder,
            visual_encoder,
            fusion_head,
        })
    }

    pub fn audio_dim(&self) -> usize {
        self.audio_encoder.input_dim()
    }

    pub fn visual_dim(&self) -> usize {
        self.visual_encoder.input_dim()
    }

    pub fn forward_pair(&self, x_audio: &[f64], x_visual: &[f64]) -> Result<(Vec<f64>, MultimodalCache)> {
        let (ea, audio) = self.audio_encoder.forward(x_audio)?;
        let (ev, visual) = self.visual_encoder.forward(x_visual)?;
        let mut fused = ea;
        fused.extend(ev);
        let (logits, fusion) = self.fusion_head.forward(&fused)?;
        Ok((
            logits,
            MultimodalCache {
                audio,
                visual,
                fusion,
            },
        ))
    }
}

impl Model for MultimodalModel {
    type Cache = MultimodalCache;

    fn input_dim(&self) -> usize {
        self.audio_dim() + self.visual_dim()
    }

    fn num_classes(&self) -> usize {
        self.fusion_head.output_dim()
    }

    fn num_params(&self) -> usize {
        self.audio_encoder.num_params() + self.visual_encoder.num_params() + self.fusion_head.num_params()
    }

    fn to_flat(&self) -> Vec<f64> {
        let mut v = self.audio_encoder.to_flat();
        v.extend(self.visual_encoder.to_flat());
        v.extend(self.fusion_head.to_flat());
        v
    }

    fn load_flat(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.num_params() {
            return Err(Error::invalid(format!(
                "expected {} parameters, got {}",
                self.num_params(),
                flat.len()
            )));
        }
        let a = self.audio_encoder.num_params();
        let v = self.visual_encoder.num_params();
        self.audio_encoder.load_flat(&flat[..a])?;
        self.visual_encoder.load_flat(&flat[a..a + v])?;
        self.fusion_head.load_flat(&flat[a + v..])
    }

    fn forward(&self, x: &[f64]) -> Result<(Vec<f64>, MultimodalCache)> {
        if x.len() != self.input_dim() {
            return Err(Error::invalid(format!(
                "multimodal input has length {}, expected {}",
                x.len(),
                self.input_dim()
            )));
        }
        let (xa, xv) = x.split_at(self.audio_dim());
        self.forward_pair(xa, xv)
    }

    fn backward(&self, cache: &MultimodalCache, d_logits: &[f64], grad: &mut [f64]) {
        let a = self.audio_encoder.num_params();
        let v = self.visual_encoder.num_params();
        let (g_audio, rest) = grad.split_at_mut(a);
        let (g_visual, g_fusion) = rest.split_at_mut(v);
        let d_fused = self.fusion_head.backward(&cache.fusion, d_logits, g_fusion);
        let (d_a, d_v) = d_fused.split_at(self.audio_encoder.output_dim());
        self.audio_encoder.backward(&cache.audio, d_a, g_audio);
        self.visual_encoder.backward(&cache.visual, d_v, g_visual);
    }
}

pub fn forward_audio(model: &AudioModel, x_audio: &[f64]) -> Result<(Vec<f64>, UnimodalCache)> {
    model.forward(x_audio)
}

pub fn forward_multimodal(
    model: &MultimodalModel,
    x_audio: &[f64],
    x_visual: &[f64],
) -> Result<(Vec<f64>, MultimodalCache)> {
    model.forward_pair(x_audio, x_visual)
}
