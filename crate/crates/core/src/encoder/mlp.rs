use rand::Rng;

use crate::contrastive::{loss_gradient_with, positive_sets, LossReport};
use crate::embedding::{EmbeddingPair, SegmentRecord, Temperature};
use crate::error::{Error, Result};

/// Affine map `y = W x + b`, `W` row-major with `outputs` rows.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub inputs: usize,
    pub outputs: usize,
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Layer {
    pub fn zeros(inputs: usize, outputs: usize) -> Self {
        Layer { inputs, outputs, weight: vec![0.0; inputs * outputs], bias: vec![0.0; outputs] }
    }

    /// Uniform in `±sqrt(6 / (fan_in + fan_out))`, zero bias.
    pub fn glorot<R: Rng + ?Sized>(inputs: usize, outputs: usize, rng: &mut R) -> Self {
        let limit = (6.0 / (inputs + outputs) as f64).sqrt();
        let weight = (0..inputs * outputs).map(|_| rng.random_range(-limit..=limit)).collect();
        Layer { inputs, outputs, weight, bias: vec![0.0; outputs] }
    }

    fn apply(&self, x: &[f64]) -> Vec<f64> {
        self.weight
            .chunks_exact(self.inputs)
            .zip(&self.bias)
            .map(|(row, b)| row.iter().zip(x).map(|(w, xi)| w * xi).sum::<f64>() + b)
            .collect()
    }
}

/// Feed-forward network: affine layers with `tanh` between them, linear output.
/// Zero layers is the identity map.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    pub layers: Vec<Layer>,
}

impl Mlp {
    /// `dims = [input, hidden.., output]`.
    pub fn glorot<R: Rng + ?Sized>(dims: &[usize], rng: &mut R) -> Self {
        Mlp { layers: dims.windows(2).map(|w| Layer::glorot(w[0], w[1], rng)).collect() }
    }

    pub fn zeros(dims: &[usize]) -> Self {
        Mlp { layers: dims.windows(2).map(|w| Layer::zeros(w[0], w[1])).collect() }
    }

    pub fn identity() -> Self {
        Mlp { layers: Vec::new() }
    }

    pub fn zeros_like(&self) -> Self {
        Mlp { layers: self.layers.iter().map(|l| Layer::zeros(l.inputs, l.outputs)).collect() }
    }

    pub fn input_dim(&self) -> Option<usize> {
        self.layers.first().map(|l| l.inputs)
    }

    pub fn output_dim(&self) -> Option<usize> {
        self.layers.last().map(|l| l.outputs)
    }

    pub fn forward(&self, x: &[f64], name: &'static str) -> Result<Vec<f64>> {
        Ok(self.forward_cached(x, name)?.pop().expect("activations include the input"))
    }

    /// Post-activation outputs of every layer, starting with the input.
    fn forward_cached(&self, x: &[f64], name: &'static str) -> Result<Vec<Vec<f64>>> {
        if let Some(d) = self.input_dim() {
            if d != x.len() {
                return Err(Error::DimensionMismatch { left: x.len(), right: d });
            }
        }
        let last = self.layers.len().saturating_sub(1);
        let mut acts = Vec::with_capacity(self.layers.len() + 1);
        acts.push(x.to_vec());
        for (i, layer) in self.layers.iter().enumerate() {
            let mut z = layer.apply(acts.last().unwrap());
            if i != last {
                z.iter_mut().for_each(|v| *v = v.tanh());
            }
            if !z.iter().all(|v| v.is_finite()) {
                return Err(Error::NonFinite { modality: name, layer: i });
            }
            acts.push(z);
        }
        Ok(acts)
    }

    /// Accumulates parameter gradients for one input into `grads`.
    fn backward_into(&self, acts: &[Vec<f64>], grad_out: &[f64], grads: &mut Mlp) {
        let last = self.layers.len().saturating_sub(1);
        let mut delta = grad_out.to_vec();
        for i in (0..self.layers.len()).rev() {
            let layer = &self.layers[i];
            if i != last {
                // tanh'(z) = 1 - tanh(z)^2
                for (d, a) in delta.iter_mut().zip(&acts[i + 1]) {
                    *d *= 1.0 - a * a;
                }
            }
            let input = &acts[i];
            let g = &mut grads.layers[i];
            for (o, d) in delta.iter().enumerate() {
                g.bias[o] += d;
                for (gw, x) in g.weight[o * layer.inputs..(o + 1) * layer.inputs].iter_mut().zip(input) {
                    *gw += d * x;
                }
            }
            if i > 0 {
                let mut prev = vec![0.0; layer.inputs];
                for (o, d) in delta.iter().enumerate() {
                    for (p, w) in prev.iter_mut().zip(&layer.weight[o * layer.inputs..(o + 1) * layer.inputs]) {
                        *p += d * w;
                    }
                }
                delta = prev;
            }
        }
    }

    pub fn tensors(&self) -> impl Iterator<Item = &[f64]> {
        self.layers.iter().flat_map(|l| [l.weight.as_slice(), l.bias.as_slice()])
    }

    pub fn tensors_mut(&mut self) -> impl Iterator<Item = &mut [f64]> {
        self.layers.iter_mut().flat_map(|l| [l.weight.as_mut_slice(), l.bias.as_mut_slice()])
    }
}

/// Layer sizes shared by both modality encoders.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EncoderArch {
    pub feature_dim_audio: usize,
    pub feature_dim_video: usize,
    pub hidden_width: usize,
    pub hidden_layers: usize,
    pub embed_dim: usize,
}

impl Default for EncoderArch {
    fn default() -> Self {
        EncoderArch { feature_dim_audio: 16, feature_dim_video: 16, hidden_width: 64, hidden_layers: 2, embed_dim: 32 }
    }
}

impl EncoderArch {
    fn dims(&self, input: usize) -> Vec<usize> {
        let mut dims = vec![input];
        dims.extend(std::iter::repeat_n(self.hidden_width, self.hidden_layers));
        dims.push(self.embed_dim);
        dims
    }

    pub fn audio_dims(&self) -> Vec<usize> {
        self.dims(self.feature_dim_audio)
    }

    pub fn video_dims(&self) -> Vec<usize> {
        self.dims(self.feature_dim_video)
    }
}

/// Independent audio and video encoders.
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderParams {
    pub audio: Mlp,
    pub video: Mlp,
}

impl EncoderParams {
    pub fn init<R: Rng + ?Sized>(arch: &EncoderArch, rng: &mut R) -> Self {
        let audio = Mlp::glorot(&arch.audio_dims(), rng);
        let video = Mlp::glorot(&arch.video_dims(), rng);
        EncoderParams { audio, video }
    }

    pub fn zeros_like(&self) -> Self {
        EncoderParams { audio: self.audio.zeros_like(), video: self.video.zeros_like() }
    }

    pub fn tensors(&self) -> impl Iterator<Item = &[f64]> {
        self.audio.tensors().chain(self.video.tensors())
    }

    pub fn tensors_mut(&mut self) -> impl Iterator<Item = &mut [f64]> {
        self.audio.tensors_mut().chain(self.video.tensors_mut())
    }

    pub fn same_shape(&self, other: &EncoderParams) -> bool {
        let shape = |p: &EncoderParams| p.tensors().map(<[f64]>::len).collect::<Vec<_>>();
        shape(self) == shape(other)
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().flatten().all(|x| x.is_finite())
    }
}

pub fn encode(params: &EncoderParams, seg: &SegmentRecord) -> Result<EmbeddingPair> {
    Ok(EmbeddingPair::new(params.audio.forward(&seg.audio, "audio")?, params.video.forward(&seg.video, "video")?))
}

/// Total loss on `batch` and its gradient with respect to every encoder parameter.
pub fn backward(
    params: &EncoderParams,
    batch: &[SegmentRecord],
    tau: Temperature,
    lambda: f64,
) -> Result<(LossReport, EncoderParams)> {
    let pos = positive_sets(batch)?;
    let mut audio_acts = Vec::with_capacity(batch.len());
    let mut video_acts = Vec::with_capacity(batch.len());
    for seg in batch {
        audio_acts.push(params.audio.forward_cached(&seg.audio, "audio")?);
        video_acts.push(params.video.forward_cached(&seg.video, "video")?);
    }
    let embeddings: Vec<EmbeddingPair> = audio_acts
        .iter()
        .zip(&video_acts)
        .map(|(a, v)| EmbeddingPair::new(a.last().unwrap().clone(), v.last().unwrap().clone()))
        .collect();
    let (report, emb_grads) = loss_gradient_with(&embeddings, &pos, tau, lambda)?;

    let mut grads = params.zeros_like();
    for c in 0..batch.len() {
        params.audio.backward_into(&audio_acts[c], &emb_grads.audio[c], &mut grads.audio);
        params.video.backward_into(&video_acts[c], &emb_grads.video[c], &mut grads.video);
    }
    Ok((report, grads))
}
