//! Desk-scale reference networks with seeded random weights.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

use crate::layers::Geometry;

use super::graph::{Layer, LayerSpec, LinearKind, LinearLayer, ModelGraph};
use super::tensor::quantize;
use super::ModelError;

/// Activation scale `2^8` of the reference models.
pub const REFERENCE_INPUT_SCALE: u64 = 1 << 8;
/// Weight scale `2^10`; every truncation divides by it.
pub const REFERENCE_WEIGHT_SCALE: u64 = 1 << 10;

#[derive(Debug, Clone, PartialEq)]
pub enum FloatLayer {
    Linear {
        kind: LinearKind,
        weights: Vec<f64>,
        bias: Vec<f64>,
    },
    Relu,
    MaxPool {
        kh: usize,
        kw: usize,
    },
    AvgPool {
        kh: usize,
        kw: usize,
    },
}

/// An unquantized network, used to measure quantization drift.
#[derive(Debug, Clone, PartialEq)]
pub struct FloatModel {
    pub input_shape: Vec<usize>,
    pub layers: Vec<FloatLayer>,
}

impl FloatModel {
    fn spec(layer: &FloatLayer) -> LayerSpec {
        match layer {
            FloatLayer::Linear { kind, .. } => LayerSpec::Linear {
                kind: *kind,
                has_bias: true,
                weight_scale: 1,
            },
            FloatLayer::Relu => LayerSpec::Relu,
            FloatLayer::MaxPool { kh, kw } => LayerSpec::MaxPool { kh: *kh, kw: *kw },
            FloatLayer::AvgPool { kh, kw } => LayerSpec::AvgPool { kh: *kh, kw: *kw },
        }
    }

    pub fn forward(&self, input: &[f64]) -> Result<Vec<f64>, ModelError> {
        let mut shape = self.input_shape.clone();
        let mut x = input.to_vec();
        for layer in &self.layers {
            let out_shape = Self::spec(layer).output_shape(&shape)?;
            x = match layer {
                FloatLayer::Linear {
                    kind,
                    weights,
                    bias,
                } => Geometry::new(kind, &shape)?.apply_f64(&x, weights, Some(bias)),
                FloatLayer::Relu => x.iter().map(|v| v.max(0.0)).collect(),
                FloatLayer::MaxPool { kh, kw } | FloatLayer::AvgPool { kh, kw } => {
                    let avg = matches!(layer, FloatLayer::AvgPool { .. });
                    let (c, h, w) = (shape[0], shape[1], shape[2]);
                    let (oh, ow) = (h / kh, w / kw);
                    let mut out = vec![if avg { 0.0 } else { f64::NEG_INFINITY }; c * oh * ow];
                    for ch in 0..c {
                        for y in 0..h {
                            for xx in 0..w {
                                let o = &mut out[(ch * oh + y / kh) * ow + xx / kw];
                                let v = x[(ch * h + y) * w + xx];
                                *o = if avg {
                                    *o + v / (kh * kw) as f64
                                } else {
                                    o.max(v)
                                };
                            }
                        }
                    }
                    out
                }
            };
            shape = out_shape;
        }
        Ok(x)
    }

    /// Weights at `weight_scale`, bias at `input_scale * weight_scale`.
    pub fn quantize(&self, input_scale: u64, weight_scale: u64) -> Result<ModelGraph, ModelError> {
        let layers = self
            .layers
            .iter()
            .map(|l| {
                Ok(match l {
                    FloatLayer::Linear {
                        kind,
                        weights,
                        bias,
                    } => {
                        let w = quantize(weights, kind.weight_shape(), weight_scale)?;
                        let product_scale = (input_scale * weight_scale) as f64;
                        let b = bias
                            .iter()
                            .map(|v| (v * product_scale).round() as i64)
                            .collect();
                        Layer::Linear(LinearLayer::new(*kind, w, Some(b))?)
                    }
                    FloatLayer::Relu => Layer::Relu,
                    FloatLayer::MaxPool { kh, kw } => Layer::MaxPool { kh: *kh, kw: *kw },
                    FloatLayer::AvgPool { kh, kw } => Layer::AvgPool { kh: *kh, kw: *kw },
                })
            })
            .collect::<Result<Vec<_>, ModelError>>()?;
        ModelGraph::new(self.input_shape.clone(), input_scale, layers)
    }
}

fn linear(rng: &mut ChaCha20Rng, kind: LinearKind) -> FloatLayer {
    // He-style uniform init keeps activations near unit scale.
    let bound = (6.0 / kind.fan_in() as f64).sqrt();
    let count: usize = kind.weight_shape().iter().product();
    FloatLayer::Linear {
        kind,
        weights: (0..count).map(|_| rng.gen_range(-bound..bound)).collect(),
        bias: (0..kind.out_channels())
            .map(|_| rng.gen_range(-0.1..0.1))
            .collect(),
    }
}

fn lenet(seed: u64, avg: bool) -> FloatModel {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let pool = |kh, kw| {
        if avg {
            FloatLayer::AvgPool { kh, kw }
        } else {
            FloatLayer::MaxPool { kh, kw }
        }
    };
    let conv = |i, o, k, p| LinearKind::Conv2d {
        in_channels: i,
        out_channels: o,
        kernel_h: k,
        kernel_w: k,
        stride: 1,
        padding: p,
    };
    FloatModel {
        input_shape: vec![1, 16, 16],
        layers: vec![
            linear(&mut rng, conv(1, 6, 5, 2)),
            FloatLayer::Relu,
            pool(2, 2),
            linear(&mut rng, conv(6, 12, 3, 1)),
            FloatLayer::Relu,
            pool(2, 2),
            linear(
                &mut rng,
                LinearKind::Dense {
                    inputs: 192,
                    outputs: 32,
                },
            ),
            FloatLayer::Relu,
            linear(
                &mut rng,
                LinearKind::Dense {
                    inputs: 32,
                    outputs: 10,
                },
            ),
        ],
    }
}

/// LeNet-style net on `1x16x16` inputs: two 5x5/3x3 convolutions with ReLU
/// and 2x2 max pooling, then dense 192-32-10.
pub fn reference_lenet(seed: u64) -> FloatModel {
    lenet(seed, false)
}

/// The same architecture with 2x2 average pooling.
pub fn reference_avgpool_model(seed: u64) -> FloatModel {
    lenet(seed, true)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_models_quantize() {
        for f in [reference_lenet(7), reference_avgpool_model(7)] {
            let q = f
                .quantize(REFERENCE_INPUT_SCALE, REFERENCE_WEIGHT_SCALE)
                .unwrap();
            assert_eq!(q.output_shape(), vec![10]);
            assert_eq!(q.linear_layers().count(), 4);
            assert_eq!(f.forward(&[0.5; 256]).unwrap().len(), 10);
        }
        assert_eq!(reference_lenet(3), reference_lenet(3));
        assert_ne!(reference_lenet(3), reference_lenet(4));
    }
}
