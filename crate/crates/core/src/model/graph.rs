use crate::codec::{digest, ByteReader, ByteWriter, CodecError};
use crate::field::ACCUMULATION_BITS;

use super::tensor::QuantizedTensor;
use super::ModelError;

const MODEL_MAGIC: &[u8; 4] = b"SSNM";
const MODEL_VERSION: u16 = 1;

/// Bias values live at product scale; this bound keeps `x*w` sums plus bias inside the budget.
pub const MAX_BIAS_MAGNITUDE: i64 = 1 << 30;

/// Geometry of a bilinear layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LinearKind {
    Conv2d {
        in_channels: usize,
        out_channels: usize,
        kernel_h: usize,
        kernel_w: usize,
        stride: usize,
        padding: usize,
    },
    Dense {
        inputs: usize,
        outputs: usize,
    },
}

impl LinearKind {
    pub fn weight_shape(&self) -> Vec<usize> {
        match *self {
            LinearKind::Conv2d {
                in_channels,
                out_channels,
                kernel_h,
                kernel_w,
                ..
            } => vec![out_channels, in_channels, kernel_h, kernel_w],
            LinearKind::Dense { inputs, outputs } => vec![outputs, inputs],
        }
    }

    pub fn out_channels(&self) -> usize {
        match *self {
            LinearKind::Conv2d { out_channels, .. } => out_channels,
            LinearKind::Dense { outputs, .. } => outputs,
        }
    }

    /// Products summed per output element, excluding bias.
    pub fn fan_in(&self) -> usize {
        match *self {
            LinearKind::Conv2d {
                in_channels,
                kernel_h,
                kernel_w,
                ..
            } => in_channels * kernel_h * kernel_w,
            LinearKind::Dense { inputs, .. } => inputs,
        }
    }

    pub fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>, ModelError> {
        match *self {
            LinearKind::Conv2d {
                in_channels,
                out_channels,
                kernel_h,
                kernel_w,
                stride,
                padding,
            } => {
                let [c, h, w] = input else {
                    return Err(ModelError::Shape(format!(
                        "conv expects a CxHxW input, got {input:?}"
                    )));
                };
                if *c != in_channels {
                    return Err(ModelError::Shape(format!(
                        "conv expects {in_channels} channels, got {c}"
                    )));
                }
                if stride == 0 || kernel_h == 0 || kernel_w == 0 {
                    return Err(ModelError::Invalid("zero stride or kernel".into()));
                }
                let (ph, pw) = (h + 2 * padding, w + 2 * padding);
                if ph < kernel_h || pw < kernel_w {
                    return Err(ModelError::Shape(format!(
                        "kernel {kernel_h}x{kernel_w} larger than padded input {ph}x{pw}"
                    )));
                }
                Ok(vec![
                    out_channels,
                    (ph - kernel_h) / stride + 1,
                    (pw - kernel_w) / stride + 1,
                ])
            }
            LinearKind::Dense { inputs, outputs } => {
                let len: usize = input.iter().product();
                if len != inputs {
                    return Err(ModelError::Shape(format!(
                        "dense expects {inputs} inputs, got {input:?}"
                    )));
                }
                Ok(vec![outputs])
            }
        }
    }

    fn write_to(&self, w: &mut ByteWriter) {
        match *self {
            LinearKind::Conv2d {
                in_channels,
                out_channels,
                kernel_h,
                kernel_w,
                stride,
                padding,
            } => {
                w.u8(0);
                for v in [
                    in_channels,
                    out_channels,
                    kernel_h,
                    kernel_w,
                    stride,
                    padding,
                ] {
                    w.u32(v as u32);
                }
            }
            LinearKind::Dense { inputs, outputs } => {
                w.u8(1).u32(inputs as u32).u32(outputs as u32);
            }
        }
    }

    fn read_from(tag: u8, r: &mut ByteReader<'_>) -> Result<Self, CodecError> {
        match tag {
            0 => {
                let mut v = [0usize; 6];
                for slot in &mut v {
                    *slot = r.u32()? as usize;
                }
                Ok(LinearKind::Conv2d {
                    in_channels: v[0],
                    out_channels: v[1],
                    kernel_h: v[2],
                    kernel_w: v[3],
                    stride: v[4],
                    padding: v[5],
                })
            }
            1 => Ok(LinearKind::Dense {
                inputs: r.u32()? as usize,
                outputs: r.u32()? as usize,
            }),
            t => Err(CodecError::Invalid(format!("unknown linear tag {t}"))),
        }
    }
}

/// A convolution or dense layer with its quantized weights.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LinearLayer {
    pub kind: LinearKind,
    /// Scale `r` of the weights; the following truncation divides by it.
    pub weights: QuantizedTensor,
    /// One value per output channel at product scale.
    pub bias: Option<Vec<i64>>,
}

impl LinearLayer {
    pub fn new(
        kind: LinearKind,
        weights: QuantizedTensor,
        bias: Option<Vec<i64>>,
    ) -> Result<Self, ModelError> {
        if weights.shape() != kind.weight_shape() {
            return Err(ModelError::Shape(format!(
                "weights {:?} do not match layer {:?}",
                weights.shape(),
                kind.weight_shape()
            )));
        }
        if let Some(b) = &bias {
            if b.len() != kind.out_channels() {
                return Err(ModelError::Shape(format!(
                    "{} bias values for {} outputs",
                    b.len(),
                    kind.out_channels()
                )));
            }
            if let Some(&v) = b.iter().find(|v| v.abs() > MAX_BIAS_MAGNITUDE) {
                return Err(ModelError::Invalid(format!("bias {v} exceeds 2^30")));
            }
        }
        let fan_in = kind.fan_in() + usize::from(bias.is_some());
        if fan_in > 1 << ACCUMULATION_BITS {
            return Err(ModelError::FanIn { fan_in });
        }
        Ok(Self {
            kind,
            weights,
            bias,
        })
    }

    pub fn spec(&self) -> LayerSpec {
        LayerSpec::Linear {
            kind: self.kind,
            has_bias: self.bias.is_some(),
            weight_scale: self.weights.scale(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Layer {
    Linear(LinearLayer),
    Relu,
    MaxPool { kh: usize, kw: usize },
    AvgPool { kh: usize, kw: usize },
}

/// A layer without its weights: everything the parties need to agree on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LayerSpec {
    Linear {
        kind: LinearKind,
        has_bias: bool,
        weight_scale: u64,
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

impl LayerSpec {
    /// Shape after this layer; pools need non-overlapping exact tiling.
    pub fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>, ModelError> {
        match self {
            LayerSpec::Linear { kind, .. } => kind.output_shape(input),
            LayerSpec::Relu => Ok(input.to_vec()),
            LayerSpec::MaxPool { kh, kw } | LayerSpec::AvgPool { kh, kw } => {
                pooled_shape(input, *kh, *kw)
            }
        }
    }
}

pub(crate) fn pooled_shape(
    input: &[usize],
    kh: usize,
    kw: usize,
) -> Result<Vec<usize>, ModelError> {
    let [c, h, w] = input else {
        return Err(ModelError::Shape(format!(
            "pooling expects a CxHxW input, got {input:?}"
        )));
    };
    if kh == 0 || kw == 0 || h % kh != 0 || w % kw != 0 {
        return Err(ModelError::Shape(format!(
            "{kh}x{kw} pooling does not tile {h}x{w}"
        )));
    }
    Ok(vec![*c, h / kh, w / kw])
}

/// The public part of a model.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Skeleton {
    pub input_shape: Vec<usize>,
    pub input_scale: u64,
    pub layers: Vec<LayerSpec>,
}

impl Skeleton {
    /// Checks shapes layer by layer and returns every intermediate shape.
    pub fn shapes(&self) -> Result<Vec<Vec<usize>>, ModelError> {
        if self.input_shape.is_empty() || self.input_shape.contains(&0) {
            return Err(ModelError::Shape(format!(
                "bad input shape {:?}",
                self.input_shape
            )));
        }
        if !self.input_scale.is_power_of_two() {
            return Err(ModelError::Invalid(
                "input scale is not a power of two".into(),
            ));
        }
        let mut shapes = vec![self.input_shape.clone()];
        for layer in &self.layers {
            let next = layer.output_shape(shapes.last().expect("non-empty"))?;
            shapes.push(next);
        }
        Ok(shapes)
    }

    pub fn output_shape(&self) -> Result<Vec<usize>, ModelError> {
        Ok(self.shapes()?.pop().expect("non-empty"))
    }

    pub fn write_to(&self, w: &mut ByteWriter) {
        w.u32(self.input_shape.len() as u32);
        for &d in &self.input_shape {
            w.u32(d as u32);
        }
        w.u64(self.input_scale).u32(self.layers.len() as u32);
        for layer in &self.layers {
            match layer {
                LayerSpec::Linear {
                    kind,
                    has_bias,
                    weight_scale,
                } => {
                    kind.write_to(w);
                    w.u8(u8::from(*has_bias)).u64(*weight_scale);
                }
                LayerSpec::Relu => {
                    w.u8(2);
                }
                LayerSpec::MaxPool { kh, kw } => {
                    w.u8(3).u32(*kh as u32).u32(*kw as u32);
                }
                LayerSpec::AvgPool { kh, kw } => {
                    w.u8(4).u32(*kh as u32).u32(*kw as u32);
                }
            }
        }
    }

    pub fn read_from(r: &mut ByteReader<'_>) -> Result<Self, CodecError> {
        let ndim = r.u32()? as usize;
        if ndim > 8 {
            return Err(CodecError::Invalid(format!("{ndim} input dimensions")));
        }
        let input_shape = (0..ndim)
            .map(|_| r.u32().map(|d| d as usize))
            .collect::<Result<_, _>>()?;
        let input_scale = r.u64()?;
        let count = r.u32()? as usize;
        let mut layers = Vec::with_capacity(count.min(1024));
        for _ in 0..count {
            let tag = r.u8()?;
            let layer = match tag {
                0 | 1 => {
                    let kind = LinearKind::read_from(tag, r)?;
                    let has_bias = match r.u8()? {
                        0 => false,
                        1 => true,
                        b => return Err(CodecError::Invalid(format!("bias flag {b}"))),
                    };
                    LayerSpec::Linear {
                        kind,
                        has_bias,
                        weight_scale: r.u64()?,
                    }
                }
                2 => LayerSpec::Relu,
                3 => LayerSpec::MaxPool {
                    kh: r.u32()? as usize,
                    kw: r.u32()? as usize,
                },
                4 => LayerSpec::AvgPool {
                    kh: r.u32()? as usize,
                    kw: r.u32()? as usize,
                },
                t => return Err(CodecError::Invalid(format!("unknown layer tag {t}"))),
            };
            layers.push(layer);
        }
        Ok(Self {
            input_shape,
            input_scale,
            layers,
        })
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = ByteWriter::new();
        self.write_to(&mut w);
        w.into_inner()
    }
}

/// A quantized feed-forward network.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ModelGraph {
    input_shape: Vec<usize>,
    input_scale: u64,
    layers: Vec<Layer>,
}

impl ModelGraph {
    pub fn new(
        input_shape: Vec<usize>,
        input_scale: u64,
        layers: Vec<Layer>,
    ) -> Result<Self, ModelError> {
        let model = Self {
            input_shape,
            input_scale,
            layers,
        };
        model.skeleton().shapes()?;
        Ok(model)
    }

    pub fn input_shape(&self) -> &[usize] {
        &self.input_shape
    }

    pub fn input_scale(&self) -> u64 {
        self.input_scale
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn linear_layers(&self) -> impl Iterator<Item = &LinearLayer> {
        self.layers.iter().filter_map(|l| match l {
            Layer::Linear(lin) => Some(lin),
            _ => None,
        })
    }

    pub fn skeleton(&self) -> Skeleton {
        Skeleton {
            input_shape: self.input_shape.clone(),
            input_scale: self.input_scale,
            layers: self
                .layers
                .iter()
                .map(|l| match l {
                    Layer::Linear(lin) => lin.spec(),
                    Layer::Relu => LayerSpec::Relu,
                    Layer::MaxPool { kh, kw } => LayerSpec::MaxPool { kh: *kh, kw: *kw },
                    Layer::AvgPool { kh, kw } => LayerSpec::AvgPool { kh: *kh, kw: *kw },
                })
                .collect(),
        }
    }

    pub fn output_shape(&self) -> Vec<usize> {
        self.skeleton()
            .output_shape()
            .expect("validated at construction")
    }

    fn body_bytes(&self) -> Vec<u8> {
        let mut w = ByteWriter::new();
        w.bytes(MODEL_MAGIC).u16(MODEL_VERSION);
        self.skeleton().write_to(&mut w);
        for lin in self.linear_layers() {
            for &v in lin.weights.values() {
                w.bytes(&v.to_le_bytes());
            }
            if let Some(bias) = &lin.bias {
                for &b in bias {
                    w.i64(b);
                }
            }
        }
        w.into_inner()
    }

    /// SHA-256 over the canonical container bytes.
    pub fn digest(&self) -> [u8; 32] {
        digest(&self.body_bytes())
    }

    /// Container: magic, version, layer table, weight blobs, trailing digest.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut bytes = self.body_bytes();
        let d = digest(&bytes);
        bytes.extend_from_slice(&d);
        bytes
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, ModelError> {
        if bytes.len() < 32 {
            return Err(CodecError::Truncated {
                offset: 0,
                wanted: 32,
            }
            .into());
        }
        let (body, tail) = bytes.split_at(bytes.len() - 32);
        let mut r = ByteReader::new(body);
        r.magic(MODEL_MAGIC)?;
        let version = r.u16()?;
        if version != MODEL_VERSION {
            return Err(CodecError::Version(version).into());
        }
        let skeleton = Skeleton::read_from(&mut r)?;
        let mut layers = Vec::with_capacity(skeleton.layers.len());
        for spec in &skeleton.layers {
            layers.push(match *spec {
                LayerSpec::Linear {
                    kind,
                    has_bias,
                    weight_scale,
                } => {
                    let shape = kind.weight_shape();
                    let count: usize = shape.iter().product();
                    let raw =
                        r.take(count.checked_mul(2).ok_or_else(|| {
                            CodecError::Invalid("weight count overflows".into())
                        })?)?;
                    let values = raw
                        .chunks_exact(2)
                        .map(|c| i16::from_le_bytes([c[0], c[1]]))
                        .collect();
                    let weights = QuantizedTensor::new(values, shape, weight_scale)?;
                    let bias = if has_bias {
                        Some(
                            (0..kind.out_channels())
                                .map(|_| r.i64())
                                .collect::<Result<Vec<_>, _>>()?,
                        )
                    } else {
                        None
                    };
                    Layer::Linear(LinearLayer::new(kind, weights, bias)?)
                }
                LayerSpec::Relu => Layer::Relu,
                LayerSpec::MaxPool { kh, kw } => Layer::MaxPool { kh, kw },
                LayerSpec::AvgPool { kh, kw } => Layer::AvgPool { kh, kw },
            });
        }
        r.finish()?;
        if digest(body) != tail {
            return Err(CodecError::Digest.into());
        }
        Self::new(skeleton.input_shape, skeleton.input_scale, layers)
    }

    pub fn save(&self, path: &std::path::Path) -> Result<(), ModelError> {
        std::fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: &std::path::Path) -> Result<Self, ModelError> {
        Self::from_bytes(&std::fs::read(path)?)
    }
}
