//! Turns a model skeleton into the executable operation list.

use std::fmt;
use std::str::FromStr;

use crate::codec::{digest, ByteWriter};
use crate::field::PrimeField;
use crate::model::{LayerSpec, LinearKind, Skeleton};

use super::LayerError;

/// Bits of a post-truncation activation, sign included, as assumed by the mask ranges.
pub const ACTIVATION_BITS: u32 = 16;

/// Per-term magnitude bound `2^15 * 2^15` of an untruncated product.
const PRODUCT_BOUND_BITS: u32 = 30;

/// Order of the three secure operations inside one layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum Ordering {
    /// Linear, Truncation, NonLinear.
    #[default]
    Ltn,
    /// Linear, NonLinear, Truncation.
    Lnt,
}

impl fmt::Display for Ordering {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Ordering::Ltn => "ltn",
            Ordering::Lnt => "lnt",
        })
    }
}

impl FromStr for Ordering {
    type Err = LayerError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "ltn" => Ok(Ordering::Ltn),
            "lnt" => Ok(Ordering::Lnt),
            other => Err(LayerError::Unsupported(format!(
                "unknown ordering {other:?}"
            ))),
        }
    }
}

/// Pooling applied by the elite on masked plaintext.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PoolOp {
    None,
    Max {
        kh: usize,
        kw: usize,
    },
    /// Block sum; the averaging division lives in the adjacent truncation.
    Sum {
        kh: usize,
        kw: usize,
    },
}

impl PoolOp {
    pub fn window(&self) -> Option<(usize, usize)> {
        match *self {
            PoolOp::None => None,
            PoolOp::Max { kh, kw } | PoolOp::Sum { kh, kw } => Some((kh, kw)),
        }
    }

    pub fn area(&self) -> usize {
        self.window().map_or(1, |(kh, kw)| kh * kw)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum OpKind {
    Linear {
        /// Position among the model's linear layers, which indexes the weight shares.
        layer: usize,
        kind: LinearKind,
        has_bias: bool,
    },
    Truncation {
        scale: u64,
        divisor: u64,
    },
    NonLinear {
        relu: bool,
        pool: PoolOp,
        /// Largest multiplicative mask that keeps `x * beta` decodable.
        mask_max: u64,
    },
}

impl OpKind {
    pub fn name(&self) -> &'static str {
        match self {
            OpKind::Linear { .. } => "linear",
            OpKind::Truncation { .. } => "truncation",
            OpKind::NonLinear { .. } => "nonlinear",
        }
    }

    /// Whether the operation's input must be present on passive parties.
    pub fn needs_passive_input(&self) -> bool {
        !matches!(self, OpKind::Truncation { .. })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ScheduledOp {
    pub kind: OpKind,
    /// Index of the source layer group this op belongs to.
    pub group: usize,
    /// Output goes to all `n` parties rather than the front `k`.
    pub passive_out: bool,
    pub in_shape: Vec<usize>,
    pub out_shape: Vec<usize>,
}

impl ScheduledOp {
    pub fn in_elems(&self) -> usize {
        self.in_shape.iter().product()
    }

    pub fn out_elems(&self) -> usize {
        self.out_shape.iter().product()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Schedule {
    pub ordering: Ordering,
    pub input_shape: Vec<usize>,
    pub input_scale: u64,
    pub ops: Vec<ScheduledOp>,
}

impl Schedule {
    pub fn output_shape(&self) -> &[usize] {
        self.ops
            .last()
            .map_or(&self.input_shape, |op| &op.out_shape)
    }

    /// Canonical encoding hashed into the handshake.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = ByteWriter::new();
        w.u8(match self.ordering {
            Ordering::Ltn => 0,
            Ordering::Lnt => 1,
        })
        .u64(self.input_scale);
        write_shape(&mut w, &self.input_shape);
        w.u32(self.ops.len() as u32);
        for op in &self.ops {
            match op.kind {
                OpKind::Linear {
                    layer,
                    kind,
                    has_bias,
                } => {
                    w.u8(0).u32(layer as u32).u8(u8::from(has_bias));
                    write_shape(&mut w, &kind.weight_shape());
                    if let LinearKind::Conv2d {
                        stride, padding, ..
                    } = kind
                    {
                        w.u32(stride as u32).u32(padding as u32);
                    }
                }
                OpKind::Truncation { scale, divisor } => {
                    w.u8(1).u64(scale).u64(divisor);
                }
                OpKind::NonLinear {
                    relu,
                    pool,
                    mask_max,
                } => {
                    w.u8(2).u8(u8::from(relu));
                    match pool {
                        PoolOp::None => w.u8(0),
                        PoolOp::Max { kh, kw } => w.u8(1).u32(kh as u32).u32(kw as u32),
                        PoolOp::Sum { kh, kw } => w.u8(2).u32(kh as u32).u32(kw as u32),
                    };
                    w.u64(mask_max);
                }
            }
            w.u32(op.group as u32).u8(u8::from(op.passive_out));
            write_shape(&mut w, &op.in_shape);
            write_shape(&mut w, &op.out_shape);
        }
        w.into_inner()
    }

    pub fn digest(&self) -> [u8; 32] {
        digest(&self.to_bytes())
    }
}

fn write_shape(w: &mut ByteWriter, shape: &[usize]) {
    w.u32(shape.len() as u32);
    for &d in shape {
        w.u32(d as u32);
    }
}

/// `beta` bound for inputs already truncated to 16 bits: `2^(bits - 1 - 16)`.
pub fn truncated_mask_max(field: &PrimeField) -> Result<u64, LayerError> {
    let bits = field.element_bits();
    if bits <= ACTIVATION_BITS + 1 {
        return Err(LayerError::Unsupported(format!(
            "{bits}-bit field leaves no room for multiplicative masks"
        )));
    }
    Ok(1 << (bits - 1 - ACTIVATION_BITS))
}

/// `beta` bound for an untruncated linear output summed over `area` pool positions.
fn untruncated_mask_max(field: &PrimeField, terms: usize, area: usize) -> Result<u64, LayerError> {
    let bound = (terms as u128 * area as u128) << PRODUCT_BOUND_BITS;
    let max = (field.signed_bound() as u128 / bound) as u64;
    let cap = truncated_mask_max(field)?;
    if max == 0 {
        return Err(LayerError::Unsupported(
            "linear output too wide to mask before truncation".into(),
        ));
    }
    Ok(max.min(cap))
}

struct Group {
    linear: LayerSpec,
    relu: bool,
    pool: Option<LayerSpec>,
}

fn group_layers(skeleton: &Skeleton) -> Result<Vec<Group>, LayerError> {
    let mut groups: Vec<Group> = Vec::new();
    for (i, layer) in skeleton.layers.iter().enumerate() {
        match layer {
            LayerSpec::Linear { .. } => groups.push(Group {
                linear: *layer,
                relu: false,
                pool: None,
            }),
            _ => {
                let g = groups.last_mut().ok_or_else(|| {
                    LayerError::Unsupported(format!("layer {i} precedes every linear layer"))
                })?;
                match layer {
                    // ReLU commutes with max pooling but not with averaging.
                    LayerSpec::Relu
                        if !g.relu && !matches!(g.pool, Some(LayerSpec::AvgPool { .. })) =>
                    {
                        g.relu = true
                    }
                    LayerSpec::MaxPool { .. } | LayerSpec::AvgPool { .. } if g.pool.is_none() => {
                        g.pool = Some(*layer)
                    }
                    _ => {
                        return Err(LayerError::Unsupported(format!(
                            "layer {i} ({layer:?}) cannot follow the current group"
                        )))
                    }
                }
            }
        }
    }
    Ok(groups)
}

/// Plans the secure operation list for `skeleton`.
///
/// Each linear layer is followed by a truncation and, when the group has a
/// ReLU or pooling step, a nonlinear op; `ordering` decides which of the two
/// comes first. Average pooling becomes a block sum plus a divisor on the
/// truncation. Linear and nonlinear ops publish to passive parties only when
/// the next op reads its input there.
pub fn plan_schedule(
    skeleton: &Skeleton,
    ordering: Ordering,
    field: &PrimeField,
) -> Result<Schedule, LayerError> {
    skeleton.shapes()?;
    let groups = group_layers(skeleton)?;
    let mut ops = Vec::new();
    let mut shape = skeleton.input_shape.clone();
    for (gi, g) in groups.iter().enumerate() {
        let LayerSpec::Linear {
            kind,
            has_bias,
            weight_scale,
        } = g.linear
        else {
            unreachable!("groups start with a linear layer");
        };
        let lin_out = kind.output_shape(&shape)?;
        ops.push(ScheduledOp {
            kind: OpKind::Linear {
                // Each group holds exactly one linear layer.
                layer: gi,
                kind,
                has_bias,
            },
            group: gi,
            passive_out: false,
            in_shape: shape.clone(),
            out_shape: lin_out.clone(),
        });

        let (pool, divisor) = match g.pool {
            None => (PoolOp::None, 1),
            Some(LayerSpec::MaxPool { kh, kw }) => (PoolOp::Max { kh, kw }, 1),
            Some(LayerSpec::AvgPool { kh, kw }) => (PoolOp::Sum { kh, kw }, (kh * kw) as u64),
            Some(other) => unreachable!("not a pool: {other:?}"),
        };
        let has_nonlinear = g.relu || pool != PoolOp::None;
        let pooled = match g.pool {
            Some(p) => p.output_shape(&lin_out)?,
            None => lin_out.clone(),
        };
        let trunc = OpKind::Truncation {
            scale: weight_scale,
            divisor,
        };
        match ordering {
            Ordering::Ltn => {
                ops.push(ScheduledOp {
                    kind: trunc,
                    group: gi,
                    passive_out: true,
                    in_shape: lin_out.clone(),
                    out_shape: lin_out.clone(),
                });
                if has_nonlinear {
                    ops.push(ScheduledOp {
                        kind: OpKind::NonLinear {
                            relu: g.relu,
                            pool,
                            mask_max: truncated_mask_max(field)?,
                        },
                        group: gi,
                        passive_out: false,
                        in_shape: lin_out.clone(),
                        out_shape: pooled.clone(),
                    });
                }
            }
            Ordering::Lnt => {
                if has_nonlinear {
                    let terms = kind.fan_in() + usize::from(has_bias);
                    let summed = match pool {
                        PoolOp::Sum { .. } => pool.area(),
                        _ => 1,
                    };
                    ops.push(ScheduledOp {
                        kind: OpKind::NonLinear {
                            relu: g.relu,
                            pool,
                            mask_max: untruncated_mask_max(field, terms, summed)?,
                        },
                        group: gi,
                        passive_out: false,
                        in_shape: lin_out.clone(),
                        out_shape: pooled.clone(),
                    });
                }
                ops.push(ScheduledOp {
                    kind: trunc,
                    group: gi,
                    passive_out: true,
                    in_shape: pooled.clone(),
                    out_shape: pooled.clone(),
                });
            }
        }
        shape = pooled;
    }
    // Truncation always redistributes to everyone; the others follow their successor.
    for i in 0..ops.len() {
        if !matches!(ops[i].kind, OpKind::Truncation { .. }) {
            ops[i].passive_out = ops
                .get(i + 1)
                .is_some_and(|next| next.kind.needs_passive_input());
        }
    }
    Ok(Schedule {
        ordering,
        input_shape: skeleton.input_shape.clone(),
        input_scale: skeleton.input_scale,
        ops,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn conv(c_in: usize, c_out: usize) -> LayerSpec {
        LayerSpec::Linear {
            kind: LinearKind::Conv2d {
                in_channels: c_in,
                out_channels: c_out,
                kernel_h: 3,
                kernel_w: 3,
                stride: 1,
                padding: 1,
            },
            has_bias: true,
            weight_scale: 256,
        }
    }

    fn skeleton(layers: Vec<LayerSpec>) -> Skeleton {
        Skeleton {
            input_shape: vec![1, 4, 4],
            input_scale: 256,
            layers,
        }
    }

    fn kinds(s: &Schedule) -> Vec<(&'static str, bool)> {
        s.ops
            .iter()
            .map(|o| (o.kind.name(), o.passive_out))
            .collect()
    }

    #[test]
    fn conv_relu_ltn() {
        let s = plan_schedule(
            &skeleton(vec![conv(1, 2), LayerSpec::Relu, conv(2, 2)]),
            Ordering::Ltn,
            &PrimeField::default(),
        )
        .unwrap();
        assert_eq!(
            kinds(&s),
            vec![
                ("linear", false),
                ("truncation", true),
                ("nonlinear", true),
                ("linear", false),
                ("truncation", true),
            ]
        );
        assert!(matches!(
            s.ops[2].kind,
            OpKind::NonLinear { mask_max, .. } if mask_max == 1 << 28
        ));
    }

    #[test]
    fn avgpool_merges_into_truncation() {
        let s = plan_schedule(
            &skeleton(vec![
                conv(1, 2),
                LayerSpec::Relu,
                LayerSpec::AvgPool { kh: 2, kw: 2 },
            ]),
            Ordering::Ltn,
            &PrimeField::default(),
        )
        .unwrap();
        assert_eq!(
            s.ops[1].kind,
            OpKind::Truncation {
                scale: 256,
                divisor: 4
            }
        );
        assert!(matches!(
            s.ops[2].kind,
            OpKind::NonLinear {
                relu: true,
                pool: PoolOp::Sum { kh: 2, kw: 2 },
                ..
            }
        ));
        assert_eq!(s.ops[2].out_shape, vec![2, 2, 2]);
        assert!(!s.ops[2].passive_out);
    }

    #[test]
    fn lnt_orders_nonlinear_first_with_narrow_masks() {
        let s = plan_schedule(
            &skeleton(vec![
                conv(1, 2),
                LayerSpec::Relu,
                LayerSpec::MaxPool { kh: 2, kw: 2 },
                conv(2, 2),
            ]),
            Ordering::Lnt,
            &PrimeField::default(),
        )
        .unwrap();
        assert_eq!(
            kinds(&s),
            vec![
                ("linear", true),
                ("nonlinear", false),
                ("truncation", true),
                ("linear", false),
                ("truncation", true),
            ]
        );
        // 9 products plus bias, each below 2^30
        let OpKind::NonLinear { mask_max, .. } = s.ops[1].kind else {
            panic!()
        };
        assert_eq!(
            mask_max,
            (PrimeField::default().signed_bound() as u128 / (10u128 << 30)) as u64
        );
        assert_eq!(s.ops[2].in_shape, vec![2, 2, 2]);
    }

    #[test]
    fn rejects_unsupported_sequences() {
        let f = PrimeField::default();
        for layers in [
            vec![LayerSpec::Relu, conv(1, 1)],
            vec![conv(1, 1), LayerSpec::Relu, LayerSpec::Relu],
            vec![
                conv(1, 1),
                LayerSpec::AvgPool { kh: 2, kw: 2 },
                LayerSpec::Relu,
            ],
        ] {
            assert!(plan_schedule(&skeleton(layers), Ordering::Ltn, &f).is_err());
        }
        assert!(matches!(
            truncated_mask_max(&PrimeField::new(11).unwrap()),
            Err(LayerError::Unsupported(_))
        ));
    }

    #[test]
    fn digest_tracks_ordering() {
        let sk = skeleton(vec![conv(1, 2), LayerSpec::Relu]);
        let f = PrimeField::default();
        let a = plan_schedule(&sk, Ordering::Ltn, &f).unwrap();
        let b = plan_schedule(&sk, Ordering::Lnt, &f).unwrap();
        assert_ne!(a.digest(), b.digest());
        assert_eq!(
            a.digest(),
            plan_schedule(&sk, Ordering::Ltn, &f).unwrap().digest()
        );
        assert_eq!("LNT".parse::<Ordering>().unwrap(), Ordering::Lnt);
    }
}
