//! Conv/dense index geometry shared by the integer and field kernels.

use crate::field::{MulMode, PrimeField};
use crate::model::{LinearKind, ModelError};

/// For every output element, the `(input, weight)` index pairs it sums.
#[derive(Debug, Clone)]
pub struct Geometry {
    pub out_shape: Vec<usize>,
    /// Output elements per output channel; bias index is `o / plane`.
    pub plane: usize,
    offsets: Vec<usize>,
    pairs: Vec<(u32, u32)>,
}

impl Geometry {
    pub fn new(kind: &LinearKind, in_shape: &[usize]) -> Result<Self, ModelError> {
        let out_shape = kind.output_shape(in_shape)?;
        let mut offsets = vec![0];
        let mut pairs = Vec::new();
        let plane;
        match *kind {
            LinearKind::Conv2d {
                in_channels,
                out_channels,
                kernel_h,
                kernel_w,
                stride,
                padding,
            } => {
                let (h, w) = (in_shape[1], in_shape[2]);
                let (oh, ow) = (out_shape[1], out_shape[2]);
                plane = oh * ow;
                for oc in 0..out_channels {
                    for oy in 0..oh {
                        for ox in 0..ow {
                            for ic in 0..in_channels {
                                for ky in 0..kernel_h {
                                    let iy = (oy * stride + ky) as isize - padding as isize;
                                    if iy < 0 || iy >= h as isize {
                                        continue;
                                    }
                                    for kx in 0..kernel_w {
                                        let ix = (ox * stride + kx) as isize - padding as isize;
                                        if ix < 0 || ix >= w as isize {
                                            continue;
                                        }
                                        let input = (ic * h + iy as usize) * w + ix as usize;
                                        let weight = ((oc * in_channels + ic) * kernel_h + ky)
                                            * kernel_w
                                            + kx;
                                        pairs.push((input as u32, weight as u32));
                                    }
                                }
                            }
                            offsets.push(pairs.len());
                        }
                    }
                }
            }
            LinearKind::Dense { inputs, outputs } => {
                plane = 1;
                for o in 0..outputs {
                    for i in 0..inputs {
                        pairs.push((i as u32, (o * inputs + i) as u32));
                    }
                    offsets.push(pairs.len());
                }
            }
        }
        Ok(Self {
            out_shape,
            plane,
            offsets,
            pairs,
        })
    }

    pub fn outputs(&self) -> usize {
        self.offsets.len() - 1
    }

    fn terms(&self, o: usize) -> &[(u32, u32)] {
        &self.pairs[self.offsets[o]..self.offsets[o + 1]]
    }

    /// Exact integer forward pass.
    pub fn apply_i64(&self, x: &[i64], w: &[i64], bias: Option<&[i64]>) -> Vec<i64> {
        (0..self.outputs())
            .map(|o| {
                let acc: i64 = self
                    .terms(o)
                    .iter()
                    .map(|&(i, j)| x[i as usize] * w[j as usize])
                    .sum();
                acc + bias.map_or(0, |b| b[o / self.plane])
            })
            .collect()
    }

    /// Floating-point forward pass for unquantized reference models.
    pub fn apply_f64(&self, x: &[f64], w: &[f64], bias: Option<&[f64]>) -> Vec<f64> {
        (0..self.outputs())
            .map(|o| {
                let acc: f64 = self
                    .terms(o)
                    .iter()
                    .map(|&(i, j)| x[i as usize] * w[j as usize])
                    .sum();
                acc + bias.map_or(0.0, |b| b[o / self.plane])
            })
            .collect()
    }

    /// Forward pass over `F_p`; sums are exact because fan-in is at most `2^13`.
    pub fn apply_field(&self, field: &PrimeField, x: &[u64], w: &[u64]) -> Vec<u64> {
        (0..self.outputs())
            .map(|o| match field.mul_mode() {
                MulMode::Wide => {
                    let acc: u128 = self
                        .terms(o)
                        .iter()
                        .map(|&(i, j)| x[i as usize] as u128 * w[j as usize] as u128)
                        .sum();
                    field.reduce_wide(acc)
                }
                MulMode::Split => self.terms(o).iter().fold(0, |acc, &(i, j)| {
                    field.add(acc, field.mul(x[i as usize], w[j as usize]))
                }),
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn conv(kh: usize, stride: usize, padding: usize) -> LinearKind {
        LinearKind::Conv2d {
            in_channels: 2,
            out_channels: 3,
            kernel_h: kh,
            kernel_w: kh,
            stride,
            padding,
        }
    }

    // Direct nested-loop convolution used as an independent oracle.
    fn naive_conv(
        x: &[i64],
        (c, h, w): (usize, usize, usize),
        wt: &[i64],
        oc: usize,
        k: usize,
        stride: usize,
        pad: usize,
    ) -> Vec<i64> {
        let oh = (h + 2 * pad - k) / stride + 1;
        let ow = (w + 2 * pad - k) / stride + 1;
        let mut out = vec![0; oc * oh * ow];
        for o in 0..oc {
            for y in 0..oh {
                for xx in 0..ow {
                    let mut s = 0;
                    for ci in 0..c {
                        for ky in 0..k {
                            for kx in 0..k {
                                let iy = (y * stride + ky) as i64 - pad as i64;
                                let ix = (xx * stride + kx) as i64 - pad as i64;
                                if iy >= 0 && ix >= 0 && (iy as usize) < h && (ix as usize) < w {
                                    s += x[(ci * h + iy as usize) * w + ix as usize]
                                        * wt[((o * c + ci) * k + ky) * k + kx];
                                }
                            }
                        }
                    }
                    out[(o * oh + y) * ow + xx] = s;
                }
            }
        }
        out
    }

    #[test]
    fn conv_matches_nested_loops() {
        let x: Vec<i64> = (0..2 * 5 * 5).map(|v| (v * 7 % 11) - 5).collect();
        for (k, stride, pad) in [(3, 1, 1), (3, 2, 0), (2, 1, 0), (5, 1, 2)] {
            let wt: Vec<i64> = (0..3 * 2 * k * k).map(|v| (v * 5 % 9) as i64 - 4).collect();
            let g = Geometry::new(&conv(k, stride, pad), &[2, 5, 5]).unwrap();
            assert_eq!(
                g.apply_i64(&x, &wt, None),
                naive_conv(&x, (2, 5, 5), &wt, 3, k, stride, pad),
                "k={k} stride={stride} pad={pad}"
            );
        }
    }

    #[test]
    fn field_kernel_matches_integer_kernel() {
        let field = PrimeField::default();
        let split = field.with_mul_mode(MulMode::Split).unwrap();
        let x: Vec<i64> = (0..2 * 4 * 4).map(|v| (v * 13 % 17) - 8).collect();
        let wt: Vec<i64> = (0..3 * 2 * 9).map(|v| (v * 3 % 7) - 3).collect();
        let g = Geometry::new(&conv(3, 1, 1), &[2, 4, 4]).unwrap();
        let expected = g.apply_i64(&x, &wt, Some(&[1, -2, 3]));
        let mut got = g.apply_field(
            &field,
            &field.encode_slice(&x).unwrap(),
            &field.encode_slice(&wt).unwrap(),
        );
        assert_eq!(
            g.apply_field(
                &split,
                &field.encode_slice(&x).unwrap(),
                &field.encode_slice(&wt).unwrap()
            ),
            got
        );
        for (o, v) in got.iter_mut().enumerate() {
            *v = field.add(*v, field.encode_signed([1, -2, 3][o / g.plane]).unwrap());
        }
        assert_eq!(field.decode_slice(&got), expected);
    }

    #[test]
    fn dense_geometry() {
        let g = Geometry::new(
            &LinearKind::Dense {
                inputs: 3,
                outputs: 2,
            },
            &[3],
        )
        .unwrap();
        assert_eq!(
            g.apply_i64(&[1, 2, 3], &[1, 0, 0, 1, 1, 1], Some(&[10, 20])),
            vec![11, 26]
        );
    }
}
