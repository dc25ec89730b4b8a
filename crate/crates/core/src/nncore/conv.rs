use super::{axpy, dot, glorot_uniform, Activation, Dense, DenseCache, NnError, Param, Result};
use crate::rng::Rng;
use crate::simdata::GridShape;

/// 3×3 convolution, stride 1, zero "same" padding, fused ReLU.
///
/// Images are `height × width × channels`; the kernel is stored as
/// `3 × 3 × in × out` so the innermost loop runs over output channels.
#[derive(Debug, Clone, PartialEq)]
pub struct Conv2d {
    pub weight: Param,
    pub bias: Param,
}

#[derive(Debug, Clone)]
pub struct ConvCache {
    input: Vec<f32>,
    /// Post-ReLU output.
    output: Vec<f32>,
    h: usize,
    w: usize,
}

impl Conv2d {
    pub fn new(name: &str, in_ch: usize, out_ch: usize, rng: &mut Rng) -> Self {
        Self {
            weight: Param::new(
                format!("{name}.weight"),
                glorot_uniform(&[3, 3, in_ch, out_ch], 9 * in_ch, 9 * out_ch, rng),
            ),
            bias: Param::zeros(format!("{name}.bias"), &[out_ch]),
        }
    }

    pub fn in_channels(&self) -> usize {
        self.weight.value.shape[2]
    }

    pub fn out_channels(&self) -> usize {
        self.weight.value.shape[3]
    }

    pub fn forward(&self, input: &[f32], h: usize, w: usize) -> Result<ConvCache> {
        let (ci, co) = (self.in_channels(), self.out_channels());
        if input.len() != h * w * ci {
            return Err(NnError::Shape {
                expected: vec![h, w, ci],
                actual: vec![input.len()],
            });
        }
        let k = &self.weight.value.values;
        let mut out = vec![0.0f32; h * w * co];
        for y in 0..h {
            for x in 0..w {
                let o = &mut out[(y * w + x) * co..(y * w + x + 1) * co];
                o.copy_from_slice(&self.bias.value.values);
                for ky in 0..3 {
                    let iy = y as isize + ky as isize - 1;
                    if iy < 0 || iy >= h as isize {
                        continue;
                    }
                    for kx in 0..3 {
                        let ix = x as isize + kx as isize - 1;
                        if ix < 0 || ix >= w as isize {
                            continue;
                        }
                        let px = &input[(iy as usize * w + ix as usize) * ci..][..ci];
                        let kbase = (ky * 3 + kx) * ci * co;
                        for (i, &v) in px.iter().enumerate() {
                            if v != 0.0 {
                                axpy(v, &k[kbase + i * co..kbase + (i + 1) * co], o);
                            }
                        }
                    }
                }
                for v in o.iter_mut() {
                    *v = v.max(0.0);
                }
            }
        }
        Ok(ConvCache {
            input: input.to_vec(),
            output: out,
            h,
            w,
        })
    }

    pub fn output<'a>(&self, cache: &'a ConvCache) -> &'a [f32] {
        &cache.output
    }

    pub fn backward(&mut self, cache: &ConvCache, upstream: &[f32]) -> Result<Vec<f32>> {
        let (ci, co) = (self.in_channels(), self.out_channels());
        let (h, w) = (cache.h, cache.w);
        if upstream.len() != h * w * co {
            return Err(NnError::Shape {
                expected: vec![h, w, co],
                actual: vec![upstream.len()],
            });
        }
        let k = &self.weight.value.values;
        let gk = &mut self.weight.grad.values;
        let gb = &mut self.bias.grad.values;
        let mut din = vec![0.0f32; h * w * ci];
        let mut dz = vec![0.0f32; co];
        for y in 0..h {
            for x in 0..w {
                let base = (y * w + x) * co;
                let mut any = false;
                for c in 0..co {
                    dz[c] = if cache.output[base + c] > 0.0 {
                        upstream[base + c]
                    } else {
                        0.0
                    };
                    any |= dz[c] != 0.0;
                }
                if !any {
                    continue;
                }
                for c in 0..co {
                    gb[c] += dz[c];
                }
                for ky in 0..3 {
                    let iy = y as isize + ky as isize - 1;
                    if iy < 0 || iy >= h as isize {
                        continue;
                    }
                    for kx in 0..3 {
                        let ix = x as isize + kx as isize - 1;
                        if ix < 0 || ix >= w as isize {
                            continue;
                        }
                        let pbase = (iy as usize * w + ix as usize) * ci;
                        let kbase = (ky * 3 + kx) * ci * co;
                        for i in 0..ci {
                            let krow = kbase + i * co..kbase + (i + 1) * co;
                            axpy(cache.input[pbase + i], &dz, &mut gk[krow.clone()]);
                            din[pbase + i] += dot(&k[krow], &dz);
                        }
                    }
                }
            }
        }
        Ok(din)
    }
}

/// 2×2 max pooling with stride 2; odd trailing rows/columns are dropped.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MaxPool2;

#[derive(Debug, Clone)]
pub struct PoolCache {
    pub output: Vec<f32>,
    argmax: Vec<usize>,
    in_len: usize,
}

pub fn conv_output_len(n: usize) -> usize {
    n / 2
}

impl MaxPool2 {
    pub fn forward(input: &[f32], h: usize, w: usize, c: usize) -> PoolCache {
        let (oh, ow) = (h / 2, w / 2);
        let mut output = vec![0.0f32; oh * ow * c];
        let mut argmax = vec![0usize; oh * ow * c];
        for y in 0..oh {
            for x in 0..ow {
                for ch in 0..c {
                    let mut best = f32::NEG_INFINITY;
                    let mut arg = 0;
                    for (dy, dx) in [(0, 0), (0, 1), (1, 0), (1, 1)] {
                        let idx = ((2 * y + dy) * w + 2 * x + dx) * c + ch;
                        if input[idx] > best {
                            best = input[idx];
                            arg = idx;
                        }
                    }
                    let o = (y * ow + x) * c + ch;
                    output[o] = best;
                    argmax[o] = arg;
                }
            }
        }
        PoolCache {
            output,
            argmax,
            in_len: h * w * c,
        }
    }

    pub fn backward(cache: &PoolCache, upstream: &[f32]) -> Vec<f32> {
        let mut din = vec![0.0f32; cache.in_len];
        for (g, &i) in upstream.iter().zip(&cache.argmax) {
            din[i] += g;
        }
        din
    }
}

/// Per-frame feature extractor: two (conv 3×3 → ReLU → max-pool 2×2)
/// stages, flatten, then two ReLU dense stages.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvEncoder {
    pub input: GridShape,
    pub conv1: Conv2d,
    pub conv2: Conv2d,
    pub dense1: Dense,
    pub dense2: Dense,
}

#[derive(Debug, Clone)]
pub struct ConvEncoderCache {
    frames: usize,
    conv1: Vec<ConvCache>,
    pool1: Vec<PoolCache>,
    conv2: Vec<ConvCache>,
    pool2: Vec<PoolCache>,
    dense1: DenseCache,
    dense2: DenseCache,
}

impl ConvEncoderCache {
    /// `frames × features` output.
    pub fn output(&self) -> &[f32] {
        &self.dense2.output
    }
}

impl ConvEncoder {
    pub fn new(input: GridShape, filters: (usize, usize), widths: (usize, usize), rng: &mut Rng) -> Result<Self> {
        if input.width < 8 || input.height < 8 {
            return Err(NnError::Shape {
                expected: vec![8, 8],
                actual: vec![input.height, input.width],
            });
        }
        let flat = Self::flat_len(input, filters.1);
        Ok(Self {
            input,
            conv1: Conv2d::new("cnn.conv1", input.channels, filters.0, rng),
            conv2: Conv2d::new("cnn.conv2", filters.0, filters.1, rng),
            dense1: Dense::new("cnn.flat1", flat, widths.0, Activation::Relu, rng),
            dense2: Dense::new("cnn.flat2", widths.0, widths.1, Activation::Relu, rng),
        })
    }

    pub fn flat_len(input: GridShape, filters2: usize) -> usize {
        conv_output_len(conv_output_len(input.height)) * conv_output_len(conv_output_len(input.width)) * filters2
    }

    pub fn features(&self) -> usize {
        self.dense2.outputs()
    }

    /// `input` holds `frames` consecutive `h × w × c` images.
    pub fn forward(&self, input: &[f32], frames: usize) -> Result<ConvEncoderCache> {
        let s = self.input;
        if input.len() != frames * s.len() {
            return Err(NnError::Shape {
                expected: vec![frames, s.height, s.width, s.channels],
                actual: vec![input.len()],
            });
        }
        let (f1, f2) = (self.conv1.out_channels(), self.conv2.out_channels());
        let (h1, w1) = (s.height / 2, s.width / 2);
        let mut conv1 = Vec::with_capacity(frames);
        let mut pool1 = Vec::with_capacity(frames);
        let mut conv2 = Vec::with_capacity(frames);
        let mut pool2 = Vec::with_capacity(frames);
        let mut flat = Vec::with_capacity(frames * self.dense1.inputs());
        for frame in input.chunks_exact(s.len()) {
            let c1 = self.conv1.forward(frame, s.height, s.width)?;
            let p1 = MaxPool2::forward(&c1.output, s.height, s.width, f1);
            let c2 = self.conv2.forward(&p1.output, h1, w1)?;
            let p2 = MaxPool2::forward(&c2.output, h1, w1, f2);
            flat.extend_from_slice(&p2.output);
            conv1.push(c1);
            pool1.push(p1);
            conv2.push(c2);
            pool2.push(p2);
        }
        let dense1 = self.dense1.forward(&flat, frames)?;
        let dense2 = self.dense2.forward(&dense1.output, frames)?;
        Ok(ConvEncoderCache {
            frames,
            conv1,
            pool1,
            conv2,
            pool2,
            dense1,
            dense2,
        })
    }

    /// Backpropagates `frames × features` gradients; returns the input gradient.
    pub fn backward(&mut self, cache: &ConvEncoderCache, upstream: &[f32]) -> Result<Vec<f32>> {
        let d1 = self.dense2.backward(&cache.dense2, upstream)?;
        let dflat = self.dense1.backward(&cache.dense1, &d1)?;
        let flat_len = self.dense1.inputs();
        let mut dinput = Vec::with_capacity(cache.frames * self.input.len());
        for f in 0..cache.frames {
            let dp2 = &dflat[f * flat_len..(f + 1) * flat_len];
            let dc2 = MaxPool2::backward(&cache.pool2[f], dp2);
            let dp1 = self.conv2.backward(&cache.conv2[f], &dc2)?;
            let dc1 = MaxPool2::backward(&cache.pool1[f], &dp1);
            dinput.extend(self.conv1.backward(&cache.conv1[f], &dc1)?);
        }
        Ok(dinput)
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param> {
        vec![
            &mut self.conv1.weight,
            &mut self.conv1.bias,
            &mut self.conv2.weight,
            &mut self.conv2.bias,
            &mut self.dense1.weight,
            &mut self.dense1.bias,
            &mut self.dense2.weight,
            &mut self.dense2.bias,
        ]
    }

    pub fn params(&self) -> Vec<&Param> {
        vec![
            &self.conv1.weight,
            &self.conv1.bias,
            &self.conv2.weight,
            &self.conv2.bias,
            &self.dense1.weight,
            &self.dense1.bias,
            &self.dense2.weight,
            &self.dense2.bias,
        ]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;

    #[test]
    fn zero_input_zero_bias_gives_zero_features() {
        let shape = GridShape::new(8, 8, 1);
        let enc = ConvEncoder::new(shape, (2, 3), (5, 4), &mut rng::seeded(1)).unwrap();
        let cache = enc.forward(&vec![0.0; 3 * shape.len()], 3).unwrap();
        assert_eq!(cache.output().len(), 3 * 4);
        assert!(cache.output().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn uniform_input_pools_uniformly_in_the_interior() {
        // With a uniform image every interior conv response is identical, so
        // pooled cells away from the zero-padded border are identical too.
        let conv = Conv2d::new("c", 1, 2, &mut rng::seeded(3));
        let c = conv.forward(&vec![0.7; 64], 8, 8).unwrap();
        let p = MaxPool2::forward(&c.output, 8, 8, 2);
        let at = |y: usize, x: usize, ch: usize| p.output[(y * 4 + x) * 2 + ch];
        for ch in 0..2 {
            let v = at(1, 1, ch);
            for (y, x) in [(1, 2), (2, 1), (2, 2)] {
                assert_eq!(at(y, x, ch), v);
            }
        }
        // Without padding effects (1×1 kernel centre only) the whole map is uniform.
        let mut centre = conv.clone();
        for (i, w) in centre.weight.value.values.iter_mut().enumerate() {
            if i / 2 != 4 {
                *w = 0.0;
            }
        }
        let c = centre.forward(&vec![0.7; 64], 8, 8).unwrap();
        let p = MaxPool2::forward(&c.output, 8, 8, 2);
        for ch in 0..2 {
            let first = p.output[ch];
            assert!(p.output.iter().skip(ch).step_by(2).all(|&v| v == first));
        }
    }

    #[test]
    fn pooling_routes_gradient_to_argmax() {
        let input = [1.0, 5.0, 2.0, 3.0]; // 2×2×1
        let p = MaxPool2::forward(&input, 2, 2, 1);
        assert_eq!(p.output, vec![5.0]);
        assert_eq!(MaxPool2::backward(&p, &[2.0]), vec![0.0, 2.0, 0.0, 0.0]);
    }

    #[test]
    fn small_inputs_rejected() {
        let err = ConvEncoder::new(GridShape::new(7, 8, 1), (1, 1), (2, 2), &mut rng::seeded(0));
        assert!(matches!(err, Err(NnError::Shape { .. })));
    }
}
