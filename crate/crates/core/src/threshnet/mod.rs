//! U-Net threshold block: forward-only f32 inference.
//!
//! The network maps an N x N distribution to a nonnegative N x N threshold
//! map. Images are laid out with height = frequency bin and width = time, so
//! pixel `(y, x)` is `omega[y + N x]`.
//!
//! Layer stack for `levels = L`, `channels = [c1, .., cL]`:
//!
//! ```text
//! enc1.conv1  1    -> c1   enc1.conv2  c1 -> c1      (N x N)
//!   maxpool 2x2
//! enc2.conv1  c1   -> c2   enc2.conv2  c2 -> c2      (N/2)
//!   ...
//! encL.conv1  cL-1 -> cL   encL.conv2  cL -> cL      (bottleneck)
//! for l = L-1 .. 1:
//!   nearest 2x, upl.conv  cl+1 -> cl
//!   concat [skip_l, up]  -> 2 cl
//!   decl.conv1 2cl -> cl   decl.conv2  cl -> cl
//! head        c1   -> 1    (1x1), softplus
//! ```
//!
//! Every k x k conv has stride 1 and zero padding k/2 and is followed by ReLU
//! (the head excepted).

mod weights;

pub use weights::{
    InputFlags, Scalars, TensorEntry, ThresholdInput, UwbManifest, WeightBundle, FORMAT_VERSION,
    MAGIC,
};

use serde::{Deserialize, Serialize};

use crate::tfcore::TfMatrix;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UNetArch {
    pub levels: usize,
    pub channels: Vec<usize>,
    pub kernel: usize,
    pub head: String,
}

impl Default for UNetArch {
    fn default() -> Self {
        Self {
            levels: 3,
            channels: vec![16, 32, 64],
            kernel: 3,
            head: "softplus".into(),
        }
    }
}

/// Shape of one convolution in the stack.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LayerSpec {
    pub name: String,
    pub out_channels: usize,
    pub in_channels: usize,
    pub kernel: usize,
}

impl LayerSpec {
    fn new(name: String, in_channels: usize, out_channels: usize, kernel: usize) -> Self {
        Self {
            name,
            out_channels,
            in_channels,
            kernel,
        }
    }

    pub fn weight_shape(&self) -> Vec<usize> {
        vec![
            self.out_channels,
            self.in_channels,
            self.kernel,
            self.kernel,
        ]
    }

    pub fn parameter_count(&self) -> usize {
        self.out_channels * self.in_channels * self.kernel * self.kernel + self.out_channels
    }
}

impl UNetArch {
    pub fn validate(&self) -> Result<()> {
        if self.levels == 0 || self.channels.len() != self.levels {
            return Err(Error::Manifest(format!(
                "architecture needs one channel count per level (levels={}, channels={:?})",
                self.levels, self.channels
            )));
        }
        if self.channels.contains(&0) {
            return Err(Error::Manifest("channel counts must be positive".into()));
        }
        if self.kernel.is_multiple_of(2) {
            return Err(Error::Manifest(format!(
                "kernel must be odd, got {}",
                self.kernel
            )));
        }
        if self.head != "softplus" {
            return Err(Error::Manifest(format!("unsupported head `{}`", self.head)));
        }
        Ok(())
    }

    /// Convolutions in storage and execution order.
    pub fn layers(&self) -> Vec<LayerSpec> {
        let c = &self.channels;
        let k = self.kernel;
        let mut out = Vec::new();
        for l in 0..self.levels {
            let input = if l == 0 { 1 } else { c[l - 1] };
            out.push(LayerSpec::new(
                format!("enc{}.conv1", l + 1),
                input,
                c[l],
                k,
            ));
            out.push(LayerSpec::new(format!("enc{}.conv2", l + 1), c[l], c[l], k));
        }
        for l in (0..self.levels - 1).rev() {
            out.push(LayerSpec::new(
                format!("up{}.conv", l + 1),
                c[l + 1],
                c[l],
                k,
            ));
            out.push(LayerSpec::new(
                format!("dec{}.conv1", l + 1),
                2 * c[l],
                c[l],
                k,
            ));
            out.push(LayerSpec::new(format!("dec{}.conv2", l + 1), c[l], c[l], k));
        }
        out.push(LayerSpec::new("head".into(), c[0], 1, 1));
        out
    }

    pub fn parameter_count(&self) -> usize {
        self.layers().iter().map(LayerSpec::parameter_count).sum()
    }

    /// Spatial dimensions must be divisible by this.
    pub fn divisor(&self) -> usize {
        1 << (self.levels - 1)
    }

    /// Bounding box `(y0, y1, x0, x1)` (inclusive) of output pixels that can
    /// depend on input pixel `(y, x)` of an `h x w` image.
    pub fn influence_box(
        &self,
        h: usize,
        w: usize,
        y: usize,
        x: usize,
    ) -> (usize, usize, usize, usize) {
        let pad = (self.kernel / 2) as isize;
        let conv = |b: Region, h: isize, w: isize| b.grow(pad).clip(h, w);
        let (mut hh, mut ww) = (h as isize, w as isize);
        let mut region = Region {
            y0: y as isize,
            y1: y as isize,
            x0: x as isize,
            x1: x as isize,
        };
        let mut skips = Vec::new();
        for l in 0..self.levels {
            if l > 0 {
                region = region.pool();
                hh /= 2;
                ww /= 2;
            }
            region = conv(conv(region, hh, ww), hh, ww);
            skips.push(region);
        }
        for l in (0..self.levels - 1).rev() {
            hh *= 2;
            ww *= 2;
            region = conv(region.upsample().clip(hh, ww), hh, ww);
            region = region.union(skips[l]);
            region = conv(conv(region, hh, ww), hh, ww);
        }
        (
            region.y0 as usize,
            region.y1 as usize,
            region.x0 as usize,
            region.x1 as usize,
        )
    }
}

#[derive(Debug, Clone, Copy)]
struct Region {
    y0: isize,
    y1: isize,
    x0: isize,
    x1: isize,
}

impl Region {
    fn grow(self, r: isize) -> Self {
        Self {
            y0: self.y0 - r,
            y1: self.y1 + r,
            x0: self.x0 - r,
            x1: self.x1 + r,
        }
    }

    fn clip(self, h: isize, w: isize) -> Self {
        Self {
            y0: self.y0.max(0),
            y1: self.y1.min(h - 1),
            x0: self.x0.max(0),
            x1: self.x1.min(w - 1),
        }
    }

    fn pool(self) -> Self {
        Self {
            y0: self.y0 / 2,
            y1: self.y1 / 2,
            x0: self.x0 / 2,
            x1: self.x1 / 2,
        }
    }

    fn upsample(self) -> Self {
        Self {
            y0: 2 * self.y0,
            y1: 2 * self.y1 + 1,
            x0: 2 * self.x0,
            x1: 2 * self.x1 + 1,
        }
    }

    fn union(self, o: Self) -> Self {
        Self {
            y0: self.y0.min(o.y0),
            y1: self.y1.max(o.y1),
            x0: self.x0.min(o.x0),
            x1: self.x1.max(o.x1),
        }
    }
}

/// One convolution's parameters; weight layout `(out, in, kh, kw)` row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Conv {
    pub spec: LayerSpec,
    pub weight: Vec<f32>,
    pub bias: Vec<f32>,
}

/// Parameters of one U-Net, in [`UNetArch::layers`] order.
#[derive(Debug, Clone, PartialEq)]
pub struct UNetParams {
    pub convs: Vec<Conv>,
}

impl UNetParams {
    /// All-zero parameters for `arch`.
    pub fn zeros(arch: &UNetArch) -> Self {
        Self::from_fn(arch, |_| 0.0, |_| 0.0)
    }

    pub(crate) fn from_fn(
        arch: &UNetArch,
        mut weight: impl FnMut(&LayerSpec) -> f32,
        mut bias: impl FnMut(&LayerSpec) -> f32,
    ) -> Self {
        let convs = arch
            .layers()
            .into_iter()
            .map(|spec| {
                let wn = spec.out_channels * spec.in_channels * spec.kernel * spec.kernel;
                let weight = (0..wn).map(|_| weight(&spec)).collect();
                let bias = (0..spec.out_channels).map(|_| bias(&spec)).collect();
                Conv { spec, weight, bias }
            })
            .collect();
        Self { convs }
    }

    pub fn parameter_count(&self) -> usize {
        self.convs
            .iter()
            .map(|c| c.weight.len() + c.bias.len())
            .sum()
    }
}

/// Channel-major feature maps.
#[derive(Debug, Clone)]
struct Features {
    c: usize,
    h: usize,
    w: usize,
    data: Vec<f32>,
}

impl Features {
    fn plane(&self, c: usize) -> &[f32] {
        let s = self.h * self.w;
        &self.data[c * s..(c + 1) * s]
    }
}

fn conv2d(x: &Features, conv: &Conv, relu: bool) -> Features {
    let spec = &conv.spec;
    debug_assert_eq!(x.c, spec.in_channels);
    let (h, w, k) = (x.h, x.w, spec.kernel);
    let pad = (k / 2) as isize;
    let size = h * w;
    let mut data = vec![0.0f32; spec.out_channels * size];
    for (o, plane) in data.chunks_exact_mut(size).enumerate() {
        plane.fill(conv.bias[o]);
        for i in 0..spec.in_channels {
            let src = x.plane(i);
            for ky in 0..k {
                let dy = ky as isize - pad;
                let ys = (-dy).max(0) as usize..(h as isize - dy).min(h as isize).max(0) as usize;
                for kx in 0..k {
                    let wv = conv.weight[((o * spec.in_channels + i) * k + ky) * k + kx];
                    if wv == 0.0 {
                        continue;
                    }
                    let dx = kx as isize - pad;
                    let x0 = (-dx).max(0) as usize;
                    let x1 = (w as isize - dx).min(w as isize).max(0) as usize;
                    if x0 >= x1 {
                        continue;
                    }
                    for y in ys.clone() {
                        let sy = (y as isize + dy) as usize;
                        let dst = &mut plane[y * w + x0..y * w + x1];
                        let sx0 = (x0 as isize + dx) as usize;
                        let s = &src[sy * w + sx0..sy * w + sx0 + (x1 - x0)];
                        for (d, v) in dst.iter_mut().zip(s) {
                            *d += wv * v;
                        }
                    }
                }
            }
        }
        if relu {
            plane.iter_mut().for_each(|v| *v = v.max(0.0));
        }
    }
    Features {
        c: spec.out_channels,
        h,
        w,
        data,
    }
}

fn max_pool(x: &Features) -> Features {
    let (h, w) = (x.h / 2, x.w / 2);
    let mut data = Vec::with_capacity(x.c * h * w);
    for c in 0..x.c {
        let src = x.plane(c);
        for y in 0..h {
            for xx in 0..w {
                let a = src[2 * y * x.w + 2 * xx];
                let b = src[2 * y * x.w + 2 * xx + 1];
                let cc = src[(2 * y + 1) * x.w + 2 * xx];
                let d = src[(2 * y + 1) * x.w + 2 * xx + 1];
                data.push(a.max(b).max(cc.max(d)));
            }
        }
    }
    Features { c: x.c, h, w, data }
}

fn upsample_nearest(x: &Features) -> Features {
    let (h, w) = (x.h * 2, x.w * 2);
    let mut data = Vec::with_capacity(x.c * h * w);
    for c in 0..x.c {
        let src = x.plane(c);
        for y in 0..h {
            for xx in 0..w {
                data.push(src[(y / 2) * x.w + xx / 2]);
            }
        }
    }
    Features { c: x.c, h, w, data }
}

fn concat(skip: &Features, up: &Features) -> Features {
    let mut data = Vec::with_capacity(skip.data.len() + up.data.len());
    data.extend_from_slice(&skip.data);
    data.extend_from_slice(&up.data);
    Features {
        c: skip.c + up.c,
        h: skip.h,
        w: skip.w,
        data,
    }
}

/// `log(1 + e^x)`, stable for large |x|.
pub fn softplus(x: f32) -> f32 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

/// Forward pass on an image stored row-major `h x w`.
pub fn unet_forward_image(
    arch: &UNetArch,
    params: &UNetParams,
    h: usize,
    w: usize,
    image: &[f32],
) -> Result<Vec<f32>> {
    let div = arch.divisor();
    if h == 0 || w == 0 || !h.is_multiple_of(div) || !w.is_multiple_of(div) {
        return Err(Error::GridMismatch(format!(
            "U-Net input {h}x{w} must be nonempty and divisible by {div}"
        )));
    }
    if image.len() != h * w {
        return Err(Error::LengthMismatch {
            what: "U-Net input",
            expected: h * w,
            actual: image.len(),
        });
    }
    let layers = arch.layers();
    if params.convs.len() != layers.len()
        || params.convs.iter().zip(&layers).any(|(c, l)| c.spec != *l)
    {
        return Err(Error::GridMismatch(
            "parameters do not match the architecture".into(),
        ));
    }

    let mut convs = params.convs.iter();
    let mut next = || convs.next().expect("layer count checked above");
    let mut x = Features {
        c: 1,
        h,
        w,
        data: image.to_vec(),
    };
    let mut skips = Vec::with_capacity(arch.levels);
    for l in 0..arch.levels {
        if l > 0 {
            x = max_pool(&x);
        }
        x = conv2d(&x, next(), true);
        x = conv2d(&x, next(), true);
        skips.push(x.clone());
    }
    skips.pop();
    while let Some(skip) = skips.pop() {
        let up = conv2d(&upsample_nearest(&x), next(), true);
        x = concat(&skip, &up);
        x = conv2d(&x, next(), true);
        x = conv2d(&x, next(), true);
    }
    let out = conv2d(&x, next(), false);
    Ok(out.data.into_iter().map(softplus).collect())
}

/// Threshold map for a distribution: nonnegative, same grid.
pub fn unet_forward(arch: &UNetArch, params: &UNetParams, omega: &TfMatrix) -> Result<TfMatrix> {
    let n = omega.n();
    let image = tf_to_image(omega);
    let out = unet_forward_image(arch, params, n, n, &image)?;
    Ok(image_to_tf(n, &out))
}

/// Column-major distribution -> row-major image (height = frequency).
pub fn tf_to_image(omega: &TfMatrix) -> Vec<f32> {
    let n = omega.n();
    let mut img = vec![0.0f32; n * n];
    for t in 0..n {
        for (m, v) in omega.column(t).iter().enumerate() {
            img[m * n + t] = *v as f32;
        }
    }
    img
}

pub fn image_to_tf(n: usize, image: &[f32]) -> TfMatrix {
    let mut out = TfMatrix::zeros(n);
    for m in 0..n {
        for t in 0..n {
            out.set(m, t, f64::from(image[m * n + t]));
        }
    }
    out
}
