use super::AttentionConfig;
use crate::error::{Error, Result};
use crate::params::{join, Parameterized};
use crate::tensor::{gelu, layer_norm, linear, softmax_lastaxis, Tensor};

const LN_EPS: f32 = 1e-5;

/// Geometry of an `H×W` map zero-padded to multiples of the window size `m`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct WindowGrid {
    pub height: usize,
    pub width: usize,
    pub padded_height: usize,
    pub padded_width: usize,
    pub window: usize,
}

impl WindowGrid {
    pub fn new(height: usize, width: usize, window: usize) -> Result<Self> {
        if window == 0 || height == 0 || width == 0 {
            return Err(Error::invalid(format!("window grid needs positive sizes, got {height}×{width}, m={window}")));
        }
        let up = |v: usize| v.div_ceil(window) * window;
        Ok(Self { height, width, padded_height: up(height), padded_width: up(width), window })
    }

    pub fn windows_y(&self) -> usize {
        self.padded_height / self.window
    }

    pub fn windows_x(&self) -> usize {
        self.padded_width / self.window
    }

    pub fn num_windows(&self) -> usize {
        self.windows_y() * self.windows_x()
    }

    pub fn tokens_per_window(&self) -> usize {
        self.window * self.window
    }

    /// `(window, token)` of padded position `(y, x)`.
    pub fn locate(&self, y: usize, x: usize) -> (usize, usize) {
        let m = self.window;
        ((y / m) * self.windows_x() + x / m, (y % m) * m + x % m)
    }

    /// Padded position `(y, x)` of `token` in `window`.
    pub fn position(&self, window: usize, token: usize) -> (usize, usize) {
        let m = self.window;
        let (wy, wx) = (window / self.windows_x(), window % self.windows_x());
        (wy * m + token / m, wx * m + token % m)
    }

    fn padded_index(&self, window: usize, token: usize) -> usize {
        let (y, x) = self.position(window, token);
        y * self.padded_width + x
    }
}

fn hwc(x: &Tensor) -> Result<(usize, usize, usize)> {
    match *x.shape() {
        [h, w, c] => Ok((h, w, c)),
        _ => Err(Error::shape(format!("expected an H×W×C map, got {:?}", x.shape()))),
    }
}

fn pad_to(x: &Tensor, grid: &WindowGrid) -> Result<Tensor> {
    let (h, w, c) = hwc(x)?;
    if (h, w) == (grid.padded_height, grid.padded_width) {
        return Ok(x.clone());
    }
    let mut out = Tensor::zeros(&[grid.padded_height, grid.padded_width, c]);
    for y in 0..h {
        out.data_mut()[y * grid.padded_width * c..][..w * c].copy_from_slice(&x.data()[y * w * c..][..w * c]);
    }
    Ok(out)
}

fn crop(x: &Tensor, grid: &WindowGrid) -> Result<Tensor> {
    let (hp, wp, c) = hwc(x)?;
    if (hp, wp) == (grid.height, grid.width) {
        return Ok(x.clone());
    }
    let mut data = Vec::with_capacity(grid.height * grid.width * c);
    for y in 0..grid.height {
        data.extend_from_slice(&x.data()[y * wp * c..][..grid.width * c]);
    }
    Tensor::new(vec![grid.height, grid.width, c], data)
}

/// Splits `H×W×C` into `nW×(m·m)×C` after zero-padding to multiples of `m`.
pub fn window_partition(x: &Tensor, m: usize) -> Result<(Tensor, WindowGrid)> {
    let (h, w, c) = hwc(x)?;
    let grid = WindowGrid::new(h, w, m)?;
    let padded = pad_to(x, &grid)?;
    let t = grid.tokens_per_window();
    let mut data = Vec::with_capacity(grid.num_windows() * t * c);
    for win in 0..grid.num_windows() {
        for tok in 0..t {
            data.extend_from_slice(&padded.data()[grid.padded_index(win, tok) * c..][..c]);
        }
    }
    Ok((Tensor::new(vec![grid.num_windows(), t, c], data)?, grid))
}

/// Inverse of [`window_partition`]; padding is cropped away.
pub fn window_reverse(windows: &Tensor, grid: &WindowGrid) -> Result<Tensor> {
    let [n, t, c] = *windows.shape() else {
        return Err(Error::shape(format!("expected nW×T×C windows, got {:?}", windows.shape())));
    };
    if n != grid.num_windows() || t != grid.tokens_per_window() {
        return Err(Error::shape(format!("{n}×{t} windows do not fit the {grid:?}")));
    }
    let mut padded = Tensor::zeros(&[grid.padded_height, grid.padded_width, c]);
    for win in 0..n {
        for tok in 0..t {
            let dst = grid.padded_index(win, tok) * c;
            padded.data_mut()[dst..dst + c].copy_from_slice(&windows.data()[(win * t + tok) * c..][..c]);
        }
    }
    crop(&padded, grid)
}

/// Cyclic roll of an `H×W×C` map: the token at `(y, x)` moves to `(y+dy, x+dx)` modulo the map size.
pub fn cyclic_shift(x: &Tensor, dy: isize, dx: isize) -> Result<Tensor> {
    let (h, w, c) = hwc(x)?;
    let mut out = Tensor::zeros(x.shape());
    for y in 0..h {
        let ty = (y as isize + dy).rem_euclid(h as isize) as usize;
        for xx in 0..w {
            let tx = (xx as isize + dx).rem_euclid(w as isize) as usize;
            out.data_mut()[(ty * w + tx) * c..][..c].copy_from_slice(&x.data()[(y * w + xx) * c..][..c]);
        }
    }
    Ok(out)
}

/// Which token pairs may attend within each window of the map rolled by `-shift`.
///
/// Returns one row-major `T×T` table per window. Tokens that wrapped around
/// during the roll only see tokens that wrapped the same way, and padding
/// only sees padding.
pub fn shifted_window_mask(grid: &WindowGrid, shift: usize) -> Result<Vec<Vec<bool>>> {
    let m = grid.window;
    if shift >= m {
        return Err(Error::invalid(format!("shift {shift} must be smaller than the window {m}")));
    }
    let region = |v: usize, size: usize| {
        if v < size - m {
            0u8
        } else if v < size - shift {
            1
        } else {
            2
        }
    };
    let t = grid.tokens_per_window();
    let mut masks = Vec::with_capacity(grid.num_windows());
    for win in 0..grid.num_windows() {
        let labels: Vec<(u8, u8, bool)> = (0..t)
            .map(|tok| {
                let (y, x) = grid.position(win, tok);
                let oy = (y + shift) % grid.padded_height;
                let ox = (x + shift) % grid.padded_width;
                (region(y, grid.padded_height), region(x, grid.padded_width), oy >= grid.height || ox >= grid.width)
            })
            .collect();
        let mut mask = Vec::with_capacity(t * t);
        for a in &labels {
            mask.extend(labels.iter().map(|b| a == b));
        }
        masks.push(mask);
    }
    Ok(masks)
}

#[derive(Clone, Debug, PartialEq)]
pub struct Linear {
    /// `out × in`
    pub weight: Tensor,
    pub bias: Option<Tensor>,
}

impl Linear {
    pub fn new(d_in: usize, d_out: usize) -> Self {
        Self { weight: Tensor::zeros(&[d_out, d_in]), bias: Some(Tensor::zeros(&[d_out])) }
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        linear(x, &self.weight, self.bias.as_ref())
    }
}

impl Parameterized for Linear {
    fn visit_params(&self, prefix: &str, f: &mut dyn FnMut(&str, &Tensor)) {
        f(&join(prefix, "weight"), &self.weight);
        if let Some(b) = &self.bias {
            f(&join(prefix, "bias"), b);
        }
    }

    fn visit_params_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Tensor)) {
        f(&join(prefix, "weight"), &mut self.weight);
        if let Some(b) = &mut self.bias {
            f(&join(prefix, "bias"), b);
        }
    }
}

/// Result of one windowed attention pass.
#[derive(Clone, Debug)]
pub struct AttentionOutput {
    /// `H×W×C`, same size as the input.
    pub output: Tensor,
    /// Per window, `heads×T×T` attention weights in the rolled frame.
    pub maps: Vec<Tensor>,
    /// Per window, row-major `T×T` table of permitted pairs.
    pub masks: Vec<Vec<bool>>,
    pub grid: WindowGrid,
}

/// Multi-head self-attention restricted to non-overlapping `m×m` windows.
#[derive(Clone, Debug, PartialEq)]
pub struct WindowAttention {
    pub query: Linear,
    pub key: Linear,
    pub value: Linear,
    pub proj: Linear,
    pub heads: usize,
    pub window: usize,
    pub scale_logits: bool,
}

impl WindowAttention {
    pub fn new(cfg: &AttentionConfig) -> Result<Self> {
        cfg.validate()?;
        let c = cfg.channels;
        Ok(Self {
            query: Linear::new(c, c),
            key: Linear::new(c, c),
            value: Linear::new(c, c),
            proj: Linear::new(c, c),
            heads: cfg.heads,
            window: cfg.window,
            scale_logits: cfg.scale_logits,
        })
    }

    pub fn shift(&self) -> usize {
        self.window / 2
    }

    pub fn w_msa(&self, x: &Tensor) -> Result<Tensor> {
        self.run(x, 0, false).map(|o| o.output)
    }

    pub fn sw_msa(&self, x: &Tensor) -> Result<Tensor> {
        self.run(x, self.shift(), false).map(|o| o.output)
    }

    /// Attention with an explicit shift, keeping the per-window weights.
    pub fn attend(&self, x: &Tensor, shift: usize) -> Result<AttentionOutput> {
        self.run(x, shift, true)
    }

    fn run(&self, x: &Tensor, shift: usize, keep_maps: bool) -> Result<AttentionOutput> {
        let (h, w, c) = hwc(x)?;
        if c % self.heads != 0 {
            return Err(Error::shape(format!("{c} channels do not split into {} heads", self.heads)));
        }
        let grid = WindowGrid::new(h, w, self.window)?;
        let masks = shifted_window_mask(&grid, shift)?;
        let s = shift as isize;
        let rolled = cyclic_shift(&pad_to(x, &grid)?, -s, -s)?;
        let n = grid.padded_height * grid.padded_width;
        let tokens = rolled.reshape(&[n, c])?;
        let q = self.query.forward(&tokens)?;
        let k = self.key.forward(&tokens)?;
        let v = self.value.forward(&tokens)?;
        let (q, k, v) = (q.data(), k.data(), v.data());

        let d = c / self.heads;
        let scale = if self.scale_logits { 1.0 / (d as f64).sqrt() } else { 1.0 };
        let t = grid.tokens_per_window();
        let mut z = vec![0.0f32; n * c];
        let mut maps = Vec::with_capacity(if keep_maps { masks.len() } else { 0 });
        let mut logits = vec![0.0f32; t * t];
        for (win, mask) in masks.iter().enumerate() {
            let idx: Vec<usize> = (0..t).map(|tok| grid.padded_index(win, tok)).collect();
            let mut win_map = Vec::with_capacity(if keep_maps { self.heads * t * t } else { 0 });
            for head in 0..self.heads {
                let off = head * d;
                for (i, &pi) in idx.iter().enumerate() {
                    let qi = &q[pi * c + off..][..d];
                    for (j, &pj) in idx.iter().enumerate() {
                        logits[i * t + j] = if mask[i * t + j] {
                            let kj = &k[pj * c + off..][..d];
                            (qi.iter().zip(kj).map(|(&a, &b)| a as f64 * b as f64).sum::<f64>() * scale) as f32
                        } else {
                            f32::NEG_INFINITY
                        };
                    }
                }
                let attn = softmax_lastaxis(&Tensor::new(vec![t, t], logits.clone())?)?;
                for (i, &pi) in idx.iter().enumerate() {
                    let row = &attn.data()[i * t..][..t];
                    for ch in 0..d {
                        let acc: f64 =
                            row.iter().zip(&idx).map(|(&a, &pj)| a as f64 * v[pj * c + off + ch] as f64).sum();
                        z[pi * c + off + ch] = acc as f32;
                    }
                }
                if keep_maps {
                    win_map.extend_from_slice(attn.data());
                }
            }
            if keep_maps {
                maps.push(Tensor::new(vec![self.heads, t, t], win_map)?);
            }
        }
        let out = self.proj.forward(&Tensor::new(vec![n, c], z)?)?;
        let out = cyclic_shift(&out.reshape(&[grid.padded_height, grid.padded_width, c])?, s, s)?;
        Ok(AttentionOutput { output: crop(&out, &grid)?, maps, masks, grid })
    }
}

impl Parameterized for WindowAttention {
    fn visit_params(&self, prefix: &str, f: &mut dyn FnMut(&str, &Tensor)) {
        self.query.visit_params(&join(prefix, "query"), f);
        self.key.visit_params(&join(prefix, "key"), f);
        self.value.visit_params(&join(prefix, "value"), f);
        self.proj.visit_params(&join(prefix, "proj"), f);
    }

    fn visit_params_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Tensor)) {
        self.query.visit_params_mut(&join(prefix, "query"), f);
        self.key.visit_params_mut(&join(prefix, "key"), f);
        self.value.visit_params_mut(&join(prefix, "value"), f);
        self.proj.visit_params_mut(&join(prefix, "proj"), f);
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LayerNormParams {
    pub gamma: Tensor,
    pub beta: Tensor,
}

impl LayerNormParams {
    fn new(c: usize) -> Self {
        Self { gamma: Tensor::full(&[c], 1.0), beta: Tensor::zeros(&[c]) }
    }
}

/// Pre-norm transformer block: windowed attention then a GELU MLP, each with a residual.
#[derive(Clone, Debug, PartialEq)]
pub struct StrBlock {
    pub norm1: LayerNormParams,
    pub attn: WindowAttention,
    pub norm2: LayerNormParams,
    pub fc1: Linear,
    pub fc2: Linear,
    pub shift: usize,
}

impl StrBlock {
    pub fn new(cfg: &AttentionConfig, shifted: bool) -> Result<Self> {
        let attn = WindowAttention::new(cfg)?;
        let c = cfg.channels;
        let hidden = c * cfg.mlp_ratio;
        Ok(Self {
            norm1: LayerNormParams::new(c),
            shift: if shifted { attn.shift() } else { 0 },
            attn,
            norm2: LayerNormParams::new(c),
            fc1: Linear::new(c, hidden),
            fc2: Linear::new(hidden, c),
        })
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        self.forward_with_residual(x, true)
    }

    /// `residual = false` drops both skip connections.
    pub fn forward_with_residual(&self, x: &Tensor, residual: bool) -> Result<Tensor> {
        let (h, w, c) = hwc(x)?;
        let n = h * w;
        let tokens = x.reshape(&[n, c])?;
        let normed = layer_norm(&tokens, &self.norm1.gamma, &self.norm1.beta, LN_EPS)?.reshape(&[h, w, c])?;
        let attended = self.attn.run(&normed, self.shift, false)?.output.reshape(&[n, c])?;
        let mid = if residual { tokens.add(&attended)? } else { attended };
        let normed = layer_norm(&mid, &self.norm2.gamma, &self.norm2.beta, LN_EPS)?;
        let hidden = self.fc1.forward(&normed)?.map(|v| gelu(v as f64) as f32);
        let mlp = self.fc2.forward(&hidden)?;
        let out = if residual { mid.add(&mlp)? } else { mlp };
        out.reshape(&[h, w, c])
    }
}

impl Parameterized for StrBlock {
    fn visit_params(&self, prefix: &str, f: &mut dyn FnMut(&str, &Tensor)) {
        f(&join(prefix, "norm1.gamma"), &self.norm1.gamma);
        f(&join(prefix, "norm1.beta"), &self.norm1.beta);
        self.attn.visit_params(&join(prefix, "attn"), f);
        f(&join(prefix, "norm2.gamma"), &self.norm2.gamma);
        f(&join(prefix, "norm2.beta"), &self.norm2.beta);
        self.fc1.visit_params(&join(prefix, "mlp.fc1"), f);
        self.fc2.visit_params(&join(prefix, "mlp.fc2"), f);
    }

    fn visit_params_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Tensor)) {
        f(&join(prefix, "norm1.gamma"), &mut self.norm1.gamma);
        f(&join(prefix, "norm1.beta"), &mut self.norm1.beta);
        self.attn.visit_params_mut(&join(prefix, "attn"), f);
        f(&join(prefix, "norm2.gamma"), &mut self.norm2.gamma);
        f(&join(prefix, "norm2.beta"), &mut self.norm2.beta);
        self.fc1.visit_params_mut(&join(prefix, "mlp.fc1"), f);
        self.fc2.visit_params_mut(&join(prefix, "mlp.fc2"), f);
    }
}

/// A regular-window block followed by a shifted-window block.
#[derive(Clone, Debug, PartialEq)]
pub struct StrBlockPair {
    pub regular: StrBlock,
    pub shifted: StrBlock,
}

impl StrBlockPair {
    pub fn new(cfg: &AttentionConfig) -> Result<Self> {
        Ok(Self { regular: StrBlock::new(cfg, false)?, shifted: StrBlock::new(cfg, true)? })
    }

    /// On an `H×W×C` map.
    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        self.shifted.forward(&self.regular.forward(x)?)
    }

    pub fn forward_with_residual(&self, x: &Tensor, residual: bool) -> Result<Tensor> {
        self.shifted.forward_with_residual(&self.regular.forward_with_residual(x, residual)?, residual)
    }

    /// On a `C×H×W` map; converts at the boundary in both directions.
    pub fn forward_chw(&self, x: &Tensor) -> Result<Tensor> {
        self.forward(&x.chw_to_hwc()?)?.hwc_to_chw()
    }
}

impl Parameterized for StrBlockPair {
    fn visit_params(&self, prefix: &str, f: &mut dyn FnMut(&str, &Tensor)) {
        self.regular.visit_params(&join(prefix, "regular"), f);
        self.shifted.visit_params(&join(prefix, "shifted"), f);
    }

    fn visit_params_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Tensor)) {
        self.regular.visit_params_mut(&join(prefix, "regular"), f);
        self.shifted.visit_params_mut(&join(prefix, "shifted"), f);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn noise(shape: &[usize], seed: u64) -> Tensor {
        let mut s = seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) | 1;
        Tensor::from_fn(shape, |_| {
            s ^= s << 13;
            s ^= s >> 7;
            s ^= s << 17;
            (s % 2001) as f32 / 1000.0 - 1.0
        })
    }

    fn cfg(c: usize, m: usize, heads: usize) -> AttentionConfig {
        AttentionConfig { reduction: 1, window: m, heads, ..AttentionConfig::new(c) }
    }

    fn random_attention(c: usize, m: usize, heads: usize, seed: u64) -> WindowAttention {
        let mut a = WindowAttention::new(&cfg(c, m, heads)).unwrap();
        a.randomize(seed, 0.5);
        a
    }

    #[test]
    fn partition_examples() {
        let x = noise(&[4, 4, 3], 1);
        let (win, grid) = window_partition(&x, 4).unwrap();
        assert_eq!(win.shape(), &[1, 16, 3]);
        assert_eq!(win.data(), x.data());
        assert_eq!(grid.num_windows(), 1);

        assert_eq!(window_partition(&noise(&[8, 8, 2], 2), 4).unwrap().1.num_windows(), 4);

        let x = noise(&[7, 9, 4], 3);
        let (win, grid) = window_partition(&x, 4).unwrap();
        assert_eq!((grid.padded_height, grid.padded_width, grid.num_windows()), (8, 12, 6));
        assert_eq!(window_reverse(&win, &grid).unwrap(), x);
    }

    #[test]
    fn shift_roundtrip() {
        let x = noise(&[5, 7, 2], 4);
        let y = cyclic_shift(&x, -2, -2).unwrap();
        assert_ne!(y, x);
        assert_eq!(cyclic_shift(&y, 2, 2).unwrap(), x);
    }

    #[test]
    fn single_token_windows() {
        let a = random_attention(4, 1, 2, 5);
        let x = noise(&[3, 2, 4], 6);
        let out = a.attend(&x, 0).unwrap();
        assert!(out.maps.iter().all(|m| m.data().iter().all(|&v| v == 1.0)));
        let tokens = x.reshape(&[6, 4]).unwrap();
        let expected = a.proj.forward(&a.value.forward(&tokens).unwrap()).unwrap();
        assert_eq!(out.output.reshape(&[6, 4]).unwrap(), expected);
    }

    #[test]
    fn zero_value_projection_gives_projection_bias() {
        let mut a = random_attention(8, 4, 2, 7);
        a.value.weight.data_mut().fill(0.0);
        a.value.bias.as_mut().unwrap().data_mut().fill(0.0);
        let out = a.sw_msa(&noise(&[6, 5, 8], 8)).unwrap();
        let bias = a.proj.bias.as_ref().unwrap().data();
        for tok in out.data().chunks_exact(8) {
            assert_eq!(tok, bias);
        }
    }

    #[test]
    fn zero_shift_is_w_msa() {
        let a = random_attention(8, 4, 4, 9);
        let x = noise(&[9, 10, 8], 10);
        assert_eq!(a.attend(&x, 0).unwrap().output, a.w_msa(&x).unwrap());
        assert!(a.attend(&x, 4).is_err());
    }

    #[test]
    fn unscaled_logits_differ() {
        let a = random_attention(8, 4, 2, 11);
        let mut b = a.clone();
        b.scale_logits = false;
        let x = noise(&[4, 4, 8], 12);
        assert_ne!(a.w_msa(&x).unwrap(), b.w_msa(&x).unwrap());
    }

    /// Tokens may attend iff their displacement is the same before and after
    /// the roll, and both are real or both are padding.
    fn provenance_oracle(grid: &WindowGrid, shift: usize, win: usize, i: usize, j: usize) -> bool {
        let (yi, xi) = grid.position(win, i);
        let (yj, xj) = grid.position(win, j);
        let orig = |y: usize, x: usize| ((y + shift) % grid.padded_height, (x + shift) % grid.padded_width);
        let (oyi, oxi) = orig(yi, xi);
        let (oyj, oxj) = orig(yj, xj);
        let same_disp = oyi as isize - oyj as isize == yi as isize - yj as isize
            && oxi as isize - oxj as isize == xi as isize - xj as isize;
        let pad = |y: usize, x: usize| y >= grid.height || x >= grid.width;
        same_disp && pad(oyi, oxi) == pad(oyj, oxj)
    }

    #[test]
    fn shifted_attention_reaches_across_window_borders() {
        let a = random_attention(4, 4, 1, 13);
        let x = noise(&[8, 8, 4], 14);
        let base = a.sw_msa(&x).unwrap();
        let mut bumped = x.clone();
        // token (3,3) sits in window 0 unshifted; shifted, it shares a window with (4,4)
        bumped.data_mut()[(3 * 8 + 3) * 4] += 1.0;
        let changed = a.sw_msa(&bumped).unwrap();
        assert_ne!(&base.data()[(4 * 8 + 4) * 4..][..4], &changed.data()[(4 * 8 + 4) * 4..][..4]);
        let plain = a.w_msa(&x).unwrap();
        let plain_bumped = a.w_msa(&bumped).unwrap();
        assert_eq!(&plain.data()[(4 * 8 + 4) * 4..][..4], &plain_bumped.data()[(4 * 8 + 4) * 4..][..4]);
    }

    #[test]
    fn str_pair_zero_weights_is_identity_and_residual_matters() {
        let c = cfg(8, 4, 2);
        let pair = StrBlockPair::new(&c).unwrap();
        let x = noise(&[6, 7, 8], 15);
        assert_eq!(pair.forward(&x).unwrap(), x);

        let mut pair = pair;
        pair.randomize(16, 0.3);
        let y = pair.forward(&x).unwrap();
        assert_eq!(y.shape(), x.shape());
        assert_ne!(y, pair.forward_with_residual(&x, false).unwrap());
        let chw = x.hwc_to_chw().unwrap();
        assert_eq!(pair.forward_chw(&chw).unwrap(), y.hwc_to_chw().unwrap());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(100))]
        #[test]
        fn partition_reverse_is_identity(h in 1usize..=32, w in 1usize..=32, c in 1usize..4,
                                         mi in 0usize..3, seed in any::<u64>()) {
            let m = [2, 4, 7][mi];
            let x = noise(&[h, w, c], seed);
            let (win, grid) = window_partition(&x, m).unwrap();
            prop_assert_eq!(window_reverse(&win, &grid).unwrap(), x);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn attention_rows_normalize_and_respect_mask(h in 1usize..12, w in 1usize..12, mi in 0usize..3,
                                                     seed in any::<u64>()) {
            let m = [2, 4, 7][mi];
            let a = random_attention(8, m, 2, seed);
            let x = noise(&[h, w, 8], seed ^ 0xABCD);
            for shift in [0, m / 2] {
                let out = a.attend(&x, shift).unwrap();
                let t = out.grid.tokens_per_window();
                for (win, (map, mask)) in out.maps.iter().zip(&out.masks).enumerate() {
                    for i in 0..t {
                        for j in 0..t {
                            prop_assert_eq!(mask[i * t + j], provenance_oracle(&out.grid, shift, win, i, j));
                        }
                    }
                    for row in map.data().chunks_exact(t) {
                        let total: f64 = row.iter().map(|&v| v as f64).sum();
                        prop_assert!((total - 1.0).abs() < 1e-6, "row sum {}", total);
                    }
                    for head in map.data().chunks_exact(t * t) {
                        for (k, &v) in head.iter().enumerate() {
                            if !mask[k] {
                                prop_assert_eq!(v, 0.0);
                            }
                        }
                    }
                }
            }
        }
    }
}
