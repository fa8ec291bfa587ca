use std::io::Cursor;
use std::path::Path;

use image::codecs::pnm::{PnmEncoder, PnmSubtype, SampleEncoding};
use image::{ExtendedColorType, ImageEncoder, ImageFormat};

use super::BoxAnnotation;
use crate::error::{Error, Result};
use crate::geometry::BBox;
use crate::tensor::Tensor;

/// Letterbox padding value, the conventional mid gray.
pub const LETTERBOX_FILL: f32 = 114.0 / 255.0;

/// RGB image, row-major `H×W×3`, channel values in `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Image {
    width: usize,
    height: usize,
    data: Vec<f32>,
}

impl Image {
    pub fn filled(width: usize, height: usize, rgb: [f32; 3]) -> Self {
        Self { width, height, data: rgb.iter().copied().cycle().take(width * height * 3).collect() }
    }

    pub fn from_data(width: usize, height: usize, data: Vec<f32>) -> Result<Self> {
        if data.len() != width * height * 3 {
            return Err(Error::shape(format!("{} values for a {width}×{height} RGB image", data.len())));
        }
        Ok(Self { width, height, data })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn pixel(&self, x: usize, y: usize) -> [f32; 3] {
        let i = (y * self.width + x) * 3;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    pub fn set_pixel(&mut self, x: usize, y: usize, rgb: [f32; 3]) {
        let i = (y * self.width + x) * 3;
        self.data[i..i + 3].copy_from_slice(&rgb);
    }

    /// Fills the pixels whose centers fall inside `[x1, x2) × [y1, y2)`.
    pub fn fill_rect(&mut self, x1: f64, y1: f64, x2: f64, y2: f64, rgb: [f32; 3]) {
        let (xs, xe) = pixel_span(x1, x2, self.width);
        let (ys, ye) = pixel_span(y1, y2, self.height);
        for y in ys..ye {
            for x in xs..xe {
                self.set_pixel(x, y, rgb);
            }
        }
    }

    pub fn outline_rect(&mut self, b: &BBox, rgb: [f32; 3], thickness: f64) {
        let (x1, y1, x2, y2) = b.corners();
        self.fill_rect(x1, y1, x2, y1 + thickness, rgb);
        self.fill_rect(x1, y2 - thickness, x2, y2, rgb);
        self.fill_rect(x1, y1, x1 + thickness, y2, rgb);
        self.fill_rect(x2 - thickness, y1, x2, y2, rgb);
    }

    /// `3×H×W` tensor.
    pub fn to_tensor(&self) -> Tensor {
        let plane = self.width * self.height;
        Tensor::from_fn(&[3, self.height, self.width], |i| self.data[(i % plane) * 3 + i / plane])
    }

    pub fn map(&self, f: impl Fn(f32) -> f32) -> Self {
        Self { width: self.width, height: self.height, data: self.data.iter().map(|&v| f(v)).collect() }
    }

    /// Every channel scaled by `factor`, clamped to `[0, 1]`.
    pub fn brightness(&self, factor: f32) -> Self {
        self.map(|v| (v * factor).clamp(0.0, 1.0))
    }

    /// Rec. 601 luma copied into all three channels.
    pub fn grayscale(&self) -> Self {
        let mut out = self.clone();
        for px in out.data.chunks_exact_mut(3) {
            let y = 0.299 * px[0] + 0.587 * px[1] + 0.114 * px[2];
            px.fill(y);
        }
        out
    }

    pub fn resize_nearest(&self, width: usize, height: usize) -> Self {
        let sx = width as f64 / self.width as f64;
        let sy = height as f64 / self.height as f64;
        let mut out = Self::filled(width, height, [0.0; 3]);
        for y in 0..height {
            let src_y = (((y as f64 + 0.5) / sy) as usize).min(self.height - 1);
            for x in 0..width {
                let src_x = (((x as f64 + 0.5) / sx) as usize).min(self.width - 1);
                out.set_pixel(x, y, self.pixel(src_x, src_y));
            }
        }
        out
    }

    /// Binary PPM (P6, maxval 255).
    pub fn to_ppm(&self) -> Result<Vec<u8>> {
        let bytes: Vec<u8> = self.data.iter().map(|&v| (v.clamp(0.0, 1.0) * 255.0).round() as u8).collect();
        let mut out = Vec::new();
        PnmEncoder::new(&mut out)
            .with_subtype(PnmSubtype::Pixmap(SampleEncoding::Binary))
            .write_image(&bytes, self.width as u32, self.height as u32, ExtendedColorType::Rgb8)
            .map_err(|e| Error::Parse(format!("PPM encoding: {e}")))?;
        Ok(out)
    }

    pub fn from_ppm(bytes: &[u8]) -> Result<Self> {
        let img = image::load(Cursor::new(bytes), ImageFormat::Pnm).map_err(|e| Error::Parse(format!("PPM: {e}")))?;
        let rgb = img.to_rgb8();
        let (w, h) = (rgb.width() as usize, rgb.height() as usize);
        Self::from_data(w, h, rgb.into_raw().into_iter().map(|b| b as f32 / 255.0).collect())
    }

    pub fn read_ppm(path: &Path) -> Result<Self> {
        Self::from_ppm(&std::fs::read(path)?).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))
    }

    pub fn write_ppm(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_ppm()?)?;
        Ok(())
    }

    /// Draws `text` with a 3×5 bitmap font scaled by `scale`; unknown glyphs are skipped.
    pub fn draw_label(&mut self, x: usize, y: usize, text: &str, rgb: [f32; 3], scale: usize) {
        let mut cx = x;
        for ch in text.chars() {
            if let Some(rows) = glyph(ch) {
                for (r, bits) in rows.iter().enumerate() {
                    for c in 0..3 {
                        if bits & (0b100 >> c) != 0 {
                            let (px, py) = ((cx + c * scale) as f64, (y + r * scale) as f64);
                            self.fill_rect(px, py, px + scale as f64, py + scale as f64, rgb);
                        }
                    }
                }
            }
            cx += 4 * scale;
        }
    }
}

fn pixel_span(a: f64, b: f64, limit: usize) -> (usize, usize) {
    let lo = (a - 0.5).ceil().max(0.0) as usize;
    let hi = ((b - 0.5).ceil().max(0.0) as usize).min(limit);
    (lo.min(limit), hi)
}

fn glyph(c: char) -> Option<[u8; 5]> {
    Some(match c {
        '0' => [0b111, 0b101, 0b101, 0b101, 0b111],
        '1' => [0b010, 0b110, 0b010, 0b010, 0b111],
        '2' => [0b111, 0b001, 0b111, 0b100, 0b111],
        '3' => [0b111, 0b001, 0b111, 0b001, 0b111],
        '4' => [0b101, 0b101, 0b111, 0b001, 0b001],
        '5' => [0b111, 0b100, 0b111, 0b001, 0b111],
        '6' => [0b111, 0b100, 0b111, 0b101, 0b111],
        '7' => [0b111, 0b001, 0b010, 0b010, 0b010],
        '8' => [0b111, 0b101, 0b111, 0b101, 0b111],
        '9' => [0b111, 0b101, 0b111, 0b001, 0b111],
        'D' => [0b110, 0b101, 0b101, 0b101, 0b110],
        '.' => [0b000, 0b000, 0b000, 0b000, 0b010],
        _ => return None,
    })
}

/// Aspect-preserving resize into a `target×target` square with centered padding.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Letterbox {
    pub scale: f64,
    pub pad_x: f64,
    pub pad_y: f64,
    pub target: usize,
}

impl Letterbox {
    pub fn for_size(width: usize, height: usize, target: usize) -> Result<Self> {
        if width == 0 || height == 0 || target == 0 {
            return Err(Error::invalid(format!("letterbox needs positive sizes, got {width}×{height} → {target}")));
        }
        let scale = target as f64 / width.max(height) as f64;
        let (nw, nh) = Self::scaled(width, height, scale, target);
        Ok(Self { scale, pad_x: ((target - nw) / 2) as f64, pad_y: ((target - nh) / 2) as f64, target })
    }

    fn scaled(width: usize, height: usize, scale: f64, target: usize) -> (usize, usize) {
        let r = |v: usize| ((v as f64 * scale).round() as usize).clamp(1, target);
        (r(width), r(height))
    }

    pub fn apply(&self, b: &BoxAnnotation) -> BoxAnnotation {
        let t = self.target as f64;
        let mut out = b.transform(self.scale, self.scale, self.pad_x, self.pad_y);
        out.x1 = out.x1.clamp(0.0, t);
        out.y1 = out.y1.clamp(0.0, t);
        out.x2 = out.x2.clamp(0.0, t);
        out.y2 = out.y2.clamp(0.0, t);
        out
    }

    /// Maps a box in letterboxed coordinates back to the source image.
    pub fn invert(&self, b: &BBox) -> BBox {
        BBox {
            cx: (b.cx - self.pad_x) / self.scale,
            cy: (b.cy - self.pad_y) / self.scale,
            w: b.w / self.scale,
            h: b.h / self.scale,
        }
    }
}

pub fn letterbox(
    image: &Image,
    boxes: &[BoxAnnotation],
    target: usize,
) -> Result<(Image, Vec<BoxAnnotation>, Letterbox)> {
    let lb = Letterbox::for_size(image.width, image.height, target)?;
    let (nw, nh) = Letterbox::scaled(image.width, image.height, lb.scale, target);
    let resized = image.resize_nearest(nw, nh);
    let mut out = Image::filled(target, target, [LETTERBOX_FILL; 3]);
    let (px, py) = (lb.pad_x as usize, lb.pad_y as usize);
    for y in 0..nh {
        let src = &resized.data[y * nw * 3..][..nw * 3];
        out.data[((y + py) * target + px) * 3..][..nw * 3].copy_from_slice(src);
    }
    Ok((out, boxes.iter().map(|b| lb.apply(b)).collect(), lb))
}
