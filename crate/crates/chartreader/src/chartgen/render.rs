//! Rasterization of chart specs to RGB images.

use serde::{Deserialize, Serialize};

use super::font::{glyph, ADVANCE, GLYPH_H, GLYPH_W};
use super::layout::{compute_layout, BBox, Layout};
use super::{ChartGenError, ChartSpec, ChartType};

/// 8-bit RGB raster, no alpha.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RasterImage {
    pub width: u32,
    pub height: u32,
    /// Row-major RGB triples.
    pub data: Vec<u8>,
}

pub type Rgb = (u8, u8, u8);

pub const PALETTE: [Rgb; 8] = [
    (31, 119, 180),
    (255, 127, 14),
    (44, 160, 44),
    (214, 39, 40),
    (148, 103, 189),
    (140, 86, 75),
    (227, 119, 194),
    (127, 127, 127),
];

const BG: Rgb = (255, 255, 255);
const INK: Rgb = (20, 20, 20);
const GRID: Rgb = (210, 210, 210);

impl RasterImage {
    pub fn new(width: u32, height: u32, fill: Rgb) -> Self {
        let mut data = vec![0u8; (width * height * 3) as usize];
        for px in data.chunks_exact_mut(3) {
            px[0] = fill.0;
            px[1] = fill.1;
            px[2] = fill.2;
        }
        RasterImage {
            width,
            height,
            data,
        }
    }

    #[inline]
    pub fn put(&mut self, x: i64, y: i64, c: Rgb) {
        if x < 0 || y < 0 || x >= self.width as i64 || y >= self.height as i64 {
            return;
        }
        let i = ((y as u32 * self.width + x as u32) * 3) as usize;
        self.data[i] = c.0;
        self.data[i + 1] = c.1;
        self.data[i + 2] = c.2;
    }

    #[inline]
    pub fn get(&self, x: u32, y: u32) -> Rgb {
        let i = ((y * self.width + x) * 3) as usize;
        (self.data[i], self.data[i + 1], self.data[i + 2])
    }

    pub fn fill_rect(&mut self, b: &BBox, c: Rgb) {
        let x0 = b.x0.round() as i64;
        let y0 = b.y0.round() as i64;
        let x1 = b.x1.round() as i64;
        let y1 = b.y1.round() as i64;
        for y in y0..y1.max(y0 + 1) {
            for x in x0..x1.max(x0 + 1) {
                self.put(x, y, c);
            }
        }
    }

    pub fn hline(&mut self, x0: f64, x1: f64, y: f64, c: Rgb) {
        let y = y.round() as i64;
        for x in x0.round() as i64..=x1.round() as i64 {
            self.put(x, y, c);
        }
    }

    pub fn vline(&mut self, x: f64, y0: f64, y1: f64, c: Rgb) {
        let x = x.round() as i64;
        for y in y0.round() as i64..=y1.round() as i64 {
            self.put(x, y, c);
        }
    }

    /// Bresenham segment.
    pub fn line(&mut self, x0: f64, y0: f64, x1: f64, y1: f64, c: Rgb) {
        let (mut x0, mut y0) = (x0.round() as i64, y0.round() as i64);
        let (x1, y1) = (x1.round() as i64, y1.round() as i64);
        let dx = (x1 - x0).abs();
        let dy = -(y1 - y0).abs();
        let sx = if x0 < x1 { 1 } else { -1 };
        let sy = if y0 < y1 { 1 } else { -1 };
        let mut err = dx + dy;
        loop {
            self.put(x0, y0, c);
            if x0 == x1 && y0 == y1 {
                break;
            }
            let e2 = 2 * err;
            if e2 >= dy {
                err += dy;
                x0 += sx;
            }
            if e2 <= dx {
                err += dx;
                y0 += sy;
            }
        }
    }

    pub fn draw_text(&mut self, text: &str, x: f64, y: f64, c: Rgb) {
        let mut cx = x.round() as i64;
        let cy = y.round() as i64;
        for ch in text.chars() {
            let g = glyph(ch);
            for (col, bits) in g.iter().enumerate() {
                for row in 0..GLYPH_H {
                    if bits >> row & 1 == 1 {
                        self.put(cx + col as i64, cy + row as i64, c);
                    }
                }
            }
            cx += ADVANCE as i64;
        }
    }

    /// Characters stacked top-to-bottom (used for the y-axis title).
    pub fn draw_text_vertical(&mut self, text: &str, x: f64, y: f64, c: Rgb) {
        let cx = x.round() as i64;
        let mut cy = y.round() as i64;
        for ch in text.chars() {
            let g = glyph(ch);
            for (col, bits) in g.iter().enumerate() {
                for row in 0..GLYPH_H {
                    if bits >> row & 1 == 1 {
                        self.put(cx + col as i64, cy + row as i64, c);
                    }
                }
            }
            cy += GLYPH_H as i64 + 1;
        }
    }

    pub fn to_png_bytes(&self) -> Vec<u8> {
        use image::codecs::png::PngEncoder;
        use image::ImageEncoder;
        let mut out = Vec::new();
        PngEncoder::new(&mut out)
            .write_image(
                &self.data,
                self.width,
                self.height,
                image::ExtendedColorType::Rgb8,
            )
            .expect("png encode to memory cannot fail");
        out
    }

    pub fn from_png_bytes(bytes: &[u8]) -> Result<Self, String> {
        let img = image::load_from_memory_with_format(bytes, image::ImageFormat::Png)
            .map_err(|e| format!("png decode: {e}"))?
            .to_rgb8();
        Ok(RasterImage {
            width: img.width(),
            height: img.height(),
            data: img.into_raw(),
        })
    }

    /// Normalized float planes in [0,1], shape `[3,H,W]` row-major.
    pub fn to_chw_f32(&self) -> Vec<f32> {
        let n = (self.width * self.height) as usize;
        let mut out = vec![0f32; 3 * n];
        for i in 0..n {
            out[i] = self.data[3 * i] as f32 / 255.0;
            out[n + i] = self.data[3 * i + 1] as f32 / 255.0;
            out[2 * n + i] = self.data[3 * i + 2] as f32 / 255.0;
        }
        out
    }
}

fn angle_of(dx: f64, dy: f64) -> f64 {
    // Clockwise angle from 12 o'clock for a screen-space offset.
    let a = dx.atan2(-dy);
    if a < 0.0 {
        a + std::f64::consts::TAU
    } else {
        a
    }
}

/// Rasterize a chart. Deterministic in `(spec, width, height)`.
pub fn render(spec: &ChartSpec, width: u32, height: u32) -> Result<RasterImage, ChartGenError> {
    let layout = compute_layout(spec, width, height)?;
    Ok(render_layout(spec, &layout))
}

fn render_layout(spec: &ChartSpec, l: &Layout) -> RasterImage {
    let mut img = RasterImage::new(l.width as u32, l.height as u32, BG);

    img.draw_text(&l.title.text, l.title.bbox.x0, l.title.bbox.y0, INK);

    if spec.chart_type != ChartType::Pie {
        // Grid behind everything else.
        if l.grid {
            for t in &l.ticks {
                img.hline(l.plot.x0 + 1.0, l.plot.x1, t.y, GRID);
            }
        }
        // Axes.
        img.vline(l.plot.x0, l.plot.y0, l.plot.y1, INK);
        img.hline(l.plot.x0, l.plot.x1, l.plot.y1, INK);
        // Ticks and labels.
        for t in &l.ticks {
            img.hline(l.plot.x0 - 2.0, l.plot.x0, t.y, INK);
            let tw = super::font::text_width(&t.text) as f64;
            img.draw_text(&t.text, l.plot.x0 - 4.0 - tw, t.y - 3.0, INK);
        }
        for (text, x, y) in &l.category_labels {
            img.draw_text(text, *x, *y, INK);
        }
        if let Some(xt) = &l.x_title {
            img.draw_text(&xt.text, xt.bbox.x0, xt.bbox.y0, INK);
        }
        if let Some(yt) = &l.y_title {
            img.draw_text_vertical(&yt.text, yt.bbox.x0, yt.bbox.y0, INK);
        }
    }

    for b in &l.bars {
        img.fill_rect(&b.bbox, PALETTE[l.colors[b.series]]);
    }

    if !l.points.is_empty() {
        for s in 0..spec.series.len() {
            let pts: Vec<&super::layout::PointGeom> =
                l.points.iter().filter(|p| p.series == s).collect();
            let color = PALETTE[l.colors[s]];
            for pair in pts.windows(2) {
                img.line(pair[0].x, pair[0].y, pair[1].x, pair[1].y, color);
            }
            for p in pts {
                // 3x3 marker at the vertex.
                for dy in -1..=1 {
                    for dx in -1..=1 {
                        img.put(
                            p.x.round() as i64 + dx,
                            p.y.round() as i64 + dy,
                            color,
                        );
                    }
                }
            }
        }
    }

    if let Some((cx, cy, r)) = l.pie_disc {
        let x0 = (cx - r).floor() as i64;
        let x1 = (cx + r).ceil() as i64;
        let y0 = (cy - r).floor() as i64;
        let y1 = (cy + r).ceil() as i64;
        for y in y0..=y1 {
            for x in x0..=x1 {
                let dx = x as f64 + 0.5 - cx;
                let dy = y as f64 + 0.5 - cy;
                if dx * dx + dy * dy > r * r {
                    continue;
                }
                let theta = angle_of(dx, dy);
                for s in &l.sectors {
                    if theta >= s.start && theta < s.start + s.sweep {
                        img.put(x, y, PALETTE[l.colors[s.category]]);
                        break;
                    }
                }
            }
        }
    }

    for le in &l.legend {
        img.fill_rect(&le.swatch, PALETTE[le.color]);
        img.draw_text(&le.label, le.swatch.x1 + 2.0, le.swatch.y0, INK);
    }

    img
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chartgen::{sample_chart_spec, GenConfig};

    #[test]
    fn render_is_deterministic() {
        let spec = sample_chart_spec(7, &GenConfig::default()).unwrap();
        let a = render(&spec, 128, 128).unwrap();
        let b = render(&spec, 128, 128).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn bar_pixels_present() {
        let cfg = GenConfig::bars_only();
        let spec = sample_chart_spec(1, &cfg).unwrap();
        let img = render(&spec, 128, 128).unwrap();
        // At least one non-background pixel inside the plot area.
        let mut colored = 0;
        for y in 0..128 {
            for x in 0..128 {
                if img.get(x, y) != (255, 255, 255) {
                    colored += 1;
                }
            }
        }
        assert!(colored > 200, "only {colored} ink pixels");
    }

    #[test]
    fn png_roundtrip_is_exact() {
        let spec = sample_chart_spec(9, &GenConfig::default()).unwrap();
        let img = render(&spec, 128, 128).unwrap();
        let png = img.to_png_bytes();
        let back = RasterImage::from_png_bytes(&png).unwrap();
        assert_eq!(img, back);
    }

    #[test]
    fn rejects_small_canvas() {
        let spec = sample_chart_spec(3, &GenConfig::default()).unwrap();
        assert!(render(&spec, 40, 40).is_err());
    }
}
