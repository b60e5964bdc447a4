//! Chart layout: the one place that turns a [`ChartSpec`] into pixel
//! geometry. Both the rasterizer and the annotator read from here, so
//! drawn pixels and ground-truth coordinates cannot drift apart.

use serde::{Deserialize, Serialize};

use super::font::{text_width, ADVANCE, GLYPH_H};
use super::{format_value, ChartGenError, ChartSpec, ChartType};

/// Axis-aligned box in pixel coordinates, `(x0,y0)` top-left inclusive.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BBox {
    pub x0: f64,
    pub y0: f64,
    pub x1: f64,
    pub y1: f64,
}

impl BBox {
    pub fn new(x0: f64, y0: f64, x1: f64, y1: f64) -> Self {
        BBox { x0, y0, x1, y1 }
    }

    pub fn center(&self) -> (f64, f64) {
        ((self.x0 + self.x1) / 2.0, (self.y0 + self.y1) / 2.0)
    }

    pub fn width(&self) -> f64 {
        self.x1 - self.x0
    }

    pub fn height(&self) -> f64 {
        self.y1 - self.y0
    }

    pub fn corners(&self) -> [(f64, f64); 2] {
        [(self.x0, self.y0), (self.x1, self.y1)]
    }
}

#[derive(Debug, Clone)]
pub struct BarGeom {
    pub series: usize,
    pub category: usize,
    pub value: f64,
    pub bbox: BBox,
}

#[derive(Debug, Clone)]
pub struct PointGeom {
    pub series: usize,
    pub category: usize,
    pub value: f64,
    pub x: f64,
    pub y: f64,
}

impl PointGeom {
    /// Fixed 6x6 annotation box around the vertex.
    pub fn bbox(&self) -> BBox {
        BBox::new(self.x - 3.0, self.y - 3.0, self.x + 3.0, self.y + 3.0)
    }
}

#[derive(Debug, Clone)]
pub struct SectorGeom {
    pub category: usize,
    /// Clockwise angle from 12 o'clock, radians.
    pub start: f64,
    pub sweep: f64,
    pub fraction: f64,
    pub bbox: BBox,
}

#[derive(Debug, Clone)]
pub struct TickGeom {
    pub value: f64,
    pub text: String,
    /// Pixel y of this value on the axis line.
    pub y: f64,
    /// Small box centered on the axis line.
    pub bbox: BBox,
}

#[derive(Debug, Clone)]
pub struct LegendGeom {
    pub label: String,
    pub color: usize,
    pub swatch: BBox,
    pub bbox: BBox,
}

#[derive(Debug, Clone)]
pub struct TextGeom {
    pub text: String,
    pub bbox: BBox,
    pub vertical: bool,
}

/// Complete pixel geometry of one chart.
#[derive(Debug, Clone)]
pub struct Layout {
    pub width: f64,
    pub height: f64,
    pub plot: BBox,
    pub bars: Vec<BarGeom>,
    pub points: Vec<PointGeom>,
    pub sectors: Vec<SectorGeom>,
    /// Pie disc (cx, cy, r) when chart_type is pie.
    pub pie_disc: Option<(f64, f64, f64)>,
    pub ticks: Vec<TickGeom>,
    pub legend: Vec<LegendGeom>,
    pub x_title: Option<TextGeom>,
    pub y_title: Option<TextGeom>,
    pub title: TextGeom,
    /// Category labels under the x axis: (text, left x, top y). Drawn but
    /// not annotated as components.
    pub category_labels: Vec<(String, f64, f64)>,
    /// Palette index per series (bar/line) or per category (pie).
    pub colors: Vec<usize>,
    pub grid: bool,
}

/// Unit direction for a clockwise-from-12-o'clock angle in screen coords.
pub fn angle_dir(theta: f64) -> (f64, f64) {
    (theta.sin(), -theta.cos())
}

/// Start angle convention for the first pie sector (12 o'clock).
pub const PIE_START_ANGLE: f64 = 0.0;

fn sector_bbox(cx: f64, cy: f64, r: f64, start: f64, sweep: f64) -> BBox {
    let mut xs = vec![cx];
    let mut ys = vec![cy];
    for theta in [start, start + sweep] {
        let (dx, dy) = angle_dir(theta);
        xs.push(cx + r * dx);
        ys.push(cy + r * dy);
    }
    // Compass extremes the arc passes through.
    let two_pi = std::f64::consts::TAU;
    for k in 0..=8 {
        let phi = k as f64 * two_pi / 4.0;
        if phi >= start - 1e-12 && phi <= start + sweep + 1e-12 {
            let (dx, dy) = angle_dir(phi);
            xs.push(cx + r * dx);
            ys.push(cy + r * dy);
        }
    }
    let x0 = xs.iter().cloned().fold(f64::MAX, f64::min);
    let x1 = xs.iter().cloned().fold(f64::MIN, f64::max);
    let y0 = ys.iter().cloned().fold(f64::MAX, f64::min);
    let y1 = ys.iter().cloned().fold(f64::MIN, f64::max);
    BBox::new(x0, y0, x1, y1)
}

/// Forward model for pie decode: bbox of a sector with the given geometry.
pub fn pie_sector_bbox(cx: f64, cy: f64, r: f64, start: f64, sweep: f64) -> BBox {
    sector_bbox(cx, cy, r, start, sweep)
}

pub fn compute_layout(spec: &ChartSpec, width: u32, height: u32) -> Result<Layout, ChartGenError> {
    if width < 64 || height < 64 {
        return Err(ChartGenError::CanvasTooSmall {
            width,
            height,
            min: 64,
        });
    }
    let w = width as f64;
    let h = height as f64;
    let style = spec.style_seed;
    let grid = style & 1 == 1;
    let color_start = (style >> 1) as usize % 8;
    let colors: Vec<usize> = match spec.chart_type {
        ChartType::Pie => (0..spec.category_labels.len())
            .map(|i| (color_start + i) % 8)
            .collect(),
        _ => (0..spec.series.len()).map(|i| (color_start + i) % 8).collect(),
    };

    // Title band across the top.
    let title_w = text_width(&spec.title) as f64;
    let title = TextGeom {
        text: spec.title.clone(),
        bbox: BBox::new(
            (w / 2.0 - title_w / 2.0).max(1.0),
            2.0,
            (w / 2.0 - title_w / 2.0).max(1.0) + title_w,
            2.0 + GLYPH_H as f64,
        ),
        vertical: false,
    };

    match spec.chart_type {
        ChartType::Pie => compute_pie_layout(spec, w, h, title, colors, grid, style),
        _ => compute_xy_layout(spec, w, h, title, colors, grid, style),
    }
}

fn compute_xy_layout(
    spec: &ChartSpec,
    w: f64,
    h: f64,
    title: TextGeom,
    colors: Vec<usize>,
    grid: bool,
    style: u64,
) -> Result<Layout, ChartGenError> {
    let axis = spec.axis.as_ref().expect("xy chart must carry an axis");
    let n_cat = spec.category_labels.len();
    let n_series = spec.series.len();

    // Tick texts first; the left margin depends on their width.
    let tick_values: Vec<f64> = (0..axis.tick_count)
        .map(|i| axis.y_min + (axis.y_max - axis.y_min) * i as f64 / (axis.tick_count - 1) as f64)
        .collect();
    let tick_texts: Vec<String> = tick_values.iter().map(|v| format_value(*v, 1)).collect();
    let max_tick_w = tick_texts.iter().map(|t| text_width(t)).max().unwrap_or(0) as f64;

    let plot_left = 9.0 + max_tick_w + 5.0;
    let plot_right = w - 5.0;
    let plot_top = 13.0;
    let plot_bottom = h - 21.0;
    if plot_right - plot_left < 24.0 || plot_bottom - plot_top < 24.0 {
        return Err(ChartGenError::CanvasTooSmall {
            width: w as u32,
            height: h as u32,
            min: 64,
        });
    }
    let plot = BBox::new(plot_left, plot_top, plot_right, plot_bottom);

    let value_to_y = |v: f64| -> f64 {
        plot_bottom - (v - axis.y_min) / (axis.y_max - axis.y_min) * (plot_bottom - plot_top)
    };

    let ticks: Vec<TickGeom> = tick_values
        .iter()
        .zip(tick_texts.iter())
        .map(|(v, t)| {
            let y = value_to_y(*v);
            TickGeom {
                value: *v,
                text: t.clone(),
                y,
                bbox: BBox::new(plot_left - 3.0, y - 3.0, plot_left + 3.0, y + 3.0),
            }
        })
        .collect();

    let slot = (plot_right - plot_left) / n_cat as f64;
    let mut bars = Vec::new();
    let mut points = Vec::new();
    match spec.chart_type {
        ChartType::Bar => {
            let band = slot * 0.75;
            let bar_w = band / n_series as f64;
            for c in 0..n_cat {
                for s in 0..n_series {
                    let v = spec.series[s].values[c];
                    let x0 = plot_left + c as f64 * slot + (slot - band) / 2.0 + s as f64 * bar_w;
                    bars.push(BarGeom {
                        series: s,
                        category: c,
                        value: v,
                        bbox: BBox::new(x0, value_to_y(v), x0 + bar_w, plot_bottom),
                    });
                }
            }
        }
        ChartType::Line => {
            for s in 0..n_series {
                for c in 0..n_cat {
                    let v = spec.series[s].values[c];
                    points.push(PointGeom {
                        series: s,
                        category: c,
                        value: v,
                        x: plot_left + (c as f64 + 0.5) * slot,
                        y: value_to_y(v),
                    });
                }
            }
        }
        ChartType::Pie => unreachable!(),
    }

    // Legend in the top-right corner of the plot area, one row per series.
    let max_label_w = spec
        .series
        .iter()
        .map(|s| text_width(&s.label))
        .max()
        .unwrap_or(0) as f64;
    let swatch_w = 5.0;
    let legend: Vec<LegendGeom> = spec
        .series
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let y = plot_top + 3.0 + i as f64 * 9.0;
            let x_sw = plot_right - 3.0 - (swatch_w + 2.0 + max_label_w);
            LegendGeom {
                label: s.label.clone(),
                color: colors[i],
                swatch: BBox::new(x_sw, y, x_sw + swatch_w, y + 5.0),
                bbox: BBox::new(
                    x_sw - 1.0,
                    y - 1.0,
                    x_sw + swatch_w + 2.0 + text_width(&s.label) as f64 + 1.0,
                    y + 6.0,
                ),
            }
        })
        .collect();

    let x_title_text = super::X_AXIS_TITLES[(style >> 4) as usize % 4].to_string();
    let y_title_text = super::Y_AXIS_TITLES[(style >> 6) as usize % 4].to_string();
    let xt_w = text_width(&x_title_text) as f64;
    let plot_cx = (plot_left + plot_right) / 2.0;
    let x_title = TextGeom {
        text: x_title_text,
        bbox: BBox::new(
            plot_cx - xt_w / 2.0,
            h - 10.0,
            plot_cx + xt_w / 2.0,
            h - 10.0 + GLYPH_H as f64,
        ),
        vertical: false,
    };
    let yt_len = y_title_text.chars().count() as f64;
    let yt_h = yt_len * (GLYPH_H as f64 + 1.0) - 1.0;
    let plot_cy = (plot_top + plot_bottom) / 2.0;
    let y_title = TextGeom {
        text: y_title_text,
        bbox: BBox::new(1.0, plot_cy - yt_h / 2.0, 6.0, plot_cy - yt_h / 2.0 + yt_h),
        vertical: true,
    };

    let category_labels: Vec<(String, f64, f64)> = spec
        .category_labels
        .iter()
        .enumerate()
        .map(|(c, label)| {
            let cx = plot_left + (c as f64 + 0.5) * slot;
            (
                label.clone(),
                cx - text_width(label) as f64 / 2.0,
                plot_bottom + 3.0,
            )
        })
        .collect();

    Ok(Layout {
        width: w,
        height: h,
        plot,
        bars,
        points,
        sectors: Vec::new(),
        pie_disc: None,
        ticks,
        legend,
        x_title: Some(x_title),
        y_title: Some(y_title),
        title,
        category_labels,
        colors,
        grid,
    })
}

fn compute_pie_layout(
    spec: &ChartSpec,
    w: f64,
    h: f64,
    title: TextGeom,
    colors: Vec<usize>,
    grid: bool,
    _style: u64,
) -> Result<Layout, ChartGenError> {
    let plot = BBox::new(4.0, 13.0, w - 4.0, h - 6.0);
    let max_label_w = spec
        .category_labels
        .iter()
        .map(|l| text_width(l))
        .max()
        .unwrap_or(0) as f64;
    let legend_w = 5.0 + 2.0 + max_label_w + 6.0;
    let avail_w = plot.width() - legend_w;
    let avail_h = plot.height();
    let r = (avail_w.min(avail_h) / 2.0 - 3.0).floor();
    if r < 12.0 {
        return Err(ChartGenError::CanvasTooSmall {
            width: w as u32,
            height: h as u32,
            min: 64,
        });
    }
    let cx = plot.x0 + avail_w / 2.0;
    let cy = (plot.y0 + plot.y1) / 2.0;

    let total: f64 = spec.series[0].values.iter().sum();
    let two_pi = std::f64::consts::TAU;
    let mut start = PIE_START_ANGLE;
    let mut sectors = Vec::new();
    for (c, v) in spec.series[0].values.iter().enumerate() {
        let fraction = v / total;
        let sweep = fraction * two_pi;
        sectors.push(SectorGeom {
            category: c,
            start,
            sweep,
            fraction,
            bbox: sector_bbox(cx, cy, r, start, sweep),
        });
        start += sweep;
    }

    let legend: Vec<LegendGeom> = spec
        .category_labels
        .iter()
        .enumerate()
        .map(|(i, label)| {
            let y = plot.y0 + 3.0 + i as f64 * 9.0;
            let x_sw = plot.x1 - 2.0 - (5.0 + 2.0 + max_label_w);
            LegendGeom {
                label: label.clone(),
                color: colors[i],
                swatch: BBox::new(x_sw, y, x_sw + 5.0, y + 5.0),
                bbox: BBox::new(
                    x_sw - 1.0,
                    y - 1.0,
                    x_sw + 5.0 + 2.0 + text_width(label) as f64 + 1.0,
                    y + 6.0,
                ),
            }
        })
        .collect();

    Ok(Layout {
        width: w,
        height: h,
        plot,
        bars: Vec::new(),
        points: Vec::new(),
        sectors,
        pie_disc: Some((cx, cy, r)),
        ticks: Vec::new(),
        legend,
        x_title: None,
        y_title: None,
        title,
        category_labels: Vec::new(),
        colors,
        grid,
    })
}

/// Ensure the advance constant stays consistent with the font module.
pub const _GLYPH_ADVANCE: usize = ADVANCE;

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chartgen::{sample_chart_spec, GenConfig};

    #[test]
    fn bar_heights_scale_with_values() {
        // bar values [3,1]: pixel heights in ratio 3:1 within 1 px.
        let spec = ChartSpec {
            chart_type: ChartType::Bar,
            series: vec![super::super::Series {
                label: "s1".into(),
                values: vec![3.0, 1.0],
            }],
            category_labels: vec!["A".into(), "B".into()],
            axis: Some(super::super::AxisSpec {
                y_min: 0.0,
                y_max: 3.0,
                tick_count: 4,
            }),
            title: "Sales Report".into(),
            style_seed: 0,
        };
        let l = compute_layout(&spec, 128, 128).unwrap();
        let h0 = l.bars[0].bbox.height();
        let h1 = l.bars[1].bbox.height();
        assert!((h0 - 3.0 * h1).abs() <= 1.0, "h0={h0} h1={h1}");
    }

    #[test]
    fn pie_sweeps_proportional() {
        let spec = ChartSpec {
            chart_type: ChartType::Pie,
            series: vec![super::super::Series {
                label: "s1".into(),
                values: vec![1.0, 1.0, 2.0],
            }],
            category_labels: vec!["A".into(), "B".into(), "C".into()],
            axis: None,
            title: "Usage Report".into(),
            style_seed: 1,
        };
        let l = compute_layout(&spec, 128, 128).unwrap();
        let deg: Vec<f64> = l.sectors.iter().map(|s| s.sweep.to_degrees()).collect();
        assert!((deg[0] - 90.0).abs() < 1e-9);
        assert!((deg[1] - 90.0).abs() < 1e-9);
        assert!((deg[2] - 180.0).abs() < 1e-9);
    }

    #[test]
    fn too_small_canvas_rejected() {
        let spec = sample_chart_spec(3, &GenConfig::default()).unwrap();
        assert!(matches!(
            compute_layout(&spec, 32, 128),
            Err(ChartGenError::CanvasTooSmall { .. })
        ));
    }

    #[test]
    fn ticks_cover_axis_range() {
        let cfg = GenConfig {
            chart_types: vec![ChartType::Bar],
            ..GenConfig::default()
        };
        for seed in 0..10 {
            let spec = sample_chart_spec(seed, &cfg).unwrap();
            let l = compute_layout(&spec, 128, 128).unwrap();
            let axis = spec.axis.unwrap();
            assert_eq!(l.ticks.len(), axis.tick_count);
            assert!((l.ticks[0].value - axis.y_min).abs() < 1e-9);
            assert!((l.ticks.last().unwrap().value - axis.y_max).abs() < 1e-9);
            // Tick y decreases (moves up) as value increases.
            for pair in l.ticks.windows(2) {
                assert!(pair[1].y < pair[0].y);
            }
        }
    }
}
