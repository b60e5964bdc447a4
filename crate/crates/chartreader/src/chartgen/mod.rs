//! Deterministic synthetic chart corpus generation.
//!
//! Every artifact (pixels, annotations, tables, QA pairs, summaries) is a
//! pure function of `(seed, GenConfig)`. Ground-truth text comes straight
//! from the spec — there is no OCR anywhere in the pipeline.

pub mod annotate;
pub mod corpus;
pub mod font;
pub mod layout;
pub mod qa;
pub mod render;
pub mod table;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use annotate::{annotate, ComponentAnnotation, ComponentType};
pub use corpus::{write_corpus, CorpusItem, CorpusManifest, SplitFractions};
pub use qa::{make_qa, make_summary, AnswerKind, QAPair, SlotFill, SummaryTemplate};
pub use render::{render, RasterImage};
pub use table::{make_table, Table, TableRow};

/// Ordered category-label pool; charts use a prefix of it, so a label's
/// column index is stable across the whole corpus.
pub const CATEGORY_POOL: [&str; 8] = ["A", "B", "C", "D", "E", "F", "G", "H"];
/// Ordered series-label pool (row index stable, same scheme).
pub const SERIES_POOL: [&str; 4] = ["s1", "s2", "s3", "s4"];

pub const TITLE_WORDS: [&str; 8] = [
    "Sales", "Usage", "Growth", "Output", "Demand", "Traffic", "Revenue", "Survey",
];
pub const TITLE_SUFFIX: [&str; 4] = ["Report", "Overview", "Summary", "Trends"];
pub const X_AXIS_TITLES: [&str; 4] = ["Category", "Group", "Item", "Label"];
pub const Y_AXIS_TITLES: [&str; 4] = ["Value", "Count", "Amount", "Score"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChartType {
    Bar,
    Line,
    Pie,
}

/// One data series: legend label plus one value per category.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Series {
    pub label: String,
    pub values: Vec<f64>,
}

/// Value-axis description for bar/line charts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AxisSpec {
    pub y_min: f64,
    pub y_max: f64,
    pub tick_count: usize,
}

/// The generative ground truth of one synthetic chart.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChartSpec {
    pub chart_type: ChartType,
    pub series: Vec<Series>,
    pub category_labels: Vec<String>,
    pub axis: Option<AxisSpec>,
    pub title: String,
    pub style_seed: u64,
}

#[derive(Debug, thiserror::Error)]
pub enum ChartGenError {
    #[error("invalid generator config: {0}")]
    InvalidConfig(String),
    #[error("canvas {width}x{height} too small for layout (need at least {min}x{min})")]
    CanvasTooSmall { width: u32, height: u32, min: u32 },
    #[error("invalid split: {0}")]
    InvalidSplit(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("serialization failed: {0}")]
    Ser(#[from] serde_json::Error),
}

/// Ranges for chart sampling. All sampling is uniform within range.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GenConfig {
    pub series_min: usize,
    pub series_max: usize,
    pub categories_min: usize,
    pub categories_max: usize,
    pub value_min: f64,
    pub value_max: f64,
    pub decimals: u32,
    pub chart_types: Vec<ChartType>,
    pub width: u32,
    pub height: u32,
    pub qa_per_item: usize,
}

impl Default for GenConfig {
    fn default() -> Self {
        GenConfig {
            series_min: 1,
            series_max: 2,
            categories_min: 2,
            categories_max: 5,
            value_min: 5.0,
            value_max: 100.0,
            decimals: 1,
            chart_types: vec![ChartType::Bar, ChartType::Line, ChartType::Pie],
            width: 128,
            height: 128,
            qa_per_item: 4,
        }
    }
}

impl GenConfig {
    /// Bar-only corpus used by the detector training recipes.
    pub fn bars_only() -> Self {
        GenConfig {
            chart_types: vec![ChartType::Bar],
            ..GenConfig::default()
        }
    }

    pub fn validate(&self) -> Result<(), ChartGenError> {
        if self.series_min < 1 || self.series_max < self.series_min {
            return Err(ChartGenError::InvalidConfig(format!(
                "series range {}..={} is empty",
                self.series_min, self.series_max
            )));
        }
        if self.series_max > SERIES_POOL.len() {
            return Err(ChartGenError::InvalidConfig(format!(
                "series_max {} exceeds label pool of {}",
                self.series_max,
                SERIES_POOL.len()
            )));
        }
        if self.categories_min < 2 || self.categories_max < self.categories_min {
            return Err(ChartGenError::InvalidConfig(format!(
                "category range {}..={} is empty",
                self.categories_min, self.categories_max
            )));
        }
        if self.categories_max > CATEGORY_POOL.len() {
            return Err(ChartGenError::InvalidConfig(format!(
                "categories_max {} exceeds label pool of {}",
                self.categories_max,
                CATEGORY_POOL.len()
            )));
        }
        if !(self.value_min > 0.0 && self.value_max > self.value_min) {
            return Err(ChartGenError::InvalidConfig(format!(
                "value range {}..{} must be a positive span",
                self.value_min, self.value_max
            )));
        }
        if self.chart_types.is_empty() {
            return Err(ChartGenError::InvalidConfig("no chart types".into()));
        }
        if self.width < 64 || self.height < 64 {
            return Err(ChartGenError::InvalidConfig(
                "width/height must be at least 64".into(),
            ));
        }
        Ok(())
    }
}

/// Round `v` to `decimals` fractional digits.
pub fn round_to(v: f64, decimals: u32) -> f64 {
    let m = 10f64.powi(decimals as i32);
    (v * m).round() / m
}

/// Format a value the way answers and tick labels are written: fixed
/// decimals, then trailing zeros (and a bare dot) trimmed.
pub fn format_value(v: f64, decimals: u32) -> String {
    let s = format!("{:.*}", decimals as usize, v);
    if s.contains('.') {
        let t = s.trim_end_matches('0').trim_end_matches('.');
        // Normalize "-0" to "0".
        if t == "-0" {
            "0".to_string()
        } else {
            t.to_string()
        }
    } else {
        s
    }
}

/// Smallest "nice" number >= raw (1/1.2/1.5/2/2.5/3/4/5/6/8/10 x 10^k).
fn nice_ceil(raw: f64) -> f64 {
    assert!(raw > 0.0);
    let mag = 10f64.powf(raw.log10().floor());
    for mult in [1.0, 1.2, 1.5, 2.0, 2.5, 3.0, 4.0, 5.0, 6.0, 8.0, 10.0] {
        let cand = mult * mag;
        if cand >= raw - 1e-9 {
            return cand;
        }
    }
    10.0 * mag
}

/// Derive a per-item seed from a base seed (splitmix64 finalizer).
pub fn derive_seed(base: u64, index: u64) -> u64 {
    let mut z = base.wrapping_add(0x9E3779B97F4A7C15u64.wrapping_mul(index.wrapping_add(1)));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D049BB133111EB);
    z ^ (z >> 31)
}

/// Sample a chart specification. Fully deterministic in `(seed, config)`.
pub fn sample_chart_spec(seed: u64, config: &GenConfig) -> Result<ChartSpec, ChartGenError> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let chart_type = config.chart_types[rng.gen_range(0..config.chart_types.len())];
    let n_cat = rng.gen_range(config.categories_min..=config.categories_max);
    let n_series = match chart_type {
        ChartType::Pie => 1,
        _ => rng.gen_range(config.series_min..=config.series_max),
    };
    let category_labels: Vec<String> = CATEGORY_POOL[..n_cat]
        .iter()
        .map(|s| s.to_string())
        .collect();
    let series: Vec<Series> = (0..n_series)
        .map(|s| Series {
            label: SERIES_POOL[s].to_string(),
            values: (0..n_cat)
                .map(|_| {
                    round_to(
                        rng.gen_range(config.value_min..config.value_max),
                        config.decimals,
                    )
                })
                .collect(),
        })
        .collect();
    let axis = match chart_type {
        ChartType::Pie => None,
        _ => {
            let vmax = series
                .iter()
                .flat_map(|s| s.values.iter())
                .cloned()
                .fold(f64::MIN, f64::max);
            Some(AxisSpec {
                y_min: 0.0,
                y_max: nice_ceil(vmax),
                tick_count: rng.gen_range(3..=6),
            })
        }
    };
    let title = format!(
        "{} {}",
        TITLE_WORDS[rng.gen_range(0..TITLE_WORDS.len())],
        TITLE_SUFFIX[rng.gen_range(0..TITLE_SUFFIX.len())]
    );
    let style_seed: u64 = rng.gen();
    Ok(ChartSpec {
        chart_type,
        series,
        category_labels,
        axis,
        title,
        style_seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sampling_is_deterministic() {
        let cfg = GenConfig::default();
        let a = sample_chart_spec(42, &cfg).unwrap();
        let b = sample_chart_spec(42, &cfg).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn neighboring_seeds_differ() {
        let cfg = GenConfig::default();
        let mut distinct = 0;
        for s in 0..100u64 {
            let a = sample_chart_spec(s, &cfg).unwrap();
            let b = sample_chart_spec(s + 1, &cfg).unwrap();
            if a != b {
                distinct += 1;
            }
        }
        assert!(distinct >= 99, "only {distinct}/100 neighbors distinct");
    }

    #[test]
    fn pie_has_exactly_one_series() {
        let cfg = GenConfig {
            chart_types: vec![ChartType::Pie],
            ..GenConfig::default()
        };
        for s in 0..20 {
            let spec = sample_chart_spec(s, &cfg).unwrap();
            assert_eq!(spec.series.len(), 1);
            assert!(spec.series[0].values.iter().all(|v| *v > 0.0));
            assert!(spec.axis.is_none());
        }
    }

    #[test]
    fn series_lengths_match_categories() {
        let cfg = GenConfig::default();
        for s in 0..30 {
            let spec = sample_chart_spec(s, &cfg).unwrap();
            for series in &spec.series {
                assert_eq!(series.values.len(), spec.category_labels.len());
            }
            if let Some(axis) = &spec.axis {
                assert!(axis.y_min < axis.y_max);
                assert!(axis.tick_count >= 2);
            }
        }
    }

    #[test]
    fn invalid_config_rejected() {
        let cfg = GenConfig {
            value_min: 0.0,
            ..GenConfig::default()
        };
        assert!(matches!(
            sample_chart_spec(1, &cfg),
            Err(ChartGenError::InvalidConfig(_))
        ));
    }

    #[test]
    fn format_value_trims_zeros() {
        assert_eq!(format_value(7.0, 1), "7");
        assert_eq!(format_value(7.02, 2), "7.02");
        assert_eq!(format_value(0.25, 3), "0.25");
        assert_eq!(format_value(-0.0, 1), "0");
    }

    #[test]
    fn nice_ceil_is_nice() {
        assert_eq!(nice_ceil(87.0), 100.0);
        assert_eq!(nice_ceil(42.0), 50.0);
        assert_eq!(nice_ceil(100.0), 100.0);
        assert!(nice_ceil(3.3) >= 3.3);
    }
}
