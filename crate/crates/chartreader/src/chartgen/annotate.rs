//! Ground-truth component annotations in center + corner-keypoint form.
//!
//! Every drawn component becomes one annotation whose two keypoints are the
//! top-left and bottom-right bbox corners and whose center is their exact
//! midpoint. Category labels under the x axis are rendered text only and are
//! deliberately not components.

use serde::{Deserialize, Serialize};

use super::layout::{compute_layout, BBox};
use super::{format_value, ChartGenError, ChartSpec};

/// Fixed component vocabulary; ids are 1-based, 0 is reserved for the
/// background class used by the assembler's classifier.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ComponentType {
    Bar,
    LinePoint,
    PieSector,
    AxisTick,
    LegendItem,
    AxisTitle,
    ChartTitle,
    PlotArea,
}

/// Number of component types (excluding background).
pub const NUM_COMPONENT_TYPES: usize = 8;

impl ComponentType {
    pub fn id(&self) -> usize {
        match self {
            ComponentType::Bar => 1,
            ComponentType::LinePoint => 2,
            ComponentType::PieSector => 3,
            ComponentType::AxisTick => 4,
            ComponentType::LegendItem => 5,
            ComponentType::AxisTitle => 6,
            ComponentType::ChartTitle => 7,
            ComponentType::PlotArea => 8,
        }
    }

    pub fn from_id(id: usize) -> Option<Self> {
        match id {
            1 => Some(ComponentType::Bar),
            2 => Some(ComponentType::LinePoint),
            3 => Some(ComponentType::PieSector),
            4 => Some(ComponentType::AxisTick),
            5 => Some(ComponentType::LegendItem),
            6 => Some(ComponentType::AxisTitle),
            7 => Some(ComponentType::ChartTitle),
            8 => Some(ComponentType::PlotArea),
            _ => None,
        }
    }

    pub fn all() -> [ComponentType; 8] {
        [
            ComponentType::Bar,
            ComponentType::LinePoint,
            ComponentType::PieSector,
            ComponentType::AxisTick,
            ComponentType::LegendItem,
            ComponentType::AxisTitle,
            ComponentType::ChartTitle,
            ComponentType::PlotArea,
        ]
    }
}

/// One chart component as ground truth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComponentAnnotation {
    pub component_type: ComponentType,
    pub bbox: BBox,
    pub center: (f64, f64),
    /// Top-left and bottom-right bbox corners, componentwise ordered.
    pub keypoints: [(f64, f64); 2],
    pub text: Option<String>,
    pub value: Option<f64>,
}

impl ComponentAnnotation {
    fn from_bbox(
        component_type: ComponentType,
        bbox: BBox,
        text: Option<String>,
        value: Option<f64>,
    ) -> Self {
        let corners = bbox.corners();
        let center = (
            (corners[0].0 + corners[1].0) / 2.0,
            (corners[0].1 + corners[1].1) / 2.0,
        );
        ComponentAnnotation {
            component_type,
            bbox,
            center,
            keypoints: corners,
            text,
            value,
        }
    }
}

/// Produce one annotation per drawn component, in a fixed deterministic
/// order: data components, ticks, legend items, axis titles, title, plot
/// area.
pub fn annotate(
    spec: &ChartSpec,
    width: u32,
    height: u32,
) -> Result<Vec<ComponentAnnotation>, ChartGenError> {
    let l = compute_layout(spec, width, height)?;
    let mut out = Vec::new();

    for b in &l.bars {
        out.push(ComponentAnnotation::from_bbox(
            ComponentType::Bar,
            b.bbox,
            None,
            Some(b.value),
        ));
    }
    for p in &l.points {
        out.push(ComponentAnnotation::from_bbox(
            ComponentType::LinePoint,
            p.bbox(),
            None,
            Some(p.value),
        ));
    }
    for s in &l.sectors {
        out.push(ComponentAnnotation::from_bbox(
            ComponentType::PieSector,
            s.bbox,
            None,
            Some(s.fraction),
        ));
    }
    for t in &l.ticks {
        out.push(ComponentAnnotation::from_bbox(
            ComponentType::AxisTick,
            t.bbox,
            Some(t.text.clone()),
            Some(t.value),
        ));
    }
    for le in &l.legend {
        out.push(ComponentAnnotation::from_bbox(
            ComponentType::LegendItem,
            le.bbox,
            Some(le.label.clone()),
            None,
        ));
    }
    if let Some(xt) = &l.x_title {
        out.push(ComponentAnnotation::from_bbox(
            ComponentType::AxisTitle,
            xt.bbox,
            Some(xt.text.clone()),
            None,
        ));
    }
    if let Some(yt) = &l.y_title {
        out.push(ComponentAnnotation::from_bbox(
            ComponentType::AxisTitle,
            yt.bbox,
            Some(yt.text.clone()),
            None,
        ));
    }
    out.push(ComponentAnnotation::from_bbox(
        ComponentType::ChartTitle,
        l.title.bbox,
        Some(l.title.text.clone()),
        None,
    ));
    out.push(ComponentAnnotation::from_bbox(
        ComponentType::PlotArea,
        l.plot,
        None,
        None,
    ));

    Ok(out)
}

/// Re-export used by tests asserting tick text formatting.
pub fn tick_label(value: f64) -> String {
    format_value(value, 1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chartgen::{sample_chart_spec, ChartType, GenConfig, Series};

    #[test]
    fn center_is_exact_keypoint_midpoint() {
        let cfg = GenConfig::default();
        for seed in 0..25 {
            let spec = sample_chart_spec(seed, &cfg).unwrap();
            for a in annotate(&spec, 128, 128).unwrap() {
                let mid = (
                    (a.keypoints[0].0 + a.keypoints[1].0) / 2.0,
                    (a.keypoints[0].1 + a.keypoints[1].1) / 2.0,
                );
                assert_eq!(a.center, mid);
                assert!(a.keypoints[0].0 <= a.keypoints[1].0);
                assert!(a.keypoints[0].1 <= a.keypoints[1].1);
                assert_eq!(a.keypoints[0], (a.bbox.x0, a.bbox.y0));
                assert_eq!(a.keypoints[1], (a.bbox.x1, a.bbox.y1));
            }
        }
    }

    #[test]
    fn bar_chart_component_count() {
        // 2 series x 4 categories with 5 ticks:
        // 8 bars + 5 ticks + 2 legend + 2 axis titles + 1 title + 1 plot_area = 19
        let spec = ChartSpec {
            chart_type: ChartType::Bar,
            series: vec![
                Series {
                    label: "s1".into(),
                    values: vec![10.0, 20.0, 30.0, 40.0],
                },
                Series {
                    label: "s2".into(),
                    values: vec![15.0, 25.0, 35.0, 45.0],
                },
            ],
            category_labels: vec!["A".into(), "B".into(), "C".into(), "D".into()],
            axis: Some(crate::chartgen::AxisSpec {
                y_min: 0.0,
                y_max: 50.0,
                tick_count: 5,
            }),
            title: "Sales Report".into(),
            style_seed: 0,
        };
        let anns = annotate(&spec, 128, 128).unwrap();
        assert_eq!(anns.len(), 19);
    }

    #[test]
    fn explicit_bar_bbox_example() {
        // bar at bbox (10,50)-(30,200): center (20,125), keypoints as corners.
        let a = ComponentAnnotation::from_bbox(
            ComponentType::Bar,
            BBox::new(10.0, 50.0, 30.0, 200.0),
            None,
            Some(1.0),
        );
        assert_eq!(a.center, (20.0, 125.0));
        assert_eq!(a.keypoints, [(10.0, 50.0), (30.0, 200.0)]);
    }

    #[test]
    fn tick_annotation_sits_on_axis_line() {
        let cfg = GenConfig::bars_only();
        let spec = sample_chart_spec(11, &cfg).unwrap();
        let l = crate::chartgen::layout::compute_layout(&spec, 128, 128).unwrap();
        let anns = annotate(&spec, 128, 128).unwrap();
        let ticks: Vec<_> = anns
            .iter()
            .filter(|a| a.component_type == ComponentType::AxisTick)
            .collect();
        assert_eq!(ticks.len(), spec.axis.as_ref().unwrap().tick_count);
        for t in ticks {
            assert_eq!(t.center.0, l.plot.x0);
            assert!(t.text.is_some());
            assert!(t.value.is_some());
            // Text parses back to the value it labels (within label rounding).
            let parsed: f64 = t.text.as_ref().unwrap().parse().unwrap();
            assert!((parsed - t.value.unwrap()).abs() <= 0.05 + 1e-9);
        }
    }

    #[test]
    fn values_carried_by_data_components() {
        let cfg = GenConfig::default();
        for seed in 0..10 {
            let spec = sample_chart_spec(seed, &cfg).unwrap();
            let anns = annotate(&spec, 128, 128).unwrap();
            for a in anns {
                match a.component_type {
                    ComponentType::Bar | ComponentType::LinePoint | ComponentType::PieSector => {
                        assert!(a.value.is_some())
                    }
                    ComponentType::AxisTick => {
                        assert!(a.value.is_some() && a.text.is_some())
                    }
                    _ => {}
                }
            }
        }
    }
}
