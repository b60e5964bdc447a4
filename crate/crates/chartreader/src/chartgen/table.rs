//! Tabular ground truth: rows are series, columns are categories.

use serde::{Deserialize, Serialize};

use super::{ChartSpec, ChartType};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableRow {
    pub label: String,
    pub cells: Vec<f64>,
}

/// A chart's data table. Cell ids are `(row index, column index)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Table {
    pub headers: Vec<String>,
    pub rows: Vec<TableRow>,
}

impl Table {
    pub fn cell(&self, row: usize, col: usize) -> Option<f64> {
        self.rows.get(row).and_then(|r| r.cells.get(col)).copied()
    }

    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn n_cols(&self) -> usize {
        self.headers.len()
    }

    pub fn cell_count(&self) -> usize {
        self.rows.iter().map(|r| r.cells.len()).sum()
    }
}

/// Build the ground-truth table. Pie charts normalize to a single row of
/// fractions; bar/line carry raw series values.
pub fn make_table(spec: &ChartSpec) -> Table {
    match spec.chart_type {
        ChartType::Pie => {
            let total: f64 = spec.series[0].values.iter().sum();
            Table {
                headers: spec.category_labels.clone(),
                rows: vec![TableRow {
                    label: spec.series[0].label.clone(),
                    cells: spec.series[0].values.iter().map(|v| v / total).collect(),
                }],
            }
        }
        _ => Table {
            headers: spec.category_labels.clone(),
            rows: spec
                .series
                .iter()
                .map(|s| TableRow {
                    label: s.label.clone(),
                    cells: s.values.clone(),
                })
                .collect(),
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chartgen::{AxisSpec, Series};

    #[test]
    fn single_series_table() {
        let spec = ChartSpec {
            chart_type: ChartType::Bar,
            series: vec![Series {
                label: "s1".into(),
                values: vec![2.0, 4.0],
            }],
            category_labels: vec!["A".into(), "B".into()],
            axis: Some(AxisSpec {
                y_min: 0.0,
                y_max: 5.0,
                tick_count: 3,
            }),
            title: "Sales Report".into(),
            style_seed: 0,
        };
        let t = make_table(&spec);
        assert_eq!(t.headers, vec!["A", "B"]);
        assert_eq!(t.rows.len(), 1);
        assert_eq!(t.rows[0].cells, vec![2.0, 4.0]);
    }

    #[test]
    fn pie_normalizes_to_fractions() {
        let spec = ChartSpec {
            chart_type: ChartType::Pie,
            series: vec![Series {
                label: "s1".into(),
                values: vec![1.0, 1.0, 2.0],
            }],
            category_labels: vec!["A".into(), "B".into(), "C".into()],
            axis: None,
            title: "Usage Report".into(),
            style_seed: 0,
        };
        let t = make_table(&spec);
        assert_eq!(t.rows[0].cells, vec![0.25, 0.25, 0.5]);
    }
}
