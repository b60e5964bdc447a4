//! Corpus writing: per-item PNG + JSONL records + manifest.
//!
//! Layout on disk:
//!   <dir>/images/<id>.png
//!   <dir>/items.jsonl      (one record per line: id, spec, annotations,
//!                           table, qa, summary)
//!   <dir>/manifest.json
//!
//! Item generation is parallel over independent derived seeds; output is
//! written in index order so bytes are reproducible.

use std::fs;
use std::io::Write;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::annotate::{annotate, ComponentAnnotation};
use super::qa::{make_qa, make_summary, QAPair, SummaryTemplate};
use super::render::render;
use super::table::{make_table, Table};
use super::{derive_seed, sample_chart_spec, ChartGenError, ChartSpec, GenConfig};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitFractions {
    pub train: f64,
    pub val: f64,
    pub test: f64,
}

impl Default for SplitFractions {
    fn default() -> Self {
        SplitFractions {
            train: 0.8,
            val: 0.1,
            test: 0.1,
        }
    }
}

/// One corpus record as serialized to items.jsonl.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CorpusItem {
    pub id: String,
    pub spec: ChartSpec,
    pub annotations: Vec<ComponentAnnotation>,
    pub table: Table,
    pub qa: Vec<QAPair>,
    pub summary: SummaryTemplate,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SplitCounts {
    pub train: usize,
    pub val: usize,
    pub test: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CorpusManifest {
    pub n: usize,
    /// Items [0, train) are train, [train, train+val) val, rest test.
    pub counts: SplitCounts,
    pub seed: u64,
    pub config_hash: String,
    pub config: GenConfig,
}

/// Hash of the canonical TOML encoding of a config.
pub fn config_hash(config: &GenConfig) -> String {
    let toml = toml::to_string(config).expect("config serializes");
    let mut h = Sha256::new();
    h.update(toml.as_bytes());
    hex_string(&h.finalize())
}

fn hex_string(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// Generate one item in memory (no I/O).
pub fn generate_item(seed: u64, index: u64, config: &GenConfig) -> Result<(CorpusItem, Vec<u8>), ChartGenError> {
    let item_seed = derive_seed(seed, index);
    let spec = sample_chart_spec(item_seed, config)?;
    let image = render(&spec, config.width, config.height)?;
    let annotations = annotate(&spec, config.width, config.height)?;
    let table = make_table(&spec);
    let qa = make_qa(&spec, derive_seed(item_seed, 1));
    let summary = make_summary(&spec);
    Ok((
        CorpusItem {
            id: format!("{index:06}"),
            spec,
            annotations,
            table,
            qa,
            summary,
        },
        image.to_png_bytes(),
    ))
}

/// Generate `n` items in memory, in index order.
pub fn generate_items(seed: u64, n: usize, config: &GenConfig) -> Result<Vec<CorpusItem>, ChartGenError> {
    config.validate()?;
    let results: Vec<Result<(CorpusItem, Vec<u8>), ChartGenError>> = (0..n as u64)
        .into_par_iter()
        .map(|i| generate_item(seed, i, config))
        .collect();
    results.into_iter().map(|r| r.map(|(item, _)| item)).collect()
}

pub fn write_corpus(
    dir: &Path,
    n: usize,
    split: SplitFractions,
    config: &GenConfig,
    seed: u64,
) -> Result<CorpusManifest, ChartGenError> {
    config.validate()?;
    if n == 0 {
        return Err(ChartGenError::InvalidSplit("n must be at least 1".into()));
    }
    let total = split.train + split.val + split.test;
    if (total - 1.0).abs() > 1e-9 || split.train < 0.0 || split.val < 0.0 || split.test < 0.0 {
        return Err(ChartGenError::InvalidSplit(format!(
            "fractions must be nonnegative and sum to 1, got {total}"
        )));
    }
    // floor val/test; remainder goes to train.
    let n_val = (n as f64 * split.val).floor() as usize;
    let n_test = (n as f64 * split.test).floor() as usize;
    let n_train = n - n_val - n_test;

    let images_dir = dir.join("images");
    fs::create_dir_all(&images_dir)?;

    let results: Vec<Result<(CorpusItem, Vec<u8>), ChartGenError>> = (0..n as u64)
        .into_par_iter()
        .map(|i| generate_item(seed, i, config))
        .collect();

    let mut jsonl = fs::File::create(dir.join("items.jsonl"))?;
    for r in results {
        let (item, png) = r?;
        fs::write(images_dir.join(format!("{}.png", item.id)), png)?;
        let line = serde_json::to_string(&item)?;
        jsonl.write_all(line.as_bytes())?;
        jsonl.write_all(b"\n")?;
    }

    let manifest = CorpusManifest {
        n,
        counts: SplitCounts {
            train: n_train,
            val: n_val,
            test: n_test,
        },
        seed,
        config_hash: config_hash(config),
        config: config.clone(),
    };
    fs::write(
        dir.join("manifest.json"),
        serde_json::to_string_pretty(&manifest)?,
    )?;
    Ok(manifest)
}

/// Read items.jsonl back.
pub fn read_items(dir: &Path) -> Result<Vec<CorpusItem>, ChartGenError> {
    let text = fs::read_to_string(dir.join("items.jsonl"))?;
    let mut out = Vec::new();
    for line in text.lines() {
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(line)?);
    }
    Ok(out)
}

pub fn read_manifest(dir: &Path) -> Result<CorpusManifest, ChartGenError> {
    let text = fs::read_to_string(dir.join("manifest.json"))?;
    Ok(serde_json::from_str(&text)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn split_rounding_rule() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = GenConfig::default();
        let m = write_corpus(
            dir.path(),
            10,
            SplitFractions {
                train: 0.8,
                val: 0.1,
                test: 0.1,
            },
            &cfg,
            7,
        )
        .unwrap();
        assert_eq!(m.counts.train, 8);
        assert_eq!(m.counts.val, 1);
        assert_eq!(m.counts.test, 1);
        assert!(dir.path().join("images/000000.png").exists());
        let items = read_items(dir.path()).unwrap();
        assert_eq!(items.len(), 10);
    }

    #[test]
    fn zero_items_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = GenConfig::default();
        assert!(matches!(
            write_corpus(dir.path(), 0, SplitFractions::default(), &cfg, 7),
            Err(ChartGenError::InvalidSplit(_))
        ));
    }

    #[test]
    fn rerun_is_byte_identical() {
        let cfg = GenConfig::default();
        let d1 = tempfile::tempdir().unwrap();
        let d2 = tempfile::tempdir().unwrap();
        write_corpus(d1.path(), 6, SplitFractions::default(), &cfg, 123).unwrap();
        write_corpus(d2.path(), 6, SplitFractions::default(), &cfg, 123).unwrap();
        let j1 = fs::read(d1.path().join("items.jsonl")).unwrap();
        let j2 = fs::read(d2.path().join("items.jsonl")).unwrap();
        assert_eq!(j1, j2);
        for i in 0..6 {
            let p1 = fs::read(d1.path().join(format!("images/{i:06}.png"))).unwrap();
            let p2 = fs::read(d2.path().join(format!("images/{i:06}.png"))).unwrap();
            assert_eq!(p1, p2, "png {i} differs");
        }
        let m1 = fs::read(d1.path().join("manifest.json")).unwrap();
        let m2 = fs::read(d2.path().join("manifest.json")).unwrap();
        assert_eq!(m1, m2);
    }

    #[test]
    fn bad_fractions_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = GenConfig::default();
        assert!(matches!(
            write_corpus(
                dir.path(),
                5,
                SplitFractions {
                    train: 0.5,
                    val: 0.1,
                    test: 0.1
                },
                &cfg,
                7
            ),
            Err(ChartGenError::InvalidSplit(_))
        ));
    }
}
