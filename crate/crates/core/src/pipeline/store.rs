use std::collections::{BTreeMap, HashMap};
use std::path::{Path, PathBuf};

use crate::bsif::ScaleId;
use crate::ensemble::LabeledFeatures;
use crate::error::{Error, Result};
use crate::fsutil::{read_to_string, write_atomic};
use crate::pipeline::manifest::Manifest;

pub fn feature_file_name(scale: ScaleId, bits: usize) -> String {
    format!("bsif_{scale}_{bits}bit.csv")
}

pub fn feature_file_path(dir: &Path, scale: ScaleId, bits: usize) -> PathBuf {
    dir.join(feature_file_name(scale, bits))
}

/// All images' histograms for one scale, in manifest order.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureTable {
    pub scale: ScaleId,
    pub bits: usize,
    pub raw_counts: bool,
    pub names: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl FeatureTable {
    pub fn new(scale: ScaleId, bits: usize, raw_counts: bool) -> Self {
        FeatureTable {
            scale,
            bits,
            raw_counts,
            names: Vec::new(),
            rows: Vec::new(),
        }
    }

    pub fn bins(&self) -> usize {
        1 << self.bits
    }

    pub fn push(&mut self, name: String, row: Vec<f64>) -> Result<()> {
        if row.len() != self.bins() {
            return Err(Error::Validation(format!(
                "{name}: {} bins for a {}-bit table",
                row.len(),
                self.bits
            )));
        }
        self.names.push(name);
        self.rows.push(row);
        Ok(())
    }

    /// `#` metadata line, `filename,bin0,...` header, then one row per image
    /// with 9 significant digits.
    pub fn to_csv(&self) -> String {
        let mut writer = csv::Writer::from_writer(Vec::new());
        let mut header = vec!["filename".to_owned()];
        header.extend((0..self.bins()).map(|i| format!("bin{i}")));
        let _ = writer.write_record(&header);
        for (name, row) in self.names.iter().zip(&self.rows) {
            let mut record = Vec::with_capacity(row.len() + 1);
            record.push(name.clone());
            record.extend(row.iter().map(|v| format!("{v:.8e}")));
            let _ = writer.write_record(&record);
        }
        let body = writer.into_inner().unwrap_or_default();
        let mut out = format!(
            "# scale={} bits={} bins={} values={} rows={}\n",
            self.scale,
            self.bits,
            self.bins(),
            if self.raw_counts { "counts" } else { "normalized" },
            self.names.len()
        );
        out.push_str(&String::from_utf8_lossy(&body));
        out
    }

    pub fn parse(text: &str) -> Result<Self> {
        let bad = |m: String| Error::Format(format!("feature table: {m}"));
        let meta_line = text.lines().next().unwrap_or("");
        let meta: HashMap<&str, &str> = meta_line
            .strip_prefix('#')
            .ok_or_else(|| bad("missing metadata line".into()))?
            .split_whitespace()
            .filter_map(|kv| kv.split_once('='))
            .collect();
        let field = |k: &str| meta.get(k).copied().ok_or_else(|| bad(format!("metadata lacks {k}")));
        let scale: ScaleId = field("scale")?.parse()?;
        let bits: usize = field("bits")?.parse().map_err(|_| bad("bad bits".into()))?;
        if !(1..=16).contains(&bits) {
            return Err(bad(format!("unsupported bit depth {bits}")));
        }
        let raw_counts = match field("values")? {
            "counts" => true,
            "normalized" => false,
            other => return Err(bad(format!("unknown value kind {other}"))),
        };
        let mut table = FeatureTable::new(scale, bits, raw_counts);

        let mut reader = csv::ReaderBuilder::new()
            .has_headers(true)
            .comment(Some(b'#'))
            .from_reader(text.as_bytes());
        let headers = reader.headers().map_err(|e| bad(e.to_string()))?.clone();
        if headers.len() != table.bins() + 1 || &headers[0] != "filename" {
            return Err(bad(format!("header has {} columns, expected {}", headers.len(), table.bins() + 1)));
        }
        for record in reader.records() {
            let record = record.map_err(|e| bad(e.to_string()))?;
            let row = record
                .iter()
                .skip(1)
                .map(|v| v.parse::<f64>().map_err(|_| bad(format!("bad value {v:?} for {}", &record[0]))))
                .collect::<Result<Vec<_>>>()?;
            table.push(record[0].to_owned(), row)?;
        }
        if let Some(rows) = meta.get("rows") {
            if rows.parse::<usize>().ok() != Some(table.names.len()) {
                return Err(bad(format!("metadata announces {rows} rows, found {}", table.names.len())));
            }
        }
        Ok(table)
    }

    pub fn save(&self, dir: &Path) -> Result<PathBuf> {
        let path = feature_file_path(dir, self.scale, self.bits);
        write_atomic(&path, self.to_csv().as_bytes())?;
        Ok(path)
    }

    pub fn load(path: &Path) -> Result<Self> {
        FeatureTable::parse(&read_to_string(path)?).map_err(|e| match e {
            Error::Format(m) => Error::Format(format!("{}: {m}", path.display())),
            other => other,
        })
    }
}

/// Rows of every scale's table for the images in `manifest`, in manifest
/// order. Images absent from a table are reported together.
pub fn load_labeled(dir: &Path, scales: &[ScaleId], bits: usize, manifest: &Manifest) -> Result<LabeledFeatures> {
    let mut features = BTreeMap::new();
    for &scale in scales {
        let path = feature_file_path(dir, scale, bits);
        let table = FeatureTable::load(&path)?;
        if table.scale != scale || table.bits != bits {
            return Err(Error::Validation(format!(
                "{} holds {} at {} bits",
                path.display(),
                table.scale,
                table.bits
            )));
        }
        let index: HashMap<&str, usize> = table.names.iter().enumerate().map(|(i, n)| (n.as_str(), i)).collect();
        let missing: Vec<&str> = manifest
            .entries()
            .iter()
            .filter(|e| !index.contains_key(e.filename.as_str()))
            .map(|e| e.filename.as_str())
            .collect();
        if !missing.is_empty() {
            return Err(Error::Validation(format!(
                "{} lacks features for {} images: {}",
                path.display(),
                missing.len(),
                missing.join(", ")
            )));
        }
        let rows = manifest
            .entries()
            .iter()
            .map(|e| table.rows[index[e.filename.as_str()]].clone())
            .collect();
        features.insert(scale, rows);
    }
    LabeledFeatures::new(manifest.filenames(), manifest.labels(), features)
}
