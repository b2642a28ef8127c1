use std::collections::{HashMap, HashSet};
use std::path::Path;

use crate::error::{Error, Result};
use crate::fsutil::{read_to_string, write_atomic};
use crate::svm::Label;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ManifestEntry {
    pub filename: String,
    pub label: Label,
    /// Attack group, e.g. lens brand.
    pub group: Option<String>,
    pub subject: Option<String>,
}

impl ManifestEntry {
    pub fn new(filename: impl Into<String>, label: Label) -> Self {
        ManifestEntry {
            filename: filename.into(),
            label,
            group: None,
            subject: None,
        }
    }
}

/// Image list as CSV `filename,label[,group][,subject]`. A header row and
/// `#` comment lines are optional on input.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Manifest {
    entries: Vec<ManifestEntry>,
}

fn non_empty(field: Option<&str>) -> Option<String> {
    field.map(str::trim).filter(|f| !f.is_empty()).map(str::to_owned)
}

impl Manifest {
    pub fn new(entries: Vec<ManifestEntry>) -> Result<Self> {
        let mut seen = HashSet::new();
        for e in &entries {
            if e.filename.is_empty() {
                return Err(Error::Validation("manifest entry with empty filename".into()));
            }
            if !seen.insert(e.filename.as_str()) {
                return Err(Error::Validation(format!("duplicate manifest entry {}", e.filename)));
            }
        }
        Ok(Manifest { entries })
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(false)
            .flexible(true)
            .comment(Some(b'#'))
            .trim(csv::Trim::All)
            .from_reader(text.as_bytes());
        let mut entries = Vec::new();
        for (i, record) in reader.records().enumerate() {
            let record = record.map_err(|e| Error::Format(format!("manifest: {e}")))?;
            if record.iter().all(str::is_empty) {
                continue;
            }
            if i == 0 && record.get(0) == Some("filename") {
                continue;
            }
            if record.len() < 2 || record.len() > 4 {
                return Err(Error::Format(format!(
                    "manifest line {}: expected filename,label[,group][,subject]",
                    record.position().map_or(0, |p| p.line())
                )));
            }
            let label: Label = record[1].parse().map_err(|_| {
                Error::Format(format!("manifest: invalid label {:?} for {}", &record[1], &record[0]))
            })?;
            entries.push(ManifestEntry {
                filename: record[0].to_owned(),
                label,
                group: non_empty(record.get(2)),
                subject: non_empty(record.get(3)),
            });
        }
        Manifest::new(entries)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Manifest::parse(&read_to_string(path)?).map_err(|e| match e {
            Error::Format(m) => Error::Format(format!("{}: {m}", path.display())),
            Error::Validation(m) => Error::Validation(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn to_csv(&self) -> String {
        let mut writer = csv::Writer::from_writer(Vec::new());
        let _ = writer.write_record(["filename", "label", "group", "subject"]);
        for e in &self.entries {
            let _ = writer.write_record([
                e.filename.as_str(),
                e.label.as_str(),
                e.group.as_deref().unwrap_or(""),
                e.subject.as_deref().unwrap_or(""),
            ]);
        }
        String::from_utf8(writer.into_inner().unwrap_or_default()).unwrap_or_default()
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_atomic(path, self.to_csv().as_bytes())
    }

    pub fn entries(&self) -> &[ManifestEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn filenames(&self) -> Vec<String> {
        self.entries.iter().map(|e| e.filename.clone()).collect()
    }

    pub fn labels(&self) -> Vec<Label> {
        self.entries.iter().map(|e| e.label).collect()
    }

    pub fn groups(&self) -> Vec<Option<String>> {
        self.entries.iter().map(|e| e.group.clone()).collect()
    }

    pub fn subjects(&self) -> Vec<Option<String>> {
        self.entries.iter().map(|e| e.subject.clone()).collect()
    }

    pub fn subset(&self, idx: &[usize]) -> Manifest {
        Manifest {
            entries: idx.iter().map(|&i| self.entries[i].clone()).collect(),
        }
    }

    /// Entries of `self` followed by those of `other` not already present.
    /// A filename listed with different labels is an error.
    pub fn union(&self, other: &Manifest) -> Result<Manifest> {
        let mut entries = self.entries.clone();
        let mut known: HashMap<String, Label> =
            entries.iter().map(|e| (e.filename.clone(), e.label)).collect();
        for e in &other.entries {
            match known.get(&e.filename) {
                Some(&l) if l != e.label => {
                    return Err(Error::Validation(format!(
                        "{} is labeled {l} and {} in different manifests",
                        e.filename, e.label
                    )))
                }
                Some(_) => {}
                None => {
                    known.insert(e.filename.clone(), e.label);
                    entries.push(e.clone());
                }
            }
        }
        Manifest::new(entries)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_minimal_and_tagged_rows() {
        let m = Manifest::parse("# comment\na.pgm,attack,brandA,s1\nb.pgm, bonafide\nc.png,attack,,s2\n").unwrap();
        assert_eq!(m.len(), 3);
        assert_eq!(m.entries()[0].group.as_deref(), Some("brandA"));
        assert_eq!(m.entries()[1].label, Label::BonaFide);
        assert_eq!(m.entries()[1].subject, None);
        assert_eq!(m.entries()[2].group, None);
        assert_eq!(m.entries()[2].subject.as_deref(), Some("s2"));
    }

    #[test]
    fn round_trip_with_header() {
        let mut e = ManifestEntry::new("x y.pgm", Label::Attack);
        e.group = Some("b,1".into());
        let m = Manifest::new(vec![e, ManifestEntry::new("z.pgm", Label::BonaFide)]).unwrap();
        assert_eq!(Manifest::parse(&m.to_csv()).unwrap(), m);
    }

    #[test]
    fn rejects_duplicates_and_bad_labels() {
        assert!(matches!(Manifest::parse("a,attack\na,attack\n"), Err(Error::Validation(_))));
        assert!(matches!(Manifest::parse("a,maybe\n"), Err(Error::Format(_))));
        assert!(matches!(Manifest::parse("a\n"), Err(Error::Format(_))));
    }

    #[test]
    fn union_keeps_order_and_checks_labels() {
        let a = Manifest::parse("a,attack\nb,bonafide\n").unwrap();
        let b = Manifest::parse("b,bonafide\nc,attack\n").unwrap();
        assert_eq!(a.union(&b).unwrap().filenames(), vec!["a", "b", "c"]);
        let conflict = Manifest::parse("a,bonafide\n").unwrap();
        assert!(a.union(&conflict).is_err());
    }
}
