use std::collections::BTreeMap;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::{AnnotationDataset, DatasetError, LabelDomain, Rating};

/// Maps label strings as they appear in a source file onto integer codes.
pub type LabelDictionary = BTreeMap<String, u32>;

/// Column mapping for long-form CSV ingestion.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IngestSchema {
    pub item_col: String,
    pub rater_col: String,
    pub label_col: String,
    #[serde(default)]
    pub label_dict: Option<LabelDictionary>,
    /// Explicit label codes. Defaults to the dictionary's codes, or to the
    /// codes observed in the file.
    #[serde(default)]
    pub domain: Option<Vec<u32>>,
}

impl Default for IngestSchema {
    fn default() -> Self {
        Self {
            item_col: "item_id".into(),
            rater_col: "rater_id".into(),
            label_col: "label".into(),
            label_dict: None,
            domain: None,
        }
    }
}

impl IngestSchema {
    pub fn new(item_col: &str, rater_col: &str, label_col: &str) -> Self {
        Self {
            item_col: item_col.into(),
            rater_col: rater_col.into(),
            label_col: label_col.into(),
            ..Self::default()
        }
    }

    pub fn with_label_dict(mut self, dict: LabelDictionary) -> Self {
        self.label_dict = Some(dict);
        self
    }

    pub fn with_domain(mut self, codes: Vec<u32>) -> Self {
        self.domain = Some(codes);
        self
    }
}

impl AnnotationDataset {
    /// Reads a long-form CSV with a header row.
    pub fn ingest_csv<R: Read>(source: R, schema: &IngestSchema) -> Result<Self, DatasetError> {
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(true)
            .trim(csv::Trim::All)
            .from_reader(source);
        let headers = reader.headers()?.clone();
        let col = |name: &str| {
            headers
                .iter()
                .position(|h| h == name)
                .ok_or_else(|| DatasetError::MalformedRow {
                    line: 1,
                    reason: format!("missing column {name:?}"),
                })
        };
        let (ic, rc, lc) = (
            col(&schema.item_col)?,
            col(&schema.rater_col)?,
            col(&schema.label_col)?,
        );

        let mut rows: Vec<(String, String, u32, u64)> = Vec::new();
        for record in reader.records() {
            let record = record.map_err(|e| {
                let line = e.position().map(|p| p.line()).unwrap_or(0);
                DatasetError::MalformedRow {
                    line,
                    reason: e.to_string(),
                }
            })?;
            let line = record.position().map(|p| p.line()).unwrap_or(0);
            let field = |i: usize, what: &str| -> Result<String, DatasetError> {
                match record.get(i) {
                    Some(s) if !s.is_empty() => Ok(s.to_string()),
                    _ => Err(DatasetError::MalformedRow {
                        line,
                        reason: format!("empty {what}"),
                    }),
                }
            };
            let item = field(ic, "item id")?;
            let rater = field(rc, "rater id")?;
            let raw_label = field(lc, "label")?;
            let code = match &schema.label_dict {
                Some(dict) => dict.get(&raw_label).copied(),
                None => raw_label.parse::<u32>().ok(),
            }
            .ok_or_else(|| DatasetError::UnknownLabel {
                line,
                label: raw_label.clone(),
            })?;
            rows.push((item, rater, code, line));
        }
        if rows.is_empty() {
            return Err(DatasetError::EmptyDataset);
        }

        let codes = match (&schema.domain, &schema.label_dict) {
            (Some(d), _) => {
                let mut d = d.clone();
                d.sort_unstable();
                d
            }
            (None, Some(dict)) => {
                let mut d: Vec<u32> = dict.values().copied().collect();
                d.sort_unstable();
                d.dedup();
                d
            }
            (None, None) => {
                let mut d: Vec<u32> = rows.iter().map(|r| r.2).collect();
                d.sort_unstable();
                d.dedup();
                d
            }
        };
        let domain = LabelDomain::new(codes)?;
        if let Some(bad) = rows.iter().find(|r| domain.class_of(r.2).is_none()) {
            return Err(DatasetError::UnknownLabel {
                line: bad.3,
                label: bad.2.to_string(),
            });
        }
        AnnotationDataset::from_triples(domain, rows.into_iter().map(|(i, r, c, _)| (i, r, c)))
    }

    /// Writes the canonical `item_id,rater_id,label` form.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), DatasetError> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["item_id", "rater_id", "label"])?;
        for &Rating { item, rater, label } in self.ratings() {
            w.write_record([
                self.items()[item as usize].as_str(),
                self.raters()[rater as usize].as_str(),
                &self.domain().code(label).to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}
