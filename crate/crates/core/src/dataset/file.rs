//! `RBDS1` dataset container.
//!
//! Layout: the 6 bytes `RBDS1\n`, then one UTF-8 JSON object:
//!
//! ```text
//! {"format_version":1,
//!  "domain":[0,1],
//!  "items":["i1",...],            // sorted
//!  "raters":["r1",...],           // sorted
//!  "ratings":[[item,rater,code],...],   // indices into items/raters, label code
//!  "batches":null | [{"items":[...],"raters":[...]}, ...]}
//! ```
//!
//! Ratings are written sorted by (item, rater), so encoding is canonical.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{AnnotationDataset, Batch, DatasetError, LabelDomain, Rating};

pub const MAGIC: &[u8] = b"RBDS1\n";
const FORMAT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Body {
    format_version: u32,
    domain: LabelDomain,
    items: Vec<String>,
    raters: Vec<String>,
    ratings: Vec<(u32, u32, u32)>,
    batches: Option<Vec<Batch>>,
}

pub(super) fn encode_body(d: &AnnotationDataset) -> String {
    let body = Body {
        format_version: FORMAT_VERSION,
        domain: d.domain().clone(),
        items: d.items().to_vec(),
        raters: d.raters().to_vec(),
        ratings: d
            .ratings()
            .iter()
            .map(|r| (r.item, r.rater, d.domain().code(r.label)))
            .collect(),
        batches: d.batch_map().map(|b| b.batches().to_vec()),
    };
    serde_json::to_string(&body).expect("dataset body serializes")
}

impl AnnotationDataset {
    pub fn write_to<W: Write>(&self, mut out: W) -> Result<(), DatasetError> {
        out.write_all(MAGIC)?;
        out.write_all(encode_body(self).as_bytes())?;
        out.write_all(b"\n")?;
        Ok(())
    }

    pub fn read_from<R: Read>(mut input: R) -> Result<Self, DatasetError> {
        let mut bytes = Vec::new();
        input.read_to_end(&mut bytes)?;
        let rest = bytes
            .strip_prefix(MAGIC)
            .ok_or_else(|| DatasetError::Format("missing RBDS1 header".into()))?;
        let body: Body =
            serde_json::from_slice(rest).map_err(|e| DatasetError::Format(e.to_string()))?;
        if body.format_version != FORMAT_VERSION {
            return Err(DatasetError::Format(format!(
                "unsupported format version {}",
                body.format_version
            )));
        }
        let mut ratings = Vec::with_capacity(body.ratings.len());
        for (item, rater, code) in body.ratings {
            let label = body.domain.class_of(code).ok_or_else(|| DatasetError::UnknownLabel {
                line: 0,
                label: code.to_string(),
            })?;
            ratings.push(Rating { item, rater, label });
        }
        let d = AnnotationDataset::from_indexed(body.items, body.raters, body.domain, ratings)?;
        match body.batches {
            Some(b) => d.with_batch_map(b),
            None => Ok(d),
        }
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), DatasetError> {
        let f = std::fs::File::create(path)?;
        let mut w = std::io::BufWriter::new(f);
        self.write_to(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, DatasetError> {
        let f = std::fs::File::open(path)?;
        Self::read_from(std::io::BufReader::new(f))
    }
}
