//! Nodule manifests, consensus labels, cross-validation folds and synthetic
//! phantom generation.

mod folds;
mod synth;

pub use folds::{balance, balance_indices, make_folds, stratified_folds, FoldPlan, DEFAULT_FOLDS};
pub use synth::{latent_malignancy, render_phantom, synth_generate, Phantom, SynthConfig, SynthOutput, RATERS};

use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Attribute names in their fixed vector order.
pub const ATTRIBUTE_NAMES: [&str; 6] = [
    "calcification",
    "spiculation",
    "lobulation",
    "margin",
    "sphericity",
    "texture",
];
pub const MAX_RATINGS: usize = 4;
pub const MIN_RATERS: usize = 3;
pub const MANIFEST_HEADER: [&str; 15] = [
    "id",
    "volume_path",
    "cx",
    "cy",
    "cz",
    "r1",
    "r2",
    "r3",
    "r4",
    "calcification",
    "spiculation",
    "lobulation",
    "margin",
    "sphericity",
    "texture",
];

/// One manifest row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoduleRecord {
    pub id: String,
    /// As written in the manifest; relative paths are resolved against the
    /// manifest's directory by [`resolve_volume_path`].
    pub volume_path: String,
    pub center: [usize; 3],
    pub ratings: Vec<u8>,
    pub attributes: [Option<f64>; 6],
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Class {
    Benign,
    Malignant,
}

impl Class {
    pub fn index(self) -> usize {
        match self {
            Class::Benign => 0,
            Class::Malignant => 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledSample {
    pub record: NoduleRecord,
    pub consensus_score: f64,
    pub class: Class,
    pub attributes: Option<[f64; 6]>,
    pub features: Option<Vec<f64>>,
}

impl LabeledSample {
    pub fn id(&self) -> &str {
        &self.record.id
    }
}

/// Records removed by [`consensus_label`].
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExclusionCounts {
    pub too_few_raters: usize,
    pub neutral_score: usize,
}

fn parse_cell<V: std::str::FromStr>(cell: &str, name: &str, line: u64) -> Result<V> {
    cell.trim().parse().map_err(|_| Error::Parse {
        line,
        reason: format!("cannot parse {name} from {cell:?}"),
    })
}

pub fn read_manifest(reader: impl Read) -> Result<Vec<NoduleRecord>> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let header = rdr.headers().map_err(|e| Error::Parse {
        line: 1,
        reason: e.to_string(),
    })?;
    let header: Vec<&str> = header.iter().map(str::trim).collect();
    if header != MANIFEST_HEADER {
        return Err(Error::Parse {
            line: 1,
            reason: format!("expected header {}", MANIFEST_HEADER.join(",")),
        });
    }
    let mut out = Vec::new();
    for row in rdr.records() {
        let row = row.map_err(|e| Error::Parse {
            line: e.position().map_or(0, |p| p.line()),
            reason: e.to_string(),
        })?;
        let line = row.position().map_or(0, |p| p.line());
        let id = row[0].trim().to_string();
        if id.is_empty() {
            return Err(Error::Parse {
                line,
                reason: "empty id".into(),
            });
        }
        let center = [
            parse_cell(&row[2], "cx", line)?,
            parse_cell(&row[3], "cy", line)?,
            parse_cell(&row[4], "cz", line)?,
        ];
        let mut ratings = Vec::new();
        for (k, cell) in row.iter().skip(5).take(MAX_RATINGS).enumerate() {
            if cell.trim().is_empty() {
                continue;
            }
            let r: u8 = parse_cell(cell, "rating", line)?;
            if !(1..=5).contains(&r) {
                return Err(Error::Parse {
                    line,
                    reason: format!("rating r{} = {r} outside [1, 5]", k + 1),
                });
            }
            ratings.push(r);
        }
        let mut attributes = [None; 6];
        for (k, cell) in row.iter().skip(9).enumerate() {
            if cell.trim().is_empty() {
                continue;
            }
            let v: f64 = parse_cell(cell, ATTRIBUTE_NAMES[k], line)?;
            if !(1.0..=5.0).contains(&v) {
                return Err(Error::Parse {
                    line,
                    reason: format!("{} = {v} outside [1, 5]", ATTRIBUTE_NAMES[k]),
                });
            }
            attributes[k] = Some(v);
        }
        out.push(NoduleRecord {
            id,
            volume_path: row[1].trim().to_string(),
            center,
            ratings,
            attributes,
        });
    }
    Ok(out)
}

pub fn load_manifest(path: impl AsRef<Path>) -> Result<Vec<NoduleRecord>> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_manifest(std::io::BufReader::new(file))
}

pub fn write_manifest(records: &[NoduleRecord], writer: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let csv_err = |e: csv::Error| Error::invalid("manifest", e.to_string());
    w.write_record(MANIFEST_HEADER).map_err(csv_err)?;
    for r in records {
        let mut row = vec![
            r.id.clone(),
            r.volume_path.clone(),
            r.center[0].to_string(),
            r.center[1].to_string(),
            r.center[2].to_string(),
        ];
        for k in 0..MAX_RATINGS {
            row.push(r.ratings.get(k).map_or(String::new(), u8::to_string));
        }
        for a in &r.attributes {
            row.push(a.map_or(String::new(), |v| v.to_string()));
        }
        w.write_record(&row).map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::invalid("manifest", e.to_string()))
}

pub fn save_manifest(records: &[NoduleRecord], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write_manifest(records, std::io::BufWriter::new(file))
}

/// Volume path of a record, relative paths taken from the manifest's directory.
pub fn resolve_volume_path(manifest: &Path, record: &NoduleRecord) -> PathBuf {
    let p = Path::new(&record.volume_path);
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        manifest.parent().unwrap_or(Path::new(".")).join(p)
    }
}

/// Whether a record yields a label: at least three ratings and a mean that is
/// not exactly 3 (checked on the integer sum).
pub fn survives_exclusion(ratings: &[u8]) -> bool {
    let sum: u32 = ratings.iter().map(|&r| u32::from(r)).sum();
    ratings.len() >= MIN_RATERS && sum != 3 * ratings.len() as u32
}

/// Consensus labels for every record that passes the rater-count and
/// neutral-score exclusions.
pub fn consensus_label(records: &[NoduleRecord]) -> (Vec<LabeledSample>, ExclusionCounts) {
    let mut counts = ExclusionCounts::default();
    let mut out = Vec::new();
    for r in records {
        if r.ratings.len() < MIN_RATERS {
            counts.too_few_raters += 1;
            continue;
        }
        if !survives_exclusion(&r.ratings) {
            counts.neutral_score += 1;
            continue;
        }
        let sum: u32 = r.ratings.iter().map(|&v| u32::from(v)).sum();
        let n = r.ratings.len() as u32;
        let class = if sum < 3 * n { Class::Benign } else { Class::Malignant };
        let attributes = attribute_array(&r.attributes);
        out.push(LabeledSample {
            record: r.clone(),
            consensus_score: f64::from(sum) / f64::from(n),
            class,
            attributes,
            features: None,
        });
    }
    (out, counts)
}

fn attribute_array(a: &[Option<f64>; 6]) -> Option<[f64; 6]> {
    let mut out = [0.0; 6];
    for (o, v) in out.iter_mut().zip(a) {
        *o = (*v)?;
    }
    Some(out)
}

/// The six attributes in fixed order; errors name the first missing one.
pub fn attribute_vector(record: &NoduleRecord) -> Result<[f64; 6]> {
    let mut out = [0.0; 6];
    for (k, v) in record.attributes.iter().enumerate() {
        out[k] = v.ok_or(Error::MissingAttribute(ATTRIBUTE_NAMES[k]))?;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    const HEADER: &str =
        "id,volume_path,cx,cy,cz,r1,r2,r3,r4,calcification,spiculation,lobulation,margin,sphericity,texture\n";

    fn parse(body: &str) -> Result<Vec<NoduleRecord>> {
        read_manifest(format!("{HEADER}{body}").as_bytes())
    }

    fn rec(ratings: &[u8]) -> NoduleRecord {
        NoduleRecord {
            id: "n".into(),
            volume_path: "v.rvol".into(),
            center: [0, 0, 0],
            ratings: ratings.to_vec(),
            attributes: [Some(3.0); 6],
        }
    }

    #[test]
    fn blank_ratings_skipped() {
        let r = parse("a,v.rvol,1,2,3,4,5,,5,1,2,3,4,5,1\n").unwrap();
        assert_eq!(r[0].ratings, vec![4, 5, 5]);
        assert_eq!(r[0].center, [1, 2, 3]);
        assert_eq!(r[0].attributes[1], Some(2.0));
    }

    #[test]
    fn rating_out_of_range_names_line() {
        let e = parse("a,v,1,2,3,4,4,4,,,,,,,\nb,v,1,2,3,7,4,4,,,,,,,\n").unwrap_err();
        match e {
            Error::Parse { line, reason } => {
                assert_eq!(line, 3);
                assert!(reason.contains('7'));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn header_only_is_empty() {
        assert!(parse("").unwrap().is_empty());
        assert!(read_manifest("id,path\n".as_bytes()).is_err());
    }

    #[test]
    fn manifest_roundtrip() {
        let mut a = rec(&[1, 2, 5]);
        a.attributes[5] = None;
        a.attributes[0] = Some(2.75);
        let mut buf = Vec::new();
        write_manifest(&[a.clone(), rec(&[3, 3, 3, 4])], &mut buf).unwrap();
        let back = read_manifest(buf.as_slice()).unwrap();
        assert_eq!(back, vec![a, rec(&[3, 3, 3, 4])]);
    }

    #[test]
    fn consensus_rules() {
        let (s, c) = consensus_label(&[rec(&[2, 2, 3]), rec(&[3, 3, 3]), rec(&[5, 4]), rec(&[4, 3, 3, 2])]);
        assert_eq!(s.len(), 1);
        assert!((s[0].consensus_score - 7.0 / 3.0).abs() < 1e-15);
        assert_eq!(s[0].class, Class::Benign);
        assert_eq!(
            c,
            ExclusionCounts {
                too_few_raters: 1,
                neutral_score: 2
            }
        );
        let (s, _) = consensus_label(&[rec(&[3, 3, 4])]);
        assert_eq!(s[0].class, Class::Malignant);
    }

    #[test]
    fn attribute_order_and_missing() {
        let mut r = rec(&[1, 1, 1]);
        assert_eq!(attribute_vector(&r).unwrap(), [3.0; 6]);
        r.attributes[1] = Some(4.5);
        assert_eq!(attribute_vector(&r).unwrap()[1], 4.5);
        r.attributes[5] = None;
        assert!(matches!(attribute_vector(&r), Err(Error::MissingAttribute("texture"))));
    }

    #[test]
    fn relative_volume_paths() {
        let r = rec(&[1, 1, 1]);
        assert_eq!(
            resolve_volume_path(Path::new("/d/m.csv"), &r),
            PathBuf::from("/d/v.rvol")
        );
    }
}
