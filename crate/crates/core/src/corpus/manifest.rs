use std::fs::File;
use std::path::Path;

use super::{Dataset, Sample, Sentiment};
use crate::{Error, Result};

/// Exact column order of a manifest file.
pub const MANIFEST_HEADER: [&str; 6] = [
    "id",
    "image_path",
    "text",
    "image_label",
    "text_label",
    "joint_label",
];

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ManifestFormat {
    Csv,
    Tsv,
}

impl ManifestFormat {
    /// `.tsv` / `.tab` files are tab separated, everything else is CSV.
    pub fn from_path(path: &Path) -> ManifestFormat {
        match path.extension().and_then(|e| e.to_str()) {
            Some(ext) if ext.eq_ignore_ascii_case("tsv") || ext.eq_ignore_ascii_case("tab") => {
                ManifestFormat::Tsv
            }
            _ => ManifestFormat::Csv,
        }
    }

    fn delimiter(self) -> u8 {
        match self {
            ManifestFormat::Csv => b',',
            ManifestFormat::Tsv => b'\t',
        }
    }
}

fn parse_label(cell: &str) -> Result<Option<Sentiment>> {
    if cell.trim().is_empty() {
        Ok(None)
    } else {
        cell.parse().map(Some)
    }
}

/// Reads a manifest into a dataset named `name`.
///
/// Text cells are kept verbatim; empty label and image cells become `None`.
pub fn load_manifest(path: &Path, format: ManifestFormat, name: &str) -> Result<Dataset> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(format.delimiter())
        .has_headers(true)
        .flexible(true)
        .from_reader(file);

    let header = reader.headers()?.clone();
    if header.is_empty() || (header.len() == 1 && header[0].is_empty()) {
        return Err(Error::MalformedRow {
            row: 1,
            message: "missing header".into(),
        });
    }
    let found: Vec<&str> = header.iter().map(str::trim).collect();
    let found: Vec<&str> = found
        .iter()
        .enumerate()
        .map(|(i, h)| if i == 0 { h.trim_start_matches('\u{feff}') } else { h })
        .collect();
    if found != MANIFEST_HEADER {
        return Err(Error::MalformedRow {
            row: 1,
            message: format!(
                "header {:?} does not match {:?}",
                found.join(","),
                MANIFEST_HEADER.join(",")
            ),
        });
    }

    let mut samples = Vec::new();
    for record in reader.records() {
        let record = record?;
        let row = record.position().map(|p| p.line() as usize).unwrap_or(0);
        if record.len() != MANIFEST_HEADER.len() {
            return Err(Error::MalformedRow {
                row,
                message: format!("expected {} fields, found {}", MANIFEST_HEADER.len(), record.len()),
            });
        }
        let id = record[0].trim();
        if id.is_empty() {
            return Err(Error::MalformedRow {
                row,
                message: "empty id".into(),
            });
        }
        let image_ref = match record[1].trim() {
            "" => None,
            p => Some(p.to_string()),
        };
        samples.push(Sample {
            id: id.to_string(),
            image_ref,
            text: record[2].to_string(),
            image_label: parse_label(&record[3])?,
            text_label: parse_label(&record[4])?,
            joint_label: parse_label(&record[5])?,
        });
    }
    Dataset::new(name, samples)
}

fn label_cell(label: Option<Sentiment>) -> &'static str {
    label.map(Sentiment::as_str).unwrap_or("")
}

pub fn write_manifest(d: &Dataset, path: &Path, format: ManifestFormat) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut writer = csv::WriterBuilder::new()
        .delimiter(format.delimiter())
        .from_writer(file);
    writer.write_record(MANIFEST_HEADER)?;
    for s in d.samples() {
        writer.write_record([
            s.id.as_str(),
            s.image_ref.as_deref().unwrap_or(""),
            s.text.as_str(),
            label_cell(s.image_label),
            label_cell(s.text_label),
            label_cell(s.joint_label),
        ])?;
    }
    writer.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write(content: &str, ext: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::Builder::new().suffix(ext).tempfile().unwrap();
        f.write_all(content.as_bytes()).unwrap();
        f
    }

    #[test]
    fn loads_three_rows() {
        let f = write(
            "id,image_path,text,image_label,text_label,joint_label\n\
             a,img/a.jpg,Families belong together,neutral,neutral,neutral\n\
             b,,\"the kid, genin\",negative,,negative\n\
             c,img/c.jpg,the bucket list bora bora,positive,positive,\n",
            ".csv",
        );
        let d = load_manifest(f.path(), ManifestFormat::Csv, "SIMPSoN").unwrap();
        assert_eq!(d.len(), 3);
        assert_eq!(d.ids(), vec!["a", "b", "c"]);
        let b = &d.samples()[1];
        assert_eq!(b.text, "the kid, genin");
        assert_eq!(b.image_ref, None);
        assert_eq!(b.text_label, None);
        assert_eq!(b.joint_label, Some(Sentiment::Negative));
        assert_eq!(d.samples()[2].joint_label, None);
    }

    #[test]
    fn unknown_label_names_value() {
        let f = write(
            "id,image_path,text,image_label,text_label,joint_label\na,,x,pos!,,\n",
            ".csv",
        );
        let err = load_manifest(f.path(), ManifestFormat::Csv, "d").unwrap_err();
        assert!(matches!(&err, Error::UnknownLabel(v) if v == "pos!"), "{err}");
        assert!(err.to_string().contains("unknown label"));
    }

    #[test]
    fn header_only_is_empty() {
        let f = write("id,image_path,text,image_label,text_label,joint_label\n", ".csv");
        let d = load_manifest(f.path(), ManifestFormat::Csv, "d").unwrap();
        assert!(d.is_empty());
    }

    #[test]
    fn malformed_row_reports_line() {
        let f = write(
            "id,image_path,text,image_label,text_label,joint_label\n\
             a,,x,,,\n\
             b,,y\n",
            ".csv",
        );
        let err = load_manifest(f.path(), ManifestFormat::Csv, "d").unwrap_err();
        assert!(matches!(err, Error::MalformedRow { row: 3, .. }), "{err}");
    }

    #[test]
    fn wrong_header_rejected() {
        let f = write("id,text\na,b\n", ".csv");
        assert!(matches!(
            load_manifest(f.path(), ManifestFormat::Csv, "d"),
            Err(Error::MalformedRow { row: 1, .. })
        ));
    }

    #[test]
    fn tsv_round_trip_preserves_order() {
        let f = write(
            "id\timage_path\ttext\timage_label\ttext_label\tjoint_label\n\
             z\t\thello, world\tpositive\tnegative\t\n\
             y\tp.png\tsecond\t\t\tneutral\n",
            ".tsv",
        );
        let fmt = ManifestFormat::from_path(f.path());
        assert_eq!(fmt, ManifestFormat::Tsv);
        let d = load_manifest(f.path(), fmt, "d").unwrap();
        let out = tempfile::Builder::new().suffix(".tsv").tempfile().unwrap();
        write_manifest(&d, out.path(), fmt).unwrap();
        let back = load_manifest(out.path(), fmt, "d").unwrap();
        assert_eq!(back, d);
        assert_eq!(back.ids(), vec!["z", "y"]);
    }
}
