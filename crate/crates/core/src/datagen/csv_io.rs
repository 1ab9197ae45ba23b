//! CSV ingestion: header `f0,f1,…,f{d-1},label,domain`.

use std::path::Path;

use crate::datagen::sets::LabeledSet;
use crate::error::{Error, Result};
use crate::numerics::Matrix;

fn csv_err(path: &Path, line: u64, message: impl Into<String>) -> Error {
    Error::Csv {
        path: path.to_path_buf(),
        line,
        message: message.into(),
    }
}

pub fn load_csv(path: impl AsRef<Path>) -> Result<LabeledSet> {
    let path = path.as_ref();
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_path(path)
        .map_err(|e| csv_err(path, 0, e.to_string()))?;
    let header = reader.headers().map_err(|e| csv_err(path, 1, e.to_string()))?.clone();
    let n_cols = header.len();
    if n_cols < 3 {
        return Err(csv_err(path, 1, "header needs at least one feature, label and domain"));
    }
    let d = n_cols - 2;
    for (i, name) in header.iter().enumerate() {
        let expect = match i {
            _ if i < d => format!("f{i}"),
            _ if i == d => "label".to_string(),
            _ => "domain".to_string(),
        };
        if name.trim() != expect {
            return Err(csv_err(path, 1, format!("column {i} is `{name}`, expected `{expect}`")));
        }
    }

    let mut data = Vec::new();
    let mut labels = Vec::new();
    let mut domains = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            csv_err(path, line, e.to_string())
        })?;
        let line = record.position().map_or(0, |p| p.line());
        if record.len() != n_cols {
            return Err(csv_err(
                path,
                line,
                format!("{} fields, expected {n_cols}", record.len()),
            ));
        }
        for (j, field) in record.iter().take(d).enumerate() {
            let v: f64 = field
                .trim()
                .parse()
                .map_err(|_| csv_err(path, line, format!("feature f{j} is not a number: `{field}`")))?;
            if !v.is_finite() {
                return Err(csv_err(path, line, format!("feature f{j} is not finite")));
            }
            data.push(v);
        }
        let label: usize = record[d]
            .trim()
            .parse()
            .map_err(|_| csv_err(path, line, format!("unknown label `{}`", &record[d])))?;
        let domain: usize = record[d + 1]
            .trim()
            .parse()
            .map_err(|_| csv_err(path, line, format!("unknown domain `{}`", &record[d + 1])))?;
        labels.push(label);
        domains.push(domain);
    }
    let n = labels.len();
    let num_classes = labels.iter().max().map_or(0, |m| m + 1);
    LabeledSet::new(Matrix::from_vec(n, d, data)?, labels, domains, num_classes)
}

pub fn write_csv(set: &LabeledSet, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_path(path)
        .map_err(|e| csv_err(path, 0, e.to_string()))?;
    let d = set.input_dim();
    let mut header: Vec<String> = (0..d).map(|i| format!("f{i}")).collect();
    header.push("label".into());
    header.push("domain".into());
    w.write_record(&header).map_err(|e| csv_err(path, 1, e.to_string()))?;
    for i in 0..set.len() {
        let mut row: Vec<String> = set.features.row(i).iter().map(|v| format!("{v:?}")).collect();
        row.push(set.labels[i].to_string());
        row.push(set.domain_ids[i].to_string());
        w.write_record(&row)
            .map_err(|e| csv_err(path, i as u64 + 2, e.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write(contents: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(contents.as_bytes()).unwrap();
        f
    }

    #[test]
    fn three_rows() {
        let f = write("f0,f1,label,domain\n0.5,1.0,0,2\n-1.5,2e-3,1,2\n3,4,2,0\n");
        let set = load_csv(f.path()).unwrap();
        assert_eq!(set.len(), 3);
        assert_eq!(set.num_classes, 3);
        assert_eq!(set.features.row(1), &[-1.5, 0.002]);
        assert_eq!(set.domain_ids, vec![2, 2, 0]);
    }

    #[test]
    fn bad_feature_names_line() {
        let f = write("f0,f1,label,domain\n0.5,1.0,0,2\n0.1,abc,1,0\n");
        let err = load_csv(f.path()).unwrap_err();
        match err {
            Error::Csv { line, message, .. } => {
                assert_eq!(line, 3);
                assert!(message.contains("f1"));
            }
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn width_and_label_errors() {
        let f = write("f0,f1,label,domain\n0.5,1.0,0\n");
        assert!(matches!(load_csv(f.path()), Err(Error::Csv { line: 2, .. })));
        let f = write("f0,label,domain\n0.5,-1,0\n");
        assert!(matches!(load_csv(f.path()), Err(Error::Csv { line: 2, .. })));
        let f = write("x0,label,domain\n0.5,1,0\n");
        assert!(matches!(load_csv(f.path()), Err(Error::Csv { line: 1, .. })));
    }
}
