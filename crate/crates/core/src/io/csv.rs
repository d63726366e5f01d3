//! Comma-separated artifact files: logits, manifest, reliability bins and
//! sweep results. No field ever contains a comma, so no quoting is needed.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::metrics::BinStats;
use crate::scaling::LogitMatrix;
use crate::synth::{DatasetManifest, ManifestRecord};

fn read_lines(path: &Path) -> Result<Vec<(usize, String)>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim_end_matches('\r').to_string()))
        .filter(|(_, l)| !l.is_empty())
        .collect())
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn csv_err(path: &Path, line: usize, reason: impl Into<String>) -> Error {
    Error::Csv {
        path: path.to_path_buf(),
        line,
        reason: reason.into(),
    }
}

fn parse_field<T: FromStr>(path: &Path, line: usize, name: &str, raw: &str) -> Result<T> {
    raw.parse()
        .map_err(|_| csv_err(path, line, format!("{name} {raw:?} is not valid")))
}

pub fn logits_to_string(m: &LogitMatrix) -> String {
    let mut out = String::from("sample_id,label");
    for j in 0..m.num_classes() {
        write!(out, ",z{j}").unwrap();
    }
    out.push('\n');
    for i in 0..m.len() {
        write!(out, "{},{}", m.sample_ids()[i], m.labels()[i]).unwrap();
        for z in m.row(i) {
            write!(out, ",{z}").unwrap();
        }
        out.push('\n');
    }
    out
}

pub fn write_logits(m: &LogitMatrix, path: &Path) -> Result<()> {
    write_text(path, &logits_to_string(m))
}

pub fn read_logits(path: &Path) -> Result<LogitMatrix> {
    let lines = read_lines(path)?;
    let (hline, header) = lines.first().ok_or_else(|| csv_err(path, 1, "empty logits file"))?;
    let cols: Vec<&str> = header.split(',').collect();
    if cols.len() < 4 || cols[0] != "sample_id" || cols[1] != "label" {
        return Err(csv_err(path, *hline, "header must be sample_id,label,z0,...,z{k-1} with k >= 2"));
    }
    let k = cols.len() - 2;
    for (j, c) in cols[2..].iter().enumerate() {
        if *c != format!("z{j}") {
            return Err(csv_err(path, *hline, format!("column {} should be z{j}, found {c:?}", j + 2)));
        }
    }
    let mut ids = Vec::new();
    let mut labels = Vec::new();
    let mut logits = Vec::new();
    for (line, text) in &lines[1..] {
        let fields: Vec<&str> = text.split(',').collect();
        if fields.len() != k + 2 {
            return Err(csv_err(
                path,
                *line,
                format!("ragged row: {} logits, expected {k}", fields.len().saturating_sub(2)),
            ));
        }
        let label: usize = parse_field(path, *line, "label", fields[1])?;
        if label >= k {
            return Err(csv_err(path, *line, format!("label {label} outside [0, {k})")));
        }
        for raw in &fields[2..] {
            let z: f64 = parse_field(path, *line, "logit", raw)?;
            if !z.is_finite() {
                return Err(csv_err(path, *line, format!("non-finite logit {raw:?}")));
            }
            logits.push(z);
        }
        ids.push(fields[0].to_string());
        labels.push(label);
    }
    LogitMatrix::new(k, logits, labels, ids)
}

pub const MANIFEST_HEADER: &str =
    "sample_id,class,geometry_variant,material_level,contact_angle,split,fold,group,blur_sigma,noise_sigma,path";

fn opt<T: ToString>(v: &Option<T>) -> String {
    v.as_ref().map(ToString::to_string).unwrap_or_default()
}

pub fn manifest_to_string(m: &DatasetManifest) -> String {
    let mut out = format!("{MANIFEST_HEADER}\n");
    for r in &m.records {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{}",
            r.sample_id,
            r.class.code(),
            r.geometry_variant,
            r.material_level,
            r.contact_angle.degrees(),
            opt(&r.split.map(|s| s.as_str())),
            opt(&r.fold),
            opt(&r.group.map(|g| g.code())),
            opt(&r.blur_sigma),
            opt(&r.noise_sigma),
            r.path
        )
        .unwrap();
    }
    out
}

pub fn write_manifest(m: &DatasetManifest, path: &Path) -> Result<()> {
    write_text(path, &manifest_to_string(m))
}

pub fn read_manifest(path: &Path) -> Result<DatasetManifest> {
    let lines = read_lines(path)?;
    match lines.first() {
        Some((_, h)) if h == MANIFEST_HEADER => {}
        Some((l, _)) => return Err(csv_err(path, *l, format!("manifest header must be {MANIFEST_HEADER}"))),
        None => return Err(csv_err(path, 1, "empty manifest")),
    }
    let mut records = Vec::with_capacity(lines.len() - 1);
    for (line, text) in &lines[1..] {
        let f: Vec<&str> = text.split(',').collect();
        if f.len() != 11 {
            return Err(csv_err(path, *line, format!("expected 11 fields, found {}", f.len())));
        }
        let optional = |i: usize| (!f[i].is_empty()).then_some(f[i]);
        let bad = |name: &str, raw: &str| csv_err(path, *line, format!("{name} {raw:?} is not valid"));
        records.push(ManifestRecord {
            sample_id: f[0].to_string(),
            class: f[1].parse().map_err(|_| bad("class", f[1]))?,
            geometry_variant: parse_field(path, *line, "geometry_variant", f[2])?,
            material_level: parse_field(path, *line, "material_level", f[3])?,
            contact_angle: f[4].parse().map_err(|_| bad("contact_angle", f[4]))?,
            split: optional(5)
                .map(|s| s.parse().map_err(|_| bad("split", s)))
                .transpose()?,
            fold: optional(6)
                .map(|s| parse_field(path, *line, "fold", s))
                .transpose()?,
            group: optional(7)
                .map(|s| s.parse().map_err(|_| bad("group", s)))
                .transpose()?,
            blur_sigma: optional(8)
                .map(|s| parse_field(path, *line, "blur_sigma", s))
                .transpose()?,
            noise_sigma: optional(9)
                .map(|s| parse_field(path, *line, "noise_sigma", s))
                .transpose()?,
            path: f[10].to_string(),
        });
    }
    Ok(DatasetManifest { records })
}

pub fn reliability_to_string(bins: &[BinStats]) -> String {
    let mut out = String::from("bin_index,lower,upper,count,accuracy,confidence\n");
    for b in bins {
        writeln!(
            out,
            "{},{:.6},{:.6},{},{:.6},{:.6}",
            b.bin_index, b.lower, b.upper, b.count, b.accuracy, b.confidence
        )
        .unwrap();
    }
    out
}

pub fn write_reliability(bins: &[BinStats], path: &Path) -> Result<()> {
    write_text(path, &reliability_to_string(bins))
}

/// One evaluated perturbation level of a robustness sweep.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct SweepRow {
    pub perturbation: String,
    pub sigma: f64,
    pub accuracy: f64,
    pub avg_confidence: f64,
    pub ece: f64,
}

pub fn sweep_to_string(rows: &[SweepRow]) -> String {
    let mut out = String::from("perturbation,sigma,accuracy,avg_confidence,ece\n");
    for r in rows {
        writeln!(out, "{},{},{},{},{}", r.perturbation, r.sigma, r.accuracy, r.avg_confidence, r.ece).unwrap();
    }
    out
}

pub fn write_sweep(rows: &[SweepRow], path: &Path) -> Result<()> {
    write_text(path, &sweep_to_string(rows))
}

pub fn read_sweep(path: &Path) -> Result<Vec<SweepRow>> {
    let lines = read_lines(path)?;
    let mut rows = Vec::new();
    for (line, text) in lines.iter().skip(1) {
        let f: Vec<&str> = text.split(',').collect();
        if f.len() != 5 {
            return Err(csv_err(path, *line, format!("expected 5 fields, found {}", f.len())));
        }
        rows.push(SweepRow {
            perturbation: f[0].to_string(),
            sigma: parse_field(path, *line, "sigma", f[1])?,
            accuracy: parse_field(path, *line, "accuracy", f[2])?,
            avg_confidence: parse_field(path, *line, "avg_confidence", f[3])?,
            ece: parse_field(path, *line, "ece", f[4])?,
        });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use tempfile::tempdir;

    #[test]
    fn logits_header_defines_k() {
        let dir = tempdir().unwrap();
        let p = dir.path().join("l.csv");
        fs::write(&p, "sample_id,label,z0,z1,z2\na,2,0.5,-1,3e-3\nb,0,1,2,3\n").unwrap();
        let m = read_logits(&p).unwrap();
        assert_eq!(m.num_classes(), 3);
        assert_eq!(m.len(), 2);
        assert_eq!(m.row(0), &[0.5, -1.0, 0.003]);
        assert_eq!(m.sample_ids(), &["a".to_string(), "b".to_string()]);
    }

    #[test]
    fn ragged_row_names_line() {
        let dir = tempdir().unwrap();
        let p = dir.path().join("l.csv");
        fs::write(&p, "sample_id,label,z0,z1,z2,z3\na,0,1,2,3,4\nb,1,1,2,3\n").unwrap();
        match read_logits(&p) {
            Err(Error::Csv { line, reason, .. }) => {
                assert_eq!(line, 3);
                assert!(reason.contains("ragged"), "{reason}");
            }
            other => panic!("expected ragged-row error, got {other:?}"),
        }
    }

    #[test]
    fn logits_errors() {
        let dir = tempdir().unwrap();
        let p = dir.path().join("l.csv");
        fs::write(&p, "sample_id,label,z0,z1\na,0,x,2\n").unwrap();
        assert!(matches!(read_logits(&p), Err(Error::Csv { line: 2, .. })));
        fs::write(&p, "sample_id,label,z0,z1\na,2,1,2\n").unwrap();
        assert!(matches!(read_logits(&p), Err(Error::Csv { line: 2, .. })));
        fs::write(&p, "id,label,z0,z1\n").unwrap();
        assert!(matches!(read_logits(&p), Err(Error::Csv { line: 1, .. })));
    }

    #[test]
    fn reliability_rows_use_six_decimals() {
        let bins = vec![BinStats {
            bin_index: 3,
            lower: 0.3,
            upper: 0.4,
            count: 2,
            correct: 1,
            confidence_sum: 0.7,
            accuracy: 0.5,
            confidence: 0.35,
        }];
        assert_eq!(
            reliability_to_string(&bins),
            "bin_index,lower,upper,count,accuracy,confidence\n3,0.300000,0.400000,2,0.500000,0.350000\n"
        );
    }
}
