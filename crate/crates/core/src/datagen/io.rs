use std::collections::BTreeMap;
use std::io::{Read, Write};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::{GenConfig, GroundTruth, LambdaScheme, MixingMode, SegmentedDataset, SourceFamily};
use crate::error::{Error, Result};

/// Write `seg,x1,…,xd` with one row per observation. Floats use Rust's
/// shortest round-trip formatting, so reading back is exact.
pub fn write_csv<W: Write>(data: &SegmentedDataset, out: W) -> Result<()> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out);
    let mut header = vec!["seg".to_string()];
    header.extend((1..=data.dim()).map(|j| format!("x{j}")));
    w.write_record(&header).map_err(csv_err)?;
    let mut rec = Vec::with_capacity(data.dim() + 1);
    for i in 0..data.n() {
        rec.clear();
        rec.push(data.labels()[i].to_string());
        rec.extend((0..data.dim()).map(|j| data.x()[(i, j)].to_string()));
        w.write_record(&rec).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

fn csv_err(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::Format(format!("{other:?}")),
    }
}

/// Read a dataset whose first column holds integer segment labels.
///
/// Labels may be any integers; they are mapped to `0..E` in increasing
/// order.
pub fn read_csv<R: Read>(input: R) -> Result<SegmentedDataset> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(input);
    let width = rdr.headers().map_err(csv_err)?.len();
    if width < 2 {
        return Err(Error::Format("expected a segment column followed by at least one variable".into()));
    }
    let mut raw_labels = Vec::new();
    let mut values = Vec::new();
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(csv_err)?;
        if rec.len() != width {
            return Err(Error::Format(format!("row {} has {} fields, expected {width}", line + 1, rec.len())));
        }
        let label: i64 =
            rec[0].parse().map_err(|_| Error::Format(format!("row {}: segment label `{}` is not an integer", line + 1, &rec[0])))?;
        raw_labels.push(label);
        for field in rec.iter().skip(1) {
            let v: f64 = field.parse().map_err(|_| Error::Format(format!("row {}: `{field}` is not a number", line + 1)))?;
            values.push(v);
        }
    }
    if raw_labels.is_empty() {
        return Err(Error::Format("no data rows".into()));
    }
    let mut codes = BTreeMap::new();
    for &l in &raw_labels {
        codes.entry(l).or_insert(0usize);
    }
    for (k, v) in codes.values_mut().enumerate() {
        *v = k;
    }
    let labels = raw_labels.iter().map(|l| codes[l]).collect();
    let x = DMatrix::from_row_slice(raw_labels.len(), width - 1, &values);
    SegmentedDataset::new(x, labels).map_err(|e| Error::Format(e.to_string()))
}

/// Ground-truth sidecar written next to generated datasets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthFile {
    pub dag: Vec<Vec<bool>>,
    pub depth: usize,
    pub seed: u64,
    pub family: SourceFamily,
    pub scheme: LambdaScheme,
    pub mode: MixingMode,
    /// `E × d` per-segment source parameters.
    pub lambdas: Vec<Vec<f64>>,
    /// Row-major mixing layers, first layer first.
    pub mixing_layers: Vec<Vec<Vec<f64>>>,
}

impl TruthFile {
    pub fn new(config: &GenConfig, truth: &GroundTruth) -> Self {
        let rows = |m: &DMatrix<f64>| (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect();
        Self {
            dag: truth.dag.clone(),
            depth: truth.depth,
            seed: config.seed,
            family: config.family,
            scheme: config.scheme,
            mode: config.mode,
            lambdas: rows(&truth.sources.lambdas),
            mixing_layers: truth.network.layers.iter().map(rows).collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datagen::generate;

    #[test]
    fn round_trip_is_exact() {
        let cfg = GenConfig { n_segments: 3, n_per_segment: 5, depth: 2, ..Default::default() };
        let (data, _) = generate(&cfg).unwrap();
        let mut buf = Vec::new();
        write_csv(&data, &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("seg,x1,x2\n"));
        assert_eq!(text.lines().count(), 16);
        assert!(!text.contains('\r'));
        assert_eq!(read_csv(&buf[..]).unwrap(), data);
    }

    #[test]
    fn labels_are_remapped() {
        let text = "seg,a\n7,1.0\n7,2.0\n-1,3.0\n-1,4.0\n";
        let d = read_csv(text.as_bytes()).unwrap();
        assert_eq!(d.labels(), &[1, 1, 0, 0]);
    }

    #[test]
    fn malformed_input() {
        assert!(matches!(read_csv("seg,x1\n0,abc\n0,1\n".as_bytes()), Err(Error::Format(_))));
        assert!(matches!(read_csv("seg,x1\n0,1\n0\n".as_bytes()), Err(Error::Format(_))));
        assert!(matches!(read_csv("seg,x1\n".as_bytes()), Err(Error::Format(_))));
        assert!(matches!(read_csv("seg\n0\n".as_bytes()), Err(Error::Format(_))));
        assert!(matches!(read_csv("seg,x1\n0.5,1\n0.5,2\n".as_bytes()), Err(Error::Format(_))));
    }
}
