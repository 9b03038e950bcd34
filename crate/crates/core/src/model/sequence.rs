use std::io::{Read, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{LdsError, Result};

/// An observation sequence: `T` rows of `d_out` values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SequenceData {
    #[serde(with = "matrix_rows")]
    pub y: DMatrix<f64>,
    pub seed: Option<u64>,
}

impl SequenceData {
    pub fn new(y: DMatrix<f64>) -> Result<Self> {
        if y.nrows() == 0 || y.ncols() == 0 {
            return Err(LdsError::InsufficientData("sequence must be non-empty".into()));
        }
        if !y.iter().all(|v| v.is_finite()) {
            return Err(LdsError::Invalid("sequence contains non-finite values".into()));
        }
        Ok(Self { y, seed: None })
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = Some(seed);
        self
    }

    /// Builds a single-column sequence.
    pub fn from_scalars(values: &[f64]) -> Result<Self> {
        Self::new(DMatrix::from_column_slice(values.len(), 1, values))
    }

    /// Sequence length `T`.
    pub fn len(&self) -> usize {
        self.y.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.y.nrows() == 0
    }

    pub fn d_out(&self) -> usize {
        self.y.ncols()
    }

    /// Observation at time `t` (0-based) as a column vector.
    pub fn obs(&self, t: usize) -> DVector<f64> {
        self.y.row(t).transpose()
    }

    pub fn observations(&self) -> Vec<DVector<f64>> {
        (0..self.len()).map(|t| self.obs(t)).collect()
    }

    /// Fitting requires at least two time steps.
    pub fn require_fittable(&self) -> Result<()> {
        if self.len() < 2 {
            return Err(LdsError::InsufficientData(format!(
                "fitting needs T >= 2, got {}",
                self.len()
            )));
        }
        Ok(())
    }

    /// Writes headerless CSV, one row per time step, 17 significant digits.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(writer);
        for row in self.y.row_iter() {
            w.write_record(row.iter().map(|v| format!("{v:.16e}")))?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut r = csv::ReaderBuilder::new()
            .has_headers(false)
            .trim(csv::Trim::All)
            .from_reader(reader);
        let mut values = Vec::new();
        let mut width = None;
        for (i, rec) in r.records().enumerate() {
            let rec = rec?;
            if rec.iter().all(str::is_empty) {
                continue;
            }
            match width {
                None => width = Some(rec.len()),
                Some(w) if w != rec.len() => {
                    return Err(LdsError::Parse(format!(
                        "row {} has {} columns, expected {w}",
                        i + 1,
                        rec.len()
                    )))
                }
                _ => {}
            }
            for field in rec.iter() {
                let v: f64 = field
                    .parse()
                    .map_err(|_| LdsError::Parse(format!("row {}: bad number {field:?}", i + 1)))?;
                values.push(v);
            }
        }
        let width = width.ok_or_else(|| LdsError::InsufficientData("empty CSV".into()))?;
        let rows = values.len() / width;
        Self::new(DMatrix::from_row_slice(rows, width, &values))
    }

    pub fn write_csv_file(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path)?;
        self.write_csv(std::io::BufWriter::new(file))
    }

    pub fn read_csv_file(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        Self::read_csv(std::io::BufReader::new(file))
    }
}

/// Range of candidate latent dimensions, inclusive on both ends.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelOrderBounds {
    d_min: usize,
    d_max: usize,
}

impl ModelOrderBounds {
    pub fn new(d_min: usize, d_max: usize) -> Result<Self> {
        if d_min < 1 || d_min > d_max {
            return Err(LdsError::Invalid(format!(
                "order bounds must satisfy 1 <= d_min <= d_max, got [{d_min}, {d_max}]"
            )));
        }
        Ok(Self { d_min, d_max })
    }

    pub fn d_min(&self) -> usize {
        self.d_min
    }

    pub fn d_max(&self) -> usize {
        self.d_max
    }

    pub fn orders(&self) -> std::ops::RangeInclusive<usize> {
        self.d_min..=self.d_max
    }
}

pub(crate) mod matrix_rows {
    use nalgebra::DMatrix;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(m: &DMatrix<f64>, s: S) -> Result<S::Ok, S::Error> {
        crate::linalg::to_rows(m).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<DMatrix<f64>, D::Error> {
        let rows = Vec::<Vec<f64>>::deserialize(d)?;
        crate::linalg::from_rows(&rows, "matrix").map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn bounds_validation() {
        assert!(ModelOrderBounds::new(0, 3).is_err());
        assert!(ModelOrderBounds::new(4, 3).is_err());
        let b = ModelOrderBounds::new(2, 2).unwrap();
        assert_eq!(b.orders().collect::<Vec<_>>(), vec![2]);
    }

    #[test]
    fn rejects_non_finite() {
        assert!(SequenceData::from_scalars(&[1.0, f64::NAN]).is_err());
        assert!(SequenceData::from_scalars(&[]).is_err());
    }

    #[test]
    fn csv_is_headerless_with_17_digits() {
        let s = SequenceData::from_scalars(&[0.1, -2.5]).unwrap();
        let mut buf = Vec::new();
        s.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text, "1.0000000000000001e-1\n-2.5000000000000000e0\n");
    }

    #[test]
    fn csv_rejects_ragged_rows() {
        let err = SequenceData::read_csv("1,2\n3\n".as_bytes()).unwrap_err();
        assert!(matches!(err, LdsError::Parse(_) | LdsError::Dimension(_)));
    }

    proptest! {
        #[test]
        fn csv_round_trip_is_exact(
            rows in 1usize..20,
            cols in 1usize..4,
            seed in prop::collection::vec(-1e6f64..1e6, 80)
        ) {
            let vals: Vec<f64> = (0..rows * cols).map(|i| seed[i % seed.len()] / (i as f64 + 0.37)).collect();
            let s = SequenceData::new(DMatrix::from_row_slice(rows, cols, &vals)).unwrap();
            let mut buf = Vec::new();
            s.write_csv(&mut buf).unwrap();
            let back = SequenceData::read_csv(buf.as_slice()).unwrap();
            prop_assert_eq!(back.y, s.y);
        }
    }
}
