//! Serde adapters storing matrices as row-major nested arrays, and the
//! versioned envelope shared by persisted models.

use std::fs;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Current model file version.
pub const MODEL_VERSION: u32 = 1;

/// `DMatrix<f64>` as `[[row0...], [row1...], ...]`.
///
/// A matrix with zero rows stores its column count separately so that the
/// shape survives the round trip.
pub mod matrix {
    use nalgebra::DMatrix;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    #[derive(Serialize, Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Rows(Vec<Vec<f64>>),
        Empty { rows: Vec<Vec<f64>>, cols: usize },
    }

    pub fn serialize<S: Serializer>(m: &DMatrix<f64>, s: S) -> Result<S::Ok, S::Error> {
        let rows: Vec<Vec<f64>> = m.row_iter().map(|r| r.iter().copied().collect()).collect();
        if m.nrows() == 0 {
            Repr::Empty { rows, cols: m.ncols() }.serialize(s)
        } else {
            Repr::Rows(rows).serialize(s)
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<DMatrix<f64>, D::Error> {
        match Repr::deserialize(d)? {
            Repr::Empty { cols, .. } => Ok(DMatrix::zeros(0, cols)),
            Repr::Rows(rows) => {
                let ncols = rows.first().map_or(0, Vec::len);
                if rows.iter().any(|r| r.len() != ncols) {
                    return Err(serde::de::Error::custom("ragged matrix rows"));
                }
                Ok(DMatrix::from_fn(rows.len(), ncols, |i, j| rows[i][j]))
            }
        }
    }
}

/// `RowDVector<f64>` as a flat array.
pub mod row {
    use nalgebra::RowDVector;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(v: &RowDVector<f64>, s: S) -> Result<S::Ok, S::Error> {
        v.iter().copied().collect::<Vec<_>>().serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<RowDVector<f64>, D::Error> {
        Ok(RowDVector::from_vec(Vec::<f64>::deserialize(d)?))
    }
}

#[derive(Serialize, Deserialize)]
struct Envelope<T> {
    version: u32,
    kind: String,
    #[serde(flatten)]
    body: T,
}

#[derive(Deserialize)]
struct Header {
    version: u32,
    kind: String,
}

pub(crate) fn to_json<T: Serialize>(kind: &str, body: &T) -> Result<String> {
    let envelope = Envelope {
        version: MODEL_VERSION,
        kind: kind.to_string(),
        body,
    };
    Ok(serde_json::to_string_pretty(&envelope)?)
}

pub(crate) fn from_json<T: DeserializeOwned>(kind: &str, text: &str) -> Result<T> {
    let header: Header = serde_json::from_str(text)?;
    if header.version != MODEL_VERSION {
        return Err(Error::UnsupportedVersion(header.version));
    }
    if header.kind != kind {
        return Err(Error::InvalidParameter(format!(
            "model file holds a '{}' model, expected '{kind}'",
            header.kind
        )));
    }
    let envelope: Envelope<T> = serde_json::from_str(text)?;
    Ok(envelope.body)
}

/// Reads only the `kind` tag of a model file.
pub fn model_kind(text: &str) -> Result<String> {
    let header: Header = serde_json::from_str(text)?;
    Ok(header.kind)
}

pub(crate) fn write_file(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text)?;
    Ok(())
}

pub(crate) fn read_file(path: &Path) -> Result<String> {
    Ok(fs::read_to_string(path)?)
}

#[cfg(test)]
mod tests {
    use nalgebra::DMatrix;
    use serde::{Deserialize, Serialize};

    #[derive(Serialize, Deserialize, PartialEq, Debug)]
    struct Holder {
        #[serde(with = "super::matrix")]
        m: DMatrix<f64>,
    }

    #[test]
    fn matrix_is_row_major() {
        let h = Holder {
            m: DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 4.0]),
        };
        let text = serde_json::to_string(&h).unwrap();
        assert_eq!(text, r#"{"m":[[1.0,2.0],[3.0,4.0]]}"#);
        assert_eq!(serde_json::from_str::<Holder>(&text).unwrap(), h);
    }

    #[test]
    fn empty_matrix_keeps_columns() {
        let h = Holder {
            m: DMatrix::zeros(0, 3),
        };
        let text = serde_json::to_string(&h).unwrap();
        assert_eq!(serde_json::from_str::<Holder>(&text).unwrap(), h);
    }

    #[test]
    fn ragged_rows_rejected() {
        assert!(serde_json::from_str::<Holder>(r#"{"m":[[1.0],[2.0,3.0]]}"#).is_err());
    }
}
