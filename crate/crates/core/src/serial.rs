//! Plain-data records used by the JSON dataset and report files.
//!
//! Complex numbers are `[re, im]` pairs of IEEE-754 doubles; matrices are
//! stored column-major.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{CMat, C64};

pub type ComplexPair = [f64; 2];

pub fn pair(z: C64) -> ComplexPair {
    [z.re, z.im]
}

pub fn complex(p: ComplexPair) -> C64 {
    C64::new(p[0], p[1])
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MatrixRecord {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<ComplexPair>,
}

impl MatrixRecord {
    pub fn to_matrix(&self) -> Result<CMat> {
        if self.data.len() != self.rows * self.cols {
            return Err(Error::Shape(format!(
                "matrix record declares {}x{} but holds {} entries",
                self.rows,
                self.cols,
                self.data.len()
            )));
        }
        Ok(CMat::from_iterator(
            self.rows,
            self.cols,
            self.data.iter().map(|&p| complex(p)),
        ))
    }
}

impl From<&CMat> for MatrixRecord {
    fn from(m: &CMat) -> Self {
        Self {
            rows: m.nrows(),
            cols: m.ncols(),
            data: m.iter().map(|&z| pair(z)).collect(),
        }
    }
}

pub fn serialize_opt_matrix<S: serde::Serializer>(m: &Option<CMat>, s: S) -> std::result::Result<S::Ok, S::Error> {
    m.as_ref().map(MatrixRecord::from).serialize(s)
}

/// Byte offset of a 1-based (line, column) position inside `text`.
pub fn byte_offset(text: &str, line: usize, column: usize) -> usize {
    if line == 0 {
        return 0;
    }
    let line_start: usize = text
        .split_inclusive('\n')
        .take(line - 1)
        .map(str::len)
        .sum();
    (line_start + column.saturating_sub(1)).min(text.len())
}

pub fn json_error(text: &str, err: &serde_json::Error) -> Error {
    Error::Parse {
        offset: byte_offset(text, err.line(), err.column()),
        message: err.to_string(),
    }
}
