use std::io::{Read, Write};

use ndarray::{Array2, ArrayView1};

use super::EmbeddingError;

const MAGIC: &[u8; 8] = b"VGEMB\0\0\x01";

/// Code-token embedding table; row `i` is the vector of vocab index `i`.
///
/// Values are kept at single precision so the on-disk form round-trips.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    matrix: Array2<f64>,
}

impl EmbeddingTable {
    pub fn new(matrix: Array2<f64>) -> Self {
        EmbeddingTable { matrix }
    }

    pub fn matrix(&self) -> &Array2<f64> {
        &self.matrix
    }

    pub fn matrix_mut(&mut self) -> &mut Array2<f64> {
        &mut self.matrix
    }

    pub fn len(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.matrix.nrows() == 0
    }

    pub fn d_code(&self) -> usize {
        self.matrix.ncols()
    }

    pub fn row(&self, index: usize) -> ArrayView1<'_, f64> {
        self.matrix.row(index)
    }

    /// Layout: 8-byte magic, `|V|` and `d_code` as u64 LE, then row-major f32 LE.
    pub fn write_to(&self, mut w: impl Write) -> Result<(), EmbeddingError> {
        w.write_all(MAGIC)?;
        w.write_all(&(self.len() as u64).to_le_bytes())?;
        w.write_all(&(self.d_code() as u64).to_le_bytes())?;
        for &v in self.matrix.iter() {
            w.write_all(&(v as f32).to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_from(mut r: impl Read) -> Result<Self, EmbeddingError> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(EmbeddingError::BadFormat("bad magic".into()));
        }
        let mut word = [0u8; 8];
        r.read_exact(&mut word)?;
        let rows = u64::from_le_bytes(word) as usize;
        r.read_exact(&mut word)?;
        let cols = u64::from_le_bytes(word) as usize;
        let mut bytes = Vec::new();
        r.read_to_end(&mut bytes)?;
        if bytes.len() != rows * cols * 4 {
            return Err(EmbeddingError::BadFormat(format!(
                "expected {} bytes of data, found {}",
                rows * cols * 4,
                bytes.len()
            )));
        }
        let data = bytes
            .chunks_exact(4)
            .map(|c| f64::from(f32::from_le_bytes(c.try_into().expect("4-byte chunk"))))
            .collect();
        let matrix = Array2::from_shape_vec((rows, cols), data)
            .map_err(|e| EmbeddingError::BadFormat(e.to_string()))?;
        Ok(EmbeddingTable { matrix })
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        self.write_to(&mut out).expect("writing to a Vec cannot fail");
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn binary_round_trip() {
        let t = EmbeddingTable::new(Array2::from_shape_fn((3, 2), |(i, j)| (i as f32 - 0.25 * j as f32) as f64));
        let bytes = t.to_bytes();
        assert_eq!(bytes.len(), 8 + 16 + 6 * 4);
        let back = EmbeddingTable::read_from(bytes.as_slice()).unwrap();
        assert_eq!(back, t);
        assert_eq!(back.to_bytes(), bytes);
    }

    #[test]
    fn truncated_file_is_rejected() {
        let t = EmbeddingTable::new(Array2::zeros((2, 2)));
        let bytes = t.to_bytes();
        assert!(EmbeddingTable::read_from(&bytes[..bytes.len() - 1]).is_err());
        assert!(EmbeddingTable::read_from(&b"nonsense-bytes-here-xxxxxxx"[..]).is_err());
    }
}
