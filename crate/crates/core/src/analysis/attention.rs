use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use ndarray::{Array3, Array4, Axis};

use crate::cipher::SymbolId;
use crate::error::{Error, Result};
use crate::model::Model;
use crate::tensor::Real;

/// Attention probabilities of one inference pass.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionMaps {
    /// `[layers × heads × query × key]`; every row is a distribution.
    pub maps: Array4<f64>,
}

impl AttentionMaps {
    pub fn n_layers(&self) -> usize {
        self.maps.len_of(Axis(0))
    }

    pub fn n_heads(&self) -> usize {
        self.maps.len_of(Axis(1))
    }

    pub fn n_maps(&self) -> usize {
        self.n_layers() * self.n_heads()
    }

    /// Largest `|row sum − 1|` over all maps.
    pub fn max_row_deviation(&self) -> f64 {
        self.maps.sum_axis(Axis(3)).iter().fold(0.0, |m, &s| m.max((s - 1.0).abs()))
    }

    /// Long CSV: `layer,head,query,key,weight` with 1-based layers.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(fs::File::create(path)?);
        writeln!(w, "layer,head,query,key,weight")?;
        for ((l, h, q, k), v) in self.maps.indexed_iter() {
            writeln!(w, "{},{h},{q},{k},{v}", l + 1)?;
        }
        w.flush()?;
        Ok(())
    }

    /// The 4-d array as a little-endian `float64` NPY file.
    pub fn write_npy(&self, path: &Path) -> Result<()> {
        write_npy_f64(path, self.maps.shape(), self.maps.iter().copied())
    }

    /// Write CSV and NPY next to each other under `dir`.
    pub fn export(&self, dir: &Path, stem: &str) -> Result<(PathBuf, PathBuf)> {
        fs::create_dir_all(dir)?;
        let csv = dir.join(format!("{stem}.csv"));
        let npy = dir.join(format!("{stem}.npy"));
        self.write_csv(&csv)?;
        self.write_npy(&npy)?;
        Ok((csv, npy))
    }
}

/// Minimal NPY v1.0 writer for C-ordered f64 data.
pub fn write_npy_f64(path: &Path, shape: &[usize], values: impl Iterator<Item = f64>) -> Result<()> {
    let dims: Vec<String> = shape.iter().map(|d| d.to_string()).collect();
    let shape_str = if dims.len() == 1 { format!("({},)", dims[0]) } else { format!("({})", dims.join(", ")) };
    let mut header = format!("{{'descr': '<f8', 'fortran_order': False, 'shape': {shape_str}, }}");
    // Magic (6) + version (2) + length (2) + header + newline, padded to 64.
    let unpadded = 10 + header.len() + 1;
    header.push_str(&" ".repeat((64 - unpadded % 64) % 64));
    header.push('\n');
    let mut w = BufWriter::new(fs::File::create(path)?);
    w.write_all(b"\x93NUMPY\x01\x00")?;
    w.write_all(&(header.len() as u16).to_le_bytes())?;
    w.write_all(header.as_bytes())?;
    for v in values {
        w.write_all(&v.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

/// Row-normalized attention maps of every layer and head for `tokens`.
pub fn export_attention<F: Real>(model: &Model<F>, tokens: &[SymbolId]) -> Result<AttentionMaps> {
    if tokens.is_empty() {
        return Err(Error::EmptyInput);
    }
    let states = model.backbone.forward(tokens, true)?;
    let per_layer: Vec<Array3<F>> = states.attention.unwrap_or_default();
    let (h, len) = (model.config().n_heads, tokens.len());
    let mut maps = Array4::zeros((per_layer.len(), h, len, len));
    for (mut dst, src) in maps.outer_iter_mut().zip(&per_layer) {
        dst.zip_mut_with(src, |d, &s| *d = s.f64());
    }
    Ok(AttentionMaps { maps })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backbone::ModelConfig;
    use crate::cipher::encode;
    use crate::model::HeadKind;

    fn model(layers: usize, heads: usize) -> Model<f32> {
        let mut c = ModelConfig::new(4 * heads, layers, heads, 16);
        c.max_len = 64;
        c.init_std = 0.3;
        Model::new(&c, HeadKind::Standard, 2).unwrap()
    }

    #[test]
    fn rows_sum_to_one() {
        let a = export_attention(&model(2, 3), &encode("ATTENTION, PLEASE!").unwrap()).unwrap();
        assert_eq!(a.n_maps(), 6);
        assert!(a.max_row_deviation() < 1e-5);
    }

    #[test]
    fn twelve_by_twelve_gives_144_maps() {
        let a = export_attention(&model(12, 12), &encode("AB").unwrap()).unwrap();
        assert_eq!(a.n_maps(), 144);
    }

    #[test]
    fn single_token_maps_are_one() {
        let a = export_attention(&model(2, 2), &encode("Q").unwrap()).unwrap();
        assert!(a.maps.iter().all(|&v| v == 1.0));
    }

    #[test]
    fn npy_header_is_aligned() {
        let dir = tempfile::tempdir().unwrap();
        let a = export_attention(&model(1, 2), &encode("HI THERE").unwrap()).unwrap();
        let (csv, npy) = a.export(dir.path(), "attn").unwrap();
        let bytes = fs::read(npy).unwrap();
        assert_eq!(&bytes[..8], b"\x93NUMPY\x01\x00");
        let hlen = u16::from_le_bytes([bytes[8], bytes[9]]) as usize;
        assert_eq!((10 + hlen) % 64, 0);
        let header = std::str::from_utf8(&bytes[10..10 + hlen]).unwrap();
        assert!(header.contains("'shape': (1, 2, 8, 8)"));
        assert_eq!(bytes.len() - 10 - hlen, 8 * 2 * 64);
        let first = f64::from_le_bytes(bytes[10 + hlen..18 + hlen].try_into().unwrap());
        assert_eq!(first, a.maps[[0, 0, 0, 0]]);
        assert_eq!(fs::read_to_string(csv).unwrap().lines().count(), 1 + 2 * 64);
    }
}
