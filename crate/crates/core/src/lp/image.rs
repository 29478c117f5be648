use std::path::Path;

use super::instance::LpInstance;
use crate::error::{Error, Result};

/// Binary sparsity raster of the constraint matrix, max-pooled onto at most
/// `max_dim` cells per side. `true` means the cell holds a nonzero.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SparsityImage {
    pub width: usize,
    pub height: usize,
    pub dark: Vec<bool>,
}

impl SparsityImage {
    pub fn of(lp: &LpInstance, max_dim: usize) -> Result<Self> {
        if max_dim == 0 {
            return Err(Error::Config("max_dim must be at least 1".into()));
        }
        let (m, n) = (lp.num_rows(), lp.num_cols());
        let height = m.clamp(1, max_dim);
        let width = n.clamp(1, max_dim);
        let mut dark = vec![false; width * height];
        for (i, j, _) in lp.matrix.triplets() {
            let y = i * height / m.max(1);
            let x = j * width / n.max(1);
            dark[y * width + x] = true;
        }
        Ok(Self {
            width,
            height,
            dark,
        })
    }

    pub fn dark_pixels(&self) -> usize {
        self.dark.iter().filter(|&&d| d).count()
    }

    pub fn is_dark(&self, x: usize, y: usize) -> bool {
        self.dark[y * self.width + x]
    }

    /// Plain (P2) portable graymap: 0 for nonzero cells, 255 otherwise.
    pub fn to_pgm(&self) -> String {
        let mut out = format!("P2\n{} {}\n255\n", self.width, self.height);
        for row in self.dark.chunks(self.width) {
            let line: Vec<&str> = row.iter().map(|&d| if d { "0" } else { "255" }).collect();
            out.push_str(&line.join(" "));
            out.push('\n');
        }
        out
    }
}

pub fn emit_sparsity_image(lp: &LpInstance, path: impl AsRef<Path>, max_dim: usize) -> Result<()> {
    let img = SparsityImage::of(lp, max_dim)?;
    let path = path.as_ref();
    std::fs::write(path, img.to_pgm()).map_err(|e| Error::io(path, e))
}
