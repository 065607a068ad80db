use std::path::{Path, PathBuf};

use crate::error::{Error, Result};

use super::idx::{parse_idx, read_maybe_gz, IdxData};

pub const SIDE: usize = 28;
pub const PIXELS: usize = SIDE * SIDE;

/// One MNIST split: images in `[-1, 1]` plus digit labels.
#[derive(Debug, Clone, PartialEq)]
pub struct MnistSplit {
    pub pixels: Vec<f32>,
    pub labels: Vec<u8>,
}

impl MnistSplit {
    pub fn from_idx(images: IdxData, labels: IdxData) -> Result<Self> {
        let (count, rows, cols, pixels) = match images {
            IdxData::Images {
                count,
                rows,
                cols,
                pixels,
            } => (count, rows, cols, pixels),
            IdxData::Labels(_) => {
                return Err(Error::Format("expected an image file, found labels".into()))
            }
        };
        let IdxData::Labels(labels) = labels else {
            return Err(Error::Format("expected a label file, found images".into()));
        };
        if (rows, cols) != (SIDE, SIDE) {
            return Err(Error::Format(format!(
                "images are {rows}x{cols}, expected {SIDE}x{SIDE}"
            )));
        }
        if labels.len() != count {
            return Err(Error::Data(format!(
                "{count} images but {} labels",
                labels.len()
            )));
        }
        if let Some(bad) = labels.iter().find(|&&l| l > 9) {
            return Err(Error::Data(format!("label {bad} is not a digit")));
        }
        Ok(MnistSplit { pixels, labels })
    }

    pub fn load(images: &Path, labels: &Path) -> Result<Self> {
        let images = parse_idx(&read_maybe_gz(images)?)?;
        let labels = parse_idx(&read_maybe_gz(labels)?)?;
        Self::from_idx(images, labels)
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn image(&self, i: usize) -> &[f32] {
        &self.pixels[i * PIXELS..(i + 1) * PIXELS]
    }

    /// Indices of every image labelled `digit`, in file order.
    pub fn indices_of(&self, digit: u8) -> Vec<usize> {
        self.labels
            .iter()
            .enumerate()
            .filter(|(_, &l)| l == digit)
            .map(|(i, _)| i)
            .collect()
    }

    /// First `n` examples; handy for quick runs.
    pub fn truncated(&self, n: usize) -> Self {
        let n = n.min(self.len());
        MnistSplit {
            pixels: self.pixels[..n * PIXELS].to_vec(),
            labels: self.labels[..n].to_vec(),
        }
    }
}

/// Locations of the four canonical files inside one directory.
#[derive(Debug, Clone)]
pub struct MnistFiles {
    pub train_images: PathBuf,
    pub train_labels: PathBuf,
    pub test_images: PathBuf,
    pub test_labels: PathBuf,
}

impl MnistFiles {
    /// Resolves `<stem>` or `<stem>.gz` for each canonical file name.
    pub fn in_dir(dir: &Path) -> Result<Self> {
        let find = |stem: &str| -> Result<PathBuf> {
            for name in [stem.to_string(), format!("{stem}.gz")] {
                let p = dir.join(name);
                if p.is_file() {
                    return Ok(p);
                }
            }
            Err(Error::io(
                dir.join(stem),
                std::io::Error::new(std::io::ErrorKind::NotFound, "MNIST file not found"),
            ))
        };
        Ok(MnistFiles {
            train_images: find("train-images-idx3-ubyte")?,
            train_labels: find("train-labels-idx1-ubyte")?,
            test_images: find("t10k-images-idx3-ubyte")?,
            test_labels: find("t10k-labels-idx1-ubyte")?,
        })
    }

    pub fn load_train(&self) -> Result<MnistSplit> {
        MnistSplit::load(&self.train_images, &self.train_labels)
    }

    pub fn load_test(&self) -> Result<MnistSplit> {
        MnistSplit::load(&self.test_images, &self.test_labels)
    }
}
