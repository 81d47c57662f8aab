//! Image directories.
//!
//! A corpus is a flat directory of PNG files; the file stem is the image id.
//! Files named `<id>.mask.png` are masks and never count as images. A
//! precomputed first-pass directory holds `<id>.png` (the inpainted image)
//! next to `<id>.mask.png` (the mask it was produced with).

use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::image::{load_image, load_mask, BinaryMask, ImageBuffer};

const MASK_SUFFIX: &str = ".mask.png";

#[derive(Clone, Debug)]
pub struct Corpus {
    dir: PathBuf,
    ids: Vec<String>,
}

impl Corpus {
    pub fn open(dir: impl Into<PathBuf>) -> Result<Self> {
        let dir = dir.into();
        let ids = list_ids(&dir)?;
        Ok(Self { dir, ids })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    /// Sorted image ids.
    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn image_path(&self, id: &str) -> PathBuf {
        self.dir.join(format!("{id}.png"))
    }

    pub fn mask_path(&self, id: &str) -> PathBuf {
        self.dir.join(format!("{id}{MASK_SUFFIX}"))
    }

    pub fn load(&self, id: &str) -> Result<ImageBuffer> {
        load_image(self.image_path(id))
    }

    pub fn load_mask(&self, id: &str) -> Result<BinaryMask> {
        load_mask(self.mask_path(id))
    }
}

/// Ids of the non-mask PNG files in `dir`, sorted.
pub fn list_ids(dir: &Path) -> Result<Vec<String>> {
    let entries = fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut ids = Vec::new();
    for entry in entries {
        let entry = entry.map_err(|e| Error::io(dir, e))?;
        let name = entry.file_name();
        let Some(name) = name.to_str() else {
            log::warn!("skipping non-UTF-8 file name in {}", dir.display());
            continue;
        };
        if name.ends_with(MASK_SUFFIX) || !entry.path().is_file() {
            continue;
        }
        if let Some(id) = name.strip_suffix(".png") {
            ids.push(id.to_string());
        }
    }
    ids.sort();
    Ok(ids)
}
