//! Output directory layout of a training run:
//!
//! ```text
//! <out>/manifest.json                      run manifest, written before training
//! <out>/scaler.json                        min-max scaler fitted on training cycles
//! <out>/logs/seed<k>.log                   one line per epoch
//! <out>/checkpoints/<hash>-seed<k>/model.ckpt
//! <out>/metrics/val.txt, val.json          per-cycle and averaged metrics
//! <out>/traces/<cycle>.csv                 prediction traces (eval --export-traces)
//! ```

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};

pub const RUN_MANIFEST: &str = "manifest.json";
pub const SCALER_FILE: &str = "scaler.json";
pub const CHECKPOINT_FILE: &str = "model.ckpt";

pub struct RunLayout {
    pub root: PathBuf,
}

impl RunLayout {
    /// Creates `root` and the listed subdirectories.
    pub fn create(root: &Path, subdirs: &[&str]) -> Result<Self> {
        std::fs::create_dir_all(root).with_context(|| format!("creating {}", root.display()))?;
        for sub in subdirs {
            let dir = root.join(sub);
            std::fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
        }
        Ok(Self { root: root.to_path_buf() })
    }

    pub fn manifest(&self) -> PathBuf {
        self.root.join(RUN_MANIFEST)
    }

    pub fn scaler(&self) -> PathBuf {
        self.root.join(SCALER_FILE)
    }

    pub fn log(&self, seed: u64) -> PathBuf {
        self.root.join("logs").join(format!("seed{seed}.log"))
    }

    pub fn checkpoint_dir(&self, hash: &str, seed: u64) -> PathBuf {
        self.root.join("checkpoints").join(format!("{hash}-seed{seed}"))
    }

    pub fn metrics(&self, name: &str, ext: &str) -> PathBuf {
        self.root.join("metrics").join(format!("{name}.{ext}"))
    }

    pub fn trace(&self, cycle: &str) -> PathBuf {
        self.root.join("traces").join(format!("{cycle}.csv"))
    }
}

/// Writes `contents` to `path`, naming the path on failure.
pub fn write(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    std::fs::write(path, contents).with_context(|| format!("writing {}", path.display()))
}
