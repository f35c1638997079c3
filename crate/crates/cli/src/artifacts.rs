//! Writing artifacts under the output directory and logging their hashes.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::Context;
use sha2::{Digest, Sha256};

pub struct OutDir {
    root: PathBuf,
}

impl OutDir {
    pub fn new(root: PathBuf) -> Self {
        OutDir { root }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    /// `rel` resolved under the output directory, with parent directories created.
    pub fn path(&self, rel: &Path) -> anyhow::Result<PathBuf> {
        let p = self.root.join(rel);
        if let Some(parent) = p.parent() {
            fs::create_dir_all(parent).with_context(|| format!("creating {}", parent.display()))?;
        }
        Ok(p)
    }

    pub fn write(&self, rel: &Path, bytes: &[u8]) -> anyhow::Result<PathBuf> {
        let p = self.path(rel)?;
        fs::write(&p, bytes).with_context(|| format!("writing {}", p.display()))?;
        log_hash(&p)?;
        Ok(p)
    }
}

pub fn sha256_file(path: &Path) -> anyhow::Result<String> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

pub fn log_hash(path: &Path) -> anyhow::Result<()> {
    eprintln!("sha256 {}  {}", sha256_file(path)?, path.display());
    Ok(())
}
