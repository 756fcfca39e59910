//! Download, verify and unpack dataset archives into a local cache.
//!
//! An archive lands in `<cache>/<name>/` only after its SHA-256 matches the
//! pinned digest. Entries without a pinned digest are trusted on first use
//! and the digest is recorded in `<cache>/<name>.sha256`.

use std::fs::File;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use log::{info, warn};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub const CACHE_ENV: &str = "BULBNET_CACHE";
const COMPLETE_MARKER: &str = ".complete";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetEntry {
    pub name: String,
    /// `https://`, `http://` or `file://` URL of a zip archive.
    pub url: String,
    pub sha256: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub datasets: Vec<DatasetEntry>,
}

impl Manifest {
    pub fn builtin() -> Self {
        toml::from_str(include_str!("../datasets.toml")).expect("bundled manifest parses")
    }

    pub fn get(&self, name: &str) -> Result<&DatasetEntry> {
        self.datasets
            .iter()
            .find(|d| d.name == name)
            .ok_or_else(|| Error::Config(format!("unknown dataset {name:?}")))
    }
}

/// Cache root: `$BULBNET_CACHE`, else `$XDG_CACHE_HOME/bulbnet`, else
/// `~/.cache/bulbnet`.
pub fn cache_dir() -> PathBuf {
    if let Some(p) = std::env::var_os(CACHE_ENV) {
        return PathBuf::from(p);
    }
    if let Some(p) = std::env::var_os("XDG_CACHE_HOME") {
        return PathBuf::from(p).join("bulbnet");
    }
    let home = std::env::var_os("HOME").map(PathBuf::from).unwrap_or_else(|| PathBuf::from("."));
    home.join(".cache").join("bulbnet")
}

pub fn dataset_dir(cache: &Path, name: &str) -> PathBuf {
    cache.join(name)
}

pub fn is_cached(cache: &Path, name: &str) -> bool {
    dataset_dir(cache, name).join(COMPLETE_MARKER).is_file()
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let mut f = File::open(path)?;
    let mut h = Sha256::new();
    let mut buf = vec![0u8; 1 << 16];
    loop {
        let n = f.read(&mut buf)?;
        if n == 0 {
            break;
        }
        h.update(&buf[..n]);
    }
    Ok(hex::encode(h.finalize()))
}

fn download(url: &str, dest: &Path) -> Result<()> {
    if let Some(path) = url.strip_prefix("file://") {
        std::fs::copy(path, dest).map_err(|e| Error::Download(format!("{url}: {e}")))?;
        return Ok(());
    }
    let resp = ureq::get(url).call().map_err(|e| Error::Download(format!("{url}: {e}")))?;
    let mut reader = resp.into_body().into_reader();
    let mut out = File::create(dest)?;
    std::io::copy(&mut reader, &mut out).map_err(|e| Error::Download(format!("{url}: {e}")))?;
    out.flush()?;
    Ok(())
}

fn unzip(archive: &Path, dest: &Path) -> Result<()> {
    let mut zip = zip::ZipArchive::new(File::open(archive)?)
        .map_err(|e| Error::Download(format!("{}: {e}", archive.display())))?;
    zip.extract(dest)
        .map_err(|e| Error::Download(format!("{}: {e}", archive.display())))
}

/// Unpacks nested zip archives in place, recursively.
fn unzip_nested(dir: &Path) -> Result<()> {
    let mut entries: Vec<PathBuf> = std::fs::read_dir(dir)?.map(|e| e.map(|e| e.path())).collect::<std::io::Result<_>>()?;
    entries.sort();
    for path in entries {
        if path.is_dir() {
            unzip_nested(&path)?;
        } else if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("zip")) {
            let target = path.with_extension("");
            unzip(&path, &target)?;
            std::fs::remove_file(&path)?;
            unzip_nested(&target)?;
        }
    }
    Ok(())
}

/// Fetches one dataset; returns its directory. A cache hit does no I/O
/// beyond the marker check.
pub fn fetch(entry: &DatasetEntry, cache: &Path) -> Result<PathBuf> {
    let dir = dataset_dir(cache, &entry.name);
    if is_cached(cache, &entry.name) {
        info!("{}: cached at {}", entry.name, dir.display());
        return Ok(dir);
    }
    std::fs::create_dir_all(cache)?;
    let part = cache.join(format!("{}.zip.part", entry.name));
    let staging = cache.join(format!("{}.staging", entry.name));
    let cleanup = || {
        let _ = std::fs::remove_file(&part);
        let _ = std::fs::remove_dir_all(&staging);
    };
    let result = (|| {
        info!("{}: downloading {}", entry.name, entry.url);
        download(&entry.url, &part)?;
        let actual = sha256_file(&part)?;
        let recorded = cache.join(format!("{}.sha256", entry.name));
        let expected = match &entry.sha256 {
            Some(h) => Some(h.to_lowercase()),
            None => std::fs::read_to_string(&recorded).ok().map(|s| s.trim().to_lowercase()),
        };
        match expected {
            Some(e) if e != actual => {
                return Err(Error::Checksum {
                    name: entry.name.clone(),
                    expected: e,
                    actual,
                })
            }
            Some(_) => {}
            None => {
                warn!("{}: no pinned checksum, recording {actual}", entry.name);
                std::fs::write(&recorded, format!("{actual}\n"))?;
            }
        }
        let _ = std::fs::remove_dir_all(&staging);
        unzip(&part, &staging)?;
        unzip_nested(&staging)?;
        File::create(staging.join(COMPLETE_MARKER))?;
        let _ = std::fs::remove_dir_all(&dir);
        std::fs::rename(&staging, &dir)?;
        std::fs::remove_file(&part)?;
        Ok(dir.clone())
    })();
    if result.is_err() {
        cleanup();
    }
    result
}

/// First path under `root` whose file name is `name`, searching breadth-first.
pub fn find_file(root: &Path, name: &str) -> Option<PathBuf> {
    let mut queue = vec![root.to_path_buf()];
    while !queue.is_empty() {
        let mut next = Vec::new();
        for dir in queue {
            let Ok(rd) = std::fs::read_dir(&dir) else { continue };
            let mut entries: Vec<PathBuf> = rd.filter_map(|e| e.ok().map(|e| e.path())).collect();
            entries.sort();
            for p in entries {
                if p.is_dir() {
                    next.push(p);
                } else if p.file_name().is_some_and(|n| n == name) {
                    return Some(p);
                }
            }
        }
        queue = next;
    }
    None
}
