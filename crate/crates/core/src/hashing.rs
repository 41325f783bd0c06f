//! Content hashing helpers shared by the corpus manifest and the pipeline
//! stage cache.

use std::fs;
use std::io;
use std::path::Path;

use sha2::{Digest, Sha256};

pub fn sha256_hex(bytes: &[u8]) -> String {
    to_hex(&Sha256::digest(bytes))
}

pub fn sha256_file(path: &Path) -> io::Result<String> {
    Ok(sha256_hex(&fs::read(path)?))
}

/// Hash a file or a directory tree.
///
/// Directories hash the sorted list of (relative path, file hash) pairs, so
/// the result is independent of filesystem iteration order.
pub fn sha256_path(path: &Path) -> io::Result<String> {
    if path.is_file() {
        return sha256_file(path);
    }
    let mut entries = Vec::new();
    collect_files(path, path, &mut entries)?;
    entries.sort();
    let mut hasher = Sha256::new();
    for (rel, digest) in entries {
        hasher.update(rel.as_bytes());
        hasher.update([0u8]);
        hasher.update(digest.as_bytes());
        hasher.update(b"\n");
    }
    Ok(to_hex(&hasher.finalize()))
}

fn collect_files(root: &Path, dir: &Path, out: &mut Vec<(String, String)>) -> io::Result<()> {
    for entry in fs::read_dir(dir)? {
        let path = entry?.path();
        if path.is_dir() {
            collect_files(root, &path, out)?;
        } else {
            let rel = path
                .strip_prefix(root)
                .unwrap_or(&path)
                .to_string_lossy()
                .replace('\\', "/");
            out.push((rel, sha256_file(&path)?));
        }
    }
    Ok(())
}

fn to_hex(bytes: &[u8]) -> String {
    use std::fmt::Write;
    bytes.iter().fold(String::with_capacity(bytes.len() * 2), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}
