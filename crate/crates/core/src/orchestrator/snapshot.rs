//! Directory digests and pristine-copy archives.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SnapshotRef {
    /// Hex SHA-256 over the sorted file list and contents.
    pub digest: String,
    pub archive_path: PathBuf,
}

impl SnapshotRef {
    /// Recomputes the archive digest and compares it to the stored one.
    pub fn verify(&self) -> std::io::Result<bool> {
        Ok(digest_dir(&self.archive_path)? == self.digest)
    }
}

fn walk(root: &Path, dir: &Path, out: &mut Vec<(String, PathBuf)>) -> std::io::Result<()> {
    for entry in std::fs::read_dir(dir)? {
        let entry = entry?;
        let path = entry.path();
        let rel = path
            .strip_prefix(root)
            .expect("walk stays under root")
            .components()
            .map(|c| c.as_os_str().to_string_lossy().into_owned())
            .collect::<Vec<_>>()
            .join("/");
        out.push((rel, path.clone()));
        if entry.file_type()?.is_dir() {
            walk(root, &path, out)?;
        }
    }
    Ok(())
}

/// Digest of a directory tree: for each entry in path order, a type tag,
/// the relative path, and for files the length and bytes.
pub fn digest_dir(root: &Path) -> std::io::Result<String> {
    let mut entries = Vec::new();
    walk(root, root, &mut entries)?;
    entries.sort_by(|a, b| a.0.cmp(&b.0));
    let mut h = Sha256::new();
    for (rel, path) in entries {
        let meta = std::fs::symlink_metadata(&path)?;
        if meta.is_dir() {
            h.update(b"D\0");
            h.update(rel.as_bytes());
            h.update(b"\0");
        } else if meta.file_type().is_symlink() {
            h.update(b"L\0");
            h.update(rel.as_bytes());
            h.update(b"\0");
            h.update(std::fs::read_link(&path)?.to_string_lossy().as_bytes());
            h.update(b"\0");
        } else {
            let bytes = std::fs::read(&path)?;
            h.update(b"F\0");
            h.update(rel.as_bytes());
            h.update(b"\0");
            h.update((bytes.len() as u64).to_be_bytes());
            h.update(&bytes);
        }
    }
    Ok(hex::encode(h.finalize()))
}

/// Recursively copies `src` into a new directory `dst` (which must not exist).
pub fn copy_dir(src: &Path, dst: &Path) -> std::io::Result<()> {
    std::fs::create_dir(dst)?;
    for entry in std::fs::read_dir(src)? {
        let entry = entry?;
        let ty = entry.file_type()?;
        let to = dst.join(entry.file_name());
        if ty.is_dir() {
            copy_dir(&entry.path(), &to)?;
        } else if ty.is_symlink() {
            #[cfg(unix)]
            std::os::unix::fs::symlink(std::fs::read_link(entry.path())?, &to)?;
        } else {
            std::fs::copy(entry.path(), &to)?;
        }
    }
    Ok(())
}

pub fn remove_dir_if_exists(path: &Path) -> std::io::Result<()> {
    match std::fs::remove_dir_all(path) {
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(()),
        r => r,
    }
}

/// Archives `dir` to `archive` and returns the reference.
pub fn take_snapshot(dir: &Path, archive: &Path) -> std::io::Result<SnapshotRef> {
    remove_dir_if_exists(archive)?;
    copy_dir(dir, archive)?;
    let digest = digest_dir(archive)?;
    if digest_dir(dir)? != digest {
        return Err(std::io::Error::other("sandbox changed while archiving"));
    }
    Ok(SnapshotRef {
        digest,
        archive_path: archive.to_path_buf(),
    })
}

/// Replaces `dir` with a verified copy of the archive. The copy is staged
/// next to `dir` and only swapped in after its digest checks out, so `dir`
/// is never left half-restored.
pub fn restore(snapshot: &SnapshotRef, dir: &Path) -> std::io::Result<String> {
    let staging = staging_path(dir);
    remove_dir_if_exists(&staging)?;
    copy_dir(&snapshot.archive_path, &staging)?;
    let staged = digest_dir(&staging)?;
    if staged != snapshot.digest {
        remove_dir_if_exists(&staging)?;
        return Err(std::io::Error::other(format!(
            "archive digest {staged} does not match snapshot {}",
            snapshot.digest
        )));
    }
    remove_dir_if_exists(dir)?;
    std::fs::rename(&staging, dir)?;
    digest_dir(dir)
}

fn staging_path(dir: &Path) -> PathBuf {
    let mut name = dir.file_name().unwrap_or_default().to_os_string();
    name.push(".restore");
    dir.with_file_name(name)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn digest_tracks_content_names_and_structure() {
        let t = tempfile::tempdir().unwrap();
        let d = t.path().join("a");
        std::fs::create_dir(&d).unwrap();
        std::fs::write(d.join("x"), b"1").unwrap();
        let d1 = digest_dir(&d).unwrap();
        assert_eq!(d1, digest_dir(&d).unwrap());
        std::fs::write(d.join("x"), b"2").unwrap();
        let d2 = digest_dir(&d).unwrap();
        assert_ne!(d1, d2);
        std::fs::create_dir(d.join("sub")).unwrap();
        assert_ne!(d2, digest_dir(&d).unwrap());
    }

    #[test]
    fn digest_is_independent_of_location() {
        let t = tempfile::tempdir().unwrap();
        let a = t.path().join("a");
        std::fs::create_dir_all(a.join("n")).unwrap();
        std::fs::write(a.join("n/f"), b"hello").unwrap();
        copy_dir(&a, &t.path().join("b")).unwrap();
        assert_eq!(digest_dir(&a).unwrap(), digest_dir(&t.path().join("b")).unwrap());
    }

    #[test]
    fn restore_is_byte_exact() {
        let t = tempfile::tempdir().unwrap();
        let dir = t.path().join("sandbox");
        std::fs::create_dir(&dir).unwrap();
        std::fs::write(dir.join("events.ndjson"), b"").unwrap();
        let snap = take_snapshot(&dir, &t.path().join("archive")).unwrap();
        std::fs::write(dir.join("events.ndjson"), b"{\"t\":\"message\"}\n").unwrap();
        std::fs::write(dir.join("dropped-payload"), b"implant").unwrap();
        assert_ne!(digest_dir(&dir).unwrap(), snap.digest);
        assert_eq!(restore(&snap, &dir).unwrap(), snap.digest);
        assert!(!dir.join("dropped-payload").exists());
        assert!(snap.verify().unwrap());
    }

    #[test]
    fn tampered_archive_is_not_swapped_in() {
        let t = tempfile::tempdir().unwrap();
        let dir = t.path().join("sandbox");
        std::fs::create_dir(&dir).unwrap();
        std::fs::write(dir.join("f"), b"a").unwrap();
        let snap = take_snapshot(&dir, &t.path().join("archive")).unwrap();
        std::fs::write(snap.archive_path.join("f"), b"tampered").unwrap();
        std::fs::write(dir.join("f"), b"live").unwrap();
        assert!(restore(&snap, &dir).is_err());
        assert!(!snap.verify().unwrap());
        // live directory untouched, no staging left behind
        assert_eq!(std::fs::read(dir.join("f")).unwrap(), b"live");
        assert!(!staging_path(&dir).exists());
    }
}
