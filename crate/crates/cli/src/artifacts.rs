//! Output files of one run.
//!
//! Artifacts are buffered and written together at the end: with their final
//! names when the command succeeds, with a `.partial` suffix when it fails.
//! A manifest lists every file with its size and SHA-256.

use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

pub const PARTIAL_SUFFIX: &str = ".partial";
pub const MANIFEST: &str = "manifest.csv";

pub fn sha256_hex(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    let mut out = String::with_capacity(64);
    for b in digest.iter() {
        let _ = write!(out, "{b:02x}");
    }
    out
}

pub struct Artifacts {
    dir: PathBuf,
    command: &'static str,
    config_hash: String,
    files: Vec<(String, Vec<u8>)>,
}

impl Artifacts {
    pub fn new(dir: &Path, command: &'static str, config_hash: String) -> Self {
        Self {
            dir: dir.to_path_buf(),
            command,
            config_hash,
            files: Vec::new(),
        }
    }

    /// The `#` comment line opening every CSV file.
    pub fn header(&self, extra: &str) -> String {
        let mut h = format!("# flatmap {} config_sha256={}", self.command, self.config_hash);
        if !extra.is_empty() {
            h.push(' ');
            h.push_str(extra);
        }
        h
    }

    /// Buffers one file produced by `write`.
    pub fn add<F>(&mut self, name: impl Into<String>, write: F) -> flatmap::Result<()>
    where
        F: FnOnce(&mut Vec<u8>) -> flatmap::Result<()>,
    {
        let mut buf = Vec::new();
        write(&mut buf)?;
        self.files.push((name.into(), buf));
        Ok(())
    }

    /// Buffers a CSV table given as a header row and string records.
    pub fn add_table(
        &mut self,
        name: &str,
        extra: &str,
        columns: &[&str],
        rows: &[Vec<String>],
    ) -> flatmap::Result<()> {
        let header = self.header(extra);
        self.add(name, |buf| {
            buf.extend_from_slice(header.as_bytes());
            buf.push(b'\n');
            let mut w = csv::Writer::from_writer(buf);
            w.write_record(columns)?;
            for r in rows {
                w.write_record(r)?;
            }
            w.flush()?;
            Ok(())
        })
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.files.iter().map(|(n, _)| n.as_str())
    }

    /// Writes all buffered files and the manifest. Returns the written paths.
    pub fn commit(self, complete: bool) -> io::Result<Vec<PathBuf>> {
        fs::create_dir_all(&self.dir)?;
        let suffix = if complete { "" } else { PARTIAL_SUFFIX };
        let mut files = self.files;
        files.sort_by(|a, b| a.0.cmp(&b.0));
        let mut manifest = format!("# flatmap {} config_sha256={}\n", self.command, self.config_hash);
        manifest.push_str("file,bytes,sha256\n");
        let mut written = Vec::new();
        for (name, bytes) in &files {
            let file = format!("{name}{suffix}");
            let path = self.dir.join(&file);
            fs::write(&path, bytes)?;
            let _ = writeln!(manifest, "{file},{},{}", bytes.len(), sha256_hex(bytes));
            written.push(path);
        }
        let path = self.dir.join(format!("{MANIFEST}{suffix}"));
        fs::write(&path, manifest)?;
        written.push(path);
        Ok(written)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sha256_of_empty_input() {
        assert_eq!(
            sha256_hex(b""),
            "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855"
        );
    }

    #[test]
    fn partial_runs_get_suffixed_names() {
        let dir = tempfile::tempdir().unwrap();
        let mut a = Artifacts::new(dir.path(), "solve", "abc".into());
        a.add_table("b.csv", "m=2", &["x"], &[vec!["1".into()]]).unwrap();
        a.add_table("a.csv", "", &["y"], &[]).unwrap();
        let written = a.commit(false).unwrap();
        let names: Vec<String> = written
            .iter()
            .map(|p| p.file_name().unwrap().to_string_lossy().into_owned())
            .collect();
        assert_eq!(names, ["a.csv.partial", "b.csv.partial", "manifest.csv.partial"]);
        let b = fs::read_to_string(dir.path().join("b.csv.partial")).unwrap();
        assert_eq!(b, "# flatmap solve config_sha256=abc m=2\nx\n1\n");
        let manifest = fs::read_to_string(dir.path().join("manifest.csv.partial")).unwrap();
        assert!(manifest.lines().nth(2).unwrap().starts_with("a.csv.partial,"));
    }
}
