//! Verdicts, exit codes and atomic artifact writes.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::Context;
use serde::{Deserialize, Serialize};

pub const EXIT_PASS: i32 = 0;
pub const EXIT_ERROR: i32 = 1;
pub const EXIT_VIOLATION: i32 = 2;

/// Outcome of one run. Violations are falsified inequalities or bounds;
/// findings are informative results such as an inadmissible ledger.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Verdict {
    pub pass: bool,
    pub violations: Vec<String>,
    pub findings: Vec<String>,
}

impl Verdict {
    pub fn new() -> Self {
        Verdict { pass: true, ..Default::default() }
    }

    pub fn violation(&mut self, what: impl Into<String>) {
        self.violations.push(what.into());
        self.pass = false;
    }

    pub fn finding(&mut self, what: impl Into<String>) {
        self.findings.push(what.into());
    }

    /// Adds a violation when `ok` is false.
    pub fn require(&mut self, ok: bool, what: impl Into<String>) {
        if !ok {
            self.violation(what);
        }
    }

    pub fn exit_code(&self) -> i32 {
        if self.violations.is_empty() {
            EXIT_PASS
        } else {
            EXIT_VIOLATION
        }
    }
}

/// Collects artifacts under one directory; every file is written to a
/// temporary sibling and renamed into place.
pub struct ArtifactDir {
    root: PathBuf,
    written: Vec<String>,
}

impl ArtifactDir {
    pub fn create(root: &Path) -> anyhow::Result<Self> {
        fs::create_dir_all(root).with_context(|| format!("cannot create {}", root.display()))?;
        Ok(ArtifactDir { root: root.to_path_buf(), written: Vec::new() })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    /// Names written so far, in order.
    pub fn files(&self) -> &[String] {
        &self.written
    }

    pub fn write_with(
        &mut self,
        name: &str,
        fill: impl FnOnce(&mut Vec<u8>) -> anyhow::Result<()>,
    ) -> anyhow::Result<()> {
        let mut buf = Vec::new();
        fill(&mut buf)?;
        write_atomic(&self.root.join(name), &buf)?;
        self.written.push(name.to_string());
        Ok(())
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> anyhow::Result<()> {
        self.write_with(name, |buf| {
            serde_json::to_writer_pretty(&mut *buf, value)?;
            buf.push(b'\n');
            Ok(())
        })
    }
}

pub fn write_atomic(path: &Path, bytes: &[u8]) -> anyhow::Result<()> {
    let name = path.file_name().and_then(|n| n.to_str()).context("artifact path has no file name")?;
    let tmp = path.with_file_name(format!(".{name}.tmp"));
    {
        let mut f = fs::File::create(&tmp).with_context(|| format!("cannot create {}", tmp.display()))?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path).with_context(|| format!("cannot move {} into place", path.display()))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn findings_do_not_fail_a_run() {
        let mut v = Verdict::new();
        v.finding("ledger inadmissible");
        assert_eq!(v.exit_code(), EXIT_PASS);
        v.require(true, "fine");
        assert!(v.pass);
        v.require(false, "bound broken");
        assert_eq!(v.exit_code(), EXIT_VIOLATION);
    }

    #[test]
    fn atomic_write_leaves_no_temporary() {
        let dir = tempfile::tempdir().unwrap();
        let mut a = ArtifactDir::create(dir.path()).unwrap();
        a.write_json("x.json", &[1, 2]).unwrap();
        let names: Vec<_> = fs::read_dir(dir.path()).unwrap().map(|e| e.unwrap().file_name()).collect();
        assert_eq!(names, vec![std::ffi::OsString::from("x.json")]);
        assert_eq!(fs::read_to_string(dir.path().join("x.json")).unwrap(), "[\n  1,\n  2\n]\n");
    }
}
