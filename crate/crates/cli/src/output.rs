use std::path::{Path, PathBuf};

use hcfwm::Result;
use serde::Serialize;

#[derive(Debug, Serialize)]
struct ManifestEntry {
    path: String,
    description: String,
}

#[derive(Debug, Serialize)]
struct Manifest<'a> {
    subcommand: &'a str,
    label: &'a str,
    files: &'a [ManifestEntry],
    warnings: &'a [String],
}

/// `<out>/<subcommand>/<label>/` plus the list of files written into it.
pub struct RunDir {
    root: PathBuf,
    subcommand: String,
    label: String,
    files: Vec<ManifestEntry>,
    pub warnings: Vec<String>,
}

impl RunDir {
    pub fn create(out: &Path, subcommand: &str, label: &str) -> Result<Self> {
        let root = out.join(subcommand).join(label);
        std::fs::create_dir_all(&root)?;
        Ok(Self {
            root,
            subcommand: subcommand.into(),
            label: label.into(),
            files: Vec::new(),
            warnings: Vec::new(),
        })
    }

    pub fn path(&self) -> &Path {
        &self.root
    }

    /// Write `contents` to `name` and print a one-line summary.
    pub fn write(&mut self, name: &str, contents: &str, description: impl Into<String>) -> Result<()> {
        let path = self.root.join(name);
        std::fs::write(&path, contents)?;
        self.record(name, description);
        Ok(())
    }

    /// Register a file written by someone else.
    pub fn record(&mut self, name: &str, description: impl Into<String>) {
        let description = description.into();
        println!("{}: {}", self.root.join(name).display(), description);
        self.files.push(ManifestEntry {
            path: name.into(),
            description,
        });
    }

    pub fn finish(self) -> Result<PathBuf> {
        let manifest = Manifest {
            subcommand: &self.subcommand,
            label: &self.label,
            files: &self.files,
            warnings: &self.warnings,
        };
        let path = self.root.join("manifest.json");
        std::fs::write(&path, serde_json::to_string_pretty(&manifest)?)?;
        Ok(path)
    }
}
