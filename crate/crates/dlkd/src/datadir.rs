//! Dataset directories.
//!
//! ```text
//! DIR/manifest.txt          every clip
//! DIR/train/manifest.txt    training split
//! DIR/test/manifest.txt     held-out split
//! DIR/clips/<id>.dlkc
//! ```
//!
//! A manifest starts with `# dlkd-manifest v1` followed by space-separated
//! `key=value` generation parameters, then one `id<TAB>path<TAB>label` line
//! per clip with paths relative to the manifest.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use dlkd_core::data::{split, DarkenParams, Dataset, Provenance};

use crate::config::parse_dims;
use crate::error::{CliError, Result};
use crate::formats::{read_clip, write_clip};

pub const MANIFEST: &str = "manifest.txt";
const HEADER: &str = "# dlkd-manifest v1";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Test,
}

impl Split {
    fn dir(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Test => "test",
        }
    }
}

fn header(ds: &Dataset) -> String {
    let p = ds.provenance();
    let mut h = format!(
        "{HEADER} classes={} per_class={} dims={} seed={}",
        p.classes,
        p.per_class,
        p.dims.map(|d| d.to_string()).join("x"),
        p.seed
    );
    if let Some(d) = &p.darken {
        let _ = write!(h, " gamma_dark={} scale={} noise={} noise_seed={}", d.gamma_dark, d.scale, d.sigma, d.seed);
    }
    let _ = write!(h, " names={}", ds.class_names().join(","));
    h
}

fn write_manifest(ds: &Dataset, path: &Path, clip_prefix: &str) -> Result<()> {
    let mut text = header(ds);
    text.push('\n');
    for c in ds.clips() {
        let _ = writeln!(text, "{}\t{}{}.dlkc\t{}", c.id(), clip_prefix, c.id(), c.label());
    }
    std::fs::write(path, text).map_err(|e| CliError::io(path, e))
}

fn create_dir(path: &Path) -> Result<()> {
    std::fs::create_dir_all(path).map_err(|e| CliError::io(path, e))
}

/// Writes every clip plus the full, train and test manifests.
pub fn write_dataset(ds: &Dataset, dir: &Path, train_fraction: f64, split_seed: u64) -> Result<()> {
    let clips_dir = dir.join("clips");
    create_dir(&clips_dir)?;
    for c in ds.clips() {
        write_clip(c, &clips_dir.join(format!("{}.dlkc", c.id())))?;
    }
    write_manifest(ds, &dir.join(MANIFEST), "clips/")?;
    let (train, test) = split(ds, train_fraction, split_seed)?;
    for (part, name) in [(&train, Split::Train), (&test, Split::Test)] {
        let sub = dir.join(name.dir());
        create_dir(&sub)?;
        write_manifest(part, &sub.join(MANIFEST), "../clips/")?;
    }
    Ok(())
}

struct Header {
    provenance: Provenance,
    names: Vec<String>,
}

fn parse_header(line: &str, path: &Path) -> Result<Header> {
    let bad = |message: String| CliError::Format { path: path.to_path_buf(), offset: 0, message };
    let rest = line
        .strip_prefix(HEADER)
        .ok_or_else(|| bad(format!("first line must start with `{HEADER}`")))?;
    let mut kv = std::collections::BTreeMap::new();
    for tok in rest.split_whitespace() {
        let (k, v) = tok.split_once('=').ok_or_else(|| bad(format!("header token `{tok}` is not key=value")))?;
        kv.insert(k, v);
    }
    let get = |k: &str| kv.get(k).copied().ok_or_else(|| bad(format!("header lacks `{k}`")));
    let int = |k: &str| -> Result<u64> { get(k)?.parse().map_err(|_| bad(format!("header `{k}` is not an integer"))) };
    let real = |k: &str| -> Result<f64> { get(k)?.parse().map_err(|_| bad(format!("header `{k}` is not a number"))) };
    let darken = if kv.contains_key("gamma_dark") {
        Some(DarkenParams {
            gamma_dark: real("gamma_dark")?,
            scale: real("scale")?,
            sigma: real("noise")?,
            seed: int("noise_seed")?,
        })
    } else {
        None
    };
    Ok(Header {
        provenance: Provenance {
            classes: int("classes")? as usize,
            per_class: int("per_class")? as usize,
            dims: parse_dims(get("dims")?).map_err(bad)?,
            seed: int("seed")?,
            darken,
        },
        names: get("names")?.split(',').map(str::to_string).collect(),
    })
}

/// Loads the clips listed in a manifest file.
pub fn read_manifest(path: &Path) -> Result<Dataset> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let base = path.parent().unwrap_or(Path::new("."));
    let mut lines = text.lines();
    let first = lines.next().unwrap_or("");
    let h = parse_header(first, path)?;
    let mut offset = first.len() as u64 + 1;
    let mut clips = Vec::new();
    for line in lines {
        let here = offset;
        offset += line.len() as u64 + 1;
        if line.trim().is_empty() {
            continue;
        }
        let bad = |message: String| CliError::Format { path: path.to_path_buf(), offset: here, message };
        let fields: Vec<&str> = line.split('\t').collect();
        let [id, rel, label] = fields[..] else {
            return Err(bad(format!("expected 3 tab-separated fields, got {}", fields.len())));
        };
        let label: usize = label.parse().map_err(|_| bad(format!("label `{label}` is not an integer")))?;
        let clip = read_clip(&base.join(rel))?;
        if clip.id() != id || clip.label() != label {
            return Err(bad(format!(
                "clip file holds {} (label {}), manifest says {} (label {})",
                clip.id(),
                clip.label(),
                id,
                label
            )));
        }
        clips.push(clip);
    }
    Ok(Dataset::new(clips, h.names, h.provenance)?)
}

/// The manifest for `part` under `dir`, falling back to `dir/manifest.txt`
/// when the directory has no split subdirectories.
pub fn manifest_path(dir: &Path, part: Split) -> PathBuf {
    let split_manifest = dir.join(part.dir()).join(MANIFEST);
    if split_manifest.exists() {
        split_manifest
    } else {
        dir.join(MANIFEST)
    }
}

pub fn load_split(dir: &Path, part: Split) -> Result<Dataset> {
    read_manifest(&manifest_path(dir, part))
}
