//! Dataset directory layout: `images/%06d.png`, `clouds/%06d.bin`,
//! `poses.txt` (`id timestamp_ns x y z`) and `manifest.txt` (`id split`).

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use triplace_core::{Error, Result};

pub(crate) const MODULE: &str = "dataio";

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Split {
    Db,
    Query,
}

impl FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "db" => Ok(Split::Db),
            "query" => Ok(Split::Query),
            other => Err(Error::contract(MODULE, format!("unknown split `{other}` (expected db or query)"))),
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Db => "db",
            Split::Query => "query",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PoseRecord {
    pub timestamp_ns: u64,
    /// Position in meters.
    pub position: [f64; 3],
}

#[derive(Clone, Debug, PartialEq)]
pub struct DatasetManifest {
    pub root: PathBuf,
    /// Sample ids with their split, in manifest order.
    pub entries: Vec<(u64, Split)>,
    pub poses: BTreeMap<u64, PoseRecord>,
}

pub fn image_path(root: &Path, id: u64) -> PathBuf {
    root.join("images").join(format!("{id:06}.png"))
}

pub fn cloud_path(root: &Path, id: u64) -> PathBuf {
    root.join("clouds").join(format!("{id:06}.bin"))
}

pub(crate) fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(MODULE, path, e))
}

fn parse_field<T: FromStr>(tok: Option<&str>, what: &str, path: &Path, line: usize) -> Result<T> {
    tok.and_then(|t| t.parse().ok()).ok_or_else(|| {
        Error::format(
            MODULE,
            format!("{}:{}: missing or malformed {what}", path.display(), line + 1),
        )
    })
}

/// Parse a pose file; blank lines are skipped.
pub fn parse_poses(text: &str, path: &Path) -> Result<BTreeMap<u64, PoseRecord>> {
    let mut out = BTreeMap::new();
    for (n, line) in text.lines().enumerate() {
        let mut it = line.split_whitespace();
        let Some(first) = it.next() else { continue };
        let id: u64 = parse_field(Some(first), "id", path, n)?;
        let timestamp_ns = parse_field(it.next(), "timestamp", path, n)?;
        let x = parse_field(it.next(), "x", path, n)?;
        let y = parse_field(it.next(), "y", path, n)?;
        let z = parse_field(it.next(), "z", path, n)?;
        if it.next().is_some() {
            return Err(Error::format(MODULE, format!("{}:{}: trailing fields", path.display(), n + 1)));
        }
        let rec = PoseRecord {
            timestamp_ns,
            position: [x, y, z],
        };
        if !rec.position.iter().all(|v: &f64| v.is_finite()) {
            return Err(Error::format(MODULE, format!("{}:{}: non-finite position", path.display(), n + 1)));
        }
        if out.insert(id, rec).is_some() {
            return Err(Error::format(MODULE, format!("{}: duplicate id {id}", path.display())));
        }
    }
    Ok(out)
}

pub fn read_poses(path: &Path) -> Result<BTreeMap<u64, PoseRecord>> {
    parse_poses(&read_text(path)?, path)
}

pub fn format_poses(poses: &BTreeMap<u64, PoseRecord>) -> String {
    poses
        .iter()
        .map(|(id, r)| {
            format!(
                "{id} {} {} {} {}\n",
                r.timestamp_ns, r.position[0], r.position[1], r.position[2]
            )
        })
        .collect()
}

pub fn format_manifest(entries: &[(u64, Split)]) -> String {
    entries.iter().map(|(id, s)| format!("{id} {s}\n")).collect()
}

impl DatasetManifest {
    /// Read `manifest.txt` and `poses.txt` under `root`; every manifest id
    /// must have a pose line.
    pub fn open(root: &Path) -> Result<Self> {
        let mpath = root.join("manifest.txt");
        let text = read_text(&mpath)?;
        let mut entries = Vec::new();
        for (n, line) in text.lines().enumerate() {
            let mut it = line.split_whitespace();
            let Some(first) = it.next() else { continue };
            let id = parse_field(Some(first), "id", &mpath, n)?;
            let split: Split = it
                .next()
                .ok_or_else(|| Error::format(MODULE, format!("{}:{}: missing split", mpath.display(), n + 1)))?
                .parse()
                .map_err(|e: Error| Error::format(MODULE, format!("{}:{}: {e}", mpath.display(), n + 1)))?;
            entries.push((id, split));
        }
        let poses = read_poses(&root.join("poses.txt"))?;
        for (id, _) in &entries {
            if !poses.contains_key(id) {
                return Err(Error::format(MODULE, format!("manifest id {id} has no pose line")));
            }
        }
        Ok(DatasetManifest {
            root: root.to_path_buf(),
            entries,
            poses,
        })
    }

    pub fn ids(&self, split: Split) -> Vec<u64> {
        self.entries.iter().filter(|(_, s)| *s == split).map(|(id, _)| *id).collect()
    }

    pub fn all_ids(&self) -> Vec<u64> {
        self.entries.iter().map(|(id, _)| *id).collect()
    }

    pub fn positions(&self) -> BTreeMap<u64, [f64; 3]> {
        self.entries
            .iter()
            .map(|(id, _)| (*id, self.poses[id].position))
            .collect()
    }
}
