//! Directory-per-class dataset scanning and train/test splitting.
//!
//! Layout: `root/<class>/<session>/<image>` or, without sessions,
//! `root/<class>/<image>`. The first session (lexicographic) of a class is
//! the training split and later sessions are the test split; classes
//! without sessions get a seeded per-class 50/50 split.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;

use crate::{rng, Error, Result};

const IMAGE_EXTS: [&str; 4] = ["png", "jpg", "jpeg", "pgm"];
const CACHE_HEADER: &str = "# starlk manifest v1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Split {
    Train,
    Test,
}

impl Split {
    fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Test => "test",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Entry {
    /// Path relative to the manifest root.
    pub path: PathBuf,
    pub class: usize,
    /// Session directory name; empty when the class has no sessions.
    pub session: String,
    pub split: Split,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DatasetManifest {
    pub root: PathBuf,
    pub classes: Vec<String>,
    pub entries: Vec<Entry>,
    pub side: usize,
    pub channels: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SplitRule {
    /// Seed for the 50/50 fallback split.
    pub seed: u64,
}

fn is_image(p: &Path) -> bool {
    p.extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| IMAGE_EXTS.iter().any(|x| x.eq_ignore_ascii_case(e)))
}

fn sorted_children(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for e in fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        out.push(e.map_err(|e| Error::io(dir, e))?.path());
    }
    out.sort();
    Ok(out)
}

fn rel(root: &Path, p: &Path) -> PathBuf {
    p.strip_prefix(root).unwrap_or(p).to_path_buf()
}

pub fn scan_dataset(root: &Path, rule: SplitRule, side: usize) -> Result<DatasetManifest> {
    if !root.is_dir() {
        return Err(Error::Dataset(format!("dataset root {} is not a directory", root.display())));
    }
    let class_dirs: Vec<PathBuf> = sorted_children(root)?.into_iter().filter(|p| p.is_dir()).collect();
    if class_dirs.is_empty() {
        return Err(Error::Dataset(format!("no class directories under {}", root.display())));
    }
    let mut classes = Vec::new();
    let mut entries = Vec::new();
    for (ci, dir) in class_dirs.iter().enumerate() {
        let name = dir.file_name().and_then(|n| n.to_str()).unwrap_or_default().to_string();
        let children = sorted_children(dir)?;
        let sessions: Vec<&PathBuf> = children.iter().filter(|p| p.is_dir()).collect();
        let before = entries.len();
        if sessions.is_empty() {
            let mut images: Vec<&PathBuf> = children.iter().filter(|p| is_image(p)).collect();
            let mut r = rng::substream(rule.seed, rng::TAG_SPLIT, ci as u64);
            images.shuffle(&mut r);
            let n_train = images.len().div_ceil(2);
            let mut chosen: Vec<(PathBuf, Split)> = images
                .iter()
                .enumerate()
                .map(|(k, p)| (rel(root, p), if k < n_train { Split::Train } else { Split::Test }))
                .collect();
            chosen.sort_by(|a, b| a.0.cmp(&b.0));
            entries.extend(chosen.into_iter().map(|(path, split)| Entry {
                path,
                class: ci,
                session: String::new(),
                split,
            }));
        } else {
            for (si, sdir) in sessions.iter().enumerate() {
                let tag = sdir.file_name().and_then(|n| n.to_str()).unwrap_or_default().to_string();
                for img in sorted_children(sdir)?.into_iter().filter(|p| is_image(p)) {
                    entries.push(Entry {
                        path: rel(root, &img),
                        class: ci,
                        session: tag.clone(),
                        split: if si == 0 { Split::Train } else { Split::Test },
                    });
                }
            }
        }
        if entries.len() == before {
            return Err(Error::Dataset(format!("class directory {} contains no images", dir.display())));
        }
        classes.push(name);
    }
    Ok(DatasetManifest {
        root: root.to_path_buf(),
        classes,
        entries,
        side,
        channels: 1,
    })
}

impl DatasetManifest {
    pub fn num_classes(&self) -> usize {
        self.classes.len()
    }

    pub fn split(&self, split: Split) -> impl Iterator<Item = &Entry> {
        self.entries.iter().filter(move |e| e.split == split)
    }

    /// Every class must have at least one training and one test entry.
    pub fn check_split(&self) -> Result<()> {
        for (ci, name) in self.classes.iter().enumerate() {
            for s in [Split::Train, Split::Test] {
                if !self.split(s).any(|e| e.class == ci) {
                    return Err(Error::Dataset(format!("class {name} has no {} entries", s.as_str())));
                }
            }
        }
        Ok(())
    }

    pub fn to_cache_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "{CACHE_HEADER}");
        let _ = writeln!(s, "side={}", self.side);
        let _ = writeln!(s, "classes={}", self.classes.join(","));
        for e in &self.entries {
            let _ = writeln!(
                s,
                "{}\t{}\t{}\t{}",
                e.path.to_string_lossy().replace('\\', "/"),
                e.class,
                e.session,
                e.split.as_str()
            );
        }
        s
    }

    pub fn from_cache_text(root: &Path, text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate();
        let bad = |line: usize, msg: &str| Error::Config {
            line: line + 1,
            msg: msg.to_string(),
        };
        match lines.next() {
            Some((_, CACHE_HEADER)) => {}
            _ => return Err(bad(0, "missing manifest header")),
        }
        let mut side = None;
        let mut classes = None;
        let mut entries = Vec::new();
        for (i, line) in lines {
            if let Some(v) = line.strip_prefix("side=") {
                side = Some(v.parse().map_err(|_| bad(i, "bad side"))?);
            } else if let Some(v) = line.strip_prefix("classes=") {
                classes = Some(v.split(',').map(str::to_string).collect::<Vec<_>>());
            } else if !line.is_empty() {
                let f: Vec<&str> = line.split('\t').collect();
                let [path, class, session, split] = f[..] else {
                    return Err(bad(i, "expected 4 tab-separated fields"));
                };
                entries.push(Entry {
                    path: PathBuf::from(path),
                    class: class.parse().map_err(|_| bad(i, "bad class index"))?,
                    session: session.to_string(),
                    split: match split {
                        "train" => Split::Train,
                        "test" => Split::Test,
                        _ => return Err(bad(i, "split must be train|test")),
                    },
                });
            }
        }
        let classes = classes.ok_or_else(|| bad(0, "missing classes line"))?;
        if let Some(e) = entries.iter().find(|e| e.class >= classes.len()) {
            return Err(Error::Dataset(format!("entry {} has class {} out of range", e.path.display(), e.class)));
        }
        Ok(DatasetManifest {
            root: root.to_path_buf(),
            classes,
            entries,
            side: side.ok_or_else(|| bad(0, "missing side line"))?,
            channels: 1,
        })
    }

    pub fn write_cache(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_cache_text()).map_err(|e| Error::io(path, e))
    }

    pub fn read_cache(root: &Path, path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_cache_text(root, &text)
    }
}
