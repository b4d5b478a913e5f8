//! Dataset manifest: two header-bearing tab-separated files in one directory.
//!
//! `tags.tsv` — `# mtag-tags v1`, a header row, then `name<TAB>kind` rows
//! (kind is `classification` or `regression`).
//!
//! `clips.tsv` — `# mtag-clips v1`, a header row, then one row per clip:
//! `clip_id, audio_path, artist_id, duration_s, split, <one column per tag>`.
//! Audio paths are relative to the manifest directory; the split column is
//! `train`, `valid` or `test`.

use std::collections::HashSet;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use super::{DataError, Result};
use crate::checkpoint::write_atomic;
use crate::metrics::TagKind;

pub const TAGS_FILE: &str = "tags.tsv";
pub const CLIPS_FILE: &str = "clips.tsv";
const TAGS_HEADER: &str = "# mtag-tags v1";
const CLIPS_HEADER: &str = "# mtag-clips v1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Split {
    Train,
    Valid,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Valid, Split::Test];

    pub fn parse(text: &str) -> Option<Split> {
        match text.trim() {
            "train" => Some(Split::Train),
            "valid" => Some(Split::Valid),
            "test" => Some(Split::Test),
            _ => None,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Valid => "valid",
            Split::Test => "test",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TagDef {
    pub name: String,
    pub kind: TagKind,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClipRecord {
    pub clip_id: String,
    pub audio_path: String,
    pub artist_id: String,
    pub duration_s: f64,
    pub split: Split,
    /// One value per tag, aligned with the manifest's tag list.
    pub targets: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetManifest {
    pub tags: Vec<TagDef>,
    pub clips: Vec<ClipRecord>,
}

impl DatasetManifest {
    pub fn new(tags: Vec<TagDef>, clips: Vec<ClipRecord>) -> Result<Self> {
        let m = DatasetManifest { tags, clips };
        m.validate(None)?;
        Ok(m)
    }

    pub fn n_tags(&self) -> usize {
        self.tags.len()
    }

    pub fn tag_names(&self) -> Vec<String> {
        self.tags.iter().map(|t| t.name.clone()).collect()
    }

    pub fn tag_kinds(&self) -> Vec<TagKind> {
        self.tags.iter().map(|t| t.kind).collect()
    }

    pub fn split_clips(&self, split: Split) -> Vec<&ClipRecord> {
        self.clips.iter().filter(|c| c.split == split).collect()
    }

    pub fn clip(&self, clip_id: &str) -> Option<&ClipRecord> {
        self.clips.iter().find(|c| c.clip_id == clip_id)
    }

    /// Keep only the tags accepted by the filter (targets re-aligned).
    pub fn retain_tags(&self, keep: impl Fn(&TagDef) -> bool) -> Result<DatasetManifest> {
        let kept: Vec<usize> =
            (0..self.tags.len()).filter(|&i| keep(&self.tags[i])).collect();
        if kept.is_empty() {
            return Err(DataError::Validation("tag filter keeps nothing".into()));
        }
        let tags = kept.iter().map(|&i| self.tags[i].clone()).collect();
        let clips = self
            .clips
            .iter()
            .map(|c| ClipRecord {
                targets: kept.iter().map(|&i| c.targets[i]).collect(),
                ..c.clone()
            })
            .collect();
        Ok(DatasetManifest { tags, clips })
    }

    /// Invariants: unique clip ids, aligned target vectors, targets in range,
    /// binary classification targets, and (when a base dir is given) audio
    /// files present on disk.
    pub fn validate(&self, audio_base: Option<&Path>) -> Result<()> {
        if self.tags.is_empty() {
            return Err(DataError::Validation("manifest has no tags".into()));
        }
        let mut names = HashSet::new();
        for t in &self.tags {
            if !names.insert(t.name.as_str()) {
                return Err(DataError::Validation(format!("duplicate tag '{}'", t.name)));
            }
        }
        let mut ids = HashSet::new();
        for c in &self.clips {
            if !ids.insert(c.clip_id.as_str()) {
                return Err(DataError::DuplicateClip { id: c.clip_id.clone() });
            }
            if c.artist_id.trim().is_empty() {
                return Err(DataError::Validation(format!(
                    "clip '{}' has an empty artist id",
                    c.clip_id
                )));
            }
            if c.targets.len() != self.tags.len() {
                return Err(DataError::Validation(format!(
                    "clip '{}' has {} targets for {} tags",
                    c.clip_id,
                    c.targets.len(),
                    self.tags.len()
                )));
            }
            for (tag, &v) in self.tags.iter().zip(&c.targets) {
                if !(0.0..=1.0).contains(&v) || !v.is_finite() {
                    return Err(DataError::TargetOutOfRange {
                        id: c.clip_id.clone(),
                        tag: tag.name.clone(),
                        value: v,
                    });
                }
                if tag.kind == TagKind::Classification && v != 0.0 && v != 1.0 {
                    return Err(DataError::NonBinaryTarget {
                        id: c.clip_id.clone(),
                        tag: tag.name.clone(),
                        value: v,
                    });
                }
            }
            if let Some(base) = audio_base {
                let path = base.join(&c.audio_path);
                if !path.is_file() {
                    return Err(DataError::MissingAudio {
                        id: c.clip_id.clone(),
                        path: path.display().to_string(),
                    });
                }
            }
        }
        Ok(())
    }

    /// Resolve a clip's audio path against the manifest directory.
    pub fn audio_path(&self, dir: &Path, clip: &ClipRecord) -> PathBuf {
        dir.join(&clip.audio_path)
    }

    /// Target matrix (row-major, one row per clip) for a split, aligned with
    /// the returned clip-id order.
    pub fn targets_for_split(&self, split: Split) -> (Vec<String>, Vec<f64>) {
        let clips = self.split_clips(split);
        let ids = clips.iter().map(|c| c.clip_id.clone()).collect();
        let flat = clips.iter().flat_map(|c| c.targets.iter().copied()).collect();
        (ids, flat)
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        let io = |path: &Path, e: std::io::Error| DataError::Io {
            path: path.display().to_string(),
            source: e,
        };
        let mut tags = format!("{}\nname\tkind\n", TAGS_HEADER);
        for t in &self.tags {
            tags.push_str(&format!("{}\t{}\n", t.name, t.kind.name()));
        }
        let tags_path = dir.join(TAGS_FILE);
        write_atomic(&tags_path, tags.as_bytes()).map_err(|e| io(&tags_path, e))?;

        let mut clips = String::from(CLIPS_HEADER);
        clips.push_str("\nclip_id\taudio_path\tartist_id\tduration_s\tsplit");
        for t in &self.tags {
            clips.push('\t');
            clips.push_str(&t.name);
        }
        clips.push('\n');
        for c in &self.clips {
            clips.push_str(&format!(
                "{}\t{}\t{}\t{}\t{}",
                c.clip_id, c.audio_path, c.artist_id, c.duration_s, c.split
            ));
            for v in &c.targets {
                clips.push_str(&format!("\t{}", v));
            }
            clips.push('\n');
        }
        let clips_path = dir.join(CLIPS_FILE);
        write_atomic(&clips_path, clips.as_bytes()).map_err(|e| io(&clips_path, e))?;
        Ok(())
    }

    /// Load and validate a manifest directory. `check_audio` controls whether
    /// audio files must exist (they must for extract/train, not for a pure
    /// metrics run on saved predictions).
    pub fn load(dir: &Path, check_audio: bool) -> Result<Self> {
        let tags = load_tags(&dir.join(TAGS_FILE))?;
        let clips = load_clips(&dir.join(CLIPS_FILE), &tags)?;
        let m = DatasetManifest { tags, clips };
        m.validate(check_audio.then_some(dir))?;
        Ok(m)
    }
}

fn read_lines(path: &Path) -> Result<Vec<String>> {
    let text = fs::read_to_string(path)
        .map_err(|e| DataError::Io { path: path.display().to_string(), source: e })?;
    Ok(text.lines().map(|l| l.to_string()).collect())
}

fn load_tags(path: &Path) -> Result<Vec<TagDef>> {
    let lines = read_lines(path)?;
    let file = path.display().to_string();
    if lines.first().map(|l| l.trim()) != Some(TAGS_HEADER) {
        return Err(DataError::Parse {
            file,
            line: 1,
            detail: format!("expected header '{}'", TAGS_HEADER),
        });
    }
    let mut tags = Vec::new();
    for (i, line) in lines.iter().enumerate().skip(2) {
        if line.trim().is_empty() {
            continue;
        }
        let mut cols = line.split('\t');
        let name = cols.next().unwrap_or_default().trim().to_string();
        let kind_text = cols.next().unwrap_or_default();
        let kind = TagKind::parse(kind_text).ok_or_else(|| DataError::Parse {
            file: file.clone(),
            line: i + 1,
            detail: format!("unknown tag kind '{}'", kind_text.trim()),
        })?;
        if name.is_empty() {
            return Err(DataError::Parse {
                file: file.clone(),
                line: i + 1,
                detail: "empty tag name".into(),
            });
        }
        tags.push(TagDef { name, kind });
    }
    Ok(tags)
}

fn load_clips(path: &Path, tags: &[TagDef]) -> Result<Vec<ClipRecord>> {
    let lines = read_lines(path)?;
    let file = path.display().to_string();
    if lines.first().map(|l| l.trim()) != Some(CLIPS_HEADER) {
        return Err(DataError::Parse {
            file,
            line: 1,
            detail: format!("expected header '{}'", CLIPS_HEADER),
        });
    }
    let parse_err = |line: usize, detail: String| DataError::Parse {
        file: path.display().to_string(),
        line,
        detail,
    };
    let mut clips = Vec::new();
    for (i, line) in lines.iter().enumerate().skip(2) {
        if line.trim().is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() != 5 + tags.len() {
            return Err(parse_err(
                i + 1,
                format!("expected {} columns, got {}", 5 + tags.len(), cols.len()),
            ));
        }
        let duration_s: f64 = cols[3]
            .parse()
            .map_err(|_| parse_err(i + 1, format!("bad duration '{}'", cols[3])))?;
        let split = Split::parse(cols[4])
            .ok_or_else(|| parse_err(i + 1, format!("bad split '{}'", cols[4])))?;
        let mut targets = Vec::with_capacity(tags.len());
        for (t, raw) in cols[5..].iter().enumerate() {
            let v: f64 = raw.parse().map_err(|_| {
                parse_err(i + 1, format!("bad target '{}' for tag '{}'", raw, tags[t].name))
            })?;
            targets.push(v);
        }
        clips.push(ClipRecord {
            clip_id: cols[0].trim().to_string(),
            audio_path: cols[1].trim().to_string(),
            artist_id: cols[2].trim().to_string(),
            duration_s,
            split,
            targets,
        });
    }
    Ok(clips)
}
