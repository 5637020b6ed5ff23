use std::fmt;
use std::path::{Component, Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

const SEPARATOR: char = '!';

/// Archive-aware file identity: a filesystem path plus the member names
/// leading to a file inside (possibly nested) archives.
///
/// Rendered as `outer!member!member`. A literal `!` in any component is
/// written `%21` and a literal `%` is written `%25`, so rendering is
/// injective.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct LogicalPath {
    outer: String,
    segments: Vec<String>,
}

impl LogicalPath {
    pub fn plain(path: &Path) -> Self {
        LogicalPath {
            outer: path.to_string_lossy().into_owned(),
            segments: Vec::new(),
        }
    }

    pub fn member(&self, name: impl Into<String>) -> Self {
        let mut segments = self.segments.clone();
        segments.push(name.into());
        LogicalPath {
            outer: self.outer.clone(),
            segments,
        }
    }

    pub fn outer_path(&self) -> &Path {
        Path::new(&self.outer)
    }

    pub fn archive_segments(&self) -> &[String] {
        &self.segments
    }

    pub fn archive_depth(&self) -> usize {
        self.segments.len()
    }

    /// The innermost name: last member segment, else the file name.
    pub fn leaf_name(&self) -> &str {
        match self.segments.last() {
            Some(seg) => seg,
            None => self.outer_path().file_name().and_then(|n| n.to_str()).unwrap_or(""),
        }
    }

    /// True when `self` is `scope` itself or lies beneath it, either as a
    /// path under a directory or as a member of an archive.
    pub fn is_within(&self, scope: &LogicalPath) -> bool {
        if scope.segments.is_empty() {
            return self.outer_path().starts_with(scope.outer_path());
        }
        self.outer == scope.outer && self.segments.starts_with(&scope.segments)
    }

    pub fn is_under_root(&self, root: &Path) -> bool {
        self.outer_path().starts_with(root)
    }
}

fn escape(part: &str, out: &mut String) {
    for c in part.chars() {
        match c {
            '%' => out.push_str("%25"),
            SEPARATOR => out.push_str("%21"),
            c => out.push(c),
        }
    }
}

fn unescape(part: &str) -> std::result::Result<String, PathParseError> {
    let mut out = String::with_capacity(part.len());
    let mut rest = part;
    while let Some(i) = rest.find('%') {
        out.push_str(&rest[..i]);
        match rest.get(i..i + 3) {
            Some("%25") => out.push('%'),
            Some("%21") => out.push(SEPARATOR),
            _ => return Err(PathParseError(part.to_string())),
        }
        rest = &rest[i + 3..];
    }
    out.push_str(rest);
    Ok(out)
}

impl fmt::Display for LogicalPath {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut out = String::with_capacity(self.outer.len() + 16);
        escape(&self.outer, &mut out);
        for seg in &self.segments {
            out.push(SEPARATOR);
            escape(seg, &mut out);
        }
        f.write_str(&out)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PathParseError(pub String);

impl fmt::Display for PathParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "invalid escape in logical path component {:?}", self.0)
    }
}

impl std::error::Error for PathParseError {}

impl FromStr for LogicalPath {
    type Err = PathParseError;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        let mut parts = s.split(SEPARATOR);
        let outer = unescape(parts.next().unwrap_or(""))?;
        let segments = parts.map(unescape).collect::<std::result::Result<_, _>>()?;
        Ok(LogicalPath { outer, segments })
    }
}

impl Serialize for LogicalPath {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for LogicalPath {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        String::deserialize(deserializer)?
            .parse()
            .map_err(serde::de::Error::custom)
    }
}

/// Absolute, lexically normalized form of a root: `.` dropped, `..` folded.
pub fn normalize_root(path: &Path) -> Result<PathBuf> {
    if !path.is_absolute() {
        return Err(Error::validation(
            "paths",
            format!("{} is not an absolute path", path.display()),
        ));
    }
    let mut out = PathBuf::new();
    for component in path.components() {
        match component {
            Component::CurDir => {}
            Component::ParentDir => {
                out.pop();
            }
            other => out.push(other.as_os_str()),
        }
    }
    Ok(out)
}
