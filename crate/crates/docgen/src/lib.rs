//! Documentation build: renders `docs/math-index.md` from `docs/index.toml`,
//! requires an index entry for every public math function and rejects
//! broken relative links in the markdown files.

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::LazyLock;

use regex::Regex;
use serde::Deserialize;
use thiserror::Error;

pub const INDEX_SOURCE: &str = "docs/index.toml";
pub const INDEX_OUTPUT: &str = "docs/math-index.md";
pub const CORE_SRC: &str = "crates/core/src";

#[derive(Debug, Error, PartialEq)]
pub enum DocError {
    #[error("{file}: link `{target}` does not resolve")]
    BrokenLink { file: PathBuf, target: String },

    #[error("public function `{0}` has no index entry or exclusion")]
    MissingIndexEntry(String),

    #[error("index target `{0}` is not a public function of alphacross-core")]
    UnknownTarget(String),

    #[error("{0} is out of date; rerun alphacross-docgen")]
    Stale(PathBuf),

    #[error("{path}: {message}")]
    Io { path: PathBuf, message: String },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> DocError + '_ {
    move |e| DocError::Io {
        path: path.to_path_buf(),
        message: e.to_string(),
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Entry {
    pub key: String,
    pub formula: String,
    pub target: String,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Index {
    pub modules: Vec<String>,
    #[serde(default)]
    pub exclude: Vec<String>,
    #[serde(rename = "entry", default)]
    pub entries: Vec<Entry>,
}

pub fn load_index(path: &Path) -> Result<Index, DocError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    toml::from_str(&text).map_err(|e| DocError::Io {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

static PUB_FN: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"(?m)^pub fn ([a-z_][a-z0-9_]*)").unwrap());

/// Top-level `pub fn` items of each module, as `module::name`.
pub fn public_functions(src: &Path, modules: &[String]) -> Result<BTreeSet<String>, DocError> {
    let mut out = BTreeSet::new();
    for m in modules {
        let path = src.join(format!("{m}.rs"));
        let text = fs::read_to_string(&path).map_err(io_err(&path))?;
        // unit tests sit after the cfg(test) marker
        let body = text.split("#[cfg(test)]").next().unwrap_or_default();
        for cap in PUB_FN.captures_iter(body) {
            out.insert(format!("{m}::{}", &cap[1]));
        }
    }
    Ok(out)
}

pub fn check_index(index: &Index, functions: &BTreeSet<String>) -> Result<(), DocError> {
    let targets: BTreeSet<&str> = index.entries.iter().map(|e| e.target.as_str()).collect();
    for t in targets.iter().copied().chain(index.exclude.iter().map(String::as_str)) {
        if !functions.contains(t) {
            return Err(DocError::UnknownTarget(t.to_string()));
        }
    }
    for f in functions {
        if !targets.contains(f.as_str()) && !index.exclude.contains(f) {
            return Err(DocError::MissingIndexEntry(f.clone()));
        }
    }
    Ok(())
}

fn escape_cell(s: &str) -> String {
    s.replace('|', "\\|")
}

pub fn render(index: &Index) -> String {
    let mut out = String::from(
        "# Math-to-code index\n\n\
         Generated by `alphacross-docgen` from `index.toml`; do not edit by hand.\n\n\
         | Formula | Expression | Code |\n|---|---|---|\n",
    );
    for e in &index.entries {
        out += &format!(
            "| {} | `{}` | `alphacross_core::{}` |\n",
            escape_cell(&e.key),
            escape_cell(&e.formula),
            e.target
        );
    }
    out
}

static LINK: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"\[[^\]]*\]\(([^)\s]+)\)").unwrap());

/// Relative link targets of a markdown document, without fragments.
pub fn relative_links(markdown: &str) -> Vec<String> {
    let mut in_code = false;
    let mut out = Vec::new();
    for line in markdown.lines() {
        if line.trim_start().starts_with("```") {
            in_code = !in_code;
            continue;
        }
        if in_code {
            continue;
        }
        for cap in LINK.captures_iter(line) {
            let target = &cap[1];
            if target.contains("://") || target.starts_with("mailto:") || target.starts_with('#') {
                continue;
            }
            let file = target.split('#').next().unwrap_or_default();
            out.push(file.to_string());
        }
    }
    out
}

/// `README.md` plus every `docs/*.md`.
pub fn markdown_files(root: &Path) -> Result<Vec<PathBuf>, DocError> {
    let docs = root.join("docs");
    let mut files = vec![root.join("README.md")];
    let mut entries: Vec<PathBuf> = fs::read_dir(&docs)
        .map_err(io_err(&docs))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "md"))
        .collect();
    entries.sort();
    files.extend(entries);
    Ok(files)
}

pub fn check_links(files: &[PathBuf], rendered: Option<(&Path, &str)>) -> Result<(), DocError> {
    for file in files {
        let text = match rendered {
            Some((p, t)) if p == file => t.to_string(),
            _ => fs::read_to_string(file).map_err(io_err(file))?,
        };
        let dir = file.parent().unwrap_or(Path::new("."));
        for target in relative_links(&text) {
            let path = dir.join(&target);
            let pending = rendered.is_some_and(|(p, _)| same_location(&path, p));
            if !pending && !path.exists() {
                return Err(DocError::BrokenLink {
                    file: file.clone(),
                    target,
                });
            }
        }
    }
    Ok(())
}

// The generated index may not exist on disk yet.
fn same_location(a: &Path, b: &Path) -> bool {
    let dir = |p: &Path| p.parent().and_then(|d| d.canonicalize().ok());
    a.file_name() == b.file_name() && dir(a).is_some() && dir(a) == dir(b)
}

#[derive(Debug)]
pub struct BuildReport {
    pub entries: usize,
    pub functions: usize,
    pub files_checked: usize,
    pub written: bool,
}

/// Full documentation build rooted at the repository root. With `check`,
/// nothing is written and a stale index is an error.
pub fn build(root: &Path, check: bool) -> Result<BuildReport, DocError> {
    let index = load_index(&root.join(INDEX_SOURCE))?;
    let functions = public_functions(&root.join(CORE_SRC), &index.modules)?;
    check_index(&index, &functions)?;
    let rendered = render(&index);
    let out = root.join(INDEX_OUTPUT);
    let current = fs::read_to_string(&out).ok();
    let mut files = markdown_files(root)?;
    if !files.contains(&out) {
        files.push(out.clone());
    }
    check_links(&files, Some((&out, &rendered)))?;
    let up_to_date = current.as_deref() == Some(rendered.as_str());
    if check && !up_to_date {
        return Err(DocError::Stale(out));
    }
    if !up_to_date {
        fs::write(&out, &rendered).map_err(io_err(&out))?;
    }
    Ok(BuildReport {
        entries: index.entries.len(),
        functions: functions.len(),
        files_checked: files.len(),
        written: !up_to_date,
    })
}
