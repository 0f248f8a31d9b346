//! Import scanning and Python major-version detection over code cells.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;
use std::sync::OnceLock;

use chrono::{DateTime, Utc};
use regex::Regex;

use super::BackportError;
use crate::notebook::{normalize_package_name, Notebook};

/// Top-level standard-library modules of both major lines.
pub const STDLIB_MODULES: &[&str] = &[
    "__future__", "_thread", "abc", "argparse", "array", "ast", "asyncio", "atexit", "base64",
    "bisect", "builtins", "bz2", "calendar", "cgi", "cmath", "codecs", "collections",
    "colorsys", "commands", "concurrent", "configparser", "ConfigParser", "contextlib", "copy",
    "copy_reg", "copyreg", "cPickle", "csv", "cStringIO", "ctypes", "curses", "dataclasses",
    "datetime", "dbm", "decimal", "difflib", "dis", "email", "encodings", "enum", "errno",
    "faulthandler", "fcntl", "filecmp", "fileinput", "fnmatch", "fractions", "ftplib",
    "functools", "gc", "getopt", "getpass", "gettext", "glob", "graphlib", "gzip", "hashlib",
    "heapq", "hmac", "html", "htmlentitydefs", "HTMLParser", "http", "httplib", "imaplib",
    "imp", "importlib", "inspect", "io", "ipaddress", "itertools", "json", "keyword",
    "linecache", "locale", "logging", "lzma", "mailbox", "marshal", "math", "mimetypes",
    "mmap", "multiprocessing", "netrc", "numbers", "operator", "optparse", "os", "pathlib",
    "pdb", "pickle", "pkgutil", "platform", "plistlib", "pprint", "profile", "pstats", "pty",
    "pwd", "queue", "Queue", "quopri", "random", "re", "readline", "reprlib", "resource",
    "sched", "secrets", "select", "selectors", "shelve", "shlex", "shutil", "signal", "site",
    "smtplib", "socket", "socketserver", "sqlite3", "ssl", "stat", "statistics", "string",
    "StringIO", "struct", "subprocess", "sys", "sysconfig", "tarfile", "tempfile", "termios",
    "textwrap", "threading", "time", "timeit", "tkinter", "Tkinter", "token", "tokenize",
    "traceback", "tracemalloc", "types", "typing", "unicodedata", "unittest", "urllib",
    "urllib2", "urlparse", "uuid", "venv", "warnings", "wave", "weakref", "webbrowser",
    "winreg", "xml", "xmlrpc", "zipfile", "zipimport", "zlib", "zoneinfo",
];

const DEFAULT_ALIASES: &[(&str, &str)] = &[
    ("sklearn", "scikit-learn"),
    ("skimage", "scikit-image"),
    ("cv2", "opencv-python"),
    ("PIL", "Pillow"),
    ("yaml", "PyYAML"),
    ("bs4", "beautifulsoup4"),
    ("Bio", "biopython"),
    ("dateutil", "python-dateutil"),
    ("Crypto", "pycryptodome"),
    ("lgb", "lightgbm"),
    ("tensorflow_hub", "tensorflow-hub"),
    ("google.protobuf", "protobuf"),
    ("mpl_toolkits", "matplotlib"),
    ("IPython", "ipython"),
    ("keras_preprocessing", "keras-preprocessing"),
    ("category_encoders", "category-encoders"),
    ("pandas_profiling", "pandas-profiling"),
    ("sentence_transformers", "sentence-transformers"),
    ("umap", "umap-learn"),
    ("fitz", "PyMuPDF"),
    ("attr", "attrs"),
];

/// Module name to index package name.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AliasTable {
    map: BTreeMap<String, String>,
}

impl Default for AliasTable {
    fn default() -> Self {
        AliasTable {
            map: DEFAULT_ALIASES
                .iter()
                .map(|(m, p)| (m.to_string(), p.to_string()))
                .collect(),
        }
    }
}

impl AliasTable {
    pub fn empty() -> Self {
        AliasTable { map: BTreeMap::new() }
    }

    pub fn insert(&mut self, module: &str, package: &str) {
        self.map.insert(module.to_string(), package.to_string());
    }

    /// Reads a flat `module = "package"` TOML (or JSON object) file and
    /// layers it over the built-in entries.
    pub fn load(path: &Path) -> Result<Self, BackportError> {
        let text = std::fs::read_to_string(path)?;
        let bad = |message: String| BackportError::BadIndexFile {
            path: path.to_path_buf(),
            message,
        };
        let extra: BTreeMap<String, String> = if path.extension().is_some_and(|e| e == "json") {
            serde_json::from_str(&text).map_err(|e| bad(e.to_string()))?
        } else {
            toml::from_str(&text).map_err(|e| bad(e.to_string()))?
        };
        let mut table = AliasTable::default();
        table.map.extend(extra);
        Ok(table)
    }

    /// Package for an import path: the longest dotted prefix with an alias
    /// wins, otherwise the top-level module name itself.
    pub fn resolve(&self, module_path: &str) -> String {
        let parts: Vec<&str> = module_path.split('.').collect();
        for n in (1..=parts.len()).rev() {
            if let Some(p) = self.map.get(&parts[..n].join(".")) {
                return p.clone();
            }
        }
        parts[0].to_string()
    }
}

/// Code lines with comments, string-literal blocks and shell/magic lines
/// removed. Deliberately simple: notebooks rarely hide imports in strings.
fn logical_lines(source: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut in_block: Option<&str> = None;
    for raw in source.lines() {
        let mut line = raw.to_string();
        if let Some(q) = in_block {
            match line.find(q) {
                Some(end) => {
                    line = line[end + 3..].to_string();
                    in_block = None;
                }
                None => continue,
            }
        }
        let trimmed = line.trim_start();
        if trimmed.starts_with('!') || trimmed.starts_with('%') {
            continue;
        }
        let code = strip_strings_and_comment(&line, &mut in_block);
        out.push(code);
    }
    out
}

/// Replaces string literal bodies with empty quotes and drops a trailing
/// comment. Opens `in_block` on an unterminated triple-quoted string.
fn strip_strings_and_comment<'a>(line: &str, in_block: &mut Option<&'a str>) -> String {
    let bytes = line.as_bytes();
    let mut out = String::with_capacity(line.len());
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i];
        if c == b'#' {
            break;
        }
        if c == b'"' || c == b'\'' {
            let triple: &'a str = if c == b'"' { "\"\"\"" } else { "'''" };
            if line[i..].starts_with(triple) {
                match line[i + 3..].find(triple) {
                    Some(end) => {
                        out.push_str("\"\"");
                        i += 3 + end + 3;
                        continue;
                    }
                    None => {
                        *in_block = Some(triple);
                        break;
                    }
                }
            }
            out.push(c as char);
            i += 1;
            while i < bytes.len() && bytes[i] != c {
                i += if bytes[i] == b'\\' { 2 } else { 1 };
            }
            out.push(c as char);
            i += 1;
            continue;
        }
        let ch = line[i..].chars().next().expect("in bounds");
        out.push(ch);
        i += ch.len_utf8();
    }
    out
}

fn import_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"^\s*import\s+(.+)$").expect("valid regex"))
}

fn from_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"^\s*from\s+([A-Za-z_][\w.]*)\s+import\b").expect("valid regex"))
}

/// Imported module paths in source order (absolute imports only).
fn imported_modules(nb: &Notebook) -> Vec<String> {
    let mut out = Vec::new();
    for cell in nb.code_cells() {
        for line in logical_lines(&cell.source) {
            for stmt in line.split(';') {
                if let Some(c) = from_re().captures(stmt) {
                    out.push(c[1].to_string());
                } else if let Some(c) = import_re().captures(stmt) {
                    for item in c[1].split(',') {
                        let name = item.split_whitespace().next().unwrap_or("");
                        let name = name.trim_matches(|ch| ch == '(' || ch == ')');
                        if !name.is_empty()
                            && name.chars().all(|ch| ch.is_alphanumeric() || ch == '_' || ch == '.')
                        {
                            out.push(name.to_string());
                        }
                    }
                }
            }
        }
    }
    out
}

/// Third-party packages imported by the notebook, mapped through `aliases`,
/// deduplicated in first-seen order, standard library removed.
pub fn extract_dependencies(nb: &Notebook, aliases: &AliasTable) -> Vec<String> {
    let stdlib: BTreeSet<&str> = STDLIB_MODULES.iter().copied().collect();
    let mut seen = BTreeSet::new();
    let mut out = Vec::new();
    for module in imported_modules(nb) {
        let top = module.split('.').next().unwrap_or("");
        if stdlib.contains(top) {
            continue;
        }
        let pkg = aliases.resolve(&module);
        if seen.insert(normalize_package_name(&pkg)) {
            out.push(pkg);
        }
    }
    out
}

struct Markers {
    py2: Vec<Regex>,
    py3: Vec<Regex>,
}

fn markers() -> &'static Markers {
    static M: OnceLock<Markers> = OnceLock::new();
    M.get_or_init(|| {
        let re = |p: &str| Regex::new(p).expect("valid regex");
        Markers {
            py2: vec![
                // print statement: `print x`, `print "x"`, `print >>f, x`
                re(r"^\s*print\s+[^\s(=.,;)\]]"),
                re(r"\bxrange\s*\("),
                re(r"\braw_input\s*\("),
            ],
            py3: vec![
                re(r"\bprint\s*\("),
                re(r"^\s*async\s+(def|for|with)\b"),
                re(r"\bawait\s+\S"),
            ],
        }
    })
}

fn fstring_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r#"(?:^|[^\w])(?:[fF][rR]?|[rR][fF])["']"#).expect("valid regex"))
}

/// Python major line from syntax markers. Python 2 needs positive evidence
/// and no Python 3 marker; without markers the answer is 3.
pub fn detect_major(nb: &Notebook, submitted_at: DateTime<Utc>) -> u32 {
    let m = markers();
    let mut py2 = false;
    for cell in nb.code_cells() {
        // f-string prefixes must be checked before literals are blanked
        for raw in cell.source.lines() {
            let t = raw.trim_start();
            if !t.starts_with('#') && !t.starts_with('!') && !t.starts_with('%') && fstring_re().is_match(raw) {
                return 3;
            }
        }
        for line in logical_lines(&cell.source) {
            if m.py3.iter().any(|r| r.is_match(&line)) {
                return 3;
            }
            py2 |= m.py2.iter().any(|r| r.is_match(&line));
        }
    }
    if py2 {
        2
    } else {
        log::debug!("no syntax markers; defaulting to Python 3 (submitted {submitted_at})");
        3
    }
}
