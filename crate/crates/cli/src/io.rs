//! File plumbing: inputs, config overrides, CSV/JSON/gnuplot outputs.

use std::fmt;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::Value;

/// Errors in how the command was invoked, as opposed to what it computed.
#[derive(Debug)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

pub fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

pub fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| usage(format!("cannot read {}: {e}", path.display())))
}

/// Reads a JSON document and applies `key=value` overrides. Keys are
/// dotted paths into the document; values are parsed as JSON, falling back
/// to a plain string.
pub fn load_document<T: DeserializeOwned>(path: &Path, overrides: &[String]) -> Result<T> {
    let text = read_text(path)?;
    let doc = serde_json::from_str::<Value>(&text).with_context(|| format!("{} is not valid JSON", path.display()))?;
    finish(doc, overrides, &path.display().to_string())
}

/// As [`load_document`], starting from `T::default()` when no path is given.
pub fn load_config<T: DeserializeOwned + Serialize + Default>(path: Option<&Path>, overrides: &[String]) -> Result<T> {
    match path {
        Some(p) => load_document(p, overrides),
        None => finish(serde_json::to_value(T::default())?, overrides, "built-in defaults"),
    }
}

fn finish<T: DeserializeOwned>(mut doc: Value, overrides: &[String], source: &str) -> Result<T> {
    for item in overrides {
        let (key, raw) =
            item.split_once('=').ok_or_else(|| usage(format!("override `{item}` is not of the form key=value")))?;
        let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
        set_path(&mut doc, key, value)?;
    }
    serde_json::from_value(doc).with_context(|| format!("invalid config in {source}"))
}

fn set_path(doc: &mut Value, key: &str, value: Value) -> Result<()> {
    let mut node = doc;
    let parts: Vec<&str> = key.split('.').collect();
    for (i, part) in parts.iter().enumerate() {
        let obj =
            node.as_object_mut().ok_or_else(|| usage(format!("override `{key}`: `{part}` is not inside an object")))?;
        if i + 1 == parts.len() {
            obj.insert(part.to_string(), value);
            return Ok(());
        }
        node = obj.entry(part.to_string()).or_insert_with(|| Value::Object(Default::default()));
    }
    Err(usage(format!("override key `{key}` is empty")))
}

/// Resolves `path` relative to the directory holding `base`.
pub fn relative_to(base: &Path, path: &Path) -> PathBuf {
    if path.is_absolute() {
        path.to_path_buf()
    } else {
        base.parent().unwrap_or(Path::new(".")).join(path)
    }
}

/// Round-trip float formatting: 17 significant digits.
pub fn fmt_f64(x: f64) -> String {
    if x == 0.0 {
        "0".to_string()
    } else if x.is_finite() {
        format!("{x:.16e}")
    } else {
        x.to_string()
    }
}

pub enum Field {
    Float(f64),
    Int(u64),
}

impl Field {
    fn render(&self) -> String {
        match self {
            Field::Float(x) => fmt_f64(*x),
            Field::Int(n) => n.to_string(),
        }
    }
}

/// Writes a CSV table to `path`, or to stdout for `-`.
pub fn write_csv(path: &Path, header: &[String], rows: impl IntoIterator<Item = Vec<Field>>) -> Result<()> {
    let sink: Box<dyn Write> = if path == Path::new("-") {
        Box::new(std::io::stdout().lock())
    } else {
        Box::new(fs::File::create(path).map_err(|e| usage(format!("cannot create {}: {e}", path.display())))?)
    };
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::CRLF).from_writer(sink);
    w.write_record(header)?;
    for row in rows {
        w.write_record(row.iter().map(Field::render))?;
    }
    w.flush().with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_text(path, &text)
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    if path == Path::new("-") {
        std::io::stdout().lock().write_all(text.as_bytes())?;
        return Ok(());
    }
    fs::write(path, text).map_err(|e| usage(format!("cannot write {}: {e}", path.display())))
}

/// A CSV table read back as a header plus numeric rows.
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

pub fn read_csv(path: &Path) -> Result<Table> {
    let text = read_text(path)?;
    let mut r = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
    let header = r.headers()?.iter().map(str::to_string).collect();
    let mut rows = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec.with_context(|| format!("{}: malformed row {}", path.display(), i + 2))?;
        let row = rec
            .iter()
            .map(|f| f.parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .with_context(|| format!("{}: row {} has a non-numeric field", path.display(), i + 2))?;
        rows.push(row);
    }
    Ok(Table { header, rows })
}

/// Gnuplot script plotting every column after the first against it.
pub fn gnuplot_script(data: &Path, columns: usize, logx: bool, logy: bool, xlabel: &str, ylabel: &str) -> String {
    let mut s = String::from("set datafile separator ','\nset key autotitle columnhead outside\n");
    if logx {
        s.push_str("set logscale x\n");
    }
    if logy {
        s.push_str("set logscale y\n");
    }
    s.push_str(&format!("set xlabel '{xlabel}'\nset ylabel '{ylabel}'\n"));
    s.push_str(&format!("plot for [i=2:{columns}] '{}' using 1:i with lines\npause mouse close\n", data.display()));
    s
}
