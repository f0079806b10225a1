//! File plumbing shared by the data and harness modules: digests, atomic
//! writes, line-delimited JSON with a schema header, and versioned CSV.
//!
//! Every file the crate writes starts with a header naming its schema and the
//! manifest hash of the run that produced it:
//!
//! - JSONL: `{"schema":"mwss.news/1","manifest":"<hex>"}`
//! - CSV: `# schema=mwss.history/1 manifest=<hex>`

use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn file_digest(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(sha256_hex(&bytes))
}

pub fn read_to_string(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

/// Writes via a sibling temp file and rename so readers never see a torn file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
    }
    let tmp = path.with_extension("tmp");
    {
        let mut f = fs::File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
        f.write_all(bytes).map_err(|e| Error::io(&tmp, e))?;
    }
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Header {
    pub schema: String,
    pub manifest: String,
}

pub fn write_jsonl<T: Serialize>(path: &Path, schema: &str, manifest: &str, rows: &[T]) -> Result<()> {
    let mut out = String::new();
    out.push_str(&serde_json::to_string(&Header {
        schema: schema.into(),
        manifest: manifest.into(),
    })?);
    out.push('\n');
    for row in rows {
        out.push_str(&serde_json::to_string(row)?);
        out.push('\n');
    }
    write_atomic(path, out.as_bytes())
}

/// Reads a JSONL file whose first line is a [`Header`] with the given schema.
/// Blank lines are skipped; malformed lines report their 1-based number.
pub fn read_jsonl<T: DeserializeOwned>(path: &Path, schema: &str) -> Result<(Header, Vec<T>)> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut lines = BufReader::new(file).lines().enumerate();
    let header: Header = match lines.next() {
        Some((_, line)) => {
            let line = line.map_err(|e| Error::io(path, e))?;
            serde_json::from_str(&line).map_err(|e| Error::Parse {
                path: path.to_owned(),
                line: 1,
                message: format!("bad header: {e}"),
            })?
        }
        None => {
            return Err(Error::Parse {
                path: path.to_owned(),
                line: 1,
                message: "missing header line".into(),
            })
        }
    };
    if header.schema != schema {
        return Err(Error::Schema {
            path: path.to_owned(),
            found: header.schema,
            expected: schema.into(),
        });
    }
    let mut rows = Vec::new();
    for (i, line) in lines {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        rows.push(serde_json::from_str(&line).map_err(|e| Error::Parse {
            path: path.to_owned(),
            line: i + 1,
            message: e.to_string(),
        })?);
    }
    Ok((header, rows))
}

pub fn csv_header_line(schema: &str, manifest: &str) -> String {
    format!("# schema={schema} manifest={manifest}\n")
}

fn existing_csv_schema(path: &Path) -> Result<Option<String>> {
    if !path.exists() {
        return Ok(None);
    }
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut first = String::new();
    BufReader::new(file)
        .read_line(&mut first)
        .map_err(|e| Error::io(path, e))?;
    Ok(first
        .trim()
        .strip_prefix("# schema=")
        .and_then(|rest| rest.split_whitespace().next())
        .map(str::to_owned)
        .or(Some(String::new())))
}

fn check_csv_schema(path: &Path, schema: &str) -> Result<()> {
    match existing_csv_schema(path)? {
        Some(found) if found != schema => Err(Error::Schema {
            path: path.to_owned(),
            found,
            expected: schema.into(),
        }),
        _ => Ok(()),
    }
}

/// Serializes `rows` as CSV under a schema/manifest comment line. Refuses to
/// replace an existing file written under a different schema version.
pub fn write_csv<T: Serialize>(path: &Path, schema: &str, manifest: &str, rows: &[T]) -> Result<()> {
    check_csv_schema(path, schema)?;
    let mut buf = csv_header_line(schema, manifest).into_bytes();
    {
        let mut w = csv::Writer::from_writer(&mut buf);
        for row in rows {
            w.serialize(row)?;
        }
        w.flush().map_err(|e| Error::io(path, e))?;
    }
    write_atomic(path, &buf)
}

/// Like [`write_csv`] for tables whose columns are only known at run time.
pub fn write_csv_records(path: &Path, schema: &str, manifest: &str, header: &[String], records: &[Vec<String>]) -> Result<()> {
    check_csv_schema(path, schema)?;
    let mut buf = csv_header_line(schema, manifest).into_bytes();
    {
        let mut w = csv::Writer::from_writer(&mut buf);
        w.write_record(header)?;
        for r in records {
            w.write_record(r)?;
        }
        w.flush().map_err(|e| Error::io(path, e))?;
    }
    write_atomic(path, &buf)
}

/// Reads a CSV written by [`write_csv`], checking the schema line.
pub fn read_csv<T: DeserializeOwned>(path: &Path, schema: &str) -> Result<(String, Vec<T>)> {
    let text = read_to_string(path)?;
    let (first, body) = text.split_once('\n').unwrap_or((&text, ""));
    let mut parts = first.trim().strip_prefix("# ").unwrap_or("").split_whitespace();
    let found = parts
        .next()
        .and_then(|p| p.strip_prefix("schema="))
        .unwrap_or("")
        .to_owned();
    if found != schema {
        return Err(Error::Schema {
            path: path.to_owned(),
            found,
            expected: schema.into(),
        });
    }
    let manifest = parts
        .next()
        .and_then(|p| p.strip_prefix("manifest="))
        .unwrap_or("")
        .to_owned();
    let mut rdr = csv::Reader::from_reader(body.as_bytes());
    let rows = rdr.deserialize().collect::<std::result::Result<Vec<T>, _>>()?;
    Ok((manifest, rows))
}

pub fn ensure_dir(path: &Path) -> Result<PathBuf> {
    fs::create_dir_all(path).map_err(|e| Error::io(path, e))?;
    Ok(path.to_owned())
}
