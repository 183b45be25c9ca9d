//! JSON Lines helpers with sorted keys and atomic whole-file writes.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum JsonlError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {message}")]
    Parse { path: String, line: usize, message: String },
}

/// One line, no newline, object keys in sorted order.
pub fn to_line<T: Serialize>(value: &T) -> String {
    // serde_json's Value map is ordered by key
    let v = serde_json::to_value(value).expect("record serializes");
    serde_json::to_string(&v).expect("value serializes")
}

/// Pretty JSON with sorted keys and a trailing newline.
pub fn to_pretty<T: Serialize>(value: &T) -> String {
    let v = serde_json::to_value(value).expect("record serializes");
    let mut s = serde_json::to_string_pretty(&v).expect("value serializes");
    s.push('\n');
    s
}

pub fn write_atomic(path: &Path, contents: &str) -> Result<(), JsonlError> {
    let io = |source| JsonlError::Io {
        path: path.display().to_string(),
        source,
    };
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(io)?;
    }
    let tmp = path.with_extension("tmp");
    {
        let mut f = fs::File::create(&tmp).map_err(io)?;
        f.write_all(contents.as_bytes()).map_err(io)?;
        f.sync_all().map_err(io)?;
    }
    fs::rename(&tmp, path).map_err(io)
}

pub fn write<T: Serialize>(path: &Path, records: &[T]) -> Result<(), JsonlError> {
    let mut out = String::new();
    for r in records {
        out.push_str(&to_line(r));
        out.push('\n');
    }
    write_atomic(path, &out)
}

pub fn read<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>, JsonlError> {
    let text = fs::read_to_string(path).map_err(|source| JsonlError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse(&text, &path.display().to_string())
}

pub fn parse<T: DeserializeOwned>(text: &str, origin: &str) -> Result<Vec<T>, JsonlError> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| JsonlError::Parse {
                path: origin.to_string(),
                line: i + 1,
                message: e.to_string(),
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde::Deserialize;

    #[derive(Debug, Serialize, Deserialize, PartialEq)]
    struct R {
        zeta: u8,
        alpha: String,
    }

    #[test]
    fn keys_sorted() {
        let r = R {
            zeta: 1,
            alpha: "a".into(),
        };
        assert_eq!(to_line(&r), r#"{"alpha":"a","zeta":1}"#);
    }

    #[test]
    fn write_then_read() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("sub/x.jsonl");
        let rs = vec![
            R {
                zeta: 1,
                alpha: "a".into(),
            },
            R {
                zeta: 2,
                alpha: "b\nc".into(),
            },
        ];
        write(&p, &rs).unwrap();
        assert_eq!(read::<R>(&p).unwrap(), rs);
        assert_eq!(fs::read_to_string(&p).unwrap().lines().count(), 2);
    }

    #[test]
    fn parse_error_has_line() {
        let e = parse::<R>("{\"zeta\":1,\"alpha\":\"a\"}\nnope\n", "f").unwrap_err();
        assert!(matches!(e, JsonlError::Parse { line: 2, .. }));
    }
}
