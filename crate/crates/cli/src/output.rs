use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::CliError;

/// Hex SHA-256 of the compact JSON form of `config`.
pub fn config_hash<T: Serialize>(config: &T) -> Result<String, CliError> {
    let json = serde_json::to_vec(config)?;
    Ok(hex::encode(Sha256::digest(json)))
}

/// Comment lines placed above a CSV header.
pub fn csv_preamble(hash: &str, extra: &[String]) -> String {
    let mut s = format!("# config-sha256: {hash}\n");
    for e in extra {
        let _ = writeln!(s, "# {e}");
    }
    s
}

/// A CSV field, quoted when it holds a separator, quote or newline.
pub fn field(s: &str) -> String {
    if s.contains([',', '"', '\n', '\r']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

pub fn opt(x: Option<f64>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}

/// Atomically writes `bytes` to `dir/name`, creating `dir`.
pub fn write_out(dir: &Path, name: &str, bytes: &[u8]) -> Result<PathBuf, CliError> {
    fs::create_dir_all(dir)?;
    let path = dir.join(name);
    tfqkd::data::write_atomic(&path, bytes)?;
    Ok(path)
}

/// Serialises `body` under a `config_sha256` key, ahead of its own fields.
pub fn json_with_hash<T: Serialize>(hash: &str, body: &T) -> Result<String, CliError> {
    let mut map = serde_json::Map::new();
    map.insert("config_sha256".into(), hash.into());
    match serde_json::to_value(body)? {
        serde_json::Value::Object(o) => map.extend(o),
        other => {
            map.insert("data".into(), other);
        }
    }
    Ok(serde_json::to_string_pretty(&serde_json::Value::Object(map))? + "\n")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quoting() {
        assert_eq!(field("a,b"), "\"a,b\"");
        assert_eq!(field("say \"x\""), "\"say \"\"x\"\"\"");
        assert_eq!(field("plain"), "plain");
    }

    #[test]
    fn hash_is_stable() {
        let a = config_hash(&[1, 2, 3]).unwrap();
        assert_eq!(a, config_hash(&[1, 2, 3]).unwrap());
        assert_ne!(a, config_hash(&[1, 2, 4]).unwrap());
        assert_eq!(a.len(), 64);
    }
}
