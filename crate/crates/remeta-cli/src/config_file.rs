//! Flat `key = value` config files. UTF-8, one pair per line, `#` comments.

use std::collections::BTreeMap;
use std::path::Path;

use anyhow::Result;

use crate::options::input_error;

pub fn load(path: Option<&Path>) -> Result<BTreeMap<String, String>> {
    let mut map = BTreeMap::new();
    let Some(path) = path else {
        return Ok(map);
    };
    let text = match std::fs::read_to_string(path) {
        Ok(t) => t,
        Err(e) => return input_error(format!("cannot read config {}: {e}", path.display())),
    };
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return input_error(format!(
                "{}:{}: expected `key = value`, got `{line}`",
                path.display(),
                lineno + 1
            ));
        };
        map.insert(key.trim().to_string(), value.trim().to_string());
    }
    Ok(map)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    #[test]
    fn parses_pairs_and_comments() {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        writeln!(f, "# comment\nseed = 42\n\nchains=2\nfamily = t").unwrap();
        let map = load(Some(f.path())).unwrap();
        assert_eq!(map["seed"], "42");
        assert_eq!(map["chains"], "2");
        assert_eq!(map["family"], "t");
    }

    #[test]
    fn rejects_garbage_lines() {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        writeln!(f, "seed 42").unwrap();
        assert!(load(Some(f.path())).is_err());
    }
}
