//! `key = value` manifest files. One assignment per line; `#` starts a
//! comment; blank lines are ignored. Keys are the long flag names of the
//! command being run (e.g. `trials = 20`, `out = runs/a`), and an explicit
//! command-line flag always wins over the manifest.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::path::Path;
use std::str::FromStr;

#[derive(Debug, Default)]
pub struct Manifest {
    values: BTreeMap<String, String>,
}

impl Manifest {
    pub fn empty() -> Self {
        Self::default()
    }

    /// Parse a manifest file. Errors name the offending line.
    pub fn load(path: &Path) -> Result<Self, String> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| format!("cannot read config {}: {e}", path.display()))?;
        let mut values = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = match raw.find('#') {
                Some(pos) => &raw[..pos],
                None => raw,
            }
            .trim();
            if line.is_empty() {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(format!(
                    "{}:{}: expected `key = value`, found {raw:?}",
                    path.display(),
                    i + 1
                ));
            };
            let key = key.trim();
            let value = value.trim();
            if key.is_empty() {
                return Err(format!("{}:{}: empty key", path.display(), i + 1));
            }
            values.insert(key.to_owned(), value.to_owned());
        }
        Ok(Self { values })
    }

    pub fn raw(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(String::as_str)
    }

    /// Typed lookup; a present-but-unparsable value is an error naming the
    /// key.
    pub fn get<T>(&self, key: &str) -> Result<Option<T>, String>
    where
        T: FromStr,
        T::Err: Display,
    {
        match self.values.get(key) {
            None => Ok(None),
            Some(raw) => raw
                .parse::<T>()
                .map(Some)
                .map_err(|e| format!("config key {key} = {raw:?}: {e}")),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write_temp(contents: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(contents.as_bytes()).unwrap();
        f
    }

    #[test]
    fn parses_assignments_comments_and_blanks() {
        let f = write_temp("# experiment A\ntrials = 12\n\nseed=9 # master\nout = runs/a\n");
        let m = Manifest::load(f.path()).unwrap();
        assert_eq!(m.get::<usize>("trials").unwrap(), Some(12));
        assert_eq!(m.get::<u64>("seed").unwrap(), Some(9));
        assert_eq!(m.raw("out"), Some("runs/a"));
        assert_eq!(m.get::<u64>("missing").unwrap(), None);
    }

    #[test]
    fn malformed_line_error_names_the_line() {
        let f = write_temp("trials = 3\nnot an assignment\n");
        let err = Manifest::load(f.path()).unwrap_err();
        assert!(err.contains(":2:"), "{err}");
    }

    #[test]
    fn unparsable_value_error_names_the_key() {
        let f = write_temp("trials = lots\n");
        let m = Manifest::load(f.path()).unwrap();
        let err = m.get::<usize>("trials").unwrap_err();
        assert!(err.contains("trials"), "{err}");
    }
}
