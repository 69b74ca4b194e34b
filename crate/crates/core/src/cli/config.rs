//! Flat `key = value` config files for `wct train`.
//!
//! Keys are the long flag names of the subcommand without the leading
//! dashes. Blank lines and lines starting with `#` are skipped. A value from
//! the file is used only when the same flag was not given on the command
//! line.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::path::Path;

use clap::parser::ValueSource;
use clap::{ArgAction, ArgMatches, Command};

pub fn parse_config(text: &str) -> Result<BTreeMap<String, String>, String> {
    let mut out = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| format!("line {}: expected `key = value`", i + 1))?;
        let key = key.trim().to_string();
        if key.is_empty() {
            return Err(format!("line {}: empty key", i + 1));
        }
        if out.insert(key.clone(), value.trim().to_string()).is_some() {
            return Err(format!("line {}: duplicate key `{key}`", i + 1));
        }
    }
    Ok(out)
}

/// Extra arguments that apply the config file's values to every flag of
/// `cmd` not set on the command line. Unknown keys are an error.
pub fn config_args(cmd: &Command, matches: &ArgMatches, path: &Path) -> Result<Vec<OsString>, String> {
    let text = std::fs::read_to_string(path).map_err(|e| format!("cannot read config {}: {e}", path.display()))?;
    let entries = parse_config(&text).map_err(|e| format!("{}: {e}", path.display()))?;
    let mut extra = Vec::new();
    for (key, value) in entries {
        let arg = cmd
            .get_arguments()
            .find(|a| a.get_long() == Some(key.as_str()) && key != "config")
            .ok_or_else(|| format!("{}: unknown key `{key}`", path.display()))?;
        if matches.value_source(arg.get_id().as_str()) == Some(ValueSource::CommandLine) {
            continue;
        }
        let flag = OsString::from(format!("--{key}"));
        match arg.get_action() {
            ArgAction::SetTrue => match value.as_str() {
                "true" => extra.push(flag),
                "false" => {}
                other => return Err(format!("{}: `{key}` must be true or false, got `{other}`", path.display())),
            },
            _ => {
                extra.push(flag);
                extra.push(value.into());
            }
        }
    }
    Ok(extra)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_comments_and_rejects_duplicates() {
        let c = parse_config("# run\nbatch-size = 32\n\nmethod=ds\n").unwrap();
        assert_eq!(c["batch-size"], "32");
        assert_eq!(c["method"], "ds");
        assert!(parse_config("a = 1\na = 2").is_err());
        assert!(parse_config("novalue").is_err());
        assert!(parse_config(" = 3").is_err());
    }
}
