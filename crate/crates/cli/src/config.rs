//! TOML run configuration layered under command-line flags.
//!
//! Keys may sit at the top level (shared by every command) or inside a table
//! named after the subcommand; the subcommand table wins. A flag given on the
//! command line always beats the file, and the file beats built-in defaults.

use std::path::{Path, PathBuf};

use clap::parser::ValueSource;
use clap::ArgMatches;
use serde::de::DeserializeOwned;

use crate::CliError;

#[derive(Debug, Default)]
pub struct Config {
    table: toml::Table,
    path: Option<PathBuf>,
}

impl Config {
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Failed(anyhow::anyhow!("cannot read config {}: {e}", path.display())))?;
        let table: toml::Table = text
            .parse()
            .map_err(|e| CliError::Usage(format!("invalid config {}: {e}", path.display())))?;
        Ok(Self { table, path: Some(path.to_path_buf()) })
    }

    fn lookup(&self, section: &str, key: &str) -> Option<&toml::Value> {
        let dashed = key.replace('_', "-");
        fn get<'a>(t: &'a toml::Table, key: &str, dashed: &str) -> Option<&'a toml::Value> {
            t.get(key).or_else(|| t.get(dashed))
        }
        let scoped = self
            .table
            .get(section)
            .and_then(toml::Value::as_table)
            .and_then(|t| get(t, key, &dashed));
        // a top-level hit must not be another command's table
        scoped.or_else(|| get(&self.table, key, &dashed).filter(|v| !v.is_table()))
    }

    /// Final value of one setting: flag > config > default.
    pub fn resolve<T: DeserializeOwned>(
        &self,
        matches: &ArgMatches,
        section: &str,
        id: &str,
        from_cli: T,
    ) -> Result<T, CliError> {
        // value_source panics on ids the command does not define
        let known = matches.try_contains_id(id).is_ok();
        if known && matches.value_source(id) == Some(ValueSource::CommandLine) {
            return Ok(from_cli);
        }
        match self.lookup(section, id) {
            None => Ok(from_cli),
            Some(v) => v.clone().try_into().map_err(|e| {
                let file = self.path.as_deref().map(Path::display);
                CliError::Usage(format!(
                    "config {}: bad value for `{id}`: {e}",
                    file.map_or_else(String::new, |f| f.to_string())
                ))
            }),
        }
    }
}

/// Layers the config file under every listed field of an argument struct.
macro_rules! layer {
    ($cfg:expr, $m:expr, $section:expr, $args:expr, [$($field:ident),* $(,)?]) => {
        $( $args.$field = $cfg.resolve($m, $section, stringify!($field), std::mem::take(&mut $args.$field))?; )*
    };
}
pub(crate) use layer;

#[cfg(test)]
mod tests {
    use super::*;
    use clap::{Arg, Command};

    fn matches(argv: &[&str]) -> ArgMatches {
        Command::new("t")
            .arg(Arg::new("alpha").long("alpha").default_value("0.05").value_parser(clap::value_parser!(f64)))
            .get_matches_from(argv)
    }

    fn config(text: &str) -> Config {
        Config { table: text.parse().unwrap(), path: None }
    }

    #[test]
    fn precedence_flag_config_default() {
        let cfg = config("alpha = 0.2\n[diagnose]\nalpha = 0.1\n");
        let m = matches(&["t"]);
        assert_eq!(cfg.resolve(&m, "diagnose", "alpha", 0.05).unwrap(), 0.1);
        assert_eq!(cfg.resolve(&m, "fit", "alpha", 0.05).unwrap(), 0.2);
        assert_eq!(Config::default().resolve(&m, "fit", "alpha", 0.05).unwrap(), 0.05);
        let m = matches(&["t", "--alpha", "0.01"]);
        assert_eq!(cfg.resolve(&m, "diagnose", "alpha", 0.01).unwrap(), 0.01);
    }

    #[test]
    fn dashed_keys_and_type_errors() {
        let cfg = config("p-max = 6\nalpha = \"high\"\n");
        let m = matches(&["t"]);
        assert_eq!(cfg.resolve(&m, "fit", "p_max", 8usize).unwrap(), 6);
        assert!(matches!(cfg.resolve(&m, "fit", "alpha", 0.05), Err(CliError::Usage(_))));
    }

    #[test]
    fn section_tables_are_not_values() {
        let cfg = config("[fit]\nlag = 2\n");
        let m = matches(&["t"]);
        assert_eq!(cfg.resolve(&m, "cdd", "fit", 0usize).unwrap(), 0);
    }
}
