//! Command-line and config-file parsing.
//!
//! A config file is a list of `key = value` lines whose keys are the long
//! flag names of the chosen subcommand. Its entries are spliced in front of
//! the command-line flags, and every flag keeps its last occurrence, so the
//! command line wins.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{CommandFactory, FromArgMatches};

use crate::args::Cli;
use crate::error::CliError;

/// Environment variable naming the default output directory.
pub const OUTPUT_DIR_ENV: &str = "PBI_OUTPUT_DIR";
pub const DEFAULT_OUTPUT_DIR: &str = "pbi-output";

/// Fully resolved settings of one run, in flag order.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RunConfig {
    pub subcommand: String,
    pub entries: Vec<(String, String)>,
}

impl RunConfig {
    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn out_dir(&self) -> PathBuf {
        PathBuf::from(self.get("out").unwrap_or(DEFAULT_OUTPUT_DIR))
    }

    /// The config echo: a file that `--config` accepts again.
    pub fn render(&self) -> String {
        let mut s = format!("subcommand = {}\n", self.subcommand);
        for (k, v) in &self.entries {
            s.push_str(&format!("{k} = {v}\n"));
        }
        s
    }
}

/// Parses `argv` (program name first), merging a `--config` file if one is
/// named.
pub fn parse_config<I, T>(argv: I) -> Result<(Cli, RunConfig), CliError>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString>,
{
    let mut argv: Vec<OsString> = argv.into_iter().map(Into::into).collect();
    let mut command = Cli::command().mut_subcommands(|s| s.args_override_self(true));
    if let Some(sub) = argv.get(1).and_then(|a| a.to_str()).map(str::to_owned) {
        if let Some(path) = config_path(&argv[2..]) {
            if let Some(sub_cmd) = command.find_subcommand(&sub) {
                let known: Vec<String> = sub_cmd.get_arguments().filter_map(|a| a.get_long().map(str::to_owned)).collect();
                let text = std::fs::read_to_string(&path).map_err(|e| CliError::usage(format!("cannot read config file {}: {e}", path.display())))?;
                let tokens = config_tokens(&text, &path, &sub, &known)?;
                argv.splice(2..2, tokens.into_iter().map(OsString::from));
            }
        }
    }
    let matches = command.try_get_matches_from_mut(argv)?;
    let cli = Cli::from_arg_matches(&matches)?;
    let (name, sub) = matches.subcommand().expect("subcommand is required");
    let sub_cmd = command.find_subcommand(name).expect("matched subcommand exists");
    let mut entries = Vec::new();
    for arg in sub_cmd.get_arguments() {
        let (Some(long), id) = (arg.get_long(), arg.get_id().as_str()) else { continue };
        if long == "config" {
            continue;
        }
        if let Ok(Some(raw)) = sub.try_get_raw(id) {
            let values: Vec<String> = raw.map(|v| v.to_string_lossy().into_owned()).collect();
            entries.push((long.to_owned(), values.join(",")));
        }
    }
    let out = match entries.iter().find(|(k, _)| k == "out") {
        Some((_, v)) => v.clone(),
        None => std::env::var(OUTPUT_DIR_ENV).ok().filter(|v| !v.is_empty()).unwrap_or_else(|| String::from(DEFAULT_OUTPUT_DIR)),
    };
    entries.retain(|(k, _)| k != "out");
    entries.push((String::from("out"), out));
    Ok((cli, RunConfig { subcommand: String::from(name), entries }))
}

fn config_path(args: &[OsString]) -> Option<PathBuf> {
    let mut found = None;
    let mut iter = args.iter();
    while let Some(a) = iter.next() {
        let Some(s) = a.to_str() else { continue };
        if s == "--config" {
            found = iter.next().map(PathBuf::from);
        } else if let Some(v) = s.strip_prefix("--config=") {
            found = Some(PathBuf::from(v));
        }
    }
    found
}

fn config_tokens(text: &str, path: &Path, subcommand: &str, known: &[String]) -> Result<Vec<String>, CliError> {
    let mut tokens = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let loc = || format!("{}:{}", path.display(), i + 1);
        let (key, value) = line.split_once('=').ok_or_else(|| CliError::usage(format!("{}: expected `key = value`", loc())))?;
        let key = key.trim().replace('_', "-");
        let value = value.trim();
        if key == "subcommand" {
            if value != subcommand {
                return Err(CliError::usage(format!("{}: config is for subcommand `{value}`, not `{subcommand}`", loc())));
            }
            continue;
        }
        if key == "config" || !known.contains(&key) {
            return Err(CliError::usage(format!("{}: unknown key `{key}` for `{subcommand}`", loc())));
        }
        tokens.push(format!("--{key}={value}"));
    }
    Ok(tokens)
}
