//! Suite files: a list of named scenarios, each an experiment configuration
//! plus a model path and optional output names.
//!
//! ```json
//! {
//!   "name": "regression",
//!   "output_dir": "out",
//!   "scenarios": [
//!     {"name": "bsc-com", "model": "../models/bsc_pair.json", "task": "com",
//!      "n": 12, "codebook": {"M": 4}, "trials": 500, "n_list": [8, 12]}
//!   ]
//! }
//! ```
//!
//! Relative paths resolve against the suite file's directory; outputs
//! resolve against the output directory.

use crate::failure::{CliResult, Failure};
use cavc::simulation::ExperimentConfig;
use serde::Deserialize;
use serde_json::{Map, Value};
use std::path::{Path, PathBuf};

#[derive(Debug, Clone)]
pub struct Scenario {
    pub name: String,
    /// As written in the suite file.
    pub model: String,
    pub n_list: Option<Vec<usize>>,
    pub csv: String,
    pub json: String,
    pub config: ExperimentConfig,
}

#[derive(Debug, Clone)]
pub struct Suite {
    pub name: String,
    pub dir: PathBuf,
    pub output_dir: Option<String>,
    pub scenarios: Vec<Scenario>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSuite {
    #[serde(default)]
    name: Option<String>,
    #[serde(default)]
    output_dir: Option<String>,
    scenarios: Vec<Map<String, Value>>,
}

fn take_string(map: &mut Map<String, Value>, key: &str, at: &str) -> CliResult<Option<String>> {
    match map.remove(key) {
        None => Ok(None),
        Some(Value::String(s)) => Ok(Some(s)),
        Some(other) => Err(Failure::Input(format!("{at}: \"{key}\" must be a string, got {other}"))),
    }
}

fn parse_scenario(index: usize, mut map: Map<String, Value>) -> CliResult<Scenario> {
    let at = format!("scenario {index}");
    let name = take_string(&mut map, "name", &at)?.ok_or_else(|| Failure::Input(format!("{at} has no \"name\"")))?;
    let at = format!("scenario {name:?}");
    if name.is_empty() || name.contains(['/', '\\']) {
        return Err(Failure::Input(format!("{at}: names must be nonempty and free of path separators")));
    }
    let model = take_string(&mut map, "model", &at)?.ok_or_else(|| Failure::Input(format!("{at} has no \"model\"")))?;
    let csv = take_string(&mut map, "csv", &at)?.unwrap_or_else(|| format!("{name}.csv"));
    let json = take_string(&mut map, "json", &at)?.unwrap_or_else(|| format!("{name}.json"));
    let n_list = match map.remove("n_list") {
        None => None,
        Some(v) => Some(
            serde_json::from_value::<Vec<usize>>(v)
                .map_err(|e| Failure::Input(format!("{at}: n_list: {e}")))?,
        ),
    };
    if map.contains_key("scenario_id") {
        return Err(Failure::Input(format!("{at}: the scenario id is its name; drop \"scenario_id\"")));
    }
    let mut config: ExperimentConfig =
        serde_json::from_value(Value::Object(map)).map_err(|e| Failure::Input(format!("{at}: {e}")))?;
    config.scenario_id = name.clone();
    if let Some(ns) = &n_list {
        if ns.windows(2).any(|w| w[0] > w[1]) {
            return Err(Failure::Input(format!("{at}: n_list must be nondecreasing")));
        }
        if config.n == 0 {
            config.n = ns.first().copied().unwrap_or(0);
        }
    }
    Ok(Scenario {
        name,
        model,
        n_list,
        csv,
        json,
        config,
    })
}

impl Suite {
    pub fn parse(text: &str, dir: &Path) -> CliResult<Self> {
        let raw: RawSuite = serde_json::from_str(text).map_err(|e| Failure::Input(format!("suite file: {e}")))?;
        if raw.scenarios.is_empty() {
            return Err(Failure::Input("suite has no scenarios".into()));
        }
        let scenarios = raw
            .scenarios
            .into_iter()
            .enumerate()
            .map(|(i, m)| parse_scenario(i, m))
            .collect::<CliResult<Vec<_>>>()?;
        for (i, s) in scenarios.iter().enumerate() {
            if scenarios[..i].iter().any(|t| t.name == s.name) {
                return Err(Failure::Input(format!("scenario name {:?} is used twice", s.name)));
            }
        }
        Ok(Suite {
            name: raw.name.unwrap_or_else(|| "suite".into()),
            dir: dir.to_path_buf(),
            output_dir: raw.output_dir,
            scenarios,
        })
    }

    pub fn model_path(&self, s: &Scenario) -> PathBuf {
        self.dir.join(&s.model)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> CliResult<Suite> {
        Suite::parse(text, Path::new("."))
    }

    #[test]
    fn scenario_fields_split_from_config() {
        let s = parse(
            r#"{"scenarios": [{"name": "a", "model": "m.json", "task": "and", "n_list": [8, 16],
                "codebook": {"M": 2}, "trials": 10}]}"#,
        )
        .unwrap();
        let a = &s.scenarios[0];
        assert_eq!(a.config.scenario_id, "a");
        assert_eq!(a.config.n, 8);
        assert_eq!(a.config.trials, 10);
        assert_eq!(a.csv, "a.csv");
        assert_eq!(a.n_list.as_deref(), Some(&[8, 16][..]));
    }

    #[test]
    fn bad_suites_are_input_errors() {
        for text in [
            r#"{"scenarios": []}"#,
            r#"{"scenarios": [{"name": "a", "model": "m", "task": "both"}]}"#,
            r#"{"scenarios": [{"name": "a", "model": "m"}, {"name": "a", "model": "m"}]}"#,
            r#"{"scenarios": [{"model": "m"}]}"#,
            r#"{"scenarios": [{"name": "a", "model": "m", "n_list": [4, 2]}]}"#,
            r#"{"scenarios": [{"name": "a", "model": "m", "trails": 3}]}"#,
        ] {
            assert!(matches!(parse(text), Err(Failure::Input(_))), "{text}");
        }
    }
}
