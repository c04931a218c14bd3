use crate::failure::{CliResult, Failure};
use cavc::ext::format_sig;
use cavc::model_file::ModelDocument;
use cavc::CavcModel;
use serde::Serialize;
use serde_json::{Number, Value};
use sha2::{Digest, Sha256};
use std::path::Path;
use std::str::FromStr;

pub const SEED_ENV: &str = "CAVC_SEED";

/// Rounds every non-integer number to 6 significant digits.
pub fn round_numbers(v: Value) -> Value {
    match v {
        Value::Number(n) if n.as_u64().is_none() && n.as_i64().is_none() => match n.as_f64() {
            Some(f) if f.is_finite() => Number::from_str(&format_sig(f)).map(Value::Number).unwrap_or(Value::Number(n)),
            _ => Value::Number(n),
        },
        Value::Array(a) => Value::Array(a.into_iter().map(round_numbers).collect()),
        Value::Object(o) => Value::Object(o.into_iter().map(|(k, v)| (k, round_numbers(v))).collect()),
        other => other,
    }
}

/// Pretty JSON with rounded numbers and a trailing newline.
pub fn render<T: Serialize>(value: &T) -> CliResult<String> {
    let v = serde_json::to_value(value).map_err(|e| Failure::Solver(format!("cannot serialize report: {e}")))?;
    let mut text = serde_json::to_string_pretty(&round_numbers(v)).expect("values serialize");
    text.push('\n');
    Ok(text)
}

/// Writes to `path`, or to stdout when there is none.
pub fn emit(text: &str, path: Option<&Path>) -> CliResult<()> {
    match path {
        Some(p) => write_file(p, text),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

pub fn write_file(path: &Path, text: &str) -> CliResult<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Failure::Input(format!("cannot create {}: {e}", dir.display())))?;
    }
    std::fs::write(path, text).map_err(|e| Failure::Input(format!("cannot write {}: {e}", path.display())))
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    format!("{:x}", Sha256::digest(bytes))
}

/// A parsed model file and the digest of its text.
pub struct LoadedModel {
    pub model: CavcModel,
    pub sha256: String,
}

pub fn load_model(path: &Path) -> CliResult<LoadedModel> {
    let text = std::fs::read_to_string(path).map_err(|e| Failure::Input(format!("cannot read {}: {e}", path.display())))?;
    let model = ModelDocument::parse(&text)
        .and_then(|d| d.to_model())
        .map_err(|e| Failure::Input(format!("{}: {e}", path.display())))?;
    Ok(LoadedModel {
        model,
        sha256: sha256_hex(text.as_bytes()),
    })
}

/// Seed set by the flag or, failing that, by CAVC_SEED.
pub fn seed_override(flag: Option<u64>) -> CliResult<Option<u64>> {
    if flag.is_some() {
        return Ok(flag);
    }
    match std::env::var(SEED_ENV) {
        Ok(v) => v
            .trim()
            .parse()
            .map(Some)
            .map_err(|_| Failure::Input(format!("{SEED_ENV} must be an unsigned integer, got {v:?}"))),
        Err(_) => Ok(None),
    }
}

/// Master seed: the flag wins, then CAVC_SEED, then the given default.
pub fn master_seed(flag: Option<u64>, default: u64) -> CliResult<u64> {
    Ok(seed_override(flag)?.unwrap_or(default))
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn floats_keep_six_digits() {
        let v = round_numbers(json!({"a": 0.123456789, "b": [3, 2.0, 1e-12], "c": "inf", "d": 12345678.9}));
        assert_eq!(v["a"].to_string(), "0.123457");
        assert_eq!(v["b"][0].to_string(), "3");
        assert_eq!(v["b"][1].to_string(), "2");
        assert_eq!(v["b"][2].as_f64(), Some(1e-12));
        assert_eq!(v["c"], "inf");
        assert_eq!(v["d"].as_f64(), Some(12345700.0));
    }

    #[test]
    fn digest_is_hex() {
        assert_eq!(
            sha256_hex(b"abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }
}
