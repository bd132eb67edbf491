//! Config-file defaults merged under command-line flags.
//!
//! The file is a JSON object with optional sections named after the
//! subcommands, for example `{"evaluate": {"reps": 20, "outer_k": 5}}`, plus
//! an optional top-level `"jobs"`.

use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::Value;

use crate::run::Failure;

pub fn load(path: Option<&Path>) -> Result<Value, Failure> {
    let Some(path) = path else {
        return Ok(Value::Object(Default::default()));
    };
    let text = std::fs::read_to_string(path)
        .map_err(|e| Failure::Runtime(format!("reading config {}: {e}", path.display())))?;
    let value: Value = serde_json::from_str(&text)
        .map_err(|e| Failure::Runtime(format!("parsing config {}: {e}", path.display())))?;
    if !value.is_object() {
        return Err(Failure::Runtime("config must be a JSON object".into()));
    }
    Ok(value)
}

/// Overlay flags that were given onto the config section `name`.
pub fn resolve<T: Serialize + DeserializeOwned>(flags: &T, config: &Value, name: &str) -> Result<T, Failure> {
    let mut merged = config.get(name).cloned().unwrap_or_else(|| Value::Object(Default::default()));
    let Value::Object(base) = &mut merged else {
        return Err(Failure::Runtime(format!("config section `{name}` must be an object")));
    };
    let given = serde_json::to_value(flags).map_err(|e| Failure::Runtime(e.to_string()))?;
    if let Value::Object(given) = given {
        base.extend(given);
    }
    serde_json::from_value(merged).map_err(|e| Failure::Runtime(format!("config section `{name}`: {e}")))
}

pub fn jobs(flag: Option<usize>, config: &Value) -> Option<usize> {
    flag.or_else(|| config.get("jobs").and_then(Value::as_u64).map(|j| j as usize))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::EvaluateArgs;

    #[test]
    fn flags_override_config() {
        let config = serde_json::json!({"evaluate": {"reps": 20, "outer_k": 3}, "jobs": 2});
        let flags = EvaluateArgs {
            reps: Some(4),
            ..Default::default()
        };
        let resolved = resolve(&flags, &config, "evaluate").unwrap();
        assert_eq!(resolved.reps, Some(4));
        assert_eq!(resolved.outer_k, Some(3));
        assert_eq!(resolved.inner_k, None);
        assert_eq!(jobs(None, &config), Some(2));
        assert_eq!(jobs(Some(1), &config), Some(1));
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let config = serde_json::json!({"evaluate": {"repetitions": 20}});
        assert!(resolve(&EvaluateArgs::default(), &config, "evaluate").is_err());
    }
}
