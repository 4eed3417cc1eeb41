use std::path::Path;

use night2day::pipeline::PipelineConfig;
use serde_json::Value;

use crate::error::{CliError, CliResult};

/// Defaults, then the config file (if any), then `key=value` overrides.
pub fn load_config(path: Option<&Path>, overrides: &[String]) -> CliResult<PipelineConfig> {
    let base = match path {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| {
                CliError::Config(format!("cannot read config {}: {e}", p.display()))
            })?;
            let cfg: PipelineConfig = serde_json::from_str(&text)
                .map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?;
            cfg
        }
        None => PipelineConfig::default(),
    };
    let mut value = serde_json::to_value(&base).map_err(|e| CliError::Config(e.to_string()))?;
    for o in overrides {
        apply_override(&mut value, o)?;
    }
    serde_json::from_value(value).map_err(|e| CliError::Config(format!("after overrides: {e}")))
}

/// `a.b.c=value`; the value is parsed as JSON, falling back to a string.
/// Only keys that already exist can be set.
pub fn apply_override(root: &mut Value, assignment: &str) -> CliResult<()> {
    let (key, raw) = assignment.split_once('=').ok_or_else(|| {
        CliError::Usage(format!(
            "override `{assignment}` is not of the form key=value"
        ))
    })?;
    let mut node = root;
    for part in key.split('.') {
        node = node
            .as_object_mut()
            .and_then(|m| m.get_mut(part))
            .ok_or_else(|| CliError::Config(format!("unknown config key `{key}`")))?;
    }
    *node = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_owned()));
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn overrides_reach_nested_keys() {
        let cfg = load_config(
            None,
            &[
                "inpainter.steps.edge=7".into(),
                "order=\"m2\"".into(),
                "order=m2".into(),
            ],
        )
        .unwrap();
        assert_eq!(cfg.inpainter.steps.edge, 7);
        assert_eq!(cfg.order, night2day::pipeline::Order::M2);
    }

    #[test]
    fn unknown_keys_are_config_errors() {
        let err = load_config(None, &["inpainter.nope=1".into()]).unwrap_err();
        assert_eq!(err.exit_code(), 3);
        let err = load_config(None, &["noequals".into()]).unwrap_err();
        assert_eq!(err.exit_code(), 2);
        let err = load_config(None, &["image_size=\"big\"".into()]).unwrap_err();
        assert_eq!(err.exit_code(), 3);
    }
}
