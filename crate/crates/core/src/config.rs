use serde::de::DeserializeOwned;

use crate::error::{Error, Result};

/// Parses YAML, reporting failures with the offending field path.
pub fn from_yaml_str<T: DeserializeOwned>(text: &str) -> Result<T> {
    let de = serde_yaml::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        Error::Config {
            field: if path == "." { "<root>".into() } else { path },
            message: e.into_inner().to_string(),
        }
    })
}
