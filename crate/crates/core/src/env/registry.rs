//! Construction of environments by name.

use serde::{Deserialize, Serialize};

use super::{Crawler, CrawlerConfig, Environment, PurcellConfig, PurcellSwimmer};
use crate::bridge::{BridgeEnv, BridgeOptions};
use crate::error::{Error, Result};
use crate::search_space::Preset;

pub const PURCELL_SWIMMER: &str = "purcell_swimmer";
pub const CRAWLER: &str = "crawler";
pub const EXTERNAL_PREFIX: &str = "external:";

pub type DynEnv = Box<dyn Environment<f64> + Send>;

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct EnvOptions {
    #[serde(default)]
    pub purcell: Option<PurcellConfig<f64>>,
    #[serde(default)]
    pub crawler: Option<CrawlerConfig<f64>>,
    #[serde(default)]
    pub bridge: Option<BridgeOptions>,
}

/// Names accepted by [`make`] besides `external:<task>`.
pub fn builtin_names() -> &'static [&'static str] {
    &[PURCELL_SWIMMER, CRAWLER]
}

pub fn make(name: &str, options: &EnvOptions) -> Result<DynEnv> {
    match name {
        PURCELL_SWIMMER => Ok(Box::new(PurcellSwimmer::new(options.purcell.clone().unwrap_or_default())?)),
        CRAWLER => Ok(Box::new(Crawler::new(options.crawler.clone().unwrap_or_default())?)),
        other => match other.strip_prefix(EXTERNAL_PREFIX) {
            Some(task) if !task.is_empty() => {
                let bridge = options
                    .bridge
                    .as_ref()
                    .ok_or_else(|| Error::invalid(format!("{name} needs bridge settings")))?;
                Ok(Box::new(BridgeEnv::connect(task, bridge)?))
            }
            _ => Err(Error::invalid(format!(
                "unknown environment `{name}`; expected one of {:?} or external:<task>",
                builtin_names()
            ))),
        },
    }
}

/// Search-space preset that matches an environment name.
pub fn default_preset(name: &str) -> Option<Preset> {
    match name {
        PURCELL_SWIMMER => Some(Preset::Swimmer),
        CRAWLER => None,
        other => other.strip_prefix(EXTERNAL_PREFIX).and_then(Preset::from_task_id),
    }
}
