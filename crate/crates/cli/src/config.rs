//! The JSON run configuration.
//!
//! Relative paths are resolved against the directory holding the config file.
//! Command-line flags override file values, which override built-in defaults.

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use promptmcts_core::gateway::{
    Backend, BackendKind, ConstantScript, HttpBackend, ReplayBackend, RetryPolicy, Script, ScriptedBackend,
};
use promptmcts_core::landscape::KeywordLandscape;
use promptmcts_core::search::SearchConfig;
use promptmcts_core::{Gateway, LlmRoleConfig, Role, TemplateSet};
use serde::Deserialize;

use crate::CliError;

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub search: SearchConfig,
    pub roles: Roles,
    #[serde(default)]
    pub dataset_path: Option<PathBuf>,
    /// File holding the starting prompt; the built-in initial prompt otherwise.
    #[serde(default)]
    pub initial_prompt_path: Option<PathBuf>,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub template_override_path: Option<PathBuf>,
    #[serde(default)]
    pub gateway: GatewaySection,
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Roles {
    pub base: RoleSpec,
    pub actor: RoleSpec,
    pub optimizer: RoleSpec,
}

impl Roles {
    fn get(&self, role: Role) -> &RoleSpec {
        match role {
            Role::Base => &self.base,
            Role::Actor => &self.actor,
            Role::Optimizer => &self.optimizer,
        }
    }
}

/// One model role. Unset model settings fall back to the role's defaults.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RoleSpec {
    pub backend: BackendKind,
    pub endpoint: Option<String>,
    pub model_name: Option<String>,
    pub temperature: Option<f64>,
    pub max_tokens: Option<u32>,
    /// Name of the environment variable holding the API key.
    pub api_key_env: Option<String>,
    /// Fixture file for the replay backend.
    pub fixtures: Option<PathBuf>,
    /// Response script for the scripted backend.
    pub script: Option<ScriptSpec>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ScriptSpec {
    Constant {
        text: String,
    },
    KeywordLandscape {
        #[serde(default)]
        keywords: Option<Vec<String>>,
        #[serde(default)]
        distractor_rate: Option<f64>,
        #[serde(default)]
        drop_rate: Option<f64>,
        #[serde(default)]
        explore_rate: Option<f64>,
    },
}

impl ScriptSpec {
    fn build(&self) -> Arc<dyn Script> {
        match self {
            ScriptSpec::Constant { text } => Arc::new(ConstantScript(text.clone())),
            ScriptSpec::KeywordLandscape {
                keywords,
                distractor_rate,
                drop_rate,
                explore_rate,
            } => {
                let d = KeywordLandscape::default();
                Arc::new(KeywordLandscape {
                    keywords: keywords.clone().unwrap_or(d.keywords),
                    distractor_rate: distractor_rate.unwrap_or(d.distractor_rate),
                    drop_rate: drop_rate.unwrap_or(d.drop_rate),
                    explore_rate: explore_rate.unwrap_or(d.explore_rate),
                })
            }
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GatewaySection {
    pub max_in_flight: usize,
    pub cache: bool,
    pub retry: RetryPolicy,
    /// Append every fresh reply to this fixture file.
    pub record_path: Option<PathBuf>,
}

impl Default for GatewaySection {
    fn default() -> Self {
        Self {
            max_in_flight: 4,
            cache: true,
            retry: RetryPolicy::default(),
            record_path: None,
        }
    }
}

fn usage(field: &str, message: impl std::fmt::Display) -> CliError {
    CliError::Usage(format!("{field}: {message}"))
}

fn check_rate(field: &str, v: Option<f64>) -> Result<(), CliError> {
    match v {
        Some(x) if !(0.0..=1.0).contains(&x) => Err(usage(field, "must lie in [0, 1]")),
        _ => Ok(()),
    }
}

impl RunConfig {
    /// Reads, resolves and validates a config file.
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        let mut cfg = Self::parse(&text)?;
        let dir = path.parent().unwrap_or(Path::new(""));
        cfg.resolve_paths(dir);
        cfg.validate()?;
        Ok(cfg)
    }

    /// Parses without resolving paths; errors name the offending field.
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        serde_path_to_error::deserialize(de).map_err(|e| {
            let field = e.path().to_string();
            let inner = e.into_inner();
            if field == "." {
                CliError::Usage(format!("config: {inner}"))
            } else {
                usage(&field, inner)
            }
        })
    }

    fn resolve_paths(&mut self, dir: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = dir.join(&*p);
            }
        };
        for p in [&mut self.dataset_path, &mut self.initial_prompt_path, &mut self.template_override_path]
            .into_iter()
            .flatten()
        {
            fix(p);
        }
        fix(&mut self.output_dir);
        if let Some(p) = &mut self.gateway.record_path {
            fix(p);
        }
        for spec in [&mut self.roles.base, &mut self.roles.actor, &mut self.roles.optimizer] {
            if let Some(p) = &mut spec.fixtures {
                fix(p);
            }
        }
    }

    pub fn validate(&self) -> Result<(), CliError> {
        self.search
            .validate()
            .map_err(|e| usage(&format!("search.{}", e.field), e.message))?;
        if self.gateway.max_in_flight == 0 {
            return Err(usage("gateway.max_in_flight", "must be at least 1"));
        }
        if !(0.0..=1.0).contains(&self.gateway.retry.jitter) {
            return Err(usage("gateway.retry.jitter", "must lie in [0, 1]"));
        }
        for role in Role::ALL {
            let spec = self.roles.get(role);
            let field = |f: &str| format!("roles.{}.{f}", role.as_str());
            if let Some(t) = spec.temperature {
                if !t.is_finite() || t < 0.0 {
                    return Err(usage(&field("temperature"), "must be a non-negative number"));
                }
            }
            match spec.backend {
                BackendKind::Replay if spec.fixtures.is_none() => {
                    return Err(usage(&field("fixtures"), "required for the replay backend"));
                }
                BackendKind::Scripted if spec.script.is_none() => {
                    return Err(usage(&field("script"), "required for the scripted backend"));
                }
                _ => {}
            }
            if let Some(ScriptSpec::KeywordLandscape {
                keywords,
                distractor_rate,
                drop_rate,
                explore_rate,
            }) = &spec.script
            {
                if keywords.as_ref().is_some_and(|k| k.is_empty() || k.iter().any(|w| w.trim().is_empty())) {
                    return Err(usage(&field("script.keywords"), "must be non-empty words"));
                }
                check_rate(&field("script.distractor_rate"), *distractor_rate)?;
                check_rate(&field("script.drop_rate"), *drop_rate)?;
                check_rate(&field("script.explore_rate"), *explore_rate)?;
            }
        }
        Ok(())
    }

    pub fn role_config(&self, role: Role) -> LlmRoleConfig {
        let spec = self.roles.get(role);
        let mut cfg = LlmRoleConfig::default_for(role).with_backend(spec.backend);
        if let Some(v) = &spec.endpoint {
            cfg.endpoint = v.clone();
        }
        if let Some(v) = &spec.model_name {
            cfg.model_name = v.clone();
        }
        if let Some(v) = spec.temperature {
            cfg.temperature = v;
        }
        if let Some(v) = spec.max_tokens {
            cfg.max_tokens = v;
        }
        if let Some(v) = &spec.api_key_env {
            cfg.api_key_env = v.clone();
        }
        cfg
    }

    /// Builds the gateway. Roles sharing a fixture file share one replay
    /// backend; scripted roles are seeded with the search seed.
    pub fn gateway(&self) -> Result<Gateway, CliError> {
        let mut http: Option<Arc<dyn Backend>> = None;
        let mut replays: HashMap<PathBuf, Arc<dyn Backend>> = HashMap::new();
        let mut gw = Gateway::new()
            .with_cache(self.gateway.cache)
            .with_max_in_flight(self.gateway.max_in_flight);
        for role in Role::ALL {
            let spec = self.roles.get(role);
            let backend: Arc<dyn Backend> = match spec.backend {
                BackendKind::Http => match &http {
                    Some(b) => b.clone(),
                    None => {
                        let b: Arc<dyn Backend> = Arc::new(
                            HttpBackend::new(self.gateway.retry).map_err(|e| CliError::Runtime(e.to_string()))?,
                        );
                        http = Some(b.clone());
                        b
                    }
                },
                BackendKind::Replay => {
                    let path = spec.fixtures.clone().expect("validated");
                    match replays.get(&path) {
                        Some(b) => b.clone(),
                        None => {
                            let b: Arc<dyn Backend> = Arc::new(
                                ReplayBackend::from_path(&path)
                                    .map_err(|e| usage(&format!("roles.{}.fixtures", role.as_str()), e))?,
                            );
                            replays.insert(path, b.clone());
                            b
                        }
                    }
                }
                BackendKind::Scripted => {
                    let script = spec.script.as_ref().expect("validated").build();
                    Arc::new(ScriptedBackend::new(script, self.search.rng_seed))
                }
            };
            gw = gw.with_role(self.role_config(role), backend);
        }
        if let Some(path) = &self.gateway.record_path {
            gw = gw.record_to(path).map_err(|e| usage("gateway.record_path", e))?;
        }
        Ok(gw)
    }

    pub fn templates(&self) -> Result<TemplateSet, CliError> {
        match &self.template_override_path {
            None => Ok(TemplateSet::default()),
            Some(p) => TemplateSet::from_override_file(p).map_err(|e| usage("template_override_path", e)),
        }
    }

    pub fn initial_prompt(&self) -> Result<Option<String>, CliError> {
        let Some(p) = &self.initial_prompt_path else { return Ok(None) };
        let text = std::fs::read_to_string(p).map_err(|e| usage("initial_prompt_path", e))?;
        if text.trim().is_empty() {
            return Err(usage("initial_prompt_path", "prompt file is empty"));
        }
        Ok(Some(text))
    }
}
