//! Pipeline configuration file. Relative paths resolve against the file's
//! own directory; secrets come from the environment, never from the file.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use ten_core::corpus::Source;
use ten_core::eval::RougeVariant;
use ten_core::llm_gateway::{GenSettings, RetryPolicy, API_KEY_ENV};
use ten_core::numeral::OperationType;
use ten_core::prefs;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub corpus: CorpusSection,
    #[serde(default)]
    pub teacher: EndpointSection,
    #[serde(default)]
    pub rationale_generator: EndpointSection,
    #[serde(default)]
    pub headline_generator: EndpointSection,
    pub distill: DistillSection,
    #[serde(default)]
    pub prefs: PrefsSection,
    #[serde(default)]
    pub run: RunSection,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorpusSection {
    pub path: String,
    #[serde(default = "default_source")]
    pub source: String,
    pub min_words: Option<usize>,
    pub max_words: Option<usize>,
}

fn default_source() -> String {
    "numhg".into()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EndpointSection {
    pub url: Option<String>,
    pub model: String,
    pub temperature: Option<f64>,
    pub max_tokens: u32,
    pub timeout_secs: u64,
    pub max_attempts: u32,
    /// Name of the environment variable holding the API key.
    pub api_key_env: String,
}

impl Default for EndpointSection {
    fn default() -> Self {
        Self {
            url: None,
            model: "mock".into(),
            temperature: None,
            max_tokens: 1024,
            timeout_secs: 120,
            max_attempts: 3,
            api_key_env: API_KEY_ENV.into(),
        }
    }
}

impl EndpointSection {
    pub fn settings(&self, default_temperature: f64) -> GenSettings {
        GenSettings {
            model_id: self.model.clone(),
            temperature: self.temperature.unwrap_or(default_temperature),
            max_tokens: self.max_tokens,
        }
    }

    pub fn retry(&self) -> RetryPolicy {
        RetryPolicy {
            max_attempts: self.max_attempts,
            ..RetryPolicy::default()
        }
    }

    pub fn timeout(&self) -> Duration {
        Duration::from_secs(self.timeout_secs)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DistillSection {
    pub demo_dir: String,
    #[serde(default = "default_order")]
    pub demo_order: Vec<String>,
    pub max_article_chars: Option<usize>,
    #[serde(default)]
    pub retry_invalid: bool,
}

fn default_order() -> Vec<String> {
    ten_core::distill::DEFAULT_DEMO_ORDER.iter().map(|o| o.to_string()).collect()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PrefsSection {
    pub k: usize,
    pub temperature: f64,
    pub margin: f64,
    pub rouge: RougeVariant,
}

impl Default for PrefsSection {
    fn default() -> Self {
        Self {
            k: prefs::DEFAULT_K,
            temperature: prefs::DEFAULT_TEMPERATURE,
            margin: prefs::DEFAULT_MARGIN,
            rouge: RougeVariant::Rouge1,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunSection {
    pub out_dir: String,
    pub parallelism: usize,
    pub mock: bool,
    pub fixture_dir: Option<String>,
    /// Fail on prompts with no recorded fixture instead of synthesizing one.
    pub mock_strict: bool,
}

impl Default for RunSection {
    fn default() -> Self {
        Self {
            out_dir: "out".into(),
            parallelism: 4,
            mock: false,
            fixture_dir: None,
            mock_strict: false,
        }
    }
}

/// Every problem found in a config, one per line.
#[derive(Debug)]
pub struct ConfigErrors(pub Vec<String>);

impl fmt::Display for ConfigErrors {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "invalid configuration:")?;
        for e in &self.0 {
            writeln!(f, "  - {e}")?;
        }
        Ok(())
    }
}

impl std::error::Error for ConfigErrors {}

/// A parsed, validated config together with the directory it came from.
#[derive(Debug, Clone)]
pub struct Loaded {
    pub config: PipelineConfig,
    pub base: PathBuf,
    pub source: Source,
    pub demo_order: Vec<OperationType>,
}

impl Loaded {
    pub fn resolve(&self, path: &str) -> PathBuf {
        self.base.join(path)
    }

    pub fn corpus_path(&self) -> PathBuf {
        self.resolve(&self.config.corpus.path)
    }

    pub fn demo_dir(&self) -> PathBuf {
        self.resolve(&self.config.distill.demo_dir)
    }

    pub fn fixture_dir(&self) -> Option<PathBuf> {
        self.config.run.fixture_dir.as_deref().map(|p| self.resolve(p))
    }

    pub fn out_dir(&self) -> PathBuf {
        self.resolve(&self.config.run.out_dir)
    }

    pub fn parallelism(&self) -> usize {
        self.config.run.parallelism
    }
}

pub fn load(path: &Path, force_mock: bool) -> Result<Loaded, ConfigErrors> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| ConfigErrors(vec![format!("{}: {e}", path.display())]))?;
    let mut config: PipelineConfig =
        toml::from_str(&text).map_err(|e| ConfigErrors(vec![format!("{}: {}", path.display(), e.message())]))?;
    if force_mock {
        config.run.mock = true;
    }
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    validate(config, base)
}

pub fn validate(config: PipelineConfig, base: PathBuf) -> Result<Loaded, ConfigErrors> {
    let mut errors = Vec::new();
    let exists = |p: &str| base.join(p).exists();

    if !exists(&config.corpus.path) {
        errors.push(format!("corpus.path: not found: {}", config.corpus.path));
    }
    let source = Source::from_str(&config.corpus.source)
        .map_err(|e| errors.push(format!("corpus.source: {e}")))
        .unwrap_or(Source::Numhg);
    if let (Some(lo), Some(hi)) = (config.corpus.min_words, config.corpus.max_words) {
        if lo > hi {
            errors.push(format!("corpus.min_words: {lo} exceeds corpus.max_words {hi}"));
        }
    }

    for (name, ep) in [
        ("teacher", &config.teacher),
        ("rationale_generator", &config.rationale_generator),
        ("headline_generator", &config.headline_generator),
    ] {
        if !config.run.mock && ep.url.is_none() {
            errors.push(format!("{name}.url: required unless run.mock is true"));
        }
        if let Some(t) = ep.temperature {
            if !(0.0..=2.0).contains(&t) {
                errors.push(format!("{name}.temperature: must lie in [0, 2], got {t}"));
            }
        }
        if ep.max_attempts == 0 {
            errors.push(format!("{name}.max_attempts: must be at least 1"));
        }
        if ep.max_tokens == 0 {
            errors.push(format!("{name}.max_tokens: must be at least 1"));
        }
    }

    if !exists(&config.distill.demo_dir) {
        errors.push(format!("distill.demo_dir: not found: {}", config.distill.demo_dir));
    }
    let mut demo_order = Vec::new();
    for op in &config.distill.demo_order {
        match OperationType::from_str(op) {
            Ok(o) if demo_order.contains(&o) => errors.push(format!("distill.demo_order: {op} listed twice")),
            Ok(o) => demo_order.push(o),
            Err(e) => errors.push(format!("distill.demo_order: {e}")),
        }
    }
    if config.distill.max_article_chars == Some(0) {
        errors.push("distill.max_article_chars: must be at least 1".into());
    }

    if config.prefs.k < 2 {
        errors.push(format!("prefs.k: must be at least 2, got {}", config.prefs.k));
    }
    if config.prefs.k > ten_core::llm_gateway::DEFAULT_SAMPLE_CAP {
        errors.push(format!(
            "prefs.k: at most {} samples per request, got {}",
            ten_core::llm_gateway::DEFAULT_SAMPLE_CAP,
            config.prefs.k
        ));
    }
    if !(0.0..=2.0).contains(&config.prefs.temperature) {
        errors.push(format!("prefs.temperature: must lie in [0, 2], got {}", config.prefs.temperature));
    }
    if !(0.0..=1.0).contains(&config.prefs.margin) {
        errors.push(format!("prefs.margin: must lie in [0, 1], got {}", config.prefs.margin));
    }

    if config.run.parallelism == 0 {
        errors.push("run.parallelism: must be at least 1".into());
    }
    match (&config.run.fixture_dir, config.run.mock) {
        (None, true) => errors.push("run.fixture_dir: required when run.mock is true".into()),
        (Some(dir), true) if !exists(dir) => errors.push(format!("run.fixture_dir: not found: {dir}")),
        _ => {}
    }

    if errors.is_empty() {
        Ok(Loaded {
            config,
            base,
            source,
            demo_order,
        })
    } else {
        Err(ConfigErrors(errors))
    }
}
