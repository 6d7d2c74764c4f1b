//! Label → term resolution backends.

use std::collections::HashMap;

use super::{OntologyError, OntologyGraph};

/// Lowercases, turns underscores and hyphens into spaces and collapses
/// whitespace.
pub fn normalize_label(raw: &str) -> String {
    raw.to_lowercase()
        .replace(['_', '-'], " ")
        .split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
}

/// Resolves a raw label to an ontology term id.
pub trait OntologyLookup {
    /// `Ok(None)` means the backend answered but found nothing.
    fn resolve(&self, raw_label: &str) -> Result<Option<String>, OntologyError>;
}

/// Lookup against the names and synonyms of a loaded term table.
/// Never fails.
#[derive(Debug, Clone)]
pub struct LocalLookup {
    by_name: HashMap<String, String>,
    by_synonym: HashMap<String, String>,
}

impl LocalLookup {
    pub fn new(graph: &OntologyGraph) -> Self {
        fn keep_smallest(map: &mut HashMap<String, String>, key: String, id: &str) {
            map.entry(key)
                .and_modify(|cur| {
                    if id < cur.as_str() {
                        *cur = id.to_string();
                    }
                })
                .or_insert_with(|| id.to_string());
        }
        let mut by_name = HashMap::new();
        let mut by_synonym = HashMap::new();
        for t in graph.terms() {
            keep_smallest(&mut by_name, normalize_label(&t.name), &t.term_id);
            for s in &t.synonyms {
                keep_smallest(&mut by_synonym, normalize_label(s), &t.term_id);
            }
        }
        LocalLookup { by_name, by_synonym }
    }
}

impl OntologyLookup for LocalLookup {
    fn resolve(&self, raw_label: &str) -> Result<Option<String>, OntologyError> {
        let key = normalize_label(raw_label);
        if key.is_empty() {
            return Ok(None);
        }
        Ok(self.by_name.get(&key).or_else(|| self.by_synonym.get(&key)).cloned())
    }
}

#[cfg(feature = "remote-lookup")]
pub use remote::{RemoteLookup, RemoteLookupConfig, ONTOLOGY_URL_ENV};

#[cfg(feature = "remote-lookup")]
mod remote {
    use std::collections::HashMap;
    use std::fs::OpenOptions;
    use std::io::{BufRead, BufReader, Write};
    use std::path::PathBuf;
    use std::sync::Mutex;
    use std::time::Duration;

    use serde::Deserialize;

    use super::{normalize_label, OntologyError, OntologyLookup};

    /// Environment variable holding the remote lookup endpoint URL.
    pub const ONTOLOGY_URL_ENV: &str = "AMRKIT_ONTOLOGY_URL";

    #[derive(Debug, Clone)]
    pub struct RemoteLookupConfig {
        pub endpoint: String,
        pub timeout: Duration,
        pub retries: usize,
        /// Append-only `normalized_label<TAB>term_id` cache; an empty term id
        /// records a confirmed miss.
        pub cache_path: Option<PathBuf>,
    }

    impl RemoteLookupConfig {
        pub fn new(endpoint: impl Into<String>) -> Self {
            RemoteLookupConfig { endpoint: endpoint.into(), timeout: Duration::from_secs(10), retries: 3, cache_path: None }
        }

        pub fn from_env() -> Option<Self> {
            std::env::var(ONTOLOGY_URL_ENV).ok().filter(|s| !s.is_empty()).map(RemoteLookupConfig::new)
        }
    }

    /// Reply document: `{"term_id": "...", "label": "...", "parent_ids": [...]}`,
    /// or `null` / HTTP 404 when nothing matches.
    #[derive(Debug, Deserialize)]
    struct TermReply {
        term_id: String,
        #[allow(dead_code)]
        label: Option<String>,
        #[allow(dead_code)]
        #[serde(default)]
        parent_ids: Vec<String>,
    }

    /// HTTP lookup with an on-disk cache so that reruns are reproducible
    /// offline.
    pub struct RemoteLookup {
        config: RemoteLookupConfig,
        agent: ureq::Agent,
        cache: Mutex<HashMap<String, Option<String>>>,
    }

    impl RemoteLookup {
        pub fn new(config: RemoteLookupConfig) -> Result<Self, OntologyError> {
            let mut cache = HashMap::new();
            if let Some(path) = &config.cache_path {
                if path.exists() {
                    let f = BufReader::new(std::fs::File::open(path)?);
                    for line in f.lines() {
                        let line = line?;
                        if let Some((k, v)) = line.split_once('\t') {
                            cache.insert(k.to_string(), (!v.is_empty()).then(|| v.to_string()));
                        }
                    }
                }
            }
            let agent: ureq::Agent = ureq::Agent::config_builder()
                .timeout_global(Some(config.timeout))
                .http_status_as_error(false)
                .build()
                .into();
            Ok(RemoteLookup { config, agent, cache: Mutex::new(cache) })
        }

        fn fetch(&self, key: &str) -> Result<Option<String>, String> {
            let mut resp = self.agent.get(&self.config.endpoint).query("q", key).call().map_err(|e| e.to_string())?;
            match resp.status().as_u16() {
                404 => Ok(None),
                200 => {
                    let reply: Option<TermReply> = resp.body_mut().read_json().map_err(|e| e.to_string())?;
                    Ok(reply.map(|r| r.term_id).filter(|id| !id.is_empty()))
                }
                other => Err(format!("HTTP status {other}")),
            }
        }
    }

    impl OntologyLookup for RemoteLookup {
        fn resolve(&self, raw_label: &str) -> Result<Option<String>, OntologyError> {
            let key = normalize_label(raw_label);
            let mut cache = self.cache.lock().expect("cache lock poisoned");
            if let Some(hit) = cache.get(&key) {
                return Ok(hit.clone());
            }
            let mut last_err = String::new();
            for attempt in 0..=self.config.retries {
                match self.fetch(&key) {
                    Ok(found) => {
                        if let Some(path) = &self.config.cache_path {
                            let mut f = OpenOptions::new().create(true).append(true).open(path)?;
                            writeln!(f, "{key}\t{}", found.as_deref().unwrap_or(""))?;
                        }
                        cache.insert(key, found.clone());
                        return Ok(found);
                    }
                    Err(e) => {
                        log::warn!("ontology lookup attempt {} for '{key}' failed: {e}", attempt + 1);
                        last_err = e;
                    }
                }
            }
            Err(OntologyError::LookupUnavailable(last_err))
        }
    }
}
