//! Prompt and preprocessing templates.
//!
//! Templates are plain text with `<name>` placeholders. The built-in set is
//! compiled from `templates/` and stamped with the contents of
//! `templates/VERSION`; a directory with the same layout can override any
//! subset of them.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::path::Path;
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error)]
pub enum TemplateError {
    #[error("missing binding for placeholder `{0}`")]
    MissingBinding(String),
    #[error("unknown template `{0}`")]
    UnknownTemplate(String),
    #[error("reading template {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TemplateId {
    /// Stage-1 instruction placed before the report and market-data sections.
    Stage1Prompt,
    /// Stage-2 instruction placed before knowledge, history and query.
    Stage2Prompt,
    StockQaQuestion,
    ReportAlignment,
    CotOutput,
    NewsSummary,
    QaExtraction,
    PairwiseJudge,
}

impl TemplateId {
    pub const ALL: [TemplateId; 8] = [
        TemplateId::Stage1Prompt,
        TemplateId::Stage2Prompt,
        TemplateId::StockQaQuestion,
        TemplateId::ReportAlignment,
        TemplateId::CotOutput,
        TemplateId::NewsSummary,
        TemplateId::QaExtraction,
        TemplateId::PairwiseJudge,
    ];

    pub fn file_stem(self) -> &'static str {
        match self {
            TemplateId::Stage1Prompt => "stage1_prompt",
            TemplateId::Stage2Prompt => "stage2_prompt",
            TemplateId::StockQaQuestion => "stock_qa_question",
            TemplateId::ReportAlignment => "report_alignment",
            TemplateId::CotOutput => "cot_output",
            TemplateId::NewsSummary => "news_summary",
            TemplateId::QaExtraction => "qa_extraction",
            TemplateId::PairwiseJudge => "pairwise_judge",
        }
    }

    fn builtin_text(self) -> &'static str {
        match self {
            TemplateId::Stage1Prompt => include_str!("../../templates/stage1_prompt.txt"),
            TemplateId::Stage2Prompt => include_str!("../../templates/stage2_prompt.txt"),
            TemplateId::StockQaQuestion => include_str!("../../templates/stock_qa_question.txt"),
            TemplateId::ReportAlignment => include_str!("../../templates/report_alignment.txt"),
            TemplateId::CotOutput => include_str!("../../templates/cot_output.txt"),
            TemplateId::NewsSummary => include_str!("../../templates/news_summary.txt"),
            TemplateId::QaExtraction => include_str!("../../templates/qa_extraction.txt"),
            TemplateId::PairwiseJudge => include_str!("../../templates/pairwise_judge.txt"),
        }
    }
}

impl fmt::Display for TemplateId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.file_stem())
    }
}

impl std::str::FromStr for TemplateId {
    type Err = TemplateError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        TemplateId::ALL
            .into_iter()
            .find(|id| id.file_stem() == s)
            .ok_or_else(|| TemplateError::UnknownTemplate(s.to_string()))
    }
}

fn placeholder_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"<([A-Za-z_][A-Za-z0-9_]*)>").unwrap())
}

/// Strips the single trailing newline text editors add to template files.
fn trim_file_newline(text: &str) -> &str {
    text.strip_suffix('\n')
        .map(|t| t.strip_suffix('\r').unwrap_or(t))
        .unwrap_or(text)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Template {
    text: String,
}

impl Template {
    pub fn new(text: impl Into<String>) -> Self {
        Self { text: text.into() }
    }

    pub fn text(&self) -> &str {
        &self.text
    }

    /// Placeholder names in order of first appearance.
    pub fn placeholders(&self) -> Vec<&str> {
        let mut seen = Vec::new();
        for cap in placeholder_re().captures_iter(&self.text) {
            let name = cap.get(1).unwrap().as_str();
            if !seen.contains(&name) {
                seen.push(name);
            }
        }
        seen
    }

    /// Substitutes every placeholder verbatim. Bound values are not rescanned,
    /// so a value that itself looks like `<x>` is left alone.
    pub fn render<K, V>(&self, bindings: &HashMap<K, V>) -> Result<String, TemplateError>
    where
        K: std::borrow::Borrow<str> + std::hash::Hash + Eq,
        V: AsRef<str>,
    {
        let mut out = String::with_capacity(self.text.len());
        let mut last = 0;
        for cap in placeholder_re().captures_iter(&self.text) {
            let whole = cap.get(0).unwrap();
            let name = cap.get(1).unwrap().as_str();
            let value = bindings
                .get(name)
                .ok_or_else(|| TemplateError::MissingBinding(name.to_string()))?;
            out.push_str(&self.text[last..whole.start()]);
            out.push_str(value.as_ref());
            last = whole.end();
        }
        out.push_str(&self.text[last..]);
        Ok(out)
    }
}

/// A versioned set of templates.
#[derive(Debug, Clone)]
pub struct TemplateSet {
    version: String,
    templates: BTreeMap<TemplateId, Template>,
}

impl TemplateSet {
    pub fn builtin() -> Self {
        let templates = TemplateId::ALL
            .into_iter()
            .map(|id| (id, Template::new(trim_file_newline(id.builtin_text()))))
            .collect();
        Self {
            version: include_str!("../../templates/VERSION").trim().to_string(),
            templates,
        }
    }

    /// Loads `<stem>.txt` files from `dir` over the built-in defaults. A
    /// `VERSION` file in the directory replaces the version stamp; without
    /// one the stamp becomes `<builtin>+local`.
    pub fn load_dir(dir: &Path) -> Result<Self, TemplateError> {
        let mut set = Self::builtin();
        let mut overridden = false;
        for id in TemplateId::ALL {
            let path = dir.join(format!("{}.txt", id.file_stem()));
            if path.exists() {
                let text = std::fs::read_to_string(&path).map_err(|source| TemplateError::Io {
                    path: path.display().to_string(),
                    source,
                })?;
                set.templates.insert(id, Template::new(trim_file_newline(&text)));
                overridden = true;
            }
        }
        let version_path = dir.join("VERSION");
        if version_path.exists() {
            let v = std::fs::read_to_string(&version_path).map_err(|source| TemplateError::Io {
                path: version_path.display().to_string(),
                source,
            })?;
            set.version = v.trim().to_string();
        } else if overridden {
            set.version = format!("{}+local", set.version);
        }
        Ok(set)
    }

    pub fn version(&self) -> &str {
        &self.version
    }

    pub fn get(&self, id: TemplateId) -> &Template {
        &self.templates[&id]
    }

    pub fn set(&mut self, id: TemplateId, template: Template) {
        self.templates.insert(id, template);
    }

    pub fn render<K, V>(&self, id: TemplateId, bindings: &HashMap<K, V>) -> Result<String, TemplateError>
    where
        K: std::borrow::Borrow<str> + std::hash::Hash + Eq,
        V: AsRef<str>,
    {
        self.get(id).render(bindings)
    }
}

impl Default for TemplateSet {
    fn default() -> Self {
        Self::builtin()
    }
}

/// Renders one of the built-in templates.
pub fn render_template<K, V>(id: TemplateId, bindings: &HashMap<K, V>) -> Result<String, TemplateError>
where
    K: std::borrow::Borrow<str> + std::hash::Hash + Eq,
    V: AsRef<str>,
{
    TemplateSet::builtin().render(id, bindings)
}
