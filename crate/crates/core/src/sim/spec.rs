//! Site-spec file format.
//!
//! ```toml
//! name = "mini-shop"
//! version = 1
//! start_url = "http://shop.test/"
//!
//! [[page]]
//! url = "http://shop.test/"
//! title = "Shop"
//! viewport_rows = 5            # optional; omit to show every element
//!
//! [[page.element]]
//! key = "search"               # spec-local name, not shown to actors
//! kind = "textfield"           # button | link | textfield | dropdown | text | image
//! label = "Search"
//! value = ""                   # optional initial value
//! hidden = false               # hidden elements appear once revealed
//!
//! [[page.rule]]
//! type = "search"              # trigger: exactly one of click / type / goto
//! contains = "lamp"            # type triggers take `equals` or `contains`
//! navigate = "http://shop.test/results"
//! set_flag = ["searched"]      # effects: set_value, reveal, set_flag,
//! reveal = []                  # navigate, open_tab (applied in that order)
//! set_value = [{ element = "search", value = "" }]
//! open_tab = "http://shop.test/help"
//! ```

use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::observation::ElementKind;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum SpecParseError {
    #[error("{origin}:{line}:{column}: {message}")]
    Syntax { origin: String, line: usize, column: usize, message: String },
    #[error("{origin}: {field}: {message}")]
    Invalid { origin: String, field: String, message: String },
    #[error("{origin}: {message}")]
    Io { origin: String, message: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SiteSpec {
    pub name: String,
    pub version: u32,
    pub start_url: String,
    #[serde(rename = "page", default)]
    pub pages: Vec<PageSpec>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PageSpec {
    pub url: String,
    #[serde(default)]
    pub title: String,
    #[serde(default)]
    pub viewport_rows: Option<usize>,
    #[serde(rename = "element", default)]
    pub elements: Vec<ElementSpec>,
    #[serde(rename = "rule", default)]
    pub rules: Vec<RuleSpec>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ElementSpec {
    pub key: String,
    pub kind: ElementKind,
    pub label: String,
    #[serde(default)]
    pub value: Option<String>,
    #[serde(default)]
    pub hidden: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SetValue {
    pub element: String,
    pub value: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RuleSpec {
    #[serde(default)]
    pub click: Option<String>,
    #[serde(rename = "type", default)]
    pub type_into: Option<String>,
    #[serde(default)]
    pub equals: Option<String>,
    #[serde(default)]
    pub contains: Option<String>,
    #[serde(default)]
    pub goto: Option<String>,

    #[serde(default)]
    pub set_value: Vec<SetValue>,
    #[serde(default)]
    pub reveal: Vec<String>,
    #[serde(default)]
    pub set_flag: Vec<String>,
    #[serde(default)]
    pub navigate: Option<String>,
    #[serde(default)]
    pub open_tab: Option<String>,
}

/// What fires a rule.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Trigger<'a> {
    Click(&'a str),
    Type { element: &'a str, predicate: TextPredicate<'a> },
    Goto(&'a str),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TextPredicate<'a> {
    Any,
    Equals(&'a str),
    Contains(&'a str),
}

impl TextPredicate<'_> {
    pub fn matches(&self, text: &str) -> bool {
        match self {
            TextPredicate::Any => true,
            TextPredicate::Equals(v) => text == *v,
            TextPredicate::Contains(v) => text.contains(v),
        }
    }
}

impl RuleSpec {
    /// The rule's trigger. Only meaningful on validated specs.
    pub fn trigger(&self) -> Trigger<'_> {
        if let Some(k) = &self.click {
            Trigger::Click(k)
        } else if let Some(k) = &self.type_into {
            let predicate = match (&self.equals, &self.contains) {
                (Some(v), _) => TextPredicate::Equals(v),
                (None, Some(v)) => TextPredicate::Contains(v),
                (None, None) => TextPredicate::Any,
            };
            Trigger::Type { element: k, predicate }
        } else {
            Trigger::Goto(self.goto.as_deref().unwrap_or_default())
        }
    }

    fn has_effect(&self) -> bool {
        !self.set_value.is_empty()
            || !self.reveal.is_empty()
            || !self.set_flag.is_empty()
            || self.navigate.is_some()
            || self.open_tab.is_some()
    }
}

impl PageSpec {
    pub fn element(&self, key: &str) -> Option<&ElementSpec> {
        self.elements.iter().find(|e| e.key == key)
    }
}

impl SiteSpec {
    pub fn page(&self, url: &str) -> Option<&PageSpec> {
        self.pages.iter().find(|p| p.url == url)
    }

    pub fn parse(text: &str, origin: &str) -> Result<Self, SpecParseError> {
        let spec: SiteSpec = toml::from_str(text).map_err(|e| {
            let (line, column) = e.span().map(|span| line_col(text, span.start)).unwrap_or((0, 0));
            SpecParseError::Syntax { origin: origin.to_string(), line, column, message: e.message().to_string() }
        })?;
        spec.check().map_err(|(field, message)| SpecParseError::Invalid {
            origin: origin.to_string(),
            field,
            message,
        })?;
        Ok(spec)
    }

    pub fn load(path: &Path) -> Result<Self, SpecParseError> {
        let origin = path.display().to_string();
        let text = std::fs::read_to_string(path)
            .map_err(|e| SpecParseError::Io { origin: origin.clone(), message: e.to_string() })?;
        Self::parse(&text, &origin)
    }

    fn check(&self) -> Result<(), (String, String)> {
        if self.name.trim().is_empty() {
            return Err(("name".into(), "must not be empty".into()));
        }
        let mut urls = BTreeSet::new();
        for (pi, page) in self.pages.iter().enumerate() {
            if !urls.insert(page.url.as_str()) {
                return Err((format!("page[{pi}].url"), format!("duplicate page url {:?}", page.url)));
            }
        }
        if !urls.contains(self.start_url.as_str()) {
            return Err(("start_url".into(), format!("no page with url {:?}", self.start_url)));
        }
        for (pi, page) in self.pages.iter().enumerate() {
            if page.viewport_rows == Some(0) {
                return Err((format!("page[{pi}].viewport_rows"), "must be at least 1".into()));
            }
            let mut keys = BTreeSet::new();
            for (ei, el) in page.elements.iter().enumerate() {
                if el.key.is_empty() {
                    return Err((format!("page[{pi}].element[{ei}].key"), "must not be empty".into()));
                }
                if !keys.insert(el.key.as_str()) {
                    return Err((
                        format!("page[{pi}].element[{ei}].key"),
                        format!("duplicate element key {:?}", el.key),
                    ));
                }
            }
            for (ri, rule) in page.rules.iter().enumerate() {
                let at = |field: &str| format!("page[{pi}].rule[{ri}].{field}");
                let triggers = rule.click.is_some() as u8 + rule.type_into.is_some() as u8 + rule.goto.is_some() as u8;
                if triggers != 1 {
                    return Err((at("trigger"), "exactly one of click, type, goto is required".into()));
                }
                if rule.type_into.is_none() && (rule.equals.is_some() || rule.contains.is_some()) {
                    return Err((at("equals"), "value predicates only apply to type triggers".into()));
                }
                if rule.equals.is_some() && rule.contains.is_some() {
                    return Err((at("contains"), "use either equals or contains, not both".into()));
                }
                if !rule.has_effect() {
                    return Err((at("effect"), "rule has no effect".into()));
                }
                let element = |field: &str, key: &str| -> Result<(), (String, String)> {
                    page.element(key)
                        .map(|_| ())
                        .ok_or_else(|| (at(field), format!("dangling element reference {key:?}")))
                };
                let known_page = |field: &str, url: &str| -> Result<(), (String, String)> {
                    if urls.contains(url) {
                        Ok(())
                    } else {
                        Err((at(field), format!("dangling page reference {url:?}")))
                    }
                };
                if let Some(k) = &rule.click {
                    element("click", k)?;
                }
                if let Some(k) = &rule.type_into {
                    element("type", k)?;
                    if page.element(k).map(|e| e.kind) != Some(ElementKind::Textfield) {
                        return Err((at("type"), format!("element {k:?} is not a textfield")));
                    }
                }
                for sv in &rule.set_value {
                    element("set_value", &sv.element)?;
                }
                for k in &rule.reveal {
                    element("reveal", k)?;
                }
                if let Some(u) = &rule.navigate {
                    known_page("navigate", u)?;
                }
                if let Some(u) = &rule.open_tab {
                    known_page("open_tab", u)?;
                }
            }
        }
        Ok(())
    }
}

fn line_col(text: &str, offset: usize) -> (usize, usize) {
    let before = &text[..offset.min(text.len())];
    let line = before.matches('\n').count() + 1;
    let column = before.rsplit('\n').next().map(|l| l.chars().count()).unwrap_or(0) + 1;
    (line, column)
}
