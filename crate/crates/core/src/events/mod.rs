//! Raw human events captured by page listeners while the human holds control,
//! and their transformation into canonical actions.

mod buffer;
mod llm;
mod rules;

use std::fmt;

use serde::{Deserialize, Serialize};

pub use buffer::{BufferError, EventBuffer};
pub use llm::{
    llm_transform, render_transform_prompt, TransformOutcome, TransformPathTaken, ACTION_SPACE, TRANSFORM_PROMPT,
};
pub use rules::{encode_actions, rule_transform, rule_transform_with, TransformConfig, TransformContext};

/// Listener event type. Unrecognized names are preserved so they can be
/// logged and dropped instead of failing deserialization.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum EventType {
    Click,
    Scroll,
    Keyup,
    Input,
    KeyboardEvent,
    Mouseover,
    Contextmenu,
    TabUpdate,
    Other(String),
}

impl EventType {
    pub fn as_str(&self) -> &str {
        match self {
            EventType::Click => "click",
            EventType::Scroll => "scroll",
            EventType::Keyup => "keyup",
            EventType::Input => "input",
            EventType::KeyboardEvent => "KeyboardEvent",
            EventType::Mouseover => "mouseover",
            EventType::Contextmenu => "contextmenu",
            EventType::TabUpdate => "tab_update",
            EventType::Other(s) => s,
        }
    }

    pub fn is_key_event(&self) -> bool {
        matches!(self, EventType::Keyup | EventType::Input | EventType::KeyboardEvent)
    }
}

impl From<String> for EventType {
    fn from(s: String) -> Self {
        match s.as_str() {
            "click" => EventType::Click,
            "scroll" | "wheel" => EventType::Scroll,
            "keyup" => EventType::Keyup,
            "input" => EventType::Input,
            "KeyboardEvent" | "keydown" => EventType::KeyboardEvent,
            "mouseover" => EventType::Mouseover,
            "contextmenu" => EventType::Contextmenu,
            "tab_update" | "Tabs.onUpdated" => EventType::TabUpdate,
            _ => EventType::Other(s),
        }
    }
}

impl From<EventType> for String {
    fn from(t: EventType) -> Self {
        t.as_str().to_string()
    }
}

impl Serialize for EventType {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(self.as_str())
    }
}

impl<'de> Deserialize<'de> for EventType {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        String::deserialize(d).map(EventType::from)
    }
}

impl fmt::Display for EventType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ScrollData {
    pub delta_x: f64,
    pub delta_y: f64,
    #[serde(default)]
    pub delta_mode: u32,
    #[serde(default)]
    pub is_line: bool,
    #[serde(default)]
    pub is_page: bool,
    #[serde(default = "default_true")]
    pub is_pixel: bool,
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct KeyData {
    #[serde(default)]
    pub key: String,
    #[serde(default)]
    pub code: String,
    #[serde(default)]
    pub is_ctrl_pressed: bool,
    #[serde(default)]
    pub is_shift_pressed: bool,
    #[serde(default)]
    pub is_alt_pressed: bool,
    #[serde(default)]
    pub is_meta_pressed: bool,
    #[serde(rename = "fulltextentry", alias = "fullTextEntry", default)]
    pub full_text_entry: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UrlData {
    pub url_name: String,
    pub tab_id: u32,
}

/// One listener-captured browser event. Field names on the wire follow the
/// listener's event-log interface (`nodeID`, `keyData.fulltextentry`, ...).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawHumanEvent {
    #[serde(rename = "actionType", alias = "action_type")]
    pub action_type: EventType,
    #[serde(rename = "nodeID", alias = "nodeId", default, skip_serializing_if = "Option::is_none")]
    pub node_id: Option<String>,
    #[serde(rename = "elementName", default, skip_serializing_if = "Option::is_none")]
    pub element_name: Option<String>,
    #[serde(rename = "DOM", alias = "dom", default, skip_serializing_if = "Option::is_none")]
    pub dom: Option<String>,
    #[serde(rename = "elementouterHTML", alias = "elementOuterHTML", default, skip_serializing_if = "Option::is_none")]
    pub element_outer_html: Option<String>,
    #[serde(rename = "AXTree", alias = "axTree", default, skip_serializing_if = "Option::is_none")]
    pub ax_tree: Option<String>,
    /// Reference to a separately stored screenshot blob.
    #[serde(rename = "Screenshot", alias = "screenshot", default, skip_serializing_if = "Option::is_none")]
    pub screenshot: Option<String>,
    #[serde(rename = "coordinateX", default, skip_serializing_if = "Option::is_none")]
    pub coordinate_x: Option<f64>,
    #[serde(rename = "coordinateY", default, skip_serializing_if = "Option::is_none")]
    pub coordinate_y: Option<f64>,
    #[serde(rename = "clickType", default, skip_serializing_if = "Option::is_none")]
    pub click_type: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub position: Option<String>,
    #[serde(rename = "URL", alias = "url", default, skip_serializing_if = "Option::is_none")]
    pub url: Option<String>,
    #[serde(rename = "scrollData", default, skip_serializing_if = "Option::is_none")]
    pub scroll_data: Option<ScrollData>,
    #[serde(rename = "keyData", default, skip_serializing_if = "Option::is_none")]
    pub key_data: Option<KeyData>,
    #[serde(rename = "urldata", alias = "urlData", default, skip_serializing_if = "Option::is_none")]
    pub url_data: Option<UrlData>,
    /// Monotonic milliseconds.
    #[serde(default)]
    pub timestamp: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum EventError {
    #[error("{0} event is missing scrollData")]
    MissingScrollData(EventType),
    #[error("{0} event is missing keyData")]
    MissingKeyData(EventType),
    #[error("{0} event is missing urldata")]
    MissingUrlData(EventType),
}

impl RawHumanEvent {
    pub fn new(action_type: EventType, timestamp: u64) -> Self {
        Self {
            action_type,
            node_id: None,
            element_name: None,
            dom: None,
            element_outer_html: None,
            ax_tree: None,
            screenshot: None,
            coordinate_x: None,
            coordinate_y: None,
            click_type: None,
            position: None,
            url: None,
            scroll_data: None,
            key_data: None,
            url_data: None,
            timestamp,
        }
    }

    pub fn click(node: &str, timestamp: u64) -> Self {
        Self::new(EventType::Click, timestamp).on_node(node)
    }

    pub fn mouseover(node: &str, timestamp: u64) -> Self {
        Self::new(EventType::Mouseover, timestamp).on_node(node)
    }

    /// Text-entry event carrying the field's full text after the keystroke.
    pub fn text_entry(action_type: EventType, node: &str, full_text: &str, timestamp: u64) -> Self {
        let key = full_text.chars().last().map(String::from).unwrap_or_default();
        let mut e = Self::new(action_type, timestamp).on_node(node);
        e.key_data = Some(KeyData {
            code: key.clone(),
            key,
            is_ctrl_pressed: false,
            is_shift_pressed: false,
            is_alt_pressed: false,
            is_meta_pressed: false,
            full_text_entry: full_text.to_string(),
        });
        e
    }

    pub fn scroll(delta_x: f64, delta_y: f64, timestamp: u64) -> Self {
        let mut e = Self::new(EventType::Scroll, timestamp);
        e.scroll_data =
            Some(ScrollData { delta_x, delta_y, delta_mode: 0, is_line: false, is_page: false, is_pixel: true });
        e
    }

    pub fn tab_update(url: &str, tab_id: u32, timestamp: u64) -> Self {
        let mut e = Self::new(EventType::TabUpdate, timestamp);
        e.url = Some(url.to_string());
        e.url_data = Some(UrlData { url_name: url.to_string(), tab_id });
        e
    }

    pub fn on_node(mut self, node: &str) -> Self {
        self.node_id = Some(node.to_string());
        self
    }

    pub fn named(mut self, element_name: &str) -> Self {
        self.element_name = Some(element_name.to_string());
        self
    }

    pub fn at_url(mut self, url: &str) -> Self {
        self.url = Some(url.to_string());
        self
    }

    /// Checks that each event type carries its required payload.
    pub fn validate(&self) -> Result<(), EventError> {
        match &self.action_type {
            EventType::Scroll if self.scroll_data.is_none() => {
                Err(EventError::MissingScrollData(self.action_type.clone()))
            }
            t if t.is_key_event() && self.key_data.is_none() => {
                Err(EventError::MissingKeyData(self.action_type.clone()))
            }
            EventType::TabUpdate if self.url_data.is_none() => {
                Err(EventError::MissingUrlData(self.action_type.clone()))
            }
            _ => Ok(()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wire_keys_follow_event_log_interface() {
        let e = RawHumanEvent::text_entry(EventType::Input, "20", "Hello world", 7);
        let v = serde_json::to_value(&e).unwrap();
        assert_eq!(v["actionType"], "input");
        assert_eq!(v["nodeID"], "20");
        assert_eq!(v["keyData"]["fulltextentry"], "Hello world");
        assert_eq!(v["keyData"]["isShiftPressed"], false);
        let back: RawHumanEvent = serde_json::from_value(v).unwrap();
        assert_eq!(back, e);
    }

    #[test]
    fn accepts_snake_action_type_and_unknown_types() {
        let v = serde_json::json!({
            "action_type": "tab_update",
            "urldata": {"url_name": "http://x.test/", "tab_id": 2},
            "timestamp": 1
        });
        let e: RawHumanEvent = serde_json::from_value(v).unwrap();
        assert_eq!(e.action_type, EventType::TabUpdate);
        assert_eq!(e.url_data.unwrap().tab_id, 2);

        let odd: RawHumanEvent = serde_json::from_value(serde_json::json!({"actionType": "dragstart"})).unwrap();
        assert_eq!(odd.action_type, EventType::Other("dragstart".into()));
    }

    #[test]
    fn payload_requirements() {
        assert!(RawHumanEvent::new(EventType::Scroll, 0).validate().is_err());
        assert!(RawHumanEvent::new(EventType::Keyup, 0).validate().is_err());
        assert!(RawHumanEvent::new(EventType::TabUpdate, 0).validate().is_err());
        assert!(RawHumanEvent::click("1", 0).validate().is_ok());
        assert!(RawHumanEvent::scroll(0.0, 120.0, 0).validate().is_ok());
    }
}
