//! Text grammar for actions.
//!
//! ```text
//! reply   = call | object | "[" object { "," object } "]"
//! object  = "{" "\"thought\"" ":" string "," "\"action\"" ":" string "}"
//! call    = name "(" [ arg { "," arg } ] ")"
//! arg     = quoted | bare
//! quoted  = '"' { char | escape } '"' | "'" { char | escape } "'"
//! bare    = 1*( any char except , ( ) ' " and whitespace )
//! ```
//!
//! Names are matched case-insensitively with `_` ignored, so `finishwithanswer`
//! and `finish_with_answer` are the same action. `setValue(node, text)` is
//! accepted as an alias of `type`. `goto(3)` with a bare integer switches tab;
//! any other `goto` argument is a url.

use serde_json::Value;

use super::{Action, Command, Direction, ElementRef};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ParseError {
    #[error("empty reply")]
    EmptyReply,
    #[error("unknown action `{0}`")]
    UnknownAction(String),
    #[error("malformed arguments for `{action}`: {reason}")]
    MalformedArgs { action: String, reason: String },
    #[error("malformed reply: {0}")]
    MalformedReply(String),
}

/// Parses one LLM reply into exactly one action.
pub fn parse_action(raw_text: &str) -> Result<Action, ParseError> {
    let mut actions = parse_action_list(raw_text)?;
    if actions.len() != 1 {
        return Err(ParseError::MalformedReply(format!("expected exactly one action, found {}", actions.len())));
    }
    Ok(actions.remove(0))
}

/// Parses a reply that may contain several actions: a JSON list of
/// `{"thought", "action"}` objects, a single object, or one call per line.
pub fn parse_action_list(raw_text: &str) -> Result<Vec<Action>, ParseError> {
    let text = strip_code_fence(raw_text.trim());
    if text.is_empty() {
        return Err(ParseError::EmptyReply);
    }
    if text.starts_with('{') || text.starts_with('[') {
        let value: Value =
            serde_json::from_str(text).map_err(|e| ParseError::MalformedReply(format!("invalid json: {e}")))?;
        return match value {
            Value::Array(items) => items.iter().map(parse_object).collect(),
            obj @ Value::Object(_) => Ok(vec![parse_object(&obj)?]),
            _ => Err(ParseError::MalformedReply("expected object or list".into())),
        };
    }
    text.lines().map(str::trim).filter(|l| !l.is_empty()).map(parse_call).collect()
}

fn strip_code_fence(text: &str) -> &str {
    let Some(rest) = text.strip_prefix("```") else {
        return text;
    };
    let body = match rest.find('\n') {
        Some(i) => &rest[i + 1..],
        None => rest,
    };
    body.trim_end().strip_suffix("```").unwrap_or(body).trim()
}

fn parse_object(value: &Value) -> Result<Action, ParseError> {
    let obj = value.as_object().ok_or_else(|| ParseError::MalformedReply("list items must be objects".into()))?;
    let call = obj
        .get("action")
        .and_then(Value::as_str)
        .ok_or_else(|| ParseError::MalformedReply("missing string field `action`".into()))?;
    let thought = match obj.get("thought") {
        None | Some(Value::Null) => String::new(),
        Some(Value::String(s)) => s.trim().to_string(),
        Some(_) => return Err(ParseError::MalformedReply("`thought` must be a string".into())),
    };
    let action = parse_call(call.trim())?;
    Ok(action.with_description(thought))
}

#[derive(Debug)]
enum Arg {
    Quoted(String),
    Bare(String),
}

impl Arg {
    fn text(&self) -> &str {
        match self {
            Arg::Quoted(s) | Arg::Bare(s) => s,
        }
    }
}

fn parse_call(text: &str) -> Result<Action, ParseError> {
    if text.is_empty() {
        return Err(ParseError::EmptyReply);
    }
    let open = text.find('(').ok_or_else(|| ParseError::MalformedReply(format!("not an action call: {text:?}")))?;
    let name = text[..open].trim();
    if name.is_empty() || !name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_') {
        return Err(ParseError::MalformedReply(format!("not an action call: {text:?}")));
    }
    let (args, rest) = parse_args(&text[open + 1..])
        .map_err(|reason| ParseError::MalformedArgs { action: name.to_string(), reason })?;
    if !rest.trim().is_empty() {
        return Err(ParseError::MalformedReply(format!("unexpected trailing text {:?}", rest.trim())));
    }
    build(name, args)
}

/// Parses the argument list after `(`; returns the args and the text after `)`.
fn parse_args(input: &str) -> Result<(Vec<Arg>, &str), String> {
    let mut args = Vec::new();
    let mut chars = input.char_indices().peekable();
    let skip_ws = |chars: &mut std::iter::Peekable<std::str::CharIndices<'_>>| {
        while chars.peek().is_some_and(|(_, c)| c.is_whitespace()) {
            chars.next();
        }
    };
    skip_ws(&mut chars);
    if let Some(&(i, ')')) = chars.peek() {
        return Ok((args, &input[i + 1..]));
    }
    loop {
        skip_ws(&mut chars);
        let Some(&(start, c)) = chars.peek() else {
            return Err("missing closing parenthesis".into());
        };
        if c == '"' || c == '\'' {
            chars.next();
            let mut value = String::new();
            let mut closed = false;
            while let Some((_, ch)) = chars.next() {
                match ch {
                    '\\' => match chars.next() {
                        Some((_, 'n')) => value.push('\n'),
                        Some((_, 't')) => value.push('\t'),
                        Some((_, 'r')) => value.push('\r'),
                        Some((_, other)) => value.push(other),
                        None => return Err("dangling escape".into()),
                    },
                    ch if ch == c => {
                        closed = true;
                        break;
                    }
                    ch => value.push(ch),
                }
            }
            if !closed {
                return Err("unterminated string".into());
            }
            args.push(Arg::Quoted(value));
        } else {
            let mut end = start;
            while let Some(&(i, ch)) = chars.peek() {
                if ch == ',' || ch == ')' {
                    break;
                }
                if ch == '(' || ch == '"' || ch == '\'' {
                    return Err(format!("unexpected {ch:?} in bare argument"));
                }
                end = i + ch.len_utf8();
                chars.next();
            }
            let token = input[start..end].trim();
            if token.is_empty() {
                return Err("empty argument".into());
            }
            args.push(Arg::Bare(token.to_string()));
        }
        skip_ws(&mut chars);
        match chars.next() {
            Some((_, ',')) => continue,
            Some((i, ')')) => return Ok((args, &input[i + 1..])),
            Some((_, ch)) => return Err(format!("expected `,` or `)`, found {ch:?}")),
            None => return Err("missing closing parenthesis".into()),
        }
    }
}

fn build(name: &str, args: Vec<Arg>) -> Result<Action, ParseError> {
    let normalized: String = name.chars().filter(|c| *c != '_').map(|c| c.to_ascii_lowercase()).collect();
    let malformed = |reason: &str| ParseError::MalformedArgs { action: name.to_string(), reason: reason.to_string() };
    let arity = |n: usize| -> Result<(), ParseError> {
        if args.len() == n {
            Ok(())
        } else {
            Err(malformed(&format!("expected {n} argument(s), got {}", args.len())))
        }
    };
    let element = |arg: &Arg| -> Result<ElementRef, ParseError> {
        let id = arg.text().trim();
        if id.is_empty() {
            Err(malformed("element id must be non-empty"))
        } else {
            Ok(ElementRef::new(id))
        }
    };
    let tab = |arg: &Arg| -> Result<u32, ParseError> {
        arg.text().trim().parse::<u32>().map_err(|_| malformed("tab id must be a non-negative integer"))
    };

    let command = match normalized.as_str() {
        "click" => {
            arity(1)?;
            Command::Click { target: element(&args[0])? }
        }
        "hover" => {
            arity(1)?;
            Command::Hover { target: element(&args[0])? }
        }
        "type" | "setvalue" => {
            arity(2)?;
            Command::Type { target: element(&args[0])?, text: args[1].text().to_string() }
        }
        "scroll" => {
            arity(1)?;
            let direction = Direction::from_name(args[0].text())
                .ok_or_else(|| malformed("direction must be up, down, left or right"))?;
            Command::Scroll { direction }
        }
        "goto" => {
            arity(1)?;
            match &args[0] {
                Arg::Bare(t) if t.chars().all(|c| c.is_ascii_digit()) => Command::GotoTab { tab_id: tab(&args[0])? },
                arg => Command::GotoUrl { url: arg.text().trim().to_string() },
            }
        }
        "gotourl" => {
            arity(1)?;
            Command::GotoUrl { url: args[0].text().trim().to_string() }
        }
        "gototab" => {
            arity(1)?;
            Command::GotoTab { tab_id: tab(&args[0])? }
        }
        "finishwithanswer" => {
            arity(1)?;
            Command::FinishWithAnswer { text: args[0].text().to_string() }
        }
        "finish" => {
            arity(0)?;
            Command::Finish
        }
        "failure" => {
            arity(0)?;
            Command::Failure
        }
        _ => return Err(ParseError::UnknownAction(name.to_string())),
    };
    let action = Action::new(command);
    action.validate().map_err(|e| malformed(&e.to_string()))?;
    Ok(action)
}

fn quote(s: &str) -> String {
    let mut out = String::with_capacity(s.len() + 2);
    out.push('"');
    for c in s.chars() {
        match c {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            '\r' => out.push_str("\\r"),
            '\t' => out.push_str("\\t"),
            c => out.push(c),
        }
    }
    out.push('"');
    out
}

fn node_arg(id: &str) -> String {
    let bare_safe =
        !id.is_empty() && id.chars().all(|c| c.is_ascii_alphanumeric() || matches!(c, '_' | '-' | '.' | ':' | '@'));
    if bare_safe {
        id.to_string()
    } else {
        quote(id)
    }
}

/// Canonical call form, e.g. `type(20, "Hello world")` or `scroll(down)`.
pub fn serialize_action(action: &Action) -> String {
    match &action.command {
        Command::Click { target } => format!("click({})", node_arg(&target.node_id)),
        Command::Hover { target } => format!("hover({})", node_arg(&target.node_id)),
        Command::Type { target, text } => {
            format!("type({}, {})", node_arg(&target.node_id), quote(text))
        }
        Command::Scroll { direction } => format!("scroll({direction})"),
        Command::GotoUrl { url } => format!("goto({})", quote(url)),
        Command::GotoTab { tab_id } => format!("goto_tab({tab_id})"),
        Command::FinishWithAnswer { text } => format!("finishwithanswer({})", quote(text)),
        Command::Finish => "finish()".to_string(),
        Command::Failure => "failure()".to_string(),
    }
}

/// Structured reply form `{"thought": ..., "action": ...}` carrying the description.
pub fn serialize_reply(action: &Action) -> String {
    serde_json::json!({
        "thought": action.description,
        "action": serialize_action(action),
    })
    .to_string()
}
