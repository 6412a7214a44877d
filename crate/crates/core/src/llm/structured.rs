//! Parser for the fenced key/value reply format.
//!
//! A reply must contain a block fenced by lines starting with three
//! backticks. Inside it, a line `key: value` (ASCII or full-width colon)
//! opens a field when `key` is one of the task's keys; any other line
//! continues the previous field's value. Text outside the fence is ignored.

use std::collections::BTreeMap;

use thiserror::Error;

use super::Task;

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum StructuredError {
    #[error("no fenced output block")]
    MissingBlock,
    #[error("output block is not closed")]
    UnclosedBlock,
    #[error("text before the first key: `{0}`")]
    StrayText(String),
    #[error("key `{0}` appears twice")]
    DuplicateKey(String),
    #[error("missing required key `{0}`")]
    MissingKey(&'static str),
    #[error("key `{key}` has invalid value `{value}`")]
    InvalidValue { key: &'static str, value: String },
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct OutputBlock {
    fields: BTreeMap<&'static str, String>,
}

impl OutputBlock {
    pub fn get(&self, key: &str) -> Option<&str> {
        self.fields.get(key).map(String::as_str)
    }

    /// Value of a key that the parser already checked is present.
    pub fn text(&self, key: &str) -> &str {
        self.get(key).unwrap_or_default()
    }

    pub fn flag(&self, key: &'static str) -> Result<bool, StructuredError> {
        let value = self.text(key).trim();
        match value.to_lowercase().as_str() {
            "yes" | "true" | "y" | "是" => Ok(true),
            "no" | "false" | "n" | "否" => Ok(false),
            _ => Err(StructuredError::InvalidValue {
                key,
                value: value.to_owned(),
            }),
        }
    }
}

fn is_fence(line: &str) -> bool {
    line.trim_start().starts_with("```")
}

fn split_key(line: &str, task: Task) -> Option<(&'static str, &str)> {
    let (key, value) = match (line.find(':'), line.find('：')) {
        (Some(a), Some(b)) if b < a => (&line[..b], &line[b + '：'.len_utf8()..]),
        (Some(a), _) => (&line[..a], &line[a + 1..]),
        (None, Some(b)) => (&line[..b], &line[b + '：'.len_utf8()..]),
        (None, None) => return None,
    };
    let key = key.trim().to_ascii_lowercase();
    task.output_keys()
        .iter()
        .find(|k| **k == key)
        .map(|k| (*k, value.trim_start()))
}

/// Extracts and validates the reply block for `task`.
pub fn parse_block(raw: &str, task: Task) -> Result<OutputBlock, StructuredError> {
    let mut lines = raw.lines().skip_while(|l| !is_fence(l));
    if lines.next().is_none() {
        return Err(StructuredError::MissingBlock);
    }

    let mut fields: BTreeMap<&'static str, String> = BTreeMap::new();
    let mut current: Option<&'static str> = None;
    let mut closed = false;
    for line in lines {
        if is_fence(line) {
            closed = true;
            break;
        }
        if let Some((key, value)) = split_key(line, task) {
            if fields.insert(key, value.to_owned()).is_some() {
                return Err(StructuredError::DuplicateKey(key.to_owned()));
            }
            current = Some(key);
            continue;
        }
        match current {
            Some(key) => {
                let value = fields.get_mut(key).expect("current key was inserted");
                value.push('\n');
                value.push_str(line);
            }
            None if line.trim().is_empty() => {}
            None => return Err(StructuredError::StrayText(line.trim().to_owned())),
        }
    }
    if !closed {
        return Err(StructuredError::UnclosedBlock);
    }
    for value in fields.values_mut() {
        let trimmed = value.trim().to_owned();
        *value = trimmed;
    }
    for key in task.required_keys() {
        if !fields.contains_key(key) {
            return Err(StructuredError::MissingKey(key));
        }
    }
    Ok(OutputBlock { fields })
}

/// Strips code fences from a raw reply, keeping everything else.
pub(crate) fn strip_fences(raw: &str) -> String {
    raw.lines()
        .filter(|l| !is_fence(l))
        .collect::<Vec<_>>()
        .join("\n")
        .trim()
        .to_owned()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_rewrite_block_with_surrounding_prose() {
        let raw = "Sure, here you go.\n```\nreasoning: The context names the show.\nIt is season two.\ncomplete: no\nrewritten: who is the lead actor of Joy of Life season 2\n```\nthanks";
        let block = parse_block(raw, Task::Rewrite).unwrap();
        assert_eq!(block.text("reasoning"), "The context names the show.\nIt is season two.");
        assert!(!block.flag("complete").unwrap());
        assert_eq!(block.text("rewritten"), "who is the lead actor of Joy of Life season 2");
    }

    #[test]
    fn full_width_colon_and_chinese_flags() {
        let raw = "```\nambiguous：是\nquestion：你指的是电视剧还是小说？\n```";
        let block = parse_block(raw, Task::Clarify).unwrap();
        assert!(block.flag("ambiguous").unwrap());
        assert_eq!(block.text("question"), "你指的是电视剧还是小说？");
    }

    #[test]
    fn colon_inside_value_is_kept() {
        let raw = "```\nanswer: Ratio is 3:2 [1].\n```";
        assert_eq!(parse_block(raw, Task::Rag).unwrap().text("answer"), "Ratio is 3:2 [1].");
    }

    #[test]
    fn empty_reference_is_allowed() {
        let block = parse_block("```\nreference:\n```", Task::Extract).unwrap();
        assert_eq!(block.text("reference"), "");
    }

    #[test]
    fn malformed_replies() {
        assert_eq!(parse_block("no block", Task::Rag), Err(StructuredError::MissingBlock));
        assert_eq!(parse_block("```\nanswer: x", Task::Rag), Err(StructuredError::UnclosedBlock));
        assert_eq!(
            parse_block("```\nhello\nanswer: x\n```", Task::Rag),
            Err(StructuredError::StrayText("hello".into()))
        );
        assert_eq!(
            parse_block("```\ncomplete: yes\n```", Task::Rewrite),
            Err(StructuredError::MissingKey("rewritten"))
        );
        assert_eq!(
            parse_block("```\nanswer: a\nanswer: b\n```", Task::Rag),
            Err(StructuredError::DuplicateKey("answer".into()))
        );
        let block = parse_block("```\ncomplete: maybe\nrewritten: q\n```", Task::Rewrite).unwrap();
        assert!(block.flag("complete").is_err());
    }

    #[test]
    fn fences_are_stripped() {
        assert_eq!(strip_fences("```text\nhello\n```"), "hello");
    }
}
