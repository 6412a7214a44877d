//! Prompt templates.
//!
//! One plain-text asset per task and locale, named `<task>.<locale>.txt`.
//! Sections start with a line `@@ <name>`:
//!
//! ```text
//! @@ instruction
//! What the model must do.
//! @@ example
//! @@ input
//! Demonstration input.
//! @@ output
//! Demonstration output (a fenced key/value block).
//! @@ schema
//! Description of the keys the reply must contain.
//! @@ prompt
//! Input layout with {placeholders}.
//! ```
//!
//! `example` may repeat; each needs one `input` and one `output`. The
//! shipped assets carry five demonstrations each.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use thiserror::Error;

use super::Task;
use crate::model::Locale;

pub const DEFAULT_DEMONSTRATIONS: usize = 5;

#[derive(Debug, Error)]
pub enum TemplateError {
    #[error("{file}: missing `@@ {section}` section")]
    MissingSection { file: String, section: &'static str },
    #[error("{file}:{line}: unknown section `{name}`")]
    UnknownSection { file: String, line: usize, name: String },
    #[error("{file}:{line}: `@@ {name}` outside an example")]
    OrphanExamplePart { file: String, line: usize, name: String },
    #[error("{file}: example {index} lacks input or output")]
    IncompleteExample { file: String, index: usize },
    #[error("{file}: prompt uses unknown placeholder `{{{name}}}`")]
    UnknownPlaceholder { file: String, name: String },
    #[error("reading {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptTemplate {
    pub task: Task,
    pub locale: Locale,
    pub instruction: String,
    pub demonstrations: Vec<(String, String)>,
    pub output_schema: String,
    pub prompt: String,
}

fn placeholders(task: Task) -> &'static [&'static str] {
    match task {
        Task::Rewrite | Task::Clarify => &["context", "query"],
        Task::Extract => &["query", "page"],
        Task::Rag => &["query", "references"],
        Task::DirectAnswer => &["query"],
    }
}

struct Labels {
    example: &'static str,
    input: &'static str,
    output: &'static str,
    format: &'static str,
    repair: &'static str,
}

fn labels(locale: Locale) -> Labels {
    match locale {
        Locale::En => Labels {
            example: "Example",
            input: "Input",
            output: "Output",
            format: "Output format",
            repair: "Your previous reply could not be parsed",
        },
        Locale::Zh => Labels {
            example: "示例",
            input: "输入",
            output: "输出",
            format: "输出格式",
            repair: "你上一次的回复无法解析",
        },
    }
}

impl PromptTemplate {
    pub fn parse(task: Task, locale: Locale, file: &str, text: &str) -> Result<Self, TemplateError> {
        #[derive(PartialEq)]
        enum Part {
            None,
            Instruction,
            Schema,
            Prompt,
            Input,
            Output,
        }
        let mut instruction = None::<String>;
        let mut schema = None::<String>;
        let mut prompt = None::<String>;
        let mut examples: Vec<(Option<String>, Option<String>)> = Vec::new();
        let mut part = Part::None;
        let mut buf = String::new();

        let mut flush = |part: &Part, buf: &mut String, examples: &mut Vec<(Option<String>, Option<String>)>| {
            let body = buf.trim().to_owned();
            buf.clear();
            match part {
                Part::None => {}
                Part::Instruction => instruction = Some(body),
                Part::Schema => schema = Some(body),
                Part::Prompt => prompt = Some(body),
                Part::Input => examples.last_mut().expect("inside example").0 = Some(body),
                Part::Output => examples.last_mut().expect("inside example").1 = Some(body),
            }
        };

        for (i, line) in text.lines().enumerate() {
            let Some(name) = line.strip_prefix("@@ ") else {
                buf.push_str(line);
                buf.push('\n');
                continue;
            };
            flush(&part, &mut buf, &mut examples);
            let name = name.trim();
            part = match name {
                "instruction" => Part::Instruction,
                "schema" => Part::Schema,
                "prompt" => Part::Prompt,
                "example" => {
                    examples.push((None, None));
                    Part::None
                }
                "input" | "output" => {
                    if examples.is_empty() {
                        return Err(TemplateError::OrphanExamplePart {
                            file: file.to_owned(),
                            line: i + 1,
                            name: name.to_owned(),
                        });
                    }
                    if name == "input" {
                        Part::Input
                    } else {
                        Part::Output
                    }
                }
                other => {
                    return Err(TemplateError::UnknownSection {
                        file: file.to_owned(),
                        line: i + 1,
                        name: other.to_owned(),
                    })
                }
            };
        }
        flush(&part, &mut buf, &mut examples);

        let missing = |section| TemplateError::MissingSection {
            file: file.to_owned(),
            section,
        };
        let demonstrations = examples
            .into_iter()
            .enumerate()
            .map(|(index, ex)| match ex {
                (Some(i), Some(o)) => Ok((i, o)),
                _ => Err(TemplateError::IncompleteExample {
                    file: file.to_owned(),
                    index: index + 1,
                }),
            })
            .collect::<Result<Vec<_>, _>>()?;
        let template = Self {
            task,
            locale,
            instruction: instruction.ok_or_else(|| missing("instruction"))?,
            demonstrations,
            output_schema: schema.ok_or_else(|| missing("schema"))?,
            prompt: prompt.ok_or_else(|| missing("prompt"))?,
        };
        template.check_placeholders(file)?;
        Ok(template)
    }

    fn check_placeholders(&self, file: &str) -> Result<(), TemplateError> {
        let allowed = placeholders(self.task);
        let mut rest = self.prompt.as_str();
        while let Some(open) = rest.find('{') {
            let after = &rest[open + 1..];
            let Some(close) = after.find('}') else { break };
            let name = &after[..close];
            if !name.is_empty()
                && name.chars().all(|c| c.is_ascii_lowercase() || c == '_')
                && !allowed.contains(&name)
            {
                return Err(TemplateError::UnknownPlaceholder {
                    file: file.to_owned(),
                    name: name.to_owned(),
                });
            }
            rest = &after[close + 1..];
        }
        Ok(())
    }

    /// Renders the full prompt with the first `demonstrations` examples.
    /// `repair` carries the parse error of a previous reply, if any.
    pub fn render(
        &self,
        variables: &BTreeMap<String, String>,
        demonstrations: usize,
        repair: Option<&str>,
    ) -> String {
        let labels = labels(self.locale);
        let mut out = String::new();
        out.push_str(&self.instruction);
        out.push_str("\n\n");
        for (i, (input, output)) in self.demonstrations.iter().take(demonstrations).enumerate() {
            out.push_str(&format!(
                "{} {}\n{}:\n{}\n{}:\n{}\n\n",
                labels.example,
                i + 1,
                labels.input,
                input,
                labels.output,
                output
            ));
        }
        out.push_str(&format!("{}:\n{}\n\n", labels.format, self.output_schema));
        fill(&self.prompt, variables, &mut out);
        if let Some(error) = repair {
            out.push_str(&format!("\n\n{}: {error}.", labels.repair));
        }
        out
    }
}

/// Single-pass `{name}` substitution; values are never rescanned.
fn fill(prompt: &str, variables: &BTreeMap<String, String>, out: &mut String) {
    let mut rest = prompt;
    while let Some(open) = rest.find('{') {
        out.push_str(&rest[..open]);
        let after = &rest[open + 1..];
        match after.find('}').and_then(|close| variables.get(&after[..close]).map(|v| (close, v))) {
            Some((close, value)) => {
                out.push_str(value);
                rest = &after[close + 1..];
            }
            None => {
                out.push('{');
                rest = after;
            }
        }
    }
    out.push_str(rest);
}

/// One template per task and locale.
#[derive(Debug, Clone)]
pub struct TemplateSet {
    templates: HashMap<(Task, Locale), PromptTemplate>,
}

macro_rules! asset {
    ($name:literal) => {
        ($name, include_str!(concat!("../../assets/prompts/", $name, ".txt")))
    };
}

const BUILTIN: [(&str, &str); 10] = [
    asset!("rewrite.en"),
    asset!("rewrite.zh"),
    asset!("clarify.en"),
    asset!("clarify.zh"),
    asset!("extract.en"),
    asset!("extract.zh"),
    asset!("rag.en"),
    asset!("rag.zh"),
    asset!("direct_answer.en"),
    asset!("direct_answer.zh"),
];

fn file_name(task: Task, locale: Locale) -> String {
    format!("{}.{}", task.name(), locale.code())
}

impl TemplateSet {
    /// The templates shipped with the crate.
    pub fn builtin() -> Self {
        let mut templates = HashMap::new();
        for task in Task::ALL {
            for locale in Locale::ALL {
                let name = file_name(task, locale);
                let (_, text) = BUILTIN
                    .iter()
                    .find(|(n, _)| *n == name)
                    .expect("every task and locale has a bundled asset");
                let template = PromptTemplate::parse(task, locale, &name, text)
                    .unwrap_or_else(|e| panic!("bundled template is invalid: {e}"));
                templates.insert((task, locale), template);
            }
        }
        Self { templates }
    }

    /// Built-in templates, overridden by any `<task>.<locale>.txt` found in `dir`.
    pub fn load_dir(dir: &Path) -> Result<Self, TemplateError> {
        let mut set = Self::builtin();
        for task in Task::ALL {
            for locale in Locale::ALL {
                let path = dir.join(format!("{}.txt", file_name(task, locale)));
                if !path.exists() {
                    continue;
                }
                let text = std::fs::read_to_string(&path).map_err(|source| TemplateError::Io {
                    path: path.display().to_string(),
                    source,
                })?;
                let template = PromptTemplate::parse(task, locale, &path.display().to_string(), &text)?;
                set.templates.insert((task, locale), template);
            }
        }
        Ok(set)
    }

    pub fn get(&self, task: Task, locale: Locale) -> &PromptTemplate {
        &self.templates[&(task, locale)]
    }
}

impl Default for TemplateSet {
    fn default() -> Self {
        Self::builtin()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::llm::parse_block;

    #[test]
    fn every_task_and_locale_resolves_with_five_demonstrations() {
        let set = TemplateSet::builtin();
        for task in Task::ALL {
            for locale in Locale::ALL {
                let t = set.get(task, locale);
                assert_eq!((t.task, t.locale), (task, locale));
                assert_eq!(t.demonstrations.len(), DEFAULT_DEMONSTRATIONS, "{task} {locale:?}");
            }
        }
    }

    #[test]
    fn demonstration_outputs_follow_the_reply_format() {
        let set = TemplateSet::builtin();
        for task in Task::ALL {
            for locale in Locale::ALL {
                for (i, (_, output)) in set.get(task, locale).demonstrations.iter().enumerate() {
                    assert!(
                        parse_block(output, task).is_ok(),
                        "{task}.{} example {}",
                        locale.code(),
                        i + 1
                    );
                }
            }
        }
    }

    #[test]
    fn render_substitutes_and_limits_demonstrations() {
        let set = TemplateSet::builtin();
        let t = set.get(Task::DirectAnswer, Locale::En);
        let mut vars = BTreeMap::new();
        vars.insert("query".to_string(), "capital of France".to_string());
        let full = t.render(&vars, 5, None);
        assert!(full.contains("capital of France"));
        assert!(full.contains("Example 5"));
        let short = t.render(&vars, 2, Some("no fenced output block"));
        assert!(short.contains("Example 2") && !short.contains("Example 3"));
        assert!(short.ends_with("Your previous reply could not be parsed: no fenced output block."));
    }

    #[test]
    fn parse_errors() {
        let err = PromptTemplate::parse(Task::Rag, Locale::En, "x", "@@ instruction\nhi\n@@ prompt\n{query}")
            .unwrap_err();
        assert!(matches!(err, TemplateError::MissingSection { section: "schema", .. }));

        let err = PromptTemplate::parse(Task::Rag, Locale::En, "x", "@@ input\nhi").unwrap_err();
        assert!(matches!(err, TemplateError::OrphanExamplePart { line: 1, .. }));

        let err = PromptTemplate::parse(
            Task::Rag,
            Locale::En,
            "x",
            "@@ instruction\ni\n@@ schema\ns\n@@ prompt\n{query} {page}",
        )
        .unwrap_err();
        assert!(matches!(err, TemplateError::UnknownPlaceholder { ref name, .. } if name == "page"));

        let err = PromptTemplate::parse(
            Task::Rag,
            Locale::En,
            "x",
            "@@ instruction\ni\n@@ example\n@@ input\nq\n@@ schema\ns\n@@ prompt\n{query}",
        )
        .unwrap_err();
        assert!(matches!(err, TemplateError::IncompleteExample { index: 1, .. }));
    }

    #[test]
    fn directory_overrides_single_template() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(
            dir.path().join("rag.en.txt"),
            "@@ instruction\nCustom.\n@@ schema\nanswer: text\n@@ prompt\nQ: {query}\n{references}",
        )
        .unwrap();
        let set = TemplateSet::load_dir(dir.path()).unwrap();
        assert_eq!(set.get(Task::Rag, Locale::En).instruction, "Custom.");
        assert!(set.get(Task::Rag, Locale::En).demonstrations.is_empty());
        assert_eq!(set.get(Task::Rag, Locale::Zh), TemplateSet::builtin().get(Task::Rag, Locale::Zh));
    }
}
