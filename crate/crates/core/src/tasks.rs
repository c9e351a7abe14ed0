//! Task datasets and prompt instantiation.

use std::path::Path;

use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::grammar::{Piece, PromptTemplate, TaskSlot};
use crate::seed;

#[derive(Debug, Error)]
pub enum TaskError {
    #[error("reading task file: {0}")]
    Io(#[from] std::io::Error),
    #[error("parsing task file: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("task schema: field `{field}` {problem}")]
    Schema { field: String, problem: String },
    #[error("requested {requested} evaluation instances but the task has {available}")]
    NotEnoughInstances { requested: usize, available: usize },
    #[error("template needs {needed} examples but only {available} instances are available")]
    InsufficientExamples { needed: usize, available: usize },
    #[error("instance index {0} out of range")]
    BadInstance(usize),
}

impl TaskError {
    fn schema(field: impl Into<String>, problem: impl Into<String>) -> Self {
        TaskError::Schema {
            field: field.into(),
            problem: problem.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskInstance {
    pub input: String,
    pub target: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskDataset {
    pub name: String,
    pub task_request: String,
    pub llm_instruction: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub choices: Option<Vec<String>>,
    pub instances: Vec<TaskInstance>,
}

fn required_str(obj: &serde_json::Map<String, Value>, field: &str) -> Result<String, TaskError> {
    match obj.get(field) {
        None => Err(TaskError::schema(field, "is missing")),
        Some(Value::String(s)) if !s.trim().is_empty() => Ok(s.clone()),
        Some(Value::String(_)) => Err(TaskError::schema(field, "is empty")),
        Some(_) => Err(TaskError::schema(field, "must be a string")),
    }
}

impl TaskDataset {
    pub fn from_json(text: &str) -> Result<Self, TaskError> {
        let value: Value = serde_json::from_str(text)?;
        let obj = value
            .as_object()
            .ok_or_else(|| TaskError::schema("<root>", "must be an object"))?;

        let name = required_str(obj, "name")?;
        let task_request = required_str(obj, "task_request")?;
        let llm_instruction = required_str(obj, "llm_instruction")?;
        let choices = match obj.get("choices") {
            None | Some(Value::Null) => None,
            Some(Value::Array(items)) => Some(
                items
                    .iter()
                    .enumerate()
                    .map(|(i, v)| {
                        v.as_str()
                            .map(str::to_string)
                            .ok_or_else(|| TaskError::schema(format!("choices[{i}]"), "must be a string"))
                    })
                    .collect::<Result<Vec<_>, _>>()?,
            ),
            Some(_) => return Err(TaskError::schema("choices", "must be an array")),
        };
        let raw_instances = match obj.get("instances") {
            None => return Err(TaskError::schema("instances", "is missing")),
            Some(Value::Array(items)) => items,
            Some(_) => return Err(TaskError::schema("instances", "must be an array")),
        };
        let mut instances = Vec::with_capacity(raw_instances.len());
        for (i, item) in raw_instances.iter().enumerate() {
            let inst = item
                .as_object()
                .ok_or_else(|| TaskError::schema(format!("instances[{i}]"), "must be an object"))?;
            let field = |f: &str| {
                required_str(inst, f).map_err(|e| match e {
                    TaskError::Schema { problem, .. } => {
                        TaskError::schema(format!("instances[{i}].{f}"), problem)
                    }
                    other => other,
                })
            };
            instances.push(TaskInstance {
                input: field("input")?,
                target: field("target")?,
            });
        }

        let dataset = TaskDataset {
            name,
            task_request,
            llm_instruction,
            choices,
            instances,
        };
        dataset.check()?;
        Ok(dataset)
    }

    /// Checks the dataset invariants.
    pub fn check(&self) -> Result<(), TaskError> {
        if self.instances.is_empty() {
            return Err(TaskError::schema("instances", "must not be empty"));
        }
        if let Some(choices) = &self.choices {
            for (i, inst) in self.instances.iter().enumerate() {
                if !choices.contains(&inst.target) {
                    return Err(TaskError::schema(
                        format!("instances[{i}].target"),
                        format!("`{}` is not one of the declared choices", inst.target),
                    ));
                }
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.instances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instances.is_empty()
    }
}

pub fn load_task(path: impl AsRef<Path>) -> Result<TaskDataset, TaskError> {
    TaskDataset::from_json(&std::fs::read_to_string(path)?)
}

/// `n` distinct instance indices drawn uniformly without replacement.
pub fn sample_eval_instances<R: Rng + ?Sized>(
    task: &TaskDataset,
    n: usize,
    rng: &mut R,
) -> Result<Vec<usize>, TaskError> {
    if n > task.len() {
        return Err(TaskError::NotEnoughInstances {
            requested: n,
            available: task.len(),
        });
    }
    Ok(index::sample(rng, task.len(), n).into_vec())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InstantiatedPrompt {
    pub text: String,
    /// Same rendering with the task entry left out; the word-count
    /// descriptor is measured on this text.
    pub descriptor_text: String,
    pub instance: usize,
    pub example_ids: Vec<usize>,
}

/// Renders one worked example.
pub fn render_example(instance: &TaskInstance) -> String {
    format!("Q: {}\nA: {}", instance.input, instance.target)
}

/// Picks the instances shown as examples. Slot `i` draws uniformly from the
/// instances not yet used, not excluded, and not `instance_index`, using a
/// stream seeded by `example_seeds[i]`.
pub fn pick_examples(
    task: &TaskDataset,
    instance_index: usize,
    example_seeds: &[u64],
    exclude: &[usize],
) -> Result<Vec<usize>, TaskError> {
    let mut pool: Vec<usize> = (0..task.len())
        .filter(|&i| i != instance_index && !exclude.contains(&i))
        .collect();
    if pool.len() < example_seeds.len() {
        return Err(TaskError::InsufficientExamples {
            needed: example_seeds.len(),
            available: pool.len(),
        });
    }
    Ok(example_seeds
        .iter()
        .map(|&s| {
            let mut rng = seed::stream(s, &[]);
            pool.remove(rng.gen_range(0..pool.len()))
        })
        .collect())
}

/// Fills a template's task slots. Fragments are joined with `\n`.
///
/// `exclude` lists instances that must not be used as examples in addition
/// to `instance_index` itself (typically the evaluation set).
pub fn instantiate(
    template: &PromptTemplate,
    task: &TaskDataset,
    instance_index: usize,
    example_seeds: &[u64],
    exclude: &[usize],
) -> Result<InstantiatedPrompt, TaskError> {
    let instance = task
        .instances
        .get(instance_index)
        .ok_or(TaskError::BadInstance(instance_index))?;
    let shots = template.example_slots();
    if example_seeds.len() < shots {
        return Err(TaskError::InsufficientExamples {
            needed: shots,
            available: example_seeds.len(),
        });
    }
    let example_ids = pick_examples(task, instance_index, &example_seeds[..shots], exclude)?;

    let mut text = String::new();
    let mut descriptor_text = String::new();
    for (i, fragment) in template.fragments.iter().enumerate() {
        let mut line = String::new();
        let mut descriptor_line = String::new();
        for piece in fragment {
            let filled = match piece {
                Piece::Text(t) => t.clone(),
                Piece::Slot(TaskSlot::Example(n)) => render_example(&task.instances[example_ids[*n]]),
                Piece::Slot(TaskSlot::TaskRequest) => task.task_request.clone(),
                Piece::Slot(TaskSlot::Instruction) => task.llm_instruction.clone(),
                Piece::Slot(TaskSlot::TaskEntry) => {
                    line.push_str(&instance.input);
                    continue;
                }
            };
            line.push_str(&filled);
            descriptor_line.push_str(&filled);
        }
        if i > 0 {
            text.push('\n');
            descriptor_text.push('\n');
        }
        text.push_str(&line);
        descriptor_text.push_str(&descriptor_line);
    }

    Ok(InstantiatedPrompt {
        text,
        descriptor_text,
        instance: instance_index,
        example_ids,
    })
}
