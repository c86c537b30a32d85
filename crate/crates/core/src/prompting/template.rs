use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lm_backend::{TokenId, Vocabulary};
use crate::Scalar;

pub const HEAD_SLOT: &str = "[h]";
pub const TAIL_SLOT: &str = "[t]";
pub const MASK_SLOT: &str = "<mask>";

const TEMPLATE_FILE_HEADER: &str = "relemb-templates v1";
const TRIGGER_FORMAT: &str = "relemb-trigger-template";
pub const TRIGGER_FORMAT_VERSION: u32 = 1;

/// The five hand-written templates, ids 1 to 5.
pub const BUILTIN_TEMPLATES: [&str; 5] = [
    "Today, I finally discovered the relation between [h] and [t] : [h] is the <mask> of [t]",
    "Today, I finally discovered the relation between [h] and [t] : [t] is [h]'s <mask>",
    "Today, I finally discovered the relation between [h] and [t] : <mask>",
    "I wasn’t aware of this relationship, but I just read in the encyclopedia that [h] is the <mask> of [t]",
    "I wasn’t aware of this relationship, but I just read in the encyclopedia that [t] is [h]’s <mask>",
];

/// A sentence skeleton with literal `[h]`, `[t]` and `<mask>` markers.
/// Head and tail may repeat; the mask appears exactly once.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManualTemplate {
    pub id: u32,
    pub text: String,
}

impl ManualTemplate {
    pub fn new(id: u32, text: impl Into<String>) -> Result<Self> {
        let text = text.into();
        let count = |m: &str| text.matches(m).count();
        if count(HEAD_SLOT) == 0 {
            return Err(Error::InvalidTemplate(format!("template {id} lacks {HEAD_SLOT}")));
        }
        if count(TAIL_SLOT) == 0 {
            return Err(Error::InvalidTemplate(format!("template {id} lacks {TAIL_SLOT}")));
        }
        if count(MASK_SLOT) != 1 {
            return Err(Error::InvalidTemplate(format!(
                "template {id} must contain exactly one {MASK_SLOT}"
            )));
        }
        Ok(ManualTemplate { id, text })
    }

    /// Templates 1 to 5.
    pub fn builtin() -> Vec<ManualTemplate> {
        BUILTIN_TEMPLATES
            .iter()
            .enumerate()
            .map(|(i, t)| ManualTemplate::new(i as u32 + 1, *t).expect("builtin template"))
            .collect()
    }

    pub fn fill(&self, head: &str, tail: &str) -> String {
        self.text.replace(HEAD_SLOT, head).replace(TAIL_SLOT, tail)
    }
}

/// Reads a template file: the header line `relemb-templates v1`, then one
/// `<id>\t<text>` per line. Blank lines and `#` comments are ignored.
pub fn read_template_file(path: &Path) -> Result<Vec<ManualTemplate>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty() && !l.trim_start().starts_with('#'));
    match lines.next() {
        Some((_, l)) if l.trim() == TEMPLATE_FILE_HEADER => {}
        Some((i, _)) => {
            return Err(Error::parse(
                path,
                i + 1,
                format!("expected header `{TEMPLATE_FILE_HEADER}`"),
            ))
        }
        None => return Err(Error::parse(path, 1, "empty template file")),
    }
    let mut out = Vec::new();
    for (i, line) in lines {
        let (id, body) = line
            .split_once('\t')
            .ok_or_else(|| Error::parse(path, i + 1, "expected `<id>\\t<template>`"))?;
        let id: u32 = id
            .trim()
            .parse()
            .map_err(|_| Error::parse(path, i + 1, "template id is not an integer"))?;
        let t = ManualTemplate::new(id, body).map_err(|e| Error::parse(path, i + 1, e.to_string()))?;
        if out.iter().any(|o: &ManualTemplate| o.id == id) {
            return Err(Error::parse(path, i + 1, format!("duplicate template id {id}")));
        }
        out.push(t);
    }
    if out.is_empty() {
        return Err(Error::parse(path, 1, "no templates"));
    }
    Ok(out)
}

pub fn write_template_file(path: &Path, templates: &[ManualTemplate]) -> Result<()> {
    let mut out = format!("{TEMPLATE_FILE_HEADER}\n");
    for t in templates {
        out.push_str(&format!("{}\t{}\n", t.id, t.text));
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Learned trigger content: discrete token ids or free input vectors.
#[derive(Clone, Debug, PartialEq)]
pub enum Triggers<T> {
    Discrete(Vec<TokenId>),
    Continuous(Vec<Arc<[T]>>),
}

/// `π` triggers, `[h]`, `τ` triggers, `[t]`, `γ` triggers.
#[derive(Clone, Debug, PartialEq)]
pub struct TriggerTemplate<T> {
    pub pi: usize,
    pub tau: usize,
    pub gamma: usize,
    pub triggers: Triggers<T>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Shape {
    pub pi: usize,
    pub tau: usize,
    pub gamma: usize,
}

impl Shape {
    pub fn new(pi: usize, tau: usize, gamma: usize) -> Self {
        Shape { pi, tau, gamma }
    }

    pub fn len(&self) -> usize {
        self.pi + self.tau + self.gamma
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl<T: Scalar> TriggerTemplate<T> {
    /// Discrete template with every trigger set to the mask token.
    pub fn discrete(shape: Shape, vocab: &Vocabulary) -> Self {
        TriggerTemplate {
            pi: shape.pi,
            tau: shape.tau,
            gamma: shape.gamma,
            triggers: Triggers::Discrete(vec![vocab.mask_id(); shape.len()]),
        }
    }

    /// Continuous template whose vectors all start as the mask embedding.
    pub fn continuous(shape: Shape, mask_embedding: &[T]) -> Self {
        let v: Arc<[T]> = mask_embedding.into();
        TriggerTemplate {
            pi: shape.pi,
            tau: shape.tau,
            gamma: shape.gamma,
            triggers: Triggers::Continuous(vec![v; shape.len()]),
        }
    }

    pub fn shape(&self) -> Shape {
        Shape::new(self.pi, self.tau, self.gamma)
    }

    pub fn len(&self) -> usize {
        self.shape().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn validate(&self) -> Result<()> {
        let n = match &self.triggers {
            Triggers::Discrete(ids) => ids.len(),
            Triggers::Continuous(vs) => {
                if let Some(first) = vs.first() {
                    if vs.iter().any(|v| v.len() != first.len()) {
                        return Err(Error::InvalidTemplate("trigger vectors differ in length".into()));
                    }
                }
                vs.len()
            }
        };
        if n != self.len() {
            return Err(Error::InvalidTemplate(format!(
                "{} triggers for shape {}/{}/{}",
                n, self.pi, self.tau, self.gamma
            )));
        }
        Ok(())
    }

    pub fn discrete_ids(&self) -> Option<&[TokenId]> {
        match &self.triggers {
            Triggers::Discrete(ids) => Some(ids),
            Triggers::Continuous(_) => None,
        }
    }

    /// Copy with trigger `j` replaced by token `w`.
    pub fn with_token(&self, j: usize, w: TokenId) -> Self {
        let mut out = self.clone();
        if let Triggers::Discrete(ids) = &mut out.triggers {
            ids[j] = w;
        }
        out
    }
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum TriggersDto {
    Discrete { tokens: Vec<TokenId> },
    Continuous { vectors: Vec<Vec<f64>> },
}

#[derive(Serialize, Deserialize)]
struct TriggerTemplateDto {
    format: String,
    version: u32,
    pi: usize,
    tau: usize,
    gamma: usize,
    triggers: TriggersDto,
}

/// Either prompt family, as stored next to a trained model.
#[derive(Clone, Debug, PartialEq)]
pub enum Prompt<T> {
    Manual(ManualTemplate),
    Trigger(TriggerTemplate<T>),
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "prompt", rename_all = "snake_case")]
enum PromptDto {
    Manual { id: u32, text: String },
    Trigger(TriggerTemplateDto),
}

impl<T: Scalar> TriggerTemplate<T> {
    fn to_dto(&self) -> TriggerTemplateDto {
        TriggerTemplateDto {
            format: TRIGGER_FORMAT.into(),
            version: TRIGGER_FORMAT_VERSION,
            pi: self.pi,
            tau: self.tau,
            gamma: self.gamma,
            triggers: match &self.triggers {
                Triggers::Discrete(ids) => TriggersDto::Discrete { tokens: ids.clone() },
                Triggers::Continuous(vs) => TriggersDto::Continuous {
                    vectors: vs
                        .iter()
                        .map(|v| v.iter().map(|x| x.to_f64().expect("finite")).collect())
                        .collect(),
                },
            },
        }
    }

    fn from_dto(dto: TriggerTemplateDto) -> Result<Self> {
        if dto.format != TRIGGER_FORMAT || dto.version != TRIGGER_FORMAT_VERSION {
            return Err(Error::InvalidTemplate(format!(
                "unsupported trigger template format {} v{}",
                dto.format, dto.version
            )));
        }
        let triggers = match dto.triggers {
            TriggersDto::Discrete { tokens } => Triggers::Discrete(tokens),
            TriggersDto::Continuous { vectors } => Triggers::Continuous(
                vectors
                    .into_iter()
                    .map(|v| v.into_iter().map(T::lit).collect::<Vec<T>>().into())
                    .collect(),
            ),
        };
        let t = TriggerTemplate {
            pi: dto.pi,
            tau: dto.tau,
            gamma: dto.gamma,
            triggers,
        };
        t.validate()?;
        Ok(t)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_dto()).expect("serializable")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Self::from_dto(serde_json::from_str(text)?)
    }
}

impl<T: Scalar> Prompt<T> {
    pub fn to_json(&self) -> String {
        let dto = match self {
            Prompt::Manual(m) => PromptDto::Manual {
                id: m.id,
                text: m.text.clone(),
            },
            Prompt::Trigger(t) => PromptDto::Trigger(t.to_dto()),
        };
        serde_json::to_string_pretty(&dto).expect("serializable")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        match serde_json::from_str(text)? {
            PromptDto::Manual { id, text } => Ok(Prompt::Manual(ManualTemplate::new(id, text)?)),
            PromptDto::Trigger(dto) => Ok(Prompt::Trigger(TriggerTemplate::from_dto(dto)?)),
        }
    }

    /// Short label for run metadata, e.g. `manual:4` or `autoprompt:9/2/2`.
    pub fn describe(&self) -> String {
        match self {
            Prompt::Manual(m) => format!("manual:{}", m.id),
            Prompt::Trigger(t) => {
                let kind = match t.triggers {
                    Triggers::Discrete(_) => "autoprompt",
                    Triggers::Continuous(_) => "ptuning",
                };
                format!("{kind}:{}/{}/{}", t.pi, t.tau, t.gamma)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtin_templates_are_valid() {
        let ts = ManualTemplate::builtin();
        assert_eq!(ts.len(), 5);
        assert_eq!(ts[2].id, 3);
        assert_eq!(
            ts[2].fill("Paris", "France"),
            "Today, I finally discovered the relation between Paris and France : <mask>"
        );
    }

    #[test]
    fn missing_slots_are_rejected() {
        assert!(ManualTemplate::new(1, "[h] is the <mask>").is_err());
        assert!(ManualTemplate::new(1, "[t] is the <mask>").is_err());
        assert!(ManualTemplate::new(1, "[h] and [t]").is_err());
        assert!(ManualTemplate::new(1, "[h] <mask> [t] <mask>").is_err());
    }

    #[test]
    fn template_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.txt");
        write_template_file(&path, &ManualTemplate::builtin()).unwrap();
        assert_eq!(read_template_file(&path).unwrap(), ManualTemplate::builtin());
        std::fs::write(&path, "1\t[h] [t] <mask>\n").unwrap();
        assert!(read_template_file(&path).is_err());
    }

    #[test]
    fn trigger_template_json_round_trip() {
        let vocab = Vocabulary::reference();
        let t = TriggerTemplate::<f64>::discrete(Shape::new(2, 1, 1), &vocab).with_token(1, 42);
        assert_eq!(TriggerTemplate::from_json(&t.to_json()).unwrap(), t);
        let c = TriggerTemplate::<f32>::continuous(Shape::new(1, 0, 1), &[0.25, -1.5]);
        let back = Prompt::<f32>::from_json(&Prompt::Trigger(c.clone()).to_json()).unwrap();
        assert_eq!(back, Prompt::Trigger(c));
        assert!(TriggerTemplate::<f64>::from_json(
            r#"{"format":"relemb-trigger-template","version":1,"pi":1,"tau":0,"gamma":0,"triggers":{"kind":"discrete","tokens":[]}}"#
        )
        .is_err());
    }

    #[test]
    fn describe_labels() {
        let vocab = Vocabulary::reference();
        let p = Prompt::<f64>::Trigger(TriggerTemplate::discrete(Shape::new(9, 2, 2), &vocab));
        assert_eq!(p.describe(), "autoprompt:9/2/2");
        assert_eq!(
            Prompt::<f64>::Manual(ManualTemplate::builtin()[3].clone()).describe(),
            "manual:4"
        );
    }
}
