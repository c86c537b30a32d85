use std::sync::Arc;

use super::template::{ManualTemplate, Prompt, TriggerTemplate, Triggers, HEAD_SLOT, MASK_SLOT, TAIL_SLOT};
use crate::dataset::WordPair;
use crate::error::{Error, Result};
use crate::lm_backend::{EncodedInput, ModelInput, SlotMap, TokenId, Vocabulary};
use crate::Scalar;

/// A rendered prompt: token ids, slot positions and, for continuous
/// triggers, the input vectors that replace the placeholder tokens.
pub type PromptRender<T> = ModelInput<T>;

enum Piece<'a> {
    Text(&'a str),
    Head,
    Tail,
    Mask,
}

fn pieces(text: &str) -> Vec<Piece<'_>> {
    let mut out = Vec::new();
    let mut rest = text;
    loop {
        let next = [(HEAD_SLOT, 0), (TAIL_SLOT, 1), (MASK_SLOT, 2)]
            .iter()
            .filter_map(|&(m, k)| rest.find(m).map(|i| (i, m, k)))
            .min_by_key(|&(i, _, _)| i);
        match next {
            Some((i, marker, kind)) => {
                if i > 0 {
                    out.push(Piece::Text(&rest[..i]));
                }
                out.push(match kind {
                    0 => Piece::Head,
                    1 => Piece::Tail,
                    _ => Piece::Mask,
                });
                rest = &rest[i + marker.len()..];
            }
            None => {
                if !rest.is_empty() {
                    out.push(Piece::Text(rest));
                }
                return out;
            }
        }
    }
}

struct Builder<'v> {
    vocab: &'v Vocabulary,
    ids: Vec<TokenId>,
    slots: SlotMap,
}

impl<'v> Builder<'v> {
    fn new(vocab: &'v Vocabulary) -> Self {
        Builder {
            vocab,
            ids: vec![vocab.bos_id()],
            slots: SlotMap::default(),
        }
    }

    fn word(&mut self, word: &str) -> Result<std::ops::Range<usize>> {
        if word.trim().is_empty() {
            return Err(Error::EmptyInput("pair word"));
        }
        let start = self.ids.len();
        self.ids.extend(self.vocab.tokenize_word(word)?);
        Ok(start..self.ids.len())
    }

    fn text(&mut self, text: &str) -> Result<()> {
        if !text.trim().is_empty() {
            self.ids.extend(self.vocab.tokenize_word(text)?);
        }
        Ok(())
    }

    fn trigger(&mut self, id: TokenId) {
        self.slots.triggers.push(self.ids.len());
        self.ids.push(id);
    }

    fn finish(mut self) -> EncodedInput {
        self.ids.push(self.vocab.eos_id());
        let mut enc = EncodedInput::from_ids(self.ids);
        enc.slot_map = self.slots;
        enc
    }
}

/// Fills a manual template with `pair`. Literal text and the two words are
/// tokenized separately, so multi-token words keep exact slot ranges; the
/// sequence is wrapped in the boundary tokens.
pub fn render_manual(template: &ManualTemplate, pair: &WordPair, vocab: &Vocabulary) -> Result<EncodedInput> {
    let mut b = Builder::new(vocab);
    for piece in pieces(&template.text) {
        match piece {
            Piece::Text(t) => b.text(t)?,
            Piece::Head => {
                let r = b.word(&pair.head)?;
                b.slots.head.push(r);
            }
            Piece::Tail => {
                let r = b.word(&pair.tail)?;
                b.slots.tail.push(r);
            }
            Piece::Mask => {
                b.slots.mask = Some(b.ids.len());
                b.ids.push(vocab.mask_id());
            }
        }
    }
    Ok(b.finish())
}

/// `<s> T[0..π] head T[π..π+τ] tail T[π+τ..] </s>`. Continuous triggers sit
/// on mask placeholders whose input vectors are overridden.
pub fn render_trigger<T: Scalar>(
    template: &TriggerTemplate<T>,
    pair: &WordPair,
    vocab: &Vocabulary,
) -> Result<PromptRender<T>> {
    template.validate()?;
    let ids: Vec<TokenId> = match &template.triggers {
        Triggers::Discrete(ids) => ids.clone(),
        Triggers::Continuous(vs) => vec![vocab.mask_id(); vs.len()],
    };
    let (pi, tau) = (template.pi, template.tau);
    let mut b = Builder::new(vocab);
    ids[..pi].iter().for_each(|&id| b.trigger(id));
    let head = b.word(&pair.head)?;
    b.slots.head.push(head);
    ids[pi..pi + tau].iter().for_each(|&id| b.trigger(id));
    let tail = b.word(&pair.tail)?;
    b.slots.tail.push(tail);
    ids[pi + tau..].iter().for_each(|&id| b.trigger(id));
    let encoded = b.finish();
    let overrides = match &template.triggers {
        Triggers::Discrete(_) => Vec::new(),
        Triggers::Continuous(vs) => encoded
            .slot_map
            .triggers
            .iter()
            .zip(vs)
            .map(|(&pos, v)| (pos, Arc::clone(v)))
            .collect(),
    };
    Ok(ModelInput { encoded, overrides })
}

pub fn render<T: Scalar>(prompt: &Prompt<T>, pair: &WordPair, vocab: &Vocabulary) -> Result<PromptRender<T>> {
    match prompt {
        Prompt::Manual(m) => Ok(render_manual(m, pair, vocab)?.into()),
        Prompt::Trigger(t) => render_trigger(t, pair, vocab),
    }
}
