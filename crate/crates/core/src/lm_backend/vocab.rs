use std::collections::{BTreeSet, HashMap};
use std::ops::Range;

use crate::error::{Error, Result};

pub type TokenId = usize;

pub const PAD: &str = "<pad>";
pub const BOS: &str = "<s>";
pub const EOS: &str = "</s>";
pub const MASK: &str = "<mask>";
pub const UNK: &str = "<unk>";

/// Size of the built-in synthetic vocabulary used by the reference encoder.
pub const REFERENCE_VOCAB_SIZE: usize = 256;

/// Whole-word tokens of the reference vocabulary, enough to render every
/// built-in manual template without falling back to characters.
const REFERENCE_WORDS: &[&str] = &[
    "Today",
    "I",
    "finally",
    "discovered",
    "the",
    "relation",
    "between",
    "and",
    "is",
    "of",
    "'s",
    "’s",
    "wasn’t",
    "aware",
    "this",
    "relationship",
    "but",
    "just",
    "read",
    "in",
    "encyclopedia",
    "that",
    "Paris",
    "France",
    "coffee",
    "barista",
    "bread",
    "baker",
    "beer",
    "brewer",
];

/// Ordered token list with the ids of the special symbols.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, TokenId>,
    pad_id: TokenId,
    bos_id: TokenId,
    eos_id: TokenId,
    mask_id: TokenId,
    unk_id: TokenId,
    special_ids: BTreeSet<TokenId>,
    max_token_chars: usize,
}

/// Token positions of the pieces of a rendered prompt.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct SlotMap {
    /// Every occurrence of the head word (templates may repeat it).
    pub head: Vec<Range<usize>>,
    pub tail: Vec<Range<usize>>,
    /// Position of the `j`-th trigger slot.
    pub triggers: Vec<usize>,
    pub mask: Option<usize>,
}

impl SlotMap {
    fn ranges(&self) -> Vec<Range<usize>> {
        let mut out: Vec<Range<usize>> = Vec::new();
        out.extend(self.head.iter().cloned());
        out.extend(self.tail.iter().cloned());
        out.extend(self.triggers.iter().map(|&p| p..p + 1));
        out.extend(self.mask.map(|p| p..p + 1));
        out
    }

    /// Slot ranges are disjoint and lie within `len`.
    pub fn is_well_formed(&self, len: usize) -> bool {
        let mut ranges = self.ranges();
        if ranges.iter().any(|r| r.start >= r.end || r.end > len) {
            return false;
        }
        ranges.sort_by_key(|r| r.start);
        ranges.windows(2).all(|w| w[0].end <= w[1].start)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EncodedInput {
    pub token_ids: Vec<TokenId>,
    /// `true` at non-padding positions.
    pub content_mask: Vec<bool>,
    pub slot_map: SlotMap,
}

impl EncodedInput {
    pub fn from_ids(token_ids: Vec<TokenId>) -> Self {
        let content_mask = vec![true; token_ids.len()];
        EncodedInput {
            token_ids,
            content_mask,
            slot_map: SlotMap::default(),
        }
    }

    pub fn len(&self) -> usize {
        self.token_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.token_ids.is_empty()
    }

    pub fn content_positions(&self) -> Vec<usize> {
        self.content_mask
            .iter()
            .enumerate()
            .filter_map(|(i, &c)| c.then_some(i))
            .collect()
    }

    /// Right-pads with `pad_id` up to `len`.
    pub fn padded(&self, len: usize, pad_id: TokenId) -> Self {
        let mut out = self.clone();
        while out.token_ids.len() < len {
            out.token_ids.push(pad_id);
            out.content_mask.push(false);
        }
        out
    }
}

impl Vocabulary {
    /// Builds a vocabulary from an ordered token list. All five special
    /// symbols must be present; tokens must be unique and whitespace-free.
    pub fn new(tokens: Vec<String>) -> Result<Self> {
        let mut index = HashMap::with_capacity(tokens.len());
        for (i, tok) in tokens.iter().enumerate() {
            if tok.is_empty() || tok.chars().any(char::is_whitespace) {
                return Err(Error::InvalidConfig(format!(
                    "vocabulary token {i} is empty or contains whitespace"
                )));
            }
            if index.insert(tok.clone(), i).is_some() {
                return Err(Error::InvalidConfig(format!("duplicate vocabulary token `{tok}`")));
            }
        }
        let find = |name: &str| {
            index
                .get(name)
                .copied()
                .ok_or_else(|| Error::InvalidConfig(format!("vocabulary lacks `{name}`")))
        };
        let (pad_id, bos_id, eos_id, mask_id, unk_id) = (find(PAD)?, find(BOS)?, find(EOS)?, find(MASK)?, find(UNK)?);
        let special_ids = [pad_id, bos_id, eos_id, mask_id, unk_id].into_iter().collect();
        let max_token_chars = tokens.iter().map(|t| t.chars().count()).max().unwrap_or(1);
        Ok(Vocabulary {
            tokens,
            index,
            pad_id,
            bos_id,
            eos_id,
            mask_id,
            unk_id,
            special_ids,
            max_token_chars,
        })
    }

    /// The 256-token synthetic vocabulary: special symbols, template words,
    /// printable ASCII characters, then filler word tokens `w0`, `w1`, ...
    pub fn reference() -> Self {
        let mut tokens: Vec<String> = [PAD, BOS, EOS, MASK, UNK]
            .iter()
            .chain(REFERENCE_WORDS)
            .map(|s| s.to_string())
            .collect();
        for c in '!'..='~' {
            let s = c.to_string();
            if !tokens.contains(&s) {
                tokens.push(s);
            }
        }
        let mut i = 0;
        while tokens.len() < REFERENCE_VOCAB_SIZE {
            tokens.push(format!("w{i}"));
            i += 1;
        }
        Vocabulary::new(tokens).expect("reference vocabulary is valid")
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn token(&self, id: TokenId) -> Option<&str> {
        self.tokens.get(id).map(String::as_str)
    }

    pub fn id(&self, token: &str) -> Option<TokenId> {
        self.index.get(token).copied()
    }

    pub fn pad_id(&self) -> TokenId {
        self.pad_id
    }

    pub fn bos_id(&self) -> TokenId {
        self.bos_id
    }

    pub fn eos_id(&self) -> TokenId {
        self.eos_id
    }

    pub fn mask_id(&self) -> TokenId {
        self.mask_id
    }

    pub fn unk_id(&self) -> TokenId {
        self.unk_id
    }

    pub fn special_ids(&self) -> &BTreeSet<TokenId> {
        &self.special_ids
    }

    pub fn is_special(&self, id: TokenId) -> bool {
        self.special_ids.contains(&id)
    }

    /// Splits on whitespace; each chunk maps to one token when it is a
    /// vocabulary entry, otherwise to a greedy longest-prefix decomposition
    /// over non-special tokens, with `<unk>` for characters no token covers.
    /// Boundary symbols are not added. A literal `<mask>` chunk fills the
    /// mask slot of the slot map.
    pub fn tokenize(&self, text: &str) -> Result<EncodedInput> {
        let mut ids = Vec::new();
        let mut mask = None;
        for chunk in text.split_whitespace() {
            if let Some(id) = self.id(chunk) {
                if id == self.mask_id && mask.is_none() {
                    mask = Some(ids.len());
                }
                ids.push(id);
            } else {
                self.split_chunk(chunk, &mut ids);
            }
        }
        if ids.is_empty() {
            return Err(Error::EmptyInput("tokenize"));
        }
        let mut out = EncodedInput::from_ids(ids);
        out.slot_map.mask = mask;
        Ok(out)
    }

    /// Tokenizes a single word (or phrase) without recording slots.
    pub fn tokenize_word(&self, text: &str) -> Result<Vec<TokenId>> {
        Ok(self.tokenize(text)?.token_ids)
    }

    fn split_chunk(&self, chunk: &str, out: &mut Vec<TokenId>) {
        let chars: Vec<(usize, char)> = chunk.char_indices().collect();
        let mut i = 0;
        while i < chars.len() {
            let start = chars[i].0;
            let longest = (1..=self.max_token_chars.min(chars.len() - i)).rev().find_map(|n| {
                let end = chars.get(i + n).map_or(chunk.len(), |c| c.0);
                self.id(&chunk[start..end])
                    .filter(|id| !self.is_special(*id))
                    .map(|id| (id, n))
            });
            match longest {
                Some((id, n)) => {
                    out.push(id);
                    i += n;
                }
                None => {
                    out.push(self.unk_id);
                    i += 1;
                }
            }
        }
    }

    /// Joins token strings with single spaces; the inverse of [`Self::tokenize`]
    /// on any id sequence. Unknown ids render as `<unk>`.
    pub fn detokenize(&self, ids: &[TokenId]) -> String {
        ids.iter()
            .map(|&id| self.token(id).unwrap_or(UNK))
            .collect::<Vec<_>>()
            .join(" ")
    }
}
