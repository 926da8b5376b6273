use std::collections::{BTreeSet, HashMap};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type TokenId = u32;

/// End-of-sequence id. Always the first entry of every vocabulary.
pub const EOS: TokenId = 0;
pub const EOS_TOKEN: &str = "</s>";
/// Beginning-of-sequence marker. It is never predicted, so it has no id in the
/// output space; an empty prefix stands for "just BOS".
pub const BOS_TOKEN: &str = "<s>";
/// Id given to source tokens the model has never seen.
pub const UNKNOWN: TokenId = TokenId::MAX;

/// Ordered, duplicate-free token list with `</s>` at id 0.
#[derive(Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<String>", into = "Vec<String>")]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, TokenId>,
}

impl Vocabulary {
    /// Builds a vocabulary from content tokens in the given order.
    pub fn new<I, S>(content: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut tokens = vec![EOS_TOKEN.to_string()];
        let mut index = HashMap::new();
        index.insert(EOS_TOKEN.to_string(), EOS);
        for tok in content {
            let tok = tok.into();
            if tok == EOS_TOKEN || tok == BOS_TOKEN {
                return Err(Error::invalid(format!("reserved token {tok:?} used as content")));
            }
            if tok.is_empty() || tok.chars().any(char::is_whitespace) {
                return Err(Error::invalid(format!("malformed token {tok:?}")));
            }
            let id = tokens.len() as TokenId;
            if index.insert(tok.clone(), id).is_some() {
                return Err(Error::invalid(format!("duplicate token {tok:?}")));
            }
            tokens.push(tok);
        }
        Ok(Vocabulary { tokens, index })
    }

    /// Builds a vocabulary whose content ids follow the lexicographic order of
    /// the distinct tokens seen.
    pub fn from_observed<'a, I>(tokens: I) -> Result<Self>
    where
        I: IntoIterator<Item = &'a str>,
    {
        let distinct: BTreeSet<&str> = tokens.into_iter().collect();
        Vocabulary::new(distinct)
    }

    /// Size of the output space, EOS included.
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn content_len(&self) -> usize {
        self.tokens.len() - 1
    }

    pub fn id(&self, token: &str) -> Option<TokenId> {
        self.index.get(token).copied()
    }

    pub fn token(&self, id: TokenId) -> Option<&str> {
        self.tokens.get(id as usize).map(String::as_str)
    }

    pub fn content_tokens(&self) -> impl Iterator<Item = &str> {
        self.tokens[1..].iter().map(String::as_str)
    }

    /// Encodes content tokens, failing on anything outside the vocabulary.
    pub fn encode<S: AsRef<str>>(&self, tokens: &[S]) -> Result<Sentence> {
        let ids = tokens
            .iter()
            .map(|t| {
                let t = t.as_ref();
                match self.id(t) {
                    Some(EOS) | None => Err(Error::invalid(format!("token {t:?} not in vocabulary"))),
                    Some(id) => Ok(id),
                }
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Sentence(ids))
    }

    /// Encodes content tokens, mapping unseen ones to [`UNKNOWN`].
    pub fn encode_lossy<S: AsRef<str>>(&self, tokens: &[S]) -> Sentence {
        Sentence(
            tokens
                .iter()
                .map(|t| match self.id(t.as_ref()) {
                    Some(EOS) | None => UNKNOWN,
                    Some(id) => id,
                })
                .collect(),
        )
    }

    pub fn decode(&self, sentence: &Sentence) -> Vec<String> {
        sentence
            .ids()
            .iter()
            .map(|&id| self.token(id).unwrap_or("<unk>").to_string())
            .collect()
    }

    pub fn decode_joined(&self, sentence: &Sentence) -> String {
        self.decode(sentence).join(" ")
    }
}

impl fmt::Debug for Vocabulary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_list().entries(&self.tokens).finish()
    }
}

impl TryFrom<Vec<String>> for Vocabulary {
    type Error = Error;

    fn try_from(tokens: Vec<String>) -> Result<Self> {
        match tokens.first() {
            Some(first) if first == EOS_TOKEN => Vocabulary::new(tokens.into_iter().skip(1)),
            _ => Err(Error::invalid("serialised vocabulary must start with </s>")),
        }
    }
}

impl From<Vocabulary> for Vec<String> {
    fn from(v: Vocabulary) -> Self {
        v.tokens
    }
}

/// Content token ids of one sentence; EOS is an implicit terminator and is
/// never stored. Ordering is lexicographic on ids, which is the project-wide
/// tie-break.
#[derive(Clone, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Sentence(Vec<TokenId>);

impl Sentence {
    pub fn new(ids: Vec<TokenId>) -> Self {
        debug_assert!(!ids.contains(&EOS), "sentences never contain EOS");
        Sentence(ids)
    }

    pub fn empty() -> Self {
        Sentence(Vec::new())
    }

    pub fn ids(&self) -> &[TokenId] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn into_ids(self) -> Vec<TokenId> {
        self.0
    }
}

impl From<Vec<TokenId>> for Sentence {
    fn from(ids: Vec<TokenId>) -> Self {
        Sentence::new(ids)
    }
}

impl From<&[TokenId]> for Sentence {
    fn from(ids: &[TokenId]) -> Self {
        Sentence::new(ids.to_vec())
    }
}

impl fmt::Debug for Sentence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Sentence{:?}", self.0)
    }
}
