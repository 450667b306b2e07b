//! Tokenization and integer interning.
//!
//! Titles and keyphrases are split on whitespace, normalized token by token,
//! and mapped to dense `u32` ids so that matching downstream is integer
//! comparison only.

use std::collections::HashMap;

use unicode_normalization::UnicodeNormalization;

/// Dense token identifier, `0..vocabulary.len()`.
pub type TokenId = u32;

/// Reduces a token to a canonical stem. Applied after case folding.
pub trait Stemmer: Send + Sync {
    fn stem(&self, token: &str) -> String;
}

/// Stemmer that leaves tokens untouched.
#[derive(Debug, Clone, Copy, Default)]
pub struct IdentityStemmer;

impl Stemmer for IdentityStemmer {
    fn stem(&self, token: &str) -> String {
        token.to_owned()
    }
}

/// Maps one whitespace-free raw token to its normalized surface form.
///
/// An empty result drops the token.
pub trait Normalizer: Send + Sync {
    fn normalize(&self, raw: &str) -> String;
}

/// Lowercase, strip punctuation at both token edges, then stem.
#[derive(Debug, Clone, Default)]
pub struct DefaultNormalizer<S = IdentityStemmer> {
    stemmer: S,
}

impl DefaultNormalizer<IdentityStemmer> {
    pub const fn new() -> Self {
        Self { stemmer: IdentityStemmer }
    }
}

impl<S: Stemmer> DefaultNormalizer<S> {
    pub fn with_stemmer(stemmer: S) -> Self {
        Self { stemmer }
    }
}

impl<S: Stemmer> Normalizer for DefaultNormalizer<S> {
    fn normalize(&self, raw: &str) -> String {
        let trimmed = raw.trim_matches(|c: char| c.is_ascii_punctuation() || is_unicode_punct(c));
        if trimmed.is_empty() {
            return String::new();
        }
        let lowered = trimmed.to_lowercase();
        self.stemmer.stem(&lowered)
    }
}

fn is_unicode_punct(c: char) -> bool {
    // General punctuation block plus common CJK and full-width marks.
    matches!(c as u32, 0x2010..=0x2027 | 0x2030..=0x205E | 0x3000..=0x303F | 0xFF01..=0xFF0F)
}

/// Split `text` on runs of whitespace and normalize each piece.
///
/// Text is NFC-normalized before splitting and each emitted token again after
/// normalization, so `tokenize(tokens.join(" "))` reproduces `tokens`.
pub fn tokenize(text: &str, normalizer: &dyn Normalizer) -> Vec<String> {
    let composed: String = text.nfc().collect();
    let mut out = Vec::new();
    for raw in composed.split_whitespace() {
        let token: String = normalizer.normalize(raw).nfc().collect();
        // A normalizer may not introduce whitespace; re-split if it does.
        out.extend(token.split_whitespace().map(str::to_owned));
    }
    out
}

/// Bidirectional token string ↔ id table.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Vocabulary {
    ids: HashMap<String, TokenId>,
    surfaces: Vec<String>,
}

impl Vocabulary {
    pub fn new() -> Self {
        Self::default()
    }

    /// Build-mode intern: returns the existing id or assigns the next dense one.
    pub fn intern(&mut self, token: &str) -> TokenId {
        if let Some(&id) = self.ids.get(token) {
            return id;
        }
        let id = self.surfaces.len() as TokenId;
        self.surfaces.push(token.to_owned());
        self.ids.insert(token.to_owned(), id);
        id
    }

    /// Frozen-mode lookup. Unknown tokens are `None`, never a fresh id.
    pub fn get(&self, token: &str) -> Option<TokenId> {
        self.ids.get(token).copied()
    }

    pub fn surface(&self, id: TokenId) -> Option<&str> {
        self.surfaces.get(id as usize).map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.surfaces.len()
    }

    pub fn is_empty(&self) -> bool {
        self.surfaces.is_empty()
    }

    /// Surfaces in id order.
    pub fn surfaces(&self) -> &[String] {
        &self.surfaces
    }

    /// Rebuild from surfaces in id order. Returns `None` on a duplicate.
    pub fn from_surfaces(surfaces: Vec<String>) -> Option<Self> {
        let mut ids = HashMap::with_capacity(surfaces.len());
        for (i, s) in surfaces.iter().enumerate() {
            if ids.insert(s.clone(), i as TokenId).is_some() {
                return None;
            }
        }
        Some(Self { ids, surfaces })
    }
}
