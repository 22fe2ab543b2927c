use std::collections::HashMap;
use std::sync::RwLock;

use serde::{Deserialize, Serialize};

/// Index of an attribute within a stream schema.
pub type AttrId = u16;

/// Identity of a unit: the attribute it belongs to and its dense first-seen id.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct UnitKey {
    pub attr: AttrId,
    pub id: u32,
}

impl UnitKey {
    pub fn new(attr: AttrId, id: u32) -> Self {
        UnitKey { attr, id }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
struct AttributeVocab {
    symbols: Vec<String>,
    index: HashMap<String, u32>,
}

/// Symbol interning for every attribute of a stream.
///
/// Ids are handed out per attribute in first-seen order, so re-ingesting the
/// same input reproduces the same ids.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Vocabulary {
    attributes: Vec<AttributeVocab>,
}

impl Vocabulary {
    pub fn new(n_attributes: usize) -> Self {
        Vocabulary {
            attributes: vec![AttributeVocab::default(); n_attributes],
        }
    }

    pub fn n_attributes(&self) -> usize {
        self.attributes.len()
    }

    pub fn intern(&mut self, attr: AttrId, symbol: &str) -> UnitKey {
        let vocab = &mut self.attributes[attr as usize];
        if let Some(&id) = vocab.index.get(symbol) {
            return UnitKey::new(attr, id);
        }
        let id = vocab.symbols.len() as u32;
        vocab.symbols.push(symbol.to_owned());
        vocab.index.insert(symbol.to_owned(), id);
        UnitKey::new(attr, id)
    }

    pub fn get(&self, attr: AttrId, symbol: &str) -> Option<UnitKey> {
        self.attributes
            .get(attr as usize)?
            .index
            .get(symbol)
            .map(|&id| UnitKey::new(attr, id))
    }

    pub fn symbol(&self, key: UnitKey) -> Option<&str> {
        self.attributes
            .get(key.attr as usize)?
            .symbols
            .get(key.id as usize)
            .map(String::as_str)
    }

    /// Number of units interned for `attr`.
    pub fn len(&self, attr: AttrId) -> usize {
        self.attributes
            .get(attr as usize)
            .map_or(0, |v| v.symbols.len())
    }

    pub fn total_units(&self) -> usize {
        self.attributes.iter().map(|v| v.symbols.len()).sum()
    }

    pub fn symbols(&self, attr: AttrId) -> &[String] {
        &self.attributes[attr as usize].symbols
    }

    /// Rebuild a vocabulary from per-attribute symbol lists (ids = positions).
    pub fn from_symbols(lists: Vec<Vec<String>>) -> Self {
        let attributes = lists
            .into_iter()
            .map(|symbols| {
                let index = symbols
                    .iter()
                    .enumerate()
                    .map(|(i, s)| (s.clone(), i as u32))
                    .collect();
                AttributeVocab { symbols, index }
            })
            .collect();
        Vocabulary { attributes }
    }
}

/// A vocabulary that many readers can resolve against while one writer interns.
#[derive(Debug, Default)]
pub struct Registry {
    inner: RwLock<Vocabulary>,
}

impl Registry {
    pub fn new(vocab: Vocabulary) -> Self {
        Registry {
            inner: RwLock::new(vocab),
        }
    }

    pub fn resolve(&self, attr: AttrId, symbol: &str) -> Option<UnitKey> {
        self.inner
            .read()
            .expect("registry poisoned")
            .get(attr, symbol)
    }

    pub fn intern(&self, attr: AttrId, symbol: &str) -> UnitKey {
        if let Some(key) = self.resolve(attr, symbol) {
            return key;
        }
        self.inner
            .write()
            .expect("registry poisoned")
            .intern(attr, symbol)
    }

    pub fn snapshot(&self) -> Vocabulary {
        self.inner.read().expect("registry poisoned").clone()
    }

    pub fn into_inner(self) -> Vocabulary {
        self.inner.into_inner().expect("registry poisoned")
    }
}
