use super::hash::hash;
use super::sym::SymKey;
use super::CryptoError;

/// Level keys `sk_1..sk_k` with `sk_{i+1} = H(sk_i)`.
///
/// Holding `sk_i` yields every less privileged key `sk_{i+1}..sk_k` and
/// nothing above it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KeyChain {
    keys: Vec<SymKey>,
}

pub fn derive_key_chain(first: SymKey, k: usize) -> Result<KeyChain, CryptoError> {
    if k < 1 {
        return Err(CryptoError::EmptyChain);
    }
    let mut keys = Vec::with_capacity(k);
    keys.push(first);
    while keys.len() < k {
        let next = hash(keys.last().unwrap().as_bytes());
        keys.push(SymKey(next.0));
    }
    Ok(KeyChain { keys })
}

impl KeyChain {
    pub fn len(&self) -> usize {
        self.keys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keys.is_empty()
    }

    /// Key for level `level` (1-based).
    pub fn key(&self, level: usize) -> Option<&SymKey> {
        level.checked_sub(1).and_then(|i| self.keys.get(i))
    }

    pub fn keys(&self) -> &[SymKey] {
        &self.keys
    }

    /// Keys for levels `level..=k`, given only the key at `level`.
    pub fn descend(key_at_level: SymKey, level: usize, k: usize) -> Result<Vec<(usize, SymKey)>, CryptoError> {
        if level < 1 || level > k {
            return Err(CryptoError::EmptyChain);
        }
        let chain = derive_key_chain(key_at_level, k - level + 1)?;
        Ok(chain
            .keys
            .into_iter()
            .enumerate()
            .map(|(i, key)| (level + i, key))
            .collect())
    }
}
