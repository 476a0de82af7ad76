use std::collections::BTreeMap;

use sha2::{Digest, Sha256};

use super::{Backend, BackendError, BackendRequest, BackendResponse, RequestKind, TokenVector};
use crate::text::tokenize;

#[derive(Debug, Clone, PartialEq)]
pub enum CompletionMode {
    /// Return the prompt payload unchanged.
    Echo,
    /// Deterministic rule-based paraphrases and generations.
    Synthetic,
    /// Exact prompt lookup only.
    TableOnly,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LogprobMode {
    Fixed(f64),
    /// Per-token value in [-6.1, -0.1] derived from a hash of the token.
    Hashed,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EmbedMode {
    /// One-hot vector at `hash(token) % dim`.
    OneHot { dim: usize },
}

/// Offline backend that is a pure function of the request, so identical
/// requests give identical responses in every process.
#[derive(Debug, Clone)]
pub struct MockBackend {
    table: BTreeMap<String, String>,
    completion: CompletionMode,
    logprobs: LogprobMode,
    embed: EmbedMode,
    scoring: bool,
}

const LEADS: [&str; 12] = [
    "Here is the same request, reworded:",
    "Put another way, the task reads:",
    "Said in different words, please:",
    "A fresh phrasing of this request:",
    "Rephrased for clarity, the ask becomes:",
    "Expressed differently, the instruction is:",
    "In alternative wording, kindly:",
    "Restating the request in new terms:",
    "With slightly varied phrasing:",
    "Using other words to ask the same:",
    "Another way of putting it:",
    "Reformulated, the request reads:",
];

const OPENERS: [&str; 8] = [
    "Discover",
    "Meet",
    "Say hello to",
    "Treat yourself to",
    "Introducing",
    "Fall in love with",
    "Upgrade to",
    "Bring home",
];

const CLOSERS: [&str; 8] = [
    "Order yours today!",
    "Buy now!",
    "Shop now while stocks last.",
    "A perfect gift for someone special.",
    "Add it to your cart now.",
    "Limited stock, grab it today.",
    "Made to delight every day.",
    "Your new favourite find.",
];

const SWAPS: [(&str, &str); 14] = [
    ("generate", "create"),
    ("short", "brief"),
    ("advertisement", "promotional blurb"),
    ("following", "given"),
    ("product", "item"),
    ("rewrite", "rephrase"),
    ("title", "headline"),
    ("query", "search phrase"),
    ("customer", "shopper"),
    ("interested", "keen"),
    ("perfect", "ideal"),
    ("gift", "present"),
    ("beautiful", "lovely"),
    ("handmade", "hand-crafted"),
];

fn stable_hash(parts: &[&[u8]]) -> u64 {
    let mut h = Sha256::new();
    for p in parts {
        h.update((p.len() as u64).to_le_bytes());
        h.update(p);
    }
    let d = h.finalize();
    u64::from_le_bytes(d[..8].try_into().expect("32-byte digest"))
}

fn swap_words(text: &str, mask: u64) -> String {
    text.split(' ')
        .map(|w| {
            let core_len = w.trim_end_matches(|c: char| !c.is_alphanumeric()).len();
            let (core, tail) = (w[..core_len].to_lowercase(), &w[core_len..]);
            for (j, (from, to)) in SWAPS.iter().enumerate() {
                if core == *from && (mask >> j) & 1 == 1 {
                    let capital = w.chars().next().is_some_and(char::is_uppercase);
                    let mut rep = to.to_string();
                    if capital {
                        rep[..1].make_ascii_uppercase();
                    }
                    return format!("{rep}{tail}");
                }
            }
            w.to_string()
        })
        .collect::<Vec<_>>()
        .join(" ")
}

/// Split `"Directive:\npayload"` prompts. Prompts whose first line does not
/// end in a colon are generation prompts: `(instruction, inputs)`.
fn split_prompt(prompt: &str) -> (Option<&str>, &str, &str) {
    let (first, rest) = prompt.split_once('\n').unwrap_or((prompt, ""));
    if first.trim_end().ends_with(':') {
        (Some(first), rest.trim(), "")
    } else {
        (None, first.trim(), rest.trim())
    }
}

impl MockBackend {
    fn with_mode(completion: CompletionMode) -> Self {
        MockBackend {
            table: BTreeMap::new(),
            completion,
            logprobs: LogprobMode::Hashed,
            embed: EmbedMode::OneHot { dim: 4096 },
            scoring: true,
        }
    }

    pub fn synthetic() -> Self {
        Self::with_mode(CompletionMode::Synthetic)
    }

    pub fn echo() -> Self {
        Self::with_mode(CompletionMode::Echo)
    }

    /// Pure lookup table; prompts outside it fail with HTTP 404.
    pub fn table(entries: impl IntoIterator<Item = (String, String)>) -> Self {
        let mut m = Self::with_mode(CompletionMode::TableOnly);
        m.table = entries.into_iter().collect();
        m
    }

    /// Table entries take precedence over the completion mode.
    pub fn with_entries(mut self, entries: impl IntoIterator<Item = (String, String)>) -> Self {
        self.table.extend(entries);
        self
    }

    pub fn with_logprobs(mut self, mode: LogprobMode) -> Self {
        self.logprobs = mode;
        self
    }

    pub fn with_embed(mut self, mode: EmbedMode) -> Self {
        self.embed = mode;
        self
    }

    pub fn without_scoring(mut self) -> Self {
        self.scoring = false;
        self
    }

    fn completion(&self, req: &BackendRequest) -> Result<String, BackendError> {
        if let Some(hit) = self.table.get(&req.text) {
            return Ok(hit.clone());
        }
        let (directive, head, tail) = split_prompt(&req.text);
        match self.completion {
            CompletionMode::TableOnly => Err(BackendError::Transport {
                status: Some(404),
                message: "no mock table entry for prompt".into(),
            }),
            CompletionMode::Echo => Ok(if tail.is_empty() { head } else { tail }.to_string()),
            CompletionMode::Synthetic => {
                let h = stable_hash(&[req.text.as_bytes(), &req.sample.to_le_bytes()]);
                if directive.is_some() {
                    let lead = LEADS[(req.sample % LEADS.len() as u64) as usize];
                    Ok(format!("{lead} {}", swap_words(head, h)))
                } else {
                    let subject = if tail.is_empty() { head } else { tail };
                    let subject = subject.trim_end_matches(|c: char| c.is_ascii_punctuation());
                    let opener = OPENERS[(h % OPENERS.len() as u64) as usize];
                    let closer = CLOSERS[((h >> 8) % CLOSERS.len() as u64) as usize];
                    Ok(format!("{opener} {subject}. {closer}"))
                }
            }
        }
    }
}

impl Backend for MockBackend {
    fn name(&self) -> &str {
        "mock"
    }

    fn call(&self, req: &BackendRequest) -> Result<BackendResponse, BackendError> {
        match req.kind {
            RequestKind::Complete => self.completion(req).map(BackendResponse::Text),
            RequestKind::Logprobs if self.scoring => {
                let lp = tokenize(&req.text)
                    .iter()
                    .map(|t| match self.logprobs {
                        LogprobMode::Fixed(v) => v,
                        LogprobMode::Hashed => {
                            -0.1 - (stable_hash(&[t.as_bytes()]) % 6001) as f64 / 1000.0
                        }
                    })
                    .collect();
                Ok(BackendResponse::TokenLogprobs(lp))
            }
            RequestKind::Embed if self.scoring => {
                let EmbedMode::OneHot { dim } = self.embed;
                let vectors = tokenize(&req.text)
                    .into_iter()
                    .map(|token| {
                        let mut vector = vec![0.0; dim];
                        vector[(stable_hash(&[token.as_bytes()]) % dim as u64) as usize] = 1.0;
                        TokenVector { token, vector }
                    })
                    .collect();
                Ok(BackendResponse::TokenVectors(vectors))
            }
            kind => Err(BackendError::Unsupported(kind)),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::modelio::Decoding;

    fn req(text: &str, sample: u64) -> BackendRequest {
        BackendRequest { kind: RequestKind::Complete, text: text.into(), decoding: Decoding::EXPANSION, model: "m".into(), sample }
    }

    #[test]
    fn synthetic_rewrites_are_distinct_per_sample() {
        let m = MockBackend::synthetic();
        let p = "Rewrite the following instruction while maintaining semantic consistency:\nGenerate a short advertisement for the following product: Salt lamp";
        let outs: Vec<String> = (0..6).map(|s| m.completion(&req(p, s)).unwrap()).collect();
        let mut uniq = outs.clone();
        uniq.sort();
        uniq.dedup();
        assert_eq!(uniq.len(), 6);
        assert!(outs.iter().all(|o| o.contains("Salt lamp")));
        assert_eq!(m.completion(&req(p, 3)).unwrap(), outs[3]);
    }

    #[test]
    fn echo_returns_payload() {
        let m = MockBackend::echo();
        assert_eq!(m.completion(&req("Rewrite this:\nseed text", 0)).unwrap(), "seed text");
        assert_eq!(m.completion(&req("Make an ad.\nSalt lamp", 0)).unwrap(), "Salt lamp");
    }

    #[test]
    fn generation_mentions_inputs() {
        let m = MockBackend::synthetic();
        let out = m.completion(&req("Produce an advertisement for the specified product.\nSalt lamp", 0)).unwrap();
        assert!(out.contains("Salt lamp"), "{out}");
    }

    #[test]
    fn swaps_keep_capitalization_and_punctuation() {
        assert_eq!(swap_words("Generate the product.", u64::MAX), "Create the item.");
        assert_eq!(swap_words("Generate the product.", 0), "Generate the product.");
    }
}
