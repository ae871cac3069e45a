//! Two-step French pronunciation learning toolkit.
//!
//! Step one converts each word to phonemes with an autoregressive
//! transformer (`g2p`). Step two predicts liaison/linking phenomena at
//! word boundaries with a shallow non-autoregressive model (`plp`).
//! Supporting modules cover the transcript data model, vocabularies,
//! POS tagging, metrics, a rule-based synthetic-data oracle, and the
//! experiment pipeline behind the `frpron` CLI.

pub mod g2p;
pub mod metrics;
pub mod nn;
pub mod oracle;
pub mod pipeline;
pub mod plp;
pub mod postag;
pub mod transcript;
pub mod vocab;
