//! Genre and translation-method classification of translated text with
//! delexicalized n-gram language models.
//!
//! The pipeline runs from a POS-tagged corpus ([`corpus`]) through token
//! representations and n-grams ([`representation`]) to smoothed per-class
//! models ([`model`]), seeded experiments and metrics ([`eval`]) and feature
//! analysis ([`features`]). [`testkit`] generates synthetic corpora with known
//! class separation, and [`cli`] ties everything together as the `transvar`
//! command.
//!
//! ```
//! use transvar::model::{train, TrainConfig};
//! use transvar::representation::{NGram, NGramOrder, RepresentationMode};
//!
//! let g = |s: &str| NGram::parse(s).unwrap();
//! let human = vec![g("KOUS PPER VVFIN"), g("PPER VVFIN ADV")];
//! let machine = vec![g("ART NN ART"), g("NN ART NN")];
//! let config = TrainConfig::new(RepresentationMode::Pos, NGramOrder::TRIGRAM);
//! let model = train([("HUMAN", &human[..]), ("MACHINE", &machine[..])], &config).unwrap();
//! assert_eq!(model.classify(&[g("NN ART NN")]).unwrap(), "MACHINE");
//! ```

pub mod cli;
pub mod corpus;
pub mod eval;
pub mod features;
pub mod model;
pub mod representation;
pub mod testkit;

// The guide's snippets run as doctests so the book cannot drift from the code.
#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/corpus.md")]
    mod corpus {}
    #[doc = include_str!("../../../book/src/representations.md")]
    mod representations {}
    #[doc = include_str!("../../../book/src/model.md")]
    mod model {}
    #[doc = include_str!("../../../book/src/evaluation.md")]
    mod evaluation {}
    #[doc = include_str!("../../../book/src/features.md")]
    mod features {}
    #[doc = include_str!("../../../book/src/synthetic.md")]
    mod synthetic {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
