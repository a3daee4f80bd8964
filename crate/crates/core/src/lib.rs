//! Predicting zero-shot cross-lingual transfer performance of multilingual
//! language models.
//!
//! Scores of a model fine-tuned in a pivot language and evaluated on target
//! languages are regressed on pair features (subword overlap, typological
//! similarities, pre-training size, typological rarity, tokenizer quality).
//! Single-task learners see one task at a time; multi-task learners share
//! information across tasks, which matters most for tasks measured on only a
//! handful of languages.

pub mod data;
pub mod numerics;
pub mod features;
pub mod baselines;
pub mod sparse;
pub mod factorization;
pub mod gp;
pub mod meta;
pub mod eval;
pub mod explain;
pub mod cli;
