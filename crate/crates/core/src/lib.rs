//! Iterative generation of creative problem-solving items: word lists, item
//! generation with validity filters, synthetic responses, exemplar
//! selection, run orchestration and the statistics used to evaluate pools.

pub mod analysis;
pub mod itemgen;
pub mod pipeline;
pub mod providers;
pub mod responsegen;
pub mod rng;
pub mod selection;
pub mod text;
pub mod wordlist;

pub use itemgen::{CpsItem, FilterReport, Verdict, SENTINEL};
pub use providers::{BackendRegistry, EmbeddingVector, OriginalityScore, ProviderError};
pub use responsegen::{ItemResponse, ParticipantProfile, PromptStyle};
pub use selection::{ExemplarSet, ScoredItem, SelectionConstraints, SelectionStrategy};
pub use wordlist::WordList;
