//! Terminology-linked retrieval and emotion-aware response generation.
//!
//! The crate is `no_std` (it needs `alloc`) and performs no IO: every operation
//! is a pure function of its inputs, or takes an explicit [`genbackend::Generator`]
//! for text generation. File formats, HTTP and the CLI live in the `medconsult`
//! crate.
//!
//! Pipeline for a single patient message:
//!
//! 1. [`terminology::TermMatcher::detect`] finds dictionary terms in the query.
//! 2. [`terminology::session_memory_update`] grows the per-session term memory.
//! 3. [`retrieval::generate_enhanced_query`] appends the canonical term block.
//! 4. [`retrieval::candidate_docs`] restricts retrieval to term-linked documents,
//!    [`retrieval::score_candidates`] ranks them with BM25 and
//!    [`retrieval::sharpen_scores`] turns raw scores into a softmax distribution.
//! 5. [`eicl::select_demonstrations`] picks in-context examples and
//!    [`eicl::generate_with_feedback`] regenerates while the predicted patient
//!    feedback is negative.
//!
//! [`pipeline::run_turn`] composes the steps; [`metrics`] scores generated text.

#![no_std]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod corpus;
pub mod eicl;
pub mod genbackend;
pub mod metrics;
pub mod pipeline;
pub mod retrieval;
pub mod sentiment;
pub mod terminology;
pub mod tokenize;
pub mod vector;

pub use corpus::{ConsultationRecord, CorpusSplit, KnowledgeDocument};
pub use eicl::{Demonstration, RegenerationTrace};
pub use genbackend::{GenerationRequest, GenerationResult, Generator, ScriptedBackend};
pub use metrics::MetricReport;
pub use retrieval::{InvertedIndex, LinkedDocs, ScoredDocs};
pub use sentiment::{FeedbackModel, FeedbackPrediction, SentimentLabel, SentimentLexicon, Thresholds};
pub use terminology::{TermEntry, TermSet, TermSpan};
