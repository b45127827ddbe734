//! Prompt privacy mediation for LLM agent pipelines.
//!
//! The crate covers span extraction, per-span routing across placeholder,
//! abstraction and symbolic-token replacement, a session vault with
//! boundary-scoped restoration, a six-stage agent pipeline simulator, the
//! metric suite, and the synthetic benchmark generator.

pub mod benchgen;
pub mod category;
pub mod error;
pub mod extraction;
pub mod harness;
pub mod metrics;
pub mod policy;
pub mod sanitizer;
pub mod sim;
pub mod text;
pub mod vault;

pub use benchgen::{
    generate_benchmark, generate_probes, AccountingReport, BenchmarkManifest, PromptInstance,
    SlotMeta, SlotNeed, ToolSpec,
};
pub use category::{CategoryClass, PrivacyCategory, RiskTier};
pub use error::{Error, Result};
pub use extraction::{extract_spans, Annotation, Detector, DetectorConfig, SpanAnnotation, SpanSource};
pub use harness::{EpisodeRecord, Evaluator, Method};
pub use metrics::{MetricReport, Prf};
pub use policy::{PolicyProfile, ProfileName, Router, RoutingState, SanitizationMode};
pub use sanitizer::{MediationResult, Replacement, Sanitizer, Strategy};
pub use sim::{Boundary, Episode, RestorationPolicy, StageTrace};
pub use vault::{AuditEvent, AuditOutcome, AuthorizationContext, SessionId, Vault};
