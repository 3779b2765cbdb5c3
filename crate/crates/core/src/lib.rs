//! Value-aware caching of LLM tool-call results.
//!
//! Requests are keyed canonically, annotated with semantic features, scored by
//! a caching value and admitted by a UCB1 bandit over a hierarchy of request
//! groups. Eviction weighs value and hits among the least recently used
//! entries. Workload generators and a trace-driven simulator compare the
//! policy against LRU and a hit-only bandit.

pub mod annotator;
pub mod engine;
pub mod keying;
pub mod model;
pub mod policy;
pub mod store;
pub mod value;
pub mod sim;
pub mod trace;
pub mod workload;

pub use engine::{CacheEngine, EngineError, RequestOutcome, StatsSnapshot};
pub use keying::{make_key, CacheKey};
pub use model::{PolicyConfig, ToolCallRequest};
pub use policy::PolicyKind;
