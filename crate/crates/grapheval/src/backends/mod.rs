//! Model service clients.
//!
//! [`http`] speaks the JSON wire contracts, [`cache`] adds content-addressed
//! record/replay on top of any backend and [`mock`] provides deterministic
//! offline backends for demos and tests.

pub mod cache;
pub mod http;
pub mod mock;

pub use cache::{cache_key, Cache, CacheEntry, CacheMode, CachedLlm, CachedNli};
pub use http::{HttpLlm, HttpNli, LlmConfig, NliConfig, ReqwestTransport, Transport};
pub use mock::{ContainmentNli, HeuristicLlm};
