//! Packet classification with a pre-cutting decision tree.
//!
//! The crate covers the whole path from a 5-tuple ruleset to a hardware
//! timing estimate:
//!
//! * [`ruleset`]: rules, ClassBench parsing, synthetic rulesets and traces,
//!   and the linear-search reference classifier.
//! * [`treebuild`]: tree construction with bit-aligned pre-cutting plus the
//!   merging, overlap and push-upward heuristics.
//! * [`memlayout`]: bit-exact encodings and the word-addressed memory image.
//! * [`engine`]: division-free classification over an image.
//! * [`hwsim`]: cycle model of parallel engines with in-order result delivery.

pub mod engine;
pub mod hwsim;
pub mod memlayout;
pub mod ruleset;
pub mod treebuild;
