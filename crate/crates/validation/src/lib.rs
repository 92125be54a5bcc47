//! Holds the `acceptance` integration test target; there is no library code.
//!
//! Run it with `cargo test -p penreflect-validation --release -- --nocapture`
//! to see timings alongside the per-criterion verdict lines.
