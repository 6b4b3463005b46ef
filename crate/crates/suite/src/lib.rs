//! Acceptance runner package; the checks live in `tests/acceptance.rs`.
