//! Intentionally empty; see `tests/acceptance.rs`.
