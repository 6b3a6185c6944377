//! Acceptance suite for `mrflift`. See `tests/acceptance.rs`.
