//! Hosts the long-running acceptance suite in `tests/acceptance.rs`.
