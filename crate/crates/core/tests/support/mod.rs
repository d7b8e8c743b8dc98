//! Reference implementations shared by the integration tests. They are
//! written independently of the library: no shared helpers, different
//! numerical methods.

#![allow(dead_code)]

pub mod oracle;
