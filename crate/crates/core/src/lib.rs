//! Compression by program synthesis.
//!
//! Sequences of bytes are compressed by finding a program in a small
//! compositional language ([`dsl`]) that reproduces them, then encoding that
//! program under a uniform prior with an arithmetic coder ([`codec`]).
//! [`sampler`] draws random program/sequence pairs, [`corpus`] ingests real
//! byte sources, [`harness`] scores candidate programs against classical
//! baselines, and [`llm_client`] collects candidates from chat-completion
//! endpoints.

pub mod codec;
pub mod corpus;
pub mod dsl;
pub mod harness;
pub mod llm_client;
pub mod par;
pub mod sampler;
