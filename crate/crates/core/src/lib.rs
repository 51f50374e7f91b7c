//! Core of the VITA learning-data backbone: the xAPI statement model and
//! codec, chat-log transformation, learning analytics, the adaptive pathway
//! engine and the tutor connector. No I/O beyond files; the HTTP service lives
//! in `vita-lrs`.

pub mod adaptive;
pub mod analytics;
pub mod clock;
pub mod demo;
pub mod export;
pub mod ingest;
pub mod par;
pub mod retry;
pub mod tutor;
pub mod xapi;
