//! Coarse error classes shared by the command line and the HTTP API.

use crate::causetrace::CauseError;
use crate::segment::SegmentError;
use crate::summarize::provider::ProviderError;
use crate::summarize::{EmbedError, SummarizeError};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    /// Bad input: malformed log, unknown reference, bad parameter.
    Validation,
    NotFound,
    /// Another process holds the project, or it already exists.
    Conflict,
    /// An external summary or embedding service failed.
    Provider,
    Internal,
}

impl ErrorClass {
    /// Process exit code for the command line.
    pub fn exit_code(self) -> i32 {
        match self {
            ErrorClass::Validation | ErrorClass::NotFound => 2,
            ErrorClass::Provider => 3,
            ErrorClass::Conflict | ErrorClass::Internal => 1,
        }
    }

    pub fn http_status(self) -> u16 {
        match self {
            ErrorClass::Validation => 400,
            ErrorClass::NotFound => 404,
            ErrorClass::Conflict => 409,
            ErrorClass::Provider => 502,
            ErrorClass::Internal => 500,
        }
    }
}

pub trait Classify {
    fn class(&self) -> ErrorClass;
}

impl Classify for ProviderError {
    fn class(&self) -> ErrorClass {
        ErrorClass::Provider
    }
}

impl Classify for SummarizeError {
    fn class(&self) -> ErrorClass {
        match self {
            SummarizeError::Provider(_) | SummarizeError::EmptyResponse => ErrorClass::Provider,
            SummarizeError::EmptyBehavior | SummarizeError::MissingOperation(_) => ErrorClass::Validation,
            SummarizeError::Cache(_) => ErrorClass::Internal,
        }
    }
}

impl Classify for EmbedError {
    fn class(&self) -> ErrorClass {
        match self {
            EmbedError::Provider(_) | EmbedError::Dimension { .. } | EmbedError::NonFinite => ErrorClass::Provider,
            EmbedError::Cache(_) => ErrorClass::Internal,
        }
    }
}

impl Classify for SegmentError {
    fn class(&self) -> ErrorClass {
        match self {
            SegmentError::Summarize(e) => e.class(),
            SegmentError::Embed(e) => e.class(),
            _ => ErrorClass::Validation,
        }
    }
}

impl Classify for CauseError {
    fn class(&self) -> ErrorClass {
        match self {
            CauseError::UnknownOperation(_) => ErrorClass::NotFound,
            CauseError::Embed(e) => e.class(),
            _ => ErrorClass::Validation,
        }
    }
}
