//! Core of the response collector: domain types, the append-only store,
//! the aggregation engine and the usage/survey analytics.

pub mod aggregate;
pub mod analytics;
pub mod domain;
pub mod password;
pub mod reference;
pub mod store;

pub use domain::{
    LoginId, PlaySegment, Preference, RawResponse, Response, ResponseId, ResponseType, Role,
    SurveyAnswer, SurveyDatum, SurveyKind, UserAccount, ValidationError, Video, VideoId,
};
pub use store::{RecordKind, ResponseQuery, Snapshot, Store, StoreError};
