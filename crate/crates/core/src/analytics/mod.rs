//! Usage statistics, length/response regression and survey sign tests.

pub mod regression;
pub mod survey;
pub mod usage;

pub use regression::{fit_line, length_response_correlation, CorrelationResult, RegressionError};
pub use sign_test::{sign_test, two_sided_p, Sign, SignTestResult};
pub use survey::{
    analyze_survey, read_survey_csv, Analysis, PairingSpec, QuestionAnalysis, SurveyError,
};
pub use usage::{
    normalized_avg, played_students, usage_stats, usage_table, write_usage_csv, UsageError,
    UsageStats, DEFAULT_PLAY_THRESHOLD_S, USAGE_CSV_HEADER,
};
