//! Sign-test analysis of survey answers.
//!
//! Three kinds of analysis are supported:
//!
//! * `preference`: a question answered `A`, `B` or `tie`; A counts positive.
//! * `agreement`: a Likert question; above 3 is positive, below 3 negative,
//!   3 a tie.
//! * `shift`: the same Likert question asked twice; a higher second answer
//!   is positive. Only respondents who answered both are paired.

use std::collections::{BTreeMap, HashMap};
use std::io;

use serde::{Deserialize, Serialize};

use super::sign_test::{sign_test, Sign, SignTestResult};
use crate::domain::{Preference, SurveyAnswer, SurveyDatum, SurveyKind};

pub const SURVEY_CSV_HEADER: [&str; 4] = ["question_id", "respondent_id", "kind", "value"];

const LIKERT_NEUTRAL: u8 = 3;

#[derive(Debug, thiserror::Error)]
pub enum SurveyError {
    #[error("line {line}: {message}")]
    Row { line: u64, message: String },
    #[error("survey CSV header must be {expected:?}, got {found:?}")]
    Header { expected: String, found: String },
    #[error("question {0} has no answers")]
    MissingQuestion(String),
    #[error("analysis {analysis}: question {question} is {found}, expected {expected}")]
    KindMismatch {
        analysis: String,
        question: String,
        expected: SurveyKind,
        found: SurveyKind,
    },
    #[error("question {0} mixes likert and preference answers")]
    MixedKinds(String),
    #[error("respondent {respondent_id} answered {question_id} more than once")]
    Duplicate {
        question_id: String,
        respondent_id: String,
    },
    #[error("invalid pairing spec: {0}")]
    Spec(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// One requested analysis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "lowercase")]
pub enum Analysis {
    Preference {
        name: String,
        question: String,
    },
    Agreement {
        name: String,
        question: String,
    },
    Shift {
        name: String,
        before: String,
        after: String,
    },
}

impl Analysis {
    pub fn name(&self) -> &str {
        match self {
            Analysis::Preference { name, .. }
            | Analysis::Agreement { name, .. }
            | Analysis::Shift { name, .. } => name,
        }
    }

    fn method(&self) -> &'static str {
        match self {
            Analysis::Preference { .. } => "preference",
            Analysis::Agreement { .. } => "agreement",
            Analysis::Shift { .. } => "shift",
        }
    }
}

/// Which analyses to run, read from a JSON file such as
/// `{"analyses": [{"method": "shift", "name": "Q23", "before": "Q23a", "after": "Q23b"}]}`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PairingSpec {
    pub analyses: Vec<Analysis>,
}

impl PairingSpec {
    pub fn from_json(text: &str) -> Result<Self, SurveyError> {
        Ok(serde_json::from_str(text)?)
    }

    /// One analysis per question in first-seen order: `preference` for
    /// preference questions, `agreement` for Likert ones.
    pub fn default_for(data: &[SurveyDatum]) -> Self {
        let mut seen = Vec::new();
        let mut analyses = Vec::new();
        for d in data {
            if seen.contains(&&d.question_id) {
                continue;
            }
            seen.push(&d.question_id);
            let name = d.question_id.clone();
            let question = d.question_id.clone();
            analyses.push(match d.answer.kind() {
                SurveyKind::Preference => Analysis::Preference { name, question },
                SurveyKind::Likert => Analysis::Agreement { name, question },
            });
        }
        Self { analyses }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QuestionAnalysis {
    pub name: String,
    pub method: &'static str,
    /// Answer counts per option. Shift analyses prefix options with
    /// `before:` / `after:` and count paired respondents only.
    pub distribution: BTreeMap<String, u64>,
    /// Respondents of a shift analysis who answered only one of the two questions.
    pub unpaired: u64,
    pub test: SignTestResult,
}

/// Reads `question_id,respondent_id,kind,value` rows. Errors carry the
/// 1-based line number.
pub fn read_survey_csv(input: impl io::Read) -> Result<Vec<SurveyDatum>, SurveyError> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(input);
    let header = rdr.headers().map_err(|e| row_error(1, &e))?.clone();
    if header.iter().ne(SURVEY_CSV_HEADER) {
        return Err(SurveyError::Header {
            expected: SURVEY_CSV_HEADER.join(","),
            found: header.iter().collect::<Vec<_>>().join(","),
        });
    }
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            row_error(line, &e)
        })?;
        let line = rec.position().map_or(0, |p| p.line());
        let bad = |message: String| SurveyError::Row { line, message };
        let kind: SurveyKind = rec[2].parse().map_err(bad)?;
        let answer = SurveyAnswer::parse(kind, &rec[3]).map_err(|e| bad(e.to_string()))?;
        let datum = SurveyDatum {
            question_id: rec[0].to_owned(),
            respondent_id: rec[1].to_owned(),
            answer,
        };
        datum.validate().map_err(|e| bad(e.to_string()))?;
        out.push(datum);
    }
    Ok(out)
}

fn row_error(line: u64, e: &csv::Error) -> SurveyError {
    SurveyError::Row {
        line,
        message: e.to_string(),
    }
}

/// Answers grouped by question, then respondent.
struct Answers<'a> {
    by_question: HashMap<&'a str, (SurveyKind, BTreeMap<&'a str, SurveyAnswer>)>,
}

impl<'a> Answers<'a> {
    fn index(data: &'a [SurveyDatum]) -> Result<Self, SurveyError> {
        let mut by_question: HashMap<&str, (SurveyKind, BTreeMap<&str, SurveyAnswer>)> =
            HashMap::new();
        for d in data {
            let entry = by_question
                .entry(&d.question_id)
                .or_insert_with(|| (d.answer.kind(), BTreeMap::new()));
            if entry.0 != d.answer.kind() {
                return Err(SurveyError::MixedKinds(d.question_id.clone()));
            }
            if entry.1.insert(&d.respondent_id, d.answer).is_some() {
                return Err(SurveyError::Duplicate {
                    question_id: d.question_id.clone(),
                    respondent_id: d.respondent_id.clone(),
                });
            }
        }
        Ok(Self { by_question })
    }

    fn question(
        &self,
        analysis: &Analysis,
        question: &str,
        expected: SurveyKind,
    ) -> Result<&BTreeMap<&'a str, SurveyAnswer>, SurveyError> {
        let (kind, answers) = self
            .by_question
            .get(question)
            .ok_or_else(|| SurveyError::MissingQuestion(question.to_owned()))?;
        if *kind != expected {
            return Err(SurveyError::KindMismatch {
                analysis: analysis.name().to_owned(),
                question: question.to_owned(),
                expected,
                found: *kind,
            });
        }
        Ok(answers)
    }
}

fn likert_value(a: SurveyAnswer) -> u8 {
    match a {
        SurveyAnswer::Likert(v) => v,
        SurveyAnswer::Preference(_) => unreachable!("kind checked by Answers::question"),
    }
}

fn sign_of(ord: std::cmp::Ordering) -> Sign {
    match ord {
        std::cmp::Ordering::Greater => Sign::Positive,
        std::cmp::Ordering::Less => Sign::Negative,
        std::cmp::Ordering::Equal => Sign::Tie,
    }
}

fn likert_distribution(prefix: &str) -> BTreeMap<String, u64> {
    (1..=5).map(|v| (format!("{prefix}{v}"), 0)).collect()
}

pub fn analyze_survey(
    data: &[SurveyDatum],
    spec: &PairingSpec,
) -> Result<Vec<QuestionAnalysis>, SurveyError> {
    let answers = Answers::index(data)?;
    spec.analyses
        .iter()
        .map(|analysis| {
            let mut distribution: BTreeMap<String, u64>;
            let mut unpaired = 0;
            let signs: Vec<Sign> = match analysis {
                Analysis::Preference { question, .. } => {
                    let qa = answers.question(analysis, question, SurveyKind::Preference)?;
                    distribution = ["A", "B", "tie"]
                        .map(|k| (k.to_owned(), 0))
                        .into_iter()
                        .collect();
                    qa.values()
                        .map(|&a| {
                            *distribution.entry(a.label()).or_default() += 1;
                            match a {
                                SurveyAnswer::Preference(Preference::A) => Sign::Positive,
                                SurveyAnswer::Preference(Preference::B) => Sign::Negative,
                                _ => Sign::Tie,
                            }
                        })
                        .collect()
                }
                Analysis::Agreement { question, .. } => {
                    let qa = answers.question(analysis, question, SurveyKind::Likert)?;
                    distribution = likert_distribution("");
                    qa.values()
                        .map(|&a| {
                            *distribution.entry(a.label()).or_default() += 1;
                            sign_of(likert_value(a).cmp(&LIKERT_NEUTRAL))
                        })
                        .collect()
                }
                Analysis::Shift { before, after, .. } => {
                    let b = answers.question(analysis, before, SurveyKind::Likert)?;
                    let a = answers.question(analysis, after, SurveyKind::Likert)?;
                    distribution = likert_distribution("before:");
                    distribution.extend(likert_distribution("after:"));
                    unpaired = b.keys().filter(|r| !a.contains_key(*r)).count() as u64
                        + a.keys().filter(|r| !b.contains_key(*r)).count() as u64;
                    b.iter()
                        .filter_map(|(r, &before_ans)| {
                            a.get(r).map(|&after_ans| (before_ans, after_ans))
                        })
                        .map(|(x, y)| {
                            *distribution
                                .entry(format!("before:{}", x.label()))
                                .or_default() += 1;
                            *distribution
                                .entry(format!("after:{}", y.label()))
                                .or_default() += 1;
                            sign_of(likert_value(y).cmp(&likert_value(x)))
                        })
                        .collect()
                }
            };
            Ok(QuestionAnalysis {
                name: analysis.name().to_owned(),
                method: analysis.method(),
                distribution,
                unpaired,
                test: sign_test(signs),
            })
        })
        .collect()
}
