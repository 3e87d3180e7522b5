//! JSONL student rows: id, post, optional questionnaire answers, pre-extracted entities.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::bfi::{score_bfi44, BfiError, validate_response, QuestionnaireResponse, ScoringKey, TraitScores};
use crate::cohort::SyntheticStudent;
use crate::matchmaking::Entity;

#[derive(Debug, thiserror::Error)]
pub enum DatasetError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("row `{id}`: {message}")]
    Invalid { id: String, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetRow {
    pub student_id: String,
    pub post: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub answers: Option<Vec<i64>>,
    #[serde(default)]
    pub entities: Vec<Entity>,
}

impl DatasetRow {
    pub fn response(&self) -> Option<QuestionnaireResponse> {
        self.answers.as_ref().map(|a| QuestionnaireResponse {
            student_id: self.student_id.clone(),
            answers: a.clone(),
        })
    }

    pub fn scores(&self, key: &ScoringKey) -> Result<Option<TraitScores>, BfiError> {
        self.response().map(|r| score_bfi44(&r, key)).transpose()
    }

    pub fn validate(&self) -> Result<(), DatasetError> {
        let invalid = |message: String| DatasetError::Invalid {
            id: self.student_id.clone(),
            message,
        };
        if self.student_id.trim().is_empty() {
            return Err(invalid("empty student id".into()));
        }
        if let Some(r) = self.response() {
            let v = validate_response(&r);
            if let Some(first) = v.first() {
                return Err(invalid(first.to_string()));
            }
        }
        for e in &self.entities {
            Entity::new(&e.category, &e.value).map_err(|e| invalid(e.to_string()))?;
        }
        Ok(())
    }
}

impl From<&SyntheticStudent> for DatasetRow {
    fn from(s: &SyntheticStudent) -> Self {
        Self {
            student_id: s.student_id.clone(),
            post: s.post.clone(),
            answers: Some(s.answers.clone()),
            entities: s
                .entities
                .iter()
                .map(|e| Entity {
                    category: e.category.clone(),
                    value: e.value.clone(),
                })
                .collect(),
        }
    }
}

/// Read and validate rows; blank lines are skipped.
pub fn read_jsonl<R: BufRead>(reader: R) -> Result<Vec<DatasetRow>, DatasetError> {
    let mut rows = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let row: DatasetRow = serde_json::from_str(&line).map_err(|e| DatasetError::Parse {
            line: i + 1,
            message: e.to_string(),
        })?;
        row.validate()?;
        rows.push(row);
    }
    Ok(rows)
}

pub fn write_jsonl<W: Write, S: Serialize>(mut w: W, rows: &[S]) -> std::io::Result<()> {
    for r in rows {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n")?;
    }
    w.flush()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cohort::{generate_cohort, DistributionSpec};
    use crate::seeding::seeded;

    #[test]
    fn cohort_jsonl_reads_as_dataset() {
        let key = ScoringKey::bfi44();
        let cohort = generate_cohort(5, &DistributionSpec::default(), &key, &mut seeded(1)).unwrap();
        let mut buf = Vec::new();
        write_jsonl(&mut buf, &cohort).unwrap();
        let rows = read_jsonl(buf.as_slice()).unwrap();
        assert_eq!(rows.len(), 5);
        for (r, s) in rows.iter().zip(&cohort) {
            assert_eq!(r, &DatasetRow::from(s));
            assert_eq!(r.scores(&key).unwrap(), Some(score_bfi44(&s.response(), &key).unwrap()));
        }
    }

    #[test]
    fn bad_rows_are_reported_with_line() {
        let text = "{\"student_id\":\"a\",\"post\":\"hi\"}\n\nnot json\n";
        match read_jsonl(text.as_bytes()) {
            Err(DatasetError::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
        let short = "{\"student_id\":\"a\",\"post\":\"hi\",\"answers\":[1,2]}";
        assert!(matches!(read_jsonl(short.as_bytes()), Err(DatasetError::Invalid { .. })));
        let cn = "{\"student_id\":\"a\",\"post\":\"hi\",\"entities\":[{\"category\":\"personality\",\"value\":\"neuroticism=high\"}]}";
        assert!(matches!(read_jsonl(cn.as_bytes()), Err(DatasetError::Invalid { .. })));
    }
}
