use std::collections::HashSet;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::model::{parse_datestamp, Granularity, UtcDatestamp};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SimRecord {
    pub identifier: String,
    pub datestamp: UtcDatestamp,
    pub deleted: bool,
    pub title: String,
}

/// What the simulated repository holds.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RepoContent {
    pub repository_name: String,
    pub admin_email: String,
    pub earliest_datestamp: UtcDatestamp,
    pub granularity: Granularity,
    pub records: Vec<SimRecord>,
    pub page_size: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ContentError {
    #[error("duplicate identifier {0}")]
    DuplicateIdentifier(String),
    #[error("record {0} is older than earliestDatestamp")]
    BeforeEarliest(String),
    #[error("page_size must be at least 1")]
    ZeroPageSize,
}

fn ds(text: &str) -> UtcDatestamp {
    parse_datestamp(text).expect("static datestamp")
}

impl Default for RepoContent {
    /// Five records over two days at second granularity, three per page.
    fn default() -> Self {
        let record = |n: u32, stamp: &str, deleted: bool, title: &str| SimRecord {
            identifier: format!("oai:sim.example.org:{n}"),
            datestamp: ds(stamp),
            deleted,
            title: title.to_string(),
        };
        Self {
            repository_name: "Simulated Repository".to_string(),
            admin_email: "oai-admin@sim.example.org".to_string(),
            earliest_datestamp: ds("2002-06-01T00:00:00Z"),
            granularity: Granularity::Second,
            records: vec![
                record(
                    1,
                    "2002-06-01T08:15:00Z",
                    false,
                    "On the harvesting of metadata",
                ),
                record(
                    2,
                    "2002-06-01T12:30:00Z",
                    false,
                    "Datestamps & their discontents",
                ),
                record(
                    3,
                    "2002-06-01T17:45:10Z",
                    false,
                    "Resumption considered helpful",
                ),
                record(4, "2002-06-02T09:00:00Z", false, "A \"quoted\" <title>"),
                record(5, "2002-06-02T14:20:05Z", true, "Withdrawn"),
            ],
            page_size: 3,
        }
    }
}

impl RepoContent {
    pub fn validate(&self) -> Result<(), ContentError> {
        if self.page_size == 0 {
            return Err(ContentError::ZeroPageSize);
        }
        let mut seen = HashSet::new();
        for r in &self.records {
            if !seen.insert(r.identifier.as_str()) {
                return Err(ContentError::DuplicateIdentifier(r.identifier.clone()));
            }
            if r.datestamp
                < self
                    .earliest_datestamp
                    .at_granularity(r.datestamp.granularity())
            {
                return Err(ContentError::BeforeEarliest(r.identifier.clone()));
            }
        }
        Ok(())
    }

    /// Short digest carried in resumption tokens so stale tokens are detected.
    pub fn digest(&self) -> String {
        let mut hasher = Sha256::new();
        for r in &self.records {
            hasher.update(r.identifier.as_bytes());
            hasher.update([0]);
            hasher.update(r.datestamp.render().as_bytes());
            hasher.update([u8::from(r.deleted)]);
        }
        hasher.update(self.page_size.to_le_bytes());
        hasher.finalize()[..4]
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }

    pub fn find(&self, identifier: &str) -> Option<&SimRecord> {
        self.records.iter().find(|r| r.identifier == identifier)
    }
}
