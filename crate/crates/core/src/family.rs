//! The fifteen failure families covered by the benchmark.

use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

/// Root-cause class of a debugging failure.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FailureFamily {
    DuplicateServerInstance,
    SqliteInitLocking,
    WrongVirtualenv,
    WrongPythonpath,
    LockfileConflict,
    StaleMigration,
    RetrievalFalsePositive,
    RejectedMemoryReuse,
    WrongEnvVar,
    OutdatedMemoryVariant,
    MigrationOrderMismatch,
    CorruptedLocalState,
    MissingBackupDir,
    InvalidConfigKey,
    RuntimeEvidenceGap,
}

impl FailureFamily {
    /// Every family, in fixed enumeration order.
    pub const ALL: [FailureFamily; 15] = [
        FailureFamily::DuplicateServerInstance,
        FailureFamily::SqliteInitLocking,
        FailureFamily::WrongVirtualenv,
        FailureFamily::WrongPythonpath,
        FailureFamily::LockfileConflict,
        FailureFamily::StaleMigration,
        FailureFamily::RetrievalFalsePositive,
        FailureFamily::RejectedMemoryReuse,
        FailureFamily::WrongEnvVar,
        FailureFamily::OutdatedMemoryVariant,
        FailureFamily::MigrationOrderMismatch,
        FailureFamily::CorruptedLocalState,
        FailureFamily::MissingBackupDir,
        FailureFamily::InvalidConfigKey,
        FailureFamily::RuntimeEvidenceGap,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            FailureFamily::DuplicateServerInstance => "duplicate_server_instance",
            FailureFamily::SqliteInitLocking => "sqlite_init_locking",
            FailureFamily::WrongVirtualenv => "wrong_virtualenv",
            FailureFamily::WrongPythonpath => "wrong_pythonpath",
            FailureFamily::LockfileConflict => "lockfile_conflict",
            FailureFamily::StaleMigration => "stale_migration",
            FailureFamily::RetrievalFalsePositive => "retrieval_false_positive",
            FailureFamily::RejectedMemoryReuse => "rejected_memory_reuse",
            FailureFamily::WrongEnvVar => "wrong_env_var",
            FailureFamily::OutdatedMemoryVariant => "outdated_memory_variant",
            FailureFamily::MigrationOrderMismatch => "migration_order_mismatch",
            FailureFamily::CorruptedLocalState => "corrupted_local_state",
            FailureFamily::MissingBackupDir => "missing_backup_dir",
            FailureFamily::InvalidConfigKey => "invalid_config_key",
            FailureFamily::RuntimeEvidenceGap => "runtime_evidence_gap",
        }
    }
}

impl fmt::Display for FailureFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for FailureFamily {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        FailureFamily::ALL
            .iter()
            .find(|f| f.as_str() == s)
            .copied()
            .ok_or_else(|| format!("unknown failure family: {s}"))
    }
}
