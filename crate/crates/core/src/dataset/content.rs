//! Seed content for the benchmark generator: per-family error surfaces,
//! root-cause hints, operational signatures, the confusable pairs, the
//! paraphrase synonym table, and the noise-token pool.
//!
//! Confusable pair members deliberately share surface tokens (the same
//! terminal output) while differing in root cause, signatures, and family
//! keywords. Pattern token sets within a pair are kept the same size so
//! that a paraphrase which erases all family-specific evidence produces an
//! exact lexical tie, resolved by the pattern-id tie-break.

use crate::family::FailureFamily;

/// Static description of one failure family's seed content.
pub struct FamilySpec {
    pub family: FailureFamily,
    /// Terminal error line; its tokens form the bulk of the symptom set.
    pub error_text: &'static str,
    /// Root-cause phrasing; its tokens form the root-cause set.
    pub root_hint: &'static str,
    /// Stack-frame identifiers for the primary variant.
    pub frames: [&'static str; 3],
    pub command: &'static str,
    pub path: &'static str,
    pub env: (&'static str, &'static str),
    pub fix: &'static str,
    /// Secondary variant: a different operational flavor of the same fix.
    pub alt_frames: [&'static str; 3],
    pub alt_command: &'static str,
    pub alt_path: &'static str,
    pub alt_env: (&'static str, &'static str),
    pub alt_fix: &'static str,
    pub description: &'static str,
    /// Family keyword(s) guaranteed to appear in rule data, used when a
    /// confusable case needs a weak vote for the true family.
    pub vote_tokens: [&'static str; 2],
    /// Pattern acceptance / false-positive history.
    pub acceptance: f64,
    pub fp_history: f64,
}

const PAIRED_ACCEPTANCE: f64 = 0.6;
const PAIRED_FP: f64 = 0.4;
const CLEAN_ACCEPTANCE: f64 = 0.8;
const CLEAN_FP: f64 = 0.1;

/// One seed spec per family, in `FailureFamily::ALL` order.
pub const FAMILY_SPECS: [FamilySpec; 15] = [
    FamilySpec {
        family: FailureFamily::DuplicateServerInstance,
        error_text: "OSError errno 98 address already in use: cannot bind port 8000 for api server",
        root_hint: "duplicate uvicorn instance still running kill stray process before restart",
        frames: ["serve", "startup", "listen"],
        command: "uvicorn app.main:app --port 8000",
        path: "srv/api/main.py",
        env: ("SERVER_PORT", "8000"),
        fix: "kill the stray uvicorn process holding the port, then restart",
        alt_frames: ["daemon", "spawn", "watchdog"],
        alt_command: "systemctl restart api",
        alt_path: "etc/systemd/system/api.service",
        alt_env: ("SYSTEMD_UNIT", "api.service"),
        alt_fix: "stop the systemd unit before launching a local instance",
        description: "second server instance already bound to the service port",
        vote_tokens: ["errno", "bind"],
        acceptance: CLEAN_ACCEPTANCE,
        fp_history: CLEAN_FP,
    },
    FamilySpec {
        family: FailureFamily::SqliteInitLocking,
        error_text: "SQLite OperationalError: database is locked (busy timeout expired during write transaction)",
        root_hint: "lingering connection holds the wal session open release it first",
        frames: ["cursor", "execute", "commit"],
        command: "pytest tests/db -k locking",
        path: "app/data/app.db",
        env: ("DATABASE_URL", "sqlite:///app.db"),
        fix: "close the lingering sqlite connection and retry the transaction",
        alt_frames: ["connect", "init", "checkpoint"],
        alt_command: "sqlite3 app.db .tables",
        alt_path: "var/lib/app/wal",
        alt_env: ("SQLITE_BUSY_TIMEOUT", "5000"),
        alt_fix: "enable wal checkpointing and close idle sessions",
        description: "database locked by a lingering connection during init",
        vote_tokens: ["lingering", "connection"],
        acceptance: PAIRED_ACCEPTANCE,
        fp_history: PAIRED_FP,
    },
    FamilySpec {
        family: FailureFamily::WrongVirtualenv,
        error_text: "ModuleNotFoundError: no module named app when running inside the project virtualenv",
        root_hint: "wrong venv activate the interpreter from the project site packages",
        frames: ["importlib", "bootstrap", "resolve"],
        command: "python main.py",
        path: ".venv/bin/python",
        env: ("VIRTUAL_ENV", "/home/dev/.venv"),
        fix: "activate the project virtualenv before running the entrypoint",
        alt_frames: ["launcher", "sitecustomize", "probe"],
        alt_command: "tox -e py310",
        alt_path: "tox.ini",
        alt_env: ("TOX_ENV", "py310"),
        alt_fix: "recreate the tox environment against the project interpreter",
        description: "interpreter from the wrong virtualenv resolves no project modules",
        vote_tokens: ["venv", "activate"],
        acceptance: PAIRED_ACCEPTANCE,
        fp_history: PAIRED_FP,
    },
    FamilySpec {
        family: FailureFamily::WrongPythonpath,
        error_text: "ModuleNotFoundError: no module named app although sources live under src",
        root_hint: "pythonpath missing export src onto the import path finder",
        frames: ["importlib", "machinery", "pathfinder"],
        command: "python -m pytest",
        path: "src/app/__init__.py",
        env: ("PYTHONPATH", "src"),
        fix: "export PYTHONPATH=src or install the package in editable mode",
        alt_frames: ["runner", "collect", "discover"],
        alt_command: "make test",
        alt_path: "Makefile",
        alt_env: ("PY_SRC", "src"),
        alt_fix: "teach the test runner the source root via an editable install",
        description: "import path misses the source tree despite a healthy venv",
        vote_tokens: ["pythonpath", "export"],
        acceptance: PAIRED_ACCEPTANCE,
        fp_history: PAIRED_FP,
    },
    FamilySpec {
        family: FailureFamily::LockfileConflict,
        error_text: "Poetry lockfile conflict: hash mismatch for dependency resolution in lock file",
        root_hint: "regenerate the poetry lock after pinning versions then reinstall",
        frames: ["solver", "resolve", "pin"],
        command: "poetry install --sync",
        path: "poetry.lock",
        env: ("POETRY_VENV", "auto"),
        fix: "regenerate poetry.lock and reinstall with --sync",
        alt_frames: ["compiler", "constraint", "merge"],
        alt_command: "pip install -r requirements.txt",
        alt_path: "requirements.txt",
        alt_env: ("PIP_INDEX", "default"),
        alt_fix: "recompile requirements from the manifest and reinstall",
        description: "lockfile out of sync with the dependency manifest",
        vote_tokens: ["lockfile", "poetry"],
        acceptance: CLEAN_ACCEPTANCE,
        fp_history: CLEAN_FP,
    },
    FamilySpec {
        family: FailureFamily::StaleMigration,
        error_text: "SQLite OperationalError: database is locked and table users is missing after deploy",
        root_hint: "stale migration run alembic upgrade head to apply the latest revision",
        frames: ["alembic", "script", "runtime"],
        command: "alembic upgrade head",
        path: "migrations/versions",
        env: ("ALEMBIC_CONFIG", "alembic.ini"),
        fix: "run alembic upgrade head before starting the service",
        alt_frames: ["env", "context", "ops"],
        alt_command: "flask db upgrade",
        alt_path: "app/migrations/env.py",
        alt_env: ("FLASK_APP", "app"),
        alt_fix: "apply pending flask-migrate revisions in the deploy step",
        description: "schema behind the code because a migration never ran",
        vote_tokens: ["stale", "alembic"],
        acceptance: PAIRED_ACCEPTANCE,
        fp_history: PAIRED_FP,
    },
    FamilySpec {
        family: FailureFamily::RetrievalFalsePositive,
        error_text: "retrieved memory hint misapplied: suggested fix caused regression and was reverted",
        root_hint: "similar surface log different root cause do trust operational evidence",
        frames: ["retriever", "score", "inject"],
        command: "git revert abc123",
        path: "agent/memory/store.jsonl",
        env: ("MEMORY_STORE", "local"),
        fix: "require structural signature agreement before reusing the hint",
        alt_frames: ["ranker", "compare", "apply"],
        alt_command: "git diff main",
        alt_path: "agent/hints.log",
        alt_env: ("HINT_LOG", "on"),
        alt_fix: "cross-check the hint against command and path evidence",
        description: "lexically similar memory injected for the wrong root cause",
        vote_tokens: ["regression", "reverted"],
        acceptance: PAIRED_ACCEPTANCE,
        fp_history: PAIRED_FP,
    },
    FamilySpec {
        family: FailureFamily::RejectedMemoryReuse,
        error_text: "retrieved memory hint declined twice: reviewer rejected the suggested reuse",
        root_hint: "session feedback says decline reuse respect reviewer rejection state",
        frames: ["handler", "reject", "record"],
        command: "review patch.diff",
        path: "agent/session/feedback.log",
        env: ("REVIEW_MODE", "strict"),
        fix: "honor session rejections and stop proposing the same hint",
        alt_frames: ["annotate", "veto", "skip"],
        alt_command: "cat feedback.log",
        alt_path: "agent/notes.md",
        alt_env: ("FEEDBACK_CHANNEL", "inline"),
        alt_fix: "record the veto and suppress the variant for this session",
        description: "memory repeatedly re-proposed after explicit rejection",
        vote_tokens: ["rejected", "declined"],
        acceptance: PAIRED_ACCEPTANCE,
        fp_history: PAIRED_FP,
    },
    FamilySpec {
        family: FailureFamily::WrongEnvVar,
        error_text: "ValueError: required environment variable API TOKEN is unset or empty",
        root_hint: "load dotenv file or export the token into os environ before start",
        frames: ["getenv", "require", "settings"],
        command: "env | grep API",
        path: ".env.local",
        env: ("API_TOKEN", ""),
        fix: "populate the token in .env.local and reload the environment",
        alt_frames: ["hook", "evaluate", "reload"],
        alt_command: "direnv allow",
        alt_path: ".envrc",
        alt_env: ("DIRENV_DIR", "proj"),
        alt_fix: "approve the direnv profile so the variable is exported",
        description: "service reads an unset environment variable at startup",
        vote_tokens: ["valueerror", "unset"],
        acceptance: CLEAN_ACCEPTANCE,
        fp_history: CLEAN_FP,
    },
    FamilySpec {
        family: FailureFamily::OutdatedMemoryVariant,
        error_text: "stored fix version does not apply: schema revision drifted since the variant was written",
        root_hint: "refresh the outdated memory variant drift against current schema",
        frames: ["loader", "stamp", "compare"],
        command: "make refresh-memory",
        path: "memory/bank.jsonl",
        env: ("BANK_VERSION", "7"),
        fix: "refresh the variant against the current schema revision",
        alt_frames: ["scan", "expire", "rewrite"],
        alt_command: "python tools/prune.py",
        alt_path: "tools/prune.py",
        alt_env: ("PRUNE_AGE", "30d"),
        alt_fix: "prune variants older than the current schema stamp",
        description: "memorized fix targets a schema the repo has moved past",
        vote_tokens: ["variant", "drift"],
        acceptance: PAIRED_ACCEPTANCE,
        fp_history: PAIRED_FP,
    },
    FamilySpec {
        family: FailureFamily::MigrationOrderMismatch,
        error_text: "migration revision order conflict: version graph has circular dependency in schema history",
        root_hint: "reorder migrations topological sort of the revision dag fixes apply order",
        frames: ["resolver", "toposort", "walk"],
        command: "alembic history",
        path: "migrations/graph.dot",
        env: ("REVISION_MAP", "auto"),
        fix: "linearize the revision graph and re-stamp the head",
        alt_frames: ["plan", "merge", "linearize"],
        alt_command: "python manage.py showmigrations",
        alt_path: "manage.py",
        alt_env: ("DJANGO_SETTINGS", "dev"),
        alt_fix: "merge the divergent migration branches before deploying",
        description: "two migration branches apply in conflicting order",
        vote_tokens: ["topological", "reorder"],
        acceptance: PAIRED_ACCEPTANCE,
        fp_history: PAIRED_FP,
    },
    FamilySpec {
        family: FailureFamily::CorruptedLocalState,
        error_text: "local state cache corrupted: checksum verification failed while loading saved index",
        root_hint: "clear and rebuild the cache directory then reload state",
        frames: ["verify", "restore", "mmap"],
        command: "rm -rf .cache",
        path: "var/cache/state.bin",
        env: ("CACHE_DIR", ".cache"),
        fix: "clear the cache directory and rebuild the local index",
        alt_frames: ["compact", "fsck", "replay"],
        alt_command: "python -m app.rebuild",
        alt_path: "app/rebuild.py",
        alt_env: ("STATE_VERSION", "2"),
        alt_fix: "run the rebuild entrypoint to regenerate local state",
        description: "on-disk state no longer matches its checksum",
        vote_tokens: ["corrupted", "checksum"],
        acceptance: CLEAN_ACCEPTANCE,
        fp_history: CLEAN_FP,
    },
    FamilySpec {
        family: FailureFamily::MissingBackupDir,
        error_text: "KeyError during config lookup: backup destination directory is absent on this host",
        root_hint: "create the backup dir mkdir before the nightly job runs",
        frames: ["ensure", "copy", "archive"],
        command: "mkdir -p /var/backups/app",
        path: "var/backups/app",
        env: ("BACKUP_DIR", "/var/backups/app"),
        fix: "create the backup directory before the nightly job",
        alt_frames: ["schedule", "mount", "mkdirs"],
        alt_command: "systemctl status backup.timer",
        alt_path: "etc/cron.d/backup",
        alt_env: ("CRON_USER", "root"),
        alt_fix: "provision the destination in the host bootstrap script",
        description: "backup job fails because its destination never existed",
        vote_tokens: ["backup", "mkdir"],
        acceptance: PAIRED_ACCEPTANCE,
        fp_history: PAIRED_FP,
    },
    FamilySpec {
        family: FailureFamily::InvalidConfigKey,
        error_text: "KeyError during config lookup: unknown option retention for internal service",
        root_hint: "invalid config key rename retention to retention days in config",
        frames: ["parser", "get", "validate"],
        command: "cat config.yaml",
        path: "etc/app/config.yaml",
        env: ("CONFIG_PATH", "/etc/app/config.yaml"),
        fix: "rename the key to the schema-accepted option name",
        alt_frames: ["lint", "coerce", "defaults"],
        alt_command: "yamllint config.yaml",
        alt_path: "schemas/config.schema.json",
        alt_env: ("SCHEMA_STRICT", "1"),
        alt_fix: "validate the config against the schema and fix the key",
        description: "config references an option the service never defined",
        vote_tokens: ["invalid", "unknown"],
        acceptance: PAIRED_ACCEPTANCE,
        fp_history: PAIRED_FP,
    },
    FamilySpec {
        family: FailureFamily::RuntimeEvidenceGap,
        error_text: "diagnostic evidence insufficient: runtime trace unavailable and logs truncated",
        root_hint: "enable verbose logging instrument the handler to capture a full trace",
        frames: ["logger", "emit", "flush"],
        command: "tail -f var/log/app.log",
        path: "var/log/app.log",
        env: ("LOG_LEVEL", "info"),
        fix: "raise the log level and reproduce with tracing enabled",
        alt_frames: ["rotate", "attach", "sample"],
        alt_command: "journalctl -u app",
        alt_path: "etc/logrotate.d/app",
        alt_env: ("TRACE_ID", "none"),
        alt_fix: "attach the tracer and capture a full failure sample",
        description: "not enough runtime evidence to diagnose anything",
        vote_tokens: ["diagnostic", "verbose"],
        acceptance: CLEAN_ACCEPTANCE,
        fp_history: CLEAN_FP,
    },
];

/// Sixteenth record: a second flavor of duplicate-server failures, so the
/// smoke bank carries two patterns in one family.
pub const EXTRA_SPEC: FamilySpec = FamilySpec {
    family: FailureFamily::DuplicateServerInstance,
    error_text: "server spawn loop detected: supervisor restarts api instance and port stays bound",
    root_hint: "disable the supervisor watchdog stop the daemon before manual debugging",
    frames: ["respawn", "monitor", "backoff"],
    command: "supervisorctl status api",
    path: "etc/supervisor/conf.d/api.conf",
    env: ("SUPERVISOR_GROUP", "api"),
    fix: "stop the supervisor group before debugging by hand",
    alt_frames: ["orchestrate", "healthcheck", "requeue"],
    alt_command: "docker compose ps",
    alt_path: "docker-compose.yml",
    alt_env: ("COMPOSE_PROJECT", "api"),
    alt_fix: "bring the compose stack down before local runs",
    description: "supervisor respawn loop keeps the port occupied",
    vote_tokens: ["port", "bind"],
    acceptance: CLEAN_ACCEPTANCE,
    fp_history: CLEAN_FP,
};

/// The five confusable pairs: `(family_a, family_b, shared surface text)`.
/// The surface tokens appear in both members' symptom sets.
pub const CONFUSABLE_PAIRS: [(FailureFamily, FailureFamily, &str); 5] = [
    (
        FailureFamily::SqliteInitLocking,
        FailureFamily::StaleMigration,
        "SQLite OperationalError database is locked",
    ),
    (
        FailureFamily::WrongVirtualenv,
        FailureFamily::WrongPythonpath,
        "ModuleNotFoundError no module named app",
    ),
    (
        FailureFamily::InvalidConfigKey,
        FailureFamily::MissingBackupDir,
        "KeyError during config lookup",
    ),
    (
        FailureFamily::RetrievalFalsePositive,
        FailureFamily::RejectedMemoryReuse,
        "retrieved memory hint suggested",
    ),
    (
        FailureFamily::OutdatedMemoryVariant,
        FailureFamily::MigrationOrderMismatch,
        "version revision schema",
    ),
];

/// Fixed synonym table for the paraphrase transform. Keys are normalized
/// tokens. Most targets stay outside every pattern's vocabulary, so
/// substitution removes family-specific evidence; a few entries drift
/// deliberately into the confusable partner's vocabulary (`run`/`execute`,
/// `internal`/`host`, `record`/`log`), which is how paraphrased bug reports
/// blur the pair boundary in practice.
pub const SYNONYMS: [(&str, &str); 81] = [
    // generic error vocabulary
    ("error", "failure"),
    ("failed", "failing"),
    ("timeout", "deadline"),
    ("busy", "blocked"),
    ("write", "writes"),
    ("expired", "elapsed"),
    // stale_migration vocabulary
    ("table", "relation"),
    ("users", "accounts"),
    ("missing", "gone"),
    ("after", "following"),
    ("deploy", "rollout"),
    ("stale", "old"),
    ("migration", "migrate"),
    ("run", "execute"),
    ("upgrade", "update"),
    ("head", "tip"),
    ("apply", "adopt"),
    ("latest", "newest"),
    ("revision", "rev"),
    ("script", "snippet"),
    ("runtime", "runner"),
    ("alembic", "migrator"),
    // wrong_pythonpath vocabulary
    ("although", "though"),
    ("sources", "trees"),
    ("live", "reside"),
    ("under", "beneath"),
    ("src", "tree"),
    ("pythonpath", "syspath"),
    ("export", "publish"),
    ("onto", "to"),
    ("import", "include"),
    ("path", "route"),
    ("finder", "locator"),
    ("machinery", "internals"),
    ("pathfinder", "searcher"),
    // invalid_config_key vocabulary
    ("unknown", "unrecognized"),
    ("option", "setting"),
    ("retention", "expiry"),
    ("internal", "host"),
    ("service", "svc"),
    ("invalid", "bad"),
    ("key", "field"),
    ("rename", "relabel"),
    ("days", "durations"),
    ("parser", "decoder"),
    ("get", "fetch"),
    ("validate", "audit"),
    // rejected_memory_reuse vocabulary
    ("declined", "refused"),
    ("twice", "repeatedly"),
    ("reviewer", "maintainer"),
    ("rejected", "vetoed"),
    ("reuse", "recycling"),
    ("suggested", "proposed"),
    ("says", "notes"),
    ("decline", "refuse"),
    ("respect", "honor"),
    ("rejection", "refusal"),
    ("state", "status"),
    ("handler", "callback"),
    ("reject", "deny"),
    ("record", "log"),
    ("session", "conversation"),
    ("feedback", "reactions"),
    // migration_order_mismatch vocabulary
    ("order", "ordering"),
    ("conflict", "clash"),
    ("circular", "cyclic"),
    ("dependency", "dep"),
    ("history", "chronology"),
    ("reorder", "resequence"),
    ("migrations", "migrates"),
    ("topological", "layered"),
    ("sort", "sorting"),
    ("dag", "lattice"),
    ("fixes", "remedies"),
    ("graph", "web"),
    ("resolver", "mapper"),
    ("toposort", "layering"),
    ("walk", "traverse"),
    // retrieval vocabulary shared by pair four
    ("misapplied", "misused"),
    ("regression", "setback"),
    ("reverted", "undone"),
];

/// Filler tokens used by the noise-insertion paraphrase; none of them
/// appears in any pattern token set.
pub const NOISE_TOKENS: [&str; 8] = [
    "please", "urgent", "suddenly", "weird", "yesterday", "somehow", "strange", "randomly",
];

impl FamilySpec {
    pub fn index(&self) -> usize {
        FailureFamily::ALL
            .iter()
            .position(|f| *f == self.family)
            .unwrap()
    }
}

/// Spec for a family, from the primary table.
pub fn spec_for(family: FailureFamily) -> &'static FamilySpec {
    &FAMILY_SPECS[FailureFamily::ALL.iter().position(|f| *f == family).unwrap()]
}
