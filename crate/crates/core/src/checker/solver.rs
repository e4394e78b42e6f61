//! External SMT solvers behind a common interface.
//!
//! Each supported solver family is a [`SmtBackend`] that knows how to build
//! the command line; backends are registered by name in a
//! [`BackendRegistry`] and picked from the executable name unless one is
//! named explicitly.

use std::collections::{BTreeMap, HashMap};
use std::io::{Read, Write};
use std::path::{Path, PathBuf};
use std::process::{Command, Stdio};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::thread;
use std::time::{Duration, Instant};

use num_bigint::BigInt;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::sexp::{integer_model, parse_all, Sexp};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SolverError {
    #[error("could not run solver `{path}`: {message}")]
    Spawn { path: String, message: String },
    #[error("solver i/o failed: {0}")]
    Io(String),
    #[error("unexpected solver output: {0}")]
    MalformedOutput(String),
    #[error("unknown solver backend `{0}`")]
    UnknownBackend(String),
}

/// A family of SMT-LIB2 solvers that read a script on standard input.
pub trait SmtBackend: Send + Sync {
    fn name(&self) -> &'static str;

    /// Whether an executable with this file name belongs to the family.
    fn recognizes(&self, file_name: &str) -> bool;

    /// Arguments that make the solver read standard input with a time limit.
    fn arguments(&self, timeout_ms: u64) -> Vec<String>;
}

struct Z3;

impl SmtBackend for Z3 {
    fn name(&self) -> &'static str {
        "z3"
    }

    fn recognizes(&self, file_name: &str) -> bool {
        file_name.starts_with("z3")
    }

    fn arguments(&self, timeout_ms: u64) -> Vec<String> {
        vec!["-in".into(), "-smt2".into(), format!("-t:{timeout_ms}")]
    }
}

struct Cvc5;

impl SmtBackend for Cvc5 {
    fn name(&self) -> &'static str {
        "cvc5"
    }

    fn recognizes(&self, file_name: &str) -> bool {
        file_name.starts_with("cvc5") || file_name.starts_with("cvc4")
    }

    fn arguments(&self, timeout_ms: u64) -> Vec<String> {
        vec!["--lang=smt2".into(), format!("--tlimit-per={timeout_ms}")]
    }
}

struct Yices;

impl SmtBackend for Yices {
    fn name(&self) -> &'static str {
        "yices"
    }

    fn recognizes(&self, file_name: &str) -> bool {
        file_name.starts_with("yices")
    }

    fn arguments(&self, timeout_ms: u64) -> Vec<String> {
        vec![format!("--timeout={}", timeout_ms.div_ceil(1000).max(1))]
    }
}

/// Any solver that reads SMT-LIB2 from standard input without options.
struct Generic;

impl SmtBackend for Generic {
    fn name(&self) -> &'static str {
        "generic"
    }

    fn recognizes(&self, _: &str) -> bool {
        false
    }

    fn arguments(&self, _: u64) -> Vec<String> {
        Vec::new()
    }
}

pub struct BackendRegistry {
    backends: BTreeMap<&'static str, Arc<dyn SmtBackend>>,
}

impl Default for BackendRegistry {
    fn default() -> Self {
        let mut r = BackendRegistry { backends: BTreeMap::new() };
        r.register(Arc::new(Z3));
        r.register(Arc::new(Cvc5));
        r.register(Arc::new(Yices));
        r.register(Arc::new(Generic));
        r
    }
}

impl BackendRegistry {
    pub fn register(&mut self, backend: Arc<dyn SmtBackend>) {
        self.backends.insert(backend.name(), backend);
    }

    pub fn names(&self) -> Vec<&'static str> {
        self.backends.keys().copied().collect()
    }

    pub fn get(&self, name: &str) -> Option<Arc<dyn SmtBackend>> {
        self.backends.get(name).cloned()
    }

    /// The backend for an executable, falling back to the generic one.
    pub fn for_executable(&self, path: &Path) -> Arc<dyn SmtBackend> {
        let file = path.file_name().and_then(|f| f.to_str()).unwrap_or_default().to_ascii_lowercase();
        self.backends
            .values()
            .find(|b| b.recognizes(&file))
            .cloned()
            .unwrap_or_else(|| self.backends["generic"].clone())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub path: PathBuf,
    /// Backend name; chosen from the executable name when absent.
    pub backend: Option<String>,
    pub logic: String,
    pub timeout_ms: u64,
    pub produce_models: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            path: PathBuf::from("z3"),
            backend: None,
            logic: "QF_NIA".into(),
            timeout_ms: 10_000,
            produce_models: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SolverAnswer {
    Sat(BTreeMap<String, BigInt>),
    Unsat,
    Unknown,
    Timeout,
}

/// Extra time granted after the solver's own limit before it is killed.
const GRACE: Duration = Duration::from_millis(1000);

/// Runs scripts on one configured solver, caching answers by script text.
pub struct Solver {
    config: SolverConfig,
    backend: Arc<dyn SmtBackend>,
    cache: Mutex<HashMap<String, SolverAnswer>>,
    emit_dir: Option<PathBuf>,
    emitted: AtomicUsize,
}

impl Solver {
    pub fn new(config: SolverConfig) -> Result<Solver, SolverError> {
        Solver::with_registry(config, &BackendRegistry::default())
    }

    pub fn with_registry(config: SolverConfig, registry: &BackendRegistry) -> Result<Solver, SolverError> {
        let backend = match &config.backend {
            Some(name) => registry.get(name).ok_or_else(|| SolverError::UnknownBackend(name.clone()))?,
            None => registry.for_executable(&config.path),
        };
        Ok(Solver { config, backend, cache: Mutex::new(HashMap::new()), emit_dir: None, emitted: AtomicUsize::new(0) })
    }

    /// Also write every script sent to the solver into `dir`.
    pub fn emit_to(mut self, dir: PathBuf) -> Self {
        self.emit_dir = Some(dir);
        self
    }

    pub fn config(&self) -> &SolverConfig {
        &self.config
    }

    pub fn backend_name(&self) -> &'static str {
        self.backend.name()
    }

    pub fn logic(&self) -> &str {
        &self.config.logic
    }

    pub fn produce_models(&self) -> bool {
        self.config.produce_models
    }

    fn emit(&self, label: &str, script: &str) -> Result<(), SolverError> {
        let Some(dir) = &self.emit_dir else { return Ok(()) };
        let n = self.emitted.fetch_add(1, Ordering::SeqCst);
        std::fs::create_dir_all(dir).map_err(|e| SolverError::Io(e.to_string()))?;
        let path = dir.join(format!("{n:04}-{label}.smt2"));
        std::fs::write(&path, script).map_err(|e| SolverError::Io(format!("{}: {e}", path.display())))
    }

    /// Runs `script` and classifies the first answer line.
    pub fn run(&self, label: &str, script: &str) -> Result<SolverAnswer, SolverError> {
        if let Some(hit) = self.cache.lock().expect("solver cache").get(script) {
            return Ok(hit.clone());
        }
        self.emit(label, script)?;
        let answer = self.run_uncached(script)?;
        self.cache.lock().expect("solver cache").insert(script.to_string(), answer.clone());
        Ok(answer)
    }

    fn run_uncached(&self, script: &str) -> Result<SolverAnswer, SolverError> {
        let path = self.config.path.display().to_string();
        let spawn_error = |e: std::io::Error| SolverError::Spawn { path: path.clone(), message: e.to_string() };
        let mut child = Command::new(&self.config.path)
            .args(self.backend.arguments(self.config.timeout_ms))
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::null())
            .spawn()
            .map_err(spawn_error)?;
        let mut stdout = child.stdout.take().expect("piped stdout");
        let reader = thread::spawn(move || {
            let mut out = String::new();
            stdout.read_to_string(&mut out).map(|_| out)
        });
        {
            let mut stdin = child.stdin.take().expect("piped stdin");
            // A solver that exits early closes the pipe; its output decides.
            let _ = stdin.write_all(script.as_bytes());
        }
        let deadline = Instant::now() + Duration::from_millis(self.config.timeout_ms) + GRACE;
        let mut killed = false;
        loop {
            match child.try_wait().map_err(|e| SolverError::Io(e.to_string()))? {
                Some(_) => break,
                None if Instant::now() >= deadline => {
                    let _ = child.kill();
                    let _ = child.wait();
                    killed = true;
                    break;
                }
                None => thread::sleep(Duration::from_millis(2)),
            }
        }
        let output = reader
            .join()
            .map_err(|_| SolverError::Io("output reader panicked".into()))?
            .map_err(|e| SolverError::Io(e.to_string()))?;
        if killed {
            return Ok(SolverAnswer::Timeout);
        }
        classify(&output)
    }
}

/// Interprets the solver's standard output.
pub fn classify(output: &str) -> Result<SolverAnswer, SolverError> {
    let items = parse_all(output);
    let first = items.iter().find_map(|i| match i {
        Sexp::Atom(a) => Some(a.as_str()),
        _ => None,
    });
    match first {
        Some("unsat") => Ok(SolverAnswer::Unsat),
        Some("sat") => Ok(SolverAnswer::Sat(integer_model(&items))),
        Some("unknown") => Ok(SolverAnswer::Unknown),
        Some("timeout") => Ok(SolverAnswer::Timeout),
        _ => Err(SolverError::MalformedOutput(output.lines().next().unwrap_or("").to_string())),
    }
}
