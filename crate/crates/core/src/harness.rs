//! Injecting generated tests into the subject project and running them.
//!
//! A generated test goes into the existing test file it most resembles
//! (set-Jaccard over identifier tokens). The project's own compile and test
//! commands are run with the injected file on disk, the outcome is classified
//! from exit codes and runner output, and the file is put back byte-for-byte
//! afterwards no matter what happened.

use std::collections::BTreeSet;
use std::io::Read;
use std::path::{Path, PathBuf};
use std::process::{Command, Stdio};
use std::sync::{LazyLock, Mutex};
use std::time::{Duration, Instant};

use globset::{Glob, GlobSetBuilder};
use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::import_lines;
use crate::java;
use crate::llm::GeneratedTestSource;
use crate::source::package_name;

pub const DEFAULT_TIMEOUT_S: u64 = 300;
pub const DEFAULT_LOG_EXCERPT_BYTES: usize = 16 * 1024;
/// JUnit 4 text runner, JUnit 5 console launcher, and Maven/Gradle style summaries.
pub const DEFAULT_PASS_REGEX: &str =
    r"(?mi)(^OK \(\d+ tests?\)|\b[1-9]\d* tests? successful|Tests run: [1-9]\d*,\s+Failures: 0,\s+Errors: 0\b|\b[1-9]\d* run, 0 failed)";
pub const DEFAULT_FAIL_REGEX: &str =
    r"(?mi)(FAILURES!!!|\b[1-9]\d* tests? failed|Failures: [1-9]\d*|Errors: [1-9]\d*|\b\d+ run, [1-9]\d* failed)";

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("no candidate test files")]
    NoTestFiles,
    #[error("cannot locate the closing brace of the host class")]
    UnbalancedHost,
    #[error("outcomes belong to more than one comment ({0} and {1})")]
    MixedComments(String, String),
    #[error("invalid pattern: {0}")]
    Pattern(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

fn default_timeout_s() -> u64 {
    DEFAULT_TIMEOUT_S
}
fn default_pass_regex() -> String {
    DEFAULT_PASS_REGEX.to_string()
}
fn default_fail_regex() -> String {
    DEFAULT_FAIL_REGEX.to_string()
}
fn default_log_excerpt_bytes() -> usize {
    DEFAULT_LOG_EXCERPT_BYTES
}

/// How to build and test one subject project.
///
/// `test_cmd` may use `{class}` (fully qualified host test class),
/// `{method}` (the injected test method) and `{file}` (host file path
/// relative to `root`). Commands run through `sh -c` with `root` as the
/// working directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProjectConfig {
    pub root: PathBuf,
    pub test_globs: Vec<String>,
    #[serde(default)]
    pub compile_cmd: String,
    pub test_cmd: String,
    #[serde(default = "default_pass_regex")]
    pub pass_regex: String,
    #[serde(default = "default_fail_regex")]
    pub fail_regex: String,
    #[serde(default = "default_timeout_s")]
    pub timeout_s: u64,
    #[serde(default = "default_log_excerpt_bytes")]
    pub log_excerpt_bytes: usize,
}

impl ProjectConfig {
    /// Files under `root` matching `test_globs`, as sorted root-relative paths.
    pub fn test_files(&self) -> Result<Vec<PathBuf>, HarnessError> {
        let mut builder = GlobSetBuilder::new();
        for g in &self.test_globs {
            builder.add(Glob::new(g).map_err(|e| HarnessError::Pattern(e.to_string()))?);
        }
        let set = builder.build().map_err(|e| HarnessError::Pattern(e.to_string()))?;
        let mut files = Vec::new();
        for entry in walkdir::WalkDir::new(&self.root).sort_by_file_name() {
            let entry = entry.map_err(|e| HarnessError::Io(e.into()))?;
            if !entry.file_type().is_file() {
                continue;
            }
            let rel = entry.path().strip_prefix(&self.root).unwrap_or(entry.path());
            if set.is_match(rel) {
                files.push(rel.to_path_buf());
            }
        }
        files.sort();
        Ok(files)
    }

    fn regexes(&self) -> Result<(Regex, Regex), HarnessError> {
        let pass = Regex::new(&self.pass_regex).map_err(|e| HarnessError::Pattern(e.to_string()))?;
        let fail = Regex::new(&self.fail_regex).map_err(|e| HarnessError::Pattern(e.to_string()))?;
        Ok((pass, fail))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InjectionPlan {
    pub test: GeneratedTestSource,
    /// Relative to the project root.
    pub host_file: PathBuf,
    /// Byte offset in the injected file where `test.source` begins.
    pub insertion_offset: usize,
    pub added_imports: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TestStatus {
    Pass,
    Fail,
    CompileError,
    Timeout,
    HarnessError,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct TestId {
    pub comment_id: String,
    pub property_index: usize,
    pub ordinal: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExecutionOutcome {
    pub test_id: TestId,
    pub status: TestStatus,
    pub log_excerpt: String,
    /// Wall-clock seconds for compile plus test.
    pub duration: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TestTally {
    pub comment_id: String,
    pub n_pass: u32,
    pub n_fail: u32,
    pub n_nocompile: u32,
    /// Timeouts and harness errors.
    pub n_excluded: u32,
}

impl TestTally {
    pub fn total(&self) -> u32 {
        self.n_pass + self.n_fail + self.n_nocompile + self.n_excluded
    }

    /// Pass/fail outcomes, the only ones that carry evidence.
    pub fn scoreable(&self) -> u32 {
        self.n_pass + self.n_fail
    }
}

static IDENT_RUN: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"[A-Za-z0-9_]+").unwrap());

fn token_set(text: &str) -> BTreeSet<&str> {
    IDENT_RUN.find_iter(text).map(|m| m.as_str()).collect()
}

/// Jaccard similarity of the identifier-token sets of `a` and `b`.
/// Two token-free texts are identical (1.0).
pub fn token_similarity(a: &str, b: &str) -> f64 {
    let ta = token_set(a);
    let tb = token_set(b);
    let union = ta.union(&tb).count();
    if union == 0 {
        return 1.0;
    }
    ta.intersection(&tb).count() as f64 / union as f64
}

/// The candidate whose contents are most similar to the test; ties go to the
/// lexicographically smallest path.
pub fn choose_host_among<'a>(
    test: &GeneratedTestSource,
    candidates: &'a [(PathBuf, String)],
) -> Result<&'a (PathBuf, String), HarnessError> {
    let mut best: Option<(&(PathBuf, String), f64)> = None;
    for cand in candidates {
        let sim = token_similarity(&test.source, &cand.1);
        best = match best {
            None => Some((cand, sim)),
            Some((b, bs)) if sim > bs || (sim == bs && cand.0 < b.0) => Some((cand, sim)),
            keep => keep,
        };
    }
    best.map(|(c, _)| c).ok_or(HarnessError::NoTestFiles)
}

/// Read each file and pick the most similar one.
pub fn choose_host_file(test: &GeneratedTestSource, test_files: &[PathBuf]) -> Result<PathBuf, HarnessError> {
    if test_files.is_empty() {
        return Err(HarnessError::NoTestFiles);
    }
    let candidates = test_files
        .iter()
        .map(|p| Ok((p.clone(), std::fs::read_to_string(p)?)))
        .collect::<Result<Vec<_>, std::io::Error>>()?;
    Ok(choose_host_among(test, &candidates)?.0.clone())
}

fn normalize_import(line: &str) -> String {
    line.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Insert the test before the closing brace of the last top-level class and
/// add whichever of its imports the host lacks. Everything else is kept.
pub fn inject_test(
    test: &GeneratedTestSource,
    host_file: &Path,
    host_contents: &str,
) -> Result<(String, InjectionPlan), HarnessError> {
    let tokens = java::tokenize(host_contents);
    let last = java::top_level_types(host_contents, &tokens)
        .into_iter()
        .last()
        .ok_or(HarnessError::UnbalancedHost)?;
    let close = last.body_close.ok_or(HarnessError::UnbalancedHost)?;
    let brace_pos = tokens[close].start;

    let mut present: BTreeSet<String> = import_lines(host_contents).iter().map(|l| normalize_import(l)).collect();
    let mut added_imports = Vec::new();
    for imp in &test.imports {
        if present.insert(normalize_import(imp)) {
            added_imports.push(imp.trim().to_string());
        }
    }

    let (import_pos, import_block) = if added_imports.is_empty() {
        (0, String::new())
    } else {
        let package_end = tokens
            .first()
            .filter(|t| t.is_ident(host_contents, "package"))
            .and_then(|_| tokens.iter().find(|t| t.is_punct(';')))
            .map(|t| t.end);
        match package_end {
            Some(end) => (end, format!("\n{}", added_imports.join("\n"))),
            None => (0, format!("{}\n", added_imports.join("\n"))),
        }
    };

    let mut out = String::with_capacity(host_contents.len() + test.source.len() + import_block.len() + 2);
    out.push_str(&host_contents[..import_pos]);
    out.push_str(&import_block);
    out.push_str(&host_contents[import_pos..brace_pos]);
    out.push('\n');
    let insertion_offset = out.len();
    out.push_str(&test.source);
    out.push('\n');
    out.push_str(&host_contents[brace_pos..]);

    Ok((
        out,
        InjectionPlan {
            test: test.clone(),
            host_file: host_file.to_path_buf(),
            insertion_offset,
            added_imports,
        },
    ))
}

/// Fully qualified name of the class a test gets injected into.
pub fn host_class_name(host_contents: &str) -> Option<String> {
    let tokens = java::tokenize(host_contents);
    let class = java::top_level_types(host_contents, &tokens).into_iter().last()?.name;
    Some(match package_name(host_contents) {
        Some(pkg) => format!("{pkg}.{class}"),
        None => class,
    })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CommandOutput {
    /// `None` when killed by a signal or on timeout.
    pub exit_code: Option<i32>,
    /// stdout and stderr, interleaved as written.
    pub output: String,
    pub timed_out: bool,
}

pub trait CommandRunner: Send + Sync {
    fn run(&self, command: &str, cwd: &Path, timeout: Duration) -> std::io::Result<CommandOutput>;
}

/// Runs commands through `sh -c`, killing the whole process group on timeout.
#[derive(Debug, Default, Clone, Copy)]
pub struct ShellRunner;

impl CommandRunner for ShellRunner {
    fn run(&self, command: &str, cwd: &Path, timeout: Duration) -> std::io::Result<CommandOutput> {
        let mut log = tempfile::tempfile()?;
        let mut cmd = Command::new("sh");
        cmd.arg("-c")
            .arg(command)
            .current_dir(cwd)
            .stdin(Stdio::null())
            .stdout(log.try_clone()?)
            .stderr(log.try_clone()?);
        #[cfg(unix)]
        {
            use std::os::unix::process::CommandExt;
            cmd.process_group(0);
        }
        let mut child = cmd.spawn()?;
        let started = Instant::now();
        let (exit_code, timed_out) = loop {
            if let Some(status) = child.try_wait()? {
                break (status.code(), false);
            }
            if started.elapsed() >= timeout {
                kill_tree(&mut child);
                let _ = child.wait();
                break (None, true);
            }
            std::thread::sleep(Duration::from_millis(5));
        };
        use std::io::Seek;
        log.rewind()?;
        let mut bytes = Vec::new();
        log.read_to_end(&mut bytes)?;
        Ok(CommandOutput {
            exit_code,
            output: String::from_utf8_lossy(&bytes).into_owned(),
            timed_out,
        })
    }
}

fn kill_tree(child: &mut std::process::Child) {
    #[cfg(unix)]
    {
        // SAFETY: kill(2) with a negative pid signals the process group we created.
        unsafe {
            libc::kill(-(child.id() as libc::pid_t), libc::SIGKILL);
        }
    }
    let _ = child.kill();
}

fn render_command(template: &str, class: &str, method: &str, file: &Path) -> String {
    template
        .replace("{class}", class)
        .replace("{method}", method)
        .replace("{file}", &file.to_string_lossy())
}

fn excerpt(log: &str, max_bytes: usize) -> String {
    if log.len() <= max_bytes {
        return log.to_string();
    }
    let mut end = max_bytes;
    while !log.is_char_boundary(end) {
        end -= 1;
    }
    log[..end].to_string()
}

/// Puts the original bytes back when dropped.
struct RestoreGuard {
    path: PathBuf,
    original: Vec<u8>,
}

impl Drop for RestoreGuard {
    fn drop(&mut self) {
        if let Err(e) = std::fs::write(&self.path, &self.original) {
            // Nothing sensible to return from drop; make the failure loud.
            eprintln!("failed to restore {}: {e}", self.path.display());
        }
    }
}

/// Is this exit code the shell telling us the tool itself is missing?
fn tool_missing(code: Option<i32>) -> bool {
    matches!(code, Some(126 | 127))
}

/// Write the injected file, compile, run the single test, classify, restore.
///
/// Never fails: problems with the harness itself come back as
/// [`TestStatus::HarnessError`].
pub fn execute_test(
    project: &ProjectConfig,
    plan: &InjectionPlan,
    injected_contents: &str,
    comment_id: &str,
    runner: &dyn CommandRunner,
) -> ExecutionOutcome {
    let started = Instant::now();
    let test_id = TestId {
        comment_id: comment_id.to_string(),
        property_index: plan.test.property_index,
        ordinal: plan.test.ordinal,
    };
    let (status, log) = match run_injected(project, plan, injected_contents, runner) {
        Ok(r) => r,
        Err(e) => (TestStatus::HarnessError, format!("harness error: {e}")),
    };
    ExecutionOutcome {
        test_id,
        status,
        log_excerpt: excerpt(&log, project.log_excerpt_bytes),
        duration: started.elapsed().as_secs_f64(),
    }
}

fn run_injected(
    project: &ProjectConfig,
    plan: &InjectionPlan,
    injected_contents: &str,
    runner: &dyn CommandRunner,
) -> Result<(TestStatus, String), HarnessError> {
    let (pass_re, fail_re) = project.regexes()?;
    let host_path = project.root.join(&plan.host_file);
    let original = std::fs::read(&host_path)?;
    let class = host_class_name(injected_contents).ok_or(HarnessError::UnbalancedHost)?;
    let _guard = RestoreGuard {
        path: host_path.clone(),
        original,
    };
    std::fs::write(&host_path, injected_contents)?;

    let timeout = Duration::from_secs(project.timeout_s);
    let mut log = String::new();
    if !project.compile_cmd.trim().is_empty() {
        let cmd = render_command(&project.compile_cmd, &class, &plan.test.method_name, &plan.host_file);
        let out = runner.run(&cmd, &project.root, timeout)?;
        log.push_str(&out.output);
        if out.timed_out {
            return Ok((TestStatus::Timeout, log));
        }
        if tool_missing(out.exit_code) {
            return Ok((TestStatus::HarnessError, log));
        }
        if out.exit_code != Some(0) {
            return Ok((TestStatus::CompileError, log));
        }
    }

    let cmd = render_command(&project.test_cmd, &class, &plan.test.method_name, &plan.host_file);
    let out = runner.run(&cmd, &project.root, timeout)?;
    log.push_str(&out.output);
    let status = if out.timed_out {
        TestStatus::Timeout
    } else if tool_missing(out.exit_code) {
        TestStatus::HarnessError
    } else if fail_re.is_match(&out.output) {
        TestStatus::Fail
    } else if pass_re.is_match(&out.output) {
        TestStatus::Pass
    } else {
        TestStatus::HarnessError
    };
    Ok((status, log))
}

/// Serializes executions against one working copy.
pub struct Harness {
    pub project: ProjectConfig,
    runner: Box<dyn CommandRunner>,
    lock: Mutex<()>,
}

impl Harness {
    pub fn new(project: ProjectConfig, runner: Box<dyn CommandRunner>) -> Self {
        Harness {
            project,
            runner,
            lock: Mutex::new(()),
        }
    }

    pub fn execute(&self, plan: &InjectionPlan, injected_contents: &str, comment_id: &str) -> ExecutionOutcome {
        let _held = self.lock.lock().unwrap_or_else(|p| p.into_inner());
        execute_test(&self.project, plan, injected_contents, comment_id, self.runner.as_ref())
    }
}

/// Count outcomes by status. Compile errors, timeouts and harness errors
/// are kept out of the pass/fail counts.
pub fn tally_outcomes(comment_id: &str, outcomes: &[ExecutionOutcome]) -> Result<TestTally, HarnessError> {
    let mut tally = TestTally {
        comment_id: comment_id.to_string(),
        ..TestTally::default()
    };
    for o in outcomes {
        if o.test_id.comment_id != comment_id {
            return Err(HarnessError::MixedComments(comment_id.to_string(), o.test_id.comment_id.clone()));
        }
        match o.status {
            TestStatus::Pass => tally.n_pass += 1,
            TestStatus::Fail => tally.n_fail += 1,
            TestStatus::CompileError => tally.n_nocompile += 1,
            TestStatus::Timeout | TestStatus::HarnessError => tally.n_excluded += 1,
        }
    }
    Ok(tally)
}
