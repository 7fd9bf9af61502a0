use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::thread;

use sha2::{Digest, Sha256};

use super::artifacts::*;
use super::config::{embedded_labels, load_comments, CommentRecord, PipelineConfig};
use super::evaluate::{evaluate_runs, EvaluateOptions};
use super::store::{now_unix, write_json, Failure, RunDir, RunManifest, StageStatus, COMMENTS_FILE, CONFIG_FILE};
use super::{PipelineError, Stage, SCHEMA_VERSION};
use crate::corpus::{parse_test_file, rank_relevant_tests, sanitize_literals, CorpusError, TestCase};
use crate::estimator::correctness_score;
use crate::harness::{
    choose_host_among, inject_test, tally_outcomes, CommandRunner, ExecutionOutcome, Harness, ShellRunner, TestId,
    TestStatus,
};
use crate::llm::{
    parse_properties, parse_test_sources, render_prompt, BackendKind, Gateway, LlmError, PromptContext, TemplateId,
};
use crate::source::{extract_class_info, extract_method_signature, package_name};

pub const TRACE_FILE: &str = "llm_trace.jsonl";

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Stages to run; empty means all of them.
    pub stages: Vec<Stage>,
    pub w: Option<f64>,
    pub backend: Option<BackendKind>,
    pub run_id: Option<String>,
    /// Append every prompt and response to `llm_trace.jsonl` in the run directory.
    pub trace_llm: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub run_id: String,
    pub run_dir: PathBuf,
    /// (done, reused, failed) per stage that ran.
    pub stages: BTreeMap<Stage, (usize, usize, usize)>,
    pub failures: Vec<Failure>,
    /// Tests executed in this invocation that ended as harness errors.
    pub harness_errors: usize,
}

impl RunSummary {
    pub fn exit_code(&self) -> i32 {
        if self.failures.is_empty() && self.harness_errors == 0 {
            0
        } else {
            1
        }
    }
}

enum Outcome {
    Reused,
    Done { harness_errors: usize, durations: Vec<(String, f64)> },
    Failed(String),
}

impl Outcome {
    fn done() -> Self {
        Outcome::Done {
            harness_errors: 0,
            durations: Vec::new(),
        }
    }
}

/// Run `f` over `items` on up to `workers` threads; results keep input order.
fn parallel_map<T: Sync, R: Send>(items: &[T], workers: usize, f: impl Fn(&T) -> R + Sync) -> Vec<R> {
    if workers <= 1 || items.len() <= 1 {
        return items.iter().map(f).collect();
    }
    let next = AtomicUsize::new(0);
    let results: Mutex<Vec<Option<R>>> = Mutex::new((0..items.len()).map(|_| None).collect());
    thread::scope(|s| {
        for _ in 0..workers.min(items.len()) {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(item) = items.get(i) else { break };
                let r = f(item);
                results.lock().unwrap_or_else(|p| p.into_inner())[i] = Some(r);
            });
        }
    });
    results
        .into_inner()
        .unwrap_or_else(|p| p.into_inner())
        .into_iter()
        .map(|r| r.expect("every item processed"))
        .collect()
}

fn digest_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// `run-<unix seconds>`, suffixed if that directory already exists.
pub fn fresh_run_id(runs_dir: &Path) -> String {
    let base = format!("run-{}", now_unix() as u64);
    let mut id = base.clone();
    let mut n = 2;
    while runs_dir.join(&id).exists() {
        id = format!("{base}-{n}");
        n += 1;
    }
    id
}

/// A configured pipeline: gateway for completions, harness for execution.
pub struct Pipeline {
    pub config: PipelineConfig,
    pub config_digest: String,
    gateway: Gateway,
    harness: Harness,
}

/// Shared inputs a stage computes once, only if some comment needs them.
enum StageInput {
    None,
    Corpus(Vec<TestCase>),
    Hosts(Vec<(PathBuf, String)>),
    Broken(String),
}

impl Pipeline {
    pub fn new(config: PipelineConfig, config_bytes: &[u8], gateway: Gateway, runner: Box<dyn CommandRunner>) -> Self {
        Pipeline {
            harness: Harness::new(config.project.clone(), runner),
            config_digest: digest_hex(config_bytes),
            config,
            gateway,
        }
    }

    fn open_run(&self, run_id: Option<&str>) -> Result<(RunDir, RunManifest), PipelineError> {
        let runs_dir = &self.config.pipeline.runs_dir;
        let run = match run_id {
            Some(id) => {
                if id.is_empty() || id.contains(['/', '\\']) || id.starts_with('.') {
                    return Err(PipelineError::Config(format!("invalid run id {id:?}")));
                }
                RunDir::new(runs_dir, id)
            }
            None => RunDir::new(runs_dir, &fresh_run_id(runs_dir)),
        };
        let manifest = if run.manifest_path().is_file() {
            let m = run.read_manifest()?;
            if m.config_digest != self.config_digest {
                return Err(PipelineError::Config(format!(
                    "run {} was created with a different config; use a new run id",
                    run.run_id
                )));
            }
            m
        } else {
            RunManifest::new(&run.run_id, &self.config_digest, self.config.pipeline.w)
        };
        std::fs::create_dir_all(&run.path)?;
        Ok((run, manifest))
    }

    /// Run the requested stages for every comment. Per-comment problems are
    /// recorded in the manifest and summary; only problems with the run as a
    /// whole come back as errors.
    pub fn run(&self, comments: &[CommentRecord], opts: &RunOptions) -> Result<RunSummary, PipelineError> {
        let (run, mut manifest) = self.open_run(opts.run_id.as_deref())?;
        write_json(&run.path.join(CONFIG_FILE), &self.config)?;
        write_json(&run.path.join(COMMENTS_FILE), &comments)?;
        run.write_manifest(&manifest)?;

        let stages: Vec<Stage> = if opts.stages.is_empty() {
            Stage::ALL.to_vec()
        } else {
            opts.stages.clone()
        };
        let w = opts.w.unwrap_or(self.config.pipeline.w);
        let mut summary = RunSummary {
            run_id: run.run_id.clone(),
            run_dir: run.path.clone(),
            stages: BTreeMap::new(),
            failures: Vec::new(),
            harness_errors: 0,
        };

        for stage in stages {
            manifest.failures.retain(|f| f.stage != stage);
            let record = manifest.stages.entry(stage).or_default();
            record.started_unix = Some(now_unix());
            if stage == Stage::Evaluate {
                let (status, note) = self.evaluate_stage(&run, comments);
                let record = manifest.stages.entry(stage).or_default();
                record.status = status;
                record.note = note;
                record.finished_unix = Some(now_unix());
                summary.stages.insert(stage, (usize::from(status == StageStatus::Complete), 0, 0));
                run.write_manifest(&manifest)?;
                continue;
            }

            let input = self.stage_input(stage, &run, comments);
            let workers = match stage {
                Stage::Properties | Stage::Gentests => self.config.workers(),
                _ => 1,
            };
            let outcomes = parallel_map(comments, workers, |c| self.process(stage, &run, c, &input, w));

            let (mut done, mut reused, mut failed) = (0, 0, 0);
            for (c, outcome) in comments.iter().zip(outcomes) {
                match outcome {
                    Outcome::Reused => reused += 1,
                    Outcome::Done {
                        harness_errors,
                        durations,
                    } => {
                        done += 1;
                        summary.harness_errors += harness_errors;
                        manifest.test_durations.extend(durations);
                    }
                    Outcome::Failed(error) => {
                        failed += 1;
                        let f = Failure {
                            stage,
                            comment_id: c.comment_id.clone(),
                            error,
                        };
                        summary.failures.push(f.clone());
                        manifest.failures.push(f);
                    }
                }
            }
            let record = manifest.stages.entry(stage).or_default();
            record.status = if failed == 0 {
                StageStatus::Complete
            } else {
                StageStatus::Partial
            };
            record.finished_unix = Some(now_unix());
            record.n_done = done;
            record.n_reused = reused;
            record.n_failed = failed;
            record.note = None;
            if stage == Stage::Score && done > 0 {
                manifest.w = w;
            }
            summary.stages.insert(stage, (done, reused, failed));
            run.write_manifest(&manifest)?;
        }
        Ok(summary)
    }

    fn stage_input(&self, stage: Stage, run: &RunDir, comments: &[CommentRecord]) -> StageInput {
        let needed = comments.iter().any(|c| !run.has_artifact(stage, &c.comment_id));
        if !needed || !matches!(stage, Stage::Retrieve | Stage::Execute) {
            return StageInput::None;
        }
        let root = &self.config.project.root;
        let files = match self.config.project.test_files() {
            Ok(f) => f,
            Err(e) => return StageInput::Broken(e.to_string()),
        };
        let mut contents = Vec::with_capacity(files.len());
        for rel in files {
            match std::fs::read_to_string(root.join(&rel)) {
                Ok(text) => contents.push((rel, text)),
                Err(e) => return StageInput::Broken(format!("{}: {e}", rel.display())),
            }
        }
        if stage == Stage::Retrieve {
            StageInput::Corpus(contents.iter().flat_map(|(p, text)| parse_test_file(p, text)).collect())
        } else {
            StageInput::Hosts(contents)
        }
    }

    fn process(&self, stage: Stage, run: &RunDir, c: &CommentRecord, input: &StageInput, w: f64) -> Outcome {
        let id = &c.comment_id;
        if run.has_artifact(stage, id) {
            return Outcome::Reused;
        }
        if let Some(missing) = stage.prerequisites().iter().find(|&&p| !run.has_artifact(p, id)) {
            return Outcome::Failed(format!("missing {missing} artifact"));
        }
        if let StageInput::Broken(e) = input {
            return Outcome::Failed(e.clone());
        }
        let result = match stage {
            Stage::Extract => self.extract(run, c),
            Stage::Retrieve => self.retrieve(run, c, input),
            Stage::Properties => self.properties(run, c),
            Stage::Gentests => self.gentests(run, c),
            Stage::Execute => self.execute(run, c, input),
            Stage::Score => self.score(run, c, w),
            Stage::Evaluate => unreachable!("evaluate is run-level"),
        };
        result.unwrap_or_else(|e| Outcome::Failed(e.to_string()))
    }

    fn extract(&self, run: &RunDir, c: &CommentRecord) -> Result<Outcome, PipelineError> {
        let path = self.config.project.root.join(&c.subject_file);
        let src = std::fs::read_to_string(&path)
            .map_err(|e| PipelineError::Artifact(format!("{}: {e}", c.subject_file.display())))?;
        let signature = extract_method_signature(&src, &c.method_name, c.arity)
            .map_err(|e| PipelineError::Artifact(e.to_string()))?;
        let info = extract_class_info(&src, &c.subject_file).map_err(|e| PipelineError::Artifact(e.to_string()))?;
        let artifact = ExtractArtifact {
            schema_version: SCHEMA_VERSION,
            comment_id: c.comment_id.clone(),
            subject_file: c.subject_file.clone(),
            class_name: info.class_name,
            package: package_name(&src),
            signature,
            constructors: info.constructors,
        };
        run.write_artifact(Stage::Extract, &c.comment_id, &artifact)?;
        Ok(Outcome::done())
    }

    fn retrieve(&self, run: &RunDir, c: &CommentRecord, input: &StageInput) -> Result<Outcome, PipelineError> {
        let ex: ExtractArtifact = run.read_artifact(Stage::Extract, &c.comment_id)?;
        let corpus: &[TestCase] = match input {
            StageInput::Corpus(tests) => tests,
            _ => &[],
        };
        let k = self.config.pipeline.examples_k;
        let mut examples = match rank_relevant_tests(corpus, &ex.class_name, &ex.signature, k) {
            Ok(tests) => tests,
            Err(CorpusError::EmptyCorpus) => Vec::new(),
        };
        let sanitized = self.config.pipeline.sanitize_examples;
        if sanitized {
            for t in &mut examples {
                t.body = sanitize_literals(&t.body);
            }
        }
        let artifact = RetrieveArtifact {
            schema_version: SCHEMA_VERSION,
            comment_id: c.comment_id.clone(),
            sanitized,
            examples,
        };
        run.write_artifact(Stage::Retrieve, &c.comment_id, &artifact)?;
        Ok(Outcome::done())
    }

    fn properties(&self, run: &RunDir, c: &CommentRecord) -> Result<Outcome, PipelineError> {
        let ex: ExtractArtifact = run.read_artifact(Stage::Extract, &c.comment_id)?;
        let prompt = property_prompt(c, &ex)?;
        let response = self.complete(&prompt)?;
        let properties = match parse_properties(&response, self.config.pipeline.property_cap) {
            Ok(p) => p,
            Err(LlmError::NoPropertiesFound) => Vec::new(),
            Err(e) => return Err(PipelineError::Artifact(e.to_string())),
        };
        let artifact = PropertiesArtifact {
            schema_version: SCHEMA_VERSION,
            comment_id: c.comment_id.clone(),
            prompt_digest: prompt.digest,
            response,
            properties,
        };
        run.write_artifact(Stage::Properties, &c.comment_id, &artifact)?;
        Ok(Outcome::done())
    }

    fn gentests(&self, run: &RunDir, c: &CommentRecord) -> Result<Outcome, PipelineError> {
        let ex: ExtractArtifact = run.read_artifact(Stage::Extract, &c.comment_id)?;
        let rt: RetrieveArtifact = run.read_artifact(Stage::Retrieve, &c.comment_id)?;
        let pa: PropertiesArtifact = run.read_artifact(Stage::Properties, &c.comment_id)?;
        let mut properties = Vec::with_capacity(pa.properties.len());
        for spec in &pa.properties {
            let prompt = test_prompt(&ex, &rt, &spec.to_line())?;
            let response = self.complete(&prompt)?;
            let (tests, parse_error) = match parse_test_sources(&response, spec.index) {
                Ok(t) => (t, None),
                Err(e) => (Vec::new(), Some(e.to_string())),
            };
            properties.push(PropertyTests {
                property_index: spec.index,
                property: spec.to_line(),
                prompt_digest: prompt.digest,
                response,
                tests,
                parse_error,
            });
        }
        let artifact = GentestsArtifact {
            schema_version: SCHEMA_VERSION,
            comment_id: c.comment_id.clone(),
            properties,
        };
        run.write_artifact(Stage::Gentests, &c.comment_id, &artifact)?;
        Ok(Outcome::done())
    }

    fn execute(&self, run: &RunDir, c: &CommentRecord, input: &StageInput) -> Result<Outcome, PipelineError> {
        let ga: GentestsArtifact = run.read_artifact(Stage::Gentests, &c.comment_id)?;
        let hosts: &[(PathBuf, String)] = match input {
            StageInput::Hosts(h) => h,
            _ => &[],
        };
        let mut outcomes = Vec::new();
        let mut durations = Vec::new();
        let mut harness_errors = 0;
        for test in ga.properties.iter().flat_map(|p| &p.tests) {
            let test_id = TestId {
                comment_id: c.comment_id.clone(),
                property_index: test.property_index,
                ordinal: test.ordinal,
            };
            let recorded = match choose_host_among(test, hosts)
                .and_then(|(path, contents)| inject_test(test, path, contents))
            {
                Ok((injected, plan)) => {
                    let out = self.harness.execute(&plan, &injected, &c.comment_id);
                    durations.push((
                        format!("{}/{}/{}", c.comment_id, test.property_index, test.ordinal),
                        out.duration,
                    ));
                    RecordedOutcome {
                        test_id,
                        method_name: test.method_name.clone(),
                        host_file: Some(plan.host_file),
                        status: out.status,
                        log_excerpt: out.log_excerpt,
                    }
                }
                Err(e) => RecordedOutcome {
                    test_id,
                    method_name: test.method_name.clone(),
                    host_file: None,
                    status: TestStatus::HarnessError,
                    log_excerpt: format!("harness error: {e}"),
                },
            };
            harness_errors += usize::from(recorded.status == TestStatus::HarnessError);
            outcomes.push(recorded);
        }
        let artifact = ExecuteArtifact {
            schema_version: SCHEMA_VERSION,
            comment_id: c.comment_id.clone(),
            outcomes,
        };
        run.write_artifact(Stage::Execute, &c.comment_id, &artifact)?;
        Ok(Outcome::Done {
            harness_errors,
            durations,
        })
    }

    fn score(&self, run: &RunDir, c: &CommentRecord, w: f64) -> Result<Outcome, PipelineError> {
        let ea: ExecuteArtifact = run.read_artifact(Stage::Execute, &c.comment_id)?;
        let outcomes: Vec<ExecutionOutcome> = ea
            .outcomes
            .iter()
            .map(|o| ExecutionOutcome {
                test_id: o.test_id.clone(),
                status: o.status,
                log_excerpt: String::new(),
                duration: 0.0,
            })
            .collect();
        let tally = tally_outcomes(&c.comment_id, &outcomes).map_err(|e| PipelineError::Artifact(e.to_string()))?;
        let score = correctness_score(&tally, w).map_err(|e| PipelineError::Config(e.to_string()))?;
        let artifact = ScoreArtifact {
            schema_version: SCHEMA_VERSION,
            comment_id: c.comment_id.clone(),
            tally,
            score,
        };
        run.write_artifact(Stage::Score, &c.comment_id, &artifact)?;
        Ok(Outcome::done())
    }

    /// Evaluate against labels embedded in the comments, when there are enough.
    fn evaluate_stage(&self, run: &RunDir, comments: &[CommentRecord]) -> (StageStatus, Option<String>) {
        let labels = embedded_labels(comments);
        if labels.is_empty() {
            return (StageStatus::Skipped, Some("no labels in the comments file".into()));
        }
        let result = evaluate_runs(std::slice::from_ref(run), &labels, &EvaluateOptions::default())
            .and_then(|report| report.save(run, &labels));
        match result {
            Ok(()) => (StageStatus::Complete, None),
            Err(e @ PipelineError::InsufficientLabels { .. }) => (StageStatus::Skipped, Some(e.to_string())),
            Err(e) => (StageStatus::Partial, Some(e.to_string())),
        }
    }

    fn complete(&self, prompt: &crate::llm::PromptBundle) -> Result<String, PipelineError> {
        self.gateway
            .complete(prompt)
            .map_err(|e| PipelineError::Artifact(format!("{} completion: {e}", prompt.template_id)))
    }
}

fn render(template: TemplateId, pairs: &[(&str, String)]) -> Result<crate::llm::PromptBundle, PipelineError> {
    let ctx: PromptContext = pairs.iter().map(|(k, v)| (k.to_string(), v.clone())).collect();
    render_prompt(template, &ctx).map_err(|e| PipelineError::Artifact(e.to_string()))
}

/// The property-extraction prompt for a comment.
pub fn property_prompt(
    c: &CommentRecord,
    ex: &ExtractArtifact,
) -> Result<crate::llm::PromptBundle, PipelineError> {
    render(
        TemplateId::PropertyExtract,
        &[("comment", c.comment_text.clone()), ("signature", ex.signature.raw_text.clone())],
    )
}

/// The test-generation prompt for one property line.
pub fn test_prompt(
    ex: &ExtractArtifact,
    rt: &RetrieveArtifact,
    property_line: &str,
) -> Result<crate::llm::PromptBundle, PipelineError> {
    let constructors = if ex.constructors.is_empty() {
        "(none declared)".to_string()
    } else {
        ex.constructors.iter().map(|s| s.raw_text.as_str()).collect::<Vec<_>>().join("\n")
    };
    let examples = if rt.examples.is_empty() {
        "(none found)".to_string()
    } else {
        rt.examples.iter().map(|t| t.body.as_str()).collect::<Vec<_>>().join("\n\n")
    };
    render(
        TemplateId::TestGen,
        &[
            ("class_name", ex.class_name.clone()),
            ("constructors", constructors),
            ("signature", ex.signature.raw_text.clone()),
            ("example_tests", examples),
            ("property", property_line.to_string()),
        ],
    )
}

/// Load config and comments, apply overrides, and run with the shell runner.
pub fn run_pipeline(config_path: &Path, comments_path: &Path, opts: &RunOptions) -> Result<RunSummary, PipelineError> {
    let (mut config, bytes) = PipelineConfig::load(config_path)?;
    if let Some(kind) = opts.backend {
        config.backend.kind = kind;
    }
    if let Some(w) = opts.w {
        config.pipeline.w = w;
    }
    config.validate()?;
    let comments = load_comments(comments_path)?;
    let mut opts = opts.clone();
    let run_id = opts
        .run_id
        .get_or_insert_with(|| fresh_run_id(&config.pipeline.runs_dir))
        .clone();
    let mut gateway = Gateway::from_config(&config.backend).map_err(|e| PipelineError::Config(e.to_string()))?;
    if opts.trace_llm {
        let path = config.pipeline.runs_dir.join(&run_id).join(TRACE_FILE);
        gateway = gateway.with_trace(&path).map_err(|e| PipelineError::Config(e.to_string()))?;
    }
    let pipeline = Pipeline::new(config, &bytes, gateway, Box::new(ShellRunner));
    pipeline.run(&comments, &opts)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parallel_map_keeps_order() {
        let items: Vec<u32> = (0..50).collect();
        let out = parallel_map(&items, 4, |x| x * 2);
        assert_eq!(out, items.iter().map(|x| x * 2).collect::<Vec<_>>());
        assert_eq!(parallel_map(&items, 1, |x| x + 1)[49], 50);
    }
}
