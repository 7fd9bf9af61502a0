//! A small subject project driven by shell scripts, plus canned completions.
//!
//! "Compiling" fails when a test mentions an unknown symbol; "running" a test
//! fails when its body matches a pattern in `failing.txt`, i.e. asserts a
//! behavior the code does not have.

#![allow(dead_code)]

use std::path::{Path, PathBuf};

use docprobe_core::llm::parse_properties;
use docprobe_core::pipeline::{
    load_comments, property_prompt, run_pipeline, test_prompt, ExtractArtifact, RetrieveArtifact, RunDir,
    RunOptions, Stage,
};
use sha2::{Digest, Sha256};

const CALC: &str = r#"package calc;

public class Calc {
    private final double scale;

    public Calc() {
        this(1.0);
    }

    public Calc(double scale) {
        this.scale = scale;
    }

    public int add(int a, int b) {
        return a + b;
    }

    public int negate(int x) {
        return -x;
    }

    public int divide(int a, int b) {
        return a / b;
    }

    public double shape(double k) {
        if (k <= 0) {
            return Double.NaN;
        }
        return k * scale;
    }
}
"#;

const CALC_TEST: &str = r#"package calc;

import org.junit.Test;
import static org.junit.Assert.assertEquals;

public class CalcTest {
    @Test
    public void addsSmallNumbers() {
        assertEquals(3, new Calc().add(1, 2));
    }

    @Test
    public void scalesShape() {
        assertEquals(4.0, new Calc(2.0).shape(2.0), 1e-9);
    }
}
"#;

const MISC_TEST: &str = r#"package calc;

import org.junit.Test;
import static org.junit.Assert.assertEquals;

public class MiscTest {
    @Test
    public void negatesZero() {
        assertEquals(0, new Calc().negate(0));
    }
}
"#;

const COMPILE_SH: &str = r#"#!/bin/sh
if grep -q undefinedSymbol "$1"; then
  echo "$1: error: cannot find symbol undefinedSymbol"
  exit 1
fi
"#;

const CHECK_SH: &str = r#"#!/bin/sh
body=$(awk -v m="void $2(" 'index($0, m) { p = 1 } p { print } p && /^[[:space:]]*}[[:space:]]*$/ { exit }' "$1")
if printf '%s\n' "$body" | grep -q -F -f failing.txt; then
  echo "There was 1 failure:"
  echo "1) $2($3)"
  echo "java.lang.AssertionError: behavior not observed"
  echo ""
  echo "FAILURES!!!"
  echo "Tests run: 1,  Failures: 1"
else
  echo "OK (1 test)"
fi
"#;

const FAILING: &str = "assertThrows(IllegalArgumentException.class\nassertEquals(0, new Calc().divide(\n";

pub const COMMENTS: &str = r#"[
  {"comment_id": "add-sum", "subject_file": "src/main/java/calc/Calc.java", "method_name": "add", "arity": 2,
   "comment_text": "Returns the sum of a and b.", "label": {"category": "Accurate"}},
  {"comment_id": "negate", "subject_file": "src/main/java/calc/Calc.java", "method_name": "negate", "arity": 1,
   "comment_text": "Returns the additive inverse of x.", "label": {"category": "Accurate"}},
  {"comment_id": "shape-throws", "subject_file": "src/main/java/calc/Calc.java", "method_name": "shape", "arity": 1,
   "comment_text": "Scales k.\n@throws IllegalArgumentException if k is not positive",
   "label": {"category": "CodeMischaracterization"}},
  {"comment_id": "divide-zero", "subject_file": "src/main/java/calc/Calc.java", "method_name": "divide", "arity": 2,
   "comment_text": "Divides a by b, returning 0 when b is zero.", "label": {"category": "LackingCodeContext"}}
]
"#;

/// Canned property-extraction responses.
fn property_response(comment_id: &str) -> &'static str {
    match comment_id {
        "add-sum" => "1. WHEN a = 2 and b = 3, THEN the method returns 5\n2. WHEN b = 0, THEN the method returns a\n",
        "negate" => "WHEN x = 4, THEN the method returns -4\n",
        "shape-throws" => {
            "1. WHEN k is zero or negative, THEN the method throws IllegalArgumentException\n\
             2. WHEN k is positive, THEN the method returns k times the scale\n"
        }
        "divide-zero" => "1. WHEN b is 0, THEN the method returns 0\n2. WHEN a = 6 and b = 3, THEN the method returns 2\n",
        _ => "NONE",
    }
}

fn test_method(name: &str, assertion: &str) -> String {
    format!("@Test\npublic void {name}() {{\n    {assertion};\n}}\n")
}

/// Canned test-generation responses: three tests per property.
fn test_response(comment_id: &str, property_index: usize) -> String {
    let bodies: Vec<(String, String)> = match (comment_id, property_index) {
        ("add-sum", 1) => vec![
            ("addsTwoAndThree".into(), "assertEquals(5, new Calc().add(2, 3))".into()),
            ("addsThreeAndTwo".into(), "assertEquals(5, new Calc().add(3, 2))".into()),
            ("addsWithScaledCalc".into(), "assertEquals(5, new Calc(3.0).add(2, 3))".into()),
        ],
        ("add-sum", _) => vec![
            ("addZeroIsIdentity".into(), "assertEquals(7, new Calc().add(7, 0))".into()),
            ("addZeroNegative".into(), "assertEquals(-2, new Calc().add(-2, 0))".into()),
            ("addZeroToZero".into(), "assertEquals(0, new Calc().add(0, 0))".into()),
        ],
        ("negate", _) => vec![
            ("negatesFour".into(), "assertEquals(-4, new Calc().negate(4))".into()),
            ("negatesFourAgain".into(), "assertEquals(-4, new Calc(2.0).negate(4))".into()),
            ("negatesViaHelper".into(), "assertEquals(-4, undefinedSymbol.negate(4))".into()),
        ],
        ("shape-throws", 1) => vec![
            ("throwsOnZero".into(), "assertThrows(IllegalArgumentException.class, () -> new Calc().shape(0))".into()),
            ("throwsOnNegative".into(), "assertThrows(IllegalArgumentException.class, () -> new Calc().shape(-1))".into()),
            ("throwsOnTiny".into(), "assertThrows(IllegalArgumentException.class, () -> new Calc().shape(-1e-9))".into()),
        ],
        ("shape-throws", _) => vec![
            ("scalesByOne".into(), "assertEquals(2.0, new Calc().shape(2.0), 1e-9)".into()),
            ("scalesByTwo".into(), "assertEquals(6.0, new Calc(2.0).shape(3.0), 1e-9)".into()),
            ("scalesWithHelper".into(), "assertEquals(1.0, undefinedSymbol.shape(1.0), 1e-9)".into()),
        ],
        ("divide-zero", 1) => vec![
            ("divideByZeroIsZero".into(), "assertEquals(0, new Calc().divide(5, 0))".into()),
            ("divideZeroByZero".into(), "assertEquals(0, new Calc().divide(0, 0))".into()),
            ("divideNegByZero".into(), "assertEquals(0, new Calc().divide(-3, 0))".into()),
        ],
        _ => vec![
            ("dividesSix".into(), "assertEquals(2, new Calc().divide(6, 3))".into()),
            ("dividesNine".into(), "assertEquals(3, new Calc().divide(9, 3))".into()),
            ("dividesExact".into(), "assertEquals(1, new Calc().divide(3, 3))".into()),
        ],
    };
    let mut out = String::from("Here are the tests.\n\n```java\nimport static org.junit.Assert.assertEquals;\nimport static org.junit.Assert.assertThrows;\n\n");
    for (name, assertion) in bodies {
        out.push_str(&test_method(&name, &assertion));
        out.push('\n');
    }
    out.push_str("```\n");
    out
}

pub struct Fixture {
    pub dir: tempfile::TempDir,
}

impl Fixture {
    pub fn path(&self) -> &Path {
        self.dir.path()
    }
    pub fn config(&self) -> PathBuf {
        self.path().join("docprobe.json")
    }
    pub fn comments(&self) -> PathBuf {
        self.path().join("comments.json")
    }
    pub fn project(&self) -> PathBuf {
        self.path().join("project")
    }
    pub fn runs(&self) -> PathBuf {
        self.path().join("runs")
    }
    pub fn run(&self, run_id: &str) -> RunDir {
        RunDir::new(&self.runs(), run_id)
    }
}

fn write(path: &Path, text: &str) {
    std::fs::create_dir_all(path.parent().unwrap()).unwrap();
    std::fs::write(path, text).unwrap();
}

/// Lay out the project, config and comments; no completion fixtures yet.
pub fn calc_fixture() -> Fixture {
    let fx = Fixture {
        dir: tempfile::tempdir().unwrap(),
    };
    let project = fx.project();
    write(&project.join("src/main/java/calc/Calc.java"), CALC);
    write(&project.join("src/test/java/calc/CalcTest.java"), CALC_TEST);
    write(&project.join("src/test/java/calc/MiscTest.java"), MISC_TEST);
    write(&project.join("compile.sh"), COMPILE_SH);
    write(&project.join("check.sh"), CHECK_SH);
    write(&project.join("failing.txt"), FAILING);
    std::fs::create_dir_all(fx.path().join("fixtures")).unwrap();
    let config = serde_json::json!({
        "schema_version": 1,
        "backend": {"kind": "mock", "fixture_dir": "fixtures"},
        "project": {
            "root": "project",
            "test_globs": ["src/test/**/*.java"],
            "compile_cmd": "sh compile.sh {file}",
            "test_cmd": "sh check.sh {file} {method} {class}",
            "timeout_s": 30
        },
        "pipeline": {"w": 100.0, "runs_dir": "runs"}
    });
    write(&fx.config(), &serde_json::to_string_pretty(&config).unwrap());
    write(&fx.comments(), COMMENTS);
    fx
}

/// Render every prompt the pipeline will send, through the library, and
/// store the canned response under its digest. Uses a scratch run for the
/// extract and retrieve artifacts the prompts depend on.
pub fn write_completion_fixtures(fx: &Fixture) {
    let opts = RunOptions {
        stages: vec![Stage::Extract, Stage::Retrieve],
        run_id: Some("fixture-seed".into()),
        ..RunOptions::default()
    };
    let summary = run_pipeline(&fx.config(), &fx.comments(), &opts).unwrap();
    assert_eq!(summary.exit_code(), 0, "{:?}", summary.failures);
    let run = fx.run("fixture-seed");
    let fixtures = fx.path().join("fixtures");
    for c in load_comments(&fx.comments()).unwrap() {
        let ex: ExtractArtifact = run.read_artifact(Stage::Extract, &c.comment_id).unwrap();
        let rt: RetrieveArtifact = run.read_artifact(Stage::Retrieve, &c.comment_id).unwrap();
        let prompt = property_prompt(&c, &ex).unwrap();
        let response = property_response(&c.comment_id);
        std::fs::write(fixtures.join(format!("{}.txt", prompt.digest)), response).unwrap();
        for spec in parse_properties(response, 10).unwrap_or_default() {
            let prompt = test_prompt(&ex, &rt, &spec.to_line()).unwrap();
            let text = test_response(&c.comment_id, spec.index);
            std::fs::write(fixtures.join(format!("{}.txt", prompt.digest)), text).unwrap();
        }
    }
    std::fs::remove_dir_all(run.path).unwrap();
}

/// Relative path and SHA-256 of every file under `root`, sorted.
pub fn digest_tree(root: &Path) -> Vec<(PathBuf, String)> {
    let mut out: Vec<_> = walkdir::WalkDir::new(root)
        .into_iter()
        .filter_map(Result::ok)
        .filter(|e| e.file_type().is_file())
        .map(|e| {
            let rel = e.path().strip_prefix(root).unwrap().to_path_buf();
            (rel, hex::encode(Sha256::digest(std::fs::read(e.path()).unwrap())))
        })
        .collect();
    out.sort();
    out
}

/// Digests of all per-comment stage artifacts of a run.
pub fn stage_artifacts(run: &RunDir) -> Vec<(PathBuf, String)> {
    Stage::ALL
        .iter()
        .filter(|s| **s != Stage::Evaluate)
        .flat_map(|s| {
            let dir = run.stage_dir(*s);
            digest_tree(&dir)
                .into_iter()
                .map(move |(p, d)| (PathBuf::from(s.as_str()).join(p), d))
        })
        .collect()
}
