//! Mining example tests from an existing suite.
//!
//! Tests are labeled by two lexical heuristics (mentions the class, calls a
//! method with the target's name and arity), ranked by tier, and optionally
//! sanitized when they come from a random test generator.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::java::{self, TokenKind};
use crate::source::{strip_comments, MethodSignature};

pub const DUMMY_STRING: &str = "\"str\"";
pub const DUMMY_INT: &str = "0";

#[derive(Debug, Error, PartialEq, Eq)]
pub enum CorpusError {
    #[error("the test corpus is empty")]
    EmptyCorpus,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TestCase {
    pub file_path: PathBuf,
    pub method_name: String,
    /// The complete test-method declaration, annotations included.
    pub body: String,
    pub imports: Vec<String>,
    /// Byte offset of the declaration in its file; orders tests within a file.
    pub offset: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RelevanceLabel {
    pub has_class_ref: bool,
    pub has_method_call: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Tier {
    Both,
    ClassOnly,
    MethodOnly,
    None,
}

impl RelevanceLabel {
    pub fn tier(self) -> Tier {
        match (self.has_class_ref, self.has_method_call) {
            (true, true) => Tier::Both,
            (true, false) => Tier::ClassOnly,
            (false, true) => Tier::MethodOnly,
            (false, false) => Tier::None,
        }
    }
}

const TEST_ANNOTATIONS: &[&str] = &["Test", "ParameterizedTest", "RepeatedTest", "TestFactory", "TestTemplate"];

/// Import lines of a Java file, trimmed, in order.
pub fn import_lines(source: &str) -> Vec<String> {
    strip_comments(source)
        .lines()
        .map(str::trim)
        .filter(|l| l.starts_with("import ") && l.ends_with(';'))
        .map(str::to_string)
        .collect()
}

/// Test methods declared directly in the top-level classes of a test file.
///
/// A method counts as a test when it carries a test annotation or its name
/// starts with `test`.
pub fn parse_test_file(file_path: &Path, source: &str) -> Vec<TestCase> {
    let tokens = java::tokenize(source);
    let depths = java::brace_depths(&tokens);
    let imports = import_lines(source);
    java::declarations(source, &tokens)
        .into_iter()
        .filter(|d| depths[d.name_idx] == 1 && d.has_body())
        .filter(|d| {
            let name = tokens[d.name_idx].text(source);
            name.starts_with("test") || d.annotations.iter().any(|a| TEST_ANNOTATIONS.contains(&a.name.as_str()))
        })
        .map(|d| {
            let span = d.full_span(&tokens);
            TestCase {
                file_path: file_path.to_path_buf(),
                method_name: tokens[d.name_idx].text(source).to_string(),
                body: source[span.clone()].to_string(),
                imports: imports.clone(),
                offset: span.start,
            }
        })
        .collect()
}

/// Label a test by whether it mentions `class_name` as a whole identifier and
/// whether it calls a method named like `target` with the same argument count.
pub fn label_test_relevance(test: &TestCase, class_name: &str, target: &MethodSignature) -> RelevanceLabel {
    let body = strip_comments(&test.body);
    let tokens = java::tokenize(&body);
    let has_class_ref = tokens.iter().any(|t| t.is_ident(&body, class_name));
    let has_method_call = tokens.iter().enumerate().any(|(i, t)| {
        if !t.is_ident(&body, &target.name) || !tokens.get(i + 1).is_some_and(|n| n.is_punct('(')) {
            return false;
        }
        if i > 0 && tokens[i - 1].is_ident(&body, "new") {
            return false;
        }
        let Some(close) = java::matching_close(&tokens, i + 1) else {
            return false;
        };
        java::split_top_level(&tokens, i + 1, close, false).len() == target.arity
    });
    RelevanceLabel {
        has_class_ref,
        has_method_call,
    }
}

/// Relevant tests, best tier first, at most `k` of them. Within a tier the
/// order is by file path, then position in the file.
pub fn rank_relevant_tests(
    tests: &[TestCase],
    class_name: &str,
    target: &MethodSignature,
    k: usize,
) -> Result<Vec<TestCase>, CorpusError> {
    if tests.is_empty() {
        return Err(CorpusError::EmptyCorpus);
    }
    let mut labeled: Vec<(Tier, &TestCase)> = tests
        .iter()
        .map(|t| (label_test_relevance(t, class_name, target).tier(), t))
        .filter(|(tier, _)| *tier != Tier::None)
        .collect();
    labeled.sort_by(|(ta, a), (tb, b)| {
        ta.cmp(tb)
            .then_with(|| a.file_path.cmp(&b.file_path))
            .then_with(|| a.offset.cmp(&b.offset))
    });
    Ok(labeled.into_iter().take(k).map(|(_, t)| t.clone()).collect())
}

/// Replace string literals with `"str"` and integer literals with `0`.
///
/// A sign in front of a number is a separate operator token and is left
/// alone. A long suffix is kept so overload resolution does not change.
/// Floating-point, boolean and char literals are untouched.
pub fn sanitize_literals(test_source: &str) -> String {
    let mut out = String::with_capacity(test_source.len());
    let mut last = 0;
    for tok in java::tokenize(test_source) {
        let replacement = match tok.kind {
            TokenKind::Str | TokenKind::TextBlock => DUMMY_STRING.to_string(),
            TokenKind::Int => {
                let text = tok.text(test_source);
                if text.ends_with(['l', 'L']) {
                    format!("{DUMMY_INT}L")
                } else {
                    DUMMY_INT.to_string()
                }
            }
            _ => continue,
        };
        out.push_str(&test_source[last..tok.start]);
        out.push_str(&replacement);
        last = tok.end;
    }
    out.push_str(&test_source[last..]);
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sig(name: &str, arity: usize) -> MethodSignature {
        MethodSignature {
            name: name.into(),
            arity,
            parameter_types: vec!["int".into(); arity],
            return_type: Some("int".into()),
            modifiers: vec![],
            raw_text: format!("int {name}(...)"),
        }
    }

    fn case(path: &str, offset: usize, body: &str) -> TestCase {
        TestCase {
            file_path: path.into(),
            method_name: "t".into(),
            body: body.into(),
            imports: vec![],
            offset,
        }
    }

    #[test]
    fn label_both() {
        let t = case("T.java", 0, "Foo f = new Foo(); f.bar(1, 2);");
        let l = label_test_relevance(&t, "Foo", &sig("bar", 2));
        assert_eq!(l, RelevanceLabel { has_class_ref: true, has_method_call: true });
        assert_eq!(l.tier(), Tier::Both);
    }

    #[test]
    fn nested_commas_do_not_count() {
        let t = case("T.java", 0, "f.bar(g(1,2));");
        assert!(label_test_relevance(&t, "Foo", &sig("bar", 1)).has_method_call);
        assert!(!label_test_relevance(&t, "Foo", &sig("bar", 2)).has_method_call);
    }

    #[test]
    fn comments_are_stripped_before_matching() {
        let t = case("T.java", 0, "// Foo\nbaz();");
        let l = label_test_relevance(&t, "Foo", &sig("bar", 2));
        assert_eq!(l, RelevanceLabel { has_class_ref: false, has_method_call: false });
    }

    #[test]
    fn whole_identifier_class_match() {
        let t = case("T.java", 0, "FooBar x = new FooBar(); String s = \"Foo\";");
        assert!(!label_test_relevance(&t, "Foo", &sig("bar", 0)).has_class_ref);
    }

    #[test]
    fn zero_args_and_string_commas() {
        let t = case("T.java", 0, "x.bar(); y.bar(\"a,b\");");
        assert!(label_test_relevance(&t, "X", &sig("bar", 0)).has_method_call);
        assert!(label_test_relevance(&t, "X", &sig("bar", 1)).has_method_call);
        assert!(!label_test_relevance(&t, "X", &sig("bar", 2)).has_method_call);
    }

    #[test]
    fn ranks_by_tier() {
        let tests = vec![
            case("a/T.java", 0, "bar(1);"),
            case("a/T.java", 10, "Foo f; f.bar(1);"),
            case("a/T.java", 20, "Foo f;"),
        ];
        let ranked = rank_relevant_tests(&tests, "Foo", &sig("bar", 1), 3).unwrap();
        let offsets: Vec<_> = ranked.iter().map(|t| t.offset).collect();
        assert_eq!(offsets, vec![10, 20, 0]);
    }

    #[test]
    fn irrelevant_tests_filtered() {
        let tests = vec![case("a", 0, "x();"), case("b", 0, "y();")];
        assert!(rank_relevant_tests(&tests, "Foo", &sig("bar", 1), 2).unwrap().is_empty());
    }

    #[test]
    fn tie_broken_by_path() {
        let tests = vec![case("b/T.java", 0, "Foo f; f.bar(1);"), case("a/T.java", 50, "Foo f; f.bar(2);")];
        let ranked = rank_relevant_tests(&tests, "Foo", &sig("bar", 1), 1).unwrap();
        assert_eq!(ranked.len(), 1);
        assert_eq!(ranked[0].file_path, PathBuf::from("a/T.java"));
    }

    #[test]
    fn empty_corpus_is_signalled() {
        assert_eq!(rank_relevant_tests(&[], "Foo", &sig("bar", 1), 1), Err(CorpusError::EmptyCorpus));
    }

    #[test]
    fn sanitize_strings_and_ints() {
        assert_eq!(
            sanitize_literals("assertEquals(\"xK9\", f.g(42));"),
            "assertEquals(\"str\", f.g(0));"
        );
        let floats = "assertEquals(3.5, h(), 0.01);";
        assert_eq!(sanitize_literals(floats), floats);
        assert_eq!(sanitize_literals("long n = -123L; char c = '7';"), "long n = -0L; char c = '7';");
        let s = "int[] a = {1, 0x2F, 3}; String t = \"a\\\"b\";";
        let once = sanitize_literals(s);
        assert_eq!(once, "int[] a = {0, 0, 0}; String t = \"str\";");
        assert_eq!(sanitize_literals(&once), once);
    }

    #[test]
    fn parses_test_file() {
        let src = r#"package p;
import org.junit.Test;
import static org.junit.Assert.*;

public class CalcTest {
    private Calc calc = new Calc();

    @Test
    public void addsNumbers() {
        assertEquals(3, calc.add(1, 2));
    }

    /** Legacy style. */
    public void testSubtract() { assertEquals(1, calc.sub(2, 1)); }

    private int helper() { return 1; }

    static class Nested { @Test public void hidden() {} }
}
"#;
        let tests = parse_test_file(Path::new("CalcTest.java"), src);
        let names: Vec<_> = tests.iter().map(|t| t.method_name.as_str()).collect();
        assert_eq!(names, vec!["addsNumbers", "testSubtract"]);
        assert!(tests[0].body.starts_with("@Test"));
        assert!(tests[0].body.ends_with('}'));
        assert!(tests[1].body.starts_with("public void testSubtract"));
        assert_eq!(tests[0].imports, vec!["import org.junit.Test;", "import static org.junit.Assert.*;"]);
    }
}
