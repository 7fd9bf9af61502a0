use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use super::LlmError;
use crate::corpus::import_lines;
use crate::java;

pub const DEFAULT_PROPERTY_CAP: usize = 10;
pub const TESTS_PER_PROPERTY: usize = 3;

/// One "WHEN condition, THEN behavior" claim extracted from a comment.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PropertySpec {
    /// 1-based position in the response.
    pub index: usize,
    pub condition: String,
    pub behavior: String,
    pub raw_line: String,
}

impl PropertySpec {
    /// Canonical single-line form; parses back to the same condition and behavior.
    pub fn to_line(&self) -> String {
        format!("WHEN {}, THEN {}", self.condition, self.behavior)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GeneratedTestSource {
    pub property_index: usize,
    /// 1..=3
    pub ordinal: usize,
    pub method_name: String,
    /// A single test-method declaration.
    pub source: String,
    pub imports: Vec<String>,
}

static WHEN_THEN: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?i)\bwhen\b(.*?)\bthen\b(.*)$").unwrap());

static FENCE: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"(?s)```[^\n]*\n(.*?)(?:```|\z)").unwrap());

fn clean_condition(s: &str) -> &str {
    s.trim_matches(|c: char| c.is_whitespace() || matches!(c, ',' | '*' | '_' | ':' | '`'))
}

fn clean_behavior(s: &str) -> &str {
    s.trim_matches(|c: char| c.is_whitespace() || matches!(c, '*' | '_' | ':' | '`'))
}

/// Every line with a WHEN marker followed by a THEN marker yields one
/// property, in order, up to `cap`.
pub fn parse_properties(response: &str, cap: usize) -> Result<Vec<PropertySpec>, LlmError> {
    let specs: Vec<PropertySpec> = response
        .lines()
        .filter_map(|line| {
            let caps = WHEN_THEN.captures(line)?;
            let condition = clean_condition(&caps[1]);
            let behavior = clean_behavior(&caps[2]);
            if condition.is_empty() || behavior.is_empty() {
                return None;
            }
            Some((condition.to_string(), behavior.to_string(), line.trim().to_string()))
        })
        .take(cap.max(1))
        .enumerate()
        .map(|(i, (condition, behavior, raw_line))| PropertySpec {
            index: i + 1,
            condition,
            behavior,
            raw_line,
        })
        .collect();
    if specs.is_empty() {
        return Err(LlmError::NoPropertiesFound);
    }
    Ok(specs)
}

const TEST_ANNOTATIONS: &[&str] = &["Test", "ParameterizedTest", "RepeatedTest"];

/// Pull test methods out of a generation response. Fenced code blocks are
/// searched when present, otherwise the whole response. At most three tests
/// are kept.
pub fn parse_test_sources(response: &str, property_index: usize) -> Result<Vec<GeneratedTestSource>, LlmError> {
    let blocks: Vec<&str> = if response.contains("```") {
        FENCE.captures_iter(response).map(|c| c.get(1).unwrap().as_str()).collect()
    } else {
        vec![response]
    };
    let mut out = Vec::new();
    for block in blocks {
        let imports = import_lines(block);
        let tokens = java::tokenize(block);
        let mut covered_until = 0usize;
        for decl in java::declarations(block, &tokens) {
            if !decl.has_body() || decl.start_idx < covered_until {
                continue;
            }
            let name = tokens[decl.name_idx].text(block);
            let is_test = name.starts_with("test")
                || decl.annotations.iter().any(|a| TEST_ANNOTATIONS.contains(&a.name.as_str()));
            if !is_test {
                continue;
            }
            let span = decl.full_span(&tokens);
            covered_until = match decl.end {
                java::DeclEnd::Body(_, close) => close + 1,
                java::DeclEnd::Semicolon(semi) => semi + 1,
            };
            out.push(GeneratedTestSource {
                property_index,
                ordinal: out.len() + 1,
                method_name: name.to_string(),
                source: block[span].to_string(),
                imports: imports.clone(),
            });
        }
    }
    out.truncate(TESTS_PER_PROPERTY);
    if out.is_empty() {
        return Err(LlmError::NoTestsParsed);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn two_numbered_properties() {
        let r = "1. WHEN input is null, THEN the method throws NPE\n2. WHEN list empty, THEN the method returns 0";
        let specs = parse_properties(r, DEFAULT_PROPERTY_CAP).unwrap();
        assert_eq!(specs.len(), 2);
        assert_eq!(specs[0].index, 1);
        assert_eq!(specs[0].condition, "input is null");
        assert_eq!(specs[0].behavior, "the method throws NPE");
        assert_eq!(specs[1].condition, "list empty");
        assert_eq!(specs[1].raw_line, "2. WHEN list empty, THEN the method returns 0");
    }

    #[test]
    fn prose_has_no_properties() {
        assert!(matches!(parse_properties("The method is great.", 10), Err(LlmError::NoPropertiesFound)));
    }

    #[test]
    fn cap_truncates() {
        let r: String = (0..12).map(|i| format!("WHEN x = {i}, THEN the method returns {i}\n")).collect();
        let specs = parse_properties(&r, 10).unwrap();
        assert_eq!(specs.len(), 10);
        assert_eq!(specs[9].condition, "x = 9");
    }

    #[test]
    fn case_insensitive_and_markdown() {
        let r = "- **When** the key is unknown, **then** the method throws UnknownKeyException\nwhenever it rains then";
        let specs = parse_properties(r, 10).unwrap();
        assert_eq!(specs.len(), 1);
        assert_eq!(specs[0].condition, "the key is unknown");
        assert_eq!(specs[0].behavior, "the method throws UnknownKeyException");
    }

    const THREE: &str = r#"Here are the tests:

```java
import org.junit.Test;
import static org.junit.Assert.assertEquals;

@Test
public void testAddPositive() {
    assertEquals(3, new Calc().add(1, 2));
}

@Test
public void addsNegative() {
    assertEquals(-3, new Calc().add(-1, -2));
}

@Test(expected = IllegalArgumentException.class)
public void rejectsOverflow() {
    new Calc().add(Integer.MAX_VALUE, 1);
}
```
"#;

    #[test]
    fn three_tests_in_one_block() {
        let tests = parse_test_sources(THREE, 4).unwrap();
        assert_eq!(tests.len(), 3);
        assert_eq!(tests.iter().map(|t| t.ordinal).collect::<Vec<_>>(), vec![1, 2, 3]);
        assert!(tests.iter().all(|t| t.property_index == 4));
        assert_eq!(tests[2].method_name, "rejectsOverflow");
        assert!(tests[2].source.starts_with("@Test(expected"));
        assert!(tests[0].source.ends_with('}'));
        assert_eq!(tests[0].imports.len(), 2);
    }

    #[test]
    fn five_tests_keep_three() {
        let body: String = (1..=5).map(|i| format!("@Test public void t{i}() {{ }}\n")).collect();
        let tests = parse_test_sources(&format!("```java\n{body}```"), 1).unwrap();
        assert_eq!(tests.len(), 3);
        assert_eq!(tests[2].method_name, "t3");
    }

    #[test]
    fn prose_only_response() {
        assert!(matches!(
            parse_test_sources("I cannot write tests for this.", 1),
            Err(LlmError::NoTestsParsed)
        ));
    }

    #[test]
    fn wrapped_in_class_and_unfenced() {
        let r = "public class GenTest {\n  @Test public void a() { x(); }\n  private void helper() {}\n}";
        let tests = parse_test_sources(r, 1).unwrap();
        assert_eq!(tests.len(), 1);
        assert_eq!(tests[0].source, "@Test public void a() { x(); }");
    }

    proptest! {
        #[test]
        fn reparse_is_fixpoint(
            conds in prop::collection::vec("[a-z][a-z0-9 =<>]{0,20}[a-z0-9]", 1..5),
            behs in prop::collection::vec("[a-z][a-z0-9 .()]{0,20}", 1..5),
        ) {
            let n = conds.len().min(behs.len());
            let text: String = (0..n).map(|i| format!("{}. WHEN {}, THEN {}\n", i + 1, conds[i], behs[i])).collect();
            // Conditions or behaviors that happen to contain the marker words are fine
            // as long as re-parsing is stable.
            if let Ok(first) = parse_properties(&text, 10) {
                let serialized: String = first.iter().map(|p| p.to_line() + "\n").collect();
                let second = parse_properties(&serialized, 10).unwrap();
                let key = |v: &[PropertySpec]| v.iter().map(|p| (p.index, p.condition.clone(), p.behavior.clone())).collect::<Vec<_>>();
                prop_assert_eq!(key(&first), key(&second));
            }
        }
    }
}
