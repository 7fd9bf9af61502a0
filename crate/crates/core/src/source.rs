//! Subject-source facts: comment stripping, method signatures, class info.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::java::{self, DeclEnd, Declaration, Token, TokenKind};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum SourceError {
    #[error("no declaration of {name} with {arity} parameter(s)")]
    NotFound { name: String, arity: usize },
    #[error("no top-level type declaration")]
    NoTypeDeclaration,
}

/// A method or constructor header as written in the source.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MethodSignature {
    pub name: String,
    pub arity: usize,
    /// Parameter types as written, minus annotations and `final`.
    pub parameter_types: Vec<String>,
    /// `None` for constructors.
    pub return_type: Option<String>,
    pub modifiers: Vec<String>,
    /// The exact header text from the comment-stripped source, without body.
    pub raw_text: String,
}

impl MethodSignature {
    /// Parameter types reduced to their head identifier (`java.util.List<String>` -> `List`).
    /// Array and varargs markers are kept.
    pub fn erased_parameter_types(&self) -> Vec<String> {
        self.parameter_types.iter().map(|t| erase_type(t)).collect()
    }
}

fn erase_type(ty: &str) -> String {
    let mut head = String::new();
    let mut depth = 0;
    for c in ty.chars() {
        match c {
            '<' => depth += 1,
            '>' => depth -= 1,
            _ if depth > 0 => {}
            c if c.is_whitespace() => {}
            c => head.push(c),
        }
    }
    match head.rfind('.') {
        // Keep `...` varargs intact.
        Some(dot) if !head.ends_with("...") => head[dot + 1..].to_string(),
        Some(_) => {
            let base = head.trim_end_matches('.');
            let base = base.rsplit('.').next().unwrap_or(base);
            format!("{base}...")
        }
        None => head,
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassInfo {
    pub class_name: String,
    /// Explicit constructors; empty means the implicit default constructor.
    pub constructors: Vec<MethodSignature>,
    pub source_path: PathBuf,
}

/// Remove line and block comments, leaving everything else byte-for-byte.
/// The newline ending a line comment is kept.
pub fn strip_comments(source_text: &str) -> String {
    let mut out = String::with_capacity(source_text.len());
    let mut last = 0;
    for tok in java::tokenize_with_comments(source_text) {
        if !tok.is_comment() {
            continue;
        }
        out.push_str(&source_text[last..tok.start]);
        last = tok.end;
    }
    out.push_str(&source_text[last..]);
    out
}

fn signature_from_decl(src: &str, tokens: &[Token], decl: &Declaration) -> MethodSignature {
    let params = java::split_top_level(tokens, decl.open_paren, decl.close_paren, true);
    let parameter_types = params.iter().map(|r| parameter_type(src, &tokens[r.clone()])).collect::<Vec<_>>();
    let return_type = (!decl.return_type.is_empty()).then(|| {
        let span = tokens[decl.return_type.start].start..tokens[decl.return_type.end - 1].end;
        src[span].to_string()
    });
    MethodSignature {
        name: tokens[decl.name_idx].text(src).to_string(),
        arity: parameter_types.len(),
        parameter_types,
        return_type,
        modifiers: decl.modifiers.clone(),
        raw_text: src[decl.header_span(tokens)].trim().to_string(),
    }
}

/// Type text of one formal parameter, annotations and `final` removed.
fn parameter_type(src: &str, toks: &[Token]) -> String {
    let mut i = 0;
    while i < toks.len() {
        if toks[i].is_punct('@') {
            i += 1;
            while i < toks.len() && toks[i].kind == TokenKind::Ident {
                if toks.get(i + 1).is_some_and(|t| t.is_punct('.')) {
                    i += 2;
                } else {
                    i += 1;
                    break;
                }
            }
            if i < toks.len() && toks[i].is_punct('(') {
                // Annotation arguments: find the matching close within this slice.
                let mut depth = 0;
                while i < toks.len() {
                    if toks[i].is_punct('(') {
                        depth += 1;
                    } else if toks[i].is_punct(')') {
                        depth -= 1;
                        if depth == 0 {
                            i += 1;
                            break;
                        }
                    }
                    i += 1;
                }
            }
        } else if toks[i].is_ident(src, "final") {
            i += 1;
        } else {
            break;
        }
    }
    // The last identifier is the parameter name (possibly followed by `[]`).
    let mut end = toks.len();
    while end > i && (toks[end - 1].is_punct('[') || toks[end - 1].is_punct(']')) {
        end -= 1;
    }
    if end > i + 1 && toks[end - 1].kind == TokenKind::Ident {
        end -= 1;
    }
    if end <= i {
        return String::new();
    }
    src[toks[i].start..toks[end - 1].end].to_string()
}

/// First declaration of `method_name` with exactly `arity` parameters.
/// Overloads of equal arity resolve to the first one in textual order.
pub fn extract_method_signature(
    source_text: &str,
    method_name: &str,
    arity: usize,
) -> Result<MethodSignature, SourceError> {
    let stripped = strip_comments(source_text);
    let tokens = java::tokenize(&stripped);
    tokens
        .iter()
        .enumerate()
        .filter(|(_, t)| t.is_ident(&stripped, method_name))
        .filter_map(|(i, _)| java::declaration_at(&stripped, &tokens, i))
        .map(|d| signature_from_decl(&stripped, &tokens, &d))
        .find(|sig| sig.arity == arity)
        .ok_or_else(|| SourceError::NotFound {
            name: method_name.to_string(),
            arity,
        })
}

/// Name and constructors of the first top-level type in the file.
pub fn extract_class_info(source_text: &str, source_path: &Path) -> Result<ClassInfo, SourceError> {
    let stripped = strip_comments(source_text);
    let tokens = java::tokenize(&stripped);
    let ty = java::top_level_types(&stripped, &tokens)
        .into_iter()
        .next()
        .ok_or(SourceError::NoTypeDeclaration)?;
    let body_end = ty.body_close.unwrap_or(tokens.len());
    let constructors = (ty.body_open + 1..body_end)
        .filter(|&i| tokens[i].is_ident(&stripped, &ty.name))
        .filter_map(|i| java::declaration_at(&stripped, &tokens, i))
        .filter(|d| d.is_constructor_like() && matches!(d.end, DeclEnd::Body(..)))
        .map(|d| signature_from_decl(&stripped, &tokens, &d))
        .collect();
    Ok(ClassInfo {
        class_name: ty.name,
        constructors,
        source_path: source_path.to_path_buf(),
    })
}

/// Package name declared in the file, if any.
pub fn package_name(source_text: &str) -> Option<String> {
    let tokens = java::tokenize(source_text);
    let first = tokens.first()?;
    if !first.is_ident(source_text, "package") {
        return None;
    }
    let semi = tokens.iter().position(|t| t.is_punct(';'))?;
    Some(
        tokens[1..semi]
            .iter()
            .map(|t| t.text(source_text))
            .collect::<String>(),
    )
}
