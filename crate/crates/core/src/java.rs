//! Lexical scanner for Java-like source text.
//!
//! This is not a parser. It produces a flat token stream (comments either
//! reported or skipped) with byte spans into the input, plus a small
//! recognizer for method/constructor declarations that works by balancing
//! parentheses and braces. Everything downstream (signature extraction,
//! test mining, injection) is built on these two pieces.

use std::ops::Range;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TokenKind {
    Ident,
    /// Integer literal in any radix, with or without an `L` suffix.
    Int,
    Float,
    Str,
    TextBlock,
    Char,
    LineComment,
    BlockComment,
    Punct(char),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Token {
    pub kind: TokenKind,
    pub start: usize,
    pub end: usize,
}

impl Token {
    pub fn span(&self) -> Range<usize> {
        self.start..self.end
    }

    pub fn text<'a>(&self, src: &'a str) -> &'a str {
        &src[self.start..self.end]
    }

    pub fn is_punct(&self, c: char) -> bool {
        self.kind == TokenKind::Punct(c)
    }

    pub fn is_comment(&self) -> bool {
        matches!(self.kind, TokenKind::LineComment | TokenKind::BlockComment)
    }

    pub fn is_ident(&self, src: &str, name: &str) -> bool {
        self.kind == TokenKind::Ident && self.text(src) == name
    }
}

fn is_ident_start(c: char) -> bool {
    c == '_' || c == '$' || c.is_alphabetic()
}

fn is_ident_continue(c: char) -> bool {
    c == '_' || c == '$' || c.is_alphanumeric()
}

/// Tokenize `src`, including comment tokens. Whitespace is dropped.
///
/// Unterminated string and char literals end at the line break; unterminated
/// block comments and text blocks run to the end of input.
pub fn tokenize_with_comments(src: &str) -> Vec<Token> {
    let bytes = src.as_bytes();
    let mut tokens = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = src[i..].chars().next().unwrap();
        let start = i;
        if c.is_whitespace() {
            i += c.len_utf8();
            continue;
        }
        let kind = if src[i..].starts_with("//") {
            i = src[i..].find('\n').map_or(bytes.len(), |p| i + p);
            TokenKind::LineComment
        } else if src[i..].starts_with("/*") {
            i = src[i + 2..].find("*/").map_or(bytes.len(), |p| i + 2 + p + 2);
            TokenKind::BlockComment
        } else if src[i..].starts_with("\"\"\"") {
            i = scan_text_block(bytes, i + 3);
            TokenKind::TextBlock
        } else if c == '"' {
            i = scan_quoted(bytes, i + 1, b'"');
            TokenKind::Str
        } else if c == '\'' {
            i = scan_quoted(bytes, i + 1, b'\'');
            TokenKind::Char
        } else if c.is_ascii_digit()
            || (c == '.' && bytes.get(i + 1).is_some_and(u8::is_ascii_digit))
        {
            let (end, is_float) = scan_number(bytes, i);
            i = end;
            if is_float {
                TokenKind::Float
            } else {
                TokenKind::Int
            }
        } else if is_ident_start(c) {
            i += c.len_utf8();
            while let Some(n) = src[i..].chars().next() {
                if !is_ident_continue(n) {
                    break;
                }
                i += n.len_utf8();
            }
            TokenKind::Ident
        } else {
            i += c.len_utf8();
            TokenKind::Punct(c)
        };
        tokens.push(Token { kind, start, end: i });
    }
    tokens
}

/// Tokenize `src`, skipping comments.
pub fn tokenize(src: &str) -> Vec<Token> {
    let mut tokens = tokenize_with_comments(src);
    tokens.retain(|t| !t.is_comment());
    tokens
}

fn scan_quoted(bytes: &[u8], mut i: usize, quote: u8) -> usize {
    while i < bytes.len() {
        match bytes[i] {
            b'\\' => i += 2,
            b'\n' => return i,
            b if b == quote => return i + 1,
            _ => i += 1,
        }
    }
    bytes.len()
}

fn scan_text_block(bytes: &[u8], mut i: usize) -> usize {
    while i < bytes.len() {
        if bytes[i] == b'\\' {
            i += 2;
        } else if bytes[i..].starts_with(b"\"\"\"") {
            return i + 3;
        } else {
            i += 1;
        }
    }
    bytes.len()
}

/// Returns (end, is_float).
fn scan_number(bytes: &[u8], start: usize) -> (usize, bool) {
    let mut i = start;
    let at = |i: usize| bytes.get(i).copied().unwrap_or(0);
    if at(i) == b'0' && matches!(at(i + 1), b'x' | b'X' | b'b' | b'B') {
        i += 2;
        while at(i).is_ascii_hexdigit() || at(i) == b'_' {
            i += 1;
        }
        if matches!(at(i), b'l' | b'L') {
            i += 1;
        }
        return (i, false);
    }
    let mut is_float = false;
    while at(i).is_ascii_digit() || at(i) == b'_' {
        i += 1;
    }
    if at(i) == b'.' && at(i + 1).is_ascii_digit() {
        is_float = true;
        i += 1;
        while at(i).is_ascii_digit() || at(i) == b'_' {
            i += 1;
        }
    } else if at(i) == b'.' && !is_ident_start(at(i + 1) as char) && i > start {
        // `1.` is a valid double literal; `1.foo` is not a thing in Java.
        is_float = true;
        i += 1;
    }
    if matches!(at(i), b'e' | b'E')
        && (at(i + 1).is_ascii_digit()
            || (matches!(at(i + 1), b'+' | b'-') && at(i + 2).is_ascii_digit()))
    {
        is_float = true;
        i += 2;
        while at(i).is_ascii_digit() || at(i) == b'_' {
            i += 1;
        }
    }
    match at(i) {
        b'f' | b'F' | b'd' | b'D' => {
            is_float = true;
            i += 1;
        }
        b'l' | b'L' if !is_float => i += 1,
        _ => {}
    }
    (i, is_float)
}

/// Index of the token that closes the group opened at `open`.
/// Returns `None` when the group is unbalanced.
pub fn matching_close(tokens: &[Token], open: usize) -> Option<usize> {
    let (o, c) = match tokens[open].kind {
        TokenKind::Punct('(') => ('(', ')'),
        TokenKind::Punct('{') => ('{', '}'),
        TokenKind::Punct('[') => ('[', ']'),
        _ => return None,
    };
    let mut depth = 0usize;
    for (i, t) in tokens.iter().enumerate().skip(open) {
        if t.is_punct(o) {
            depth += 1;
        } else if t.is_punct(c) {
            depth -= 1;
            if depth == 0 {
                return Some(i);
            }
        }
    }
    None
}

/// Split the tokens strictly between `open` and `close` on top-level commas.
/// Nesting is tracked for parentheses, brackets and braces; when
/// `track_angles` is set, `<`/`>` pairs are treated as nesting too (used for
/// parameter lists, where commas inside generic arguments must not split).
pub fn split_top_level(
    tokens: &[Token],
    open: usize,
    close: usize,
    track_angles: bool,
) -> Vec<Range<usize>> {
    let mut parts = Vec::new();
    if close <= open + 1 {
        return parts;
    }
    let mut depth = 0i32;
    let mut angle = 0i32;
    let mut part_start = open + 1;
    for i in open + 1..close {
        match tokens[i].kind {
            TokenKind::Punct('(' | '[' | '{') => depth += 1,
            TokenKind::Punct(')' | ']' | '}') => depth -= 1,
            TokenKind::Punct('<') if track_angles => angle += 1,
            TokenKind::Punct('>') if track_angles => angle = (angle - 1).max(0),
            TokenKind::Punct(',') if depth == 0 && angle == 0 => {
                parts.push(part_start..i);
                part_start = i + 1;
            }
            _ => {}
        }
    }
    parts.push(part_start..close);
    parts
}

pub const MODIFIERS: &[&str] = &[
    "public",
    "protected",
    "private",
    "static",
    "final",
    "abstract",
    "synchronized",
    "native",
    "default",
    "strictfp",
    "transient",
    "volatile",
    "sealed",
    "non-sealed",
];

/// Identifiers that can never start a return type. A candidate whose prefix
/// begins with one of these is a statement, not a declaration.
const STATEMENT_KEYWORDS: &[&str] = &[
    "return", "new", "throw", "else", "case", "yield", "assert", "do", "try", "if", "while",
    "for", "switch", "catch", "this", "super", "instanceof",
];

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Annotation {
    /// Last segment of the annotation name (`Test` for `@org.junit.Test`).
    pub name: String,
    pub tokens: Range<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum DeclEnd {
    /// Body braces as token indices (open, close).
    Body(usize, usize),
    /// Abstract or interface declaration terminated by `;` at this index.
    Semicolon(usize),
}

/// A method or constructor declaration recognized in a token stream.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Declaration {
    pub name_idx: usize,
    /// First token of the declaration (annotation, modifier or type).
    pub start_idx: usize,
    pub open_paren: usize,
    pub close_paren: usize,
    pub annotations: Vec<Annotation>,
    pub modifiers: Vec<String>,
    /// Token range of the return type; empty for constructors.
    pub return_type: Range<usize>,
    /// Index one past the last header token (the `{` or `;`).
    pub header_end: usize,
    pub end: DeclEnd,
}

impl Declaration {
    pub fn is_constructor_like(&self) -> bool {
        self.return_type.is_empty()
    }

    pub fn has_body(&self) -> bool {
        matches!(self.end, DeclEnd::Body(..))
    }

    /// Byte span of the header: from the first annotation or modifier up to,
    /// but not including, the `{` or `;`.
    pub fn header_span(&self, tokens: &[Token]) -> Range<usize> {
        tokens[self.start_idx].start..tokens[self.header_end - 1].end
    }

    /// Byte span of the whole declaration, body included.
    pub fn full_span(&self, tokens: &[Token]) -> Range<usize> {
        let last = match self.end {
            DeclEnd::Body(_, close) => close,
            DeclEnd::Semicolon(semi) => semi,
        };
        tokens[self.start_idx].start..tokens[last].end
    }
}

/// Try to read a declaration whose name is the identifier at `name_idx`.
/// `tokens` must not contain comments.
pub fn declaration_at(src: &str, tokens: &[Token], name_idx: usize) -> Option<Declaration> {
    if tokens[name_idx].kind != TokenKind::Ident
        || STATEMENT_KEYWORDS.contains(&tokens[name_idx].text(src))
        || MODIFIERS.contains(&tokens[name_idx].text(src))
    {
        return None;
    }
    let open_paren = name_idx + 1;
    if !tokens.get(open_paren)?.is_punct('(') {
        return None;
    }
    let close_paren = matching_close(tokens, open_paren)?;

    // Optional throws clause, then `{` or `;`.
    let mut j = close_paren + 1;
    if tokens.get(j)?.is_ident(src, "throws") {
        j += 1;
        while j < tokens.len() && !tokens[j].is_punct('{') && !tokens[j].is_punct(';') {
            match tokens[j].kind {
                TokenKind::Ident | TokenKind::Punct('.' | ',' | '<' | '>' | '?') => j += 1,
                _ => return None,
            }
        }
    }
    let terminator = tokens.get(j)?;

    // Walk back to the previous statement boundary.
    let mut start = name_idx;
    let mut depth = 0i32;
    while start > 0 {
        let t = &tokens[start - 1];
        match t.kind {
            TokenKind::Punct(')') => depth += 1,
            TokenKind::Punct('(') => {
                depth -= 1;
                if depth < 0 {
                    break;
                }
            }
            TokenKind::Punct(';' | '{' | '}') if depth == 0 => break,
            _ => {}
        }
        start -= 1;
    }

    let (annotations, modifiers, return_type) = classify_prefix(src, tokens, start, name_idx)?;

    let end = if terminator.is_punct('{') {
        DeclEnd::Body(j, matching_close(tokens, j)?)
    } else if terminator.is_punct(';') {
        // Call statements end with `;` too; only typed declarations may.
        if return_type.is_empty() {
            return None;
        }
        DeclEnd::Semicolon(j)
    } else {
        return None;
    };

    Some(Declaration {
        name_idx,
        start_idx: start,
        open_paren,
        close_paren,
        annotations,
        modifiers,
        return_type,
        header_end: j,
        end,
    })
}

type Prefix = (Vec<Annotation>, Vec<String>, Range<usize>);

fn classify_prefix(src: &str, tokens: &[Token], start: usize, name_idx: usize) -> Option<Prefix> {
    let mut annotations = Vec::new();
    let mut modifiers = Vec::new();
    let mut i = start;
    loop {
        if i >= name_idx {
            break;
        }
        let t = tokens[i];
        if t.is_punct('@') {
            let ann_start = i;
            i += 1;
            let mut name = String::new();
            while i < name_idx && tokens[i].kind == TokenKind::Ident {
                name = tokens[i].text(src).to_string();
                if i + 1 < name_idx && tokens[i + 1].is_punct('.') {
                    i += 2;
                } else {
                    i += 1;
                    break;
                }
            }
            if name.is_empty() {
                return None;
            }
            if i < name_idx && tokens[i].is_punct('(') {
                i = matching_close(tokens, i)? + 1;
            }
            annotations.push(Annotation {
                name,
                tokens: ann_start..i,
            });
        } else if t.kind == TokenKind::Ident && MODIFIERS.contains(&t.text(src)) {
            modifiers.push(t.text(src).to_string());
            i += 1;
        } else if t.is_punct('<') && i + 1 < name_idx {
            // Generic method type parameters.
            let mut depth = 0;
            loop {
                if i >= name_idx {
                    return None;
                }
                if tokens[i].is_punct('<') {
                    depth += 1;
                } else if tokens[i].is_punct('>') {
                    depth -= 1;
                    if depth == 0 {
                        i += 1;
                        break;
                    }
                }
                i += 1;
            }
        } else {
            break;
        }
    }
    let rt = i..name_idx;
    if let Some(first) = tokens.get(rt.start).filter(|_| !rt.is_empty()) {
        if first.kind != TokenKind::Ident || STATEMENT_KEYWORDS.contains(&first.text(src)) {
            return None;
        }
    }
    for t in &tokens[rt.clone()] {
        let ok = match t.kind {
            TokenKind::Ident => !STATEMENT_KEYWORDS.contains(&t.text(src)),
            TokenKind::Punct(c) => matches!(c, '.' | '<' | '>' | ',' | '?' | '[' | ']' | '&' | '@'),
            _ => false,
        };
        if !ok {
            return None;
        }
    }
    if let Some(last) = tokens[rt.clone()].last() {
        if !(last.kind == TokenKind::Ident || last.is_punct('>') || last.is_punct(']')) {
            return None;
        }
    }
    // `Collections.<T>emptyList()` is an explicitly typed call.
    if tokens[rt.clone()].windows(2).any(|w| w[0].is_punct('.') && w[1].is_punct('<')) {
        return None;
    }
    Some((annotations, modifiers, rt))
}

/// Every declaration in the stream, in textual order.
pub fn declarations(src: &str, tokens: &[Token]) -> Vec<Declaration> {
    (0..tokens.len())
        .filter(|&i| tokens[i].kind == TokenKind::Ident)
        .filter_map(|i| declaration_at(src, tokens, i))
        .collect()
}

/// A top-level type declaration (class, interface, enum or record).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TypeDecl {
    pub name: String,
    pub name_idx: usize,
    pub body_open: usize,
    /// `None` when the body is not closed.
    pub body_close: Option<usize>,
}

/// Top-level type declarations (brace depth 0), in textual order.
pub fn top_level_types(src: &str, tokens: &[Token]) -> Vec<TypeDecl> {
    let mut out = Vec::new();
    let mut depth = 0usize;
    let mut i = 0;
    while i < tokens.len() {
        let t = tokens[i];
        match t.kind {
            TokenKind::Punct('{') => depth += 1,
            TokenKind::Punct('}') => depth = depth.saturating_sub(1),
            TokenKind::Ident
                if depth == 0
                    && matches!(t.text(src), "class" | "interface" | "enum" | "record")
                    && tokens.get(i + 1).is_some_and(|n| n.kind == TokenKind::Ident) =>
            {
                let name_idx = i + 1;
                // Skip type parameters, record components, extends/implements.
                let mut j = name_idx + 1;
                while j < tokens.len() && !tokens[j].is_punct('{') {
                    if tokens[j].is_punct('(') {
                        j = match matching_close(tokens, j) {
                            Some(c) => c,
                            None => break,
                        };
                    }
                    j += 1;
                }
                if j >= tokens.len() {
                    break;
                }
                let body_close = matching_close(tokens, j);
                out.push(TypeDecl {
                    name: tokens[name_idx].text(src).to_string(),
                    name_idx,
                    body_open: j,
                    body_close,
                });
                match body_close {
                    Some(c) => {
                        i = c + 1;
                        continue;
                    }
                    None => break,
                }
            }
            _ => {}
        }
        i += 1;
    }
    out
}

/// Brace depth of every token (depth before the token itself is applied).
pub fn brace_depths(tokens: &[Token]) -> Vec<usize> {
    let mut depth = 0usize;
    tokens
        .iter()
        .map(|t| {
            if t.is_punct('}') {
                depth = depth.saturating_sub(1);
            }
            let d = depth;
            if t.is_punct('{') {
                depth += 1;
            }
            d
        })
        .collect()
}

/// Returns true when every `{` has a matching `}` (comments and literals ignored).
pub fn braces_balanced(src: &str) -> bool {
    let mut depth = 0i64;
    for t in tokenize(src) {
        if t.is_punct('{') {
            depth += 1;
        } else if t.is_punct('}') {
            depth -= 1;
            if depth < 0 {
                return false;
            }
        }
    }
    depth == 0
}

#[cfg(test)]
mod tests {
    use super::*;

    fn kinds(src: &str) -> Vec<TokenKind> {
        tokenize_with_comments(src).iter().map(|t| t.kind).collect()
    }

    #[test]
    fn numbers() {
        use TokenKind::*;
        assert_eq!(kinds("42 0x1F 10L 3.5 .5 1e3 2f 0.01"), vec![Int, Int, Int, Float, Float, Float, Float, Float]);
        assert_eq!(kinds("a[1]"), vec![Ident, Punct('['), Int, Punct(']')]);
    }

    #[test]
    fn literals_hide_comment_markers() {
        let src = r#"s = "// no"; c = '/'; /* yes */"#;
        let toks = tokenize_with_comments(src);
        assert_eq!(toks.iter().filter(|t| t.is_comment()).count(), 1);
        assert!(toks.iter().any(|t| t.kind == TokenKind::Str && t.text(src) == "\"// no\""));
    }

    #[test]
    fn escaped_quote_in_string() {
        let src = r#""a\"b" x"#;
        let toks = tokenize(src);
        assert_eq!(toks[0].text(src), r#""a\"b""#);
        assert!(toks[1].is_ident(src, "x"));
    }

    #[test]
    fn recognizes_method_and_rejects_call() {
        let src = "class A { int f(int a) { return g(a); } }";
        let toks = tokenize(src);
        let decls = declarations(src, &toks);
        assert_eq!(decls.len(), 1);
        assert_eq!(toks[decls[0].name_idx].text(src), "f");
    }

    #[test]
    fn rejects_if_and_new() {
        let src = "void m() { if (ok(x)) { } Object o = new Foo(1) { }; }";
        let toks = tokenize(src);
        let names: Vec<_> = declarations(src, &toks).iter().map(|d| toks[d.name_idx].text(src).to_string()).collect();
        assert_eq!(names, vec!["m"]);
    }

    #[test]
    fn top_level_skips_nested() {
        let src = "package p; public class Outer { static class Inner {} } class Second {}";
        let toks = tokenize(src);
        let names: Vec<_> = top_level_types(src, &toks).into_iter().map(|t| t.name).collect();
        assert_eq!(names, vec!["Outer", "Second"]);
    }
}
