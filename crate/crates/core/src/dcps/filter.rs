//! Content filter expressions.
//!
//! Grammar (keywords case-insensitive, identifiers case-sensitive):
//!
//! ```text
//! expr := or
//! or   := and ("OR" and)*
//! and  := not ("AND" not)*
//! not  := "NOT" not | "(" expr ")" | cmp
//! cmp  := ident op literal        op ∈ {==, !=, <, <=, >, >=}
//! ```
//!
//! Literals are integers, floats, single-quoted strings, and true/false.
//! The right-hand side of a comparison is always a literal, which keeps
//! writer-side filtering free of cross-field data flow. String and bool
//! fields support only `==` and `!=`.

use crate::dcps::types::{FieldKind, FieldValue, TypeDescriptor};
use crate::error::DcpsError;
use std::fmt;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CompareOp {
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
}

impl fmt::Display for CompareOp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            CompareOp::Eq => "==",
            CompareOp::Ne => "!=",
            CompareOp::Lt => "<",
            CompareOp::Le => "<=",
            CompareOp::Gt => ">",
            CompareOp::Ge => ">=",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Literal {
    Int(i64),
    Float(f64),
    Str(String),
    Bool(bool),
}

impl fmt::Display for Literal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Literal::Int(v) => write!(f, "{v}"),
            Literal::Float(v) => {
                if v.fract() == 0.0 && v.is_finite() {
                    write!(f, "{v:.1}")
                } else {
                    write!(f, "{v}")
                }
            }
            Literal::Str(v) => write!(f, "'{v}'"),
            Literal::Bool(v) => write!(f, "{v}"),
        }
    }
}

/// Typed filter expression tree, validated against one topic type.
#[derive(Debug, Clone, PartialEq)]
pub enum FilterExpression {
    And(Box<FilterExpression>, Box<FilterExpression>),
    Or(Box<FilterExpression>, Box<FilterExpression>),
    Not(Box<FilterExpression>),
    Compare {
        field: String,
        field_index: usize,
        op: CompareOp,
        literal: Literal,
    },
}

impl FilterExpression {
    /// Parses and type-checks `text` against `descriptor`.
    pub fn parse(text: &str, descriptor: &TypeDescriptor) -> Result<FilterExpression, DcpsError> {
        Self::parse_with_fields(text, &descriptor.fields)
    }

    /// Like [`FilterExpression::parse`] but against a bare field list
    /// (used by the process engine, whose message schemas have no keys).
    pub fn parse_with_fields(
        text: &str,
        fields: &[crate::dcps::types::FieldDef],
    ) -> Result<FilterExpression, DcpsError> {
        let tokens = lex(text)?;
        let mut parser = Parser {
            tokens,
            pos: 0,
            fields,
            input_len: text.len(),
        };
        let expr = parser.expr()?;
        if parser.pos < parser.tokens.len() {
            return Err(DcpsError::ParseError {
                offset: parser.tokens[parser.pos].offset,
                message: "unexpected trailing input".to_string(),
            });
        }
        Ok(expr)
    }

    /// Evaluates the expression over a conforming sample.
    pub fn eval(&self, values: &[FieldValue]) -> bool {
        match self {
            FilterExpression::And(a, b) => a.eval(values) && b.eval(values),
            FilterExpression::Or(a, b) => a.eval(values) || b.eval(values),
            FilterExpression::Not(inner) => !inner.eval(values),
            FilterExpression::Compare {
                field_index,
                op,
                literal,
                ..
            } => eval_compare(&values[*field_index], *op, literal),
        }
    }

    /// Canonical text form; parses back to an equal tree.
    pub fn to_text(&self) -> String {
        match self {
            FilterExpression::And(a, b) => format!("({} AND {})", a.to_text(), b.to_text()),
            FilterExpression::Or(a, b) => format!("({} OR {})", a.to_text(), b.to_text()),
            FilterExpression::Not(inner) => format!("NOT ({})", inner.to_text()),
            FilterExpression::Compare {
                field, op, literal, ..
            } => format!("{field} {op} {literal}"),
        }
    }
}

fn eval_compare(value: &FieldValue, op: CompareOp, literal: &Literal) -> bool {
    match (value, literal) {
        (FieldValue::Str(v), Literal::Str(l)) => match op {
            CompareOp::Eq => v == l,
            CompareOp::Ne => v != l,
            _ => unreachable!("rejected at type check"),
        },
        (FieldValue::Bool(v), Literal::Bool(l)) => match op {
            CompareOp::Eq => v == l,
            CompareOp::Ne => v != l,
            _ => unreachable!("rejected at type check"),
        },
        (FieldValue::F32(v), lit) => compare_f64(*v as f64, op, literal_as_f64(lit)),
        (FieldValue::F64(v), lit) => compare_f64(*v, op, literal_as_f64(lit)),
        (value, Literal::Int(l)) => {
            let v = match value {
                FieldValue::U32(v) => *v as i128,
                FieldValue::U64(v) => *v as i128,
                FieldValue::I64(v) => *v as i128,
                _ => unreachable!("rejected at type check"),
            };
            compare_ord(v, op, *l as i128)
        }
        _ => unreachable!("rejected at type check"),
    }
}

fn literal_as_f64(literal: &Literal) -> f64 {
    match literal {
        Literal::Int(v) => *v as f64,
        Literal::Float(v) => *v,
        _ => unreachable!("rejected at type check"),
    }
}

fn compare_f64(v: f64, op: CompareOp, l: f64) -> bool {
    // IEEE semantics: every ordered comparison with NaN is false, != true.
    match op {
        CompareOp::Eq => v == l,
        CompareOp::Ne => v != l,
        CompareOp::Lt => v < l,
        CompareOp::Le => v <= l,
        CompareOp::Gt => v > l,
        CompareOp::Ge => v >= l,
    }
}

fn compare_ord<T: Ord>(v: T, op: CompareOp, l: T) -> bool {
    match op {
        CompareOp::Eq => v == l,
        CompareOp::Ne => v != l,
        CompareOp::Lt => v < l,
        CompareOp::Le => v <= l,
        CompareOp::Gt => v > l,
        CompareOp::Ge => v >= l,
    }
}

#[derive(Debug, Clone, PartialEq)]
enum TokenKind {
    Word(String),
    Int(i64),
    Float(f64),
    Str(String),
    Op(CompareOp),
    LParen,
    RParen,
}

#[derive(Debug, Clone)]
struct Token {
    kind: TokenKind,
    offset: usize,
}

fn lex(text: &str) -> Result<Vec<Token>, DcpsError> {
    let bytes = text.as_bytes();
    let mut tokens = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let b = bytes[i];
        let start = i;
        match b {
            b' ' | b'\t' | b'\r' | b'\n' => {
                i += 1;
            }
            b'(' => {
                tokens.push(Token {
                    kind: TokenKind::LParen,
                    offset: start,
                });
                i += 1;
            }
            b')' => {
                tokens.push(Token {
                    kind: TokenKind::RParen,
                    offset: start,
                });
                i += 1;
            }
            b'=' | b'!' | b'<' | b'>' => {
                let two = bytes.get(i + 1) == Some(&b'=');
                let op = match (b, two) {
                    (b'=', true) => CompareOp::Eq,
                    (b'!', true) => CompareOp::Ne,
                    (b'<', true) => CompareOp::Le,
                    (b'>', true) => CompareOp::Ge,
                    (b'<', false) => CompareOp::Lt,
                    (b'>', false) => CompareOp::Gt,
                    _ => {
                        return Err(DcpsError::ParseError {
                            offset: start,
                            message: format!("unexpected character `{}`", b as char),
                        })
                    }
                };
                i += if two { 2 } else { 1 };
                tokens.push(Token {
                    kind: TokenKind::Op(op),
                    offset: start,
                });
            }
            b'\'' => {
                i += 1;
                let content_start = i;
                while i < bytes.len() && bytes[i] != b'\'' {
                    i += 1;
                }
                if i == bytes.len() {
                    return Err(DcpsError::ParseError {
                        offset: start,
                        message: "unterminated string literal".to_string(),
                    });
                }
                let content = std::str::from_utf8(&bytes[content_start..i])
                    .map_err(|_| DcpsError::ParseError {
                        offset: start,
                        message: "invalid UTF-8 in string literal".to_string(),
                    })?
                    .to_string();
                i += 1;
                tokens.push(Token {
                    kind: TokenKind::Str(content),
                    offset: start,
                });
            }
            b'-' | b'0'..=b'9' => {
                i += 1;
                let mut is_float = false;
                while i < bytes.len() && (bytes[i].is_ascii_digit() || bytes[i] == b'.') {
                    if bytes[i] == b'.' {
                        if is_float {
                            break;
                        }
                        is_float = true;
                    }
                    i += 1;
                }
                let raw = &text[start..i];
                if raw == "-" {
                    return Err(DcpsError::ParseError {
                        offset: start,
                        message: "expected digits after `-`".to_string(),
                    });
                }
                let kind = if is_float {
                    TokenKind::Float(raw.parse().map_err(|_| DcpsError::ParseError {
                        offset: start,
                        message: format!("invalid float literal `{raw}`"),
                    })?)
                } else {
                    TokenKind::Int(raw.parse().map_err(|_| DcpsError::ParseError {
                        offset: start,
                        message: format!("invalid integer literal `{raw}`"),
                    })?)
                };
                tokens.push(Token { kind, offset: start });
            }
            b'a'..=b'z' | b'A'..=b'Z' | b'_' => {
                i += 1;
                while i < bytes.len()
                    && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_')
                {
                    i += 1;
                }
                tokens.push(Token {
                    kind: TokenKind::Word(text[start..i].to_string()),
                    offset: start,
                });
            }
            other => {
                return Err(DcpsError::ParseError {
                    offset: start,
                    message: format!("unexpected character `{}`", other as char),
                });
            }
        }
    }
    Ok(tokens)
}

struct Parser<'a> {
    tokens: Vec<Token>,
    pos: usize,
    fields: &'a [crate::dcps::types::FieldDef],
    input_len: usize,
}

impl<'a> Parser<'a> {
    fn peek_word(&self, keyword: &str) -> bool {
        matches!(
            self.tokens.get(self.pos).map(|t| &t.kind),
            Some(TokenKind::Word(w)) if w.eq_ignore_ascii_case(keyword)
        )
    }

    fn error_here(&self, message: impl Into<String>) -> DcpsError {
        let offset = self
            .tokens
            .get(self.pos)
            .map(|t| t.offset)
            .unwrap_or(self.input_len);
        DcpsError::ParseError {
            offset,
            message: message.into(),
        }
    }

    fn expr(&mut self) -> Result<FilterExpression, DcpsError> {
        let mut left = self.and_expr()?;
        while self.peek_word("OR") {
            self.pos += 1;
            let right = self.and_expr()?;
            left = FilterExpression::Or(Box::new(left), Box::new(right));
        }
        Ok(left)
    }

    fn and_expr(&mut self) -> Result<FilterExpression, DcpsError> {
        let mut left = self.not_expr()?;
        while self.peek_word("AND") {
            self.pos += 1;
            let right = self.not_expr()?;
            left = FilterExpression::And(Box::new(left), Box::new(right));
        }
        Ok(left)
    }

    fn not_expr(&mut self) -> Result<FilterExpression, DcpsError> {
        if self.peek_word("NOT") {
            self.pos += 1;
            let inner = self.not_expr()?;
            return Ok(FilterExpression::Not(Box::new(inner)));
        }
        if matches!(
            self.tokens.get(self.pos).map(|t| &t.kind),
            Some(TokenKind::LParen)
        ) {
            self.pos += 1;
            let inner = self.expr()?;
            if !matches!(
                self.tokens.get(self.pos).map(|t| &t.kind),
                Some(TokenKind::RParen)
            ) {
                return Err(self.error_here("expected `)`"));
            }
            self.pos += 1;
            return Ok(inner);
        }
        self.comparison()
    }

    fn comparison(&mut self) -> Result<FilterExpression, DcpsError> {
        let field_token = self
            .tokens
            .get(self.pos)
            .cloned()
            .ok_or_else(|| self.error_here("expected comparison"))?;
        let field = match field_token.kind {
            TokenKind::Word(w) => {
                for kw in ["AND", "OR", "NOT", "TRUE", "FALSE"] {
                    if w.eq_ignore_ascii_case(kw) {
                        return Err(DcpsError::ParseError {
                            offset: field_token.offset,
                            message: format!("keyword `{w}` where a field name was expected"),
                        });
                    }
                }
                w
            }
            _ => return Err(self.error_here("expected field name")),
        };
        self.pos += 1;
        let op = match self.tokens.get(self.pos).map(|t| t.kind.clone()) {
            Some(TokenKind::Op(op)) => op,
            _ => return Err(self.error_here("expected comparison operator")),
        };
        self.pos += 1;
        let literal_token = self
            .tokens
            .get(self.pos)
            .cloned()
            .ok_or_else(|| self.error_here("expected literal"))?;
        let literal = match literal_token.kind {
            TokenKind::Int(v) => Literal::Int(v),
            TokenKind::Float(v) => Literal::Float(v),
            TokenKind::Str(v) => Literal::Str(v),
            TokenKind::Word(w) if w.eq_ignore_ascii_case("true") => Literal::Bool(true),
            TokenKind::Word(w) if w.eq_ignore_ascii_case("false") => Literal::Bool(false),
            TokenKind::Word(_) => {
                return Err(DcpsError::ParseError {
                    offset: literal_token.offset,
                    message: "right-hand side must be a literal".to_string(),
                })
            }
            _ => return Err(self.error_here("expected literal")),
        };
        self.pos += 1;
        let field_index = self
            .fields
            .iter()
            .position(|f| f.name == field)
            .ok_or_else(|| DcpsError::TypeError {
                field: field.clone(),
                op: op.to_string(),
                message: "field not present in topic type".to_string(),
            })?;
        check_types(&field, self.fields[field_index].kind, op, &literal)?;
        Ok(FilterExpression::Compare {
            field,
            field_index,
            op,
            literal,
        })
    }
}

fn check_types(
    field: &str,
    kind: FieldKind,
    op: CompareOp,
    literal: &Literal,
) -> Result<(), DcpsError> {
    let type_error = |message: &str| DcpsError::TypeError {
        field: field.to_string(),
        op: op.to_string(),
        message: message.to_string(),
    };
    let equality_only = matches!(op, CompareOp::Eq | CompareOp::Ne);
    match kind {
        FieldKind::String => match literal {
            Literal::Str(_) if equality_only => Ok(()),
            Literal::Str(_) => Err(type_error("string fields support only == and !=")),
            _ => Err(type_error("string field compared with non-string literal")),
        },
        FieldKind::Bool => match literal {
            Literal::Bool(_) if equality_only => Ok(()),
            Literal::Bool(_) => Err(type_error("bool fields support only == and !=")),
            _ => Err(type_error("bool field compared with non-bool literal")),
        },
        FieldKind::F32 | FieldKind::F64 => match literal {
            Literal::Int(_) | Literal::Float(_) => Ok(()),
            _ => Err(type_error("float field compared with non-numeric literal")),
        },
        FieldKind::U32 | FieldKind::U64 | FieldKind::I64 => match literal {
            Literal::Int(_) => Ok(()),
            Literal::Float(_) => {
                Err(type_error("integer field compared with float literal"))
            }
            _ => Err(type_error("integer field compared with non-integer literal")),
        },
    }
}
