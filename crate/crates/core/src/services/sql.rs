//! Mini-SQL interpreter over an in-memory store.
//!
//! Supported statements:
//!
//! ```text
//! CREATE DATABASE name;
//! CREATE TABLE name (col TYPE [NOT NULL], ...);      TYPE ∈ {VARCHAR(n), DATE}
//! INSERT INTO table ('v1', 'v2', ...);
//! SELECT col[, col] FROM table WHERE col == 'literal'
//! ```
//!
//! Keywords are case-insensitive; identifiers are kept as written. Dates
//! use MM/DD/YYYY on the surface and are stored as calendar dates. The
//! first NOT NULL column of a table acts as its unique key. Column
//! references resolve exactly first, then case-insensitively, then by a
//! unique near-spelled candidate (edit distance <= 2) so legacy schema
//! typos keep working.

use chrono::NaiveDate;
use std::collections::{BTreeMap, BTreeSet};
use thiserror::Error;

pub const DATE_FORMAT: &str = "%m/%d/%Y";

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SqlError {
    #[error("parse error at byte {offset}: {message}")]
    ParseError { offset: usize, message: String },
    #[error("database `{0}` already exists")]
    DatabaseExists(String),
    #[error("table `{0}` already exists")]
    TableExists(String),
    #[error("unknown table `{0}`")]
    UnknownTable(String),
    #[error("unknown column `{column}` in table `{table}`")]
    UnknownColumn { column: String, table: String },
    #[error("column `{column}` is ambiguous in table `{table}`")]
    AmbiguousColumn { column: String, table: String },
    #[error("expected {expected} values, got {got}")]
    ArityMismatch { expected: usize, got: usize },
    #[error("constraint violation: {0}")]
    ConstraintViolation(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ColumnType {
    Varchar(u32),
    Date,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ColumnDef {
    pub name: String,
    pub ty: ColumnType,
    pub not_null: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Statement {
    CreateDatabase {
        name: String,
    },
    CreateTable {
        name: String,
        columns: Vec<ColumnDef>,
    },
    Insert {
        table: String,
        values: Vec<String>,
    },
    Select {
        columns: Vec<String>,
        table: String,
        where_column: String,
        where_value: String,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub enum SqlValue {
    Varchar(String),
    Date(NaiveDate),
}

impl SqlValue {
    pub fn render(&self) -> String {
        match self {
            SqlValue::Varchar(s) => s.clone(),
            SqlValue::Date(d) => d.format(DATE_FORMAT).to_string(),
        }
    }
}

#[derive(Debug, Default)]
pub struct Table {
    pub columns: Vec<ColumnDef>,
    pub rows: Vec<Vec<SqlValue>>,
}

impl Table {
    /// Index of the unique-key column: the first declared NOT NULL column.
    fn unique_column(&self) -> Option<usize> {
        self.columns.iter().position(|c| c.not_null)
    }
}

/// In-memory store: registered database names plus tables.
#[derive(Debug, Default)]
pub struct Database {
    pub names: BTreeSet<String>,
    pub tables: BTreeMap<String, Table>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ExecResult {
    DatabaseCreated,
    TableCreated,
    Inserted,
    Rows(Vec<Vec<String>>),
}

// ---------------------------------------------------------------------
// Lexer
// ---------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Word(String),
    Str(String),
    Number(u32),
    LParen,
    RParen,
    Comma,
    Semicolon,
    EqEq,
}

#[derive(Debug, Clone)]
struct SpannedTok {
    tok: Tok,
    offset: usize,
}

fn lex(text: &str) -> Result<Vec<SpannedTok>, SqlError> {
    let bytes = text.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let start = i;
        match bytes[i] {
            b' ' | b'\t' | b'\r' | b'\n' => i += 1,
            b'(' => {
                out.push(SpannedTok { tok: Tok::LParen, offset: start });
                i += 1;
            }
            b')' => {
                out.push(SpannedTok { tok: Tok::RParen, offset: start });
                i += 1;
            }
            b',' => {
                out.push(SpannedTok { tok: Tok::Comma, offset: start });
                i += 1;
            }
            b';' => {
                out.push(SpannedTok { tok: Tok::Semicolon, offset: start });
                i += 1;
            }
            b'=' => {
                if bytes.get(i + 1) == Some(&b'=') {
                    out.push(SpannedTok { tok: Tok::EqEq, offset: start });
                    i += 2;
                } else {
                    return Err(SqlError::ParseError {
                        offset: start,
                        message: "expected `==`".to_string(),
                    });
                }
            }
            b'\'' => {
                i += 1;
                let content_start = i;
                while i < bytes.len() && bytes[i] != b'\'' {
                    i += 1;
                }
                if i == bytes.len() {
                    return Err(SqlError::ParseError {
                        offset: start,
                        message: "unterminated string literal".to_string(),
                    });
                }
                out.push(SpannedTok {
                    tok: Tok::Str(text[content_start..i].to_string()),
                    offset: start,
                });
                i += 1;
            }
            b'0'..=b'9' => {
                while i < bytes.len() && bytes[i].is_ascii_digit() {
                    i += 1;
                }
                let value: u32 = text[start..i].parse().map_err(|_| SqlError::ParseError {
                    offset: start,
                    message: "number out of range".to_string(),
                })?;
                out.push(SpannedTok {
                    tok: Tok::Number(value),
                    offset: start,
                });
            }
            b'a'..=b'z' | b'A'..=b'Z' | b'_' => {
                while i < bytes.len()
                    && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_')
                {
                    i += 1;
                }
                out.push(SpannedTok {
                    tok: Tok::Word(text[start..i].to_string()),
                    offset: start,
                });
            }
            other => {
                return Err(SqlError::ParseError {
                    offset: start,
                    message: format!("unexpected character `{}`", other as char),
                });
            }
        }
    }
    Ok(out)
}

// ---------------------------------------------------------------------
// Parser
// ---------------------------------------------------------------------

struct Parser {
    tokens: Vec<SpannedTok>,
    pos: usize,
    input_len: usize,
}

impl Parser {
    fn error_here(&self, message: impl Into<String>) -> SqlError {
        SqlError::ParseError {
            offset: self
                .tokens
                .get(self.pos)
                .map(|t| t.offset)
                .unwrap_or(self.input_len),
            message: message.into(),
        }
    }

    fn peek(&self) -> Option<&Tok> {
        self.tokens.get(self.pos).map(|t| &t.tok)
    }

    fn take(&mut self) -> Option<Tok> {
        let tok = self.tokens.get(self.pos).map(|t| t.tok.clone());
        if tok.is_some() {
            self.pos += 1;
        }
        tok
    }

    fn keyword(&mut self, word: &str) -> Result<(), SqlError> {
        match self.take() {
            Some(Tok::Word(w)) if w.eq_ignore_ascii_case(word) => Ok(()),
            _ => {
                self.pos = self.pos.saturating_sub(1);
                Err(self.error_here(format!("expected keyword `{word}`")))
            }
        }
    }

    fn peek_keyword(&self, word: &str) -> bool {
        matches!(self.peek(), Some(Tok::Word(w)) if w.eq_ignore_ascii_case(word))
    }

    fn identifier(&mut self, what: &str) -> Result<String, SqlError> {
        match self.take() {
            Some(Tok::Word(w)) => Ok(w),
            _ => {
                self.pos = self.pos.saturating_sub(1);
                Err(self.error_here(format!("expected {what}")))
            }
        }
    }

    fn expect(&mut self, tok: Tok, what: &str) -> Result<(), SqlError> {
        match self.take() {
            Some(t) if t == tok => Ok(()),
            _ => {
                self.pos = self.pos.saturating_sub(1);
                Err(self.error_here(format!("expected {what}")))
            }
        }
    }

    fn statement(&mut self) -> Result<Statement, SqlError> {
        if self.peek_keyword("CREATE") {
            self.pos += 1;
            if self.peek_keyword("DATABASE") {
                self.pos += 1;
                let name = self.identifier("database name")?;
                return Ok(Statement::CreateDatabase { name });
            }
            if self.peek_keyword("TABLE") {
                self.pos += 1;
                let name = self.identifier("table name")?;
                self.expect(Tok::LParen, "`(`")?;
                let mut columns = Vec::new();
                loop {
                    let col_name = self.identifier("column name")?;
                    let ty = self.column_type()?;
                    let mut not_null = false;
                    if self.peek_keyword("NOT") {
                        self.pos += 1;
                        self.keyword("NULL")?;
                        not_null = true;
                    }
                    if columns.iter().any(|c: &ColumnDef| c.name == col_name) {
                        return Err(self.error_here(format!(
                            "duplicate column `{col_name}`"
                        )));
                    }
                    columns.push(ColumnDef {
                        name: col_name,
                        ty,
                        not_null,
                    });
                    match self.take() {
                        Some(Tok::Comma) => continue,
                        Some(Tok::RParen) => break,
                        _ => {
                            self.pos = self.pos.saturating_sub(1);
                            return Err(self.error_here("expected `,` or `)`"));
                        }
                    }
                }
                return Ok(Statement::CreateTable { name, columns });
            }
            return Err(self.error_here("expected DATABASE or TABLE after CREATE"));
        }
        if self.peek_keyword("INSERT") {
            self.pos += 1;
            self.keyword("INTO")?;
            let table = self.identifier("table name")?;
            self.expect(Tok::LParen, "`(`")?;
            let mut values = Vec::new();
            loop {
                match self.take() {
                    Some(Tok::Str(s)) => values.push(s),
                    _ => {
                        self.pos = self.pos.saturating_sub(1);
                        return Err(self.error_here("expected quoted value"));
                    }
                }
                match self.take() {
                    Some(Tok::Comma) => continue,
                    Some(Tok::RParen) => break,
                    _ => {
                        self.pos = self.pos.saturating_sub(1);
                        return Err(self.error_here("expected `,` or `)`"));
                    }
                }
            }
            return Ok(Statement::Insert { table, values });
        }
        if self.peek_keyword("SELECT") {
            self.pos += 1;
            let mut columns = vec![self.identifier("column name")?];
            while self.peek() == Some(&Tok::Comma) {
                self.pos += 1;
                columns.push(self.identifier("column name")?);
            }
            self.keyword("FROM")?;
            let table = self.identifier("table name")?;
            self.keyword("WHERE")?;
            let where_column = self.identifier("column name")?;
            self.expect(Tok::EqEq, "`==`")?;
            let where_value = match self.take() {
                Some(Tok::Str(s)) => s,
                _ => {
                    self.pos = self.pos.saturating_sub(1);
                    return Err(self.error_here("expected quoted literal"));
                }
            };
            return Ok(Statement::Select {
                columns,
                table,
                where_column,
                where_value,
            });
        }
        Err(self.error_here("expected CREATE, INSERT or SELECT"))
    }

    fn column_type(&mut self) -> Result<ColumnType, SqlError> {
        let word = self.identifier("column type")?;
        if word.eq_ignore_ascii_case("VARCHAR") {
            self.expect(Tok::LParen, "`(`")?;
            let len = match self.take() {
                Some(Tok::Number(n)) => n,
                _ => {
                    self.pos = self.pos.saturating_sub(1);
                    return Err(self.error_here("expected VARCHAR length"));
                }
            };
            self.expect(Tok::RParen, "`)`")?;
            return Ok(ColumnType::Varchar(len));
        }
        if word.eq_ignore_ascii_case("DATE") {
            return Ok(ColumnType::Date);
        }
        self.pos = self.pos.saturating_sub(1);
        Err(self.error_here(format!("unsupported column type `{word}`")))
    }

    fn end_of_statement(&mut self) -> Result<(), SqlError> {
        if self.peek() == Some(&Tok::Semicolon) {
            self.pos += 1;
        }
        if self.pos != self.tokens.len() {
            return Err(self.error_here("unexpected trailing input"));
        }
        Ok(())
    }
}

/// Parses exactly one statement (terminating `;` optional).
pub fn parse_sql(text: &str) -> Result<Statement, SqlError> {
    let tokens = lex(text)?;
    let mut parser = Parser {
        tokens,
        pos: 0,
        input_len: text.len(),
    };
    let statement = parser.statement()?;
    parser.end_of_statement()?;
    Ok(statement)
}

/// Parses a `;`-separated script.
pub fn parse_script(text: &str) -> Result<Vec<Statement>, SqlError> {
    let tokens = lex(text)?;
    let mut parser = Parser {
        tokens,
        pos: 0,
        input_len: text.len(),
    };
    let mut statements = Vec::new();
    while parser.pos < parser.tokens.len() {
        statements.push(parser.statement()?);
        if parser.peek() == Some(&Tok::Semicolon) {
            parser.pos += 1;
        }
    }
    Ok(statements)
}

// ---------------------------------------------------------------------
// Execution
// ---------------------------------------------------------------------

fn levenshtein(a: &str, b: &str) -> usize {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    let mut previous: Vec<usize> = (0..=b.len()).collect();
    let mut current = vec![0usize; b.len() + 1];
    for (i, &ca) in a.iter().enumerate() {
        current[0] = i + 1;
        for (j, &cb) in b.iter().enumerate() {
            let substitution = previous[j] + usize::from(ca != cb);
            current[j + 1] = substitution
                .min(previous[j + 1] + 1)
                .min(current[j] + 1);
        }
        std::mem::swap(&mut previous, &mut current);
    }
    previous[b.len()]
}

/// Resolves a column reference: exact match, then unique case-insensitive
/// match, then a unique near-spelling (edit distance <= 2).
pub fn resolve_column(table_name: &str, table: &Table, name: &str) -> Result<usize, SqlError> {
    if let Some(index) = table.columns.iter().position(|c| c.name == name) {
        return Ok(index);
    }
    let ci: Vec<usize> = table
        .columns
        .iter()
        .enumerate()
        .filter(|(_, c)| c.name.eq_ignore_ascii_case(name))
        .map(|(i, _)| i)
        .collect();
    match ci.as_slice() {
        [index] => return Ok(*index),
        [] => {}
        _ => {
            return Err(SqlError::AmbiguousColumn {
                column: name.to_string(),
                table: table_name.to_string(),
            })
        }
    }
    let near: Vec<usize> = table
        .columns
        .iter()
        .enumerate()
        .filter(|(_, c)| levenshtein(&c.name.to_ascii_lowercase(), &name.to_ascii_lowercase()) <= 2)
        .map(|(i, _)| i)
        .collect();
    match near.as_slice() {
        [index] => Ok(*index),
        [] => Err(SqlError::UnknownColumn {
            column: name.to_string(),
            table: table_name.to_string(),
        }),
        _ => Err(SqlError::AmbiguousColumn {
            column: name.to_string(),
            table: table_name.to_string(),
        }),
    }
}

fn coerce(value: &str, ty: ColumnType) -> Result<SqlValue, SqlError> {
    match ty {
        ColumnType::Varchar(max) => {
            if value.len() > max as usize {
                return Err(SqlError::ConstraintViolation(format!(
                    "value `{value}` exceeds VARCHAR({max})"
                )));
            }
            Ok(SqlValue::Varchar(value.to_string()))
        }
        ColumnType::Date => NaiveDate::parse_from_str(value, DATE_FORMAT)
            .map(SqlValue::Date)
            .map_err(|_| {
                SqlError::ConstraintViolation(format!(
                    "value `{value}` is not a MM/DD/YYYY date"
                ))
            }),
    }
}

pub fn execute(statement: &Statement, db: &mut Database) -> Result<ExecResult, SqlError> {
    match statement {
        Statement::CreateDatabase { name } => {
            if !db.names.insert(name.clone()) {
                return Err(SqlError::DatabaseExists(name.clone()));
            }
            Ok(ExecResult::DatabaseCreated)
        }
        Statement::CreateTable { name, columns } => {
            if db.tables.contains_key(name) {
                return Err(SqlError::TableExists(name.clone()));
            }
            db.tables.insert(
                name.clone(),
                Table {
                    columns: columns.clone(),
                    rows: Vec::new(),
                },
            );
            Ok(ExecResult::TableCreated)
        }
        Statement::Insert { table, values } => {
            let t = db
                .tables
                .get_mut(table)
                .ok_or_else(|| SqlError::UnknownTable(table.clone()))?;
            if values.len() != t.columns.len() {
                return Err(SqlError::ArityMismatch {
                    expected: t.columns.len(),
                    got: values.len(),
                });
            }
            let mut row = Vec::with_capacity(values.len());
            for (value, column) in values.iter().zip(&t.columns) {
                row.push(coerce(value, column.ty)?);
            }
            if let Some(key) = t.unique_column() {
                if t.rows.iter().any(|existing| existing[key] == row[key]) {
                    return Err(SqlError::ConstraintViolation(format!(
                        "duplicate value for unique column `{}`",
                        t.columns[key].name
                    )));
                }
            }
            t.rows.push(row);
            Ok(ExecResult::Inserted)
        }
        Statement::Select {
            columns,
            table,
            where_column,
            where_value,
        } => {
            let t = db
                .tables
                .get(table)
                .ok_or_else(|| SqlError::UnknownTable(table.clone()))?;
            let projection: Vec<usize> = columns
                .iter()
                .map(|c| resolve_column(table, t, c))
                .collect::<Result<_, _>>()?;
            let filter_index = resolve_column(table, t, where_column)?;
            let needle = coerce(where_value, t.columns[filter_index].ty)?;
            let rows = t
                .rows
                .iter()
                .filter(|row| row[filter_index] == needle)
                .map(|row| projection.iter().map(|&i| row[i].render()).collect())
                .collect();
            Ok(ExecResult::Rows(rows))
        }
    }
}

/// Parses and executes a whole script, returning the last result.
pub fn run_script(text: &str, db: &mut Database) -> Result<Vec<ExecResult>, SqlError> {
    let statements = parse_script(text)?;
    statements
        .iter()
        .map(|statement| execute(statement, db))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    const CREATE_ACCOUNTS: &str = "CREATE TABLE user_accounts \n(user_login VARCHAR(25) NOT NULL, \npassword VARCHAR(25) NOT NULL, \nuser_privillage VARCHAR(25) NOT NULL, \naccount_creation_date DATE, \naccount_expiration_date DATE);";

    fn seeded() -> Database {
        let mut db = Database::default();
        run_script("CREATE DATABASE game_data;", &mut db).unwrap();
        run_script(CREATE_ACCOUNTS, &mut db).unwrap();
        run_script(
            "INSERT INTO user_accounts ('Max', 'game123', 'Full', '09/10/2008', '09/10/2014');",
            &mut db,
        )
        .unwrap();
        run_script(
            "INSERT INTO user_accounts ('John123', 'helloworld', 'basic', '05/11/2008', '05/11/2013');",
            &mut db,
        )
        .unwrap();
        db
    }

    #[test]
    fn create_table_parses_five_columns_three_not_null() {
        let statement = parse_sql(CREATE_ACCOUNTS).unwrap();
        match statement {
            Statement::CreateTable { name, columns } => {
                assert_eq!(name, "user_accounts");
                assert_eq!(columns.len(), 5);
                assert_eq!(columns.iter().filter(|c| c.not_null).count(), 3);
                assert_eq!(columns[0].ty, ColumnType::Varchar(25));
                assert_eq!(columns[4].ty, ColumnType::Date);
            }
            other => panic!("unexpected statement {other:?}"),
        }
    }

    #[test]
    fn select_parses_projection_and_equality_filter() {
        let statement = parse_sql(
            "SELECT user_privilege, account_expiration_date \nFROM user_accounts \nWHERE user_login == 'Max'",
        )
        .unwrap();
        match statement {
            Statement::Select {
                columns,
                table,
                where_column,
                where_value,
            } => {
                assert_eq!(columns, vec!["user_privilege", "account_expiration_date"]);
                assert_eq!(table, "user_accounts");
                assert_eq!(where_column, "user_login");
                assert_eq!(where_value, "Max");
            }
            other => panic!("unexpected statement {other:?}"),
        }
    }

    #[test]
    fn unsupported_verbs_are_parse_errors() {
        assert!(matches!(
            parse_sql("DROP TABLE x"),
            Err(SqlError::ParseError { .. })
        ));
        assert!(matches!(
            parse_sql("SELECT a FROM t"), // missing WHERE
            Err(SqlError::ParseError { .. })
        ));
    }

    #[test]
    fn select_resolves_near_spelled_columns() {
        let mut db = seeded();
        // The table declares `user_privillage`; the query asks for
        // `user_privilege` — resolved to the unique near match.
        let result = run_script(
            "SELECT user_privilege, account_expiration_date FROM user_accounts WHERE user_login == 'Max'",
            &mut db,
        )
        .unwrap();
        assert_eq!(
            result.last().unwrap(),
            &ExecResult::Rows(vec![vec![
                "Full".to_string(),
                "09/10/2014".to_string()
            ]])
        );
    }

    #[test]
    fn select_absent_login_returns_zero_rows() {
        let mut db = seeded();
        let result = execute(
            &parse_sql("SELECT password FROM user_accounts WHERE user_login == 'Ghost'").unwrap(),
            &mut db,
        )
        .unwrap();
        assert_eq!(result, ExecResult::Rows(Vec::new()));
    }

    #[test]
    fn duplicate_unique_key_is_rejected() {
        let mut db = seeded();
        let result = execute(
            &parse_sql(
                "INSERT INTO user_accounts ('Max', 'x', 'basic', '01/01/2010', '01/01/2011');",
            )
            .unwrap(),
            &mut db,
        );
        assert!(matches!(result, Err(SqlError::ConstraintViolation(_))));
    }

    #[test]
    fn arity_and_length_and_date_constraints() {
        let mut db = seeded();
        assert!(matches!(
            execute(
                &parse_sql("INSERT INTO user_accounts ('a', 'b');").unwrap(),
                &mut db
            ),
            Err(SqlError::ArityMismatch { expected: 5, got: 2 })
        ));
        let long = "x".repeat(26);
        assert!(matches!(
            execute(
                &parse_sql(&format!(
                    "INSERT INTO user_accounts ('{long}', 'b', 'c', '01/01/2010', '01/01/2011');"
                ))
                .unwrap(),
                &mut db
            ),
            Err(SqlError::ConstraintViolation(_))
        ));
        assert!(matches!(
            execute(
                &parse_sql(
                    "INSERT INTO user_accounts ('q', 'b', 'c', 'not-a-date', '01/01/2011');"
                )
                .unwrap(),
                &mut db
            ),
            Err(SqlError::ConstraintViolation(_))
        ));
    }

    #[test]
    fn errors_on_unknown_and_existing_objects() {
        let mut db = seeded();
        assert!(matches!(
            execute(&parse_sql(CREATE_ACCOUNTS).unwrap(), &mut db),
            Err(SqlError::TableExists(_))
        ));
        assert!(matches!(
            execute(
                &parse_sql("INSERT INTO ghosts ('a');").unwrap(),
                &mut db
            ),
            Err(SqlError::UnknownTable(_))
        ));
        assert!(matches!(
            execute(
                &parse_sql("SELECT nothing_close FROM user_accounts WHERE user_login == 'Max'")
                    .unwrap(),
                &mut db
            ),
            Err(SqlError::UnknownColumn { .. })
        ));
    }

    #[test]
    fn where_on_date_columns_compares_dates() {
        let mut db = seeded();
        let result = execute(
            &parse_sql(
                "SELECT user_login FROM user_accounts WHERE account_expiration_date == '09/10/2014'",
            )
            .unwrap(),
            &mut db,
        )
        .unwrap();
        assert_eq!(
            result,
            ExecResult::Rows(vec![vec!["Max".to_string()]])
        );
    }

    #[test]
    fn levenshtein_reference_cases() {
        assert_eq!(levenshtein("kitten", "sitting"), 3);
        assert_eq!(levenshtein("user_privilege", "user_privillage"), 2);
        assert_eq!(levenshtein("same", "same"), 0);
    }
}
