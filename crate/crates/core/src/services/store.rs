//! Account store.
//!
//! Accounts live in memory and persist as JSON-lines, one account per
//! line. Passwords are stored salted-hashed; fixture lines carrying a
//! plaintext `password` are hashed at load. Saving is atomic (temp file +
//! rename).

use crate::services::clock::{format_date, parse_date};
use crate::services::sql::{resolve_column, Database, SqlError};
use chrono::NaiveDate;
use rand::RngCore;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: {message}")]
    Format { line: usize, message: String },
    #[error("account `{0}` already exists")]
    Duplicate(String),
    #[error(transparent)]
    Sql(#[from] SqlError),
}

/// One account row: login, salted password hash, normalized privilege and
/// the creation/expiration dates.
#[derive(Debug, Clone, PartialEq)]
pub struct UserAccount {
    pub user_login: String,
    pub password_salt: String,
    pub password_hash: String,
    pub user_privilege: String,
    pub account_creation_date: NaiveDate,
    pub account_expiration_date: NaiveDate,
}

pub const MAX_FIELD_LEN: usize = 25;

fn hash_password(salt_hex: &str, password: &str) -> String {
    let mut hasher = Sha256::new();
    hasher.update(salt_hex.as_bytes());
    hasher.update(b":");
    hasher.update(password.as_bytes());
    hex::encode(hasher.finalize())
}

impl UserAccount {
    /// Builds an account from fixture fields, hashing the plaintext
    /// password with a fresh salt and normalizing the privilege to upper
    /// case ('Full' and 'FULL' are the same privilege).
    pub fn from_plaintext(
        login: &str,
        password: &str,
        privilege: &str,
        creation: NaiveDate,
        expiration: NaiveDate,
    ) -> Result<UserAccount, StoreError> {
        for (what, value) in [("login", login), ("password", password), ("privilege", privilege)] {
            if value.len() > MAX_FIELD_LEN {
                return Err(StoreError::Format {
                    line: 0,
                    message: format!("{what} exceeds {MAX_FIELD_LEN} characters"),
                });
            }
        }
        if expiration < creation {
            return Err(StoreError::Format {
                line: 0,
                message: "expiration date precedes creation date".to_string(),
            });
        }
        let mut salt = [0u8; 16];
        rand::thread_rng().fill_bytes(&mut salt);
        let password_salt = hex::encode(salt);
        let password_hash = hash_password(&password_salt, password);
        Ok(UserAccount {
            user_login: login.to_string(),
            password_salt,
            password_hash,
            user_privilege: privilege.to_ascii_uppercase(),
            account_creation_date: creation,
            account_expiration_date: expiration,
        })
    }

    pub fn verify_password(&self, password: &str) -> bool {
        hash_password(&self.password_salt, password) == self.password_hash
    }
}

/// Serialized account line. Either `password` (plaintext fixture input,
/// hashed at load) or `password_salt` + `password_hash` must be present.
#[derive(Debug, Serialize, Deserialize)]
struct AccountLine {
    user_login: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    password: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    password_salt: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    password_hash: Option<String>,
    user_privilege: String,
    account_creation_date: String,
    account_expiration_date: String,
}

/// The result of a credential check.
#[derive(Debug, Clone, PartialEq)]
pub struct UserCheckResult {
    pub matched: bool,
    pub privilege: Option<String>,
    pub expiration: Option<NaiveDate>,
}

impl UserCheckResult {
    pub fn no_match() -> Self {
        UserCheckResult {
            matched: false,
            privilege: None,
            expiration: None,
        }
    }
}

#[derive(Debug, Default)]
pub struct AccountStore {
    accounts: BTreeMap<String, UserAccount>,
}

impl AccountStore {
    pub fn new() -> Self {
        AccountStore::default()
    }

    pub fn len(&self) -> usize {
        self.accounts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.accounts.is_empty()
    }

    pub fn get(&self, login: &str) -> Option<&UserAccount> {
        self.accounts.get(login)
    }

    pub fn insert(&mut self, account: UserAccount) -> Result<(), StoreError> {
        if self.accounts.contains_key(&account.user_login) {
            return Err(StoreError::Duplicate(account.user_login));
        }
        self.accounts.insert(account.user_login.clone(), account);
        Ok(())
    }

    /// Login check: the account exists, the password hash verifies, and
    /// the account has not expired as of `today`.
    pub fn user_check(&self, login: &str, password: &str, today: NaiveDate) -> UserCheckResult {
        let Some(account) = self.accounts.get(login) else {
            return UserCheckResult::no_match();
        };
        if !account.verify_password(password) {
            return UserCheckResult::no_match();
        }
        if today > account.account_expiration_date {
            return UserCheckResult::no_match();
        }
        UserCheckResult {
            matched: true,
            privilege: Some(account.user_privilege.clone()),
            expiration: Some(account.account_expiration_date),
        }
    }

    pub fn load_jsonl(path: &Path) -> Result<AccountStore, StoreError> {
        let text = std::fs::read_to_string(path)?;
        let mut store = AccountStore::new();
        for (index, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let parsed: AccountLine =
                serde_json::from_str(line).map_err(|e| StoreError::Format {
                    line: index + 1,
                    message: e.to_string(),
                })?;
            let creation = parse_date(&parsed.account_creation_date).ok_or_else(|| {
                StoreError::Format {
                    line: index + 1,
                    message: "bad account_creation_date".to_string(),
                }
            })?;
            let expiration = parse_date(&parsed.account_expiration_date).ok_or_else(|| {
                StoreError::Format {
                    line: index + 1,
                    message: "bad account_expiration_date".to_string(),
                }
            })?;
            let account = match (&parsed.password, &parsed.password_salt, &parsed.password_hash)
            {
                (Some(plain), _, _) => UserAccount::from_plaintext(
                    &parsed.user_login,
                    plain,
                    &parsed.user_privilege,
                    creation,
                    expiration,
                )
                .map_err(|e| StoreError::Format {
                    line: index + 1,
                    message: e.to_string(),
                })?,
                (None, Some(salt), Some(hash)) => UserAccount {
                    user_login: parsed.user_login.clone(),
                    password_salt: salt.clone(),
                    password_hash: hash.clone(),
                    user_privilege: parsed.user_privilege.to_ascii_uppercase(),
                    account_creation_date: creation,
                    account_expiration_date: expiration,
                },
                _ => {
                    return Err(StoreError::Format {
                        line: index + 1,
                        message: "need `password` or `password_salt`+`password_hash`".to_string(),
                    })
                }
            };
            store.insert(account)?;
        }
        Ok(store)
    }

    /// Writes the store as JSON-lines (hashed form only), atomically.
    pub fn save_jsonl(&self, path: &Path) -> Result<(), StoreError> {
        let tmp = path.with_extension("tmp");
        {
            let mut file = std::fs::File::create(&tmp)?;
            for account in self.accounts.values() {
                let line = AccountLine {
                    user_login: account.user_login.clone(),
                    password: None,
                    password_salt: Some(account.password_salt.clone()),
                    password_hash: Some(account.password_hash.clone()),
                    user_privilege: account.user_privilege.clone(),
                    account_creation_date: format_date(account.account_creation_date),
                    account_expiration_date: format_date(account.account_expiration_date),
                };
                serde_json::to_writer(&mut file, &line).map_err(|e| StoreError::Format {
                    line: 0,
                    message: e.to_string(),
                })?;
                file.write_all(b"\n")?;
            }
            file.sync_all()?;
        }
        std::fs::rename(&tmp, path)?;
        Ok(())
    }

    /// Pulls accounts out of a mini-SQL `user_accounts` table (column
    /// names resolved leniently, values treated as fixture plaintext).
    pub fn from_database(db: &Database) -> Result<AccountStore, StoreError> {
        let table = db
            .tables
            .get("user_accounts")
            .ok_or_else(|| SqlError::UnknownTable("user_accounts".to_string()))?;
        let login = resolve_column("user_accounts", table, "user_login")?;
        let password = resolve_column("user_accounts", table, "password")?;
        let privilege = resolve_column("user_accounts", table, "user_privilege")?;
        let creation = resolve_column("user_accounts", table, "account_creation_date")?;
        let expiration = resolve_column("user_accounts", table, "account_expiration_date")?;
        let mut store = AccountStore::new();
        for row in &table.rows {
            let date = |value: &crate::services::sql::SqlValue| {
                parse_date(&value.render()).ok_or_else(|| StoreError::Format {
                    line: 0,
                    message: "non-date value in date column".to_string(),
                })
            };
            let account = UserAccount::from_plaintext(
                &row[login].render(),
                &row[password].render(),
                &row[privilege].render(),
                date(&row[creation])?,
                date(&row[expiration])?,
            )?;
            store.insert(account)?;
        }
        Ok(store)
    }
}
