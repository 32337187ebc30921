//! Card fixture store and the Luhn check.

use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CardError {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: {message}")]
    Format { line: usize, message: String },
}

/// One fixture card: number, expiry month/year, and whether the (pretend)
/// issuer approves charges on it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CardRecord {
    pub card_number: String,
    pub expiry_month: u32,
    pub expiry_year: i32,
    pub approved: bool,
}

/// Standard Luhn checksum over a digit string.
pub fn luhn_valid(number: &str) -> bool {
    if number.is_empty() || !number.bytes().all(|b| b.is_ascii_digit()) {
        return false;
    }
    let mut sum = 0u32;
    for (i, byte) in number.bytes().rev().enumerate() {
        let mut digit = (byte - b'0') as u32;
        if i % 2 == 1 {
            digit *= 2;
            if digit > 9 {
                digit -= 9;
            }
        }
        sum += digit;
    }
    sum % 10 == 0
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CardCheckResult {
    pub approved: bool,
}

#[derive(Debug, Default)]
pub struct CardStore {
    cards: BTreeMap<String, CardRecord>,
}

impl CardStore {
    pub fn new() -> Self {
        CardStore::default()
    }

    pub fn len(&self) -> usize {
        self.cards.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cards.is_empty()
    }

    pub fn insert(&mut self, record: CardRecord) -> Result<(), CardError> {
        let len = record.card_number.len();
        if !(12..=19).contains(&len) || !luhn_valid(&record.card_number) {
            return Err(CardError::Format {
                line: 0,
                message: format!("card number `{}` fails validation", record.card_number),
            });
        }
        self.cards.insert(record.card_number.clone(), record);
        Ok(())
    }

    pub fn load_jsonl(path: &Path) -> Result<CardStore, CardError> {
        let text = std::fs::read_to_string(path)?;
        let mut store = CardStore::new();
        for (index, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let record: CardRecord =
                serde_json::from_str(line).map_err(|e| CardError::Format {
                    line: index + 1,
                    message: e.to_string(),
                })?;
            store.insert(record).map_err(|e| CardError::Format {
                line: index + 1,
                message: e.to_string(),
            })?;
        }
        Ok(store)
    }

    /// Approves a charge when the number is Luhn-valid, present in the
    /// fixture with its approval flag set, and not past expiry. Expiry is
    /// inclusive through the end of the stated month.
    pub fn card_check(
        &self,
        card_number: &str,
        expiry_month: u32,
        expiry_year: i32,
        today: chrono::NaiveDate,
    ) -> CardCheckResult {
        use chrono::Datelike;
        if !luhn_valid(card_number) {
            return CardCheckResult { approved: false };
        }
        let Some(record) = self.cards.get(card_number) else {
            return CardCheckResult { approved: false };
        };
        if record.expiry_month != expiry_month || record.expiry_year != expiry_year {
            return CardCheckResult { approved: false };
        }
        let expired = (record.expiry_year, record.expiry_month)
            < (today.year(), today.month());
        if expired {
            return CardCheckResult { approved: false };
        }
        CardCheckResult {
            approved: record.approved,
        }
    }
}

/// Parses "MM/YYYY".
pub fn parse_expiry(text: &str) -> Option<(u32, i32)> {
    let (month, year) = text.split_once('/')?;
    let month: u32 = month.parse().ok()?;
    let year: i32 = year.parse().ok()?;
    if !(1..=12).contains(&month) {
        return None;
    }
    Some((month, year))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::services::clock::parse_date;

    // Expected values computed by hand with the doubling table:
    // 4111111111111111 -> doubled odd positions give 8+2+2+2+2+2+2+2 and
    // units 1*8 -> total 30, divisible by 10.
    #[test]
    fn luhn_hand_computed_vectors() {
        assert!(luhn_valid("4111111111111111"));
        assert!(!luhn_valid("4111111111111112"));
        assert!(luhn_valid("4012888888881881"));
        assert!(!luhn_valid("4012888888881882"));
        assert!(luhn_valid("79927398713")); // classic check digit example
        assert!(!luhn_valid("79927398710"));
        assert!(!luhn_valid(""));
        assert!(!luhn_valid("4111-1111"));
    }

    fn store() -> CardStore {
        let mut s = CardStore::new();
        s.insert(CardRecord {
            card_number: "4111111111111111".to_string(),
            expiry_month: 12,
            expiry_year: 2099,
            approved: true,
        })
        .unwrap();
        s.insert(CardRecord {
            card_number: "4012888888881881".to_string(),
            expiry_month: 12,
            expiry_year: 2099,
            approved: false,
        })
        .unwrap();
        s.insert(CardRecord {
            card_number: "5555555555554444".to_string(),
            expiry_month: 1,
            expiry_year: 2010,
            approved: true,
        })
        .unwrap();
        s
    }

    #[test]
    fn fixture_approval_and_denial() {
        let s = store();
        let today = parse_date("01/01/2014").unwrap();
        assert!(s.card_check("4111111111111111", 12, 2099, today).approved);
        // Declined flag in the fixture.
        assert!(!s.card_check("4012888888881881", 12, 2099, today).approved);
        // Unknown but Luhn-valid number.
        assert!(!s.card_check("79927398713", 12, 2099, today).approved);
        // Luhn-invalid.
        assert!(!s.card_check("4111111111111112", 12, 2099, today).approved);
        // Past expiry.
        assert!(!s.card_check("5555555555554444", 1, 2010, today).approved);
        // Wrong expiry for a known card.
        assert!(!s.card_check("4111111111111111", 11, 2099, today).approved);
    }

    #[test]
    fn insert_validates_number() {
        let mut s = CardStore::new();
        assert!(s
            .insert(CardRecord {
                card_number: "4111111111111112".to_string(),
                expiry_month: 1,
                expiry_year: 2020,
                approved: true,
            })
            .is_err());
        assert!(s
            .insert(CardRecord {
                card_number: "79927398713".to_string(), // 11 digits: too short
                expiry_month: 1,
                expiry_year: 2020,
                approved: true,
            })
            .is_err());
    }

    #[test]
    fn expiry_parsing() {
        assert_eq!(parse_expiry("12/2099"), Some((12, 2099)));
        assert_eq!(parse_expiry("00/2099"), None);
        assert_eq!(parse_expiry("13/2099"), None);
        assert_eq!(parse_expiry("banana"), None);
    }
}
