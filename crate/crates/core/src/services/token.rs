//! Session tokens bridging login approval to game admission.

use crate::services::clock::ServiceClock;
use chrono::NaiveDate;
use rand::RngCore;
use std::collections::BTreeMap;
use std::sync::Mutex;

/// Issued session token. The id is 128 random bits, hex encoded.
#[derive(Debug, Clone, PartialEq)]
pub struct SessionToken {
    pub token: String,
    pub user_login: String,
    pub privilege: String,
    pub issued_at_ms: u64,
    pub expires_at_ms: u64,
    /// Tokens die with the account: validation fails after this date no
    /// matter the TTL.
    pub account_expiration: NaiveDate,
}

#[derive(Debug, Clone, PartialEq)]
pub enum TokenState {
    Valid(SessionToken),
    Expired,
    Unknown,
}

#[derive(Debug)]
pub struct TokenStore {
    clock: ServiceClock,
    ttl_ms: u64,
    tokens: Mutex<BTreeMap<String, SessionToken>>,
}

impl TokenStore {
    pub fn new(clock: ServiceClock, ttl_ms: u64) -> TokenStore {
        TokenStore {
            clock,
            ttl_ms,
            tokens: Mutex::new(BTreeMap::new()),
        }
    }

    pub fn issue(
        &self,
        user_login: &str,
        privilege: &str,
        account_expiration: NaiveDate,
    ) -> SessionToken {
        let mut id = [0u8; 16];
        rand::thread_rng().fill_bytes(&mut id);
        let issued_at_ms = self.clock.now_ms();
        let token = SessionToken {
            token: hex::encode(id),
            user_login: user_login.to_string(),
            privilege: privilege.to_string(),
            issued_at_ms,
            expires_at_ms: issued_at_ms + self.ttl_ms,
            account_expiration,
        };
        self.tokens
            .lock()
            .expect("token lock")
            .insert(token.token.clone(), token.clone());
        token
    }

    pub fn validate(&self, token: &str) -> TokenState {
        let tokens = self.tokens.lock().expect("token lock");
        let Some(entry) = tokens.get(token) else {
            return TokenState::Unknown;
        };
        if self.clock.now_ms() >= entry.expires_at_ms
            || self.clock.today() > entry.account_expiration
        {
            return TokenState::Expired;
        }
        TokenState::Valid(entry.clone())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::services::clock::parse_date;

    #[test]
    fn issue_validate_expire() {
        let clock = ServiceClock::fixed(parse_date("01/01/2014").unwrap());
        let store = TokenStore::new(clock.clone(), 1_000);
        let token = store.issue("Max", "FULL", parse_date("09/10/2014").unwrap());
        assert_eq!(token.token.len(), 32);
        assert!(matches!(store.validate(&token.token), TokenState::Valid(_)));
        assert_eq!(store.validate("bogus"), TokenState::Unknown);

        clock.advance_ms(1_000);
        assert_eq!(store.validate(&token.token), TokenState::Expired);
    }

    #[test]
    fn token_dies_with_the_account() {
        let clock = ServiceClock::fixed(parse_date("09/10/2014").unwrap());
        let store = TokenStore::new(clock.clone(), 1_000_000);
        let token = store.issue("Max", "FULL", parse_date("09/10/2014").unwrap());
        assert!(matches!(store.validate(&token.token), TokenState::Valid(_)));
        // The next day the account is past its expiration date.
        clock.set_today(parse_date("09/11/2014").unwrap());
        assert_eq!(store.validate(&token.token), TokenState::Expired);
    }

    #[test]
    fn tokens_are_unique() {
        let clock = ServiceClock::fixed(parse_date("01/01/2014").unwrap());
        let store = TokenStore::new(clock, 1_000);
        let a = store.issue("Max", "FULL", parse_date("09/10/2014").unwrap());
        let b = store.issue("Max", "FULL", parse_date("09/10/2014").unwrap());
        assert_ne!(a.token, b.token);
    }
}
