//! Auth-flow demo: exercises the approval process over the fixture
//! accounts and cards through every user/card combination, plus expiry
//! cases, and checks outcome invariance across invoke completion orders.

use mdds_core::services::auth::{
    AuthFlow, REASON_CARD_CHECK_FAILED, REASON_USER_CHECK_FAILED,
};
use mdds_core::services::cards::CardStore;
use mdds_core::services::clock::{parse_date, ServiceClock};
use mdds_core::services::store::AccountStore;
use serde::Serialize;
use std::path::Path;
use std::sync::Arc;

#[derive(Debug)]
pub enum AuthDemoError {
    Fixture(String),
    Internal(String),
}

impl std::fmt::Display for AuthDemoError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            AuthDemoError::Fixture(message) => write!(f, "fixture error: {message}"),
            AuthDemoError::Internal(message) => write!(f, "auth demo failed: {message}"),
        }
    }
}

impl std::error::Error for AuthDemoError {}

#[derive(Debug, Clone, Serialize)]
pub struct CaseOutcome {
    pub case: String,
    pub user_login: String,
    pub card_number: String,
    pub approved: bool,
    pub reason: String,
    pub both_checks_ran: bool,
    pub expected_approved: bool,
    pub expected_reason: String,
    pub passed: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct AuthDemoReport {
    pub today: String,
    pub cases: Vec<CaseOutcome>,
    pub order_invariance_trials: u32,
    pub order_invariant: bool,
    pub all_passed: bool,
}

/// Fixture credentials recovered from the raw JSONL (the loaded store only
/// keeps hashes).
struct FixtureCreds {
    login: String,
    password: String,
    expired_login: Option<(String, String)>,
}

fn read_creds(path: &Path, today: chrono::NaiveDate) -> Result<FixtureCreds, AuthDemoError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| AuthDemoError::Fixture(format!("{}: {e}", path.display())))?;
    let mut active: Option<(String, String)> = None;
    let mut expired: Option<(String, String)> = None;
    for line in text.lines().filter(|l| !l.trim().is_empty()) {
        let value: serde_json::Value = serde_json::from_str(line)
            .map_err(|e| AuthDemoError::Fixture(format!("bad JSONL line: {e}")))?;
        let (Some(login), Some(password), Some(expiration)) = (
            value["user_login"].as_str(),
            value["password"].as_str(),
            value["account_expiration_date"].as_str(),
        ) else {
            continue; // hashed lines carry no plaintext to demo with
        };
        let Some(expiry) = parse_date(expiration) else {
            continue;
        };
        let pair = (login.to_string(), password.to_string());
        if expiry >= today && active.is_none() {
            active = Some(pair);
        } else if expiry < today && expired.is_none() {
            expired = Some(pair);
        }
    }
    let (login, password) = active.ok_or_else(|| {
        AuthDemoError::Fixture("no unexpired plaintext account in the fixture".to_string())
    })?;
    Ok(FixtureCreds {
        login,
        password,
        expired_login: expired,
    })
}

fn fixture_cards(store: &CardStore, path: &Path) -> Result<(String, String), AuthDemoError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| AuthDemoError::Fixture(format!("{}: {e}", path.display())))?;
    let mut approved = None;
    let mut declined = None;
    for line in text.lines().filter(|l| !l.trim().is_empty()) {
        let value: serde_json::Value = serde_json::from_str(line)
            .map_err(|e| AuthDemoError::Fixture(format!("bad JSONL line: {e}")))?;
        let (Some(number), Some(flag)) =
            (value["card_number"].as_str(), value["approved"].as_bool())
        else {
            continue;
        };
        if flag && approved.is_none() {
            approved = Some(number.to_string());
        }
        if !flag && declined.is_none() {
            declined = Some(number.to_string());
        }
    }
    let _ = store;
    match (approved, declined) {
        (Some(a), Some(d)) => Ok((a, d)),
        _ => Err(AuthDemoError::Fixture(
            "need one approved and one declined card in the fixture".to_string(),
        )),
    }
}

pub fn run_auth_demo(
    accounts_path: &Path,
    cards_path: &Path,
    trials: u32,
    today: chrono::NaiveDate,
) -> Result<AuthDemoReport, AuthDemoError> {
    let accounts = AccountStore::load_jsonl(accounts_path)
        .map_err(|e| AuthDemoError::Fixture(e.to_string()))?;
    let cards = CardStore::load_jsonl(cards_path)
        .map_err(|e| AuthDemoError::Fixture(e.to_string()))?;
    let creds = read_creds(accounts_path, today)?;
    let (good_card, bad_card) = fixture_cards(&cards, cards_path)?;
    // Any fixture card has a far-future expiry in its own record; the demo
    // passes the recorded expiry through.
    let card_expiry = |number: &str| -> String {
        let text = std::fs::read_to_string(cards_path).unwrap_or_default();
        for line in text.lines() {
            if let Ok(value) = serde_json::from_str::<serde_json::Value>(line) {
                if value["card_number"].as_str() == Some(number) {
                    return format!(
                        "{:02}/{}",
                        value["expiry_month"].as_u64().unwrap_or(1),
                        value["expiry_year"].as_i64().unwrap_or(2099)
                    );
                }
            }
        }
        "12/2099".to_string()
    };

    let clock = ServiceClock::fixed(today);
    let mut flow = AuthFlow::in_process(Arc::new(accounts), Arc::new(cards), clock)
        .map_err(|e| AuthDemoError::Internal(e.to_string()))?;

    struct Case {
        name: &'static str,
        login: String,
        password: String,
        card: String,
        expect_approved: bool,
        expect_reason: &'static str,
    }
    let mut cases = vec![
        Case {
            name: "good_user_good_card",
            login: creds.login.clone(),
            password: creds.password.clone(),
            card: good_card.clone(),
            expect_approved: true,
            expect_reason: "",
        },
        Case {
            name: "bad_password_good_card",
            login: creds.login.clone(),
            password: format!("{}x", creds.password),
            card: good_card.clone(),
            expect_approved: false,
            expect_reason: REASON_USER_CHECK_FAILED,
        },
        Case {
            name: "good_user_declined_card",
            login: creds.login.clone(),
            password: creds.password.clone(),
            card: bad_card.clone(),
            expect_approved: false,
            expect_reason: REASON_CARD_CHECK_FAILED,
        },
        Case {
            name: "bad_password_declined_card",
            login: creds.login.clone(),
            password: format!("{}x", creds.password),
            card: bad_card.clone(),
            expect_approved: false,
            expect_reason: REASON_USER_CHECK_FAILED,
        },
        Case {
            name: "unknown_login",
            login: "no_such_user".to_string(),
            password: "whatever".to_string(),
            card: good_card.clone(),
            expect_approved: false,
            expect_reason: REASON_USER_CHECK_FAILED,
        },
    ];
    if let Some((login, password)) = creds.expired_login {
        cases.push(Case {
            name: "expired_account",
            login,
            password,
            card: good_card.clone(),
            expect_approved: false,
            expect_reason: REASON_USER_CHECK_FAILED,
        });
    }

    let mut outcomes = Vec::new();
    for case in &cases {
        let outcome = flow
            .approve(&case.login, &case.password, &case.card, &card_expiry(&case.card))
            .map_err(|e| AuthDemoError::Internal(e.to_string()))?;
        let both = outcome.trace.completed("check_user") && outcome.trace.completed("check_card");
        let passed = outcome.approved == case.expect_approved
            && outcome.reason == case.expect_reason
            && both;
        outcomes.push(CaseOutcome {
            case: case.name.to_string(),
            user_login: case.login.clone(),
            card_number: case.card.clone(),
            approved: outcome.approved,
            reason: outcome.reason,
            both_checks_ran: both,
            expected_approved: case.expect_approved,
            expected_reason: case.expect_reason.to_string(),
            passed,
        });
    }

    // Completion-order invariance: re-run the truth table with the invoke
    // latencies swapped each trial.
    let mut invariant = true;
    for trial in 0..trials {
        let (user_delay, card_delay) = if trial % 2 == 0 { (0, 10) } else { (10, 0) };
        flow.options.invoke_delays_ms.clear();
        flow.options
            .invoke_delays_ms
            .insert("check_user".to_string(), user_delay);
        flow.options
            .invoke_delays_ms
            .insert("check_card".to_string(), card_delay);
        for (case, baseline) in cases.iter().zip(&outcomes) {
            let outcome = flow
                .approve(&case.login, &case.password, &case.card, &card_expiry(&case.card))
                .map_err(|e| AuthDemoError::Internal(e.to_string()))?;
            if outcome.approved != baseline.approved || outcome.reason != baseline.reason {
                invariant = false;
            }
        }
    }

    let all_passed = outcomes.iter().all(|o| o.passed) && invariant;
    Ok(AuthDemoReport {
        today: mdds_core::services::clock::format_date(today),
        cases: outcomes,
        order_invariance_trials: trials,
        order_invariant: invariant,
        all_passed,
    })
}
