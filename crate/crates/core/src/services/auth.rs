//! The account tier wired together: the user-check and card-check
//! services, the approval flow that invokes them through the process
//! engine, and the HTTP gateway issuing session tokens the game layer
//! admits.
//!
//! The two checks hold separate store handles on purpose — there is no
//! shared database between them, only message exchange through ports.

use crate::dcps::types::{FieldDef, FieldKind, FieldValue};
use crate::services::cards::{parse_expiry, CardStore};
use crate::services::clock::{format_date, ServiceClock};
use crate::services::http::{Handler, Request, Response};
use crate::services::process::{
    run_process, EngineOptions, Message, MessageSchema, PortBinding, PortDescriptor,
    PortRegistry, ProcessDefinition, ProcessError, Trace,
};
use crate::services::store::AccountStore;
use crate::services::token::{TokenState, TokenStore};
use std::sync::Arc;

/// The shipped approval flow definition.
pub const USER_APPROVE_PROCESS_JSON: &str =
    include_str!("../../../../fixtures/user_approve.process.json");

pub const REASON_USER_CHECK_FAILED: &str = "USER_CHECK_FAILED";
pub const REASON_CARD_CHECK_FAILED: &str = "CARD_CHECK_FAILED";
pub const REASON_SERVICE_UNAVAILABLE: &str = "SERVICE_UNAVAILABLE";

fn schema(fields: &[(&str, FieldKind)]) -> MessageSchema {
    MessageSchema {
        fields: fields
            .iter()
            .map(|(name, kind)| FieldDef {
                name: name.to_string(),
                kind: *kind,
            })
            .collect(),
    }
}

pub fn user_check_schemas() -> (MessageSchema, MessageSchema) {
    (
        schema(&[
            ("user_login", FieldKind::String),
            ("password", FieldKind::String),
        ]),
        schema(&[
            ("matched", FieldKind::Bool),
            ("privilege", FieldKind::String),
            ("expiration", FieldKind::String),
        ]),
    )
}

pub fn card_check_schemas() -> (MessageSchema, MessageSchema) {
    (
        schema(&[
            ("card_number", FieldKind::String),
            ("card_expiry", FieldKind::String),
        ]),
        schema(&[("approved", FieldKind::Bool)]),
    )
}

/// Username/password authentication backed only by the account store.
pub struct UserCheckService {
    accounts: Arc<AccountStore>,
    clock: ServiceClock,
}

impl UserCheckService {
    pub fn new(accounts: Arc<AccountStore>, clock: ServiceClock) -> Self {
        UserCheckService { accounts, clock }
    }

    pub fn check(&self, login: &str, password: &str) -> Message {
        let result = self.accounts.user_check(login, password, self.clock.today());
        Message::new()
            .with("matched", FieldValue::Bool(result.matched))
            .with(
                "privilege",
                FieldValue::Str(result.privilege.unwrap_or_default()),
            )
            .with(
                "expiration",
                FieldValue::Str(result.expiration.map(format_date).unwrap_or_default()),
            )
    }

    /// In-process port descriptor for the process engine.
    pub fn port(self: Arc<Self>) -> PortDescriptor {
        let (input, output) = user_check_schemas();
        PortDescriptor {
            service: "UserCheckService".to_string(),
            operation: "check".to_string(),
            input,
            output,
            binding: PortBinding::InProcess(Arc::new(move |request: Message| {
                let login = request.get_str("user_login").unwrap_or_default().to_string();
                let password = request.get_str("password").unwrap_or_default().to_string();
                Ok(self.check(&login, &password))
            })),
        }
    }
}

/// Card authorization backed only by the card fixture store.
pub struct CardCheckService {
    cards: Arc<CardStore>,
    clock: ServiceClock,
}

impl CardCheckService {
    pub fn new(cards: Arc<CardStore>, clock: ServiceClock) -> Self {
        CardCheckService { cards, clock }
    }

    pub fn check(&self, card_number: &str, card_expiry: &str) -> Message {
        let approved = parse_expiry(card_expiry)
            .map(|(month, year)| {
                self.cards
                    .card_check(card_number, month, year, self.clock.today())
                    .approved
            })
            .unwrap_or(false);
        Message::new().with("approved", FieldValue::Bool(approved))
    }

    pub fn port(self: Arc<Self>) -> PortDescriptor {
        let (input, output) = card_check_schemas();
        PortDescriptor {
            service: "CardCheckService".to_string(),
            operation: "check".to_string(),
            input,
            output,
            binding: PortBinding::InProcess(Arc::new(move |request: Message| {
                let number = request.get_str("card_number").unwrap_or_default().to_string();
                let expiry = request.get_str("card_expiry").unwrap_or_default().to_string();
                Ok(self.check(&number, &expiry))
            })),
        }
    }
}

/// Outcome of one approval run.
#[derive(Debug, Clone)]
pub struct ApprovalOutcome {
    pub approved: bool,
    pub reason: String,
    pub privilege: String,
    pub expiration: String,
    pub trace: Trace,
}

/// The approval flow: a process definition plus bound ports.
pub struct AuthFlow {
    pub definition: ProcessDefinition,
    pub ports: PortRegistry,
    pub options: EngineOptions,
}

impl AuthFlow {
    /// Builds the shipped flow with both checks bound in-process.
    pub fn in_process(
        accounts: Arc<AccountStore>,
        cards: Arc<CardStore>,
        clock: ServiceClock,
    ) -> Result<AuthFlow, ProcessError> {
        let definition = ProcessDefinition::from_json(USER_APPROVE_PROCESS_JSON)?;
        let mut ports = PortRegistry::new();
        ports.bind(
            "user_check",
            Arc::new(UserCheckService::new(accounts, clock.clone())).port(),
        );
        ports.bind(
            "card_check",
            Arc::new(CardCheckService::new(cards, clock)).port(),
        );
        Ok(AuthFlow {
            definition,
            ports,
            options: EngineOptions::default(),
        })
    }

    /// Runs the flow. Invoke timeouts come back as a denial with reason
    /// SERVICE_UNAVAILABLE rather than an error.
    pub fn approve(
        &self,
        user_login: &str,
        password: &str,
        card_number: &str,
        card_expiry: &str,
    ) -> Result<ApprovalOutcome, ProcessError> {
        let input = Message::new()
            .with("user_login", FieldValue::Str(user_login.to_string()))
            .with("password", FieldValue::Str(password.to_string()))
            .with("card_number", FieldValue::Str(card_number.to_string()))
            .with("card_expiry", FieldValue::Str(card_expiry.to_string()));
        match run_process(&self.definition, input, &self.ports, &self.options) {
            Ok((reply, trace)) => Ok(ApprovalOutcome {
                approved: reply.get_bool("approved").unwrap_or(false),
                reason: reply.get_str("reason").unwrap_or_default().to_string(),
                privilege: reply.get_str("privilege").unwrap_or_default().to_string(),
                expiration: reply.get_str("expiration").unwrap_or_default().to_string(),
                trace,
            }),
            Err(ProcessError::InvokeTimeout { .. }) => Ok(ApprovalOutcome {
                approved: false,
                reason: REASON_SERVICE_UNAVAILABLE.to_string(),
                privilege: String::new(),
                expiration: String::new(),
                trace: Trace::default(),
            }),
            Err(other) => Err(other),
        }
    }
}

/// Game admission granted to a validated session.
#[derive(Debug, Clone, PartialEq)]
pub struct AdmissionGrant {
    pub domain_id: u8,
    pub aoi_regions: Vec<u32>,
}

#[derive(Debug, Clone)]
pub struct GatewayConfig {
    pub domain_id: u8,
    pub initial_aoi: Vec<u32>,
    pub token_ttl_ms: u64,
}

impl Default for GatewayConfig {
    fn default() -> Self {
        GatewayConfig {
            domain_id: 0,
            initial_aoi: vec![0, 1, 2, 3],
            token_ttl_ms: 15 * 60 * 1000,
        }
    }
}

/// HTTP/JSON front door: login (drives the approval flow and issues a
/// token), session validation, and game admission.
pub struct AuthGateway {
    flow: AuthFlow,
    tokens: TokenStore,
    clock: ServiceClock,
    config: GatewayConfig,
}

impl AuthGateway {
    pub fn new(flow: AuthFlow, clock: ServiceClock, config: GatewayConfig) -> AuthGateway {
        AuthGateway {
            flow,
            tokens: TokenStore::new(clock.clone(), config.token_ttl_ms),
            clock,
            config,
        }
    }

    pub fn clock(&self) -> &ServiceClock {
        &self.clock
    }

    /// Direct (non-HTTP) login path, used by the HTTP handler and tests.
    pub fn login(
        &self,
        user_login: &str,
        password: &str,
        card_number: &str,
        card_expiry: &str,
    ) -> Result<(ApprovalOutcome, Option<String>), ProcessError> {
        let outcome = self.flow.approve(user_login, password, card_number, card_expiry)?;
        if !outcome.approved {
            return Ok((outcome, None));
        }
        let expiration = crate::services::clock::parse_date(&outcome.expiration)
            .unwrap_or(chrono::NaiveDate::MAX);
        let token = self
            .tokens
            .issue(user_login, &outcome.privilege, expiration);
        Ok((outcome, Some(token.token)))
    }

    pub fn validate(&self, token: &str) -> TokenState {
        self.tokens.validate(token)
    }

    /// Admits a valid session into the game domain.
    pub fn join_game(&self, token: &str) -> Result<AdmissionGrant, &'static str> {
        match self.tokens.validate(token) {
            TokenState::Valid(_) => Ok(AdmissionGrant {
                domain_id: self.config.domain_id,
                aoi_regions: self.config.initial_aoi.clone(),
            }),
            TokenState::Expired => Err("EXPIRED"),
            TokenState::Unknown => Err("INVALID"),
        }
    }

    /// HTTP handler covering POST /login, GET /session/{token} and
    /// POST /join.
    pub fn handler(self: Arc<Self>) -> Handler {
        Arc::new(move |request: Request| self.handle(request))
    }

    fn handle(&self, request: Request) -> Response {
        match (request.method.as_str(), request.path.as_str()) {
            ("POST", "/login") => {
                let Some(body) = request.json() else {
                    return Response::bad_request("body must be JSON");
                };
                let field = |name: &str| -> Option<String> {
                    body.get(name).and_then(|v| v.as_str()).map(|s| s.to_string())
                };
                let (Some(login), Some(password), Some(card), Some(expiry)) = (
                    field("user_login"),
                    field("password"),
                    field("card_number"),
                    field("card_expiry"),
                ) else {
                    return Response::bad_request(
                        "need user_login, password, card_number, card_expiry",
                    );
                };
                match self.login(&login, &password, &card, &expiry) {
                    Ok((outcome, Some(token))) => Response::json(
                        200,
                        serde_json::json!({
                            "approved": true,
                            "session_token": token,
                            "privilege": outcome.privilege,
                        }),
                    ),
                    Ok((outcome, None)) => Response::json(
                        401,
                        serde_json::json!({
                            "approved": false,
                            "reason": outcome.reason,
                        }),
                    ),
                    Err(error) => Response::json(
                        500,
                        serde_json::json!({ "error": error.to_string() }),
                    ),
                }
            }
            ("GET", path) if path.starts_with("/session/") => {
                let token = &path["/session/".len()..];
                match self.validate(token) {
                    TokenState::Valid(session) => Response::json(
                        200,
                        serde_json::json!({
                            "valid": true,
                            "user_login": session.user_login,
                            "privilege": session.privilege,
                        }),
                    ),
                    TokenState::Expired => Response::json(
                        401,
                        serde_json::json!({ "valid": false, "reason": "EXPIRED" }),
                    ),
                    TokenState::Unknown => Response::json(
                        401,
                        serde_json::json!({ "valid": false, "reason": "INVALID" }),
                    ),
                }
            }
            ("POST", "/join") => {
                let token = request
                    .json()
                    .and_then(|body| {
                        body.get("session_token")
                            .and_then(|v| v.as_str())
                            .map(|s| s.to_string())
                    });
                let Some(token) = token else {
                    return Response::bad_request("need session_token");
                };
                match self.join_game(&token) {
                    Ok(grant) => Response::json(
                        200,
                        serde_json::json!({
                            "domain_id": grant.domain_id,
                            "aoi_regions": grant.aoi_regions,
                        }),
                    ),
                    Err(reason) => {
                        Response::json(401, serde_json::json!({ "reason": reason }))
                    }
                }
            }
            _ => Response::not_found(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::services::cards::CardRecord;
    use crate::services::clock::parse_date;
    use crate::services::store::UserAccount;

    pub(crate) fn fixture_accounts() -> AccountStore {
        let mut store = AccountStore::new();
        store
            .insert(
                UserAccount::from_plaintext(
                    "Max",
                    "game123",
                    "Full",
                    parse_date("09/10/2008").unwrap(),
                    parse_date("09/10/2014").unwrap(),
                )
                .unwrap(),
            )
            .unwrap();
        store
            .insert(
                UserAccount::from_plaintext(
                    "John123",
                    "helloworld",
                    "basic",
                    parse_date("05/11/2008").unwrap(),
                    parse_date("05/11/2013").unwrap(),
                )
                .unwrap(),
            )
            .unwrap();
        store
    }

    pub(crate) fn fixture_cards() -> CardStore {
        let mut store = CardStore::new();
        store
            .insert(CardRecord {
                card_number: "4111111111111111".to_string(),
                expiry_month: 12,
                expiry_year: 2099,
                approved: true,
            })
            .unwrap();
        store
            .insert(CardRecord {
                card_number: "4012888888881881".to_string(),
                expiry_month: 12,
                expiry_year: 2099,
                approved: false,
            })
            .unwrap();
        store
    }

    fn flow() -> AuthFlow {
        let clock = ServiceClock::fixed(parse_date("01/01/2014").unwrap());
        AuthFlow::in_process(
            Arc::new(fixture_accounts()),
            Arc::new(fixture_cards()),
            clock,
        )
        .unwrap()
    }

    #[test]
    fn approval_is_the_conjunction_of_both_checks() {
        let flow = flow();
        let cases = [
            ("Max", "game123", "4111111111111111", true, ""),
            ("Max", "wrong", "4111111111111111", false, REASON_USER_CHECK_FAILED),
            ("Max", "game123", "4012888888881881", false, REASON_CARD_CHECK_FAILED),
            ("Max", "wrong", "4012888888881881", false, REASON_USER_CHECK_FAILED),
        ];
        for (login, password, card, expect_approved, expect_reason) in cases {
            let outcome = flow.approve(login, password, card, "12/2099").unwrap();
            assert_eq!(outcome.approved, expect_approved, "case {login}/{password}");
            assert_eq!(outcome.reason, expect_reason);
            // Independence: both invokes complete regardless of outcomes.
            assert!(outcome.trace.completed("check_user"));
            assert!(outcome.trace.completed("check_card"));
        }
    }

    #[test]
    fn approval_carries_privilege_from_the_account() {
        let outcome = flow()
            .approve("Max", "game123", "4111111111111111", "12/2099")
            .unwrap();
        assert!(outcome.approved);
        assert_eq!(outcome.privilege, "FULL");
        assert_eq!(outcome.expiration, "09/10/2014");
    }

    #[test]
    fn expired_account_denies_via_user_check() {
        let clock = ServiceClock::fixed(parse_date("01/01/2014").unwrap());
        let flow = AuthFlow::in_process(
            Arc::new(fixture_accounts()),
            Arc::new(fixture_cards()),
            clock,
        )
        .unwrap();
        // John123 expired 05/11/2013.
        let outcome = flow
            .approve("John123", "helloworld", "4111111111111111", "12/2099")
            .unwrap();
        assert!(!outcome.approved);
        assert_eq!(outcome.reason, REASON_USER_CHECK_FAILED);
    }

    #[test]
    fn outcome_invariant_under_invoke_completion_orders() {
        let mut flow = flow();
        let mut outcomes = Vec::new();
        for (user_delay, card_delay) in [(0u64, 25u64), (25, 0)] {
            flow.options.invoke_delays_ms.clear();
            flow.options
                .invoke_delays_ms
                .insert("check_user".to_string(), user_delay);
            flow.options
                .invoke_delays_ms
                .insert("check_card".to_string(), card_delay);
            let outcome = flow
                .approve("Max", "game123", "4012888888881881", "12/2099")
                .unwrap();
            outcomes.push((outcome.approved, outcome.reason.clone()));
        }
        assert_eq!(outcomes[0], outcomes[1]);
    }

    #[test]
    fn timeout_maps_to_service_unavailable() {
        let mut flow = flow();
        flow.options.invoke_timeout_ms = 10;
        flow.options
            .invoke_delays_ms
            .insert("check_card".to_string(), 200);
        let outcome = flow
            .approve("Max", "game123", "4111111111111111", "12/2099")
            .unwrap();
        assert!(!outcome.approved);
        assert_eq!(outcome.reason, REASON_SERVICE_UNAVAILABLE);
    }
}
