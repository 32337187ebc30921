//! End-to-end account tier: login over HTTP, session validation, game
//! admission, and the approval flow with its two checks deployed as
//! separate HTTP services.

use mdds_core::dcps::types::FieldValue;
use mdds_core::services::auth::{
    card_check_schemas, user_check_schemas, AuthFlow, AuthGateway, CardCheckService,
    GatewayConfig, UserCheckService, REASON_CARD_CHECK_FAILED, REASON_USER_CHECK_FAILED,
};
use mdds_core::services::cards::{CardRecord, CardStore};
use mdds_core::services::clock::{parse_date, ServiceClock};
use mdds_core::services::http::{request_json, Handler, HttpServer, Response};
use mdds_core::services::process::{
    run_process, EngineOptions, Message, PortBinding, PortDescriptor, PortRegistry,
    ProcessDefinition,
};
use mdds_core::services::store::{AccountStore, UserAccount};
use std::sync::Arc;

fn accounts() -> AccountStore {
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

fn cards() -> CardStore {
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

fn gateway(clock: ServiceClock) -> Arc<AuthGateway> {
    let flow = AuthFlow::in_process(Arc::new(accounts()), Arc::new(cards()), clock.clone())
        .unwrap();
    Arc::new(AuthGateway::new(
        flow,
        clock,
        GatewayConfig {
            domain_id: 3,
            initial_aoi: vec![0, 1, 2, 3],
            token_ttl_ms: 60_000,
        },
    ))
}

#[test]
fn login_validate_join_happy_path_over_http() {
    let clock = ServiceClock::fixed(parse_date("01/01/2014").unwrap());
    let server = HttpServer::spawn("127.0.0.1:0", gateway(clock).handler()).unwrap();
    let target = server.addr().to_string();

    let (status, body) = request_json(
        "POST",
        &target,
        "/login",
        Some(&serde_json::json!({
            "user_login": "Max",
            "password": "game123",
            "card_number": "4111111111111111",
            "card_expiry": "12/2099",
        })),
    )
    .unwrap();
    assert_eq!(status, 200);
    assert_eq!(body["approved"], true);
    assert_eq!(body["privilege"], "FULL");
    let token = body["session_token"].as_str().unwrap().to_string();
    assert_eq!(token.len(), 32);

    let (status, body) = request_json("GET", &target, &format!("/session/{token}"), None).unwrap();
    assert_eq!(status, 200);
    assert_eq!(body["valid"], true);
    assert_eq!(body["user_login"], "Max");

    let (status, body) = request_json(
        "POST",
        &target,
        "/join",
        Some(&serde_json::json!({ "session_token": token })),
    )
    .unwrap();
    assert_eq!(status, 200);
    assert_eq!(body["domain_id"], 3);
    assert_eq!(body["aoi_regions"], serde_json::json!([0, 1, 2, 3]));
}

#[test]
fn denials_surface_reasons_as_401() {
    let clock = ServiceClock::fixed(parse_date("01/01/2014").unwrap());
    let server = HttpServer::spawn("127.0.0.1:0", gateway(clock).handler()).unwrap();
    let target = server.addr().to_string();

    let (status, body) = request_json(
        "POST",
        &target,
        "/login",
        Some(&serde_json::json!({
            "user_login": "Max",
            "password": "wrong",
            "card_number": "4111111111111111",
            "card_expiry": "12/2099",
        })),
    )
    .unwrap();
    assert_eq!(status, 401);
    assert_eq!(body["approved"], false);
    assert_eq!(body["reason"], REASON_USER_CHECK_FAILED);

    let (status, body) = request_json(
        "POST",
        &target,
        "/login",
        Some(&serde_json::json!({
            "user_login": "Max",
            "password": "game123",
            "card_number": "4012888888881881",
            "card_expiry": "12/2099",
        })),
    )
    .unwrap();
    assert_eq!(status, 401);
    assert_eq!(body["reason"], REASON_CARD_CHECK_FAILED);
}

#[test]
fn garbage_and_expired_tokens_are_rejected() {
    let clock = ServiceClock::fixed(parse_date("01/01/2014").unwrap());
    let gateway = gateway(clock.clone());
    let server = HttpServer::spawn("127.0.0.1:0", gateway.clone().handler()).unwrap();
    let target = server.addr().to_string();

    let (status, body) =
        request_json("GET", &target, "/session/deadbeefdeadbeef", None).unwrap();
    assert_eq!(status, 401);
    assert_eq!(body["valid"], false);

    let (status, _) = request_json(
        "POST",
        &target,
        "/join",
        Some(&serde_json::json!({ "session_token": "nope" })),
    )
    .unwrap();
    assert_eq!(status, 401);

    // Issue a token, then advance the clock past the TTL.
    let (_, body) = request_json(
        "POST",
        &target,
        "/login",
        Some(&serde_json::json!({
            "user_login": "Max",
            "password": "game123",
            "card_number": "4111111111111111",
            "card_expiry": "12/2099",
        })),
    )
    .unwrap();
    let token = body["session_token"].as_str().unwrap().to_string();
    clock.advance_ms(60_001);
    let (status, body) = request_json("GET", &target, &format!("/session/{token}"), None).unwrap();
    assert_eq!(status, 401);
    assert_eq!(body["reason"], "EXPIRED");
    let (status, body) = request_json(
        "POST",
        &target,
        "/join",
        Some(&serde_json::json!({ "session_token": token })),
    )
    .unwrap();
    assert_eq!(status, 401);
    assert_eq!(body["reason"], "EXPIRED");
}

#[test]
fn malformed_bodies_are_400() {
    let clock = ServiceClock::fixed(parse_date("01/01/2014").unwrap());
    let server = HttpServer::spawn("127.0.0.1:0", gateway(clock).handler()).unwrap();
    let target = server.addr().to_string();
    let (status, _) = request_json(
        "POST",
        &target,
        "/login",
        Some(&serde_json::json!({ "user_login": "Max" })),
    )
    .unwrap();
    assert_eq!(status, 400);
    let (status, _) = request_json("POST", &target, "/unknown", None).unwrap();
    assert_eq!(status, 404);
}

/// The approval process with its two checks deployed as separate HTTP
/// services: three independent processes talking only through ports.
#[test]
fn approval_flow_runs_with_http_bound_ports() {
    let clock = ServiceClock::fixed(parse_date("01/01/2014").unwrap());

    // User-check service: owns only the account store.
    let user_service = Arc::new(UserCheckService::new(Arc::new(accounts()), clock.clone()));
    let (user_in, _) = user_check_schemas();
    let user_handler: Handler = Arc::new(move |request| {
        let Some(body) = request.json() else {
            return Response::bad_request("json");
        };
        let Ok(message) = Message::from_json(&user_in, &body) else {
            return Response::bad_request("schema");
        };
        let login = message.get_str("user_login").unwrap_or_default().to_string();
        let password = message.get_str("password").unwrap_or_default().to_string();
        Response::json(200, user_service.check(&login, &password).to_json())
    });
    let user_server = HttpServer::spawn("127.0.0.1:0", user_handler).unwrap();

    // Card-check service: owns only the card fixture.
    let card_service = Arc::new(CardCheckService::new(Arc::new(cards()), clock.clone()));
    let (card_in, _) = card_check_schemas();
    let card_handler: Handler = Arc::new(move |request| {
        let Some(body) = request.json() else {
            return Response::bad_request("json");
        };
        let Ok(message) = Message::from_json(&card_in, &body) else {
            return Response::bad_request("schema");
        };
        let number = message.get_str("card_number").unwrap_or_default().to_string();
        let expiry = message.get_str("card_expiry").unwrap_or_default().to_string();
        Response::json(200, card_service.check(&number, &expiry).to_json())
    });
    let card_server = HttpServer::spawn("127.0.0.1:0", card_handler).unwrap();

    // The approve process binds both ports over HTTP.
    let definition =
        ProcessDefinition::from_json(mdds_core::services::auth::USER_APPROVE_PROCESS_JSON)
            .unwrap();
    let mut ports = PortRegistry::new();
    let (user_in, user_out) = user_check_schemas();
    ports.bind(
        "user_check",
        PortDescriptor {
            service: "UserCheckService".to_string(),
            operation: "check".to_string(),
            input: user_in,
            output: user_out,
            binding: PortBinding::Http {
                url: user_server.addr().to_string(),
            },
        },
    );
    let (card_in, card_out) = card_check_schemas();
    ports.bind(
        "card_check",
        PortDescriptor {
            service: "CardCheckService".to_string(),
            operation: "check".to_string(),
            input: card_in,
            output: card_out,
            binding: PortBinding::Http {
                url: card_server.addr().to_string(),
            },
        },
    );

    let input = Message::new()
        .with("user_login", FieldValue::Str("Max".to_string()))
        .with("password", FieldValue::Str("game123".to_string()))
        .with("card_number", FieldValue::Str("4111111111111111".to_string()))
        .with("card_expiry", FieldValue::Str("12/2099".to_string()));
    let (reply, trace) =
        run_process(&definition, input, &ports, &EngineOptions::default()).unwrap();
    assert_eq!(reply.get_bool("approved"), Some(true));
    assert!(trace.completed("check_user"));
    assert!(trace.completed("check_card"));

    // Denied card over the same distributed deployment.
    let input = Message::new()
        .with("user_login", FieldValue::Str("Max".to_string()))
        .with("password", FieldValue::Str("game123".to_string()))
        .with("card_number", FieldValue::Str("4012888888881881".to_string()))
        .with("card_expiry", FieldValue::Str("12/2099".to_string()));
    let (reply, trace) =
        run_process(&definition, input, &ports, &EngineOptions::default()).unwrap();
    assert_eq!(reply.get_bool("approved"), Some(false));
    assert_eq!(reply.get_str("reason"), Some(REASON_CARD_CHECK_FAILED));
    assert!(trace.completed("check_user") && trace.completed("check_card"));
}

/// Each check functions with only its own store: the user check runs
/// against an empty card store and vice versa, so no shared database can
/// exist between them.
#[test]
fn checks_use_disjoint_stores() {
    let clock = ServiceClock::fixed(parse_date("01/01/2014").unwrap());
    let user_only = UserCheckService::new(Arc::new(accounts()), clock.clone());
    let result = user_only.check("Max", "game123");
    assert_eq!(result.get_bool("matched"), Some(true));

    let card_only = CardCheckService::new(Arc::new(cards()), clock);
    let result = card_only.check("4111111111111111", "12/2099");
    assert_eq!(result.get_bool("approved"), Some(true));
}
