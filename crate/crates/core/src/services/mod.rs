//! Account tier: mini-SQL store, process engine, HTTP endpoints.

pub mod auth;
pub mod cards;
pub mod clock;
pub mod http;
pub mod process;
pub mod sql;
pub mod store;
pub mod token;
