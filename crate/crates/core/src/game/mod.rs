//! MMOG state replication over the middleware.

pub mod session;
pub mod view;
pub mod world;
