//! Astronomical catalog engine: HTM spatial indexing, a columnar snowflake
//! store, a filter-expression language, a bulk loader with undo, spatial and
//! predicate query execution, and an HTTP service with tile rendering.

pub mod filterql;
pub mod htm;
pub mod loader;
pub mod query;
pub mod service;
pub mod store;
