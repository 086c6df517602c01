//! JSON Schemas for every response body, shipped alongside the crate.

pub const API_ERROR: &str = include_str!("../schemas/api_error.schema.json");
pub const PROXY_PAGE: &str = include_str!("../schemas/proxy_page.schema.json");
pub const LINEAGE: &str = include_str!("../schemas/lineage.schema.json");
pub const SOURCE_BUNDLE: &str = include_str!("../schemas/source_bundle.schema.json");
pub const SUBGRAPH: &str = include_str!("../schemas/subgraph.schema.json");
pub const STATS: &str = include_str!("../schemas/stats.schema.json");

/// `(name, schema text)` for each published schema.
pub const ALL: [(&str, &str); 6] = [
    ("api_error", API_ERROR),
    ("proxy_page", PROXY_PAGE),
    ("lineage", LINEAGE),
    ("source_bundle", SOURCE_BUNDLE),
    ("subgraph", SUBGRAPH),
    ("stats", STATS),
];
