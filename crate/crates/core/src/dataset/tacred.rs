//! The 42-relation TACRED inventory.
//!
//! Label order follows the bundled handmade table, so `<Rel_k>` is the
//! k-th row of `data/tacred_handmade.tsv`.

use super::{parse_handmade, RelationSchema};
use crate::error::Result;

pub const HANDMADE_TSV: &str = include_str!("../../data/tacred_handmade.tsv");

pub const NEGATIVE_LABEL: &str = "no_relation";

pub fn labels() -> Vec<&'static str> {
    HANDMADE_TSV
        .lines()
        .filter_map(|line| line.split_once('\t').map(|(label, _)| label))
        .collect()
}

/// Full schema with handmade verbalizations attached and `no_relation` as
/// the negative label.
pub fn schema() -> Result<RelationSchema> {
    let base = RelationSchema::from_labels(&labels(), Some(NEGATIVE_LABEL))?;
    let table = parse_handmade(HANDMADE_TSV, &base)?;
    base.with_handmade(&table)
}
