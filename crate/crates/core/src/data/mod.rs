//! Rating-log ingestion: parsing, k-core filtering, densification, user
//! splits and summary statistics.

mod dataset;
mod io;
mod kcore;
mod parse;
mod split;

use std::io::BufReader;
use std::path::Path;

pub use dataset::{
    build_dataset, compute_stats, Dataset, DatasetStats, IdMap, Interaction, RatingScale,
    UserHistory,
};
pub use io::{decode_dataset, encode_dataset, load_dataset, save_dataset};
pub use kcore::k_core_filter;
pub use parse::{parse_ratings, write_ratings, RatingFormat, RawRating, CSV_HEADER};
pub use split::{chronological_holdout, split_users, Split, SplitFractions};

use crate::error::Result;

/// Parse `path`, k-core filter it and build the dense dataset.
pub fn ingest_file(path: &Path, format: RatingFormat, k_core: usize, scale: RatingScale) -> Result<Dataset> {
    let file = std::fs::File::open(path)?;
    let raw = parse_ratings(BufReader::new(file), format)?;
    let filtered = k_core_filter(&raw, k_core.max(1));
    build_dataset(&filtered, scale)
}
