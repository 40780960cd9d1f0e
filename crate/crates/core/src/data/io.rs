//! Processed-dataset container (`IRSDSET\0`, version 1).
//!
//! Fields in order: scale (min, max, threshold as f64 bits), user raw ids,
//! item raw ids, item popularity, then per user the interaction count
//! followed by `(item u64, rating f64, timestamp u64)` triples.

use std::path::Path;

use super::dataset::{Dataset, IdMap, Interaction, RatingScale, UserHistory};
use crate::error::{Error, Result};
use crate::persist::{read_file, Reader, Writer};

const MAGIC: &[u8; 8] = b"IRSDSET\0";

pub fn encode_dataset(ds: &Dataset) -> Vec<u8> {
    let mut w = Writer::new(MAGIC);
    w.f64(ds.scale.min);
    w.f64(ds.scale.max);
    w.f64(ds.scale.positive_threshold);
    w.u64s(ds.user_ids.raw_ids());
    w.u64s(ds.item_ids.raw_ids());
    w.u64s(&ds.item_popularity);
    for h in &ds.users {
        w.u64(h.interactions.len() as u64);
        for x in &h.interactions {
            w.u64(x.item as u64);
            w.f64(x.rating);
            w.u64(x.timestamp);
        }
    }
    w.finish()
}

pub fn decode_dataset(bytes: &[u8]) -> Result<Dataset> {
    let mut r = Reader::new(bytes, MAGIC, "dataset")?;
    let scale = RatingScale {
        min: r.f64()?,
        max: r.f64()?,
        positive_threshold: r.f64()?,
    };
    let user_ids = IdMap::from_raw(r.u64s()?)?;
    let item_ids = IdMap::from_raw(r.u64s()?)?;
    let item_popularity = r.u64s()?;
    let mut users = Vec::with_capacity(user_ids.len());
    for u in 0..user_ids.len() {
        let n = r.usize()?;
        let mut interactions = Vec::with_capacity(n.min(1 << 20));
        for _ in 0..n {
            interactions.push(Interaction {
                item: r.usize()?,
                rating: r.f64()?,
                timestamp: r.u64()?,
            });
        }
        users.push(UserHistory { user: u, interactions });
    }
    r.finish()?;
    let ds = Dataset {
        num_items: item_ids.len(),
        users,
        scale,
        item_popularity,
        user_ids,
        item_ids,
    };
    ds.validate()?;
    Ok(ds)
}

pub fn save_dataset(ds: &Dataset, path: &Path) -> Result<()> {
    std::fs::write(path, encode_dataset(ds))?;
    Ok(())
}

pub fn load_dataset(path: &Path) -> Result<Dataset> {
    let bytes = read_file(path).map_err(|e| match e {
        Error::MissingModel(p) => Error::Format(format!(
            "processed dataset {} not found (run `ingest` first)",
            p.display()
        )),
        e => e,
    })?;
    decode_dataset(&bytes)
}
