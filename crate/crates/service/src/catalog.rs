//! Questions known to the service, keyed by id.

use std::collections::{BTreeSet, HashMap};
use std::path::Path;
use std::sync::Arc;

use jigsaw_core::harness::{Manifest, ManifestRecord};
use sha2::{Digest, Sha256};

#[derive(Debug, Clone)]
pub struct Entry {
    pub record: Arc<ManifestRecord>,
    pub dataset_id: Option<String>,
}

/// Immutable snapshot; updates build a new catalog and swap it in.
#[derive(Debug, Clone, Default)]
pub struct Catalog {
    pub entries: HashMap<String, Entry>,
    pub datasets: BTreeSet<String>,
    pub manifest_digest: Option<String>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

impl Catalog {
    pub fn from_manifest_file(path: &Path) -> jigsaw_core::Result<Self> {
        let bytes = std::fs::read(path).map_err(|source| jigsaw_core::Error::Io {
            path: path.to_owned(),
            source,
        })?;
        let manifest = Manifest::load(path)?;
        let mut catalog = Catalog {
            manifest_digest: Some(sha256_hex(&bytes)),
            ..Catalog::default()
        };
        catalog.insert_all(&manifest, None).expect("manifest ids are unique");
        Ok(catalog)
    }

    /// Adds every record, or none if any id is already present. Returns the
    /// first colliding id on failure.
    pub fn insert_all(&mut self, manifest: &Manifest, dataset_id: Option<&str>) -> Result<(), String> {
        if let Some(r) = manifest.records.iter().find(|r| self.entries.contains_key(&r.id)) {
            return Err(r.id.clone());
        }
        for r in &manifest.records {
            self.entries.insert(
                r.id.clone(),
                Entry {
                    record: Arc::new(r.clone()),
                    dataset_id: dataset_id.map(str::to_owned),
                },
            );
        }
        if let Some(d) = dataset_id {
            self.datasets.insert(d.to_owned());
        }
        Ok(())
    }
}
