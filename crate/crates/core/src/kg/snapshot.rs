//! Versioned binary graph snapshots.
//!
//! Layout: the magic bytes `HYKG`, one version byte, then length-prefixed
//! little-endian tables for relations, entities, and triplets. Adjacency
//! indexes are rebuilt on load. Readers refuse snapshots with a different
//! version byte.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::{EntityId, EntityRecord, KgError, KnowledgeGraph, RelationId, Triplet};

pub const SNAPSHOT_MAGIC: &[u8; 4] = b"HYKG";
pub const SNAPSHOT_VERSION: u8 = 1;

pub fn write_snapshot(g: &KnowledgeGraph, path: &Path) -> Result<(), KgError> {
    let io_err = |source| KgError::Io {
        path: path.to_path_buf(),
        source,
    };
    let file = File::create(path).map_err(io_err)?;
    let mut w = BufWriter::new(file);
    let mut write = move |bytes: &[u8]| -> Result<(), KgError> {
        w.write_all(bytes).map_err(|source| KgError::Io {
            path: path.to_path_buf(),
            source,
        })
    };

    write(SNAPSHOT_MAGIC)?;
    write(&[SNAPSHOT_VERSION])?;
    write(&(g.relation_count() as u64).to_le_bytes())?;
    write(&(g.entity_count() as u64).to_le_bytes())?;
    write(&(g.triplet_count() as u64).to_le_bytes())?;

    let mut buf = Vec::new();
    for r in g.relations() {
        put_str(&mut buf, r);
    }
    for e in g.entities() {
        put_str(&mut buf, &e.name);
        put_opt_str(&mut buf, e.description.as_deref());
        put_opt_str(&mut buf, e.entity_type.as_deref());
    }
    for t in g.triplets() {
        buf.extend_from_slice(&t.head.0.to_le_bytes());
        buf.extend_from_slice(&t.relation.0.to_le_bytes());
        buf.extend_from_slice(&t.tail.0.to_le_bytes());
    }
    write(&buf)
}

pub fn read_snapshot(path: &Path) -> Result<KnowledgeGraph, KgError> {
    let file = File::open(path).map_err(|source| KgError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut r = BufReader::new(file);

    let mut magic = [0u8; 4];
    read_exact(&mut r, &mut magic, path)?;
    if &magic != SNAPSHOT_MAGIC {
        return Err(KgError::Snapshot("bad magic bytes".to_string()));
    }
    let mut version = [0u8; 1];
    read_exact(&mut r, &mut version, path)?;
    if version[0] != SNAPSHOT_VERSION {
        return Err(KgError::SnapshotVersion {
            found: version[0],
            expected: SNAPSHOT_VERSION,
        });
    }

    let relation_count = read_u64(&mut r, path)? as usize;
    let entity_count = read_u64(&mut r, path)? as usize;
    let triplet_count = read_u64(&mut r, path)? as usize;

    let mut relations = Vec::with_capacity(relation_count);
    for _ in 0..relation_count {
        relations.push(read_str(&mut r, path)?);
    }
    let mut entities = Vec::with_capacity(entity_count);
    for i in 0..entity_count {
        let name = read_str(&mut r, path)?;
        let description = read_opt_str(&mut r, path)?;
        let entity_type = read_opt_str(&mut r, path)?;
        entities.push(EntityRecord {
            id: EntityId(i as u32),
            name,
            description,
            entity_type,
        });
    }
    let mut triplets = Vec::with_capacity(triplet_count);
    for _ in 0..triplet_count {
        let head = read_u32(&mut r, path)?;
        let relation = read_u32(&mut r, path)?;
        let tail = read_u32(&mut r, path)?;
        if head as usize >= entity_count || tail as usize >= entity_count {
            return Err(KgError::Snapshot(format!(
                "triplet endpoint out of range: ({head}, {relation}, {tail})"
            )));
        }
        if relation as usize >= relation_count {
            return Err(KgError::Snapshot(format!("relation id {relation} out of range")));
        }
        triplets.push(Triplet {
            head: EntityId(head),
            relation: RelationId(relation),
            tail: EntityId(tail),
        });
    }

    Ok(KnowledgeGraph::from_parts(entities, relations, triplets))
}

fn put_str(buf: &mut Vec<u8>, s: &str) {
    buf.extend_from_slice(&(s.len() as u32).to_le_bytes());
    buf.extend_from_slice(s.as_bytes());
}

fn put_opt_str(buf: &mut Vec<u8>, s: Option<&str>) {
    match s {
        Some(s) => {
            buf.push(1);
            put_str(buf, s);
        }
        None => buf.push(0),
    }
}

fn read_exact(r: &mut impl Read, buf: &mut [u8], path: &Path) -> Result<(), KgError> {
    r.read_exact(buf).map_err(|source| KgError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn read_u32(r: &mut impl Read, path: &Path) -> Result<u32, KgError> {
    let mut b = [0u8; 4];
    read_exact(r, &mut b, path)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64(r: &mut impl Read, path: &Path) -> Result<u64, KgError> {
    let mut b = [0u8; 8];
    read_exact(r, &mut b, path)?;
    Ok(u64::from_le_bytes(b))
}

fn read_str(r: &mut impl Read, path: &Path) -> Result<String, KgError> {
    let len = read_u32(r, path)? as usize;
    let mut bytes = vec![0u8; len];
    read_exact(r, &mut bytes, path)?;
    String::from_utf8(bytes).map_err(|e| KgError::Snapshot(format!("invalid utf-8: {e}")))
}

fn read_opt_str(r: &mut impl Read, path: &Path) -> Result<Option<String>, KgError> {
    let mut flag = [0u8; 1];
    read_exact(r, &mut flag, path)?;
    match flag[0] {
        0 => Ok(None),
        1 => Ok(Some(read_str(r, path)?)),
        other => Err(KgError::Snapshot(format!("bad option tag {other}"))),
    }
}
