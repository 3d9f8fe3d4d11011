//! CSV storage for IMTS samples and the JSON manifest tying splits together.
//!
//! Observation files carry `series_id,variate,time,value`; query files carry
//! `series_id,variate,time` with an optional `target` column. Variates are
//! 0-based. Floats are written in shortest round-trip form, so reading a
//! written file reproduces every double exactly.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::datagen::SynthSpec;
use crate::error::{Error, Result};
use crate::imts::{ImtsSample, Query, RawSeries};

pub const OBSERVATION_HEADER: [&str; 4] = ["series_id", "variate", "time", "value"];
pub const MANIFEST_FORMAT: u32 = 1;

/// Fractions used when no explicit split counts are given.
pub const DEFAULT_SPLIT: (f64, f64) = (0.6, 0.2);

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitFiles {
    pub observations: String,
    pub queries: String,
    pub observations_sha256: String,
    pub queries_sha256: String,
    pub samples: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetManifest {
    pub format: u32,
    pub n_variates: usize,
    /// Generator settings when the data is synthetic.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generator: Option<SynthSpec>,
    /// Paths relative to the manifest's directory.
    pub splits: BTreeMap<String, SplitFiles>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Splits {
    pub train: Vec<ImtsSample>,
    pub val: Vec<ImtsSample>,
    pub test: Vec<ImtsSample>,
}

impl Splits {
    pub fn get(&self, name: &str) -> Option<&[ImtsSample]> {
        match name {
            "train" => Some(&self.train),
            "val" => Some(&self.val),
            "test" => Some(&self.test),
            _ => None,
        }
    }

    fn named(&self) -> [(&'static str, &[ImtsSample]); 3] {
        [
            ("train", &self.train),
            ("val", &self.val),
            ("test", &self.test),
        ]
    }
}

/// Train/val/test counts from fractions; test takes the remainder.
pub fn split_counts(n: usize, train: f64, val: f64) -> Result<[usize; 3]> {
    if !(train > 0.0 && val >= 0.0 && train + val <= 1.0) {
        return Err(Error::InvalidConfig(format!(
            "split fractions train={train} val={val} must be positive and sum to at most 1"
        )));
    }
    let a = (n as f64 * train).round() as usize;
    let b = ((n as f64 * val).round() as usize).min(n - a.min(n));
    let a = a.min(n);
    Ok([a, b, n - a - b])
}

/// Shuffles by `seed` and cuts into consecutive blocks of `counts`.
pub fn split_samples(samples: Vec<ImtsSample>, seed: u64, counts: [usize; 3]) -> Result<Splits> {
    let total: usize = counts.iter().sum();
    if total != samples.len() {
        return Err(Error::InvalidConfig(format!(
            "split counts {counts:?} do not add up to {} samples",
            samples.len()
        )));
    }
    let mut order: Vec<usize> = (0..samples.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed ^ SPLIT_STREAM));
    let mut slots: Vec<Option<ImtsSample>> = samples.into_iter().map(Some).collect();
    let mut take = |range: std::ops::Range<usize>| -> Vec<ImtsSample> {
        let mut ids: Vec<usize> = order[range].to_vec();
        ids.sort_unstable();
        ids.into_iter()
            .map(|i| slots[i].take().expect("each index once"))
            .collect()
    };
    let train = take(0..counts[0]);
    let val = take(counts[0]..counts[0] + counts[1]);
    let test = take(counts[0] + counts[1]..total);
    Ok(Splits { train, val, test })
}

// Keeps the split shuffle apart from the generator's stream for equal seeds.
const SPLIT_STREAM: u64 = 0x5b1d_5eed;

fn fmt(v: f64) -> String {
    // Debug is the shortest representation that parses back to the same bits.
    format!("{v:?}")
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn file_sha256(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(sha256_hex(&bytes))
}

pub fn observations_csv(samples: &[ImtsSample]) -> Result<Vec<u8>> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    w.write_record(OBSERVATION_HEADER)?;
    for s in samples {
        for series in s.series() {
            for (t, v) in series.iter() {
                w.write_record([
                    s.id().to_string(),
                    series.variate().to_string(),
                    fmt(t),
                    fmt(v),
                ])?;
            }
        }
    }
    w.into_inner()
        .map_err(|e| Error::io("<buffer>", e.into_error()))
}

/// Query rows; the `target` column is written only when every query has one.
pub fn queries_csv(samples: &[ImtsSample]) -> Result<Vec<u8>> {
    let with_target = samples
        .iter()
        .flat_map(|s| s.flat_queries())
        .all(|(_, q)| q.target.is_some());
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    if with_target {
        w.write_record(["series_id", "variate", "time", "target"])?;
    } else {
        w.write_record(["series_id", "variate", "time"])?;
    }
    for s in samples {
        for (n, q) in s.flat_queries() {
            let mut rec = vec![s.id().to_string(), n.to_string(), fmt(q.time)];
            if with_target {
                rec.push(fmt(q.target.expect("checked above")));
            }
            w.write_record(&rec)?;
        }
    }
    w.into_inner()
        .map_err(|e| Error::io("<buffer>", e.into_error()))
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Writes `<split>_observations.csv`, `<split>_queries.csv` for each split and
/// `manifest.json` into `dir`. Returns the manifest path.
pub fn write_dataset(
    dir: &Path,
    splits: &Splits,
    generator: Option<&SynthSpec>,
) -> Result<PathBuf> {
    let n_variates = splits
        .named()
        .iter()
        .flat_map(|(_, s)| s.first())
        .map(ImtsSample::n_variates)
        .next()
        .ok_or_else(|| Error::Empty("write_dataset: every split is empty".into()))?;
    let mut entries = BTreeMap::new();
    for (name, samples) in splits.named() {
        if let Some(bad) = samples.iter().find(|s| s.n_variates() != n_variates) {
            return Err(Error::InvalidSample(format!(
                "sample {} has {} variates, dataset has {n_variates}",
                bad.id(),
                bad.n_variates()
            )));
        }
        let obs = observations_csv(samples)?;
        let qry = queries_csv(samples)?;
        let obs_name = format!("{name}_observations.csv");
        let qry_name = format!("{name}_queries.csv");
        write_file(&dir.join(&obs_name), &obs)?;
        write_file(&dir.join(&qry_name), &qry)?;
        entries.insert(
            name.to_string(),
            SplitFiles {
                observations: obs_name,
                queries: qry_name,
                observations_sha256: sha256_hex(&obs),
                queries_sha256: sha256_hex(&qry),
                samples: samples.len(),
            },
        );
    }
    let manifest = DatasetManifest {
        format: MANIFEST_FORMAT,
        n_variates,
        generator: generator.cloned(),
        splits: entries,
    };
    let path = dir.join("manifest.json");
    let mut text = serde_json::to_string_pretty(&manifest)?;
    text.push('\n');
    write_file(&path, text.as_bytes())?;
    Ok(path)
}

pub fn read_manifest(path: &Path) -> Result<DatasetManifest> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let m: DatasetManifest = serde_json::from_str(&text)?;
    if m.format != MANIFEST_FORMAT {
        return Err(Error::InvalidConfig(format!(
            "{}: unsupported manifest format {}",
            path.display(),
            m.format
        )));
    }
    if m.n_variates == 0 {
        return Err(Error::InvalidConfig(format!(
            "{}: n_variates is 0",
            path.display()
        )));
    }
    Ok(m)
}

fn verified_bytes(path: &Path, expected: &str) -> Result<Vec<u8>> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let found = sha256_hex(&bytes);
    if !found.eq_ignore_ascii_case(expected) {
        return Err(Error::Checksum {
            path: path.to_path_buf(),
            expected: expected.to_string(),
            found,
        });
    }
    Ok(bytes)
}

/// Reads one split named in the manifest after verifying both checksums.
pub fn read_split(manifest_path: &Path, name: &str) -> Result<Vec<ImtsSample>> {
    let m = read_manifest(manifest_path)?;
    read_split_with(manifest_path, &m, name)
}

fn read_split_with(
    manifest_path: &Path,
    m: &DatasetManifest,
    name: &str,
) -> Result<Vec<ImtsSample>> {
    let entry = m.splits.get(name).ok_or_else(|| {
        Error::InvalidConfig(format!(
            "{}: no split named {name}",
            manifest_path.display()
        ))
    })?;
    let base = manifest_path.parent().unwrap_or(Path::new("."));
    let obs_path = base.join(&entry.observations);
    let qry_path = base.join(&entry.queries);
    let obs = verified_bytes(&obs_path, &entry.observations_sha256)?;
    let qry = verified_bytes(&qry_path, &entry.queries_sha256)?;
    let observations = parse_observations(&obs_path, &obs)?;
    let queries = parse_queries(&qry_path, &qry)?;
    let samples = assemble(observations, queries, m.n_variates, &qry_path)?;
    if samples.len() != entry.samples {
        return Err(Error::InvalidConfig(format!(
            "{}: split {name} lists {} samples, files hold {}",
            manifest_path.display(),
            entry.samples,
            samples.len()
        )));
    }
    Ok(samples)
}

pub fn read_dataset(manifest_path: &Path) -> Result<(DatasetManifest, Splits)> {
    let m = read_manifest(manifest_path)?;
    let mut splits = Splits::default();
    for (name, slot) in [
        ("train", &mut splits.train),
        ("val", &mut splits.val),
        ("test", &mut splits.test),
    ] {
        if m.splits.contains_key(name) {
            *slot = read_split_with(manifest_path, &m, name)?;
        }
    }
    Ok((m, splits))
}

/// Reads a plain observation/query file pair without a manifest. Missing
/// variates up to `n_variates` become empty series.
pub fn read_files(
    observations: &Path,
    queries: &Path,
    n_variates: usize,
) -> Result<Vec<ImtsSample>> {
    let obs = fs::read(observations).map_err(|e| Error::io(observations, e))?;
    let qry = fs::read(queries).map_err(|e| Error::io(queries, e))?;
    let o = parse_observations(observations, &obs)?;
    let q = parse_queries(queries, &qry)?;
    assemble(o, q, n_variates, queries)
}

/// Raw query rows with their source line numbers, file order.
pub type QueryRows = Vec<(u64, u64, usize, Query)>;
type ObservationMap = BTreeMap<u64, BTreeMap<usize, Vec<(f64, f64)>>>;

fn reader(bytes: &[u8]) -> csv::Reader<&[u8]> {
    csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(bytes)
}

fn check_header(path: &Path, got: &csv::StringRecord, want: &[&str]) -> Result<()> {
    let names: Vec<&str> = got.iter().map(str::trim).collect();
    if names != want {
        return Err(Error::Malformed {
            path: path.to_path_buf(),
            line: 1,
            reason: format!(
                "expected header {}, found {}",
                want.join(","),
                names.join(",")
            ),
        });
    }
    Ok(())
}

fn field<T: std::str::FromStr>(
    path: &Path,
    line: u64,
    rec: &csv::StringRecord,
    i: usize,
    name: &str,
) -> Result<T> {
    let raw = rec.get(i).unwrap_or("").trim();
    raw.parse().map_err(|_| Error::Malformed {
        path: path.to_path_buf(),
        line,
        reason: format!("bad {name} {raw:?}"),
    })
}

fn finite(path: &Path, line: u64, v: f64, name: &str) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::Malformed {
            path: path.to_path_buf(),
            line,
            reason: format!("{name} must be finite, got {v}"),
        })
    }
}

fn parse_observations(path: &Path, bytes: &[u8]) -> Result<ObservationMap> {
    let mut rdr = reader(bytes);
    check_header(path, rdr.headers()?, &OBSERVATION_HEADER)?;
    let mut out: ObservationMap = BTreeMap::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| Error::Malformed {
            path: path.to_path_buf(),
            line: e.position().map_or(0, |p| p.line()),
            reason: e.to_string(),
        })?;
        let line = rec.position().map_or(0, |p| p.line());
        if rec.len() != 4 {
            return Err(Error::Malformed {
                path: path.to_path_buf(),
                line,
                reason: format!("expected 4 fields, found {}", rec.len()),
            });
        }
        let id: u64 = field(path, line, &rec, 0, "series_id")?;
        let variate: usize = field(path, line, &rec, 1, "variate")?;
        let t = finite(path, line, field(path, line, &rec, 2, "time")?, "time")?;
        let v = finite(path, line, field(path, line, &rec, 3, "value")?, "value")?;
        let col = out.entry(id).or_default().entry(variate).or_default();
        if let Some(&(prev, _)) = col.last() {
            if t <= prev {
                return Err(Error::Malformed {
                    path: path.to_path_buf(),
                    line,
                    reason: format!(
                        "series {id} variate {variate}: time {t} does not increase past {prev}"
                    ),
                });
            }
        }
        col.push((t, v));
    }
    Ok(out)
}

/// Parses a query file; accepts the header with or without `target` and
/// empty target cells.
pub fn parse_queries(path: &Path, bytes: &[u8]) -> Result<QueryRows> {
    let mut rdr = reader(bytes);
    let header = rdr.headers()?.clone();
    let with_target = header.len() == 4;
    if with_target {
        check_header(path, &header, &["series_id", "variate", "time", "target"])?;
    } else {
        check_header(path, &header, &["series_id", "variate", "time"])?;
    }
    let width = header.len();
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| Error::Malformed {
            path: path.to_path_buf(),
            line: e.position().map_or(0, |p| p.line()),
            reason: e.to_string(),
        })?;
        let line = rec.position().map_or(0, |p| p.line());
        if rec.len() != width {
            return Err(Error::Malformed {
                path: path.to_path_buf(),
                line,
                reason: format!("expected {width} fields, found {}", rec.len()),
            });
        }
        let id: u64 = field(path, line, &rec, 0, "series_id")?;
        let variate: usize = field(path, line, &rec, 1, "variate")?;
        let t = finite(path, line, field(path, line, &rec, 2, "time")?, "time")?;
        let target = match rec.get(3).map(str::trim) {
            Some(s) if !s.is_empty() => Some(finite(
                path,
                line,
                field(path, line, &rec, 3, "target")?,
                "target",
            )?),
            _ => None,
        };
        out.push((line, id, variate, Query::new(t, target)));
    }
    Ok(out)
}

fn assemble(
    obs: ObservationMap,
    queries: QueryRows,
    n_variates: usize,
    qpath: &Path,
) -> Result<Vec<ImtsSample>> {
    let mut ids: Vec<u64> = obs.keys().copied().collect();
    ids.extend(queries.iter().map(|q| q.1));
    ids.sort_unstable();
    ids.dedup();
    let mut grouped: BTreeMap<u64, Vec<Vec<Query>>> = BTreeMap::new();
    for (line, id, variate, q) in queries {
        if variate >= n_variates {
            return Err(Error::Malformed {
                path: qpath.to_path_buf(),
                line,
                reason: format!("variate {variate} out of range for {n_variates} variates"),
            });
        }
        let last = obs
            .get(&id)
            .and_then(|m| m.get(&variate))
            .and_then(|c| c.last())
            .map(|&(t, _)| t);
        if let Some(last) = last {
            if q.time <= last {
                return Err(Error::Malformed {
                    path: qpath.to_path_buf(),
                    line,
                    reason: format!(
                        "series {id} variate {variate}: query {} does not follow last observation {last}",
                        q.time
                    ),
                });
            }
        }
        grouped
            .entry(id)
            .or_insert_with(|| vec![Vec::new(); n_variates])[variate]
            .push(q);
    }
    let mut obs = obs;
    ids.into_iter()
        .map(|id| {
            let mut cols = obs.remove(&id).unwrap_or_default();
            if let Some((&v, _)) = cols.range(n_variates..).next() {
                return Err(Error::InvalidSample(format!(
                    "series {id}: variate {v} out of range for {n_variates} variates"
                )));
            }
            let series = (0..n_variates)
                .map(|n| match cols.remove(&n) {
                    Some(c) => RawSeries::new(n, c),
                    None => Ok(RawSeries::empty(n)),
                })
                .collect::<Result<Vec<_>>>()?;
            let qs = grouped
                .remove(&id)
                .unwrap_or_else(|| vec![Vec::new(); n_variates]);
            ImtsSample::new(id, series, qs)
        })
        .collect()
}
