//! CSV formats.
//!
//! - gold: `item_id,filter_id,label`
//! - votes: `classifier_id,item_id,filter_id,value,source_kind`
//!   (the `source_kind` column may be omitted for machine vote matrices)
//! - decisions: `item_id,decision,p_in_at_decision,votes_spent`
//!
//! Labels are written as `applies` / `not_applies`; `1`/`0` are accepted on input.

use std::collections::{BTreeMap, HashSet};
use std::fs::File;
use std::io::Write;
use std::path::Path;

use crate::error::{Result, ScreenError};
use crate::model::{
    ClassifierId, FilterId, FilterLabel, GoldRecord, GoldSet, ItemId, SourceKind, Vote,
};
use crate::scheduler::ItemDecision;

fn parse_err(path: &Path, line: u64, message: impl Into<String>) -> ScreenError {
    ScreenError::Parse {
        path: path.to_path_buf(),
        line,
        message: message.into(),
    }
}

fn reader(path: &Path) -> Result<csv::Reader<File>> {
    let file = File::open(path).map_err(|e| ScreenError::io(path, e))?;
    Ok(csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(file))
}

fn column(headers: &csv::StringRecord, name: &str, path: &Path) -> Result<usize> {
    headers
        .iter()
        .position(|h| h == name)
        .ok_or_else(|| parse_err(path, 1, format!("missing column {name:?}")))
}

fn field<T: std::str::FromStr>(
    rec: &csv::StringRecord,
    idx: usize,
    name: &str,
    path: &Path,
    line: u64,
) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    let raw = rec
        .get(idx)
        .ok_or_else(|| parse_err(path, line, format!("missing field {name}")))?;
    raw.parse::<T>()
        .map_err(|e| parse_err(path, line, format!("bad {name} {raw:?}: {e}")))
}

/// Reads a gold file. Every item must carry a label for every filter mentioned in the file.
pub fn read_gold(path: &Path) -> Result<GoldSet> {
    let mut rdr = reader(path)?;
    let headers = rdr.headers()?.clone();
    let (ci, cf, cl) = (
        column(&headers, "item_id", path)?,
        column(&headers, "filter_id", path)?,
        column(&headers, "label", path)?,
    );
    let mut labels: BTreeMap<ItemId, BTreeMap<FilterId, FilterLabel>> = BTreeMap::new();
    let mut filters = HashSet::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        let item = ItemId(field(&rec, ci, "item_id", path, line)?);
        let filter = FilterId(field(&rec, cf, "filter_id", path, line)?);
        let label: FilterLabel = field(&rec, cl, "label", path, line)?;
        filters.insert(filter);
        if labels
            .entry(item)
            .or_default()
            .insert(filter, label)
            .is_some()
        {
            return Err(parse_err(
                path,
                line,
                format!("duplicate gold entry for item {item}, filter {filter}"),
            ));
        }
    }
    let mut gold = GoldSet::new(filters);
    for (item, l) in labels {
        gold.insert(GoldRecord::new(item, l))
            .map_err(|e| parse_err(path, 0, e.to_string()))?;
    }
    Ok(gold)
}

pub fn write_gold(path: &Path, gold: &GoldSet) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["item_id", "filter_id", "label"])?;
    for r in gold.records() {
        for (f, l) in &r.labels {
            w.write_record([r.item_id.to_string(), f.to_string(), l.to_string()])?;
        }
    }
    w.flush().map_err(|e| ScreenError::io(path, e))
}

/// Reads votes in file order.
pub fn read_votes(path: &Path) -> Result<Vec<Vote>> {
    let mut rdr = reader(path)?;
    let headers = rdr.headers()?.clone();
    let cc = column(&headers, "classifier_id", path)?;
    let ci = column(&headers, "item_id", path)?;
    let cf = column(&headers, "filter_id", path)?;
    let cv = column(&headers, "value", path)?;
    let ck = headers.iter().position(|h| h == "source_kind");
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        let classifier: String = field(&rec, cc, "classifier_id", path, line)?;
        if classifier.is_empty() {
            return Err(parse_err(path, line, "empty classifier_id"));
        }
        out.push(Vote {
            classifier_id: ClassifierId(classifier),
            item_id: ItemId(field(&rec, ci, "item_id", path, line)?),
            filter_id: FilterId(field(&rec, cf, "filter_id", path, line)?),
            value: field(&rec, cv, "value", path, line)?,
            source_kind: match ck {
                Some(k) => field(&rec, k, "source_kind", path, line)?,
                None => SourceKind::Machine,
            },
        });
    }
    Ok(out)
}

pub fn write_votes(path: &Path, votes: &[Vote]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record([
        "classifier_id",
        "item_id",
        "filter_id",
        "value",
        "source_kind",
    ])?;
    for v in votes {
        w.write_record([
            v.classifier_id.as_str(),
            &v.item_id.to_string(),
            &v.filter_id.to_string(),
            v.value.as_str(),
            v.source_kind.as_str(),
        ])?;
    }
    w.flush().map_err(|e| ScreenError::io(path, e))
}

pub fn write_decisions(path: &Path, decisions: &[ItemDecision]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["item_id", "decision", "p_in_at_decision", "votes_spent"])?;
    for d in decisions {
        w.write_record([
            d.item_id.to_string(),
            d.label().to_string(),
            d.p_in_at_decision.to_string(),
            d.votes_spent.to_string(),
        ])?;
    }
    w.flush().map_err(|e| ScreenError::io(path, e))
}

/// Creates `path` for writing, refusing to clobber an existing file unless `force`.
pub fn create_output(path: &Path, force: bool) -> Result<File> {
    if path.exists() && !force {
        return Err(ScreenError::OutputExists(path.to_path_buf()));
    }
    File::create(path).map_err(|e| ScreenError::io(path, e))
}

pub fn write_text(path: &Path, text: &str, force: bool) -> Result<()> {
    let mut f = create_output(path, force)?;
    f.write_all(text.as_bytes())
        .map_err(|e| ScreenError::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write(dir: &Path, name: &str, body: &str) -> std::path::PathBuf {
        let p = dir.join(name);
        std::fs::write(&p, body).unwrap();
        p
    }

    #[test]
    fn gold_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(
            dir.path(),
            "g.csv",
            "item_id,filter_id,label\n1,0,applies\n1,1,0\n2,0,not_applies\n2,1,1\n",
        );
        let gold = read_gold(&p).unwrap();
        assert_eq!(gold.len(), 2);
        assert!(!gold.in_scope(ItemId(1)).unwrap());
        let out = dir.path().join("out.csv");
        write_gold(&out, &gold).unwrap();
        assert_eq!(read_gold(&out).unwrap(), gold);
    }

    #[test]
    fn gold_duplicate_rejected_with_line() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(
            dir.path(),
            "g.csv",
            "item_id,filter_id,label\n1,0,applies\n1,0,applies\n",
        );
        match read_gold(&p) {
            Err(ScreenError::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn gold_incomplete_item_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(
            dir.path(),
            "g.csv",
            "item_id,filter_id,label\n1,0,applies\n1,1,applies\n2,0,applies\n",
        );
        assert!(read_gold(&p).is_err());
    }

    #[test]
    fn malformed_vote_row_reports_line() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(
            dir.path(),
            "v.csv",
            "classifier_id,item_id,filter_id,value,source_kind\nw1,1,0,applies,crowd\nw1,x,0,applies,crowd\n",
        );
        let err = read_votes(&p).unwrap_err();
        assert!(err.to_string().contains(":3:"), "{err}");
    }

    #[test]
    fn machine_matrix_without_source_kind() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(
            dir.path(),
            "m.csv",
            "classifier_id,item_id,filter_id,value\nm1,4,0,1\n",
        );
        let votes = read_votes(&p).unwrap();
        assert_eq!(votes[0].source_kind, SourceKind::Machine);
        assert_eq!(votes[0].value, FilterLabel::Applies);
    }

    #[test]
    fn create_output_respects_force() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(dir.path(), "x.csv", "old");
        assert!(matches!(
            create_output(&p, false),
            Err(ScreenError::OutputExists(_))
        ));
        assert!(create_output(&p, true).is_ok());
    }
}
