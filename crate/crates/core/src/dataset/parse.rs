use std::collections::HashSet;
use std::fmt;
use std::io::BufRead;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{Interaction, InteractionSet, Split};
use crate::error::{Error, Result};
use crate::ids::{ItemId, UserId};

/// Supported rating file layouts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    /// `UserID::MovieID::Rating::Timestamp`, ratings 1-5.
    MovielensDat,
    /// `"User-ID";"ISBN";"Book-Rating"`, ratings 1-10, 0 = implicit.
    BookcrossingCsv,
    /// `user<TAB>item<TAB>rating`.
    GenericTsv,
}

impl Format {
    fn scale(self) -> Option<(f64, f64)> {
        match self {
            Format::MovielensDat => Some((1.0, 5.0)),
            Format::BookcrossingCsv => Some((1.0, 10.0)),
            Format::GenericTsv => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Format::MovielensDat => "movielens_dat",
            Format::BookcrossingCsv => "bookcrossing_csv",
            Format::GenericTsv => "generic_tsv",
        }
    }
}

impl fmt::Display for Format {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Format {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "movielens_dat" | "movielens" | "dat" => Ok(Format::MovielensDat),
            "bookcrossing_csv" | "bookcrossing" | "bx" => Ok(Format::BookcrossingCsv),
            "generic_tsv" | "tsv" => Ok(Format::GenericTsv),
            other => Err(Error::invalid(format!("unknown format {other:?}"))),
        }
    }
}

/// Parsed interactions plus counts of the lines that were not kept.
#[derive(Debug, Clone)]
pub struct ParseOutcome {
    pub set: InteractionSet,
    pub malformed: usize,
    /// Book-Crossing rating-0 rows.
    pub implicit_skipped: usize,
    /// Repeated (user, item) pairs; the first occurrence is kept.
    pub duplicates: usize,
}

enum Record {
    Keep(String, String, f64),
    Implicit,
    Malformed,
    Skip,
}

fn unquote(s: &str) -> &str {
    let s = s.trim();
    s.strip_prefix('"')
        .and_then(|s| s.strip_suffix('"'))
        .unwrap_or(s)
}

fn parse_line(format: Format, line: &str) -> Record {
    let line = line.trim_end_matches('\r');
    if line.trim().is_empty() {
        return Record::Skip;
    }
    let fields: Vec<&str> = match format {
        Format::MovielensDat => line.split("::").collect(),
        Format::BookcrossingCsv => line.split(';').map(unquote).collect(),
        Format::GenericTsv => {
            if line.starts_with('#') {
                return Record::Skip;
            }
            line.split('\t').collect()
        }
    };
    let expected = match format {
        Format::MovielensDat => fields.len() == 4 || fields.len() == 3,
        _ => fields.len() == 3,
    };
    if !expected {
        return Record::Malformed;
    }
    if format == Format::BookcrossingCsv && fields[0] == "User-ID" {
        return Record::Skip;
    }
    let (user, item) = (fields[0].trim(), fields[1].trim());
    if user.is_empty() || item.is_empty() {
        return Record::Malformed;
    }
    let Ok(rating) = fields[2].trim().parse::<f64>() else {
        return Record::Malformed;
    };
    if !rating.is_finite() {
        return Record::Malformed;
    }
    if format == Format::BookcrossingCsv && rating == 0.0 {
        return Record::Implicit;
    }
    if let Some((lo, hi)) = format.scale() {
        if rating < lo || rating > hi {
            return Record::Malformed;
        }
    }
    Record::Keep(user.to_string(), item.to_string(), rating)
}

/// Reads a rating file. Bytes that are not valid UTF-8 are replaced (the
/// Book-Crossing dump is Latin-1).
pub fn parse_interactions(path: impl AsRef<Path>, format: Format) -> Result<ParseOutcome> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|source| Error::Read {
        path: path.to_path_buf(),
        source,
    })?;
    parse_interactions_from(&bytes[..], format).map_err(|e| match e {
        Error::NoRecords(_) => Error::NoRecords(path.display().to_string()),
        other => other,
    })
}

pub fn parse_interactions_from(reader: impl BufRead, format: Format) -> Result<ParseOutcome> {
    let mut interactions = Vec::new();
    let mut seen: HashSet<(UserId, ItemId)> = HashSet::new();
    let (mut malformed, mut implicit_skipped, mut duplicates) = (0, 0, 0);
    for line in reader.split(b'\n') {
        let line = line?;
        let line = String::from_utf8_lossy(&line);
        match parse_line(format, &line) {
            Record::Keep(u, i, r) => {
                let (user, item) = (UserId::new(u), ItemId::new(i));
                if seen.insert((user.clone(), item.clone())) {
                    interactions.push(Interaction { user, item, rating: r });
                } else {
                    duplicates += 1;
                }
            }
            Record::Implicit => implicit_skipped += 1,
            Record::Malformed => malformed += 1,
            Record::Skip => {}
        }
    }
    if interactions.is_empty() {
        return Err(Error::NoRecords("input".into()));
    }
    Ok(ParseOutcome {
        set: InteractionSet::new(interactions, Split::All),
        malformed,
        implicit_skipped,
        duplicates,
    })
}

/// Writes interactions in the generic TSV format.
pub fn write_interactions_tsv(set: &InteractionSet, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut out = String::with_capacity(set.len() * 16);
    for x in set {
        out.push_str(&format!("{}\t{}\t{}\n", x.user, x.item, x.rating));
    }
    std::fs::write(path, out).map_err(|source| Error::Write {
        path: path.to_path_buf(),
        source,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn movielens_line() {
        let out = parse_interactions_from(&b"1::1193::5::978300760\n"[..], Format::MovielensDat).unwrap();
        assert_eq!(out.set.len(), 1);
        assert_eq!(out.set.interactions()[0], Interaction::new("1", "1193", 5.0));
    }

    #[test]
    fn bookcrossing_skips_implicit_and_header() {
        let data = b"\"User-ID\";\"ISBN\";\"Book-Rating\"\n\"276725\";\"034545104X\";\"0\"\n\"276726\";\"0155061224\";\"5\"\n";
        let out = parse_interactions_from(&data[..], Format::BookcrossingCsv).unwrap();
        assert_eq!(out.set.len(), 1);
        assert_eq!(out.implicit_skipped, 1);
        assert_eq!(out.set.interactions()[0].item.as_str(), "0155061224");
    }

    #[test]
    fn generic_tsv_three_lines() {
        let data = b"1\ta\t4\n1\tb\t3.5\n2\ta\t1\n";
        let out = parse_interactions_from(&data[..], Format::GenericTsv).unwrap();
        assert_eq!(out.set.len(), 3);
        assert_eq!(out.malformed, 0);
    }

    #[test]
    fn malformed_and_out_of_scale_lines_are_counted() {
        let data = b"1::10::5::0\n1::11::7::0\nbroken\n1::12::x::0\n";
        let out = parse_interactions_from(&data[..], Format::MovielensDat).unwrap();
        assert_eq!(out.set.len(), 1);
        assert_eq!(out.malformed, 3);
    }

    #[test]
    fn duplicate_pairs_keep_first() {
        let data = b"1\ta\t4\n1\ta\t2\n";
        let out = parse_interactions_from(&data[..], Format::GenericTsv).unwrap();
        assert_eq!(out.set.len(), 1);
        assert_eq!(out.duplicates, 1);
        assert_eq!(out.set.interactions()[0].rating, 4.0);
    }

    #[test]
    fn zero_valid_records_is_an_error() {
        let err = parse_interactions_from(&b"junk\n"[..], Format::GenericTsv).unwrap_err();
        assert!(matches!(err, Error::NoRecords(_)));
    }

    #[test]
    fn unreadable_file_is_an_error() {
        let err = parse_interactions("/nonexistent/ratings.dat", Format::MovielensDat).unwrap_err();
        assert!(matches!(err, Error::Read { .. }));
    }
}
