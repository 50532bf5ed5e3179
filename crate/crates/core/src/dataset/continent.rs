use std::collections::HashMap;
use std::fmt;
use std::io::BufRead;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::ids::ItemId;

/// Continent of production.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Continent {
    AF,
    AS,
    EU,
    NA,
    OC,
    SA,
}

impl Continent {
    pub const ALL: [Continent; 6] = [
        Continent::AF,
        Continent::AS,
        Continent::EU,
        Continent::NA,
        Continent::OC,
        Continent::SA,
    ];
    pub const COUNT: usize = 6;

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Continent {
        Self::ALL[i]
    }

    pub fn code(self) -> &'static str {
        match self {
            Continent::AF => "AF",
            Continent::AS => "AS",
            Continent::EU => "EU",
            Continent::NA => "NA",
            Continent::OC => "OC",
            Continent::SA => "SA",
        }
    }
}

impl fmt::Display for Continent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

impl FromStr for Continent {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "AF" => Ok(Continent::AF),
            "AS" => Ok(Continent::AS),
            "EU" => Ok(Continent::EU),
            "NA" => Ok(Continent::NA),
            "OC" => Ok(Continent::OC),
            "SA" => Ok(Continent::SA),
            other => Err(Error::UnknownContinent(other.to_string())),
        }
    }
}

impl Serialize for Continent {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(self.code())
    }
}

impl<'de> Deserialize<'de> for Continent {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// A set of continents stored as a bitmask; iteration follows [`Continent::ALL`].
#[derive(Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct ContinentSet(u8);

impl ContinentSet {
    pub fn empty() -> Self {
        Self(0)
    }

    pub fn single(c: Continent) -> Self {
        Self(1 << c.index())
    }

    pub fn insert(&mut self, c: Continent) {
        self.0 |= 1 << c.index();
    }

    pub fn contains(self, c: Continent) -> bool {
        self.0 & (1 << c.index()) != 0
    }

    pub fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn iter(self) -> impl Iterator<Item = Continent> {
        Continent::ALL.into_iter().filter(move |c| self.contains(*c))
    }

    pub fn bits(self) -> u8 {
        self.0
    }
}

impl FromIterator<Continent> for ContinentSet {
    fn from_iter<T: IntoIterator<Item = Continent>>(iter: T) -> Self {
        let mut set = Self::empty();
        for c in iter {
            set.insert(c);
        }
        set
    }
}

impl fmt::Display for ContinentSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let codes: Vec<&str> = self.iter().map(Continent::code).collect();
        f.write_str(&codes.join(","))
    }
}

impl fmt::Debug for ContinentSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{{self}}}")
    }
}

impl FromStr for ContinentSet {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let mut set = Self::empty();
        for code in s.split(',').map(str::trim).filter(|c| !c.is_empty()) {
            set.insert(code.parse()?);
        }
        Ok(set)
    }
}

impl Serialize for ContinentSet {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for ContinentSet {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Item to continents lookup loaded from a sidecar file.
pub type ContinentMap = HashMap<ItemId, ContinentSet>;

/// Loads a continent sidecar (`item_id<TAB>CODE[,CODE...]`).
pub fn load_continent_map(path: impl AsRef<Path>) -> Result<ContinentMap> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|source| Error::Read {
        path: path.to_path_buf(),
        source,
    })?;
    parse_continent_map(&bytes[..])
}

pub fn parse_continent_map(reader: impl BufRead) -> Result<ContinentMap> {
    let mut map = ContinentMap::new();
    for (n, line) in reader.split(b'\n').enumerate() {
        let line = line?;
        let line = String::from_utf8_lossy(&line);
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let (item, codes) = line
            .split_once('\t')
            .ok_or_else(|| Error::parse(n + 1, "expected item_id<TAB>codes"))?;
        let item = item.trim();
        if item.is_empty() {
            return Err(Error::parse(n + 1, "empty item id"));
        }
        let set: ContinentSet = codes.parse()?;
        if set.is_empty() {
            return Err(Error::parse(n + 1, "no continent codes"));
        }
        let id = ItemId::new(item);
        match map.get(&id) {
            Some(existing) if *existing != set => {
                return Err(Error::ConflictingContinents(item.to_string()))
            }
            _ => {
                map.insert(id, set);
            }
        }
    }
    Ok(map)
}

/// Writes a continent sidecar with items in ascending id order.
pub fn write_continent_map(map: &ContinentMap, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut items: Vec<(&ItemId, &ContinentSet)> = map.iter().collect();
    items.sort_by(|a, b| a.0.cmp(b.0));
    let mut out = String::new();
    for (item, set) in items {
        out.push_str(&format!("{item}\t{set}\n"));
    }
    std::fs::write(path, out).map_err(|source| Error::Write {
        path: path.to_path_buf(),
        source,
    })
}
