//! Site attribute tables and declarative screening rules.
//!
//! A rules document holds one predicate per line, `field op value`, with `#`
//! comments. Operators: `==`, `!=`, `<`, `<=`, `>`, `>=`, `in`, `not_in`; list
//! values are `|`-separated. Text comparisons ignore case and surrounding space;
//! ordering operators compare numbers.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::candidates::CandidateSite;
use crate::error::{Error, Result};
use crate::grid::GridSpec;

/// Shipped default rule set: accessible sites free of urban, industrial or farm-and-settlement use.
pub const DEFAULT_RULES: &str = include_str!("../../fixtures/default.rules");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ClimateZone {
    Northern,
    RedSeaCoastal,
    Interior,
    AsirHighland,
    SouthWestern,
    SouthEastern,
}

impl ClimateZone {
    pub const ALL: [ClimateZone; 6] = [
        ClimateZone::Northern,
        ClimateZone::RedSeaCoastal,
        ClimateZone::Interior,
        ClimateZone::AsirHighland,
        ClimateZone::SouthWestern,
        ClimateZone::SouthEastern,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ClimateZone::Northern => "Northern",
            ClimateZone::RedSeaCoastal => "Red Sea Coastal",
            ClimateZone::Interior => "Interior",
            ClimateZone::AsirHighland => "Asir Highland",
            ClimateZone::SouthWestern => "South-Western",
            ClimateZone::SouthEastern => "South-Eastern",
        }
    }
}

impl fmt::Display for ClimateZone {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ClimateZone {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let key = normalize_key(s);
        ClimateZone::ALL
            .into_iter()
            .find(|z| normalize_key(z.as_str()) == key)
            .ok_or_else(|| Error::InvalidInput(format!("unknown climate zone {s:?}")))
    }
}

/// Lower-case, runs of non-alphanumerics collapsed to `_`, trimmed: `Elevation (m)` -> `elevation_m`.
pub fn normalize_key(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.trim().chars() {
        if c.is_alphanumeric() {
            out.extend(c.to_lowercase());
        } else if !out.ends_with('_') {
            out.push('_');
        }
    }
    out.trim_matches('_').to_string()
}

/// Field values of one site, keyed by normalized column name.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SiteAttributes {
    pub fields: BTreeMap<String, String>,
}

impl SiteAttributes {
    pub fn get(&self, field: &str) -> Option<&str> {
        self.fields.get(&normalize_key(field)).map(|s| s.as_str())
    }

    pub fn climate_zone(&self) -> Option<Result<ClimateZone>> {
        self.get("climate_zone").map(str::parse)
    }

    pub fn elevation_m(&self) -> Option<f64> {
        self.get("elevation_m")?.trim().parse().ok()
    }

    pub fn accessible(&self) -> Option<bool> {
        match self.get("accessibility")?.trim().to_ascii_lowercase().as_str() {
            "yes" => Some(true),
            "no" => Some(false),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum TableKey {
    Number(usize),
    Coords(f64, f64),
}

/// Attribute rows keyed by site number (`No.` column) or by `lat`/`lon` columns.
#[derive(Debug, Clone, PartialEq)]
pub struct AttributeTable {
    /// Normalized column names in file order.
    pub columns: Vec<String>,
    rows: Vec<(TableKey, SiteAttributes)>,
}

impl AttributeTable {
    pub fn empty() -> Self {
        AttributeTable {
            columns: Vec::new(),
            rows: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn rows(&self) -> impl Iterator<Item = &SiteAttributes> {
        self.rows.iter().map(|(_, a)| a)
    }

    pub fn from_reader(reader: impl std::io::Read, origin: &Path) -> Result<Self> {
        let mut r = csv::Reader::from_reader(reader);
        let columns: Vec<String> = r
            .headers()
            .map_err(|e| Error::csv(origin, e))?
            .iter()
            .map(normalize_key)
            .collect();
        let by_number = columns.iter().position(|c| c == "no");
        let lat = columns.iter().position(|c| c == "lat");
        let lon = columns.iter().position(|c| c == "lon");
        let mut rows: Vec<(TableKey, SiteAttributes)> = Vec::new();
        for (line, rec) in r.records().enumerate() {
            let rec = rec.map_err(|e| Error::csv(origin, e))?;
            let bad = |what: &str| Error::Metadata(format!("{}: row {}: {what}", origin.display(), line + 2));
            let field = |i: usize| rec.get(i).unwrap_or("").trim();
            let key = match (by_number, lat, lon) {
                (Some(i), _, _) => TableKey::Number(field(i).parse().map_err(|_| bad("site number is not an integer"))?),
                (None, Some(a), Some(b)) => TableKey::Coords(
                    field(a).parse().map_err(|_| bad("lat is not a number"))?,
                    field(b).parse().map_err(|_| bad("lon is not a number"))?,
                ),
                _ => return Err(bad("table needs a `No.` column or `lat` and `lon` columns")),
            };
            if rows.iter().any(|(k, _)| *k == key) {
                return Err(Error::DuplicateKey(format!("{}: row {} repeats {key:?}", origin.display(), line + 2)));
            }
            let fields = columns
                .iter()
                .enumerate()
                .map(|(i, c)| (c.clone(), field(i).to_string()))
                .collect();
            let attrs = SiteAttributes { fields };
            if let Some(z) = attrs.climate_zone() {
                z.map_err(|e| bad(&e.to_string()))?;
            }
            if attrs.get("accessibility").is_some() && attrs.accessible().is_none() {
                return Err(bad("accessibility must be Yes or No"));
            }
            rows.push((key, attrs));
        }
        Ok(AttributeTable { columns, rows })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::from_reader(file, path)
    }

    fn lookup(&self, site: &CandidateSite, grid: &GridSpec) -> Option<&SiteAttributes> {
        self.rows.iter().find_map(|(k, a)| {
            let hit = match k {
                TableKey::Number(n) => *n == site.rank,
                TableKey::Coords(lat, lon) => {
                    (lat - site.lat).abs() <= grid.lat_step() / 2.0 && (lon - site.lon).abs() <= grid.lon_step() / 2.0
                }
            };
            hit.then_some(a)
        })
    }
}

/// Left join: every site is kept; unmatched sites stay unannotated.
///
/// Coordinate keys match within half a grid step in each direction.
pub fn join_attributes(sites: &mut [CandidateSite], table: &AttributeTable, grid: &GridSpec) {
    for s in sites.iter_mut() {
        s.attributes = table.lookup(s, grid).cloned();
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Op {
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
    In,
    NotIn,
}

impl Op {
    pub fn as_str(self) -> &'static str {
        match self {
            Op::Eq => "==",
            Op::Ne => "!=",
            Op::Lt => "<",
            Op::Le => "<=",
            Op::Gt => ">",
            Op::Ge => ">=",
            Op::In => "in",
            Op::NotIn => "not_in",
        }
    }

    fn parse(s: &str) -> Option<Op> {
        [Op::Eq, Op::Ne, Op::Lt, Op::Le, Op::Gt, Op::Ge, Op::In, Op::NotIn]
            .into_iter()
            .find(|o| o.as_str() == s)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rule {
    /// Normalized field name.
    pub field: String,
    pub op: Op,
    pub value: String,
}

impl fmt::Display for Rule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {} {}", self.field, self.op.as_str(), self.value)
    }
}

fn text_eq(a: &str, b: &str) -> bool {
    a.trim().eq_ignore_ascii_case(b.trim())
}

impl Rule {
    /// `Ok(None)` when the site lacks the field.
    pub fn holds(&self, attrs: &SiteAttributes) -> Result<Option<bool>> {
        let Some(actual) = attrs.get(&self.field) else {
            return Ok(None);
        };
        let list = || self.value.split('|').map(str::trim);
        let num = |s: &str| -> Result<f64> {
            s.trim()
                .parse()
                .map_err(|_| Error::InvalidInput(format!("rule `{self}`: {s:?} is not a number")))
        };
        Ok(Some(match self.op {
            Op::Eq => text_eq(actual, &self.value),
            Op::Ne => !text_eq(actual, &self.value),
            Op::In => list().any(|v| text_eq(actual, v)),
            Op::NotIn => !list().any(|v| text_eq(actual, v)),
            Op::Lt => num(actual)? < num(&self.value)?,
            Op::Le => num(actual)? <= num(&self.value)?,
            Op::Gt => num(actual)? > num(&self.value)?,
            Op::Ge => num(actual)? >= num(&self.value)?,
        }))
    }
}

/// Conjunction of rules; the empty set retains everything.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct RuleSet {
    pub rules: Vec<Rule>,
}

impl FromStr for RuleSet {
    type Err = Error;
    fn from_str(text: &str) -> Result<Self> {
        let mut rules = Vec::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let bad = || Error::InvalidInput(format!("rules line {}: expected `field op value`, got {raw:?}", n + 1));
            let (field, rest) = line.split_once(char::is_whitespace).ok_or_else(bad)?;
            let (op, value) = rest.trim_start().split_once(char::is_whitespace).ok_or_else(bad)?;
            let op = Op::parse(op).ok_or_else(bad)?;
            let value = value.trim();
            if value.is_empty() {
                return Err(bad());
            }
            rules.push(Rule {
                field: normalize_key(field),
                op,
                value: value.to_string(),
            });
        }
        Ok(RuleSet { rules })
    }
}

impl RuleSet {
    pub fn default_rules() -> Self {
        DEFAULT_RULES.parse().expect("shipped rules parse")
    }

    pub fn load(path: &Path) -> Result<Self> {
        std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?.parse()
    }

    /// `Ok(None)` when some rule's field is missing from the site.
    pub fn evaluate(&self, attrs: &SiteAttributes) -> Result<Option<bool>> {
        let mut all = true;
        for r in &self.rules {
            match r.holds(attrs)? {
                None => return Ok(None),
                Some(h) => all &= h,
            }
        }
        Ok(Some(all))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FilterReport {
    /// Ranks of retained sites.
    pub retained: Vec<usize>,
    /// Ranks of sites without attributes, or lacking a field a rule needs.
    pub unannotated: Vec<usize>,
}

/// Sets `retained` on every annotated site; others are flagged and left `None`.
pub fn filter_candidates(sites: &mut [CandidateSite], rules: &RuleSet) -> Result<FilterReport> {
    let mut report = FilterReport {
        retained: Vec::new(),
        unannotated: Vec::new(),
    };
    for s in sites.iter_mut() {
        s.retained = match &s.attributes {
            None => None,
            Some(a) => rules.evaluate(a)?,
        };
        match s.retained {
            None => {
                log::warn!("site {} has no usable attributes and is not screened", s.rank);
                report.unannotated.push(s.rank);
            }
            Some(true) => report.retained.push(s.rank),
            Some(false) => {}
        }
    }
    Ok(report)
}
