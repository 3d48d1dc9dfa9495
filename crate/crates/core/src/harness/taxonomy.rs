//! Feature check-list of MANET solutions for smartphones.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Support {
    Yes,
    No,
    Partial,
}

impl Support {
    pub fn as_str(self) -> &'static str {
        match self {
            Support::Yes => "yes",
            Support::No => "no",
            Support::Partial => "partial",
        }
    }
}

impl fmt::Display for Support {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Support {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "yes" => Ok(Support::Yes),
            "no" => Ok(Support::No),
            "partial" => Ok(Support::Partial),
            other => Err(format!("expected yes, no or partial, got {other:?}")),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TechnologyProfile {
    pub name: String,
    pub no_internet_needed: Support,
    pub multi_hop: Support,
    pub any_app: Support,
    pub no_other_wireless: Support,
    pub other_systems: Support,
}

pub const COLUMNS: [&str; 5] = [
    "No Internet Needed",
    "Multi-hop",
    "Any App",
    "No other Wireless",
    "Other Systems",
];

impl TechnologyProfile {
    pub fn new(name: &str, cells: [Support; 5]) -> Self {
        let [a, b, c, d, e] = cells;
        TechnologyProfile {
            name: name.to_string(),
            no_internet_needed: a,
            multi_hop: b,
            any_app: c,
            no_other_wireless: d,
            other_systems: e,
        }
    }

    pub fn cells(&self) -> [Support; 5] {
        [
            self.no_internet_needed,
            self.multi_hop,
            self.any_app,
            self.no_other_wireless,
            self.other_systems,
        ]
    }
}

pub fn builtin_profiles() -> Vec<TechnologyProfile> {
    use Support::*;
    vec![
        TechnologyProfile::new("802.11s", [Yes, Yes, Yes, Yes, Partial]),
        TechnologyProfile::new("Open Garden", [Yes, Partial, No, No, No]),
        TechnologyProfile::new("Serval", [Yes, Yes, No, Yes, No]),
        TechnologyProfile::new("WiFi Direct", [Yes, No, No, Yes, Yes]),
        TechnologyProfile::new("AdHocDroid", [Yes, Yes, Yes, Yes, Partial]),
    ]
}

/// The built-in rows followed by `extra`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TaxonomyReport {
    pub rows: Vec<TechnologyProfile>,
}

impl Default for TaxonomyReport {
    fn default() -> Self {
        TaxonomyReport {
            rows: builtin_profiles(),
        }
    }
}

impl TaxonomyReport {
    pub fn with_rows(extra: impl IntoIterator<Item = TechnologyProfile>) -> Self {
        let mut r = Self::default();
        r.rows.extend(extra);
        r
    }

    /// Reads extra rows from JSON (an array of profiles).
    pub fn extra_from_json(text: &str) -> Result<Vec<TechnologyProfile>, serde_json::Error> {
        serde_json::from_str(text)
    }

    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = vec!["Technology"];
        header.extend(COLUMNS);
        w.write_record(&header).expect("in-memory write");
        for row in &self.rows {
            let mut rec = vec![row.name.as_str()];
            rec.extend(row.cells().iter().map(|c| c.as_str()));
            w.write_record(&rec).expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("flush")).expect("utf-8")
    }

    pub fn to_table(&self) -> String {
        let name_w = self
            .rows
            .iter()
            .map(|r| r.name.len())
            .chain(std::iter::once("Technology".len()))
            .max()
            .unwrap_or(0);
        let widths: Vec<usize> = COLUMNS.iter().map(|c| c.len().max(7)).collect();
        let mut out = format!("{:<name_w$}", "Technology");
        for (c, w) in COLUMNS.iter().zip(&widths) {
            out.push_str(&format!(" | {c:<w$}"));
        }
        out.push('\n');
        out.push_str(&"-".repeat(name_w));
        for w in &widths {
            out.push_str(&format!("-+-{}", "-".repeat(*w)));
        }
        out.push('\n');
        for row in &self.rows {
            out.push_str(&format!("{:<name_w$}", row.name));
            for (cell, w) in row.cells().iter().zip(&widths) {
                out.push_str(&format!(" | {:<w$}", cell.as_str()));
            }
            out.push('\n');
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row<'a>(rows: &'a [TechnologyProfile], name: &str) -> &'a TechnologyProfile {
        rows.iter().find(|r| r.name == name).unwrap()
    }

    #[test]
    fn spot_cells() {
        let rows = builtin_profiles();
        assert_eq!(row(&rows, "WiFi Direct").multi_hop, Support::No);
        assert_eq!(row(&rows, "AdHocDroid").other_systems, Support::Partial);
        assert_eq!(row(&rows, "Serval").any_app, Support::No);
        assert_eq!(row(&rows, "Open Garden").multi_hop, Support::Partial);
    }

    #[test]
    fn csv_round_trip() {
        let extra = TechnologyProfile::new("Mesh X", [Support::No; 5]);
        let report = TaxonomyReport::with_rows([extra.clone()]);
        let text = report.to_csv();
        let mut rd = csv::Reader::from_reader(text.as_bytes());
        assert_eq!(rd.headers().unwrap().len(), 6);
        let parsed: Vec<TechnologyProfile> = rd
            .records()
            .map(|r| {
                let r = r.unwrap();
                let cells: Vec<Support> = (1..6).map(|i| r[i].parse().unwrap()).collect();
                TechnologyProfile::new(&r[0], cells.try_into().unwrap())
            })
            .collect();
        assert_eq!(parsed.len(), 6);
        assert_eq!(parsed[5], extra);
        assert_eq!(&parsed[..5], &builtin_profiles()[..]);
    }

    #[test]
    fn table_has_one_line_per_row() {
        let t = TaxonomyReport::default().to_table();
        assert_eq!(t.lines().count(), 7);
        assert!(t.lines().nth(6).unwrap().starts_with("AdHocDroid"));
    }

    #[test]
    fn extra_rows_from_json() {
        let rows = TaxonomyReport::extra_from_json(
            r#"[{"name": "B.A.T.M.A.N.", "no_internet_needed": "yes", "multi_hop": "yes",
                 "any_app": "yes", "no_other_wireless": "yes", "other_systems": "no"}]"#,
        )
        .unwrap();
        assert_eq!(rows[0].other_systems, Support::No);
        assert!("maybe".parse::<Support>().is_err());
    }
}
