//! Known-networks store and its `network { ... }` text format.
//!
//! ```text
//! ibss_only_visible=1
//!
//! network {
//!     ssid="manet"
//!     mode=ibss
//!     priority=5
//! }
//! ```

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::NetConfigError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProfileMode {
    Ibss,
    Infrastructure,
}

impl ProfileMode {
    fn as_str(self) -> &'static str {
        match self {
            ProfileMode::Ibss => "ibss",
            ProfileMode::Infrastructure => "infrastructure",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct NetworkProfile {
    pub ssid: String,
    pub mode: ProfileMode,
    #[serde(default)]
    pub priority: i32,
}

impl NetworkProfile {
    pub fn ibss(ssid: impl Into<String>) -> Self {
        NetworkProfile {
            ssid: ssid.into(),
            mode: ProfileMode::Ibss,
            priority: 0,
        }
    }

    pub fn infrastructure(ssid: impl Into<String>, priority: i32) -> Self {
        NetworkProfile {
            ssid: ssid.into(),
            mode: ProfileMode::Infrastructure,
            priority,
        }
    }

    pub fn validate(&self) -> Result<(), NetConfigError> {
        if self.ssid.is_empty() {
            return Err(NetConfigError::InvalidProfile("empty ssid".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct NetworkStore {
    pub profiles: Vec<NetworkProfile>,
    pub ibss_only_visible: bool,
}

impl NetworkStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, profile: NetworkProfile) -> Result<(), NetConfigError> {
        profile.validate()?;
        if profile.mode == ProfileMode::Ibss {
            self.profiles
                .retain(|p| !(p.mode == ProfileMode::Ibss && p.ssid == profile.ssid));
        }
        self.profiles.push(profile);
        Ok(())
    }

    /// Inserts or replaces the IBSS profile for `profile.ssid`. Returns true when
    /// the store changed.
    pub fn upsert_ibss(&mut self, profile: NetworkProfile) -> Result<bool, NetConfigError> {
        profile.validate()?;
        if let Some(p) = self
            .profiles
            .iter_mut()
            .find(|p| p.mode == ProfileMode::Ibss && p.ssid == profile.ssid)
        {
            if *p == profile {
                return Ok(false);
            }
            *p = profile;
            return Ok(true);
        }
        self.profiles.push(profile);
        Ok(true)
    }

    pub fn remove_ibss(&mut self) -> bool {
        let before = self.profiles.len();
        self.profiles.retain(|p| p.mode != ProfileMode::Ibss);
        before != self.profiles.len()
    }

    pub fn has_ibss(&self) -> bool {
        self.profiles.iter().any(|p| p.mode == ProfileMode::Ibss)
    }

    /// Profiles the OS may connect to, highest priority first.
    pub fn visible(&self) -> Vec<NetworkProfile> {
        let mut v: Vec<NetworkProfile> = self
            .profiles
            .iter()
            .filter(|p| !self.ibss_only_visible || p.mode == ProfileMode::Ibss)
            .cloned()
            .collect();
        v.sort_by_key(|p| std::cmp::Reverse(p.priority));
        v
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "ibss_only_visible={}", u8::from(self.ibss_only_visible));
        for p in &self.profiles {
            let _ = writeln!(out);
            let _ = writeln!(out, "network {{");
            let _ = writeln!(out, "    ssid=\"{}\"", escape(&p.ssid));
            let _ = writeln!(out, "    mode={}", p.mode.as_str());
            let _ = writeln!(out, "    priority={}", p.priority);
            let _ = writeln!(out, "}}");
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self, NetConfigError> {
        let mut store = NetworkStore::new();
        let mut current: Option<PendingBlock> = None;
        for (n, raw) in text.lines().enumerate() {
            let line_no = n + 1;
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let err = |msg: &str| NetConfigError::StoreParse {
                line: line_no,
                message: msg.to_string(),
            };
            if line == "network {" {
                if current.is_some() {
                    return Err(err("nested network block"));
                }
                current = Some(PendingBlock {
                    start: line_no,
                    ..Default::default()
                });
                continue;
            }
            if line == "}" {
                let block = current.take().ok_or_else(|| err("unbalanced '}'"))?;
                let ssid = block.ssid.ok_or(NetConfigError::StoreParse {
                    line: block.start,
                    message: "network block without ssid".into(),
                })?;
                let mode = block.mode.unwrap_or(ProfileMode::Infrastructure);
                let priority = block.priority;
                store
                    .add(NetworkProfile { ssid, mode, priority })
                    .map_err(|e| err(&e.to_string()))?;
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| err("expected key=value"))?;
            match (&mut current, key.trim()) {
                (None, "ibss_only_visible") => {
                    store.ibss_only_visible = match value.trim() {
                        "1" | "true" => true,
                        "0" | "false" => false,
                        _ => return Err(err("ibss_only_visible must be 0 or 1")),
                    }
                }
                (None, other) => return Err(err(&format!("unknown top-level key {other:?}"))),
                (Some(block), "ssid") => block.ssid = Some(unescape(value.trim()).map_err(|m| err(&m))?),
                (Some(block), "mode") => {
                    block.mode = Some(match value.trim() {
                        "ibss" => ProfileMode::Ibss,
                        "infrastructure" => ProfileMode::Infrastructure,
                        _ => return Err(err("mode must be ibss or infrastructure")),
                    })
                }
                (Some(block), "priority") => {
                    block.priority = value.trim().parse().map_err(|_| err("priority must be an integer"))?
                }
                (Some(_), other) => return Err(err(&format!("unknown network key {other:?}"))),
            }
        }
        if let Some(block) = current {
            return Err(NetConfigError::StoreParse {
                line: block.start,
                message: "unterminated network block".into(),
            });
        }
        Ok(store)
    }
}

fn escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '\\' => out.push_str("\\\\"),
            '"' => out.push_str("\\\""),
            '\n' => out.push_str("\\n"),
            '\r' => out.push_str("\\r"),
            _ => out.push(c),
        }
    }
    out
}

fn unescape(quoted: &str) -> Result<String, String> {
    let inner = quoted
        .strip_prefix('"')
        .and_then(|s| s.strip_suffix('"'))
        .ok_or("ssid must be quoted")?;
    let mut out = String::with_capacity(inner.len());
    let mut chars = inner.chars();
    while let Some(c) = chars.next() {
        if c != '\\' {
            out.push(c);
            continue;
        }
        match chars.next() {
            Some('\\') => out.push('\\'),
            Some('"') => out.push('"'),
            Some('n') => out.push('\n'),
            Some('r') => out.push('\r'),
            _ => return Err("bad escape in ssid".into()),
        }
    }
    Ok(out)
}

#[derive(Default)]
struct PendingBlock {
    ssid: Option<String>,
    mode: Option<ProfileMode>,
    priority: i32,
    start: usize,
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sample() -> NetworkStore {
        NetworkStore {
            profiles: vec![
                NetworkProfile::infrastructure("home", 3),
                NetworkProfile::ibss("manet"),
            ],
            ibss_only_visible: true,
        }
    }

    #[test]
    fn ibss_only_filter() {
        let s = sample();
        let names: Vec<_> = s.visible().into_iter().map(|p| p.ssid).collect();
        assert_eq!(names, vec!["manet"]);
    }

    #[test]
    fn unfiltered_store_orders_by_priority() {
        let mut s = sample();
        s.ibss_only_visible = false;
        let names: Vec<_> = s.visible().into_iter().map(|p| p.ssid).collect();
        assert_eq!(names, vec!["home", "manet"]);
    }

    #[test]
    fn empty_store_shows_nothing() {
        assert!(NetworkStore::new().visible().is_empty());
    }

    #[test]
    fn one_ibss_profile_per_ssid() {
        let mut s = NetworkStore::new();
        assert!(s.upsert_ibss(NetworkProfile::ibss("m")).unwrap());
        assert!(!s.upsert_ibss(NetworkProfile::ibss("m")).unwrap());
        s.add(NetworkProfile::ibss("m")).unwrap();
        assert_eq!(s.profiles.len(), 1);
        assert!(s.add(NetworkProfile::ibss("")).is_err());
    }

    #[test]
    fn render_matches_block_layout() {
        let text = sample().render();
        assert!(text.starts_with("ibss_only_visible=1\n"));
        assert!(text.contains("network {\n    ssid=\"manet\"\n    mode=ibss\n    priority=0\n}\n"));
    }

    #[test]
    fn parse_errors_carry_line_numbers() {
        let err = NetworkStore::parse("ibss_only_visible=0\nnetwork {\n    bogus=1\n}\n").unwrap_err();
        assert!(matches!(err, NetConfigError::StoreParse { line: 3, .. }));
        assert!(NetworkStore::parse("network {\n ssid=\"x\"\n").is_err());
    }

    fn profile() -> impl Strategy<Value = NetworkProfile> {
        (
            "[ -~\n\"\\\\]{1,12}",
            prop_oneof![Just(ProfileMode::Ibss), Just(ProfileMode::Infrastructure)],
            -100i32..100,
        )
            .prop_map(|(ssid, mode, priority)| NetworkProfile { ssid, mode, priority })
    }

    proptest! {
        #[test]
        fn store_round_trips(profiles in proptest::collection::vec(profile(), 0..6), flag in any::<bool>()) {
            let mut store = NetworkStore { profiles: vec![], ibss_only_visible: flag };
            for p in profiles {
                store.add(p).unwrap();
            }
            let parsed = NetworkStore::parse(&store.render()).unwrap();
            prop_assert_eq!(parsed, store);
        }
    }
}
