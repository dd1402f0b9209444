//! Source classification and geo extraction from page URLs.
//!
//! A [`UrlRegistry`] holds an ordered list of [`UrlParserRule`]s. The first
//! rule whose host suffix and path pattern both match decides which built-in
//! extractor runs. Extraction is soft: anything unparseable or out of range
//! yields no metadata and a logged warning, never a rejected submission.

use std::fmt;
use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;
use url::Url;

/// Provider tag attached to street-view metadata.
pub const GOOGLE_STREETVIEW: &str = "google_streetview";
/// Extractor that matches but extracts nothing.
pub const CLASSIFY_ONLY: &str = "none";

/// Registered extractor ids.
pub const EXTRACTORS: [&str; 2] = [GOOGLE_STREETVIEW, CLASSIFY_ONLY];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeoMetadata {
    pub latitude: f64,
    pub longitude: f64,
    pub heading: f64,
    /// Street-view tilt: 0 looks straight down, 90 at the horizon, 180 straight up.
    pub pitch: f64,
    pub fov: f64,
    pub provider: String,
}

impl GeoMetadata {
    /// Describes the first field outside its valid range, if any.
    pub fn range_violation(&self) -> Option<String> {
        let checks: [(&str, f64, bool); 5] = [
            ("latitude", self.latitude, (-90.0..=90.0).contains(&self.latitude)),
            ("longitude", self.longitude, (-180.0..=180.0).contains(&self.longitude)),
            ("heading", self.heading, (0.0..360.0).contains(&self.heading)),
            ("pitch", self.pitch, (0.0..=180.0).contains(&self.pitch)),
            ("fov", self.fov, self.fov > 0.0 && self.fov <= 180.0),
        ];
        if let Some((name, value, _)) = checks.iter().find(|c| !c.2) {
            return Some(format!("{name} {value} out of range"));
        }
        if self.provider.is_empty() {
            return Some("provider is empty".into());
        }
        None
    }

    pub fn is_in_range(&self) -> bool {
        self.range_violation().is_none()
    }
}

/// Where an image came from, derived from the page host alone.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SourceTag {
    Google,
    Baidu,
    Flickr,
    Other,
}

impl SourceTag {
    pub const ALL: [SourceTag; 4] = [SourceTag::Google, SourceTag::Baidu, SourceTag::Flickr, SourceTag::Other];

    pub fn label(self) -> &'static str {
        match self {
            SourceTag::Google => "Google (Street View, Image Search)",
            SourceTag::Baidu => "Baidu street view",
            SourceTag::Flickr => "Flickr",
            SourceTag::Other => "Other",
        }
    }
}

impl fmt::Display for SourceTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SourceTag::Google => "google",
            SourceTag::Baidu => "baidu",
            SourceTag::Flickr => "flickr",
            SourceTag::Other => "other",
        })
    }
}

fn host_of(url: &str) -> Option<String> {
    let parsed = Url::parse(url).ok()?;
    parsed.host_str().map(|h| h.trim_end_matches('.').to_ascii_lowercase())
}

/// True when `host` equals `suffix` or ends with `.suffix`.
///
/// A suffix of the form `name.*` matches `name` followed by one or two
/// top-level labels (`google.com`, `google.co.uk`, `maps.google.fi`).
pub fn host_matches(host: &str, suffix: &str) -> bool {
    let host = host.to_ascii_lowercase();
    let suffix = suffix.to_ascii_lowercase();
    if let Some(base) = suffix.strip_suffix(".*") {
        let labels: Vec<&str> = host.split('.').collect();
        let base_labels: Vec<&str> = base.split('.').collect();
        let n = base_labels.len();
        return (1..=2).any(|tld| {
            labels.len() >= n + tld && labels[labels.len() - tld - n..labels.len() - tld] == base_labels[..]
        });
    }
    host == suffix || host.ends_with(&format!(".{suffix}"))
}

/// Classifies a page URL by its host. Unparseable input is `Other`.
pub fn classify_source(url: &str) -> SourceTag {
    let Some(host) = host_of(url) else {
        tracing::warn!(url, "cannot parse page URL; classifying source as other");
        return SourceTag::Other;
    };
    if host_matches(&host, "google.*") || host_matches(&host, "googleusercontent.com") {
        SourceTag::Google
    } else if host_matches(&host, "baidu.com") {
        SourceTag::Baidu
    } else if host_matches(&host, "flickr.com") || host_matches(&host, "staticflickr.com") {
        SourceTag::Flickr
    } else {
        SourceTag::Other
    }
}

/// Builds the canonical street-view URL for `g`. Fields are written with six
/// decimals; `g` is expected to be in range.
///
/// Rounding never leaves the open ends of the ranges: a heading just below
/// 360 is written as 359.999999 and a tiny fov as 0.000001, so the rendered
/// URL parses back within 1e-6 of every field.
pub fn render_gsv_url(g: &GeoMetadata) -> String {
    const STEP: f64 = 1e-6;
    let round6 = |v: f64| (v * 1e6).round() / 1e6;
    let heading = if round6(g.heading) >= 360.0 { 360.0 - STEP } else { g.heading };
    let fov = if round6(g.fov) <= 0.0 { STEP } else { g.fov };
    format!(
        "https://www.google.com/maps/@{:.6},{:.6},3a,{:.6}y,{:.6}h,{:.6}t",
        g.latitude, g.longitude, fov, heading, g.pitch
    )
}

static GSV_VIEW: LazyLock<Regex> = LazyLock::new(|| {
    let num = r"([+-]?\d+(?:\.\d+)?)";
    Regex::new(&format!(r"@{num},{num},3a,{num}y,{num}h,{num}t(?:[/,?#!]|$)")).expect("street-view grammar")
});

fn extract_streetview(target: &str) -> Option<GeoMetadata> {
    let caps = GSV_VIEW.captures(target)?;
    let field = |i: usize| caps[i].parse::<f64>().ok().filter(|v| v.is_finite());
    Some(GeoMetadata {
        latitude: field(1)?,
        longitude: field(2)?,
        fov: field(3)?,
        heading: field(4)?,
        pitch: field(5)?,
        provider: GOOGLE_STREETVIEW.to_owned(),
    })
}

fn run_extractor(id: &str, target: &str) -> Option<GeoMetadata> {
    match id {
        GOOGLE_STREETVIEW => extract_streetview(target),
        _ => None,
    }
}

/// One URL parsing routine, as written in the server configuration.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UrlParserRule {
    pub name: String,
    pub domain_suffix: String,
    /// Matched against the URL path (plus `?query` when present).
    pub path_pattern: String,
    pub extractor_id: String,
}

impl UrlParserRule {
    pub fn new(name: &str, domain_suffix: &str, path_pattern: &str, extractor_id: &str) -> Self {
        Self {
            name: name.into(),
            domain_suffix: domain_suffix.into(),
            path_pattern: path_pattern.into(),
            extractor_id: extractor_id.into(),
        }
    }
}

#[derive(Debug, Error)]
pub enum RuleError {
    #[error("rule {rule:?}: path pattern does not compile: {source}")]
    Pattern { rule: String, source: Box<regex::Error> },
    #[error("rule {rule:?}: unknown extractor {extractor:?} (known: {known})", known = EXTRACTORS.join(", "))]
    UnknownExtractor { rule: String, extractor: String },
}

#[derive(Debug, Clone)]
struct CompiledRule {
    rule: UrlParserRule,
    pattern: Regex,
}

/// What [`UrlRegistry::extract`] found for one URL.
#[derive(Debug, Clone, PartialEq)]
pub enum GeoOutcome {
    /// The URL could not be parsed.
    Unparseable,
    /// No rule applies.
    NoRule,
    /// A rule applied but produced nothing (classification-only rule, or the
    /// extractor's grammar did not match).
    Nothing { rule: String },
    /// The extractor produced a value outside the valid ranges; it is dropped.
    Discarded { rule: String, reason: String },
    Extracted { rule: String, geo: GeoMetadata },
}

impl GeoOutcome {
    pub fn geo(self) -> Option<GeoMetadata> {
        match self {
            GeoOutcome::Extracted { geo, .. } => Some(geo),
            _ => None,
        }
    }
}

/// Ordered, immutable-after-startup list of URL rules. Earlier rules win.
#[derive(Debug, Clone, Default)]
pub struct UrlRegistry {
    rules: Vec<CompiledRule>,
}

impl UrlRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    /// Built-in rules: street-view extraction on Google Maps, and a
    /// classification-only rule for Baidu maps (its URLs carry panorama ids,
    /// not coordinates).
    pub fn default_rules() -> Vec<UrlParserRule> {
        vec![
            UrlParserRule::new("google-streetview", "google.*", r"^/maps/.*@", GOOGLE_STREETVIEW),
            UrlParserRule::new("baidu-map", "baidu.com", r".*", CLASSIFY_ONLY),
        ]
    }

    pub fn with_defaults() -> Self {
        Self::from_rules(Self::default_rules()).expect("built-in rules are valid")
    }

    pub fn from_rules(rules: impl IntoIterator<Item = UrlParserRule>) -> Result<Self, RuleError> {
        rules.into_iter().try_fold(Self::new(), |reg, r| reg.register(r))
    }

    /// Appends `rule` after validating its pattern and extractor.
    pub fn register(mut self, rule: UrlParserRule) -> Result<Self, RuleError> {
        let pattern = Regex::new(&rule.path_pattern)
            .map_err(|e| RuleError::Pattern { rule: rule.name.clone(), source: Box::new(e) })?;
        if !EXTRACTORS.contains(&rule.extractor_id.as_str()) {
            return Err(RuleError::UnknownExtractor { rule: rule.name, extractor: rule.extractor_id });
        }
        self.rules.push(CompiledRule { rule, pattern });
        Ok(self)
    }

    pub fn len(&self) -> usize {
        self.rules.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rules.is_empty()
    }

    pub fn rules(&self) -> impl Iterator<Item = &UrlParserRule> {
        self.rules.iter().map(|c| &c.rule)
    }

    pub fn extract(&self, url: &str) -> GeoOutcome {
        let Ok(parsed) = Url::parse(url) else {
            return GeoOutcome::Unparseable;
        };
        let Some(host) = parsed.host_str() else {
            return GeoOutcome::NoRule;
        };
        let target = match parsed.query() {
            Some(q) => format!("{}?{q}", parsed.path()),
            None => parsed.path().to_owned(),
        };
        let Some(c) = self
            .rules
            .iter()
            .find(|c| host_matches(host, &c.rule.domain_suffix) && c.pattern.is_match(&target))
        else {
            return GeoOutcome::NoRule;
        };
        let rule = c.rule.name.clone();
        match run_extractor(&c.rule.extractor_id, &target) {
            None => GeoOutcome::Nothing { rule },
            Some(geo) => match geo.range_violation() {
                Some(reason) => GeoOutcome::Discarded { rule, reason },
                None => GeoOutcome::Extracted { rule, geo },
            },
        }
    }

    /// Geo metadata for `url`, if a rule extracts an in-range value.
    pub fn parse_url(&self, url: &str) -> Option<GeoMetadata> {
        match self.extract(url) {
            GeoOutcome::Extracted { geo, .. } => Some(geo),
            GeoOutcome::Discarded { rule, reason } => {
                tracing::warn!(url, rule, reason, "discarding out-of-range geo metadata");
                None
            }
            GeoOutcome::Unparseable => {
                tracing::warn!(url, "cannot parse page URL; no geo metadata");
                None
            }
            _ => None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn render_stays_in_range_at_open_ends() {
        let g = GeoMetadata {
            latitude: 0.0,
            longitude: 0.0,
            heading: 359.999_999_7,
            pitch: 90.0,
            fov: 0.000_000_3,
            provider: GOOGLE_STREETVIEW.into(),
        };
        let url = render_gsv_url(&g);
        assert!(url.contains(",0.000001y,359.999999h,"), "{url}");
        let back = UrlRegistry::with_defaults().parse_url(&url).unwrap();
        assert!((back.heading - g.heading).abs() < 1e-6 && (back.fov - g.fov).abs() < 1e-6);
    }

    #[test]
    fn classify_examples() {
        assert_eq!(classify_source("https://www.google.com/maps/@1,2,3a,75y,1h,90t"), SourceTag::Google);
        assert_eq!(classify_source("https://map.baidu.com/#panoid=abc"), SourceTag::Baidu);
        assert_eq!(classify_source("https://example.org/photo.jpg"), SourceTag::Other);
        assert_eq!(classify_source("https://WWW.Flickr.COM/photos/u/1"), SourceTag::Flickr);
        assert_eq!(classify_source("https://live.staticflickr.com/x.jpg"), SourceTag::Flickr);
        assert_eq!(classify_source("https://lh5.googleusercontent.com/p/x"), SourceTag::Google);
        assert_eq!(classify_source("https://www.google.co.uk/search?q=cctv"), SourceTag::Google);
        assert_eq!(classify_source("https://notgoogle.com/"), SourceTag::Other);
        assert_eq!(classify_source("https://google.com.evil.example.org/"), SourceTag::Other);
        assert_eq!(classify_source("not a url"), SourceTag::Other);
    }

    #[test]
    fn parses_street_view_example() {
        let reg = UrlRegistry::with_defaults();
        let g = reg
            .parse_url("https://www.google.com/maps/@60.170000,24.938000,3a,75y,210.00h,92.00t/data=!3m1")
            .unwrap();
        assert_eq!(
            g,
            GeoMetadata {
                latitude: 60.17,
                longitude: 24.938,
                heading: 210.0,
                pitch: 92.0,
                fov: 75.0,
                provider: GOOGLE_STREETVIEW.into()
            }
        );
        assert_eq!(reg.parse_url("https://www.flickr.com/photos/u/123"), None);
        assert!(matches!(reg.extract("https://map.baidu.com/?panoid=1"), GeoOutcome::Nothing { .. }));
    }

    #[test]
    fn render_template() {
        let g = GeoMetadata {
            latitude: 0.0,
            longitude: 0.0,
            heading: 0.0,
            pitch: 90.0,
            fov: 90.0,
            provider: GOOGLE_STREETVIEW.into(),
        };
        assert_eq!(
            render_gsv_url(&g),
            "https://www.google.com/maps/@0.000000,0.000000,3a,90.000000y,0.000000h,90.000000t"
        );
        assert_eq!(UrlRegistry::with_defaults().parse_url(&render_gsv_url(&g)), Some(g));
    }

    #[test]
    fn out_of_range_is_discarded() {
        let reg = UrlRegistry::with_defaults();
        let out = reg.extract("https://www.google.com/maps/@10,20,3a,75y,400h,90t");
        assert!(matches!(out, GeoOutcome::Discarded { .. }), "{out:?}");
        assert_eq!(reg.parse_url("https://www.google.com/maps/@95,20,3a,75y,40h,90t"), None);
    }

    #[test]
    fn register_validates() {
        let reg = UrlRegistry::new();
        let reg = reg.register(UrlParserRule::new("a", "example.org", "^/x", CLASSIFY_ONLY)).unwrap();
        assert_eq!(reg.len(), 1);
        let err = reg.clone().register(UrlParserRule::new("bad", "example.org", "([", CLASSIFY_ONLY)).unwrap_err();
        assert!(matches!(err, RuleError::Pattern { .. }));
        let err = reg.register(UrlParserRule::new("bad", "example.org", ".*", "nope")).unwrap_err();
        assert!(matches!(err, RuleError::UnknownExtractor { .. }));
    }

    #[test]
    fn first_registered_rule_wins() {
        let url = "https://www.google.com/maps/@1,2,3a,75y,10h,90t";
        let reg = UrlRegistry::from_rules([
            UrlParserRule::new("first", "google.com", "@", CLASSIFY_ONLY),
            UrlParserRule::new("second", "google.com", "@", GOOGLE_STREETVIEW),
        ])
        .unwrap();
        assert_eq!(reg.extract(url), GeoOutcome::Nothing { rule: "first".into() });
        let reg = UrlRegistry::from_rules([
            UrlParserRule::new("second", "google.com", "@", GOOGLE_STREETVIEW),
            UrlParserRule::new("first", "google.com", "@", CLASSIFY_ONLY),
        ])
        .unwrap();
        assert!(matches!(reg.extract(url), GeoOutcome::Extracted { .. }));
    }

    #[test]
    fn wildcard_suffix() {
        assert!(host_matches("www.google.com", "google.*"));
        assert!(host_matches("google.fi", "google.*"));
        assert!(host_matches("maps.google.co.jp", "google.*"));
        assert!(!host_matches("google.a.b.c", "google.*"));
        assert!(!host_matches("google", "google.*"));
        assert!(host_matches("map.baidu.com", "baidu.com"));
        assert!(!host_matches("notbaidu.com", "baidu.com"));
    }
}
