//! Query-string parsing shared by the endpoints.

use std::collections::BTreeMap;

use chrono::{DateTime, NaiveDate, Utc};

use sourcelens_core::corpus::TimeRange;
use sourcelens_core::filter::FilterState;

use crate::error::ApiError;

pub const FILTER_KEYS: [&str; 5] = ["account", "entities", "start", "end", "word"];

/// Raw query parameters of one request.
#[derive(Debug, Default)]
pub struct Params(pub BTreeMap<String, String>);

impl Params {
    /// Rejects any key not in `allowed`.
    pub fn only(&self, allowed: &[&str]) -> Result<(), ApiError> {
        match self.0.keys().find(|k| !allowed.contains(&k.as_str())) {
            Some(k) => Err(ApiError::bad_request(format!("unknown query parameter `{k}`"))),
            None => Ok(()),
        }
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.0.get(key).map(String::as_str).filter(|v| !v.trim().is_empty())
    }

    /// A positive integer no larger than `max`.
    pub fn count(&self, key: &str, default: usize, max: usize) -> Result<usize, ApiError> {
        let Some(raw) = self.get(key) else { return Ok(default) };
        match raw.trim().parse::<usize>() {
            Ok(n) if (1..=max).contains(&n) => Ok(n),
            _ => Err(ApiError::bad_request(format!("`{key}` must be an integer in 1..={max}, got `{raw}`"))),
        }
    }

    pub fn time(&self, key: &str) -> Result<Option<DateTime<Utc>>, ApiError> {
        self.get(key).map(|raw| parse_time(key, raw)).transpose()
    }

    /// `[start, end)` from the `start`/`end` parameters; a missing side is
    /// taken from `default`.
    pub fn range(&self, default: Option<TimeRange>) -> Result<Option<TimeRange>, ApiError> {
        let (start, end) = (self.time("start")?, self.time("end")?);
        if start.is_none() && end.is_none() {
            return Ok(None);
        }
        let start = start.or(default.map(|r| r.start())).unwrap_or(DateTime::<Utc>::MIN_UTC);
        let end = end.or(default.map(|r| r.end())).unwrap_or(DateTime::<Utc>::MAX_UTC);
        TimeRange::new(start, end)
            .map(Some)
            .map_err(|_| ApiError::bad_request(format!("empty time range: start {start} is not before end {end}")))
    }

    /// Builds the filter state. `word` pairs with the last entity listed.
    pub fn filter(&self) -> Result<FilterState, ApiError> {
        let entities: Vec<String> = self
            .get("entities")
            .map(|s| s.split(',').map(str::trim).filter(|e| !e.is_empty()).map(str::to_string).collect())
            .unwrap_or_default();
        let word_pair = match self.get("word") {
            Some(w) => {
                let e = entities
                    .last()
                    .ok_or_else(|| ApiError::bad_request("`word` needs at least one entry in `entities`"))?;
                Some((e.clone(), w.trim().to_string()))
            }
            None => None,
        };
        Ok(FilterState {
            account: self.get("account").map(|a| a.trim().to_string()),
            entities: entities.into_iter().collect(),
            time: self.range(None)?,
            word_pair,
        })
    }
}

/// RFC 3339 instant or a bare `YYYY-MM-DD` date (midnight UTC).
pub fn parse_time(key: &str, raw: &str) -> Result<DateTime<Utc>, ApiError> {
    let raw = raw.trim();
    if let Ok(t) = DateTime::parse_from_rfc3339(raw) {
        return Ok(t.with_timezone(&Utc));
    }
    if let Ok(d) = NaiveDate::parse_from_str(raw, "%Y-%m-%d") {
        return Ok(d.and_hms_opt(0, 0, 0).expect("midnight exists").and_utc());
    }
    Err(ApiError::bad_request(format!("`{key}` is not a date or RFC 3339 time: `{raw}`")))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(pairs: &[(&str, &str)]) -> Params {
        Params(pairs.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect())
    }

    #[test]
    fn word_pairs_with_last_entity() {
        let f = params(&[("entities", "gop, north korea"), ("word", "tax")]).filter().unwrap();
        assert_eq!(f.word_pair, Some(("north korea".into(), "tax".into())));
        assert_eq!(f.entities.len(), 2);
        assert!(params(&[("word", "tax")]).filter().is_err());
    }

    #[test]
    fn open_ended_ranges() {
        let f = params(&[("start", "2017-11-01")]).filter().unwrap();
        let t = f.time.unwrap();
        assert_eq!(t.start().to_rfc3339(), "2017-11-01T00:00:00+00:00");
        assert_eq!(t.end(), DateTime::<Utc>::MAX_UTC);
        assert!(params(&[("start", "2017-11-02"), ("end", "2017-11-01")]).filter().is_err());
        assert!(params(&[("start", "yesterday")]).filter().is_err());
    }

    #[test]
    fn counts_are_bounded() {
        assert_eq!(params(&[]).count("k", 10, 100).unwrap(), 10);
        assert_eq!(params(&[("k", "7")]).count("k", 10, 100).unwrap(), 7);
        assert!(params(&[("k", "0")]).count("k", 10, 100).is_err());
        assert!(params(&[("k", "101")]).count("k", 10, 100).is_err());
        assert!(params(&[("k", "-1")]).count("k", 10, 100).is_err());
    }
}
