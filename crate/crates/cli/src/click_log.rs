//! Text form of a [`ClickLog`]: a header line such as
//! `#clicklog seed=7 queries=1000 map=1/4,1/2`, then one impression per line
//! as tab-separated query id, ad id, bucket and click flag (`0` or `1`).

use std::fmt::Write as _;

use auction_calib_core::empirical::{ClickLog, ClickRecord};
use auction_calib_core::PredictionMap;

use crate::instance_file::{format_values, parse_values};
use crate::ParseError;

pub fn emit(log: &ClickLog) -> String {
    let mut out = format!(
        "#clicklog seed={} queries={} map={}\n",
        log.seed,
        log.n_queries,
        format_values(log.map.values())
    );
    for r in &log.records {
        writeln!(out, "{}\t{}\t{}\t{}", r.query, r.ad, r.bucket, u8::from(r.clicked)).unwrap();
    }
    out
}

pub fn parse(text: &str) -> Result<ClickLog, ParseError> {
    let mut lines = text.lines().enumerate();
    let header_err = |message: &str| ParseError {
        line: 1,
        message: message.into(),
    };
    let (_, header) = lines.next().ok_or_else(|| header_err("empty click log"))?;
    let fields = header
        .strip_prefix("#clicklog ")
        .ok_or_else(|| header_err("missing `#clicklog` header"))?;
    let (mut seed, mut queries, mut map) = (None, None, None);
    for field in fields.split_whitespace() {
        let (key, value) = field
            .split_once('=')
            .ok_or_else(|| header_err("header fields look like key=value"))?;
        match key {
            "seed" => seed = Some(value.parse().map_err(|_| header_err("bad seed"))?),
            "queries" => queries = Some(value.parse().map_err(|_| header_err("bad query count"))?),
            "map" => {
                let values = parse_values(value).map_err(|e| header_err(&e.message))?;
                map = Some(PredictionMap::new(values).map_err(|e| header_err(&e.to_string()))?);
            }
            _ => return Err(header_err("unknown header field")),
        }
    }
    let mut records = Vec::new();
    for (n, line) in lines {
        if line.is_empty() {
            continue;
        }
        let err = |message: &str| ParseError {
            line: n + 1,
            message: message.into(),
        };
        let parts: Vec<&str> = line.split('\t').collect();
        let [query, ad, bucket, clicked] = parts[..] else {
            return Err(err("expected 4 tab-separated fields"));
        };
        records.push(ClickRecord {
            query: query.into(),
            ad: ad.into(),
            bucket: bucket.parse().map_err(|_| err("bad bucket"))?,
            clicked: match clicked {
                "0" => false,
                "1" => true,
                _ => return Err(err("click flag must be 0 or 1")),
            },
        });
    }
    Ok(ClickLog {
        map: map.ok_or_else(|| header_err("header lacks map"))?,
        n_queries: queries.ok_or_else(|| header_err("header lacks queries"))?,
        seed: seed.ok_or_else(|| header_err("header lacks seed"))?,
        records,
    })
}
