//! Line-oriented instance files.
//!
//! ```text
//! # comments run to end of line
//! mechanism ONE
//! buckets 2
//! query q1 1/2
//! query q2 1/2
//! ad A q1 1/1 2/1 1
//! ```
//!
//! `emit` always writes rationals as `num/den`; `parse` also accepts integers
//! and finite decimals. Emitting then parsing gives back the same instance.

use std::fmt::Write as _;

use auction_calib_core::rational::{format_rational, parse_rational};
use auction_calib_core::{Ad, Mechanism, ProblemInstance, QueryDistribution, Rational};

use crate::ParseError;

pub fn emit(instance: &ProblemInstance) -> String {
    let mut out = String::new();
    writeln!(out, "mechanism {}", instance.mechanism()).unwrap();
    writeln!(out, "buckets {}", instance.buckets()).unwrap();
    for (id, p) in instance.queries().entries() {
        writeln!(out, "query {id} {}", format_rational(p)).unwrap();
    }
    for ad in instance.ads() {
        writeln!(
            out,
            "ad {} {} {} {} {}",
            ad.id,
            ad.query,
            format_rational(&ad.ctr),
            format_rational(&ad.bid),
            ad.bucket
        )
        .unwrap();
    }
    out
}

/// Parses the file structure only; run `validate` for semantic checks.
pub fn parse(text: &str) -> Result<ProblemInstance, ParseError> {
    let mut mechanism = None;
    let mut buckets = None;
    let mut queries = Vec::new();
    let mut ads = Vec::new();
    for (n, raw) in text.lines().enumerate() {
        let line = n + 1;
        let err = |message: String| ParseError { line, message };
        let content = raw.split('#').next().unwrap_or("");
        let tokens: Vec<&str> = content.split_whitespace().collect();
        let Some((&keyword, args)) = tokens.split_first() else {
            continue;
        };
        let expect = |count: usize| {
            if args.len() == count {
                Ok(())
            } else {
                Err(err(format!("`{keyword}` takes {count} fields, found {}", args.len())))
            }
        };
        let rational = |s: &str| parse_rational(s).map_err(|e| err(e.to_string()));
        let count = |s: &str, what: &str| {
            s.parse::<usize>()
                .map_err(|_| err(format!("{what} `{s}` is not a non-negative integer")))
        };
        match keyword {
            "mechanism" => {
                expect(1)?;
                if mechanism.is_some() {
                    return Err(err("duplicate `mechanism` line".into()));
                }
                mechanism = Some(args[0].parse::<Mechanism>().map_err(|e| err(e.to_string()))?);
            }
            "buckets" => {
                expect(1)?;
                if buckets.is_some() {
                    return Err(err("duplicate `buckets` line".into()));
                }
                buckets = Some(count(args[0], "bucket count")?);
            }
            "query" => {
                expect(2)?;
                queries.push((args[0].into(), rational(args[1])?));
            }
            "ad" => {
                expect(5)?;
                ads.push(Ad::new(
                    args[0],
                    args[1],
                    rational(args[2])?,
                    rational(args[3])?,
                    count(args[4], "bucket")?,
                ));
            }
            other => return Err(err(format!("unknown keyword `{other}`"))),
        }
    }
    let missing = |what: &str| ParseError {
        line: 0,
        message: format!("missing `{what}` line"),
    };
    Ok(ProblemInstance::new(
        buckets.ok_or_else(|| missing("buckets"))?,
        ads,
        QueryDistribution::new(queries),
        mechanism.ok_or_else(|| missing("mechanism"))?,
    ))
}

/// Comma-separated map values, e.g. `1/2,1/4`.
pub fn parse_values(text: &str) -> Result<Vec<Rational>, ParseError> {
    text.split(',')
        .map(|v| {
            parse_rational(v).map_err(|e| ParseError {
                line: 0,
                message: e.to_string(),
            })
        })
        .collect()
}

pub fn format_values(values: &[Rational]) -> String {
    values.iter().map(format_rational).collect::<Vec<_>>().join(",")
}

#[cfg(test)]
mod tests {
    use super::*;
    use auction_calib_core::generators::{paper_fixture, Fixture};
    use auction_calib_core::rational::ratio;

    #[test]
    fn decimals_and_integers_are_accepted() {
        let inst = parse("mechanism ALL\nbuckets 1\nquery q 1\nad a q 0.25 4 1 # trailing\n").unwrap();
        assert_eq!(inst.ads()[0].ctr, ratio(1, 4));
        assert!(emit(&inst).contains("ad a q 1/4 4/1 1"));
    }

    #[test]
    fn structural_errors_carry_line_numbers() {
        let cases = [
            ("mechanism TWO\n", 1),
            ("mechanism ONE\nbuckets x\n", 2),
            ("mechanism ONE\nbuckets 1\nad a q 1/2 1\n", 3),
            ("mechanism ONE\nmechanism ONE\n", 2),
            ("mechanism ONE\nbuckets 1\nquery q 1/0\n", 3),
            ("bogus\n", 1),
        ];
        for (text, line) in cases {
            assert_eq!(parse(text).unwrap_err().line, line, "{text:?}");
        }
        assert!(parse("buckets 1\n").is_err());
    }

    #[test]
    fn fixtures_round_trip() {
        let fixture = paper_fixture(&Fixture::SiNotNice(ratio(1, 100)));
        assert_eq!(parse(&emit(&fixture)).unwrap(), fixture);
    }

    #[test]
    fn value_lists() {
        assert_eq!(parse_values("1/2, 0.25").unwrap(), vec![ratio(1, 2), ratio(1, 4)]);
        assert_eq!(format_values(&[ratio(1, 2), ratio(1, 4)]), "1/2,1/4");
        assert!(parse_values("1/2,").is_err());
    }
}
