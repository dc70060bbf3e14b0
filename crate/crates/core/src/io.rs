//! CSV snapshots and small serialization helpers.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::exponents::Polyline;
use crate::grid::{make_grid, RadialField};

/// Formats with 17 significant digits.
pub fn fmt17(x: f64) -> String {
    if x.is_finite() {
        format!("{:.16e}", x)
    } else if x.is_nan() {
        "nan".into()
    } else if x > 0.0 {
        "inf".into()
    } else {
        "-inf".into()
    }
}

pub fn field_to_csv(f: &RadialField) -> String {
    let g = f.grid();
    let mut s = format!(
        "# d={} r_min={} r_max={} N={}\n",
        g.d,
        fmt17(g.r_min),
        fmt17(g.r_max),
        g.len()
    );
    s.push_str("r,value\n");
    for (r, v) in g.nodes.iter().zip(&f.values) {
        let _ = writeln!(s, "{},{}", fmt17(*r), fmt17(*v));
    }
    s
}

pub fn write_field_csv(f: &RadialField, path: &Path) -> Result<()> {
    fs::write(path, field_to_csv(f))?;
    Ok(())
}

pub fn read_field_csv(path: &Path) -> Result<RadialField> {
    let text = fs::read_to_string(path)?;
    parse_field_csv(&text)
}

pub fn parse_field_csv(text: &str) -> Result<RadialField> {
    let bad = |m: &str| Error::InvalidInput(format!("snapshot: {m}"));
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| bad("empty file"))?;
    let mut d = None;
    let mut r_min = None;
    let mut r_max = None;
    let mut n = None;
    for tok in header.trim_start_matches('#').split_whitespace() {
        let (k, v) = tok.split_once('=').ok_or_else(|| bad("malformed header"))?;
        match k {
            "d" => d = v.parse::<u32>().ok(),
            "r_min" => r_min = v.parse::<f64>().ok(),
            "r_max" => r_max = v.parse::<f64>().ok(),
            "N" => n = v.parse::<usize>().ok(),
            _ => {}
        }
    }
    let (d, r_min, r_max, n) = match (d, r_min, r_max, n) {
        (Some(a), Some(b), Some(c), Some(e)) => (a, b, c, e),
        _ => return Err(bad("header missing d, r_min, r_max or N")),
    };
    let grid = make_grid(d, r_min, r_max, n)?;
    let mut values = Vec::with_capacity(n);
    for line in lines {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') || line.starts_with("r,") {
            continue;
        }
        let (_, v) = line.split_once(',').ok_or_else(|| bad("malformed row"))?;
        values.push(v.trim().parse::<f64>().map_err(|_| bad("bad value"))?);
    }
    if values.len() != n {
        return Err(bad("row count does not match N"));
    }
    RadialField::new(grid, values, None)
}

/// One row per vertex: `label,alpha,inv_q`.
pub fn polylines_to_csv(curves: &[Polyline]) -> String {
    let mut s = String::from("label,alpha,inv_q\n");
    for c in curves {
        for &(x, y) in &c.points {
            let _ = writeln!(s, "{},{},{}", c.label, fmt17(x), fmt17(y));
        }
    }
    s
}

pub fn parse_polylines_csv(text: &str) -> Result<Vec<Polyline>> {
    let bad = |m: &str| Error::InvalidInput(format!("curve csv: {m}"));
    let mut out: Vec<Polyline> = Vec::new();
    for line in text.lines().skip(1).map(str::trim).filter(|l| !l.is_empty()) {
        let mut it = line.split(',');
        let (label, x, y) = match (it.next(), it.next(), it.next()) {
            (Some(l), Some(x), Some(y)) => (l, x, y),
            _ => return Err(bad("malformed row")),
        };
        let pt = (
            x.parse::<f64>().map_err(|_| bad("bad alpha"))?,
            y.parse::<f64>().map_err(|_| bad("bad 1/q"))?,
        );
        match out.last_mut() {
            Some(c) if c.label == label => c.points.push(pt),
            _ => out.push(Polyline {
                label: label.to_string(),
                points: vec![pt],
            }),
        }
    }
    Ok(out)
}

/// Serde adapter writing non-finite floats as the strings `"inf"`, `"-inf"`.
pub mod inf_f64 {
    use serde::{de, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(x: &f64, s: S) -> Result<S::Ok, S::Error> {
        if x.is_finite() {
            s.serialize_f64(*x)
        } else if *x > 0.0 {
            s.serialize_str("inf")
        } else if *x < 0.0 {
            s.serialize_str("-inf")
        } else {
            s.serialize_str("nan")
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Text(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(x) => Ok(x),
            Raw::Text(t) => match t.as_str() {
                "inf" | "+inf" | "infinity" => Ok(f64::INFINITY),
                "-inf" | "-infinity" => Ok(f64::NEG_INFINITY),
                "nan" => Ok(f64::NAN),
                _ => Err(de::Error::custom(format!("not a number: {t}"))),
            },
        }
    }
}
