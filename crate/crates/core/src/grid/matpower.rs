//! Reader and writer for the subset of the MATPOWER case format used here:
//! `baseMVA`, `bus`, `gen`, `branch` and polynomial `gencost`.

use std::fmt::Write as _;

use super::case::{Branch, Bus, BusType, GenCost, Generator, PowerSystemCase};
use crate::error::{Error, Result};

struct Matrix {
    rows: Vec<(usize, Vec<f64>)>,
}

enum State {
    Top,
    Matrix { name: String, rows: Vec<(usize, Vec<f64>)>, skip: bool },
    Cell,
}

fn parse_number(tok: &str, line: usize) -> Result<f64> {
    let v = match tok {
        "Inf" | "inf" => f64::INFINITY,
        "-Inf" | "-inf" => f64::NEG_INFINITY,
        _ => tok.parse::<f64>().map_err(|_| Error::Parse {
            line,
            message: format!("non-numeric token '{tok}'"),
        })?,
    };
    Ok(v)
}

/// Feeds matrix content; returns true once the closing bracket is seen.
fn matrix_content(content: &str, line: usize, rows: &mut Vec<(usize, Vec<f64>)>, skip: bool) -> Result<bool> {
    let (body, closed) = match content.find(']') {
        Some(p) => (&content[..p], true),
        None => (content, false),
    };
    if !skip {
        for chunk in body.split(';') {
            let tokens: Vec<&str> = chunk
                .split(|c: char| c.is_whitespace() || c == ',')
                .filter(|t| !t.is_empty())
                .collect();
            if tokens.is_empty() {
                continue;
            }
            let row = tokens
                .iter()
                .map(|t| parse_number(t, line))
                .collect::<Result<Vec<f64>>>()?;
            rows.push((line, row));
        }
    }
    Ok(closed)
}

const KNOWN: [&str; 4] = ["bus", "gen", "branch", "gencost"];

pub fn parse_matpower_case(text: &str) -> Result<PowerSystemCase> {
    let mut base_mva = None;
    let mut mats: Vec<(String, Matrix)> = Vec::new();
    let mut state = State::Top;

    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let content = raw.split('%').next().unwrap_or("");
        state = match state {
            State::Cell => {
                if content.contains('}') {
                    State::Top
                } else {
                    State::Cell
                }
            }
            State::Matrix { name, mut rows, skip } => {
                if matrix_content(content, line, &mut rows, skip)? {
                    if !skip {
                        mats.push((name, Matrix { rows }));
                    }
                    State::Top
                } else {
                    State::Matrix { name, rows, skip }
                }
            }
            State::Top => {
                let trimmed = content.trim();
                let Some(rest) = trimmed.strip_prefix("mpc.") else {
                    if !trimmed.is_empty() && !trimmed.starts_with("function") {
                        log::warn!("line {line}: ignoring '{trimmed}'");
                    }
                    continue;
                };
                let Some((name, rhs)) = rest.split_once('=') else {
                    return Err(Error::Parse {
                        line,
                        message: format!("expected assignment in '{trimmed}'"),
                    });
                };
                let name = name.trim().to_string();
                let rhs = rhs.trim();
                if let Some(body) = rhs.strip_prefix('[') {
                    let skip = !KNOWN.contains(&name.as_str());
                    if skip {
                        log::warn!("line {line}: ignoring matrix mpc.{name}");
                    }
                    let mut rows = Vec::new();
                    if matrix_content(body, line, &mut rows, skip)? {
                        if !skip {
                            mats.push((name, Matrix { rows }));
                        }
                        State::Top
                    } else {
                        State::Matrix { name, rows, skip }
                    }
                } else if rhs.starts_with('{') {
                    log::warn!("line {line}: ignoring cell array mpc.{name}");
                    if rhs.contains('}') {
                        State::Top
                    } else {
                        State::Cell
                    }
                } else if name == "baseMVA" {
                    let tok = rhs.trim_end_matches(';').trim();
                    base_mva = Some(parse_number(tok, line)?);
                    State::Top
                } else {
                    if name != "version" {
                        log::warn!("line {line}: ignoring mpc.{name}");
                    }
                    State::Top
                }
            }
        };
    }
    if let State::Matrix { name, .. } = state {
        return Err(Error::Parse {
            line: text.lines().count(),
            message: format!("unterminated matrix mpc.{name}"),
        });
    }

    let base_mva = base_mva.ok_or_else(|| Error::MissingSection("baseMVA".into()))?;
    let take = |name: &str| -> Result<&Matrix> {
        mats.iter()
            .find(|(n, _)| n == name)
            .map(|(_, m)| m)
            .ok_or_else(|| Error::MissingSection(name.into()))
    };
    let bus_m = take("bus")?;
    let gen_m = take("gen")?;
    let branch_m = take("branch")?;
    let cost_m = take("gencost")?;

    let width = |rows: &[(usize, Vec<f64>)], min: usize, what: &str| -> Result<()> {
        for (line, r) in rows {
            if r.len() < min {
                return Err(Error::Parse {
                    line: *line,
                    message: format!("{what} row has {} columns, need {min}", r.len()),
                });
            }
        }
        Ok(())
    };
    width(&bus_m.rows, 13, "bus")?;
    width(&gen_m.rows, 10, "gen")?;
    width(&branch_m.rows, 11, "branch")?;
    width(&cost_m.rows, 4, "gencost")?;

    let id = |v: f64, line: usize| -> Result<usize> {
        if v >= 1.0 && v.fract() == 0.0 {
            Ok(v as usize)
        } else {
            Err(Error::Parse {
                line,
                message: format!("invalid bus number {v}"),
            })
        }
    };

    let buses = bus_m
        .rows
        .iter()
        .map(|(line, r)| {
            Ok(Bus {
                id: id(r[0], *line)?,
                kind: BusType::from_code(r[1])?,
                pd: r[2],
                qd: r[3],
                gs: r[4],
                bs: r[5],
                area: r[6],
                vm: r[7],
                va: r[8],
                base_kv: r[9],
                zone: r[10],
                vmax: r[11],
                vmin: r[12],
            })
        })
        .collect::<Result<Vec<_>>>()?;

    if cost_m.rows.len() < gen_m.rows.len() {
        return Err(Error::InvalidCase(format!(
            "{} generators but {} gencost rows",
            gen_m.rows.len(),
            cost_m.rows.len()
        )));
    }
    if cost_m.rows.len() > gen_m.rows.len() {
        log::warn!("reactive power cost rows ignored");
    }
    let mut generators = Vec::with_capacity(gen_m.rows.len());
    for ((line, r), (cline, c)) in gen_m.rows.iter().zip(&cost_m.rows) {
        if r.len() > 10 && r[10..].iter().any(|&v| v != 0.0) {
            log::warn!("line {line}: generator capability and ramp columns ignored");
        }
        generators.push(Generator {
            bus: id(r[0], *line)?,
            pg: r[1],
            qg: r[2],
            qmax: r[3],
            qmin: r[4],
            vg: r[5],
            mbase: r[6],
            in_service: r[7] > 0.0,
            pmax: r[8],
            pmin: r[9],
            cost: parse_cost(c, *cline)?,
        });
    }

    let branches = branch_m
        .rows
        .iter()
        .map(|(line, r)| {
            Ok(Branch {
                from: id(r[0], *line)?,
                to: id(r[1], *line)?,
                r: r[2],
                x: r[3],
                b: r[4],
                rate_a: r[5],
                rate_b: r[6],
                rate_c: r[7],
                ratio: r[8],
                angle: r[9],
                in_service: r[10] > 0.0,
                angmin: r.get(11).copied().unwrap_or(-360.0),
                angmax: r.get(12).copied().unwrap_or(360.0),
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let case = PowerSystemCase {
        base_mva,
        buses,
        generators,
        branches,
    };
    case.validate()?;
    Ok(case)
}

fn parse_cost(c: &[f64], line: usize) -> Result<GenCost> {
    match c[0] as i64 {
        2 => {}
        1 => return Err(Error::Unsupported("piecewise-linear generator cost (model 1)".into())),
        m => {
            return Err(Error::Parse {
                line,
                message: format!("unknown cost model {m}"),
            })
        }
    }
    let n = c[3];
    if n.fract() != 0.0 || n < 0.0 || c.len() < 4 + n as usize {
        return Err(Error::Parse {
            line,
            message: format!("gencost row declares {n} coefficients"),
        });
    }
    let coef = &c[4..4 + n as usize];
    let k = coef.len();
    if k > 3 && coef[..k - 3].iter().any(|&v| v != 0.0) {
        return Err(Error::Unsupported(format!("polynomial cost of degree {}", k - 1)));
    }
    let at = |p: usize| if p < k { coef[k - 1 - p] } else { 0.0 };
    Ok(GenCost {
        startup: c[1],
        shutdown: c[2],
        c2: at(2),
        c1: at(1),
        c0: at(0),
    })
}

/// Writes `case` in MATPOWER syntax. Values use the shortest decimal form
/// that parses back to the same double.
pub fn to_matpower(case: &PowerSystemCase, name: &str) -> String {
    let mut s = String::new();
    let row = |s: &mut String, vals: &[f64]| {
        s.push('\t');
        for (i, v) in vals.iter().enumerate() {
            if i > 0 {
                s.push('\t');
            }
            if v.is_infinite() {
                s.push_str(if *v > 0.0 { "Inf" } else { "-Inf" });
            } else {
                let _ = write!(s, "{v}");
            }
        }
        s.push_str(";\n");
    };
    let flag = |b: bool| if b { 1.0 } else { 0.0 };

    let _ = writeln!(s, "function mpc = {name}");
    s.push_str("mpc.version = '2';\n");
    let _ = writeln!(s, "mpc.baseMVA = {};\n", case.base_mva);

    s.push_str("%% bus data\n%\tbus_i\ttype\tPd\tQd\tGs\tBs\tarea\tVm\tVa\tbaseKV\tzone\tVmax\tVmin\nmpc.bus = [\n");
    for b in &case.buses {
        row(
            &mut s,
            &[
                b.id as f64,
                b.kind.code() as f64,
                b.pd,
                b.qd,
                b.gs,
                b.bs,
                b.area,
                b.vm,
                b.va,
                b.base_kv,
                b.zone,
                b.vmax,
                b.vmin,
            ],
        );
    }
    s.push_str("];\n\n");

    s.push_str("%% generator data\n%\tbus\tPg\tQg\tQmax\tQmin\tVg\tmBase\tstatus\tPmax\tPmin\nmpc.gen = [\n");
    for g in &case.generators {
        row(
            &mut s,
            &[
                g.bus as f64,
                g.pg,
                g.qg,
                g.qmax,
                g.qmin,
                g.vg,
                g.mbase,
                flag(g.in_service),
                g.pmax,
                g.pmin,
            ],
        );
    }
    s.push_str("];\n\n");

    s.push_str("%% branch data\n%\tfbus\ttbus\tr\tx\tb\trateA\trateB\trateC\tratio\tangle\tstatus\tangmin\tangmax\nmpc.branch = [\n");
    for br in &case.branches {
        row(
            &mut s,
            &[
                br.from as f64,
                br.to as f64,
                br.r,
                br.x,
                br.b,
                br.rate_a,
                br.rate_b,
                br.rate_c,
                br.ratio,
                br.angle,
                flag(br.in_service),
                br.angmin,
                br.angmax,
            ],
        );
    }
    s.push_str("];\n\n");

    s.push_str("%% generator cost data\n%\t2\tstartup\tshutdown\tn\tc(n-1)\t...\tc0\nmpc.gencost = [\n");
    for g in &case.generators {
        let c = g.cost;
        row(&mut s, &[2.0, c.startup, c.shutdown, 3.0, c.c2, c.c1, c.c0]);
    }
    s.push_str("];\n");
    s
}
