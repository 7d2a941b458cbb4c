//! Matpower-style case files: `mpc.baseMVA`, `mpc.bus`, `mpc.gen`,
//! `mpc.branch` and `mpc.gencost` as bracketed numeric tables.

use std::collections::{HashMap, VecDeque};
use thiserror::Error;

/// Generator reactive limits at or beyond this magnitude count as absent.
pub const UNLIMITED: f64 = 9999.0;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CaseError {
    #[error("missing table `mpc.{0}`")]
    MissingTable(&'static str),
    #[error("{table} row {row}: {reason}")]
    MalformedRow {
        table: &'static str,
        row: usize,
        reason: String,
    },
    #[error("{table} row {row}: unknown bus {bus}")]
    UnknownBus {
        table: &'static str,
        row: usize,
        bus: i64,
    },
    #[error("expected exactly one slack bus, found {0:?}")]
    SlackCount(Vec<i64>),
    #[error("bus {0} is not connected to the slack bus")]
    Disconnected(i64),
    #[error("branch row {row}: reactance {x} must be positive")]
    NonPositiveReactance { row: usize, x: f64 },
    #[error("generator row {row}: bus {bus} already has a generator")]
    DuplicateGenerator { row: usize, bus: i64 },
    #[error("slack bus {0} has no generator")]
    SlackWithoutGenerator(i64),
    #[error("gencost has {got} rows for {expected} generators")]
    CostRows { expected: usize, got: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BusType {
    Pq,
    Pv,
    Slack,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Bus {
    /// Bus number in the file.
    pub id: i64,
    pub kind: BusType,
    /// Load in MW / MVAr.
    pub pd: f64,
    pub qd: f64,
    /// Shunt conductance / susceptance in MW / MVAr at 1 p.u.
    pub gs: f64,
    pub bs: f64,
    pub base_kv: f64,
    pub vmax: f64,
    pub vmin: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Branch {
    /// Internal (0-based) bus indices.
    pub from: usize,
    pub to: usize,
    pub r: f64,
    pub x: f64,
    /// Total line charging susceptance.
    pub b: f64,
    /// Long-term rating in MVA; 0 means unlimited.
    pub rate_a: f64,
    /// Off-nominal tap ratio at the from end (1 for lines).
    pub tap: f64,
    /// Phase shift in degrees.
    pub shift: f64,
}

impl Branch {
    /// Current limit in p.u., when rated.
    pub fn current_limit(&self, base_mva: f64) -> Option<f64> {
        (self.rate_a > 0.0).then(|| self.rate_a / base_mva)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Generator {
    /// Internal bus index.
    pub bus: usize,
    /// Active and reactive setpoint in MW / MVAr.
    pub pg: f64,
    pub qg: f64,
    pub qmax: f64,
    pub qmin: f64,
    /// Voltage setpoint in p.u.
    pub vg: f64,
    pub pmax: f64,
    pub pmin: f64,
    /// Cost `c2 P^2 + c1 P + c0` with `P` in MW.
    pub cost: [f64; 3],
}

impl Generator {
    pub fn has_reactive_limits(&self) -> bool {
        self.qmax.abs() < UNLIMITED || self.qmin.abs() < UNLIMITED
    }

    pub fn cost_of(&self, p_mw: f64) -> f64 {
        let [c2, c1, c0] = self.cost;
        c2 * p_mw * p_mw + c1 * p_mw + c0
    }
}

/// A validated network. Generators are ordered with the slack generator first.
#[derive(Debug, Clone, PartialEq)]
pub struct GridCase {
    pub base_mva: f64,
    pub buses: Vec<Bus>,
    pub branches: Vec<Branch>,
    pub generators: Vec<Generator>,
    pub slack: usize,
}

impl GridCase {
    pub fn num_buses(&self) -> usize {
        self.buses.len()
    }

    pub fn bus_index(&self, id: i64) -> Option<usize> {
        self.buses.iter().position(|b| b.id == id)
    }

    pub fn parse(text: &str) -> Result<Self, CaseError> {
        parse_case(text)
    }
}

pub fn parse_case(text: &str) -> Result<GridCase, CaseError> {
    let text = strip_comments(text);
    let base_mva = scalar(&text, "baseMVA").unwrap_or(100.0);
    let bus_rows = table(&text, "bus")?;
    let gen_rows = table(&text, "gen")?;
    let branch_rows = table(&text, "branch")?;
    let cost_rows = table(&text, "gencost")?;

    let mut buses = Vec::with_capacity(bus_rows.len());
    for (row, v) in bus_rows.iter().enumerate() {
        require(v, 13, "bus", row)?;
        let kind = match v[1] as i64 {
            1 => BusType::Pq,
            2 => BusType::Pv,
            3 => BusType::Slack,
            t => return Err(malformed("bus", row, format!("unsupported bus type {t}"))),
        };
        buses.push(Bus {
            id: integer(v[0], "bus", row)?,
            kind,
            pd: v[2],
            qd: v[3],
            gs: v[4],
            bs: v[5],
            base_kv: v[9],
            vmax: v[11],
            vmin: v[12],
        });
    }
    let index: HashMap<i64, usize> = buses.iter().enumerate().map(|(i, b)| (b.id, i)).collect();
    let lookup = |table: &'static str, row: usize, value: f64| -> Result<usize, CaseError> {
        let id = integer(value, table, row)?;
        index
            .get(&id)
            .copied()
            .ok_or(CaseError::UnknownBus { table, row, bus: id })
    };

    let slacks: Vec<i64> = buses
        .iter()
        .filter(|b| b.kind == BusType::Slack)
        .map(|b| b.id)
        .collect();
    if slacks.len() != 1 {
        return Err(CaseError::SlackCount(slacks));
    }
    let slack = index[&slacks[0]];

    let mut branches = Vec::with_capacity(branch_rows.len());
    for (row, v) in branch_rows.iter().enumerate() {
        require(v, 11, "branch", row)?;
        if v[10] == 0.0 {
            continue;
        }
        if !(v[3] > 0.0) {
            return Err(CaseError::NonPositiveReactance { row, x: v[3] });
        }
        branches.push(Branch {
            from: lookup("branch", row, v[0])?,
            to: lookup("branch", row, v[1])?,
            r: v[2],
            x: v[3],
            b: v[4],
            rate_a: v[5],
            tap: if v[8] == 0.0 { 1.0 } else { v[8] },
            shift: v[9],
        });
    }

    if cost_rows.len() < gen_rows.len() {
        return Err(CaseError::CostRows {
            expected: gen_rows.len(),
            got: cost_rows.len(),
        });
    }
    let mut generators: Vec<Generator> = Vec::with_capacity(gen_rows.len());
    for (row, (v, c)) in gen_rows.iter().zip(&cost_rows).enumerate() {
        require(v, 10, "gen", row)?;
        if v.len() > 7 && v[7] <= 0.0 {
            continue;
        }
        let bus = lookup("gen", row, v[0])?;
        if generators.iter().any(|g| g.bus == bus) {
            return Err(CaseError::DuplicateGenerator {
                row,
                bus: buses[bus].id,
            });
        }
        generators.push(Generator {
            bus,
            pg: v[1],
            qg: v[2],
            qmax: v[3],
            qmin: v[4],
            vg: v[5],
            pmax: v[8],
            pmin: v[9],
            cost: polynomial_cost(c, row)?,
        });
    }
    let Some(pos) = generators.iter().position(|g| g.bus == slack) else {
        return Err(CaseError::SlackWithoutGenerator(buses[slack].id));
    };
    let slack_gen = generators.remove(pos);
    generators.insert(0, slack_gen);

    let case = GridCase {
        base_mva,
        buses,
        branches,
        generators,
        slack,
    };
    check_connected(&case)?;
    Ok(case)
}

fn check_connected(case: &GridCase) -> Result<(), CaseError> {
    let n = case.buses.len();
    let mut adjacency = vec![Vec::new(); n];
    for br in &case.branches {
        adjacency[br.from].push(br.to);
        adjacency[br.to].push(br.from);
    }
    let mut seen = vec![false; n];
    let mut queue = VecDeque::from([case.slack]);
    seen[case.slack] = true;
    while let Some(i) = queue.pop_front() {
        for &j in &adjacency[i] {
            if !seen[j] {
                seen[j] = true;
                queue.push_back(j);
            }
        }
    }
    match seen.iter().position(|s| !s) {
        Some(i) => Err(CaseError::Disconnected(case.buses[i].id)),
        None => Ok(()),
    }
}

fn polynomial_cost(row: &[f64], index: usize) -> Result<[f64; 3], CaseError> {
    if row.len() < 4 || row[0] != 2.0 {
        return Err(malformed("gencost", index, "only polynomial costs are supported".into()));
    }
    let n = row[3] as usize;
    if !(1..=3).contains(&n) || row.len() < 4 + n {
        return Err(malformed("gencost", index, format!("bad coefficient count {}", row[3])));
    }
    let mut cost = [0.0; 3];
    for (k, c) in row[4..4 + n].iter().enumerate() {
        cost[3 - n + k] = *c;
    }
    Ok(cost)
}

fn strip_comments(text: &str) -> String {
    text.lines()
        .map(|l| l.split('%').next().unwrap_or(""))
        .collect::<Vec<_>>()
        .join("\n")
}

fn scalar(text: &str, name: &str) -> Option<f64> {
    let key = format!("mpc.{name}");
    let start = text.find(&key)? + key.len();
    let rest = text[start..].trim_start().strip_prefix('=')?;
    let end = rest.find(';').unwrap_or(rest.len());
    rest[..end].trim().parse().ok()
}

fn table(text: &str, name: &'static str) -> Result<Vec<Vec<f64>>, CaseError> {
    let key = format!("mpc.{name}");
    let mut search = 0;
    let body = loop {
        let Some(found) = text[search..].find(&key) else {
            return Err(CaseError::MissingTable(name));
        };
        let after = search + found + key.len();
        let rest = text[after..].trim_start();
        if let Some(rest) = rest.strip_prefix('=') {
            let rest = rest.trim_start();
            let Some(rest) = rest.strip_prefix('[') else {
                return Err(malformed(name, 0, "expected `[`".into()));
            };
            let Some(end) = rest.find(']') else {
                return Err(malformed(name, 0, "unterminated table".into()));
            };
            break &rest[..end];
        }
        search = after;
    };
    let mut rows = Vec::new();
    for line in body.split(|c| c == ';' || c == '\n') {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let row = rows.len();
        let values = line
            .split(|c: char| c.is_whitespace() || c == ',')
            .filter(|t| !t.is_empty())
            .map(|t| {
                t.parse::<f64>()
                    .map_err(|_| malformed(name, row, format!("cannot parse `{t}`")))
            })
            .collect::<Result<Vec<f64>, _>>()?;
        if values.iter().any(|v| !v.is_finite()) {
            return Err(malformed(name, row, "non-finite value".into()));
        }
        rows.push(values);
    }
    Ok(rows)
}

fn require(v: &[f64], columns: usize, table: &'static str, row: usize) -> Result<(), CaseError> {
    if v.len() < columns {
        return Err(malformed(
            table,
            row,
            format!("expected at least {columns} columns, found {}", v.len()),
        ));
    }
    Ok(())
}

fn integer(v: f64, table: &'static str, row: usize) -> Result<i64, CaseError> {
    if v.fract() != 0.0 {
        return Err(malformed(table, row, format!("bus number {v} is not an integer")));
    }
    Ok(v as i64)
}

fn malformed(table: &'static str, row: usize, reason: String) -> CaseError {
    CaseError::MalformedRow { table, row, reason }
}

#[cfg(test)]
mod tests {
    use super::*;

    const TWO_BUS: &str = include_str!("../data/two_bus.m");

    #[test]
    fn two_bus_parses() {
        let case = parse_case(TWO_BUS).unwrap();
        assert_eq!(case.buses.len(), 2);
        assert_eq!(case.branches.len(), 1);
        assert_eq!(case.generators.len(), 1);
        assert_eq!(case.slack, 0);
        assert_eq!(case.generators[0].cost, [0.01, 1.0, 0.0]);
        assert!(!case.generators[0].has_reactive_limits());
        assert_eq!(case.branches[0].tap, 1.0);
    }

    #[test]
    fn two_slack_buses_rejected() {
        let text = TWO_BUS.replace("2\t1\t50", "2\t3\t50");
        assert_eq!(parse_case(&text), Err(CaseError::SlackCount(vec![1, 2])));
    }

    #[test]
    fn missing_slack_rejected() {
        let text = TWO_BUS.replace("1\t3\t0", "1\t2\t0");
        assert_eq!(parse_case(&text), Err(CaseError::SlackCount(vec![])));
    }

    #[test]
    fn disconnected_rejected() {
        let text = TWO_BUS.replace(
            "\t2\t1\t50\t0\t0\t0\t1\t1\t0\t100\t1\t1.1\t0.9;\n",
            "\t2\t1\t50\t0\t0\t0\t1\t1\t0\t100\t1\t1.1\t0.9;\n\t3\t1\t5\t0\t0\t0\t1\t1\t0\t100\t1\t1.1\t0.9;\n",
        );
        assert_eq!(parse_case(&text), Err(CaseError::Disconnected(3)));
    }

    #[test]
    fn nonpositive_reactance_rejected() {
        let text = TWO_BUS.replace("0\t0.1\t0", "0\t-0.1\t0");
        assert!(matches!(
            parse_case(&text),
            Err(CaseError::NonPositiveReactance { row: 0, .. })
        ));
    }

    #[test]
    fn malformed_row_rejected() {
        let text = TWO_BUS.replace("0\t0.1\t0", "0\tabc\t0");
        assert!(matches!(
            parse_case(&text),
            Err(CaseError::MalformedRow { table: "branch", row: 0, .. })
        ));
        let short = TWO_BUS.replace("\t1\t2\t0\t0.1\t0\t100\t100\t100\t0\t0\t1\t-360\t360;", "\t1\t2\t0\t0.1;");
        assert!(matches!(
            parse_case(&short),
            Err(CaseError::MalformedRow { table: "branch", .. })
        ));
    }

    #[test]
    fn unknown_bus_rejected() {
        let text = TWO_BUS.replace("\t1\t2\t0\t0.1", "\t1\t7\t0\t0.1");
        assert!(matches!(
            parse_case(&text),
            Err(CaseError::UnknownBus { table: "branch", bus: 7, .. })
        ));
    }

    #[test]
    fn missing_table_rejected() {
        let text = TWO_BUS.replace("mpc.gencost", "mpc.other");
        assert_eq!(parse_case(&text), Err(CaseError::MissingTable("gencost")));
    }

    #[test]
    fn ieee30_shape() {
        let case = parse_case(include_str!("../data/case30_as.m")).unwrap();
        assert_eq!(case.buses.len(), 30);
        assert_eq!(case.branches.len(), 41);
        assert_eq!(case.generators.len(), 6);
        assert_eq!(case.buses[case.generators[0].bus].id, 1);
        assert_eq!(case.base_mva, 100.0);
    }
}
