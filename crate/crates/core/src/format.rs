//! JSON documents for instances and results.
//!
//! Rationals are written as integers when integral and as `"p/q"` strings
//! otherwise; both forms are accepted on input. Floating-point numbers are
//! rejected so that every value round-trips exactly.

use std::fs;
use std::path::Path;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::audit::{AuditReport, Witness};
use crate::error::{Error, Result};
use crate::gps::{EatingTrace, GpsResult};
use crate::lottery::{certify_approx_feasible, Lottery};
use crate::model::{check_feasible, Allocation, Direction, Instance, Matrix, Quotas, StudentAssignment};
use crate::rational::{self, Rational};
use crate::sdm::{SdmEvent, SdmResult, StepOutcome};

/// A rational in document form.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Exact(#[serde(with = "rational::serde_text")] pub Rational);

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConstraintEntry {
    pub school: String,
    pub types: Vec<String>,
    pub lower: Exact,
    pub upper: Exact,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StudentEntry {
    pub id: String,
    #[serde(rename = "type")]
    pub ty: String,
    pub prefs: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InstanceFile {
    pub schools: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub outside: Option<String>,
    /// Type id to number of students of that type.
    pub types: IndexMap<String, usize>,
    #[serde(default)]
    pub constraints: Vec<ConstraintEntry>,
    pub students: Vec<StudentEntry>,
}

impl InstanceFile {
    pub fn from_instance(inst: &Instance) -> Self {
        let outside = (inst.outside_id() != "phi").then(|| inst.outside_id().to_string());
        InstanceFile {
            schools: inst.school_ids().to_vec(),
            outside,
            types: inst.types().iter().map(|t| (t.id.clone(), t.count)).collect(),
            constraints: inst
                .constraints()
                .iter()
                .map(|c| ConstraintEntry {
                    school: inst.school_id(c.school).to_string(),
                    types: c.types.iter().map(|&t| inst.types()[t].id.clone()).collect(),
                    lower: Exact(c.lower.clone()),
                    upper: Exact(c.upper.clone()),
                })
                .collect(),
            students: inst
                .students()
                .iter()
                .map(|st| StudentEntry {
                    id: st.id.clone(),
                    ty: inst.types()[st.ty].id.clone(),
                    prefs: st.prefs.iter().map(|&s| inst.school_id(s).to_string()).collect(),
                })
                .collect(),
        }
    }

    pub fn to_instance(&self) -> Result<Instance> {
        let mut b = Instance::builder().schools(self.schools.iter().cloned());
        if let Some(o) = &self.outside {
            b = b.outside(o.clone());
        }
        for (id, &count) in &self.types {
            b = b.ty_with_count(id.clone(), count);
        }
        for c in &self.constraints {
            let types: Vec<&str> = c.types.iter().map(String::as_str).collect();
            b = b.constraint(&c.school, &types, c.lower.0.clone(), c.upper.0.clone());
        }
        for st in &self.students {
            let prefs: Vec<&str> = st.prefs.iter().map(String::as_str).collect();
            b = b.student(&st.id, &st.ty, &prefs);
        }
        b.build()
    }
}

pub fn parse_instance_str(text: &str) -> Result<Instance> {
    let file: InstanceFile = serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
    file.to_instance()
}

pub fn parse_instance(path: impl AsRef<Path>) -> Result<Instance> {
    let path = path.as_ref();
    let text = fs::read_to_string(path)?;
    parse_instance_str(&text).map_err(|e| match e {
        Error::Parse(msg) => Error::Parse(format!("{}: {msg}", path.display())),
        other => other,
    })
}

/// Pretty-printed document with a trailing newline.
pub fn instance_to_string(inst: &Instance) -> String {
    to_pretty(&InstanceFile::from_instance(inst))
}

fn to_pretty<T: Serialize>(value: &T) -> String {
    let mut text = serde_json::to_string_pretty(value).expect("documents serialize");
    text.push('\n');
    text
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ViolationEntry {
    pub school: String,
    pub types: Vec<String>,
    pub direction: Direction,
    pub magnitude: Exact,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LotteryEntryFile {
    pub weight: Exact,
    /// Student id to school id.
    pub allocation: IndexMap<String, String>,
    pub max_violation: Exact,
    pub regular_assigned: usize,
}

/// `row id -> column id -> value`.
pub type Table = IndexMap<String, IndexMap<String, Exact>>;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ResultFile {
    pub mechanism: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub order: Option<Vec<String>>,
    pub opt: Exact,
    /// Student id to school id.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub allocation: Option<IndexMap<String, String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub assignment: Option<Table>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta: Option<Table>,
    /// Violations of the original quotas.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub violations: Option<Vec<ViolationEntry>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trace: Option<Value>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lottery: Option<Vec<LotteryEntryFile>>,
}

fn allocation_map(inst: &Instance, alloc: &Allocation) -> IndexMap<String, String> {
    alloc
        .0
        .iter()
        .enumerate()
        .map(|(i, &s)| (inst.student(i).id.clone(), inst.school_id(s).to_string()))
        .collect()
}

fn table(rows: impl Iterator<Item = String>, cols: &[String], m: &Matrix) -> Table {
    rows.enumerate()
        .map(|(r, id)| (id, cols.iter().enumerate().map(|(c, col)| (col.clone(), Exact(m[(r, c)].clone()))).collect()))
        .collect()
}

fn column_ids(inst: &Instance) -> Vec<String> {
    (0..inst.num_columns()).map(|s| inst.school_id(s).to_string()).collect()
}

fn quota_rows(inst: &Instance, q: &Quotas) -> Value {
    Value::Array(
        inst.constraints()
            .iter()
            .enumerate()
            .map(|(k, c)| {
                json!({
                    "school": inst.school_id(c.school),
                    "types": c.types.iter().map(|&t| inst.types()[t].id.as_str()).collect::<Vec<_>>(),
                    "lower": Exact(q.lower[k].clone()),
                    "upper": Exact(q.upper[k].clone()),
                })
            })
            .collect(),
    )
}

pub fn sdm_trace_value(inst: &Instance, trace: &[SdmEvent]) -> Value {
    let school = |s: usize| inst.school_id(s).to_string();
    Value::Array(
        trace
            .iter()
            .map(|e| match e {
                SdmEvent::Assignment { student, outcome, queries } => {
                    let f: IndexMap<String, Exact> = queries.iter().map(|(s, v)| (school(*s), Exact(v.clone()))).collect();
                    let (kind, fraction) = match outcome {
                        StepOutcome::Assigned(_) => ("assigned", rational::one()),
                        StepOutcome::PartiallyAssigned { fraction, .. } => ("partial", fraction.clone()),
                    };
                    json!({
                        "event": "assignment",
                        "student": inst.student(*student).id,
                        "outcome": kind,
                        "school": school(outcome.school()),
                        "fraction": Exact(fraction),
                        "f": f,
                    })
                }
                SdmEvent::Update { update, quotas } => json!({
                    "event": "update",
                    "student": inst.student(update.student).id,
                    "critical": school(update.school),
                    "target": school(update.target),
                    "rho": Exact(update.rho.clone()),
                    "resolved": update.resolved,
                    "quotas": quota_rows(inst, quotas),
                }),
            })
            .collect(),
    )
}

pub fn gps_trace_value(inst: &Instance, trace: &EatingTrace) -> Value {
    Value::Array(
        trace
            .events
            .iter()
            .map(|e| {
                json!({
                    "time": Exact(e.time.clone()),
                    "switches": e.switches.iter().map(|sw| json!({
                        "student": inst.student(sw.student).id,
                        "from": inst.school_id(sw.from),
                        "to": inst.school_id(sw.to),
                    })).collect::<Vec<_>>(),
                })
            })
            .collect(),
    )
}

fn violation_entries(inst: &Instance, alloc: &Allocation) -> Result<Vec<ViolationEntry>> {
    let report = check_feasible(&alloc.type_profile(inst), &Quotas::original(inst), inst)?;
    Ok(report
        .violations
        .into_iter()
        .map(|v| ViolationEntry {
            school: inst.school_id(v.school).to_string(),
            types: v.types.iter().map(|&t| inst.types()[t].id.clone()).collect(),
            direction: v.direction,
            magnitude: Exact(v.magnitude),
        })
        .collect())
}

pub fn lottery_entries(inst: &Instance, lottery: &Lottery, opt: &Rational) -> Result<Vec<LotteryEntryFile>> {
    lottery
        .entries
        .iter()
        .map(|e| {
            let cert = certify_approx_feasible(&e.allocation, inst, opt)?;
            Ok(LotteryEntryFile {
                weight: Exact(e.weight.clone()),
                allocation: allocation_map(inst, &e.allocation),
                max_violation: Exact(cert.max_violation()),
                regular_assigned: cert.regular_assigned,
            })
        })
        .collect()
}

impl ResultFile {
    pub fn from_sdm(inst: &Instance, res: &SdmResult, seed: Option<u64>, with_trace: bool) -> Result<Self> {
        let types: Vec<String> = inst.types().iter().map(|t| t.id.clone()).collect();
        Ok(ResultFile {
            mechanism: "sd".into(),
            seed,
            order: Some(res.order.iter().map(|&i| inst.student(i).id.clone()).collect()),
            opt: Exact(res.opt.clone()),
            allocation: Some(allocation_map(inst, &res.allocation)),
            assignment: None,
            delta: Some(table(types.into_iter(), &column_ids(inst), &res.delta)),
            violations: Some(violation_entries(inst, &res.allocation)?),
            trace: with_trace.then(|| sdm_trace_value(inst, &res.trace)),
            lottery: None,
        })
    }

    pub fn from_gps(inst: &Instance, res: &GpsResult, lottery: Option<&Lottery>, with_trace: bool) -> Result<Self> {
        let students = inst.students().iter().map(|s| s.id.clone());
        Ok(ResultFile {
            mechanism: "gps".into(),
            seed: None,
            order: None,
            opt: Exact(res.opt.clone()),
            allocation: None,
            assignment: Some(table(students, &column_ids(inst), &res.x)),
            delta: None,
            violations: None,
            trace: with_trace.then(|| gps_trace_value(inst, &res.trace)),
            lottery: lottery.map(|l| lottery_entries(inst, l, &res.opt)).transpose()?,
        })
    }

    /// The fractional assignment recorded in the document; an integral
    /// allocation is read as a 0/1 matrix.
    pub fn assignment_matrix(&self, inst: &Instance) -> Result<StudentAssignment> {
        let mut x = StudentAssignment::zeros(inst);
        let student = |id: &str| {
            inst.student_index(id).ok_or_else(|| Error::Parse(format!("result names unknown student {id:?}")))
        };
        let school = |id: &str| {
            inst.school_index(id).ok_or_else(|| Error::Parse(format!("result names unknown school {id:?}")))
        };
        match (&self.assignment, &self.allocation) {
            (Some(rows), _) => {
                for (sid, row) in rows {
                    let i = student(sid)?;
                    for (col, v) in row {
                        x[(i, school(col)?)] = v.0.clone();
                    }
                }
            }
            (None, Some(alloc)) => {
                for (sid, col) in alloc {
                    x[(student(sid)?, school(col)?)] = rational::one();
                }
            }
            (None, None) => return Err(Error::Parse("result has neither `assignment` nor `allocation`".into())),
        }
        Ok(x)
    }

    pub fn to_text(&self) -> String {
        to_pretty(self)
    }

    pub fn parse(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))
    }
}

/// One-line account of a witness using ids instead of indices.
pub fn describe_witness(inst: &Instance, w: &Witness) -> String {
    let st = |i: usize| inst.student(i).id.as_str();
    let sc = |s: usize| inst.school_id(s);
    let report = |r: &[usize]| r.iter().map(|&s| sc(s)).collect::<Vec<_>>().join(">");
    let row = |r: &[Rational]| r.iter().map(rational::to_text).collect::<Vec<_>>().join(", ");
    match w {
        Witness::Misreport { student, report: r, truthful_school, misreport_school } => format!(
            "student {} reporting {} gets {} instead of {}",
            st(*student),
            report(r),
            sc(*misreport_school),
            sc(*truthful_school)
        ),
        Witness::DominatingMisreport { student, report: r, truthful, misreport } => format!(
            "student {} reporting {} gets ({}) which dominates truthful ({})",
            st(*student),
            report(r),
            row(misreport),
            row(truthful)
        ),
        Witness::Envy { envious, envied, school } => {
            format!("student {} envies {} at the prefix ending in {}", st(*envious), st(*envied), sc(*school))
        }
        Witness::DominatingAssignment { surplus, .. } => {
            format!("a feasible assignment dominates with total surplus {}", rational::to_text(surplus))
        }
        Witness::DominatingAllocation { allocation } => {
            let pairs: Vec<String> =
                allocation.0.iter().enumerate().map(|(i, &s)| format!("{}->{}", st(i), sc(s))).collect();
            format!("dominating allocation {}", pairs.join(", "))
        }
        Witness::Asymmetry { first, second, school, gap, tolerance } => format!(
            "students {} and {} differ at {} by {gap:.4} (tolerance {tolerance:.4})",
            st(*first),
            st(*second),
            sc(*school)
        ),
        Witness::Guarantee { detail } => detail.clone(),
    }
}

/// Audit report with ids resolved, for printing.
pub fn report_value(inst: &Instance, report: &AuditReport) -> Value {
    json!({
        "property": report.property,
        "verdict": report.verdict,
        "witness": report.witness,
        "summary": report.witness.as_ref().map(|w| describe_witness(inst, w)),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::rational::frac;
    use crate::sdm::run_sdm;

    #[test]
    fn instance_round_trip() {
        for inst in [fixtures::simple_example(), fixtures::appendix_example(), fixtures::impossibility_truthful()] {
            let text = instance_to_string(&inst);
            let back = parse_instance_str(&text).unwrap();
            assert_eq!(back, inst);
            assert_eq!(instance_to_string(&back), text);
        }
    }

    #[test]
    fn simple_example_shape() {
        let inst = parse_instance_str(&instance_to_string(&fixtures::simple_example())).unwrap();
        assert_eq!((inst.num_students(), inst.num_schools(), inst.constraints().len()), (3, 2, 6));
    }

    #[test]
    fn truncated_prefs_rejected() {
        let text = r#"{"schools": ["s1", "s2"], "types": {"t": 1},
            "students": [{"id": "i", "type": "t", "prefs": ["s1"]}]}"#;
        let err = parse_instance_str(text).unwrap_err();
        assert!(err.to_string().contains("prefs missing school s2"), "{err}");
    }

    #[test]
    fn fractional_quota_text() {
        let text = r#"{"schools": ["s"], "types": {"t": 1},
            "constraints": [{"school": "s", "types": ["t"], "lower": 0, "upper": "3/2"}],
            "students": [{"id": "i", "type": "t", "prefs": ["s"]}]}"#;
        let inst = parse_instance_str(text).unwrap();
        assert_eq!(inst.constraints()[0].upper, frac(3, 2));
    }

    #[test]
    fn float_and_unknown_keys_rejected() {
        let float = r#"{"schools": ["s"], "types": {"t": 1},
            "constraints": [{"school": "s", "types": ["t"], "lower": 0, "upper": 1.5}],
            "students": [{"id": "i", "type": "t", "prefs": ["s"]}]}"#;
        assert!(matches!(parse_instance_str(float), Err(Error::Parse(_))));
        let extra = r#"{"schools": ["s"], "types": {"t": 1}, "colour": 1,
            "students": [{"id": "i", "type": "t", "prefs": ["s"]}]}"#;
        let err = parse_instance_str(extra).unwrap_err();
        assert!(err.to_string().contains("colour"), "{err}");
    }

    #[test]
    fn result_round_trip() {
        let inst = fixtures::appendix_example();
        let res = run_sdm(&inst, &(0..7).collect::<Vec<_>>()).unwrap();
        let file = ResultFile::from_sdm(&inst, &res, None, true).unwrap();
        let text = file.to_text();
        let back = ResultFile::parse(&text).unwrap();
        assert_eq!(back, file);
        assert_eq!(back.to_text(), text);
        assert_eq!(back.assignment_matrix(&inst).unwrap(), res.allocation.to_matrix(&inst));
    }
}
