//! Pose corpus files: the project-wide on-disk pose format.
//!
//! Plain text, one record per line. Header lines start with `#` and
//! declare the format version, the joint order of the 51 coordinate
//! columns, and which optional record fields are present:
//!
//! ```text
//! # pose-corpus-v1
//! # joints: pelvis r_hip ... r_wrist
//! # fields: id subject frame_time_s flag
//! f000 S1 0.00000000e0 ok  <51 floats>
//! ```
//!
//! Floats are written with 9 significant digits; reloading a saved file
//! and saving it again reproduces the bytes exactly.

use std::io::{BufRead, Write};

use thiserror::Error;

use crate::formats;
use crate::skeleton::{JointLayout, Pose, JOINT_COUNT};

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("unknown joint name in header: {0}")]
    UnknownJointName(String),
    #[error("unsupported corpus version: {0}")]
    VersionMismatch(String),
}

/// Which optional per-record fields a corpus carries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct CorpusFields {
    pub subject: bool,
    pub frame_time_s: bool,
    pub flag: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PoseRecord {
    pub id: String,
    pub subject: Option<String>,
    pub frame_time_s: Option<f64>,
    /// `ok` or an error name preserved from a canonicalization pass.
    pub flag: Option<String>,
    pub pose: Pose,
}

impl PoseRecord {
    pub fn new(id: impl Into<String>, pose: Pose) -> Self {
        PoseRecord {
            id: id.into(),
            subject: None,
            frame_time_s: None,
            flag: None,
            pose,
        }
    }
}

/// 9 significant digits, scientific notation.
pub fn format_sig9(x: f64) -> String {
    format!("{x:.8e}")
}

pub fn save_corpus<W: Write>(
    mut w: W,
    layout: &JointLayout,
    fields: CorpusFields,
    records: &[PoseRecord],
) -> Result<(), CorpusError> {
    writeln!(w, "# {}", formats::POSE_CORPUS)?;
    writeln!(w, "# joints: {}", layout.names().join(" "))?;
    let mut names = vec!["id"];
    if fields.subject {
        names.push("subject");
    }
    if fields.frame_time_s {
        names.push("frame_time_s");
    }
    if fields.flag {
        names.push("flag");
    }
    writeln!(w, "# fields: {}", names.join(" "))?;
    for rec in records {
        let mut cols: Vec<String> = vec![rec.id.clone()];
        if fields.subject {
            cols.push(rec.subject.clone().unwrap_or_else(|| "-".into()));
        }
        if fields.frame_time_s {
            cols.push(
                rec.frame_time_s
                    .map(format_sig9)
                    .unwrap_or_else(|| "-".into()),
            );
        }
        if fields.flag {
            cols.push(rec.flag.clone().unwrap_or_else(|| "ok".into()));
        }
        for v in rec.pose.to_flat() {
            cols.push(format_sig9(v));
        }
        writeln!(w, "{}", cols.join(" "))?;
    }
    Ok(())
}

pub fn save_corpus_file(
    path: &std::path::Path,
    layout: &JointLayout,
    fields: CorpusFields,
    records: &[PoseRecord],
) -> Result<(), CorpusError> {
    let f = std::fs::File::create(path)?;
    save_corpus(std::io::BufWriter::new(f), layout, fields, records)
}

/// Loads a corpus, remapping the file's joint order onto `layout` by
/// name. Fails on unknown joint names, missing columns or bad floats,
/// always naming the offending line.
pub fn load_corpus<R: BufRead>(
    r: R,
    layout: &JointLayout,
) -> Result<(Vec<PoseRecord>, CorpusFields), CorpusError> {
    let mut fields = CorpusFields::default();
    // file column j holds layout joint perm[j]
    let mut perm: Option<Vec<usize>> = None;
    let mut version_seen = false;
    let mut records = Vec::new();

    for (lineno, line) in r.lines().enumerate() {
        let line = line?;
        let lineno = lineno + 1;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        if let Some(rest) = trimmed.strip_prefix('#') {
            let rest = rest.trim();
            if rest == formats::POSE_CORPUS {
                version_seen = true;
            } else if rest.starts_with("pose-corpus-") {
                return Err(CorpusError::VersionMismatch(rest.to_string()));
            } else if let Some(names) = rest.strip_prefix("joints:") {
                let names: Vec<&str> = names.split_whitespace().collect();
                if names.len() != JOINT_COUNT {
                    return Err(CorpusError::Parse {
                        line: lineno,
                        msg: format!("expected {JOINT_COUNT} joint names, got {}", names.len()),
                    });
                }
                let mut p = Vec::with_capacity(JOINT_COUNT);
                for name in names {
                    match layout.index_of(name) {
                        Some(idx) => p.push(idx),
                        None => return Err(CorpusError::UnknownJointName(name.to_string())),
                    }
                }
                let mut seen = [false; JOINT_COUNT];
                for &idx in &p {
                    if seen[idx] {
                        return Err(CorpusError::Parse {
                            line: lineno,
                            msg: format!("duplicate joint {}", layout.names()[idx]),
                        });
                    }
                    seen[idx] = true;
                }
                perm = Some(p);
            } else if let Some(list) = rest.strip_prefix("fields:") {
                for f in list.split_whitespace() {
                    match f {
                        "id" => {}
                        "subject" => fields.subject = true,
                        "frame_time_s" => fields.frame_time_s = true,
                        "flag" => fields.flag = true,
                        other => {
                            return Err(CorpusError::Parse {
                                line: lineno,
                                msg: format!("unknown field {other}"),
                            })
                        }
                    }
                }
            }
            continue;
        }
        if !version_seen {
            return Err(CorpusError::VersionMismatch(
                "missing pose-corpus version header".into(),
            ));
        }
        let perm = perm.as_ref().ok_or(CorpusError::Parse {
            line: lineno,
            msg: "missing joints header before data".into(),
        })?;
        let tokens: Vec<&str> = trimmed.split_whitespace().collect();
        let meta = 1 + fields.subject as usize + fields.frame_time_s as usize + fields.flag as usize;
        if tokens.len() != meta + 3 * JOINT_COUNT {
            return Err(CorpusError::Parse {
                line: lineno,
                msg: format!(
                    "expected {} columns, got {}",
                    meta + 3 * JOINT_COUNT,
                    tokens.len()
                ),
            });
        }
        let mut cursor = 0usize;
        let id = tokens[cursor].to_string();
        cursor += 1;
        let subject = if fields.subject {
            let t = tokens[cursor];
            cursor += 1;
            (t != "-").then(|| t.to_string())
        } else {
            None
        };
        let frame_time_s = if fields.frame_time_s {
            let t = tokens[cursor];
            cursor += 1;
            if t == "-" {
                None
            } else {
                Some(parse_float(t, lineno)?)
            }
        } else {
            None
        };
        let flag = if fields.flag {
            let t = tokens[cursor];
            cursor += 1;
            Some(t.to_string())
        } else {
            None
        };
        let mut flat = [0.0f64; 3 * JOINT_COUNT];
        for (file_j, &target_j) in perm.iter().enumerate() {
            for axis in 0..3 {
                flat[3 * target_j + axis] = parse_float(tokens[cursor + 3 * file_j + axis], lineno)?;
            }
        }
        records.push(PoseRecord {
            id,
            subject,
            frame_time_s,
            flag,
            pose: Pose::from_flat(&flat),
        });
    }
    Ok((records, fields))
}

pub fn load_corpus_file(
    path: &std::path::Path,
    layout: &JointLayout,
) -> Result<(Vec<PoseRecord>, CorpusFields), CorpusError> {
    let f = std::fs::File::open(path)?;
    load_corpus(std::io::BufReader::new(f), layout)
}

fn parse_float(tok: &str, line: usize) -> Result<f64, CorpusError> {
    tok.parse::<f64>().map_err(|_| CorpusError::Parse {
        line,
        msg: format!("bad float {tok:?}"),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::Vector3;

    fn sample_records() -> Vec<PoseRecord> {
        (0..3)
            .map(|i| {
                let mut pose = Pose::zeros();
                for j in 0..JOINT_COUNT {
                    *pose.joint_mut(j) = Vector3::new(
                        (i * 31 + j) as f64 * 1.7,
                        -(j as f64) * 0.3333333,
                        1234.5678901 + i as f64,
                    );
                }
                PoseRecord {
                    id: format!("f{i:03}"),
                    subject: Some("S1".into()),
                    frame_time_s: Some(i as f64 / 30.0),
                    flag: None,
                    pose,
                }
            })
            .collect()
    }

    #[test]
    fn round_trip_is_byte_identical() {
        let layout = JointLayout::h36m17();
        let fields = CorpusFields {
            subject: true,
            frame_time_s: true,
            flag: false,
        };
        let records = sample_records();
        let mut buf = Vec::new();
        save_corpus(&mut buf, &layout, fields, &records).unwrap();
        let (loaded, f2) = load_corpus(buf.as_slice(), &layout).unwrap();
        assert_eq!(f2, fields);
        let mut buf2 = Vec::new();
        save_corpus(&mut buf2, &layout, f2, &loaded).unwrap();
        assert_eq!(buf, buf2);
    }

    #[test]
    fn permuted_header_remaps_to_layout_order() {
        let layout = JointLayout::h36m17();
        let records = sample_records();
        let mut buf = Vec::new();
        save_corpus(&mut buf, &layout, CorpusFields::default(), &records).unwrap();
        let text = String::from_utf8(buf).unwrap();
        // Swap the first two joint names and their coordinate triples.
        let permuted: String = text
            .lines()
            .map(|line| {
                if let Some(names) = line.strip_prefix("# joints: ") {
                    let mut n: Vec<&str> = names.split_whitespace().collect();
                    n.swap(0, 1);
                    format!("# joints: {}", n.join(" "))
                } else if line.starts_with('#') {
                    line.to_string()
                } else {
                    let mut toks: Vec<&str> = line.split_whitespace().collect();
                    for a in 0..3 {
                        toks.swap(1 + a, 4 + a);
                    }
                    toks.join(" ")
                }
            })
            .map(|l| l + "\n")
            .collect();
        let (loaded, _) = load_corpus(permuted.as_bytes(), &layout).unwrap();
        for (a, b) in loaded.iter().zip(records.iter()) {
            assert_eq!(a.pose, b.pose);
        }
    }

    #[test]
    fn truncated_line_names_line_number() {
        let layout = JointLayout::h36m17();
        let mut buf = Vec::new();
        save_corpus(&mut buf, &layout, CorpusFields::default(), &sample_records()).unwrap();
        let mut text = String::from_utf8(buf).unwrap();
        // Drop the last token of the first data line (line 4).
        let mut lines: Vec<String> = text.lines().map(String::from).collect();
        let cut = lines[3].rfind(' ').unwrap();
        lines[3].truncate(cut);
        text = lines.join("\n");
        match load_corpus(text.as_bytes(), &layout) {
            Err(CorpusError::Parse { line, .. }) => assert_eq!(line, 4),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn unknown_joint_name_is_rejected() {
        let layout = JointLayout::h36m17();
        let mut buf = Vec::new();
        save_corpus(&mut buf, &layout, CorpusFields::default(), &sample_records()).unwrap();
        let text = String::from_utf8(buf).unwrap().replace("pelvis", "root");
        assert!(matches!(
            load_corpus(text.as_bytes(), &layout),
            Err(CorpusError::UnknownJointName(_))
        ));
    }
}
