//! Extended-XYZ ingestion and serialization.
//!
//! Frame-level keys: `energy`, `dipole`, `polarizability` (9 row-major),
//! `virial` (9 row-major), `total_charge`, `external_field`, `fidelity`,
//! `enthalpy`, plus `Lattice`, `Properties`, `pbc`. Per-atom columns (via
//! `Properties`): `pos`, `forces`, `charges`, `magmoms` (1 or 3 columns),
//! `magnetic_forces`. Unknown frame keys are preserved verbatim; floats are
//! written in shortest round-trip form so a write/read cycle is lossless.

use crate::error::{Error, Result};
use crate::geometry::{LabeledFrame, Labels, Structure};
use std::fmt::Write as _;
use std::path::Path;

const SYMBOLS: [&str; 118] = [
    "H", "He", "Li", "Be", "B", "C", "N", "O", "F", "Ne", "Na", "Mg", "Al", "Si", "P", "S", "Cl",
    "Ar", "K", "Ca", "Sc", "Ti", "V", "Cr", "Mn", "Fe", "Co", "Ni", "Cu", "Zn", "Ga", "Ge", "As",
    "Se", "Br", "Kr", "Rb", "Sr", "Y", "Zr", "Nb", "Mo", "Tc", "Ru", "Rh", "Pd", "Ag", "Cd", "In",
    "Sn", "Sb", "Te", "I", "Xe", "Cs", "Ba", "La", "Ce", "Pr", "Nd", "Pm", "Sm", "Eu", "Gd", "Tb",
    "Dy", "Ho", "Er", "Tm", "Yb", "Lu", "Hf", "Ta", "W", "Re", "Os", "Ir", "Pt", "Au", "Hg", "Tl",
    "Pb", "Bi", "Po", "At", "Rn", "Fr", "Ra", "Ac", "Th", "Pa", "U", "Np", "Pu", "Am", "Cm", "Bk",
    "Cf", "Es", "Fm", "Md", "No", "Lr", "Rf", "Db", "Sg", "Bh", "Hs", "Mt", "Ds", "Rg", "Cn", "Nh",
    "Fl", "Mc", "Lv", "Ts", "Og",
];

pub fn symbol_for(z: u32) -> String {
    if z >= 1 && z as usize <= SYMBOLS.len() {
        SYMBOLS[z as usize - 1].to_string()
    } else {
        z.to_string()
    }
}

pub fn species_from_token(tok: &str) -> Option<u32> {
    if let Ok(z) = tok.parse::<u32>() {
        return (z > 0).then_some(z);
    }
    SYMBOLS.iter().position(|&s| s == tok).map(|i| i as u32 + 1)
}

fn perr(line: usize, msg: impl Into<String>) -> Error {
    Error::Parse { line, msg: msg.into() }
}

/// Split a comment line into `key=value` pairs, honoring double quotes.
fn tokenize_comment(line: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut cur = String::new();
    let mut quoted = false;
    for ch in line.chars() {
        match ch {
            '"' => {
                quoted = !quoted;
                cur.push(ch);
            }
            c if c.is_whitespace() && !quoted => {
                if !cur.is_empty() {
                    out.push(std::mem::take(&mut cur));
                }
            }
            c => cur.push(c),
        }
    }
    if !cur.is_empty() {
        out.push(cur);
    }
    out
}

fn unquote(v: &str) -> &str {
    v.strip_prefix('"').and_then(|s| s.strip_suffix('"')).unwrap_or(v)
}

fn parse_floats(v: &str, want: usize, line: usize, key: &str) -> Result<Vec<f64>> {
    let vals: Vec<f64> = unquote(v)
        .split_whitespace()
        .map(|t| t.parse::<f64>().map_err(|_| perr(line, format!("bad float in {key}: {t}"))))
        .collect::<Result<_>>()?;
    if vals.len() != want {
        return Err(perr(line, format!("{key} expects {want} values, got {}", vals.len())));
    }
    Ok(vals)
}

fn mat3(v: &[f64]) -> [[f64; 3]; 3] {
    [[v[0], v[1], v[2]], [v[3], v[4], v[5]], [v[6], v[7], v[8]]]
}

struct PropField {
    name: String,
    _kind: char,
    cols: usize,
}

fn parse_properties(spec: &str, line: usize) -> Result<Vec<PropField>> {
    let parts: Vec<&str> = spec.split(':').collect();
    if parts.len() % 3 != 0 || parts.is_empty() {
        return Err(perr(line, format!("malformed Properties: {spec}")));
    }
    parts
        .chunks(3)
        .map(|c| {
            let cols = c[2].parse::<usize>().map_err(|_| perr(line, format!("bad Properties column count: {}", c[2])))?;
            let kind = c[1].chars().next().ok_or_else(|| perr(line, "empty Properties kind".to_string()))?;
            Ok(PropField { name: c[0].to_string(), _kind: kind, cols })
        })
        .collect()
}

pub fn read_extxyz_str(text: &str) -> Result<Vec<LabeledFrame>> {
    let lines: Vec<&str> = text.lines().collect();
    let mut frames = Vec::new();
    let mut at = 0usize;
    while at < lines.len() {
        if lines[at].trim().is_empty() {
            at += 1;
            continue;
        }
        let frame_index = frames.len();
        let n: usize = lines[at]
            .trim()
            .parse()
            .map_err(|_| perr(at + 1, format!("frame {frame_index}: expected atom count, got '{}'", lines[at].trim())))?;
        if at + 1 >= lines.len() {
            return Err(perr(at + 2, format!("frame {frame_index}: missing comment line")));
        }
        let comment_line = at + 2; // 1-based
        let frame = parse_frame(n, lines[at + 1], &lines[at + 2..], at + 2, frame_index)?;
        let _ = comment_line;
        frames.push(frame);
        if at + 2 + n > lines.len() {
            return Err(perr(lines.len(), format!("frame {frame_index}: header declares {n} atoms but file ends early")));
        }
        at += 2 + n;
    }
    Ok(frames)
}

fn parse_frame(
    n: usize,
    comment: &str,
    body: &[&str],
    body_line0: usize,
    frame_index: usize,
) -> Result<LabeledFrame> {
    let cline = body_line0; // 1-based line number of the comment line
    let mut structure = Structure::default();
    let mut labels = Labels::default();
    let mut extra_keys = Vec::new();
    let mut fields = vec![
        PropField { name: "species".into(), _kind: 'S', cols: 1 },
        PropField { name: "pos".into(), _kind: 'R', cols: 3 },
    ];
    let mut pbc_explicit = None;
    let mut has_lattice = false;

    for tok in tokenize_comment(comment) {
        let (key, value) = match tok.split_once('=') {
            Some(kv) => kv,
            None => {
                extra_keys.push((tok.clone(), String::new()));
                continue;
            }
        };
        match key {
            "Lattice" | "lattice" => {
                let v = parse_floats(value, 9, cline, "Lattice")?;
                structure.cell = Some(mat3(&v));
                has_lattice = true;
            }
            "Properties" | "properties" => {
                fields = parse_properties(unquote(value), cline)?;
            }
            "pbc" => {
                let toks: Vec<&str> = unquote(value).split_whitespace().collect();
                if toks.len() != 3 {
                    return Err(perr(cline, "pbc expects three flags".to_string()));
                }
                let mut p = [false; 3];
                for (a, t) in toks.iter().enumerate() {
                    p[a] = matches!(*t, "T" | "t" | "true" | "True" | "1");
                }
                pbc_explicit = Some(p);
            }
            "energy" => labels.energy = Some(parse_floats(value, 1, cline, "energy")?[0]),
            "enthalpy" => labels.enthalpy = Some(parse_floats(value, 1, cline, "enthalpy")?[0]),
            "dipole" => {
                let v = parse_floats(value, 3, cline, "dipole")?;
                labels.dipole = Some([v[0], v[1], v[2]]);
            }
            "polarizability" => {
                let v = parse_floats(value, 9, cline, "polarizability")?;
                labels.polarizability = Some(mat3(&v));
            }
            "virial" => {
                let v = parse_floats(value, 9, cline, "virial")?;
                labels.virial = Some(mat3(&v));
            }
            "total_charge" => structure.total_charge = Some(parse_floats(value, 1, cline, "total_charge")?[0]),
            "external_field" => {
                let v = parse_floats(value, 3, cline, "external_field")?;
                structure.external_field = Some([v[0], v[1], v[2]]);
            }
            "fidelity" => {
                structure.fidelity = Some(
                    unquote(value)
                        .parse::<i64>()
                        .map_err(|_| perr(cline, format!("fidelity must be an integer, got '{value}'")))?,
                )
            }
            _ => extra_keys.push((key.to_string(), value.to_string())),
        }
    }
    structure.pbc = pbc_explicit.unwrap_or([has_lattice; 3]);

    if body.len() < n {
        return Err(perr(
            body_line0 + body.len(),
            format!("frame {frame_index}: header declares {n} atoms but only {} rows follow", body.len()),
        ));
    }
    let ncols: usize = fields.iter().map(|f| f.cols).sum();
    let mut forces = Vec::new();
    let mut charges = Vec::new();
    let mut magmoms = Vec::new();
    let mut magnetic_forces = Vec::new();
    for row in 0..n {
        let lineno = body_line0 + 1 + row;
        let toks: Vec<&str> = body[row].split_whitespace().collect();
        if toks.is_empty() && row < n {
            return Err(perr(lineno, format!("frame {frame_index}: expected {n} atom rows, found blank line")));
        }
        if toks.len() != ncols {
            return Err(perr(
                lineno,
                format!("frame {frame_index}: row has {} columns, Properties declares {ncols}", toks.len()),
            ));
        }
        let mut col = 0usize;
        for f in &fields {
            let cell = &toks[col..col + f.cols];
            match (f.name.as_str(), f.cols) {
                ("species", 1) => {
                    let z = species_from_token(cell[0])
                        .ok_or_else(|| perr(lineno, format!("unknown species '{}'", cell[0])))?;
                    structure.species.push(z);
                }
                ("pos", 3) => {
                    let p = parse_row3(cell, lineno)?;
                    structure.positions.push(p);
                }
                ("forces", 3) => forces.push(parse_row3(cell, lineno)?),
                ("charges" | "charge", 1) => {
                    charges.push(cell[0].parse::<f64>().map_err(|_| perr(lineno, "bad charge value".to_string()))?)
                }
                ("magmoms", 1) => {
                    let m = cell[0].parse::<f64>().map_err(|_| perr(lineno, "bad magmom value".to_string()))?;
                    magmoms.push([0.0, 0.0, m]);
                }
                ("magmoms", 3) => magmoms.push(parse_row3(cell, lineno)?),
                ("magnetic_forces", 3) => magnetic_forces.push(parse_row3(cell, lineno)?),
                _ => {} // unrecognized per-atom column: skipped
            }
            col += f.cols;
        }
    }
    if !forces.is_empty() {
        labels.forces = Some(forces);
    }
    if !charges.is_empty() {
        structure.charges = Some(charges.clone());
        labels.charges = Some(charges);
    }
    if !magmoms.is_empty() {
        structure.magmoms = Some(magmoms);
    }
    if !magnetic_forces.is_empty() {
        labels.magnetic_forces = Some(magnetic_forces);
    }
    let mut frame = LabeledFrame { structure, labels, extra_keys };
    frame.symmetrize_polarizability();
    frame.validate()?;
    Ok(frame)
}

fn parse_row3(cell: &[&str], lineno: usize) -> Result<[f64; 3]> {
    let mut out = [0.0; 3];
    for (a, t) in cell.iter().enumerate() {
        out[a] = t.parse::<f64>().map_err(|_| perr(lineno, format!("bad float '{t}'")))?;
    }
    Ok(out)
}

pub fn read_extxyz(path: impl AsRef<Path>) -> Result<Vec<LabeledFrame>> {
    let text = std::fs::read_to_string(path.as_ref())?;
    read_extxyz_str(&text)
}

fn push_floats(out: &mut String, vals: &[f64]) {
    for (i, v) in vals.iter().enumerate() {
        if i > 0 {
            out.push(' ');
        }
        let _ = write!(out, "{v}");
    }
}

pub fn write_extxyz_str(frames: &[LabeledFrame]) -> String {
    let mut out = String::new();
    for frame in frames {
        let s = &frame.structure;
        let n = s.len();
        let _ = writeln!(out, "{n}");

        let mut props = String::from("species:S:1:pos:R:3");
        if frame.labels.forces.is_some() {
            props.push_str(":forces:R:3");
        }
        if s.charges.is_some() || frame.labels.charges.is_some() {
            props.push_str(":charges:R:1");
        }
        if s.magmoms.is_some() {
            props.push_str(":magmoms:R:3");
        }
        if frame.labels.magnetic_forces.is_some() {
            props.push_str(":magnetic_forces:R:3");
        }

        if let Some(cell) = s.cell {
            out.push_str("Lattice=\"");
            push_floats(&mut out, &[cell[0][0], cell[0][1], cell[0][2], cell[1][0], cell[1][1], cell[1][2], cell[2][0], cell[2][1], cell[2][2]]);
            out.push('"');
            out.push(' ');
        }
        let _ = write!(out, "Properties={props}");
        let _ = write!(
            out,
            " pbc=\"{} {} {}\"",
            if s.pbc[0] { "T" } else { "F" },
            if s.pbc[1] { "T" } else { "F" },
            if s.pbc[2] { "T" } else { "F" }
        );
        if let Some(e) = frame.labels.energy {
            let _ = write!(out, " energy={e}");
        }
        if let Some(e) = frame.labels.enthalpy {
            let _ = write!(out, " enthalpy={e}");
        }
        if let Some(d) = frame.labels.dipole {
            out.push_str(" dipole=\"");
            push_floats(&mut out, &d);
            out.push('"');
        }
        if let Some(a) = frame.labels.polarizability {
            out.push_str(" polarizability=\"");
            push_floats(&mut out, &[a[0][0], a[0][1], a[0][2], a[1][0], a[1][1], a[1][2], a[2][0], a[2][1], a[2][2]]);
            out.push('"');
        }
        if let Some(v) = frame.labels.virial {
            out.push_str(" virial=\"");
            push_floats(&mut out, &[v[0][0], v[0][1], v[0][2], v[1][0], v[1][1], v[1][2], v[2][0], v[2][1], v[2][2]]);
            out.push('"');
        }
        if let Some(q) = s.total_charge {
            let _ = write!(out, " total_charge={q}");
        }
        if let Some(f) = s.external_field {
            out.push_str(" external_field=\"");
            push_floats(&mut out, &f);
            out.push('"');
        }
        if let Some(fd) = s.fidelity {
            let _ = write!(out, " fidelity={fd}");
        }
        for (k, v) in &frame.extra_keys {
            if v.is_empty() {
                let _ = write!(out, " {k}");
            } else {
                let _ = write!(out, " {k}={v}");
            }
        }
        out.push('\n');

        for i in 0..n {
            let _ = write!(out, "{}", symbol_for(s.species[i]));
            out.push(' ');
            push_floats(&mut out, &s.positions[i]);
            if let Some(f) = &frame.labels.forces {
                out.push(' ');
                push_floats(&mut out, &f[i]);
            }
            if let Some(q) = s.charges.as_ref().or(frame.labels.charges.as_ref()) {
                let _ = write!(out, " {}", q[i]);
            }
            if let Some(m) = &s.magmoms {
                out.push(' ');
                push_floats(&mut out, &m[i]);
            }
            if let Some(mf) = &frame.labels.magnetic_forces {
                out.push(' ');
                push_floats(&mut out, &mf[i]);
            }
            out.push('\n');
        }
    }
    out
}

pub fn write_extxyz(frames: &[LabeledFrame], path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path.as_ref(), write_extxyz_str(frames))?;
    Ok(())
}
