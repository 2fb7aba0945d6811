//! On-disk formats: JSON descriptions of models, switching signals and
//! inputs, the serialized jump-ODE system, and CSV/text export with
//! 17-significant-digit decimals (exact f64 round-trip).
//!
//! Model files are hand-writable nested arrays:
//!
//! ```json
//! { "n": 2, "m": 1, "p": 1,
//!   "modes": [ { "E": [[1,0],[0,0]], "A": [[-1,0],[0,1]],
//!                "B": [[1],[1]], "C": [[1,0]] } ] }
//! ```
//!
//! Signal files are `{ "t0": 0.0, "t_end": 1.5,
//! "entries": [ { "t": 0.0, "mode": 1 } ] }` with one-based mode indices,
//! and input files describe piecewise polynomial-exponential channels.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::pencil::ModeSystem;
use crate::reform::{JumpOdeSystem, ModeDynamics, SwitchedDae, SwitchingSignal};
use crate::sim::{InputPiece, InputSignal, PolyExpTerm, Trajectory};
use crate::Tolerances;

fn parse_err(context: &str, msg: impl Into<String>) -> Error {
    Error::Parse {
        context: context.to_string(),
        msg: msg.into(),
    }
}

fn get<'a>(v: &'a Value, key: &str, ctx: &str) -> Result<&'a Value> {
    v.get(key)
        .ok_or_else(|| parse_err(ctx, format!("missing field `{key}`")))
}

fn as_usize(v: &Value, ctx: &str) -> Result<usize> {
    v.as_u64()
        .map(|x| x as usize)
        .ok_or_else(|| parse_err(ctx, "expected a nonnegative integer"))
}

fn as_f64(v: &Value, ctx: &str) -> Result<f64> {
    v.as_f64().ok_or_else(|| parse_err(ctx, "expected a number"))
}

fn as_array<'a>(v: &'a Value, ctx: &str) -> Result<&'a Vec<Value>> {
    v.as_array().ok_or_else(|| parse_err(ctx, "expected an array"))
}

/// Parse a nested row-array into a matrix with the declared shape.
fn matrix_rows(v: &Value, rows: usize, cols: usize, ctx: &str) -> Result<DMatrix<f64>> {
    let outer = as_array(v, ctx)?;
    if outer.len() != rows {
        return Err(Error::DimensionMismatch(format!(
            "{ctx}: has {} rows, expected {rows}",
            outer.len()
        )));
    }
    let mut data = Vec::with_capacity(rows * cols);
    for (i, row) in outer.iter().enumerate() {
        let row = as_array(row, ctx)?;
        if row.len() != cols {
            return Err(Error::DimensionMismatch(format!(
                "{ctx}: row {} has {} entries, expected {cols}",
                i + 1,
                row.len()
            )));
        }
        for entry in row {
            data.push(as_f64(entry, ctx)?);
        }
    }
    Ok(DMatrix::from_row_slice(rows, cols, &data))
}

/// Parsed model description, prior to regularity validation.
#[derive(Debug)]
pub struct ModelFile {
    pub n: usize,
    pub m: usize,
    pub p: usize,
    pub modes: Vec<ModeSystem>,
}

impl ModelFile {
    pub fn parse(text: &str) -> Result<Self> {
        let root: Value = serde_json::from_str(text)
            .map_err(|e| parse_err("model file", e.to_string()))?;
        let n = as_usize(get(&root, "n", "model file")?, "field `n`")?;
        let m = as_usize(get(&root, "m", "model file")?, "field `m`")?;
        let p = as_usize(get(&root, "p", "model file")?, "field `p`")?;
        let modes_v = as_array(get(&root, "modes", "model file")?, "field `modes`")?;
        if modes_v.is_empty() {
            return Err(parse_err("model file", "`modes` must not be empty"));
        }
        let mut modes = Vec::with_capacity(modes_v.len());
        for (j, mode_v) in modes_v.iter().enumerate() {
            let ctx = format!("mode {}", j + 1);
            let e = matrix_rows(get(mode_v, "E", &ctx)?, n, n, &format!("{ctx}, matrix E"))?;
            let a = matrix_rows(get(mode_v, "A", &ctx)?, n, n, &format!("{ctx}, matrix A"))?;
            let b = matrix_rows(get(mode_v, "B", &ctx)?, n, m, &format!("{ctx}, matrix B"))?;
            let c = matrix_rows(get(mode_v, "C", &ctx)?, p, n, &format!("{ctx}, matrix C"))?;
            modes.push(ModeSystem::new(e, a, b, c)?);
        }
        Ok(ModelFile { n, m, p, modes })
    }

    pub fn into_switched_dae(self, tols: &Tolerances) -> Result<SwitchedDae> {
        SwitchedDae::new(self.modes, tols)
    }
}

fn rows_json(m: &DMatrix<f64>) -> Value {
    Value::Array(
        (0..m.nrows())
            .map(|i| {
                Value::Array(
                    (0..m.ncols())
                        .map(|j| serde_json::json!(m[(i, j)]))
                        .collect(),
                )
            })
            .collect(),
    )
}

/// Serialize a switched model back into the JSON format.
pub fn model_to_json(sys: &SwitchedDae) -> String {
    let modes: Vec<Value> = sys
        .modes()
        .iter()
        .map(|mode| {
            serde_json::json!({
                "E": rows_json(&mode.e),
                "A": rows_json(&mode.a),
                "B": rows_json(&mode.b),
                "C": rows_json(&mode.c),
            })
        })
        .collect();
    serde_json::to_string_pretty(&serde_json::json!({
        "n": sys.state_dim(),
        "m": sys.input_dim(),
        "p": sys.output_dim(),
        "modes": modes,
    }))
    .expect("serialization cannot fail")
}

/// Parse a switching-signal file; mode indices in the file are one-based.
pub fn parse_signal(text: &str, mode_count: usize) -> Result<SwitchingSignal> {
    let root: Value =
        serde_json::from_str(text).map_err(|e| parse_err("signal file", e.to_string()))?;
    let t0 = as_f64(get(&root, "t0", "signal file")?, "field `t0`")?;
    let t_end = as_f64(get(&root, "t_end", "signal file")?, "field `t_end`")?;
    let entries_v = as_array(get(&root, "entries", "signal file")?, "field `entries`")?;
    let mut entries = Vec::with_capacity(entries_v.len());
    for (k, entry) in entries_v.iter().enumerate() {
        let ctx = format!("signal entry {}", k + 1);
        let t = as_f64(get(entry, "t", &ctx)?, &ctx)?;
        let mode = as_usize(get(entry, "mode", &ctx)?, &ctx)?;
        if mode == 0 {
            return Err(Error::InvalidSignal(format!("{ctx}: mode indices are one-based")));
        }
        entries.push((t, mode - 1));
    }
    if let Some(&(t_first, _)) = entries.first() {
        if t_first != t0 {
            return Err(Error::InvalidSignal(format!(
                "first entry time {t_first} differs from t0 = {t0}"
            )));
        }
    }
    SwitchingSignal::new(entries, t_end, mode_count)
}

pub fn signal_to_json(q: &SwitchingSignal) -> String {
    let entries: Vec<Value> = q
        .entries()
        .iter()
        .map(|&(t, mode)| serde_json::json!({ "t": t, "mode": mode + 1 }))
        .collect();
    serde_json::to_string_pretty(&serde_json::json!({
        "t0": q.t0(),
        "t_end": q.t_end,
        "entries": entries,
    }))
    .expect("serialization cannot fail")
}

/// Parse an input file with the expected channel count.
pub fn parse_input(text: &str, channels: usize) -> Result<InputSignal> {
    let root: Value =
        serde_json::from_str(text).map_err(|e| parse_err("input file", e.to_string()))?;
    let pieces_v = as_array(get(&root, "pieces", "input file")?, "field `pieces`")?;
    let mut pieces = Vec::with_capacity(pieces_v.len());
    for (pi, piece_v) in pieces_v.iter().enumerate() {
        let ctx = format!("input piece {}", pi + 1);
        let start = as_f64(get(piece_v, "start", &ctx)?, &ctx)?;
        let channels_v = as_array(get(piece_v, "channels", &ctx)?, &ctx)?;
        if channels_v.len() != channels {
            return Err(Error::InvalidInput(format!(
                "{ctx}: has {} channels, the model expects {channels}",
                channels_v.len()
            )));
        }
        let mut channel_terms = Vec::with_capacity(channels_v.len());
        for (ci, terms_v) in channels_v.iter().enumerate() {
            let tctx = format!("{ctx}, channel {}", ci + 1);
            let terms_v = as_array(terms_v, &tctx)?;
            let mut terms = Vec::with_capacity(terms_v.len());
            for term_v in terms_v {
                let coeffs_v = as_array(get(term_v, "coeffs", &tctx)?, &tctx)?;
                let coeffs = coeffs_v
                    .iter()
                    .map(|c| as_f64(c, &tctx))
                    .collect::<Result<Vec<f64>>>()?;
                let rate = as_f64(get(term_v, "rate", &tctx)?, &tctx)?;
                terms.push(PolyExpTerm { coeffs, rate });
            }
            channel_terms.push(terms);
        }
        pieces.push(InputPiece {
            start,
            channels: channel_terms,
        });
    }
    InputSignal::new(pieces)
}

pub fn input_to_json(u: &InputSignal) -> String {
    let pieces: Vec<Value> = u
        .pieces()
        .iter()
        .map(|piece| {
            let channels: Vec<Value> = piece
                .channels
                .iter()
                .map(|terms| {
                    Value::Array(
                        terms
                            .iter()
                            .map(|t| serde_json::json!({ "coeffs": t.coeffs, "rate": t.rate }))
                            .collect(),
                    )
                })
                .collect();
            serde_json::json!({ "start": piece.start, "channels": channels })
        })
        .collect();
    serde_json::to_string_pretty(&serde_json::json!({ "pieces": pieces }))
        .expect("serialization cannot fail")
}

#[derive(Serialize, Deserialize)]
struct MatrixData {
    rows: usize,
    cols: usize,
    /// Row-major entries.
    data: Vec<f64>,
}

impl MatrixData {
    fn from(m: &DMatrix<f64>) -> Self {
        let mut data = Vec::with_capacity(m.nrows() * m.ncols());
        for i in 0..m.nrows() {
            for j in 0..m.ncols() {
                data.push(m[(i, j)]);
            }
        }
        MatrixData {
            rows: m.nrows(),
            cols: m.ncols(),
            data,
        }
    }

    fn into_matrix(self, ctx: &str) -> Result<DMatrix<f64>> {
        if self.data.len() != self.rows * self.cols {
            return Err(parse_err(ctx, "matrix data length does not match its shape"));
        }
        Ok(DMatrix::from_row_slice(self.rows, self.cols, &self.data))
    }
}

#[derive(Serialize, Deserialize)]
struct JumpModeFile {
    a_diff: MatrixData,
    b_diff: MatrixData,
    c_diff: MatrixData,
    pi: MatrixData,
    jump_b: MatrixData,
    feedthrough: MatrixData,
    imp_c: MatrixData,
    nu: usize,
}

#[derive(Serialize, Deserialize)]
struct JumpOdeFile {
    kind: String,
    n: usize,
    m: usize,
    p: usize,
    modes: Vec<JumpModeFile>,
}

/// Serialize a jump-ODE system (the output of the reformulation step) so it
/// can be re-ingested by the subspace and simulation commands.
pub fn jump_ode_to_json(jos: &JumpOdeSystem) -> String {
    let modes = jos
        .modes
        .iter()
        .map(|mode| JumpModeFile {
            a_diff: MatrixData::from(&mode.a_diff),
            b_diff: MatrixData::from(&mode.b_diff),
            c_diff: MatrixData::from(&mode.c_diff),
            pi: MatrixData::from(&mode.pi),
            jump_b: MatrixData::from(&mode.jump_b),
            feedthrough: MatrixData::from(&mode.feedthrough),
            imp_c: MatrixData::from(&mode.imp_c),
            nu: mode.nu,
        })
        .collect();
    let file = JumpOdeFile {
        kind: "jump_ode".to_string(),
        n: jos.state_dim(),
        m: jos.input_dim(),
        p: jos.output_dim(),
        modes,
    };
    serde_json::to_string_pretty(&file).expect("serialization cannot fail")
}

pub fn parse_jump_ode(text: &str) -> Result<JumpOdeSystem> {
    let file: JumpOdeFile =
        serde_json::from_str(text).map_err(|e| parse_err("jump-ODE file", e.to_string()))?;
    if file.kind != "jump_ode" {
        return Err(parse_err("jump-ODE file", "kind must be \"jump_ode\""));
    }
    let mut modes = Vec::with_capacity(file.modes.len());
    for (j, mode) in file.modes.into_iter().enumerate() {
        let ctx = format!("jump-ODE mode {}", j + 1);
        modes.push(ModeDynamics {
            a_diff: mode.a_diff.into_matrix(&ctx)?,
            b_diff: mode.b_diff.into_matrix(&ctx)?,
            c_diff: mode.c_diff.into_matrix(&ctx)?,
            pi: mode.pi.into_matrix(&ctx)?,
            jump_b: mode.jump_b.into_matrix(&ctx)?,
            feedthrough: mode.feedthrough.into_matrix(&ctx)?,
            imp_c: mode.imp_c.into_matrix(&ctx)?,
            nu: mode.nu,
        });
    }
    if modes.is_empty() {
        return Err(parse_err("jump-ODE file", "`modes` must not be empty"));
    }
    Ok(JumpOdeSystem::from_modes(modes))
}

/// Either flavor of system description, dispatched on the `kind` field.
pub enum LoadedSystem {
    Dae(SwitchedDae),
    JumpOde(JumpOdeSystem),
}

pub fn parse_system(text: &str, tols: &Tolerances) -> Result<LoadedSystem> {
    let root: Value =
        serde_json::from_str(text).map_err(|e| parse_err("system file", e.to_string()))?;
    match root.get("kind").and_then(|k| k.as_str()) {
        Some("jump_ode") => Ok(LoadedSystem::JumpOde(parse_jump_ode(text)?)),
        _ => Ok(LoadedSystem::Dae(
            ModelFile::parse(text)?.into_switched_dae(tols)?,
        )),
    }
}

/// 17-significant-digit decimal, which round-trips f64 exactly.
pub fn fmt_g17(x: f64) -> String {
    format!("{:.16e}", x)
}

/// Matrix as CSV with a generic header row and LF line endings.
pub fn matrix_csv(m: &DMatrix<f64>) -> String {
    let mut out = String::new();
    let header: Vec<String> = (1..=m.ncols()).map(|j| format!("c{j}")).collect();
    out.push_str(&header.join(","));
    out.push('\n');
    for i in 0..m.nrows() {
        let row: Vec<String> = (0..m.ncols()).map(|j| fmt_g17(m[(i, j)])).collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

/// Trajectory as CSV: `t, z_1..z_n, y_1..y_p`.
pub fn trajectory_csv(traj: &Trajectory) -> String {
    let (n, p) = match traj.samples.first() {
        Some((_, z, y)) => (z.len(), y.len()),
        None => (0, 0),
    };
    let mut out = String::from("t");
    for i in 1..=n {
        out.push_str(&format!(",z_{i}"));
    }
    for i in 1..=p {
        out.push_str(&format!(",y_{i}"));
    }
    out.push('\n');
    for (t, z, y) in &traj.samples {
        out.push_str(&fmt_g17(*t));
        for v in z.iter().chain(y.iter()) {
            out.push(',');
            out.push_str(&fmt_g17(*v));
        }
        out.push('\n');
    }
    out
}

/// Impulse records as structured text, one line per Dirac-derivative order.
pub fn impulse_records_text(traj: &Trajectory) -> String {
    let mut out = String::new();
    for record in &traj.impulses {
        if record.coefficients.is_empty() {
            out.push_str(&format!("t={} (no impulsive orders)\n", fmt_g17(record.t)));
            continue;
        }
        for coeff in &record.coefficients {
            let values: Vec<String> = coeff.value.iter().map(|v| fmt_g17(*v)).collect();
            out.push_str(&format!(
                "t={} order={} numerically_zero={} coeff=[{}]\n",
                fmt_g17(record.t),
                coeff.order,
                coeff.numerically_zero,
                values.join(", ")
            ));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    const DESK_MODEL: &str = r#"{
        "n": 2, "m": 1, "p": 1,
        "modes": [
            { "E": [[1,0],[0,0]], "A": [[-1,0],[0,1]], "B": [[1],[1]], "C": [[1,0]] },
            { "E": [[0,1],[0,0]], "A": [[1,0],[0,1]], "B": [[0],[1]], "C": [[1,0]] }
        ]
    }"#;

    #[test]
    fn parses_the_two_mode_model() {
        let tols = Tolerances::default();
        let sys = ModelFile::parse(DESK_MODEL)
            .unwrap()
            .into_switched_dae(&tols)
            .unwrap();
        assert_eq!(sys.mode_count(), 2);
        assert_eq!(
            (sys.state_dim(), sys.input_dim(), sys.output_dim()),
            (2, 1, 1)
        );
    }

    #[test]
    fn missing_matrix_names_the_mode() {
        let text = r#"{ "n": 1, "m": 1, "p": 1,
            "modes": [ { "E": [[1]], "B": [[1]], "C": [[1]] } ] }"#;
        let err = ModelFile::parse(text).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("mode 1"), "message was: {msg}");
        assert!(msg.contains("`A`"), "message was: {msg}");
    }

    #[test]
    fn non_square_e_is_a_dimension_error() {
        let text = r#"{ "n": 2, "m": 1, "p": 1,
            "modes": [ { "E": [[1,0,0],[0,0,1]], "A": [[1,0],[0,1]],
                         "B": [[1],[1]], "C": [[1,0]] } ] }"#;
        assert!(matches!(
            ModelFile::parse(text),
            Err(Error::DimensionMismatch(_))
        ));
    }

    #[test]
    fn model_json_round_trip() {
        let tols = Tolerances::default();
        let sys = ModelFile::parse(DESK_MODEL)
            .unwrap()
            .into_switched_dae(&tols)
            .unwrap();
        let text = model_to_json(&sys);
        let again = ModelFile::parse(&text)
            .unwrap()
            .into_switched_dae(&tols)
            .unwrap();
        for (a, b) in sys.modes().iter().zip(again.modes()) {
            assert_eq!(a.e, b.e);
            assert_eq!(a.a, b.a);
        }
    }

    #[test]
    fn signal_round_trip_and_validation() {
        let text = r#"{ "t0": 0.0, "t_end": 1.5,
            "entries": [ { "t": 0.0, "mode": 1 }, { "t": 1.0, "mode": 2 } ] }"#;
        let q = parse_signal(text, 2).unwrap();
        assert_eq!(q.switch_count(), 1);
        assert_eq!(q.mode_at(1), 1);
        let again = parse_signal(&signal_to_json(&q), 2).unwrap();
        assert_eq!(again.entries(), q.entries());

        let bad = r#"{ "t0": 0.5, "t_end": 1.5,
            "entries": [ { "t": 0.0, "mode": 1 } ] }"#;
        assert!(parse_signal(bad, 2).is_err());
    }

    #[test]
    fn input_round_trip() {
        let text = r#"{ "pieces": [ { "start": 0.0,
            "channels": [ [ { "coeffs": [1.0, 2.0], "rate": -0.5 } ] ] } ] }"#;
        let u = parse_input(text, 1).unwrap();
        let again = parse_input(&input_to_json(&u), 1).unwrap();
        assert_eq!(u, again);
        assert!(parse_input(text, 2).is_err());
    }

    #[test]
    fn jump_ode_round_trip_preserves_empty_shapes() {
        let tols = Tolerances::default();
        let sys = ModelFile::parse(DESK_MODEL)
            .unwrap()
            .into_switched_dae(&tols)
            .unwrap();
        let jos = crate::reform::build_jump_ode(&sys, &tols).unwrap();
        let text = jump_ode_to_json(&jos);
        let again = parse_jump_ode(&text).unwrap();
        assert_eq!(again.mode_count(), 2);
        for (a, b) in jos.modes.iter().zip(&again.modes) {
            assert_eq!(a.jump_b, b.jump_b);
            assert_eq!(a.imp_c.shape(), b.imp_c.shape());
            assert_eq!(a.nu, b.nu);
        }
    }

    #[test]
    fn g17_round_trips_exactly() {
        for x in [1.0 / 3.0, std::f64::consts::PI, 1e-300, -0.0, 2.5e17] {
            let s = fmt_g17(x);
            let back: f64 = s.parse().unwrap();
            assert_eq!(back.to_bits(), x.to_bits(), "{s}");
        }
    }
}
