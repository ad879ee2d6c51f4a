//! JSON documents read and written by the CLI.
//!
//! Every float is written as `{:.16e}` (17 significant digits), which
//! round-trips an `f64` exactly.

use std::io::{self, Write};

use fracsynth::interval::{IntervalMatrix, UncertainPlant};
use fracsynth::synthesis::{ControllerRealization, SynthesisCertificate};
use fracsynth::Matrix;
use serde::ser::Serialize;
use serde::Deserialize;
use serde_json::ser::{Formatter, PrettyFormatter};

use crate::CliError;

pub type Rows = Vec<Vec<f64>>;

#[derive(Debug, Clone, serde::Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundsDoc {
    pub lower: Rows,
    pub upper: Rows,
}

#[derive(Debug, Clone, serde::Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlantDoc {
    pub alpha: f64,
    #[serde(rename = "A")]
    pub a: BoundsDoc,
    #[serde(rename = "B")]
    pub b: BoundsDoc,
    #[serde(rename = "C")]
    pub c: BoundsDoc,
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControllerDoc {
    pub nc: usize,
    #[serde(rename = "Ac")]
    pub a_c: Rows,
    #[serde(rename = "Bc")]
    pub b_c: Rows,
    #[serde(rename = "Cc")]
    pub c_c: Rows,
    #[serde(rename = "Dc")]
    pub d_c: Rows,
}

#[derive(Debug, Clone, serde::Serialize, Deserialize)]
pub struct Slacks {
    pub stage1: f64,
    pub stage2: f64,
}

#[derive(Debug, Clone, serde::Serialize, Deserialize)]
pub struct CertificateDoc {
    #[serde(rename = "X")]
    pub x: Rows,
    #[serde(rename = "Y")]
    pub y: Rows,
    #[serde(rename = "X_cl")]
    pub x_cl: Rows,
    /// η₁..η₇.
    pub etas: Vec<f64>,
    pub theta: f64,
    pub slacks: Slacks,
    pub attempt: usize,
    pub nominal_sector_margin: f64,
}

pub fn rows_of(m: &Matrix) -> Rows {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

pub fn matrix_of(name: &str, rows: &Rows) -> Result<Matrix, CliError> {
    let cols = rows.first().map_or(0, Vec::len);
    if rows.is_empty() || cols == 0 {
        return Err(CliError::Input(format!("{name}: matrix must have at least one row and one column")));
    }
    if let Some(i) = rows.iter().position(|r| r.len() != cols) {
        return Err(CliError::Input(format!("{name}: row {i} has {} entries, expected {cols}", rows[i].len())));
    }
    Ok(Matrix::from_row_iterator(rows.len(), cols, rows.iter().flatten().copied()))
}

fn interval_of(name: &str, doc: &BoundsDoc, canonicalize: bool) -> Result<IntervalMatrix, CliError> {
    let lower = matrix_of(&format!("{name}.lower"), &doc.lower)?;
    let upper = matrix_of(&format!("{name}.upper"), &doc.upper)?;
    IntervalMatrix::from_bounds(lower, upper, canonicalize).map_err(|e| CliError::Input(format!("{name}: {e}")))
}

impl PlantDoc {
    pub fn to_plant(&self, canonicalize: bool) -> Result<UncertainPlant, CliError> {
        let a = interval_of("A", &self.a, canonicalize)?;
        let b = interval_of("B", &self.b, canonicalize)?;
        let c = interval_of("C", &self.c, canonicalize)?;
        UncertainPlant::new(a, b, c, self.alpha).map_err(|e| CliError::Input(e.to_string()))
    }
}

impl ControllerDoc {
    pub fn from_controller(k: &ControllerRealization) -> Self {
        Self { nc: k.order(), a_c: rows_of(&k.a_c), b_c: rows_of(&k.b_c), c_c: rows_of(&k.c_c), d_c: rows_of(&k.d_c) }
    }

    pub fn to_controller(&self) -> Result<ControllerRealization, CliError> {
        let k = ControllerRealization::new(
            matrix_of("Ac", &self.a_c)?,
            matrix_of("Bc", &self.b_c)?,
            matrix_of("Cc", &self.c_c)?,
            matrix_of("Dc", &self.d_c)?,
        )
        .map_err(|e| CliError::Input(e.to_string()))?;
        if k.order() != self.nc {
            return Err(CliError::Input(format!("nc = {} but Ac is {}x{}", self.nc, k.order(), k.order())));
        }
        Ok(k)
    }
}

impl CertificateDoc {
    pub fn from_certificate(c: &SynthesisCertificate) -> Self {
        Self {
            x: rows_of(&c.x),
            y: rows_of(&c.y),
            x_cl: rows_of(&c.x_cl),
            etas: c.etas.clone(),
            theta: c.theta,
            slacks: Slacks { stage1: c.stage1_slack, stage2: c.stage2_slack },
            attempt: c.attempt,
            nominal_sector_margin: c.nominal_sector_margin,
        }
    }
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &std::path::Path) -> Result<T, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
}

/// Pretty printer that writes floats in fixed 17-digit scientific form.
struct ExactFloats<'a>(PrettyFormatter<'a>);

macro_rules! delegate {
    ($($name:ident($($arg:ident: $ty:ty),*);)*) => {
        $(fn $name<W: ?Sized + Write>(&mut self, w: &mut W $(, $arg: $ty)*) -> io::Result<()> {
            self.0.$name(w $(, $arg)*)
        })*
    };
}

impl Formatter for ExactFloats<'_> {
    fn write_f64<W: ?Sized + Write>(&mut self, w: &mut W, value: f64) -> io::Result<()> {
        write!(w, "{value:.16e}")
    }

    delegate! {
        begin_array();
        end_array();
        begin_array_value(first: bool);
        end_array_value();
        begin_object();
        end_object();
        begin_object_key(first: bool);
        end_object_key();
        begin_object_value();
        end_object_value();
    }
}

pub fn to_json<T: Serialize>(value: &T) -> String {
    let mut out = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut out, ExactFloats(PrettyFormatter::new()));
    value.serialize(&mut ser).expect("in-memory serialization");
    out.push(b'\n');
    String::from_utf8(out).expect("serde_json writes UTF-8")
}
