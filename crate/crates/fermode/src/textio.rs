//! Text format for states, operator strings and reports.
//!
//! State documents:
//!
//! ```text
//! modes 2 charges 1 1
//! 0.5 * |01><01|
//! 0.5 * |01><10|
//! ```
//!
//! or the named coefficient families:
//!
//! ```text
//! modes 2
//! two_mode { a2=0.5 a3=0.5 b4=0.5 }
//! ```
//!
//! Occupation bits are mode-1-first (leftmost bit = mode 1). Hermitian
//! closure is automatic: an off-diagonal term implies its conjugate, so
//! only one triangle needs to be written; documents are canonicalized
//! to the upper triangle. Diagonal entries must be real.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use num_complex::Complex64;
use thiserror::Error;

use crate::entanglement::EntanglementReport;
use crate::fock::{Factor, FactorKind, OperatorString};
use crate::mapping::MappingVerdict;
use crate::numerics::ComplexMatrix;
use crate::states::{
    ChargePattern, DensityOperator, StateError, ThreeModeCoefficients, TwoModeCoefficients,
};

pub const REPORT_SCHEMA: &str = "fermode.report.v1";

#[derive(Debug, Error, PartialEq)]
pub enum TextioError {
    #[error("syntax error at line {line}, column {col}: {message}")]
    SyntaxError {
        line: usize,
        col: usize,
        message: String,
    },
    #[error("semantic error: {0}")]
    SemanticError(String),
}

impl From<StateError> for TextioError {
    fn from(e: StateError) -> Self {
        TextioError::SemanticError(e.to_string())
    }
}

/// Body of a state document: explicit matrix terms or a named
/// coefficient family.
#[derive(Debug, Clone, PartialEq)]
pub enum StateBody {
    /// Upper-triangle terms, keyed by (ket index, bra index) with
    /// ket <= bra; the conjugate mirror is implied.
    Terms(BTreeMap<(usize, usize), Complex64>),
    TwoMode(TwoModeCoefficients),
    ThreeMode(ThreeModeCoefficients),
}

#[derive(Debug, Clone, PartialEq)]
pub struct StateDocument {
    pub n_modes: usize,
    pub charges: Option<ChargePattern>,
    pub body: StateBody,
}

impl StateDocument {
    /// Build the matrix and validate it as a density operator.
    pub fn assemble(&self) -> Result<DensityOperator, TextioError> {
        let dim = 1usize << self.n_modes;
        let matrix = match &self.body {
            StateBody::Terms(terms) => {
                let mut m = ComplexMatrix::zeros(dim, dim);
                for (&(k, b), &coeff) in terms {
                    m.add_to(k, b, coeff);
                    if k != b {
                        m.add_to(b, k, coeff.conj());
                    }
                }
                m
            }
            StateBody::TwoMode(c) => {
                if self.n_modes != 2 {
                    return Err(TextioError::SemanticError(format!(
                        "two_mode family needs modes 2, document says {}",
                        self.n_modes
                    )));
                }
                c.assemble()
            }
            StateBody::ThreeMode(c) => {
                if self.n_modes != 3 {
                    return Err(TextioError::SemanticError(format!(
                        "three_mode family needs modes 3, document says {}",
                        self.n_modes
                    )));
                }
                c.assemble()
            }
        };
        Ok(DensityOperator::new(self.n_modes, matrix)?)
    }
}

struct Cursor<'a> {
    text: &'a [u8],
    pos: usize,
    line: usize,
    col: usize,
}

impl<'a> Cursor<'a> {
    fn new(text: &'a str) -> Self {
        Cursor {
            text: text.as_bytes(),
            pos: 0,
            line: 1,
            col: 1,
        }
    }

    fn peek(&self) -> Option<u8> {
        self.text.get(self.pos).copied()
    }

    fn bump(&mut self) -> Option<u8> {
        let c = self.peek()?;
        self.pos += 1;
        if c == b'\n' {
            self.line += 1;
            self.col = 1;
        } else {
            self.col += 1;
        }
        Some(c)
    }

    fn skip_ws(&mut self) {
        while matches!(self.peek(), Some(b' ' | b'\t' | b'\r' | b'\n')) {
            self.bump();
        }
    }

    fn error(&self, message: impl Into<String>) -> TextioError {
        TextioError::SyntaxError {
            line: self.line,
            col: self.col,
            message: message.into(),
        }
    }

    fn expect(&mut self, c: u8) -> Result<(), TextioError> {
        if self.peek() == Some(c) {
            self.bump();
            Ok(())
        } else {
            Err(self.error(format!(
                "expected '{}', found {}",
                c as char,
                describe(self.peek())
            )))
        }
    }

    fn ident(&mut self) -> Result<String, TextioError> {
        let mut s = String::new();
        while let Some(c) = self.peek() {
            if c.is_ascii_alphanumeric() || c == b'_' {
                s.push(c as char);
                self.bump();
            } else {
                break;
            }
        }
        if s.is_empty() {
            Err(self.error(format!("expected a name, found {}", describe(self.peek()))))
        } else {
            Ok(s)
        }
    }

    fn integer(&mut self) -> Result<usize, TextioError> {
        let start = self.pos;
        while matches!(self.peek(), Some(c) if c.is_ascii_digit()) {
            self.bump();
        }
        if self.pos == start {
            return Err(self.error(format!(
                "expected an integer, found {}",
                describe(self.peek())
            )));
        }
        std::str::from_utf8(&self.text[start..self.pos])
            .unwrap()
            .parse()
            .map_err(|e| self.error(format!("bad integer: {e}")))
    }

    /// REAL := [+-] digits [ "." digits ] [ ("e"|"E") [+-] digits ]
    fn real(&mut self) -> Result<f64, TextioError> {
        let start = self.pos;
        if matches!(self.peek(), Some(b'+' | b'-')) {
            self.bump();
        }
        let digits_start = self.pos;
        while matches!(self.peek(), Some(c) if c.is_ascii_digit()) {
            self.bump();
        }
        if self.pos == digits_start {
            return Err(self.error(format!(
                "expected a number, found {}",
                describe(self.peek())
            )));
        }
        if self.peek() == Some(b'.') {
            self.bump();
            while matches!(self.peek(), Some(c) if c.is_ascii_digit()) {
                self.bump();
            }
        }
        if matches!(self.peek(), Some(b'e' | b'E')) {
            self.bump();
            if matches!(self.peek(), Some(b'+' | b'-')) {
                self.bump();
            }
            while matches!(self.peek(), Some(c) if c.is_ascii_digit()) {
                self.bump();
            }
        }
        std::str::from_utf8(&self.text[start..self.pos])
            .unwrap()
            .parse()
            .map_err(|e| self.error(format!("bad number: {e}")))
    }

    /// COMPLEX := REAL | REAL ("+"|"-") REAL "i"; no spaces inside.
    fn complex(&mut self) -> Result<Complex64, TextioError> {
        let re = self.real()?;
        if matches!(self.peek(), Some(b'+' | b'-')) {
            let negative = self.peek() == Some(b'-');
            self.bump();
            let magnitude = self.real()?;
            self.expect(b'i')?;
            let im = if negative { -magnitude } else { magnitude };
            Ok(Complex64::new(re, im))
        } else {
            Ok(Complex64::new(re, 0.0))
        }
    }

    /// "|BITS>" or "<BITS|"; returns the occupation index.
    fn bits(&mut self, n_modes: usize) -> Result<usize, TextioError> {
        let mut index = 0usize;
        let mut count = 0usize;
        while matches!(self.peek(), Some(b'0' | b'1')) {
            index = (index << 1) | (self.bump().unwrap() - b'0') as usize;
            count += 1;
        }
        if count != n_modes {
            return Err(self.error(format!(
                "occupation string has {count} bits, document has {n_modes} modes"
            )));
        }
        Ok(index)
    }

    fn at_end(&mut self) -> bool {
        self.skip_ws();
        self.peek().is_none()
    }
}

fn describe(c: Option<u8>) -> String {
    match c {
        Some(c) => format!("'{}'", c as char),
        None => "end of input".to_string(),
    }
}

fn family_assignments(
    cursor: &mut Cursor,
) -> Result<BTreeMap<String, Complex64>, TextioError> {
    cursor.skip_ws();
    cursor.expect(b'{')?;
    let mut values = BTreeMap::new();
    loop {
        cursor.skip_ws();
        if cursor.peek() == Some(b'}') {
            cursor.bump();
            return Ok(values);
        }
        let (line, col) = (cursor.line, cursor.col);
        let name = cursor.ident()?;
        cursor.skip_ws();
        cursor.expect(b'=')?;
        cursor.skip_ws();
        let value = cursor.complex()?;
        if values.insert(name.clone(), value).is_some() {
            return Err(TextioError::SyntaxError {
                line,
                col,
                message: format!("duplicate coefficient '{name}'"),
            });
        }
    }
}

fn take_named(
    values: &mut BTreeMap<String, Complex64>,
    prefix: char,
    index: usize,
) -> Result<Complex64, TextioError> {
    Ok(values
        .remove(&format!("{prefix}{index}"))
        .unwrap_or(Complex64::new(0.0, 0.0)))
}

fn require_real(name: &str, value: Complex64) -> Result<f64, TextioError> {
    if value.im != 0.0 {
        return Err(TextioError::SemanticError(format!(
            "diagonal coefficient {name} must be real, got imaginary part {}",
            value.im
        )));
    }
    Ok(value.re)
}

pub fn parse_state(text: &str) -> Result<StateDocument, TextioError> {
    let mut cursor = Cursor::new(text);
    cursor.skip_ws();
    let keyword = cursor.ident()?;
    if keyword != "modes" {
        return Err(cursor.error(format!("expected 'modes', found '{keyword}'")));
    }
    cursor.skip_ws();
    let n_modes = cursor.integer()?;
    if n_modes == 0 || n_modes > crate::fock::MAX_MODES {
        return Err(TextioError::SemanticError(format!(
            "mode count {n_modes} outside 1..={}",
            crate::fock::MAX_MODES
        )));
    }

    // Optional charge pattern on the header line.
    let mut charges = None;
    let save = (cursor.pos, cursor.line, cursor.col);
    cursor.skip_ws();
    if matches!(cursor.peek(), Some(c) if c.is_ascii_alphabetic()) {
        let word_pos = (cursor.pos, cursor.line, cursor.col);
        let word = cursor.ident()?;
        if word == "charges" {
            let mut list = Vec::new();
            for _ in 0..n_modes {
                cursor.skip_ws();
                list.push(cursor.integer()? as i64);
            }
            charges = Some(ChargePattern::new(list));
        } else {
            (cursor.pos, cursor.line, cursor.col) = word_pos;
        }
    } else {
        (cursor.pos, cursor.line, cursor.col) = save;
    }

    // Body: either one family block or a list of terms.
    cursor.skip_ws();
    let body = if matches!(cursor.peek(), Some(c) if c.is_ascii_alphabetic()) {
        let family = cursor.ident()?;
        let mut values = family_assignments(&mut cursor)?;
        let body = match family.as_str() {
            "two_mode" => {
                if n_modes != 2 {
                    return Err(TextioError::SemanticError(format!(
                        "two_mode family needs modes 2, document says {n_modes}"
                    )));
                }
                let mut alpha = [0.0; 4];
                for (i, a) in alpha.iter_mut().enumerate() {
                    *a = require_real(
                        &format!("a{}", i + 1),
                        take_named(&mut values, 'a', i + 1)?,
                    )?;
                }
                let mut beta = [Complex64::new(0.0, 0.0); 6];
                for (i, b) in beta.iter_mut().enumerate() {
                    *b = take_named(&mut values, 'b', i + 1)?;
                }
                StateBody::TwoMode(TwoModeCoefficients { alpha, beta })
            }
            "three_mode" => {
                if n_modes != 3 {
                    return Err(TextioError::SemanticError(format!(
                        "three_mode family needs modes 3, document says {n_modes}"
                    )));
                }
                let mut mu = [0.0; 8];
                for (i, m) in mu.iter_mut().enumerate() {
                    *m = require_real(
                        &format!("m{}", i + 1),
                        take_named(&mut values, 'm', i + 1)?,
                    )?;
                }
                let mut nu = [Complex64::new(0.0, 0.0); 6];
                for (i, n) in nu.iter_mut().enumerate() {
                    *n = take_named(&mut values, 'n', i + 1)?;
                }
                StateBody::ThreeMode(ThreeModeCoefficients { mu, nu })
            }
            other => {
                return Err(TextioError::SemanticError(format!(
                    "unknown family '{other}' (expected two_mode or three_mode)"
                )))
            }
        };
        if let Some(stray) = values.keys().next() {
            return Err(TextioError::SemanticError(format!(
                "coefficient '{stray}' does not belong to the {family} family"
            )));
        }
        body
    } else {
        let mut terms: BTreeMap<(usize, usize), Complex64> = BTreeMap::new();
        while !cursor.at_end() {
            let coeff = cursor.complex()?;
            cursor.skip_ws();
            cursor.expect(b'*')?;
            cursor.skip_ws();
            cursor.expect(b'|')?;
            let ket = cursor.bits(n_modes)?;
            cursor.expect(b'>')?;
            cursor.expect(b'<')?;
            let bra = cursor.bits(n_modes)?;
            cursor.expect(b'|')?;
            if ket == bra && coeff.im != 0.0 {
                return Err(TextioError::SemanticError(format!(
                    "diagonal term |{ket}><{ket}| must have a real coefficient"
                )));
            }
            // Hermitian closure: canonicalize to the upper triangle.
            let (key, value) = if ket <= bra {
                ((ket, bra), coeff)
            } else {
                ((bra, ket), coeff.conj())
            };
            *terms.entry(key).or_insert(Complex64::new(0.0, 0.0)) += value;
        }
        if terms.is_empty() {
            return Err(cursor.error("document has no terms"));
        }
        StateBody::Terms(terms)
    };

    if !cursor.at_end() {
        return Err(cursor.error(format!(
            "unexpected trailing input, found {}",
            describe(cursor.peek())
        )));
    }
    Ok(StateDocument {
        n_modes,
        charges,
        body,
    })
}

/// Shortest representation that parses back to the same f64.
fn fmt_number(x: f64) -> String {
    format!("{x}")
}

fn fmt_complex(z: Complex64) -> String {
    if z.im == 0.0 {
        fmt_number(z.re)
    } else if z.im < 0.0 {
        format!("{}-{}i", fmt_number(z.re), fmt_number(-z.im))
    } else {
        format!("{}+{}i", fmt_number(z.re), fmt_number(z.im))
    }
}

/// Canonical serialization; `parse_state(serialize_state(d)) == d`.
pub fn serialize_state(doc: &StateDocument) -> String {
    let mut out = format!("modes {}", doc.n_modes);
    if let Some(charges) = &doc.charges {
        out.push_str(" charges");
        for q in charges.charges() {
            let _ = write!(out, " {q}");
        }
    }
    out.push('\n');
    match &doc.body {
        StateBody::Terms(terms) => {
            for (&(ket, bra), &coeff) in terms {
                let _ = writeln!(
                    out,
                    "{} * |{}><{}|",
                    fmt_complex(coeff),
                    fmt_bits(ket, doc.n_modes),
                    fmt_bits(bra, doc.n_modes)
                );
            }
        }
        StateBody::TwoMode(c) => {
            out.push_str("two_mode {");
            for (i, a) in c.alpha.iter().enumerate() {
                let _ = write!(out, " a{}={}", i + 1, fmt_number(*a));
            }
            for (i, b) in c.beta.iter().enumerate() {
                let _ = write!(out, " b{}={}", i + 1, fmt_complex(*b));
            }
            out.push_str(" }\n");
        }
        StateBody::ThreeMode(c) => {
            out.push_str("three_mode {");
            for (i, m) in c.mu.iter().enumerate() {
                let _ = write!(out, " m{}={}", i + 1, fmt_number(*m));
            }
            for (i, n) in c.nu.iter().enumerate() {
                let _ = write!(out, " n{}={}", i + 1, fmt_complex(*n));
            }
            out.push_str(" }\n");
        }
    }
    out
}

fn fmt_bits(index: usize, n_modes: usize) -> String {
    (0..n_modes)
        .map(|k| {
            if index & (1 << (n_modes - 1 - k)) != 0 {
                '1'
            } else {
                '0'
            }
        })
        .collect()
}

/// Parse a ladder-operator string: whitespace-separated tokens `bK^`
/// (creator of mode K), `bK` (annihilator), `P0` (vacuum projector).
pub fn parse_operator_string(
    text: &str,
    n_modes: usize,
) -> Result<OperatorString, TextioError> {
    let mut factors = Vec::new();
    let mut vacuum_projector_after = None;
    let mut col = 1usize;
    for token in text.split_whitespace() {
        // Column of the token start on the (single) input line.
        col = text[..text.len() - text.trim_start().len()].len()
            + match text.find(token) {
                Some(p) => p + 1,
                None => col,
            };
        if token == "P0" {
            if vacuum_projector_after.is_some() {
                return Err(TextioError::SemanticError(
                    "operator string has more than one vacuum projector".into(),
                ));
            }
            vacuum_projector_after = Some(factors.len());
            continue;
        }
        let (body, kind) = match token.strip_suffix('^') {
            Some(body) => (body, FactorKind::Creator),
            None => (token, FactorKind::Annihilator),
        };
        let mode: usize = match body.strip_prefix('b').and_then(|d| d.parse().ok()) {
            Some(mode) => mode,
            None => {
                return Err(TextioError::SyntaxError {
                    line: 1,
                    col,
                    message: format!("unrecognized token '{token}'"),
                })
            }
        };
        if mode == 0 || mode > n_modes {
            return Err(TextioError::SemanticError(format!(
                "mode index {mode} out of range 1..={n_modes}"
            )));
        }
        factors.push(Factor { kind, mode });
    }
    Ok(OperatorString {
        factors,
        vacuum_projector_after,
    })
}

/// Canonical spacing; round-trips through `parse_operator_string`.
pub fn serialize_operator_string(s: &OperatorString) -> String {
    let mut tokens: Vec<String> = Vec::new();
    for (i, factor) in s.factors.iter().enumerate() {
        if s.vacuum_projector_after == Some(i) {
            tokens.push("P0".into());
        }
        tokens.push(match factor.kind {
            FactorKind::Creator => format!("b{}^", factor.mode),
            FactorKind::Annihilator => format!("b{}", factor.mode),
        });
    }
    if s.vacuum_projector_after == Some(s.factors.len()) {
        tokens.push("P0".into());
    }
    tokens.join(" ")
}

/// 12 significant digits, deterministic across runs.
fn fmt_report_float(x: f64) -> String {
    if x == 0.0 {
        "0".to_string()
    } else {
        format!("{x:.11e}")
    }
}

fn push_kv(out: &mut String, key: &str, value: impl AsRef<str>) {
    let _ = writeln!(out, "{key} = {}", value.as_ref());
}

fn fmt_mode_list(modes: &[usize]) -> String {
    let inner: Vec<String> = modes.iter().map(|m| m.to_string()).collect();
    format!("[{}]", inner.join(" "))
}

fn fmt_optional(value: Option<f64>) -> String {
    match value {
        Some(v) => fmt_report_float(v),
        None => "none".to_string(),
    }
}

/// Structured text report for an entanglement evaluation.
pub fn emit_entanglement_report(r: &EntanglementReport) -> String {
    let mut out = String::new();
    push_kv(&mut out, "schema", REPORT_SCHEMA);
    push_kv(&mut out, "kind", "entanglement");
    push_kv(&mut out, "partition.kept", fmt_mode_list(r.partition.kept()));
    push_kv(
        &mut out,
        "partition.traced",
        fmt_mode_list(r.partition.traced()),
    );
    push_kv(
        &mut out,
        "entropy_of_entanglement_bits",
        fmt_optional(r.entropy_of_entanglement),
    );
    push_kv(&mut out, "negativity", fmt_optional(r.negativity));
    push_kv(&mut out, "concurrence", fmt_optional(r.concurrence));
    push_kv(&mut out, "eof_wootters_bits", fmt_optional(r.eof_wootters));
    push_kv(
        &mut out,
        "eof_ssr_upper_bound_bits",
        fmt_optional(r.eof_ssr_estimate),
    );
    push_kv(&mut out, "bound_chain_ok", r.bound_chain_ok.to_string());
    push_kv(
        &mut out,
        "note",
        r.note.as_deref().unwrap_or("none"),
    );
    out
}

/// Structured text report for a mapping-search verdict.
pub fn emit_mapping_report(v: &MappingVerdict) -> String {
    let mut out = String::new();
    push_kv(&mut out, "schema", REPORT_SCHEMA);
    push_kv(&mut out, "kind", "mapping");
    push_kv(&mut out, "exists", v.exists.to_string());
    push_kv(&mut out, "witness_count", v.witnesses.len().to_string());
    for (i, w) in v.witnesses.iter().enumerate() {
        let signs: String = w
            .signs()
            .iter()
            .map(|&s| if s > 0 { '+' } else { '-' })
            .collect();
        push_kv(&mut out, &format!("witness.{i}"), signs);
    }
    push_kv(
        &mut out,
        "obstruction",
        if v.obstruction.is_empty() {
            "none"
        } else {
            &v.obstruction
        },
    );
    out
}

/// Matrix block for reports, rows in the occupation basis order.
pub fn format_matrix(m: &ComplexMatrix) -> String {
    let mut out = String::new();
    for r in 0..m.rows() {
        let row: Vec<String> = (0..m.cols()).map(|c| fmt_complex_fixed(m.get(r, c))).collect();
        let _ = writeln!(out, "[{}]", row.join("  "));
    }
    out
}

fn fmt_complex_fixed(z: Complex64) -> String {
    format!(
        "{}{}{}i",
        fmt_report_float(z.re),
        if z.im < 0.0 { "-" } else { "+" },
        fmt_report_float(z.im.abs())
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mapping::{consistent_mapping_search, single_mode_partitions, SparsityPattern};
    use crate::states::random_state;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn parse_vacuum_term() {
        let doc = parse_state("modes 1\n1.0 * |0><0|").unwrap();
        assert_eq!(doc.n_modes, 1);
        let rho = doc.assemble().unwrap();
        assert_eq!(rho.matrix().get(0, 0).re, 1.0);
        assert_eq!(rho.matrix().get(1, 1).re, 0.0);
    }

    #[test]
    fn parse_bell_family() {
        let doc = parse_state("modes 2\ntwo_mode { a2=0.5 a3=0.5 b4=0.5 }").unwrap();
        let rho = doc.assemble().unwrap();
        assert_eq!(rho.matrix().get(1, 1).re, 0.5);
        assert_eq!(rho.matrix().get(1, 2).re, 0.5);
        assert_eq!(rho.matrix().get(2, 1).re, 0.5);
        assert!(rho.is_pure());
    }

    #[test]
    fn parse_rejects_non_psd() {
        let doc = parse_state("modes 2\ntwo_mode { a1=1 b1=0.5 }").unwrap();
        assert!(matches!(
            doc.assemble(),
            Err(TextioError::SemanticError(_))
        ));
    }

    #[test]
    fn parse_charges_header() {
        let doc = parse_state("modes 2 charges 1 1\ntwo_mode { a2=0.5 a3=0.5 }").unwrap();
        assert_eq!(doc.charges, Some(ChargePattern::new(vec![1, 1])));
    }

    #[test]
    fn hermitian_closure_canonicalizes_lower_triangle() {
        let upper = parse_state("modes 2\n0.5 * |00><00|\n0.5 * |11><11|\n0.25+0.1i * |00><11|")
            .unwrap();
        let lower = parse_state("modes 2\n0.5 * |00><00|\n0.5 * |11><11|\n0.25-0.1i * |11><00|")
            .unwrap();
        assert_eq!(upper, lower);
        let rho = upper.assemble().unwrap();
        assert_eq!(rho.matrix().get(0, 3), Complex64::new(0.25, 0.1));
        assert_eq!(rho.matrix().get(3, 0), Complex64::new(0.25, -0.1));
    }

    #[test]
    fn parse_complex_forms() {
        let doc = parse_state("modes 1\n0.5 * |0><0|\n0.5 * |1><1|\n0.1-2e-2i * |0><1|").unwrap();
        if let StateBody::Terms(terms) = &doc.body {
            assert_eq!(terms[&(0, 1)], Complex64::new(0.1, -0.02));
        } else {
            panic!("expected terms");
        }
    }

    #[test]
    fn syntax_errors_are_positioned() {
        let err = parse_state("modes 2\n0.5 * |00>!<00|").unwrap_err();
        match err {
            TextioError::SyntaxError { line, col, .. } => {
                assert_eq!(line, 2);
                assert_eq!(col, 11);
            }
            other => panic!("expected syntax error, got {other:?}"),
        }
    }

    #[test]
    fn malformed_corpus_never_panics() {
        let corpus = [
            "",
            "modes",
            "modes 0",
            "modes two",
            "modes 2\n",
            "modes 2\nfoo { a1=1 }",
            "modes 2\ntwo_mode { a1=1 a1=1 }",
            "modes 2\ntwo_mode { z9=1 }",
            "modes 2\ntwo_mode { a1=1+1i }",
            "modes 2\n0.5 * |0><0|",
            "modes 2\n0.5 * |000><000|",
            "modes 2\n0.5 |00><00|",
            "modes 2\n0.5 * |00><00",
            "modes 2\n0.5 * |00><00| extra",
            "modes 3\ntwo_mode { a1=1 }",
            "modes 2 charges 1\ntwo_mode { a1=1 }",
            "modes 1\n0.5+i * |0><0|",
            "modes 1\n0.1i * |0><1|",
        ];
        for (i, text) in corpus.iter().enumerate() {
            assert!(parse_state(text).is_err(), "case {i} parsed: {text:?}");
        }
    }

    #[test]
    fn diagonal_terms_must_be_real() {
        assert!(matches!(
            parse_state("modes 1\n0.5+0.5i * |0><0|"),
            Err(TextioError::SemanticError(_))
        ));
    }

    fn random_document(seed: u64) -> StateDocument {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n_modes = rng.gen_range(1..=3);
        let charges = if rng.gen_bool(0.5) {
            Some(ChargePattern::new(
                (0..n_modes).map(|_| rng.gen_range(0..3)).collect(),
            ))
        } else {
            None
        };
        let body = match rng.gen_range(0..3) {
            0 => {
                let dim = 1usize << n_modes;
                let mut terms = BTreeMap::new();
                for _ in 0..rng.gen_range(1..=6) {
                    let ket = rng.gen_range(0..dim);
                    let bra = rng.gen_range(ket..dim);
                    let coeff = if ket == bra {
                        Complex64::new(rng.gen_range(-1.0..1.0), 0.0)
                    } else {
                        Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
                    };
                    terms.insert((ket, bra), coeff);
                }
                StateBody::Terms(terms)
            }
            1 => StateBody::TwoMode(TwoModeCoefficients {
                alpha: std::array::from_fn(|_| rng.gen_range(-1.0..1.0)),
                beta: std::array::from_fn(|_| {
                    Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
                }),
            }),
            _ => StateBody::ThreeMode(ThreeModeCoefficients {
                mu: std::array::from_fn(|_| rng.gen_range(-1.0..1.0)),
                nu: std::array::from_fn(|_| {
                    Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
                }),
            }),
        };
        let n_modes = match &body {
            StateBody::TwoMode(_) => 2,
            StateBody::ThreeMode(_) => 3,
            StateBody::Terms(_) => n_modes,
        };
        let charges = charges.filter(|c| c.n_modes() == n_modes);
        StateDocument {
            n_modes,
            charges,
            body,
        }
    }

    #[test]
    fn parse_serialize_roundtrip() {
        for seed in 0..100u64 {
            let doc = random_document(seed);
            let text = serialize_state(&doc);
            let reparsed = parse_state(&text)
                .unwrap_or_else(|e| panic!("seed {seed}: {e}\n{text}"));
            assert_eq!(reparsed, doc, "seed {seed}\n{text}");
        }
    }

    #[test]
    fn operator_string_roundtrip() {
        for text in ["b1^ P0 b1", "b2^ b1^ P0 b1 b2", "b1 b2", "P0", ""] {
            let parsed = parse_operator_string(text, 3).unwrap();
            assert_eq!(serialize_operator_string(&parsed), text);
        }
    }

    #[test]
    fn operator_string_examples() {
        let s = parse_operator_string("b2^ b1^ P0 b1 b2", 2).unwrap();
        assert_eq!(s.factors.len(), 4);
        assert_eq!(s.vacuum_projector_after, Some(2));
        assert_eq!(s.factors[0].kind, FactorKind::Creator);
        assert_eq!(s.factors[0].mode, 2);
        assert_eq!(s.factors[3].kind, FactorKind::Annihilator);
    }

    #[test]
    fn operator_string_index_range() {
        assert!(matches!(
            parse_operator_string("b3^ P0", 2),
            Err(TextioError::SemanticError(_))
        ));
        assert!(matches!(
            parse_operator_string("qq", 2),
            Err(TextioError::SyntaxError { .. })
        ));
    }

    #[test]
    fn reports_are_deterministic() {
        let verdict = consistent_mapping_search(
            2,
            &SparsityPattern::from_charges(&ChargePattern::equal(2)),
            &single_mode_partitions(2),
        );
        let a = emit_mapping_report(&verdict);
        let b = emit_mapping_report(&verdict);
        assert_eq!(a, b);
        assert!(a.contains("exists = true"));
        assert!(a.contains("witness_count = 8"));
        assert!(a.starts_with(&format!("schema = {REPORT_SCHEMA}\n")));
    }

    #[test]
    fn entanglement_report_rendering() {
        use crate::entanglement::{full_report, SsrEofBudget};
        use crate::trace::ModePartition;
        let verdict = consistent_mapping_search(
            2,
            &SparsityPattern::from_charges(&ChargePattern::equal(2)),
            &single_mode_partitions(2),
        );
        let rho = random_state(2, 2, 8, Some(&ChargePattern::equal(2)));
        let p = ModePartition::trace_out(2, &[2]).unwrap();
        let budget = SsrEofBudget {
            restarts: 2,
            iterations: 50,
            seed: 1,
        };
        let report = full_report(&rho, &p, &verdict, Some(&ChargePattern::equal(2)), &budget)
            .unwrap();
        let text = emit_entanglement_report(&report);
        assert!(text.contains("kind = entanglement"));
        assert!(text.contains("partition.kept = [1]"));
        assert!(text.contains("bound_chain_ok = true"));
        // Floats carry 12 significant digits.
        for line in text.lines() {
            if let Some(value) = line.strip_prefix("negativity = ") {
                assert!(value.contains('e') || value == "0" || value == "none");
            }
        }
        assert_eq!(text, emit_entanglement_report(&report));
    }

    #[test]
    fn matrix_rendering_shape() {
        let m = ComplexMatrix::identity(2);
        let text = format_matrix(&m);
        assert_eq!(text.lines().count(), 2);
        assert!(text.starts_with("[1.00000000000e0+0i"));
    }
}
