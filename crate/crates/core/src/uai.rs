//! Reading and writing graphical models in the UAI `MARKOV` text format.
//!
//! A file lists the variable count, per-variable cardinalities, the scopes of
//! all factors and then one flat table per scope. Tables are row-major over
//! the scope's state tuples with the last scope variable varying fastest.
//! Values are unnormalised potentials; [`to_energies`] maps them to energies
//! by taking the negative natural logarithm.
//!
//! `//` starts a comment running to the end of the line, so annotated
//! examples parse the same as plain files.

use std::fmt::Write as _;

use thiserror::Error;

use crate::mrf::{MrfError, MrfInstance};

/// Epsilon substituted for non-positive potentials when clamping is enabled.
pub const DEFAULT_CLAMP: f64 = 1e-30;

#[derive(Debug, Error, PartialEq)]
pub enum UaiError {
    #[error("line {line}: expected preamble MARKOV, found `{found}`")]
    UnknownPreamble { line: usize, found: String },
    #[error("unexpected end of file while reading {what}")]
    TruncatedFile { what: &'static str },
    #[error("line {line}: table {table} declares {declared} values but {expected} are {reason}")]
    TableSizeMismatch {
        line: usize,
        table: usize,
        declared: usize,
        expected: usize,
        reason: &'static str,
    },
    #[error("line {line}: variable index {index} out of range for {n_vars} variables")]
    IndexOutOfRange {
        line: usize,
        index: usize,
        n_vars: usize,
    },
    #[error("line {line}: invalid token `{token}` ({what})")]
    InvalidToken {
        line: usize,
        token: String,
        what: &'static str,
    },
    #[error("line {line}: variable {index} repeated in scope {scope}")]
    DuplicateScopeIndex {
        line: usize,
        scope: usize,
        index: usize,
    },
    #[error("line {line}: empty scope for factor {scope}")]
    EmptyScope { line: usize, scope: usize },
    #[error("line {line}: unexpected trailing token `{token}`")]
    TrailingTokens { line: usize, token: String },
    #[error("factor {factor} entry {entry} has non-positive potential {value}")]
    NonPositivePotential {
        factor: usize,
        entry: usize,
        value: f64,
    },
    #[error("energy {value} of factor {factor} cannot be represented as a positive potential")]
    EnergyOutOfRange { factor: usize, value: f64 },
    #[error(transparent)]
    Model(#[from] MrfError),
}

/// A model as stored in a UAI file: scopes in file order and raw potentials.
#[derive(Debug, Clone, PartialEq)]
pub struct RawModel {
    pub cardinalities: Vec<usize>,
    pub scopes: Vec<Vec<usize>>,
    pub potentials: Vec<Vec<f64>>,
}

impl RawModel {
    pub fn n_vars(&self) -> usize {
        self.cardinalities.len()
    }

    /// Expected table length for scope `k`.
    pub fn table_len(&self, k: usize) -> usize {
        self.scopes[k]
            .iter()
            .map(|&v| self.cardinalities[v])
            .product()
    }
}

struct Tokens<'a> {
    items: Vec<(usize, &'a str)>,
    pos: usize,
}

impl<'a> Tokens<'a> {
    fn new(text: &'a str) -> Self {
        let mut items = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let body = match line.find("//") {
                Some(cut) => &line[..cut],
                None => line,
            };
            items.extend(body.split_whitespace().map(|t| (lineno + 1, t)));
        }
        Tokens { items, pos: 0 }
    }

    fn next(&mut self, what: &'static str) -> Result<(usize, &'a str), UaiError> {
        let tok = self
            .items
            .get(self.pos)
            .copied()
            .ok_or(UaiError::TruncatedFile { what })?;
        self.pos += 1;
        Ok(tok)
    }

    fn peek_line(&self) -> usize {
        self.items
            .get(self.pos)
            .or_else(|| self.items.last())
            .map_or(0, |t| t.0)
    }

    fn usize(&mut self, what: &'static str) -> Result<(usize, usize), UaiError> {
        let (line, tok) = self.next(what)?;
        tok.parse::<usize>()
            .map(|v| (line, v))
            .map_err(|_| UaiError::InvalidToken {
                line,
                token: tok.to_string(),
                what,
            })
    }

    fn f64(&mut self, what: &'static str) -> Result<f64, UaiError> {
        let (line, tok) = self.next(what)?;
        match tok.parse::<f64>() {
            Ok(v) if v.is_finite() && v >= 0.0 => Ok(v),
            _ => Err(UaiError::InvalidToken {
                line,
                token: tok.to_string(),
                what,
            }),
        }
    }
}

/// Parses a `MARKOV` model.
pub fn parse_uai(text: &str) -> Result<RawModel, UaiError> {
    let mut toks = Tokens::new(text);
    let (line, pre) = toks.next("preamble")?;
    if pre != "MARKOV" {
        return Err(UaiError::UnknownPreamble {
            line,
            found: pre.to_string(),
        });
    }
    let (_, n_vars) = toks.usize("variable count")?;
    let mut cardinalities = Vec::with_capacity(n_vars);
    for _ in 0..n_vars {
        let (line, c) = toks.usize("cardinality")?;
        if c == 0 {
            return Err(UaiError::InvalidToken {
                line,
                token: "0".into(),
                what: "cardinality must be at least 1",
            });
        }
        cardinalities.push(c);
    }
    let (_, n_scopes) = toks.usize("factor count")?;
    let mut scopes = Vec::with_capacity(n_scopes);
    for k in 0..n_scopes {
        let (line, size) = toks.usize("scope size")?;
        if size == 0 {
            return Err(UaiError::EmptyScope { line, scope: k });
        }
        let mut scope = Vec::with_capacity(size);
        for _ in 0..size {
            let (line, v) = toks.usize("scope variable")?;
            if v >= n_vars {
                return Err(UaiError::IndexOutOfRange {
                    line,
                    index: v,
                    n_vars,
                });
            }
            if scope.contains(&v) {
                return Err(UaiError::DuplicateScopeIndex {
                    line,
                    scope: k,
                    index: v,
                });
            }
            scope.push(v);
        }
        scopes.push(scope);
    }
    let mut potentials = Vec::with_capacity(n_scopes);
    for (k, scope) in scopes.iter().enumerate() {
        let expected: usize = scope.iter().map(|&v| cardinalities[v]).product();
        let (line, declared) = toks.usize("table size")?;
        if declared != expected {
            return Err(UaiError::TableSizeMismatch {
                line,
                table: k,
                declared,
                expected,
                reason: "required by the scope",
            });
        }
        let mut table = Vec::with_capacity(declared);
        for _ in 0..declared {
            if toks.pos >= toks.items.len() {
                return Err(UaiError::TableSizeMismatch {
                    line,
                    table: k,
                    declared,
                    expected: table.len(),
                    reason: "present",
                });
            }
            table.push(toks.f64("potential value")?);
        }
        potentials.push(table);
    }
    if toks.pos < toks.items.len() {
        let line = toks.peek_line();
        let (_, tok) = toks.next("trailing")?;
        return Err(UaiError::TrailingTokens {
            line,
            token: tok.to_string(),
        });
    }
    Ok(RawModel {
        cardinalities,
        scopes,
        potentials,
    })
}

/// Formats a value with the shortest representation that parses back to the
/// same `f64`.
fn fmt_value(out: &mut String, v: f64) {
    let _ = write!(out, "{v:?}");
}

/// Writes a model in the UAI `MARKOV` format.
pub fn write_uai(model: &RawModel) -> String {
    let mut out = String::new();
    out.push_str("MARKOV\n");
    let _ = writeln!(out, "{}", model.n_vars());
    let cards: Vec<String> = model.cardinalities.iter().map(|c| c.to_string()).collect();
    let _ = writeln!(out, "{}", cards.join(" "));
    let _ = writeln!(out, "{}", model.scopes.len());
    for scope in &model.scopes {
        let _ = write!(out, "{}", scope.len());
        for v in scope {
            let _ = write!(out, " {v}");
        }
        out.push('\n');
    }
    for table in &model.potentials {
        let _ = write!(out, "\n{}\n", table.len());
        for (i, &v) in table.iter().enumerate() {
            if i > 0 {
                out.push(' ');
            }
            fmt_value(&mut out, v);
        }
        out.push('\n');
    }
    out
}

/// Converts potentials to energies, `theta = -ln(P)`.
///
/// With `clamp = Some(eps)`, potentials `<= 0` are replaced by `eps` before
/// the logarithm; otherwise they are rejected.
pub fn to_energies(model: &RawModel, clamp: Option<f64>) -> Result<MrfInstance, UaiError> {
    let mut factors = Vec::with_capacity(model.scopes.len());
    for (k, (scope, table)) in model.scopes.iter().zip(&model.potentials).enumerate() {
        let mut energies = Vec::with_capacity(table.len());
        for (e, &p) in table.iter().enumerate() {
            let p = match (p > 0.0, clamp) {
                (true, _) => p,
                (false, Some(eps)) => eps,
                (false, None) => {
                    return Err(UaiError::NonPositivePotential {
                        factor: k,
                        entry: e,
                        value: p,
                    })
                }
            };
            energies.push(0.0 - p.ln());
        }
        factors.push((scope.clone(), energies));
    }
    Ok(MrfInstance::from_factors(
        model.cardinalities.clone(),
        factors,
    )?)
}

/// Converts an energy model back to potentials, `P = exp(-theta)`, for
/// export to solvers that read UAI files.
///
/// Unary vectors that are identically zero are omitted. Energies whose
/// potential would underflow to zero or overflow are rejected.
pub fn from_energies(inst: &MrfInstance) -> Result<RawModel, UaiError> {
    let mut scopes = Vec::new();
    let mut potentials = Vec::new();
    let mut push = |factor: usize, scope: Vec<usize>, energies: &[f64]| {
        let mut table = Vec::with_capacity(energies.len());
        for &e in energies {
            let p = (-e).exp();
            if !(p.is_normal()) {
                return Err(UaiError::EnergyOutOfRange { factor, value: e });
            }
            table.push(p);
        }
        scopes.push(scope);
        potentials.push(table);
        Ok(())
    };
    let mut factor = 0;
    for (i, u) in inst.unary.iter().enumerate() {
        if u.iter().any(|&e| e != 0.0) {
            push(factor, vec![i], u)?;
            factor += 1;
        }
    }
    for c in &inst.cliques {
        push(factor, c.scope.clone(), &c.table)?;
        factor += 1;
    }
    Ok(RawModel {
        cardinalities: inst.cardinalities.clone(),
        scopes,
        potentials,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) const EXAMPLE: &str = "MARKOV //Instance type
3 //Number of variables
2 2 2 //State number of each variable
5 //Number of cliques that has potentials
1 0 //1 means this clique is a variable
1 1
1 2
2 0 1 //2 means this clique is an edge
3 0 1 2

2 //two values
0.1 0.9 //potential of variable 0

2
0.1 10

2
0.5 0.5

4
0.1 1.0 1.0 0.1 //(0,0), (0,1), (1,0) and (1,1)

8
0.1 2.0 0.1 0.1 0.1 0.1 0.1 2.0
";

    #[test]
    fn parses_annotated_example() {
        let m = parse_uai(EXAMPLE).unwrap();
        assert_eq!(m.cardinalities, vec![2, 2, 2]);
        assert_eq!(
            m.scopes,
            vec![vec![0], vec![1], vec![2], vec![0, 1], vec![0, 1, 2]]
        );
        assert_eq!(
            m.potentials,
            vec![
                vec![0.1, 0.9],
                vec![0.1, 10.0],
                vec![0.5, 0.5],
                vec![0.1, 1.0, 1.0, 0.1],
                vec![0.1, 2.0, 0.1, 0.1, 0.1, 0.1, 0.1, 2.0],
            ]
        );
    }

    #[test]
    fn smallest_model() {
        let m = parse_uai("MARKOV\n1\n2\n1\n1 0\n2\n1 1").unwrap();
        assert_eq!(m.n_vars(), 1);
        assert_eq!(m.potentials, vec![vec![1.0, 1.0]]);
    }

    #[test]
    fn short_table() {
        let err = parse_uai("MARKOV\n2\n2 2\n1\n2 0 1\n4\n0.1 0.2 0.3").unwrap_err();
        assert!(matches!(
            err,
            UaiError::TableSizeMismatch { declared: 4, .. }
        ));
        let err = parse_uai("MARKOV\n2\n2 2\n1\n2 0 1\n3\n0.1 0.2 0.3").unwrap_err();
        assert!(matches!(
            err,
            UaiError::TableSizeMismatch {
                declared: 3,
                expected: 4,
                ..
            }
        ));
    }

    #[test]
    fn error_paths() {
        assert!(matches!(
            parse_uai("BAYES\n1\n2\n0\n"),
            Err(UaiError::UnknownPreamble { line: 1, .. })
        ));
        assert!(matches!(
            parse_uai("MARKOV\n2\n2"),
            Err(UaiError::TruncatedFile { .. })
        ));
        assert!(matches!(
            parse_uai("MARKOV\n2\n2 2\n1\n2 0 5\n4\n1 1 1 1"),
            Err(UaiError::IndexOutOfRange {
                line: 5,
                index: 5,
                ..
            })
        ));
        assert!(matches!(
            parse_uai("MARKOV\n2\n2 2\n1\n2 1 1\n4\n1 1 1 1"),
            Err(UaiError::DuplicateScopeIndex { .. })
        ));
        assert!(matches!(
            parse_uai("MARKOV\n1\n2\n1\n1 0\n2\n1 x"),
            Err(UaiError::InvalidToken { line: 7, .. })
        ));
        assert!(matches!(
            parse_uai("MARKOV\n1\n2\n1\n1 0\n2\n1 1 7"),
            Err(UaiError::TrailingTokens { .. })
        ));
    }

    #[test]
    fn whitespace_insensitive() {
        let a = parse_uai("MARKOV 1 2 1 1 0 2 1 1").unwrap();
        let b = parse_uai("MARKOV\r\n\t1\n\n 2 \n1\n1   0\n2\n1\n1\n").unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn write_then_parse_example() {
        let m = parse_uai(EXAMPLE).unwrap();
        let text = write_uai(&m);
        assert_eq!(parse_uai(&text).unwrap(), m);
        let single = parse_uai("MARKOV\n1\n2\n1\n1 0\n2\n1 1").unwrap();
        let text = write_uai(&single);
        assert!(text.ends_with("\n2\n1.0 1.0\n"));
    }

    #[test]
    fn awkward_values_survive() {
        let m = RawModel {
            cardinalities: vec![3],
            scopes: vec![vec![0]],
            potentials: vec![vec![0.30000000000000004, 1e-300, 1.7976931348623157e308]],
        };
        let back = parse_uai(&write_uai(&m)).unwrap();
        for (a, b) in back.potentials[0].iter().zip(&m.potentials[0]) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn energy_transform() {
        let m = parse_uai(EXAMPLE).unwrap();
        let inst = to_energies(&m, None).unwrap();
        let edge = &inst.cliques[0];
        assert_eq!(edge.scope, vec![0, 1]);
        let ln10 = std::f64::consts::LN_10;
        assert!((edge.table[0] - ln10).abs() < 1e-12);
        assert_eq!(edge.table[1], 0.0);
        assert_eq!(edge.table[2], 0.0);
        assert!((edge.table[3] - ln10).abs() < 1e-12);
        // potential 10 on variable 1, state 1
        assert!((inst.unary[1][1] + std::f64::consts::LN_10).abs() < 1e-12);
    }

    #[test]
    fn non_positive_requires_clamp() {
        let m = parse_uai("MARKOV\n1\n2\n1\n1 0\n2\n0 1").unwrap();
        assert!(matches!(
            to_energies(&m, None),
            Err(UaiError::NonPositivePotential { entry: 0, .. })
        ));
        let inst = to_energies(&m, Some(DEFAULT_CLAMP)).unwrap();
        assert!((inst.unary[0][0] - 30.0 * std::f64::consts::LN_10).abs() < 1e-9);
    }

    #[test]
    fn export_roundtrip_energies() {
        let m = parse_uai(EXAMPLE).unwrap();
        let inst = to_energies(&m, None).unwrap();
        let back = to_energies(
            &parse_uai(&write_uai(&from_energies(&inst).unwrap())).unwrap(),
            None,
        )
        .unwrap();
        assert_eq!(back.cliques.len(), inst.cliques.len());
        for (a, b) in back.unary.iter().flatten().zip(inst.unary.iter().flatten()) {
            assert!((a - b).abs() < 1e-12);
        }
        for (a, b) in back.cliques.iter().zip(&inst.cliques) {
            for (x, y) in a.table.iter().zip(&b.table) {
                assert!((x - y).abs() < 1e-12);
            }
        }
    }
}
