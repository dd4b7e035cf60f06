use crate::seq::BitSeq;
use std::fmt::Write as _;
use thiserror::Error;

/// Character alphabet of a matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Alphabet {
    /// ±1, written `+` / `-`.
    Cfn,
    /// Nucleotides, stored as 0..4 = A, C, G, T.
    Jc,
}

/// Per-leaf sequences.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Rows {
    Cfn(Vec<BitSeq>),
    Jc(Vec<Vec<u8>>),
}

/// Leaf sequences of common length `k`, one row per leaf label.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CharacterMatrix {
    k: usize,
    labels: Vec<u32>,
    rows: Rows,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MatrixError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("rows have inconsistent lengths")]
    Ragged,
}

const NUC: [char; 4] = ['A', 'C', 'G', 'T'];

impl CharacterMatrix {
    pub fn new(labels: Vec<u32>, rows: Rows) -> Result<Self, MatrixError> {
        let (count, k) = match &rows {
            Rows::Cfn(r) => (r.len(), r.first().map_or(0, |s| s.len())),
            Rows::Jc(r) => (r.len(), r.first().map_or(0, |s| s.len())),
        };
        let uniform = match &rows {
            Rows::Cfn(r) => r.iter().all(|s| s.len() == k),
            Rows::Jc(r) => r.iter().all(|s| s.len() == k),
        };
        if count != labels.len() || !uniform {
            return Err(MatrixError::Ragged);
        }
        Ok(CharacterMatrix { k, labels, rows })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn n(&self) -> usize {
        self.labels.len()
    }

    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    pub fn rows(&self) -> &Rows {
        &self.rows
    }

    pub fn alphabet(&self) -> Alphabet {
        match self.rows {
            Rows::Cfn(_) => Alphabet::Cfn,
            Rows::Jc(_) => Alphabet::Jc,
        }
    }

    /// ±1 row of the `i`-th leaf, if the matrix is CFN.
    pub fn cfn_row(&self, i: usize) -> Option<&BitSeq> {
        match &self.rows {
            Rows::Cfn(r) => r.get(i),
            Rows::Jc(_) => None,
        }
    }

    /// Text form: a `k=<int> alphabet=<CFN|JC>` header, then one
    /// `<label>\t<sequence>` line per leaf.
    pub fn to_text(&self) -> String {
        let mut out = String::with_capacity(self.labels.len() * (self.k + 8) + 32);
        let name = match self.alphabet() {
            Alphabet::Cfn => "CFN",
            Alphabet::Jc => "JC",
        };
        writeln!(out, "k={} alphabet={}", self.k, name).unwrap();
        for (i, l) in self.labels.iter().enumerate() {
            write!(out, "{l}\t").unwrap();
            match &self.rows {
                Rows::Cfn(r) => {
                    for t in 0..self.k {
                        out.push(if r[i].get(t) > 0 { '+' } else { '-' });
                    }
                }
                Rows::Jc(r) => out.extend(r[i].iter().map(|&s| NUC[s as usize])),
            }
            out.push('\n');
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self, MatrixError> {
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let (_, header) = lines.next().ok_or(MatrixError::Parse { line: 1, message: "empty input".into() })?;
        let mut k = None;
        let mut alphabet = None;
        for field in header.split_whitespace() {
            if let Some(v) = field.strip_prefix("k=") {
                k = v.parse::<usize>().ok();
            } else if let Some(v) = field.strip_prefix("alphabet=") {
                alphabet = match v {
                    "CFN" => Some(Alphabet::Cfn),
                    "JC" => Some(Alphabet::Jc),
                    _ => None,
                };
            }
        }
        let bad_header = || MatrixError::Parse { line: 1, message: format!("bad header '{header}'") };
        let k = k.ok_or_else(bad_header)?;
        let alphabet = alphabet.ok_or_else(bad_header)?;
        let mut labels = Vec::new();
        let mut cfn = Vec::new();
        let mut jc = Vec::new();
        for (idx, line) in lines {
            let err = |message: String| MatrixError::Parse { line: idx + 1, message };
            let (lab, seq) = line.split_once('\t').ok_or_else(|| err("expected '<label>\\t<sequence>'".into()))?;
            let lab: u32 = lab.trim().parse().map_err(|_| err(format!("bad label '{lab}'")))?;
            let seq = seq.trim();
            if seq.len() != k {
                return Err(err(format!("sequence length {} differs from k = {k}", seq.len())));
            }
            match alphabet {
                Alphabet::Cfn => {
                    let mut s = BitSeq::minus_ones(k);
                    for (t, c) in seq.bytes().enumerate() {
                        match c {
                            b'+' => s.set(t, 1),
                            b'-' => {}
                            _ => return Err(err(format!("invalid CFN character '{}'", c as char))),
                        }
                    }
                    cfn.push(s);
                }
                Alphabet::Jc => {
                    let mut s = Vec::with_capacity(k);
                    for c in seq.bytes() {
                        s.push(match c {
                            b'A' => 0,
                            b'C' => 1,
                            b'G' => 2,
                            b'T' => 3,
                            _ => return Err(err(format!("invalid nucleotide '{}'", c as char))),
                        });
                    }
                    jc.push(s);
                }
            }
            labels.push(lab);
        }
        let rows = match alphabet {
            Alphabet::Cfn => Rows::Cfn(cfn),
            Alphabet::Jc => Rows::Jc(jc),
        };
        let m = CharacterMatrix::new(labels, rows)?;
        if m.k != k && m.n() > 0 {
            return Err(MatrixError::Ragged);
        }
        Ok(CharacterMatrix { k, ..m })
    }
}
