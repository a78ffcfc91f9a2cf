//! Graded nilpotent Lie algebras: validation, presets, the text format and the
//! exact Baker–Campbell–Hausdorff product.

use std::fmt;
use std::path::Path;
use std::sync::OnceLock;

use num_traits::{One, Zero};

use super::poly::{rational, Poly, Rational};
use crate::error::{Error, Result};

/// Structure constants `[X_i, X_j] = Σ_k c_{ijk} X_k` together with the
/// dilation weights of an adapted basis.
#[derive(Clone)]
pub struct GradedLieAlgebra {
    name: String,
    basis_names: Vec<String>,
    weights: Vec<u32>,
    structure: Vec<Rational>,
    step: u32,
    bch: OnceLock<Vec<Poly>>,
}

impl fmt::Debug for GradedLieAlgebra {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("GradedLieAlgebra")
            .field("name", &self.name)
            .field("weights", &self.weights)
            .field("step", &self.step)
            .finish()
    }
}

impl PartialEq for GradedLieAlgebra {
    fn eq(&self, other: &Self) -> bool {
        self.weights == other.weights && self.structure == other.structure
    }
}

impl GradedLieAlgebra {
    /// Builds and validates an algebra from weights and nonzero brackets
    /// `(i, j, k, c)` meaning `[X_i, X_j] ∋ c·X_k` (0-based). Antisymmetric
    /// partners are filled in; an explicitly given partner must agree.
    pub fn new(
        name: impl Into<String>,
        weights: Vec<u32>,
        brackets: &[(usize, usize, usize, Rational)],
    ) -> Result<Self> {
        let n = weights.len();
        if n == 0 {
            return Err(Error::input("algebra must have positive dimension"));
        }
        if weights.iter().any(|&w| w == 0) {
            return Err(Error::input("weights must be positive integers"));
        }
        let mut structure = vec![Rational::zero(); n * n * n];
        let idx = |i: usize, j: usize, k: usize| (i * n + j) * n + k;
        let mut given = vec![false; n * n * n];
        for &(i, j, k, c) in brackets {
            if i >= n || j >= n || k >= n {
                return Err(Error::input(format!("bracket index out of range: ({i}, {j}, {k})")));
            }
            if i == j && !c.is_zero() {
                return Err(Error::input(format!("antisymmetry violated: [X{0}, X{0}] must vanish", i + 1)));
            }
            for (a, b, v) in [(i, j, c), (j, i, -c)] {
                let slot = idx(a, b, k);
                if given[slot] && structure[slot] != v {
                    return Err(Error::input(format!(
                        "antisymmetry violated for brackets of X{} and X{}",
                        i + 1,
                        j + 1
                    )));
                }
                given[slot] = true;
                structure[slot] = v;
            }
        }
        let basis_names = (1..=n).map(|i| format!("e{i}")).collect();
        let mut alg = GradedLieAlgebra {
            name: name.into(),
            basis_names,
            weights,
            structure,
            step: 0,
            bch: OnceLock::new(),
        };
        alg.validate()?;
        alg.step = alg.compute_step();
        let max_w = *alg.weights.iter().max().expect("nonempty");
        if alg.step > max_w {
            return Err(Error::input(format!("step {} exceeds the largest weight {max_w}", alg.step)));
        }
        Ok(alg)
    }

    fn with_names(mut self, names: Vec<String>) -> Self {
        self.basis_names = names;
        self
    }

    /// `abelian:n`, `heisenberg:n` or `step3:engel`.
    pub fn preset(spec: &str) -> Result<Self> {
        let (kind, arg) = spec.split_once(':').unwrap_or((spec, ""));
        let parse_n = |s: &str| -> Result<usize> {
            s.parse::<usize>()
                .ok()
                .filter(|&n| n >= 1)
                .ok_or_else(|| Error::input(format!("expected a positive dimension in preset '{spec}'")))
        };
        match kind {
            "abelian" => Self::abelian(parse_n(arg)?),
            "heisenberg" => Self::heisenberg(parse_n(arg)?),
            "step3" if arg == "engel" => Self::engel(),
            _ => Err(Error::input(format!("unknown algebra preset '{spec}'"))),
        }
    }

    pub fn abelian(n: usize) -> Result<Self> {
        Self::new(format!("abelian:{n}"), vec![1; n], &[])
    }

    /// Basis `X_1..X_n, Y_1..Y_n, T` with `[X_i, Y_i] = T`.
    pub fn heisenberg(n: usize) -> Result<Self> {
        Self::heisenberg_with_sign(n, 1)
    }

    /// Heisenberg algebra with `[X_i, Y_i] = sign·T`; `sign = -1` is the
    /// opposite orientation convention.
    pub fn heisenberg_with_sign(n: usize, sign: i128) -> Result<Self> {
        let mut weights = vec![1; 2 * n];
        weights.push(2);
        let brackets: Vec<_> = (0..n).map(|i| (i, n + i, 2 * n, rational(sign, 1))).collect();
        let mut names: Vec<String> = (1..=n).map(|i| format!("X{i}")).collect();
        names.extend((1..=n).map(|i| format!("Y{i}")));
        names.push("T".into());
        let name = if sign == 1 { format!("heisenberg:{n}") } else { format!("heisenberg:{n}(reversed)") };
        Ok(Self::new(name, weights, &brackets)?.with_names(names))
    }

    /// Four-dimensional filiform (Engel) algebra: `[X1,X2] = X3`, `[X1,X3] = X4`.
    pub fn engel() -> Result<Self> {
        let one = Rational::one();
        Ok(Self::new("step3:engel", vec![1, 1, 2, 3], &[(0, 1, 2, one), (0, 2, 3, one)])?
            .with_names(vec!["X1".into(), "X2".into(), "X3".into(), "X4".into()]))
    }

    /// Parses the plain-text definition format:
    ///
    /// ```text
    /// # comment
    /// name = heisenberg-like
    /// weights = 1 1 2
    /// bracket = 1 2 3 1/1
    /// ```
    ///
    /// Bracket indices are 1-based.
    pub fn parse(text: &str) -> Result<Self> {
        let mut name = String::from("custom");
        let mut weights = None;
        let mut brackets = Vec::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let perr = |m: String| Error::Parse { line: lineno + 1, message: m };
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| perr(format!("expected 'key = value', found '{line}'")))?;
            let value = value.trim();
            match key.trim() {
                "name" => name = value.to_string(),
                "weights" => {
                    let w: std::result::Result<Vec<u32>, _> = value.split_whitespace().map(str::parse).collect();
                    weights = Some(w.map_err(|e| perr(format!("bad weight: {e}")))?);
                }
                "bracket" => {
                    let parts: Vec<&str> = value.split_whitespace().collect();
                    if parts.len() != 4 {
                        return Err(perr("bracket needs 'i j k num/den'".into()));
                    }
                    let mut ijk = [0usize; 3];
                    for (slot, p) in ijk.iter_mut().zip(&parts[..3]) {
                        let v: usize = p.parse().map_err(|_| perr(format!("bad index '{p}'")))?;
                        if v == 0 {
                            return Err(perr("indices are 1-based".into()));
                        }
                        *slot = v - 1;
                    }
                    brackets.push((ijk[0], ijk[1], ijk[2], parse_rational(parts[3]).map_err(perr)?));
                }
                other => return Err(perr(format!("unknown key '{other}'"))),
            }
        }
        let weights = weights.ok_or_else(|| Error::Parse { line: 0, message: "missing 'weights' line".into() })?;
        Self::new(name, weights, &brackets)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    /// Resolves a preset name, or a path to a definition file.
    pub fn resolve(spec: &str) -> Result<Self> {
        let p = Path::new(spec);
        if p.is_file() {
            Self::load(p)
        } else {
            Self::preset(spec)
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn basis_names(&self) -> &[String] {
        &self.basis_names
    }

    pub fn dim(&self) -> usize {
        self.weights.len()
    }

    pub fn weights(&self) -> &[u32] {
        &self.weights
    }

    pub fn step(&self) -> u32 {
        self.step
    }

    pub fn homogeneous_dimension(&self) -> u32 {
        self.weights.iter().sum()
    }

    pub fn is_abelian(&self) -> bool {
        self.structure.iter().all(Zero::is_zero)
    }

    /// `c_{ijk}`.
    pub fn constant(&self, i: usize, j: usize, k: usize) -> Rational {
        let n = self.dim();
        self.structure[(i * n + j) * n + k]
    }

    /// Bracket of two basis-coordinate vectors.
    pub fn bracket_vectors(&self, a: &[Rational], b: &[Rational]) -> Vec<Rational> {
        let n = self.dim();
        let mut out = vec![Rational::zero(); n];
        for i in 0..n {
            if a[i].is_zero() {
                continue;
            }
            for j in 0..n {
                if b[j].is_zero() {
                    continue;
                }
                for (k, o) in out.iter_mut().enumerate() {
                    let c = self.constant(i, j, k);
                    if !c.is_zero() {
                        *o += c * a[i] * b[j];
                    }
                }
            }
        }
        out
    }

    fn bracket_polys(&self, a: &[Poly], b: &[Poly]) -> Vec<Poly> {
        let n = self.dim();
        let nv = a[0].nvars();
        let mut out = vec![Poly::zero(nv); n];
        for i in 0..n {
            if a[i].is_zero() {
                continue;
            }
            for j in 0..n {
                if b[j].is_zero() {
                    continue;
                }
                let mut prod = None;
                for (k, o) in out.iter_mut().enumerate() {
                    let c = self.constant(i, j, k);
                    if !c.is_zero() {
                        let p = prod.get_or_insert_with(|| a[i].mul(&b[j]));
                        o.add_assign_scaled(p, c);
                    }
                }
            }
        }
        out
    }

    fn validate(&self) -> Result<()> {
        let n = self.dim();
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    let c = self.constant(i, j, k);
                    if !c.is_zero() && self.weights[k] != self.weights[i] + self.weights[j] {
                        return Err(Error::input(format!(
                            "grading violated: [X{}, X{}] has a component on X{} of the wrong weight",
                            i + 1,
                            j + 1,
                            k + 1
                        )));
                    }
                }
            }
        }
        let unit = |i: usize| -> Vec<Rational> {
            let mut v = vec![Rational::zero(); n];
            v[i] = Rational::one();
            v
        };
        for i in 0..n {
            for j in i + 1..n {
                for l in j + 1..n {
                    let (ei, ej, el) = (unit(i), unit(j), unit(l));
                    let t1 = self.bracket_vectors(&ei, &self.bracket_vectors(&ej, &el));
                    let t2 = self.bracket_vectors(&ej, &self.bracket_vectors(&el, &ei));
                    let t3 = self.bracket_vectors(&el, &self.bracket_vectors(&ei, &ej));
                    if (0..n).any(|k| !(t1[k] + t2[k] + t3[k]).is_zero()) {
                        return Err(Error::input(format!(
                            "Jacobi identity fails on (X{}, X{}, X{})",
                            i + 1,
                            j + 1,
                            l + 1
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    /// Length of the lower central series.
    fn compute_step(&self) -> u32 {
        let n = self.dim();
        let mut current: Vec<Vec<Rational>> = (0..n)
            .map(|i| {
                let mut v = vec![Rational::zero(); n];
                v[i] = Rational::one();
                v
            })
            .collect();
        let mut step = 0;
        while !current.is_empty() {
            step += 1;
            let mut next = Vec::new();
            for i in 0..n {
                let mut ei = vec![Rational::zero(); n];
                ei[i] = Rational::one();
                for v in &current {
                    next.push(self.bracket_vectors(&ei, v));
                }
            }
            current = row_basis(next);
            if step > n as u32 + 1 {
                break;
            }
        }
        step
    }

    /// The BCH product as `n` polynomials in `2n` variables `(x_1..x_n, y_1..y_n)`.
    pub fn bch_polynomials(&self) -> &[Poly] {
        self.bch.get_or_init(|| self.build_bch())
    }

    fn build_bch(&self) -> Vec<Poly> {
        let n = self.dim();
        let nv = 2 * n;
        let letters: [Vec<Poly>; 2] = [
            (0..n).map(|i| Poly::var(nv, i, Rational::one())).collect(),
            (0..n).map(|i| Poly::var(nv, n + i, Rational::one())).collect(),
        ];
        let mut out = vec![Poly::zero(nv); n];
        for m in 1..=self.step as usize {
            for code in 0..(1usize << m) {
                let word: Vec<u8> = (0..m).map(|b| ((code >> (m - 1 - b)) & 1) as u8).collect();
                let coeff = dynkin_coefficient(&word);
                if coeff.is_zero() {
                    continue;
                }
                let mut acc = letters[word[m - 1] as usize].clone();
                for &letter in word[..m - 1].iter().rev() {
                    acc = self.bracket_polys(&letters[letter as usize], &acc);
                }
                for (o, p) in out.iter_mut().zip(&acc) {
                    o.add_assign_scaled(p, coeff);
                }
            }
        }
        out
    }

    /// Coefficients of the left-invariant vector field of `X_j`, i.e.
    /// `d/ds|₀ (g · Exp(s X_j))` as polynomials in the coordinates of `g`.
    pub fn left_invariant_field(&self, j: usize) -> Vec<Poly> {
        let n = self.dim();
        let subs: Vec<Poly> = (0..2 * n)
            .map(|i| if i < n { Poly::var(n, i, Rational::one()) } else { Poly::zero(n) })
            .collect();
        self.bch_polynomials().iter().map(|p| p.derivative(n + j).compose(&subs)).collect()
    }
}

/// Coefficient of the right-nested bracket of `word` (0 = X, 1 = Y) in
/// Dynkin's form of `log(e^X e^Y)`.
fn dynkin_coefficient(word: &[u8]) -> Rational {
    fn factorial(k: usize) -> i128 {
        (1..=k as i128).product()
    }
    // Sum over splittings of the word into blocks X^r Y^s with r + s ≥ 1.
    fn go(word: &[u8], pos: usize, blocks: usize, weight: Rational, acc: &mut Rational) {
        if pos == word.len() {
            let k = blocks as i128;
            let sign = if blocks % 2 == 1 { 1 } else { -1 };
            *acc += weight * rational(sign, k);
            return;
        }
        let run_x = word[pos..].iter().take_while(|&&c| c == 0).count();
        for r in 0..=run_x {
            let run_y = if r == run_x { word[pos + r..].iter().take_while(|&&c| c == 1).count() } else { 0 };
            for s in 0..=run_y {
                if r + s == 0 {
                    continue;
                }
                let w = weight / Rational::from_integer(factorial(r) * factorial(s));
                go(word, pos + r + s, blocks + 1, w, acc);
            }
        }
    }
    let mut acc = Rational::zero();
    go(word, 0, 0, Rational::one(), &mut acc);
    acc / Rational::from_integer(word.len() as i128)
}

fn parse_rational(s: &str) -> std::result::Result<Rational, String> {
    let (num, den) = s.split_once('/').unwrap_or((s, "1"));
    let num: i128 = num.trim().parse().map_err(|_| format!("bad rational '{s}'"))?;
    let den: i128 = den.trim().parse().map_err(|_| format!("bad rational '{s}'"))?;
    if den == 0 {
        return Err(format!("zero denominator in '{s}'"));
    }
    Ok(rational(num, den))
}

/// Row-reduced basis of the span of `rows`.
fn row_basis(mut rows: Vec<Vec<Rational>>) -> Vec<Vec<Rational>> {
    let mut basis: Vec<Vec<Rational>> = Vec::new();
    let mut pivots: Vec<usize> = Vec::new();
    for row in rows.iter_mut() {
        for (b, &p) in basis.iter().zip(&pivots) {
            if !row[p].is_zero() {
                let f = row[p] / b[p];
                for (x, y) in row.iter_mut().zip(b) {
                    *x -= f * *y;
                }
            }
        }
        if let Some(p) = row.iter().position(|x| !x.is_zero()) {
            basis.push(row.clone());
            pivots.push(p);
        }
    }
    basis
}
