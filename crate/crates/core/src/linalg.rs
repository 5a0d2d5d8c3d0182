//! Symmetric tridiagonal matrices with LDLᵀ solves and Sylvester inertia,
//! plus rank-one updates handled by Sherman-Morrison.

#[derive(Clone, Debug, PartialEq)]
pub struct SymTridiag {
    pub diag: Vec<f64>,
    pub off: Vec<f64>,
}

impl SymTridiag {
    pub fn zeros(n: usize) -> Self {
        Self { diag: vec![0.0; n], off: vec![0.0; n.saturating_sub(1)] }
    }

    pub fn len(&self) -> usize {
        self.diag.len()
    }

    pub fn is_empty(&self) -> bool {
        self.diag.is_empty()
    }

    /// y[..n] = T x[..n]; entries of x beyond n are ignored.
    pub fn mul_into(&self, x: &[f64], y: &mut [f64]) {
        let n = self.len();
        for i in 0..n {
            let mut s = self.diag[i] * x[i];
            if i > 0 {
                s += self.off[i - 1] * x[i - 1];
            }
            if i + 1 < n {
                s += self.off[i] * x[i + 1];
            }
            y[i] = s;
        }
    }

    /// self + a * other.
    pub fn add_scaled(&self, a: f64, other: &SymTridiag) -> SymTridiag {
        SymTridiag {
            diag: self.diag.iter().zip(&other.diag).map(|(x, y)| x + a * y).collect(),
            off: self.off.iter().zip(&other.off).map(|(x, y)| x + a * y).collect(),
        }
    }

    pub fn factor(&self) -> Option<Ldl> {
        let n = self.len();
        let mut d = vec![0.0; n];
        let mut l = vec![0.0; n.saturating_sub(1)];
        for i in 0..n {
            d[i] = self.diag[i] - if i > 0 { l[i - 1] * self.off[i - 1] } else { 0.0 };
            if d[i] == 0.0 || !d[i].is_finite() {
                return None;
            }
            if i + 1 < n {
                l[i] = self.off[i] / d[i];
            }
        }
        Some(Ldl { d, l })
    }

    pub fn solve(&self, rhs: &[f64]) -> Option<Vec<f64>> {
        self.factor().map(|f| f.solve(rhs))
    }

    pub fn negative_count(&self) -> Option<usize> {
        self.factor().map(|f| f.negative_count())
    }
}

#[derive(Clone, Debug)]
pub struct Ldl {
    d: Vec<f64>,
    l: Vec<f64>,
}

impl Ldl {
    pub fn solve(&self, rhs: &[f64]) -> Vec<f64> {
        let n = self.d.len();
        let mut x = rhs[..n].to_vec();
        for i in 1..n {
            x[i] -= self.l[i - 1] * x[i - 1];
        }
        for i in 0..n {
            x[i] /= self.d[i];
        }
        for i in (0..n.saturating_sub(1)).rev() {
            x[i] -= self.l[i] * x[i + 1];
        }
        x
    }

    pub fn negative_count(&self) -> usize {
        self.d.iter().filter(|d| **d < 0.0).count()
    }
}

/// H = T + c v vᵀ.
#[derive(Clone, Debug)]
pub struct RankOneUpdate<'a> {
    pub t: &'a SymTridiag,
    pub v: &'a [f64],
    pub c: f64,
}

pub struct RankOneFactor {
    ldl: Ldl,
    v: Vec<f64>,
    z: Vec<f64>,
    c: f64,
    denom: f64,
}

impl<'a> RankOneUpdate<'a> {
    pub fn factor(&self) -> Option<RankOneFactor> {
        let ldl = self.t.factor()?;
        let n = self.t.len();
        let v = self.v[..n].to_vec();
        let z = ldl.solve(&v);
        let denom = 1.0 + self.c * dot(&v, &z);
        if denom == 0.0 || !denom.is_finite() {
            return None;
        }
        Some(RankOneFactor { ldl, v, z, c: self.c, denom })
    }
}

impl RankOneFactor {
    pub fn solve(&self, rhs: &[f64]) -> Vec<f64> {
        let mut y = self.ldl.solve(rhs);
        let coef = self.c * dot(&self.v, &y) / self.denom;
        for (yi, zi) in y.iter_mut().zip(&self.z) {
            *yi -= coef * zi;
        }
        y
    }

    /// Inertia of T + c v vᵀ from that of T (matrix determinant lemma).
    pub fn negative_count(&self) -> usize {
        let n = self.ldl.negative_count();
        if self.denom < 0.0 {
            // one eigenvalue crosses zero; direction depends on the sign of c
            if self.c > 0.0 {
                n - 1
            } else {
                n + 1
            }
        } else {
            n
        }
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
