//! Truncated cavity Fock space, the symmetric collective-spin space and the
//! operators acting on their tensor product.
//!
//! Composite states are ordered Fock-major: basis index `n·(N_λ+1) + k`
//! holds `|n⟩ ⊗ |j, m = −j + k⟩`. Build composite operators with [`tensor`]
//! or [`CompositeSpace`] so that every module shares this ordering.

use std::io::{BufRead, Write};

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::params::EffectiveParams;

pub type C64 = Complex64;

const ZERO: C64 = C64::new(0.0, 0.0);
const ONE: C64 = C64::new(1.0, 0.0);

#[inline]
pub(crate) fn re(x: f64) -> C64 {
    C64::new(x, 0.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FockSpace {
    n_max: usize,
}

impl FockSpace {
    pub fn new(n_max: usize) -> Result<Self> {
        if n_max < 1 {
            return Err(Error::InvalidConfig("n_max must be at least 1".into()));
        }
        Ok(FockSpace { n_max })
    }

    pub fn n_max(&self) -> usize {
        self.n_max
    }

    pub fn dim(&self) -> usize {
        self.n_max + 1
    }
}

/// Maximal-spin (`j = N_λ/2`) sector of `N_λ` two-level atoms.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpinSpace {
    n_lambda: u64,
}

impl SpinSpace {
    pub fn new(n_lambda: u64) -> Result<Self> {
        if n_lambda < 1 {
            return Err(Error::InvalidConfig("N_lambda must be at least 1".into()));
        }
        Ok(SpinSpace { n_lambda })
    }

    pub fn n_lambda(&self) -> u64 {
        self.n_lambda
    }

    pub fn j(&self) -> f64 {
        self.n_lambda as f64 / 2.0
    }

    pub fn dim(&self) -> usize {
        self.n_lambda as usize + 1
    }

    /// Magnetic quantum number of basis index `k`.
    pub fn m(&self, k: usize) -> f64 {
        -self.j() + k as f64
    }
}

/// Which space an operator acts on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Dims {
    Fock(usize),
    Spin(usize),
    Composite { fock: usize, spin: usize },
}

impl Dims {
    pub fn dim(&self) -> usize {
        match *self {
            Dims::Fock(d) | Dims::Spin(d) => d,
            Dims::Composite { fock, spin } => fock * spin,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Operator {
    mat: DMatrix<C64>,
    dims: Dims,
}

impl Operator {
    pub fn new(mat: DMatrix<C64>, dims: Dims) -> Result<Self> {
        if mat.nrows() != dims.dim() || mat.ncols() != dims.dim() {
            return Err(Error::dims((mat.nrows(), mat.ncols()), dims));
        }
        Ok(Operator { mat, dims })
    }

    pub fn identity(dims: Dims) -> Self {
        Operator {
            mat: DMatrix::identity(dims.dim(), dims.dim()),
            dims,
        }
    }

    pub fn zeros(dims: Dims) -> Self {
        Operator {
            mat: DMatrix::zeros(dims.dim(), dims.dim()),
            dims,
        }
    }

    pub fn matrix(&self) -> &DMatrix<C64> {
        &self.mat
    }

    pub fn into_matrix(self) -> DMatrix<C64> {
        self.mat
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn dim(&self) -> usize {
        self.dims.dim()
    }

    fn check(&self, other: &Operator) -> Result<()> {
        if self.dims != other.dims {
            return Err(Error::dims(self.dims, other.dims));
        }
        Ok(())
    }

    pub fn dag(&self) -> Operator {
        Operator {
            mat: self.mat.adjoint(),
            dims: self.dims,
        }
    }

    pub fn add(&self, other: &Operator) -> Result<Operator> {
        self.check(other)?;
        Ok(Operator {
            mat: &self.mat + &other.mat,
            dims: self.dims,
        })
    }

    pub fn sub(&self, other: &Operator) -> Result<Operator> {
        self.check(other)?;
        Ok(Operator {
            mat: &self.mat - &other.mat,
            dims: self.dims,
        })
    }

    pub fn matmul(&self, other: &Operator) -> Result<Operator> {
        self.check(other)?;
        Ok(Operator {
            mat: &self.mat * &other.mat,
            dims: self.dims,
        })
    }

    pub fn scale(&self, c: impl Into<C64>) -> Operator {
        Operator {
            mat: &self.mat * c.into(),
            dims: self.dims,
        }
    }

    /// `[self, other]`
    pub fn commutator(&self, other: &Operator) -> Result<Operator> {
        self.check(other)?;
        Ok(Operator {
            mat: &self.mat * &other.mat - &other.mat * &self.mat,
            dims: self.dims,
        })
    }

    /// Frobenius norm; an upper bound on the operator norm.
    pub fn norm(&self) -> f64 {
        self.mat.norm()
    }

    pub fn trace(&self) -> C64 {
        self.mat.trace()
    }

    pub fn hermiticity_error(&self) -> f64 {
        (&self.mat - self.mat.adjoint()).norm()
    }

    /// Eigenvalues (ascending) and eigenvectors (columns) of a Hermitian operator.
    pub fn eigh(&self) -> (Vec<f64>, DMatrix<C64>) {
        let eig = self.mat.clone().symmetric_eigen();
        let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
        let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
        let vectors = DMatrix::from_fn(self.dim(), order.len(), |r, c| eig.eigenvectors[(r, order[c])]);
        (values, vectors)
    }

    /// Write the debugging dump: a `dims` line, a `shape` line, then one
    /// line per row of `re im` pairs.
    pub fn write_dump<W: Write>(&self, mut w: W) -> Result<()> {
        match self.dims {
            Dims::Fock(d) => writeln!(w, "dims fock {d}")?,
            Dims::Spin(d) => writeln!(w, "dims spin {d}")?,
            Dims::Composite { fock, spin } => writeln!(w, "dims composite {fock} {spin}")?,
        }
        writeln!(w, "shape {} {}", self.mat.nrows(), self.mat.ncols())?;
        for r in 0..self.mat.nrows() {
            let row: Vec<String> = (0..self.mat.ncols())
                .map(|c| format!("{:e} {:e}", self.mat[(r, c)].re, self.mat[(r, c)].im))
                .collect();
            writeln!(w, "{}", row.join(" "))?;
        }
        Ok(())
    }

    pub fn read_dump<R: BufRead>(r: R) -> Result<Operator> {
        let bad = |msg: &str| Error::InvalidConfig(format!("operator dump: {msg}"));
        let mut lines = r.lines();
        let mut next = || -> Result<String> { Ok(lines.next().ok_or_else(|| bad("truncated"))??) };
        let header = next()?;
        let fields: Vec<&str> = header.split_whitespace().collect();
        let num = |s: &str| s.parse::<usize>().map_err(|_| bad("bad dimension"));
        let dims = match fields.as_slice() {
            ["dims", "fock", d] => Dims::Fock(num(d)?),
            ["dims", "spin", d] => Dims::Spin(num(d)?),
            ["dims", "composite", f, s] => Dims::Composite { fock: num(f)?, spin: num(s)? },
            _ => return Err(bad("bad dims line")),
        };
        let _shape = next()?;
        let n = dims.dim();
        let mut mat = DMatrix::zeros(n, n);
        for row in 0..n {
            let line = next()?;
            let vals: Vec<f64> = line
                .split_whitespace()
                .map(|t| t.parse::<f64>().map_err(|_| bad("bad number")))
                .collect::<Result<_>>()?;
            if vals.len() != 2 * n {
                return Err(bad("row length"));
            }
            for col in 0..n {
                mat[(row, col)] = C64::new(vals[2 * col], vals[2 * col + 1]);
            }
        }
        Operator::new(mat, dims)
    }
}

/// Truncated annihilation operator, `a|n⟩ = √n |n−1⟩`.
pub fn annihilation(space: &FockSpace) -> Operator {
    let d = space.dim();
    let mut mat = DMatrix::zeros(d, d);
    for n in 1..d {
        mat[(n - 1, n)] = re((n as f64).sqrt());
    }
    Operator { mat, dims: Dims::Fock(d) }
}

pub struct CollectiveOps {
    pub j_plus: Operator,
    pub j_minus: Operator,
    pub j_z: Operator,
}

/// Collective spin operators in the `|j, m⟩` basis, `m = −j … j`.
pub fn collective_ops(space: &SpinSpace) -> CollectiveOps {
    let d = space.dim();
    let j = space.j();
    let mut jp = DMatrix::zeros(d, d);
    let mut jz = DMatrix::zeros(d, d);
    for k in 0..d {
        let m = space.m(k);
        jz[(k, k)] = re(m);
        if k + 1 < d {
            jp[(k + 1, k)] = re((j * (j + 1.0) - m * (m + 1.0)).sqrt());
        }
    }
    let dims = Dims::Spin(d);
    let j_plus = Operator { mat: jp, dims };
    CollectiveOps {
        j_minus: j_plus.dag(),
        j_plus,
        j_z: Operator { mat: jz, dims },
    }
}

/// Kronecker product of a cavity operator with a spin operator.
pub fn tensor(a: &Operator, b: &Operator) -> Result<Operator> {
    match (a.dims, b.dims) {
        (Dims::Fock(fock), Dims::Spin(spin)) => Ok(Operator {
            mat: a.mat.kronecker(&b.mat),
            dims: Dims::Composite { fock, spin },
        }),
        _ => Err(Error::dims(a.dims, b.dims)),
    }
}

/// All elementary operators lifted to the composite space.
#[derive(Debug, Clone)]
pub struct CompositeSpace {
    pub fock: FockSpace,
    pub spin: SpinSpace,
    pub a: Operator,
    pub n: Operator,
    pub j_plus: Operator,
    pub j_minus: Operator,
    pub j_z: Operator,
}

impl CompositeSpace {
    pub fn new(fock: FockSpace, spin: SpinSpace) -> Self {
        let id_f = Operator::identity(Dims::Fock(fock.dim()));
        let id_s = Operator::identity(Dims::Spin(spin.dim()));
        let a_f = annihilation(&fock);
        let spin_ops = collective_ops(&spin);
        let lift_f = |op: &Operator| tensor(op, &id_s).expect("fock factor");
        let lift_s = |op: &Operator| tensor(&id_f, op).expect("spin factor");
        let a = lift_f(&a_f);
        let n = a.dag().matmul(&a).expect("same space");
        CompositeSpace {
            fock,
            spin,
            n,
            a,
            j_plus: lift_s(&spin_ops.j_plus),
            j_minus: lift_s(&spin_ops.j_minus),
            j_z: lift_s(&spin_ops.j_z),
        }
    }

    pub fn dims(&self) -> Dims {
        Dims::Composite {
            fock: self.fock.dim(),
            spin: self.spin.dim(),
        }
    }

    pub fn dim(&self) -> usize {
        self.dims().dim()
    }

    pub fn index(&self, photons: usize, k: usize) -> usize {
        photons * self.spin.dim() + k
    }

    /// `a†a + J_z`
    pub fn excitation_number(&self) -> Operator {
        self.n.add(&self.j_z).expect("same space")
    }
}

fn check_spin(eff: &EffectiveParams, spin: &SpinSpace) -> Result<()> {
    if eff.n_lambda != spin.n_lambda() {
        return Err(Error::dims(
            format!("EffectiveParams N_lambda = {}", eff.n_lambda),
            format!("SpinSpace N_lambda = {}", spin.n_lambda()),
        ));
    }
    Ok(())
}

fn assemble(
    space: &CompositeSpace,
    omega: f64,
    omega0: f64,
    delta: f64,
    lambda_r: f64,
    lambda_s: f64,
) -> Operator {
    let nl = space.spin.n_lambda() as f64;
    let a = space.a.matrix();
    let ad = a.adjoint();
    let jp = space.j_plus.matrix();
    let jm = space.j_minus.matrix();
    let jz = space.j_z.matrix();
    let n = space.n.matrix();

    let mut h = n * re(omega) + jz * re(omega0);
    if delta != 0.0 {
        h += (n * jz) * re(delta / nl);
    }
    if lambda_r != 0.0 {
        h += (a * jp + &ad * jm) * re(lambda_r / nl.sqrt());
    }
    if lambda_s != 0.0 {
        h += (&ad * jp + a * jm) * re(lambda_s / nl.sqrt());
    }
    // exact Hermitian symmetrization; all terms above are Hermitian already
    let h = (&h + h.adjoint()) * re(0.5);
    Operator { mat: h, dims: space.dims() }
}

/// Five-term Hamiltonian with independent co- and counter-rotating couplings:
/// `ω a†a + ω₀ J_z + (δ/N_λ) a†a J_z + (λ_r/√N_λ)(a J₊ + a† J₋) + (λ_s/√N_λ)(a† J₊ + a J₋)`.
pub fn hamiltonian_general(eff: &EffectiveParams, fock: &FockSpace, spin: &SpinSpace) -> Result<Operator> {
    check_spin(eff, spin)?;
    let space = CompositeSpace::new(*fock, *spin);
    Ok(assemble(&space, eff.omega, eff.omega0, eff.delta, eff.lambda_r, eff.lambda_s))
}

/// Symmetric-coupling form `… + (λ/√N_λ)(a + a†)(J₊ + J₋)` with
/// `λ = (λ_r + λ_s)/2`.
pub fn hamiltonian_dicke(eff: &EffectiveParams, fock: &FockSpace, spin: &SpinSpace) -> Result<Operator> {
    check_spin(eff, spin)?;
    let space = CompositeSpace::new(*fock, *spin);
    let lambda = eff.dicke_coupling();
    Ok(assemble(&space, eff.omega, eff.omega0, eff.delta, lambda, lambda))
}

/// Excitation-conserving form `ω_cav a†a + ω₀ J_z + (λ_r/√N_λ)(a J₊ + a† J₋)`.
pub fn hamiltonian_tc(omega_cav: f64, omega0: f64, lambda_r: f64, fock: &FockSpace, spin: &SpinSpace) -> Operator {
    let space = CompositeSpace::new(*fock, *spin);
    assemble(&space, omega_cav, omega0, 0.0, lambda_r, 0.0)
}

/// `Π = exp(iπ(a†a + J_z + j))`, diagonal with entries `(−1)^(n + m + j)`.
pub fn parity_operator(fock: &FockSpace, spin: &SpinSpace) -> Operator {
    let space_dims = Dims::Composite {
        fock: fock.dim(),
        spin: spin.dim(),
    };
    let d = space_dims.dim();
    let mut mat = DMatrix::zeros(d, d);
    for n in 0..fock.dim() {
        for k in 0..spin.dim() {
            // m + j = k
            let sign = if (n + k) % 2 == 0 { ONE } else { -ONE };
            let i = n * spin.dim() + k;
            mat[(i, i)] = sign;
        }
    }
    Operator { mat, dims: space_dims }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix {
    mat: DMatrix<C64>,
    dims: Dims,
}

pub const HERMITIAN_TOL: f64 = 1e-10;
pub const TRACE_TOL: f64 = 1e-9;
pub const POSITIVITY_TOL: f64 = 1e-9;

impl DensityMatrix {
    /// Validated constructor: Hermitian, unit trace and positive semidefinite.
    pub fn new(mat: DMatrix<C64>, dims: Dims) -> Result<Self> {
        let rho = Self::from_matrix_unchecked(mat, dims)?;
        let herm = rho.hermiticity_error();
        if herm > HERMITIAN_TOL {
            return Err(Error::InvalidState(format!("not Hermitian (error {herm:.3e})")));
        }
        let tr = rho.trace();
        if (tr - 1.0).abs() > TRACE_TOL {
            return Err(Error::InvalidState(format!("trace {tr} differs from 1")));
        }
        let min_eig = rho.min_eigenvalue();
        if min_eig < -POSITIVITY_TOL {
            return Err(Error::InvalidState(format!("negative eigenvalue {min_eig:.3e}")));
        }
        Ok(rho)
    }

    pub(crate) fn from_matrix_unchecked(mat: DMatrix<C64>, dims: Dims) -> Result<Self> {
        if mat.nrows() != dims.dim() || mat.ncols() != dims.dim() {
            return Err(Error::dims((mat.nrows(), mat.ncols()), dims));
        }
        Ok(DensityMatrix { mat, dims })
    }

    pub fn from_ket(psi: &DVector<C64>, dims: Dims) -> Result<Self> {
        let norm = psi.norm();
        if norm == 0.0 {
            return Err(Error::InvalidState("zero state vector".into()));
        }
        let psi = psi / re(norm);
        Self::new(&psi * psi.adjoint(), dims)
    }

    /// `|0⟩ ⊗ |j, −j⟩`
    pub fn ground(space: &CompositeSpace) -> Self {
        let mut psi = DVector::zeros(space.dim());
        psi[space.index(0, 0)] = ONE;
        Self::from_ket(&psi, space.dims()).expect("normalized basis state")
    }

    /// Truncated coherent cavity state `|α⟩` (renormalized) times the spin
    /// basis state with index `k`.
    pub fn coherent(space: &CompositeSpace, alpha: C64, k: usize) -> Result<Self> {
        let mut psi = DVector::zeros(space.dim());
        let mut amp = C64::new((-alpha.norm_sqr() / 2.0).exp(), 0.0);
        for n in 0..space.fock.dim() {
            if n > 0 {
                amp *= alpha / (n as f64).sqrt();
            }
            psi[space.index(n, k)] = amp;
        }
        Self::from_ket(&psi, space.dims())
    }

    pub fn maximally_mixed(dims: Dims) -> Self {
        let d = dims.dim();
        DensityMatrix {
            mat: DMatrix::identity(d, d) * re(1.0 / d as f64),
            dims,
        }
    }

    pub fn matrix(&self) -> &DMatrix<C64> {
        &self.mat
    }

    pub fn into_matrix(self) -> DMatrix<C64> {
        self.mat
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn trace(&self) -> f64 {
        self.mat.trace().re
    }

    pub fn hermiticity_error(&self) -> f64 {
        (&self.mat - self.mat.adjoint()).norm()
    }

    pub fn min_eigenvalue(&self) -> f64 {
        let h = (&self.mat + self.mat.adjoint()) * re(0.5);
        h.symmetric_eigenvalues().iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn purity(&self) -> f64 {
        // tr(ρ²) = Σ |ρ_ij|² for Hermitian ρ
        self.mat.iter().map(|z| z.norm_sqr()).sum()
    }

    /// `tr(ρ O)`
    pub fn expect(&self, op: &Operator) -> Result<C64> {
        if op.dims != self.dims {
            return Err(Error::dims(op.dims, self.dims));
        }
        // tr(ρ O) = Σ_ij ρ_ij O_ji
        let mut acc = ZERO;
        for i in 0..self.mat.nrows() {
            for j in 0..self.mat.ncols() {
                acc += self.mat[(i, j)] * op.mat[(j, i)];
            }
        }
        Ok(acc)
    }

    /// Photon-number distribution `P(n)` of a composite state.
    pub fn photon_distribution(&self) -> Result<Vec<f64>> {
        let Dims::Composite { fock, spin } = self.dims else {
            return Err(Error::dims(self.dims, "composite space"));
        };
        Ok((0..fock)
            .map(|n| (0..spin).map(|k| self.mat[(n * spin + k, n * spin + k)].re).sum())
            .collect())
    }

    /// Population of the highest retained Fock level.
    pub fn top_fock_population(&self) -> Result<f64> {
        Ok(*self.photon_distribution()?.last().expect("n_max >= 1"))
    }
}
