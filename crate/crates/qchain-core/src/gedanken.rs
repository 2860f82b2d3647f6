//! Builders and closed-form oracles for the classic observer experiments:
//! the two-observer scenarios with and without intermediate registration,
//! the friend who consults his memory twice, the interference-reversal
//! protocol, and the reduction to system-only paths.
//!
//! Every operation returns both the closed-form value and the value computed
//! by running the full composite chain through the path-sum engine, together
//! with their largest difference, so a regression localizes disagreement to
//! formula versus engine.

use thiserror::Error;

use crate::apparatus::{
    factor_class_observable, register_gate, ApparatusError, CompositeSpace, CouplingSpec, Factor,
    FactorRole, FactorState,
};
use crate::chain::{
    ChainBuilder, ChainError, EigenvalueClass, InitialState, MeasurementChain, Observable,
};
use crate::dist::{Distribution, OutcomeSequence};
use crate::feynman;
use crate::hilbert::{self, COperator, CVector, C64};

/// Validation tolerance for experiment parameters.
pub const PARAM_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum GedankenError {
    #[error("|alpha|^2 + |beta|^2 deviates from 1 by {deviation:.3e}")]
    BranchWeightsNotNormalized { deviation: f64 },

    #[error("state has dimension {actual}, expected {expected}")]
    WrongDimension { expected: usize, actual: usize },

    #[error("state norm deviates from 1 by {deviation:.3e}")]
    NotNormalized { deviation: f64 },

    #[error("operator fails unitarity at {PARAM_TOL:.0e} (deviation {deviation:.3e})")]
    NotUnitary { deviation: f64 },

    #[error("reduced paths require alpha = 1 and beta = 0")]
    NotReducedRegime,

    #[error(transparent)]
    Apparatus(#[from] ApparatusError),

    #[error(transparent)]
    Chain(#[from] ChainError),
}

/// Parameters of the two-observer experiment: the branch weights of the
/// composite readout basis, the prepared system state, the two system
/// evolutions, and the measurement bases of both observers.
#[derive(Clone, Debug)]
pub struct TwoObserverParams {
    pub alpha: C64,
    pub beta: C64,
    pub s0: CVector,
    /// System evolution from the preparation to the first coupling.
    pub u_f: COperator,
    /// System evolution between the two couplings.
    pub u_w: COperator,
    /// Columns are the first observer's basis states.
    pub basis_f: COperator,
    /// Columns are the second observer's basis states.
    pub basis_w: COperator,
}

impl TwoObserverParams {
    pub fn new(
        alpha: C64,
        beta: C64,
        s0: CVector,
        u_f: COperator,
        u_w: COperator,
        basis_f: COperator,
        basis_w: COperator,
    ) -> Result<Self, GedankenError> {
        let weight = alpha.norm_sqr() + beta.norm_sqr();
        if (weight - 1.0).abs() > PARAM_TOL {
            return Err(GedankenError::BranchWeightsNotNormalized {
                deviation: (weight - 1.0).abs(),
            });
        }
        if s0.len() != 2 {
            return Err(GedankenError::WrongDimension {
                expected: 2,
                actual: s0.len(),
            });
        }
        let norm_dev = (s0.norm() - 1.0).abs();
        if norm_dev > PARAM_TOL {
            return Err(GedankenError::NotNormalized { deviation: norm_dev });
        }
        for op in [&u_f, &u_w, &basis_f, &basis_w] {
            if op.nrows() != 2 || op.ncols() != 2 {
                return Err(GedankenError::WrongDimension {
                    expected: 2,
                    actual: op.nrows(),
                });
            }
            let deviation = hilbert::unitarity_deviation(op);
            if deviation > PARAM_TOL {
                return Err(GedankenError::NotUnitary { deviation });
            }
        }
        // Exact renormalization keeps downstream completeness checks tight.
        let scale = weight.sqrt();
        Ok(Self {
            alpha: alpha / scale,
            beta: beta / scale,
            s0: s0.clone().unscale(s0.norm()),
            u_f,
            u_w,
            basis_f,
            basis_w,
        })
    }

    /// The reference point used throughout: equal branch weights, a Hadamard
    /// before the first coupling, nothing in between, computational bases.
    pub fn hadamard() -> Self {
        let h = std::f64::consts::FRAC_1_SQRT_2;
        Self::new(
            C64::new(h, 0.0),
            C64::new(h, 0.0),
            hilbert::basis_vector(2, 0),
            hilbert::hadamard(),
            hilbert::identity(2),
            hilbert::identity(2),
            hilbert::identity(2),
        )
        .expect("reference parameters are valid")
    }

    /// Deterministic random parameters for property tests.
    pub fn random(seed: u64) -> Self {
        let weights = hilbert::random_state(2, seed.wrapping_mul(6364136223846793005).wrapping_add(1));
        Self::new(
            weights[0],
            weights[1],
            hilbert::random_state(2, seed.wrapping_add(101)),
            hilbert::haar_random_unitary(2, seed.wrapping_add(202)),
            hilbert::haar_random_unitary(2, seed.wrapping_add(303)),
            hilbert::haar_random_unitary(2, seed.wrapping_add(404)),
            hilbert::haar_random_unitary(2, seed.wrapping_add(505)),
        )
        .expect("generated parameters are valid")
    }
}

/// The four system transition amplitudes through both couplings.
#[derive(Clone, Debug)]
pub struct SystemAmplitudes {
    /// Ordered as (W-basis 1, F-basis 1), (1, 2), (2, 1), (2, 2).
    pub a: [C64; 4],
}

impl SystemAmplitudes {
    pub fn a1(&self) -> C64 {
        self.a[0]
    }
    pub fn a2(&self) -> C64 {
        self.a[1]
    }
    pub fn a3(&self) -> C64 {
        self.a[2]
    }
    pub fn a4(&self) -> C64 {
        self.a[3]
    }

    pub fn total_weight(&self) -> f64 {
        self.a.iter().map(|z| z.norm_sqr()).sum()
    }
}

/// Amplitudes `⟨w_i|U_W|f_j⟩⟨f_j|U_F|s0⟩` for the four `(i, j)` pairs.
pub fn system_amplitudes(params: &TwoObserverParams) -> SystemAmplitudes {
    let reached = &params.u_f * &params.s0;
    let b1 = params.basis_f.column(0).dotc(&reached);
    let b2 = params.basis_f.column(1).dotc(&reached);
    let w = |i: usize, j: usize| {
        let moved = &params.u_w * params.basis_f.column(j).into_owned();
        params.basis_w.column(i).dotc(&moved)
    };
    SystemAmplitudes {
        a: [w(0, 0) * b1, w(0, 1) * b2, w(1, 0) * b1, w(1, 1) * b2],
    }
}

/// Probabilities of the second observer's three possible readings.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct WOutcomes {
    pub yes: f64,
    pub no: f64,
    pub not_sure: f64,
}

impl WOutcomes {
    pub fn total(&self) -> f64 {
        self.yes + self.no + self.not_sure
    }

    fn max_abs_diff(&self, other: &WOutcomes) -> f64 {
        (self.yes - other.yes)
            .abs()
            .max((self.no - other.no).abs())
            .max((self.not_sure - other.not_sure).abs())
    }
}

/// Joint probabilities over (second observer's reading, first observer's
/// reading).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ScenarioBJoint {
    pub yes_yes: f64,
    pub yes_no: f64,
    pub no_yes: f64,
    pub no_no: f64,
    pub not_sure_yes: f64,
    pub not_sure_no: f64,
}

impl ScenarioBJoint {
    pub fn w_marginal(&self) -> WOutcomes {
        WOutcomes {
            yes: self.yes_yes + self.yes_no,
            no: self.no_yes + self.no_no,
            not_sure: self.not_sure_yes + self.not_sure_no,
        }
    }

    pub fn total(&self) -> f64 {
        self.yes_yes
            + self.yes_no
            + self.no_yes
            + self.no_no
            + self.not_sure_yes
            + self.not_sure_no
    }

    fn entries(&self) -> [f64; 6] {
        [
            self.yes_yes,
            self.yes_no,
            self.no_yes,
            self.no_no,
            self.not_sure_yes,
            self.not_sure_no,
        ]
    }

    fn max_abs_diff(&self, other: &ScenarioBJoint) -> f64 {
        self.entries()
            .iter()
            .zip(other.entries())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

#[derive(Clone, Debug)]
pub struct ScenarioA {
    pub formula: WOutcomes,
    pub simulated: WOutcomes,
    pub max_abs_diff: f64,
}

#[derive(Clone, Debug)]
pub struct ScenarioB {
    pub formula: ScenarioBJoint,
    pub simulated: ScenarioBJoint,
    pub max_abs_diff: f64,
}

#[derive(Clone, Debug)]
pub struct ScenarioC {
    pub formula: WOutcomes,
    pub simulated: WOutcomes,
    pub max_abs_diff: f64,
}

/// First observer couples but never registers; only the second observer's
/// reading is an outcome, and the two system branches interfere.
pub fn scenario_a(params: &TwoObserverParams) -> Result<ScenarioA, GedankenError> {
    let amps = system_amplitudes(params);
    let formula = scenario_a_formula(params, &amps);
    let (space, chain) = scenario_a_chain(params, false)?;
    let dist = feynman::chain_distribution(&chain);
    let simulated = read_w_outcomes(&space, &chain, &dist, 1)?;
    let max_abs_diff = formula.max_abs_diff(&simulated);
    Ok(ScenarioA {
        formula,
        simulated,
        max_abs_diff,
    })
}

/// Both observers register and perceive; the record in the first observer's
/// memory removes the interference term.
pub fn scenario_b(params: &TwoObserverParams) -> Result<ScenarioB, GedankenError> {
    let amps = system_amplitudes(params);
    let formula = scenario_b_formula(params, &amps);
    let (space, chain) = scenario_b_chain(params)?;
    let dist = feynman::chain_distribution(&chain);
    let simulated = read_b_joint(&space, &chain, &dist)?;
    let max_abs_diff = formula.max_abs_diff(&simulated);
    Ok(ScenarioB {
        formula,
        simulated,
        max_abs_diff,
    })
}

/// First observer registers but never perceives; the mere record suffices,
/// and the second observer's statistics match scenario B exactly.
pub fn scenario_c(params: &TwoObserverParams) -> Result<ScenarioC, GedankenError> {
    let amps = system_amplitudes(params);
    let formula = scenario_b_formula(params, &amps).w_marginal();
    let (space, chain) = scenario_c_chain(params)?;
    let dist = feynman::chain_distribution(&chain);
    let simulated = read_w_outcomes(&space, &chain, &dist, 1)?;
    let max_abs_diff = formula.max_abs_diff(&simulated);
    Ok(ScenarioC {
        formula,
        simulated,
        max_abs_diff,
    })
}

/// All three scenarios off one set of parameters, sharing the composite
/// construction between B and C.
pub fn scenarios(
    params: &TwoObserverParams,
) -> Result<(ScenarioA, ScenarioB, ScenarioC), GedankenError> {
    let amps = system_amplitudes(params);
    let a = scenario_a(params)?;

    let (space, b_chain, c_chain) = scenario_bc_chains(params)?;
    let b_dist = feynman::chain_distribution(&b_chain);
    let b_sim = read_b_joint(&space, &b_chain, &b_dist)?;
    let b_formula = scenario_b_formula(params, &amps);
    let b = ScenarioB {
        formula: b_formula,
        simulated: b_sim,
        max_abs_diff: b_formula.max_abs_diff(&b_sim),
    };

    let c_dist = feynman::chain_distribution(&c_chain);
    let c_sim = read_w_outcomes(&space, &c_chain, &c_dist, 1)?;
    let c_formula = b_formula.w_marginal();
    let c = ScenarioC {
        formula: c_formula,
        simulated: c_sim,
        max_abs_diff: c_formula.max_abs_diff(&c_sim),
    };
    Ok((a, b, c))
}

fn scenario_a_formula(params: &TwoObserverParams, amps: &SystemAmplitudes) -> WOutcomes {
    let (alpha, beta) = (params.alpha, params.beta);
    let yes = (alpha.conj() * amps.a1() + beta.conj() * amps.a4()).norm_sqr();
    let no = (beta * amps.a1() - alpha * amps.a4()).norm_sqr();
    let not_sure = (alpha.conj() * amps.a2() + beta.conj() * amps.a3()).norm_sqr()
        + (beta * amps.a2() - alpha * amps.a3()).norm_sqr();
    WOutcomes { yes, no, not_sure }
}

fn scenario_b_formula(params: &TwoObserverParams, amps: &SystemAmplitudes) -> ScenarioBJoint {
    let wa = params.alpha.norm_sqr();
    let wb = params.beta.norm_sqr();
    ScenarioBJoint {
        yes_yes: wa * amps.a1().norm_sqr(),
        yes_no: wb * amps.a4().norm_sqr(),
        no_yes: wb * amps.a1().norm_sqr(),
        no_no: wa * amps.a4().norm_sqr(),
        not_sure_yes: amps.a3().norm_sqr(),
        not_sure_no: amps.a2().norm_sqr(),
    }
}

/// The interference term separating scenarios A and B:
/// `P_A(yes) - P_B(yes) = 2 Re[alpha* beta A1 A4*]`.
pub fn interference_term(params: &TwoObserverParams, amps: &SystemAmplitudes) -> f64 {
    2.0 * (params.alpha.conj() * params.beta * amps.a1() * amps.a4().conj()).re
}

// Composite layout shared by the two-observer scenarios. Pointer and memory
// factors keep the paper's ordering: the later observer's pair first, the
// system last.
const W_MEMORY: &str = "muW";
const F_MEMORY: &str = "muF";
const W_PROBE: &str = "dW";
const F_PROBE: &str = "dF";
const SYSTEM: &str = "s";

fn f_partition(params: &TwoObserverParams) -> Result<Observable, ChainError> {
    Observable::new(
        params.basis_f.clone(),
        vec![
            EigenvalueClass::new("sF1", 1.0),
            EigenvalueClass::new("sF2", 2.0),
        ],
        vec![0, 1],
    )
}

/// The four-branch readout basis on the (first probe, system) pair, plus the
/// never-populated rest sector of the probe's idle state.
fn w_partition(params: &TwoObserverParams) -> Result<Observable, ChainError> {
    let (alpha, beta) = (params.alpha, params.beta);
    let w1 = params.basis_w.column(0);
    let w2 = params.basis_w.column(1);
    // Target pair (probe digit, system) with the probe digit slow; branches
    // live in probe digits 1 and 2.
    let place = |d: usize, v: nalgebra::DVectorView<C64>, scale: C64| {
        let mut out = CVector::zeros(6);
        out[2 * d] = scale * v[0];
        out[2 * d + 1] = scale * v[1];
        out
    };
    let phi1 = place(1, w1, alpha) + place(2, w2, beta);
    let phi2 = place(1, w1, beta.conj()) + place(2, w2, -alpha.conj());
    let phi3 = place(2, w1, alpha) + place(1, w2, beta);
    let phi4 = place(2, w1, beta.conj()) + place(1, w2, -alpha.conj());
    let off1 = hilbert::basis_vector(6, 0);
    let off2 = hilbert::basis_vector(6, 1);
    let basis = COperator::from_columns(&[phi1, phi2, phi3, phi4, off1, off2]);
    Observable::new(
        basis,
        vec![
            EigenvalueClass::new("phi1", 1.0),
            EigenvalueClass::new("phi2", 2.0),
            EigenvalueClass::new("phi3", 3.0),
            EigenvalueClass::new("phi4", 4.0),
            EigenvalueClass::new("off", 0.0),
        ],
        vec![0, 1, 2, 3, 4, 4],
    )
}

fn w_memory_observable(space: &CompositeSpace) -> Result<Observable, ApparatusError> {
    factor_class_observable(
        space,
        W_MEMORY,
        vec![
            EigenvalueClass::new("unset", 0.0),
            EigenvalueClass::new("yes", 1.0),
            EigenvalueClass::new("no", 2.0),
            EigenvalueClass::new("not_sure", 3.0),
        ],
        vec![0, 1, 2, 3, 3, 0],
    )
}

fn f_memory_observable(space: &CompositeSpace) -> Result<Observable, ApparatusError> {
    factor_class_observable(
        space,
        F_MEMORY,
        vec![
            EigenvalueClass::new("unset", 0.0),
            EigenvalueClass::new("yes", 1.0),
            EigenvalueClass::new("no", 2.0),
        ],
        vec![0, 1, 2],
    )
}

/// Non-degenerate preparation observable whose leading basis column in each
/// factor is that factor's prepared state.
fn preparation_observable(
    space: &CompositeSpace,
    parts: &[FactorState],
) -> Result<Observable, GedankenError> {
    let mut basis = hilbert::identity(1);
    for (factor, part) in space.factors().iter().zip(parts) {
        let factor_basis = match part {
            FactorState::Basis(_) => hilbert::identity(factor.dim),
            FactorState::Vector(v) => hilbert::complete_basis(&[v.clone()], factor.dim)
                .map_err(|_| GedankenError::WrongDimension {
                    expected: factor.dim,
                    actual: v.len(),
                })?,
        };
        basis = hilbert::tensor_product(&basis, &factor_basis).map_err(|_| {
            GedankenError::WrongDimension {
                expected: space.dim(),
                actual: 0,
            }
        })?;
    }
    let classes = (0..space.dim())
        .map(|n| EigenvalueClass::new(format!("p{n}"), n as f64))
        .collect();
    Ok(Observable::new_prechecked(
        basis,
        classes,
        (0..space.dim()).collect(),
    )?)
}

/// Chronologically ordered gates multiplied into one interval unitary.
fn interval_unitary(
    space: &CompositeSpace,
    events: &[(Vec<&str>, &COperator)],
) -> Result<COperator, ApparatusError> {
    let mut u = hilbert::identity(space.dim());
    for (labels, gate) in events {
        space.apply_to_columns(gate, labels, &mut u)?;
    }
    Ok(u)
}

/// Composite chain for scenario A. With `structured_final_basis` the final
/// observable is expressed in the branch basis, so the per-branch amplitudes
/// become directly addressable.
pub fn scenario_a_chain(
    params: &TwoObserverParams,
    structured_final_basis: bool,
) -> Result<(CompositeSpace, MeasurementChain), GedankenError> {
    let space = CompositeSpace::new(vec![
        Factor::new(W_MEMORY, 6, FactorRole::Memory),
        Factor::new(W_PROBE, 6, FactorRole::Probe),
        Factor::new(F_PROBE, 3, FactorRole::Probe),
        Factor::new(SYSTEM, 2, FactorRole::System),
    ])?;
    let parts = [
        FactorState::Basis(0),
        FactorState::Basis(0),
        FactorState::Basis(0),
        FactorState::Vector(params.s0.clone()),
    ];
    let initial = space.product_state(&parts)?;

    let couple_f = CouplingSpec::new(F_PROBE, vec![SYSTEM.into()], f_partition(params)?, 1.0);
    let couple_w = CouplingSpec::new(
        W_PROBE,
        vec![F_PROBE.into(), SYSTEM.into()],
        w_partition(params)?,
        2.0,
    );
    let f_gate = couple_f.gate(&space)?;
    let w_gate = couple_w.gate(&space)?;
    let (reg_w, _, _) = register_gate(&space, W_MEMORY, W_PROBE)?;

    let u1 = interval_unitary(
        &space,
        &[
            (vec![SYSTEM], &params.u_f),
            (vec![F_PROBE, SYSTEM], &f_gate),
            (vec![SYSTEM], &params.u_w),
            (vec![W_PROBE, F_PROBE, SYSTEM], &w_gate),
            (vec![W_MEMORY, W_PROBE], &reg_w),
        ],
    )?;

    let final_obs = if structured_final_basis {
        let basis = space.embed(params_w_basis(params)?.basis(), &[F_PROBE, SYSTEM])?;
        let template = w_memory_observable(&space)?;
        let assignment = (0..space.dim())
            .map(|idx| template.class_of(idx))
            .collect();
        Observable::new_prechecked(basis, template.classes().to_vec(), assignment)?
    } else {
        w_memory_observable(&space)?
    };

    let q0 = preparation_observable(&space, &parts)?;
    let chain = ChainBuilder::new(space.dim())
        .prepare(0.0, q0, InitialState::pure(initial)?)
        .step(1.0, u1, final_obs)
        .build()?;
    Ok((space, chain))
}

fn params_w_basis(params: &TwoObserverParams) -> Result<Observable, ChainError> {
    w_partition(params)
}

fn scenario_bc_space() -> Result<CompositeSpace, ApparatusError> {
    CompositeSpace::new(vec![
        Factor::new(W_MEMORY, 6, FactorRole::Memory),
        Factor::new(F_MEMORY, 3, FactorRole::Memory),
        Factor::new(W_PROBE, 6, FactorRole::Probe),
        Factor::new(F_PROBE, 3, FactorRole::Probe),
        Factor::new(SYSTEM, 2, FactorRole::System),
    ])
}

struct BcParts {
    space: CompositeSpace,
    parts: Vec<FactorState>,
    u1: COperator,
    u2: COperator,
}

fn scenario_bc_parts(params: &TwoObserverParams) -> Result<BcParts, GedankenError> {
    let space = scenario_bc_space()?;
    let parts = vec![
        FactorState::Basis(0),
        FactorState::Basis(0),
        FactorState::Basis(0),
        FactorState::Basis(0),
        FactorState::Vector(params.s0.clone()),
    ];
    let couple_f = CouplingSpec::new(F_PROBE, vec![SYSTEM.into()], f_partition(params)?, 1.0);
    let couple_w = CouplingSpec::new(
        W_PROBE,
        vec![F_PROBE.into(), SYSTEM.into()],
        w_partition(params)?,
        2.0,
    );
    let f_gate = couple_f.gate(&space)?;
    let w_gate = couple_w.gate(&space)?;
    let (reg_f, _, _) = register_gate(&space, F_MEMORY, F_PROBE)?;
    let (reg_w, _, _) = register_gate(&space, W_MEMORY, W_PROBE)?;

    let u1 = interval_unitary(
        &space,
        &[
            (vec![SYSTEM], &params.u_f),
            (vec![F_PROBE, SYSTEM], &f_gate),
            (vec![F_MEMORY, F_PROBE], &reg_f),
        ],
    )?;
    let u2 = interval_unitary(
        &space,
        &[
            (vec![SYSTEM], &params.u_w),
            (vec![W_PROBE, F_PROBE, SYSTEM], &w_gate),
            (vec![W_MEMORY, W_PROBE], &reg_w),
        ],
    )?;
    Ok(BcParts {
        space,
        parts,
        u1,
        u2,
    })
}

/// Composite chain for scenario B: two perceived outcomes.
pub fn scenario_b_chain(
    params: &TwoObserverParams,
) -> Result<(CompositeSpace, MeasurementChain), GedankenError> {
    let bc = scenario_bc_parts(params)?;
    let q0 = preparation_observable(&bc.space, &bc.parts)?;
    let initial = bc.space.product_state(&bc.parts)?;
    let chain = ChainBuilder::new(bc.space.dim())
        .prepare(0.0, q0, InitialState::pure(initial)?)
        .step(1.0, bc.u1, f_memory_observable(&bc.space)?)
        .step(2.0, bc.u2, w_memory_observable(&bc.space)?)
        .build()?;
    Ok((bc.space, chain))
}

/// Composite chain for scenario C: registration happens inside the single
/// interval, only the final reading is an outcome.
pub fn scenario_c_chain(
    params: &TwoObserverParams,
) -> Result<(CompositeSpace, MeasurementChain), GedankenError> {
    let bc = scenario_bc_parts(params)?;
    let q0 = preparation_observable(&bc.space, &bc.parts)?;
    let initial = bc.space.product_state(&bc.parts)?;
    let total = hilbert::matmul(&bc.u2, &bc.u1);
    let chain = ChainBuilder::new(bc.space.dim())
        .prepare(0.0, q0, InitialState::pure(initial)?)
        .step(1.0, total, w_memory_observable(&bc.space)?)
        .build()?;
    Ok((bc.space, chain))
}

fn scenario_bc_chains(
    params: &TwoObserverParams,
) -> Result<(CompositeSpace, MeasurementChain, MeasurementChain), GedankenError> {
    let bc = scenario_bc_parts(params)?;
    let q0 = preparation_observable(&bc.space, &bc.parts)?;
    let initial = bc.space.product_state(&bc.parts)?;
    let total = hilbert::matmul(&bc.u2, &bc.u1);
    let b_chain = ChainBuilder::new(bc.space.dim())
        .prepare(0.0, q0.clone(), InitialState::pure(initial.clone())?)
        .step(1.0, bc.u1, f_memory_observable(&bc.space)?)
        .step(2.0, bc.u2, w_memory_observable(&bc.space)?)
        .build()?;
    let c_chain = ChainBuilder::new(bc.space.dim())
        .prepare(0.0, q0, InitialState::pure(initial)?)
        .step(1.0, total, w_memory_observable(&bc.space)?)
        .build()?;
    Ok((bc.space, b_chain, c_chain))
}

fn read_w_outcomes(
    _space: &CompositeSpace,
    chain: &MeasurementChain,
    dist: &Distribution,
    step: usize,
) -> Result<WOutcomes, GedankenError> {
    let obs = chain.observable(step);
    let marginal = dist.last_component_marginal();
    let read = |label: &str| {
        obs.class_by_label(label)
            .map(|m| marginal.probability(&OutcomeSequence::new(vec![m])))
            .unwrap_or(0.0)
    };
    Ok(WOutcomes {
        yes: read("yes"),
        no: read("no"),
        not_sure: read("not_sure"),
    })
}

fn read_b_joint(
    _space: &CompositeSpace,
    chain: &MeasurementChain,
    dist: &Distribution,
) -> Result<ScenarioBJoint, GedankenError> {
    let f_obs = chain.observable(1);
    let w_obs = chain.observable(2);
    let prep = chain.preparation_class();
    let read = |w_label: &str, f_label: &str| {
        match (w_obs.class_by_label(w_label), f_obs.class_by_label(f_label)) {
            (Some(w), Some(f)) => dist.probability(&OutcomeSequence::new(vec![prep, f, w])),
            _ => 0.0,
        }
    };
    Ok(ScenarioBJoint {
        yes_yes: read("yes", "yes"),
        yes_no: read("yes", "no"),
        no_yes: read("no", "yes"),
        no_no: read("no", "no"),
        not_sure_yes: read("not_sure", "yes"),
        not_sure_no: read("not_sure", "no"),
    })
}

/// Joint outcome probabilities of a friend registering once and consulting
/// the same memory later.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FriendJoint {
    /// Reading "yes" both times.
    pub both_yes: f64,
    /// Reading "no" both times.
    pub both_no: f64,
    /// "yes" first, "no" when asked again.
    pub yes_then_no: f64,
    /// "no" first, "yes" when asked again.
    pub no_then_yes: f64,
}

impl FriendJoint {
    fn entries(&self) -> [f64; 4] {
        [self.both_yes, self.both_no, self.yes_then_no, self.no_then_yes]
    }

    fn max_abs_diff(&self, other: &FriendJoint) -> f64 {
        self.entries()
            .iter()
            .zip(other.entries())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

#[derive(Clone, Debug)]
pub struct WignerFriend {
    pub formula: FriendJoint,
    pub simulated: FriendJoint,
    pub max_abs_diff: f64,
}

/// The friend couples, registers, and answers twice; whatever the
/// post-measurement probe-system interaction `u_ds`, the memory record pins
/// both answers to the same branch.
pub fn wigner_friend(
    u_s: &COperator,
    u_ds: &COperator,
    s0: &CVector,
) -> Result<WignerFriend, GedankenError> {
    for (op, dim) in [(u_s, 2usize), (u_ds, 4usize)] {
        if op.nrows() != dim || op.ncols() != dim {
            return Err(GedankenError::WrongDimension {
                expected: dim,
                actual: op.nrows(),
            });
        }
        let deviation = hilbert::unitarity_deviation(op);
        if deviation > 1e-10 {
            return Err(GedankenError::NotUnitary { deviation });
        }
    }
    if s0.len() != 2 {
        return Err(GedankenError::WrongDimension {
            expected: 2,
            actual: s0.len(),
        });
    }
    let norm_dev = (s0.norm() - 1.0).abs();
    if norm_dev > PARAM_TOL {
        return Err(GedankenError::NotNormalized { deviation: norm_dev });
    }

    let space = CompositeSpace::new(vec![
        Factor::new("mu", 3, FactorRole::Memory),
        Factor::new("d", 3, FactorRole::Probe),
        Factor::new("s", 2, FactorRole::System),
    ])?;
    let parts = [
        FactorState::Basis(0),
        FactorState::Basis(0),
        FactorState::Vector(s0.clone()),
    ];
    let initial = space.product_state(&parts)?;

    let couple = CouplingSpec::new("d", vec!["s".into()], Observable::computational(2), 1.0);
    let gate = couple.gate(&space)?;
    let (reg, _, _) = register_gate(&space, "mu", "d")?;
    let u1 = interval_unitary(
        &space,
        &[(vec!["s"], u_s), (vec!["d", "s"], &gate), (vec!["mu", "d"], &reg)],
    )?;
    // The later probe-system interaction acts on the coupled sector only.
    let u2_pair = extend_on_coupled_sector(u_ds);
    let u2 = interval_unitary(&space, &[(vec!["d", "s"], &u2_pair)])?;

    let memory = factor_class_observable(
        &space,
        "mu",
        vec![
            EigenvalueClass::new("unset", 0.0),
            EigenvalueClass::new("yes", 1.0),
            EigenvalueClass::new("no", 2.0),
        ],
        vec![0, 1, 2],
    )?;
    let q0 = preparation_observable(&space, &parts)?;
    let chain = ChainBuilder::new(space.dim())
        .prepare(0.0, q0, InitialState::pure(initial)?)
        .step(1.0, u1, memory.clone())
        .step(2.0, u2, memory.clone())
        .build()?;
    let dist = feynman::chain_distribution(&chain);

    let prep = chain.preparation_class();
    let yes = memory.class_by_label("yes").unwrap();
    let no = memory.class_by_label("no").unwrap();
    let read = |m1: usize, m2: usize| dist.probability(&OutcomeSequence::new(vec![prep, m1, m2]));
    let simulated = FriendJoint {
        both_yes: read(yes, yes),
        both_no: read(no, no),
        yes_then_no: read(yes, no),
        no_then_yes: read(no, yes),
    };
    let reached = u_s * s0;
    let formula = FriendJoint {
        both_yes: reached[0].norm_sqr(),
        both_no: reached[1].norm_sqr(),
        yes_then_no: 0.0,
        no_then_yes: 0.0,
    };
    let max_abs_diff = formula.max_abs_diff(&simulated);
    Ok(WignerFriend {
        formula,
        simulated,
        max_abs_diff,
    })
}

/// Extend a 4-dim operator on the coupled (pointer 1, 2) ⊗ system sector to
/// the full 6-dim (pointer, system) pair, identity on the idle sector.
fn extend_on_coupled_sector(u4: &COperator) -> COperator {
    let mut out = hilbert::identity(6);
    for r in 0..4 {
        for c in 0..4 {
            out[(2 + r, 2 + c)] = u4[(r, c)];
        }
    }
    out
}

#[derive(Clone, Debug)]
pub struct Interference {
    pub formula: f64,
    pub simulated: f64,
    pub abs_diff: f64,
}

/// Couple a probe, certify that the coupling happened, optionally record the
/// probe's reading, then reverse everything and ask for the odds of finding
/// the probe-system pair back in its initial state.
///
/// Without a record of the reading the return is certain; with one, the two
/// branches become exclusive and the return probability drops to
/// `|⟨s1|U|s0⟩|^4 + |⟨s2|U|s0⟩|^4`.
pub fn interference_experiment(
    u: &COperator,
    register_memory: bool,
) -> Result<Interference, GedankenError> {
    if u.nrows() != 2 || u.ncols() != 2 {
        return Err(GedankenError::WrongDimension {
            expected: 2,
            actual: u.nrows(),
        });
    }
    let deviation = hilbert::unitarity_deviation(u);
    if deviation > 1e-10 {
        return Err(GedankenError::NotUnitary { deviation });
    }

    let space = CompositeSpace::new(vec![
        Factor::new("muD", 3, FactorRole::Memory),
        Factor::new("muF", 3, FactorRole::Memory),
        Factor::new("dF", 3, FactorRole::Probe),
        Factor::new("d", 3, FactorRole::Probe),
        Factor::new("s", 2, FactorRole::System),
    ])?;
    let parts = [
        FactorState::Basis(0),
        FactorState::Basis(0),
        FactorState::Basis(0),
        FactorState::Basis(0),
        FactorState::Basis(0),
    ];
    let initial = space.product_state(&parts)?;

    let couple_d = CouplingSpec::new("d", vec!["s".into()], Observable::computational(2), 1.0);
    let d_gate = couple_d.gate(&space)?;

    // Witness partition on the (probe, system) pair: "on" spans the two
    // coupled directions, "off" their orthogonal complement.
    let on_off = {
        let cols = [2usize, 5, 0, 1, 3, 4];
        let basis = COperator::from_columns(
            &cols
                .iter()
                .map(|&k| hilbert::basis_vector(6, k))
                .collect::<Vec<_>>(),
        );
        Observable::new(
            basis,
            vec![
                EigenvalueClass::new("on", 1.0),
                EigenvalueClass::new("off", 2.0),
            ],
            vec![0, 0, 1, 1, 1, 1],
        )?
    };
    let couple_f = CouplingSpec::new("dF", vec!["d".into(), "s".into()], on_off, 2.0);
    let f_gate = couple_f.gate(&space)?;
    let (reg_f, _, _) = register_gate(&space, "muF", "dF")?;
    let (reg_d, _, _) = register_gate(&space, "muD", "d")?;
    let reverse_gate = d_gate.adjoint();
    let u_back = u.adjoint();

    let mut events: Vec<(Vec<&str>, &COperator)> = vec![
        (vec!["s"], u),
        (vec!["d", "s"], &d_gate),
        (vec!["dF", "d", "s"], &f_gate),
        (vec!["muF", "dF"], &reg_f),
    ];
    if register_memory {
        events.push((vec!["muD", "d"], &reg_d));
    }
    events.push((vec!["d", "s"], &reverse_gate));
    events.push((vec!["s"], &u_back));
    let u1 = interval_unitary(&space, &events)?;

    // Returned = probe back at rest and system back in its prepared state.
    let returned_class: Vec<usize> = (0..space.dim())
        .map(|idx| {
            let d_idx = space.factor_index("d").unwrap();
            let s_idx = space.factor_index("s").unwrap();
            if space.digit(idx, d_idx) == 0 && space.digit(idx, s_idx) == 0 {
                0
            } else {
                1
            }
        })
        .collect();
    let final_obs = Observable::computational_with_classes(
        space.dim(),
        vec![
            EigenvalueClass::new("returned", 1.0),
            EigenvalueClass::new("lost", 0.0),
        ],
        returned_class,
    )?;

    let q0 = preparation_observable(&space, &parts)?;
    let chain = ChainBuilder::new(space.dim())
        .prepare(0.0, q0, InitialState::pure(initial)?)
        .step(1.0, u1, final_obs.clone())
        .build()?;
    let dist = feynman::chain_distribution(&chain);
    let prep = chain.preparation_class();
    let returned = final_obs.class_by_label("returned").unwrap();
    let simulated = dist.probability(&OutcomeSequence::new(vec![prep, returned]));

    let reached = u * hilbert::basis_vector(2, 0);
    let (p1, p2) = (reached[0].norm_sqr(), reached[1].norm_sqr());
    let formula = if register_memory { p1 * p1 + p2 * p2 } else { 1.0 };
    Ok(Interference {
        formula,
        simulated,
        abs_diff: (formula - simulated).abs(),
    })
}

#[derive(Clone, Debug)]
pub struct ReducedPaths {
    /// `|A_i|^2` in the order of [`SystemAmplitudes`].
    pub formula: [f64; 4],
    pub simulated: [f64; 4],
    pub max_abs_diff: f64,
}

/// With trivial branch weights the composite paths end in orthogonal states
/// labeled by the system transitions alone, so the four probabilities live
/// in the two-dimensional system space and coincide for all three scenarios.
pub fn reduced_path_probabilities(
    params: &TwoObserverParams,
) -> Result<ReducedPaths, GedankenError> {
    if (params.alpha - C64::new(1.0, 0.0)).norm() > PARAM_TOL || params.beta.norm() > PARAM_TOL {
        return Err(GedankenError::NotReducedRegime);
    }
    let amps = system_amplitudes(params);
    let formula = [
        amps.a1().norm_sqr(),
        amps.a2().norm_sqr(),
        amps.a3().norm_sqr(),
        amps.a4().norm_sqr(),
    ];
    let b = scenario_b(params)?;
    let simulated = [
        b.simulated.yes_yes,
        b.simulated.not_sure_no,
        b.simulated.not_sure_yes,
        b.simulated.no_no,
    ];
    let max_abs_diff = formula
        .iter()
        .zip(simulated)
        .map(|(f, s)| (f - s).abs())
        .fold(0.0, f64::max);
    Ok(ReducedPaths {
        formula,
        simulated,
        max_abs_diff,
    })
}
