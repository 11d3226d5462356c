//! The four-agent round as an executable state machine.
//!
//! Register order is `R(2) ⊗ Fbar(3) ⊗ S(2) ⊗ F(3)`; memory index 0 is
//! `init`. One round:
//!
//! | step | agent | action |
//! |------|-------|--------|
//! | n:00 | Fbar  | measures the coin R in {heads, tails}, prepares S |
//! | n:10 | F     | measures S in {down, up}, records z |
//! | n:20 | Wbar  | measures lab Lbar = R⊗Fbar in a basis containing ok_bar |
//! | n:30 | W     | measures lab L = S⊗F in a basis containing ok |
//! | n:40 | -     | halts if wbar = ok_bar and w = ok |
//!
//! Under [`Semantics::Collapse`] every step collapses the state. Under
//! [`Semantics::Unitary`] the friends' steps are unitary dilations onto their
//! memories and only the Wigners' measurements collapse; r and z are read
//! from the memories afterwards for the record.

use std::collections::BTreeMap;
use std::fmt;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::measurement::{
    build_dilation, measure_collapse_split, memory_basis, CompletionPolicy, DilationSpec, MeasurementError,
    MeasurementSpec,
};
use crate::qcore::{Operator, OperatorKind, QError, SpaceLayout, Split, StateVector, Subsystem, Tensor, C64};

pub const R: &str = "R";
pub const FBAR: &str = "Fbar";
pub const S: &str = "S";
pub const F: &str = "F";

pub const OK_BAR: &str = "ok_bar";
pub const FAIL_BAR: &str = "fail_bar";
pub const OK: &str = "ok";
pub const FAIL: &str = "fail";

pub const DEFAULT_MAX_ROUNDS: u64 = 10_000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProtocolError {
    #[error(transparent)]
    Measurement(#[from] MeasurementError),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("memory `{memory}` read `{label}`, which is not a recorded outcome")]
    UnrecordedMemory { memory: String, label: String },
}

impl From<QError> for ProtocolError {
    fn from(e: QError) -> Self {
        ProtocolError::Measurement(e.into())
    }
}

pub type Result<T> = std::result::Result<T, ProtocolError>;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Semantics {
    Collapse,
    Unitary,
}

impl fmt::Display for Semantics {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Semantics::Collapse => "collapse",
            Semantics::Unitary => "unitary",
        })
    }
}

/// Initial state of the spin before Fbar's step.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InitialSpin {
    #[default]
    Down,
    Up,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProtocolConfig {
    pub semantics: Semantics,
    /// Relative phase of the tails amplitude, radians.
    pub theta: f64,
    pub max_rounds: u64,
    pub seed: u64,
    #[serde(default)]
    pub initial_spin: InitialSpin,
}

impl Default for ProtocolConfig {
    fn default() -> Self {
        Self {
            semantics: Semantics::Unitary,
            theta: 0.0,
            max_rounds: DEFAULT_MAX_ROUNDS,
            seed: 0,
            initial_spin: InitialSpin::Down,
        }
    }
}

impl ProtocolConfig {
    pub fn new(semantics: Semantics, theta: f64) -> Self {
        Self {
            semantics,
            theta,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !self.theta.is_finite() {
            return Err(ProtocolError::InvalidConfig(format!("theta must be finite, got {}", self.theta)));
        }
        if self.max_rounds == 0 {
            return Err(ProtocolError::InvalidConfig("max_rounds must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Coin {
    Heads,
    Tails,
}

/// F's record z.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Spin {
    #[serde(rename = "-1/2")]
    MinusHalf,
    #[serde(rename = "+1/2")]
    PlusHalf,
}

/// Announcement of either Wigner. `Ok` is ok_bar for Wbar and ok for W.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WignerOutcome {
    Ok,
    Fail,
    Other,
}

impl WignerOutcome {
    pub const ALL: [WignerOutcome; 3] = [WignerOutcome::Ok, WignerOutcome::Fail, WignerOutcome::Other];

    fn from_label(label: &str) -> Self {
        match label {
            OK | OK_BAR => WignerOutcome::Ok,
            FAIL | FAIL_BAR => WignerOutcome::Fail,
            _ => WignerOutcome::Other,
        }
    }
}

impl fmt::Display for Coin {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Coin::Heads => "heads",
            Coin::Tails => "tails",
        })
    }
}

impl fmt::Display for Spin {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Spin::MinusHalf => "-1/2",
            Spin::PlusHalf => "+1/2",
        })
    }
}

impl fmt::Display for WignerOutcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            WignerOutcome::Ok => "ok",
            WignerOutcome::Fail => "fail",
            WignerOutcome::Other => "other",
        })
    }
}

/// A protocol variable: the record produced by one of the four steps.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variable {
    R,
    Z,
    Wbar,
    W,
}

impl Variable {
    /// Index of the step producing this variable (0 = n:00, …, 3 = n:30).
    pub fn step(self) -> usize {
        match self {
            Variable::R => 0,
            Variable::Z => 1,
            Variable::Wbar => 2,
            Variable::W => 3,
        }
    }
}

impl fmt::Display for Variable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Variable::R => "r",
            Variable::Z => "z",
            Variable::Wbar => "wbar",
            Variable::W => "w",
        })
    }
}

/// A variable together with a value.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(tag = "variable", content = "value", rename_all = "lowercase")]
pub enum Record {
    R(Coin),
    Z(Spin),
    Wbar(WignerOutcome),
    W(WignerOutcome),
}

impl Record {
    pub fn variable(&self) -> Variable {
        match self {
            Record::R(_) => Variable::R,
            Record::Z(_) => Variable::Z,
            Record::Wbar(_) => Variable::Wbar,
            Record::W(_) => Variable::W,
        }
    }

    /// The other value of a two-valued variable. `None` for the Wigners'
    /// three-way outcomes other than ok.
    pub fn complement(&self) -> Option<Record> {
        match *self {
            Record::R(Coin::Heads) => Some(Record::R(Coin::Tails)),
            Record::R(Coin::Tails) => Some(Record::R(Coin::Heads)),
            Record::Z(Spin::MinusHalf) => Some(Record::Z(Spin::PlusHalf)),
            Record::Z(Spin::PlusHalf) => Some(Record::Z(Spin::MinusHalf)),
            _ => None,
        }
    }

    /// Parses `r=tails`, `z=+1/2`, `wbar=ok`, `w=fail` and similar.
    pub fn parse(s: &str) -> std::result::Result<Record, String> {
        let (var, val) = s
            .split_once('=')
            .ok_or_else(|| format!("expected variable=value, got `{s}`"))?;
        let (var, val) = (var.trim().to_ascii_lowercase(), val.trim().to_ascii_lowercase());
        let wigner = |v: &str| match v {
            "ok" | "ok_bar" | "okbar" => Ok(WignerOutcome::Ok),
            "fail" | "fail_bar" | "failbar" => Ok(WignerOutcome::Fail),
            "other" => Ok(WignerOutcome::Other),
            _ => Err(format!("unknown outcome `{v}`")),
        };
        match var.as_str() {
            "r" => match val.as_str() {
                "heads" => Ok(Record::R(Coin::Heads)),
                "tails" => Ok(Record::R(Coin::Tails)),
                _ => Err(format!("unknown coin value `{val}`")),
            },
            "z" => match val.as_str() {
                "-1/2" | "-0.5" | "minus_half" | "-" => Ok(Record::Z(Spin::MinusHalf)),
                "+1/2" | "1/2" | "+0.5" | "0.5" | "plus_half" | "+" => Ok(Record::Z(Spin::PlusHalf)),
                _ => Err(format!("unknown spin value `{val}`")),
            },
            "wbar" => wigner(&val).map(Record::Wbar),
            "w" => wigner(&val).map(Record::W),
            _ => Err(format!("unknown variable `{var}`")),
        }
    }
}

impl fmt::Display for Record {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Record::R(c) => write!(f, "r={c}"),
            Record::Z(z) => write!(f, "z={z}"),
            Record::Wbar(WignerOutcome::Ok) => f.write_str("wbar=ok_bar"),
            Record::Wbar(WignerOutcome::Fail) => f.write_str("wbar=fail_bar"),
            Record::Wbar(o) => write!(f, "wbar={o}"),
            Record::W(o) => write!(f, "w={o}"),
        }
    }
}

/// Classical outcomes of one round.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoundRecord {
    pub round: u64,
    pub r: Coin,
    pub z: Spin,
    pub wbar: WignerOutcome,
    pub w: WignerOutcome,
    pub halted: bool,
}

impl RoundRecord {
    fn new(round: u64, r: Coin, z: Spin, wbar: WignerOutcome, w: WignerOutcome) -> Self {
        Self {
            round,
            r,
            z,
            wbar,
            w,
            halted: wbar == WignerOutcome::Ok && w == WignerOutcome::Ok,
        }
    }
}

/// Independent random stream for one round, derived from `(seed, round)`.
pub fn round_rng(seed: u64, round: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(round);
    rng
}

pub fn protocol_layout() -> SpaceLayout {
    SpaceLayout::new(vec![
        Subsystem::labeled(R, &["heads", "tails"]).expect("static"),
        Subsystem::labeled(FBAR, &["init", "hbar", "tbar"]).expect("static"),
        Subsystem::labeled(S, &["down", "up"]).expect("static"),
        Subsystem::labeled(F, &["init", "minus_half", "plus_half"]).expect("static"),
    ])
    .expect("static")
}

fn sub(names: &[&str]) -> SpaceLayout {
    protocol_layout().ordered(names).expect("static")
}

fn ket(names: &[&str], labels: &[&str]) -> StateVector {
    StateVector::from_labels(sub(names), labels).expect("static")
}

fn combo(a: &StateVector, b: &StateVector, sign: f64) -> StateVector {
    let h = std::f64::consts::FRAC_1_SQRT_2;
    StateVector::superpose(&[(C64::new(h, 0.0), a), (C64::new(sign * h, 0.0), b)]).expect("static")
}

/// Named vectors of the protocol.
pub mod kets {
    use super::*;

    pub fn heads() -> StateVector {
        ket(&[R], &["heads"])
    }

    pub fn tails() -> StateVector {
        ket(&[R], &["tails"])
    }

    pub fn down() -> StateVector {
        ket(&[S], &["down"])
    }

    pub fn up() -> StateVector {
        ket(&[S], &["up"])
    }

    /// `(|down⟩ + |up⟩)/√2`.
    pub fn right() -> StateVector {
        combo(&down(), &up(), 1.0)
    }

    /// `√(1/3)|heads⟩ + e^{iθ}√(2/3)|tails⟩`.
    pub fn coin(theta: f64) -> StateVector {
        StateVector::new(
            sub(&[R]),
            vec![
                C64::new((1.0f64 / 3.0).sqrt(), 0.0),
                C64::from_polar((2.0f64 / 3.0).sqrt(), theta),
            ],
        )
        .expect("normalized")
    }

    /// `|heads⟩_R ⊗ |hbar⟩_Fbar` on Lbar.
    pub fn hbar() -> StateVector {
        ket(&[R, FBAR], &["heads", "hbar"])
    }

    /// `|tails⟩_R ⊗ |tbar⟩_Fbar` on Lbar.
    pub fn tbar() -> StateVector {
        ket(&[R, FBAR], &["tails", "tbar"])
    }

    /// `(|hbar⟩ − |tbar⟩)/√2` on Lbar.
    pub fn ok_bar() -> StateVector {
        combo(&hbar(), &tbar(), -1.0)
    }

    /// `(|hbar⟩ + |tbar⟩)/√2` on Lbar.
    pub fn fail_bar() -> StateVector {
        combo(&hbar(), &tbar(), 1.0)
    }

    /// `|down⟩_S ⊗ |−1/2⟩_F` on L.
    pub fn minus_half() -> StateVector {
        ket(&[S, F], &["down", "minus_half"])
    }

    /// `|up⟩_S ⊗ |+1/2⟩_F` on L.
    pub fn plus_half() -> StateVector {
        ket(&[S, F], &["up", "plus_half"])
    }

    /// `(|−1/2⟩ − |+1/2⟩)/√2` on L.
    pub fn ok() -> StateVector {
        combo(&minus_half(), &plus_half(), -1.0)
    }

    /// `(|−1/2⟩ + |+1/2⟩)/√2` on L.
    pub fn fail() -> StateVector {
        combo(&minus_half(), &plus_half(), 1.0)
    }

    pub fn init(memory: &str) -> StateVector {
        ket(&[memory], &["init"])
    }
}

/// The rotation Fbar applies to S after tails: `|down⟩ → |→⟩`,
/// `|up⟩ → (|up⟩ − |down⟩)/√2`.
pub fn tails_preparation() -> Operator {
    let h = std::f64::consts::FRAC_1_SQRT_2;
    let m = DMatrix::from_row_slice(
        2,
        2,
        &[C64::new(h, 0.0), C64::new(-h, 0.0), C64::new(h, 0.0), C64::new(h, 0.0)],
    );
    Operator::new(sub(&[S]), m, OperatorKind::Unitary).expect("static rotation is unitary")
}

/// One of the four measurement steps.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Step {
    FbarMeasuresCoin,
    FMeasuresSpin,
    WbarMeasuresLbar,
    WMeasuresL,
}

impl Step {
    pub const ALL: [Step; 4] = [
        Step::FbarMeasuresCoin,
        Step::FMeasuresSpin,
        Step::WbarMeasuresLbar,
        Step::WMeasuresL,
    ];

    pub fn variable(self) -> Variable {
        match self {
            Step::FbarMeasuresCoin => Variable::R,
            Step::FMeasuresSpin => Variable::Z,
            Step::WbarMeasuresLbar => Variable::Wbar,
            Step::WMeasuresL => Variable::W,
        }
    }
}

/// Everything a round needs, built once per configuration.
#[derive(Clone, Debug)]
pub struct Protocol {
    config: ProtocolConfig,
    layout: SpaceLayout,
    initial: StateVector,
    coin_measurement: MeasurementSpec,
    spin_measurement: MeasurementSpec,
    wbar_measurement: MeasurementSpec,
    w_measurement: MeasurementSpec,
    fbar_dilation_spec: DilationSpec,
    f_dilation_spec: DilationSpec,
    fbar_dilation: Operator,
    f_dilation: Operator,
    samplers: Samplers,
}

/// Index splits and memory read-out specs, computed once per protocol.
#[derive(Clone, Debug)]
struct Samplers {
    coin: Split,
    spin: Split,
    wbar: Split,
    w: Split,
    fbar_memory: (MeasurementSpec, Split),
    f_memory: (MeasurementSpec, Split),
}

impl Protocol {
    pub fn new(config: &ProtocolConfig) -> Result<Self> {
        config.validate()?;
        let layout = protocol_layout();
        let spin0 = match config.initial_spin {
            InitialSpin::Down => kets::down(),
            InitialSpin::Up => kets::up(),
        };
        let initial = kets::coin(config.theta)
            .tensor(&kets::init(FBAR))?
            .tensor(&spin0)?
            .tensor(&kets::init(F))?;

        let coin_measurement = MeasurementSpec::computational(sub(&[R]));
        let spin_measurement = MeasurementSpec::computational(sub(&[S]));
        let wbar_measurement = MeasurementSpec::new(
            sub(&[R, FBAR]),
            vec![(OK_BAR.into(), kets::ok_bar()), (FAIL_BAR.into(), kets::fail_bar())],
            CompletionPolicy::AutoComplete,
        )?;
        let w_measurement = MeasurementSpec::new(
            sub(&[S, F]),
            vec![(OK.into(), kets::ok()), (FAIL.into(), kets::fail())],
            CompletionPolicy::AutoComplete,
        )?;

        let fbar_dilation_spec = DilationSpec {
            measurement: coin_measurement.clone(),
            memory: FBAR.into(),
            pointer_map: BTreeMap::from([("heads".to_string(), 1), ("tails".to_string(), 2)]),
            conditional_preparations: BTreeMap::from([("tails".to_string(), tails_preparation())]),
        };
        let f_dilation_spec = DilationSpec {
            measurement: spin_measurement.clone(),
            memory: F.into(),
            pointer_map: BTreeMap::from([("down".to_string(), 1), ("up".to_string(), 2)]),
            conditional_preparations: BTreeMap::new(),
        };
        let fbar_dilation = build_dilation(&fbar_dilation_spec, &layout)?;
        let f_dilation = build_dilation(&f_dilation_spec, &layout)?;
        let memory = |name: &str| -> Result<(MeasurementSpec, Split)> {
            let spec = memory_basis(&layout, name)?;
            let split = layout.split(spec.target())?;
            Ok((spec, split))
        };
        let samplers = Samplers {
            coin: layout.split(coin_measurement.target())?,
            spin: layout.split(spin_measurement.target())?,
            wbar: layout.split(wbar_measurement.target())?,
            w: layout.split(w_measurement.target())?,
            fbar_memory: memory(FBAR)?,
            f_memory: memory(F)?,
        };

        Ok(Self {
            config: config.clone(),
            layout,
            initial,
            coin_measurement,
            spin_measurement,
            wbar_measurement,
            w_measurement,
            fbar_dilation_spec,
            f_dilation_spec,
            fbar_dilation,
            f_dilation,
            samplers,
        })
    }

    pub fn config(&self) -> &ProtocolConfig {
        &self.config
    }

    pub fn layout(&self) -> &SpaceLayout {
        &self.layout
    }

    /// `|init⟩_R ⊗ |init⟩_Fbar ⊗ |spin⟩_S ⊗ |init⟩_F`.
    pub fn initial_state(&self) -> &StateVector {
        &self.initial
    }

    pub fn coin_measurement(&self) -> &MeasurementSpec {
        &self.coin_measurement
    }

    pub fn spin_measurement(&self) -> &MeasurementSpec {
        &self.spin_measurement
    }

    pub fn wbar_measurement(&self) -> &MeasurementSpec {
        &self.wbar_measurement
    }

    pub fn w_measurement(&self) -> &MeasurementSpec {
        &self.w_measurement
    }

    pub fn fbar_dilation_spec(&self) -> &DilationSpec {
        &self.fbar_dilation_spec
    }

    pub fn f_dilation_spec(&self) -> &DilationSpec {
        &self.f_dilation_spec
    }

    /// Fbar's measure-and-prepare as a unitary on the full register.
    pub fn fbar_dilation(&self) -> &Operator {
        &self.fbar_dilation
    }

    /// F's measurement as a unitary on the full register.
    pub fn f_dilation(&self) -> &Operator {
        &self.f_dilation
    }

    /// The measurement a step performs, on its own target.
    pub fn measurement(&self, step: Step) -> &MeasurementSpec {
        match step {
            Step::FbarMeasuresCoin => &self.coin_measurement,
            Step::FMeasuresSpin => &self.spin_measurement,
            Step::WbarMeasuresLbar => &self.wbar_measurement,
            Step::WMeasuresL => &self.w_measurement,
        }
    }

    /// Global state after Fbar's unitary step (`|10⟩ ⊗ |init⟩_F`).
    pub fn state_after_fbar(&self) -> StateVector {
        self.initial.apply(&self.fbar_dilation).expect("unitary")
    }

    /// Global state after both friends' unitary steps.
    pub fn state_after_friends(&self) -> StateVector {
        self.state_after_fbar().apply(&self.f_dilation).expect("unitary")
    }

    /// Vectors whose projectors sum to the projector onto `record`, together
    /// with the sub-layout they act on. r and z are read from the friends'
    /// memories; wbar and w from the lab bases.
    pub fn record_vectors(&self, record: Record) -> Vec<StateVector> {
        let lab = |spec: &MeasurementSpec, o: WignerOutcome| {
            spec.outcomes()
                .iter()
                .filter(|x| WignerOutcome::from_label(&x.label) == o)
                .map(|x| x.vector.clone())
                .collect::<Vec<_>>()
        };
        match record {
            Record::R(Coin::Heads) => vec![ket(&[FBAR], &["hbar"])],
            Record::R(Coin::Tails) => vec![ket(&[FBAR], &["tbar"])],
            Record::Z(Spin::MinusHalf) => vec![ket(&[F], &["minus_half"])],
            Record::Z(Spin::PlusHalf) => vec![ket(&[F], &["plus_half"])],
            Record::Wbar(o) => lab(&self.wbar_measurement, o),
            Record::W(o) => lab(&self.w_measurement, o),
        }
    }

    /// Basis in which a step leaves its record: the friend's memory for r and
    /// z, the lab basis for wbar and w.
    pub fn pointer_basis(&self, step: Step) -> Vec<StateVector> {
        let memory = |name: &str| {
            let l = sub(&[name]);
            (0..3).map(|i| StateVector::basis(l.clone(), i).expect("static")).collect()
        };
        match step {
            Step::FbarMeasuresCoin => memory(FBAR),
            Step::FMeasuresSpin => memory(F),
            Step::WbarMeasuresLbar => self.wbar_measurement.outcomes().iter().map(|o| o.vector.clone()).collect(),
            Step::WMeasuresL => self.w_measurement.outcomes().iter().map(|o| o.vector.clone()).collect(),
        }
    }

    pub fn run_round<Rn: Rng + ?Sized>(&self, round: u64, rng: &mut Rn) -> Result<RoundRecord> {
        match self.config.semantics {
            Semantics::Collapse => self.run_round_collapse(round, rng),
            Semantics::Unitary => self.run_round_unitary(round, rng),
        }
    }

    /// Every step collapses: r is sampled first, S is prepared from it, then
    /// z, wbar and w are sampled in turn from the collapsed state.
    pub fn run_round_collapse<Rn: Rng + ?Sized>(&self, round: u64, rng: &mut Rn) -> Result<RoundRecord> {
        let sm = &self.samplers;
        let (r_label, psi) = measure_collapse_split(&self.initial, &self.coin_measurement, &sm.coin, rng)?;
        let psi = psi.apply(&self.fbar_dilation)?;
        let (z_label, psi) = measure_collapse_split(&psi, &self.spin_measurement, &sm.spin, rng)?;
        let psi = psi.apply(&self.f_dilation)?;
        let (wbar, psi) = measure_collapse_split(&psi, &self.wbar_measurement, &sm.wbar, rng)?;
        let (w, _) = measure_collapse_split(&psi, &self.w_measurement, &sm.w, rng)?;
        let r = match r_label.as_str() {
            "heads" => Coin::Heads,
            _ => Coin::Tails,
        };
        let z = match z_label.as_str() {
            "down" => Spin::MinusHalf,
            _ => Spin::PlusHalf,
        };
        Ok(RoundRecord::new(
            round,
            r,
            z,
            WignerOutcome::from_label(&wbar),
            WignerOutcome::from_label(&w),
        ))
    }

    /// Friends' steps are unitary; Wbar and W measure the resulting global
    /// state. r and z are read from the memories afterwards.
    pub fn run_round_unitary<Rn: Rng + ?Sized>(&self, round: u64, rng: &mut Rn) -> Result<RoundRecord> {
        let sm = &self.samplers;
        let psi = self.initial.apply(&self.fbar_dilation)?.apply(&self.f_dilation)?;
        let (wbar, psi) = measure_collapse_split(&psi, &self.wbar_measurement, &sm.wbar, rng)?;
        let (w, psi) = measure_collapse_split(&psi, &self.w_measurement, &sm.w, rng)?;
        let (r_label, psi) = measure_collapse_split(&psi, &sm.fbar_memory.0, &sm.fbar_memory.1, rng)?;
        let (z_label, _) = measure_collapse_split(&psi, &sm.f_memory.0, &sm.f_memory.1, rng)?;
        let r = match r_label.as_str() {
            "hbar" => Coin::Heads,
            "tbar" => Coin::Tails,
            _ => {
                return Err(ProtocolError::UnrecordedMemory {
                    memory: FBAR.into(),
                    label: r_label,
                })
            }
        };
        let z = match z_label.as_str() {
            "minus_half" => Spin::MinusHalf,
            "plus_half" => Spin::PlusHalf,
            _ => {
                return Err(ProtocolError::UnrecordedMemory {
                    memory: F.into(),
                    label: z_label,
                })
            }
        };
        Ok(RoundRecord::new(
            round,
            r,
            z,
            WignerOutcome::from_label(&wbar),
            WignerOutcome::from_label(&w),
        ))
    }

    /// Exact distribution over all four records, in the order the matching
    /// Monte Carlo round produces them.
    pub fn exact_records(&self) -> Result<RecordDistribution> {
        let mut entries: BTreeMap<(Coin, Spin, WignerOutcome, WignerOutcome), f64> = BTreeMap::new();
        match self.config.semantics {
            Semantics::Collapse => {
                for traj in self.collapse_trajectories()? {
                    for (wbar, w, p) in lab_joint(&traj.state, &self.wbar_measurement, &self.w_measurement)? {
                        *entries.entry((traj.r, traj.z, wbar, w)).or_default() += traj.probability * p;
                    }
                }
            }
            Semantics::Unitary => {
                let psi = self.state_after_friends();
                for a in self.wbar_measurement.outcomes() {
                    for b in self.w_measurement.outcomes() {
                        let amp = psi.inner(&a.vector.tensor(&b.vector)?)?.conj();
                        let p = amp.norm_sqr();
                        if p == 0.0 {
                            continue;
                        }
                        // post-measurement state is the product a ⊗ b
                        for (r, pr) in [
                            (Coin::Heads, memory_weight(&a.vector, FBAR, 1)?),
                            (Coin::Tails, memory_weight(&a.vector, FBAR, 2)?),
                        ] {
                            for (z, pz) in [
                                (Spin::MinusHalf, memory_weight(&b.vector, F, 1)?),
                                (Spin::PlusHalf, memory_weight(&b.vector, F, 2)?),
                            ] {
                                let key = (
                                    r,
                                    z,
                                    WignerOutcome::from_label(&a.label),
                                    WignerOutcome::from_label(&b.label),
                                );
                                *entries.entry(key).or_default() += p * pr * pz;
                            }
                        }
                    }
                }
            }
        }
        Ok(RecordDistribution {
            entries: entries
                .into_iter()
                .map(|((r, z, wbar, w), probability)| RecordCell {
                    r,
                    z,
                    wbar,
                    w,
                    probability,
                })
                .collect(),
        })
    }

    /// Exact joint of (wbar, w). No sampling.
    pub fn exact_joint(&self) -> Result<JointDistribution> {
        let mut cells = BTreeMap::new();
        for a in WignerOutcome::ALL {
            for b in WignerOutcome::ALL {
                cells.insert((a, b), 0.0);
            }
        }
        match self.config.semantics {
            Semantics::Collapse => {
                for traj in self.collapse_trajectories()? {
                    for (wbar, w, p) in lab_joint(&traj.state, &self.wbar_measurement, &self.w_measurement)? {
                        *cells.get_mut(&(wbar, w)).expect("all cells present") += traj.probability * p;
                    }
                }
            }
            Semantics::Unitary => {
                let psi = self.state_after_friends();
                for (wbar, w, p) in lab_joint(&psi, &self.wbar_measurement, &self.w_measurement)? {
                    *cells.get_mut(&(wbar, w)).expect("all cells present") += p;
                }
            }
        }
        Ok(JointDistribution {
            semantics: self.config.semantics,
            theta: self.config.theta,
            cells: cells
                .into_iter()
                .map(|((wbar, w), probability)| JointCell { wbar, w, probability })
                .collect(),
            conditioning: None,
        })
    }

    /// The classical branches (r, z) of a collapse-semantics round, each with
    /// its probability and the pure state entering Wbar's measurement.
    pub fn collapse_trajectories(&self) -> Result<Vec<Trajectory>> {
        let mut out = Vec::new();
        for r in [Coin::Heads, Coin::Tails] {
            let r_vec = match r {
                Coin::Heads => kets::heads(),
                Coin::Tails => kets::tails(),
            };
            let Some((pr, psi)) = project(&self.initial, &r_vec)? else {
                continue;
            };
            let psi = psi.apply(&self.fbar_dilation)?;
            for z in [Spin::MinusHalf, Spin::PlusHalf] {
                let z_vec = match z {
                    Spin::MinusHalf => kets::down(),
                    Spin::PlusHalf => kets::up(),
                };
                let Some((pz, psi_z)) = project(&psi, &z_vec)? else {
                    continue;
                };
                out.push(Trajectory {
                    r,
                    z,
                    probability: pr * pz,
                    state: psi_z.apply(&self.f_dilation)?,
                });
            }
        }
        Ok(out)
    }

    /// Rounds run one after another, each on its own derived stream, until
    /// the halting condition or `max_rounds`.
    pub fn run_until_halt(&self) -> Result<HaltRun> {
        let mut records = Vec::new();
        for round in 0..self.config.max_rounds {
            let mut rng = round_rng(self.config.seed, round);
            let rec = self.run_round(round, &mut rng)?;
            records.push(rec);
            if rec.halted {
                return Ok(HaltRun { records, halted: true });
            }
        }
        Ok(HaltRun {
            records,
            halted: false,
        })
    }

    /// `rounds` independent rounds (no halting), computed in parallel and
    /// returned in round order.
    pub fn run_rounds(&self, rounds: u64) -> Result<Vec<RoundRecord>> {
        let seed = self.config.seed;
        (0..rounds)
            .into_par_iter()
            .map(|round| self.run_round(round, &mut round_rng(seed, round)))
            .collect()
    }
}

fn project(psi: &StateVector, v: &StateVector) -> Result<Option<(f64, StateVector)>> {
    let spec = MeasurementSpec::new(v.layout().clone(), vec![("x".into(), v.clone())], CompletionPolicy::AutoComplete)?;
    let rest = psi.overlap_local(v)?;
    let p = rest.norm_squared();
    if p < crate::measurement::IMPOSSIBLE {
        return Ok(None);
    }
    // rebuild (|v⟩⟨v| ⊗ I)ψ / √p by forcing the `x` branch
    let post = forced_collapse(psi, &spec, "x")?;
    Ok(Some((p, post)))
}

fn forced_collapse(psi: &StateVector, spec: &MeasurementSpec, label: &str) -> Result<StateVector> {
    let proj = spec.projector(label)?.embed(psi.layout())?;
    let v = proj.matrix() * psi.amplitudes();
    Ok(StateVector::normalized(psi.layout().clone(), v.iter().copied().collect())?)
}

/// `|⟨slot|_memory ⊗ I) v|²` for a vector on a lab.
fn memory_weight(v: &StateVector, memory: &str, slot: usize) -> Result<f64> {
    let l = v.layout().ordered(&[memory])?;
    let b = StateVector::basis(l, slot)?;
    Ok(v.overlap_local(&b)?.norm_squared())
}

/// Born joint of the two Wigners' outcomes on a pure global state.
fn lab_joint(
    psi: &StateVector,
    wbar: &MeasurementSpec,
    w: &MeasurementSpec,
) -> Result<Vec<(WignerOutcome, WignerOutcome, f64)>> {
    let mut out = Vec::new();
    for a in wbar.outcomes() {
        let rest = psi.overlap_local(&a.vector)?;
        let on_l = StateVector::from_vector_unchecked(w.target().clone(), rest);
        for b in w.outcomes() {
            let amp = b.vector.inner(&on_l)?;
            out.push((
                WignerOutcome::from_label(&a.label),
                WignerOutcome::from_label(&b.label),
                amp.norm_sqr(),
            ));
        }
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub r: Coin,
    pub z: Spin,
    pub probability: f64,
    pub state: StateVector,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct JointCell {
    pub wbar: WignerOutcome,
    pub w: WignerOutcome,
    pub probability: f64,
}

/// Exact distribution of (wbar, w) over all nine outcome pairs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct JointDistribution {
    pub semantics: Semantics,
    pub theta: f64,
    pub cells: Vec<JointCell>,
    pub conditioning: Option<String>,
}

impl JointDistribution {
    pub fn probability(&self, wbar: WignerOutcome, w: WignerOutcome) -> f64 {
        self.cells
            .iter()
            .find(|c| c.wbar == wbar && c.w == w)
            .map(|c| c.probability)
            .unwrap_or(0.0)
    }

    pub fn halting_probability(&self) -> f64 {
        self.probability(WignerOutcome::Ok, WignerOutcome::Ok)
    }

    pub fn wbar_marginal(&self, wbar: WignerOutcome) -> f64 {
        self.cells.iter().filter(|c| c.wbar == wbar).map(|c| c.probability).sum()
    }

    pub fn w_marginal(&self, w: WignerOutcome) -> f64 {
        self.cells.iter().filter(|c| c.w == w).map(|c| c.probability).sum()
    }

    /// `P(w | wbar)`, `None` if `wbar` has probability zero.
    pub fn w_given_wbar(&self, w: WignerOutcome, wbar: WignerOutcome) -> Option<f64> {
        let m = self.wbar_marginal(wbar);
        (m > crate::measurement::IMPOSSIBLE).then(|| self.probability(wbar, w) / m)
    }

    pub fn total(&self) -> f64 {
        self.cells.iter().map(|c| c.probability).sum()
    }

    pub fn total_variation(&self, other: &JointDistribution) -> f64 {
        0.5 * self
            .cells
            .iter()
            .map(|c| (c.probability - other.probability(c.wbar, c.w)).abs())
            .sum::<f64>()
    }

    /// Probability mass on any `other` outcome.
    pub fn other_mass(&self) -> f64 {
        self.cells
            .iter()
            .filter(|c| c.wbar == WignerOutcome::Other || c.w == WignerOutcome::Other)
            .map(|c| c.probability)
            .sum()
    }
}

pub fn exact_joint(config: &ProtocolConfig) -> Result<JointDistribution> {
    Protocol::new(config)?.exact_joint()
}

pub fn run_until_halt(config: &ProtocolConfig) -> Result<HaltRun> {
    Protocol::new(config)?.run_until_halt()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RecordCell {
    pub r: Coin,
    pub z: Spin,
    pub wbar: WignerOutcome,
    pub w: WignerOutcome,
    pub probability: f64,
}

/// Exact joint over (r, z, wbar, w).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RecordDistribution {
    pub entries: Vec<RecordCell>,
}

impl RecordDistribution {
    fn matches(cell: &RecordCell, rec: &Record) -> bool {
        match *rec {
            Record::R(c) => cell.r == c,
            Record::Z(z) => cell.z == z,
            Record::Wbar(o) => cell.wbar == o,
            Record::W(o) => cell.w == o,
        }
    }

    pub fn probability(&self, event: &[Record]) -> f64 {
        self.entries
            .iter()
            .filter(|c| event.iter().all(|r| Self::matches(c, r)))
            .map(|c| c.probability)
            .sum()
    }

    pub fn conditional(&self, event: &[Record], given: &[Record]) -> Option<f64> {
        let pg = self.probability(given);
        if pg <= crate::measurement::IMPOSSIBLE {
            return None;
        }
        let both = event.iter().chain(given).copied().collect::<Vec<_>>();
        Some(self.probability(&both) / pg)
    }
}

/// History of a run-until-halt.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HaltRun {
    pub records: Vec<RoundRecord>,
    /// `false` when `max_rounds` ran out first.
    pub halted: bool,
}

/// Frequencies and halting statistics of a batch of independent rounds.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MonteCarloSummary {
    pub rounds: u64,
    pub cells: Vec<FrequencyCell>,
    /// Lengths of consecutive round runs ending in a halt (1-based).
    pub halting_rounds: Vec<u64>,
    /// Rounds after the last halt.
    pub censored: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrequencyCell {
    pub wbar: WignerOutcome,
    pub w: WignerOutcome,
    pub count: u64,
    pub frequency: f64,
    /// Binomial standard error `√(p̂(1−p̂)/N)`.
    pub standard_error: f64,
}

impl MonteCarloSummary {
    pub fn from_records(records: &[RoundRecord]) -> Self {
        let n = records.len() as u64;
        let mut counts: BTreeMap<(WignerOutcome, WignerOutcome), u64> = BTreeMap::new();
        for a in WignerOutcome::ALL {
            for b in WignerOutcome::ALL {
                counts.insert((a, b), 0);
            }
        }
        let mut halting_rounds = Vec::new();
        let mut since = 0u64;
        for rec in records {
            *counts.get_mut(&(rec.wbar, rec.w)).expect("all cells present") += 1;
            since += 1;
            if rec.halted {
                halting_rounds.push(since);
                since = 0;
            }
        }
        let cells = counts
            .into_iter()
            .map(|((wbar, w), count)| {
                let p = if n == 0 { 0.0 } else { count as f64 / n as f64 };
                FrequencyCell {
                    wbar,
                    w,
                    count,
                    frequency: p,
                    standard_error: if n == 0 { 0.0 } else { (p * (1.0 - p) / n as f64).sqrt() },
                }
            })
            .collect();
        Self {
            rounds: n,
            cells,
            halting_rounds,
            censored: since,
        }
    }

    pub fn cell(&self, wbar: WignerOutcome, w: WignerOutcome) -> &FrequencyCell {
        self.cells
            .iter()
            .find(|c| c.wbar == wbar && c.w == w)
            .expect("all nine cells are present")
    }

    pub fn mean_halting_round(&self) -> Option<f64> {
        if self.halting_rounds.is_empty() {
            return None;
        }
        Some(self.halting_rounds.iter().sum::<u64>() as f64 / self.halting_rounds.len() as f64)
    }

    /// Sample standard error of the mean halting round.
    pub fn halting_round_standard_error(&self) -> Option<f64> {
        let k = self.halting_rounds.len();
        if k < 2 {
            return None;
        }
        let mean = self.mean_halting_round()?;
        let var = self
            .halting_rounds
            .iter()
            .map(|&x| (x as f64 - mean).powi(2))
            .sum::<f64>()
            / (k as f64 - 1.0);
        Some((var / k as f64).sqrt())
    }

    /// `(halting round, count)` pairs in increasing order.
    pub fn histogram(&self) -> Vec<(u64, u64)> {
        let mut h: BTreeMap<u64, u64> = BTreeMap::new();
        for &x in &self.halting_rounds {
            *h.entry(x).or_default() += 1;
        }
        h.into_iter().collect()
    }
}
