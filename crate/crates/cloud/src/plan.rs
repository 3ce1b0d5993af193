use num_bigint::BigUint;
use serde::Serialize;

use crate::cell::CipherCell;
use crate::serde_dec;

/// A ciphertext-side program: an ordered list of steps over named
/// relations. Relation names starting with `#` are temp objects.
#[derive(Clone, Debug, Default, Serialize)]
pub struct CipherPlan {
    /// Equality thresholds, one per comparison domain used by the plan.
    #[serde(serialize_with = "serde_dec::big_vec")]
    pub thresholds: Vec<BigUint>,
    pub steps: Vec<Step>,
    pub output: PlanOutput,
}

impl CipherPlan {
    pub fn is_read_only(&self) -> bool {
        !self.steps.iter().any(|s| {
            matches!(s, Step::InsertRows { .. } | Step::UpdateRows { .. } | Step::DeleteRows { .. })
        })
    }
}

#[derive(Clone, Debug, Default, Serialize)]
pub enum PlanOutput {
    #[default]
    Nothing,
    Relation(String),
    Affected,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum JoinKind {
    Inner,
    Left,
    Right,
    Full,
    /// Extended Cartesian product.
    Cross,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum SetOpKind {
    Union,
    Intersect,
    Except,
}

/// How two cells of a column are compared.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum CmpKind {
    /// Single ciphertext per cell.
    Integer,
    /// Concatenated zero-padded ciphertexts of `width` digits each.
    Fixed { width: u32 },
    /// Delimited ciphertext codes plus trailing-blank count.
    Fuzzy,
}

/// Test applied to a three-way comparison result.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Test {
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
}

impl Test {
    pub fn holds(self, r: i8) -> bool {
        match self {
            Test::Eq => r == 0,
            Test::Ne => r != 0,
            Test::Lt => r < 0,
            Test::Le => r <= 0,
            Test::Gt => r > 0,
            Test::Ge => r >= 0,
        }
    }

    pub fn negate(self) -> Test {
        match self {
            Test::Eq => Test::Ne,
            Test::Ne => Test::Eq,
            Test::Lt => Test::Ge,
            Test::Le => Test::Gt,
            Test::Gt => Test::Le,
            Test::Ge => Test::Lt,
        }
    }

    /// The test that holds for `(b, a)` whenever `self` holds for `(a, b)`.
    pub fn flip(self) -> Test {
        match self {
            Test::Lt => Test::Gt,
            Test::Le => Test::Ge,
            Test::Gt => Test::Lt,
            Test::Ge => Test::Le,
            t => t,
        }
    }

    pub fn sql(self) -> &'static str {
        match self {
            Test::Eq => "=",
            Test::Ne => "<>",
            Test::Lt => "<",
            Test::Le => "<=",
            Test::Gt => ">",
            Test::Ge => ">=",
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub enum Operand {
    Column(String),
    Literal(CipherCell),
    /// Single-value temp relation produced by a restricted subquery.
    Scalar(String),
}

#[derive(Clone, Debug, Serialize)]
pub enum CountOperand {
    Column(String),
    Scalar(String),
    Value(u64),
}

/// Boundary constants for a comparison of an encrypted sum with a value.
#[derive(Clone, Debug, Serialize)]
pub enum SumTarget {
    /// Outcome known without looking at the sum (value outside the domain).
    Known(i8),
    /// Single-row group: the sum is one ciphertext, compared against the
    /// partition `[lo, hi]` of the value.
    Single {
        #[serde(serialize_with = "serde_dec::big")]
        lo: BigUint,
        #[serde(serialize_with = "serde_dec::big")]
        hi: BigUint,
    },
    /// `SumEqualityCom` with `L[value]` and `U'[value]`.
    Probe {
        #[serde(serialize_with = "serde_dec::big")]
        l: BigUint,
        #[serde(serialize_with = "serde_dec::big")]
        u_ext: BigUint,
    },
    /// The compared value lies strictly between the wrapped integer target
    /// and the next integer, so the sum is never equal to it.
    Between(Box<SumTarget>),
}

#[derive(Clone, Debug, Serialize)]
pub enum SumTargets {
    /// Same value for every group size; `single` is used for one-row groups.
    /// Groups larger than `max_count` violate the sizing precondition.
    Uniform { single: SumTarget, multi: SumTarget, max_count: u64 },
    /// Value depends on the group size (offset-coded columns, AVG). Entry
    /// `i` applies to groups of `i + 1` non-NULL rows.
    PerCount(Vec<SumTarget>),
}

/// Filter predicate. Negation is pushed into the atoms by the translator,
/// so evaluation is two-valued.
#[derive(Clone, Debug, Serialize)]
pub enum Pred {
    Const(bool),
    And(Vec<Pred>),
    Or(Vec<Pred>),
    Cmp {
        threshold: usize,
        kind: CmpKind,
        left: Operand,
        right: Operand,
        test: Test,
    },
    SumCmp {
        sum: String,
        ext: String,
        count: String,
        targets: SumTargets,
        test: Test,
    },
    CountCmp {
        left: CountOperand,
        right: CountOperand,
        test: Test,
    },
    Flag {
        column: String,
        value: bool,
    },
    Exists {
        relation: String,
        negated: bool,
    },
}

/// One position of a LIKE pattern.
#[derive(Clone, Debug, Serialize)]
pub enum MatchAtom {
    /// A pattern character; `cipher` is `None` when the character cannot
    /// occur in stored codes. `blank` marks a space, which also matches
    /// the stripped trailing blanks.
    Literal { cipher: Option<CipherCell>, blank: bool },
    AnyOne,
    Class { members: Vec<CipherCell>, negated: bool, blank: bool },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum SegmentAnchor {
    /// Pattern has no `%`: the segment must cover the whole string.
    Whole,
    Start,
    Floating,
    End,
}

#[derive(Clone, Debug, Serialize)]
pub struct MatchSegment {
    pub anchor: SegmentAnchor,
    pub atoms: Vec<MatchAtom>,
}

#[derive(Clone, Debug, Serialize)]
pub struct MatchProgram {
    pub segments: Vec<MatchSegment>,
    pub min_len: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum AggFunc {
    Min,
    Max,
    /// Non-NULL cells of the column.
    Count,
    /// Rows in the group.
    CountRows,
    /// Emits `SUM(col)`, `SUM(col_Extension)` and the non-NULL count.
    SumPair,
}

#[derive(Clone, Debug, Serialize)]
pub struct AggSpec {
    pub func: AggFunc,
    /// Source column (base column for `SumPair`); unused by `CountRows`.
    pub column: Option<String>,
    /// Extension companion, `SumPair` only.
    pub ext_column: Option<String>,
    pub kind: CmpKind,
    /// Equality threshold for ordering multi-segment cells (MIN/MAX).
    pub threshold: usize,
    /// Output column names: one, or three for `SumPair`.
    pub into: Vec<String>,
}

#[derive(Clone, Debug, Serialize)]
pub struct SortKey {
    pub column: String,
    pub threshold: usize,
    pub kind: CmpKind,
    pub descending: bool,
}

#[derive(Clone, Debug, Serialize)]
pub enum InsertSource {
    Values(Vec<Vec<CipherCell>>),
    /// One source column per target column; `None` inserts NULL.
    Relation { name: String, columns: Vec<Option<String>> },
}

#[derive(Clone, Debug, Serialize)]
pub enum AssignValue {
    Cell(CipherCell),
    Column(String),
    Null,
}

#[derive(Clone, Debug, Serialize)]
pub enum Step {
    /// Columns come out as `table.column`; with `row_ids` an extra
    /// `table.#rowid` column is appended.
    Scan { table: String, row_ids: bool, into: String },
    Join { left: String, right: String, kind: JoinKind, on: Option<Pred>, into: String },
    Filter { input: String, pred: Pred, into: String },
    /// Adds a boolean column telling whether the fuzzy cell matches.
    MatchLike {
        input: String,
        column: String,
        threshold: usize,
        program: MatchProgram,
        flag: String,
        into: String,
    },
    /// Adds `group_column`: for each row, the cell of the first row whose
    /// value is equal under `EqualityCom`.
    Canonicalize {
        input: String,
        column: String,
        threshold: usize,
        kind: CmpKind,
        group_column: String,
        into: String,
    },
    /// Groups on exact equality of the (canonicalized) key columns, in order
    /// of first appearance. Without keys the whole input is one group.
    GroupAggregate { input: String, keys: Vec<String>, aggs: Vec<AggSpec>, into: String },
    Sort { input: String, keys: Vec<SortKey>, into: String },
    Project { input: String, columns: Vec<(String, String)>, into: String },
    SetOp {
        left: String,
        right: String,
        op: SetOpKind,
        /// Threshold index and comparison kind per column.
        columns: Vec<(usize, CmpKind)>,
        into: String,
    },
    CreateTemp { name: String, from: String },
    DropTemp { name: String },
    InsertRows { table: String, columns: Vec<String>, source: InsertSource },
    /// For every distinct row id in `input`, the first input row supplies
    /// the assigned values.
    UpdateRows {
        table: String,
        input: String,
        row_id: String,
        assignments: Vec<(String, AssignValue)>,
    },
    DeleteRows { table: String, input: String, row_id: String },
}
