//! Statement tree for the supported DML subset.
//!
//! The parser accepts a little more than the subset (arithmetic, function
//! calls, DISTINCT) so that validation can reject those with a precise
//! reason instead of a syntax error.

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct ColumnRef {
    pub table: Option<String>,
    pub column: String,
}

impl ColumnRef {
    pub fn new(table: Option<&str>, column: &str) -> Self {
        ColumnRef { table: table.map(str::to_string), column: column.to_string() }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Literal {
    /// Numeric text, possibly signed and with a fractional part.
    Number(String),
    Str(String),
    Null,
    /// `DEFAULT` in INSERT/UPDATE value positions.
    Default,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum AggFn {
    Min,
    Max,
    Count,
    Sum,
    Avg,
}

impl AggFn {
    pub fn name(self) -> &'static str {
        match self {
            AggFn::Min => "MIN",
            AggFn::Max => "MAX",
            AggFn::Count => "COUNT",
            AggFn::Sum => "SUM",
            AggFn::Avg => "AVG",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ArithOp {
    Add,
    Sub,
    Mul,
    Div,
    Mod,
}

impl ArithOp {
    pub fn symbol(self) -> &'static str {
        match self {
            ArithOp::Add => "+",
            ArithOp::Sub => "-",
            ArithOp::Mul => "*",
            ArithOp::Div => "/",
            ArithOp::Mod => "%",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Expr {
    Column(ColumnRef),
    Literal(Literal),
    Aggregate { func: AggFn, arg: Box<Expr> },
    /// Parenthesized SELECT used as a value.
    Subquery(Box<Select>),
    /// `*` as the argument of COUNT.
    Star,
    Function { name: String, args: Vec<Expr> },
    Arith { op: ArithOp, left: Box<Expr>, right: Box<Expr> },
    Neg(Box<Expr>),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum CmpOp {
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
}

impl CmpOp {
    pub fn symbol(self) -> &'static str {
        match self {
            CmpOp::Eq => "=",
            CmpOp::Ne => "<>",
            CmpOp::Lt => "<",
            CmpOp::Le => "<=",
            CmpOp::Gt => ">",
            CmpOp::Ge => ">=",
        }
    }

    /// Operator that holds for `(b, a)` whenever `self` holds for `(a, b)`.
    pub fn flip(self) -> CmpOp {
        match self {
            CmpOp::Lt => CmpOp::Gt,
            CmpOp::Le => CmpOp::Ge,
            CmpOp::Gt => CmpOp::Lt,
            CmpOp::Ge => CmpOp::Le,
            o => o,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Cond {
    And(Box<Cond>, Box<Cond>),
    Or(Box<Cond>, Box<Cond>),
    Compare { left: Expr, op: CmpOp, right: Expr },
    Between { expr: Expr, negated: bool, low: Expr, high: Expr },
    IsNull { expr: Expr, negated: bool },
    InList { expr: Expr, negated: bool, list: Vec<Expr> },
    Like { expr: Expr, negated: bool, pattern: String, escape: Option<char> },
    Exists { negated: bool, query: Box<Select> },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum JoinType {
    Inner,
    Left,
    Right,
    Full,
}

impl JoinType {
    pub fn keyword(self) -> &'static str {
        match self {
            JoinType::Inner => "INNER JOIN",
            JoinType::Left => "LEFT JOIN",
            JoinType::Right => "RIGHT JOIN",
            JoinType::Full => "FULL JOIN",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum TableRef {
    Table(String),
    Join { left: Box<TableRef>, kind: JoinType, right: String, on: Cond },
}

impl TableRef {
    /// Base tables in left-to-right order.
    pub fn tables(&self) -> Vec<&str> {
        match self {
            TableRef::Table(t) => vec![t.as_str()],
            TableRef::Join { left, right, .. } => {
                let mut v = left.tables();
                v.push(right.as_str());
                v
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum SelectItem {
    /// `*`; validation expands it into one `AllOf` per FROM table.
    All,
    /// `table.*`
    AllOf(String),
    Expr(Expr),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Direction {
    Asc,
    Desc,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct OrderItem {
    pub column: ColumnRef,
    /// `None` when the direction was not written (ascending).
    pub direction: Option<Direction>,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Select {
    pub distinct: bool,
    pub items: Vec<SelectItem>,
    pub from: Vec<TableRef>,
    pub where_: Option<Cond>,
    pub group_all: bool,
    pub group_by: Vec<ColumnRef>,
    pub having: Option<Cond>,
    pub order_by: Vec<OrderItem>,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum InsertSource {
    Values(Vec<Vec<Expr>>),
    Select(Box<Select>),
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Insert {
    pub table: String,
    pub columns: Vec<String>,
    pub source: InsertSource,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Update {
    pub table: String,
    pub assignments: Vec<(String, Expr)>,
    pub from: Vec<TableRef>,
    pub where_: Option<Cond>,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Delete {
    pub table: String,
    pub where_: Option<Cond>,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
#[allow(clippy::large_enum_variant)]
pub enum Statement {
    Select(Select),
    Insert(Insert),
    Update(Update),
    Delete(Delete),
}

impl Statement {
    pub fn is_query(&self) -> bool {
        matches!(self, Statement::Select(_))
    }
}
